//! Neural patches and nearest-neighbour assignment.
//!
//! A patch is the `s × s × c` block of a feature map centred at a location,
//! flattened channel-major (`c`, then row, then column).

use log::warn;

use crate::error::{Error, Result};
use crate::ops::{conv2d_forward, ConvSpec};
use crate::par;
use crate::real::Real;
use crate::region::HoleRegion;
use crate::tensor::Tensor;

/// Upper bound on cross-correlation output elements per query batch.
const CORR_BATCH_ELEMS: usize = 1 << 22;

pub type Location = (usize, usize);

/// Patch vectors, one row per location.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchSet<T> {
    pub locations: Vec<Location>,
    pub size: usize,
    pub dim: usize,
    pub data: Vec<T>,
}

impl<T: Real> PatchSet<T> {
    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

/// Result of a nearest-neighbour search: for query `i`, the index into the
/// candidate set and the squared distance.
#[derive(Clone, Debug, PartialEq)]
pub struct NNAssignment<T> {
    pub matches: Vec<usize>,
    pub distances: Vec<T>,
}

fn valid_range(extent: usize, s: usize) -> std::ops::Range<usize> {
    if extent < s {
        return 0..0;
    }
    let half = s / 2;
    half..extent - (s - 1 - half)
}

/// Centres whose window fits in the map and lies wholly outside `hole`, row-major.
pub fn candidate_locations(hole: &HoleRegion, s: usize) -> Vec<Location> {
    let (h, w) = hole.grid();
    valid_range(h, s)
        .flat_map(|y| valid_range(w, s).map(move |x| (y, x)))
        .filter(|&(y, x)| !hole.window_overlaps(y, x, s))
        .collect()
}

/// Hole locations whose window fits in the map, sampled every `stride` cells
/// from the hole's top-left corner, row-major.
pub fn query_locations(hole: &HoleRegion, s: usize, stride: usize) -> Vec<Location> {
    let (h, w) = hole.grid();
    let r = hole.bounding_rect();
    let stride = stride.max(1);
    let (ys, xs) = (valid_range(h, s), valid_range(w, s));
    hole.points()
        .into_iter()
        .filter(|&(y, x)| ys.contains(&y) && xs.contains(&x))
        .filter(|&(y, x)| (y - r.top).is_multiple_of(stride) && (x - r.left).is_multiple_of(stride))
        .collect()
}

/// Extracts the patch at every location of a `1 × C × H × W` map.
pub fn extract_patches<T: Real>(map: &Tensor<T>, locations: &[Location], s: usize) -> Result<PatchSet<T>> {
    if map.batch() != 1 {
        return Err(Error::shape("extract_patches batch", 1, map.batch()));
    }
    if s == 0 {
        return Err(Error::InvalidArgument("patch size must be positive".into()));
    }
    let (c, h, w) = (map.channels(), map.height(), map.width());
    let half = s / 2;
    let dim = c * s * s;
    let mut data = Vec::with_capacity(locations.len() * dim);
    for &(y, x) in locations {
        if y < half || x < half || y - half + s > h || x - half + s > w {
            return Err(Error::RegionOutOfBounds {
                region: format!("patch at ({y},{x}) size {s}"),
                height: h,
                width: w,
            });
        }
        for ch in 0..c {
            for dy in 0..s {
                let o = map.offset(0, ch, y - half + dy, x - half);
                data.extend_from_slice(&map.data()[o..o + s]);
            }
        }
    }
    Ok(PatchSet {
        locations: locations.to_vec(),
        size: s,
        dim,
        data,
    })
}

/// Squared Euclidean distance, accumulated left to right.
#[inline]
pub fn squared_distance<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = T::zero();
    for (&p, &q) in a.iter().zip(b) {
        let d = p - q;
        acc += d * d;
    }
    acc
}

#[inline]
fn chebyshev(a: Location, b: Location) -> usize {
    a.0.abs_diff(b.0).max(a.1.abs_diff(b.1))
}

/// Candidate indices admissible for `query` under `radius`; falls back to all
/// candidates when the window holds none.
fn window_candidates(query: Location, candidates: &[Location], radius: Option<usize>) -> Option<Vec<usize>> {
    let r = radius?;
    let inside: Vec<usize> = (0..candidates.len()).filter(|&j| chebyshev(query, candidates[j]) <= r).collect();
    if inside.is_empty() {
        warn!("no candidate within radius {r} of {query:?}; using global search");
        return None;
    }
    Some(inside)
}

/// Exact nearest neighbour by exhaustive scan. Ties go to the lowest candidate index.
pub fn nn_search_bruteforce<T: Real>(
    queries: &PatchSet<T>,
    candidates: &PatchSet<T>,
    radius: Option<usize>,
) -> Result<NNAssignment<T>> {
    if candidates.is_empty() {
        return Err(Error::NoCandidates);
    }
    if queries.dim != candidates.dim {
        return Err(Error::shape("nn_search_bruteforce patch dim", candidates.dim, queries.dim));
    }
    let results = par::map_range(queries.len(), |i| {
        let q = queries.row(i);
        let scan = |j: usize, best: &mut (usize, T)| {
            let d = squared_distance(q, candidates.row(j));
            if d < best.1 {
                *best = (j, d);
            }
        };
        let mut best = (usize::MAX, T::infinity());
        match window_candidates(queries.locations[i], &candidates.locations, radius) {
            Some(idx) => idx.into_iter().for_each(|j| scan(j, &mut best)),
            None => (0..candidates.len()).for_each(|j| scan(j, &mut best)),
        }
        if best.0 == usize::MAX {
            // every distance was NaN or infinite
            best = (0, squared_distance(q, candidates.row(0)));
        }
        best
    });
    Ok(NNAssignment {
        matches: results.iter().map(|r| r.0).collect(),
        distances: results.iter().map(|r| r.1).collect(),
    })
}

/// Nearest neighbour through `‖q − p‖² = ‖q‖² − 2⟨q, p⟩ + ‖p‖²`, with the
/// inner products for a batch of queries computed as one cross-correlation of
/// `map` against the query patches.
///
/// The expansion loses precision relative to direct differencing, so every
/// candidate within the expansion's rounding bound of the best score is
/// re-scored with [`squared_distance`]. The returned indices and distances
/// therefore equal those of [`nn_search_bruteforce`].
pub fn nn_search_fast<T: Real>(
    map: &Tensor<T>,
    queries: &PatchSet<T>,
    candidates: &PatchSet<T>,
    radius: Option<usize>,
) -> Result<NNAssignment<T>> {
    if candidates.is_empty() {
        return Err(Error::NoCandidates);
    }
    if queries.dim != candidates.dim || queries.size != candidates.size {
        return Err(Error::shape("nn_search_fast patch dim", candidates.dim, queries.dim));
    }
    let s = queries.size;
    let c = map.channels();
    if c * s * s != queries.dim || map.batch() != 1 {
        return Err(Error::shape("nn_search_fast map", queries.dim, c * s * s));
    }
    if queries.is_empty() {
        return Ok(NNAssignment {
            matches: vec![],
            distances: vec![],
        });
    }
    let half = s / 2;
    let (oh, ow) = ConvSpec::new(c, 1, s, 1, 0).output_hw(map.height(), map.width())?;
    let cand_norm: Vec<T> = (0..candidates.len()).map(|j| dot(candidates.row(j), candidates.row(j))).collect();
    let max_cand_norm = cand_norm.iter().fold(T::zero(), |m, &v| m.max(v));
    let cand_offset: Vec<usize> = candidates.locations.iter().map(|&(y, x)| (y - half) * ow + (x - half)).collect();

    let batch = (CORR_BATCH_ELEMS / (oh * ow).max(1)).clamp(1, queries.len());
    let n_batches = queries.len().div_ceil(batch);
    let eps = T::epsilon();
    let dim_factor = T::from_f64_lossy(8.0 * (queries.dim as f64 + 8.0));

    let per_batch = par::map_range(n_batches, |bi| -> Result<Vec<(usize, T)>> {
        let q0 = bi * batch;
        let q1 = (q0 + batch).min(queries.len());
        let nq = q1 - q0;
        let weights = Tensor::from_vec([nq, c, s, s], queries.data[q0 * queries.dim..q1 * queries.dim].to_vec())?;
        let corr = conv2d_forward(map, &weights, &[], &ConvSpec::new(c, nq, s, 1, 0))?;
        let plane = oh * ow;
        Ok((q0..q1)
            .map(|qi| {
                let q = queries.row(qi);
                let qn = dot(q, q);
                let row = &corr.data()[(qi - q0) * plane..(qi - q0 + 1) * plane];
                let two = T::from_f64_lossy(2.0);
                let approx = |j: usize| qn - two * row[cand_offset[j]] + cand_norm[j];
                let allowed = window_candidates(queries.locations[qi], &candidates.locations, radius);
                let all: Vec<usize>;
                let idx: &[usize] = match &allowed {
                    Some(v) => v,
                    None => {
                        all = (0..candidates.len()).collect();
                        &all
                    }
                };
                let best_approx = idx.iter().map(|&j| approx(j)).fold(T::infinity(), T::min);
                let slack = two * dim_factor * eps * (qn + max_cand_norm);
                let mut best = (usize::MAX, T::infinity());
                for &j in idx {
                    if approx(j) <= best_approx + slack {
                        let d = squared_distance(q, candidates.row(j));
                        if d < best.1 {
                            best = (j, d);
                        }
                    }
                }
                if best.0 == usize::MAX {
                    best = (idx[0], squared_distance(q, candidates.row(idx[0])));
                }
                best
            })
            .collect())
    });
    let mut matches = Vec::with_capacity(queries.len());
    let mut distances = Vec::with_capacity(queries.len());
    for b in per_batch {
        for (j, d) in b? {
            matches.push(j);
            distances.push(d);
        }
    }
    Ok(NNAssignment { matches, distances })
}

#[inline]
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::region::{Rect, Space};

    fn ramp_map() -> Tensor<f64> {
        Tensor::from_fn([1, 2, 6, 7], |[_, c, y, x]| (c * 100 + y * 10 + x) as f64)
    }

    #[test]
    fn patch_size_one_gives_channel_fibers() {
        let m = ramp_map();
        let p = extract_patches(&m, &[(2, 3), (5, 6)], 1).unwrap();
        assert_eq!(p.row(0), &[23.0, 123.0]);
        assert_eq!(p.row(1), &[56.0, 156.0]);
    }

    #[test]
    fn patch_layout_is_channel_major() {
        let m = ramp_map();
        let p = extract_patches(&m, &[(1, 1)], 3).unwrap();
        assert_eq!(p.dim, 18);
        assert_eq!(&p.row(0)[..9], &[0.0, 1.0, 2.0, 10.0, 11.0, 12.0, 20.0, 21.0, 22.0]);
        assert_eq!(p.row(0)[9], 100.0);
        assert!(extract_patches(&m, &[(0, 1)], 3).is_err());
        assert!(extract_patches(&m, &[(5, 1)], 3).is_err());
    }

    #[test]
    fn constant_map_gives_identical_rows() {
        let m = Tensor::<f32>::full([1, 3, 8, 8], 1.25);
        let p = extract_patches(&m, &[(1, 1), (4, 5), (6, 6)], 3).unwrap();
        assert_eq!(p.row(0), p.row(1));
        assert_eq!(p.row(1), p.row(2));
    }

    #[test]
    fn exact_duplicate_is_found_at_zero_distance() {
        let m = ramp_map();
        let q = extract_patches(&m, &[(2, 2)], 1).unwrap();
        let c = extract_patches(&m, &[(0, 0), (2, 2), (5, 5)], 1).unwrap();
        let a = nn_search_bruteforce(&q, &c, None).unwrap();
        assert_eq!(a.matches, vec![1]);
        assert_eq!(a.distances, vec![0.0]);
    }

    #[test]
    fn equidistant_candidates_pick_lower_index() {
        let m = Tensor::<f64>::from_vec([1, 1, 1, 3], vec![0.0, 1.0, 2.0]).unwrap();
        let q = extract_patches(&m, &[(0, 1)], 1).unwrap();
        let c = extract_patches(&m, &[(0, 0), (0, 2)], 1).unwrap();
        assert_eq!(nn_search_bruteforce(&q, &c, None).unwrap().matches, vec![0]);
        assert_eq!(nn_search_fast(&m, &q, &c, None).unwrap().matches, vec![0]);
    }

    #[test]
    fn single_candidate_always_wins() {
        let m = ramp_map();
        let q = extract_patches(&m, &[(1, 1), (4, 5)], 3).unwrap();
        let c = extract_patches(&m, &[(4, 1)], 3).unwrap();
        assert_eq!(nn_search_fast(&m, &q, &c, None).unwrap().matches, vec![0, 0]);
        assert!(matches!(
            nn_search_bruteforce(&q, &extract_patches(&m, &[], 3).unwrap(), None),
            Err(Error::NoCandidates)
        ));
    }

    #[test]
    fn window_limits_and_falls_back() {
        let m = Tensor::<f64>::from_vec([1, 1, 1, 6], vec![0.0, 5.0, 9.0, 9.0, 9.0, 0.1]).unwrap();
        let q = extract_patches(&m, &[(0, 0)], 1).unwrap();
        let c = extract_patches(&m, &[(0, 1), (0, 5)], 1).unwrap();
        assert_eq!(nn_search_bruteforce(&q, &c, None).unwrap().matches, vec![1]);
        assert_eq!(nn_search_bruteforce(&q, &c, Some(2)).unwrap().matches, vec![0]);
        assert_eq!(nn_search_fast(&m, &q, &c, Some(2)).unwrap().matches, vec![0]);
        // empty window → global
        let far = extract_patches(&m, &[(0, 5)], 1).unwrap();
        assert_eq!(nn_search_fast(&m, &q, &far, Some(1)).unwrap().matches, vec![0]);
    }

    #[test]
    fn candidates_avoid_hole_windows() {
        let hole = HoleRegion::rect(Rect::new(3, 3, 3, 3), (10, 10), Space::Feature { stride: 4 }).unwrap();
        let cands = candidate_locations(&hole, 3);
        assert!(!cands.is_empty());
        for &(y, x) in &cands {
            assert!(!Rect::new(y - 1, x - 1, 3, 3).intersects(&Rect::new(3, 3, 3, 3)));
        }
        let queries = query_locations(&hole, 3, 1);
        assert_eq!(queries.len(), 9);
        assert_eq!(query_locations(&hole, 3, 2).len(), 4);
    }
}
