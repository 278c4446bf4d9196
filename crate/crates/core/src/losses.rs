//! Content, neural-patch texture and total-variation losses, and the joint
//! objective over the free (hole) pixels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{FeatureSelection, ForwardCache, Network, DEFAULT_TAPS};
use crate::patch::{self, Location, NNAssignment, PatchSet};
use crate::region::{map_hole_to_feature, HoleRegion};
use crate::real::Real;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointConfig {
    /// Texture weight.
    pub alpha: f64,
    /// Total-variation weight.
    pub beta: f64,
    pub taps: Vec<String>,
    pub patch_size: usize,
    /// Spacing of query patches inside the feature-space hole.
    pub patch_stride: usize,
    /// Optimizer iterations between nearest-neighbour refreshes.
    pub nn_refresh: usize,
    /// Optimizer iteration budget per pyramid level.
    pub iterations: usize,
    /// Chebyshev search radius in feature cells; `None` searches globally.
    pub window: Option<usize>,
}

impl Default for JointConfig {
    fn default() -> Self {
        JointConfig {
            alpha: 5e-6,
            beta: 5e-6,
            taps: DEFAULT_TAPS.iter().map(|s| s.to_string()).collect(),
            patch_size: 3,
            patch_stride: 1,
            nn_refresh: 10,
            iterations: 500,
            window: None,
        }
    }
}

impl JointConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.beta >= 0.0) {
            return Err(Error::InvalidArgument(format!("alpha and beta must be non-negative, got {} and {}", self.alpha, self.beta)));
        }
        if self.patch_size == 0 || self.patch_size.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!("patch size must be odd, got {}", self.patch_size)));
        }
        if self.patch_stride == 0 || self.nn_refresh == 0 {
            return Err(Error::InvalidArgument("patch stride and nn refresh period must be positive".into()));
        }
        if self.taps.is_empty() {
            return Err(Error::InvalidArgument("at least one texture layer is required".into()));
        }
        Ok(())
    }

    pub fn selection(&self) -> FeatureSelection {
        FeatureSelection::new(&self.taps)
    }
}

/// One evaluation of the joint objective.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub total: f64,
    pub content: f64,
    /// `(layer, value)` per texture layer, unweighted.
    pub texture: Vec<(String, f64)>,
    pub tv: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Gradient over the free pixels, in [`JointObjective::free_values`] order.
    #[serde(skip)]
    pub gradient: Vec<f64>,
}

impl LossReport {
    pub fn texture_sum(&self) -> f64 {
        self.texture.iter().map(|t| t.1).sum()
    }

    /// `|total − (content + α·Σtexture + β·tv)|` relative to `total`.
    pub fn decomposition_error(&self) -> f64 {
        let recomposed = self.content + self.alpha * self.texture_sum() + self.beta * self.tv;
        (self.total - recomposed).abs() / self.total.abs().max(f64::MIN_POSITIVE)
    }
}

fn check_region(x: &Tensor<impl Real>, region: &HoleRegion) -> Result<()> {
    let r = region.bounding_rect();
    if r.bottom() > x.height() || r.right() > x.width() || region.grid() != (x.height(), x.width()) {
        return Err(Error::RegionOutOfBounds {
            region: format!("{r:?}"),
            height: x.height(),
            width: x.width(),
        });
    }
    Ok(())
}

/// `Σ_{p ∈ R} (x_p − ref_p)²` over every channel; `content_ref` covers the
/// bounding rectangle of `region`. The gradient is `2(x − ref)` in the hole
/// and zero elsewhere.
pub fn content_loss<T: Real>(x: &Tensor<T>, content_ref: &Tensor<T>, region: &HoleRegion) -> Result<(T, Tensor<T>)> {
    check_region(x, region)?;
    let r = region.bounding_rect();
    let expected = [x.batch(), x.channels(), r.height, r.width];
    if content_ref.dims() != expected {
        return Err(Error::shape("content_loss reference", expected, content_ref.dims()));
    }
    let two = T::from_f64_lossy(2.0);
    let mut grad = Tensor::zeros(x.dims());
    let mut value = T::zero();
    let points = region.points();
    for b in 0..x.batch() {
        for c in 0..x.channels() {
            for &(y, xx) in &points {
                let d = x.get(b, c, y, xx) - content_ref.get(b, c, y - r.top, xx - r.left);
                value += d * d;
                grad.set(b, c, y, xx, two * d);
            }
        }
    }
    Ok((value, grad))
}

/// Fixed nearest-neighbour data for one texture layer.
#[derive(Clone, Debug)]
pub struct TextureTarget<T> {
    pub patch_size: usize,
    pub queries: Vec<Location>,
    pub candidates: Vec<Location>,
    pub assignment: NNAssignment<T>,
}

/// `(1/|Q|) Σ_i ‖P_i − P_nn(i)‖²` with `nn` held fixed. The gradient lands on
/// both the query and the matched candidate windows of the same map.
pub fn texture_loss<T: Real>(map: &Tensor<T>, hole: &HoleRegion, target: &TextureTarget<T>) -> Result<(T, Tensor<T>)> {
    let s = target.patch_size;
    if target.assignment.matches.len() != target.queries.len() {
        return Err(Error::shape("texture_loss assignment", target.queries.len(), target.assignment.matches.len()));
    }
    if hole.grid() != (map.height(), map.width()) {
        return Err(Error::shape("texture_loss hole grid", (map.height(), map.width()), hole.grid()));
    }
    let mut grad = Tensor::zeros(map.dims());
    if target.queries.is_empty() {
        return Ok((T::zero(), grad));
    }
    for (i, &j) in target.assignment.matches.iter().enumerate() {
        let Some(&(cy, cx)) = target.candidates.get(j) else {
            return Err(Error::InvalidAssignment { query: i, candidate: j });
        };
        if hole.window_overlaps(cy, cx, s) {
            return Err(Error::InvalidAssignment { query: i, candidate: j });
        }
    }
    let matched: Vec<Location> = target.assignment.matches.iter().map(|&j| target.candidates[j]).collect();
    let q = patch::extract_patches(map, &target.queries, s)?;
    let p = patch::extract_patches(map, &matched, s)?;
    let inv = T::one() / T::from_usize(target.queries.len()).expect("count fits");
    let scale = T::from_f64_lossy(2.0) * inv;
    let mut value = T::zero();
    let half = s / 2;
    let c = map.channels();
    for i in 0..q.len() {
        let (qr, pr) = (q.row(i), p.row(i));
        value += patch::squared_distance(qr, pr);
        let (qy, qx) = q.locations[i];
        let (py, px) = p.locations[i];
        let g = grad.data_mut();
        let (h, w) = (map.height(), map.width());
        let mut k = 0;
        for ch in 0..c {
            for dy in 0..s {
                for dx in 0..s {
                    let d = scale * (qr[k] - pr[k]);
                    g[(ch * h + qy - half + dy) * w + qx - half + dx] += d;
                    g[(ch * h + py - half + dy) * w + px - half + dx] -= d;
                    k += 1;
                }
            }
        }
    }
    Ok((value * inv, grad))
}

/// `Σ (x_{i,j+1} − x_{i,j})² + (x_{i+1,j} − x_{i,j})²` over every plane.
pub fn tv_loss<T: Real>(x: &Tensor<T>) -> Result<(T, Tensor<T>)> {
    let [n, c, h, w] = x.dims();
    if h < 2 || w < 2 {
        return Err(Error::InvalidArgument(format!("tv_loss needs at least 2x2, got {h}x{w}")));
    }
    let two = T::from_f64_lossy(2.0);
    let mut grad = Tensor::zeros(x.dims());
    let mut value = T::zero();
    let src = x.data();
    let g = grad.data_mut();
    for plane in 0..n * c {
        let base = plane * h * w;
        for y in 0..h {
            for xx in 0..w {
                let o = base + y * w + xx;
                if xx + 1 < w {
                    let d = src[o + 1] - src[o];
                    value += d * d;
                    g[o + 1] += two * d;
                    g[o] -= two * d;
                }
                if y + 1 < h {
                    let d = src[o + w] - src[o];
                    value += d * d;
                    g[o + w] += two * d;
                    g[o] -= two * d;
                }
            }
        }
    }
    Ok((value, grad))
}

/// The joint objective at one pyramid level, over the hole pixels of `image`.
///
/// Free variables are ordered channel-major: every hole pixel of channel 0 in
/// row-major order, then channel 1, and so on.
pub struct JointObjective<'a, T: Real> {
    network: &'a Network<T>,
    selection: FeatureSelection,
    config: JointConfig,
    image: Tensor<T>,
    region: HoleRegion,
    points: Vec<Location>,
    content_ref: Tensor<T>,
    tap_holes: Vec<HoleRegion>,
    targets: Vec<TextureTarget<T>>,
}

impl<'a, T: Real> JointObjective<'a, T> {
    /// Sets up feature-space holes and the first nearest-neighbour assignment
    /// at `image`.
    pub fn new(
        network: &'a Network<T>,
        config: &JointConfig,
        image: Tensor<T>,
        region: HoleRegion,
        content_ref: Tensor<T>,
    ) -> Result<Self> {
        config.validate()?;
        if image.batch() != 1 {
            return Err(Error::shape("JointObjective image batch", 1, image.batch()));
        }
        check_region(&image, &region)?;
        let r = region.bounding_rect();
        let expected = [1, image.channels(), r.height, r.width];
        if content_ref.dims() != expected {
            return Err(Error::shape("JointObjective content reference", expected, content_ref.dims()));
        }
        let selection = config.selection();
        network.validate_selection(&selection)?;
        let mut obj = JointObjective {
            network,
            selection,
            config: config.clone(),
            points: region.points(),
            image,
            region,
            content_ref,
            tap_holes: Vec::new(),
            targets: Vec::new(),
        };
        if config.alpha > 0.0 {
            let (maps, _) = network.forward(&obj.image, &obj.selection)?;
            for (name, map) in obj.selection.names().iter().zip(&maps) {
                let stride = network.tap_stride(name)?;
                let hole = map_hole_to_feature(&obj.region, stride, config.patch_size, (map.height(), map.width()))?;
                obj.tap_holes.push(hole);
            }
            obj.assign(&maps)?;
        }
        Ok(obj)
    }

    pub fn config(&self) -> &JointConfig {
        &self.config
    }

    pub fn image(&self) -> &Tensor<T> {
        &self.image
    }

    pub fn into_image(self) -> Tensor<T> {
        self.image
    }

    pub fn region(&self) -> &HoleRegion {
        &self.region
    }

    pub fn tap_holes(&self) -> &[HoleRegion] {
        &self.tap_holes
    }

    pub fn targets(&self) -> &[TextureTarget<T>] {
        &self.targets
    }

    pub fn num_free(&self) -> usize {
        self.points.len() * self.image.channels()
    }

    pub fn free_values(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.num_free());
        for c in 0..self.image.channels() {
            for &(y, x) in &self.points {
                v.push(self.image.get(0, c, y, x).to_f64_lossy());
            }
        }
        v
    }

    pub fn set_free(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.num_free() {
            return Err(Error::shape("JointObjective free values", self.num_free(), values.len()));
        }
        let mut k = 0;
        for c in 0..self.image.channels() {
            for &(y, x) in &self.points {
                self.image.set(0, c, y, x, T::from_f64_lossy(values[k]));
                k += 1;
            }
        }
        Ok(())
    }

    fn gather(&self, grad: &Tensor<T>) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.num_free());
        for c in 0..grad.channels() {
            for &(y, x) in &self.points {
                v.push(grad.get(0, c, y, x).to_f64_lossy());
            }
        }
        v
    }

    fn assign(&mut self, maps: &[Tensor<T>]) -> Result<()> {
        let s = self.config.patch_size;
        let mut targets = Vec::with_capacity(maps.len());
        for (map, hole) in maps.iter().zip(&self.tap_holes) {
            let queries = patch::query_locations(hole, s, self.config.patch_stride);
            let candidates = patch::candidate_locations(hole, s);
            let qset: PatchSet<T> = patch::extract_patches(map, &queries, s)?;
            let cset = patch::extract_patches(map, &candidates, s)?;
            let assignment = patch::nn_search_fast(map, &qset, &cset, self.config.window)?;
            targets.push(TextureTarget {
                patch_size: s,
                queries,
                candidates,
                assignment,
            });
        }
        self.targets = targets;
        Ok(())
    }

    /// Recomputes nearest neighbours at `values`.
    pub fn refresh_assignments(&mut self, values: &[f64]) -> Result<()> {
        self.set_free(values)?;
        if self.config.alpha > 0.0 {
            let (maps, _) = self.network.forward(&self.image, &self.selection)?;
            self.assign(&maps)?;
        }
        Ok(())
    }

    /// Value and free-pixel gradient at `values`, nearest neighbours held fixed.
    pub fn evaluate(&mut self, values: &[f64]) -> Result<LossReport> {
        self.set_free(values)?;
        let (content, mut grad) = content_loss(&self.image, &self.content_ref, &self.region)?;
        let (tv, tv_grad) = tv_loss(&self.image)?;
        let beta = T::from_f64_lossy(self.config.beta);
        grad.add_scaled(&tv_grad, beta)?;

        let mut texture = Vec::with_capacity(self.targets.len());
        let mut texture_total = 0.0;
        if self.config.alpha > 0.0 {
            let alpha = T::from_f64_lossy(self.config.alpha);
            let (maps, cache): (Vec<Tensor<T>>, ForwardCache<T>) = self.network.forward(&self.image, &self.selection)?;
            let mut tap_grads = Vec::with_capacity(maps.len());
            for ((map, hole), (target, name)) in maps
                .iter()
                .zip(&self.tap_holes)
                .zip(self.targets.iter().zip(self.selection.names()))
            {
                let (v, g) = texture_loss(map, hole, target)?;
                texture.push((name.clone(), v.to_f64_lossy()));
                texture_total += v.to_f64_lossy();
                tap_grads.push(g.scale(alpha));
            }
            let image_grad = self.network.backward(&tap_grads, &cache)?;
            grad.add_scaled(&image_grad, T::one())?;
        } else {
            texture = self.selection.names().iter().map(|n| (n.clone(), 0.0)).collect();
        }

        let content = content.to_f64_lossy();
        let tv = tv.to_f64_lossy();
        let total = content + self.config.alpha * texture_total + self.config.beta * tv;
        if !total.is_finite() {
            return Err(Error::NonFinite);
        }
        Ok(LossReport {
            total,
            content,
            texture,
            tv,
            alpha: self.config.alpha,
            beta: self.config.beta,
            gradient: self.gather(&grad),
        })
    }
}
