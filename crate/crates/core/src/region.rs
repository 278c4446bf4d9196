//! Hole regions in pixel space and their projections onto coarser grids.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

impl Rect {
    pub const fn new(top: usize, left: usize, height: usize, width: usize) -> Self {
        Rect { top, left, height, width }
    }

    #[inline]
    pub fn bottom(&self) -> usize {
        self.top + self.height
    }

    #[inline]
    pub fn right(&self) -> usize {
        self.left + self.width
    }

    #[inline]
    pub fn contains(&self, y: usize, x: usize) -> bool {
        y >= self.top && y < self.bottom() && x >= self.left && x < self.right()
    }

    pub fn area(&self) -> usize {
        self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.area() == 0
    }

    /// Whether the closed-open windows overlap.
    pub fn intersects(&self, other: &Rect) -> bool {
        self.top < other.bottom() && other.top < self.bottom() && self.left < other.right() && other.left < self.right()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Space {
    Pixel,
    Feature { stride: usize },
}

/// A hole: an axis-aligned rectangle, optionally refined by a binary mask
/// over that rectangle, living on a `grid_h × grid_w` grid.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HoleRegion {
    rect: Rect,
    /// Rect-local, row-major. `None` means the whole rectangle.
    mask: Option<Vec<bool>>,
    space: Space,
    grid: (usize, usize),
}

impl HoleRegion {
    pub fn rect(rect: Rect, grid: (usize, usize), space: Space) -> Result<Self> {
        if rect.is_empty() {
            return Err(Error::EmptyMask);
        }
        if rect.bottom() > grid.0 || rect.right() > grid.1 {
            return Err(Error::RegionOutOfBounds {
                region: format!("{rect:?}"),
                height: grid.0,
                width: grid.1,
            });
        }
        Ok(HoleRegion {
            rect,
            mask: None,
            space,
            grid,
        })
    }

    /// Builds a region from a full-grid mask (row-major, `true` = hole).
    pub fn from_mask(mask: &[bool], grid: (usize, usize), space: Space) -> Result<Self> {
        let (h, w) = grid;
        if mask.len() != h * w {
            return Err(Error::shape("HoleRegion::from_mask", h * w, mask.len()));
        }
        let (mut top, mut left, mut bottom, mut right) = (usize::MAX, usize::MAX, 0, 0);
        for y in 0..h {
            for x in 0..w {
                if mask[y * w + x] {
                    top = top.min(y);
                    left = left.min(x);
                    bottom = bottom.max(y + 1);
                    right = right.max(x + 1);
                }
            }
        }
        if top == usize::MAX {
            return Err(Error::EmptyMask);
        }
        let rect = Rect::new(top, left, bottom - top, right - left);
        let local: Vec<bool> = (0..rect.height)
            .flat_map(|y| (0..rect.width).map(move |x| (y, x)))
            .map(|(y, x)| mask[(rect.top + y) * w + rect.left + x])
            .collect();
        let full = local.iter().all(|&b| b);
        Ok(HoleRegion {
            rect,
            mask: if full { None } else { Some(local) },
            space,
            grid,
        })
    }

    pub fn bounding_rect(&self) -> Rect {
        self.rect
    }

    pub fn grid(&self) -> (usize, usize) {
        self.grid
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn has_mask(&self) -> bool {
        self.mask.is_some()
    }

    #[inline]
    pub fn contains(&self, y: usize, x: usize) -> bool {
        if !self.rect.contains(y, x) {
            return false;
        }
        match &self.mask {
            None => true,
            Some(m) => m[(y - self.rect.top) * self.rect.width + (x - self.rect.left)],
        }
    }

    /// Hole positions in row-major order.
    pub fn points(&self) -> Vec<(usize, usize)> {
        let r = self.rect;
        (r.top..r.bottom())
            .flat_map(|y| (r.left..r.right()).map(move |x| (y, x)))
            .filter(|&(y, x)| self.contains(y, x))
            .collect()
    }

    pub fn count(&self) -> usize {
        match &self.mask {
            None => self.rect.area(),
            Some(m) => m.iter().filter(|&&b| b).count(),
        }
    }

    /// Full-grid boolean mask.
    pub fn to_grid_mask(&self) -> Vec<bool> {
        let (h, w) = self.grid;
        let mut m = vec![false; h * w];
        for (y, x) in self.points() {
            m[y * w + x] = true;
        }
        m
    }

    /// Whether any cell of the `size × size` window centred at `(y, x)` is in the hole.
    pub fn window_overlaps(&self, y: usize, x: usize, size: usize) -> bool {
        let half = size / 2;
        let win = Rect::new(y.saturating_sub(half), x.saturating_sub(half), size, size);
        if !win.intersects(&self.rect) {
            return false;
        }
        if self.mask.is_none() {
            return true;
        }
        let y1 = (win.bottom()).min(self.rect.bottom());
        let x1 = (win.right()).min(self.rect.right());
        (win.top.max(self.rect.top)..y1).any(|yy| (win.left.max(self.rect.left)..x1).any(|xx| self.contains(yy, xx)))
    }

    /// Projects onto a grid `factor` times coarser: a coarse cell is in the
    /// hole if any of its source cells is, then the result is dilated by
    /// `dilation` cells (Chebyshev) and clipped to `grid`.
    pub fn project(&self, factor: usize, dilation: usize, grid: (usize, usize), space: Space) -> Result<HoleRegion> {
        if factor == 0 {
            return Err(Error::InvalidArgument("projection factor must be positive".into()));
        }
        let (gh, gw) = grid;
        let r = self.rect;
        let cover = Rect::new(r.top / factor, r.left / factor, 0, 0);
        let bottom = r.bottom().div_ceil(factor).min(gh);
        let right = r.right().div_ceil(factor).min(gw);
        if cover.top >= bottom || cover.left >= right {
            return Err(Error::RegionOutOfBounds {
                region: format!("{r:?} / {factor}"),
                height: gh,
                width: gw,
            });
        }
        let top = cover.top.saturating_sub(dilation);
        let left = cover.left.saturating_sub(dilation);
        let rect = Rect::new(top, left, (bottom + dilation).min(gh) - top, (right + dilation).min(gw) - left);
        let Some(_) = &self.mask else {
            return HoleRegion::rect(rect, grid, space);
        };
        let mut coarse = vec![false; gh * gw];
        for (y, x) in self.points() {
            let (cy, cx) = (y / factor, x / factor);
            if cy < gh && cx < gw {
                coarse[cy * gw + cx] = true;
            }
        }
        if dilation > 0 {
            let src = coarse.clone();
            for cy in 0..gh {
                for cx in 0..gw {
                    if src[cy * gw + cx] {
                        for yy in cy.saturating_sub(dilation)..(cy + dilation + 1).min(gh) {
                            for xx in cx.saturating_sub(dilation)..(cx + dilation + 1).min(gw) {
                                coarse[yy * gw + xx] = true;
                            }
                        }
                    }
                }
            }
        }
        HoleRegion::from_mask(&coarse, grid, space)
    }
}

/// Maps a pixel-space hole onto a feature grid of the given stride: the
/// covering cell rectangle, dilated by `patch_size / 2` so that every patch
/// touching hole-derived activations counts as inside.
///
/// Fails when no `patch_size × patch_size` window of the grid stays clear of
/// the result.
pub fn map_hole_to_feature(region: &HoleRegion, stride: usize, patch_size: usize, feature_grid: (usize, usize)) -> Result<HoleRegion> {
    let mapped = region.project(stride, patch_size / 2, feature_grid, Space::Feature { stride })?;
    if !has_candidate(&mapped, patch_size) {
        return Err(Error::NoCandidates);
    }
    Ok(mapped)
}

fn has_candidate(region: &HoleRegion, s: usize) -> bool {
    let (h, w) = region.grid();
    let half = s / 2;
    if h < s || w < s {
        return false;
    }
    (half..h - (s - 1 - half)).any(|y| (half..w - (s - 1 - half)).any(|x| !region.window_overlaps(y, x, s)))
}
