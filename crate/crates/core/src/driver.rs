//! Coarse-to-fine inpainting pipeline.
//!
//! The image is padded to a size divisible by `2^(N-1)`, the hole is
//! mean-filled, and an `N`-level pyramid is built by 2×2 box downsampling.
//! The coarsest hole is initialized from the content network (or the mean
//! colour), each level is optimized under the joint objective, and the
//! result is upsampled to initialize and constrain the next level. Only
//! masked pixels of the final image are written back into the input.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::image_io::RgbImage;
use crate::lbfgs::{minimize, Objective, OptimizerOptions, OptimizerTrace, Termination};
use crate::losses::{JointConfig, JointObjective, LossReport};
use crate::network::{Network, CONTENT_INPUT, CONTENT_OUTPUT, VGG19_LAYERS};
use crate::npsw::WeightTable;
use crate::ops::{downsample2x, resize_bilinear, upsample2x};
use crate::real::Real;
use crate::region::{HoleRegion, Rect, Space};
use crate::tensor::Tensor;

pub const DEFAULT_SCALES: usize = 3;

#[derive(Clone, Debug)]
pub struct InpaintRequest {
    pub image: RgbImage,
    pub mask: HoleRegion,
    pub config: JointConfig,
    pub scales: usize,
    /// Amplitude of uniform noise added to the coarsest initialization.
    pub init_noise: f64,
    pub seed: u64,
}

impl InpaintRequest {
    pub fn new(image: RgbImage, mask: HoleRegion) -> Self {
        InpaintRequest {
            image,
            mask,
            config: JointConfig::default(),
            scales: DEFAULT_SCALES,
            init_noise: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        if self.scales == 0 || self.scales > 16 {
            return Err(Error::InvalidArgument(format!("scale count {} outside 1..=16", self.scales)));
        }
        if !(self.init_noise >= 0.0 && self.init_noise.is_finite()) {
            return Err(Error::InvalidArgument(format!("init noise {}", self.init_noise)));
        }
        let grid = (self.image.height, self.image.width);
        if self.mask.grid() != grid {
            return Err(Error::shape("mask", format!("{grid:?}"), format!("{:?}", self.mask.grid())));
        }
        if self.mask.count() == grid.0 * grid.1 {
            return Err(Error::FullMask);
        }
        Ok(())
    }
}

/// One pyramid level. Level 1 is the coarsest.
#[derive(Clone, Debug)]
pub struct ScaleState<T> {
    pub level: usize,
    pub image: Tensor<T>,
    pub region: HoleRegion,
    /// Bounding-rectangle sized; set before the level is optimized.
    pub content_ref: Option<Tensor<T>>,
    pub trace: Option<OptimizerTrace>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScaleReport {
    pub level: usize,
    pub height: usize,
    pub width: usize,
    pub hole: Rect,
    pub hole_pixels: usize,
    /// Objective at the initialization with its exact nearest neighbours.
    pub initial: LossReport,
    /// Objective at the optimizer output with its exact nearest neighbours.
    pub final_loss: LossReport,
    pub trace: OptimizerTrace,
    pub nn_refreshes: usize,
    pub warning: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ContentInit {
    Network,
    MeanColor,
}

#[derive(Clone, Debug, Serialize)]
pub struct InpaintReport {
    pub precision: &'static str,
    pub config: JointConfig,
    pub scales: Vec<ScaleReport>,
    pub input: (usize, usize),
    /// Working size after replicate padding, when padding was needed.
    pub padded: Option<(usize, usize)>,
    pub hole: Rect,
    pub content_init: ContentInit,
    pub mean_color: [f64; 3],
    pub warning: bool,
}

/// Per-channel mean over pixels outside `region`.
pub fn known_mean<T: Real>(image: &Tensor<T>, region: &HoleRegion) -> Result<Vec<T>> {
    let [_, c, h, w] = image.dims();
    let mask = region.to_grid_mask();
    let known = mask.iter().filter(|&&m| !m).count();
    if known == 0 {
        return Err(Error::FullMask);
    }
    Ok((0..c)
        .map(|ch| {
            let mut acc = 0.0;
            for y in 0..h {
                for x in 0..w {
                    if !mask[y * w + x] {
                        acc += image.get(0, ch, y, x).to_f64_lossy();
                    }
                }
            }
            T::from_f64_lossy(acc / known as f64)
        })
        .collect())
}

fn fill_points<T: Real>(image: &mut Tensor<T>, points: &[(usize, usize)], color: &[T]) {
    for (ch, &v) in color.iter().enumerate() {
        for &(y, x) in points {
            image.set(0, ch, y, x, v);
        }
    }
}

fn rect_points(r: Rect) -> Vec<(usize, usize)> {
    (r.top..r.bottom()).flat_map(|y| (r.left..r.right()).map(move |x| (y, x))).collect()
}

/// Embeds `region` into a larger grid anchored at the top-left.
fn regrid(region: &HoleRegion, grid: (usize, usize)) -> Result<HoleRegion> {
    if grid == region.grid() {
        return Ok(region.clone());
    }
    if !region.has_mask() {
        return HoleRegion::rect(region.bounding_rect(), grid, region.space());
    }
    let mut mask = vec![false; grid.0 * grid.1];
    for (y, x) in region.points() {
        mask[y * grid.1 + x] = true;
    }
    HoleRegion::from_mask(&mask, grid, region.space())
}

/// Builds levels `1..=n` from a full-resolution image whose hole has already
/// been filled. Dimensions must be divisible by `2^(n-1)`.
pub fn build_pyramid<T: Real>(image: &Tensor<T>, region: &HoleRegion, n: usize) -> Result<Vec<ScaleState<T>>> {
    if n == 0 {
        return Err(Error::InvalidArgument("pyramid needs at least one level".into()));
    }
    let f = 1usize << (n - 1);
    let (h, w) = (image.height(), image.width());
    if h % f != 0 || w % f != 0 {
        return Err(Error::InvalidArgument(format!("{h}x{w} is not divisible by {f}")));
    }
    let mut levels = vec![ScaleState {
        level: n,
        image: image.clone(),
        region: region.clone(),
        content_ref: None,
        trace: None,
    }];
    for level in (1..n).rev() {
        let finer = levels.last().expect("non-empty");
        let image = downsample2x(&finer.image)?;
        let grid = (image.height(), image.width());
        let region = finer.region.project(2, 0, grid, Space::Pixel)?;
        if region.count() == grid.0 * grid.1 {
            return Err(Error::FullMask);
        }
        levels.push(ScaleState {
            level,
            image,
            region,
            content_ref: None,
            trace: None,
        });
    }
    levels.reverse();
    Ok(levels)
}

/// Window copy with coordinates clamped into the image.
fn crop_clamped<T: Real>(t: &Tensor<T>, top: isize, left: isize, h: usize, w: usize) -> Tensor<T> {
    let (th, tw) = (t.height() as isize, t.width() as isize);
    Tensor::from_fn([1, t.channels(), h, w], |[_, c, y, x]| {
        let yy = (top + y as isize).clamp(0, th - 1) as usize;
        let xx = (left + x as isize).clamp(0, tw - 1) as usize;
        t.get(0, c, yy, xx)
    })
}

/// Content prediction for the bounding rectangle of `region`.
///
/// A square window centred on the rectangle, twice its larger side (at least
/// `128`), is resampled to the network input; the centre half of the window
/// comes back from the network and the rectangle is cut out of it.
pub fn predict_content<T: Real>(net: &Network<T>, filled: &Tensor<T>, region: &HoleRegion) -> Result<Tensor<T>> {
    let r = region.bounding_rect();
    let side = CONTENT_INPUT.max(4 * r.height.max(r.width).div_ceil(2));
    let top = (r.top + r.height / 2) as isize - (side / 2) as isize;
    let left = (r.left + r.width / 2) as isize - (side / 2) as isize;
    let window = crop_clamped(filled, top, left, side, side);
    let input = if side == CONTENT_INPUT {
        window
    } else {
        resize_bilinear(&window, CONTENT_INPUT, CONTENT_INPUT)?
    };
    let pred = net.content_net_predict(&input)?;
    let half = side / 2;
    let pred = if half == CONTENT_OUTPUT {
        pred
    } else {
        resize_bilinear(&pred, half, half)?
    };
    let oy = (r.top as isize - top) as usize - side / 4;
    let ox = (r.left as isize - left) as usize - side / 4;
    pred.crop(oy, ox, r.height, r.width)
}

/// Sets the content reference of the coarsest level and writes it into the
/// hole. Returns the mean colour of the known pixels.
pub fn init_coarsest<T: Real>(state: &mut ScaleState<T>, content_net: Option<&Network<T>>) -> Result<Vec<T>> {
    let mean = known_mean(&state.image, &state.region)?;
    let r = state.region.bounding_rect();
    let reference = match content_net {
        Some(net) => {
            let mut filled = state.image.clone();
            fill_points(&mut filled, &rect_points(r), &mean);
            predict_content(net, &filled, &state.region)?
        }
        None => Tensor::from_fn([1, state.image.channels(), r.height, r.width], |[_, c, _, _]| mean[c]),
    };
    for (y, x) in state.region.points() {
        for c in 0..state.image.channels() {
            state.image.set(0, c, y, x, reference.get(0, c, y - r.top, x - r.left));
        }
    }
    state.content_ref = Some(reference);
    Ok(mean)
}

/// Initializes `next` from the ×2 upsample of `coarse`: the hole pixels and
/// the content reference both take the upsampled values.
pub fn advance_scale<T: Real>(coarse: &ScaleState<T>, next: &mut ScaleState<T>) -> Result<()> {
    let up = upsample2x(&coarse.image)?;
    if up.dims() != next.image.dims() {
        return Err(Error::shape("advance_scale", next.image.dims(), up.dims()));
    }
    for (y, x) in next.region.points() {
        for c in 0..up.channels() {
            next.image.set(0, c, y, x, up.get(0, c, y, x));
        }
    }
    let r = next.region.bounding_rect();
    next.content_ref = Some(up.crop(r.top, r.left, r.height, r.width)?);
    Ok(())
}

struct ScaleObjective<'a, 'n, T: Real> {
    inner: &'a mut JointObjective<'n, T>,
    refresh_every: usize,
    refreshes: usize,
}

impl<T: Real> Objective for ScaleObjective<'_, '_, T> {
    fn evaluate(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        match self.inner.evaluate(x) {
            Ok(r) => Ok((r.total, r.gradient)),
            Err(Error::NonFinite) => Ok((f64::INFINITY, vec![0.0; x.len()])),
            Err(e) => Err(e),
        }
    }

    fn refresh(&mut self, iteration: usize, x: &[f64]) -> Result<bool> {
        if self.inner.config().alpha == 0.0 || !iteration.is_multiple_of(self.refresh_every) {
            return Ok(false);
        }
        self.inner.refresh_assignments(x)?;
        self.refreshes += 1;
        Ok(true)
    }
}

/// Optimizes the hole of `state` and clamps it to `[0, 1]`.
pub fn run_scale<T: Real>(state: &mut ScaleState<T>, network: &Network<T>, config: &JointConfig) -> Result<ScaleReport> {
    let content_ref = state
        .content_ref
        .clone()
        .ok_or_else(|| Error::InvalidArgument(format!("level {} has no content reference", state.level)))?;
    let mut objective = JointObjective::new(network, config, state.image.clone(), state.region.clone(), content_ref)?;
    let x0 = objective.free_values();
    let initial = match objective.evaluate(&x0) {
        Ok(r) if r.gradient.iter().all(|g| g.is_finite()) => r,
        Ok(_) | Err(Error::NonFinite) => return Ok(abandon_scale(state, config, x0.len())),
        Err(e) => return Err(e),
    };
    let opts = OptimizerOptions {
        max_iterations: config.iterations,
        ..OptimizerOptions::default()
    };
    let mut adapter = ScaleObjective {
        inner: &mut objective,
        refresh_every: config.nn_refresh,
        refreshes: 0,
    };
    let (x, trace) = minimize(&mut adapter, &x0, &opts)?;
    let nn_refreshes = adapter.refreshes;
    objective.refresh_assignments(&x)?;
    let final_loss = objective.evaluate(&x)?;
    let clamped: Vec<f64> = x.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    objective.set_free(&clamped)?;
    state.image = objective.into_image();

    let warning = match trace.termination {
        Termination::LineSearchFailed => trace.iterations.is_empty(),
        Termination::NonFinite => true,
        _ => false,
    };
    if warning {
        log::warn!("level {}: optimization stopped early ({:?})", state.level, trace.termination);
    }
    log::info!(
        "level {} ({}x{}): objective {:.6e} -> {:.6e} in {} iterations ({:?})",
        state.level,
        state.image.height(),
        state.image.width(),
        initial.total,
        final_loss.total,
        trace.iterations.len(),
        trace.termination
    );
    let r = state.region.bounding_rect();
    let report = ScaleReport {
        level: state.level,
        height: state.image.height(),
        width: state.image.width(),
        hole: r,
        hole_pixels: state.region.count(),
        initial,
        final_loss,
        trace: trace.clone(),
        nn_refreshes,
        warning,
    };
    state.trace = Some(trace);
    Ok(report)
}

/// Report for a level whose starting objective is not finite: the
/// initialization is kept, clamped, and flagged.
fn abandon_scale<T: Real>(state: &mut ScaleState<T>, config: &JointConfig, free: usize) -> ScaleReport {
    log::warn!("level {}: objective is not finite at the initialization; keeping it", state.level);
    for v in state.image.data_mut() {
        *v = num_traits::clamp(*v, T::zero(), T::one());
    }
    let loss = LossReport {
        total: f64::INFINITY,
        content: f64::NAN,
        texture: config.taps.iter().map(|t| (t.clone(), f64::NAN)).collect(),
        tv: f64::NAN,
        alpha: config.alpha,
        beta: config.beta,
        gradient: vec![f64::NAN; free],
    };
    let trace = OptimizerTrace {
        initial_value: f64::INFINITY,
        initial_grad_norm: f64::NAN,
        final_value: f64::INFINITY,
        iterations: Vec::new(),
        termination: Termination::NonFinite,
        evaluations: 1,
    };
    state.trace = Some(trace.clone());
    ScaleReport {
        level: state.level,
        height: state.image.height(),
        width: state.image.width(),
        hole: state.region.bounding_rect(),
        hole_pixels: state.region.count(),
        initial: loss.clone(),
        final_loss: loss,
        trace,
        nn_refreshes: 0,
        warning: true,
    }
}

/// Deepest of `taps` in the VGG-19 layer order.
pub fn deepest_tap(taps: &[String]) -> Result<&str> {
    let mut best: Option<(usize, &str)> = None;
    for t in taps {
        let i = VGG19_LAYERS
            .iter()
            .position(|&n| n == t)
            .ok_or_else(|| Error::UnknownLayer(t.clone()))?;
        if best.is_none_or(|(b, _)| i > b) {
            best = Some((i, t));
        }
    }
    best.map(|(_, t)| t).ok_or_else(|| Error::InvalidArgument("no texture layers selected".into()))
}

/// Feature and content networks built from weight tables.
pub struct Networks<T> {
    pub feature: Network<T>,
    pub content: Option<Network<T>>,
}

impl<T: Real> Networks<T> {
    pub fn from_tables(vgg: &WeightTable, content: Option<&WeightTable>, config: &JointConfig) -> Result<Self> {
        Ok(Networks {
            feature: Network::vgg19(vgg, deepest_tap(&config.taps)?)?,
            content: content.map(Network::content_net).transpose()?,
        })
    }
}

/// Runs the full pipeline and composites masked pixels into the input.
pub fn inpaint<T: Real>(request: &InpaintRequest, feature: &Network<T>, content: Option<&Network<T>>) -> Result<(RgbImage, InpaintReport)> {
    request.validate()?;
    let (h, w) = (request.image.height, request.image.width);
    let f = 1usize << (request.scales - 1);
    let (ph, pw) = (h.div_ceil(f) * f, w.div_ceil(f) * f);
    let coarse = (ph / f, pw / f);
    if request.config.alpha > 0.0 && coarse.0.min(coarse.1) < feature.min_input() {
        return Err(Error::InputTooSmall {
            height: coarse.0,
            width: coarse.1,
            min: feature.min_input(),
        });
    }

    let mut image = request.image.to_tensor::<T>();
    let mean = known_mean(&image, &request.mask)?;
    fill_points(&mut image, &request.mask.points(), &mean);
    let image = if (ph, pw) == (h, w) { image } else { image.pad_replicate(ph, pw) };
    let region = regrid(&request.mask, (ph, pw))?;

    let mut levels = build_pyramid(&image, &region, request.scales)?;
    let coarse_mean = init_coarsest(&mut levels[0], content)?;
    if request.init_noise > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(request.seed);
        let a = request.init_noise;
        let state = &mut levels[0];
        for c in 0..state.image.channels() {
            for (y, x) in state.region.points() {
                let v = state.image.get(0, c, y, x).to_f64_lossy() + rng.gen_range(-a..=a);
                state.image.set(0, c, y, x, T::from_f64_lossy(v.clamp(0.0, 1.0)));
            }
        }
    }

    let mut scales = Vec::with_capacity(levels.len());
    for i in 0..levels.len() {
        if i > 0 {
            let (done, rest) = levels.split_at_mut(i);
            advance_scale(&done[i - 1], &mut rest[0])?;
        }
        scales.push(run_scale(&mut levels[i], feature, &request.config)?);
    }

    let result = levels.pop().expect("at least one level").image;
    let result = if (ph, pw) == (h, w) { result } else { result.crop(0, 0, h, w)? };
    let filled = RgbImage::from_tensor(&result)?;
    let mut out = request.image.clone();
    for (y, x) in request.mask.points() {
        let i = 3 * (y * w + x);
        out.data[i..i + 3].copy_from_slice(&filled.data[i..i + 3]);
    }

    let warning = scales.iter().any(|s| s.warning);
    let report = InpaintReport {
        precision: T::NAME,
        config: request.config.clone(),
        scales,
        input: (h, w),
        padded: ((ph, pw) != (h, w)).then_some((ph, pw)),
        hole: request.mask.bounding_rect(),
        content_init: if content.is_some() { ContentInit::Network } else { ContentInit::MeanColor },
        mean_color: [0, 1, 2].map(|c| coarse_mean.get(c).map_or(0.0, |v| v.to_f64_lossy())),
        warning,
    };
    Ok((out, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{fixture_content_weights, tiny_feature_net, tiny_taps};

    fn config(iterations: usize) -> JointConfig {
        JointConfig {
            taps: tiny_taps().names().to_vec(),
            iterations,
            ..JointConfig::default()
        }
    }

    fn gradient_image(h: usize, w: usize) -> RgbImage {
        RgbImage::new(w, h, (0..h * w * 3).map(|i| ((i * 37) % 251) as u8).collect()).unwrap()
    }

    #[test]
    fn pyramid_halves_canonical_hole() {
        let img = Tensor::<f32>::zeros([1, 3, 512, 512]);
        let hole = HoleRegion::rect(Rect::new(128, 128, 256, 256), (512, 512), Space::Pixel).unwrap();
        let levels = build_pyramid(&img, &hole, 3).unwrap();
        let dims: Vec<_> = levels.iter().map(|l| (l.level, l.image.height(), l.region.bounding_rect())).collect();
        assert_eq!(
            dims,
            vec![
                (1, 128, Rect::new(32, 32, 64, 64)),
                (2, 256, Rect::new(64, 64, 128, 128)),
                (3, 512, Rect::new(128, 128, 256, 256)),
            ]
        );
        let single = build_pyramid(&img, &hole, 1).unwrap();
        assert_eq!(single.len(), 1);
        assert_eq!(single[0].image, img);
        assert!(build_pyramid(&Tensor::<f32>::zeros([1, 3, 6, 6]), &HoleRegion::rect(Rect::new(1, 1, 1, 1), (6, 6), Space::Pixel).unwrap(), 3).is_err());
    }

    #[test]
    fn mean_of_half_black_half_white_is_grey() {
        let img = Tensor::<f64>::from_fn([1, 3, 4, 4], |[_, _, _, x]| if x < 2 { 0.0 } else { 1.0 });
        let hole = HoleRegion::rect(Rect::new(1, 1, 2, 2), (4, 4), Space::Pixel).unwrap();
        let mut state = ScaleState {
            level: 1,
            image: img,
            region: hole,
            content_ref: None,
            trace: None,
        };
        let mean = init_coarsest(&mut state, None).unwrap();
        assert_eq!(mean, vec![0.5; 3]);
        let r = state.content_ref.unwrap();
        assert!(r.data().iter().all(|&v| v == 0.5));
        assert_eq!(state.image.get(0, 1, 2, 2), 0.5);
    }

    #[test]
    fn content_network_reference_is_its_prediction() {
        let net = Network::<f32>::content_net(&fixture_content_weights()).unwrap();
        let img = gradient_image(128, 128).to_tensor::<f32>();
        let hole = HoleRegion::rect(Rect::new(32, 32, 64, 64), (128, 128), Space::Pixel).unwrap();
        let mut state = ScaleState {
            level: 1,
            image: img.clone(),
            region: hole.clone(),
            content_ref: None,
            trace: None,
        };
        let mean = init_coarsest(&mut state, Some(&net)).unwrap();
        let mut filled = img;
        fill_points(&mut filled, &hole.points(), &mean);
        let direct = net.content_net_predict(&filled).unwrap();
        assert_eq!(state.content_ref.unwrap(), direct);
    }

    #[test]
    fn off_centre_holes_get_a_centred_window() {
        let net = Network::<f64>::content_net(&fixture_content_weights()).unwrap();
        let img = gradient_image(96, 80).to_tensor::<f64>();
        for rect in [Rect::new(0, 0, 5, 9), Rect::new(60, 40, 36, 40), Rect::new(10, 70, 80, 3)] {
            let hole = HoleRegion::rect(rect, (96, 80), Space::Pixel).unwrap();
            let p = predict_content(&net, &img, &hole).unwrap();
            assert_eq!(p.dims(), [1, 3, rect.height, rect.width]);
            assert!(p.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn advance_upsamples_hole_and_reference() {
        let coarse_img = Tensor::<f64>::full([1, 3, 8, 8], 0.25);
        let coarse = ScaleState {
            level: 1,
            image: coarse_img,
            region: HoleRegion::rect(Rect::new(2, 2, 4, 4), (8, 8), Space::Pixel).unwrap(),
            content_ref: None,
            trace: None,
        };
        let fine_img = Tensor::<f64>::from_fn([1, 3, 16, 16], |[_, c, y, x]| (c + y + x) as f64 / 64.0);
        let mut next = ScaleState {
            level: 2,
            image: fine_img.clone(),
            region: HoleRegion::rect(Rect::new(4, 4, 8, 8), (16, 16), Space::Pixel).unwrap(),
            content_ref: None,
            trace: None,
        };
        advance_scale(&coarse, &mut next).unwrap();
        let r = next.content_ref.as_ref().unwrap();
        assert_eq!(r.dims(), [1, 3, 8, 8]);
        assert!(r.data().iter().all(|&v| v == 0.25));
        for y in 0..16 {
            for x in 0..16 {
                let inside = next.region.contains(y, x);
                let v = next.image.get(0, 0, y, x);
                assert_eq!(v, if inside { 0.25 } else { fine_img.get(0, 0, y, x) });
            }
        }
    }

    #[test]
    fn zero_iterations_keep_the_initialization() {
        let net = tiny_feature_net::<f64>(3);
        let img = gradient_image(16, 16).to_tensor::<f64>();
        let hole = HoleRegion::rect(Rect::new(4, 4, 4, 4), (16, 16), Space::Pixel).unwrap();
        let mut state = ScaleState {
            level: 1,
            image: img,
            region: hole,
            content_ref: None,
            trace: None,
        };
        init_coarsest(&mut state, None).unwrap();
        let before = state.image.clone();
        let report = run_scale(&mut state, &net, &config(0)).unwrap();
        assert_eq!(state.image, before);
        assert!(report.trace.iterations.is_empty());
    }

    #[test]
    fn overflowing_objective_keeps_the_initialization_with_a_warning() {
        let net = tiny_feature_net::<f32>(3);
        let img = gradient_image(16, 16).to_tensor::<f32>();
        let hole = HoleRegion::rect(Rect::new(4, 4, 4, 4), (16, 16), Space::Pixel).unwrap();
        let mut state = ScaleState {
            level: 1,
            image: img,
            region: hole,
            content_ref: None,
            trace: None,
        };
        init_coarsest(&mut state, None).unwrap();
        let before = state.image.clone();
        let cfg = JointConfig { alpha: 1e300, ..config(10) };
        let report = run_scale(&mut state, &net, &cfg).unwrap();
        assert_eq!(state.image, before);
        assert!(report.warning);
        assert_eq!(report.trace.termination, Termination::NonFinite);
    }

    #[test]
    fn content_only_objective_recovers_reference() {
        let net = tiny_feature_net::<f64>(3);
        let img = gradient_image(16, 16).to_tensor::<f64>();
        let hole = HoleRegion::rect(Rect::new(5, 6, 4, 3), (16, 16), Space::Pixel).unwrap();
        let reference = Tensor::from_fn([1, 3, 4, 3], |[_, c, y, x]| 0.1 + 0.05 * (c + y + x) as f64);
        let mut state = ScaleState {
            level: 1,
            image: img,
            region: hole.clone(),
            content_ref: Some(reference.clone()),
            trace: None,
        };
        let cfg = JointConfig {
            alpha: 0.0,
            beta: 0.0,
            ..config(50)
        };
        run_scale(&mut state, &net, &cfg).unwrap();
        for (y, x) in hole.points() {
            for c in 0..3 {
                assert!((state.image.get(0, c, y, x) - reference.get(0, c, y - 5, x - 6)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn inpaint_preserves_known_pixels_and_pads() {
        let net = tiny_feature_net::<f32>(3);
        let image = gradient_image(31, 34);
        let mut mask = vec![false; 31 * 34];
        for (y, x) in [(10, 10), (10, 11), (11, 12), (20, 25), (21, 25)] {
            mask[y * 34 + x] = true;
        }
        let region = HoleRegion::from_mask(&mask, (31, 34), Space::Pixel).unwrap();
        let mut request = InpaintRequest::new(image.clone(), region.clone());
        request.config = config(5);
        request.scales = 2;
        let (out, report) = inpaint(&request, &net, None).unwrap();
        assert_eq!(report.padded, Some((32, 34)));
        assert_eq!((out.height, out.width), (31, 34));
        for y in 0..31 {
            for x in 0..34 {
                if !region.contains(y, x) {
                    assert_eq!(out.pixel(y, x), image.pixel(y, x));
                }
            }
        }
        assert_eq!(report.scales.len(), 2);
        for s in &report.scales {
            assert!(s.final_loss.total <= s.initial.total);
        }
    }

    #[test]
    fn rejects_full_and_mismatched_masks() {
        let net = tiny_feature_net::<f32>(3);
        let image = gradient_image(8, 8);
        let full = HoleRegion::rect(Rect::new(0, 0, 8, 8), (8, 8), Space::Pixel).unwrap();
        assert!(matches!(inpaint(&InpaintRequest::new(image.clone(), full), &net, None), Err(Error::FullMask)));
        let other = HoleRegion::rect(Rect::new(0, 0, 2, 2), (9, 8), Space::Pixel).unwrap();
        assert!(inpaint(&InpaintRequest::new(image, other), &net, None).is_err());
    }

    #[test]
    fn deepest_tap_follows_layer_order() {
        let taps = vec!["relu4_1".to_string(), "relu3_1".to_string()];
        assert_eq!(deepest_tap(&taps).unwrap(), "relu4_1");
        assert!(deepest_tap(&["bogus".to_string()]).is_err());
    }
}
