//! Measurement routines shared by the module tests and the acceptance target.

use npsynth::fixtures::{tiny_feature_net, tiny_taps};
use npsynth::losses::{texture_loss, tv_loss, TextureTarget};
use npsynth::patch::{candidate_locations, extract_patches, nn_search_bruteforce, nn_search_fast, query_locations};
use npsynth::{HoleRegion, JointConfig, JointObjective, Network, Rect, Space, Tensor};
use rand::seq::SliceRandom;
use rand::Rng;

use super::{central_differences, coordinate_rel_errors, rng};

pub const GRAD_TOL: f64 = 1e-4;
const FD_STEP: f64 = 1e-6;

#[derive(Clone, Debug, Default)]
pub struct GradStats {
    pub sampled: usize,
    pub kinks: usize,
    pub within: usize,
    pub worst: f64,
}

impl GradStats {
    pub fn checked(&self) -> usize {
        self.sampled - self.kinks
    }

    pub fn fraction(&self) -> f64 {
        self.within as f64 / self.checked().max(1) as f64
    }

    fn absorb(&mut self, errors: &[f64], kinks: &[bool]) {
        for (e, &k) in errors.iter().zip(kinks) {
            self.sampled += 1;
            if k {
                self.kinks += 1;
            } else {
                if *e <= GRAD_TOL {
                    self.within += 1;
                }
                self.worst = self.worst.max(*e);
            }
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct GradientReport {
    pub content: GradStats,
    pub texture: GradStats,
    pub tv: GradStats,
    pub joint: GradStats,
}

pub const GRADIENT_HOLES: [Rect; 4] = [
    Rect::new(4, 4, 4, 4),
    Rect::new(3, 6, 5, 4),
    Rect::new(2, 9, 4, 5),
    Rect::new(5, 5, 3, 3),
];

fn set_hole(image: &mut Tensor<f64>, points: &[(usize, usize)], v: &[f64]) {
    let mut k = 0;
    for c in 0..image.channels() {
        for &(y, x) in points {
            image.set(0, c, y, x, v[k]);
            k += 1;
        }
    }
}

fn kink_flags(net: &Network<f64>, image: &Tensor<f64>, points: &[(usize, usize)], x: &[f64], coords: &[usize]) -> Vec<bool> {
    let taps = tiny_taps();
    let sig = |v: &[f64]| {
        let mut img = image.clone();
        set_hole(&mut img, points, v);
        net.forward(&img, &taps).unwrap().1.kink_signature(net)
    };
    let base = sig(x);
    let mut xp = x.to_vec();
    coords
        .iter()
        .map(|&k| {
            xp[k] = x[k] + FD_STEP;
            let plus = sig(&xp);
            xp[k] = x[k] - FD_STEP;
            let minus = sig(&xp);
            xp[k] = x[k];
            plus != base || minus != base
        })
        .collect()
}

/// Finite-difference checks of every loss on 16×16 instances with the tiny
/// two-conv feature network, one instance per entry of [`GRADIENT_HOLES`].
pub fn gradient_suite() -> GradientReport {
    let mut report = GradientReport::default();
    for (seed, &rect) in GRADIENT_HOLES.iter().enumerate() {
        let seed = seed as u64;
        let mut r = rng(100 + seed);
        let net = tiny_feature_net::<f64>(seed);
        let image = Tensor::<f64>::from_fn([1, 3, 16, 16], |_| r.gen_range(0.0..1.0));
        let hole = HoleRegion::rect(rect, (16, 16), Space::Pixel).unwrap();
        let points = hole.points();
        let reference = Tensor::<f64>::from_fn([1, 3, rect.height, rect.width], |_| r.gen_range(0.0..1.0));
        let base = |alpha: f64, beta: f64| JointConfig {
            alpha,
            beta,
            taps: tiny_taps().names().to_vec(),
            ..JointConfig::default()
        };

        // content term alone
        let mut obj = JointObjective::new(&net, &base(0.0, 0.0), image.clone(), hole.clone(), reference.clone()).unwrap();
        let x = obj.free_values();
        let coords: Vec<usize> = (0..x.len()).collect();
        let analytic = obj.evaluate(&x).unwrap().gradient;
        let fd = central_differences(&mut |v| obj.evaluate(v).unwrap().total, &x, &coords, FD_STEP);
        report.content.absorb(&coordinate_rel_errors(&analytic, &fd), &vec![false; coords.len()]);

        // total variation over every pixel
        let all: Vec<f64> = image.data().to_vec();
        let mut tv_coords: Vec<usize> = (0..all.len()).collect();
        tv_coords.shuffle(&mut r);
        tv_coords.truncate(64);
        let (_, tv_grad) = tv_loss(&image).unwrap();
        let mut tv = |v: &[f64]| tv_loss(&Tensor::from_vec(image.dims(), v.to_vec()).unwrap()).unwrap().0;
        let fd = central_differences(&mut tv, &all, &tv_coords, FD_STEP);
        let analytic: Vec<f64> = tv_coords.iter().map(|&k| tv_grad.data()[k]).collect();
        report.tv.absorb(&coordinate_rel_errors(&analytic, &fd), &vec![false; tv_coords.len()]);

        // texture term with nearest neighbours frozen at x
        let joint_cfg = base(1.0, 0.5);
        let mut obj = JointObjective::new(&net, &joint_cfg, image.clone(), hole.clone(), reference.clone()).unwrap();
        let targets: Vec<TextureTarget<f64>> = obj.targets().to_vec();
        let tap_holes: Vec<HoleRegion> = obj.tap_holes().to_vec();
        let texture = |v: &[f64]| -> (f64, Tensor<f64>) {
            let mut img = image.clone();
            set_hole(&mut img, &points, v);
            let (maps, cache) = net.forward(&img, &tiny_taps()).unwrap();
            let mut total = 0.0;
            let mut grads = Vec::new();
            for ((m, h), t) in maps.iter().zip(&tap_holes).zip(&targets) {
                let (val, g) = texture_loss(m, h, t).unwrap();
                total += val;
                grads.push(g);
            }
            (total, net.backward(&grads, &cache).unwrap())
        };
        let (_, g_img) = texture(&x);
        let analytic: Vec<f64> = (0..3).flat_map(|c| points.iter().map(move |&(y, xx)| (c, y, xx))).map(|(c, y, xx)| g_img.get(0, c, y, xx)).collect();
        let fd = central_differences(&mut |v| texture(v).0, &x, &coords, FD_STEP);
        let kinks = kink_flags(&net, &image, &points, &x, &coords);
        report.texture.absorb(&coordinate_rel_errors(&analytic, &fd), &kinks);

        // the joint objective
        let analytic = obj.evaluate(&x).unwrap().gradient;
        let fd = central_differences(&mut |v| obj.evaluate(v).unwrap().total, &x, &coords, FD_STEP);
        report.joint.absorb(&coordinate_rel_errors(&analytic, &fd), &kinks);
    }
    report
}

#[derive(Clone, Debug, Default)]
pub struct NnReport {
    pub instances: usize,
    pub agreeing: usize,
    pub queries: usize,
}

/// Random feature maps, holes, patch sizes and windows; counts instances where
/// the fast search returns exactly the brute-force indices and distances.
pub fn nn_equivalence(instances: usize, seed: u64) -> NnReport {
    let mut r = rng(seed);
    let mut report = NnReport::default();
    while report.instances < instances {
        let c = r.gen_range(1..=8);
        let (h, w) = (r.gen_range(7..=20), r.gen_range(7..=20));
        let s = [1, 3, 3, 5][r.gen_range(0..4)];
        let quantized = r.gen_bool(0.3);
        let map = Tensor::<f32>::from_fn([1, c, h, w], |_| {
            let v: f32 = r.gen_range(0.0..4.0);
            if quantized {
                v.round()
            } else {
                v
            }
        });
        let rh = r.gen_range(1..=h / 2);
        let rw = r.gen_range(1..=w / 2);
        let rect = Rect::new(r.gen_range(0..=h - rh), r.gen_range(0..=w - rw), rh, rw);
        let hole = HoleRegion::rect(rect, (h, w), Space::Feature { stride: 1 }).unwrap();
        let candidates = candidate_locations(&hole, s);
        let queries = query_locations(&hole, s, r.gen_range(1..=2));
        if candidates.is_empty() || queries.is_empty() {
            continue;
        }
        let radius = if r.gen_bool(0.3) { Some(r.gen_range(1..=6)) } else { None };
        let q = extract_patches(&map, &queries, s).unwrap();
        let p = extract_patches(&map, &candidates, s).unwrap();
        let slow = nn_search_bruteforce(&q, &p, radius).unwrap();
        let fast = nn_search_fast(&map, &q, &p, radius).unwrap();
        report.instances += 1;
        report.queries += queries.len();
        if slow.matches == fast.matches && slow.distances == fast.distances {
            report.agreeing += 1;
        }
    }
    report
}
