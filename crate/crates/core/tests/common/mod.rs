//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

pub mod suites;

use npsynth::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, dims: [usize; 4]) -> Tensor<f64> {
    Tensor::from_fn(dims, |_| rng.gen_range(-1.0..1.0))
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// `max |a − b| / max |b|`.
pub fn normwise_rel(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

/// Direct six-loop convolution with zero padding.
pub fn conv_direct(x: &Tensor<f64>, w: &Tensor<f64>, bias: &[f64], stride: usize, pad: usize) -> Tensor<f64> {
    let [n, cin, h, wd] = x.dims();
    let [cout, _, kh, kw] = w.dims();
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (wd + 2 * pad - kw) / stride + 1;
    let mut out = Tensor::zeros([n, cout, oh, ow]);
    for b in 0..n {
        for o in 0..cout {
            for y in 0..oh {
                for xx in 0..ow {
                    let mut acc = bias.get(o).copied().unwrap_or(0.0);
                    for c in 0..cin {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = (y * stride + ky) as isize - pad as isize;
                                let ix = (xx * stride + kx) as isize - pad as isize;
                                if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < wd {
                                    acc += x.get(b, c, iy as usize, ix as usize) * w.get(o, c, ky, kx);
                                }
                            }
                        }
                    }
                    out.set(b, o, y, xx, acc);
                }
            }
        }
    }
    out
}

/// Direct scatter form of the transposed convolution; weights `(in, out, kh, kw)`.
pub fn conv_transpose_direct(x: &Tensor<f64>, w: &Tensor<f64>, bias: &[f64], stride: usize, pad: usize) -> Tensor<f64> {
    let [n, cin, h, wd] = x.dims();
    let [_, cout, kh, kw] = w.dims();
    let oh = (h - 1) * stride + kh - 2 * pad;
    let ow = (wd - 1) * stride + kw - 2 * pad;
    let mut out = Tensor::from_fn([n, cout, oh, ow], |[_, o, _, _]| bias.get(o).copied().unwrap_or(0.0));
    for b in 0..n {
        for c in 0..cin {
            for iy in 0..h {
                for ix in 0..wd {
                    for o in 0..cout {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let y = (iy * stride + ky) as isize - pad as isize;
                                let xx = (ix * stride + kx) as isize - pad as isize;
                                if y >= 0 && xx >= 0 && (y as usize) < oh && (xx as usize) < ow {
                                    let v = out.get(b, o, y as usize, xx as usize) + x.get(b, c, iy, ix) * w.get(c, o, ky, kx);
                                    out.set(b, o, y as usize, xx as usize, v);
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// 2×2 stride-2 max pooling over the cells that exist (ceil output size).
pub fn maxpool_direct(x: &Tensor<f64>) -> Tensor<f64> {
    let [n, c, h, w] = x.dims();
    Tensor::from_fn([n, c, h.div_ceil(2), w.div_ceil(2)], |[b, ch, y, xx]| {
        let mut m = f64::NEG_INFINITY;
        for dy in 0..2 {
            for dx in 0..2 {
                let (iy, ix) = (2 * y + dy, 2 * xx + dx);
                if iy < h && ix < w {
                    m = m.max(x.get(b, ch, iy, ix));
                }
            }
        }
        m
    })
}

pub fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

pub fn elu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        v.exp() - 1.0
    }
}

/// Central differences of `f` at every index in `coords`.
pub fn central_differences(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], coords: &[usize], h: f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    coords
        .iter()
        .map(|&k| {
            xp[k] = x[k] + h;
            let fp = f(&xp);
            xp[k] = x[k] - h;
            let fm = f(&xp);
            xp[k] = x[k];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// Per-coordinate relative error with a floor relative to the gradient scale.
pub fn coordinate_rel_errors(analytic: &[f64], numeric: &[f64]) -> Vec<f64> {
    let scale = analytic.iter().chain(numeric).fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = 1e-6 * scale.max(1e-300);
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .collect()
}
