//! Reconstruction error metrics on the 0–255 scale.

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::image_io::RgbImage;
use crate::region::HoleRegion;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalRegion {
    Hole,
    Full,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsReport {
    /// Mean absolute difference as a percentage of 255.
    pub l1_percent: f64,
    /// Mean squared difference as a percentage of 255².
    pub l2_percent: f64,
    /// `+∞` for identical inputs.
    #[serde(serialize_with = "serialize_psnr")]
    pub psnr_db: f64,
    pub region: EvalRegion,
    pub pixels: usize,
}

fn serialize_psnr<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

/// PSNR of a mean squared error given on the 0–255 scale.
pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (255.0f64 * 255.0 / mse).log10()
    }
}

/// Compares `prediction` against `truth` over the hole (or the whole image when `region` is `None`).
pub fn compute_metrics(prediction: &RgbImage, truth: &RgbImage, region: Option<&HoleRegion>) -> Result<MetricsReport> {
    if (prediction.width, prediction.height) != (truth.width, truth.height) {
        return Err(Error::shape(
            "compute_metrics",
            format!("{}x{}", truth.width, truth.height),
            format!("{}x{}", prediction.width, prediction.height),
        ));
    }
    let pixels: Vec<usize> = match region {
        Some(r) => {
            if r.grid() != (truth.height, truth.width) {
                return Err(Error::shape("compute_metrics region", format!("{:?}", (truth.height, truth.width)), format!("{:?}", r.grid())));
            }
            r.points().into_iter().map(|(y, x)| y * truth.width + x).collect()
        }
        None => (0..truth.width * truth.height).collect(),
    };
    if pixels.is_empty() {
        return Err(Error::EmptyMask);
    }
    let (mut abs, mut sq) = (0u64, 0u64);
    for &p in &pixels {
        for c in 0..3 {
            let d = (prediction.data[3 * p + c] as i64 - truth.data[3 * p + c] as i64).unsigned_abs();
            abs += d;
            sq += d * d;
        }
    }
    let n = (3 * pixels.len()) as f64;
    let mse = sq as f64 / n;
    Ok(MetricsReport {
        l1_percent: abs as f64 / n / 255.0 * 100.0,
        l2_percent: mse / (255.0 * 255.0) * 100.0,
        psnr_db: psnr_from_mse(mse),
        region: if region.is_some() { EvalRegion::Hole } else { EvalRegion::Full },
        pixels: pixels.len(),
    })
}
