//! Coarse-to-fine image hole filling driven by deep-feature patches.
//!
//! A coarse-to-fine pyramid fills a rectangular (or arbitrary) hole by
//! minimizing a joint objective over the hole pixels: a holistic content
//! term against a reference prediction, a local texture term that pulls
//! deep-feature patches inside the hole toward their nearest neighbours
//! outside it, and total variation.

pub mod driver;
pub mod error;
pub mod fixtures;
pub mod image_io;
pub mod lbfgs;
pub mod losses;
pub mod metrics;
pub mod network;
pub mod npsw;
pub mod ops;
pub mod par;
pub mod patch;
pub mod real;
pub mod region;
pub mod tensor;

pub use driver::{inpaint, InpaintReport, InpaintRequest, Networks, ScaleReport};
pub use error::{Error, Result};
pub use lbfgs::{minimize, Objective, OptimizerOptions, OptimizerTrace, Termination};
pub use losses::{JointConfig, JointObjective, LossReport};
pub use network::{FeatureSelection, Network};
pub use npsw::{load_weights, write_weights, NpswError, WeightTable, WeightTensor};
pub use real::Real;
pub use region::{HoleRegion, Rect, Space};
pub use tensor::Tensor;
