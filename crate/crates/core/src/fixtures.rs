//! Deterministic random-weight networks.
//!
//! These back the bundled `.npsw` fixture files and the small graphs used by
//! gradient tests. Regenerate the bundled files with
//! `cargo run -p npsynth --example make_fixtures`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::network::{FeatureSelection, InputTransform, Layer, LayerKind, Network, VGG19_LAYERS, VGG_MEAN_NAME};
use crate::npsw::{WeightTable, WeightTensor};
use crate::ops::{Activation, ConvSpec};
use crate::real::Real;
use crate::tensor::Tensor;

/// ImageNet channel means on the 0–255 scale, RGB order.
pub const IMAGENET_MEAN: [f32; 3] = [123.68, 116.779, 103.939];

/// Widths of the bundled reduced VGG fixture (conv1, conv2, conv3, conv4 blocks).
pub const FIXTURE_VGG_WIDTHS: [usize; 4] = [8, 16, 32, 64];
pub const FIXTURE_VGG_SEED: u64 = 0x5EED_0001;
pub const FIXTURE_CONTENT_SEED: u64 = 0x5EED_0002;

fn he_uniform(rng: &mut ChaCha8Rng, fan_in: usize, n: usize) -> Vec<f32> {
    let a = (6.0 / fan_in as f64).sqrt();
    (0..n).map(|_| rng.gen_range(-a..a) as f32).collect()
}

/// VGG-19 prefix weights (through `conv4_1`) with reduced channel widths.
pub fn vgg_like_weights(widths: &[usize], seed: u64) -> WeightTable {
    assert_eq!(widths.len(), 4, "one width per VGG block");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut table = WeightTable::new();
    table.insert(VGG_MEAN_NAME, WeightTensor::scalar_list(&IMAGENET_MEAN));
    let mut cin = 3;
    for name in VGG19_LAYERS.iter().filter(|n| n.starts_with("conv")) {
        let block: usize = name[4..5].parse().expect("conv<block>_<n>");
        let cout = widths[block - 1];
        let fan_in = cin * 9;
        // input is on the 0-255 scale; keep first-layer responses O(1)
        let gain = if cin == 3 { 1.0 / 64.0 } else { 1.0 };
        let w: Vec<f32> = he_uniform(&mut rng, fan_in, cout * fan_in).into_iter().map(|v| v * gain).collect();
        table.insert(format!("vgg19.{name}.weight"), WeightTensor::new(vec![cout, cin, 3, 3], w));
        let b: Vec<f32> = (0..cout).map(|_| rng.gen_range(-0.05..0.05)).collect();
        table.insert(format!("vgg19.{name}.bias"), WeightTensor::new(vec![cout], b));
        cin = cout;
    }
    table
}

/// Content-network weights. `decoder` lists the output channels of each
/// transposed conv and must end in 3; the first decoder input width is
/// `fc_out / 16` (a 4×4 grid).
pub fn content_net_weights(encoder: &[usize], fc_out: usize, decoder: &[usize], seed: u64) -> WeightTable {
    assert!(fc_out.is_multiple_of(16), "fc output must reshape to a 4x4 grid");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut table = WeightTable::new();
    let mut cin = 3;
    let mut side = 128;
    for (i, &cout) in encoder.iter().enumerate() {
        let fan_in = cin * 16;
        table.insert(
            format!("contentnet.conv{}.weight", i + 1),
            WeightTensor::new(vec![cout, cin, 4, 4], he_uniform(&mut rng, fan_in, cout * fan_in)),
        );
        table.insert(format!("contentnet.conv{}.bias", i + 1), WeightTensor::new(vec![cout], vec![0.0; cout]));
        cin = cout;
        side /= 2;
    }
    let fc_in = cin * side * side;
    table.insert(
        "contentnet.fc.weight",
        WeightTensor::new(vec![fc_out, fc_in], he_uniform(&mut rng, fc_in, fc_out * fc_in)),
    );
    table.insert("contentnet.fc.bias", WeightTensor::new(vec![fc_out], vec![0.0; fc_out]));
    let mut cin = fc_out / 16;
    for (j, &cout) in decoder.iter().enumerate() {
        let fan_in = cin * 4;
        table.insert(
            format!("contentnet.deconv{}.weight", j + 1),
            WeightTensor::new(vec![cin, cout, 4, 4], he_uniform(&mut rng, fan_in, cin * cout * 16)),
        );
        table.insert(format!("contentnet.deconv{}.bias", j + 1), WeightTensor::new(vec![cout], vec![0.0; cout]));
        cin = cout;
    }
    table
}

/// Weights of the bundled content-network fixture.
pub fn fixture_content_weights() -> WeightTable {
    content_net_weights(&[4, 8, 8, 16, 16], 64, &[8, 8, 4, 3], FIXTURE_CONTENT_SEED)
}

/// Weights of the bundled reduced VGG fixture.
pub fn fixture_vgg_weights() -> WeightTable {
    vgg_like_weights(&FIXTURE_VGG_WIDTHS, FIXTURE_VGG_SEED)
}

/// Two-conv feature network: `conv1 → relu1 → pool1 → conv2 → relu2`,
/// identity input transform, tapped at `relu1` (stride 1) and `relu2` (stride 2).
pub fn tiny_feature_net<T: Real>(seed: u64) -> Network<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut conv = |name: &str, cin: usize, cout: usize| {
        let w = he_uniform(&mut rng, cin * 9, cout * cin * 9);
        let b: Vec<T> = (0..cout).map(|_| T::from_f64_lossy(rng.gen_range(0.0..0.2))).collect();
        Layer::new(
            name,
            LayerKind::Conv {
                spec: ConvSpec::new(cin, cout, 3, 1, 1),
                weight: Tensor::from_vec([cout, cin, 3, 3], w.iter().map(|&v| T::from_f64_lossy(v as f64)).collect())
                    .expect("dims"),
                bias: b,
            },
        )
    };
    let layers = vec![
        conv("conv1", 3, 4),
        Layer::new("relu1", LayerKind::Activation(Activation::Relu)),
        Layer::new("pool1", LayerKind::MaxPool2x2),
        conv("conv2", 4, 4),
        Layer::new("relu2", LayerKind::Activation(Activation::Relu)),
    ];
    Network::new(layers, 3, InputTransform::identity(3), 2).expect("valid tiny network")
}

pub fn tiny_taps() -> FeatureSelection {
    FeatureSelection::new(&["relu1", "relu2"])
}
