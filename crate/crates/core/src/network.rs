//! Layer graphs over the tensor kernels: the frozen texture network (a VGG-19
//! prefix) and the content-prediction network. Only input gradients exist;
//! weights never change after construction.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::npsw::{WeightTable, WeightTensor};
use crate::ops::{self, Activation, ArgmaxMap, ConvSpec};
use crate::real::Real;
use crate::tensor::Tensor;

static NEXT_NETWORK_ID: AtomicU64 = AtomicU64::new(1);

/// VGG-19 layers up to and including `relu4_1`.
pub const VGG19_LAYERS: &[&str] = &[
    "conv1_1", "relu1_1", "conv1_2", "relu1_2", "pool1", "conv2_1", "relu2_1", "conv2_2", "relu2_2", "pool2", "conv3_1",
    "relu3_1", "conv3_2", "relu3_2", "conv3_3", "relu3_3", "conv3_4", "relu3_4", "pool3", "conv4_1", "relu4_1",
];

pub const VGG_MEAN_NAME: &str = "vgg19.mean";
pub const VGG_MIN_INPUT: usize = 32;
pub const DEFAULT_TAPS: [&str; 2] = ["relu3_1", "relu4_1"];

#[derive(Clone, Debug)]
pub enum LayerKind<T> {
    Conv { spec: ConvSpec, weight: Tensor<T>, bias: Vec<T> },
    /// `spec` describes the forward conv whose input gradient this layer computes.
    ConvTranspose { spec: ConvSpec, weight: Tensor<T>, bias: Vec<T> },
    /// Weight dims `(out, in, 1, 1)`; flattens its input.
    Linear { weight: Tensor<T>, bias: Vec<T> },
    Activation(Activation),
    MaxPool2x2,
    /// Per-batch-item reshape to `(channels, height, width)`.
    Reshape { channels: usize, height: usize, width: usize },
}

#[derive(Clone, Debug)]
pub struct Layer<T> {
    pub name: String,
    pub kind: LayerKind<T>,
}

impl<T: Real> Layer<T> {
    pub fn new(name: impl Into<String>, kind: LayerKind<T>) -> Self {
        Layer { name: name.into(), kind }
    }

    fn output_dims(&self, input: [usize; 4]) -> Result<[usize; 4]> {
        let [n, c, h, w] = input;
        match &self.kind {
            LayerKind::Conv { spec, .. } => {
                if c != spec.in_channels {
                    return Err(Error::shape("conv layer channels", spec.in_channels, c));
                }
                let (oh, ow) = spec.output_hw(h, w)?;
                Ok([n, spec.out_channels, oh, ow])
            }
            LayerKind::ConvTranspose { spec, .. } => {
                if c != spec.out_channels {
                    return Err(Error::shape("transposed conv channels", spec.out_channels, c));
                }
                let (oh, ow) = spec.transposed_output_hw(h, w)?;
                Ok([n, spec.in_channels, oh, ow])
            }
            LayerKind::Linear { weight, .. } => {
                let [o, i, _, _] = weight.dims();
                if c * h * w != i {
                    return Err(Error::shape("linear layer features", i, c * h * w));
                }
                Ok([n, o, 1, 1])
            }
            LayerKind::Activation(_) => Ok(input),
            LayerKind::MaxPool2x2 => Ok([n, c, h.div_ceil(2), w.div_ceil(2)]),
            LayerKind::Reshape { channels, height, width } => {
                if c * h * w != channels * height * width {
                    return Err(Error::shape("reshape", channels * height * width, c * h * w));
                }
                Ok([n, *channels, *height, *width])
            }
        }
    }

    /// Pixel stride contributed by this layer, if it only downsamples.
    fn stride(&self) -> Option<usize> {
        match &self.kind {
            LayerKind::Conv { spec, .. } => Some(spec.stride),
            LayerKind::MaxPool2x2 => Some(2),
            LayerKind::Activation(_) => Some(1),
            _ => None,
        }
    }
}

/// Per-channel affine map applied to the image before the first layer:
/// `y = scale · x − offset[c]`.
#[derive(Clone, Debug)]
pub struct InputTransform<T> {
    pub scale: T,
    pub offset: Vec<T>,
}

impl<T: Real> InputTransform<T> {
    pub fn identity(channels: usize) -> Self {
        InputTransform {
            scale: T::one(),
            offset: vec![T::zero(); channels],
        }
    }

    fn apply(&self, image: &Tensor<T>) -> Tensor<T> {
        let plane = image.height() * image.width();
        let mut out = image.clone();
        for b in 0..image.batch() {
            for (c, &off) in self.offset.iter().enumerate() {
                let o = image.offset(b, c, 0, 0);
                out.data_mut()[o..o + plane].iter_mut().for_each(|v| *v = *v * self.scale - off);
            }
        }
        out
    }
}

/// Names of the layers whose outputs are returned by a forward pass.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeatureSelection {
    names: Vec<String>,
}

impl FeatureSelection {
    pub fn new<S: AsRef<str>>(names: &[S]) -> Self {
        FeatureSelection {
            names: names.iter().map(|s| s.as_ref().to_string()).collect(),
        }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

impl Default for FeatureSelection {
    fn default() -> Self {
        FeatureSelection::new(&DEFAULT_TAPS)
    }
}

/// Everything a backward pass needs from the forward pass that produced it.
#[derive(Clone, Debug)]
pub struct ForwardCache<T> {
    network_id: u64,
    /// Input of every traversed layer.
    inputs: Vec<Tensor<T>>,
    pool_maps: Vec<Option<ArgmaxMap>>,
    /// `(layer index, dims)` for each requested tap, in selection order.
    taps: Vec<(usize, [usize; 4])>,
    image_dims: [usize; 4],
}

impl<T: Real> ForwardCache<T> {
    pub fn layers_traversed(&self) -> usize {
        self.inputs.len()
    }

    pub fn tap_dims(&self) -> Vec<[usize; 4]> {
        self.taps.iter().map(|t| t.1).collect()
    }

    pub fn layer_input(&self, index: usize) -> Option<&Tensor<T>> {
        self.inputs.get(index)
    }

    /// Relu/ELU active sets and pooling winners. Two passes with equal
    /// signatures lie in the same smooth piece of the network.
    pub fn kink_signature<N: Real>(&self, net: &Network<N>) -> Vec<u64> {
        let mut sig = Vec::new();
        for (i, layer) in net.layers.iter().take(self.inputs.len()).enumerate() {
            match &layer.kind {
                LayerKind::Activation(Activation::Relu) | LayerKind::Activation(Activation::Elu) => {
                    let mut word = 0u64;
                    for (j, v) in self.inputs[i].data().iter().enumerate() {
                        if *v > T::zero() {
                            word ^= (j as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left((j % 61) as u32);
                        }
                    }
                    sig.push(word);
                }
                LayerKind::MaxPool2x2 => {
                    if let Some(m) = &self.pool_maps[i] {
                        sig.extend(m.indices().iter().map(|&v| v as u64));
                    }
                }
                _ => {}
            }
        }
        sig
    }
}

#[derive(Clone, Debug)]
pub struct Network<T> {
    id: u64,
    layers: Vec<Layer<T>>,
    input_channels: usize,
    min_input: usize,
    transform: InputTransform<T>,
}

impl<T: Real> Network<T> {
    pub fn new(layers: Vec<Layer<T>>, input_channels: usize, transform: InputTransform<T>, min_input: usize) -> Result<Self> {
        if transform.offset.len() != input_channels {
            return Err(Error::shape("input transform", input_channels, transform.offset.len()));
        }
        for (i, l) in layers.iter().enumerate() {
            if layers[..i].iter().any(|o| o.name == l.name) {
                return Err(Error::InvalidArgument(format!("duplicate layer name `{}`", l.name)));
            }
        }
        Ok(Network {
            id: NEXT_NETWORK_ID.fetch_add(1, Ordering::Relaxed),
            layers,
            input_channels,
            min_input: min_input.max(1),
            transform,
        })
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn min_input(&self) -> usize {
        self.min_input
    }

    pub fn layer_index(&self, name: &str) -> Result<usize> {
        self.layers
            .iter()
            .position(|l| l.name == name)
            .ok_or_else(|| Error::UnknownLayer(name.to_string()))
    }

    pub fn validate_selection(&self, taps: &FeatureSelection) -> Result<()> {
        if taps.is_empty() {
            return Err(Error::InvalidArgument("empty feature selection".into()));
        }
        taps.names().iter().try_for_each(|n| self.layer_index(n).map(|_| ()))
    }

    /// Cumulative pixel stride of `name`'s output grid.
    pub fn tap_stride(&self, name: &str) -> Result<usize> {
        let idx = self.layer_index(name)?;
        self.layers[..=idx].iter().try_fold(1usize, |acc, l| {
            l.stride()
                .map(|s| acc * s)
                .ok_or_else(|| Error::InvalidArgument(format!("layer `{name}` is not on a downsampling path")))
        })
    }

    /// Output dims of every layer for an input of `input_dims`.
    pub fn shapes(&self, input_dims: [usize; 4]) -> Result<Vec<[usize; 4]>> {
        let mut d = input_dims;
        self.layers
            .iter()
            .map(|l| {
                d = l.output_dims(d)?;
                Ok(d)
            })
            .collect()
    }

    fn check_input(&self, image: &Tensor<T>) -> Result<()> {
        if image.channels() != self.input_channels {
            return Err(Error::shape("network input channels", self.input_channels, image.channels()));
        }
        if image.height() < self.min_input || image.width() < self.min_input {
            return Err(Error::InputTooSmall {
                height: image.height(),
                width: image.width(),
                min: self.min_input,
            });
        }
        Ok(())
    }

    /// Runs the network up to the deepest requested tap.
    pub fn forward(&self, image: &Tensor<T>, taps: &FeatureSelection) -> Result<(Vec<Tensor<T>>, ForwardCache<T>)> {
        self.check_input(image)?;
        self.validate_selection(taps)?;
        let tap_idx: Vec<usize> = taps.names().iter().map(|n| self.layer_index(n)).collect::<Result<_>>()?;
        let last = *tap_idx.iter().max().expect("non-empty selection");

        let mut inputs = Vec::with_capacity(last + 1);
        let mut pool_maps = Vec::with_capacity(last + 1);
        let mut x = self.transform.apply(image);
        let mut outputs: Vec<Option<Tensor<T>>> = vec![None; tap_idx.len()];
        for (i, layer) in self.layers[..=last].iter().enumerate() {
            let (y, map) = self.layer_forward(layer, &x)?;
            inputs.push(x);
            pool_maps.push(map);
            for (slot, &ti) in tap_idx.iter().enumerate() {
                if ti == i {
                    outputs[slot] = Some(y.clone());
                }
            }
            x = y;
        }
        let outputs: Vec<Tensor<T>> = outputs.into_iter().map(|o| o.expect("every tap visited")).collect();
        let cache = ForwardCache {
            network_id: self.id,
            inputs,
            pool_maps,
            taps: tap_idx.iter().zip(&outputs).map(|(&i, t)| (i, t.dims())).collect(),
            image_dims: image.dims(),
        };
        Ok((outputs, cache))
    }

    /// Full forward pass through every layer.
    pub fn forward_all(&self, image: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(image)?;
        let mut x = self.transform.apply(image);
        for layer in &self.layers {
            x = self.layer_forward(layer, &x)?.0;
        }
        Ok(x)
    }

    fn layer_forward(&self, layer: &Layer<T>, x: &Tensor<T>) -> Result<(Tensor<T>, Option<ArgmaxMap>)> {
        Ok(match &layer.kind {
            LayerKind::Conv { spec, weight, bias } => (ops::conv2d_forward(x, weight, bias, spec)?, None),
            LayerKind::ConvTranspose { spec, weight, bias } => (ops::conv_transpose2d_forward(x, weight, bias, spec)?, None),
            LayerKind::Linear { weight, bias } => (ops::linear_forward(x, weight, bias)?, None),
            LayerKind::Activation(a) => (ops::activation_forward(x, *a), None),
            LayerKind::MaxPool2x2 => {
                let (y, m) = ops::maxpool2x2_forward(x)?;
                (y, Some(m))
            }
            LayerKind::Reshape { .. } => {
                let d = layer.output_dims(x.dims())?;
                (x.clone().reshape(d)?, None)
            }
        })
    }

    /// Image-space gradient of `Σ_k ⟨tap_k, tap_grads[k]⟩`.
    pub fn backward(&self, tap_grads: &[Tensor<T>], cache: &ForwardCache<T>) -> Result<Tensor<T>> {
        if cache.network_id != self.id || cache.inputs.len() > self.layers.len() {
            return Err(Error::StaleCache);
        }
        if tap_grads.len() != cache.taps.len() {
            return Err(Error::shape("backward tap count", cache.taps.len(), tap_grads.len()));
        }
        for (g, (_, d)) in tap_grads.iter().zip(&cache.taps) {
            if g.dims() != *d {
                return Err(Error::shape("backward tap gradient", d, g.dims()));
            }
        }
        let mut grad: Option<Tensor<T>> = None;
        for i in (0..cache.inputs.len()).rev() {
            for (g, (ti, _)) in tap_grads.iter().zip(&cache.taps) {
                if *ti == i {
                    match grad.as_mut() {
                        Some(acc) => acc.add_scaled(g, T::one())?,
                        None => grad = Some(g.clone()),
                    }
                }
            }
            let Some(g) = grad.take() else { continue };
            let input = &cache.inputs[i];
            let layer = &self.layers[i];
            let gi = match &layer.kind {
                LayerKind::Conv { spec, weight, .. } => {
                    ops::conv2d_backward_input(&g, weight, spec, (input.height(), input.width()))?
                }
                LayerKind::ConvTranspose { spec, weight, .. } => ops::conv_transpose2d_backward_input(&g, weight, spec)?,
                LayerKind::Linear { weight, .. } => ops::linear_backward_input(&g, weight, input.dims())?,
                LayerKind::Activation(a) => ops::activation_backward(input, &g, *a)?,
                LayerKind::MaxPool2x2 => {
                    let map = cache.pool_maps[i].as_ref().ok_or(Error::StaleCache)?;
                    ops::maxpool2x2_backward(&g, map)?
                }
                LayerKind::Reshape { .. } => g.reshape(input.dims())?,
            };
            grad = Some(gi);
        }
        let mut g = grad.unwrap_or_else(|| Tensor::zeros(cache.image_dims));
        if g.dims() != cache.image_dims {
            return Err(Error::StaleCache);
        }
        let s = self.transform.scale;
        g.data_mut().iter_mut().for_each(|v| *v *= s);
        Ok(g)
    }

    /// VGG-19 prefix ending at `deepest` (a name from [`VGG19_LAYERS`]).
    ///
    /// Channel widths are read from the weight table, so reduced-width
    /// networks with the same topology load through the same path.
    pub fn vgg19(table: &WeightTable, deepest: &str) -> Result<Self> {
        let end = VGG19_LAYERS
            .iter()
            .position(|&n| n == deepest)
            .ok_or_else(|| Error::UnknownLayer(deepest.to_string()))?;
        let mean = table.get(VGG_MEAN_NAME).ok_or_else(|| Error::MissingWeights(VGG_MEAN_NAME.into()))?;
        if mean.data.len() != 3 {
            return Err(Error::WeightDims {
                name: VGG_MEAN_NAME.into(),
                expected: vec![3],
                actual: mean.dims.clone(),
            });
        }
        let mut layers = Vec::new();
        let mut channels = 3;
        for &name in &VGG19_LAYERS[..=end] {
            let kind = if name.starts_with("conv") {
                let (weight, bias) = conv_weights::<T>(table, &format!("vgg19.{name}"), Some(channels), Some(3))?;
                let [out, inc, k, _] = weight.dims();
                channels = out;
                LayerKind::Conv {
                    spec: ConvSpec::new(inc, out, k, 1, 1),
                    weight,
                    bias,
                }
            } else if name.starts_with("relu") {
                LayerKind::Activation(Activation::Relu)
            } else {
                LayerKind::MaxPool2x2
            };
            layers.push(Layer::new(name, kind));
        }
        let transform = InputTransform {
            scale: T::from_f64_lossy(255.0),
            offset: mean.data.iter().map(|&m| T::from_f64_lossy(m as f64)).collect(),
        };
        Network::new(layers, 3, transform, VGG_MIN_INPUT)
    }

    /// Content-prediction network: stride-2 4×4 conv encoder, a fully
    /// connected bottleneck, and a 4×4 transposed-conv decoder, ELU between
    /// layers and tanh at the end. Depth and widths come from the table.
    pub fn content_net(table: &WeightTable) -> Result<Self> {
        let mut layers = Vec::new();
        let mut channels = 3;
        let mut spatial = CONTENT_INPUT;
        let mut i = 1;
        while table.contains(&format!("contentnet.conv{i}.weight")) {
            let (weight, bias) = conv_weights::<T>(table, &format!("contentnet.conv{i}"), Some(channels), Some(4))?;
            let [out, inc, k, _] = weight.dims();
            let spec = ConvSpec::new(inc, out, k, 2, 1);
            spatial = spec.output_hw(spatial, spatial)?.0;
            channels = out;
            layers.push(Layer::new(format!("conv{i}"), LayerKind::Conv { spec, weight, bias }));
            layers.push(Layer::new(format!("elu_conv{i}"), LayerKind::Activation(Activation::Elu)));
            i += 1;
        }
        if i == 1 {
            return Err(Error::MissingWeights("contentnet.conv1.weight".into()));
        }

        let fc = table.get("contentnet.fc.weight").ok_or_else(|| Error::MissingWeights("contentnet.fc.weight".into()))?;
        let in_features = channels * spatial * spatial;
        let out_features = fc.dims.first().copied().unwrap_or(0);
        let fc_ok = match fc.dims.as_slice() {
            [o, inf] | [o, inf, 1, 1] => *inf == in_features && *o > 0,
            _ => false,
        };
        if !fc_ok {
            return Err(Error::WeightDims {
                name: "contentnet.fc.weight".into(),
                expected: vec![out_features, in_features],
                actual: fc.dims.clone(),
            });
        }
        let fc_weight = to_tensor::<T>(fc, [out_features, in_features, 1, 1]);
        let fc_bias = bias_vec::<T>(table, "contentnet.fc", out_features)?;
        layers.push(Layer::new("fc", LayerKind::Linear { weight: fc_weight, bias: fc_bias }));
        layers.push(Layer::new("elu_fc", LayerKind::Activation(Activation::Elu)));

        let first = table
            .get("contentnet.deconv1.weight")
            .ok_or_else(|| Error::MissingWeights("contentnet.deconv1.weight".into()))?;
        let dec_in = first.dims.first().copied().unwrap_or(0);
        let side = out_features.checked_div(dec_in).map_or(0, |q| (q as f64).sqrt().round() as usize);
        if dec_in == 0 || side * side * dec_in != out_features {
            return Err(Error::WeightDims {
                name: "contentnet.deconv1.weight".into(),
                expected: vec![out_features / side.max(1).pow(2)],
                actual: first.dims.clone(),
            });
        }
        layers.push(Layer::new(
            "reshape",
            LayerKind::Reshape {
                channels: dec_in,
                height: side,
                width: side,
            },
        ));
        channels = dec_in;
        let mut j = 1;
        while table.contains(&format!("contentnet.deconv{j}.weight")) {
            let name = format!("contentnet.deconv{j}");
            let w = table.get(&format!("{name}.weight")).expect("checked");
            let dims = four_dims(&format!("{name}.weight"), w)?;
            if dims[0] != channels || dims[2] != 4 || dims[3] != 4 {
                return Err(Error::WeightDims {
                    name: format!("{name}.weight"),
                    expected: vec![channels, dims[1], 4, 4],
                    actual: w.dims.clone(),
                });
            }
            let out = dims[1];
            let weight = to_tensor::<T>(w, dims);
            let bias = bias_vec::<T>(table, &name, out)?;
            // forward-conv view: maps `out` channels to `channels`
            let spec = ConvSpec::new(out, channels, 4, 2, 1);
            layers.push(Layer::new(format!("deconv{j}"), LayerKind::ConvTranspose { spec, weight, bias }));
            channels = out;
            j += 1;
            let act = if table.contains(&format!("contentnet.deconv{j}.weight")) {
                Activation::Elu
            } else {
                Activation::Tanh
            };
            layers.push(Layer::new(format!("act_deconv{}", j - 1), LayerKind::Activation(act)));
        }
        if channels != 3 {
            return Err(Error::InvalidArgument(format!("content network decodes {channels} channels, expected 3")));
        }
        let transform = InputTransform {
            scale: T::from_f64_lossy(2.0),
            offset: vec![T::one(); 3],
        };
        let net = Network::new(layers, 3, transform, CONTENT_INPUT)?;
        let out = *net.shapes([1, 3, CONTENT_INPUT, CONTENT_INPUT])?.last().expect("layers");
        if out != [1, 3, CONTENT_OUTPUT, CONTENT_OUTPUT] {
            return Err(Error::shape("content network output", [1, 3, CONTENT_OUTPUT, CONTENT_OUTPUT], out));
        }
        Ok(net)
    }

    /// Predicts the centre `64×64` block of a `128×128` image whose hole is
    /// already mean-filled. Output is in `[0, 1]`.
    pub fn content_net_predict(&self, image128: &Tensor<T>) -> Result<Tensor<T>> {
        let expected = [1, 3, CONTENT_INPUT, CONTENT_INPUT];
        if image128.dims() != expected {
            return Err(Error::shape("content_net_predict", expected, image128.dims()));
        }
        let half = T::from_f64_lossy(0.5);
        let y = self.forward_all(image128)?;
        if y.dims() != [1, 3, CONTENT_OUTPUT, CONTENT_OUTPUT] {
            return Err(Error::shape("content_net_predict output", [1, 3, CONTENT_OUTPUT, CONTENT_OUTPUT], y.dims()));
        }
        Ok(y.map(|v| ((v + T::one()) * half).max(T::zero()).min(T::one())))
    }
}

pub const CONTENT_INPUT: usize = 128;
pub const CONTENT_OUTPUT: usize = 64;

fn four_dims(name: &str, w: &WeightTensor) -> Result<[usize; 4]> {
    match w.dims.as_slice() {
        &[a, b, c, d] => Ok([a, b, c, d]),
        _ => Err(Error::WeightDims {
            name: name.to_string(),
            expected: vec![0, 0, 0, 0],
            actual: w.dims.clone(),
        }),
    }
}

fn to_tensor<T: Real>(w: &WeightTensor, dims: [usize; 4]) -> Tensor<T> {
    Tensor::from_vec(dims, w.data.iter().map(|&v| T::from_f64_lossy(v as f64)).collect()).expect("dims checked by caller")
}

fn bias_vec<T: Real>(table: &WeightTable, prefix: &str, len: usize) -> Result<Vec<T>> {
    let name = format!("{prefix}.bias");
    let b = table.get(&name).ok_or_else(|| Error::MissingWeights(name.clone()))?;
    if b.data.len() != len || b.dims.len() != 1 {
        return Err(Error::WeightDims {
            name,
            expected: vec![len],
            actual: b.dims.clone(),
        });
    }
    Ok(b.data.iter().map(|&v| T::from_f64_lossy(v as f64)).collect())
}

fn conv_weights<T: Real>(
    table: &WeightTable,
    prefix: &str,
    in_channels: Option<usize>,
    kernel: Option<usize>,
) -> Result<(Tensor<T>, Vec<T>)> {
    let name = format!("{prefix}.weight");
    let w = table.get(&name).ok_or_else(|| Error::MissingWeights(name.clone()))?;
    let dims = four_dims(&name, w)?;
    let bad_in = in_channels.is_some_and(|c| c != dims[1]);
    let bad_k = kernel.is_some_and(|k| k != dims[2] || k != dims[3]);
    if bad_in || bad_k || dims[0] == 0 {
        return Err(Error::WeightDims {
            name,
            expected: vec![dims[0], in_channels.unwrap_or(dims[1]), kernel.unwrap_or(dims[2]), kernel.unwrap_or(dims[3])],
            actual: w.dims.clone(),
        });
    }
    let bias = bias_vec(table, prefix, dims[0])?;
    Ok((to_tensor(w, dims), bias))
}
