//! 2-D convolution (cross-correlation) and its input gradient.
//!
//! Both directions lower to im2col + GEMM over tiles of output rows. Tile
//! boundaries depend only on the problem shape, never on the thread count.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::real::Real;
use crate::tensor::Tensor;

/// Upper bound on elements of one im2col tile.
const TILE_ELEMS: usize = 1 << 20;
/// Tiles whose column buffers are alive at once during the backward scatter.
const SCATTER_GROUP: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub pad: usize,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl ConvSpec {
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize, stride: usize, pad: usize) -> Self {
        ConvSpec {
            kernel_h: kernel,
            kernel_w: kernel,
            stride,
            pad,
            in_channels,
            out_channels,
        }
    }

    pub fn weight_dims(&self) -> [usize; 4] {
        [self.out_channels, self.in_channels, self.kernel_h, self.kernel_w]
    }

    /// Output spatial size for an `h × w` input.
    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        if self.kernel_h == 0 || self.kernel_w == 0 || self.stride == 0 {
            return Err(Error::InvalidArgument(format!("degenerate conv spec {self:?}")));
        }
        let ph = h + 2 * self.pad;
        let pw = w + 2 * self.pad;
        if ph < self.kernel_h || pw < self.kernel_w {
            return Err(Error::shape("ConvSpec::output_hw", (self.kernel_h, self.kernel_w), (ph, pw)));
        }
        Ok(((ph - self.kernel_h) / self.stride + 1, (pw - self.kernel_w) / self.stride + 1))
    }

    /// Output spatial size of the transposed convolution sharing this spec.
    pub fn transposed_output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let oh = (h.max(1) - 1) * self.stride + self.kernel_h;
        let ow = (w.max(1) - 1) * self.stride + self.kernel_w;
        if oh <= 2 * self.pad || ow <= 2 * self.pad || h == 0 || w == 0 {
            return Err(Error::shape("ConvSpec::transposed_output_hw", "positive output", (h, w)));
        }
        Ok((oh - 2 * self.pad, ow - 2 * self.pad))
    }

    fn patch_len(&self) -> usize {
        self.in_channels * self.kernel_h * self.kernel_w
    }
}

fn check_weights<T: Real>(weights: &Tensor<T>, spec: &ConvSpec, op: &'static str) -> Result<()> {
    if weights.dims() != spec.weight_dims() {
        return Err(Error::shape(op, spec.weight_dims(), weights.dims()));
    }
    Ok(())
}

#[derive(Clone, Copy)]
struct Tile {
    batch: usize,
    row0: usize,
    rows: usize,
}

fn tiles(batch: usize, out_h: usize, out_w: usize, patch_len: usize) -> Vec<Tile> {
    let rows_per_tile = (TILE_ELEMS / (patch_len * out_w).max(1)).clamp(1, out_h.max(1));
    let mut v = Vec::new();
    for b in 0..batch {
        let mut r = 0;
        while r < out_h {
            let rows = rows_per_tile.min(out_h - r);
            v.push(Tile { batch: b, row0: r, rows });
            r += rows;
        }
    }
    v
}

/// Fills `cols` (patch_len × tile pixels) for one tile of output rows.
fn im2col_tile<T: Real>(input: &Tensor<T>, spec: &ConvSpec, out_w: usize, tile: Tile, cols: &mut [T]) {
    let (h, w) = (input.height() as isize, input.width() as isize);
    let tp = tile.rows * out_w;
    let plane = input.height() * input.width();
    let base = input.offset(tile.batch, 0, 0, 0);
    let data = input.data();
    let mut r = 0;
    for ci in 0..spec.in_channels {
        let chan = &data[base + ci * plane..base + (ci + 1) * plane];
        for ky in 0..spec.kernel_h {
            for kx in 0..spec.kernel_w {
                let row = &mut cols[r * tp..(r + 1) * tp];
                for ty in 0..tile.rows {
                    let oy = tile.row0 + ty;
                    let iy = (oy * spec.stride + ky) as isize - spec.pad as isize;
                    let dst = &mut row[ty * out_w..(ty + 1) * out_w];
                    if iy < 0 || iy >= h {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src = &chan[iy as usize * w as usize..(iy as usize + 1) * w as usize];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * spec.stride + kx) as isize - spec.pad as isize;
                        *d = if ix < 0 || ix >= w { T::zero() } else { src[ix as usize] };
                    }
                }
                r += 1;
            }
        }
    }
}

/// Accumulates `cols` back onto the input-shaped gradient (adjoint of im2col).
fn col2im_tile<T: Real>(cols: &[T], spec: &ConvSpec, out_w: usize, tile: Tile, grad: &mut Tensor<T>) {
    let (h, w) = (grad.height() as isize, grad.width() as isize);
    let tp = tile.rows * out_w;
    let plane = grad.height() * grad.width();
    let base = grad.offset(tile.batch, 0, 0, 0);
    let data = grad.data_mut();
    let mut r = 0;
    for ci in 0..spec.in_channels {
        let chan = &mut data[base + ci * plane..base + (ci + 1) * plane];
        for ky in 0..spec.kernel_h {
            for kx in 0..spec.kernel_w {
                let row = &cols[r * tp..(r + 1) * tp];
                for ty in 0..tile.rows {
                    let oy = tile.row0 + ty;
                    let iy = (oy * spec.stride + ky) as isize - spec.pad as isize;
                    if iy < 0 || iy >= h {
                        continue;
                    }
                    let dst = &mut chan[iy as usize * w as usize..(iy as usize + 1) * w as usize];
                    for (ox, &g) in row[ty * out_w..(ty + 1) * out_w].iter().enumerate() {
                        let ix = (ox * spec.stride + kx) as isize - spec.pad as isize;
                        if ix >= 0 && ix < w {
                            dst[ix as usize] += g;
                        }
                    }
                }
                r += 1;
            }
        }
    }
}

/// Direct 2-D cross-correlation with zero padding.
///
/// `weights` is `(out, in, kh, kw)`; `bias` is either empty or one value per
/// output channel.
pub fn conv2d_forward<T: Real>(input: &Tensor<T>, weights: &Tensor<T>, bias: &[T], spec: &ConvSpec) -> Result<Tensor<T>> {
    check_weights(weights, spec, "conv2d_forward")?;
    if input.channels() != spec.in_channels {
        return Err(Error::shape("conv2d_forward input channels", spec.in_channels, input.channels()));
    }
    if !bias.is_empty() && bias.len() != spec.out_channels {
        return Err(Error::shape("conv2d_forward bias", spec.out_channels, bias.len()));
    }
    let (oh, ow) = spec.output_hw(input.height(), input.width())?;
    let k = spec.patch_len();
    let cout = spec.out_channels;
    let tiles = tiles(input.batch(), oh, ow, k);

    let blocks = par::map_range(tiles.len(), |ti| {
        let tile = tiles[ti];
        let tp = tile.rows * ow;
        let mut cols = vec![T::zero(); k * tp];
        im2col_tile(input, spec, ow, tile, &mut cols);
        let mut out = vec![T::zero(); cout * tp];
        T::gemm(cout, k, tp, weights.data(), k, 1, &cols, tp, 1, T::zero(), &mut out, tp);
        out
    });

    let mut output = Tensor::zeros([input.batch(), cout, oh, ow]);
    let plane = oh * ow;
    for (tile, block) in tiles.iter().zip(blocks) {
        let tp = tile.rows * ow;
        for co in 0..cout {
            let dst0 = output.offset(tile.batch, co, tile.row0, 0);
            let b = if bias.is_empty() { T::zero() } else { bias[co] };
            let dst = &mut output.data_mut()[dst0..dst0 + tp];
            for (d, &s) in dst.iter_mut().zip(&block[co * tp..(co + 1) * tp]) {
                *d = s + b;
            }
        }
        debug_assert!(tile.row0 * ow + tp <= plane);
    }
    Ok(output)
}

/// Gradient of [`conv2d_forward`] with respect to its input.
///
/// `input_hw` is the spatial size of the forward input; it cannot always be
/// recovered from the output size when the stride does not divide evenly.
pub fn conv2d_backward_input<T: Real>(
    grad_output: &Tensor<T>,
    weights: &Tensor<T>,
    spec: &ConvSpec,
    input_hw: (usize, usize),
) -> Result<Tensor<T>> {
    check_weights(weights, spec, "conv2d_backward_input")?;
    let (oh, ow) = spec.output_hw(input_hw.0, input_hw.1)?;
    let expected = [grad_output.batch(), spec.out_channels, oh, ow];
    if grad_output.dims() != expected {
        return Err(Error::shape("conv2d_backward_input", expected, grad_output.dims()));
    }
    let k = spec.patch_len();
    let cout = spec.out_channels;
    let plane = oh * ow;
    let tiles = tiles(grad_output.batch(), oh, ow, k);
    let mut grad_input = Tensor::zeros([grad_output.batch(), spec.in_channels, input_hw.0, input_hw.1]);

    for group in tiles.chunks(SCATTER_GROUP) {
        let cols = par::map_range(group.len(), |gi| {
            let tile = group[gi];
            let tp = tile.rows * ow;
            let start = grad_output.offset(tile.batch, 0, tile.row0, 0);
            let g = &grad_output.data()[start..];
            let mut cols = vec![T::zero(); k * tp];
            // cols = Wᵀ (k × cout) · G (cout × tp), G rows strided by the plane size
            T::gemm(k, cout, tp, weights.data(), 1, k, g, plane, 1, T::zero(), &mut cols, tp);
            cols
        });
        for (tile, c) in group.iter().zip(cols) {
            col2im_tile(&c, spec, ow, *tile, &mut grad_input);
        }
    }
    Ok(grad_input)
}

/// Transposed convolution; `weights` is `(in, out, kh, kw)` as the adjoint of a
/// forward conv mapping `out → in` channels.
pub fn conv_transpose2d_forward<T: Real>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &[T],
    spec: &ConvSpec,
) -> Result<Tensor<T>> {
    // `spec` describes the equivalent forward conv: in_channels = transposed output.
    let (oh, ow) = spec.transposed_output_hw(input.height(), input.width())?;
    let mut out = conv2d_backward_input(input, weights, spec, (oh, ow))?;
    if !bias.is_empty() {
        if bias.len() != spec.in_channels {
            return Err(Error::shape("conv_transpose2d_forward bias", spec.in_channels, bias.len()));
        }
        let plane = oh * ow;
        for b in 0..out.batch() {
            for (c, &bv) in bias.iter().enumerate() {
                let o = out.offset(b, c, 0, 0);
                out.data_mut()[o..o + plane].iter_mut().for_each(|v| *v += bv);
            }
        }
    }
    Ok(out)
}

/// Input gradient of [`conv_transpose2d_forward`].
pub fn conv_transpose2d_backward_input<T: Real>(grad_output: &Tensor<T>, weights: &Tensor<T>, spec: &ConvSpec) -> Result<Tensor<T>> {
    conv2d_forward(grad_output, weights, &[], spec)
}
