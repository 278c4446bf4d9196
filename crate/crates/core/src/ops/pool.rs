use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

/// Winning input position of every pooled output value.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ArgmaxMap {
    input_dims: [usize; 4],
    output_dims: [usize; 4],
    /// Flat offset into the input tensor, one per output element.
    indices: Vec<usize>,
}

impl ArgmaxMap {
    pub fn input_dims(&self) -> [usize; 4] {
        self.input_dims
    }

    pub fn output_dims(&self) -> [usize; 4] {
        self.output_dims
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }
}

/// 2×2 / stride-2 max pooling.
///
/// Odd heights or widths are handled by replicating the last row / column.
/// Ties go to the first position in row-major order, so replicated cells never
/// win over the cell they copy.
pub fn maxpool2x2_forward<T: Real>(input: &Tensor<T>) -> Result<(Tensor<T>, ArgmaxMap)> {
    if input.is_empty() {
        return Err(Error::EmptyTensor("maxpool2x2_forward"));
    }
    let [n, c, h, w] = input.dims();
    let (oh, ow) = (h.div_ceil(2), w.div_ceil(2));
    let mut out = Tensor::zeros([n, c, oh, ow]);
    let mut indices = Vec::with_capacity(out.len());
    let data = input.data();
    let mut o = 0;
    for b in 0..n {
        for ch in 0..c {
            let base = input.offset(b, ch, 0, 0);
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = usize::MAX;
                    let mut best_v = T::neg_infinity();
                    for dy in 0..2 {
                        let y = (2 * oy + dy).min(h - 1);
                        for dx in 0..2 {
                            let x = (2 * ox + dx).min(w - 1);
                            let idx = base + y * w + x;
                            if best == usize::MAX || data[idx] > best_v {
                                best = idx;
                                best_v = data[idx];
                            }
                        }
                    }
                    out.data_mut()[o] = best_v;
                    indices.push(best);
                    o += 1;
                }
            }
        }
    }
    let map = ArgmaxMap {
        input_dims: input.dims(),
        output_dims: out.dims(),
        indices,
    };
    Ok((out, map))
}

/// Routes each output gradient to its recorded argmax.
pub fn maxpool2x2_backward<T: Real>(grad_output: &Tensor<T>, map: &ArgmaxMap) -> Result<Tensor<T>> {
    if grad_output.dims() != map.output_dims {
        return Err(Error::StaleCache);
    }
    let mut grad = Tensor::zeros(map.input_dims);
    let g = grad.data_mut();
    for (&idx, &v) in map.indices.iter().zip(grad_output.data()) {
        g[idx] += v;
    }
    Ok(grad)
}
