use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

/// Fully-connected layer over each batch item's flattened features.
/// `weights` is `(out, in, 1, 1)`; the result is `(batch, out, 1, 1)`.
pub fn linear_forward<T: Real>(input: &Tensor<T>, weights: &Tensor<T>, bias: &[T]) -> Result<Tensor<T>> {
    let [out_f, in_f, kh, kw] = weights.dims();
    let n = input.batch();
    if kh != 1 || kw != 1 || input.len() != n * in_f {
        return Err(Error::shape("linear_forward", [n, in_f, 1, 1], input.dims()));
    }
    if !bias.is_empty() && bias.len() != out_f {
        return Err(Error::shape("linear_forward bias", out_f, bias.len()));
    }
    let mut out = vec![T::zero(); n * out_f];
    // out (n × out) = x (n × in) · Wᵀ (in × out)
    T::gemm(n, in_f, out_f, input.data(), in_f, 1, weights.data(), 1, in_f, T::zero(), &mut out, out_f);
    if !bias.is_empty() {
        for row in out.chunks_mut(out_f) {
            row.iter_mut().zip(bias).for_each(|(v, &b)| *v += b);
        }
    }
    Tensor::from_vec([n, out_f, 1, 1], out)
}

/// Input gradient of [`linear_forward`], reshaped to `input_dims`.
pub fn linear_backward_input<T: Real>(grad_output: &Tensor<T>, weights: &Tensor<T>, input_dims: [usize; 4]) -> Result<Tensor<T>> {
    let [out_f, in_f, _, _] = weights.dims();
    let n = grad_output.batch();
    if grad_output.len() != n * out_f || input_dims.iter().product::<usize>() != n * in_f {
        return Err(Error::shape("linear_backward_input", [n, out_f, 1, 1], grad_output.dims()));
    }
    let mut g = vec![T::zero(); n * in_f];
    T::gemm(n, out_f, in_f, grad_output.data(), out_f, 1, weights.data(), in_f, 1, T::zero(), &mut g, in_f);
    Tensor::from_vec(input_dims, g)
}
