use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    /// Exponential linear unit with unit scale.
    Elu,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply<T: Real>(self, v: T) -> T {
        match self {
            Activation::Relu => v.max(T::zero()),
            Activation::Elu => {
                if v > T::zero() {
                    v
                } else {
                    v.exp_m1()
                }
            }
            Activation::Tanh => v.tanh(),
        }
    }

    /// Derivative at pre-activation `v`. The relu derivative at 0 is taken as 0.
    #[inline]
    pub fn derivative<T: Real>(self, v: T) -> T {
        match self {
            Activation::Relu => {
                if v > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Elu => {
                if v > T::zero() {
                    T::one()
                } else {
                    v.exp()
                }
            }
            Activation::Tanh => {
                let t = v.tanh();
                T::one() - t * t
            }
        }
    }
}

pub fn activation_forward<T: Real>(input: &Tensor<T>, kind: Activation) -> Tensor<T> {
    input.map(|v| kind.apply(v))
}

/// `grad_input = grad_output ⊙ σ'(input)` where `input` is the pre-activation.
pub fn activation_backward<T: Real>(input: &Tensor<T>, grad_output: &Tensor<T>, kind: Activation) -> Result<Tensor<T>> {
    if input.dims() != grad_output.dims() {
        return Err(Error::shape("activation_backward", input.dims(), grad_output.dims()));
    }
    let data = input
        .data()
        .iter()
        .zip(grad_output.data())
        .map(|(&x, &g)| g * kind.derivative(x))
        .collect();
    Tensor::from_vec(input.dims(), data)
}
