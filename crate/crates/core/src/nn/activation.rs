//! Elementwise activations with explicit backward passes.

use crate::nn::tensor::{Scalar, Tensor};

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    Tensor::from_fn(x.shape(), |i| {
        let v = x.data()[i];
        if v > T::zero() {
            v
        } else {
            T::zero()
        }
    })
}

/// Gradient of `relu` given the pre-activation input `x`; the derivative at
/// exactly zero is taken as zero.
pub fn relu_backward<T: Scalar>(dy: &Tensor<T>, x: &Tensor<T>) -> Tensor<T> {
    debug_assert_eq!(dy.shape(), x.shape());
    Tensor::from_fn(x.shape(), |i| {
        if x.data()[i] > T::zero() {
            dy.data()[i]
        } else {
            T::zero()
        }
    })
}

pub fn sigmoid_scalar<T: Scalar>(v: T) -> T {
    // Branch on sign so the exponential never overflows.
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

pub fn sigmoid<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    Tensor::from_fn(x.shape(), |i| sigmoid_scalar(x.data()[i]))
}

/// Gradient of `sigmoid` given its output `y`: `dy · y · (1 − y)`.
pub fn sigmoid_backward<T: Scalar>(dy: &Tensor<T>, y: &Tensor<T>) -> Tensor<T> {
    debug_assert_eq!(dy.shape(), y.shape());
    Tensor::from_fn(y.shape(), |i| {
        let s = y.data()[i];
        dy.data()[i] * s * (T::one() - s)
    })
}
