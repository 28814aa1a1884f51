//! Mean losses: binary cross-entropy and mean squared error.
//!
//! Sums are accumulated in f64 regardless of element type so the reported
//! loss does not drift with tensor size.

use crate::error::{Error, Result};
use crate::nn::tensor::{Scalar, Tensor};

/// Predictions are clamped to `[BCE_EPS, 1 − BCE_EPS]` before the logs.
pub const BCE_EPS: f64 = 1e-7;

fn check_same_shape<T: Scalar>(op: &str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape_mismatch(
            op,
            format!("{:?}", a.shape()),
            format!("{:?}", b.shape()),
        ));
    }
    if a.is_empty() {
        return Err(Error::EmptyInput(op.to_string()));
    }
    Ok(())
}

fn clamp<T: Scalar>(p: T) -> T {
    let lo = T::from_f64(BCE_EPS);
    let hi = T::one() - T::from_f64(BCE_EPS);
    p.max(lo).min(hi)
}

/// `−mean(y·ln p + (1−y)·ln(1−p))`.
pub fn bce_loss<T: Scalar>(p: &Tensor<T>, y: &Tensor<T>) -> Result<T> {
    check_same_shape("bce_loss", p, y)?;
    let mut acc = 0.0f64;
    for (&pv, &yv) in p.data().iter().zip(y.data()) {
        let pc = clamp(pv).as_f64();
        let yv = yv.as_f64();
        acc -= yv * pc.ln() + (1.0 - yv) * (1.0 - pc).ln();
    }
    Ok(T::from_f64(acc / p.len() as f64))
}

/// `scale · dL/dp`. Elements that sat outside the clamp range get zero
/// gradient, matching the loss actually computed.
pub fn bce_backward<T: Scalar>(p: &Tensor<T>, y: &Tensor<T>, scale: T) -> Result<Tensor<T>> {
    check_same_shape("bce_backward", p, y)?;
    let n = T::from_f64(p.len() as f64);
    let lo = T::from_f64(BCE_EPS);
    let hi = T::one() - T::from_f64(BCE_EPS);
    Ok(Tensor::from_fn(p.shape(), |i| {
        let pv = p.data()[i];
        if pv < lo || pv > hi {
            return T::zero();
        }
        let yv = y.data()[i];
        scale * (-yv / pv + (T::one() - yv) / (T::one() - pv)) / n
    }))
}

/// `mean((a − b)²)`.
pub fn mse_loss<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<T> {
    check_same_shape("mse_loss", a, b)?;
    let mut acc = 0.0f64;
    for (&av, &bv) in a.data().iter().zip(b.data()) {
        let d = av.as_f64() - bv.as_f64();
        acc += d * d;
    }
    Ok(T::from_f64(acc / a.len() as f64))
}

/// `scale · dL/da`; the gradient with respect to `b` is its negation.
pub fn mse_backward<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, scale: T) -> Result<Tensor<T>> {
    check_same_shape("mse_backward", a, b)?;
    let two_over_n = T::from_f64(2.0 / a.len() as f64);
    Ok(Tensor::from_fn(a.shape(), |i| {
        scale * two_over_n * (a.data()[i] - b.data()[i])
    }))
}
