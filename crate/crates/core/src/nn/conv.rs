//! 2-D convolution (cross-correlation) with same-size zero padding,
//! implemented as im2col + GEMM.
//!
//! Tensors carry no batch axis here; the model loops over batch entries so
//! that one im2col buffer is live at a time.

use crate::error::{Error, Result};
use crate::nn::tensor::{gemm_nn, gemm_nt, gemm_tn, Scalar, Tensor};
use std::cell::Cell;

thread_local! {
    static SKEW_WEIGHT_GRAD: Cell<bool> = const { Cell::new(false) };
}

/// Deliberately skews the weight gradient produced by [`conv2d_backward`] on
/// the current thread. This is the negative control for gradient checking: a
/// checker that still passes with the skew enabled is not measuring anything.
pub fn set_weight_grad_skew(enabled: bool) {
    SKEW_WEIGHT_GRAD.with(|f| f.set(enabled));
}

fn weight_grad_skew() -> bool {
    SKEW_WEIGHT_GRAD.with(|f| f.get())
}

/// `x: [C_in, H, W]`, `weight: [C_out, C_in, KH, KW]` with odd `KH`, `KW`,
/// `bias: [C_out]` → `[C_out, H, W]`.
pub fn conv2d<T: Scalar>(x: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let dims = ConvDims::check(x, weight, bias)?;
    let col = im2col(x, &dims);
    let hw = dims.h * dims.w;
    let mut y = Tensor::zeros(&[dims.c_out, dims.h, dims.w]);
    gemm_nn(
        dims.c_out,
        dims.patch,
        hw,
        T::one(),
        weight.data(),
        col.data(),
        T::zero(),
        y.data_mut(),
    );
    for c in 0..dims.c_out {
        let b = bias.data()[c];
        for v in &mut y.data_mut()[c * hw..(c + 1) * hw] {
            *v += b;
        }
    }
    Ok(y)
}

pub struct Conv2dGrads<T> {
    pub dx: Tensor<T>,
    pub dw: Tensor<T>,
    pub db: Tensor<T>,
}

pub fn conv2d_backward<T: Scalar>(
    dy: &Tensor<T>,
    x: &Tensor<T>,
    weight: &Tensor<T>,
) -> Result<Conv2dGrads<T>> {
    let bias = Tensor::zeros(&[weight.shape()[0]]);
    let dims = ConvDims::check(x, weight, &bias)?;
    let hw = dims.h * dims.w;
    if dy.shape() != [dims.c_out, dims.h, dims.w] {
        return Err(Error::shape_mismatch(
            "conv2d_backward",
            format!("[{}, {}, {}]", dims.c_out, dims.h, dims.w),
            format!("{:?}", dy.shape()),
        ));
    }

    // dW = dY · colᵀ, recomputing the column matrix from x.
    let col = im2col(x, &dims);
    let mut dw = Tensor::zeros(weight.shape());
    gemm_nt(
        dims.c_out,
        hw,
        dims.patch,
        T::one(),
        dy.data(),
        col.data(),
        T::zero(),
        dw.data_mut(),
    );
    if weight_grad_skew() {
        for v in dw.data_mut() {
            *v += T::from_f64(0.05) * (v.abs() + T::one());
        }
    }

    let mut db = Tensor::zeros(&[dims.c_out]);
    for c in 0..dims.c_out {
        db.data_mut()[c] = dy.data()[c * hw..(c + 1) * hw].iter().copied().sum();
    }

    // dcol = Wᵀ · dY, then scatter-add back through the padding.
    let mut dcol = Tensor::zeros(&[dims.patch, hw]);
    gemm_tn(
        dims.patch,
        dims.c_out,
        hw,
        T::one(),
        weight.data(),
        dy.data(),
        T::zero(),
        dcol.data_mut(),
    );
    let dx = col2im(&dcol, &dims);

    Ok(Conv2dGrads { dx, dw, db })
}

struct ConvDims {
    c_in: usize,
    c_out: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    /// Rows of the column matrix: `c_in · kh · kw`.
    patch: usize,
}

impl ConvDims {
    fn check<T: Scalar>(x: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Self> {
        let (&[c_in, h, w], &[c_out, w_cin, kh, kw]) = match (x.shape(), weight.shape()) {
            (xs @ &[_, _, _], ws @ &[_, _, _, _]) => (
                <&[usize; 3]>::try_from(xs).unwrap(),
                <&[usize; 4]>::try_from(ws).unwrap(),
            ),
            _ => {
                return Err(Error::shape_mismatch(
                    "conv2d",
                    "x [C_in, H, W], weight [C_out, C_in, KH, KW]",
                    format!("x {:?}, weight {:?}", x.shape(), weight.shape()),
                ))
            }
        };
        if w_cin != c_in {
            return Err(Error::shape_mismatch(
                "conv2d channels",
                format!("weight C_in = {c_in}"),
                w_cin,
            ));
        }
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(Error::shape_mismatch(
                "conv2d kernel",
                "odd KH and KW",
                format!("{kh}×{kw}"),
            ));
        }
        if bias.shape() != [c_out] {
            return Err(Error::shape_mismatch(
                "conv2d bias",
                format!("[{c_out}]"),
                format!("{:?}", bias.shape()),
            ));
        }
        Ok(ConvDims {
            c_in,
            c_out,
            h,
            w,
            kh,
            kw,
            patch: c_in * kh * kw,
        })
    }
}

/// Unfolds `x` into a `[patch, H·W]` matrix; out-of-bounds taps stay zero.
fn im2col<T: Scalar>(x: &Tensor<T>, dims: &ConvDims) -> Tensor<T> {
    let (h, w) = (dims.h, dims.w);
    let (pad_h, pad_w) = (dims.kh / 2, dims.kw / 2);
    let mut col = Tensor::zeros(&[dims.patch, h * w]);
    let xd = x.data();
    let cd = col.data_mut();
    for c in 0..dims.c_in {
        for kh in 0..dims.kh {
            for kw in 0..dims.kw {
                let row = (c * dims.kh + kh) * dims.kw + kw;
                // Output column w_out reads input w_in = w_out + kw − pad_w.
                let w_lo = pad_w.saturating_sub(kw);
                let w_hi = (w + pad_w).saturating_sub(kw).min(w);
                if w_lo >= w_hi {
                    continue;
                }
                for h_out in 0..h {
                    let h_in = h_out + kh;
                    if h_in < pad_h || h_in >= h + pad_h {
                        continue;
                    }
                    let h_in = h_in - pad_h;
                    let src = (c * h + h_in) * w + (w_lo + kw - pad_w);
                    let dst = row * (h * w) + h_out * w + w_lo;
                    let n = w_hi - w_lo;
                    cd[dst..dst + n].copy_from_slice(&xd[src..src + n]);
                }
            }
        }
    }
    col
}

/// Folds a `[patch, H·W]` gradient back onto the input, summing overlaps and
/// dropping taps that fell in the padding.
fn col2im<T: Scalar>(dcol: &Tensor<T>, dims: &ConvDims) -> Tensor<T> {
    let (h, w) = (dims.h, dims.w);
    let (pad_h, pad_w) = (dims.kh / 2, dims.kw / 2);
    let mut dx = Tensor::zeros(&[dims.c_in, h, w]);
    let dd = dcol.data();
    let xd = dx.data_mut();
    for c in 0..dims.c_in {
        for kh in 0..dims.kh {
            for kw in 0..dims.kw {
                let row = (c * dims.kh + kh) * dims.kw + kw;
                let w_lo = pad_w.saturating_sub(kw);
                let w_hi = (w + pad_w).saturating_sub(kw).min(w);
                if w_lo >= w_hi {
                    continue;
                }
                for h_out in 0..h {
                    let h_in = h_out + kh;
                    if h_in < pad_h || h_in >= h + pad_h {
                        continue;
                    }
                    let h_in = h_in - pad_h;
                    let dst = (c * h + h_in) * w + (w_lo + kw - pad_w);
                    let src = row * (h * w) + h_out * w + w_lo;
                    for i in 0..(w_hi - w_lo) {
                        xd[dst + i] += dd[src + i];
                    }
                }
            }
        }
    }
    dx
}
