//! 2× scale changes used by the U-net: max-pooling down, nearest-neighbor up.

use crate::error::{Error, Result};
use crate::nn::tensor::{Scalar, Tensor};

/// 2×2 max-pool over `[C, H, W]` with even `H`, `W` → `[C, H/2, W/2]` plus
/// the flat input index of each window's maximum (ties go to the first cell
/// in row-major order), which the backward pass routes gradient through.
pub fn downsample2<T: Scalar>(x: &Tensor<T>) -> Result<(Tensor<T>, Vec<usize>)> {
    let &[c, h, w] = x.shape() else {
        return Err(Error::shape_mismatch("downsample2", "[C, H, W]", format!("{:?}", x.shape())));
    };
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::shape_mismatch("downsample2", "even H and W", format!("{h}×{w}")));
    }
    let (ho, wo) = (h / 2, w / 2);
    let mut y = Tensor::zeros(&[c, ho, wo]);
    let mut argmax = vec![0usize; c * ho * wo];
    let xd = x.data();
    for ci in 0..c {
        for i in 0..ho {
            for j in 0..wo {
                let base = (ci * h + 2 * i) * w + 2 * j;
                let mut best_idx = base;
                let mut best = xd[base];
                for (dh, dw) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + dh * w + dw;
                    if xd[idx] > best {
                        best = xd[idx];
                        best_idx = idx;
                    }
                }
                let o = (ci * ho + i) * wo + j;
                y.data_mut()[o] = best;
                argmax[o] = best_idx;
            }
        }
    }
    Ok((y, argmax))
}

pub fn downsample2_backward<T: Scalar>(
    dy: &Tensor<T>,
    argmax: &[usize],
    input_shape: &[usize],
) -> Tensor<T> {
    debug_assert_eq!(dy.len(), argmax.len());
    let mut dx = Tensor::zeros(input_shape);
    for (g, &idx) in dy.data().iter().zip(argmax) {
        dx.data_mut()[idx] += *g;
    }
    dx
}

/// Nearest-neighbor upsampling of `[C, H, W]` → `[C, 2H, 2W]`.
pub fn upsample2<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let &[c, h, w] = x.shape() else {
        return Err(Error::shape_mismatch("upsample2", "[C, H, W]", format!("{:?}", x.shape())));
    };
    let mut y = Tensor::zeros(&[c, 2 * h, 2 * w]);
    for ci in 0..c {
        for i in 0..2 * h {
            for j in 0..2 * w {
                let v = x.data()[(ci * h + i / 2) * w + j / 2];
                y.data_mut()[(ci * 2 * h + i) * 2 * w + j] = v;
            }
        }
    }
    Ok(y)
}

/// Each input cell fed a 2×2 block, so its gradient is that block's sum.
pub fn upsample2_backward<T: Scalar>(dy: &Tensor<T>) -> Result<Tensor<T>> {
    let &[c, h2, w2] = dy.shape() else {
        return Err(Error::shape_mismatch("upsample2_backward", "[C, 2H, 2W]", format!("{:?}", dy.shape())));
    };
    if h2 % 2 != 0 || w2 % 2 != 0 {
        return Err(Error::shape_mismatch("upsample2_backward", "even dims", format!("{h2}×{w2}")));
    }
    let (h, w) = (h2 / 2, w2 / 2);
    let mut dx = Tensor::zeros(&[c, h, w]);
    for ci in 0..c {
        for i in 0..h2 {
            for j in 0..w2 {
                dx.data_mut()[(ci * h + i / 2) * w + j / 2] += dy.data()[(ci * h2 + i) * w2 + j];
            }
        }
    }
    Ok(dx)
}
