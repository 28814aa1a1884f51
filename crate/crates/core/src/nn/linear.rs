//! Fully-connected layer applied along the last axis.

use crate::error::{Error, Result};
use crate::nn::tensor::{gemm_nn, gemm_nt, gemm_tn, Scalar, Tensor};

/// `y = x·Wᵀ + b` where `x` is `[.., in]`, `w` is `[out, in]`, `b` is
/// `[out]`; all leading axes of `x` are treated as batch rows.
pub fn linear<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (rows, n_in) = split_rows(x)?;
    let (n_out, w_in) = weight_dims(w)?;
    if w_in != n_in || b.shape() != [n_out] {
        return Err(Error::shape_mismatch(
            "linear",
            format!("w [out, {n_in}], b [out]"),
            format!("w {:?}, b {:?}", w.shape(), b.shape()),
        ));
    }
    let mut out_shape = x.shape().to_vec();
    *out_shape.last_mut().unwrap() = n_out;
    let mut y = Tensor::zeros(&out_shape);
    gemm_nt(rows, n_in, n_out, T::one(), x.data(), w.data(), T::zero(), y.data_mut());
    for r in 0..rows {
        let row = &mut y.data_mut()[r * n_out..(r + 1) * n_out];
        for (v, bv) in row.iter_mut().zip(b.data()) {
            *v += *bv;
        }
    }
    Ok(y)
}

pub struct LinearGrads<T> {
    pub dx: Tensor<T>,
    pub dw: Tensor<T>,
    pub db: Tensor<T>,
}

pub fn linear_backward<T: Scalar>(
    dy: &Tensor<T>,
    x: &Tensor<T>,
    w: &Tensor<T>,
) -> Result<LinearGrads<T>> {
    let (rows, n_in) = split_rows(x)?;
    let (n_out, _) = weight_dims(w)?;
    let (dy_rows, dy_cols) = split_rows(dy)?;
    if dy_rows != rows || dy_cols != n_out {
        return Err(Error::shape_mismatch(
            "linear_backward",
            format!("dy [{rows}, {n_out}]"),
            format!("{:?}", dy.shape()),
        ));
    }

    let mut dx = Tensor::zeros(x.shape());
    gemm_nn(rows, n_out, n_in, T::one(), dy.data(), w.data(), T::zero(), dx.data_mut());

    let mut dw = Tensor::zeros(w.shape());
    gemm_tn(n_out, rows, n_in, T::one(), dy.data(), x.data(), T::zero(), dw.data_mut());

    let mut db = Tensor::zeros(&[n_out]);
    for r in 0..rows {
        let row = &dy.data()[r * n_out..(r + 1) * n_out];
        for (acc, v) in db.data_mut().iter_mut().zip(row) {
            *acc += *v;
        }
    }
    Ok(LinearGrads { dx, dw, db })
}

fn split_rows<T: Scalar>(x: &Tensor<T>) -> Result<(usize, usize)> {
    match x.shape() {
        [] => Err(Error::shape_mismatch("linear", "rank >= 1", "rank 0")),
        s => {
            let last = *s.last().unwrap();
            Ok((x.len() / last.max(1), last))
        }
    }
}

fn weight_dims<T: Scalar>(w: &Tensor<T>) -> Result<(usize, usize)> {
    match w.shape() {
        [o, i] => Ok((*o, *i)),
        s => Err(Error::shape_mismatch("linear weight", "[out, in]", format!("{s:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn forward_known_values() {
        // x = [[1, 2]], W = [[1, 0], [0, 1], [1, 1]], b = [0.5, -0.5, 0]
        let x = Tensor::from_vec(&[1, 2], vec![1.0f64, 2.0]).unwrap();
        let w = Tensor::from_vec(&[3, 2], vec![1., 0., 0., 1., 1., 1.]).unwrap();
        let b = Tensor::from_vec(&[3], vec![0.5, -0.5, 0.0]).unwrap();
        let y = linear(&x, &w, &b).unwrap();
        assert_eq!(y.shape(), &[1, 3]);
        assert_eq!(y.data(), &[1.5, 1.5, 3.0]);
    }

    #[test]
    fn forward_keeps_leading_axes() {
        let x = Tensor::zeros(&[4, 7, 3]);
        let w = Tensor::zeros(&[5, 3]);
        let b = Tensor::<f32>::zeros(&[5]);
        let y = linear(&x, &w, &b).unwrap();
        assert_eq!(y.shape(), &[4, 7, 5]);
    }

    #[test]
    fn backward_matches_central_differences() {
        let x = Tensor::from_vec(&[2, 3], vec![0.1f64, -0.2, 0.3, 0.5, -0.6, 0.9]).unwrap();
        let w = Tensor::from_vec(&[2, 3], vec![0.4, 0.1, -0.3, 0.2, -0.7, 0.5]).unwrap();
        let b = Tensor::from_vec(&[2], vec![0.05, -0.02]).unwrap();
        // Scalar loss: sum of squares of outputs.
        let loss = |x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>| -> f64 {
            linear(x, w, b)
                .unwrap()
                .data()
                .iter()
                .map(|v| v * v)
                .sum()
        };
        let y = linear(&x, &w, &b).unwrap();
        let dy = Tensor::from_fn(y.shape(), |i| 2.0 * y.data()[i]);
        let grads = linear_backward(&dy, &x, &w).unwrap();

        let h = 1e-6;
        for i in 0..x.len() {
            let mut xp = x.clone();
            xp.data_mut()[i] += h;
            let mut xm = x.clone();
            xm.data_mut()[i] -= h;
            let numeric = (loss(&xp, &w, &b) - loss(&xm, &w, &b)) / (2.0 * h);
            assert_abs_diff_eq!(grads.dx.data()[i], numeric, epsilon = 1e-6);
        }
        for i in 0..w.len() {
            let mut wp = w.clone();
            wp.data_mut()[i] += h;
            let mut wm = w.clone();
            wm.data_mut()[i] -= h;
            let numeric = (loss(&x, &wp, &b) - loss(&x, &wm, &b)) / (2.0 * h);
            assert_abs_diff_eq!(grads.dw.data()[i], numeric, epsilon = 1e-6);
        }
        for i in 0..b.len() {
            let mut bp = b.clone();
            bp.data_mut()[i] += h;
            let mut bm = b.clone();
            bm.data_mut()[i] -= h;
            let numeric = (loss(&x, &w, &bp) - loss(&x, &w, &bm)) / (2.0 * h);
            assert_abs_diff_eq!(grads.db.data()[i], numeric, epsilon = 1e-6);
        }
    }
}
