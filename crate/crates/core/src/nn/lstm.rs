//! LSTM and bidirectional LSTM over `[T, D]` sequences, with full
//! backpropagation through time.
//!
//! Gate layout inside every `4H` axis is `[input | forget | cell | output]`.
//! The input projection for all timesteps is batched into one GEMM; the
//! recurrent projection runs per step.

use crate::error::{Error, Result};
use crate::nn::activation::sigmoid_scalar;
use crate::nn::tensor::{gemm_nn, gemm_nt, gemm_tn, Scalar, Tensor};

/// Borrowed parameter triple for one direction: `w_ih: [4H, D]`,
/// `w_hh: [4H, H]`, `b: [4H]`.
#[derive(Clone, Copy)]
pub struct LstmParamRefs<'a, T> {
    pub w_ih: &'a Tensor<T>,
    pub w_hh: &'a Tensor<T>,
    pub b: &'a Tensor<T>,
}

/// Per-step state saved by the forward pass for BPTT.
pub struct LstmCache<T> {
    /// Post-activation gates, `[T, 4H]`.
    gates: Tensor<T>,
    /// Cell states `c_t`, `[T, H]`.
    c: Tensor<T>,
    /// `tanh(c_t)`, `[T, H]`.
    tanh_c: Tensor<T>,
    /// Hidden states `h_t`, `[T, H]`.
    h: Tensor<T>,
}

pub struct LstmGrads<T> {
    pub dx: Tensor<T>,
    pub dw_ih: Tensor<T>,
    pub dw_hh: Tensor<T>,
    pub db: Tensor<T>,
}

fn check_dims<T: Scalar>(x: &Tensor<T>, p: &LstmParamRefs<T>) -> Result<(usize, usize, usize)> {
    let &[t, d] = x.shape() else {
        return Err(Error::shape_mismatch("lstm input", "[T, D]", format!("{:?}", x.shape())));
    };
    if t == 0 {
        return Err(Error::EmptyInput("lstm sequence".into()));
    }
    let &[four_h, w_d] = p.w_ih.shape() else {
        return Err(Error::shape_mismatch("lstm w_ih", "[4H, D]", format!("{:?}", p.w_ih.shape())));
    };
    if four_h % 4 != 0 || w_d != d {
        return Err(Error::shape_mismatch(
            "lstm w_ih",
            format!("[4H, {d}]"),
            format!("{:?}", p.w_ih.shape()),
        ));
    }
    let h = four_h / 4;
    if p.w_hh.shape() != [four_h, h] || p.b.shape() != [four_h] {
        return Err(Error::shape_mismatch(
            "lstm params",
            format!("w_hh [{four_h}, {h}], b [{four_h}]"),
            format!("w_hh {:?}, b {:?}", p.w_hh.shape(), p.b.shape()),
        ));
    }
    Ok((t, d, h))
}

/// Runs one direction over the sequence; initial hidden and cell state are
/// zero. Returns hidden states `[T, H]` and the cache for the backward pass.
pub fn lstm_forward<T: Scalar>(
    x: &Tensor<T>,
    p: LstmParamRefs<T>,
) -> Result<(Tensor<T>, LstmCache<T>)> {
    let (t_len, d, h) = check_dims(x, &p)?;
    let four_h = 4 * h;

    // Input contribution for every step at once: [T, 4H] = x · w_ihᵀ + b.
    let mut a = Tensor::zeros(&[t_len, four_h]);
    gemm_nt(t_len, d, four_h, T::one(), x.data(), p.w_ih.data(), T::zero(), a.data_mut());
    for t in 0..t_len {
        let row = &mut a.data_mut()[t * four_h..(t + 1) * four_h];
        for (v, bv) in row.iter_mut().zip(p.b.data()) {
            *v += *bv;
        }
    }

    let mut cache = LstmCache {
        gates: Tensor::zeros(&[t_len, four_h]),
        c: Tensor::zeros(&[t_len, h]),
        tanh_c: Tensor::zeros(&[t_len, h]),
        h: Tensor::zeros(&[t_len, h]),
    };
    let mut h_prev = vec![T::zero(); h];
    let mut c_prev = vec![T::zero(); h];
    let mut a_t = vec![T::zero(); four_h];

    for t in 0..t_len {
        a_t.copy_from_slice(&a.data()[t * four_h..(t + 1) * four_h]);
        // a_t += w_hh · h_prev
        gemm_nn(four_h, h, 1, T::one(), p.w_hh.data(), &h_prev, T::one(), &mut a_t);

        let gates = &mut cache.gates.data_mut()[t * four_h..(t + 1) * four_h];
        for j in 0..h {
            gates[j] = sigmoid_scalar(a_t[j]);
            gates[h + j] = sigmoid_scalar(a_t[h + j]);
            gates[2 * h + j] = a_t[2 * h + j].tanh();
            gates[3 * h + j] = sigmoid_scalar(a_t[3 * h + j]);
        }
        for j in 0..h {
            let (i_g, f_g, g_g, o_g) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
            let c_t = f_g * c_prev[j] + i_g * g_g;
            let tc = c_t.tanh();
            cache.c.data_mut()[t * h + j] = c_t;
            cache.tanh_c.data_mut()[t * h + j] = tc;
            cache.h.data_mut()[t * h + j] = o_g * tc;
        }
        h_prev.copy_from_slice(&cache.h.data()[t * h..(t + 1) * h]);
        c_prev.copy_from_slice(&cache.c.data()[t * h..(t + 1) * h]);
    }

    let y = cache.h.clone();
    Ok((y, cache))
}

/// BPTT for one direction. `dh` is the upstream gradient on the hidden-state
/// sequence `[T, H]`.
pub fn lstm_backward<T: Scalar>(
    dh: &Tensor<T>,
    x: &Tensor<T>,
    p: LstmParamRefs<T>,
    cache: &LstmCache<T>,
) -> Result<LstmGrads<T>> {
    let (t_len, d, h) = check_dims(x, &p)?;
    let four_h = 4 * h;
    if dh.shape() != [t_len, h] {
        return Err(Error::shape_mismatch(
            "lstm_backward dh",
            format!("[{t_len}, {h}]"),
            format!("{:?}", dh.shape()),
        ));
    }

    // Pre-activation gate gradients per step, filled back to front.
    let mut da = Tensor::zeros(&[t_len, four_h]);
    let mut dh_rec = vec![T::zero(); h];
    let mut dc_rec = vec![T::zero(); h];

    for t in (0..t_len).rev() {
        let gates = &cache.gates.data()[t * four_h..(t + 1) * four_h];
        let tc = &cache.tanh_c.data()[t * h..(t + 1) * h];
        let da_t = &mut da.data_mut()[t * four_h..(t + 1) * four_h];
        for j in 0..h {
            let (i_g, f_g, g_g, o_g) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
            let c_prev = if t == 0 { T::zero() } else { cache.c.data()[(t - 1) * h + j] };
            let dh_t = dh.data()[t * h + j] + dh_rec[j];
            let d_o = dh_t * tc[j];
            let dc = dc_rec[j] + dh_t * o_g * (T::one() - tc[j] * tc[j]);
            let d_i = dc * g_g;
            let d_f = dc * c_prev;
            let d_g = dc * i_g;
            dc_rec[j] = dc * f_g;
            da_t[j] = d_i * i_g * (T::one() - i_g);
            da_t[h + j] = d_f * f_g * (T::one() - f_g);
            da_t[2 * h + j] = d_g * (T::one() - g_g * g_g);
            da_t[3 * h + j] = d_o * o_g * (T::one() - o_g);
        }
        // dh_rec (for step t−1) = w_hhᵀ · da_t
        gemm_tn(h, four_h, 1, T::one(), p.w_hh.data(), da_t, T::zero(), &mut dh_rec);
    }

    let mut dx = Tensor::zeros(&[t_len, d]);
    gemm_nn(t_len, four_h, d, T::one(), da.data(), p.w_ih.data(), T::zero(), dx.data_mut());

    let mut dw_ih = Tensor::zeros(&[four_h, d]);
    gemm_tn(four_h, t_len, d, T::one(), da.data(), x.data(), T::zero(), dw_ih.data_mut());

    // Hidden states shifted one step: row t holds h_{t−1} (zeros at t = 0).
    let mut h_prev_rows = Tensor::zeros(&[t_len, h]);
    h_prev_rows.data_mut()[h..].copy_from_slice(&cache.h.data()[..(t_len - 1) * h]);
    let mut dw_hh = Tensor::zeros(&[four_h, h]);
    gemm_tn(four_h, t_len, h, T::one(), da.data(), h_prev_rows.data(), T::zero(), dw_hh.data_mut());

    let mut db = Tensor::zeros(&[four_h]);
    for t in 0..t_len {
        let row = &da.data()[t * four_h..(t + 1) * four_h];
        for (acc, v) in db.data_mut().iter_mut().zip(row) {
            *acc += *v;
        }
    }

    Ok(LstmGrads { dx, dw_ih, dw_hh, db })
}

fn reverse_rows<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let &[t_len, d] = x.shape() else { unreachable!() };
    let mut out = Tensor::zeros(&[t_len, d]);
    for t in 0..t_len {
        out.data_mut()[t * d..(t + 1) * d]
            .copy_from_slice(&x.data()[(t_len - 1 - t) * d..(t_len - t) * d]);
    }
    out
}

pub struct BiLstmCache<T> {
    fw: LstmCache<T>,
    bw: LstmCache<T>,
    x_rev: Tensor<T>,
}

pub struct BiLstmGrads<T> {
    pub dx: Tensor<T>,
    pub fw: LstmGrads<T>,
    pub bw: LstmGrads<T>,
}

/// Bidirectional pass: `[T, D]` → `[T, 2H]` with the forward direction in
/// columns `0..H` and the time-reversed direction in columns `H..2H`.
pub fn bilstm_forward<T: Scalar>(
    x: &Tensor<T>,
    fw: LstmParamRefs<T>,
    bw: LstmParamRefs<T>,
) -> Result<(Tensor<T>, BiLstmCache<T>)> {
    let (t_len, _, h) = check_dims(x, &fw)?;
    let x_rev = reverse_rows(x);
    let (y_fw, fw_cache) = lstm_forward(x, fw)?;
    let (y_bw_rev, bw_cache) = lstm_forward(&x_rev, bw)?;
    let y_bw = reverse_rows(&y_bw_rev);

    let mut y = Tensor::zeros(&[t_len, 2 * h]);
    for t in 0..t_len {
        y.data_mut()[t * 2 * h..t * 2 * h + h].copy_from_slice(&y_fw.data()[t * h..(t + 1) * h]);
        y.data_mut()[t * 2 * h + h..(t + 1) * 2 * h]
            .copy_from_slice(&y_bw.data()[t * h..(t + 1) * h]);
    }
    Ok((y, BiLstmCache { fw: fw_cache, bw: bw_cache, x_rev }))
}

pub fn bilstm_backward<T: Scalar>(
    dy: &Tensor<T>,
    x: &Tensor<T>,
    fw: LstmParamRefs<T>,
    bw: LstmParamRefs<T>,
    cache: &BiLstmCache<T>,
) -> Result<BiLstmGrads<T>> {
    let (t_len, _, h) = check_dims(x, &fw)?;
    if dy.shape() != [t_len, 2 * h] {
        return Err(Error::shape_mismatch(
            "bilstm_backward dy",
            format!("[{t_len}, {}]", 2 * h),
            format!("{:?}", dy.shape()),
        ));
    }
    let mut dh_fw = Tensor::zeros(&[t_len, h]);
    let mut dh_bw = Tensor::zeros(&[t_len, h]);
    for t in 0..t_len {
        dh_fw.data_mut()[t * h..(t + 1) * h]
            .copy_from_slice(&dy.data()[t * 2 * h..t * 2 * h + h]);
        dh_bw.data_mut()[t * h..(t + 1) * h]
            .copy_from_slice(&dy.data()[t * 2 * h + h..(t + 1) * 2 * h]);
    }
    let dh_bw_rev = reverse_rows(&dh_bw);

    let fw_grads = lstm_backward(&dh_fw, x, fw, &cache.fw)?;
    let bw_grads = lstm_backward(&dh_bw_rev, &cache.x_rev, bw, &cache.bw)?;

    let mut dx = fw_grads.dx.clone();
    let bw_dx = reverse_rows(&bw_grads.dx);
    dx.add_scaled(&bw_dx, T::one());
    Ok(BiLstmGrads { dx, fw: fw_grads, bw: bw_grads })
}
