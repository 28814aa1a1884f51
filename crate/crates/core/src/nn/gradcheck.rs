//! Finite-difference verification of backward passes.
//!
//! The loss closure is called once with `compute_grads = true` to populate
//! analytic gradients, then repeatedly with `compute_grads = false` while
//! individual parameter coordinates are perturbed. Runs in f64; tolerances
//! elsewhere in the crate assume that.

use crate::error::{Error, Result};
use crate::nn::store::ParameterStore;
use crate::nn::tensor::Tensor;
use rand::Rng;

pub struct GradCheckReport {
    /// Max over sampled coordinates of
    /// `|analytic − numeric| / max(1, |analytic|, |numeric|)`.
    pub max_rel_err: f64,
    pub worst_param: String,
    pub worst_index: usize,
    /// Total coordinates probed and compared.
    pub checked: usize,
    /// Coordinates whose probe interval contains a ReLU or max-pool slope
    /// switch, excluded because the central difference is not a derivative
    /// estimate there.
    pub skipped: usize,
}

/// Checks analytic gradients against central differences with step
/// `h = 1e−5 · max(1, |x|)`. At most `samples_per_param` coordinates are
/// probed per parameter (all of them if the parameter is small enough).
///
/// The loss is only piecewise smooth (ReLU kinks, pooling argmax switches),
/// and a central difference across a kink measures the average of the two
/// one-sided slopes, not the derivative — zero-initialized biases even sit
/// exactly on a kink when their channel sees an all-zero window. The second
/// difference `|f(x+h) + f(x−h) − 2·f(x)| / 2h` equals that kink-induced
/// error exactly (and is ~`h·f″/2 ≈ 0` where smooth), so coordinates where
/// it is material are skipped and counted in [`GradCheckReport::skipped`]
/// rather than compared against an oracle that does not exist there.
pub fn grad_check<F, R>(
    store: &mut ParameterStore<f64>,
    mut loss: F,
    samples_per_param: usize,
    rng: &mut R,
) -> Result<GradCheckReport>
where
    F: FnMut(&mut ParameterStore<f64>, bool) -> Result<f64>,
    R: Rng,
{
    store.zero_grads();
    let base = loss(store, true)?;
    if !base.is_finite() {
        return Err(Error::NonFinite { op: "grad_check loss".into() });
    }

    let names: Vec<String> = store.names().map(String::from).collect();
    let analytic: Vec<Tensor<f64>> = names
        .iter()
        .map(|n| store.grad(n).map(Clone::clone))
        .collect::<Result<_>>()?;

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        checked: 0,
        skipped: 0,
    };

    for (name, grads) in names.iter().zip(&analytic) {
        let len = grads.len();
        let coords: Vec<usize> = if len <= samples_per_param {
            (0..len).collect()
        } else {
            rand::seq::index::sample(rng, len, samples_per_param).into_vec()
        };
        for idx in coords {
            let x = store.get(name)?.data()[idx];
            let h = 1e-5 * x.abs().max(1.0);

            store.get_mut(name)?.data_mut()[idx] = x + h;
            let lp = loss(store, false)?;
            store.get_mut(name)?.data_mut()[idx] = x - h;
            let lm = loss(store, false)?;
            store.get_mut(name)?.data_mut()[idx] = x;

            let numeric = (lp - lm) / (2.0 * h);
            let kink = (lp + lm - 2.0 * base).abs() / (2.0 * h);
            if kink / 1.0f64.max(numeric.abs()) > 5e-5 {
                report.skipped += 1;
                continue;
            }
            let a = grads.data()[idx];
            let rel = (a - numeric).abs() / 1.0f64.max(a.abs()).max(numeric.abs());
            report.checked += 1;
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst_param = name.clone();
                report.worst_index = idx;
            }
        }
    }
    Ok(report)
}
