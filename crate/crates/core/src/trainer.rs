//! Deterministic training loop: one fresh segment per recording each epoch,
//! batch-mean gradients, Adam with a staircase learning rate, a per-step
//! scalar log, and atomic checkpoints.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;

use crate::config::{Config, Frontend};
use crate::dataset::sampler::segment_rng;
use crate::dataset::{sample_segment, Recording, Segment};
use crate::dsp::compute_frontend;
use crate::error::{Error, Result};
use crate::model::{forward_backward, LossBreakdown, ModelShape};
use crate::nn::adam::adam_step;
use crate::nn::{ParameterStore, Scalar, Tensor};

pub use crate::nn::checkpoint::{load_store as load_checkpoint, save_store as save_checkpoint};

/// Staircase schedule: `lr0 · lr_decay^⌊step / lr_decay_steps⌋`.
pub fn lr_at(step: u64, cfg: &Config) -> f64 {
    cfg.lr0 * cfg.lr_decay.powi((step / cfg.lr_decay_steps) as i32)
}

/// Scalars recorded after one optimizer step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogRow {
    /// Optimizer steps completed, starting at 1.
    pub step: u64,
    /// Learning rate the step used.
    pub lr: f64,
    /// Batch-mean loss at the pre-update parameters.
    pub loss: LossBreakdown,
}

/// The training curve, one row per optimizer step.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub rows: Vec<LogRow>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,lr,recon_l2,bce_post1,bce_post2,total\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.step, r.lr, r.loss.recon_l2, r.loss.bce_post1, r.loss.bce_post2, r.loss.total
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Network input and target for one segment: the spectrogram as `[1, F, T]`
/// and the label roll as `[88, T]`.
pub fn segment_tensors<S: Scalar>(
    seg: &Segment,
    frontend: Frontend,
) -> Result<(Tensor<S>, Tensor<S>)> {
    let spec = compute_frontend(&seg.audio, frontend)?;
    let (f, t) = (spec.values.shape()[0], spec.values.shape()[1]);
    let x = Tensor::from_fn(&[1, f, t], |i| S::from_f64(spec.values.data()[i]));
    Ok((x, seg.roll.values.cast()))
}

/// One optimizer step on an explicit batch: gradients are accumulated over
/// the whole batch, scaled to their mean, and applied with Adam at `lr`.
///
/// Returns the batch-mean loss, measured at the pre-update parameters; its
/// `total` is exactly the sum of the three term means. A non-finite sample
/// loss aborts the step with [`Error::TrainDiverged`].
pub fn training_step<S: Scalar>(
    shape: &ModelShape,
    store: &mut ParameterStore<S>,
    batch: &[(Tensor<S>, Tensor<S>)],
    lr: f64,
) -> Result<LossBreakdown> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("training batch has no segments".into()));
    }
    store.zero_grads();
    let (mut recon_l2, mut bce_post1, mut bce_post2) = (0.0, 0.0, 0.0);
    for (x, roll) in batch {
        let loss = forward_backward(shape, store, x, roll)?;
        if !loss.total.is_finite() {
            return Err(Error::TrainDiverged {
                step: store.step(),
                msg: format!("non-finite batch loss {loss:?}"),
            });
        }
        recon_l2 += loss.recon_l2;
        bce_post1 += loss.bce_post1;
        bce_post2 += loss.bce_post2;
    }
    let n = batch.len() as f64;
    store.scale_grads(S::from_f64(1.0 / n));
    adam_step(store, S::from_f64(lr))?;
    let (recon_l2, bce_post1, bce_post2) = (recon_l2 / n, bce_post1 / n, bce_post2 / n);
    Ok(LossBreakdown { recon_l2, bce_post1, bce_post2, total: recon_l2 + bce_post1 + bce_post2 })
}

/// Progress summary handed to the per-epoch observer.
#[derive(Clone, Copy, Debug)]
pub struct EpochStats {
    /// 1-based index of the epoch that just finished.
    pub epoch: usize,
    /// Optimizer steps completed so far.
    pub steps: u64,
    /// Mean of the epoch's batch losses.
    pub mean_total: f64,
}

/// What [`train`] returns: the final parameters plus the training curve.
pub struct Trained<S: Scalar> {
    pub store: ParameterStore<S>,
    pub log: TrainLog,
}

/// Runs the whole loop. Each epoch draws one fresh segment per recording
/// (seeded by run seed, epoch and recording index), shuffles the draw order,
/// and steps once per `cfg.batch_size` segments (a final short batch still
/// steps). The observer runs after every epoch; when `cfg.out_dir` is set,
/// checkpoints are written every `cfg.checkpoint_every_epochs` epochs and
/// once more at the end.
pub fn train<S, F>(recordings: &[Recording], cfg: &Config, mut on_epoch: F) -> Result<Trained<S>>
where
    S: Scalar,
    F: FnMut(&EpochStats, &ParameterStore<S>) -> Result<()>,
{
    cfg.validate()?;
    if recordings.is_empty() {
        return Err(Error::EmptyInput("no recordings to train on".into()));
    }
    if let Some(dir) = &cfg.out_dir {
        fs::create_dir_all(dir)?;
    }
    let shape = ModelShape::from_config(cfg);
    let mut store = shape.init_params::<S>(cfg.seed)?;
    let mut log = TrainLog::default();

    'epochs: for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..recordings.len()).collect();
        order.shuffle(&mut segment_rng(cfg.seed, epoch as u64, u64::MAX));

        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            if cfg.max_steps.is_some_and(|m| store.step() >= m) {
                break 'epochs;
            }
            let mut batch = Vec::with_capacity(chunk.len());
            let mut ids = Vec::with_capacity(chunk.len());
            for &idx in chunk {
                let seg = sample_segment(&recordings[idx], cfg.seed, epoch as u64, idx as u64)?;
                ids.push(format!("{}@{}", seg.source_id, seg.start_sample));
                batch.push(segment_tensors(&seg, cfg.frontend)?);
            }
            let lr = lr_at(store.step(), cfg);
            let loss = match training_step(&shape, &mut store, &batch, lr) {
                Ok(loss) => loss,
                Err(e @ (Error::TrainDiverged { .. } | Error::NonFinite { .. })) => {
                    return Err(divergence_error(e, store.step(), &ids, cfg.out_dir.as_deref()));
                }
                Err(e) => return Err(e),
            };
            log.rows.push(LogRow { step: store.step(), lr, loss });
            total += loss.total;
            batches += 1;
        }

        let stats = EpochStats {
            epoch: epoch + 1,
            steps: store.step(),
            mean_total: total / batches as f64,
        };
        on_epoch(&stats, &store)?;
        if let Some(dir) = &cfg.out_dir {
            if (epoch + 1) % cfg.checkpoint_every_epochs == 0 {
                let name = format!("checkpoint_epoch_{:05}.ckpt", epoch + 1);
                save_checkpoint(&store.cast::<f32>(), &dir.join(name))?;
            }
        }
    }

    if let Some(dir) = &cfg.out_dir {
        save_checkpoint(&store.cast::<f32>(), &dir.join("checkpoint_final.ckpt"))?;
    }
    Ok(Trained { store, log })
}

/// Wraps a divergence (or non-finite) error with the offending batch and,
/// when an output directory exists, dumps the same details to
/// `diverged.json` next to the checkpoints.
fn divergence_error(source: Error, step: u64, batch_ids: &[String], out_dir: Option<&Path>) -> Error {
    let detail = match &source {
        Error::TrainDiverged { msg, .. } => msg.clone(),
        other => other.to_string(),
    };
    let mut msg = format!("{detail}; batch [{}]", batch_ids.join(", "));
    if let Some(dir) = out_dir {
        let path = dir.join("diverged.json");
        let dump = serde_json::json!({
            "step": step,
            "batch": batch_ids,
            "error": detail,
        });
        msg += &match fs::write(&path, dump.to_string()) {
            Ok(()) => format!("; diagnostics in {}", path.display()),
            Err(e) => format!("; diagnostics not written: {e}"),
        };
    }
    Error::TrainDiverged { step, msg }
}
