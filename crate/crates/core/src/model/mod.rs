//! Transcription network and its training objective.
//!
//! The transcriber maps a conditioned spectrogram `[1, F, T]` through a U-net
//! and a BiLSTM to an 88-pitch posteriorgram. The reconstructer maps that
//! posteriorgram back to a spectrogram through a second BiLSTM and U-net, and
//! the same transcriber is applied again to the reconstruction. Training
//! minimizes the reconstruction error plus binary cross-entropy of both
//! posteriorgrams against the label roll.
//!
//! Everything here is a free function over a [`ParameterStore`] so the
//! gradient checker can run the exact production code paths.

pub mod unet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{Config, Mode};
use crate::dataset::notes::N_PITCHES;
use crate::dsp;
use crate::error::{Error, Result};
use crate::nn::activation::{sigmoid, sigmoid_backward};
use crate::nn::linear::{linear, linear_backward};
use crate::nn::loss::{bce_backward, bce_loss, mse_backward, mse_loss};
use crate::nn::lstm::{bilstm_backward, bilstm_forward, BiLstmCache, LstmParamRefs};
use crate::nn::store::ParameterStore;
use crate::nn::tensor::{Scalar, Tensor};
use unet::{UNet, UNetCache, DEPTH};

/// Structural hyperparameters; together with a seed they determine every
/// parameter tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelShape {
    /// Spectrogram frequency bins (229 for mel, 176 for the constant-Q
    /// frontend).
    pub f_bins: usize,
    pub enc_channels: [usize; DEPTH],
    /// BiLSTM hidden size per direction.
    pub lstm_hidden: usize,
    pub mode: Mode,
}

impl ModelShape {
    pub fn from_config(cfg: &Config) -> ModelShape {
        ModelShape {
            f_bins: cfg.frontend.n_bins(),
            enc_channels: cfg.enc_channels,
            lstm_hidden: cfg.lstm_hidden,
            mode: cfg.mode,
        }
    }

    fn unet1(&self) -> UNet {
        UNet::new("unet1", self.enc_channels)
    }

    fn unet2(&self) -> UNet {
        UNet::new("unet2", self.enc_channels)
    }

    /// Expected parameter (name, shape) pairs in initialization order.
    pub fn manifest(&self) -> Vec<(String, Vec<usize>)> {
        let h = self.lstm_hidden;
        let mut m = self.unet1().manifest();
        m.extend(bilstm_manifest("lstm1", self.f_bins, h));
        m.extend(linear_manifest("head1", 2 * h, N_PITCHES));
        if self.mode.has_reconstructer() {
            m.extend(bilstm_manifest("lstm2", N_PITCHES, h));
            m.extend(linear_manifest("head2", 2 * h, self.f_bins));
            m.extend(self.unet2().manifest());
        }
        m
    }

    /// Fresh parameters. All values are drawn in f64 and cast, so f32 and
    /// f64 stores initialized from one seed hold identical numbers.
    pub fn init_params<S: Scalar>(&self, seed: u64) -> Result<ParameterStore<S>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParameterStore::new();
        let h = self.lstm_hidden;
        self.unet1().init(&mut store, &mut rng)?;
        init_uniform(&mut store, bilstm_manifest("lstm1", self.f_bins, h), lstm_bound(h), &mut rng)?;
        init_uniform(&mut store, linear_manifest("head1", 2 * h, N_PITCHES), lstm_bound(2 * h), &mut rng)?;
        if self.mode.has_reconstructer() {
            init_uniform(&mut store, bilstm_manifest("lstm2", N_PITCHES, h), lstm_bound(h), &mut rng)?;
            init_uniform(&mut store, linear_manifest("head2", 2 * h, self.f_bins), lstm_bound(2 * h), &mut rng)?;
            self.unet2().init(&mut store, &mut rng)?;
        }
        Ok(store)
    }

    /// Checks that `store` holds exactly the parameters this shape expects.
    /// Missing or extra names surface as [`Error::UnknownParameter`], a wrong
    /// shape as [`Error::ShapeMismatch`] naming the tensor.
    pub fn validate_store<S: Scalar>(&self, store: &ParameterStore<S>) -> Result<()> {
        let manifest = self.manifest();
        for (name, shape) in &manifest {
            let tensor = store.get(name)?;
            if tensor.shape() != shape.as_slice() {
                return Err(Error::shape_mismatch(name, format!("{shape:?}"), format!("{:?}", tensor.shape())));
            }
        }
        let expected: std::collections::HashSet<&str> =
            manifest.iter().map(|(n, _)| n.as_str()).collect();
        for name in store.names() {
            if !expected.contains(name) {
                return Err(Error::UnknownParameter(name.to_string()));
            }
        }
        Ok(())
    }

    fn check_input<S: Scalar>(&self, x: &Tensor<S>) -> Result<()> {
        match x.shape() {
            [1, f, t] if *f == self.f_bins && *t > 0 => Ok(()),
            other => Err(Error::shape_mismatch(
                "model input",
                format!("[1, {}, T]", self.f_bins),
                format!("{other:?}"),
            )),
        }
    }
}

fn bilstm_manifest(prefix: &str, input: usize, hidden: usize) -> Vec<(String, Vec<usize>)> {
    let mut v = Vec::with_capacity(6);
    for dir in ["fw", "bw"] {
        v.push((format!("{prefix}.{dir}.w_ih"), vec![4 * hidden, input]));
        v.push((format!("{prefix}.{dir}.w_hh"), vec![4 * hidden, hidden]));
        v.push((format!("{prefix}.{dir}.b"), vec![4 * hidden]));
    }
    v
}

fn linear_manifest(prefix: &str, input: usize, output: usize) -> Vec<(String, Vec<usize>)> {
    vec![
        (format!("{prefix}.w"), vec![output, input]),
        (format!("{prefix}.b"), vec![output]),
    ]
}

fn lstm_bound(hidden: usize) -> f64 {
    (hidden as f64).sqrt().recip()
}

fn init_uniform<S: Scalar, R: Rng>(
    store: &mut ParameterStore<S>,
    manifest: Vec<(String, Vec<usize>)>,
    bound: f64,
    rng: &mut R,
) -> Result<()> {
    for (name, shape) in manifest {
        let t = Tensor::from_fn(&shape, |_| S::from_f64(rng.gen_range(-bound..bound)));
        store.insert(&name, t)?;
    }
    Ok(())
}

fn lstm_refs<'a, S: Scalar>(
    store: &'a ParameterStore<S>,
    prefix: &str,
) -> Result<LstmParamRefs<'a, S>> {
    Ok(LstmParamRefs {
        w_ih: store.get(&format!("{prefix}.w_ih"))?,
        w_hh: store.get(&format!("{prefix}.w_hh"))?,
        b: store.get(&format!("{prefix}.b"))?,
    })
}

fn accumulate_lstm<S: Scalar>(
    store: &mut ParameterStore<S>,
    prefix: &str,
    grads: &crate::nn::lstm::LstmGrads<S>,
) -> Result<()> {
    store.accumulate_grad(&format!("{prefix}.w_ih"), &grads.dw_ih)?;
    store.accumulate_grad(&format!("{prefix}.w_hh"), &grads.dw_hh)?;
    store.accumulate_grad(&format!("{prefix}.b"), &grads.db)
}

/// `[1, F, T]` tensor viewed as a `[T, F]` sequence.
fn image_to_seq<S: Scalar>(x: &Tensor<S>) -> Result<Tensor<S>> {
    let &[_, f, t] = x.shape() else {
        return Err(Error::shape_mismatch("image_to_seq", "[1, F, T]", format!("{:?}", x.shape())));
    };
    x.clone().reshape(&[f, t])?.transposed2()
}

/// `[T, F]` sequence viewed as a `[1, F, T]` tensor.
fn seq_to_image<S: Scalar>(x: &Tensor<S>) -> Result<Tensor<S>> {
    let &[t, f] = x.shape() else {
        return Err(Error::shape_mismatch("seq_to_image", "[T, F]", format!("{:?}", x.shape())));
    };
    x.transposed2()?.reshape(&[1, f, t])
}

pub struct TranscriberCache<S> {
    unet: UNetCache<S>,
    /// U-net output as the `[T, F]` sequence fed to the BiLSTM.
    u_seq: Tensor<S>,
    bilstm: BiLstmCache<S>,
    /// BiLSTM output `[T, 2H]`.
    seq: Tensor<S>,
    /// Posteriorgram as `[T, 88]` (the sigmoid output, pre-transpose).
    post_seq: Tensor<S>,
}

/// Spectrogram `[1, F, T]` → posteriorgram `[88, T]` in [0, 1].
pub fn transcriber_forward<S: Scalar>(
    shape: &ModelShape,
    store: &ParameterStore<S>,
    x: &Tensor<S>,
) -> Result<(Tensor<S>, TranscriberCache<S>)> {
    shape.check_input(x)?;
    let (u, unet_cache) = shape.unet1().forward(store, x)?;
    let u_seq = image_to_seq(&u)?;
    let (seq, bilstm) =
        bilstm_forward(&u_seq, lstm_refs(store, "lstm1.fw")?, lstm_refs(store, "lstm1.bw")?)?;
    let logits = linear(&seq, store.get("head1.w")?, store.get("head1.b")?)?;
    let post_seq = sigmoid(&logits);
    let post = post_seq.transposed2()?;
    Ok((post, TranscriberCache { unet: unet_cache, u_seq, bilstm, seq, post_seq }))
}

/// Accumulates transcriber parameter gradients for one application and
/// returns the gradient at its spectrogram input.
pub fn transcriber_backward<S: Scalar>(
    shape: &ModelShape,
    store: &mut ParameterStore<S>,
    dpost: &Tensor<S>,
    cache: &TranscriberCache<S>,
) -> Result<Tensor<S>> {
    let dpost_seq = dpost.transposed2()?;
    let dlogits = sigmoid_backward(&dpost_seq, &cache.post_seq);
    let lg = linear_backward(&dlogits, &cache.seq, store.get("head1.w")?)?;
    store.accumulate_grad("head1.w", &lg.dw)?;
    store.accumulate_grad("head1.b", &lg.db)?;
    let bg = bilstm_backward(
        &lg.dx,
        &cache.u_seq,
        lstm_refs(store, "lstm1.fw")?,
        lstm_refs(store, "lstm1.bw")?,
        &cache.bilstm,
    )?;
    accumulate_lstm(store, "lstm1.fw", &bg.fw)?;
    accumulate_lstm(store, "lstm1.bw", &bg.bw)?;
    let du = seq_to_image(&bg.dx)?;
    shape.unet1().backward(store, &du, &cache.unet)
}

pub struct ReconstructerCache<S> {
    /// Posteriorgram as the `[T, 88]` sequence fed to the BiLSTM.
    post_seq: Tensor<S>,
    bilstm: BiLstmCache<S>,
    /// BiLSTM output `[T, 2H]`.
    seq: Tensor<S>,
    unet: UNetCache<S>,
}

/// Posteriorgram `[88, T]` → reconstructed spectrogram `[1, F, T]` in [0, 1].
pub fn reconstructer_forward<S: Scalar>(
    shape: &ModelShape,
    store: &ParameterStore<S>,
    post: &Tensor<S>,
) -> Result<(Tensor<S>, ReconstructerCache<S>)> {
    let post_seq = post.transposed2()?;
    let (seq, bilstm) =
        bilstm_forward(&post_seq, lstm_refs(store, "lstm2.fw")?, lstm_refs(store, "lstm2.bw")?)?;
    let spec_seq = linear(&seq, store.get("head2.w")?, store.get("head2.b")?)?;
    let spec = seq_to_image(&spec_seq)?;
    let (x_rec, unet_cache) = shape.unet2().forward(store, &spec)?;
    Ok((x_rec, ReconstructerCache { post_seq, bilstm, seq, unet: unet_cache }))
}

/// Accumulates reconstructer parameter gradients and returns the gradient at
/// its posteriorgram input.
pub fn reconstructer_backward<S: Scalar>(
    shape: &ModelShape,
    store: &mut ParameterStore<S>,
    dx_rec: &Tensor<S>,
    cache: &ReconstructerCache<S>,
) -> Result<Tensor<S>> {
    let dspec = shape.unet2().backward(store, dx_rec, &cache.unet)?;
    let dspec_seq = image_to_seq(&dspec)?;
    let lg = linear_backward(&dspec_seq, &cache.seq, store.get("head2.w")?)?;
    store.accumulate_grad("head2.w", &lg.dw)?;
    store.accumulate_grad("head2.b", &lg.db)?;
    let bg = bilstm_backward(
        &lg.dx,
        &cache.post_seq,
        lstm_refs(store, "lstm2.fw")?,
        lstm_refs(store, "lstm2.bw")?,
        &cache.bilstm,
    )?;
    accumulate_lstm(store, "lstm2.fw", &bg.fw)?;
    accumulate_lstm(store, "lstm2.bw", &bg.bw)?;
    bg.dx.transposed2()
}

/// Everything one forward pass produces. `x_rec` and `post2` are present
/// only when the mode evaluates the reconstructer.
pub struct ForwardOutputs<S> {
    /// `[88, T]` posteriorgram of the input spectrogram.
    pub post1: Tensor<S>,
    /// `[1, F, T]` reconstructed spectrogram.
    pub x_rec: Option<Tensor<S>>,
    /// `[88, T]` posteriorgram of the reconstruction, from the same
    /// transcriber parameters.
    pub post2: Option<Tensor<S>>,
}

/// Runs the network in inference mode. Baseline computes `post1` only; the
/// other modes also reconstruct and re-transcribe.
pub fn full_forward<S: Scalar>(
    shape: &ModelShape,
    store: &ParameterStore<S>,
    x: &Tensor<S>,
) -> Result<ForwardOutputs<S>> {
    let (post1, _) = transcriber_forward(shape, store, x)?;
    if !shape.mode.has_reconstructer() {
        return Ok(ForwardOutputs { post1, x_rec: None, post2: None });
    }
    let (x_rec, _) = reconstructer_forward(shape, store, &post1)?;
    let (post2, _) = transcriber_forward(shape, store, &x_rec)?;
    Ok(ForwardOutputs { post1, x_rec: Some(x_rec), post2: Some(post2) })
}

/// Loss terms of one pass, in f64 regardless of the parameter type. Inactive
/// terms are reported as 0, so `total` always equals the sum of the three
/// term fields.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LossBreakdown {
    pub recon_l2: f64,
    pub bce_post1: f64,
    pub bce_post2: f64,
    pub total: f64,
}

impl LossBreakdown {
    fn new(recon_l2: f64, bce_post1: f64, bce_post2: f64) -> LossBreakdown {
        LossBreakdown { recon_l2, bce_post1, bce_post2, total: recon_l2 + bce_post1 + bce_post2 }
    }
}

fn missing(field: &str) -> Error {
    Error::shape_mismatch(field, "present for this mode", "absent")
}

/// Scores already-computed outputs against the label roll `[88, T]`.
///
/// Proposed mode sums all three terms; baseline keeps only the first
/// posteriorgram's cross-entropy; recon-only keeps only the reconstruction
/// error. Inactive terms are reported as 0.
pub fn total_loss<S: Scalar>(
    x: &Tensor<S>,
    outputs: &ForwardOutputs<S>,
    roll: &Tensor<S>,
    mode: Mode,
) -> Result<LossBreakdown> {
    match mode {
        Mode::Baseline => Ok(LossBreakdown::new(0.0, bce_loss(&outputs.post1, roll)?.as_f64(), 0.0)),
        Mode::ReconOnly => {
            let x_rec = outputs.x_rec.as_ref().ok_or_else(|| missing("x_rec"))?;
            Ok(LossBreakdown::new(mse_loss(x, x_rec)?.as_f64(), 0.0, 0.0))
        }
        Mode::Proposed => {
            let x_rec = outputs.x_rec.as_ref().ok_or_else(|| missing("x_rec"))?;
            let post2 = outputs.post2.as_ref().ok_or_else(|| missing("post2"))?;
            Ok(LossBreakdown::new(
                mse_loss(x, x_rec)?.as_f64(),
                bce_loss(&outputs.post1, roll)?.as_f64(),
                bce_loss(post2, roll)?.as_f64(),
            ))
        }
    }
}

/// One loss evaluation without gradients. Computes exactly the terms the
/// mode trains on (recon-only skips the second transcriber application
/// entirely, since nothing consumes it).
pub fn forward_loss<S: Scalar>(
    shape: &ModelShape,
    store: &ParameterStore<S>,
    x: &Tensor<S>,
    roll: &Tensor<S>,
) -> Result<LossBreakdown> {
    let (post1, _) = transcriber_forward(shape, store, x)?;
    let mut outputs = ForwardOutputs { post1, x_rec: None, post2: None };
    if shape.mode.has_reconstructer() {
        let (x_rec, _) = reconstructer_forward(shape, store, &outputs.post1)?;
        if shape.mode == Mode::Proposed {
            let (post2, _) = transcriber_forward(shape, store, &x_rec)?;
            outputs.post2 = Some(post2);
        }
        outputs.x_rec = Some(x_rec);
    }
    total_loss(x, &outputs, roll, shape.mode)
}

/// One loss evaluation that also accumulates parameter gradients (`+=` into
/// the store; callers zero them between optimizer steps). The transcriber is
/// applied twice in proposed mode and both applications contribute to its
/// gradients.
pub fn forward_backward<S: Scalar>(
    shape: &ModelShape,
    store: &mut ParameterStore<S>,
    x: &Tensor<S>,
    roll: &Tensor<S>,
) -> Result<LossBreakdown> {
    let one = S::one();
    match shape.mode {
        Mode::Baseline => {
            let (post1, tc1) = transcriber_forward(shape, store, x)?;
            let bce1 = bce_loss(&post1, roll)?.as_f64();
            let dpost1 = bce_backward(&post1, roll, one)?;
            transcriber_backward(shape, store, &dpost1, &tc1)?;
            Ok(LossBreakdown::new(0.0, bce1, 0.0))
        }
        Mode::ReconOnly => {
            let (post1, tc1) = transcriber_forward(shape, store, x)?;
            let (x_rec, rc) = reconstructer_forward(shape, store, &post1)?;
            let l2 = mse_loss(x, &x_rec)?.as_f64();
            let dx_rec = mse_backward(&x_rec, x, one)?;
            let dpost1 = reconstructer_backward(shape, store, &dx_rec, &rc)?;
            transcriber_backward(shape, store, &dpost1, &tc1)?;
            Ok(LossBreakdown::new(l2, 0.0, 0.0))
        }
        Mode::Proposed => {
            let (post1, tc1) = transcriber_forward(shape, store, x)?;
            let (x_rec, rc) = reconstructer_forward(shape, store, &post1)?;
            let (post2, tc2) = transcriber_forward(shape, store, &x_rec)?;
            let l2 = mse_loss(x, &x_rec)?.as_f64();
            let bce1 = bce_loss(&post1, roll)?.as_f64();
            let bce2 = bce_loss(&post2, roll)?.as_f64();

            let dpost2 = bce_backward(&post2, roll, one)?;
            let mut dx_rec = transcriber_backward(shape, store, &dpost2, &tc2)?;
            dx_rec.add_scaled(&mse_backward(&x_rec, x, one)?, one);
            let mut dpost1 = reconstructer_backward(shape, store, &dx_rec, &rc)?;
            dpost1.add_scaled(&bce_backward(&post1, roll, one)?, one);
            transcriber_backward(shape, store, &dpost1, &tc1)?;
            Ok(LossBreakdown::new(l2, bce1, bce2))
        }
    }
}

/// The tensor the BiLSTM consumes: the first U-net's output, same shape as
/// the input spectrogram, values in [0, 1].
pub fn dump_features<S: Scalar>(
    shape: &ModelShape,
    store: &ParameterStore<S>,
    x: &Tensor<S>,
) -> Result<Tensor<S>> {
    shape.check_input(x)?;
    let (u, _) = shape.unet1().forward(store, x)?;
    Ok(u)
}

/// Frames per inference window: recordings of any length are transcribed in
/// non-overlapping windows of the training segment length and the per-window
/// posteriorgrams concatenated. A short final window is handled by the
/// U-net's internal padding.
pub const INFER_CHUNK_FRAMES: usize = 640;

/// Transcribes a whole spectrogram in windows of [`INFER_CHUNK_FRAMES`],
/// returning the pipeline's final posteriorgram: the re-transcription of the
/// reconstruction when the mode has a reconstructer, otherwise the direct
/// posteriorgram.
pub fn infer_posteriorgram<S: Scalar>(
    shape: &ModelShape,
    store: &ParameterStore<S>,
    spec: &dsp::Spectrogram,
) -> Result<Posteriorgram> {
    infer_posteriorgram_chunked(shape, store, spec, INFER_CHUNK_FRAMES)
}

pub fn infer_posteriorgram_chunked<S: Scalar>(
    shape: &ModelShape,
    store: &ParameterStore<S>,
    spec: &dsp::Spectrogram,
    chunk_frames: usize,
) -> Result<Posteriorgram> {
    let (f, t) = match spec.values.shape() {
        [f, t] => (*f, *t),
        other => {
            return Err(Error::shape_mismatch("spectrogram", "[F, T]", format!("{other:?}")))
        }
    };
    if f != shape.f_bins {
        return Err(Error::shape_mismatch("spectrogram rows", shape.f_bins, f));
    }
    if t == 0 || chunk_frames == 0 {
        return Err(Error::EmptyInput("inference needs at least one frame".into()));
    }

    let data = spec.values.data();
    let mut out = Tensor::<f32>::zeros(&[N_PITCHES, t]);
    let mut start = 0;
    while start < t {
        let end = (start + chunk_frames).min(t);
        let w = end - start;
        let x = Tensor::<S>::from_fn(&[1, f, w], |i| {
            S::from_f64(data[(i / w) * t + start + i % w])
        });
        let outputs = full_forward(shape, store, &x)?;
        let post = outputs.post2.unwrap_or(outputs.post1);
        for row in 0..N_PITCHES {
            for col in 0..w {
                out.data_mut()[row * t + start + col] =
                    post.data()[row * w + col].as_f64() as f32;
            }
        }
        start = end;
    }
    Posteriorgram::new(out)
}

/// An 88×T pitch-activation matrix with its frame period.
#[derive(Clone, Debug, PartialEq)]
pub struct Posteriorgram {
    /// `[88, T]`, entries in [0, 1].
    pub values: Tensor<f32>,
    pub hop_seconds: f64,
}

impl Posteriorgram {
    pub fn new(values: Tensor<f32>) -> Result<Posteriorgram> {
        match values.shape() {
            [n, _] if *n == N_PITCHES => {
                Ok(Posteriorgram { values, hop_seconds: dsp::hop_seconds() })
            }
            other => Err(Error::shape_mismatch(
                "posteriorgram",
                format!("[{N_PITCHES}, T]"),
                format!("{other:?}"),
            )),
        }
    }

    pub fn n_frames(&self) -> usize {
        self.values.shape()[1]
    }
}
