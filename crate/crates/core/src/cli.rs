//! Command-line surface: training, transcription, evaluation, feature dumps,
//! self-verification, and synthetic-dataset generation. The binary is a thin
//! wrapper over [`run`]; every command is also callable as a function.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{Config, Frontend, Mode};
use crate::dataset::{
    load_manifest, load_split, notes_to_pianoroll, parse_note_csv, resample, sort_notes,
    write_note_csv, NoteEvent, Split, FPS,
};
use crate::dsp::{compute_frontend, stft_magnitude, AudioClip, Spectrogram, HOP, SAMPLE_RATE, WINDOW_LEN};
use crate::error::{Error, Result};
use crate::io::{read_wav, render_png, save_matrix};
use crate::metrics::{
    evaluate_dataset, evaluate_recording, match_notes, roll_to_notes, threshold_roll, EvalReport,
    OffsetRule, THRESHOLD,
};
use crate::model::{
    dump_features, forward_backward, forward_loss, full_forward, infer_posteriorgram, ModelShape,
    Posteriorgram,
};
use crate::nn::gradcheck::grad_check;
use crate::nn::{ParameterStore, Tensor};
use crate::synth::{generate_dataset, pitch_hz};
use crate::trainer::{load_checkpoint, train};

#[derive(Parser, Debug)]
#[command(name = "rollscribe", version, about = "Piano transcription with a reconstruction-regularized dual U-net")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Config fields that can be replaced from the command line.
#[derive(Args, Clone, Copy, Debug, Default)]
pub struct Overrides {
    /// Input representation: mel or cqt.
    #[arg(long)]
    pub frontend: Option<Frontend>,
    /// Network variant: proposed, baseline or recon-only.
    #[arg(long)]
    pub mode: Option<Mode>,
    /// Run seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut Config) {
        if let Some(frontend) = self.frontend {
            cfg.frontend = frontend;
        }
        if let Some(mode) = self.mode {
            cfg.mode = mode;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train a model on the manifest named in the config.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Transcribe a WAV file into a note CSV plus a posteriorgram dump.
    Transcribe {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Input audio; any sample rate, resampled to 16 kHz.
        wav: PathBuf,
        /// Output stem: writes `<out>.notes.csv`, `<out>.post.f32/.json`.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Score transcriptions and write an evaluation report.
    Evaluate(EvaluateArgs),
    /// Export the first U-net's output (and, when the mode reconstructs,
    /// the reconstructed spectrogram) for a WAV file.
    DumpFeatures {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        wav: PathBuf,
        /// Output stem: writes `<out>.unet1.*` and `<out>.recon.*`.
        #[arg(long)]
        out: PathBuf,
        /// Also render the matrices as grayscale PNGs.
        #[arg(long)]
        png: bool,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run the built-in numeric and decoding checks.
    Selfcheck,
    /// Render a synthetic dataset of additive-sine clips.
    Synth {
        /// Output directory for the WAVs, note CSVs and manifest.json.
        #[arg(long)]
        out: PathBuf,
        /// Clips assigned to the train split.
        #[arg(long, default_value_t = 4)]
        train: usize,
        /// Clips assigned to the test split.
        #[arg(long, default_value_t = 0)]
        test: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Reference note CSV; repeat to score several recordings.
    #[arg(long = "reference")]
    pub references: Vec<PathBuf>,
    /// Estimated note CSV, paired with --reference by position.
    #[arg(long = "estimate")]
    pub estimates: Vec<PathBuf>,
    /// Score a checkpoint on a manifest split instead of CSV pairs
    /// (requires --checkpoint).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Manifest split to score in checkpoint mode: train or test.
    #[arg(long, default_value = "test")]
    pub split: String,
    /// JSON report destination.
    #[arg(long, default_value = "eval_report.json")]
    pub out: PathBuf,
    #[command(flatten)]
    pub overrides: Overrides,
}

/// Parses `argv` and runs the chosen command. Returns the process exit code:
/// 0 on success, 1 for failed checks or runtime errors, 2 for usage and
/// config errors.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Train { config, overrides } => {
            let mut cfg = Config::from_json_file(&config)?;
            overrides.apply(&mut cfg);
            cmd_train(&cfg)
        }
        Command::Transcribe { config, checkpoint, wav, out, overrides } => {
            let mut cfg = Config::from_json_file(&config)?;
            overrides.apply(&mut cfg);
            cmd_transcribe(&cfg, &checkpoint, &wav, &out)
        }
        Command::Evaluate(args) => cmd_evaluate(&args),
        Command::DumpFeatures { config, checkpoint, wav, out, png, overrides } => {
            let mut cfg = Config::from_json_file(&config)?;
            overrides.apply(&mut cfg);
            cmd_dump_features(&cfg, &checkpoint, &wav, &out, png)
        }
        Command::Selfcheck => cmd_selfcheck(),
        Command::Synth { out, train, test, seed } => cmd_synth(&out, train, test, seed),
    }
}

fn manifest_dir(manifest_path: &Path) -> &Path {
    let parent = manifest_path.parent().unwrap_or(Path::new("."));
    if parent.as_os_str().is_empty() {
        Path::new(".")
    } else {
        parent
    }
}

fn load_model(cfg: &Config, checkpoint: &Path) -> Result<(ModelShape, ParameterStore<f32>)> {
    cfg.validate()?;
    let shape = ModelShape::from_config(cfg);
    let store = load_checkpoint(checkpoint)?;
    shape.validate_store(&store)?;
    Ok((shape, store))
}

fn read_audio(wav: &Path) -> Result<AudioClip> {
    resample(&read_wav(wav)?, SAMPLE_RATE)
}

/// `<stem>.<suffix>` without clobbering existing extensions.
fn with_suffix(stem: &Path, suffix: &str) -> PathBuf {
    let mut name = stem.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".");
    name.push(suffix);
    stem.with_file_name(name)
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(())
}

/// Trains on the manifest's train split and writes the resolved config, the
/// per-step log and the checkpoints into the config's output directory.
pub fn cmd_train(cfg: &Config) -> Result<()> {
    cfg.validate()?;
    let manifest_path = cfg.require_manifest()?;
    let out_dir = cfg.require_out_dir()?.to_path_buf();
    let entries = load_manifest(manifest_path)?;
    let recordings = load_split(manifest_dir(manifest_path), &entries, Split::Train)?;

    std::fs::create_dir_all(&out_dir)?;
    cfg.to_json_file(&out_dir.join("config.json"))?;

    let trained = train::<f32, _>(&recordings, cfg, |stats, _| {
        println!(
            "epoch {:>4}: {:>6} steps, mean loss {:.6}",
            stats.epoch, stats.steps, stats.mean_total
        );
        Ok(())
    })?;
    trained.log.write_csv(&out_dir.join("train_log.csv"))?;
    println!(
        "trained {} steps; wrote {}",
        trained.store.step(),
        out_dir.join("checkpoint_final.ckpt").display()
    );
    Ok(())
}

/// Audio → frontend → chunked inference → thresholded roll → note CSV, plus
/// the raw posteriorgram in the matrix dump format.
pub fn cmd_transcribe(cfg: &Config, checkpoint: &Path, wav: &Path, out: &Path) -> Result<()> {
    let (shape, store) = load_model(cfg, checkpoint)?;
    let spec = compute_frontend(&read_audio(wav)?, cfg.frontend)?;
    let post = infer_posteriorgram(&shape, &store, &spec)?;
    let roll = threshold_roll(&post, THRESHOLD);
    let notes = roll_to_notes(&roll);

    ensure_parent(out)?;
    let notes_path = with_suffix(out, "notes.csv");
    write_note_csv(&notes_path, &notes)?;
    let pitch_frequencies: Vec<f64> = (0u8..88).map(|r| pitch_hz(21 + r)).collect();
    save_matrix(
        &with_suffix(out, "post"),
        &post.values,
        "posteriorgram",
        post.hop_seconds,
        &pitch_frequencies,
    )?;
    println!("{} notes -> {}", notes.len(), notes_path.display());
    Ok(())
}

fn parse_split(s: &str) -> Result<Split> {
    match s {
        "train" => Ok(Split::Train),
        "test" => Ok(Split::Test),
        other => Err(Error::config("split", format!("expected train|test, got {other}"))),
    }
}

/// Scores either explicit reference/estimate CSV pairs or a checkpoint run
/// over one split of a manifest; prints the score table and writes the JSON
/// report.
pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<()> {
    let report = match (&args.config, &args.checkpoint) {
        (Some(config), Some(checkpoint)) => {
            let mut cfg = Config::from_json_file(config)?;
            args.overrides.apply(&mut cfg);
            evaluate_checkpoint(&cfg, checkpoint, parse_split(&args.split)?)?
        }
        (None, None) => evaluate_csv_pairs(&args.references, &args.estimates)?,
        _ => {
            return Err(Error::config(
                "checkpoint",
                "model evaluation needs both --config and --checkpoint",
            ))
        }
    };
    print!("{}", format_report(&report));

    ensure_parent(&args.out)?;
    let json = serde_json::to_string_pretty(&report)?;
    std::fs::write(&args.out, json + "\n")?;
    println!("report written to {}", args.out.display());
    Ok(())
}

/// Scores estimate CSVs against reference CSVs, paired by position. The
/// estimate's rasterized roll stands in as a binary posteriorgram.
pub fn evaluate_csv_pairs(references: &[PathBuf], estimates: &[PathBuf]) -> Result<EvalReport> {
    if references.is_empty() || references.len() != estimates.len() {
        return Err(Error::config(
            "estimate",
            format!("{} references but {} estimates", references.len(), estimates.len()),
        ));
    }
    let mut rows = Vec::with_capacity(references.len());
    for (ref_path, est_path) in references.iter().zip(estimates) {
        let reference = parse_note_csv(ref_path)?.notes;
        let estimate = parse_note_csv(est_path)?.notes;
        let last_offset =
            reference.iter().chain(&estimate).map(|n| n.offset).fold(0.0f64, f64::max);
        let n_frames = (last_offset * FPS).ceil() as usize + 1;
        let est_roll = notes_to_pianoroll(&estimate, n_frames, FPS);
        let post = Posteriorgram::new(est_roll.values)?;
        let name = ref_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| ref_path.display().to_string());
        rows.push(evaluate_recording(&name, &reference, &post)?);
    }
    evaluate_dataset(rows)
}

/// Runs the model over every recording of one manifest split and scores the
/// transcriptions against the reference notes.
pub fn evaluate_checkpoint(cfg: &Config, checkpoint: &Path, split: Split) -> Result<EvalReport> {
    let (shape, store) = load_model(cfg, checkpoint)?;
    let manifest_path = cfg.require_manifest()?;
    let entries = load_manifest(manifest_path)?;
    let recordings = load_split(manifest_dir(manifest_path), &entries, split)?;
    let mut rows = Vec::with_capacity(recordings.len());
    for rec in &recordings {
        let spec = compute_frontend(&rec.audio, cfg.frontend)?;
        let post = infer_posteriorgram(&shape, &store, &spec)?;
        rows.push(evaluate_recording(&rec.id, &rec.notes, &post)?);
    }
    evaluate_dataset(rows)
}

/// The nine score columns (frame, note-onset and note-with-offset P/R/F1)
/// per recording plus mean and std rows, with micro-AP and frame accuracy
/// summarized underneath.
pub fn format_report(report: &EvalReport) -> String {
    let header = format!(
        "{:<24} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}\n",
        "recording", "fr-P", "fr-R", "fr-F1", "on-P", "on-R", "on-F1", "off-P", "off-R", "off-F1"
    );
    let mut out = header;
    let line = |name: &str, v: [f64; 9]| {
        format!(
            "{:<24} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4}\n",
            name, v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8]
        )
    };
    for row in &report.per_recording {
        out += &line(
            &row.name,
            [
                row.frame.precision,
                row.frame.recall,
                row.frame.f1,
                row.note_onset.precision,
                row.note_onset.recall,
                row.note_onset.f1,
                row.note_with_offset.precision,
                row.note_with_offset.recall,
                row.note_with_offset.f1,
            ],
        );
    }
    out += &line(
        "mean",
        [
            report.frame.precision.mean,
            report.frame.recall.mean,
            report.frame.f1.mean,
            report.note_onset.precision.mean,
            report.note_onset.recall.mean,
            report.note_onset.f1.mean,
            report.note_with_offset.precision.mean,
            report.note_with_offset.recall.mean,
            report.note_with_offset.f1.mean,
        ],
    );
    out += &line(
        "std",
        [
            report.frame.precision.std,
            report.frame.recall.std,
            report.frame.f1.std,
            report.note_onset.precision.std,
            report.note_onset.recall.std,
            report.note_onset.f1.std,
            report.note_with_offset.precision.std,
            report.note_with_offset.recall.std,
            report.note_with_offset.f1.std,
        ],
    );
    out += &format!(
        "micro-AP {:.4} ± {:.4}; frame accuracy {:.4} ± {:.4}\n",
        report.micro_ap.mean, report.micro_ap.std, report.frame.accuracy.mean,
        report.frame.accuracy.std
    );
    out
}

/// Exports the first U-net's output and, when the mode reconstructs, the
/// reconstructed spectrogram, in the matrix dump format.
pub fn cmd_dump_features(
    cfg: &Config,
    checkpoint: &Path,
    wav: &Path,
    out: &Path,
    png: bool,
) -> Result<()> {
    let (shape, store) = load_model(cfg, checkpoint)?;
    let spec = compute_frontend(&read_audio(wav)?, cfg.frontend)?;
    let (f, t) = (spec.values.shape()[0], spec.values.shape()[1]);
    let x = Tensor::<f32>::from_fn(&[1, f, t], |i| spec.values.data()[i] as f32);

    ensure_parent(out)?;
    let save = |name: &str, values: &Tensor<f32>| -> Result<()> {
        let matrix = Tensor::from_vec(&[f, t], values.data().to_vec())?;
        let stem = with_suffix(out, name);
        save_matrix(&stem, &matrix, name, spec.hop_seconds, &spec.bin_frequencies)?;
        if png {
            render_png(&with_suffix(&stem, "png"), &matrix)?;
        }
        println!("wrote {}", stem.display());
        Ok(())
    };

    save("unet1", &dump_features(&shape, &store, &x)?)?;
    if shape.mode.has_reconstructer() {
        let outputs = full_forward(&shape, &store, &x)?;
        let x_rec = outputs
            .x_rec
            .ok_or_else(|| Error::shape_mismatch("x_rec", "present for this mode", "absent"))?;
        save("recon", &x_rec)?;
    }
    Ok(())
}

pub fn cmd_synth(out: &Path, n_train: usize, n_test: usize, seed: u64) -> Result<()> {
    let entries = generate_dataset(out, n_train, n_test, seed)?;
    println!("wrote {} clips and {}", entries.len(), out.join("manifest.json").display());
    Ok(())
}

/// Runs the built-in verification suite: gradient checks over the full loss
/// in every mode, pure-tone placement oracles for all three spectrogram
/// transforms, the note-matching brute-force oracle and the rasterize/decode
/// round trip. Fails (exit 1) if any check fails.
pub fn cmd_selfcheck() -> Result<()> {
    let started = Instant::now();
    let checks: [(&str, fn() -> Result<()>); 4] = [
        ("gradients match finite differences in all modes", check_gradients),
        ("pure tones land in their oracle bins", check_dsp_tones),
        ("note matching equals brute force", check_matching),
        ("rasterize/decode round trip is exact", check_roundtrip),
    ];
    let mut failures = Vec::new();
    for (name, check) in checks {
        match check() {
            Ok(()) => println!("ok   {name}"),
            Err(e) => {
                println!("FAIL {name}: {e}");
                failures.push(name);
            }
        }
    }
    println!("selfcheck finished in {:.1}s", started.elapsed().as_secs_f64());
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Error::CheckFailed(format!(
            "{}/{} selfchecks failed: {}",
            failures.len(),
            checks.len(),
            failures.join("; ")
        )))
    }
}

fn check_gradients() -> Result<()> {
    for mode in [Mode::Proposed, Mode::Baseline, Mode::ReconOnly] {
        let shape = ModelShape { f_bins: 8, enc_channels: [1, 2, 2, 2], lstm_hidden: 2, mode };
        let mut store = shape.init_params::<f64>(7)?;
        let x = Tensor::from_fn(&[1, 8, 8], |i| (i * 37 % 19) as f64 / 19.0);
        let roll = Tensor::from_fn(&[88, 8], |i| if i % 7 == 0 { 1.0 } else { 0.0 });
        let loss = |store: &mut ParameterStore<f64>, grads: bool| {
            if grads {
                forward_backward(&shape, store, &x, &roll).map(|l| l.total)
            } else {
                forward_loss(&shape, store, &x, &roll).map(|l| l.total)
            }
        };
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let report = grad_check(&mut store, loss, 2, &mut rng)?;
        if report.max_rel_err > 1e-4 {
            return Err(Error::CheckFailed(format!(
                "{mode:?} loss: relative error {:.2e} at {}[{}]",
                report.max_rel_err, report.worst_param, report.worst_index
            )));
        }
    }
    Ok(())
}

fn pure_tone(hz: f64) -> Result<AudioClip> {
    let samples = (0..32_001)
        .map(|i| (0.5 * (std::f64::consts::TAU * hz * i as f64 / f64::from(SAMPLE_RATE)).sin()) as f32)
        .collect();
    AudioClip::new(samples, SAMPLE_RATE)
}

fn argmax_row(spec: &Spectrogram) -> usize {
    let (f, t) = (spec.values.shape()[0], spec.values.shape()[1]);
    let energy = |r: usize| -> f64 { (0..t).map(|c| spec.values.data()[r * t + c]).sum() };
    (0..f).max_by(|&a, &b| energy(a).total_cmp(&energy(b))).unwrap_or(0)
}

fn check_dsp_tones() -> Result<()> {
    for k in [0usize, 24, 96, 168] {
        let spec = compute_frontend(&pure_tone_bin(k)?, Frontend::Cqt)?;
        let got = argmax_row(&spec);
        if got != k {
            return Err(Error::CheckFailed(format!(
                "constant-Q tone at bin {k} ({:.2} Hz) peaked in bin {got}",
                spec.bin_frequencies[k]
            )));
        }
    }
    let cqt440 = compute_frontend(&pure_tone(440.0)?, Frontend::Cqt)?;
    if argmax_row(&cqt440) != 96 {
        return Err(Error::CheckFailed(format!(
            "440 Hz constant-Q tone peaked in bin {}, expected 96",
            argmax_row(&cqt440)
        )));
    }

    let stft = stft_magnitude(&pure_tone(1000.0)?, WINDOW_LEN, HOP)?;
    if argmax_row(&stft) != 128 {
        return Err(Error::CheckFailed(format!(
            "1 kHz tone peaked in STFT bin {}, expected 128",
            argmax_row(&stft)
        )));
    }

    let mel = compute_frontend(&pure_tone(440.0)?, Frontend::Mel)?;
    let got = argmax_row(&mel);
    let centers = &mel.bin_frequencies;
    let band_ok = got > 0
        && got + 1 < centers.len()
        && centers[got - 1] < 440.0
        && 440.0 < centers[got + 1];
    if !band_ok {
        return Err(Error::CheckFailed(format!(
            "440 Hz tone peaked in mel bin {got} ({:.1} Hz), outside its triangle",
            centers[got]
        )));
    }
    Ok(())
}

fn pure_tone_bin(k: usize) -> Result<AudioClip> {
    let probe = compute_frontend(&pure_tone(440.0)?, Frontend::Cqt)?;
    pure_tone(probe.bin_frequencies[k])
}

fn random_match_notes(rng: &mut ChaCha8Rng) -> Vec<NoteEvent> {
    let n = rng.gen_range(0..=6);
    let mut notes: Vec<NoteEvent> = (0..n)
        .map(|_| {
            let onset = rng.gen_range(0.0..0.3);
            NoteEvent {
                pitch: rng.gen_range(60..=62),
                onset,
                offset: onset + rng.gen_range(0.01..0.5),
            }
        })
        .collect();
    sort_notes(&mut notes);
    notes
}

fn brute_force_matching_size(
    reference: &[NoteEvent],
    estimate: &[NoteEvent],
    rule: OffsetRule,
) -> usize {
    let admissible: Vec<Vec<usize>> = reference
        .iter()
        .map(|r| {
            estimate
                .iter()
                .enumerate()
                .filter(|(_, e)| {
                    match_notes(std::slice::from_ref(r), std::slice::from_ref(e), rule)
                        .pairs
                        .len()
                        == 1
                })
                .map(|(j, _)| j)
                .collect()
        })
        .collect();

    fn best(i: usize, used: u32, adjacency: &[Vec<usize>]) -> usize {
        if i == adjacency.len() {
            return 0;
        }
        let mut size = best(i + 1, used, adjacency);
        for &j in &adjacency[i] {
            if used & (1 << j) == 0 {
                size = size.max(1 + best(i + 1, used | (1 << j), adjacency));
            }
        }
        size
    }
    best(0, 0, &admissible)
}

fn check_matching() -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    for case in 0..200 {
        let reference = random_match_notes(&mut rng);
        let estimate = random_match_notes(&mut rng);
        for rule in [OffsetRule::None, OffsetRule::Standard] {
            let fast = match_notes(&reference, &estimate, rule).pairs.len();
            let slow = brute_force_matching_size(&reference, &estimate, rule);
            if fast != slow {
                return Err(Error::CheckFailed(format!(
                    "case {case} {rule:?}: matcher found {fast} pairs, brute force {slow}"
                )));
            }
        }
    }
    Ok(())
}

fn check_roundtrip() -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for case in 0..100 {
        let mut candidates: Vec<(u8, u32, u32)> = (0..rng.gen_range(0..12))
            .map(|_| (rng.gen_range(21..=108), rng.gen_range(0..80), rng.gen_range(1..16)))
            .collect();
        candidates.sort_unstable();
        let mut last_end: BTreeMap<u8, u32> = BTreeMap::new();
        let mut notes = Vec::new();
        for (pitch, start, len) in candidates {
            if last_end.get(&pitch).is_some_and(|&e| start <= e) {
                continue;
            }
            last_end.insert(pitch, start + len);
            notes.push(NoteEvent {
                pitch,
                onset: f64::from(start) / FPS,
                offset: f64::from(start + len) / FPS,
            });
        }
        sort_notes(&mut notes);
        let roll = notes_to_pianoroll(&notes, 100, FPS);
        if roll_to_notes(&roll) != notes {
            return Err(Error::CheckFailed(format!(
                "decoding the rasterized roll changed the notes (case {case})"
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::conv::set_weight_grad_skew;
    use approx::assert_abs_diff_eq;
    use tempfile::tempdir;

    fn write_notes(path: &Path, notes: &[NoteEvent]) {
        write_note_csv(path, notes).unwrap();
    }

    #[test]
    fn identical_csv_pairs_score_all_ones() {
        let dir = tempdir().unwrap();
        let notes = vec![
            NoteEvent { pitch: 60, onset: 0.5, offset: 1.0 },
            NoteEvent { pitch: 64, onset: 1.5, offset: 2.25 },
        ];
        let r = dir.path().join("ref.csv");
        let e = dir.path().join("est.csv");
        write_notes(&r, &notes);
        write_notes(&e, &notes);

        let report = evaluate_csv_pairs(&[r], &[e]).unwrap();
        assert_abs_diff_eq!(report.frame.f1.mean, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(report.micro_ap.mean, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(report.note_onset.f1.mean, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(report.note_with_offset.f1.mean, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(report.frame.f1.std, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn csv_pair_frame_counts_match_the_hand_example() {
        let dir = tempdir().unwrap();
        let r = dir.path().join("ref.csv");
        let e = dir.path().join("est.csv");
        write_notes(&r, &[NoteEvent { pitch: 60, onset: 0.0, offset: 4.0 / FPS }]);
        write_notes(&e, &[NoteEvent { pitch: 60, onset: 2.0 / FPS, offset: 5.0 / FPS }]);

        let report = evaluate_csv_pairs(&[r], &[e]).unwrap();
        assert_abs_diff_eq!(report.frame.precision.mean, 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(report.frame.recall.mean, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(report.frame.accuracy.mean, 0.4, epsilon = 1e-12);
    }

    #[test]
    fn mismatched_pair_counts_are_a_usage_error() {
        let err = evaluate_csv_pairs(&[PathBuf::from("a.csv")], &[]).err().expect("rejects");
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("1 references but 0 estimates"), "{err}");
    }

    #[test]
    fn report_table_has_name_plus_nine_score_columns() {
        let dir = tempdir().unwrap();
        let notes = vec![NoteEvent { pitch: 72, onset: 0.2, offset: 0.7 }];
        let path = dir.path().join("same.csv");
        write_notes(&path, &notes);
        let report = evaluate_csv_pairs(&[path.clone()], &[path]).unwrap();

        let table = format_report(&report);
        let mut lines = table.lines();
        let header: Vec<&str> = lines.next().unwrap().split_whitespace().collect();
        assert_eq!(header.len(), 10, "{header:?}");
        let row: Vec<&str> = lines.next().unwrap().split_whitespace().collect();
        assert_eq!(row.len(), 10, "{row:?}");
        assert_eq!(row[0], "same");
        assert!(row[1..].iter().all(|v| *v == "1.0000"), "{row:?}");
        let mean: Vec<&str> = lines.next().unwrap().split_whitespace().collect();
        assert_eq!(mean[0], "mean");
        assert_eq!(lines.next().unwrap().split_whitespace().next(), Some("std"));
        assert!(table.contains("micro-AP 1.0000"), "{table}");
    }

    #[test]
    fn gradient_suite_catches_a_skewed_backward() {
        set_weight_grad_skew(true);
        let result = check_gradients();
        set_weight_grad_skew(false);
        let err = result.err().expect("skewed conv gradients must fail the suite");
        let msg = err.to_string();
        assert!(msg.contains("conv") && msg.contains("relative error"), "{msg}");
    }

    #[test]
    fn tone_matching_and_roundtrip_suites_pass() {
        check_dsp_tones().unwrap();
        check_matching().unwrap();
        check_roundtrip().unwrap();
    }

    #[test]
    fn cli_parses_the_documented_flags() {
        let cli = Cli::try_parse_from([
            "rollscribe",
            "transcribe",
            "--config",
            "cfg.json",
            "--checkpoint",
            "model.ckpt",
            "--out",
            "take1",
            "--frontend",
            "cqt",
            "--mode",
            "recon-only",
            "--seed",
            "9",
            "input.wav",
        ])
        .unwrap();
        match cli.command {
            Command::Transcribe { wav, out, overrides, .. } => {
                assert_eq!(wav, PathBuf::from("input.wav"));
                assert_eq!(out, PathBuf::from("take1"));
                assert_eq!(overrides.frontend, Some(Frontend::Cqt));
                assert_eq!(overrides.mode, Some(Mode::ReconOnly));
                assert_eq!(overrides.seed, Some(9));
            }
            other => panic!("parsed into {other:?}"),
        }
    }

    #[test]
    fn usage_errors_exit_with_code_two() {
        assert_eq!(run(["rollscribe", "no-such-command"]), 2);
        assert_eq!(run(["rollscribe", "synth"]), 2);
        assert_eq!(run(["rollscribe", "--help"]), 0);
    }

    #[test]
    fn overrides_replace_only_what_was_given() {
        let mut cfg = Config::default();
        Overrides { frontend: None, mode: Some(Mode::Baseline), seed: Some(3) }.apply(&mut cfg);
        assert_eq!(cfg.frontend, Frontend::Mel);
        assert_eq!(cfg.mode, Mode::Baseline);
        assert_eq!(cfg.seed, 3);
    }

    #[test]
    fn split_names_parse_exactly() {
        assert_eq!(parse_split("train").unwrap(), Split::Train);
        assert_eq!(parse_split("test").unwrap(), Split::Test);
        assert!(parse_split("validation").is_err());
    }
}
