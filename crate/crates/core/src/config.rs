//! Run configuration shared by the CLI, trainer and model: JSON in, resolved
//! snapshot out.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

/// Input representation fed to the transcriber.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frontend {
    Mel,
    Cqt,
}

impl Frontend {
    /// Frequency-axis size of the spectrogram this frontend produces.
    pub fn n_bins(self) -> usize {
        match self {
            Frontend::Mel => 229,
            Frontend::Cqt => 176,
        }
    }
}

impl FromStr for Frontend {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mel" => Ok(Frontend::Mel),
            "cqt" => Ok(Frontend::Cqt),
            other => Err(Error::config("frontend", format!("expected mel|cqt, got {other}"))),
        }
    }
}

impl fmt::Display for Frontend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Frontend::Mel => "mel",
            Frontend::Cqt => "cqt",
        })
    }
}

/// Which parts of the network exist and which loss terms are active.
///
/// `Proposed` trains transcriber + reconstructer with all three loss terms.
/// `Baseline` is the transcriber alone (no reconstructer parameters at all).
/// `ReconOnly` keeps the full network but minimizes only the reconstruction
/// error.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Proposed,
    Baseline,
    ReconOnly,
}

impl Mode {
    pub fn has_reconstructer(self) -> bool {
        !matches!(self, Mode::Baseline)
    }
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "proposed" => Ok(Mode::Proposed),
            "baseline" => Ok(Mode::Baseline),
            "recon_only" | "recon-only" => Ok(Mode::ReconOnly),
            other => Err(Error::config(
                "mode",
                format!("expected proposed|baseline|recon-only, got {other}"),
            )),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Proposed => "proposed",
            Mode::Baseline => "baseline",
            Mode::ReconOnly => "recon_only",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub frontend: Frontend,
    pub mode: Mode,
    /// Encoder channel widths per U-net scale; the decoder mirrors them.
    pub enc_channels: [usize; 4],
    /// BiLSTM hidden size per direction.
    pub lstm_hidden: usize,
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Initial learning rate; decays by `lr_decay` every `lr_decay_steps`
    /// optimizer steps (staircase).
    pub lr0: f64,
    pub lr_decay: f64,
    pub lr_decay_steps: u64,
    /// A checkpoint is written every this many epochs, and always at the end.
    pub checkpoint_every_epochs: usize,
    /// Optional hard cap on optimizer steps, for short smoke runs.
    pub max_steps: Option<u64>,
    pub manifest: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            frontend: Frontend::Mel,
            mode: Mode::Proposed,
            enc_channels: [16, 32, 64, 128],
            lstm_hidden: 256,
            seed: 0,
            epochs: 2000,
            batch_size: 32,
            lr0: 6e-4,
            lr_decay: 0.98,
            lr_decay_steps: 10_000,
            checkpoint_every_epochs: 100,
            max_steps: None,
            manifest: None,
            out_dir: None,
        }
    }
}

impl Config {
    pub fn from_json_file(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("config", format!("cannot read {}: {e}", path.display())))?;
        let cfg: Config = serde_json::from_str(&text)
            .map_err(|e| Error::config("config", format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json_file(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 1 {
            return Err(Error::config("batch_size", "must be >= 1"));
        }
        if self.epochs < 1 {
            return Err(Error::config("epochs", "must be >= 1"));
        }
        if !(self.lr0 > 0.0) {
            return Err(Error::config("lr0", "must be > 0"));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::config("lr_decay", "must be in (0, 1]"));
        }
        if self.lr_decay_steps < 1 {
            return Err(Error::config("lr_decay_steps", "must be >= 1"));
        }
        if self.lstm_hidden < 1 {
            return Err(Error::config("lstm_hidden", "must be >= 1"));
        }
        if self.enc_channels.iter().any(|&c| c == 0) {
            return Err(Error::config("enc_channels", "all widths must be >= 1"));
        }
        if self.checkpoint_every_epochs < 1 {
            return Err(Error::config("checkpoint_every_epochs", "must be >= 1"));
        }
        if self.max_steps == Some(0) {
            return Err(Error::config("max_steps", "must be >= 1 when set"));
        }
        Ok(())
    }

    /// The manifest path, required by commands that read a dataset.
    pub fn require_manifest(&self) -> Result<&Path> {
        self.manifest
            .as_deref()
            .ok_or_else(|| Error::config("manifest", "required but not set"))
    }

    pub fn require_out_dir(&self) -> Result<&Path> {
        self.out_dir
            .as_deref()
            .ok_or_else(|| Error::config("out_dir", "required but not set"))
    }
}
