//! Matrix dump format: raw little-endian f32 payload next to a JSON sidecar
//! describing shape and axis metadata. Also renders matrices to grayscale
//! PNGs for quick inspection.

use std::fs::{self, File};
use std::io::{BufWriter, Write as _};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dsp::Spectrogram;
use crate::error::{Error, Result};
use crate::nn::{Scalar, Tensor};

/// Sidecar contents for one dumped matrix.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MatrixMeta {
    pub shape: Vec<usize>,
    pub kind: String,
    pub hop_seconds: f64,
    /// One entry per row when the rows have a frequency meaning; empty
    /// otherwise (e.g. feature maps).
    pub bin_frequencies: Vec<f64>,
}

/// `<stem>.f32`, the raw payload.
pub fn data_path(stem: &Path) -> PathBuf {
    add_extension(stem, "f32")
}

/// `<stem>.json`, the sidecar.
pub fn sidecar_path(stem: &Path) -> PathBuf {
    add_extension(stem, "json")
}

fn add_extension(stem: &Path, ext: &str) -> PathBuf {
    let mut name = stem.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".");
    name.push(ext);
    stem.with_file_name(name)
}

/// Writes `<stem>.f32` and `<stem>.json`. Values are cast to f32.
pub fn save_matrix<T: Scalar>(
    stem: &Path,
    values: &Tensor<T>,
    kind: &str,
    hop_seconds: f64,
    bin_frequencies: &[f64],
) -> Result<()> {
    let meta = MatrixMeta {
        shape: values.shape().to_vec(),
        kind: kind.to_string(),
        hop_seconds,
        bin_frequencies: bin_frequencies.to_vec(),
    };

    let mut out = BufWriter::new(File::create(data_path(stem))?);
    for &v in values.data() {
        out.write_all(&(v.as_f64() as f32).to_le_bytes())?;
    }
    out.flush()?;

    let mut sidecar = BufWriter::new(File::create(sidecar_path(stem))?);
    serde_json::to_writer_pretty(&mut sidecar, &meta)?;
    sidecar.write_all(b"\n")?;
    sidecar.flush()?;
    Ok(())
}

/// Convenience wrapper filling the sidecar from the spectrogram's metadata.
pub fn save_spectrogram(stem: &Path, s: &Spectrogram) -> Result<()> {
    save_matrix(stem, &s.values, s.kind.as_str(), s.hop_seconds, &s.bin_frequencies)
}

/// Loads a matrix dumped by [`save_matrix`], checking the payload length
/// against the sidecar shape.
pub fn load_matrix(stem: &Path) -> Result<(MatrixMeta, Tensor<f32>)> {
    let meta: MatrixMeta = serde_json::from_reader(File::open(sidecar_path(stem))?)?;
    let bytes = fs::read(data_path(stem))?;
    let count: usize = meta.shape.iter().product();
    if bytes.len() != count * 4 {
        return Err(Error::shape_mismatch(
            "matrix payload",
            format!("{} bytes", count * 4),
            format!("{} bytes", bytes.len()),
        ));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let values = Tensor::from_vec(&meta.shape, data)?;
    Ok((meta, values))
}

/// Renders a `[rows, cols]` matrix as a grayscale PNG, min-max scaled to the
/// full 0–255 range (a constant matrix renders black). Row 0 is drawn at the
/// bottom so spectrograms read with frequency rising upward.
pub fn render_png<T: Scalar>(path: &Path, values: &Tensor<T>) -> Result<()> {
    if values.shape().len() != 2 {
        return Err(Error::shape_mismatch(
            "png render",
            "[rows, cols]",
            format!("{:?}", values.shape()),
        ));
    }
    let (rows, cols) = (values.shape()[0], values.shape()[1]);
    if rows == 0 || cols == 0 {
        return Err(Error::EmptyInput("png render of an empty matrix".into()));
    }

    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for &v in values.data() {
        min = min.min(v.as_f64());
        max = max.max(v.as_f64());
    }
    let span = max - min;

    let mut img = image::GrayImage::new(cols as u32, rows as u32);
    for r in 0..rows {
        for c in 0..cols {
            let v = values.data()[r * cols + c].as_f64();
            let level = if span > 0.0 {
                ((v - min) / span * 255.0).round() as u8
            } else {
                0
            };
            img.put_pixel(c as u32, (rows - 1 - r) as u32, image::Luma([level]));
        }
    }
    img.save(path).map_err(|e| Error::Image(e.to_string()))
}
