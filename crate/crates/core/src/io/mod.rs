//! File formats: WAV audio and raw-f32 matrix dumps with JSON sidecars.

pub mod matrix;
pub mod wav;

pub use matrix::{load_matrix, render_png, save_matrix, save_spectrogram, MatrixMeta};
pub use wav::{read_wav, write_wav};
