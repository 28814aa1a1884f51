//! Data ingestion: note annotations (CSV and MIDI), piano-roll
//! rasterization, sample-rate conversion, manifests, and the seeded segment
//! sampler that feeds training.

pub mod manifest;
pub mod midi;
pub mod notes;
pub mod rasterize;
pub mod resample;
pub mod sampler;

pub use manifest::{load_manifest, load_recording, load_split, ManifestEntry, Recording, Split};
pub use midi::{parse_midi, ParsedMidi};
pub use notes::{parse_note_csv, sort_notes, write_note_csv, NoteEvent, N_PITCHES, PITCH_MIN};
pub use rasterize::{notes_to_pianoroll, PianoRoll, FPS};
pub use resample::resample;
pub use sampler::{sample_segment, segment_at, Segment, SEGMENT_FRAMES, SEGMENT_SAMPLES};
