//! Embedding sequences on disk: the EMBS binary format, TSV manifests,
//! train/test splitting, CSV time-series import and synthetic datasets.

mod csv_import;
mod embs;
mod manifest;
mod split;
mod synth;

pub use csv_import::{import_csv_timeseries, CsvSchema};
pub use embs::{
    decode_sequence, encode_sequence, read_sequence_file, write_sequence_file, EmbeddingSequence,
    Frame, EMBS_MAGIC, EMBS_VERSION,
};
pub use manifest::{load_sequences, DatasetManifest, ManifestEntry};
pub use split::{split_dataset, split_ids, SplitSpec};
pub use synth::{synth_dataset, SynthPattern, SyntheticDataset};
