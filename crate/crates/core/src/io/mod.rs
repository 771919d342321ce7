//! On-disk formats: binary matrices, study datasets, model archives and
//! exports.

mod archive;
mod dataset;
mod export;
mod json;
mod matrix;
mod zscore;

pub use archive::{load_archive, save_archive, ArchiveManifest, FitRecord, Metrics, ModelArchive, ARCHIVE_VERSION};
pub use dataset::{
    load_dataset, load_dataset_labeled, save_dataset, save_dataset_labeled, DatasetLabels, DatasetManifest, TrialRecord, MANIFEST,
};
pub use export::{embeddings_svg, export_embeddings, read_embeddings_csv, write_embeddings_csv, EmbeddingKind, EmbeddingRow};
pub use json::{read_json, write_json};
pub use matrix::{decode_matrix, encode_matrix, read_matrix, write_matrix, FORMAT_VERSION, HEADER_LEN, MAGIC};
pub use zscore::{zscore_dataset, zscore_to_rest};
