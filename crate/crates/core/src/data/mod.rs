//! Synthetic generators, CSV/IDX loaders, splitting and standardization.

mod csv_io;
mod idx;
mod split;
mod synth;

use sha2::{Digest, Sha256};

use crate::mapping::LabeledDataset;

pub use csv_io::{load_csv, read_csv, save_csv, write_csv};
pub use idx::{load_idx, parse_idx, IMAGES_MAGIC, LABELS_MAGIC};
pub use split::{split, split_indices, standardize, SplitIndices, SplitSpec, Standardizer};
pub use synth::{gen_blobs, gen_hierarchical, generate, BlobSpec};

/// SHA-256 over shape, label names, labels and feature bits, as lowercase hex.
pub fn dataset_hash(dataset: &LabeledDataset) -> String {
    let mut h = Sha256::new();
    h.update((dataset.len() as u64).to_le_bytes());
    h.update((dataset.dim() as u64).to_le_bytes());
    for name in dataset.label_names() {
        h.update(name.to_le_bytes());
    }
    for &y in dataset.y() {
        h.update((y as u64).to_le_bytes());
    }
    for v in dataset.x().data() {
        h.update(v.to_bits().to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
