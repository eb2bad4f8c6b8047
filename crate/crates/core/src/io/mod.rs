//! File formats and report emission.

pub mod canonical;
pub mod emb;
pub mod head;
pub mod manifest;
pub mod npy;
pub mod report;

pub use canonical::{config_hash, to_canonical_string};
pub use emb::{load_embeddings, save_embeddings};
pub use head::{load_head, save_head, HeadFile};
pub use manifest::{load_manifest, save_manifest, ManifestRecord, PopulationManifest, TextRole};
pub use npy::import_npy;
pub use report::{emit_report, Ledger, Report};
