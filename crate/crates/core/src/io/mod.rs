//! Files on disk: manifests, probability and RGB PNGs, run configuration.
//!
//! Every writer goes through [`write_atomic`], so a failed command never
//! leaves a partially written file behind.

mod config;
mod manifest;
mod png;

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

pub use config::{load_run_config, RunConfig};
pub use manifest::{
    load_manifest, resolve_path, save_manifest, DatasetManifest, ImageRecord, InstanceRecord,
    MANIFEST_VERSION,
};
pub use png::{
    encode_prob_png, encode_rgb_png, read_prob_png, read_rgb_png, write_prob_png, write_rgb_png,
    PROB_SCALE,
};

/// Writes `bytes` to a temporary file next to `path`, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Pretty JSON with object keys in sorted order and a trailing newline.
pub fn canonical_json<T: Serialize + ?Sized>(value: &T) -> String {
    // serde_json's default map is ordered by key
    let tree = serde_json::to_value(value).expect("in-memory values always serialise");
    let mut text = serde_json::to_string_pretty(&tree).expect("a JSON value always serialises");
    text.push('\n');
    text
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, canonical_json(value).as_bytes())
}
