//! Portable file formats and run configuration.
//!
//! * [`tensorfile`] — the bit-exact binary tensor container used for
//!   volumes, masks, datasets and checkpoints.
//! * [`config`] — flat `key=value` run configuration with a closed key set.
//! * [`pgm`] — 8-bit binary PGM previews in a display window.

pub mod config;
pub mod pgm;
pub mod tensorfile;

use crate::error::Result;
use std::io::Write;
use std::path::Path;

/// Write a reproducibility manifest: the full config snapshot plus run
/// extras (seeds, counts, build id).
pub fn write_manifest(path: &Path, snapshot: &str, extras: &[(&str, String)]) -> Result<()> {
    let mut out = String::new();
    out.push_str(snapshot);
    for (k, v) in extras {
        out.push_str(&format!("{k}={v}\n"));
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}
