//! Line-delimited JSON dataset manifests.
//!
//! Each line is one object: `{"mixture": PATH, "sources": [PATH, ...],
//! "overlap_ratio": REAL|null}`. Relative paths resolve against the
//! manifest's directory.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::wav::read_wav;
use super::MixtureExample;
use crate::error::{Error, Result};

/// Additivity tolerance for mixtures read back from disk; covers 16-bit
/// quantisation of the mixture and each source.
pub const FILE_MIXTURE_TOLERANCE: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    pub mixture: String,
    pub sources: Vec<String>,
    #[serde(default)]
    pub overlap_ratio: Option<f64>,
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Manifest {
                path: path.to_path_buf(),
                line: i + 1,
                msg: e.to_string(),
            })
        })
        .collect()
}

pub fn write_manifest(path: impl AsRef<Path>, records: &[ManifestRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r).expect("manifest records serialise");
        out.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

pub fn load_example(record: &ManifestRecord, base_dir: &Path) -> Result<MixtureExample> {
    let mixture = read_wav(resolve(base_dir, &record.mixture))?;
    let sources = record
        .sources
        .iter()
        .map(|s| read_wav(resolve(base_dir, s)))
        .collect::<Result<Vec<_>>>()?;
    MixtureExample::new(mixture, sources, None, record.overlap_ratio, FILE_MIXTURE_TOLERANCE)
}

/// Reads a manifest and every example it references.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<(ManifestRecord, MixtureExample)>> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    read_manifest(path)?
        .into_iter()
        .map(|r| {
            let ex = load_example(&r, base)?;
            Ok((r, ex))
        })
        .collect()
}
