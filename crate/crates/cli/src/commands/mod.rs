pub mod compare;
pub mod eval;
pub mod synth;
pub mod train;

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

use crate::UsageError;

/// Creates `dir`, refusing to reuse a non-empty one unless `force` is set.
fn prepare_out_dir(dir: &Path, force: bool) -> Result<()> {
    if !force && dir.read_dir().is_ok_and(|mut d| d.next().is_some()) {
        bail!(UsageError(format!(
            "{} exists and is not empty (use --force to write into it)",
            dir.display()
        )));
    }
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn real(v: f64) -> String {
    format!("{v:.10}")
}
