//! Atomic file output: write to a temporary file in the target directory,
//! then rename over the destination.

use std::io::Write;
use std::path::Path;

use crate::error::CliError;

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let fail = |e: &dyn std::fmt::Display| CliError::Data(format!("writing {}: {e}", path.display()));
    std::fs::create_dir_all(dir).map_err(|e| fail(&e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| fail(&e))?;
    tmp.write_all(bytes).map_err(|e| fail(&e))?;
    tmp.as_file().sync_all().map_err(|e| fail(&e))?;
    tmp.persist(path).map_err(|e| fail(&e.error))?;
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    write_atomic(path, text.as_bytes())
}
