use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use tempfile::NamedTempFile;

use crate::error::CliError;

/// Floats in CSV output: 17 significant digits.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Files staged in memory and written together: each goes to a temporary
/// file in the target directory and is renamed into place only after every
/// file has been written.
#[derive(Default)]
pub struct Outputs {
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    pub fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut bytes =
            serde_json::to_vec_pretty(value).map_err(|e| CliError::Output(e.to_string()))?;
        bytes.push(b'\n');
        self.add(name, bytes);
        Ok(())
    }

    pub fn commit(self, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
        let io = |e: std::io::Error| CliError::Output(format!("{}: {e}", dir.display()));
        std::fs::create_dir_all(dir).map_err(io)?;
        let mut staged = Vec::with_capacity(self.files.len());
        for (name, bytes) in &self.files {
            let mut tmp = NamedTempFile::new_in(dir).map_err(io)?;
            tmp.write_all(bytes).map_err(io)?;
            tmp.as_file().sync_all().map_err(io)?;
            staged.push((tmp, dir.join(name)));
        }
        let mut written = Vec::with_capacity(staged.len());
        for (tmp, path) in staged {
            tmp.persist(&path)
                .map_err(|e| CliError::Output(format!("{}: {}", path.display(), e.error)))?;
            written.push(path);
        }
        Ok(written)
    }
}

/// CSV text from a header and rows of preformatted cells.
pub fn csv_text(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Vec<u8> {
    let mut s = header.join(",");
    s.push('\n');
    for row in rows {
        let _ = writeln!(s, "{}", row.join(","));
    }
    s.into_bytes()
}
