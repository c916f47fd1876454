use std::fs::{File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::StoreError;

/// An fsync'd append-only JSON-lines file.
pub(super) struct JsonlFile {
    path: PathBuf,
    file: File,
    /// Length of the committed prefix; a failed append is cut back to it.
    len: u64,
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.into(),
        source,
    }
}

/// Make a rename durable. Directories can only be fsync'd on unix.
fn sync_parent(path: &Path) -> Result<(), StoreError> {
    match path.parent() {
        Some(parent) if cfg!(unix) => File::open(parent)
            .and_then(|d| d.sync_all())
            .map_err(io(parent)),
        _ => Ok(()),
    }
}

impl JsonlFile {
    /// Open or create `path`, dropping a torn trailing line, and parse every
    /// committed row.
    pub fn open<T: DeserializeOwned>(path: &Path) -> Result<(Self, Vec<T>), StoreError> {
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(path)
            .map_err(io(path))?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes).map_err(io(path))?;
        let committed = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
        if committed < bytes.len() {
            tracing::warn!(path = %path.display(), dropped = bytes.len() - committed, "discarding torn final line");
            file.set_len(committed as u64).map_err(io(path))?;
            file.sync_all().map_err(io(path))?;
        }
        let mut rows = Vec::new();
        for (i, line) in bytes[..committed].split(|&b| b == b'\n').enumerate() {
            if line.is_empty() {
                continue;
            }
            let row = serde_json::from_slice(line).map_err(|e| StoreError::Corrupt {
                path: path.into(),
                line: i + 1,
                reason: e.to_string(),
            })?;
            rows.push(row);
        }
        Ok((
            JsonlFile {
                path: path.into(),
                file,
                len: committed as u64,
            },
            rows,
        ))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append<T: Serialize>(&mut self, row: &T) -> Result<(), StoreError> {
        let mut line = serde_json::to_vec(row).expect("store rows serialize");
        line.push(b'\n');
        let result = self
            .file
            .write_all(&line)
            .and_then(|_| self.file.sync_data());
        if let Err(e) = result {
            // Best effort: leave no partial line behind for later appends.
            let _ = self.file.set_len(self.len);
            return Err(io(&self.path)(e));
        }
        self.len += line.len() as u64;
        Ok(())
    }

    /// Atomically replace the whole file with `rows`.
    pub fn rewrite<T: Serialize>(&mut self, rows: &[T]) -> Result<(), StoreError> {
        let tmp = self.path.with_extension("jsonl.tmp");
        let mut out = File::create(&tmp).map_err(io(&tmp))?;
        let mut len = 0u64;
        for row in rows {
            let mut line = serde_json::to_vec(row).expect("store rows serialize");
            line.push(b'\n');
            out.write_all(&line).map_err(io(&tmp))?;
            len += line.len() as u64;
        }
        out.sync_all().map_err(io(&tmp))?;
        std::fs::rename(&tmp, &self.path).map_err(io(&self.path))?;
        sync_parent(&self.path)?;
        self.file = OpenOptions::new()
            .read(true)
            .append(true)
            .open(&self.path)
            .map_err(io(&self.path))?;
        self.len = len;
        Ok(())
    }
}
