//! Append-only line-delimited JSON journal.
//!
//! Every append opens the file in append mode, writes one complete line and
//! syncs before returning. On open, a torn final line (no trailing newline,
//! left by a crash mid-write) is cut off; any other unparsable line is
//! reported as corruption.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::marker::PhantomData;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum JournalError {
    #[error("journal {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("journal {path} line {line} is corrupt: {message}")]
    Corrupt { path: PathBuf, line: usize, message: String },
}

#[derive(Debug)]
pub struct Journal<T> {
    path: PathBuf,
    write_lock: Mutex<()>,
    _records: PhantomData<fn() -> T>,
}

impl<T: Serialize + DeserializeOwned> Journal<T> {
    /// Opens (creating if needed) and replays the journal.
    pub fn open(path: &Path) -> Result<(Self, Vec<T>), JournalError> {
        let io = |source| JournalError::Io { path: path.to_owned(), source };
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(io)?;
        }
        let bytes = match fs::read(path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(io(e)),
        };
        let complete = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
        if complete < bytes.len() {
            tracing::warn!(path = %path.display(), dropped = bytes.len() - complete, "dropping torn journal tail");
            let f = OpenOptions::new().write(true).open(path).map_err(io)?;
            f.set_len(complete as u64).map_err(io)?;
            f.sync_all().map_err(io)?;
        }
        let mut records = Vec::new();
        for (i, line) in bytes[..complete].split(|&b| b == b'\n').enumerate() {
            if line.iter().all(u8::is_ascii_whitespace) {
                continue;
            }
            let rec = serde_json::from_slice(line).map_err(|e| JournalError::Corrupt {
                path: path.to_owned(),
                line: i + 1,
                message: e.to_string(),
            })?;
            records.push(rec);
        }
        let journal = Self { path: path.to_owned(), write_lock: Mutex::new(()), _records: PhantomData };
        Ok((journal, records))
    }

    pub fn append(&self, record: &T) -> Result<(), JournalError> {
        let io = |source| JournalError::Io { path: self.path.clone(), source };
        let mut line = serde_json::to_vec(record).expect("journal records serialize");
        line.push(b'\n');
        let _guard = self.write_lock.lock().unwrap();
        let mut f: File = OpenOptions::new().create(true).append(true).open(&self.path).map_err(io)?;
        f.write_all(&line).map_err(io)?;
        f.sync_data().map_err(io)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}
