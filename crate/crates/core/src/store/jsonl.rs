//! Append-only JSON-lines files.

use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::StoreError;

/// Parsed content of a JSON-lines file.
#[derive(Debug)]
pub struct LogContents<T> {
    /// `(line number, record)` for every readable line.
    pub records: Vec<(usize, T)>,
    /// Line number of an unterminated, unparsable final line.
    pub truncated_tail: Option<usize>,
}

/// Reads every line. A final line that lacks its newline and fails to parse
/// is reported as a truncated tail instead of an error; corrupt lines
/// elsewhere are errors.
pub fn read_log<T: DeserializeOwned>(path: &Path) -> Result<LogContents<T>, StoreError> {
    let mut text = String::new();
    File::open(path).and_then(|mut f| f.read_to_string(&mut text)).map_err(|e| StoreError::io(path, e))?;
    let terminated = text.is_empty() || text.ends_with('\n');
    let lines: Vec<&str> = text.lines().collect();
    let mut records = Vec::with_capacity(lines.len());
    let mut truncated_tail = None;
    for (i, line) in lines.iter().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(rec) => records.push((line_no, rec)),
            Err(_) if !terminated && line_no == lines.len() => truncated_tail = Some(line_no),
            Err(e) => {
                return Err(StoreError::CorruptLine { path: path.to_path_buf(), line: line_no, message: e.to_string() })
            }
        }
    }
    Ok(LogContents { records, truncated_tail })
}

/// Like [`read_log`] but a truncated tail is an error.
pub fn read_strict<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, StoreError> {
    let contents = read_log(path)?;
    if let Some(line) = contents.truncated_tail {
        return Err(StoreError::TruncatedTail { path: path.to_path_buf(), line });
    }
    Ok(contents.records.into_iter().map(|(_, r)| r).collect())
}

/// Appends all records with a single write. Refuses to extend a file whose
/// last line is unterminated.
pub fn append<T: Serialize>(path: &Path, records: &[T]) -> Result<(), StoreError> {
    let mut buf = String::new();
    for rec in records {
        buf.push_str(&serde_json::to_string(rec).map_err(|e| StoreError::Serialize(e.to_string()))?);
        buf.push('\n');
    }
    append_raw(path, &buf)
}

pub(crate) fn append_raw(path: &Path, text: &str) -> Result<(), StoreError> {
    let mut file = OpenOptions::new().read(true).append(true).open(path).map_err(|e| StoreError::io(path, e))?;
    let len = file.metadata().map_err(|e| StoreError::io(path, e))?.len();
    if len > 0 {
        let mut last = [0u8; 1];
        file.seek(SeekFrom::End(-1)).and_then(|_| file.read_exact(&mut last)).map_err(|e| StoreError::io(path, e))?;
        if last[0] != b'\n' {
            let line = std::fs::read_to_string(path).map_err(|e| StoreError::io(path, e))?.lines().count();
            return Err(StoreError::TruncatedTail { path: path.to_path_buf(), line });
        }
    }
    file.write_all(text.as_bytes()).and_then(|_| file.sync_data()).map_err(|e| StoreError::io(path, e))
}
