//! Line-delimited record files: one JSON object per line, UTF-8.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{CageError, Result};

/// Encodes one record as a single line (no trailing newline).
pub fn encode<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("record types serialize infallibly")
}

pub fn decode<T: DeserializeOwned>(line: &str) -> Result<T> {
    serde_json::from_str(line).map_err(|e| CageError::Parse {
        path: "<record>".into(),
        line: 1,
        message: e.to_string(),
    })
}

/// Writes records to `path`, creating parent directories.
pub fn write_lines<'a, T, I>(path: &Path, records: I) -> Result<()>
where
    T: Serialize + 'a,
    I: IntoIterator<Item = &'a T>,
{
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CageError::io(dir, e))?;
    }
    let mut buf = Vec::new();
    for r in records {
        buf.extend_from_slice(encode(r).as_bytes());
        buf.push(b'\n');
    }
    write_atomic(path, &buf)
}

/// Writes via a sibling temp file and rename so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(|e| CageError::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| CageError::io(&tmp, e))?;
    f.sync_all().map_err(|e| CageError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CageError::io(path, e))
}

/// Reads raw non-empty lines with their 1-based line numbers.
pub fn read_raw_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let f = fs::File::open(path).map_err(|e| CageError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| CageError::io(path, e))?;
        if !line.trim().is_empty() {
            out.push((i + 1, line));
        }
    }
    Ok(out)
}

pub fn read_lines<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    read_raw_lines(path)?
        .into_iter()
        .map(|(n, line)| decode_at(path, n, &line))
        .collect()
}

pub fn decode_at<T: DeserializeOwned>(path: &Path, line_no: usize, line: &str) -> Result<T> {
    serde_json::from_str(line).map_err(|e| CageError::Parse {
        path: path.display().to_string(),
        line: line_no,
        message: e.to_string(),
    })
}

/// Parses a whole document (e.g. a scenario file), reporting line and
/// column of the first error.
pub fn parse_document<T: DeserializeOwned>(path: &Path, text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| CageError::Parse {
        path: path.display().to_string(),
        line: e.line(),
        message: e.to_string(),
    })
}
