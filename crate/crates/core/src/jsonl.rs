//! Line-delimited JSON helpers shared by every artifact reader and writer.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

/// A record that failed to deserialize, with its 1-based line number.
#[derive(Debug)]
pub struct LineError {
    pub line: usize,
    pub reason: String,
}

/// Reads every non-blank line of `path` as one `T`.
///
/// I/O failures abort; malformed lines are reported through the inner result so
/// the caller can decide whether one bad record is fatal.
pub fn read<T: DeserializeOwned>(path: &Path) -> io::Result<Result<Vec<T>, LineError>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line) {
            Ok(v) => out.push(v),
            Err(e) => {
                return Ok(Err(LineError {
                    line: idx + 1,
                    reason: e.to_string(),
                }))
            }
        }
    }
    Ok(Ok(out))
}

/// Like [`read`] but skips malformed lines, returning them alongside the good records.
pub fn read_lenient<T: DeserializeOwned>(path: &Path) -> io::Result<(Vec<T>, Vec<LineError>)> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    let mut bad = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line) {
            Ok(v) => out.push(v),
            Err(e) => bad.push(LineError {
                line: idx + 1,
                reason: e.to_string(),
            }),
        }
    }
    Ok((out, bad))
}

pub fn write<'a, T, I>(path: &Path, records: I) -> io::Result<()>
where
    T: Serialize + 'a,
    I: IntoIterator<Item = &'a T>,
{
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> io::Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    std::fs::write(path, bytes)
}
