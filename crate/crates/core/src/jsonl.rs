//! JSON-lines and atomic file helpers shared by the pipeline stages.

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum JsonlError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {source}")]
    Decode {
        path: String,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("cannot encode record: {0}")]
    Encode(#[from] serde_json::Error),
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(io::Error) -> JsonlError + '_ {
    move |source| JsonlError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, JsonlError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| JsonlError::Decode {
            path: path.display().to_string(),
            line: i + 1,
            source,
        })?);
    }
    Ok(out)
}

pub fn to_jsonl_string<T: Serialize>(records: &[T]) -> Result<String, JsonlError> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

/// Writes via a temporary sibling and rename, so readers never see a torn file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), JsonlError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), JsonlError> {
    write_atomic(path, to_jsonl_string(records)?.as_bytes())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), JsonlError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, JsonlError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| JsonlError::Decode {
        path: path.display().to_string(),
        line: source.line(),
        source,
    })
}

/// Append-only JSON-lines log.
///
/// On open, an unterminated trailing line left by an interrupted writer is
/// cut off; every complete line must decode.
pub struct AppendLog {
    writer: BufWriter<File>,
    path: String,
}

impl AppendLog {
    pub fn open<T: DeserializeOwned>(path: &Path) -> Result<(Self, Vec<T>), JsonlError> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        let mut existing = Vec::new();
        if path.exists() {
            let text = fs::read_to_string(path).map_err(io_err(path))?;
            let complete = match text.rfind('\n') {
                Some(i) => i + 1,
                None => 0,
            };
            if complete < text.len() {
                log::warn!(
                    "{}: dropping {} bytes of unterminated trailing record",
                    path.display(),
                    text.len() - complete
                );
                let f = OpenOptions::new().write(true).open(path).map_err(io_err(path))?;
                f.set_len(complete as u64).map_err(io_err(path))?;
            }
            for (i, line) in text[..complete].lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                existing.push(serde_json::from_str(line).map_err(|source| JsonlError::Decode {
                    path: path.display().to_string(),
                    line: i + 1,
                    source,
                })?);
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(io_err(path))?;
        Ok((
            AppendLog {
                writer: BufWriter::new(file),
                path: path.display().to_string(),
            },
            existing,
        ))
    }

    pub fn append<T: Serialize>(&mut self, record: &T) -> Result<(), JsonlError> {
        let mut line = serde_json::to_vec(record)?;
        line.push(b'\n');
        let path = self.path.clone();
        let wrap = |source| JsonlError::Io { path, source };
        self.writer
            .write_all(&line)
            .and_then(|_| self.writer.flush())
            .map_err(wrap)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn append_log_truncates_torn_tail() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        fs::write(&path, "1\n2\n{\"torn").unwrap();
        let (mut log, existing) = AppendLog::open::<u32>(&path).unwrap();
        assert_eq!(existing, vec![1, 2]);
        log.append(&3u32).unwrap();
        drop(log);
        assert_eq!(fs::read_to_string(&path).unwrap(), "1\n2\n3\n");
    }

    #[test]
    fn corrupt_complete_line_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        fs::write(&path, "1\nnope\n").unwrap();
        assert!(matches!(
            AppendLog::open::<u32>(&path),
            Err(JsonlError::Decode { line: 2, .. })
        ));
    }
}
