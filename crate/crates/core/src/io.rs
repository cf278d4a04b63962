//! Line-delimited JSON helpers and crash-safe file output.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
}

impl IoError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        IoError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// Parses one JSON value per non-blank line.
pub fn parse_jsonl<T: DeserializeOwned>(text: &str, origin: &str) -> Result<Vec<T>, IoError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| IoError::Parse {
                path: origin.to_string(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>, IoError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    parse_jsonl(&text, &path.display().to_string())
}

pub fn to_jsonl<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("serializable value"));
        out.push('\n');
    }
    out
}

pub fn to_pretty_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable value");
    s.push('\n');
    s
}

/// Writes through a temporary file in the same directory and renames it into
/// place, so an interrupted run never leaves a truncated file behind.
pub fn write_atomic(path: impl AsRef<Path>, contents: &[u8]) -> Result<(), IoError> {
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| IoError::io(dir, e))?;
    tmp.write_all(contents).map_err(|e| IoError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| IoError::io(path, e))?;
    tmp.persist(path).map_err(|e| IoError::io(path, e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_round_trip_skips_blank_lines() {
        let items = vec![serde_json::json!({"a": 1}), serde_json::json!([2])];
        let text = format!("\n{}\n", to_jsonl(&items));
        let back: Vec<serde_json::Value> = parse_jsonl(&text, "mem").unwrap();
        assert_eq!(back, items);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = parse_jsonl::<serde_json::Value>("{}\n{oops", "f.jsonl").unwrap_err();
        assert!(err.to_string().starts_with("f.jsonl:2:"), "{err}");
    }

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/out.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }
}
