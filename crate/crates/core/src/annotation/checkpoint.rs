//! Append-only journal of processed annotation units.
//!
//! The first line is a header object; every further line is one
//! [`UnitRecord`]. Units are appended in processing order and flushed one by
//! one, so a killed run leaves at most the tail of one line behind. Any line
//! that does not parse makes the whole file unusable for resumption.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{AnnotationError, UnitRecord};

pub const KIND: &str = "togglebench-annotation-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
struct Header {
    kind: String,
    version: u32,
}

fn corrupt(path: &Path, line: usize, why: impl std::fmt::Display) -> AnnotationError {
    AnnotationError::CorruptCheckpoint {
        path: path.to_path_buf(),
        message: format!("line {line}: {why}"),
    }
}

fn io_err(path: &Path, e: std::io::Error) -> AnnotationError {
    AnnotationError::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

/// True when the file exists and holds at least one byte.
pub fn exists(path: &Path) -> bool {
    fs::metadata(path).map(|m| m.len() > 0).unwrap_or(false)
}

pub fn load(path: &Path) -> Result<Vec<UnitRecord>, AnnotationError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header = match lines.next() {
        None => return Ok(Vec::new()),
        Some(l) => l.map_err(|e| io_err(path, e))?,
    };
    let header: Header = serde_json::from_str(&header).map_err(|e| corrupt(path, 1, e))?;
    if header.kind != KIND || header.version != VERSION {
        return Err(corrupt(
            path,
            1,
            format!("unsupported header {}/{}", header.kind, header.version),
        ));
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        let rec: UnitRecord = serde_json::from_str(&line).map_err(|e| corrupt(path, i + 2, e))?;
        out.push(rec);
    }
    Ok(out)
}

pub struct CheckpointWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl CheckpointWriter {
    /// Truncates any existing file and writes a fresh header.
    pub fn create(path: &Path) -> Result<Self, AnnotationError> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
        }
        let file = File::create(path).map_err(|e| io_err(path, e))?;
        let mut w = Self {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        };
        let header = Header {
            kind: KIND.into(),
            version: VERSION,
        };
        w.write_line(&serde_json::to_string(&header).expect("header"))?;
        Ok(w)
    }

    /// Opens a checkpoint that [`load`] already accepted.
    pub fn append(path: &Path) -> Result<Self, AnnotationError> {
        let file = OpenOptions::new()
            .append(true)
            .open(path)
            .map_err(|e| io_err(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        })
    }

    fn write_line(&mut self, line: &str) -> Result<(), AnnotationError> {
        writeln!(self.out, "{line}")
            .and_then(|_| self.out.flush())
            .map_err(|e| io_err(&self.path, e))
    }

    pub fn record(&mut self, rec: &UnitRecord) -> Result<(), AnnotationError> {
        self.write_line(&serde_json::to_string(rec).expect("unit record"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::BBox;
    use crate::annotation::{DropReason, UnitOutcome};

    fn rec(id: &str) -> UnitRecord {
        UnitRecord {
            screen_id: id.into(),
            bbox: BBox::new(0, 0, 10, 10).unwrap(),
            outcome: UnitOutcome::Dropped {
                reason: DropReason::NotToggle,
            },
            verdicts: Vec::new(),
        }
    }

    #[test]
    fn write_then_append_then_load() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ck.jsonl");
        assert!(!exists(&p));
        CheckpointWriter::create(&p).unwrap().record(&rec("a")).unwrap();
        CheckpointWriter::append(&p).unwrap().record(&rec("b")).unwrap();
        let got = load(&p).unwrap();
        assert_eq!(got, vec![rec("a"), rec("b")]);
    }

    #[test]
    fn corruption_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ck.jsonl");
        CheckpointWriter::create(&p).unwrap().record(&rec("a")).unwrap();
        let mut text = fs::read_to_string(&p).unwrap();
        text.push_str("{\"screen_id\":\"b\",\"bb");
        fs::write(&p, text).unwrap();
        assert!(matches!(
            load(&p),
            Err(AnnotationError::CorruptCheckpoint { .. })
        ));
        fs::write(&p, "{\"kind\":\"other\",\"version\":1}\n").unwrap();
        assert!(matches!(
            load(&p),
            Err(AnnotationError::CorruptCheckpoint { .. })
        ));
    }
}
