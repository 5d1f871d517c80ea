//! One JSON record per line: `{"kind": "...", "seq": n, "data": {...}}`.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Group, StoreError, User};
use crate::annotation::Annotation;
use crate::url::PageUrl;

pub const LOG_FILE: &str = "log.jsonl";
pub const SNAPSHOT_FILE: &str = "snapshot.jsonl";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PinRecord {
    pub user: String,
    pub annotation: String,
    pub pinned: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentRecord {
    pub url: PageUrl,
    pub version: u64,
    pub fetched_at: DateTime<Utc>,
    /// Relative to the store directory.
    pub file: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Record {
    Annotation(Annotation),
    Pin(PinRecord),
    Group(Group),
    User(User),
    Document(DocumentRecord),
}

impl Record {
    fn kind(&self) -> &'static str {
        match self {
            Record::Annotation(_) => "annotation",
            Record::Pin(_) => "pin",
            Record::Group(_) => "group",
            Record::User(_) => "user",
            Record::Document(_) => "document",
        }
    }

    fn data(&self) -> serde_json::Result<Value> {
        match self {
            Record::Annotation(a) => serde_json::to_value(a),
            Record::Pin(p) => serde_json::to_value(p),
            Record::Group(g) => serde_json::to_value(g),
            Record::User(u) => serde_json::to_value(u),
            Record::Document(d) => serde_json::to_value(d),
        }
    }
}

#[derive(Serialize)]
struct LineOut<'a> {
    kind: &'a str,
    seq: u64,
    data: Value,
}

#[derive(Deserialize)]
struct LineIn {
    kind: String,
    seq: u64,
    data: Value,
}

pub fn encode(seq: u64, record: &Record) -> Result<String, StoreError> {
    let line = LineOut {
        kind: record.kind(),
        seq,
        data: record.data()?,
    };
    let mut s = serde_json::to_string(&line)?;
    s.push('\n');
    Ok(s)
}

fn decode(text: &str) -> serde_json::Result<(u64, Record)> {
    let line: LineIn = serde_json::from_str(text)?;
    let record = match line.kind.as_str() {
        "annotation" => Record::Annotation(serde_json::from_value(line.data)?),
        "pin" => Record::Pin(serde_json::from_value(line.data)?),
        "group" => Record::Group(serde_json::from_value(line.data)?),
        "user" => Record::User(serde_json::from_value(line.data)?),
        "document" => Record::Document(serde_json::from_value(line.data)?),
        other => {
            return Err(serde::de::Error::custom(format!("unknown record kind `{other}`")));
        }
    };
    Ok((line.seq, record))
}

/// Reads every record in `path`; a missing file reads as empty.
///
/// A torn final line (no trailing newline, unparseable) is ignored: it is the
/// only damage an interrupted append can leave.
pub fn read_records(path: &Path) -> Result<Vec<(u64, Record)>, StoreError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let mut out = Vec::new();
    let mut lines = BufReader::new(file).lines().enumerate().peekable();
    while let Some((n, line)) = lines.next() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match decode(&line) {
            Ok(rec) => out.push(rec),
            Err(_) if lines.peek().is_none() => {
                tracing::warn!(file = %path.display(), line = n + 1, "ignoring torn trailing record");
            }
            Err(e) => {
                return Err(StoreError::Corrupt {
                    file: path.display().to_string(),
                    line: n + 1,
                    message: e.to_string(),
                })
            }
        }
    }
    Ok(out)
}

pub struct LogWriter {
    path: PathBuf,
    file: BufWriter<File>,
    fsync: bool,
    lines: usize,
}

impl LogWriter {
    pub fn open(path: PathBuf, fsync: bool, existing_lines: usize) -> Result<Self, StoreError> {
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(LogWriter {
            path,
            file: BufWriter::new(file),
            fsync,
            lines: existing_lines,
        })
    }

    pub fn append(&mut self, lines: &[String]) -> Result<(), StoreError> {
        for l in lines {
            self.file.write_all(l.as_bytes())?;
        }
        self.file.flush()?;
        if self.fsync {
            self.file.get_ref().sync_data()?;
        }
        self.lines += lines.len();
        Ok(())
    }

    pub fn lines(&self) -> usize {
        self.lines
    }

    /// Atomically replaces the snapshot with `records`, then empties the log.
    pub fn compact(&mut self, dir: &Path, records: &[String]) -> Result<(), StoreError> {
        let tmp = dir.join(format!("{SNAPSHOT_FILE}.tmp"));
        {
            let mut out = BufWriter::new(File::create(&tmp)?);
            for r in records {
                out.write_all(r.as_bytes())?;
            }
            out.flush()?;
            out.get_ref().sync_all()?;
        }
        fs::rename(&tmp, dir.join(SNAPSHOT_FILE))?;
        self.file.flush()?;
        self.file.get_ref().set_len(0)?;
        self.file.get_ref().sync_all()?;
        // Reopen so the append cursor restarts at zero.
        *self = LogWriter::open(self.path.clone(), self.fsync, 0)?;
        Ok(())
    }
}
