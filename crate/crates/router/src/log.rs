//! Append-only event log: one JSON line per state transition.
//!
//! Line format: `{"ts","ticket_id","event","payload"}`. Field meanings:
//! `ts` is Unix seconds, `event` is one of received/classified/routed/
//! failed, and `payload` carries the event-specific fields (see
//! `EventPayload`). Every append is flushed before the call returns, so a
//! killed process loses at most the line it was writing; recovery drops
//! exactly that torn tail and warns. Interior corruption is an error, not
//! something to skip silently.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use triage_core::corpus::{Label, NUM_CLASSES};

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error("cannot access event log {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("event log {path} line {line} is corrupt: {message}")]
    Corrupt {
        path: String,
        line: usize,
        message: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Received,
    Classified,
    Routed,
    Failed,
}

/// Event-specific fields, flattened into the line's `payload` object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EventPayload {
    Received {
        subject: String,
        body: String,
    },
    Classified {
        label: Label,
        confidence: [f64; NUM_CLASSES],
        model_fingerprint: String,
    },
    Failed {
        reason: String,
    },
    Routed {},
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEvent {
    pub ts: f64,
    pub ticket_id: String,
    pub event: EventKind,
    pub payload: EventPayload,
}

/// Writer half: exclusive, append-only, flushed per event.
#[derive(Debug)]
pub struct EventLog {
    writer: BufWriter<File>,
    path: PathBuf,
}

fn io_err(path: &Path, source: std::io::Error) -> LogError {
    LogError::Io {
        path: path.display().to_string(),
        source,
    }
}

impl EventLog {
    /// Open for appending, creating the file if needed. Callers must run
    /// `replay` first and truncate any torn tail via the returned offset.
    pub fn open_append(path: &Path) -> Result<Self, LogError> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| io_err(path, e))?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| io_err(path, e))?;
        Ok(EventLog {
            writer: BufWriter::new(file),
            path: path.to_path_buf(),
        })
    }

    pub fn append(&mut self, event: &LogEvent) -> Result<(), LogError> {
        let line = serde_json::to_string(event).expect("event serializes");
        self.writer
            .write_all(line.as_bytes())
            .and_then(|_| self.writer.write_all(b"\n"))
            .and_then(|_| self.writer.flush())
            .map_err(|e| io_err(&self.path, e))
    }
}

/// The result of reading an event log back.
#[derive(Debug)]
pub struct Replay {
    pub events: Vec<LogEvent>,
    /// Byte length of the valid prefix; anything past it is a torn tail.
    pub valid_len: u64,
    pub warning: Option<String>,
}

/// Read every complete event. A final line that is torn (no newline) or
/// unparseable is dropped with a warning; the caller should truncate the
/// file to `valid_len` before appending. A missing file is an empty log.
pub fn replay(path: &Path) -> Result<Replay, LogError> {
    let text = match std::fs::read_to_string(path) {
        Ok(text) => text,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Ok(Replay {
                events: Vec::new(),
                valid_len: 0,
                warning: None,
            })
        }
        Err(e) => return Err(io_err(path, e)),
    };
    parse_log(&text, path)
}

fn parse_log(text: &str, path: &Path) -> Result<Replay, LogError> {
    let mut events = Vec::new();
    let mut valid_len = 0u64;
    let mut warning = None;
    let mut offset = 0usize;
    let mut line_no = 0usize;
    while offset < text.len() {
        line_no += 1;
        let rest = &text[offset..];
        let (line, consumed, complete) = match rest.find('\n') {
            Some(at) => (&rest[..at], at + 1, true),
            None => (rest, rest.len(), false),
        };
        let is_last = offset + consumed >= text.len();
        match serde_json::from_str::<LogEvent>(line) {
            Ok(event) if complete => {
                events.push(event);
                offset += consumed;
                valid_len = offset as u64;
            }
            // Only the final line may be dropped: it is the one a crash
            // can tear.
            _ if is_last => {
                warning = Some(format!(
                    "dropping torn final line {line_no} of {} ({} bytes)",
                    path.display(),
                    line.len()
                ));
                break;
            }
            Ok(_) => unreachable!("incomplete line can only be last"),
            Err(e) => {
                return Err(LogError::Corrupt {
                    path: path.display().to_string(),
                    line: line_no,
                    message: e.to_string(),
                });
            }
        }
    }
    Ok(Replay {
        events,
        valid_len,
        warning,
    })
}

/// Cut a torn tail off so future appends start on a clean line boundary.
pub fn truncate_to(path: &Path, valid_len: u64) -> Result<(), LogError> {
    let file = OpenOptions::new()
        .write(true)
        .open(path)
        .map_err(|e| io_err(path, e))?;
    file.set_len(valid_len).map_err(|e| io_err(path, e))
}
