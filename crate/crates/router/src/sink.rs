//! Per-label routing sinks: one JSON line per routed ticket, idempotent by
//! ticket id.
//!
//! The routed-id set is rebuilt from the sink files themselves on startup,
//! so replays after a crash can never duplicate a line. Torn tails follow
//! the same truncate-and-warn policy as the event log.

use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use triage_core::corpus::{Label, NUM_CLASSES};

#[derive(Debug, thiserror::Error)]
pub enum SinkError {
    #[error("cannot access sink {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("sink {path} line {line} is corrupt: {message}")]
    Corrupt {
        path: String,
        line: usize,
        message: String,
    },
}

/// One routed ticket, as the downstream consumer sees it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinkLine {
    pub ticket_id: String,
    pub label: Label,
    pub confidence: [f64; NUM_CLASSES],
    pub ts: f64,
}

pub fn sink_file_name(label: Label) -> &'static str {
    match label {
        Label::Change => "change.jsonl",
        Label::Problem => "problem.jsonl",
        Label::Request => "request.jsonl",
    }
}

#[derive(Debug)]
pub struct SinkWriter {
    files: [BufWriter<File>; NUM_CLASSES],
    paths: [PathBuf; NUM_CLASSES],
    routed: HashSet<String>,
    /// Test hook: when armed, the next append writes half its line,
    /// flushes, and aborts the process.
    tear_next_write: bool,
}

fn io_err(path: &Path, source: std::io::Error) -> SinkError {
    SinkError::Io {
        path: path.display().to_string(),
        source,
    }
}

// Reads one sink file: complete lines yield ids; a torn or unparseable
// final line is truncated away with a warning.
fn scan_sink(path: &Path, routed: &mut HashSet<String>) -> Result<Option<String>, SinkError> {
    let text = match std::fs::read_to_string(path) {
        Ok(text) => text,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(io_err(path, e)),
    };
    let mut offset = 0usize;
    let mut valid_len = 0usize;
    let mut line_no = 0usize;
    let mut warning = None;
    while offset < text.len() {
        line_no += 1;
        let rest = &text[offset..];
        let (line, consumed, complete) = match rest.find('\n') {
            Some(at) => (&rest[..at], at + 1, true),
            None => (rest, rest.len(), false),
        };
        let is_last = offset + consumed >= text.len();
        match serde_json::from_str::<SinkLine>(line) {
            Ok(parsed) if complete => {
                routed.insert(parsed.ticket_id);
                offset += consumed;
                valid_len = offset;
            }
            _ if is_last => {
                warning = Some(format!(
                    "dropping torn final line {line_no} of {}",
                    path.display()
                ));
                break;
            }
            Ok(_) => unreachable!("incomplete line can only be last"),
            Err(e) => {
                return Err(SinkError::Corrupt {
                    path: path.display().to_string(),
                    line: line_no,
                    message: e.to_string(),
                });
            }
        }
    }
    if (valid_len as u64) < std::fs::metadata(path).map_err(|e| io_err(path, e))?.len() {
        let file = OpenOptions::new()
            .write(true)
            .open(path)
            .map_err(|e| io_err(path, e))?;
        file.set_len(valid_len as u64).map_err(|e| io_err(path, e))?;
    }
    Ok(warning)
}

impl SinkWriter {
    /// Open (creating if needed) the three per-label sinks under `dir`,
    /// rebuilding the routed-id set from their contents.
    pub fn open(dir: &Path) -> Result<(Self, Vec<String>), SinkError> {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let mut routed = HashSet::new();
        let mut warnings = Vec::new();
        let paths = [
            dir.join(sink_file_name(Label::Change)),
            dir.join(sink_file_name(Label::Problem)),
            dir.join(sink_file_name(Label::Request)),
        ];
        for path in &paths {
            if let Some(warning) = scan_sink(path, &mut routed)? {
                warnings.push(warning);
            }
        }
        let open_one = |path: &PathBuf| -> Result<BufWriter<File>, SinkError> {
            OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map(BufWriter::new)
                .map_err(|e| io_err(path, e))
        };
        let files = [
            open_one(&paths[0])?,
            open_one(&paths[1])?,
            open_one(&paths[2])?,
        ];
        Ok((
            SinkWriter {
                files,
                paths,
                routed,
                tear_next_write: false,
            },
            warnings,
        ))
    }

    pub fn contains(&self, ticket_id: &str) -> bool {
        self.routed.contains(ticket_id)
    }

    pub fn routed_ids(&self) -> &HashSet<String> {
        &self.routed
    }

    /// Append one line to the ticket's label sink and flush. Returns false
    /// without touching the file when the id was already routed.
    pub fn append(&mut self, line: &SinkLine) -> Result<bool, SinkError> {
        if self.routed.contains(&line.ticket_id) {
            return Ok(false);
        }
        let index = line.label.index();
        let path = self.paths[index].clone();
        let mut bytes = serde_json::to_vec(line).expect("sink line serializes");
        bytes.push(b'\n');
        if self.tear_next_write {
            // Fault injection: commit half a line, then die mid-write.
            let half = bytes.len() / 2;
            let file = &mut self.files[index];
            file.write_all(&bytes[..half])
                .and_then(|_| file.flush())
                .map_err(|e| io_err(&path, e))?;
            std::process::abort();
        }
        let file = &mut self.files[index];
        file.write_all(&bytes)
            .and_then(|_| file.flush())
            .map_err(|e| io_err(&path, e))?;
        self.routed.insert(line.ticket_id.clone());
        Ok(true)
    }

    pub fn arm_tear_on_next_write(&mut self) {
        self.tear_next_write = true;
    }
}
