//! Append-only JSONL transcript: one self-describing, schema-versioned
//! object per line per strategy run.
//!
//! Writes go through a reorder buffer keyed by work-unit sequence so the
//! file's line order is canonical regardless of task completion order; a run
//! repeated with the same seed produces byte-identical transcripts.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompts::OptionOrder;
use crate::strategies::Trace;

pub const TRACE_SCHEMA: &str = "trace.v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureNote {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<String>,
    pub error: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub option_order: Option<OptionOrder>,
}

/// One transcript line: a completed trace or a recorded per-scenario failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptLine {
    pub schema: String,
    pub scenario_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Box<Trace>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<FailureNote>,
}

impl TranscriptLine {
    pub fn trace(trace: Trace) -> Self {
        TranscriptLine {
            schema: TRACE_SCHEMA.to_string(),
            scenario_id: trace.scenario_id.clone(),
            trace: Some(Box::new(trace)),
            failure: None,
        }
    }

    pub fn failure(scenario_id: &str, note: FailureNote) -> Self {
        TranscriptLine {
            schema: TRACE_SCHEMA.to_string(),
            scenario_id: scenario_id.to_string(),
            trace: None,
            failure: Some(note),
        }
    }

    /// The (scenario, option-order) identity of the work unit this line
    /// settles. Strategies without replicated runs have a `None` order.
    pub fn unit_key(&self) -> (String, Option<OptionOrder>) {
        let order = match (&self.trace, &self.failure) {
            (Some(t), _) => t.option_order,
            (None, Some(f)) => f.option_order,
            _ => None,
        };
        (self.scenario_id.clone(), order)
    }
}

#[derive(Debug, Error)]
pub enum TranscriptError {
    #[error("io error on transcript {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt transcript {path} at line {line}: {detail}")]
    Corrupt {
        path: String,
        line: usize,
        detail: String,
    },
}

fn io_err(path: &Path, source: std::io::Error) -> TranscriptError {
    TranscriptError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Strict read for reporting: every line must parse.
pub fn read_transcript(path: &Path) -> Result<Vec<TranscriptLine>, TranscriptError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed: TranscriptLine =
            serde_json::from_str(line).map_err(|e| TranscriptError::Corrupt {
                path: path.display().to_string(),
                line: i + 1,
                detail: e.to_string(),
            })?;
        out.push(parsed);
    }
    Ok(out)
}

/// Read for resuming: a torn final line (a crash mid-append) is dropped and
/// the file truncated back to the last whole line. Corruption anywhere else
/// is still an error.
pub fn read_transcript_for_resume(path: &Path) -> Result<Vec<TranscriptLine>, TranscriptError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut out = Vec::new();
    let mut valid_bytes = 0usize;
    let mut offset = 0usize;
    let lines: Vec<&str> = text.split_inclusive('\n').collect();
    for (i, raw) in lines.iter().enumerate() {
        let line = raw.trim_end_matches('\n');
        let is_last = i + 1 == lines.len();
        if line.trim().is_empty() {
            offset += raw.len();
            valid_bytes = offset;
            continue;
        }
        match serde_json::from_str::<TranscriptLine>(line) {
            Ok(parsed) => {
                out.push(parsed);
                offset += raw.len();
                valid_bytes = offset;
            }
            Err(e) if is_last => {
                log::warn!(
                    "transcript {}: dropping torn final line {} ({e})",
                    path.display(),
                    i + 1
                );
                let file = OpenOptions::new()
                    .write(true)
                    .open(path)
                    .map_err(|e| io_err(path, e))?;
                file.set_len(valid_bytes as u64).map_err(|e| io_err(path, e))?;
                break;
            }
            Err(e) => {
                return Err(TranscriptError::Corrupt {
                    path: path.display().to_string(),
                    line: i + 1,
                    detail: e.to_string(),
                });
            }
        }
    }
    Ok(out)
}

/// Serializes appends into canonical work-unit order: a line for unit `seq`
/// is held until every earlier pending unit has been written. Each written
/// line is flushed before the next is accepted.
pub struct OrderedTranscriptWriter {
    path: PathBuf,
    out: BufWriter<File>,
    remaining: BTreeSet<u64>,
    pending: BTreeMap<u64, TranscriptLine>,
}

impl OrderedTranscriptWriter {
    /// Open in append mode; `remaining` is the set of unit sequence numbers
    /// this run will produce, in canonical order.
    pub fn open(path: &Path, remaining: BTreeSet<u64>) -> Result<Self, TranscriptError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| io_err(path, e))?;
        Ok(OrderedTranscriptWriter {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
            remaining,
            pending: BTreeMap::new(),
        })
    }

    pub fn push(&mut self, seq: u64, line: TranscriptLine) -> Result<(), TranscriptError> {
        self.pending.insert(seq, line);
        self.drain()
    }

    fn drain(&mut self) -> Result<(), TranscriptError> {
        while let Some(&next) = self.remaining.first() {
            let Some(line) = self.pending.remove(&next) else {
                break;
            };
            let json = serde_json::to_string(&line).expect("trace serializes");
            self.out
                .write_all(json.as_bytes())
                .and_then(|_| self.out.write_all(b"\n"))
                .and_then(|_| self.out.flush())
                .map_err(|e| io_err(&self.path, e))?;
            self.remaining.remove(&next);
        }
        Ok(())
    }

    /// All expected units must have been written.
    pub fn finish(mut self) -> Result<(), TranscriptError> {
        self.drain()?;
        debug_assert!(
            self.pending.is_empty() && self.remaining.is_empty(),
            "writer finished with {} pending / {} unwritten units",
            self.pending.len(),
            self.remaining.len()
        );
        Ok(())
    }
}
