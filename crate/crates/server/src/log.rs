//! Append-only record log, one JSON object per line.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use cavfleet_core::wire::{HealthReport, RelayMeasurement, TelemetryRecord, VersionSet};
use cavfleet_core::Vin;
use serde::{Deserialize, Serialize};

use crate::error::LogError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogRecord {
    Telemetry(TelemetryRecord),
    Health(HealthReport),
    Whitelist { vin: Vin, whitelisted: bool, t: f64 },
    Heartbeat { vin: Vin, t: f64 },
    Relay(RelayMeasurement),
    Assignment { vin: Vin, version_set_id: String, t: f64 },
    VersionSet(VersionSet),
}

impl LogRecord {
    pub fn kind(&self) -> &'static str {
        match self {
            LogRecord::Telemetry(_) => "telemetry",
            LogRecord::Health(_) => "health",
            LogRecord::Whitelist { .. } => "whitelist",
            LogRecord::Heartbeat { .. } => "heartbeat",
            LogRecord::Relay(_) => "relay",
            LogRecord::Assignment { .. } => "assignment",
            LogRecord::VersionSet(_) => "version_set",
        }
    }
}

enum Sink {
    Memory(Vec<String>),
    File { file: File, path: PathBuf },
}

/// Writes records in commit order. Each line is written with a single
/// `write_all`, so a crash leaves at most one torn final line.
pub struct LogWriter {
    sink: Sink,
    len: u64,
}

impl LogWriter {
    pub fn in_memory() -> Self {
        LogWriter {
            sink: Sink::Memory(Vec::new()),
            len: 0,
        }
    }

    /// Opens `path` for appending. `existing` is the number of records
    /// already in the file.
    pub fn append_to(path: &Path, existing: u64) -> Result<Self, LogError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| LogError::Io(path.display().to_string(), e))?;
        Ok(LogWriter {
            sink: Sink::File {
                file,
                path: path.to_owned(),
            },
            len: existing,
        })
    }

    pub fn append(&mut self, rec: &LogRecord) -> Result<(), LogError> {
        let mut line = serde_json::to_string(rec).map_err(LogError::Encode)?;
        match &mut self.sink {
            Sink::Memory(lines) => lines.push(line),
            Sink::File { file, path } => {
                line.push('\n');
                file.write_all(line.as_bytes())
                    .map_err(|e| LogError::Io(path.display().to_string(), e))?;
            }
        }
        self.len += 1;
        Ok(())
    }

    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Lines held by an in-memory log; `None` for file-backed logs.
    pub fn memory_lines(&self) -> Option<&[String]> {
        match &self.sink {
            Sink::Memory(lines) => Some(lines),
            Sink::File { .. } => None,
        }
    }

    pub fn sync(&mut self) -> Result<(), LogError> {
        if let Sink::File { file, path } = &mut self.sink {
            file.sync_data()
                .map_err(|e| LogError::Io(path.display().to_string(), e))?;
        }
        Ok(())
    }
}

/// Parses log lines. An unterminated, unparsable last line is treated as a
/// torn write and dropped; any other bad line is an error.
pub fn parse_log<R: Read>(reader: R) -> Result<Vec<LogRecord>, LogError> {
    let mut out = Vec::new();
    let mut reader = BufReader::new(reader);
    let mut buf = String::new();
    let mut line_no = 0usize;
    loop {
        buf.clear();
        let n = reader.read_line(&mut buf).map_err(|e| LogError::Io("log".into(), e))?;
        if n == 0 {
            break;
        }
        line_no += 1;
        let terminated = buf.ends_with('\n');
        let text = buf.trim();
        if text.is_empty() {
            continue;
        }
        match serde_json::from_str::<LogRecord>(text) {
            Ok(r) => out.push(r),
            Err(_) if !terminated => {
                tracing::warn!(line = line_no, "dropping torn final log line");
                break;
            }
            Err(e) => return Err(LogError::Parse { line: line_no, source: e }),
        }
    }
    Ok(out)
}

pub fn read_log(path: &Path) -> Result<Vec<LogRecord>, LogError> {
    let f = File::open(path).map_err(|e| LogError::Io(path.display().to_string(), e))?;
    parse_log(f)
}
