//! Run log directory: the resolved scenario, the server's message log,
//! sampled vehicle states and an integrity manifest over all three.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use cavfleet_core::analytics::{group_by_vin, Trajectories};
use cavfleet_core::VehicleState;
use cavfleet_server::{parse_log, FleetState, LogRecord};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::SimError;
use crate::scenario::ScenarioConfig;

pub const SNAPSHOT: &str = "scenario.snapshot";
pub const MESSAGES: &str = "messages.jsonl";
pub const STATES: &str = "states.jsonl";
pub const INTEGRITY: &str = "integrity.hash";

/// Files covered by the manifest, in manifest order.
pub const HASHED_FILES: [&str; 3] = [SNAPSHOT, MESSAGES, STATES];

/// Every vehicle's state at one tick, before that tick's step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateFrame {
    pub tick: u64,
    pub t: f64,
    pub vehicles: Vec<VehicleState>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SimError + '_ {
    move |e| SimError::Io(path.display().to_string(), e)
}

pub struct StatesWriter {
    out: BufWriter<File>,
    path: PathBuf,
}

impl StatesWriter {
    pub fn create(dir: &Path) -> Result<Self, SimError> {
        let path = dir.join(STATES);
        let f = File::create(&path).map_err(io_err(&path))?;
        Ok(StatesWriter {
            out: BufWriter::new(f),
            path,
        })
    }

    pub fn write(&mut self, frame: &StateFrame) -> Result<(), SimError> {
        serde_json::to_writer(&mut self.out, frame).expect("state frames serialize");
        self.out.write_all(b"\n").map_err(io_err(&self.path))
    }

    pub fn finish(mut self) -> Result<(), SimError> {
        self.out.flush().map_err(io_err(&self.path))?;
        self.out.get_ref().sync_data().map_err(io_err(&self.path))
    }
}

pub fn sha256_file(path: &Path) -> Result<String, SimError> {
    let mut f = File::open(path).map_err(io_err(path))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(io_err(path))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

/// Writes `integrity.hash` in `sha256sum` format.
pub fn write_integrity(dir: &Path) -> Result<String, SimError> {
    let mut manifest = String::new();
    for name in HASHED_FILES {
        manifest.push_str(&format!("{}  {}\n", sha256_file(&dir.join(name))?, name));
    }
    let path = dir.join(INTEGRITY);
    std::fs::write(&path, &manifest).map_err(io_err(&path))?;
    Ok(manifest)
}

pub fn verify_integrity(dir: &Path) -> Result<(), SimError> {
    let path = dir.join(INTEGRITY);
    let manifest = std::fs::read_to_string(&path).map_err(io_err(&path))?;
    let mut seen = Vec::new();
    for line in manifest.lines() {
        let (digest, name) = line
            .split_once("  ")
            .ok_or_else(|| SimError::Integrity(format!("malformed manifest line {line:?}")))?;
        if !HASHED_FILES.contains(&name) {
            return Err(SimError::Integrity(format!("unexpected file {name:?} in manifest")));
        }
        let file = dir.join(name);
        if !file.exists() {
            return Err(SimError::Integrity(format!("{name} is missing")));
        }
        let actual = sha256_file(&file)?;
        if actual != digest {
            return Err(SimError::Integrity(format!("{name} does not match its recorded hash")));
        }
        seen.push(name);
    }
    for name in HASHED_FILES {
        if !seen.contains(&name) {
            return Err(SimError::Integrity(format!("manifest does not cover {name}")));
        }
    }
    Ok(())
}

/// A verified run log.
#[derive(Debug)]
pub struct RunLog {
    dir: PathBuf,
    scenario: ScenarioConfig,
}

impl RunLog {
    /// Opens `dir` after checking the integrity manifest.
    pub fn open(dir: &Path) -> Result<Self, SimError> {
        verify_integrity(dir)?;
        let snap_path = dir.join(SNAPSHOT);
        let text = std::fs::read_to_string(&snap_path).map_err(io_err(&snap_path))?;
        Ok(RunLog {
            dir: dir.to_owned(),
            scenario: ScenarioConfig::from_snapshot(&text)?,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn scenario(&self) -> &ScenarioConfig {
        &self.scenario
    }

    pub fn messages(&self) -> Result<Vec<LogRecord>, SimError> {
        let path = self.dir.join(MESSAGES);
        let f = File::open(&path).map_err(io_err(&path))?;
        Ok(parse_log(f)?)
    }

    /// Telemetry streams per VIN, rebuilt from the message log.
    pub fn trajectories(&self) -> Result<Trajectories, SimError> {
        Ok(trajectories_from(&self.messages()?))
    }

    /// Server state obtained by folding the message log.
    pub fn server_state(&self) -> Result<FleetState, SimError> {
        let cfg = self.scenario.server_config();
        Ok(FleetState::replay(cfg.relay_ttl, cfg.default_version_set, &self.messages()?))
    }

    pub fn states(&self) -> Result<Vec<StateFrame>, SimError> {
        let path = self.dir.join(STATES);
        let f = File::open(&path).map_err(io_err(&path))?;
        let mut out = Vec::new();
        for (i, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(io_err(&path))?;
            let frame = serde_json::from_str(&line)
                .map_err(|e| SimError::Integrity(format!("{STATES} line {}: {e}", i + 1)))?;
            out.push(frame);
        }
        Ok(out)
    }
}

pub fn trajectories_from(records: &[LogRecord]) -> Trajectories {
    group_by_vin(records.iter().filter_map(|r| match r {
        LogRecord::Telemetry(t) => Some(t.clone()),
        _ => None,
    }))
}
