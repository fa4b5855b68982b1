//! Checkpoint files.
//!
//! Layout: one ASCII header line
//!
//! ```text
//! HACL-CHECKPOINT v1 bytes=<body length> fnv=<16 hex digits>
//! ```
//!
//! followed by exactly `bytes` bytes of JSON holding the config, seed, grid
//! and full run state (weights, predictor parameters and hidden state,
//! history window, environment, every RNG stream). Floats are written with
//! shortest round-trip formatting, so restoring gives a bit-identical state.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::experiment::{Experiment, RunState};
use crate::command_space::CommandGrid;
use crate::error::{Error, Result};

pub const MAGIC: &str = "HACL-CHECKPOINT";
pub const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Body {
    version: u32,
    config: ExperimentConfig,
    seed: u64,
    grid: CommandGrid,
    /// Name of the JSONL file the run writes, relative to the checkpoint.
    records: Option<String>,
    state: RunState,
}

#[derive(Serialize)]
struct BodyRef<'a> {
    version: u32,
    config: &'a ExperimentConfig,
    seed: u64,
    grid: &'a CommandGrid,
    records: Option<&'a str>,
    state: &'a RunState,
}

/// A decoded checkpoint.
pub struct Restored {
    pub experiment: Experiment,
    pub records: Option<String>,
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(0xcbf2_9ce4_8422_2325_u64, |h, &b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

pub fn encode(exp: &Experiment, records: Option<&str>) -> Result<Vec<u8>> {
    let (config, seed, grid, state) = exp.parts();
    let body = serde_json::to_vec(&BodyRef {
        version: VERSION,
        config,
        seed,
        grid,
        records,
        state,
    })
    .map_err(|e| Error::CheckpointBody(e.to_string()))?;
    let mut out = format!("{MAGIC} v{VERSION} bytes={} fnv={:016x}\n", body.len(), fnv1a64(&body)).into_bytes();
    out.extend_from_slice(&body);
    Ok(out)
}

struct Header {
    version: u32,
    bytes: usize,
    fnv: u64,
}

fn parse_header(line: &str) -> Result<Header> {
    let bad = |m: &str| Error::CheckpointHeader(m.to_string());
    let mut it = line.split(' ');
    if it.next() != Some(MAGIC) {
        return Err(bad("missing magic"));
    }
    let version = it
        .next()
        .and_then(|v| v.strip_prefix('v'))
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| bad("missing version"))?;
    let bytes = it
        .next()
        .and_then(|v| v.strip_prefix("bytes="))
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| bad("missing byte count"))?;
    let fnv = it
        .next()
        .and_then(|v| v.strip_prefix("fnv="))
        .filter(|v| v.len() == 16)
        .and_then(|v| u64::from_str_radix(v, 16).ok())
        .ok_or_else(|| bad("missing checksum"))?;
    if it.next().is_some() {
        return Err(bad("trailing header fields"));
    }
    Ok(Header { version, bytes, fnv })
}

pub fn decode(data: &[u8]) -> Result<Restored> {
    let nl = data.iter().position(|&b| b == b'\n').ok_or_else(|| {
        if data.starts_with(MAGIC.as_bytes()) || MAGIC.as_bytes().starts_with(data) {
            Error::CheckpointTruncated
        } else {
            Error::CheckpointHeader("no header line".into())
        }
    })?;
    let line = std::str::from_utf8(&data[..nl]).map_err(|_| Error::CheckpointHeader("not ASCII".into()))?;
    let header = parse_header(line)?;
    if header.version != VERSION {
        return Err(Error::CheckpointVersion {
            found: header.version,
            expected: VERSION,
        });
    }
    let body = &data[nl + 1..];
    if body.len() < header.bytes {
        return Err(Error::CheckpointTruncated);
    }
    if body.len() > header.bytes {
        return Err(Error::CheckpointBody(format!(
            "{} trailing bytes after the body",
            body.len() - header.bytes
        )));
    }
    if fnv1a64(body) != header.fnv {
        return Err(Error::CheckpointBody("checksum mismatch".into()));
    }
    let body: Body = serde_json::from_slice(body).map_err(|e| Error::CheckpointBody(e.to_string()))?;
    if body.version != VERSION {
        return Err(Error::CheckpointVersion {
            found: body.version,
            expected: VERSION,
        });
    }
    let config = body.config;
    config.validate().map_err(|e| Error::CheckpointBody(format!("embedded config: {e}")))?;
    let experiment = Experiment::restore(config, body.seed, body.grid, body.state)?;
    Ok(Restored {
        experiment,
        records: body.records,
    })
}

/// Write atomically: a sibling temp file renamed over `path`.
pub fn save(path: &Path, exp: &Experiment, records: Option<&str>) -> Result<()> {
    let bytes = encode(exp, records)?;
    let tmp = temp_path(path);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Restored> {
    decode(&fs::read(path)?)
}

fn temp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".tmp");
    path.with_file_name(name)
}
