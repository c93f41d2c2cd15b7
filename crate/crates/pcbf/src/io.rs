//! File formats: dataset and metrics CSVs, JSON checkpoints and reports, and
//! the binary oracle cache.
//!
//! Floats in CSV files are written with 17 significant digits, which
//! round-trips every `f64` exactly.

use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use pcbf_core::envs::{mc_return_oracle, OracleSamples, RolloutLimits};
use pcbf_core::rng::streams;
use pcbf_core::trainer::{EvalRecord, Progress};
use pcbf_core::{Critic, MlpParams, Mrp, OneHot, ReturnLaw, RngStream, Transition};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn parse_f64(s: &str, path: &Path) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| CliError::format(path, format!("not a number: {s:?}")))
}

pub fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!(
        "{}tmp",
        path.extension().map(|e| format!("{}.", e.to_string_lossy())).unwrap_or_default()
    ));
    fs::write(&tmp, bytes).map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::json(path, e))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::json(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    csv::Writer::from_path(path).map_err(|e| CliError::csv(path, e))
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    csv::Reader::from_path(path).map_err(|e| CliError::csv(path, e))
}

/// Writes a CSV table of pre-formatted cells.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(|e| CliError::csv(path, e))?;
    for row in rows {
        w.write_record(row).map_err(|e| CliError::csv(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Reads a CSV table as its header and raw string rows.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv_reader(path)?;
    let header = r
        .headers()
        .map_err(|e| CliError::csv(path, e))?
        .iter()
        .map(String::from)
        .collect();
    let rows = r
        .records()
        .map(|rec| {
            rec.map(|r| r.iter().map(String::from).collect())
                .map_err(|e| CliError::csv(path, e))
        })
        .collect::<Result<_>>()?;
    Ok((header, rows))
}

pub const DATASET_HEADER: [&str; 4] = ["state", "reward", "next_state", "done"];

/// `state,reward,next_state,done` with `next_state = -1` and `done = 1` for
/// terminal transitions.
pub fn write_dataset(path: &Path, data: &[Transition]) -> Result<()> {
    let rows: Vec<Vec<String>> = data
        .iter()
        .map(|t| {
            vec![
                t.state.to_string(),
                fmt_f64(t.reward),
                t.next_state.map_or("-1".into(), |s| s.to_string()),
                u8::from(t.done).to_string(),
            ]
        })
        .collect();
    write_csv(path, &DATASET_HEADER, &rows)
}

pub fn read_dataset(path: &Path) -> Result<Vec<Transition>> {
    let (header, rows) = read_csv(path)?;
    if header != DATASET_HEADER {
        return Err(CliError::format(path, format!("unexpected header {header:?}")));
    }
    rows.iter()
        .enumerate()
        .map(|(i, row)| {
            let bad = |what: &str| CliError::format(path, format!("row {}: bad {what}", i + 1));
            let state: usize = row[0].parse().map_err(|_| bad("state"))?;
            let reward = parse_f64(&row[1], path)?;
            let next: i64 = row[2].parse().map_err(|_| bad("next_state"))?;
            let done = match row[3].as_str() {
                "0" => false,
                "1" => true,
                _ => return Err(bad("done flag")),
            };
            match (done, next) {
                (true, -1) => Ok(Transition::terminal(state, reward)),
                (false, n) if n >= 0 => Ok(Transition::step(state, reward, n as usize)),
                _ => Err(bad("next_state for the done flag")),
            }
        })
        .collect()
}

/// Streams one row per training step: `step,loss,loss_std,w1_s<state>...`.
/// `loss_std` is empty until a full window exists; W1 cells are empty except
/// at evaluation steps.
pub struct MetricsWriter {
    path: PathBuf,
    out: BufWriter<File>,
    n_states: usize,
}

impl MetricsWriter {
    pub fn create(path: &Path, eval_states: &[usize]) -> Result<Self> {
        let file = File::create(path).map_err(|e| CliError::io(path, e))?;
        let mut w = Self {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
            n_states: eval_states.len(),
        };
        let mut header = String::from("step,loss,loss_std");
        for s in eval_states {
            header.push_str(&format!(",w1_s{s}"));
        }
        w.line(&header)?;
        Ok(w)
    }

    fn line(&mut self, text: &str) -> Result<()> {
        writeln!(self.out, "{text}").map_err(|e| CliError::io(&self.path, e))
    }

    pub fn record(&mut self, step: usize, loss: f64, loss_std: Option<f64>, eval: Option<&EvalRecord>) -> Result<()> {
        let mut row = format!("{step},{},{}", fmt_f64(loss), loss_std.map(fmt_f64).unwrap_or_default());
        for k in 0..self.n_states {
            row.push(',');
            if let Some(e) = eval {
                row.push_str(&fmt_f64(e.w1[k]));
            }
        }
        self.line(&row)
    }

    pub fn record_progress(&mut self, p: &Progress<'_>) -> Result<()> {
        self.record(p.step, p.loss, p.windowed_std, p.eval)
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| CliError::io(&self.path, e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetFile {
    /// Row-major `(fan_in, fan_out)` weights, one array per layer.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl NetFile {
    fn from_params(p: &MlpParams) -> Self {
        Self {
            weights: p.layers().iter().map(|l| l.weights.clone()).collect(),
            biases: p.layers().iter().map(|l| l.biases.clone()).collect(),
        }
    }

    fn to_params(&self, sizes: &[usize], seed: u64) -> pcbf_core::Result<MlpParams> {
        MlpParams::from_parts(sizes, self.weights.clone(), self.biases.clone(), seed)
    }
}

pub const CHECKPOINT_FORMAT: &str = "pcbf-checkpoint-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub layer_sizes: Vec<usize>,
    /// Seed the online network was initialised from.
    pub seed: u64,
    pub step: usize,
    pub online: NetFile,
    pub target: NetFile,
}

impl Checkpoint {
    pub fn new(critic: &Critic, step: usize) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            layer_sizes: critic.online.layer_sizes().to_vec(),
            seed: critic.online.seed(),
            step,
            online: NetFile::from_params(&critic.online),
            target: NetFile::from_params(&critic.target),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ck: Self = read_json(path)?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(CliError::format(path, format!("unknown checkpoint format {:?}", ck.format)));
        }
        Ok(ck)
    }

    /// Online and target networks; the context width is the input width
    /// minus `(z, t)`.
    pub fn critic(&self, path: &Path) -> Result<Critic> {
        let online = self.online.to_params(&self.layer_sizes, self.seed)?;
        let target = self.target.to_params(&self.layer_sizes, self.seed)?;
        let ctx = self.layer_sizes[0]
            .checked_sub(2)
            .filter(|&c| c > 0)
            .ok_or_else(|| CliError::format(path, "input layer narrower than [z, t, context]"))?;
        let mut critic = Critic::from_params(online, OneHot::new(ctx));
        critic.target = target;
        Ok(critic)
    }
}

const ORACLE_MAGIC: &[u8; 8] = b"PCBFORC1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleHeader {
    pub spec_id: String,
    pub state: usize,
    pub gamma: f64,
    pub n: usize,
    pub seed: u64,
    pub horizon_cap: usize,
    pub tail_tol: f64,
    /// Largest discounted-reward bound dropped by a truncated rollout.
    pub truncation_tail: f64,
    pub truncated_rollouts: usize,
}

/// Cache directory: `PCBF_CACHE_DIR` if set, else `<out>/cache`.
pub fn cache_dir(out: &Path) -> PathBuf {
    std::env::var_os("PCBF_CACHE_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| out.join("cache"))
}

pub fn oracle_path(dir: &Path, spec_id: &str, state: usize, gamma: f64, n: usize, seed: u64) -> PathBuf {
    dir.join(format!(
        "oracle-{spec_id}-s{state}-g{:016x}-n{n}-seed{seed}.bin",
        gamma.to_bits()
    ))
}

/// Magic, little-endian `u32` header length, JSON header, then `n` sorted
/// little-endian `f64` samples.
pub fn write_oracle(path: &Path, header: &OracleHeader, samples: &[f64]) -> Result<()> {
    let json = serde_json::to_vec(header).map_err(|e| CliError::json(path, e))?;
    let mut bytes = Vec::with_capacity(12 + json.len() + 8 * samples.len());
    bytes.extend_from_slice(ORACLE_MAGIC);
    bytes.extend_from_slice(&(json.len() as u32).to_le_bytes());
    bytes.extend_from_slice(&json);
    for x in samples {
        bytes.extend_from_slice(&x.to_le_bytes());
    }
    write_atomic(path, &bytes)
}

pub fn read_oracle(path: &Path) -> Result<(OracleHeader, Vec<f64>)> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| CliError::io(path, e))?;
    let short = || CliError::format(path, "truncated oracle cache");
    if bytes.len() < 12 || &bytes[..8] != ORACLE_MAGIC {
        return Err(CliError::format(path, "not an oracle cache file"));
    }
    let hlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = bytes.get(12..12 + hlen).ok_or_else(short)?;
    let header: OracleHeader = serde_json::from_slice(body).map_err(|e| CliError::json(path, e))?;
    let data = &bytes[12 + hlen..];
    if data.len() != 8 * header.n {
        return Err(short());
    }
    let samples = data
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((header, samples))
}

/// Loads the Monte Carlo return law of `state` from the cache, running and
/// caching the rollouts on a miss. Rollouts for `state` use the stream
/// `seed → ORACLE → state`.
pub fn oracle_law(dir: &Path, mrp: &Mrp, state: usize, gamma: f64, n: usize, seed: u64) -> Result<ReturnLaw> {
    let spec_id = mrp.spec().id();
    let path = oracle_path(dir, &spec_id, state, gamma, n, seed);
    if path.exists() {
        let (header, samples) = read_oracle(&path)?;
        if header.spec_id != spec_id || header.state != state || header.n != n || header.seed != seed {
            return Err(CliError::format(&path, "cache header does not match its key"));
        }
        return Ok(ReturnLaw::empirical(samples)?);
    }
    create_dir(dir)?;
    let limits = RolloutLimits::default();
    let mut rng = RngStream::new(seed).split(streams::ORACLE).split(state as u64);
    let OracleSamples {
        law,
        truncation_tail,
        truncated_rollouts,
    } = mc_return_oracle(mrp, state, gamma, n, limits, &mut rng)?;
    let ReturnLaw::Empirical { samples } = &law else {
        unreachable!("the oracle returns an empirical law")
    };
    let header = OracleHeader {
        spec_id,
        state,
        gamma,
        n,
        seed,
        horizon_cap: limits.horizon_cap,
        tail_tol: limits.tail_tol,
        truncation_tail,
        truncated_rollouts,
    };
    write_oracle(&path, &header, samples)?;
    Ok(law)
}
