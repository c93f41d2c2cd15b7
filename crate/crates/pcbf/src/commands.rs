//! The `pcbf` subcommands. Each takes a resolved config and an output
//! directory, writes its files there and returns a summary.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use pcbf_core::analysis::residual::{corrected_residual_sweep, Coupling, ResidualGrid, ResidualInputs};
use pcbf_core::analysis::wasserstein1;
use pcbf_core::baselines::{oracle_cfm_train, StateSamples};
use pcbf_core::envs::generate_dataset;
use pcbf_core::flow::sample_returns;
use pcbf_core::rng::streams;
use pcbf_core::trainer::{method_label, Progress};
use pcbf_core::{
    BaselineKind, Critic, Error as CoreError, EvalTarget, Method, MetricsLog, Mrp, OneHot, ReturnLaw, RngStream,
    Transition,
};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::io::{self, fmt_f64, Checkpoint, MetricsWriter};
use crate::theory;

pub const DATASET_FILE: &str = "dataset.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const METRICS_FILE: &str = "metrics.csv";

/// Writes the resolved config next to a command's outputs.
pub fn echo_config(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    io::create_dir(out)?;
    io::write_json(&out.join("config.json"), cfg)
}

/// Ground truth for every evaluated state: the closed-form law where one
/// exists for the configured discount, otherwise cached Monte Carlo returns.
pub fn eval_targets(cfg: &ExperimentConfig, mrp: &Mrp, out: &Path) -> Result<Vec<EvalTarget>> {
    let gamma = cfg.env.gamma();
    cfg.eval_states(mrp)
        .into_iter()
        .map(|state| {
            let law = match mrp.analytic_law(gamma) {
                Some(law) => law,
                None => oracle_law(cfg, mrp, state, out)?,
            };
            Ok(EvalTarget { state, law })
        })
        .collect()
}

fn oracle_law(cfg: &ExperimentConfig, mrp: &Mrp, state: usize, out: &Path) -> Result<ReturnLaw> {
    io::oracle_law(
        &io::cache_dir(out),
        mrp,
        state,
        cfg.env.gamma(),
        cfg.eval.oracle_rollouts,
        cfg.eval.oracle_seed,
    )
}

pub fn make_dataset(cfg: &ExperimentConfig, mrp: &Mrp, seed: u64) -> Result<Vec<Transition>> {
    let mut rng = RngStream::new(seed).split(streams::DATASET);
    Ok(generate_dataset(mrp, cfg.dataset_size, &mut rng)?)
}

#[derive(Debug, Clone, Serialize)]
pub struct GenDataSummary {
    pub env: String,
    pub seed: u64,
    pub transitions: usize,
    pub done_rate: f64,
    pub oracle_files: Vec<PathBuf>,
}

pub fn gen_data(cfg: &ExperimentConfig, out: &Path) -> Result<GenDataSummary> {
    echo_config(cfg, out)?;
    let mrp = cfg.env.mrp()?;
    let data = make_dataset(cfg, &mrp, cfg.seed())?;
    io::write_dataset(&out.join(DATASET_FILE), &data)?;
    let dir = io::cache_dir(out);
    let gamma = cfg.env.gamma();
    let mut oracle_files = Vec::new();
    for state in cfg.eval_states(&mrp) {
        oracle_law(cfg, &mrp, state, out)?;
        let id = mrp.spec().id();
        oracle_files.push(io::oracle_path(&dir, &id, state, gamma, cfg.eval.oracle_rollouts, cfg.eval.oracle_seed));
    }
    let done = data.iter().filter(|t| t.done).count();
    let summary = GenDataSummary {
        env: mrp.spec().id(),
        seed: cfg.seed(),
        transitions: data.len(),
        done_rate: done as f64 / data.len() as f64,
        oracle_files,
    };
    io::write_json(&out.join("gen_data.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct StateW1 {
    pub state: usize,
    pub w1: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub method: String,
    pub env: String,
    pub seed: u64,
    pub steps: usize,
    pub final_w1: Vec<StateW1>,
    pub mean_w1: Option<f64>,
}

/// A finished training run.
pub struct TrainOutcome {
    pub critic: Critic,
    pub log: MetricsLog,
    pub summary: TrainSummary,
}

/// Trains one run, streaming metrics to `metrics` (when given) and writing a
/// checkpoint at each evaluation step into `checkpoints`.
pub fn run_training(
    cfg: &ExperimentConfig,
    mrp: &Mrp,
    dataset: &[Transition],
    targets: &[EvalTarget],
    seed: u64,
    method: Method,
    metrics: Option<&Path>,
    checkpoints: Option<&Path>,
    out: &Path,
) -> Result<TrainOutcome> {
    let tcfg = cfg.train_config(seed);
    let states: Vec<usize> = targets.iter().map(|t| t.state).collect();
    let mut writer = metrics.map(|p| MetricsWriter::create(p, &states)).transpose()?;
    if let Some(dir) = checkpoints {
        io::create_dir(dir)?;
    }
    let mut failure: Option<CliError> = None;
    let mut observer = |p: &Progress<'_>| {
        if failure.is_some() {
            return;
        }
        let mut step = || -> Result<()> {
            if let Some(w) = writer.as_mut() {
                w.record_progress(p)?;
            }
            if let (Some(dir), Some(_)) = (checkpoints, p.eval) {
                Checkpoint::new(p.critic, p.step).save(&dir.join(format!("step_{:08}.json", p.step)))?;
            }
            Ok(())
        };
        failure = step().err();
    };
    let encoder = OneHot::new(mrp.n_states());
    let result = match method {
        Method::Baseline(BaselineKind::OracleCfm) => {
            let data = mrp
                .interior_states()
                .into_iter()
                .map(|state| {
                    let law = oracle_law(cfg, mrp, state, out)?;
                    let ReturnLaw::Empirical { samples } = law else { unreachable!() };
                    Ok(StateSamples { state, samples })
                })
                .collect::<Result<Vec<_>>>()?;
            oracle_cfm_train(&data, encoder, targets, &tcfg, &mut observer)
        }
        _ => pcbf_core::train(dataset, encoder, targets, &tcfg, method, &mut observer),
    };
    if let Some(e) = failure {
        return Err(e);
    }
    let (critic, log) = result?;
    if let Some(w) = writer {
        w.finish()?;
    }
    let final_w1 = log
        .last_eval()
        .map(|e| {
            states
                .iter()
                .zip(&e.w1)
                .map(|(&state, &w1)| StateW1 { state, w1 })
                .collect()
        })
        .unwrap_or_default();
    let summary = TrainSummary {
        method: method_label(method),
        env: mrp.spec().id(),
        seed,
        steps: log.losses.len(),
        final_w1,
        mean_w1: log.final_mean_w1(),
    };
    Ok(TrainOutcome { critic, log, summary })
}

pub fn train(cfg: &ExperimentConfig, out: &Path) -> Result<TrainSummary> {
    echo_config(cfg, out)?;
    let mrp = cfg.env.mrp()?;
    let method = cfg.method.method();
    let dataset = if method == Method::Baseline(BaselineKind::OracleCfm) {
        Vec::new()
    } else {
        io::read_dataset(&out.join(DATASET_FILE))?
    };
    let targets = eval_targets(cfg, &mrp, out)?;
    let outcome = run_training(
        cfg,
        &mrp,
        &dataset,
        &targets,
        cfg.seed(),
        method,
        Some(&out.join(METRICS_FILE)),
        Some(&out.join("checkpoints")),
        out,
    );
    let outcome = match outcome {
        Err(CliError::Core(e @ CoreError::Diverged(_))) => {
            let path = out.join("diverged.txt");
            std::fs::write(&path, format!("{e}\n")).map_err(|io| CliError::io(&path, io))?;
            return Err(CliError::Core(e));
        }
        other => other?,
    };
    Checkpoint::new(&outcome.critic, outcome.summary.steps).save(&out.join(CHECKPOINT_FILE))?;
    io::write_json(&out.join("train_summary.json"), &outcome.summary)?;
    Ok(outcome.summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub checkpoint: PathBuf,
    pub n_samples: usize,
    pub states: Vec<StateW1>,
    pub mean_w1: f64,
}

/// `n` points from `lo` to `hi` inclusive.
fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n < 2 || lo == hi {
        return vec![lo, hi];
    }
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

pub fn eval(cfg: &ExperimentConfig, out: &Path, checkpoint: Option<&Path>) -> Result<EvalReport> {
    echo_config(cfg, out)?;
    let ck_path = checkpoint.map_or_else(|| out.join(CHECKPOINT_FILE), Path::to_path_buf);
    let critic = Checkpoint::load(&ck_path)?.critic(&ck_path)?;
    let mrp = cfg.env.mrp()?;
    if critic.encoder.dim() != mrp.n_states() {
        return Err(CliError::Usage(format!(
            "checkpoint context width {} does not match {} states",
            critic.encoder.dim(),
            mrp.n_states()
        )));
    }
    let targets = eval_targets(cfg, &mrp, out)?;
    let mut rng = RngStream::new(cfg.seed()).split(streams::EVAL).split(u64::MAX);
    let mut states = Vec::new();
    for tgt in &targets {
        let ctx = critic.encoder.encode(tgt.state);
        let samples = sample_returns(&critic.online, &ctx, cfg.eval.n_samples, &mut rng, cfg.train.nfe)?;
        let learned = ReturnLaw::empirical(samples)?;
        let w1 = wasserstein1(&learned, &tgt.law);
        let (l0, l1) = learned.support();
        let (t0, t1) = tgt.law.support();
        let rows: Vec<Vec<String>> = grid(l0.min(t0), l1.max(t1), cfg.eval.cdf_points)
            .into_iter()
            .map(|x| vec![fmt_f64(x), fmt_f64(learned.cdf(x)), fmt_f64(tgt.law.cdf(x))])
            .collect();
        io::write_csv(&out.join(format!("cdf_s{}.csv", tgt.state)), &["x", "F_learned", "F_truth"], &rows)?;
        states.push(StateW1 { state: tgt.state, w1 });
    }
    let mean_w1 = states.iter().map(|s| s.w1).sum::<f64>() / states.len() as f64;
    let report = EvalReport {
        checkpoint: ck_path,
        n_samples: cfg.eval.n_samples,
        states,
        mean_w1,
    };
    io::write_json(&out.join("eval.json"), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepCell {
    pub arm: SweepArm,
    pub coefficient: f64,
    pub seed: u64,
}

/// Sweep arm: PCBF over λ or the combined baseline over `dcfm_coef`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepArm {
    Pcbf,
    Vf,
}

impl SweepCell {
    pub fn label(&self) -> &'static str {
        match self.arm {
            SweepArm::Pcbf => "pcbf",
            SweepArm::Vf => "vf",
        }
    }

    fn file_stem(&self) -> String {
        format!("{}_{}_seed{}", self.label(), self.coefficient, self.seed)
    }
}

pub struct SweepResult {
    pub cell: SweepCell,
    pub outcome: std::result::Result<(Vec<StateW1>, MetricsLog), String>,
}

#[derive(Debug, Clone, Serialize)]
struct SweepFailure {
    method: &'static str,
    coefficient: f64,
    seed: u64,
    error: String,
}

pub fn sweep_cells(cfg: &ExperimentConfig) -> Vec<SweepCell> {
    let mut cells = Vec::new();
    for &seed in &cfg.seeds {
        for &l in &cfg.sweep.lambdas {
            cells.push(SweepCell {
                arm: SweepArm::Pcbf,
                coefficient: l,
                seed,
            });
        }
        for &c in &cfg.sweep.dcfm_coefs {
            cells.push(SweepCell {
                arm: SweepArm::Vf,
                coefficient: c,
                seed,
            });
        }
    }
    cells
}

/// Trains every `(method, coefficient, seed)` cell on worker threads. A
/// failing cell is reported in its row and the rest keep running.
pub fn sweep(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<SweepResult>> {
    if cfg.sweep.lambdas.is_empty() && cfg.sweep.dcfm_coefs.is_empty() {
        return Err(CliError::Usage("sweep needs at least one lambda or dcfm_coef".into()));
    }
    echo_config(cfg, out)?;
    let mrp = cfg.env.mrp()?;
    let targets = eval_targets(cfg, &mrp, out)?;
    let cells = sweep_cells(cfg);
    let cell_dir = out.join("sweep");
    io::create_dir(&cell_dir)?;
    let slots: Vec<Mutex<Option<SweepResult>>> = cells.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let threads = cfg
        .sweep
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .clamp(1, cells.len());
    let run_cell = |cell: SweepCell| -> Result<(Vec<StateW1>, MetricsLog)> {
        let mut c = cfg.clone();
        let method = match cell.arm {
            SweepArm::Pcbf => {
                c.train.lambda = cell.coefficient;
                Method::Pcbf
            }
            SweepArm::Vf => Method::Baseline(BaselineKind::VfCombined {
                dcfm_coef: cell.coefficient,
            }),
        };
        let data = make_dataset(&c, &mrp, cell.seed)?;
        let metrics = cell_dir.join(format!("{}.csv", cell.file_stem()));
        let o = run_training(&c, &mrp, &data, &targets, cell.seed, method, Some(&metrics), None, out)?;
        Ok((o.summary.final_w1, o.log))
    };
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(&cell) = cells.get(i) else { break };
                let outcome = run_cell(cell).map_err(|e| e.to_string());
                *slots[i].lock().unwrap() = Some(SweepResult { cell, outcome });
            });
        }
    });
    let results: Vec<SweepResult> = slots.into_iter().map(|m| m.into_inner().unwrap().unwrap()).collect();

    let env = mrp.spec().id();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for r in &results {
        let c = &r.cell;
        match &r.outcome {
            Ok((w1, _)) => {
                for s in w1 {
                    rows.push(vec![
                        c.label().to_string(),
                        fmt_f64(c.coefficient),
                        env.clone(),
                        s.state.to_string(),
                        fmt_f64(s.w1),
                        c.seed.to_string(),
                    ]);
                }
            }
            Err(e) => {
                for t in &targets {
                    rows.push(vec![
                        c.label().to_string(),
                        fmt_f64(c.coefficient),
                        env.clone(),
                        t.state.to_string(),
                        "NaN".into(),
                        c.seed.to_string(),
                    ]);
                }
                failures.push(SweepFailure {
                    method: c.label(),
                    coefficient: c.coefficient,
                    seed: c.seed,
                    error: e.clone(),
                });
            }
        }
    }
    io::write_csv(
        &out.join("sweep.csv"),
        &["method", "coefficient", "env", "state", "W1", "seed"],
        &rows,
    )?;
    io::write_json(&out.join("sweep_failures.json"), &failures)?;
    Ok(results)
}

pub fn verify_theory(cfg: &ExperimentConfig, out: &Path) -> Result<theory::TheoryReport> {
    echo_config(cfg, out)?;
    let report = theory::run_all(&cfg.theory, cfg.seed())?;
    io::write_json(&out.join("theory_report.json"), &report)?;
    if report.all_pass {
        Ok(report)
    } else {
        let failed: Vec<&str> = report
            .checks
            .iter()
            .filter(|c| !c.pass)
            .map(|c| c.name.as_str())
            .collect();
        Err(CliError::ChecksFailed(format!("theory checks failed: {}", failed.join(", "))))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ResidualComparison {
    pub t: f64,
    pub nfe: usize,
    pub stop_time: f64,
    pub shared: f64,
    pub shared_ci95: f64,
    pub independent: f64,
    pub independent_ci95: f64,
    /// Shared mean at most the independent mean.
    pub shared_lower: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResidualReport {
    pub checkpoint: PathBuf,
    pub n_samples: usize,
    pub cells: Vec<ResidualComparison>,
    pub all_shared_lower: bool,
}

fn residual_rows(grid: &ResidualGrid) -> Vec<Vec<String>> {
    grid.cells
        .iter()
        .map(|c| {
            vec![
                fmt_f64(c.t),
                c.nfe.to_string(),
                fmt_f64(c.stop_time),
                fmt_f64(c.mean),
                fmt_f64(c.ci95),
            ]
        })
        .collect()
}

pub fn residual(cfg: &ExperimentConfig, out: &Path, checkpoint: Option<&Path>) -> Result<ResidualReport> {
    echo_config(cfg, out)?;
    let ck_path = checkpoint.map_or_else(|| out.join(CHECKPOINT_FILE), Path::to_path_buf);
    let critic = Checkpoint::load(&ck_path)?.critic(&ck_path)?;
    let mrp = cfg.env.mrp()?;
    let data_path = out.join(DATASET_FILE);
    let data = if data_path.exists() {
        io::read_dataset(&data_path)?
    } else {
        make_dataset(cfg, &mrp, cfg.seed())?
    };
    let inputs = ResidualInputs {
        online: &critic.online,
        target: &critic.target,
        encoder: &critic.encoder,
        transitions: &data,
        gamma: cfg.env.gamma(),
    };
    let r = &cfg.residual;
    let master = RngStream::new(cfg.seed()).split(streams::EVAL);
    let mut grids = Vec::new();
    for coupling in [Coupling::Shared, Coupling::Independent] {
        let mut rng = master.clone();
        let grid = corrected_residual_sweep(&inputs, &r.t_grid, &r.nfe_grid, coupling, r.n_samples, &mut rng)?;
        io::write_csv(
            &out.join(format!("residual_{}.csv", coupling.label())),
            &["t", "nfe", "stop_time", "r_corr", "ci95"],
            &residual_rows(&grid),
        )?;
        grids.push(grid);
    }
    let cells: Vec<ResidualComparison> = grids[0]
        .cells
        .iter()
        .zip(&grids[1].cells)
        .map(|(s, i)| ResidualComparison {
            t: s.t,
            nfe: s.nfe,
            stop_time: s.stop_time,
            shared: s.mean,
            shared_ci95: s.ci95,
            independent: i.mean,
            independent_ci95: i.ci95,
            shared_lower: s.mean <= i.mean,
        })
        .collect();
    let report = ResidualReport {
        checkpoint: ck_path,
        n_samples: r.n_samples,
        all_shared_lower: cells.iter().all(|c| c.shared_lower),
        cells,
    };
    io::write_json(&out.join("residual.json"), &report)?;
    Ok(report)
}
