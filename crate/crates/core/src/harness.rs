//! Experiment orchestration and machine-readable artifacts.
//!
//! Everything above a single solver call lives here: seeded multi-trial
//! benchmark runs, weight-sweep tradeoff curves, timed algorithm races, and
//! the CSV/JSON files they leave behind. Two contracts hold throughout:
//!
//! * **Reproducibility** — a spec and its scenario seed fully determine
//!   every numeric output except wall-clock columns. Trial `t` uses the
//!   child seed `child_seed(scenario.seed, t, "trial")` for its channel
//!   draw, and a further child of that for its starting point.
//! * **Fair starts** — within a trial or race, every competing algorithm
//!   consumes a clone of the *same* starting beamformers; race reports
//!   carry a hash of that start so fairness is auditable from the artifact.
//!
//! Runs execute sequentially on one worker. The design permits running
//! trials or sweep points concurrently (each owns its output files and the
//! summary is an ordered merge), but timing-sensitive comparisons would
//! then need one run per worker to avoid contention skew, so the simple
//! schedule is the default and only one implemented.
//!
//! File formats: iteration traces are five-column CSV
//! (`iter,elapsed_s,objective,sum_rate_nats,sum_fisher`); the in-memory
//! solve counter is instrumentation, not part of the trace contract.
//! Beamformers serialize to JSON as interleaved real/imag arrays with shape
//! metadata, so artifacts stay binary-free and diffable.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::linalg::CMat;
use crate::metrics::BeamformerSet;
use crate::scenario::{self, NetworkConfig, PerBs, PerUser, Topology};
use crate::seeding::{child_seed, rng_from_seed};
use crate::solvers::{self, Algorithm, IterationRecord, SolverOptions, StopReason};
use crate::{Error, Result};

/// `name version` (plus a build ref when one was injected at compile time);
/// stamped into every summary so an artifact identifies its producer.
pub fn build_stamp() -> String {
    match option_env!("ISAC_FP_BUILD_REF") {
        Some(r) => format!(
            "{} {} ({r})",
            env!("CARGO_PKG_NAME"),
            env!("CARGO_PKG_VERSION")
        ),
        None => format!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION")),
    }
}

// ── Experiment description ──────────────────────────────────────────────────

/// Which scalar knob a sweep varies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParam {
    /// Common rate weight ω for every user.
    #[serde(rename = "omega")]
    Omega,
    /// Common sensing weight β for every BS.
    #[serde(rename = "beta")]
    Beta,
    /// Per-BS power budget in dBm.
    #[serde(rename = "P_dbm")]
    PowerDbm,
    /// Transmit array size (values must be positive integers).
    #[serde(rename = "N_t")]
    TxAntennas,
}

impl FromStr for SweepParam {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "omega" => Ok(SweepParam::Omega),
            "beta" => Ok(SweepParam::Beta),
            "P_dbm" => Ok(SweepParam::PowerDbm),
            "N_t" => Ok(SweepParam::TxAntennas),
            other => Err(Error::Config(format!(
                "unknown sweep parameter {other:?} (expected omega, beta, P_dbm, or N_t)"
            ))),
        }
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepParam::Omega => "omega",
            SweepParam::Beta => "beta",
            SweepParam::PowerDbm => "P_dbm",
            SweepParam::TxAntennas => "N_t",
        })
    }
}

/// A sweep section: which knob to vary and the values to visit, in order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub parameter: SweepParam,
    pub values: Vec<f64>,
}

/// One self-contained experiment: scenario, solver settings, competitors,
/// trial count, optional sweep, and where the artifacts go.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub scenario: NetworkConfig,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default = "default_algorithms")]
    pub algorithms: Vec<Algorithm>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_algorithms() -> Vec<Algorithm> {
    Algorithm::ALL.to_vec()
}
fn default_trials() -> usize {
    1
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentSpec {
    /// Benchmark defaults around a given scenario.
    pub fn new(scenario: NetworkConfig, output_dir: impl Into<PathBuf>) -> Self {
        ExperimentSpec {
            scenario,
            solver: SolverOptions::default(),
            algorithms: default_algorithms(),
            trials: 1,
            sweep: None,
            output_dir: output_dir.into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.solver.validate()?;
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.algorithms.is_empty() {
            return Err(Error::Config("at least one algorithm is required".into()));
        }
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return Err(Error::Config("sweep values must be nonempty".into()));
            }
            for &v in &sweep.values {
                if !v.is_finite() {
                    return Err(Error::Config(format!("sweep value {v} is not finite")));
                }
                if sweep.parameter == SweepParam::TxAntennas && (v.fract() != 0.0 || v < 1.0) {
                    return Err(Error::Config(format!(
                        "N_t sweep values must be positive integers, got {v}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A copy of `cfg` with one swept knob replaced by `value` (re-validated).
pub fn apply_sweep_value(
    cfg: &NetworkConfig,
    param: SweepParam,
    value: f64,
) -> Result<NetworkConfig> {
    let mut out = cfg.clone();
    match param {
        SweepParam::Omega => out.rate_weights = PerUser::Uniform(value),
        SweepParam::Beta => out.sensing_weights = PerBs::Uniform(value),
        SweepParam::PowerDbm => out.power_budget_dbm = PerBs::Uniform(value),
        SweepParam::TxAntennas => {
            if value.fract() != 0.0 || value < 1.0 {
                return Err(Error::Config(format!(
                    "N_t sweep values must be positive integers, got {value}"
                )));
            }
            out.tx_antennas = value as usize;
        }
    }
    out.validate()?;
    Ok(out)
}

// ── Multi-trial benchmark runs ──────────────────────────────────────────────

/// Outcome of one (trial, algorithm) run inside a summary.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunRecord {
    pub algorithm: Algorithm,
    /// Trace CSV file name relative to the output directory; absent when
    /// the solver failed.
    pub trace_file: Option<String>,
    pub stop_reason: Option<StopReason>,
    /// `true` when an iteration or time cap cut the run short — limits are
    /// never silent in a summary.
    pub limited: bool,
    pub iterations: usize,
    /// Cumulative update time of the final trace row, seconds.
    pub wall_time_s: f64,
    pub objective: Option<f64>,
    pub sum_rate_nats: Option<f64>,
    pub sum_fisher: Option<f64>,
    /// Solver error, recorded without aborting the other runs.
    pub error: Option<String>,
}

/// Everything that happened in one trial.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrialSummary {
    pub trial: usize,
    /// Seed the trial's scenario and starting point derive from.
    pub child_seed: u64,
    pub runs: Vec<RunRecord>,
}

/// The `summary.json` payload of a benchmark run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub build_stamp: String,
    pub root_seed: u64,
    /// Echo of the scenario the runs used (before per-trial reseeding).
    pub config: NetworkConfig,
    pub solver: SolverOptions,
    pub trials: Vec<TrialSummary>,
}

/// Runs every requested algorithm over `spec.trials` seeded scenario draws.
///
/// Per trial: channels are drawn from the trial's child seed, one starting
/// point is built, and each algorithm runs from a clone of it. Each run
/// leaves `trace_trial{t}_{algorithm}.csv` in the output directory; the
/// whole experiment leaves `summary.json`. A solver failure is recorded in
/// the summary and the remaining runs continue.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentSummary> {
    spec.validate()?;
    fs::create_dir_all(&spec.output_dir).map_err(|e| io_ctx(&spec.output_dir, e))?;
    let mut trials = Vec::with_capacity(spec.trials);
    for t in 0..spec.trials {
        let trial_seed = child_seed(spec.scenario.seed, t as u64, "trial");
        let mut cfg = spec.scenario.clone();
        cfg.seed = trial_seed;
        let (_, ch) = scenario::build_instance(&cfg)?;
        let mut rng = rng_from_seed(child_seed(trial_seed, 0, "solver-init"));
        let w0 = solvers::init_beamformers(&ch, &cfg, spec.solver.init, &mut rng)?;

        let mut runs = Vec::with_capacity(spec.algorithms.len());
        for &alg in &spec.algorithms {
            let mut opts = spec.solver;
            opts.algorithm = alg;
            match solvers::run_from(&ch, &cfg, &opts, w0.clone()) {
                Ok(out) => {
                    let name = format!("trace_trial{t}_{alg}.csv");
                    write_trace_csv(&out.trace, &spec.output_dir.join(&name))?;
                    runs.push(RunRecord {
                        algorithm: alg,
                        trace_file: Some(name),
                        stop_reason: Some(out.status),
                        limited: out.status != StopReason::Converged,
                        iterations: out.iterations,
                        wall_time_s: out.trace.last().map_or(0.0, |r| r.elapsed_s),
                        objective: Some(out.objective.weighted_sum),
                        sum_rate_nats: Some(out.objective.sum_rate),
                        sum_fisher: Some(out.objective.sum_fisher),
                        error: None,
                    });
                }
                Err(e) => runs.push(RunRecord {
                    algorithm: alg,
                    trace_file: None,
                    stop_reason: None,
                    limited: false,
                    iterations: 0,
                    wall_time_s: 0.0,
                    objective: None,
                    sum_rate_nats: None,
                    sum_fisher: None,
                    error: Some(e.to_string()),
                }),
            }
        }
        trials.push(TrialSummary {
            trial: t,
            child_seed: trial_seed,
            runs,
        });
    }
    let summary = ExperimentSummary {
        build_stamp: build_stamp(),
        root_seed: spec.scenario.seed,
        config: spec.scenario.clone(),
        solver: spec.solver,
        trials,
    };
    write_summary_json(&summary, &spec.output_dir.join("summary.json"))?;
    Ok(summary)
}

// ── Tradeoff sweeps ─────────────────────────────────────────────────────────

/// One converged operating point of a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    /// The swept knob's value at this point.
    pub value: f64,
    pub sum_rate: f64,
    pub sum_fisher: f64,
    pub algorithm: Algorithm,
}

/// One point of a rate/Fisher tradeoff curve (an ω sweep).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TradeoffRow {
    pub omega: f64,
    pub sum_rate: f64,
    pub sum_fisher: f64,
    pub algorithm: Algorithm,
}

/// Runs the sweep in `spec.sweep`, one row per (value, algorithm) in visit
/// order. The channel draw is fixed across values — a sweep traces one
/// instance's curve, not an average — and every algorithm at a given value
/// starts from the same point. Solver errors abort the sweep (a partial
/// curve is worse than none).
pub fn run_sweep(spec: &ExperimentSpec) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let sweep = spec
        .sweep
        .as_ref()
        .ok_or_else(|| Error::Config("run_sweep needs a sweep section".into()))?;
    let mut rows = Vec::with_capacity(sweep.values.len() * spec.algorithms.len());
    for (i, &value) in sweep.values.iter().enumerate() {
        let cfg = apply_sweep_value(&spec.scenario, sweep.parameter, value)?;
        let (_, ch) = scenario::build_instance(&cfg)?;
        let mut rng = rng_from_seed(child_seed(cfg.seed, i as u64, "sweep-init"));
        let w0 = solvers::init_beamformers(&ch, &cfg, spec.solver.init, &mut rng)?;
        for &alg in &spec.algorithms {
            let mut opts = spec.solver;
            opts.algorithm = alg;
            let out = solvers::run_from(&ch, &cfg, &opts, w0.clone())?;
            rows.push(SweepRow {
                value,
                sum_rate: out.objective.sum_rate,
                sum_fisher: out.objective.sum_fisher,
                algorithm: alg,
            });
        }
    }
    Ok(rows)
}

/// The rate/Fisher tradeoff sweep: [`run_sweep`] specialized to the common
/// rate weight ω (any other swept parameter is rejected).
pub fn sweep_tradeoff(spec: &ExperimentSpec) -> Result<Vec<TradeoffRow>> {
    match &spec.sweep {
        Some(s) if s.parameter == SweepParam::Omega => {}
        Some(s) => {
            return Err(Error::Config(format!(
                "sweep_tradeoff varies omega; got parameter {}",
                s.parameter
            )))
        }
        None => return Err(Error::Config("sweep_tradeoff needs a sweep section".into())),
    }
    Ok(run_sweep(spec)?
        .into_iter()
        .map(|r| TradeoffRow {
            omega: r.value,
            sum_rate: r.sum_rate,
            sum_fisher: r.sum_fisher,
            algorithm: r.algorithm,
        })
        .collect())
}

/// Writes tradeoff rows as `omega,sum_rate,sum_fisher,algorithm` CSV.
pub fn write_tradeoff_csv(rows: &[TradeoffRow], path: &Path) -> Result<()> {
    let sweep: Vec<SweepRow> = rows
        .iter()
        .map(|r| SweepRow {
            value: r.omega,
            sum_rate: r.sum_rate,
            sum_fisher: r.sum_fisher,
            algorithm: r.algorithm,
        })
        .collect();
    write_sweep_csv(SweepParam::Omega, &sweep, path)
}

/// Writes sweep rows with the first column named after the swept knob.
pub fn write_sweep_csv(param: SweepParam, rows: &[SweepRow], path: &Path) -> Result<()> {
    let mut text = format!("{param},sum_rate,sum_fisher,algorithm\n");
    for r in rows {
        text.push_str(&format!(
            "{},{},{},{}\n",
            r.value, r.sum_rate, r.sum_fisher, r.algorithm
        ));
    }
    fs::write(path, text).map_err(|e| io_ctx(path, e))
}

// ── Timed races ─────────────────────────────────────────────────────────────

/// Objective thresholds a race reports crossing times for, as fractions of
/// the weakest competitor's final objective (so every competitor provably
/// crosses all of them — traces are monotone and objectives nonnegative).
pub const RACE_THRESHOLD_FRACTIONS: [f64; 3] = [0.5, 0.9, 0.99];

/// One competitor's result in a race.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RaceEntry {
    pub algorithm: Algorithm,
    pub final_objective: f64,
    pub iterations: usize,
    pub wall_time_s: f64,
    pub stop_reason: StopReason,
    pub limited: bool,
    /// Wall-clock time at which each report threshold was first reached
    /// (linear interpolation between trace rows); `None` if never.
    pub threshold_times_s: Vec<Option<f64>>,
    pub trace_file: String,
}

/// The `race.json` payload.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RaceReport {
    pub build_stamp: String,
    pub config: NetworkConfig,
    pub time_limit_s: f64,
    /// FNV-1a hash of the shared starting beamformers (fair-start audit).
    pub start_hash: String,
    /// Absolute objective thresholds the crossing times refer to.
    pub thresholds: Vec<f64>,
    pub entries: Vec<RaceEntry>,
}

/// Races `spec.algorithms` under a shared wall-clock budget, all from the
/// same starting point on the same channel draw. Writes one trace per
/// competitor plus `race.json`; runs are strictly sequential so timings are
/// not skewed by contention.
pub fn run_race(spec: &ExperimentSpec, time_limit_s: f64) -> Result<RaceReport> {
    spec.validate()?;
    if !(time_limit_s >= 0.0 && time_limit_s.is_finite()) {
        return Err(Error::Config(format!(
            "race time limit must be nonnegative, got {time_limit_s}"
        )));
    }
    fs::create_dir_all(&spec.output_dir).map_err(|e| io_ctx(&spec.output_dir, e))?;
    let (_, ch) = scenario::build_instance(&spec.scenario)?;
    let mut rng = rng_from_seed(child_seed(spec.scenario.seed, 0, "solver-init"));
    let w0 = solvers::init_beamformers(&ch, &spec.scenario, spec.solver.init, &mut rng)?;
    let start_hash = format!("{:016x}", beamformer_hash(&w0));

    let mut outputs = Vec::with_capacity(spec.algorithms.len());
    for &alg in &spec.algorithms {
        let mut opts = spec.solver;
        opts.algorithm = alg;
        opts.time_limit_s = Some(time_limit_s);
        outputs.push((
            alg,
            solvers::run_from(&ch, &spec.scenario, &opts, w0.clone())?,
        ));
    }

    let weakest = outputs
        .iter()
        .map(|(_, out)| out.objective.weighted_sum)
        .fold(f64::INFINITY, f64::min);
    let thresholds: Vec<f64> = RACE_THRESHOLD_FRACTIONS
        .iter()
        .map(|f| f * weakest)
        .collect();

    let mut entries = Vec::with_capacity(outputs.len());
    for (alg, out) in outputs {
        let name = format!("race_{alg}.csv");
        write_trace_csv(&out.trace, &spec.output_dir.join(&name))?;
        entries.push(RaceEntry {
            algorithm: alg,
            final_objective: out.objective.weighted_sum,
            iterations: out.iterations,
            wall_time_s: out.trace.last().map_or(0.0, |r| r.elapsed_s),
            stop_reason: out.status,
            limited: out.status != StopReason::Converged,
            threshold_times_s: thresholds
                .iter()
                .map(|&t| time_to_reach(&out.trace, t))
                .collect(),
            trace_file: name,
        });
    }
    let report = RaceReport {
        build_stamp: build_stamp(),
        config: spec.scenario.clone(),
        time_limit_s,
        start_hash,
        thresholds,
        entries,
    };
    let text = serde_json::to_string_pretty(&report)?;
    let path = spec.output_dir.join("race.json");
    fs::write(&path, text + "\n").map_err(|e| io_ctx(&path, e))?;
    Ok(report)
}

/// First wall-clock time at which a monotone trace reaches `threshold`,
/// linearly interpolated between the straddling rows; `None` if the trace
/// never gets there.
pub fn time_to_reach(trace: &[IterationRecord], threshold: f64) -> Option<f64> {
    let i = trace.iter().position(|r| r.objective >= threshold)?;
    if i == 0 {
        return Some(trace[0].elapsed_s);
    }
    let (a, b) = (&trace[i - 1], &trace[i]);
    if b.objective <= a.objective {
        return Some(b.elapsed_s);
    }
    let frac = (threshold - a.objective) / (b.objective - a.objective);
    Some(a.elapsed_s + frac * (b.elapsed_s - a.elapsed_s))
}

/// Platform-stable FNV-1a hash of a beamformer set's IEEE bit patterns.
pub fn beamformer_hash(w: &BeamformerSet) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |x: f64| {
        for b in x.to_bits().to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    };
    for cell in &w.w {
        for m in cell {
            for z in m.iter() {
                eat(z.re);
                eat(z.im);
            }
        }
    }
    h
}

// ── Trace CSV ───────────────────────────────────────────────────────────────

/// Header of every iteration-trace CSV.
pub const TRACE_HEADER: &str = "iter,elapsed_s,objective,sum_rate_nats,sum_fisher";

/// One parsed trace row — the five columns of the file contract. The
/// in-memory solve counter is not serialized.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub elapsed_s: f64,
    pub objective: f64,
    pub sum_rate_nats: f64,
    pub sum_fisher: f64,
}

impl From<&IterationRecord> for TraceRow {
    fn from(r: &IterationRecord) -> Self {
        TraceRow {
            iter: r.iter,
            elapsed_s: r.elapsed_s,
            objective: r.objective,
            sum_rate_nats: r.sum_rate_nats,
            sum_fisher: r.sum_fisher,
        }
    }
}

/// Writes a trace as CSV; an empty trace still gets the header line.
pub fn write_trace_csv(trace: &[IterationRecord], path: &Path) -> Result<()> {
    let mut text = String::from(TRACE_HEADER);
    text.push('\n');
    for r in trace {
        text.push_str(&format!(
            "{},{},{},{},{}\n",
            r.iter, r.elapsed_s, r.objective, r.sum_rate_nats, r.sum_fisher
        ));
    }
    fs::write(path, text).map_err(|e| io_ctx(path, e))
}

pub fn read_trace_csv(path: &Path) -> Result<Vec<TraceRow>> {
    let text = fs::read_to_string(path).map_err(|e| io_ctx(path, e))?;
    parse_trace_csv(&text)
}

pub fn parse_trace_csv(text: &str) -> Result<Vec<TraceRow>> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Config("trace CSV is empty (no header)".into()))?;
    if header.trim() != TRACE_HEADER {
        return Err(Error::Config(format!("unexpected trace header {header:?}")));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 {
                return Err(Error::Config(format!("trace row needs 5 fields: {line:?}")));
            }
            let num = |i: usize| -> Result<f64> {
                fields[i]
                    .trim()
                    .parse()
                    .map_err(|e| Error::Config(format!("bad number in trace row {line:?}: {e}")))
            };
            Ok(TraceRow {
                iter: fields[0]
                    .trim()
                    .parse()
                    .map_err(|e| Error::Config(format!("bad iter in trace row {line:?}: {e}")))?,
                elapsed_s: num(1)?,
                objective: num(2)?,
                sum_rate_nats: num(3)?,
                sum_fisher: num(4)?,
            })
        })
        .collect()
}

/// Writes an experiment summary as pretty JSON.
pub fn write_summary_json(summary: &ExperimentSummary, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(summary)?;
    fs::write(path, text + "\n").map_err(|e| io_ctx(path, e))
}

// ── Beamformer JSON ─────────────────────────────────────────────────────────

/// On-disk beamformer layout: shape metadata plus, per user, the row-major
/// interleaved `[re, im, re, im, …]` flattening of the `N_t × d` matrix.
#[derive(Serialize, Deserialize)]
struct BeamformerFile {
    num_cells: usize,
    users_per_cell: usize,
    tx_antennas: usize,
    streams: usize,
    w: Vec<Vec<Vec<f64>>>,
}

pub fn save_beamformers(w: &BeamformerSet, path: &Path) -> Result<()> {
    let (l, k) = (w.w.len(), w.w.first().map_or(0, Vec::len));
    if l == 0 || k == 0 {
        return Err(Error::Domain("cannot save an empty beamformer set".into()));
    }
    let (n_t, d) = (w.w[0][0].nrows(), w.w[0][0].ncols());
    let file = BeamformerFile {
        num_cells: l,
        users_per_cell: k,
        tx_antennas: n_t,
        streams: d,
        w: w.w
            .iter()
            .map(|cell| {
                cell.iter()
                    .map(|m| {
                        let mut flat = Vec::with_capacity(2 * m.len());
                        for r in 0..m.nrows() {
                            for c in 0..m.ncols() {
                                flat.push(m[(r, c)].re);
                                flat.push(m[(r, c)].im);
                            }
                        }
                        flat
                    })
                    .collect()
            })
            .collect(),
    };
    let text = serde_json::to_string(&file)?;
    fs::write(path, text + "\n").map_err(|e| io_ctx(path, e))
}

pub fn load_beamformers(path: &Path) -> Result<BeamformerSet> {
    let text = fs::read_to_string(path).map_err(|e| io_ctx(path, e))?;
    let file: BeamformerFile = serde_json::from_str(&text)?;
    if file.w.len() != file.num_cells {
        return Err(Error::Config(format!(
            "{}: beamformer file declares {} cells but holds {}",
            path.display(),
            file.num_cells,
            file.w.len()
        )));
    }
    let want = 2 * file.tx_antennas * file.streams;
    let mut w = Vec::with_capacity(file.num_cells);
    for (l, cell) in file.w.iter().enumerate() {
        if cell.len() != file.users_per_cell {
            return Err(Error::Config(format!(
                "{}: cell {l} holds {} users, expected {}",
                path.display(),
                cell.len(),
                file.users_per_cell
            )));
        }
        let mut row = Vec::with_capacity(file.users_per_cell);
        for (k, flat) in cell.iter().enumerate() {
            if flat.len() != want {
                return Err(Error::Config(format!(
                    "{}: user ({l},{k}) holds {} values, expected {want}",
                    path.display(),
                    flat.len()
                )));
            }
            let m = CMat::from_fn(file.tx_antennas, file.streams, |r, c| {
                let base = 2 * (r * file.streams + c);
                crate::linalg::C64::new(flat[base], flat[base + 1])
            });
            row.push(m);
        }
        w.push(row);
    }
    Ok(BeamformerSet { w })
}

// ── Geometry and estimation artifacts ───────────────────────────────────────

/// Writes scenario geometry as `entity,type,x_m,y_m` CSV.
pub fn write_positions_csv(topo: &Topology, path: &Path) -> Result<()> {
    let mut text = String::from("entity,type,x_m,y_m\n");
    for (l, p) in topo.bs_positions.iter().enumerate() {
        text.push_str(&format!("bs{l},bs,{},{}\n", p[0], p[1]));
    }
    for (l, users) in topo.user_positions.iter().enumerate() {
        for (k, p) in users.iter().enumerate() {
            text.push_str(&format!("user{l}_{k},user,{},{}\n", p[0], p[1]));
        }
    }
    for (i, p) in topo.target_positions.iter().enumerate() {
        text.push_str(&format!("target{i},target,{},{}\n", p[0], p[1]));
    }
    fs::write(path, text).map_err(|e| io_ctx(path, e))
}

/// One row of the estimation-error table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimationRow {
    /// Algorithm token, or `rough_prior` for the baseline row.
    pub algorithm: String,
    /// Target position the errors refer to, meters.
    pub position: [f64; 2],
    pub mse: f64,
    pub maxse: f64,
}

/// Writes estimation rows as `algorithm,position,mse,maxse` CSV; positions
/// render as `(x;y)` so the column stays comma-free.
pub fn write_estimation_csv(rows: &[EstimationRow], path: &Path) -> Result<()> {
    let mut text = String::from("algorithm,position,mse,maxse\n");
    for r in rows {
        text.push_str(&format!(
            "{},({};{}),{},{}\n",
            r.algorithm, r.position[0], r.position[1], r.mse, r.maxse
        ));
    }
    fs::write(path, text).map_err(|e| io_ctx(path, e))
}

fn io_ctx(path: &Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(
        e.kind(),
        format!("{}: {e}", path.display()),
    ))
}
