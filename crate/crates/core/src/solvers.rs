//! The three beamforming solvers.
//!
//! All three maximize the weighted rate-plus-Fisher objective by alternating
//! exact refreshes of the cheap auxiliaries (`Γ`, `Y` — `M×M` solves only)
//! with a per-BS update of the beamformers `W`. They differ in how they
//! handle the two expensive blocks:
//!
//! * [`Algorithm::Conventional`] — refreshes the echo auxiliary `Ỹ` by an
//!   exact `N_r`-sized solve and updates `W` through `(ηI + L)⁻¹Λ`, finding
//!   the power multiplier `η` by bisection. One `N_t`-sized
//!   eigendecomposition and one `N_r`-sized solve per BS per iteration.
//! * [`Algorithm::Nonhomogeneous`] — replaces both inversions by single
//!   gradient steps derived from the curvature-cap surrogate
//!   ([`crate::fpcore::surrogate_value`]): `Ỹ ← Z̃ + (1/λ̃)(ĠW − Q̂Z̃)` and
//!   `W ← P(Z + (1/λ)(Λ − LZ))`, where `P` rescales onto the power ball.
//!   After the one-off initialization, no `N_t`- or `N_r`-sized solve or
//!   decomposition runs — the instrumentation in [`crate::linalg::ledger`]
//!   enforces this in tests.
//! * [`Algorithm::Fast`] — the same loop prefixed with a Nesterov
//!   extrapolation `V ← W + υ(W − W_prev)`, `υ = max{(τ−2)/(τ+1), 0}`.
//!   Extrapolation can overshoot, so this variant is not monotone, but it
//!   converges to the same value in fewer iterations.
//!
//! The conventional and nonhomogeneous solvers ascend monotonically (each
//! step maximizes a minorant that touches the objective at the current
//! point); the tests pin this to a 1e-9 relative tolerance per iteration.
//!
//! Iteration traces record the objective after every step, with evaluation
//! time excluded from `elapsed_s` and evaluation solves excluded from the
//! instrumentation counts, so the traces measure the algorithms themselves.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::fpcore::{self, AuxState, MajorantStrategy};
use crate::linalg::{self, ledger, CMat, C64};
use crate::metrics::{self, BeamformerSet, ObjectiveBreakdown};
use crate::scenario::{ChannelSet, NetworkConfig};
use crate::seeding;
use crate::{Error, Result};

/// Solver selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    /// Exact auxiliary updates and bisection-based W update.
    Conventional,
    /// Inverse-free gradient-step updates (monotone).
    Nonhomogeneous,
    /// Inverse-free updates with Nesterov extrapolation (not monotone).
    Fast,
}

impl Algorithm {
    /// All solvers, in presentation order.
    pub const ALL: [Algorithm; 3] = [
        Algorithm::Conventional,
        Algorithm::Nonhomogeneous,
        Algorithm::Fast,
    ];
}

impl FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conventional" => Ok(Algorithm::Conventional),
            "nonhomogeneous" => Ok(Algorithm::Nonhomogeneous),
            "fast" => Ok(Algorithm::Fast),
            other => Err(Error::Config(format!(
                "unknown algorithm {other:?} (expected conventional, nonhomogeneous, or fast)"
            ))),
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Conventional => "conventional",
            Algorithm::Nonhomogeneous => "nonhomogeneous",
            Algorithm::Fast => "fast",
        })
    }
}

/// Starting point construction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    /// Orthonormalized direct-channel columns, equal power split.
    MatchedFilter,
    /// Complex Gaussian entries scaled to the full budget.
    Random,
}

impl FromStr for InitKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "matched_filter" => Ok(InitKind::MatchedFilter),
            "random" => Ok(InitKind::Random),
            other => Err(Error::Config(format!(
                "unknown init {other:?} (expected matched_filter or random)"
            ))),
        }
    }
}

/// Knobs for [`run`]; `Default` gives the benchmark settings.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SolverOptions {
    pub algorithm: Algorithm,
    pub lambda_strategy: MajorantStrategy,
    /// Stop once `|f_τ − f_{τ−1}| ≤ rel_tol · |f_{τ−1}|`.
    pub rel_tol: f64,
    pub max_iters: usize,
    /// Wall-clock budget for the update steps (evaluation time excluded).
    pub time_limit_s: Option<f64>,
    /// Power-residual and interval tolerance of the η bisection.
    pub bisection_tol: f64,
    pub bisection_max_iters: usize,
    pub init: InitKind,
    /// Keep every n-th trace row (first and last always kept).
    pub record_every: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            algorithm: Algorithm::Nonhomogeneous,
            lambda_strategy: MajorantStrategy::default(),
            rel_tol: 1e-6,
            max_iters: 2000,
            time_limit_s: None,
            bisection_tol: 1e-10,
            bisection_max_iters: 200,
            init: InitKind::MatchedFilter,
            record_every: 1,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.rel_tol.is_finite()) {
            return Err(Error::Config(format!(
                "rel_tol must be positive, got {}",
                self.rel_tol
            )));
        }
        if self.record_every == 0 {
            return Err(Error::Config("record_every must be at least 1".into()));
        }
        if self.bisection_tol <= 0.0 || self.bisection_tol.is_nan() || self.bisection_max_iters == 0
        {
            return Err(Error::Config(
                "bisection tolerance and budget must be positive".into(),
            ));
        }
        if let Some(t) = self.time_limit_s {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(Error::Config(format!(
                    "time_limit_s must be nonnegative, got {t}"
                )));
            }
        }
        Ok(())
    }
}

/// One monitored step of a solver run. `iter` 0 is the starting point.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    /// Cumulative update time, seconds; objective evaluation excluded.
    pub elapsed_s: f64,
    /// Weighted objective after this iteration.
    pub objective: f64,
    pub sum_rate_nats: f64,
    pub sum_fisher: f64,
    /// Linear solves / decompositions of size ≥ min(N_t, N_r) performed by
    /// the update steps of this iteration (evaluation excluded).
    pub large_solves: u64,
}

/// Why a run stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxIters,
    TimeLimit,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::Converged => "converged",
            StopReason::MaxIters => "max_iters",
            StopReason::TimeLimit => "time_limit",
        })
    }
}

/// Result of a solver run.
#[derive(Clone, Debug)]
pub struct SolverOutput {
    pub beamformers: BeamformerSet,
    pub trace: Vec<IterationRecord>,
    pub status: StopReason,
    pub iterations: usize,
    /// Breakdown at the final beamformers.
    pub objective: ObjectiveBreakdown,
}

/// Builds the starting beamformers. The matched filter orthonormalizes each
/// user's direct-channel adjoint and splits the BS budget equally; `rng` is
/// only consulted for [`InitKind::Random`].
pub fn init_beamformers(
    ch: &ChannelSet,
    cfg: &NetworkConfig,
    kind: InitKind,
    rng: &mut ChaCha12Rng,
) -> Result<BeamformerSet> {
    cfg.validate()?;
    let mut w = BeamformerSet::zeros(cfg);
    match kind {
        InitKind::MatchedFilter => {
            for l in 0..cfg.num_cells {
                let share = cfg.power_watts(l) / cfg.users_per_cell as f64;
                for k in 0..cfg.users_per_cell {
                    let q = ch.h[l][k][l].adjoint().qr().q(); // N_t × M, orthonormal columns
                    let cols = q.columns(0, cfg.streams).into_owned();
                    let scale = (share / linalg::fro_norm(&cols).powi(2)).sqrt();
                    w.w[l][k] = cols * C64::new(scale, 0.0);
                }
            }
        }
        InitKind::Random => {
            for l in 0..cfg.num_cells {
                for k in 0..cfg.users_per_cell {
                    w.w[l][k] =
                        crate::scenario::complex_gaussian(rng, cfg.tx_antennas, cfg.streams, 1.0);
                }
                let p = w.bs_power(l);
                let scale = (cfg.power_watts(l) / p).sqrt();
                for k in 0..cfg.users_per_cell {
                    w.w[l][k] *= C64::new(scale, 0.0);
                }
            }
        }
    }
    Ok(w)
}

/// Rescales any BS that exceeds its budget back onto the power ball.
pub fn project_power(w: &mut BeamformerSet, cfg: &NetworkConfig) {
    for l in 0..cfg.num_cells {
        let p = w.bs_power(l);
        let budget = cfg.power_watts(l);
        if p > budget {
            let scale = (budget / p).sqrt();
            for k in 0..cfg.users_per_cell {
                w.w[l][k] *= C64::new(scale, 0.0);
            }
        }
    }
}

/// Gradient of the weighted objective with respect to `W*` (Wirtinger
/// convention: `df = 2 Re tr((∇f)ᴴ dW)`). By the envelope argument this is
/// `Λ − L W` evaluated at exactly refreshed auxiliaries; the tests check it
/// against finite differences of the objective itself.
pub fn gradient_fo(
    ch: &ChannelSet,
    w: &BeamformerSet,
    cfg: &NetworkConfig,
) -> Result<Vec<Vec<CMat>>> {
    cfg.validate()?;
    w.check_shape(cfg)?;
    let mut aux = AuxState::zeros(cfg);
    for l in 0..cfg.num_cells {
        for k in 0..cfg.users_per_cell {
            aux.gamma[l][k] = fpcore::exact_gamma(ch, w, cfg, l, k)?;
            aux.y[l][k] = fpcore::exact_y(ch, w, cfg, l, k)?;
            aux.ytilde[l][k] = fpcore::exact_ytilde(ch, w, cfg, l, k)?;
        }
    }
    let mut grad = Vec::with_capacity(cfg.num_cells);
    for l in 0..cfg.num_cells {
        let l_mat = fpcore::quadratic_term(ch, cfg, &aux, l)?;
        let mut row = Vec::with_capacity(cfg.users_per_cell);
        for k in 0..cfg.users_per_cell {
            let lam = fpcore::linear_term(ch, cfg, &aux, l, k);
            row.push(lam - &l_mat * &w.w[l][k]);
        }
        grad.push(row);
    }
    Ok(grad)
}

/// Runs the selected solver from the configured starting point. Random
/// initialization derives its stream from `cfg.seed`, so equal configs give
/// byte-identical runs.
pub fn run(ch: &ChannelSet, cfg: &NetworkConfig, opts: &SolverOptions) -> Result<SolverOutput> {
    let mut rng = seeding::rng_from_seed(seeding::child_seed(cfg.seed, 0, "solver-init"));
    let w0 = init_beamformers(ch, cfg, opts.init, &mut rng)?;
    run_from(ch, cfg, opts, w0)
}

/// Runs the selected solver from an explicit feasible starting point.
/// Callers racing several algorithms hand each the same `w0`.
pub fn run_from(
    ch: &ChannelSet,
    cfg: &NetworkConfig,
    opts: &SolverOptions,
    w0: BeamformerSet,
) -> Result<SolverOutput> {
    opts.validate()?;
    cfg.validate()?;
    w0.check_shape(cfg)?;
    let start_rep = metrics::check_feasible(&w0, cfg)?;
    if !start_rep.feasible {
        return Err(Error::Domain(
            "starting beamformers exceed a BS power budget".into(),
        ));
    }

    let big_dim = cfg.tx_antennas.min(cfg.echo_rx_antennas);
    let mut solves_seen = ledger::count_at_or_above(big_dim);
    let mut elapsed = 0.0f64;
    let mut w = w0;
    let mut aux = AuxState::zeros(cfg);

    // One-off initialization: the gradient-step solvers seed the echo
    // auxiliary with its exact value (their only large solve).
    let timer = Instant::now();
    match opts.algorithm {
        Algorithm::Conventional => {}
        Algorithm::Nonhomogeneous | Algorithm::Fast => {
            for l in 0..cfg.num_cells {
                for k in 0..cfg.users_per_cell {
                    aux.ytilde[l][k] = fpcore::exact_ytilde(ch, &w, cfg, l, k)?;
                    aux.ztilde[l][k] = aux.ytilde[l][k].clone();
                }
            }
        }
    }
    elapsed += timer.elapsed().as_secs_f64();

    let mut trace: Vec<IterationRecord> = Vec::new();
    let mut breakdown = ledger::paused(|| metrics::objective(ch, &w, cfg))?;
    let init_solves = ledger::count_at_or_above(big_dim) - solves_seen;
    solves_seen += init_solves;
    trace.push(IterationRecord {
        iter: 0,
        elapsed_s: elapsed,
        objective: breakdown.weighted_sum,
        sum_rate_nats: breakdown.sum_rate,
        sum_fisher: breakdown.sum_fisher,
        large_solves: init_solves,
    });

    let mut w_prev = w.clone();
    let mut prev_obj = breakdown.weighted_sum;
    let mut status = StopReason::MaxIters;
    let mut tau = 0usize;
    while tau < opts.max_iters {
        if let Some(limit) = opts.time_limit_s {
            if elapsed >= limit {
                status = StopReason::TimeLimit;
                break;
            }
        }
        tau += 1;

        let timer = Instant::now();
        match opts.algorithm {
            Algorithm::Conventional => conventional_iteration(ch, cfg, opts, &mut aux, &mut w)?,
            Algorithm::Nonhomogeneous => {
                nonhomogeneous_iteration(ch, cfg, &opts.lambda_strategy, &mut aux, &mut w)?
            }
            Algorithm::Fast => {
                extrapolate(tau, &mut w, &mut w_prev);
                nonhomogeneous_iteration(ch, cfg, &opts.lambda_strategy, &mut aux, &mut w)?
            }
        }
        elapsed += timer.elapsed().as_secs_f64();
        let iter_solves = ledger::count_at_or_above(big_dim) - solves_seen;
        solves_seen += iter_solves;

        breakdown = ledger::paused(|| metrics::objective(ch, &w, cfg))?;
        #[cfg(debug_assertions)]
        {
            let rep = metrics::check_feasible(&w, cfg)?;
            debug_assert!(rep.feasible, "iterate {tau} violates a power budget");
        }

        let record = IterationRecord {
            iter: tau,
            elapsed_s: elapsed,
            objective: breakdown.weighted_sum,
            sum_rate_nats: breakdown.sum_rate,
            sum_fisher: breakdown.sum_fisher,
            large_solves: iter_solves,
        };
        let due = tau.is_multiple_of(opts.record_every);
        if due {
            trace.push(record.clone());
        }

        let f = breakdown.weighted_sum;
        if (f - prev_obj).abs() <= opts.rel_tol * prev_obj.abs().max(1e-30) {
            status = StopReason::Converged;
            if !due {
                trace.push(record);
            }
            break;
        }
        prev_obj = f;
        if !due && tau == opts.max_iters {
            trace.push(record);
        }
    }

    Ok(SolverOutput {
        beamformers: w,
        trace,
        status,
        iterations: tau,
        objective: breakdown,
    })
}

/// Nesterov extrapolation `V = W + υ(W − W_prev)` with
/// `υ = max{(τ−2)/(τ+1), 0}`; `w` becomes `V`, `w_prev` the pre-step `w`.
fn extrapolate(tau: usize, w: &mut BeamformerSet, w_prev: &mut BeamformerSet) {
    let upsilon = (tau as f64 - 2.0) / (tau as f64 + 1.0);
    if upsilon <= 0.0 {
        *w_prev = w.clone();
        return;
    }
    let mut v = w.clone();
    for (vl, (wl, pl)) in v.w.iter_mut().zip(w.w.iter().zip(w_prev.w.iter())) {
        for (vm, (wm, pm)) in vl.iter_mut().zip(wl.iter().zip(pl.iter())) {
            *vm = wm + (wm - pm) * C64::new(upsilon, 0.0);
        }
    }
    *w_prev = std::mem::replace(w, v);
}

/// One conventional iteration: exact `Γ`, `Y`, `Ỹ`, then the per-BS
/// `(ηI + L)⁻¹Λ` update with bisection on `η`.
fn conventional_iteration(
    ch: &ChannelSet,
    cfg: &NetworkConfig,
    opts: &SolverOptions,
    aux: &mut AuxState,
    w: &mut BeamformerSet,
) -> Result<()> {
    for l in 0..cfg.num_cells {
        for k in 0..cfg.users_per_cell {
            aux.gamma[l][k] = fpcore::exact_gamma(ch, w, cfg, l, k)?;
            aux.y[l][k] = fpcore::exact_y(ch, w, cfg, l, k)?;
            aux.ytilde[l][k] = fpcore::exact_ytilde(ch, w, cfg, l, k)?;
        }
    }
    for l in 0..cfg.num_cells {
        let l_mat = fpcore::quadratic_term(ch, cfg, aux, l)?;
        let lams: Vec<CMat> = (0..cfg.users_per_cell)
            .map(|k| fpcore::linear_term(ch, cfg, aux, l, k))
            .collect();
        let (new_w, eta) = solve_w_subproblem(
            &lams,
            &l_mat,
            cfg.power_watts(l),
            aux.eta[l],
            opts.bisection_tol,
            opts.bisection_max_iters,
        )?;
        for (k, wk) in new_w.into_iter().enumerate() {
            w.w[l][k] = wk;
        }
        aux.eta[l] = eta;
    }
    Ok(())
}

/// One inverse-free iteration: pivot to the current point, refresh `Γ` and
/// `Y` exactly, take the `Ỹ` gradient step against `Q̂(W)`, then the
/// projected `W` step against the freshly assembled `(Λ, L)`.
fn nonhomogeneous_iteration(
    ch: &ChannelSet,
    cfg: &NetworkConfig,
    strategy: &MajorantStrategy,
    aux: &mut AuxState,
    w: &mut BeamformerSet,
) -> Result<()> {
    for l in 0..cfg.num_cells {
        for k in 0..cfg.users_per_cell {
            aux.z[l][k] = w.w[l][k].clone();
            aux.gamma[l][k] = fpcore::exact_gamma(ch, w, cfg, l, k)?;
            aux.y[l][k] = fpcore::exact_y(ch, w, cfg, l, k)?;
        }
    }
    for l in 0..cfg.num_cells {
        let q = metrics::sensing_interference(ch, w, cfg, l)?;
        aux.lambdatilde[l] = fpcore::lambda_upper(&q, strategy)?;
        let inv = C64::new(1.0 / aux.lambdatilde[l], 0.0);
        for k in 0..cfg.users_per_cell {
            let gw = &ch.g_dot[l] * &w.w[l][k];
            aux.ytilde[l][k] = &aux.ztilde[l][k] + (gw - &q * &aux.ztilde[l][k]) * inv;
        }
        for k in 0..cfg.users_per_cell {
            aux.ztilde[l][k] = aux.ytilde[l][k].clone();
        }
    }
    for l in 0..cfg.num_cells {
        let l_mat = fpcore::quadratic_term(ch, cfg, aux, l)?;
        aux.lambda[l] = fpcore::lambda_upper(&l_mat, strategy)?;
        let inv = C64::new(1.0 / aux.lambda[l], 0.0);
        for k in 0..cfg.users_per_cell {
            let lam = fpcore::linear_term(ch, cfg, aux, l, k);
            let z = &aux.z[l][k];
            w.w[l][k] = z + (lam - &l_mat * z) * inv;
        }
    }
    project_power(w, cfg);
    Ok(())
}

/// Maximizes `Σ_k 2 Re tr(W_kᴴ Λ_k) − tr(W_kᴴ L W_k)` under
/// `Σ_k ‖W_k‖² ≤ p`: one eigendecomposition of `L`, then bisection on the
/// monotone power curve `Σ s_i/(η+μ_i)²`. Returns the beamformers and the
/// multiplier `η` (0 when the budget is slack).
pub(crate) fn solve_w_subproblem(
    lams: &[CMat],
    l_mat: &CMat,
    p: f64,
    eta_warm: f64,
    tol: f64,
    max_iters: usize,
) -> Result<(Vec<CMat>, f64)> {
    let (mu_raw, v) = linalg::eigh(l_mat, "solve_w_subproblem")?;
    // L is PSD up to rounding; clamp stray negatives.
    let mu: Vec<f64> = mu_raw.iter().map(|&m| m.max(0.0)).collect();
    let mu_top = mu.iter().cloned().fold(0.0f64, f64::max);
    let zero_mu = 1e-14 * mu_top.max(1.0);

    // Coordinates of each Λ_k in L's eigenbasis; s[k][i] = Σ_c |B_k(i,c)|².
    let b: Vec<CMat> = lams.iter().map(|lam| v.adjoint() * lam).collect();
    let s: Vec<Vec<f64>> = b
        .iter()
        .map(|bk| {
            (0..bk.nrows())
                .map(|i| bk.row(i).iter().map(|z| z.norm_sqr()).sum())
                .collect()
        })
        .collect();

    let power = |eta: f64| -> f64 {
        let mut total = 0.0;
        for sk in &s {
            for (i, &ski) in sk.iter().enumerate() {
                if ski == 0.0 {
                    continue;
                }
                let denom = eta + mu[i];
                if denom <= zero_mu {
                    return f64::INFINITY;
                }
                total += ski / (denom * denom);
            }
        }
        total
    };

    let eta = if power(0.0) <= p * (1.0 + tol) {
        0.0
    } else {
        // Bracket: power is strictly decreasing in η.
        let mut lo = 0.0f64;
        let mut hi = eta_warm.max(1.0);
        let mut grew = 0;
        while power(hi) > p {
            lo = hi;
            hi *= 2.0;
            grew += 1;
            if grew > 200 {
                return Err(Error::Numerical(
                    "power bisection could not bracket the multiplier".into(),
                ));
            }
        }
        for _ in 0..max_iters {
            let mid = 0.5 * (lo + hi);
            if power(mid) > p {
                lo = mid;
            } else {
                hi = mid;
            }
            if (power(hi) - p).abs() <= tol * p || (hi - lo) <= tol * hi.max(1.0) {
                break;
            }
        }
        hi // feasible endpoint: power(hi) ≤ p
    };

    let w = b
        .iter()
        .map(|bk| {
            let mut scaled = bk.clone();
            for i in 0..scaled.nrows() {
                let denom = eta + mu[i];
                let factor = if denom <= zero_mu { 0.0 } else { 1.0 / denom };
                for c in 0..scaled.ncols() {
                    scaled[(i, c)] *= C64::new(factor, 0.0);
                }
            }
            &v * scaled
        })
        .collect();
    Ok((w, eta))
}
