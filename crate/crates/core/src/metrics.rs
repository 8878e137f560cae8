//! Objective evaluation: per-user rates, per-BS Fisher information, and the
//! weighted ISAC objective.
//!
//! The design variable is a [`BeamformerSet`] `W`, one `N_t × d` complex
//! matrix per user. For user `(ℓ,k)` with direct channel `H` and
//! interference-plus-noise covariance `F`, the achievable rate is
//!
//! ```text
//! R = ln det(I_d + Wᴴ Hᴴ F⁻¹ H W)        (nats per channel use)
//! ```
//!
//! and for BS `ℓ` with target response derivative `Ġ` and echo interference
//! covariance `Q̂`, the Fisher information about the DoA collected over a
//! `T`-symbol frame is
//!
//! ```text
//! J = 2T Σ_k tr((Ġ W_k)ᴴ Q̂⁻¹ (Ġ W_k))
//! ```
//!
//! evaluated in this traced form — the `T·N_r`-dimensional block-diagonal
//! covariance that a direct derivation produces is never materialized. The
//! solvers maximize `Σ ω·R + Σ β·J` subject to per-BS power budgets.
//!
//! Rates are natural-log throughout the crate; [`nats_to_bits`] converts at
//! reporting boundaries.

use serde::{Deserialize, Serialize};

use crate::linalg::{self, CMat, C64};
use crate::scenario::{ChannelSet, NetworkConfig};
use crate::{Error, Result};

/// Per-BS power feasibility slack: a beamformer set is accepted while each
/// BS's power exceeds its budget by no more than this fraction.
pub const FEASIBILITY_REL_TOL: f64 = 1e-9;

/// Natural-log rates divided by ln 2 give rates in bits.
pub fn nats_to_bits(nats: f64) -> f64 {
    nats / std::f64::consts::LN_2
}

/// One transmit beamformer per user: `w[l][k]` is `N_t × d`.
#[derive(Clone, Debug, PartialEq)]
pub struct BeamformerSet {
    pub w: Vec<Vec<CMat>>,
}

impl BeamformerSet {
    /// All-zero beamformers shaped for `cfg`.
    pub fn zeros(cfg: &NetworkConfig) -> Self {
        let w = (0..cfg.num_cells)
            .map(|_| {
                (0..cfg.users_per_cell)
                    .map(|_| CMat::zeros(cfg.tx_antennas, cfg.streams))
                    .collect()
            })
            .collect();
        BeamformerSet { w }
    }

    /// Transmit power of BS `l`: `Σ_k ‖W_{lk}‖²_F` watts.
    pub fn bs_power(&self, l: usize) -> f64 {
        self.w[l].iter().map(|w| linalg::fro_norm(w).powi(2)).sum()
    }

    /// Checks that the set is shaped for `cfg`.
    pub fn check_shape(&self, cfg: &NetworkConfig) -> Result<()> {
        if self.w.len() != cfg.num_cells
            || self.w.iter().any(|cell| cell.len() != cfg.users_per_cell)
        {
            return Err(Error::Domain(format!(
                "beamformer set has {} cells, config says {}x{} users",
                self.w.len(),
                cfg.num_cells,
                cfg.users_per_cell
            )));
        }
        for (l, cell) in self.w.iter().enumerate() {
            for (k, w) in cell.iter().enumerate() {
                if w.shape() != (cfg.tx_antennas, cfg.streams) {
                    return Err(Error::Domain(format!(
                        "beamformer ({l},{k}) is {}x{}, expected {}x{}",
                        w.nrows(),
                        w.ncols(),
                        cfg.tx_antennas,
                        cfg.streams
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Outcome of a power-budget check.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FeasibilityReport {
    /// True when every BS is within budget (up to [`FEASIBILITY_REL_TOL`]).
    pub feasible: bool,
    /// `P_l − Σ_k ‖W_{lk}‖²_F` per BS, watts; negative means over budget.
    pub slack_watts: Vec<f64>,
}

/// Checks the per-BS power budgets.
pub fn check_feasible(w: &BeamformerSet, cfg: &NetworkConfig) -> Result<FeasibilityReport> {
    cfg.validate()?;
    w.check_shape(cfg)?;
    let mut slack = Vec::with_capacity(cfg.num_cells);
    let mut feasible = true;
    for l in 0..cfg.num_cells {
        let p = cfg.power_watts(l);
        let s = p - w.bs_power(l);
        if s < -FEASIBILITY_REL_TOL * p {
            feasible = false;
        }
        slack.push(s);
    }
    Ok(FeasibilityReport {
        feasible,
        slack_watts: slack,
    })
}

/// Checks that channels, beamformers, and config all describe the same
/// network. Called by every evaluation entry point.
fn check_setup(ch: &ChannelSet, w: &BeamformerSet, cfg: &NetworkConfig) -> Result<()> {
    cfg.validate()?;
    w.check_shape(cfg)?;
    let (l, k, n_t, n_r, m) = ch.dims();
    if (l, k) != (cfg.num_cells, cfg.users_per_cell)
        || n_t != cfg.tx_antennas
        || n_r != cfg.echo_rx_antennas
        || m != cfg.user_antennas
    {
        return Err(Error::Domain(format!(
            "channel set dims (L={l}, K={k}, N_t={n_t}, N_r={n_r}, M={m}) \
             do not match the config"
        )));
    }
    Ok(())
}

/// Interference-plus-noise covariance at user `(l, k)`:
/// `F = Σ_{(i,j) ≠ (l,k)} H_i W_{ij} W_{ij}ᴴ H_iᴴ + σ² I_M`,
/// where `H_i` is the channel from BS `i` to this user. Hermitian positive
/// definite for any σ² > 0.
pub fn interference_covariance(
    ch: &ChannelSet,
    w: &BeamformerSet,
    cfg: &NetworkConfig,
    l: usize,
    k: usize,
) -> Result<CMat> {
    check_setup(ch, w, cfg)?;
    let sigma2 = cfg.noise_user_watts();
    if sigma2 <= 0.0 || sigma2.is_nan() {
        return Err(Error::Domain(format!(
            "interference_covariance: noise power must be positive, got {sigma2}"
        )));
    }
    let m = cfg.user_antennas;
    let mut f = linalg::scaled_eye(m, sigma2);
    for i in 0..cfg.num_cells {
        let h = &ch.h[l][k][i];
        for j in 0..cfg.users_per_cell {
            if i == l && j == k {
                continue;
            }
            let hw = h * &w.w[i][j];
            f.gemm(C64::new(1.0, 0.0), &hw, &hw.adjoint(), C64::new(1.0, 0.0));
        }
    }
    Ok(linalg::symmetrize(&f))
}

/// Achievable rate of user `(l, k)` in nats:
/// `ln det(I_d + Wᴴ Hᴴ F⁻¹ H W)` with `H` the direct channel.
pub fn user_rate(
    ch: &ChannelSet,
    w: &BeamformerSet,
    cfg: &NetworkConfig,
    l: usize,
    k: usize,
) -> Result<f64> {
    let f = interference_covariance(ch, w, cfg, l, k)?;
    let hw = &ch.h[l][k][l] * &w.w[l][k];
    let x = linalg::solve_hpd(&f, &hw, "user_rate")?;
    let a = linalg::symmetrize(&(hw.adjoint() * x));
    let eye = CMat::identity(a.nrows(), a.ncols());
    linalg::ln_det_hpd(&(eye + a), "user_rate")
}

/// Echo interference covariance at BS `l`:
/// `Q̂ = Σ_{i≠l} Σ_j G_{li} W_{ij} W_{ij}ᴴ G_{li}ᴴ + σ̃² I_{N_r}`,
/// where `G_{li}` is the cross-BS channel into `l`'s echo array. The BS's own
/// target echo is the signal and is excluded.
pub fn sensing_interference(
    ch: &ChannelSet,
    w: &BeamformerSet,
    cfg: &NetworkConfig,
    l: usize,
) -> Result<CMat> {
    check_setup(ch, w, cfg)?;
    let sigma2 = cfg.noise_bs_watts();
    if sigma2 <= 0.0 || sigma2.is_nan() {
        return Err(Error::Domain(format!(
            "sensing_interference: noise power must be positive, got {sigma2}"
        )));
    }
    let mut q = linalg::scaled_eye(cfg.echo_rx_antennas, sigma2);
    for i in 0..cfg.num_cells {
        if i == l {
            continue;
        }
        let g = ch.g_cross[l][i]
            .as_ref()
            .ok_or_else(|| Error::Domain(format!("missing cross channel ({l},{i})")))?;
        for j in 0..cfg.users_per_cell {
            let gw = g * &w.w[i][j];
            q.gemm(C64::new(1.0, 0.0), &gw, &gw.adjoint(), C64::new(1.0, 0.0));
        }
    }
    Ok(linalg::symmetrize(&q))
}

/// Fisher information about the DoA at BS `l` over a `T`-symbol frame:
/// `J = 2T Σ_k tr((Ġ W_k)ᴴ Q̂⁻¹ (Ġ W_k))`.
///
/// The block-diagonal structure of the frame-level covariance reduces the
/// `T·N_r`-dimensional form to this trace; only one `N_r`-sized solve runs.
pub fn fisher_information(
    ch: &ChannelSet,
    w: &BeamformerSet,
    cfg: &NetworkConfig,
    l: usize,
) -> Result<f64> {
    let q = sensing_interference(ch, w, cfg, l)?;
    let g_dot = &ch.g_dot[l];
    // Stack Ġ W_k for all users side by side and solve once.
    let d = cfg.streams;
    let mut stacked = CMat::zeros(cfg.echo_rx_antennas, cfg.users_per_cell * d);
    for k in 0..cfg.users_per_cell {
        let b = g_dot * &w.w[l][k];
        stacked
            .view_mut((0, k * d), (cfg.echo_rx_antennas, d))
            .copy_from(&b);
    }
    if linalg::fro_norm(&stacked) == 0.0 {
        return Ok(0.0);
    }
    let x = linalg::solve_hpd(&q, &stacked, "fisher_information")?;
    Ok(2.0 * cfg.block_length as f64 * linalg::inner_re(&stacked, &x))
}

/// The objective and all of its pieces, as evaluated at one beamformer set.
///
/// Serializes with explicit unit-bearing names (`sum_rate_nats`), plus the
/// full per-user rate table and per-BS Fisher vector.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ObjectiveBreakdown {
    /// `rates[l][k]`: user rates in nats.
    #[serde(rename = "rates_nats")]
    pub rates: Vec<Vec<f64>>,
    /// Per-BS Fisher information.
    pub fisher: Vec<f64>,
    /// `Σ_{l,k} rates[l][k]` (unweighted).
    #[serde(rename = "sum_rate_nats")]
    pub sum_rate: f64,
    /// `Σ_l fisher[l]` (unweighted).
    pub sum_fisher: f64,
    /// `Σ ω·rate + Σ β·fisher` — what the solvers maximize.
    pub weighted_sum: f64,
}

/// Evaluates rates, Fisher information, and the weighted objective.
///
/// Sums run in index order, so the breakdown reassembles exactly:
/// `weighted_sum` equals `Σ ω·rates + Σ β·fisher` recomputed from the
/// returned arrays in the same order.
pub fn objective(
    ch: &ChannelSet,
    w: &BeamformerSet,
    cfg: &NetworkConfig,
) -> Result<ObjectiveBreakdown> {
    check_setup(ch, w, cfg)?;
    let mut rates = Vec::with_capacity(cfg.num_cells);
    let mut fisher = Vec::with_capacity(cfg.num_cells);
    for l in 0..cfg.num_cells {
        let mut row = Vec::with_capacity(cfg.users_per_cell);
        for k in 0..cfg.users_per_cell {
            row.push(user_rate(ch, w, cfg, l, k)?);
        }
        rates.push(row);
        fisher.push(fisher_information(ch, w, cfg, l)?);
    }
    let sum_rate: f64 = rates.iter().flatten().sum();
    let sum_fisher: f64 = fisher.iter().sum();
    let mut weighted_sum = 0.0;
    for l in 0..cfg.num_cells {
        for k in 0..cfg.users_per_cell {
            weighted_sum += cfg.omega(l, k) * rates[l][k];
        }
    }
    for l in 0..cfg.num_cells {
        weighted_sum += cfg.beta(l) * fisher[l];
    }
    if !weighted_sum.is_finite() {
        return Err(Error::Numerical(format!(
            "objective is not finite: {weighted_sum}"
        )));
    }
    Ok(ObjectiveBreakdown {
        rates,
        fisher,
        sum_rate,
        sum_fisher,
        weighted_sum,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{fro_norm, hermitian_error};
    use crate::scenario::{self, build_instance, NetworkConfig, PerBs, PerUser};

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    /// A single-value matrix.
    fn scalar(v: C64) -> CMat {
        CMat::from_element(1, 1, v)
    }

    /// Hand-built scalar network: L cells, K users, all dims 1, with every
    /// channel entry specified directly. Noise fixed at 1 W (30 dBm).
    fn scalar_setup(
        l_cells: usize,
        k_users: usize,
        h: impl Fn(usize, usize, usize) -> C64,
        g_cross: impl Fn(usize, usize) -> C64,
    ) -> (NetworkConfig, ChannelSet) {
        let cfg = NetworkConfig {
            num_cells: l_cells,
            users_per_cell: k_users,
            tx_antennas: 1,
            echo_rx_antennas: 1,
            user_antennas: 1,
            streams: 1,
            block_length: 1,
            power_budget_dbm: PerBs::Uniform(30.0), // 1 W
            noise_user_dbm: 30.0,                   // σ² = 1
            noise_bs_dbm: 30.0,                     // σ̃² = 1
            reflection_coeff: PerBs::Uniform(1.0),
            rate_weights: PerUser::Uniform(1.0),
            sensing_weights: PerBs::Uniform(1.0),
            bs_spacing_m: 800.0,
            shadowing_std_db: 0.0,
            pathloss_offset_db: 15.3,
            pathloss_slope: 37.6,
            target_position_m: [500.0, -1000.0],
            rough_doa_halfwidth_rad: 0.0,
            seed: 0,
        };
        let ch = ChannelSet {
            h: (0..l_cells)
                .map(|l| {
                    (0..k_users)
                        .map(|k| (0..l_cells).map(|i| scalar(h(l, k, i))).collect())
                        .collect()
                })
                .collect(),
            g_cross: (0..l_cells)
                .map(|l| {
                    (0..l_cells)
                        .map(|i| (i != l).then(|| scalar(g_cross(l, i))))
                        .collect()
                })
                .collect(),
            // With one antenna the response derivative is identically zero.
            g_resp: (0..l_cells).map(|_| scalar(C64::new(1.0, 0.0))).collect(),
            g_dot: (0..l_cells).map(|_| scalar(C64::new(0.0, 0.0))).collect(),
            theta_true: vec![0.0; l_cells],
            theta_rough: vec![0.0; l_cells],
        };
        (cfg, ch)
    }

    fn scalar_w(cfg: &NetworkConfig, vals: &[&[f64]]) -> BeamformerSet {
        let mut w = BeamformerSet::zeros(cfg);
        for (l, row) in vals.iter().enumerate() {
            for (k, &v) in row.iter().enumerate() {
                w.w[l][k] = scalar(C64::new(v, 0.0));
            }
        }
        w
    }

    // 1. Interference covariance: no interferers → σ²I; one scalar
    //    interferer adds |h w|².
    #[test]
    fn interference_covariance_scalar_cases() {
        let (cfg, ch) = scalar_setup(
            1,
            1,
            |_, _, _| C64::new(1.0, 0.0),
            |_, _| C64::new(0.0, 0.0),
        );
        let w = scalar_w(&cfg, &[&[1.0]]);
        let f = interference_covariance(&ch, &w, &cfg, 0, 0).unwrap();
        assert!((f[(0, 0)] - C64::new(1.0, 0.0)).norm() < 1e-15);

        let (cfg, ch) = scalar_setup(
            1,
            2,
            |_, _, _| C64::new(1.0, 0.0),
            |_, _| C64::new(0.0, 0.0),
        );
        let w = scalar_w(&cfg, &[&[1.0, 1.0]]);
        let f = interference_covariance(&ch, &w, &cfg, 0, 0).unwrap();
        assert!(
            (f[(0, 0)] - C64::new(2.0, 0.0)).norm() < 1e-15,
            "F = {}",
            f[(0, 0)]
        );

        // Zero beamformers leave only the noise floor.
        let z = BeamformerSet::zeros(&cfg);
        let f = interference_covariance(&ch, &z, &cfg, 0, 1).unwrap();
        assert!((f[(0, 0)] - C64::new(1.0, 0.0)).norm() < 1e-15);
    }

    // 2. On a random instance the covariance is Hermitian positive definite.
    #[test]
    fn interference_covariance_is_hermitian_pd() {
        let cfg = NetworkConfig::small_test();
        let (_, ch) = build_instance(&cfg).unwrap();
        let mut w = BeamformerSet::zeros(&cfg);
        let mut rng = crate::seeding::rng_from_seed(3);
        for l in 0..2 {
            for k in 0..2 {
                w.w[l][k] = scenario::complex_gaussian(&mut rng, 8, 2, 0.1);
            }
        }
        let f = interference_covariance(&ch, &w, &cfg, 1, 0).unwrap();
        assert!(hermitian_error(&f) <= 1e-12 * fro_norm(&f));
        // Positive definite: the Cholesky inside solve_hpd must succeed.
        let eye = CMat::identity(2, 2);
        assert!(linalg::solve_hpd(&f, &eye, "t").is_ok());
    }

    // 3. Rates: zero beamformer → 0; scalar single-user → ln(1 + P); random
    //    instance matches an independent eigenvalue evaluation.
    #[test]
    fn user_rate_matches_analytic_and_eigen_routes() {
        let (cfg, ch) = scalar_setup(
            1,
            1,
            |_, _, _| C64::new(1.0, 0.0),
            |_, _| C64::new(0.0, 0.0),
        );
        let z = BeamformerSet::zeros(&cfg);
        assert_eq!(user_rate(&ch, &z, &cfg, 0, 0).unwrap(), 0.0);

        let w = scalar_w(&cfg, &[&[1.0]]); // |hw|²/σ² = 1 → ln 2
        let r = user_rate(&ch, &w, &cfg, 0, 0).unwrap();
        assert!(rel_err(r, 2f64.ln()) < 1e-12);

        // Random small instance: rebuild ln det(I + WᴴHᴴF⁻¹HW) from an
        // explicit inverse and an eigendecomposition.
        let cfg = NetworkConfig::small_test();
        let (_, ch) = build_instance(&cfg).unwrap();
        let mut w = BeamformerSet::zeros(&cfg);
        let mut rng = crate::seeding::rng_from_seed(11);
        for l in 0..2 {
            for k in 0..2 {
                w.w[l][k] = scenario::complex_gaussian(&mut rng, 8, 2, 0.05);
            }
        }
        let r = user_rate(&ch, &w, &cfg, 0, 1).unwrap();

        let f = interference_covariance(&ch, &w, &cfg, 0, 1).unwrap();
        let finv = f.clone().try_inverse().unwrap();
        let hw = &ch.h[0][1][0] * &w.w[0][1];
        let a = linalg::symmetrize(&(hw.adjoint() * finv * &hw));
        let eye = CMat::identity(2, 2);
        let eig = nalgebra::SymmetricEigen::new(eye + a);
        let r_eig: f64 = eig.eigenvalues.iter().map(|v| v.ln()).sum();
        assert!(rel_err(r, r_eig) < 1e-12, "{r} vs {r_eig}");
    }

    // 4. Sensing interference: single cell → σ̃²I regardless of W; scalar
    //    two-cell case sums the cross-BS leakage.
    #[test]
    fn sensing_interference_scalar_cases() {
        let (cfg, ch) = scalar_setup(
            1,
            1,
            |_, _, _| C64::new(1.0, 0.0),
            |_, _| C64::new(0.0, 0.0),
        );
        let w = scalar_w(&cfg, &[&[1.0]]);
        let q = sensing_interference(&ch, &w, &cfg, 0).unwrap();
        assert!((q[(0, 0)] - C64::new(1.0, 0.0)).norm() < 1e-15);

        // Cross channel g = 2, interfering beamformer w = 1: Q̂ = 4 + 1.
        let (cfg, ch) = scalar_setup(
            2,
            1,
            |_, _, _| C64::new(1.0, 0.0),
            |_, _| C64::new(2.0, 0.0),
        );
        let w = scalar_w(&cfg, &[&[1.0], &[1.0]]);
        let q = sensing_interference(&ch, &w, &cfg, 0).unwrap();
        assert!(
            (q[(0, 0)] - C64::new(5.0, 0.0)).norm() < 1e-15,
            "Q̂ = {}",
            q[(0, 0)]
        );
    }

    // 5. Fisher information vanishes when the response derivative is zero
    //    (single-antenna arrays) or the beamformers are zero.
    #[test]
    fn fisher_vanishes_in_degenerate_cases() {
        let (cfg, ch) = scalar_setup(
            2,
            1,
            |_, _, _| C64::new(1.0, 0.0),
            |_, _| C64::new(0.5, 0.0),
        );
        let w = scalar_w(&cfg, &[&[1.0], &[1.0]]);
        assert_eq!(fisher_information(&ch, &w, &cfg, 0).unwrap(), 0.0);

        let cfg2 = NetworkConfig::small_test();
        let (_, ch2) = build_instance(&cfg2).unwrap();
        let z = BeamformerSet::zeros(&cfg2);
        assert_eq!(fisher_information(&ch2, &z, &cfg2, 0).unwrap(), 0.0);
    }

    // 6. Traced Fisher form against the brute-force Kronecker form on tiny
    //    instances: build I_T ⊗ (ĠW_k) and I_T ⊗ Q̂ explicitly and invert.
    #[test]
    fn fisher_matches_kronecker_oracle() {
        for seed in 0..8u64 {
            let mut cfg = NetworkConfig::small_test();
            cfg.tx_antennas = 3;
            cfg.echo_rx_antennas = 3;
            cfg.user_antennas = 2;
            cfg.streams = 2;
            cfg.block_length = 3;
            cfg.seed = seed;
            let (_, ch) = build_instance(&cfg).unwrap();
            let mut w = BeamformerSet::zeros(&cfg);
            let mut rng = crate::seeding::rng_from_seed(1000 + seed);
            for l in 0..2 {
                for k in 0..2 {
                    w.w[l][k] = scenario::complex_gaussian(&mut rng, 3, 2, 0.1);
                }
            }
            for l in 0..2 {
                let traced = fisher_information(&ch, &w, &cfg, l).unwrap();
                let oracle = kron_fisher(&ch, &w, &cfg, l);
                assert!(
                    (traced - oracle).abs() <= 1e-10 * oracle.abs().max(1.0),
                    "seed {seed} BS {l}: traced {traced} vs kron {oracle}"
                );
            }
        }
    }

    /// Brute-force Fisher: materializes the T·N_r-dimensional frame
    /// quantities that `fisher_information` deliberately avoids.
    fn kron_fisher(ch: &ChannelSet, w: &BeamformerSet, cfg: &NetworkConfig, l: usize) -> f64 {
        let t = cfg.block_length;
        let q = sensing_interference(ch, w, cfg, l).unwrap();
        let big_q = kron_eye(&q, t);
        let big_q_inv = big_q.try_inverse().unwrap();
        let mut j = 0.0;
        for k in 0..cfg.users_per_cell {
            let b = &ch.g_dot[l] * &w.w[l][k];
            let big_b = kron_eye(&b, t);
            j += 2.0
                * (big_b.adjoint() * &big_q_inv * &big_b)
                    .diagonal()
                    .iter()
                    .map(|z| z.re)
                    .sum::<f64>();
        }
        j
    }

    /// I_t ⊗ A as a dense matrix.
    fn kron_eye(a: &CMat, t: usize) -> CMat {
        let (r, c) = a.shape();
        let mut out = CMat::zeros(r * t, c * t);
        for b in 0..t {
            out.view_mut((b * r, b * c), (r, c)).copy_from(a);
        }
        out
    }

    // 7. Objective breakdown: degenerate weights, exact reassembly, and the
    //    zero beamformer.
    #[test]
    fn objective_breakdown_reassembles() {
        let mut cfg = NetworkConfig::small_test();
        cfg.rate_weights = PerUser::Each(vec![vec![1.0, 0.5], vec![2.0, 0.0]]);
        cfg.sensing_weights = PerBs::Each(vec![1e-6, 3e-7]);
        let (_, ch) = build_instance(&cfg).unwrap();
        let mut w = BeamformerSet::zeros(&cfg);
        let mut rng = crate::seeding::rng_from_seed(5);
        for l in 0..2 {
            for k in 0..2 {
                w.w[l][k] = scenario::complex_gaussian(&mut rng, 8, 2, 0.1);
            }
        }
        let obj = objective(&ch, &w, &cfg).unwrap();

        let mut manual = 0.0;
        for l in 0..2 {
            for k in 0..2 {
                manual += cfg.omega(l, k) * obj.rates[l][k];
            }
        }
        for l in 0..2 {
            manual += cfg.beta(l) * obj.fisher[l];
        }
        assert!(rel_err(obj.weighted_sum, manual) < 1e-15);
        assert!(rel_err(obj.sum_rate, obj.rates.iter().flatten().sum()) < 1e-15);

        // β = 0 leaves the pure weighted sum rate.
        let mut cfg_nos = cfg.clone();
        cfg_nos.sensing_weights = PerBs::Uniform(0.0);
        let obj_nos = objective(&ch, &w, &cfg_nos).unwrap();
        let pure: f64 = (0..2)
            .flat_map(|l| (0..2).map(move |k| (l, k)))
            .map(|(l, k)| cfg.omega(l, k) * obj_nos.rates[l][k])
            .sum();
        assert!(rel_err(obj_nos.weighted_sum, pure) < 1e-14);

        // ω = 0 leaves the pure weighted Fisher sum.
        let mut cfg_nor = cfg.clone();
        cfg_nor.rate_weights = PerUser::Uniform(0.0);
        let obj_nor = objective(&ch, &w, &cfg_nor).unwrap();
        let pure: f64 = (0..2).map(|l| cfg.beta(l) * obj_nor.fisher[l]).sum();
        assert!(rel_err(obj_nor.weighted_sum, pure) < 1e-14);

        // All-zero beamformers score zero.
        let z = BeamformerSet::zeros(&cfg);
        let obj_z = objective(&ch, &z, &cfg).unwrap();
        assert_eq!(obj_z.weighted_sum, 0.0);
        assert_eq!(obj_z.sum_rate, 0.0);
        assert_eq!(obj_z.sum_fisher, 0.0);
    }

    // 8. Per-user phase invariance: rates and Fisher information are
    //    unchanged when any single beamformer is rotated by a unit phase.
    #[test]
    fn objective_is_phase_invariant() {
        let cfg = NetworkConfig::small_test();
        let (_, ch) = build_instance(&cfg).unwrap();
        let mut w = BeamformerSet::zeros(&cfg);
        let mut rng = crate::seeding::rng_from_seed(17);
        for l in 0..2 {
            for k in 0..2 {
                w.w[l][k] = scenario::complex_gaussian(&mut rng, 8, 2, 0.1);
            }
        }
        let base = objective(&ch, &w, &cfg).unwrap();

        let mut rotated = w.clone();
        rotated.w[1][0] *= C64::from_polar(1.0, 1.234);
        let rot = objective(&ch, &rotated, &cfg).unwrap();

        for l in 0..2 {
            for k in 0..2 {
                assert!(rel_err(rot.rates[l][k], base.rates[l][k]) < 1e-9);
            }
            assert!(rel_err(rot.fisher[l], base.fisher[l].max(1e-300)) < 1e-9);
        }
        assert!(rel_err(rot.weighted_sum, base.weighted_sum) < 1e-9);
    }

    // 9. More noise can only hurt: raising σ² does not raise any rate.
    #[test]
    fn rates_fall_with_noise() {
        let cfg = NetworkConfig::small_test();
        let (_, ch) = build_instance(&cfg).unwrap();
        let mut w = BeamformerSet::zeros(&cfg);
        let mut rng = crate::seeding::rng_from_seed(23);
        for l in 0..2 {
            for k in 0..2 {
                w.w[l][k] = scenario::complex_gaussian(&mut rng, 8, 2, 0.1);
            }
        }
        let quiet = objective(&ch, &w, &cfg).unwrap();
        let mut noisy_cfg = cfg.clone();
        noisy_cfg.noise_user_dbm += 10.0;
        let noisy = objective(&ch, &w, &noisy_cfg).unwrap();
        for l in 0..2 {
            for k in 0..2 {
                assert!(noisy.rates[l][k] <= quiet.rates[l][k] + 1e-12);
            }
        }
    }

    // 10. Feasibility: at the budget is fine, a hair over the tolerance is
    //     not, and the slack ledger is exact.
    #[test]
    fn feasibility_boundary_cases() {
        let (cfg, _ch) = scalar_setup(
            1,
            1,
            |_, _, _| C64::new(1.0, 0.0),
            |_, _| C64::new(0.0, 0.0),
        );
        // Budget is 1 W; |w|² = 1 sits exactly on it.
        let w = scalar_w(&cfg, &[&[1.0]]);
        let rep = check_feasible(&w, &cfg).unwrap();
        assert!(rep.feasible);
        assert!(rep.slack_watts[0].abs() < 1e-15);

        // 1e-6 relative over budget trips the check.
        let w = scalar_w(&cfg, &[&[(1.0 + 1e-6f64).sqrt()]]);
        let rep = check_feasible(&w, &cfg).unwrap();
        assert!(!rep.feasible);
        assert!(rep.slack_watts[0] < 0.0);

        // Inside the 1e-9 tolerance still passes.
        let w = scalar_w(&cfg, &[&[(1.0 + 1e-10f64).sqrt()]]);
        assert!(check_feasible(&w, &cfg).unwrap().feasible);
    }

    // 11. Shape mismatches are loud.
    #[test]
    fn shape_mismatches_are_domain_errors() {
        let cfg = NetworkConfig::small_test();
        let (_, ch) = build_instance(&cfg).unwrap();
        let mut other = cfg.clone();
        other.users_per_cell = 3;
        let w_wrong = BeamformerSet::zeros(&other);
        assert!(matches!(
            objective(&ch, &w_wrong, &cfg),
            Err(Error::Domain(_))
        ));
    }

    // 12. JSON field names carry units.
    #[test]
    fn breakdown_serializes_with_unit_names() {
        let cfg = NetworkConfig::small_test();
        let (_, ch) = build_instance(&cfg).unwrap();
        let w = BeamformerSet::zeros(&cfg);
        let obj = objective(&ch, &w, &cfg).unwrap();
        let text = serde_json::to_string(&obj).unwrap();
        assert!(text.contains("\"sum_rate_nats\""));
        assert!(text.contains("\"sum_fisher\""));
        assert!(text.contains("\"weighted_sum\""));
        assert!(text.contains("\"rates_nats\""));
        assert!((nats_to_bits(2f64.ln()) - 1.0).abs() < 1e-12);
    }
}
