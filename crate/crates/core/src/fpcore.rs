//! Fractional-programming machinery shared by the solvers.
//!
//! The weighted objective (see [`crate::metrics`]) is a sum of log-det and
//! trace-of-ratio terms in `W`. Three reformulations turn it into something
//! block-wise tractable:
//!
//! 1. **Log-det lift.** Each rate picks up a Hermitian auxiliary `Γ`:
//!    `R = max_Γ ln det(I+Γ) − tr Γ + tr((I+Γ) Wᴴ Hᴴ U⁻¹ H W)` with
//!    `U = F + H W Wᴴ Hᴴ` the total received covariance. ([`ldt_value`])
//! 2. **Ratio decoupling.** Every matrix ratio `tr(C Aᴴ B⁻¹ A)` becomes
//!    `max_Y 2 Re tr(C Yᴴ A) − tr(C Yᴴ B Y)`, linearizing the inverse away.
//!    ([`quadratic_transform_value`]; the sensing ratios get an auxiliary
//!    `Ỹ` per user the same way.)
//! 3. **Curvature cap.** For Hermitian `L` and any `λ ≥ λ_max(L)`,
//!    `tr(Xᴴ L X) ≤ λ‖X‖² + 2 Re tr(Xᴴ(L−λI)Z) + tr(Zᴴ(λI−L)Z)`
//!    with equality at `Z = X`. ([`nonhomogeneous_majorant`]) Applying it to
//!    the quadratic terms replaces matrix inverses by gradient steps; any
//!    upper bound on `λ_max` works, so [`MajorantStrategy`] offers the power
//!    iteration and the cheaper trace / Frobenius bounds.
//!
//! After steps 1–2 the transformed objective [`fq_value`] is, for fixed
//! auxiliaries, a concave quadratic in `W` with linear term [`linear_term`]
//! (per user) and quadratic term [`quadratic_term`] (per BS). Step 3 applied
//! around a pivot (`Z`, `Z̃` inside [`AuxState`]) yields the surrogate
//! [`surrogate_value`], which lower-bounds `fq_value` in each block, touches
//! it at the pivot, and is maximized in closed form by the inverse-free
//! updates — that sandwich is what makes the ascent proofs go through, and
//! the tests here check it numerically.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::linalg::{self, CMat, C64};
use crate::metrics::{self, BeamformerSet};
use crate::scenario::{ChannelSet, NetworkConfig};
use crate::{Error, Result};

/// Floor for curvature bounds: keeps `1/λ` finite when a quadratic term
/// degenerates to zero (the following projection absorbs the huge step).
pub const LAMBDA_FLOOR: f64 = 1e-30;

/// Which upper bound on `λ_max(L)` the inverse-free updates use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LambdaKind {
    /// Power iteration on `L` — tightest, a few matrix-vector products.
    Max,
    /// `tr(L)` — loosest, free.
    Trace,
    /// `‖L‖_F` — between the two, free.
    Frobenius,
}

impl FromStr for LambdaKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(LambdaKind::Max),
            "trace" => Ok(LambdaKind::Trace),
            "frobenius" => Ok(LambdaKind::Frobenius),
            other => Err(Error::Config(format!(
                "unknown lambda strategy {other:?} (expected max, trace, or frobenius)"
            ))),
        }
    }
}

impl fmt::Display for LambdaKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LambdaKind::Max => "max",
            LambdaKind::Trace => "trace",
            LambdaKind::Frobenius => "frobenius",
        })
    }
}

/// How to produce the curvature bounds λ and λ̃, plus head-room.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MajorantStrategy {
    pub kind: LambdaKind,
    /// Power-iteration budget (only used by [`LambdaKind::Max`]).
    pub power_iters: usize,
    /// Power-iteration relative stop tolerance.
    pub power_tol: f64,
    /// Multiplier applied to the bound; slightly above 1 hedges against
    /// power-iteration shortfall.
    pub safety_factor: f64,
}

impl Default for MajorantStrategy {
    fn default() -> Self {
        MajorantStrategy {
            kind: LambdaKind::Max,
            power_iters: 50,
            power_tol: 1e-8,
            safety_factor: 1.0 + 1e-8,
        }
    }
}

impl MajorantStrategy {
    pub fn with_kind(kind: LambdaKind) -> Self {
        MajorantStrategy {
            kind,
            ..Default::default()
        }
    }
}

/// Upper bound on `λ_max(a)` for Hermitian PSD `a`, per the strategy.
/// Never returns less than [`LAMBDA_FLOOR`].
pub fn lambda_upper(a: &CMat, strategy: &MajorantStrategy) -> Result<f64> {
    let raw = match strategy.kind {
        LambdaKind::Max => linalg::power_lambda_max(a, strategy.power_iters, strategy.power_tol)?,
        LambdaKind::Trace => linalg::trace_re(a),
        LambdaKind::Frobenius => linalg::fro_norm(a),
    };
    Ok((raw * strategy.safety_factor).max(LAMBDA_FLOOR))
}

/// `Re tr(Xᴴ L X)` — the quadratic form the majorant caps.
pub fn quadratic_form(l_mat: &CMat, x: &CMat) -> f64 {
    linalg::inner_re(x, &(l_mat * x))
}

/// The curvature-cap bound around pivot `z`:
/// `λ‖X‖² + 2 Re tr(Xᴴ(L−λI)Z) + Re tr(Zᴴ(λI−L)Z)`.
///
/// An upper bound on [`quadratic_form`] whenever `λ ≥ λ_max(L)`, exact at
/// `z = x`.
pub fn nonhomogeneous_majorant(l_mat: &CMat, lambda: f64, x: &CMat, z: &CMat) -> f64 {
    let lz = l_mat * z;
    lambda * linalg::fro_norm(x).powi(2)
        + 2.0 * (linalg::inner_re(x, &lz) - lambda * linalg::inner_re(x, z))
        + lambda * linalg::fro_norm(z).powi(2)
        - linalg::inner_re(z, &lz)
}

/// Decoupled value of the ratio `tr(Aᴴ B⁻¹ A)` at auxiliary `y`:
/// `2 Re tr(Yᴴ A) − Re tr(Yᴴ B Y)`. Maximized (and exact) at `Y = B⁻¹A`.
pub fn quadratic_transform_value(a: &CMat, b: &CMat, y: &CMat) -> f64 {
    2.0 * linalg::inner_re(y, a) - linalg::inner_re(y, &(b * y))
}

/// Log-det-lifted rate of user `(l, k)` at auxiliary `gamma`:
/// `ln det(I+Γ) − tr Γ + tr((I+Γ) Wᴴ Hᴴ U⁻¹ H W)`.
///
/// Equals the true rate at `Γ = Wᴴ Hᴴ F⁻¹ H W` and is below it elsewhere.
pub fn ldt_value(
    ch: &ChannelSet,
    w: &BeamformerSet,
    cfg: &NetworkConfig,
    l: usize,
    k: usize,
    gamma: &CMat,
) -> Result<f64> {
    let hw = &ch.h[l][k][l] * &w.w[l][k];
    let f = metrics::interference_covariance(ch, w, cfg, l, k)?;
    let u = linalg::symmetrize(&(&f + &hw * hw.adjoint()));
    let x = linalg::solve_hpd(&u, &hw, "ldt_value")?;
    let eye = CMat::identity(gamma.nrows(), gamma.ncols());
    let one_plus = linalg::symmetrize(&(&eye + gamma));
    let lndet = linalg::ln_det_hpd(&one_plus, "ldt_value")?;
    Ok(lndet - linalg::trace_re(gamma) + linalg::inner_re(&(&hw * &one_plus), &x))
}

/// Auxiliary state of the fractional-programming reformulation.
///
/// `gamma`, `y`, `ytilde` are the transform auxiliaries; `z`, `ztilde` are
/// the majorization pivots (previous `W`, previous `Ỹ`); `lambda[l]` and
/// `lambdatilde[l]` are the per-BS curvature bounds for the transmit and
/// echo blocks.
#[derive(Clone, Debug)]
pub struct AuxState {
    /// `gamma[l][k]`: `d × d` Hermitian PSD rate auxiliary.
    pub gamma: Vec<Vec<CMat>>,
    /// `y[l][k]`: `M × d` receive auxiliary.
    pub y: Vec<Vec<CMat>>,
    /// `ytilde[l][k]`: `N_r × d` echo auxiliary.
    pub ytilde: Vec<Vec<CMat>>,
    /// `z[l][k]`: `N_t × d` transmit pivot.
    pub z: Vec<Vec<CMat>>,
    /// `ztilde[l][k]`: `N_r × d` echo pivot.
    pub ztilde: Vec<Vec<CMat>>,
    /// Per-BS curvature bound for the transmit quadratic term.
    pub lambda: Vec<f64>,
    /// Per-BS curvature bound for the echo interference covariance.
    pub lambdatilde: Vec<f64>,
    /// Per-BS power Lagrange multiplier (exact W-update only; kept here so
    /// bisection warm-starts across iterations).
    pub eta: Vec<f64>,
}

impl AuxState {
    /// Zero-valued auxiliaries shaped for `cfg`.
    pub fn zeros(cfg: &NetworkConfig) -> Self {
        let per_user = |rows: usize, cols: usize| -> Vec<Vec<CMat>> {
            (0..cfg.num_cells)
                .map(|_| {
                    (0..cfg.users_per_cell)
                        .map(|_| CMat::zeros(rows, cols))
                        .collect()
                })
                .collect()
        };
        AuxState {
            gamma: per_user(cfg.streams, cfg.streams),
            y: per_user(cfg.user_antennas, cfg.streams),
            ytilde: per_user(cfg.echo_rx_antennas, cfg.streams),
            z: per_user(cfg.tx_antennas, cfg.streams),
            ztilde: per_user(cfg.echo_rx_antennas, cfg.streams),
            lambda: vec![0.0; cfg.num_cells],
            lambdatilde: vec![0.0; cfg.num_cells],
            eta: vec![0.0; cfg.num_cells],
        }
    }

    /// Fully refreshed auxiliaries at `w`: exact `Γ`, `Y`, `Ỹ`, pivots set
    /// to (`w`, `Ỹ`), and curvature bounds per `strategy`.
    pub fn exact_at(
        ch: &ChannelSet,
        w: &BeamformerSet,
        cfg: &NetworkConfig,
        strategy: &MajorantStrategy,
    ) -> Result<Self> {
        let mut aux = AuxState::zeros(cfg);
        for l in 0..cfg.num_cells {
            for k in 0..cfg.users_per_cell {
                aux.gamma[l][k] = exact_gamma(ch, w, cfg, l, k)?;
                aux.y[l][k] = exact_y(ch, w, cfg, l, k)?;
                aux.ytilde[l][k] = exact_ytilde(ch, w, cfg, l, k)?;
                aux.z[l][k] = w.w[l][k].clone();
                aux.ztilde[l][k] = aux.ytilde[l][k].clone();
            }
        }
        for l in 0..cfg.num_cells {
            let q = metrics::sensing_interference(ch, w, cfg, l)?;
            aux.lambdatilde[l] = lambda_upper(&q, strategy)?;
            let l_mat = quadratic_term(ch, cfg, &aux, l)?;
            aux.lambda[l] = lambda_upper(&l_mat, strategy)?;
        }
        Ok(aux)
    }
}

/// Optimal rate auxiliary `Γ = Wᴴ Hᴴ F⁻¹ H W` (one `M`-sized solve).
pub fn exact_gamma(
    ch: &ChannelSet,
    w: &BeamformerSet,
    cfg: &NetworkConfig,
    l: usize,
    k: usize,
) -> Result<CMat> {
    let hw = &ch.h[l][k][l] * &w.w[l][k];
    let f = metrics::interference_covariance(ch, w, cfg, l, k)?;
    let x = linalg::solve_hpd(&f, &hw, "exact_gamma")?;
    Ok(linalg::symmetrize(&(hw.adjoint() * x)))
}

/// Optimal receive auxiliary `Y = U⁻¹ H W` with `U = F + H W Wᴴ Hᴴ`
/// (one `M`-sized solve).
pub fn exact_y(
    ch: &ChannelSet,
    w: &BeamformerSet,
    cfg: &NetworkConfig,
    l: usize,
    k: usize,
) -> Result<CMat> {
    let hw = &ch.h[l][k][l] * &w.w[l][k];
    let f = metrics::interference_covariance(ch, w, cfg, l, k)?;
    let u = linalg::symmetrize(&(&f + &hw * hw.adjoint()));
    linalg::solve_hpd(&u, &hw, "exact_y")
}

/// Optimal echo auxiliary `Ỹ = Q̂⁻¹ Ġ W` (one `N_r`-sized solve — this is
/// the inversion the gradient-step solvers avoid after initialization).
pub fn exact_ytilde(
    ch: &ChannelSet,
    w: &BeamformerSet,
    cfg: &NetworkConfig,
    l: usize,
    k: usize,
) -> Result<CMat> {
    let gw = &ch.g_dot[l] * &w.w[l][k];
    let q = metrics::sensing_interference(ch, w, cfg, l)?;
    linalg::solve_hpd(&q, &gw, "exact_ytilde")
}

/// Linear coefficient of `W_{lk}` in the transformed objective:
/// `Λ = ω Hᴴ Y (I+Γ) + 2Tβ Ġᴴ Ỹ`. The W-subproblem at BS `l` is
/// `max 2 Re tr(WᴴΛ) − tr(Wᴴ L W)` under the power budget.
pub fn linear_term(
    ch: &ChannelSet,
    cfg: &NetworkConfig,
    aux: &AuxState,
    l: usize,
    k: usize,
) -> CMat {
    let eye = CMat::identity(cfg.streams, cfg.streams);
    let one_plus = &eye + &aux.gamma[l][k];
    let rate_part = ch.h[l][k][l].adjoint() * &aux.y[l][k] * one_plus;
    let sens_part = ch.g_dot[l].adjoint() * &aux.ytilde[l][k];
    rate_part * C64::new(cfg.omega(l, k), 0.0)
        + sens_part * C64::new(2.0 * cfg.block_length as f64 * cfg.beta(l), 0.0)
}

/// Rate part of the quadratic coefficient at BS `l`:
/// `D_l = Σ_{users (i,j)} ω_{ij} H_{ij,l}ᴴ Y_{ij} (I+Γ_{ij}) Y_{ij}ᴴ H_{ij,l}`
/// — every user in the network hears BS `l`, so the sum runs over all of
/// them, own cell included.
pub fn quadratic_term_rate(ch: &ChannelSet, cfg: &NetworkConfig, aux: &AuxState, l: usize) -> CMat {
    let eye = CMat::identity(cfg.streams, cfg.streams);
    let mut d = CMat::zeros(cfg.tx_antennas, cfg.tx_antennas);
    for i in 0..cfg.num_cells {
        for j in 0..cfg.users_per_cell {
            let omega = cfg.omega(i, j);
            if omega == 0.0 {
                continue;
            }
            let hy = ch.h[i][j][l].adjoint() * &aux.y[i][j]; // N_t × d
            let one_plus = &eye + &aux.gamma[i][j];
            d += (&hy * one_plus * hy.adjoint()) * C64::new(omega, 0.0);
        }
    }
    linalg::symmetrize(&d)
}

/// Sensing part of the quadratic coefficient at BS `l`:
/// `E_l = 2T Σ_{i≠l} β_i G_{il}ᴴ (Σ_k Ỹ_{ik} Ỹ_{ik}ᴴ) G_{il}` — BS `l`'s
/// transmissions leak into every other BS's echo processing.
pub fn quadratic_term_sensing(
    ch: &ChannelSet,
    cfg: &NetworkConfig,
    aux: &AuxState,
    l: usize,
) -> Result<CMat> {
    let mut e = CMat::zeros(cfg.tx_antennas, cfg.tx_antennas);
    for i in 0..cfg.num_cells {
        if i == l {
            continue;
        }
        let beta = cfg.beta(i);
        if beta == 0.0 {
            continue;
        }
        let g = ch.g_cross[i][l]
            .as_ref()
            .ok_or_else(|| Error::Domain(format!("missing cross channel ({i},{l})")))?;
        let mut yy = CMat::zeros(cfg.echo_rx_antennas, cfg.echo_rx_antennas);
        for k in 0..cfg.users_per_cell {
            let yt = &aux.ytilde[i][k];
            yy.gemm(C64::new(1.0, 0.0), yt, &yt.adjoint(), C64::new(1.0, 0.0));
        }
        let gy = g.adjoint() * yy * g;
        e += gy * C64::new(2.0 * cfg.block_length as f64 * beta, 0.0);
    }
    Ok(linalg::symmetrize(&e))
}

/// Full quadratic coefficient `L_l = D_l + E_l` of the W-subproblem.
pub fn quadratic_term(
    ch: &ChannelSet,
    cfg: &NetworkConfig,
    aux: &AuxState,
    l: usize,
) -> Result<CMat> {
    Ok(quadratic_term_rate(ch, cfg, aux, l) + quadratic_term_sensing(ch, cfg, aux, l)?)
}

/// Fully transformed objective `f_q(W; Γ, Y, Ỹ)`: log-det lift plus ratio
/// decoupling applied to every term. Equals the weighted objective when all
/// auxiliaries are exact, and lower-bounds it otherwise.
pub fn fq_value(
    ch: &ChannelSet,
    w: &BeamformerSet,
    cfg: &NetworkConfig,
    aux: &AuxState,
) -> Result<f64> {
    let eye_d = CMat::identity(cfg.streams, cfg.streams);
    let two_t = 2.0 * cfg.block_length as f64;
    let mut total = 0.0;
    for l in 0..cfg.num_cells {
        let q = metrics::sensing_interference(ch, w, cfg, l)?;
        let beta = cfg.beta(l);
        for k in 0..cfg.users_per_cell {
            // Rate block: ln det(I+Γ) − tr Γ + decoupled ratio against U(W).
            let gamma = &aux.gamma[l][k];
            let y = &aux.y[l][k];
            let one_plus = linalg::symmetrize(&(&eye_d + gamma));
            let hw = &ch.h[l][k][l] * &w.w[l][k];
            let f = metrics::interference_covariance(ch, w, cfg, l, k)?;
            let u = linalg::symmetrize(&(&f + &hw * hw.adjoint()));
            let lndet = linalg::ln_det_hpd(&one_plus, "fq_value")?;
            let lin = 2.0 * linalg::inner_re(&(y * &one_plus), &hw);
            let quad = linalg::inner_re(&(y * &one_plus), &(&u * y));
            total += cfg.omega(l, k) * (lndet - linalg::trace_re(gamma) + lin - quad);

            // Sensing block: decoupled ratio against Q̂(W).
            let yt = &aux.ytilde[l][k];
            let gw = &ch.g_dot[l] * &w.w[l][k];
            total +=
                two_t * beta * (2.0 * linalg::inner_re(yt, &gw) - linalg::inner_re(yt, &(&q * yt)));
        }
    }
    Ok(total)
}

/// Echo-block pivot matrix for BS `l`: the linearization of `Q̂_l` in `W`
/// around pivot `Z`, scaled by `Tβ_l`. Equals `Tβ_l · Q̂_l(Z)` at `W = Z`.
fn sensing_pivot_term(
    ch: &ChannelSet,
    w: &BeamformerSet,
    cfg: &NetworkConfig,
    aux: &AuxState,
    l: usize,
) -> Result<CMat> {
    let n_r = cfg.echo_rx_antennas;
    let mut m = CMat::zeros(n_r, n_r);
    for i in 0..cfg.num_cells {
        if i == l {
            continue;
        }
        let g = ch.g_cross[l][i]
            .as_ref()
            .ok_or_else(|| Error::Domain(format!("missing cross channel ({l},{i})")))?;
        for j in 0..cfg.users_per_cell {
            let gz = g * &aux.z[i][j];
            let gw = g * &(&w.w[i][j] * C64::new(2.0, 0.0) - &aux.z[i][j]);
            m.gemm(C64::new(1.0, 0.0), &gz, &gw.adjoint(), C64::new(1.0, 0.0));
        }
    }
    let mut m = linalg::symmetrize(&m);
    let sigma2 = cfg.noise_bs_watts();
    for i in 0..n_r {
        m[(i, i)] += C64::new(sigma2, 0.0);
    }
    Ok(m * C64::new(cfg.block_length as f64 * cfg.beta(l), 0.0))
}

/// Inverse-free surrogate `g_s(W, Ỹ; pivots)`: [`fq_value`] with both
/// quadratic blocks replaced by their curvature-cap bounds around
/// (`aux.z`, `aux.ztilde`).
///
/// Block sandwich, verified in tests: for fixed `Ỹ = Z̃` it lower-bounds
/// `f_q` in `W` whenever `λ_l ≥ λ_max(D_l + E_l(Ỹ))`, for fixed `W = Z` it
/// lower-bounds `f_q` in `Ỹ` whenever `λ̃_l ≥ λ_max(Q̂_l(Z))`, and at the
/// pivot it is exact. Its block maximizers are the solvers' gradient-step
/// updates.
pub fn surrogate_value(
    ch: &ChannelSet,
    w: &BeamformerSet,
    cfg: &NetworkConfig,
    aux: &AuxState,
) -> Result<f64> {
    let eye_d = CMat::identity(cfg.streams, cfg.streams);
    let sigma2 = cfg.noise_user_watts();
    let t_block = cfg.block_length as f64;
    let mut total = 0.0;
    for l in 0..cfg.num_cells {
        let d_mat = quadratic_term_rate(ch, cfg, aux, l);
        let ltilde = sensing_pivot_term(ch, w, cfg, aux, l)?;
        let lam = aux.lambda[l];
        let lam_g = t_block * cfg.beta(l) * aux.lambdatilde[l];
        for k in 0..cfg.users_per_cell {
            let wm = &w.w[l][k];
            let z = &aux.z[l][k];
            let yt = &aux.ytilde[l][k];
            let zt = &aux.ztilde[l][k];
            let lambda_mat = linear_term(ch, cfg, aux, l, k);

            // Transmit block: linear term, rate curvature around z, and the
            // −λ‖W−Z‖² cap.
            total += 2.0 * linalg::inner_re(wm, &lambda_mat);
            let two_w_minus_z = wm * C64::new(2.0, 0.0) - z;
            total -= linalg::inner_re(&two_w_minus_z, &(&d_mat * z));
            total += lam
                * (2.0 * linalg::inner_re(wm, z)
                    - linalg::fro_norm(z).powi(2)
                    - linalg::fro_norm(wm).powi(2));

            // Echo block around z̃ (couples to W through the pivot term).
            let p = linalg::scaled_eye(cfg.echo_rx_antennas, lam_g) - &ltilde;
            let pz = &p * zt;
            total += -2.0 * lam_g * linalg::fro_norm(yt).powi(2) + 4.0 * linalg::inner_re(yt, &pz)
                - 2.0 * linalg::inner_re(zt, &pz);

            // Rate auxiliary terms that do not involve W.
            let gamma = &aux.gamma[l][k];
            let y = &aux.y[l][k];
            let one_plus = linalg::symmetrize(&(&eye_d + gamma));
            let lndet = linalg::ln_det_hpd(&one_plus, "surrogate_value")?;
            let omega = cfg.omega(l, k);
            total += omega * (lndet - linalg::trace_re(gamma));
            total -= omega * sigma2 * linalg::inner_re(&(y * one_plus), y);
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::eigh;
    use crate::scenario::build_instance;
    use crate::testkit;

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    fn eig_lambda_max(a: &CMat) -> f64 {
        let (vals, _) = eigh(a, "oracle").unwrap();
        vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    // Curvature cap: upper bound for λ ≥ λ_max (eigendecomposition oracle),
    // exact at z = x, and violated by a deliberately small λ.
    #[test]
    fn majorant_bounds_and_touches() {
        for seed in 0..100u64 {
            let n = 2 + (seed % 5) as usize;
            let l_mat = testkit::random_psd(n, 90_000 + seed);
            let x = testkit::random_cmat(n, 2, 91_000 + seed);
            let z = testkit::random_cmat(n, 2, 92_000 + seed);
            let lam = eig_lambda_max(&l_mat);
            let form = quadratic_form(&l_mat, &x);
            let bound = nonhomogeneous_majorant(&l_mat, lam, &x, &z);
            assert!(
                bound >= form - 1e-9 * form.abs().max(1.0),
                "seed {seed}: bound {bound} < form {form}"
            );
            let tight = nonhomogeneous_majorant(&l_mat, lam, &x, &x);
            assert!(
                (tight - form).abs() <= 1e-12 * form.abs().max(1.0),
                "seed {seed}: {tight} vs {form}"
            );
        }

        // λ below λ_max breaks the bound: L = diag(2, 0), λ = 1, z = 0.
        let mut l_mat = CMat::zeros(2, 2);
        l_mat[(0, 0)] = C64::new(2.0, 0.0);
        let x = CMat::from_column_slice(2, 1, &[C64::new(1.0, 0.0), C64::new(0.0, 0.0)]);
        let z = CMat::zeros(2, 1);
        assert!(nonhomogeneous_majorant(&l_mat, 1.0, &x, &z) < quadratic_form(&l_mat, &x));
    }

    // All three λ strategies dominate the true λ_max, in the expected order,
    // and the power iteration agrees with the eigendecomposition.
    #[test]
    fn lambda_strategies_are_ordered_upper_bounds() {
        for seed in 0..100u64 {
            let n = 2 + (seed % 6) as usize;
            let a = testkit::random_psd(n, 80_000 + seed);
            let truth = eig_lambda_max(&a);
            let tight = MajorantStrategy {
                power_iters: 300,
                power_tol: 1e-13,
                ..Default::default()
            };
            let by_max = lambda_upper(&a, &tight).unwrap();
            let by_fro =
                lambda_upper(&a, &MajorantStrategy::with_kind(LambdaKind::Frobenius)).unwrap();
            let by_tr = lambda_upper(&a, &MajorantStrategy::with_kind(LambdaKind::Trace)).unwrap();
            assert!(
                rel_close(by_max, truth, 1e-6),
                "seed {seed}: {by_max} vs {truth}"
            );
            let slack = 1.0 + 1e-7;
            assert!(by_max >= truth / slack);
            assert!(by_fro >= truth / slack && by_tr >= by_fro / slack);
        }
        // Degenerate input still yields a usable positive bound.
        let z = CMat::zeros(3, 3);
        assert_eq!(
            lambda_upper(&z, &MajorantStrategy::default()).unwrap(),
            LAMBDA_FLOOR
        );
    }

    #[test]
    fn lambda_kind_parses_and_prints() {
        for (text, kind) in [
            ("max", LambdaKind::Max),
            ("trace", LambdaKind::Trace),
            ("frobenius", LambdaKind::Frobenius),
        ] {
            assert_eq!(text.parse::<LambdaKind>().unwrap(), kind);
            assert_eq!(kind.to_string(), text);
        }
        assert!("spectral".parse::<LambdaKind>().is_err());
    }

    // Ratio decoupling: the value peaks exactly at Y = B⁻¹A.
    #[test]
    fn quadratic_transform_peaks_at_solve() {
        for seed in 0..20u64 {
            let n = 3;
            let b = {
                let mut b = testkit::random_psd(n, 70_000 + seed);
                for i in 0..n {
                    b[(i, i)] += C64::new(0.5, 0.0); // keep well-conditioned
                }
                b
            };
            let a = testkit::random_cmat(n, 2, 71_000 + seed);
            let y_star = linalg::solve_hpd(&b, &a, "test").unwrap();
            let exact = linalg::inner_re(&a, &y_star); // tr(Aᴴ B⁻¹ A)
            let at_star = quadratic_transform_value(&a, &b, &y_star);
            assert!(rel_close(at_star, exact, 1e-11), "{at_star} vs {exact}");
            for p in 0..5 {
                let y = &y_star
                    + testkit::random_cmat(n, 2, 72_000 + 10 * seed + p) * C64::new(0.1, 0.0);
                assert!(
                    quadratic_transform_value(&a, &b, &y) <= at_star + 1e-10 * exact.abs().max(1.0)
                );
            }
        }
    }

    // Log-det lift: exact at the optimal Γ, below the rate elsewhere.
    #[test]
    fn ldt_touches_rate_at_optimal_gamma() {
        let cfg = crate::scenario::NetworkConfig::small_test();
        let (_, ch) = build_instance(&cfg).unwrap();
        let w = testkit::random_beamformers(&cfg, 42, 0.9);
        for l in 0..cfg.num_cells {
            for k in 0..cfg.users_per_cell {
                let rate = metrics::user_rate(&ch, &w, &cfg, l, k).unwrap();
                let gamma = exact_gamma(&ch, &w, &cfg, l, k).unwrap();
                let lifted = ldt_value(&ch, &w, &cfg, l, k, &gamma).unwrap();
                assert!(
                    rel_close(lifted, rate, 1e-10),
                    "({l},{k}): {lifted} vs {rate}"
                );

                // Any PSD perturbation of Γ can only lower the lifted value.
                for p in 0..3 {
                    let bump =
                        testkit::random_psd(cfg.streams, 60_000 + 100 * (l + 2 * k) as u64 + p)
                            * C64::new(0.2, 0.0);
                    let worse = ldt_value(&ch, &w, &cfg, l, k, &(&gamma + bump)).unwrap();
                    assert!(worse <= rate + 1e-10 * rate.abs().max(1.0));
                }
            }
        }
    }

    // Fully transformed objective: equals the weighted objective at exact
    // auxiliaries, lower-bounds it at perturbed ones.
    #[test]
    fn fq_matches_objective_at_exact_aux() {
        let cfg = crate::scenario::NetworkConfig::small_test();
        let (_, ch) = build_instance(&cfg).unwrap();
        for seed in 0..5u64 {
            let w = testkit::random_beamformers(&cfg, 300 + seed, 0.8);
            let aux = AuxState::exact_at(&ch, &w, &cfg, &MajorantStrategy::default()).unwrap();
            let fq = fq_value(&ch, &w, &cfg, &aux).unwrap();
            let obj = metrics::objective(&ch, &w, &cfg).unwrap().weighted_sum;
            assert!(rel_close(fq, obj, 1e-9), "seed {seed}: {fq} vs {obj}");

            let mut bent = aux.clone();
            bent.y[0][1] += testkit::random_cmat(cfg.user_antennas, cfg.streams, 400 + seed)
                * C64::new(0.05, 0.0);
            bent.ytilde[1][0] +=
                testkit::random_cmat(cfg.echo_rx_antennas, cfg.streams, 500 + seed)
                    * C64::new(0.05, 0.0);
            let lower = fq_value(&ch, &w, &cfg, &bent).unwrap();
            assert!(lower <= obj + 1e-10 * obj.abs().max(1.0));
        }
    }

    // The inverse-free surrogate: tight at the pivot and below f_q in each
    // block — in W with the echo auxiliary at its pivot, and in Ỹ with the
    // beamformers at theirs. This sandwich is the monotonicity engine.
    #[test]
    fn surrogate_sandwich_holds_blockwise() {
        let cfg = crate::scenario::NetworkConfig::small_test();
        let (_, ch) = build_instance(&cfg).unwrap();
        for (s_idx, strategy) in [
            MajorantStrategy::default(),
            MajorantStrategy::with_kind(LambdaKind::Trace),
            MajorantStrategy::with_kind(LambdaKind::Frobenius),
        ]
        .iter()
        .enumerate()
        {
            for seed in 0..5u64 {
                let w0 = testkit::random_beamformers(&cfg, 700 + seed, 0.9);
                let aux = AuxState::exact_at(&ch, &w0, &cfg, strategy).unwrap();
                let fq0 = fq_value(&ch, &w0, &cfg, &aux).unwrap();
                let gs0 = surrogate_value(&ch, &w0, &cfg, &aux).unwrap();
                assert!(
                    rel_close(gs0, fq0, 1e-9),
                    "strategy {s_idx} seed {seed}: pivot gap {gs0} vs {fq0}"
                );

                // W block: move the beamformers, keep Ỹ = Z̃.
                for p in 0..6 {
                    let w1 = testkit::random_beamformers(&cfg, 10_000 + 100 * seed + p, 0.95);
                    let fq1 = fq_value(&ch, &w1, &cfg, &aux).unwrap();
                    let gs1 = surrogate_value(&ch, &w1, &cfg, &aux).unwrap();
                    assert!(
                        gs1 <= fq1 + 1e-9 * fq1.abs().max(1.0),
                        "strategy {s_idx} seed {seed} p {p}: {gs1} > {fq1}"
                    );
                }

                // Ỹ block: move the echo auxiliary, keep W = Z.
                for p in 0..6 {
                    let mut bent = aux.clone();
                    for l in 0..cfg.num_cells {
                        for k in 0..cfg.users_per_cell {
                            bent.ytilde[l][k] = &aux.ztilde[l][k]
                                + testkit::random_cmat(
                                    cfg.echo_rx_antennas,
                                    cfg.streams,
                                    20_000 + 1000 * seed + 10 * p + (l * 2 + k) as u64,
                                ) * C64::new(0.3, 0.0);
                        }
                    }
                    let fq1 = fq_value(&ch, &w0, &cfg, &bent).unwrap();
                    let gs1 = surrogate_value(&ch, &w0, &cfg, &bent).unwrap();
                    assert!(
                        gs1 <= fq1 + 1e-9 * fq1.abs().max(1.0),
                        "strategy {s_idx} seed {seed} p {p}: echo block {gs1} > {fq1}"
                    );
                }
            }
        }
    }

    // The closed-form W step Z + (1/λ)(Λ − L Z) maximizes the surrogate's
    // transmit block: random perturbations only lower it.
    #[test]
    fn w_step_maximizes_surrogate() {
        let cfg = crate::scenario::NetworkConfig::small_test();
        let (_, ch) = build_instance(&cfg).unwrap();
        let w0 = testkit::random_beamformers(&cfg, 55, 0.5);
        let aux = AuxState::exact_at(&ch, &w0, &cfg, &MajorantStrategy::default()).unwrap();

        let mut w_hat = crate::metrics::BeamformerSet::zeros(&cfg);
        for l in 0..cfg.num_cells {
            let l_mat = quadratic_term(&ch, &cfg, &aux, l).unwrap();
            for k in 0..cfg.users_per_cell {
                let lam_mat = linear_term(&ch, &cfg, &aux, l, k);
                let z = &aux.z[l][k];
                w_hat.w[l][k] = z + (lam_mat - &l_mat * z) * C64::new(1.0 / aux.lambda[l], 0.0);
            }
        }
        let best = surrogate_value(&ch, &w_hat, &cfg, &aux).unwrap();
        for p in 0..30u64 {
            let mut bent = w_hat.clone();
            for l in 0..cfg.num_cells {
                for k in 0..cfg.users_per_cell {
                    bent.w[l][k] += testkit::random_cmat(
                        cfg.tx_antennas,
                        cfg.streams,
                        30_000 + 37 * p + (l * 2 + k) as u64,
                    ) * C64::new(0.05, 0.0);
                }
            }
            let worse = surrogate_value(&ch, &bent, &cfg, &aux).unwrap();
            assert!(
                worse <= best + 1e-9 * best.abs().max(1.0),
                "p {p}: {worse} > {best}"
            );
        }
    }
}
