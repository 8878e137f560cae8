//! Synthetic multi-cell network scenario: configuration, geometry, channels.
//!
//! The scenario is a hexagonal cellular layout (a single cell, or seven cells
//! with wrap-around) in which each base station (BS) carries an `N_t`-antenna
//! transmit array and a co-located `N_r`-antenna echo receive array, both
//! half-wavelength uniform linear arrays. Users sit near their cell edge; one
//! shared radar target sits somewhere in the plane.
//!
//! Randomness enters in three places — user placement, Rayleigh fading with
//! log-normal shadowing, and the rough direction-of-arrival (DoA) prior — and
//! all of it derives deterministically from [`NetworkConfig::seed`] via
//! [`crate::seeding`]: building the same config twice yields bit-identical
//! topologies and channels.
//!
//! ```
//! use isac_fp::scenario::{self, NetworkConfig};
//!
//! let cfg = NetworkConfig::small_test();
//! let (topo, ch) = scenario::build_instance(&cfg).unwrap();
//!
//! assert_eq!(topo.bs_positions.len(), cfg.num_cells);
//! // Steering vectors have unit-magnitude entries.
//! let a = scenario::steering_vector(0.3, cfg.tx_antennas).unwrap();
//! assert!(a.iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
//! assert_eq!(ch.g_resp[0].nrows(), cfg.echo_rx_antennas);
//! ```

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::linalg::{CMat, CVec, C64};
use crate::seeding;
use crate::{Error, Result};

/// Users are dropped uniformly on a ring between these fractions of the cell
/// radius, i.e. near the cell edge where interference coupling is strongest.
pub const USER_RING_MIN_FRAC: f64 = 0.8;
/// See [`USER_RING_MIN_FRAC`].
pub const USER_RING_MAX_FRAC: f64 = 1.0;

/// A per-base-station real parameter: one value broadcast to every BS, or an
/// explicit list of length `num_cells`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerBs {
    /// The same value for every base station.
    Uniform(f64),
    /// One value per base station, indexed by cell.
    Each(Vec<f64>),
}

impl PerBs {
    /// Value for base station `l`. Call only on a validated config.
    pub fn get(&self, l: usize) -> f64 {
        match self {
            PerBs::Uniform(v) => *v,
            PerBs::Each(vs) => vs[l],
        }
    }

    fn validate(&self, num_cells: usize, what: &str, min: f64) -> Result<()> {
        let check = |v: f64| -> Result<()> {
            if !v.is_finite() || v < min {
                return Err(Error::Config(format!(
                    "{what}: value {v} must be finite and >= {min}"
                )));
            }
            Ok(())
        };
        match self {
            PerBs::Uniform(v) => check(*v),
            PerBs::Each(vs) => {
                if vs.len() != num_cells {
                    return Err(Error::Config(format!(
                        "{what}: expected {num_cells} per-BS values, got {}",
                        vs.len()
                    )));
                }
                vs.iter().try_for_each(|&v| check(v))
            }
        }
    }
}

/// A per-user real parameter: one value broadcast to every user, or an
/// explicit `num_cells × users_per_cell` table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerUser {
    /// The same value for every user in every cell.
    Uniform(f64),
    /// `table[l][k]` is the value for user `k` of cell `l`.
    Each(Vec<Vec<f64>>),
}

impl PerUser {
    /// Value for user `(l, k)`. Call only on a validated config.
    pub fn get(&self, l: usize, k: usize) -> f64 {
        match self {
            PerUser::Uniform(v) => *v,
            PerUser::Each(t) => t[l][k],
        }
    }

    fn validate(&self, num_cells: usize, users: usize, what: &str) -> Result<()> {
        let check = |v: f64| -> Result<()> {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!(
                    "{what}: value {v} must be finite and nonnegative"
                )));
            }
            Ok(())
        };
        match self {
            PerUser::Uniform(v) => check(*v),
            PerUser::Each(t) => {
                if t.len() != num_cells || t.iter().any(|row| row.len() != users) {
                    return Err(Error::Config(format!(
                        "{what}: expected a {num_cells}x{users} table"
                    )));
                }
                t.iter().flatten().try_for_each(|&v| check(v))
            }
        }
    }
}

/// Complete description of a network instance.
///
/// Serializes to/from JSON with these exact field names; scalar fields accept
/// plain numbers, and the per-BS / per-user fields accept either a single
/// number (broadcast) or an array. Fields with obvious defaults
/// (`bs_spacing_m`, the pathloss model, the rough-DoA prior width, the target
/// position) may be omitted from the JSON document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    /// Number of cells `L`. The hexagonal wrap-around layout
    /// ([`build_topology`]) is defined for 1 or 7 cells; other counts are
    /// served by the boundary-effect-free line layout
    /// ([`build_line_topology`]).
    pub num_cells: usize,
    /// Users per cell `K`.
    pub users_per_cell: usize,
    /// Transmit antennas per BS `N_t`.
    pub tx_antennas: usize,
    /// Echo receive antennas per BS `N_r`.
    pub echo_rx_antennas: usize,
    /// Antennas per user `M`.
    pub user_antennas: usize,
    /// Data streams per user `d` (at most `min(M, N_t)`).
    pub streams: usize,
    /// Sensing frame length `T` in symbols.
    pub block_length: usize,
    /// Per-BS transmit power budget, dBm.
    pub power_budget_dbm: PerBs,
    /// Noise power at each user antenna, dBm (σ²).
    pub noise_user_dbm: f64,
    /// Noise power at each echo receive antenna, dBm (σ̃²).
    pub noise_bs_dbm: f64,
    /// Target reflection coefficient ξ per BS (amplitude, nonnegative).
    pub reflection_coeff: PerBs,
    /// Rate weights ω per user (nonnegative).
    pub rate_weights: PerUser,
    /// Sensing weights β per BS (nonnegative).
    pub sensing_weights: PerBs,
    /// Distance between adjacent base stations, meters.
    #[serde(default = "default_bs_spacing")]
    pub bs_spacing_m: f64,
    /// Log-normal shadowing standard deviation, dB.
    #[serde(default = "default_shadowing_std")]
    pub shadowing_std_db: f64,
    /// Pathloss model intercept, dB (pathloss = offset + slope·log10(d_m) + shadowing).
    #[serde(default = "default_pathloss_offset")]
    pub pathloss_offset_db: f64,
    /// Pathloss model slope per decade of distance, dB.
    #[serde(default = "default_pathloss_slope")]
    pub pathloss_slope: f64,
    /// Target position in the plane, meters.
    #[serde(default = "default_target_position")]
    pub target_position_m: [f64; 2],
    /// Half-width of the uniform rough-DoA prior around the true DoA, radians.
    #[serde(default = "default_rough_halfwidth")]
    pub rough_doa_halfwidth_rad: f64,
    /// Root seed; all randomness in the scenario derives from it.
    pub seed: u64,
}

fn default_bs_spacing() -> f64 {
    800.0
}
fn default_shadowing_std() -> f64 {
    8.0
}
fn default_pathloss_offset() -> f64 {
    15.3
}
fn default_pathloss_slope() -> f64 {
    37.6
}
fn default_target_position() -> [f64; 2] {
    [500.0, -1000.0]
}
fn default_rough_halfwidth() -> f64 {
    0.05
}

impl NetworkConfig {
    /// A deliberately tiny but fully featured instance (2 cells, 2 users per
    /// cell, 8 transmit antennas) that solves in milliseconds. Used across
    /// the crate's tests and documentation examples.
    pub fn small_test() -> Self {
        NetworkConfig {
            num_cells: 2,
            users_per_cell: 2,
            tx_antennas: 8,
            echo_rx_antennas: 8,
            user_antennas: 2,
            streams: 2,
            block_length: 4,
            power_budget_dbm: PerBs::Uniform(20.0),
            noise_user_dbm: -80.0,
            noise_bs_dbm: -70.0,
            reflection_coeff: PerBs::Uniform(1e-3),
            rate_weights: PerUser::Uniform(1.0),
            sensing_weights: PerBs::Uniform(1e-9),
            bs_spacing_m: 800.0,
            shadowing_std_db: 8.0,
            pathloss_offset_db: 15.3,
            pathloss_slope: 37.6,
            target_position_m: [500.0, -1000.0],
            rough_doa_halfwidth_rad: 0.05,
            seed: 1,
        }
    }

    /// The headline seven-cell scenario: 45 users per cell, 128-antenna
    /// arrays, 4-antenna users, 30-symbol sensing frames. This is the scale
    /// the solvers are designed for; expect minutes, not milliseconds.
    pub fn seven_cell_default() -> Self {
        NetworkConfig {
            num_cells: 7,
            users_per_cell: 45,
            tx_antennas: 128,
            echo_rx_antennas: 128,
            user_antennas: 4,
            streams: 4,
            block_length: 30,
            power_budget_dbm: PerBs::Uniform(20.0),
            noise_user_dbm: -80.0,
            noise_bs_dbm: -70.0,
            reflection_coeff: PerBs::Uniform(1e-3),
            rate_weights: PerUser::Uniform(1.0),
            sensing_weights: PerBs::Uniform(1e-14),
            bs_spacing_m: 800.0,
            shadowing_std_db: 8.0,
            pathloss_offset_db: 15.3,
            pathloss_slope: 37.6,
            target_position_m: [500.0, -1000.0],
            rough_doa_halfwidth_rad: 0.05,
            seed: 1,
        }
    }

    /// Checks every field for consistency; all public scenario entry points
    /// call this first.
    pub fn validate(&self) -> Result<()> {
        if self.num_cells == 0 {
            return Err(Error::Config("num_cells must be at least 1".into()));
        }
        if self.users_per_cell == 0 {
            return Err(Error::Config("users_per_cell must be at least 1".into()));
        }
        for (name, v) in [
            ("tx_antennas", self.tx_antennas),
            ("echo_rx_antennas", self.echo_rx_antennas),
            ("user_antennas", self.user_antennas),
            ("streams", self.streams),
            ("block_length", self.block_length),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if self.streams > self.user_antennas.min(self.tx_antennas) {
            return Err(Error::Config(format!(
                "streams ({}) cannot exceed min(user_antennas, tx_antennas) = {}",
                self.streams,
                self.user_antennas.min(self.tx_antennas)
            )));
        }
        if !(self.bs_spacing_m.is_finite() && self.bs_spacing_m > 0.0) {
            return Err(Error::Config(format!(
                "bs_spacing_m must be positive, got {}",
                self.bs_spacing_m
            )));
        }
        if !(self.shadowing_std_db.is_finite() && self.shadowing_std_db >= 0.0) {
            return Err(Error::Config(format!(
                "shadowing_std_db must be nonnegative, got {}",
                self.shadowing_std_db
            )));
        }
        // Noise floors may be -inf (zero watts, the noiseless limit used by
        // echo-synthesis tests); operations that need strictly positive noise
        // check for it themselves.
        for (name, v) in [
            ("noise_user_dbm", self.noise_user_dbm),
            ("noise_bs_dbm", self.noise_bs_dbm),
        ] {
            if v.is_nan() || v == f64::INFINITY {
                return Err(Error::Config(format!(
                    "{name} must not be NaN or +inf, got {v}"
                )));
            }
        }
        for (name, v) in [
            ("pathloss_offset_db", self.pathloss_offset_db),
            ("pathloss_slope", self.pathloss_slope),
        ] {
            if !v.is_finite() {
                return Err(Error::Config(format!("{name} must be finite, got {v}")));
            }
        }
        if !self.target_position_m.iter().all(|v| v.is_finite()) {
            return Err(Error::Config("target_position_m must be finite".into()));
        }
        if !(self.rough_doa_halfwidth_rad.is_finite() && self.rough_doa_halfwidth_rad >= 0.0) {
            return Err(Error::Config(format!(
                "rough_doa_halfwidth_rad must be nonnegative, got {}",
                self.rough_doa_halfwidth_rad
            )));
        }
        self.power_budget_dbm
            .validate(self.num_cells, "power_budget_dbm", f64::NEG_INFINITY)?;
        self.reflection_coeff
            .validate(self.num_cells, "reflection_coeff", 0.0)?;
        self.sensing_weights
            .validate(self.num_cells, "sensing_weights", 0.0)?;
        self.rate_weights
            .validate(self.num_cells, self.users_per_cell, "rate_weights")?;
        Ok(())
    }

    /// Power budget of BS `l` in watts.
    pub fn power_watts(&self, l: usize) -> f64 {
        dbm_to_watts(self.power_budget_dbm.get(l))
    }

    /// Noise power at a user antenna, watts (σ²).
    pub fn noise_user_watts(&self) -> f64 {
        dbm_to_watts(self.noise_user_dbm)
    }

    /// Noise power at an echo receive antenna, watts (σ̃²).
    pub fn noise_bs_watts(&self) -> f64 {
        dbm_to_watts(self.noise_bs_dbm)
    }

    /// Rate weight ω for user `(l, k)`.
    pub fn omega(&self, l: usize, k: usize) -> f64 {
        self.rate_weights.get(l, k)
    }

    /// Sensing weight β for BS `l`.
    pub fn beta(&self, l: usize) -> f64 {
        self.sensing_weights.get(l)
    }

    /// Reflection coefficient ξ for BS `l`.
    pub fn xi(&self, l: usize) -> f64 {
        self.reflection_coeff.get(l)
    }

    /// Pathloss in dB at distance `d_m` meters with shadowing realization
    /// `kappa_db`: `offset + slope · log10(d_m) + kappa_db`.
    pub fn pathloss_db(&self, d_m: f64, kappa_db: f64) -> Result<f64> {
        if !(d_m.is_finite() && d_m > 0.0) {
            return Err(Error::Domain(format!(
                "pathloss_db: distance must be positive, got {d_m}"
            )));
        }
        Ok(self.pathloss_offset_db + self.pathloss_slope * d_m.log10() + kappa_db)
    }
}

/// Converts dBm to watts: `10^((dbm − 30)/10)`.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

// ── Geometry ────────────────────────────────────────────────────────────────

/// Positions of everything in the plane, plus the wrap-around images used for
/// distance computations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    /// BS positions, `[x, y]` meters; cell 0 is at the origin.
    pub bs_positions: Vec<[f64; 2]>,
    /// `user_positions[l][k]` is user `k` of cell `l`.
    pub user_positions: Vec<Vec<[f64; 2]>>,
    /// Shared radar target(s); currently always length 1.
    pub target_positions: Vec<[f64; 2]>,
    /// `wraparound_images[l]` lists every image of BS `l` (the BS itself
    /// first, then its translated copies). Length 1 per BS in the single-cell
    /// layout, 7 in the seven-cell layout.
    pub wraparound_images: Vec<Vec<[f64; 2]>>,
}

impl Topology {
    /// Wrap-around distance from BS `l` to a point: the minimum over all
    /// images of BS `l`.
    pub fn bs_distance_to(&self, l: usize, point: [f64; 2]) -> f64 {
        self.wraparound_images[l]
            .iter()
            .map(|p| dist(*p, point))
            .fold(f64::INFINITY, f64::min)
    }

    /// All positions as CSV with header `entity,type,x_m,y_m`.
    pub fn positions_csv(&self) -> String {
        let mut out = String::from("entity,type,x_m,y_m\n");
        for (l, p) in self.bs_positions.iter().enumerate() {
            out.push_str(&format!("bs{l},bs,{},{}\n", p[0], p[1]));
        }
        for (l, users) in self.user_positions.iter().enumerate() {
            for (k, p) in users.iter().enumerate() {
                out.push_str(&format!("cell{l}_user{k},user,{},{}\n", p[0], p[1]));
            }
        }
        for (t, p) in self.target_positions.iter().enumerate() {
            out.push_str(&format!("target{t},target,{},{}\n", p[0], p[1]));
        }
        out
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Builds the hexagonal wrap-around layout and drops users on their
/// cell-edge rings. Defined for 1 or 7 cells.
///
/// Cell 0 sits at the origin; in the seven-cell layout cells 1–6 surround it
/// at distance `bs_spacing_m` and angles 0°, 60°, …, 300°. Wrap-around images
/// are generated by the six cluster translation vectors of the 7-cell
/// hexagonal tiling (length `√7 · bs_spacing_m`), so the cluster behaves as
/// if it tiled the whole plane. User placement draws from the seed's
/// `"topology"` stream; cells are filled in index order, each user drawing
/// radius then angle.
pub fn build_topology(cfg: &NetworkConfig) -> Result<Topology> {
    cfg.validate()?;
    if cfg.num_cells != 1 && cfg.num_cells != 7 {
        return Err(Error::Config(format!(
            "hexagonal wrap-around layouts support 1 or 7 cells, got {} \
             (use build_line_topology for other cell counts)",
            cfg.num_cells
        )));
    }
    let d = cfg.bs_spacing_m;
    let mut bs_positions = vec![[0.0, 0.0]];
    if cfg.num_cells == 7 {
        for k in 0..6 {
            let ang = PI / 3.0 * k as f64;
            bs_positions.push([d * ang.cos(), d * ang.sin()]);
        }
    }

    // Cluster translation vectors: R(60°k) · (2a1 + a2) for k = 0..6, where
    // a1, a2 span the hexagonal BS lattice. |2a1 + a2| = √7 · spacing.
    let mut translations = vec![[0.0, 0.0]];
    if cfg.num_cells == 7 {
        let base = [2.5 * d, 3f64.sqrt() / 2.0 * d];
        for k in 0..6 {
            let ang = PI / 3.0 * k as f64;
            let (s, c) = ang.sin_cos();
            translations.push([base[0] * c - base[1] * s, base[0] * s + base[1] * c]);
        }
    }
    let wraparound_images = bs_positions
        .iter()
        .map(|p| {
            translations
                .iter()
                .map(|t| [p[0] + t[0], p[1] + t[1]])
                .collect()
        })
        .collect();

    finish_topology(cfg, bs_positions, wraparound_images)
}

/// Builds a plain line layout — BS `l` at `(l · bs_spacing_m, 0)`, no
/// wrap-around images — for any cell count.
///
/// This is the layout behind small multi-cell test instances (for example
/// two-cell networks), where wrap-around would be meaningless. User placement
/// is identical to [`build_topology`], including the seed stream.
pub fn build_line_topology(cfg: &NetworkConfig) -> Result<Topology> {
    cfg.validate()?;
    let bs_positions: Vec<[f64; 2]> = (0..cfg.num_cells)
        .map(|l| [l as f64 * cfg.bs_spacing_m, 0.0])
        .collect();
    let images = bs_positions.iter().map(|p| vec![*p]).collect();
    finish_topology(cfg, bs_positions, images)
}

/// Shared tail of the topology builders: cell-edge user placement and the
/// target entry.
fn finish_topology(
    cfg: &NetworkConfig,
    bs_positions: Vec<[f64; 2]>,
    wraparound_images: Vec<Vec<[f64; 2]>>,
) -> Result<Topology> {
    let mut rng = seeding::rng_from_seed(seeding::child_seed(cfg.seed, 0, "topology"));
    let cell_radius = cfg.bs_spacing_m / 2.0;
    let user_positions = bs_positions
        .iter()
        .map(|bs| {
            (0..cfg.users_per_cell)
                .map(|_| {
                    let r = cell_radius
                        * (USER_RING_MIN_FRAC
                            + (USER_RING_MAX_FRAC - USER_RING_MIN_FRAC) * rng.gen::<f64>());
                    let phi = 2.0 * PI * rng.gen::<f64>();
                    [bs[0] + r * phi.cos(), bs[1] + r * phi.sin()]
                })
                .collect()
        })
        .collect();

    Ok(Topology {
        bs_positions,
        user_positions,
        target_positions: vec![cfg.target_position_m],
        wraparound_images,
    })
}

/// Convenience for tests and examples: topology plus channels in one call,
/// using the wrap-around layout when defined and the line layout otherwise.
pub fn build_instance(cfg: &NetworkConfig) -> Result<(Topology, ChannelSet)> {
    let topo = if cfg.num_cells == 1 || cfg.num_cells == 7 {
        build_topology(cfg)?
    } else {
        build_line_topology(cfg)?
    };
    let ch = generate_channels(cfg, &topo)?;
    Ok((topo, ch))
}

// ── Arrays and the target response ──────────────────────────────────────────

/// Steering vector of an `n`-element half-wavelength ULA toward angle
/// `theta`: entry `m` is `exp(−jπ m sin θ)`, `m = 0..n`.
pub fn steering_vector(theta: f64, n: usize) -> Result<CVec> {
    if n == 0 {
        return Err(Error::Domain(
            "steering_vector: need at least 1 antenna".into(),
        ));
    }
    if !theta.is_finite() {
        return Err(Error::Domain(format!(
            "steering_vector: non-finite angle {theta}"
        )));
    }
    let s = theta.sin();
    Ok(CVec::from_fn(n, |m, _| {
        C64::from_polar(1.0, -PI * m as f64 * s)
    }))
}

/// Elementwise derivative of [`steering_vector`] with respect to `theta`:
/// entry `m` is `−jπ m cos θ · exp(−jπ m sin θ)`.
pub fn steering_derivative(theta: f64, n: usize) -> Result<CVec> {
    let a = steering_vector(theta, n)?;
    let c = theta.cos();
    Ok(CVec::from_fn(n, |m, _| {
        C64::new(0.0, -PI * m as f64 * c) * a[m]
    }))
}

/// Target response seen by a BS with `n_r` receive and `n_t` transmit
/// antennas: `G = ξ a_r(θ) a_t(θ)ᵀ` (an ordinary transpose — the response is
/// a reflection, not a beamforming inner product), together with its
/// elementwise derivative with respect to `θ`.
pub fn build_response(xi: f64, theta: f64, n_r: usize, n_t: usize) -> Result<(CMat, CMat)> {
    if !(xi.is_finite() && xi >= 0.0) {
        return Err(Error::Domain(format!(
            "build_response: reflection coefficient must be nonnegative, got {xi}"
        )));
    }
    let a_r = steering_vector(theta, n_r)?;
    let a_t = steering_vector(theta, n_t)?;
    let da_r = steering_derivative(theta, n_r)?;
    let da_t = steering_derivative(theta, n_t)?;
    let xi = C64::new(xi, 0.0);
    let g = (&a_r * a_t.transpose()) * xi;
    let g_dot = (&da_r * a_t.transpose() + &a_r * da_t.transpose()) * xi;
    Ok((g, g_dot))
}

// ── Channels ────────────────────────────────────────────────────────────────

/// Every propagation matrix of one scenario realization.
pub struct ChannelSet {
    /// `h[l][k][i]`: channel from BS `i` to user `k` of cell `l`, `M × N_t`.
    pub h: Vec<Vec<Vec<CMat>>>,
    /// `g_cross[l][i]` for `i ≠ l`: channel from BS `i`'s transmit array to
    /// BS `l`'s echo receive array, `N_r × N_t`. `None` on the diagonal — a
    /// BS's own echo path goes through the target response instead.
    pub g_cross: Vec<Vec<Option<CMat>>>,
    /// Target response per BS, `N_r × N_t`.
    pub g_resp: Vec<CMat>,
    /// Derivative of the target response with respect to the DoA, per BS.
    pub g_dot: Vec<CMat>,
    /// True DoA of the target at each BS, radians.
    pub theta_true: Vec<f64>,
    /// Rough prior DoA handed to the estimator (true DoA plus a uniform
    /// perturbation of half-width [`NetworkConfig::rough_doa_halfwidth_rad`]).
    pub theta_rough: Vec<f64>,
}

impl ChannelSet {
    /// `(L, K, N_t, N_r, M)` of this channel set.
    pub fn dims(&self) -> (usize, usize, usize, usize, usize) {
        let l = self.h.len();
        let k = self.h[0].len();
        let m = self.h[0][0][0].nrows();
        let n_t = self.h[0][0][0].ncols();
        let n_r = self.g_resp[0].nrows();
        (l, k, n_t, n_r, m)
    }
}

/// A `rows × cols` matrix of i.i.d. circular complex Gaussians with per-entry
/// standard deviation `amplitude` (i.e. `E|entry|² = amplitude²`). Entries
/// are drawn row by row, real part before imaginary part.
pub fn complex_gaussian(rng: &mut ChaCha12Rng, rows: usize, cols: usize, amplitude: f64) -> CMat {
    let scale = amplitude / 2f64.sqrt();
    let mut m = CMat::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            m[(r, c)] = C64::new(scale * re, scale * im);
        }
    }
    m
}

/// Draws all channels for a topology: Rayleigh-faded user links and cross-BS
/// links with distance pathloss and log-normal shadowing, plus the
/// deterministic target responses.
///
/// Distances use the wrap-around minimum over BS images. The draw order is
/// fixed — user links in `(l, k, i)` lexicographic order (one shadowing draw,
/// then the matrix entries), then cross-BS links in `(l, i)` order, then one
/// rough-DoA perturbation per BS — so a given seed always produces the same
/// channels. All randomness comes from the seed's `"channels"` stream.
pub fn generate_channels(cfg: &NetworkConfig, topo: &Topology) -> Result<ChannelSet> {
    cfg.validate()?;
    let l_cells = cfg.num_cells;
    if topo.bs_positions.len() != l_cells || topo.user_positions.len() != l_cells {
        return Err(Error::Domain(format!(
            "generate_channels: topology has {} cells, config says {}",
            topo.bs_positions.len(),
            l_cells
        )));
    }
    if topo.target_positions.is_empty() {
        return Err(Error::Domain(
            "generate_channels: topology has no target".into(),
        ));
    }
    let mut rng = seeding::rng_from_seed(seeding::child_seed(cfg.seed, 0, "channels"));

    let faded_link = |rng: &mut ChaCha12Rng, d_m: f64, rows: usize, cols: usize| -> Result<CMat> {
        let kappa = if cfg.shadowing_std_db > 0.0 {
            let z: f64 = rng.sample(StandardNormal);
            cfg.shadowing_std_db * z
        } else {
            0.0
        };
        let pl_db = cfg.pathloss_db(d_m, kappa)?;
        let amplitude = 10f64.powf(-pl_db / 20.0);
        Ok(complex_gaussian(rng, rows, cols, amplitude))
    };

    let mut h = Vec::with_capacity(l_cells);
    for l in 0..l_cells {
        let mut per_cell = Vec::with_capacity(cfg.users_per_cell);
        for k in 0..cfg.users_per_cell {
            let user = topo.user_positions[l][k];
            let mut per_user = Vec::with_capacity(l_cells);
            for i in 0..l_cells {
                let d_m = topo.bs_distance_to(i, user);
                per_user.push(faded_link(
                    &mut rng,
                    d_m,
                    cfg.user_antennas,
                    cfg.tx_antennas,
                )?);
            }
            per_cell.push(per_user);
        }
        h.push(per_cell);
    }

    let mut g_cross = Vec::with_capacity(l_cells);
    for l in 0..l_cells {
        let mut row = Vec::with_capacity(l_cells);
        for i in 0..l_cells {
            if i == l {
                row.push(None);
            } else {
                let d_m = topo.bs_distance_to(i, topo.bs_positions[l]);
                row.push(Some(faded_link(
                    &mut rng,
                    d_m,
                    cfg.echo_rx_antennas,
                    cfg.tx_antennas,
                )?));
            }
        }
        g_cross.push(row);
    }

    let target = topo.target_positions[0];
    let mut g_resp = Vec::with_capacity(l_cells);
    let mut g_dot = Vec::with_capacity(l_cells);
    let mut theta_true = Vec::with_capacity(l_cells);
    for l in 0..l_cells {
        let bs = topo.bs_positions[l];
        let theta = (target[1] - bs[1]).atan2(target[0] - bs[0]);
        let (g, gd) = build_response(cfg.xi(l), theta, cfg.echo_rx_antennas, cfg.tx_antennas)?;
        g_resp.push(g);
        g_dot.push(gd);
        theta_true.push(theta);
    }

    let hw = cfg.rough_doa_halfwidth_rad;
    let theta_rough = theta_true
        .iter()
        .map(|&t| t + rng.gen_range(-hw..=hw))
        .collect();

    Ok(ChannelSet {
        h,
        g_cross,
        g_resp,
        g_dot,
        theta_true,
        theta_rough,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::fro_norm;
    use proptest::prelude::*;

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    // 1. Pathloss spot values: the intercept at 1 m, two decades out, and
    //    with an 8 dB shadowing excursion.
    #[test]
    fn pathloss_spot_values() {
        let cfg = NetworkConfig::small_test();
        assert!((cfg.pathloss_db(1.0, 0.0).unwrap() - 15.3).abs() < 1e-12);
        assert!((cfg.pathloss_db(100.0, 0.0).unwrap() - 90.5).abs() < 1e-12);
        assert!((cfg.pathloss_db(100.0, 8.0).unwrap() - 98.5).abs() < 1e-12);
        assert!(cfg.pathloss_db(0.0, 0.0).is_err());
        assert!(cfg.pathloss_db(-5.0, 0.0).is_err());
    }

    // 2. dBm conversion anchors: 30 dBm = 1 W, 0 dBm = 1 mW.
    #[test]
    fn dbm_anchors() {
        assert!((dbm_to_watts(30.0) - 1.0).abs() < 1e-15);
        assert!((dbm_to_watts(0.0) - 1e-3).abs() < 1e-18);
        assert!((dbm_to_watts(20.0) - 0.1).abs() < 1e-16);
    }

    // 3. Steering vector spot values.
    #[test]
    fn steering_spot_values() {
        // Broadside: all ones.
        let a = steering_vector(0.0, 4).unwrap();
        for m in 0..4 {
            assert!((a[m] - C64::new(1.0, 0.0)).norm() < 1e-15);
        }
        // Endfire: alternating ±1.
        let a = steering_vector(PI / 2.0, 2).unwrap();
        assert!((a[0] - C64::new(1.0, 0.0)).norm() < 1e-12);
        assert!((a[1] - C64::new(-1.0, 0.0)).norm() < 1e-12);
        // 30°: second entry exp(−jπ/2) = −j.
        let a = steering_vector(PI / 6.0, 2).unwrap();
        assert!((a[1] - C64::new(0.0, -1.0)).norm() < 1e-12);
        assert!(steering_vector(0.3, 0).is_err());
    }

    // 4. Steering derivative spot values and the finite-difference oracle.
    #[test]
    fn steering_derivative_matches_finite_differences() {
        // First entry is always zero; at endfire cos θ = 0 kills every entry.
        let d = steering_derivative(0.7, 4).unwrap();
        assert_eq!(d[0], C64::new(0.0, 0.0));
        let d = steering_derivative(PI / 2.0, 4).unwrap();
        assert!(d.iter().all(|z| z.norm() < 1e-12));
        let d = steering_derivative(0.0, 2).unwrap();
        assert!((d[1] - C64::new(0.0, -PI)).norm() < 1e-12);

        // Central differences at step 1e-6 across 50 angles.
        let h = 1e-6;
        for i in 0..50 {
            let theta = -1.3 + 2.6 * (i as f64) / 49.0;
            let n = 5;
            let fwd = steering_vector(theta + h, n).unwrap();
            let bwd = steering_vector(theta - h, n).unwrap();
            let fd = (fwd - bwd).unscale(2.0 * h);
            let an = steering_derivative(theta, n).unwrap();
            let num = (&an - &fd).norm();
            let den = an.norm().max(1e-12);
            assert!(num / den < 1e-6, "theta={theta}: rel err {}", num / den);
        }
    }

    proptest! {
        // 5. Unit magnitude of steering entries for arbitrary angles.
        #[test]
        fn steering_entries_have_unit_magnitude(theta in -1.57f64..1.57, n in 1usize..32) {
            let a = steering_vector(theta, n).unwrap();
            for z in a.iter() {
                prop_assert!((z.norm() - 1.0).abs() < 1e-12);
            }
        }
    }

    // 6. Response builder: rank-1 structure, derivative oracle, edge cases.
    #[test]
    fn response_is_rank_one_with_matching_derivative() {
        let (g, gd) = build_response(2.0, 0.3, 4, 4).unwrap();
        // Rank 1: second singular value is numerically zero.
        let svd = g.clone().svd(false, false);
        let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
        sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert!(sv[1] / sv[0] < 1e-10, "σ2/σ1 = {}", sv[1] / sv[0]);

        // Central-difference oracle on the full matrix.
        let h = 1e-6;
        let (gp, _) = build_response(2.0, 0.3 + h, 4, 4).unwrap();
        let (gm, _) = build_response(2.0, 0.3 - h, 4, 4).unwrap();
        let fd = (gp - gm).unscale(2.0 * h);
        let rel = fro_norm(&(&gd - &fd)) / fro_norm(&gd);
        assert!(rel < 1e-6, "rel err {rel}");

        // Degenerate sizes and coefficients.
        let (g, gd) = build_response(3.0, 0.9, 1, 1).unwrap();
        assert!((g[(0, 0)] - C64::new(3.0, 0.0)).norm() < 1e-15);
        assert!(gd[(0, 0)].norm() < 1e-15);
        let (g, gd) = build_response(0.0, 0.4, 3, 3).unwrap();
        assert!(fro_norm(&g) == 0.0 && fro_norm(&gd) == 0.0);
        assert!(build_response(-1.0, 0.4, 3, 3).is_err());
    }

    // 7. Topology: single-cell and seven-cell layouts, determinism, errors.
    #[test]
    fn topology_layouts() {
        let mut cfg = NetworkConfig::small_test();
        cfg.num_cells = 1;
        let topo = build_topology(&cfg).unwrap();
        assert_eq!(topo.bs_positions, vec![[0.0, 0.0]]);
        assert_eq!(topo.wraparound_images[0].len(), 1);
        assert_eq!(topo.user_positions[0].len(), cfg.users_per_cell);

        cfg.num_cells = 7;
        let topo = build_topology(&cfg).unwrap();
        assert_eq!(topo.bs_positions.len(), 7);
        for l in 1..7 {
            assert!((dist(topo.bs_positions[l], [0.0, 0.0]) - 800.0).abs() < 1e-9);
        }
        // Ring neighbors are also spaced by exactly the BS spacing.
        assert!((dist(topo.bs_positions[1], topo.bs_positions[2]) - 800.0).abs() < 1e-9);
        assert_eq!(topo.wraparound_images[0].len(), 7);

        // Determinism: identical configs give bit-identical topologies.
        let again = build_topology(&cfg).unwrap();
        assert_eq!(topo, again);

        // Arbitrary cell counts go through the line layout instead.
        cfg.num_cells = 3;
        assert!(matches!(build_topology(&cfg), Err(Error::Config(_))));
        let line = build_line_topology(&cfg).unwrap();
        assert_eq!(
            line.bs_positions,
            vec![[0.0, 0.0], [800.0, 0.0], [1600.0, 0.0]]
        );
        assert_eq!(line.wraparound_images[2], vec![[1600.0, 0.0]]);
    }

    // 8. Users land on the cell-edge ring of their own BS.
    #[test]
    fn users_sit_on_the_edge_ring() {
        let mut cfg = NetworkConfig::small_test();
        cfg.num_cells = 7;
        cfg.users_per_cell = 20;
        let topo = build_topology(&cfg).unwrap();
        let radius = cfg.bs_spacing_m / 2.0;
        for l in 0..7 {
            for k in 0..20 {
                let r = dist(topo.user_positions[l][k], topo.bs_positions[l]);
                assert!(r >= USER_RING_MIN_FRAC * radius - 1e-9);
                assert!(r <= USER_RING_MAX_FRAC * radius + 1e-9);
            }
        }
    }

    // 9. Wrap-around symmetry: rotating the outer ring by one position (the
    //    60° lattice symmetry) permutes the pairwise wrap-around distances.
    #[test]
    fn wraparound_distances_respect_lattice_symmetry() {
        let mut cfg = NetworkConfig::small_test();
        cfg.num_cells = 7;
        let topo = build_topology(&cfg).unwrap();
        // Permutation: center fixed, outer cells 1..6 rotate by one.
        let sigma = |i: usize| if i == 0 { 0 } else { (i % 6) + 1 };
        for i in 0..7 {
            for j in 0..7 {
                let dij = topo.bs_distance_to(i, topo.bs_positions[j]);
                let dpp = topo.bs_distance_to(sigma(i), topo.bs_positions[sigma(j)]);
                assert!(
                    (dij - dpp).abs() < 1e-6,
                    "wrap distance not symmetric: d({i},{j})={dij} vs d({},{})={dpp}",
                    sigma(i),
                    sigma(j)
                );
            }
        }
    }

    // 10. Channel generation: shapes, determinism, and distinct seeds.
    #[test]
    fn channels_are_deterministic_with_correct_shapes() {
        let mut cfg = NetworkConfig::small_test();
        cfg.num_cells = 7;
        cfg.users_per_cell = 3;
        let topo = build_topology(&cfg).unwrap();
        let ch = generate_channels(&cfg, &topo).unwrap();
        assert_eq!(ch.h.len(), 7);
        assert_eq!(ch.h[0].len(), 3);
        assert_eq!(ch.h[0][0].len(), 7);
        assert_eq!(ch.h[2][1][4].shape(), (cfg.user_antennas, cfg.tx_antennas));
        assert_eq!(
            ch.g_cross[1][0].as_ref().unwrap().shape(),
            (cfg.echo_rx_antennas, cfg.tx_antennas)
        );
        assert!(ch.g_cross[1][1].is_none());
        assert_eq!(ch.g_resp.len(), 7);
        let (l, k, n_t, n_r, m) = ch.dims();
        assert_eq!((l, k, n_t, n_r, m), (7, 3, 8, 8, 2));

        let again = generate_channels(&cfg, &topo).unwrap();
        assert_eq!(ch.h[3][2][5], again.h[3][2][5]);
        assert_eq!(ch.theta_rough, again.theta_rough);

        let mut other = cfg.clone();
        other.seed = cfg.seed + 1;
        let ch2 = generate_channels(&other, &topo).unwrap();
        assert_ne!(ch.h[0][0][0], ch2.h[0][0][0]);
    }

    // 11. The rough DoA stays within the configured half-width of the truth.
    #[test]
    fn rough_doa_stays_in_prior_band() {
        let mut cfg = NetworkConfig::small_test();
        cfg.num_cells = 7;
        cfg.rough_doa_halfwidth_rad = 0.05;
        let topo = build_topology(&cfg).unwrap();
        for seed in 0..20 {
            let mut c = cfg.clone();
            c.seed = seed;
            let ch = generate_channels(&c, &topo).unwrap();
            for l in 0..7 {
                assert!((ch.theta_rough[l] - ch.theta_true[l]).abs() <= 0.05 + 1e-12);
            }
        }
        // Zero half-width pins the rough prior to the truth.
        cfg.rough_doa_halfwidth_rad = 0.0;
        let ch = generate_channels(&cfg, &topo).unwrap();
        assert_eq!(ch.theta_rough, ch.theta_true);
    }

    // 12. Statistical check on the fading amplitude: with shadowing disabled
    //     the mean squared entry equals the pathloss gain within 5 %.
    #[test]
    fn fading_moments_match_the_link_budget() {
        // The raw complex-Gaussian helper: E|entry|² = amplitude².
        let mut rng = seeding::rng_from_seed(99);
        let m = complex_gaussian(&mut rng, 250, 400, 0.5);
        let mean_sq = m.iter().map(|z| z.norm_sqr()).sum::<f64>() / (250.0 * 400.0);
        assert!(rel_err(mean_sq, 0.25) < 0.05, "mean |h|² = {mean_sq}");

        // End to end: a single-cell link at a known distance.
        let mut cfg = NetworkConfig::small_test();
        cfg.num_cells = 1;
        cfg.users_per_cell = 1;
        cfg.user_antennas = 2;
        cfg.tx_antennas = 8;
        cfg.shadowing_std_db = 0.0;
        let topo = build_topology(&cfg).unwrap();
        let d_m = topo.bs_distance_to(0, topo.user_positions[0][0]);
        let gain = 10f64.powf(-cfg.pathloss_db(d_m, 0.0).unwrap() / 10.0);
        let mut acc = 0.0;
        let mut count = 0usize;
        for seed in 0..2000 {
            let mut c = cfg.clone();
            c.seed = seed;
            let ch = generate_channels(&c, &topo).unwrap();
            acc += ch.h[0][0][0].iter().map(|z| z.norm_sqr()).sum::<f64>();
            count += ch.h[0][0][0].len();
        }
        let mean_sq = acc / count as f64;
        assert!(
            rel_err(mean_sq, gain) < 0.05,
            "mean |h|² = {mean_sq:.3e}, expected {gain:.3e}"
        );
    }

    // 13. Config validation rejects the obvious misconfigurations.
    #[test]
    fn config_validation_catches_bad_fields() {
        let good = NetworkConfig::small_test();
        assert!(good.validate().is_ok());

        let mut bad = good.clone();
        bad.streams = 5; // exceeds min(M, N_t) = 2
        assert!(bad.validate().is_err());

        let mut bad = good.clone();
        bad.rate_weights = PerUser::Each(vec![vec![1.0; 2]; 1]); // wrong L
        assert!(bad.validate().is_err());

        let mut bad = good.clone();
        bad.reflection_coeff = PerBs::Uniform(-0.5);
        assert!(bad.validate().is_err());

        let mut bad = good.clone();
        bad.bs_spacing_m = 0.0;
        assert!(bad.validate().is_err());

        let mut bad = good.clone();
        bad.power_budget_dbm = PerBs::Each(vec![20.0]); // wrong length
        assert!(bad.validate().is_err());
    }

    // 14. JSON round trip, including the scalar-or-array fields and defaults.
    #[test]
    fn config_json_round_trip() {
        let mut cfg = NetworkConfig::small_test();
        cfg.power_budget_dbm = PerBs::Each(vec![20.0, 23.0]);
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back: NetworkConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(cfg, back);

        // A minimal document relies on the defaulted fields.
        let minimal = r#"{
            "num_cells": 1, "users_per_cell": 2,
            "tx_antennas": 4, "echo_rx_antennas": 4, "user_antennas": 2,
            "streams": 2, "block_length": 4,
            "power_budget_dbm": 20.0, "noise_user_dbm": -80.0, "noise_bs_dbm": -70.0,
            "reflection_coeff": 1e-3, "rate_weights": 1.0, "sensing_weights": [1e-9],
            "seed": 5
        }"#;
        let cfg: NetworkConfig = serde_json::from_str(minimal).unwrap();
        assert_eq!(cfg.bs_spacing_m, 800.0);
        assert_eq!(cfg.pathloss_offset_db, 15.3);
        assert_eq!(cfg.rough_doa_halfwidth_rad, 0.05);
        assert!(cfg.validate().is_ok());
        assert_eq!(cfg.beta(0), 1e-9);
    }
}
