//! Shared helpers for unit tests: random PSD matrices and random feasible
//! beamformer sets.

use crate::linalg::{self, CMat};
use crate::metrics::BeamformerSet;
use crate::scenario::{self, NetworkConfig};
use crate::seeding::rng_from_seed;

/// Random Hermitian positive semidefinite `n × n` matrix (`A Aᴴ` for a
/// complex Gaussian `A`).
pub fn random_psd(n: usize, seed: u64) -> CMat {
    let mut rng = rng_from_seed(seed);
    let a = scenario::complex_gaussian(&mut rng, n, n, 1.0);
    linalg::symmetrize(&(&a * a.adjoint()))
}

/// Random complex Gaussian matrix drawn from a seeded stream.
pub fn random_cmat(rows: usize, cols: usize, seed: u64) -> CMat {
    let mut rng = rng_from_seed(seed);
    scenario::complex_gaussian(&mut rng, rows, cols, 1.0)
}

/// Random beamformer set with each BS scaled to `fill · P_l` transmit power.
/// Feasible for `fill ≤ 1`.
pub fn random_beamformers(cfg: &NetworkConfig, seed: u64, fill: f64) -> BeamformerSet {
    let mut rng = rng_from_seed(seed);
    let mut w = BeamformerSet::zeros(cfg);
    for l in 0..cfg.num_cells {
        for k in 0..cfg.users_per_cell {
            w.w[l][k] = scenario::complex_gaussian(&mut rng, cfg.tx_antennas, cfg.streams, 1.0);
        }
        let p = w.bs_power(l);
        if p > 0.0 {
            let s = (fill * cfg.power_watts(l) / p).sqrt();
            for k in 0..cfg.users_per_cell {
                w.w[l][k] *= crate::linalg::C64::new(s, 0.0);
            }
        }
    }
    w
}
