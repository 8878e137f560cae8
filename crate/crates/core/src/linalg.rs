//! Complex linear-algebra helpers shared by the whole crate.
//!
//! Everything here operates on dynamically sized `nalgebra` matrices over
//! `Complex<f64>`. Two things are worth knowing:
//!
//! * **Instrumented decompositions.** Every matrix factorization or linear
//!   solve in the crate goes through [`solve_hpd`], [`eigh`], or
//!   [`ln_det_hpd`], which log the operand dimension in a thread-local
//!   [`ledger`]. Tests use the ledger to prove that the inverse-free solvers
//!   never factor anything larger than a user-antenna-sized matrix. Matrix
//!   products and the power iteration are not decompositions and are not
//!   logged.
//! * **Hermitian hygiene.** Quantities that are Hermitian in exact arithmetic
//!   drift off the Hermitian manifold in floating point; [`symmetrize`] maps
//!   them back and [`hermitian_error`] measures the drift. The crate-wide
//!   tolerance for "this must be Hermitian" checks is
//!   [`HERMITIAN_REL_TOL`] relative to the Frobenius norm.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use num_complex::Complex;

use crate::{Error, Result};

/// Complex scalar used throughout.
pub type C64 = Complex<f64>;
/// Dynamically sized complex matrix.
pub type CMat = DMatrix<C64>;
/// Dynamically sized complex column vector.
pub type CVec = DVector<C64>;

/// Relative tolerance (vs. Frobenius norm) for Hermitian-ness checks.
pub const HERMITIAN_REL_TOL: f64 = 1e-10;

/// Frobenius norm ‖A‖_F.
pub fn fro_norm(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// ‖A − Aᴴ‖_F, a measure of how far `a` is from Hermitian.
pub fn hermitian_error(a: &CMat) -> f64 {
    fro_norm(&(a - a.adjoint()))
}

/// Returns an error unless `a` is square and Hermitian within
/// [`HERMITIAN_REL_TOL`] · ‖A‖_F (absolute tolerance for the zero matrix).
pub fn check_hermitian(a: &CMat, what: &str) -> Result<()> {
    if !a.is_square() {
        return Err(Error::Domain(format!(
            "{what}: expected a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let scale = fro_norm(a).max(1.0);
    if hermitian_error(a) > HERMITIAN_REL_TOL * scale {
        return Err(Error::Domain(format!(
            "{what}: matrix is not Hermitian (‖A − Aᴴ‖_F = {:.3e}, ‖A‖_F = {:.3e})",
            hermitian_error(a),
            fro_norm(a)
        )));
    }
    Ok(())
}

/// Projects onto the Hermitian matrices: (A + Aᴴ)/2.
pub fn symmetrize(a: &CMat) -> CMat {
    (a + a.adjoint()).scale(0.5)
}

/// Real part of the trace.
pub fn trace_re(a: &CMat) -> f64 {
    a.diagonal().iter().map(|z| z.re).sum()
}

/// Hermitian inner product Re tr(Aᴴ B).
pub fn inner_re(a: &CMat, b: &CMat) -> f64 {
    debug_assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

/// An identity matrix scaled by a real value.
pub fn scaled_eye(n: usize, v: f64) -> CMat {
    CMat::identity(n, n) * C64::new(v, 0.0)
}

// ── Decomposition ledger ────────────────────────────────────────────────────

/// Thread-local accounting of matrix factorizations, keyed by dimension.
///
/// The inverse-free solvers advertise that they never factor an
/// `N_t`- or `N_r`-sized matrix during iteration; this ledger is how tests
/// verify that claim. Monitoring code (objective evaluation for traces) runs
/// inside [`ledger::paused`] so that diagnostics do not count against the
/// algorithms being audited.
pub mod ledger {
    use std::cell::RefCell;
    use std::collections::BTreeMap;

    thread_local! {
        static STATE: RefCell<State> = RefCell::new(State::default());
    }

    #[derive(Default)]
    struct State {
        paused: usize,
        counts: BTreeMap<usize, u64>,
    }

    /// Records one factorization of a `dim × dim` system.
    pub fn record(dim: usize) {
        STATE.with(|s| {
            let mut s = s.borrow_mut();
            if s.paused == 0 {
                *s.counts.entry(dim).or_insert(0) += 1;
            }
        });
    }

    /// Clears all recorded counts on this thread.
    pub fn reset() {
        STATE.with(|s| s.borrow_mut().counts.clear());
    }

    /// Snapshot of `(dimension, count)` pairs recorded so far.
    pub fn snapshot() -> Vec<(usize, u64)> {
        STATE.with(|s| s.borrow().counts.iter().map(|(&d, &c)| (d, c)).collect())
    }

    /// Total factorizations of systems with dimension ≥ `dim`.
    pub fn count_at_or_above(dim: usize) -> u64 {
        STATE.with(|s| s.borrow().counts.range(dim..).map(|(_, &c)| c).sum())
    }

    /// Runs `f` with recording suspended (used around diagnostics).
    pub fn paused<T>(f: impl FnOnce() -> T) -> T {
        STATE.with(|s| s.borrow_mut().paused += 1);
        let out = f();
        STATE.with(|s| s.borrow_mut().paused -= 1);
        out
    }
}

// ── Instrumented factorizations ─────────────────────────────────────────────

/// Solves `A X = B` for Hermitian positive definite `A` via Cholesky.
///
/// Logs one factorization of dimension `A.nrows()` in the [`ledger`].
pub fn solve_hpd(a: &CMat, b: &CMat, what: &str) -> Result<CMat> {
    check_hermitian(a, what)?;
    if a.nrows() != b.nrows() {
        return Err(Error::Domain(format!(
            "{what}: solve shape mismatch ({}x{} vs {}x{})",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    ledger::record(a.nrows());
    let chol = Cholesky::new(symmetrize(a))
        .ok_or_else(|| Error::Numerical(format!("{what}: matrix is not positive definite")))?;
    Ok(chol.solve(b))
}

/// Eigendecomposition of a Hermitian matrix; returns `(eigenvalues, V)` with
/// real eigenvalues in nalgebra's order and unitary `V` (columns are
/// eigenvectors, `A = V diag(λ) Vᴴ`).
///
/// Logs one factorization of dimension `A.nrows()` in the [`ledger`].
pub fn eigh(a: &CMat, what: &str) -> Result<(Vec<f64>, CMat)> {
    check_hermitian(a, what)?;
    ledger::record(a.nrows());
    let eig = SymmetricEigen::new(symmetrize(a));
    Ok((eig.eigenvalues.iter().copied().collect(), eig.eigenvectors))
}

/// log det A for Hermitian positive definite `A`, via Cholesky.
///
/// Logs one factorization of dimension `A.nrows()` in the [`ledger`].
pub fn ln_det_hpd(a: &CMat, what: &str) -> Result<f64> {
    check_hermitian(a, what)?;
    ledger::record(a.nrows());
    let chol = Cholesky::new(symmetrize(a))
        .ok_or_else(|| Error::Numerical(format!("{what}: matrix is not positive definite")))?;
    Ok(2.0
        * chol
            .l_dirty()
            .diagonal()
            .iter()
            .map(|z| z.re.ln())
            .sum::<f64>())
}

// ── Power iteration ─────────────────────────────────────────────────────────

/// Largest eigenvalue of a Hermitian PSD matrix by power iteration.
///
/// Runs at most `max_iters` matrix–vector products from a fixed pseudorandom
/// start vector, stopping once the Rayleigh quotient moves by less than
/// `rel_tol` relative. This is *not* a factorization and is not logged in the
/// [`ledger`] — it is the workhorse that keeps the inverse-free solvers free
/// of large decompositions.
pub fn power_lambda_max(a: &CMat, max_iters: usize, rel_tol: f64) -> Result<f64> {
    check_hermitian(a, "power_lambda_max")?;
    let n = a.nrows();
    if n == 0 {
        return Err(Error::Domain("power_lambda_max: empty matrix".into()));
    }
    let scale = fro_norm(a);
    if scale == 0.0 {
        return Ok(0.0);
    }

    let mut v = power_start(n);
    let mut lambda = 0.0_f64;
    for _ in 0..max_iters.max(1) {
        let w = a * &v;
        let norm = w.norm();
        if norm <= f64::EPSILON * scale {
            // v is (numerically) in the null space; the matrix is nonzero, but
            // a pseudorandom start landing exactly in the null space does not
            // happen for the PSD matrices this crate builds.
            return Ok(0.0);
        }
        let next = v.dotc(&w).re;
        v = w.unscale(norm);
        if (next - lambda).abs() <= rel_tol * next.abs().max(f64::MIN_POSITIVE) {
            return Ok(next.max(0.0));
        }
        lambda = next;
    }
    Ok(lambda.max(0.0))
}

/// Fixed pseudorandom unit start vector for the power iteration.
///
/// Derived from a SplitMix64 stream over the dimension so that repeated runs
/// are bit-identical; a deterministic *structured* vector (all-ones, a basis
/// vector) risks being orthogonal to the dominant eigenvector, a pseudorandom
/// one does not in practice.
fn power_start(n: usize) -> CVec {
    let mut state = 0x5851_F42D_4C95_7F2D_u64 ^ (n as u64);
    let mut next = move || {
        state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    };
    let mut v = CVec::from_fn(n, |_, _| {
        // Map two 64-bit draws to a point in the unit square, centered.
        let re = (next() >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
        let im = (next() >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
        C64::new(re, im)
    });
    let norm = v.norm();
    v.unscale_mut(norm);
    v
}
