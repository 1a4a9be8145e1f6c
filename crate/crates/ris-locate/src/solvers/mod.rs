//! Sparse-recovery solvers for both estimation stages.
//!
//! Stage 1 uses a distributed simultaneous orthogonal matching pursuit
//! ([`dcs_somp`]) over the pilot observations. Stage 2 poses a joint
//! multiple-measurement-vector (MMV) problem over the reconfiguration
//! blocks; [`gsbl`] solves it exactly in the lifted domain, [`tmsbl`] with a
//! Kronecker-factored approximation that never materializes the lifted
//! covariance, and [`omp`]/[`sbl_smv`]/[`amp_mmv`] serve as baselines.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

mod amp;
mod dcs_somp;
mod gsbl;
mod omp;
mod sbl;
mod tmsbl;

pub use amp::amp_mmv;
pub use dcs_somp::{dcs_somp, Stage1Selection};
pub use gsbl::gsbl;
pub use omp::{omp, OmpResult};
pub use sbl::{sbl_smv, SmvResult};
pub use tmsbl::tmsbl;

/// Relative threshold below which a hyperparameter is frozen at zero.
pub(crate) const GAMMA_PRUNE_REL: f64 = 1e-10;

/// Condition-number guard for posterior covariance solves.
pub(crate) const CONDITION_LIMIT: f64 = 1e14;

/// One stage-2 recovery instance: per-block observations of a single
/// path pair over all subcarriers.
#[derive(Debug, Clone)]
pub struct MmvProblem {
    /// n_blocks x n_subcarriers observation matrix.
    pub observations: DMatrix<Complex64>,
    /// n_blocks x n_grid sensing operator (phase schedule times dictionary).
    pub sensing: DMatrix<Complex64>,
    /// Per-block noise variance after combining (diagonal of the block noise
    /// covariance); strictly positive.
    pub noise_cov_diag: Vec<f64>,
    pub max_iterations: usize,
    pub convergence_tol: f64,
}

impl MmvProblem {
    pub fn new(
        observations: DMatrix<Complex64>,
        sensing: DMatrix<Complex64>,
        noise_cov_diag: Vec<f64>,
        max_iterations: usize,
        convergence_tol: f64,
    ) -> Result<Self> {
        if observations.nrows() != sensing.nrows() {
            return Err(Error::ShapeMismatch {
                context: "MmvProblem observations/sensing",
                expected: format!("{} rows", sensing.nrows()),
                actual: format!("{} rows", observations.nrows()),
            });
        }
        if noise_cov_diag.len() != observations.nrows() {
            return Err(Error::ShapeMismatch {
                context: "MmvProblem noise diagonal",
                expected: format!("{} entries", observations.nrows()),
                actual: format!("{} entries", noise_cov_diag.len()),
            });
        }
        for (t, &v) in noise_cov_diag.iter().enumerate() {
            if v <= 0.0 {
                return Err(Error::NonPositive {
                    quantity: "noise covariance entry",
                    value: v,
                });
            }
            let _ = t;
        }
        Ok(MmvProblem {
            observations,
            sensing,
            noise_cov_diag,
            max_iterations,
            convergence_tol,
        })
    }

    pub fn n_blocks(&self) -> usize {
        self.observations.nrows()
    }

    pub fn n_subcarriers(&self) -> usize {
        self.observations.ncols()
    }

    pub fn n_grid(&self) -> usize {
        self.sensing.ncols()
    }
}

/// Output of a stage-2 solver.
#[derive(Debug, Clone)]
pub struct SparseEstimate {
    /// n_grid x n_subcarriers recovered beamspace channel.
    pub channel: DMatrix<Complex64>,
    /// Per-row prior variances at termination (zero for pruned rows).
    pub gamma: Vec<f64>,
    /// Subcarrier correlation matrix at termination.
    pub correlation: DMatrix<Complex64>,
    pub iterations: usize,
    pub converged: bool,
    /// Leading-order flop count of the algorithm at this problem size.
    pub flops: u64,
}

/// Which solver to run on a stage-2 instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SolverKind {
    DcsSomp,
    Sbl,
    Gsbl,
    Tmsbl,
    Omp,
    Amp,
}

impl SolverKind {
    pub fn name(&self) -> &'static str {
        match self {
            SolverKind::DcsSomp => "dcs_somp",
            SolverKind::Sbl => "sbl",
            SolverKind::Gsbl => "gsbl",
            SolverKind::Tmsbl => "tmsbl",
            SolverKind::Omp => "omp",
            SolverKind::Amp => "amp",
        }
    }

    pub fn parse(s: &str) -> Option<SolverKind> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dcs_somp" | "dcs-somp" | "somp" => Some(SolverKind::DcsSomp),
            "sbl" => Some(SolverKind::Sbl),
            "gsbl" => Some(SolverKind::Gsbl),
            "tmsbl" => Some(SolverKind::Tmsbl),
            "omp" => Some(SolverKind::Omp),
            "amp" => Some(SolverKind::Amp),
            _ => None,
        }
    }
}

/// Leading-order flop count of each algorithm.
///
/// The counts follow the published per-iteration cost models:
/// DCS-SOMP `N·N_R² + J³`, per-subcarrier SBL `N·N_R³ + N·J³`,
/// GSBL `N³·N_R³ + J³`, TMSBL `N_R³ + J³ + N_R·N³`, AMP `N_R·N·J`.
pub fn flop_estimate(
    algorithm: SolverKind,
    n_ris: usize,
    n_subcarriers: usize,
    n_blocks: usize,
) -> Result<u64> {
    if n_ris == 0 || n_subcarriers == 0 || n_blocks == 0 {
        return Err(Error::InvalidExperiment(
            "flop_estimate requires positive dimensions".into(),
        ));
    }
    let (r, n, j) = (n_ris as u64, n_subcarriers as u64, n_blocks as u64);
    Ok(match algorithm {
        SolverKind::DcsSomp => n * r.pow(2) + j.pow(3),
        SolverKind::Sbl => n * r.pow(3) + n * j.pow(3),
        SolverKind::Gsbl => n.pow(3) * r.pow(3) + j.pow(3),
        SolverKind::Tmsbl => r.pow(3) + j.pow(3) + r * n.pow(3),
        SolverKind::Omp => n * r * j, // greedy correlations dominate
        SolverKind::Amp => r * n * j,
    })
}

/// Run a stage-2 solver on an MMV instance.
///
/// `Sbl` and `Omp` are applied column-by-column (one subcarrier at a time)
/// and their per-subcarrier estimates reassembled into the channel matrix;
/// the other kinds operate jointly. `DcsSomp` is a stage-1 algorithm and is
/// rejected here.
pub fn solve(problem: &MmvProblem, kind: SolverKind) -> Result<SparseEstimate> {
    match kind {
        SolverKind::Gsbl => gsbl(problem),
        SolverKind::Tmsbl => tmsbl(problem),
        SolverKind::Amp => amp_mmv(problem),
        SolverKind::Sbl => sbl::sbl_per_subcarrier(problem),
        SolverKind::Omp => omp::omp_per_subcarrier(problem),
        SolverKind::DcsSomp => Err(Error::InvalidExperiment(
            "dcs_somp is a stage-1 algorithm; pick a stage-2 solver".into(),
        )),
    }
}

// ---------------------------------------------------------------------------
// shared numerics
// ---------------------------------------------------------------------------

/// Force exact Hermitian symmetry (cheap hygiene between EM iterations).
pub(crate) fn hermitianize(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let mut out = m.clone();
    let n = m.nrows();
    for i in 0..n {
        out[(i, i)] = Complex64::new(m[(i, i)].re, 0.0);
        for j in (i + 1)..n {
            let v = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            out[(i, j)] = v;
            out[(j, i)] = v.conj();
        }
    }
    out
}

/// Invert a Hermitian positive-definite matrix via Cholesky, with a single
/// small diagonal-load fallback and a condition-number guard.
pub(crate) fn hpd_inverse(m: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    let n = m.nrows();
    if n == 0 {
        return Ok(m.clone());
    }
    let sym = hermitianize(m);
    let scale = sym
        .diagonal()
        .iter()
        .map(|d| d.re.abs())
        .fold(0.0f64, f64::max)
        .max(f64::MIN_POSITIVE);

    let pivot_range = |chol: &nalgebra::linalg::Cholesky<Complex64, nalgebra::Dyn>| {
        let diag = chol.l_dirty().diagonal();
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for d in diag.iter() {
            lo = lo.min(d.re);
            hi = hi.max(d.re);
        }
        (lo, hi)
    };

    if let Some(chol) = nalgebra::linalg::Cholesky::new(sym.clone()) {
        let (lo, hi) = pivot_range(&chol);
        if lo > 0.0 && (hi / lo).powi(2) <= CONDITION_LIMIT {
            return Ok(chol.inverse());
        }
        return Err(Error::IllPosed(format!(
            "covariance condition estimate {:.3e} exceeds {CONDITION_LIMIT:.0e}",
            (hi / lo.max(f64::MIN_POSITIVE)).powi(2)
        )));
    }

    // roundoff rescue: one small diagonal load; if the smallest pivot is
    // explained by the load itself the matrix is effectively rank-deficient
    let jitter = 1e-12 * scale;
    let mut attempt = sym;
    for i in 0..n {
        attempt[(i, i)] += Complex64::from(jitter);
    }
    match nalgebra::linalg::Cholesky::new(attempt) {
        Some(chol) => {
            let (lo, hi) = pivot_range(&chol);
            if lo * lo <= 10.0 * jitter || (hi / lo).powi(2) > CONDITION_LIMIT {
                return Err(Error::IllPosed(format!(
                    "covariance rank-deficient: smallest pivot {:.3e} at diagonal load {jitter:.3e}",
                    lo * lo
                )));
            }
            Ok(chol.inverse())
        }
        None => Err(Error::IllPosed(
            "covariance not positive definite even with diagonal load".into(),
        )),
    }
}

/// Relative hyperparameter change used as the common stopping rule.
pub(crate) fn gamma_delta(new: &[f64], old: &[f64]) -> f64 {
    let peak = new.iter().cloned().fold(0.0f64, f64::max);
    if peak <= 0.0 {
        return 0.0;
    }
    new.iter()
        .zip(old)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max)
        / peak
}

/// Scale observation rows and sensing rows by 1/sqrt(noise variance) so the
/// whitened system has unit noise.
pub(crate) fn whiten(problem: &MmvProblem) -> (DMatrix<Complex64>, DMatrix<Complex64>) {
    let mut y = problem.observations.clone();
    let mut a = problem.sensing.clone();
    for (t, &v) in problem.noise_cov_diag.iter().enumerate() {
        let s = Complex64::from(1.0 / v.sqrt());
        y.row_mut(t).scale_mut(s.re);
        a.row_mut(t).scale_mut(s.re);
    }
    (y, a)
}
