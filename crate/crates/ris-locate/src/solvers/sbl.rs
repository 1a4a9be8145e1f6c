//! Single-measurement-vector sparse Bayesian learning and its
//! subcarrier-by-subcarrier wrapper.
//!
//! This is the degenerate scalar-hyperparameter case of the group solvers:
//! every coefficient gets its own prior variance and subcarriers are solved
//! independently, so any correlation across subcarriers is ignored.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::solvers::{
    flop_estimate, gamma_delta, hpd_inverse, whiten, MmvProblem, SolverKind, SparseEstimate,
    GAMMA_PRUNE_REL,
};

/// Outcome of one single-vector SBL run.
#[derive(Debug, Clone)]
pub struct SmvResult {
    /// Posterior mean of the coefficient vector (zeros on pruned entries).
    pub coefficients: DVector<Complex64>,
    /// Per-coefficient prior variances at termination.
    pub gamma: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Standard EM SBL for `y = A x + n` with `n ~ CN(0, noise_var * I)`.
pub fn sbl_smv(
    y: &DVector<Complex64>,
    a: &DMatrix<Complex64>,
    noise_var: f64,
    max_iterations: usize,
    convergence_tol: f64,
) -> Result<SmvResult> {
    if y.len() != a.nrows() {
        return Err(Error::ShapeMismatch {
            context: "sbl_smv observation/sensing",
            expected: format!("{} rows", a.nrows()),
            actual: format!("{} rows", y.len()),
        });
    }
    if noise_var <= 0.0 {
        return Err(Error::NonPositive {
            quantity: "noise variance",
            value: noise_var,
        });
    }
    let n_grid = a.ncols();
    let inv_noise = Complex64::from(1.0 / noise_var);
    let gram = a.ad_mul(a) * inv_noise;
    let rhs = a.ad_mul(y) * inv_noise;

    let mut gamma = vec![1.0f64; n_grid];
    let mut active: Vec<usize> = (0..n_grid).collect();
    let mut coefficients = DVector::<Complex64>::zeros(n_grid);
    let mut iterations = 0usize;
    let mut converged = false;

    while iterations < max_iterations {
        iterations += 1;
        let n_active = active.len();
        let mut precision = DMatrix::<Complex64>::zeros(n_active, n_active);
        for (p, &jp) in active.iter().enumerate() {
            for (q, &jq) in active.iter().enumerate() {
                precision[(p, q)] = gram[(jp, jq)];
            }
            precision[(p, p)] += Complex64::from(1.0 / gamma[jp]);
        }
        let sigma = hpd_inverse(&precision)?;
        let rhs_active = DVector::from_fn(n_active, |p, _| rhs[active[p]]);
        let mu = &sigma * &rhs_active;

        coefficients.fill(Complex64::new(0.0, 0.0));
        let mut gamma_new = gamma.clone();
        for (p, &jp) in active.iter().enumerate() {
            coefficients[jp] = mu[p];
            gamma_new[jp] = (sigma[(p, p)].re + mu[p].norm_sqr()).max(f64::MIN_POSITIVE);
        }

        let delta = gamma_delta(&gamma_new, &gamma);
        gamma = gamma_new;

        let peak = gamma.iter().cloned().fold(0.0f64, f64::max);
        let survivors: Vec<usize> = active
            .iter()
            .copied()
            .filter(|&j| gamma[j] >= GAMMA_PRUNE_REL * peak)
            .collect();
        for &j in &active {
            if !survivors.contains(&j) {
                gamma[j] = 0.0;
                coefficients[j] = Complex64::new(0.0, 0.0);
            }
        }
        active = survivors;

        if delta < convergence_tol {
            converged = true;
            break;
        }
    }

    Ok(SmvResult {
        coefficients,
        gamma,
        iterations,
        converged,
    })
}

/// Apply [`sbl_smv`] independently to every subcarrier of an MMV instance
/// and reassemble the channel matrix. The reported hyperparameters are the
/// empirical row powers of the assembled estimate and the correlation
/// matrix is the identity (the per-subcarrier model has none).
pub(super) fn sbl_per_subcarrier(problem: &MmvProblem) -> Result<SparseEstimate> {
    let (n_blocks, n_sub, n_grid) = (
        problem.n_blocks(),
        problem.n_subcarriers(),
        problem.n_grid(),
    );
    let (y_w, psi_w) = whiten(problem);

    let mut channel = DMatrix::<Complex64>::zeros(n_grid, n_sub);
    let mut iterations = 0usize;
    let mut converged = true;
    for s in 0..n_sub {
        let col = y_w.column(s).clone_owned();
        let run = sbl_smv(
            &col,
            &psi_w,
            1.0,
            problem.max_iterations,
            problem.convergence_tol,
        )?;
        for j in 0..n_grid {
            channel[(j, s)] = run.coefficients[j];
        }
        iterations = iterations.max(run.iterations);
        converged &= run.converged;
    }
    let gamma: Vec<f64> = (0..n_grid)
        .map(|j| channel.row(j).iter().map(|c| c.norm_sqr()).sum::<f64>() / n_sub as f64)
        .collect();
    Ok(SparseEstimate {
        channel,
        gamma,
        correlation: DMatrix::identity(n_sub, n_sub),
        iterations,
        converged,
        flops: flop_estimate(SolverKind::Sbl, n_grid, n_sub, n_blocks)?,
    })
}
