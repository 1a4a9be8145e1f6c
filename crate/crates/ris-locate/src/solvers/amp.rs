//! Approximate message passing baseline.
//!
//! Complex AMP with a soft-thresholding denoiser applied independently per
//! subcarrier column, with the Onsager correction and a fixed damping
//! factor. Sensing columns are normalized internally so the threshold
//! schedule (a fixed multiple of the estimated residual deviation) stays
//! calibrated regardless of the operator scaling. These are baseline-only
//! choices; the estimator is known to degrade on non-i.i.d. operators such
//! as unit-modulus phase schedules.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::solvers::{flop_estimate, whiten, MmvProblem, SolverKind, SparseEstimate};

/// Iteration cap; AMP either settles quickly or diverges.
const AMP_MAX_ITERATIONS: usize = 50;
/// Threshold = factor * estimated residual standard deviation.
const THRESHOLD_FACTOR: f64 = 1.4;
/// Damping applied to both the estimate and the residual track.
const DAMPING: f64 = 0.7;
/// Residual growth ratio (over a five-iteration window) treated as
/// divergence.
const DIVERGENCE_RATIO: f64 = 10.0;
const DIVERGENCE_WINDOW: usize = 5;

/// Complex soft threshold: shrink the magnitude, keep the phase.
fn soft(p: Complex64, lambda: f64) -> Complex64 {
    let mag = p.norm();
    if mag <= lambda {
        Complex64::new(0.0, 0.0)
    } else {
        p * Complex64::from((mag - lambda) / mag)
    }
}

/// Run per-subcarrier complex AMP on an MMV instance.
pub fn amp_mmv(problem: &MmvProblem) -> Result<SparseEstimate> {
    let (n_blocks, n_sub, n_grid) = (
        problem.n_blocks(),
        problem.n_subcarriers(),
        problem.n_grid(),
    );
    if n_blocks < 2 {
        return Err(Error::InvalidExperiment(
            "amp needs at least two observation blocks".into(),
        ));
    }
    let (y_w, psi_w) = whiten(problem);

    // column-normalized operator; zero columns are left untouched and can
    // never be selected
    let mut col_scale = vec![1.0f64; n_grid];
    let mut a = psi_w.clone();
    for (i, mut c) in a.column_iter_mut().enumerate() {
        let norm = c.norm();
        if norm > 0.0 {
            c.scale_mut(1.0 / norm);
            col_scale[i] = norm;
        }
    }

    let mut channel = DMatrix::<Complex64>::zeros(n_grid, n_sub);
    let mut iterations = 0usize;
    let mut converged = true;
    let sqrt_blocks = (n_blocks as f64).sqrt();
    let cap = problem.max_iterations.min(AMP_MAX_ITERATIONS);

    for s in 0..n_sub {
        let y = y_w.column(s).clone_owned();
        let mut x = DVector::<Complex64>::zeros(n_grid);
        let mut z = y.clone();
        let mut best_x = x.clone();
        let mut best_residual = z.norm();
        let mut residual_history: Vec<f64> = vec![best_residual];
        let mut column_converged = false;

        for iter in 0..cap {
            iterations = iterations.max(iter + 1);
            let p = &x + a.ad_mul(&z);
            let sigma = z.norm() / sqrt_blocks;
            let lambda = THRESHOLD_FACTOR * sigma;

            let x_raw = DVector::from_fn(n_grid, |j, _| soft(p[j], lambda));
            let mut onsager = 0.0f64;
            for j in 0..n_grid {
                let mag = p[j].norm();
                if mag > lambda {
                    onsager += 1.0 - lambda / (2.0 * mag);
                }
            }
            onsager /= n_blocks as f64;
            let z_raw = &y - &a * &x_raw + &z * Complex64::from(onsager);

            let x_next = &x_raw * Complex64::from(DAMPING) + &x * Complex64::from(1.0 - DAMPING);
            let z_next = &z_raw * Complex64::from(DAMPING) + &z * Complex64::from(1.0 - DAMPING);

            let step = (&x_next - &x).norm();
            let res_norm = z_next.norm();
            x = x_next;
            z = z_next;

            if !res_norm.is_finite() || !x.iter().all(|v| v.is_finite()) {
                converged = false;
                x = best_x.clone();
                break;
            }
            if res_norm < best_residual {
                best_residual = res_norm;
                best_x = x.clone();
            }
            residual_history.push(res_norm);
            if residual_history.len() > DIVERGENCE_WINDOW {
                let back = residual_history[residual_history.len() - 1 - DIVERGENCE_WINDOW];
                if res_norm > DIVERGENCE_RATIO * back.max(f64::MIN_POSITIVE) {
                    converged = false;
                    x = best_x.clone();
                    break;
                }
            }
            if step < problem.convergence_tol * x.norm().max(1e-30) {
                column_converged = true;
                break;
            }
        }
        if !column_converged && iterations == cap {
            converged = false;
        }

        for j in 0..n_grid {
            channel[(j, s)] = x[j] / Complex64::from(col_scale[j]);
        }
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
        flops: flop_estimate(SolverKind::Amp, n_grid, n_sub, n_blocks)?,
    })
}
