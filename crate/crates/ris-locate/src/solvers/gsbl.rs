//! Group sparse Bayesian learning with an explicitly maintained joint
//! posterior.
//!
//! Each grid row of the unknown matrix is one group with prior
//! `CN(0, gamma_j * M)`, sharing a single intra-group correlation matrix `M`
//! across groups. The posterior over all active groups is formed exactly via
//! the Kronecker-structured covariance, which makes this the reference
//! (and most expensive) estimator of the family.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::Result;
use crate::solvers::{
    flop_estimate, gamma_delta, hermitianize, hpd_inverse, whiten, MmvProblem, SolverKind,
    SparseEstimate, GAMMA_PRUNE_REL,
};

/// Exact group-SBL estimate of the row-sparse channel matrix.
pub fn gsbl(problem: &MmvProblem) -> Result<SparseEstimate> {
    let (n_blocks, n_sub, n_grid) = (
        problem.n_blocks(),
        problem.n_subcarriers(),
        problem.n_grid(),
    );
    let (y_w, psi_w) = whiten(problem);
    // sufficient statistics of the whitened model
    let gram = psi_w.ad_mul(&psi_w); // n_grid x n_grid
    let rhs = psi_w.ad_mul(&y_w); // n_grid x n_sub

    let mut gamma = vec![1.0f64; n_grid];
    let mut m_corr = DMatrix::<Complex64>::identity(n_sub, n_sub);
    let mut active: Vec<usize> = (0..n_grid).collect();
    let mut mu_groups: Vec<DVector<Complex64>> = vec![DVector::zeros(n_sub); n_grid];
    let mut iterations = 0usize;
    let mut converged = false;

    while iterations < problem.max_iterations {
        iterations += 1;
        let n_active = active.len();
        let m_inv = hpd_inverse(&m_corr)?;

        // joint posterior precision over active groups:
        // Gamma^-1 (x) M^-1 + Gram_active (x) I
        let dim = n_active * n_sub;
        let mut precision = DMatrix::<Complex64>::zeros(dim, dim);
        for (a, &ja) in active.iter().enumerate() {
            for (b, &jb) in active.iter().enumerate() {
                let g = gram[(ja, jb)];
                for s in 0..n_sub {
                    precision[(a * n_sub + s, b * n_sub + s)] += g;
                }
            }
            let scale = Complex64::from(1.0 / gamma[ja]);
            let mut block = precision.view_mut((a * n_sub, a * n_sub), (n_sub, n_sub));
            for s in 0..n_sub {
                for u in 0..n_sub {
                    block[(s, u)] += m_inv[(s, u)] * scale;
                }
            }
        }
        let sigma = hpd_inverse(&precision)?;

        // posterior mean: the stacked right-hand side takes plain row
        // transposes (no conjugation)
        let mut stacked = DVector::<Complex64>::zeros(dim);
        for (a, &ja) in active.iter().enumerate() {
            for s in 0..n_sub {
                stacked[a * n_sub + s] = rhs[(ja, s)];
            }
        }
        let mu = &sigma * &stacked;

        // moment updates
        let mut gamma_new = gamma.clone();
        let mut second_moments: Vec<DMatrix<Complex64>> = Vec::with_capacity(n_active);
        for (a, &ja) in active.iter().enumerate() {
            let mu_j = DVector::from_fn(n_sub, |s, _| mu[a * n_sub + s]);
            let sigma_j = sigma
                .view((a * n_sub, a * n_sub), (n_sub, n_sub))
                .clone_owned();
            let moment = &sigma_j + &mu_j * mu_j.adjoint();
            gamma_new[ja] = ((&m_inv * &moment).trace().re / n_sub as f64).max(f64::MIN_POSITIVE);
            mu_groups[ja] = mu_j;
            second_moments.push(moment);
        }

        // correlation update; fully shrunk groups contribute the previous M
        let n_pruned = n_grid - n_active;
        let mut m_new = m_corr.clone() * Complex64::from(n_pruned as f64);
        for (a, &ja) in active.iter().enumerate() {
            m_new += &second_moments[a] * Complex64::from(1.0 / gamma_new[ja]);
        }
        m_new.scale_mut(1.0 / n_grid as f64);
        m_corr = hermitianize(&m_new);

        let delta = gamma_delta(&gamma_new, &gamma);
        gamma = gamma_new;

        // relative pruning keeps the strongest group alive by construction
        let peak = gamma.iter().cloned().fold(0.0f64, f64::max);
        let survivors: Vec<usize> = active
            .iter()
            .copied()
            .filter(|&j| gamma[j] >= GAMMA_PRUNE_REL * peak)
            .collect();
        for &j in &active {
            if !survivors.contains(&j) {
                gamma[j] = 0.0;
                mu_groups[j].fill(Complex64::new(0.0, 0.0));
            }
        }
        active = survivors;

        if delta < problem.convergence_tol {
            converged = true;
            break;
        }
    }

    let mut channel = DMatrix::<Complex64>::zeros(n_grid, n_sub);
    for j in 0..n_grid {
        for s in 0..n_sub {
            channel[(j, s)] = mu_groups[j][s];
        }
    }
    Ok(SparseEstimate {
        channel,
        gamma,
        correlation: m_corr,
        iterations,
        converged,
        flops: flop_estimate(SolverKind::Gsbl, n_grid, n_sub, n_blocks)?,
    })
}
