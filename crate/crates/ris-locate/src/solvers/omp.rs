//! Orthogonal matching pursuit (single measurement vector) and its
//! per-subcarrier wrapper.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::solvers::{flop_estimate, whiten, MmvProblem, SolverKind, SparseEstimate};

const RESIDUAL_FLOOR: f64 = 1e-12;

/// Greedy selection result with the least-squares refit on the final
/// support.
#[derive(Debug, Clone)]
pub struct OmpResult {
    /// Selected column indices, in selection order.
    pub indices: Vec<usize>,
    /// Full-length coefficient vector (zeros off-support).
    pub coefficients: DVector<Complex64>,
    /// Final residual `y - A x`.
    pub residual: DVector<Complex64>,
}

/// Select `n_atoms` columns greedily by normalized correlation, refitting
/// all coefficients by least squares after every selection.
pub fn omp(y: &DVector<Complex64>, a: &DMatrix<Complex64>, n_atoms: usize) -> Result<OmpResult> {
    if y.len() != a.nrows() {
        return Err(Error::ShapeMismatch {
            context: "omp observation/sensing",
            expected: format!("{} rows", a.nrows()),
            actual: format!("{} rows", y.len()),
        });
    }
    let n_grid = a.ncols();
    if n_atoms == 0 || n_atoms > n_grid {
        return Err(Error::InvalidExperiment(format!(
            "n_atoms {n_atoms} outside 1..={n_grid}"
        )));
    }
    let col_norms: Vec<f64> = (0..n_grid).map(|i| a.column(i).norm()).collect();

    let mut residual = y.clone();
    let mut indices: Vec<usize> = Vec::with_capacity(n_atoms);
    let mut fitted = DVector::<Complex64>::zeros(0);

    for k in 0..n_atoms {
        if residual.norm() < RESIDUAL_FLOOR {
            return Err(Error::ResidualCollapse {
                selected: k,
                threshold: RESIDUAL_FLOOR,
            });
        }
        let corr = a.ad_mul(&residual);
        let best = (0..n_grid)
            .filter(|i| !indices.contains(i) && col_norms[*i] > RESIDUAL_FLOOR)
            .max_by(|&p, &q| {
                (corr[p].norm() / col_norms[p]).total_cmp(&(corr[q].norm() / col_norms[q]))
            })
            .ok_or_else(|| Error::IllPosed("no selectable column left".into()))?;
        indices.push(best);

        // least-squares refit on the current support via normal equations
        let sub = a.select_columns(indices.iter());
        let gram = sub.ad_mul(&sub);
        let rhs = sub.ad_mul(y);
        let solved = crate::solvers::hpd_inverse(&gram)? * rhs;
        residual = y - &sub * &solved;
        fitted = solved;
    }

    let mut coefficients = DVector::<Complex64>::zeros(n_grid);
    for (pos, &idx) in indices.iter().enumerate() {
        coefficients[idx] = fitted[pos];
    }
    Ok(OmpResult {
        indices,
        coefficients,
        residual,
    })
}

/// One-atom greedy recovery per subcarrier, reassembled into a channel
/// matrix; the stage-2 model carries a single dominant pair per instance,
/// so the baseline fits one atom per subcarrier column.
pub(super) fn omp_per_subcarrier(problem: &MmvProblem) -> Result<SparseEstimate> {
    let (n_blocks, n_sub, n_grid) = (
        problem.n_blocks(),
        problem.n_subcarriers(),
        problem.n_grid(),
    );
    let (y_w, psi_w) = whiten(problem);

    let mut channel = DMatrix::<Complex64>::zeros(n_grid, n_sub);
    for s in 0..n_sub {
        let col = y_w.column(s).clone_owned();
        let run = omp(&col, &psi_w, 1)?;
        for j in 0..n_grid {
            channel[(j, s)] = run.coefficients[j];
        }
    }
    let gamma: Vec<f64> = (0..n_grid)
        .map(|j| channel.row(j).iter().map(|c| c.norm_sqr()).sum::<f64>() / n_sub as f64)
        .collect();
    Ok(SparseEstimate {
        channel,
        gamma,
        correlation: DMatrix::identity(n_sub, n_sub),
        iterations: 1,
        converged: true,
        flops: flop_estimate(SolverKind::Omp, n_grid, n_sub, n_blocks)?,
    })
}
