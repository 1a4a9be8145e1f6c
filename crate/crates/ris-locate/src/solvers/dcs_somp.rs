//! Distributed/simultaneous orthogonal matching pursuit over per-subcarrier
//! pilot observations.
//!
//! All subcarriers share the same sparsity pattern (the propagation paths),
//! so the atom score pools the normalized correlation magnitudes across
//! subcarriers. Selected atoms are Gram-Schmidt-orthogonalized per
//! subcarrier before deflating the residuals, which keeps later selections
//! unbiased by earlier ones.

use nalgebra::DVector;
use num_complex::Complex64;

use crate::beamspace::{DftDictionary, SensingOperator};
use crate::error::{Error, Result};

/// Residual-collapse threshold (residual 2-norm).
const RESIDUAL_FLOOR: f64 = 1e-12;

/// Atom selections of one pursuit run, in selection order.
#[derive(Debug, Clone)]
pub struct Stage1Selection {
    /// Flat atom indices into the vectorized beamspace grid.
    pub flat_indices: Vec<usize>,
    /// User-side grid index of each selection.
    pub ue_indices: Vec<usize>,
    /// Transmitter-side grid index of each selection.
    pub bs_indices: Vec<usize>,
    /// User-side arrival angle of each selection (radians).
    pub ue_angles: Vec<f64>,
    /// Transmitter-side departure angle of each selection (radians).
    pub bs_angles: Vec<f64>,
}

/// Run the pursuit for `n_paths` iterations.
///
/// `observations[n]` is the vectorized pilot observation of subcarrier `n`
/// and `operators[n]` the matching sensing operator. The dictionaries supply
/// the index-to-angle mapping of the two grids.
pub fn dcs_somp(
    observations: &[DVector<Complex64>],
    operators: &[SensingOperator],
    dict_bs: &DftDictionary,
    dict_ue: &DftDictionary,
    n_paths: usize,
) -> Result<Stage1Selection> {
    let n_sub = observations.len();
    if n_sub == 0 || operators.len() != n_sub {
        return Err(Error::ShapeMismatch {
            context: "dcs_somp observations/operators",
            expected: format!("{n_sub} operators"),
            actual: format!("{} operators", operators.len()),
        });
    }
    let n_atoms = operators[0].matrix.ncols();
    if n_paths == 0 || n_paths > n_atoms {
        return Err(Error::InvalidExperiment(format!(
            "n_paths {n_paths} outside 1..={n_atoms}"
        )));
    }
    for (n, (y, op)) in observations.iter().zip(operators).enumerate() {
        if y.len() != op.matrix.nrows() || op.matrix.ncols() != n_atoms {
            return Err(Error::ShapeMismatch {
                context: "dcs_somp subcarrier shapes",
                expected: format!("{} x {n_atoms}", y.len()),
                actual: format!("subcarrier {n}: {} x {}", op.matrix.nrows(), op.matrix.ncols()),
            });
        }
    }

    // per-subcarrier column norms, reused every iteration
    let col_norms: Vec<Vec<f64>> = operators
        .iter()
        .map(|op| (0..n_atoms).map(|i| op.matrix.column(i).norm()).collect())
        .collect();

    let mut residuals: Vec<DVector<Complex64>> = observations.to_vec();
    // orthogonalized atom bases, per subcarrier
    let mut bases: Vec<Vec<DVector<Complex64>>> = vec![Vec::new(); n_sub];
    let mut selection = Stage1Selection {
        flat_indices: Vec::with_capacity(n_paths),
        ue_indices: Vec::with_capacity(n_paths),
        bs_indices: Vec::with_capacity(n_paths),
        ue_angles: Vec::with_capacity(n_paths),
        bs_angles: Vec::with_capacity(n_paths),
    };

    for l in 0..n_paths {
        let peak_residual = residuals.iter().map(|r| r.norm()).fold(0.0f64, f64::max);
        if peak_residual < RESIDUAL_FLOOR {
            return Err(Error::ResidualCollapse {
                selected: l,
                threshold: RESIDUAL_FLOOR,
            });
        }

        // pooled normalized correlation score per atom
        let mut scores = vec![0.0f64; n_atoms];
        for n in 0..n_sub {
            let corr = operators[n].matrix.ad_mul(&residuals[n]);
            for i in 0..n_atoms {
                if col_norms[n][i] > RESIDUAL_FLOOR {
                    scores[i] += corr[i].norm() / col_norms[n][i];
                }
            }
        }
        let best = scores
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .expect("non-empty score vector");

        // orthogonalize the winning atom against previous picks, deflate
        for n in 0..n_sub {
            let mut rho = operators[n].matrix.column(best).clone_owned();
            for prev in &bases[n] {
                let coeff = prev.dotc(&rho) / Complex64::from(prev.norm_squared());
                rho -= prev * coeff;
            }
            if rho.norm() < RESIDUAL_FLOOR * col_norms[n][best].max(1.0) {
                return Err(Error::IllPosed(format!(
                    "atom {best} linearly dependent on prior selections"
                )));
            }
            let alpha = rho.dotc(&residuals[n]) / Complex64::from(rho.norm_squared());
            residuals[n] -= &rho * alpha;
            bases[n].push(rho);
        }

        let (ue_idx, bs_idx) = operators[0].split_index(best);
        selection.flat_indices.push(best);
        selection.ue_indices.push(ue_idx);
        selection.bs_indices.push(bs_idx);
        selection.ue_angles.push(dict_ue.angle(ue_idx)?);
        selection.bs_angles.push(dict_bs.angle(bs_idx)?);
    }

    Ok(selection)
}
