//! Beamspace dictionaries and the sensing operators of the two estimation
//! stages.
//!
//! A uniform linear array with `n` elements resolves spatial frequencies on
//! the grid `q_l = -(n-1)/(2n) + l/n` for `l = 0..n-1`. The dictionary built
//! on that grid is a unitary matrix whose columns are steering vectors, so
//! projecting a channel onto it turns angle estimation into support recovery.
//!
//! # Example
//!
//! ```
//! use ris_locate::beamspace::dft_dictionary;
//!
//! let dict = dft_dictionary(8, 0.5).unwrap();
//! assert_eq!(dict.grid[0], -0.4375);
//! // unitary: U^H U = I
//! let gram = dict.matrix.adjoint() * &dict.matrix;
//! assert!((gram - nalgebra::DMatrix::identity(8, 8)).norm() < 1e-10);
//! ```

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Unitary steering dictionary of an `n`-element array.
#[derive(Debug, Clone)]
pub struct DftDictionary {
    pub n: usize,
    /// Element spacing as a fraction of the wavelength.
    pub spacing: f64,
    /// Spatial-frequency grid q_l, strictly increasing, length `n`.
    pub grid: Vec<f64>,
    /// n x n unitary matrix; column `l` is the steering vector at `grid[l]`.
    pub matrix: DMatrix<Complex64>,
}

/// Combined stage-1 measurement operator for one subcarrier.
///
/// Maps the vectorized beamspace channel (user grid fastest) to the
/// vectorized pilot observation.
#[derive(Debug, Clone)]
pub struct SensingOperator {
    /// (n_pilots^2) x (n_ue_grid * n_bs_grid) dense operator.
    pub matrix: DMatrix<Complex64>,
    pub n_ue_grid: usize,
    pub n_bs_grid: usize,
}

impl SensingOperator {
    /// Split a flat atom index into (ue_grid_index, bs_grid_index).
    ///
    /// Flat indices run over the column-major vectorization of the
    /// (n_ue_grid x n_bs_grid) beamspace matrix.
    pub fn split_index(&self, flat: usize) -> (usize, usize) {
        (flat % self.n_ue_grid, flat / self.n_ue_grid)
    }
}

/// Build the unitary steering dictionary for an `n`-element array.
pub fn dft_dictionary(n: usize, spacing: f64) -> Result<DftDictionary> {
    if n == 0 {
        return Err(Error::InvalidGrid("dictionary size must be >= 1".into()));
    }
    if spacing <= 0.0 {
        return Err(Error::NonPositive {
            quantity: "element spacing",
            value: spacing,
        });
    }
    let grid: Vec<f64> = (0..n)
        .map(|l| (l as f64 - (n as f64 - 1.0) / 2.0) / n as f64)
        .collect();
    let mut matrix = DMatrix::zeros(n, n);
    for (l, &q) in grid.iter().enumerate() {
        // Steering vector at spatial frequency q: entries exp(-j 2 pi q k) / sqrt(n).
        let col = steering_column(n, q);
        matrix.set_column(l, &col);
    }
    Ok(DftDictionary {
        n,
        spacing,
        grid,
        matrix,
    })
}

/// Steering vector parameterized directly by spatial frequency.
fn steering_column(n: usize, q: f64) -> DVector<Complex64> {
    let scale = 1.0 / (n as f64).sqrt();
    DVector::from_fn(n, |k, _| {
        Complex64::from_polar(scale, -2.0 * std::f64::consts::PI * q * k as f64)
    })
}

/// Map a 0-based grid index to the physical angle (radians) it represents.
///
/// Errors if the grid point lies outside the visible region for the given
/// spacing (possible when spacing < 0.5).
pub fn grid_to_angle(index: usize, n: usize, spacing: f64) -> Result<f64> {
    if index >= n {
        return Err(Error::InvalidGrid(format!(
            "grid index {index} out of range for {n}-point grid"
        )));
    }
    if spacing <= 0.0 {
        return Err(Error::NonPositive {
            quantity: "element spacing",
            value: spacing,
        });
    }
    let q = (index as f64 - (n as f64 - 1.0) / 2.0) / n as f64;
    let s = q / spacing;
    if s.abs() > 1.0 {
        return Err(Error::InvalidGrid(format!(
            "grid point {q} maps to sin(angle) = {s} outside [-1, 1]"
        )));
    }
    Ok(s.asin())
}

impl DftDictionary {
    /// Angle (radians) represented by grid index `l`.
    pub fn angle(&self, index: usize) -> Result<f64> {
        grid_to_angle(index, self.n, self.spacing)
    }

    /// Grid index whose spatial frequency is circularly closest to `q`
    /// (frequencies alias with period 1). Ties resolve to the lower index.
    pub fn nearest_index(&self, q: f64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (l, &g) in self.grid.iter().enumerate() {
            let mut d = (q - g).rem_euclid(1.0);
            if d > 0.5 {
                d = 1.0 - d;
            }
            if d < best_d - 1e-15 {
                best_d = d;
                best = l;
            }
        }
        best
    }
}

/// Stage-1 operator: observation = operator * vec(beamspace channel).
///
/// `precoder` is the pilot precoder (n_bs x g), `combiner` the pilot combiner
/// (n_ue x g). Uses the factorization
/// (F^T kron W^H)(conj(U_bs) kron U_ue) = (F^T conj(U_bs)) kron (W^H U_ue),
/// which keeps the build cost at two small products plus one Kronecker.
pub fn stage1_operator(
    precoder: &DMatrix<Complex64>,
    combiner: &DMatrix<Complex64>,
    dict_bs: &DftDictionary,
    dict_ue: &DftDictionary,
) -> Result<SensingOperator> {
    if precoder.nrows() != dict_bs.n {
        return Err(Error::ShapeMismatch {
            context: "stage1_operator precoder",
            expected: format!("{} rows", dict_bs.n),
            actual: format!("{} rows", precoder.nrows()),
        });
    }
    if combiner.nrows() != dict_ue.n {
        return Err(Error::ShapeMismatch {
            context: "stage1_operator combiner",
            expected: format!("{} rows", dict_ue.n),
            actual: format!("{} rows", combiner.nrows()),
        });
    }
    let bs_part = precoder.transpose() * dict_bs.matrix.conjugate(); // g x n_bs
    let ue_part = combiner.adjoint() * &dict_ue.matrix; // g x n_ue
    Ok(SensingOperator {
        matrix: bs_part.kronecker(&ue_part),
        n_ue_grid: dict_ue.n,
        n_bs_grid: dict_bs.n,
    })
}

/// Stage-2 operator: one probing row per block.
///
/// `phase_schedule` has one unit-modulus phase vector per row (n_blocks x
/// n_ris); the returned operator is `phase_schedule * U_ris`, mapping the
/// beamspace reflection coefficients of one subcarrier to the per-block
/// observations.
pub fn stage2_operator(
    phase_schedule: &DMatrix<Complex64>,
    dict_ris: &DftDictionary,
) -> Result<DMatrix<Complex64>> {
    if phase_schedule.ncols() != dict_ris.n {
        return Err(Error::ShapeMismatch {
            context: "stage2_operator phase schedule",
            expected: format!("{} columns", dict_ris.n),
            actual: format!("{} columns", phase_schedule.ncols()),
        });
    }
    for (i, v) in phase_schedule.iter().enumerate() {
        if (v.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::NonUnitModulus {
                index: i,
                modulus: v.norm(),
            });
        }
    }
    Ok(phase_schedule * &dict_ris.matrix)
}
