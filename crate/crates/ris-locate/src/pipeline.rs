//! The two-stage localization pipeline.
//!
//! Stage 1 sounds the reflected link with random per-subcarrier pilots under
//! one fixed surface configuration and runs a joint pursuit over the
//! transmitter/user beamspace grids; the recovered grid angles become the
//! steering beams held for the rest of the coherence interval. Stage 2
//! reconfigures the surface once per block, gathers the beam-domain
//! observations of the strongest path pair into one multiple-measurement
//! recovery problem over the surface grid, and reads the reflection angle,
//! the cascade delay, and finally the user position out of the sparse
//! solution:
//!
//! ```text
//! p_hat   = arg max_p  sum_n |H_hat[p, n]|^2          (surface grid row)
//! aor     = arcsin( sin(phi_known) - sin(angle(p_hat)) )
//! toa     = arg max_tau |sum_n gain[n] e^{+j 2 pi n tau / (N T_s)}|^2
//! m_hat   = r + c (toa - toa_known) [cos(aor), sin(aor)]
//! ```

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;

use crate::beamspace::{dft_dictionary, stage1_operator, stage2_operator, DftDictionary};
use crate::channel::{
    cascaded_channel, crandn, noise_variance_for_snr, observe_block, random_phase,
    steering_matrix, ArrayConfig, ChannelRealization, WaveformConfig,
};
use crate::error::{Error, Result};
use crate::geometry::{recover_position, PathGeometry, Scene};
use crate::solvers::{dcs_somp, solve, MmvProblem, SolverKind, SparseEstimate};

/// Per-symbol transmit energy; the configured SNR absorbs the power budget.
const TRANSMIT_ENERGY: f64 = 1.0;

/// Relative floor applied to the per-block noise level so the recovery model
/// stays well defined on noise-free synthetic instances.
const NOISE_FLOOR_REL: f64 = 1e-12;

/// Absolute fallback noise level when even the observations are all zero.
const NOISE_FLOOR_ABS: f64 = 1e-30;

/// Beams produced by the sounding stage.
///
/// The precoder and combiner columns are unit-norm steering vectors at the
/// estimated grid angles, ordered by selection strength (strongest first).
#[derive(Debug, Clone)]
pub struct Stage1Result {
    /// Transmitter-side beams (n_bs x number of transmitter-side paths).
    pub bs_precoder: DMatrix<Complex64>,
    /// User-side beams (n_ue x number of user-side paths).
    pub ue_combiner: DMatrix<Complex64>,
    /// Estimated departure angles at the transmitter, radians.
    pub estimated_aod: Vec<f64>,
    /// Estimated arrival angles at the user, radians.
    pub estimated_aoa: Vec<f64>,
}

/// Everything stage 2 hands to a sparse solver.
#[derive(Debug, Clone)]
pub struct Stage2Assembly {
    /// Stacked observations of the dominant path pair plus the sensing
    /// operator and per-block noise levels.
    pub problem: MmvProblem,
    /// Surface phase configurations, one block per row (n_blocks x n_ris).
    pub phase_schedule: DMatrix<Complex64>,
    /// Flat index of the dominant path pair in the vectorized block
    /// observations.
    pub dominant_path: usize,
    /// User-side beam the dominant pair rides on (combiner column).
    pub ue_path: usize,
    /// Transmitter-side beam of the dominant pair (precoder column).
    pub bs_path: usize,
}

/// Pre-measured quantities of the fixed infrastructure: where the surface
/// is, and the arrival angle / delay of the transmitter-to-surface path the
/// dominant pair rides on.
#[derive(Debug, Clone, Copy)]
pub struct SurfaceSideInfo {
    pub ris: [f64; 2],
    /// Arrival angle at the surface from the transmitter, radians.
    pub bs_arrival: f64,
    /// Transmitter-to-surface delay, seconds.
    pub bs_delay: f64,
}

/// Position fix derived from one angle/delay pair.
#[derive(Debug, Clone, Copy)]
pub struct PositionFix {
    pub position: [f64; 2],
    /// Surface-to-user delay after subtracting the known first hop.
    pub toa_ris_ue: f64,
    /// True when the delay difference came out negative and was clamped.
    pub clamped: bool,
}

/// Full read-out of one solver on one trial.
#[derive(Debug, Clone)]
pub struct LocalizationEstimate {
    /// Estimated reflection angle at the surface toward the user, radians.
    pub aor: f64,
    /// Estimated cascade (transmitter-surface-user) delay, seconds.
    pub toa_cascade: f64,
    /// Estimated surface-to-user delay, seconds (clamped at zero).
    pub toa_ris_ue: f64,
    /// Estimated user position, meters.
    pub position: [f64; 2],
    /// Flat index of the dominant path pair the estimate is based on.
    pub dominant_path: usize,
    /// Per-subcarrier complex gain of the dominant surface-grid row.
    pub per_subcarrier_gain: DVector<Complex64>,
    /// True when the surface-to-user delay was clamped at zero.
    pub toa_clamped: bool,
}

/// Knobs of a single pipeline trial.
#[derive(Debug, Clone, Copy)]
pub struct TrialConfig {
    pub snr_db: f64,
    /// Iteration cap handed to the stage-2 solvers.
    pub max_iterations: usize,
    /// Convergence tolerance handed to the stage-2 solvers.
    pub convergence_tol: f64,
    /// Delay-grid points per subcarrier sample; the search grid has
    /// `toa_oversampling * n_subcarriers` points over one delay span.
    pub toa_oversampling: usize,
}

impl TrialConfig {
    /// Standard solver settings at the given operating point.
    pub fn at_snr(snr_db: f64) -> Self {
        TrialConfig {
            snr_db,
            max_iterations: 100,
            convergence_tol: 1e-6,
            toa_oversampling: 100,
        }
    }
}

/// Ground truth a trial is scored against: the direct-path geometry.
#[derive(Debug, Clone, Copy)]
pub struct TrialTruth {
    pub aor: f64,
    pub toa_ris_ue: f64,
    pub toa_cascade: f64,
    pub position: [f64; 2],
}

/// One full trial: shared sounding stage, then one estimate per solver.
#[derive(Debug)]
pub struct TrialOutcome {
    pub truth: TrialTruth,
    pub stage1: Stage1Result,
    pub dominant_path: usize,
    /// Per-solver results; solver failures are recorded, not propagated.
    pub estimates: Vec<(SolverKind, Result<LocalizationEstimate>)>,
}

/// Sound the link and design the beams for the rest of the coherence
/// interval.
///
/// Draws fresh unit-norm Gaussian pilot matrices per subcarrier, observes
/// the cascade under the fixed `sounding_phases`, runs the joint pursuit for
/// one iteration per path pair, and keeps the first distinct grid index per
/// side in selection order. The pilot count must exceed the per-side path
/// count.
pub fn run_stage1(
    realization: &ChannelRealization,
    arrays: &ArrayConfig,
    waveform: &WaveformConfig,
    noise_variance: f64,
    sounding_phases: &DVector<Complex64>,
    rng: &mut impl Rng,
) -> Result<Stage1Result> {
    let l_br = realization.paths_br.len();
    let l_rm = realization.paths_rm.len();
    let g = waveform.n_pilots;
    if g <= l_br.max(l_rm) {
        return Err(Error::InvalidExperiment(format!(
            "{g} pilot symbols cannot resolve {} propagation paths",
            l_br.max(l_rm)
        )));
    }
    if sounding_phases.len() != arrays.n_ris {
        return Err(Error::ShapeMismatch {
            context: "run_stage1 sounding phases",
            expected: format!("{} entries", arrays.n_ris),
            actual: format!("{} entries", sounding_phases.len()),
        });
    }

    let dict_bs = dft_dictionary(arrays.n_bs, arrays.spacing)?;
    let dict_ue = dft_dictionary(arrays.n_ue, arrays.spacing)?;

    let mut observations = Vec::with_capacity(waveform.n_subcarriers);
    let mut operators = Vec::with_capacity(waveform.n_subcarriers);
    for n in 0..waveform.n_subcarriers {
        let precoder = unit_norm_pilot(arrays.n_bs, g, rng);
        let combiner = unit_norm_pilot(arrays.n_ue, g, rng);
        let cascade = cascaded_channel(&realization.h_rm[n], sounding_phases, &realization.h_br[n])?;
        let y = observe_block(
            &cascade,
            &precoder,
            &combiner,
            TRANSMIT_ENERGY,
            noise_variance,
            rng,
        )?;
        observations.push(DVector::from_column_slice(y.as_slice()));
        operators.push(stage1_operator(&precoder, &combiner, &dict_bs, &dict_ue)?);
    }

    let selection = dcs_somp(&observations, &operators, &dict_bs, &dict_ue, l_br * l_rm)?;
    let bs_indices = distinct_prefix(&selection.bs_indices, l_br, dict_bs.n);
    let ue_indices = distinct_prefix(&selection.ue_indices, l_rm, dict_ue.n);

    let estimated_aod = bs_indices
        .iter()
        .map(|&i| dict_bs.angle(i))
        .collect::<Result<Vec<f64>>>()?;
    let estimated_aoa = ue_indices
        .iter()
        .map(|&i| dict_ue.angle(i))
        .collect::<Result<Vec<f64>>>()?;

    Ok(Stage1Result {
        bs_precoder: steering_matrix(arrays.n_bs, &estimated_aod, arrays.spacing),
        ue_combiner: steering_matrix(arrays.n_ue, &estimated_aoa, arrays.spacing),
        estimated_aod,
        estimated_aoa,
    })
}

/// Observe the beam-aligned link over all reconfiguration blocks and stack
/// the dominant path pair into a recovery problem.
///
/// Each block gets a fresh uniform surface configuration. The dominant pair
/// is the row of the vectorized block observations with the largest total
/// energy; its per-block noise level is the combined noise variance of the
/// selected user beam, floored at a tiny fraction of the mean observation
/// power so noise-free instances stay well posed.
#[allow(clippy::too_many_arguments)]
pub fn assemble_stage2(
    stage1: &Stage1Result,
    realization: &ChannelRealization,
    arrays: &ArrayConfig,
    waveform: &WaveformConfig,
    noise_variance: f64,
    max_iterations: usize,
    convergence_tol: f64,
    rng: &mut impl Rng,
) -> Result<Stage2Assembly> {
    let n_blocks = waveform.n_blocks;
    let n_sub = waveform.n_subcarriers;
    let l_rm = stage1.ue_combiner.ncols();

    let phase_schedule = DMatrix::from_fn(n_blocks, arrays.n_ris, |_, _| random_phase(rng));

    let mut blocks: Vec<Vec<DMatrix<Complex64>>> = Vec::with_capacity(n_blocks);
    for t in 0..n_blocks {
        let omega = phase_schedule.row(t).transpose();
        let mut per_subcarrier = Vec::with_capacity(n_sub);
        for n in 0..n_sub {
            let cascade = cascaded_channel(&realization.h_rm[n], &omega, &realization.h_br[n])?;
            per_subcarrier.push(observe_block(
                &cascade,
                &stage1.bs_precoder,
                &stage1.ue_combiner,
                TRANSMIT_ENERGY,
                noise_variance,
                rng,
            )?);
        }
        blocks.push(per_subcarrier);
    }

    let dominant_path = dominant_pair_index(blocks.iter().flatten())?;
    let (ue_path, bs_path) = (dominant_path % l_rm, dominant_path / l_rm);

    let observations = DMatrix::from_fn(n_blocks, n_sub, |t, n| {
        blocks[t][n][(ue_path, bs_path)]
    });

    let dict_ris = dft_dictionary(arrays.n_ris, arrays.spacing)?;
    let sensing = stage2_operator(&phase_schedule, &dict_ris)?;

    let combined_noise = noise_variance * stage1.ue_combiner.column(ue_path).norm_squared();
    let mean_power =
        observations.iter().map(|v| v.norm_sqr()).sum::<f64>() / (n_blocks * n_sub) as f64;
    let floor = if mean_power > 0.0 {
        NOISE_FLOOR_REL * mean_power
    } else {
        NOISE_FLOOR_ABS
    };
    let problem = MmvProblem::new(
        observations,
        sensing,
        vec![combined_noise.max(floor); n_blocks],
        max_iterations,
        convergence_tol,
    )?;

    Ok(Stage2Assembly {
        problem,
        phase_schedule,
        dominant_path,
        ue_path,
        bs_path,
    })
}

/// Row-energy argmax over vectorized block observations; ties resolve to the
/// lowest index. The ranking is invariant to any global rescaling of the
/// observations.
pub fn dominant_pair_index<'a, I>(observations: I) -> Result<usize>
where
    I: IntoIterator<Item = &'a DMatrix<Complex64>>,
{
    let mut energies: Vec<f64> = Vec::new();
    for block in observations {
        if energies.is_empty() {
            energies = vec![0.0; block.len()];
        } else if block.len() != energies.len() {
            return Err(Error::ShapeMismatch {
                context: "dominant_pair_index blocks",
                expected: format!("{} entries", energies.len()),
                actual: format!("{} entries", block.len()),
            });
        }
        for (k, v) in block.iter().enumerate() {
            energies[k] += v.norm_sqr();
        }
    }
    if energies.is_empty() {
        return Err(Error::InvalidExperiment(
            "dominant_pair_index needs at least one observation block".into(),
        ));
    }
    let mut best = 0;
    for (k, &e) in energies.iter().enumerate().skip(1) {
        if e > energies[best] {
            best = k;
        }
    }
    Ok(best)
}

/// Read the reflection angle out of a recovered surface-grid channel.
///
/// The dominant grid row is the one with the largest energy summed over
/// subcarriers; its grid angle is the angle *difference* the surface saw,
/// from which the departure angle toward the user follows via the known
/// arrival angle of the transmitter-side path. Errors when the implied sine
/// leaves [-1, 1] (the degenerate-deployment ambiguity).
pub fn extract_aor(
    estimate: &SparseEstimate,
    known_aoa_ris: f64,
    dict_ris: &DftDictionary,
) -> Result<f64> {
    if estimate.channel.nrows() != dict_ris.n {
        return Err(Error::ShapeMismatch {
            context: "extract_aor channel rows",
            expected: format!("{} rows", dict_ris.n),
            actual: format!("{} rows", estimate.channel.nrows()),
        });
    }
    let mut best_row = 0;
    let mut best_energy = -1.0;
    for p in 0..estimate.channel.nrows() {
        let energy: f64 = estimate.channel.row(p).iter().map(|v| v.norm_sqr()).sum();
        if energy > best_energy {
            best_energy = energy;
            best_row = p;
        }
    }
    if best_energy <= 0.0 {
        return Err(Error::IllPosed(
            "recovered channel is identically zero; no angle information".into(),
        ));
    }
    let theta_diff = dict_ris.angle(best_row)?;
    let s = known_aoa_ris.sin() - theta_diff.sin();
    if s.abs() > 1.0 {
        return Err(Error::AmbiguousGeometry(s));
    }
    Ok(s.asin())
}

/// Matched-filter delay search over a uniform grid of `grid_resolution`
/// points covering one unambiguous delay span `[0, N T_s)`.
///
/// `per_subcarrier_gain[n]` is the complex gain of the dominant grid row at
/// subcarrier `n`; a delay shows up in it as the phase ramp
/// `e^{-j 2 pi n tau / (N T_s)}`. Ties resolve to the smallest delay.
pub fn extract_toa(
    per_subcarrier_gain: &DVector<Complex64>,
    waveform: &WaveformConfig,
    grid_resolution: usize,
) -> Result<f64> {
    let n_sub = waveform.n_subcarriers;
    if per_subcarrier_gain.len() != n_sub {
        return Err(Error::ShapeMismatch {
            context: "extract_toa gain vector",
            expected: format!("{n_sub} entries"),
            actual: format!("{} entries", per_subcarrier_gain.len()),
        });
    }
    if grid_resolution < n_sub {
        return Err(Error::InvalidGrid(format!(
            "delay grid resolution {grid_resolution} below the subcarrier count {n_sub}"
        )));
    }
    if per_subcarrier_gain.iter().all(|v| v.norm_sqr() == 0.0) {
        return Err(Error::IllPosed(
            "per-subcarrier gain is identically zero; no delay information".into(),
        ));
    }
    let span = waveform.delay_span();
    let mut best_tau = 0.0;
    let mut best_score = -1.0;
    for i in 0..grid_resolution {
        let tau = i as f64 * span / grid_resolution as f64;
        let mut acc = Complex64::new(0.0, 0.0);
        for (n, g) in per_subcarrier_gain.iter().enumerate() {
            let phase = std::f64::consts::TAU * n as f64 * tau / span;
            acc += g * Complex64::from_polar(1.0, phase);
        }
        let score = acc.norm_sqr();
        if score > best_score {
            best_score = score;
            best_tau = tau;
        }
    }
    Ok(best_tau)
}

/// Convert an angle/cascade-delay estimate into a position fix.
///
/// Subtracts the pre-measured transmitter-to-surface delay; a negative
/// remainder (possible under noise) is clamped to zero and flagged.
pub fn localize(info: &SurfaceSideInfo, aor: f64, toa_cascade: f64) -> Result<PositionFix> {
    let raw = toa_cascade - info.bs_delay;
    let clamped = raw < 0.0;
    let toa_ris_ue = raw.max(0.0);
    let position = recover_position(info.ris, aor, toa_ris_ue)?;
    Ok(PositionFix {
        position,
        toa_ris_ue,
        clamped,
    })
}

/// Run one complete trial: draw a channel, sound it, assemble the recovery
/// problem once, and fan out to every requested solver.
///
/// Solver-level failures (ambiguous geometry, collapse, ill-posed recovery)
/// are recorded per solver; only scene- or assembly-level failures abort the
/// trial.
pub fn run_trial(
    scene: &Scene,
    arrays: &ArrayConfig,
    waveform: &WaveformConfig,
    config: &TrialConfig,
    solvers: &[SolverKind],
    rng: &mut impl Rng,
) -> Result<TrialOutcome> {
    let noise_variance = noise_variance_for_snr(config.snr_db, scene, arrays, waveform)?;
    let realization = ChannelRealization::draw(scene, arrays, waveform, rng)?;
    let sounding = DVector::from_fn(arrays.n_ris, |_, _| random_phase(rng));
    let stage1 = run_stage1(
        &realization,
        arrays,
        waveform,
        noise_variance,
        &sounding,
        rng,
    )?;
    let assembly = assemble_stage2(
        &stage1,
        &realization,
        arrays,
        waveform,
        noise_variance,
        config.max_iterations,
        config.convergence_tol,
        rng,
    )?;

    // the transmitter-to-surface paths are fixed infrastructure, so their
    // angles and delays are pre-measured; pick the one the dominant pair's
    // transmitter beam points at
    let matched = nearest_departure(
        &realization.paths_br,
        stage1.estimated_aod[assembly.bs_path],
    );
    let info = SurfaceSideInfo {
        ris: scene.ris,
        bs_arrival: matched.arrival,
        bs_delay: matched.toa,
    };

    let direct_rm = &realization.paths_rm[0];
    let direct_br = &realization.paths_br[0];
    let truth = TrialTruth {
        aor: direct_rm.departure,
        toa_ris_ue: direct_rm.toa,
        toa_cascade: direct_br.toa + direct_rm.toa,
        position: scene.ue,
    };

    let dict_ris = dft_dictionary(arrays.n_ris, arrays.spacing)?;
    let grid_resolution = config.toa_oversampling * waveform.n_subcarriers;
    let estimates = solvers
        .iter()
        .map(|&kind| {
            (
                kind,
                solve_one(&assembly, kind, &info, &dict_ris, waveform, grid_resolution),
            )
        })
        .collect();

    Ok(TrialOutcome {
        truth,
        stage1,
        dominant_path: assembly.dominant_path,
        estimates,
    })
}

fn solve_one(
    assembly: &Stage2Assembly,
    kind: SolverKind,
    info: &SurfaceSideInfo,
    dict_ris: &DftDictionary,
    waveform: &WaveformConfig,
    grid_resolution: usize,
) -> Result<LocalizationEstimate> {
    let estimate = solve(&assembly.problem, kind)?;
    let aor = extract_aor(&estimate, info.bs_arrival, dict_ris)?;
    let gain = dominant_gain(&estimate.channel);
    let toa_cascade = extract_toa(&gain, waveform, grid_resolution)?;
    let fix = localize(info, aor, toa_cascade)?;
    Ok(LocalizationEstimate {
        aor,
        toa_cascade,
        toa_ris_ue: fix.toa_ris_ue,
        position: fix.position,
        dominant_path: assembly.dominant_path,
        per_subcarrier_gain: gain,
        toa_clamped: fix.clamped,
    })
}

/// Gaussian pilot matrix with unit-norm columns.
fn unit_norm_pilot(n_rows: usize, n_cols: usize, rng: &mut impl Rng) -> DMatrix<Complex64> {
    let mut m = DMatrix::from_fn(n_rows, n_cols, |_, _| crandn(rng));
    for mut col in m.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col.scale_mut(1.0 / norm);
        }
    }
    m
}

/// First `want` distinct entries of `picked` in order, padded with the
/// lowest unused grid indices if the pursuit kept re-selecting one side
/// (possible under heavy noise).
fn distinct_prefix(picked: &[usize], want: usize, n_grid: usize) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::with_capacity(want);
    for &i in picked {
        if out.len() == want {
            break;
        }
        if !out.contains(&i) {
            out.push(i);
        }
    }
    let mut fill = 0;
    while out.len() < want && fill < n_grid {
        if !out.contains(&fill) {
            out.push(fill);
        }
        fill += 1;
    }
    out
}

/// The path whose departure sine is closest to the estimated beam direction.
fn nearest_departure(paths: &[PathGeometry], aod: f64) -> &PathGeometry {
    paths
        .iter()
        .min_by(|p, q| {
            let dp = (p.departure.sin() - aod.sin()).abs();
            let dq = (q.departure.sin() - aod.sin()).abs();
            dp.total_cmp(&dq)
        })
        .expect("a scene always has the direct path")
}

/// Per-subcarrier gain of the dominant entry: for each subcarrier, the entry
/// of the recovered channel column with the largest magnitude.
fn dominant_gain(channel: &DMatrix<Complex64>) -> DVector<Complex64> {
    DVector::from_fn(channel.ncols(), |n, _| {
        let mut best = Complex64::new(0.0, 0.0);
        let mut best_mag = -1.0;
        for v in channel.column(n).iter() {
            if v.norm_sqr() > best_mag {
                best_mag = v.norm_sqr();
                best = *v;
            }
        }
        best
    })
}
