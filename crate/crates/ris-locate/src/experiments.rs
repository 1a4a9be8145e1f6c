//! Monte Carlo benchmark harness: RMSE sweeps over operating conditions,
//! surface-placement heatmaps, and the flop-count comparison table.
//!
//! Every trial draws fresh small-scale fading, noise, sounding pilots, and
//! surface configurations from its own deterministically derived random
//! stream, so results are reproducible bit for bit regardless of how many
//! worker threads execute them. Geometry stays fixed unless it is the swept
//! variable.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::channel::{ArrayConfig, WaveformConfig};
use crate::error::{Error, Result};
use crate::geometry::Scene;
use crate::pipeline::{run_trial, TrialConfig, TrialTruth};
use crate::solvers::{flop_estimate, SolverKind};

/// RMSE reported for a sweep point where every trial failed.
pub const RMSE_SENTINEL: f64 = -1.0;

/// Environment variable overriding the worker-thread count.
pub const THREADS_ENV: &str = "RIS_LOCATE_THREADS";

/// What a sweep varies while everything else stays at the base scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVariable {
    /// Operating signal-to-noise ratio in dB.
    SnrDb,
    /// Number of surface reconfiguration blocks.
    NBlocks,
    /// Number of surface elements.
    NElements,
    /// Surface x-coordinate in meters (the y-coordinate stays at the base
    /// scenario's value; full 2-D placement studies use the heatmap).
    RisPosition,
}

impl SweepVariable {
    pub fn name(self) -> &'static str {
        match self {
            SweepVariable::SnrDb => "snr_db",
            SweepVariable::NBlocks => "n_blocks",
            SweepVariable::NElements => "n_elements",
            SweepVariable::RisPosition => "ris_x",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "snr_db" | "snr" => Ok(SweepVariable::SnrDb),
            "n_blocks" | "blocks" => Ok(SweepVariable::NBlocks),
            "n_elements" | "elements" => Ok(SweepVariable::NElements),
            "ris_x" | "ris_position" => Ok(SweepVariable::RisPosition),
            other => Err(Error::InvalidExperiment(format!(
                "unknown sweep variable {other:?} (expected snr_db, n_blocks, n_elements, or ris_x)"
            ))),
        }
    }
}

/// The three errors a localization trial is scored on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    RmseAorRad,
    RmseToaS,
    RmsePositionM,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::RmseAorRad, Metric::RmseToaS, Metric::RmsePositionM];

    pub fn name(self) -> &'static str {
        match self {
            Metric::RmseAorRad => "rmse_aor_rad",
            Metric::RmseToaS => "rmse_toa_s",
            Metric::RmsePositionM => "rmse_position_m",
        }
    }
}

/// A complete operating point: geometry, arrays, waveform, and solver knobs.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub scene: Scene,
    pub arrays: ArrayConfig,
    pub waveform: WaveformConfig,
    pub trial: TrialConfig,
}

impl Scenario {
    /// The reference indoor deployment: transmitter at the origin, surface
    /// at [2.5, 4], user at [5, 3], one scatterer per hop, 8-element arrays
    /// at half-wavelength spacing, 60 GHz carrier with 100 MHz bandwidth,
    /// 10 pilot subcarriers, 64 reconfiguration blocks, 32 sounding pilots,
    /// and -13 dB scattering loss.
    pub fn baseline() -> Self {
        Scenario {
            scene: Scene::new(
                [0.0, 0.0],
                [2.5, 4.0],
                [5.0, 3.0],
                vec![[1.0, 3.0]],
                vec![[4.0, 2.0]],
            )
            .expect("reference geometry is valid"),
            arrays: ArrayConfig::new(8, 8, 8, 0.5).expect("reference arrays are valid"),
            waveform: WaveformConfig::new(60e9, 100e6, 10, 64, 32, -13.0)
                .expect("reference waveform is valid"),
            trial: TrialConfig::at_snr(0.0),
        }
    }
}

/// Declarative description of one sweep.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
    pub solvers: Vec<SolverKind>,
    pub n_trials: usize,
    pub base: Scenario,
    pub seed: u64,
}

/// One aggregated metric at one sweep point for one solver.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub sweep_value: f64,
    pub solver: SolverKind,
    pub metric: Metric,
    pub value: f64,
    pub n_trials: usize,
    pub n_failed: usize,
}

/// All rows of one experiment, tagged with the swept variable's name.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub variable: String,
    pub rows: Vec<ResultRow>,
}

/// Root mean squared Euclidean error between paired vectors.
pub fn rmse(truths: &[Vec<f64>], estimates: &[Vec<f64>]) -> Result<f64> {
    if truths.is_empty() || truths.len() != estimates.len() {
        return Err(Error::InvalidExperiment(format!(
            "rmse needs equally many truths and estimates, at least one pair (got {} and {})",
            truths.len(),
            estimates.len()
        )));
    }
    let mut total = 0.0;
    for (t, e) in truths.iter().zip(estimates) {
        if t.len() != e.len() {
            return Err(Error::ShapeMismatch {
                context: "rmse pair",
                expected: format!("{} entries", t.len()),
                actual: format!("{} entries", e.len()),
            });
        }
        total += t
            .iter()
            .zip(e)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>();
    }
    Ok((total / truths.len() as f64).sqrt())
}

/// Run every (value, solver) combination of a sweep.
///
/// Each sweep point runs `n_trials` independent realizations; trials execute
/// concurrently, each on its own random stream derived from the spec seed,
/// the sweep-point index, and the trial index. A trial that fails for one
/// solver only increments that solver's `n_failed`; a sweep point where every
/// trial of a solver failed reports [`RMSE_SENTINEL`].
pub fn run_sweep(spec: &SweepSpec) -> Result<ExperimentResult> {
    if spec.n_trials == 0 {
        return Err(Error::InvalidExperiment("n_trials must be at least 1".into()));
    }
    if spec.values.is_empty() {
        return Err(Error::InvalidExperiment("sweep needs at least one value".into()));
    }
    if spec.solvers.is_empty() {
        return Err(Error::InvalidExperiment("sweep needs at least one solver".into()));
    }
    let pool = worker_pool()?;
    let mut rows = Vec::with_capacity(spec.values.len() * spec.solvers.len() * Metric::ALL.len());
    for (point_idx, &value) in spec.values.iter().enumerate() {
        let scenario = apply_variable(&spec.base, spec.variable, value)?;
        let records: Vec<TrialRecord> = pool.install(|| {
            (0..spec.n_trials)
                .into_par_iter()
                .map(|t| {
                    let mut rng =
                        ChaCha8Rng::seed_from_u64(mix(spec.seed, point_idx as u64, t as u64));
                    run_one(&scenario, &spec.solvers, &mut rng)
                })
                .collect()
        });
        aggregate(value, &spec.solvers, spec.n_trials, &records, &mut rows)?;
    }
    Ok(ExperimentResult {
        variable: spec.variable.name().to_string(),
        rows,
    })
}

/// Position RMSE of the reference pipeline for every surface placement on an
/// evenly spaced `lattice_n` x `lattice_n` grid over the 5 m x 5 m room.
///
/// `sweep_value` encodes the flat cell index `iy * lattice_n + ix`, with `ix`
/// counting along x from 0 and the cell coordinate at `5 ix / (lattice_n-1)`
/// (a single-point lattice sits at the room center). Lattice points that
/// violate scene invariants (for example, a surface dropped onto the
/// transmitter) are excluded; points where every trial failed report
/// [`RMSE_SENTINEL`] with the failure count.
pub fn placement_heatmap(
    lattice_n: usize,
    base: &Scenario,
    n_trials: usize,
    seed: u64,
) -> Result<ExperimentResult> {
    if lattice_n == 0 {
        return Err(Error::InvalidExperiment("lattice needs at least one point".into()));
    }
    if n_trials == 0 {
        return Err(Error::InvalidExperiment("n_trials must be at least 1".into()));
    }
    let pool = worker_pool()?;
    let solvers = [SolverKind::Tmsbl];
    let mut rows = Vec::new();
    for iy in 0..lattice_n {
        for ix in 0..lattice_n {
            let cell = (iy * lattice_n + ix) as u64;
            let ris = [lattice_coord(ix, lattice_n), lattice_coord(iy, lattice_n)];
            let scene = match Scene::new(
                base.scene.bs,
                ris,
                base.scene.ue,
                base.scene.scatterers_br.clone(),
                base.scene.scatterers_rm.clone(),
            ) {
                Ok(s) => s,
                Err(_) => continue,
            };
            let scenario = Scenario {
                scene,
                ..base.clone()
            };
            let records: Vec<TrialRecord> = pool.install(|| {
                (0..n_trials)
                    .into_par_iter()
                    .map(|t| {
                        let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, cell, t as u64));
                        run_one(&scenario, &solvers, &mut rng)
                    })
                    .collect()
            });
            let mut point_rows = Vec::new();
            aggregate(cell as f64, &solvers, n_trials, &records, &mut point_rows)?;
            rows.extend(
                point_rows
                    .into_iter()
                    .filter(|r| r.metric == Metric::RmsePositionM),
            );
        }
    }
    Ok(ExperimentResult {
        variable: "ris_cell".to_string(),
        rows,
    })
}

/// One row of the flop-count comparison table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComplexityRow {
    pub algorithm: SolverKind,
    pub n_ris: usize,
    pub n_subcarriers: usize,
    pub n_blocks: usize,
    pub flops: u64,
    pub note: &'static str,
}

/// Evaluate the per-iteration flop estimates of all five benchmark
/// algorithms at one operating point.
pub fn complexity_report(
    n_ris: usize,
    n_subcarriers: usize,
    n_blocks: usize,
) -> Result<Vec<ComplexityRow>> {
    const ALGORITHMS: [SolverKind; 5] = [
        SolverKind::DcsSomp,
        SolverKind::Sbl,
        SolverKind::Gsbl,
        SolverKind::Tmsbl,
        SolverKind::Amp,
    ];
    ALGORITHMS
        .iter()
        .map(|&algorithm| {
            let flops = flop_estimate(algorithm, n_ris, n_subcarriers, n_blocks)?;
            let note = if algorithm == SolverKind::Gsbl {
                "defining formula N^3*N_R^3 + J^3; the widely quoted figure 5336000 at \
                 (N_R, N, J) = (8, 10, 60) does not follow from it, so the formula value \
                 is reported"
            } else {
                ""
            };
            Ok(ComplexityRow {
                algorithm,
                n_ris,
                n_subcarriers,
                n_blocks,
                flops,
                note,
            })
        })
        .collect()
}

/// Estimated (angle, cascade delay, position) of one solver on one trial.
type SolverSample = (f64, f64, [f64; 2]);

/// Outcome of one trial: the truth it was scored against and, per solver,
/// the estimate or `None` on failure.
struct TrialRecord {
    truth: Option<TrialTruth>,
    per_solver: Vec<Option<SolverSample>>,
}

fn run_one(scenario: &Scenario, solvers: &[SolverKind], rng: &mut ChaCha8Rng) -> TrialRecord {
    match run_trial(
        &scenario.scene,
        &scenario.arrays,
        &scenario.waveform,
        &scenario.trial,
        solvers,
        rng,
    ) {
        Err(_) => TrialRecord {
            truth: None,
            per_solver: vec![None; solvers.len()],
        },
        Ok(outcome) => TrialRecord {
            truth: Some(outcome.truth),
            per_solver: outcome
                .estimates
                .iter()
                .map(|(_, res)| {
                    res.as_ref()
                        .ok()
                        .map(|est| (est.aor, est.toa_cascade, est.position))
                })
                .collect(),
        },
    }
}

fn aggregate(
    sweep_value: f64,
    solvers: &[SolverKind],
    n_trials: usize,
    records: &[TrialRecord],
    rows: &mut Vec<ResultRow>,
) -> Result<()> {
    for (si, &solver) in solvers.iter().enumerate() {
        let mut n_failed = 0;
        let mut survivors: Vec<(&TrialTruth, SolverSample)> = Vec::new();
        for rec in records {
            match (&rec.truth, &rec.per_solver[si]) {
                (Some(truth), Some(est)) => survivors.push((truth, *est)),
                _ => n_failed += 1,
            }
        }
        for metric in Metric::ALL {
            let value = if survivors.is_empty() {
                RMSE_SENTINEL
            } else {
                let (truths, estimates): (Vec<Vec<f64>>, Vec<Vec<f64>>) = survivors
                    .iter()
                    .map(|(truth, (aor, toa, pos))| match metric {
                        Metric::RmseAorRad => (vec![truth.aor], vec![*aor]),
                        Metric::RmseToaS => (vec![truth.toa_cascade], vec![*toa]),
                        Metric::RmsePositionM => {
                            (truth.position.to_vec(), vec![pos[0], pos[1]])
                        }
                    })
                    .unzip();
                rmse(&truths, &estimates)?
            };
            rows.push(ResultRow {
                sweep_value,
                solver,
                metric,
                value,
                n_trials,
                n_failed,
            });
        }
    }
    Ok(())
}

/// Rebuild the scenario with one knob replaced by the sweep value.
fn apply_variable(base: &Scenario, variable: SweepVariable, value: f64) -> Result<Scenario> {
    let mut scenario = base.clone();
    match variable {
        SweepVariable::SnrDb => scenario.trial.snr_db = value,
        SweepVariable::NBlocks => {
            let w = &base.waveform;
            scenario.waveform = WaveformConfig::new(
                w.carrier_hz,
                w.bandwidth_hz,
                w.n_subcarriers,
                as_count(value, "n_blocks")?,
                w.n_pilots,
                w.reflection_loss_db,
            )?;
        }
        SweepVariable::NElements => {
            let a = &base.arrays;
            scenario.arrays =
                ArrayConfig::new(a.n_bs, a.n_ue, as_count(value, "n_elements")?, a.spacing)?;
        }
        SweepVariable::RisPosition => {
            scenario.scene = Scene::new(
                base.scene.bs,
                [value, base.scene.ris[1]],
                base.scene.ue,
                base.scene.scatterers_br.clone(),
                base.scene.scatterers_rm.clone(),
            )?;
        }
    }
    Ok(scenario)
}

fn as_count(value: f64, what: &str) -> Result<usize> {
    if value.fract() != 0.0 || value < 1.0 || value > u32::MAX as f64 {
        return Err(Error::InvalidExperiment(format!(
            "{what} sweep values must be positive integers, got {value}"
        )));
    }
    Ok(value as usize)
}

fn lattice_coord(i: usize, n: usize) -> f64 {
    if n == 1 {
        2.5
    } else {
        5.0 * i as f64 / (n - 1) as f64
    }
}

/// Derive an independent stream seed from the master seed and two indices
/// (splitmix-style finalizer keeps nearby indices uncorrelated).
fn mix(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed
        ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ b.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Worker pool sized by `RIS_LOCATE_THREADS` or the available parallelism.
fn worker_pool() -> Result<rayon::ThreadPool> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(raw) => {
            let parsed: usize = raw.trim().parse().map_err(|_| {
                Error::InvalidExperiment(format!(
                    "{THREADS_ENV} must be a positive integer, got {raw:?}"
                ))
            })?;
            if parsed == 0 {
                return Err(Error::InvalidExperiment(format!(
                    "{THREADS_ENV} must be a positive integer, got 0"
                )));
            }
            parsed
        }
        Err(_) => 0, // zero lets the pool pick the available parallelism
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidExperiment(format!("failed to build worker pool: {e}")))
}
