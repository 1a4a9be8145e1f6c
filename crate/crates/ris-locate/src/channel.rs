//! Frequency-domain channel synthesis for the reflected two-hop link.
//!
//! Each hop is a geometric multipath channel over `N` OFDM subcarriers:
//!
//! ```text
//! H[n] = A_rx * Sigma[n] * A_tx^H
//! Sigma[n] = sqrt(n_tx * n_rx) * diag(beta_l * rho_l * exp(-j 2 pi n tau_l / (N T_s)))
//! ```
//!
//! where the steering matrices hold unit-norm array responses at the path
//! angles, `beta` are small-scale gains (deterministic 1 on the direct path,
//! circularly-symmetric unit-variance on scattered paths), `rho` the
//! free-space amplitudes, and `tau` the absolute delays. The reflecting
//! surface multiplies element-wise unit-modulus phases between the hops, and
//! the receiver observes `Y = sqrt(P) W^H H F + W^H N`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::geometry::{PathGeometry, Scene, Segment, SPEED_OF_LIGHT};

/// Antenna counts and element spacing of every array in the link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrayConfig {
    pub n_bs: usize,
    pub n_ue: usize,
    pub n_ris: usize,
    /// Element spacing as a fraction of the carrier wavelength.
    pub spacing: f64,
}

impl ArrayConfig {
    pub fn new(n_bs: usize, n_ue: usize, n_ris: usize, spacing: f64) -> Result<Self> {
        if n_bs == 0 || n_ue == 0 || n_ris == 0 {
            return Err(Error::InvalidScene(
                "array sizes must be at least 1".into(),
            ));
        }
        if spacing <= 0.0 {
            return Err(Error::NonPositive {
                quantity: "element spacing",
                value: spacing,
            });
        }
        Ok(ArrayConfig {
            n_bs,
            n_ue,
            n_ris,
            spacing,
        })
    }
}

/// OFDM numerology plus the block structure of the two-stage protocol.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveformConfig {
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    pub n_subcarriers: usize,
    /// Number of reconfiguration blocks in stage 2.
    pub n_blocks: usize,
    /// Number of pilot symbols (precoder/combiner columns) in stage 1.
    pub n_pilots: usize,
    /// Reflection loss of scattered paths, in dB (non-positive).
    pub reflection_loss_db: f64,
}

impl WaveformConfig {
    pub fn new(
        carrier_hz: f64,
        bandwidth_hz: f64,
        n_subcarriers: usize,
        n_blocks: usize,
        n_pilots: usize,
        reflection_loss_db: f64,
    ) -> Result<Self> {
        if carrier_hz <= 0.0 {
            return Err(Error::NonPositive {
                quantity: "carrier frequency",
                value: carrier_hz,
            });
        }
        if bandwidth_hz <= 0.0 {
            return Err(Error::NonPositive {
                quantity: "bandwidth",
                value: bandwidth_hz,
            });
        }
        // The per-subcarrier steering model treats the wavelength as flat
        // across the band; keep the fractional bandwidth small enough for
        // that to hold.
        if bandwidth_hz / carrier_hz >= 0.05 {
            return Err(Error::InvalidScene(format!(
                "fractional bandwidth {} too large for the narrowband array model",
                bandwidth_hz / carrier_hz
            )));
        }
        if n_subcarriers == 0 || n_blocks == 0 || n_pilots == 0 {
            return Err(Error::InvalidScene(
                "subcarrier, block, and pilot counts must be >= 1".into(),
            ));
        }
        Ok(WaveformConfig {
            carrier_hz,
            bandwidth_hz,
            n_subcarriers,
            n_blocks,
            n_pilots,
            reflection_loss_db,
        })
    }

    /// Carrier wavelength in meters.
    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    /// Symbol period 1/B in seconds.
    pub fn symbol_period(&self) -> f64 {
        1.0 / self.bandwidth_hz
    }

    /// Unambiguous delay span N * T_s of the subcarrier phase ramp.
    pub fn delay_span(&self) -> f64 {
        self.n_subcarriers as f64 * self.symbol_period()
    }
}

/// Per-path small-scale gains, amplitudes, and delays of one hop.
#[derive(Debug, Clone, PartialEq)]
pub struct PathGains {
    /// Small-scale complex gain; 1 on the direct path.
    pub beta: Vec<Complex64>,
    /// Free-space amplitude (includes the reflection loss on scattered paths).
    pub rho: Vec<f64>,
    /// Absolute delay in seconds.
    pub tau: Vec<f64>,
}

impl PathGains {
    /// Draw gains for a list of paths: the direct path (index 0) gets
    /// `beta = 1`, scattered paths get unit-variance circularly-symmetric
    /// gains from `rng`.
    pub fn draw(
        paths: &[PathGeometry],
        wavelength: f64,
        reflection_loss_db: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let mut beta = Vec::with_capacity(paths.len());
        let mut rho = Vec::with_capacity(paths.len());
        let mut tau = Vec::with_capacity(paths.len());
        for p in paths {
            let los = p.path_index == 0;
            beta.push(if los {
                Complex64::new(1.0, 0.0)
            } else {
                crandn(rng)
            });
            rho.push(path_loss(p.distance, wavelength, los, reflection_loss_db)?);
            tau.push(p.toa);
        }
        Ok(PathGains { beta, rho, tau })
    }

    /// Combined complex coefficient of path `l` at subcarrier `n`:
    /// `beta * rho * exp(-j 2 pi n tau / (N T_s))`.
    pub fn coefficient(&self, l: usize, subcarrier: usize, delay_span: f64) -> Complex64 {
        let phase = -2.0 * std::f64::consts::PI * subcarrier as f64 * self.tau[l] / delay_span;
        self.beta[l] * Complex64::from_polar(self.rho[l], phase)
    }
}

/// Unit-norm array response of an `n`-element uniform linear array.
///
/// Entry `k` is `exp(-j 2 pi spacing sin(angle) k) / sqrt(n)`; angles follow
/// the global +x-axis convention of the [`crate::geometry`] module.
pub fn steering_vector(n: usize, angle: f64, spacing: f64) -> DVector<Complex64> {
    let q = spacing * angle.sin();
    let scale = 1.0 / (n as f64).sqrt();
    DVector::from_fn(n, |k, _| {
        Complex64::from_polar(scale, -std::f64::consts::TAU * q * k as f64)
    })
}

/// Steering matrix with one column per angle.
pub fn steering_matrix(n: usize, angles: &[f64], spacing: f64) -> DMatrix<Complex64> {
    let mut m = DMatrix::zeros(n, angles.len());
    for (i, &a) in angles.iter().enumerate() {
        m.set_column(i, &steering_vector(n, a, spacing));
    }
    m
}

/// Free-space amplitude `lambda / (4 pi d)`, times `10^(loss_db/20)` on
/// scattered paths.
pub fn path_loss(
    distance: f64,
    wavelength: f64,
    line_of_sight: bool,
    reflection_loss_db: f64,
) -> Result<f64> {
    if distance <= 0.0 {
        return Err(Error::NonPositive {
            quantity: "path distance",
            value: distance,
        });
    }
    if wavelength <= 0.0 {
        return Err(Error::NonPositive {
            quantity: "wavelength",
            value: wavelength,
        });
    }
    let rho = wavelength / (4.0 * std::f64::consts::PI * distance);
    Ok(if line_of_sight {
        rho
    } else {
        rho * 10f64.powf(reflection_loss_db / 20.0)
    })
}

/// One hop of the link at a single subcarrier: `A_rx Sigma A_tx^H`.
pub fn segment_channel(
    paths: &[PathGeometry],
    gains: &PathGains,
    n_rx: usize,
    n_tx: usize,
    spacing: f64,
    subcarrier: usize,
    delay_span: f64,
) -> Result<DMatrix<Complex64>> {
    if paths.is_empty() || paths.len() != gains.beta.len() {
        return Err(Error::ShapeMismatch {
            context: "segment_channel paths/gains",
            expected: format!("{} gain entries", paths.len().max(1)),
            actual: format!("{} gain entries", gains.beta.len()),
        });
    }
    let arrival: Vec<f64> = paths.iter().map(|p| p.arrival).collect();
    let departure: Vec<f64> = paths.iter().map(|p| p.departure).collect();
    let a_rx = steering_matrix(n_rx, &arrival, spacing);
    let a_tx = steering_matrix(n_tx, &departure, spacing);
    let scale = ((n_tx * n_rx) as f64).sqrt();
    let mut sigma = DMatrix::zeros(paths.len(), paths.len());
    for l in 0..paths.len() {
        sigma[(l, l)] = gains.coefficient(l, subcarrier, delay_span) * scale;
    }
    Ok(a_rx * sigma * a_tx.adjoint())
}

/// Both hops of the link for every subcarrier of one coherence block.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    /// Transmitter-to-surface channels, one per subcarrier (n_ris x n_bs).
    pub h_br: Vec<DMatrix<Complex64>>,
    /// Surface-to-user channels, one per subcarrier (n_ue x n_ris).
    pub h_rm: Vec<DMatrix<Complex64>>,
    pub paths_br: Vec<PathGeometry>,
    pub paths_rm: Vec<PathGeometry>,
    pub gains_br: PathGains,
    pub gains_rm: PathGains,
}

impl ChannelRealization {
    /// Draw the small-scale gains of both hops and synthesize every
    /// per-subcarrier channel matrix.
    pub fn draw(
        scene: &Scene,
        arrays: &ArrayConfig,
        waveform: &WaveformConfig,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let paths_br = scene.segment_paths(Segment::BsRis)?;
        let paths_rm = scene.segment_paths(Segment::RisUe)?;
        let lambda = waveform.wavelength();
        let gains_br = PathGains::draw(&paths_br, lambda, waveform.reflection_loss_db, rng)?;
        let gains_rm = PathGains::draw(&paths_rm, lambda, waveform.reflection_loss_db, rng)?;
        let span = waveform.delay_span();
        let mut h_br = Vec::with_capacity(waveform.n_subcarriers);
        let mut h_rm = Vec::with_capacity(waveform.n_subcarriers);
        for n in 0..waveform.n_subcarriers {
            h_br.push(segment_channel(
                &paths_br,
                &gains_br,
                arrays.n_ris,
                arrays.n_bs,
                arrays.spacing,
                n,
                span,
            )?);
            h_rm.push(segment_channel(
                &paths_rm,
                &gains_rm,
                arrays.n_ue,
                arrays.n_ris,
                arrays.spacing,
                n,
                span,
            )?);
        }
        Ok(ChannelRealization {
            h_br,
            h_rm,
            paths_br,
            paths_rm,
            gains_br,
            gains_rm,
        })
    }
}

/// End-to-end channel through the surface: `H_rm diag(phases) H_br`.
///
/// Every phase entry must be unit-modulus (the surface only steers, it does
/// not amplify).
pub fn cascaded_channel(
    h_rm: &DMatrix<Complex64>,
    phases: &DVector<Complex64>,
    h_br: &DMatrix<Complex64>,
) -> Result<DMatrix<Complex64>> {
    if h_rm.ncols() != phases.len() || h_br.nrows() != phases.len() {
        return Err(Error::ShapeMismatch {
            context: "cascaded_channel",
            expected: format!("{} surface elements", phases.len()),
            actual: format!("{} x {} hop dims", h_rm.ncols(), h_br.nrows()),
        });
    }
    for (i, p) in phases.iter().enumerate() {
        if (p.norm() - 1.0).abs() > 1e-12 {
            return Err(Error::NonUnitModulus {
                index: i,
                modulus: p.norm(),
            });
        }
    }
    let mut scaled = h_br.clone();
    for (i, p) in phases.iter().enumerate() {
        let mut row = scaled.row_mut(i);
        row *= *p;
    }
    Ok(h_rm * scaled)
}

/// Path-pair-domain form of the cascade after ideal beam alignment.
///
/// Entry `(a, b)` couples surface-to-user path `a` with transmitter-to-surface
/// path `b`:
///
/// ```text
/// sqrt(n_ue n_bs n_ris) * c_rm_a[n] * c_br_b[n] * phases^T a(theta_diff(a, b))
/// sin(theta_diff(a, b)) = sin(arrival_br_b) - sin(departure_rm_a)
/// ```
///
/// with `c_*` the scalar path coefficients of [`PathGains::coefficient`].
/// Errors if any pair leaves the arcsin domain.
#[allow(clippy::too_many_arguments)]
pub fn effective_channel(
    paths_rm: &[PathGeometry],
    paths_br: &[PathGeometry],
    gains_rm: &PathGains,
    gains_br: &PathGains,
    phases: &DVector<Complex64>,
    arrays: &ArrayConfig,
    subcarrier: usize,
    delay_span: f64,
) -> Result<DMatrix<Complex64>> {
    let scale = ((arrays.n_ue * arrays.n_bs * arrays.n_ris) as f64).sqrt();
    let mut h = DMatrix::zeros(paths_rm.len(), paths_br.len());
    for (a, prm) in paths_rm.iter().enumerate() {
        for (b, pbr) in paths_br.iter().enumerate() {
            let s = pbr.arrival.sin() - prm.departure.sin();
            if s.abs() > 1.0 {
                return Err(Error::SpatialFrequencyOverflow(s.abs()));
            }
            let steer = steering_vector(arrays.n_ris, s.asin(), arrays.spacing);
            let inner: Complex64 = phases
                .iter()
                .zip(steer.iter())
                .map(|(p, v)| p * v)
                .sum();
            h[(a, b)] = gains_rm.coefficient(a, subcarrier, delay_span)
                * gains_br.coefficient(b, subcarrier, delay_span)
                * inner
                * scale;
        }
    }
    Ok(h)
}

/// One pilot observation block: `Y = sqrt(P) W^H H F + W^H N`.
///
/// Noise is element-wise circularly-symmetric with variance
/// `noise_variance`, drawn fresh per call and entering before the combiner,
/// so the combined noise has covariance `noise_variance * W^H W`.
pub fn observe_block(
    channel: &DMatrix<Complex64>,
    precoder: &DMatrix<Complex64>,
    combiner: &DMatrix<Complex64>,
    transmit_energy: f64,
    noise_variance: f64,
    rng: &mut impl Rng,
) -> Result<DMatrix<Complex64>> {
    if channel.ncols() != precoder.nrows() || channel.nrows() != combiner.nrows() {
        return Err(Error::ShapeMismatch {
            context: "observe_block",
            expected: format!("channel {} x {}", combiner.nrows(), precoder.nrows()),
            actual: format!("channel {} x {}", channel.nrows(), channel.ncols()),
        });
    }
    if transmit_energy < 0.0 {
        return Err(Error::NonPositive {
            quantity: "transmit energy",
            value: transmit_energy,
        });
    }
    if noise_variance < 0.0 {
        return Err(Error::NonPositive {
            quantity: "noise variance",
            value: noise_variance,
        });
    }
    let mut y = combiner.adjoint() * channel * precoder * Complex64::from(transmit_energy.sqrt());
    if noise_variance > 0.0 {
        let sigma = noise_variance.sqrt();
        let noise = DMatrix::from_fn(channel.nrows(), precoder.ncols(), |_, _| {
            crandn(rng) * sigma
        });
        y += combiner.adjoint() * noise;
    }
    Ok(y)
}

/// Expected per-sample received power of the direct-direct path pair during
/// sounding, averaged over isotropic unit-norm pilots on both arrays
/// (`E |w^H a|^2 = 1/n`) and uniform surface phases (`E |phases^T a|^2 = 1`):
/// `n_ris (rho_br_0 rho_rm_0)^2` per unit transmit energy.
///
/// This is the anchor used to convert a configured SNR into a noise
/// variance: `sigma^2 = reference_power / snr_linear` with unit transmit
/// energy. Referencing the sounding stage — rather than the beam-aligned
/// power available after it — pins the operating point of the observations
/// the estimators actually consume, and keeps it independent of the absolute
/// free-space losses. Designed transmitter/user beams then enjoy their full
/// `n_ue n_bs` array gain on top of this reference.
pub fn reference_received_power(
    scene: &Scene,
    arrays: &ArrayConfig,
    waveform: &WaveformConfig,
) -> Result<f64> {
    let lambda = waveform.wavelength();
    let d_br = scene.path_geometry(Segment::BsRis, 0)?.distance;
    let d_rm = scene.path_geometry(Segment::RisUe, 0)?.distance;
    let rho_br = path_loss(d_br, lambda, true, waveform.reflection_loss_db)?;
    let rho_rm = path_loss(d_rm, lambda, true, waveform.reflection_loss_db)?;
    Ok(arrays.n_ris as f64 * (rho_br * rho_rm).powi(2))
}

/// Noise variance realizing `snr_db` with unit transmit energy, anchored at
/// [`reference_received_power`].
pub fn noise_variance_for_snr(
    snr_db: f64,
    scene: &Scene,
    arrays: &ArrayConfig,
    waveform: &WaveformConfig,
) -> Result<f64> {
    Ok(reference_received_power(scene, arrays, waveform)? / 10f64.powf(snr_db / 10.0))
}

/// Circularly-symmetric complex normal sample with unit variance.
pub fn crandn(rng: &mut impl Rng) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Uniform unit-modulus phase sample.
pub fn random_phase(rng: &mut impl Rng) -> Complex64 {
    Complex64::from_polar(1.0, rng.gen::<f64>() * std::f64::consts::TAU)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    fn baseline_scene() -> Scene {
        Scene::new(
            [0.0, 0.0],
            [2.5, 4.0],
            [5.0, 3.0],
            vec![[1.0, 3.0]],
            vec![[4.0, 2.0]],
        )
        .unwrap()
    }

    fn baseline_arrays() -> ArrayConfig {
        ArrayConfig::new(8, 8, 8, 0.5).unwrap()
    }

    fn baseline_waveform() -> WaveformConfig {
        WaveformConfig::new(60e9, 100e6, 10, 64, 32, -13.0).unwrap()
    }

    #[test]
    fn steering_entries_have_uniform_magnitude() {
        for n in [1usize, 2, 8, 16] {
            let v = steering_vector(n, 0.7, 0.5);
            let scale = 1.0 / (n as f64).sqrt();
            for e in v.iter() {
                assert_relative_eq!(e.norm(), scale, max_relative = 1e-14);
            }
            assert_relative_eq!(v.norm(), 1.0, max_relative = 1e-14);
        }
    }

    #[test]
    fn steering_two_elements_endfire() {
        let v = steering_vector(2, std::f64::consts::FRAC_PI_2, 0.5);
        assert_relative_eq!(v[0].re, std::f64::consts::FRAC_1_SQRT_2, max_relative = 1e-12);
        assert_relative_eq!(v[1].re, -std::f64::consts::FRAC_1_SQRT_2, max_relative = 1e-12);
        assert!(v[0].im.abs() < 1e-12 && v[1].im.abs() < 1e-12);
    }

    #[test]
    fn steering_broadside_is_constant() {
        let v = steering_vector(8, 0.0, 0.5);
        for e in v.iter() {
            assert_relative_eq!(e.re, 1.0 / 8f64.sqrt(), max_relative = 1e-14);
            assert!(e.im.abs() < 1e-14);
        }
    }

    #[test]
    fn path_loss_direct_value() {
        // oracle: lambda / (4 pi d) with lambda = 2.99792e8 / 60e9
        let lambda = 2.99792e8 / 60e9;
        let rho = path_loss(4.716990566028302, lambda, true, -13.0).unwrap();
        assert_relative_eq!(rho, 8.429346711551738e-5, max_relative = 1e-12);
    }

    #[test]
    fn path_loss_scattered_value() {
        let lambda = 2.99792e8 / 60e9;
        let rho = path_loss(4.716990566028302, lambda, false, -13.0).unwrap();
        assert_relative_eq!(rho, 1.8870956667472397e-5, max_relative = 1e-12);
        // exactly the direct amplitude scaled by 10^(-13/20)
        let direct = path_loss(4.716990566028302, lambda, true, -13.0).unwrap();
        assert_relative_eq!(rho, direct * 10f64.powf(-0.65), max_relative = 1e-14);
    }

    #[test]
    fn path_loss_unit_at_lambda_over_4pi() {
        let lambda = 1.0;
        let rho = path_loss(1.0 / (4.0 * std::f64::consts::PI), lambda, true, 0.0).unwrap();
        assert_relative_eq!(rho, 1.0, max_relative = 1e-14);
    }

    #[test]
    fn path_loss_rejects_zero_distance() {
        assert!(matches!(
            path_loss(0.0, 5e-3, true, -13.0),
            Err(Error::NonPositive { .. })
        ));
    }

    #[test]
    fn single_path_segment_is_rank_one() {
        let scene = baseline_scene();
        let wf = baseline_waveform();
        let paths = vec![scene.path_geometry(Segment::BsRis, 0).unwrap()];
        let gains = PathGains {
            beta: vec![Complex64::new(1.0, 0.0)],
            rho: vec![1.0],
            tau: vec![paths[0].toa],
        };
        let h = segment_channel(&paths, &gains, 8, 8, 0.5, 0, wf.delay_span()).unwrap();
        let svd = h.svd(false, false);
        assert_relative_eq!(svd.singular_values[0], 8.0, max_relative = 1e-10);
        for s in svd.singular_values.iter().skip(1) {
            assert!(*s < 1e-10);
        }
    }

    #[test]
    fn two_path_segment_is_rank_two() {
        let mut rng = StdRng::seed_from_u64(5);
        let scene = baseline_scene();
        let wf = baseline_waveform();
        let paths = scene.segment_paths(Segment::BsRis).unwrap();
        let gains = PathGains::draw(&paths, wf.wavelength(), -13.0, &mut rng).unwrap();
        let h = segment_channel(&paths, &gains, 8, 8, 0.5, 3, wf.delay_span()).unwrap();
        let svd = h.svd(false, false);
        assert!(svd.singular_values[1] > 1e-12);
        assert!(svd.singular_values[2] < 1e-15);
    }

    #[test]
    fn subcarrier_phase_ramp_matches_delay() {
        let scene = baseline_scene();
        let wf = baseline_waveform();
        let paths = vec![scene.path_geometry(Segment::RisUe, 0).unwrap()];
        let gains = PathGains {
            beta: vec![Complex64::new(1.0, 0.0)],
            rho: vec![1.0],
            tau: vec![paths[0].toa],
        };
        let span = wf.delay_span();
        let h0 = segment_channel(&paths, &gains, 8, 8, 0.5, 0, span).unwrap();
        let h3 = segment_channel(&paths, &gains, 8, 8, 0.5, 3, span).unwrap();
        let expected = Complex64::from_polar(
            1.0,
            -2.0 * std::f64::consts::PI * 3.0 * paths[0].toa / span,
        );
        // same rank-one structure, rotated by the delay ramp
        let ratio = h3[(0, 0)] / h0[(0, 0)];
        assert_relative_eq!(ratio.re, expected.re, max_relative = 1e-10);
        assert_relative_eq!(ratio.im, expected.im, max_relative = 1e-10);
    }

    #[test]
    fn cascade_with_identity_phases_is_plain_product() {
        let mut rng = StdRng::seed_from_u64(9);
        let scene = baseline_scene();
        let arrays = baseline_arrays();
        let wf = baseline_waveform();
        let real = ChannelRealization::draw(&scene, &arrays, &wf, &mut rng).unwrap();
        let ones = DVector::from_element(8, Complex64::new(1.0, 0.0));
        let h = cascaded_channel(&real.h_rm[0], &ones, &real.h_br[0]).unwrap();
        let expect = &real.h_rm[0] * &real.h_br[0];
        assert!((h - expect).norm() < 1e-12);
    }

    #[test]
    fn cascade_rejects_non_unit_phases() {
        let mut rng = StdRng::seed_from_u64(9);
        let scene = baseline_scene();
        let arrays = baseline_arrays();
        let wf = baseline_waveform();
        let real = ChannelRealization::draw(&scene, &arrays, &wf, &mut rng).unwrap();
        let mut phases = DVector::from_element(8, Complex64::new(1.0, 0.0));
        phases[2] = Complex64::new(0.5, 0.0);
        assert!(matches!(
            cascaded_channel(&real.h_rm[0], &phases, &real.h_br[0]),
            Err(Error::NonUnitModulus { index: 2, .. })
        ));
    }

    #[test]
    fn coherent_phase_alignment_maximizes_cascade_gain() {
        // phases conjugate-matching the surface-side steering product give
        // the largest possible single-pair gain; random phases never beat it
        let mut rng = StdRng::seed_from_u64(17);
        let scene = Scene::new([0.0, 0.0], [2.5, 4.0], [5.0, 3.0], vec![], vec![]).unwrap();
        let arrays = baseline_arrays();
        let wf = baseline_waveform();
        let real = ChannelRealization::draw(&scene, &arrays, &wf, &mut rng).unwrap();

        let arr = real.paths_br[0].arrival;
        let dep = real.paths_rm[0].departure;
        let a_in = steering_vector(8, arr, 0.5);
        let a_out = steering_vector(8, dep, 0.5);
        let aligned = DVector::from_fn(8, |i, _| {
            let w = a_out[i] * a_in[i].conj();
            w / w.norm()
        });
        let h_best = cascaded_channel(&real.h_rm[0], &aligned, &real.h_br[0])
            .unwrap()
            .norm();
        for _ in 0..1000 {
            let phases = DVector::from_fn(8, |_, _| random_phase(&mut rng));
            let h = cascaded_channel(&real.h_rm[0], &phases, &real.h_br[0])
                .unwrap()
                .norm();
            assert!(h <= h_best * (1.0 + 1e-12));
        }
    }

    #[test]
    fn effective_channel_matches_matrix_form() {
        // entry formula == diag(c_rm) A^H(dep) diag(phases) A(arr) diag(c_br)
        // with the array-gain factors carried by the diagonal coefficients
        let mut rng = StdRng::seed_from_u64(23);
        let scene = baseline_scene();
        let arrays = baseline_arrays();
        let wf = baseline_waveform();
        let real = ChannelRealization::draw(&scene, &arrays, &wf, &mut rng).unwrap();
        let phases = DVector::from_fn(8, |_, _| random_phase(&mut rng));
        let span = wf.delay_span();

        for n in [0usize, 4, 9] {
            let entrywise = effective_channel(
                &real.paths_rm,
                &real.paths_br,
                &real.gains_rm,
                &real.gains_br,
                &phases,
                &arrays,
                n,
                span,
            )
            .unwrap();

            let dep: Vec<f64> = real.paths_rm.iter().map(|p| p.departure).collect();
            let arr: Vec<f64> = real.paths_br.iter().map(|p| p.arrival).collect();
            let a_dep = steering_matrix(8, &dep, 0.5);
            let a_arr = steering_matrix(8, &arr, 0.5);
            let mut omega = DMatrix::zeros(8, 8);
            for i in 0..8 {
                omega[(i, i)] = phases[i];
            }
            let mid = a_dep.adjoint() * omega * a_arr;
            let mut matrix_form = DMatrix::zeros(2, 2);
            let rm_scale = ((arrays.n_ris * arrays.n_ue) as f64).sqrt();
            let br_scale = ((arrays.n_bs * arrays.n_ris) as f64).sqrt();
            for a in 0..2 {
                for b in 0..2 {
                    matrix_form[(a, b)] = real.gains_rm.coefficient(a, n, span)
                        * rm_scale
                        * mid[(a, b)]
                        * real.gains_br.coefficient(b, n, span)
                        * br_scale;
                }
            }
            assert!((entrywise - matrix_form).norm() < 1e-12);
        }
    }

    #[test]
    fn effective_channel_equal_angles_sums_phases() {
        // when arrival == departure the steering difference vector is flat
        // and the inner product reduces to sum(phases) / sqrt(n)
        let scene = Scene::new([0.0, 0.0], [2.0, 0.0], [4.0, 0.0], vec![], vec![]).unwrap();
        // bs -> ris look-back arrival = pi; ris -> ue departure = 0:
        // sin diff = sin(pi) - sin(0) = 0, steering vector all-ones/sqrt(n)
        let arrays = baseline_arrays();
        let wf = baseline_waveform();
        let mut rng = StdRng::seed_from_u64(1);
        let real = ChannelRealization::draw(&scene, &arrays, &wf, &mut rng).unwrap();
        let phases = DVector::from_fn(8, |_, _| random_phase(&mut rng));
        let h = effective_channel(
            &real.paths_rm,
            &real.paths_br,
            &real.gains_rm,
            &real.gains_br,
            &phases,
            &arrays,
            0,
            wf.delay_span(),
        )
        .unwrap();
        let phase_sum: Complex64 = phases.iter().sum();
        let expect = real.gains_rm.coefficient(0, 0, wf.delay_span())
            * real.gains_br.coefficient(0, 0, wf.delay_span())
            * phase_sum
            / 8f64.sqrt()
            * (512f64).sqrt();
        assert_relative_eq!(h[(0, 0)].re, expect.re, max_relative = 1e-10);
        assert_relative_eq!(h[(0, 0)].im, expect.im, max_relative = 1e-10);
    }

    #[test]
    fn effective_channel_overflow_error() {
        // surface squeezed between endpoints on a vertical line: the
        // look-back arrival points straight down, the departure straight up
        let scene = Scene::new([0.0, 0.0], [0.0, 1.0], [0.0, 2.0], vec![], vec![]).unwrap();
        let arrays = baseline_arrays();
        let wf = baseline_waveform();
        let mut rng = StdRng::seed_from_u64(2);
        let real = ChannelRealization::draw(&scene, &arrays, &wf, &mut rng).unwrap();
        let phases = DVector::from_element(8, Complex64::new(1.0, 0.0));
        assert!(matches!(
            effective_channel(
                &real.paths_rm,
                &real.paths_br,
                &real.gains_rm,
                &real.gains_br,
                &phases,
                &arrays,
                0,
                wf.delay_span(),
            ),
            Err(Error::SpatialFrequencyOverflow(_))
        ));
    }

    #[test]
    fn observe_block_noiseless_is_exact_projection() {
        let mut rng = StdRng::seed_from_u64(3);
        let h = DMatrix::from_fn(8, 8, |_, _| crandn(&mut rng));
        let f = DMatrix::from_fn(8, 3, |_, _| crandn(&mut rng));
        let w = DMatrix::from_fn(8, 2, |_, _| crandn(&mut rng));
        let y = observe_block(&h, &f, &w, 4.0, 0.0, &mut rng).unwrap();
        let expect = w.adjoint() * &h * &f * Complex64::from(2.0);
        assert!((y - expect).norm() < 1e-12);
    }

    #[test]
    fn observe_block_noise_covariance() {
        // E[(W^H n)(W^H n)^H] = sigma^2 W^H W within 5% over 1e4 draws
        let mut rng = StdRng::seed_from_u64(4);
        let w = DMatrix::from_fn(6, 3, |_, _| crandn(&mut rng));
        let h = DMatrix::zeros(6, 4);
        let f = DMatrix::from_element(4, 1, Complex64::new(1.0, 0.0));
        let sigma2 = 0.8;
        let mut acc = DMatrix::<Complex64>::zeros(3, 3);
        let draws = 10_000;
        for _ in 0..draws {
            let y = observe_block(&h, &f, &w, 1.0, sigma2, &mut rng).unwrap();
            let col = y.column(0).clone_owned();
            acc += &col * col.adjoint();
        }
        acc /= Complex64::from(draws as f64);
        let expect = w.adjoint() * &w * Complex64::from(sigma2);
        let rel = (acc - &expect).norm() / expect.norm();
        assert!(rel < 0.05, "covariance off by {rel}");
    }

    #[test]
    fn observe_block_identity_beams_pass_channel_through() {
        let mut rng = StdRng::seed_from_u64(6);
        let h = DMatrix::from_fn(5, 5, |_, _| crandn(&mut rng));
        let eye = DMatrix::<Complex64>::identity(5, 5);
        let y = observe_block(&h, &eye, &eye, 1.0, 0.0, &mut rng).unwrap();
        assert!((y - h).norm() < 1e-14);
    }

    #[test]
    fn realization_is_reproducible_from_seed() {
        let scene = baseline_scene();
        let arrays = baseline_arrays();
        let wf = baseline_waveform();
        let a = ChannelRealization::draw(&scene, &arrays, &wf, &mut StdRng::seed_from_u64(42))
            .unwrap();
        let b = ChannelRealization::draw(&scene, &arrays, &wf, &mut StdRng::seed_from_u64(42))
            .unwrap();
        for n in 0..10 {
            assert_eq!(a.h_br[n], b.h_br[n]);
            assert_eq!(a.h_rm[n], b.h_rm[n]);
        }
    }

    #[test]
    fn fractional_bandwidth_guard() {
        assert!(WaveformConfig::new(1e9, 100e6, 10, 64, 32, -13.0).is_err());
    }

    #[test]
    fn reference_power_baseline_value() {
        let scene = baseline_scene();
        let arrays = baseline_arrays();
        let wf = baseline_waveform();
        let s = reference_received_power(&scene, &arrays, &wf).unwrap();
        assert_relative_eq!(s, 1.23953177790155e-15, max_relative = 1e-10);
        // snr 0 dB puts the noise floor exactly at the reference power
        let sigma2 = noise_variance_for_snr(0.0, &scene, &arrays, &wf).unwrap();
        assert_relative_eq!(sigma2, s, max_relative = 1e-14);
        // +10 dB drops it tenfold
        let sigma2 = noise_variance_for_snr(10.0, &scene, &arrays, &wf).unwrap();
        assert_relative_eq!(sigma2, s / 10.0, max_relative = 1e-12);
    }
}
