//! Run configuration: the reference-deployment defaults, an INI-style
//! parser with precise error reporting, and conversion into the library's
//! scenario and sweep types.

use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use ris_locate::channel::{ArrayConfig, WaveformConfig};
use ris_locate::experiments::{Scenario, SweepSpec, SweepVariable};
use ris_locate::geometry::Scene;
use ris_locate::pipeline::TrialConfig;
use ris_locate::solvers::SolverKind;

/// Everything a run needs, fully resolved. `Default` is the reference
/// deployment; a config file only has to name the fields it changes.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    // [scene]
    pub bs: [f64; 2],
    pub ris: [f64; 2],
    pub ue: [f64; 2],
    pub scatterers_br: Vec<[f64; 2]>,
    pub scatterers_rm: Vec<[f64; 2]>,
    // [arrays]
    pub n_bs: usize,
    pub n_ue: usize,
    pub n_ris: usize,
    pub spacing: f64,
    // [waveform]
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    pub n_subcarriers: usize,
    pub n_blocks: usize,
    pub n_pilots: usize,
    /// Operating SNR in dB; an SNR sweep lists its points under
    /// `[experiment] values` instead.
    pub snr_db: f64,
    pub reflection_loss_db: f64,
    // [solver]
    pub solvers: Vec<SolverKind>,
    pub max_iterations: usize,
    pub convergence_tol: f64,
    pub toa_oversampling: usize,
    // [experiment]
    pub variable: SweepVariable,
    pub values: Vec<f64>,
    pub n_trials: usize,
    pub seed: u64,
    // [output]
    pub directory: PathBuf,
    pub prefix: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            bs: [0.0, 0.0],
            ris: [2.5, 4.0],
            ue: [5.0, 3.0],
            scatterers_br: vec![[1.0, 3.0]],
            scatterers_rm: vec![[4.0, 2.0]],
            n_bs: 8,
            n_ue: 8,
            n_ris: 8,
            spacing: 0.5,
            carrier_hz: 60e9,
            bandwidth_hz: 100e6,
            n_subcarriers: 10,
            n_blocks: 64,
            n_pilots: 32,
            snr_db: 0.0,
            reflection_loss_db: -13.0,
            solvers: vec![SolverKind::Tmsbl],
            max_iterations: 100,
            convergence_tol: 1e-6,
            toa_oversampling: 100,
            variable: SweepVariable::SnrDb,
            values: vec![-20.0, -15.0, -10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0],
            n_trials: 100,
            seed: 1,
            directory: PathBuf::from("."),
            prefix: "ris_locate".to_string(),
        }
    }
}

/// Why a configuration was refused, with enough context to fix it.
#[derive(Debug)]
pub enum ConfigError {
    /// The file could not be read.
    Io { path: PathBuf, source: io::Error },
    /// A line that is neither a section header, a key-value pair, a
    /// comment, nor blank.
    Syntax { line: usize, message: String },
    /// A section header this tool does not recognize.
    UnknownSection { line: usize, section: String },
    /// A key that does not belong to its section.
    UnknownKey {
        line: usize,
        section: &'static str,
        key: String,
    },
    /// A value that does not parse as the key's type.
    InvalidValue {
        line: usize,
        key: String,
        message: String,
    },
    /// A cross-field physical or statistical requirement violated.
    Invariant { message: String },
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io { path, source } => {
                write!(f, "cannot read config {}: {source}", path.display())
            }
            ConfigError::Syntax { line, message } => write!(f, "config line {line}: {message}"),
            ConfigError::UnknownSection { line, section } => {
                write!(f, "config line {line}: unknown section [{section}]")
            }
            ConfigError::UnknownKey { line, section, key } => {
                write!(f, "config line {line}: unknown key `{key}` in section [{section}]")
            }
            ConfigError::InvalidValue { line, key, message } => {
                write!(f, "config line {line}: invalid value for `{key}`: {message}")
            }
            ConfigError::Invariant { message } => write!(f, "invalid configuration: {message}"),
        }
    }
}

impl std::error::Error for ConfigError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            ConfigError::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}

/// Read and parse a config file; `None` yields the reference defaults.
pub fn load_config(path: Option<&Path>) -> Result<RunConfig, ConfigError> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|source| ConfigError::Io {
                path: p.to_path_buf(),
                source,
            })?;
            parse_config(&text)
        }
    }
}

/// Parse INI-style text: `[section]` headers, `key = value` pairs, `#` or
/// `;` comment lines. Unknown sections and keys are rejected by name;
/// values may be wrapped in double quotes.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut cfg = RunConfig::default();
    let mut section: Option<&'static str> = None;
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw_line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let Some(name) = rest.strip_suffix(']') else {
                return Err(ConfigError::Syntax {
                    line: line_no,
                    message: format!("unterminated section header {line:?}"),
                });
            };
            section = Some(match name.trim() {
                "scene" => "scene",
                "arrays" => "arrays",
                "waveform" => "waveform",
                "solver" => "solver",
                "experiment" => "experiment",
                "output" => "output",
                other => {
                    return Err(ConfigError::UnknownSection {
                        line: line_no,
                        section: other.to_string(),
                    })
                }
            });
            continue;
        }
        let Some((key_raw, value_raw)) = line.split_once('=') else {
            return Err(ConfigError::Syntax {
                line: line_no,
                message: format!("expected `key = value` or `[section]`, got {line:?}"),
            });
        };
        let key = key_raw.trim();
        let value = unquote(value_raw.trim());
        let Some(section) = section else {
            return Err(ConfigError::Syntax {
                line: line_no,
                message: format!("key `{key}` appears before any [section] header"),
            });
        };
        apply_key(&mut cfg, section, key, value, line_no)?;
    }
    Ok(cfg)
}

impl RunConfig {
    /// Check everything a single key-level parse cannot: geometry, array,
    /// and waveform invariants plus cross-field experiment requirements.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.scenario()?;
        if self.solvers.is_empty() {
            return Err(invariant("at least one solver is required"));
        }
        if self.solvers.contains(&SolverKind::DcsSomp) {
            return Err(invariant(
                "dcs_somp drives the first-stage beam scan and cannot be swept; \
                 pick sbl, gsbl, tmsbl, omp, or amp",
            ));
        }
        if self.values.is_empty() {
            return Err(invariant("experiment values must not be empty"));
        }
        if self.n_trials == 0 {
            return Err(invariant("n_trials must be at least 1"));
        }
        if self.max_iterations == 0 {
            return Err(invariant("max_iterations must be at least 1"));
        }
        if !(self.convergence_tol > 0.0 && self.convergence_tol.is_finite()) {
            return Err(invariant("convergence_tol must be a positive finite number"));
        }
        if self.toa_oversampling == 0 {
            return Err(invariant("toa_oversampling must be at least 1"));
        }
        if self.snr_db.is_nan() {
            return Err(invariant("snr_db must not be NaN"));
        }
        if self.prefix.is_empty() {
            return Err(invariant("output prefix must not be empty"));
        }
        match self.variable {
            SweepVariable::NBlocks | SweepVariable::NElements => {
                for &v in &self.values {
                    if v.fract() != 0.0 || v < 1.0 {
                        return Err(invariant(&format!(
                            "sweep values for {} must be positive integers, got {v}",
                            self.variable.name()
                        )));
                    }
                }
            }
            SweepVariable::RisPosition => {
                if self.values.iter().any(|v| !v.is_finite()) {
                    return Err(invariant("surface positions must be finite"));
                }
            }
            SweepVariable::SnrDb => {
                if self.values.iter().any(|v| v.is_nan()) {
                    return Err(invariant("SNR sweep values must not be NaN"));
                }
            }
        }
        Ok(())
    }

    /// The fixed operating point described by this config.
    pub fn scenario(&self) -> Result<Scenario, ConfigError> {
        let scene = Scene::new(
            self.bs,
            self.ris,
            self.ue,
            self.scatterers_br.clone(),
            self.scatterers_rm.clone(),
        )
        .map_err(lib_invariant)?;
        let arrays =
            ArrayConfig::new(self.n_bs, self.n_ue, self.n_ris, self.spacing).map_err(lib_invariant)?;
        let waveform = WaveformConfig::new(
            self.carrier_hz,
            self.bandwidth_hz,
            self.n_subcarriers,
            self.n_blocks,
            self.n_pilots,
            self.reflection_loss_db,
        )
        .map_err(lib_invariant)?;
        Ok(Scenario {
            scene,
            arrays,
            waveform,
            trial: TrialConfig {
                snr_db: self.snr_db,
                max_iterations: self.max_iterations,
                convergence_tol: self.convergence_tol,
                toa_oversampling: self.toa_oversampling,
            },
        })
    }

    /// The full sweep described by this config.
    pub fn sweep_spec(&self) -> Result<SweepSpec, ConfigError> {
        self.validate()?;
        Ok(SweepSpec {
            variable: self.variable,
            values: self.values.clone(),
            solvers: self.solvers.clone(),
            n_trials: self.n_trials,
            base: self.scenario()?,
            seed: self.seed,
        })
    }

    /// Render the resolved configuration in the same INI dialect
    /// [`parse_config`] accepts, so the echo can be fed back in.
    pub fn to_ini(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        writeln!(s, "[scene]").unwrap();
        writeln!(s, "bs = {}", point(self.bs)).unwrap();
        writeln!(s, "ris = {}", point(self.ris)).unwrap();
        writeln!(s, "ue = {}", point(self.ue)).unwrap();
        writeln!(s, "scatterers_br = {}", points(&self.scatterers_br)).unwrap();
        writeln!(s, "scatterers_rm = {}", points(&self.scatterers_rm)).unwrap();
        writeln!(s).unwrap();
        writeln!(s, "[arrays]").unwrap();
        writeln!(s, "n_bs = {}", self.n_bs).unwrap();
        writeln!(s, "n_ue = {}", self.n_ue).unwrap();
        writeln!(s, "n_ris = {}", self.n_ris).unwrap();
        writeln!(s, "spacing = {}", self.spacing).unwrap();
        writeln!(s).unwrap();
        writeln!(s, "[waveform]").unwrap();
        writeln!(s, "carrier_hz = {}", self.carrier_hz).unwrap();
        writeln!(s, "bandwidth_hz = {}", self.bandwidth_hz).unwrap();
        writeln!(s, "n_subcarriers = {}", self.n_subcarriers).unwrap();
        writeln!(s, "n_blocks = {}", self.n_blocks).unwrap();
        writeln!(s, "n_pilots = {}", self.n_pilots).unwrap();
        writeln!(s, "snr_db = {}", self.snr_db).unwrap();
        writeln!(s, "reflection_loss_db = {}", self.reflection_loss_db).unwrap();
        writeln!(s).unwrap();
        writeln!(s, "[solver]").unwrap();
        let names: Vec<&str> = self.solvers.iter().map(|k| k.name()).collect();
        writeln!(s, "solvers = {}", names.join(", ")).unwrap();
        writeln!(s, "max_iterations = {}", self.max_iterations).unwrap();
        writeln!(s, "convergence_tol = {}", self.convergence_tol).unwrap();
        writeln!(s, "toa_oversampling = {}", self.toa_oversampling).unwrap();
        writeln!(s).unwrap();
        writeln!(s, "[experiment]").unwrap();
        writeln!(s, "variable = {}", self.variable.name()).unwrap();
        writeln!(s, "values = {}", floats(&self.values)).unwrap();
        writeln!(s, "n_trials = {}", self.n_trials).unwrap();
        writeln!(s, "seed = {}", self.seed).unwrap();
        writeln!(s).unwrap();
        writeln!(s, "[output]").unwrap();
        writeln!(s, "directory = {}", self.directory.display()).unwrap();
        writeln!(s, "prefix = {}", self.prefix).unwrap();
        s
    }
}

fn apply_key(
    cfg: &mut RunConfig,
    section: &'static str,
    key: &str,
    value: &str,
    line: usize,
) -> Result<(), ConfigError> {
    match (section, key) {
        ("scene", "bs") => cfg.bs = parse_point(value, key, line)?,
        ("scene", "ris") => cfg.ris = parse_point(value, key, line)?,
        ("scene", "ue") => cfg.ue = parse_point(value, key, line)?,
        ("scene", "scatterers_br") => cfg.scatterers_br = parse_points(value, key, line)?,
        ("scene", "scatterers_rm") => cfg.scatterers_rm = parse_points(value, key, line)?,
        ("arrays", "n_bs") => cfg.n_bs = parse_usize(value, key, line)?,
        ("arrays", "n_ue") => cfg.n_ue = parse_usize(value, key, line)?,
        ("arrays", "n_ris") => cfg.n_ris = parse_usize(value, key, line)?,
        ("arrays", "spacing") => cfg.spacing = parse_f64(value, key, line)?,
        ("waveform", "carrier_hz") => cfg.carrier_hz = parse_f64(value, key, line)?,
        ("waveform", "bandwidth_hz") => cfg.bandwidth_hz = parse_f64(value, key, line)?,
        ("waveform", "n_subcarriers") => cfg.n_subcarriers = parse_usize(value, key, line)?,
        ("waveform", "n_blocks") => cfg.n_blocks = parse_usize(value, key, line)?,
        ("waveform", "n_pilots") => cfg.n_pilots = parse_usize(value, key, line)?,
        ("waveform", "snr_db") => cfg.snr_db = parse_f64(value, key, line)?,
        ("waveform", "reflection_loss_db") => cfg.reflection_loss_db = parse_f64(value, key, line)?,
        ("solver", "solvers") => cfg.solvers = parse_solvers(value, key, line)?,
        ("solver", "max_iterations") => cfg.max_iterations = parse_usize(value, key, line)?,
        ("solver", "convergence_tol") => cfg.convergence_tol = parse_f64(value, key, line)?,
        ("solver", "toa_oversampling") => cfg.toa_oversampling = parse_usize(value, key, line)?,
        ("experiment", "variable") => {
            cfg.variable = SweepVariable::parse(value).map_err(|e| ConfigError::InvalidValue {
                line,
                key: key.to_string(),
                message: e.to_string(),
            })?
        }
        ("experiment", "values") => cfg.values = parse_f64_list(value, key, line)?,
        ("experiment", "n_trials") => cfg.n_trials = parse_usize(value, key, line)?,
        ("experiment", "seed") => cfg.seed = parse_u64(value, key, line)?,
        ("output", "directory") => cfg.directory = PathBuf::from(value),
        ("output", "prefix") => cfg.prefix = value.to_string(),
        _ => {
            return Err(ConfigError::UnknownKey {
                line,
                section,
                key: key.to_string(),
            })
        }
    }
    Ok(())
}

fn unquote(s: &str) -> &str {
    s.strip_prefix('"')
        .and_then(|inner| inner.strip_suffix('"'))
        .unwrap_or(s)
}

fn invalid(key: &str, line: usize, message: String) -> ConfigError {
    ConfigError::InvalidValue {
        line,
        key: key.to_string(),
        message,
    }
}

fn invariant(message: &str) -> ConfigError {
    ConfigError::Invariant {
        message: message.to_string(),
    }
}

fn lib_invariant(e: ris_locate::Error) -> ConfigError {
    ConfigError::Invariant {
        message: e.to_string(),
    }
}

fn parse_f64(value: &str, key: &str, line: usize) -> Result<f64, ConfigError> {
    value
        .parse()
        .map_err(|_| invalid(key, line, format!("expected a number, got {value:?}")))
}

fn parse_usize(value: &str, key: &str, line: usize) -> Result<usize, ConfigError> {
    value.parse().map_err(|_| {
        invalid(
            key,
            line,
            format!("expected a non-negative integer, got {value:?}"),
        )
    })
}

fn parse_u64(value: &str, key: &str, line: usize) -> Result<u64, ConfigError> {
    value.parse().map_err(|_| {
        invalid(
            key,
            line,
            format!("expected a non-negative integer, got {value:?}"),
        )
    })
}

fn parse_point(value: &str, key: &str, line: usize) -> Result<[f64; 2], ConfigError> {
    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return Err(invalid(
            key,
            line,
            format!("expected two comma-separated coordinates, got {value:?}"),
        ));
    }
    Ok([
        parse_f64(parts[0], key, line)?,
        parse_f64(parts[1], key, line)?,
    ])
}

fn parse_points(value: &str, key: &str, line: usize) -> Result<Vec<[f64; 2]>, ConfigError> {
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value
        .split(';')
        .map(|p| parse_point(p.trim(), key, line))
        .collect()
}

fn parse_f64_list(value: &str, key: &str, line: usize) -> Result<Vec<f64>, ConfigError> {
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value
        .split(',')
        .map(|v| parse_f64(v.trim(), key, line))
        .collect()
}

fn parse_solvers(value: &str, key: &str, line: usize) -> Result<Vec<SolverKind>, ConfigError> {
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value
        .split(',')
        .map(|name| {
            let name = name.trim();
            SolverKind::parse(name).ok_or_else(|| {
                invalid(
                    key,
                    line,
                    format!(
                        "unknown solver {name:?} (expected dcs_somp, sbl, gsbl, tmsbl, omp, or amp)"
                    ),
                )
            })
        })
        .collect()
}

fn point(p: [f64; 2]) -> String {
    format!("{}, {}", p[0], p[1])
}

fn points(ps: &[[f64; 2]]) -> String {
    ps.iter()
        .map(|p| point(*p))
        .collect::<Vec<_>>()
        .join(" ; ")
}

fn floats(v: &[f64]) -> String {
    v.iter()
        .map(f64::to_string)
        .collect::<Vec<_>>()
        .join(", ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_the_reference_deployment() {
        let cfg = parse_config("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        cfg.validate().unwrap();
    }

    #[test]
    fn single_override_keeps_other_defaults() {
        let cfg = parse_config("[arrays]\nn_ris = 16\n").unwrap();
        assert_eq!(cfg.n_ris, 16);
        let expected = RunConfig {
            n_ris: 16,
            ..RunConfig::default()
        };
        assert_eq!(cfg, expected);
    }

    #[test]
    fn type_errors_name_the_key_and_line() {
        let err = parse_config("[waveform]\nreflection_loss_db = \"abc\"\n").unwrap_err();
        match err {
            ConfigError::InvalidValue { line, key, .. } => {
                assert_eq!(line, 2);
                assert_eq!(key, "reflection_loss_db");
            }
            other => panic!("wrong error category: {other:?}"),
        }
    }

    #[test]
    fn unknown_key_is_rejected_by_name() {
        let err = parse_config("[arrays]\nn_rows = 3\n").unwrap_err();
        match &err {
            ConfigError::UnknownKey { key, section, .. } => {
                assert_eq!(key, "n_rows");
                assert_eq!(*section, "arrays");
            }
            other => panic!("wrong error category: {other:?}"),
        }
        assert!(err.to_string().contains("n_rows"));
    }

    #[test]
    fn unknown_section_is_rejected() {
        let err = parse_config("[antennas]\nn = 4\n").unwrap_err();
        assert!(matches!(err, ConfigError::UnknownSection { line: 1, .. }));
    }

    #[test]
    fn syntax_errors_carry_the_line_number() {
        let err = parse_config("[arrays]\nwhat is this\n").unwrap_err();
        assert!(matches!(err, ConfigError::Syntax { line: 2, .. }));
    }

    #[test]
    fn keys_before_any_section_are_rejected() {
        let err = parse_config("n_ris = 16\n").unwrap_err();
        assert!(matches!(err, ConfigError::Syntax { line: 1, .. }));
    }

    #[test]
    fn fractional_bandwidth_limit_is_enforced() {
        let cfg = parse_config("[waveform]\nbandwidth_hz = 3.1e9\n").unwrap();
        let err = cfg.validate().unwrap_err();
        match err {
            ConfigError::Invariant { message } => {
                assert!(message.contains("fractional bandwidth"), "{message}");
            }
            other => panic!("wrong error category: {other:?}"),
        }
    }

    #[test]
    fn stage_one_scanner_cannot_be_swept() {
        let cfg = parse_config("[solver]\nsolvers = dcs_somp\n").unwrap();
        let err = cfg.validate().unwrap_err();
        assert!(matches!(err, ConfigError::Invariant { .. }));
        assert!(err.to_string().contains("dcs_somp"));
    }

    #[test]
    fn default_round_trips_through_ini() {
        let cfg = RunConfig::default();
        let reparsed = parse_config(&cfg.to_ini()).unwrap();
        assert_eq!(cfg, reparsed);
    }

    #[test]
    fn scatterer_lists_parse_including_empty() {
        let cfg = parse_config(
            "[scene]\nscatterers_br = 0.5, 0.5 ; 1.5, 2.5\nscatterers_rm =\n",
        )
        .unwrap();
        assert_eq!(cfg.scatterers_br, vec![[0.5, 0.5], [1.5, 2.5]]);
        assert!(cfg.scatterers_rm.is_empty());
        cfg.validate().unwrap();
    }

    #[test]
    fn solver_lists_parse() {
        let cfg = parse_config("[solver]\nsolvers = tmsbl, gsbl, omp\n").unwrap();
        assert_eq!(
            cfg.solvers,
            vec![SolverKind::Tmsbl, SolverKind::Gsbl, SolverKind::Omp]
        );
        let err = parse_config("[solver]\nsolvers = tmsbl, bogus\n").unwrap_err();
        assert!(err.to_string().contains("bogus"));
    }

    #[test]
    fn integer_sweep_variables_reject_fractional_values() {
        let ok = parse_config("[experiment]\nvariable = n_blocks\nvalues = 16, 32\n").unwrap();
        ok.validate().unwrap();
        let bad = parse_config("[experiment]\nvariable = n_blocks\nvalues = 2.5\n").unwrap();
        assert!(bad.validate().is_err());
    }

    #[test]
    fn missing_file_is_an_io_error() {
        let err = load_config(Some(Path::new("/nonexistent/run.ini"))).unwrap_err();
        assert!(matches!(err, ConfigError::Io { .. }));
    }
}
