//! Flat `key=value` experiment configuration with per-model defaults, a
//! canonical serialization, and a fingerprint for output headers.

use std::path::PathBuf;

use sha2::{Digest, Sha256};

use crate::bap::{chord_history_depth, NormKind};
use crate::dynamics::ModelSpec;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelChoice {
    Lorenz96,
    Swm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitKind {
    Random,
    Chord,
}

/// Fully resolved experiment parameters. Field defaults are the reference
/// operating point: T = 0.2, dt = 0.01, amplitude 0.015 (Lorenz-96) or
/// 0.035 (shallow water, where the norm defaults to total energy),
/// 100 samples, 1500-step spin-up.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelChoice,
    pub norm: NormKind,
    /// Optimization horizon `T`.
    pub t: f64,
    /// Perturbation amplitude `h`.
    pub amplitude: f64,
    pub init: InitKind,
    /// Block size `l`.
    pub block_size: usize,
    /// Arnoldi loops `m`.
    pub iterations: usize,
    pub samples: usize,
    pub spinup_steps: u64,
    pub window_steps: u64,
    pub seed: u64,
    pub dt: f64,
    /// Lorenz-96 forcing `F`.
    pub forcing: f64,
    /// Lorenz-96 dimension `K`.
    pub l96_dim: usize,
    /// Gravitational acceleration `g`.
    pub gravity: f64,
    pub output_dir: PathBuf,
    /// Growth-curve horizon for `bap-run` (tables integrate to `T` only).
    pub horizon: f64,
    pub l_list: Vec<usize>,
    pub m_list: Vec<usize>,
    pub chord_stride: usize,
    pub chord_span: usize,
    pub measure_wallclock: bool,
}

/// Parsed-but-unresolved configuration; `None` means "use the default".
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    model: Option<ModelChoice>,
    norm: Option<NormKind>,
    t: Option<f64>,
    amplitude: Option<f64>,
    init: Option<InitKind>,
    block_size: Option<usize>,
    iterations: Option<usize>,
    samples: Option<usize>,
    spinup_steps: Option<u64>,
    window_steps: Option<u64>,
    seed: Option<u64>,
    dt: Option<f64>,
    forcing: Option<f64>,
    l96_dim: Option<usize>,
    gravity: Option<f64>,
    output_dir: Option<PathBuf>,
    horizon: Option<f64>,
    l_list: Option<Vec<usize>>,
    m_list: Option<Vec<usize>>,
    chord_stride: Option<usize>,
    chord_span: Option<usize>,
    measure_wallclock: Option<bool>,
}

fn config_err(field: &str, message: impl Into<String>) -> Error {
    Error::Config {
        field: field.into(),
        message: message.into(),
    }
}

fn parse_num<T: std::str::FromStr>(field: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| config_err(field, format!("cannot parse `{value}`")))
}

fn parse_list(field: &str, value: &str) -> Result<Vec<usize>> {
    value
        .split(',')
        .map(|part| parse_num(field, part))
        .collect()
}

impl RawConfig {
    /// Parses the flat file format: `key = value` lines, `#` comments
    /// (full-line or trailing), blank lines ignored, duplicate keys rejected.
    pub fn parse_str(text: &str) -> Result<RawConfig> {
        let mut raw = RawConfig::default();
        let mut seen = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                config_err(
                    "config",
                    format!("line {}: expected `key = value`, got `{line}`", lineno + 1),
                )
            })?;
            let key = key.trim();
            if seen.contains(&key.to_string()) {
                return Err(config_err(key, "duplicate key"));
            }
            seen.push(key.to_string());
            raw.apply(key, value.trim())?;
        }
        Ok(raw)
    }

    /// Applies one `key=value` override, as in `--set`.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "model" => {
                self.model = Some(match value {
                    "lorenz96" => ModelChoice::Lorenz96,
                    "swm" => ModelChoice::Swm,
                    other => {
                        return Err(config_err(
                            "model",
                            format!("expected `lorenz96` or `swm`, got `{other}`"),
                        ))
                    }
                })
            }
            "norm" => {
                self.norm = Some(match value {
                    "euclidean" => NormKind::Euclidean,
                    "total_energy" => NormKind::TotalEnergy,
                    other => {
                        return Err(config_err(
                            "norm",
                            format!("expected `euclidean` or `total_energy`, got `{other}`"),
                        ))
                    }
                })
            }
            "T" => self.t = Some(parse_num("T", value)?),
            "h" => self.amplitude = Some(parse_num("h", value)?),
            "init" => {
                self.init = Some(match value {
                    "random" => InitKind::Random,
                    "chord" => InitKind::Chord,
                    other => {
                        return Err(config_err(
                            "init",
                            format!("expected `random` or `chord`, got `{other}`"),
                        ))
                    }
                })
            }
            "l" => self.block_size = Some(parse_num("l", value)?),
            "m" => self.iterations = Some(parse_num("m", value)?),
            "samples" => self.samples = Some(parse_num("samples", value)?),
            "spinup_steps" => self.spinup_steps = Some(parse_num("spinup_steps", value)?),
            "window_steps" => self.window_steps = Some(parse_num("window_steps", value)?),
            "seed" => self.seed = Some(parse_num("seed", value)?),
            "dt" => self.dt = Some(parse_num("dt", value)?),
            "F" => self.forcing = Some(parse_num("F", value)?),
            "K" => self.l96_dim = Some(parse_num("K", value)?),
            "g" => self.gravity = Some(parse_num("g", value)?),
            "output_dir" => {
                if value.is_empty() {
                    return Err(config_err("output_dir", "must not be empty"));
                }
                self.output_dir = Some(PathBuf::from(value))
            }
            "horizon" => self.horizon = Some(parse_num("horizon", value)?),
            "l_list" => self.l_list = Some(parse_list("l_list", value)?),
            "m_list" => self.m_list = Some(parse_list("m_list", value)?),
            "chord_stride" => self.chord_stride = Some(parse_num("chord_stride", value)?),
            "chord_span" => self.chord_span = Some(parse_num("chord_span", value)?),
            "measure_wallclock" => {
                self.measure_wallclock = Some(match value {
                    "true" => true,
                    "false" => false,
                    other => {
                        return Err(config_err(
                            "measure_wallclock",
                            format!("expected `true` or `false`, got `{other}`"),
                        ))
                    }
                })
            }
            other => return Err(config_err(other, "unknown key")),
        }
        Ok(())
    }

    /// Fills model-dependent defaults and validates everything.
    pub fn resolve(self) -> Result<ExperimentConfig> {
        let model = self.model.unwrap_or(ModelChoice::Lorenz96);
        let swm = model == ModelChoice::Swm;
        let cfg = ExperimentConfig {
            model,
            norm: self.norm.unwrap_or(if swm {
                NormKind::TotalEnergy
            } else {
                NormKind::Euclidean
            }),
            t: self.t.unwrap_or(0.2),
            amplitude: self.amplitude.unwrap_or(if swm { 0.035 } else { 0.015 }),
            init: self.init.unwrap_or(InitKind::Random),
            block_size: self.block_size.unwrap_or(5),
            iterations: self.iterations.unwrap_or(10),
            samples: self.samples.unwrap_or(100),
            spinup_steps: self.spinup_steps.unwrap_or(1500),
            window_steps: self.window_steps.unwrap_or(10000),
            seed: self.seed.unwrap_or(0),
            dt: self.dt.unwrap_or(0.01),
            forcing: self.forcing.unwrap_or(8.0),
            l96_dim: self.l96_dim.unwrap_or(50),
            gravity: self.gravity.unwrap_or(9.81),
            output_dir: self.output_dir.unwrap_or_else(|| PathBuf::from("out")),
            horizon: self.horizon.unwrap_or(1.0),
            l_list: self.l_list.unwrap_or_else(|| {
                if swm {
                    vec![1, 2, 4, 5, 10, 20]
                } else {
                    vec![1, 2, 3, 4, 5]
                }
            }),
            m_list: self.m_list.unwrap_or_else(|| {
                if swm {
                    vec![1, 2, 3, 4, 5, 10, 20, 50]
                } else {
                    vec![1, 2, 3, 4, 5, 7, 10]
                }
            }),
            chord_stride: self.chord_stride.unwrap_or(15),
            chord_span: self.chord_span.unwrap_or(2),
            measure_wallclock: self.measure_wallclock.unwrap_or(false),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl ExperimentConfig {
    pub fn defaults(model: ModelChoice) -> ExperimentConfig {
        let mut raw = RawConfig::default();
        raw.model = Some(model);
        raw.resolve().expect("defaults are valid")
    }

    /// The model spec this configuration describes.
    pub fn model_spec(&self) -> Result<ModelSpec> {
        match self.model {
            ModelChoice::Lorenz96 => ModelSpec::lorenz96(self.l96_dim, self.forcing, self.dt),
            ModelChoice::Swm => ModelSpec::shallow_water(23, 22.0, self.gravity, self.dt),
        }
    }

    pub fn dim(&self) -> usize {
        match self.model {
            ModelChoice::Lorenz96 => self.l96_dim,
            ModelChoice::Swm => 3 * 23 * 23,
        }
    }

    fn validate(&self) -> Result<()> {
        let n = self.dim();
        if self.model == ModelChoice::Lorenz96 && self.l96_dim < 4 {
            return Err(config_err("K", "Lorenz-96 needs at least 4 components"));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(config_err("dt", "must be positive and finite"));
        }
        if !(self.t > 0.0) || !self.t.is_finite() {
            return Err(config_err("T", "must be positive and finite"));
        }
        if !(self.amplitude > 0.0) || !self.amplitude.is_finite() {
            return Err(config_err("h", "must be positive and finite"));
        }
        if !(self.gravity > 0.0) || !self.gravity.is_finite() {
            return Err(config_err("g", "must be positive and finite"));
        }
        if !self.forcing.is_finite() {
            return Err(config_err("F", "must be finite"));
        }
        if self.model == ModelChoice::Lorenz96 && self.norm == NormKind::TotalEnergy {
            return Err(config_err(
                "norm",
                "the total-energy norm is defined for the shallow water model only",
            ));
        }
        if self.samples == 0 {
            return Err(config_err("samples", "must be at least 1"));
        }
        if self.block_size == 0 || self.iterations == 0 {
            return Err(config_err("l", "block size and iterations must be positive"));
        }
        if self.block_size * self.iterations > n {
            return Err(config_err(
                "l",
                format!(
                    "subspace order l*m = {} exceeds the state dimension {n}",
                    self.block_size * self.iterations
                ),
            ));
        }
        if self.l_list.is_empty() || self.m_list.is_empty() {
            return Err(config_err("l_list", "lists must not be empty"));
        }
        if self.l_list.iter().chain(self.m_list.iter()).any(|&x| x == 0) {
            return Err(config_err("l_list", "list entries must be positive"));
        }
        let max_l = *self.l_list.iter().max().expect("nonempty");
        let max_m = *self.m_list.iter().max().expect("nonempty");
        if max_l * max_m > n {
            return Err(config_err(
                "l_list",
                format!("largest table cell l*m = {} exceeds the state dimension {n}", max_l * max_m),
            ));
        }
        if self.chord_stride == 0 || self.chord_span == 0 {
            return Err(config_err("chord_stride", "chord parameters must be positive"));
        }
        if self.spinup_steps < 1500 {
            return Err(config_err("spinup_steps", "must be at least 1500"));
        }
        let depth = chord_history_depth(max_l.max(self.block_size), self.chord_stride, self.chord_span);
        if depth as u64 > self.spinup_steps {
            return Err(config_err(
                "chord_stride",
                format!("chord history needs {depth} steps but spin-up has {}", self.spinup_steps),
            ));
        }
        if !(self.horizon >= self.dt) {
            return Err(config_err("horizon", "must cover at least one step"));
        }
        if self.horizon + 1e-12 < self.t {
            return Err(config_err("horizon", "must reach the optimization time T"));
        }
        Ok(())
    }

    /// Canonical one-line-per-field serialization. The fingerprint hashes
    /// everything that affects the numbers; `output_dir` and
    /// `measure_wallclock` are serialized but excluded from the hash.
    pub fn canonical_string(&self) -> String {
        let model = match self.model {
            ModelChoice::Lorenz96 => "lorenz96",
            ModelChoice::Swm => "swm",
        };
        let norm = match self.norm {
            NormKind::Euclidean => "euclidean",
            NormKind::TotalEnergy => "total_energy",
        };
        let init = match self.init {
            InitKind::Random => "random",
            InitKind::Chord => "chord",
        };
        let list = |v: &[usize]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        format!(
            "model={model}\nnorm={norm}\nT={}\nh={}\ninit={init}\nl={}\nm={}\nsamples={}\n\
             spinup_steps={}\nwindow_steps={}\nseed={}\ndt={}\nF={}\nK={}\ng={}\nhorizon={}\n\
             l_list={}\nm_list={}\nchord_stride={}\nchord_span={}\noutput_dir={}\nmeasure_wallclock={}\n",
            self.t,
            self.amplitude,
            self.block_size,
            self.iterations,
            self.samples,
            self.spinup_steps,
            self.window_steps,
            self.seed,
            self.dt,
            self.forcing,
            self.l96_dim,
            self.gravity,
            self.horizon,
            list(&self.l_list),
            list(&self.m_list),
            self.chord_stride,
            self.chord_span,
            self.output_dir.display(),
            self.measure_wallclock,
        )
    }

    /// First 16 hex digits of the SHA-256 of the numerical fields.
    pub fn fingerprint(&self) -> String {
        let canonical = self.canonical_string();
        let numerical: String = canonical
            .lines()
            .filter(|l| !l.starts_with("output_dir=") && !l.starts_with("measure_wallclock="))
            .collect::<Vec<_>>()
            .join("\n");
        let digest = Sha256::digest(numerical.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_model() {
        let l96 = ExperimentConfig::defaults(ModelChoice::Lorenz96);
        assert_eq!(l96.t, 0.2);
        assert_eq!(l96.amplitude, 0.015);
        assert_eq!(l96.norm, NormKind::Euclidean);
        assert_eq!(l96.samples, 100);
        assert_eq!(l96.spinup_steps, 1500);
        assert_eq!(l96.dim(), 50);

        let swm = ExperimentConfig::defaults(ModelChoice::Swm);
        assert_eq!(swm.amplitude, 0.035);
        assert_eq!(swm.norm, NormKind::TotalEnergy);
        assert_eq!(swm.dim(), 1587);
    }

    #[test]
    fn parse_round_trip_with_comments_and_overrides() {
        let text = "\
# experiment
model = lorenz96
T = 0.3   # longer horizon
l = 2
m_list = 1,2,5
";
        let mut raw = RawConfig::parse_str(text).unwrap();
        raw.apply("seed", "7").unwrap();
        let cfg = raw.resolve().unwrap();
        assert_eq!(cfg.t, 0.3);
        assert_eq!(cfg.block_size, 2);
        assert_eq!(cfg.m_list, vec![1, 2, 5]);
        assert_eq!(cfg.seed, 7);
    }

    #[test]
    fn unknown_and_duplicate_keys_are_config_errors() {
        let err = RawConfig::parse_str("frobnicate = 3\n").unwrap_err();
        match err {
            Error::Config { field, .. } => assert_eq!(field, "frobnicate"),
            other => panic!("expected config error, got {other:?}"),
        }
        assert!(RawConfig::parse_str("seed = 1\nseed = 2\n").is_err());
        assert!(RawConfig::parse_str("just a line\n").is_err());
    }

    #[test]
    fn validation_catches_inconsistent_fields() {
        let cases = [
            ("samples", "0"),
            ("T", "-1"),
            ("h", "0"),
            ("dt", "nan"),
            ("l", "0"),
            ("K", "3"),
            ("spinup_steps", "100"),
            ("horizon", "0.05"),
        ];
        for (key, value) in cases {
            let mut raw = RawConfig::default();
            raw.apply(key, value).unwrap();
            assert!(
                matches!(raw.resolve(), Err(Error::Config { .. })),
                "{key}={value} must fail validation"
            );
        }

        let mut raw = RawConfig::default();
        raw.apply("norm", "total_energy").unwrap();
        assert!(raw.resolve().is_err(), "energy norm needs the swm model");

        let mut raw = RawConfig::default();
        raw.apply("l", "10").unwrap();
        raw.apply("m", "10").unwrap();
        assert!(raw.resolve().is_err(), "l*m = 100 > 50");
    }

    #[test]
    fn fingerprint_tracks_numerical_fields_only() {
        let a = ExperimentConfig::defaults(ModelChoice::Lorenz96);
        let mut b = a.clone();
        b.output_dir = PathBuf::from("elsewhere");
        assert_eq!(a.fingerprint(), b.fingerprint());
        let mut c = a.clone();
        c.seed = 1;
        assert_ne!(a.fingerprint(), c.fingerprint());
        assert_eq!(a.fingerprint().len(), 16);
    }

    #[test]
    fn canonical_string_is_stable() {
        let cfg = ExperimentConfig::defaults(ModelChoice::Lorenz96);
        let again = ExperimentConfig::defaults(ModelChoice::Lorenz96);
        assert_eq!(cfg.canonical_string(), again.canonical_string());
        assert!(cfg.canonical_string().contains("T=0.2\n"));
        assert!(cfg.canonical_string().contains("m_list=1,2,3,4,5,7,10\n"));
    }
}
