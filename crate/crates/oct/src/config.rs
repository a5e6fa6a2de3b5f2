//! Declarative run configuration in TOML.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use jc_core::controls::{ChannelGuess, Gaussian};
use jc_core::ensemble::{Effect, EnsembleSpec, ModeGeometry, NoiseSpec, Quadrature};
use jc_core::targets::{cat_truncation, HEADROOM};
use jc_core::{
    even_cat_target, fock_superposition_target, fock_target, initial_state, Channel, Complexity, ControlSet,
    FunctionalWeights, GuessSpec, InitialSpec, OptimizationConfig, Shape, StateVector, SystemParams, TargetSpec,
    TimeGrid, C64,
};
use serde::{Deserialize, Serialize};

use crate::formats::{read_pulse, sha256_hex, PulseData};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Parse(#[from] toml::de::Error),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] jc_core::Error),
    #[error("{path}: {source}")]
    Pulse {
        path: PathBuf,
        source: crate::formats::FormatError,
    },
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid(msg.into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub system: SystemSection,
    pub grid: GridSection,
    #[serde(default)]
    pub initial: InitialSection,
    pub target: TargetSection,
    #[serde(default)]
    pub channels: ChannelsSection,
    #[serde(default)]
    pub weights: WeightsSection,
    #[serde(default)]
    pub stopping: StoppingSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<EnsembleSection>,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    #[serde(default = "default_g")]
    pub g_khz: f64,
    #[serde(default)]
    pub detuning_khz: f64,
    pub n_max: usize,
    /// Population allowed in the top two Fock levels; 0 disables the check.
    #[serde(default = "default_leakage")]
    pub leakage_limit: f64,
}

fn default_g() -> f64 {
    50.0
}

fn default_leakage() -> f64 {
    jc_core::state::LEAKAGE_LIMIT
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub duration_us: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt_us: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_steps: Option<usize>,
}

/// Atom state `cos θ|g⟩ + e^{iφ} sin θ|e⟩` times the Fock state `fock`.
/// `atom` names a preset: `g`, `e`, `g+e`, `g-e`, `g+ie`, `g-ie`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub atom: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_over_pi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi_over_pi: Option<f64>,
    #[serde(default)]
    pub fock: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSection {
    /// `fock:n`, `sup0n:n` or `evencat:re,im`.
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelsSection {
    /// Guess preset: `fock4`, `sup02` or `cat`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    /// Pulse file used as the guess, relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pulse_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub atom: Option<ChannelSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cavity: Option<ChannelSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stark: Option<ChannelSection>,
}

/// Gaussian guess for one channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    #[serde(default = "default_enabled")]
    pub enabled: bool,
    #[serde(default = "default_complexity")]
    pub complexity: String,
    #[serde(default)]
    pub amplitude_khz: f64,
    #[serde(default = "default_sigma")]
    pub sigma_us: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center_us: Option<f64>,
}

fn default_enabled() -> bool {
    true
}

fn default_complexity() -> String {
    "real".into()
}

fn default_sigma() -> f64 {
    5.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsSection {
    #[serde(default = "one")]
    pub lambda_atom: f64,
    #[serde(default = "one")]
    pub lambda_cavity: f64,
    #[serde(default = "one")]
    pub lambda_stark: f64,
    /// `sin2` or `constant`.
    #[serde(default = "default_shape")]
    pub shape: String,
    #[serde(default = "one")]
    pub shape_value: f64,
}

fn one() -> f64 {
    1.0
}

fn default_shape() -> String {
    "sin2".into()
}

impl Default for WeightsSection {
    fn default() -> Self {
        Self {
            lambda_atom: 1.0,
            lambda_cavity: 1.0,
            lambda_stark: 1.0,
            shape: default_shape(),
            shape_value: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoppingSection {
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default = "default_stop_infidelity")]
    pub stop_infidelity: f64,
    #[serde(default = "default_stop_delta")]
    pub stop_delta_j: f64,
}

fn default_max_iterations() -> usize {
    1000
}

fn default_stop_infidelity() -> f64 {
    1e-4
}

fn default_stop_delta() -> f64 {
    1e-9
}

impl Default for StoppingSection {
    fn default() -> Self {
        Self {
            max_iterations: default_max_iterations(),
            stop_infidelity: default_stop_infidelity(),
            stop_delta_j: default_stop_delta(),
        }
    }
}

/// Perturbed system copies. Listed effects get default ranges unless overridden.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSection {
    /// Any of `coupling`, `crosstalk`, `frequency`, `digitization`.
    #[serde(default = "all_effects")]
    pub effects: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g0_khz: Option<f64>,
    #[serde(default = "default_waist")]
    pub waist_mm: f64,
    #[serde(default = "default_wavelength")]
    pub wavelength_mm: f64,
    #[serde(default = "default_velocity")]
    pub velocity_mm_per_us: f64,
    #[serde(default)]
    pub center_mm: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position_offsets_mm: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crosstalk_values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frequency_offsets_khz: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_amplitude_khz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_block_us: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_seeds: Option<Vec<u64>>,
    /// Fock truncation for ensembles with cross-talk copies, which displace the cavity far.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crosstalk_n_max: Option<usize>,
    /// Robust runs stop when the mean J_τ changes by less than this.
    #[serde(default = "default_ensemble_delta")]
    pub stop_delta_j: f64,
    #[serde(default)]
    pub quadrature: QuadratureSection,
}

fn default_ensemble_delta() -> f64 {
    1e-6
}

fn all_effects() -> Vec<String> {
    ["coupling", "crosstalk", "frequency", "digitization"]
        .map(String::from)
        .to_vec()
}

fn default_waist() -> f64 {
    6.0
}

fn default_wavelength() -> f64 {
    5.87
}

fn default_velocity() -> f64 {
    0.06
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSection {
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default = "default_noise_samples")]
    pub noise_samples: usize,
    #[serde(default = "default_quadrature_seed")]
    pub seed: u64,
}

fn default_points() -> usize {
    Quadrature::default().points
}

fn default_noise_samples() -> usize {
    Quadrature::default().noise_samples
}

fn default_quadrature_seed() -> u64 {
    Quadrature::default().seed
}

impl Default for QuadratureSection {
    fn default() -> Self {
        Self {
            points: default_points(),
            noise_samples: default_noise_samples(),
            seed: default_quadrature_seed(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
}

pub fn parse_effect(name: &str) -> Result<Effect, ConfigError> {
    match name {
        "coupling" | "i-ii" => Ok(Effect::Coupling),
        "crosstalk" | "iii" => Ok(Effect::CrossTalk),
        "frequency" | "iv" => Ok(Effect::CavityFrequency),
        "digitization" | "v" => Ok(Effect::Digitization),
        other => invalid(format!(
            "unknown ensemble effect '{other}' (expected coupling, crosstalk, frequency or digitization)"
        )),
    }
}

/// Parses `fock:n`, `sup0n:n` or `evencat:re,im`.
pub fn parse_target(name: &str, n_max: usize) -> Result<TargetSpec, ConfigError> {
    let (kind, arg) = name.split_once(':').ok_or_else(|| {
        ConfigError::Invalid(format!(
            "target '{name}' must look like fock:n, sup0n:n or evencat:re,im"
        ))
    })?;
    let level = |s: &str| {
        s.trim()
            .parse::<usize>()
            .map_err(|_| ConfigError::Invalid(format!("target '{name}': '{s}' is not a Fock level")))
    };
    match kind.trim() {
        "fock" => Ok(fock_target(level(arg)?, n_max)?),
        "sup0n" => Ok(fock_superposition_target(level(arg)?, n_max)?),
        "evencat" => {
            let (re, im) = arg
                .split_once(',')
                .ok_or_else(|| ConfigError::Invalid(format!("target '{name}': expected evencat:re,im")))?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| ConfigError::Invalid(format!("target '{name}': '{s}' is not a number")))
            };
            let alpha = C64::new(parse(re)?, parse(im)?);
            let needed = cat_truncation(alpha);
            if n_max + HEADROOM < needed {
                return invalid(format!(
                    "target '{name}' needs n_max >= {} to hold the cat state, got {n_max}",
                    needed - HEADROOM
                ));
            }
            Ok(even_cat_target(alpha, n_max)?)
        }
        other => invalid(format!(
            "unknown target kind '{other}' (expected fock, sup0n or evencat)"
        )),
    }
}

fn parse_complexity(s: &str) -> Result<Complexity, ConfigError> {
    match s {
        "real" => Ok(Complexity::Real),
        "complex" => Ok(Complexity::Complex),
        other => invalid(format!("channel complexity must be 'real' or 'complex', got '{other}'")),
    }
}

fn guess_preset(name: &str) -> Result<GuessSpec, ConfigError> {
    match name {
        "fock4" => Ok(GuessSpec::fock4()),
        "sup02" => Ok(GuessSpec::sup02()),
        "cat" => Ok(GuessSpec::cat()),
        "none" => Ok(GuessSpec::default()),
        other => invalid(format!(
            "unknown channel preset '{other}' (expected fock4, sup02, cat or none)"
        )),
    }
}

/// A validated configuration together with the quantities derived from it.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: RunConfig,
    pub config_sha256: String,
    pub base_dir: PathBuf,
    pub params: SystemParams,
    pub grid: TimeGrid,
    pub initial: StateVector,
    pub target: TargetSpec,
    pub guess_spec: GuessSpec,
    pub guess: ControlSet,
    pub weights: FunctionalWeights,
    pub leakage_limit: Option<f64>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    /// Canonical TOML of the effective configuration, without the output location.
    pub fn canonical(&self) -> String {
        let mut c = self.clone();
        c.output = OutputSection::default();
        toml::to_string(&c).expect("run config always serializes")
    }

    pub fn sha256(&self) -> String {
        sha256_hex(self.canonical().as_bytes())
    }

    pub fn system_params(&self) -> Result<SystemParams, ConfigError> {
        let s = &self.system;
        Ok(SystemParams::new(s.g_khz, s.detuning_khz, s.n_max)?)
    }

    pub fn time_grid(&self) -> Result<TimeGrid, ConfigError> {
        let g = &self.grid;
        match (g.dt_us, g.n_steps) {
            (Some(dt), None) => Ok(TimeGrid::with_dt(g.duration_us, dt)?),
            (None, Some(n)) => Ok(TimeGrid::new(g.duration_us, n)?),
            _ => invalid("[grid] needs exactly one of dt_us and n_steps"),
        }
    }

    pub fn initial_spec(&self) -> Result<InitialSpec, ConfigError> {
        let i = &self.initial;
        let mut spec = match (&i.atom, i.theta_over_pi, i.phi_over_pi) {
            (Some(_), Some(_), _) | (Some(_), _, Some(_)) => {
                return invalid("[initial] takes either atom or theta_over_pi/phi_over_pi, not both")
            }
            (Some(name), None, None) => match name.as_str() {
                "g" => InitialSpec::ground(),
                "e" => InitialSpec::excited(),
                "g+e" => InitialSpec::balanced(0.0),
                "g-e" => InitialSpec::balanced(PI),
                "g+ie" => InitialSpec::balanced(0.5 * PI),
                "g-ie" => InitialSpec::balanced(-0.5 * PI),
                other => {
                    return invalid(format!(
                        "unknown initial atom state '{other}' (expected g, e, g+e, g-e, g+ie, g-ie)"
                    ))
                }
            },
            (None, theta, phi) => InitialSpec::new(theta.unwrap_or(0.0) * PI, phi.unwrap_or(0.0) * PI),
        };
        spec.fock = i.fock;
        Ok(spec)
    }

    pub fn functional_weights(&self) -> Result<FunctionalWeights, ConfigError> {
        let w = &self.weights;
        let shape = match w.shape.as_str() {
            "sin2" => Shape::SinSquared,
            "constant" => Shape::Constant(w.shape_value),
            other => return invalid(format!("weights.shape must be 'sin2' or 'constant', got '{other}'")),
        };
        let weights = FunctionalWeights {
            lambda: [w.lambda_atom, w.lambda_cavity, w.lambda_stark],
            shape: [shape; 3],
        };
        weights.validate()?;
        Ok(weights)
    }

    pub fn guess_spec(&self) -> Result<GuessSpec, ConfigError> {
        let c = &self.channels;
        let mut spec = match &c.preset {
            Some(p) => guess_preset(p)?,
            None => GuessSpec::default(),
        };
        for (ch, section) in [
            (Channel::Atom, &c.atom),
            (Channel::Cavity, &c.cavity),
            (Channel::Stark, &c.stark),
        ] {
            let Some(s) = section else { continue };
            let guess = if s.enabled {
                if !(s.sigma_us > 0.0) || !s.amplitude_khz.is_finite() {
                    return invalid(format!(
                        "[channels.{}] needs sigma_us > 0 and a finite amplitude",
                        ch.name()
                    ));
                }
                Some(ChannelGuess {
                    complexity: parse_complexity(&s.complexity)?,
                    shape: Gaussian {
                        amplitude: s.amplitude_khz,
                        sigma: s.sigma_us,
                        center: s.center_us,
                    },
                })
            } else {
                None
            };
            match ch {
                Channel::Atom => spec.atom = guess,
                Channel::Cavity => spec.cavity = guess,
                Channel::Stark => spec.stark = guess,
            }
        }
        Ok(spec)
    }

    pub fn ensemble_spec(&self) -> Result<Option<EnsembleSpec>, ConfigError> {
        let Some(e) = &self.ensemble else { return Ok(None) };
        let mut spec = EnsembleSpec::nominal();
        spec.geometry = ModeGeometry {
            g0: e.g0_khz.unwrap_or(self.system.g_khz),
            waist: e.waist_mm,
            wavelength: e.wavelength_mm,
            center: e.center_mm,
            velocity: e.velocity_mm_per_us,
        };
        for name in &e.effects {
            spec = spec.with_effect(parse_effect(name)?, self.seed);
        }
        let enabled = |on: bool, key: &str| {
            if on {
                Ok(())
            } else {
                invalid(format!(
                    "[ensemble] {key} is set but its effect is not listed in effects"
                ))
            }
        };
        if let Some(v) = &e.position_offsets_mm {
            enabled(spec.positions.is_some(), "position_offsets_mm")?;
            spec.positions = Some(v.clone());
        }
        if let Some(v) = &e.crosstalk_values {
            enabled(spec.crosstalk.is_some(), "crosstalk_values")?;
            spec.crosstalk = Some(v.clone());
        }
        if let Some(v) = &e.frequency_offsets_khz {
            enabled(spec.frequency_offsets.is_some(), "frequency_offsets_khz")?;
            spec.frequency_offsets = Some(v.clone());
        }
        if e.noise_amplitude_khz.is_some() || e.noise_block_us.is_some() || e.noise_seeds.is_some() {
            enabled(spec.noise.is_some(), "noise_*")?;
        }
        if let Some(noise) = &mut spec.noise {
            let d = NoiseSpec::new(self.seed);
            *noise = NoiseSpec {
                amplitude: e.noise_amplitude_khz.unwrap_or(d.amplitude),
                block: e.noise_block_us.unwrap_or(d.block),
                seeds: e.noise_seeds.clone().unwrap_or(d.seeds),
            };
        }
        spec.validate()?;
        Ok(Some(spec))
    }

    pub fn quadrature(&self) -> Quadrature {
        let q = self.ensemble.as_ref().map(|e| e.quadrature.clone()).unwrap_or_default();
        Quadrature {
            points: q.points,
            noise_samples: q.noise_samples,
            seed: q.seed,
        }
    }

    /// Validates every section and builds the model objects. `base_dir` anchors relative paths.
    pub fn resolve(self, base_dir: &Path) -> Result<Resolved, ConfigError> {
        let params = self.system_params()?;
        let grid = self.time_grid()?;
        let initial = initial_state(&self.initial_spec()?, &params)?;
        let target = parse_target(&self.target.name, params.n_max)?;
        let weights = self.functional_weights()?;
        let guess_spec = self.guess_spec()?;
        let leakage = self.system.leakage_limit;
        if !(leakage >= 0.0) {
            return invalid("system.leakage_limit must be >= 0");
        }
        let s = &self.stopping;
        if s.max_iterations == 0 || !(s.stop_infidelity >= 0.0) || !(s.stop_delta_j >= 0.0) {
            return invalid("[stopping] needs max_iterations > 0 and non-negative thresholds");
        }
        self.ensemble_spec()?;
        if self.ensemble.as_ref().is_some_and(|e| !(e.stop_delta_j > 0.0)) {
            return invalid("ensemble.stop_delta_j must be positive");
        }
        let guess = match &self.channels.pulse_file {
            Some(file) => {
                let path = base_dir.join(file);
                let data = load_pulse(&path)?;
                check_pulse_grid(&data, &grid)?;
                let layout = Channel::ALL.map(|ch| {
                    guess_spec
                        .get(ch)
                        .map(|g| g.complexity)
                        .or(data.inferred_layout()[ch.index()])
                });
                data.controls(layout)?
            }
            None => guess_spec.build(&grid)?,
        };
        let config_sha256 = self.sha256();
        let resolved = Resolved {
            config: self,
            config_sha256,
            base_dir: base_dir.to_path_buf(),
            params,
            grid,
            initial,
            target,
            guess_spec,
            guess,
            weights,
            leakage_limit: (leakage > 0.0).then_some(leakage),
        };
        resolved.optimization_config().validate(&resolved.grid)?;
        Ok(resolved)
    }
}

pub fn load_pulse(path: &Path) -> Result<PulseData, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_pulse(&text).map_err(|source| ConfigError::Pulse {
        path: path.to_path_buf(),
        source,
    })
}

pub fn check_pulse_grid(data: &PulseData, grid: &TimeGrid) -> Result<(), ConfigError> {
    if data.n_steps() != grid.n_steps() || (data.dt - grid.dt()).abs() > 1e-12 * grid.dt() {
        return invalid(format!(
            "pulse grid (n = {}, dt = {} us) does not match the config grid (n = {}, dt = {} us)",
            data.n_steps(),
            data.dt,
            grid.n_steps(),
            grid.dt()
        ));
    }
    Ok(())
}

impl Resolved {
    pub fn optimization_config(&self) -> OptimizationConfig {
        let s = &self.config.stopping;
        let mut c = OptimizationConfig::new(self.weights, self.guess.clone());
        c.max_iterations = s.max_iterations;
        c.stop_infidelity = s.stop_infidelity;
        c.stop_delta_j = s.stop_delta_j;
        c
    }

    /// The problem at Fock truncation `n_max`; the pulse grid and guess are unchanged.
    pub fn with_n_max(&self, n_max: usize) -> Result<Resolved, ConfigError> {
        let mut params = self.params;
        params.n_max = n_max;
        params.validate()?;
        let mut out = self.clone();
        out.initial = initial_state(&self.config.initial_spec()?, &params)?;
        out.target = parse_target(&self.config.target.name, n_max)?;
        out.params = params;
        Ok(out)
    }

    /// The problem as posed for the copies of `spec`.
    pub fn for_ensemble(&self, spec: &EnsembleSpec) -> Result<Resolved, ConfigError> {
        let raised = self.config.ensemble.as_ref().and_then(|e| e.crosstalk_n_max);
        match raised {
            Some(n) if spec.crosstalk.is_some() && n > self.params.n_max => self.with_n_max(n),
            _ => Ok(self.clone()),
        }
    }

    pub fn dynamics(&self) -> Result<jc_core::Dynamics, ConfigError> {
        Ok(jc_core::Dynamics::new(&self.params, self.grid)?.with_leakage_limit(self.leakage_limit))
    }
}
