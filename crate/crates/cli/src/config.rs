//! JSON experiment configuration.
//!
//! The schema is flat and strict: every section rejects unknown keys, and
//! missing keys take the documented defaults.

use crate::error::CliError;
use repton_core::analysis::assumptions::OperatorFixture;
use repton_core::analysis::compare::Observable;
use repton_core::integrator::Scheme;
use repton_core::model::DEFAULT_EVAL_FLOOR;
use repton_core::noise::DEFAULT_NOISE_FLOOR;
use repton_core::{
    Amplitude, DensityField, Mobility, Model, NoiseKind, NoiseSpec, PotentialFamily, PotentialSpec, RegularizedBase,
    SpectralBasis, StepperConfig,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Simulate,
    Contract,
    Gibbs,
    Scan,
    Check,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::Contract => "contract",
            ExperimentKind::Gibbs => "gibbs",
            ExperimentKind::Scan => "scan",
            ExperimentKind::Check => "check",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyName {
    SingularP2,
    SingularP3,
    Regularized,
    PolynomialTest,
}

fn default_n() -> u32 {
    10
}

fn default_eval_floor() -> f64 {
    DEFAULT_EVAL_FLOOR
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub family: FamilyName,
    pub alpha: f64,
    /// Regularization level (regularized family only).
    #[serde(default = "default_n")]
    pub n: u32,
    #[serde(default)]
    pub base: RegularizedBase,
    #[serde(default)]
    pub quadratic: f64,
    #[serde(default)]
    pub quartic: f64,
    #[serde(default)]
    pub constant: f64,
    #[serde(default = "default_eval_floor")]
    pub eval_floor: f64,
    #[serde(default)]
    pub mobility: MobilityConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MobilityConfig {
    Constant { value: f64 },
    Inverse { floor: f64 },
}

impl Default for MobilityConfig {
    fn default() -> Self {
        MobilityConfig::Constant { value: 1.0 }
    }
}

impl ModelConfig {
    pub fn potential(&self) -> PotentialSpec {
        let family = match self.family {
            FamilyName::SingularP2 => PotentialFamily::SingularP2,
            FamilyName::SingularP3 => PotentialFamily::SingularP3,
            FamilyName::Regularized => PotentialFamily::Regularized { n: self.n, base: self.base },
            FamilyName::PolynomialTest => PotentialFamily::PolynomialTest {
                quadratic: self.quadratic,
                quartic: self.quartic,
            },
        };
        PotentialSpec {
            eval_floor: self.eval_floor,
            ..PotentialSpec::new(family, self.alpha).with_constant(self.constant)
        }
    }

    pub fn mobility(&self) -> Mobility {
        match self.mobility {
            MobilityConfig::Constant { value } => Mobility::Constant { value },
            MobilityConfig::Inverse { floor } => Mobility::Inverse { floor },
        }
    }

    pub fn build(&self) -> Model {
        Model::new(self.potential(), self.mobility())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKindName {
    Scalar,
    #[default]
    Cylindrical,
    QDiagonal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmplitudeName {
    #[default]
    Additive,
    Multiplicative,
}

fn default_sigma() -> f64 {
    0.1
}

fn default_noise_floor() -> f64 {
    DEFAULT_NOISE_FLOOR
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    #[serde(default)]
    pub kind: NoiseKindName,
    /// Truncation of cylindrical noise (defaults to the state truncation).
    #[serde(default)]
    pub modes: Option<usize>,
    /// `q_k` for the `q_diagonal` kind.
    #[serde(default)]
    pub spectrum: Vec<f64>,
    #[serde(default)]
    pub amplitude: AmplitudeName,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default = "default_noise_floor")]
    pub floor: f64,
    #[serde(default = "default_true")]
    pub conservative: bool,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            kind: NoiseKindName::default(),
            modes: None,
            spectrum: Vec::new(),
            amplitude: AmplitudeName::default(),
            sigma: default_sigma(),
            floor: default_noise_floor(),
            conservative: true,
        }
    }
}

impl NoiseConfig {
    pub fn build(&self, seed: u64) -> NoiseSpec {
        NoiseSpec {
            kind: match self.kind {
                NoiseKindName::Scalar => NoiseKind::Scalar,
                NoiseKindName::Cylindrical => NoiseKind::Cylindrical { modes: self.modes },
                NoiseKindName::QDiagonal => NoiseKind::QDiagonal { spectrum: self.spectrum.clone() },
            },
            amplitude: match self.amplitude {
                AmplitudeName::Additive => Amplitude::Additive { sigma: self.sigma },
                AmplitudeName::Multiplicative => Amplitude::Multiplicative { sigma: self.sigma, floor: self.floor },
            },
            conservative: self.conservative,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepperSection {
    pub dt: f64,
    pub t_end: f64,
    pub scheme: Scheme,
    pub positivity_floor: f64,
    pub penalty_strength: f64,
    pub record_every: u64,
    pub moving_boundary: bool,
}

impl Default for StepperSection {
    fn default() -> Self {
        let d = StepperConfig::default();
        Self {
            dt: d.dt,
            t_end: d.t_end,
            scheme: d.scheme,
            positivity_floor: d.positivity_floor,
            penalty_strength: d.penalty_strength,
            record_every: d.record_every,
            moving_boundary: d.moving_boundary,
        }
    }
}

impl StepperSection {
    pub fn build(&self) -> StepperConfig {
        StepperConfig {
            dt: self.dt,
            t_end: self.t_end,
            scheme: self.scheme,
            positivity_floor: self.positivity_floor,
            penalty_strength: self.penalty_strength,
            record_every: self.record_every,
            moving_boundary: self.moving_boundary,
        }
    }
}

/// Initial density `mean + amplitude cos(mode pi s)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialConfig {
    pub mean: f64,
    pub amplitude: f64,
    pub mode: u32,
}

impl Default for InitialConfig {
    fn default() -> Self {
        Self {
            mean: 1.0,
            amplitude: 0.0,
            mode: 1,
        }
    }
}

impl InitialConfig {
    pub fn build(&self, basis: &SpectralBasis) -> DensityField {
        let k = self.mode as f64 * PI;
        DensityField::from_fn(basis, |s| self.mean + self.amplitude * (k * s).cos())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixtureName {
    #[default]
    Linear,
    ConvexRegularized,
    UnflooredMultiplicative,
}

fn default_observables() -> Vec<Observable> {
    Observable::mode_variances(1..=4)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Trajectories (simulate ensembles, gibbs dynamics chains).
    pub n_trajectories: usize,
    /// Steps discarded at the start of each dynamics chain (gibbs).
    pub burn_in_steps: u64,
    /// Record every this many steps in dynamics chains (gibbs).
    pub sample_every: u64,
    pub chain_beta: f64,
    pub chain_burn_in: usize,
    pub chain_samples: usize,
    pub chain_thin: usize,
    pub n_chains: usize,
    pub observables: Vec<Observable>,
    pub threshold: f64,
    pub min_ess: f64,
    /// Second initial datum for `contract`.
    pub second_initial: InitialConfig,
    pub contraction_tolerance: f64,
    pub scan_levels: Vec<u32>,
    pub scan_samples: usize,
    pub scan_mass: f64,
    pub fixture: FixtureName,
    pub n_triples: usize,
    /// Also write per-mode coefficient columns in trajectory CSVs.
    pub mode_columns: bool,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            n_trajectories: 4,
            burn_in_steps: 10_000,
            sample_every: 100,
            chain_beta: 0.5,
            chain_burn_in: 5_000,
            chain_samples: 20_000,
            chain_thin: 1,
            n_chains: 4,
            observables: default_observables(),
            threshold: 3.0,
            min_ess: 200.0,
            second_initial: InitialConfig {
                mean: 1.0,
                amplitude: 0.3,
                mode: 2,
            },
            contraction_tolerance: 1e-10,
            scan_levels: vec![1, 2, 5, 10, 50, 200],
            scan_samples: 10_000,
            scan_mass: 1.0,
            fixture: FixtureName::Linear,
            n_triples: 10_000,
            mode_columns: false,
        }
    }
}

fn default_n_modes() -> usize {
    32
}

fn default_output() -> PathBuf {
    PathBuf::from("repton-out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub model: ModelConfig,
    #[serde(default = "default_n_modes")]
    pub n_modes: usize,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub stepper: StepperSection,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

fn invalid(key: &str, message: impl std::fmt::Display) -> CliError {
    CliError::Config {
        key: key.to_string(),
        message: message.to_string(),
    }
}

impl ExperimentConfig {
    /// Parses and validates JSON text.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let key = e.path().to_string();
            invalid(if key == "." { "(root)" } else { &key }, e.inner())
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let m = &self.model;
        if !(m.alpha >= 0.0) || !m.alpha.is_finite() {
            return Err(invalid("model.alpha", format!("expected a finite number >= 0, got {}", m.alpha)));
        }
        if m.family == FamilyName::Regularized && m.n == 0 {
            return Err(invalid("model.n", "expected a positive integer"));
        }
        if m.quadratic < 0.0 || m.quartic < 0.0 {
            return Err(invalid("model.quadratic", "polynomial coefficients must be >= 0"));
        }
        if !(m.eval_floor > 0.0) {
            return Err(invalid("model.eval_floor", "expected a number > 0"));
        }
        match m.mobility {
            MobilityConfig::Constant { value } if !(value > 0.0) => {
                return Err(invalid("model.mobility.value", "expected a number > 0"))
            }
            MobilityConfig::Inverse { floor } if !(floor > 0.0) => {
                return Err(invalid("model.mobility.floor", "expected a number > 0"))
            }
            _ => {}
        }
        if self.n_modes < 2 {
            return Err(invalid("n_modes", "expected an integer >= 2"));
        }
        let n = &self.noise;
        if !(n.sigma >= 0.0) || !n.sigma.is_finite() {
            return Err(invalid("noise.sigma", format!("expected a finite number >= 0, got {}", n.sigma)));
        }
        if !(n.floor >= 0.0) {
            return Err(invalid("noise.floor", "expected a number >= 0"));
        }
        if n.kind == NoiseKindName::QDiagonal && n.spectrum.is_empty() {
            return Err(invalid("noise.spectrum", "q_diagonal noise needs a nonempty spectrum"));
        }
        if n.spectrum.iter().any(|q| !(*q >= 0.0)) {
            return Err(invalid("noise.spectrum", "entries must be >= 0"));
        }
        if n.modes == Some(0) {
            return Err(invalid("noise.modes", "expected a positive integer"));
        }
        let s = &self.stepper;
        if !(s.dt > 0.0) || !s.dt.is_finite() {
            return Err(invalid("stepper.dt", format!("expected a finite number > 0, got {}", s.dt)));
        }
        if !(s.t_end >= 0.0) || !s.t_end.is_finite() {
            return Err(invalid("stepper.t_end", format!("expected a finite number >= 0, got {}", s.t_end)));
        }
        if !(s.positivity_floor >= 0.0) {
            return Err(invalid("stepper.positivity_floor", "expected a number >= 0"));
        }
        if !(s.penalty_strength >= 0.0) {
            return Err(invalid("stepper.penalty_strength", "expected a number >= 0"));
        }
        if s.record_every == 0 {
            return Err(invalid("stepper.record_every", "expected a positive integer"));
        }
        let a = &self.analysis;
        for (key, v) in [
            ("analysis.n_trajectories", a.n_trajectories),
            ("analysis.n_chains", a.n_chains),
            ("analysis.chain_samples", a.chain_samples),
            ("analysis.chain_thin", a.chain_thin),
            ("analysis.scan_samples", a.scan_samples),
            ("analysis.n_triples", a.n_triples),
        ] {
            if v == 0 {
                return Err(invalid(key, "expected a positive integer"));
            }
        }
        if a.sample_every == 0 {
            return Err(invalid("analysis.sample_every", "expected a positive integer"));
        }
        if !(a.chain_beta > 0.0 && a.chain_beta <= 1.0) {
            return Err(invalid("analysis.chain_beta", "expected a number in (0, 1]"));
        }
        if !(a.threshold > 0.0) {
            return Err(invalid("analysis.threshold", "expected a number > 0"));
        }
        if a.scan_levels.is_empty() || a.scan_levels.contains(&0) {
            return Err(invalid("analysis.scan_levels", "expected a nonempty list of positive integers"));
        }
        for (i, o) in a.observables.iter().enumerate() {
            let mode = match *o {
                Observable::ModeVariance { mode } | Observable::ModeMean { mode } | Observable::TanhMode { mode, .. } => {
                    mode
                }
                Observable::AtanNorm { .. } => 1,
            };
            if mode == 0 || mode >= self.n_modes {
                return Err(invalid(
                    &format!("analysis.observables[{i}].mode"),
                    format!("expected a fluctuation mode in 1..{}", self.n_modes),
                ));
            }
        }
        Ok(())
    }

    /// Canonical serialization (field order fixed by the schema).
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// The config with the output location cleared: where results are
    /// written does not change them.
    pub fn scientific(&self) -> ExperimentConfig {
        ExperimentConfig {
            output: PathBuf::new(),
            ..self.clone()
        }
    }

    /// SHA-256 of the canonical serialization of [`Self::scientific`], hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.scientific().canonical_json().as_bytes()))
    }

    pub fn fixture(&self) -> OperatorFixture {
        let alpha = self.model.alpha;
        let sigma = self.noise.sigma;
        match self.analysis.fixture {
            FixtureName::Linear => OperatorFixture::linear(alpha, sigma, self.n_modes),
            FixtureName::ConvexRegularized => OperatorFixture::convex_regularized(self.model.n, alpha, sigma, self.n_modes),
            FixtureName::UnflooredMultiplicative => OperatorFixture::unfloored_multiplicative(alpha, sigma, self.n_modes),
        }
    }
}

