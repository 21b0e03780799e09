//! Experiment configuration files (TOML).

use std::path::{Path, PathBuf};

use kqd::noise::Mitigation;
use kqd::solver::RegularizationConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// Master seed; every random stream of the run derives from it.
    pub seed: u64,
    pub lattice: LatticeSpec,
    pub particles: ParticleSpec,
    pub evolution: EvolutionSpec,
    pub krylov: KrylovSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseConfig>,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

/// Exactly one of `preset`, `heavy_hex`, `chain` or `file`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    /// `[rows, cols]` of plaquettes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heavy_hex: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain: Option<usize>,
    /// Layout JSON as written by `kqd lattice --out`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    /// Control site of a generated lattice.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticleSpec {
    pub k: usize,
    /// System sites; spread automatically when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sites: Option<Vec<usize>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Propagation {
    Trotter,
    Exact,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairStructure {
    Toeplitz,
    Hermitian,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolutionSpec {
    pub dt: f64,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_order")]
    pub order: u32,
    #[serde(default = "default_propagation")]
    pub propagator: Propagation,
    #[serde(default = "default_structure")]
    pub structure: PairStructure,
}

fn default_steps() -> usize {
    2
}
fn default_order() -> u32 {
    2
}
fn default_propagation() -> Propagation {
    Propagation::Trotter
}
fn default_structure() -> PairStructure {
    PairStructure::Toeplitz
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Exact,
    Shots,
    Noisy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KrylovSpec {
    pub d: usize,
    #[serde(default)]
    pub mode: Mode,
    /// Shots per basis and distance in `shots` mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shots: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    /// Noise spec JSON as written by `kqd noise --out`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    /// Rate of every local generator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
    /// Total rate per layer, split evenly over its local generators.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layer_rate: Option<f64>,
    /// `[p01, p10]` on every qubit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub readout: Option<[f64; 2]>,
    #[serde(default = "default_gains")]
    pub gains: Vec<f64>,
    pub twirls: usize,
    pub shots: u64,
    #[serde(default = "default_calibration")]
    pub calibration_shots: u64,
    #[serde(default = "default_mitigation")]
    pub mitigation: Mitigation,
}

fn default_gains() -> Vec<f64> {
    vec![1.0, 1.3, 1.6]
}
fn default_calibration() -> u64 {
    20_000
}
fn default_mitigation() -> Mitigation {
    Mitigation::Full
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    /// Fixed threshold base; the automatic search runs when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_base: Option<f64>,
    #[serde(default = "default_eps_init")]
    pub eps_init_base: f64,
    #[serde(default = "default_search_factor")]
    pub search_factor: f64,
    #[serde(default = "default_rms")]
    pub rms_tolerance: f64,
    #[serde(default = "default_max_threshold")]
    pub max_threshold: f64,
    #[serde(default)]
    pub bootstrap: usize,
    /// Compute the sector ground energy for error columns.
    #[serde(default = "default_true")]
    pub reference: bool,
}

fn default_eps_init() -> f64 {
    RegularizationConfig::default().eps_init_base
}
fn default_search_factor() -> f64 {
    RegularizationConfig::default().search_factor
}
fn default_rms() -> f64 {
    RegularizationConfig::default().rms_tolerance
}
fn default_max_threshold() -> f64 {
    RegularizationConfig::default().max_threshold
}
fn default_true() -> bool {
    true
}

impl Default for SolverSpec {
    fn default() -> Self {
        SolverSpec {
            eps_base: None,
            eps_init_base: default_eps_init(),
            search_factor: default_search_factor(),
            rms_tolerance: default_rms(),
            max_threshold: default_max_threshold(),
            bootstrap: 0,
            reference: true,
        }
    }
}

impl SolverSpec {
    pub fn regularization(&self) -> RegularizationConfig {
        RegularizationConfig {
            eps_init_base: self.eps_init_base,
            search_factor: self.search_factor,
            rms_tolerance: self.rms_tolerance,
            max_threshold: self.max_threshold,
        }
    }
}

/// Log grid `dt_start * dt_factor^i`, `i < dt_count`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub dt_start: f64,
    pub dt_factor: f64,
    pub dt_count: usize,
}

impl SweepSpec {
    pub fn grid(&self) -> Vec<f64> {
        (0..self.dt_count).map(|i| self.dt_start * self.dt_factor.powi(i as i32)).collect()
    }
}

fn invalid(field: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Validation(format!("{field}: {msg}"))
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<ExperimentConfig, CliError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Validation(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<ExperimentConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = ExperimentConfig::from_toml(&text)?;
        // Referenced files are relative to the config's directory.
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(f) = cfg.lattice.file.as_mut() {
            if f.is_relative() {
                *f = base.join(&*f);
            }
        }
        if let Some(f) = cfg.noise.as_mut().and_then(|n| n.file.as_mut()) {
            if f.is_relative() {
                *f = base.join(&*f);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Field-level checks that do not need the lattice.
    pub fn validate(&self) -> Result<(), CliError> {
        let l = &self.lattice;
        let sources = [l.preset.is_some(), l.heavy_hex.is_some(), l.chain.is_some(), l.file.is_some()];
        if sources.iter().filter(|&&s| s).count() != 1 {
            return Err(invalid("lattice", "give exactly one of preset, heavy_hex, chain, file"));
        }
        if (l.heavy_hex.is_some() || l.chain.is_some()) && l.control.is_none() {
            return Err(invalid("lattice.control", "required for generated lattices"));
        }
        if (l.preset.is_some() || l.file.is_some()) && l.control.is_some() {
            return Err(invalid("lattice.control", "presets and layout files fix the control"));
        }
        if let Some(sites) = &self.particles.sites {
            if sites.len() != self.particles.k {
                return Err(invalid("particles.sites", format!("lists {} sites for k = {}", sites.len(), self.particles.k)));
            }
        }
        if self.particles.k == 0 {
            return Err(invalid("particles.k", "must be positive"));
        }
        let e = &self.evolution;
        if !(e.dt.is_finite() && e.dt >= 0.0) {
            return Err(invalid("evolution.dt", "must be finite and non-negative"));
        }
        if e.steps == 0 {
            return Err(invalid("evolution.steps", "must be positive"));
        }
        if self.krylov.d == 0 {
            return Err(invalid("krylov.d", "must be positive"));
        }
        match self.krylov.mode {
            Mode::Exact => {}
            Mode::Shots => {
                if !self.krylov.shots.is_some_and(|s| s > 0) {
                    return Err(invalid("krylov.shots", "required and positive in shots mode"));
                }
            }
            Mode::Noisy => {
                let Some(n) = &self.noise else {
                    return Err(invalid("noise", "section required in noisy mode"));
                };
                let given = [n.file.is_some(), n.rate.is_some(), n.layer_rate.is_some()];
                if given.iter().filter(|&&g| g).count() != 1 {
                    return Err(invalid("noise", "give exactly one of file, rate, layer_rate"));
                }
                if n.file.is_some() && n.readout.is_some() {
                    return Err(invalid("noise.readout", "noise files carry their own readout model"));
                }
                if n.twirls == 0 || n.shots == 0 {
                    return Err(invalid("noise", "twirls and shots must be positive"));
                }
                if e.propagator == Propagation::Exact {
                    return Err(invalid("evolution.propagator", "noisy runs need the Trotter circuit"));
                }
            }
        }
        if self.krylov.mode != Mode::Exact && e.structure == PairStructure::Hermitian {
            return Err(invalid("evolution.structure", "hermitian pairs are only available in exact mode"));
        }
        if self.krylov.mode != Mode::Noisy && self.noise.is_some() {
            return Err(invalid("noise", "only used in noisy mode"));
        }
        if self.solver.bootstrap > 0 && self.krylov.mode == Mode::Exact {
            return Err(invalid("solver.bootstrap", "exact mode has nothing to resample"));
        }
        if let Some(eps) = self.solver.eps_base {
            if !(eps.is_finite() && eps >= 0.0) {
                return Err(invalid("solver.eps_base", "must be finite and non-negative"));
            }
        }
        self.solver.regularization().validate().map_err(|e| invalid("solver", e))?;
        if let Some(s) = &self.sweep {
            if self.krylov.mode != Mode::Exact {
                return Err(invalid("sweep", "dt sweeps run in exact mode"));
            }
            if !(s.dt_start > 0.0 && s.dt_factor > 1.0 && s.dt_count > 0) {
                return Err(invalid("sweep", "need dt_start > 0, dt_factor > 1, dt_count > 0"));
            }
            if !self.solver.reference {
                return Err(invalid("solver.reference", "sweeps report errors and need the reference"));
            }
        }
        Ok(())
    }

    /// SHA-256 over the canonical config text plus any referenced files.
    pub fn hash(&self) -> Result<String, CliError> {
        let mut h = Sha256::new();
        h.update(self.to_toml().as_bytes());
        let files = [self.lattice.file.as_ref(), self.noise.as_ref().and_then(|n| n.file.as_ref())];
        for f in files.into_iter().flatten() {
            let bytes = std::fs::read(f).map_err(|e| CliError::Validation(format!("cannot read {}: {e}", f.display())))?;
            h.update(&bytes);
        }
        Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
    }
}

/// Built-in experiment presets.
pub const PRESETS: &[(&str, &str)] = &[
    ("hex21-k5-dt-sweep", include_str!("../presets/hex21-k5-dt-sweep.toml")),
    ("hex21-k5-toeplitz", include_str!("../presets/hex21-k5-toeplitz.toml")),
    ("hex21-k5-hermitian", include_str!("../presets/hex21-k5-hermitian.toml")),
    ("k1-noiseless-56", include_str!("../presets/k1-noiseless-56.toml")),
    ("k3-noiseless-45", include_str!("../presets/k3-noiseless-45.toml")),
    ("k5-noiseless-43", include_str!("../presets/k5-noiseless-43.toml")),
    ("k1-shots-ring9", include_str!("../presets/k1-shots-ring9.toml")),
    ("k1-noisy-ring9", include_str!("../presets/k1-noisy-ring9.toml")),
];

pub fn preset(name: &str) -> Result<ExperimentConfig, CliError> {
    let text = PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| *t)
        .ok_or_else(|| CliError::Validation(format!("unknown preset {name:?}")))?;
    ExperimentConfig::from_toml(text)
}
