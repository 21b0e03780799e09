//! Experiment runner behind the `kqd` command.

pub mod compare;
pub mod config;
pub mod run;

use kqd::circuits::{measurement_bases, synthesize_controlled_prep};
use kqd::error::KqdError;
use kqd::layouts::Layout;
use kqd::solver::{auto_regularize, energy_curve, RegularizationConfig};

use crate::config::ExperimentConfig;
use crate::run::{csv_bytes, prepare, read_pair_document, step_circuit};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("validation error: {0}")]
    Validation(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    /// 1 for invalid input, 2 for numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Numerical(_) => 2,
        }
    }
}

impl From<KqdError> for CliError {
    fn from(e: KqdError) -> Self {
        match e {
            KqdError::Numerical(m) => CliError::Numerical(m),
            KqdError::Validation(m) => CliError::Validation(m),
            other if other.is_numerical() => CliError::Numerical(other.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

/// One-line-per-fact description of a layout.
pub fn describe_layout(layout: &Layout) -> String {
    let dev = layout.device();
    let mut out = format!(
        "sites {} (system {}, control {})\nedges {}\n",
        dev.n_sites(),
        layout.n_system(),
        layout.control(),
        dev.edges().len()
    );
    for c in kqd::lattice::Color::ALL {
        out += &format!("color {c}: {} edges\n", dev.color_class(c).count());
    }
    out
}

/// Circuit files for a config: controlled preparation, one Krylov step and
/// the measurement bases.
pub fn circuit_files(cfg: &ExperimentConfig) -> Result<Vec<(String, Vec<u8>)>, CliError> {
    cfg.validate()?;
    let hash = cfg.hash()?;
    let p = prepare(cfg)?;
    let prep = synthesize_controlled_prep(&p.layout, &p.target)?;
    let step = step_circuit(cfg, p.layout.system(), cfg.evolution.dt)?;
    let bases = measurement_bases(p.layout.system(), &p.target)?;
    let n = p.layout.n_system() + 1;
    let rows: Vec<Vec<String>> = bases
        .iter()
        .enumerate()
        .map(|(i, b)| {
            vec![i.to_string(), format!("{:?}", b.kind), b.as_pauli().label(n), b.covered.len().to_string()]
        })
        .collect();
    Ok(vec![
        ("prep.json".into(), prep.to_json().into_bytes()),
        ("step.json".into(), step.to_json().into_bytes()),
        ("bases.csv".into(), csv_bytes(&hash, &["basis", "kind", "assignment", "observables"], &rows)),
    ])
}

/// Energy curve CSV for a stored pair, with a fixed or searched threshold.
pub fn solve_pair_file(
    text: &str,
    eps_base: Option<f64>,
    reference: Option<f64>,
    n_sites: Option<usize>,
) -> Result<Vec<u8>, CliError> {
    let pair = read_pair_document(text)?;
    let curve = match eps_base {
        Some(eps) => energy_curve(&pair, eps),
        None => auto_regularize(&pair, &RegularizationConfig::default())?.1,
    };
    let f = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let rows: Vec<Vec<String>> = curve
        .points
        .iter()
        .map(|p| {
            vec![
                p.d.to_string(),
                f(p.energy),
                f(p.energy.zip(n_sites).map(|(e, n)| e / n as f64)),
                f(p.energy.zip(reference).map(|(e, r)| e - r)),
                p.threshold.to_string(),
            ]
        })
        .collect();
    let v: serde_json::Value = serde_json::from_str(text).unwrap_or_default();
    let hash = v["config_hash"].as_str().unwrap_or("none");
    Ok(csv_bytes(hash, &["d", "energy", "energy_per_site", "delta_e", "threshold"], &rows))
}
