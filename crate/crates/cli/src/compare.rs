//! Per-D differences between two runs.

use std::path::Path;

use kqd::krylov::KrylovPair;

use crate::run::{csv_bytes, read_pair_document};
use crate::CliError;

/// What a comparison needs from a finished run.
#[derive(Clone, Debug)]
pub struct RunSummary {
    pub pair: KrylovPair,
    pub energies: Vec<Option<f64>>,
    pub n_sites: usize,
    pub config_hash: String,
}

fn read(dir: &Path, name: &str) -> Result<String, CliError> {
    let path = dir.join(name);
    std::fs::read_to_string(&path).map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))
}

pub fn load_run(dir: &Path) -> Result<RunSummary, CliError> {
    let manifest: serde_json::Value = serde_json::from_str(&read(dir, "manifest.json")?)
        .map_err(|e| CliError::Validation(format!("manifest in {}: {e}", dir.display())))?;
    let n_sites = manifest["n_sites"]
        .as_u64()
        .ok_or_else(|| CliError::Validation(format!("manifest in {} lacks n_sites", dir.display())))?
        as usize;
    let config_hash = manifest["config_hash"].as_str().unwrap_or_default().to_string();
    let pair = read_pair_document(&read(dir, "pair.json")?)?;
    let curve = read(dir, "curve.csv")?;
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(curve.as_bytes());
    let mut energies = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| CliError::Validation(format!("curve in {}: {e}", dir.display())))?;
        let field = rec.get(1).unwrap_or("");
        energies.push(if field.is_empty() {
            None
        } else {
            Some(field.parse::<f64>().map_err(|e| CliError::Validation(format!("curve energy {field:?}: {e}")))?)
        });
    }
    Ok(RunSummary { pair, energies, n_sites, config_hash })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompareRow {
    pub d: usize,
    pub energy_a: Option<f64>,
    pub energy_b: Option<f64>,
    pub energy_diff: Option<f64>,
    /// Largest `|H_a - H_b|` entry of the leading `d x d` block divided by the
    /// number of sites.
    pub max_dh_per_site: f64,
    pub max_ds: f64,
}

pub fn compare(a: &RunSummary, b: &RunSummary) -> Result<Vec<CompareRow>, CliError> {
    if a.pair.dim() != b.pair.dim() || a.energies.len() != b.energies.len() {
        return Err(CliError::Validation(format!(
            "incompatible runs: Krylov dimensions {} and {}",
            a.pair.dim(),
            b.pair.dim()
        )));
    }
    if a.n_sites != b.n_sites {
        return Err(CliError::Validation(format!(
            "incompatible runs: {} and {} system sites",
            a.n_sites, b.n_sites
        )));
    }
    let n = a.n_sites as f64;
    let mut rows = Vec::new();
    let (mut dh, mut ds) = (0.0f64, 0.0f64);
    for d in 1..=a.pair.dim() {
        // Grow the running maxima by the new last row and column.
        for i in 0..d {
            for (r, c) in [(d - 1, i), (i, d - 1)] {
                dh = dh.max((a.pair.h[(r, c)] - b.pair.h[(r, c)]).norm());
                ds = ds.max((a.pair.s[(r, c)] - b.pair.s[(r, c)]).norm());
            }
        }
        let (ea, eb) = (a.energies[d - 1], b.energies[d - 1]);
        rows.push(CompareRow {
            d,
            energy_a: ea,
            energy_b: eb,
            energy_diff: ea.zip(eb).map(|(x, y)| x - y),
            max_dh_per_site: dh / n,
            max_ds: ds,
        });
    }
    Ok(rows)
}

pub fn compare_csv(a: &RunSummary, b: &RunSummary, rows: &[CompareRow]) -> Vec<u8> {
    let f = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.d.to_string(),
                f(r.energy_a),
                f(r.energy_b),
                f(r.energy_diff),
                r.max_dh_per_site.to_string(),
                r.max_ds.to_string(),
            ]
        })
        .collect();
    let tag = format!("{}+{}", a.config_hash, b.config_hash);
    csv_bytes(&tag, &["d", "energy_a", "energy_b", "energy_diff", "max_dh_per_site", "max_ds"], &body)
}
