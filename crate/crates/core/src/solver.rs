//! Thresholded generalized eigensolver, automated threshold search and
//! shot-level bootstrap.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{KqdError, Result};
use crate::fit::{fit_decay, DecayFit};
use crate::krylov::KrylovPair;
use crate::linalg::hermitian_eigen;
use crate::rng::task_rng;

/// Lowest Ritz pair of the thresholded pencil.
#[derive(Clone, Debug)]
pub struct Ritz {
    pub energy: f64,
    /// Krylov coordinates with `c^dagger S c = 1`.
    pub vector: DVector<Complex64>,
    /// Number of overlap eigenvectors kept.
    pub retained: usize,
}

/// Solve `H c = E S c` inside the span of overlap eigenvectors whose
/// eigenvalue exceeds `eps`.
pub fn solve_regularized(pair: &KrylovPair, eps: f64) -> Result<Ritz> {
    if !(eps >= 0.0) {
        return Err(KqdError::Validation(format!("threshold {eps} must be non-negative")));
    }
    if pair.h.iter().chain(pair.s.iter()).any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(KqdError::Numerical("non-finite matrix entries".into()));
    }
    let (values, vectors) = hermitian_eigen(&pair.s);
    let keep: Vec<usize> = (0..values.len()).filter(|&i| values[i] > eps).collect();
    if keep.is_empty() {
        return Err(KqdError::Numerical(format!(
            "empty retained subspace: no overlap eigenvalue above {eps:e}"
        )));
    }
    let d = pair.dim();
    // Columns v_i / sqrt(lambda_i) whiten the retained overlap block.
    let w = DMatrix::from_fn(d, keep.len(), |r, c| {
        vectors[(r, keep[c])] / values[keep[c]].sqrt()
    });
    let projected = w.adjoint() * &pair.h * &w;
    let projected = (&projected + projected.adjoint()) * Complex64::new(0.5, 0.0);
    let (e, y) = hermitian_eigen(&projected);
    let vector = &w * y.column(0);
    Ok(Ritz { energy: e[0], vector, retained: keep.len() })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub d: usize,
    /// `None` when the thresholded pencil is empty.
    pub energy: Option<f64>,
    pub threshold: f64,
}

/// Lowest energy versus Krylov dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyCurve {
    pub eps_base: f64,
    pub points: Vec<CurvePoint>,
    pub fit: Option<DecayFit>,
}

impl EnergyCurve {
    pub fn energies(&self) -> Vec<Option<f64>> {
        self.points.iter().map(|p| p.energy).collect()
    }

    pub fn energy_at(&self, d: usize) -> Option<f64> {
        self.points.get(d.checked_sub(1)?).and_then(|p| p.energy)
    }

    fn defined(&self) -> (Vec<f64>, Vec<f64>) {
        self.points.iter().filter_map(|p| p.energy.map(|e| (p.d as f64, e))).unzip()
    }
}

/// Solve every leading `D' x D'` block with threshold `eps_base * D'`.
pub fn energy_curve(pair: &KrylovPair, eps_base: f64) -> EnergyCurve {
    let points = (1..=pair.dim())
        .map(|d| {
            let threshold = eps_base * d as f64;
            let energy = solve_regularized(&pair.truncated(d), threshold).ok().map(|r| r.energy);
            CurvePoint { d, energy, threshold }
        })
        .collect();
    EnergyCurve { eps_base, points, fit: None }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularizationConfig {
    pub eps_init_base: f64,
    pub search_factor: f64,
    /// Largest allowed root-mean-square fit residual per point.
    pub rms_tolerance: f64,
    pub max_threshold: f64,
}

impl Default for RegularizationConfig {
    fn default() -> Self {
        RegularizationConfig { eps_init_base: 1e-8, search_factor: 10.0, rms_tolerance: 0.5, max_threshold: 1.0 }
    }
}

impl RegularizationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps_init_base > 0.0 && self.eps_init_base < self.max_threshold) {
            return Err(KqdError::Validation("need 0 < eps_init_base < max_threshold".into()));
        }
        if !(self.search_factor > 1.0) {
            return Err(KqdError::Validation("search factor must exceed 1".into()));
        }
        if !(self.rms_tolerance > 0.0) {
            return Err(KqdError::Validation("rms tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// Full record of a threshold search.
#[derive(Clone, Debug)]
pub struct SearchOutcome {
    /// First passing threshold and its curve.
    pub selected: Option<EnergyCurve>,
    /// Number of search steps whose decay fit failed to converge.
    pub fit_failures: usize,
    pub steps: usize,
}

/// Logarithmic threshold search for the first curve that fits an exponential
/// decay within the rms tolerance.
pub fn regularization_search(pair: &KrylovPair, cfg: &RegularizationConfig) -> Result<SearchOutcome> {
    cfg.validate()?;
    let mut eps = cfg.eps_init_base;
    let mut fit_failures = 0;
    let mut steps = 0;
    while eps <= cfg.max_threshold * (1.0 + 1e-12) {
        steps += 1;
        let mut curve = energy_curve(pair, eps);
        let (x, y) = curve.defined();
        if !x.is_empty() {
            let fit = fit_decay(&x, &y);
            curve.fit = Some(fit);
            if !fit.converged {
                fit_failures += 1;
            } else if fit.rms <= cfg.rms_tolerance {
                return Ok(SearchOutcome { selected: Some(curve), fit_failures, steps });
            }
        }
        eps *= cfg.search_factor;
    }
    Ok(SearchOutcome { selected: None, fit_failures, steps })
}

/// Threshold base and curve chosen by the search; errors if none passes.
pub fn auto_regularize(pair: &KrylovPair, cfg: &RegularizationConfig) -> Result<(f64, EnergyCurve)> {
    let outcome = regularization_search(pair, cfg)?;
    outcome
        .selected
        .map(|c| (c.eps_base, c))
        .ok_or_else(|| KqdError::Numerical("ill-conditioned data: no threshold passes the decay fit".into()))
}

/// A shot-level data set that can be redrawn with replacement.
pub trait ResampleSource: Sync {
    /// Pair from the original data.
    fn estimate(&self) -> Result<KrylovPair>;
    /// Pair from one resample of the measurement outcomes.
    fn resample(&self, rng: &mut ChaCha8Rng) -> Result<KrylovPair>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Accepted,
    /// An energy at `D' > 1` lies above the `D' = 1` energy.
    RejectedEnergyRise,
    /// The decay fit failed to converge during the threshold search.
    RejectedFitFailure,
    /// No threshold passed (or the pair could not be formed).
    RejectedNoThreshold,
}

/// Tolerance for the energy-rise rule, relative to the reference energy.
const RISE_TOLERANCE: f64 = 1e-10;

/// Apply the two rejection rules to one searched pair.
pub fn judge(outcome: &SearchOutcome) -> Verdict {
    if outcome.fit_failures > 0 {
        return Verdict::RejectedFitFailure;
    }
    let Some(curve) = &outcome.selected else { return Verdict::RejectedNoThreshold };
    let Some(e1) = curve.energy_at(1) else { return Verdict::RejectedNoThreshold };
    let tol = RISE_TOLERANCE * e1.abs().max(1.0);
    if curve.points.iter().skip(1).any(|p| p.energy.is_some_and(|e| e > e1 + tol)) {
        return Verdict::RejectedEnergyRise;
    }
    Verdict::Accepted
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    /// Sample standard deviation of the energy at each `D'` over accepted
    /// resamples (`None` if fewer than two accepted values).
    pub std: Vec<Option<f64>>,
    pub accepted: usize,
    pub rejected_energy_rise: usize,
    pub rejected_fit_failure: usize,
    pub rejected_no_threshold: usize,
    /// Selected `eps_base` of each accepted resample.
    pub thresholds: Vec<f64>,
}

impl BootstrapResult {
    pub fn rejected(&self) -> usize {
        self.rejected_energy_rise + self.rejected_fit_failure + self.rejected_no_threshold
    }
}

pub const DEFAULT_RESAMPLES: usize = 1000;

/// Resample, re-regularize and collect accepted curves. Resample `i` draws
/// from stream `(seed, i)`, so results do not depend on thread scheduling.
pub fn bootstrap(
    source: &dyn ResampleSource,
    n_resamples: usize,
    cfg: &RegularizationConfig,
    seed: u64,
) -> Result<BootstrapResult> {
    cfg.validate()?;
    let runs: Vec<(Verdict, Option<EnergyCurve>)> = (0..n_resamples)
        .into_par_iter()
        .map(|i| {
            let mut rng = task_rng(seed, i as u64);
            let Ok(pair) = source.resample(&mut rng) else {
                return (Verdict::RejectedNoThreshold, None);
            };
            match regularization_search(&pair, cfg) {
                Ok(outcome) => {
                    let v = judge(&outcome);
                    (v, outcome.selected)
                }
                Err(_) => (Verdict::RejectedNoThreshold, None),
            }
        })
        .collect();
    let d = runs.iter().filter_map(|(_, c)| c.as_ref()).map(|c| c.points.len()).max().unwrap_or(0);
    let mut result = BootstrapResult {
        std: vec![None; d],
        accepted: 0,
        rejected_energy_rise: 0,
        rejected_fit_failure: 0,
        rejected_no_threshold: 0,
        thresholds: Vec::new(),
    };
    let mut samples: Vec<Vec<f64>> = vec![Vec::new(); d];
    for (verdict, curve) in runs {
        match verdict {
            Verdict::Accepted => {
                let curve = curve.expect("accepted runs carry a curve");
                result.accepted += 1;
                result.thresholds.push(curve.eps_base);
                for p in &curve.points {
                    if let Some(e) = p.energy {
                        samples[p.d - 1].push(e);
                    }
                }
            }
            Verdict::RejectedEnergyRise => result.rejected_energy_rise += 1,
            Verdict::RejectedFitFailure => result.rejected_fit_failure += 1,
            Verdict::RejectedNoThreshold => result.rejected_no_threshold += 1,
        }
    }
    if result.accepted == 0 {
        return Err(KqdError::Numerical(format!(
            "bootstrap accepted none of {n_resamples} resamples"
        )));
    }
    result.std = samples.iter().map(|s| sample_std(s)).collect();
    Ok(result)
}

fn sample_std(v: &[f64]) -> Option<f64> {
    if v.len() < 2 {
        return None;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
    Some(var.sqrt())
}
