//! Sparse Pauli-Lindblad noise, Pauli twirling, readout error with twirled
//! readout mitigation, noise amplification with zero-noise extrapolation, and
//! noisy Hadamard-test runs on the dense backend.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuits::{apply_layer_dense, synthesize_controlled_prep, Layer, LayeredCircuit, PreparationTarget};
use crate::error::{KqdError, Result};
use crate::fit::{fit_exponential, fit_linear, WeightedFit};
use crate::krylov::{HadamardSetup, KrylovPair, Provenance};
use crate::lattice::EdgeColoredLattice;
use crate::layouts::Layout;
use crate::linalg::hermitian_eigen;
use crate::pauli::{Pauli, PauliString};
use crate::rng::{task_id, task_rng};
use crate::sector_sim::DenseState;

const ONE: Complex64 = Complex64::new(1.0, 0.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Generator count allowed per qubit squared before a model is considered
/// dense.
pub const DEFAULT_GENERATOR_CAP_FACTOR: usize = 16;

/// `L(rho) = sum_k rate_k (P_k rho P_k - rho)` attached to one layer id.
#[derive(Clone, Debug, PartialEq)]
pub struct PauliLindbladModel {
    pub layer: String,
    pub n_qubits: usize,
    pub generators: Vec<(PauliString, f64)>,
}

/// On-disk generator: dense Pauli label (character `i` is qubit `i`) and rate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorFile {
    pub pauli: String,
    pub rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub layer: String,
    pub generators: Vec<GeneratorFile>,
}

impl PauliLindbladModel {
    pub fn new(layer: &str, n_qubits: usize, generators: Vec<(PauliString, f64)>) -> Result<Self> {
        let model = PauliLindbladModel { layer: layer.to_string(), n_qubits, generators };
        model.validate(DEFAULT_GENERATOR_CAP_FACTOR * n_qubits * n_qubits)?;
        Ok(model)
    }

    pub fn validate(&self, max_generators: usize) -> Result<()> {
        if self.n_qubits == 0 || self.n_qubits > 64 {
            return Err(KqdError::Validation("noise model needs 1..=64 qubits".into()));
        }
        if self.generators.len() > max_generators {
            return Err(KqdError::Validation(format!(
                "model {} has {} generators, cap is {max_generators}",
                self.layer,
                self.generators.len()
            )));
        }
        for (p, rate) in &self.generators {
            if !(rate.is_finite() && *rate >= 0.0) {
                return Err(KqdError::Validation(format!("rate {rate} must be finite and non-negative")));
            }
            if p.is_identity() {
                return Err(KqdError::Validation("identity generator".into()));
            }
            if self.n_qubits < 64 && p.support() >> self.n_qubits != 0 {
                return Err(KqdError::Validation(format!(
                    "generator outside the {} model qubits",
                    self.n_qubits
                )));
            }
        }
        Ok(())
    }

    /// Every weight-one Pauli on the layer's qubits plus every weight-two
    /// Pauli on device edges touching them, all at `rate`.
    pub fn local(layer: &Layer, device: &EdgeColoredLattice, rate: f64) -> Result<Self> {
        let mut qubits = 0u64;
        for g in &layer.gates {
            for q in g.qubits() {
                qubits |= 1 << q;
            }
        }
        let ops = [Pauli::X, Pauli::Y, Pauli::Z];
        let mut generators = Vec::new();
        for q in 0..device.n_sites() {
            if qubits >> q & 1 == 1 {
                generators.extend(ops.iter().map(|&p| (PauliString::single(q, p), rate)));
            }
        }
        for e in device.edges() {
            if (qubits >> e.a | qubits >> e.b) & 1 == 1 {
                for &pa in &ops {
                    for &pb in &ops {
                        generators.push((PauliString::from_ops(&[(e.a, pa), (e.b, pb)]), rate));
                    }
                }
            }
        }
        PauliLindbladModel::new(&layer.id(), device.n_sites(), generators)
    }

    pub fn to_file(&self) -> ModelFile {
        ModelFile {
            layer: self.layer.clone(),
            generators: self
                .generators
                .iter()
                .map(|(p, rate)| GeneratorFile { pauli: p.label(self.n_qubits), rate: *rate })
                .collect(),
        }
    }

    pub fn from_file(file: &ModelFile, n_qubits: usize) -> Result<Self> {
        let generators = file
            .generators
            .iter()
            .map(|g| {
                if g.pauli.chars().count() != n_qubits {
                    return Err(KqdError::Validation(format!(
                        "generator label {:?} is not {n_qubits} characters",
                        g.pauli
                    )));
                }
                Ok((PauliString::from_label(&g.pauli)?, g.rate))
            })
            .collect::<Result<_>>()?;
        PauliLindbladModel::new(&file.layer, n_qubits, generators)
    }
}

/// Insertion probability of one generator at noise gain `gain`.
pub fn insertion_probability(rate: f64, gain: f64) -> f64 {
    (1.0 - (-2.0 * gain * rate).exp()) / 2.0
}

/// Draw the Pauli error for one application of the model amplified by `gain`.
/// Each generator is inserted independently; phases are dropped.
pub fn sample_error(model: &PauliLindbladModel, gain: f64, rng: &mut impl Rng) -> Result<PauliString> {
    if !(gain >= 1.0 && gain.is_finite()) {
        return Err(KqdError::Validation(format!("gain {gain} must be at least 1")));
    }
    let mut error = PauliString::IDENTITY;
    for (p, rate) in &model.generators {
        if *rate > 0.0 && rng.random::<f64>() < insertion_probability(*rate, gain) {
            error = PauliString { x: error.x ^ p.x, z: error.z ^ p.z };
        }
    }
    Ok(error)
}

/// `2^-n Tr[P Lambda(P)]`: product of `exp(-2 rate)` over generators that
/// anticommute with `p`.
pub fn pauli_fidelity(model: &PauliLindbladModel, p: &PauliString) -> f64 {
    model
        .generators
        .iter()
        .filter(|(g, _)| !g.commutes_with(p))
        .map(|(_, rate)| (-2.0 * rate).exp())
        .product()
}

/// Monte-Carlo fidelity estimate: mean and standard error of the sign picked
/// up by `p` under sampled errors.
pub fn sampled_pauli_fidelity(
    model: &PauliLindbladModel,
    p: &PauliString,
    gain: f64,
    samples: usize,
    rng: &mut impl Rng,
) -> Result<(f64, f64)> {
    if samples < 2 {
        return Err(KqdError::Validation("need at least two samples".into()));
    }
    let mut plus = 0usize;
    for _ in 0..samples {
        if sample_error(model, gain, rng)?.commutes_with(p) {
            plus += 1;
        }
    }
    let mean = (2.0 * plus as f64 - samples as f64) / samples as f64;
    Ok((mean, ((1.0 - mean * mean) / samples as f64).sqrt()))
}

// ---------------------------------------------------------------------------
// Superoperators on one or two qubits (column-stacking convention:
// vec(A rho B) = (B^T kron A) vec(rho)).

/// Dense matrix of a Pauli string on `n` qubits.
pub fn pauli_matrix(p: &PauliString, n: usize) -> DMatrix<Complex64> {
    let d = 1usize << n;
    let mut m = DMatrix::zeros(d, d);
    for b in 0..d {
        let (out, phase) = p.apply_to_basis(b as u64);
        m[(out as usize, b)] = phase;
    }
    m
}

/// All `4^n` Pauli strings on `n` qubits in base-4 order (qubit 0 fastest).
pub fn pauli_group(n: usize) -> Vec<PauliString> {
    let ops = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];
    (0..1usize << (2 * n))
        .map(|i| {
            let mut p = PauliString::IDENTITY;
            for q in 0..n {
                p.set(q, ops[(i >> (2 * q)) & 3]);
            }
            p
        })
        .collect()
}

pub fn superop_from_kraus(kraus: &[DMatrix<Complex64>]) -> DMatrix<Complex64> {
    let d = kraus[0].nrows();
    let mut s = DMatrix::zeros(d * d, d * d);
    for k in kraus {
        s += k.map(|v| v.conj()).kronecker(k);
    }
    s
}

fn vec_of(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    DMatrix::from_column_slice(m.len(), 1, m.as_slice())
}

fn qubits_of_superop(s: &DMatrix<Complex64>) -> Result<usize> {
    match (s.nrows(), s.ncols()) {
        (4, 4) => Ok(1),
        (16, 16) => Ok(2),
        (r, c) => Err(KqdError::Validation(format!(
            "superoperator of shape {r}x{c}: only one- and two-qubit channels are supported"
        ))),
    }
}

/// Pauli transfer matrix `R_ij = 2^-n Tr[P_i Lambda(P_j)]` in
/// [`pauli_group`] order.
pub fn pauli_transfer_matrix(s: &DMatrix<Complex64>) -> Result<DMatrix<f64>> {
    let n = qubits_of_superop(s)?;
    let vecs: Vec<DMatrix<Complex64>> = pauli_group(n).iter().map(|p| vec_of(&pauli_matrix(p, n))).collect();
    let d = (1usize << n) as f64;
    let images: Vec<DMatrix<Complex64>> = vecs.iter().map(|v| s * v).collect();
    Ok(DMatrix::from_fn(vecs.len(), vecs.len(), |i, j| (vecs[i].adjoint() * &images[j])[(0, 0)].re / d))
}

/// Average of `P Lambda(P . P) P` over the full Pauli group.
pub fn twirl_channel(s: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    let n = qubits_of_superop(s)?;
    let group = pauli_group(n);
    let mut out = DMatrix::zeros(s.nrows(), s.ncols());
    for p in &group {
        let conj = superop_from_kraus(&[pauli_matrix(p, n)]);
        out += &conj * s * &conj;
    }
    Ok(out / Complex64::new(group.len() as f64, 0.0))
}

pub fn amplitude_damping(gamma: f64) -> DMatrix<Complex64> {
    let c = |v: f64| Complex64::new(v, 0.0);
    let k0 = DMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, c((1.0 - gamma).sqrt())]);
    let k1 = DMatrix::from_row_slice(2, 2, &[ZERO, c(gamma.sqrt()), ZERO, ZERO]);
    superop_from_kraus(&[k0, k1])
}

/// `(1 - p) rho + p I / d` on `n` qubits.
pub fn depolarizing(p: f64, n: usize) -> DMatrix<Complex64> {
    let group = pauli_group(n);
    let w = p / group.len() as f64;
    let kraus: Vec<DMatrix<Complex64>> = group
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let weight = if i == 0 { 1.0 - p + w } else { w };
            pauli_matrix(g, n) * Complex64::new(weight.sqrt(), 0.0)
        })
        .collect();
    superop_from_kraus(&kraus)
}

/// Random CPTP map from `n_kraus` Gaussian operators normalized by
/// `(sum K^dagger K)^{-1/2}`.
pub fn random_channel(n: usize, n_kraus: usize, rng: &mut impl Rng) -> DMatrix<Complex64> {
    let d = 1usize << n;
    let mut gauss = || {
        let (u1, u2): (f64, f64) = (rng.random::<f64>().max(f64::MIN_POSITIVE), rng.random());
        let r = (-2.0 * u1.ln()).sqrt();
        Complex64::new(r * (std::f64::consts::TAU * u2).cos(), r * (std::f64::consts::TAU * u2).sin())
    };
    let raw: Vec<DMatrix<Complex64>> = (0..n_kraus).map(|_| DMatrix::from_fn(d, d, |_, _| gauss())).collect();
    let mut m = DMatrix::zeros(d, d);
    for k in &raw {
        m += k.adjoint() * k;
    }
    let (vals, vecs) = hermitian_eigen(&m);
    let inv_sqrt = &vecs
        * DMatrix::from_diagonal(&vals.map(|v| Complex64::new(1.0 / v.sqrt(), 0.0)))
        * vecs.adjoint();
    let kraus: Vec<DMatrix<Complex64>> = raw.iter().map(|k| k * &inv_sqrt).collect();
    superop_from_kraus(&kraus)
}

// ---------------------------------------------------------------------------
// Readout error and twirled readout mitigation.

/// Independent per-qubit readout flips: `p01[q]` reads 1 from 0, `p10[q]`
/// reads 0 from 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReadoutModel {
    pub p01: Vec<f64>,
    pub p10: Vec<f64>,
}

impl ReadoutModel {
    pub fn perfect(n_qubits: usize) -> ReadoutModel {
        ReadoutModel { p01: vec![0.0; n_qubits], p10: vec![0.0; n_qubits] }
    }

    pub fn uniform(n_qubits: usize, p01: f64, p10: f64) -> Result<ReadoutModel> {
        let m = ReadoutModel { p01: vec![p01; n_qubits], p10: vec![p10; n_qubits] };
        m.validate()?;
        Ok(m)
    }

    pub fn n_qubits(&self) -> usize {
        self.p01.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.p01.len() != self.p10.len() {
            return Err(KqdError::Validation("p01 and p10 lengths differ".into()));
        }
        if self.p01.iter().chain(&self.p10).any(|p| !(0.0..0.5).contains(p)) {
            return Err(KqdError::Validation("readout flip probabilities must lie in [0, 1/2)".into()));
        }
        Ok(())
    }

    /// Record the outcome of measuring `ideal` after flipping the qubits in
    /// `mask` (undone classically afterwards).
    pub fn measure(&self, ideal: u64, mask: u64, rng: &mut impl Rng) -> u64 {
        let physical = ideal ^ mask;
        let mut read = physical;
        for q in 0..self.n_qubits() {
            let p = if physical >> q & 1 == 0 { self.p01[q] } else { self.p10[q] };
            if p > 0.0 && rng.random::<f64>() < p {
                read ^= 1 << q;
            }
        }
        read ^ mask
    }

    /// Twirled factor for a Z-type observable on `support`:
    /// `prod_q (1 - p01 - p10)`.
    pub fn twirled_factor(&self, support: u64) -> f64 {
        (0..self.n_qubits()).filter(|q| support >> q & 1 == 1).map(|q| 1.0 - self.p01[q] - self.p10[q]).product()
    }

    fn random_mask(&self, rng: &mut impl Rng) -> u64 {
        let n = self.n_qubits();
        let all = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
        rng.random::<u64>() & all
    }
}

pub const DEFAULT_TREX_FLOOR: f64 = 0.05;

/// Readout factors learned from twirled calibration shots on `|0...0>`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trex {
    /// `(support mask, factor)` pairs.
    pub factors: Vec<(u64, f64)>,
    pub floor: f64,
    pub shots: u64,
}

impl Trex {
    /// Perfect-readout factors (all one).
    pub fn identity() -> Trex {
        Trex { factors: Vec::new(), floor: DEFAULT_TREX_FLOOR, shots: 0 }
    }

    pub fn learn(
        readout: &ReadoutModel,
        supports: &[u64],
        shots: u64,
        floor: f64,
        rng: &mut impl Rng,
    ) -> Result<Trex> {
        readout.validate()?;
        if shots == 0 {
            return Err(KqdError::Validation("calibration needs at least one shot".into()));
        }
        let mut unique: Vec<u64> = supports.iter().copied().filter(|&s| s != 0).collect();
        unique.sort_unstable();
        unique.dedup();
        let mut sums = vec![0i64; unique.len()];
        for _ in 0..shots {
            let mask = readout.random_mask(rng);
            let read = readout.measure(0, mask, rng);
            for (sum, s) in sums.iter_mut().zip(&unique) {
                *sum += if (read & s).count_ones() % 2 == 0 { 1 } else { -1 };
            }
        }
        let factors: Vec<(u64, f64)> =
            unique.iter().zip(&sums).map(|(&s, &sum)| (s, sum as f64 / shots as f64)).collect();
        for &(s, f) in &factors {
            if f < floor {
                return Err(KqdError::Numerical(format!(
                    "readout signal lost: factor {f:.4} on support {s:#x} below floor {floor}"
                )));
            }
        }
        Ok(Trex { factors, floor, shots })
    }

    pub fn factor(&self, support: u64) -> Result<f64> {
        if support == 0 || self.shots == 0 {
            return Ok(1.0);
        }
        self.factors
            .binary_search_by_key(&support, |&(s, _)| s)
            .map(|i| self.factors[i].1)
            .map_err(|_| KqdError::Validation(format!("no readout calibration for support {support:#x}")))
    }

    pub fn mitigate(&self, support: u64, raw: f64) -> Result<f64> {
        Ok(raw / self.factor(support)?)
    }
}

/// Learn the factor for one Z-type support and divide it out.
pub fn trex_mitigate(
    raw: f64,
    support: u64,
    readout: &ReadoutModel,
    calibration_shots: u64,
    rng: &mut impl Rng,
) -> Result<f64> {
    Trex::learn(readout, &[support], calibration_shots, DEFAULT_TREX_FLOOR, rng)?.mitigate(support, raw)
}

// ---------------------------------------------------------------------------
// Zero-noise extrapolation.

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtrapolationMethod {
    Exponential,
    Linear,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtrapolationResult {
    pub gains: Vec<f64>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub method: ExtrapolationMethod,
    /// Value at zero gain.
    pub value: f64,
    pub value_std: f64,
    pub chi2_exp: f64,
    pub chi2_lin: f64,
    /// `std(a) / |a|` of the exponential fit.
    pub std_ratio: f64,
}

/// Fit `a + b G` and `a exp(-b G)`; keep the exponential only when its zero-gain
/// value lies in `[-1, 1]`, it fits better than the line and its relative
/// uncertainty is below one half.
pub fn extrapolate(gains: &[f64], means: &[f64], stds: &[f64]) -> Result<ExtrapolationResult> {
    if gains.len() != means.len() || gains.len() != stds.len() {
        return Err(KqdError::Validation("gains, means and stds differ in length".into()));
    }
    let mut distinct = gains.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(KqdError::Validation("extrapolation needs at least two distinct gains".into()));
    }
    if means.iter().chain(stds).chain(gains).any(|v| !v.is_finite()) {
        return Err(KqdError::Validation("non-finite extrapolation input".into()));
    }
    let lin = fit_linear(gains, means, Some(stds));
    let exp: WeightedFit = fit_exponential(gains, means, Some(stds));
    let a = exp.params[0];
    let std_ratio = if a != 0.0 { exp.std[0] / a.abs() } else { f64::INFINITY };
    let use_exp = exp.converged
        && a.is_finite()
        && (-1.0..=1.0).contains(&a)
        && exp.chi2 < lin.chi2
        && std_ratio < 0.5;
    let (method, value, value_std) = if use_exp {
        (ExtrapolationMethod::Exponential, a, exp.std[0])
    } else {
        (ExtrapolationMethod::Linear, lin.params[0], lin.std[0])
    };
    Ok(ExtrapolationResult {
        gains: gains.to_vec(),
        means: means.to_vec(),
        stds: stds.to_vec(),
        method,
        value,
        value_std,
        chi2_exp: exp.chi2,
        chi2_lin: lin.chi2,
        std_ratio,
    })
}

// ---------------------------------------------------------------------------
// Noisy Hadamard-test runs.

/// Per-layer noise models keyed by layer id, plus readout error.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSpec {
    pub name: String,
    pub n_qubits: usize,
    pub models: BTreeMap<String, PauliLindbladModel>,
    pub readout: ReadoutModel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpecFile {
    pub name: String,
    pub n_qubits: usize,
    pub layers: Vec<ModelFile>,
    pub readout: ReadoutModel,
}

impl NoiseSpec {
    pub fn noiseless(n_qubits: usize) -> NoiseSpec {
        NoiseSpec {
            name: "noiseless".into(),
            n_qubits,
            models: BTreeMap::new(),
            readout: ReadoutModel::perfect(n_qubits),
        }
    }

    /// Local models of uniform `rate` for every layer id in `circuits`.
    pub fn uniform_local(
        device: &EdgeColoredLattice,
        circuits: &[&LayeredCircuit],
        rate: f64,
        readout: ReadoutModel,
    ) -> Result<NoiseSpec> {
        let mut models = BTreeMap::new();
        for c in circuits {
            for layer in c.layers.iter().filter(|l| l.is_two_qubit()) {
                if !models.contains_key(&layer.id()) {
                    // Layers sharing an id act on the same color class; take
                    // the full class so every instance is covered.
                    let color = layer.color.expect("two-qubit layer has a color");
                    let full = Layer {
                        color: Some(color),
                        gates: device
                            .color_class(color)
                            .map(|e| crate::circuits::Gate::Cx { control: e.a, target: e.b })
                            .collect(),
                    };
                    let mut m = PauliLindbladModel::local(&full, device, rate)?;
                    m.layer = layer.id();
                    models.insert(layer.id(), m);
                }
            }
        }
        let spec = NoiseSpec { name: format!("local-{rate:e}"), n_qubits: device.n_sites(), models, readout };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.readout.validate()?;
        if self.readout.n_qubits() != self.n_qubits {
            return Err(KqdError::Validation("readout model width differs from the noise model".into()));
        }
        for (id, m) in &self.models {
            if id != &m.layer || m.n_qubits != self.n_qubits {
                return Err(KqdError::Validation(format!("model {id} is inconsistent with the spec")));
            }
        }
        Ok(())
    }

    pub fn to_file(&self) -> NoiseSpecFile {
        NoiseSpecFile {
            name: self.name.clone(),
            n_qubits: self.n_qubits,
            layers: self.models.values().map(|m| m.to_file()).collect(),
            readout: self.readout.clone(),
        }
    }

    pub fn from_file(file: &NoiseSpecFile) -> Result<NoiseSpec> {
        let mut models = BTreeMap::new();
        for m in &file.layers {
            let model = PauliLindbladModel::from_file(m, file.n_qubits)?;
            if models.insert(model.layer.clone(), model).is_some() {
                return Err(KqdError::Validation(format!("duplicate model for layer {}", m.layer)));
            }
        }
        let spec = NoiseSpec { name: file.name.clone(), n_qubits: file.n_qubits, models, readout: file.readout.clone() };
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("noise spec serializes")
    }

    pub fn from_json(text: &str) -> Result<NoiseSpec> {
        NoiseSpec::from_file(&serde_json::from_str(text)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoisyRunConfig {
    pub gains: Vec<f64>,
    pub twirls: usize,
    pub shots: u64,
    pub calibration_shots: u64,
    pub seed: u64,
}

impl NoisyRunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gains.is_empty() || self.gains.iter().any(|g| !(g.is_finite() && *g >= 1.0)) {
            return Err(KqdError::Validation("gains must be non-empty and at least 1".into()));
        }
        if self.twirls == 0 || self.shots == 0 {
            return Err(KqdError::Validation("twirls and shots must be positive".into()));
        }
        Ok(())
    }
}

/// Outcomes of one twirl instance: `plus[j]` counts `+1` results for the
/// `j`-th observable covered by the basis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwirlRecord {
    pub gain: usize,
    pub distance: usize,
    pub basis: usize,
    pub twirl: usize,
    pub plus: Vec<u32>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mitigation {
    /// Raw data at the lowest gain.
    None,
    /// Readout-mitigated data at the lowest gain.
    Readout,
    /// Readout mitigation and zero-noise extrapolation over all gains.
    Full,
}

/// Mean and standard error of one observable at one gain and distance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std: f64,
}

/// A noisy Hadamard-test experiment with its retained twirl-level data.
pub struct NoisyExperiment {
    pub setup: HadamardSetup,
    pub spec: NoiseSpec,
    pub config: NoisyRunConfig,
    pub d_max: usize,
    pub dt: f64,
    pub step_phase: f64,
    pub trex: Trex,
    pub records: Vec<TwirlRecord>,
    pub mitigation: Mitigation,
}

fn rotate_to_basis(state: &mut DenseState, assignment: &[Pauli]) {
    for (q, p) in assignment.iter().enumerate() {
        match p {
            Pauli::X => state.apply_h(q),
            Pauli::Y => {
                state.apply_sdg(q);
                state.apply_h(q);
            }
            Pauli::Z | Pauli::I => {}
        }
    }
}

fn apply_noisy(
    circ: &LayeredCircuit,
    state: &mut DenseState,
    spec: &NoiseSpec,
    gain: f64,
    rng: &mut impl Rng,
) -> Result<()> {
    for layer in &circ.layers {
        apply_layer_dense(layer, state);
        if let Some(model) = spec.models.get(&layer.id()) {
            let e = sample_error(model, gain, rng)?;
            if !e.is_identity() {
                state.apply_pauli(&e);
            }
        }
    }
    Ok(())
}

fn widen(circ: &LayeredCircuit, n_qubits: usize) -> Result<LayeredCircuit> {
    let mut c = LayeredCircuit::new(n_qubits, Some(n_qubits - 1), circ.layers.clone())?;
    c.vacuum_phase = circ.vacuum_phase;
    Ok(c)
}

impl NoisyExperiment {
    /// Simulate every `(gain, distance, basis, twirl)` instance as one
    /// stochastic Pauli-error trajectory with its own readout X-mask, then
    /// draw `shots` outcomes from it.
    pub fn run(
        layout: &Layout,
        target: &PreparationTarget,
        step: &LayeredCircuit,
        d_max: usize,
        dt: f64,
        spec: &NoiseSpec,
        config: &NoisyRunConfig,
    ) -> Result<NoisyExperiment> {
        config.validate()?;
        spec.validate()?;
        let n = layout.device().n_sites();
        if spec.n_qubits != n {
            return Err(KqdError::Validation(format!(
                "noise spec covers {} qubits, device has {n}",
                spec.n_qubits
            )));
        }
        if d_max < 1 {
            return Err(KqdError::Validation("Krylov dimension must be positive".into()));
        }
        DenseState::zero(n)?;
        let setup = HadamardSetup::new(layout.system(), target)?;
        let prep = synthesize_controlled_prep(layout, target)?;
        let step_dev = widen(step, n)?;
        let step_phase = crate::circuits::vacuum_phase(step)?;

        let supports: Vec<u64> = setup.observables.iter().map(|o| o.measured.pauli.support()).collect();
        let trex = Trex::learn(
            &spec.readout,
            &supports,
            config.calibration_shots.max(1),
            DEFAULT_TREX_FLOOR,
            &mut task_rng(config.seed, task_id(&[u64::MAX])),
        )?;

        let mut tasks = Vec::new();
        for g in 0..config.gains.len() {
            for d in 1..d_max {
                for b in 0..setup.bases.len() {
                    for t in 0..config.twirls {
                        tasks.push((g, d, b, t));
                    }
                }
            }
        }
        let records: Vec<TwirlRecord> = tasks
            .into_par_iter()
            .map(|(g, d, b, t)| {
                let mut rng = task_rng(config.seed, task_id(&[g as u64, d as u64, b as u64, t as u64]));
                let mut state = DenseState::zero(n)?;
                apply_noisy(&prep, &mut state, spec, config.gains[g], &mut rng)?;
                for _ in 0..d {
                    apply_noisy(&step_dev, &mut state, spec, config.gains[g], &mut rng)?;
                }
                rotate_to_basis(&mut state, &setup.bases[b].assignment);
                let probs = state.probabilities();
                let mut cdf = Vec::with_capacity(probs.len());
                let mut acc = 0.0;
                for p in probs {
                    acc += p;
                    cdf.push(acc);
                }
                let mask = spec.readout.random_mask(&mut rng);
                let covered = &setup.coverage[b];
                let mut plus = vec![0u32; covered.len()];
                for _ in 0..config.shots {
                    let u = rng.random::<f64>() * acc;
                    let ideal = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1) as u64;
                    let read = spec.readout.measure(ideal, mask, &mut rng);
                    for (slot, &i) in plus.iter_mut().zip(covered) {
                        let o = &setup.observables[i].measured;
                        let parity = (read & o.pauli.support()).count_ones() % 2 == 0;
                        if parity != o.negative {
                            *slot += 1;
                        }
                    }
                }
                Ok(TwirlRecord { gain: g, distance: d, basis: b, twirl: t, plus })
            })
            .collect::<Result<_>>()?;

        Ok(NoisyExperiment {
            setup,
            spec: spec.clone(),
            config: config.clone(),
            d_max,
            dt,
            step_phase,
            trex,
            records,
            mitigation: Mitigation::Full,
        })
    }

    /// Per-observable estimates indexed `[gain][distance][observable]`,
    /// readout-mitigated when `readout` is set. Standard errors come from the
    /// spread over twirl instances.
    pub fn estimates(&self, records: &[TwirlRecord], readout: bool) -> Result<Vec<Vec<Vec<Estimate>>>> {
        let n_obs = self.setup.observables.len();
        let n_g = self.config.gains.len();
        let shots = self.config.shots as f64;
        // (count, sum, sum of squares) of per-instance means.
        let mut acc = vec![vec![vec![(0usize, 0.0f64, 0.0f64); n_obs]; self.d_max]; n_g];
        for r in records {
            for (&i, &p) in self.setup.coverage[r.basis].iter().zip(&r.plus) {
                let m = (2.0 * p as f64 - shots) / shots;
                let a = &mut acc[r.gain][r.distance][i];
                a.0 += 1;
                a.1 += m;
                a.2 += m * m;
            }
        }
        acc.iter()
            .map(|per_d| {
                per_d
                    .iter()
                    .map(|per_o| {
                        per_o
                            .iter()
                            .enumerate()
                            .map(|(i, &(c, s, s2))| {
                                let (mean, std) = if c == 0 {
                                    (0.0, 0.0)
                                } else {
                                    let mean = s / c as f64;
                                    let std = if c > 1 {
                                        ((s2 - c as f64 * mean * mean).max(0.0) / (c - 1) as f64 / c as f64).sqrt()
                                    } else {
                                        ((1.0 - mean * mean).max(0.0) / shots).sqrt()
                                    };
                                    (mean, std)
                                };
                                if readout {
                                    let f = self.trex.factor(self.setup.observables[i].measured.pauli.support())?;
                                    Ok(Estimate { mean: mean / f, std: std / f })
                                } else {
                                    Ok(Estimate { mean, std })
                                }
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect()
    }

    fn lowest_gain(&self) -> usize {
        (0..self.config.gains.len())
            .min_by(|&a, &b| self.config.gains[a].total_cmp(&self.config.gains[b]))
            .expect("gains are non-empty")
    }

    /// Zero-noise extrapolations indexed `[distance][observable]` (empty at
    /// distance 0).
    pub fn extrapolations(&self, records: &[TwirlRecord]) -> Result<Vec<Vec<ExtrapolationResult>>> {
        let est = self.estimates(records, true)?;
        let gains = &self.config.gains;
        (0..self.d_max)
            .map(|d| {
                if d == 0 {
                    return Ok(Vec::new());
                }
                (0..self.setup.observables.len())
                    .map(|i| {
                        let means: Vec<f64> = (0..gains.len()).map(|g| est[g][d][i].mean).collect();
                        let stds: Vec<f64> = (0..gains.len()).map(|g| est[g][d][i].std).collect();
                        extrapolate(gains, &means, &stds)
                    })
                    .collect()
            })
            .collect()
    }

    pub fn pair_from(&self, records: &[TwirlRecord], mitigation: Mitigation) -> Result<KrylovPair> {
        let values: Vec<Vec<f64>> = match mitigation {
            Mitigation::None | Mitigation::Readout => {
                let est = self.estimates(records, mitigation == Mitigation::Readout)?;
                let g = self.lowest_gain();
                est[g].iter().map(|per_o| per_o.iter().map(|e| e.mean).collect()).collect()
            }
            Mitigation::Full => {
                if self.config.gains.len() < 2 {
                    return Err(KqdError::Validation("extrapolation needs at least two gains".into()));
                }
                self.extrapolations(records)?
                    .iter()
                    .map(|per_o| per_o.iter().map(|x| x.value).collect())
                    .collect()
            }
        };
        let provenance = Provenance::Noisy {
            model: self.spec.name.clone(),
            gains: self.config.gains.clone(),
            twirls: self.config.twirls,
            shots: self.config.shots,
            seed: self.config.seed,
        };
        self.setup.reconstruct(self.d_max, self.step_phase, self.dt, provenance, |d, i| values[d][i])
    }

    pub fn pair(&self, mitigation: Mitigation) -> Result<KrylovPair> {
        self.pair_from(&self.records, mitigation)
    }

    /// Redraw twirl instances with replacement inside every
    /// `(gain, distance, basis)` group.
    pub fn resample_records(&self, rng: &mut impl Rng) -> Vec<TwirlRecord> {
        let mut groups: BTreeMap<(usize, usize, usize), Vec<&TwirlRecord>> = BTreeMap::new();
        for r in &self.records {
            groups.entry((r.gain, r.distance, r.basis)).or_default().push(r);
        }
        let mut out = Vec::with_capacity(self.records.len());
        for members in groups.values() {
            for slot in 0..members.len() {
                let pick = members[rng.random_range(0..members.len())];
                out.push(TwirlRecord { twirl: slot, ..pick.clone() });
            }
        }
        out
    }
}

impl crate::solver::ResampleSource for NoisyExperiment {
    fn estimate(&self) -> Result<KrylovPair> {
        self.pair(self.mitigation)
    }

    fn resample(&self, rng: &mut ChaCha8Rng) -> Result<KrylovPair> {
        self.pair_from(&self.resample_records(rng), self.mitigation)
    }
}
