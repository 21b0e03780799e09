//! Krylov matrix pairs from exact inner products or emulated Hadamard tests.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuits::{
    build_trotter, measurement_bases, measured_observable, LayeredCircuit, MeasurementBasis,
    PreparationTarget, TrotterOrder,
};
use crate::error::{KqdError, Result};
use crate::lattice::EdgeColoredLattice;
use crate::linalg::{hermitize, unitary_evolution};
use crate::pauli::{Pauli, PauliString, SignedPauli};
use crate::rng::{task_id, task_rng};
use crate::sector_sim::{dense_sector_hamiltonian, SectorBasis, SectorState};

const ONE: Complex64 = Complex64::new(1.0, 0.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Structure {
    /// Entry `(j, k)` depends only on `k - j`.
    Toeplitz,
    /// Entries `<psi_j| H |psi_k>` from explicitly evolved basis states.
    Hermitian,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Provenance {
    Exact,
    Shots { n_shots: u64, seed: u64 },
    Noisy { model: String, gains: Vec<f64>, twirls: usize, shots: u64, seed: u64 },
}

/// Projected Hamiltonian and overlap matrices of a `D`-dimensional Krylov space.
#[derive(Clone, Debug, PartialEq)]
pub struct KrylovPair {
    pub h: DMatrix<Complex64>,
    pub s: DMatrix<Complex64>,
    pub structure: Structure,
    pub dt: f64,
    pub provenance: Provenance,
}

impl KrylovPair {
    /// Fill `H_{jk} = m_{k-j}` (`k >= j`) and its conjugate below the
    /// diagonal; likewise for `S` from `s`.
    pub fn from_toeplitz(m: &[Complex64], s: &[Complex64], dt: f64, provenance: Provenance) -> Result<Self> {
        if m.len() != s.len() || m.is_empty() {
            return Err(KqdError::Validation("Toeplitz sequences must be non-empty and equal length".into()));
        }
        let d = m.len();
        let fill = |seq: &[Complex64]| {
            DMatrix::from_fn(d, d, |j, k| if k >= j { seq[k - j] } else { seq[j - k].conj() })
        };
        let mut h = fill(m);
        let mut sm = fill(s);
        for j in 0..d {
            h[(j, j)] = Complex64::new(m[0].re, 0.0);
            sm[(j, j)] = Complex64::new(s[0].re, 0.0);
        }
        Ok(KrylovPair { h, s: sm, structure: Structure::Toeplitz, dt, provenance })
    }

    pub fn dim(&self) -> usize {
        self.h.nrows()
    }

    /// Leading `d x d` principal block.
    pub fn truncated(&self, d: usize) -> KrylovPair {
        KrylovPair {
            h: self.h.view((0, 0), (d, d)).into_owned(),
            s: self.s.view((0, 0), (d, d)).into_owned(),
            structure: self.structure,
            dt: self.dt,
            provenance: self.provenance.clone(),
        }
    }

    pub fn hermitized(mut self) -> KrylovPair {
        self.h = hermitize(&self.h);
        self.s = hermitize(&self.s);
        self
    }

    pub fn to_file(&self) -> KrylovPairFile {
        let flat = |m: &DMatrix<Complex64>| {
            let d = m.nrows();
            (0..d).flat_map(|j| (0..d).map(move |k| (j, k))).map(|(j, k)| [m[(j, k)].re, m[(j, k)].im]).collect()
        };
        KrylovPairFile {
            d: self.dim(),
            dt: self.dt,
            structure: self.structure,
            h: flat(&self.h),
            s: flat(&self.s),
            provenance: self.provenance.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("pair serializes")
    }

    pub fn from_json(text: &str) -> Result<KrylovPair> {
        let f: KrylovPairFile = serde_json::from_str(text)?;
        f.to_pair()
    }
}

/// On-disk pair: row-major `[re, im]` entries.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KrylovPairFile {
    pub d: usize,
    pub dt: f64,
    pub structure: Structure,
    pub h: Vec<[f64; 2]>,
    pub s: Vec<[f64; 2]>,
    pub provenance: Provenance,
}

impl KrylovPairFile {
    pub fn to_pair(&self) -> Result<KrylovPair> {
        let d = self.d;
        if self.h.len() != d * d || self.s.len() != d * d {
            return Err(KqdError::Validation(format!("pair file entries do not match D = {d}")));
        }
        let build = |v: &[[f64; 2]]| DMatrix::from_fn(d, d, |j, k| Complex64::new(v[j * d + k][0], v[j * d + k][1]));
        Ok(KrylovPair {
            h: build(&self.h),
            s: build(&self.s),
            structure: self.structure,
            dt: self.dt,
            provenance: self.provenance.clone(),
        })
    }
}

/// One application of the Krylov step operator `U` on a sector state.
pub trait Propagator: Sync {
    fn apply(&self, state: &mut SectorState) -> Result<()>;
    /// `phi` with `U |0...0> = e^{i phi} |0...0>`.
    fn vacuum_phase(&self) -> Result<f64>;
}

impl Propagator for LayeredCircuit {
    fn apply(&self, state: &mut SectorState) -> Result<()> {
        self.apply_sector(state)
    }

    fn vacuum_phase(&self) -> Result<f64> {
        crate::circuits::vacuum_phase(self)
    }
}

/// Exact `exp(-i H dt)` on a sector from dense diagonalization.
pub struct ExactPropagator {
    basis: Arc<SectorBasis>,
    unitary: DMatrix<Complex64>,
    phase: f64,
}

/// Largest sector dimension the dense exact propagator accepts.
pub const EXACT_PROPAGATOR_MAX_DIM: usize = 4096;

impl ExactPropagator {
    pub fn new(lat: &EdgeColoredLattice, k: usize, dt: f64) -> Result<ExactPropagator> {
        let basis = SectorBasis::with_budget(lat.n_sites(), k, EXACT_PROPAGATOR_MAX_DIM)?;
        let h = dense_sector_hamiltonian(lat, &basis).map(|x| Complex64::new(x, 0.0));
        Ok(ExactPropagator {
            unitary: unitary_evolution(&h, dt),
            basis,
            phase: -dt * lat.total_coupling(),
        })
    }
}

impl Propagator for ExactPropagator {
    fn apply(&self, state: &mut SectorState) -> Result<()> {
        if state.basis().k() != self.basis.k() || state.basis().n_sites() != self.basis.n_sites() {
            return Err(KqdError::Validation("state sector differs from propagator sector".into()));
        }
        let v = nalgebra::DVector::from_column_slice(state.amplitudes());
        let out = &self.unitary * v;
        *state = SectorState::from_amplitudes(Arc::clone(state.basis()), out.as_slice().to_vec())?;
        state.check_norm()
    }

    fn vacuum_phase(&self) -> Result<f64> {
        Ok(self.phase)
    }
}

fn reference_state(lat: &EdgeColoredLattice, target: &PreparationTarget) -> Result<SectorState> {
    if target.n_sites != lat.n_sites() {
        return Err(KqdError::Validation("target width does not match lattice".into()));
    }
    let basis = SectorBasis::new(lat.n_sites(), target.k())?;
    SectorState::basis_state(basis, target.bits)
}

/// Toeplitz pair from `m_d = <psi0| H U^d |psi0>`, `s_d = <psi0| U^d |psi0>`.
pub fn exact_elements_with(
    lat: &EdgeColoredLattice,
    target: &PreparationTarget,
    prop: &dyn Propagator,
    d: usize,
    dt: f64,
) -> Result<KrylovPair> {
    if d == 0 {
        return Err(KqdError::Validation("Krylov dimension must be positive".into()));
    }
    let psi0 = reference_state(lat, target)?;
    let h_psi0 = psi0.apply_hamiltonian(lat)?;
    let idx0 = psi0.basis().rank(target.bits);
    let mut m = vec![Complex64::new(lat.basis_state_energy(target.bits), 0.0)];
    let mut s = vec![ONE];
    let mut phi = psi0.clone();
    for _ in 1..d {
        prop.apply(&mut phi)?;
        m.push(h_psi0.inner_product(&phi)?);
        s.push(phi.amplitudes()[idx0]);
    }
    KrylovPair::from_toeplitz(&m, &s, dt, Provenance::Exact)
}

/// Toeplitz pair with the second-order Trotter circuit as step operator.
pub fn exact_elements(
    lat: &EdgeColoredLattice,
    target: &PreparationTarget,
    dt: f64,
    steps: usize,
    d: usize,
) -> Result<KrylovPair> {
    let circ = build_trotter(lat, dt, steps, TrotterOrder::Second)?;
    exact_elements_with(lat, target, &circ, d, dt)
}

/// General Hermitian pair `H_{jk} = <psi_j| H |psi_k>` with `psi_j = U^j psi0`.
pub fn exact_elements_hermitian_with(
    lat: &EdgeColoredLattice,
    target: &PreparationTarget,
    prop: &dyn Propagator,
    d: usize,
    dt: f64,
) -> Result<KrylovPair> {
    if d == 0 {
        return Err(KqdError::Validation("Krylov dimension must be positive".into()));
    }
    let mut states = vec![reference_state(lat, target)?];
    for j in 1..d {
        let mut next = states[j - 1].clone();
        prop.apply(&mut next)?;
        states.push(next);
    }
    let h_states: Vec<SectorState> = states
        .par_iter()
        .map(|s| s.apply_hamiltonian(lat))
        .collect::<Result<_>>()?;
    let mut h = DMatrix::zeros(d, d);
    let mut s = DMatrix::zeros(d, d);
    for j in 0..d {
        for k in j..d {
            h[(j, k)] = states[j].inner_product(&h_states[k])?;
            s[(j, k)] = states[j].inner_product(&states[k])?;
            h[(k, j)] = h[(j, k)].conj();
            s[(k, j)] = s[(j, k)].conj();
        }
    }
    Ok(KrylovPair { h, s, structure: Structure::Hermitian, dt, provenance: Provenance::Exact }.hermitized())
}

pub fn exact_elements_hermitian(
    lat: &EdgeColoredLattice,
    target: &PreparationTarget,
    dt: f64,
    steps: usize,
    d: usize,
) -> Result<KrylovPair> {
    let circ = build_trotter(lat, dt, steps, TrotterOrder::Second)?;
    exact_elements_hermitian_with(lat, target, &circ, d, dt)
}

/// An observable needed by the Hadamard test.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RequiredObservable {
    pub control: Pauli,
    /// System Hamiltonian term, or the identity for the overlap.
    pub term: PauliString,
    /// What is physically measured after the open-controlled second
    /// preparation, on system qubits plus the control (last index).
    pub measured: SignedPauli,
}

/// The measured observables, bases and bookkeeping for one Hadamard-test
/// experiment.
#[derive(Clone, Debug)]
pub struct HadamardSetup {
    pub lattice: EdgeColoredLattice,
    pub target: PreparationTarget,
    pub observables: Vec<RequiredObservable>,
    pub bases: Vec<MeasurementBasis>,
    /// `coverage[b]` lists observable indices diagonal in basis `b`.
    pub coverage: Vec<Vec<usize>>,
}

impl HadamardSetup {
    pub fn new(lat: &EdgeColoredLattice, target: &PreparationTarget) -> Result<HadamardSetup> {
        let bases = measurement_bases(lat, target)?;
        let mut observables = Vec::new();
        for control in [Pauli::X, Pauli::Y] {
            for term in crate::circuits::measured_terms(lat) {
                observables.push(RequiredObservable {
                    control,
                    term,
                    measured: measured_observable(&term, control, target)?,
                });
            }
        }
        let coverage: Vec<Vec<usize>> = bases
            .iter()
            .map(|b| {
                observables
                    .iter()
                    .enumerate()
                    .filter(|(_, o)| b.diagonalizes(&o.measured.pauli))
                    .map(|(i, _)| i)
                    .collect()
            })
            .collect();
        for (i, o) in observables.iter().enumerate() {
            if !coverage.iter().any(|c| c.contains(&i)) {
                return Err(KqdError::Validation(format!(
                    "observable {} not covered by any basis",
                    o.measured
                )));
            }
        }
        Ok(HadamardSetup { lattice: lat.clone(), target: target.clone(), observables, bases, coverage })
    }

    pub fn n_qubits(&self) -> usize {
        self.target.n_sites + 1
    }

    pub fn control(&self) -> usize {
        self.target.n_sites
    }

    /// Assemble the Toeplitz pair from per-distance observable values
    /// `value(d, i)` (`d >= 1`), the per-step vacuum phase and the exact
    /// diagonal.
    pub fn reconstruct(
        &self,
        d_max: usize,
        step_phase: f64,
        dt: f64,
        provenance: Provenance,
        value: impl Fn(usize, usize) -> f64,
    ) -> Result<KrylovPair> {
        let n_terms = self.observables.len() / 2;
        let mut m = vec![Complex64::new(self.lattice.basis_state_energy(self.target.bits), 0.0)];
        let mut s = vec![ONE];
        for d in 1..d_max {
            let correction = Complex64::from_polar(1.0, step_phase * d as f64);
            let g = |t: usize| correction * Complex64::new(value(d, t), value(d, t + n_terms));
            let mut md = ZERO;
            let mut sd = ZERO;
            for (t, obs) in self.observables[..n_terms].iter().enumerate() {
                if obs.term.is_identity() {
                    sd = g(t);
                    continue;
                }
                let coupling = self.term_coupling(&obs.term)?;
                // XX stands in for YY as well.
                let weight = if obs.term.z == 0 { 2.0 } else { 1.0 };
                md += g(t) * (coupling * weight);
            }
            m.push(md);
            s.push(sd);
        }
        Ok(KrylovPair::from_toeplitz(&m, &s, dt, provenance)?.hermitized())
    }

    fn term_coupling(&self, term: &PauliString) -> Result<f64> {
        let sites: Vec<usize> = term.support_sites().collect();
        self.lattice
            .edge_between(sites[0], sites[1])
            .map(|e| e.coupling)
            .ok_or_else(|| KqdError::Validation("term is not on a lattice edge".into()))
    }
}

/// `(e^{i phi} |0>_c |0^N> + |1>_c U^d |psi0>) / sqrt 2`, the register state
/// before the second controlled preparation.
pub struct TwoBranchState {
    pub vacuum_phase: f64,
    pub evolved: SectorState,
}

impl TwoBranchState {
    pub fn new(lat: &EdgeColoredLattice, target: &PreparationTarget, prop: &dyn Propagator, d: usize) -> Result<Self> {
        let mut evolved = reference_state(lat, target)?;
        for _ in 0..d {
            prop.apply(&mut evolved)?;
        }
        Ok(TwoBranchState { vacuum_phase: prop.vacuum_phase()? * d as f64, evolved })
    }

    /// Expectation of a signed Pauli on system qubits plus the control (index
    /// `N`).
    pub fn expectation(&self, obs: &SignedPauli) -> Result<f64> {
        let basis = self.evolved.basis();
        let n = basis.n_sites();
        let ctrl = obs.pauli.get(n);
        let mut sys = obs.pauli;
        sys.set(n, Pauli::I);
        // <chi0|P|chi0>: vacuum expectation.
        let vac = if sys.x == 0 { 1.0 } else { 0.0 };
        let evolved = self.evolved.expectation(&sys)?;
        // <chi0|P|chi1> = e^{-i phi} <0^N| P |chi1>
        let cross = if basis.contains(sys.x) {
            let (_, phase) = sys.apply_to_basis(sys.x);
            Complex64::from_polar(1.0, -self.vacuum_phase) * phase * self.evolved.amplitudes()[basis.rank(sys.x)]
        } else {
            ZERO
        };
        let value = match ctrl {
            Pauli::I => 0.5 * (vac + evolved),
            Pauli::Z => 0.5 * (vac - evolved),
            // <0|X|1> = <1|X|0> = 1
            Pauli::X => cross.re,
            // <0|Y|1> = -i
            Pauli::Y => (Complex64::new(0.0, -1.0) * cross).re,
        };
        Ok(obs.sign() * value)
    }
}

/// Exact expectations of the measured observables at Krylov distance `d`.
pub fn hadamard_test_expectations(
    setup: &HadamardSetup,
    prop: &dyn Propagator,
    d: usize,
) -> Result<Vec<f64>> {
    let state = TwoBranchState::new(&setup.lattice, &setup.target, prop, d)?;
    setup.observables.iter().map(|o| state.expectation(&o.measured)).collect()
}

/// Pair reconstructed from exact Hadamard-test expectations.
pub fn hadamard_pair(setup: &HadamardSetup, prop: &dyn Propagator, d_max: usize, dt: f64) -> Result<KrylovPair> {
    let values: Vec<Vec<f64>> = (0..d_max)
        .into_par_iter()
        .map(|d| if d == 0 { Ok(Vec::new()) } else { hadamard_test_expectations(setup, prop, d) })
        .collect::<Result<_>>()?;
    setup.reconstruct(d_max, prop.vacuum_phase()?, dt, Provenance::Exact, |d, i| values[d][i])
}

/// Number of `+1` outcomes out of `n` shots for a `+-1` observable.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub n: u64,
    pub plus: u64,
}

impl Counts {
    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (2.0 * self.plus as f64 - self.n as f64) / self.n as f64
        }
    }

    pub fn add(&mut self, other: Counts) {
        self.n += other.n;
        self.plus += other.plus;
    }

    /// Redraw the `+1` count from the empirical frequency.
    pub fn resample(&self, rng: &mut impl Rng) -> Counts {
        Counts { n: self.n, plus: binomial(self.n, self.plus as f64 / self.n.max(1) as f64, rng) }
    }
}

fn binomial(n: u64, p: f64, rng: &mut impl Rng) -> u64 {
    let p = p.clamp(0.0, 1.0);
    if p == 0.0 || n == 0 {
        return 0;
    }
    if p == 1.0 {
        return n;
    }
    Binomial::new(n, p).expect("valid binomial parameters").sample(rng)
}

/// Draw `n_shots` `+-1` outcomes per expectation value.
pub fn sample_shots(expectations: &[f64], n_shots: u64, rng: &mut impl Rng) -> Result<Vec<Counts>> {
    if n_shots == 0 {
        return Err(KqdError::Validation("n_shots must be positive".into()));
    }
    expectations
        .iter()
        .map(|&e| {
            if !(e.abs() <= 1.0 + 1e-9) {
                return Err(KqdError::Validation(format!("expectation {e} outside [-1, 1]")));
            }
            Ok(Counts { n: n_shots, plus: binomial(n_shots, (1.0 + e.clamp(-1.0, 1.0)) / 2.0, rng) })
        })
        .collect()
}

/// Shot counts for one observable in one measurement setting.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShotRecord {
    pub gain: usize,
    pub distance: usize,
    pub basis: usize,
    pub twirl: usize,
    pub observable: usize,
    pub counts: Counts,
}

/// Retained shot-level data for estimation and bootstrapping.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ShotData {
    pub records: Vec<ShotRecord>,
}

impl ShotData {
    /// Pooled counts per `(gain, distance, observable)`, indexed
    /// `[gain][distance][observable]`.
    pub fn pooled(&self, n_gains: usize, d_max: usize, n_obs: usize) -> Vec<Vec<Vec<Counts>>> {
        let mut out = vec![vec![vec![Counts::default(); n_obs]; d_max]; n_gains];
        for r in &self.records {
            out[r.gain][r.distance][r.observable].add(r.counts);
        }
        out
    }

    pub fn resample(&self, rng: &mut impl Rng) -> ShotData {
        ShotData {
            records: self.records.iter().map(|r| ShotRecord { counts: r.counts.resample(rng), ..*r }).collect(),
        }
    }
}

/// Finite-shot Hadamard-test experiment on the noiseless sector simulator.
pub struct ShotExperiment {
    pub setup: HadamardSetup,
    pub d_max: usize,
    pub dt: f64,
    pub step_phase: f64,
    pub n_shots: u64,
    pub seed: u64,
    pub data: ShotData,
}

impl ShotExperiment {
    /// Each basis at each distance gets `n_shots`; every observable the basis
    /// diagonalizes is drawn independently from its exact expectation.
    pub fn run(
        setup: HadamardSetup,
        prop: &dyn Propagator,
        d_max: usize,
        dt: f64,
        n_shots: u64,
        seed: u64,
    ) -> Result<ShotExperiment> {
        if n_shots == 0 {
            return Err(KqdError::Validation("n_shots must be positive".into()));
        }
        let per_distance: Vec<Vec<ShotRecord>> = (1..d_max)
            .into_par_iter()
            .map(|d| {
                let exact = hadamard_test_expectations(&setup, prop, d)?;
                let mut records = Vec::new();
                for (b, covered) in setup.coverage.iter().enumerate() {
                    let mut rng = task_rng(seed, task_id(&[d as u64, b as u64]));
                    let values: Vec<f64> = covered.iter().map(|&i| exact[i]).collect();
                    let counts = sample_shots(&values, n_shots, &mut rng)?;
                    for (&i, c) in covered.iter().zip(counts) {
                        records.push(ShotRecord { gain: 0, distance: d, basis: b, twirl: 0, observable: i, counts: c });
                    }
                }
                Ok(records)
            })
            .collect::<Result<_>>()?;
        let data = ShotData { records: per_distance.into_iter().flatten().collect() };
        Ok(ShotExperiment { step_phase: prop.vacuum_phase()?, setup, d_max, dt, n_shots, seed, data })
    }

    pub fn pair_from(&self, data: &ShotData) -> Result<KrylovPair> {
        let pooled = data.pooled(1, self.d_max, self.setup.observables.len());
        self.setup.reconstruct(
            self.d_max,
            self.step_phase,
            self.dt,
            Provenance::Shots { n_shots: self.n_shots, seed: self.seed },
            |d, i| pooled[0][d][i].mean(),
        )
    }

    pub fn pair(&self) -> Result<KrylovPair> {
        self.pair_from(&self.data)
    }
}

impl crate::solver::ResampleSource for ShotExperiment {
    fn estimate(&self) -> Result<KrylovPair> {
        self.pair()
    }

    fn resample(&self, rng: &mut rand_chacha::ChaCha8Rng) -> Result<KrylovPair> {
        self.pair_from(&self.data.resample(rng))
    }
}
