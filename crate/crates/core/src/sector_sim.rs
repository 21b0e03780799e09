//! State-vector simulation restricted to a fixed-Hamming-weight sector, plus a
//! small dense full-space simulator used for noisy trajectories and oracles.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{KqdError, Result};
use crate::lattice::EdgeColoredLattice;
use crate::linalg;
use crate::pauli::PauliString;

/// Default ceiling on sector dimension for simulation and ground-state solves.
pub const DEFAULT_SECTOR_BUDGET: usize = 4_000_000;
/// Default qubit cap of the dense backend.
pub const DEFAULT_DENSE_CAP: usize = 16;
/// Norm drift that is reported as a numerical failure.
pub const NORM_DRIFT_LIMIT: f64 = 1e-8;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc as u64
}

/// Weight-`k` bitstrings on `n_sites` bits in colexicographic order, which for
/// bitmasks coincides with increasing numeric value.
#[derive(Debug)]
pub struct SectorBasis {
    n_sites: usize,
    k: usize,
    // binom[i][j] = C(i, j) for i <= n_sites, j <= k
    binom: Vec<Vec<u64>>,
    states: Vec<u64>,
}

impl SectorBasis {
    pub fn new(n_sites: usize, k: usize) -> Result<Arc<SectorBasis>> {
        Self::with_budget(n_sites, k, DEFAULT_SECTOR_BUDGET)
    }

    pub fn with_budget(n_sites: usize, k: usize, budget: usize) -> Result<Arc<SectorBasis>> {
        if n_sites == 0 || n_sites > 63 {
            return Err(KqdError::Validation(format!("n_sites = {n_sites} outside 1..=63")));
        }
        if k > n_sites {
            return Err(KqdError::Validation(format!("k = {k} exceeds n_sites = {n_sites}")));
        }
        let dim = binomial(n_sites, k);
        if dim > budget as u64 {
            return Err(KqdError::Budget(format!(
                "sector C({n_sites},{k}) = {dim} exceeds budget {budget}"
            )));
        }
        let binom = (0..=n_sites)
            .map(|i| (0..=k).map(|j| binomial(i, j)).collect())
            .collect();
        let mut states = Vec::with_capacity(dim as usize);
        if k == 0 {
            states.push(0);
        } else {
            // Gosper's hack walks weight-k masks in increasing order.
            let mut v: u64 = (1u64 << k) - 1;
            let limit = 1u64 << n_sites;
            while v < limit {
                states.push(v);
                let t = v | (v - 1);
                let w = (t + 1) | (((!t & (t + 1)) - 1) >> (v.trailing_zeros() + 1));
                v = w;
            }
        }
        debug_assert_eq!(states.len() as u64, dim);
        Ok(Arc::new(SectorBasis { n_sites, k, binom, states }))
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[u64] {
        &self.states
    }

    /// Combinadic rank: sum over the i-th lowest set bit `c_i` of `C(c_i, i)`.
    pub fn rank(&self, bits: u64) -> usize {
        debug_assert_eq!(bits.count_ones() as usize, self.k);
        let mut rest = bits;
        let mut r = 0u64;
        let mut i = 1;
        while rest != 0 {
            let c = rest.trailing_zeros() as usize;
            r += self.binom[c][i];
            rest &= rest - 1;
            i += 1;
        }
        r as usize
    }

    pub fn unrank(&self, index: usize) -> u64 {
        let mut r = index as u64;
        let mut bits = 0u64;
        let mut c = self.n_sites;
        for i in (1..=self.k).rev() {
            // largest c with C(c, i) <= r
            c -= 1;
            while self.binom[c][i] > r {
                c -= 1;
            }
            r -= self.binom[c][i];
            bits |= 1 << c;
        }
        bits
    }

    pub fn contains(&self, bits: u64) -> bool {
        bits.count_ones() as usize == self.k && (bits >> self.n_sites) == 0
    }
}

/// Amplitudes over a [`SectorBasis`].
#[derive(Clone, Debug)]
pub struct SectorState {
    basis: Arc<SectorBasis>,
    amplitudes: Vec<Complex64>,
}

impl SectorState {
    pub fn basis_state(basis: Arc<SectorBasis>, bits: u64) -> Result<SectorState> {
        if !basis.contains(bits) {
            return Err(KqdError::Validation(format!(
                "bitstring {bits:#b} not in weight-{} sector of {} sites",
                basis.k(),
                basis.n_sites()
            )));
        }
        let mut amplitudes = vec![ZERO; basis.dim()];
        amplitudes[basis.rank(bits)] = Complex64::new(1.0, 0.0);
        Ok(SectorState { basis, amplitudes })
    }

    pub fn from_amplitudes(basis: Arc<SectorBasis>, amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.len() != basis.dim() {
            return Err(KqdError::Validation(format!(
                "amplitude length {} does not match sector dimension {}",
                amplitudes.len(),
                basis.dim()
            )));
        }
        Ok(SectorState { basis, amplitudes })
    }

    pub fn basis(&self) -> &Arc<SectorBasis> {
        &self.basis
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn check_norm(&self) -> Result<()> {
        let drift = (self.norm() - 1.0).abs();
        if drift > NORM_DRIFT_LIMIT {
            log::warn!("sector state norm drift {drift:e}");
            return Err(KqdError::Numerical(format!("state norm drifted by {drift:e}")));
        }
        Ok(())
    }

    fn check_edge(&self, i: usize, j: usize) -> Result<()> {
        let n = self.basis.n_sites();
        if i == j || i >= n || j >= n {
            return Err(KqdError::Validation(format!("invalid edge ({i}, {j}) for {n} sites")));
        }
        Ok(())
    }

    /// Apply `exp(-i angle (X_i X_j + Y_i Y_j + Z_i Z_j))`.
    pub fn apply_heisenberg_edge(&mut self, i: usize, j: usize, angle: f64) -> Result<()> {
        self.check_edge(i, j)?;
        let (triplet, singlet) = heisenberg_phases(angle);
        let mask = (1u64 << i) | (1u64 << j);
        let lo = 1u64 << i;
        let basis = Arc::clone(&self.basis);
        for (idx, &b) in basis.states().iter().enumerate() {
            match b & mask {
                0 => self.amplitudes[idx] *= triplet,
                m if m == mask => self.amplitudes[idx] *= triplet,
                m if m == lo => {
                    let partner = basis.rank(b ^ mask);
                    let a = self.amplitudes[idx];
                    let c = self.amplitudes[partner];
                    let (na, nc) = mix_pair(a, c, triplet, singlet);
                    self.amplitudes[idx] = na;
                    self.amplitudes[partner] = nc;
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Apply `exp(-i angle Z_q / 2)`.
    pub fn apply_rz(&mut self, q: usize, angle: f64) -> Result<()> {
        if q >= self.basis.n_sites() {
            return Err(KqdError::Validation(format!("qubit {q} out of range")));
        }
        let down = Complex64::from_polar(1.0, -angle / 2.0);
        let up = Complex64::from_polar(1.0, angle / 2.0);
        for (a, &b) in self.amplitudes.iter_mut().zip(self.basis.states()) {
            *a *= if (b >> q) & 1 == 0 { down } else { up };
        }
        Ok(())
    }

    pub fn inner_product(&self, other: &SectorState) -> Result<Complex64> {
        if !same_basis(&self.basis, &other.basis) {
            return Err(KqdError::Validation("inner product across different sectors".into()));
        }
        Ok(self.amplitudes.iter().zip(&other.amplitudes).map(|(a, b)| a.conj() * b).sum())
    }

    /// `<self| P |other>`; zero when `P` leaves the sector.
    pub fn matrix_element(&self, pauli: &PauliString, other: &SectorState) -> Result<Complex64> {
        if !same_basis(&self.basis, &other.basis) {
            return Err(KqdError::Validation("matrix element across different sectors".into()));
        }
        let n = self.basis.n_sites();
        if n < 64 && pauli.support() >> n != 0 {
            return Err(KqdError::Validation("Pauli support outside lattice".into()));
        }
        if pauli.x.count_ones() % 2 == 1 {
            return Ok(ZERO);
        }
        let basis = &self.basis;
        Ok(basis
            .states()
            .iter()
            .zip(&other.amplitudes)
            .filter(|(_, a)| a.norm_sqr() > 0.0)
            .filter_map(|(&b, a)| {
                let (image, phase) = pauli.apply_to_basis(b);
                basis.contains(image).then(|| self.amplitudes[basis.rank(image)].conj() * phase * a)
            })
            .sum())
    }

    pub fn expectation(&self, pauli: &PauliString) -> Result<f64> {
        Ok(self.matrix_element(pauli, self)?.re)
    }

    /// `H |self>` for the Heisenberg Hamiltonian of `lat` (not normalized).
    pub fn apply_hamiltonian(&self, lat: &EdgeColoredLattice) -> Result<SectorState> {
        if lat.n_sites() != self.basis.n_sites() {
            return Err(KqdError::Validation("lattice and sector size differ".into()));
        }
        let basis = &self.basis;
        let src = &self.amplitudes;
        let out: Vec<Complex64> = basis
            .states()
            .par_iter()
            .enumerate()
            .map(|(idx, &b)| {
                let mut acc = ZERO;
                for e in lat.edges() {
                    let bi = (b >> e.a) & 1;
                    let bj = (b >> e.b) & 1;
                    if bi == bj {
                        acc += src[idx] * e.coupling;
                    } else {
                        acc -= src[idx] * e.coupling;
                        let partner = basis.rank(b ^ ((1 << e.a) | (1 << e.b)));
                        acc += src[partner] * (2.0 * e.coupling);
                    }
                }
                acc
            })
            .collect();
        Ok(SectorState { basis: Arc::clone(basis), amplitudes: out })
    }

    pub fn energy(&self, lat: &EdgeColoredLattice) -> Result<f64> {
        Ok(self.inner_product(&self.apply_hamiltonian(lat)?)?.re)
    }

    pub fn scale(&mut self, factor: Complex64) {
        for a in &mut self.amplitudes {
            *a *= factor;
        }
    }
}

fn same_basis(a: &Arc<SectorBasis>, b: &Arc<SectorBasis>) -> bool {
    Arc::ptr_eq(a, b) || (a.n_sites() == b.n_sites() && a.k() == b.k())
}

/// Phases of the Heisenberg edge rotation on the triplet (`e^{-i angle}`)
/// and singlet (`e^{3 i angle}`) subspaces.
fn heisenberg_phases(angle: f64) -> (Complex64, Complex64) {
    (Complex64::from_polar(1.0, -angle), Complex64::from_polar(1.0, 3.0 * angle))
}

/// Rotate the (|01>, |10>) amplitude pair.
fn mix_pair(a: Complex64, c: Complex64, triplet: Complex64, singlet: Complex64) -> (Complex64, Complex64) {
    let plus = (a + c) * 0.5 * triplet;
    let minus = (a - c) * 0.5 * singlet;
    (plus + minus, plus - minus)
}

/// Real symmetric Heisenberg matrix of the sector, for dense oracles.
pub fn dense_sector_hamiltonian(lat: &EdgeColoredLattice, basis: &SectorBasis) -> DMatrix<f64> {
    let dim = basis.dim();
    let mut h = DMatrix::zeros(dim, dim);
    for (idx, &b) in basis.states().iter().enumerate() {
        for e in lat.edges() {
            if ((b >> e.a) & 1) == ((b >> e.b) & 1) {
                h[(idx, idx)] += e.coupling;
            } else {
                h[(idx, idx)] -= e.coupling;
                let partner = basis.rank(b ^ ((1 << e.a) | (1 << e.b)));
                h[(partner, idx)] += 2.0 * e.coupling;
            }
        }
    }
    h
}

fn sector_matvec(lat: &EdgeColoredLattice, basis: &SectorBasis, x: &[f64], y: &mut [f64]) {
    y.par_iter_mut().zip(basis.states().par_iter()).for_each(|(out, &b)| {
        let mut acc = 0.0;
        let idx = basis.rank(b);
        for e in lat.edges() {
            if ((b >> e.a) & 1) == ((b >> e.b) & 1) {
                acc += e.coupling * x[idx];
            } else {
                acc -= e.coupling * x[idx];
                acc += 2.0 * e.coupling * x[basis.rank(b ^ ((1 << e.a) | (1 << e.b)))];
            }
        }
        *out = acc;
    });
}

/// Lowest eigenvalue of the Heisenberg Hamiltonian in the `k`-particle sector.
pub fn sector_ground_energy(lat: &EdgeColoredLattice, k: usize) -> Result<f64> {
    sector_ground_energy_with_budget(lat, k, DEFAULT_SECTOR_BUDGET)
}

pub fn sector_ground_energy_with_budget(lat: &EdgeColoredLattice, k: usize, budget: usize) -> Result<f64> {
    let basis = SectorBasis::with_budget(lat.n_sites(), k, budget)?;
    if basis.dim() == 1 {
        return Ok(lat.basis_state_energy(basis.states()[0]));
    }
    linalg::lanczos_extreme(basis.dim(), false, |x, y| sector_matvec(lat, &basis, x, y))
}

/// Spectral radius of the Hamiltonian restricted to the `k`-particle sector.
pub fn sector_spectral_norm(lat: &EdgeColoredLattice, k: usize) -> Result<f64> {
    let basis = SectorBasis::new(lat.n_sites(), k)?;
    if basis.dim() == 1 {
        return Ok(lat.basis_state_energy(basis.states()[0]).abs());
    }
    let lo = linalg::lanczos_extreme(basis.dim(), false, |x, y| sector_matvec(lat, &basis, x, y))?;
    let hi = linalg::lanczos_extreme(basis.dim(), true, |x, y| sector_matvec(lat, &basis, x, y))?;
    Ok(lo.abs().max(hi.abs()))
}

/// Spectral radius of the full Hamiltonian: the largest sector radius. The
/// global spin flip maps sector `k` onto `N - k`, so only `k <= N / 2` is
/// scanned.
pub fn spectral_norm(lat: &EdgeColoredLattice) -> Result<f64> {
    (0..=lat.n_sites() / 2).try_fold(0.0f64, |acc, k| Ok(acc.max(sector_spectral_norm(lat, k)?)))
}

/// Full-space state vector on at most `cap` qubits; qubit `q` is bit `q` of
/// the amplitude index.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseState {
    n_qubits: usize,
    amplitudes: Vec<Complex64>,
}

impl DenseState {
    pub fn zero(n_qubits: usize) -> Result<DenseState> {
        Self::zero_with_cap(n_qubits, DEFAULT_DENSE_CAP)
    }

    pub fn zero_with_cap(n_qubits: usize, cap: usize) -> Result<DenseState> {
        Self::basis_with_cap(n_qubits, 0, cap)
    }

    pub fn basis_state(n_qubits: usize, bits: u64) -> Result<DenseState> {
        Self::basis_with_cap(n_qubits, bits, DEFAULT_DENSE_CAP)
    }

    fn basis_with_cap(n_qubits: usize, bits: u64, cap: usize) -> Result<DenseState> {
        if n_qubits > cap {
            return Err(KqdError::Budget(format!(
                "{n_qubits} qubits exceed the dense backend cap of {cap}"
            )));
        }
        if bits >> n_qubits != 0 {
            return Err(KqdError::Validation(format!("bitstring {bits:#b} too wide")));
        }
        let mut amplitudes = vec![ZERO; 1 << n_qubits];
        amplitudes[bits as usize] = Complex64::new(1.0, 0.0);
        Ok(DenseState { n_qubits, amplitudes })
    }

    pub fn from_amplitudes(n_qubits: usize, amplitudes: Vec<Complex64>) -> Result<DenseState> {
        if amplitudes.len() != 1usize << n_qubits {
            return Err(KqdError::Validation("amplitude vector length is not 2^n".into()));
        }
        Ok(DenseState { n_qubits, amplitudes })
    }

    /// Embed a sector state into the full space of the same width.
    pub fn from_sector(state: &SectorState) -> Result<DenseState> {
        let n = state.basis().n_sites();
        let mut dense = DenseState::zero(n)?;
        dense.amplitudes[0] = ZERO;
        for (&b, &a) in state.basis().states().iter().zip(state.amplitudes()) {
            dense.amplitudes[b as usize] = a;
        }
        Ok(dense)
    }

    /// Restrict to a sector; fails if weight leaks outside it.
    pub fn to_sector(&self, basis: Arc<SectorBasis>, tol: f64) -> Result<SectorState> {
        let mut amps = vec![ZERO; basis.dim()];
        for (b, &a) in self.amplitudes.iter().enumerate() {
            if basis.contains(b as u64) {
                amps[basis.rank(b as u64)] = a;
            } else if a.norm() > tol {
                return Err(KqdError::Validation(format!("amplitude outside sector at {b:#b}")));
            }
        }
        SectorState::from_amplitudes(basis, amps)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn check_norm(&self) -> Result<()> {
        let drift = (self.norm() - 1.0).abs();
        if drift > NORM_DRIFT_LIMIT {
            log::warn!("dense state norm drift {drift:e}");
            return Err(KqdError::Numerical(format!("state norm drifted by {drift:e}")));
        }
        Ok(())
    }

    fn check_qubit(&self, q: usize) {
        assert!(q < self.n_qubits, "qubit {q} out of range for {} qubits", self.n_qubits);
    }

    pub fn apply_pauli(&mut self, pauli: &PauliString) {
        if self.n_qubits < 64 {
            assert!(pauli.support() >> self.n_qubits == 0, "Pauli support out of range");
        }
        if pauli.is_identity() {
            return;
        }
        let mut out = vec![ZERO; self.amplitudes.len()];
        for (b, &a) in self.amplitudes.iter().enumerate() {
            let (image, phase) = pauli.apply_to_basis(b as u64);
            out[image as usize] = phase * a;
        }
        self.amplitudes = out;
    }

    /// Apply a 2x2 unitary `[[u00, u01], [u10, u11]]` to qubit `q`.
    pub fn apply_1q(&mut self, q: usize, u: [[Complex64; 2]; 2]) {
        self.check_qubit(q);
        let bit = 1usize << q;
        for b in 0..self.amplitudes.len() {
            if b & bit == 0 {
                let a0 = self.amplitudes[b];
                let a1 = self.amplitudes[b | bit];
                self.amplitudes[b] = u[0][0] * a0 + u[0][1] * a1;
                self.amplitudes[b | bit] = u[1][0] * a0 + u[1][1] * a1;
            }
        }
    }

    pub fn apply_h(&mut self, q: usize) {
        let s = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        self.apply_1q(q, [[s, s], [s, -s]]);
    }

    pub fn apply_sdg(&mut self, q: usize) {
        let one = Complex64::new(1.0, 0.0);
        self.apply_1q(q, [[one, ZERO], [ZERO, Complex64::new(0.0, -1.0)]]);
    }

    pub fn apply_s(&mut self, q: usize) {
        let one = Complex64::new(1.0, 0.0);
        self.apply_1q(q, [[one, ZERO], [ZERO, Complex64::new(0.0, 1.0)]]);
    }

    pub fn apply_rz(&mut self, q: usize, angle: f64) {
        self.apply_1q(
            q,
            [
                [Complex64::from_polar(1.0, -angle / 2.0), ZERO],
                [ZERO, Complex64::from_polar(1.0, angle / 2.0)],
            ],
        );
    }

    pub fn apply_cx(&mut self, control: usize, target: usize) {
        self.check_qubit(control);
        self.check_qubit(target);
        assert_ne!(control, target);
        let cb = 1usize << control;
        let tb = 1usize << target;
        for b in 0..self.amplitudes.len() {
            if b & cb != 0 && b & tb == 0 {
                self.amplitudes.swap(b, b | tb);
            }
        }
    }

    pub fn apply_heisenberg_edge(&mut self, i: usize, j: usize, angle: f64) {
        self.check_qubit(i);
        self.check_qubit(j);
        assert_ne!(i, j);
        let (triplet, singlet) = heisenberg_phases(angle);
        let bi = 1usize << i;
        let bj = 1usize << j;
        for b in 0..self.amplitudes.len() {
            match (b & bi != 0, b & bj != 0) {
                (false, false) | (true, true) => self.amplitudes[b] *= triplet,
                (true, false) => {
                    let partner = b ^ bi ^ bj;
                    let (na, nc) =
                        mix_pair(self.amplitudes[b], self.amplitudes[partner], triplet, singlet);
                    self.amplitudes[b] = na;
                    self.amplitudes[partner] = nc;
                }
                (false, true) => {}
            }
        }
    }

    pub fn inner_product(&self, other: &DenseState) -> Complex64 {
        assert_eq!(self.n_qubits, other.n_qubits);
        self.amplitudes.iter().zip(&other.amplitudes).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn expectation(&self, pauli: &PauliString) -> f64 {
        let mut acc = ZERO;
        for (b, &a) in self.amplitudes.iter().enumerate() {
            if a.norm_sqr() == 0.0 {
                continue;
            }
            let (image, phase) = pauli.apply_to_basis(b as u64);
            acc += self.amplitudes[image as usize].conj() * phase * a;
        }
        acc.re
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }
}
