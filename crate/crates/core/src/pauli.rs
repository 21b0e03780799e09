//! Pauli strings in symplectic (x, z) form over at most 64 qubits.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{KqdError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    fn bits(self) -> (bool, bool) {
        match self {
            Pauli::I => (false, false),
            Pauli::X => (true, false),
            Pauli::Y => (true, true),
            Pauli::Z => (false, true),
        }
    }

    fn from_bits(x: bool, z: bool) -> Pauli {
        match (x, z) {
            (false, false) => Pauli::I,
            (true, false) => Pauli::X,
            (true, true) => Pauli::Y,
            (false, true) => Pauli::Z,
        }
    }

    pub fn from_char(c: char) -> Option<Pauli> {
        match c {
            'I' | '_' => Some(Pauli::I),
            'X' => Some(Pauli::X),
            'Y' => Some(Pauli::Y),
            'Z' => Some(Pauli::Z),
            _ => None,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }
}

/// Hermitian Pauli product. Bit `q` of `x`/`z` describes qubit `q`; a qubit
/// with both bits set carries `Y` (not `XZ`).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PauliString {
    pub x: u64,
    pub z: u64,
}

impl PauliString {
    pub const IDENTITY: PauliString = PauliString { x: 0, z: 0 };

    pub fn from_ops(ops: &[(usize, Pauli)]) -> PauliString {
        let mut p = PauliString::IDENTITY;
        for &(q, op) in ops {
            p.set(q, op);
        }
        p
    }

    pub fn single(q: usize, op: Pauli) -> PauliString {
        PauliString::from_ops(&[(q, op)])
    }

    /// Parse a dense label such as `"XIZY"` where character `i` is qubit `i`.
    pub fn from_label(label: &str) -> Result<PauliString> {
        let mut p = PauliString::IDENTITY;
        for (q, c) in label.chars().enumerate() {
            let op = Pauli::from_char(c)
                .ok_or_else(|| KqdError::Validation(format!("bad Pauli character {c:?}")))?;
            if q >= 64 {
                return Err(KqdError::Validation("Pauli label longer than 64 qubits".into()));
            }
            p.set(q, op);
        }
        Ok(p)
    }

    pub fn label(&self, n: usize) -> String {
        (0..n).map(|q| self.get(q).as_char()).collect()
    }

    pub fn get(&self, q: usize) -> Pauli {
        Pauli::from_bits((self.x >> q) & 1 == 1, (self.z >> q) & 1 == 1)
    }

    pub fn set(&mut self, q: usize, op: Pauli) {
        let (x, z) = op.bits();
        let mask = 1u64 << q;
        self.x = (self.x & !mask) | if x { mask } else { 0 };
        self.z = (self.z & !mask) | if z { mask } else { 0 };
    }

    pub fn support(&self) -> u64 {
        self.x | self.z
    }

    pub fn weight(&self) -> u32 {
        self.support().count_ones()
    }

    pub fn is_identity(&self) -> bool {
        self.support() == 0
    }

    pub fn support_sites(&self) -> impl Iterator<Item = usize> {
        let s = self.support();
        (0..64).filter(move |q| (s >> q) & 1 == 1)
    }

    pub fn commutes_with(&self, other: &PauliString) -> bool {
        ((self.x & other.z) ^ (self.z & other.x)).count_ones() % 2 == 0
    }

    /// `P |b> = phase * |b ^ x>`.
    pub fn apply_to_basis(&self, b: u64) -> (u64, Complex64) {
        let ny = (self.x & self.z).count_ones();
        let sign_flips = (b & self.z).count_ones();
        let mut phase = match ny % 4 {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, 1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, -1.0),
        };
        if sign_flips % 2 == 1 {
            phase = -phase;
        }
        (b ^ self.x, phase)
    }

    /// Product `self * other` as a phase times a Pauli string.
    pub fn mul(&self, other: &PauliString) -> (Complex64, PauliString) {
        // Track the phase qubit by qubit via the single-qubit algebra.
        let mut phase = Complex64::new(1.0, 0.0);
        let support = self.support() | other.support();
        for q in (0..64).filter(|q| (support >> q) & 1 == 1) {
            phase *= single_product_phase(self.get(q), other.get(q));
        }
        (phase, PauliString { x: self.x ^ other.x, z: self.z ^ other.z })
    }
}

fn single_product_phase(a: Pauli, b: Pauli) -> Complex64 {
    use Pauli::*;
    let i = Complex64::new(0.0, 1.0);
    match (a, b) {
        (X, Y) | (Y, Z) | (Z, X) => i,
        (Y, X) | (Z, Y) | (X, Z) => -i,
        _ => Complex64::new(1.0, 0.0),
    }
}

/// `±P` for Hermitian Pauli `P`; the image of a Pauli under Clifford conjugation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SignedPauli {
    pub negative: bool,
    pub pauli: PauliString,
}

impl SignedPauli {
    pub fn positive(pauli: PauliString) -> SignedPauli {
        SignedPauli { negative: false, pauli }
    }

    pub fn sign(&self) -> f64 {
        if self.negative {
            -1.0
        } else {
            1.0
        }
    }

    /// `CX_{c,t} P CX_{c,t}`.
    pub fn conjugate_cx(mut self, control: usize, target: usize) -> SignedPauli {
        let xc = (self.pauli.x >> control) & 1;
        let zc = (self.pauli.z >> control) & 1;
        let xt = (self.pauli.x >> target) & 1;
        let zt = (self.pauli.z >> target) & 1;
        if xc & zt & (xt ^ zc ^ 1) == 1 {
            self.negative = !self.negative;
        }
        self.pauli.x ^= xc << target;
        self.pauli.z ^= zt << control;
        self
    }

    /// `X_q P X_q`.
    pub fn conjugate_x(mut self, q: usize) -> SignedPauli {
        if (self.pauli.z >> q) & 1 == 1 {
            self.negative = !self.negative;
        }
        self
    }
}

impl fmt::Display for SignedPauli {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let top = 64 - self.pauli.support().leading_zeros() as usize;
        write!(f, "{}{}", if self.negative { "-" } else { "+" }, self.pauli.label(top.max(1)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(label: &str) -> PauliString {
        PauliString::from_label(label).unwrap()
    }

    #[test]
    fn basis_action() {
        // X|0> = |1>, Z|1> = -|1>, Y|0> = i|1>
        assert_eq!(p("X").apply_to_basis(0), (1, Complex64::new(1.0, 0.0)));
        assert_eq!(p("Z").apply_to_basis(1), (1, Complex64::new(-1.0, 0.0)));
        assert_eq!(p("Y").apply_to_basis(0), (1, Complex64::new(0.0, 1.0)));
        assert_eq!(p("Y").apply_to_basis(1), (0, Complex64::new(0.0, -1.0)));
    }

    #[test]
    fn commutation() {
        assert!(p("XX").commutes_with(&p("ZZ")));
        assert!(!p("XI").commutes_with(&p("ZI")));
        assert!(p("XI").commutes_with(&p("IZ")));
    }

    #[test]
    fn cnot_identities() {
        let cases = [
            ("XX", false, "XI"),
            ("XI", false, "XX"),
            ("YI", false, "YX"),
            ("YX", false, "YI"),
            ("XZ", true, "YY"),
            ("YZ", false, "XY"),
        ];
        for (input, neg, out) in cases {
            let got = SignedPauli::positive(p(input)).conjugate_cx(0, 1);
            assert_eq!(got, SignedPauli { negative: neg, pauli: p(out) }, "{input}");
        }
    }

    #[test]
    fn products() {
        let (ph, r) = p("X").mul(&p("Y"));
        assert_eq!(r, p("Z"));
        assert_eq!(ph, Complex64::new(0.0, 1.0));
    }
}
