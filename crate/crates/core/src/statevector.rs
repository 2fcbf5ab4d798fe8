//! Dense statevector simulation of a small qubit register.
//!
//! Basis ordering: qubit 0 is the most significant bit of the basis index,
//! so for `n` qubits the mask of qubit `q` is `1 << (n - 1 - q)`. Bit value 0
//! is the `+1` eigenstate of Z.

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ising::ProbTable;

/// Largest register the dense simulator accepts.
pub const MAX_QUBITS: usize = 20;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

type Mat2 = [[Complex64; 2]; 2];

fn check_size(n_qubits: usize) -> Result<()> {
    if n_qubits == 0 || n_qubits > MAX_QUBITS {
        return Err(Error::Size(n_qubits));
    }
    Ok(())
}

#[inline]
fn mask(n_qubits: usize, qubit: usize) -> usize {
    1 << (n_qubits - 1 - qubit)
}

/// Single-qubit Pauli axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Pauli {
    X,
    Y,
    Z,
}

/// A real-weighted tensor product of Pauli operators. The empty product is
/// the identity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PauliTerm {
    pub coefficient: f64,
    factors: BTreeMap<usize, Pauli>,
}

impl PauliTerm {
    /// Builds a term, rejecting repeated qubit indices.
    pub fn new(coefficient: f64, factors: impl IntoIterator<Item = (usize, Pauli)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (q, p) in factors {
            if map.insert(q, p).is_some() {
                return Err(Error::Config(format!("qubit {q} repeated in Pauli term")));
            }
        }
        Ok(Self { coefficient, factors: map })
    }

    pub fn identity(coefficient: f64) -> Self {
        Self { coefficient, factors: BTreeMap::new() }
    }

    /// Unit-coefficient single-qubit Pauli.
    pub fn single(qubit: usize, pauli: Pauli) -> Self {
        Self { coefficient: 1.0, factors: BTreeMap::from([(qubit, pauli)]) }
    }

    pub fn factors(&self) -> &BTreeMap<usize, Pauli> {
        &self.factors
    }

    pub fn with_coefficient(mut self, coefficient: f64) -> Self {
        self.coefficient = coefficient;
        self
    }

    /// Operator product of two unit Pauli strings on disjoint qubits.
    pub fn disjoint_product(&self, other: &PauliTerm) -> Result<PauliTerm> {
        PauliTerm::new(
            self.coefficient * other.coefficient,
            self.factors.iter().chain(other.factors.iter()).map(|(&q, &p)| (q, p)),
        )
    }

    /// Same term with every qubit index moved up by `offset`.
    pub fn shifted(&self, offset: usize) -> PauliTerm {
        PauliTerm {
            coefficient: self.coefficient,
            factors: self.factors.iter().map(|(&q, &p)| (q + offset, p)).collect(),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn is_diagonal(&self) -> bool {
        self.factors.values().all(|&p| p == Pauli::Z)
    }

    fn max_qubit(&self) -> Option<usize> {
        self.factors.keys().next_back().copied()
    }

    fn check_indices(&self, n_qubits: usize) -> Result<()> {
        match self.max_qubit() {
            Some(q) if q >= n_qubits => Err(Error::QubitIndex { index: q, n_qubits }),
            _ => Ok(()),
        }
    }

    /// Bit-flip mask, plus a closure-free description of the phase picked up
    /// by basis state `z`: `P|z> = phase(z) |z ^ flip>`.
    fn action(&self, n_qubits: usize) -> PauliAction {
        let mut flip = 0;
        let mut y_mask = 0;
        let mut z_mask = 0;
        for (&q, &p) in &self.factors {
            let m = mask(n_qubits, q);
            match p {
                Pauli::X => flip |= m,
                Pauli::Y => {
                    flip |= m;
                    y_mask |= m;
                }
                Pauli::Z => z_mask |= m,
            }
        }
        PauliAction { flip, y_mask, z_mask, n_y: y_mask.count_ones() }
    }
}

impl fmt::Display for PauliTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.coefficient)?;
        if self.factors.is_empty() {
            return write!(f, "·I");
        }
        for (q, p) in &self.factors {
            write!(f, "·{:?}{}", p, q)?;
        }
        Ok(())
    }
}

struct PauliAction {
    flip: usize,
    y_mask: usize,
    z_mask: usize,
    n_y: u32,
}

impl PauliAction {
    // Y|0> = i|1>, Y|1> = -i|0>, Z|1> = -|1>.
    #[inline]
    fn phase(&self, z: usize) -> Complex64 {
        let minus = (z & self.z_mask).count_ones() + (z & self.y_mask).count_ones();
        let base = match self.n_y % 4 {
            0 => ONE,
            1 => I,
            2 => -ONE,
            _ => -I,
        };
        if minus % 2 == 1 {
            -base
        } else {
            base
        }
    }
}

/// Hermitian operator written as a real combination of Pauli strings.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PauliSum {
    pub terms: Vec<PauliTerm>,
}

impl PauliSum {
    pub fn new(terms: Vec<PauliTerm>) -> Self {
        Self { terms }
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    /// Concatenation of both term lists.
    pub fn plus(&self, other: &PauliSum) -> PauliSum {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        PauliSum { terms }
    }
}

/// Concrete gate kinds the simulator knows how to apply.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GateKind {
    /// `exp(-i θ σ_y / 2)`
    Ry,
    /// `exp(-i θ σ_x / 2)`
    Rx,
    /// `|0><0| ⊗ I + |1><1| ⊗ RY(θ)`
    Cry,
    H,
    X,
    /// `diag(1, e^{iθ})`
    Phase,
}

/// A gate with its angle and qubit placement.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub kind: GateKind,
    pub angle: f64,
    pub target: usize,
    pub control: Option<usize>,
}

impl Gate {
    pub fn ry(angle: f64, target: usize) -> Self {
        Self { kind: GateKind::Ry, angle, target, control: None }
    }

    pub fn rx(angle: f64, target: usize) -> Self {
        Self { kind: GateKind::Rx, angle, target, control: None }
    }

    pub fn cry(angle: f64, control: usize, target: usize) -> Self {
        Self { kind: GateKind::Cry, angle, target, control: Some(control) }
    }

    pub fn h(target: usize) -> Self {
        Self { kind: GateKind::H, angle: 0.0, target, control: None }
    }

    pub fn x(target: usize) -> Self {
        Self { kind: GateKind::X, angle: 0.0, target, control: None }
    }

    pub fn phase(angle: f64, target: usize) -> Self {
        Self { kind: GateKind::Phase, angle, target, control: None }
    }

    /// Same gate shifted by `offset` qubits.
    pub fn shifted(mut self, offset: usize) -> Self {
        self.target += offset;
        self.control = self.control.map(|c| c + offset);
        self
    }

    fn matrix(&self) -> Mat2 {
        let (s, c) = (self.angle / 2.0).sin_cos();
        let c = Complex64::new(c, 0.0);
        match self.kind {
            GateKind::Ry | GateKind::Cry => {
                let s = Complex64::new(s, 0.0);
                [[c, -s], [s, c]]
            }
            GateKind::Rx => {
                let mis = Complex64::new(0.0, -s);
                [[c, mis], [mis, c]]
            }
            GateKind::H => {
                let r = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
                [[r, r], [r, -r]]
            }
            GateKind::X => [[ZERO, ONE], [ONE, ZERO]],
            GateKind::Phase => [[ONE, ZERO], [ZERO, Complex64::from_polar(1.0, self.angle)]],
        }
    }

    fn validate(&self, n_qubits: usize) -> Result<()> {
        if self.target >= n_qubits {
            return Err(Error::QubitIndex { index: self.target, n_qubits });
        }
        match (self.kind, self.control) {
            (GateKind::Cry, Some(c)) => {
                if c >= n_qubits {
                    return Err(Error::QubitIndex { index: c, n_qubits });
                }
                if c == self.target {
                    return Err(Error::ControlIsTarget(c));
                }
                Ok(())
            }
            (GateKind::Cry, None) => Err(Error::Config("CRY gate without control".into())),
            (_, Some(_)) => Err(Error::Config(format!("{:?} gate takes no control", self.kind))),
            (_, None) => Ok(()),
        }
    }
}

/// Dense `2^n` amplitude vector with unit norm.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    /// `|++⋯+>` on `n_qubits` qubits.
    pub fn plus(n_qubits: usize) -> Result<Self> {
        check_size(n_qubits)?;
        let dim = 1usize << n_qubits;
        let a = Complex64::new((dim as f64).sqrt().recip(), 0.0);
        Ok(Self { n_qubits, amplitudes: vec![a; dim] })
    }

    /// Computational basis state `|index>`.
    pub fn basis(n_qubits: usize, index: usize) -> Result<Self> {
        check_size(n_qubits)?;
        let dim = 1usize << n_qubits;
        if index >= dim {
            return Err(Error::Dimension { expected: dim, got: index });
        }
        let mut amplitudes = vec![ZERO; dim];
        amplitudes[index] = ONE;
        Ok(Self { n_qubits, amplitudes })
    }

    /// Wraps raw amplitudes, normalizing them.
    pub fn from_amplitudes(n_qubits: usize, mut amplitudes: Vec<Complex64>) -> Result<Self> {
        check_size(n_qubits)?;
        let dim = 1usize << n_qubits;
        if amplitudes.len() != dim {
            return Err(Error::Dimension { expected: dim, got: amplitudes.len() });
        }
        let norm = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::NonFinite(format!("state norm {norm}")));
        }
        amplitudes.iter_mut().for_each(|a| *a /= norm);
        Ok(Self { n_qubits, amplitudes })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn apply_gate(&mut self, gate: &Gate) -> Result<()> {
        gate.validate(self.n_qubits)?;
        let m = gate.matrix();
        match gate.control {
            Some(c) => self.apply_1q(&m, gate.target, Some((c, true))),
            None => self.apply_1q(&m, gate.target, None),
        }
        Ok(())
    }

    pub fn apply_gates<'a>(&mut self, gates: impl IntoIterator<Item = &'a Gate>) -> Result<()> {
        for g in gates {
            self.apply_gate(g)?;
        }
        Ok(())
    }

    fn apply_1q(&mut self, m: &Mat2, target: usize, control: Option<(usize, bool)>) {
        let n = self.n_qubits;
        let t = mask(n, target);
        let (cmask, cval) = match control {
            Some((c, v)) => (mask(n, c), if v { mask(n, c) } else { 0 }),
            None => (0, 0),
        };
        for z0 in 0..self.amplitudes.len() {
            if z0 & t != 0 || z0 & cmask != cval {
                continue;
            }
            let z1 = z0 | t;
            let a0 = self.amplitudes[z0];
            let a1 = self.amplitudes[z1];
            self.amplitudes[z0] = m[0][0] * a0 + m[0][1] * a1;
            self.amplitudes[z1] = m[1][0] * a0 + m[1][1] * a1;
        }
    }

    /// Applies the Pauli string of `term` as a unitary. The coefficient is
    /// ignored.
    pub fn apply_pauli(&mut self, term: &PauliTerm) -> Result<()> {
        term.check_indices(self.n_qubits)?;
        let act = term.action(self.n_qubits);
        let mut out = vec![ZERO; self.amplitudes.len()];
        for (z, &a) in self.amplitudes.iter().enumerate() {
            out[z ^ act.flip] = act.phase(z) * a;
        }
        self.amplitudes = out;
        Ok(())
    }

    /// Applies the Pauli string of `term` only on the subspace where
    /// `control` reads `value`.
    pub fn apply_controlled_pauli(&mut self, control: usize, value: bool, term: &PauliTerm) -> Result<()> {
        term.check_indices(self.n_qubits)?;
        if control >= self.n_qubits {
            return Err(Error::QubitIndex { index: control, n_qubits: self.n_qubits });
        }
        if term.factors.contains_key(&control) {
            return Err(Error::ControlIsTarget(control));
        }
        let act = term.action(self.n_qubits);
        let cmask = mask(self.n_qubits, control);
        let cval = if value { cmask } else { 0 };
        let mut out = self.amplitudes.clone();
        for (z, &a) in self.amplitudes.iter().enumerate() {
            if z & cmask == cval {
                out[z ^ act.flip] = act.phase(z) * a;
            }
        }
        self.amplitudes = out;
        Ok(())
    }

    /// `op |self>` as raw (generally unnormalized) amplitudes.
    pub fn apply_operator(&self, op: &PauliSum) -> Result<Vec<Complex64>> {
        let mut out = vec![ZERO; self.amplitudes.len()];
        for term in &op.terms {
            term.check_indices(self.n_qubits)?;
            let act = term.action(self.n_qubits);
            for (z, &a) in self.amplitudes.iter().enumerate() {
                out[z ^ act.flip] += term.coefficient * act.phase(z) * a;
            }
        }
        Ok(out)
    }

    /// `<self| op |self>`.
    pub fn expectation(&self, op: &PauliSum) -> Result<f64> {
        let mut total = ZERO;
        let mut scale = 0.0;
        for term in &op.terms {
            term.check_indices(self.n_qubits)?;
            let act = term.action(self.n_qubits);
            let mut acc = ZERO;
            for (z, &a) in self.amplitudes.iter().enumerate() {
                acc += self.amplitudes[z ^ act.flip].conj() * act.phase(z) * a;
            }
            total += term.coefficient * acc;
            scale += term.coefficient.abs();
        }
        debug_assert!(
            total.im.abs() <= 1e-10 * scale.max(1.0),
            "expectation of Hermitian operator has imaginary part {}",
            total.im
        );
        Ok(total.re)
    }

    /// `<self|other>`.
    pub fn inner_product(&self, other: &StateVector) -> Result<Complex64> {
        if self.n_qubits != other.n_qubits {
            return Err(Error::Dimension { expected: self.n_qubits, got: other.n_qubits });
        }
        Ok(dot(&self.amplitudes, &other.amplitudes))
    }

    /// `|<self|other>|^2`.
    pub fn fidelity(&self, other: &StateVector) -> Result<f64> {
        Ok(self.inner_product(other)?.norm_sqr().min(1.0))
    }

    /// Computational-basis measurement probabilities.
    pub fn basis_distribution(&self) -> ProbTable {
        ProbTable::from_unchecked(self.amplitudes.iter().map(|a| a.norm_sqr()).collect())
    }
}

/// `Σ conj(a_z) b_z`.
pub fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}
