//! Parametrized circuits and their gate-derivative expansions.
//!
//! Every parametrized gate `U_k(θ_k)` satisfies
//! `dU_k/dθ_k = Σ_i a_{k,i} U_k û_{k,i}` with unitary Pauli strings `û_{k,i}`,
//! which lets every derivative state be written as a short list of
//! circuits with one extra Pauli inserted.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::statevector::{Gate, GateKind, Pauli, PauliTerm, StateVector};

/// One parametrized gate of a [`ParamCircuit`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamGate {
    pub kind: GateKind,
    pub target: usize,
    pub control: Option<usize>,
    pub param_index: usize,
}

impl ParamGate {
    pub fn ry(target: usize, param_index: usize) -> Self {
        Self { kind: GateKind::Ry, target, control: None, param_index }
    }

    pub fn rx(target: usize, param_index: usize) -> Self {
        Self { kind: GateKind::Rx, target, control: None, param_index }
    }

    pub fn cry(control: usize, target: usize, param_index: usize) -> Self {
        Self { kind: GateKind::Cry, target, control: Some(control), param_index }
    }

    /// Concrete gate at angle `theta`.
    pub fn at(&self, theta: f64) -> Gate {
        Gate { kind: self.kind, angle: theta, target: self.target, control: self.control }
    }

    fn validate(&self, n_qubits: usize) -> Result<()> {
        match (self.kind, self.control) {
            (GateKind::Ry | GateKind::Rx, None) => {}
            (GateKind::Cry, Some(c)) => {
                if c == self.target {
                    return Err(Error::ControlIsTarget(c));
                }
                if c >= n_qubits {
                    return Err(Error::QubitIndex { index: c, n_qubits });
                }
            }
            (kind, control) => {
                return Err(Error::Config(format!("unsupported parametrized gate {kind:?} with control {control:?}")))
            }
        }
        if self.target >= n_qubits {
            return Err(Error::QubitIndex { index: self.target, n_qubits });
        }
        Ok(())
    }
}

/// `a_{k,i}` together with the Pauli string `û_{k,i}` (unit coefficient).
#[derive(Clone, Debug, PartialEq)]
pub struct DerivativeTerm {
    pub coefficient: Complex64,
    pub insertion: PauliTerm,
}

/// Derivative expansion of a single parametrized gate.
///
/// `RY`/`RX` have generator `σ/2`, giving one term with `a = -i/2`. For
/// `CRY = |0><0|⊗I + |1><1|⊗RY` the projector `|1><1| = (I - Z)/2` splits the
/// generator into `(I⊗Y - Z⊗Y)/4`.
pub fn derivative_expansion(gate: &ParamGate) -> Result<Vec<DerivativeTerm>> {
    let half = Complex64::new(0.0, -0.5);
    let quarter = Complex64::new(0.0, -0.25);
    match (gate.kind, gate.control) {
        (GateKind::Ry, None) => {
            Ok(vec![DerivativeTerm { coefficient: half, insertion: PauliTerm::single(gate.target, Pauli::Y) }])
        }
        (GateKind::Rx, None) => {
            Ok(vec![DerivativeTerm { coefficient: half, insertion: PauliTerm::single(gate.target, Pauli::X) }])
        }
        (GateKind::Cry, Some(c)) => Ok(vec![
            DerivativeTerm { coefficient: quarter, insertion: PauliTerm::single(gate.target, Pauli::Y) },
            DerivativeTerm {
                coefficient: -quarter,
                insertion: PauliTerm::new(1.0, [(c, Pauli::Z), (gate.target, Pauli::Y)])?,
            },
        ]),
        (kind, _) => Err(Error::Config(format!("no derivative expansion for {kind:?}"))),
    }
}

/// Ordered list of parametrized gates acting on `|++⋯+>`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCircuit")]
pub struct ParamCircuit {
    n_qubits: usize,
    gates: Vec<ParamGate>,
    #[serde(skip)]
    position: Vec<usize>,
}

#[derive(Deserialize)]
struct RawCircuit {
    n_qubits: usize,
    gates: Vec<ParamGate>,
}

impl TryFrom<RawCircuit> for ParamCircuit {
    type Error = Error;

    fn try_from(raw: RawCircuit) -> Result<Self> {
        ParamCircuit::new(raw.n_qubits, raw.gates)
    }
}

impl ParamCircuit {
    /// Validates gate placement and that parameter indices cover `0..P`
    /// exactly once.
    pub fn new(n_qubits: usize, gates: Vec<ParamGate>) -> Result<Self> {
        if n_qubits == 0 || n_qubits > crate::statevector::MAX_QUBITS {
            return Err(Error::Size(n_qubits));
        }
        let mut position = vec![usize::MAX; gates.len()];
        for (pos, g) in gates.iter().enumerate() {
            g.validate(n_qubits)?;
            let slot = position
                .get_mut(g.param_index)
                .ok_or(Error::ParamIndex { index: g.param_index, count: gates.len() })?;
            if *slot != usize::MAX {
                return Err(Error::Config(format!("parameter {} used twice", g.param_index)));
            }
            *slot = pos;
        }
        Ok(Self { n_qubits, gates, position })
    }

    /// The 4-qubit layout generalized to `n` qubits: an `RY` and an `RX` on
    /// every qubit, `CRY(i→j)` for all `i < j` in lexicographic order, then
    /// a closing `CRY(n-1 → 0)`.
    pub fn fig2(n_qubits: usize) -> Result<Self> {
        if n_qubits < 2 {
            return Err(Error::Config(format!("ansatz needs at least 2 qubits, got {n_qubits}")));
        }
        let mut gates = Vec::new();
        let mut k = 0;
        let mut next = || {
            k += 1;
            k - 1
        };
        for q in 0..n_qubits {
            gates.push(ParamGate::ry(q, next()));
        }
        for q in 0..n_qubits {
            gates.push(ParamGate::rx(q, next()));
        }
        for (i, j) in crate::ising::pairs(n_qubits) {
            gates.push(ParamGate::cry(i, j, next()));
        }
        gates.push(ParamGate::cry(n_qubits - 1, 0, next()));
        Self::new(n_qubits, gates)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn n_params(&self) -> usize {
        self.gates.len()
    }

    pub fn gates(&self) -> &[ParamGate] {
        &self.gates
    }

    /// Gate carrying parameter `k`, with its position in circuit order.
    pub fn gate_for_param(&self, k: usize) -> Result<(usize, &ParamGate)> {
        let pos = *self.position.get(k).ok_or(Error::ParamIndex { index: k, count: self.n_params() })?;
        Ok((pos, &self.gates[pos]))
    }

    /// Concrete gates at parameter vector `theta`, in circuit order.
    pub fn bind(&self, theta: &[f64]) -> Result<Vec<Gate>> {
        self.check_theta(theta)?;
        Ok(self.gates.iter().map(|g| g.at(theta[g.param_index])).collect())
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.n_params() {
            return Err(Error::Dimension { expected: self.n_params(), got: theta.len() });
        }
        Ok(())
    }

    /// `U(θ)|++⋯+>`.
    pub fn prepare_state(&self, theta: &[f64]) -> Result<StateVector> {
        let gates = self.bind(theta)?;
        let mut state = StateVector::plus(self.n_qubits)?;
        state.apply_gates(&gates)?;
        Ok(state)
    }

    /// `(a_{k,i}, U_{k,i}|++⋯+>)` for every expansion term of parameter `k`,
    /// where `U_{k,i}` is the circuit with `û_{k,i}` applied just before
    /// gate `k`.
    pub fn derivative_state(&self, theta: &[f64], k: usize) -> Result<Vec<(Complex64, StateVector)>> {
        let gates = self.bind(theta)?;
        let (pos, gate) = self.gate_for_param(k)?;
        let mut prefix = StateVector::plus(self.n_qubits)?;
        prefix.apply_gates(&gates[..pos])?;
        derivative_expansion(gate)?
            .into_iter()
            .map(|term| {
                let mut s = prefix.clone();
                s.apply_pauli(&term.insertion)?;
                s.apply_gates(&gates[pos..])?;
                Ok((term.coefficient, s))
            })
            .collect()
    }

    /// `∂|φ(θ)>/∂θ_k` as raw amplitudes.
    pub fn derivative_vector(&self, theta: &[f64], k: usize) -> Result<Vec<Complex64>> {
        let terms = self.derivative_state(theta, k)?;
        let mut out = vec![Complex64::new(0.0, 0.0); 1 << self.n_qubits];
        for (a, s) in terms {
            out.iter_mut().zip(s.amplitudes()).for_each(|(o, x)| *o += a * x);
        }
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}
