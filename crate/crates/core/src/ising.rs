//! Classical Ising energies, Gibbs distributions and the exact oracles used to
//! check the variational pipeline.
//!
//! Energy convention: `H(σ; u) = -Σ_{i<j} J_ij σ_i σ_j - Σ_i h_i σ_i` at
//! `k_B T = 1`. Spin `σ_i = +1` corresponds to bit 0 of qubit `i` in the basis
//! ordering of [`crate::statevector`].

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::statevector::{Pauli, PauliSum, PauliTerm, StateVector, MAX_QUBITS};

/// Unordered unit pairs `(i, j)`, `i < j`, in lexicographic order.
pub fn pairs(n_units: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n_units).flat_map(move |i| (i + 1..n_units).map(move |j| (i, j)))
}

/// Length of the flattened parameter vector for `n_units` spins.
pub fn param_len(n_units: usize) -> usize {
    n_units * n_units.saturating_sub(1) / 2 + n_units
}

fn check_units(n_units: usize) -> Result<()> {
    if n_units == 0 || n_units > MAX_QUBITS {
        return Err(Error::Size(n_units));
    }
    Ok(())
}

/// One assignment of ±1 values to the units.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SpinConfig {
    spins: Vec<i8>,
}

impl SpinConfig {
    pub fn new(spins: Vec<i8>) -> Result<Self> {
        if let Some(bad) = spins.iter().find(|&&s| s != 1 && s != -1) {
            return Err(Error::Parse(format!("spin value {bad} is not ±1")));
        }
        Ok(Self { spins })
    }

    /// Spin configuration of computational basis state `index`.
    pub fn from_basis_index(n_units: usize, index: usize) -> Self {
        let spins = (0..n_units).map(|i| if (index >> (n_units - 1 - i)) & 1 == 0 { 1 } else { -1 }).collect();
        Self { spins }
    }

    pub fn basis_index(&self) -> usize {
        self.spins.iter().fold(0, |acc, &s| (acc << 1) | usize::from(s == -1))
    }

    pub fn spins(&self) -> &[i8] {
        &self.spins
    }

    pub fn len(&self) -> usize {
        self.spins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spins.is_empty()
    }

    /// `∂H(σ; u)/∂u`, which does not depend on `u`.
    pub fn energy_gradient(&self) -> Vec<f64> {
        let s = &self.spins;
        pairs(s.len()).map(|(i, j)| -f64::from(s[i] * s[j])).chain(s.iter().map(|&si| -f64::from(si))).collect()
    }
}

/// Couplings and fields of a fully visible Boltzmann machine.
#[derive(Clone, Debug, PartialEq)]
pub struct IsingParams {
    n_units: usize,
    couplings: Vec<f64>,
    fields: Vec<f64>,
}

impl IsingParams {
    pub fn zeros(n_units: usize) -> Self {
        Self { n_units, couplings: vec![0.0; n_units * n_units.saturating_sub(1) / 2], fields: vec![0.0; n_units] }
    }

    /// Inverse of [`IsingParams::flatten`].
    pub fn from_flat(n_units: usize, u: &[f64]) -> Result<Self> {
        if n_units == 0 {
            return Err(Error::Size(0));
        }
        let n_pairs = n_units * (n_units - 1) / 2;
        if u.len() != n_pairs + n_units {
            return Err(Error::Dimension { expected: n_pairs + n_units, got: u.len() });
        }
        Ok(Self { n_units, couplings: u[..n_pairs].to_vec(), fields: u[n_pairs..].to_vec() })
    }

    /// `(J_01, J_02, …, J_{N-2,N-1}, h_0, …, h_{N-1})`.
    pub fn flatten(&self) -> Vec<f64> {
        self.couplings.iter().chain(&self.fields).copied().collect()
    }

    pub fn n_units(&self) -> usize {
        self.n_units
    }

    pub fn dim(&self) -> usize {
        self.couplings.len() + self.fields.len()
    }

    pub fn couplings(&self) -> &[f64] {
        &self.couplings
    }

    pub fn fields(&self) -> &[f64] {
        &self.fields
    }

    pub fn coupling(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        assert!(i != j && j < self.n_units, "invalid pair ({i}, {j})");
        // offset of row i in the upper triangle
        let row = i * (2 * self.n_units - i - 1) / 2;
        self.couplings[row + (j - i - 1)]
    }

    /// Energy of every basis configuration, in basis order.
    pub fn energies(&self) -> Vec<f64> {
        let n = self.n_units;
        (0..1usize << n)
            .map(|z| {
                let spin = |i: usize| if (z >> (n - 1 - i)) & 1 == 0 { 1.0 } else { -1.0 };
                let pair: f64 = pairs(n).zip(&self.couplings).map(|((i, j), &jij)| jij * spin(i) * spin(j)).sum();
                let field: f64 = self.fields.iter().enumerate().map(|(i, &h)| h * spin(i)).sum();
                -pair - field
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&IsingParamsJson::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str::<IsingParamsJson>(text)?.try_into()
    }
}

/// On-disk layout: `{"n": N, "J": [[i, j, value], …], "h": [values]}` with
/// zero-based unit indices.
#[derive(Serialize, Deserialize)]
struct IsingParamsJson {
    n: usize,
    #[serde(rename = "J")]
    couplings: Vec<(usize, usize, f64)>,
    h: Vec<f64>,
}

impl From<&IsingParams> for IsingParamsJson {
    fn from(u: &IsingParams) -> Self {
        Self {
            n: u.n_units,
            couplings: pairs(u.n_units).zip(&u.couplings).map(|((i, j), &v)| (i, j, v)).collect(),
            h: u.fields.clone(),
        }
    }
}

impl TryFrom<IsingParamsJson> for IsingParams {
    type Error = Error;

    fn try_from(raw: IsingParamsJson) -> Result<Self> {
        let n = raw.n;
        if n == 0 {
            return Err(Error::Size(0));
        }
        if raw.h.len() != n {
            return Err(Error::Dimension { expected: n, got: raw.h.len() });
        }
        let mut u = IsingParams::zeros(n);
        u.fields = raw.h;
        let index: Vec<(usize, usize)> = pairs(n).collect();
        let mut seen = vec![false; index.len()];
        for (i, j, v) in raw.couplings {
            let key = if i < j { (i, j) } else { (j, i) };
            let k = index
                .iter()
                .position(|&p| p == key)
                .ok_or_else(|| Error::Parse(format!("invalid coupling pair ({i}, {j}) for n = {n}")))?;
            if std::mem::replace(&mut seen[k], true) {
                return Err(Error::Parse(format!("coupling ({i}, {j}) given twice")));
            }
            u.couplings[k] = v;
        }
        Ok(u)
    }
}

/// Probability table over the `2^N` configurations in basis order.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbTable {
    probs: Vec<f64>,
}

impl ProbTable {
    /// Validates nonnegativity and normalization (within 1e-10).
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if !probs.len().is_power_of_two() {
            return Err(Error::Dimension { expected: probs.len().next_power_of_two(), got: probs.len() });
        }
        if probs.iter().any(|&p| !(p >= 0.0 && p.is_finite())) {
            return Err(Error::Config("probabilities must be finite and nonnegative".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::Config(format!("probabilities sum to {total}")));
        }
        Ok(Self { probs })
    }

    pub(crate) fn from_unchecked(probs: Vec<f64>) -> Self {
        Self { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Expectation of a per-configuration vector observable.
    pub fn expect_vec(&self, f: impl Fn(usize) -> Vec<f64>) -> Vec<f64> {
        let mut acc: Vec<f64> = Vec::new();
        for (z, &p) in self.probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let v = f(z);
            if acc.is_empty() {
                acc = vec![0.0; v.len()];
            }
            acc.iter_mut().zip(v).for_each(|(a, x)| *a += p * x);
        }
        acc
    }
}

pub fn classical_energy(config: &SpinConfig, u: &IsingParams) -> Result<f64> {
    if config.len() != u.n_units {
        return Err(Error::Dimension { expected: u.n_units, got: config.len() });
    }
    let s = config.spins();
    let pair: f64 = pairs(u.n_units).zip(&u.couplings).map(|((i, j), &jij)| jij * f64::from(s[i] * s[j])).sum();
    let field: f64 = u.fields.iter().zip(s).map(|(&h, &si)| h * f64::from(si)).sum();
    Ok(-pair - field)
}

/// `P(σ|u) = exp(-H(σ;u)) / Z(u)`, shifted by the minimum energy.
pub fn boltzmann_distribution(u: &IsingParams) -> Result<ProbTable> {
    check_units(u.n_units)?;
    let energies = u.energies();
    let e_min = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = energies.iter().map(|&e| (-(e - e_min)).exp()).collect();
    let total: f64 = weights.iter().sum();
    Ok(ProbTable::from_unchecked(weights.into_iter().map(|w| w / total).collect()))
}

/// `log Z(u)` by log-sum-exp.
pub fn log_partition_function(u: &IsingParams) -> Result<f64> {
    check_units(u.n_units)?;
    let energies = u.energies();
    let e_min = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let shifted: f64 = energies.iter().map(|&e| (-(e - e_min)).exp()).sum();
    Ok(shifted.ln() - e_min)
}

/// `KL(p_data || p_model)`. Terms with `p_data = 0` contribute nothing; a
/// configuration with `p_data > 0` and `p_model = 0` yields `+∞`.
pub fn kld(p_data: &ProbTable, p_model: &ProbTable) -> Result<f64> {
    if p_data.len() != p_model.len() {
        return Err(Error::Dimension { expected: p_data.len(), got: p_model.len() });
    }
    let mut total = 0.0;
    for (&p, &q) in p_data.probs.iter().zip(&p_model.probs) {
        if p == 0.0 {
            continue;
        }
        if q == 0.0 {
            return Ok(f64::INFINITY);
        }
        total += p * (p / q).ln();
    }
    Ok(total.max(0.0))
}

/// `Ĥ(u)` with every `σ_i` replaced by `Z_i`. Exactly-zero parameters are
/// omitted.
pub fn quantum_hamiltonian(u: &IsingParams) -> PauliSum {
    let pair_terms = pairs(u.n_units)
        .zip(&u.couplings)
        .filter(|(_, &j)| j != 0.0)
        .map(|((a, b), &j)| PauliTerm::new(-j, [(a, Pauli::Z), (b, Pauli::Z)]).expect("distinct pair"));
    let field_terms = u
        .fields
        .iter()
        .enumerate()
        .filter(|(_, &h)| h != 0.0)
        .map(|(i, &h)| PauliTerm::single(i, Pauli::Z).with_coefficient(-h));
    PauliSum::new(pair_terms.chain(field_terms).collect())
}

/// `√(2^N / Z) e^{-Ĥ/2} |++⋯+>`, whose amplitudes are `√P(σ|u)`.
pub fn gibbs_target_state(u: &IsingParams) -> Result<StateVector> {
    let probs = boltzmann_distribution(u)?;
    let amps = probs.probs.iter().map(|&p| Complex64::new(p.sqrt(), 0.0)).collect();
    StateVector::from_amplitudes(u.n_units, amps)
}

/// `∂Ĥ/∂u` for each component of the flattened `u`.
pub fn gradient_observables(n_units: usize) -> Vec<PauliSum> {
    let pair_obs = pairs(n_units).map(|(i, j)| {
        PauliSum::new(vec![PauliTerm::new(-1.0, [(i, Pauli::Z), (j, Pauli::Z)]).expect("distinct pair")])
    });
    let field_obs = (0..n_units).map(|i| PauliSum::new(vec![PauliTerm::single(i, Pauli::Z).with_coefficient(-1.0)]));
    pair_obs.chain(field_obs).collect()
}

/// `<∂H/∂u>` under the exact Boltzmann distribution.
pub fn exact_thermal_gradient(u: &IsingParams) -> Result<Vec<f64>> {
    let n = u.n_units;
    let probs = boltzmann_distribution(u)?;
    let g = probs.expect_vec(|z| SpinConfig::from_basis_index(n, z).energy_gradient());
    Ok(if g.is_empty() { vec![0.0; u.dim()] } else { g })
}
