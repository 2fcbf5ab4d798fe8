//! Variational imaginary-time evolution under the McLachlan principle.
//!
//! Each step assembles
//!
//! ```text
//! M_kj = Re <∂_k φ|∂_j φ>,     C_k = -Re <φ|H|∂_k φ>
//! ```
//!
//! solves `(M + λI) θ̇ = C` and takes an Euler step `θ += δτ θ̇`. The
//! matrix and vector can be evaluated either exactly from statevectors or
//! term by term from simulated ancilla (Hadamard-test) circuits with a
//! finite number of shots.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::ansatz::{derivative_expansion, DerivativeTerm, ParamCircuit};
use crate::error::{Error, Result};
use crate::io::fmt_float;
use crate::statevector::{dot, Gate, PauliSum, PauliTerm, StateVector};

/// Default Tikhonov shift added to `M` before solving.
pub const DEFAULT_REGULARIZATION: f64 = 1e-6;

/// How `M` and `C` are evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Backend {
    Exact,
    /// Every real-part term is estimated from `shots` ancilla measurements.
    Shots {
        shots: u64,
        seed: u64,
    },
}

impl Backend {
    /// Parses `exact` or `shots:COUNT` (seeded separately).
    pub fn parse(text: &str, seed: u64) -> Result<Self> {
        match text.trim() {
            "exact" => Ok(Backend::Exact),
            other => {
                let count =
                    other.strip_prefix("shots:").ok_or_else(|| Error::Parse(format!("unknown backend '{other}'")))?;
                let shots = count.parse::<u64>().map_err(|e| Error::Parse(format!("shot count '{count}': {e}")))?;
                if shots == 0 {
                    return Err(Error::ZeroShots);
                }
                Ok(Backend::Shots { shots, seed })
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            Backend::Exact => "exact".into(),
            Backend::Shots { shots, .. } => format!("shots:{shots}"),
        }
    }

    /// Independent stream for Euler step `step` (shot backend only).
    pub fn for_step(self, step: usize) -> Self {
        match self {
            Backend::Exact => Backend::Exact,
            Backend::Shots { shots, seed } => Backend::Shots { shots, seed: mix(seed, 0x5354_4550, step as u64) },
        }
    }

    fn check(&self) -> Result<()> {
        match self {
            Backend::Shots { shots: 0, .. } => Err(Error::ZeroShots),
            _ => Ok(()),
        }
    }
}

/// splitmix64-style mixing of a seed with tags.
pub(crate) fn mix(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn element_rng(seed: u64, element: u64, term: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(seed, element.wrapping_add(1), term.wrapping_add(1)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolutionConfig {
    pub delta_tau: f64,
    pub tau_final: f64,
    pub regularization: f64,
    pub backend: Backend,
}

impl Default for EvolutionConfig {
    /// `δτ = 0.1` from `τ = 0` to `τ = 1/2` with the exact backend.
    fn default() -> Self {
        Self { delta_tau: 0.1, tau_final: 0.5, regularization: DEFAULT_REGULARIZATION, backend: Backend::Exact }
    }
}

impl EvolutionConfig {
    /// Number of Euler steps; `tau_final / delta_tau` must be a whole number.
    pub fn n_steps(&self) -> Result<usize> {
        if !(self.delta_tau > 0.0 && self.delta_tau.is_finite()) {
            return Err(Error::Config(format!("delta_tau must be positive, got {}", self.delta_tau)));
        }
        if !(self.tau_final > 0.0 && self.tau_final.is_finite()) {
            return Err(Error::Config(format!("tau_final must be positive, got {}", self.tau_final)));
        }
        if !(self.regularization >= 0.0 && self.regularization.is_finite()) {
            return Err(Error::Config(format!("regularization must be nonnegative, got {}", self.regularization)));
        }
        self.backend.check()?;
        let ratio = self.tau_final / self.delta_tau;
        let steps = ratio.round();
        if steps < 1.0 || (ratio - steps).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::Config(format!("tau_final / delta_tau = {ratio} is not a positive whole number")));
        }
        Ok(steps as usize)
    }
}

/// `M` and `C` at one point of the trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct McLachlanSystem {
    pub m: DMatrix<f64>,
    pub c: DVector<f64>,
}

impl McLachlanSystem {
    pub fn assemble(circuit: &ParamCircuit, theta: &[f64], h: &PauliSum, backend: Backend) -> Result<Self> {
        Ok(Self { m: compute_m(circuit, theta, backend)?, c: compute_c(circuit, theta, h, backend)? })
    }

    pub fn asymmetry(&self) -> f64 {
        (&self.m - self.m.transpose()).amax()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.m.clone().symmetric_eigen().eigenvalues.min()
    }
}

/// Result of one linear solve.
#[derive(Clone, Debug, PartialEq)]
pub struct StepSolution {
    pub delta_theta: Vec<f64>,
    /// `‖(M + λI)x − C‖`
    pub residual: f64,
}

/// Matrix `M` of the McLachlan equations, symmetrized as `(M + Mᵀ)/2`.
pub fn compute_m(circuit: &ParamCircuit, theta: &[f64], backend: Backend) -> Result<DMatrix<f64>> {
    backend.check()?;
    let p = circuit.n_params();
    let mut m = DMatrix::zeros(p, p);
    match backend {
        Backend::Exact => {
            let d: Vec<Vec<Complex64>> = (0..p).map(|k| circuit.derivative_vector(theta, k)).collect::<Result<_>>()?;
            for k in 0..p {
                for j in k..p {
                    let v = dot(&d[k], &d[j]).re;
                    m[(k, j)] = v;
                    m[(j, k)] = v;
                }
            }
        }
        Backend::Shots { shots, seed } => {
            let expansions = expansions(circuit)?;
            for k in 0..p {
                for j in 0..p {
                    let element = (k * p + j) as u64;
                    let mut total = 0.0;
                    let mut term = 0u64;
                    for tp in &expansions[k] {
                        for tq in &expansions[j] {
                            let spec = HadamardTestSpec::metric_term(circuit, theta, (k, tp), (j, tq))?;
                            let mut rng = element_rng(seed, element, term);
                            total += spec.estimate_with(shots, &mut rng)?;
                            term += 1;
                        }
                    }
                    m[(k, j)] = total;
                }
            }
            m = (&m + m.transpose()) * 0.5;
        }
    }
    Ok(m)
}

/// Vector `C` of the McLachlan equations for Hamiltonian `h`.
pub fn compute_c(circuit: &ParamCircuit, theta: &[f64], h: &PauliSum, backend: Backend) -> Result<DVector<f64>> {
    backend.check()?;
    let p = circuit.n_params();
    let mut c = DVector::zeros(p);
    match backend {
        Backend::Exact => {
            let phi = circuit.prepare_state(theta)?;
            let h_phi = phi.apply_operator(h)?;
            for k in 0..p {
                let d = circuit.derivative_vector(theta, k)?;
                c[k] = -dot(&h_phi, &d).re;
            }
        }
        Backend::Shots { shots, seed } => {
            let expansions = expansions(circuit)?;
            // C elements use a separate stream family from M elements
            let offset = (p * p) as u64;
            for k in 0..p {
                let mut term = 0u64;
                for t in &expansions[k] {
                    for pj in &h.terms {
                        let spec = HadamardTestSpec::force_term(circuit, theta, (k, t), pj)?;
                        let mut rng = element_rng(seed, offset + k as u64, term);
                        c[k] += spec.estimate_with(shots, &mut rng)?;
                        term += 1;
                    }
                }
            }
        }
    }
    Ok(c)
}

/// Derivative expansion of every parameter, indexed by parameter.
pub fn expansions(circuit: &ParamCircuit) -> Result<Vec<Vec<DerivativeTerm>>> {
    (0..circuit.n_params()).map(|k| derivative_expansion(circuit.gate_for_param(k)?.1)).collect()
}

/// Least-squares solve of `(M + λI) x = C`, scaled by `δτ`.
pub fn solve_step(system: &McLachlanSystem, delta_tau: f64, lambda: f64) -> Result<StepSolution> {
    let p = system.c.len();
    if system.m.nrows() != p || system.m.ncols() != p {
        return Err(Error::Dimension { expected: p, got: system.m.nrows() });
    }
    if system.m.iter().chain(system.c.iter()).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("McLachlan system".into()));
    }
    let a = &system.m + DMatrix::identity(p, p) * lambda;
    let svd = a.clone().svd(true, true);
    let cutoff = f64::EPSILON * p as f64 * svd.singular_values.max().max(f64::MIN_POSITIVE);
    let x = svd.solve(&system.c, cutoff).map_err(|e| Error::NonFinite(format!("linear solve: {e}")))?;
    let residual = (&a * &x - &system.c).norm();
    Ok(StepSolution { delta_theta: x.iter().map(|v| v * delta_tau).collect(), residual })
}

/// Parameter trajectory of one imaginary-time evolution.
#[derive(Clone, Debug)]
pub struct Evolution {
    /// `τ` at each recorded point, starting from 0.
    pub taus: Vec<f64>,
    /// `θ(τ)` at each recorded point; the first entry is the start.
    pub thetas: Vec<Vec<f64>>,
    /// System solved at each Euler step.
    pub systems: Vec<McLachlanSystem>,
    pub residuals: Vec<f64>,
    pub final_state: StateVector,
}

/// Evolves from `θ = 0` to `τ = tau_final`.
pub fn evolve(circuit: &ParamCircuit, h: &PauliSum, config: &EvolutionConfig) -> Result<Evolution> {
    evolve_from(circuit, h, config, vec![0.0; circuit.n_params()])
}

/// Evolves from an arbitrary starting point.
pub fn evolve_from(
    circuit: &ParamCircuit,
    h: &PauliSum,
    config: &EvolutionConfig,
    theta0: Vec<f64>,
) -> Result<Evolution> {
    let steps = config.n_steps()?;
    if theta0.len() != circuit.n_params() {
        return Err(Error::Dimension { expected: circuit.n_params(), got: theta0.len() });
    }
    let mut theta = theta0;
    let mut taus = vec![0.0];
    let mut thetas = vec![theta.clone()];
    let mut systems = Vec::with_capacity(steps);
    let mut residuals = Vec::with_capacity(steps);
    for step in 0..steps {
        let system = McLachlanSystem::assemble(circuit, &theta, h, config.backend.for_step(step))?;
        let sol = solve_step(&system, config.delta_tau, config.regularization)?;
        theta.iter_mut().zip(&sol.delta_theta).for_each(|(t, d)| *t += d);
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite(format!("theta after step {}", step + 1)));
        }
        taus.push((step + 1) as f64 * config.delta_tau);
        thetas.push(theta.clone());
        systems.push(system);
        residuals.push(sol.residual);
    }
    let final_state = circuit.prepare_state(&theta)?;
    Ok(Evolution { taus, thetas, systems, residuals, final_state })
}

/// Writes `tau, theta_0..theta_{P-1}, energy, fidelity_vs_target`. The
/// fidelity column is `NaN` without a target.
pub fn write_trajectory_csv<W: Write>(
    mut out: W,
    circuit: &ParamCircuit,
    h: &PauliSum,
    evolution: &Evolution,
    target: Option<&StateVector>,
) -> Result<()> {
    let p = circuit.n_params();
    let mut header = vec!["tau".to_string()];
    header.extend((0..p).map(|k| format!("theta_{k}")));
    header.push("energy".into());
    header.push("fidelity_vs_target".into());
    writeln!(out, "{}", header.join(","))?;
    for (tau, theta) in evolution.taus.iter().zip(&evolution.thetas) {
        let state = circuit.prepare_state(theta)?;
        let energy = state.expectation(h)?;
        let fid = match target {
            Some(t) => state.fidelity(t)?,
            None => f64::NAN,
        };
        let mut row = vec![fmt_float(*tau)];
        row.extend(theta.iter().map(|&t| fmt_float(t)));
        row.push(fmt_float(energy));
        row.push(fmt_float(fid));
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

/// One step of an ancilla-controlled circuit acting on the register.
#[derive(Clone, Debug, PartialEq)]
pub enum HadamardOp {
    /// Register gate, applied regardless of the ancilla.
    Gate(Gate),
    /// Pauli string applied when the ancilla reads `on_one` (the `false`
    /// case is realized as X, controlled gate, X).
    Controlled { insertion: PauliTerm, on_one: bool },
}

/// Ancilla-assisted circuit estimating `b · Re(e^{iφ} <ψ_0|ψ_1>)`, where
/// `ψ_0`/`ψ_1` are the register states conditioned on the ancilla reading
/// 0/1. For the circuits built here this equals `b · Re(e^{iφ} <0̄|V|0̄>)`.
#[derive(Clone, Debug, PartialEq)]
pub struct HadamardTestSpec {
    pub n_qubits: usize,
    pub phase: f64,
    pub scale: f64,
    pub ops: Vec<HadamardOp>,
}

impl HadamardTestSpec {
    /// Term `Re(a*_{k,p} a_{j,q} <0̄|U†_{k,p} U_{j,q}|0̄>)` of `M_kj`.
    pub fn metric_term(
        circuit: &ParamCircuit,
        theta: &[f64],
        (k, tp): (usize, &DerivativeTerm),
        (j, tq): (usize, &DerivativeTerm),
    ) -> Result<Self> {
        let gates = circuit.bind(theta)?;
        let (pos_k, _) = circuit.gate_for_param(k)?;
        let (pos_j, _) = circuit.gate_for_param(j)?;
        let last = pos_k.max(pos_j);
        let mut ops = Vec::with_capacity(last + 2);
        for (pos, gate) in gates.iter().enumerate().take(last + 1) {
            if pos == pos_k {
                ops.push(HadamardOp::Controlled { insertion: tp.insertion.clone(), on_one: false });
            }
            if pos == pos_j {
                ops.push(HadamardOp::Controlled { insertion: tq.insertion.clone(), on_one: true });
            }
            // gates from the later insertion onward act identically on both branches
            if pos < last {
                ops.push(HadamardOp::Gate(*gate));
            }
        }
        let w = tp.coefficient.conj() * tq.coefficient;
        Ok(Self { n_qubits: circuit.n_qubits(), phase: w.arg(), scale: w.norm(), ops })
    }

    /// Term `-Re(a_{k,i} f_j <0̄|U† P_j U_{k,i}|0̄>)` of `C_k`, measured as
    /// `Re(e^{iφ} <0̄|U_{k,i}† P_j U|0̄>)` with `b e^{iφ} = -a*_{k,i} f_j`.
    pub fn force_term(
        circuit: &ParamCircuit,
        theta: &[f64],
        (k, t): (usize, &DerivativeTerm),
        pauli: &PauliTerm,
    ) -> Result<Self> {
        let gates = circuit.bind(theta)?;
        let (pos_k, _) = circuit.gate_for_param(k)?;
        let mut ops = Vec::with_capacity(gates.len() + 2);
        for (pos, gate) in gates.iter().enumerate() {
            if pos == pos_k {
                ops.push(HadamardOp::Controlled { insertion: t.insertion.clone(), on_one: false });
            }
            ops.push(HadamardOp::Gate(*gate));
        }
        ops.push(HadamardOp::Controlled { insertion: pauli.clone().with_coefficient(1.0), on_one: true });
        let w = -t.coefficient.conj() * pauli.coefficient;
        Ok(Self { n_qubits: circuit.n_qubits(), phase: w.arg(), scale: w.norm(), ops })
    }

    /// Simulates ancilla (qubit 0) plus register and returns the probability
    /// of reading the ancilla as 0 after the final Hadamard.
    pub fn ancilla_zero_probability(&self) -> Result<f64> {
        let n = self.n_qubits + 1;
        let mut s = StateVector::basis(n, 0)?;
        for q in 1..n {
            s.apply_gate(&Gate::h(q))?;
        }
        s.apply_gate(&Gate::h(0))?;
        s.apply_gate(&Gate::phase(self.phase, 0))?;
        for op in &self.ops {
            match op {
                HadamardOp::Gate(g) => s.apply_gate(&g.shifted(1))?,
                HadamardOp::Controlled { insertion, on_one } => {
                    let shifted = insertion.shifted(1);
                    if *on_one {
                        s.apply_controlled_pauli(0, true, &shifted)?;
                    } else {
                        s.apply_gate(&Gate::x(0))?;
                        s.apply_controlled_pauli(0, true, &shifted)?;
                        s.apply_gate(&Gate::x(0))?;
                    }
                }
            }
        }
        s.apply_gate(&Gate::h(0))?;
        let half = s.dim() / 2;
        let p0: f64 = s.amplitudes()[..half].iter().map(|a| a.norm_sqr()).sum();
        Ok(p0.clamp(0.0, 1.0))
    }

    /// `b · (P(0) − P(1))`.
    pub fn exact_value(&self) -> Result<f64> {
        Ok(self.scale * (2.0 * self.ancilla_zero_probability()? - 1.0))
    }

    /// `b` times the mean of `shots` sampled ±1 ancilla outcomes.
    pub fn estimate_with<R: Rng + ?Sized>(&self, shots: u64, rng: &mut R) -> Result<f64> {
        if shots == 0 {
            return Err(Error::ZeroShots);
        }
        if self.scale == 0.0 {
            return Ok(0.0);
        }
        let p0 = self.ancilla_zero_probability()?;
        let zeros = Binomial::new(shots, p0).map_err(|e| Error::Config(format!("binomial sampler: {e}")))?.sample(rng);
        Ok(self.scale * (2.0 * zeros as f64 / shots as f64 - 1.0))
    }
}

/// Seeded shot-based estimate of a Hadamard test.
pub fn hadamard_test_estimate(spec: &HadamardTestSpec, shots: u64, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    spec.estimate_with(shots, &mut rng)
}
