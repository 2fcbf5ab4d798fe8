//! Self-contained invariant suite behind `varqbm check`.
//!
//! Every check compares a library result against an independent
//! computation (finite differences, brute-force sums or exact identities)
//! at register sizes up to four qubits.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::ansatz::ParamCircuit;
use crate::error::Result;
use crate::ising::{
    boltzmann_distribution, classical_energy, exact_thermal_gradient, gibbs_target_state, gradient_observables, kld,
    param_len, quantum_hamiltonian, IsingParams, SpinConfig,
};
use crate::learner::{data_moment_vector, empirical_distribution, generate_training_data, kld_gradient};
use crate::statevector::{dot, PauliSum, StateVector};
use crate::varqite::{compute_c, compute_m, expansions, Backend, HadamardTestSpec};

const FD_STEP: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    /// Largest deviation seen.
    pub error: f64,
    pub tolerance: f64,
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        self.error <= self.tolerance
    }
}

fn random_theta(p: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..p).map(|_| rng.random_range(-std::f64::consts::PI..std::f64::consts::PI)).collect()
}

fn random_u(n: usize, rng: &mut ChaCha8Rng) -> IsingParams {
    let u: Vec<f64> = (0..param_len(n)).map(|_| rng.sample(StandardNormal)).collect();
    IsingParams::from_flat(n, &u).expect("length from param_len")
}

fn shifted(theta: &[f64], k: usize, by: f64) -> Vec<f64> {
    let mut t = theta.to_vec();
    t[k] += by;
    t
}

/// Central-difference `∂|φ>/∂θ_k`.
fn fd_state_derivative(circuit: &ParamCircuit, theta: &[f64], k: usize) -> Result<Vec<Complex64>> {
    let a = circuit.prepare_state(&shifted(theta, k, FD_STEP))?;
    let b = circuit.prepare_state(&shifted(theta, k, -FD_STEP))?;
    Ok(a.amplitudes().iter().zip(b.amplitudes()).map(|(x, y)| (x - y) / (2.0 * FD_STEP)).collect())
}

fn max_abs_diff(a: impl IntoIterator<Item = f64>, b: impl IntoIterator<Item = f64>) -> f64 {
    a.into_iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn norm_preservation(rng: &mut ChaCha8Rng) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for n in 2..=4 {
        let circuit = ParamCircuit::fig2(n)?;
        let state = circuit.prepare_state(&random_theta(circuit.n_params(), rng))?;
        worst = worst.max((state.norm() - 1.0).abs());
    }
    Ok(worst)
}

fn overlap_preservation(rng: &mut ChaCha8Rng) -> Result<f64> {
    let circuit = ParamCircuit::fig2(3)?;
    let gates = circuit.bind(&random_theta(circuit.n_params(), rng))?;
    let mut a = StateVector::basis(3, 1)?;
    let mut b = circuit.prepare_state(&random_theta(circuit.n_params(), rng))?;
    let before = a.inner_product(&b)?;
    a.apply_gates(&gates)?;
    b.apply_gates(&gates)?;
    Ok((a.inner_product(&b)? - before).norm())
}

fn zero_angle_identity() -> Result<f64> {
    let circuit = ParamCircuit::fig2(4)?;
    let state = circuit.prepare_state(&vec![0.0; circuit.n_params()])?;
    Ok(1.0 - state.fidelity(&StateVector::plus(4)?)?)
}

fn derivative_consistency(rng: &mut ChaCha8Rng) -> Result<f64> {
    let circuit = ParamCircuit::fig2(3)?;
    let theta = random_theta(circuit.n_params(), rng);
    let mut worst: f64 = 0.0;
    for k in 0..circuit.n_params() {
        let analytic = circuit.derivative_vector(&theta, k)?;
        let fd = fd_state_derivative(&circuit, &theta, k)?;
        worst = worst.max(analytic.iter().zip(&fd).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max));
    }
    Ok(worst)
}

fn metric_vs_gram(rng: &mut ChaCha8Rng) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for n in 2..=4 {
        let circuit = ParamCircuit::fig2(n)?;
        let theta = random_theta(circuit.n_params(), rng);
        let m = compute_m(&circuit, &theta, Backend::Exact)?;
        let d =
            (0..circuit.n_params()).map(|k| fd_state_derivative(&circuit, &theta, k)).collect::<Result<Vec<_>>>()?;
        let gram = DMatrix::from_fn(m.nrows(), m.ncols(), |k, j| dot(&d[k], &d[j]).re);
        worst = worst.max((m - gram).amax());
    }
    Ok(worst)
}

fn metric_shape(rng: &mut ChaCha8Rng) -> Result<f64> {
    let circuit = ParamCircuit::fig2(4)?;
    let m = compute_m(&circuit, &random_theta(circuit.n_params(), rng), Backend::Exact)?;
    let asym = (&m - m.transpose()).amax();
    let min_eig = SymmetricEigen::new(m).eigenvalues.min();
    Ok(asym.max(-min_eig))
}

fn force_vs_energy_gradient(rng: &mut ChaCha8Rng) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for n in 2..=4 {
        let circuit = ParamCircuit::fig2(n)?;
        let theta = random_theta(circuit.n_params(), rng);
        let h = quantum_hamiltonian(&random_u(n, rng));
        let c = compute_c(&circuit, &theta, &h, Backend::Exact)?;
        let energy = |t: &[f64]| circuit.prepare_state(t).and_then(|s| s.expectation(&h));
        for k in 0..circuit.n_params() {
            let grad =
                (energy(&shifted(&theta, k, FD_STEP))? - energy(&shifted(&theta, k, -FD_STEP))?) / (2.0 * FD_STEP);
            worst = worst.max((c[k] + 0.5 * grad).abs());
        }
    }
    Ok(worst)
}

fn hadamard_circuits(rng: &mut ChaCha8Rng) -> Result<f64> {
    let circuit = ParamCircuit::fig2(3)?;
    let theta = random_theta(circuit.n_params(), rng);
    let h = quantum_hamiltonian(&random_u(3, rng));
    let m = compute_m(&circuit, &theta, Backend::Exact)?;
    let c = compute_c(&circuit, &theta, &h, Backend::Exact)?;
    let ex = expansions(&circuit)?;
    let mut worst: f64 = 0.0;
    for (k, j) in [(0, 0), (2, 7), (5, 9), (9, 1)] {
        let mut sum = 0.0;
        for tp in &ex[k] {
            for tq in &ex[j] {
                sum += HadamardTestSpec::metric_term(&circuit, &theta, (k, tp), (j, tq))?.exact_value()?;
            }
        }
        worst = worst.max((sum - m[(k, j)]).abs());
    }
    for k in [0, 4, 8] {
        let mut sum = 0.0;
        for t in &ex[k] {
            for term in &h.terms {
                sum += HadamardTestSpec::force_term(&circuit, &theta, (k, t), term)?.exact_value()?;
            }
        }
        worst = worst.max((sum - c[k]).abs());
    }
    Ok(worst)
}

fn hamiltonian_diagonal(rng: &mut ChaCha8Rng) -> Result<f64> {
    let u = random_u(4, rng);
    let h = quantum_hamiltonian(&u);
    let mut worst: f64 = 0.0;
    for z in 0..16 {
        let diag = StateVector::basis(4, z)?.expectation(&h)?;
        worst = worst.max((diag - classical_energy(&SpinConfig::from_basis_index(4, z), &u)?).abs());
    }
    Ok(worst)
}

fn target_diagonal(rng: &mut ChaCha8Rng) -> Result<f64> {
    let u = random_u(4, rng);
    let target = gibbs_target_state(&u)?;
    Ok(max_abs_diff(
        target.basis_distribution().probs().iter().copied(),
        boltzmann_distribution(&u)?.probs().iter().copied(),
    ))
}

fn estimator_identity(rng: &mut ChaCha8Rng) -> Result<f64> {
    let u = random_u(4, rng);
    let target = gibbs_target_state(&u)?;
    let via_state = gradient_observables(4).iter().map(|o| target.expectation(o)).collect::<Result<Vec<_>>>()?;
    let p = boltzmann_distribution(&u)?;
    let brute = p.expect_vec(|z| SpinConfig::from_basis_index(4, z).energy_gradient());
    Ok(max_abs_diff(via_state, brute.iter().copied()).max(max_abs_diff(exact_thermal_gradient(&u)?, brute)))
}

fn kld_gradient_vs_fd(rng: &mut ChaCha8Rng) -> Result<f64> {
    let u_star = random_u(4, rng);
    let data = generate_training_data(&u_star, 500, rng.random())?;
    let pd = empirical_distribution(&data)?;
    let u = random_u(4, rng);
    let g = kld_gradient(&exact_thermal_gradient(&u)?, &data_moment_vector(&data)?)?;
    let base = u.flatten();
    let f =
        |v: &[f64]| IsingParams::from_flat(4, v).and_then(|p| boltzmann_distribution(&p)).and_then(|p| kld(&pd, &p));
    let mut worst: f64 = 0.0;
    for (k, gk) in g.iter().enumerate() {
        let fd = (f(&shifted(&base, k, FD_STEP))? - f(&shifted(&base, k, -FD_STEP))?) / (2.0 * FD_STEP);
        worst = worst.max((gk - fd).abs());
    }
    Ok(worst)
}

fn zero_hamiltonian_is_stationary() -> Result<f64> {
    let circuit = ParamCircuit::fig2(3)?;
    let c = compute_c(&circuit, &vec![0.0; circuit.n_params()], &PauliSum::new(vec![]), Backend::Exact)?;
    Ok(c.amax())
}

type CheckFn = fn(&mut ChaCha8Rng) -> Result<f64>;

/// Runs every check from a fixed seed.
pub fn run_checks(seed: u64) -> Result<Vec<CheckOutcome>> {
    let checks: [(&'static str, f64, CheckFn); 13] = [
        ("state norm preserved by the ansatz", 1e-12, norm_preservation),
        ("gate sequence preserves overlaps", 1e-12, overlap_preservation),
        ("zero angles prepare the uniform superposition", 1e-12, |_| zero_angle_identity()),
        ("analytic state derivative matches finite differences", 1e-6, derivative_consistency),
        ("M matches finite-difference Gram matrix", 1e-6, metric_vs_gram),
        ("M symmetric positive semidefinite", 1e-10, metric_shape),
        ("C equals minus half the energy gradient", 1e-6, force_vs_energy_gradient),
        ("Hadamard-test circuits reproduce M and C", 1e-10, hadamard_circuits),
        ("Hamiltonian diagonal equals classical energies", 1e-12, hamiltonian_diagonal),
        ("target state diagonal equals Boltzmann table", 1e-12, target_diagonal),
        ("pure-state estimator equals thermal average", 1e-10, estimator_identity),
        ("KLD gradient matches finite differences", 1e-6, kld_gradient_vs_fd),
        ("zero Hamiltonian gives zero force", 1e-15, |_| zero_hamiltonian_is_stationary()),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    checks.iter().map(|&(name, tolerance, f)| Ok(CheckOutcome { name, error: f(&mut rng)?, tolerance })).collect()
}
