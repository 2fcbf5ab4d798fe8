//! Training data, the KL-divergence gradient and the outer learning loop.
//!
//! The gradient of `KL(P_D || P(·|u))` is
//!
//! ```text
//! ∂KL/∂u = -<∂H/∂u>_model + (1/D) Σ_d ∂H(σ_d)/∂u
//! ```
//!
//! The data term depends only on the training set. The model term is read
//! off the imaginary-time-evolved state, whose basis distribution is the
//! Gibbs distribution of the current `u`.

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::ansatz::ParamCircuit;
use crate::error::{Error, Result};
use crate::io::fmt_float;
use crate::ising::{
    boltzmann_distribution, exact_thermal_gradient, gibbs_target_state, gradient_observables, kld, param_len,
    quantum_hamiltonian, IsingParams, ProbTable, SpinConfig,
};
use crate::varqite::{evolve_from, mix, Backend, EvolutionConfig};

/// `D` spin configurations of a common length `N`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSet {
    n_units: usize,
    samples: Vec<SpinConfig>,
}

impl TrainingSet {
    pub fn new(n_units: usize, samples: Vec<SpinConfig>) -> Result<Self> {
        if let Some(bad) = samples.iter().find(|s| s.len() != n_units) {
            return Err(Error::Dimension { expected: n_units, got: bad.len() });
        }
        Ok(Self { n_units, samples })
    }

    pub fn n_units(&self) -> usize {
        self.n_units
    }

    pub fn samples(&self) -> &[SpinConfig] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// One sample per line as space-separated `1`/`-1` tokens.
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        for s in &self.samples {
            let line: Vec<String> = s.spins().iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", line.join(" "))?;
        }
        Ok(())
    }

    /// Parses the line format of [`TrainingSet::write_to`]; blank lines are
    /// skipped and `+1` is accepted.
    pub fn read_from<R: BufRead>(input: R) -> Result<Self> {
        let mut samples = Vec::new();
        let mut n_units = None;
        for (lineno, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let spins = line
                .split_whitespace()
                .map(|tok| match tok {
                    "1" | "+1" => Ok(1),
                    "-1" => Ok(-1),
                    other => Err(Error::Parse(format!("line {}: bad spin token '{other}'", lineno + 1))),
                })
                .collect::<Result<Vec<i8>>>()?;
            let n = *n_units.get_or_insert(spins.len());
            if spins.len() != n {
                return Err(Error::Parse(format!("line {}: expected {n} spins, got {}", lineno + 1, spins.len())));
            }
            samples.push(SpinConfig::new(spins)?);
        }
        let n_units = n_units.ok_or(Error::EmptyData)?;
        Self::new(n_units, samples)
    }
}

/// Standard-normal draw of every component of `u`.
pub fn sample_true_params(n_units: usize, seed: u64) -> IsingParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u: Vec<f64> = (0..param_len(n_units)).map(|_| rng.sample(StandardNormal)).collect();
    IsingParams::from_flat(n_units, &u).expect("length from param_len")
}

/// `d` i.i.d. draws from `P(·|u_star)` by inverting the cumulative table.
pub fn generate_training_data(u_star: &IsingParams, d: usize, seed: u64) -> Result<TrainingSet> {
    let probs = boltzmann_distribution(u_star)?;
    let mut cdf = Vec::with_capacity(probs.len());
    let mut acc = 0.0;
    for &p in probs.probs() {
        acc += p;
        cdf.push(acc);
    }
    let last = cdf.len() - 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..d)
        .map(|_| {
            let r: f64 = rng.random::<f64>() * acc;
            let z = cdf.partition_point(|&c| c <= r).min(last);
            SpinConfig::from_basis_index(u_star.n_units(), z)
        })
        .collect();
    TrainingSet::new(u_star.n_units(), samples)
}

/// `P_D(σ) = count(σ) / D`.
pub fn empirical_distribution(data: &TrainingSet) -> Result<ProbTable> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    let mut counts = vec![0usize; 1 << data.n_units];
    for s in &data.samples {
        counts[s.basis_index()] += 1;
    }
    let d = data.len() as f64;
    ProbTable::new(counts.into_iter().map(|c| c as f64 / d).collect())
}

/// `(1/D) Σ_d ∂H(σ_d)/∂u`.
pub fn data_moment_vector(data: &TrainingSet) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    let mut sums = vec![0.0; param_len(data.n_units)];
    for s in &data.samples {
        sums.iter_mut().zip(s.energy_gradient()).for_each(|(a, g)| *a += g);
    }
    let d = data.len() as f64;
    Ok(sums.into_iter().map(|s| s / d).collect())
}

/// `-model_grad + data_grad`.
pub fn kld_gradient(model_grad: &[f64], data_grad: &[f64]) -> Result<Vec<f64>> {
    if model_grad.len() != data_grad.len() {
        return Err(Error::Dimension { expected: data_grad.len(), got: model_grad.len() });
    }
    Ok(model_grad.iter().zip(data_grad).map(|(m, d)| d - m).collect())
}

/// Source of the model expectation `<∂H/∂u>`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelTerm {
    /// Expectations in the variationally evolved state.
    #[default]
    VarQite,
    /// Exhaustive enumeration of the Gibbs distribution.
    ExactOracle,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LearnConfig {
    pub eta: f64,
    pub n_step: usize,
    pub evolution: EvolutionConfig,
    /// Seed of the standard-normal initial guess `u[0]`.
    pub init_seed: u64,
    /// Explicit `u[0]`, used instead of the standard-normal draw.
    pub init_params: Option<IsingParams>,
    /// Start each evolution from the previous `θ` instead of zero.
    pub warm_start: bool,
    pub model: ModelTerm,
}

impl LearnConfig {
    pub fn new(eta: f64, n_step: usize, init_seed: u64) -> Self {
        Self {
            eta,
            n_step,
            evolution: EvolutionConfig::default(),
            init_seed,
            init_params: None,
            warm_start: false,
            model: ModelTerm::VarQite,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta <= 0.5) {
            return Err(Error::Config(format!("learning rate must lie in (0, 0.5], got {}", self.eta)));
        }
        self.evolution.n_steps()?;
        Ok(())
    }
}

/// State of the learner after `step` updates.
#[derive(Clone, Debug, PartialEq)]
pub struct LearnStep {
    pub step: usize,
    pub u: Vec<f64>,
    /// `KL(P(·|u*) || P(·|u))`, when a reference is known.
    pub kld_true: Option<f64>,
    /// `KL(P_D || P(·|u))`
    pub kld_data: f64,
    /// Fidelity of the evolved state for this `u` against the exact target.
    pub fidelity: f64,
}

/// Per-step history, including the initial point.
#[derive(Clone, Debug, PartialEq)]
pub struct LearnRecord {
    pub n_units: usize,
    pub steps: Vec<LearnStep>,
}

impl LearnRecord {
    pub fn final_params(&self) -> IsingParams {
        let last = self.steps.last().expect("record holds the initial point");
        IsingParams::from_flat(self.n_units, &last.u).expect("consistent length")
    }

    /// `step, kld_true, kld_data, fidelity, u_0..u_{dim-1}`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let dim = param_len(self.n_units);
        let mut header: Vec<String> = ["step", "kld_true", "kld_data", "fidelity"].map(String::from).to_vec();
        header.extend((0..dim).map(|k| format!("u_{k}")));
        writeln!(out, "{}", header.join(","))?;
        for s in &self.steps {
            let mut row = vec![
                s.step.to_string(),
                fmt_float(s.kld_true.unwrap_or(f64::NAN)),
                fmt_float(s.kld_data),
                fmt_float(s.fidelity),
            ];
            row.extend(s.u.iter().map(|&x| fmt_float(x)));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Model expectation and the fidelity of the state it came from.
struct ModelEstimate {
    grad: Vec<f64>,
    fidelity: f64,
    theta: Option<Vec<f64>>,
}

struct Trainer<'a> {
    circuit: ParamCircuit,
    config: &'a LearnConfig,
    observables: Vec<crate::statevector::PauliSum>,
}

impl Trainer<'_> {
    fn model_estimate(&self, u: &IsingParams, step: usize, theta0: Option<&[f64]>) -> Result<ModelEstimate> {
        match self.config.model {
            ModelTerm::ExactOracle => {
                Ok(ModelEstimate { grad: exact_thermal_gradient(u)?, fidelity: 1.0, theta: None })
            }
            ModelTerm::VarQite => {
                let mut evolution = self.config.evolution;
                if let Backend::Shots { shots, seed } = evolution.backend {
                    evolution.backend = Backend::Shots { shots, seed: mix(seed, 0x4f55_5445, step as u64) };
                }
                let h = quantum_hamiltonian(u);
                let start = match theta0 {
                    Some(t) if self.config.warm_start => t.to_vec(),
                    _ => vec![0.0; self.circuit.n_params()],
                };
                let evo = evolve_from(&self.circuit, &h, &evolution, start)?;
                let state = &evo.final_state;
                let grad = self.observables.iter().map(|o| state.expectation(o)).collect::<Result<Vec<_>>>()?;
                let fidelity = state.fidelity(&gibbs_target_state(u)?)?;
                Ok(ModelEstimate { grad, fidelity, theta: evo.thetas.last().cloned() })
            }
        }
    }
}

/// Gradient descent on `KL(P_D || P(·|u))` from a standard-normal start.
///
/// Entry `s` of the record holds `u[s]` and the fidelity of the state
/// evolved under `Ĥ(u[s])`; the last entry gets one extra evolution so that
/// every recorded `u` has a fidelity.
pub fn train(data: &TrainingSet, config: &LearnConfig, reference: Option<&IsingParams>) -> Result<LearnRecord> {
    config.validate()?;
    let n = data.n_units();
    if n < 2 {
        return Err(Error::Config("training needs at least 2 units".into()));
    }
    if let Some(r) = reference {
        if r.n_units() != n {
            return Err(Error::Dimension { expected: n, got: r.n_units() });
        }
    }
    let p_data = empirical_distribution(data)?;
    let p_true = reference.map(boltzmann_distribution).transpose()?;
    let data_grad = data_moment_vector(data)?;
    let trainer = Trainer { circuit: ParamCircuit::fig2(n)?, config, observables: gradient_observables(n) };

    let mut u = match &config.init_params {
        Some(p) if p.n_units() != n => return Err(Error::Dimension { expected: n, got: p.n_units() }),
        Some(p) => p.clone(),
        None => sample_true_params(n, config.init_seed),
    };
    let mut theta: Option<Vec<f64>> = None;
    let mut steps = Vec::with_capacity(config.n_step + 1);
    for s in 0..=config.n_step {
        let p_model = boltzmann_distribution(&u)?;
        let est = trainer.model_estimate(&u, s, theta.as_deref())?;
        steps.push(LearnStep {
            step: s,
            u: u.flatten(),
            kld_true: p_true.as_ref().map(|p| kld(p, &p_model)).transpose()?,
            kld_data: kld(&p_data, &p_model)?,
            fidelity: est.fidelity,
        });
        if s == config.n_step {
            break;
        }
        let grad = kld_gradient(&est.grad, &data_grad)?;
        let next: Vec<f64> = u.flatten().iter().zip(&grad).map(|(x, g)| x - config.eta * g).collect();
        if next.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("u after update {} (gradient {grad:?})", s + 1)));
        }
        u = IsingParams::from_flat(n, &next)?;
        theta = est.theta;
    }
    Ok(LearnRecord { n_units: n, steps })
}
