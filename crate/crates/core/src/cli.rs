//! Command-line front end.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::ansatz::ParamCircuit;
use crate::check::run_checks;
use crate::error::{Error, Result};
use crate::experiment::{run_experiment, ExperimentConfig};
use crate::io::fmt_float;
use crate::ising::{
    boltzmann_distribution, exact_thermal_gradient, gibbs_target_state, log_partition_function, quantum_hamiltonian,
    IsingParams, SpinConfig,
};
use crate::learner::sample_true_params;
use crate::varqite::{evolve, write_trajectory_csv, Backend, EvolutionConfig, DEFAULT_REGULARIZATION};

#[derive(Debug, Parser)]
#[command(name = "varqbm", version, about = "Boltzmann machine training with variational imaginary-time evolution")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train every group and write the result files.
    Run(RunArgs),
    /// Evolve one Hamiltonian and dump the parameter trajectory.
    Evolve(EvolveArgs),
    /// Print the exact Gibbs table, log Z and thermal gradient.
    Oracle(ParamsArgs),
    /// Run the invariant suite.
    Check {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    /// JSON config; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    groups: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    /// `exact` or `shots:COUNT`.
    #[arg(long)]
    backend: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    eta: Option<f64>,
}

/// Source of the Ising parameters `u`.
#[derive(Debug, Args)]
struct ParamsArgs {
    #[arg(long, default_value_t = 4)]
    n: usize,
    /// Flat `u` as comma-separated values: couplings in pair order, then fields.
    #[arg(long, allow_hyphen_values = true, conflicts_with_all = ["params", "random"])]
    u: Option<String>,
    /// JSON file `{"n", "J": [[i, j, v]], "h"}`.
    #[arg(long, conflicts_with = "random")]
    params: Option<PathBuf>,
    /// Standard-normal `u` drawn from `--seed`.
    #[arg(long)]
    random: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct EvolveArgs {
    #[command(flatten)]
    params: ParamsArgs,
    #[arg(long, default_value = "exact")]
    backend: String,
    #[arg(long, default_value_t = 0.1)]
    delta_tau: f64,
    #[arg(long, default_value_t = 0.5)]
    tau_final: f64,
    /// Directory for `trajectory.csv`; the CSV goes to stdout otherwise.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ParamsArgs {
    fn resolve(&self) -> Result<IsingParams> {
        if let Some(path) = &self.params {
            return IsingParams::from_json(&fs::read_to_string(path)?);
        }
        if self.n < 1 || self.n > crate::statevector::MAX_QUBITS {
            return Err(Error::Size(self.n));
        }
        if let Some(text) = &self.u {
            let values = text
                .split(',')
                .map(|t| t.trim().parse::<f64>().map_err(|e| Error::Parse(format!("--u value '{t}': {e}"))))
                .collect::<Result<Vec<_>>>()?;
            return IsingParams::from_flat(self.n, &values);
        }
        if self.random {
            return Ok(sample_true_params(self.n, self.seed));
        }
        Ok(IsingParams::zeros(self.n))
    }
}

fn run(args: &RunArgs, out: &mut dyn Write) -> Result<()> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.groups {
        cfg.n_groups = v;
    }
    if let Some(v) = args.steps {
        cfg.n_step = v;
    }
    if let Some(v) = &args.backend {
        cfg.backend = v.clone();
    }
    if let Some(v) = &args.out {
        cfg.out_dir = v.clone();
    }
    if let Some(v) = args.workers {
        cfg.workers = v;
    }
    if let Some(v) = args.eta {
        cfg.eta = v;
    }
    let report = run_experiment(&cfg)?;
    let last = report.kld_mean.len() - 1;
    writeln!(out, "groups: {}", cfg.n_groups)?;
    writeln!(out, "step {last} kld mean: {}", fmt_float(report.kld_mean[last]))?;
    writeln!(out, "step {last} kld std: {}", fmt_float(report.kld_std[last]))?;
    let min_fid = report.group_fidelity_min.iter().copied().fold(f64::INFINITY, f64::min);
    writeln!(out, "lowest evolution fidelity: {}", fmt_float(min_fid))?;
    writeln!(out, "results written to {}", cfg.out_dir.display())?;
    Ok(())
}

fn evolve_cmd(args: &EvolveArgs, out: &mut dyn Write) -> Result<()> {
    let u = args.params.resolve()?;
    let config = EvolutionConfig {
        delta_tau: args.delta_tau,
        tau_final: args.tau_final,
        regularization: DEFAULT_REGULARIZATION,
        backend: Backend::parse(&args.backend, args.params.seed)?,
    };
    let circuit = ParamCircuit::fig2(u.n_units())?;
    let h = quantum_hamiltonian(&u);
    let evo = evolve(&circuit, &h, &config)?;
    let target = gibbs_target_state(&u)?;
    let fidelity = evo.final_state.fidelity(&target)?;
    match &args.out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let path = dir.join("trajectory.csv");
            let mut w = BufWriter::new(File::create(&path)?);
            write_trajectory_csv(&mut w, &circuit, &h, &evo, Some(&target))?;
            w.flush()?;
            writeln!(out, "final fidelity: {}", fmt_float(fidelity))?;
            writeln!(out, "trajectory written to {}", path.display())?;
        }
        None => {
            write_trajectory_csv(&mut *out, &circuit, &h, &evo, Some(&target))?;
            eprintln!("final fidelity: {}", fmt_float(fidelity));
        }
    }
    Ok(())
}

fn oracle(args: &ParamsArgs, out: &mut dyn Write) -> Result<()> {
    let u = args.resolve()?;
    let n = u.n_units();
    let probs = boltzmann_distribution(&u)?;
    let energies = u.energies();
    writeln!(out, "index,spins,energy,probability")?;
    for (z, (e, p)) in energies.iter().zip(probs.probs()).enumerate() {
        let spins: Vec<String> = SpinConfig::from_basis_index(n, z).spins().iter().map(|s| format!("{s:+}")).collect();
        writeln!(out, "{z},{},{},{}", spins.join(" "), fmt_float(*e), fmt_float(*p))?;
    }
    writeln!(out, "log_z,{}", fmt_float(log_partition_function(&u)?))?;
    let grad: Vec<String> = exact_thermal_gradient(&u)?.into_iter().map(fmt_float).collect();
    writeln!(out, "thermal_gradient,{}", grad.join(","))?;
    Ok(())
}

fn check(seed: u64, out: &mut dyn Write) -> Result<bool> {
    let outcomes = run_checks(seed)?;
    for c in &outcomes {
        let status = if c.passed() { "PASS" } else { "FAIL" };
        writeln!(out, "{status} {} (error {:.3e}, tolerance {:.0e})", c.name, c.error, c.tolerance)?;
    }
    let failed = outcomes.iter().filter(|c| !c.passed()).count();
    writeln!(out, "{} of {} checks passed", outcomes.len() - failed, outcomes.len())?;
    Ok(failed == 0)
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit status.
pub fn cli_main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            if code == 0 {
                let _ = write!(out, "{text}");
            } else {
                let _ = write!(err, "{text}");
            }
            return code;
        }
    };
    let result = match &cli.command {
        Command::Run(a) => run(a, out).map(|_| true),
        Command::Evolve(a) => evolve_cmd(a, out).map(|_| true),
        Command::Oracle(a) => oracle(a, out).map(|_| true),
        Command::Check { seed } => check(*seed, out),
    };
    match result {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                let _ = writeln!(err, "  caused by: {s}");
                source = s.source();
            }
            1
        }
    }
}

/// [`cli_main_with`] on the process arguments and standard streams.
pub fn cli_main() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    cli_main_with(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = cli_main_with(std::iter::once("varqbm").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn oracle_uniform_two_units() {
        let (code, out, _) = call(&["oracle", "--n", "2"]);
        assert_eq!(code, 0);
        let lines: Vec<&str> = out.lines().collect();
        assert_eq!(lines.len(), 7);
        for line in &lines[1..5] {
            let p: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
            assert!((p - 0.25).abs() < 1e-15);
        }
        let log_z: f64 = lines[5].strip_prefix("log_z,").unwrap().parse().unwrap();
        assert!((log_z - 2.0 * 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn oracle_accepts_flat_u() {
        let (code, out, _) = call(&["oracle", "--n", "2", "--u", "-0.5,0.1,0.2"]);
        assert_eq!(code, 0, "{out}");
        assert!(out.contains("0,+1 +1,"));
        let (code, _, err) = call(&["oracle", "--n", "2", "--u", "1,2"]);
        assert_eq!(code, 1);
        assert!(err.contains("dimension"));
    }

    #[test]
    fn usage_errors_are_nonzero() {
        assert_eq!(call(&[]).0, 2);
        assert_eq!(call(&["launch"]).0, 2);
        assert_eq!(call(&["run", "--groups", "many"]).0, 2);
        let (code, out, _) = call(&["--help"]);
        assert_eq!(code, 0);
        assert!(out.contains("oracle"));
    }

    #[test]
    fn malformed_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        fs::write(&path, r#"{"n_groups": "thirty"}"#).unwrap();
        let (code, _, err) = call(&["run", "--config", path.to_str().unwrap()]);
        assert_eq!(code, 1);
        assert!(err.contains("invalid configuration"), "{err}");
        let (code, _, err) = call(&["run", "--backend", "shots:x", "--out", dir.path().to_str().unwrap()]);
        assert_eq!(code, 1);
        assert!(err.contains("shot count"), "{err}");
    }

    #[test]
    fn check_reports_every_line() {
        let (code, out, _) = call(&["check"]);
        assert_eq!(code, 0, "{out}");
        assert!(out.lines().filter(|l| l.starts_with("PASS")).count() >= 10);
        assert!(!out.contains("FAIL"));
    }

    #[test]
    fn evolve_writes_trajectory() {
        let dir = tempfile::tempdir().unwrap();
        let (code, out, err) =
            call(&["evolve", "--n", "2", "--random", "--seed", "3", "--out", dir.path().to_str().unwrap()]);
        assert_eq!(code, 0, "{err}");
        assert!(out.starts_with("final fidelity: "));
        let csv = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
        assert_eq!(csv.lines().count(), 7);
    }
}
