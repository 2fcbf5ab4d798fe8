//! Multi-group training runs and their aggregate result files.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ansatz::ParamCircuit;
use crate::error::{Error, Result};
use crate::io::fmt_float;
use crate::learner::{generate_training_data, sample_true_params, train, LearnConfig, LearnRecord};
use crate::varqite::{mix, Backend, EvolutionConfig, DEFAULT_REGULARIZATION};

/// Steps at which KLD histograms are written.
pub const HISTOGRAM_STEPS: [usize; 3] = [25, 50, 100];
pub const HISTOGRAM_BINS: usize = 20;
pub const HISTOGRAM_MAX: f64 = 0.26;

const TAG_TRUTH: u64 = 1;
const TAG_DATA: u64 = 2;
const TAG_INIT: u64 = 3;
const TAG_SHOTS: u64 = 4;

/// Flat experiment description; absent fields take their defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n_units: usize,
    pub n_groups: usize,
    pub n_samples: usize,
    pub n_step: usize,
    pub delta_tau: f64,
    pub tau_final: f64,
    pub eta: f64,
    pub regularization: f64,
    /// `exact` or `shots:COUNT`.
    pub backend: String,
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
    pub warm_start: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_units: 4,
            n_groups: 30,
            n_samples: 1000,
            n_step: 100,
            delta_tau: 0.1,
            tau_final: 0.5,
            eta: 0.1,
            regularization: DEFAULT_REGULARIZATION,
            backend: "exact".into(),
            seed: 1,
            out_dir: PathBuf::from("results"),
            workers: 0,
            warm_start: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("n_units", self.n_units),
            ("n_groups", self.n_groups),
            ("n_samples", self.n_samples),
            ("n_step", self.n_step),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.n_units < 2 || self.n_units > crate::statevector::MAX_QUBITS {
            return Err(Error::Config(format!("n_units must lie in 2..={}", crate::statevector::MAX_QUBITS)));
        }
        self.learn_config(0, 0).validate()
    }

    fn backend_for(&self, group_seed: u64) -> Result<Backend> {
        Backend::parse(&self.backend, group_seed)
    }

    /// Learner settings for one group; the backend string is checked by
    /// [`ExperimentConfig::validate`] before this is used.
    fn learn_config(&self, init_seed: u64, shot_seed: u64) -> LearnConfig {
        let backend = self.backend_for(shot_seed).unwrap_or(Backend::Shots { shots: 0, seed: 0 });
        LearnConfig {
            evolution: EvolutionConfig {
                delta_tau: self.delta_tau,
                tau_final: self.tau_final,
                regularization: self.regularization,
                backend,
            },
            warm_start: self.warm_start,
            ..LearnConfig::new(self.eta, self.n_step, init_seed)
        }
    }
}

/// Counts of one step's KLD values over `[0, 0.26]` plus an overflow bin.
#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    pub step: usize,
    /// `HISTOGRAM_BINS + 1` edges.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    /// Values above the last edge (or not finite).
    pub overflow: usize,
}

impl Histogram {
    pub fn build(step: usize, values: &[f64]) -> Self {
        let width = HISTOGRAM_MAX / HISTOGRAM_BINS as f64;
        let edges = (0..=HISTOGRAM_BINS).map(|i| i as f64 * width).collect();
        let mut counts = vec![0; HISTOGRAM_BINS];
        let mut overflow = 0;
        for &v in values {
            if v.is_finite() && (0.0..=HISTOGRAM_MAX).contains(&v) {
                counts[((v / width) as usize).min(HISTOGRAM_BINS - 1)] += 1;
            } else {
                overflow += 1;
            }
        }
        Self { step, edges, counts, overflow }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum::<usize>() + self.overflow
    }

    fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "bin_lo,bin_hi,count")?;
        for (i, c) in self.counts.iter().enumerate() {
            writeln!(out, "{},{},{c}", fmt_float(self.edges[i]), fmt_float(self.edges[i + 1]))?;
        }
        writeln!(out, "{},{},{}", fmt_float(HISTOGRAM_MAX), fmt_float(f64::INFINITY), self.overflow)?;
        Ok(())
    }
}

/// Summary over all groups.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregateReport {
    pub kld_mean: Vec<f64>,
    /// Population standard deviation over groups.
    pub kld_std: Vec<f64>,
    pub histograms: Vec<Histogram>,
    pub fidelity_min: Vec<f64>,
    pub fidelity_mean: Vec<f64>,
    /// Lowest fidelity seen by each group.
    pub group_fidelity_min: Vec<f64>,
    pub records: Vec<LearnRecord>,
}

impl AggregateReport {
    pub fn from_records(records: Vec<LearnRecord>) -> Result<Self> {
        let n_rows = records.first().ok_or(Error::EmptyData)?.steps.len();
        if records.iter().any(|r| r.steps.len() != n_rows) {
            return Err(Error::Config("records differ in length".into()));
        }
        let column = |s: usize, f: &dyn Fn(&crate::learner::LearnStep) -> f64| -> Vec<f64> {
            records.iter().map(|r| f(&r.steps[s])).collect()
        };
        let kld_true = |st: &crate::learner::LearnStep| st.kld_true.unwrap_or(f64::NAN);
        let (mut kld_mean, mut kld_std, mut fidelity_min, mut fidelity_mean) = (vec![], vec![], vec![], vec![]);
        for s in 0..n_rows {
            let k = column(s, &kld_true);
            let (m, sd) = mean_std(&k);
            kld_mean.push(m);
            kld_std.push(sd);
            let f = column(s, &|st| st.fidelity);
            fidelity_min.push(f.iter().copied().fold(f64::INFINITY, f64::min));
            fidelity_mean.push(mean_std(&f).0);
        }
        let histograms = HISTOGRAM_STEPS
            .iter()
            .filter(|&&s| s < n_rows)
            .map(|&s| Histogram::build(s, &column(s, &kld_true)))
            .collect();
        let group_fidelity_min =
            records.iter().map(|r| r.steps.iter().map(|s| s.fidelity).fold(f64::INFINITY, f64::min)).collect();
        Ok(Self { kld_mean, kld_std, histograms, fidelity_min, fidelity_mean, group_fidelity_min, records })
    }

    /// Writes every result file into `dir`.
    pub fn write_files(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        for (l, rec) in self.records.iter().enumerate() {
            write_with(&dir.join(format!("group_{}.csv", l + 1)), |w| rec.write_csv(w))?;
        }
        write_with(&dir.join("aggregate.csv"), |w| {
            writeln!(w, "step,kld_mean,kld_std")?;
            for (s, (m, sd)) in self.kld_mean.iter().zip(&self.kld_std).enumerate() {
                writeln!(w, "{s},{},{}", fmt_float(*m), fmt_float(*sd))?;
            }
            Ok(())
        })?;
        for h in &self.histograms {
            write_with(&dir.join(format!("hist_step{}.csv", h.step)), |w| h.write_csv(w))?;
        }
        write_with(&dir.join("fidelity.csv"), |w| {
            writeln!(w, "step,min,mean")?;
            for (s, (lo, m)) in self.fidelity_min.iter().zip(&self.fidelity_mean).enumerate() {
                writeln!(w, "{s},{},{}", fmt_float(*lo), fmt_float(*m))?;
            }
            Ok(())
        })
    }
}

fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Trains group `l` (1-based) from seeds derived from the master seed.
pub fn run_group(config: &ExperimentConfig, l: usize) -> Result<LearnRecord> {
    let seed = |tag| mix(config.seed, tag, l as u64);
    let u_star = sample_true_params(config.n_units, seed(TAG_TRUTH));
    let data = generate_training_data(&u_star, config.n_samples, seed(TAG_DATA))?;
    train(&data, &config.learn_config(seed(TAG_INIT), seed(TAG_SHOTS)), Some(&u_star))
}

/// Runs every group, then writes all files from the calling thread.
pub fn run_experiment(config: &ExperimentConfig) -> Result<AggregateReport> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let records = pool.install(|| {
        (1..=config.n_groups)
            .into_par_iter()
            .map(|l| run_group(config, l).map_err(|e| Error::Group { group: l, source: Box::new(e) }))
            .collect::<Result<Vec<_>>>()
    })?;
    let report = AggregateReport::from_records(records)?;
    let dir = &config.out_dir;
    report.write_files(dir)?;
    // output location and thread count do not affect results and are left out
    let mut provenance = serde_json::to_value(config)?;
    if let Some(map) = provenance.as_object_mut() {
        map.remove("out_dir");
        map.remove("workers");
    }
    write_with(&dir.join("config.json"), |w| Ok(writeln!(w, "{}", serde_json::to_string_pretty(&provenance)?)?))?;
    write_with(&dir.join("ansatz.json"), |w| Ok(writeln!(w, "{}", ParamCircuit::fig2(config.n_units)?.to_json()?)?))?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learner::LearnStep;

    #[test]
    fn defaults_follow_protocol() {
        let c = ExperimentConfig::default();
        assert_eq!((c.n_units, c.n_groups, c.n_samples, c.n_step), (4, 30, 1000, 100));
        assert_eq!((c.delta_tau, c.tau_final, c.eta), (0.1, 0.5, 0.1));
        c.validate().unwrap();
    }

    #[test]
    fn json_roundtrip_and_partial_files() {
        let c = ExperimentConfig { n_groups: 3, backend: "shots:500".into(), seed: 77, ..Default::default() };
        let text = c.to_json().unwrap();
        let back = ExperimentConfig::from_json(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_json().unwrap(), text);
        let partial = ExperimentConfig::from_json(r#"{"n_step": 5}"#).unwrap();
        assert_eq!(partial, ExperimentConfig { n_step: 5, ..Default::default() });
    }

    #[test]
    fn malformed_configs_rejected() {
        for bad in [
            r#"{"n_groups": 0}"#,
            r#"{"eta": 0.8}"#,
            r#"{"backend": "gpu"}"#,
            r#"{"backend": "shots:0"}"#,
            r#"{"delta_tau": 0.3}"#,
            r#"{"n_units": 1}"#,
            r#"{"typo": 1}"#,
            "not json",
        ] {
            assert!(ExperimentConfig::from_json(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn histogram_partition() {
        let h = Histogram::build(25, &[0.0, 0.0129, 0.0131, 0.26, 0.2600001, 1.0, f64::INFINITY]);
        assert_eq!(h.edges.len(), 21);
        assert_eq!(h.counts[0], 2);
        assert_eq!(h.counts[1], 1);
        assert_eq!(h.counts[19], 1);
        assert_eq!(h.overflow, 3);
        assert_eq!(h.total(), 7);
    }

    #[test]
    fn population_std() {
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!((m, s), (2.0, 1.0));
        assert_eq!(mean_std(&[0.4]).1, 0.0);
    }

    fn fake_record(kld: &[f64]) -> LearnRecord {
        LearnRecord {
            n_units: 2,
            steps: kld
                .iter()
                .enumerate()
                .map(|(s, &k)| LearnStep {
                    step: s,
                    u: vec![0.0; 3],
                    kld_true: Some(k),
                    kld_data: k,
                    fidelity: 1.0 - k,
                })
                .collect(),
        }
    }

    #[test]
    fn aggregate_statistics() {
        let rows: Vec<f64> = (0..=30).map(|s| s as f64 / 100.0).collect();
        let other: Vec<f64> = rows.iter().map(|x| x + 0.02).collect();
        let report = AggregateReport::from_records(vec![fake_record(&rows), fake_record(&other)]).unwrap();
        assert!((report.kld_mean[10] - 0.11).abs() < 1e-15);
        assert!((report.kld_std[10] - 0.01).abs() < 1e-15);
        assert_eq!(report.histograms.len(), 1);
        assert_eq!(report.histograms[0].step, 25);
        assert_eq!(report.histograms[0].total(), 2);
        assert!((report.group_fidelity_min[0] - 0.7).abs() < 1e-15);
        assert!((report.group_fidelity_min[1] - 0.68).abs() < 1e-15);
        assert!(AggregateReport::from_records(vec![]).is_err());
    }

    #[test]
    fn smoke_run_single_group() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig { n_groups: 1, n_step: 1, out_dir: dir.path().into(), ..Default::default() };
        let report = run_experiment(&cfg).unwrap();
        assert_eq!(report.kld_std, vec![0.0, 0.0]);
        for f in ["group_1.csv", "aggregate.csv", "fidelity.csv", "config.json", "ansatz.json"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        assert!(!dir.path().join("hist_step25.csv").exists());
    }

    #[test]
    fn unwritable_output_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("taken");
        fs::write(&blocker, "x").unwrap();
        let cfg = ExperimentConfig { n_groups: 1, n_step: 1, out_dir: blocker, ..Default::default() };
        assert!(matches!(run_experiment(&cfg), Err(Error::Io(_))));
    }

    #[test]
    fn group_error_message() {
        let e = Error::Group { group: 7, source: Box::new(Error::EmptyData) };
        assert_eq!(e.to_string(), "group 7: training set is empty");
    }
}
