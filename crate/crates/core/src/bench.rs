//! The MLE vs RF-MLE comparison grid.
//!
//! For every generator model, horizon and sequence index a sequence is
//! simulated (or read back if its file already exists); every fitted family is
//! then estimated by MLE from [`default_init`], and every ε adds an RF-MLE row
//! built from that same MLE. Three CSV files and a JSON sidecar are written:
//!
//! - `per_sequence.csv`: one row per (sequence, fitted family, method, ε)
//! - `summary.csv`: mean and standard deviation of the llh per cell
//! - `improvement.csv`: share of sequences where RF-MLE beat MLE by more than
//!   [`IMPROVEMENT_MARGIN`]
//! - `run.json`: crate version, config hash and master seed
//!
//! Sequences live under `<output_dir>/sequences/<FAMILY>/T<horizon>/seq<k>.txt`.
//! Each one is simulated on its own ChaCha stream, derived from its family,
//! horizon and index, so the files do not depend on the grid's other entries
//! or on the worker count.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use log::{debug, info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::fit::{default_init, mle_fit, renormalized_fit, FitError, FitResult, Method};
use crate::kernel::{HawkesModel, KernelFamily, KernelParams};
use crate::likelihood::{EventSequence, LikelihoodError};
use crate::optim::OptimConfig;
use crate::simulate::{preset, simulate, SimulationConfig, SimulationError};

/// RF-MLE counts as an improvement only above this absolute llh margin.
pub const IMPROVEMENT_MARGIN: f64 = 1e-9;

pub const PER_SEQUENCE_FILE: &str = "per_sequence.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const IMPROVEMENT_FILE: &str = "improvement.csv";
pub const RUN_FILE: &str = "run.json";

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid benchmark config: {0}")]
    Config(String),
    #[error("cannot parse config {path}: {source}")]
    ConfigSyntax {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Sequence {
        path: PathBuf,
        source: LikelihoodError,
    },
    #[error("simulating {id}: {source}")]
    Simulation { id: String, source: SimulationError },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: {message}")]
    Report { path: PathBuf, message: String },
    #[error("cannot start worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> BenchError + '_ {
    move |source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// JSON schema of the benchmark; every field is optional and defaults to the
/// full grid.
///
/// ```json
/// {
///   "horizons": [1000, 5000, 10000, 30000],
///   "sequences_per_cell": 10,
///   "epsilons": [0.1, 0.01, 0.001],
///   "generators": [{"mu": 0.5, "kernel": {"family": "EXP", "params": {"alpha": 0.06, "beta": 0.2}}}],
///   "fitted_families": ["EXP", "PWL", "QEXP", "RAY"],
///   "master_seed": 20190101,
///   "optimizer": {"max_iterations": 2000, "xtol": 1e-8, "ftol": 1e-10, "initial_step": 0.1, "restart": false},
///   "output_dir": "bench-out",
///   "workers": 0
/// }
/// ```
///
/// `workers = 0` uses every available core. `output_dir` and `workers` do not
/// affect results and are left out of the config hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub horizons: Vec<f64>,
    pub sequences_per_cell: usize,
    pub epsilons: Vec<f64>,
    pub generators: Vec<HawkesModel>,
    pub fitted_families: Vec<KernelFamily>,
    pub master_seed: u64,
    pub optimizer: OptimConfig,
    pub output_dir: PathBuf,
    pub workers: usize,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            horizons: vec![1000.0, 5000.0, 10000.0, 30000.0],
            sequences_per_cell: 10,
            epsilons: vec![0.1, 0.01, 0.001],
            generators: KernelFamily::ALL.into_iter().map(preset).collect(),
            fitted_families: KernelFamily::ALL.to_vec(),
            master_seed: 20190101,
            optimizer: OptimConfig::default(),
            output_dir: PathBuf::from("bench-out"),
            workers: 0,
        }
    }
}

#[derive(Serialize)]
struct HashedConfig<'a> {
    horizons: &'a [f64],
    sequences_per_cell: usize,
    epsilons: &'a [f64],
    generators: &'a [HawkesModel],
    fitted_families: &'a [KernelFamily],
    master_seed: u64,
    optimizer: &'a OptimConfig,
}

impl BenchmarkConfig {
    pub fn from_file(path: &Path) -> Result<Self, BenchError> {
        let text = fs::read_to_string(path).map_err(io_error(path))?;
        let config: BenchmarkConfig =
            serde_json::from_str(&text).map_err(|source| BenchError::ConfigSyntax {
                path: path.to_path_buf(),
                source,
            })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let fail = |m: String| Err(BenchError::Config(m));
        if self.horizons.is_empty() || self.epsilons.is_empty() {
            return fail("horizons and epsilons must be non-empty".into());
        }
        if self.generators.is_empty() || self.fitted_families.is_empty() {
            return fail("generators and fitted_families must be non-empty".into());
        }
        if self.sequences_per_cell == 0 {
            return fail("sequences_per_cell must be at least 1".into());
        }
        if let Some(h) = self.horizons.iter().find(|h| !(h.is_finite() && **h > 0.0)) {
            return fail(format!("horizon {h} is not positive"));
        }
        if let Some(e) = self.epsilons.iter().find(|e| !(e.is_finite() && **e > 0.0)) {
            return fail(format!("epsilon {e} is not positive"));
        }
        for (i, g) in self.generators.iter().enumerate() {
            g.validate()
                .map_err(|e| BenchError::Config(format!("generator {i}: {e}")))?;
            if self.generators[..i]
                .iter()
                .any(|o| o.family() == g.family())
            {
                return fail(format!("more than one {} generator", g.family()));
            }
        }
        Ok(())
    }

    /// SHA-256 of the result-relevant fields, as lowercase hex.
    pub fn hash(&self) -> String {
        let hashed = HashedConfig {
            horizons: &self.horizons,
            sequences_per_cell: self.sequences_per_cell,
            epsilons: &self.epsilons,
            generators: &self.generators,
            fitted_families: &self.fitted_families,
            master_seed: self.master_seed,
            optimizer: &self.optimizer,
        };
        let json = serde_json::to_vec(&hashed).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }

    fn sequence_jobs(&self) -> Vec<SequenceJob> {
        let mut jobs = Vec::new();
        for generator in &self.generators {
            for &horizon in &self.horizons {
                for index in 0..self.sequences_per_cell {
                    jobs.push(SequenceJob {
                        generator: *generator,
                        horizon,
                        index,
                    });
                }
            }
        }
        jobs
    }

    fn pool(&self) -> Result<rayon::ThreadPool, BenchError> {
        Ok(rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()?)
    }
}

#[derive(Debug, Clone, Copy)]
struct SequenceJob {
    generator: HawkesModel,
    horizon: f64,
    index: usize,
}

impl SequenceJob {
    fn family(&self) -> KernelFamily {
        self.generator.family()
    }

    fn id(&self) -> String {
        sequence_id(self.family(), self.horizon, self.index)
    }

    fn path(&self, root: &Path) -> PathBuf {
        root.join("sequences").join(self.id() + ".txt")
    }

    fn simulation(&self, master_seed: u64) -> SimulationConfig {
        let stream =
            mix(mix(mix(self.family() as u64) ^ self.horizon.to_bits()) ^ self.index as u64);
        SimulationConfig::new(self.generator, self.horizon, master_seed).with_stream(stream)
    }
}

/// `<FAMILY>/T<horizon>/seq<k>`.
pub fn sequence_id(family: KernelFamily, horizon: f64, index: usize) -> String {
    format!("{family}/T{horizon}/seq{index}")
}

fn parse_sequence_id(id: &str) -> Option<(KernelFamily, f64)> {
    let mut parts = id.split('/');
    let family = parts.next()?.parse().ok()?;
    let horizon = parts.next()?.strip_prefix('T')?.parse().ok()?;
    Some((family, horizon))
}

// splitmix64 finalizer
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Simulates every sequence of the grid and writes it under `output_dir`,
/// returning the file paths in grid order.
pub fn simulate_sequences(config: &BenchmarkConfig) -> Result<Vec<PathBuf>, BenchError> {
    config.validate()?;
    let root = &config.output_dir;
    let jobs = config.sequence_jobs();
    config.pool()?.install(|| {
        jobs.par_iter()
            .map(|job| {
                let path = job.path(root);
                let seq = simulate(&job.simulation(config.master_seed)).map_err(|source| {
                    BenchError::Simulation {
                        id: job.id(),
                        source,
                    }
                })?;
                write_sequence(&seq, &path)?;
                Ok(path)
            })
            .collect()
    })
}

fn write_sequence(seq: &EventSequence, path: &Path) -> Result<(), BenchError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_error(dir))?;
    }
    fs::write(path, seq.to_text()).map_err(io_error(path))
}

fn load_or_simulate(
    job: &SequenceJob,
    config: &BenchmarkConfig,
) -> Result<EventSequence, BenchError> {
    let path = job.path(&config.output_dir);
    if path.exists() {
        debug!("reading {}", path.display());
        return EventSequence::read(&path).map_err(|source| BenchError::Sequence { path, source });
    }
    let seq =
        simulate(&job.simulation(config.master_seed)).map_err(|source| BenchError::Simulation {
            id: job.id(),
            source,
        })?;
    write_sequence(&seq, &path)?;
    Ok(seq)
}

/// One line of `per_sequence.csv`.
///
/// Kernel parameters of the other families, and every numeric field of a
/// failed fit, are left empty. `strategy` is `none` when no renormalization
/// was applied and `FAILED` when the fit itself failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRow {
    pub sequence_id: String,
    pub generator_family: Option<KernelFamily>,
    pub fitted_family: KernelFamily,
    pub method: Method,
    pub epsilon: Option<f64>,
    pub mu: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    #[serde(rename = "K")]
    pub k: Option<f64>,
    pub c: Option<f64>,
    pub p: Option<f64>,
    pub a: Option<f64>,
    pub q: Option<f64>,
    pub gamma: Option<f64>,
    pub eta: Option<f64>,
    pub branching_ratio: Option<f64>,
    pub llh: Option<f64>,
    pub strategy: String,
    pub converged: bool,
    pub iterations: usize,
}

pub const FAILED: &str = "FAILED";

impl FitRow {
    pub fn new(
        sequence_id: String,
        generator_family: Option<KernelFamily>,
        fitted_family: KernelFamily,
        fit: &FitResult,
    ) -> Self {
        let mut row = FitRow::failed(
            sequence_id,
            generator_family,
            fitted_family,
            fit.method,
            fit.epsilon,
        );
        row.mu = Some(fit.model.mu);
        match fit.model.kernel {
            KernelParams::Exp { alpha, beta } => (row.alpha, row.beta) = (Some(alpha), Some(beta)),
            KernelParams::Pwl { k, c, p } => (row.k, row.c, row.p) = (Some(k), Some(c), Some(p)),
            KernelParams::Qexp { a, q } => (row.a, row.q) = (Some(a), Some(q)),
            KernelParams::Ray { gamma, eta } => (row.gamma, row.eta) = (Some(gamma), Some(eta)),
        }
        row.branching_ratio = Some(fit.branching_ratio);
        row.llh = Some(fit.llh);
        row.strategy = fit
            .applied_strategy
            .map_or_else(|| "none".to_string(), |s| s.to_string());
        row.converged = fit.converged;
        row.iterations = fit.iterations;
        row
    }

    pub fn failed(
        sequence_id: String,
        generator_family: Option<KernelFamily>,
        fitted_family: KernelFamily,
        method: Method,
        epsilon: Option<f64>,
    ) -> Self {
        FitRow {
            sequence_id,
            generator_family,
            fitted_family,
            method,
            epsilon,
            mu: None,
            alpha: None,
            beta: None,
            k: None,
            c: None,
            p: None,
            a: None,
            q: None,
            gamma: None,
            eta: None,
            branching_ratio: None,
            llh: None,
            strategy: FAILED.to_string(),
            converged: false,
            iterations: 0,
        }
    }

    pub fn is_failed(&self) -> bool {
        self.strategy == FAILED
    }
}

/// One line of `summary.csv`; llh statistics cover the successful fits only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub horizon: f64,
    pub generator_family: KernelFamily,
    pub fitted_family: KernelFamily,
    pub method: Method,
    pub epsilon: Option<f64>,
    pub sequences: usize,
    pub failures: usize,
    pub converged: usize,
    pub mean_llh: Option<f64>,
    /// Sample standard deviation; empty below two successful fits.
    pub std_llh: Option<f64>,
}

/// One line of `improvement.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImprovementRow {
    pub horizon: f64,
    pub fitted_family: KernelFamily,
    pub epsilon: f64,
    pub generator_family: KernelFamily,
    /// Sequences where both MLE and RF-MLE produced a result.
    pub sequences: usize,
    pub improved: usize,
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub version: String,
    pub config_hash: String,
    pub master_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkReport {
    pub rows: Vec<FitRow>,
    pub summary: Vec<SummaryRow>,
    pub improvement: Vec<ImprovementRow>,
}

/// Fits `family` by MLE from [`default_init`] and adds one RF-MLE row per ε.
pub fn fit_rows(
    seq: &EventSequence,
    sequence_id: &str,
    generator: Option<KernelFamily>,
    family: KernelFamily,
    epsilons: &[f64],
    optimizer: &OptimConfig,
) -> Vec<FitRow> {
    let id = || sequence_id.to_string();
    let mle = default_init(seq, family).and_then(|init| mle_fit(seq, family, &init, optimizer));
    let mut rows = Vec::with_capacity(1 + epsilons.len());
    match mle {
        Ok(mle) => {
            rows.push(FitRow::new(id(), generator, family, &mle));
            for &eps in epsilons {
                rows.push(match renormalized_fit(seq, &mle, eps) {
                    Ok(rf) => FitRow::new(id(), generator, family, &rf),
                    Err(e) => failure(id(), generator, family, Method::RfMle, Some(eps), &e),
                });
            }
        }
        Err(e) => {
            rows.push(failure(id(), generator, family, Method::Mle, None, &e));
            for &eps in epsilons {
                rows.push(FitRow::failed(
                    id(),
                    generator,
                    family,
                    Method::RfMle,
                    Some(eps),
                ));
            }
        }
    }
    rows
}

fn failure(
    id: String,
    generator: Option<KernelFamily>,
    family: KernelFamily,
    method: Method,
    epsilon: Option<f64>,
    err: &FitError,
) -> FitRow {
    warn!("{id}: {family} {method} fit failed: {err}");
    FitRow::failed(id, generator, family, method, epsilon)
}

/// Runs the whole grid and writes the report files into `output_dir`.
pub fn run_benchmark(config: &BenchmarkConfig) -> Result<BenchmarkReport, BenchError> {
    config.validate()?;
    let root = &config.output_dir;
    fs::create_dir_all(root).map_err(io_error(root))?;
    let pool = config.pool()?;
    let jobs = config.sequence_jobs();

    info!("preparing {} sequences", jobs.len());
    let sequences: Vec<EventSequence> = pool.install(|| {
        jobs.par_iter()
            .map(|job| load_or_simulate(job, config))
            .collect::<Result<_, _>>()
    })?;

    let tasks: Vec<(usize, KernelFamily)> = (0..jobs.len())
        .flat_map(|s| config.fitted_families.iter().map(move |&f| (s, f)))
        .collect();
    info!(
        "fitting {} (sequence, family) pairs on {} workers",
        tasks.len(),
        pool.current_num_threads()
    );
    let per_task: Vec<Vec<FitRow>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(s, family)| {
                let job = &jobs[s];
                let rows = fit_rows(
                    &sequences[s],
                    &job.id(),
                    Some(job.family()),
                    family,
                    &config.epsilons,
                    &config.optimizer,
                );
                debug!("{} fitted with {family}", job.id());
                rows
            })
            .collect()
    });

    let report = BenchmarkReport::from_rows(per_task.into_iter().flatten().collect())?;
    report.write(root)?;
    write_metadata(config, root)?;
    Ok(report)
}

fn write_metadata(config: &BenchmarkConfig, root: &Path) -> Result<(), BenchError> {
    let meta = RunMetadata {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: config.hash(),
        master_seed: config.master_seed,
    };
    let path = root.join(RUN_FILE);
    let mut text = serde_json::to_string_pretty(&meta).expect("metadata serializes");
    text.push('\n');
    fs::write(&path, text).map_err(io_error(&path))
}

type CellKey = (u64, KernelFamily, KernelFamily, Method, Option<u64>);

impl BenchmarkReport {
    /// Aggregates per-sequence rows. Cells appear sorted by horizon, then in
    /// the order their first row appears.
    pub fn from_rows(rows: Vec<FitRow>) -> Result<Self, BenchError> {
        let mut keys: Vec<(f64, CellKey)> = Vec::new();
        let mut cells: HashMap<CellKey, Vec<&FitRow>> = HashMap::new();
        for row in &rows {
            let (generator, horizon) = row
                .generator_family
                .zip(parse_sequence_id(&row.sequence_id).map(|(_, h)| h))
                .ok_or_else(|| BenchError::Report {
                    path: PathBuf::from(PER_SEQUENCE_FILE),
                    message: format!(
                        "row `{}` has no generator family or horizon",
                        row.sequence_id
                    ),
                })?;
            let key = (
                horizon.to_bits(),
                generator,
                row.fitted_family,
                row.method,
                row.epsilon.map(f64::to_bits),
            );
            cells
                .entry(key)
                .or_insert_with(|| {
                    keys.push((horizon, key));
                    Vec::new()
                })
                .push(row);
        }
        keys.sort_by(|a, b| a.0.total_cmp(&b.0));

        let summary = keys
            .iter()
            .map(|&(horizon, key)| summarize(horizon, key, &cells[&key]))
            .collect();

        let mut improvement = Vec::new();
        for &(horizon, key) in &keys {
            let (h, generator, fitted, method, eps) = key;
            let Some(eps) = eps.filter(|_| method == Method::RfMle) else {
                continue;
            };
            let mle_key = (h, generator, fitted, Method::Mle, None);
            let mle: HashMap<&str, f64> = cells
                .get(&mle_key)
                .into_iter()
                .flatten()
                .filter_map(|r| Some((r.sequence_id.as_str(), r.llh?)))
                .collect();
            let mut sequences = 0;
            let mut improved = 0;
            for rf in &cells[&key] {
                if let (Some(rf_llh), Some(&mle_llh)) = (rf.llh, mle.get(rf.sequence_id.as_str())) {
                    sequences += 1;
                    if rf_llh > mle_llh + IMPROVEMENT_MARGIN {
                        improved += 1;
                    }
                }
            }
            improvement.push(ImprovementRow {
                horizon,
                fitted_family: fitted,
                epsilon: f64::from_bits(eps),
                generator_family: generator,
                sequences,
                improved,
                ratio: (sequences > 0).then(|| improved as f64 / sequences as f64),
            });
        }
        // Figure-style panels: one block per horizon and fitted family.
        improvement.sort_by(|a, b| {
            a.horizon
                .total_cmp(&b.horizon)
                .then(a.fitted_family.cmp(&b.fitted_family))
        });

        Ok(BenchmarkReport {
            rows,
            summary,
            improvement,
        })
    }

    pub fn write(&self, dir: &Path) -> Result<(), BenchError> {
        write_csv(&dir.join(PER_SEQUENCE_FILE), &self.rows)?;
        write_csv(&dir.join(SUMMARY_FILE), &self.summary)?;
        write_csv(&dir.join(IMPROVEMENT_FILE), &self.improvement)
    }

    /// Reads `per_sequence.csv` from `dir` and aggregates it again.
    pub fn read(dir: &Path) -> Result<Self, BenchError> {
        let path = dir.join(PER_SEQUENCE_FILE);
        let csv_error = |source| BenchError::Csv {
            path: path.clone(),
            source,
        };
        let mut reader = csv::Reader::from_path(&path).map_err(csv_error)?;
        let rows = reader
            .deserialize()
            .collect::<Result<Vec<FitRow>, _>>()
            .map_err(csv_error)?;
        Self::from_rows(rows)
    }
}

fn summarize(horizon: f64, key: CellKey, rows: &[&FitRow]) -> SummaryRow {
    let (_, generator_family, fitted_family, method, epsilon) = key;
    let llh: Vec<f64> = rows.iter().filter_map(|r| r.llh).collect();
    let n = llh.len();
    let mean = (n > 0).then(|| llh.iter().sum::<f64>() / n as f64);
    let std = mean
        .filter(|_| n > 1)
        .map(|m| (llh.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt());
    SummaryRow {
        horizon,
        generator_family,
        fitted_family,
        method,
        epsilon: epsilon.map(f64::from_bits),
        sequences: rows.len(),
        failures: rows.iter().filter(|r| r.is_failed()).count(),
        converged: rows.iter().filter(|r| r.converged).count(),
        mean_llh: mean,
        std_llh: std,
    }
}

fn write_csv<T: Serialize>(path: &Path, records: &[T]) -> Result<(), BenchError> {
    let csv_error = |source| BenchError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut writer = csv::Writer::from_path(path).map_err(csv_error)?;
    for r in records {
        writer.serialize(r).map_err(csv_error)?;
    }
    writer.flush().map_err(io_error(path))
}
