//! End-to-end benchmark grid: simulated training sets with MCAR corruption,
//! every strategy fitted on the identical corrupted data, and prediction
//! error measured on one shared noiseless test set.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{
    fit_mia_forest, impute_breiman, impute_ishioka, impute_median, impute_missforest,
};
use crate::data::{generate_sample, inject_mcar, Dataset, MissRates};
use crate::error::{Error, Result};
use crate::forest::{fit_forest, ForestParams};
use crate::scalar::{pairwise_mean, pairwise_sum, Scalar};
use crate::seeding::derive_seed;
use crate::tree::TreeParams;

/// A way of handling the corrupted training data before or during fitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strategy {
    /// Joint split-and-assignation forest fitted directly on the corrupted
    /// data.
    #[serde(rename = "assignation")]
    Assignation,
    /// Missing-together split rules fitted directly on the corrupted data.
    #[serde(rename = "mia")]
    Mia,
    /// Median imputation, then a standard fit.
    #[serde(rename = "median")]
    Median,
    /// Proximity-weighted iterative imputation over observed values.
    #[serde(rename = "breiman")]
    Breiman,
    /// Proximity-weighted k-nearest-neighbor iterative imputation.
    #[serde(rename = "ishioka")]
    Ishioka,
    /// Column-wise forest imputation.
    #[serde(rename = "missforest")]
    MissForest,
    /// Fit on the pre-corruption training data; the reference floor.
    #[serde(rename = "complete-benchmark")]
    CompleteBenchmark,
}

impl Strategy {
    pub const ALL: [Strategy; 7] = [
        Strategy::Assignation,
        Strategy::Mia,
        Strategy::Median,
        Strategy::Breiman,
        Strategy::Ishioka,
        Strategy::MissForest,
        Strategy::CompleteBenchmark,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Assignation => "assignation",
            Strategy::Mia => "mia",
            Strategy::Median => "median",
            Strategy::Breiman => "breiman",
            Strategy::Ishioka => "ishioka",
            Strategy::MissForest => "missforest",
            Strategy::CompleteBenchmark => "complete-benchmark",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .iter()
            .find(|strategy| strategy.name() == s)
            .copied()
            .ok_or_else(|| {
                let valid: Vec<&str> = Strategy::ALL.iter().map(|s| s.name()).collect();
                Error::Config(format!(
                    "unknown strategy {s:?}; valid names: {}",
                    valid.join(", ")
                ))
            })
    }
}

fn default_n_train() -> usize {
    200
}
fn default_n_reps() -> usize {
    100
}
fn default_n_test() -> usize {
    2000
}
fn default_sigma() -> f64 {
    1.0
}
fn default_n_trees() -> usize {
    50
}
fn default_x4_rates() -> Vec<f64> {
    vec![0.05, 0.10, 0.20, 0.40, 0.60, 0.80, 0.90, 0.95]
}
fn default_x1_rate() -> f64 {
    0.20
}
fn default_x3_rate() -> f64 {
    0.10
}
fn default_strategies() -> Vec<Strategy> {
    Strategy::ALL.to_vec()
}
fn default_seed() -> u64 {
    20210517
}
fn default_mtry() -> usize {
    1
}
fn default_nodesize() -> usize {
    5
}
fn default_subsample_frac() -> f64 {
    0.632
}
fn default_breiman_max_iters() -> usize {
    5
}
fn default_impute_tol() -> f64 {
    1e-3
}
fn default_ishioka_k() -> usize {
    10
}
fn default_missforest_max_iters() -> usize {
    10
}

/// Experiment grid configuration; every field has a default reproducing the
/// reference setup (200 training rows, 100 repetitions, 2000 test rows, 50
/// trees, 20%/10% corruption on x1/x3 and a sweep over x4).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub n_train: usize,
    pub n_reps: usize,
    pub n_test: usize,
    pub sigma: f64,
    pub n_trees: usize,
    pub x4_rates: Vec<f64>,
    pub x1_rate: f64,
    pub x3_rate: f64,
    pub strategies: Vec<Strategy>,
    pub seed: u64,
    pub mtry: usize,
    pub nodesize: usize,
    /// Minimum leaf size; defaults to the largest value the nodesize allows.
    pub q_n: Option<usize>,
    pub subsample_frac: f64,
    pub breiman_max_iters: usize,
    pub breiman_tol: f64,
    pub ishioka_k: usize,
    pub ishioka_max_iters: usize,
    pub ishioka_tol: f64,
    pub missforest_max_iters: usize,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            n_train: default_n_train(),
            n_reps: default_n_reps(),
            n_test: default_n_test(),
            sigma: default_sigma(),
            n_trees: default_n_trees(),
            x4_rates: default_x4_rates(),
            x1_rate: default_x1_rate(),
            x3_rate: default_x3_rate(),
            strategies: default_strategies(),
            seed: default_seed(),
            mtry: default_mtry(),
            nodesize: default_nodesize(),
            q_n: None,
            subsample_frac: default_subsample_frac(),
            breiman_max_iters: default_breiman_max_iters(),
            breiman_tol: default_impute_tol(),
            ishioka_k: default_ishioka_k(),
            ishioka_max_iters: default_breiman_max_iters(),
            ishioka_tol: default_impute_tol(),
            missforest_max_iters: default_missforest_max_iters(),
        }
    }
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_reps == 0 {
            return Err(Error::Config("n_reps must be at least 1".into()));
        }
        if self.n_train == 0 || self.n_test == 0 {
            return Err(Error::Config("training and test sizes must be positive".into()));
        }
        if self.strategies.is_empty() {
            return Err(Error::Config("at least one strategy is required".into()));
        }
        for &r in self.x4_rates.iter().chain([&self.x1_rate, &self.x3_rate]) {
            if !(0.0..1.0).contains(&r) {
                return Err(Error::Config(format!(
                    "missing rates must lie in [0,1), got {r}"
                )));
            }
        }
        if !(0.0 < self.subsample_frac && self.subsample_frac <= 1.0) {
            return Err(Error::Config(format!(
                "subsample fraction must lie in (0,1], got {}",
                self.subsample_frac
            )));
        }
        self.forest_params(0)?;
        Ok(())
    }

    pub fn effective_qn(&self) -> usize {
        self.q_n.unwrap_or_else(|| TreeParams::default_qn(self.nodesize))
    }

    pub fn subsample_size(&self) -> usize {
        ((self.subsample_frac * self.n_train as f64).ceil() as usize).clamp(1, self.n_train)
    }

    pub fn forest_params(&self, seed: u64) -> Result<ForestParams> {
        Ok(ForestParams {
            n_trees: self.n_trees,
            subsample_size: self.subsample_size(),
            tree: TreeParams::new(self.mtry, self.nodesize, self.effective_qn())?,
            seed,
        })
    }
}

/// Per-(strategy, rate) results: one mean squared error per repetition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct BenchRow<S: Scalar> {
    pub strategy: Strategy,
    pub x4_rate: f64,
    pub mse_per_rep: Vec<S>,
    /// Total fit-and-score time across repetitions; informational only and
    /// never part of the emitted tables.
    pub wall: Duration,
}

impl<S: Scalar> BenchRow<S> {
    pub fn mean_mse(&self) -> S {
        pairwise_mean(&self.mse_per_rep)
    }

    /// Standard error of the mean; zero with fewer than two repetitions.
    pub fn stderr(&self) -> S {
        let n = self.mse_per_rep.len();
        if n < 2 {
            return S::zero();
        }
        let mean = self.mean_mse();
        let sq: Vec<S> = self
            .mse_per_rep
            .iter()
            .map(|&v| (v - mean) * (v - mean))
            .collect();
        let var = pairwise_sum(&sq) / S::from_count(n - 1);
        (var / S::from_count(n)).sqrt()
    }
}

/// Full grid result, ordered by configured strategy then by rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct BenchmarkResult<S: Scalar> {
    pub rows: Vec<BenchRow<S>>,
}

/// Mean squared error of a predictor against the noiseless target column of
/// the test set.
pub fn mse_vs_truth<S, F>(mut predict: F, test: &Dataset<S>) -> Result<S>
where
    S: Scalar,
    F: FnMut(&[Option<S>]) -> Result<S>,
{
    let truth = test.truth().ok_or_else(|| {
        Error::Config("test set carries no noiseless target column".into())
    })?;
    let mut squared = Vec::with_capacity(test.n());
    for i in 0..test.n() {
        let q = test.row_query(i);
        let diff = predict(&q)? - truth[i];
        squared.push(diff * diff);
    }
    Ok(pairwise_mean(&squared))
}

fn run_strategy<S: Scalar>(
    strategy: Strategy,
    clean: &Dataset<S>,
    corrupted: &Dataset<S>,
    cfg: &BenchmarkConfig,
    forest_seed: u64,
    test: &Dataset<S>,
) -> Result<S> {
    let params = cfg.forest_params(forest_seed)?;
    let forest = match strategy {
        Strategy::Assignation => fit_forest(corrupted, &params)?,
        Strategy::Mia => fit_mia_forest(corrupted, &params)?,
        Strategy::Median => fit_forest(&impute_median(corrupted)?, &params)?,
        Strategy::Breiman => {
            let mut inner = params;
            inner.seed = derive_seed(forest_seed, &[1]);
            let outcome =
                impute_breiman(corrupted, &inner, cfg.breiman_max_iters, cfg.breiman_tol)?;
            fit_forest(&outcome.data, &params)?
        }
        Strategy::Ishioka => {
            let mut inner = params;
            inner.seed = derive_seed(forest_seed, &[2]);
            let outcome = impute_ishioka(
                corrupted,
                &inner,
                cfg.ishioka_k,
                cfg.ishioka_max_iters,
                cfg.ishioka_tol,
            )?;
            fit_forest(&outcome.data, &params)?
        }
        Strategy::MissForest => {
            let mut inner = params;
            inner.seed = derive_seed(forest_seed, &[3]);
            let outcome = impute_missforest(corrupted, &inner, cfg.missforest_max_iters)?;
            fit_forest(&outcome.data, &params)?
        }
        Strategy::CompleteBenchmark => fit_forest(clean, &params)?,
    };
    mse_vs_truth(|x| forest.predict_fractional(x), test)
}

/// Runs the full grid. One noiseless-annotated test set is generated once;
/// each (repetition, rate) cell draws fresh training data from a seed
/// derived from `(seed, rep, rate)`, corrupts it once, and scores every
/// strategy on that same corrupted copy, so the output is reproducible
/// regardless of scheduling.
pub fn run_benchmark<S: Scalar>(cfg: &BenchmarkConfig) -> Result<BenchmarkResult<S>> {
    cfg.validate()?;
    let test: Dataset<S> = generate_sample(cfg.n_test, cfg.sigma, derive_seed(cfg.seed, &[0]))?;

    let cells: Vec<(usize, usize)> = (0..cfg.n_reps)
        .flat_map(|rep| (0..cfg.x4_rates.len()).map(move |rate| (rep, rate)))
        .collect();

    let cell_results: Vec<Vec<(S, Duration)>> = cells
        .par_iter()
        .map(|&(rep, rate_idx)| {
            let cell_seed = derive_seed(cfg.seed, &[1, rep as u64, rate_idx as u64]);
            let clean: Dataset<S> =
                generate_sample(cfg.n_train, cfg.sigma, derive_seed(cell_seed, &[0]))?;
            let rates = MissRates::new(vec![
                cfg.x1_rate,
                0.0,
                cfg.x3_rate,
                cfg.x4_rates[rate_idx],
                0.0,
            ])?;
            let corrupted = inject_mcar(&clean, &rates, derive_seed(cell_seed, &[1]))?;
            let forest_seed = derive_seed(cell_seed, &[2]);
            cfg.strategies
                .iter()
                .map(|&strategy| {
                    let start = Instant::now();
                    let mse =
                        run_strategy(strategy, &clean, &corrupted, cfg, forest_seed, &test)?;
                    Ok((mse, start.elapsed()))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(cfg.strategies.len() * cfg.x4_rates.len());
    for (s_idx, &strategy) in cfg.strategies.iter().enumerate() {
        for (rate_idx, &x4_rate) in cfg.x4_rates.iter().enumerate() {
            let mut mse_per_rep = Vec::with_capacity(cfg.n_reps);
            let mut wall = Duration::ZERO;
            for rep in 0..cfg.n_reps {
                let cell = rep * cfg.x4_rates.len() + rate_idx;
                let (mse, elapsed) = cell_results[cell][s_idx];
                mse_per_rep.push(mse);
                wall += elapsed;
            }
            rows.push(BenchRow {
                strategy,
                x4_rate,
                mse_per_rep,
                wall,
            });
        }
    }
    Ok(BenchmarkResult { rows })
}

/// Output format for [`emit`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmitFormat {
    Csv,
    Json,
}

impl FromStr for EmitFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(EmitFormat::Csv),
            "json" => Ok(EmitFormat::Json),
            other => Err(Error::Config(format!(
                "unknown format {other:?}; valid names: csv, json"
            ))),
        }
    }
}

/// Companion summary path: `results.csv` -> `results.summary.csv`.
pub fn summary_path(path: &Path) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "results".to_string());
    let ext = path
        .extension()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "csv".to_string());
    path.with_file_name(format!("{stem}.summary.{ext}"))
}

#[derive(Serialize)]
struct DetailRecord<S: Scalar> {
    strategy: &'static str,
    x4_rate: f64,
    rep: usize,
    mse: S,
}

#[derive(Serialize)]
struct SummaryRecord<S: Scalar> {
    strategy: &'static str,
    x4_rate: f64,
    mean_mse: S,
    stderr: S,
}

/// Writes the per-repetition table and the per-(strategy, rate) summary.
/// CSV produces two files (`path` and its `.summary` companion); JSON
/// mirrors both tables in a single document at `path`.
pub fn emit<S: Scalar>(result: &BenchmarkResult<S>, format: EmitFormat, path: &Path) -> Result<()> {
    let detail: Vec<DetailRecord<S>> = result
        .rows
        .iter()
        .flat_map(|row| {
            row.mse_per_rep
                .iter()
                .enumerate()
                .map(move |(rep, &mse)| DetailRecord {
                    strategy: row.strategy.name(),
                    x4_rate: row.x4_rate,
                    rep,
                    mse,
                })
        })
        .collect();
    let summary: Vec<SummaryRecord<S>> = result
        .rows
        .iter()
        .map(|row| SummaryRecord {
            strategy: row.strategy.name(),
            x4_rate: row.x4_rate,
            mean_mse: row.mean_mse(),
            stderr: row.stderr(),
        })
        .collect();

    match format {
        EmitFormat::Csv => {
            let mut out = BufWriter::new(File::create(path)?);
            writeln!(out, "strategy,x4_rate,rep,mse")?;
            for r in &detail {
                writeln!(out, "{},{},{},{}", r.strategy, r.x4_rate, r.rep, r.mse)?;
            }
            out.flush()?;
            let mut out = BufWriter::new(File::create(summary_path(path))?);
            writeln!(out, "strategy,x4_rate,mean_mse,stderr")?;
            for r in &summary {
                writeln!(out, "{},{},{},{}", r.strategy, r.x4_rate, r.mean_mse, r.stderr)?;
            }
            out.flush()?;
        }
        EmitFormat::Json => {
            #[derive(Serialize)]
            struct Document<'a, S: Scalar> {
                detail: &'a [DetailRecord<S>],
                summary: &'a [SummaryRecord<S>],
            }
            let mut out = BufWriter::new(File::create(path)?);
            serde_json::to_writer_pretty(
                &mut out,
                &Document {
                    detail: &detail,
                    summary: &summary,
                },
            )
            .map_err(|e| Error::Config(format!("serialization failed: {e}")))?;
            out.write_all(b"\n")?;
            out.flush()?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> BenchmarkConfig {
        BenchmarkConfig {
            n_train: 40,
            n_reps: 2,
            n_test: 60,
            n_trees: 5,
            x4_rates: vec![0.2, 0.6],
            strategies: vec![Strategy::Assignation, Strategy::Median],
            seed: 7,
            ..BenchmarkConfig::default()
        }
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
        }
        let err = "nearest".parse::<Strategy>().unwrap_err();
        let msg = err.to_string();
        for s in Strategy::ALL {
            assert!(msg.contains(s.name()), "{msg} lacks {}", s.name());
        }
    }

    #[test]
    fn mse_vs_truth_hand_values() {
        let test = generate_sample::<f64>(10, 1.0, 5).unwrap();
        let truth = test.truth().unwrap().to_vec();
        let mut i = 0;
        let exact = mse_vs_truth(
            |_| {
                let v = truth[i];
                i += 1;
                Ok(v)
            },
            &test,
        )
        .unwrap();
        assert_eq!(exact, 0.0);
    }

    #[test]
    fn mse_of_constant_predictor() {
        let test = Dataset::from_rows(
            1,
            vec![vec![Some(0.1)], vec![Some(0.9)]],
            vec![0.0, 2.0],
        )
        .unwrap()
        .with_truth(vec![0.0, 2.0])
        .unwrap();
        let v = mse_vs_truth(|_| Ok(1.0), &test).unwrap();
        assert_eq!(v, 1.0);
    }

    #[test]
    fn mse_of_mean_predictor_is_truth_variance() {
        let test = generate_sample::<f64>(500, 1.0, 8).unwrap();
        let truth = test.truth().unwrap();
        let mean = truth.iter().sum::<f64>() / truth.len() as f64;
        let var = truth.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>()
            / truth.len() as f64;
        let v = mse_vs_truth(|_| Ok(mean), &test).unwrap();
        assert!((v - var).abs() < 1e-9);
    }

    #[test]
    fn mse_requires_truth_column() {
        let test = Dataset::from_rows(1, vec![vec![Some(0.5)]], vec![1.0]).unwrap();
        assert!(matches!(
            mse_vs_truth(|_| Ok(0.0), &test),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn default_grid_shape() {
        let cfg = BenchmarkConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.strategies.len(), 8 - 1);
        assert_eq!(cfg.x4_rates.len(), 8);
        assert_eq!(cfg.effective_qn(), 3);
        assert_eq!(cfg.subsample_size(), 127);
    }

    #[test]
    fn unknown_strategy_in_json_config_is_rejected() {
        let parsed: std::result::Result<BenchmarkConfig, _> =
            serde_json::from_str(r#"{"strategies": ["krige"]}"#);
        assert!(parsed.is_err());
    }

    #[test]
    fn benchmark_is_seed_deterministic() {
        let cfg = tiny_config();
        let a: BenchmarkResult<f64> = run_benchmark(&cfg).unwrap();
        let b: BenchmarkResult<f64> = run_benchmark(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rows.len(), 4);
        for row in &a.rows {
            assert_eq!(row.mse_per_rep.len(), 2);
        }
    }

    #[test]
    fn emitted_tables_are_consistent() {
        let cfg = tiny_config();
        let result: BenchmarkResult<f64> = run_benchmark(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        emit(&result, EmitFormat::Csv, &path).unwrap();

        let detail = std::fs::read_to_string(&path).unwrap();
        let detail_rows: Vec<&str> = detail.lines().skip(1).collect();
        assert_eq!(detail_rows.len(), 2 * 2 * 2);

        let summary = std::fs::read_to_string(summary_path(&path)).unwrap();
        for (line, row) in summary.lines().skip(1).zip(&result.rows) {
            let fields: Vec<&str> = line.split(',').collect();
            assert_eq!(fields[0], row.strategy.name());
            let mean: f64 = fields[2].parse().unwrap();
            let recomputed =
                row.mse_per_rep.iter().sum::<f64>() / row.mse_per_rep.len() as f64;
            assert!((mean - recomputed).abs() < 1e-9);
        }

        let json_path = dir.path().join("out.json");
        emit(&result, EmitFormat::Json, &json_path).unwrap();
        let doc: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&json_path).unwrap()).unwrap();
        assert_eq!(doc["detail"].as_array().unwrap().len(), 8);
        assert_eq!(doc["summary"].as_array().unwrap().len(), 4);
    }

    #[test]
    fn empty_result_emits_header_only() {
        let result: BenchmarkResult<f64> = BenchmarkResult { rows: vec![] };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        emit(&result, EmitFormat::Csv, &path).unwrap();
        assert_eq!(
            std::fs::read_to_string(&path).unwrap(),
            "strategy,x4_rate,rep,mse\n"
        );
        assert_eq!(
            std::fs::read_to_string(summary_path(&path)).unwrap(),
            "strategy,x4_rate,mean_mse,stderr\n"
        );
    }
}
