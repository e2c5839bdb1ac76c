//! Experiment grid runner and the diagnose pipeline behind the CLI.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{self, split_prefix_horizon, Dataset, EventSequence, ForecastTask, Format, Vocabulary};
use crate::diagnostics::{self, DatasetSummary, WindowSpec};
use crate::error::{Error, Result};
use crate::forecast::{self, BaselineKind, Decoder};
use crate::metrics::{self, EvalReport, MacroClasses};
use crate::micronet::{self, ModelParameters, Objective, TrainConfig};
use crate::perturb::{shuffle_dataset, ShuffleSpec};
use crate::seed;
use crate::synth::{self, SynthSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSource {
    pub path: PathBuf,
    #[serde(default)]
    pub format: Option<Format>,
}

impl DataSource {
    pub fn load(&self) -> Result<Dataset> {
        let format = self.format.unwrap_or_else(|| Format::from_path(&self.path));
        data::ingest(&self.path, format)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Event file to load; exactly one of `data` and `synth` must be set.
    pub data: Option<DataSource>,
    pub synth: Option<SynthSpec>,
    pub horizon: usize,
    /// Share of users held out for evaluation.
    pub test_fraction: f64,
    /// Local-shuffle widths applied to the training split (`-1` = full).
    pub shuffle_w: Vec<i64>,
    /// Also shuffle the evaluation split with the same width.
    pub shuffle_eval: bool,
    pub objectives: Vec<Objective>,
    pub decoders: Vec<Decoder>,
    pub baselines: Vec<BaselineKind>,
    /// Model and optimiser settings; `seed`, `objective` and `horizon` are
    /// set per cell.
    pub train: TrainConfig,
    pub macro_classes: MacroClasses,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            data: None,
            synth: None,
            horizon: data::DEFAULT_HORIZON,
            test_fraction: 0.2,
            shuffle_w: vec![0],
            shuffle_eval: false,
            objectives: vec![Objective::Ntp, Objective::Dist],
            decoders: vec![Decoder::Greedy, Decoder::Hamilton],
            baselines: BaselineKind::ALL.to_vec(),
            train: TrainConfig::default(),
            macro_classes: MacroClasses::Observed,
            seed: 0,
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.is_some() == self.synth.is_some() {
            return Err(Error::Config("set exactly one of `data` and `synth`".into()));
        }
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be positive".into()));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Config(format!("test_fraction must be in (0, 1), got {}", self.test_fraction)));
        }
        if let Some(w) = self.shuffle_w.iter().find(|&&w| w < ShuffleSpec::FULL) {
            return Err(Error::Config(format!("shuffle width {w} is below -1")));
        }
        self.train.validate()
    }

    /// SHA-256 of the canonical JSON form of the config.
    pub fn hash(&self) -> String {
        seed::hex_digest(&serde_json::to_vec(self).expect("config serialises"))
    }

    pub fn load_dataset(&self) -> Result<Dataset> {
        match (&self.data, &self.synth) {
            (Some(src), None) => src.load(),
            (None, Some(spec)) => synth::generate(spec, seed::derive(self.seed, &["synth"])),
            _ => Err(Error::Config("set exactly one of `data` and `synth`".into())),
        }
    }
}

/// User-level split: users are ranked by a seeded hash of their id and the
/// first `round(n * test_fraction)` go to the test side.
pub fn split_users(dataset: &Dataset, test_fraction: f64, seed: u64) -> (Dataset, Dataset) {
    let mut order: Vec<(u64, usize)> = dataset
        .sequences
        .iter()
        .enumerate()
        .map(|(i, s)| (seed::derive(seed, &["split", &s.user_id]), i))
        .collect();
    order.sort_unstable();
    let n_test = (dataset.sequences.len() as f64 * test_fraction).round() as usize;
    let mut is_test = vec![false; dataset.sequences.len()];
    for &(_, i) in order.iter().take(n_test) {
        is_test[i] = true;
    }
    let pick = |want: bool| Dataset {
        sequences: dataset
            .sequences
            .iter()
            .zip(&is_test)
            .filter(|(_, &t)| t == want)
            .map(|(s, _)| s.clone())
            .collect(),
        ..dataset.clone()
    };
    (pick(false), pick(true))
}

/// Labels seen in `train` (in the original vocabulary order) plus the
/// unknown slot.
pub fn training_vocabulary(train: &Dataset) -> Vocabulary {
    let mut seen = vec![false; train.num_categories()];
    for s in &train.sequences {
        for e in &s.events {
            seen[e.category] = true;
        }
    }
    Vocabulary::from_labels(train.vocab.labels().zip(&seen).filter(|(_, &s)| s).map(|(l, _)| l)).with_unk()
}

/// Train and test splits re-indexed on the training vocabulary.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub train: Dataset,
    pub test: Dataset,
}

pub fn prepare(dataset: &Dataset, test_fraction: f64, seed: u64) -> Result<Prepared> {
    let (train, test) = split_users(dataset, test_fraction, seed);
    if train.is_empty() || test.is_empty() {
        return Err(Error::Empty("train/test split left one side without users"));
    }
    let vocab = training_vocabulary(&train);
    Ok(Prepared {
        train: train.remap(&vocab)?,
        test: test.remap(&vocab)?,
    })
}

/// Last-N tasks of every sequence long enough, plus the number skipped.
pub fn tasks_of(sequences: &[EventSequence], horizon: usize) -> (Vec<ForecastTask<'_>>, usize) {
    let tasks: Vec<_> = sequences.iter().filter_map(|s| split_prefix_horizon(s, horizon).ok()).collect();
    let skipped = sequences.len() - tasks.len();
    (tasks, skipped)
}

fn report_metrics(r: &EvalReport) -> BTreeMap<String, f64> {
    BTreeMap::from([
        ("f1_micro".to_string(), r.f1_micro),
        ("f1_macro".to_string(), r.f1_macro),
        ("f1_micro_per_sequence".to_string(), r.f1_micro_per_sequence),
        ("cardinality".to_string(), r.cardinality),
        ("cardinality_overall".to_string(), r.cardinality_overall as f64),
        ("gt_cardinality".to_string(), r.gt_cardinality),
        ("levenshtein".to_string(), r.levenshtein),
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub key: String,
    pub method: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w: Option<i64>,
    pub seed: u64,
    pub status: CellStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub config_hash: String,
    pub seed: u64,
    /// Cell key to metric name to value.
    pub results: BTreeMap<String, BTreeMap<String, f64>>,
    pub failures: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataStats {
    pub users: usize,
    pub train_users: usize,
    pub test_users: usize,
    pub tasks: usize,
    pub skipped_short: usize,
    pub resorted: usize,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub data: DataStats,
    pub cells: Vec<CellRecord>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: MetricsFile,
    pub manifest: Manifest,
}

struct Grid<'a> {
    cfg: &'a ExperimentConfig,
    metrics: MetricsFile,
    cells: Vec<CellRecord>,
}

impl Grid<'_> {
    fn record(&mut self, key: String, method: String, w: Option<i64>, seed: u64, outcome: Result<BTreeMap<String, f64>>) {
        let (status, error) = match outcome {
            Ok(m) => {
                self.metrics.results.insert(key.clone(), m);
                (CellStatus::Ok, None)
            }
            Err(e) => {
                self.metrics.failures.insert(key.clone(), e.to_string());
                (CellStatus::Failed, Some(e.to_string()))
            }
        };
        self.cells.push(CellRecord {
            key,
            method,
            w,
            seed,
            status,
            error,
        });
    }

    fn evaluate<F>(&self, tasks: &[ForecastTask<'_>], k: usize, mut forecast: F) -> Result<EvalReport>
    where
        F: FnMut(&ForecastTask<'_>) -> Result<Vec<usize>>,
    {
        let gt: Vec<Vec<usize>> = tasks.iter().map(ForecastTask::horizon_categories).collect();
        let pred: Vec<Vec<usize>> = tasks.iter().map(&mut forecast).collect::<Result<_>>()?;
        metrics::evaluate(&gt, &pred, k, self.cfg.macro_classes)
    }

    fn baselines(&mut self, tasks: &[ForecastTask<'_>], k: usize, w: Option<i64>, prefix: &str) {
        for &kind in &self.cfg.baselines {
            let key = format!("{prefix}baseline/{}", kind.name());
            let cell_seed = seed::derive(self.cfg.seed, &[&key]);
            let out = self
                .evaluate(tasks, k, |t| {
                    Ok(forecast::baseline_forecast(kind, t, seed::derive(cell_seed, &[t.user_id]))?.tokens)
                })
                .map(|r| report_metrics(&r));
            self.record(key, format!("baseline/{}", kind.name()), w, cell_seed, out);
        }
    }

    fn model_cells(&mut self, train: &Dataset, tasks: &[ForecastTask<'_>], k: usize, w: i64, objective: Objective) {
        let prefix = format!("w={w}/{}", objective.name());
        let train_seed = seed::derive(self.cfg.seed, &["train", &prefix]);
        let tc = TrainConfig {
            seed: train_seed,
            objective,
            horizon: self.cfg.horizon,
            ..self.cfg.train.clone()
        };
        let trained = micronet::train(train, k, &tc);
        for &decoder in &self.cfg.decoders {
            let key = format!("{prefix}/{}", decoder.name());
            let method = format!("{}/{}", objective.name(), decoder.name());
            let cell_seed = seed::derive(self.cfg.seed, &[&key]);
            let out = match &trained {
                Err(e) => Err(Error::Config(format!("training failed: {e}"))),
                Ok(t) => self.model_metrics(&t.params, objective, decoder, tasks, k, cell_seed).map(|mut m| {
                    if let Some(&l) = t.epoch_losses.last() {
                        m.insert("train_loss".into(), l);
                    }
                    m
                }),
            };
            self.record(key, method, Some(w), cell_seed, out);
        }
    }

    fn model_metrics(
        &self,
        params: &ModelParameters,
        objective: Objective,
        decoder: Decoder,
        tasks: &[ForecastTask<'_>],
        k: usize,
        cell_seed: u64,
    ) -> Result<BTreeMap<String, f64>> {
        let n = self.cfg.horizon;
        let r = self.evaluate(tasks, k, |t| {
            let prefix = t.prefix_categories();
            Ok(forecast::model_forecast(params, objective, decoder, &prefix, n, seed::derive(cell_seed, &[t.user_id]))?.tokens)
        })?;
        let mut m = report_metrics(&r);
        if objective == Objective::Ntp {
            m.insert("perplexity".into(), metrics::perplexity(params, tasks)?);
            m.insert("ppl_shuffle_ratio".into(), metrics::ppl_shuffle_ratio(params, tasks, cell_seed)?);
        }
        Ok(m)
    }
}

/// Runs the full grid without touching the filesystem beyond loading data.
pub fn run_grid(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let dataset = cfg.load_dataset()?;
    let prep = prepare(&dataset, cfg.test_fraction, cfg.seed)?;
    let k = prep.train.num_categories();
    let (tasks, skipped) = tasks_of(&prep.test.sequences, cfg.horizon);
    if tasks.is_empty() {
        return Err(Error::TooShort {
            len: prep.test.sequences.iter().map(EventSequence::len).max().unwrap_or(0),
            horizon: cfg.horizon,
        });
    }
    let config_hash = cfg.hash();
    let mut grid = Grid {
        cfg,
        metrics: MetricsFile {
            config_hash: config_hash.clone(),
            seed: cfg.seed,
            results: BTreeMap::new(),
            failures: BTreeMap::new(),
        },
        cells: Vec::new(),
    };

    if !cfg.shuffle_eval {
        grid.baselines(&tasks, k, None, "");
    }
    for &w in &cfg.shuffle_w {
        let spec = ShuffleSpec::new(w, seed::derive(cfg.seed, &["shuffle", &w.to_string()]))?;
        let train = shuffle_dataset(&prep.train, &spec)?;
        let shuffled_test;
        let eval_tasks = if cfg.shuffle_eval {
            shuffled_test = shuffle_dataset(&prep.test, &spec)?;
            let (t, _) = tasks_of(&shuffled_test.sequences, cfg.horizon);
            grid.baselines(&t, k, Some(w), &format!("w={w}/"));
            t
        } else {
            tasks.clone()
        };
        for &objective in &cfg.objectives {
            grid.model_cells(&train, &eval_tasks, k, w, objective);
        }
    }

    let manifest = Manifest {
        tool: "seqdist".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_hash,
        seed: cfg.seed,
        config: cfg.clone(),
        data: DataStats {
            users: dataset.sequences.len(),
            train_users: prep.train.sequences.len(),
            test_users: prep.test.sequences.len(),
            tasks: tasks.len(),
            skipped_short: skipped,
            resorted: dataset.resorted,
            k,
        },
        cells: grid.cells,
    };
    Ok(RunOutput {
        metrics: grid.metrics,
        manifest,
    })
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value)?;
    v.push(b'\n');
    Ok(v)
}

/// Long-format CSV: one row per (cell, metric).
pub fn metrics_csv(m: &MetricsFile) -> String {
    let mut out = String::from("cell,metric,value\n");
    for (cell, metrics) in &m.results {
        for (name, v) in metrics {
            let _ = writeln!(out, "{cell},{name},{v}");
        }
    }
    out
}

/// Runs the grid and writes `metrics.json`, `metrics.csv` and
/// `manifest.json` into `out_dir`.
pub fn cmd_run(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunOutput> {
    let out = run_grid(cfg)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write_file(&out_dir.join("metrics.json"), &json_bytes(&out.metrics)?)?;
    write_file(&out_dir.join("metrics.csv"), metrics_csv(&out.metrics).as_bytes())?;
    write_file(&out_dir.join("manifest.json"), &json_bytes(&out.manifest)?)?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftRow {
    pub user_id: String,
    pub window_index: usize,
    pub shape: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnosis {
    pub summary: DatasetSummary,
    pub drift: Vec<DriftRow>,
}

pub fn diagnose(dataset: &Dataset, spec: &WindowSpec, anchors: usize, seed: u64) -> Result<Diagnosis> {
    let summary = diagnostics::dataset_summary(dataset, spec, anchors, seed)?;
    let kinds = diagnostics::feature_kinds(dataset);
    let mut drift = Vec::new();
    for s in &dataset.sequences {
        if spec.count(s.len()) == 0 {
            continue;
        }
        let curve = diagnostics::drift_curve(s, spec, &kinds)?;
        drift.extend(curve.values.iter().enumerate().map(|(i, &shape)| DriftRow {
            user_id: s.user_id.clone(),
            window_index: i,
            shape,
        }));
    }
    Ok(Diagnosis { summary, drift })
}

/// Writes `summary.json` and `drift.csv` into `out_dir`.
pub fn write_diagnosis<'d>(d: &'d Diagnosis, out_dir: &Path) -> Result<&'d Diagnosis> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write_file(&out_dir.join("summary.json"), &json_bytes(&d.summary)?)?;
    let path = out_dir.join("drift.csv");
    let csv_err = |e: csv::Error| Error::io(&path, std::io::Error::other(e));
    let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
    for row in &d.drift {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(d)
}

pub fn cmd_diagnose(dataset: &Dataset, spec: &WindowSpec, anchors: usize, seed: u64, out_dir: &Path) -> Result<Diagnosis> {
    let d = diagnose(dataset, spec, anchors, seed)?;
    write_diagnosis(&d, out_dir)?;
    Ok(d)
}

/// One forecast as stored on disk, with tokens written as labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRecord {
    pub user_id: String,
    pub method: String,
    pub tokens: Vec<String>,
}

pub fn write_forecasts(path: &Path, records: &[ForecastRecord]) -> Result<()> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.push(b'\n');
    }
    write_file(path, &out)
}

pub fn read_forecasts(path: &Path) -> Result<Vec<ForecastRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                line: i + 1,
                msg: e.to_string(),
            })
        })
        .collect()
}

/// Scores stored forecasts against the last `horizon` events of each
/// sequence, per method. Labels the dataset has never seen count as extra
/// classes. Every task needs a forecast from every method.
pub fn evaluate_forecasts(
    dataset: &Dataset,
    records: &[ForecastRecord],
    horizon: usize,
    classes: MacroClasses,
) -> Result<BTreeMap<String, EvalReport>> {
    let (tasks, _) = tasks_of(&dataset.sequences, horizon);
    if tasks.is_empty() {
        return Err(Error::Empty("no sequence is longer than the horizon"));
    }
    let mut vocab = dataset.vocab.clone();
    let mut by_method: BTreeMap<&str, BTreeMap<&str, Vec<usize>>> = BTreeMap::new();
    for r in records {
        let tokens = r.tokens.iter().map(|l| vocab.intern(l)).collect();
        by_method.entry(&r.method).or_default().insert(&r.user_id, tokens);
    }
    let gt: Vec<Vec<usize>> = tasks.iter().map(ForecastTask::horizon_categories).collect();
    let mut out = BTreeMap::new();
    for (method, preds) in by_method {
        let pred: Vec<Vec<usize>> = tasks
            .iter()
            .map(|t| {
                preds
                    .get(t.user_id)
                    .cloned()
                    .ok_or_else(|| Error::Config(format!("method {method} has no forecast for user {}", t.user_id)))
            })
            .collect::<Result<_>>()?;
        out.insert(method.to_string(), metrics::evaluate(&gt, &pred, vocab.len(), classes)?);
    }
    Ok(out)
}

const REPORT_COLUMNS: [&str; 6] = ["f1_micro", "f1_macro", "cardinality", "levenshtein", "perplexity", "ppl_shuffle_ratio"];

/// Markdown table of the headline metrics, one row per cell.
pub fn report(m: &MetricsFile) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "| cell | {} |", REPORT_COLUMNS.join(" | "));
    let _ = writeln!(out, "|---|{}", "---:|".repeat(REPORT_COLUMNS.len()));
    for (cell, metrics) in &m.results {
        let vals: Vec<String> = REPORT_COLUMNS
            .iter()
            .map(|c| metrics.get(*c).map_or_else(|| "-".to_string(), |v| format!("{v:.4}")))
            .collect();
        let _ = writeln!(out, "| {cell} | {} |", vals.join(" | "));
    }
    for (cell, err) in &m.failures {
        let _ = writeln!(out, "| {cell} | failed: {err} |");
    }
    out
}
