use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use seqdist::data::{self, Dataset, Format, Vocabulary};
use seqdist::diagnostics::{self, WindowSpec};
use seqdist::experiment::{self, ExperimentConfig, ForecastRecord, MetricsFile};
use seqdist::forecast::{self, BaselineKind, Decoder};
use seqdist::metrics::{self, MacroClasses};
use seqdist::micronet::{self, Objective, Optimizer, Preset, TrainConfig};
use seqdist::perturb::{shuffle_dataset, ShuffleSpec};
use seqdist::synth::{self, SynthKind, SynthSpec};
use seqdist::{seed, Error, Result};

#[derive(Parser)]
#[command(name = "seqdist", version, about = "Forecast the distribution of a user's next N events")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Event file (JSONL or CSV)
    #[arg(long)]
    data: PathBuf,
    /// Input format; inferred from the extension when omitted
    #[arg(long)]
    format: Option<Format>,
}

impl DataArgs {
    fn load(&self) -> Result<Dataset> {
        let format = self.format.unwrap_or_else(|| Format::from_path(&self.data));
        data::ingest(&self.data, format)
    }
}

#[derive(Args, Clone, Copy)]
struct SeedArg {
    /// Master seed
    #[arg(long, env = "SEQDIST_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Decay rate, staticity and drift curves of a dataset
    Diagnose {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = diagnostics::DEFAULT_WINDOW)]
        window: usize,
        #[arg(long, default_value_t = diagnostics::DEFAULT_STRIDE)]
        stride: usize,
        #[arg(long, default_value_t = diagnostics::DEFAULT_ANCHORS)]
        anchors: usize,
        /// Next-step model used to report the shuffled/original perplexity ratio
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = data::DEFAULT_HORIZON)]
        horizon: usize,
        #[command(flatten)]
        seed: SeedArg,
        /// Directory for summary.json and drift.csv
        #[arg(long)]
        out: PathBuf,
    },
    /// Locally shuffle every sequence
    Shuffle {
        #[command(flatten)]
        data: DataArgs,
        /// Maximum displacement; -1 shuffles fully
        #[arg(long, allow_negative_numbers = true)]
        w: i64,
        #[command(flatten)]
        seed: SeedArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic dataset
    Synth {
        #[arg(long, value_enum)]
        kind: SynthKindArg,
        #[arg(long, default_value_t = 100)]
        users: usize,
        #[arg(long, default_value_t = 128)]
        length: usize,
        /// Comma-separated category probabilities (exchangeable, drift)
        #[arg(long, value_delimiter = ',', default_value = "0.6,0.3,0.1")]
        probs: Vec<f64>,
        /// Alphabet size (markov, cycle)
        #[arg(long, default_value_t = 6)]
        k: usize,
        /// Dominant-successor probability (markov)
        #[arg(long, default_value_t = 0.9)]
        strength: f64,
        #[command(flatten)]
        seed: SeedArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model and write a checkpoint
    Train {
        #[command(flatten)]
        data: DataArgs,
        /// JSON training config; flags below override it
        #[arg(long, conflicts_with = "preset")]
        config: Option<PathBuf>,
        /// Named size preset used as the base config
        #[arg(long, value_enum)]
        preset: Option<PresetArg>,
        #[arg(long, value_enum)]
        objective: Option<ObjectiveArg>,
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        embed: Option<usize>,
        #[arg(long)]
        hidden: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        band: Option<usize>,
        #[arg(long)]
        adam: bool,
        #[command(flatten)]
        seed: SeedArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Forecast the last N events of every sequence
    Forecast {
        #[command(flatten)]
        data: DataArgs,
        /// Trained model; required unless --baseline is given
        #[arg(long, required_unless_present = "baseline")]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "greedy")]
        decoder: DecoderArg,
        #[arg(long, value_enum, conflicts_with = "checkpoint")]
        baseline: Option<BaselineArg>,
        /// Forecast length for baselines; models use their trained horizon
        #[arg(long, default_value_t = data::DEFAULT_HORIZON)]
        horizon: usize,
        #[command(flatten)]
        seed: SeedArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score stored forecasts against the data
    Evaluate {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, required = true)]
        forecasts: Vec<PathBuf>,
        #[arg(long, default_value_t = data::DEFAULT_HORIZON)]
        horizon: usize,
        /// Average macro F1 over every class instead of the observed ones
        #[arg(long)]
        macro_all: bool,
        /// Also report perplexity of this next-step model
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[command(flatten)]
        seed: SeedArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an experiment grid from a JSON config
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; defaults to the config's output_dir
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the config seed
        #[arg(long, env = "SEQDIST_SEED")]
        seed: Option<u64>,
        /// Replace the config's train section with a named preset
        #[arg(long, value_enum)]
        preset: Option<PresetArg>,
    },
    /// Print a metrics.json as a markdown table
    Report {
        #[arg(long)]
        metrics: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthKindArg {
    Exchangeable,
    Markov,
    Drift,
    Cycle,
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Ntp,
    Target,
    Matched,
    Dist,
    Uniform,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Tiny,
    Small,
    Medium,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Tiny => Preset::Tiny,
            PresetArg::Small => Preset::Small,
            PresetArg::Medium => Preset::Medium,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum DecoderArg {
    Greedy,
    Sample,
    Hamilton,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineArg {
    Gt,
    Mode,
    Repeat,
    Hist,
}

impl From<SynthKindArg> for SynthKind {
    fn from(k: SynthKindArg) -> Self {
        match k {
            SynthKindArg::Exchangeable => SynthKind::Exchangeable,
            SynthKindArg::Markov => SynthKind::Markov,
            SynthKindArg::Drift => SynthKind::Drift,
            SynthKindArg::Cycle => SynthKind::Cycle,
        }
    }
}

impl From<ObjectiveArg> for Objective {
    fn from(o: ObjectiveArg) -> Self {
        match o {
            ObjectiveArg::Ntp => Objective::Ntp,
            ObjectiveArg::Target => Objective::Target,
            ObjectiveArg::Matched => Objective::Matched,
            ObjectiveArg::Dist => Objective::Dist,
            ObjectiveArg::Uniform => Objective::Uniform,
        }
    }
}

impl From<DecoderArg> for Decoder {
    fn from(d: DecoderArg) -> Self {
        match d {
            DecoderArg::Greedy => Decoder::Greedy,
            DecoderArg::Sample => Decoder::Sample,
            DecoderArg::Hamilton => Decoder::Hamilton,
        }
    }
}

impl From<BaselineArg> for BaselineKind {
    fn from(b: BaselineArg) -> Self {
        match b {
            BaselineArg::Gt => BaselineKind::Gt,
            BaselineArg::Mode => BaselineKind::Mode,
            BaselineArg::Repeat => BaselineKind::Repeat,
            BaselineArg::Hist => BaselineKind::Hist,
        }
    }
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Perplexity and shuffle ratio of a next-step checkpoint on `dataset`.
fn checkpoint_perplexity(path: &Path, dataset: &Dataset, horizon: usize, seed: u64) -> Result<(f64, f64)> {
    let (header, params) = micronet::load_checkpoint_file(path)?;
    let data = dataset.remap(&Vocabulary::from_labels(&header.labels))?;
    let (tasks, _) = experiment::tasks_of(&data.sequences, horizon);
    if tasks.is_empty() {
        return Err(Error::Empty("no sequence is longer than the horizon"));
    }
    Ok((
        metrics::perplexity(&params, &tasks)?,
        metrics::ppl_shuffle_ratio(&params, &tasks, seed)?,
    ))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Diagnose {
            data,
            window,
            stride,
            anchors,
            checkpoint,
            horizon,
            seed,
            out,
        } => {
            let dataset = data.load()?;
            let spec = WindowSpec::new(window, stride)?;
            let mut d = experiment::diagnose(&dataset, &spec, anchors, seed.seed)?;
            if let Some(ck) = checkpoint {
                d.summary.ppl_ratio = Some(checkpoint_perplexity(&ck, &dataset, horizon, seed.seed)?.1);
            }
            let d = experiment::write_diagnosis(&d, &out)?;
            println!("{}", serde_json::to_string_pretty(&d.summary)?);
        }
        Command::Shuffle { data, w, seed, out } => {
            let dataset = data.load()?;
            let shuffled = shuffle_dataset(&dataset, &ShuffleSpec::new(w, seed.seed)?)?;
            data::save(&shuffled, &out, Format::from_path(&out))?;
        }
        Command::Synth {
            kind,
            users,
            length,
            probs,
            k,
            strength,
            seed,
            out,
        } => {
            let spec = SynthSpec {
                kind: kind.into(),
                users,
                length,
                probs,
                k,
                strength,
            };
            data::save(&synth::generate(&spec, seed.seed)?, &out, Format::from_path(&out))?;
        }
        Command::Train {
            data,
            config,
            preset,
            objective,
            horizon,
            epochs,
            lr,
            embed,
            hidden,
            batch_size,
            band,
            adam,
            seed,
            out,
        } => {
            let mut cfg = match config {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
                    serde_json::from_str::<TrainConfig>(&text)?
                }
                None => TrainConfig::preset(preset.map_or(Preset::Small, Into::into)),
            };
            cfg.seed = seed.seed;
            cfg.objective = objective.map_or(cfg.objective, Into::into);
            cfg.horizon = horizon.unwrap_or(cfg.horizon);
            cfg.epochs = epochs.unwrap_or(cfg.epochs);
            cfg.lr = lr.unwrap_or(cfg.lr);
            cfg.embed = embed.unwrap_or(cfg.embed);
            cfg.hidden = hidden.unwrap_or(cfg.hidden);
            cfg.batch_size = batch_size.unwrap_or(cfg.batch_size);
            cfg.band = band.unwrap_or(cfg.band);
            if adam {
                cfg.optimizer = Optimizer::adam();
            }
            let dataset = data.load()?;
            let vocab = experiment::training_vocabulary(&dataset);
            let train = dataset.remap(&vocab)?;
            let outcome = micronet::train(&train, vocab.len(), &cfg)?;
            let labels = vocab.labels().map(str::to_string).collect();
            micronet::save_checkpoint_file(&out, &outcome.params, &cfg, labels)?;
            eprintln!(
                "trained {} on {} examples, final loss {:.6}",
                cfg.objective,
                outcome.examples,
                outcome.epoch_losses.last().copied().unwrap_or(f64::NAN)
            );
        }
        Command::Forecast {
            data,
            checkpoint,
            decoder,
            baseline,
            horizon,
            seed,
            out,
        } => {
            let dataset = data.load()?;
            let mut records = Vec::new();
            if let Some(kind) = baseline {
                let kind: BaselineKind = kind.into();
                let (tasks, _) = experiment::tasks_of(&dataset.sequences, horizon);
                for t in &tasks {
                    let f = forecast::baseline_forecast(kind, t, seed::derive(seed.seed, &[t.user_id]))?;
                    records.push(record(t.user_id, f, &dataset.vocab)?);
                }
            } else {
                let path = checkpoint.expect("clap enforces a checkpoint without --baseline");
                let (header, params) = micronet::load_checkpoint_file(&path)?;
                let vocab = Vocabulary::from_labels(&header.labels);
                let remapped = dataset.remap(&vocab)?;
                let n = header.config.horizon;
                let (tasks, _) = experiment::tasks_of(&remapped.sequences, n);
                for t in &tasks {
                    let f = forecast::model_forecast(
                        &params,
                        header.config.objective,
                        decoder.into(),
                        &t.prefix_categories(),
                        n,
                        seed::derive(seed.seed, &[t.user_id]),
                    )?;
                    records.push(record(t.user_id, f, &vocab)?);
                }
            }
            if records.is_empty() {
                return Err(Error::Empty("no sequence is longer than the horizon"));
            }
            experiment::write_forecasts(&out, &records)?;
        }
        Command::Evaluate {
            data,
            forecasts,
            horizon,
            macro_all,
            checkpoint,
            seed,
            out,
        } => {
            let dataset = data.load()?;
            let mut records = Vec::new();
            for p in &forecasts {
                records.extend(experiment::read_forecasts(p)?);
            }
            let classes = if macro_all { MacroClasses::All } else { MacroClasses::Observed };
            let reports = experiment::evaluate_forecasts(&dataset, &records, horizon, classes)?;
            let mut value = serde_json::to_value(&reports)?;
            if let Some(ck) = checkpoint {
                let (ppl, ratio) = checkpoint_perplexity(&ck, &dataset, horizon, seed.seed)?;
                value["model"] = serde_json::json!({ "perplexity": ppl, "ppl_shuffle_ratio": ratio });
            }
            match out {
                Some(p) => write_json(&p, &value)?,
                None => println!("{}", serde_json::to_string_pretty(&value)?),
            }
        }
        Command::Run { config, out, seed, preset } => {
            let mut cfg = ExperimentConfig::from_file(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(p) = preset {
                cfg.train = TrainConfig::preset(p.into());
            }
            let dir = out
                .or_else(|| cfg.output_dir.clone())
                .ok_or_else(|| Error::Config("no output directory: pass --out or set output_dir".into()))?;
            let result = experiment::cmd_run(&cfg, &dir)?;
            print!("{}", experiment::report(&result.metrics));
        }
        Command::Report { metrics } => {
            let text = std::fs::read_to_string(&metrics).map_err(|e| Error::io(&metrics, e))?;
            let m: MetricsFile = serde_json::from_str(&text)?;
            print!("{}", experiment::report(&m));
        }
    }
    Ok(())
}

fn record(user: &str, f: forecast::Forecast, vocab: &Vocabulary) -> Result<ForecastRecord> {
    let tokens = f
        .tokens
        .iter()
        .map(|&i| {
            vocab
                .label(i)
                .map(str::to_string)
                .ok_or(Error::CategoryOutOfRange { index: i, size: vocab.len() })
        })
        .collect::<Result<_>>()?;
    Ok(ForecastRecord {
        user_id: user.to_string(),
        method: f.method,
        tokens,
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 2 } else { 1 })
        }
    }
}
