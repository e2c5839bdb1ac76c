use seqdist::data::split_prefix_horizon;
use seqdist::diagnostics::{dataset_summary, staticity_dataset, WindowSpec, DEFAULT_ANCHORS};
use seqdist::experiment::{self, run_grid, CellStatus, ExperimentConfig};
use seqdist::forecast::{self, BaselineKind, Decoder};
use seqdist::metrics;
use seqdist::micronet::{self, Objective, TrainConfig};
use seqdist::synth::{self, SynthKind, SynthSpec};

fn synth(kind: SynthKind, users: usize, length: usize, seed: u64) -> seqdist::data::Dataset {
    synth::generate(&SynthSpec { kind, users, length, ..SynthSpec::default() }, seed).unwrap()
}

#[test]
fn exchangeable_data_is_static_and_drift_is_not() {
    let win = WindowSpec::default();
    let ex = staticity_dataset(&synth(SynthKind::Exchangeable, 200, 160, 4), &win, DEFAULT_ANCHORS, 4).unwrap();
    let dr = staticity_dataset(&synth(SynthKind::Drift, 200, 160, 4), &win, DEFAULT_ANCHORS, 4).unwrap();
    assert!(ex.index > 0.9, "{}", ex.index);
    assert!(dr.index < ex.index);
}

#[test]
fn constant_windows_give_full_staticity() {
    // a cycle of length 4 fills every 64-event window identically
    let d = synth::generate(
        &SynthSpec {
            kind: SynthKind::Cycle,
            users: 20,
            length: 192,
            k: 4,
            ..SynthSpec::default()
        },
        0,
    )
    .unwrap();
    let s = dataset_summary(&d, &WindowSpec::default(), DEFAULT_ANCHORS, 0).unwrap();
    assert!(s.staticity > 0.95);
    assert_eq!(s.staticity, 1.0);
    assert_eq!(s.lambda, 0.0);
}

#[test]
fn greedy_next_token_decoding_repeats_the_mode() {
    let prep = experiment::prepare(&synth(SynthKind::Exchangeable, 200, 96, 3), 0.2, 3).unwrap();
    let k = prep.train.num_categories();
    let cfg = TrainConfig {
        horizon: 16,
        seed: 3,
        ..TrainConfig::default()
    };
    let out = micronet::train(&prep.train, k, &cfg).unwrap();
    assert!(out.epoch_losses.last().unwrap() < &out.epoch_losses[0]);
    let mode = prep.train.vocab.index("c0").unwrap();
    for s in &prep.test.sequences {
        let t = split_prefix_horizon(s, 16).unwrap();
        let f = forecast::model_forecast(&out.params, Objective::Ntp, Decoder::Greedy, &t.prefix_categories(), 16, 0).unwrap();
        assert_eq!(f.tokens, vec![mode; 16]);
    }
}

#[test]
fn cycle_order_is_fully_informative() {
    let prep = experiment::prepare(&synth(SynthKind::Cycle, 200, 128, 5), 0.2, 5).unwrap();
    let cfg = TrainConfig {
        horizon: 16,
        cut_stride: Some(8),
        seed: 5,
        ..TrainConfig::default()
    };
    let out = micronet::train(&prep.train, prep.train.num_categories(), &cfg).unwrap();
    let tasks: Vec<_> = prep.test.sequences.iter().map(|s| split_prefix_horizon(s, 16).unwrap()).collect();
    let ratio = metrics::ppl_shuffle_ratio(&out.params, &tasks, 5).unwrap();
    assert!(ratio > 2.0, "{ratio}");
}

fn small_grid() -> ExperimentConfig {
    ExperimentConfig {
        synth: Some(SynthSpec {
            kind: SynthKind::Markov,
            users: 20,
            length: 24,
            k: 4,
            ..SynthSpec::default()
        }),
        horizon: 4,
        shuffle_w: vec![0, -1],
        objectives: vec![Objective::Target, Objective::Dist],
        decoders: vec![Decoder::Greedy],
        baselines: vec![],
        train: TrainConfig {
            embed: 4,
            hidden: 4,
            epochs: 1,
            ..TrainConfig::default()
        },
        seed: 2,
        ..ExperimentConfig::default()
    }
}

#[test]
fn two_objectives_by_two_widths_make_four_cells() {
    let out = run_grid(&small_grid()).unwrap();
    assert_eq!(out.manifest.cells.len(), 4);
    assert!(out.manifest.cells.iter().all(|c| c.status == CellStatus::Ok));
    assert_eq!(out.metrics.config_hash, out.manifest.config_hash);
}

#[test]
fn baseline_only_runs_need_no_training() {
    let cfg = ExperimentConfig {
        objectives: vec![],
        baselines: vec![BaselineKind::Gt, BaselineKind::Hist],
        // a training config that would fail validation if it were used
        train: TrainConfig {
            lr: 1e300,
            clip_norm: None,
            ..TrainConfig::default()
        },
        ..small_grid()
    };
    let out = run_grid(&cfg).unwrap();
    assert_eq!(out.metrics.results.len(), 2);
    assert!(out.metrics.failures.is_empty());
}

#[test]
fn rerun_writes_identical_files() {
    let cfg = small_grid();
    let dir = tempfile::tempdir().unwrap();
    experiment::cmd_run(&cfg, &dir.path().join("a")).unwrap();
    experiment::cmd_run(&cfg, &dir.path().join("b")).unwrap();
    for f in ["metrics.json", "metrics.csv", "manifest.json"] {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        assert_eq!(a, std::fs::read(dir.path().join("b").join(f)).unwrap(), "{f}");
    }
    let text = std::fs::read_to_string(dir.path().join("a/metrics.json")).unwrap();
    assert!(text.contains(&cfg.hash()));
    assert!(text.contains("\"seed\": 2"));
}
