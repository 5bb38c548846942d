//! Command implementations behind the `bench` binary.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use diffx_core::backend::{
    AlignmentScorer, CachedScorer, GenerationBackend, MockBackend, MockScorer, RemoteBackend,
    DEFAULT_TIMEOUT,
};
use diffx_core::embedding::Encoders;
use diffx_core::labeling::{build_label_dataset, read_labels, LabelingSettings};
use diffx_core::netsim::{aggregate, NetworkConfig};
use diffx_core::pipeline::{Pipeline, PipelineConfig, Predictors, SimulatedCosts, Timing};
use diffx_core::predictor::{
    cloud_architecture, edge_architecture, load_weights, save_weights, tier_example, train,
    MlpParams, TrainingConfig, TrainingExample,
};
use diffx_core::replay::{
    gen_dataset, read_dataset, replay, session_pairs, synthetic_pairs, write_jsonl, Scenario,
};
use diffx_core::scheduler::DEFAULT_T_MAX;
use diffx_core::{CandidateSet, Error, Result, Strength, Tier};

#[derive(Debug, Parser)]
#[command(name = "bench", version, about = "Replay, labeling and training tools")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Replay a session dataset under one or all scenarios and write a report.
    Replay(ReplayArgs),
    /// Generate synthetic interactive sessions.
    GenDataset(GenDatasetArgs),
    /// Generate synthetic prompt-edit pairs for labeling.
    GenPairs(GenPairsArgs),
    /// Label prompt pairs by exhaustive strength search.
    Label(LabelArgs),
    /// Train a strength predictor from a labels file.
    Train(TrainArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScenarioArg {
    CloudOnly,
    EdgeOnly,
    Diffusionx,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PredictorArg {
    On,
    Off,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TierArg {
    Edge,
    Cloud,
}

impl From<TierArg> for Tier {
    fn from(t: TierArg) -> Tier {
        match t {
            TierArg::Edge => Tier::Edge,
            TierArg::Cloud => Tier::Cloud,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct BackendArgs {
    /// `mock` or a model server base URL.
    #[arg(long, default_value = "mock")]
    pub edge_backend: String,
    #[arg(long, default_value = "mock")]
    pub cloud_backend: String,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, value_enum, default_value = "all")]
    pub scenario: ScenarioArg,
    #[arg(long, value_enum, default_value = "on")]
    pub predictor: PredictorArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSON report path; the text table goes to stdout.
    #[arg(long)]
    pub report: PathBuf,
    /// Per-session JSON Lines log; defaults to `<report>.sessions.jsonl`.
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long)]
    pub edge_weights: Option<PathBuf>,
    #[arg(long)]
    pub cloud_weights: Option<PathBuf>,
    /// Strength used when the predictor is off.
    #[arg(long, default_value_t = 0.90)]
    pub fixed_strength: f64,
    /// Row the delta column is measured against (default: cloud-only when present).
    #[arg(long)]
    pub baseline: Option<String>,
    #[arg(long, default_value_t = 25)]
    pub base_steps_edge: u32,
    #[arg(long, default_value_t = 25)]
    pub base_steps_cloud: u32,
    #[arg(long, default_value_t = diffx_core::netsim::DEFAULT_BPS)]
    pub uplink_bps: f64,
    #[command(flatten)]
    pub backends: BackendArgs,
}

#[derive(Debug, Args)]
pub struct GenDatasetArgs {
    #[arg(long, default_value_t = 400)]
    pub sessions: usize,
    #[arg(long, default_value_t = 3)]
    pub rounds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the consecutive-round prompt pairs here.
    #[arg(long)]
    pub pairs: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenPairsArgs {
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct LabelArgs {
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Strength penalty of the mock alignment scorer.
    #[arg(long, default_value_t = diffx_core::backend::DEFAULT_BETA)]
    pub beta: f64,
    /// Precomputed scores (`{"image","prompt","score"}` lines); required for remote backends.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    #[arg(long, default_value = "mock")]
    pub backend: String,
    #[arg(long, default_value_t = 25)]
    pub base_steps: u32,
    #[arg(long, default_value_t = DEFAULT_T_MAX)]
    pub t_max: u32,
    /// Continue an interrupted run instead of starting over.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long, value_enum)]
    pub tier: TierArg,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Shuffle seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Weight initialization seed.
    #[arg(long, default_value_t = 0)]
    pub init_seed: u64,
    /// Seed the labels were generated with (cloud features re-render the draft).
    #[arg(long, default_value_t = 0)]
    pub label_seed: u64,
    #[arg(long, default_value_t = 25)]
    pub base_steps: u32,
    /// Fraction of pairs (taken from the end) held out for evaluation.
    #[arg(long, default_value_t = 0.0)]
    pub holdout: f64,
    #[arg(long, default_value = "mock")]
    pub backend: String,
}

/// Process exit code for an error: 2 parse, 3 backend, 4 config or I/O, 1 otherwise.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Parse { .. } | Error::Json(_) => 2,
        e if e.is_backend() => 3,
        Error::InvalidConfig(_)
        | Error::Io(_)
        | Error::FormatVersionMismatch(_)
        | Error::ShapeMismatch(_)
        | Error::ChecksumMismatch
        | Error::InvalidStrength
        | Error::EmptyScenario(_) => 4,
        _ => 1,
    }
}

/// Missing inputs are reported with their path rather than a bare OS error.
fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("{}: no such file", path.display()),
        )))
    }
}

fn make_backend(selector: &str, tier: Tier) -> Arc<dyn GenerationBackend> {
    match (selector, tier) {
        ("mock", Tier::Edge) => Arc::new(MockBackend::edge()),
        ("mock", Tier::Cloud) => Arc::new(MockBackend::cloud()),
        (url, _) => Arc::new(RemoteBackend::new(url, DEFAULT_TIMEOUT)),
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Replay(a) => cmd_replay(&a),
        Command::GenDataset(a) => {
            let sessions = gen_dataset(a.sessions, a.rounds, a.seed)?;
            write_jsonl(&a.out, &sessions)?;
            if let Some(p) = &a.pairs {
                write_jsonl(p, &session_pairs(&sessions))?;
            }
            Ok(())
        }
        Command::GenPairs(a) => write_jsonl(&a.out, &synthetic_pairs(a.n, a.seed)),
        Command::Label(a) => cmd_label(&a),
        Command::Train(a) => cmd_train(&a),
    }
}

fn cmd_replay(a: &ReplayArgs) -> Result<()> {
    require(&a.dataset)?;
    let sessions = read_dataset(&a.dataset)?;
    let scenarios: Vec<Scenario> = match a.scenario {
        ScenarioArg::CloudOnly => vec![Scenario::CloudOnly],
        ScenarioArg::EdgeOnly => vec![Scenario::EdgeOnly],
        ScenarioArg::Diffusionx => vec![Scenario::DiffusionX],
        ScenarioArg::All => Scenario::ALL.to_vec(),
    };
    let settings: Vec<bool> = match a.predictor {
        PredictorArg::On => vec![true],
        PredictorArg::Off => vec![false],
        PredictorArg::Both => vec![true, false],
    };
    let predictors = match (&a.edge_weights, &a.cloud_weights) {
        (Some(e), Some(c)) => Some(Predictors {
            edge: require(e).and_then(|_| load_weights(e))?,
            cloud: require(c).and_then(|_| load_weights(c))?,
        }),
        (None, None) => None,
        _ => {
            return Err(Error::InvalidConfig(
                "--edge-weights and --cloud-weights go together".into(),
            ))
        }
    };
    let edge = make_backend(&a.backends.edge_backend, Tier::Edge);
    let cloud = make_backend(&a.backends.cloud_backend, Tier::Cloud);
    let log_path = a
        .log
        .clone()
        .unwrap_or_else(|| a.report.with_extension("sessions.jsonl"));
    let mut log = BufWriter::new(File::create(&log_path)?);
    let mut summaries = Vec::new();
    let mut seen = Vec::new();
    for &scenario in &scenarios {
        for &enabled in &settings {
            let tag = scenario.tag(enabled);
            if seen.contains(&tag) {
                continue;
            }
            seen.push(tag);
            let needs_predictor = enabled && scenario == Scenario::DiffusionX;
            if needs_predictor && predictors.is_none() {
                return Err(Error::InvalidConfig(
                    "predictor on needs --edge-weights and --cloud-weights".into(),
                ));
            }
            let pipeline = Pipeline::new(
                PipelineConfig {
                    grid: CandidateSet::default(),
                    base_steps_edge: a.base_steps_edge,
                    base_steps_cloud: a.base_steps_cloud,
                    t_max: DEFAULT_T_MAX,
                    predictor_enabled: needs_predictor,
                    fixed_strength: Strength::new(a.fixed_strength)?,
                    network: NetworkConfig {
                        uplink_bps: a.uplink_bps,
                        ..NetworkConfig::default()
                    },
                },
                Timing::Simulated(SimulatedCosts::default()),
                Encoders::default(),
                edge.clone(),
                cloud.clone(),
                predictors.clone(),
            )?;
            summaries.extend(replay(&pipeline, scenario, &sessions, a.seed, &mut log)?);
        }
    }
    log.into_inner().map_err(|e| e.into_error())?.sync_all()?;
    let baseline = a.baseline.clone().or_else(|| {
        scenarios
            .contains(&Scenario::CloudOnly)
            .then(|| Scenario::CloudOnly.name().to_string())
    });
    let report = aggregate(&summaries, baseline.as_deref())?;
    std::fs::write(&a.report, report.to_json())?;
    print!("{}", report.to_table());
    Ok(())
}

fn cmd_label(a: &LabelArgs) -> Result<()> {
    require(&a.pairs)?;
    let backend = make_backend(&a.backend, Tier::Edge);
    let scorer: Box<dyn AlignmentScorer> = match (&a.scores, a.backend.as_str()) {
        (Some(p), _) => Box::new(CachedScorer::load(p)?),
        (None, "mock") => Box::new(MockScorer::new(
            MockBackend::edge().latent_embedder().clone(),
            a.beta,
        )),
        (None, _) => {
            return Err(Error::InvalidConfig(
                "remote backends need --scores with precomputed alignment scores".into(),
            ))
        }
    };
    let run = build_label_dataset(
        &a.pairs,
        &a.out,
        &CandidateSet::default(),
        backend.as_ref(),
        scorer.as_ref(),
        a.seed,
        LabelingSettings {
            base_steps: a.base_steps,
            t_max: a.t_max,
        },
        a.resume,
    )?;
    eprintln!("labeled {} pairs ({} resumed)", run.labeled, run.resumed);
    Ok(())
}

/// Feature vectors for every labeled pair of `labels`.
pub fn examples_from_labels(
    labels: &Path,
    tier: Tier,
    backend: &dyn GenerationBackend,
    base_steps: u32,
    label_seed: u64,
) -> Result<Vec<TrainingExample>> {
    let encoders = Encoders::default();
    read_labels(labels)?
        .iter()
        .map(|l| tier_example(tier, l, &encoders, backend, base_steps, label_seed))
        .collect()
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    require(&a.labels)?;
    let tier = Tier::from(a.tier);
    let backend = make_backend(&a.backend, Tier::Edge);
    let data = examples_from_labels(
        &a.labels,
        tier,
        backend.as_ref(),
        a.base_steps,
        a.label_seed,
    )?;
    if !(0.0..1.0).contains(&a.holdout) {
        return Err(Error::InvalidConfig("--holdout must be in [0, 1)".into()));
    }
    let n_train = data.len() - (data.len() as f64 * a.holdout).round() as usize;
    let (train_set, test_set) = data.split_at(n_train);
    let defaults = TrainingConfig::default();
    let cfg = TrainingConfig {
        learning_rate: a.learning_rate.unwrap_or(defaults.learning_rate),
        epochs: a.epochs.unwrap_or(defaults.epochs),
        batch_size: a.batch_size.unwrap_or(defaults.batch_size),
        lambda: a.lambda.unwrap_or(defaults.lambda),
        seed: a.seed,
        regularizer: defaults.regularizer,
    };
    let encoders = Encoders::default();
    let dims = match tier {
        Tier::Edge => edge_architecture(encoders.edge_text.dim()),
        Tier::Cloud => cloud_architecture(encoders.cloud_text.dim(), encoders.image.dim()),
    };
    let init = MlpParams::init(&dims, a.init_seed)?;
    let out = train(&init, train_set, &cfg)?;
    save_weights(&out.params, &a.out)?;
    let mut err = std::io::stderr().lock();
    let _ = writeln!(
        err,
        "trained {tier} predictor on {} pairs, final epoch loss {:.6}",
        train_set.len(),
        out.loss_history.last().copied().unwrap_or(f64::NAN)
    );
    if !test_set.is_empty() {
        let grid = CandidateSet::default();
        let mut mae = 0.0;
        for ex in test_set {
            let raw = out.params.forward(&ex.features)?;
            mae += (diffx_core::clip_strength(raw, &grid)?.value() - ex.label.value()).abs();
        }
        let _ = writeln!(
            err,
            "held-out MAE {:.4} over {} pairs",
            mae / test_set.len() as f64,
            test_set.len()
        );
    }
    Ok(())
}
