//! Acceptance suite. Runs with its own `main` so that every criterion prints
//! exactly one `PASS`/`FAIL` line whether or not earlier ones failed.

#[path = "../../core/tests/support/oracles.rs"]
mod oracles;

use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use diffx_core::backend::{GenerationBackend, MockBackend, MockScorer, DEFAULT_BETA};
use diffx_core::domain::SessionEvent;
use diffx_core::embedding::Encoders;
use diffx_core::labeling::{label_pair, label_strength, LabeledPair, LabelingSettings};
use diffx_core::netsim::{transmission_latency, SessionSummary, DEFAULT_BPS};
use diffx_core::pipeline::{Pipeline, PipelineConfig, Predictors, SimulatedCosts, Timing};
use diffx_core::predictor::{
    cloud_architecture, edge_architecture, tier_example, train, MlpParams, TrainingConfig,
    TrainingExample,
};
use diffx_core::replay::{
    gen_dataset, replay_session, synthetic_pairs, InteractiveSession, Scenario,
};
use diffx_core::scheduler::{plan_for_strength, skip_schedule, steps_for_strength};
use diffx_core::{
    clip_strength, transition, CandidateSet, Error, ImageRef, LatencyBreakdown, Phase, RoundRecord,
    SessionState, Strength, Tier,
};
use diffx_service::{router, AppState};
use http_body_util::BodyExt;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use serde_json::{json, Value};
use tower::ServiceExt;

use oracles::{grad_check, naive_label, random_batch, Lcg};

type Outcome = std::result::Result<String, String>;

const SEED: u64 = 0;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_s: u64) -> std::result::Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit_s as f64, || {
        format!("took {:.1} s, limit {limit_s} s", elapsed.as_secs_f64())
    })
}

fn labeling_oracle() -> Outcome {
    let start = Instant::now();
    let backend = MockBackend::edge();
    let scorer = MockScorer::new(backend.latent_embedder().clone(), 0.5);
    let grid = CandidateSet::default();
    let pairs = synthetic_pairs(100, 11);
    let mut agree = 0;
    for (k, pair) in pairs.iter().enumerate() {
        let seed = 1000 + k as u64;
        let prev = backend
            .txt2img(&pair.prompt_prev, 25, seed)
            .map_err(|e| e.to_string())?;
        let got = label_strength(
            &prev,
            &pair.prompt_curr,
            &grid,
            &backend,
            &scorer,
            seed,
            LabelingSettings::default(),
        )
        .map_err(|e| e.to_string())?;
        let (want, _) = naive_label(
            &prev,
            &pair.prompt_curr,
            &grid,
            &backend,
            &scorer,
            seed,
            25,
            999,
        );
        if got.s_star == want {
            agree += 1;
        }
    }
    ensure(agree == 100, || format!("{agree}/100 pairs agree"))?;
    within(start.elapsed(), 10)?;
    Ok(format!(
        "100/100 pairs agree in {:.2} s",
        start.elapsed().as_secs_f64()
    ))
}

fn gradient_check() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for seed in 0..5 {
        for dims in [edge_architecture(384), cloud_architecture(768, 512)] {
            let params = MlpParams::init(&dims, seed).map_err(|e| e.to_string())?;
            let batch = random_batch(dims[0], 4, 31 + seed);
            let r = grad_check(&params, &batch, 1e-4, 1e-4, 12, 1e-6, seed);
            ensure(r.checked >= 8 * (dims.len() - 1), || {
                format!("too few entries checked: {r:?}")
            })?;
            worst = worst.max(r.max_rel);
            checked += r.checked;
        }
    }
    ensure(worst < 1e-4, || format!("max relative error {worst:.2e}"))?;
    within(start.elapsed(), 30)?;
    Ok(format!(
        "max relative error {worst:.2e} over {checked} entries in {:.1} s",
        start.elapsed().as_secs_f64()
    ))
}

/// 2,000 mock-labeled synthetic pairs and their edge/cloud features.
struct Corpus {
    labels: Vec<LabeledPair>,
    edge: Vec<TrainingExample>,
}

fn corpus() -> Result<Corpus, Error> {
    let backend = MockBackend::edge();
    let scorer = MockScorer::new(backend.latent_embedder().clone(), DEFAULT_BETA);
    let grid = CandidateSet::default();
    let encoders = Encoders::default();
    let settings = LabelingSettings::default();
    let labels = synthetic_pairs(2000, SEED)
        .iter()
        .map(|p| label_pair(p, &grid, &backend, &scorer, SEED, settings))
        .collect::<Result<Vec<_>, _>>()?;
    let edge = labels
        .iter()
        .map(|l| {
            tier_example(
                Tier::Edge,
                l,
                &encoders,
                &backend,
                settings.base_steps,
                SEED,
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Corpus { labels, edge })
}

fn mse(params: &MlpParams, data: &[TrainingExample]) -> Result<f64, Error> {
    let mut sum = 0.0;
    for ex in data {
        sum += (params.forward(&ex.features)? - ex.label.value()).powi(2);
    }
    Ok(sum / data.len() as f64)
}

fn learnability(corpus: &Corpus, trained: &mut Option<MlpParams>) -> Outcome {
    let start = Instant::now();
    let (train_set, test_set) = corpus.edge.split_at(1600);
    let init = MlpParams::init(
        &edge_architecture(Encoders::default().edge_text.dim()),
        SEED,
    )
    .map_err(|e| e.to_string())?;
    let out = train(&init, train_set, &TrainingConfig::default()).map_err(|e| e.to_string())?;
    let grid = CandidateSet::default();
    let mut mae = 0.0;
    for ex in test_set {
        let raw = out
            .params
            .forward(&ex.features)
            .map_err(|e| e.to_string())?;
        mae += (clip_strength(raw, &grid)
            .map_err(|e| e.to_string())?
            .value()
            - ex.label.value())
        .abs();
    }
    mae /= test_set.len() as f64;
    let before = mse(&init, test_set).map_err(|e| e.to_string())?;
    let after = mse(&out.params, test_set).map_err(|e| e.to_string())?;
    let reduction = 1.0 - after / before;
    *trained = Some(out.params);
    ensure(mae <= 0.075, || format!("held-out MAE {mae:.4} > 0.075"))?;
    ensure(reduction >= 0.5, || {
        format!(
            "held-out MSE {before:.4} -> {after:.4}, reduction {:.1}%",
            reduction * 100.0
        )
    })?;
    within(start.elapsed(), 120)?;
    Ok(format!(
        "held-out MAE {mae:.4}, MSE {before:.4} -> {after:.4} ({:.1}% lower), {:.1} s",
        reduction * 100.0,
        start.elapsed().as_secs_f64()
    ))
}

fn transmission() -> Outcome {
    let t = transmission_latency(500_000, DEFAULT_BPS);
    ensure((t - 0.2).abs() <= 1e-9, || format!("got {t}"))?;
    Ok(format!("500,000 bytes at 20 Mbps = {t:.12} s"))
}

fn pipeline(predictors: &Predictors, enabled: bool) -> Result<Pipeline, Error> {
    Pipeline::new(
        PipelineConfig {
            predictor_enabled: enabled,
            ..PipelineConfig::default()
        },
        Timing::Simulated(SimulatedCosts::default()),
        Encoders::default(),
        Arc::new(MockBackend::edge()),
        Arc::new(MockBackend::cloud()),
        Some(predictors.clone()),
    )
}

struct ReplayStats {
    total: f64,
    trans: f64,
    mean_predicted: Option<f64>,
}

fn run_scenario(
    pipeline: &Pipeline,
    scenario: Scenario,
    sessions: &[InteractiveSession],
) -> Result<ReplayStats, Error> {
    let mut summaries: Vec<SessionSummary> = Vec::new();
    let mut predicted = Vec::new();
    for s in sessions {
        let log = replay_session(pipeline, scenario, s, SEED)?;
        predicted.extend(
            log.records
                .iter()
                .filter_map(|r| r.predicted_strength.map(Strength::value)),
        );
        summaries.push(log.summary);
    }
    let n = summaries.len() as f64;
    Ok(ReplayStats {
        total: summaries.iter().map(|s| s.total_s).sum::<f64>() / n,
        trans: summaries.iter().map(|s| s.trans_s).sum::<f64>() / n,
        mean_predicted: (!predicted.is_empty())
            .then(|| predicted.iter().sum::<f64>() / predicted.len() as f64),
    })
}

fn calibrated_latency(predictors: &Predictors, sessions: &[InteractiveSession]) -> Outcome {
    let start = Instant::now();
    let on = pipeline(predictors, true).map_err(|e| e.to_string())?;
    let cloud = run_scenario(&on, Scenario::CloudOnly, sessions).map_err(|e| e.to_string())?;
    let edge = run_scenario(&on, Scenario::EdgeOnly, sessions).map_err(|e| e.to_string())?;
    let dx = run_scenario(&on, Scenario::DiffusionX, sessions).map_err(|e| e.to_string())?;
    ensure((cloud.total - 14.15).abs() <= 0.01, || {
        format!("cloud-only {:.4}", cloud.total)
    })?;
    ensure((edge.total - 11.79).abs() <= 0.01, || {
        format!("edge-only {:.4}", edge.total)
    })?;
    ensure(dx.total <= 12.05, || {
        format!("diffusionx {:.4} > 12.05", dx.total)
    })?;
    ensure((dx.trans - 0.20).abs() <= 0.01, || {
        format!("diffusionx transmit {:.4}", dx.trans)
    })?;
    within(start.elapsed(), 60)?;
    Ok(format!(
        "cloud-only {:.2} s, edge-only {:.2} s, diffusionx {:.2} s (transmit {:.2} s) over {} sessions in {:.1} s",
        cloud.total,
        edge.total,
        dx.total,
        dx.trans,
        sessions.len(),
        start.elapsed().as_secs_f64()
    ))
}

fn ablation(predictors: &Predictors, sessions: &[InteractiveSession]) -> Outcome {
    let on = pipeline(predictors, true).map_err(|e| e.to_string())?;
    let off = pipeline(predictors, false).map_err(|e| e.to_string())?;
    let with = run_scenario(&on, Scenario::DiffusionX, sessions).map_err(|e| e.to_string())?;
    let without = run_scenario(&off, Scenario::DiffusionX, sessions).map_err(|e| e.to_string())?;
    let mean = with
        .mean_predicted
        .ok_or("predictor produced no strengths")?;
    ensure(mean < 0.90, || {
        format!("mean predicted strength {mean:.3} is not below 0.90")
    })?;
    ensure(without.total > with.total, || {
        format!(
            "predictor off {:.3} s is not above predictor on {:.3} s",
            without.total, with.total
        )
    })?;
    Ok(format!(
        "mean predicted strength {mean:.3}; predictor on {:.2} s < off {:.2} s",
        with.total, without.total
    ))
}

fn scheduler_properties() -> Outcome {
    let start = Instant::now();
    let grid = CandidateSet::default();
    for t in 1..=100u32 {
        let steps: Vec<u32> = grid.strengths().map(|s| steps_for_strength(s, t)).collect();
        ensure(steps.windows(2).all(|w| w[0] <= w[1]), || {
            format!("T={t}: steps {steps:?} not monotone")
        })?;
        ensure(steps.iter().all(|&n| n >= 1), || {
            format!("T={t}: zero steps")
        })?;
    }
    let mut runner = TestRunner::new(Config {
        cases: 2000,
        failure_persistence: None,
        ..Config::default()
    });
    runner
        .run(
            &(0.40f64..=0.90, 1u32..=1200, 1usize..=80),
            |(s, t_max, steps)| {
                let s = Strength::new(s).unwrap();
                let t_start = (s.value() * f64::from(t_max) + 0.5 + 1e-9).floor() as usize;
                match skip_schedule(s, steps, t_max) {
                    Ok(plan) => {
                        prop_assert!(steps <= t_start + 1);
                        prop_assert_eq!(plan.timesteps.len(), steps);
                        prop_assert_eq!(plan.timesteps[0] as usize, t_start);
                        prop_assert!(plan.timesteps.windows(2).all(|w| w[0] > w[1]));
                        if steps > 1 {
                            prop_assert_eq!(*plan.timesteps.last().unwrap(), 0);
                        }
                    }
                    Err(Error::InfeasibleSchedule { .. }) => prop_assert!(steps > t_start + 1),
                    Err(e) => prop_assert!(false, "unexpected error {e}"),
                }
                Ok(())
            },
        )
        .map_err(|e| e.to_string())?;
    for s in grid.strengths() {
        for t in 1..=100u32 {
            let plan = plan_for_strength(s, t, 999).map_err(|e| e.to_string())?;
            ensure(plan.steps == steps_for_strength(s, t) as usize, || {
                format!("s={} T={t}", s.value())
            })?;
        }
    }
    within(start.elapsed(), 10)?;
    Ok(format!(
        "11 strengths x T in 1..=100 monotone; 2000 random plans checked in {:.2} s",
        start.elapsed().as_secs_f64()
    ))
}

#[derive(Debug, Clone, Copy)]
enum Ev {
    Submit,
    Finalize,
    Done,
    Close,
}

/// Allowed transitions, written out independently of the domain code.
fn allowed(phase: Phase, ev: Ev) -> Option<Phase> {
    match (phase, ev) {
        (_, Ev::Close) => Some(Phase::Closed),
        (Phase::Created | Phase::PreviewReady, Ev::Submit) => Some(Phase::PreviewReady),
        (Phase::PreviewReady, Ev::Finalize) => Some(Phase::CloudRefining),
        (Phase::CloudRefining, Ev::Done) => Some(Phase::Refined),
        _ => None,
    }
}

fn record(tier: Tier) -> RoundRecord {
    RoundRecord {
        round_index: 0,
        prompt: "p".into(),
        predicted_strength: None,
        strength_used: None,
        steps_executed: 1,
        latency: LatencyBreakdown::new(0.0, 1.0, 0.0).unwrap(),
        tier,
        image: None,
    }
}

fn domain_event(ev: Ev, i: usize) -> SessionEvent {
    match ev {
        Ev::Submit => SessionEvent::SubmitPrompt {
            prompt: format!("prompt {i}"),
            image: ImageRef(format!("img{i}")),
            record: record(Tier::Edge),
        },
        Ev::Finalize => SessionEvent::Finalize,
        Ev::Done => SessionEvent::CloudDone {
            image: ImageRef(format!("cloud{i}")),
            record: record(Tier::Cloud),
        },
        Ev::Close => SessionEvent::Close,
    }
}

fn random_sequences() -> std::result::Result<usize, String> {
    let events = prop::collection::vec(
        prop_oneof![4 => Just(Ev::Submit), 2 => Just(Ev::Finalize), 2 => Just(Ev::Done), 1 => Just(Ev::Close)],
        0..24,
    );
    let mut runner = TestRunner::new(Config {
        cases: 1000,
        failure_persistence: None,
        ..Config::default()
    });
    runner
        .run(&events, |events| {
            let mut state = SessionState::new("s");
            for (i, ev) in events.into_iter().enumerate() {
                match (
                    transition(&state, domain_event(ev, i)),
                    allowed(state.phase, ev),
                ) {
                    (Ok(next), Some(phase)) => {
                        prop_assert_eq!(next.phase, phase);
                        state = next;
                    }
                    (Err(Error::IllegalTransition { from, .. }), None) => {
                        prop_assert_eq!(from, state.phase)
                    }
                    (got, want) => prop_assert!(
                        false,
                        "{ev:?} in {:?}: got {:?}, want {want:?}",
                        state.phase,
                        got.map(|s| s.phase)
                    ),
                }
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok(1000)
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(v) => req
            .header("content-type", "application/json")
            .body(Body::from(v.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    (
        status,
        resp.into_body()
            .collect()
            .await
            .unwrap()
            .to_bytes()
            .to_vec(),
    )
}

/// Drives random prompt/finalize sequences through the HTTP API, checks that
/// illegal steps are rejected, then restarts on the same directory and
/// compares every session document and the metrics byte for byte.
async fn service_restart(
    predictors: &Predictors,
    dir: &Path,
) -> std::result::Result<(usize, usize), String> {
    let open = || -> std::result::Result<Router, String> {
        let p = pipeline(predictors, true).map_err(|e| e.to_string())?;
        Ok(router(
            AppState::open(p, dir, 3).map_err(|e| e.to_string())?,
        ))
    };
    let app = open()?;
    let mut rng = Lcg(99);
    let mut ids = Vec::new();
    let mut rejected = 0;
    for _ in 0..12 {
        let (status, body) = call(&app, "POST", "/sessions", None).await;
        ensure(status == StatusCode::CREATED, || {
            format!("create: {status}")
        })?;
        let id = serde_json::from_slice::<Value>(&body).unwrap()["session_id"]
            .as_str()
            .unwrap()
            .to_string();
        let mut phase = Phase::Created;
        let mut prompt = String::from("a lighthouse");
        for step in 0..(2 + rng.next() % 5) {
            let (status, expect) = if rng.next().is_multiple_of(3) {
                let (status, _) =
                    call(&app, "POST", &format!("/sessions/{id}/finalize"), None).await;
                let expect = (phase == Phase::PreviewReady).then_some(Phase::Refined);
                (status, expect)
            } else {
                prompt.push_str(&format!(", detail {step}"));
                let (status, _) = call(
                    &app,
                    "POST",
                    &format!("/sessions/{id}/prompt"),
                    Some(json!({ "prompt": prompt })),
                )
                .await;
                let expect = matches!(phase, Phase::Created | Phase::PreviewReady)
                    .then_some(Phase::PreviewReady);
                (status, expect)
            };
            match expect {
                Some(next) => {
                    ensure(status == StatusCode::OK, || {
                        format!("{id}: legal step answered {status}")
                    })?;
                    phase = next;
                }
                None => {
                    ensure(status == StatusCode::CONFLICT, || {
                        format!("{id}: illegal step answered {status}")
                    })?;
                    rejected += 1;
                }
            }
        }
        ids.push(id);
    }
    let mut uris: Vec<String> = ids.iter().map(|id| format!("/sessions/{id}")).collect();
    uris.push("/metrics".into());
    let mut before = Vec::new();
    for uri in &uris {
        before.push(call(&app, "GET", uri, None).await.1);
    }
    drop(app);
    let app = open()?;
    for (uri, want) in uris.iter().zip(&before) {
        let (status, got) = call(&app, "GET", uri, None).await;
        ensure(status == StatusCode::OK && &got == want, || {
            format!("{uri} differs after restart")
        })?;
    }
    Ok((ids.len(), rejected))
}

fn state_machine(predictors: &Predictors) -> Outcome {
    let sequences = random_sequences()?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| e.to_string())?;
    let (sessions, rejected) = rt.block_on(service_restart(predictors, dir.path()))?;
    Ok(format!(
        "{sequences} random sequences match the transition table; {sessions} service sessions ({rejected} illegal steps rejected) restored byte-equal"
    ))
}

fn bench(dir: &Path, args: &[&str]) -> std::result::Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_bench"))
        .current_dir(dir)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!(
            "bench {} failed: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

fn determinism() -> Outcome {
    let runs = [
        tempfile::tempdir().map_err(|e| e.to_string())?,
        tempfile::tempdir().map_err(|e| e.to_string())?,
    ];
    for dir in &runs {
        let d = dir.path();
        bench(
            d,
            &[
                "gen-pairs",
                "--n",
                "120",
                "--seed",
                "4",
                "--out",
                "pairs.jsonl",
            ],
        )?;
        bench(
            d,
            &[
                "label",
                "--pairs",
                "pairs.jsonl",
                "--out",
                "labels.jsonl",
                "--seed",
                "4",
            ],
        )?;
        bench(
            d,
            &[
                "train",
                "--labels",
                "labels.jsonl",
                "--tier",
                "edge",
                "--out",
                "edge.bin",
                "--epochs",
                "20",
                "--seed",
                "4",
            ],
        )?;
        bench(
            d,
            &[
                "train",
                "--labels",
                "labels.jsonl",
                "--tier",
                "cloud",
                "--out",
                "cloud.bin",
                "--epochs",
                "2",
                "--seed",
                "4",
            ],
        )?;
        bench(
            d,
            &[
                "gen-dataset",
                "--sessions",
                "30",
                "--rounds",
                "3",
                "--seed",
                "4",
                "--out",
                "sessions.jsonl",
            ],
        )?;
        bench(
            d,
            &[
                "replay",
                "--dataset",
                "sessions.jsonl",
                "--predictor",
                "both",
                "--seed",
                "4",
                "--edge-weights",
                "edge.bin",
                "--cloud-weights",
                "cloud.bin",
                "--report",
                "report.json",
                "--log",
                "sessions.log.jsonl",
            ],
        )?;
    }
    let files = [
        "labels.jsonl",
        "edge.bin",
        "cloud.bin",
        "report.json",
        "sessions.log.jsonl",
    ];
    for f in files {
        let a = std::fs::read(runs[0].path().join(f)).map_err(|e| e.to_string())?;
        let b = std::fs::read(runs[1].path().join(f)).map_err(|e| e.to_string())?;
        ensure(!a.is_empty() && a == b, || {
            format!("{f} differs between runs")
        })?;
    }
    Ok(format!(
        "{} output files byte-identical across two runs",
        files.len()
    ))
}

fn train_cloud(corpus: &Corpus) -> Result<MlpParams, Error> {
    let backend = MockBackend::edge();
    let encoders = Encoders::default();
    let data = corpus.labels[..1600]
        .iter()
        .map(|l| tier_example(Tier::Cloud, l, &encoders, &backend, 25, SEED))
        .collect::<Result<Vec<_>, _>>()?;
    let init = MlpParams::init(
        &cloud_architecture(encoders.cloud_text.dim(), encoders.image.dim()),
        SEED,
    )?;
    let cfg = TrainingConfig {
        epochs: 10,
        ..TrainingConfig::default()
    };
    Ok(train(&init, &data, &cfg)?.params)
}

fn report(name: &str, outcome: Outcome, failures: &mut Vec<String>) {
    match outcome {
        Ok(detail) => println!("PASS {name}: {detail}"),
        Err(why) => {
            println!("FAIL {name}: {why}");
            failures.push(name.to_string());
        }
    }
}

fn main() {
    // Accept and ignore libtest flags such as `--nocapture` or filters.
    let mut failures = Vec::new();
    report(
        "labeling oracle equivalence",
        labeling_oracle(),
        &mut failures,
    );
    report("gradient correctness", gradient_check(), &mut failures);
    let corpus = match corpus() {
        Ok(c) => c,
        Err(e) => {
            println!("FAIL corpus construction: {e}");
            std::process::exit(1);
        }
    };
    let mut edge = None;
    report(
        "predictor learnability",
        learnability(&corpus, &mut edge),
        &mut failures,
    );
    report("transmission formula", transmission(), &mut failures);
    let predictors = match (edge, train_cloud(&corpus)) {
        (Some(edge), Ok(cloud)) => Some(Predictors { edge, cloud }),
        (_, Err(e)) => {
            println!("cloud predictor training failed: {e}");
            None
        }
        (None, _) => None,
    };
    let sessions = gen_dataset(400, 3, SEED).expect("dataset");
    let need = || Err::<String, _>("no trained predictors".to_string());
    match &predictors {
        Some(p) => {
            report(
                "calibrated latency reproduction",
                calibrated_latency(p, &sessions),
                &mut failures,
            );
            report("ablation direction", ablation(p, &sessions), &mut failures);
        }
        None => {
            report("calibrated latency reproduction", need(), &mut failures);
            report("ablation direction", need(), &mut failures);
        }
    }
    report(
        "scheduler properties",
        scheduler_properties(),
        &mut failures,
    );
    let fallback = Predictors {
        edge: MlpParams::init(&edge_architecture(384), 1).unwrap(),
        cloud: MlpParams::init(&cloud_architecture(768, 512), 2).unwrap(),
    };
    report(
        "state machine and crash consistency",
        state_machine(predictors.as_ref().unwrap_or(&fallback)),
        &mut failures,
    );
    report("determinism sweep", determinism(), &mut failures);
    if !failures.is_empty() {
        println!(
            "{} criteria failed: {}",
            failures.len(),
            failures.join(", ")
        );
        std::process::exit(1);
    }
    println!("all criteria passed");
}
