//! Offline replay of interactive prompt sessions under the three deployment
//! scenarios, plus the synthetic session and pair generators.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::{transition, RoundRecord, SessionEvent, SessionState, Tier};
use crate::error::{Error, Result};
use crate::labeling::PromptPair;
use crate::netsim::SessionSummary;
use crate::pipeline::Pipeline;

/// One user's prompt history; the last round is the confirmed prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractiveSession {
    pub id: String,
    pub rounds: Vec<String>,
}

pub fn read_dataset(path: &Path) -> Result<Vec<InteractiveSession>> {
    let reader = BufReader::new(File::open(path)?);
    let mut sessions = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let s: InteractiveSession =
            serde_json::from_str(&line).map_err(|e| Error::parse(path, i + 1, e))?;
        if s.rounds.is_empty() {
            return Err(Error::parse(path, i + 1, "session has no rounds"));
        }
        sessions.push(s);
    }
    Ok(sessions)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
    Ok(())
}

const SUBJECTS: &[&str] = &[
    "a red fox",
    "an old lighthouse",
    "a bowl of ramen",
    "a vintage bicycle",
    "a sleeping cat",
    "a mountain cabin",
    "a golden retriever",
    "a steam locomotive",
    "a glass teapot",
    "a city street",
    "a sailboat",
    "a barn owl",
    "a field of sunflowers",
    "a wooden bridge",
    "a robot",
    "a castle",
    "a young woman reading",
    "an astronaut",
    "a koi pond",
    "a desert canyon",
    "a bakery window",
    "a paper lantern",
    "a snowy village",
    "a jazz band",
    "a hot air balloon",
    "a giraffe",
    "a chess board",
    "a market stall",
    "a waterfall",
    "an elephant",
    "a pizza",
    "a skateboarder",
];

const ATTRIBUTES: &[&[&str]] = &[
    &[
        "in a snowy forest",
        "on a sandy beach",
        "in a neon lit alley",
        "beside a calm lake",
        "under a stormy sky",
        "in a crowded plaza",
        "on a rooftop",
        "in a misty valley",
        "inside a cozy library",
        "on the surface of the moon",
    ],
    &[
        "oil painting",
        "watercolor",
        "pixel art",
        "studio photograph",
        "pencil sketch",
        "ukiyo-e woodblock print",
        "3d render",
        "art nouveau poster",
        "film noir still",
        "children's book illustration",
    ],
    &[
        "at golden hour",
        "at night",
        "soft morning light",
        "dramatic backlighting",
        "overcast daylight",
        "candlelit",
        "under neon glow",
        "bright noon sun",
    ],
    &[
        "highly detailed",
        "wide angle",
        "shallow depth of field",
        "muted colors",
        "vibrant colors",
        "symmetrical composition",
        "cinematic",
        "minimalist",
    ],
];

/// Seeded synthetic sessions: a subject, then one attribute appended per
/// round (setting, style, lighting, detail, cycling), so every round strictly
/// extends the one before it.
pub fn gen_dataset(n_sessions: usize, rounds: usize, seed: u64) -> Result<Vec<InteractiveSession>> {
    if n_sessions == 0 || rounds == 0 {
        return Err(Error::InvalidConfig(
            "sessions and rounds must both be at least 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sessions = (0..n_sessions)
        .map(|i| {
            let mut prompt = SUBJECTS.choose(&mut rng).expect("non-empty").to_string();
            let mut out = vec![prompt.clone()];
            for k in 1..rounds {
                let pool = ATTRIBUTES[(k - 1) % ATTRIBUTES.len()];
                prompt.push_str(", ");
                prompt.push_str(pool.choose(&mut rng).expect("non-empty"));
                out.push(prompt.clone());
            }
            InteractiveSession {
                id: format!("s{i:05}"),
                rounds: out,
            }
        })
        .collect();
    Ok(sessions)
}

/// Consecutive-round pairs of every session.
pub fn session_pairs(sessions: &[InteractiveSession]) -> Vec<PromptPair> {
    sessions
        .iter()
        .flat_map(|s| {
            s.rounds
                .windows(2)
                .enumerate()
                .map(move |(k, w)| PromptPair {
                    id: format!("{}-{}", s.id, k + 1),
                    prompt_prev: w[0].clone(),
                    prompt_curr: w[1].clone(),
                })
        })
        .collect()
}

fn random_prompt(rng: &mut ChaCha8Rng, attrs: usize) -> String {
    let mut p = SUBJECTS.choose(rng).expect("non-empty").to_string();
    for pool in ATTRIBUTES.iter().take(attrs) {
        p.push_str(", ");
        p.push_str(pool.choose(rng).expect("non-empty"));
    }
    p
}

/// Seeded prompt edits of mixed size: appended details, swapped attributes,
/// new subjects and complete rewrites, so labels spread over the grid.
pub fn synthetic_pairs(n: usize, seed: u64) -> Vec<PromptPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let attrs = rng.random_range(0..=3);
            let prev = random_prompt(&mut rng, attrs);
            let curr = match rng.random_range(0..4) {
                0 => {
                    let pool = ATTRIBUTES[attrs.min(ATTRIBUTES.len() - 1)];
                    format!("{prev}, {}", pool.choose(&mut rng).expect("non-empty"))
                }
                1 => {
                    // Same subject, fresh attributes.
                    let subject = prev.split(", ").next().expect("subject").to_string();
                    let tail = random_prompt(&mut rng, attrs.max(1));
                    let rest = tail.split_once(", ").map(|(_, r)| r).unwrap_or("");
                    format!("{subject}, {rest}")
                }
                2 => {
                    // New subject, same attributes.
                    let subject = SUBJECTS.choose(&mut rng).expect("non-empty");
                    match prev.split_once(", ") {
                        Some((_, rest)) => format!("{subject}, {rest}"),
                        None => subject.to_string(),
                    }
                }
                _ => {
                    let k = rng.random_range(0..=3);
                    random_prompt(&mut rng, k)
                }
            };
            PromptPair {
                id: format!("p{i:05}"),
                prompt_prev: prev,
                prompt_curr: curr,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scenario {
    CloudOnly,
    EdgeOnly,
    DiffusionX,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [
        Scenario::CloudOnly,
        Scenario::EdgeOnly,
        Scenario::DiffusionX,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::CloudOnly => "cloud-only",
            Scenario::EdgeOnly => "edge-only",
            Scenario::DiffusionX => "diffusionx",
        }
    }

    /// Report row label; the predictor switch only matters for the
    /// collaborative scenario.
    pub fn tag(self, predictor_enabled: bool) -> String {
        match (self, predictor_enabled) {
            (Scenario::DiffusionX, false) => "diffusionx-no-predictor".to_string(),
            _ => self.name().to_string(),
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "cloud-only" | "cloudonly" | "cloud" => Ok(Scenario::CloudOnly),
            "edge-only" | "edgeonly" | "edge" => Ok(Scenario::EdgeOnly),
            "diffusionx" | "collaborative" => Ok(Scenario::DiffusionX),
            other => Err(Error::InvalidConfig(format!("unknown scenario '{other}'"))),
        }
    }
}

/// Generation seed for one round, derived from the run seed, the session id
/// and the round number.
pub fn round_seed(seed: u64, session: &str, round: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(session.as_bytes());
    h.update((round as u64).to_le_bytes());
    u64::from_le_bytes(h.finalize()[..8].try_into().expect("8 bytes"))
}

/// What one replayed session produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionLog {
    pub session: String,
    pub scenario: String,
    pub records: Vec<RoundRecord>,
    pub summary: SessionSummary,
}

pub fn replay_session(
    pipeline: &Pipeline,
    scenario: Scenario,
    session: &InteractiveSession,
    seed: u64,
) -> Result<SessionLog> {
    if session.rounds.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "session {} has no rounds",
            session.id
        )));
    }
    let tag = scenario.tag(pipeline.config().predictor_enabled);
    let records = match scenario {
        Scenario::CloudOnly | Scenario::EdgeOnly => {
            let tier = if scenario == Scenario::CloudOnly {
                Tier::Cloud
            } else {
                Tier::Edge
            };
            let mut records = Vec::with_capacity(session.rounds.len());
            for (k, prompt) in session.rounds.iter().enumerate() {
                let mut out = pipeline.generate(tier, prompt, round_seed(seed, &session.id, k))?;
                out.record.round_index = k as u32 + 1;
                records.push(out.record);
            }
            records
        }
        Scenario::DiffusionX => {
            let mut state = SessionState::new(session.id.clone());
            let mut draft = None;
            let mut prev_prompt: Option<&str> = None;
            for (k, prompt) in session.rounds.iter().enumerate() {
                let previous = prev_prompt.zip(draft.as_ref());
                let out = pipeline.preview(previous, prompt, round_seed(seed, &session.id, k))?;
                state = transition(
                    &state,
                    SessionEvent::SubmitPrompt {
                        prompt: prompt.clone(),
                        image: out.image.digest(),
                        record: out.record,
                    },
                )?;
                draft = Some(out.image);
                prev_prompt = Some(prompt);
            }
            state = transition(&state, SessionEvent::Finalize)?;
            let confirmed = session.rounds.last().expect("non-empty");
            let draft = draft.expect("at least one round");
            let seed = round_seed(seed, &session.id, session.rounds.len());
            let out = pipeline.finalize(confirmed, &draft, seed)?;
            state = transition(
                &state,
                SessionEvent::CloudDone {
                    image: out.image.digest(),
                    record: out.record,
                },
            )?;
            state.history
        }
    };
    let summary = SessionSummary::from_records(&tag, session.rounds.len(), &records);
    Ok(SessionLog {
        session: session.id.clone(),
        scenario: tag,
        records,
        summary,
    })
}

/// Replays every session in order, writing one JSON line per session to
/// `log` as it completes. On failure the sessions already written stay in the
/// log and the error is returned.
pub fn replay(
    pipeline: &Pipeline,
    scenario: Scenario,
    sessions: &[InteractiveSession],
    seed: u64,
    log: &mut dyn Write,
) -> Result<Vec<SessionSummary>> {
    let mut summaries = Vec::with_capacity(sessions.len());
    for session in sessions {
        let entry = replay_session(pipeline, scenario, session, seed)?;
        serde_json::to_writer(&mut *log, &entry)?;
        log.write_all(b"\n")?;
        log.flush()?;
        summaries.push(entry.summary);
    }
    Ok(summaries)
}
