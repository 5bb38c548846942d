//! Shared domain types: strengths, the candidate grid, per-round records and
//! the interactive session state machine.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Noise-level fraction handed to an img2img pipeline.
///
/// Values produced by [`clip_strength`] always lie inside the candidate range.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Strength(f64);

impl Strength {
    pub const MIN: f64 = 0.40;
    pub const MAX: f64 = 0.90;

    /// Checked constructor; the value must already be inside the default range.
    pub fn new(value: f64) -> Result<Self> {
        if value.is_nan() {
            return Err(Error::InvalidStrength);
        }
        if !(Self::MIN..=Self::MAX).contains(&value) {
            return Err(Error::InvalidConfig(format!(
                "strength {value} outside [{}, {}]",
                Self::MIN,
                Self::MAX
            )));
        }
        Ok(Strength(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Strength {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        Strength::new(value)
    }
}

impl From<Strength> for f64 {
    fn from(s: Strength) -> f64 {
        s.0
    }
}

impl fmt::Display for Strength {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2}", self.0)
    }
}

/// Ascending grid of strengths searched when labeling.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    values: Vec<f64>,
}

impl Default for CandidateSet {
    /// 0.40, 0.45, ..., 0.90.
    fn default() -> Self {
        let values = (0..=10).map(|k| f64::from(40 + 5 * k) / 100.0).collect();
        CandidateSet { values }
    }
}

impl CandidateSet {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        let ascending = values.windows(2).all(|w| w[0] < w[1]);
        if values.is_empty() || !ascending || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidCandidateSet);
        }
        Ok(CandidateSet { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// Grid points as strengths. Grid points are in range by construction
    /// only for the default grid; custom grids are clipped to themselves.
    pub fn strengths(&self) -> impl Iterator<Item = Strength> + '_ {
        self.values.iter().map(|&v| Strength(v))
    }
}

/// Clamp a raw regressor output to the grid's range. Does not snap to grid
/// points.
pub fn clip_strength(raw: f64, grid: &CandidateSet) -> Result<Strength> {
    if raw.is_nan() {
        return Err(Error::InvalidStrength);
    }
    Ok(Strength(raw.clamp(grid.min(), grid.max())))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Edge,
    Cloud,
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Tier::Edge => "edge",
            Tier::Cloud => "cloud",
        })
    }
}

/// Seconds spent in each stage of one round.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LatencyBreakdown {
    pub predict_s: f64,
    pub generate_s: f64,
    pub transmit_s: f64,
    pub total_s: f64,
}

impl LatencyBreakdown {
    /// Builds a breakdown whose total is the sum of its parts.
    pub fn new(predict_s: f64, generate_s: f64, transmit_s: f64) -> Result<Self> {
        for (name, v) in [
            ("predict_s", predict_s),
            ("generate_s", generate_s),
            ("transmit_s", transmit_s),
        ] {
            if v.is_nan() {
                return Err(Error::NonFinite(name));
            }
            if v < 0.0 {
                return Err(Error::NegativeComponent(name));
            }
        }
        Ok(LatencyBreakdown {
            predict_s,
            generate_s,
            transmit_s,
            total_s: predict_s + generate_s + transmit_s,
        })
    }
}

/// Content digest of an encoded image, used as an opaque reference.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ImageRef(pub String);

impl fmt::Display for ImageRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round_index: u32,
    pub prompt: String,
    pub predicted_strength: Option<Strength>,
    /// Strength actually applied (predicted or fixed); absent for txt2img rounds.
    pub strength_used: Option<Strength>,
    pub steps_executed: u32,
    pub latency: LatencyBreakdown,
    pub tier: Tier,
    pub image: Option<ImageRef>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Created,
    PreviewReady,
    CloudRefining,
    Refined,
    Closed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    SubmitPrompt,
    Finalize,
    CloudDone,
    Close,
}

/// Inputs to [`transition`]. Generation results travel with the event so the
/// state machine itself stays pure.
#[derive(Debug, Clone, PartialEq)]
pub enum SessionEvent {
    SubmitPrompt {
        prompt: String,
        image: ImageRef,
        record: RoundRecord,
    },
    Finalize,
    CloudDone {
        image: ImageRef,
        record: RoundRecord,
    },
    Close,
}

impl SessionEvent {
    pub fn kind(&self) -> EventKind {
        match self {
            SessionEvent::SubmitPrompt { .. } => EventKind::SubmitPrompt,
            SessionEvent::Finalize => EventKind::Finalize,
            SessionEvent::CloudDone { .. } => EventKind::CloudDone,
            SessionEvent::Close => EventKind::Close,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub session_id: String,
    pub phase: Phase,
    pub round_index: u32,
    pub current_prompt: String,
    pub current_image: Option<ImageRef>,
    pub history: Vec<RoundRecord>,
}

impl SessionState {
    pub fn new(session_id: impl Into<String>) -> Self {
        SessionState {
            session_id: session_id.into(),
            phase: Phase::Created,
            round_index: 0,
            current_prompt: String::new(),
            current_image: None,
            history: Vec::new(),
        }
    }
}

/// Applies one event. Only the edges below are legal:
///
/// ```text
/// Created      --SubmitPrompt--> PreviewReady
/// PreviewReady --SubmitPrompt--> PreviewReady   (round_index + 1)
/// PreviewReady --Finalize------> CloudRefining
/// CloudRefining --CloudDone----> Refined
/// any          --Close---------> Closed
/// ```
pub fn transition(state: &SessionState, event: SessionEvent) -> Result<SessionState> {
    let illegal = |kind| Error::IllegalTransition {
        from: state.phase,
        event: kind,
    };
    let mut next = state.clone();
    match (state.phase, event) {
        (_, SessionEvent::Close) => next.phase = Phase::Closed,
        (
            Phase::Created | Phase::PreviewReady,
            SessionEvent::SubmitPrompt {
                prompt,
                image,
                mut record,
            },
        ) => {
            next.phase = Phase::PreviewReady;
            next.round_index += 1;
            record.round_index = next.round_index;
            next.current_prompt = prompt;
            next.current_image = Some(image);
            next.history.push(record);
        }
        (Phase::PreviewReady, SessionEvent::Finalize) => next.phase = Phase::CloudRefining,
        (Phase::CloudRefining, SessionEvent::CloudDone { image, mut record }) => {
            next.phase = Phase::Refined;
            record.round_index = next.round_index;
            next.current_image = Some(image);
            next.history.push(record);
        }
        (_, event) => return Err(illegal(event.kind())),
    }
    Ok(next)
}
