//! One interactive round at a time: edge previews, then a single cloud
//! refinement of the confirmed prompt.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Instant;

use crate::backend::{BackendCostModel, GeneratedImage, GenerationBackend};
use crate::domain::{CandidateSet, LatencyBreakdown, RoundRecord, Strength, Tier};
use crate::embedding::Encoders;
use crate::error::{Error, Result};
use crate::netsim::{simulate_generation_time, transmission_latency, NetworkConfig};
use crate::predictor::{predict_cloud_strength, predict_edge_strength, MlpParams};
use crate::scheduler::{plan_for_strength, DEFAULT_T_MAX};

/// Default cost of one predictor forward pass, per tier.
pub const DEFAULT_PREDICT_S: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub grid: CandidateSet,
    pub base_steps_edge: u32,
    pub base_steps_cloud: u32,
    pub t_max: u32,
    pub predictor_enabled: bool,
    /// Strength applied when the predictor is disabled.
    pub fixed_strength: Strength,
    pub network: NetworkConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            grid: CandidateSet::default(),
            base_steps_edge: 25,
            base_steps_cloud: 25,
            t_max: DEFAULT_T_MAX,
            predictor_enabled: true,
            fixed_strength: Strength::new(Strength::MAX).expect("grid max"),
            network: NetworkConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.base_steps_edge == 0 || self.base_steps_cloud == 0 {
            return Err(Error::InvalidConfig("base steps must be at least 1".into()));
        }
        let s = self.fixed_strength.value();
        if s < self.grid.min() || s > self.grid.max() {
            return Err(Error::InvalidConfig(format!(
                "fixed strength {s} outside the candidate range"
            )));
        }
        self.network.validate()
    }
}

/// Cost models used in place of the wall clock.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulatedCosts {
    pub edge: BackendCostModel,
    pub cloud: BackendCostModel,
    pub predict_s: f64,
}

impl Default for SimulatedCosts {
    fn default() -> Self {
        SimulatedCosts {
            edge: BackendCostModel::EDGE,
            cloud: BackendCostModel::CLOUD,
            predict_s: DEFAULT_PREDICT_S,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Timing {
    Simulated(SimulatedCosts),
    /// Wall-clock prediction and generation; transmission is always computed
    /// from the network model.
    Measured,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Predictors {
    pub edge: MlpParams,
    pub cloud: MlpParams,
}

/// Output of one round: the new image and its record. The record's
/// `round_index` is assigned by the session state machine.
#[derive(Debug, Clone)]
pub struct RoundOutput {
    pub image: GeneratedImage,
    pub record: RoundRecord,
}

pub struct Pipeline {
    config: PipelineConfig,
    timing: Timing,
    encoders: Encoders,
    edge: Arc<dyn GenerationBackend>,
    cloud: Arc<dyn GenerationBackend>,
    predictors: Option<Predictors>,
    predictor_calls: AtomicUsize,
}

impl std::fmt::Debug for Pipeline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Pipeline")
            .field("config", &self.config)
            .field("timing", &self.timing)
            .field("predictors", &self.predictors.is_some())
            .finish_non_exhaustive()
    }
}

impl Pipeline {
    pub fn new(
        config: PipelineConfig,
        timing: Timing,
        encoders: Encoders,
        edge: Arc<dyn GenerationBackend>,
        cloud: Arc<dyn GenerationBackend>,
        predictors: Option<Predictors>,
    ) -> Result<Self> {
        config.validate()?;
        if config.predictor_enabled && predictors.is_none() {
            return Err(Error::InvalidConfig(
                "predictor enabled but no weights supplied".into(),
            ));
        }
        if let Some(p) = &predictors {
            let want = 3 * encoders.edge_text.dim();
            if p.edge.input_dim() != want {
                return Err(Error::ShapeMismatch(format!(
                    "edge predictor takes {} inputs, encoder yields {want}",
                    p.edge.input_dim()
                )));
            }
            let want = encoders.cloud_text.dim() + encoders.image.dim();
            if p.cloud.input_dim() != want {
                return Err(Error::ShapeMismatch(format!(
                    "cloud predictor takes {} inputs, encoders yield {want}",
                    p.cloud.input_dim()
                )));
            }
        }
        Ok(Pipeline {
            config,
            timing,
            encoders,
            edge,
            cloud,
            predictors,
            predictor_calls: AtomicUsize::new(0),
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn timing(&self) -> Timing {
        self.timing
    }

    /// Number of predictor forward passes so far, both tiers.
    pub fn predictor_calls(&self) -> usize {
        self.predictor_calls.load(Ordering::Relaxed)
    }

    fn backend(&self, tier: Tier) -> &dyn GenerationBackend {
        match tier {
            Tier::Edge => self.edge.as_ref(),
            Tier::Cloud => self.cloud.as_ref(),
        }
    }

    fn base_steps(&self, tier: Tier) -> u32 {
        match tier {
            Tier::Edge => self.config.base_steps_edge,
            Tier::Cloud => self.config.base_steps_cloud,
        }
    }

    /// Runs `f`, returning its result and the seconds charged for it.
    fn charge<T>(
        &self,
        simulated: impl FnOnce(&SimulatedCosts) -> f64,
        f: impl FnOnce() -> Result<T>,
    ) -> Result<(T, f64)> {
        match &self.timing {
            Timing::Simulated(costs) => Ok((f()?, simulated(costs))),
            Timing::Measured => {
                let start = Instant::now();
                let out = f()?;
                Ok((out, start.elapsed().as_secs_f64()))
            }
        }
    }

    /// Predicted (or fixed) strength and the seconds spent predicting.
    fn choose_strength(
        &self,
        predict: impl FnOnce(&Predictors) -> Result<Strength>,
    ) -> Result<(Option<Strength>, Strength, f64)> {
        if !self.config.predictor_enabled {
            return Ok((None, self.config.fixed_strength, 0.0));
        }
        let predictors = self.predictors.as_ref().expect("checked in new");
        self.predictor_calls.fetch_add(1, Ordering::Relaxed);
        let (s, t) = self.charge(|c| c.predict_s, || predict(predictors))?;
        Ok((Some(s), s, t))
    }

    /// Full-step txt2img on one tier.
    pub fn generate(&self, tier: Tier, prompt: &str, seed: u64) -> Result<RoundOutput> {
        let steps = self.base_steps(tier);
        let backend = self.backend(tier);
        let (image, gen_s) = self.charge(
            |c| {
                simulate_generation_time(
                    steps,
                    if tier == Tier::Edge {
                        &c.edge
                    } else {
                        &c.cloud
                    },
                )
            },
            || backend.txt2img(prompt, steps, seed),
        )?;
        let record = RoundRecord {
            round_index: 0,
            prompt: prompt.to_string(),
            predicted_strength: None,
            strength_used: None,
            steps_executed: steps,
            latency: LatencyBreakdown::new(0.0, gen_s, 0.0)?,
            tier,
            image: Some(image.digest()),
        };
        Ok(RoundOutput { image, record })
    }

    /// An edge preview. The first round is txt2img; later rounds edit the
    /// previous preview with img2img at the chosen strength.
    pub fn preview(
        &self,
        previous: Option<(&str, &GeneratedImage)>,
        prompt: &str,
        seed: u64,
    ) -> Result<RoundOutput> {
        let Some((prev_prompt, prev_image)) = previous else {
            return self.generate(Tier::Edge, prompt, seed);
        };
        let (predicted, strength, predict_s) = self.choose_strength(|p| {
            let h_prev = self.encoders.edge_text.embed_text(prev_prompt)?;
            let h_curr = self.encoders.edge_text.embed_text(prompt)?;
            predict_edge_strength(&p.edge, &h_prev, &h_curr, &self.config.grid)
        })?;
        let plan = plan_for_strength(strength, self.config.base_steps_edge, self.config.t_max)?;
        let (image, gen_s) = self.charge(
            |c| simulate_generation_time(plan.steps as u32, &c.edge),
            || self.edge.img2img(prev_image, prompt, &plan, seed),
        )?;
        let record = RoundRecord {
            round_index: 0,
            prompt: prompt.to_string(),
            predicted_strength: predicted,
            strength_used: Some(strength),
            steps_executed: plan.steps as u32,
            latency: LatencyBreakdown::new(predict_s, gen_s, 0.0)?,
            tier: Tier::Edge,
            image: Some(image.digest()),
        };
        Ok(RoundOutput { image, record })
    }

    /// Ships the draft to the cloud and refines it under the confirmed prompt.
    pub fn finalize(&self, prompt: &str, draft: &GeneratedImage, seed: u64) -> Result<RoundOutput> {
        let transmit_s =
            transmission_latency(draft.payload_bytes() as u64, self.config.network.uplink_bps);
        let (predicted, strength, predict_s) = self.choose_strength(|p| {
            let h = self.encoders.cloud_text.embed_text(prompt)?;
            let v = self.encoders.image.embed_image(draft)?;
            predict_cloud_strength(&p.cloud, &h, &v, &self.config.grid)
        })?;
        let plan = plan_for_strength(strength, self.config.base_steps_cloud, self.config.t_max)?;
        let (image, gen_s) = self.charge(
            |c| simulate_generation_time(plan.steps as u32, &c.cloud),
            || self.cloud.img2img(draft, prompt, &plan, seed),
        )?;
        let record = RoundRecord {
            round_index: 0,
            prompt: prompt.to_string(),
            predicted_strength: predicted,
            strength_used: Some(strength),
            steps_executed: plan.steps as u32,
            latency: LatencyBreakdown::new(predict_s, gen_s, transmit_s)?,
            tier: Tier::Cloud,
            image: Some(image.digest()),
        };
        Ok(RoundOutput { image, record })
    }
}
