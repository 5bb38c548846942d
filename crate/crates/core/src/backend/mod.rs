//! Generation backends: the txt2img/img2img abstraction, a deterministic mock
//! that carries latent semantic vectors, the alignment scorer, and a client
//! for remote model servers.

mod image;
mod mock;
mod remote;
mod scorer;

use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

pub use self::image::{GeneratedImage, Provenance};
pub use self::mock::{blend_semantic, MockBackend, MockConfig, DEFAULT_PAYLOAD_BYTES, LATENT_SEED};
pub use self::remote::{GenerateRequest, GenerateResponse, Mode, RemoteBackend, DEFAULT_TIMEOUT};
pub use self::scorer::{alignment_score, AlignmentScorer, CachedScorer, MockScorer, DEFAULT_BETA};

use crate::domain::Tier;
use crate::error::Result;
use crate::scheduler::DenoisePlan;

pub trait GenerationBackend: Send + Sync {
    fn txt2img(&self, prompt: &str, steps: u32, seed: u64) -> Result<GeneratedImage>;

    fn img2img(
        &self,
        image: &GeneratedImage,
        prompt: &str,
        plan: &DenoisePlan,
        seed: u64,
    ) -> Result<GeneratedImage>;
}

impl<B: GenerationBackend + ?Sized> GenerationBackend for std::sync::Arc<B> {
    fn txt2img(&self, prompt: &str, steps: u32, seed: u64) -> Result<GeneratedImage> {
        (**self).txt2img(prompt, steps, seed)
    }

    fn img2img(
        &self,
        image: &GeneratedImage,
        prompt: &str,
        plan: &DenoisePlan,
        seed: u64,
    ) -> Result<GeneratedImage> {
        (**self).img2img(image, prompt, plan, seed)
    }
}

/// Wraps a backend and counts invocations.
#[derive(Debug, Default)]
pub struct CountingBackend<B> {
    inner: B,
    txt2img_calls: AtomicUsize,
    img2img_calls: AtomicUsize,
}

impl<B> CountingBackend<B> {
    pub fn new(inner: B) -> Self {
        CountingBackend {
            inner,
            txt2img_calls: AtomicUsize::new(0),
            img2img_calls: AtomicUsize::new(0),
        }
    }

    pub fn txt2img_calls(&self) -> usize {
        self.txt2img_calls.load(Ordering::SeqCst)
    }

    pub fn img2img_calls(&self) -> usize {
        self.img2img_calls.load(Ordering::SeqCst)
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }
}

impl<B: GenerationBackend> GenerationBackend for CountingBackend<B> {
    fn txt2img(&self, prompt: &str, steps: u32, seed: u64) -> Result<GeneratedImage> {
        self.txt2img_calls.fetch_add(1, Ordering::SeqCst);
        self.inner.txt2img(prompt, steps, seed)
    }

    fn img2img(
        &self,
        image: &GeneratedImage,
        prompt: &str,
        plan: &DenoisePlan,
        seed: u64,
    ) -> Result<GeneratedImage> {
        self.img2img_calls.fetch_add(1, Ordering::SeqCst);
        self.inner.img2img(image, prompt, plan, seed)
    }
}

/// Affine per-step cost of one tier's denoiser.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackendCostModel {
    pub per_step_s: f64,
    pub base_overhead_s: f64,
    pub tier: Tier,
}

impl BackendCostModel {
    /// 0.40 + 25 * 0.550 = 14.15 s for a full 25-step generation.
    pub const CLOUD: BackendCostModel = BackendCostModel {
        per_step_s: 0.550,
        base_overhead_s: 0.40,
        tier: Tier::Cloud,
    };

    /// 0.39 + 25 * 0.456 = 11.79 s for a full 25-step generation.
    pub const EDGE: BackendCostModel = BackendCostModel {
        per_step_s: 0.456,
        base_overhead_s: 0.39,
        tier: Tier::Edge,
    };

    pub fn for_tier(tier: Tier) -> Self {
        match tier {
            Tier::Edge => Self::EDGE,
            Tier::Cloud => Self::CLOUD,
        }
    }
}
