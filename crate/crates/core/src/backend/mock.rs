use crate::backend::{GeneratedImage, GenerationBackend, Provenance};
use crate::domain::Tier;
use crate::embedding::{normalized, Embedder, EmbeddingVector, IMAGE_DIM};
use crate::error::{Error, Result};
use crate::scheduler::DenoisePlan;

/// Container size of mock previews; 500 kB at 20 Mbps is 0.20 s.
pub const DEFAULT_PAYLOAD_BYTES: usize = 500_000;
pub const LATENT_SEED: u64 = 0x00d1_ff05;

#[derive(Debug, Clone, PartialEq)]
pub struct MockConfig {
    pub tier: Tier,
    pub width: u32,
    pub height: u32,
    pub latent_dim: usize,
    pub latent_seed: u64,
    pub payload_bytes: usize,
}

impl MockConfig {
    pub fn new(tier: Tier) -> Self {
        MockConfig {
            tier,
            width: 512,
            height: 512,
            latent_dim: IMAGE_DIM,
            latent_seed: LATENT_SEED,
            payload_bytes: DEFAULT_PAYLOAD_BYTES,
        }
    }
}

/// Procedural stand-in for a diffusion model.
///
/// Every image carries a unit latent vector. txt2img sets it to the prompt's
/// latent embedding; img2img moves it toward the new prompt by exactly the
/// plan strength. Pixels are derived from the latent and the seed.
#[derive(Debug, Clone)]
pub struct MockBackend {
    config: MockConfig,
    latent: Embedder,
}

impl MockBackend {
    pub fn new(config: MockConfig) -> Self {
        let latent = Embedder::hash(config.latent_dim, config.latent_seed);
        MockBackend { config, latent }
    }

    pub fn edge() -> Self {
        Self::new(MockConfig::new(Tier::Edge))
    }

    pub fn cloud() -> Self {
        Self::new(MockConfig::new(Tier::Cloud))
    }

    pub fn config(&self) -> &MockConfig {
        &self.config
    }

    /// The embedder used for image latents; scorers must share it.
    pub fn latent_embedder(&self) -> &Embedder {
        &self.latent
    }

    fn provenance(&self) -> Provenance {
        match self.config.tier {
            Tier::Edge => Provenance::MockEdge,
            Tier::Cloud => Provenance::MockCloud,
        }
    }

    fn image(&self, vec: EmbeddingVector, seed: u64, plan: Option<&DenoisePlan>) -> GeneratedImage {
        GeneratedImage::procedural(
            self.config.width,
            self.config.height,
            self.provenance(),
            seed,
            vec,
            plan.map(|p| p.strength),
            self.config.payload_bytes,
        )
    }
}

/// `normalize((1 - s) * from + s * to)`.
pub fn blend_semantic(
    from: &EmbeddingVector,
    to: &EmbeddingVector,
    s: f64,
) -> Result<EmbeddingVector> {
    if from.dim() != to.dim() {
        return Err(Error::DimensionMismatch {
            expected: to.dim(),
            actual: from.dim(),
        });
    }
    let mixed = from
        .as_slice()
        .iter()
        .zip(to.as_slice())
        .map(|(a, b)| (1.0 - s) * a + s * b)
        .collect();
    let unit = normalized(mixed).ok_or(Error::NonFinite("zero-norm blend"))?;
    EmbeddingVector::new(unit)
}

impl GenerationBackend for MockBackend {
    fn txt2img(&self, prompt: &str, steps: u32, seed: u64) -> Result<GeneratedImage> {
        if steps == 0 {
            return Err(Error::InvalidConfig(
                "txt2img needs at least one step".into(),
            ));
        }
        let vec = self.latent.embed_text(prompt)?;
        Ok(self.image(vec, seed, None))
    }

    fn img2img(
        &self,
        image: &GeneratedImage,
        prompt: &str,
        plan: &DenoisePlan,
        seed: u64,
    ) -> Result<GeneratedImage> {
        let from = image.semantic_vec().ok_or(Error::MissingSemanticVector)?;
        if from.dim() != self.latent.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.latent.dim(),
                actual: from.dim(),
            });
        }
        let to = self.latent.embed_text(prompt)?;
        let vec = blend_semantic(from, &to, plan.strength.value())?;
        Ok(self.image(vec, seed, Some(plan)))
    }
}
