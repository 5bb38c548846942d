use super::mlp::TrainingExample;
use super::{edge_features, fuse_multimodal};
use crate::backend::GenerationBackend;
use crate::domain::{Strength, Tier};
use crate::embedding::Encoders;
use crate::error::Result;
use crate::labeling::LabeledPair;

/// Training example for one tier from a labeled prompt pair.
///
/// Cloud features need the previous image, which is regenerated with
/// `txt2img(prompt_prev, base_steps, seed)` exactly as labeling produced it.
pub fn tier_example(
    tier: Tier,
    pair: &LabeledPair,
    encoders: &Encoders,
    backend: &dyn GenerationBackend,
    base_steps: u32,
    seed: u64,
) -> Result<TrainingExample> {
    let features = match tier {
        Tier::Edge => {
            let h_prev = encoders.edge_text.embed_text(&pair.prompt_prev)?;
            let h_curr = encoders.edge_text.embed_text(&pair.prompt_curr)?;
            edge_features(&h_prev, &h_curr)?
        }
        Tier::Cloud => {
            let image = backend.txt2img(&pair.prompt_prev, base_steps, seed)?;
            let h = encoders.cloud_text.embed_text(&pair.prompt_curr)?;
            let v = encoders.image.embed_image(&image)?;
            fuse_multimodal(&h, &v)?
        }
    };
    Ok(TrainingExample {
        features,
        label: Strength::new(pair.s_star)?,
    })
}
