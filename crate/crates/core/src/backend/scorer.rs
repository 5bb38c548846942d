use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::Deserialize;

use crate::backend::GeneratedImage;
use crate::embedding::{cosine, Embedder};
use crate::error::{Error, Result};

/// Penalty weight that gives the mock score an interior optimum.
pub const DEFAULT_BETA: f64 = 0.5;

/// Image-text alignment used to pick ground-truth strengths.
pub trait AlignmentScorer: Send + Sync {
    fn score(&self, image: &GeneratedImage, prompt: &str) -> Result<f64>;
}

/// `cos(latent(image), embed(prompt)) - beta * strength_used(image)`.
///
/// txt2img outputs carry no strength and are not penalized.
pub fn alignment_score(
    image: &GeneratedImage,
    prompt: &str,
    beta: f64,
    latent: &Embedder,
) -> Result<f64> {
    let vec = image.semantic_vec().ok_or(Error::MissingSemanticVector)?;
    let text = latent.embed_text(prompt)?;
    if text.dim() != vec.dim() {
        return Err(Error::DimensionMismatch {
            expected: text.dim(),
            actual: vec.dim(),
        });
    }
    let penalty = image.strength_used().map_or(0.0, |s| s.value());
    Ok(cosine(vec.as_slice(), text.as_slice()) - beta * penalty)
}

#[derive(Debug, Clone)]
pub struct MockScorer {
    latent: Embedder,
    beta: f64,
}

impl MockScorer {
    /// `latent` must be the backend's latent embedder.
    pub fn new(latent: Embedder, beta: f64) -> Self {
        MockScorer { latent, beta }
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

impl AlignmentScorer for MockScorer {
    fn score(&self, image: &GeneratedImage, prompt: &str) -> Result<f64> {
        alignment_score(image, prompt, self.beta, &self.latent)
    }
}

#[derive(Deserialize)]
struct ScoreLine {
    image: String,
    prompt: String,
    score: f64,
}

/// Precomputed scores (e.g. real CLIP scores) keyed by image digest and
/// prompt, loaded from JSON Lines `{"image": str, "prompt": str, "score": f}`.
#[derive(Debug, Clone, Default)]
pub struct CachedScorer {
    scores: HashMap<(String, String), f64>,
}

impl CachedScorer {
    pub fn load(path: &Path) -> Result<Self> {
        let reader = BufReader::new(File::open(path)?);
        let mut scores = HashMap::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: ScoreLine =
                serde_json::from_str(&line).map_err(|e| Error::parse(path, i + 1, e))?;
            scores.insert((rec.image, rec.prompt), rec.score);
        }
        Ok(CachedScorer { scores })
    }

    pub fn insert(&mut self, image: impl Into<String>, prompt: impl Into<String>, score: f64) {
        self.scores.insert((image.into(), prompt.into()), score);
    }
}

impl AlignmentScorer for CachedScorer {
    fn score(&self, image: &GeneratedImage, prompt: &str) -> Result<f64> {
        let digest = image.digest().0;
        self.scores
            .get(&(digest.clone(), prompt.to_string()))
            .copied()
            .ok_or(Error::MissingScore {
                image: digest,
                prompt: prompt.to_string(),
            })
    }
}
