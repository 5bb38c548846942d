//! Strength predictors for both tiers.
//!
//! The edge predictor regresses on `[h_prev, h_curr, h_curr - h_prev]` from two
//! prompt embeddings. The cloud predictor regresses on the concatenation of a
//! prompt embedding and an image embedding of the draft. Both share the MLP
//! core and clip their output to the candidate range.

mod corpus;
mod mlp;
mod weights;

pub use self::corpus::tier_example;
pub use self::mlp::{
    train, Activation, Gradients, MlpParams, Regularizer, TrainOutcome, TrainingConfig,
    TrainingExample,
};
pub use self::weights::{from_bytes, load_weights, save_weights, to_bytes, FORMAT_VERSION};

use crate::domain::{clip_strength, CandidateSet, Strength};
use crate::embedding::EmbeddingVector;
use crate::error::{Error, Result};

pub const EDGE_HIDDEN: [usize; 2] = [256, 64];
pub const CLOUD_HIDDEN: [usize; 3] = [512, 256, 64];

/// `3d -> 256 -> 64 -> 1`.
pub fn edge_architecture(text_dim: usize) -> Vec<usize> {
    let mut dims = vec![3 * text_dim];
    dims.extend(EDGE_HIDDEN);
    dims.push(1);
    dims
}

/// `(d_text + d_image) -> 512 -> 256 -> 64 -> 1`.
pub fn cloud_architecture(text_dim: usize, image_dim: usize) -> Vec<usize> {
    let mut dims = vec![text_dim + image_dim];
    dims.extend(CLOUD_HIDDEN);
    dims.push(1);
    dims
}

/// `[h_prev, h_curr, h_curr - h_prev]`.
pub fn edge_features(h_prev: &EmbeddingVector, h_curr: &EmbeddingVector) -> Result<Vec<f64>> {
    if h_prev.dim() != h_curr.dim() {
        return Err(Error::DimensionMismatch {
            expected: h_prev.dim(),
            actual: h_curr.dim(),
        });
    }
    let (p, c) = (h_prev.as_slice(), h_curr.as_slice());
    let mut out = Vec::with_capacity(3 * p.len());
    out.extend_from_slice(p);
    out.extend_from_slice(c);
    out.extend(c.iter().zip(p).map(|(c, p)| c - p));
    Ok(out)
}

/// `[h_cloud, v_cloud]`.
pub fn fuse_multimodal(h_cloud: &EmbeddingVector, v_cloud: &EmbeddingVector) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(h_cloud.dim() + v_cloud.dim());
    out.extend_from_slice(h_cloud.as_slice());
    out.extend_from_slice(v_cloud.as_slice());
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("fused feature"));
    }
    Ok(out)
}

pub fn predict_edge_strength(
    params: &MlpParams,
    h_prev: &EmbeddingVector,
    h_curr: &EmbeddingVector,
    grid: &CandidateSet,
) -> Result<Strength> {
    let raw = params.forward(&edge_features(h_prev, h_curr)?)?;
    clip_strength(raw, grid)
}

pub fn predict_cloud_strength(
    params: &MlpParams,
    h_cloud: &EmbeddingVector,
    v_cloud: &EmbeddingVector,
    grid: &CandidateSet,
) -> Result<Strength> {
    let raw = params.forward(&fuse_multimodal(h_cloud, v_cloud)?)?;
    clip_strength(raw, grid)
}
