//! Reference computations written independently of the library internals.
//! Shared by the core property tests and the acceptance suite.

#![allow(dead_code)]

use diffx_core::backend::{AlignmentScorer, GeneratedImage, GenerationBackend};
use diffx_core::predictor::{Gradients, MlpParams, TrainingExample};
use diffx_core::scheduler::plan_for_strength;
use diffx_core::{CandidateSet, Strength};

/// Parameters as plain f64 nested vectors: `w[l][o][i]`, `b[l][o]`.
#[derive(Clone)]
pub struct Plain {
    pub w: Vec<Vec<Vec<f64>>>,
    pub b: Vec<Vec<f64>>,
}

impl Plain {
    pub fn from(params: &MlpParams) -> Self {
        let w = params
            .weights()
            .iter()
            .map(|m| {
                m.rows()
                    .into_iter()
                    .map(|r| r.iter().map(|&v| f64::from(v)).collect())
                    .collect()
            })
            .collect();
        let b = params
            .biases()
            .iter()
            .map(|v| v.iter().map(|&x| f64::from(x)).collect())
            .collect();
        Plain { w, b }
    }
}

/// Loss and the ReLU on/off pattern, computed with scalar loops.
pub fn naive_loss(p: &Plain, batch: &[TrainingExample], lambda: f64) -> (f64, Vec<bool>) {
    let layers = p.w.len();
    let mut mask = Vec::new();
    let mut sse = 0.0;
    for ex in batch {
        let mut a = ex.features.clone();
        for l in 0..layers {
            let mut z = vec![0.0; p.w[l].len()];
            for (o, row) in p.w[l].iter().enumerate() {
                let mut s = p.b[l][o];
                for (wi, xi) in row.iter().zip(&a) {
                    s += wi * xi;
                }
                z[o] = s;
            }
            if l + 1 < layers {
                for v in z.iter_mut() {
                    mask.push(*v > 0.0);
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            a = z;
        }
        let d = a[0] - ex.label.value();
        sse += d * d;
    }
    let mut reg = 0.0;
    for layer in &p.w {
        for row in layer {
            for v in row {
                reg += v * v;
            }
        }
    }
    (sse / batch.len() as f64 + lambda * reg, mask)
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    pub max_rel: f64,
    pub checked: usize,
    /// Entries skipped because a perturbation crossed a ReLU kink.
    pub skipped: usize,
}

/// Central differences with step `eps` on up to `per_tensor` entries of every
/// weight matrix and bias vector (all entries when the tensor is smaller).
/// Relative error is `|a - n| / max(|a|, |n|, floor)`.
pub fn grad_check(
    params: &MlpParams,
    batch: &[TrainingExample],
    lambda: f64,
    eps: f64,
    per_tensor: usize,
    floor: f64,
    seed: u64,
) -> GradCheck {
    let (grads, _): (Gradients, f64) = params.gradient(batch, lambda).unwrap();
    let base = Plain::from(params);
    let (_, mask0) = naive_loss(&base, batch, lambda);
    let mut rng = Lcg(seed);
    let mut out = GradCheck {
        max_rel: 0.0,
        checked: 0,
        skipped: 0,
    };
    let mut check = |analytic: f64, perturb: &dyn Fn(&mut Plain, f64)| {
        let mut plus = base.clone();
        perturb(&mut plus, eps);
        let mut minus = base.clone();
        perturb(&mut minus, -eps);
        let (lp, mp) = naive_loss(&plus, batch, lambda);
        let (lm, mm) = naive_loss(&minus, batch, lambda);
        if mp != mask0 || mm != mask0 {
            out.skipped += 1;
            return;
        }
        let numeric = (lp - lm) / (2.0 * eps);
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor);
        out.max_rel = out.max_rel.max(rel);
        out.checked += 1;
    };
    for l in 0..base.w.len() {
        let (rows, cols) = (base.w[l].len(), base.w[l][0].len());
        for (o, i) in pick(rows * cols, per_tensor, &mut rng).map(|k| (k / cols, k % cols)) {
            check(grads.weights[l][[o, i]], &|p: &mut Plain, d| {
                p.w[l][o][i] += d
            });
        }
        for o in pick(rows, per_tensor, &mut rng) {
            check(grads.biases[l][o], &|p: &mut Plain, d| p.b[l][o] += d);
        }
    }
    out
}

fn pick(n: usize, k: usize, rng: &mut Lcg) -> Box<dyn Iterator<Item = usize>> {
    if n <= k {
        Box::new(0..n)
    } else {
        let v: Vec<usize> = (0..k).map(|_| (rng.next() % n as u64) as usize).collect();
        Box::new(v.into_iter())
    }
}

/// Knuth MMIX linear congruential generator; enough for test data.
pub struct Lcg(pub u64);

impl Lcg {
    pub fn next(&mut self) -> u64 {
        self.0 = self
            .0
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        self.0 >> 11
    }

    /// Uniform in [lo, hi).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * (self.next() as f64 / (1u64 << 53) as f64)
    }
}

pub fn random_batch(dim: usize, n: usize, seed: u64) -> Vec<TrainingExample> {
    let mut rng = Lcg(seed);
    (0..n)
        .map(|_| TrainingExample {
            features: (0..dim).map(|_| rng.uniform(-1.0, 1.0)).collect(),
            label: Strength::new(rng.uniform(0.40, 0.90)).unwrap(),
        })
        .collect()
}

/// Exhaustive scan written as plainly as possible: every grid value, keep the
/// first strictly larger score.
#[allow(clippy::too_many_arguments)]
pub fn naive_label(
    prev: &GeneratedImage,
    prompt: &str,
    grid: &CandidateSet,
    backend: &dyn GenerationBackend,
    scorer: &dyn AlignmentScorer,
    seed: u64,
    base_steps: u32,
    t_max: u32,
) -> (f64, Vec<f64>) {
    let mut best_s = f64::NAN;
    let mut best = f64::NEG_INFINITY;
    let mut scores = Vec::new();
    for &v in grid.values() {
        let s = Strength::new(v).unwrap();
        let plan = plan_for_strength(s, base_steps, t_max).unwrap();
        let img = backend.img2img(prev, prompt, &plan, seed).unwrap();
        let score = scorer.score(&img, prompt).unwrap();
        scores.push(score);
        if score > best {
            best = score;
            best_s = v;
        }
    }
    (best_s, scores)
}

/// The mock score in closed form: blend two unit latents by `s`,
/// renormalize, take the cosine with the target, subtract `beta * s`.
pub fn closed_form_score(prev: &[f64], target: &[f64], s: f64, beta: f64) -> f64 {
    let blend: Vec<f64> = prev
        .iter()
        .zip(target)
        .map(|(a, b)| (1.0 - s) * a + s * b)
        .collect();
    let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
    dot(&blend, target) / (dot(&blend, &blend).sqrt() * dot(target, target).sqrt()) - beta * s
}
