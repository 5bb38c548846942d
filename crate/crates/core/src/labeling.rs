//! Ground-truth strengths by exhaustive search: run img2img at every candidate
//! strength, score each result against the new prompt, keep the best.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Seek, SeekFrom, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backend::{AlignmentScorer, GeneratedImage, GenerationBackend};
use crate::domain::CandidateSet;
use crate::error::{Error, Result};
use crate::scheduler::plan_for_strength;

/// One line of a pairs file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptPair {
    pub id: String,
    pub prompt_prev: String,
    pub prompt_curr: String,
}

/// One line of a labels file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPair {
    pub id: String,
    pub s_star: f64,
    /// `(strength, score)` for every grid point, ascending in strength.
    pub curve: Vec<(f64, f64)>,
    #[serde(default)]
    pub prompt_prev: String,
    #[serde(default)]
    pub prompt_curr: String,
}

/// Denoising settings used to build the plan for each candidate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelingSettings {
    pub base_steps: u32,
    pub t_max: u32,
}

impl Default for LabelingSettings {
    fn default() -> Self {
        LabelingSettings {
            base_steps: 25,
            t_max: crate::scheduler::DEFAULT_T_MAX,
        }
    }
}

/// Index of the maximal score; ties go to the earliest (smallest strength).
fn argmax_first(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Scores `img2img(image_prev, prompt_curr, s)` for every `s` in the grid and
/// returns the argmax. `id` and `prompt_prev` are left empty for the caller.
#[allow(clippy::too_many_arguments)]
pub fn label_strength(
    image_prev: &GeneratedImage,
    prompt_curr: &str,
    grid: &CandidateSet,
    backend: &dyn GenerationBackend,
    scorer: &dyn AlignmentScorer,
    seed: u64,
    settings: LabelingSettings,
) -> Result<LabeledPair> {
    let mut curve = Vec::with_capacity(grid.len());
    for s in grid.strengths() {
        let plan = plan_for_strength(s, settings.base_steps, settings.t_max)?;
        let image = backend.img2img(image_prev, prompt_curr, &plan, seed)?;
        let score = scorer.score(&image, prompt_curr)?;
        if score.is_nan() {
            return Err(Error::BackendFailure(format!(
                "scorer returned NaN at strength {s}"
            )));
        }
        curve.push((s.value(), score));
    }
    let scores: Vec<f64> = curve.iter().map(|c| c.1).collect();
    let best = argmax_first(&scores);
    Ok(LabeledPair {
        id: String::new(),
        s_star: curve[best].0,
        curve,
        prompt_prev: String::new(),
        prompt_curr: prompt_curr.to_string(),
    })
}

/// Labels a prompt pair end to end: the previous image is
/// `txt2img(prompt_prev)` under the same seed.
pub fn label_pair(
    pair: &PromptPair,
    grid: &CandidateSet,
    backend: &dyn GenerationBackend,
    scorer: &dyn AlignmentScorer,
    seed: u64,
    settings: LabelingSettings,
) -> Result<LabeledPair> {
    let prev = backend.txt2img(&pair.prompt_prev, settings.base_steps, seed)?;
    let mut labeled = label_strength(
        &prev,
        &pair.prompt_curr,
        grid,
        backend,
        scorer,
        seed,
        settings,
    )?;
    labeled.id = pair.id.clone();
    labeled.prompt_prev = pair.prompt_prev.clone();
    Ok(labeled)
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::parse(path, i + 1, e))?);
    }
    Ok(out)
}

pub fn read_pairs(path: &Path) -> Result<Vec<PromptPair>> {
    read_jsonl(path)
}

pub fn read_labels(path: &Path) -> Result<Vec<LabeledPair>> {
    read_jsonl(path)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LabelRun {
    /// Pairs already present in the output and skipped.
    pub resumed: usize,
    pub labeled: usize,
}

/// Counts complete, parseable lines at the head of an existing output and
/// truncates anything after them.
fn resume_point(out: &Path, pairs: &[PromptPair]) -> Result<usize> {
    let file = match File::open(out) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(0),
        Err(e) => return Err(e.into()),
    };
    let mut reader = BufReader::new(file);
    let mut done = 0;
    let mut good_len = 0u64;
    let mut line = String::new();
    loop {
        line.clear();
        let n = reader.read_line(&mut line)?;
        if n == 0 || !line.ends_with('\n') {
            break;
        }
        match serde_json::from_str::<LabeledPair>(&line) {
            Ok(l) if done < pairs.len() && l.id == pairs[done].id => {
                done += 1;
                good_len += n as u64;
            }
            _ => break,
        }
    }
    let f = OpenOptions::new().write(true).open(out)?;
    f.set_len(good_len)?;
    Ok(done)
}

/// Labels every pair of `pairs_file` into `out_file` (JSON Lines, input
/// order). Each line is flushed as soon as it is written, so a failure leaves
/// a valid prefix. With `resume`, pairs already present are skipped.
#[allow(clippy::too_many_arguments)]
pub fn build_label_dataset(
    pairs_file: &Path,
    out_file: &Path,
    grid: &CandidateSet,
    backend: &dyn GenerationBackend,
    scorer: &dyn AlignmentScorer,
    seed: u64,
    settings: LabelingSettings,
    resume: bool,
) -> Result<LabelRun> {
    let pairs = read_pairs(pairs_file)?;
    let skip = if resume {
        resume_point(out_file, &pairs)?
    } else {
        0
    };
    let mut file = OpenOptions::new()
        .create(true)
        .write(true)
        .truncate(!resume)
        .open(out_file)?;
    file.seek(SeekFrom::End(0))?;
    let mut writer = BufWriter::new(file);
    let mut run = LabelRun {
        resumed: skip,
        labeled: 0,
    };
    for pair in &pairs[skip..] {
        let labeled = label_pair(pair, grid, backend, scorer, seed, settings)?;
        serde_json::to_writer(&mut writer, &labeled)?;
        writer.write_all(b"\n")?;
        writer.flush()?;
        run.labeled += 1;
    }
    writer
        .into_inner()
        .map_err(|e| e.into_error())?
        .sync_all()?;
    Ok(run)
}
