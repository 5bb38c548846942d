//! Strength to denoising-plan mapping.

use serde::{Deserialize, Serialize};

use crate::domain::Strength;
use crate::error::{Error, Result};

/// Top of the 1000-level noise ladder.
pub const DEFAULT_T_MAX: u32 = 999;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoisePlan {
    pub strength: Strength,
    pub steps: usize,
    /// Strictly decreasing; `timesteps[0] == t_start`. A single-step plan is
    /// `[t_start]` and its only step denoises straight to zero.
    pub timesteps: Vec<u32>,
    pub t_start: u32,
}

/// Round half up. The epsilon keeps decimal halves such as 0.7 * 5 = 3.5
/// from landing just below .5 in binary.
fn round_half_up(x: f64) -> u64 {
    (x + 0.5 + 1e-9).floor() as u64
}

/// `max(1, round(s * base_steps))`.
pub fn steps_for_strength(strength: Strength, base_steps: u32) -> u32 {
    let steps = round_half_up(strength.value() * f64::from(base_steps));
    steps.max(1) as u32
}

/// Uniform subsequence of `steps` levels from `round(s * t_max)` down to 0.
pub fn skip_schedule(strength: Strength, steps: usize, t_max: u32) -> Result<DenoisePlan> {
    if steps == 0 {
        return Err(Error::InfeasibleSchedule {
            steps,
            available: 0,
        });
    }
    let t_start = round_half_up(strength.value() * f64::from(t_max)) as u32;
    let available = t_start as usize + 1;
    if steps > available || steps as u64 > u64::from(t_max) + 1 {
        return Err(Error::InfeasibleSchedule { steps, available });
    }
    let timesteps = if steps == 1 {
        vec![t_start]
    } else {
        let spacing = f64::from(t_start) / (steps - 1) as f64;
        (0..steps)
            .map(|i| round_half_up(f64::from(t_start) - spacing * i as f64) as u32)
            .collect()
    };
    Ok(DenoisePlan {
        strength,
        steps,
        timesteps,
        t_start,
    })
}

/// The plan used by both tiers: `steps_for_strength` levels, uniformly spaced.
pub fn plan_for_strength(strength: Strength, base_steps: u32, t_max: u32) -> Result<DenoisePlan> {
    skip_schedule(
        strength,
        steps_for_strength(strength, base_steps) as usize,
        t_max,
    )
}
