//! Transmission and generation cost models, per-round latency assembly and
//! scenario-level aggregation into Table-style reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::backend::BackendCostModel;
use crate::domain::{LatencyBreakdown, RoundRecord};
use crate::error::{Error, Result};

/// 20 Mbps, a typical 4G/5G uplink.
pub const DEFAULT_BPS: f64 = 20_000_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub uplink_bps: f64,
    pub downlink_bps: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            uplink_bps: DEFAULT_BPS,
            downlink_bps: DEFAULT_BPS,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.uplink_bps > 0.0 && self.downlink_bps > 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidConfig("bandwidth must be positive".into()))
        }
    }
}

/// `bytes * 8 / bps` seconds.
pub fn transmission_latency(payload_bytes: u64, bps: f64) -> f64 {
    payload_bytes as f64 * 8.0 / bps
}

pub fn simulate_generation_time(steps: u32, cost: &BackendCostModel) -> f64 {
    cost.base_overhead_s + f64::from(steps) * cost.per_step_s
}

pub fn assemble_round(
    predict_s: f64,
    generate_s: f64,
    transmit_s: f64,
) -> Result<LatencyBreakdown> {
    LatencyBreakdown::new(predict_s, generate_s, transmit_s)
}

/// One completed session reduced to the quantities the report averages.
///
/// `total_s` and `steps` are per prompt round (session sum divided by the
/// number of user prompts), so single-tier scenarios report the latency of one
/// generation. `trans_s` is the session's hand-off time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub scenario: String,
    pub total_s: f64,
    pub trans_s: f64,
    pub steps: f64,
}

impl SessionSummary {
    pub fn from_records(scenario: &str, prompt_rounds: usize, records: &[RoundRecord]) -> Self {
        let rounds = prompt_rounds.max(1) as f64;
        SessionSummary {
            scenario: scenario.to_string(),
            total_s: records.iter().map(|r| r.latency.total_s).sum::<f64>() / rounds,
            trans_s: records.iter().map(|r| r.latency.transmit_s).sum(),
            steps: records
                .iter()
                .map(|r| f64::from(r.steps_executed))
                .sum::<f64>()
                / rounds,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRow {
    pub scenario: String,
    pub mean_trans_s: f64,
    pub mean_total_s: f64,
    pub mean_steps: f64,
    pub n_sessions: usize,
    /// `(baseline - this) / baseline * 100`, one decimal.
    pub delta_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    pub baseline: Option<String>,
    pub rows: Vec<ScenarioRow>,
}

/// Mean after sorting, so the result does not depend on input order.
fn stable_mean(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn delta_pct(baseline: f64, value: f64) -> f64 {
    ((baseline - value) / baseline * 100.0 * 10.0).round() / 10.0
}

/// Averages per scenario; rows are ordered by scenario name.
pub fn aggregate(sessions: &[SessionSummary], baseline: Option<&str>) -> Result<MetricsReport> {
    let mut groups: BTreeMap<&str, Vec<&SessionSummary>> = BTreeMap::new();
    for s in sessions {
        groups.entry(s.scenario.as_str()).or_default().push(s);
    }
    let mut rows: Vec<ScenarioRow> = groups
        .into_iter()
        .map(|(name, group)| ScenarioRow {
            scenario: name.to_string(),
            mean_trans_s: stable_mean(group.iter().map(|s| s.trans_s).collect()),
            mean_total_s: stable_mean(group.iter().map(|s| s.total_s).collect()),
            mean_steps: stable_mean(group.iter().map(|s| s.steps).collect()),
            n_sessions: group.len(),
            delta_pct: None,
        })
        .collect();
    if let Some(base) = baseline {
        let base_total = rows
            .iter()
            .find(|r| r.scenario == base)
            .map(|r| r.mean_total_s)
            .ok_or_else(|| Error::EmptyScenario(base.to_string()))?;
        for row in &mut rows {
            row.delta_pct = Some(delta_pct(base_total, row.mean_total_s));
        }
    }
    Ok(MetricsReport {
        baseline: baseline.map(str::to_string),
        rows,
    })
}

#[derive(Serialize)]
struct JsonRow<'a> {
    scenario: &'a str,
    trans_latency_s: f64,
    total_latency_s: f64,
    delta_pct: Option<f64>,
}

#[derive(Serialize)]
struct JsonDetail<'a> {
    scenario: &'a str,
    mean_steps: f64,
    n_sessions: usize,
}

#[derive(Serialize)]
struct JsonReport<'a> {
    baseline: Option<&'a str>,
    rows: Vec<JsonRow<'a>>,
    details: Vec<JsonDetail<'a>>,
}

impl MetricsReport {
    pub fn row(&self, scenario: &str) -> Option<&ScenarioRow> {
        self.rows.iter().find(|r| r.scenario == scenario)
    }

    /// Machine-readable mirror of [`MetricsReport::to_table`].
    pub fn to_json(&self) -> String {
        let report = JsonReport {
            baseline: self.baseline.as_deref(),
            rows: self
                .rows
                .iter()
                .map(|r| JsonRow {
                    scenario: &r.scenario,
                    trans_latency_s: r.mean_trans_s,
                    total_latency_s: r.mean_total_s,
                    delta_pct: r.delta_pct,
                })
                .collect(),
            details: self
                .rows
                .iter()
                .map(|r| JsonDetail {
                    scenario: &r.scenario,
                    mean_steps: r.mean_steps,
                    n_sessions: r.n_sessions,
                })
                .collect(),
        };
        let mut out = serde_json::to_string_pretty(&report).expect("report serializes");
        out.push('\n');
        out
    }

    /// Aligned text table. Scenarios without a hand-off show `-` for
    /// transmission.
    pub fn to_table(&self) -> String {
        let headers = [
            "scenario",
            "trans_latency_s",
            "total_latency_s",
            "delta_pct",
        ];
        let cells: Vec<[String; 4]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.scenario.clone(),
                    if r.mean_trans_s > 0.0 {
                        format!("{:.2}", r.mean_trans_s)
                    } else {
                        "-".into()
                    },
                    format!("{:.2}", r.mean_total_s),
                    r.delta_pct.map_or("-".into(), |d| format!("{d:.1}")),
                ]
            })
            .collect();
        let mut widths = headers.map(str::len);
        for row in &cells {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.len());
            }
        }
        let mut out = String::new();
        let line = |out: &mut String, row: [&str; 4]| {
            let _ = write!(out, "{:<w0$}", row[0], w0 = widths[0]);
            for (c, w) in row[1..].iter().zip(&widths[1..]) {
                let _ = write!(out, "  {c:>w$}");
            }
            out.push('\n');
        };
        line(&mut out, headers);
        for row in &cells {
            line(&mut out, [&row[0], &row[1], &row[2], &row[3]]);
        }
        out
    }
}
