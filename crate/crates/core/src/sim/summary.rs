use serde::{Deserialize, Serialize};

use super::trace::{EventKind, Trace};
use crate::tracker::TrackStatus;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    Timeout,
    Collision,
}

/// Episode aggregate, recomputed from the per-step records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub scene: String,
    pub planner: String,
    pub success: bool,
    pub outcome: Outcome,
    /// Time the close trigger fired (end of the hold window).
    pub success_time: Option<f64>,
    pub duration: f64,
    pub terminal_error: f64,
    pub terminal_center_error: f64,
    pub min_gamma: f64,
    pub min_object: f64,
    pub ticks: usize,
    pub mean_tick_ms: f64,
    pub p95_tick_ms: f64,
    pub max_tick_ms: f64,
    pub overruns: usize,
    pub stalls: usize,
    /// Largest linear-row residual over ticks whose QP was solved.
    pub max_constraint_residual: f64,
}

/// Nearest-rank percentile of an unsorted sample; 0 for an empty one.
pub(crate) fn percentile(values: &[f64], p: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((p / 100.0) * v.len() as f64).ceil().max(1.0) as usize;
    v[rank.min(v.len()) - 1]
}

pub fn evaluate_trace(trace: &Trace) -> Summary {
    let mut min_gamma = f64::INFINITY;
    let mut min_object = f64::INFINITY;
    let mut collided = false;
    let mut success_time = None;
    let mut band_start: Option<f64> = None;
    // Half a step of slack so sums of dt compare cleanly against hold_time.
    let slack = 0.5 * trace.control_dt;
    for s in &trace.steps {
        min_gamma = min_gamma.min(s.min_gamma);
        min_object = min_object.min(s.min_object);
        if s.min_gamma < 0.0 || s.min_object < 0.0 {
            collided = true;
            break;
        }
        if s.error < trace.success_threshold && s.t + slack >= trace.success_after {
            let start = *band_start.get_or_insert(s.t);
            if s.t - start + slack >= trace.hold_time {
                success_time = Some(s.t);
                break;
            }
        } else {
            band_start = None;
        }
    }
    let outcome = if collided {
        Outcome::Collision
    } else if success_time.is_some() {
        Outcome::Success
    } else {
        Outcome::Timeout
    };
    let last = trace.steps.last();
    let ms: Vec<f64> = trace.tick_wall_times.iter().map(|t| t * 1e3).collect();
    let mean_tick_ms = if ms.is_empty() {
        0.0
    } else {
        ms.iter().sum::<f64>() / ms.len() as f64
    };
    Summary {
        scene: trace.scene.clone(),
        planner: trace.planner.clone(),
        success: outcome == Outcome::Success,
        outcome,
        success_time,
        duration: last.map_or(0.0, |s| s.t),
        terminal_error: last.map_or(0.0, |s| s.error),
        terminal_center_error: last.map_or(0.0, |s| s.center_error),
        min_gamma,
        min_object,
        ticks: trace.ticks.len(),
        mean_tick_ms,
        p95_tick_ms: percentile(&ms, 95.0),
        max_tick_ms: ms.iter().copied().fold(0.0, f64::max),
        overruns: trace
            .tick_wall_times
            .iter()
            .filter(|&&w| w > trace.planning_period)
            .count()
            .max(
                trace
                    .events
                    .iter()
                    .filter(|e| e.kind == EventKind::Overrun)
                    .count(),
            ),
        stalls: trace
            .ticks
            .iter()
            .filter(|t| t.status == Some(TrackStatus::Stalled))
            .count(),
        max_constraint_residual: trace
            .ticks
            .iter()
            .filter(|t| t.status == Some(TrackStatus::Solved))
            .map(|t| t.constraint_residual)
            .fold(0.0, f64::max),
    }
}
