use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qp::QpStatus;
use crate::tracker::{CostBreakdown, TrackStatus};

/// State after one control step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: f64,
    pub q: Vec<f64>,
    pub tips: Vec<Vector3<f64>>,
    pub x_star: Vec<Vector3<f64>>,
    pub selected: usize,
    /// Largest per-fingertip distance to its target (m).
    pub error: f64,
    /// Distance between the fingertip centroid and the target centroid (m).
    pub center_error: f64,
    pub min_gamma: f64,
    pub min_object: f64,
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub t: f64,
    pub status: Option<TrackStatus>,
    pub qp_status: Option<QpStatus>,
    pub iterations: usize,
    pub rows: usize,
    pub active_rows: usize,
    pub constraint_residual: f64,
    pub cost: CostBreakdown,
    pub backoffs: usize,
    pub path_violation: Vec<f64>,
    pub selected: usize,
    pub g: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Success,
    Timeout,
    Collision,
    /// The tracker returned zero velocity.
    Stall,
    Disturbance,
    /// A planning tick finished after its deadline.
    Overrun,
    TickError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub t: f64,
    pub kind: EventKind,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathDump {
    pub t: f64,
    pub fingertip: usize,
    pub waypoints: Vec<Vector3<f64>>,
}

/// Full record of one episode. Everything except `tick_wall_times` is a
/// deterministic function of the scene and parameters in single-threaded
/// mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub scene: String,
    pub planner: String,
    pub control_dt: f64,
    pub planning_period: f64,
    pub success_threshold: f64,
    pub hold_time: f64,
    pub success_after: f64,
    pub duration_limit: f64,
    pub steps: Vec<StepRecord>,
    pub ticks: Vec<TickRecord>,
    pub tick_wall_times: Vec<f64>,
    pub events: Vec<TraceEvent>,
    pub paths: Vec<PathDump>,
}

impl Trace {
    pub fn push_event(&mut self, t: f64, kind: EventKind, detail: impl Into<String>) {
        self.events.push(TraceEvent {
            t,
            kind,
            detail: detail.into(),
        });
    }

    /// The terminal event, if the episode has ended.
    pub fn terminal(&self) -> Option<&TraceEvent> {
        self.events.iter().rev().find(|e| {
            matches!(
                e.kind,
                EventKind::Success | EventKind::Timeout | EventKind::Collision
            )
        })
    }

    /// One CSV row per control step.
    pub fn write_steps_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(BufWriter::new(file));
        let dof = self.steps.first().map_or(0, |s| s.q.len());
        let tips = self.steps.first().map_or(0, |s| s.tips.len());
        let mut header = vec!["t".to_string()];
        header.extend((0..dof).map(|j| format!("q{j}")));
        for i in 0..tips {
            for c in ["x", "y", "z"] {
                header.push(format!("tip{i}_{c}"));
            }
        }
        for i in 0..tips {
            for c in ["x", "y", "z"] {
                header.push(format!("target{i}_{c}"));
            }
        }
        for h in [
            "selected",
            "error",
            "center_error",
            "min_gamma",
            "min_object",
            "alpha",
            "beta",
        ] {
            header.push(h.into());
        }
        let csv_err = |e: csv::Error| Error::parse(path, e.to_string());
        w.write_record(&header).map_err(csv_err)?;
        for s in &self.steps {
            let mut row: Vec<String> = vec![s.t.to_string()];
            row.extend(s.q.iter().map(f64::to_string));
            row.extend(
                s.tips
                    .iter()
                    .flat_map(|p| p.iter().map(f64::to_string).collect::<Vec<_>>()),
            );
            row.extend(
                s.x_star
                    .iter()
                    .flat_map(|p| p.iter().map(f64::to_string).collect::<Vec<_>>()),
            );
            row.push(s.selected.to_string());
            for v in [
                s.error,
                s.center_error,
                s.min_gamma,
                s.min_object,
                s.alpha,
                s.beta,
            ] {
                row.push(v.to_string());
            }
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_events_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.events)
            .map_err(|e| Error::parse(path, e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// One JSON object per line: tick diagnostics, then recorded paths.
    pub fn write_ticks_jsonl(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for (tick, wall) in self.ticks.iter().zip(&self.tick_wall_times) {
            let mut v =
                serde_json::to_value(tick).map_err(|e| Error::parse(path, e.to_string()))?;
            v["wall_time"] = serde_json::json!(wall);
            writeln!(w, "{v}").map_err(|e| Error::io(path, e))?;
        }
        for p in &self.paths {
            let v = serde_json::to_string(p).map_err(|e| Error::parse(path, e.to_string()))?;
            writeln!(w, "{v}").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Writes `steps.csv`, `events.json` and `ticks.jsonl` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.write_steps_csv(&dir.join("steps.csv"))?;
        self.write_events_json(&dir.join("events.json"))?;
        self.write_ticks_jsonl(&dir.join("ticks.jsonl"))
    }
}
