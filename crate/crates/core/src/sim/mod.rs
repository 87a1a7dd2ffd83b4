//! Kinematic closed-loop simulation: a control loop integrating joint
//! velocities and a slower planning loop producing them.

mod episode;
mod planner;
mod realtime;
mod summary;
mod trace;

use nalgebra::{Isometry3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::FieldParams;
use crate::geometry::{Role, SdfObject};
use crate::kinematics::{JointConfig, RobotModel};
use crate::pathopt::PathParams;
use crate::tracker::TrackerParams;

pub use episode::{run_episode, SimState};
pub use planner::{PlanTick, Planner};
pub use realtime::run_episode_realtime;
pub(crate) use summary::percentile;
pub use summary::{evaluate_trace, Outcome, Summary};
pub use trace::{EventKind, PathDump, StepRecord, TickRecord, Trace, TraceEvent};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlannerKind {
    /// Optimized fingertip paths.
    Ours,
    /// Proportional fingertip field toward the targets.
    Linear,
}

impl std::fmt::Display for PlannerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PlannerKind::Ours => "ours",
            PlannerKind::Linear => "linear",
        })
    }
}

impl std::str::FromStr for PlannerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ours" => Ok(PlannerKind::Ours),
            "linear" => Ok(PlannerKind::Linear),
            _ => Err(Error::Config(format!(
                "unknown planner {s:?} (expected ours or linear)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DisturbanceKind {
    ObjectTeleport {
        object: String,
        pose: Isometry3<f64>,
    },
    /// World-frame twist about the object origin, held for `duration` s.
    ObjectVelocity {
        object: String,
        linear: Vector3<f64>,
        angular: Vector3<f64>,
        duration: f64,
    },
    /// Joint-velocity offset added to the command for `duration` s.
    RobotPush {
        qdot_offset: Vec<f64>,
        duration: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceEvent {
    pub time: f64,
    pub kind: DisturbanceKind,
}

impl DisturbanceEvent {
    pub fn validate(&self, objects: &[SdfObject], dof: usize) -> Result<()> {
        if !(self.time >= 0.0) {
            return Err(Error::Scenario(format!(
                "disturbance time {} is negative",
                self.time
            )));
        }
        let known = |id: &str| {
            if objects.iter().any(|o| o.id == id) {
                Ok(())
            } else {
                Err(Error::Scenario(format!(
                    "disturbance refers to unknown object {id:?}"
                )))
            }
        };
        match &self.kind {
            DisturbanceKind::ObjectTeleport { object, .. } => known(object),
            DisturbanceKind::ObjectVelocity {
                object, duration, ..
            } => {
                known(object)?;
                if !(*duration > 0.0) {
                    return Err(Error::Scenario(
                        "object velocity duration must be positive".into(),
                    ));
                }
                Ok(())
            }
            DisturbanceKind::RobotPush {
                qdot_offset,
                duration,
            } => {
                if qdot_offset.len() != dof {
                    return Err(Error::Dimension {
                        expected: dof,
                        got: qdot_offset.len(),
                    });
                }
                if !(*duration > 0.0) {
                    return Err(Error::Scenario("push duration must be positive".into()));
                }
                Ok(())
            }
        }
    }
}

/// Objects, grasp candidates and the initial robot state of one episode.
#[derive(Debug, Clone)]
pub struct Scene {
    pub name: String,
    pub objects: Vec<SdfObject>,
    /// Candidate fingertip positions in the target object's frame, one
    /// position per fingertip.
    pub candidates: Vec<Vec<Vector3<f64>>>,
    pub initial_q: JointConfig,
    pub disturbances: Vec<DisturbanceEvent>,
}

impl Scene {
    pub fn target_index(&self) -> Result<usize> {
        let mut targets = self
            .objects
            .iter()
            .enumerate()
            .filter(|(_, o)| o.role == Role::Target);
        match (targets.next(), targets.next()) {
            (Some((i, _)), None) => Ok(i),
            _ => Err(Error::Scenario(format!(
                "scene {:?} must have exactly one target object",
                self.name
            ))),
        }
    }

    pub fn validate(&self, model: &RobotModel) -> Result<()> {
        self.target_index()?;
        if self.initial_q.len() != model.dof() {
            return Err(Error::Dimension {
                expected: model.dof(),
                got: self.initial_q.len(),
            });
        }
        if self.candidates.is_empty() {
            return Err(Error::Scenario(format!(
                "scene {:?} has no candidate grasps",
                self.name
            )));
        }
        for c in &self.candidates {
            if c.len() != model.fingertip_count() {
                return Err(Error::Dimension {
                    expected: model.fingertip_count(),
                    got: c.len(),
                });
            }
        }
        let mut ids: Vec<&str> = self.objects.iter().map(|o| o.id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Scenario("object ids must be unique".into()));
        }
        for obj in &self.objects {
            obj.shape.validate()?;
            if !(obj.margin > 0.0) {
                return Err(Error::Scenario(format!(
                    "object {:?} needs a positive margin",
                    obj.id
                )));
            }
        }
        for ev in &self.disturbances {
            ev.validate(&self.objects, model.dof())?;
        }
        Ok(())
    }

    /// Candidates mapped to the world by the target's current pose in
    /// `objects`. With two fingertips both finger assignments are listed:
    /// candidate `k` in order, then all swapped.
    pub fn world_candidates(&self, objects: &[SdfObject]) -> Result<Vec<Vec<Vector3<f64>>>> {
        let pose = objects[self.target_index()?].pose;
        let mut out: Vec<Vec<Vector3<f64>>> = self
            .candidates
            .iter()
            .map(|c| {
                c.iter()
                    .map(|p| pose.transform_point(&(*p).into()).coords)
                    .collect()
            })
            .collect();
        if out.first().is_some_and(|c| c.len() == 2) {
            let swapped: Vec<_> = out.iter().map(|c| vec![c[1], c[0]]).collect();
            out.extend(swapped);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimParams {
    pub planner: PlannerKind,
    pub fields: FieldParams,
    pub tracker: TrackerParams,
    pub path: PathParams,
    pub control_hz: f64,
    pub planning_hz: f64,
    pub duration_limit: f64,
    /// Every fingertip must be this close to its target (m).
    pub success_threshold: f64,
    /// ...for this long (s).
    pub hold_time: f64,
    /// The close trigger is disarmed before this time (s).
    pub success_after: f64,
    pub record_paths: bool,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            planner: PlannerKind::Ours,
            fields: FieldParams::default(),
            tracker: TrackerParams::default(),
            path: PathParams::default(),
            control_hz: 500.0,
            planning_hz: 100.0,
            duration_limit: 20.0,
            success_threshold: 0.01,
            hold_time: 0.1,
            success_after: 0.0,
            record_paths: false,
        }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<()> {
        self.fields.validate()?;
        self.tracker.validate()?;
        self.path.validate()?;
        if !(self.control_hz > 0.0 && self.planning_hz > 0.0 && self.planning_hz <= self.control_hz)
        {
            return Err(Error::Config(
                "rates must be positive with planning no faster than control".into(),
            ));
        }
        let ratio = self.control_hz / self.planning_hz;
        if (ratio - ratio.round()).abs() > 1e-9 {
            return Err(Error::Config(
                "control rate must be an integer multiple of the planning rate".into(),
            ));
        }
        if !(self.duration_limit > 0.0 && self.success_threshold > 0.0 && self.hold_time >= 0.0) {
            return Err(Error::Config(
                "duration, threshold and hold time must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn control_dt(&self) -> f64 {
        1.0 / self.control_hz
    }

    pub fn steps_per_tick(&self) -> usize {
        (self.control_hz / self.planning_hz).round() as usize
    }
}
