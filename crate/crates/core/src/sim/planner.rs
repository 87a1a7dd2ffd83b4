use std::time::Instant;

use nalgebra::{DVector, Vector3};

use super::{PlannerKind, SimParams};
use crate::fields::{select_target, velocity_targets, FieldParams, PositionField, VelocityTargets};
use crate::geometry::{gamma_from, object_distance_stack_from, CollisionPairSet, SdfObject};
use crate::kinematics::{forward_kinematics, JointConfig, RobotModel};
use crate::pathopt::{PathOptimizer, PathProblem, PathSolution};
use crate::tracker::{Tracker, TrackerOutput};

/// Everything one planning tick produced.
#[derive(Debug, Clone)]
pub struct PlanTick {
    pub qdot: DVector<f64>,
    pub targets: VelocityTargets,
    /// `None` when the tick was aborted and the previous command reused.
    pub output: Option<TrackerOutput>,
    pub paths: Vec<PathSolution>,
    pub error: Option<String>,
    /// Wall-clock duration of the tick (s).
    pub wall_time: f64,
}

/// Planning pipeline: target selection, fingertip paths, velocity fields
/// and the tracking QP. Keeps warm-start state between ticks.
#[derive(Debug, Clone)]
pub struct Planner {
    pub kind: PlannerKind,
    fields: FieldParams,
    optimizers: Vec<PathOptimizer>,
    tracker: Tracker,
    pairs: CollisionPairSet,
    /// Radius of the collision sphere at each fingertip, added to path
    /// clearance so planned paths are ones the fingertip sphere can follow.
    tip_radius: Vec<f64>,
    last_qdot: DVector<f64>,
}

/// Radius of the sphere closest to each fingertip frame on its link.
fn fingertip_radii(model: &RobotModel) -> Vec<f64> {
    model
        .fingertips
        .iter()
        .map(|tip| {
            model
                .spheres
                .iter()
                .filter(|s| s.joint == Some(tip.joint))
                .min_by(|a, b| {
                    let da = (a.center - tip.offset.translation.vector).norm();
                    let db = (b.center - tip.offset.translation.vector).norm();
                    da.total_cmp(&db)
                })
                .map_or(0.0, |s| s.radius)
        })
        .collect()
}

impl Planner {
    pub fn new(model: &RobotModel, objects: &[SdfObject], params: &SimParams) -> Self {
        Planner {
            kind: params.planner,
            fields: params.fields.clone(),
            optimizers: (0..model.fingertip_count())
                .map(|_| PathOptimizer::new(params.path))
                .collect(),
            tracker: Tracker::new(params.tracker),
            pairs: CollisionPairSet::for_scene(model, objects, params.tracker.self_margin),
            tip_radius: fingertip_radii(model),
            last_qdot: DVector::zeros(model.dof()),
        }
    }

    pub fn pairs(&self) -> &CollisionPairSet {
        &self.pairs
    }

    /// Plans one tick at `q` against the object snapshot `objects`.
    /// `candidates` are world-frame fingertip target sets.
    pub fn tick(
        &mut self,
        model: &RobotModel,
        q: &JointConfig,
        objects: &[SdfObject],
        candidates: &[Vec<Vector3<f64>>],
    ) -> PlanTick {
        let started = Instant::now();
        let m = model.fingertip_count();
        let n_gr = model.gripper_joints.len();
        let mut tick = PlanTick {
            qdot: self.last_qdot.clone(),
            targets: VelocityTargets::zero(m, n_gr),
            output: None,
            paths: Vec::new(),
            error: None,
            wall_time: 0.0,
        };
        let kin = match forward_kinematics(model, q) {
            Ok(k) => k,
            Err(e) => {
                tick.error = Some(e.to_string());
                tick.wall_time = started.elapsed().as_secs_f64();
                return tick;
            }
        };
        let x: Vec<Vector3<f64>> = kin.fingertips.iter().map(|t| t.position).collect();
        let selected = match select_target(&x, candidates, self.fields.w) {
            Ok(i) => i,
            Err(e) => {
                tick.error = Some(e.to_string());
                tick.wall_time = started.elapsed().as_secs_f64();
                return tick;
            }
        };
        let x_star = &candidates[selected];

        if self.kind == PlannerKind::Ours {
            for (i, opt) in self.optimizers.iter_mut().enumerate() {
                let inflated: Vec<SdfObject> = objects
                    .iter()
                    .map(|o| o.clone().with_margin(o.margin + self.tip_radius[i]))
                    .collect();
                let problem = PathProblem {
                    start: x[i],
                    goal: x_star[i],
                    objects: &inflated,
                };
                tick.paths.push(opt.plan(&problem));
            }
        }
        let field = match self.kind {
            PlannerKind::Ours => PositionField::Paths(&tick.paths),
            PlannerKind::Linear => PositionField::Linear,
        };
        let q_gr = DVector::from_iterator(n_gr, model.gripper_joints.iter().map(|&j| q.0[j]));
        tick.targets = velocity_targets(
            &kin.fingertips,
            x_star,
            selected,
            field,
            &q_gr,
            &self.fields,
        );

        let gamma = gamma_from(model, &kin, &self.pairs, objects);
        let stack = object_distance_stack_from(model, &kin, objects);
        match self
            .tracker
            .track(model, &kin, q, &tick.targets, &gamma, &stack)
        {
            Ok(out) => {
                tick.qdot = out.qdot.clone();
                self.last_qdot = out.qdot.clone();
                tick.output = Some(out);
            }
            Err(e) => {
                log::warn!("tracking tick aborted, reusing previous command: {e}");
                tick.error = Some(e.to_string());
            }
        }
        tick.wall_time = started.elapsed().as_secs_f64();
        tick
    }
}
