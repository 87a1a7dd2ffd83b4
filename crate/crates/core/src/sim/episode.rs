use nalgebra::{DVector, Translation3, UnitQuaternion, Vector3};

use super::planner::{PlanTick, Planner};
use super::trace::{EventKind, PathDump, StepRecord, TickRecord, Trace};
use super::{DisturbanceEvent, DisturbanceKind, Scene, SimParams};
use crate::error::{Error, Result};
use crate::geometry::{min_clearances, CollisionPairSet, SdfObject};
use crate::kinematics::{forward_kinematics, JointConfig, RobotModel};
use crate::tracker::TrackStatus;

#[derive(Debug, Clone, PartialEq)]
struct Push {
    offset: DVector<f64>,
    steps_left: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct Motion {
    object: usize,
    linear: Vector3<f64>,
    angular: Vector3<f64>,
    steps_left: usize,
}

/// Integrated robot and object state.
#[derive(Debug, Clone)]
pub struct SimState {
    pub q: JointConfig,
    pub objects: Vec<SdfObject>,
    dt: f64,
    pushes: Vec<Push>,
    motions: Vec<Motion>,
}

fn duration_steps(duration: f64, dt: f64) -> usize {
    (duration / dt).round().max(1.0) as usize
}

impl SimState {
    pub fn new(scene: &Scene, dt: f64) -> Self {
        SimState {
            q: scene.initial_q.clone(),
            objects: scene.objects.clone(),
            dt,
            pushes: Vec::new(),
            motions: Vec::new(),
        }
    }

    fn object_index(&self, id: &str) -> Result<usize> {
        self.objects
            .iter()
            .position(|o| o.id == id)
            .ok_or_else(|| Error::Scenario(format!("unknown object {id:?}")))
    }

    /// Starts a disturbance. Timed effects last `round(duration / dt)`
    /// control steps.
    pub fn apply_disturbance(&mut self, event: &DisturbanceEvent) -> Result<()> {
        match &event.kind {
            DisturbanceKind::ObjectTeleport { object, pose } => {
                let i = self.object_index(object)?;
                self.objects[i].pose = *pose;
            }
            DisturbanceKind::ObjectVelocity {
                object,
                linear,
                angular,
                duration,
            } => {
                let i = self.object_index(object)?;
                self.motions.push(Motion {
                    object: i,
                    linear: *linear,
                    angular: *angular,
                    steps_left: duration_steps(*duration, self.dt),
                });
            }
            DisturbanceKind::RobotPush {
                qdot_offset,
                duration,
            } => {
                if qdot_offset.len() != self.q.len() {
                    return Err(Error::Dimension {
                        expected: self.q.len(),
                        got: qdot_offset.len(),
                    });
                }
                self.pushes.push(Push {
                    offset: DVector::from_column_slice(qdot_offset),
                    steps_left: duration_steps(*duration, self.dt),
                });
            }
        }
        Ok(())
    }

    /// One control step: `q += (qdot + pushes) dt`, active object twists
    /// move their objects.
    pub fn step(&mut self, qdot: &DVector<f64>) {
        let mut v = qdot.clone();
        for p in &mut self.pushes {
            v += &p.offset;
            p.steps_left -= 1;
        }
        self.pushes.retain(|p| p.steps_left > 0);
        self.q.0 += v * self.dt;
        for m in &mut self.motions {
            let pose = &mut self.objects[m.object].pose;
            pose.translation = Translation3::from(pose.translation.vector + m.linear * self.dt);
            pose.rotation = UnitQuaternion::from_scaled_axis(m.angular * self.dt) * pose.rotation;
            m.steps_left -= 1;
        }
        self.motions.retain(|m| m.steps_left > 0);
    }

    pub fn is_disturbed(&self) -> bool {
        !self.pushes.is_empty() || !self.motions.is_empty()
    }
}

pub(super) fn new_trace(scene: &Scene, params: &SimParams) -> Trace {
    Trace {
        scene: scene.name.clone(),
        planner: params.planner.to_string(),
        control_dt: params.control_dt(),
        planning_period: 1.0 / params.planning_hz,
        success_threshold: params.success_threshold,
        hold_time: params.hold_time,
        success_after: params.success_after,
        duration_limit: params.duration_limit,
        steps: Vec::new(),
        ticks: Vec::new(),
        tick_wall_times: Vec::new(),
        events: Vec::new(),
        paths: Vec::new(),
    }
}

pub(super) fn record_tick(trace: &mut Trace, t: f64, tick: &PlanTick, record_paths: bool) {
    let out = tick.output.as_ref();
    trace.ticks.push(TickRecord {
        t,
        status: out.map(|o| o.status),
        qp_status: out.map(|o| o.qp_status),
        iterations: out.map_or(0, |o| o.iterations),
        rows: out.map_or(0, |o| o.rows),
        active_rows: out.map_or(0, |o| o.active_rows.len()),
        constraint_residual: out.map_or(0.0, |o| o.constraint_residual),
        cost: out.map(|o| o.cost).unwrap_or_default(),
        backoffs: out.map_or(0, |o| o.backoffs),
        path_violation: tick.paths.iter().map(|p| p.max_violation).collect(),
        selected: tick.targets.selected,
        g: tick.targets.g,
        error: tick.error.clone(),
    });
    trace.tick_wall_times.push(tick.wall_time);
    if let Some(e) = &tick.error {
        trace.push_event(t, EventKind::TickError, e.clone());
    }
    if out.is_some_and(|o| o.status == TrackStatus::Stalled) {
        trace.push_event(t, EventKind::Stall, "tracking QP had no safe solution");
    }
    if record_paths {
        for (i, p) in tick.paths.iter().enumerate() {
            trace.paths.push(PathDump {
                t,
                fingertip: i,
                waypoints: p.waypoints.clone(),
            });
        }
    }
}

/// Measures the current state against the selected candidate.
pub(super) fn measure(
    model: &RobotModel,
    scene: &Scene,
    state_q: &JointConfig,
    objects: &[SdfObject],
    pairs: &CollisionPairSet,
    selected: usize,
    t: f64,
    alpha: f64,
    beta: f64,
) -> Result<StepRecord> {
    let kin = forward_kinematics(model, state_q)?;
    let candidates = scene.world_candidates(objects)?;
    let x_star = candidates[selected.min(candidates.len() - 1)].clone();
    let tips: Vec<Vector3<f64>> = kin.fingertips.iter().map(|f| f.position).collect();
    let error = tips
        .iter()
        .zip(&x_star)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    let m = tips.len() as f64;
    let center = tips.iter().sum::<Vector3<f64>>() / m;
    let center_star = x_star.iter().sum::<Vector3<f64>>() / m;
    let (min_gamma, min_object) = min_clearances(model, &kin, pairs, objects);
    Ok(StepRecord {
        t,
        q: state_q.0.iter().copied().collect(),
        tips,
        x_star,
        selected,
        error,
        center_error: (center - center_star).norm(),
        min_gamma,
        min_object,
        alpha,
        beta,
    })
}

/// Tracks the close trigger: every fingertip inside the band for the hold
/// time, after the arming time.
#[derive(Debug, Clone, Default)]
pub(super) struct CloseTrigger {
    band_start: Option<f64>,
}

impl CloseTrigger {
    pub fn update(&mut self, rec: &StepRecord, params: &SimParams) -> bool {
        let slack = 0.5 * params.control_dt();
        if rec.error < params.success_threshold && rec.t + slack >= params.success_after {
            let start = *self.band_start.get_or_insert(rec.t);
            rec.t - start + slack >= params.hold_time
        } else {
            self.band_start = None;
            false
        }
    }
}

/// Single-threaded episode: the planner runs synchronously every
/// `control_hz / planning_hz` control steps. Bit-for-bit reproducible
/// except for recorded wall times.
pub fn run_episode(scene: &Scene, model: &RobotModel, params: &SimParams) -> Result<Trace> {
    params.validate()?;
    scene.validate(model)?;
    let dt = params.control_dt();
    let ratio = params.steps_per_tick();
    let max_steps = (params.duration_limit / dt).round() as usize;

    let mut state = SimState::new(scene, dt);
    let mut planner = Planner::new(model, &state.objects, params);
    let mut events = scene.disturbances.clone();
    events.sort_by(|a, b| a.time.total_cmp(&b.time));
    let mut next_event = 0;
    let mut trace = new_trace(scene, params);
    let mut cmd = DVector::zeros(model.dof());
    let (mut selected, mut alpha, mut beta) = (0, 0.0, 0.0);
    let mut trigger = CloseTrigger::default();

    for k in 0..=max_steps {
        let t = k as f64 * dt;
        while next_event < events.len() && events[next_event].time <= t + 0.5 * dt {
            state.apply_disturbance(&events[next_event])?;
            trace.push_event(
                t,
                EventKind::Disturbance,
                format!("{:?}", events[next_event].kind),
            );
            next_event += 1;
        }
        if k % ratio == 0 {
            let candidates = scene.world_candidates(&state.objects)?;
            let tick = planner.tick(model, &state.q, &state.objects, &candidates);
            record_tick(&mut trace, t, &tick, params.record_paths);
            cmd = tick.qdot;
            selected = tick.targets.selected;
            alpha = tick.targets.alpha;
            beta = tick.targets.beta;
        }
        let rec = measure(
            model,
            scene,
            &state.q,
            &state.objects,
            planner.pairs(),
            selected,
            t,
            alpha,
            beta,
        )?;
        let collided = rec.min_gamma < 0.0 || rec.min_object < 0.0;
        let done = trigger.update(&rec, params);
        let detail = format!(
            "error {:.4} m, min gamma {:.4} m, min object {:.4} m",
            rec.error, rec.min_gamma, rec.min_object
        );
        trace.steps.push(rec);
        if collided {
            trace.push_event(t, EventKind::Collision, detail);
            break;
        }
        if done {
            trace.push_event(t, EventKind::Success, detail);
            break;
        }
        if k == max_steps {
            trace.push_event(t, EventKind::Timeout, detail);
            break;
        }
        state.step(&cmd);
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Role, Shape};
    use crate::kinematics::builtin_arm_hand;
    use nalgebra::Isometry3;

    fn tiny_scene() -> Scene {
        let obj = SdfObject::new(
            "ball",
            Shape::Superellipsoid {
                a: 0.03,
                b: 0.03,
                c: 0.03,
                e1: 1.0,
                e2: 1.0,
            },
            Isometry3::translation(0.5, 0.0, 0.3),
            Role::Target,
        )
        .unwrap();
        Scene {
            name: "tiny".into(),
            objects: vec![obj],
            candidates: vec![vec![
                Vector3::new(0.0, 0.04, 0.0),
                Vector3::new(0.0, -0.04, 0.0),
            ]],
            initial_q: JointConfig::zeros(15),
            disturbances: Vec::new(),
        }
    }

    #[test]
    fn push_integrates_exactly() {
        let scene = tiny_scene();
        let dt = 1.0 / 500.0;
        let mut state = SimState::new(&scene, dt);
        let mut offset = vec![0.0; 15];
        offset[2] = 0.5;
        state
            .apply_disturbance(&DisturbanceEvent {
                time: 0.0,
                kind: DisturbanceKind::RobotPush {
                    qdot_offset: offset,
                    duration: 0.2,
                },
            })
            .unwrap();
        let zero = DVector::zeros(15);
        for _ in 0..150 {
            state.step(&zero);
        }
        assert!((state.q.0[2] - 0.2 * 0.5).abs() < 1e-12);
        assert!(!state.is_disturbed());
    }

    #[test]
    fn teleport_to_same_pose_changes_nothing() {
        let scene = tiny_scene();
        let mut state = SimState::new(&scene, 0.002);
        let before = state.objects[0].pose;
        state
            .apply_disturbance(&DisturbanceEvent {
                time: 1.0,
                kind: DisturbanceKind::ObjectTeleport {
                    object: "ball".into(),
                    pose: before,
                },
            })
            .unwrap();
        assert_eq!(state.objects[0].pose, before);
        let bad = DisturbanceEvent {
            time: 1.0,
            kind: DisturbanceKind::ObjectTeleport {
                object: "nope".into(),
                pose: before,
            },
        };
        assert!(state.apply_disturbance(&bad).is_err());
    }

    #[test]
    fn episode_is_deterministic() {
        let scene = tiny_scene();
        let model = builtin_arm_hand();
        let params = SimParams {
            duration_limit: 0.2,
            ..SimParams::default()
        };
        let a = run_episode(&scene, &model, &params).unwrap();
        let b = run_episode(&scene, &model, &params).unwrap();
        assert_eq!(a.steps, b.steps);
        assert_eq!(a.ticks, b.ticks);
        assert_eq!(a.events, b.events);
        assert_eq!(a.ticks.len(), 21);
        assert!(a.terminal().is_some());
    }
}
