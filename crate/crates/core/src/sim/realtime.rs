use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use arc_swap::ArcSwapOption;
use nalgebra::DVector;

use super::episode::{measure, new_trace, record_tick, CloseTrigger, SimState};
use super::planner::{PlanTick, Planner};
use super::trace::{EventKind, Trace};
use super::{Scene, SimParams};
use crate::error::{Error, Result};
use crate::geometry::SdfObject;
use crate::kinematics::{JointConfig, RobotModel};

/// What the integrator publishes for the planner. Built whole and swapped
/// in, so the planner never sees q from one step with poses from another.
struct Snapshot {
    t: f64,
    q: JointConfig,
    objects: Vec<SdfObject>,
}

struct Command {
    t: f64,
    tick: PlanTick,
}

fn sleep_until(deadline: Instant) {
    let now = Instant::now();
    if deadline > now {
        thread::sleep(deadline - now);
    }
}

/// Two-thread episode in wall-clock time: the integrator runs at
/// `control_hz`, the planner at `planning_hz`, exchanging last-value-wins
/// snapshots. A planning tick that overruns its period skips the missed
/// deadlines and is logged as an overrun.
pub fn run_episode_realtime(
    scene: &Scene,
    model: &RobotModel,
    params: &SimParams,
) -> Result<Trace> {
    params.validate()?;
    scene.validate(model)?;
    let dt = params.control_dt();
    let period = 1.0 / params.planning_hz;
    let max_steps = (params.duration_limit / dt).round() as usize;

    let mut state = SimState::new(scene, dt);
    let snapshot = ArcSwapOption::from(Some(Arc::new(Snapshot {
        t: 0.0,
        q: state.q.clone(),
        objects: state.objects.clone(),
    })));
    let command: ArcSwapOption<Command> = ArcSwapOption::empty();
    let stop = AtomicBool::new(false);
    let mut planner = Planner::new(model, &state.objects, params);
    let pairs = planner.pairs().clone();

    let (trace, planner_log) = thread::scope(|s| -> Result<(Trace, Vec<(f64, bool)>)> {
        let planner_thread = s.spawn(|| -> Result<Vec<(f64, bool)>> {
            let mut log = Vec::new();
            let start = Instant::now();
            let mut k: u64 = 0;
            while !stop.load(Ordering::Acquire) {
                let snap = snapshot.load_full().expect("snapshot is always published");
                let candidates = scene.world_candidates(&snap.objects)?;
                let tick = planner.tick(model, &snap.q, &snap.objects, &candidates);
                let overrun = tick.wall_time > period;
                log.push((snap.t, overrun));
                command.store(Some(Arc::new(Command { t: snap.t, tick })));
                // Next deadline strictly in the future.
                let elapsed = start.elapsed().as_secs_f64();
                k = k.max((elapsed / period).floor() as u64) + 1;
                sleep_until(start + Duration::from_secs_f64(k as f64 * period));
            }
            Ok(log)
        });

        let mut trace = new_trace(scene, params);
        let mut events = scene.disturbances.clone();
        events.sort_by(|a, b| a.time.total_cmp(&b.time));
        let mut next_event = 0;
        let mut cmd = DVector::zeros(model.dof());
        let (mut selected, mut alpha, mut beta) = (0, 0.0, 0.0);
        let mut last_tick_t = f64::NEG_INFINITY;
        let mut trigger = CloseTrigger::default();
        let start = Instant::now();
        let mut failure = None;
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
            if let Some(c) = command.load_full() {
                if c.t > last_tick_t {
                    last_tick_t = c.t;
                    record_tick(&mut trace, c.t, &c.tick, params.record_paths);
                    cmd = c.tick.qdot.clone();
                    selected = c.tick.targets.selected;
                    alpha = c.tick.targets.alpha;
                    beta = c.tick.targets.beta;
                }
            }
            let rec = match measure(
                model,
                scene,
                &state.q,
                &state.objects,
                &pairs,
                selected,
                t,
                alpha,
                beta,
            ) {
                Ok(r) => r,
                Err(e) => {
                    failure = Some(e);
                    break;
                }
            };
            let collided = rec.min_gamma < 0.0 || rec.min_object < 0.0;
            let done = trigger.update(&rec, params);
            trace.steps.push(rec);
            if collided {
                trace.push_event(t, EventKind::Collision, "clearance below zero");
                break;
            }
            if done {
                trace.push_event(t, EventKind::Success, "close trigger");
                break;
            }
            if k == max_steps {
                trace.push_event(t, EventKind::Timeout, "duration limit");
                break;
            }
            state.step(&cmd);
            snapshot.store(Some(Arc::new(Snapshot {
                t: t + dt,
                q: state.q.clone(),
                objects: state.objects.clone(),
            })));
            sleep_until(start + Duration::from_secs_f64((k + 1) as f64 * dt));
        }
        stop.store(true, Ordering::Release);
        let log = planner_thread
            .join()
            .map_err(|_| Error::Config("planner thread panicked".into()))??;
        match failure {
            Some(e) => Err(e),
            None => Ok((trace, log)),
        }
    })?;

    let mut trace = trace;
    for (t, overrun) in planner_log {
        if overrun {
            trace.push_event(t, EventKind::Overrun, "planning tick exceeded its period");
        }
    }
    trace.events.sort_by(|a, b| a.t.total_cmp(&b.t));
    Ok(trace)
}
