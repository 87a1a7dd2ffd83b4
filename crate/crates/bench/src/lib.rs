//! Shared fixtures for the criterion benchmarks.

use nalgebra::{DVector, Vector3};
use vfgrasp::scenes;
use vfgrasp::sim::{run_episode, Scene, SimParams};
use vfgrasp::{builtin_arm_hand, JointConfig, RobotModel};

/// A scene frozen at some instant of an episode: robot state, object
/// snapshot and world-frame candidate sets.
pub struct Frozen {
    pub model: RobotModel,
    pub scene: Scene,
    pub params: SimParams,
    pub q: JointConfig,
    pub candidates: Vec<Vec<Vector3<f64>>>,
}

/// The planning-rate scene (bowl with two obstacles) at time `t` of a
/// deterministic episode. Mid-approach instants exercise the path
/// optimizer hardest.
pub fn bench_frozen(t: f64) -> Frozen {
    let model = builtin_arm_hand();
    let scene = scenes::bench_scene();
    let mut params = SimParams::default();
    params.duration_limit = t.max(0.01);
    let trace = run_episode(&scene, &model, &params).expect("bench scene runs");
    let q = trace
        .steps
        .iter()
        .rev()
        .find(|s| s.t <= t)
        .map(|s| JointConfig(DVector::from_vec(s.q.clone())))
        .unwrap_or_else(|| scene.initial_q.clone());
    let candidates = scene
        .world_candidates(&scene.objects)
        .expect("bench scene has a target");
    Frozen {
        model,
        scene,
        params,
        q,
        candidates,
    }
}
