use nalgebra::{DMatrix, DVector, Isometry3, Translation3, Unit, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vfgrasp::fields::VelocityTargets;
use vfgrasp::geometry::DistanceStack;
use vfgrasp::kinematics::{
    fingertip_jacobians, CollisionSphere, FingertipFrame, Joint, JointLimits,
};
use vfgrasp::tracker::{build_qp, row_violation, TrackStatus, Tracker, TrackerParams};
use vfgrasp::{builtin_arm_hand, forward_kinematics, JointConfig, RobotModel};

fn unit(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0)).normalize()
}

/// Six joints: a four-link trunk with one finger joint per fingertip.
fn six_dof(rng: &mut ChaCha8Rng, qd: f64) -> RobotModel {
    let parents = [None, Some(0), Some(1), Some(2), Some(3), Some(3)];
    let joints = parents
        .iter()
        .enumerate()
        .map(|(j, &parent)| Joint {
            name: format!("j{j}"),
            parent,
            origin: Isometry3::from_parts(
                Translation3::from(unit(rng) * 0.15),
                UnitQuaternion::from_axis_angle(
                    &Unit::new_normalize(unit(rng)),
                    rng.random_range(-1.0..1.0),
                ),
            ),
            axis: Unit::new_normalize(unit(rng)),
        })
        .collect();
    let fingertips = [4, 5]
        .iter()
        .map(|&joint| FingertipFrame {
            joint,
            offset: Isometry3::translation(0.05, 0.0, 0.0),
        })
        .collect();
    let spheres = (0..6)
        .map(|j| CollisionSphere {
            joint: Some(j),
            center: Vector3::zeros(),
            radius: 0.01,
        })
        .collect();
    RobotModel::new(
        "six".into(),
        joints,
        fingertips,
        vec![4, 5],
        spheres,
        JointLimits::symmetric(6, 3.0, qd),
        None,
    )
    .unwrap()
}

/// Hessian `H` and linear term `g` of `qdot' H qdot - 2 g' qdot`, assembled
/// from the Jacobians directly.
fn normal_equations(
    model: &RobotModel,
    q: &JointConfig,
    t: &VelocityTargets,
    lambda: f64,
) -> (DMatrix<f64>, DVector<f64>) {
    let n = model.dof();
    let mut h = DMatrix::identity(n, n) * lambda;
    let mut g = DVector::zeros(n);
    for (i, jac) in fingertip_jacobians(model, q).unwrap().iter().enumerate() {
        let (jl, ja) = (jac.linear.clone_owned(), jac.angular.clone_owned());
        for a in 0..n {
            g[a] += jl.column(a).dot(&t.xdot_des[i]) + t.alpha * ja.column(a).dot(&t.omega_des[i]);
            for b in 0..n {
                h[(a, b)] +=
                    jl.column(a).dot(&jl.column(b)) + t.alpha * ja.column(a).dot(&ja.column(b));
            }
        }
    }
    for (r, &j) in model.gripper_joints.iter().enumerate() {
        h[(j, j)] += t.beta;
        g[j] += t.beta * t.qdot_gr_des[r];
    }
    (h, g)
}

fn random_targets(rng: &mut ChaCha8Rng, n_gr: usize, scale: f64) -> VelocityTargets {
    let mut t = VelocityTargets::zero(2, n_gr);
    t.xdot_des = vec![unit(rng) * scale, unit(rng) * scale];
    t.omega_des = vec![unit(rng) * scale, unit(rng) * scale];
    t.qdot_gr_des = DVector::from_fn(n_gr, |_, _| rng.random_range(-scale..scale));
    t.alpha = rng.random_range(0.0..1.0);
    t.beta = rng.random_range(0.0..1.0);
    t
}

fn track(
    model: &RobotModel,
    q: &JointConfig,
    t: &VelocityTargets,
    stack: &DistanceStack,
) -> vfgrasp::tracker::TrackerOutput {
    let kin = forward_kinematics(model, q).unwrap();
    let empty = DistanceStack::empty(model.dof());
    Tracker::new(TrackerParams::default())
        .track(model, &kin, q, t, stack, &empty)
        .unwrap()
}

fn mid_config(model: &RobotModel) -> JointConfig {
    let l = &model.limits;
    JointConfig(
        (&l.q_min + &l.q_max) / 2.0 + DVector::from_fn(model.dof(), |j, _| 0.2 * (j as f64).sin()),
    )
}

#[test]
fn unconstrained_tracking_solves_the_normal_equations() {
    let model = builtin_arm_hand();
    let q = mid_config(&model);
    let lambda = TrackerParams::default().regularization;
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    let empty = DistanceStack::empty(model.dof());
    for _ in 0..50 {
        // Small enough that no velocity or position bound is reached.
        let t = random_targets(&mut rng, model.gripper_joints.len(), 0.02);
        let (h, g) = normal_equations(&model, &q, &t, lambda);
        let expect = h.lu().solve(&g).unwrap();
        let out = track(&model, &q, &t, &empty);
        assert_eq!(out.status, TrackStatus::Solved);
        assert!(out.active_rows.is_empty());
        let err = (&out.qdot - &expect).norm() / expect.norm();
        assert!(err < 1e-4, "rel err {err}");
    }
}

#[test]
fn scaling_targets_scales_the_velocity() {
    let model = builtin_arm_hand();
    let q = mid_config(&model);
    let mut rng = ChaCha8Rng::seed_from_u64(52);
    let empty = DistanceStack::empty(model.dof());
    for _ in 0..20 {
        let t = random_targets(&mut rng, model.gripper_joints.len(), 0.01);
        let k = rng.random_range(0.2..2.0);
        let mut scaled = t.clone();
        scaled.xdot_des.iter_mut().for_each(|v| *v *= k);
        scaled.omega_des.iter_mut().for_each(|v| *v *= k);
        scaled.qdot_gr_des *= k;
        let (a, b) = (
            track(&model, &q, &t, &empty).qdot,
            track(&model, &q, &scaled, &empty).qdot,
        );
        assert!((&a * k - &b).norm() <= 1e-4 * b.norm().max(1e-6));
    }
}

#[test]
fn zero_weights_ignore_their_targets() {
    let model = builtin_arm_hand();
    let q = mid_config(&model);
    let mut rng = ChaCha8Rng::seed_from_u64(53);
    let empty = DistanceStack::empty(model.dof());
    for _ in 0..20 {
        let mut t = random_targets(&mut rng, model.gripper_joints.len(), 0.1);
        t.alpha = 0.0;
        t.beta = 0.0;
        let base = track(&model, &q, &t, &empty).qdot;
        let mut other = t.clone();
        other.omega_des = vec![unit(&mut rng) * 3.0, unit(&mut rng) * 3.0];
        other.qdot_gr_des =
            DVector::from_fn(t.qdot_gr_des.len(), |_, _| rng.random_range(-3.0..3.0));
        assert_eq!(track(&model, &q, &other, &empty).qdot, base);
    }
}

#[test]
fn free_space_tracking_reproduces_fingertip_velocities() {
    let model = builtin_arm_hand();
    let q = vfgrasp::scenes::InitialPose::CenterUp.joints();
    let mut rng = ChaCha8Rng::seed_from_u64(54);
    let empty = DistanceStack::empty(model.dof());
    let jacs = fingertip_jacobians(&model, &q).unwrap();
    for _ in 0..50 {
        let mut t = VelocityTargets::zero(2, model.gripper_joints.len());
        let common = unit(&mut rng) * 0.1;
        t.xdot_des = vec![
            common + unit(&mut rng) * 0.02,
            common + unit(&mut rng) * 0.02,
        ];
        let out = track(&model, &q, &t, &empty);
        assert_eq!(out.status, TrackStatus::Solved);
        for (i, jac) in jacs.iter().enumerate() {
            let err = (&jac.linear * &out.qdot - t.xdot_des[i]).norm();
            assert!(err <= 1e-3, "fingertip {i}: {err}");
        }
    }
}

/// Exhaustive active-set search: every row is free, at its lower bound or
/// at its upper bound; the cheapest primal-feasible stationary point is the
/// optimum of the convex QP.
fn active_set_oracle(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    a: &DMatrix<f64>,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
) -> DVector<f64> {
    let (n, m) = (h.nrows(), a.nrows());
    let mut best: Option<(f64, DVector<f64>)> = None;
    let mut state = vec![0u8; m];
    loop {
        let active: Vec<(usize, f64)> = state
            .iter()
            .enumerate()
            .filter_map(|(i, &s)| match s {
                1 if lo[i].is_finite() => Some((i, lo[i])),
                2 if hi[i].is_finite() => Some((i, hi[i])),
                _ => None,
            })
            .collect();
        let skip = state
            .iter()
            .enumerate()
            .any(|(i, &s)| (s == 1 && !lo[i].is_finite()) || (s == 2 && !hi[i].is_finite()));
        if !skip && active.len() <= n {
            let k = active.len();
            let mut kkt = DMatrix::zeros(n + k, n + k);
            let mut rhs = DVector::zeros(n + k);
            kkt.view_mut((0, 0), (n, n)).copy_from(h);
            rhs.rows_mut(0, n).copy_from(g);
            for (r, &(i, b)) in active.iter().enumerate() {
                for c in 0..n {
                    kkt[(n + r, c)] = a[(i, c)];
                    kkt[(c, n + r)] = a[(i, c)];
                }
                rhs[n + r] = b;
            }
            if let Some(sol) = kkt.lu().solve(&rhs) {
                let z = sol.rows(0, n).into_owned();
                let az = a * &z;
                let feasible = (0..m).all(|i| az[i] >= lo[i] - 1e-9 && az[i] <= hi[i] + 1e-9);
                if feasible {
                    let cost = z.dot(&(h * &z)) - 2.0 * g.dot(&z);
                    if best.as_ref().is_none_or(|b| cost < b.0) {
                        best = Some((cost, z));
                    }
                }
            }
        }
        // Next state in base 3.
        let mut i = 0;
        while i < m && state[i] == 2 {
            state[i] = 0;
            i += 1;
        }
        if i == m {
            break;
        }
        state[i] += 1;
    }
    best.unwrap().1
}

#[test]
fn conflicting_targets_match_active_set_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let params = TrackerParams::default();
    let mut binding = 0;
    for _ in 0..20 {
        let model = six_dof(&mut rng, 0.5);
        let q = JointConfig(DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0)));
        let mut t = random_targets(&mut rng, 2, 1.0);
        // The two fingertips pull in opposite directions.
        t.xdot_des[1] = -t.xdot_des[0];
        let (h, g) = normal_equations(&model, &q, &t, params.regularization);
        let free = h.clone().lu().solve(&g).unwrap();
        // Two clearance rows that the unconstrained answer would break.
        let jac = DMatrix::from_fn(2, 6, |r, c| {
            -free[c] / free.norm() + if r == 1 { 0.3 * (c as f64).cos() } else { 0.0 }
        });
        let stack = DistanceStack {
            values: DVector::from_vec(vec![0.008, 0.01]),
            jacobian: jac.clone(),
            margins: vec![0.005, 0.005],
            degenerate: false,
        };
        let kin = forward_kinematics(&model, &q).unwrap();
        let built = build_qp(
            &model,
            &kin,
            &q,
            &t,
            &stack,
            &DistanceStack::empty(6),
            &params,
        )
        .unwrap();

        // Rows written out independently of the tracker.
        let hz = params.horizon;
        let mut a = DMatrix::zeros(8, 6);
        let mut lo = DVector::zeros(8);
        let mut hi = DVector::zeros(8);
        for r in 0..2 {
            a.set_row(r, &jac.row(r));
            lo[r] = (stack.margins[r] - stack.values[r]) / hz;
            hi[r] = f64::INFINITY;
        }
        let l = &model.limits;
        for j in 0..6 {
            a[(2 + j, j)] = 1.0;
            lo[2 + j] = l.qd_min[j].max((l.q_min[j] - q.0[j]) / hz);
            hi[2 + j] = l.qd_max[j].min((l.q_max[j] - q.0[j]) / hz);
        }
        let expect = active_set_oracle(&h, &g, &a, &lo, &hi);
        let out = Tracker::new(params.clone())
            .track(&model, &kin, &q, &t, &stack, &DistanceStack::empty(6))
            .unwrap();
        assert_eq!(out.status, TrackStatus::Solved);
        assert!(row_violation(&built.qp, &out.qdot) <= 1e-6);
        let err = (&out.qdot - &expect).norm() / expect.norm().max(1e-3);
        assert!(err < 1e-4, "rel err {err}: {out:?} vs {expect}");
        binding += usize::from(!out.active_rows.is_empty());
    }
    assert!(binding >= 15, "only {binding} instances had active rows");
}

#[test]
fn predicted_joint_positions_stay_within_limits() {
    let model = builtin_arm_hand();
    let params = TrackerParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(56);
    let l = model.limits.clone();
    for _ in 0..50 {
        // Configurations within a few hundredths of a radian of a limit.
        let q = JointConfig(DVector::from_fn(model.dof(), |j, _| {
            if rng.random_bool(0.5) {
                l.q_max[j] - rng.random_range(0.0..0.03)
            } else {
                l.q_min[j] + rng.random_range(0.0..0.03)
            }
        }));
        let t = random_targets(&mut rng, model.gripper_joints.len(), 0.5);
        let kin = forward_kinematics(&model, &q).unwrap();
        let empty = DistanceStack::empty(model.dof());
        let built = build_qp(&model, &kin, &q, &t, &empty, &empty, &params).unwrap();
        let out = Tracker::new(params.clone())
            .track(&model, &kin, &q, &t, &empty, &empty)
            .unwrap();
        assert_eq!(out.status, TrackStatus::Solved);
        assert!(row_violation(&built.qp, &out.qdot) <= 1e-6);
        for j in 0..model.dof() {
            let next = q.0[j] + params.horizon * out.qdot[j];
            assert!(
                next <= l.q_max[j] + 1e-6 && next >= l.q_min[j] - 1e-6,
                "joint {j}: {next}"
            );
            assert!(out.qdot[j] <= l.qd_max[j] + 1e-6 && out.qdot[j] >= l.qd_min[j] - 1e-6);
        }
    }
}
