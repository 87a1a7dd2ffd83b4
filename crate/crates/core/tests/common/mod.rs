//! Oracles shared by the per-module test targets and the acceptance target.
//! Each `*_worst` function returns the largest error it observed so callers
//! can both assert on it and report it.
#![allow(dead_code)]

use std::sync::Arc;

use nalgebra::{
    DMatrix, DVector, Isometry3, Matrix3, Matrix3xX, Rotation3, Translation3, Unit, UnitQuaternion,
    Vector3,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vfgrasp::fields::{orientation_field, stability_score};
use vfgrasp::geometry::{
    gamma, object_distance_stack, sdf_eval, CollisionPairSet, PairOther, PointCloud, Role,
    SdfObject, Shape,
};
use vfgrasp::kinematics::{
    fingertip_jacobians, unskew, CollisionSphere, FingertipFrame, Joint, JointLimits,
};
use vfgrasp::pathopt::{linear_interpolant, optimize_path, PathParams, PathProblem};
use vfgrasp::qp::{solve, QpProblem};
use vfgrasp::scenes;
use vfgrasp::{builtin_arm_hand, forward_kinematics, JointConfig, RobotModel};

pub const EPS: f64 = 1e-6;
/// Points this close to a nearest-neighbour switch or a superellipsoid
/// coordinate plane are excluded from derivative checks.
pub const SWITCH_GAP: f64 = 1e-3;

pub fn unit(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

pub fn random_pose(rng: &mut ChaCha8Rng, reach: f64) -> Isometry3<f64> {
    Isometry3::from_parts(
        Translation3::from(unit(rng) * rng.random_range(0.0..reach)),
        UnitQuaternion::from_axis_angle(
            &Unit::new_normalize(unit(rng)),
            rng.random_range(-3.0..3.0),
        ),
    )
}

pub fn random_rotation(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
    *Rotation3::from_axis_angle(&Unit::new_normalize(unit(rng)), rng.random_range(-3.0..3.0))
        .matrix()
}

pub fn shifted(q: &JointConfig, k: usize, d: f64) -> JointConfig {
    let mut q = q.clone();
    q.0[k] += d;
    q
}

// ---------------------------------------------------------------- qp

/// Strictly convex QP with a known interior-feasible point.
pub fn random_qp(rng: &mut ChaCha8Rng, n: usize, r: usize) -> QpProblem {
    let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let p = &m * m.transpose() + DMatrix::identity(n, n) * 0.1;
    let c = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
    let a = DMatrix::from_fn(r, n, |_, _| rng.random_range(-1.0..1.0));
    let z0 = DVector::from_fn(n, |_, _| rng.random_range(-0.5..0.5));
    let az0 = &a * &z0;
    let mut lower = DVector::zeros(r);
    let mut upper = DVector::zeros(r);
    for i in 0..r {
        let kind = rng.random_range(0..4);
        let lo = az0[i] - rng.random_range(0.0..0.5);
        let hi = az0[i] + rng.random_range(0.0..0.5);
        (lower[i], upper[i]) = match kind {
            0 => (lo, f64::INFINITY),
            1 => (f64::NEG_INFINITY, hi),
            2 => (lo, hi),
            _ => (az0[i], az0[i]),
        };
    }
    QpProblem::new(p, c, a, lower, upper).unwrap()
}

/// Minimum objective over every choice of active rows (each row inactive,
/// at its lower bound, or at its upper bound) whose equality-constrained
/// minimizer is feasible.
pub fn enumerate_active_sets(qp: &QpProblem) -> f64 {
    let n = qp.num_vars();
    let r = qp.num_rows();
    let mut best = f64::INFINITY;
    let mut choice = vec![0u8; r];
    loop {
        let active: Vec<(usize, f64)> = (0..r)
            .filter_map(|i| match choice[i] {
                1 if qp.lower[i].is_finite() => Some((i, qp.lower[i])),
                2 if qp.upper[i].is_finite() && qp.upper[i] != qp.lower[i] => {
                    Some((i, qp.upper[i]))
                }
                _ => None,
            })
            .collect();
        let skip = (0..r).any(|i| {
            (choice[i] == 1 && !qp.lower[i].is_finite())
                || (choice[i] == 2 && (!qp.upper[i].is_finite() || qp.upper[i] == qp.lower[i]))
        });
        if !skip && active.len() <= n {
            let k = active.len();
            let mut kkt = DMatrix::zeros(n + k, n + k);
            kkt.view_mut((0, 0), (n, n)).copy_from(&qp.p);
            let mut rhs = DVector::zeros(n + k);
            rhs.rows_mut(0, n).copy_from(&(-&qp.c));
            for (row, &(i, b)) in active.iter().enumerate() {
                for j in 0..n {
                    kkt[(n + row, j)] = qp.a[(i, j)];
                    kkt[(j, n + row)] = qp.a[(i, j)];
                }
                rhs[n + row] = b;
            }
            let svd = kkt.clone().svd(false, false);
            let cond = svd.singular_values.max() / svd.singular_values.min().max(1e-300);
            if cond < 1e10 {
                if let Some(sol) = kkt.lu().solve(&rhs) {
                    let z = sol.rows(0, n).into_owned();
                    let az = &qp.a * &z;
                    let feasible =
                        (0..r).all(|i| az[i] >= qp.lower[i] - 1e-9 && az[i] <= qp.upper[i] + 1e-9);
                    if feasible {
                        best = best.min(qp.objective(&z));
                    }
                }
            }
        }
        // next choice in base 3
        let mut i = 0;
        loop {
            if i == r {
                return best;
            }
            choice[i] += 1;
            if choice[i] < 3 {
                break;
            }
            choice[i] = 0;
            i += 1;
        }
    }
}

/// Largest objective gap `|f - f*| / max(1, |f*|)` over `cases` random small
/// QPs; infinite if any solve fails.
pub fn qp_enumeration_worst(cases: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let n = rng.random_range(1..=6);
        let r = rng.random_range(0..=10);
        let qp = random_qp(&mut rng, n, r);
        let sol = solve(&qp, None, 1e-9, 1e-9, 20_000);
        if !sol.is_solved() {
            return f64::INFINITY;
        }
        let oracle = enumerate_active_sets(&qp);
        worst = worst.max((qp.objective(&sol.z) - oracle).abs() / oracle.abs().max(1.0));
    }
    worst
}

// ---------------------------------------------------------------- kinematics

/// Random revolute tree with two fingertips and a few spheres.
pub fn random_model(rng: &mut ChaCha8Rng, n: usize) -> RobotModel {
    let joints = (0..n)
        .map(|j| Joint {
            name: format!("j{j}"),
            parent: if j == 0 {
                None
            } else {
                Some(rng.random_range(0..j))
            },
            origin: random_pose(rng, 0.3),
            axis: Unit::new_normalize(unit(rng)),
        })
        .collect();
    let fingertips = (0..2)
        .map(|_| FingertipFrame {
            joint: rng.random_range(n / 2..n),
            offset: random_pose(rng, 0.1),
        })
        .collect();
    let spheres = (0..6)
        .map(|_| CollisionSphere {
            joint: Some(rng.random_range(0..n)),
            center: unit(rng) * 0.05,
            radius: 0.02,
        })
        .collect();
    RobotModel::new(
        "random".into(),
        joints,
        fingertips,
        vec![n - 1],
        spheres,
        JointLimits::symmetric(n, 3.0, 2.0),
        None,
    )
    .unwrap()
}

pub fn random_q(rng: &mut ChaCha8Rng, n: usize) -> JointConfig {
    JointConfig(DVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0)))
}

pub fn rel_err(fd: &Matrix3xX<f64>, j: &Matrix3xX<f64>) -> f64 {
    (fd - j).norm() / j.norm().max(1e-8)
}

/// Largest relative error of the fingertip linear and angular Jacobians
/// against central differences, alternating random and builtin models.
pub fn fingertip_jacobian_worst(samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let builtin = builtin_arm_hand();
    let mut worst: f64 = 0.0;
    for s in 0..samples {
        let model = if s % 2 == 0 {
            random_model(&mut rng, 15)
        } else {
            builtin.clone()
        };
        let n = model.dof();
        let q = random_q(&mut rng, n);
        let jacs = fingertip_jacobians(&model, &q).unwrap();
        let base = forward_kinematics(&model, &q).unwrap();
        for (i, jac) in jacs.iter().enumerate() {
            let mut lin = Matrix3xX::zeros(n);
            let mut ang = Matrix3xX::zeros(n);
            for k in 0..n {
                let plus = forward_kinematics(&model, &shifted(&q, k, EPS)).unwrap();
                let minus = forward_kinematics(&model, &shifted(&q, k, -EPS)).unwrap();
                let (a, b) = (&plus.fingertips[i], &minus.fingertips[i]);
                lin.set_column(k, &((a.position - b.position) / (2.0 * EPS)));
                let w = (a.rotation - b.rotation) / (2.0 * EPS)
                    * base.fingertips[i].rotation.transpose();
                ang.set_column(k, &unskew(&(0.5 * (w - w.transpose()))));
            }
            worst = worst
                .max(rel_err(&lin, &jac.linear))
                .max(rel_err(&ang, &jac.angular));
        }
    }
    worst
}

// ---------------------------------------------------------------- geometry

pub fn fd_gradient(obj: &SdfObject, x: &Vector3<f64>) -> Vector3<f64> {
    Vector3::from_fn(|k, _| {
        let mut p = *x;
        let mut m = *x;
        p[k] += EPS;
        m[k] -= EPS;
        (sdf_eval(obj, &p).value - sdf_eval(obj, &m).value) / (2.0 * EPS)
    })
}

/// Gap between the nearest and second-nearest cloud point, by exhaustive
/// scan.
pub fn switch_gap(points: &[Vector3<f64>], x: &Vector3<f64>) -> f64 {
    let mut d: Vec<f64> = points.iter().map(|p| (p - x).norm()).collect();
    d.sort_by(f64::total_cmp);
    d[1] - d[0]
}

/// True when the object-frame point is near a derivative discontinuity.
pub fn near_switch_local(obj: &SdfObject, local: &Vector3<f64>) -> bool {
    match &obj.shape {
        Shape::PointCloud(c) => switch_gap(&c.points(), local) < SWITCH_GAP,
        Shape::Superellipsoid { a, b, c, .. } => [local.x / a, local.y / b, local.z / c]
            .iter()
            .any(|v| v.abs() < SWITCH_GAP),
        Shape::HalfSpace { .. } => false,
    }
}

/// Largest relative SDF gradient error over superellipsoids, half-spaces
/// and point clouds in random poses, cycling through the three kinds.
pub fn sdf_gradient_worst(samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    while checked < samples {
        let pose = random_pose(&mut rng, 0.5);
        let obj = match checked % 3 {
            0 => {
                let shape = Shape::Superellipsoid {
                    a: rng.random_range(0.02..0.2),
                    b: rng.random_range(0.02..0.2),
                    c: rng.random_range(0.02..0.2),
                    e1: rng.random_range(0.2..1.9),
                    e2: rng.random_range(0.2..1.9),
                };
                SdfObject::new("s", shape, pose, Role::Obstacle).unwrap()
            }
            1 => {
                let shape = Shape::HalfSpace {
                    normal: unit(&mut rng),
                    offset: rng.random_range(-0.2..0.2),
                };
                SdfObject::new("h", shape, pose, Role::Environment).unwrap()
            }
            _ => {
                let pts: Vec<Vector3<f64>> = (0..200).map(|_| unit(&mut rng) * 0.1).collect();
                let shape = Shape::PointCloud(Arc::new(PointCloud::new(pts).unwrap()));
                SdfObject::new("c", shape, pose, Role::Target).unwrap()
            }
        };
        let x =
            (pose * nalgebra::Point3::from(unit(&mut rng) * rng.random_range(0.01..0.4))).coords;
        if near_switch_local(&obj, &pose.inverse_transform_point(&x.into()).coords) {
            continue;
        }
        let g = sdf_eval(&obj, &x).gradient;
        worst = worst.max((fd_gradient(&obj, &x) - g).norm() / g.norm().max(1e-8));
        checked += 1;
    }
    worst
}

/// Table, bowl and a superellipsoid obstacle near the arm's workspace.
pub fn scene_objects() -> Vec<SdfObject> {
    vec![
        SdfObject::table(0.0),
        scenes::target_object(scenes::ObjectKind::Bowl),
        SdfObject::new(
            "obstacle",
            Shape::Superellipsoid {
                a: 0.04,
                b: 0.06,
                c: 0.08,
                e1: 0.6,
                e2: 0.8,
            },
            Isometry3::translation(0.3, -0.2, 0.1),
            Role::Obstacle,
        )
        .unwrap(),
    ]
}

pub fn random_limited_q(rng: &mut ChaCha8Rng, model: &RobotModel) -> JointConfig {
    let l = &model.limits;
    JointConfig(DVector::from_fn(model.dof(), |j, _| {
        rng.random_range(l.q_min[j]..l.q_max[j])
    }))
}

fn near_switch(model: &RobotModel, q: &JointConfig, s: usize, obj: &SdfObject) -> bool {
    let kin = forward_kinematics(model, q).unwrap();
    near_switch_local(
        obj,
        &obj.pose
            .inverse_transform_point(&kin.sphere_centers[s].into())
            .coords,
    )
}

pub fn fd_jacobian(
    n: usize,
    q: &JointConfig,
    f: impl Fn(&JointConfig) -> DVector<f64>,
) -> DMatrix<f64> {
    let cols: Vec<DVector<f64>> = (0..n)
        .map(|k| (f(&shifted(q, k, EPS)) - f(&shifted(q, k, -EPS))) / (2.0 * EPS))
        .collect();
    DMatrix::from_columns(&cols)
}

/// Per-row error `|fd - J| / max(|J|, 1e-3)`; returns the worst error and
/// the number of rows checked.
fn row_errors(analytic: &DMatrix<f64>, fd: &DMatrix<f64>, skip: &[bool]) -> (f64, usize) {
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for r in (0..analytic.nrows()).filter(|&r| !skip[r]) {
        let a = analytic.row(r);
        worst = worst.max((fd.row(r) - a).norm() / a.norm().max(1e-3));
        checked += 1;
    }
    (worst, checked)
}

/// Largest row error of the Γ and object-distance Jacobians against central
/// differences at random in-limit configurations; also the rows checked.
pub fn stack_jacobian_worst(samples: usize, seed: u64) -> (f64, usize) {
    let model = builtin_arm_hand();
    let objects = scene_objects();
    let pairs = CollisionPairSet::for_scene(&model, &objects, 0.005);
    let n = model.dof();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut worst, mut rows) = (0.0f64, 0);
    for _ in 0..samples {
        let q = random_limited_q(&mut rng, &model);
        let g = gamma(&model, &q, &pairs, &objects).unwrap();
        let fd = fd_jacobian(n, &q, |q| {
            gamma(&model, q, &pairs, &objects).unwrap().values
        });
        let skip: Vec<bool> = pairs
            .pairs
            .iter()
            .map(|p| match p.other {
                PairOther::Object(o) => near_switch(&model, &q, p.sphere, &objects[o]),
                PairOther::Sphere(_) => false,
            })
            .collect();
        let (w, k) = row_errors(&g.jacobian, &fd, &skip);
        worst = worst.max(w);
        rows += k;

        let d = object_distance_stack(&model, &q, &objects).unwrap();
        let fd = fd_jacobian(n, &q, |q| {
            object_distance_stack(&model, q, &objects).unwrap().values
        });
        let skip: Vec<bool> = objects
            .iter()
            .filter(|o| o.role != Role::Environment)
            .flat_map(|o| model.gripper_points.iter().map(move |&s| (s, o)))
            .map(|(s, o)| near_switch(&model, &q, s, o))
            .collect();
        assert_eq!(skip.len(), d.len());
        let (w, k) = row_errors(&d.jacobian, &fd, &skip);
        worst = worst.max(w);
        rows += k;
    }
    (worst, rows)
}

// ---------------------------------------------------------------- paths

/// Largest waypoint deviation from the linear interpolant for random
/// obstacle-free endpoint pairs.
pub fn free_space_worst(cases: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let start = Vector3::from_fn(|_, _| rng.random_range(-0.5..0.5));
        let goal = Vector3::from_fn(|_, _| rng.random_range(-0.5..0.5));
        let sol = optimize_path(
            &PathProblem {
                start,
                goal,
                objects: &[],
            },
            &PathParams::default(),
        );
        let expect = linear_interpolant(&start, &goal, sol.waypoints.len());
        for (a, b) in sol.waypoints.iter().zip(&expect) {
            worst = worst.max((a - b).amax());
        }
    }
    worst
}

// ---------------------------------------------------------------- fields

/// Mean pad-to-partner angle evaluated with acos of normalized dot
/// products.
pub fn g_direct(x1: &Vector3<f64>, r1: &Matrix3<f64>, x2: &Vector3<f64>, r2: &Matrix3<f64>) -> f64 {
    let ang = |a: Vector3<f64>, b: Vector3<f64>| {
        a.normalize().dot(&b.normalize()).clamp(-1.0, 1.0).acos()
    };
    0.5 * (ang(x2 - x1, r1.column(0) + r1.column(1)) + ang(x1 - x2, r2.column(0) + r2.column(1)))
}

/// `exp([w] t)` in closed form.
pub fn rot(w: &Vector3<f64>, t: f64) -> Matrix3<f64> {
    *Rotation3::new(w * t).matrix()
}

/// Largest first-order change of g when both fingertips rotate along their
/// orientation fields (`R(t) = exp([w] t) R`), by central differences of the
/// direct evaluation.
pub fn orientation_descent_worst(samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dt = 1e-5;
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..samples {
        let x1 = Vector3::from_fn(|_, _| rng.random_range(-0.2..0.2));
        let x2 = Vector3::from_fn(|_, _| rng.random_range(-0.2..0.2));
        let (r1, r2) = (random_rotation(&mut rng), random_rotation(&mut rng));
        let s = stability_score(&x1, &r1, &x2, &r2).unwrap();
        let w1 = orientation_field(&s.gradient[0], &r1);
        let w2 = orientation_field(&s.gradient[1], &r2);
        let g_at = |t: f64| g_direct(&x1, &(rot(&w1, t) * r1), &x2, &(rot(&w2, t) * r2));
        worst = worst.max((g_at(dt) - g_at(-dt)) / (2.0 * dt));
    }
    worst
}
