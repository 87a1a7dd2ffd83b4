use nalgebra::{DVector, Rotation3, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vfgrasp::fields::{
    gripper_field, linear_baseline, orientation_field, select_target, speed_profile,
    stability_score, target_metric, weight_alpha, weight_beta, FieldParams,
};
use vfgrasp::kinematics::skew;
use vfgrasp::scenes::{candidates, ObjectKind, OBJECT_POSITION};

mod common;
use common::{g_direct, orientation_descent_worst, random_rotation, rot};

fn random_point(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    Vector3::from_fn(|_, _| rng.random_range(-0.2..0.2))
}

#[test]
fn alpha_beta_and_speed_profile_midpoints_are_exact() {
    let p = FieldParams::default();
    assert_eq!(weight_alpha(p.eta_g, p.eta_g, p.t_g), 0.5);
    assert_eq!(weight_beta(p.eta_h, p.eta_h, p.t_h), 0.5);
    assert_eq!(
        speed_profile(p.delta_x / 2.0, p.v_const, p.delta_x),
        0.75 * p.v_const
    );
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..1000 {
        let (eta, t) = (rng.random_range(-1.0..1.0), rng.random_range(1e-3..1.0));
        assert_eq!(weight_alpha(eta, eta, t), 0.5);
        assert_eq!(weight_beta(eta, eta, t), 0.5);
        let (v, d) = (rng.random_range(1e-3..2.0), rng.random_range(1e-3..1.0));
        assert_eq!(speed_profile(d / 2.0, v, d), 0.75 * v);
    }
}

#[test]
fn weight_saturation_values() {
    // tanh(3) = 0.995054753686730...
    let expected = 0.5 + 0.5 * 0.995_054_753_686_730_5;
    assert!((weight_alpha(0.2 + 3.0 * 0.1, 0.2, 0.1) - expected).abs() < 1e-12);
    assert!((weight_alpha(0.2 + 0.3, 0.2, 0.1) - 0.9975).abs() < 1e-4);
    assert!(weight_alpha(0.2 - 10.0 * 0.1, 0.2, 0.1) < 1e-8);
    assert!(weight_beta(0.05 - 10.0 * 0.02, 0.05, 0.02) < 1e-8);
}

#[test]
fn orientation_field_descends_on_random_poses() {
    let worst = orientation_descent_worst(1000, 32);
    assert!(worst <= 1e-8, "largest first-order change {worst}");
}

#[test]
fn score_matches_direct_evaluation_and_gradient_matches_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let h = 1e-6;
    let mut checked = 0;
    for _ in 0..1000 {
        let (x1, x2) = (random_point(&mut rng), random_point(&mut rng));
        let (r1, r2) = (random_rotation(&mut rng), random_rotation(&mut rng));
        let s = stability_score(&x1, &r1, &x2, &r2).unwrap();
        assert!((s.g - g_direct(&x1, &r1, &x2, &r2)).abs() < 1e-12);
        // Right-perturbation R exp([v] t): dg/dt = <G, R [v]>.
        let v = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let fd = (g_direct(&x1, &(r1 * rot(&v, h)), &x2, &r2)
            - g_direct(&x1, &(r1 * rot(&v, -h)), &x2, &r2))
            / (2.0 * h);
        let analytic = (s.gradient[0].transpose() * r1 * skew(&v)).trace();
        if analytic.abs() > 1e-3 {
            assert!(
                (fd - analytic).abs() / analytic.abs() < 1e-3,
                "{fd} vs {analytic}"
            );
            checked += 1;
        }
    }
    assert!(checked > 900);
}

#[test]
fn aligned_pose_is_a_stationary_point() {
    // Pads (x + y) of finger 1 point along +x toward finger 2, and finger 2
    // mirrors it.
    let r1 = *Rotation3::from_axis_angle(&Vector3::z_axis(), -std::f64::consts::FRAC_PI_4).matrix();
    let r2 =
        *Rotation3::from_axis_angle(&Vector3::z_axis(), 3.0 * std::f64::consts::FRAC_PI_4).matrix();
    let (x1, x2) = (Vector3::zeros(), Vector3::new(0.1, 0.0, 0.0));
    let s = stability_score(&x1, &r1, &x2, &r2).unwrap();
    assert!(s.g.abs() < 1e-12);
    assert!(orientation_field(&s.gradient[0], &r1).norm() < 1e-4);
    assert!(orientation_field(&s.gradient[1], &r2).norm() < 1e-4);
    assert!(stability_score(&x1, &r1, &x1, &r2).is_none());
}

#[test]
fn gripper_field_midpoint_and_saturation() {
    let p = FieldParams::default();
    let q = DVector::from_vec(vec![0.1, -0.2, 0.3, 0.0]);
    let dir = DVector::from_vec(vec![1.0, 2.0, -2.0, 4.0]).normalize();
    let half = &q + &dir * (p.delta_gr / 2.0);
    let v = gripper_field(&q, &half, p.delta_gr, p.v_const_gr);
    assert!((v.norm() - 0.75 * p.v_const_gr).abs() < 1e-12);
    assert!((v.normalize() - &dir).norm() < 1e-12);
    let far = &q + &dir * (3.0 * p.delta_gr);
    assert!(
        (gripper_field(&q, &far, p.delta_gr, p.v_const_gr).norm() - p.v_const_gr).abs() < 1e-12
    );
    assert_eq!(gripper_field(&q, &q, p.delta_gr, p.v_const_gr).norm(), 0.0);
}

#[test]
fn linear_baseline_matches_direct_multiply() {
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    for _ in 0..100 {
        let b = nalgebra::DMatrix::from_fn(6, 6, |_, _| rng.random_range(-1.0..1.0));
        let k = &b * b.transpose() + nalgebra::DMatrix::identity(6, 6);
        let x = DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
        let xs = DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
        let direct = DVector::from_fn(6, |i, _| (0..6).map(|j| k[(i, j)] * (xs[j] - x[j])).sum());
        assert!((linear_baseline(&x, &xs, &k) - direct).norm() < 1e-12);
    }
}

#[test]
fn bowl_rim_selection_matches_exhaustive_metric() {
    let o = Vector3::from(OBJECT_POSITION);
    let mut cands: Vec<Vec<Vector3<f64>>> = candidates(ObjectKind::Bowl)
        .into_iter()
        .map(|c| c.into_iter().map(|p| p + o).collect())
        .collect();
    // Eight candidates: the four rim grasps and their finger-swapped twins.
    let swapped: Vec<_> = cands.iter().map(|c| vec![c[1], c[0]]).collect();
    cands.extend(swapped);
    assert_eq!(cands.len(), 8);
    let mut rng = ChaCha8Rng::seed_from_u64(35);
    for _ in 0..1000 {
        let x = vec![o + random_point(&mut rng), o + random_point(&mut rng)];
        let mut best = (0, f64::INFINITY);
        for (i, c) in cands.iter().enumerate() {
            let m = (x[0] - c[0]).norm()
                + (x[1] - c[1]).norm()
                + 0.1 * {
                    let (a, b) = (x[1] - x[0], c[1] - c[0]);
                    (a.dot(&b) / (a.norm() * b.norm())).clamp(-1.0, 1.0).acos()
                };
            if m < best.1 - 1e-12 {
                best = (i, m);
            }
        }
        assert_eq!(select_target(&x, &cands, 0.1).unwrap(), best.0);
    }
}

proptest! {
    #[test]
    fn speed_profile_is_bounded_and_monotone(e1 in 0.0f64..1.0, e2 in 0.0f64..1.0, v in 0.01f64..1.0, d in 0.01f64..0.5) {
        let (a, b) = (speed_profile(e1.min(e2), v, d), speed_profile(e1.max(e2), v, d));
        prop_assert!((0.0..=v).contains(&a) && (0.0..=v).contains(&b));
        prop_assert!(a <= b);
    }

    #[test]
    fn weights_are_strictly_increasing(g in -1.0f64..1.0, dg in 1e-3f64..0.5) {
        prop_assert!(weight_alpha(g, 0.2, 0.1) < weight_alpha(g + dg, 0.2, 0.1));
        prop_assert!(weight_beta(g, 0.05, 0.5) < weight_beta(g + dg, 0.05, 0.5));
    }

    #[test]
    fn selection_is_permutation_equivariant(seed in 0u64..1000, shift in 1usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cands: Vec<Vec<Vector3<f64>>> = (0..7).map(|_| vec![random_point(&mut rng), random_point(&mut rng)]).collect();
        let x = vec![random_point(&mut rng), random_point(&mut rng)];
        let i = select_target(&x, &cands, 0.1).unwrap();
        let mut rotated = cands.clone();
        rotated.rotate_left(shift);
        let j = select_target(&x, &rotated, 0.1).unwrap();
        prop_assert_eq!(target_metric(&x, &rotated[j], 0.1), target_metric(&x, &cands[i], 0.1));
        prop_assert_eq!((j + shift) % 7, i);
    }
}
