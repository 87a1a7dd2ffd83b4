use std::f64::consts::FRAC_1_SQRT_2;

use nalgebra::{
    DVector, Isometry3, Matrix3, Rotation3, Translation3, Unit, UnitQuaternion, Vector3,
};

use super::model::{CollisionSphere, FingertipFrame, Joint, JointLimits, RobotModel};

/// Nominal "loosely open" posture of the built-in hand, finger A then finger B
/// (splay, proximal, middle, distal).
pub const BUILTIN_NOMINAL_GRIPPER: [f64; 8] = [0.0, -0.15, 0.1, 0.1, 0.0, -0.15, 0.1, 0.1];

fn joint(name: &str, parent: Option<usize>, xyz: [f64; 3], axis: Vector3<f64>) -> Joint {
    Joint {
        name: name.to_string(),
        parent,
        origin: Isometry3::translation(xyz[0], xyz[1], xyz[2]),
        axis: Unit::new_normalize(axis),
    }
}

fn sphere(joint: Option<usize>, center: [f64; 3], radius: f64) -> CollisionSphere {
    CollisionSphere {
        joint,
        center: Vector3::from(center),
        radius,
    }
}

/// Fingertip frame whose x and y axes sum to `pad` (scaled by sqrt 2): the
/// pad faces `pad`, the finger runs along +z of the distal link.
fn pad_frame(pad: Vector3<f64>, length: f64) -> Isometry3<f64> {
    let along = Vector3::z();
    let ex = (pad + along) * FRAC_1_SQRT_2;
    let ey = (pad - along) * FRAC_1_SQRT_2;
    let ez = ex.cross(&ey);
    let rot = Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[ex, ey, ez]));
    Isometry3::from_parts(
        Translation3::new(0.0, 0.0, length),
        UnitQuaternion::from_rotation_matrix(&rot),
    )
}

/// Representative 15-DoF arm-hand system: a 7-DoF arm (shoulder height
/// 0.30 m, upper arm 0.30 m, forearm 0.30 m, wrist-to-palm 0.07 m) carrying a
/// two-finger hand with 4 joints per finger (splay then three flexion joints,
/// phalanges 0.045/0.035/0.030 m). The base sits on the table plane z = 0.
///
/// Joint indices: 0..7 arm, 7..11 finger A (+y side), 11..15 finger B.
pub fn builtin_arm_hand() -> RobotModel {
    let x = Vector3::x();
    let y = Vector3::y();
    let z = Vector3::z();
    let mut joints = vec![
        joint("arm_0", None, [0.0, 0.0, 0.10], z),
        joint("arm_1", Some(0), [0.0, 0.0, 0.20], y),
        joint("arm_2", Some(1), [0.0, 0.0, 0.15], z),
        joint("arm_3", Some(2), [0.0, 0.0, 0.15], y),
        joint("arm_4", Some(3), [0.0, 0.0, 0.15], z),
        joint("arm_5", Some(4), [0.0, 0.0, 0.15], y),
        joint("arm_6", Some(5), [0.0, 0.0, 0.07], z),
    ];
    for (finger, side, flex) in [("a", 1.0, x), ("b", -1.0, -x)] {
        let base = joints.len();
        joints.push(joint(
            &format!("finger_{finger}_0"),
            Some(6),
            [0.0, 0.035 * side, 0.06],
            y,
        ));
        joints.push(joint(
            &format!("finger_{finger}_1"),
            Some(base),
            [0.0, 0.0, 0.02],
            flex,
        ));
        joints.push(joint(
            &format!("finger_{finger}_2"),
            Some(base + 1),
            [0.0, 0.0, 0.045],
            flex,
        ));
        joints.push(joint(
            &format!("finger_{finger}_3"),
            Some(base + 2),
            [0.0, 0.0, 0.035],
            flex,
        ));
    }

    let fingertips = vec![
        FingertipFrame {
            joint: 10,
            offset: pad_frame(-y, 0.03),
        },
        FingertipFrame {
            joint: 14,
            offset: pad_frame(y, 0.03),
        },
    ];

    let mut spheres = vec![
        sphere(None, [0.0, 0.0, 0.05], 0.07),
        sphere(Some(0), [0.0, 0.0, 0.12], 0.06),
        sphere(Some(1), [0.0, 0.0, 0.0], 0.06),
        sphere(Some(1), [0.0, 0.0, 0.09], 0.05),
        sphere(Some(2), [0.0, 0.0, 0.07], 0.05),
        sphere(Some(3), [0.0, 0.0, 0.0], 0.05),
        sphere(Some(3), [0.0, 0.0, 0.08], 0.045),
        sphere(Some(4), [0.0, 0.0, 0.05], 0.045),
        sphere(Some(4), [0.0, 0.0, 0.11], 0.04),
        sphere(Some(5), [0.0, 0.0, 0.0], 0.04),
        sphere(Some(5), [0.0, 0.0, 0.05], 0.035),
        sphere(Some(6), [0.0, 0.02, 0.04], 0.035),
        sphere(Some(6), [0.0, -0.02, 0.04], 0.035),
    ];
    for base in [7, 11] {
        spheres.push(sphere(Some(base + 1), [0.0, 0.0, 0.012], 0.012));
        spheres.push(sphere(Some(base + 1), [0.0, 0.0, 0.034], 0.011));
        spheres.push(sphere(Some(base + 2), [0.0, 0.0, 0.012], 0.010));
        spheres.push(sphere(Some(base + 2), [0.0, 0.0, 0.028], 0.010));
        spheres.push(sphere(Some(base + 3), [0.0, 0.0, 0.012], 0.009));
        spheres.push(sphere(Some(base + 3), [0.0, 0.0, 0.030], 0.008));
    }

    let arm_q = [2.9, 1.9, 2.9, 2.6, 2.9, 2.0, 2.9];
    let finger_lo = [-0.4, -0.4, -0.4, -0.4];
    let finger_hi = [0.4, 1.6, 1.6, 1.6];
    let mut q_min = Vec::with_capacity(15);
    let mut q_max = Vec::with_capacity(15);
    for q in arm_q {
        q_min.push(-q);
        q_max.push(q);
    }
    for _ in 0..2 {
        q_min.extend_from_slice(&finger_lo);
        q_max.extend_from_slice(&finger_hi);
    }
    let qd: Vec<f64> = (0..15).map(|j| if j < 7 { 1.2 } else { 2.0 }).collect();
    let limits = JointLimits {
        q_min: DVector::from_vec(q_min),
        q_max: DVector::from_vec(q_max),
        qd_min: -DVector::from_vec(qd.clone()),
        qd_max: DVector::from_vec(qd),
    };

    RobotModel::new(
        "arm7_hand8".into(),
        joints,
        fingertips,
        (7..15).collect(),
        spheres,
        limits,
        None,
    )
    .expect("built-in model is well-formed")
}
