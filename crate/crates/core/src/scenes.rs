//! Built-in scenes: five graspable objects on a table, three initial arm
//! poses, a disturbance scenario, a moving-obstacle scenario and a planning
//! benchmark scene.
//!
//! Objects stand on the table plane z = 0 at (0.45, 0) in front of the
//! robot. Concave objects are thin surface point clouds; the box is a
//! superellipsoid. Rim grasps put one fingertip inside and one outside the
//! wall, about 4 cm from the rim.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::sync::Arc;

use nalgebra::{Isometry3, Translation3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::{PointCloud, Role, SdfObject, Shape};
use crate::kinematics::{JointConfig, BUILTIN_NOMINAL_GRIPPER};
use crate::sim::{DisturbanceEvent, DisturbanceKind, Scene};

/// Where the shipped objects stand.
pub const OBJECT_POSITION: [f64; 3] = [0.45, 0.0, 0.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ObjectKind {
    Box,
    Bowl,
    Dish,
    Mug,
    WineGlass,
}

impl ObjectKind {
    pub const ALL: [ObjectKind; 5] = [
        ObjectKind::Box,
        ObjectKind::Bowl,
        ObjectKind::Dish,
        ObjectKind::Mug,
        ObjectKind::WineGlass,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ObjectKind::Box => "box",
            ObjectKind::Bowl => "bowl",
            ObjectKind::Dish => "dish",
            ObjectKind::Mug => "mug",
            ObjectKind::WineGlass => "wine_glass",
        }
    }

    pub fn is_concave(self) -> bool {
        matches!(
            self,
            ObjectKind::Bowl | ObjectKind::Mug | ObjectKind::WineGlass
        )
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InitialPose {
    LeftBottom,
    CenterUp,
    RightBottom,
}

impl InitialPose {
    pub const ALL: [InitialPose; 3] = [
        InitialPose::LeftBottom,
        InitialPose::CenterUp,
        InitialPose::RightBottom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            InitialPose::LeftBottom => "left_bottom",
            InitialPose::CenterUp => "center_up",
            InitialPose::RightBottom => "right_bottom",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }

    /// Joint configuration of the built-in arm-hand model, hand at its
    /// nominal open posture.
    pub fn joints(self) -> JointConfig {
        let arm = match self {
            InitialPose::LeftBottom => LEFT_BOTTOM_ARM,
            InitialPose::CenterUp => CENTER_UP_ARM,
            InitialPose::RightBottom => mirror(LEFT_BOTTOM_ARM),
        };
        let mut q = arm.to_vec();
        q.extend_from_slice(&BUILTIN_NOMINAL_GRIPPER);
        JointConfig::from_slice(&q)
    }
}

// Found offline by damped least squares on the wrist pose. Left-bottom has
// the hand pointing down beside the object with the fingertips about 9 cm
// above the table; center-up holds them 29 cm above the object.
const LEFT_BOTTOM_ARM: [f64; 7] = [0.4383, 0.9462, 0.1353, 1.0632, -0.1207, 1.1394, 0.5685];
const CENTER_UP_ARM: [f64; 7] = [-0.3398, 0.5802, 0.6031, 1.079, -0.3162, 1.5678, 0.1838];

/// Reflection through the xz plane: joints about z change sign.
const fn mirror(q: [f64; 7]) -> [f64; 7] {
    [-q[0], q[1], -q[2], q[3], -q[4], q[5], -q[6]]
}

/// Samples a surface of revolution about z given its (radius, height)
/// profile polyline, with roughly `spacing` between neighbours.
pub fn revolve(profile: &[(f64, f64)], spacing: f64) -> Vec<Vector3<f64>> {
    let mut pts = Vec::new();
    let mut carry = 0.0;
    for seg in profile.windows(2) {
        let (r0, z0) = seg[0];
        let (r1, z1) = seg[1];
        let len = ((r1 - r0).powi(2) + (z1 - z0).powi(2)).sqrt();
        let mut s = carry;
        while s < len {
            let t = s / len;
            ring(&mut pts, r0 + (r1 - r0) * t, z0 + (z1 - z0) * t, spacing);
            s += spacing;
        }
        carry = s - len;
    }
    let (r, z) = profile[profile.len() - 1];
    ring(&mut pts, r, z, spacing);
    pts
}

fn ring(pts: &mut Vec<Vector3<f64>>, r: f64, z: f64, spacing: f64) {
    if r < 0.5 * spacing {
        pts.push(Vector3::new(0.0, 0.0, z));
        return;
    }
    let n = (TAU * r / spacing).ceil() as usize;
    for k in 0..n {
        let a = TAU * k as f64 / n as f64;
        pts.push(Vector3::new(r * a.cos(), r * a.sin(), z));
    }
}

/// Profile of a filled disc of radius `r` at height `z`, centre outwards.
fn disc(r: f64, z: f64) -> Vec<(f64, f64)> {
    vec![(0.0, z), (r, z)]
}

/// Bowl: rim radius 0.08 m, height 0.065 m, flat bottom of radius 0.035 m.
pub fn bowl_points() -> Vec<Vector3<f64>> {
    let (rim, h, rb) = (0.08, 0.065, 0.035);
    let mut profile = disc(rb, 0.0);
    for k in 1..=24 {
        let z = h * k as f64 / 24.0;
        profile.push((rb + (rim - rb) * (z / h).powf(0.6), z));
    }
    revolve(&profile, 0.0045)
}

/// Mug: radius 0.045 m, height 0.09 m, closed bottom, handle on +x.
pub fn mug_points() -> Vec<Vector3<f64>> {
    let (r, h) = (0.045, 0.09);
    let mut profile = disc(r, 0.0);
    profile.push((r, h));
    let mut pts = revolve(&profile, 0.0045);
    // Handle: half torus in the xz plane outside the wall.
    let (major, minor, zc) = (0.025, 0.006, 0.045);
    for i in 0..24 {
        let u = -FRAC_PI_2 + PI * i as f64 / 23.0;
        for j in 0..8 {
            let v = TAU * j as f64 / 8.0;
            let rr = major + minor * v.cos();
            pts.push(Vector3::new(
                r + rr * u.cos(),
                minor * v.sin(),
                zc + rr * u.sin(),
            ));
        }
    }
    pts
}

/// Wine glass: base disc, 1 cm stem, cup from z 0.11 m to the 0.04 m rim at
/// z 0.21 m.
pub fn wine_glass_points() -> Vec<Vector3<f64>> {
    let mut pts = revolve(&disc(0.035, 0.0), 0.004);
    pts.extend(revolve(&[(0.005, 0.0), (0.005, 0.11)], 0.004));
    let mut cup = Vec::new();
    for k in 0..=24 {
        let s = k as f64 / 24.0;
        cup.push((0.005 + 0.035 * s.sqrt(), 0.11 + 0.10 * s));
    }
    pts.extend(revolve(&cup, 0.004));
    pts
}

/// Dish: radius 0.1 m, flat centre, rim 0.025 m high.
pub fn dish_points() -> Vec<Vector3<f64>> {
    let profile = vec![(0.0, 0.005), (0.07, 0.005), (0.1, 0.025)];
    revolve(&profile, 0.006)
}

fn at_object(z: f64) -> Isometry3<f64> {
    Isometry3::translation(
        OBJECT_POSITION[0],
        OBJECT_POSITION[1],
        OBJECT_POSITION[2] + z,
    )
}

fn cloud_object(id: &str, points: Vec<Vector3<f64>>) -> SdfObject {
    let cloud = PointCloud::new(points).expect("procedural cloud is non-empty");
    SdfObject::new(
        id,
        Shape::PointCloud(Arc::new(cloud)),
        at_object(0.0),
        Role::Target,
    )
    .expect("procedural cloud is valid")
}

pub fn target_object(kind: ObjectKind) -> SdfObject {
    match kind {
        ObjectKind::Box => SdfObject::new(
            "box",
            Shape::Superellipsoid {
                a: 0.022,
                b: 0.022,
                c: 0.05,
                e1: 0.3,
                e2: 0.3,
            },
            at_object(0.05),
            Role::Target,
        )
        .expect("box parameters are valid"),
        ObjectKind::Bowl => cloud_object("bowl", bowl_points()),
        ObjectKind::Dish => cloud_object("dish", dish_points()),
        ObjectKind::Mug => cloud_object("mug", mug_points()),
        ObjectKind::WineGlass => cloud_object("wine_glass", wine_glass_points()),
    }
}

/// Rim grasp at azimuth `theta`: fingertips at radii `inner` and `outer`
/// and heights `z_in`, `z_out`, object frame.
fn rim_grasp(theta: f64, inner: f64, outer: f64, z_in: f64, z_out: f64) -> Vec<Vector3<f64>> {
    let u = Vector3::new(theta.cos(), theta.sin(), 0.0);
    vec![
        u * inner + Vector3::z() * z_in,
        u * outer + Vector3::z() * z_out,
    ]
}

fn rim_grasps(
    thetas: &[f64],
    inner: f64,
    outer: f64,
    z_in: f64,
    z_out: f64,
) -> Vec<Vec<Vector3<f64>>> {
    thetas
        .iter()
        .map(|&t| rim_grasp(t, inner, outer, z_in, z_out))
        .collect()
}

/// Candidate fingertip pairs in the object frame. Every pair is about 8 cm
/// wide, the fingertip spread of the nominal open hand, so the gripper
/// field and the fingertip fields agree near the goal.
pub fn candidates(kind: ObjectKind) -> Vec<Vec<Vector3<f64>>> {
    let quarter = [0.0, FRAC_PI_2, PI, 3.0 * FRAC_PI_2];
    match kind {
        ObjectKind::Box => vec![
            // Box frame origin is its centre, 5 cm above the table.
            vec![
                Vector3::new(-0.042, 0.0, 0.02),
                Vector3::new(0.042, 0.0, 0.02),
            ],
            vec![
                Vector3::new(0.0, -0.042, 0.02),
                Vector3::new(0.0, 0.042, 0.02),
            ],
        ],
        ObjectKind::Bowl => rim_grasps(&quarter, 0.04, 0.12, 0.055, 0.055),
        ObjectKind::Dish => rim_grasps(&quarter, 0.06, 0.14, 0.03, 0.02),
        ObjectKind::Mug => rim_grasps(&[FRAC_PI_2, PI, 3.0 * FRAC_PI_2], 0.005, 0.085, 0.08, 0.08),
        ObjectKind::WineGlass => rim_grasps(&quarter, 0.002, 0.082, 0.2, 0.2),
    }
}

pub fn table() -> SdfObject {
    SdfObject::table(0.0)
}

/// One object on the table with the robot at `pose`.
pub fn grasp_scene(kind: ObjectKind, pose: InitialPose) -> Scene {
    Scene {
        name: format!("{}_{}", kind.name(), pose.name()),
        objects: vec![table(), target_object(kind)],
        candidates: candidates(kind),
        initial_q: pose.joints(),
        disturbances: Vec::new(),
    }
}

/// The 5 objects x 3 initial poses grasping suite.
pub fn suite() -> Vec<(ObjectKind, InitialPose, Scene)> {
    ObjectKind::ALL
        .into_iter()
        .flat_map(|k| {
            InitialPose::ALL
                .into_iter()
                .map(move |p| (k, p, grasp_scene(k, p)))
        })
        .collect()
}

fn obstacle_box(id: &str, center: Vector3<f64>, half: [f64; 3]) -> SdfObject {
    SdfObject::new(
        id,
        Shape::Superellipsoid {
            a: half[0],
            b: half[1],
            c: half[2],
            e1: 0.3,
            e2: 0.3,
        },
        Isometry3::from_parts(Translation3::from(center), UnitQuaternion::identity()),
        Role::Obstacle,
    )
    .expect("obstacle parameters are valid")
}

/// Bowl with two box obstacles beside it; used for planning-rate
/// measurements.
pub fn bench_scene() -> Scene {
    let mut scene = grasp_scene(ObjectKind::Bowl, InitialPose::LeftBottom);
    scene.name = "bowl_two_obstacles".into();
    scene.objects.push(obstacle_box(
        "obstacle_left",
        Vector3::new(0.33, 0.13, 0.05),
        [0.025, 0.025, 0.05],
    ));
    scene.objects.push(obstacle_box(
        "obstacle_right",
        Vector3::new(0.57, -0.13, 0.05),
        [0.025, 0.025, 0.05],
    ));
    scene
}

/// Bowl grasp with two target teleports and one robot push. The close
/// trigger is disarmed until after the last event, see
/// [`DISTURBANCE_ARM_TIME`].
pub fn disturbance_scene() -> Scene {
    let mut scene = grasp_scene(ObjectKind::Bowl, InitialPose::CenterUp);
    scene.name = "bowl_disturbance".into();
    let mut push = vec![0.0; 15];
    push[0] = 0.8;
    push[1] = -0.6;
    scene.disturbances = vec![
        DisturbanceEvent {
            time: 4.0,
            kind: DisturbanceKind::ObjectTeleport {
                object: "bowl".into(),
                pose: Isometry3::translation(0.45, -0.2, 0.0),
            },
        },
        DisturbanceEvent {
            time: 8.0,
            kind: DisturbanceKind::RobotPush {
                qdot_offset: push,
                duration: 0.2,
            },
        },
        DisturbanceEvent {
            time: 12.0,
            kind: DisturbanceKind::ObjectTeleport {
                object: "bowl".into(),
                pose: Isometry3::translation(0.45, 0.1, 0.0),
            },
        },
    ];
    scene
}

/// Success is only accepted after this time in the disturbance scenario.
pub const DISTURBANCE_ARM_TIME: f64 = 14.0;

/// Wine glass approached from the left-bottom pose while four boxes sweep
/// along x through the corridor between hand and glass. The seed varies box
/// sizes, lanes, start times and speeds.
pub fn moving_boxes_scene(seed: u64) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scene = grasp_scene(ObjectKind::WineGlass, InitialPose::LeftBottom);
    scene.name = format!("wine_glass_moving_boxes_{seed}");
    for i in 0..4 {
        let side = if i < 2 { 1.0 } else { -1.0 };
        // Alternate sweep direction within each side.
        let dir = if i % 2 == 0 { 1.0 } else { -1.0 };
        let half = [
            rng.random_range(0.02..0.03),
            rng.random_range(0.015..0.025),
            rng.random_range(0.05..0.08),
        ];
        let y = side * rng.random_range(0.11..0.13);
        let x = if dir > 0.0 { 0.33 } else { 0.57 };
        let id = format!("moving_box_{i}");
        scene
            .objects
            .push(obstacle_box(&id, Vector3::new(x, y, half[2]), half));
        let speed = rng.random_range(0.06..0.1);
        scene.disturbances.push(DisturbanceEvent {
            time: rng.random_range(0.0..0.5),
            kind: DisturbanceKind::ObjectVelocity {
                object: id,
                linear: Vector3::new(dir * speed, 0.0, 0.0),
                angular: Vector3::zeros(),
                duration: 0.3 / speed,
            },
        });
    }
    scene
}
