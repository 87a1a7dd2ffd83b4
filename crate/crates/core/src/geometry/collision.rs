use nalgebra::{DMatrix, DVector, RowDVector};

use super::sdf::{sdf_eval, Role, SdfObject};
use crate::error::Result;
use crate::kinematics::{forward_kinematics, JointConfig, Kinematics, RobotModel};

/// Minimum tree distance (in joints) between two links for their spheres to
/// be checked against each other.
pub const MIN_SELF_PAIR_SEPARATION: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PairOther {
    Sphere(usize),
    /// Index into the object list the pair set was built for.
    Object(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollisionPair {
    pub sphere: usize,
    pub other: PairOther,
    pub margin: f64,
}

/// The rows of Γ(q): robot self-collision pairs and robot-versus-scene pairs
/// not already covered by the gripper point stack.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CollisionPairSet {
    pub pairs: Vec<CollisionPair>,
}

impl CollisionPairSet {
    /// Self pairs between links at least [`MIN_SELF_PAIR_SEPARATION`] joints
    /// apart, every moving sphere against environment objects, and every
    /// moving non-gripper sphere against targets and obstacles.
    pub fn for_scene(model: &RobotModel, objects: &[SdfObject], self_margin: f64) -> Self {
        let mut pairs = Vec::new();
        let n = model.spheres.len();
        for a in 0..n {
            for b in a + 1..n {
                let (la, lb) = (model.spheres[a].joint, model.spheres[b].joint);
                if la == lb || model.tree_distance(la, lb) < MIN_SELF_PAIR_SEPARATION {
                    continue;
                }
                pairs.push(CollisionPair {
                    sphere: a,
                    other: PairOther::Sphere(b),
                    margin: self_margin,
                });
            }
        }
        for (s, sphere) in model.spheres.iter().enumerate() {
            if sphere.joint.is_none() {
                continue;
            }
            let gripper = model.gripper_points.contains(&s);
            for (o, obj) in objects.iter().enumerate() {
                if obj.role == Role::Environment || !gripper {
                    pairs.push(CollisionPair {
                        sphere: s,
                        other: PairOther::Object(o),
                        margin: obj.margin,
                    });
                }
            }
        }
        CollisionPairSet { pairs }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Stacked distances with their joint-space Jacobian and per-row margins.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceStack {
    pub values: DVector<f64>,
    pub jacobian: DMatrix<f64>,
    pub margins: Vec<f64>,
    /// Set when some row had no defined gradient (zero row returned).
    pub degenerate: bool,
}

impl DistanceStack {
    pub fn empty(n: usize) -> Self {
        DistanceStack {
            values: DVector::zeros(0),
            jacobian: DMatrix::zeros(0, n),
            margins: Vec::new(),
            degenerate: false,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    fn from_rows(n: usize, rows: Vec<(f64, RowDVector<f64>, f64)>, degenerate: bool) -> Self {
        let mut values = DVector::zeros(rows.len());
        let mut jacobian = DMatrix::zeros(rows.len(), n);
        let mut margins = Vec::with_capacity(rows.len());
        for (i, (v, g, m)) in rows.into_iter().enumerate() {
            values[i] = v;
            jacobian.set_row(i, &g);
            margins.push(m);
        }
        DistanceStack {
            values,
            jacobian,
            margins,
            degenerate,
        }
    }
}

fn sphere_object_row(
    model: &RobotModel,
    kin: &Kinematics,
    sphere: usize,
    obj: &SdfObject,
    with_gradient: bool,
) -> (f64, RowDVector<f64>, bool) {
    let c = kin.sphere_centers[sphere];
    let d = sdf_eval(obj, &c);
    let value = d.value - model.spheres[sphere].radius;
    if !with_gradient {
        return (value, RowDVector::zeros(model.dof()), false);
    }
    let jac = kin.sphere_jacobian(model, sphere);
    let degenerate = d.gradient.norm_squared() == 0.0;
    (value, d.gradient.transpose() * jac, degenerate)
}

/// Γ rows and their Jacobian from a precomputed kinematics sweep.
pub fn gamma_from(
    model: &RobotModel,
    kin: &Kinematics,
    pairs: &CollisionPairSet,
    objects: &[SdfObject],
) -> DistanceStack {
    let n = model.dof();
    let mut degenerate = false;
    let rows = pairs
        .pairs
        .iter()
        .map(|pair| match pair.other {
            PairOther::Sphere(b) => {
                let a = pair.sphere;
                let diff = kin.sphere_centers[a] - kin.sphere_centers[b];
                let dist = diff.norm();
                let value = dist - model.spheres[a].radius - model.spheres[b].radius;
                let grad = if dist > 0.0 {
                    let u = diff / dist;
                    u.transpose() * (kin.sphere_jacobian(model, a) - kin.sphere_jacobian(model, b))
                } else {
                    degenerate = true;
                    RowDVector::zeros(n)
                };
                (value, grad, pair.margin)
            }
            PairOther::Object(o) => {
                let (v, g, deg) = sphere_object_row(model, kin, pair.sphere, &objects[o], true);
                degenerate |= deg;
                (v, g, pair.margin)
            }
        })
        .collect();
    DistanceStack::from_rows(n, rows, degenerate)
}

/// Γ(q) and dΓ/dq.
pub fn gamma(
    model: &RobotModel,
    q: &JointConfig,
    pairs: &CollisionPairSet,
    objects: &[SdfObject],
) -> Result<DistanceStack> {
    let kin = forward_kinematics(model, q)?;
    Ok(gamma_from(model, &kin, pairs, objects))
}

/// Gripper points against every target and obstacle: one row per
/// (point, object), object-major, distance minus sphere radius.
pub fn object_distance_stack_from(
    model: &RobotModel,
    kin: &Kinematics,
    objects: &[SdfObject],
) -> DistanceStack {
    let n = model.dof();
    let mut degenerate = false;
    let mut rows = Vec::new();
    for obj in objects.iter().filter(|o| o.role != Role::Environment) {
        for &s in &model.gripper_points {
            let (v, g, deg) = sphere_object_row(model, kin, s, obj, true);
            degenerate |= deg;
            rows.push((v, g, obj.margin));
        }
    }
    DistanceStack::from_rows(n, rows, degenerate)
}

pub fn object_distance_stack(
    model: &RobotModel,
    q: &JointConfig,
    objects: &[SdfObject],
) -> Result<DistanceStack> {
    let kin = forward_kinematics(model, q)?;
    Ok(object_distance_stack_from(model, &kin, objects))
}

/// Smallest clearance over Γ and the gripper stack without gradients.
pub fn min_clearances(
    model: &RobotModel,
    kin: &Kinematics,
    pairs: &CollisionPairSet,
    objects: &[SdfObject],
) -> (f64, f64) {
    let mut min_gamma = f64::INFINITY;
    for pair in &pairs.pairs {
        let v = match pair.other {
            PairOther::Sphere(b) => {
                let a = pair.sphere;
                (kin.sphere_centers[a] - kin.sphere_centers[b]).norm()
                    - model.spheres[a].radius
                    - model.spheres[b].radius
            }
            PairOther::Object(o) => {
                sphere_object_row(model, kin, pair.sphere, &objects[o], false).0
            }
        };
        min_gamma = min_gamma.min(v);
    }
    let mut min_obj = f64::INFINITY;
    for obj in objects.iter().filter(|o| o.role != Role::Environment) {
        for &s in &model.gripper_points {
            min_obj = min_obj.min(sphere_object_row(model, kin, s, obj, false).0);
        }
    }
    (min_gamma, min_obj)
}
