//! Serial-chain (tree) forward kinematics and geometric Jacobians.
//!
//! A [`RobotModel`] is a tree of revolute joints. Every joint moves one rigid
//! link; fingertip frames and collision spheres are attached to those links
//! (or to the fixed base). Joint `j`'s parent must precede it, so a single
//! forward sweep over the joint list evaluates the whole tree.

mod builtin;
mod model;

pub use builtin::{builtin_arm_hand, BUILTIN_NOMINAL_GRIPPER};
pub use model::{CollisionSphere, FingertipFrame, Joint, JointLimits, RobotFile, RobotModel};

use nalgebra::{DVector, Isometry3, Matrix3, Matrix3xX, Point3, Vector3};

use crate::error::{Error, Result};

/// Joint positions in radians, one entry per joint of the model.
#[derive(Debug, Clone, PartialEq)]
pub struct JointConfig(pub DVector<f64>);

impl JointConfig {
    pub fn zeros(n: usize) -> Self {
        JointConfig(DVector::zeros(n))
    }

    pub fn from_slice(q: &[f64]) -> Self {
        JointConfig(DVector::from_column_slice(q))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }
}

impl From<DVector<f64>> for JointConfig {
    fn from(v: DVector<f64>) -> Self {
        JointConfig(v)
    }
}

/// World position and orientation of one fingertip frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FingertipState {
    pub position: Vector3<f64>,
    pub rotation: Matrix3<f64>,
}

/// Position and orientation Jacobians of a fingertip: `xdot = linear * qdot`,
/// `Rdot R^T = [angular * qdot]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FingertipJacobian {
    pub linear: Matrix3xX<f64>,
    pub angular: Matrix3xX<f64>,
}

/// Result of a forward kinematics sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Kinematics {
    /// World pose of every link (after the joint rotation).
    pub link_poses: Vec<Isometry3<f64>>,
    /// World position of every joint's rotation axis origin.
    pub joint_origins: Vec<Vector3<f64>>,
    /// World direction of every joint's rotation axis.
    pub joint_axes: Vec<Vector3<f64>>,
    pub fingertips: Vec<FingertipState>,
    /// World center of every collision sphere, in model order.
    pub sphere_centers: Vec<Vector3<f64>>,
}

fn check_dim(model: &RobotModel, q: &JointConfig) -> Result<()> {
    if q.len() != model.dof() {
        return Err(Error::Dimension {
            expected: model.dof(),
            got: q.len(),
        });
    }
    Ok(())
}

/// Evaluates every link pose, fingertip frame and collision sphere center.
pub fn forward_kinematics(model: &RobotModel, q: &JointConfig) -> Result<Kinematics> {
    check_dim(model, q)?;
    let n = model.dof();
    let mut link_poses = Vec::with_capacity(n);
    let mut joint_origins = Vec::with_capacity(n);
    let mut joint_axes = Vec::with_capacity(n);

    for (j, joint) in model.joints.iter().enumerate() {
        let parent = match joint.parent {
            Some(p) => link_poses[p],
            None => Isometry3::identity(),
        };
        let frame: Isometry3<f64> = parent * joint.origin;
        let axis_world = frame.rotation * joint.axis.into_inner();
        let rot = nalgebra::UnitQuaternion::from_axis_angle(&joint.axis, q.0[j]);
        joint_origins.push(frame.translation.vector);
        joint_axes.push(axis_world);
        link_poses.push(frame * Isometry3::from_parts(nalgebra::Translation3::identity(), rot));
    }

    let fingertips = model
        .fingertips
        .iter()
        .map(|tip| {
            let pose = link_poses[tip.joint] * tip.offset;
            FingertipState {
                position: pose.translation.vector,
                rotation: *pose.rotation.to_rotation_matrix().matrix(),
            }
        })
        .collect();

    let sphere_centers = model
        .spheres
        .iter()
        .map(|s| match s.joint {
            Some(j) => (link_poses[j] * Point3::from(s.center)).coords,
            None => s.center,
        })
        .collect();

    Ok(Kinematics {
        link_poses,
        joint_origins,
        joint_axes,
        fingertips,
        sphere_centers,
    })
}

impl Kinematics {
    /// Linear Jacobian of a world point rigidly attached to `link`.
    /// Columns of joints that do not move `link` are zero.
    pub fn point_jacobian_at(
        &self,
        model: &RobotModel,
        link: Option<usize>,
        point: &Vector3<f64>,
    ) -> Matrix3xX<f64> {
        let mut jac = Matrix3xX::zeros(model.dof());
        if let Some(link) = link {
            for &k in model.chain(link) {
                let col = self.joint_axes[k].cross(&(point - self.joint_origins[k]));
                jac.set_column(k, &col);
            }
        }
        jac
    }

    /// Angular Jacobian of `link`.
    pub fn angular_jacobian(&self, model: &RobotModel, link: Option<usize>) -> Matrix3xX<f64> {
        let mut jac = Matrix3xX::zeros(model.dof());
        if let Some(link) = link {
            for &k in model.chain(link) {
                jac.set_column(k, &self.joint_axes[k]);
            }
        }
        jac
    }

    pub fn fingertip_jacobians(&self, model: &RobotModel) -> Vec<FingertipJacobian> {
        model
            .fingertips
            .iter()
            .zip(&self.fingertips)
            .map(|(tip, state)| FingertipJacobian {
                linear: self.point_jacobian_at(model, Some(tip.joint), &state.position),
                angular: self.angular_jacobian(model, Some(tip.joint)),
            })
            .collect()
    }

    /// Jacobian of collision sphere `index`'s world center.
    pub fn sphere_jacobian(&self, model: &RobotModel, index: usize) -> Matrix3xX<f64> {
        let joint = model.spheres[index].joint;
        self.point_jacobian_at(model, joint, &self.sphere_centers[index])
    }
}

/// Per-fingertip position and orientation Jacobians at `q`.
pub fn fingertip_jacobians(model: &RobotModel, q: &JointConfig) -> Result<Vec<FingertipJacobian>> {
    let kin = forward_kinematics(model, q)?;
    Ok(kin.fingertip_jacobians(model))
}

/// Jacobian of a collision sphere's center at `q`.
pub fn point_jacobian(
    model: &RobotModel,
    q: &JointConfig,
    sphere_index: usize,
) -> Result<Matrix3xX<f64>> {
    if sphere_index >= model.spheres.len() {
        return Err(Error::Config(format!(
            "sphere index {sphere_index} out of range ({} spheres)",
            model.spheres.len()
        )));
    }
    let kin = forward_kinematics(model, q)?;
    Ok(kin.sphere_jacobian(model, sphere_index))
}

/// `[w]` such that `[w] v = w x v`.
pub fn skew(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

/// Inverse of [`skew`] applied to the skew-symmetric part of `m`.
pub fn unskew(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    )
}
