use std::path::Path;

use nalgebra::{DMatrix, DVector, Isometry3, Translation3, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    pub name: String,
    /// Parent joint (whose link this joint is mounted on); `None` for the base.
    pub parent: Option<usize>,
    /// Fixed transform from the parent link frame to this joint's frame.
    pub origin: Isometry3<f64>,
    pub axis: Unit<Vector3<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FingertipFrame {
    pub joint: usize,
    pub offset: Isometry3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollisionSphere {
    /// Link the sphere is attached to; `None` is the fixed base.
    pub joint: Option<usize>,
    /// Center in the link frame (m).
    pub center: Vector3<f64>,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointLimits {
    pub q_min: DVector<f64>,
    pub q_max: DVector<f64>,
    pub qd_min: DVector<f64>,
    pub qd_max: DVector<f64>,
}

impl JointLimits {
    pub fn symmetric(n: usize, q: f64, qd: f64) -> Self {
        JointLimits {
            q_min: DVector::from_element(n, -q),
            q_max: DVector::from_element(n, q),
            qd_min: DVector::from_element(n, -qd),
            qd_max: DVector::from_element(n, qd),
        }
    }
}

/// An arm-hand system: revolute joint tree, fingertip frames, gripper joint
/// selection and a sphere decomposition of the links.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotModel {
    pub name: String,
    pub joints: Vec<Joint>,
    pub fingertips: Vec<FingertipFrame>,
    pub gripper_joints: Vec<usize>,
    pub spheres: Vec<CollisionSphere>,
    pub limits: JointLimits,
    /// Spheres approximating the gripper (the point set X of the object
    /// distance constraints).
    pub gripper_points: Vec<usize>,
    chains: Vec<Vec<usize>>,
    depth: Vec<usize>,
}

impl RobotModel {
    pub fn new(
        name: String,
        joints: Vec<Joint>,
        fingertips: Vec<FingertipFrame>,
        gripper_joints: Vec<usize>,
        spheres: Vec<CollisionSphere>,
        limits: JointLimits,
        gripper_points: Option<Vec<usize>>,
    ) -> Result<Self> {
        let n = joints.len();
        let mut chains: Vec<Vec<usize>> = Vec::with_capacity(n);
        let mut depth = Vec::with_capacity(n);
        for (j, joint) in joints.iter().enumerate() {
            if (joint.axis.norm() - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!("joint {j} axis is not unit-norm")));
            }
            let mut chain = match joint.parent {
                Some(p) if p >= j => {
                    return Err(Error::Config(format!(
                        "joint {j} has parent {p}; parents must precede children"
                    )))
                }
                Some(p) => chains[p].clone(),
                None => Vec::new(),
            };
            chain.push(j);
            depth.push(chain.len());
            chains.push(chain);
        }
        for (i, tip) in fingertips.iter().enumerate() {
            if tip.joint >= n {
                return Err(Error::Config(format!(
                    "fingertip {i} attached to missing joint {}",
                    tip.joint
                )));
            }
        }
        let mut seen = vec![false; n];
        for &g in &gripper_joints {
            if g >= n || seen[g] {
                return Err(Error::Config(format!(
                    "gripper joint index {g} is out of range or repeated"
                )));
            }
            seen[g] = true;
        }
        for (i, s) in spheres.iter().enumerate() {
            if !(s.radius > 0.0) {
                return Err(Error::Config(format!("sphere {i} radius must be positive")));
            }
            if matches!(s.joint, Some(j) if j >= n) {
                return Err(Error::Config(format!(
                    "sphere {i} attached to missing joint"
                )));
            }
        }
        for (name, v) in [
            ("q_min", &limits.q_min),
            ("q_max", &limits.q_max),
            ("qd_min", &limits.qd_min),
            ("qd_max", &limits.qd_max),
        ] {
            if v.len() != n {
                return Err(Error::Config(format!(
                    "limit vector {name} has length {} (expected {n})",
                    v.len()
                )));
            }
        }
        for j in 0..n {
            if !(limits.q_min[j] < limits.q_max[j]) {
                return Err(Error::Config(format!(
                    "joint {j}: q_min must be below q_max"
                )));
            }
            if limits.qd_min[j] > limits.qd_max[j] {
                return Err(Error::Config(format!("joint {j}: qd_min exceeds qd_max")));
            }
        }

        let mut model = RobotModel {
            name,
            joints,
            fingertips,
            gripper_joints,
            spheres,
            limits,
            gripper_points: Vec::new(),
            chains,
            depth,
        };
        model.gripper_points = match gripper_points {
            Some(points) => {
                if let Some(bad) = points.iter().find(|&&p| p >= model.spheres.len()) {
                    return Err(Error::Config(format!(
                        "gripper point {bad} is not a sphere index"
                    )));
                }
                points
            }
            None => model.default_gripper_points(),
        };
        Ok(model)
    }

    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn fingertip_count(&self) -> usize {
        self.fingertips.len()
    }

    /// Joints between the base and `link`, inclusive, root first.
    pub fn chain(&self, link: usize) -> &[usize] {
        &self.chains[link]
    }

    /// Whether `joint` moves `link`.
    pub fn moves(&self, joint: usize, link: Option<usize>) -> bool {
        link.is_some_and(|l| self.chains[l].contains(&joint))
    }

    /// Number of joints separating two links in the kinematic tree.
    pub fn tree_distance(&self, a: Option<usize>, b: Option<usize>) -> usize {
        let ca: &[usize] = a.map_or(&[], |l| &self.chains[l]);
        let cb: &[usize] = b.map_or(&[], |l| &self.chains[l]);
        let common = ca.iter().zip(cb).take_while(|(x, y)| x == y).count();
        ca.len() + cb.len() - 2 * common
    }

    /// Selection matrix extracting gripper joint velocities.
    pub fn selection_matrix(&self) -> DMatrix<f64> {
        let mut s = DMatrix::zeros(self.gripper_joints.len(), self.dof());
        for (row, &j) in self.gripper_joints.iter().enumerate() {
            s[(row, j)] = 1.0;
        }
        s
    }

    /// Link carrying the gripper joints, i.e. the deepest common ancestor of
    /// all gripper joints that is not itself a gripper joint.
    pub fn palm_link(&self) -> Option<usize> {
        let first = *self.gripper_joints.first()?;
        let mut candidate: Vec<usize> = self.chains[first].clone();
        for &g in &self.gripper_joints[1..] {
            let c = &self.chains[g];
            let common = candidate.iter().zip(c).take_while(|(x, y)| x == y).count();
            candidate.truncate(common);
        }
        candidate
            .into_iter()
            .rev()
            .find(|j| !self.gripper_joints.contains(j))
    }

    /// Spheres on the palm link or any link moved by a gripper joint.
    pub fn hand_spheres(&self) -> Vec<usize> {
        let palm = self.palm_link();
        self.spheres
            .iter()
            .enumerate()
            .filter(|(_, s)| match s.joint {
                Some(j) => {
                    Some(j) == palm || self.gripper_joints.iter().any(|&g| self.moves(g, Some(j)))
                }
                None => false,
            })
            .map(|(i, _)| i)
            .collect()
    }

    fn default_gripper_points(&self) -> Vec<usize> {
        self.hand_spheres()
    }

    pub fn depth(&self, link: usize) -> usize {
        self.depth[link]
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: RobotFile = serde_json::from_str(&text).map_err(|e| Error::parse(path, e))?;
        file.into_model()
    }

    pub fn to_file(&self) -> RobotFile {
        RobotFile::from_model(self)
    }
}

/// On-disk robot description (JSON). Angles in radians, lengths in meters.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RobotFile {
    pub name: String,
    pub joints: Vec<JointEntry>,
    pub fingertips: Vec<FingertipEntry>,
    pub collision_spheres: Vec<SphereEntry>,
    pub gripper_joints: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gripper_points: Option<Vec<usize>>,
    pub limits: LimitsEntry,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct JointEntry {
    #[serde(default)]
    pub name: String,
    pub parent: Option<usize>,
    pub axis: [f64; 3],
    pub origin_xyz: [f64; 3],
    #[serde(default)]
    pub origin_rpy: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FingertipEntry {
    pub parent: usize,
    pub origin_xyz: [f64; 3],
    #[serde(default)]
    pub origin_rpy: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SphereEntry {
    pub parent: Option<usize>,
    pub center: [f64; 3],
    pub radius: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LimitsEntry {
    pub q_min: Vec<f64>,
    pub q_max: Vec<f64>,
    pub qd_min: Vec<f64>,
    pub qd_max: Vec<f64>,
}

fn iso(xyz: [f64; 3], rpy: [f64; 3]) -> Isometry3<f64> {
    Isometry3::from_parts(
        Translation3::new(xyz[0], xyz[1], xyz[2]),
        UnitQuaternion::from_euler_angles(rpy[0], rpy[1], rpy[2]),
    )
}

fn xyz_rpy(pose: &Isometry3<f64>) -> ([f64; 3], [f64; 3]) {
    let t = pose.translation.vector;
    let (r, p, y) = pose.rotation.euler_angles();
    ([t.x, t.y, t.z], [r, p, y])
}

impl RobotFile {
    pub fn into_model(self) -> Result<RobotModel> {
        let joints = self
            .joints
            .into_iter()
            .enumerate()
            .map(|(i, j)| {
                let axis = Vector3::from(j.axis);
                if (axis.norm() - 1.0).abs() > 1e-9 {
                    return Err(Error::Config(format!("joint {i} axis is not unit-norm")));
                }
                Ok(Joint {
                    name: if j.name.is_empty() {
                        format!("joint{i}")
                    } else {
                        j.name
                    },
                    parent: j.parent,
                    origin: iso(j.origin_xyz, j.origin_rpy),
                    axis: Unit::new_unchecked(axis),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let fingertips = self
            .fingertips
            .into_iter()
            .map(|f| FingertipFrame {
                joint: f.parent,
                offset: iso(f.origin_xyz, f.origin_rpy),
            })
            .collect();
        let spheres = self
            .collision_spheres
            .into_iter()
            .map(|s| CollisionSphere {
                joint: s.parent,
                center: Vector3::from(s.center),
                radius: s.radius,
            })
            .collect();
        let limits = JointLimits {
            q_min: DVector::from_vec(self.limits.q_min),
            q_max: DVector::from_vec(self.limits.q_max),
            qd_min: DVector::from_vec(self.limits.qd_min),
            qd_max: DVector::from_vec(self.limits.qd_max),
        };
        RobotModel::new(
            self.name,
            joints,
            fingertips,
            self.gripper_joints,
            spheres,
            limits,
            self.gripper_points,
        )
    }

    pub fn from_model(model: &RobotModel) -> Self {
        RobotFile {
            name: model.name.clone(),
            joints: model
                .joints
                .iter()
                .map(|j| {
                    let (xyz, rpy) = xyz_rpy(&j.origin);
                    JointEntry {
                        name: j.name.clone(),
                        parent: j.parent,
                        axis: [j.axis.x, j.axis.y, j.axis.z],
                        origin_xyz: xyz,
                        origin_rpy: rpy,
                    }
                })
                .collect(),
            fingertips: model
                .fingertips
                .iter()
                .map(|f| {
                    let (xyz, rpy) = xyz_rpy(&f.offset);
                    FingertipEntry {
                        parent: f.joint,
                        origin_xyz: xyz,
                        origin_rpy: rpy,
                    }
                })
                .collect(),
            collision_spheres: model
                .spheres
                .iter()
                .map(|s| SphereEntry {
                    parent: s.joint,
                    center: [s.center.x, s.center.y, s.center.z],
                    radius: s.radius,
                })
                .collect(),
            gripper_joints: model.gripper_joints.clone(),
            gripper_points: Some(model.gripper_points.clone()),
            limits: LimitsEntry {
                q_min: model.limits.q_min.iter().copied().collect(),
                q_max: model.limits.q_max.iter().copied().collect(),
                qd_min: model.limits.qd_min.iter().copied().collect(),
                qd_max: model.limits.qd_max.iter().copied().collect(),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::{builtin_arm_hand, forward_kinematics, JointConfig};

    #[test]
    fn rejects_bad_models() {
        let good = builtin_arm_hand().to_file();

        let mut f = good.clone();
        f.joints[3].axis = [0.0, 2.0, 0.0];
        assert!(f.into_model().is_err());

        let mut f = good.clone();
        f.gripper_joints.push(7);
        assert!(f.into_model().is_err());

        let mut f = good.clone();
        f.limits.q_min[2] = f.limits.q_max[2];
        assert!(f.into_model().is_err());

        let mut f = good.clone();
        f.collision_spheres[0].radius = 0.0;
        assert!(f.into_model().is_err());

        let mut f = good;
        f.joints[1].parent = Some(4);
        assert!(f.into_model().is_err());
    }

    #[test]
    fn robot_file_roundtrip_preserves_kinematics() {
        let model = builtin_arm_hand();
        let json = serde_json::to_string_pretty(&model.to_file()).unwrap();
        let back: RobotFile = serde_json::from_str(&json).unwrap();
        let reloaded = back.into_model().unwrap();
        let q = JointConfig::from_slice(&[
            0.3, -0.4, 0.2, 1.1, -0.7, 0.5, 0.9, 0.1, 0.2, 0.3, 0.4, -0.1, 0.5, 0.6, 0.2,
        ]);
        let a = forward_kinematics(&model, &q).unwrap();
        let b = forward_kinematics(&reloaded, &q).unwrap();
        for (x, y) in a.sphere_centers.iter().zip(&b.sphere_centers) {
            assert!((x - y).norm() < 1e-12);
        }
        for (x, y) in a.fingertips.iter().zip(&b.fingertips) {
            assert!((x.rotation - y.rotation).norm() < 1e-12);
        }
    }

    #[test]
    fn tree_queries() {
        let model = builtin_arm_hand();
        assert_eq!(model.palm_link(), Some(6));
        assert_eq!(model.tree_distance(Some(10), Some(14)), 8);
        assert_eq!(model.tree_distance(None, Some(2)), 3);
        assert_eq!(model.tree_distance(Some(5), Some(5)), 0);
        let hand = model.hand_spheres();
        assert!(hand.iter().all(|&s| model.spheres[s].joint.unwrap() >= 6));
        let s = model.selection_matrix();
        assert_eq!(s.shape(), (8, 15));
        assert_eq!(s[(0, 7)], 1.0);
    }
}
