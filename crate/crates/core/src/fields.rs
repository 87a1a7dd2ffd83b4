//! Per-tick velocity targets: fingertip linear fields, the orientation
//! stability field, the gripper posture field and their blending weights.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{skew, unskew, FingertipState, BUILTIN_NOMINAL_GRIPPER};
use crate::pathopt::PathSolution;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldParams {
    /// Maximum fingertip speed (m/s).
    pub v_const: f64,
    /// Distance below which fingertip speed decays (m).
    pub delta_x: f64,
    /// Stability threshold and temperature for the orientation weight (rad).
    pub eta_g: f64,
    pub t_g: f64,
    /// Distance threshold and temperature for the gripper weight (m).
    pub eta_h: f64,
    pub t_h: f64,
    /// Angle weight in the target-selection metric (m/rad).
    pub w: f64,
    /// Posture distance below which gripper speed decays (rad).
    pub delta_gr: f64,
    /// Maximum gripper posture speed (rad/s).
    pub v_const_gr: f64,
    /// Nominal gripper posture; `None` uses the built-in hand's.
    pub q_gr_nominal: Option<Vec<f64>>,
    /// Isotropic gain of the linear baseline field (1/s).
    pub baseline_gain: f64,
}

impl Default for FieldParams {
    fn default() -> Self {
        FieldParams {
            v_const: 0.25,
            delta_x: 0.08,
            eta_g: 0.2,
            t_g: 0.1,
            eta_h: 0.05,
            t_h: 0.02,
            w: 0.1,
            delta_gr: 0.3,
            v_const_gr: 1.0,
            q_gr_nominal: None,
            baseline_gain: 3.0,
        }
    }
}

impl FieldParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("v_const", self.v_const),
            ("delta_x", self.delta_x),
            ("eta_g", self.eta_g),
            ("t_g", self.t_g),
            ("eta_h", self.eta_h),
            ("t_h", self.t_h),
            ("delta_gr", self.delta_gr),
            ("v_const_gr", self.v_const_gr),
            ("baseline_gain", self.baseline_gain),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!(
                    "field parameter {name} must be positive, got {v}"
                )));
            }
        }
        if !(self.w >= 0.0) {
            return Err(Error::Config(
                "target-selection weight w must be non-negative".into(),
            ));
        }
        Ok(())
    }

    pub fn nominal_gripper(&self) -> DVector<f64> {
        match &self.q_gr_nominal {
            Some(q) => DVector::from_column_slice(q),
            None => DVector::from_column_slice(&BUILTIN_NOMINAL_GRIPPER),
        }
    }
}

/// Velocity targets for one planning tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocityTargets {
    pub xdot_des: Vec<Vector3<f64>>,
    pub omega_des: Vec<Vector3<f64>>,
    pub qdot_gr_des: DVector<f64>,
    pub alpha: f64,
    pub beta: f64,
    pub selected: usize,
    pub x_star: Vec<Vector3<f64>>,
    /// Stability score, `None` when undefined for this tick.
    pub g: Option<f64>,
    /// Set when some fingertip had no usable direction.
    pub degenerate: bool,
}

impl VelocityTargets {
    /// All-zero targets that hold the robot still.
    pub fn zero(m: usize, n_gr: usize) -> Self {
        VelocityTargets {
            xdot_des: vec![Vector3::zeros(); m],
            omega_des: vec![Vector3::zeros(); m],
            qdot_gr_des: DVector::zeros(n_gr),
            alpha: 0.0,
            beta: 0.0,
            selected: 0,
            x_star: vec![Vector3::zeros(); m],
            g: None,
            degenerate: false,
        }
    }
}

/// Unsigned angle in [0, pi]; zero when either vector vanishes.
pub fn angle_between(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    a.cross(b).norm().atan2(a.dot(b))
}

/// Summed fingertip distances plus `w` times the angle between the current
/// and candidate inter-fingertip axes (two fingertips only).
pub fn target_metric(x: &[Vector3<f64>], candidate: &[Vector3<f64>], w: f64) -> f64 {
    let pos: f64 = x.iter().zip(candidate).map(|(a, b)| (a - b).norm()).sum();
    if x.len() == 2 {
        pos + w * angle_between(&(x[1] - x[0]), &(candidate[1] - candidate[0]))
    } else {
        pos
    }
}

/// Index of the candidate minimizing [`target_metric`]; ties go to the
/// lowest index.
pub fn select_target(
    x: &[Vector3<f64>],
    candidates: &[Vec<Vector3<f64>>],
    w: f64,
) -> Result<usize> {
    if candidates.is_empty() {
        return Err(Error::Config("no candidate grasps".into()));
    }
    let mut best = (0, f64::INFINITY);
    for (i, c) in candidates.iter().enumerate() {
        if c.len() != x.len() {
            return Err(Error::Dimension {
                expected: x.len(),
                got: c.len(),
            });
        }
        let v = target_metric(x, c, w);
        if v < best.1 {
            best = (i, v);
        }
    }
    Ok(best.0)
}

/// Constant speed far away, quadratic decay to zero at the target.
pub fn speed_profile(e: f64, v_const: f64, delta: f64) -> f64 {
    if e > delta {
        v_const
    } else {
        let s = 1.0 - e / delta;
        v_const * (1.0 - s * s)
    }
}

/// Fingertip velocity along the path's initial direction; second value is
/// true when the direction was degenerate and zero was returned.
pub fn fingertip_field(
    path: &PathSolution,
    x: &Vector3<f64>,
    x_star: &Vector3<f64>,
    params: &FieldParams,
) -> (Vector3<f64>, bool) {
    if path.degenerate_direction {
        return (Vector3::zeros(), true);
    }
    let v = speed_profile((x - x_star).norm(), params.v_const, params.delta_x);
    (path.initial_direction * v, false)
}

/// Grasp stability score with its gradients with respect to each fingertip
/// rotation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityScore {
    pub g: f64,
    pub gradient: [Matrix3<f64>; 2],
}

/// Step of the central differences along rotation generators (rad).
pub const ROTATION_FD_STEP: f64 = 1e-5;

fn score(x1: &Vector3<f64>, r1: &Matrix3<f64>, x2: &Vector3<f64>, r2: &Matrix3<f64>) -> f64 {
    let a1 = angle_between(&(x2 - x1), &(r1.column(0) + r1.column(1)));
    let a2 = angle_between(&(x1 - x2), &(r2.column(0) + r2.column(1)));
    0.5 * (a1 + a2)
}

/// Rotation by `angle` about unit-axis `k` (Rodrigues).
fn axis_rotation(axis: &Vector3<f64>, angle: f64) -> Matrix3<f64> {
    let k = skew(axis);
    Matrix3::identity() + k * angle.sin() + k * k * (1.0 - angle.cos())
}

/// Mean angle between each pad direction `R^x + R^y` and the direction to
/// the other fingertip. `None` when the fingertips coincide.
pub fn stability_score(
    x1: &Vector3<f64>,
    r1: &Matrix3<f64>,
    x2: &Vector3<f64>,
    r2: &Matrix3<f64>,
) -> Option<StabilityScore> {
    if (x2 - x1).norm() == 0.0 {
        return None;
    }
    let g = score(x1, r1, x2, r2);
    let h = ROTATION_FD_STEP;
    let mut gradient = [Matrix3::zeros(); 2];
    for (i, grad) in gradient.iter_mut().enumerate() {
        for k in 0..3 {
            let e = Vector3::ith(k, 1.0);
            let plus = axis_rotation(&e, h);
            let minus = axis_rotation(&e, -h);
            let (gp, gm) = if i == 0 {
                (
                    score(x1, &(r1 * plus), x2, r2),
                    score(x1, &(r1 * minus), x2, r2),
                )
            } else {
                (
                    score(x1, r1, x2, &(r2 * plus)),
                    score(x1, r1, x2, &(r2 * minus)),
                )
            };
            let dg = (gp - gm) / (2.0 * h);
            let r = if i == 0 { r1 } else { r2 };
            // <R[e_k], R[e_j]> = 2 delta_kj
            *grad += r * skew(&e) * (dg / 2.0);
        }
    }
    Some(StabilityScore { g, gradient })
}

/// Angular velocity `-unskew(G R^T)` after projecting `G R^T` onto its
/// skew-symmetric part; decreases g to first order.
pub fn orientation_field(gradient: &Matrix3<f64>, r: &Matrix3<f64>) -> Vector3<f64> {
    -unskew(&(gradient * r.transpose()))
}

pub fn weight_alpha(g: f64, eta_g: f64, t_g: f64) -> f64 {
    0.5 + 0.5 * ((g - eta_g) / t_g).tanh()
}

pub fn weight_beta(h: f64, eta_h: f64, t_h: f64) -> f64 {
    0.5 + 0.5 * ((h - eta_h) / t_h).tanh()
}

/// Gripper joint velocity toward the nominal posture, with the same speed
/// profile as the fingertips.
pub fn gripper_field(
    q_gr: &DVector<f64>,
    q_gr_star: &DVector<f64>,
    delta_gr: f64,
    v_const_gr: f64,
) -> DVector<f64> {
    let diff = q_gr_star - q_gr;
    let norm = diff.norm();
    if norm == 0.0 {
        return DVector::zeros(q_gr.len());
    }
    diff * (speed_profile(norm, v_const_gr, delta_gr) / norm)
}

/// `K (x* - x)`.
pub fn linear_baseline(x: &DVector<f64>, x_star: &DVector<f64>, k: &DMatrix<f64>) -> DVector<f64> {
    k * (x_star - x)
}

/// Source of the fingertip linear velocities.
#[derive(Debug, Clone, Copy)]
pub enum PositionField<'a> {
    /// One optimized path per fingertip.
    Paths(&'a [PathSolution]),
    Linear,
}

/// Assembles all targets for one tick from the current fingertip states and
/// the selected target positions.
pub fn velocity_targets(
    tips: &[FingertipState],
    x_star: &[Vector3<f64>],
    selected: usize,
    field: PositionField,
    q_gr: &DVector<f64>,
    params: &FieldParams,
) -> VelocityTargets {
    let m = tips.len();
    let mut degenerate = false;
    let xdot_des: Vec<Vector3<f64>> = match field {
        PositionField::Paths(paths) => tips
            .iter()
            .zip(paths)
            .zip(x_star)
            .map(|((tip, path), goal)| {
                let (v, flag) = fingertip_field(path, &tip.position, goal, params);
                degenerate |= flag;
                v
            })
            .collect(),
        PositionField::Linear => {
            let x =
                DVector::from_iterator(3 * m, tips.iter().flat_map(|t| t.position.iter().copied()));
            let xs = DVector::from_iterator(3 * m, x_star.iter().flat_map(|p| p.iter().copied()));
            let k = DMatrix::identity(3 * m, 3 * m) * params.baseline_gain;
            let v = linear_baseline(&x, &xs, &k);
            (0..m)
                .map(|i| Vector3::new(v[3 * i], v[3 * i + 1], v[3 * i + 2]))
                .collect()
        }
    };

    let (g, alpha, omega_des) = match tips {
        [a, b] => match stability_score(&a.position, &a.rotation, &b.position, &b.rotation) {
            Some(s) => (
                Some(s.g),
                weight_alpha(s.g, params.eta_g, params.t_g),
                vec![
                    orientation_field(&s.gradient[0], &a.rotation),
                    orientation_field(&s.gradient[1], &b.rotation),
                ],
            ),
            None => (None, 0.0, vec![Vector3::zeros(); 2]),
        },
        _ => (None, 0.0, vec![Vector3::zeros(); m]),
    };

    let h = tips
        .iter()
        .zip(x_star)
        .map(|(t, p)| (t.position - p).norm_squared())
        .sum::<f64>()
        .sqrt();
    let beta = weight_beta(h, params.eta_h, params.t_h);
    let qdot_gr_des = gripper_field(
        q_gr,
        &params.nominal_gripper(),
        params.delta_gr,
        params.v_const_gr,
    );

    VelocityTargets {
        xdot_des,
        omega_des,
        qdot_gr_des,
        alpha,
        beta,
        selected,
        x_star: x_star.to_vec(),
        g,
        degenerate,
    }
}
