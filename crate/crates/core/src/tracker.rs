//! Joint-space tracking QP: weighted fingertip, orientation and gripper
//! velocity tracking under linearized collision, joint-limit and velocity
//! constraints.

use nalgebra::{DMatrix, DVector, RowDVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::VelocityTargets;
use crate::geometry::DistanceStack;
use crate::kinematics::{JointConfig, Kinematics, RobotModel};
use crate::qp::{QpProblem, QpSettings, QpSolution, QpSolver, QpStatus};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerParams {
    /// Look-ahead used to turn position constraints into velocity rows (s).
    pub horizon: f64,
    /// Margin for robot self and environment pairs (m).
    pub self_margin: f64,
    /// Tikhonov weight on joint velocity.
    pub regularization: f64,
    /// Distance rows above this value are left out of the tick (m).
    pub prune_distance: f64,
    pub qp_tol: f64,
    pub qp_max_iters: usize,
    pub backoff_factor: f64,
    pub max_backoffs: usize,
}

impl Default for TrackerParams {
    fn default() -> Self {
        TrackerParams {
            horizon: 0.15,
            self_margin: 0.005,
            regularization: 1e-4,
            prune_distance: 0.15,
            qp_tol: 1e-6,
            qp_max_iters: 4000,
            backoff_factor: 0.5,
            max_backoffs: 5,
        }
    }
}

impl TrackerParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0) {
            return Err(Error::Config("planning horizon must be positive".into()));
        }
        if !(self.self_margin > 0.0) {
            return Err(Error::Config(
                "self-collision margin must be positive".into(),
            ));
        }
        if !(self.regularization >= 0.0) {
            return Err(Error::Config("regularization must be non-negative".into()));
        }
        if !(self.backoff_factor > 0.0 && self.backoff_factor < 1.0) {
            return Err(Error::Config("backoff factor must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Origin of one constraint row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowKind {
    /// Row of the self/environment stack.
    Gamma(usize),
    /// Row of the gripper-point object stack.
    Object(usize),
    /// Joint position and velocity limits of one joint, merged into one box.
    Joint(usize),
}

#[derive(Debug, Clone)]
pub struct TrackerQp {
    pub qp: QpProblem,
    pub rows: Vec<RowKind>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub position: f64,
    pub orientation: f64,
    pub gripper: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackStatus {
    Solved,
    /// Iteration cap hit; the iterate was scaled until the rows held.
    BackedOff,
    /// No safe iterate; zero velocity returned.
    Stalled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerOutput {
    pub qdot: DVector<f64>,
    pub status: TrackStatus,
    pub qp_status: QpStatus,
    pub iterations: usize,
    pub active_rows: Vec<RowKind>,
    pub cost: CostBreakdown,
    /// Largest violation of the tick's linear rows by `qdot`.
    pub constraint_residual: f64,
    pub backoffs: usize,
    pub rows: usize,
}

fn check_finite(m: &[f64], what: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Assembles the tracking QP at the configuration `kin` was computed for.
pub fn build_qp(
    model: &RobotModel,
    kin: &Kinematics,
    q: &JointConfig,
    targets: &VelocityTargets,
    gamma: &DistanceStack,
    objects: &DistanceStack,
    params: &TrackerParams,
) -> Result<TrackerQp> {
    let n = model.dof();
    if q.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: q.len(),
        });
    }
    let m = model.fingertip_count();
    if targets.xdot_des.len() != m || targets.omega_des.len() != m {
        return Err(Error::Dimension {
            expected: m,
            got: targets.xdot_des.len(),
        });
    }
    let s = model.selection_matrix();
    if targets.qdot_gr_des.len() != s.nrows() {
        return Err(Error::Dimension {
            expected: s.nrows(),
            got: targets.qdot_gr_des.len(),
        });
    }

    let jacs = kin.fingertip_jacobians(model);
    let mut hess = DMatrix::identity(n, n) * params.regularization;
    let mut grad = DVector::zeros(n);
    for (i, jac) in jacs.iter().enumerate() {
        hess += jac.linear.transpose() * &jac.linear;
        grad += jac.linear.transpose() * targets.xdot_des[i];
        if targets.alpha > 0.0 {
            hess += jac.angular.transpose() * &jac.angular * targets.alpha;
            grad += jac.angular.transpose() * targets.omega_des[i] * targets.alpha;
        }
    }
    if targets.beta > 0.0 {
        hess += s.transpose() * &s * targets.beta;
        grad += s.transpose() * &targets.qdot_gr_des * targets.beta;
    }
    let p = &hess + hess.transpose();
    let c = grad * -2.0;
    check_finite(p.as_slice(), "tracking cost")?;
    check_finite(c.as_slice(), "tracking cost")?;

    let h = params.horizon;
    let mut rows: Vec<(RowKind, RowDVector<f64>, f64, f64)> = Vec::new();
    for (stack, kind) in [
        (gamma, RowKind::Gamma as fn(usize) -> RowKind),
        (objects, RowKind::Object),
    ] {
        check_finite(stack.values.as_slice(), "distance")?;
        check_finite(stack.jacobian.as_slice(), "distance gradient")?;
        for k in 0..stack.len() {
            if stack.values[k] > params.prune_distance {
                continue;
            }
            // value + grad . qdot H >= margin
            let lower = (stack.margins[k] - stack.values[k]) / h;
            rows.push((
                kind(k),
                stack.jacobian.row(k).into_owned(),
                lower,
                f64::INFINITY,
            ));
        }
    }
    let lim = &model.limits;
    for j in 0..n {
        let qj = q.0[j];
        let mut lo = lim.qd_min[j].max((lim.q_min[j] - qj) / h);
        let mut hi = lim.qd_max[j].min((lim.q_max[j] - qj) / h);
        if lo > hi {
            // Outside the position limits: head back as fast as allowed.
            let v = if qj > lim.q_max[j] {
                lim.qd_min[j].max(hi)
            } else {
                lim.qd_max[j].min(lo)
            };
            lo = v;
            hi = v;
        }
        let mut e = RowDVector::zeros(n);
        e[j] = 1.0;
        rows.push((RowKind::Joint(j), e, lo, hi));
    }

    let r = rows.len();
    let mut a = DMatrix::zeros(r, n);
    let mut lower = DVector::zeros(r);
    let mut upper = DVector::zeros(r);
    let mut kinds = Vec::with_capacity(r);
    for (i, (kind, row, lo, hi)) in rows.into_iter().enumerate() {
        a.set_row(i, &row);
        lower[i] = lo;
        upper[i] = hi;
        kinds.push(kind);
    }
    Ok(TrackerQp {
        qp: QpProblem {
            p,
            c,
            a,
            lower,
            upper,
        },
        rows: kinds,
    })
}

/// Largest amount by which `qdot` violates the rows of `qp`.
pub fn row_violation(qp: &QpProblem, qdot: &DVector<f64>) -> f64 {
    let az = &qp.a * qdot;
    (0..qp.num_rows()).fold(0.0, |acc, i| {
        acc.max(qp.lower[i] - az[i]).max(az[i] - qp.upper[i])
    })
}

pub fn cost_breakdown(
    model: &RobotModel,
    kin: &Kinematics,
    targets: &VelocityTargets,
    qdot: &DVector<f64>,
) -> CostBreakdown {
    let jacs = kin.fingertip_jacobians(model);
    let mut cost = CostBreakdown::default();
    for (i, jac) in jacs.iter().enumerate() {
        cost.position += (targets.xdot_des[i] - &jac.linear * qdot).norm_squared();
        cost.orientation +=
            targets.alpha * (targets.omega_des[i] - &jac.angular * qdot).norm_squared();
    }
    let s = model.selection_matrix();
    cost.gripper = targets.beta * (&targets.qdot_gr_des - s * qdot).norm_squared();
    cost
}

/// Owns the QP workspace and the previous tick's solution for warm starts.
#[derive(Debug, Clone)]
pub struct Tracker {
    pub params: TrackerParams,
    solver: QpSolver,
    warm: Option<QpSolution>,
}

impl Tracker {
    pub fn new(params: TrackerParams) -> Self {
        let settings = QpSettings::default()
            .with_tolerances(params.qp_tol, params.qp_tol)
            .with_max_iters(params.qp_max_iters);
        Tracker {
            params,
            solver: QpSolver::new(settings),
            warm: None,
        }
    }

    pub fn reset(&mut self) {
        self.warm = None;
    }

    pub fn track(
        &mut self,
        model: &RobotModel,
        kin: &Kinematics,
        q: &JointConfig,
        targets: &VelocityTargets,
        gamma: &DistanceStack,
        objects: &DistanceStack,
    ) -> Result<TrackerOutput> {
        let built = build_qp(model, kin, q, targets, gamma, objects, &self.params)?;
        let qp = &built.qp;
        let sol = self.solver.solve(qp, self.warm.as_ref());
        let n = model.dof();
        let tol = self.params.qp_tol;

        let (mut qdot, mut status, mut backoffs) = match sol.status {
            QpStatus::Solved => (sol.z.clone(), TrackStatus::Solved, 0),
            QpStatus::PrimalInfeasible => (DVector::zeros(n), TrackStatus::Stalled, 0),
            QpStatus::MaxIters => {
                let mut v = sol.z.clone();
                let mut k = 0;
                while row_violation(qp, &v) > tol && k < self.params.max_backoffs {
                    v *= self.params.backoff_factor;
                    k += 1;
                }
                if row_violation(qp, &v) > tol {
                    (DVector::zeros(n), TrackStatus::Stalled, k)
                } else {
                    (v, TrackStatus::BackedOff, k)
                }
            }
        };
        if !qdot.iter().all(|v| v.is_finite()) {
            qdot = DVector::zeros(n);
            status = TrackStatus::Stalled;
            backoffs = 0;
        }
        self.warm = if sol.status == QpStatus::Solved {
            Some(sol.clone())
        } else {
            None
        };

        let az = &qp.a * &qdot;
        let active_rows = (0..qp.num_rows())
            .filter(|&i| az[i] - qp.lower[i] <= 1e-6 || qp.upper[i] - az[i] <= 1e-6)
            .map(|i| built.rows[i])
            .collect();
        Ok(TrackerOutput {
            constraint_residual: row_violation(qp, &qdot).max(0.0),
            cost: cost_breakdown(model, kin, targets, &qdot),
            qdot,
            status,
            qp_status: sol.status,
            iterations: sol.iterations,
            active_rows,
            backoffs,
            rows: qp.num_rows(),
        })
    }
}
