//! Shortest discretized fingertip paths with clearance constraints, solved
//! by a few trust-region SQP iterations from a via-point initialization.

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{sdf_eval, SdfObject};
use crate::qp::{QpProblem, QpSettings, QpSolution, QpSolver, QpStatus};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PathParams {
    /// Number of waypoints including both endpoints.
    pub grid_size: usize,
    pub sqp_iters: usize,
    /// Half-width of the per-coordinate step box (m).
    pub trust_region: f64,
    pub via_radius: f64,
    pub via_candidates: usize,
    /// Constraint rows farther than this from activation are dropped (m).
    pub prune_distance: f64,
    /// A warm-started path violating clearance by more than this (m) is
    /// discarded in favour of a fresh via-point initialization.
    pub reinit_violation: f64,
    pub qp_tol: f64,
    pub qp_max_iters: usize,
}

impl Default for PathParams {
    fn default() -> Self {
        PathParams {
            grid_size: 100,
            sqp_iters: 3,
            trust_region: 0.05,
            via_radius: 0.10,
            via_candidates: 256,
            prune_distance: 0.1,
            reinit_violation: 0.02,
            qp_tol: 1e-5,
            qp_max_iters: 4000,
        }
    }
}

impl PathParams {
    pub fn validate(&self) -> Result<()> {
        if self.grid_size < 3 {
            return Err(Error::Config("path grid size must be at least 3".into()));
        }
        if !(self.trust_region > 0.0 && self.via_radius > 0.0 && self.prune_distance > 0.0) {
            return Err(Error::Config(
                "path trust region, via radius and prune distance must be positive".into(),
            ));
        }
        if self.via_candidates == 0 {
            return Err(Error::Config(
                "at least one via-point candidate is required".into(),
            ));
        }
        Ok(())
    }
}

/// One fingertip's path query. Each object contributes `d(x) >= margin`.
#[derive(Debug, Clone, Copy)]
pub struct PathProblem<'a> {
    pub start: Vector3<f64>,
    pub goal: Vector3<f64>,
    pub objects: &'a [SdfObject],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSolution {
    /// `waypoints[0] == start`, `waypoints[last] == goal`.
    pub waypoints: Vec<Vector3<f64>>,
    /// Unit direction of the first segment, zero when degenerate.
    pub initial_direction: Vector3<f64>,
    pub degenerate_direction: bool,
    pub max_violation: f64,
    pub length: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl PathSolution {
    fn from_waypoints(
        waypoints: Vec<Vector3<f64>>,
        objects: &[SdfObject],
        converged: bool,
        iterations: usize,
    ) -> Self {
        let first = waypoints[1] - waypoints[0];
        let norm = first.norm();
        let (initial_direction, degenerate_direction) = if norm > 0.0 {
            (first / norm, false)
        } else {
            (Vector3::zeros(), true)
        };
        PathSolution {
            max_violation: max_violation(objects, &waypoints),
            length: polyline_length(&waypoints),
            waypoints,
            initial_direction,
            degenerate_direction,
            converged,
            iterations,
        }
    }
}

/// Clearance shortfall of one point: `max(0, max_o (margin_o - d_o(x)))`.
pub fn point_violation(objects: &[SdfObject], x: &Vector3<f64>) -> f64 {
    objects
        .iter()
        .map(|o| o.margin - sdf_eval(o, x).value)
        .fold(0.0, f64::max)
}

/// Largest shortfall over interior waypoints; endpoints are fixed and not
/// counted.
pub fn max_violation(objects: &[SdfObject], waypoints: &[Vector3<f64>]) -> f64 {
    interior(waypoints)
        .iter()
        .map(|w| point_violation(objects, w))
        .fold(0.0, f64::max)
}

fn interior(w: &[Vector3<f64>]) -> &[Vector3<f64>] {
    &w[1..w.len() - 1]
}

pub fn polyline_length(w: &[Vector3<f64>]) -> f64 {
    w.windows(2).map(|s| (s[1] - s[0]).norm()).sum()
}

/// Sum of squared segment lengths, the discretized path energy.
pub fn path_energy(w: &[Vector3<f64>]) -> f64 {
    w.windows(2).map(|s| (s[1] - s[0]).norm_squared()).sum()
}

pub fn linear_interpolant(
    start: &Vector3<f64>,
    goal: &Vector3<f64>,
    n: usize,
) -> Vec<Vector3<f64>> {
    let mut w: Vec<Vector3<f64>> = (0..n)
        .map(|j| start + (goal - start) * (j as f64 / (n - 1) as f64))
        .collect();
    w[0] = *start;
    w[n - 1] = *goal;
    w
}

/// `n` points spaced uniformly by arc length along a polyline.
fn resample(poly: &[Vector3<f64>], n: usize) -> Vec<Vector3<f64>> {
    let total = polyline_length(poly);
    let first = poly[0];
    let last = poly[poly.len() - 1];
    if total == 0.0 {
        return vec![first; n];
    }
    let mut out = Vec::with_capacity(n);
    let mut seg = 0;
    let mut seg_start = 0.0;
    for j in 0..n {
        let s = total * j as f64 / (n - 1) as f64;
        while seg + 1 < poly.len() - 1 && seg_start + (poly[seg + 1] - poly[seg]).norm() < s {
            seg_start += (poly[seg + 1] - poly[seg]).norm();
            seg += 1;
        }
        let len = (poly[seg + 1] - poly[seg]).norm();
        let t = if len > 0.0 {
            ((s - seg_start) / len).clamp(0.0, 1.0)
        } else {
            0.0
        };
        out.push(poly[seg] + (poly[seg + 1] - poly[seg]) * t);
    }
    out[0] = first;
    out[n - 1] = last;
    out
}

/// Quasi-uniform unit directions (Fibonacci lattice).
pub fn fibonacci_sphere(count: usize) -> Vec<Vector3<f64>> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..count)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * i as f64;
            Vector3::new(r * phi.cos(), r * phi.sin(), z)
        })
        .collect()
}

/// Straight line when it is clear, otherwise the two-segment polyline
/// through the best via point on a sphere around the goal, scored by summed
/// violation over the resampled waypoints.
pub fn init_via_point(problem: &PathProblem, params: &PathParams) -> Vec<Vector3<f64>> {
    let n = params.grid_size;
    let straight = linear_interpolant(&problem.start, &problem.goal, n);
    if problem.start == problem.goal || max_violation(problem.objects, &straight) == 0.0 {
        return straight;
    }
    let mut best: Option<(f64, Vec<Vector3<f64>>)> = None;
    for dir in fibonacci_sphere(params.via_candidates) {
        let via = problem.goal + dir * params.via_radius;
        let w = resample(&[problem.start, via, problem.goal], n);
        let bound = best.as_ref().map_or(f64::INFINITY, |b| b.0);
        let mut score = 0.0;
        for p in interior(&w) {
            score += point_violation(problem.objects, p);
            if score >= bound {
                break;
            }
        }
        if score < bound {
            best = Some((score, w));
        }
    }
    best.map_or(straight, |b| b.1)
}

/// Same waypoints with the endpoint displacement blended in linearly.
pub fn shift_path(
    prev: &[Vector3<f64>],
    start: &Vector3<f64>,
    goal: &Vector3<f64>,
) -> Vec<Vector3<f64>> {
    let n = prev.len();
    let ds = start - prev[0];
    let dg = goal - prev[n - 1];
    let mut w: Vec<Vector3<f64>> = prev
        .iter()
        .enumerate()
        .map(|(j, p)| {
            let s = j as f64 / (n - 1) as f64;
            p + ds * (1.0 - s) + dg * s
        })
        .collect();
    w[0] = *start;
    w[n - 1] = *goal;
    w
}

/// Feasibility is judged with this slack so solver round-off does not flip
/// the lexicographic order.
const FEASIBLE_TOL: f64 = 1e-4;

/// `a` is preferred over `b`: less violation first, then shorter energy.
fn better(a: (f64, f64), b: (f64, f64)) -> bool {
    let (va, vb) = (a.0.max(FEASIBLE_TOL), b.0.max(FEASIBLE_TOL));
    if va < vb {
        true
    } else if va > vb {
        false
    } else {
        a.1 <= b.1
    }
}

/// Per-fingertip optimizer; keeps its QP workspace and the last solution for
/// warm starting the next tick.
#[derive(Debug, Clone)]
pub struct PathOptimizer {
    pub params: PathParams,
    solver: QpSolver,
    previous: Option<Vec<Vector3<f64>>>,
}

impl PathOptimizer {
    pub fn new(params: PathParams) -> Self {
        let settings = QpSettings {
            polish: false,
            ..QpSettings::default()
        }
        .with_tolerances(params.qp_tol, params.qp_tol)
        .with_max_iters(params.qp_max_iters);
        PathOptimizer {
            params,
            solver: QpSolver::new(settings),
            previous: None,
        }
    }

    pub fn reset(&mut self) {
        self.previous = None;
    }

    /// Plans from the shifted previous path when it is still close to
    /// feasible, else from a via-point initialization.
    pub fn plan(&mut self, problem: &PathProblem) -> PathSolution {
        let init = match &self.previous {
            Some(prev) if prev.len() == self.params.grid_size => {
                let shifted = shift_path(prev, &problem.start, &problem.goal);
                if max_violation(problem.objects, &shifted) > self.params.reinit_violation {
                    init_via_point(problem, &self.params)
                } else {
                    shifted
                }
            }
            _ => init_via_point(problem, &self.params),
        };
        let sol = self.optimize(problem, init);
        self.previous = Some(sol.waypoints.clone());
        sol
    }

    /// Trust-region SQP from `init`, whose endpoints are replaced by the
    /// problem's.
    pub fn optimize(&mut self, problem: &PathProblem, mut init: Vec<Vector3<f64>>) -> PathSolution {
        let n = init.len();
        assert!(n >= 3, "path needs at least three waypoints");
        init[0] = problem.start;
        init[n - 1] = problem.goal;

        // The linear interpolant minimizes the energy outright; if it is
        // clear it is optimal.
        let straight = linear_interpolant(&problem.start, &problem.goal, n);
        if max_violation(problem.objects, &straight) == 0.0 {
            return PathSolution::from_waypoints(straight, problem.objects, true, 0);
        }

        let mut current = init;
        let mut merit = (
            max_violation(problem.objects, &current),
            path_energy(&current),
        );
        let mut radius = self.params.trust_region;
        let mut converged = true;
        let mut iterations = 0;
        for _ in 0..self.params.sqp_iters {
            iterations += 1;
            let qp = self.subproblem(problem, &current, radius);
            // Primal warm start at the current path, which satisfies the
            // trust-region rows.
            let warm = QpSolution {
                z: DVector::from_iterator(
                    qp.num_vars(),
                    current[1..current.len() - 1]
                        .iter()
                        .flat_map(|w| w.iter().copied()),
                ),
                y: DVector::zeros(qp.num_rows()),
                status: QpStatus::MaxIters,
                primal_residual: f64::INFINITY,
                dual_residual: f64::INFINITY,
                iterations: 0,
                polished: false,
            };
            let sol = self.solver.solve(&qp, Some(&warm));
            if sol.status == QpStatus::PrimalInfeasible || !sol.z.iter().all(|v| v.is_finite()) {
                converged = false;
                break;
            }
            let mut candidate = current.clone();
            let mut step: f64 = 0.0;
            for j in 1..n - 1 {
                let w = Vector3::new(
                    sol.z[3 * (j - 1)],
                    sol.z[3 * (j - 1) + 1],
                    sol.z[3 * (j - 1) + 2],
                );
                step = step.max((w - current[j]).amax());
                candidate[j] = w;
            }
            let cand_merit = (
                max_violation(problem.objects, &candidate),
                path_energy(&candidate),
            );
            if better(cand_merit, merit) {
                current = candidate;
                merit = cand_merit;
                if step < 1e-6 {
                    break;
                }
            } else {
                radius *= 0.5;
            }
        }
        PathSolution::from_waypoints(current, problem.objects, converged, iterations)
    }

    /// QP over the interior waypoints, ordered waypoint-major so the
    /// factorized matrix is banded.
    fn subproblem(&self, problem: &PathProblem, w: &[Vector3<f64>], radius: f64) -> QpProblem {
        let n = w.len();
        let m = n - 2;
        let nv = 3 * m;
        let mut p = DMatrix::zeros(nv, nv);
        let mut c = DVector::zeros(nv);
        for j in 0..m {
            for k in 0..3 {
                let i = 3 * j + k;
                p[(i, i)] = 4.0;
                if j + 1 < m {
                    p[(i, i + 3)] = -2.0;
                    p[(i + 3, i)] = -2.0;
                }
            }
        }
        for k in 0..3 {
            c[k] = -2.0 * problem.start[k];
            c[3 * (m - 1) + k] += -2.0 * problem.goal[k];
        }

        let mut rows: Vec<(usize, Vector3<f64>, f64)> = Vec::new();
        for j in 1..n - 1 {
            for obj in problem.objects {
                let d = sdf_eval(obj, &w[j]);
                if d.value - obj.margin > self.params.prune_distance {
                    continue;
                }
                // d + g.(w' - w) >= margin
                rows.push((
                    j - 1,
                    d.gradient,
                    obj.margin - d.value + d.gradient.dot(&w[j]),
                ));
            }
        }
        let r = nv + rows.len();
        let mut a = DMatrix::zeros(r, nv);
        let mut lower = DVector::zeros(r);
        let mut upper = DVector::zeros(r);
        for j in 0..m {
            for k in 0..3 {
                let i = 3 * j + k;
                a[(i, i)] = 1.0;
                lower[i] = w[j + 1][k] - radius;
                upper[i] = w[j + 1][k] + radius;
            }
        }
        for (row, (j, g, b)) in rows.into_iter().enumerate() {
            for k in 0..3 {
                a[(nv + row, 3 * j + k)] = g[k];
            }
            lower[nv + row] = b;
            upper[nv + row] = f64::INFINITY;
        }
        QpProblem {
            p,
            c,
            a,
            lower,
            upper,
        }
    }
}

/// One-shot convenience: via-point initialization followed by SQP.
pub fn optimize_path(problem: &PathProblem, params: &PathParams) -> PathSolution {
    let mut opt = PathOptimizer::new(*params);
    let init = init_via_point(problem, params);
    opt.optimize(problem, init)
}
