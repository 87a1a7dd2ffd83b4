use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::linalg::{norm_inf, BandCholesky, BandMatrix, Csr};
use super::problem::QpProblem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QpStatus {
    Solved,
    MaxIters,
    PrimalInfeasible,
}

/// Primal-dual result. The multipliers satisfy `P z + c + A' y = 0`, so a
/// row held at its lower bound has `y <= 0` and one at its upper bound
/// `y >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub z: DVector<f64>,
    pub y: DVector<f64>,
    pub status: QpStatus,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: usize,
    pub polished: bool,
}

impl QpSolution {
    pub fn is_solved(&self) -> bool {
        self.status == QpStatus::Solved
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpSettings {
    pub tol_abs: f64,
    pub tol_rel: f64,
    pub max_iters: usize,
    /// Proximal regularization on the primal step.
    pub sigma: f64,
    pub rho: f64,
    /// Over-relaxation factor in (0, 2).
    pub relaxation: f64,
    /// Iterations between step-size (rho) updates; 0 disables them.
    pub adapt_interval: usize,
    pub tol_infeasible: f64,
    /// Refine the ADMM answer by solving the KKT system of its active set.
    pub polish: bool,
}

impl Default for QpSettings {
    fn default() -> Self {
        QpSettings {
            tol_abs: 1e-6,
            tol_rel: 1e-6,
            max_iters: 10_000,
            sigma: 1e-6,
            rho: 0.1,
            relaxation: 1.6,
            adapt_interval: 25,
            tol_infeasible: 1e-7,
            polish: true,
        }
    }
}

impl QpSettings {
    pub fn with_tolerances(mut self, tol_abs: f64, tol_rel: f64) -> Self {
        self.tol_abs = tol_abs;
        self.tol_rel = tol_rel;
        self
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }
}

const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
const RHO_EQ_SCALE: f64 = 1e3;

/// Operator-splitting (ADMM) QP solver. One instance per thread; the
/// instance keeps its scratch vectors between solves.
#[derive(Debug, Clone, Default)]
pub struct QpSolver {
    pub settings: QpSettings,
    scratch: Scratch,
}

#[derive(Debug, Clone, Default)]
struct Scratch {
    rhs: DVector<f64>,
    ax: DVector<f64>,
    px: DVector<f64>,
    aty: DVector<f64>,
    tmp_m: DVector<f64>,
}

struct Residuals {
    prim: f64,
    dual: f64,
    eps_prim: f64,
    eps_dual: f64,
    ax_norm: f64,
    z_norm: f64,
    px_norm: f64,
    aty_norm: f64,
    c_norm: f64,
}

impl Residuals {
    fn converged(&self) -> bool {
        self.prim <= self.eps_prim && self.dual <= self.eps_dual
    }
}

impl QpSolver {
    pub fn new(settings: QpSettings) -> Self {
        QpSolver {
            settings,
            scratch: Scratch::default(),
        }
    }

    pub fn solve(&mut self, qp: &QpProblem, warm: Option<&QpSolution>) -> QpSolution {
        let s = self.settings;
        let n = qp.num_vars();
        let m = qp.num_rows();
        let a = Csr::from_dense(&qp.a);
        let p = Csr::from_dense(&qp.p);
        let sc = &mut self.scratch;
        sc.rhs = DVector::zeros(n);
        sc.px = DVector::zeros(n);
        sc.aty = DVector::zeros(n);
        sc.ax = DVector::zeros(m);
        sc.tmp_m = DVector::zeros(m);

        let mut rho = s.rho;
        let row_rho = |rho: f64, i: usize| -> f64 {
            let (l, u) = (qp.lower[i], qp.upper[i]);
            if l == f64::NEG_INFINITY && u == f64::INFINITY {
                RHO_MIN
            } else if l == u {
                (RHO_EQ_SCALE * rho).min(RHO_MAX)
            } else {
                rho
            }
        };
        let mut rho_vec = DVector::from_fn(m, |i, _| row_rho(rho, i));
        let mut kkt = match factor_kkt(qp, &p, &a, &rho_vec, s.sigma) {
            Some(f) => f,
            None => return failed(n, m),
        };

        let (mut x, mut z, mut y) = match warm {
            Some(w) if w.z.len() == n => {
                let x = w.z.clone();
                a.mul(&x, &mut sc.ax);
                let z = clamp(&sc.ax, &qp.lower, &qp.upper);
                let y = if w.y.len() == m {
                    w.y.clone()
                } else {
                    DVector::zeros(m)
                };
                (x, z, y)
            }
            _ => (DVector::zeros(n), DVector::zeros(m), DVector::zeros(m)),
        };

        let mut status = QpStatus::MaxIters;
        let mut iterations = s.max_iters;
        let mut x_tilde = DVector::zeros(n);
        let mut z_tilde = DVector::zeros(m);
        let mut delta_y = DVector::zeros(m);
        let mut res = residuals(qp, &a, &p, &x, &z, &y, sc, &s);

        for k in 1..=s.max_iters {
            // x-tilde = K^-1 (sigma x - c + A'(rho z - y))
            for i in 0..m {
                sc.tmp_m[i] = rho_vec[i] * z[i] - y[i];
            }
            a.mul_t(&sc.tmp_m, &mut sc.rhs);
            for j in 0..n {
                x_tilde[j] = s.sigma * x[j] - qp.c[j] + sc.rhs[j];
            }
            kkt.solve_in_place(&mut x_tilde);
            a.mul(&x_tilde, &mut z_tilde);

            let alpha = s.relaxation;
            for j in 0..n {
                x[j] = alpha * x_tilde[j] + (1.0 - alpha) * x[j];
            }
            for i in 0..m {
                let zr = alpha * z_tilde[i] + (1.0 - alpha) * z[i];
                let zn = (zr + y[i] / rho_vec[i]).clamp(qp.lower[i], qp.upper[i]);
                delta_y[i] = rho_vec[i] * (zr - zn);
                y[i] += delta_y[i];
                z[i] = zn;
            }

            res = residuals(qp, &a, &p, &x, &z, &y, sc, &s);
            if res.converged() {
                status = QpStatus::Solved;
                iterations = k;
                break;
            }
            if m > 0 && primal_infeasible(qp, &a, &delta_y, sc, s.tol_infeasible) {
                status = QpStatus::PrimalInfeasible;
                iterations = k;
                break;
            }

            if s.adapt_interval > 0 && m > 0 && k % s.adapt_interval == 0 {
                let prim_scale = res.ax_norm.max(res.z_norm).max(1e-12);
                let dual_scale = res.px_norm.max(res.aty_norm).max(res.c_norm).max(1e-12);
                let ratio = ((res.prim / prim_scale) / (res.dual / dual_scale).max(1e-30)).sqrt();
                let new_rho = (rho * ratio).clamp(RHO_MIN, RHO_MAX);
                if new_rho > 5.0 * rho || new_rho < 0.2 * rho {
                    rho = new_rho;
                    rho_vec = DVector::from_fn(m, |i, _| row_rho(rho, i));
                    match factor_kkt(qp, &p, &a, &rho_vec, s.sigma) {
                        Some(f) => kkt = f,
                        None => break,
                    }
                }
            }
        }

        let mut sol = QpSolution {
            z: x,
            y,
            status,
            primal_residual: res.prim,
            dual_residual: res.dual,
            iterations,
            polished: false,
        };
        if s.polish && status != QpStatus::PrimalInfeasible {
            polish(qp, &a, &p, &mut sol, &z, sc, &s);
        }
        sol
    }
}

/// Solves with default settings and the given tolerances.
pub fn solve(
    qp: &QpProblem,
    warm_start: Option<&QpSolution>,
    tol_abs: f64,
    tol_rel: f64,
    max_iters: usize,
) -> QpSolution {
    let settings = QpSettings::default()
        .with_tolerances(tol_abs, tol_rel)
        .with_max_iters(max_iters);
    QpSolver::new(settings).solve(qp, warm_start)
}

fn failed(n: usize, m: usize) -> QpSolution {
    QpSolution {
        z: DVector::zeros(n),
        y: DVector::zeros(m),
        status: QpStatus::MaxIters,
        primal_residual: f64::INFINITY,
        dual_residual: f64::INFINITY,
        iterations: 0,
        polished: false,
    }
}

fn clamp(v: &DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(v.len(), |i, _| v[i].clamp(lo[i], hi[i]))
}

/// Factors `P + sigma I + A' diag(rho) A` in band form.
fn factor_kkt(
    qp: &QpProblem,
    p: &Csr,
    a: &Csr,
    rho: &DVector<f64>,
    sigma: f64,
) -> Option<BandCholesky> {
    let n = qp.num_vars();
    let bw = p.diagonal_span().max(a.row_span());
    let mut k = BandMatrix::zeros(n, bw);
    for i in 0..n {
        k.add(i, i, sigma);
        for (j, v) in p.row(i) {
            if j <= i {
                k.add(i, j, v);
            }
        }
    }
    for i in 0..a.nrows {
        let r = rho[i];
        let r0 = a.start[i];
        let r1 = a.start[i + 1];
        for s1 in r0..r1 {
            for s2 in r0..=s1 {
                k.add(a.col[s1], a.col[s2], r * a.val[s1] * a.val[s2]);
            }
        }
    }
    BandCholesky::factor(k)
}

#[allow(clippy::too_many_arguments)]
fn residuals(
    qp: &QpProblem,
    a: &Csr,
    p: &Csr,
    x: &DVector<f64>,
    z: &DVector<f64>,
    y: &DVector<f64>,
    sc: &mut Scratch,
    s: &QpSettings,
) -> Residuals {
    a.mul(x, &mut sc.ax);
    p.mul(x, &mut sc.px);
    a.mul_t(y, &mut sc.aty);
    let prim = (0..z.len()).fold(0.0f64, |acc, i| acc.max((sc.ax[i] - z[i]).abs()));
    let dual = (0..x.len()).fold(0.0f64, |acc, j| {
        acc.max((sc.px[j] + qp.c[j] + sc.aty[j]).abs())
    });
    let ax_norm = norm_inf(&sc.ax);
    let z_norm = norm_inf(z);
    let px_norm = norm_inf(&sc.px);
    let aty_norm = norm_inf(&sc.aty);
    let c_norm = norm_inf(&qp.c);
    Residuals {
        prim,
        dual,
        eps_prim: s.tol_abs + s.tol_rel * ax_norm.max(z_norm),
        eps_dual: s.tol_abs + s.tol_rel * px_norm.max(aty_norm).max(c_norm),
        ax_norm,
        z_norm,
        px_norm,
        aty_norm,
        c_norm,
    }
}

/// Farkas-type certificate check on the latest dual increment.
fn primal_infeasible(
    qp: &QpProblem,
    a: &Csr,
    dy: &DVector<f64>,
    sc: &mut Scratch,
    eps: f64,
) -> bool {
    let norm = norm_inf(dy);
    if norm < 1e-30 {
        return false;
    }
    let tol = eps * norm;
    let mut support = 0.0;
    for i in 0..dy.len() {
        let d = dy[i];
        if d > tol {
            if qp.upper[i] == f64::INFINITY {
                return false;
            }
            support += qp.upper[i] * d;
        } else if d < -tol {
            if qp.lower[i] == f64::NEG_INFINITY {
                return false;
            }
            support += qp.lower[i] * d;
        }
    }
    a.mul_t(dy, &mut sc.aty);
    norm_inf(&sc.aty) <= tol && support < -tol
}

/// Guesses the active set from the ADMM iterate, solves the equality-
/// constrained KKT system with iterative refinement, and keeps the result
/// only if it is feasible, dual-consistent and more accurate.
fn polish(
    qp: &QpProblem,
    a: &Csr,
    p: &Csr,
    sol: &mut QpSolution,
    z: &DVector<f64>,
    sc: &mut Scratch,
    s: &QpSettings,
) {
    let n = qp.num_vars();
    let m = qp.num_rows();
    // (row, bound value)
    let mut active: Vec<(usize, f64)> = Vec::new();
    for i in 0..m {
        let (l, u) = (qp.lower[i], qp.upper[i]);
        if l == u {
            active.push((i, l));
        } else if z[i] - l < -sol.y[i] {
            active.push((i, l));
        } else if u - z[i] < sol.y[i] {
            active.push((i, u));
        }
    }
    let na = active.len();
    if na > n {
        return;
    }
    let dim = n + na;
    let delta = 1e-9;
    let mut kkt = DMatrix::zeros(dim, dim);
    kkt.view_mut((0, 0), (n, n)).copy_from(&qp.p);
    for (r, &(i, _)) in active.iter().enumerate() {
        for (j, v) in a.row(i) {
            kkt[(n + r, j)] = v;
            kkt[(j, n + r)] = v;
        }
    }
    let exact = kkt.clone();
    for j in 0..n {
        kkt[(j, j)] += delta;
    }
    for r in 0..na {
        kkt[(n + r, n + r)] -= delta;
    }
    let lu = kkt.lu();
    let mut rhs = DVector::zeros(dim);
    for j in 0..n {
        rhs[j] = -qp.c[j];
    }
    for (r, &(_, b)) in active.iter().enumerate() {
        rhs[n + r] = b;
    }
    let mut sol_vec = match lu.solve(&rhs) {
        Some(v) => v,
        None => return,
    };
    for _ in 0..3 {
        let resid = &rhs - &exact * &sol_vec;
        match lu.solve(&resid) {
            Some(d) => sol_vec += d,
            None => return,
        }
    }
    if !sol_vec.iter().all(|v| v.is_finite()) {
        return;
    }

    let x = sol_vec.rows(0, n).into_owned();
    let mut y = DVector::zeros(m);
    for (r, &(i, b)) in active.iter().enumerate() {
        let yi = sol_vec[n + r];
        let (l, u) = (qp.lower[i], qp.upper[i]);
        if l != u {
            let wrong_sign = if b == l {
                yi > s.tol_abs
            } else {
                yi < -s.tol_abs
            };
            if wrong_sign {
                return;
            }
        }
        y[i] = yi;
    }
    a.mul(&x, &mut sc.ax);
    let mut prim = 0.0f64;
    for i in 0..m {
        let v = sc.ax[i];
        prim = prim.max(qp.lower[i] - v).max(v - qp.upper[i]);
    }
    p.mul(&x, &mut sc.px);
    a.mul_t(&y, &mut sc.aty);
    let dual = (0..n).fold(0.0f64, |acc, j| {
        acc.max((sc.px[j] + qp.c[j] + sc.aty[j]).abs())
    });

    let scale_p = norm_inf(&sc.ax).max(1.0);
    let scale_d = norm_inf(&sc.px)
        .max(norm_inf(&sc.aty))
        .max(norm_inf(&qp.c))
        .max(1.0);
    let ok_p = prim <= s.tol_abs + s.tol_rel * scale_p;
    let ok_d = dual <= s.tol_abs + s.tol_rel * scale_d;
    let improves = prim.max(dual) <= sol.primal_residual.max(sol.dual_residual);
    if ok_p && ok_d && (improves || sol.status != QpStatus::Solved) {
        sol.z = x;
        sol.y = y;
        sol.primal_residual = prim.max(0.0);
        sol.dual_residual = dual;
        sol.status = QpStatus::Solved;
        sol.polished = true;
    }
}
