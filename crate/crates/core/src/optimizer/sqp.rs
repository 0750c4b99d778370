//! Sequential quadratic programming with a damped BFGS Hessian, an L1 exact
//! penalty merit function and Powell's penalty update.

use serde::{Deserialize, Serialize};

use super::qp::{solve_qp, QpSolution};
use crate::{Error, Matrix, Result, Vector};

/// Bounds at or beyond this magnitude are treated as absent.
pub const UNBOUNDED: f64 = 1e30;
const PENALTY_MARGIN: f64 = 1e-2;
const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 40;

type ObjectiveFn<'a> = dyn Fn(&Vector) -> Result<(f64, Vector)> + Sync + 'a;
type ConstraintFn<'a> = dyn Fn(&Vector) -> Result<(Vector, Matrix)> + Sync + 'a;

/// `min f(x)  s.t.  g(x) ≤ 0,  lower ≤ x ≤ upper`.
pub struct NlpSpec<'a> {
    pub dim: usize,
    pub objective: Box<ObjectiveFn<'a>>,
    pub n_ineq: usize,
    pub inequalities: Box<ConstraintFn<'a>>,
    pub lower: Vector,
    pub upper: Vector,
    pub x0: Vector,
}

impl<'a> NlpSpec<'a> {
    pub fn unconstrained(x0: Vector, objective: impl Fn(&Vector) -> Result<(f64, Vector)> + Sync + 'a) -> Self {
        let n = x0.len();
        NlpSpec {
            dim: n,
            objective: Box::new(objective),
            n_ineq: 0,
            inequalities: Box::new(move |_| Ok((Vector::zeros(0), Matrix::zeros(0, n)))),
            lower: Vector::from_element(n, -UNBOUNDED),
            upper: Vector::from_element(n, UNBOUNDED),
            x0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SqpOptions {
    pub max_iter: usize,
    pub tol_kkt: f64,
    pub tol_step: f64,
}

impl Default for SqpOptions {
    fn default() -> Self {
        SqpOptions {
            max_iter: 100,
            tol_kkt: 1e-6,
            tol_step: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RunStatus {
    Converged,
    IterationLimit,
    LinesearchFailure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub iterates: Vec<Vector>,
    pub objective_history: Vec<f64>,
    /// Largest positive inequality value at each iterate.
    pub constraint_violation_history: Vec<f64>,
    /// Inequality values at each iterate.
    pub constraint_history: Vec<Vector>,
    /// Norm of the accepted step leading to each iterate (zero for the first).
    pub step_norms: Vec<f64>,
    pub status: RunStatus,
    /// Column k is `iterates[k+1] − iterates[k]`.
    pub increments: Matrix,
    pub multipliers: Vector,
    pub lower_multipliers: Vector,
    pub upper_multipliers: Vector,
    pub kkt_residual: f64,
}

impl RunRecord {
    pub fn final_point(&self) -> &Vector {
        self.iterates.last().expect("a run has at least one iterate")
    }

    pub fn final_objective(&self) -> f64 {
        *self.objective_history.last().expect("a run has at least one iterate")
    }

    pub fn iterations(&self) -> usize {
        self.iterates.len() - 1
    }
}

fn finite_bound(v: f64) -> bool {
    v.abs() < UNBOUNDED
}

/// First-order optimality residual at `x` for the given multipliers.
#[allow(clippy::too_many_arguments)]
pub fn kkt_residual(
    x: &Vector,
    grad: &Vector,
    cons: &Vector,
    jac: &Matrix,
    lambda: &Vector,
    nu_lower: &Vector,
    nu_upper: &Vector,
    lower: &Vector,
    upper: &Vector,
) -> f64 {
    let stat = grad + jac.transpose() * lambda - nu_lower + nu_upper;
    let mut r = stat.amax();
    for i in 0..cons.len() {
        r = r.max(cons[i].max(0.0));
        r = r.max((lambda[i] * cons[i]).abs());
        r = r.max((-lambda[i]).max(0.0));
    }
    for i in 0..x.len() {
        if finite_bound(lower[i]) {
            r = r.max((lower[i] - x[i]).max(0.0));
            r = r.max((nu_lower[i] * (x[i] - lower[i])).abs());
        }
        if finite_bound(upper[i]) {
            r = r.max((x[i] - upper[i]).max(0.0));
            r = r.max((nu_upper[i] * (upper[i] - x[i])).abs());
        }
        r = r.max((-nu_lower[i]).max(0.0)).max((-nu_upper[i]).max(0.0));
    }
    r
}

struct Step {
    d: Vector,
    lambda: Vector,
    nu_lower: Vector,
    nu_upper: Vector,
}

fn bound_rows(x: &Vector, lower: &Vector, upper: &Vector) -> (Vec<(usize, f64, f64)>, usize) {
    // (index, sign, rhs) with sign·d_i ≥ rhs
    let mut rows = Vec::new();
    for i in 0..x.len() {
        if finite_bound(lower[i]) {
            rows.push((i, 1.0, lower[i] - x[i]));
        }
        if finite_bound(upper[i]) {
            rows.push((i, -1.0, -(upper[i] - x[i])));
        }
    }
    let count = rows.len();
    (rows, count)
}

fn unpack_bounds(sol: &QpSolution, offset: usize, rows: &[(usize, f64, f64)], n: usize) -> (Vector, Vector) {
    let mut nl = Vector::zeros(n);
    let mut nu = Vector::zeros(n);
    for (k, &(i, sign, _)) in rows.iter().enumerate() {
        let m = sol.multipliers[offset + k];
        if sign > 0.0 {
            nl[i] += m;
        } else {
            nu[i] += m;
        }
    }
    (nl, nu)
}

fn qp_step(
    b: &Matrix,
    grad: &Vector,
    cons: &Vector,
    jac: &Matrix,
    x: &Vector,
    lower: &Vector,
    upper: &Vector,
) -> Result<Step> {
    let n = x.len();
    let m = cons.len();
    let (rows, nb) = bound_rows(x, lower, upper);
    let mut c = Matrix::zeros(m + nb, n);
    let mut rhs = Vector::zeros(m + nb);
    for i in 0..m {
        c.row_mut(i).copy_from(&(-jac.row(i)));
        rhs[i] = cons[i];
    }
    for (k, &(i, sign, r)) in rows.iter().enumerate() {
        c[(m + k, i)] = sign;
        rhs[m + k] = r;
    }
    let sol = solve_qp(b, grad, &c, &rhs)?;
    let (nu_lower, nu_upper) = unpack_bounds(&sol, m, &rows, n);
    Ok(Step {
        d: sol.x.clone(),
        lambda: sol.multipliers.rows(0, m).into_owned(),
        nu_lower,
        nu_upper,
    })
}

/// Elastic subproblem: the linearized constraints may be violated by slacks
/// that carry a linear penalty. Always feasible for `x` inside the bounds.
#[allow(clippy::too_many_arguments)]
fn elastic_step(
    b: &Matrix,
    grad: &Vector,
    cons: &Vector,
    jac: &Matrix,
    x: &Vector,
    lower: &Vector,
    upper: &Vector,
    rho: &[f64],
) -> Result<Step> {
    let n = x.len();
    let m = cons.len();
    let (rows, nb) = bound_rows(x, lower, upper);
    let nv = n + m;
    let mut g = Matrix::zeros(nv, nv);
    g.view_mut((0, 0), (n, n)).copy_from(b);
    let eps = 1e-8 * (1.0 + b.amax());
    for j in 0..m {
        g[(n + j, n + j)] = eps;
    }
    let weight = 100.0 * (1.0 + grad.amax());
    let mut a = Vector::zeros(nv);
    a.rows_mut(0, n).copy_from(grad);
    for j in 0..m {
        a[n + j] = rho[j].max(weight);
    }
    let mut c = Matrix::zeros(2 * m + nb, nv);
    let mut rhs = Vector::zeros(2 * m + nb);
    for i in 0..m {
        for j in 0..n {
            c[(i, j)] = -jac[(i, j)];
        }
        c[(i, n + i)] = 1.0;
        rhs[i] = cons[i];
        c[(m + i, n + i)] = 1.0;
    }
    for (k, &(i, sign, r)) in rows.iter().enumerate() {
        c[(2 * m + k, i)] = sign;
        rhs[2 * m + k] = r;
    }
    let sol = solve_qp(&g, &a, &c, &rhs)?;
    let (nu_lower, nu_upper) = unpack_bounds(&sol, 2 * m, &rows, n);
    Ok(Step {
        d: sol.x.rows(0, n).into_owned(),
        lambda: sol.multipliers.rows(0, m).into_owned(),
        nu_lower,
        nu_upper,
    })
}

fn merit(f: f64, cons: &Vector, rho: &[f64]) -> f64 {
    f + cons.iter().zip(rho).map(|(c, r)| r * c.max(0.0)).sum::<f64>()
}

fn violation(cons: &Vector) -> f64 {
    cons.iter().fold(0.0, |a, &c| a.max(c))
}

/// Powell-damped BFGS update keeping `b` positive definite.
pub fn damped_bfgs(b: &mut Matrix, s: &Vector, y: &Vector) -> bool {
    let bs = &*b * s;
    let sbs = s.dot(&bs);
    if !(sbs > 0.0) {
        return false;
    }
    let sy = s.dot(y);
    let (y, damped) = if sy < 0.2 * sbs {
        let theta = 0.8 * sbs / (sbs - sy);
        (y * theta + &bs * (1.0 - theta), true)
    } else {
        (y.clone(), false)
    };
    let sy = s.dot(&y);
    *b += &y * y.transpose() / sy - &bs * bs.transpose() / sbs;
    let sym = (&*b + b.transpose()) * 0.5;
    *b = sym;
    damped
}

/// Next trial step length from a quadratic model of the merit function.
pub fn backtrack(alpha: f64, phi0: f64, dphi: f64, phi: f64) -> f64 {
    let curv = (phi - phi0 - dphi * alpha) / (alpha * alpha);
    let cand = if curv > 0.0 { -dphi / (2.0 * curv) } else { 0.5 * alpha };
    cand.clamp(0.1 * alpha, 0.5 * alpha)
}

pub fn sqp_solve(spec: &NlpSpec, opts: &SqpOptions) -> Result<RunRecord> {
    let n = spec.dim;
    if spec.x0.len() != n || spec.lower.len() != n || spec.upper.len() != n {
        return Err(Error::DimensionMismatch("problem dimensions".into()));
    }
    for i in 0..n {
        if !(spec.lower[i] <= spec.x0[i] && spec.x0[i] <= spec.upper[i]) {
            return Err(Error::InvalidParameter(format!(
                "start point component {i} lies outside its bounds"
            )));
        }
    }
    let eval = |x: &Vector| -> Result<(f64, Vector, Vector, Matrix)> {
        let (f, g) = (spec.objective)(x)?;
        let (c, j) = (spec.inequalities)(x)?;
        if c.len() != spec.n_ineq || j.shape() != (spec.n_ineq, n) || g.len() != n {
            return Err(Error::DimensionMismatch("callback output".into()));
        }
        if !f.is_finite() || g.iter().chain(c.iter()).chain(j.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite callback output".into()));
        }
        Ok((f, g, c, j))
    };

    let mut x = spec.x0.clone();
    let (mut f, mut g, mut c, mut jac) = eval(&x)?;
    let mut b = Matrix::identity(n, n);
    let mut rho = vec![0.0; spec.n_ineq];
    let mut iterates = vec![x.clone()];
    let mut objective_history = vec![f];
    let mut constraint_violation_history = vec![violation(&c)];
    let mut constraint_history = vec![c.clone()];
    let mut step_norms = vec![0.0];
    let mut lambda = Vector::zeros(spec.n_ineq);
    let mut nu_lower = Vector::zeros(n);
    let mut nu_upper = Vector::zeros(n);
    let mut status = RunStatus::IterationLimit;
    let mut kkt = f64::INFINITY;
    let mut restored = false;

    for _ in 0..=opts.max_iter {
        let step = match qp_step(&b, &g, &c, &jac, &x, &spec.lower, &spec.upper) {
            Ok(s) => s,
            Err(Error::QpInfeasible) => {
                if restored {
                    return Err(Error::QpInfeasible);
                }
                restored = true;
                elastic_step(&b, &g, &c, &jac, &x, &spec.lower, &spec.upper, &rho)?
            }
            Err(e) => return Err(e),
        };
        lambda = step.lambda;
        nu_lower = step.nu_lower;
        nu_upper = step.nu_upper;
        kkt = kkt_residual(
            &x,
            &g,
            &c,
            &jac,
            &lambda,
            &nu_lower,
            &nu_upper,
            &spec.lower,
            &spec.upper,
        );
        let d = step.d;
        if kkt <= opts.tol_kkt || d.norm() <= opts.tol_step * (1.0 + x.norm()) {
            status = RunStatus::Converged;
            break;
        }
        if iterates.len() > opts.max_iter {
            status = RunStatus::IterationLimit;
            break;
        }
        for (r, l) in rho.iter_mut().zip(lambda.iter()) {
            *r = r.max(l.abs() + PENALTY_MARGIN);
        }
        let phi0 = merit(f, &c, &rho);
        let lin = &c + &jac * &d;
        let dphi = g.dot(&d)
            + (0..c.len())
                .map(|i| rho[i] * (lin[i].max(0.0) - c[i].max(0.0)))
                .sum::<f64>();
        if !(dphi < 0.0) {
            status = RunStatus::LinesearchFailure;
            break;
        }
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let mut xt = &x + &d * alpha;
            for i in 0..n {
                xt[i] = xt[i].clamp(spec.lower[i], spec.upper[i]);
            }
            match eval(&xt) {
                Ok((ft, gt, ct, jt)) => {
                    let phi = merit(ft, &ct, &rho);
                    if phi <= phi0 + ARMIJO * alpha * dphi {
                        accepted = Some((xt, ft, gt, ct, jt));
                        break;
                    }
                    alpha = backtrack(alpha, phi0, dphi, phi);
                }
                Err(_) => alpha *= 0.1,
            }
        }
        let Some((xt, ft, gt, ct, jt)) = accepted else {
            status = RunStatus::LinesearchFailure;
            break;
        };
        let s = &xt - &x;
        let y = (&gt + jt.transpose() * &lambda) - (&g + jac.transpose() * &lambda);
        damped_bfgs(&mut b, &s, &y);
        x = xt;
        f = ft;
        g = gt;
        c = ct;
        jac = jt;
        iterates.push(x.clone());
        objective_history.push(f);
        constraint_violation_history.push(violation(&c));
        constraint_history.push(c.clone());
        step_norms.push(s.norm());
    }

    let mut increments = Matrix::zeros(n, iterates.len() - 1);
    for k in 0..iterates.len() - 1 {
        increments.set_column(k, &(&iterates[k + 1] - &iterates[k]));
    }
    Ok(RunRecord {
        iterates,
        objective_history,
        constraint_violation_history,
        constraint_history,
        step_norms,
        status,
        increments,
        multipliers: lambda,
        lower_multipliers: nu_lower,
        upper_multipliers: nu_upper,
        kkt_residual: kkt,
    })
}
