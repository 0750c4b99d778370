//! Dense strictly convex quadratic programs
//! `min ½xᵀGx + aᵀx  s.t.  Cx ≥ b` by the dual active-set method of
//! Goldfarb and Idnani. The active-set factorizations are recomputed at every
//! step, which is cheap at the sizes used here.

use crate::{Error, Matrix, Result, Vector};

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: Vector,
    /// One nonnegative multiplier per constraint row.
    pub multipliers: Vector,
    pub active: Vec<usize>,
}

struct Projector {
    ginv: Matrix,
}

impl Projector {
    /// Primal direction `z = H*·n` and dual direction `r = N*·n` for the
    /// active normals `nmat` (columns).
    fn directions(&self, nmat: &Matrix, n: &Vector) -> Result<(Vector, Vector)> {
        let gn = &self.ginv * n;
        if nmat.ncols() == 0 {
            return Ok((gn, Vector::zeros(0)));
        }
        let gnm = &self.ginv * nmat;
        let m = nmat.transpose() * &gnm;
        let r = m
            .clone()
            .cholesky()
            .map(|c| c.solve(&(gnm.transpose() * n)))
            .or_else(|| m.lu().solve(&(gnm.transpose() * n)))
            .ok_or_else(|| Error::SingularSystem("active constraint normals are dependent".into()))?;
        let z = gn - gnm * &r;
        Ok((z, r))
    }
}

pub fn solve_qp(g: &Matrix, a: &Vector, c: &Matrix, b: &Vector) -> Result<QpSolution> {
    let n = g.nrows();
    let m = c.nrows();
    if g.ncols() != n || a.len() != n || c.ncols() != n || b.len() != m {
        return Err(Error::DimensionMismatch("quadratic program data".into()));
    }
    let chol = g.clone().cholesky().ok_or_else(|| Error::NotSpd("QP Hessian".into()))?;
    let proj = Projector { ginv: chol.inverse() };
    let mut x = -chol.solve(a);
    let mut active: Vec<usize> = Vec::new();
    let mut u: Vec<f64> = Vec::new();
    let row_norm: Vec<f64> = (0..m).map(|i| c.row(i).norm()).collect();
    let max_steps = 20 * (n + m) + 100;
    let mut steps = 0;

    loop {
        // most violated constraint, scaled by its normal
        let mut p = None;
        let mut worst = 0.0;
        for i in 0..m {
            if active.contains(&i) || row_norm[i] == 0.0 {
                if row_norm[i] == 0.0 && b[i] > 1e-12 {
                    return Err(Error::QpInfeasible);
                }
                continue;
            }
            let s = c.row(i).dot(&x.transpose()) - b[i];
            let tol = 1e-12 * (1.0 + b[i].abs() + row_norm[i] * x.amax());
            if s < -tol && s / row_norm[i] < worst {
                worst = s / row_norm[i];
                p = Some(i);
            }
        }
        let Some(p) = p else {
            let mut multipliers = Vector::zeros(m);
            for (k, &i) in active.iter().enumerate() {
                multipliers[i] = u[k];
            }
            return Ok(QpSolution { x, multipliers, active });
        };
        let np: Vector = c.row(p).transpose();
        let mut u_plus = u.clone();
        u_plus.push(0.0);

        loop {
            steps += 1;
            if steps > max_steps {
                return Err(Error::NoConvergence("dual active-set iteration".into()));
            }
            let q = active.len();
            let mut nmat = Matrix::zeros(n, q);
            for (k, &i) in active.iter().enumerate() {
                nmat.set_column(k, &c.row(i).transpose());
            }
            let (z, r) = proj.directions(&nmat, &np)?;
            let s_p = np.dot(&x) - b[p];

            let mut t1 = f64::INFINITY;
            let mut drop = None;
            for j in 0..q {
                if r[j] > 0.0 {
                    let ratio = u_plus[j] / r[j];
                    if ratio < t1 {
                        t1 = ratio;
                        drop = Some(j);
                    }
                }
            }
            let ztn = z.dot(&np);
            let scale = np.dot(&(&proj.ginv * &np));
            let t2 = if ztn > 1e-12 * scale { -s_p / ztn } else { f64::INFINITY };
            let t = t1.min(t2);
            if !t.is_finite() {
                return Err(Error::QpInfeasible);
            }
            for j in 0..q {
                u_plus[j] -= t * r[j];
            }
            u_plus[q] += t;
            if t2.is_finite() {
                x += &z * t;
            }
            if t2.is_finite() && t2 <= t1 {
                active.push(p);
                u = u_plus;
                break;
            }
            let l = drop.expect("finite partial step has a blocking constraint");
            active.remove(l);
            u_plus.remove(l);
        }
    }
}
