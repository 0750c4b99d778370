//! Design problems over the parameters only: the auxiliary problem without
//! the flutter constraint, and the full problem with the flutter constraint
//! evaluated on the interpolated reduced models.

use super::sqp::{sqp_solve, NlpSpec, RunRecord, SqpOptions, UNBOUNDED};
use crate::database::PromDatabase;
use crate::flutter::{damping_ratios, flutter_constraint_at, prom_spectrum, DampingReport};
use crate::hdm::Hdm;
use crate::{Error, Matrix, Result, Vector};

/// Maximizes the surrogate objective subject to the surrogate constraints
/// and the design-space bounds.
pub fn solve_auxiliary(hdm: &Hdm, mu0: &Vector, opts: &SqpOptions) -> Result<RunRecord> {
    sqp_solve(&auxiliary_spec(hdm, mu0)?, opts)
}

pub fn auxiliary_spec<'a>(hdm: &'a Hdm, mu0: &Vector) -> Result<NlpSpec<'a>> {
    let ds = hdm.design_space();
    let v = ds.violation(mu0);
    if v > 1e-8 || mu0.len() != ds.dim() {
        return Err(Error::InfeasibleStart(v));
    }
    Ok(NlpSpec {
        dim: ds.dim(),
        objective: Box::new(move |mu: &Vector| hdm.surrogate_objective(mu).map(|(f, g)| (-f, -g))),
        n_ineq: 2,
        inequalities: Box::new(move |mu: &Vector| hdm.surrogate_constraints(mu)),
        lower: ds.lower_vec(),
        upper: ds.upper_vec(),
        x0: mu0.clone(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MdaoResult {
    /// Iterates are in reduced coordinates and objectives are negated.
    pub record: RunRecord,
    pub final_mu_r: Vector,
    pub final_mu: Vector,
    /// Surrogate objective at the final point.
    pub objective: f64,
    /// Damping of the interpolated reduced model at the final point.
    pub report: DampingReport,
    /// Least damping ratio of the interpolated reduced model per iterate.
    pub min_zeta_history: Vec<f64>,
    /// Distance from each iterate to the nearest database sample.
    pub sample_distance: Vec<f64>,
}

fn is_coordinate_embedding(v: &Matrix) -> bool {
    v.is_square() && *v == Matrix::identity(v.nrows(), v.ncols())
}

/// Maximizes the surrogate objective over `lift(μ_r)` subject to the
/// surrogate constraints, the design-space box and `ζ_k(μ_r) ≥ ζ_lb` for the
/// `n_track` least-damped modes of the interpolated reduced model.
pub fn solve_mdao(
    hdm: &Hdm,
    db: &PromDatabase,
    zeta_lb: f64,
    n_track: usize,
    mu0: &Vector,
    opts: &SqpOptions,
) -> Result<MdaoResult> {
    let ds = hdm.design_space();
    let basis = &db.basis;
    if mu0.len() != ds.dim() || basis.full_dim() != ds.dim() {
        return Err(Error::DimensionMismatch(
            "start point, basis and design space disagree".into(),
        ));
    }
    let interp = db.interpolant()?;
    let v = &basis.v;
    let x0 = basis.project(mu0)?;
    let start_violation = ds.violation(&basis.lift(&x0)?);
    if start_violation > 1e-8 {
        return Err(Error::InfeasibleStart(start_violation));
    }
    let simple_bounds = is_coordinate_embedding(v);
    let n = basis.n_g();
    let n_box = if simple_bounds { 0 } else { 2 * ds.dim() };
    let (lb, ub) = (ds.lower_vec(), ds.upper_vec());
    let interp_ref = &interp;
    let lb_c = lb.clone();
    let ub_c = ub.clone();
    let spec = NlpSpec {
        dim: n,
        objective: Box::new(move |x: &Vector| {
            let (f, g) = hdm.surrogate_objective(&(v * x))?;
            Ok((-f, -v.tr_mul(&g)))
        }),
        n_ineq: 2 + n_track + n_box,
        inequalities: Box::new(move |x: &Vector| {
            let mu = v * x;
            let (gs, js) = hdm.surrogate_constraints(&mu)?;
            let fl = flutter_constraint_at(interp_ref, x, zeta_lb, n_track)?;
            let m = 2 + n_track + n_box;
            let mut c = Vector::zeros(m);
            let mut jac = Matrix::zeros(m, n);
            c.rows_mut(0, 2).copy_from(&gs);
            jac.rows_mut(0, 2).copy_from(&(js * v));
            c.rows_mut(2, n_track).copy_from(&(-&fl.values));
            jac.rows_mut(2, n_track).copy_from(&(-&fl.jacobian));
            if n_box > 0 {
                let d = mu.len();
                c.rows_mut(2 + n_track, d).copy_from(&(&mu - &ub_c));
                jac.rows_mut(2 + n_track, d).copy_from(v);
                c.rows_mut(2 + n_track + d, d).copy_from(&(&lb_c - &mu));
                jac.rows_mut(2 + n_track + d, d).copy_from(&(-v));
            }
            Ok((c, jac))
        }),
        lower: if simple_bounds {
            lb
        } else {
            Vector::from_element(n, -UNBOUNDED)
        },
        upper: if simple_bounds {
            ub
        } else {
            Vector::from_element(n, UNBOUNDED)
        },
        x0,
    };
    let record = sqp_solve(&spec, opts)?;
    let final_mu_r = record.final_point().clone();
    let final_mu = basis.lift(&final_mu_r)?;
    let objective = -record.final_objective();
    let report = damping_ratios(&prom_spectrum(&interp.tuple(&final_mu_r)?)?, zeta_lb)?;
    let min_zeta_history = record
        .iterates
        .iter()
        .map(|x| Ok(damping_ratios(&prom_spectrum(&interp.tuple(x)?)?, zeta_lb)?.min_zeta))
        .collect::<Result<_>>()?;
    let sample_distance = record.iterates.iter().map(|x| interp.nearest_distance(x)).collect();
    Ok(MdaoResult {
        record,
        final_mu_r,
        final_mu,
        objective,
        report,
        min_zeta_history,
        sample_distance,
    })
}
