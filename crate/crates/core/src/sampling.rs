//! Candidate points in the active subspace and greedy database construction.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asub::AsBasis;
use crate::flutter::prom_spectrum;
use crate::hdm::{DesignSpace, Hdm};
use crate::interp::{Kernel, TupleInterpolant};
use crate::rom::{build_entry, enforce_consistency, PromEntry, RomConfig};
use crate::{Error, Matrix, Result, Vector};
use nalgebra::{Complex, DVector};

pub use crate::database::{load_database, load_database_for, save_database, GreedyStatus, PromDatabase};

/// Tolerance on `Vᵀμ − μ_r` accepted as feasible.
const FEAS_TOL: f64 = 1e-10;

/// Minimum-norm `μ` in the box with `Vᵀμ = μ_r`.
///
/// Semismooth Newton on the dual `q(y) = min_{lb≤μ≤ub} ½‖μ‖² − yᵀ(Vᵀμ − μ_r)`,
/// whose minimizer is `clip(V·y)`. A dual value above the largest primal
/// objective over the box certifies infeasibility.
pub fn solve_feasibility(basis: &AsBasis, mu_r: &Vector, space: &DesignSpace) -> Result<Vector> {
    let v = &basis.v;
    let (n, k) = v.shape();
    if mu_r.len() != k || space.dim() != n {
        return Err(Error::DimensionMismatch(format!(
            "basis {n}x{k}, reduced point {}, design space {}",
            mu_r.len(),
            space.dim()
        )));
    }
    let (lb, ub) = (space.lower_vec(), space.upper_vec());
    let clip = |y: &Vector| -> Vector {
        let mut x = v * y;
        for i in 0..n {
            x[i] = x[i].clamp(lb[i], ub[i]);
        }
        x
    };
    let dual = |y: &Vector, x: &Vector| 0.5 * x.norm_squared() - y.dot(&(v.tr_mul(x) - mu_r));
    let p_max: f64 = 0.5 * (0..n).map(|i| lb[i].powi(2).max(ub[i].powi(2))).sum::<f64>();
    let tol = FEAS_TOL * (1.0 + mu_r.amax());

    let mut y = mu_r.clone();
    let mut x = clip(&y);
    let mut q = dual(&y, &x);
    for _ in 0..50 * n {
        let f = v.tr_mul(&x) - mu_r;
        if f.amax() <= tol {
            return Ok(x);
        }
        if q > p_max {
            return Err(Error::Infeasible);
        }
        let vy = v * &y;
        let mut h = Matrix::identity(k, k) * 1e-10;
        for i in 0..n {
            if vy[i] > lb[i] && vy[i] < ub[i] {
                let row = v.row(i);
                h += row.transpose() * row;
            }
        }
        let d = h
            .cholesky()
            .map(|c| c.solve(&(-&f)))
            .ok_or_else(|| Error::SingularSystem("feasibility Newton matrix".into()))?;
        let slope = -f.dot(&d);
        let mut t = 1.0;
        loop {
            let yt = &y + &d * t;
            let xt = clip(&yt);
            let qt = dual(&yt, &xt);
            if qt >= q + 1e-4 * t * slope || t < 1e-12 {
                y = yt;
                x = xt;
                q = qt;
                break;
            }
            t *= 0.5;
        }
    }
    let f = v.tr_mul(&x) - mu_r;
    if f.amax() <= tol {
        return Ok(x);
    }
    if q > p_max {
        return Err(Error::Infeasible);
    }
    Err(Error::NoConvergence("feasibility dual iteration".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum GridMode {
    /// Axis `i` spans `[c1·s_i, c2·s_i]` with `s_i = Σ_j |V_ji|`.
    Scaled,
    /// Every axis spans `[c1, c2]`.
    Plain,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub xi_r: Vec<Vector>,
    pub xi: Vec<Vector>,
    pub c1: f64,
    pub c2: f64,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.xi_r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xi_r.is_empty()
    }
}

/// Tensor grid of `n_grid^{n_G}` reduced points, lexicographic with the last
/// axis fastest.
pub fn candidate_grid(basis: &AsBasis, n_grid: usize, c1: f64, c2: f64, mode: GridMode) -> Vec<Vector> {
    let k = basis.n_g();
    let scale: Vec<f64> = (0..k)
        .map(|j| match mode {
            GridMode::Scaled => basis.v.column(j).iter().map(|x| x.abs()).sum(),
            GridMode::Plain => 1.0,
        })
        .collect();
    let axis = |j: usize, t: usize| {
        let s = t as f64 / (n_grid - 1) as f64;
        scale[j] * (c1 + (c2 - c1) * s)
    };
    let total = n_grid.pow(k as u32);
    (0..total)
        .map(|mut idx| {
            let mut p = Vector::zeros(k);
            for j in (0..k).rev() {
                p[j] = axis(j, idx % n_grid);
                idx /= n_grid;
            }
            p
        })
        .collect()
}

pub fn build_candidates(
    basis: &AsBasis,
    space: &DesignSpace,
    n_grid: usize,
    c1: f64,
    c2: f64,
    mode: GridMode,
) -> Result<CandidateSet> {
    if n_grid < 2 || !(c1 < c2) || !c1.is_finite() || !c2.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "candidate grid needs n_grid >= 2 and c1 < c2 (got {n_grid}, {c1}, {c2})"
        )));
    }
    let grid = candidate_grid(basis, n_grid, c1, c2, mode);
    let lifted: Vec<Option<Vector>> = grid
        .par_iter()
        .map(|p| match solve_feasibility(basis, p, space) {
            Ok(x) => Ok(Some(x)),
            Err(Error::Infeasible) | Err(Error::NoConvergence(_)) => Ok(None),
            Err(e) => Err(e),
        })
        .collect::<Result<_>>()?;
    let mut set = CandidateSet {
        xi_r: Vec::new(),
        xi: Vec::new(),
        c1,
        c2,
    };
    for (p, x) in grid.into_iter().zip(lifted) {
        if let Some(x) = x {
            set.xi_r.push(p);
            set.xi.push(x);
        }
    }
    if set.is_empty() {
        return Err(Error::EmptyCandidateSet);
    }
    Ok(set)
}

/// Index of the entry closest to `mu_r`, lowest index on ties.
pub fn nearest_entry(entries: &[PromEntry], mu_r: &Vector) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, e) in entries.iter().enumerate() {
        let d = (&e.mu_r - mu_r).norm();
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((i, d));
        }
    }
    best.map(|(i, _)| i)
}

/// Relative residual of the full model at `mu` for the least-damped mode of
/// the reduced model interpolated at `mu_r`, reconstructed with the bases of
/// the nearest entry.
pub fn error_indicator_with(
    interp: &TupleInterpolant,
    entries: &[PromEntry],
    hdm: &Hdm,
    mu_r: &Vector,
    mu: &Vector,
) -> Result<f64> {
    let near = nearest_entry(entries, mu_r).ok_or(Error::EmptyDatabase)?;
    let vq = entries[near].v_q();
    let tuple = interp.tuple(mu_r)?;
    let spec = prom_spectrum(&tuple)?;
    let report = crate::flutter::damping_ratios(&spec, 0.0)?;
    let i = report.active_index;
    let s = -spec.eigenvalues[i];
    let q: DVector<Complex<f64>> = vq.map(|x| Complex::new(x, 0.0)) * spec.eigenvectors.column(i);
    let blocks = hdm.blocks(mu)?;
    let num = crate::hdm::hdm_residual(&blocks, s, &q)?;
    let den = (blocks.cal_b.map(|x| Complex::new(x, 0.0)) * &q).norm();
    if !(den > 0.0) {
        return Err(Error::DegenerateMode(
            "reconstructed mode is in the kernel of calB".into(),
        ));
    }
    Ok(num / den)
}

/// Indicator at `mu_r`, with the full model evaluated at `lift(mu_r)`.
pub fn error_indicator(db: &PromDatabase, hdm: &Hdm, mu_r: &Vector) -> Result<f64> {
    let interp = db.interpolant()?;
    error_indicator_with(&interp, &db.entries, hdm, mu_r, &db.basis.lift(mu_r)?)
}

/// Indicator assigned to a candidate whose interpolated model has no usable
/// spectrum.
pub const UNRESOLVED_INDICATOR: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GreedyOptions {
    /// Stop once the largest indicator is at most `tol·min(1, first maximum)`.
    pub tol: f64,
    pub max_entries: usize,
    /// Evaluate a seeded random subset of this size per iteration.
    #[serde(default)]
    pub subset: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub kernel: Kernel,
}

impl GreedyOptions {
    pub fn new(tol: f64, max_entries: usize) -> Self {
        GreedyOptions {
            tol,
            max_entries,
            subset: None,
            seed: 0,
            kernel: Kernel::ThinPlate,
        }
    }
}

/// Index of the candidate nearest the centroid of the reduced candidates.
pub fn central_candidate(candidates: &CandidateSet) -> usize {
    let k = candidates.xi_r[0].len();
    let centroid = candidates.xi_r.iter().fold(Vector::zeros(k), |a, p| a + p) / candidates.len() as f64;
    let mut best = (0, f64::INFINITY);
    for (i, p) in candidates.xi_r.iter().enumerate() {
        let d = (p - &centroid).norm();
        if d < best.1 {
            best = (i, d);
        }
    }
    best.0
}

pub fn greedy_build(
    hdm: &Hdm,
    basis: &AsBasis,
    candidates: &CandidateSet,
    opts: &GreedyOptions,
    rom: &RomConfig,
) -> Result<PromDatabase> {
    if candidates.is_empty() {
        return Err(Error::EmptyCandidateSet);
    }
    if opts.max_entries == 0 || !(opts.tol >= 0.0) {
        return Err(Error::InvalidParameter(
            "greedy needs max_entries >= 1 and tol >= 0".into(),
        ));
    }
    rom.validate(hdm.config.nf, hdm.config.ns)?;
    let mut sampled = vec![false; candidates.len()];
    let first = central_candidate(candidates);
    let mut entries = vec![build_entry(hdm, &candidates.xi[first], &candidates.xi_r[first], rom)?];
    sampled[first] = true;
    let mut history = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let status = loop {
        let pool: Vec<usize> = (0..candidates.len()).filter(|&i| !sampled[i]).collect();
        if pool.is_empty() {
            break GreedyStatus::CandidatesExhausted;
        }
        let pool = match opts.subset {
            Some(m) if m < pool.len() => {
                let mut pick: Vec<usize> = sample(&mut rng, pool.len(), m).into_iter().map(|i| pool[i]).collect();
                pick.sort_unstable();
                pick
            }
            _ => pool,
        };
        let interp = TupleInterpolant::new(&entries, 0, opts.kernel)?;
        let values: Vec<f64> = pool
            .par_iter()
            .map(
                |&i| match error_indicator_with(&interp, &entries, hdm, &candidates.xi_r[i], &candidates.xi[i]) {
                    Err(Error::DegenerateMode(_) | Error::SingularCalA | Error::NoConvergence(_)) => {
                        Ok(UNRESOLVED_INDICATOR)
                    }
                    r => r,
                },
            )
            .collect::<Result<_>>()?;
        let (mut arg, mut max) = (pool[0], values[0]);
        for (&i, &e) in pool.iter().zip(&values).skip(1) {
            if e > max {
                arg = i;
                max = e;
            }
        }
        history.push(max);
        if max <= opts.tol * history[0].min(1.0) {
            break GreedyStatus::Converged;
        }
        if entries.len() >= opts.max_entries {
            break GreedyStatus::BudgetExhausted;
        }
        entries.push(build_entry(hdm, &candidates.xi[arg], &candidates.xi_r[arg], rom)?);
        sampled[arg] = true;
        enforce_consistency(&mut entries, 0)?;
    };
    Ok(PromDatabase {
        hdm_digest: hdm.digest(),
        basis: basis.clone(),
        entries,
        ref_index: 0,
        consistency_applied: true,
        history,
        status,
        kernel: opts.kernel,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asub::AsMethod;

    fn e1_basis(n: usize) -> AsBasis {
        let mut v = Matrix::zeros(n, 1);
        v[(0, 0)] = 1.0;
        AsBasis::new(v, vec![1.0], AsMethod::Alternative).unwrap()
    }

    #[test]
    fn feasible_lift_is_minimum_norm() {
        let space = DesignSpace::uniform(3, -1.0, 1.0);
        let x = solve_feasibility(&e1_basis(3), &Vector::from_element(1, 0.5), &space).unwrap();
        assert!((x - Vector::from_vec(vec![0.5, 0.0, 0.0])).amax() < 1e-14);
    }

    #[test]
    fn unreachable_target_is_infeasible() {
        let space = DesignSpace::uniform(3, -1.0, 1.0);
        let r = solve_feasibility(&e1_basis(3), &Vector::from_element(1, 2.0), &space);
        assert!(matches!(r, Err(Error::Infeasible)));
    }

    #[test]
    fn clipped_directions_are_compensated() {
        // (μ0 + μ1)/√2 = 1.2 with μ0 ≤ 0.5 forces μ = (0.5, 1.2·√2 − 0.5)
        let v = Matrix::from_column_slice(2, 1, &[1.0, 1.0]) / 2f64.sqrt();
        let basis = AsBasis::new(v, vec![1.0], AsMethod::Alternative).unwrap();
        let space = DesignSpace::new(vec![-1.0, -1.0], vec![0.5, 1.5]).unwrap();
        let x = solve_feasibility(&basis, &Vector::from_element(1, 1.2), &space).unwrap();
        assert!((x[0] - 0.5).abs() < 1e-12);
        assert!((x[1] - (1.2 * 2f64.sqrt() - 0.5)).abs() < 1e-10);
    }

    #[test]
    fn canonical_grid_is_all_feasible() {
        let space = DesignSpace::uniform(4, -1.0, 1.0);
        let v = Matrix::identity(4, 2);
        let basis = AsBasis::new(v, vec![1.0, 1.0], AsMethod::Alternative).unwrap();
        let set = build_candidates(&basis, &space, 5, -0.8, 0.8, GridMode::Plain).unwrap();
        assert_eq!(set.len(), 25);
        assert_eq!(set.xi_r[1], Vector::from_vec(vec![-0.8, -0.4]));
    }

    #[test]
    fn out_of_box_grid_is_empty() {
        let space = DesignSpace::uniform(2, -1.0, 1.0);
        let r = build_candidates(&e1_basis(2), &space, 3, 2.0, 3.0, GridMode::Plain);
        assert!(matches!(r, Err(Error::EmptyCandidateSet)));
    }
}
