//! Active-subspace bases of the design space.
//!
//! The classical basis compresses objective gradients sampled by Latin
//! hypercube; the alternative basis compresses the start point and the
//! increments of an optimizer trajectory on the auxiliary problem.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::hdm::DesignSpace;
use crate::manifolds::svd::ordered_left_svd;
use crate::manifolds::{orthonormality_defect, truncate_svd};
use crate::optimizer::{sqp_solve, NlpSpec, RunRecord, RunStatus, SqpOptions};
use crate::{Error, Matrix, Result, Vector};

/// Default energy tolerance for picking the subspace dimension.
pub const DEFAULT_AS_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AsMethod {
    Classical,
    Alternative,
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AsBasis {
    /// Orthonormal columns spanning the subspace.
    pub v: Matrix,
    pub singular_values: Vec<f64>,
    pub method: AsMethod,
}

impl AsBasis {
    /// The whole design space, in its own coordinates.
    pub fn identity(dim: usize) -> Self {
        AsBasis {
            v: Matrix::identity(dim, dim),
            singular_values: vec![1.0; dim],
            method: AsMethod::None,
        }
    }

    pub fn new(v: Matrix, singular_values: Vec<f64>, method: AsMethod) -> Result<Self> {
        if v.ncols() == 0 || v.ncols() > v.nrows() {
            return Err(Error::DimensionMismatch(format!("basis of shape {:?}", v.shape())));
        }
        let defect = orthonormality_defect(&v);
        if defect > 1e-10 {
            return Err(Error::NonOrthonormalInput(defect));
        }
        Ok(AsBasis {
            v,
            singular_values,
            method,
        })
    }

    pub fn full_dim(&self) -> usize {
        self.v.nrows()
    }

    pub fn n_g(&self) -> usize {
        self.v.ncols()
    }

    pub fn lift(&self, mu_r: &Vector) -> Result<Vector> {
        if mu_r.len() != self.n_g() {
            return Err(Error::DimensionMismatch(format!(
                "reduced point of length {} for a {}-dimensional subspace",
                mu_r.len(),
                self.n_g()
            )));
        }
        Ok(&self.v * mu_r)
    }

    /// `Vᵀ·mu`.
    pub fn project(&self, mu: &Vector) -> Result<Vector> {
        if mu.len() != self.full_dim() {
            return Err(Error::DimensionMismatch(format!(
                "point of length {} for a {}-dimensional design space",
                mu.len(),
                self.full_dim()
            )));
        }
        Ok(self.v.tr_mul(mu))
    }
}

pub fn lift(basis: &AsBasis, mu_r: &Vector) -> Result<Vector> {
    basis.lift(mu_r)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientSnapshotSet {
    pub points: Vec<Vector>,
    /// One gradient per column.
    pub gradients: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IncrementSnapshotSet {
    pub mu0: Vector,
    /// Column k is `trajectory[k+1] − trajectory[k]`.
    pub increments: Matrix,
    pub trajectory: Vec<Vector>,
    /// `[mu0, increments]`, the matrix that is compressed.
    pub snapshots: Matrix,
    pub status: RunStatus,
    /// Set when the trajectory comes from a run that did not converge.
    pub partial: bool,
}

impl IncrementSnapshotSet {
    pub fn from_run(record: &RunRecord) -> Self {
        let mu0 = record.iterates[0].clone();
        let n = mu0.len();
        let k = record.iterates.len() - 1;
        let mut increments = Matrix::zeros(n, k);
        for j in 0..k {
            increments.set_column(j, &(&record.iterates[j + 1] - &record.iterates[j]));
        }
        let mut snapshots = Matrix::zeros(n, k + 1);
        snapshots.set_column(0, &mu0);
        snapshots.columns_mut(1, k).copy_from(&increments);
        IncrementSnapshotSet {
            mu0,
            increments,
            trajectory: record.iterates.clone(),
            snapshots,
            status: record.status,
            partial: record.status != RunStatus::Converged,
        }
    }
}

/// `⌈α·β·log₁₀(dim)⌉`.
pub fn classical_sample_count(alpha: f64, beta: f64, dim: usize) -> Result<usize> {
    if !(alpha > 0.0 && alpha.is_finite()) || !(beta > 0.0 && beta.is_finite()) || dim < 2 {
        return Err(Error::InvalidParameter(format!(
            "sample count needs alpha > 0, beta > 0, dim >= 2 (got {alpha}, {beta}, {dim})"
        )));
    }
    let n = (alpha * beta * (dim as f64).log10()).ceil();
    Ok(n.max(1.0) as usize)
}

/// Latin hypercube design: every axis is cut into `n` strata, each stratum
/// holds exactly one point, jittered about the stratum midpoint.
pub fn latin_hypercube(space: &DesignSpace, n: usize, seed: u64) -> Vec<Vector> {
    let dim = space.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(dim);
    for d in 0..dim {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(&mut rng);
        let (lo, hi) = (space.lower[d], space.upper[d]);
        cols.push(
            strata
                .into_iter()
                .map(|s| {
                    let t = (s as f64 + 0.5 + rng.random_range(-0.25..0.25)) / n as f64;
                    lo + (hi - lo) * t
                })
                .collect(),
        );
    }
    (0..n).map(|i| Vector::from_fn(dim, |d, _| cols[d][i])).collect()
}

fn basis_from_snapshots(
    snapshots: &Matrix,
    tolerance: f64,
    dim_override: Option<usize>,
    method: AsMethod,
) -> Result<AsBasis> {
    let trunc = truncate_svd(snapshots, tolerance)?;
    let v = match dim_override {
        None => trunc.basis,
        Some(n) => {
            let (u, sigma) = ordered_left_svd(snapshots)?;
            if n == 0 || n > sigma.len() {
                return Err(Error::InvalidParameter(format!(
                    "subspace dimension override {n} exceeds snapshot rank {}",
                    sigma.len()
                )));
            }
            u.columns(0, n).into_owned()
        }
    };
    AsBasis::new(v, trunc.singular_values, method)
}

/// Classical basis from gradients at `⌈α·β·log₁₀ N⌉` Latin hypercube points.
#[allow(clippy::too_many_arguments)]
pub fn build_classical_as<F>(
    gradient: F,
    space: &DesignSpace,
    alpha: f64,
    beta: f64,
    tolerance: f64,
    seed: u64,
    dim_override: Option<usize>,
) -> Result<(AsBasis, GradientSnapshotSet)>
where
    F: Fn(&Vector) -> Result<(f64, Vector)> + Sync,
{
    let ns = classical_sample_count(alpha, beta, space.dim())?;
    let points = latin_hypercube(space, ns, seed);
    let grads: Vec<Vector> = points
        .par_iter()
        .map(|p| gradient(p).map(|(_, g)| g))
        .collect::<Result<_>>()?;
    let mut gradients = Matrix::zeros(space.dim(), ns);
    for (j, g) in grads.iter().enumerate() {
        if g.len() != space.dim() {
            return Err(Error::DimensionMismatch("gradient length".into()));
        }
        gradients.set_column(j, g);
    }
    let basis = basis_from_snapshots(&gradients, tolerance, dim_override, AsMethod::Classical)?;
    Ok((basis, GradientSnapshotSet { points, gradients }))
}

/// Alternative basis from a finished optimizer run.
pub fn alternative_as_from_run(
    record: &RunRecord,
    tolerance: f64,
    dim_override: Option<usize>,
) -> Result<(AsBasis, IncrementSnapshotSet)> {
    let set = IncrementSnapshotSet::from_run(record);
    if set.partial {
        return Err(Error::OptimizerFailed {
            status: format!("{:?}", record.status),
            partial: Box::new(set),
        });
    }
    let basis = basis_from_snapshots(&set.snapshots, tolerance, dim_override, AsMethod::Alternative)?;
    Ok((basis, set))
}

/// Runs the optimizer on the auxiliary problem from `spec.x0` and compresses
/// `[mu0, Δmu⁰, Δmu¹, …]`.
pub fn build_alternative_as(
    spec: &NlpSpec,
    opts: &SqpOptions,
    tolerance: f64,
    dim_override: Option<usize>,
) -> Result<(AsBasis, IncrementSnapshotSet)> {
    let record = sqp_solve(spec, opts)?;
    alternative_as_from_run(&record, tolerance, dim_override)
}

/// Largest principal angle between the column spans of two orthonormal
/// matrices with the same number of rows.
pub fn max_principal_angle(a: &Matrix, b: &Matrix) -> f64 {
    let (small, big) = if a.ncols() <= b.ncols() { (a, b) } else { (b, a) };
    // sin of the largest angle is the norm of the part of `small` outside `big`
    let resid = small - big * big.tr_mul(small);
    let s = resid.singular_values().iter().copied().fold(0.0, f64::max);
    s.min(1.0).asin()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_count_examples() {
        assert_eq!(classical_sample_count(10.0, 6.0, 6).unwrap(), 47);
        assert_eq!(classical_sample_count(1.0, 1.0, 10).unwrap(), 1);
        assert_eq!(classical_sample_count(2.0, 4.0, 100).unwrap(), 16);
        assert!(classical_sample_count(2.0, 0.0, 10).is_err());
        assert!(classical_sample_count(2.0, 1.0, 1).is_err());
    }

    #[test]
    fn latin_hypercube_fills_every_stratum() {
        let space = DesignSpace::uniform(3, -1.0, 1.0);
        let pts = latin_hypercube(&space, 7, 11);
        for d in 0..3 {
            let mut seen: Vec<usize> = pts
                .iter()
                .map(|p| ((p[d] + 1.0) / 2.0 * 7.0).floor() as usize)
                .collect();
            seen.sort();
            assert_eq!(seen, (0..7).collect::<Vec<_>>());
        }
    }

    #[test]
    fn linear_objective_gives_its_gradient_direction() {
        let a = Vector::from_vec(vec![1.0, -2.0, 0.5, 0.0]);
        let space = DesignSpace::uniform(4, -1.0, 1.0);
        let ac = a.clone();
        let (basis, snaps) =
            build_classical_as(move |mu| Ok((ac.dot(mu), ac.clone())), &space, 3.0, 2.0, 1e-10, 5, None).unwrap();
        assert_eq!(basis.n_g(), 1);
        let dir = &a / a.norm();
        assert!((basis.v.column(0).dot(&dir).abs() - 1.0).abs() < 1e-12);
        assert_eq!(snaps.gradients.ncols(), 4);
    }

    #[test]
    fn constant_objective_has_zero_snapshots() {
        let space = DesignSpace::uniform(3, -1.0, 1.0);
        let r = build_classical_as(|_| Ok((1.0, Vector::zeros(3))), &space, 2.0, 2.0, 1e-4, 1, None);
        assert!(matches!(r, Err(Error::ZeroMatrix)));
    }

    #[test]
    fn optimal_start_gives_single_snapshot() {
        let mu0 = Vector::from_vec(vec![0.5, 0.0, 0.0]);
        let target = mu0.clone();
        let spec = NlpSpec::unconstrained(mu0.clone(), move |x: &Vector| {
            let d = x - &target;
            Ok((d.norm_squared(), d * 2.0))
        });
        let (basis, set) = build_alternative_as(&spec, &SqpOptions::default(), 0.0, None).unwrap();
        assert_eq!(set.snapshots.ncols(), 1);
        assert_eq!(basis.n_g(), 1);
        assert!((basis.v.column(0) - Vector::from_vec(vec![1.0, 0.0, 0.0])).amax() < 1e-15);
    }

    #[test]
    fn failed_run_keeps_partial_snapshots() {
        let spec = NlpSpec::unconstrained(Vector::from_vec(vec![1.0, 1.0]), |x: &Vector| {
            // Rosenbrock needs far more than two iterations
            let (a, b) = (x[0], x[1]);
            let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let g = Vector::from_vec(vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)]);
            Ok((f + (a + 1.2).powi(2), g + Vector::from_vec(vec![2.0 * (a + 1.2), 0.0])))
        });
        let opts = SqpOptions {
            max_iter: 2,
            ..SqpOptions::default()
        };
        match build_alternative_as(&spec, &opts, 0.0, None) {
            Err(Error::OptimizerFailed { partial, .. }) => {
                assert!(partial.partial);
                assert_eq!(partial.snapshots.ncols(), partial.trajectory.len());
            }
            other => panic!("expected OptimizerFailed, got {other:?}"),
        }
    }

    #[test]
    fn dimension_override() {
        let s = Matrix::from_row_slice(3, 3, &[3.0, 0.0, 0.0, 0.0, 1e-3, 0.0, 0.0, 0.0, 0.0]);
        let b = basis_from_snapshots(&s, 1e-2, Some(2), AsMethod::Alternative).unwrap();
        assert_eq!(b.n_g(), 2);
        assert!(basis_from_snapshots(&s, 1e-2, Some(3), AsMethod::Alternative).is_err());
    }

    #[test]
    fn principal_angle_of_rotated_span() {
        let a = Matrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]);
        let t: f64 = 0.3;
        let b = Matrix::from_column_slice(3, 1, &[t.cos(), t.sin(), 0.0]);
        assert!((max_principal_angle(&a, &b) - t).abs() < 1e-14);
    }
}
