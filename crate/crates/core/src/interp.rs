//! Interpolation of reduced tuples on matrix manifolds.
//!
//! Every stored block is mapped to the tangent space at the reference entry,
//! the tangents are combined with radial basis function weights and the
//! result is mapped back. Blocks that are identity or zero in every tuple
//! are copied, never interpolated.

use serde::{Deserialize, Serialize};

use crate::manifolds::matfun::{expm, expm_frechet, spd_map, symmetrize};
use crate::manifolds::{manifold_exp, manifold_log, ManifoldKind};
use crate::rom::{PromEntry, PromTuple, TupleBlocks};
use crate::{Error, Matrix, Result, Vector};

/// Ridge added to the kernel diagonal.
pub const DEFAULT_RIDGE: f64 = 1e-12;
/// Kernel systems above this condition number are rejected.
pub const MAX_KERNEL_CONDITION: f64 = 1e14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE", tag = "type")]
pub enum Kernel {
    /// `r²·log r` with a linear polynomial tail.
    #[default]
    ThinPlate,
    /// `exp(−(shape·r)²)` without a tail.
    Gaussian { shape: f64 },
}

impl Kernel {
    fn phi(&self, r: f64) -> f64 {
        match *self {
            Kernel::ThinPlate => {
                if r > 0.0 {
                    r * r * r.ln()
                } else {
                    0.0
                }
            }
            Kernel::Gaussian { shape } => (-(shape * r).powi(2)).exp(),
        }
    }

    /// `φ'(r)/r`, finite at the origin.
    fn dphi_over_r(&self, r: f64) -> f64 {
        match *self {
            Kernel::ThinPlate => {
                if r > 0.0 {
                    2.0 * r.ln() + 1.0
                } else {
                    0.0
                }
            }
            Kernel::Gaussian { shape } => -2.0 * shape * shape * (-(shape * r).powi(2)).exp(),
        }
    }

    fn has_tail(&self) -> bool {
        matches!(self, Kernel::ThinPlate)
    }
}

/// Scattered-data interpolant in cardinal form: the value at `x` is
/// `Σ_j α_j(x)·y_j` for the training values `y_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct RbfModel {
    pub centers: Vec<Vector>,
    pub kernel: Kernel,
    pub regularization: f64,
    shift: Vector,
    /// Orthonormal directions spanned by the centered centers; the linear tail
    /// lives in these coordinates.
    dirs: Matrix,
    tail: usize,
    system_inverse: Matrix,
}

impl RbfModel {
    pub fn new(centers: Vec<Vector>, kernel: Kernel, regularization: f64) -> Result<Self> {
        let n = centers.len();
        if n == 0 {
            return Err(Error::EmptyDatabase);
        }
        let d = centers[0].len();
        if centers.iter().any(|c| c.len() != d) {
            return Err(Error::DimensionMismatch("centers of unequal length".into()));
        }
        if let Kernel::Gaussian { shape } = kernel {
            if !(shape > 0.0 && shape.is_finite()) {
                return Err(Error::InvalidParameter(format!("Gaussian shape {shape}")));
            }
        }
        let shift = centers.iter().fold(Vector::zeros(d), |a, c| a + c) / n as f64;
        let dirs = if kernel.has_tail() && n > 1 && d > 0 {
            let mut cc = Matrix::zeros(d, n);
            for (j, c) in centers.iter().enumerate() {
                cc.set_column(j, &(c - &shift));
            }
            let svd = cc.clone().svd(true, false);
            let u = svd.u.expect("left vectors requested");
            let smax = svd.singular_values.max();
            let keep: Vec<usize> = (0..svd.singular_values.len())
                .filter(|&i| svd.singular_values[i] > 1e-10 * smax.max(1e-300))
                .collect();
            Matrix::from_fn(d, keep.len(), |i, k| u[(i, keep[k])])
        } else {
            Matrix::zeros(d, 0)
        };
        let tail = if kernel.has_tail() { 1 + dirs.ncols() } else { 0 };
        let size = n + tail;
        let mut s = Matrix::zeros(size, size);
        for i in 0..n {
            for j in 0..n {
                s[(i, j)] = kernel.phi((&centers[i] - &centers[j]).norm());
            }
            s[(i, i)] += regularization;
            if tail > 0 {
                let t = dirs.tr_mul(&(&centers[i] - &shift));
                s[(i, n)] = 1.0;
                s[(n, i)] = 1.0;
                for k in 0..t.len() {
                    s[(i, n + 1 + k)] = t[k];
                    s[(n + 1 + k, i)] = t[k];
                }
            }
        }
        let sv = s.clone().singular_values();
        let cond = sv.max() / sv.min();
        if !(cond <= MAX_KERNEL_CONDITION) {
            return Err(Error::SingularKernelMatrix(cond));
        }
        let system_inverse = s.try_inverse().ok_or(Error::SingularKernelMatrix(f64::INFINITY))?;
        Ok(RbfModel {
            centers,
            kernel,
            regularization,
            shift,
            dirs,
            tail,
            system_inverse,
        })
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    fn check_query(&self, x: &Vector) -> Result<()> {
        if x.len() != self.shift.len() {
            return Err(Error::DimensionMismatch(format!(
                "query of length {} for centers of length {}",
                x.len(),
                self.shift.len()
            )));
        }
        Ok(())
    }

    /// Cardinal weights `α(x)`.
    pub fn cardinal(&self, x: &Vector) -> Result<Vector> {
        self.check_query(x)?;
        let n = self.len();
        let mut rhs = Vector::zeros(n + self.tail);
        for j in 0..n {
            rhs[j] = self.kernel.phi((x - &self.centers[j]).norm());
        }
        if self.tail > 0 {
            rhs[n] = 1.0;
            let t = self.dirs.tr_mul(&(x - &self.shift));
            rhs.rows_mut(n + 1, t.len()).copy_from(&t);
        }
        Ok((&self.system_inverse * rhs).rows(0, n).into_owned())
    }

    /// `∂α/∂x`, one column per coordinate of `x`.
    pub fn cardinal_gradient(&self, x: &Vector) -> Result<Matrix> {
        self.check_query(x)?;
        let n = self.len();
        let d = x.len();
        let mut rhs = Matrix::zeros(n + self.tail, d);
        for j in 0..n {
            let diff = x - &self.centers[j];
            let w = self.kernel.dphi_over_r(diff.norm());
            for i in 0..d {
                rhs[(j, i)] = w * diff[i];
            }
        }
        for k in 0..self.dirs.ncols() {
            for i in 0..d {
                rhs[(n + 1 + k, i)] = self.dirs[(i, k)];
            }
        }
        Ok((&self.system_inverse * rhs).rows(0, n).into_owned())
    }
}

/// Combination `Σ_j w_j·X_j`.
fn combine(weights: &[f64], mats: &[Matrix]) -> Matrix {
    let mut out = Matrix::zeros(mats[0].nrows(), mats[0].ncols());
    for (w, m) in weights.iter().zip(mats) {
        out += m * *w;
    }
    out
}

/// Interpolates manifold-valued samples `values[j]` located at `centers[j]`.
pub fn interpolate_block(
    values: &[Matrix],
    centers: &[Vector],
    kind: ManifoldKind,
    ref_index: usize,
    query: &Vector,
    kernel: Kernel,
) -> Result<Matrix> {
    if values.is_empty() {
        return Err(Error::EmptyDatabase);
    }
    if values.len() != centers.len() || ref_index >= values.len() {
        return Err(Error::DimensionMismatch(
            "samples, centers and reference index disagree".into(),
        ));
    }
    let base = &values[ref_index];
    let tangents = values
        .iter()
        .map(|x| manifold_log(kind, base, x))
        .collect::<Result<Vec<_>>>()?;
    let model = RbfModel::new(centers.to_vec(), kernel, DEFAULT_RIDGE)?;
    let alpha = model.cardinal(query)?;
    manifold_exp(kind, base, &combine(alpha.as_slice(), &tangents))
}

/// Manifold of each interpolated block of a reduced tuple.
pub fn block_manifolds(nf: usize, ns: usize) -> [(&'static str, ManifoldKind); 7] {
    [
        ("a", ManifoldKind::GeneralLinear { n: nf }),
        ("h", ManifoldKind::GeneralLinear { n: nf }),
        ("r", ManifoldKind::Euclidean { rows: nf, cols: ns }),
        ("g", ManifoldKind::Euclidean { rows: nf, cols: ns }),
        ("neg_p", ManifoldKind::Euclidean { rows: ns, cols: nf }),
        ("d", ManifoldKind::Spd { n: ns }),
        ("omega2", ManifoldKind::Spd { n: ns }),
    ]
}

fn to_array(b: TupleBlocks) -> [Matrix; 7] {
    [b.a, b.h, b.r, b.g, b.neg_p, b.d, b.omega2]
}

fn from_array(m: [Matrix; 7]) -> TupleBlocks {
    let [a, h, r, g, neg_p, d, omega2] = m;
    TupleBlocks {
        a,
        h,
        r,
        g,
        neg_p,
        d,
        omega2,
    }
}

/// Differentiated tuple: `(∂calA_r/∂μ_r[j], ∂calB_r/∂μ_r[j])`.
pub type TupleDerivative = (Matrix, Matrix);

/// Tangent vectors and kernel weights of one database state.
#[derive(Debug, Clone)]
pub struct TupleInterpolant {
    model: RbfModel,
    nf: usize,
    ns: usize,
    kinds: [ManifoldKind; 7],
    base: [Matrix; 7],
    /// `X_ref^{1/2}` for SPD blocks.
    root: [Option<Matrix>; 7],
    /// `tangents[b][j]` is the tangent of block `b` of entry `j`.
    tangents: Vec<Vec<Matrix>>,
}

impl TupleInterpolant {
    /// Entries must already be expressed in common reduced coordinates.
    pub fn new(entries: &[PromEntry], ref_index: usize, kernel: Kernel) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::EmptyDatabase);
        }
        if ref_index >= entries.len() {
            return Err(Error::InvalidParameter(format!(
                "reference index {ref_index} out of range"
            )));
        }
        let (nf, ns) = (entries[ref_index].tuple.nf, entries[ref_index].tuple.ns);
        let kinds = block_manifolds(nf, ns).map(|(_, k)| k);
        let base = to_array(entries[ref_index].tuple.blocks());
        let blocks: Vec<[Matrix; 7]> = entries
            .iter()
            .map(|e| {
                if (e.tuple.nf, e.tuple.ns) != (nf, ns) {
                    return Err(Error::DimensionMismatch("entries of unequal reduced size".into()));
                }
                Ok(to_array(e.tuple.blocks()))
            })
            .collect::<Result<_>>()?;
        let mut tangents = Vec::with_capacity(7);
        for b in 0..7 {
            tangents.push(
                blocks
                    .iter()
                    .map(|x| manifold_log(kinds[b], &base[b], &x[b]))
                    .collect::<Result<Vec<_>>>()?,
            );
        }
        let mut root: [Option<Matrix>; 7] = Default::default();
        for b in 0..7 {
            if let ManifoldKind::Spd { .. } = kinds[b] {
                root[b] = Some(spd_map(&base[b], f64::sqrt)?);
            }
        }
        let centers = entries.iter().map(|e| e.mu_r.clone()).collect();
        let model = RbfModel::new(centers, kernel, DEFAULT_RIDGE)?;
        Ok(TupleInterpolant {
            model,
            nf,
            ns,
            kinds,
            base,
            root,
            tangents,
        })
    }

    pub fn model(&self) -> &RbfModel {
        &self.model
    }

    pub fn len(&self) -> usize {
        self.model.len()
    }

    pub fn is_empty(&self) -> bool {
        self.model.is_empty()
    }

    /// Distance from `query` to the nearest center.
    pub fn nearest_distance(&self, query: &Vector) -> f64 {
        self.model
            .centers
            .iter()
            .map(|c| (c - query).norm())
            .fold(f64::INFINITY, f64::min)
    }

    fn exp_block(&self, b: usize, gamma: &Matrix) -> Matrix {
        match self.kinds[b] {
            ManifoldKind::Euclidean { .. } => &self.base[b] + gamma,
            ManifoldKind::GeneralLinear { .. } => expm(gamma) * &self.base[b],
            ManifoldKind::Spd { .. } => {
                let r = self.root[b].as_ref().expect("SPD root is cached");
                symmetrize(&(r * crate::manifolds::matfun::sym_expm(&symmetrize(gamma)) * r))
            }
        }
    }

    fn d_exp_block(&self, b: usize, gamma: &Matrix, dgamma: &Matrix) -> Matrix {
        match self.kinds[b] {
            ManifoldKind::Euclidean { .. } => dgamma.clone(),
            ManifoldKind::GeneralLinear { .. } => expm_frechet(gamma, dgamma) * &self.base[b],
            ManifoldKind::Spd { .. } => {
                let r = self.root[b].as_ref().expect("SPD root is cached");
                symmetrize(&(r * expm_frechet(&symmetrize(gamma), &symmetrize(dgamma)) * r))
            }
        }
    }

    pub fn tuple(&self, query: &Vector) -> Result<PromTuple> {
        let alpha = self.model.cardinal(query)?;
        let blocks: Vec<Matrix> = (0..7)
            .map(|b| self.exp_block(b, &combine(alpha.as_slice(), &self.tangents[b])))
            .collect();
        PromTuple::from_blocks(&from_array(blocks.try_into().expect("seven blocks")))
    }

    /// Interpolated tuple and its derivatives along every reduced coordinate.
    pub fn tuple_with_sensitivities(&self, query: &Vector) -> Result<(PromTuple, Vec<TupleDerivative>)> {
        let alpha = self.model.cardinal(query)?;
        let dalpha = self.model.cardinal_gradient(query)?;
        let gammas: Vec<Matrix> = (0..7).map(|b| combine(alpha.as_slice(), &self.tangents[b])).collect();
        let blocks: Vec<Matrix> = (0..7).map(|b| self.exp_block(b, &gammas[b])).collect();
        let tuple = PromTuple::from_blocks(&from_array(blocks.try_into().expect("seven blocks")))?;
        let (nf, ns) = (self.nf, self.ns);
        let nq = nf + 2 * ns;
        let mut out = Vec::with_capacity(dalpha.ncols());
        for i in 0..dalpha.ncols() {
            let w: Vec<f64> = dalpha.column(i).iter().copied().collect();
            let d: Vec<Matrix> = (0..7)
                .map(|b| self.d_exp_block(b, &gammas[b], &combine(&w, &self.tangents[b])))
                .collect();
            let mut da = Matrix::zeros(nq, nq);
            da.view_mut((0, 0), (nf, nf)).copy_from(&d[0]);
            let mut db = Matrix::zeros(nq, nq);
            db.view_mut((0, 0), (nf, nf)).copy_from(&d[1]);
            db.view_mut((0, nf), (nf, ns)).copy_from(&d[2]);
            db.view_mut((0, nf + ns), (nf, ns)).copy_from(&d[3]);
            db.view_mut((nf, 0), (ns, nf)).copy_from(&d[4]);
            db.view_mut((nf, nf), (ns, ns)).copy_from(&d[5]);
            db.view_mut((nf, nf + ns), (ns, ns)).copy_from(&d[6]);
            out.push((da, db));
        }
        Ok((tuple, out))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    fn pts(v: &[f64]) -> Vec<Vector> {
        v.iter().map(|x| Vector::from_element(1, *x)).collect()
    }

    #[test]
    fn thin_plate_reproduces_affine_data() {
        let centers: Vec<Vector> = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.7, 0.6], [0.2, 0.9]]
            .iter()
            .map(|c| Vector::from_column_slice(c))
            .collect();
        let f = |x: &Vector| 2.0 - x[0] + 3.0 * x[1];
        let model = RbfModel::new(centers.clone(), Kernel::ThinPlate, 0.0).unwrap();
        let y: Vec<f64> = centers.iter().map(f).collect();
        let q = Vector::from_vec(vec![0.3, 0.4]);
        let a = model.cardinal(&q).unwrap();
        let v: f64 = a.iter().zip(&y).map(|(a, y)| a * y).sum();
        assert!((v - f(&q)).abs() < 1e-12);
        let g = model.cardinal_gradient(&q).unwrap().transpose() * Vector::from_vec(y);
        assert!((g - Vector::from_vec(vec![-1.0, 3.0])).amax() < 1e-11);
    }

    #[test]
    fn collinear_centers_use_reduced_tail() {
        let centers: Vec<Vector> = (0..3)
            .map(|i| Vector::from_vec(vec![i as f64, 2.0 * i as f64]))
            .collect();
        let model = RbfModel::new(centers, Kernel::ThinPlate, 0.0).unwrap();
        let a = model.cardinal(&Vector::from_vec(vec![0.5, 1.0])).unwrap();
        assert!((a.sum() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn gaussian_kernel_interpolates() {
        let model = RbfModel::new(pts(&[0.0, 0.5, 1.0]), Kernel::Gaussian { shape: 1.5 }, 0.0).unwrap();
        let a = model.cardinal(&Vector::from_element(1, 0.5)).unwrap();
        assert!((a - Vector::from_vec(vec![0.0, 1.0, 0.0])).amax() < 1e-12);
    }

    #[test]
    fn duplicated_centers_are_singular() {
        let r = RbfModel::new(pts(&[0.0, 0.0, 1.0]), Kernel::ThinPlate, 0.0);
        assert!(matches!(r, Err(Error::SingularKernelMatrix(_))));
    }

    #[test]
    fn spd_geodesic_midpoint() {
        let i2 = Matrix::identity(2, 2);
        let values = vec![i2.clone(), &i2 * (E * E)];
        let x = interpolate_block(
            &values,
            &pts(&[0.0, 1.0]),
            ManifoldKind::Spd { n: 2 },
            0,
            &Vector::from_element(1, 0.5),
            Kernel::ThinPlate,
        )
        .unwrap();
        assert!((x - &i2 * E).amax() < 1e-12);
    }

    #[test]
    fn single_sample_is_constant() {
        let v = Matrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 3.0]);
        let x = interpolate_block(
            std::slice::from_ref(&v),
            &pts(&[0.3]),
            ManifoldKind::GeneralLinear { n: 2 },
            0,
            &Vector::from_element(1, 7.0),
            Kernel::ThinPlate,
        )
        .unwrap();
        assert!((x - v).amax() < 1e-14);
    }
}
