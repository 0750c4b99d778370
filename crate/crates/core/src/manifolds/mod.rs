//! Dense kernels shared by every stage: snapshot compression, subspace
//! alignment, matrix functions, the nonsymmetric eigensolver and the
//! logarithm/exponential maps of the matrix manifolds used for interpolation.

pub mod eig;
pub mod matfun;
pub mod procrustes;
pub mod svd;

use serde::{Deserialize, Serialize};

pub use eig::{general_eig, Complex64, Eigen};
pub use procrustes::{orthonormality_defect, procrustes};
pub use svd::{truncate_svd, TruncationResult};

use crate::{Error, Matrix, Result};

/// Condition number above which a matrix is treated as singular.
pub const GL_MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManifoldKind {
    Euclidean { rows: usize, cols: usize },
    GeneralLinear { n: usize },
    Spd { n: usize },
}

impl ManifoldKind {
    pub fn shape(&self) -> (usize, usize) {
        match *self {
            ManifoldKind::Euclidean { rows, cols } => (rows, cols),
            ManifoldKind::GeneralLinear { n } | ManifoldKind::Spd { n } => (n, n),
        }
    }

    fn check_shape(&self, x: &Matrix, what: &str) -> Result<()> {
        if x.shape() != self.shape() {
            return Err(Error::DimensionMismatch(format!(
                "{what} has shape {:?}, manifold expects {:?}",
                x.shape(),
                self.shape()
            )));
        }
        Ok(())
    }

    /// Checks membership of `x`; returns `NotOnManifold` otherwise.
    pub fn check_member(&self, x: &Matrix) -> Result<()> {
        self.check_shape(x, "point")?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NotOnManifold("non-finite entry".into()));
        }
        match self {
            ManifoldKind::Euclidean { .. } => Ok(()),
            ManifoldKind::GeneralLinear { .. } => {
                let c = matfun::condition_number(x);
                if c < GL_MAX_CONDITION {
                    Ok(())
                } else {
                    Err(Error::NotOnManifold(format!("condition number {c:.3e}")))
                }
            }
            ManifoldKind::Spd { .. } => matfun::spd_eigen(x).map(|_| ()),
        }
    }
}

/// Tangent vector at `base` pointing to `point`.
pub fn manifold_log(kind: ManifoldKind, base: &Matrix, point: &Matrix) -> Result<Matrix> {
    kind.check_member(base)?;
    kind.check_member(point)?;
    match kind {
        ManifoldKind::Euclidean { .. } => Ok(point - base),
        ManifoldKind::GeneralLinear { .. } => {
            let inv = base
                .clone()
                .try_inverse()
                .ok_or_else(|| Error::NotOnManifold("singular base".into()))?;
            matfun::logm(&(point * inv))
        }
        ManifoldKind::Spd { .. } => {
            let isqrt = matfun::spd_map(base, |l| 1.0 / l.sqrt())?;
            let inner = matfun::symmetrize(&(&isqrt * point * &isqrt));
            matfun::spd_map(&inner, f64::ln)
        }
    }
}

/// Point reached from `base` along `tangent`.
pub fn manifold_exp(kind: ManifoldKind, base: &Matrix, tangent: &Matrix) -> Result<Matrix> {
    kind.check_member(base)?;
    kind.check_shape(tangent, "tangent")?;
    match kind {
        ManifoldKind::Euclidean { .. } => Ok(base + tangent),
        ManifoldKind::GeneralLinear { .. } => Ok(matfun::expm(tangent) * base),
        ManifoldKind::Spd { .. } => {
            let root = matfun::spd_map(base, f64::sqrt)?;
            let e = matfun::sym_expm(&matfun::symmetrize(tangent));
            Ok(matfun::symmetrize(&(&root * e * &root)))
        }
    }
}
