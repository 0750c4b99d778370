use crate::{Error, Matrix, Result};

/// Largest entrywise deviation of `VᵀV` from the identity.
pub fn orthonormality_defect(v: &Matrix) -> f64 {
    let g = v.transpose() * v;
    let mut worst: f64 = 0.0;
    for j in 0..g.ncols() {
        for i in 0..g.nrows() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - target).abs());
        }
    }
    worst
}

/// Orthogonal `Q` minimizing `‖reference − other·Q‖_F`.
pub fn procrustes(reference: &Matrix, other: &Matrix) -> Result<Matrix> {
    if reference.shape() != other.shape() {
        return Err(Error::DimensionMismatch(format!(
            "procrustes operands {:?} and {:?}",
            reference.shape(),
            other.shape()
        )));
    }
    for v in [reference, other] {
        let d = orthonormality_defect(v);
        if !(d <= 1e-8) {
            return Err(Error::NonOrthonormalInput(d));
        }
    }
    let c = other.transpose() * reference;
    let svd = c.svd(true, true);
    let u = svd.u.ok_or_else(|| Error::NoConvergence("procrustes SVD".into()))?;
    let zt = svd.v_t.ok_or_else(|| Error::NoConvergence("procrustes SVD".into()))?;
    Ok(u * zt)
}
