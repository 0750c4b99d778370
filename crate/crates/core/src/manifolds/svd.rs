use crate::{Error, Matrix, Result};

/// Relative threshold below which singular values count as rank deficiency.
pub const RANK_CUTOFF: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub struct TruncationResult {
    /// Orthonormal columns, one per kept left singular vector.
    pub basis: Matrix,
    pub kept_dim: usize,
    /// Numerically nonzero singular values, descending.
    pub singular_values: Vec<f64>,
}

/// Thin SVD with descending singular values and the largest-magnitude entry
/// of every left singular vector made positive.
///
/// Returns `(u, sigma)` restricted to the numerically nonzero part.
pub fn ordered_left_svd(a: &Matrix) -> Result<(Matrix, Vec<f64>)> {
    if a.iter().all(|x| x.abs() < 1e-300) {
        return Err(Error::ZeroMatrix);
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter("non-finite snapshot entry".into()));
    }
    let svd = a.clone().svd(true, false);
    let u = svd
        .u
        .ok_or_else(|| Error::NoConvergence("singular value decomposition".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| {
        svd.singular_values[j]
            .partial_cmp(&svd.singular_values[i])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    let s1 = svd.singular_values[order[0]];
    let kept: Vec<usize> = order
        .into_iter()
        .filter(|&i| svd.singular_values[i] > RANK_CUTOFF * s1)
        .collect();
    let mut basis = Matrix::zeros(a.nrows(), kept.len());
    let mut sigma = Vec::with_capacity(kept.len());
    for (c, &i) in kept.iter().enumerate() {
        let mut col = u.column(i).into_owned();
        fix_sign(col.as_mut_slice());
        basis.set_column(c, &col);
        sigma.push(svd.singular_values[i]);
    }
    Ok((basis, sigma))
}

/// Makes the entry of largest magnitude positive; the first one wins ties.
pub fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|x| *x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Smallest dimension whose discarded tail carries at most `tolerance` of the
/// snapshot energy.
pub fn energy_dim(sigma: &[f64], tolerance: f64) -> usize {
    let total: f64 = sigma.iter().map(|s| s * s).sum();
    // tail[n] = sum of sigma_j^2 for j >= n, accumulated from the small end
    let mut tail = vec![0.0; sigma.len() + 1];
    for j in (0..sigma.len()).rev() {
        tail[j] = tail[j + 1] + sigma[j] * sigma[j];
    }
    (1..=sigma.len())
        .find(|&n| tail[n] <= tolerance * total)
        .unwrap_or(sigma.len())
}

pub fn truncate_svd(snapshots: &Matrix, tolerance: f64) -> Result<TruncationResult> {
    if !(tolerance >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "truncation tolerance {tolerance} must be nonnegative"
        )));
    }
    let (u, sigma) = ordered_left_svd(snapshots)?;
    let kept_dim = energy_dim(&sigma, tolerance);
    Ok(TruncationResult {
        basis: u.columns(0, kept_dim).into_owned(),
        kept_dim,
        singular_values: sigma,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_column_is_its_own_basis() {
        let s = Matrix::from_column_slice(3, 1, &[2.0, 0.0, 0.0]);
        let t = truncate_svd(&s, 0.0).unwrap();
        assert_eq!(t.kept_dim, 1);
        assert_eq!(t.singular_values, vec![2.0]);
        assert!((t.basis - Matrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0])).norm() < 1e-15);
    }

    #[test]
    fn tail_energy_on_the_boundary_is_accepted() {
        let s = Matrix::from_row_slice(3, 2, &[3.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let t = truncate_svd(&s, 0.1).unwrap();
        assert_eq!(t.kept_dim, 1);
        let t = truncate_svd(&s, 0.0999).unwrap();
        assert_eq!(t.kept_dim, 2);
    }

    #[test]
    fn zero_matrix_is_rejected() {
        assert!(matches!(
            truncate_svd(&Matrix::zeros(4, 3), 0.0),
            Err(Error::ZeroMatrix)
        ));
    }

    #[test]
    fn negative_leading_entry_is_flipped() {
        let s = Matrix::from_column_slice(2, 1, &[-1.0, 0.5]);
        let t = truncate_svd(&s, 0.0).unwrap();
        assert!(t.basis[(0, 0)] > 0.0);
    }

    #[test]
    fn repeated_singular_values_take_the_smallest_dim() {
        let s = Matrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 1.0, 1.0, 1.0]));
        assert_eq!(truncate_svd(&s, 0.5).unwrap().kept_dim, 2);
        assert_eq!(truncate_svd(&s, 0.25).unwrap().kept_dim, 3);
    }
}
