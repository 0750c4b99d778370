//! Dense matrix functions: exponential, principal logarithm, SPD powers and
//! the Fréchet derivative of the exponential.

use nalgebra::{Complex, DMatrix, Schur, SymmetricEigen};

use crate::{Error, Matrix, Result};

type CMatrix = DMatrix<Complex<f64>>;

/// Eigenvalues of an SPD matrix below this fraction of the largest one are
/// clamped before taking roots.
pub const SPD_CLAMP: f64 = 1e-14;

/// Gauss-Legendre nodes and weights on [0, 1]; seven points give the
/// diagonal Padé approximant of degree 7 to `log(I + X)`.
const GL7: [(f64, f64); 7] = [
    (0.025_446_043_828_620_757, 0.064_742_483_084_434_85),
    (0.129_234_407_200_302_78, 0.139_852_695_744_638_33),
    (0.297_077_424_311_301_4, 0.190_915_025_252_559_47),
    (0.5, 0.208_979_591_836_734_7),
    (0.702_922_575_688_698_6, 0.190_915_025_252_559_47),
    (0.870_765_592_799_697_2, 0.139_852_695_744_638_33),
    (0.974_553_956_171_379_2, 0.064_742_483_084_434_85),
];

pub fn expm(x: &Matrix) -> Matrix {
    if x.nrows() == 0 {
        return x.clone();
    }
    x.exp()
}

/// `L_exp(X, E)`: directional derivative of the exponential at `X` along `E`.
pub fn expm_frechet(x: &Matrix, e: &Matrix) -> Matrix {
    let n = x.nrows();
    let mut big = Matrix::zeros(2 * n, 2 * n);
    big.view_mut((0, 0), (n, n)).copy_from(x);
    big.view_mut((n, n), (n, n)).copy_from(x);
    big.view_mut((0, n), (n, n)).copy_from(e);
    expm(&big).view((0, n), (n, n)).into_owned()
}

pub fn symmetrize(x: &Matrix) -> Matrix {
    (x + x.transpose()) * 0.5
}

pub fn is_symmetric(x: &Matrix, tol: f64) -> bool {
    x.is_square() && (x - x.transpose()).amax() <= tol * x.amax().max(1.0)
}

/// Eigendecomposition of an SPD matrix; errors if any eigenvalue is not
/// strictly positive.
pub fn spd_eigen(x: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    if !is_symmetric(x, 1e-10) {
        return Err(Error::NotOnManifold("matrix is not symmetric".into()));
    }
    let eig = SymmetricEigen::new(symmetrize(x));
    if let Some(bad) = eig.eigenvalues.iter().find(|&&l| !(l > 0.0)) {
        return Err(Error::NotOnManifold(format!("nonpositive eigenvalue {bad:.3e}")));
    }
    Ok((eig.eigenvalues.iter().copied().collect(), eig.eigenvectors))
}

/// Applies `f` to the (clamped) spectrum of an SPD matrix.
pub fn spd_map(x: &Matrix, f: impl Fn(f64) -> f64) -> Result<Matrix> {
    let (vals, vecs) = spd_eigen(x)?;
    let top = vals.iter().cloned().fold(0.0, f64::max);
    let mapped: Vec<f64> = vals.iter().map(|&l| f(l.max(SPD_CLAMP * top))).collect();
    Ok(spectral(&vecs, &mapped))
}

/// `V·diag(d)·Vᵀ`, symmetrized.
pub fn spectral(v: &Matrix, d: &[f64]) -> Matrix {
    let mut scaled = v.clone();
    for (j, &dj) in d.iter().enumerate() {
        scaled.column_mut(j).scale_mut(dj);
    }
    symmetrize(&(scaled * v.transpose()))
}

/// Exponential of a symmetric matrix through its eigendecomposition.
pub fn sym_expm(x: &Matrix) -> Matrix {
    let eig = SymmetricEigen::new(symmetrize(x));
    let d: Vec<f64> = eig.eigenvalues.iter().map(|l| l.exp()).collect();
    spectral(&eig.eigenvectors, &d)
}

/// 2-norm condition number; infinite for singular matrices.
pub fn condition_number(x: &Matrix) -> f64 {
    let s = x.singular_values();
    let max = s.max();
    let min = s.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

fn one_norm(x: &CMatrix) -> f64 {
    (0..x.ncols())
        .map(|j| x.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Principal square root of an upper triangular matrix.
fn sqrt_upper(t: &CMatrix) -> CMatrix {
    let n = t.nrows();
    let mut r = CMatrix::zeros(n, n);
    for j in 0..n {
        r[(j, j)] = t[(j, j)].sqrt();
        for i in (0..j).rev() {
            let mut s = t[(i, j)];
            for k in i + 1..j {
                s -= r[(i, k)] * r[(k, j)];
            }
            r[(i, j)] = s / (r[(i, i)] + r[(j, j)]);
        }
    }
    r
}

/// Reduces a real quasi-triangular Schur form to complex upper triangular form
/// by unitary rotations of each 2x2 diagonal block.
fn real_to_complex_schur(q: Matrix, t: Matrix) -> (CMatrix, CMatrix) {
    let n = t.nrows();
    let mut u: CMatrix = q.map(|v| Complex::new(v, 0.0));
    let mut t: CMatrix = t.map(|v| Complex::new(v, 0.0));
    for m in (1..n).rev() {
        let k = m - 1;
        let sub = t[(m, k)];
        if sub.norm() <= f64::EPSILON * (t[(k, k)].norm() + t[(m, m)].norm()) {
            t[(m, k)] = Complex::new(0.0, 0.0);
            continue;
        }
        let (a, b, c, d) = (t[(k, k)], t[(k, m)], t[(m, k)], t[(m, m)]);
        let half_tr = (a + d) * 0.5;
        let disc = ((a - d) * (a - d) * 0.25 + b * c).sqrt();
        let mu = half_tr + disc - d;
        let r = (mu.norm_sqr() + sub.norm_sqr()).sqrt();
        let cs = mu / r;
        let sn = sub / r;
        for j in k..n {
            let (x, y) = (t[(k, j)], t[(m, j)]);
            t[(k, j)] = cs.conj() * x + sn * y;
            t[(m, j)] = -sn * x + cs * y;
        }
        for i in 0..=m {
            let (x, y) = (t[(i, k)], t[(i, m)]);
            t[(i, k)] = x * cs + y * sn.conj();
            t[(i, m)] = -x * sn.conj() + y * cs.conj();
        }
        for i in 0..n {
            let (x, y) = (u[(i, k)], u[(i, m)]);
            u[(i, k)] = x * cs + y * sn.conj();
            u[(i, m)] = -x * sn.conj() + y * cs.conj();
        }
        t[(m, k)] = Complex::new(0.0, 0.0);
    }
    (u, t)
}

/// Principal logarithm of a real matrix by complex Schur reduction followed by
/// inverse scaling and squaring on the triangular factor.
pub fn logm(x: &Matrix) -> Result<Matrix> {
    let n = x.nrows();
    if n == 0 {
        return Ok(x.clone());
    }
    let Some(schur) = Schur::try_new(x.clone(), f64::EPSILON, 100 * n) else {
        return logm_dense(x);
    };
    let (q, t) = schur.unpack();
    let (q, mut t) = real_to_complex_schur(q, t);
    let scale = (0..n).map(|i| t[(i, i)].norm()).fold(0.0, f64::max);
    for i in 0..n {
        let l = t[(i, i)];
        if l.re <= 0.0 && l.im.abs() <= 1e-12 * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::LogarithmUndefined);
        }
    }
    let eye = CMatrix::identity(n, n);
    let mut s = 0;
    while one_norm(&(&t - &eye)) > 0.25 {
        if s >= 64 {
            return Err(Error::NoConvergence("inverse scaling and squaring".into()));
        }
        t = sqrt_upper(&t);
        s += 1;
    }
    let xm = &t - &eye;
    let mut acc = CMatrix::zeros(n, n);
    for &(node, weight) in GL7.iter() {
        let lhs = &eye + &xm * Complex::new(node, 0.0);
        let z = lhs
            .solve_upper_triangular(&xm)
            .ok_or_else(|| Error::SingularSystem("Padé denominator".into()))?;
        acc += z * Complex::new(weight, 0.0);
    }
    acc *= Complex::new((1u64 << s) as f64, 0.0);
    let l = &q * acc * q.adjoint();
    Ok(l.map(|z| z.re))
}

/// Principal square root by the product form of the Denman-Beavers
/// iteration.
fn sqrtm_db(x: &Matrix) -> Result<Matrix> {
    let n = x.nrows();
    let eye = Matrix::identity(n, n);
    let mut m = x.clone();
    let mut y = x.clone();
    for _ in 0..100 {
        let minv = m
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::SingularSystem("square root iteration".into()))?;
        y = &y * (&eye + &minv) * 0.5;
        m = (&eye + (&m + &minv) * 0.5) * 0.5;
        if (&m - &eye).amax() <= 1e-15 * n as f64 {
            return Ok(y);
        }
    }
    Err(Error::NoConvergence("square root iteration".into()))
}

/// Inverse scaling and squaring on the full matrix, used when the Schur
/// reduction does not converge.
fn logm_dense(x: &Matrix) -> Result<Matrix> {
    let n = x.nrows();
    let eig = super::general_eig(x)?;
    let scale = eig.values.iter().map(|l| l.norm()).fold(0.0, f64::max);
    if eig
        .values
        .iter()
        .any(|l| l.re <= 0.0 && l.im.abs() <= 1e-12 * scale.max(f64::MIN_POSITIVE))
    {
        return Err(Error::LogarithmUndefined);
    }
    let eye = Matrix::identity(n, n);
    let mut t = x.clone();
    let mut s = 0;
    while one_norm_real(&(&t - &eye)) > 0.25 {
        if s >= 64 {
            return Err(Error::NoConvergence("inverse scaling and squaring".into()));
        }
        t = sqrtm_db(&t)?;
        s += 1;
    }
    let xm = &t - &eye;
    let mut acc = Matrix::zeros(n, n);
    for &(node, weight) in GL7.iter() {
        let z = (&eye + &xm * node)
            .lu()
            .solve(&xm)
            .ok_or_else(|| Error::SingularSystem("Padé denominator".into()))?;
        acc += z * weight;
    }
    Ok(acc * (1u64 << s) as f64)
}

fn one_norm_real(x: &Matrix) -> f64 {
    (0..x.ncols())
        .map(|j| x.column(j).iter().map(|z| z.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_weights_sum_to_one() {
        let s: f64 = GL7.iter().map(|p| p.1).sum();
        assert!((s - 1.0).abs() < 1e-15);
        // integrates t^12 exactly
        let m: f64 = GL7.iter().map(|&(t, w)| w * t.powi(12)).sum();
        assert!((m - 1.0 / 13.0).abs() < 1e-15);
    }

    #[test]
    fn dense_route_agrees_with_schur_route() {
        let x = Matrix::from_row_slice(3, 3, &[2.0, 0.3, -0.1, 0.2, 1.5, 0.4, 0.0, -0.3, 0.8]);
        let a = logm(&x).unwrap();
        let b = logm_dense(&x).unwrap();
        assert!((a - b).amax() < 1e-12);
        assert!(matches!(
            logm_dense(&Matrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-1.0, 2.0]))),
            Err(Error::LogarithmUndefined)
        ));
    }

    #[test]
    fn log_of_diagonal() {
        let x = Matrix::from_diagonal(&nalgebra::DVector::from_vec(vec![std::f64::consts::E, 1.0, 4.0]));
        let l = logm(&x).unwrap();
        let want = Matrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 0.0, 4f64.ln()]));
        assert!((l - want).amax() < 1e-14);
    }

    #[test]
    fn log_of_rotation_is_the_generator() {
        let th: f64 = 2.5;
        let x = Matrix::from_row_slice(2, 2, &[th.cos(), -th.sin(), th.sin(), th.cos()]);
        let l = logm(&x).unwrap();
        let want = Matrix::from_row_slice(2, 2, &[0.0, -th, th, 0.0]);
        assert!((l - want).amax() < 1e-13);
    }

    #[test]
    fn log_rejects_negative_real_eigenvalues() {
        let x = Matrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-1.0, 2.0]));
        assert!(matches!(logm(&x), Err(Error::LogarithmUndefined)));
        let x = Matrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.0, 2.0]));
        assert!(matches!(logm(&x), Err(Error::LogarithmUndefined)));
    }

    #[test]
    fn log_of_jordan_block() {
        let x = Matrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 2.0]);
        let l = logm(&x).unwrap();
        let want = Matrix::from_row_slice(2, 2, &[2f64.ln(), 0.5, 0.0, 2f64.ln()]);
        assert!((l - want).amax() < 1e-14);
    }

    #[test]
    fn frechet_derivative_matches_central_difference() {
        let x = Matrix::from_row_slice(3, 3, &[0.1, 0.4, -0.2, 0.3, -0.5, 0.2, 0.0, 0.1, 0.2]);
        let e = Matrix::from_row_slice(3, 3, &[1.0, 0.0, 0.5, -0.3, 0.2, 0.0, 0.4, 0.1, -1.0]);
        let h = 1e-6;
        let fd = (expm(&(&x + &e * h)) - expm(&(&x - &e * h))) / (2.0 * h);
        assert!((expm_frechet(&x, &e) - fd).amax() < 1e-8);
    }
}
