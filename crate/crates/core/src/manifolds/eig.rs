//! Eigenvalues and right eigenvectors of a dense real matrix.
//!
//! Hessenberg reduction by orthogonal similarity followed by the shifted
//! double-step Francis QR iteration and back-substitution on the real Schur
//! form (the EISPACK `orthes`/`hqr2` pair).

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};

use crate::{Error, Matrix, Result};

pub type Complex64 = Complex<f64>;

#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<Complex64>,
    /// Unit-norm right eigenvectors stored column-wise.
    pub vectors: DMatrix<Complex64>,
}

impl Eigen {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn vector(&self, j: usize) -> DVector<Complex64> {
        self.vectors.column(j).into_owned()
    }
}

/// Full spectrum of a square real matrix. Complex eigenvalues come in
/// adjacent conjugate pairs, the one with positive imaginary part first.
pub fn general_eig(m: &Matrix) -> Result<Eigen> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "eigenproblem needs a square matrix, got {:?}",
            m.shape()
        )));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter("non-finite matrix entry".into()));
    }
    let n = m.nrows();
    if n == 0 {
        return Ok(Eigen {
            values: vec![],
            vectors: DMatrix::zeros(0, 0),
        });
    }
    if m == &m.transpose() {
        let se = SymmetricEigen::new(m.clone());
        return Ok(Eigen {
            values: se.eigenvalues.iter().map(|&l| Complex::new(l, 0.0)).collect(),
            vectors: se.eigenvectors.map(|x| Complex::new(x, 0.0)),
        });
    }
    let mut h: Vec<Vec<f64>> = (0..n).map(|i| m.row(i).iter().copied().collect()).collect();
    let mut v = vec![vec![0.0; n]; n];
    orthes(&mut h, &mut v);
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    hqr2(&mut h, &mut v, &mut d, &mut e)?;

    let mut values = Vec::with_capacity(n);
    let mut vectors = DMatrix::<Complex64>::zeros(n, n);
    let mut j = 0;
    while j < n {
        if e[j] == 0.0 {
            values.push(Complex::new(d[j], 0.0));
            for i in 0..n {
                vectors[(i, j)] = Complex::new(v[i][j], 0.0);
            }
            j += 1;
        } else {
            values.push(Complex::new(d[j], e[j]));
            values.push(Complex::new(d[j + 1], e[j + 1]));
            for i in 0..n {
                let z = Complex::new(v[i][j], v[i][j + 1]);
                vectors[(i, j)] = z;
                vectors[(i, j + 1)] = z.conj();
            }
            j += 2;
        }
    }
    for j in 0..n {
        let nrm = vectors.column(j).norm();
        if nrm > 0.0 {
            vectors.column_mut(j).unscale_mut(nrm);
        }
    }
    Ok(Eigen { values, vectors })
}

fn orthes(h: &mut [Vec<f64>], v: &mut [Vec<f64>]) {
    let n = h.len();
    let low = 0usize;
    let high = n - 1;
    let mut ort = vec![0.0; n];

    for m in low + 1..high {
        let scale: f64 = (m..=high).map(|i| h[i][m - 1].abs()).sum();
        if scale != 0.0 {
            let mut hh = 0.0;
            for i in (m..=high).rev() {
                ort[i] = h[i][m - 1] / scale;
                hh += ort[i] * ort[i];
            }
            let mut g = hh.sqrt();
            if ort[m] > 0.0 {
                g = -g;
            }
            hh -= ort[m] * g;
            ort[m] -= g;

            for j in m..n {
                let mut f = 0.0;
                for i in (m..=high).rev() {
                    f += ort[i] * h[i][j];
                }
                f /= hh;
                for i in m..=high {
                    h[i][j] -= f * ort[i];
                }
            }
            for row in h.iter_mut().take(high + 1) {
                let mut f = 0.0;
                for j in (m..=high).rev() {
                    f += ort[j] * row[j];
                }
                f /= hh;
                for j in m..=high {
                    row[j] -= f * ort[j];
                }
            }
            ort[m] *= scale;
            h[m][m - 1] = scale * g;
        }
    }

    for (i, row) in v.iter_mut().enumerate() {
        row.iter_mut().for_each(|x| *x = 0.0);
        row[i] = 1.0;
    }
    if high < 2 {
        return;
    }
    for m in (low + 1..high).rev() {
        if h[m][m - 1] != 0.0 {
            for i in m + 1..=high {
                ort[i] = h[i][m - 1];
            }
            for j in m..=high {
                let mut g = 0.0;
                for i in m..=high {
                    g += ort[i] * v[i][j];
                }
                // double division avoids possible underflow
                g = (g / ort[m]) / h[m][m - 1];
                for i in m..=high {
                    v[i][j] += g * ort[i];
                }
            }
        }
    }
}

fn cdiv(xr: f64, xi: f64, yr: f64, yi: f64) -> (f64, f64) {
    if yr.abs() > yi.abs() {
        let r = yi / yr;
        let d = yr + r * yi;
        ((xr + r * xi) / d, (xi - r * xr) / d)
    } else {
        let r = yr / yi;
        let d = yi + r * yr;
        ((r * xr + xi) / d, (r * xi - xr) / d)
    }
}

#[allow(clippy::many_single_char_names)]
fn hqr2(h: &mut [Vec<f64>], vm: &mut [Vec<f64>], d: &mut [f64], e: &mut [f64]) -> Result<()> {
    let nn = h.len() as isize;
    let low: isize = 0;
    let high: isize = nn - 1;
    let eps = f64::EPSILON;
    let budget = 30 * nn.max(1);
    let mut total_iter: isize = 0;

    macro_rules! hm {
        ($i:expr, $j:expr) => {
            h[($i) as usize][($j) as usize]
        };
    }
    macro_rules! vv {
        ($i:expr, $j:expr) => {
            vm[($i) as usize][($j) as usize]
        };
    }

    let mut n = nn - 1;
    let mut exshift = 0.0;
    let (mut p, mut q, mut r, mut s, mut z) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let (mut t, mut w, mut x, mut y);

    let mut norm = 0.0;
    for i in 0..nn {
        for j in (i - 1).max(0)..nn {
            norm += hm!(i, j).abs();
        }
    }

    let mut iter = 0;
    while n >= low {
        let mut l = n;
        while l > low {
            s = hm!(l - 1, l - 1).abs() + hm!(l, l).abs();
            if s == 0.0 {
                s = norm;
            }
            if hm!(l, l - 1).abs() < eps * s {
                break;
            }
            l -= 1;
        }

        if l == n {
            hm!(n, n) += exshift;
            d[n as usize] = hm!(n, n);
            e[n as usize] = 0.0;
            n -= 1;
            iter = 0;
        } else if l == n - 1 {
            w = hm!(n, n - 1) * hm!(n - 1, n);
            p = (hm!(n - 1, n - 1) - hm!(n, n)) / 2.0;
            q = p * p + w;
            z = q.abs().sqrt();
            hm!(n, n) += exshift;
            hm!(n - 1, n - 1) += exshift;
            x = hm!(n, n);

            if q >= 0.0 {
                z = if p >= 0.0 { p + z } else { p - z };
                d[(n - 1) as usize] = x + z;
                d[n as usize] = d[(n - 1) as usize];
                if z != 0.0 {
                    d[n as usize] = x - w / z;
                }
                e[(n - 1) as usize] = 0.0;
                e[n as usize] = 0.0;
                x = hm!(n, n - 1);
                s = x.abs() + z.abs();
                p = x / s;
                q = z / s;
                r = (p * p + q * q).sqrt();
                p /= r;
                q /= r;

                for j in n - 1..nn {
                    z = hm!(n - 1, j);
                    hm!(n - 1, j) = q * z + p * hm!(n, j);
                    hm!(n, j) = q * hm!(n, j) - p * z;
                }
                for i in 0..=n {
                    z = hm!(i, n - 1);
                    hm!(i, n - 1) = q * z + p * hm!(i, n);
                    hm!(i, n) = q * hm!(i, n) - p * z;
                }
                for i in low..=high {
                    z = vv!(i, n - 1);
                    vv!(i, n - 1) = q * z + p * vv!(i, n);
                    vv!(i, n) = q * vv!(i, n) - p * z;
                }
            } else {
                d[(n - 1) as usize] = x + p;
                d[n as usize] = x + p;
                e[(n - 1) as usize] = z;
                e[n as usize] = -z;
            }
            n -= 2;
            iter = 0;
        } else {
            x = hm!(n, n);
            y = 0.0;
            w = 0.0;
            if l < n {
                y = hm!(n - 1, n - 1);
                w = hm!(n, n - 1) * hm!(n - 1, n);
            }

            if iter == 10 {
                exshift += x;
                for i in low..=n {
                    hm!(i, i) -= x;
                }
                s = hm!(n, n - 1).abs() + hm!(n - 1, n - 2).abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            if iter == 30 {
                s = (y - x) / 2.0;
                s = s * s + w;
                if s > 0.0 {
                    s = s.sqrt();
                    if y < x {
                        s = -s;
                    }
                    s = x - w / ((y - x) / 2.0 + s);
                    for i in low..=n {
                        hm!(i, i) -= s;
                    }
                    exshift += s;
                    x = 0.964;
                    y = x;
                    w = x;
                }
            }

            iter += 1;
            total_iter += 1;
            if total_iter > budget {
                return Err(Error::NoConvergence(format!("QR iteration exceeded {budget} sweeps")));
            }

            let mut m = n - 2;
            while m >= l {
                z = hm!(m, m);
                r = x - z;
                s = y - z;
                p = (r * s - w) / hm!(m + 1, m) + hm!(m, m + 1);
                q = hm!(m + 1, m + 1) - z - r - s;
                r = hm!(m + 2, m + 1);
                s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                if hm!(m, m - 1).abs() * (q.abs() + r.abs())
                    < eps * (p.abs() * (hm!(m - 1, m - 1).abs() + z.abs() + hm!(m + 1, m + 1).abs()))
                {
                    break;
                }
                m -= 1;
            }

            for i in m + 2..=n {
                hm!(i, i - 2) = 0.0;
                if i > m + 2 {
                    hm!(i, i - 3) = 0.0;
                }
            }

            let mut k = m;
            while k < n {
                let notlast = k != n - 1;
                if k != m {
                    p = hm!(k, k - 1);
                    q = hm!(k + 1, k - 1);
                    r = if notlast { hm!(k + 2, k - 1) } else { 0.0 };
                    x = p.abs() + q.abs() + r.abs();
                    if x == 0.0 {
                        k += 1;
                        continue;
                    }
                    p /= x;
                    q /= x;
                    r /= x;
                }
                s = (p * p + q * q + r * r).sqrt();
                if p < 0.0 {
                    s = -s;
                }
                if s != 0.0 {
                    if k != m {
                        hm!(k, k - 1) = -s * x;
                    } else if l != m {
                        hm!(k, k - 1) = -hm!(k, k - 1);
                    }
                    p += s;
                    x = p / s;
                    y = q / s;
                    z = r / s;
                    q /= p;
                    r /= p;

                    for j in k..nn {
                        p = hm!(k, j) + q * hm!(k + 1, j);
                        if notlast {
                            p += r * hm!(k + 2, j);
                            hm!(k + 2, j) -= p * z;
                        }
                        hm!(k, j) -= p * x;
                        hm!(k + 1, j) -= p * y;
                    }
                    for i in 0..=n.min(k + 3) {
                        p = x * hm!(i, k) + y * hm!(i, k + 1);
                        if notlast {
                            p += z * hm!(i, k + 2);
                            hm!(i, k + 2) -= p * r;
                        }
                        hm!(i, k) -= p;
                        hm!(i, k + 1) -= p * q;
                    }
                    for i in low..=high {
                        p = x * vv!(i, k) + y * vv!(i, k + 1);
                        if notlast {
                            p += z * vv!(i, k + 2);
                            vv!(i, k + 2) -= p * r;
                        }
                        vv!(i, k) -= p;
                        vv!(i, k + 1) -= p * q;
                    }
                }
                k += 1;
            }
        }
    }

    if norm == 0.0 {
        return Ok(());
    }

    for n in (0..nn).rev() {
        p = d[n as usize];
        q = e[n as usize];
        if q == 0.0 {
            let mut l = n;
            hm!(n, n) = 1.0;
            for i in (0..n).rev() {
                w = hm!(i, i) - p;
                r = 0.0;
                for j in l..=n {
                    r += hm!(i, j) * hm!(j, n);
                }
                if e[i as usize] < 0.0 {
                    z = w;
                    s = r;
                } else {
                    l = i;
                    if e[i as usize] == 0.0 {
                        hm!(i, n) = if w != 0.0 { -r / w } else { -r / (eps * norm) };
                    } else {
                        x = hm!(i, i + 1);
                        y = hm!(i + 1, i);
                        q = (d[i as usize] - p) * (d[i as usize] - p) + e[i as usize] * e[i as usize];
                        t = (x * s - z * r) / q;
                        hm!(i, n) = t;
                        hm!(i + 1, n) = if x.abs() > z.abs() {
                            (-r - w * t) / x
                        } else {
                            (-s - y * t) / z
                        };
                    }
                    t = hm!(i, n).abs();
                    if (eps * t) * t > 1.0 {
                        for j in i..=n {
                            hm!(j, n) /= t;
                        }
                    }
                }
            }
        } else if q < 0.0 {
            let mut l = n - 1;
            if hm!(n, n - 1).abs() > hm!(n - 1, n).abs() {
                hm!(n - 1, n - 1) = q / hm!(n, n - 1);
                hm!(n - 1, n) = -(hm!(n, n) - p) / hm!(n, n - 1);
            } else {
                let (cr, ci) = cdiv(0.0, -hm!(n - 1, n), hm!(n - 1, n - 1) - p, q);
                hm!(n - 1, n - 1) = cr;
                hm!(n - 1, n) = ci;
            }
            hm!(n, n - 1) = 0.0;
            hm!(n, n) = 1.0;
            for i in (0..n - 1).rev() {
                let mut ra = 0.0;
                let mut sa = 0.0;
                for j in l..=n {
                    ra += hm!(i, j) * hm!(j, n - 1);
                    sa += hm!(i, j) * hm!(j, n);
                }
                w = hm!(i, i) - p;

                if e[i as usize] < 0.0 {
                    z = w;
                    r = ra;
                    s = sa;
                } else {
                    l = i;
                    if e[i as usize] == 0.0 {
                        let (cr, ci) = cdiv(-ra, -sa, w, q);
                        hm!(i, n - 1) = cr;
                        hm!(i, n) = ci;
                    } else {
                        x = hm!(i, i + 1);
                        y = hm!(i + 1, i);
                        let di = d[i as usize] - p;
                        let mut vr = di * di + e[i as usize] * e[i as usize] - q * q;
                        let vi = di * 2.0 * q;
                        if vr == 0.0 && vi == 0.0 {
                            vr = eps * norm * (w.abs() + q.abs() + x.abs() + y.abs() + z.abs());
                        }
                        let (cr, ci) = cdiv(x * r - z * ra + q * sa, x * s - z * sa - q * ra, vr, vi);
                        hm!(i, n - 1) = cr;
                        hm!(i, n) = ci;
                        if x.abs() > z.abs() + q.abs() {
                            hm!(i + 1, n - 1) = (-ra - w * hm!(i, n - 1) + q * hm!(i, n)) / x;
                            hm!(i + 1, n) = (-sa - w * hm!(i, n) - q * hm!(i, n - 1)) / x;
                        } else {
                            let (cr, ci) = cdiv(-r - y * hm!(i, n - 1), -s - y * hm!(i, n), z, q);
                            hm!(i + 1, n - 1) = cr;
                            hm!(i + 1, n) = ci;
                        }
                    }
                    t = hm!(i, n - 1).abs().max(hm!(i, n).abs());
                    if (eps * t) * t > 1.0 {
                        for j in i..=n {
                            hm!(j, n - 1) /= t;
                            hm!(j, n) /= t;
                        }
                    }
                }
            }
        }
    }

    for j in (low..nn).rev() {
        for i in low..=high {
            z = 0.0;
            for k in low..=j.min(high) {
                z += vv!(i, k) * hm!(k, j);
            }
            vv!(i, j) = z;
        }
    }
    Ok(())
}
