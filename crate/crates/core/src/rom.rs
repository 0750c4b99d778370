//! Reduced-order bases and projection-based reduced models.
//!
//! The structural basis holds the lowest natural modes, mass-orthonormalized.
//! The fluid basis compresses frequency-domain responses of the fluid to
//! harmonic motion of each structural mode. Reduced tuples built at
//! different parameter points are rotated onto a common reference so that
//! their entries can be interpolated.

use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};

use crate::hdm::{FsiOperators, Hdm};
use crate::manifolds::svd::{fix_sign, ordered_left_svd};
use crate::manifolds::{general_eig, procrustes, truncate_svd};
use crate::{Error, Matrix, Result, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Projection {
    Galerkin,
    PetrovGalerkin,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FluidRob {
    pub v_w: Matrix,
    pub w_w: Matrix,
    pub projection: Projection,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructRob {
    pub v_u: Matrix,
    /// Natural frequencies, ascending.
    pub frequencies: Vec<f64>,
}

fn default_band() -> Vec<f64> {
    vec![0.0, 0.5, 1.0, 1.5, 2.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RomConfig {
    pub nf_keep: usize,
    pub ns_keep: usize,
    /// Sweep frequencies as multiples of the highest retained structural
    /// frequency.
    #[serde(default = "default_band", rename = "freq_band")]
    pub band: Vec<f64>,
    #[serde(default)]
    pub svd_tol: f64,
    /// Complete both bases to square orthogonal matrices.
    #[serde(default)]
    pub full_rank: bool,
}

impl RomConfig {
    pub fn validate(&self, nf: usize, ns: usize) -> Result<()> {
        if self.ns_keep == 0 || self.ns_keep > ns {
            return Err(Error::InvalidConfig(format!(
                "ns_keep {} must lie in 1..={ns}",
                self.ns_keep
            )));
        }
        if self.band.is_empty() || self.band.iter().any(|k| !(*k >= 0.0 && k.is_finite())) {
            return Err(Error::InvalidConfig(
                "sweep band must be nonempty and nonnegative".into(),
            ));
        }
        let mut sorted = self.band.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidConfig("sweep frequencies must be distinct".into()));
        }
        if !self.full_rank && (self.nf_keep == 0 || self.nf_keep > nf.min(2 * self.ns_keep * self.band.len())) {
            return Err(Error::InvalidConfig(format!(
                "nf_keep {} must lie in 1..={}",
                self.nf_keep,
                nf.min(2 * self.ns_keep * self.band.len())
            )));
        }
        if !(self.svd_tol >= 0.0 && self.svd_tol < 1.0) {
            return Err(Error::InvalidConfig("svd_tol must lie in [0, 1)".into()));
        }
        Ok(())
    }

    /// Reduced fluid dimension for a model with `nf` fluid unknowns.
    pub fn fluid_dim(&self, nf: usize) -> usize {
        if self.full_rank {
            nf
        } else {
            self.nf_keep
        }
    }

    pub fn struct_dim(&self, ns: usize) -> usize {
        if self.full_rank {
            ns
        } else {
            self.ns_keep
        }
    }
}

/// Reduced operators of `calA_r·q̇_r + calB_r·q_r = 0`, `q_r = [w_r; u̇_r; u_r]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PromTuple {
    pub cal_a: Matrix,
    pub cal_b: Matrix,
    pub nf: usize,
    pub ns: usize,
}

/// The independently varying blocks of a reduced tuple.
#[derive(Debug, Clone, PartialEq)]
pub struct TupleBlocks {
    pub a: Matrix,
    pub h: Matrix,
    pub r: Matrix,
    pub g: Matrix,
    /// Stored with the sign it carries in `calB_r`.
    pub neg_p: Matrix,
    pub d: Matrix,
    pub omega2: Matrix,
}

impl TupleBlocks {
    /// Blocks in the order `a, h, r, g, neg_p, d, omega2`.
    pub fn as_array(&self) -> [&Matrix; 7] {
        [&self.a, &self.h, &self.r, &self.g, &self.neg_p, &self.d, &self.omega2]
    }
}

impl PromTuple {
    pub fn nq(&self) -> usize {
        self.nf + 2 * self.ns
    }

    pub fn from_blocks(b: &TupleBlocks) -> Result<Self> {
        let nf = b.h.nrows();
        let ns = b.d.nrows();
        let shapes = [
            (&b.a, (nf, nf), "A_r"),
            (&b.h, (nf, nf), "H_r"),
            (&b.r, (nf, ns), "R_r"),
            (&b.g, (nf, ns), "G_r"),
            (&b.neg_p, (ns, nf), "P_r"),
            (&b.d, (ns, ns), "D_r"),
            (&b.omega2, (ns, ns), "Omega2_r"),
        ];
        for (m, s, what) in shapes {
            if m.shape() != s {
                return Err(Error::DimensionMismatch(format!(
                    "{what} has shape {:?}, expected {s:?}",
                    m.shape()
                )));
            }
        }
        let nq = nf + 2 * ns;
        let eye = Matrix::identity(ns, ns);
        let mut cal_a = Matrix::zeros(nq, nq);
        cal_a.view_mut((0, 0), (nf, nf)).copy_from(&b.a);
        cal_a.view_mut((nf, nf), (ns, ns)).copy_from(&eye);
        cal_a.view_mut((nf + ns, nf + ns), (ns, ns)).copy_from(&eye);
        let mut cal_b = Matrix::zeros(nq, nq);
        cal_b.view_mut((0, 0), (nf, nf)).copy_from(&b.h);
        cal_b.view_mut((0, nf), (nf, ns)).copy_from(&b.r);
        cal_b.view_mut((0, nf + ns), (nf, ns)).copy_from(&b.g);
        cal_b.view_mut((nf, 0), (ns, nf)).copy_from(&b.neg_p);
        cal_b.view_mut((nf, nf), (ns, ns)).copy_from(&b.d);
        cal_b.view_mut((nf, nf + ns), (ns, ns)).copy_from(&b.omega2);
        cal_b.view_mut((nf + ns, nf), (ns, ns)).copy_from(&(-eye));
        Ok(PromTuple { cal_a, cal_b, nf, ns })
    }

    pub fn blocks(&self) -> TupleBlocks {
        let (nf, ns) = (self.nf, self.ns);
        let ab = |m: &Matrix, r: usize, c: usize, nr: usize, nc: usize| m.view((r, c), (nr, nc)).into_owned();
        TupleBlocks {
            a: ab(&self.cal_a, 0, 0, nf, nf),
            h: ab(&self.cal_b, 0, 0, nf, nf),
            r: ab(&self.cal_b, 0, nf, nf, ns),
            g: ab(&self.cal_b, 0, nf + ns, nf, ns),
            neg_p: ab(&self.cal_b, nf, 0, ns, nf),
            d: ab(&self.cal_b, nf, nf, ns, ns),
            omega2: ab(&self.cal_b, nf, nf + ns, ns, ns),
        }
    }

    /// `calA_r⁻¹·calB_r`.
    pub fn system_matrix(&self) -> Result<Matrix> {
        let lu = self.cal_a.clone().lu();
        if lu.determinant() == 0.0 {
            return Err(Error::SingularCalA);
        }
        lu.solve(&self.cal_b).ok_or(Error::SingularCalA)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromEntry {
    pub mu_r: Vector,
    pub mu: Vector,
    pub tuple: PromTuple,
    pub v_w: Matrix,
    pub v_u: Matrix,
    pub w_w: Matrix,
    pub projection: Projection,
}

impl PromEntry {
    /// Block-diagonal state basis `diag(V_w, V_u, V_u)`.
    pub fn v_q(&self) -> Matrix {
        let (nfull, nf) = self.v_w.shape();
        let (sfull, ns) = self.v_u.shape();
        let mut v = Matrix::zeros(nfull + 2 * sfull, nf + 2 * ns);
        v.view_mut((0, 0), (nfull, nf)).copy_from(&self.v_w);
        v.view_mut((nfull, nf), (sfull, ns)).copy_from(&self.v_u);
        v.view_mut((nfull + sfull, nf + ns), (sfull, ns)).copy_from(&self.v_u);
        v
    }
}

pub fn build_structural_rob(ops: &FsiOperators, ns_keep: usize) -> Result<StructRob> {
    let ns = ops.ns();
    if ns_keep == 0 || ns_keep > ns {
        return Err(Error::InvalidParameter(format!("ns_keep {ns_keep} out of 1..={ns}")));
    }
    let chol = ops
        .m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotSpd("mass matrix".into()))?;
    let l = chol.l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::NotSpd("mass matrix".into()))?;
    let c = &linv * &ops.k * linv.transpose();
    let eig = nalgebra::SymmetricEigen::new((&c + c.transpose()) * 0.5);
    let mut order: Vec<usize> = (0..ns).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());
    let mut v_u = Matrix::zeros(ns, ns_keep);
    let mut frequencies = Vec::with_capacity(ns_keep);
    for (c, &i) in order.iter().take(ns_keep).enumerate() {
        let lam = eig.eigenvalues[i];
        if !(lam > 0.0) {
            return Err(Error::NotSpd(format!("stiffness eigenvalue {lam:.3e}")));
        }
        let mut phi = linv.transpose() * eig.eigenvectors.column(i);
        fix_sign(phi.as_mut_slice());
        v_u.set_column(c, &phi);
        frequencies.push(lam.sqrt());
    }
    Ok(StructRob { v_u, frequencies })
}

/// Real and imaginary parts of the fluid responses to harmonic motion of each
/// structural mode, two columns per (mode, frequency) pair.
pub fn fluid_snapshots(ops: &FsiOperators, struct_rob: &StructRob, freqs: &[f64]) -> Result<Matrix> {
    let nf = ops.nf();
    let nm = struct_rob.v_u.ncols();
    let c = |m: &Matrix| m.map(|x| Complex::new(x, 0.0));
    let (a, h, r, g) = (c(&ops.a), c(&ops.h), c(&ops.r), c(&ops.g));
    let mut snaps = Matrix::zeros(nf, 2 * nm * freqs.len());
    let mut col = 0;
    for &kappa in freqs {
        if !(kappa >= 0.0) {
            return Err(Error::InvalidParameter(format!("negative sweep frequency {kappa}")));
        }
        let ik = Complex::new(0.0, kappa);
        let lhs = &a * ik + &h;
        let lu = lhs.clone().lu();
        let diag_min = (0..nf).map(|i| lu.u()[(i, i)].norm()).fold(f64::INFINITY, f64::min);
        let scale = lhs.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if !(diag_min > 1e-13 * scale) {
            return Err(Error::SingularSystem(format!("fluid operator at frequency {kappa}")));
        }
        let rhs: DMatrix<Complex<f64>> = -((&r * ik + &g) * c(&struct_rob.v_u));
        let sol = lu
            .solve(&rhs)
            .ok_or_else(|| Error::SingularSystem(format!("fluid operator at frequency {kappa}")))?;
        for m in 0..nm {
            for i in 0..nf {
                snaps[(i, col)] = sol[(i, m)].re;
                snaps[(i, col + 1)] = sol[(i, m)].im;
            }
            col += 2;
        }
    }
    Ok(snaps)
}

pub fn build_fluid_rob(
    ops: &FsiOperators,
    struct_rob: &StructRob,
    freqs: &[f64],
    nf_keep: usize,
    svd_tol: f64,
) -> Result<FluidRob> {
    let snaps = fluid_snapshots(ops, struct_rob, freqs)?;
    let t = truncate_svd(&snaps, svd_tol)?;
    let keep = t.kept_dim.min(nf_keep);
    let v_w = t.basis.columns(0, keep).into_owned();
    Ok(FluidRob {
        w_w: v_w.clone(),
        v_w,
        projection: Projection::Galerkin,
    })
}

/// Extends orthonormal columns to a square orthogonal matrix; the leading
/// columns span the input.
pub fn complete_basis(v: &Matrix) -> Result<Matrix> {
    let n = v.nrows();
    let comp = Matrix::identity(n, n) - v * v.transpose();
    let (qc, _) = ordered_left_svd(&comp)?;
    let extra = n - v.ncols();
    if qc.ncols() < extra {
        return Err(Error::SingularSystem("basis completion".into()));
    }
    let mut out = Matrix::zeros(n, n);
    out.view_mut((0, 0), v.shape()).copy_from(v);
    out.view_mut((0, v.ncols()), (n, extra))
        .copy_from(&qc.columns(0, extra));
    Ok(out)
}

/// Falls back to a least-squares left basis when the Galerkin-projected fluid
/// operator has an eigenvalue with nonpositive real part.
pub fn stabilize_left_rob(ops: &FsiOperators, rob: &FluidRob) -> Result<FluidRob> {
    let proj = rob.v_w.transpose() * &ops.h * &rob.v_w;
    let eig = general_eig(&proj)?;
    if eig.values.iter().all(|l| l.re > 0.0) {
        return Ok(FluidRob {
            v_w: rob.v_w.clone(),
            w_w: rob.v_w.clone(),
            projection: Projection::Galerkin,
        });
    }
    let hv = &ops.h * &rob.v_w;
    let qr = hv.qr();
    let mut w = qr.q();
    let r = qr.r();
    // a positive diagonal of R makes W_wᵀ·H·V_w = R have a positive spectrum
    for j in 0..r.nrows() {
        if r[(j, j)] < 0.0 {
            w.column_mut(j).neg_mut();
        } else if r[(j, j)] == 0.0 {
            return Err(Error::SingularSystem("H·V_w is rank deficient".into()));
        }
    }
    Ok(FluidRob {
        v_w: rob.v_w.clone(),
        w_w: w,
        projection: Projection::PetrovGalerkin,
    })
}

pub fn assemble_prom(ops: &FsiOperators, fluid: &FluidRob, struct_rob: &StructRob) -> Result<PromTuple> {
    let (vw, ww, vu) = (&fluid.v_w, &fluid.w_w, &struct_rob.v_u);
    if vw.nrows() != ops.nf() || ww.shape() != vw.shape() || vu.nrows() != ops.ns() {
        return Err(Error::DimensionMismatch(format!(
            "bases V_w {:?}, W_w {:?}, V_u {:?} for N_f={}, N_s={}",
            vw.shape(),
            ww.shape(),
            vu.shape(),
            ops.nf(),
            ops.ns()
        )));
    }
    if struct_rob.frequencies.len() != vu.ncols() {
        return Err(Error::DimensionMismatch("one frequency per structural mode".into()));
    }
    let wt = ww.transpose();
    let vut = vu.transpose();
    let omega2 = Matrix::from_diagonal(&Vector::from_iterator(
        vu.ncols(),
        struct_rob.frequencies.iter().map(|w| w * w),
    ));
    PromTuple::from_blocks(&TupleBlocks {
        a: &wt * &ops.a * vw,
        h: &wt * &ops.h * vw,
        r: &wt * &ops.r * vu,
        g: &wt * &ops.g * vu,
        neg_p: -(&vut * &ops.p * vw),
        d: &vut * &ops.d * vu,
        omega2,
    })
}

/// Builds the bases and reduced tuple at `mu`.
pub fn build_entry(hdm: &Hdm, mu: &Vector, mu_r: &Vector, cfg: &RomConfig) -> Result<PromEntry> {
    let ops = hdm.operators(mu)?;
    let ns_keep = cfg.struct_dim(ops.ns());
    let srob = build_structural_rob(&ops, ns_keep)?;
    let omega_max = srob.frequencies.last().copied().unwrap_or(1.0);
    let freqs: Vec<f64> = cfg.band.iter().map(|b| b * omega_max).collect();
    let mut frob = build_fluid_rob(&ops, &srob, &freqs, cfg.fluid_dim(ops.nf()), cfg.svd_tol)?;
    if cfg.full_rank {
        let v = complete_basis(&frob.v_w)?;
        frob = FluidRob {
            w_w: v.clone(),
            v_w: v,
            projection: Projection::Galerkin,
        };
    } else if frob.v_w.ncols() != cfg.nf_keep {
        return Err(Error::DimensionMismatch(format!(
            "fluid snapshots at this point have rank {} < nf_keep {}",
            frob.v_w.ncols(),
            cfg.nf_keep
        )));
    }
    let frob = stabilize_left_rob(&ops, &frob)?;
    let tuple = assemble_prom(&ops, &frob, &srob)?;
    Ok(PromEntry {
        mu_r: mu_r.clone(),
        mu: mu.clone(),
        tuple,
        v_w: frob.v_w,
        v_u: srob.v_u,
        w_w: frob.w_w,
        projection: frob.projection,
    })
}

/// Applies `diag(Q_w, Q_u, Q_u)` by congruence, block by block, so the
/// identity and zero blocks stay exact.
pub fn rotate_entry(entry: &mut PromEntry, qw: &Matrix, qu: &Matrix) -> Result<()> {
    let b = entry.tuple.blocks();
    let (qwt, qut) = (qw.transpose(), qu.transpose());
    entry.tuple = PromTuple::from_blocks(&TupleBlocks {
        a: &qwt * &b.a * qw,
        h: &qwt * &b.h * qw,
        r: &qwt * &b.r * qu,
        g: &qwt * &b.g * qu,
        neg_p: &qut * &b.neg_p * qw,
        d: &qut * &b.d * qu,
        omega2: &qut * &b.omega2 * qu,
    })?;
    entry.v_w = &entry.v_w * qw;
    entry.w_w = &entry.w_w * qw;
    entry.v_u = &entry.v_u * qu;
    Ok(())
}

/// Rotates every entry onto the bases of `entries[ref_index]`.
pub fn enforce_consistency(entries: &mut [PromEntry], ref_index: usize) -> Result<()> {
    if entries.is_empty() {
        return Ok(());
    }
    if ref_index >= entries.len() {
        return Err(Error::InvalidParameter(format!(
            "reference index {ref_index} out of range"
        )));
    }
    let (vw_ref, vu_ref) = (entries[ref_index].v_w.clone(), entries[ref_index].v_u.clone());
    let dims = (entries[ref_index].tuple.nf, entries[ref_index].tuple.ns);
    for (i, e) in entries.iter().enumerate() {
        if (e.tuple.nf, e.tuple.ns) != dims || e.v_w.shape() != vw_ref.shape() || e.v_u.shape() != vu_ref.shape() {
            return Err(Error::DimensionMismatch(format!(
                "entry {i} has reduced dimensions ({}, {}), reference has {dims:?}",
                e.tuple.nf, e.tuple.ns
            )));
        }
    }
    for (i, e) in entries.iter_mut().enumerate() {
        if i == ref_index {
            continue;
        }
        let qw = procrustes(&vw_ref, &e.v_w)?;
        let qu = procrustes(&vu_ref, &e.v_u)?;
        rotate_entry(e, &qw, &qu)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hdm::{assemble_blocks, hdm_residual};

    fn diag(d: &[f64]) -> Matrix {
        Matrix::from_diagonal(&Vector::from_column_slice(d))
    }

    fn toy_ops() -> FsiOperators {
        let nf = 8;
        let ns = 2;
        let mut h = Matrix::zeros(nf, nf);
        for i in 0..nf {
            h[(i, i)] = 3.0;
            if i > 0 {
                h[(i, i - 1)] = -1.0;
            }
        }
        FsiOperators {
            a: Matrix::identity(nf, nf) * 0.5,
            h,
            r: Matrix::from_fn(nf, ns, |i, j| ((i + 2 * j) as f64 * 0.37).sin()),
            g: Matrix::from_fn(nf, ns, |i, j| ((3 * i + j) as f64 * 0.21).cos()),
            m: Matrix::identity(ns, ns),
            d: diag(&[0.1, 0.2]),
            k: Matrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 1.0]),
            p: Matrix::from_fn(ns, nf, |i, j| ((i * 5 + j) as f64 * 0.13).sin()),
        }
    }

    #[test]
    fn diagonal_structural_problem() {
        let mut ops = toy_ops();
        ops.m = Matrix::identity(3, 3);
        ops.k = diag(&[1.0, 4.0, 9.0]);
        let s = build_structural_rob(&ops, 2).unwrap();
        assert!((s.frequencies[0] - 1.0).abs() < 1e-15 && (s.frequencies[1] - 2.0).abs() < 1e-15);
        assert!((s.v_u - Matrix::identity(3, 2)).amax() < 1e-15);
    }

    #[test]
    fn snapshot_count_and_static_rank() {
        let ops = toy_ops();
        let s = build_structural_rob(&ops, 2).unwrap();
        let snaps = fluid_snapshots(&ops, &s, &[0.0, 0.5, 1.0]).unwrap();
        assert_eq!(snaps.ncols(), 12);
        let snaps0 = fluid_snapshots(&ops, &s, &[0.0]).unwrap();
        assert!(snaps0.column(1).amax() == 0.0 && snaps0.column(3).amax() == 0.0);
        let rob = build_fluid_rob(&ops, &s, &[0.0], 8, 0.0).unwrap();
        assert_eq!(rob.v_w.ncols(), 2);
    }

    #[test]
    fn unstable_projection_falls_back() {
        let mut ops = toy_ops();
        ops.h = diag(&[-1.0, 2.0]);
        ops.a = Matrix::identity(2, 2);
        let rob = FluidRob {
            v_w: Matrix::from_column_slice(2, 1, &[1.0, 0.0]),
            w_w: Matrix::from_column_slice(2, 1, &[1.0, 0.0]),
            projection: Projection::Galerkin,
        };
        let st = stabilize_left_rob(&ops, &rob).unwrap();
        assert_eq!(st.projection, Projection::PetrovGalerkin);
        assert!((st.w_w[(0, 0)].abs() - 1.0).abs() < 1e-15);
        let proj = st.w_w.transpose() * &ops.h * &st.v_w;
        assert!((proj[(0, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn reduced_tuple_layout() {
        let ops = toy_ops();
        let s = build_structural_rob(&ops, 2).unwrap();
        let f = build_fluid_rob(&ops, &s, &[0.0, 1.0], 3, 0.0).unwrap();
        let t = assemble_prom(&ops, &f, &s).unwrap();
        assert_eq!(t.nq(), 7);
        let eye = Matrix::identity(2, 2);
        assert_eq!(t.cal_a.view((3, 3), (2, 2)).into_owned(), eye);
        assert_eq!(t.cal_a.view((5, 5), (2, 2)).into_owned(), eye);
        assert_eq!(t.cal_b.view((5, 3), (2, 2)).into_owned(), -eye);
        assert_eq!(t.cal_b.view((5, 0), (2, 3)).amax(), 0.0);
        assert_eq!(t.cal_b.view((5, 5), (2, 2)).amax(), 0.0);
        assert_eq!(t.cal_a.view((0, 3), (3, 4)).amax(), 0.0);
        let o = t.blocks().omega2;
        assert_eq!(o[(0, 1)], 0.0);
        let back = PromTuple::from_blocks(&t.blocks()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn completed_basis_is_orthogonal_and_keeps_leading_columns() {
        let v = Matrix::from_column_slice(3, 1, &[0.6, 0.8, 0.0]);
        let c = complete_basis(&v).unwrap();
        assert!((c.transpose() * &c - Matrix::identity(3, 3)).amax() < 1e-14);
        assert_eq!(c.column(0), v.column(0));
    }

    #[test]
    fn exact_subspace_reproduces_frequency_response() {
        let ops = toy_ops();
        let s = build_structural_rob(&ops, 2).unwrap();
        let freqs = [0.0, 0.7, 1.3];
        let f = build_fluid_rob(&ops, &s, &freqs, 8, 0.0).unwrap();
        let t = assemble_prom(&ops, &f, &s).unwrap();
        let b = t.blocks();
        let snaps = fluid_snapshots(&ops, &s, &freqs).unwrap();
        let c = |m: &Matrix| m.map(|x| Complex::new(x, 0.0));
        for (l, &kappa) in freqs.iter().enumerate() {
            let ik = Complex::new(0.0, kappa);
            let lhs = c(&b.a) * ik + c(&b.h);
            let rhs = -((c(&b.r) * ik + c(&b.g)) * c(&Matrix::identity(2, 2)));
            let wr = lhs.lu().solve(&rhs).unwrap();
            let full = c(&f.v_w) * wr;
            for m in 0..2 {
                let col = 2 * (l * 2 + m);
                for i in 0..8 {
                    let want = Complex::new(snaps[(i, col)], snaps[(i, col + 1)]);
                    assert!((full[(i, m)] - want).norm() <= 1e-10 * snaps.amax());
                }
            }
        }
    }

    #[test]
    fn full_rank_prom_matches_hdm_residuals() {
        let ops = toy_ops();
        let s = build_structural_rob(&ops, 2).unwrap();
        let v = complete_basis(&build_fluid_rob(&ops, &s, &[0.0, 1.0], 8, 0.0).unwrap().v_w).unwrap();
        let f = FluidRob {
            w_w: v.clone(),
            v_w: v,
            projection: Projection::Galerkin,
        };
        let t = assemble_prom(&ops, &f, &s).unwrap();
        let entry = PromEntry {
            mu_r: Vector::zeros(1),
            mu: Vector::zeros(1),
            tuple: t.clone(),
            v_w: f.v_w.clone(),
            v_u: s.v_u.clone(),
            w_w: f.w_w.clone(),
            projection: f.projection,
        };
        let blocks = assemble_blocks(&ops).unwrap();
        let eig = general_eig(&t.system_matrix().unwrap()).unwrap();
        let vq = entry.v_q().map(|x| Complex::new(x, 0.0));
        for j in 0..eig.len() {
            let q = &vq * eig.vector(j);
            let q = &q / Complex::new(q.norm(), 0.0);
            let r = hdm_residual(&blocks, -eig.values[j], &q).unwrap();
            assert!(r <= 1e-10 * blocks.cal_b.norm(), "mode {j}: {r}");
        }
    }

    #[test]
    fn consistency_recovers_permuted_duplicate() {
        let ops = toy_ops();
        let s = build_structural_rob(&ops, 2).unwrap();
        let f = build_fluid_rob(&ops, &s, &[0.0, 1.0], 3, 0.0).unwrap();
        let t = assemble_prom(&ops, &f, &s).unwrap();
        let reference = PromEntry {
            mu_r: Vector::zeros(1),
            mu: Vector::zeros(1),
            tuple: t,
            v_w: f.v_w.clone(),
            v_u: s.v_u.clone(),
            w_w: f.w_w.clone(),
            projection: f.projection,
        };
        let perm = Matrix::from_row_slice(3, 3, &[0., 1., 0., 0., 0., 1., 1., 0., 0.]);
        let flip = diag(&[1.0, -1.0]);
        let mut dup = reference.clone();
        rotate_entry(&mut dup, &perm, &flip).unwrap();
        assert!((&dup.tuple.cal_b - &reference.tuple.cal_b).amax() > 1e-3);
        let mut entries = vec![reference.clone(), dup];
        enforce_consistency(&mut entries, 0).unwrap();
        assert_eq!(entries[0], reference);
        assert!((&entries[1].tuple.cal_a - &reference.tuple.cal_a).amax() < 1e-10);
        assert!((&entries[1].tuple.cal_b - &reference.tuple.cal_b).amax() < 1e-10);
        assert!((&entries[1].v_w - &reference.v_w).amax() < 1e-12);
    }
}
