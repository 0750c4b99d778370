//! Modal damping of reduced models and the flutter constraint.
//!
//! Eigenvalues are those of `N = calA⁻¹·calB` for the system `q̇ + N·q = 0`,
//! so a mode decays like `e^{−λt}` and is stable when `Re λ > 0`. The damping
//! ratio of a mode is `Re λ/|λ|`, positive for decaying modes.

use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};

use crate::interp::TupleInterpolant;
use crate::manifolds::matfun::condition_number;
use crate::manifolds::{general_eig, Complex64, GL_MAX_CONDITION};
use crate::rom::PromTuple;
use crate::{Error, Matrix, Result, Vector};

/// Number of least-damped modes in the constraint vector by default.
pub const DEFAULT_N_TRACK: usize = 6;
/// Finite-difference step in reduced coordinates for unreliable modes.
pub const FD_STEP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// Eigenvalues of `N`; conjugate pairs adjacent, positive imaginary part first.
    pub eigenvalues: Vec<Complex64>,
    /// Unit-norm right eigenvectors, one per column.
    pub eigenvectors: DMatrix<Complex64>,
    /// Frobenius norm of `N`.
    pub scale: f64,
}

impl Spectrum {
    pub fn of_matrix(n: &Matrix) -> Result<Self> {
        let eig = general_eig(n)?;
        Ok(Spectrum {
            eigenvalues: eig.values,
            eigenvectors: eig.vectors,
            scale: n.norm(),
        })
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Exponents `s` of the time dependence `e^{s·t}`.
    pub fn time_exponents(&self) -> Vec<Complex64> {
        self.eigenvalues.iter().map(|l| -l).collect()
    }
}

/// Damping ratio of a mode with time dependence `e^{s·t}`.
pub fn damping_of_exponent(s: Complex64) -> f64 {
    -s.re / s.norm()
}

/// Damping ratio of an eigenvalue of `N`.
pub fn damping_of_eigenvalue(l: Complex64) -> f64 {
    l.re / l.norm()
}

/// Spectrum of `calA_r⁻¹·calB_r`.
pub fn prom_spectrum(tuple: &PromTuple) -> Result<Spectrum> {
    let c = condition_number(&tuple.cal_a);
    if !(c < GL_MAX_CONDITION) {
        return Err(Error::SingularCalA);
    }
    Spectrum::of_matrix(&tuple.system_matrix()?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DampingReport {
    /// One ratio per eigenvalue, ascending.
    pub zetas: Vec<f64>,
    pub zeta_lb: f64,
    pub min_zeta: f64,
    pub margin: f64,
    /// Spectrum index of the least-damped eigenvalue.
    pub active_index: usize,
}

fn check_degenerate(spec: &Spectrum) -> Result<()> {
    for (j, l) in spec.eigenvalues.iter().enumerate() {
        if l.norm() < 1e-14 * spec.scale.max(1e-300) {
            return Err(Error::DegenerateMode(format!("eigenvalue {j} is numerically zero")));
        }
    }
    Ok(())
}

/// Indices ordered by ascending damping, ties by index.
fn damping_order(ratios: &[f64], idx: impl Iterator<Item = usize>) -> Vec<usize> {
    let mut order: Vec<usize> = idx.collect();
    order.sort_by(|&a, &b| ratios[a].total_cmp(&ratios[b]).then(a.cmp(&b)));
    order
}

pub fn damping_ratios(spec: &Spectrum, zeta_lb: f64) -> Result<DampingReport> {
    if spec.is_empty() {
        return Err(Error::DegenerateMode("empty spectrum".into()));
    }
    check_degenerate(spec)?;
    let ratios: Vec<f64> = spec.eigenvalues.iter().map(|l| damping_of_eigenvalue(*l)).collect();
    let order = damping_order(&ratios, 0..ratios.len());
    let zetas: Vec<f64> = order.iter().map(|&i| ratios[i]).collect();
    let min_zeta = zetas[0];
    Ok(DampingReport {
        zetas,
        zeta_lb,
        min_zeta,
        margin: min_zeta - zeta_lb,
        active_index: order[0],
    })
}

/// Spectrum indices of the `n_track` least-damped modes, one eigenvalue per
/// conjugate pair. Repeats the last mode when the spectrum holds fewer.
pub fn tracked_modes(spec: &Spectrum, n_track: usize) -> Vec<usize> {
    let ratios: Vec<f64> = spec.eigenvalues.iter().map(|l| damping_of_eigenvalue(*l)).collect();
    let mut order = damping_order(&ratios, (0..spec.len()).filter(|&i| spec.eigenvalues[i].im >= 0.0));
    if order.is_empty() {
        return order;
    }
    order.truncate(n_track);
    while order.len() < n_track {
        order.push(*order.last().expect("nonempty"));
    }
    order
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlutterEvaluation {
    /// `ζ_k − ζ_lb` for the tracked modes, least damped first.
    pub values: Vector,
    /// Derivatives of `values` in reduced coordinates.
    pub jacobian: Matrix,
    pub report: DampingReport,
    /// Set when some rows come from finite differences.
    pub fd_fallback: bool,
}

fn tracked_values(interp: &TupleInterpolant, query: &Vector, zeta_lb: f64, n_track: usize) -> Result<Vector> {
    let spec = prom_spectrum(&interp.tuple(query)?)?;
    check_degenerate(&spec)?;
    let modes = tracked_modes(&spec, n_track);
    Ok(Vector::from_iterator(
        modes.len(),
        modes
            .iter()
            .map(|&i| damping_of_eigenvalue(spec.eigenvalues[i]) - zeta_lb),
    ))
}

fn to_complex(m: &Matrix) -> DMatrix<Complex64> {
    m.map(|x| Complex::new(x, 0.0))
}

/// Flutter constraint values `ζ_k − ζ_lb ≥ 0` and their Jacobian at `query`.
pub fn flutter_constraint_at(
    interp: &TupleInterpolant,
    query: &Vector,
    zeta_lb: f64,
    n_track: usize,
) -> Result<FlutterEvaluation> {
    let (tuple, sens) = interp.tuple_with_sensitivities(query)?;
    let spec = prom_spectrum(&tuple)?;
    let report = damping_ratios(&spec, zeta_lb)?;
    let modes = tracked_modes(&spec, n_track);
    let n_g = query.len();
    let n_mat = tuple.system_matrix()?;
    let a_lu = tuple.cal_a.clone().lu();
    let vinv = spec.eigenvectors.clone().try_inverse();

    let mut values = Vector::zeros(modes.len());
    let mut jacobian = Matrix::zeros(modes.len(), n_g);
    let mut unreliable = vec![false; modes.len()];
    // dN_j = calA⁻¹(dcalB_j − dcalA_j·N)
    let dn: Vec<Matrix> = sens
        .iter()
        .map(|(da, db)| a_lu.solve(&(db - da * &n_mat)).ok_or(Error::SingularCalA))
        .collect::<Result<_>>()?;
    let gap_tol = 1e-8 * spec.scale;
    for (k, &i) in modes.iter().enumerate() {
        let l = spec.eigenvalues[i];
        values[k] = damping_of_eigenvalue(l) - zeta_lb;
        let isolated = spec
            .eigenvalues
            .iter()
            .enumerate()
            .all(|(j, m)| j == i || (m - l).norm() > gap_tol);
        let Some(vinv) = vinv.as_ref().filter(|_| isolated) else {
            unreliable[k] = true;
            continue;
        };
        let w = vinv.row(i);
        // the unit eigenvectors give ŷᵀq̂ = 1/‖w‖ for the normalized left vector
        if 1.0 / w.norm() < 1e-10 {
            unreliable[k] = true;
            continue;
        }
        let v = spec.eigenvectors.column(i);
        let abs = l.norm();
        for j in 0..n_g {
            let dl = (w * to_complex(&dn[j]) * v)[(0, 0)];
            jacobian[(k, j)] = l.im * (l.im * dl.re - l.re * dl.im) / (abs * abs * abs);
        }
    }
    let fd_fallback = unreliable.iter().any(|u| *u);
    if fd_fallback {
        for j in 0..n_g {
            let mut qp = query.clone();
            qp[j] += FD_STEP;
            let mut qm = query.clone();
            qm[j] -= FD_STEP;
            let fp = tracked_values(interp, &qp, zeta_lb, n_track)?;
            let fm = tracked_values(interp, &qm, zeta_lb, n_track)?;
            for k in 0..modes.len() {
                if unreliable[k] {
                    jacobian[(k, j)] = (fp[k] - fm[k]) / (2.0 * FD_STEP);
                }
            }
        }
    }
    Ok(FlutterEvaluation {
        values,
        jacobian,
        report,
        fd_fallback,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rom::TupleBlocks;

    fn oscillator() -> PromTuple {
        let one = Matrix::identity(1, 1);
        PromTuple::from_blocks(&TupleBlocks {
            a: one.clone(),
            h: one.clone(),
            r: Matrix::zeros(1, 1),
            g: Matrix::zeros(1, 1),
            neg_p: Matrix::zeros(1, 1),
            d: &one * 0.2,
            omega2: one,
        })
        .unwrap()
    }

    #[test]
    fn oscillator_companion_spectrum() {
        let spec = prom_spectrum(&oscillator()).unwrap();
        let mut structural: Vec<Complex64> = spec.eigenvalues.iter().copied().filter(|l| l.im.abs() > 0.0).collect();
        structural.sort_by(|a, b| b.im.total_cmp(&a.im));
        let im = 3.96f64.sqrt() / 2.0;
        assert!((structural[0] - Complex::new(0.1, im)).norm() < 1e-14);
        assert!((structural[1] - Complex::new(0.1, -im)).norm() < 1e-14);
        let report = damping_ratios(&spec, 0.0).unwrap();
        assert!((report.min_zeta - 0.1).abs() < 1e-14);
        assert_eq!(report.zetas.last(), Some(&1.0));
    }

    #[test]
    fn damping_formula_cases() {
        let s = Complex::new(-0.1, 0.99f64.sqrt());
        assert!((damping_of_exponent(s) - 0.1).abs() < 1e-15);
        assert_eq!(damping_of_exponent(Complex::new(0.0, 2.0)), 0.0);
        assert_eq!(damping_of_exponent(Complex::new(-3.0, 0.0)), 1.0);
    }

    #[test]
    fn zero_eigenvalue_is_degenerate() {
        let spec = Spectrum::of_matrix(&Matrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0])).unwrap();
        assert!(matches!(damping_ratios(&spec, 0.0), Err(Error::DegenerateMode(_))));
    }

    #[test]
    fn tracked_modes_pad_short_spectra() {
        let spec = prom_spectrum(&oscillator()).unwrap();
        let modes = tracked_modes(&spec, 4);
        assert_eq!(modes.len(), 4);
        assert!((damping_of_eigenvalue(spec.eigenvalues[modes[0]]) - 0.1).abs() < 1e-14);
        assert_eq!(modes[2], modes[3]);
    }
}
