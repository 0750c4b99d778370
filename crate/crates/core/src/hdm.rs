//! Synthetic parametric linearized fluid-structure model.
//!
//! The fluid block is an upwind convection-diffusion operator on a 1D grid,
//! the structure a spring-mass chain with Rayleigh-plus-mass damping, and the
//! two are coupled through fixed random matrices whose strength is calibrated
//! so the baseline design sits just above the flutter damping bound.

use nalgebra::{Complex, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::manifolds::{general_eig, Complex64};
use crate::{Error, Matrix, Result, Vector};

/// Diffusion coefficient of the fluid operator.
const DIFFUSION: f64 = 0.05;
/// Damping bound the coupling strength is calibrated against by default.
pub const DEFAULT_ZETA_LB: f64 = 4.75e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ParamRole {
    FluidShape,
    StructStiffness,
    StructDamping,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSpace {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl DesignSpace {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let ds = DesignSpace { lower, upper };
        ds.validate()?;
        Ok(ds)
    }

    pub fn uniform(dim: usize, lo: f64, hi: f64) -> Self {
        DesignSpace {
            lower: vec![lo; dim],
            upper: vec![hi; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.lower.is_empty() || self.lower.len() != self.upper.len() {
            return Err(Error::InvalidConfig(
                "design space bounds must be nonempty and of equal length".into(),
            ));
        }
        for (i, (l, u)) in self.lower.iter().zip(&self.upper).enumerate() {
            if !(l.is_finite() && u.is_finite() && l < u) {
                return Err(Error::InvalidConfig(format!(
                    "bounds of parameter {i} are invalid: [{l}, {u}]"
                )));
            }
        }
        Ok(())
    }

    /// Largest violation of the bounds by `mu` (zero inside the box).
    pub fn violation(&self, mu: &Vector) -> f64 {
        mu.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(x, (l, u))| (l - x).max(x - u).max(0.0))
            .fold(0.0, f64::max)
    }

    pub fn lower_vec(&self) -> Vector {
        Vector::from_column_slice(&self.lower)
    }

    pub fn upper_vec(&self) -> Vector {
        Vector::from_column_slice(&self.upper)
    }

    pub fn center(&self) -> Vector {
        (self.lower_vec() + self.upper_vec()) * 0.5
    }
}

fn default_zeta_lb() -> f64 {
    DEFAULT_ZETA_LB
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HdmConfig {
    pub nf: usize,
    pub ns: usize,
    pub design_space: DesignSpace,
    pub seed: u64,
    pub parameter_roles: Vec<ParamRole>,
    /// Dimension of the hidden subspace the surrogate objective lives in;
    /// half the design dimension (rounded up) when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub planted_rank: Option<usize>,
    /// Fixed coupling strength; calibrated against `zeta_lb` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling: Option<f64>,
    #[serde(default = "default_zeta_lb")]
    pub zeta_lb: f64,
}

impl HdmConfig {
    pub fn validate(&self) -> Result<()> {
        self.design_space.validate()?;
        if self.ns == 0 || self.nf < 4 * self.ns {
            return Err(Error::InvalidConfig(format!(
                "need ns >= 1 and nf >= 4*ns, got nf={} ns={}",
                self.nf, self.ns
            )));
        }
        if self.parameter_roles.len() != self.design_space.dim() {
            return Err(Error::InvalidConfig(format!(
                "{} parameter roles for a {}-dimensional design space",
                self.parameter_roles.len(),
                self.design_space.dim()
            )));
        }
        for role in [
            ParamRole::FluidShape,
            ParamRole::StructStiffness,
            ParamRole::StructDamping,
        ] {
            if !self.parameter_roles.contains(&role) {
                return Err(Error::InvalidConfig(format!("no parameter has role {role:?}")));
            }
        }
        if let Some(r) = self.planted_rank {
            if r == 0 || r > self.design_space.dim() {
                return Err(Error::InvalidConfig(format!("planted rank {r} out of range")));
            }
        }
        if let Some(g) = self.coupling {
            if !(g.is_finite() && g >= 0.0) {
                return Err(Error::InvalidConfig(format!("coupling {g} must be nonnegative")));
            }
        }
        if !(self.zeta_lb > 0.0 && self.zeta_lb < 0.5) {
            return Err(Error::InvalidConfig(format!("zeta_lb {} out of range", self.zeta_lb)));
        }
        Ok(())
    }

    /// Hex digest identifying the model a database was built from.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        let hash = Sha256::digest(&bytes);
        hash[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn indices_of(&self, role: ParamRole) -> Vec<usize> {
        self.parameter_roles
            .iter()
            .enumerate()
            .filter(|(_, r)| **r == role)
            .map(|(i, _)| i)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FsiOperators {
    pub a: Matrix,
    pub h: Matrix,
    pub r: Matrix,
    pub g: Matrix,
    pub m: Matrix,
    pub d: Matrix,
    pub k: Matrix,
    pub p: Matrix,
}

impl FsiOperators {
    pub fn nf(&self) -> usize {
        self.h.nrows()
    }

    pub fn ns(&self) -> usize {
        self.m.nrows()
    }
}

/// First-order operators of the system `calA·q̇ + calB·q = 0` with state
/// `q = [w; u̇; u]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockOperators {
    pub cal_a: Matrix,
    pub cal_b: Matrix,
    pub nf: usize,
    pub ns: usize,
}

impl BlockOperators {
    pub fn nq(&self) -> usize {
        self.nf + 2 * self.ns
    }

    /// `calA⁻¹·calB`.
    pub fn system_matrix(&self) -> Result<Matrix> {
        self.cal_a.clone().lu().solve(&self.cal_b).ok_or(Error::SingularCalA)
    }
}

fn check_shape(m: &Matrix, shape: (usize, usize), what: &str) -> Result<()> {
    if m.shape() != shape {
        return Err(Error::DimensionMismatch(format!(
            "{what} has shape {:?}, expected {shape:?}",
            m.shape()
        )));
    }
    Ok(())
}

pub fn assemble_blocks(ops: &FsiOperators) -> Result<BlockOperators> {
    let nf = ops.h.nrows();
    let ns = ops.m.nrows();
    check_shape(&ops.a, (nf, nf), "A")?;
    check_shape(&ops.h, (nf, nf), "H")?;
    check_shape(&ops.r, (nf, ns), "R")?;
    check_shape(&ops.g, (nf, ns), "G")?;
    check_shape(&ops.m, (ns, ns), "M")?;
    check_shape(&ops.d, (ns, ns), "D")?;
    check_shape(&ops.k, (ns, ns), "K")?;
    check_shape(&ops.p, (ns, nf), "P")?;
    let nq = nf + 2 * ns;
    let mut cal_a = Matrix::zeros(nq, nq);
    cal_a.view_mut((0, 0), (nf, nf)).copy_from(&ops.a);
    cal_a.view_mut((nf, nf), (ns, ns)).copy_from(&ops.m);
    cal_a.view_mut((nf + ns, nf + ns), (ns, ns)).copy_from(&ops.m);
    let mut cal_b = Matrix::zeros(nq, nq);
    cal_b.view_mut((0, 0), (nf, nf)).copy_from(&ops.h);
    cal_b.view_mut((0, nf), (nf, ns)).copy_from(&ops.r);
    cal_b.view_mut((0, nf + ns), (nf, ns)).copy_from(&ops.g);
    cal_b.view_mut((nf, 0), (ns, nf)).copy_from(&(-&ops.p));
    cal_b.view_mut((nf, nf), (ns, ns)).copy_from(&ops.d);
    cal_b.view_mut((nf, nf + ns), (ns, ns)).copy_from(&ops.k);
    cal_b.view_mut((nf + ns, nf), (ns, ns)).copy_from(&(-&ops.m));
    Ok(BlockOperators { cal_a, cal_b, nf, ns })
}

/// `‖(λ·calA + calB)·q‖₂`; `λ` is the exponent of the time dependence
/// `q(t) = q·e^{λt}`.
pub fn hdm_residual(blocks: &BlockOperators, lambda: Complex64, q: &DVector<Complex64>) -> Result<f64> {
    if q.len() != blocks.nq() {
        return Err(Error::DimensionMismatch(format!(
            "state vector of length {} for a system of size {}",
            q.len(),
            blocks.nq()
        )));
    }
    let pencil = blocks.cal_a.map(|x| Complex::new(x, 0.0)) * lambda + blocks.cal_b.map(|x| Complex::new(x, 0.0));
    Ok((pencil * q).norm())
}

/// Smallest `Re λ/|λ|` over the spectrum of `calA⁻¹·calB`.
pub fn least_damping(blocks: &BlockOperators) -> Result<f64> {
    let eig = general_eig(&blocks.system_matrix()?)?;
    Ok(eig
        .values
        .iter()
        .map(|l| if l.norm() > 0.0 { l.re / l.norm() } else { 0.0 })
        .fold(f64::INFINITY, f64::min))
}

/// Seed-derived analytic objective and constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct Surrogate {
    /// Hidden orthonormal basis of the subspace the objective depends on.
    pub v_star: Matrix,
    pub a: Vector,
    pub b: Matrix,
    pub stress_s: Matrix,
    pub stress_lin: Vector,
    pub stress_rhs: f64,
    pub weight: Vector,
    pub weight_rhs: f64,
}

impl Surrogate {
    fn generate(dim: usize, rank: usize, rng: &mut ChaCha8Rng) -> Self {
        let raw = Matrix::from_fn(dim, rank, |_, _| normal(rng));
        let v_star = raw.qr().q().columns(0, rank).into_owned();
        let mut coef = Vector::from_fn(rank, |_, _| normal(rng));
        coef /= coef.norm();
        let a = &v_star * &coef;
        let spectrum = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| -> Vec<f64> {
            (0..rank)
                .map(|_| lo + (hi - lo) * rand::Rng::random::<f64>(rng))
                .collect()
        };
        let planted = |d: &[f64]| {
            let scaled = Matrix::from_fn(dim, rank, |i, j| v_star[(i, j)] * d[j]);
            let m = scaled * v_star.transpose();
            (&m + m.transpose()) * 0.5
        };
        let b = planted(&spectrum(rng, 1.0, 3.0));
        let stress_s = planted(&spectrum(rng, 0.5, 1.5));
        let stress_lin = &v_star * Vector::from_fn(rank, |_, _| 0.3 * normal(rng));
        let mut wdir = coef.clone() + Vector::from_fn(rank, |_, _| 0.5 * normal(rng));
        wdir /= wdir.norm();
        let weight = &v_star * wdir;
        Surrogate {
            v_star,
            a,
            b,
            stress_s,
            stress_lin,
            stress_rhs: 0.25,
            weight,
            weight_rhs: 0.15,
        }
    }

    pub fn objective(&self, mu: &Vector) -> (f64, Vector) {
        let bmu = &self.b * mu;
        let num = 1.0 + self.a.dot(mu);
        let den = 1.0 + mu.dot(&bmu);
        let grad = &self.a / den - bmu * (2.0 * num / (den * den));
        (num / den, grad)
    }

    pub fn constraints(&self, mu: &Vector) -> (Vector, Matrix) {
        let smu = &self.stress_s * mu;
        let g1 = mu.dot(&smu) + self.stress_lin.dot(mu) - self.stress_rhs;
        let g2 = self.weight.dot(mu) - self.weight_rhs;
        let dim = mu.len();
        let mut jac = Matrix::zeros(2, dim);
        jac.row_mut(0).copy_from(&(smu * 2.0 + &self.stress_lin).transpose());
        jac.row_mut(1).copy_from(&self.weight.transpose());
        (Vector::from_vec(vec![g1, g2]), jac)
    }
}

/// Immutable parametric model handle.
#[derive(Debug, Clone)]
pub struct Hdm {
    pub config: HdmConfig,
    pub gamma0: f64,
    r0: Matrix,
    g0: Matrix,
    p0: Matrix,
    fluid_params: Vec<usize>,
    damping_params: Vec<usize>,
    /// Parameter index and base stiffness of each spring.
    springs: Vec<(usize, f64)>,
    pub surrogate: Surrogate,
}

pub(crate) fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn unit_random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let m = Matrix::from_fn(rows, cols, |_, _| normal(rng));
    let n = m.norm();
    m / n
}

pub fn generate_hdm(config: &HdmConfig) -> Result<Hdm> {
    config.validate()?;
    let (nf, ns) = (config.nf, config.ns);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let r0 = unit_random(nf, ns, &mut rng);
    let g0 = unit_random(nf, ns, &mut rng);
    let p0 = unit_random(ns, nf, &mut rng);
    let mut srng = ChaCha8Rng::seed_from_u64(config.seed);
    srng.set_stream(1);
    let dim = config.design_space.dim();
    let rank = config.planted_rank.unwrap_or(dim.div_ceil(2));
    let surrogate = Surrogate::generate(dim, rank, &mut srng);

    let stiff = config.indices_of(ParamRole::StructStiffness);
    let springs = (0..ns)
        .map(|j| {
            let g = j * stiff.len() / ns;
            (stiff[g], 1.0 + 0.25 * g as f64)
        })
        .collect();
    let mut hdm = Hdm {
        config: config.clone(),
        gamma0: config.coupling.unwrap_or(0.0),
        r0,
        g0,
        p0,
        fluid_params: config.indices_of(ParamRole::FluidShape),
        damping_params: config.indices_of(ParamRole::StructDamping),
        springs,
        surrogate,
    };
    if config.coupling.is_none() {
        hdm.calibrate_coupling()?;
    }
    Ok(hdm)
}

fn mean_of(mu: &Vector, idx: &[usize]) -> f64 {
    idx.iter().map(|&i| mu[i]).sum::<f64>() / idx.len() as f64
}

impl Hdm {
    pub fn dim(&self) -> usize {
        self.config.design_space.dim()
    }

    pub fn design_space(&self) -> &DesignSpace {
        &self.config.design_space
    }

    pub fn digest(&self) -> String {
        self.config.digest()
    }

    fn check_dim(&self, mu: &Vector) -> Result<()> {
        if mu.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "parameter of length {} for a {}-dimensional design space",
                mu.len(),
                self.dim()
            )));
        }
        if mu.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("non-finite parameter".into()));
        }
        Ok(())
    }

    fn check_bounds(&self, mu: &Vector) -> Result<()> {
        self.check_dim(mu)?;
        let ds = &self.config.design_space;
        let v = ds.violation(mu);
        let width = ds.lower.iter().zip(&ds.upper).map(|(l, u)| u - l).fold(1.0, f64::max);
        if v > 1e-8 * width {
            return Err(Error::OutOfBounds(format!("bound violation {v:.3e}")));
        }
        Ok(())
    }

    /// Operators at `mu`; defined for any `mu` that keeps every spring and the
    /// damping coefficient positive.
    pub fn operators(&self, mu: &Vector) -> Result<FsiOperators> {
        self.check_dim(mu)?;
        self.operators_with_coupling(mu, self.gamma0)
    }

    fn operators_with_coupling(&self, mu: &Vector, gamma0: f64) -> Result<FsiOperators> {
        let (nf, ns) = (self.config.nf, self.config.ns);
        let sf = mean_of(mu, &self.fluid_params);
        let speed = 1.0 + 0.3 * sf;
        let length = 1.0 + 0.2 * sf;
        if !(length > 0.0) {
            return Err(Error::InvalidParameter("nonpositive fluid domain length".into()));
        }
        let h = length / nf as f64;
        let a = Matrix::identity(nf, nf) * h;
        let mut hm = Matrix::zeros(nf, nf);
        for i in 0..nf {
            hm[(i, i)] = speed + 2.0 * DIFFUSION / h;
            if i > 0 {
                hm[(i, i - 1)] = -(speed + DIFFUSION / h);
            }
            if i + 1 < nf {
                hm[(i, i + 1)] = -DIFFUSION / h;
            }
        }

        let mut k = Matrix::zeros(ns, ns);
        for (j, &(param, base)) in self.springs.iter().enumerate() {
            let kj = base * (1.0 + mu[param]);
            if !(kj > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "spring {j} has nonpositive stiffness {kj:.3e}"
                )));
            }
            k[(j, j)] += kj;
            if j > 0 {
                k[(j - 1, j - 1)] += kj;
                k[(j - 1, j)] -= kj;
                k[(j, j - 1)] -= kj;
            }
        }
        let damping = 0.02 * (1.0 + mean_of(mu, &self.damping_params));
        if !(damping > 0.0) {
            return Err(Error::InvalidParameter("nonpositive mass damping".into()));
        }
        let m = Matrix::identity(ns, ns);
        let d = &k * 0.01 + &m * damping;
        let gamma = gamma0 * (1.0 + 0.5 * sf);
        Ok(FsiOperators {
            a,
            h: hm,
            r: &self.r0 * gamma,
            g: &self.g0 * gamma,
            m,
            d,
            k,
            p: &self.p0 * gamma,
        })
    }

    pub fn blocks(&self, mu: &Vector) -> Result<BlockOperators> {
        assemble_blocks(&self.operators(mu)?)
    }

    /// Objective to be maximized, with its gradient.
    pub fn surrogate_objective(&self, mu: &Vector) -> Result<(f64, Vector)> {
        self.check_bounds(mu)?;
        Ok(self.surrogate.objective(mu))
    }

    /// Inequality constraints `g(mu) <= 0`, with their Jacobian.
    pub fn surrogate_constraints(&self, mu: &Vector) -> Result<(Vector, Matrix)> {
        self.check_bounds(mu)?;
        Ok(self.surrogate.constraints(mu))
    }

    fn baseline_damping(&self, gamma0: f64) -> Result<f64> {
        let mu = Vector::zeros(self.dim());
        least_damping(&assemble_blocks(&self.operators_with_coupling(&mu, gamma0)?)?)
    }

    /// Picks the coupling strength so the least-damped baseline mode has a
    /// damping ratio of 1.5·zeta_lb.
    fn calibrate_coupling(&mut self) -> Result<()> {
        let target = 1.5 * self.config.zeta_lb;
        let accept = 0.1 * self.config.zeta_lb;
        for flip in [false, true] {
            if flip {
                self.r0 = -&self.r0;
            }
            let mut lo = 0.0;
            let mut hi = 1e-3;
            let mut found = false;
            while hi < 1e3 {
                if self.baseline_damping(hi)? < target {
                    found = true;
                    break;
                }
                lo = hi;
                hi *= 2.0;
            }
            if !found {
                continue;
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                let z = self.baseline_damping(mid)?;
                if (z - target).abs() <= accept {
                    self.gamma0 = mid;
                    return Ok(());
                }
                if z > target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            self.gamma0 = 0.5 * (lo + hi);
            return Ok(());
        }
        Err(Error::InvalidConfig(
            "no coupling strength brings the baseline damping down to the target".into(),
        ))
    }
}
