//! Three-phase driver: active subspace, database construction and the
//! flutter-constrained design solve, configured by one JSON document.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::asub::{
    build_alternative_as, build_classical_as, classical_sample_count, max_principal_angle, AsBasis,
    DEFAULT_AS_TOLERANCE,
};
use crate::database::{load_database_for, save_database, write_atomic, GreedyStatus, PromDatabase};
use crate::flutter::{prom_spectrum, DEFAULT_N_TRACK};
use crate::hdm::{generate_hdm, least_damping, Hdm, HdmConfig};
use crate::interp::Kernel;
use crate::manifolds::{general_eig, procrustes};
use crate::optimizer::{auxiliary_spec, solve_mdao, MdaoResult, RunStatus, SqpOptions};
use crate::rom::{build_entry, enforce_consistency, RomConfig};
use crate::sampling::{build_candidates, greedy_build, GreedyOptions, GridMode};
use crate::{Error, Matrix, Result, Vector};

pub const OFFLINE_REPORT: &str = "offline_report.json";
pub const DATABASE_FILE: &str = "db.json";
pub const CONVERGENCE_CSV: &str = "convergence.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const VERIFY_REPORT: &str = "verify_report.json";
pub const CSV_HEADER: &str = "iter,objective,max_violation,min_zeta,step_norm";

/// Largest state dimension the brute-force verification suite accepts.
pub const MAX_VERIFY_NQ: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE", tag = "type", deny_unknown_fields)]
pub enum AsMethodConfig {
    None,
    Classical { alpha: f64, beta: f64 },
    Alternative,
}

fn default_grid_mode() -> GridMode {
    GridMode::Scaled
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    pub n_grid: usize,
    pub c1: f64,
    pub c2: f64,
    #[serde(default = "default_grid_mode")]
    pub mode: GridMode,
    pub greedy_tol: f64,
    pub max_entries: usize,
    /// Candidates evaluated per greedy iteration; all when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subset: Option<usize>,
    #[serde(default)]
    pub kernel: Kernel,
}

fn default_n_track() -> usize {
    DEFAULT_N_TRACK
}

fn default_max_iter() -> usize {
    SqpOptions::default().max_iter
}

fn default_tol_kkt() -> f64 {
    SqpOptions::default().tol_kkt
}

fn default_tol_step() -> f64 {
    SqpOptions::default().tol_step
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    /// Start point; the design-space center when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu0: Option<Vec<f64>>,
    /// Damping bound; the model's own bound when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zeta_lb: Option<f64>,
    #[serde(default = "default_n_track")]
    pub n_track: usize,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_tol_kkt")]
    pub tol_kkt: f64,
    #[serde(default = "default_tol_step")]
    pub tol_step: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            mu0: None,
            zeta_lb: None,
            n_track: DEFAULT_N_TRACK,
            max_iter: default_max_iter(),
            tol_kkt: default_tol_kkt(),
            tol_step: default_tol_step(),
        }
    }
}

fn default_as_tolerance() -> f64 {
    DEFAULT_AS_TOLERANCE
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub hdm: HdmConfig,
    pub as_method: AsMethodConfig,
    #[serde(default = "default_as_tolerance")]
    pub as_tolerance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub as_dim_override: Option<usize>,
    pub sampling: SamplingConfig,
    pub rom: RomConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidConfig(msg.into())
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = serde_json::from_str(text).map_err(|e| invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.hdm.validate()?;
        self.rom.validate(self.hdm.nf, self.hdm.ns)?;
        let dim = self.hdm.design_space.dim();
        if !(self.as_tolerance > 0.0 && self.as_tolerance < 1.0) {
            return Err(invalid(format!(
                "as_tolerance {} must lie in (0, 1)",
                self.as_tolerance
            )));
        }
        if let Some(k) = self.as_dim_override {
            if k == 0 || k > dim {
                return Err(invalid(format!("as_dim_override {k} must lie in 1..={dim}")));
            }
        }
        if let AsMethodConfig::Classical { alpha, beta } = self.as_method {
            classical_sample_count(alpha, beta, dim).map_err(|e| invalid(e.to_string()))?;
        }
        let s = &self.sampling;
        if s.n_grid == 0 {
            return Err(invalid("sampling.n_grid must be positive"));
        }
        if !(s.c1.is_finite() && s.c2.is_finite() && s.c1 <= s.c2) {
            return Err(invalid(format!("sampling range [{}, {}] is invalid", s.c1, s.c2)));
        }
        if !(s.greedy_tol >= 0.0 && s.greedy_tol.is_finite()) {
            return Err(invalid("sampling.greedy_tol must be finite and nonnegative"));
        }
        if s.max_entries == 0 || s.subset == Some(0) {
            return Err(invalid("sampling.max_entries and sampling.subset must be positive"));
        }
        if let Kernel::Gaussian { shape } = s.kernel {
            if !(shape > 0.0 && shape.is_finite()) {
                return Err(invalid("Gaussian kernel shape must be positive"));
            }
        }
        let o = &self.optimizer;
        if let Some(mu0) = &o.mu0 {
            if mu0.len() != dim || mu0.iter().any(|x| !x.is_finite()) {
                return Err(invalid(format!("optimizer.mu0 must hold {dim} finite values")));
            }
        }
        if let Some(z) = o.zeta_lb {
            if !(z > 0.0 && z < 1.0) {
                return Err(invalid(format!("optimizer.zeta_lb {z} must lie in (0, 1)")));
            }
        }
        if o.n_track == 0 || o.max_iter == 0 || !(o.tol_kkt > 0.0) || !(o.tol_step >= 0.0) {
            return Err(invalid("optimizer n_track, max_iter and tol_kkt must be positive"));
        }
        Ok(())
    }

    pub fn mu0(&self) -> Vector {
        match &self.optimizer.mu0 {
            Some(m) => Vector::from_column_slice(m),
            None => self.hdm.design_space.center(),
        }
    }

    pub fn zeta_lb(&self) -> f64 {
        self.optimizer.zeta_lb.unwrap_or(self.hdm.zeta_lb)
    }

    pub fn sqp_options(&self) -> SqpOptions {
        SqpOptions {
            max_iter: self.optimizer.max_iter,
            tol_kkt: self.optimizer.tol_kkt,
            tol_step: self.optimizer.tol_step,
        }
    }

    pub fn greedy_options(&self) -> GreedyOptions {
        GreedyOptions {
            tol: self.sampling.greedy_tol,
            max_entries: self.sampling.max_entries,
            subset: self.sampling.subset,
            seed: self.seed,
            kernel: self.sampling.kernel,
        }
    }

    pub fn database_path(&self) -> PathBuf {
        self.output_dir.join(DATABASE_FILE)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PhaseStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfflineReport {
    pub status: PhaseStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub hdm_digest: String,
    pub as_method: AsMethodConfig,
    /// Gradient samples or increment snapshots used for the basis.
    pub n_as_samples: Option<usize>,
    pub n_g: Option<usize>,
    pub singular_values: Vec<f64>,
    pub n_candidates: Option<usize>,
    pub n_db: Option<usize>,
    pub greedy_status: Option<GreedyStatus>,
    pub indicator_history: Vec<f64>,
    pub as_seconds: f64,
    pub sampling_seconds: f64,
}

impl OfflineReport {
    fn new(cfg: &PipelineConfig) -> Self {
        OfflineReport {
            status: PhaseStatus::Failed,
            error: None,
            hdm_digest: cfg.hdm.digest(),
            as_method: cfg.as_method,
            n_as_samples: None,
            n_g: None,
            singular_values: Vec::new(),
            n_candidates: None,
            n_db: None,
            greedy_status: None,
            indicator_history: Vec::new(),
            as_seconds: 0.0,
            sampling_seconds: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OfflineOutcome {
    pub basis: AsBasis,
    pub database: PromDatabase,
    pub report: OfflineReport,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("report serializes");
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

/// Active-subspace basis for `cfg.as_method` and the number of samples it
/// consumed.
/// Active-subspace basis and the snapshot matrix it was compressed from.
pub fn build_basis(cfg: &PipelineConfig, hdm: &Hdm) -> Result<(AsBasis, Matrix)> {
    let space = hdm.design_space();
    match cfg.as_method {
        AsMethodConfig::None => Ok((AsBasis::identity(space.dim()), Matrix::zeros(space.dim(), 0))),
        AsMethodConfig::Classical { alpha, beta } => {
            let (basis, set) = build_classical_as(
                |mu| hdm.surrogate_objective(mu),
                space,
                alpha,
                beta,
                cfg.as_tolerance,
                cfg.seed,
                cfg.as_dim_override,
            )?;
            Ok((basis, set.gradients))
        }
        AsMethodConfig::Alternative => {
            let spec = auxiliary_spec(hdm, &cfg.mu0())?;
            let (basis, set) = build_alternative_as(&spec, &cfg.sqp_options(), cfg.as_tolerance, cfg.as_dim_override)?;
            Ok((basis, set.snapshots))
        }
    }
}

fn offline_phases(cfg: &PipelineConfig, report: &mut OfflineReport) -> Result<(AsBasis, PromDatabase)> {
    let hdm = generate_hdm(&cfg.hdm)?;
    let t = Instant::now();
    let (basis, snapshots) = build_basis(cfg, &hdm)?;
    report.as_seconds = t.elapsed().as_secs_f64();
    report.n_as_samples = Some(snapshots.ncols());
    report.n_g = Some(basis.n_g());
    report.singular_values = basis.singular_values.clone();

    let t = Instant::now();
    let s = &cfg.sampling;
    let candidates = build_candidates(&basis, hdm.design_space(), s.n_grid, s.c1, s.c2, s.mode)?;
    report.n_candidates = Some(candidates.len());
    let db = greedy_build(&hdm, &basis, &candidates, &cfg.greedy_options(), &cfg.rom)?;
    report.sampling_seconds = t.elapsed().as_secs_f64();
    report.n_db = Some(db.len());
    report.greedy_status = Some(db.status);
    report.indicator_history = db.history.clone();
    Ok((basis, db))
}

/// Builds the basis and the database, writing `db.json` and
/// `offline_report.json` to the output directory. On failure the report is
/// still written with status `FAILED` and whatever the finished phases
/// produced.
pub fn run_offline(cfg: &PipelineConfig) -> Result<OfflineOutcome> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.output_dir)?;
    let mut report = OfflineReport::new(cfg);
    let result = offline_phases(cfg, &mut report).and_then(|(basis, db)| {
        save_database(&db, &cfg.database_path())?;
        Ok((basis, db))
    });
    match result {
        Ok((basis, database)) => {
            report.status = PhaseStatus::Ok;
            write_json(&cfg.output_dir.join(OFFLINE_REPORT), &report)?;
            Ok(OfflineOutcome {
                basis,
                database,
                report,
            })
        }
        Err(e) => {
            report.error = Some(e.to_string());
            write_json(&cfg.output_dir.join(OFFLINE_REPORT), &report)?;
            Err(e)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlineSummary {
    pub status: RunStatus,
    pub iterations: usize,
    pub final_mu: Vec<f64>,
    pub final_mu_r: Vec<f64>,
    pub objective: f64,
    pub zeta_lb: f64,
    /// Least damping ratio of the interpolated reduced model.
    pub min_zeta: f64,
    /// Least damping ratio of the full model, by direct eigenanalysis.
    pub hdm_min_zeta: f64,
    pub kkt_residual: f64,
    pub n_db: usize,
}

#[derive(Debug, Clone)]
pub struct OnlineOutcome {
    pub result: MdaoResult,
    pub summary: OnlineSummary,
}

pub fn convergence_csv(result: &MdaoResult) -> String {
    let rec = &result.record;
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for k in 0..rec.iterates.len() {
        out.push_str(&format!(
            "{k},{},{},{},{}\n",
            -rec.objective_history[k],
            rec.constraint_violation_history[k],
            result.min_zeta_history[k],
            rec.step_norms[k]
        ));
    }
    out
}

/// Solves the design problem on the database at `db_path`, writing
/// `convergence.csv` and `summary.json`. The database file is only read.
pub fn run_online(cfg: &PipelineConfig, db_path: &Path) -> Result<OnlineOutcome> {
    cfg.validate()?;
    let hdm = generate_hdm(&cfg.hdm)?;
    let db = load_database_for(db_path, &hdm.digest())?;
    let zeta_lb = cfg.zeta_lb();
    let result = solve_mdao(
        &hdm,
        &db,
        zeta_lb,
        cfg.optimizer.n_track,
        &cfg.mu0(),
        &cfg.sqp_options(),
    )?;
    let summary = OnlineSummary {
        status: result.record.status,
        iterations: result.record.iterations(),
        final_mu: result.final_mu.iter().copied().collect(),
        final_mu_r: result.final_mu_r.iter().copied().collect(),
        objective: result.objective,
        zeta_lb,
        min_zeta: result.report.min_zeta,
        hdm_min_zeta: least_damping(&hdm.blocks(&result.final_mu)?)?,
        kkt_residual: result.record.kkt_residual,
        n_db: db.len(),
    };
    fs::create_dir_all(&cfg.output_dir)?;
    write_atomic(
        &cfg.output_dir.join(CONVERGENCE_CSV),
        convergence_csv(&result).as_bytes(),
    )?;
    write_json(&cfg.output_dir.join(SUMMARY_FILE), &summary)?;
    Ok(OnlineOutcome { result, summary })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyResult {
    pub name: String,
    pub passed: bool,
    pub measured: Option<f64>,
    pub tolerance: Option<f64>,
    pub detail: String,
}

impl PropertyResult {
    fn measured(name: &str, measured: f64, tolerance: f64, detail: impl Into<String>) -> Self {
        PropertyResult {
            name: name.into(),
            passed: measured <= tolerance,
            measured: Some(measured),
            tolerance: Some(tolerance),
            detail: detail.into(),
        }
    }

    fn failed(name: &str, err: &Error) -> Self {
        PropertyResult {
            name: name.into(),
            passed: false,
            measured: None,
            tolerance: None,
            detail: err.to_string(),
        }
    }

    fn skipped(name: &str, why: &str) -> Self {
        PropertyResult {
            name: name.into(),
            passed: true,
            measured: None,
            tolerance: None,
            detail: format!("skipped: {why}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub passed: bool,
    pub properties: Vec<PropertyResult>,
}

pub const SPECTRUM_TOL: f64 = 1e-8;
pub const REPRODUCTION_TOL: f64 = 1e-9;
/// Absolute allowance on the recomputed snapshot energy share.
pub const AS_RECOVERY_SLACK: f64 = 1e-12;
pub const CONSISTENCY_TOL: f64 = 1e-8;

/// Haar-distributed orthogonal matrix.
pub fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let g = Matrix::from_fn(n, n, |_, _| crate::hdm::normal(rng));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Largest distance from an eigenvalue of `a` to its nearest eigenvalue of
/// `b`, both ways.
pub fn spectral_distance(a: &[crate::manifolds::Complex64], b: &[crate::manifolds::Complex64]) -> f64 {
    let one_way = |x: &[crate::manifolds::Complex64], y: &[crate::manifolds::Complex64]| {
        x.iter()
            .map(|l| y.iter().map(|m| (l - m).norm()).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    one_way(a, b).max(one_way(b, a))
}

fn full_rank_config(cfg: &PipelineConfig) -> RomConfig {
    RomConfig {
        full_rank: true,
        ns_keep: cfg.hdm.ns,
        ..cfg.rom.clone()
    }
}

fn verify_spectrum(cfg: &PipelineConfig, hdm: &Hdm) -> Result<PropertyResult> {
    let mu = hdm.design_space().center();
    let entry = build_entry(hdm, &mu, &mu, &full_rank_config(cfg))?;
    let prom = prom_spectrum(&entry.tuple)?;
    let full = general_eig(&hdm.blocks(&mu)?.system_matrix()?)?;
    let scale = full.values.iter().map(|l| l.norm()).fold(1.0, f64::max);
    let err = spectral_distance(&prom.eigenvalues, &full.values) / scale;
    Ok(PropertyResult::measured(
        "hdm_prom_spectrum",
        err,
        SPECTRUM_TOL,
        "relative eigenvalue error of the full-rank reduced model at the design-space center",
    ))
}

fn verify_reproduction(db: &PromDatabase) -> Result<PropertyResult> {
    let interp = db.interpolant()?;
    let mut worst: f64 = 0.0;
    for e in &db.entries {
        let got = interp.tuple(&e.mu_r)?.blocks();
        let want = e.tuple.blocks();
        for (g, w) in got.as_array().iter().zip(want.as_array().iter()) {
            let den = w.norm().max(f64::MIN_POSITIVE);
            worst = worst.max((*g - *w).norm() / den);
        }
    }
    Ok(PropertyResult::measured(
        "interpolation_reproduction",
        worst,
        REPRODUCTION_TOL,
        format!("largest per-block relative error over {} sampled points", db.len()),
    ))
}

fn verify_procrustes(seed: u64) -> PropertyResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (cases, trials) = (5, 1000);
    let mut wins = 0;
    for _ in 0..cases {
        let a = random_orthogonal(20, &mut rng).columns(0, 4).into_owned();
        let b = random_orthogonal(20, &mut rng).columns(0, 4).into_owned();
        let Ok(q) = procrustes(&a, &b) else {
            continue;
        };
        let best = (&a - &b * q).norm();
        if (0..trials).all(|_| (&a - &b * random_orthogonal(4, &mut rng)).norm() >= best) {
            wins += 1;
        }
    }
    PropertyResult {
        name: "procrustes_optimality".into(),
        passed: wins == cases,
        measured: Some((cases - wins) as f64),
        tolerance: Some(0.0),
        detail: format!("{wins}/{cases} cases beat {trials} random rotations"),
    }
}

/// Share of snapshot energy outside the basis, recomputed by projection.
fn verify_as_recovery(cfg: &PipelineConfig, hdm: &Hdm, basis: &AsBasis, snapshots: &Matrix) -> PropertyResult {
    if cfg.as_method == AsMethodConfig::None {
        return PropertyResult::skipped("as_recovery", "no active subspace configured");
    }
    if let Some(k) = cfg.as_dim_override {
        return PropertyResult::skipped("as_recovery", &format!("dimension fixed to {k} by override"));
    }
    let total = snapshots.norm_squared();
    let outside = (snapshots - &basis.v * basis.v.tr_mul(snapshots)).norm_squared();
    let share = if total > 0.0 { outside / total } else { 0.0 };
    let planted = &hdm.surrogate.v_star;
    let angle = if planted.ncols() == basis.n_g() {
        format!("{:.2e}", max_principal_angle(&basis.v, planted))
    } else {
        format!("n/a (planted dimension {})", planted.ncols())
    };
    PropertyResult::measured(
        "as_recovery",
        share,
        cfg.as_tolerance + AS_RECOVERY_SLACK,
        format!(
            "snapshot energy outside the {}-dimensional basis; angle to planted subspace {angle}",
            basis.n_g()
        ),
    )
}

/// Small seeded database on the configured subspace for the reproduction
/// check when no database file is given.
fn probe_database(cfg: &PipelineConfig, hdm: &Hdm, basis: &AsBasis) -> Result<PromDatabase> {
    let s = &cfg.sampling;
    let cands = build_candidates(basis, hdm.design_space(), s.n_grid, s.c1, s.c2, s.mode)?;
    let n = cands.len().min(5);
    let step = cands.len() / n;
    let mut entries = (0..n)
        .map(|i| build_entry(hdm, &cands.xi[i * step], &cands.xi_r[i * step], &cfg.rom))
        .collect::<Result<Vec<_>>>()?;
    enforce_consistency(&mut entries, 0)?;
    Ok(PromDatabase {
        hdm_digest: hdm.digest(),
        basis: basis.clone(),
        entries,
        ref_index: 0,
        consistency_applied: true,
        history: Vec::new(),
        status: GreedyStatus::BudgetExhausted,
        kernel: s.kernel,
    })
}

fn or_failed(name: &str, r: Result<PropertyResult>) -> PropertyResult {
    r.unwrap_or_else(|e| PropertyResult::failed(name, &e))
}

/// Runs the brute-force property suite. With `db_path`, the stored database
/// is also checked for integrity and consistency and used for the
/// reproduction check.
pub fn run_verify(cfg: &PipelineConfig, db_path: Option<&Path>) -> Result<VerificationReport> {
    cfg.validate()?;
    let nq = cfg.hdm.nf + 2 * cfg.hdm.ns;
    if nq > MAX_VERIFY_NQ {
        return Err(invalid(format!("verification needs N_q <= {MAX_VERIFY_NQ}, got {nq}")));
    }
    let hdm = generate_hdm(&cfg.hdm)?;
    let mut props = vec![or_failed("hdm_prom_spectrum", verify_spectrum(cfg, &hdm))];
    let basis = build_basis(cfg, &hdm);
    match &basis {
        Ok((b, snapshots)) => props.push(verify_as_recovery(cfg, &hdm, b, snapshots)),
        Err(e) => props.push(PropertyResult::failed("as_recovery", e)),
    }
    let basis = basis.map(|(b, _)| b);
    props.push(verify_procrustes(cfg.seed));
    match db_path {
        Some(path) => match load_database_for(path, &hdm.digest()) {
            Ok(db) => {
                props.push(PropertyResult {
                    name: "database_integrity".into(),
                    passed: true,
                    measured: None,
                    tolerance: None,
                    detail: format!("{} entries, checksum and digest valid", db.len()),
                });
                props.push(or_failed(
                    "database_consistency",
                    db.consistency_defect().map(|d| {
                        PropertyResult::measured(
                            "database_consistency",
                            d,
                            CONSISTENCY_TOL,
                            "largest deviation from identity of the realigning rotations",
                        )
                    }),
                ));
                props.push(or_failed("interpolation_reproduction", verify_reproduction(&db)));
            }
            Err(e) => {
                props.push(PropertyResult::failed("database_integrity", &e));
                props.push(PropertyResult::failed("database_consistency", &e));
            }
        },
        None => {
            let r = basis
                .and_then(|b| probe_database(cfg, &hdm, &b))
                .and_then(|db| verify_reproduction(&db));
            props.push(or_failed("interpolation_reproduction", r));
        }
    }
    let report = VerificationReport {
        passed: props.iter().all(|p| p.passed),
        properties: props,
    };
    fs::create_dir_all(&cfg.output_dir)?;
    write_json(&cfg.output_dir.join(VERIFY_REPORT), &report)?;
    Ok(report)
}

fn read_json(path: &Path) -> Option<serde_json::Value> {
    serde_json::from_slice(&fs::read(path).ok()?).ok()
}

/// Plain-text digest of whichever reports exist in `dir`.
pub fn render_report(dir: &Path) -> Result<String> {
    let mut out = String::new();
    let mut found = false;
    if let Some(v) = read_json(&dir.join(OFFLINE_REPORT)) {
        found = true;
        out.push_str("offline\n");
        for key in [
            "status",
            "as_method",
            "n_as_samples",
            "n_g",
            "n_candidates",
            "n_db",
            "greedy_status",
            "as_seconds",
            "sampling_seconds",
        ] {
            out.push_str(&format!("  {key:<18} {}\n", compact(&v[key])));
        }
        if let Some(err) = v.get("error") {
            out.push_str(&format!("  {:<18} {}\n", "error", compact(err)));
        }
    }
    if let Some(v) = read_json(&dir.join(SUMMARY_FILE)) {
        found = true;
        out.push_str("online\n");
        for key in [
            "status",
            "iterations",
            "objective",
            "zeta_lb",
            "min_zeta",
            "hdm_min_zeta",
            "n_db",
        ] {
            out.push_str(&format!("  {key:<18} {}\n", compact(&v[key])));
        }
    }
    if let Some(v) = read_json(&dir.join(VERIFY_REPORT)) {
        found = true;
        out.push_str(&format!(
            "verify {}\n",
            if v["passed"] == true { "PASS" } else { "FAIL" }
        ));
        for p in v["properties"].as_array().into_iter().flatten() {
            let mark = if p["passed"] == true { "PASS" } else { "FAIL" };
            out.push_str(&format!(
                "  {mark} {:<28} measured={} tol={}\n",
                p["name"].as_str().unwrap_or("?"),
                compact(&p["measured"]),
                compact(&p["tolerance"])
            ));
        }
    }
    if !found {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("no reports in {}", dir.display()),
        )));
    }
    Ok(out)
}

fn compact(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::String(s) => s.clone(),
        serde_json::Value::Null => "-".into(),
        other => other.to_string(),
    }
}
