//! Study runner: configures a benchmark problem, sweeps polynomial degree
//! and method, records error measures and wall times, and emits CSV rows for
//! convergence and Pareto analyses.
//!
//! Timing rule: `total_seconds = assembly_seconds + solve_seconds`; the shared
//! reference solution is computed once per study and excluded from row
//! timings. The non-intrusive method has no assembly phase, so its per-node
//! solves are recorded as solve time.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::analysis::{error_report, reference_solution, ReferenceSolution};
use crate::error::{Error, Result};
use crate::fem::{GKind, QoIOperator};
use crate::gpc::{build_basis, default_rule_size, gauss_rule, moment_tensors, QuadratureRule};
use crate::problems::{build_problem, FieldParams, Problem, ProblemKind};
use crate::projection::{
    assemble_analytic_lspg_ata, assemble_analytic_sg, assemble_galerkin,
    assemble_normal_equations, solve_linear_system, solve_lspg, solve_lspg_cg,
    solve_pseudospectral, LspgSolve, WeightingScheme,
};
use crate::scalar::{approx_f64, real, Scalar};
use crate::sysmodel::{expand_operator, SpectralSolution};

/// Projection method selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Sg,
    Ps,
    LspgEnergy,
    LspgIdentity,
    LspgGoal,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Sg,
        Method::Ps,
        Method::LspgEnergy,
        Method::LspgIdentity,
        Method::LspgGoal,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Method::Sg => "sg",
            Method::Ps => "ps",
            Method::LspgEnergy => "lspg-energy",
            Method::LspgIdentity => "lspg-identity",
            Method::LspgGoal => "lspg-goal",
        }
    }

    /// The error measure the method minimizes (for SPD problems).
    pub fn target_measure(&self) -> Measure {
        match self {
            Method::Sg | Method::LspgEnergy => Measure::EtaA,
            Method::LspgIdentity => Measure::EtaR,
            Method::Ps => Measure::EtaE,
            Method::LspgGoal => Measure::EtaQ,
        }
    }

    /// Whether the method solves a coupled system of dimension
    /// `n_x * n_psi` (everything except the non-intrusive projection).
    pub fn is_coupled(&self) -> bool {
        !matches!(self, Method::Ps)
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .iter()
            .copied()
            .find(|m| m.label() == s)
            .ok_or_else(|| Error::Config(format!("unknown method '{s}'")))
    }
}

/// One of the four relative error measures.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Measure {
    EtaA,
    EtaR,
    EtaE,
    EtaQ,
}

impl Measure {
    pub const ALL: [Measure; 4] = [Measure::EtaA, Measure::EtaR, Measure::EtaE, Measure::EtaQ];

    pub fn label(&self) -> &'static str {
        match self {
            Measure::EtaA => "eta_a",
            Measure::EtaR => "eta_r",
            Measure::EtaE => "eta_e",
            Measure::EtaQ => "eta_q",
        }
    }
}

/// Output functional configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum QoiConfig {
    /// Random functional `g(xi) G` with `G` drawn from the recorded seed.
    F1 {
        n_o: usize,
        g: GChoice,
        /// Defaults to the study seed.
        seed: Option<u64>,
    },
    /// Spatial-average functional `f(xi)^T M`.
    F2,
}

/// Serializable mirror of the scalar factor kinds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GChoice {
    Xi,
    Sin,
    ExpAbs,
}

impl From<GChoice> for GKind {
    fn from(choice: GChoice) -> Self {
        match choice {
            GChoice::Xi => GKind::Xi,
            GChoice::Sin => GKind::Sin,
            GChoice::ExpAbs => GKind::ExpAbs,
        }
    }
}

/// Assembly path for the methods that admit a closed-form gPC route.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AssemblyPath {
    Quadrature,
    /// Galerkin and residual-minimizing assembly from the operator's gPC
    /// expansion and moment tensors; the non-intrusive and goal-oriented
    /// methods fall back to quadrature.
    Analytic,
}

/// Coupled-solve strategy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverChoice {
    Direct,
    /// Conjugate gradients on the normal equations, relative tolerance 1e-12.
    Cg,
}

/// Coefficient-field configuration (converted into the working scalar type).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldConfig {
    pub mu: f64,
    pub sigma: f64,
    pub corr_len: f64,
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self {
            mu: 1.0,
            sigma: 0.25,
            corr_len: 2.0,
        }
    }
}

/// Declarative study configuration. Every field has a default; a TOML config
/// file and CLI flags override it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub problem: ProblemKind,
    /// Elements per dimension of the spatial mesh.
    pub mesh: usize,
    pub p_min: usize,
    pub p_max: usize,
    /// Quadrature nodes; 0 picks `max(30, 2 p_max + 12)`.
    pub quad: usize,
    /// Methods to run; empty means every method valid for the problem.
    pub methods: Vec<Method>,
    /// Output functional; `None` picks the problem's default.
    pub qoi: Option<QoiConfig>,
    pub assembly: AssemblyPath,
    /// gPC expansion terms for the analytic path; 0 picks `2p + 1`.
    pub expansion_terms: usize,
    pub solver: SolverChoice,
    pub out: PathBuf,
    pub seed: u64,
    /// Run rows concurrently (thread count from `LSPG_THREADS`). Off by
    /// default so Pareto timings are not distorted.
    pub parallel: bool,
    pub field: FieldConfig,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            problem: ProblemKind::Diffusion1,
            mesh: 8,
            p_min: 0,
            p_max: 8,
            quad: 0,
            methods: Vec::new(),
            qoi: None,
            assembly: AssemblyPath::Quadrature,
            expansion_terms: 0,
            solver: SolverChoice::Direct,
            out: PathBuf::from("study.csv"),
            seed: 7,
            parallel: false,
            field: FieldConfig::default(),
        }
    }
}

impl StudyConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: StudyConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("config parse error: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    /// Methods this study will run: the configured subset, or every method
    /// valid for the problem.
    pub fn effective_methods(&self) -> Vec<Method> {
        if !self.methods.is_empty() {
            return self.methods.clone();
        }
        Method::ALL
            .iter()
            .copied()
            .filter(|m| {
                if *m == Method::LspgEnergy && !self.problem.is_spd() {
                    return false;
                }
                if *m == Method::LspgGoal
                    && self.problem == ProblemKind::ScalarToy
                    && self.qoi.is_none()
                {
                    return false;
                }
                true
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.p_min > self.p_max {
            return Err(Error::Config(format!(
                "p_min ({}) exceeds p_max ({})",
                self.p_min, self.p_max
            )));
        }
        if self.problem != ProblemKind::ScalarToy && self.mesh < 2 {
            return Err(Error::Config(
                "meshed problems need at least 2 elements per dimension".into(),
            ));
        }
        if self.quad != 0 && self.quad < self.p_max + 1 {
            return Err(Error::Config(format!(
                "quadrature with {} nodes cannot resolve degree {}",
                self.quad, self.p_max
            )));
        }
        if self.methods.contains(&Method::LspgEnergy) && !self.problem.is_spd() {
            return Err(Error::Config(format!(
                "the energy weighting requires a symmetric positive definite operator; problem '{}' is not",
                self.problem.label()
            )));
        }
        if let Some(QoiConfig::F1 { n_o, .. }) = &self.qoi {
            if *n_o == 0 {
                return Err(Error::Config("the random functional needs n_o >= 1".into()));
            }
        }
        if matches!(self.qoi, Some(QoiConfig::F2)) && self.problem == ProblemKind::ScalarToy {
            return Err(Error::Config(
                "the spatial-average output needs a meshed problem".into(),
            ));
        }
        let needs_qoi = self.methods.contains(&Method::LspgGoal)
            && self.problem == ProblemKind::ScalarToy
            && self.qoi.is_none();
        if needs_qoi {
            return Err(Error::Config(
                "the goal-oriented method on the scalar toy needs an explicit output functional"
                    .into(),
            ));
        }
        Ok(())
    }

    fn default_qoi(&self) -> Option<QoiConfig> {
        match self.problem {
            ProblemKind::Diffusion1 => Some(QoiConfig::F1 {
                n_o: 20,
                g: GChoice::Xi,
                seed: None,
            }),
            ProblemKind::Diffusion2 | ProblemKind::Diffusion3 => Some(QoiConfig::F2),
            ProblemKind::Convdiff => Some(QoiConfig::F1 {
                n_o: 20,
                g: GChoice::ExpAbs,
                seed: None,
            }),
            ProblemKind::ScalarToy => None,
        }
    }
}

/// One study result row.
#[derive(Clone, Debug, PartialEq)]
pub struct StudyRow {
    pub problem: String,
    pub method: Method,
    pub p: usize,
    pub n_psi: usize,
    pub eta_a: Option<f64>,
    pub eta_r: Option<f64>,
    pub eta_e: Option<f64>,
    pub eta_q: Option<f64>,
    pub assembly_seconds: f64,
    pub solve_seconds: f64,
    pub total_seconds: f64,
    pub warnings: String,
    pub status: String,
}

impl StudyRow {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    pub fn measure(&self, measure: Measure) -> Option<f64> {
        match measure {
            Measure::EtaA => self.eta_a,
            Measure::EtaR => self.eta_r,
            Measure::EtaE => self.eta_e,
            Measure::EtaQ => self.eta_q,
        }
    }
}

/// Row plus per-measure Pareto-front flags, in `Measure::ALL` order.
#[derive(Clone, Debug, PartialEq)]
pub struct ParetoRow {
    pub row: StudyRow,
    pub on_front: [bool; 4],
}

/// Everything a study shares across its rows.
pub struct StudySetup<T> {
    pub problem: Problem<T>,
    pub methods: Vec<Method>,
    pub rule: QuadratureRule<T>,
    pub reference: ReferenceSolution<T>,
    pub qoi: Option<QoIOperator<T>>,
}

/// Build the problem, quadrature rules, shared reference solution, and output
/// functional for a validated configuration.
pub fn prepare_study<T: Scalar>(cfg: &StudyConfig) -> Result<StudySetup<T>> {
    cfg.validate()?;
    let field = FieldParams {
        mu: real::<T>(cfg.field.mu),
        sigma: real::<T>(cfg.field.sigma),
        corr_len: real::<T>(cfg.field.corr_len),
    };
    let problem = build_problem(cfg.problem, cfg.mesh, &field)?;

    let n_q = if cfg.quad == 0 {
        default_rule_size(cfg.p_max)
    } else {
        cfg.quad
    };
    let rule = gauss_rule(&problem.space, n_q)?;
    let ref_rule = gauss_rule(&problem.space, 2 * n_q)?;
    let reference = reference_solution(&problem.system, &ref_rule)?;

    let qoi = match cfg.qoi.clone().or_else(|| cfg.default_qoi()) {
        None => None,
        Some(QoiConfig::F2) => Some(problem.spatial_average_qoi()?),
        Some(QoiConfig::F1 { n_o, g, seed }) => Some(QoIOperator::random_functional(
            n_o,
            problem.system.n_x(),
            g.into(),
            seed.unwrap_or(cfg.seed),
        )),
    };

    Ok(StudySetup {
        methods: cfg.effective_methods(),
        problem,
        rule,
        reference,
        qoi,
    })
}

fn solve_normal_equations_row<T: Scalar>(
    setup: &StudySetup<T>,
    cfg: &StudyConfig,
    weighting: &WeightingScheme<T>,
    p: usize,
) -> Result<(SpectralSolution<T>, f64, f64, String)> {
    let basis = build_basis(&setup.problem.space, p);
    let start = Instant::now();
    let ne = assemble_normal_equations(&setup.problem.system, &basis, &setup.rule, weighting)?;
    let assembly = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let solve: LspgSolve<T> = match cfg.solver {
        SolverChoice::Direct => solve_lspg(&ne, &basis)?,
        SolverChoice::Cg => solve_lspg_cg(&ne, &basis, real::<T>(1e-12), 50 * ne.dim())?,
    };
    let solve_time = start.elapsed().as_secs_f64();

    let warnings = if solve.conditioning_warning {
        format!(
            "condition estimate {:.2e} exceeds 1e14",
            approx_f64(solve.condition_estimate.unwrap_or_else(T::zero))
        )
    } else {
        String::new()
    };
    Ok((solve.solution, assembly, solve_time, warnings))
}

fn analytic_terms(cfg: &StudyConfig, p: usize) -> usize {
    if cfg.expansion_terms == 0 {
        2 * p + 1
    } else {
        cfg.expansion_terms
    }
}

fn solve_analytic_sg_row<T: Scalar>(
    setup: &StudySetup<T>,
    cfg: &StudyConfig,
    p: usize,
) -> Result<(SpectralSolution<T>, f64, f64, String)> {
    let basis = build_basis(&setup.problem.space, p);
    let n_terms = analytic_terms(cfg, p);

    let start = Instant::now();
    let exp = expand_operator(&setup.problem.system, &basis, &setup.rule, n_terms, n_terms)?;
    let tensor_dim = basis.dim().max(n_terms);
    let tensor_basis = build_basis(&setup.problem.space, tensor_dim - 1);
    let tensor_rule = gauss_rule(&setup.problem.space, (3 * (tensor_dim - 1) + 2).div_ceil(2))?;
    let tensors = moment_tensors(&tensor_basis, 3, &tensor_rule)?;
    let system = assemble_analytic_sg(&exp, &tensors)?;
    let assembly = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let coeffs = solve_linear_system(&system.matrix, &system.rhs)?;
    let solve_time = start.elapsed().as_secs_f64();

    let warnings = if system.truncation_warning() {
        format!(
            "gPC truncation error {:.2e} above tolerance",
            approx_f64(system.truncation_error)
        )
    } else {
        String::new()
    };
    let solution = SpectralSolution::new(basis, setup.problem.system.n_x(), coeffs);
    Ok((solution, assembly, solve_time, warnings))
}

fn solve_analytic_ata_row<T: Scalar>(
    setup: &StudySetup<T>,
    cfg: &StudyConfig,
    p: usize,
) -> Result<(SpectralSolution<T>, f64, f64, String)> {
    let basis = build_basis(&setup.problem.space, p);
    let n_terms = analytic_terms(cfg, p);

    let start = Instant::now();
    let exp = expand_operator(&setup.problem.system, &basis, &setup.rule, n_terms, n_terms)?;
    let tensor_dim = basis.dim().max(n_terms);
    let tensor_basis = build_basis(&setup.problem.space, tensor_dim - 1);
    let tensor_rule = gauss_rule(&setup.problem.space, (4 * (tensor_dim - 1) + 2).div_ceil(2))?;
    let tensors = moment_tensors(&tensor_basis, 4, &tensor_rule)?;
    let analytic = assemble_analytic_lspg_ata(&exp, &tensors)?;
    let assembly = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let solve = match cfg.solver {
        SolverChoice::Direct => solve_lspg(&analytic.normal_equations, &basis)?,
        SolverChoice::Cg => solve_lspg_cg(
            &analytic.normal_equations,
            &basis,
            real::<T>(1e-12),
            50 * analytic.normal_equations.dim(),
        )?,
    };
    let solve_time = start.elapsed().as_secs_f64();

    let mut warnings = Vec::new();
    if analytic.truncation_warning() {
        warnings.push(format!(
            "gPC truncation error {:.2e} above tolerance",
            approx_f64(analytic.truncation_error)
        ));
    }
    if solve.conditioning_warning {
        warnings.push("ill-conditioned normal equations".to_string());
    }
    Ok((solve.solution, assembly, solve_time, warnings.join("; ")))
}

/// Compute one `(method, p)` row. Errors are captured in the row status so a
/// study continues past failed rows.
pub fn compute_row<T: Scalar>(
    setup: &StudySetup<T>,
    cfg: &StudyConfig,
    method: Method,
    p: usize,
) -> StudyRow {
    let mut row = StudyRow {
        problem: setup.problem.kind.label().to_string(),
        method,
        p,
        n_psi: p + 1,
        eta_a: None,
        eta_r: None,
        eta_e: None,
        eta_q: None,
        assembly_seconds: 0.0,
        solve_seconds: 0.0,
        total_seconds: 0.0,
        warnings: String::new(),
        status: "ok".to_string(),
    };

    let outcome = (|| -> Result<(SpectralSolution<T>, f64, f64, String)> {
        match (method, cfg.assembly) {
            (Method::Ps, _) => {
                let basis = build_basis(&setup.problem.space, p);
                let start = Instant::now();
                let solution = solve_pseudospectral(&setup.problem.system, &basis, &setup.rule)?;
                Ok((solution, 0.0, start.elapsed().as_secs_f64(), String::new()))
            }
            (Method::Sg, AssemblyPath::Quadrature) => {
                let basis = build_basis(&setup.problem.space, p);
                let start = Instant::now();
                let (matrix, rhs) =
                    assemble_galerkin(&setup.problem.system, &basis, &setup.rule)?;
                let assembly = start.elapsed().as_secs_f64();
                let start = Instant::now();
                let coeffs = solve_linear_system(&matrix, &rhs)?;
                let solve_time = start.elapsed().as_secs_f64();
                let solution =
                    SpectralSolution::new(basis, setup.problem.system.n_x(), coeffs);
                Ok((solution, assembly, solve_time, String::new()))
            }
            (Method::Sg | Method::LspgEnergy, AssemblyPath::Analytic) => {
                solve_analytic_sg_row(setup, cfg, p)
            }
            (Method::LspgIdentity, AssemblyPath::Analytic) => {
                solve_analytic_ata_row(setup, cfg, p)
            }
            (Method::LspgEnergy, AssemblyPath::Quadrature) => {
                solve_normal_equations_row(setup, cfg, &WeightingScheme::EnergyCholesky, p)
            }
            (Method::LspgIdentity, AssemblyPath::Quadrature) => {
                solve_normal_equations_row(setup, cfg, &WeightingScheme::Identity, p)
            }
            (Method::LspgGoal, _) => {
                let qoi = setup.qoi.clone().ok_or_else(|| {
                    Error::Config("the goal-oriented method needs an output functional".into())
                })?;
                solve_normal_equations_row(setup, cfg, &WeightingScheme::GoalOriented(qoi), p)
            }
        }
    })();

    match outcome {
        Ok((solution, assembly, solve_time, warnings)) => {
            row.assembly_seconds = assembly;
            row.solve_seconds = solve_time;
            row.total_seconds = assembly + solve_time;
            row.warnings = warnings;
            match error_report(&solution, &setup.reference, setup.qoi.as_ref()) {
                Ok(report) => {
                    row.eta_a = report.eta_a.map(approx_f64);
                    row.eta_r = Some(approx_f64(report.eta_r));
                    row.eta_e = Some(approx_f64(report.eta_e));
                    row.eta_q = report.eta_q.map(approx_f64);
                }
                Err(e) => {
                    row.status = format!("failed: {e}");
                }
            }
        }
        Err(e) => {
            row.status = format!("failed: {e}");
        }
    }
    row
}

fn thread_count() -> usize {
    std::env::var("LSPG_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
}

fn run_rows<T: Scalar>(setup: &StudySetup<T>, cfg: &StudyConfig) -> Vec<StudyRow> {
    let jobs: Vec<(Method, usize)> = setup
        .methods
        .iter()
        .flat_map(|&m| (cfg.p_min..=cfg.p_max).map(move |p| (m, p)))
        .collect();

    if !cfg.parallel || jobs.len() <= 1 {
        return jobs
            .iter()
            .map(|&(m, p)| compute_row(setup, cfg, m, p))
            .collect();
    }

    let threads = thread_count().min(jobs.len());
    let mut rows: Vec<Option<StudyRow>> = vec![None; jobs.len()];
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for t in 0..threads {
            let jobs = &jobs;
            handles.push(scope.spawn(move || {
                let mut local = Vec::new();
                for (idx, &(m, p)) in jobs.iter().enumerate() {
                    if idx % threads == t {
                        local.push((idx, compute_row(setup, cfg, m, p)));
                    }
                }
                local
            }));
        }
        for handle in handles {
            for (idx, row) in handle.join().expect("study worker panicked") {
                rows[idx] = Some(row);
            }
        }
    });
    rows.into_iter().map(|r| r.expect("row computed")).collect()
}

/// Run a convergence study: one row per `(method, p)`, ordered by method then
/// degree, all sharing one reference solution. Deterministic given the seed.
pub fn run_convergence_study<T: Scalar>(cfg: &StudyConfig) -> Result<Vec<StudyRow>> {
    let setup = prepare_study::<T>(cfg)?;
    Ok(run_rows(&setup, cfg))
}

/// Run the study and flag, per error measure, the rows on the Pareto front of
/// (total time, error). Standard dominance; exact ties keep the row with the
/// smaller polynomial degree (then the earlier row).
pub fn run_pareto_study<T: Scalar>(cfg: &StudyConfig) -> Result<Vec<ParetoRow>> {
    let rows = run_convergence_study::<T>(cfg)?;
    Ok(flag_pareto(rows))
}

/// Mark Pareto-front rows per error measure.
pub fn flag_pareto(rows: Vec<StudyRow>) -> Vec<ParetoRow> {
    let mut out: Vec<ParetoRow> = rows
        .into_iter()
        .map(|row| ParetoRow {
            row,
            on_front: [false; 4],
        })
        .collect();

    for (m_idx, &measure) in Measure::ALL.iter().enumerate() {
        let candidates: Vec<usize> = out
            .iter()
            .enumerate()
            .filter(|(_, r)| r.row.is_ok() && r.row.measure(measure).is_some())
            .map(|(i, _)| i)
            .collect();

        for &i in &candidates {
            let (ti, ei) = (
                out[i].row.total_seconds,
                out[i].row.measure(measure).unwrap(),
            );
            let mut flagged = true;
            for &j in &candidates {
                if i == j {
                    continue;
                }
                let (tj, ej) = (
                    out[j].row.total_seconds,
                    out[j].row.measure(measure).unwrap(),
                );
                let dominates = tj <= ti && ej <= ei && (tj < ti || ej < ei);
                if dominates {
                    flagged = false;
                    break;
                }
                // Exact tie: keep the row with the smaller degree, then the
                // earlier row.
                let tie = tj == ti && ej == ei;
                if tie && (out[j].row.p, j) < (out[i].row.p, i) {
                    flagged = false;
                    break;
                }
            }
            out[i].on_front[m_idx] = flagged;
        }
    }
    out
}

const CSV_HEADER: &str = "problem,method,p,n_psi,eta_a,eta_r,eta_e,eta_q,assembly_seconds,solve_seconds,total_seconds,warnings,status";

fn fmt_float(v: f64) -> String {
    // 12 significant digits.
    format!("{v:.11e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_float).unwrap_or_default()
}

fn sanitize(field: &str) -> String {
    field.replace([',', '\n', '\r'], ";")
}

fn row_line(row: &StudyRow) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{}",
        row.problem,
        row.method.label(),
        row.p,
        row.n_psi,
        fmt_opt(row.eta_a),
        fmt_opt(row.eta_r),
        fmt_opt(row.eta_e),
        fmt_opt(row.eta_q),
        fmt_float(row.assembly_seconds),
        fmt_float(row.solve_seconds),
        fmt_float(row.total_seconds),
        sanitize(&row.warnings),
        sanitize(&row.status),
    )
}

/// Serialize rows to CSV text (header plus one line per row, LF endings,
/// floats at 12 significant digits).
pub fn csv_text(rows: &[StudyRow]) -> String {
    let mut text = String::from(CSV_HEADER);
    text.push('\n');
    for row in rows {
        text.push_str(&row_line(row));
        text.push('\n');
    }
    text
}

/// Serialize Pareto rows: the study columns plus one flag column per measure.
pub fn pareto_csv_text(rows: &[ParetoRow]) -> String {
    let mut text = String::from(CSV_HEADER);
    for measure in Measure::ALL {
        text.push_str(",pareto_");
        text.push_str(measure.label());
    }
    text.push('\n');
    for pr in rows {
        text.push_str(&row_line(&pr.row));
        for flag in pr.on_front {
            text.push(',');
            text.push(if flag { '1' } else { '0' });
        }
        text.push('\n');
    }
    text
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut file = std::fs::File::create(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    file.write_all(text.as_bytes()).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Write study rows as CSV.
pub fn emit_csv(rows: &[StudyRow], path: &Path) -> Result<()> {
    write_text(path, &csv_text(rows))
}

/// Write Pareto-flagged rows as CSV.
pub fn emit_pareto_csv(rows: &[ParetoRow], path: &Path) -> Result<()> {
    write_text(path, &pareto_csv_text(rows))
}

fn parse_opt(field: &str, what: &str) -> Result<Option<f64>> {
    if field.is_empty() {
        return Ok(None);
    }
    field
        .parse::<f64>()
        .map(Some)
        .map_err(|_| Error::CsvParse(format!("bad {what} value '{field}'")))
}

/// Parse study rows back from CSV text (the convergence schema).
pub fn parse_csv(text: &str) -> Result<Vec<StudyRow>> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::CsvParse("empty input".into()))?;
    if header != CSV_HEADER {
        return Err(Error::CsvParse(format!("unexpected header '{header}'")));
    }

    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 13 {
            return Err(Error::CsvParse(format!(
                "line {}: expected 13 fields, found {}",
                lineno + 2,
                fields.len()
            )));
        }
        let parse_usize = |s: &str, what: &str| -> Result<usize> {
            s.parse()
                .map_err(|_| Error::CsvParse(format!("bad {what} value '{s}'")))
        };
        let parse_f64 = |s: &str, what: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::CsvParse(format!("bad {what} value '{s}'")))
        };
        rows.push(StudyRow {
            problem: fields[0].to_string(),
            method: fields[1].parse()?,
            p: parse_usize(fields[2], "p")?,
            n_psi: parse_usize(fields[3], "n_psi")?,
            eta_a: parse_opt(fields[4], "eta_a")?,
            eta_r: parse_opt(fields[5], "eta_r")?,
            eta_e: parse_opt(fields[6], "eta_e")?,
            eta_q: parse_opt(fields[7], "eta_q")?,
            assembly_seconds: parse_f64(fields[8], "assembly_seconds")?,
            solve_seconds: parse_f64(fields[9], "solve_seconds")?,
            total_seconds: parse_f64(fields[10], "total_seconds")?,
            warnings: fields[11].to_string(),
            status: fields[12].to_string(),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_config() -> StudyConfig {
        StudyConfig {
            problem: ProblemKind::ScalarToy,
            p_min: 0,
            p_max: 4,
            ..StudyConfig::default()
        }
    }

    #[test]
    fn config_defaults_round_trip_through_toml() {
        let cfg = StudyConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        let parsed = StudyConfig::from_toml(&text).unwrap();
        assert_eq!(parsed, cfg);
    }

    #[test]
    fn config_parses_sparse_toml() {
        let cfg = StudyConfig::from_toml(
            r#"
problem = "diffusion2"
p_max = 5
methods = ["sg", "ps"]

[qoi]
kind = "f1"
n_o = 10
g = "sin"
"#,
        )
        .unwrap();
        assert_eq!(cfg.problem, ProblemKind::Diffusion2);
        assert_eq!(cfg.p_max, 5);
        assert_eq!(cfg.methods, vec![Method::Sg, Method::Ps]);
        assert_eq!(
            cfg.qoi,
            Some(QoiConfig::F1 {
                n_o: 10,
                g: GChoice::Sin,
                seed: None
            })
        );
    }

    #[test]
    fn config_rejects_energy_weighting_on_nonspd_problems() {
        let cfg = StudyConfig {
            problem: ProblemKind::Convdiff,
            methods: vec![Method::LspgEnergy],
            ..StudyConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn effective_methods_exclude_invalid_ones() {
        let cfg = StudyConfig {
            problem: ProblemKind::Convdiff,
            ..StudyConfig::default()
        };
        let methods = cfg.effective_methods();
        assert!(!methods.contains(&Method::LspgEnergy));
        assert!(methods.contains(&Method::Sg));

        let cfg = toy_config();
        assert!(!cfg.effective_methods().contains(&Method::LspgGoal));
    }

    #[test]
    fn scalar_toy_study_runs_and_is_deterministic() {
        let cfg = toy_config();
        let rows_a = run_convergence_study::<f64>(&cfg).unwrap();
        let rows_b = run_convergence_study::<f64>(&cfg).unwrap();
        assert_eq!(rows_a.len(), 4 * 5);
        for (a, b) in rows_a.iter().zip(&rows_b) {
            assert!(a.is_ok(), "row failed: {}", a.status);
            // Error columns are bit-identical across reruns.
            assert_eq!(a.eta_a.map(f64::to_bits), b.eta_a.map(f64::to_bits));
            assert_eq!(a.eta_r.map(f64::to_bits), b.eta_r.map(f64::to_bits));
            assert_eq!(a.eta_e.map(f64::to_bits), b.eta_e.map(f64::to_bits));
            assert_eq!(a.eta_q.map(f64::to_bits), b.eta_q.map(f64::to_bits));
        }
    }

    #[test]
    fn parallel_run_matches_sequential() {
        let sequential = run_convergence_study::<f64>(&toy_config()).unwrap();
        let parallel_cfg = StudyConfig {
            parallel: true,
            ..toy_config()
        };
        let parallel = run_convergence_study::<f64>(&parallel_cfg).unwrap();
        assert_eq!(sequential.len(), parallel.len());
        for (a, b) in sequential.iter().zip(&parallel) {
            assert_eq!(a.method, b.method);
            assert_eq!(a.p, b.p);
            assert_eq!(a.eta_e.map(f64::to_bits), b.eta_e.map(f64::to_bits));
        }
    }

    #[test]
    fn rows_are_ordered_by_method_then_degree() {
        let cfg = toy_config();
        let rows = run_convergence_study::<f64>(&cfg).unwrap();
        let methods = cfg.effective_methods();
        let mut idx = 0;
        for method in methods {
            for p in cfg.p_min..=cfg.p_max {
                assert_eq!(rows[idx].method, method);
                assert_eq!(rows[idx].p, p);
                assert_eq!(rows[idx].n_psi, p + 1);
                idx += 1;
            }
        }
    }

    #[test]
    fn csv_round_trip() {
        let rows = run_convergence_study::<f64>(&toy_config()).unwrap();
        let text = csv_text(&rows);
        assert!(text.ends_with('\n'));
        let parsed = parse_csv(&text).unwrap();
        assert_eq!(parsed.len(), rows.len());
        // Emitting the parsed rows reproduces the text exactly.
        assert_eq!(csv_text(&parsed), text);
        for (a, b) in rows.iter().zip(&parsed) {
            assert_eq!(a.method, b.method);
            assert_eq!(a.p, b.p);
            let rel = |x: f64, y: f64| (x - y).abs() <= 1e-10 * x.abs().max(1e-300);
            assert!(rel(a.eta_e.unwrap(), b.eta_e.unwrap()));
            assert!(rel(a.total_seconds, b.total_seconds));
        }
    }

    #[test]
    fn empty_rows_emit_header_only() {
        let text = csv_text(&[]);
        assert_eq!(text, format!("{CSV_HEADER}\n"));
        assert!(parse_csv(&text).unwrap().is_empty());
    }

    #[test]
    fn csv_has_constant_column_count() {
        let rows = run_convergence_study::<f64>(&toy_config()).unwrap();
        let text = csv_text(&rows);
        let counts: Vec<usize> = text
            .lines()
            .map(|line| line.split(',').count())
            .collect();
        assert!(counts.iter().all(|&c| c == counts[0]));
    }

    #[test]
    fn pareto_monotone_method_is_fully_flagged() {
        // A single method whose error strictly decreases while time strictly
        // increases has no dominated rows.
        let mut rows = Vec::new();
        for p in 0..5 {
            rows.push(StudyRow {
                problem: "scalar_toy".into(),
                method: Method::Sg,
                p,
                n_psi: p + 1,
                eta_a: Some(1.0 / (p + 1) as f64),
                eta_r: Some(1.0 / (p + 1) as f64),
                eta_e: Some(1.0 / (p + 1) as f64),
                eta_q: None,
                assembly_seconds: 0.0,
                solve_seconds: p as f64 + 1.0,
                total_seconds: p as f64 + 1.0,
                warnings: String::new(),
                status: "ok".into(),
            });
        }
        let flagged = flag_pareto(rows);
        for pr in &flagged {
            assert!(pr.on_front[1], "row p={} should be on the front", pr.row.p);
            assert!(pr.on_front[2]);
            // eta_q absent: never flagged.
            assert!(!pr.on_front[3]);
        }
    }

    #[test]
    fn pareto_duplicate_rows_flag_the_lower_degree() {
        let base = StudyRow {
            problem: "scalar_toy".into(),
            method: Method::Sg,
            p: 3,
            n_psi: 4,
            eta_a: None,
            eta_r: None,
            eta_e: Some(0.5),
            eta_q: None,
            assembly_seconds: 0.0,
            solve_seconds: 1.0,
            total_seconds: 1.0,
            warnings: String::new(),
            status: "ok".into(),
        };
        let mut duplicate = base.clone();
        duplicate.p = 2;
        duplicate.n_psi = 3;
        let flagged = flag_pareto(vec![base, duplicate]);
        assert!(!flagged[0].on_front[2]);
        assert!(flagged[1].on_front[2]);
    }

    #[test]
    fn failed_rows_are_skipped_by_pareto_and_kept_in_csv() {
        let ok = StudyRow {
            problem: "scalar_toy".into(),
            method: Method::Sg,
            p: 0,
            n_psi: 1,
            eta_a: None,
            eta_r: None,
            eta_e: Some(0.5),
            eta_q: None,
            assembly_seconds: 0.0,
            solve_seconds: 1.0,
            total_seconds: 1.0,
            warnings: String::new(),
            status: "ok".into(),
        };
        let mut failed = ok.clone();
        failed.p = 1;
        failed.eta_e = None;
        failed.status = "failed: test".into();
        let flagged = flag_pareto(vec![ok, failed.clone()]);
        assert!(flagged[0].on_front[2]);
        assert!(!flagged[1].on_front[2]);

        let text = csv_text(&[failed]);
        assert!(text.contains("failed: test"));
    }
}
