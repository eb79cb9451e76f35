//! Configuration-driven experiment runner: builds the mesh, decomposes the
//! data, solves the modes, minimizes the majorants and writes the tables.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use nalgebra::Point3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::edge_fem::Coefficients;
use crate::error::Error;
use crate::estimator::{
    minimize_forward, minimize_ocp, stability_constants, Context, ErrorNorms, FluxSpace, ForwardInputs,
    MajorantReport, MinimizeConfig, OcpInputs, SpatialData,
};
use crate::harmonics::{remainder, PeriodSpec, TimeQuadrature};
use crate::mesh::{build_box_mesh, BoxDomain};
use crate::minres::{MinresConfig, SolveStats};
use crate::presets::{default_friedrichs, exact_forward_modes, exact_ocp_modes, field_error, uniform_coefficients, Preset, ProblemData};
use crate::systems::{reconstruct, solve_forward_modes, solve_ocp_modes, ControlParams, Discretization, ModeSolution};

/// Relative slack of the guaranteed-bound check `I_eff ≥ 1 − slack`.
pub const BOUND_SLACK: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("guaranteed bound violated: {0}")]
    Bound(String),
    #[error(transparent)]
    Numerics(#[from] Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl RunError {
    /// Process exit code: 2 configuration, 3 solver or numerics, 4 bound violation.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) | RunError::Json(_) => 2,
            RunError::Solver(_) | RunError::Numerics(_) | RunError::Io(_) => 3,
            RunError::Bound(_) => 4,
        }
    }
}

pub type RunResult<T> = std::result::Result<T, RunError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Problem {
    Forward,
    Ocp,
}

/// Axis-aligned region carrying a coefficient value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
    pub value: f64,
}

/// A constant, or a background value overridden in boxes (last match wins).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CoefficientSpec {
    Constant(f64),
    Regions { background: f64, regions: Vec<Region> },
}

impl CoefficientSpec {
    pub fn at(&self, x: &Point3<f64>) -> f64 {
        match self {
            CoefficientSpec::Constant(v) => *v,
            CoefficientSpec::Regions { background, regions } => regions
                .iter()
                .rev()
                .find(|r| (0..3).all(|i| x[i] >= r.lo[i] && x[i] <= r.hi[i]))
                .map_or(*background, |r| r.value),
        }
    }

    fn values(&self) -> Vec<f64> {
        match self {
            CoefficientSpec::Constant(v) => vec![*v],
            CoefficientSpec::Regions { background, regions } => {
                std::iter::once(*background).chain(regions.iter().map(|r| r.value)).collect()
            }
        }
    }
}

fn default_n() -> usize {
    2
}
fn default_lengths() -> [f64; 3] {
    [1.0; 3]
}
fn default_period() -> f64 {
    2.0 * PI
}
fn default_truncation() -> usize {
    1
}
fn unit_coefficient() -> CoefficientSpec {
    CoefficientSpec::Constant(1.0)
}
fn default_alphas() -> Vec<f64> {
    vec![1.0]
}
fn default_gauge_tol() -> f64 {
    1e-6
}
fn default_preset() -> Preset {
    Preset::PaperForward
}
fn default_problem() -> Problem {
    Problem::Forward
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Cells per box side.
    #[serde(default = "default_n")]
    pub mesh_n: usize,
    #[serde(default = "default_lengths")]
    pub lengths: [f64; 3],
    #[serde(default = "default_period")]
    pub period: f64,
    #[serde(default = "default_truncation")]
    pub truncation: usize,
    #[serde(default = "unit_coefficient")]
    pub sigma: CoefficientSpec,
    #[serde(default = "unit_coefficient")]
    pub nu: CoefficientSpec,
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    #[serde(default)]
    pub minres: MinresConfig,
    #[serde(default)]
    pub majorant: MinimizeConfig,
    /// Overrides the default box Friedrichs constant.
    #[serde(default)]
    pub friedrichs: Option<f64>,
    #[serde(default = "default_problem")]
    pub problem: Problem,
    #[serde(default = "default_preset")]
    pub preset: Preset,
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Admissible relative gradient defect of the mean-mode forward load.
    #[serde(default = "default_gauge_tol")]
    pub gauge_tol: f64,
    #[serde(default)]
    pub time_quadrature: TimeQuadrature,
    /// Estimate the interpolated exact solution instead of the discrete one.
    #[serde(default)]
    pub substitute_exact: bool,
    #[serde(default)]
    pub write_mesh: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> RunResult<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| RunError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> RunResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> RunResult<()> {
        let bad = |m: String| Err(RunError::Config(m));
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if self.mesh_n == 0 {
            return bad("mesh_n must be at least 1".into());
        }
        if !self.lengths.iter().all(|l| pos(*l)) {
            return bad(format!("box lengths must be positive, got {:?}", self.lengths));
        }
        if !pos(self.period) {
            return bad(format!("period must be positive, got {}", self.period));
        }
        for (name, c) in [("sigma", &self.sigma), ("nu", &self.nu)] {
            if !c.values().into_iter().all(pos) {
                return bad(format!("{name} values must be positive"));
            }
        }
        if self.alphas.is_empty() || !self.alphas.iter().all(|a| pos(*a)) {
            return bad(format!("alphas must be a nonempty list of positive values, got {:?}", self.alphas));
        }
        if !pos(self.minres.tol) || self.minres.maxit == 0 {
            return bad("MINRES tolerance and maxit must be positive".into());
        }
        if !pos(self.majorant.tol) || self.majorant.maxit == 0 {
            return bad("majorant tolerance and maxit must be positive".into());
        }
        if let Some(cf) = self.friedrichs {
            if !pos(cf) {
                return bad(format!("friedrichs must be positive, got {cf}"));
            }
        }
        if !pos(self.gauge_tol) {
            return bad("gauge_tol must be positive".into());
        }
        if self.time_quadrature.panels == 0 || self.time_quadrature.points == 0 {
            return bad("time quadrature needs at least one panel and one point".into());
        }
        if self.time_quadrature.len() < 4 * (self.truncation + 1) {
            return bad(format!(
                "time quadrature with {} samples cannot resolve {} modes",
                self.time_quadrature.len(),
                self.truncation
            ));
        }
        Ok(())
    }

    pub fn domain(&self) -> BoxDomain {
        BoxDomain::with_lengths(self.lengths)
    }

    pub fn friedrichs_constant(&self) -> f64 {
        self.friedrichs.unwrap_or_else(|| default_friedrichs(&self.domain()))
    }

    pub fn period_spec(&self) -> RunResult<PeriodSpec> {
        Ok(PeriodSpec::new(self.period, self.truncation)?)
    }

    pub fn discretization(&self) -> RunResult<Discretization> {
        let mesh = build_box_mesh(self.mesh_n, self.domain())?;
        let coeffs = Coefficients::from_fn(&mesh, |x| (self.sigma.at(x), self.nu.at(x)))?;
        Ok(Discretization::new(mesh, coeffs)?)
    }
}

/// Per-mode MINRES summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSolve {
    pub k: usize,
    pub iterations: usize,
    pub relative_residual: f64,
    pub wall_time: f64,
    pub converged: bool,
}

impl ModeSolve {
    fn new(k: usize, s: &SolveStats) -> Self {
        ModeSolve {
            k,
            iterations: s.iterations,
            relative_residual: s.relative_residual,
            wall_time: s.wall_time,
            converged: s.converged,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshSummary {
    pub n: usize,
    pub vertices: usize,
    pub edges: usize,
    pub tets: usize,
    pub interior_dofs: usize,
    pub flux_dofs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForwardReport {
    pub mesh: MeshSummary,
    pub solves: Vec<ModeSolve>,
    pub modes: Vec<MajorantReport>,
    pub total: MajorantReport,
    pub exact_available: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcpAlphaReport {
    pub alpha: f64,
    pub solves: Vec<ModeSolve>,
    pub modes: Vec<MajorantReport>,
    pub total: MajorantReport,
    /// Squared state error (seminorm, norm) when the exact solution is known.
    pub state_error: Option<ErrorNorms>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcpReport {
    pub mesh: MeshSummary,
    pub alphas: Vec<OcpAlphaReport>,
    pub exact_available: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "problem", rename_all = "lowercase")]
pub enum Report {
    Forward(ForwardReport),
    Ocp(OcpReport),
}

/// Shared setup of both runners.
struct Setup {
    d: Discretization,
    flux: FluxSpace,
    data: ProblemData,
    spatial: SpatialData,
    period: PeriodSpec,
    remainder: f64,
}

impl Setup {
    fn new(cfg: &RunConfig) -> RunResult<Self> {
        cfg.validate()?;
        let period = cfg.period_spec()?;
        let d = cfg.discretization()?;
        info!("mesh n={}: {} tets, {} interior edges", cfg.mesh_n, d.mesh.num_tets(), d.dim());
        let flux = FluxSpace::new(&d);
        let data = ProblemData::new(&cfg.preset, cfg.domain(), period);
        let spatial = SpatialData::new(&d, &flux, &*data.field);
        let remainder = remainder(&data.signal, data.shape.norm_sq(), &period, &cfg.time_quadrature)?;
        Ok(Setup { d, flux, data, spatial, period, remainder })
    }

    fn mesh_summary(&self, n: usize) -> MeshSummary {
        MeshSummary {
            n,
            vertices: self.d.mesh.num_vertices(),
            edges: self.d.mesh.num_edges(),
            tets: self.d.mesh.num_tets(),
            interior_dofs: self.d.dim(),
            flux_dofs: self.flux.dim(),
        }
    }
}

fn add_errors(a: ErrorNorms, b: ErrorNorms) -> ErrorNorms {
    ErrorNorms { seminorm_sq: a.seminorm_sq + b.seminorm_sq, norm_sq: a.norm_sq + b.norm_sq }
}

fn check_solves(solutions: &[ModeSolution]) -> Vec<ModeSolve> {
    solutions.iter().map(|s| ModeSolve::new(s.k, &s.stats)).collect()
}

/// Solves the forward problem and minimizes its majorants.
pub fn run_forward(cfg: &RunConfig) -> RunResult<(ForwardReport, Vec<(usize, SolveStats)>)> {
    let s = Setup::new(cfg)?;
    let n = cfg.truncation;
    let loads = s.data.loads(&s.d);
    let solutions = solve_forward_modes(&s.d, &loads, &s.period, &cfg.minres, cfg.gauge_tol)?;
    let solves = check_solves(&solutions);
    info!("solved {} forward modes", solutions.len());
    let traces = solutions.iter().map(|m| (m.k, m.stats.clone())).collect();
    let (y, _) = reconstruct(&solutions, n)?;

    let exact = uniform_coefficients(&s.d.coeffs)
        .map(|(sigma, nu)| exact_forward_modes(&s.data.coeffs, &s.period, sigma, nu, s.data.shape.eigenvalue()));
    let eta = match (&exact, cfg.substitute_exact) {
        (Some(amp), true) => s.data.interpolate(&s.d, amp),
        (None, true) => return Err(RunError::Config("substitute_exact needs uniform coefficients".into())),
        _ => y,
    };
    let errors = exact
        .as_ref()
        .map(|amp| field_error(&s.d, &s.data.shape, &s.period, amp, &eta))
        .transpose()?;

    let consts = stability_constants(
        (s.d.coeffs.sigma_min, s.d.coeffs.sigma_max),
        (s.d.coeffs.nu_min, s.d.coeffs.nu_max),
        None,
        cfg.friedrichs_constant(),
        Context::ForwardSeminorm,
    )?;
    let inp = ForwardInputs {
        d: &s.d,
        flux: &s.flux,
        period: s.period,
        data: &s.spatial,
        data_coeffs: s.data.truncated(),
        eta: &eta,
        consts,
    };
    let mut modes = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let err = errors.as_ref().map(|(per, _)| per[k]);
        let (rep, _) = minimize_forward(&inp, &[k], 0.0, err, &cfg.majorant)?;
        info!("forward k={k}: M²={:.6e} after {} iterations", rep.majorant_sq, rep.iterations);
        modes.push(rep);
    }
    let all: Vec<usize> = (0..=n).collect();
    let (total, _) = minimize_forward(&inp, &all, s.remainder, errors.as_ref().map(|e| e.1), &cfg.majorant)?;
    let report =
        ForwardReport { mesh: s.mesh_summary(cfg.mesh_n), solves, modes, total, exact_available: errors.is_some() };
    Ok((report, traces))
}

/// Solves the optimality system for every cost parameter and minimizes the majorants.
pub fn run_ocp(cfg: &RunConfig) -> RunResult<(OcpReport, Vec<(f64, usize, SolveStats)>)> {
    let s = Setup::new(cfg)?;
    let n = cfg.truncation;
    let loads = s.data.loads(&s.d);
    let cf = cfg.friedrichs_constant();
    let uniform = uniform_coefficients(&s.d.coeffs);
    let mut alphas = Vec::with_capacity(cfg.alphas.len());
    let mut traces = Vec::new();
    for &alpha in &cfg.alphas {
        let control = ControlParams::new(alpha)?;
        let solutions = solve_ocp_modes(&s.d, control, &loads, &s.period, &cfg.minres)?;
        traces.extend(solutions.iter().map(|m| (alpha, m.k, m.stats.clone())));
        let solves = check_solves(&solutions);
        let (y, p) = reconstruct(&solutions, n)?;
        let p = p.ok_or(Error::MissingMode(0))?;

        let exact = uniform.map(|(sigma, nu)| {
            exact_ocp_modes(&s.data.coeffs, &s.period, sigma, nu, s.data.shape.eigenvalue(), alpha)
        });
        let (eta, zeta) = match (&exact, cfg.substitute_exact) {
            (Some((ya, pa)), true) => (s.data.interpolate(&s.d, ya), s.data.interpolate(&s.d, pa)),
            (None, true) => return Err(RunError::Config("substitute_exact needs uniform coefficients".into())),
            _ => (y, p),
        };
        let errors = exact
            .as_ref()
            .map(|(ya, pa)| -> RunResult<_> {
                let (ey, ey_total) = field_error(&s.d, &s.data.shape, &s.period, ya, &eta)?;
                let (ep, ep_total) = field_error(&s.d, &s.data.shape, &s.period, pa, &zeta)?;
                let per: Vec<ErrorNorms> = ey.iter().zip(&ep).map(|(a, b)| add_errors(*a, *b)).collect();
                Ok((per, add_errors(ey_total, ep_total), ey_total))
            })
            .transpose()?;

        let consts = stability_constants(
            (s.d.coeffs.sigma_min, s.d.coeffs.sigma_max),
            (s.d.coeffs.nu_min, s.d.coeffs.nu_max),
            Some(alpha),
            cf,
            Context::OcpSeminorm,
        )?;
        let inp = OcpInputs {
            d: &s.d,
            flux: &s.flux,
            period: s.period,
            alpha,
            data: &s.spatial,
            data_coeffs: s.data.truncated(),
            eta: &eta,
            zeta: &zeta,
            consts,
        };
        let mut modes = Vec::with_capacity(n + 1);
        for k in 0..=n {
            let err = errors.as_ref().map(|e| e.0[k]);
            modes.push(minimize_ocp(&inp, &[k], 0.0, err, &cfg.majorant)?.0);
        }
        let all: Vec<usize> = (0..=n).collect();
        let (total, _, _) = minimize_ocp(&inp, &all, s.remainder, errors.as_ref().map(|e| e.1), &cfg.majorant)?;
        info!("ocp α={alpha:e}: M²={:.6e}", total.majorant_sq);
        alphas.push(OcpAlphaReport { alpha, solves, modes, total, state_error: errors.map(|e| e.2) });
    }
    let report = OcpReport { mesh: s.mesh_summary(cfg.mesh_n), alphas, exact_available: uniform.is_some() };
    Ok((report, traces))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.12e}"))
}

/// Trace table `iteration,ctime,beta...,majorant_sq,i_eff`.
pub fn trace_csv(rep: &MajorantReport) -> String {
    let nb = rep.betas.len();
    let mut out = String::from("iteration,ctime");
    if nb == 1 {
        out.push_str(",beta");
    } else {
        (1..=nb).for_each(|i| write!(out, ",beta{i}").expect("string write"));
    }
    out.push_str(",majorant_sq,i_eff\n");
    for t in &rep.trace {
        write!(out, "{},{:.6}", t.iteration, t.ctime).expect("string write");
        for b in &t.betas {
            write!(out, ",{b:.12e}").expect("string write");
        }
        writeln!(out, ",{:.12e},{}", t.majorant_sq, fmt_opt(t.i_eff)).expect("string write");
    }
    out
}

/// Cost-parameter table `alpha,ctime,majorant_sq,i_eff` for one mode (or the total).
pub fn alpha_csv(rows: &[(f64, &MajorantReport)]) -> String {
    let mut out = String::from("alpha,ctime,majorant_sq,i_eff\n");
    for (alpha, rep) in rows {
        writeln!(out, "{alpha:e},{:.6},{:.12e},{}", rep.ctime, rep.majorant_sq, fmt_opt(rep.efficiency_index))
            .expect("string write");
    }
    out
}

fn minres_csv(stats: &SolveStats) -> String {
    let mut out = String::from("iteration,relative_residual\n");
    for (i, r) in &stats.trace {
        writeln!(out, "{i},{r:.12e}").expect("string write");
    }
    out
}

/// Every efficiency index in a set of reports; `None` entries are skipped.
fn indices<'a>(reps: impl IntoIterator<Item = &'a MajorantReport>) -> Vec<(Vec<usize>, f64)> {
    reps.into_iter().filter_map(|r| r.efficiency_index.map(|i| (r.modes.clone(), i))).collect()
}

/// Post-run checks shared by the CLI: solver convergence, then the guaranteed bound.
pub fn check_report(report: &Report) -> RunResult<()> {
    let (solves, reps): (Vec<&ModeSolve>, Vec<&MajorantReport>) = match report {
        Report::Forward(f) => (f.solves.iter().collect(), f.modes.iter().chain([&f.total]).collect()),
        Report::Ocp(o) => (
            o.alphas.iter().flat_map(|a| &a.solves).collect(),
            o.alphas.iter().flat_map(|a| a.modes.iter().chain([&a.total])).collect(),
        ),
    };
    if let Some(s) = solves.iter().find(|s| !s.converged) {
        return Err(RunError::Solver(format!(
            "MINRES for mode {} stopped at relative residual {:.3e} after {} iterations",
            s.k, s.relative_residual, s.iterations
        )));
    }
    if let Some((modes, i)) = indices(reps).into_iter().find(|(_, i)| *i < 1.0 - BOUND_SLACK) {
        return Err(RunError::Bound(format!("efficiency index {i:.6} < 1 on modes {modes:?}")));
    }
    Ok(())
}

/// Runs the configured problem and writes tables, `report.json` and
/// optional MINRES traces and mesh dump into `out`.
pub fn run_and_write(cfg: &RunConfig, out: &Path, verbose: bool) -> RunResult<Report> {
    let mut cfg = cfg.clone();
    cfg.minres.trace |= verbose;
    fs::create_dir_all(out)?;
    let report = match cfg.problem {
        Problem::Forward => {
            let (rep, traces) = run_forward(&cfg)?;
            for m in &rep.modes {
                fs::write(out.join(format!("table_forward_k{}.csv", m.modes[0])), trace_csv(m))?;
            }
            fs::write(out.join("table_forward_total.csv"), trace_csv(&rep.total))?;
            if verbose {
                for (k, st) in &traces {
                    fs::write(out.join(format!("minres_forward_k{k}.csv")), minres_csv(st))?;
                }
            }
            Report::Forward(rep)
        }
        Problem::Ocp => {
            let (rep, traces) = run_ocp(&cfg)?;
            for k in 0..=cfg.truncation {
                let rows: Vec<(f64, &MajorantReport)> = rep.alphas.iter().map(|a| (a.alpha, &a.modes[k])).collect();
                fs::write(out.join(format!("table_ocp_k{k}.csv")), alpha_csv(&rows))?;
            }
            let rows: Vec<(f64, &MajorantReport)> = rep.alphas.iter().map(|a| (a.alpha, &a.total)).collect();
            fs::write(out.join("table_ocp_total.csv"), alpha_csv(&rows))?;
            if verbose {
                for (i, (_, k, st)) in traces.iter().enumerate() {
                    let a = i / (cfg.truncation + 1);
                    fs::write(out.join(format!("minres_ocp_a{a}_k{k}.csv")), minres_csv(st))?;
                }
            }
            Report::Ocp(rep)
        }
    };
    let doc = serde_json::json!({ "config": cfg, "report": report });
    fs::write(out.join("report.json"), serde_json::to_string_pretty(&doc)?)?;
    if cfg.write_mesh {
        let mesh = build_box_mesh(cfg.mesh_n, cfg.domain())?;
        fs::write(out.join("mesh.txt"), mesh.dump())?;
    }
    check_report(&report)?;
    Ok(report)
}

/// One row of the verification table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl Check {
    fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        Check { name: name.into(), value, threshold, passed: value <= threshold }
    }

    fn at_least(name: &str, value: f64, threshold: f64) -> Self {
        Check { name: name.into(), value, threshold, passed: value >= threshold }
    }
}

pub fn format_checks(checks: &[Check]) -> String {
    let mut out = String::new();
    for c in checks {
        let status = if c.passed { "PASS" } else { "FAIL" };
        writeln!(out, "{status}  {:<40} value {:>12.4e}  threshold {:>10.3e}", c.name, c.value, c.threshold)
            .expect("string write");
    }
    out
}

/// Oracle suite: element quadrature, gradient kernel, Parseval identity,
/// dense-solve agreement, Friedrichs eigenvalue and the guaranteed bound
/// on a small forward run with the configured Friedrichs constant.
pub fn verify(cfg: &RunConfig) -> RunResult<Vec<Check>> {
    use crate::edge_fem::{element_matrices, TetGeometry};
    use crate::harmonics::{signal_energy, ExpTrig, ExpTrigTerm};
    use crate::quadrature::tet_degree5;
    use crate::sparse::norm2;
    use crate::systems::{build_forward, build_forward0, build_ocp, build_ocp0, dense_reference};

    cfg.validate()?;
    let mut checks = Vec::new();

    // element matrices against degree-5 quadrature of the basis functions
    let g = TetGeometry::new([
        Point3::new(0.1, 0.0, 0.2),
        Point3::new(1.0, 0.3, 0.0),
        Point3::new(0.2, 0.9, 0.1),
        Point3::new(0.3, 0.2, 1.1),
    ])?;
    let em = element_matrices(&g, 1.0, 1.0);
    let mut q = [[0.0; 6]; 6];
    for (bary, w) in tet_degree5().iter() {
        let phi = g.basis(bary);
        for a in 0..6 {
            for b in 0..6 {
                q[a][b] += w * g.volume * phi[a].dot(&phi[b]);
            }
        }
    }
    let quad_err = (0..36).map(|i| (q[i / 6][i % 6] - em.mass[i / 6][i % 6]).abs()).fold(0.0, f64::max);
    checks.push(Check::at_most("element mass vs quadrature", quad_err, 1e-13));

    // gradient kernel of the curl-curl matrix
    let d = cfg.discretization()?;
    let psi: Vec<f64> = (0..d.gradient.nodes.len()).map(|i| ((i * 7919) % 97) as f64 / 97.0 - 0.5).collect();
    let kg = d.stiffness.mul_vec(&d.gradient.apply(&psi));
    checks.push(Check::at_most("curl-curl annihilates gradients", kg.iter().fold(0.0, |m, v| m.max(v.abs())), 1e-11));

    // Parseval: a trigonometric polynomial has no tail beyond its top mode
    let period = PeriodSpec::new(cfg.period, 3)?;
    let w = period.omega;
    let trig = ExpTrig {
        terms: vec![
            ExpTrigTerm { rate: 0.0, freq: 0.0, cos_amp: 0.7, sin_amp: 0.0 },
            ExpTrigTerm { rate: 0.0, freq: w, cos_amp: -0.4, sin_amp: 1.1 },
            ExpTrigTerm { rate: 0.0, freq: 3.0 * w, cos_amp: 0.25, sin_amp: -0.6 },
        ],
    };
    let energy = signal_energy(&trig, &period, &cfg.time_quadrature)?;
    let tail = remainder(&trig, 1.0, &period, &cfg.time_quadrature)?;
    checks.push(Check::at_most("Parseval tail of a trig polynomial", tail / energy, 1e-8));

    // dense direct solves on the single-cell mesh
    let small = RunConfig { mesh_n: 1, ..cfg.clone() }.discretization()?;
    let tight = MinresConfig { tol: 1e-13, maxit: 5000, trace: false };
    let p1 = PeriodSpec::new(cfg.period, 1)?;
    let nd = small.dim();
    let a: Vec<f64> = (0..nd).map(|i| (i as f64 * 0.37).sin()).collect();
    let b: Vec<f64> = (0..nd).map(|i| (i as f64 * 0.91).cos()).collect();
    let mut systems = vec![
        build_forward(1, &small, &p1, &a, &b)?,
        build_forward0(&small, &small.project_load(&a).0, cfg.gauge_tol)?,
    ];
    for alpha in [0.1, 1.0, 10.0] {
        let ctl = ControlParams::new(alpha)?;
        systems.push(build_ocp(1, &small, ctl, &p1, &a, &b)?);
        systems.push(build_ocp0(&small, ctl, &a)?);
    }
    let mut worst = 0.0f64;
    for sys in &systems {
        let (x, _) = sys.solve_raw(&small, &tight)?;
        let reference = dense_reference(&small, sys)?;
        let diff: Vec<f64> = x.iter().zip(&reference).map(|(u, v)| u - v).collect();
        worst = worst.max(norm2(&diff) / norm2(&reference).max(f64::MIN_POSITIVE));
    }
    checks.push(Check::at_most("MINRES vs dense solve (n=1)", worst, 1e-8));

    // discrete Maxwell eigenvalue against the Friedrichs constant
    let eig_cfg = RunConfig { mesh_n: 4, ..cfg.clone() };
    let lambda = crate::systems::smallest_maxwell_eigenvalue(&eig_cfg.discretization()?)?;
    let cf = cfg.friedrichs_constant();
    checks.push(Check::at_least("Maxwell eigenvalue / C_F^-2 (n=4)", lambda * cf * cf, 0.9));

    // guaranteed bound on a small forward run
    let run_cfg = RunConfig { mesh_n: 2, truncation: 1, problem: Problem::Forward, ..cfg.clone() };
    let (rep, _) = run_forward(&run_cfg)?;
    let worst_ieff = indices(rep.modes.iter().chain([&rep.total])).into_iter().map(|(_, i)| i).fold(f64::INFINITY, f64::min);
    if worst_ieff.is_finite() {
        checks.push(Check::at_least("guaranteed bound, min I_eff (n=2)", worst_ieff, 1.0 - BOUND_SLACK));
    }
    Ok(checks)
}
