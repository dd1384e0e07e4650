//! End-to-end solve: cost assembly, relaxation, rounding, certificate, metrics.

use web_time::Instant;

use serde::{Deserialize, Serialize};

use crate::aniso::{assemble_cost, CostMode};
use crate::error::{Error, Result};
use crate::eval::{evaluate, MetricsReport};
use crate::io::{to_row_major, Mat9, Problem};
use crate::rounding::{certify, round_to_rotations, Certificate, DEFAULT_GAP_TOL};
use crate::sdp::{build_program, extract_gram, Formulation};
use crate::so3::Rotation;
use crate::solver::{AdmmBackend, ConicBackend, Residuals, SolverSettings, SolverStatus};
use crate::spectral::spectral_solve;

pub const REPORT_VERSION: &str = "rotavg-report/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Method {
    Sdp(Formulation),
    Spectral,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Sdp(Formulation::O3Iso),
        Method::Sdp(Formulation::O3Aniso),
        Method::Sdp(Formulation::Cso3Iso),
        Method::Sdp(Formulation::Cso3Aniso),
        Method::Spectral,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Sdp(f) => f.name(),
            Method::Spectral => "spectral",
        }
    }

    pub fn formulation(self) -> Option<Formulation> {
        match self {
            Method::Sdp(f) => Some(f),
            Method::Spectral => None,
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "spectral" {
            return Ok(Method::Spectral);
        }
        s.parse::<Formulation>().map(Method::Sdp)
    }
}

impl From<Method> for String {
    fn from(m: Method) -> String {
        m.name().to_string()
    }
}

impl TryFrom<String> for Method {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveOptions {
    pub method: Method,
    /// Interpolation exponent of the weighted measurement `R̃^α M R̃^{1−α}`.
    pub alpha: f64,
    pub gap_tol: f64,
    pub solver: SolverSettings,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            method: Method::Sdp(Formulation::Cso3Aniso),
            alpha: 0.0,
            gap_tol: DEFAULT_GAP_TOL,
            solver: SolverSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSummary {
    pub backend: String,
    pub status: SolverStatus,
    pub iterations: usize,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub residuals: Residuals,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone)]
pub struct MethodOutcome {
    pub method: Method,
    pub rotations: Vec<Rotation>,
    /// Present for optimal SDP solves.
    pub certificate: Option<Certificate>,
    pub solver: Option<SolverSummary>,
    pub runtime_s: f64,
}

impl MethodOutcome {
    pub fn is_optimal(&self) -> bool {
        self.solver
            .as_ref()
            .is_none_or(|s| s.status == SolverStatus::Optimal)
    }
}

/// Percentage of edges whose weight matrix `M` has a negative eigenvalue.
pub fn indefinite_weight_percent(problem: &Problem) -> Result<f64> {
    if problem.edges.is_empty() {
        return Ok(0.0);
    }
    let mut count = 0usize;
    for e in &problem.edges {
        if e.weight()?.is_indefinite() {
            count += 1;
        }
    }
    Ok(100.0 * count as f64 / problem.edges.len() as f64)
}

pub fn run_method(problem: &Problem, options: &SolveOptions) -> Result<MethodOutcome> {
    run_with_backend(problem, options, &AdmmBackend)
}

pub fn run_with_backend(
    problem: &Problem,
    options: &SolveOptions,
    backend: &dyn ConicBackend,
) -> Result<MethodOutcome> {
    let start = Instant::now();
    let formulation = match options.method {
        Method::Spectral => {
            let rotations = spectral_solve(&problem.edges, problem.n_cams)?;
            return Ok(MethodOutcome {
                method: Method::Spectral,
                rotations,
                certificate: None,
                solver: None,
                runtime_s: start.elapsed().as_secs_f64(),
            });
        }
        Method::Sdp(f) => f,
    };
    let mode: CostMode = formulation.cost_mode();
    let cost = assemble_cost(&problem.edges, problem.n_cams, mode, options.alpha)?;
    let program = build_program(&cost, formulation)?;
    let result = backend.solve(&program, &options.solver)?;
    let summary = SolverSummary {
        backend: backend.name().to_string(),
        status: result.status,
        iterations: result.iterations,
        primal_objective: result.primal_objective,
        dual_objective: result.dual_objective,
        residuals: result.residuals,
        wall_time_s: result.wall_time,
    };
    let (certificate, rotations) = if result.status == SolverStatus::Optimal {
        let (cert, rounding) = certify(&cost, &program, &result, options.gap_tol)?;
        (Some(cert), rounding.rotations)
    } else {
        let x = extract_gram(&program, &result.primal)?;
        (None, round_to_rotations(&x)?.rotations)
    };
    Ok(MethodOutcome {
        method: options.method,
        rotations,
        certificate,
        solver: Some(summary),
        runtime_s: start.elapsed().as_secs_f64(),
    })
}

/// Self-contained record of one solve. Re-running with the echoed options
/// reproduces every field except the timings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub version: String,
    pub method: Method,
    pub formulation: Option<Formulation>,
    pub options: SolveOptions,
    pub n_cams: usize,
    pub n_edges: usize,
    pub indefinite_weight_percent: f64,
    pub solver: Option<SolverSummary>,
    pub certificate: Option<Certificate>,
    pub metrics: Option<MetricsReport>,
    pub rotations: Vec<Mat9>,
}

pub fn solve_problem(
    problem: &Problem,
    options: &SolveOptions,
) -> Result<(SolveReport, MethodOutcome)> {
    let outcome = run_method(problem, options)?;
    let metrics = match &problem.ground_truth {
        Some(gt) => Some(evaluate(
            outcome.method.name(),
            gt,
            &outcome.rotations,
            &problem.edges,
            outcome.runtime_s,
        )?),
        None => None,
    };
    let report = SolveReport {
        version: REPORT_VERSION.to_string(),
        method: outcome.method,
        formulation: outcome.method.formulation(),
        options: options.clone(),
        n_cams: problem.n_cams,
        n_edges: problem.edges.len(),
        indefinite_weight_percent: indefinite_weight_percent(problem)?,
        solver: outcome.solver.clone(),
        certificate: outcome.certificate.clone(),
        metrics,
        rotations: outcome
            .rotations
            .iter()
            .map(|r| to_row_major(r.matrix()))
            .collect(),
    };
    Ok((report, outcome))
}
