//! First-order operator-splitting solver for [`ConicProgram`]s.
//!
//! The program `min cᵀx s.t. Ax = b, x ∈ K` is split as
//! `min cᵀx + 𝟙{Ax=b}(x) + 𝟙_K(z)` with consensus `x = z` and solved by
//! over-relaxed ADMM in scaled form:
//!
//! ```text
//! x ← Π_{Ax=b}(z − u − c/ρ)
//! x̃ ← αx + (1 − α)z
//! z ← Π_K(x̃ + u)
//! u ← u + x̃ − z
//! ```
//!
//! The affine projection uses a Cholesky factorisation of `AAᵀ` computed once
//! per solve. `AAᵀ` is factored per group of rows that share variables, which
//! for the rotation-averaging programs makes it block diagonal with 1×1 and
//! 10×10 blocks. The dual slack `s = −ρu` always lies in `K` and is
//! complementary to `z`; equality multipliers are recovered by least squares.

use web_time::Instant;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, Matrix4, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sdp::{smat, svec, svec_index, ConicProgram, PsdCone, SparseMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    pub abs_feas: f64,
    pub rel_feas: f64,
    pub infeas_tol: f64,
    pub max_iters: usize,
    /// Initial ADMM step `ρ`.
    pub rho: f64,
    /// Over-relaxation `α ∈ (0, 2)`.
    pub relaxation: f64,
    pub adaptive_rho: bool,
    /// Residuals are evaluated every this many iterations.
    pub check_every: usize,
    pub equilibrate: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            abs_feas: 1e-5,
            rel_feas: 1e-6,
            infeas_tol: 1e-8,
            max_iters: 500_000,
            rho: 1.0,
            relaxation: 1.5,
            adaptive_rho: true,
            check_every: 10,
            equilibrate: true,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.abs_feas, self.rel_feas, self.infeas_tol, self.rho];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidInput(
                "solver tolerances and step must be positive".into(),
            ));
        }
        if !(self.relaxation > 0.0 && self.relaxation < 2.0) {
            return Err(Error::InvalidInput(format!(
                "relaxation {} outside (0, 2)",
                self.relaxation
            )));
        }
        if self.max_iters == 0 || self.check_every == 0 {
            return Err(Error::InvalidInput(
                "max_iters and check_every must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolverStatus {
    Optimal,
    MaxIters,
    PrimalInfeasible,
    DualInfeasible,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Residuals {
    /// `‖Az − b‖∞` at the cone iterate.
    pub primal: f64,
    /// `‖c − s − Aᵀλ‖∞`.
    pub dual: f64,
    /// `|cᵀz − bᵀλ|`.
    pub gap: f64,
}

#[derive(Debug, Clone)]
pub struct SolverResult {
    /// Cone-feasible primal iterate `z`.
    pub primal: Vec<f64>,
    /// Equality multipliers `λ`.
    pub dual: Vec<f64>,
    /// Dual cone slack `s = c − Aᵀλ` (up to the dual residual).
    pub dual_slack: Vec<f64>,
    pub status: SolverStatus,
    pub iterations: usize,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub residuals: Residuals,
    pub wall_time: f64,
}

/// Seam for swapping the embedded solver against an external one.
pub trait ConicBackend {
    fn name(&self) -> &str;
    fn solve(&self, program: &ConicProgram, settings: &SolverSettings) -> Result<SolverResult>;
}

/// The embedded ADMM solver.
#[derive(Debug, Clone, Copy, Default)]
pub struct AdmmBackend;

impl ConicBackend for AdmmBackend {
    fn name(&self) -> &str {
        "admm"
    }

    fn solve(&self, program: &ConicProgram, settings: &SolverSettings) -> Result<SolverResult> {
        solve(program, settings)
    }
}

/// Frobenius-nearest PSD matrix: negative eigenvalues clamped to zero.
pub fn psd_project(block: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = block.nrows();
    if block.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: block.ncols(),
        });
    }
    let asym = (block - block.transpose()).abs().max();
    if asym > 1e-9 * (1.0 + block.abs().max()) {
        return Err(Error::InvalidInput(format!(
            "psd_project needs a symmetric matrix (asymmetry {asym:.3e})"
        )));
    }
    let mut out = block.clone();
    project_dense(&mut out)?;
    Ok(out)
}

/// In-place PSD projection of a symmetric dense matrix.
fn project_dense(m: &mut DMatrix<f64>) -> Result<()> {
    let d = m.nrows();
    let eig = SymmetricEigen::try_new(m.clone(), f64::EPSILON, 0)
        .ok_or_else(|| Error::Solver("symmetric eigensolver did not converge".into()))?;
    let neg: Vec<usize> = (0..d).filter(|&k| eig.eigenvalues[k] < 0.0).collect();
    if neg.is_empty() {
        return Ok(());
    }
    let pos: Vec<usize> = (0..d).filter(|&k| eig.eigenvalues[k] > 0.0).collect();
    // Rebuild from whichever side has fewer eigenpairs.
    let (keep, sign) = if pos.len() <= neg.len() {
        (pos, 1.0)
    } else {
        (neg, -1.0)
    };
    let mut w = DMatrix::zeros(d, keep.len());
    for (col, &k) in keep.iter().enumerate() {
        let s = eig.eigenvalues[k].abs().sqrt();
        w.column_mut(col)
            .copy_from(&(eig.eigenvectors.column(k) * s));
    }
    let low_rank = &w * w.transpose();
    if sign > 0.0 {
        *m = low_rank;
    } else {
        *m += low_rank;
    }
    Ok(())
}

fn project_cone_block(v: &mut [f64], cone: &PsdCone) -> Result<()> {
    match cone.dim {
        0 => {}
        1 => v[0] = v[0].max(0.0),
        4 => {
            let mut m = Matrix4::zeros();
            for c in 0..4 {
                for r in c..4 {
                    let k = svec_index(4, r, c);
                    let x = if r == c {
                        v[k]
                    } else {
                        v[k] / std::f64::consts::SQRT_2
                    };
                    m[(r, c)] = x;
                    m[(c, r)] = x;
                }
            }
            let eig = SymmetricEigen::new(m);
            if eig.eigenvalues.min() >= 0.0 {
                return Ok(());
            }
            let clamped = eig.eigenvalues.map(|l| l.max(0.0));
            let p =
                eig.eigenvectors * Matrix4::from_diagonal(&clamped) * eig.eigenvectors.transpose();
            for c in 0..4 {
                for r in c..4 {
                    let k = svec_index(4, r, c);
                    v[k] = if r == c {
                        p[(r, c)]
                    } else {
                        std::f64::consts::SQRT_2 * 0.5 * (p[(r, c)] + p[(c, r)])
                    };
                }
            }
        }
        d => {
            let mut m = smat(v, d);
            project_dense(&mut m)?;
            v.copy_from_slice(&svec(&m));
        }
    }
    Ok(())
}

fn project_cones(v: &mut [f64], cones: &[PsdCone]) -> Result<()> {
    for cone in cones {
        project_cone_block(&mut v[cone.range()], cone)?;
    }
    Ok(())
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `x ↦ x − Aᵀ(AAᵀ)⁻¹(Ax − b)` with `AAᵀ` factored per connected row group.
struct AffineProjector {
    groups: Vec<(Vec<usize>, Cholesky<f64, Dyn>)>,
}

impl AffineProjector {
    fn new(a: &SparseMatrix) -> Result<Self> {
        let m = a.nrows;
        let mut parent: Vec<usize> = (0..m).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        let mut owner: Vec<Option<usize>> = vec![None; a.ncols];
        for r in 0..m {
            for (c, _) in a.row(r) {
                match owner[c] {
                    None => owner[c] = Some(r),
                    Some(o) => {
                        let (ra, rb) = (find(&mut parent, o), find(&mut parent, r));
                        if ra != rb {
                            parent[ra] = rb;
                        }
                    }
                }
            }
        }
        let mut by_root: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for r in 0..m {
            let root = find(&mut parent, r);
            by_root.entry(root).or_default().push(r);
        }

        let mut scatter = vec![0.0; a.ncols];
        let mut groups = Vec::with_capacity(by_root.len());
        for rows in by_root.into_values() {
            let k = rows.len();
            let mut gram = DMatrix::zeros(k, k);
            for (p, &rp) in rows.iter().enumerate() {
                for (c, v) in a.row(rp) {
                    scatter[c] = v;
                }
                for (q, &rq) in rows.iter().enumerate().skip(p) {
                    let g: f64 = a.row(rq).map(|(c, v)| v * scatter[c]).sum();
                    gram[(p, q)] = g;
                    gram[(q, p)] = g;
                }
                for (c, _) in a.row(rp) {
                    scatter[c] = 0.0;
                }
            }
            let chol = Cholesky::new(gram).ok_or_else(|| {
                Error::Solver(format!(
                    "equality constraints are rank deficient (rows {:?})",
                    &rows[..rows.len().min(8)]
                ))
            })?;
            groups.push((rows, chol));
        }
        Ok(AffineProjector { groups })
    }

    /// `(AAᵀ)⁻¹ r`
    fn solve_gram(&self, r: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; r.len()];
        for (rows, chol) in &self.groups {
            if rows.len() == 1 {
                out[rows[0]] = r[rows[0]] / chol.l_dirty()[(0, 0)].powi(2);
                continue;
            }
            let rhs = DVector::from_iterator(rows.len(), rows.iter().map(|&i| r[i]));
            let sol = chol.solve(&rhs);
            for (k, &i) in rows.iter().enumerate() {
                out[i] = sol[k];
            }
        }
        out
    }

    fn project(&self, a: &SparseMatrix, b: &[f64], v: &mut [f64]) {
        let mut r = a.mul_vec(v);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri -= bi;
        }
        let w = self.solve_gram(&r);
        for r in 0..a.nrows {
            if w[r] == 0.0 {
                continue;
            }
            for (c, val) in a.row(r) {
                v[c] -= val * w[r];
            }
        }
    }

    /// Least-squares multipliers `argmin ‖Aᵀλ − g‖`.
    fn least_squares(&self, a: &SparseMatrix, g: &[f64]) -> Vec<f64> {
        self.solve_gram(&a.mul_vec(g))
    }
}

/// Diagonal equilibration `Â = E A D` with `D` constant on each cone block.
struct Scaling {
    row: Vec<f64>,
    var: Vec<f64>,
}

impl Scaling {
    fn identity(m: usize, n: usize) -> Self {
        Scaling {
            row: vec![1.0; m],
            var: vec![1.0; n],
        }
    }

    fn ruiz(a: &SparseMatrix, cones: &[PsdCone], passes: usize) -> Self {
        let mut block_of = vec![0usize; a.ncols];
        for (k, cone) in cones.iter().enumerate() {
            for c in cone.range() {
                block_of[c] = k;
            }
        }
        let mut row = vec![1.0; a.nrows];
        let mut block = vec![1.0; cones.len()];
        for _ in 0..passes {
            let mut row_max = vec![0.0f64; a.nrows];
            let mut block_max = vec![0.0f64; cones.len()];
            for r in 0..a.nrows {
                for (c, v) in a.row(r) {
                    let k = block_of[c];
                    let s = (v * row[r] * block[k]).abs();
                    row_max[r] = row_max[r].max(s);
                    block_max[k] = block_max[k].max(s);
                }
            }
            for (e, m) in row.iter_mut().zip(&row_max) {
                if *m > 0.0 {
                    *e = (*e / m.sqrt()).clamp(1e-4, 1e4);
                }
            }
            for (d, m) in block.iter_mut().zip(&block_max) {
                if *m > 0.0 {
                    *d = (*d / m.sqrt()).clamp(1e-4, 1e4);
                }
            }
        }
        let var = block_of.iter().map(|&k| block[k]).collect();
        Scaling { row, var }
    }

    fn apply(&self, a: &SparseMatrix) -> SparseMatrix {
        let mut out = a.clone();
        for r in 0..a.nrows {
            for k in a.row_ptr[r]..a.row_ptr[r + 1] {
                out.vals[k] *= self.row[r] * self.var[a.col_idx[k]];
            }
        }
        out
    }
}

struct Evaluation {
    residuals: Residuals,
    primal_tol: f64,
    dual_tol: f64,
    gap_tol: f64,
    primal_scale: f64,
    dual_scale: f64,
    z: Vec<f64>,
    s: Vec<f64>,
    lambda: Vec<f64>,
    pobj: f64,
    dobj: f64,
}

impl Evaluation {
    fn converged(&self) -> bool {
        self.residuals.primal <= self.primal_tol
            && self.residuals.dual <= self.dual_tol
            && self.residuals.gap <= self.gap_tol
    }
}

struct Workspace<'a> {
    program: &'a ConicProgram,
    settings: &'a SolverSettings,
    scaling: Scaling,
    a_hat: SparseMatrix,
    b_hat: Vec<f64>,
    c_hat: Vec<f64>,
    projector: AffineProjector,
}

impl<'a> Workspace<'a> {
    fn new(program: &'a ConicProgram, settings: &'a SolverSettings) -> Result<Self> {
        let a = &program.constraints;
        let scaling = if settings.equilibrate {
            Scaling::ruiz(a, &program.cones, 25)
        } else {
            Scaling::identity(a.nrows, a.ncols)
        };
        let a_hat = scaling.apply(a);
        let b_hat = program
            .rhs
            .iter()
            .zip(&scaling.row)
            .map(|(b, e)| b * e)
            .collect();
        let c_hat = program
            .objective
            .iter()
            .zip(&scaling.var)
            .map(|(c, d)| c * d)
            .collect();
        let projector = AffineProjector::new(&a_hat)?;
        Ok(Workspace {
            program,
            settings,
            scaling,
            a_hat,
            b_hat,
            c_hat,
            projector,
        })
    }

    fn evaluate(&self, z_hat: &[f64], u_hat: &[f64], rho: f64) -> Evaluation {
        let prog = self.program;
        let a = &prog.constraints;
        let s_hat: Vec<f64> = u_hat.iter().map(|u| -rho * u).collect();
        let z: Vec<f64> = z_hat
            .iter()
            .zip(&self.scaling.var)
            .map(|(z, d)| z * d)
            .collect();
        let s: Vec<f64> = s_hat
            .iter()
            .zip(&self.scaling.var)
            .map(|(s, d)| s / d)
            .collect();

        let g: Vec<f64> = self.c_hat.iter().zip(&s_hat).map(|(c, s)| c - s).collect();
        let lambda_hat = self.projector.least_squares(&self.a_hat, &g);
        let lambda: Vec<f64> = lambda_hat
            .iter()
            .zip(&self.scaling.row)
            .map(|(l, e)| l * e)
            .collect();

        let az = a.mul_vec(&z);
        let primal = az
            .iter()
            .zip(&prog.rhs)
            .map(|(x, b)| (x - b).abs())
            .fold(0.0, f64::max);
        let at_lambda = a.mul_t_vec(&lambda);
        let dual = prog
            .objective
            .iter()
            .zip(&s)
            .zip(&at_lambda)
            .map(|((c, s), al)| (c - s - al).abs())
            .fold(0.0, f64::max);
        let pobj = dot(&prog.objective, &z);
        let dobj = dot(&prog.rhs, &lambda);
        let gap = (pobj - dobj).abs();

        let eps_abs = self.settings.abs_feas;
        let eps_rel = self.settings.rel_feas;
        let primal_scale = norm_inf(&az).max(norm_inf(&prog.rhs));
        let dual_scale = norm_inf(&prog.objective)
            .max(norm_inf(&s))
            .max(norm_inf(&at_lambda));
        Evaluation {
            residuals: Residuals { primal, dual, gap },
            primal_tol: eps_abs + eps_rel * primal_scale,
            dual_tol: eps_abs + eps_rel * dual_scale,
            gap_tol: eps_abs + eps_rel * pobj.abs().max(dobj.abs()),
            primal_scale,
            dual_scale,
            z,
            s,
            lambda,
            pobj,
            dobj,
        }
    }

    fn cone_distance(&self, v: &[f64]) -> Result<f64> {
        let mut p = v.to_vec();
        project_cones(&mut p, &self.program.cones)?;
        Ok(v.iter()
            .zip(&p)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// Farkas direction from the divergence of the dual slack:
    /// `Aᵀy ∈ K`, `bᵀy = −1`.
    fn primal_infeasible(&self, ds_hat: &[f64]) -> Result<bool> {
        if norm_inf(ds_hat) < 1e-12 {
            return Ok(false);
        }
        let y = self.projector.least_squares(&self.a_hat, ds_hat);
        let by = dot(&self.b_hat, &y);
        if by >= 0.0 {
            return Ok(false);
        }
        let p: Vec<f64> = self.a_hat.mul_t_vec(&y).iter().map(|v| v / -by).collect();
        Ok(self.cone_distance(&p)? <= self.settings.infeas_tol)
    }

    /// Recession direction from the divergence of the primal iterate:
    /// `Ad = 0`, `d ∈ K`, `cᵀd = −1`.
    fn dual_infeasible(&self, dz_hat: &[f64]) -> Result<bool> {
        if norm_inf(dz_hat) < 1e-12 {
            return Ok(false);
        }
        let cd = dot(&self.c_hat, dz_hat);
        if cd >= 0.0 {
            return Ok(false);
        }
        let d: Vec<f64> = dz_hat.iter().map(|v| v / -cd).collect();
        let ad = norm_inf(&self.a_hat.mul_vec(&d));
        Ok(ad <= self.settings.infeas_tol && self.cone_distance(&d)? <= self.settings.infeas_tol)
    }
}

/// Runs the embedded ADMM solver.
pub fn solve(program: &ConicProgram, settings: &SolverSettings) -> Result<SolverResult> {
    settings.validate()?;
    let start = Instant::now();
    let n = program.n_vars();
    if program.constraints.ncols != n || program.rhs.len() != program.constraints.nrows {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: program.constraints.ncols,
        });
    }
    let ws = Workspace::new(program, settings)?;
    let alpha = settings.relaxation;
    let mut rho = settings.rho;

    let mut z = vec![0.0; n];
    let mut u = vec![0.0; n];
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut z_prev = vec![0.0; n];
    let mut u_prev = vec![0.0; n];

    let mut last: Option<Evaluation> = None;
    let mut status = SolverStatus::MaxIters;
    let mut iterations = 0;

    for k in 1..=settings.max_iters {
        iterations = k;
        let check = k % settings.check_every == 0 || k == settings.max_iters;
        if check {
            z_prev.copy_from_slice(&z);
            u_prev.copy_from_slice(&u);
        }

        for i in 0..n {
            x[i] = z[i] - u[i] - ws.c_hat[i] / rho;
        }
        ws.projector.project(&ws.a_hat, &ws.b_hat, &mut x);
        for i in 0..n {
            let xt = alpha * x[i] + (1.0 - alpha) * z[i];
            w[i] = xt + u[i];
            z[i] = w[i];
        }
        project_cones(&mut z, &program.cones)?;
        for i in 0..n {
            u[i] = w[i] - z[i];
        }

        if !check {
            continue;
        }
        if !w.iter().all(|v| v.is_finite()) {
            return Err(Error::Solver(format!(
                "non-finite iterate at iteration {k}"
            )));
        }
        let eval = ws.evaluate(&z, &u, rho);
        if eval.converged() {
            last = Some(eval);
            status = SolverStatus::Optimal;
            break;
        }
        let du: Vec<f64> = u.iter().zip(&u_prev).map(|(a, b)| -rho * (a - b)).collect();
        if ws.primal_infeasible(&du)? {
            last = Some(eval);
            status = SolverStatus::PrimalInfeasible;
            break;
        }
        let dz: Vec<f64> = z.iter().zip(&z_prev).map(|(a, b)| a - b).collect();
        if ws.dual_infeasible(&dz)? {
            last = Some(eval);
            status = SolverStatus::DualInfeasible;
            break;
        }

        if settings.adaptive_rho {
            let rp = eval.residuals.primal / eval.primal_scale.max(1e-10);
            let rd = eval.residuals.dual / eval.dual_scale.max(1e-10);
            if rp > 0.0 && rd > 0.0 {
                let ratio = (rp / rd).sqrt();
                if !(0.2..=5.0).contains(&ratio) {
                    let new_rho = (rho * ratio).clamp(1e-6, 1e6);
                    let f = rho / new_rho;
                    u.iter_mut().for_each(|v| *v *= f);
                    rho = new_rho;
                }
            }
        }
        last = Some(eval);
    }

    let eval = match last {
        Some(e) => e,
        None => ws.evaluate(&z, &u, rho),
    };
    Ok(SolverResult {
        primal: eval.z,
        dual: eval.lambda,
        dual_slack: eval.s,
        status,
        iterations,
        primal_objective: eval.pobj,
        dual_objective: eval.dobj,
        residuals: eval.residuals,
        wall_time: start.elapsed().as_secs_f64(),
    })
}
