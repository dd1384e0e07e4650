//! Standard-form cone programs for the four relaxations.
//!
//! Every program has the shape
//!
//! ```text
//! minimise  cᵀx   subject to  A x = b,  x ∈ S₊(d₀) × S₊(d₁) × …
//! ```
//!
//! where each PSD block is stored in `svec` form: the lower triangle in
//! column-major order (column `j` holds rows `j..d`), diagonal entries as is
//! and off-diagonal entries multiplied by `√2`. With this convention
//! `svec(A)·svec(B) = ⟨A, B⟩_F` for symmetric `A`, `B`.
//!
//! Block 0 is always the 3n×3n Gram matrix `X`. The convex-hull variants add
//! one 4×4 block `S_ij = A(X_ij) + I` per measured pair, in the order of
//! [`ProgramIndex::hull_edges`].

use std::f64::consts::SQRT_2;

use nalgebra::{DMatrix, Matrix3};
use serde::{Deserialize, Serialize};

use crate::aniso::{CostMatrix, CostMode};
use crate::error::{Error, Result};
use crate::so3::{hull_operator, Rotation};

/// Number of `svec` entries of a `d×d` symmetric matrix.
pub fn svec_len(d: usize) -> usize {
    d * (d + 1) / 2
}

/// Position of entry `(i, j)` (either triangle) inside `svec` of a `d×d` block.
pub fn svec_index(d: usize, i: usize, j: usize) -> usize {
    let (r, c) = if i >= j { (i, j) } else { (j, i) };
    c * d - c * c.saturating_sub(1) / 2 + (r - c)
}

/// `svec` of the symmetric part of `m`.
pub fn svec(m: &DMatrix<f64>) -> Vec<f64> {
    let d = m.nrows();
    let mut out = Vec::with_capacity(svec_len(d));
    for c in 0..d {
        out.push(m[(c, c)]);
        for r in c + 1..d {
            out.push(SQRT_2 * 0.5 * (m[(r, c)] + m[(c, r)]));
        }
    }
    out
}

/// Inverse of [`svec`]; the result is symmetric by construction.
pub fn smat(v: &[f64], d: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(d, d);
    let mut k = 0;
    for c in 0..d {
        m[(c, c)] = v[k];
        k += 1;
        for r in c + 1..d {
            let x = v[k] / SQRT_2;
            m[(r, c)] = x;
            m[(c, r)] = x;
            k += 1;
        }
    }
    m
}

/// Coefficient multiplying `svec(X)[svec_index(i, j)]` in `⟨E_ij, X⟩` where
/// `E_ij` is the symmetric unit selecting entry `(i, j)`.
fn entry_coeff(i: usize, j: usize) -> f64 {
    if i == j {
        1.0
    } else {
        1.0 / SQRT_2
    }
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub vals: Vec<f64>,
}

impl SparseMatrix {
    pub fn from_rows(rows: &[Vec<(usize, f64)>], ncols: usize) -> Result<Self> {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut col_idx = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for row in rows {
            let mut sorted = row.clone();
            sorted.sort_by_key(|&(c, _)| c);
            let mut last: Option<usize> = None;
            for (c, v) in sorted {
                if c >= ncols {
                    return Err(Error::DimensionMismatch {
                        expected: ncols,
                        got: c + 1,
                    });
                }
                if last == Some(c) {
                    *vals.last_mut().expect("previous entry") += v;
                    continue;
                }
                col_idx.push(c);
                vals.push(v);
                last = Some(c);
            }
            row_ptr.push(col_idx.len());
        }
        Ok(SparseMatrix {
            nrows: rows.len(),
            ncols,
            row_ptr,
            col_idx,
            vals,
        })
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.vals[range].iter().copied())
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// `y = A x`
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.nrows)
            .map(|r| self.row(r).map(|(c, v)| v * x[c]).sum())
            .collect()
    }

    /// `y = Aᵀ w`
    pub fn mul_t_vec(&self, w: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.ncols];
        for (r, &wr) in w.iter().enumerate() {
            if wr == 0.0 {
                continue;
            }
            for (c, v) in self.row(r) {
                y[c] += v * wr;
            }
        }
        y
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                m[(r, c)] += v;
            }
        }
        m
    }
}

/// A PSD block of the variable vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PsdCone {
    pub dim: usize,
    pub offset: usize,
}

impl PsdCone {
    pub fn len(&self) -> usize {
        svec_len(self.dim)
    }

    pub fn is_empty(&self) -> bool {
        self.dim == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Bookkeeping that ties variable positions back to cameras and edges.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProgramIndex {
    pub n_cams: usize,
    /// Pair `(i, j)`, `i < j`, owning PSD cone `k + 1`.
    pub hull_edges: Vec<(usize, usize)>,
}

impl ProgramIndex {
    /// Variable position of Gram entry `(r, c)`.
    pub fn gram_position(&self, r: usize, c: usize) -> usize {
        svec_index(3 * self.n_cams, r, c)
    }
}

/// `min cᵀx  s.t.  A x = b,  x ∈ K`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConicProgram {
    pub objective: Vec<f64>,
    pub constraints: SparseMatrix,
    pub rhs: Vec<f64>,
    pub cones: Vec<PsdCone>,
    pub index: ProgramIndex,
}

impl ConicProgram {
    /// Generic constructor; cones are laid out back to back in the given order.
    pub fn new(
        objective: Vec<f64>,
        rows: &[Vec<(usize, f64)>],
        rhs: Vec<f64>,
        cone_dims: &[usize],
    ) -> Result<Self> {
        let mut cones = Vec::with_capacity(cone_dims.len());
        let mut offset = 0;
        for &dim in cone_dims {
            cones.push(PsdCone { dim, offset });
            offset += svec_len(dim);
        }
        if objective.len() != offset {
            return Err(Error::DimensionMismatch {
                expected: offset,
                got: objective.len(),
            });
        }
        if rhs.len() != rows.len() {
            return Err(Error::DimensionMismatch {
                expected: rows.len(),
                got: rhs.len(),
            });
        }
        Ok(ConicProgram {
            objective,
            constraints: SparseMatrix::from_rows(rows, offset)?,
            rhs,
            cones,
            index: ProgramIndex::default(),
        })
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn n_constraints(&self) -> usize {
        self.rhs.len()
    }

    pub fn objective_at(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, x)| c * x).sum()
    }

    /// Largest absolute equality violation at `x`.
    pub fn equality_residual(&self, x: &[f64]) -> f64 {
        self.constraints
            .mul_vec(x)
            .iter()
            .zip(&self.rhs)
            .map(|(ax, b)| (ax - b).abs())
            .fold(0.0, f64::max)
    }
}

/// The four relaxations compared in the benchmarks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Formulation {
    #[serde(rename = "o3-iso")]
    O3Iso,
    #[serde(rename = "o3-aniso")]
    O3Aniso,
    #[serde(rename = "cso3-iso")]
    Cso3Iso,
    #[serde(rename = "cso3-aniso")]
    Cso3Aniso,
}

impl Formulation {
    pub const ALL: [Formulation; 4] = [
        Formulation::O3Iso,
        Formulation::O3Aniso,
        Formulation::Cso3Iso,
        Formulation::Cso3Aniso,
    ];

    pub fn cost_mode(self) -> CostMode {
        match self {
            Formulation::O3Iso | Formulation::Cso3Iso => CostMode::Iso,
            Formulation::O3Aniso | Formulation::Cso3Aniso => CostMode::Aniso,
        }
    }

    pub fn hull_constraints(self) -> bool {
        matches!(self, Formulation::Cso3Iso | Formulation::Cso3Aniso)
    }

    pub fn name(self) -> &'static str {
        match self {
            Formulation::O3Iso => "o3-iso",
            Formulation::O3Aniso => "o3-aniso",
            Formulation::Cso3Iso => "cso3-iso",
            Formulation::Cso3Aniso => "cso3-aniso",
        }
    }
}

impl std::fmt::Display for Formulation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Formulation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Formulation::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown formulation '{s}'")))
    }
}

/// Union-find over the pairs; returns the number of connected components.
pub fn component_count(n: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> usize {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut components = n;
    for (a, b) in pairs {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra] = rb;
            components -= 1;
        }
    }
    components
}

/// Coefficients of `A(Y)` w.r.t. each entry `Y_ab`, indexed `[a][b]`.
fn hull_coefficients() -> [[nalgebra::Matrix4<f64>; 3]; 3] {
    std::array::from_fn(|a| {
        std::array::from_fn(|b| {
            let mut e = Matrix3::zeros();
            e[(a, b)] = 1.0;
            hull_operator(&e)
        })
    })
}

/// Encodes `min −⟨N, X⟩` over `X ⪰ 0`, `X_ii = I`, plus `A(X_ij) + I ⪰ 0`
/// for every measured pair when the formulation asks for hull constraints.
pub fn build_program(cost: &CostMatrix, formulation: Formulation) -> Result<ConicProgram> {
    let n = cost.n_cams();
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least two cameras, got {n}"
        )));
    }
    let components = component_count(n, cost.upper_blocks().map(|(k, _)| k));
    if components > 1 {
        return Err(Error::Disconnected { components });
    }

    let d = 3 * n;
    let hull_edges: Vec<(usize, usize)> = if formulation.hull_constraints() {
        cost.upper_blocks().map(|(k, _)| k).collect()
    } else {
        Vec::new()
    };
    let mut cone_dims = vec![d];
    cone_dims.extend(std::iter::repeat_n(4, hull_edges.len()));

    let objective_matrix = -cost.dense();
    let mut objective = svec(&objective_matrix);
    objective.resize(svec_len(d) + 10 * hull_edges.len(), 0.0);

    let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(6 * n + 10 * hull_edges.len());
    let mut rhs = Vec::with_capacity(rows.capacity());
    for k in 0..n {
        for a in 0..3 {
            for b in a..3 {
                let (p, q) = (3 * k + b, 3 * k + a);
                rows.push(vec![(svec_index(d, p, q), entry_coeff(p, q))]);
                rhs.push(if a == b { 1.0 } else { 0.0 });
            }
        }
    }

    let coeffs = hull_coefficients();
    let gram_len = svec_len(d);
    for (t, &(i, j)) in hull_edges.iter().enumerate() {
        let slack_offset = gram_len + 10 * t;
        for p in 0..4 {
            for q in p..4 {
                let mut row = vec![(slack_offset + svec_index(4, q, p), entry_coeff(p, q))];
                for a in 0..3 {
                    for b in 0..3 {
                        let w = coeffs[a][b][(p, q)];
                        if w != 0.0 {
                            // Y_ab = X(3i+a, 3j+b) is always off-diagonal in X
                            row.push((svec_index(d, 3 * i + a, 3 * j + b), -w / SQRT_2));
                        }
                    }
                }
                rows.push(row);
                rhs.push(if p == q { 1.0 } else { 0.0 });
            }
        }
    }

    let mut program = ConicProgram::new(objective, &rows, rhs, &cone_dims)?;
    program.index = ProgramIndex {
        n_cams: n,
        hull_edges,
    };
    Ok(program)
}

/// Reassembles the Gram matrix from the first cone block.
pub fn extract_gram(program: &ConicProgram, solution: &[f64]) -> Result<DMatrix<f64>> {
    if solution.len() != program.n_vars() {
        return Err(Error::DimensionMismatch {
            expected: program.n_vars(),
            got: solution.len(),
        });
    }
    let cone = program.cones[0];
    let x = smat(&solution[cone.range()], cone.dim);
    Ok((&x + x.transpose()) * 0.5)
}

/// Feasible point built from a Gram matrix `X`: block 0 is `svec(X)`, every
/// hull slack is `svec(A(X_ij) + I)`.
pub fn lift_gram(program: &ConicProgram, x: &DMatrix<f64>) -> Result<Vec<f64>> {
    let d = program.cones[0].dim;
    if x.nrows() != d || x.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: x.nrows(),
        });
    }
    let mut v = svec(x);
    for &(i, j) in &program.index.hull_edges {
        let y: Matrix3<f64> = x.fixed_view::<3, 3>(3 * i, 3 * j).into_owned();
        let s = hull_operator(&y) + nalgebra::Matrix4::identity();
        v.extend(svec(&DMatrix::from_column_slice(4, 4, s.as_slice())));
    }
    Ok(v)
}

/// Stacks rotations into the 3n×3 matrix `R` with blocks `Rᵢ`.
pub fn stack_rotations(rotations: &[Rotation]) -> DMatrix<f64> {
    let mut r = DMatrix::zeros(3 * rotations.len(), 3);
    for (k, rot) in rotations.iter().enumerate() {
        r.fixed_view_mut::<3, 3>(3 * k, 0).copy_from(rot.matrix());
    }
    r
}

/// `X = R Rᵀ` lifted into the program's variable space.
pub fn planted_solution(program: &ConicProgram, rotations: &[Rotation]) -> Result<Vec<f64>> {
    let r = stack_rotations(rotations);
    lift_gram(program, &(&r * r.transpose()))
}
