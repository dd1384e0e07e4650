//! Rank estimation, rank-3 rounding and tightness certificates.

use nalgebra::{DMatrix, Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::aniso::{objective_value, CostMatrix};
use crate::error::{Error, Result};
use crate::sdp::{extract_gram, ConicProgram};
use crate::so3::{nearest_rotation, Rotation};
use crate::solver::{SolverResult, SolverStatus};

pub const DEFAULT_ENERGY: f64 = 0.999;
pub const DEFAULT_GAP_TOL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub rank_estimate: usize,
    pub sdp_lower_bound: f64,
    pub rounded_cost: f64,
    pub relative_gap: f64,
    pub tight: bool,
    /// `det` of each 3×3 block of the rank-3 factor, after the coset fix.
    pub per_block_det: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Rounding {
    pub rotations: Vec<Rotation>,
    pub per_block_det: Vec<f64>,
    /// Third eigenvalue negligible or some block rank deficient.
    pub degenerate: bool,
}

fn sorted_eigen(x: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(x.clone());
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vals = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vecs = DMatrix::from_fn(x.nrows(), x.nrows(), |r, c| eig.eigenvectors[(r, order[c])]);
    (vals, vecs)
}

fn check_square(x: &DMatrix<f64>) -> Result<usize> {
    if x.nrows() != x.ncols() || !x.nrows().is_multiple_of(3) || x.nrows() == 0 {
        return Err(Error::InvalidInput(format!(
            "expected a non-empty 3n×3n matrix, got {}×{}",
            x.nrows(),
            x.ncols()
        )));
    }
    Ok(x.nrows() / 3)
}

/// Smallest `k` whose top-`k` eigenvalues carry more than `energy` of the trace.
pub fn estimate_rank(x: &DMatrix<f64>, energy: f64) -> Result<usize> {
    if x.nrows() != x.ncols() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            got: x.ncols(),
        });
    }
    if !(energy > 0.0 && energy <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "energy {energy} outside (0, 1]"
        )));
    }
    let (vals, _) = sorted_eigen(x);
    let vals: Vec<f64> = vals.into_iter().map(|v| v.max(0.0)).collect();
    let total: f64 = vals.iter().sum();
    if total <= 0.0 {
        return Ok(0);
    }
    let mut acc = 0.0;
    for (k, v) in vals.iter().enumerate() {
        acc += v;
        if acc > energy * total {
            return Ok(k + 1);
        }
    }
    Ok(vals.len())
}

/// Splits a `3n×3` factor into blocks, flips the third column if most of the
/// determinant mass is negative, and rounds each block to SO(3).
pub(crate) fn round_factor(v: &DMatrix<f64>) -> Rounding {
    let n = v.nrows() / 3;
    let block = |v: &DMatrix<f64>, i: usize| -> Matrix3<f64> {
        v.fixed_view::<3, 3>(3 * i, 0).into_owned()
    };
    let det_sum: f64 = (0..n).map(|i| block(v, i).determinant()).sum();
    let mut v = v.clone();
    if det_sum < 0.0 {
        v.column_mut(2).neg_mut();
    }
    let mut degenerate = false;
    let mut rotations = Vec::with_capacity(n);
    let mut per_block_det = Vec::with_capacity(n);
    for i in 0..n {
        let b = block(&v, i);
        per_block_det.push(b.determinant());
        let nr = nearest_rotation(&b);
        degenerate |= nr.degenerate;
        rotations.push(nr.rotation);
    }
    Rounding {
        rotations,
        per_block_det,
        degenerate,
    }
}

/// Keeps the three leading eigenpairs of `x`, factors `x ≈ VVᵀ` and rounds
/// each block of `V` to the nearest rotation.
pub fn round_to_rotations(x: &DMatrix<f64>) -> Result<Rounding> {
    let n = check_square(x)?;
    let (vals, vecs) = sorted_eigen(x);
    let mut v = DMatrix::zeros(3 * n, 3);
    for k in 0..3 {
        let s = vals[k].max(0.0).sqrt();
        v.column_mut(k).copy_from(&(vecs.column(k) * s));
    }
    let mut rounding = round_factor(&v);
    rounding.degenerate |= vals[2] <= 1e-9 * vals[0].abs().max(f64::MIN_POSITIVE);
    Ok(rounding)
}

/// Rounds an optimal SDP solution and compares its cost with the SDP bound.
pub fn certify(
    cost: &CostMatrix,
    program: &ConicProgram,
    result: &SolverResult,
    gap_tol: f64,
) -> Result<(Certificate, Rounding)> {
    if result.status != SolverStatus::Optimal {
        return Err(Error::Solver(format!(
            "cannot certify a {:?} solve",
            result.status
        )));
    }
    let x = extract_gram(program, &result.primal)?;
    let rank_estimate = estimate_rank(&x, DEFAULT_ENERGY)?;
    let rounding = round_to_rotations(&x)?;
    let sdp_lower_bound = result.primal_objective;
    let rounded_cost = objective_value(cost, &rounding.rotations)?;
    let relative_gap = (rounded_cost - sdp_lower_bound) / (1.0 + sdp_lower_bound.abs());
    let certificate = Certificate {
        rank_estimate,
        sdp_lower_bound,
        rounded_cost,
        relative_gap,
        tight: rank_estimate == 3 && relative_gap <= gap_tol,
        per_block_det: rounding.per_block_det.clone(),
    };
    Ok((certificate, rounding))
}
