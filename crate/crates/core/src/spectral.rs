//! Spectral baseline: the rotations span the fixed space of `D⁻¹N`.
//!
//! `N` holds `Mᵢⱼ R̃ᵢⱼ` for every ordered measured pair, with the weight of a
//! reversed edge transported as `Mⱼᵢ = R̃ᵢⱼᵀ Mᵢⱼ R̃ᵢⱼ`. Noise-free data then
//! satisfies `(N𝐑)ᵢ = Dᵢ Rᵢ` with `Dᵢ = Σⱼ Mᵢⱼ`.

use nalgebra::{DMatrix, Matrix3, SymmetricEigen};

use crate::aniso::EdgeMeasurement;
use crate::error::{Error, Result};
use crate::rounding::round_factor;
use crate::sdp::component_count;
use crate::so3::Rotation;

/// Block-diagonal degree matrix `Dᵢ = Σⱼ Mᵢⱼ`.
#[derive(Debug, Clone)]
pub struct DegreeMatrix {
    pub blocks: Vec<Matrix3<f64>>,
}

impl DegreeMatrix {
    /// Blockwise inverse; rejects numerically singular blocks.
    pub fn inverse_blocks(&self) -> Result<Vec<Matrix3<f64>>> {
        self.blocks
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let eig = SymmetricEigen::new(*d);
                let big = eig.eigenvalues.abs().max();
                let small = eig.eigenvalues.abs().min();
                if !(big > 0.0) || small <= 1e-12 * big {
                    return Err(Error::InvalidInput(format!(
                        "degree block of camera {i} is singular"
                    )));
                }
                d.try_inverse().ok_or_else(|| {
                    Error::InvalidInput(format!("degree block of camera {i} is singular"))
                })
            })
            .collect()
    }
}

fn validate(edges: &[EdgeMeasurement], n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least two cameras, got {n}"
        )));
    }
    let mut seen = std::collections::BTreeSet::new();
    for e in edges {
        if e.i >= n || e.j >= n {
            return Err(Error::IndexOutOfRange { i: e.i, j: e.j, n });
        }
        if e.i == e.j {
            return Err(Error::InvalidInput(format!("self-loop at camera {}", e.i)));
        }
        if !seen.insert((e.i.min(e.j), e.i.max(e.j))) {
            return Err(Error::DuplicateEdge(e.i, e.j));
        }
    }
    let components = component_count(n, edges.iter().map(|e| (e.i, e.j)));
    if components != 1 {
        return Err(Error::Disconnected { components });
    }
    Ok(())
}

/// Dense `N` and its degree blocks, both unscaled.
pub fn spectral_matrices(
    edges: &[EdgeMeasurement],
    n: usize,
) -> Result<(DMatrix<f64>, DegreeMatrix)> {
    validate(edges, n)?;
    let mut big_n = DMatrix::zeros(3 * n, 3 * n);
    let mut blocks = vec![Matrix3::zeros(); n];
    for e in edges {
        for oriented in [e.clone(), e.reversed()] {
            let m = *oriented.weight()?.matrix();
            let block = m * oriented.r_tilde.matrix();
            big_n
                .fixed_view_mut::<3, 3>(3 * oriented.i, 3 * oriented.j)
                .copy_from(&block);
            blocks[oriented.i] += m;
        }
    }
    Ok((big_n, DegreeMatrix { blocks }))
}

/// Rotations from the three smallest right singular vectors of `D⁻¹N − I`.
pub fn spectral_solve(edges: &[EdgeMeasurement], n: usize) -> Result<Vec<Rotation>> {
    let (big_n, degree) = spectral_matrices(edges, n)?;
    let inv = degree.inverse_blocks()?;
    let mut a = big_n;
    for (i, d_inv) in inv.iter().enumerate() {
        let rows = a.rows(3 * i, 3).into_owned();
        a.rows_mut(3 * i, 3).copy_from(&(d_inv * rows));
    }
    for k in 0..3 * n {
        a[(k, k)] -= 1.0;
    }
    let normal = a.transpose() * &a;
    let eig = SymmetricEigen::new(normal);
    let mut order: Vec<usize> = (0..3 * n).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
    let mut v = DMatrix::zeros(3 * n, 3);
    for (c, &k) in order.iter().take(3).enumerate() {
        v.column_mut(c).copy_from(&eig.eigenvectors.column(k));
    }
    Ok(round_factor(&v).rotations)
}
