//! Rotation-group primitives.
//!
//! Rotations are plain 3×3 direction-cosine matrices wrapped in [`Rotation`];
//! tangent vectors are axis-angle 3-vectors wrapped in [`AxisAngle`]. The module
//! also carries the 4×4 linear operator whose shifted PSD-ness characterises
//! the convex hull of SO(3).

use std::f64::consts::PI;

use nalgebra::{Matrix3, Matrix4, SymmetricEigen, Vector3, Vector4};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Orthogonality / determinant slack accepted by [`Rotation::new`].
pub const ROTATION_TOL: f64 = 1e-9;

/// Default tolerance on the minimum eigenvalue in [`in_hull`].
pub const HULL_TOL: f64 = 1e-8;

/// A proper rotation: `m mᵀ = I`, `det m = +1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Rotation(Matrix3<f64>);

/// Axis-angle vector (angle in radians times unit axis).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AxisAngle(pub Vector3<f64>);

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Matrix3::identity())
    }

    /// Validates `m` against the rotation invariants with tolerance [`ROTATION_TOL`].
    pub fn new(m: Matrix3<f64>) -> Result<Self> {
        Self::with_tolerance(m, ROTATION_TOL)
    }

    pub fn with_tolerance(m: Matrix3<f64>, tol: f64) -> Result<Self> {
        if !m.iter().all(|v| v.is_finite()) {
            return Err(Error::NotARotation("non-finite entry".into()));
        }
        let ortho = (m * m.transpose() - Matrix3::identity()).abs().max();
        if ortho > tol {
            return Err(Error::NotARotation(format!(
                "orthogonality violated by {ortho:.3e}"
            )));
        }
        let det = m.determinant();
        if (det - 1.0).abs() > tol {
            return Err(Error::NotARotation(format!("determinant is {det:.6}")));
        }
        Ok(Rotation(m))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn into_inner(self) -> Matrix3<f64> {
        self.0
    }

    pub fn transpose(&self) -> Rotation {
        Rotation(self.0.transpose())
    }

    pub fn compose(&self, other: &Rotation) -> Rotation {
        Rotation(self.0 * other.0)
    }

    /// Rotation angle in radians, in `[0, π]`.
    pub fn angle(&self) -> f64 {
        ((self.0.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
    }

    /// Haar-uniform sample, drawn as a normalised Gaussian quaternion.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Rotation {
        loop {
            let q = Vector4::<f64>::from_fn(|_, _| rng.sample(StandardNormal));
            let n = q.norm();
            if n > 1e-8 {
                return rotation_from_quaternion(q / n);
            }
        }
    }
}

fn rotation_from_quaternion(q: Vector4<f64>) -> Rotation {
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    let m = Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    );
    // Polish rounding error so the unchecked wrapper stays honest.
    closest_rotation(&m)
}

impl AxisAngle {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        AxisAngle(Vector3::new(x, y, z))
    }

    pub fn angle(&self) -> f64 {
        self.0.norm()
    }
}

/// Skew-symmetric cross-product matrix: `hat(v) w = v × w`.
pub fn hat(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of [`hat`] on the skew part of `m`.
pub fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    )
}

/// Rodrigues formula.
pub fn exp_map(v: &AxisAngle) -> Rotation {
    let theta2 = v.0.norm_squared();
    let k = hat(&v.0);
    let (a, b) = if theta2 < 1e-8 {
        // sin(t)/t and (1-cos t)/t² to fourth order
        (
            1.0 - theta2 / 6.0 + theta2 * theta2 / 120.0,
            0.5 - theta2 / 24.0 + theta2 * theta2 / 720.0,
        )
    } else {
        let theta = theta2.sqrt();
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    Rotation(Matrix3::identity() + k * a + k * k * b)
}

/// Principal logarithm, `‖result‖ ≤ π`.
pub fn log_map(r: &Rotation) -> AxisAngle {
    let m = r.matrix();
    let cos_theta = ((m.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    let theta = cos_theta.acos();
    let skew = vee(m); // = sin(θ)·axis

    if theta < 1e-4 {
        // θ / sin θ ≈ 1 + θ²/6
        return AxisAngle(skew * (1.0 + theta * theta / 6.0));
    }
    if theta < PI - 1e-3 {
        return AxisAngle(skew * (theta / theta.sin()));
    }

    // Near a half-turn: (R + Rᵀ)/2 − cos θ·I = (1 − cos θ)·a aᵀ.
    let sym = (m + m.transpose()) * 0.5 - Matrix3::identity() * cos_theta;
    let outer = sym / (1.0 - cos_theta);
    let col = (0..3)
        .max_by(|&i, &j| outer[(i, i)].total_cmp(&outer[(j, j)]))
        .unwrap_or(0);
    let mut axis: Vector3<f64> = outer.column(col).into_owned();
    axis /= axis.norm();
    if axis.dot(&skew) < 0.0 {
        axis = -axis;
    }
    AxisAngle(axis * theta)
}

/// Result of projecting an arbitrary matrix onto SO(3).
#[derive(Debug, Clone, Copy)]
pub struct NearestRotation {
    pub rotation: Rotation,
    /// True when the input has rank < 2 and the minimiser is not unique.
    pub degenerate: bool,
}

/// Frobenius-nearest rotation to `m`.
pub fn closest_rotation(m: &Matrix3<f64>) -> Rotation {
    nearest_rotation(m).rotation
}

/// Frobenius-nearest rotation via `m = U Σ Vᵀ`, `R = U diag(1,1,det(UVᵀ)) Vᵀ`,
/// where the sign correction lands on the smallest singular direction.
pub fn nearest_rotation(m: &Matrix3<f64>) -> NearestRotation {
    let svd = m.svd(true, true);
    let (Some(u), Some(v_t)) = (svd.u, svd.v_t) else {
        return NearestRotation {
            rotation: Rotation::identity(),
            degenerate: true,
        };
    };
    let s = svd.singular_values;
    let smallest = (0..3).min_by(|&i, &j| s[i].total_cmp(&s[j])).unwrap_or(2);
    let mut sorted = [s[0], s[1], s[2]];
    sorted.sort_by(|a, b| b.total_cmp(a));
    let degenerate = !(sorted[1] > 1e-12 * sorted[0].max(f64::MIN_POSITIVE));

    let mut d = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        d[(smallest, smallest)] = -1.0;
    }
    let r = u * d * v_t;
    NearestRotation {
        rotation: Rotation(r),
        degenerate,
    }
}

/// Global gauge fix: returns `V` minimising `Σ‖estᵢ V − gtᵢ‖²_F` over SO(3)
/// together with the aligned estimates `estᵢ V`.
pub fn align_gauge(est: &[Rotation], gt: &[Rotation]) -> Result<(Rotation, Vec<Rotation>)> {
    if est.is_empty() {
        return Err(Error::InvalidInput(
            "cannot align empty rotation lists".into(),
        ));
    }
    if est.len() != gt.len() {
        return Err(Error::InvalidInput(format!(
            "rotation lists differ in length ({} vs {})",
            est.len(),
            gt.len()
        )));
    }
    let cross = est
        .iter()
        .zip(gt)
        .fold(Matrix3::zeros(), |acc, (e, g)| acc + e.0.transpose() * g.0);
    let v = closest_rotation(&cross);
    let aligned = est.iter().map(|e| Rotation(e.0 * v.0)).collect();
    Ok((v, aligned))
}

/// The linear map `Y ↦ A(Y)` whose shifted form `A(Y) + I ⪰ 0` is exactly
/// membership of `Y` in conv(SO(3)).
pub fn hull_operator(y: &Matrix3<f64>) -> Matrix4<f64> {
    let y = |i: usize, j: usize| y[(i - 1, j - 1)];
    let a12 = y(1, 3) + y(3, 1);
    let a13 = y(1, 2) - y(2, 1);
    let a14 = y(2, 3) + y(3, 2);
    let a23 = y(2, 3) - y(3, 2);
    let a24 = y(1, 2) + y(2, 1);
    let a34 = y(3, 1) - y(1, 3);
    Matrix4::new(
        -y(1, 1) - y(2, 2) + y(3, 3),
        a12,
        a13,
        a14,
        a12,
        y(1, 1) - y(2, 2) - y(3, 3),
        a23,
        a24,
        a13,
        a23,
        y(1, 1) + y(2, 2) + y(3, 3),
        a34,
        a14,
        a24,
        a34,
        -y(1, 1) + y(2, 2) - y(3, 3),
    )
}

/// Smallest eigenvalue of `A(y) + I`.
pub fn hull_margin(y: &Matrix3<f64>) -> f64 {
    let s = hull_operator(y) + Matrix4::identity();
    SymmetricEigen::new(s).eigenvalues.min()
}

/// `true` iff `λ_min(A(y) + I) ≥ −tol`.
pub fn in_hull(y: &Matrix3<f64>, tol: f64) -> bool {
    hull_margin(y) >= -tol
}
