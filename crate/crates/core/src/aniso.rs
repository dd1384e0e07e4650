//! Anisotropic cost model.
//!
//! A relative-rotation measurement `R̃ᵢⱼ ≈ Rᵢ Rⱼᵀ` comes with a 3×3 Hessian
//! `Hᵢⱼ` of the two-view objective in the left-perturbation axis-angle
//! `Rᵢⱼ = exp([Δω]×) R̃ᵢⱼ`. The quadratic form `Δωᵀ H Δω` equals
//! `tr([Δω]×ᵀ M [Δω]×)` for `M = tr(H)/2·I − H`, which turns the local
//! Gaussian model into the linear term `−⟨M R̃ᵢⱼ, Rᵢ Rⱼᵀ⟩`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, Matrix3, SMatrix, SymmetricEigen, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::so3::{exp_map, hat, log_map, AxisAngle, Rotation};

/// Symmetry / PSD slack for incoming Hessians.
pub const HESSIAN_TOL: f64 = 1e-9;

/// One relative rotation measurement with its two-view Hessian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeMeasurement {
    pub i: usize,
    pub j: usize,
    pub r_tilde: Rotation,
    pub hessian: Matrix3<f64>,
}

impl EdgeMeasurement {
    pub fn new(i: usize, j: usize, r_tilde: Rotation, hessian: Matrix3<f64>) -> Result<Self> {
        if i == j {
            return Err(Error::InvalidInput(format!("self-loop on camera {i}")));
        }
        check_hessian(&hessian, HESSIAN_TOL)?;
        Ok(EdgeMeasurement {
            i,
            j,
            r_tilde,
            hessian,
        })
    }

    /// Isotropic measurement with `H = c·I`.
    pub fn isotropic(i: usize, j: usize, r_tilde: Rotation, c: f64) -> Result<Self> {
        Self::new(i, j, r_tilde, Matrix3::identity() * c)
    }

    /// Same measurement viewed from `j` to `i`: `R̃ⱼᵢ = R̃ᵀ`, `Hⱼᵢ = R̃ᵀ H R̃`.
    pub fn reversed(&self) -> EdgeMeasurement {
        let r = self.r_tilde.matrix();
        EdgeMeasurement {
            i: self.j,
            j: self.i,
            r_tilde: self.r_tilde.transpose(),
            hessian: r.transpose() * self.hessian * r,
        }
    }

    pub fn weight(&self) -> Result<WeightMatrix> {
        weight_from_hessian(&self.hessian)
    }
}

pub(crate) fn check_hessian(h: &Matrix3<f64>, tol: f64) -> Result<()> {
    if !h.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidHessian("non-finite entry".into()));
    }
    let asym = (h - h.transpose()).abs().max();
    if asym > tol {
        return Err(Error::InvalidHessian(format!("asymmetric by {asym:.3e}")));
    }
    let lmin = SymmetricEigen::new(symmetrize(h)).eigenvalues.min();
    if lmin < -tol {
        return Err(Error::InvalidHessian(format!(
            "not positive semidefinite (min eigenvalue {lmin:.3e})"
        )));
    }
    Ok(())
}

fn symmetrize(m: &Matrix3<f64>) -> Matrix3<f64> {
    (m + m.transpose()) * 0.5
}

/// Eigenvalues sorted in decreasing order.
pub fn sorted_eigenvalues(m: &Matrix3<f64>) -> [f64; 3] {
    let mut ev: Vec<f64> = SymmetricEigen::new(symmetrize(m))
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    [ev[0], ev[1], ev[2]]
}

/// Symmetric weight `M` of the linear anisotropic term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightMatrix(pub Matrix3<f64>);

impl WeightMatrix {
    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    /// `λ₁ ≥ λ₂ ≥ λ₃`.
    pub fn eigenvalues(&self) -> [f64; 3] {
        sorted_eigenvalues(&self.0)
    }

    /// Recovers the Hessian: `H = tr(M)·I − M`.
    pub fn hessian(&self) -> Matrix3<f64> {
        Matrix3::identity() * self.0.trace() - self.0
    }

    pub fn is_indefinite(&self) -> bool {
        is_indefinite(self)
    }
}

/// `M = tr(H)/2·I − H`.
pub fn weight_from_hessian(h: &Matrix3<f64>) -> Result<WeightMatrix> {
    let asym = (h - h.transpose()).abs().max();
    if asym > HESSIAN_TOL {
        return Err(Error::InvalidHessian(format!("asymmetric by {asym:.3e}")));
    }
    Ok(WeightMatrix(Matrix3::identity() * (h.trace() / 2.0) - h))
}

pub fn is_indefinite(m: &WeightMatrix) -> bool {
    m.eigenvalues()[2] < -1e-10
}

/// Jacobian of `Δω ↦ vec(I + [Δω]×)` with column-major `vec`.
pub fn propagation_jacobian() -> SMatrix<f64, 9, 3> {
    #[rustfmt::skip]
    let j = SMatrix::<f64, 9, 3>::from_row_slice(&[
        0.0, 0.0, 0.0,
        0.0, 0.0, 1.0,
        0.0, -1.0, 0.0,
        0.0, 0.0, -1.0,
        0.0, 0.0, 0.0,
        1.0, 0.0, 0.0,
        0.0, 1.0, 0.0,
        -1.0, 0.0, 0.0,
        0.0, 0.0, 0.0,
    ]);
    j
}

/// `Jᵀ (I ⊗ M) J`, which reproduces `H` for `M = weight_from_hessian(H)`.
pub fn propagated_hessian(m: &Matrix3<f64>) -> Matrix3<f64> {
    let mut kron = SMatrix::<f64, 9, 9>::zeros();
    for b in 0..3 {
        kron.fixed_view_mut::<3, 3>(3 * b, 3 * b).copy_from(m);
    }
    let j = propagation_jacobian();
    j.transpose() * kron * j
}

/// Largest residual of `vᵀHv = tr(hat(v)ᵀ M hat(v))` over `trials` random
/// vectors, combined with the residual of `Jᵀ(I⊗M)J = H`.
pub fn quadform_identity_check<R: Rng + ?Sized>(
    h: &Matrix3<f64>,
    trials: usize,
    rng: &mut R,
) -> Result<f64> {
    let m = weight_from_hessian(h)?.0;
    let mut worst = (propagated_hessian(&m) - h).abs().max();
    for _ in 0..trials {
        let v = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let k = hat(&v);
        let lhs = (v.transpose() * h * v)[(0, 0)];
        let rhs = (k.transpose() * m * k).trace();
        let scale = 1.0 + lhs.abs();
        worst = worst.max((lhs - rhs).abs() / scale);
    }
    Ok(worst)
}

/// Single-term objective `f(R) = −⟨M R̃, R⟩ + ⟨M R̃, R̃⟩`, valid for any 3×3 `R`.
pub fn single_term_value(m: &Matrix3<f64>, r_tilde: &Matrix3<f64>, r: &Matrix3<f64>) -> f64 {
    let mr = m * r_tilde;
    -mr.dot(r) + mr.dot(r_tilde)
}

#[derive(Debug, Clone, Copy)]
pub struct SingleTermMinima {
    pub so3_min: (Rotation, f64),
    pub o3_min: (Matrix3<f64>, f64),
    /// Eigenvalue ties make at least one minimiser non-unique.
    pub degenerate: bool,
}

/// Minimises the single-term objective over SO(3) and over O(3) by
/// enumerating the eight KKT points `U S Uᵀ R̃`, `S = diag(±1, ±1, ±1)`.
pub fn single_term_minimizers(m: &WeightMatrix, r_tilde: &Rotation) -> SingleTermMinima {
    let eig = SymmetricEigen::new(symmetrize(&m.0));
    let mut u = eig.eigenvectors;
    if u.determinant() < 0.0 {
        u.column_mut(2).neg_mut();
    }
    let rt = r_tilde.matrix();

    let mut best_so3: Option<(Matrix3<f64>, f64)> = None;
    let mut best_o3: Option<(Matrix3<f64>, f64)> = None;
    for mask in 0..8u8 {
        let s = Vector3::from_fn(|k, _| if mask & (1 << k) != 0 { -1.0 } else { 1.0 });
        let cand = u * Matrix3::from_diagonal(&s) * u.transpose() * rt;
        let val = single_term_value(&m.0, rt, &cand);
        if best_o3.is_none_or(|(_, v)| val < v) {
            best_o3 = Some((cand, val));
        }
        if s.product() > 0.0 && best_so3.is_none_or(|(_, v)| val < v) {
            best_so3 = Some((cand, val));
        }
    }
    let (so3, so3_val) = best_so3.expect("four proper candidates");
    let (o3, o3_val) = best_o3.expect("eight candidates");

    let [l1, l2, l3] = m.eigenvalues();
    let degenerate = (l2 - l3.abs()).abs() < 1e-10 || l3.abs() < 1e-10 || (l1 - l2).abs() < 1e-10;
    SingleTermMinima {
        so3_min: (crate::so3::closest_rotation(&so3), so3_val),
        o3_min: (o3, o3_val),
        degenerate,
    }
}

/// Whether measurement weights come from the Hessians or are all identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostMode {
    Iso,
    Aniso,
}

/// Symmetric 3n×3n block cost `N`, stored as its strictly upper blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    n_cams: usize,
    /// Keyed by `(i, j)` with `i < j`; already divided by `scale`.
    blocks: BTreeMap<(usize, usize), Matrix3<f64>>,
    scale: f64,
}

impl CostMatrix {
    pub fn zeros(n_cams: usize) -> Self {
        CostMatrix {
            n_cams,
            blocks: BTreeMap::new(),
            scale: 1.0,
        }
    }

    pub fn n_cams(&self) -> usize {
        self.n_cams
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Block `(i, j)`; zero on the diagonal and for unmeasured pairs.
    pub fn block(&self, i: usize, j: usize) -> Matrix3<f64> {
        match i.cmp(&j) {
            std::cmp::Ordering::Less => self.blocks.get(&(i, j)).copied().unwrap_or_default(),
            std::cmp::Ordering::Greater => self
                .blocks
                .get(&(j, i))
                .map(|b| b.transpose())
                .unwrap_or_default(),
            std::cmp::Ordering::Equal => Matrix3::zeros(),
        }
    }

    /// Measured pairs `(i, j)`, `i < j`, with their upper blocks.
    pub fn upper_blocks(&self) -> impl Iterator<Item = ((usize, usize), &Matrix3<f64>)> {
        self.blocks.iter().map(|(k, v)| (*k, v))
    }

    pub fn edge_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn dense(&self) -> DMatrix<f64> {
        let mut n = DMatrix::zeros(3 * self.n_cams, 3 * self.n_cams);
        for (&(i, j), b) in &self.blocks {
            n.fixed_view_mut::<3, 3>(3 * i, 3 * j).copy_from(b);
            n.fixed_view_mut::<3, 3>(3 * j, 3 * i)
                .copy_from(&b.transpose());
        }
        n
    }
}

/// `R̃^α M R̃^{1−α}` with fractional powers taken along the rotation's geodesic.
pub fn weighted_measurement(m: &Matrix3<f64>, r_tilde: &Rotation, alpha: f64) -> Matrix3<f64> {
    if alpha == 0.0 {
        return m * r_tilde.matrix();
    }
    let w = log_map(r_tilde).0;
    let left = exp_map(&AxisAngle(w * alpha));
    let right = exp_map(&AxisAngle(w * (1.0 - alpha)));
    left.matrix() * m * right.matrix()
}

/// Builds the cost matrix `N` with upper blocks `R̃^α M R̃^{1−α}` (`M = I` in
/// iso mode). In aniso mode everything is divided by the mean over edges of
/// `λ_max(H)`.
pub fn assemble_cost(
    edges: &[EdgeMeasurement],
    n: usize,
    mode: CostMode,
    alpha: f64,
) -> Result<CostMatrix> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidInput(format!("alpha {alpha} outside [0, 1]")));
    }
    let mut blocks = BTreeMap::new();
    let mut lmax_sum = 0.0;
    for e in edges {
        if e.i >= n || e.j >= n {
            return Err(Error::IndexOutOfRange { i: e.i, j: e.j, n });
        }
        if e.i == e.j {
            return Err(Error::InvalidInput(format!("self-loop on camera {}", e.i)));
        }
        let key = (e.i.min(e.j), e.i.max(e.j));
        if blocks.contains_key(&key) {
            return Err(Error::DuplicateEdge(key.0, key.1));
        }
        let m = match mode {
            CostMode::Iso => Matrix3::identity(),
            CostMode::Aniso => {
                lmax_sum += sorted_eigenvalues(&e.hessian)[0];
                weight_from_hessian(&e.hessian)?.0
            }
        };
        let w = weighted_measurement(&m, &e.r_tilde, alpha);
        blocks.insert(key, if e.i < e.j { w } else { w.transpose() });
    }
    let scale = match mode {
        CostMode::Aniso if !edges.is_empty() => lmax_sum / edges.len() as f64,
        _ => 1.0,
    };
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidHessian(format!(
            "cost scale {scale} is not positive"
        )));
    }
    for b in blocks.values_mut() {
        *b /= scale;
    }
    Ok(CostMatrix {
        n_cams: n,
        blocks,
        scale,
    })
}

/// `−⟨N, R Rᵀ⟩`, evaluated blockwise over measured pairs.
pub fn objective_value(cost: &CostMatrix, rotations: &[Rotation]) -> Result<f64> {
    if rotations.len() != cost.n_cams {
        return Err(Error::DimensionMismatch {
            expected: cost.n_cams,
            got: rotations.len(),
        });
    }
    Ok(-2.0
        * cost
            .blocks
            .iter()
            .map(|(&(i, j), b)| b.dot(&(rotations[i].matrix() * rotations[j].matrix().transpose())))
            .sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_psd(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
        let a = Matrix3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let d = Matrix3::from_diagonal(&Vector3::from_fn(|_, _| rng.random_range(0.0..3.0)));
        a * d * a.transpose()
    }

    #[test]
    fn weight_fixed_cases() {
        let m = weight_from_hessian(&Matrix3::from_diagonal(&Vector3::new(2., 1., 1.))).unwrap();
        assert_eq!(m.0, Matrix3::from_diagonal(&Vector3::new(0., 1., 1.)));
        let [l1, l2, l3] = m.eigenvalues();
        let (e1, e2, e3) = (2.0, 1.0, 1.0);
        assert_relative_eq!(l1, 0.5 * (e1 + e2 - e3), epsilon = 1e-14);
        assert_relative_eq!(l2, 0.5 * (e1 - e2 + e3), epsilon = 1e-14);
        assert_relative_eq!(l3, 0.5 * (-e1 + e2 + e3), epsilon = 1e-14);
        assert!(!m.is_indefinite());

        let half = weight_from_hessian(&Matrix3::identity()).unwrap();
        assert_eq!(half.0, Matrix3::identity() * 0.5);
        assert!(!half.is_indefinite());

        let sharp =
            weight_from_hessian(&Matrix3::from_diagonal(&Vector3::new(10., 1., 1.))).unwrap();
        assert_eq!(sharp.0, Matrix3::from_diagonal(&Vector3::new(-4., 5., 5.)));
        let [_, l2, l3] = sharp.eigenvalues();
        assert_eq!(l3, -4.0);
        assert!(l3.abs() <= l2);
        assert!(sharp.is_indefinite());
    }

    #[test]
    fn weight_rejects_asymmetric() {
        let mut h = Matrix3::identity();
        h[(0, 1)] = 1e-6;
        assert!(weight_from_hessian(&h).is_err());
    }

    #[test]
    fn hessian_roundtrip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            // dyadic entries keep every operation exact
            let h = Matrix3::from_fn(|_, _| (rng.random_range(-64..64) as f64) / 16.0);
            let h = h + h.transpose();
            let m = weight_from_hessian(&h).unwrap();
            assert_eq!(m.hessian(), h);
        }
    }

    #[test]
    fn weight_spectrum_ordering() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let h = random_psd(&mut rng);
            let [l1, l2, l3] = weight_from_hessian(&h).unwrap().eigenvalues();
            assert!(l1 >= l2 - 1e-12);
            assert!(l2 >= l3.abs() - 1e-12, "{l2} {l3}");
        }
    }

    #[test]
    fn quadform_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = Matrix3::identity();
        let v = Vector3::x();
        let k = hat(&v);
        assert_relative_eq!((v.transpose() * h * v)[(0, 0)], 1.0);
        assert_relative_eq!(
            (k.transpose() * (Matrix3::identity() * 0.5) * k).trace(),
            1.0
        );
        for _ in 0..20 {
            let h = random_psd(&mut rng);
            let res = quadform_identity_check(&h, 1000, &mut rng).unwrap();
            assert!(res < 1e-10, "{res}");
        }
    }

    #[test]
    fn jacobian_matches_hat() {
        let j = propagation_jacobian();
        let v = Vector3::new(0.3, -1.2, 2.0);
        let k = hat(&v);
        let vec_k = SMatrix::<f64, 9, 1>::from_column_slice(k.as_slice());
        assert_eq!(j * v, vec_k);
    }

    #[test]
    fn single_term_psd_case() {
        let m = WeightMatrix(Matrix3::from_diagonal(&Vector3::new(2., 1., 0.5)));
        let r = single_term_minimizers(&m, &Rotation::identity());
        assert!(r.so3_min.1.abs() < 1e-12);
        assert!(r.o3_min.1.abs() < 1e-12);
        assert!((r.so3_min.0.matrix() - Matrix3::identity()).abs().max() < 1e-12);
    }

    #[test]
    fn single_term_indefinite_case() {
        let m = WeightMatrix(Matrix3::from_diagonal(&Vector3::new(2., 1., -0.5)));
        let r = single_term_minimizers(&m, &Rotation::identity());
        assert!(r.so3_min.1.abs() < 1e-12);
        assert!((r.so3_min.0.matrix() - Matrix3::identity()).abs().max() < 1e-12);
        assert_relative_eq!(r.o3_min.1, -1.0, epsilon = 1e-12);
        let refl = Matrix3::from_diagonal(&Vector3::new(1., 1., -1.));
        assert!((r.o3_min.0 - refl).abs().max() < 1e-12);
        assert!(!r.degenerate);
    }

    #[test]
    fn single_term_degenerate_flag() {
        let m = WeightMatrix(Matrix3::from_diagonal(&Vector3::new(2., 1., -1.)));
        let r = single_term_minimizers(&m, &Rotation::identity());
        assert!(r.degenerate);
        assert!(Rotation::new(*r.so3_min.0.matrix()).is_ok());
    }

    fn edge(i: usize, j: usize, r: Rotation, h: Matrix3<f64>) -> EdgeMeasurement {
        EdgeMeasurement::new(i, j, r, h).unwrap()
    }

    #[test]
    fn assemble_single_iso_edge() {
        let e = edge(0, 1, Rotation::identity(), Matrix3::identity() * 2.0);
        let c = assemble_cost(&[e], 2, CostMode::Iso, 0.0).unwrap();
        assert_eq!(c.scale(), 1.0);
        assert_eq!(c.block(0, 1), Matrix3::identity());
        assert_eq!(c.block(1, 0), Matrix3::identity());
        assert_eq!(c.block(0, 0), Matrix3::zeros());
        assert_eq!(c.block(1, 1), Matrix3::zeros());
    }

    #[test]
    fn assemble_scale_is_mean_lambda_max() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r1 = Rotation::random(&mut rng);
        let r2 = Rotation::random(&mut rng);
        let h1 = Matrix3::from_diagonal(&Vector3::new(2., 1., 0.5));
        let h2 = Matrix3::from_diagonal(&Vector3::new(1., 4., 3.));
        let edges = [edge(0, 1, r1, h1), edge(1, 2, r2, h2)];
        let c = assemble_cost(&edges, 3, CostMode::Aniso, 0.0).unwrap();
        assert_relative_eq!(c.scale(), 3.0);
        let m1 = weight_from_hessian(&h1).unwrap().0;
        assert!((c.block(0, 1) - m1 * r1.matrix() / 3.0).abs().max() < 1e-15);
    }

    #[test]
    fn assemble_alpha_zero_is_plain_weighting() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let r = Rotation::random(&mut rng);
        let h = random_psd(&mut rng);
        let m = weight_from_hessian(&h).unwrap().0;
        let w = weighted_measurement(&m, &r, 0.0);
        assert_eq!(w, m * r.matrix());
        // α = 1 moves M to the right-hand side: R̃ M
        let w1 = weighted_measurement(&m, &r, 1.0);
        assert!((w1 - r.matrix() * m).abs().max() < 1e-12);
    }

    #[test]
    fn assemble_errors() {
        let r = Rotation::identity();
        let h = Matrix3::identity();
        let dup = [edge(0, 1, r, h), edge(1, 0, r, h)];
        assert!(matches!(
            assemble_cost(&dup, 2, CostMode::Aniso, 0.0),
            Err(Error::DuplicateEdge(0, 1))
        ));
        assert!(matches!(
            assemble_cost(&[edge(0, 5, r, h)], 3, CostMode::Iso, 0.0),
            Err(Error::IndexOutOfRange { .. })
        ));
        assert!(assemble_cost(&[edge(0, 1, r, h)], 2, CostMode::Iso, 1.5).is_err());
        assert!(assemble_cost(&[edge(0, 1, r, h)], 2, CostMode::Iso, -0.1).is_err());
    }

    #[test]
    fn reversed_edge_gives_same_cost() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let e = edge(0, 1, Rotation::random(&mut rng), random_psd(&mut rng));
            let a = assemble_cost(std::slice::from_ref(&e), 2, CostMode::Aniso, 0.0).unwrap();
            let b = assemble_cost(&[e.reversed()], 2, CostMode::Aniso, 0.0).unwrap();
            assert!((a.dense() - b.dense()).abs().max() < 1e-12);
        }
    }

    #[test]
    fn objective_fixed_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rots: Vec<_> = (0..3).map(|_| Rotation::random(&mut rng)).collect();
        assert_eq!(objective_value(&CostMatrix::zeros(3), &rots).unwrap(), 0.0);

        let rel = rots[0].compose(&rots[1].transpose());
        let e = edge(0, 1, rel, Matrix3::identity());
        let c = assemble_cost(&[e], 2, CostMode::Iso, 0.0).unwrap();
        assert_relative_eq!(
            objective_value(&c, &rots[..2]).unwrap(),
            -6.0,
            epsilon = 1e-12
        );
        assert!(objective_value(&c, &rots).is_err());
    }

    #[test]
    fn objective_matches_dense_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 5;
        let rots: Vec<_> = (0..n).map(|_| Rotation::random(&mut rng)).collect();
        let mut edges = vec![];
        for i in 0..n {
            for j in i + 1..n {
                edges.push(edge(i, j, Rotation::random(&mut rng), random_psd(&mut rng)));
            }
        }
        let c = assemble_cost(&edges, n, CostMode::Aniso, 0.0).unwrap();
        let mut stacked = DMatrix::zeros(3 * n, 3);
        for (k, r) in rots.iter().enumerate() {
            stacked
                .fixed_view_mut::<3, 3>(3 * k, 0)
                .copy_from(r.matrix());
        }
        let dense = -(c.dense() * &stacked * stacked.transpose()).trace();
        assert_relative_eq!(objective_value(&c, &rots).unwrap(), dense, epsilon = 1e-10);
        let n_dense = c.dense();
        assert!((n_dense.clone() - n_dense.transpose()).abs().max() == 0.0);
    }

    #[test]
    fn ground_truth_minimizes_noise_free_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 4;
        for _ in 0..100 {
            let gt: Vec<_> = (0..n).map(|_| Rotation::random(&mut rng)).collect();
            let mut edges = vec![];
            for i in 0..n {
                for j in i + 1..n {
                    let rel = gt[i].compose(&gt[j].transpose());
                    edges.push(edge(i, j, rel, random_psd(&mut rng)));
                }
            }
            let c = assemble_cost(&edges, n, CostMode::Aniso, 0.0).unwrap();
            let at_truth = objective_value(&c, &gt).unwrap();
            let perturbed: Vec<_> = gt
                .iter()
                .map(|r| {
                    let d = Vector3::from_fn(|_, _| rng.random_range(-0.2..0.2));
                    exp_map(&AxisAngle(d)).compose(r)
                })
                .collect();
            assert!(at_truth <= objective_value(&c, &perturbed).unwrap() + 1e-12);
        }
    }
}
