//! Synthetic instances with Gaussian tangent-space noise.
//!
//! All randomness comes from a ChaCha8 stream seeded with the configured
//! seed, so an instance is a pure function of its config.

use nalgebra::{Matrix3, Vector3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::aniso::EdgeMeasurement;
use crate::error::{Error, Result};
use crate::sdp::component_count;
use crate::so3::{exp_map, AxisAngle, Rotation};

/// Name of the PRNG recorded next to every seed.
pub const RNG_ALGORITHM: &str = "ChaCha8";

/// Edge-set draws attempted before a spanning tree is patched in.
pub const CONNECTIVITY_RESAMPLES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }
}

impl std::str::FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "x" => Ok(Axis::X),
            "y" => Ok(Axis::Y),
            "z" => Ok(Axis::Z),
            other => Err(Error::Parse(format!("unknown axis '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Protocol {
    Uniform,
    ToyThreeCam { sigma: f64, axis: Axis, eps: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_cams: usize,
    /// Probability that an unordered pair is measured.
    pub edge_fraction: f64,
    /// Eigenvalue range of the noise covariance `H⁻¹`.
    pub cov_eig_range: (f64, f64),
    pub seed: u64,
    pub protocol: Protocol,
}

impl SynthConfig {
    pub fn uniform(
        n_cams: usize,
        edge_fraction: f64,
        cov_eig_range: (f64, f64),
        seed: u64,
    ) -> Self {
        SynthConfig {
            n_cams,
            edge_fraction,
            cov_eig_range,
            seed,
            protocol: Protocol::Uniform,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.cov_eig_range;
        match self.protocol {
            Protocol::Uniform => {
                if self.n_cams < 2 {
                    return Err(Error::InvalidInput(format!(
                        "need at least two cameras, got {}",
                        self.n_cams
                    )));
                }
                if !(self.edge_fraction > 0.0 && self.edge_fraction <= 1.0) {
                    return Err(Error::InvalidInput(format!(
                        "edge fraction {} outside (0, 1]",
                        self.edge_fraction
                    )));
                }
                if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                    return Err(Error::InvalidInput(format!(
                        "covariance eigenvalue range ({lo}, {hi}) must satisfy 0 < lo ≤ hi"
                    )));
                }
            }
            Protocol::ToyThreeCam { sigma, eps, .. } => {
                if !(sigma > 0.0 && eps > 0.0 && sigma.is_finite() && eps.is_finite()) {
                    return Err(Error::InvalidInput(format!(
                        "toy variances must be positive (sigma {sigma}, eps {eps})"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub n_cams: usize,
    pub ground_truth: Vec<Rotation>,
    pub edges: Vec<EdgeMeasurement>,
}

/// Draws `ω ~ N(0, Σ)` given `Σ = Q diag(λ) Qᵀ`.
fn gaussian_tangent<R: Rng + ?Sized>(
    rng: &mut R,
    q: &Matrix3<f64>,
    eig: &Vector3<f64>,
) -> Vector3<f64> {
    let z = Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
    q * eig.map(f64::sqrt).component_mul(&z)
}

/// `R̃ = exp([ω]×) Rᵢ Rⱼᵀ` with `ω ~ N(0, Q diag(λ) Qᵀ)`, stored with `H = Σ⁻¹`.
fn noisy_edge<R: Rng + ?Sized>(
    rng: &mut R,
    gt: &[Rotation],
    i: usize,
    j: usize,
    q: &Matrix3<f64>,
    cov_eig: &Vector3<f64>,
) -> Result<EdgeMeasurement> {
    let omega = gaussian_tangent(rng, q, cov_eig);
    let r_tilde = exp_map(&AxisAngle(omega)).compose(&gt[i].compose(&gt[j].transpose()));
    let h = q * Matrix3::from_diagonal(&cov_eig.map(|l| 1.0 / l)) * q.transpose();
    EdgeMeasurement::new(i, j, r_tilde, (h + h.transpose()) * 0.5)
}

fn draw_edge_set<R: Rng + ?Sized>(rng: &mut R, n: usize, p: f64) -> Vec<(usize, usize)> {
    let mut pairs = vec![];
    for i in 0..n {
        for j in i + 1..n {
            if p >= 1.0 || rng.random::<f64>() < p {
                pairs.push((i, j));
            }
        }
    }
    pairs
}

/// Adds the missing edges of a random spanning tree (random-order path).
fn patch_connectivity<R: Rng + ?Sized>(rng: &mut R, n: usize, pairs: &mut Vec<(usize, usize)>) {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    for w in order.windows(2) {
        let e = (w[0].min(w[1]), w[0].max(w[1]));
        if !pairs.contains(&e) {
            pairs.push(e);
        }
    }
    pairs.sort_unstable();
}

/// Measured camera pairs, connected by construction.
pub fn connected_edge_set<R: Rng + ?Sized>(rng: &mut R, n: usize, p: f64) -> Vec<(usize, usize)> {
    let mut pairs = draw_edge_set(rng, n, p);
    for _ in 1..CONNECTIVITY_RESAMPLES {
        if component_count(n, pairs.iter().copied()) == 1 {
            return pairs;
        }
        pairs = draw_edge_set(rng, n, p);
    }
    if component_count(n, pairs.iter().copied()) != 1 {
        patch_connectivity(rng, n, &mut pairs);
    }
    pairs
}

pub fn generate(config: &SynthConfig) -> Result<Instance> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    if let Protocol::ToyThreeCam { sigma, axis, eps } = config.protocol {
        return toy_three_cam_with(&mut rng, sigma, axis, eps);
    }
    let n = config.n_cams;
    let (lo, hi) = config.cov_eig_range;
    let ground_truth: Vec<Rotation> = (0..n).map(|_| Rotation::random(&mut rng)).collect();
    let pairs = connected_edge_set(&mut rng, n, config.edge_fraction);
    let mut edges = Vec::with_capacity(pairs.len());
    for (i, j) in pairs {
        let q = *Rotation::random(&mut rng).matrix();
        let eig = Vector3::from_fn(|_, _| {
            if lo == hi {
                lo
            } else {
                rng.random_range(lo..=hi)
            }
        });
        edges.push(noisy_edge(&mut rng, &ground_truth, i, j, &q, &eig)?);
    }
    Ok(Instance {
        n_cams: n,
        ground_truth,
        edges,
    })
}

/// Three cameras; edges (1,2) and (0,2) have covariance `εI`, edge (0,1) has
/// `σ` on `axis` and `ε` on the other two axes.
pub fn toy_three_cam(sigma: f64, axis: Axis, eps: f64, seed: u64) -> Result<Instance> {
    generate(&SynthConfig {
        n_cams: 3,
        edge_fraction: 1.0,
        cov_eig_range: (eps.min(sigma), eps.max(sigma)),
        seed,
        protocol: Protocol::ToyThreeCam { sigma, axis, eps },
    })
}

fn toy_three_cam_with<R: Rng + ?Sized>(
    rng: &mut R,
    sigma: f64,
    axis: Axis,
    eps: f64,
) -> Result<Instance> {
    let ground_truth: Vec<Rotation> = (0..3).map(|_| Rotation::random(rng)).collect();
    let identity = Matrix3::identity();
    let mut gray = Vector3::repeat(eps);
    gray[axis.index()] = sigma;
    let edges = vec![
        noisy_edge(rng, &ground_truth, 0, 1, &identity, &gray)?,
        noisy_edge(rng, &ground_truth, 0, 2, &identity, &Vector3::repeat(eps))?,
        noisy_edge(rng, &ground_truth, 1, 2, &identity, &Vector3::repeat(eps))?,
    ];
    Ok(Instance {
        n_cams: 3,
        ground_truth,
        edges,
    })
}

/// Noise-free measurements `R̃ᵢⱼ = RᵢRⱼᵀ` on the same graph and Hessians.
pub fn noise_free(instance: &Instance) -> Instance {
    let gt = &instance.ground_truth;
    let edges = instance
        .edges
        .iter()
        .map(|e| EdgeMeasurement {
            r_tilde: gt[e.i].compose(&gt[e.j].transpose()),
            ..e.clone()
        })
        .collect();
    Instance {
        n_cams: instance.n_cams,
        ground_truth: gt.clone(),
        edges,
    }
}
