//! Gauge-invariant error metrics against ground truth.
//!
//! Every metric first aligns the estimate with the chordal-optimal global
//! rotation, so a common right factor on `est` never changes the result.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::aniso::EdgeMeasurement;
use crate::error::{Error, Result};
use crate::so3::{align_gauge, log_map, Rotation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub method: String,
    pub n_cams: usize,
    pub n_edges: usize,
    pub chordal_err: f64,
    pub mahalanobis_err: f64,
    pub rms_angular_deg: f64,
    pub runtime_s: f64,
}

fn aligned(gt: &[Rotation], est: &[Rotation]) -> Result<Vec<Rotation>> {
    if gt.len() != est.len() {
        return Err(Error::DimensionMismatch {
            expected: gt.len(),
            got: est.len(),
        });
    }
    Ok(align_gauge(est, gt)?.1)
}

/// `√(Σᵢ ‖Rᵢ − Rᵢ*‖²_F)` after gauge alignment.
pub fn chordal_error(gt: &[Rotation], est: &[Rotation]) -> Result<f64> {
    let est = aligned(gt, est)?;
    chordal_deviation(gt, &est)
}

/// [`chordal_error`] without the alignment step.
pub fn chordal_deviation(gt: &[Rotation], est: &[Rotation]) -> Result<f64> {
    if gt.len() != est.len() {
        return Err(Error::DimensionMismatch {
            expected: gt.len(),
            got: est.len(),
        });
    }
    Ok(est
        .iter()
        .zip(gt)
        .map(|(e, g)| (e.matrix() - g.matrix()).norm_squared())
        .sum::<f64>()
        .sqrt())
}

/// Per-camera information `Hᵢ = Σⱼ Hᵢⱼ`, each edge expressed in camera `i`'s
/// left-perturbation frame.
pub fn camera_information(edges: &[EdgeMeasurement], n: usize) -> Result<Vec<Matrix3<f64>>> {
    let mut info = vec![Matrix3::zeros(); n];
    for e in edges {
        if e.i >= n || e.j >= n {
            return Err(Error::IndexOutOfRange { i: e.i, j: e.j, n });
        }
        info[e.i] += e.hessian;
        info[e.j] += e.reversed().hessian;
    }
    Ok(info)
}

/// `√(Σᵢ min± Δω±ᵀ Hᵢ Δω±)` with `Δω± = ωᵢ ± ωᵢ*`, after gauge alignment.
pub fn mahalanobis_error(
    gt: &[Rotation],
    est: &[Rotation],
    edges: &[EdgeMeasurement],
) -> Result<f64> {
    let est = aligned(gt, est)?;
    mahalanobis_deviation(gt, &est, edges)
}

/// [`mahalanobis_error`] without the alignment step.
pub fn mahalanobis_deviation(
    gt: &[Rotation],
    est: &[Rotation],
    edges: &[EdgeMeasurement],
) -> Result<f64> {
    if gt.len() != est.len() {
        return Err(Error::DimensionMismatch {
            expected: gt.len(),
            got: est.len(),
        });
    }
    let info = camera_information(edges, gt.len())?;
    let mut total = 0.0;
    for ((e, g), h) in est.iter().zip(gt).zip(&info) {
        let w = log_map(e).0;
        let w_star = log_map(g).0;
        let minus = w - w_star;
        let plus = w + w_star;
        total += minus.dot(&(h * minus)).min(plus.dot(&(h * plus)));
    }
    Ok(total.max(0.0).sqrt())
}

/// Root-mean-square of `∠(estᵢ gtᵢᵀ)` in degrees, after gauge alignment.
pub fn rms_angular_error(gt: &[Rotation], est: &[Rotation]) -> Result<f64> {
    let est = aligned(gt, est)?;
    rms_angular_deviation(gt, &est)
}

/// [`rms_angular_error`] without the alignment step.
pub fn rms_angular_deviation(gt: &[Rotation], est: &[Rotation]) -> Result<f64> {
    if gt.len() != est.len() {
        return Err(Error::DimensionMismatch {
            expected: gt.len(),
            got: est.len(),
        });
    }
    if est.is_empty() {
        return Ok(0.0);
    }
    let mean_sq = est
        .iter()
        .zip(gt)
        .map(|(e, g)| e.compose(&g.transpose()).angle().powi(2))
        .sum::<f64>()
        / est.len() as f64;
    Ok(mean_sq.sqrt().to_degrees())
}

pub fn evaluate(
    method: &str,
    gt: &[Rotation],
    est: &[Rotation],
    edges: &[EdgeMeasurement],
    runtime_s: f64,
) -> Result<MetricsReport> {
    Ok(MetricsReport {
        method: method.to_string(),
        n_cams: gt.len(),
        n_edges: edges.len(),
        chordal_err: chordal_error(gt, est)?,
        mahalanobis_err: mahalanobis_error(gt, est, edges)?,
        rms_angular_deg: rms_angular_error(gt, est)?,
        runtime_s,
    })
}
