//! Browser bindings. Each export takes plain numbers or strings and returns a
//! JSON string; the `*_json` functions hold the logic and also run natively.

use nalgebra::{Matrix3, Vector3};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use rotavg::aniso::{single_term_minimizers, weight_from_hessian};
use rotavg::io::{to_row_major, Problem};
use rotavg::pipeline::{solve_problem, Method, SolveOptions};
use rotavg::sdp::Formulation;
use rotavg::so3::{exp_map, hull_margin, in_hull, AxisAngle, HULL_TOL};
use rotavg::synth::{toy_three_cam, Axis};

/// Upper bound on toy seeds per σ, so one click stays interactive.
pub const MAX_TOY_SEEDS: u32 = 20;

fn finite(values: &[f64], what: &str) -> Result<(), String> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(format!("{what} must be finite"))
    }
}

/// `Y = t·exp(a) + (1 − t)·S·exp(b)` with `S = diag(1, 1, −1)` when `reflect_b`.
pub fn hull_point_json(
    a: [f64; 3],
    b: [f64; 3],
    t: f64,
    reflect_b: bool,
) -> Result<String, String> {
    finite(&[a[0], a[1], a[2], b[0], b[1], b[2], t], "inputs")?;
    if !(0.0..=1.0).contains(&t) {
        return Err(format!("t = {t} outside [0, 1]"));
    }
    let ra = *exp_map(&AxisAngle(Vector3::from(a))).matrix();
    let mut rb = *exp_map(&AxisAngle(Vector3::from(b))).matrix();
    if reflect_b {
        rb.row_mut(2).neg_mut();
    }
    let y = ra * t + rb * (1.0 - t);
    let sv = y.svd(false, false).singular_values;
    let out = json!({
        "y": to_row_major(&y),
        "det": y.determinant(),
        "singular_values": [sv[0], sv[1], sv[2]],
        "hull_margin": hull_margin(&y),
        "in_hull": in_hull(&y, HULL_TOL),
    });
    Ok(out.to_string())
}

/// Single-term minima over SO(3) and O(3) for `H = diag(h)` and `R̃ = exp(r)`.
pub fn single_term_json(h: [f64; 3], r: [f64; 3]) -> Result<String, String> {
    finite(&[h[0], h[1], h[2], r[0], r[1], r[2]], "inputs")?;
    if h.iter().any(|v| *v < 0.0) {
        return Err("Hessian eigenvalues must be non-negative".into());
    }
    let hm = Matrix3::from_diagonal(&Vector3::from(h));
    let m = weight_from_hessian(&hm).map_err(|e| e.to_string())?;
    let rt = exp_map(&AxisAngle(Vector3::from(r)));
    let minima = single_term_minimizers(&m, &rt);
    let (so3_r, so3_v) = &minima.so3_min;
    let (o3_r, o3_v) = &minima.o3_min;
    let out = json!({
        "weight_eigenvalues": m.eigenvalues(),
        "indefinite": m.is_indefinite(),
        "so3": { "value": so3_v, "minimizer": to_row_major(so3_r.matrix()) },
        "o3": { "value": o3_v, "minimizer": to_row_major(o3_r), "det": o3_r.determinant() },
        "relaxation_gap": so3_v - o3_v,
        "degenerate": minima.degenerate,
    });
    Ok(out.to_string())
}

/// Mean chordal error of `o3-iso` and `cso3-aniso` on the three-camera toy,
/// per gray-edge variance, over seeds `0..seeds` shared across σ.
pub fn toy_sweep_json(axis: &str, sigmas: &str, seeds: u32) -> Result<String, String> {
    let axis: Axis = axis.parse().map_err(|e: rotavg::Error| e.to_string())?;
    let sigmas: Vec<f64> = sigmas
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| format!("invalid sigma '{s}'"))
        })
        .collect::<Result<_, _>>()?;
    if sigmas.is_empty() || sigmas.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
        return Err("sigmas must be positive".into());
    }
    if seeds == 0 || seeds > MAX_TOY_SEEDS {
        return Err(format!("seeds must be in 1..={MAX_TOY_SEEDS}"));
    }
    let methods = [
        Method::Sdp(Formulation::O3Iso),
        Method::Sdp(Formulation::Cso3Aniso),
    ];
    let mut rows: Vec<Value> = vec![];
    for &sigma in &sigmas {
        let mut sums = [0.0f64; 2];
        let mut tight = [0u32; 2];
        for seed in 0..seeds {
            let inst = toy_three_cam(sigma, axis, 0.001, seed as u64).map_err(|e| e.to_string())?;
            let problem = Problem {
                n_cams: inst.n_cams,
                edges: inst.edges,
                ground_truth: Some(inst.ground_truth),
                metadata: None,
            };
            for (k, method) in methods.iter().enumerate() {
                let opts = SolveOptions {
                    method: *method,
                    ..Default::default()
                };
                let (report, _) = solve_problem(&problem, &opts).map_err(|e| e.to_string())?;
                sums[k] += report.metrics.map_or(f64::NAN, |m| m.chordal_err);
                tight[k] += u32::from(report.certificate.is_some_and(|c| c.tight));
            }
        }
        rows.push(json!({
            "sigma": sigma,
            "iso_err": sums[0] / seeds as f64,
            "aniso_err": sums[1] / seeds as f64,
            "iso_tight": tight[0],
            "aniso_tight": tight[1],
        }));
    }
    Ok(
        json!({ "axis": format!("{axis:?}").to_lowercase(), "seeds": seeds, "rows": rows })
            .to_string(),
    )
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn hull_point(
    ax: f64,
    ay: f64,
    az: f64,
    bx: f64,
    by: f64,
    bz: f64,
    t: f64,
    reflect_b: bool,
) -> Result<String, JsError> {
    hull_point_json([ax, ay, az], [bx, by, bz], t, reflect_b).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn single_term(
    h1: f64,
    h2: f64,
    h3: f64,
    rx: f64,
    ry: f64,
    rz: f64,
) -> Result<String, JsError> {
    single_term_json([h1, h2, h3], [rx, ry, rz]).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn toy_sweep(axis: &str, sigmas: &str, seeds: u32) -> Result<String, JsError> {
    toy_sweep_json(axis, sigmas, seeds).map_err(|e| JsError::new(&e))
}
