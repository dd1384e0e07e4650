//! Versioned JSON problem files.
//!
//! Matrices are stored as nine reals in row-major order. Rotations are only
//! ever serialised as matrices.

use std::path::Path;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::aniso::EdgeMeasurement;
use crate::error::{Error, Result};
use crate::so3::{closest_rotation, Rotation};

pub const PROBLEM_VERSION: &str = "rotavg-problem/1";

/// Orthogonality and determinant slack accepted when parsing.
pub const PARSE_ROTATION_TOL: f64 = 1e-6;

pub type Mat9 = [f64; 9];

pub fn to_row_major(m: &Matrix3<f64>) -> Mat9 {
    let mut out = [0.0; 9];
    for r in 0..3 {
        for c in 0..3 {
            out[3 * r + c] = m[(r, c)];
        }
    }
    out
}

pub fn from_row_major(v: &Mat9) -> Matrix3<f64> {
    Matrix3::from_row_slice(v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub i: usize,
    pub j: usize,
    pub r_tilde: Mat9,
    pub hessian: Mat9,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rng: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub protocol: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemFile {
    pub version: String,
    pub n_cams: usize,
    pub edges: Vec<EdgeRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<Vec<Mat9>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<Metadata>,
}

/// Validated in-memory problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub n_cams: usize,
    pub edges: Vec<EdgeMeasurement>,
    pub ground_truth: Option<Vec<Rotation>>,
    pub metadata: Option<Metadata>,
}

fn parse_rotation(v: &Mat9, what: &str) -> Result<Rotation> {
    let m = from_row_major(v);
    Rotation::with_tolerance(m, PARSE_ROTATION_TOL)
        .map_err(|e| Error::Parse(format!("{what}: {e}")))?;
    // re-project so downstream code sees the strict invariant
    match Rotation::new(m) {
        Ok(r) => Ok(r),
        Err(_) => Ok(closest_rotation(&m)),
    }
}

impl ProblemFile {
    pub fn from_problem(problem: &Problem) -> Self {
        ProblemFile {
            version: PROBLEM_VERSION.to_string(),
            n_cams: problem.n_cams,
            edges: problem
                .edges
                .iter()
                .map(|e| EdgeRecord {
                    i: e.i,
                    j: e.j,
                    r_tilde: to_row_major(e.r_tilde.matrix()),
                    hessian: to_row_major(&e.hessian),
                })
                .collect(),
            ground_truth: problem
                .ground_truth
                .as_ref()
                .map(|gt| gt.iter().map(|r| to_row_major(r.matrix())).collect()),
            metadata: problem.metadata.clone(),
        }
    }

    /// Checks every invariant and builds the in-memory problem.
    pub fn validate(&self) -> Result<Problem> {
        if self.version != PROBLEM_VERSION {
            return Err(Error::Parse(format!(
                "unsupported version '{}' (expected '{PROBLEM_VERSION}')",
                self.version
            )));
        }
        let n = self.n_cams;
        if n < 2 {
            return Err(Error::Parse(format!("n_cams must be at least 2, got {n}")));
        }
        let mut seen = std::collections::BTreeSet::new();
        let mut edges = Vec::with_capacity(self.edges.len());
        for (k, rec) in self.edges.iter().enumerate() {
            let label = format!("edge {k} ({}, {})", rec.i, rec.j);
            if rec.i >= n || rec.j >= n {
                return Err(Error::Parse(format!(
                    "{label}: camera index outside 0..{n}"
                )));
            }
            if !seen.insert((rec.i.min(rec.j), rec.i.max(rec.j))) {
                return Err(Error::Parse(format!("{label}: duplicate camera pair")));
            }
            let r_tilde = parse_rotation(&rec.r_tilde, &format!("{label} r_tilde"))?;
            let h = from_row_major(&rec.hessian);
            let e = EdgeMeasurement::new(rec.i, rec.j, r_tilde, h)
                .map_err(|e| Error::Parse(format!("{label}: {e}")))?;
            edges.push(e);
        }
        let ground_truth = match &self.ground_truth {
            None => None,
            Some(gt) => {
                if gt.len() != n {
                    return Err(Error::Parse(format!(
                        "ground_truth has {} rotations for {n} cameras",
                        gt.len()
                    )));
                }
                Some(
                    gt.iter()
                        .enumerate()
                        .map(|(k, v)| parse_rotation(v, &format!("ground_truth {k}")))
                        .collect::<Result<Vec<_>>>()?,
                )
            }
        };
        Ok(Problem {
            n_cams: n,
            edges,
            ground_truth,
            metadata: self.metadata.clone(),
        })
    }
}

pub fn parse_problem(bytes: &[u8]) -> Result<Problem> {
    let file: ProblemFile =
        serde_json::from_slice(bytes).map_err(|e| Error::Parse(format!("problem file: {e}")))?;
    file.validate()
}

pub fn problem_to_json(problem: &Problem) -> Result<String> {
    serde_json::to_string_pretty(&ProblemFile::from_problem(problem))
        .map_err(|e| Error::Parse(e.to_string()))
}

pub fn read_problem(path: &Path) -> Result<Problem> {
    parse_problem(&std::fs::read(path)?)
}

/// Writes through a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_problem(problem: &Problem, path: &Path) -> Result<()> {
    let mut text = problem_to_json(problem)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}
