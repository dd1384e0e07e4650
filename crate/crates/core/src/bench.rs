//! Batch experiments over synthetic protocols with plot-ready CSV output.
//!
//! Rows are emitted one per (instance, method). Instance seeds depend only on
//! the base seed, the configuration index and the instance index, so any row
//! can be regenerated in isolation. The toy protocol reuses the same seeds for
//! every σ, which keeps the noise draws common across the sweep.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::io::{write_atomic, Problem};
use crate::pipeline::{indefinite_weight_percent, run_method, Method, SolveOptions};
use crate::sdp::Formulation;
use crate::synth::{generate, Axis, Protocol, SynthConfig, RNG_ALGORITHM};

pub const ROWS_FILE: &str = "rows.csv";
pub const SUMMARY_FILE: &str = "summary.csv";

pub const CSV_HEADER: &str =
    "protocol,config,instance,seed,rng,n_cams,n_edges,edge_fraction,sigma,axis,\
method,status,iterations,rank,tight,relative_gap,chordal_err,mahalanobis_err,rms_angular_deg,\
runtime_s,indefinite_pct";

pub const SUMMARY_HEADER: &str = "protocol,config,method,instances,median_chordal_err,\
median_rms_angular_deg,median_runtime_s,tight_fraction,rank3_fraction,optimal_fraction";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchProtocol {
    Fig2,
    Fig3,
    Toy,
}

impl BenchProtocol {
    pub fn name(self) -> &'static str {
        match self {
            BenchProtocol::Fig2 => "fig2",
            BenchProtocol::Fig3 => "fig3",
            BenchProtocol::Toy => "toy",
        }
    }
}

impl std::str::FromStr for BenchProtocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fig2" => Ok(BenchProtocol::Fig2),
            "fig3" => Ok(BenchProtocol::Fig3),
            "toy" => Ok(BenchProtocol::Toy),
            other => Err(Error::Parse(format!(
                "unknown protocol '{other}' (expected fig2, fig3 or toy)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub protocol: BenchProtocol,
    pub n_list: Vec<usize>,
    pub p_list: Vec<f64>,
    pub instances: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub cov_eig_range: (f64, f64),
    pub sigmas: Vec<f64>,
    pub axes: Vec<Axis>,
    pub eps: f64,
    /// Solver and rounding options; the method field is overridden per row.
    pub solve: SolveOptions,
}

impl BenchConfig {
    pub fn defaults(protocol: BenchProtocol) -> Self {
        let base = BenchConfig {
            protocol,
            n_list: vec![],
            p_list: vec![],
            instances: 0,
            seed: 0,
            methods: vec![],
            cov_eig_range: (0.01, 0.1),
            sigmas: vec![],
            axes: vec![],
            eps: 0.001,
            solve: SolveOptions::default(),
        };
        match protocol {
            BenchProtocol::Fig2 => BenchConfig {
                n_list: vec![15],
                p_list: vec![1.0],
                instances: 50,
                methods: vec![
                    Method::Sdp(Formulation::O3Aniso),
                    Method::Sdp(Formulation::Cso3Aniso),
                ],
                cov_eig_range: (0.1, 1.0),
                ..base
            },
            BenchProtocol::Fig3 => BenchConfig {
                n_list: vec![5, 10, 20],
                p_list: vec![0.4, 0.8],
                instances: 100,
                methods: vec![
                    Method::Sdp(Formulation::O3Iso),
                    Method::Sdp(Formulation::Cso3Iso),
                    Method::Sdp(Formulation::Cso3Aniso),
                    Method::Spectral,
                ],
                ..base
            },
            BenchProtocol::Toy => BenchConfig {
                n_list: vec![3],
                p_list: vec![1.0],
                instances: 20,
                methods: vec![
                    Method::Sdp(Formulation::O3Iso),
                    Method::Sdp(Formulation::Cso3Aniso),
                ],
                sigmas: vec![0.01, 0.05, 0.1, 0.2, 0.3],
                axes: Axis::ALL.to_vec(),
                ..base
            },
        }
    }

    /// Every synthetic configuration of the sweep, with its label.
    pub fn grid(&self) -> Vec<(String, SynthConfig)> {
        let mut out = vec![];
        match self.protocol {
            BenchProtocol::Fig2 | BenchProtocol::Fig3 => {
                for &n in &self.n_list {
                    for &p in &self.p_list {
                        out.push((
                            format!("n={n};p={p}"),
                            SynthConfig::uniform(n, p, self.cov_eig_range, 0),
                        ));
                    }
                }
            }
            BenchProtocol::Toy => {
                for &axis in &self.axes {
                    for &sigma in &self.sigmas {
                        let axis_name = format!("{axis:?}").to_lowercase();
                        out.push((
                            format!("axis={axis_name};sigma={sigma}"),
                            SynthConfig {
                                n_cams: 3,
                                edge_fraction: 1.0,
                                cov_eig_range: (self.eps.min(sigma), self.eps.max(sigma)),
                                seed: 0,
                                protocol: Protocol::ToyThreeCam {
                                    sigma,
                                    axis,
                                    eps: self.eps,
                                },
                            },
                        ));
                    }
                }
            }
        }
        out
    }

    pub fn instance_seed(&self, config_index: usize, instance: usize) -> u64 {
        let offset = match self.protocol {
            BenchProtocol::Toy => 0,
            _ => 1_000_000 * config_index as u64,
        };
        self.seed.wrapping_add(offset).wrapping_add(instance as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub protocol: String,
    pub config: String,
    pub instance: usize,
    pub seed: u64,
    pub n_cams: usize,
    pub n_edges: usize,
    pub edge_fraction: f64,
    pub sigma: Option<f64>,
    pub axis: Option<Axis>,
    pub method: Method,
    /// Solver status, `ok` for the spectral method, or `error`.
    pub status: String,
    pub iterations: Option<usize>,
    pub rank: Option<usize>,
    pub tight: Option<bool>,
    pub relative_gap: Option<f64>,
    pub chordal_err: Option<f64>,
    pub mahalanobis_err: Option<f64>,
    pub rms_angular_deg: Option<f64>,
    pub runtime_s: f64,
    pub indefinite_pct: f64,
}

fn opt<T: std::fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map(|x| x.to_string()).unwrap_or_default()
}

impl BenchRow {
    pub fn to_csv(&self) -> String {
        let axis = self.axis.map(|a| format!("{a:?}").to_lowercase());
        [
            self.protocol.clone(),
            self.config.clone(),
            self.instance.to_string(),
            self.seed.to_string(),
            RNG_ALGORITHM.to_string(),
            self.n_cams.to_string(),
            self.n_edges.to_string(),
            self.edge_fraction.to_string(),
            opt(&self.sigma),
            axis.unwrap_or_default(),
            self.method.to_string(),
            self.status.clone(),
            opt(&self.iterations),
            opt(&self.rank),
            opt(&self.tight.map(u8::from)),
            opt(&self.relative_gap),
            opt(&self.chordal_err),
            opt(&self.mahalanobis_err),
            opt(&self.rms_angular_deg),
            self.runtime_s.to_string(),
            self.indefinite_pct.to_string(),
        ]
        .join(",")
    }
}

/// Runs the sweep, handing each row to `sink` as soon as it is ready.
pub fn run_bench(config: &BenchConfig, mut sink: impl FnMut(&BenchRow)) -> Result<Vec<BenchRow>> {
    let mut rows = vec![];
    for (ci, (label, synth)) in config.grid().into_iter().enumerate() {
        for k in 0..config.instances {
            let seed = config.instance_seed(ci, k);
            let inst = generate(&SynthConfig {
                seed,
                ..synth.clone()
            })?;
            let problem = Problem {
                n_cams: inst.n_cams,
                edges: inst.edges,
                ground_truth: Some(inst.ground_truth),
                metadata: None,
            };
            let gt = problem.ground_truth.as_deref().unwrap_or_default();
            let indefinite_pct = indefinite_weight_percent(&problem)?;
            let (sigma, axis) = match synth.protocol {
                Protocol::ToyThreeCam { sigma, axis, .. } => (Some(sigma), Some(axis)),
                Protocol::Uniform => (None, None),
            };
            for &method in &config.methods {
                let options = SolveOptions {
                    method,
                    ..config.solve.clone()
                };
                let mut row = BenchRow {
                    protocol: config.protocol.name().to_string(),
                    config: label.clone(),
                    instance: k,
                    seed,
                    n_cams: problem.n_cams,
                    n_edges: problem.edges.len(),
                    edge_fraction: synth.edge_fraction,
                    sigma,
                    axis,
                    method,
                    status: "error".into(),
                    iterations: None,
                    rank: None,
                    tight: None,
                    relative_gap: None,
                    chordal_err: None,
                    mahalanobis_err: None,
                    rms_angular_deg: None,
                    runtime_s: 0.0,
                    indefinite_pct,
                };
                if let Ok(outcome) = run_method(&problem, &options) {
                    let metrics = evaluate(
                        method.name(),
                        gt,
                        &outcome.rotations,
                        &problem.edges,
                        outcome.runtime_s,
                    )?;
                    row.status = outcome
                        .solver
                        .as_ref()
                        .map(|s| format!("{:?}", s.status))
                        .unwrap_or_else(|| "ok".into());
                    row.iterations = outcome.solver.as_ref().map(|s| s.iterations);
                    row.rank = outcome.certificate.as_ref().map(|c| c.rank_estimate);
                    row.tight = outcome.certificate.as_ref().map(|c| c.tight);
                    row.relative_gap = outcome.certificate.as_ref().map(|c| c.relative_gap);
                    row.chordal_err = Some(metrics.chordal_err);
                    row.mahalanobis_err = Some(metrics.mahalanobis_err);
                    row.rms_angular_deg = Some(metrics.rms_angular_deg);
                    row.runtime_s = outcome.runtime_s;
                }
                sink(&row);
                rows.push(row);
            }
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub protocol: String,
    pub config: String,
    pub method: Method,
    pub instances: usize,
    pub median_chordal_err: Option<f64>,
    pub median_rms_angular_deg: Option<f64>,
    pub median_runtime_s: Option<f64>,
    pub tight_fraction: Option<f64>,
    pub rank3_fraction: Option<f64>,
    pub optimal_fraction: Option<f64>,
}

impl SummaryRow {
    pub fn to_csv(&self) -> String {
        [
            self.protocol.clone(),
            self.config.clone(),
            self.method.to_string(),
            self.instances.to_string(),
            opt(&self.median_chordal_err),
            opt(&self.median_rms_angular_deg),
            opt(&self.median_runtime_s),
            opt(&self.tight_fraction),
            opt(&self.rank3_fraction),
            opt(&self.optimal_fraction),
        ]
        .join(",")
    }
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    })
}

fn fraction(flags: impl Iterator<Item = Option<bool>>) -> Option<f64> {
    let (mut hit, mut total) = (0usize, 0usize);
    for f in flags.flatten() {
        total += 1;
        hit += usize::from(f);
    }
    (total > 0).then(|| hit as f64 / total as f64)
}

/// Medians and rates per (configuration, method), in first-seen order.
pub fn summarize(rows: &[BenchRow]) -> Vec<SummaryRow> {
    let mut keys: Vec<(String, String, Method)> = vec![];
    for r in rows {
        let key = (r.protocol.clone(), r.config.clone(), r.method);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(protocol, config, method)| {
            let group: Vec<&BenchRow> = rows
                .iter()
                .filter(|r| r.protocol == protocol && r.config == config && r.method == method)
                .collect();
            let col = |f: fn(&BenchRow) -> Option<f64>| -> Vec<f64> {
                group.iter().filter_map(|r| f(r)).collect()
            };
            let is_sdp = method.formulation().is_some();
            SummaryRow {
                instances: group.len(),
                median_chordal_err: median(&col(|r| r.chordal_err)),
                median_rms_angular_deg: median(&col(|r| r.rms_angular_deg)),
                median_runtime_s: median(&col(|r| Some(r.runtime_s))),
                tight_fraction: if is_sdp {
                    fraction(group.iter().map(|r| r.tight))
                } else {
                    None
                },
                rank3_fraction: if is_sdp {
                    fraction(group.iter().map(|r| r.rank.map(|k| k == 3)))
                } else {
                    None
                },
                optimal_fraction: if is_sdp {
                    fraction(group.iter().map(|r| Some(r.status == "Optimal")))
                } else {
                    None
                },
                protocol,
                config,
                method,
            }
        })
        .collect()
}

pub fn rows_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{}", r.to_csv());
    }
    out
}

pub fn summary_csv(summary: &[SummaryRow]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for r in summary {
        let _ = writeln!(out, "{}", r.to_csv());
    }
    out
}

/// Runs the sweep and writes `rows.csv` and `summary.csv` into `dir`.
pub fn write_bench(
    config: &BenchConfig,
    dir: &Path,
    sink: impl FnMut(&BenchRow),
) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir)?;
    let rows_path = dir.join(ROWS_FILE);
    let summary_path = dir.join(SUMMARY_FILE);
    // fail early on an unwritable directory
    write_atomic(&rows_path, format!("{CSV_HEADER}\n").as_bytes())?;
    let rows = run_bench(config, sink)?;
    write_atomic(&rows_path, rows_csv(&rows).as_bytes())?;
    write_atomic(&summary_path, summary_csv(&summarize(&rows)).as_bytes())?;
    Ok((rows_path, summary_path))
}
