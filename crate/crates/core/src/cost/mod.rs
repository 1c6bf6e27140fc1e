//! Control cost `c(x, y) = inf int_{t0}^{t1} L ds` over trajectories of
//! `x' = f(x, u)` joining `x` to `y`.

mod oracle;
mod shooting;
mod transcription;

pub use oracle::{cost_dp_oracle, OracleSettings, BIG};
pub use shooting::{cost_shooting, ShootingSettings};
pub use transcription::{cost_transcription, TranscriptionSettings};

use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::characteristics::CharError;
use crate::io::fmt_f64;
use crate::problem::{ControlProblem, ProblemError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CostError {
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Characteristic(#[from] CharError),
    #[error("no shooting start converged (best residual {residual:e})")]
    NotConverged { residual: f64 },
    #[error("transcription terminal gap {gap:e} exceeds {tolerance:e}")]
    TerminalGap { gap: f64, tolerance: f64 },
    #[error("invalid query: {0}")]
    Query(String),
    #[error("the grid oracle supports n <= 2, got n = {0}")]
    OracleDimension(usize),
}

/// A cost value; unreachable targets are a distinct state, not a large float.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cost {
    Finite(f64),
    Infeasible,
}

impl Cost {
    pub fn finite(self) -> Option<f64> {
        match self {
            Cost::Finite(v) => Some(v),
            Cost::Infeasible => None,
        }
    }

    pub fn is_infeasible(self) -> bool {
        self == Cost::Infeasible
    }
}

impl fmt::Display for Cost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cost::Finite(v) => f.write_str(&fmt_f64(*v)),
            Cost::Infeasible => f.write_str("inf"),
        }
    }
}

impl Serialize for Cost {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Cost::Finite(v) => s.serialize_f64(*v),
            Cost::Infeasible => s.serialize_str("inf"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CostMethod {
    Shooting,
    Transcription,
    Oracle,
}

impl fmt::Display for CostMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CostMethod::Shooting => "shooting",
            CostMethod::Transcription => "transcription",
            CostMethod::Oracle => "oracle",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostQuery {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub t0: f64,
    pub t1: f64,
}

impl CostQuery {
    /// Query over the unit interval `[0, 1]`.
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        CostQuery { x, y, t0: 0.0, t1: 1.0 }
    }

    pub fn over(mut self, t0: f64, t1: f64) -> Self {
        self.t0 = t0;
        self.t1 = t1;
        self
    }

    pub(crate) fn validate(&self, prob: &ControlProblem) -> Result<(), CostError> {
        let n = prob.n();
        if self.x.len() != n || self.y.len() != n {
            return Err(CostError::Query(format!("endpoints must have {n} components")));
        }
        if !self.t0.is_finite() || !self.t1.is_finite() || self.t0 >= self.t1 {
            return Err(CostError::Query(format!("need t0 < t1, got [{}, {}]", self.t0, self.t1)));
        }
        let slack = 1e-12 * prob.domain().max_width();
        if !prob.domain().contains(&self.x, slack) || !prob.domain().contains(&self.y, slack) {
            return Err(CostError::Query(format!("endpoints {:?} -> {:?} leave the domain", self.x, self.y)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostResult {
    pub value: Cost,
    pub method: CostMethod,
    /// `(s, x(s))` samples of the optimal path; empty when infeasible.
    pub trajectory: Vec<(f64, Vec<f64>)>,
    /// Initial costate found by shooting.
    pub p0: Option<Vec<f64>>,
    /// `|x(t1) - y|` of the returned path.
    pub terminal_gap: f64,
}

/// Shooting first, transcription when shooting fails.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CostPolicy {
    pub shooting: ShootingSettings,
    pub transcription: TranscriptionSettings,
    pub transcription_only: bool,
}

/// Cost by the policy; unreachable targets under bounded controls come back
/// as [`Cost::Infeasible`].
pub fn cost(prob: &ControlProblem, q: &CostQuery, policy: &CostPolicy) -> Result<CostResult, CostError> {
    q.validate(prob)?;
    if !policy.transcription_only {
        match cost_shooting(prob, q, &policy.shooting) {
            Ok(r) => return Ok(r),
            Err(CostError::Query(e)) => return Err(CostError::Query(e)),
            Err(_) => {}
        }
    }
    match cost_transcription(prob, q, &policy.transcription) {
        Ok(r) => Ok(r),
        Err(CostError::TerminalGap { .. }) if prob.controls().is_bounded() => Ok(CostResult {
            value: Cost::Infeasible,
            method: CostMethod::Transcription,
            trajectory: Vec::new(),
            p0: None,
            terminal_gap: f64::INFINITY,
        }),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostEntry {
    pub value: Option<Cost>,
    pub method: Option<CostMethod>,
    pub error: Option<String>,
}

/// `(row, column, message)` of an entry whose computation failed.
pub type FailedEntry = (usize, usize, String);

#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    pub xs: Vec<Vec<f64>>,
    pub ys: Vec<Vec<f64>>,
    pub entries: Vec<Vec<CostEntry>>,
}

impl CostMatrix {
    pub fn rows(&self) -> usize {
        self.xs.len()
    }

    pub fn cols(&self) -> usize {
        self.ys.len()
    }

    /// Finite values, `None` for forbidden arcs. Fails on the first entry
    /// whose computation failed.
    pub fn arc_costs(&self) -> Result<Vec<Vec<Option<f64>>>, FailedEntry> {
        self.entries
            .iter()
            .enumerate()
            .map(|(i, row)| {
                row.iter()
                    .enumerate()
                    .map(|(j, e)| match (e.value, &e.error) {
                        (Some(c), _) => Ok(c.finite()),
                        (None, err) => Err((i, j, err.clone().unwrap_or_default())),
                    })
                    .collect()
            })
            .collect()
    }

    /// Builds a matrix directly from values (`None` = infeasible).
    pub fn from_values(xs: Vec<Vec<f64>>, ys: Vec<Vec<f64>>, values: Vec<Vec<Option<f64>>>) -> Self {
        let entries = values
            .into_iter()
            .map(|row| {
                row.into_iter()
                    .map(|v| CostEntry {
                        value: Some(v.map_or(Cost::Infeasible, Cost::Finite)),
                        method: None,
                        error: None,
                    })
                    .collect()
            })
            .collect();
        CostMatrix { xs, ys, entries }
    }

    /// CSV with a header of column coordinates and one row per source:
    /// `x0..;y_0;y_1;...` where coordinates within a point are joined by `;`.
    pub fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        let point = |p: &[f64]| p.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(";");
        let header: Vec<String> = self.ys.iter().map(|y| point(y)).collect();
        writeln!(w, "x,{}", header.join(","))?;
        for (x, row) in self.xs.iter().zip(&self.entries) {
            let cells: Vec<String> = row
                .iter()
                .map(|e| match e.value {
                    Some(c) => c.to_string(),
                    None => "nan".into(),
                })
                .collect();
            writeln!(w, "{},{}", point(x), cells.join(","))?;
        }
        Ok(())
    }
}

/// All-pairs cost by the policy, in parallel; a failing entry records its
/// error and leaves the rest of the batch untouched.
pub fn cost_matrix(
    prob: &ControlProblem,
    xs: &[Vec<f64>],
    ys: &[Vec<f64>],
    policy: &CostPolicy,
) -> CostMatrix {
    let cols = ys.len();
    let flat: Vec<CostEntry> = (0..xs.len() * cols)
        .into_par_iter()
        .map(|k| {
            let q = CostQuery::new(xs[k / cols].clone(), ys[k % cols].clone());
            match cost(prob, &q, policy) {
                Ok(r) => CostEntry {
                    value: Some(r.value),
                    method: Some(r.method),
                    error: None,
                },
                Err(e) => CostEntry {
                    value: None,
                    method: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    let entries = if cols == 0 {
        vec![Vec::new(); xs.len()]
    } else {
        flat.chunks(cols).map(<[CostEntry]>::to_vec).collect()
    };
    CostMatrix {
        xs: xs.to_vec(),
        ys: ys.to_vec(),
        entries,
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}
