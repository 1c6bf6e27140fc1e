//! Discrete Monge-Kantorovich problem: exact plans by network simplex, dual
//! Kantorovich pairs with certificates, and the Monge map obtained by
//! flowing characteristics from the gradient of the optimal potential.

mod duality;
mod feasibility;
mod monge;
pub mod simplex;

pub use duality::{
    c_transform_backward, c_transform_forward, centered_potentials, check_support_condition, dual_objective,
    dual_potentials, duality_gap, pointwise_duality, KantorovichPair, PointwiseReport, SupportReport,
};
pub use feasibility::is_feasible;
pub use monge::{
    initial_measure_action, monge_map, monge_section, pushforward, wasserstein1, MongeEntry, MongeMap, MongeSettings,
    SectionOutcome,
};

use std::io::Write;

use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::characteristics::CharError;
use crate::cost::CostError;
use crate::io::fmt_f64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransportError {
    #[error("invalid measure: {0}")]
    Measure(String),
    #[error("measures are unbalanced: total masses {0} and {1}")]
    Unbalanced(f64, f64),
    #[error("cost matrix is {rows}x{cols}, measures have {atoms0} and {atoms1} atoms")]
    Shape {
        rows: usize,
        cols: usize,
        atoms0: usize,
        atoms1: usize,
    },
    #[error("infeasible: forbidden arcs disconnect supply from demand")]
    Infeasible,
    #[error("cost entry ({0}, {1}) failed: {2}")]
    CostEntry(usize, usize, String),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Characteristic(#[from] CharError),
    #[error("section undefined on {skipped:.3e} of the mass (limit {limit:.3e})")]
    SkippedMass { skipped: f64, limit: f64 },
}

/// Finitely supported probability measure.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    atoms: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(atoms: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self, TransportError> {
        if atoms.is_empty() || atoms.len() != weights.len() {
            return Err(TransportError::Measure(format!(
                "{} atoms and {} weights",
                atoms.len(),
                weights.len()
            )));
        }
        let dim = atoms[0].len();
        if dim == 0 || atoms.iter().any(|a| a.len() != dim || a.iter().any(|v| !v.is_finite())) {
            return Err(TransportError::Measure("atoms must be finite points of one dimension".into()));
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
            return Err(TransportError::Measure(format!("weights must be positive, got {w}")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(TransportError::Measure(format!("weights sum to {total}, not 1")));
        }
        let mut sorted: Vec<&Vec<f64>> = atoms.iter().collect();
        sorted.sort_by(|a, b| lex_cmp(a, b));
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(TransportError::Measure("atoms must be distinct".into()));
        }
        Ok(DiscreteMeasure { atoms, weights })
    }

    /// Equal weights on the given atoms.
    pub fn uniform(atoms: Vec<Vec<f64>>) -> Result<Self, TransportError> {
        let n = atoms.len().max(1);
        DiscreteMeasure::new(atoms, vec![1.0 / n as f64; n])
    }

    /// `n` equal-weight atoms at the quantiles `(i + 1/2)/n` of `N(mean, std^2)`.
    pub fn gaussian_quantiles(mean: f64, std: f64, n: usize) -> Result<Self, TransportError> {
        let normal = Normal::new(mean, std).map_err(|e| TransportError::Measure(e.to_string()))?;
        let atoms = (0..n).map(|i| vec![normal.inverse_cdf((i as f64 + 0.5) / n as f64)]).collect();
        DiscreteMeasure::uniform(atoms)
    }

    pub fn atoms(&self) -> &[Vec<f64>] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.atoms[0].len()
    }

    /// CSV with columns `x0..,weight`.
    pub fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        let xs: Vec<String> = (0..self.dim()).map(|k| format!("x{k}")).collect();
        writeln!(w, "{},weight", xs.join(","))?;
        for (a, wt) in self.atoms.iter().zip(&self.weights) {
            let cells: Vec<String> = a.iter().map(|v| fmt_f64(*v)).collect();
            writeln!(w, "{},{}", cells.join(","), fmt_f64(*wt))?;
        }
        Ok(())
    }
}

fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

/// A coupling of two discrete measures.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    /// `gamma[i][j]`, mass moved from atom `i` of the source to atom `j`.
    pub gamma: Vec<Vec<f64>>,
    pub objective: f64,
    /// Arcs of the final simplex basis, `basis[i][j]`.
    pub basis: Vec<Vec<bool>>,
    pub pivots: usize,
    pub(crate) tree_potentials: (Vec<f64>, Vec<f64>),
}

impl TransportPlan {
    /// Entries with mass above `tol`, as `(i, j, mass)`.
    pub fn support(&self, tol: f64) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for (i, row) in self.gamma.iter().enumerate() {
            for (j, &g) in row.iter().enumerate() {
                if g > tol {
                    out.push((i, j, g));
                }
            }
        }
        out
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.gamma.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let cols = self.gamma.first().map_or(0, Vec::len);
        (0..cols).map(|j| self.gamma.iter().map(|r| r[j]).sum()).collect()
    }

    /// Largest deviation of the marginals from the given measures.
    pub fn marginal_error(&self, mu0: &DiscreteMeasure, mu1: &DiscreteMeasure) -> f64 {
        let r = self.row_sums().iter().zip(mu0.weights()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let c = self.column_sums().iter().zip(mu1.weights()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        r.max(c)
    }

    /// CSV with columns `i,j,mass` over entries with positive mass.
    pub fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "i,j,mass")?;
        for (i, j, g) in self.support(0.0) {
            writeln!(w, "{i},{j},{}", fmt_f64(g))?;
        }
        Ok(())
    }
}

/// Arc costs with `None` for forbidden arcs.
pub type ArcCosts = [Vec<Option<f64>>];

pub(crate) fn check_shape(c: &ArcCosts, mu0: &DiscreteMeasure, mu1: &DiscreteMeasure) -> Result<(), TransportError> {
    let cols = c.first().map_or(0, Vec::len);
    if c.len() != mu0.len() || c.iter().any(|r| r.len() != mu1.len()) {
        return Err(TransportError::Shape {
            rows: c.len(),
            cols,
            atoms0: mu0.len(),
            atoms1: mu1.len(),
        });
    }
    Ok(())
}

/// Exact optimal plan of the discrete Monge-Kantorovich problem.
pub fn solve_mk(c: &ArcCosts, mu0: &DiscreteMeasure, mu1: &DiscreteMeasure) -> Result<TransportPlan, TransportError> {
    check_shape(c, mu0, mu1)?;
    let (a, b): (f64, f64) = (mu0.weights().iter().sum(), mu1.weights().iter().sum());
    if (a - b).abs() > 1e-12 {
        return Err(TransportError::Unbalanced(a, b));
    }
    if c.iter().flatten().any(Option::is_none) && !is_feasible(c, mu0.weights(), mu1.weights()) {
        return Err(TransportError::Infeasible);
    }
    let mut arcs = Vec::new();
    for (i, row) in c.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            if let Some(cost) = v {
                arcs.push(simplex::Arc { source: i, sink: j, cost: *cost });
            }
        }
    }
    let sol = simplex::solve(mu0.weights(), mu1.weights(), &arcs);
    if sol.artificial_flow > 1e-9 {
        return Err(TransportError::Infeasible);
    }
    let (r, k) = (mu0.len(), mu1.len());
    let mut gamma = vec![vec![0.0; k]; r];
    let mut basis = vec![vec![false; k]; r];
    let mut objective = 0.0;
    for ((arc, f), basic) in arcs.iter().zip(&sol.flows).zip(&sol.basic) {
        gamma[arc.source][arc.sink] = *f;
        basis[arc.source][arc.sink] = *basic;
        objective += f * arc.cost;
    }
    Ok(TransportPlan {
        gamma,
        objective,
        basis,
        pivots: sol.pivots,
        tree_potentials: (sol.source_potentials, sol.sink_potentials),
    })
}
