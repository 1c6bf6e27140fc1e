use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::io::Write;

use super::{check_shape, ArcCosts, DiscreteMeasure, TransportError, TransportPlan};
use crate::io::fmt_f64;

/// Potentials on the atoms of the two measures, gauged so `phi0[0] = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct KantorovichPair {
    pub phi0: Vec<f64>,
    pub phi1: Vec<f64>,
}

impl KantorovichPair {
    /// Shifts both potentials so that `phi0[0] = 0`.
    pub fn gauged(mut self) -> Self {
        let k = self.phi0.first().copied().unwrap_or(0.0);
        self.shift(-k);
        self
    }

    pub fn shift(&mut self, k: f64) {
        self.phi0.iter_mut().chain(self.phi1.iter_mut()).for_each(|v| *v += k);
    }

    /// Largest `phi1[j] - phi0[i] - c[i][j]` over finite arcs; admissible
    /// pairs give a value `<= 0`.
    pub fn admissibility_excess(&self, c: &ArcCosts) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for (i, row) in c.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                if let Some(cij) = v {
                    worst = worst.max(self.phi1[j] - self.phi0[i] - cij);
                }
            }
        }
        worst
    }

    pub fn is_admissible(&self, c: &ArcCosts, tol: f64) -> bool {
        self.admissibility_excess(c) <= tol
    }

    /// CSV `index,potential` for the source potentials.
    pub fn write_phi0_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        write_potentials(w, &self.phi0)
    }

    /// CSV `index,potential` for the target potentials.
    pub fn write_phi1_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        write_potentials(w, &self.phi1)
    }
}

fn write_potentials(w: &mut impl Write, v: &[f64]) -> std::io::Result<()> {
    writeln!(w, "index,potential")?;
    for (k, p) in v.iter().enumerate() {
        writeln!(w, "{k},{}", fmt_f64(*p))?;
    }
    Ok(())
}

/// `phi1[j] = min_i phi0[i] + c[i][j]` over finite arcs.
pub fn c_transform_forward(phi0: &[f64], c: &ArcCosts) -> Vec<f64> {
    let cols = c.first().map_or(0, Vec::len);
    let mut out = vec![f64::INFINITY; cols];
    for (i, row) in c.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            if let Some(cij) = v {
                out[j] = out[j].min(phi0[i] + cij);
            }
        }
    }
    out
}

/// `phi0[i] = max_j phi1[j] - c[i][j]` over finite arcs.
pub fn c_transform_backward(phi1: &[f64], c: &ArcCosts) -> Vec<f64> {
    c.iter()
        .map(|row| {
            row.iter()
                .zip(phi1)
                .filter_map(|(v, p)| v.map(|cij| p - cij))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect()
}

/// `sum phi1 dmu1 - sum phi0 dmu0`.
pub fn dual_objective(pair: &KantorovichPair, mu0: &DiscreteMeasure, mu1: &DiscreteMeasure) -> f64 {
    let a: f64 = pair.phi1.iter().zip(mu1.weights()).map(|(p, w)| p * w).sum();
    let b: f64 = pair.phi0.iter().zip(mu0.weights()).map(|(p, w)| p * w).sum();
    a - b
}

/// Optimal pair from the final simplex tree, made c-concave by one round of
/// forward and backward transforms, gauged to `phi0[0] = 0`.
pub fn dual_potentials(plan: &TransportPlan, c: &ArcCosts) -> KantorovichPair {
    let (tree0, _) = &plan.tree_potentials;
    let phi1 = c_transform_forward(tree0, c);
    let phi0 = c_transform_backward(&phi1, c);
    KantorovichPair { phi0, phi1 }.gauged()
}

/// Optimal pair at the centre of the set of optimal potentials that are
/// tight on the support of `plan`: the midpoint of the largest and smallest
/// such potentials relative to `phi0[0] = 0`.
pub fn centered_potentials(plan: &TransportPlan, c: &ArcCosts) -> KantorovichPair {
    let (r, k) = (plan.gamma.len(), plan.gamma.first().map_or(0, Vec::len));
    let nodes = r + k;
    let (t0, t1) = &plan.tree_potentials;
    let pi: Vec<f64> = t0.iter().chain(t1).copied().collect();
    // constraint pi[b] - pi[a] <= w  ->  edge a -> b with weight w
    let mut fwd: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nodes];
    let mut rev: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nodes];
    let mut add = |a: usize, b: usize, w: f64| {
        let reduced = (w + pi[a] - pi[b]).max(0.0);
        fwd[a].push((b, reduced));
        rev[b].push((a, reduced));
    };
    for (i, row) in c.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            if let Some(cij) = v {
                add(i, r + j, *cij);
                if plan.gamma[i][j] > 1e-15 {
                    add(r + j, i, -cij);
                }
            }
        }
    }
    let up = dijkstra(&fwd, 0);
    let down = dijkstra(&rev, 0);
    let mid: Vec<f64> = (0..nodes)
        .map(|v| {
            let hi = up[v] - pi[0] + pi[v];
            let lo = -(down[v] - pi[v] + pi[0]);
            if hi.is_finite() && lo.is_finite() {
                0.5 * (hi + lo)
            } else {
                pi[v] - pi[0]
            }
        })
        .collect();
    KantorovichPair {
        phi0: mid[..r].to_vec(),
        phi1: mid[r..].to_vec(),
    }
    .gauged()
}

fn dijkstra(adj: &[Vec<(usize, f64)>], src: usize) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; adj.len()];
    let mut done = vec![false; adj.len()];
    dist[src] = 0.0;
    let mut heap = BinaryHeap::from([(Reverse(Ordered(0.0)), src)]);
    while let Some((Reverse(Ordered(d)), a)) = heap.pop() {
        if done[a] {
            continue;
        }
        done[a] = true;
        for &(b, w) in &adj[a] {
            let nd = d + w;
            if nd < dist[b] {
                dist[b] = nd;
                heap.push((Reverse(Ordered(nd)), b));
            }
        }
    }
    dist
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Ordered(f64);

impl Eq for Ordered {}

impl PartialOrd for Ordered {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ordered {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupportReport {
    /// Arcs carrying mass above the threshold.
    pub checked: usize,
    pub max_violation: f64,
    pub worst: Option<(usize, usize)>,
    pub holds: bool,
}

/// Checks `phi1[j] - phi0[i] = c[i][j]` on every arc with mass `> 1e-12`.
pub fn check_support_condition(
    plan: &TransportPlan,
    pair: &KantorovichPair,
    c: &ArcCosts,
) -> Result<SupportReport, TransportError> {
    if plan.gamma.len() != c.len() || pair.phi0.len() != c.len() {
        return Err(TransportError::Shape {
            rows: c.len(),
            cols: c.first().map_or(0, Vec::len),
            atoms0: pair.phi0.len(),
            atoms1: pair.phi1.len(),
        });
    }
    let mut report = SupportReport {
        checked: 0,
        max_violation: 0.0,
        worst: None,
        holds: true,
    };
    for (i, j, _) in plan.support(1e-12) {
        let Some(cij) = c[i][j] else {
            continue;
        };
        report.checked += 1;
        let v = (pair.phi1[j] - pair.phi0[i] - cij).abs();
        if v > report.max_violation || report.worst.is_none() {
            report.max_violation = report.max_violation.max(v);
            report.worst = Some((i, j));
        }
    }
    report.holds = report.max_violation <= 1e-7;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointwiseReport {
    pub cost: f64,
    /// `max phi1[j] - phi0[i]` over the supplied pairs.
    pub best_dual: f64,
    pub slack: f64,
    pub on_support: bool,
    /// Inequality for every pair, equality when on the support.
    pub holds: bool,
}

/// Compares `c[i][j]` with the pairs' values of `phi1[j] - phi0[i]`.
pub fn pointwise_duality(
    i: usize,
    j: usize,
    pairs: &[KantorovichPair],
    c: &ArcCosts,
    plan: &TransportPlan,
) -> Result<PointwiseReport, TransportError> {
    let cost = c
        .get(i)
        .and_then(|r| r.get(j))
        .copied()
        .ok_or_else(|| TransportError::Measure(format!("no arc ({i}, {j})")))?
        .ok_or_else(|| TransportError::Measure(format!("arc ({i}, {j}) is infeasible")))?;
    let best_dual = pairs.iter().map(|p| p.phi1[j] - p.phi0[i]).fold(f64::NEG_INFINITY, f64::max);
    let slack = cost - best_dual;
    let on_support = plan.gamma[i][j] > 1e-12;
    let holds = slack >= -1e-9 && (!on_support || slack.abs() <= 1e-7);
    Ok(PointwiseReport {
        cost,
        best_dual,
        slack,
        on_support,
        holds,
    })
}

/// Duality gap of a pair against a plan.
pub fn duality_gap(
    plan: &TransportPlan,
    pair: &KantorovichPair,
    mu0: &DiscreteMeasure,
    mu1: &DiscreteMeasure,
    c: &ArcCosts,
) -> Result<f64, TransportError> {
    check_shape(c, mu0, mu1)?;
    Ok((plan.objective - dual_objective(pair, mu0, mu1)).abs())
}
