use std::io::Write;

use rayon::prelude::*;

use super::{lex_cmp, simplex, ArcCosts, DiscreteMeasure, KantorovichPair, TransportError};
use crate::characteristics::integrate_from;
use crate::cost::{cost, CostPolicy, CostQuery, ShootingSettings};
use crate::io::fmt_f64;
use crate::problem::{Boundary, ControlProblem};

#[derive(Debug, Clone, PartialEq)]
pub struct MongeSettings {
    /// Stencil step of the envelope gradient, as a fraction of the widest
    /// domain side.
    pub gradient_step: f64,
    /// Targets re-evaluated off the atom, ranked by `phi1[j] - c(x, y_j)`.
    pub candidates: usize,
    /// RK4 step of the unit-time flow.
    pub dt: f64,
    /// Largest fraction of mass allowed to be skipped.
    pub max_skipped: f64,
    pub policy: CostPolicy,
}

impl Default for MongeSettings {
    fn default() -> Self {
        MongeSettings {
            gradient_step: 1e-4,
            candidates: 4,
            dt: 1e-2,
            max_skipped: 0.05,
            policy: CostPolicy {
                shooting: ShootingSettings {
                    tolerance: 1e-11,
                    ..ShootingSettings::default()
                },
                ..CostPolicy::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SectionOutcome {
    Differentiable { p0: Vec<f64>, argmax: usize },
    /// The maximizing target differs across the stencil.
    NonDifferentiable { argmax: Vec<usize> },
}

struct Envelope<'a> {
    prob: &'a ControlProblem,
    phi1: &'a [f64],
    targets: &'a [Vec<f64>],
    candidates: Vec<usize>,
    policy: &'a CostPolicy,
}

impl Envelope<'_> {
    /// `max_j phi1[j] - c(z, y_j)` over the candidates, with its argmax.
    fn eval(&self, z: &[f64]) -> Option<(f64, usize)> {
        let mut best: Option<(f64, usize)> = None;
        for &j in &self.candidates {
            let q = CostQuery::new(z.to_vec(), self.targets[j].clone());
            let Ok(r) = cost(self.prob, &q, self.policy) else {
                continue;
            };
            let Some(c) = r.value.finite() else {
                continue;
            };
            let v = self.phi1[j] - c;
            if best.is_none_or(|(b, _)| v > b) {
                best = Some((v, j));
            }
        }
        best
    }
}

/// Costate `p0 = grad phi0(x)` of the c-concave extension
/// `phi0(z) = max_j phi1[j] - c(z, y_j)`, by central differences.
/// `row[j]` holds `c(x, y_j)`.
pub fn monge_section(
    prob: &ControlProblem,
    x: &[f64],
    row: &[Option<f64>],
    phi1: &[f64],
    targets: &[Vec<f64>],
    s: &MongeSettings,
) -> Result<SectionOutcome, TransportError> {
    let n = prob.n();
    if x.len() != n || row.len() != phi1.len() || targets.len() != phi1.len() {
        return Err(TransportError::Measure("section inputs have mismatched sizes".into()));
    }
    let mut ranked: Vec<(f64, usize)> =
        row.iter().enumerate().filter_map(|(j, c)| c.map(|c| (phi1[j] - c, j))).collect();
    if ranked.is_empty() {
        return Err(TransportError::Infeasible);
    }
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let at_x = ranked[0].1;
    let env = Envelope {
        prob,
        phi1,
        targets,
        candidates: ranked.iter().take(s.candidates.max(1)).map(|r| r.1).collect(),
        policy: &s.policy,
    };
    let h = s.gradient_step * prob.domain().max_width();
    let dom = prob.domain();
    let mut argmax = vec![at_x];
    let mut p0 = vec![0.0; n];
    for k in 0..n {
        let shifted = |d: f64| {
            let mut z = x.to_vec();
            z[k] += d;
            match prob.boundary() {
                Boundary::Periodic => {
                    dom.wrap(&mut z);
                    Some(z)
                }
                Boundary::Clamp => dom.contains(&z, 0.0).then_some(z),
            }
        };
        let plus = shifted(h).and_then(|z| env.eval(&z));
        let minus = shifted(-h).and_then(|z| env.eval(&z));
        let centre = || phi1[at_x] - row[at_x].expect("ranked arcs are finite");
        p0[k] = match (plus, minus) {
            (Some(a), Some(b)) => {
                argmax.extend([a.1, b.1]);
                (a.0 - b.0) / (2.0 * h)
            }
            (Some(a), None) => {
                argmax.push(a.1);
                (a.0 - centre()) / h
            }
            (None, Some(b)) => {
                argmax.push(b.1);
                (centre() - b.0) / h
            }
            (None, None) => return Ok(SectionOutcome::NonDifferentiable { argmax }),
        };
    }
    if argmax.iter().any(|&j| j != at_x) {
        argmax.sort_unstable();
        argmax.dedup();
        return Ok(SectionOutcome::NonDifferentiable { argmax });
    }
    Ok(SectionOutcome::Differentiable { p0, argmax: at_x })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MongeEntry {
    /// Index of the source atom.
    pub atom: usize,
    pub x: Vec<f64>,
    pub p0: Vec<f64>,
    pub image: Vec<f64>,
    pub weight: f64,
    /// Target atom maximizing the envelope at `x`.
    pub target: usize,
    /// Value carried by the characteristic up to time 1.
    pub action: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MongeMap {
    pub entries: Vec<MongeEntry>,
    /// Atoms where the section was not differentiable.
    pub skipped: Vec<usize>,
    pub skipped_mass: f64,
}

impl MongeMap {
    pub fn accepted_mass(&self) -> f64 {
        self.entries.iter().map(|e| e.weight).sum()
    }

    /// CSV `x..,p0..,T..,weight` over the accepted atoms.
    pub fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        let n = self.entries.first().map_or(0, |e| e.x.len());
        let mut header = Vec::new();
        for prefix in ["x", "p", "T"] {
            header.extend((0..n).map(|k| format!("{prefix}{k}")));
        }
        header.push("weight".into());
        writeln!(w, "{}", header.join(","))?;
        for e in &self.entries {
            let cells: Vec<String> = e.x.iter().chain(&e.p0).chain(&e.image).map(|v| fmt_f64(*v)).collect();
            writeln!(w, "{},{}", cells.join(","), fmt_f64(e.weight))?;
        }
        Ok(())
    }
}

/// Flows each atom of `mu0` along the characteristic from `(x, grad phi0(x))`
/// for unit time. `c[i][j]` holds the cost between the atoms.
pub fn monge_map(
    prob: &ControlProblem,
    mu0: &DiscreteMeasure,
    mu1: &DiscreteMeasure,
    c: &ArcCosts,
    pair: &KantorovichPair,
    s: &MongeSettings,
) -> Result<MongeMap, TransportError> {
    super::check_shape(c, mu0, mu1)?;
    let results: Vec<Result<Option<MongeEntry>, TransportError>> = (0..mu0.len())
        .into_par_iter()
        .map(|i| {
            let x = &mu0.atoms()[i];
            match monge_section(prob, x, &c[i], &pair.phi1, mu1.atoms(), s)? {
                SectionOutcome::NonDifferentiable { .. } => Ok(None),
                SectionOutcome::Differentiable { p0, argmax } => {
                    let tr = integrate_from(prob, x, &p0, 0.0, 0.0, 1.0, s.dt)?;
                    let end = tr.last();
                    let mut image = end.x.clone();
                    if prob.boundary() == Boundary::Periodic {
                        prob.domain().wrap(&mut image);
                    }
                    Ok(Some(MongeEntry {
                        atom: i,
                        x: x.clone(),
                        p0,
                        image,
                        weight: mu0.weights()[i],
                        target: argmax,
                        action: end.value,
                    }))
                }
            }
        })
        .collect();
    let mut entries = Vec::new();
    let mut skipped = Vec::new();
    let mut skipped_mass = 0.0;
    for (i, r) in results.into_iter().enumerate() {
        match r? {
            Some(e) => entries.push(e),
            None => {
                skipped.push(i);
                skipped_mass += mu0.weights()[i];
            }
        }
    }
    if skipped_mass > s.max_skipped {
        return Err(TransportError::SkippedMass {
            skipped: skipped_mass,
            limit: s.max_skipped,
        });
    }
    Ok(MongeMap {
        entries,
        skipped,
        skipped_mass,
    })
}

/// Image measure `t#mu`; images closer than `1e-9` are merged.
pub fn pushforward(mu: &DiscreteMeasure, t: impl Fn(&[f64]) -> Vec<f64>) -> Result<DiscreteMeasure, TransportError> {
    merge(mu.atoms().iter().map(|a| t(a)).zip(mu.weights().iter().copied()).collect())
}

impl MongeMap {
    /// Image of the accepted mass, renormalized to a probability measure.
    pub fn pushforward(&self) -> Result<DiscreteMeasure, TransportError> {
        let total = self.accepted_mass();
        merge(self.entries.iter().map(|e| (e.image.clone(), e.weight / total)).collect())
    }
}

fn merge(mut points: Vec<(Vec<f64>, f64)>) -> Result<DiscreteMeasure, TransportError> {
    points.sort_by(|a, b| lex_cmp(&a.0, &b.0));
    let mut atoms: Vec<Vec<f64>> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    for (p, w) in points {
        let close = atoms
            .iter()
            .rposition(|a| a.iter().zip(&p).all(|(u, v)| (u - v).abs() <= 1e-9));
        match close {
            Some(k) => weights[k] += w,
            None => {
                atoms.push(p);
                weights.push(w);
            }
        }
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        weights.iter_mut().for_each(|w| *w /= total);
    }
    DiscreteMeasure::new(atoms, weights)
}

/// 1-Wasserstein distance for the Euclidean ground cost: the CDF integral in
/// one dimension, an exact transport solve otherwise.
pub fn wasserstein1(a: &DiscreteMeasure, b: &DiscreteMeasure) -> Result<f64, TransportError> {
    if a.dim() != b.dim() {
        return Err(TransportError::Measure("measures live in different dimensions".into()));
    }
    if a.dim() == 1 {
        let mut events: Vec<(f64, f64)> = a
            .atoms()
            .iter()
            .zip(a.weights())
            .map(|(x, w)| (x[0], *w))
            .chain(b.atoms().iter().zip(b.weights()).map(|(x, w)| (x[0], -w)))
            .collect();
        events.sort_by(|p, q| p.0.total_cmp(&q.0));
        let mut diff = 0.0;
        let mut total = 0.0;
        for w in events.windows(2) {
            diff += w[0].1;
            total += diff.abs() * (w[1].0 - w[0].0);
        }
        return Ok(total);
    }
    let mut arcs = Vec::with_capacity(a.len() * b.len());
    for (i, x) in a.atoms().iter().enumerate() {
        for (j, y) in b.atoms().iter().enumerate() {
            let d = x.iter().zip(y).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt();
            arcs.push(simplex::Arc { source: i, sink: j, cost: d });
        }
    }
    let sol = simplex::solve(a.weights(), b.weights(), &arcs);
    Ok(sol.flows.iter().zip(&arcs).map(|(f, a)| f * a.cost).sum())
}

/// `sum_i w_i c(x_i, T(x_i))` over the accepted atoms, normalized by the
/// accepted mass.
pub fn initial_measure_action<E>(
    map: &MongeMap,
    c: impl Fn(&[f64], &[f64]) -> Result<f64, E>,
) -> Result<f64, E> {
    let mut total = 0.0;
    for e in &map.entries {
        total += e.weight * c(&e.x, &e.image)?;
    }
    Ok(total / map.accepted_mass())
}
