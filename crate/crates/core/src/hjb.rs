//! Semi-Lagrangian dynamic programming for
//! `V_t + sup_u {<V_x, f> - L} = 0`, `V(0, .) = phi0`.
//!
//! One step reads `V(t+dt, x) = min_u dt L(x, u, t) + V(t, x - dt f(x, u))`
//! with multilinear interpolation of the previous slice.

use std::io::Write;

use rayon::prelude::*;
use thiserror::Error;

use crate::expr::{EvalEnv, Expr, ExprError};
use crate::grid::Grid;
use crate::ode::step_count;
use crate::problem::{Boundary, ControlProblem, ProblemError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HjbError {
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error("initial data: {0}")]
    InitialData(ExprError),
    #[error("CFL violation: dt * |f_{axis}| = {travel:e} exceeds the spacing {spacing:e}; reduce dt")]
    Cfl { axis: usize, travel: f64, spacing: f64 },
    #[error("invalid time step: {0}")]
    Step(String),
    #[error("grid function has {got} values, grid has {expected} nodes")]
    Shape { got: usize, expected: usize },
    #[error("the Hopf-Lax oracle needs f = u, L = |u|^2/2 with unbounded controls")]
    NotQuadraticFamily,
    #[error("non-finite value at node {node} of slice {slice}")]
    NonFinite { slice: usize, node: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct HjbSettings {
    /// Samples per control axis.
    pub control_samples: usize,
    /// Half-width sampled on unbounded control sides; defaults to the
    /// smallest grid spacing divided by `dt`, reduced as needed to keep the
    /// CFL bound.
    pub control_radius: Option<f64>,
    /// Add the Hamiltonian maximizer at the discrete gradient to the samples.
    pub argmax_injection: bool,
}

impl Default for HjbSettings {
    fn default() -> Self {
        HjbSettings {
            control_samples: 33,
            control_radius: None,
            argmax_injection: true,
        }
    }
}

/// `V(t_k, node)` on a uniform space-time grid.
#[derive(Debug, Clone)]
pub struct ValueGrid {
    pub grid: Grid,
    pub times: Vec<f64>,
    pub dt: f64,
    pub values: Vec<Vec<f64>>,
}

impl ValueGrid {
    pub fn last(&self) -> &[f64] {
        self.values.last().expect("at least the initial slice")
    }

    pub fn at(&self, k: usize, x: &[f64]) -> f64 {
        self.grid.interpolate(&self.values[k], x)
    }

    /// CSV dump: `#` metadata lines, then `k,t,node,x0..,V` rows.
    pub fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        let fmt = crate::io::fmt_f64;
        let d = self.grid.dim();
        writeln!(w, "# dims={d}")?;
        writeln!(w, "# counts={}", join(self.grid.counts().iter().map(|c| c.to_string())))?;
        writeln!(w, "# lo={}", join(self.grid.lo().iter().map(|v| fmt(*v))))?;
        writeln!(w, "# spacing={}", join(self.grid.spacing().iter().map(|v| fmt(*v))))?;
        writeln!(w, "# dt={}", fmt(self.dt))?;
        let xs = join((0..d).map(|k| format!("x{k}")));
        writeln!(w, "k,t,node,{xs},V")?;
        let nodes = self.grid.nodes();
        for (k, slice) in self.values.iter().enumerate() {
            for (i, v) in slice.iter().enumerate() {
                let x = join(nodes[i].iter().map(|v| fmt(*v)));
                writeln!(w, "{k},{},{i},{x},{}", fmt(self.times[k]), fmt(*v))?;
            }
        }
        Ok(())
    }
}

fn join(it: impl Iterator<Item = String>) -> String {
    it.collect::<Vec<_>>().join(",")
}

/// The solution semigroup `phi -> T_s phi` on a fixed grid and step.
#[derive(Debug, Clone)]
pub struct SemigroupOp<'a> {
    pub prob: &'a ControlProblem,
    pub grid: Grid,
    pub dt: f64,
    pub settings: HjbSettings,
}

impl<'a> SemigroupOp<'a> {
    pub fn new(prob: &'a ControlProblem, grid: Grid, dt: f64) -> Self {
        SemigroupOp {
            prob,
            grid,
            dt,
            settings: HjbSettings::default(),
        }
    }

    pub fn with_settings(mut self, settings: HjbSettings) -> Self {
        self.settings = settings;
        self
    }

    pub fn apply(&self, phi: &[f64], s: f64) -> Result<Vec<f64>, HjbError> {
        semigroup_apply(self, phi, s)
    }
}

pub fn semigroup_apply(op: &SemigroupOp<'_>, phi: &[f64], s: f64) -> Result<Vec<f64>, HjbError> {
    let vg = march(op.prob, &op.grid, phi.to_vec(), 0.0, s, op.dt, &op.settings)?;
    Ok(vg.values.into_iter().next_back().expect("initial slice"))
}

/// Samples an expression of `x` (and `t = 0`) at every grid node.
pub fn sample_on_grid(phi: &Expr, grid: &Grid) -> Result<Vec<f64>, HjbError> {
    grid.nodes()
        .iter()
        .map(|x| phi.eval(&EvalEnv::new(x, &[], 0.0)).map_err(HjbError::InitialData))
        .collect()
}

pub fn solve_hjb(
    prob: &ControlProblem,
    phi0: &Expr,
    grid: &Grid,
    horizon: f64,
    dt: f64,
    settings: &HjbSettings,
) -> Result<ValueGrid, HjbError> {
    let v0 = sample_on_grid(phi0, grid)?;
    march(prob, grid, v0, 0.0, horizon, dt, settings)
}

/// Marches nodal data `v0` given at `t0` over a span of `span`.
pub fn march(
    prob: &ControlProblem,
    grid: &Grid,
    v0: Vec<f64>,
    t0: f64,
    span: f64,
    dt: f64,
    settings: &HjbSettings,
) -> Result<ValueGrid, HjbError> {
    if grid.dim() != prob.n() {
        return Err(ProblemError::Dimension(format!("grid is {}-D, problem is {}-D", grid.dim(), prob.n())).into());
    }
    if v0.len() != grid.len() {
        return Err(HjbError::Shape {
            got: v0.len(),
            expected: grid.len(),
        });
    }
    if !(span >= 0.0 && span.is_finite()) {
        return Err(HjbError::Step(format!("time span {span}")));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(HjbError::Step(format!("dt = {dt}")));
    }
    let steps = step_count(span, dt);
    let h = if steps == 0 { dt } else { span / steps as f64 };
    let samples = cfl_samples(prob, grid, h, settings)?;

    let nodes = grid.nodes();
    let mut values = Vec::with_capacity(steps + 1);
    let mut times = Vec::with_capacity(steps + 1);
    values.push(v0);
    times.push(t0);
    for k in 0..steps {
        let t = t0 + k as f64 * h;
        let prev = values.last().expect("slice");
        let next = (0..grid.len())
            .into_par_iter()
            .map(|i| node_update(prob, grid, prev, &nodes[i], i, t, h, &samples, settings.argmax_injection))
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(node) = next.iter().position(|v| !v.is_finite()) {
            return Err(HjbError::NonFinite { slice: k + 1, node });
        }
        values.push(next);
        times.push(t0 + (k + 1) as f64 * h);
    }
    Ok(ValueGrid {
        grid: grid.clone(),
        times,
        dt: h,
        values,
    })
}

#[allow(clippy::too_many_arguments)]
fn node_update(
    prob: &ControlProblem,
    grid: &Grid,
    prev: &[f64],
    x: &[f64],
    idx: usize,
    t: f64,
    dt: f64,
    samples: &[Vec<f64>],
    inject: bool,
) -> Result<f64, HjbError> {
    let n = x.len();
    let mut foot = vec![0.0; n];
    let mut best = f64::INFINITY;
    let mut eval = |u: &[f64], best: &mut f64| -> Result<(), HjbError> {
        let f = prob.dynamics(x, u)?;
        let l = prob.running_cost(x, u, t)?;
        for k in 0..n {
            foot[k] = x[k] - dt * f[k];
        }
        let v = dt * l + grid.interpolate(prev, &foot);
        if v < *best {
            *best = v;
        }
        Ok(())
    };
    for u in samples {
        eval(u, &mut best)?;
    }
    if inject {
        let p = grid.gradient(prev, idx);
        if let Ok(u) = prob.hamiltonian_argmax(x, &p, t) {
            eval(&u, &mut best)?;
        }
    }
    Ok(best)
}

/// Control samples satisfying the CFL bound. Without an explicit radius the
/// default one shrinks until the fastest foot stays within one cell.
fn cfl_samples(prob: &ControlProblem, grid: &Grid, dt: f64, settings: &HjbSettings) -> Result<Vec<Vec<f64>>, HjbError> {
    let c = prob.controls();
    let unbounded = c.lo().iter().chain(c.hi()).any(|v| !v.is_finite());
    let mut radius = settings
        .control_radius
        .unwrap_or_else(|| grid.spacing().iter().copied().fold(f64::INFINITY, f64::min) / dt);
    let adapt = settings.control_radius.is_none() && unbounded;
    let mut tries = 0;
    loop {
        let samples = control_samples(prob, settings.control_samples, radius);
        match check_cfl(prob, grid, &samples, dt) {
            Ok(()) => return Ok(samples),
            Err(HjbError::Cfl { travel, spacing, .. }) if adapt && tries < 60 => {
                radius *= (spacing / travel).min(0.95);
                tries += 1;
            }
            Err(e) => return Err(e),
        }
    }
}

fn control_samples(prob: &ControlProblem, per: usize, radius: f64) -> Vec<Vec<f64>> {
    let m = prob.m();
    let per = per.max(2);
    let axes: Vec<Vec<f64>> = (0..m)
        .map(|j| {
            let lo = prob.controls().lo()[j];
            let hi = prob.controls().hi()[j];
            let a = if lo.is_finite() { lo } else if hi.is_finite() { hi.min(0.0) - radius } else { -radius };
            let b = if hi.is_finite() { hi } else if lo.is_finite() { lo.max(0.0) + radius } else { radius };
            if a == b {
                return vec![a];
            }
            (0..per).map(|i| a + (b - a) * i as f64 / (per - 1) as f64).collect()
        })
        .collect();
    let total: usize = axes.iter().map(Vec::len).product();
    (0..total)
        .map(|mut idx| {
            axes.iter()
                .map(|ax| {
                    let v = ax[idx % ax.len()];
                    idx /= ax.len();
                    v
                })
                .collect()
        })
        .collect()
}

fn check_cfl(prob: &ControlProblem, grid: &Grid, samples: &[Vec<f64>], dt: f64) -> Result<(), HjbError> {
    let nodes = grid.nodes();
    let worst = nodes
        .par_iter()
        .map(|x| -> Result<Vec<f64>, HjbError> {
            let mut w = vec![0.0f64; x.len()];
            for u in samples {
                let f = prob.dynamics(x, u)?;
                for k in 0..x.len() {
                    w[k] = w[k].max(f[k].abs());
                }
            }
            Ok(w)
        })
        .collect::<Result<Vec<_>, _>>()?;
    for k in 0..grid.dim() {
        let speed = worst.iter().map(|w| w[k]).fold(0.0, f64::max);
        let travel = dt * speed;
        let spacing = grid.spacing()[k];
        if travel > spacing * (1.0 + 1e-9) {
            return Err(HjbError::Cfl { axis: k, travel, spacing });
        }
    }
    Ok(())
}

/// Value at `(t, x)` from the Hopf-Lax formula
/// `min_y phi0(y) + |x - y|^2 / (2t)`, minimizing over `y` in the domain.
pub fn hopf_lax_oracle(prob: &ControlProblem, phi0: &Expr, t: f64, x: &[f64]) -> Result<f64, HjbError> {
    if !prob.is_quadratic_family() {
        return Err(HjbError::NotQuadraticFamily);
    }
    let n = prob.n();
    if x.len() != n {
        return Err(ProblemError::Dimension(format!("x must have {n} components")).into());
    }
    let phi = |y: &[f64]| phi0.eval(&EvalEnv::new(y, &[], 0.0)).unwrap_or(f64::INFINITY);
    if t <= 0.0 {
        return phi0.eval(&EvalEnv::new(x, &[], 0.0)).map_err(HjbError::InitialData);
    }
    let dom = prob.domain();
    let boundary = prob.boundary();
    let objective = |y: &[f64]| {
        let d = dom.displacement(y, x, boundary);
        phi(y) + d.iter().map(|v| v * v).sum::<f64>() / (2.0 * t)
    };
    const POINTS: usize = 2001;
    let step: Vec<f64> = (0..n).map(|k| dom.width(k) / (POINTS - 1) as f64).collect();
    let coord = |k: usize, i: usize| dom.lo[k] + i as f64 * step[k];

    let mut best_y = vec![0.0; n];
    let mut best = f64::INFINITY;
    let mut y = vec![0.0; n];
    let total = POINTS.pow(n as u32);
    for mut idx in 0..total {
        for (k, yk) in y.iter_mut().enumerate() {
            *yk = coord(k, idx % POINTS);
            idx /= POINTS;
        }
        let v = objective(&y);
        if v < best {
            best = v;
            best_y.copy_from_slice(&y);
        }
    }
    // ternary refinement within one grid cell on each side, axis by axis
    for _ in 0..if n == 1 { 1 } else { 4 } {
        for k in 0..n {
            let mut a = (best_y[k] - step[k]).max(dom.lo[k]);
            let mut b = (best_y[k] + step[k]).min(dom.hi[k]);
            let mut probe = best_y.clone();
            let mut at = |v: f64| {
                probe[k] = v;
                objective(&probe)
            };
            for _ in 0..100 {
                let m1 = a + (b - a) / 3.0;
                let m2 = b - (b - a) / 3.0;
                if at(m1) <= at(m2) {
                    b = m2;
                } else {
                    a = m1;
                }
            }
            let c = 0.5 * (a + b);
            let v = at(c);
            if v < best {
                best = v;
                best_y[k] = c;
            }
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ResidualReport {
    pub nodes: usize,
    pub excluded: usize,
    pub median: f64,
    pub p90: f64,
    pub max: f64,
}

/// Pointwise `|D_t V + H(x, D_x V)|` at interior nodes of every slice
/// `k >= 1`, skipping a 3-node neighborhood of detected kinks.
pub fn viscosity_residual(vg: &ValueGrid, prob: &ControlProblem) -> Result<ResidualReport, HjbError> {
    let grid = &vg.grid;
    let nodes = grid.nodes();
    let slices = vg.values.len();
    let mut residuals = Vec::new();
    let mut excluded = 0usize;
    for k in 1..slices {
        let v = &vg.values[k];
        let kinks = kink_nodes(grid, v);
        let per_node: Vec<Option<Result<f64, HjbError>>> = (0..grid.len())
            .into_par_iter()
            .map(|i| {
                let mi = grid.multi_index(i);
                let interior = (0..grid.dim())
                    .all(|a| grid.neighbor(&mi, a, -1).is_some() && grid.neighbor(&mi, a, 1).is_some());
                if !interior || near(&kinks, grid, &mi, 3) {
                    return None;
                }
                let dt_v = if k + 1 < slices {
                    (vg.values[k + 1][i] - vg.values[k - 1][i]) / (2.0 * vg.dt)
                } else {
                    (v[i] - vg.values[k - 1][i]) / vg.dt
                };
                let p = grid.gradient(v, i);
                Some(
                    prob.hamiltonian(&nodes[i], &p, vg.times[k])
                        .map(|h| (dt_v + h.value).abs())
                        .map_err(HjbError::from),
                )
            })
            .collect();
        for r in per_node {
            match r {
                Some(r) => residuals.push(r?),
                None => excluded += 1,
            }
        }
    }
    residuals.sort_by(f64::total_cmp);
    let q = |f: f64| {
        if residuals.is_empty() {
            0.0
        } else {
            residuals[((residuals.len() - 1) as f64 * f).round() as usize]
        }
    };
    Ok(ResidualReport {
        nodes: residuals.len(),
        excluded,
        median: q(0.5),
        p90: q(0.9),
        max: residuals.last().copied().unwrap_or(0.0),
    })
}

/// Nodes where a one-sided slope jumps by more than `0.1 + 5h`.
fn kink_nodes(grid: &Grid, v: &[f64]) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for i in 0..grid.len() {
        let mi = grid.multi_index(i);
        for a in 0..grid.dim() {
            if let (Some(l), Some(r)) = (grid.neighbor(&mi, a, -1), grid.neighbor(&mi, a, 1)) {
                let h = grid.spacing()[a];
                let jump = ((v[r] - v[i]) - (v[i] - v[l])).abs() / h;
                if jump > 0.1 + 5.0 * h {
                    out.push(mi.clone());
                    break;
                }
            }
        }
    }
    out
}

fn near(kinks: &[Vec<usize>], grid: &Grid, mi: &[usize], radius: usize) -> bool {
    kinks.iter().any(|k| {
        k.iter().zip(mi).enumerate().all(|(a, (p, q))| {
            let d = p.abs_diff(*q);
            let d = if grid.boundary() == Boundary::Periodic { d.min(grid.counts()[a] - d) } else { d };
            d <= radius
        })
    })
}
