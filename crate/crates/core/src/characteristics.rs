//! Characteristic curves of `u_t + H(x, Du) = 0`.
//!
//! From a seed `z` the state `(X, P, U)` starts at `(z, Du0(z), u0(z))` and
//! follows `X' = H_p`, `P' = -H_x`, `U' = P.H_p - H`. While `z -> X(t, z)`
//! stays invertible the classical solution is `u(t, x) = U(t, Z(t, x))`.

use rayon::prelude::*;
use thiserror::Error;

use crate::expr::{EvalEnv, Expr, ExprError, Var};
use crate::ode::{step_count, Rk4};
use crate::problem::{Boundary, ControlProblem, ProblemError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CharError {
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error("initial data: {0}")]
    InitialData(ExprError),
    #[error("characteristic left the domain at t = {time} (x = {x:?})")]
    Escape { time: f64, x: Vec<f64> },
    #[error("invalid time step: {0}")]
    Step(String),
    #[error("seed grid needs at least 3 seeds per dimension, got {0:?}")]
    SeedGrid(Vec<usize>),
    #[error("point {x:?} lies outside the image of the seed grid at t = {t}")]
    Extrapolation { t: f64, x: Vec<f64> },
    #[error("t = {t} is beyond the invertibility horizon {t_star}")]
    BeyondCaustic { t: f64, t_star: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CharState {
    pub t: f64,
    pub x: Vec<f64>,
    pub p: Vec<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CharTrajectory {
    pub seed: Vec<f64>,
    pub dt: f64,
    pub states: Vec<CharState>,
}

impl CharTrajectory {
    pub fn last(&self) -> &CharState {
        self.states.last().expect("trajectory has at least one state")
    }
}

/// Initial state `(z, Du0(z), u0(z))`.
pub fn initial_state(u0: &Expr, z: &[f64]) -> Result<(Vec<f64>, f64), CharError> {
    let env = EvalEnv::new(z, &[], 0.0);
    let value = u0.eval(&env).map_err(CharError::InitialData)?;
    let grad = (0..z.len())
        .map(|k| u0.diff(Var::X(k)).eval(&env))
        .collect::<Result<Vec<_>, _>>()
        .map_err(CharError::InitialData)?;
    Ok((grad, value))
}

pub fn integrate_characteristic(
    prob: &ControlProblem,
    u0: &Expr,
    z: &[f64],
    horizon: f64,
    dt: f64,
) -> Result<CharTrajectory, CharError> {
    let (p0, value) = initial_state(u0, z)?;
    integrate_from(prob, z, &p0, value, 0.0, horizon, dt)
}

/// Integrates the characteristic system from an arbitrary `(x, p, U)` at
/// time `t0` up to `t1`. The step is shrunk so the span is covered exactly.
pub fn integrate_from(
    prob: &ControlProblem,
    x0: &[f64],
    p0: &[f64],
    value0: f64,
    t0: f64,
    t1: f64,
    dt: f64,
) -> Result<CharTrajectory, CharError> {
    let n = prob.n();
    if x0.len() != n || p0.len() != n {
        return Err(ProblemError::Dimension(format!("seed must have {n} components")).into());
    }
    let span = t1 - t0;
    if span < 0.0 || !span.is_finite() {
        return Err(CharError::Step(format!("empty time span [{t0}, {t1}]")));
    }
    if span > 0.0 && !(dt > 0.0 && dt.is_finite()) {
        return Err(CharError::Step(format!("dt = {dt}")));
    }
    let steps = step_count(span, dt);
    let h = if steps == 0 { dt } else { span / steps as f64 };

    let mut states = Vec::with_capacity(steps + 1);
    states.push(CharState {
        t: t0,
        x: x0.to_vec(),
        p: p0.to_vec(),
        value: value0,
    });
    let mut y: Vec<f64> = x0.iter().chain(p0).copied().chain(std::iter::once(value0)).collect();
    let mut next = vec![0.0; y.len()];
    let mut rk = Rk4::new(y.len());
    let mut rhs = characteristic_rhs(prob);
    for k in 0..steps {
        let t = t0 + k as f64 * h;
        rk.step(&mut rhs, t, &y, h, &mut next)?;
        std::mem::swap(&mut y, &mut next);
        let tn = t0 + (k + 1) as f64 * h;
        if prob.boundary() == Boundary::Clamp {
            let w = prob.domain().max_width();
            if !prob.domain().contains(&y[..n], 1e-9 * w) {
                return Err(CharError::Escape {
                    time: tn,
                    x: y[..n].to_vec(),
                });
            }
        }
        states.push(CharState {
            t: tn,
            x: y[..n].to_vec(),
            p: y[n..2 * n].to_vec(),
            value: y[2 * n],
        });
    }
    Ok(CharTrajectory {
        seed: x0.to_vec(),
        dt: h,
        states,
    })
}

/// Right-hand side of the `(X, P, U)` system packed as one vector.
pub(crate) fn characteristic_rhs(
    prob: &ControlProblem,
) -> impl FnMut(f64, &[f64], &mut [f64]) -> Result<(), CharError> + '_ {
    let n = prob.n();
    let mut xw = vec![0.0; n];
    move |t, y, dy| {
        xw.copy_from_slice(&y[..n]);
        if prob.boundary() == Boundary::Periodic {
            prob.domain().wrap(&mut xw);
        }
        let p = &y[n..2 * n];
        let h = prob.hamiltonian(&xw, p, t)?;
        let mut php = 0.0;
        for k in 0..n {
            dy[k] = h.hp[k];
            dy[n + k] = -h.hx[k];
            php += p[k] * h.hp[k];
        }
        dy[2 * n] = php - h.value;
        Ok(())
    }
}

/// Tensor grid of seeds (1-D or 2-D), first axis fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedGrid {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub counts: Vec<usize>,
}

impl SeedGrid {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, counts: Vec<usize>) -> Result<Self, CharError> {
        if counts.is_empty() || counts.iter().any(|&c| c < 3) || lo.len() != counts.len() || hi.len() != counts.len() {
            return Err(CharError::SeedGrid(counts));
        }
        Ok(SeedGrid { lo, hi, counts })
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self, k: usize) -> f64 {
        (self.hi[k] - self.lo[k]) / (self.counts[k] - 1) as f64
    }

    fn multi_index(&self, mut idx: usize) -> Vec<usize> {
        self.counts
            .iter()
            .map(|&c| {
                let i = idx % c;
                idx /= c;
                i
            })
            .collect()
    }

    fn linear_index(&self, mi: &[usize]) -> usize {
        let mut idx = 0;
        let mut stride = 1;
        for (i, c) in mi.iter().zip(&self.counts) {
            idx += i * stride;
            stride *= c;
        }
        idx
    }

    pub fn point(&self, idx: usize) -> Vec<f64> {
        self.multi_index(idx)
            .iter()
            .enumerate()
            .map(|(k, &i)| self.lo[k] + i as f64 * self.spacing(k))
            .collect()
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }
}

/// Characteristics from every seed of a grid, with Jacobian estimates of
/// `z -> X(t, z)` at every time stamp.
#[derive(Debug, Clone)]
pub struct FlowMap {
    pub seeds: SeedGrid,
    pub trajectories: Vec<CharTrajectory>,
    /// `jacobians[k][s]`: determinant estimate at stamp `k`, seed `s`.
    pub jacobians: Vec<Vec<f64>>,
    pub t_star: f64,
    domain_period: Option<Vec<f64>>,
}

const DET_FLOOR: f64 = 1e-6;
const COLLISION_FRACTION: f64 = 1e-6;

impl FlowMap {
    pub fn build(
        prob: &ControlProblem,
        u0: &Expr,
        seeds: SeedGrid,
        horizon: f64,
        dt: f64,
    ) -> Result<FlowMap, CharError> {
        if seeds.dim() != prob.n() {
            return Err(ProblemError::Dimension(format!(
                "seed grid is {}-dimensional, problem is {}-dimensional",
                seeds.dim(),
                prob.n()
            ))
            .into());
        }
        let trajectories = seeds
            .points()
            .par_iter()
            .map(|z| integrate_characteristic(prob, u0, z, horizon, dt))
            .collect::<Result<Vec<_>, _>>()?;
        let stamps = trajectories[0].states.len();
        let jacobians = (0..stamps)
            .map(|k| (0..seeds.len()).map(|s| jacobian_det(&seeds, &trajectories, k, s)).collect())
            .collect();
        let domain_period = match prob.boundary() {
            Boundary::Periodic => Some((0..prob.n()).map(|k| prob.domain().width(k)).collect()),
            Boundary::Clamp => None,
        };
        let mut flow = FlowMap {
            seeds,
            trajectories,
            jacobians,
            t_star: horizon,
            domain_period,
        };
        flow.t_star = flow.detect_caustic();
        Ok(flow)
    }

    pub fn times(&self) -> Vec<f64> {
        self.trajectories[0].states.iter().map(|s| s.t).collect()
    }

    fn gap(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .enumerate()
            .map(|(k, (a, b))| {
                let mut d = b - a;
                if let Some(w) = &self.domain_period {
                    d -= w[k] * (d / w[k]).round();
                }
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }

    fn detect_caustic(&self) -> f64 {
        let horizon = self.trajectories[0].last().t;
        let min_spacing = (0..self.seeds.dim()).map(|k| self.seeds.spacing(k)).fold(f64::INFINITY, f64::min);
        for (k, dets) in self.jacobians.iter().enumerate() {
            let t = self.trajectories[0].states[k].t;
            if dets.iter().any(|&d| d < DET_FLOOR) {
                return t;
            }
            for s in 0..self.seeds.len() {
                let mi = self.seeds.multi_index(s);
                for axis in 0..self.seeds.dim() {
                    if mi[axis] + 1 < self.seeds.counts[axis] {
                        let mut nb = mi.clone();
                        nb[axis] += 1;
                        let o = self.seeds.linear_index(&nb);
                        let d = self.gap(&self.trajectories[s].states[k].x, &self.trajectories[o].states[k].x);
                        if d < COLLISION_FRACTION * min_spacing {
                            return t;
                        }
                    }
                }
            }
        }
        horizon
    }

    /// `u(t, x) = U(t, Z(t, x))` by inverting the deformed seed grid locally.
    /// Times between stamps are interpolated linearly.
    pub fn reconstruct(&self, t: f64, x: &[f64]) -> Result<f64, CharError> {
        if t > self.t_star + 1e-12 || (t >= self.t_star && self.t_star < self.trajectories[0].last().t) {
            return Err(CharError::BeyondCaustic { t, t_star: self.t_star });
        }
        let states = &self.trajectories[0].states;
        let t0 = states[0].t;
        let dt = self.trajectories[0].dt;
        if states.len() == 1 {
            return self.reconstruct_at(0, x);
        }
        let pos = ((t - t0) / dt).clamp(0.0, (states.len() - 1) as f64);
        let k = pos.floor() as usize;
        let frac = pos - k as f64;
        if frac < 1e-9 || k + 1 >= states.len() {
            return self.reconstruct_at(k, x);
        }
        if frac > 1.0 - 1e-9 {
            return self.reconstruct_at(k + 1, x);
        }
        let a = self.reconstruct_at(k, x)?;
        let b = self.reconstruct_at(k + 1, x)?;
        Ok((1.0 - frac) * a + frac * b)
    }

    fn reconstruct_at(&self, k: usize, x: &[f64]) -> Result<f64, CharError> {
        let state = |s: usize| &self.trajectories[s].states[k];
        let t = state(0).t;
        let outside = || CharError::Extrapolation { t, x: x.to_vec() };
        match self.seeds.dim() {
            1 => {
                for i in 0..self.seeds.counts[0] - 1 {
                    let (a, b) = (state(i), state(i + 1));
                    let (xa, xb) = (a.x[0], b.x[0]);
                    let (lo, hi) = if xa <= xb { (xa, xb) } else { (xb, xa) };
                    let tol = 1e-12 * (1.0 + hi.abs());
                    if x[0] >= lo - tol && x[0] <= hi + tol && hi > lo {
                        let lam = ((x[0] - xa) / (xb - xa)).clamp(0.0, 1.0);
                        return Ok((1.0 - lam) * a.value + lam * b.value);
                    }
                    if hi == lo && (x[0] - lo).abs() <= tol {
                        return Ok(a.value);
                    }
                }
                Err(outside())
            }
            2 => {
                let (c0, c1) = (self.seeds.counts[0], self.seeds.counts[1]);
                for j in 0..c1 - 1 {
                    for i in 0..c0 - 1 {
                        let v00 = self.seeds.linear_index(&[i, j]);
                        let v10 = self.seeds.linear_index(&[i + 1, j]);
                        let v01 = self.seeds.linear_index(&[i, j + 1]);
                        let v11 = self.seeds.linear_index(&[i + 1, j + 1]);
                        for tri in [[v00, v10, v11], [v00, v11, v01]] {
                            if let Some(w) = barycentric(&state(tri[0]).x, &state(tri[1]).x, &state(tri[2]).x, x) {
                                return Ok(w[0] * state(tri[0]).value
                                    + w[1] * state(tri[1]).value
                                    + w[2] * state(tri[2]).value);
                            }
                        }
                    }
                }
                Err(outside())
            }
            d => Err(ProblemError::Dimension(format!("reconstruction supports n <= 2, got {d}")).into()),
        }
    }
}

fn barycentric(a: &[f64], b: &[f64], c: &[f64], x: &[f64]) -> Option<[f64; 3]> {
    let (e1, e2) = ([b[0] - a[0], b[1] - a[1]], [c[0] - a[0], c[1] - a[1]]);
    let det = e1[0] * e2[1] - e1[1] * e2[0];
    if det.abs() < 1e-300 {
        return None;
    }
    let r = [x[0] - a[0], x[1] - a[1]];
    let l1 = (r[0] * e2[1] - r[1] * e2[0]) / det;
    let l2 = (e1[0] * r[1] - e1[1] * r[0]) / det;
    let l0 = 1.0 - l1 - l2;
    let tol = -1e-10;
    (l0 >= tol && l1 >= tol && l2 >= tol).then_some([l0, l1, l2])
}

/// Finite-difference `det dX/dz` at seed `s`, central inside the grid and
/// one-sided on its edges.
fn jacobian_det(seeds: &SeedGrid, traj: &[CharTrajectory], k: usize, s: usize) -> f64 {
    let d = seeds.dim();
    let mi = seeds.multi_index(s);
    let mut jac = vec![vec![0.0; d]; d];
    for axis in 0..d {
        let (lo, hi) = if mi[axis] == 0 {
            (mi[axis], mi[axis] + 1)
        } else if mi[axis] + 1 == seeds.counts[axis] {
            (mi[axis] - 1, mi[axis])
        } else {
            (mi[axis] - 1, mi[axis] + 1)
        };
        let mut a = mi.clone();
        a[axis] = lo;
        let mut b = mi.clone();
        b[axis] = hi;
        let xa = &traj[seeds.linear_index(&a)].states[k].x;
        let xb = &traj[seeds.linear_index(&b)].states[k].x;
        let dz = (hi - lo) as f64 * seeds.spacing(axis);
        for row in 0..d {
            jac[row][axis] = (xb[row] - xa[row]) / dz;
        }
    }
    match d {
        1 => jac[0][0],
        2 => jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0],
        _ => f64::NAN,
    }
}

/// Estimated invertibility horizon `T*` of `z -> X(t, z)` over the seed grid;
/// returns `horizon` when no crossing is detected.
pub fn caustic_time(
    prob: &ControlProblem,
    u0: &Expr,
    seeds: SeedGrid,
    horizon: f64,
    dt: f64,
) -> Result<f64, CharError> {
    Ok(FlowMap::build(prob, u0, seeds, horizon, dt)?.t_star)
}

/// Convenience wrapper reconstructing from a freshly built flow.
pub fn reconstruct_solution(flow: &FlowMap, t: f64, x: &[f64]) -> Result<f64, CharError> {
    flow.reconstruct(t, x)
}
