use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{ControlProblem, ProblemError};
use crate::expr::EvalEnv;

const STARTS: usize = 20;
const U_TOL: f64 = 1e-9;
const VALUE_CAP: f64 = 1e12;
const RADIUS_START: f64 = 8.0;
const RADIUS_CAP: f64 = 1e6;
const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// `H(x, p, t) = sup_u <p, f(x,u)> - L(x,u,t)` with its maximizer and the
/// envelope derivatives `H_x`, `H_p` taken at that maximizer.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HamiltonianEval {
    pub value: f64,
    pub argmax: Vec<f64>,
    pub hx: Vec<f64>,
    pub hp: Vec<f64>,
}

impl ControlProblem {
    pub fn hamiltonian(&self, x: &[f64], p: &[f64], t: f64) -> Result<HamiltonianEval, ProblemError> {
        let argmax = self.hamiltonian_argmax(x, p, t)?;
        self.envelope(x, p, t, argmax)
    }

    /// Maximizer of `<p, f(x,u)> - L(x,u,t)` over the control box.
    pub fn hamiltonian_argmax(&self, x: &[f64], p: &[f64], t: f64) -> Result<Vec<f64>, ProblemError> {
        if p.len() != self.n() || x.len() != self.n() {
            return Err(ProblemError::Dimension(format!(
                "x has {} and p has {} components, expected {}",
                x.len(),
                p.len(),
                self.n()
            )));
        }
        match self.separable {
            Some(_) => self.closed_form_argmax(x, p, t),
            None => self.numeric_argmax(x, p, t),
        }
    }

    /// Pre-Hamiltonian `<p, f(x,u)> - L(x,u,t)` at a fixed control.
    pub fn pre_hamiltonian(&self, x: &[f64], p: &[f64], u: &[f64], t: f64) -> Result<f64, ProblemError> {
        let env = EvalEnv::new(x, u, t);
        let mut s = -self.lagrangian.eval(&env)?;
        for (pi, f) in p.iter().zip(&self.dynamics) {
            s += pi * f.eval(&env)?;
        }
        Ok(s)
    }

    fn envelope(&self, x: &[f64], p: &[f64], t: f64, u: Vec<f64>) -> Result<HamiltonianEval, ProblemError> {
        let env = EvalEnv::new(x, &u, t);
        let n = self.n();
        let mut hp = vec![0.0; n];
        for (h, f) in hp.iter_mut().zip(&self.dynamics) {
            *h = f.eval(&env)?;
        }
        let lag = self.lagrangian.eval(&env)?;
        let value = p.iter().zip(&hp).map(|(a, b)| a * b).sum::<f64>() - lag;
        if value.abs() > VALUE_CAP {
            return Err(ProblemError::Superlinearity(format!("|H| = {value:e} at x = {x:?}, p = {p:?}")));
        }
        let mut hx = vec![0.0; n];
        for (k, h) in hx.iter_mut().enumerate() {
            let mut s = -self.dl_dx[k].eval(&env)?;
            for (i, pi) in p.iter().enumerate() {
                let d = &self.df_dx[i][k];
                if !d.is_zero() {
                    s += pi * d.eval(&env)?;
                }
            }
            *h = s;
        }
        Ok(HamiltonianEval {
            value,
            argmax: u,
            hx,
            hp,
        })
    }

    #[allow(clippy::needless_range_loop)]
    fn closed_form_argmax(&self, x: &[f64], p: &[f64], t: f64) -> Result<Vec<f64>, ProblemError> {
        let sep = self.separable.as_ref().expect("separable structure");
        let m = self.m();
        let zero = vec![0.0; m];
        let env = EvalEnv::new(x, &zero, t);
        let mut u = vec![0.0; m];
        for j in 0..m {
            // objective in u_j: s u_j - q u_j^2 / 2 (+ terms free of u_j)
            let mut s = -self.dl_du[j].eval(&env)?;
            for (i, pi) in p.iter().enumerate() {
                let b = &sep.b[i][j];
                if !b.is_zero() {
                    s += pi * b.eval(&env)?;
                }
            }
            let q = sep.q[j].eval(&env)?;
            let (lo, hi) = (self.controls.lo[j], self.controls.hi[j]);
            let unbounded = |what: &str| {
                ProblemError::Superlinearity(format!(
                    "control {j} is {what} with coefficient {s:e} on an unbounded side"
                ))
            };
            u[j] = if q > 0.0 {
                (s / q).clamp(lo, hi)
            } else if q == 0.0 {
                if s > 0.0 {
                    if hi.is_infinite() {
                        return Err(unbounded("linear"));
                    }
                    hi
                } else if s < 0.0 {
                    if lo.is_infinite() {
                        return Err(unbounded("linear"));
                    }
                    lo
                } else if lo.is_finite() {
                    lo
                } else {
                    0.0_f64.clamp(lo, hi)
                }
            } else {
                if lo.is_infinite() || hi.is_infinite() {
                    return Err(unbounded("convex"));
                }
                let g = |v: f64| s * v - q * v * v / 2.0;
                if g(hi) > g(lo) {
                    hi
                } else {
                    lo
                }
            };
        }
        Ok(u)
    }

    /// Objective used inside the search: points where `f` or `L` fault
    /// (for instance `exp` overflowing far out) are treated as `-inf`.
    fn search_objective(&self, x: &[f64], p: &[f64], u: &[f64], t: f64) -> f64 {
        self.pre_hamiltonian(x, p, u, t).unwrap_or(f64::NEG_INFINITY)
    }

    fn objective_grad(&self, x: &[f64], p: &[f64], u: &[f64], t: f64, grad: &mut [f64]) -> Result<(), ProblemError> {
        let env = EvalEnv::new(x, u, t);
        for (j, g) in grad.iter_mut().enumerate() {
            let mut s = -self.dl_du[j].eval(&env)?;
            for (i, pi) in p.iter().enumerate() {
                let d = &self.df_du[i][j];
                if !d.is_zero() {
                    s += pi * d.eval(&env)?;
                }
            }
            *g = s;
        }
        Ok(())
    }

    fn numeric_argmax(&self, x: &[f64], p: &[f64], t: f64) -> Result<Vec<f64>, ProblemError> {
        let m = self.m();
        let (lo, hi) = (&self.controls.lo, &self.controls.hi);
        let mut radius = RADIUS_START;
        loop {
            let a: Vec<f64> = lo.iter().map(|v| v.max(-radius)).collect();
            let b: Vec<f64> = hi.iter().map(|v| v.min(radius)).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
            let mut best: Option<(f64, Vec<f64>)> = None;
            for start in 0..STARTS {
                let u0: Vec<f64> = if start == 0 {
                    (0..m).map(|j| 0.0_f64.clamp(a[j], b[j])).collect()
                } else {
                    (0..m).map(|j| a[j] + (b[j] - a[j]) * rng.gen::<f64>()).collect()
                };
                let (v, u) = self.local_maximize(x, p, t, u0, &a, &b)?;
                if v > VALUE_CAP {
                    return Err(ProblemError::Superlinearity(format!(
                        "objective reached {v:e} at u = {u:?}"
                    )));
                }
                best = Some(match best {
                    None => (v, u),
                    Some((bv, bu)) => {
                        let tie = (v - bv).abs() <= 1e-12 * (1.0 + bv.abs());
                        if (tie && lex_less(&u, &bu)) || (!tie && v > bv) {
                            (v, u)
                        } else {
                            (bv, bu)
                        }
                    }
                });
            }
            let (_, u) = best.expect("at least one start");
            let pinned = (0..m).any(|j| {
                (lo[j].is_infinite() && u[j] - a[j] < 1e-6 * radius)
                    || (hi[j].is_infinite() && b[j] - u[j] < 1e-6 * radius)
            });
            if !pinned {
                return Ok(u);
            }
            if radius >= RADIUS_CAP {
                return Err(ProblemError::Superlinearity(format!(
                    "maximizer still on the search boundary at radius {radius:e}"
                )));
            }
            radius *= 2.0;
        }
    }

    /// Cyclic golden-section line maximization, then projected gradient ascent.
    fn local_maximize(
        &self,
        x: &[f64],
        p: &[f64],
        t: f64,
        mut u: Vec<f64>,
        a: &[f64],
        b: &[f64],
    ) -> Result<(f64, Vec<f64>), ProblemError> {
        let m = u.len();
        let sweeps = if m == 1 { 1 } else { 4 };
        for _ in 0..sweeps {
            for j in 0..m {
                let eval = |v: f64| -> Result<f64, ProblemError> {
                    let mut w = u.clone();
                    w[j] = v;
                    Ok(self.search_objective(x, p, &w, t))
                };
                let (mut lo, mut hi) = (a[j], b[j]);
                let mut c = hi - INV_PHI * (hi - lo);
                let mut d = lo + INV_PHI * (hi - lo);
                let (mut fc, mut fd) = (eval(c)?, eval(d)?);
                while hi - lo > U_TOL {
                    if fc >= fd {
                        hi = d;
                        d = c;
                        fd = fc;
                        c = hi - INV_PHI * (hi - lo);
                        fc = eval(c)?;
                    } else {
                        lo = c;
                        c = d;
                        fc = fd;
                        d = lo + INV_PHI * (hi - lo);
                        fd = eval(d)?;
                    }
                }
                let mid = 0.5 * (lo + hi);
                // endpoints can win when the objective is monotone on the box
                let mut cands = [(eval(mid)?, mid), (eval(a[j])?, a[j]), (eval(b[j])?, b[j])];
                cands.sort_by(|l, r| r.0.total_cmp(&l.0));
                u[j] = cands[0].1;
            }
        }

        let mut value = self.search_objective(x, p, &u, t);
        if value == f64::NEG_INFINITY {
            // every probe faulted; let the caller's envelope report the fault
            return Ok((value, u));
        }
        let mut grad = vec![0.0; m];
        let mut step = 1.0;
        for _ in 0..200 {
            self.objective_grad(x, p, &u, t, &mut grad)?;
            let mut improved = false;
            while step > 1e-14 {
                let trial: Vec<f64> = (0..m).map(|j| (u[j] + step * grad[j]).clamp(a[j], b[j])).collect();
                let moved: f64 = trial.iter().zip(&u).map(|(q, r)| (q - r).powi(2)).sum::<f64>().sqrt();
                if moved < U_TOL * 1e-3 {
                    break;
                }
                let tv = self.search_objective(x, p, &trial, t);
                let predicted: f64 = grad.iter().zip(trial.iter().zip(&u)).map(|(g, (q, r))| g * (q - r)).sum();
                if tv >= value + 1e-4 * predicted && tv > value {
                    let done = moved <= U_TOL;
                    u = trial;
                    value = tv;
                    improved = !done;
                    step *= 2.0;
                    break;
                }
                step *= 0.5;
            }
            if !improved {
                break;
            }
        }
        let (u, value) = self.newton_polish(x, p, t, u, value, a, b);
        Ok((value, u))
    }

    /// Newton on the control gradient at an interior maximizer, so that
    /// `H_p = f(x, u*)` is accurate to rounding rather than to `U_TOL`.
    #[allow(clippy::too_many_arguments)]
    fn newton_polish(&self, x: &[f64], p: &[f64], t: f64, mut u: Vec<f64>, mut value: f64, a: &[f64], b: &[f64]) -> (Vec<f64>, f64) {
        let m = u.len();
        let mut grad = vec![0.0; m];
        let (mut gp, mut gm) = (vec![0.0; m], vec![0.0; m]);
        for _ in 0..8 {
            if self.objective_grad(x, p, &u, t, &mut grad).is_err() {
                break;
            }
            let gnorm = grad.iter().fold(0.0_f64, |acc, g| acc.max(g.abs()));
            if gnorm == 0.0 || !gnorm.is_finite() {
                break;
            }
            let mut hess = DMatrix::zeros(m, m);
            for k in 0..m {
                let h = 1e-5 * (1.0 + u[k].abs());
                let mut w = u.clone();
                w[k] = u[k] + h;
                let up = self.objective_grad(x, p, &w, t, &mut gp);
                w[k] = u[k] - h;
                let down = self.objective_grad(x, p, &w, t, &mut gm);
                if up.is_err() || down.is_err() {
                    return (u, value);
                }
                for j in 0..m {
                    hess[(j, k)] = (gp[j] - gm[j]) / (2.0 * h);
                }
            }
            let Some(step) = hess.lu().solve(&-DVector::from_column_slice(&grad)) else {
                break;
            };
            let trial: Vec<f64> = u.iter().zip(step.iter()).map(|(v, d)| v + d).collect();
            if !(0..m).all(|j| trial[j].is_finite() && trial[j] > a[j] && trial[j] < b[j]) {
                break;
            }
            let tv = self.search_objective(x, p, &trial, t);
            if self.objective_grad(x, p, &trial, t, &mut gp).is_err() {
                break;
            }
            let tnorm = gp.iter().fold(0.0_f64, |acc, g| acc.max(g.abs()));
            if !(tnorm < gnorm && tv >= value - 1e-12 * (1.0 + value.abs())) {
                break;
            }
            u = trial;
            value = tv;
        }
        (u, value)
    }
}

fn lex_less(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return true;
        }
        if x > y {
            return false;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::super::{Boundary, ControlSet, StateBox};
    use super::*;

    fn one_d(f: &str, l: &str, controls: ControlSet) -> ControlProblem {
        ControlProblem::parse(
            &[f],
            l,
            controls,
            StateBox::new(vec![-2.0], vec![2.0]).unwrap(),
            1.0,
            Boundary::Clamp,
        )
        .unwrap()
    }

    /// Brute-force grid search over `[lo, hi]` at the given step.
    fn grid_search(prob: &ControlProblem, x: &[f64], p: &[f64], lo: f64, hi: f64, step: f64) -> (f64, f64) {
        let count = ((hi - lo) / step).round() as usize;
        (0..=count)
            .map(|k| {
                let u = lo + k as f64 * step;
                (prob.pre_hamiltonian(x, p, &[u], 0.0).unwrap(), u)
            })
            .fold((f64::NEG_INFINITY, 0.0), |acc, c| if c.0 > acc.0 { c } else { acc })
    }

    #[test]
    fn quadratic_unbounded() {
        let prob = one_d("u0", "u0^2/2", ControlSet::unbounded(1));
        let h = prob.hamiltonian(&[0.0], &[1.0], 0.0).unwrap();
        assert_eq!(h.value, 0.5);
        assert_eq!(h.argmax, vec![1.0]);
        assert_eq!(h.hp, vec![1.0]);
        assert_eq!(h.hx, vec![0.0]);
        let h0 = prob.hamiltonian(&[0.0], &[0.0], 0.0).unwrap();
        assert_eq!((h0.value, h0.argmax[0]), (0.0, 0.0));
    }

    #[test]
    fn quadratic_boxed_matches_grid_search() {
        let prob = one_d("u0", "u0^2/2", ControlSet::symmetric(1, 1.0));
        let h = prob.hamiltonian(&[0.0], &[2.0], 0.0).unwrap();
        let (gv, gu) = grid_search(&prob, &[0.0], &[2.0], -1.0, 1.0, 1e-4);
        assert!((gv - 1.5).abs() < 1e-12 && (gu - 1.0).abs() < 1e-12);
        assert!((h.value - gv).abs() < 1e-12);
        assert_eq!(h.argmax, vec![1.0]);
    }

    #[test]
    fn numeric_branch_on_exponential_cost() {
        // sup_u p u - exp(u) = p log p - p at u = log p
        let prob = one_d("u0", "exp(u0)", ControlSet::unbounded(1));
        assert!(!prob.has_closed_form_hamiltonian());
        let p = 3.0_f64;
        let h = prob.hamiltonian(&[0.5], &[p], 0.0).unwrap();
        assert!((h.argmax[0] - p.ln()).abs() < 1e-7, "{h:?}");
        assert!((h.value - (p * p.ln() - p)).abs() < 1e-9);
    }

    #[test]
    fn numeric_branch_detects_unbounded_sup() {
        let prob = one_d("u0", "exp(u0)", ControlSet::unbounded(1));
        assert!(matches!(
            prob.hamiltonian(&[0.0], &[-1.0], 0.0),
            Err(ProblemError::Superlinearity(_))
        ));
        let linear = one_d("u0", "1", ControlSet::unbounded(1));
        assert!(matches!(
            linear.hamiltonian(&[0.0], &[1.0], 0.0),
            Err(ProblemError::Superlinearity(_))
        ));
    }

    #[test]
    fn bang_bang_on_bounded_linear_cost() {
        let prob = one_d("u0", "1", ControlSet::symmetric(1, 1.0));
        assert_eq!(prob.hamiltonian(&[0.0], &[2.0], 0.0).unwrap().argmax, vec![1.0]);
        assert_eq!(prob.hamiltonian(&[0.0], &[-2.0], 0.0).unwrap().argmax, vec![-1.0]);
        // tie: smallest control wins
        assert_eq!(prob.hamiltonian(&[0.0], &[0.0], 0.0).unwrap().argmax, vec![-1.0]);
    }

    #[test]
    fn envelope_hx_uses_state_derivatives() {
        // f = x u, L = u^2/2 + x^2/2 -> u* = p x, H = p^2 x^2/2 - x^2/2
        let prob = one_d("x0*u0", "u0^2/2 + x0^2/2", ControlSet::unbounded(1));
        let (x, p) = (0.7, 1.3);
        let h = prob.hamiltonian(&[x], &[p], 0.0).unwrap();
        assert!((h.value - (p * p * x * x / 2.0 - x * x / 2.0)).abs() < 1e-12);
        assert!((h.hx[0] - (p * p * x - x)).abs() < 1e-12);
        assert!((h.hp[0] - p * x * x).abs() < 1e-12);
    }
}
