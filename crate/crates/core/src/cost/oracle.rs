use super::{Cost, CostError, CostQuery};
use crate::expr::Var;
use crate::problem::ControlProblem;

/// Stand-in for "not reached" inside the dynamic program.
pub const BIG: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSettings {
    /// Target spatial spacing; each axis is adjusted so both endpoints are nodes.
    pub h: f64,
    /// Time steps; defaults to `span / sqrt(h)` rounded.
    pub steps: Option<usize>,
    /// Largest per-step move in nodes along each axis; defaults to the whole
    /// axis in 1-D and 12 nodes in 2-D.
    pub reach: Option<usize>,
}

impl Default for OracleSettings {
    fn default() -> Self {
        OracleSettings {
            h: 0.01,
            steps: None,
            reach: None,
        }
    }
}

/// Per-axis node coordinates aligned with both endpoints.
struct Axes {
    coords: Vec<Vec<f64>>,
    start: Vec<usize>,
    target: Vec<usize>,
}

impl Axes {
    fn new(prob: &ControlProblem, q: &CostQuery, h: f64) -> Axes {
        let dom = prob.domain();
        let mut coords = Vec::new();
        let mut start = Vec::new();
        let mut target = Vec::new();
        for k in 0..prob.n() {
            let (a, b) = (q.x[k], q.y[k]);
            let hk = if (b - a).abs() > 0.0 {
                (b - a).abs() / ((b - a).abs() / h).round().max(1.0)
            } else {
                h
            };
            let slack = 1e-9 * hk;
            let jlo = -(((a - dom.lo[k]) + slack) / hk).floor() as i64;
            let jhi = (((dom.hi[k] - a) + slack) / hk).floor() as i64;
            let c: Vec<f64> = (jlo..=jhi).map(|j| a + j as f64 * hk).collect();
            start.push((-jlo) as usize);
            target.push(((b - a) / hk).round() as i64 - jlo);
            coords.push(c);
        }
        Axes {
            coords,
            start,
            target: target.into_iter().map(|t| t as usize).collect(),
        }
    }

    fn len(&self) -> usize {
        self.coords.iter().map(Vec::len).product()
    }

    fn multi(&self, mut idx: usize) -> Vec<usize> {
        self.coords
            .iter()
            .map(|c| {
                let i = idx % c.len();
                idx /= c.len();
                i
            })
            .collect()
    }

    fn linear(&self, mi: &[usize]) -> usize {
        let mut idx = 0;
        let mut stride = 1;
        for (i, c) in mi.iter().zip(&self.coords) {
            idx += i * stride;
            stride *= c.len();
        }
        idx
    }

    fn point(&self, mi: &[usize]) -> Vec<f64> {
        mi.iter().zip(&self.coords).map(|(&i, c)| c[i]).collect()
    }
}

/// Running cost per unit time of moving with velocity `v`:
/// `inf {L(x,u,t) : f(x,u) = v}` when `f` is affine in a square, invertible
/// control, otherwise `sup_p p.v - H(x,p,t)`.
struct Lagrangian<'a> {
    prob: &'a ControlProblem,
    affine: bool,
}

impl<'a> Lagrangian<'a> {
    fn new(prob: &'a ControlProblem) -> Self {
        let (n, m) = (prob.n(), prob.m());
        let affine = n == m
            && prob.dynamics_exprs().iter().all(|f| {
                (0..m).all(|j| {
                    let d = f.diff(Var::U(j));
                    (0..m).all(|l| !d.depends_on(Var::U(l)))
                })
            });
        Lagrangian { prob, affine }
    }

    fn eval(&self, x: &[f64], v: &[f64], t: f64) -> f64 {
        let r = if self.affine { self.direct(x, v, t) } else { self.legendre(x, v, t) };
        r.filter(|l| l.is_finite() && *l < BIG).unwrap_or(f64::INFINITY)
    }

    fn direct(&self, x: &[f64], v: &[f64], t: f64) -> Option<f64> {
        let n = x.len();
        let zero = vec![0.0; n];
        let a = self.prob.dynamics(x, &zero).ok()?;
        let b = self.prob.dynamics_jacobian_u(x, &zero).ok()?;
        let bm = nalgebra::DMatrix::from_fn(n, n, |i, j| b[i][j]);
        let rhs = nalgebra::DVector::from_iterator(n, v.iter().zip(&a).map(|(v, a)| v - a));
        let u: Vec<f64> = bm.lu().solve(&rhs)?.iter().copied().collect();
        if !self.prob.controls().contains(&u) {
            return None;
        }
        self.prob.running_cost(x, &u, t).ok()
    }

    fn legendre(&self, x: &[f64], v: &[f64], t: f64) -> Option<f64> {
        let g = |p: &[f64]| -> Option<(f64, Vec<f64>)> {
            let h = self.prob.hamiltonian(x, p, t).ok()?;
            let val = p.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() - h.value;
            let grad = v.iter().zip(&h.hp).map(|(a, b)| a - b).collect();
            Some((val, grad))
        };
        let mut p = vec![0.0; x.len()];
        let (mut val, mut grad) = g(&p)?;
        let mut step = 1.0;
        for _ in 0..200 {
            if val >= BIG {
                return None;
            }
            let gn = grad.iter().map(|a| a * a).sum::<f64>().sqrt();
            if gn < 1e-10 {
                break;
            }
            let mut moved = false;
            for _ in 0..40 {
                let trial: Vec<f64> = p.iter().zip(&grad).map(|(a, b)| a + step * b).collect();
                if let Some((tv, tg)) = g(&trial) {
                    if tv > val {
                        p = trial;
                        val = tv;
                        grad = tg;
                        step *= 2.0;
                        moved = true;
                        break;
                    }
                }
                step *= 0.5;
            }
            if !moved {
                break;
            }
        }
        Some(val)
    }
}

/// Independent upper approximation of the cost by dynamic programming over
/// grid paths: `V_{k+1}(j) = min_i V_k(i) + dt l(x_i, (x_j - x_i)/dt)` from
/// `V_0 = 0` at `x` and `BIG` elsewhere.
pub fn cost_dp_oracle(prob: &ControlProblem, q: &CostQuery, s: &OracleSettings) -> Result<Cost, CostError> {
    q.validate(prob)?;
    let n = prob.n();
    if n > 2 {
        return Err(CostError::OracleDimension(n));
    }
    if s.h.is_nan() || s.h <= 0.0 {
        return Err(CostError::Query(format!("oracle spacing must be positive, got {}", s.h)));
    }
    let span = q.t1 - q.t0;
    let steps = s.steps.unwrap_or_else(|| (span / s.h.sqrt()).round().max(2.0) as usize).max(1);
    let dt = span / steps as f64;
    let axes = Axes::new(prob, q, s.h);
    let reach: Vec<usize> = axes
        .coords
        .iter()
        .map(|c| s.reach.unwrap_or(if n == 1 { c.len() } else { 12 }).min(c.len() - 1))
        .collect();
    let lag = Lagrangian::new(prob);
    let nodes = axes.len();

    let moves: Vec<Vec<isize>> = {
        let mut out = vec![vec![]];
        for &r in &reach {
            let r = r as isize;
            out = out
                .into_iter()
                .flat_map(|m| {
                    (-r..=r).map(move |d| {
                        let mut m = m.clone();
                        m.push(d);
                        m
                    })
                })
                .collect();
        }
        out
    };
    let arc = |i: usize, mv: &[isize], t: f64| -> Option<(usize, f64)> {
        let mi = axes.multi(i);
        let mut mj = Vec::with_capacity(n);
        for (k, d) in mv.iter().enumerate() {
            let j = mi[k] as isize + d;
            if j < 0 || j >= axes.coords[k].len() as isize {
                return None;
            }
            mj.push(j as usize);
        }
        let xi = axes.point(&mi);
        let xj = axes.point(&mj);
        let v: Vec<f64> = xi.iter().zip(&xj).map(|(a, b)| (b - a) / dt).collect();
        Some((axes.linear(&mj), dt * lag.eval(&xi, &v, t)))
    };

    let cache_ok = !prob.lagrangian_depends_on_time() && nodes * moves.len() <= 4_000_000;
    let cached: Option<Vec<Option<(usize, f64)>>> = cache_ok.then(|| {
        (0..nodes)
            .flat_map(|i| moves.iter().map(move |mv| (i, mv)))
            .map(|(i, mv)| arc(i, mv, q.t0))
            .collect()
    });

    let mut v = vec![BIG; nodes];
    v[axes.linear(&axes.start)] = 0.0;
    for k in 0..steps {
        let t = q.t0 + k as f64 * dt;
        let mut next = vec![BIG; nodes];
        for i in 0..nodes {
            if v[i] >= BIG {
                continue;
            }
            for (mi, mv) in moves.iter().enumerate() {
                let a = match &cached {
                    Some(c) => c[i * moves.len() + mi],
                    None => arc(i, mv, t),
                };
                if let Some((j, c)) = a {
                    let cand = v[i] + c;
                    if cand < next[j] {
                        next[j] = cand;
                    }
                }
            }
        }
        v = next;
    }
    let value = v[axes.linear(&axes.target)];
    Ok(if value >= BIG / 2.0 { Cost::Infeasible } else { Cost::Finite(value) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{Boundary, ControlSet, StateBox};

    #[test]
    fn quadratic_family_value() {
        let prob = ControlProblem::quadratic(1, -1.0, 1.0);
        let s = OracleSettings::default();
        let v = cost_dp_oracle(&prob, &CostQuery::new(vec![0.0], vec![0.5]), &s).unwrap();
        assert!((v.finite().unwrap() - 0.125).abs() < 5e-3);
        let z = cost_dp_oracle(&prob, &CostQuery::new(vec![0.3], vec![0.3]), &s).unwrap();
        assert!(z.finite().unwrap() <= 5e-3);
    }

    #[test]
    fn unreachable_is_infeasible() {
        let prob = ControlProblem::parse(
            &["u0"],
            "1",
            ControlSet::symmetric(1, 1.0),
            StateBox::new(vec![-3.0], vec![3.0]).unwrap(),
            1.0,
            Boundary::Clamp,
        )
        .unwrap();
        let s = OracleSettings::default();
        assert_eq!(cost_dp_oracle(&prob, &CostQuery::new(vec![0.0], vec![2.0]), &s).unwrap(), Cost::Infeasible);
        let v = cost_dp_oracle(&prob, &CostQuery::new(vec![0.0], vec![0.5]), &s).unwrap();
        assert!((v.finite().unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn legendre_route_agrees_with_direct_route() {
        // f = u^3 is not affine in u, so the conjugate of H is used
        let cubic = ControlProblem::parse(
            &["u0^3"],
            "u0^6/2",
            ControlSet::unbounded(1),
            StateBox::new(vec![-1.0], vec![1.0]).unwrap(),
            1.0,
            Boundary::Clamp,
        )
        .unwrap();
        let l = Lagrangian::new(&cubic);
        assert!(!l.affine);
        // with w = u^3 the cost is w^2/2
        for v in [0.0, 0.4, -1.3] {
            assert!((l.eval(&[0.0], &[v], 0.0) - v * v / 2.0).abs() < 1e-6, "{v}");
        }
    }

    #[test]
    fn two_dimensional_value() {
        let prob = ControlProblem::quadratic(2, -1.0, 1.0);
        let s = OracleSettings {
            h: 0.025,
            reach: Some(8),
            ..OracleSettings::default()
        };
        let v = cost_dp_oracle(&prob, &CostQuery::new(vec![-0.2, 0.1], vec![0.3, -0.4]), &s).unwrap();
        assert!((v.finite().unwrap() - 0.25).abs() < 1e-2, "{v:?}");
    }
}
