use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{norm, Cost, CostError, CostMethod, CostQuery, CostResult};
use crate::characteristics::{characteristic_rhs, CharError};
use crate::ode::{step_count, Rk4};
use crate::problem::{Boundary, ControlProblem};

#[derive(Debug, Clone, PartialEq)]
pub struct ShootingSettings {
    /// RK4 step of the characteristic integration.
    pub dt: f64,
    /// Terminal residual `|X(t1) - y|` accepted as converged.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub starts: usize,
    pub seed: u64,
}

impl Default for ShootingSettings {
    fn default() -> Self {
        ShootingSettings {
            dt: 1e-2,
            tolerance: 1e-10,
            max_iterations: 40,
            starts: 8,
            seed: 0,
        }
    }
}

/// Characteristic from `(x, p0, 0)`: the states `X` at every stamp, flat,
/// and the accumulated `U(t1)`.
fn endpoint(
    prob: &ControlProblem,
    x: &[f64],
    p0: &[f64],
    q: &CostQuery,
    steps: usize,
) -> Result<(Vec<f64>, f64), CharError> {
    let n = x.len();
    let h = (q.t1 - q.t0) / steps as f64;
    let mut y: Vec<f64> = x.iter().chain(p0).copied().chain(std::iter::once(0.0)).collect();
    let mut next = vec![0.0; y.len()];
    let mut rk = Rk4::new(y.len());
    let mut rhs = characteristic_rhs(prob);
    let clamp = prob.boundary() == Boundary::Clamp;
    let slack = 1e-9 * prob.domain().max_width();
    let mut path = Vec::with_capacity((steps + 1) * n);
    path.extend_from_slice(x);
    for k in 0..steps {
        let t = q.t0 + k as f64 * h;
        rk.step(&mut rhs, t, &y, h, &mut next)?;
        std::mem::swap(&mut y, &mut next);
        if !y.iter().all(|v| v.is_finite()) {
            return Err(CharError::Step(format!("non-finite state at t = {}", t + h)));
        }
        if clamp && !prob.domain().contains(&y[..n], slack) {
            return Err(CharError::Escape {
                time: t + h,
                x: y[..n].to_vec(),
            });
        }
        path.extend_from_slice(&y[..n]);
    }
    Ok((path, y[2 * n]))
}

/// Minimum cost by shooting on the initial costate: Newton on
/// `p0 -> X(t1; x, p0) - y` from several starts.
pub fn cost_shooting(prob: &ControlProblem, q: &CostQuery, s: &ShootingSettings) -> Result<CostResult, CostError> {
    q.validate(prob)?;
    let n = prob.n();
    let steps = step_count(q.t1 - q.t0, s.dt).max(1);
    let residual = |p0: &[f64]| -> Option<(Vec<f64>, f64, Vec<f64>)> {
        let (path, val) = endpoint(prob, &q.x, p0, q, steps).ok()?;
        let r = prob.domain().displacement(&q.y, &path[steps * n..], prob.boundary());
        Some((r, val, path))
    };

    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let scale = norm(&prob.domain().displacement(&q.x, &q.y, prob.boundary())).max(1.0) / (q.t1 - q.t0);
    let mut starts: Vec<Vec<f64>> = vec![vec![0.0; n]];
    for k in 0..n {
        for sign in [1.0, -1.0] {
            let mut e = vec![0.0; n];
            e[k] = sign * scale;
            starts.push(e);
        }
    }
    starts.truncate(s.starts.max(1));
    while starts.len() < s.starts {
        starts.push((0..n).map(|_| rng.gen_range(-2.0..=2.0) * scale).collect());
    }

    let mut best_residual = f64::INFINITY;
    for start in starts {
        let mut p = start;
        let Some((mut r, mut val, mut path)) = residual(&p) else {
            continue;
        };
        let mut rn = norm(&r);
        for _ in 0..=s.max_iterations {
            if rn <= s.tolerance {
                break;
            }
            let Some(step) = newton_step(&residual, &p, &r) else {
                break;
            };
            let mut alpha = 1.0;
            let mut accepted = false;
            for _ in 0..30 {
                let trial: Vec<f64> = p.iter().zip(&step).map(|(a, d)| a + alpha * d).collect();
                if let Some((tr, tv, tp)) = residual(&trial) {
                    let tn = norm(&tr);
                    if tn < rn {
                        p = trial;
                        r = tr;
                        val = tv;
                        path = tp;
                        rn = tn;
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        best_residual = best_residual.min(rn);
        if rn <= s.tolerance {
            let h = (q.t1 - q.t0) / steps as f64;
            let trajectory = path
                .chunks(n)
                .enumerate()
                .map(|(k, x)| (q.t0 + k as f64 * h, x.to_vec()))
                .collect();
            return Ok(CostResult {
                value: Cost::Finite(val),
                method: CostMethod::Shooting,
                trajectory,
                p0: Some(p),
                terminal_gap: rn,
            });
        }
    }
    Err(CostError::NotConverged {
        residual: best_residual,
    })
}

/// Newton direction with a forward-difference Jacobian.
fn newton_step(
    residual: &impl Fn(&[f64]) -> Option<(Vec<f64>, f64, Vec<f64>)>,
    p: &[f64],
    r: &[f64],
) -> Option<Vec<f64>> {
    let n = p.len();
    let mut jac = DMatrix::zeros(n, n);
    for k in 0..n {
        let h = 1e-6 * (1.0 + p[k].abs());
        let mut pk = p.to_vec();
        pk[k] += h;
        let (rk, _, _) = residual(&pk)?;
        for i in 0..n {
            jac[(i, k)] = (rk[i] - r[i]) / h;
        }
    }
    let rhs = -DVector::from_column_slice(r);
    let step = jac.lu().solve(&rhs)?;
    step.iter().all(|v| v.is_finite()).then(|| step.iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::characteristics::integrate_from;
    use crate::problem::{ControlSet, StateBox};

    #[test]
    fn straight_line_cost() {
        let prob = ControlProblem::quadratic(1, -1.0, 1.0);
        let r = cost_shooting(&prob, &CostQuery::new(vec![0.0], vec![0.5]), &ShootingSettings::default()).unwrap();
        assert!((r.value.finite().unwrap() - 0.125).abs() < 1e-10);
        assert!((r.p0.as_ref().unwrap()[0] - 0.5).abs() < 1e-8);
        let end = &r.trajectory.last().unwrap().1;
        assert!((end[0] - 0.5).abs() < 1e-8);
    }

    #[test]
    fn coincident_endpoints_cost_nothing() {
        let prob = ControlProblem::quadratic(2, -1.0, 1.0);
        let r = cost_shooting(&prob, &CostQuery::new(vec![0.3, -0.2], vec![0.3, -0.2]), &ShootingSettings::default())
            .unwrap();
        assert_eq!(r.value, Cost::Finite(0.0));
    }

    #[test]
    fn unreachable_target_does_not_converge() {
        let prob = ControlProblem::parse(
            &["u0"],
            "1",
            ControlSet::symmetric(1, 1.0),
            StateBox::new(vec![-3.0], vec![3.0]).unwrap(),
            1.0,
            Boundary::Clamp,
        )
        .unwrap();
        let r = cost_shooting(&prob, &CostQuery::new(vec![0.0], vec![2.0]), &ShootingSettings::default());
        assert!(matches!(r, Err(CostError::NotConverged { .. })));
    }

    #[test]
    fn double_integrator_minimum_energy() {
        let prob = ControlProblem::parse(
            &["x1", "u0"],
            "u0^2/2",
            ControlSet::unbounded(1),
            StateBox::new(vec![-3.0, -3.0], vec![3.0, 3.0]).unwrap(),
            1.0,
            Boundary::Clamp,
        )
        .unwrap();
        let r = cost_shooting(&prob, &CostQuery::new(vec![0.0, 0.0], vec![1.0, 0.0]), &ShootingSettings::default())
            .unwrap();
        assert!((r.value.finite().unwrap() - 6.0).abs() < 1e-6, "{:?}", r.value);
        // u(t) = 6 - 12 t is the maximizer p1, so p1(0) = 6 and p0 = 12
        let p0 = r.p0.unwrap();
        assert!((p0[0] - 12.0).abs() < 1e-5 && (p0[1] - 6.0).abs() < 1e-5, "{p0:?}");
    }

    #[test]
    fn reintegration_reproduces_cost() {
        let prob = ControlProblem::parse(
            &["u0 + 0.3*sin(x0)"],
            "u0^2/2 + x0^2/4",
            ControlSet::unbounded(1),
            StateBox::new(vec![-2.0], vec![2.0]).unwrap(),
            1.0,
            Boundary::Clamp,
        )
        .unwrap();
        let s = ShootingSettings::default();
        let q = CostQuery::new(vec![-0.5], vec![0.7]);
        let r = cost_shooting(&prob, &q, &s).unwrap();
        let tr = integrate_from(&prob, &q.x, r.p0.as_ref().unwrap(), 0.0, 0.0, 1.0, s.dt).unwrap();
        assert!((tr.last().value - r.value.finite().unwrap()).abs() < 1e-8);
    }
}
