use super::{norm, Cost, CostError, CostMethod, CostQuery, CostResult};
use crate::problem::{Boundary, ControlProblem, ProblemError};

#[derive(Debug, Clone, PartialEq)]
pub struct TranscriptionSettings {
    /// Number of piecewise-constant control intervals.
    pub intervals: usize,
    /// Penalty weights on `|x_N - y|^2`, applied in sequence.
    pub penalties: Vec<f64>,
    pub max_iterations: usize,
    /// Terminal gap above which the solve is reported as failed.
    pub gap_tolerance: f64,
}

impl Default for TranscriptionSettings {
    fn default() -> Self {
        TranscriptionSettings {
            intervals: 50,
            penalties: vec![1e2, 1e3, 1e4, 1e5, 1e6, 1e7, 1e8],
            max_iterations: 4000,
            gap_tolerance: 1e-3,
        }
    }
}

struct Transcription<'a> {
    prob: &'a ControlProblem,
    q: &'a CostQuery,
    n: usize,
    m: usize,
    steps: usize,
    ds: f64,
}

struct Eval {
    running: f64,
    gap: Vec<f64>,
    states: Vec<Vec<f64>>,
}

impl Transcription<'_> {
    fn eval_point(&self, x: &[f64]) -> Vec<f64> {
        let mut x = x.to_vec();
        if self.prob.boundary() == Boundary::Periodic {
            self.prob.domain().wrap(&mut x);
        }
        x
    }

    fn forward(&self, u: &[f64]) -> Result<Eval, ProblemError> {
        let (n, m) = (self.n, self.m);
        let mut states = Vec::with_capacity(self.steps + 1);
        let mut x = self.q.x.clone();
        let mut running = 0.0;
        states.push(x.clone());
        for k in 0..self.steps {
            let s = self.q.t0 + k as f64 * self.ds;
            let uk = &u[k * m..(k + 1) * m];
            let xe = self.eval_point(&x);
            let f = self.prob.dynamics(&xe, uk)?;
            running += self.ds * self.prob.running_cost(&xe, uk, s)?;
            for i in 0..n {
                x[i] += self.ds * f[i];
            }
            states.push(x.clone());
        }
        let gap = self.prob.domain().displacement(&self.q.y, &x, self.prob.boundary());
        Ok(Eval { running, gap, states })
    }

    fn objective(&self, ev: &Eval, rho: f64) -> f64 {
        ev.running + rho * ev.gap.iter().map(|g| g * g).sum::<f64>()
    }

    /// Exact gradient of the discrete objective by the adjoint recursion.
    fn gradient(&self, u: &[f64], ev: &Eval, rho: f64) -> Result<Vec<f64>, ProblemError> {
        let (n, m) = (self.n, self.m);
        let mut lam: Vec<f64> = ev.gap.iter().map(|g| 2.0 * rho * g).collect();
        let mut grad = vec![0.0; u.len()];
        for k in (0..self.steps).rev() {
            let s = self.q.t0 + k as f64 * self.ds;
            let uk = &u[k * m..(k + 1) * m];
            let xe = self.eval_point(&ev.states[k]);
            let fx = self.prob.dynamics_jacobian_x(&xe, uk)?;
            let fu = self.prob.dynamics_jacobian_u(&xe, uk)?;
            let lx = self.prob.running_cost_grad_x(&xe, uk, s)?;
            let lu = self.prob.running_cost_grad_u(&xe, uk, s)?;
            for j in 0..m {
                let mut g = self.ds * lu[j];
                for i in 0..n {
                    g += self.ds * fu[i][j] * lam[i];
                }
                grad[k * m + j] = g;
            }
            let mut next = lam.clone();
            for c in 0..n {
                let mut v = self.ds * lx[c];
                for i in 0..n {
                    v += self.ds * fx[i][c] * lam[i];
                }
                next[c] += v;
            }
            lam = next;
        }
        Ok(grad)
    }

    fn project(&self, u: &mut [f64]) {
        for chunk in u.chunks_mut(self.m) {
            self.prob.controls().project(chunk);
        }
    }
}

const MEMORY: usize = 10;

/// Direct transcription: piecewise-constant controls, forward Euler states,
/// quadratic terminal penalty with continuation, minimized by spectral
/// projected gradient with a nonmonotone Armijo search.
pub fn cost_transcription(
    prob: &ControlProblem,
    q: &CostQuery,
    s: &TranscriptionSettings,
) -> Result<CostResult, CostError> {
    q.validate(prob)?;
    if s.intervals < 10 {
        return Err(CostError::Query(format!("need at least 10 intervals, got {}", s.intervals)));
    }
    let tr = Transcription {
        prob,
        q,
        n: prob.n(),
        m: prob.m(),
        steps: s.intervals,
        ds: (q.t1 - q.t0) / s.intervals as f64,
    };
    let mut u = vec![0.0; tr.steps * tr.m];
    tr.project(&mut u);
    let mut ev = tr.forward(&u)?;

    for &rho in &s.penalties {
        let mut f = tr.objective(&ev, rho);
        let mut g = tr.gradient(&u, &ev, rho)?;
        let mut history = vec![f];
        let mut lambda = 1.0 / norm(&g).max(1.0);
        for _ in 0..s.max_iterations {
            let d: Vec<f64> = {
                let mut trial: Vec<f64> = u.iter().zip(&g).map(|(a, b)| a - lambda * b).collect();
                tr.project(&mut trial);
                trial.iter().zip(&u).map(|(a, b)| a - b).collect()
            };
            let dn = norm(&d);
            if dn <= 1e-15 * (1.0 + norm(&u)) {
                break;
            }
            let slope: f64 = d.iter().zip(&g).map(|(a, b)| a * b).sum();
            let reference = history.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut alpha = 1.0;
            let mut accepted = None;
            for _ in 0..60 {
                let trial: Vec<f64> = u.iter().zip(&d).map(|(a, b)| a + alpha * b).collect();
                if let Ok(tev) = tr.forward(&trial) {
                    let tf = tr.objective(&tev, rho);
                    if tf.is_finite() && tf <= reference + 1e-4 * alpha * slope {
                        accepted = Some((trial, tev, tf));
                        break;
                    }
                }
                alpha *= 0.5;
            }
            let Some((nu, nev, nf)) = accepted else {
                break;
            };
            let ng = tr.gradient(&nu, &nev, rho)?;
            let sk: Vec<f64> = nu.iter().zip(&u).map(|(a, b)| a - b).collect();
            let yk: Vec<f64> = ng.iter().zip(&g).map(|(a, b)| a - b).collect();
            let sy: f64 = sk.iter().zip(&yk).map(|(a, b)| a * b).sum();
            let ss: f64 = sk.iter().map(|a| a * a).sum();
            lambda = if sy > 0.0 { (ss / sy).clamp(1e-12, 1e12) } else { 1e12_f64.min(lambda * 10.0) };
            let improvement = f - nf;
            u = nu;
            ev = nev;
            g = ng;
            f = nf;
            history.push(f);
            if history.len() > MEMORY {
                history.remove(0);
            }
            if improvement.abs() <= 1e-16 * (1.0 + f.abs()) && ss.sqrt() <= 1e-12 * (1.0 + norm(&u)) {
                break;
            }
        }
    }

    let gap = norm(&ev.gap);
    if gap > s.gap_tolerance {
        return Err(CostError::TerminalGap {
            gap,
            tolerance: s.gap_tolerance,
        });
    }
    let trajectory = ev
        .states
        .into_iter()
        .enumerate()
        .map(|(k, x)| (q.t0 + k as f64 * tr.ds, x))
        .collect();
    Ok(CostResult {
        value: Cost::Finite(ev.running),
        method: CostMethod::Transcription,
        trajectory,
        p0: None,
        terminal_gap: gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{ControlSet, StateBox};

    fn value(prob: &ControlProblem, x: Vec<f64>, y: Vec<f64>, n: usize) -> f64 {
        let s = TranscriptionSettings {
            intervals: n,
            ..TranscriptionSettings::default()
        };
        cost_transcription(prob, &CostQuery::new(x, y), &s).unwrap().value.finite().unwrap()
    }

    #[test]
    fn quadratic_unit_move() {
        let prob = ControlProblem::quadratic(1, -2.0, 2.0);
        assert!((value(&prob, vec![0.0], vec![1.0], 50) - 0.5).abs() < 1e-3);
        assert!(value(&prob, vec![0.4], vec![0.4], 50).abs() < 1e-6);
    }

    #[test]
    fn double_integrator() {
        let prob = ControlProblem::parse(
            &["x1", "u0"],
            "u0^2/2",
            ControlSet::unbounded(1),
            StateBox::new(vec![-3.0, -3.0], vec![3.0, 3.0]).unwrap(),
            1.0,
            Boundary::Clamp,
        )
        .unwrap();
        let v = value(&prob, vec![0.0, 0.0], vec![1.0, 0.0], 100);
        assert!((v - 6.0).abs() < 0.1, "{v}");
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let prob = ControlProblem::parse(
            &["u0*x0 + sin(x0)"],
            "u0^2/2 + x0*t",
            ControlSet::unbounded(1),
            StateBox::new(vec![-3.0], vec![3.0]).unwrap(),
            1.0,
            Boundary::Clamp,
        )
        .unwrap();
        let q = CostQuery::new(vec![0.2], vec![0.9]);
        let tr = Transcription {
            prob: &prob,
            q: &q,
            n: 1,
            m: 1,
            steps: 12,
            ds: 1.0 / 12.0,
        };
        let u: Vec<f64> = (0..12).map(|k| (k as f64 * 0.7).cos()).collect();
        let ev = tr.forward(&u).unwrap();
        let g = tr.gradient(&u, &ev, 10.0).unwrap();
        for k in [0, 5, 11] {
            let h = 1e-6;
            let mut up = u.clone();
            up[k] += h;
            let mut um = u.clone();
            um[k] -= h;
            let fd = (tr.objective(&tr.forward(&up).unwrap(), 10.0) - tr.objective(&tr.forward(&um).unwrap(), 10.0))
                / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-6, "{k}: {fd} vs {}", g[k]);
        }
    }

    #[test]
    fn too_few_intervals() {
        let prob = ControlProblem::quadratic(1, -2.0, 2.0);
        let s = TranscriptionSettings {
            intervals: 5,
            ..TranscriptionSettings::default()
        };
        assert!(cost_transcription(&prob, &CostQuery::new(vec![0.0], vec![1.0]), &s).is_err());
    }
}
