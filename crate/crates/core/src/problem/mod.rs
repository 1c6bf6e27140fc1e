//! Control system `x' = f(x, u)`, running cost `L(x, u, t)` and the box of
//! admissible controls, plus the Hamiltonian built from them.

mod assumptions;
mod hamiltonian;

pub use assumptions::{check_assumptions, AssumptionReport};
pub use hamiltonian::HamiltonianEval;

use thiserror::Error;

use crate::expr::{Dims, EvalEnv, Expr, ExprError, Var};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("invalid control set: {0}")]
    ControlSet(String),
    #[error("invalid state domain: {0}")]
    Domain(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("dynamics must not depend on t (component {0})")]
    TimeDependentDynamics(usize),
    #[error("superlinearity violated: sup over controls of <p,f> - L is unbounded ({0})")]
    Superlinearity(String),
    #[error("horizon must be positive, got {0}")]
    Horizon(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    Clamp,
    Periodic,
}

/// Per-component interval bounds; a side may be infinite.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSet {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl ControlSet {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self, ProblemError> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(ProblemError::ControlSet(format!(
                "need matching non-empty bounds, got {} and {}",
                lo.len(),
                hi.len()
            )));
        }
        for (j, (a, b)) in lo.iter().zip(&hi).enumerate() {
            if a.is_nan() || b.is_nan() || a > b || *a == f64::INFINITY || *b == f64::NEG_INFINITY {
                return Err(ProblemError::ControlSet(format!(
                    "component {j}: [{a}, {b}] is empty"
                )));
            }
        }
        Ok(ControlSet { lo, hi })
    }

    pub fn unbounded(m: usize) -> Self {
        ControlSet {
            lo: vec![f64::NEG_INFINITY; m],
            hi: vec![f64::INFINITY; m],
        }
    }

    pub fn symmetric(m: usize, radius: f64) -> Self {
        ControlSet {
            lo: vec![-radius; m],
            hi: vec![radius; m],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn is_bounded(&self) -> bool {
        self.lo.iter().chain(&self.hi).all(|v| v.is_finite())
    }

    pub fn contains(&self, u: &[f64]) -> bool {
        u.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (a, b))| *a <= *v && *v <= *b)
    }

    pub fn project(&self, u: &mut [f64]) {
        for (v, (a, b)) in u.iter_mut().zip(self.lo.iter().zip(&self.hi)) {
            *v = v.clamp(*a, *b);
        }
    }
}

/// Axis-aligned state box.
#[derive(Debug, Clone, PartialEq)]
pub struct StateBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl StateBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self, ProblemError> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(ProblemError::Domain("bounds must be non-empty and of equal length".into()));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a.is_finite() && b.is_finite() && a < b)) {
            return Err(ProblemError::Domain(format!("{lo:?} .. {hi:?} is not a proper box")));
        }
        Ok(StateBox { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn width(&self, k: usize) -> f64 {
        self.hi[k] - self.lo[k]
    }

    pub fn max_width(&self) -> f64 {
        (0..self.dim()).map(|k| self.width(k)).fold(0.0, f64::max)
    }

    pub fn contains(&self, x: &[f64], slack: f64) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (a, b))| *v >= *a - slack && *v <= *b + slack)
    }

    /// Reduces each coordinate into `[lo, hi)` modulo the box width.
    pub fn wrap(&self, x: &mut [f64]) {
        for (k, v) in x.iter_mut().enumerate() {
            let w = self.width(k);
            *v = self.lo[k] + (*v - self.lo[k]).rem_euclid(w);
        }
    }

    /// Componentwise displacement `b - a`, using the minimum image when periodic.
    pub fn displacement(&self, a: &[f64], b: &[f64], boundary: Boundary) -> Vec<f64> {
        a.iter()
            .zip(b)
            .enumerate()
            .map(|(k, (a, b))| {
                let d = b - a;
                match boundary {
                    Boundary::Clamp => d,
                    Boundary::Periodic => {
                        let w = self.width(k);
                        d - w * (d / w).round()
                    }
                }
            })
            .collect()
    }
}

/// Coefficients of `f = a(x) + B(x) u` and `L = c + r.u + q.u^2/2` when the
/// problem has that shape, so the inner maximization has a closed form.
#[derive(Debug, Clone)]
struct SeparableQuadratic {
    /// `B[i][j] = df_i/du_j`, free of `u`.
    b: Vec<Vec<Expr>>,
    /// `d^2 L / du_j^2`, free of `u`.
    q: Vec<Expr>,
}

#[derive(Debug, Clone)]
pub struct ControlProblem {
    dims: Dims,
    dynamics: Vec<Expr>,
    lagrangian: Expr,
    controls: ControlSet,
    domain: StateBox,
    horizon: f64,
    boundary: Boundary,
    df_dx: Vec<Vec<Expr>>,
    df_du: Vec<Vec<Expr>>,
    dl_dx: Vec<Expr>,
    dl_du: Vec<Expr>,
    separable: Option<SeparableQuadratic>,
}

impl ControlProblem {
    pub fn new(
        dynamics: Vec<Expr>,
        lagrangian: Expr,
        controls: ControlSet,
        domain: StateBox,
        horizon: f64,
        boundary: Boundary,
    ) -> Result<Self, ProblemError> {
        let n = dynamics.len();
        let m = controls.dim();
        let dims = Dims::new(n, m);
        if domain.dim() != n {
            return Err(ProblemError::Dimension(format!(
                "{n} dynamics components but a {}-dimensional domain",
                domain.dim()
            )));
        }
        for (i, e) in dynamics.iter().chain(std::iter::once(&lagrangian)).enumerate() {
            let need = e.required_dims();
            if need.n > n || need.m > m {
                return Err(ProblemError::Dimension(format!(
                    "expression {i} (`{e}`) needs n={}, m={} but n={n}, m={m}",
                    need.n, need.m
                )));
            }
        }
        if let Some(i) = dynamics.iter().position(|e| e.depends_on(Var::T)) {
            return Err(ProblemError::TimeDependentDynamics(i));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(ProblemError::Horizon(horizon));
        }

        let df_dx = dynamics
            .iter()
            .map(|f| (0..n).map(|k| f.diff(Var::X(k))).collect())
            .collect();
        let df_du: Vec<Vec<Expr>> = dynamics
            .iter()
            .map(|f| (0..m).map(|j| f.diff(Var::U(j))).collect())
            .collect();
        let dl_dx = (0..n).map(|k| lagrangian.diff(Var::X(k))).collect();
        let dl_du: Vec<Expr> = (0..m).map(|j| lagrangian.diff(Var::U(j))).collect();
        let separable = detect_separable(&df_du, &dl_du);

        Ok(ControlProblem {
            dims,
            dynamics,
            lagrangian,
            controls,
            domain,
            horizon,
            boundary,
            df_dx,
            df_du,
            dl_dx,
            dl_du,
            separable,
        })
    }

    /// Parses the dynamics components and running cost from text.
    pub fn parse(
        dynamics: &[&str],
        lagrangian: &str,
        controls: ControlSet,
        domain: StateBox,
        horizon: f64,
        boundary: Boundary,
    ) -> Result<Self, ProblemError> {
        let dims = Dims::new(dynamics.len(), controls.dim());
        let f = dynamics
            .iter()
            .map(|s| Expr::parse(s, dims))
            .collect::<Result<Vec<_>, _>>()?;
        let l = Expr::parse(lagrangian, dims)?;
        ControlProblem::new(f, l, controls, domain, horizon, boundary)
    }

    /// `f = u`, `L = |u|^2/2`, unbounded controls, on `[lo, hi]^n`.
    pub fn quadratic(n: usize, lo: f64, hi: f64) -> Self {
        let f: Vec<String> = (0..n).map(|i| format!("u{i}")).collect();
        let l = (0..n)
            .map(|i| format!("u{i}^2/2"))
            .collect::<Vec<_>>()
            .join(" + ");
        let f: Vec<&str> = f.iter().map(String::as_str).collect();
        ControlProblem::parse(
            &f,
            &l,
            ControlSet::unbounded(n),
            StateBox::new(vec![lo; n], vec![hi; n]).expect("valid box"),
            1.0,
            Boundary::Clamp,
        )
        .expect("quadratic family is well formed")
    }

    pub fn with_controls(mut self, controls: ControlSet) -> Result<Self, ProblemError> {
        if controls.dim() != self.dims.m {
            return Err(ProblemError::Dimension("control set dimension changed".into()));
        }
        self.controls = controls;
        Ok(self)
    }

    pub fn with_boundary(mut self, boundary: Boundary) -> Self {
        self.boundary = boundary;
        self
    }

    pub fn with_horizon(mut self, horizon: f64) -> Result<Self, ProblemError> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(ProblemError::Horizon(horizon));
        }
        self.horizon = horizon;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.dims.n
    }

    pub fn m(&self) -> usize {
        self.dims.m
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn controls(&self) -> &ControlSet {
        &self.controls
    }

    pub fn domain(&self) -> &StateBox {
        &self.domain
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn dynamics_exprs(&self) -> &[Expr] {
        &self.dynamics
    }

    pub fn lagrangian_expr(&self) -> &Expr {
        &self.lagrangian
    }

    /// Whether the closed-form inner maximization applies.
    pub fn has_closed_form_hamiltonian(&self) -> bool {
        self.separable.is_some()
    }

    pub fn lagrangian_depends_on_time(&self) -> bool {
        self.lagrangian.depends_on(Var::T)
    }

    pub fn dynamics(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>, ProblemError> {
        let env = EvalEnv::new(x, u, 0.0);
        self.dynamics
            .iter()
            .map(|f| f.eval(&env).map_err(ProblemError::from))
            .collect()
    }

    pub fn running_cost(&self, x: &[f64], u: &[f64], t: f64) -> Result<f64, ProblemError> {
        Ok(self.lagrangian.eval(&EvalEnv::new(x, u, t))?)
    }

    /// `df/dx` at `(x, u)`, row-major `n x n`.
    pub fn dynamics_jacobian_x(&self, x: &[f64], u: &[f64]) -> Result<Vec<Vec<f64>>, ProblemError> {
        eval_matrix(&self.df_dx, &EvalEnv::new(x, u, 0.0))
    }

    /// `df/du` at `(x, u)`, row-major `n x m`.
    pub fn dynamics_jacobian_u(&self, x: &[f64], u: &[f64]) -> Result<Vec<Vec<f64>>, ProblemError> {
        eval_matrix(&self.df_du, &EvalEnv::new(x, u, 0.0))
    }

    pub fn running_cost_grad_x(&self, x: &[f64], u: &[f64], t: f64) -> Result<Vec<f64>, ProblemError> {
        eval_vec(&self.dl_dx, &EvalEnv::new(x, u, t))
    }

    pub fn running_cost_grad_u(&self, x: &[f64], u: &[f64], t: f64) -> Result<Vec<f64>, ProblemError> {
        eval_vec(&self.dl_du, &EvalEnv::new(x, u, t))
    }

    /// True for `f = u`, `L = |u|^2/2` with unbounded controls, the family
    /// for which the Hopf-Lax formula gives the exact value function.
    pub fn is_quadratic_family(&self) -> bool {
        let (n, m) = (self.n(), self.m());
        if n != m || self.controls.lo.iter().chain(&self.controls.hi).any(|v| v.is_finite()) {
            return false;
        }
        for i in 0..n {
            if self.dynamics[i] != Expr::Var(Var::U(i)) {
                return false;
            }
        }
        if (0..n).any(|k| self.lagrangian.depends_on(Var::X(k))) || self.lagrangian.depends_on(Var::T) {
            return false;
        }
        let probes: [&[f64]; 4] = [&[0.0, 0.0, 0.0], &[1.0, -2.0, 0.5], &[-0.7, 0.3, 3.0], &[2.5, 1.5, -1.0]];
        let x = vec![0.0; n];
        probes.iter().all(|u| {
            let u = &u[..m.min(u.len())];
            if u.len() < m {
                return false;
            }
            let want: f64 = u.iter().map(|v| v * v / 2.0).sum();
            matches!(self.running_cost(&x, u, 0.0), Ok(v) if (v - want).abs() <= 1e-12 * (1.0 + want))
        })
    }
}

fn eval_vec(es: &[Expr], env: &EvalEnv<'_>) -> Result<Vec<f64>, ProblemError> {
    es.iter().map(|e| e.eval(env).map_err(ProblemError::from)).collect()
}

fn eval_matrix(es: &[Vec<Expr>], env: &EvalEnv<'_>) -> Result<Vec<Vec<f64>>, ProblemError> {
    es.iter().map(|row| eval_vec(row, env)).collect()
}

fn detect_separable(df_du: &[Vec<Expr>], dl_du: &[Expr]) -> Option<SeparableQuadratic> {
    let m = dl_du.len();
    for row in df_du {
        for e in row {
            if (0..m).any(|k| e.depends_on(Var::U(k))) {
                return None;
            }
        }
    }
    let mut q = Vec::with_capacity(m);
    for (j, g) in dl_du.iter().enumerate() {
        for k in 0..m {
            let h = g.diff(Var::U(k));
            if k != j && !h.is_zero() {
                return None;
            }
            if k == j {
                if (0..m).any(|l| h.depends_on(Var::U(l))) {
                    return None;
                }
                q.push(h);
            }
        }
    }
    Some(SeparableQuadratic {
        b: df_du.to_vec(),
        q,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(f: &[&str], l: &str, controls: ControlSet) -> ControlProblem {
        let n = f.len();
        ControlProblem::parse(
            f,
            l,
            controls,
            StateBox::new(vec![-1.0; n], vec![1.0; n]).unwrap(),
            1.0,
            Boundary::Clamp,
        )
        .unwrap()
    }

    #[test]
    fn dynamics_and_cost() {
        let p = line(&["u0"], "u0^2/2", ControlSet::unbounded(1));
        assert_eq!(p.dynamics(&[0.0], &[2.0]).unwrap(), vec![2.0]);
        let di = line(&["x1", "u0"], "u0^2/2", ControlSet::unbounded(1));
        assert_eq!(di.dynamics(&[1.0, 2.0], &[3.0]).unwrap(), vec![2.0, 3.0]);
        let unit = line(&["u0"], "1", ControlSet::unbounded(1));
        assert_eq!(unit.running_cost(&[0.3], &[7.0], 2.0).unwrap(), 1.0);
    }

    #[test]
    fn structure_detection() {
        assert!(line(&["u0"], "u0^2/2", ControlSet::unbounded(1)).has_closed_form_hamiltonian());
        assert!(line(&["x1", "u0"], "u0^2/2 + x0^2", ControlSet::unbounded(1)).has_closed_form_hamiltonian());
        assert!(line(&["u0"], "1", ControlSet::symmetric(1, 1.0)).has_closed_form_hamiltonian());
        assert!(!line(&["u0"], "exp(u0)", ControlSet::unbounded(1)).has_closed_form_hamiltonian());
        assert!(!line(&["sin(u0)"], "u0^2/2", ControlSet::unbounded(1)).has_closed_form_hamiltonian());
        let cross = ControlProblem::parse(
            &["u0", "u1"],
            "u0*u1 + u0^2",
            ControlSet::unbounded(2),
            StateBox::new(vec![-1.0; 2], vec![1.0; 2]).unwrap(),
            1.0,
            Boundary::Clamp,
        )
        .unwrap();
        assert!(!cross.has_closed_form_hamiltonian());
    }

    #[test]
    fn rejects_malformed_problems() {
        let dom = || StateBox::new(vec![-1.0], vec![1.0]).unwrap();
        let err = ControlProblem::parse(&["u0*t"], "u0^2", ControlSet::unbounded(1), dom(), 1.0, Boundary::Clamp);
        assert!(matches!(err, Err(ProblemError::TimeDependentDynamics(0))));
        let err = ControlProblem::parse(&["u1"], "u0^2", ControlSet::unbounded(1), dom(), 1.0, Boundary::Clamp);
        assert!(matches!(err, Err(ProblemError::Expr(_))));
        assert!(ControlSet::new(vec![1.0], vec![0.0]).is_err());
        assert!(StateBox::new(vec![0.0], vec![0.0]).is_err());
    }

    #[test]
    fn quadratic_family_detection() {
        assert!(ControlProblem::quadratic(1, -2.0, 2.0).is_quadratic_family());
        assert!(ControlProblem::quadratic(2, -2.0, 2.0).is_quadratic_family());
        assert!(!line(&["u0"], "u0^2", ControlSet::unbounded(1)).is_quadratic_family());
        assert!(!line(&["u0"], "u0^2/2", ControlSet::symmetric(1, 1.0)).is_quadratic_family());
    }

    #[test]
    fn periodic_displacement_uses_minimum_image() {
        let b = StateBox::new(vec![0.0], vec![1.0]).unwrap();
        let d = b.displacement(&[0.05], &[0.95], Boundary::Periodic);
        assert!((d[0] + 0.1).abs() < 1e-12);
        let mut x = [2.25];
        b.wrap(&mut x);
        assert!((x[0] - 0.25).abs() < 1e-12);
    }
}
