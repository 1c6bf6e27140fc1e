//! Classical fixed-step fourth-order Runge-Kutta.

/// Reusable RK4 stage buffers for a system of fixed dimension.
#[derive(Debug, Clone)]
pub struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    pub fn new(dim: usize) -> Self {
        Rk4 {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            tmp: vec![0.0; dim],
        }
    }

    /// One step of `y' = rhs(t, y)` written into `out`; `rhs(t, y, dy)`
    /// fills `dy` and any error aborts the step.
    pub fn step<E>(
        &mut self,
        rhs: &mut impl FnMut(f64, &[f64], &mut [f64]) -> Result<(), E>,
        t: f64,
        y: &[f64],
        dt: f64,
        out: &mut [f64],
    ) -> Result<(), E> {
        let d = y.len();
        let Rk4 { k1, k2, k3, k4, tmp } = self;
        rhs(t, y, k1)?;
        for i in 0..d {
            tmp[i] = y[i] + 0.5 * dt * k1[i];
        }
        rhs(t + 0.5 * dt, tmp, k2)?;
        for i in 0..d {
            tmp[i] = y[i] + 0.5 * dt * k2[i];
        }
        rhs(t + 0.5 * dt, tmp, k3)?;
        for i in 0..d {
            tmp[i] = y[i] + dt * k3[i];
        }
        rhs(t + dt, tmp, k4)?;
        for i in 0..d {
            out[i] = y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        Ok(())
    }
}

/// Number of uniform steps covering `span` with step at most `dt`.
pub fn step_count(span: f64, dt: f64) -> usize {
    if span <= 0.0 {
        return 0;
    }
    ((span / dt) - 1e-9).ceil().max(1.0) as usize
}
