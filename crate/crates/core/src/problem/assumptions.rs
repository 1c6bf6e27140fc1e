use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::ControlProblem;

/// Sampled constants behind the standing assumptions on `f` and `L`.
///
/// Everything here is a Monte-Carlo estimate; the report is advisory.
#[derive(Debug, Clone, Serialize)]
pub struct AssumptionReport {
    pub samples: usize,
    pub seed: u64,
    /// `max |f| / (1 + |x| + |u|)` over the domain.
    pub growth_k0: f64,
    /// Lipschitz constant of `f` in `x`.
    pub lipschitz_k1: f64,
    /// Lipschitz constant of `df/dx` in `x`.
    pub jacobian_lipschitz_k2: f64,
    /// Lipschitz constant of `L` in `x` over the domain.
    pub cost_lipschitz_x: f64,
    /// Lipschitz constant of `L` in `u` over the clipped control box.
    pub cost_lipschitz_u: f64,
    /// `(radius, growth ratio)` for states sampled at increasing radius.
    pub growth_by_radius: Vec<(f64, f64)>,
    pub growth_warning: bool,
    /// `(radius, K1 estimate)` for state pairs at increasing radius.
    pub lipschitz_by_radius: Vec<(f64, f64)>,
    pub lipschitz_warning: bool,
    /// `(|u|, max L / |u|)` along unbounded control axes.
    pub superlinearity_ratios: Vec<(f64, f64)>,
    pub superlinearity_flag: bool,
    pub convexity_l3: &'static str,
    pub warnings: Vec<String>,
}

impl AssumptionReport {
    pub fn passed(&self) -> bool {
        !(self.growth_warning || self.lipschitz_warning || self.superlinearity_flag)
    }
}

const CONTROL_CLIP: f64 = 10.0;
const RADII: [f64; 4] = [1.0, 10.0, 100.0, 1000.0];
const SUPER_RADII: [f64; 3] = [10.0, 100.0, 1000.0];

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

pub fn check_assumptions(prob: &ControlProblem, samples: usize, seed: u64) -> AssumptionReport {
    let samples = samples.max(100);
    let (n, m) = (prob.n(), prob.m());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dom = prob.domain();
    let ulo: Vec<f64> = prob.controls().lo().iter().map(|v| v.max(-CONTROL_CLIP)).collect();
    let uhi: Vec<f64> = prob.controls().hi().iter().map(|v| v.min(CONTROL_CLIP)).collect();

    let sample_x = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..n).map(|k| rng.gen_range(dom.lo[k]..=dom.hi[k])).collect()
    };
    let sample_u = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..m)
            .map(|j| if ulo[j] < uhi[j] { rng.gen_range(ulo[j]..=uhi[j]) } else { ulo[j] })
            .collect()
    };

    let mut k0 = 0.0_f64;
    let mut k1 = 0.0_f64;
    let mut k2 = 0.0_f64;
    let mut lx = 0.0_f64;
    let mut lu = 0.0_f64;
    let mut faults = 0usize;
    for _ in 0..samples {
        let x1 = sample_x(&mut rng);
        let x2 = sample_x(&mut rng);
        let u1 = sample_u(&mut rng);
        let u2 = sample_u(&mut rng);
        let t = rng.gen_range(0.0..=prob.horizon());
        let (Ok(f1), Ok(f2)) = (prob.dynamics(&x1, &u1), prob.dynamics(&x2, &u1)) else {
            faults += 1;
            continue;
        };
        k0 = k0.max(norm(&f1) / (1.0 + norm(&x1) + norm(&u1)));
        let dx = dist(&x1, &x2);
        if dx > 1e-12 {
            k1 = k1.max(dist(&f1, &f2) / dx);
            if let (Ok(j1), Ok(j2)) = (prob.dynamics_jacobian_x(&x1, &u1), prob.dynamics_jacobian_x(&x2, &u1)) {
                let fro: f64 = j1
                    .iter()
                    .flatten()
                    .zip(j2.iter().flatten())
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                k2 = k2.max(fro / dx);
            }
            if let (Ok(a), Ok(b)) = (prob.running_cost(&x1, &u1, t), prob.running_cost(&x2, &u1, t)) {
                lx = lx.max((a - b).abs() / dx);
            }
        }
        let du = dist(&u1, &u2);
        if du > 1e-12 {
            if let (Ok(a), Ok(b)) = (prob.running_cost(&x1, &u1, t), prob.running_cost(&x1, &u2, t)) {
                lu = lu.max((a - b).abs() / du);
            }
        }
    }

    let per_radius = samples.div_ceil(RADII.len()).max(25);
    let mut growth_by_radius = Vec::new();
    let mut lipschitz_by_radius = Vec::new();
    for &r in &RADII {
        let mut g = 0.0_f64;
        let mut l = 0.0_f64;
        for _ in 0..per_radius {
            let x = random_at_radius(&mut rng, n, r);
            let y: Vec<f64> = x.iter().map(|v| v + rng.gen_range(-0.5..=0.5) * r * 0.1).collect();
            let u = sample_u(&mut rng);
            if let Ok(f) = prob.dynamics(&x, &u) {
                g = g.max(norm(&f) / (1.0 + norm(&x) + norm(&u)));
                if let Ok(fy) = prob.dynamics(&y, &u) {
                    let d = dist(&x, &y);
                    if d > 1e-12 {
                        l = l.max(dist(&f, &fy) / d);
                    }
                }
            }
        }
        growth_by_radius.push((r, g));
        lipschitz_by_radius.push((r, l));
    }
    let diverges = |series: &[(f64, f64)]| {
        let first = series[1].1;
        let last = series[series.len() - 1].1;
        last > 4.0 * first.max(1e-12) && last > 1e-9
    };
    let growth_warning = diverges(&growth_by_radius);
    let lipschitz_warning = diverges(&lipschitz_by_radius);

    let mut superlinearity_ratios = Vec::new();
    let mut superlinearity_flag = false;
    let center: Vec<f64> = (0..n).map(|k| 0.5 * (dom.lo[k] + dom.hi[k])).collect();
    for j in 0..m {
        let (lo, hi) = (prob.controls().lo()[j], prob.controls().hi()[j]);
        if lo.is_finite() && hi.is_finite() {
            continue;
        }
        let mut series = Vec::new();
        for &r in &SUPER_RADII {
            let mut best = f64::NEG_INFINITY;
            for sign in [-1.0, 1.0] {
                let v = sign * r;
                if v < lo || v > hi {
                    continue;
                }
                let mut u: Vec<f64> = (0..m).map(|k| 0.0_f64.clamp(prob.controls().lo()[k], prob.controls().hi()[k])).collect();
                u[j] = v;
                // overflow counts as unbounded growth
                let val = prob.running_cost(&center, &u, 0.0).unwrap_or(f64::INFINITY);
                best = best.max(val / r);
            }
            series.push((r, best));
        }
        let increasing = series.windows(2).all(|w| w[1].1 > w[0].1);
        let grows = series[2].1 >= 2.0 * series[0].1.max(0.0) && series[2].1 > 0.0;
        if !(increasing && grows) {
            superlinearity_flag = true;
        }
        superlinearity_ratios.extend(series);
    }

    let mut warnings = Vec::new();
    if growth_warning {
        warnings.push(format!(
            "growth: |f|/(1+|x|+|u|) rises from {:.3e} at radius 10 to {:.3e} at radius 1000",
            growth_by_radius[1].1, growth_by_radius[3].1
        ));
    }
    if lipschitz_warning {
        warnings.push("Lipschitz estimate of f in x diverges with sample radius".into());
    }
    if superlinearity_flag {
        warnings
            .push("running cost is not superlinear along some unbounded control axis; H may be unbounded".into());
    }
    if faults > 0 {
        warnings.push(format!("{faults} samples hit domain faults and were skipped"));
    }

    AssumptionReport {
        samples,
        seed,
        growth_k0: k0,
        lipschitz_k1: k1,
        jacobian_lipschitz_k2: k2,
        cost_lipschitz_x: lx,
        cost_lipschitz_u: lu,
        growth_by_radius,
        growth_warning,
        lipschitz_by_radius,
        lipschitz_warning,
        superlinearity_ratios,
        superlinearity_flag,
        convexity_l3: "not checked",
        warnings,
    }
}

fn random_at_radius(rng: &mut ChaCha8Rng, n: usize, r: f64) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let len = norm(&v);
        if len > 1e-3 {
            return v.into_iter().map(|a| a * r / len).collect();
        }
    }
}
