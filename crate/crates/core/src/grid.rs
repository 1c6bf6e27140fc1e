//! Uniform tensor grids over the state box with multilinear interpolation.

use crate::problem::{Boundary, ProblemError, StateBox};

/// Nodes `lo + i h` per axis, first axis fastest. Under a periodic boundary
/// the upper face is identified with the lower one and carries no nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    lo: Vec<f64>,
    hi: Vec<f64>,
    counts: Vec<usize>,
    spacing: Vec<f64>,
    boundary: Boundary,
}

impl Grid {
    pub fn new(domain: &StateBox, counts: Vec<usize>, boundary: Boundary) -> Result<Self, ProblemError> {
        if counts.len() != domain.dim() {
            return Err(ProblemError::Dimension(format!(
                "grid has {} axes, domain has {}",
                counts.len(),
                domain.dim()
            )));
        }
        if counts.iter().any(|&c| c < 3) {
            return Err(ProblemError::Domain(format!("grid resolution must be >= 3 per axis, got {counts:?}")));
        }
        let spacing = (0..counts.len())
            .map(|k| match boundary {
                Boundary::Clamp => domain.width(k) / (counts[k] - 1) as f64,
                Boundary::Periodic => domain.width(k) / counts[k] as f64,
            })
            .collect();
        Ok(Grid {
            lo: domain.lo.clone(),
            hi: domain.hi.clone(),
            counts,
            spacing,
            boundary,
        })
    }

    /// Grid whose spacing is `h` (rounded so the axis is covered exactly).
    pub fn with_spacing(domain: &StateBox, h: f64, boundary: Boundary) -> Result<Self, ProblemError> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(ProblemError::Domain(format!("grid spacing must be positive, got {h}")));
        }
        let counts = (0..domain.dim())
            .map(|k| {
                let cells = (domain.width(k) / h).round().max(1.0) as usize;
                match boundary {
                    Boundary::Clamp => cells + 1,
                    Boundary::Periodic => cells,
                }
            })
            .collect();
        Grid::new(domain, counts, boundary)
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn multi_index(&self, mut idx: usize) -> Vec<usize> {
        self.counts
            .iter()
            .map(|&c| {
                let i = idx % c;
                idx /= c;
                i
            })
            .collect()
    }

    pub fn linear_index(&self, mi: &[usize]) -> usize {
        let mut idx = 0;
        let mut stride = 1;
        for (i, c) in mi.iter().zip(&self.counts) {
            idx += i * stride;
            stride *= c;
        }
        idx
    }

    pub fn node(&self, idx: usize) -> Vec<f64> {
        self.multi_index(idx)
            .iter()
            .enumerate()
            .map(|(k, &i)| self.lo[k] + i as f64 * self.spacing[k])
            .collect()
    }

    pub fn nodes(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.node(i)).collect()
    }

    /// Neighbor of `mi` along `axis` shifted by `delta`, or `None` past a
    /// clamped edge.
    pub fn neighbor(&self, mi: &[usize], axis: usize, delta: isize) -> Option<usize> {
        let c = self.counts[axis] as isize;
        let j = mi[axis] as isize + delta;
        let j = match self.boundary {
            Boundary::Periodic => j.rem_euclid(c),
            Boundary::Clamp if (0..c).contains(&j) => j,
            Boundary::Clamp => return None,
        };
        let mut nb = mi.to_vec();
        nb[axis] = j as usize;
        Some(self.linear_index(&nb))
    }

    /// Multilinear interpolation of nodal `values` at `x`. Points outside
    /// the box are projected onto it (clamp) or wrapped (periodic).
    pub fn interpolate(&self, values: &[f64], x: &[f64]) -> f64 {
        let d = self.dim();
        let mut base = [0usize; 2];
        let mut next = [0usize; 2];
        let mut frac = [0.0f64; 2];
        debug_assert!(d <= 2 || d == x.len());
        if d > 2 {
            return self.interpolate_general(values, x);
        }
        for k in 0..d {
            let c = self.counts[k];
            let s = (x[k] - self.lo[k]) / self.spacing[k];
            match self.boundary {
                Boundary::Clamp => {
                    let s = s.clamp(0.0, (c - 1) as f64);
                    let i = (s.floor() as usize).min(c - 2);
                    base[k] = i;
                    next[k] = i + 1;
                    frac[k] = s - i as f64;
                }
                Boundary::Periodic => {
                    let s = s.rem_euclid(c as f64);
                    let i = (s.floor() as usize).min(c - 1);
                    base[k] = i;
                    next[k] = (i + 1) % c;
                    frac[k] = s - i as f64;
                }
            }
        }
        if d == 1 {
            return (1.0 - frac[0]) * values[base[0]] + frac[0] * values[next[0]];
        }
        let c0 = self.counts[0];
        let at = |i: usize, j: usize| values[i + c0 * j];
        let (a, b) = (frac[0], frac[1]);
        (1.0 - b) * ((1.0 - a) * at(base[0], base[1]) + a * at(next[0], base[1]))
            + b * ((1.0 - a) * at(base[0], next[1]) + a * at(next[0], next[1]))
    }

    fn interpolate_general(&self, values: &[f64], x: &[f64]) -> f64 {
        let d = self.dim();
        let mut lo_idx = vec![0usize; d];
        let mut hi_idx = vec![0usize; d];
        let mut frac = vec![0.0; d];
        for k in 0..d {
            let c = self.counts[k];
            let s = (x[k] - self.lo[k]) / self.spacing[k];
            let (i, j, f) = match self.boundary {
                Boundary::Clamp => {
                    let s = s.clamp(0.0, (c - 1) as f64);
                    let i = (s.floor() as usize).min(c - 2);
                    (i, i + 1, s - i as f64)
                }
                Boundary::Periodic => {
                    let s = s.rem_euclid(c as f64);
                    let i = (s.floor() as usize).min(c - 1);
                    (i, (i + 1) % c, s - i as f64)
                }
            };
            lo_idx[k] = i;
            hi_idx[k] = j;
            frac[k] = f;
        }
        let mut total = 0.0;
        let mut mi = vec![0usize; d];
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            for k in 0..d {
                if corner >> k & 1 == 1 {
                    mi[k] = hi_idx[k];
                    w *= frac[k];
                } else {
                    mi[k] = lo_idx[k];
                    w *= 1.0 - frac[k];
                }
            }
            if w != 0.0 {
                total += w * values[self.linear_index(&mi)];
            }
        }
        total
    }

    /// Central-difference gradient of nodal values at node `idx`, one-sided
    /// on clamped edges.
    pub fn gradient(&self, values: &[f64], idx: usize) -> Vec<f64> {
        let mi = self.multi_index(idx);
        (0..self.dim())
            .map(|k| {
                let h = self.spacing[k];
                match (self.neighbor(&mi, k, -1), self.neighbor(&mi, k, 1)) {
                    (Some(a), Some(b)) => (values[b] - values[a]) / (2.0 * h),
                    (None, Some(b)) => (values[b] - values[idx]) / h,
                    (Some(a), None) => (values[idx] - values[a]) / h,
                    (None, None) => 0.0,
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(n: usize) -> StateBox {
        StateBox::new(vec![0.0; n], vec![1.0; n]).unwrap()
    }

    #[test]
    fn spacing_and_counts() {
        let g = Grid::with_spacing(&StateBox::new(vec![-2.0], vec![2.0]).unwrap(), 0.02, Boundary::Clamp).unwrap();
        assert_eq!(g.counts(), &[201]);
        assert!((g.spacing()[0] - 0.02).abs() < 1e-15);
        let p = Grid::with_spacing(&unit(1), 0.1, Boundary::Periodic).unwrap();
        assert_eq!(p.counts(), &[10]);
    }

    #[test]
    fn interpolation_reproduces_bilinear_functions() {
        let g = Grid::new(&unit(2), vec![5, 4], Boundary::Clamp).unwrap();
        let f = |x: &[f64]| 1.0 + 2.0 * x[0] - x[1] + 3.0 * x[0] * x[1];
        let vals: Vec<f64> = g.nodes().iter().map(|x| f(x)).collect();
        for x in [[0.1, 0.2], [0.77, 0.01], [1.0, 1.0], [0.0, 0.5]] {
            assert!((g.interpolate(&vals, &x) - f(&x)).abs() < 1e-12);
        }
        // outside points are projected onto the box
        assert!((g.interpolate(&vals, &[1.5, -0.5]) - f(&[1.0, 0.0])).abs() < 1e-12);
    }

    #[test]
    fn periodic_interpolation_wraps() {
        let g = Grid::new(&unit(1), vec![4], Boundary::Periodic).unwrap();
        let vals = [0.0, 1.0, 2.0, 3.0];
        assert!((g.interpolate(&vals, &[0.875]) - 1.5).abs() < 1e-12);
        assert!((g.interpolate(&vals, &[1.25]) - 1.0).abs() < 1e-12);
        assert!((g.interpolate(&vals, &[-0.125]) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn general_path_matches_low_dimensional_path() {
        let g = Grid::new(&unit(2), vec![3, 3], Boundary::Clamp).unwrap();
        let vals: Vec<f64> = (0..9).map(|i| (i * i) as f64).collect();
        let x = [0.3, 0.8];
        assert!((g.interpolate(&vals, &x) - g.interpolate_general(&vals, &x)).abs() < 1e-12);
    }

    #[test]
    fn gradient_of_linear_data() {
        let g = Grid::new(&unit(2), vec![4, 5], Boundary::Clamp).unwrap();
        let vals: Vec<f64> = g.nodes().iter().map(|x| 2.0 * x[0] - 3.0 * x[1]).collect();
        for idx in 0..g.len() {
            let d = g.gradient(&vals, idx);
            assert!((d[0] - 2.0).abs() < 1e-12 && (d[1] + 3.0).abs() < 1e-12);
        }
    }
}
