//! Sampling grids for certification sweeps.

use serde::{Deserialize, Serialize};

/// Log-spaced values from `min` to `max` inclusive (`n ≥ 2`, `min > 0`).
pub fn log_spaced(min: f64, max: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2 && min > 0.0 && max > min);
    let (a, b) = (min.ln(), max.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// `n` time samples on `[0, t_max]`: zero followed by `n−1` log-spaced
/// points from `t_min_pos` to `t_max`.
pub fn geometric_times(t_min_pos: f64, t_max: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2 && t_min_pos > 0.0 && t_max > t_min_pos);
    let mut t = Vec::with_capacity(n);
    t.push(0.0);
    if n == 2 {
        t.push(t_max);
    } else {
        t.extend(log_spaced(t_min_pos, t_max, n - 1));
    }
    t
}

/// A product grid in `(r, t)` for residual and ordering sweeps.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleGrid {
    pub r: Vec<f64>,
    pub t: Vec<f64>,
}

impl SampleGrid {
    pub fn new(r_min: f64, r_max: f64, nr: usize, t_min_pos: f64, t_max: f64, nt: usize) -> Self {
        Self {
            r: log_spaced(r_min, r_max, nr),
            t: geometric_times(t_min_pos, t_max, nt),
        }
    }

    /// The default certification grid: 200 radii over `[1e−4, 1e3]`,
    /// 100 times over `[0, 100]`.
    pub fn default_certification() -> Self {
        Self::new(1e-4, 1e3, 200, 1e-3, 100.0, 100)
    }

    pub fn len(&self) -> usize {
        self.r.len() * self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty() || self.t.is_empty()
    }

    /// Sample `(r, t)` for a flattened index (time-major).
    pub fn at(&self, idx: usize) -> (f64, f64) {
        let nr = self.r.len();
        (self.r[idx % nr], self.t[idx / nr])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_spacing_hits_endpoints() {
        let v = log_spaced(1e-4, 1e3, 200);
        assert_eq!(v.len(), 200);
        assert!((v[0] - 1e-4).abs() < 1e-18);
        assert!((v[199] - 1e3).abs() < 1e-10);
        for w in v.windows(2) {
            assert!(w[1] > w[0]);
        }
    }

    #[test]
    fn times_start_at_zero() {
        let t = geometric_times(1e-3, 100.0, 100);
        assert_eq!(t.len(), 100);
        assert_eq!(t[0], 0.0);
        assert!((t[1] - 1e-3).abs() < 1e-18);
        assert!((t[99] - 100.0).abs() < 1e-12);
    }

    #[test]
    fn flattened_indexing_is_time_major() {
        let g = SampleGrid::new(1.0, 10.0, 3, 0.1, 1.0, 2);
        assert_eq!(g.len(), 6);
        assert_eq!(g.at(0), (g.r[0], 0.0));
        assert_eq!(g.at(4), (g.r[1], g.t[1]));
    }
}
