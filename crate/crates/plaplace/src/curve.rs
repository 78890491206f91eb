//! Singularity trajectories ξ(t) and the admissibility bound
//! `|ξ′(t)| ≤ C_ξ (1+At)^{−1}`.
//!
//! Built-in families: a stationary point, logarithmic drift along a fixed
//! direction, a decaying spiral whose speed saturates the bound exactly,
//! a constant-velocity line (inadmissible on long horizons, kept as a
//! negative control) and tabulated polylines with monotone cubic slopes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sample::geometric_times;

#[derive(Debug, Error)]
pub enum CurveError {
    #[error("curve construction: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
enum CurveKind {
    Stationary,
    /// ξ(t) = ξ₀ + (c/A) ln(1+At) e, |e| = 1; speed c(1+At)^{−1}.
    LogDrift { speed: f64, a_time: f64, direction: Vec<f64> },
    /// ξ(t) = ξ₀ + (c/(Aω)) (sin ωL, 1−cos ωL), L = ln(1+At);
    /// speed exactly c(1+At)^{−1} with turning phase ωL.
    Spiral { speed: f64, a_time: f64, omega: f64 },
    Linear { velocity: Vec<f64> },
    /// Tabulated positions with monotone cubic (Fritsch–Carlson) slopes;
    /// C¹ by construction of the interpolant.
    Polyline {
        times: Vec<f64>,
        points: Vec<Vec<f64>>,
        slopes: Vec<Vec<f64>>,
    },
}

/// A C¹ curve `[0, ∞) → Rⁿ` with its exact derivative.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    origin: Vec<f64>,
    kind: CurveKind,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl Trajectory {
    pub fn stationary(origin: Vec<f64>) -> Self {
        Self {
            origin,
            kind: CurveKind::Stationary,
        }
    }

    pub fn log_drift(
        origin: Vec<f64>,
        speed: f64,
        a_time: f64,
        direction: Vec<f64>,
    ) -> Result<Self, CurveError> {
        if direction.len() != origin.len() {
            return Err(CurveError::Invalid(
                "direction and origin dimensions differ".into(),
            ));
        }
        let len = norm(&direction);
        if !(len > 0.0) || !speed.is_finite() || speed < 0.0 || !(a_time > 0.0) {
            return Err(CurveError::Invalid(
                "log drift needs speed >= 0, A > 0 and a nonzero direction".into(),
            ));
        }
        let direction = direction.iter().map(|x| x / len).collect();
        Ok(Self {
            origin,
            kind: CurveKind::LogDrift {
                speed,
                a_time,
                direction,
            },
        })
    }

    pub fn spiral(origin: Vec<f64>, speed: f64, a_time: f64, omega: f64) -> Result<Self, CurveError> {
        if origin.len() < 2 {
            return Err(CurveError::Invalid("spiral needs dimension >= 2".into()));
        }
        if !(speed >= 0.0) || !(a_time > 0.0) || omega == 0.0 {
            return Err(CurveError::Invalid(
                "spiral needs speed >= 0, A > 0, omega != 0".into(),
            ));
        }
        Ok(Self {
            origin,
            kind: CurveKind::Spiral {
                speed,
                a_time,
                omega,
            },
        })
    }

    pub fn linear(origin: Vec<f64>, velocity: Vec<f64>) -> Result<Self, CurveError> {
        if velocity.len() != origin.len() {
            return Err(CurveError::Invalid(
                "velocity and origin dimensions differ".into(),
            ));
        }
        Ok(Self {
            origin,
            kind: CurveKind::Linear { velocity },
        })
    }

    /// Tabulated curve through `(times[i], points[i])` with monotone cubic
    /// slopes per component. `times` must be strictly increasing from 0.
    pub fn polyline(times: Vec<f64>, points: Vec<Vec<f64>>) -> Result<Self, CurveError> {
        if times.len() < 2 || points.len() != times.len() {
            return Err(CurveError::Invalid(
                "polyline needs >= 2 samples with matching times".into(),
            ));
        }
        if times[0] != 0.0 || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CurveError::Invalid(
                "polyline times must increase strictly from 0".into(),
            ));
        }
        let dim = points[0].len();
        if dim == 0 || points.iter().any(|p| p.len() != dim) {
            return Err(CurveError::Invalid(
                "polyline points must share a nonzero dimension".into(),
            ));
        }
        let slopes = monotone_cubic_slopes(&times, &points, dim);
        Ok(Self {
            origin: points[0].clone(),
            kind: CurveKind::Polyline {
                times,
                points,
                slopes,
            },
        })
    }

    pub fn dim(&self) -> usize {
        self.origin.len()
    }

    pub fn descriptor(&self) -> String {
        match &self.kind {
            CurveKind::Stationary => "stationary".to_string(),
            CurveKind::LogDrift { speed, a_time, .. } => {
                format!("log_drift(c={speed}, A={a_time})")
            }
            CurveKind::Spiral { speed, a_time, omega } => {
                format!("spiral(c={speed}, A={a_time}, omega={omega})")
            }
            CurveKind::Linear { velocity } => format!("linear(|w|={})", norm(velocity)),
            CurveKind::Polyline { times, .. } => format!("polyline({} samples)", times.len()),
        }
    }

    pub fn is_stationary(&self) -> bool {
        match &self.kind {
            CurveKind::Stationary => true,
            CurveKind::Linear { velocity } => norm(velocity) == 0.0,
            CurveKind::LogDrift { speed, .. } | CurveKind::Spiral { speed, .. } => *speed == 0.0,
            CurveKind::Polyline { .. } => false,
        }
    }

    pub fn position(&self, t: f64) -> Vec<f64> {
        let mut x = self.origin.clone();
        match &self.kind {
            CurveKind::Stationary => {}
            CurveKind::LogDrift {
                speed,
                a_time,
                direction,
            } => {
                let s = speed / a_time * (1.0 + a_time * t).ln();
                for (xi, di) in x.iter_mut().zip(direction) {
                    *xi += s * di;
                }
            }
            CurveKind::Spiral {
                speed,
                a_time,
                omega,
            } => {
                let l = (1.0 + a_time * t).ln();
                let s = speed / (a_time * omega);
                x[0] += s * (omega * l).sin();
                x[1] += s * (1.0 - (omega * l).cos());
            }
            CurveKind::Linear { velocity } => {
                for (xi, wi) in x.iter_mut().zip(velocity) {
                    *xi += wi * t;
                }
            }
            CurveKind::Polyline {
                times,
                points,
                slopes,
            } => {
                hermite_eval(times, points, slopes, t, &mut x, false);
            }
        }
        x
    }

    pub fn velocity(&self, t: f64) -> Vec<f64> {
        let dim = self.dim();
        match &self.kind {
            CurveKind::Stationary => vec![0.0; dim],
            CurveKind::LogDrift {
                speed,
                a_time,
                direction,
            } => {
                let s = speed / (1.0 + a_time * t);
                direction.iter().map(|d| s * d).collect()
            }
            CurveKind::Spiral {
                speed,
                a_time,
                omega,
            } => {
                let l = (1.0 + a_time * t).ln();
                let s = speed / (1.0 + a_time * t);
                let mut v = vec![0.0; dim];
                v[0] = s * (omega * l).cos();
                v[1] = s * (omega * l).sin();
                v
            }
            CurveKind::Linear { velocity } => velocity.clone(),
            CurveKind::Polyline {
                times,
                points,
                slopes,
            } => {
                let mut v = vec![0.0; dim];
                hermite_eval(times, points, slopes, t, &mut v, true);
                v
            }
        }
    }

    pub fn speed(&self, t: f64) -> f64 {
        norm(&self.velocity(t))
    }
}

/// Fritsch–Carlson slopes: zero at local extrema of the data, a weighted
/// harmonic mean of adjacent secants otherwise. The resulting Hermite
/// interpolant is C¹ and preserves data monotonicity per component.
fn monotone_cubic_slopes(times: &[f64], points: &[Vec<f64>], dim: usize) -> Vec<Vec<f64>> {
    let n = times.len();
    let mut slopes = vec![vec![0.0; dim]; n];
    for d in 0..dim {
        let h: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
        let sec: Vec<f64> = (0..n - 1)
            .map(|i| (points[i + 1][d] - points[i][d]) / h[i])
            .collect();
        slopes[0][d] = sec[0];
        slopes[n - 1][d] = sec[n - 2];
        for i in 1..n - 1 {
            if sec[i - 1] * sec[i] <= 0.0 {
                slopes[i][d] = 0.0;
            } else {
                let w1 = 2.0 * h[i] + h[i - 1];
                let w2 = h[i] + 2.0 * h[i - 1];
                slopes[i][d] = (w1 + w2) / (w1 / sec[i - 1] + w2 / sec[i]);
            }
        }
    }
    slopes
}

/// Evaluate the cubic Hermite interpolant (or its derivative) at `t`,
/// clamped to the table range.
fn hermite_eval(
    times: &[f64],
    points: &[Vec<f64>],
    slopes: &[Vec<f64>],
    t: f64,
    out: &mut [f64],
    derivative: bool,
) {
    let n = times.len();
    let t = t.clamp(times[0], times[n - 1]);
    let seg = match times.binary_search_by(|x| x.partial_cmp(&t).unwrap()) {
        Ok(i) => i.min(n - 2),
        Err(i) => i.saturating_sub(1).min(n - 2),
    };
    let h = times[seg + 1] - times[seg];
    let s = (t - times[seg]) / h;
    let (h00, h10, h01, h11);
    if derivative {
        // d/dt of the Hermite basis, chain rule through s = (t−t₀)/h.
        h00 = (6.0 * s * s - 6.0 * s) / h;
        h10 = 3.0 * s * s - 4.0 * s + 1.0;
        h01 = (-6.0 * s * s + 6.0 * s) / h;
        h11 = 3.0 * s * s - 2.0 * s;
    } else {
        h00 = 2.0 * s * s * s - 3.0 * s * s + 1.0;
        h10 = (s * s * s - 2.0 * s * s + s) * h;
        h01 = -2.0 * s * s * s + 3.0 * s * s;
        h11 = (s * s * s - s * s) * h;
    }
    for d in 0..out.len() {
        out[d] = h00 * points[seg][d]
            + h10 * slopes[seg][d]
            + h01 * points[seg + 1][d]
            + h11 * slopes[seg + 1][d];
    }
}

/// Outcome of an admissibility sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Admissibility {
    pub admissible: bool,
    /// max over samples of `|ξ′(t)| (1+At) / C_ξ`; at most 1 when admissible.
    pub worst_ratio: f64,
    pub worst_t: f64,
}

/// Samples `|ξ′(t)|(1+At)/C_ξ` at `samples` geometric times on
/// `[0, horizon]` and reports the worst ratio. Sampled, not proven.
pub fn admissible(
    traj: &Trajectory,
    c_xi: f64,
    a_time: f64,
    horizon: f64,
    samples: usize,
) -> Admissibility {
    assert!(horizon > 0.0 && samples >= 2);
    let times = geometric_times(horizon * 1e-8, horizon, samples);
    let mut worst_ratio = 0.0;
    let mut worst_t = 0.0;
    for t in times {
        let ratio = traj.speed(t) * (1.0 + a_time * t) / c_xi;
        if ratio > worst_ratio {
            worst_ratio = ratio;
            worst_t = t;
        }
    }
    Admissibility {
        admissible: worst_ratio <= 1.0,
        worst_ratio,
        worst_t,
    }
}

/// Worst relative mismatch between the analytic velocity and a centered
/// finite difference of the position over the given times.
pub fn velocity_consistency(traj: &Trajectory, times: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for &t in times {
        let h = 1e-6 * (1.0 + t);
        let v = traj.velocity(t);
        // Position-based differences carry ~ε·|x|/h of noise; keep the
        // normalization above that even for (near-)stationary curves.
        let scale = norm(&v).max(1e-3 * (1.0 + norm(&traj.position(t))));
        let mut err: f64 = 0.0;
        if t >= h {
            let (xp, xm) = (traj.position(t + h), traj.position(t - h));
            for d in 0..traj.dim() {
                let fd = (xp[d] - xm[d]) / (2.0 * h);
                err = err.max((fd - v[d]).abs());
            }
        } else {
            // Second-order one-sided stencil at the t = 0 boundary.
            let (x0, x1, x2) = (
                traj.position(t),
                traj.position(t + h),
                traj.position(t + 2.0 * h),
            );
            for d in 0..traj.dim() {
                let fd = (-3.0 * x0[d] + 4.0 * x1[d] - x2[d]) / (2.0 * h);
                err = err.max((fd - v[d]).abs());
            }
        }
        worst = worst.max(err / scale);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stationary_is_admissible_with_zero_ratio() {
        let traj = Trajectory::stationary(vec![0.0, 0.0]);
        let adm = admissible(&traj, 0.5, 2.0, 100.0, 1000);
        assert!(adm.admissible);
        assert_eq!(adm.worst_ratio, 0.0);
    }

    #[test]
    fn log_drift_ratio_is_exactly_c_over_cxi() {
        let traj = Trajectory::log_drift(vec![0.0, 0.0], 0.25, 8.0, vec![1.0, 0.0]).unwrap();
        let adm = admissible(&traj, 0.5, 8.0, 50.0, 2000);
        assert!(adm.admissible);
        assert!((adm.worst_ratio - 0.5).abs() < 1e-12);
        // Saturation at c = C_ξ: every sample sits on the bound.
        let sat = Trajectory::log_drift(vec![0.0, 0.0], 0.5, 8.0, vec![0.6, 0.8]).unwrap();
        for &t in &[0.0, 0.3, 7.0, 49.0] {
            let ratio = sat.speed(t) * (1.0 + 8.0 * t) / 0.5;
            assert!((ratio - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn linear_curve_is_rejected_on_long_horizons() {
        let traj = Trajectory::linear(vec![0.0, 0.0], vec![0.1, 0.0]).unwrap();
        let adm = admissible(&traj, 0.5, 2.0, 100.0, 1000);
        assert!(!adm.admissible);
        // ratio grows like |w|(1+At)/C_ξ
        assert!(adm.worst_ratio > 0.1 * (1.0 + 2.0 * 100.0) / 0.5 * 0.99);
    }

    #[test]
    fn spiral_saturates_the_speed_bound_exactly() {
        let traj = Trajectory::spiral(vec![0.0, 0.0], 0.5, 4.0, 3.0).unwrap();
        for &t in &[0.0, 0.1, 1.0, 10.0] {
            let ratio = traj.speed(t) * (1.0 + 4.0 * t) / 0.5;
            assert!((ratio - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn log_drift_displacement_obeys_log_bound() {
        let (c, a) = (0.4, 8.0);
        let traj = Trajectory::log_drift(vec![1.0, -2.0], c, a, vec![0.0, 1.0]).unwrap();
        for &t in &[0.5, 5.0, 50.0] {
            let x = traj.position(t);
            let disp = ((x[0] - 1.0).powi(2) + (x[1] + 2.0).powi(2)).sqrt();
            let bound = c / a * (1.0 + a * t).ln();
            assert!(disp <= bound * (1.0 + 1e-12));
            assert!((disp - bound).abs() < 1e-12); // fixed direction: equality
        }
        let spiral = Trajectory::spiral(vec![0.0, 0.0], c, a, 2.0).unwrap();
        for &t in &[0.5, 5.0, 50.0] {
            let x = spiral.position(t);
            let disp = (x[0] * x[0] + x[1] * x[1]).sqrt();
            assert!(disp <= c / a * (1.0 + a * t).ln() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn analytic_velocities_match_finite_differences() {
        let times: Vec<f64> = (0..40).map(|i| 0.25 * i as f64).collect();
        let curves = [
            Trajectory::stationary(vec![0.3, 0.4]),
            Trajectory::log_drift(vec![0.0, 0.0], 0.3, 2.0, vec![1.0, 1.0]).unwrap(),
            Trajectory::spiral(vec![0.0, 0.0], 0.3, 2.0, 1.5).unwrap(),
            Trajectory::linear(vec![0.0, 0.0], vec![0.02, -0.01]).unwrap(),
        ];
        for traj in curves {
            assert!(velocity_consistency(&traj, &times) <= 1e-6);
        }
    }

    #[test]
    fn polyline_is_c1_and_matches_finite_differences() {
        let times: Vec<f64> = (0..=20).map(|i| i as f64 * 0.5).collect();
        let points: Vec<Vec<f64>> = times
            .iter()
            .map(|&t| vec![(0.1 * t).sin() * 0.2, 0.05 * (1.0 + t).ln()])
            .collect();
        let traj = Trajectory::polyline(times.clone(), points.clone()).unwrap();
        for (i, &t) in times.iter().enumerate() {
            let x = traj.position(t);
            assert!((x[0] - points[i][0]).abs() < 1e-14);
            assert!((x[1] - points[i][1]).abs() < 1e-14);
        }
        let probe: Vec<f64> = (1..40).map(|i| 0.24 * i as f64).collect();
        assert!(velocity_consistency(&traj, &probe) <= 1e-6);
    }

    #[test]
    fn polyline_rejects_bad_tables() {
        assert!(Trajectory::polyline(vec![0.0], vec![vec![0.0]]).is_err());
        assert!(Trajectory::polyline(vec![0.5, 1.0], vec![vec![0.0], vec![1.0]]).is_err());
        assert!(Trajectory::polyline(vec![0.0, 0.0], vec![vec![0.0], vec![1.0]]).is_err());
    }
}
