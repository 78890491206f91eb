//! Post-processing of solver output: growth-exponent fits near the
//! singularity, gradient blow-up detection, continuity at `t = 0`,
//! p-Dirichlet energies and reconstruction of the solution in the
//! original (unshifted) coordinates.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curve::Trajectory;
use crate::par;
use crate::solver::kernel::{PolarDisc, RadialDisc};
use crate::solver::{Field, GridMode};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("degenerate fit window: {nodes} usable nodes (need at least 8)")]
    DegenerateWindow { nodes: usize },
}

/// Surface area of the unit sphere in `R^n`: 2π^{n/2}/Γ(n/2), computed by
/// the half-integer recursion.
pub fn sphere_area(n: u32) -> f64 {
    let half = n as f64 / 2.0;
    // Γ(half) for integer or half-integer argument.
    let gamma = if n % 2 == 0 {
        let mut g = 1.0;
        for k in 1..(n / 2) {
            g *= k as f64;
        }
        g
    } else {
        let mut g = std::f64::consts::PI.sqrt();
        let mut x = 0.5;
        while x < half - 0.25 {
            g *= x;
            x += 1.0;
        }
        g
    };
    2.0 * std::f64::consts::PI.powf(half) / gamma
}

/// Discrete quadrature of `|∇v|^p` over the annulus, angular measure
/// included (the radial mode multiplies by the unit-sphere area).
pub fn energy(field: &Field, p: f64) -> f64 {
    match field.grid.mode {
        GridMode::Radial => {
            let disc = RadialDisc::new(&field.grid.r, field.grid.dim);
            sphere_area(field.grid.dim) * disc.dirichlet_energy(&field.values, p)
        }
        GridMode::Polar => {
            let disc = PolarDisc::new(&field.grid.r, field.grid.n_theta);
            disc.dirichlet_energy(&field.values, p)
        }
    }
}

/// Least-squares slope of `ln v` against `ln r` over the window.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    pub residual_rms: f64,
    pub nodes: usize,
}

fn ring_profile(field: &Field) -> Vec<f64> {
    (0..field.grid.r.len()).map(|j| field.ring_average(j)).collect()
}

fn least_squares_loglog(xs: &[f64], ys: &[f64]) -> ExponentFit {
    let n = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let intercept = (sy - slope * sx) / n;
    let rss: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let e = y - (slope * x + intercept);
            e * e
        })
        .sum();
    ExponentFit {
        slope,
        intercept,
        residual_rms: (rss / n as f64).sqrt(),
        nodes: xs.len(),
    }
}

/// Fits the growth exponent of the (angularly averaged) field over
/// `r ∈ window`. Nodes with nonpositive averages are discarded; fewer
/// than 8 usable nodes is an error.
pub fn fit_growth_exponent(field: &Field, window: (f64, f64)) -> Result<ExponentFit, AnalysisError> {
    let avg = ring_profile(field);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (j, &r) in field.grid.r.iter().enumerate() {
        if r >= window.0 && r <= window.1 && avg[j] > 0.0 {
            xs.push(r.ln());
            ys.push(avg[j].ln());
        }
    }
    if xs.len() < 8 {
        return Err(AnalysisError::DegenerateWindow { nodes: xs.len() });
    }
    Ok(least_squares_loglog(&xs, &ys))
}

/// The default fit window: the innermost decade of the grid.
pub fn inner_decade(field: &Field) -> (f64, f64) {
    let r0 = field.grid.r_min();
    (r0, (10.0 * r0).min(field.grid.r_max()))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GradientCheck {
    /// Fitted slope of `ln (ring-averaged |∇v|)` vs `ln r`; blow-up shows
    /// as a negative slope.
    pub slope: f64,
    /// True iff the binned ring averages increase monotonically as `r`
    /// decreases through the window.
    pub monotone_divergence: bool,
    /// `(r, ring-averaged |∇v|)` rows over the window.
    pub rings: Vec<(f64, f64)>,
}

/// Ring-averaged gradient magnitude by centered differences (log-spaced
/// radially, periodic in angle).
fn ring_gradient(field: &Field) -> Vec<f64> {
    let grid = &field.grid;
    let rs = &grid.r;
    let nr = rs.len();
    let nt = grid.n_theta;
    let dphi = std::f64::consts::TAU / nt as f64;
    let mut out = vec![0.0; nr];
    for j in 0..nr {
        let (jm, jp) = (j.saturating_sub(1), (j + 1).min(nr - 1));
        let dlnr = rs[jp].ln() - rs[jm].ln();
        let mut acc = 0.0;
        for m in 0..nt {
            let vr = (field.node_value(jp, m) - field.node_value(jm, m)) / dlnr / rs[j];
            let vp = if nt > 2 {
                (field.node_value(j, (m + 1) % nt) - field.node_value(j, (m + nt - 1) % nt))
                    / (2.0 * dphi)
                    / rs[j]
            } else {
                0.0
            };
            acc += (vr * vr + vp * vp).sqrt();
        }
        out[j] = acc / nt as f64;
    }
    out
}

/// Fits the blow-up rate of `|∇v|` and flags monotone divergence toward
/// the singularity over the window.
pub fn gradient_blowup_check(
    field: &Field,
    window: (f64, f64),
) -> Result<GradientCheck, AnalysisError> {
    let grad = ring_gradient(field);
    let mut rows = Vec::new();
    for (j, &r) in field.grid.r.iter().enumerate() {
        if r >= window.0 && r <= window.1 && grad[j] > 0.0 {
            rows.push((r, grad[j]));
        }
    }
    if rows.len() < 8 {
        return Err(AnalysisError::DegenerateWindow { nodes: rows.len() });
    }
    let xs: Vec<f64> = rows.iter().map(|(r, _)| r.ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|(_, g)| g.ln()).collect();
    let fit = least_squares_loglog(&xs, &ys);
    // Bin the window into thirds of a decade and demand the bin means
    // grow toward the singularity.
    let (lo, hi) = (xs[0], xs[xs.len() - 1]);
    let nbins = ((hi - lo) / std::f64::consts::LN_10 * 3.0).ceil().max(3.0) as usize;
    let mut sums = vec![0.0; nbins];
    let mut counts = vec![0usize; nbins];
    for (x, g) in xs.iter().zip(rows.iter().map(|(_, g)| *g)) {
        let b = (((x - lo) / (hi - lo + 1e-300)) * nbins as f64).min(nbins as f64 - 1.0) as usize;
        sums[b] += g;
        counts[b] += 1;
    }
    let means: Vec<f64> = sums
        .iter()
        .zip(&counts)
        .filter(|(_, &c)| c > 0)
        .map(|(s, &c)| s / c as f64)
        .collect();
    let monotone = means.windows(2).all(|w| w[0] > w[1]);
    Ok(GradientCheck {
        slope: fit.slope,
        monotone_divergence: monotone,
        rings: rows,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContinuityReport {
    /// `(t, max deviation over probes)` rows at roughly geometric times.
    pub rows: Vec<(f64, f64)>,
    pub tol: f64,
    /// Deviation at the earliest positive snapshot is within `tol`.
    pub pass: bool,
}

/// Checks continuity at `t = 0`: at probe radii inside `Ω_{i−1}` (where
/// the blend equals the initial data exactly) the deviation
/// `max |v(·,t) − v0|` must shrink as `t → 0`; pass iff the first
/// snapshot's deviation is within `tol`.
pub fn initial_continuity_check<F>(fields: &[Field], v0: &F, tol: f64) -> ContinuityReport
where
    F: Fn(f64) -> f64 + ?Sized,
{
    assert!(!fields.is_empty() && fields[0].time == 0.0, "run must start at t = 0");
    let grid = &fields[0].grid;
    let i = grid.index as f64;
    let probes: Vec<usize> = grid
        .r
        .iter()
        .enumerate()
        .filter(|(_, &r)| r >= 1.0 / i && r <= i)
        .map(|(j, _)| j)
        .collect();
    let deviation = |f: &Field| -> f64 {
        probes
            .iter()
            .map(|&j| {
                let target = v0(grid.r[j]);
                (0..grid.n_theta)
                    .map(|m| (f.node_value(j, m) - target).abs())
                    .fold(0.0f64, f64::max)
            })
            .fold(0.0f64, f64::max)
    };
    // Geometric subsequence of snapshot indices: 1, 2, 4, 8, ...
    let mut rows = Vec::new();
    let mut idx = 1usize;
    while idx < fields.len() {
        rows.push((fields[idx].time, deviation(&fields[idx])));
        idx *= 2;
    }
    if *rows.last().map(|(t, _)| t).unwrap_or(&0.0) < fields.last().unwrap().time {
        let f = fields.last().unwrap();
        rows.push((f.time, deviation(f)));
    }
    let pass = rows.first().map(|&(_, d)| d <= tol).unwrap_or(false);
    ContinuityReport { rows, tol, pass }
}

/// Rectangular probe grid for reconstructions in original coordinates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeSpec {
    pub center: [f64; 2],
    pub half_width: f64,
    pub spacing: f64,
}

impl ProbeSpec {
    /// Centered on the curve's starting point, covering the annulus, with
    /// cells as wide as the inner hole radius.
    pub fn default_for(field: &Field, traj: &Trajectory) -> Self {
        let pos = traj.position(0.0);
        Self {
            center: [pos[0], pos.get(1).copied().unwrap_or(0.0)],
            half_width: field.grid.r_max(),
            spacing: field.grid.r_min(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeField {
    pub origin: [f64; 2],
    pub spacing: f64,
    pub nx: usize,
    pub ny: usize,
    pub time: f64,
    /// Row-major values; `None` where `x − ξ(t)` leaves the annulus.
    pub values: Vec<Option<f64>>,
}

impl ProbeField {
    pub fn point(&self, ix: usize, iy: usize) -> [f64; 2] {
        [
            self.origin[0] + ix as f64 * self.spacing,
            self.origin[1] + iy as f64 * self.spacing,
        ]
    }

    /// Location and value of the minimum over present probes (smallest
    /// index wins ties).
    pub fn argmin(&self) -> Option<([f64; 2], f64)> {
        let best = par::min_indexed(self.values.len(), |i| match self.values[i] {
            Some(v) => v,
            None => f64::NAN,
        })?;
        let (ix, iy) = (best.0 % self.nx, best.0 / self.nx);
        Some((self.point(ix, iy), best.1))
    }
}

/// Samples `u(x, t) = v(x − ξ(t), t)` at one point.
pub fn sample_moving_frame(field: &Field, traj: &Trajectory, x: [f64; 2]) -> Option<f64> {
    let pos = traj.position(field.time);
    let y = [x[0] - pos[0], x[1] - pos.get(1).copied().unwrap_or(0.0)];
    let r = (y[0] * y[0] + y[1] * y[1]).sqrt();
    let phi = y[1].atan2(y[0]);
    field.interp(r, phi)
}

/// Reconstructs `u(·, t)` on a Cartesian probe grid; points mapping
/// outside the annulus are marked absent.
pub fn reconstruct_u(field: &Field, traj: &Trajectory, spec: &ProbeSpec) -> ProbeField {
    let n = (2.0 * spec.half_width / spec.spacing).round() as usize + 1;
    let origin = [spec.center[0] - spec.half_width, spec.center[1] - spec.half_width];
    let values = par::map_indexed(n * n, |i| {
        let (ix, iy) = (i % n, i / n);
        let x = [
            origin[0] + ix as f64 * spec.spacing,
            origin[1] + iy as f64 * spec.spacing,
        ];
        sample_moving_frame(field, traj, x)
    });
    ProbeField {
        origin,
        spacing: spec.spacing,
        nx: n,
        ny: n,
        time: field.time,
        values,
    }
}
