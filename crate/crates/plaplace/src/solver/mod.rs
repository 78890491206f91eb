//! Nested-annulus runs of `∂_t v = Δ_p v + ξ′(t)·∇v` with barrier
//! boundary data.
//!
//! Domains are the annuli `Ω_i = B_{i+1} \ B_{1/(i+1)}`. Each run blends
//! the initial data into the barrier of its side through the cutoff `η_i`,
//! steps with barrier Dirichlet values at the new time level, and larger
//! domains produce a monotone chain
//! `v⁻ ≤ v⁻_i ≤ v⁻_j ≤ v⁺_j ≤ v⁺_i ≤ v⁺` (`j ≥ i`) that
//! `nested_run` verifies at matched space-time samples.

pub(crate) mod kernel;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::barriers::{self, BarrierSide};
use crate::curve::{self, Trajectory};
use crate::par;
use crate::params::BarrierParams;
use kernel::{PolarDisc, RadialDisc};

/// Number of admissibility samples taken before a run starts.
const ADMISSIBILITY_SAMPLES: usize = 10_000;

/// Negative nodal values up to this magnitude are clamped to zero and
/// counted; anything larger is an error.
const CLAMP_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("initial data leaves the barrier envelope at r = {r}: v0 = {v0}, bounds [{lo}, {hi}]")]
    OrderingViolation { r: f64, v0: f64, lo: f64, hi: f64 },
    #[error("explicit step dt = {dt:.3e} exceeds the stability bound {bound:.3e}")]
    Stability { dt: f64, bound: f64 },
    #[error("inner solver failed to converge after {iters} iterations (residual {residual:.3e})")]
    Nonconvergence { iters: u32, residual: f64 },
    #[error("negative value {value:.3e} at node {node} exceeds the clamp tolerance")]
    NegativeValue { node: usize, value: f64 },
    #[error("curve violates the drift bound: worst ratio {worst_ratio:.6} at t = {worst_t:.6}")]
    CurveRejected { worst_ratio: f64, worst_t: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridMode {
    /// Radial 1D profile, any dimension, zero drift only.
    Radial,
    /// Full polar discretization, n = 2, drift supported.
    Polar,
}

/// Log-spaced annular grid for `Ω_i = B_{i+1} \ B_{1/(i+1)}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnnulusGrid {
    pub index: u32,
    pub mode: GridMode,
    pub dim: u32,
    pub r: Vec<f64>,
    pub n_theta: usize,
}

impl AnnulusGrid {
    pub fn radial(index: u32, dim: u32, radial_cells: usize) -> Result<Self, SolverError> {
        Self::build(index, GridMode::Radial, dim, radial_cells, 1)
    }

    pub fn polar(index: u32, radial_cells: usize, angular_cells: usize) -> Result<Self, SolverError> {
        if angular_cells < 4 {
            return Err(SolverError::Precondition(
                "polar mode needs at least 4 angular cells".into(),
            ));
        }
        Self::build(index, GridMode::Polar, 2, radial_cells, angular_cells)
    }

    fn build(
        index: u32,
        mode: GridMode,
        dim: u32,
        radial_cells: usize,
        n_theta: usize,
    ) -> Result<Self, SolverError> {
        if index < 2 {
            return Err(SolverError::Precondition(format!(
                "annulus index must be >= 2, got {index}"
            )));
        }
        if dim < 2 {
            return Err(SolverError::Precondition(format!(
                "dimension must be >= 2, got {dim}"
            )));
        }
        if radial_cells < 8 {
            return Err(SolverError::Precondition(
                "need at least 8 radial cells".into(),
            ));
        }
        let r_min = 1.0 / (index as f64 + 1.0);
        let r_max = index as f64 + 1.0;
        Ok(Self {
            index,
            mode,
            dim,
            r: crate::sample::log_spaced(r_min, r_max, radial_cells + 1),
            n_theta,
        })
    }

    pub fn r_min(&self) -> f64 {
        self.r[0]
    }

    pub fn r_max(&self) -> f64 {
        *self.r.last().unwrap()
    }

    pub fn node_count(&self) -> usize {
        self.r.len() * self.n_theta
    }

    #[inline]
    pub fn node_index(&self, j: usize, m: usize) -> usize {
        j * self.n_theta + m
    }
}

/// A discrete solution snapshot.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Field {
    pub grid: Arc<AnnulusGrid>,
    pub values: Vec<f64>,
    pub time: f64,
    pub side: BarrierSide,
}

impl Field {
    pub fn node_value(&self, j: usize, m: usize) -> f64 {
        self.values[self.grid.node_index(j, m)]
    }

    pub fn ring_average(&self, j: usize) -> f64 {
        let nt = self.grid.n_theta;
        let base = j * nt;
        self.values[base..base + nt].iter().sum::<f64>() / nt as f64
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b))
    }

    /// Interpolates at `(r, φ)`: linear in `ln r`, linear in angle,
    /// `None` outside the annulus.
    pub fn interp(&self, r: f64, phi: f64) -> Option<f64> {
        let rs = &self.grid.r;
        if r < rs[0] * (1.0 - 1e-12) || r > rs[rs.len() - 1] * (1.0 + 1e-12) {
            return None;
        }
        let r = r.clamp(rs[0], rs[rs.len() - 1]);
        let j = match rs.binary_search_by(|x| x.partial_cmp(&r).unwrap()) {
            Ok(j) => j.min(rs.len() - 2),
            Err(j) => j.saturating_sub(1).min(rs.len() - 2),
        };
        let wr = (r.ln() - rs[j].ln()) / (rs[j + 1].ln() - rs[j].ln());
        let nt = self.grid.n_theta;
        if nt == 1 {
            return Some((1.0 - wr) * self.node_value(j, 0) + wr * self.node_value(j + 1, 0));
        }
        let dphi = std::f64::consts::TAU / nt as f64;
        let a = phi.rem_euclid(std::f64::consts::TAU) / dphi;
        let m0 = (a.floor() as usize) % nt;
        let wm = a - a.floor();
        let m1 = (m0 + 1) % nt;
        let lo = (1.0 - wm) * self.node_value(j, m0) + wm * self.node_value(j, m1);
        let hi = (1.0 - wm) * self.node_value(j + 1, m0) + wm * self.node_value(j + 1, m1);
        Some((1.0 - wr) * lo + wr * hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Implicit minimizing-movement step (default).
    Proximal,
    /// Forward Euler under the stability bound.
    Explicit,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepperOptions {
    pub scheme: Scheme,
    pub dt: f64,
    /// Gradient regularization; `None` resolves to `1e−6 ·` initial scale.
    pub epsilon: Option<f64>,
    /// Inner-solver tolerance on `max |∂F/∂w| / m` (value per time units).
    pub inner_tol: f64,
    pub inner_max_iter: u32,
    /// Keep every `snapshot_stride`-th field (first and last always kept).
    pub snapshot_stride: usize,
}

impl Default for StepperOptions {
    fn default() -> Self {
        Self {
            scheme: Scheme::Proximal,
            dt: 1.0 / 256.0,
            epsilon: None,
            inner_tol: 1e-9,
            inner_max_iter: 80,
            snapshot_stride: 1,
        }
    }
}

/// Per-step diagnostics. `energy_anchor` is the regularized p-Dirichlet
/// energy of the step's starting state (after drift transport and boundary
/// sync); the proximal scheme guarantees
/// `energy_new + penalty ≤ energy_anchor`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepStats {
    pub t_from: f64,
    pub t_to: f64,
    pub drift_speed: f64,
    pub advect_subcycles: u32,
    pub inner_iters: u32,
    pub energy_anchor: f64,
    pub energy_new: f64,
    pub penalty: f64,
    pub clamped: usize,
}

/// The cutoff `η_i`: 1 on `Ω_{i−1}`, 0 outside `Ω_i`, a C¹ smoothstep in
/// `|y|` across the two transition shells.
pub fn cutoff_eta(index: u32, radius: f64) -> f64 {
    let i = index as f64;
    let (lo_out, lo_in) = (1.0 / (i + 1.0), 1.0 / i);
    let (hi_in, hi_out) = (i, i + 1.0);
    let smooth = |x: f64| {
        let x = x.clamp(0.0, 1.0);
        x * x * (3.0 - 2.0 * x)
    };
    if radius <= lo_out || radius >= hi_out {
        0.0
    } else if radius < lo_in {
        smooth((radius - lo_out) / (lo_in - lo_out))
    } else if radius <= hi_in {
        1.0
    } else {
        smooth((hi_out - radius) / (hi_out - hi_in))
    }
}

/// Built-in initial data between the envelopes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialData {
    LowerEnvelope,
    UpperEnvelope,
    /// `√(k k′) r^{(λ+λ′)/2}`: the pointwise geometric mean of the two
    /// envelopes (their `(1+r)` factors cancel).
    GeometricMean,
}

impl InitialData {
    pub fn eval(&self, params: &BarrierParams, r: f64) -> f64 {
        match self {
            InitialData::LowerEnvelope => barriers::lower_envelope(params, r),
            InitialData::UpperEnvelope => barriers::upper_envelope(params, r),
            InitialData::GeometricMean => {
                let c = &params.cfg;
                (c.k * c.k_prime).sqrt() * r.powf((c.lambda + c.lambda_prime) / 2.0)
            }
        }
    }
}

/// Blends radial initial data into the barrier of `side`:
/// `v0 η_i + v^±(·,0)(1−η_i)`. Fails if `v0` leaves the envelope
/// `v⁻(·,0) ≤ v0 ≤ v⁺(·,0)` at any node.
pub fn blend_initial<F>(
    grid: &Arc<AnnulusGrid>,
    v0: &F,
    params: &BarrierParams,
    side: BarrierSide,
) -> Result<Field, SolverError>
where
    F: Fn(f64) -> f64 + Sync + ?Sized,
{
    let mut values = vec![0.0; grid.node_count()];
    for (j, &r) in grid.r.iter().enumerate() {
        let v = v0(r);
        let lo = barriers::sub_profile(params, r, 0.0).value;
        let hi = barriers::super_profile(params, r, 0.0).value;
        if v < lo || v > hi {
            return Err(SolverError::OrderingViolation { r, v0: v, lo, hi });
        }
        let eta = cutoff_eta(grid.index, r);
        let barrier = barriers::profile(params, side, r, 0.0).value;
        let blended = v * eta + barrier * (1.0 - eta);
        for m in 0..grid.n_theta {
            values[grid.node_index(j, m)] = blended;
        }
    }
    Ok(Field {
        grid: Arc::clone(grid),
        values,
        time: 0.0,
        side,
    })
}

enum Disc {
    Radial(RadialDisc),
    Polar(PolarDisc),
}

fn make_disc(grid: &AnnulusGrid) -> Disc {
    match grid.mode {
        GridMode::Radial => Disc::Radial(RadialDisc::new(&grid.r, grid.dim)),
        GridMode::Polar => Disc::Polar(PolarDisc::new(&grid.r, grid.n_theta)),
    }
}

fn sync_boundary(
    grid: &AnnulusGrid,
    values: &mut [f64],
    params: &BarrierParams,
    side: BarrierSide,
    t: f64,
) {
    let last = grid.r.len() - 1;
    let inner = barriers::profile(params, side, grid.r[0], t).value;
    let outer = barriers::profile(params, side, grid.r[last], t).value;
    for m in 0..grid.n_theta {
        values[grid.node_index(0, m)] = inner;
        values[grid.node_index(last, m)] = outer;
    }
}

#[allow(clippy::too_many_arguments)]
fn step_inner(
    disc: &Disc,
    field: &Field,
    dt: f64,
    opts: &StepperOptions,
    params: &BarrierParams,
    boundary_side: BarrierSide,
    traj: &Trajectory,
    eps: f64,
) -> Result<(Field, StepStats), SolverError> {
    let grid = &field.grid;
    let t_new = field.time + dt;
    let vel = traj.velocity(field.time);
    let speed = vel.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut values = field.values.clone();
    let mut subcycles = 0;

    if speed > 0.0 {
        match (grid.mode, disc) {
            (GridMode::Polar, Disc::Polar(d)) => {
                let (advected, subs) = kernel::advect_polar(d, &values, [vel[0], vel[1]], dt);
                values = advected;
                subcycles = subs;
            }
            _ => {
                return Err(SolverError::Precondition(
                    "radial mode supports stationary curves only".into(),
                ));
            }
        }
    }

    sync_boundary(grid, &mut values, params, boundary_side, t_new);

    let p = params.cfg.p;
    // Tolerance on the implicit-equation residual (units of value/time):
    // resolves the step to `inner_tol · scale` in value units.
    let scale = values.iter().fold(1.0f64, |a, &b| a.max(b.abs()));
    let tol = opts.inner_tol * scale / dt;
    let (mut new_values, stats) = match (opts.scheme, disc) {
        (Scheme::Proximal, Disc::Radial(d)) => {
            let (w, out) =
                kernel::prox_step_radial(d, &values, p, eps, dt, tol, opts.inner_max_iter)?;
            (
                w,
                StepStats {
                    t_from: field.time,
                    t_to: t_new,
                    drift_speed: speed,
                    advect_subcycles: subcycles,
                    inner_iters: out.iters,
                    energy_anchor: out.energy_anchor,
                    energy_new: out.energy_new,
                    penalty: out.penalty,
                    clamped: 0,
                },
            )
        }
        (Scheme::Proximal, Disc::Polar(d)) => {
            let (w, out) =
                kernel::prox_step_polar(d, &values, p, eps, dt, tol, opts.inner_max_iter)?;
            (
                w,
                StepStats {
                    t_from: field.time,
                    t_to: t_new,
                    drift_speed: speed,
                    advect_subcycles: subcycles,
                    inner_iters: out.iters,
                    energy_anchor: out.energy_anchor,
                    energy_new: out.energy_new,
                    penalty: out.penalty,
                    clamped: 0,
                },
            )
        }
        (Scheme::Explicit, Disc::Radial(d)) => {
            let anchor_energy = d.energy(&values, p, eps);
            let w = kernel::explicit_step_radial(d, &values, p, eps, dt)?;
            let new_energy = d.energy(&w, p, eps);
            let mut penalty = 0.0;
            for j in 1..grid.r.len() - 1 {
                let dv = w[j] - values[j];
                penalty += d.mass[j] * dv * dv / (2.0 * dt);
            }
            (
                w,
                StepStats {
                    t_from: field.time,
                    t_to: t_new,
                    drift_speed: speed,
                    advect_subcycles: subcycles,
                    inner_iters: 0,
                    energy_anchor: anchor_energy,
                    energy_new: new_energy,
                    penalty,
                    clamped: 0,
                },
            )
        }
        (Scheme::Explicit, Disc::Polar(d)) => {
            let anchor_energy = d.energy(&values, p, eps);
            let w = kernel::explicit_step_polar(d, &values, p, eps, dt)?;
            let new_energy = d.energy(&w, p, eps);
            let nt = grid.n_theta;
            let mut penalty = 0.0;
            for j in 1..grid.r.len() - 1 {
                for m in 0..nt {
                    let i = grid.node_index(j, m);
                    let dv = w[i] - values[i];
                    penalty += d.mass_ring[j] * dv * dv / (2.0 * dt);
                }
            }
            (
                w,
                StepStats {
                    t_from: field.time,
                    t_to: t_new,
                    drift_speed: speed,
                    advect_subcycles: subcycles,
                    inner_iters: 0,
                    energy_anchor: anchor_energy,
                    energy_new: new_energy,
                    penalty,
                    clamped: 0,
                },
            )
        }
    };

    let mut stats = stats;
    for (i, v) in new_values.iter_mut().enumerate() {
        if *v < 0.0 {
            if *v >= -CLAMP_TOL {
                *v = 0.0;
                stats.clamped += 1;
            } else {
                return Err(SolverError::NegativeValue { node: i, value: *v });
            }
        }
    }

    Ok((
        Field {
            grid: Arc::clone(grid),
            values: new_values,
            time: t_new,
            side: field.side,
        },
        stats,
    ))
}

/// Advances `field` by `opts.dt`: explicit upwind transport of the drift
/// term, barrier Dirichlet sync at the new time, then the diffusion step
/// of the chosen scheme.
pub fn step(
    field: &Field,
    opts: &StepperOptions,
    params: &BarrierParams,
    traj: &Trajectory,
) -> Result<(Field, StepStats), SolverError> {
    let disc = make_disc(&field.grid);
    let eps = opts
        .epsilon
        .unwrap_or_else(|| 1e-6 * field.max_value().max(1.0));
    step_inner(&disc, field, opts.dt, opts, params, field.side, traj, eps)
}

/// A completed annulus run: kept snapshots, per-step stats, and the
/// resolved step size and regularization.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub grid: Arc<AnnulusGrid>,
    pub side: BarrierSide,
    pub fields: Vec<Field>,
    pub stats: Vec<StepStats>,
    pub dt: f64,
    pub epsilon: f64,
}

/// Solves on `Ω_i` up to `horizon ≤ i` with `side`'s blended initial data
/// and barrier boundary values.
pub fn solve_on_annulus<F>(
    grid: &Arc<AnnulusGrid>,
    horizon: f64,
    side: BarrierSide,
    v0: &F,
    opts: &StepperOptions,
    params: &BarrierParams,
    traj: &Trajectory,
) -> Result<RunOutput, SolverError>
where
    F: Fn(f64) -> f64 + Sync + ?Sized,
{
    solve_on_annulus_with_boundary(grid, horizon, side, side, v0, opts, params, traj)
}

/// As `solve_on_annulus` but with an explicit boundary-data side, used as
/// a diagnostic hook (feeding a run the other barrier's boundary data must
/// break the nested chain).
#[allow(clippy::too_many_arguments)]
pub fn solve_on_annulus_with_boundary<F>(
    grid: &Arc<AnnulusGrid>,
    horizon: f64,
    side: BarrierSide,
    boundary_side: BarrierSide,
    v0: &F,
    opts: &StepperOptions,
    params: &BarrierParams,
    traj: &Trajectory,
) -> Result<RunOutput, SolverError>
where
    F: Fn(f64) -> f64 + Sync + ?Sized,
{
    if !(horizon > 0.0) {
        return Err(SolverError::Precondition("horizon must be positive".into()));
    }
    if horizon > grid.index as f64 {
        return Err(SolverError::Precondition(format!(
            "horizon {horizon} exceeds the annulus time limit {}",
            grid.index
        )));
    }
    if traj.dim() != grid.dim as usize {
        return Err(SolverError::Precondition(format!(
            "curve dimension {} does not match grid dimension {}",
            traj.dim(),
            grid.dim
        )));
    }
    if grid.mode == GridMode::Radial && !traj.is_stationary() {
        return Err(SolverError::Precondition(
            "radial mode supports stationary curves only".into(),
        ));
    }
    let adm = curve::admissible(traj, params.c_xi, params.a_time, horizon, ADMISSIBILITY_SAMPLES);
    if !adm.admissible {
        return Err(SolverError::CurveRejected {
            worst_ratio: adm.worst_ratio,
            worst_t: adm.worst_t,
        });
    }

    let initial = blend_initial(grid, v0, params, side)?;
    if boundary_side != side {
        // Diagnostic runs keep their own blend but follow the other
        // barrier's boundary data from the first step on.
    }
    let nsteps = ((horizon / opts.dt) - 1e-9).ceil().max(1.0) as usize;
    let dt = horizon / nsteps as f64;
    let eps = opts
        .epsilon
        .unwrap_or_else(|| 1e-6 * initial.max_value().max(1.0));
    let disc = make_disc(grid);

    let mut fields = Vec::with_capacity(nsteps / opts.snapshot_stride.max(1) + 2);
    let mut stats = Vec::with_capacity(nsteps);
    let mut current = initial.clone();
    fields.push(initial);
    for k in 1..=nsteps {
        let (next, st) = step_inner(&disc, &current, dt, opts, params, boundary_side, traj, eps)?;
        let mut next = next;
        // Exact snapshot times, immune to accumulation drift.
        next.time = horizon * k as f64 / nsteps as f64;
        stats.push(st);
        let keep = k == nsteps || k % opts.snapshot_stride.max(1) == 0;
        if keep {
            fields.push(next.clone());
        }
        current = next;
    }
    Ok(RunOutput {
        grid: Arc::clone(grid),
        side,
        fields,
        stats,
        dt,
        epsilon: eps,
    })
}

/// Worst signed gap of a run against its own barrier: for a sub run the
/// max of `v⁻ − v_i⁻`, for a super run the max of `v_i⁺ − v⁺` over all
/// kept snapshots and nodes (positive = violation).
pub fn sandwich_violation(run: &RunOutput, params: &BarrierParams) -> ChainCheck {
    let grid = &run.grid;
    let nr = grid.r.len();
    let nt = grid.n_theta;
    let per_snapshot: Vec<(f64, f64, f64)> = run
        .fields
        .iter()
        .map(|f| {
            let worst = par::min_indexed(nr * nt, |i| {
                let (j, m) = (i / nt, i % nt);
                let b = barriers::profile(params, run.side, grid.r[j], f.time).value;
                let v = f.node_value(j, m);
                // Negated gap so min_indexed finds the worst violation.
                match run.side {
                    BarrierSide::Sub => -(b - v),
                    BarrierSide::Super => -(v - b),
                }
            })
            .unwrap();
            (-(worst.1), grid.r[(worst.0) / nt], f.time)
        })
        .collect();
    let (mut gap, mut worst_r, mut worst_t) = (f64::NEG_INFINITY, f64::NAN, f64::NAN);
    for (g, r, t) in per_snapshot {
        if g > gap {
            gap = g;
            worst_r = r;
            worst_t = t;
        }
    }
    ChainCheck {
        name: match run.side {
            BarrierSide::Sub => "sub_barrier_vs_run".into(),
            BarrierSide::Super => "run_vs_super_barrier".into(),
        },
        indices: (grid.index, grid.index),
        worst_gap: gap,
        worst_r,
        worst_t,
    }
}

/// One verified inequality of the nested chain; `worst_gap` is the largest
/// signed violation (negative values mean the inequality held strictly).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainCheck {
    pub name: String,
    pub indices: (u32, u32),
    pub worst_gap: f64,
    pub worst_r: f64,
    pub worst_t: f64,
}

/// Convergence indicator per annulus index.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IndexGap {
    pub index: u32,
    /// max over matched samples of `v⁺_i − v⁻_i`.
    pub max_gap: f64,
    /// mean over matched samples of `v⁺_i − v⁻_i`.
    pub mean_gap: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NestedReport {
    pub i_min: u32,
    pub i_max: u32,
    pub horizon: f64,
    pub checks: Vec<ChainCheck>,
    pub gaps_by_index: Vec<IndexGap>,
    /// Largest violation over all chain checks.
    pub worst_violation: f64,
}

/// Runs both sides on every `Ω_i`, `i ∈ [i_min, i_max]`, then verifies the
/// full ordering chain on the probe nodes of the smallest annulus.
#[allow(clippy::too_many_arguments)]
pub fn nested_run<F>(
    i_min: u32,
    i_max: u32,
    horizon: f64,
    mode: GridMode,
    radial_cells: usize,
    angular_cells: usize,
    v0: &F,
    opts: &StepperOptions,
    params: &BarrierParams,
    traj: &Trajectory,
) -> Result<(Vec<RunOutput>, NestedReport), SolverError>
where
    F: Fn(f64) -> f64 + Sync + ?Sized,
{
    if i_min < 2 || i_max < i_min {
        return Err(SolverError::Precondition(format!(
            "need 2 <= i_min <= i_max, got [{i_min}, {i_max}]"
        )));
    }
    if horizon > i_min as f64 {
        return Err(SolverError::Precondition(format!(
            "horizon {horizon} exceeds the smallest annulus time limit {i_min}"
        )));
    }
    let mut specs = Vec::new();
    for i in i_min..=i_max {
        for side in [BarrierSide::Sub, BarrierSide::Super] {
            specs.push((i, side));
        }
    }
    let results: Vec<Result<RunOutput, SolverError>> = par::map_indexed(specs.len(), |s| {
        let (i, side) = specs[s];
        let grid = Arc::new(match mode {
            GridMode::Radial => AnnulusGrid::radial(i, params.cfg.n, radial_cells)?,
            GridMode::Polar => AnnulusGrid::polar(i, radial_cells, angular_cells)?,
        });
        solve_on_annulus(&grid, horizon, side, v0, opts, params, traj)
    });
    let mut runs = Vec::with_capacity(results.len());
    for r in results {
        runs.push(r?);
    }
    let report = assemble_chain_report(&runs, params, horizon)?;
    Ok((runs, report))
}

/// Builds the chain report from completed runs (one sub and one super run
/// per index). Exposed separately so corrupted runs can be fed in as a
/// negative control.
pub fn assemble_chain_report(
    runs: &[RunOutput],
    params: &BarrierParams,
    horizon: f64,
) -> Result<NestedReport, SolverError> {
    let mut indices: Vec<u32> = runs.iter().map(|r| r.grid.index).collect();
    indices.sort_unstable();
    indices.dedup();
    if indices.is_empty() {
        return Err(SolverError::Precondition("no runs supplied".into()));
    }
    let find = |i: u32, side: BarrierSide| -> Result<&RunOutput, SolverError> {
        runs.iter()
            .find(|r| r.grid.index == i && r.side == side)
            .ok_or_else(|| {
                SolverError::Precondition(format!("missing {} run for i = {i}", side.label()))
            })
    };
    let i_lo = indices[0];
    let probe = &find(i_lo, BarrierSide::Sub)?.grid;
    let nsnap = find(i_lo, BarrierSide::Sub)?.fields.len();
    for r in runs {
        if r.fields.len() != nsnap {
            return Err(SolverError::Precondition(
                "runs have mismatched snapshot counts; use identical dt and stride".into(),
            ));
        }
    }

    // Evaluate a run on the probe nodes at snapshot s.
    let eval = |run: &RunOutput, s: usize, j: usize, m: usize| -> f64 {
        if Arc::ptr_eq(&run.grid, probe) || (run.grid.index == i_lo && run.grid.n_theta == probe.n_theta)
        {
            return run.fields[s].node_value(j, m);
        }
        let phi = std::f64::consts::TAU * m as f64 / probe.n_theta as f64;
        run.fields[s]
            .interp(probe.r[j], phi)
            .expect("probe radius lies inside every larger annulus")
    };

    let nodes = probe.r.len() * probe.n_theta;
    let nt = probe.n_theta;
    let mut checks: Vec<ChainCheck> = Vec::new();
    let mut push_check = |name: String, indices: (u32, u32), gap: F64Worst| {
        checks.push(ChainCheck {
            name,
            indices,
            worst_gap: gap.value,
            worst_r: gap.r,
            worst_t: gap.t,
        });
    };

    // Worst (max) of `f` over snapshots × probe nodes.
    let worst_over = |f: &(dyn Fn(usize, usize, usize) -> f64 + Sync),
                      times: &[f64]|
     -> F64Worst {
        let mut worst = F64Worst::new();
        for s in 0..nsnap {
            let m = par::min_indexed(nodes, |i| -f(s, i / nt, i % nt)).unwrap();
            worst.update(-m.1, probe.r[m.0 / nt], times[s]);
        }
        worst
    };

    let times: Vec<f64> = find(i_lo, BarrierSide::Sub)?
        .fields
        .iter()
        .map(|f| f.time)
        .collect();

    for &i in &indices {
        let sub = find(i, BarrierSide::Sub)?;
        let sup = find(i, BarrierSide::Super)?;
        // v⁻ ≤ v⁻_i and v⁺_i ≤ v⁺ on the probe.
        let g1 = worst_over(
            &|s, j, m| {
                barriers::sub_profile(params, probe.r[j], times[s]).value - eval(sub, s, j, m)
            },
            &times,
        );
        push_check(format!("sub_barrier_below_run_{i}"), (i, i), g1);
        let g2 = worst_over(
            &|s, j, m| {
                eval(sup, s, j, m) - barriers::super_profile(params, probe.r[j], times[s]).value
            },
            &times,
        );
        push_check(format!("run_{i}_below_super_barrier"), (i, i), g2);
        // v⁻_i ≤ v⁺_i.
        let g3 = worst_over(&|s, j, m| eval(sub, s, j, m) - eval(sup, s, j, m), &times);
        push_check(format!("sub_below_super_on_{i}"), (i, i), g3);
    }
    for w in indices.windows(2) {
        let (i, j) = (w[0], w[1]);
        let sub_i = find(i, BarrierSide::Sub)?;
        let sub_j = find(j, BarrierSide::Sub)?;
        let sup_i = find(i, BarrierSide::Super)?;
        let sup_j = find(j, BarrierSide::Super)?;
        let g4 = worst_over(&|s, jj, m| eval(sub_i, s, jj, m) - eval(sub_j, s, jj, m), &times);
        push_check(format!("sub_monotone_{i}_to_{j}"), (i, j), g4);
        let g5 = worst_over(&|s, jj, m| eval(sup_j, s, jj, m) - eval(sup_i, s, jj, m), &times);
        push_check(format!("super_monotone_{j}_to_{i}"), (i, j), g5);
    }

    let mut gaps_by_index = Vec::new();
    for &i in &indices {
        let sub = find(i, BarrierSide::Sub)?;
        let sup = find(i, BarrierSide::Super)?;
        let mut max_gap = f64::NEG_INFINITY;
        let mut sum = 0.0;
        for s in 0..nsnap {
            for j in 0..probe.r.len() {
                for m in 0..nt {
                    let g = eval(sup, s, j, m) - eval(sub, s, j, m);
                    max_gap = max_gap.max(g);
                    sum += g;
                }
            }
        }
        gaps_by_index.push(IndexGap {
            index: i,
            max_gap,
            mean_gap: sum / (nsnap * nodes) as f64,
        });
    }

    let worst_violation = checks.iter().map(|c| c.worst_gap).fold(f64::NEG_INFINITY, f64::max);
    Ok(NestedReport {
        i_min: indices[0],
        i_max: *indices.last().unwrap(),
        horizon,
        checks,
        gaps_by_index,
        worst_violation,
    })
}

struct F64Worst {
    value: f64,
    r: f64,
    t: f64,
}

impl F64Worst {
    fn new() -> Self {
        Self {
            value: f64::NEG_INFINITY,
            r: f64::NAN,
            t: f64::NAN,
        }
    }

    fn update(&mut self, v: f64, r: f64, t: f64) {
        if v > self.value {
            self.value = v;
            self.r = r;
            self.t = t;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{derive_structural, min_k, validate_exponents, ExponentConfig};

    fn reference_params() -> BarrierParams {
        let cfg = validate_exponents(ExponentConfig {
            n: 2,
            p: 4.0,
            lambda: 0.5,
            lambda_prime: 0.8,
            k: 2.0,
            k_prime: 1.0,
        })
        .unwrap();
        derive_structural(&cfg, 0.0625, 1.05 * min_k(&cfg), 0.5, 2048.0).unwrap()
    }

    #[test]
    fn cutoff_shape() {
        let i = 3u32;
        // 1 on Ω_{i−1}, 0 outside Ω_i, intermediate on the shells.
        assert_eq!(cutoff_eta(i, 1.0 / (i as f64 + 1.0)), 0.0);
        assert_eq!(cutoff_eta(i, i as f64 + 2.0), 0.0);
        assert_eq!(cutoff_eta(i, i as f64), 1.0);
        assert_eq!(cutoff_eta(i, 1.0 / i as f64), 1.0);
        let mid_inner = 0.5 * (1.0 / (i as f64 + 1.0) + 1.0 / i as f64);
        let eta = cutoff_eta(i, mid_inner);
        assert!(eta > 0.0 && eta < 1.0);
        // C¹: slope vanishes at the shell edges (the inner shell is only
        // 1/12 wide, so the quadratic tail needs a small step).
        let h = 1e-8;
        for edge in [1.0 / (i as f64 + 1.0), 1.0 / i as f64, i as f64, i as f64 + 1.0] {
            let slope = (cutoff_eta(i, edge + h) - cutoff_eta(i, edge - h)) / (2.0 * h);
            assert!(slope.abs() < 1e-4, "edge {edge}: slope {slope}");
        }
    }

    #[test]
    fn blend_equals_v0_on_inner_annulus_and_barrier_outside() {
        let params = reference_params();
        let grid = Arc::new(AnnulusGrid::radial(3, 2, 128).unwrap());
        let v0 = |r: f64| InitialData::GeometricMean.eval(&params, r);
        let field = blend_initial(&grid, &v0, &params, BarrierSide::Sub).unwrap();
        for (j, &r) in grid.r.iter().enumerate() {
            if (1.0 / 3.0..=3.0).contains(&r) {
                assert!((field.node_value(j, 0) - v0(r)).abs() < 1e-14);
            }
        }
        // Boundary nodes carry the barrier exactly.
        let b0 = barriers::sub_profile(&params, grid.r_min(), 0.0).value;
        assert!((field.node_value(0, 0) - b0).abs() < 1e-14);
    }

    #[test]
    fn blend_of_barrier_data_is_identity() {
        let params = reference_params();
        let grid = Arc::new(AnnulusGrid::radial(3, 2, 64).unwrap());
        let v0 = |r: f64| barriers::sub_profile(&params, r, 0.0).value;
        let field = blend_initial(&grid, &v0, &params, BarrierSide::Sub).unwrap();
        for (j, &r) in grid.r.iter().enumerate() {
            assert!((field.node_value(j, 0) - v0(r)).abs() < 1e-14);
        }
    }

    #[test]
    fn blend_rejects_data_outside_envelope() {
        let params = reference_params();
        let grid = Arc::new(AnnulusGrid::radial(3, 2, 64).unwrap());
        let v0 = |r: f64| barriers::super_profile(&params, r, 0.0).value * 1.5;
        assert!(matches!(
            blend_initial(&grid, &v0, &params, BarrierSide::Sub),
            Err(SolverError::OrderingViolation { .. })
        ));
    }

    #[test]
    fn blends_are_ordered_across_indices() {
        // v⁻(·,0) ≤ blend_i(sub) ≤ blend_{i+1}(sub) ≤ v0 on shared radii.
        let params = reference_params();
        let v0 = |r: f64| InitialData::GeometricMean.eval(&params, r);
        let g3 = Arc::new(AnnulusGrid::radial(3, 2, 200).unwrap());
        let g4 = Arc::new(AnnulusGrid::radial(4, 2, 200).unwrap());
        let b3 = blend_initial(&g3, &v0, &params, BarrierSide::Sub).unwrap();
        let b4 = blend_initial(&g4, &v0, &params, BarrierSide::Sub).unwrap();
        let bsup3 = blend_initial(&g3, &v0, &params, BarrierSide::Super).unwrap();
        // Interpolating b4 onto g3 nodes biases upward by O(h²) (the
        // profiles are convex in ln r), hence the 1e−4 slack.
        for (j, &r) in g3.r.iter().enumerate() {
            let v3 = b3.node_value(j, 0);
            let v4 = b4.interp(r, 0.0).unwrap();
            let lo = barriers::sub_profile(&params, r, 0.0).value;
            let hi = barriers::super_profile(&params, r, 0.0).value;
            assert!(lo <= v3 * (1.0 + 1e-12) + 1e-15);
            assert!(v3 <= v4 * (1.0 + 1e-4) + 1e-12);
            assert!(v4 <= v0(r) * (1.0 + 1e-4) + 1e-12);
            assert!(v3 <= bsup3.node_value(j, 0));
            assert!(bsup3.node_value(j, 0) <= hi * (1.0 + 1e-12));
        }
    }

    #[test]
    fn horizon_beyond_index_is_rejected() {
        let params = reference_params();
        let grid = Arc::new(AnnulusGrid::radial(3, 2, 64).unwrap());
        let traj = Trajectory::stationary(vec![0.0, 0.0]);
        let v0 = |r: f64| InitialData::GeometricMean.eval(&params, r);
        let err = solve_on_annulus(
            &grid,
            3.5,
            BarrierSide::Sub,
            &v0,
            &StepperOptions::default(),
            &params,
            &traj,
        );
        assert!(matches!(err, Err(SolverError::Precondition(_))));
    }

    #[test]
    fn moving_curve_is_rejected_in_radial_mode() {
        let params = reference_params();
        let grid = Arc::new(AnnulusGrid::radial(3, 2, 64).unwrap());
        let traj = Trajectory::log_drift(vec![0.0, 0.0], 0.1, params.a_time, vec![1.0, 0.0]).unwrap();
        let v0 = |r: f64| InitialData::GeometricMean.eval(&params, r);
        let err = solve_on_annulus(
            &grid,
            0.5,
            BarrierSide::Sub,
            &v0,
            &StepperOptions::default(),
            &params,
            &traj,
        );
        assert!(matches!(err, Err(SolverError::Precondition(_))));
    }

    #[test]
    fn inadmissible_curve_is_rejected_at_setup() {
        let params = reference_params();
        let grid = Arc::new(AnnulusGrid::polar(3, 32, 8).unwrap());
        let traj = Trajectory::linear(vec![0.0, 0.0], vec![0.5, 0.0]).unwrap();
        let v0 = |r: f64| InitialData::GeometricMean.eval(&params, r);
        let err = solve_on_annulus(
            &grid,
            1.0,
            BarrierSide::Sub,
            &v0,
            &StepperOptions::default(),
            &params,
            &traj,
        );
        assert!(matches!(err, Err(SolverError::CurveRejected { .. })));
    }

    #[test]
    fn proximal_steps_satisfy_the_energy_inequality() {
        let params = reference_params();
        let grid = Arc::new(AnnulusGrid::radial(3, 2, 96).unwrap());
        let traj = Trajectory::stationary(vec![0.0, 0.0]);
        let v0 = |r: f64| InitialData::GeometricMean.eval(&params, r);
        let opts = StepperOptions {
            dt: 1.0 / 64.0,
            ..Default::default()
        };
        let run = solve_on_annulus(&grid, 0.25, BarrierSide::Sub, &v0, &opts, &params, &traj).unwrap();
        assert_eq!(run.stats.len(), 16);
        for st in &run.stats {
            assert!(
                st.energy_new + st.penalty <= st.energy_anchor * (1.0 + 1e-12) + 1e-300,
                "step at t={}: {} + {} vs {}",
                st.t_from,
                st.energy_new,
                st.penalty,
                st.energy_anchor
            );
        }
    }

    #[test]
    fn sub_run_stays_between_barriers() {
        let params = reference_params();
        let grid = Arc::new(AnnulusGrid::radial(3, 2, 128).unwrap());
        let traj = Trajectory::stationary(vec![0.0, 0.0]);
        let v0 = |r: f64| InitialData::GeometricMean.eval(&params, r);
        let opts = StepperOptions {
            dt: 1.0 / 128.0,
            ..Default::default()
        };
        let run = solve_on_annulus(&grid, 0.5, BarrierSide::Sub, &v0, &opts, &params, &traj).unwrap();
        let viol = sandwich_violation(&run, &params);
        let scale = run.fields[0].max_value();
        assert!(
            viol.worst_gap <= 1e-2 * scale,
            "violation {} vs scale {}",
            viol.worst_gap,
            scale
        );
    }
}
