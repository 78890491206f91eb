//! Closed-form barrier evaluation and the certification suite.
//!
//! The supersolution glues two radial pieces at `ρ(t) = (1+At)^θ`:
//!
//! ```text
//! v⁺_in(r,t)  = K (1+At)^{θ(λ′−λ)} r^λ,
//! v⁺_out(r,t) = K (1+R)^{−λ′} (r + R(1+At)^θ)^{λ′},
//! ```
//!
//! and the subsolution glues at `r = σ`:
//!
//! ```text
//! v⁻_in(r,t)  = K⁻¹ (1+At)^{−1/(p−2)} r^{λ′},
//! v⁻_out(r,t) = K⁻¹ b (1+At)^{−1/(p−2)} (r−δ)^λ,   b = σ^{λ′}(σ−δ)^{−λ}.
//! ```
//!
//! Certification samples the residual `∂_t v − Δ_p v ∓ C_ξ(1+At)^{−1}|∂_r v|`
//! (drift taken with the adversarial sign for each side, so a pass covers
//! every admissible curve at once), the four-term ordering chain against the
//! initial-data envelopes, and the one-sided derivative gaps at the gluing
//! radii against their closed forms.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::par;
use crate::params::BarrierParams;
use crate::sample::SampleGrid;

/// Which barrier a value or run belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BarrierSide {
    Sub,
    Super,
}

impl BarrierSide {
    pub fn label(self) -> &'static str {
        match self {
            BarrierSide::Sub => "sub",
            BarrierSide::Super => "super",
        }
    }
}

/// Which side of the gluing radius a profile evaluation used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Piece {
    Inner,
    Outer,
}

/// One barrier evaluation: value, analytic radial and time derivatives and
/// the interface radius of the active barrier (`ρ(t)` or `σ`).
#[derive(Debug, Clone, Copy)]
pub struct RadialProfile {
    pub piece: Piece,
    pub value: f64,
    pub d_r: f64,
    pub d_rr: f64,
    pub d_t: f64,
    pub interface_radius: f64,
}

#[derive(Debug, Error)]
pub enum BarrierError {
    #[error("domain error: {0}")]
    DomainError(String),
    /// Residuals are undefined on the gluing radius; the caller must
    /// sample off-interface.
    #[error("sample r = {r} lies within grid epsilon of the interface radius {interface}")]
    InterfacePoint { r: f64, interface: f64 },
}

/// Relative half-width of the excluded band around each gluing radius.
pub const INTERFACE_EPS: f64 = 1e-9;

/// Upper initial-data envelope `k r^λ (1+r)^{λ′−λ}`.
pub fn upper_envelope(params: &BarrierParams, r: f64) -> f64 {
    let c = &params.cfg;
    c.k * r.powf(c.lambda) * (1.0 + r).powf(c.lambda_prime - c.lambda)
}

/// Lower initial-data envelope `k′ r^{λ′} (1+r)^{λ−λ′}`.
pub fn lower_envelope(params: &BarrierParams, r: f64) -> f64 {
    let c = &params.cfg;
    c.k_prime * r.powf(c.lambda_prime) * (1.0 + r).powf(c.lambda - c.lambda_prime)
}

/// Evaluate the supersolution at `(r, t)`, `r ≥ 0`, `t ≥ 0`.
///
/// At `r = 0` the value is 0 and `∂_r` is `+∞` (the profile has exponent
/// `λ < 1`); only the value is meaningful there.
pub fn super_profile(params: &BarrierParams, r: f64, t: f64) -> RadialProfile {
    let c = &params.cfg;
    let (lam, lp) = (c.lambda, c.lambda_prime);
    let one_at = 1.0 + params.a_time * t;
    let rho = params.rho(t);
    if r <= rho {
        // v = K g(t) r^λ with g = (1+At)^{θ(λ′−λ)}
        let g = one_at.powf(params.theta * (lp - lam));
        let kg = params.k_scale * g;
        RadialProfile {
            piece: Piece::Inner,
            value: kg * r.powf(lam),
            d_r: kg * lam * r.powf(lam - 1.0),
            d_rr: kg * lam * (lam - 1.0) * r.powf(lam - 2.0),
            d_t: params.k_scale
                * params.theta
                * (lp - lam)
                * params.a_time
                * one_at.powf(params.theta * (lp - lam) - 1.0)
                * r.powf(lam),
            interface_radius: rho,
        }
    } else {
        // v = K (1+R)^{−λ′} w^{λ′} with w = r + Rρ(t)
        let c_out = params.k_scale * (1.0 + params.r_ratio).powf(-lp);
        let w = r + params.r_ratio * rho;
        let dw_dt = params.r_ratio * params.theta * params.a_time * one_at.powf(params.theta - 1.0);
        RadialProfile {
            piece: Piece::Outer,
            value: c_out * w.powf(lp),
            d_r: c_out * lp * w.powf(lp - 1.0),
            d_rr: c_out * lp * (lp - 1.0) * w.powf(lp - 2.0),
            d_t: c_out * lp * w.powf(lp - 1.0) * dw_dt,
            interface_radius: rho,
        }
    }
}

/// Evaluate the subsolution at `(r, t)`, `r ≥ 0`, `t ≥ 0`.
pub fn sub_profile(params: &BarrierParams, r: f64, t: f64) -> RadialProfile {
    let c = &params.cfg;
    let (lam, lp) = (c.lambda, c.lambda_prime);
    let one_at = 1.0 + params.a_time * t;
    let decay = -1.0 / (c.p - 2.0);
    let h = one_at.powf(decay);
    let dh_dt = decay * params.a_time * one_at.powf(decay - 1.0);
    let inv_k = 1.0 / params.k_scale;
    if r <= params.sigma {
        RadialProfile {
            piece: Piece::Inner,
            value: inv_k * h * r.powf(lp),
            d_r: inv_k * h * lp * r.powf(lp - 1.0),
            d_rr: inv_k * h * lp * (lp - 1.0) * r.powf(lp - 2.0),
            d_t: inv_k * dh_dt * r.powf(lp),
            interface_radius: params.sigma,
        }
    } else {
        let cb = inv_k * params.b_coeff;
        let w = r - params.delta;
        RadialProfile {
            piece: Piece::Outer,
            value: cb * h * w.powf(lam),
            d_r: cb * h * lam * w.powf(lam - 1.0),
            d_rr: cb * h * lam * (lam - 1.0) * w.powf(lam - 2.0),
            d_t: cb * dh_dt * w.powf(lam),
            interface_radius: params.sigma,
        }
    }
}

pub fn profile(params: &BarrierParams, side: BarrierSide, r: f64, t: f64) -> RadialProfile {
    match side {
        BarrierSide::Super => super_profile(params, r, t),
        BarrierSide::Sub => sub_profile(params, r, t),
    }
}

/// Radial p-Laplacian `Δ_p f = r^{1−n}(r^{n−1}|f′|^{p−2}f′)′` in expanded
/// form `|f′|^{p−2}((p−1)f″ + (n−1)f′/r)`, extended by 0 at `f′ = 0` for
/// `p > 2`.
///
/// The two bracket terms cancel to roundoff on p-harmonic power profiles,
/// so the advective term keeps its division remainder and the sum is fused.
pub fn radial_p_laplacian(df: f64, ddf: f64, r: f64, n: u32, p: f64) -> Result<f64, BarrierError> {
    if !(r > 0.0) {
        return Err(BarrierError::DomainError(format!(
            "radial p-Laplacian needs r > 0, got r = {r}"
        )));
    }
    if df == 0.0 && p > 2.0 {
        return Ok(0.0);
    }
    let num = (n - 1) as f64 * df;
    let adv = num / r;
    let adv_rem = f64::mul_add(-adv, r, num) / r;
    let bracket = f64::mul_add(p - 1.0, ddf, adv) + adv_rem;
    Ok(df.abs().powf(p - 2.0) * bracket)
}

fn guard_interface(r: f64, interface: f64) -> Result<(), BarrierError> {
    if (r - interface).abs() <= INTERFACE_EPS * r.abs().max(interface.abs()) {
        return Err(BarrierError::InterfacePoint { r, interface });
    }
    Ok(())
}

/// Supersolution residual with worst-case drift,
/// `∂_t v⁺ − Δ_p v⁺ − C_ξ(1+At)^{−1}|∂_r v⁺|`; certification requires a
/// nonnegative value at every off-interface sample.
pub fn residual_super(params: &BarrierParams, r: f64, t: f64) -> Result<f64, BarrierError> {
    let prof = super_profile(params, r, t);
    guard_interface(r, prof.interface_radius)?;
    let lap = radial_p_laplacian(prof.d_r, prof.d_rr, r, params.cfg.n, params.cfg.p)?;
    Ok(prof.d_t - lap - params.drift_bound(t) * prof.d_r.abs())
}

/// Subsolution residual with worst-case drift (sign flipped relative to
/// `residual_super`); certification requires a nonpositive value.
pub fn residual_sub(params: &BarrierParams, r: f64, t: f64) -> Result<f64, BarrierError> {
    let prof = sub_profile(params, r, t);
    guard_interface(r, prof.interface_radius)?;
    let lap = radial_p_laplacian(prof.d_r, prof.d_rr, r, params.cfg.n, params.cfg.p)?;
    Ok(prof.d_t - lap + params.drift_bound(t) * prof.d_r.abs())
}

/// Closed form of the supersolution derivative gap at `ρ(t)`:
/// `K (1+At)^{θ(λ′−1)} λ²/(λ+λ′)`.
pub fn super_matching_gap_closed_form(params: &BarrierParams, t: f64) -> f64 {
    let c = &params.cfg;
    params.k_scale
        * (1.0 + params.a_time * t).powf(params.theta * (c.lambda_prime - 1.0))
        * c.lambda
        * c.lambda
        / (c.lambda + c.lambda_prime)
}

/// Closed form of the subsolution derivative gap at `σ`:
/// `−(λσ/2) K⁻¹ (1+At)^{−1/(p−2)} (σ−δ)^{−1} σ^{λ′−1}`, the offset choice
/// `δ = σ(2λ′−λ)/(2λ′)` reducing `λ′(σ−δ) − λσ` to `−λσ/2`.
pub fn sub_matching_gap_closed_form(params: &BarrierParams, t: f64) -> f64 {
    let c = &params.cfg;
    -(c.lambda * params.sigma / 2.0)
        * (1.0 + params.a_time * t).powf(-1.0 / (c.p - 2.0))
        / params.k_scale
        / (params.sigma - params.delta)
        * params.sigma.powf(c.lambda_prime - 1.0)
}

/// One-sided derivative gap `∂_r v_in − ∂_r v_out` at the gluing radius,
/// from the analytic piece derivatives.
pub fn matching_gap(params: &BarrierParams, side: BarrierSide, t: f64) -> f64 {
    let interface = match side {
        BarrierSide::Super => params.rho(t),
        BarrierSide::Sub => params.sigma,
    };
    // Evaluate each piece exactly at the interface by nudging the selector.
    let inner = match side {
        BarrierSide::Super => super_profile(params, interface, t),
        BarrierSide::Sub => sub_profile(params, interface, t),
    };
    let outer = match side {
        BarrierSide::Super => {
            let mut p = super_profile(params, interface * (1.0 + 2.0 * INTERFACE_EPS), t);
            p.d_r = outer_d_r_at(params, side, interface, t);
            p
        }
        BarrierSide::Sub => {
            let mut p = sub_profile(params, interface * (1.0 + 2.0 * INTERFACE_EPS), t);
            p.d_r = outer_d_r_at(params, side, interface, t);
            p
        }
    };
    debug_assert_eq!(inner.piece, Piece::Inner);
    debug_assert_eq!(outer.piece, Piece::Outer);
    inner.d_r - outer.d_r
}

/// Outer-piece radial derivative evaluated exactly at radius `r`.
fn outer_d_r_at(params: &BarrierParams, side: BarrierSide, r: f64, t: f64) -> f64 {
    let c = &params.cfg;
    match side {
        BarrierSide::Super => {
            let c_out = params.k_scale * (1.0 + params.r_ratio).powf(-c.lambda_prime);
            let w = r + params.r_ratio * params.rho(t);
            c_out * c.lambda_prime * w.powf(c.lambda_prime - 1.0)
        }
        BarrierSide::Sub => {
            let h = (1.0 + params.a_time * t).powf(-1.0 / (c.p - 2.0));
            let cb = params.b_coeff / params.k_scale;
            cb * h * c.lambda * (r - params.delta).powf(c.lambda - 1.0)
        }
    }
}

/// Outcome of one certified inequality. `margin` is oriented so that
/// positive means satisfied; a passing check has strictly positive margin.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub pass: bool,
    pub margin: f64,
    pub worst_r: f64,
    pub worst_t: f64,
    pub samples: usize,
    pub skipped: usize,
}

/// Grid summary embedded in reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridDescription {
    pub r_min: f64,
    pub r_max: f64,
    pub r_samples: usize,
    pub t_max: f64,
    pub t_samples: usize,
}

impl GridDescription {
    pub fn of(grid: &SampleGrid) -> Self {
        Self {
            r_min: grid.r[0],
            r_max: *grid.r.last().unwrap(),
            r_samples: grid.r.len(),
            t_max: *grid.t.last().unwrap(),
            t_samples: grid.t.len(),
        }
    }
}

/// Aggregated outcome of a certification pass.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertificationReport {
    pub pass: bool,
    pub checks: Vec<CheckOutcome>,
    pub grid: GridDescription,
}

impl CertificationReport {
    fn from_checks(checks: Vec<CheckOutcome>, grid: &SampleGrid) -> Self {
        Self {
            pass: checks.iter().all(|c| c.pass),
            checks,
            grid: GridDescription::of(grid),
        }
    }
}

/// Result of one residual sweep restricted to a barrier piece.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResidualCheck {
    pub pass: bool,
    /// Smallest signed slack `(±residual) − residual_margin` over the sweep.
    pub worst_margin: f64,
    pub worst_r: f64,
    pub worst_t: f64,
    pub samples: usize,
    pub skipped: usize,
}

/// Sweeps the worst-case-drift residual of `side` over every grid sample
/// that falls on `piece`, skipping the excluded interface band. Samples on
/// the other piece do not count. An empty sweep passes vacuously.
pub fn residual_sweep(
    params: &BarrierParams,
    grid: &SampleGrid,
    side: BarrierSide,
    piece: Piece,
    residual_margin: f64,
) -> ResidualCheck {
    let total = grid.len();
    // Signed slack per flattened sample; NaN marks off-piece or skipped.
    let slack = |idx: usize| -> f64 {
        let (r, t) = grid.at(idx);
        let interface = match side {
            BarrierSide::Super => params.rho(t),
            BarrierSide::Sub => params.sigma,
        };
        let sample_piece = if r <= interface { Piece::Inner } else { Piece::Outer };
        if sample_piece != piece {
            return f64::NAN;
        }
        let res = match side {
            BarrierSide::Super => residual_super(params, r, t),
            BarrierSide::Sub => residual_sub(params, r, t),
        };
        match res {
            Ok(v) => match side {
                BarrierSide::Super => v - residual_margin,
                BarrierSide::Sub => -v - residual_margin,
            },
            Err(_) => f64::NAN,
        }
    };
    let worst = par::min_indexed(total, slack);
    // NaN samples are either off-piece or interface-skipped; count them.
    let on_piece = par::sum_indexed(total, |idx| {
        let (r, t) = grid.at(idx);
        let interface = match side {
            BarrierSide::Super => params.rho(t),
            BarrierSide::Sub => params.sigma,
        };
        let p = if r <= interface { Piece::Inner } else { Piece::Outer };
        if p == piece {
            1.0
        } else {
            0.0
        }
    }) as usize;
    match worst {
        Some((idx, m)) => {
            let (r, t) = grid.at(idx);
            ResidualCheck {
                pass: m > 0.0,
                worst_margin: m,
                worst_r: r,
                worst_t: t,
                samples: on_piece,
                skipped: total - on_piece,
            }
        }
        None => ResidualCheck {
            pass: true,
            worst_margin: f64::INFINITY,
            worst_r: f64::NAN,
            worst_t: f64::NAN,
            samples: 0,
            skipped: total,
        },
    }
}

fn outcome_from_sweep(name: &str, sweep: ResidualCheck) -> CheckOutcome {
    CheckOutcome {
        name: name.to_string(),
        pass: sweep.pass,
        margin: sweep.worst_margin,
        worst_r: sweep.worst_r,
        worst_t: sweep.worst_t,
        samples: sweep.samples,
        skipped: sweep.skipped,
    }
}

fn min_gap_outcome<F>(name: &str, grid: &SampleGrid, gap: F) -> CheckOutcome
where
    F: Fn(f64, f64) -> f64 + Sync,
{
    let total = grid.len();
    let worst = par::min_indexed(total, |idx| {
        let (r, t) = grid.at(idx);
        gap(r, t)
    });
    let (idx, m) = worst.expect("non-empty grid");
    let (r, t) = grid.at(idx);
    CheckOutcome {
        name: name.to_string(),
        pass: m > 0.0,
        margin: m,
        worst_r: r,
        worst_t: t,
        samples: total,
        skipped: 0,
    }
}

/// Verifies the four-term ordering chain
/// `v⁻ ≤ k′r^{λ′}(1+r)^{λ−λ′} ≤ k r^λ(1+r)^{λ′−λ} ≤ v⁺`
/// at every grid sample. Failures are reported, not thrown.
pub fn check_ordering(params: &BarrierParams, grid: &SampleGrid) -> CertificationReport {
    let lower = min_gap_outcome("ordering_lower", grid, |r, t| {
        lower_envelope(params, r) - sub_profile(params, r, t).value
    });
    let middle = min_gap_outcome("ordering_middle", grid, |r, _t| {
        upper_envelope(params, r) - lower_envelope(params, r)
    });
    let upper = min_gap_outcome("ordering_upper", grid, |r, t| {
        super_profile(params, r, t).value - upper_envelope(params, r)
    });
    CertificationReport::from_checks(vec![lower, middle, upper], grid)
}

/// Relative tolerance for the closed-form matching gaps.
pub const MATCHING_TOL: f64 = 1e-10;

/// Verifies the one-sided derivative inequalities at both gluing radii:
/// the supersolution gap must be `≥ 0`, the subsolution gap `≤ 0`, and
/// both must agree with their closed forms to `MATCHING_TOL` relative.
pub fn check_matching(params: &BarrierParams, t_samples: &[f64]) -> Vec<CheckOutcome> {
    let eval = |side: BarrierSide| -> (CheckOutcome, CheckOutcome) {
        let n = t_samples.len();
        let signed = |i: usize| {
            let gap = matching_gap(params, side, t_samples[i]);
            match side {
                BarrierSide::Super => gap,
                BarrierSide::Sub => -gap,
            }
        };
        let (si, sm) = par::min_indexed(n, signed).expect("non-empty t samples");
        let rel = |i: usize| {
            let gap = matching_gap(params, side, t_samples[i]);
            let closed = match side {
                BarrierSide::Super => super_matching_gap_closed_form(params, t_samples[i]),
                BarrierSide::Sub => sub_matching_gap_closed_form(params, t_samples[i]),
            };
            MATCHING_TOL - (gap - closed).abs() / closed.abs()
        };
        let (ri, rm) = par::min_indexed(n, rel).expect("non-empty t samples");
        let sign_name = format!("matching_{}_sign", side.label());
        let form_name = format!("matching_{}_closed_form", side.label());
        let interface = |t: f64| match side {
            BarrierSide::Super => params.rho(t),
            BarrierSide::Sub => params.sigma,
        };
        (
            CheckOutcome {
                name: sign_name,
                pass: sm >= 0.0,
                margin: sm,
                worst_r: interface(t_samples[si]),
                worst_t: t_samples[si],
                samples: n,
                skipped: 0,
            },
            CheckOutcome {
                name: form_name,
                pass: rm > 0.0,
                margin: rm,
                worst_r: interface(t_samples[ri]),
                worst_t: t_samples[ri],
                samples: n,
                skipped: 0,
            },
        )
    };
    let (s1, s2) = eval(BarrierSide::Super);
    let (b1, b2) = eval(BarrierSide::Sub);
    vec![s1, s2, b1, b2]
}

/// Default absolute residual margin required by `certify`.
pub const RESIDUAL_MARGIN: f64 = 1e-9;

/// Runs the full certification suite: ordering chain, matching gaps and
/// the four per-piece residual sweeps. Passes iff every check passes.
pub fn certify(params: &BarrierParams, grid: &SampleGrid) -> CertificationReport {
    certify_with_margin(params, grid, RESIDUAL_MARGIN)
}

pub fn certify_with_margin(
    params: &BarrierParams,
    grid: &SampleGrid,
    residual_margin: f64,
) -> CertificationReport {
    let mut checks = check_ordering(params, grid).checks;
    checks.extend(check_matching(params, &grid.t));
    for (name, side, piece) in [
        ("residual_super_inner", BarrierSide::Super, Piece::Inner),
        ("residual_super_outer", BarrierSide::Super, Piece::Outer),
        ("residual_sub_inner", BarrierSide::Sub, Piece::Inner),
        ("residual_sub_outer", BarrierSide::Sub, Piece::Outer),
    ] {
        let sweep = residual_sweep(params, grid, side, piece, residual_margin);
        checks.push(outcome_from_sweep(name, sweep));
    }
    CertificationReport::from_checks(checks, grid)
}

/// Per-sample residual table for plotting: `r,t,side,piece,residual` rows.
pub fn residual_csv(params: &BarrierParams, grid: &SampleGrid) -> String {
    let mut out = String::from("r,t,side,piece,residual\n");
    for &t in &grid.t {
        for &r in &grid.r {
            for side in [BarrierSide::Super, BarrierSide::Sub] {
                let res = match side {
                    BarrierSide::Super => residual_super(params, r, t),
                    BarrierSide::Sub => residual_sub(params, r, t),
                };
                if let Ok(v) = res {
                    let piece = profile(params, side, r, t).piece;
                    let piece = match piece {
                        Piece::Inner => "inner",
                        Piece::Outer => "outer",
                    };
                    out.push_str(&format!("{r:.17e},{t:.17e},{},{piece},{v:.17e}\n", side.label()));
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{derive_structural, min_k, validate_exponents, ExponentConfig};
    use proptest::prelude::*;

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
    fn pieces_agree_at_the_super_interface() {
        let p = reference_params();
        for &t in &[0.0, 0.37, 5.0, 99.0] {
            let rho = p.rho(t);
            let inner = super_profile(&p, rho, t).value;
            let outer = super_profile(&p, rho * (1.0 + 1e-14), t).value;
            // Both pieces reduce to K ρ^{λ′} at r = ρ.
            let exact = p.k_scale * rho.powf(p.cfg.lambda_prime);
            assert!((inner - exact).abs() / exact < 1e-12);
            assert!((outer - exact).abs() / exact < 1e-12);
        }
    }

    #[test]
    fn pieces_agree_at_the_sub_interface() {
        let p = reference_params();
        for &t in &[0.0, 1.0, 42.0] {
            let inner = sub_profile(&p, p.sigma, t).value;
            let outer = sub_profile(&p, p.sigma * (1.0 + 1e-14), t).value;
            let exact = (1.0 + p.a_time * t).powf(-0.5) * p.sigma.powf(0.8) / p.k_scale;
            assert!((inner - exact).abs() / exact < 1e-12);
            assert!((outer - exact).abs() / exact < 1e-12);
        }
    }

    #[test]
    fn value_vanishes_at_the_origin() {
        let p = reference_params();
        let sp = super_profile(&p, 0.0, 1.0);
        let sb = sub_profile(&p, 0.0, 1.0);
        assert_eq!(sp.value, 0.0);
        assert_eq!(sb.value, 0.0);
        assert_eq!(sp.d_r, f64::INFINITY);
        assert_eq!(sb.d_r, f64::INFINITY);
    }

    #[test]
    fn super_gap_at_t0_is_k_lambda_sq_over_sum() {
        let p = reference_params();
        let gap = matching_gap(&p, BarrierSide::Super, 0.0);
        let expect = p.k_scale * 0.25 / 1.3;
        assert!((gap - expect).abs() / expect < 1e-12);
    }

    #[test]
    fn super_gap_decays_monotonically_to_zero() {
        let p = reference_params();
        let mut prev = f64::INFINITY;
        for &t in &[0.0, 0.1, 1.0, 10.0, 100.0, 1e4, 1e8] {
            let gap = matching_gap(&p, BarrierSide::Super, t);
            assert!(gap >= 0.0 && gap < prev);
            prev = gap;
        }
        // Exponent θ(λ′−1) ≈ −0.143, so the decay is slow but real.
        assert!(prev < 0.1 * matching_gap(&p, BarrierSide::Super, 0.0));
    }

    #[test]
    fn sub_gap_matches_delta_substituted_form() {
        let p = reference_params();
        for &t in &[0.0, 0.5, 7.0] {
            let gap = matching_gap(&p, BarrierSide::Sub, t);
            let closed = sub_matching_gap_closed_form(&p, t);
            assert!(gap <= 0.0);
            assert!((gap - closed).abs() / closed.abs() < 1e-12);
        }
    }

    #[test]
    fn p_laplacian_of_linear_profile() {
        // f(r) = r: |f′|^{p−2} = 1, bracket = (n−1)/r.
        for n in [2u32, 3, 5] {
            for p in [2.5, 4.0] {
                let v = radial_p_laplacian(1.0, 0.0, 2.0, n, p).unwrap();
                assert!((v - (n - 1) as f64 / 2.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn p_laplacian_p2_recovers_laplacian_of_r_squared() {
        for n in [2u32, 3, 4] {
            let r = 1.7;
            let v = radial_p_laplacian(2.0 * r, 2.0, r, n, 2.0).unwrap();
            assert!((v - 2.0 * n as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn p_laplacian_rejects_nonpositive_radius() {
        assert!(radial_p_laplacian(1.0, 1.0, 0.0, 2, 4.0).is_err());
        assert!(radial_p_laplacian(1.0, 1.0, -1.0, 2, 4.0).is_err());
    }

    #[test]
    fn p_harmonic_profile_is_annihilated() {
        // f(r) = r^{(p−n)/(p−1)} has Δ_p f = 0; the evaluation must stay
        // below 1e−8 in magnitude across r ∈ [1e−3, 1e3].
        for (n, p) in [(2u32, 3.0f64), (2, 4.0), (3, 5.0)] {
            let m = (p - n as f64) / (p - 1.0);
            for r in crate::sample::log_spaced(1e-3, 1e3, 1000) {
                let q = r.powf(m - 2.0);
                let ddf = (m * (m - 1.0)) * q;
                let df = m * (r * q);
                let v = radial_p_laplacian(df, ddf, r, n, p).unwrap();
                assert!(
                    v.abs() <= 1e-8,
                    "n={n} p={p} r={r:.3e}: residual {v:.3e}"
                );
            }
        }
    }

    #[test]
    fn inner_super_residual_dominates_stationary_lower_bound() {
        // With the drift switched off the inner residual is bounded below by
        // K λ^{p−1}((1−λ)(p−1)−(n−1)) (1+At)^{θ(λ′−λ)(p−1)} r^{−(1−λ)(p−1)−1}.
        let mut p = reference_params();
        p.c_xi = 0.0;
        let c = p.cfg;
        for &t in &[0.0, 1.0, 50.0] {
            let rho = p.rho(t);
            for &fr in &[1e-3, 0.1, 0.9] {
                let r = fr * rho;
                let res = residual_super(&p, r, t).unwrap();
                let bound = p.k_scale
                    * c.lambda.powf(c.p - 1.0)
                    * ((1.0 - c.lambda) * (c.p - 1.0) - (c.n - 1) as f64)
                    * (1.0 + p.a_time * t)
                        .powf(p.theta * (c.lambda_prime - c.lambda) * (c.p - 1.0))
                    * r.powf(-(1.0 - c.lambda) * (c.p - 1.0) - 1.0);
                assert!(bound > 0.0);
                assert!(res >= bound * (1.0 - 1e-12));
            }
        }
    }

    #[test]
    fn residuals_cross_check_against_finite_differences() {
        // ∂_t by centered differences of values, Δ_p by centered
        // differences of the radial flux r^{n−1}|∂_r v|^{p−2}∂_r v.
        let p = reference_params();
        let cases = [
            (BarrierSide::Super, p.rho(0.0) * 0.5, 0.0),
            (BarrierSide::Super, p.rho(1.0) * 3.0, 1.0),
            (BarrierSide::Sub, p.sigma * 0.5, 1.0),
            (BarrierSide::Sub, p.sigma * 2.0, 0.0),
        ];
        for (side, r, t) in cases {
            let n1 = (p.cfg.n - 1) as f64;
            let flux = |rr: f64| {
                let pr = profile(&p, side, rr, t);
                rr.powf(n1) * pr.d_r.abs().powf(p.cfg.p - 2.0) * pr.d_r
            };
            let hr = 1e-6 * r;
            let lap_fd = (flux(r + hr) - flux(r - hr)) / (2.0 * hr) * r.powf(-n1);
            let ht = 1e-7 * (1.0 + t);
            let dt_fd = if t >= ht {
                (profile(&p, side, r, t + ht).value - profile(&p, side, r, t - ht).value)
                    / (2.0 * ht)
            } else {
                // Second-order one-sided stencil at the t = 0 boundary.
                (-3.0 * profile(&p, side, r, t).value + 4.0 * profile(&p, side, r, t + ht).value
                    - profile(&p, side, r, t + 2.0 * ht).value)
                    / (2.0 * ht)
            };
            let drift = p.drift_bound(t) * profile(&p, side, r, t).d_r.abs();
            let fd_res = match side {
                BarrierSide::Super => dt_fd - lap_fd - drift,
                BarrierSide::Sub => dt_fd - lap_fd + drift,
            };
            let res = match side {
                BarrierSide::Super => residual_super(&p, r, t).unwrap(),
                BarrierSide::Sub => residual_sub(&p, r, t).unwrap(),
            };
            let scale = res.abs().max(fd_res.abs());
            assert!(
                (res - fd_res).abs() / scale < 1e-5,
                "{side:?} at (r={r}, t={t}): analytic {res:.8e} vs fd {fd_res:.8e}"
            );
            // Tuned parameters give the certified signs.
            match side {
                BarrierSide::Super => assert!(res > 0.0),
                BarrierSide::Sub => assert!(res < 0.0),
            }
        }
    }

    #[test]
    fn super_residual_positive_far_out_at_late_time() {
        let p = reference_params();
        assert!(residual_super(&p, 1e3, 1e2).unwrap() >= 0.0);
    }

    #[test]
    fn sub_inner_diffusion_pushes_residual_negative() {
        // (n−1) − (1−λ′)(p−1) > 0 makes Δ_p v⁻_in > 0 on the inner piece.
        let p = reference_params();
        let c = p.cfg;
        assert!((c.n - 1) as f64 - (1.0 - c.lambda_prime) * (c.p - 1.0) > 0.0);
        let pr = sub_profile(&p, p.sigma * 0.5, 1.0);
        let lap = radial_p_laplacian(pr.d_r, pr.d_rr, p.sigma * 0.5, c.n, c.p).unwrap();
        assert!(lap > 0.0);
    }

    #[test]
    fn sub_outer_sign_flips_with_small_a() {
        let p = reference_params();
        let r = 2.0 * p.sigma;
        assert!(residual_sub(&p, r, 0.0).unwrap() < 0.0);
        let mut weak = p;
        weak.a_time = 2.0;
        assert!(residual_sub(&weak, r, 0.0).unwrap() > 0.0);
    }

    #[test]
    fn interface_band_is_rejected() {
        let p = reference_params();
        let rho = p.rho(1.0);
        assert!(matches!(
            residual_super(&p, rho * (1.0 + 1e-12), 1.0),
            Err(BarrierError::InterfacePoint { .. })
        ));
        assert!(residual_super(&p, rho * 1.01, 1.0).is_ok());
        assert!(matches!(
            residual_sub(&p, p.sigma, 1.0),
            Err(BarrierError::InterfacePoint { .. })
        ));
    }

    #[test]
    fn ordering_middle_reduces_to_envelope_constant_inequality() {
        // k′(r/(1+r))^{λ′−λ} ≤ k for every r once k > k′.
        let p = reference_params();
        for r in crate::sample::log_spaced(1e-6, 1e6, 200) {
            assert!(lower_envelope(&p, r) <= upper_envelope(&p, r));
        }
    }

    #[test]
    fn ordering_gaps_positive_at_unit_radius() {
        let p = reference_params();
        let (r, t) = (1.0, 0.0);
        assert!(sub_profile(&p, r, t).value < lower_envelope(&p, r));
        assert!(lower_envelope(&p, r) < upper_envelope(&p, r));
        assert!(upper_envelope(&p, r) < super_profile(&p, r, t).value);
    }

    #[test]
    fn corrupted_k_fails_ordering() {
        let mut p = reference_params();
        p.k_scale = p.cfg.k / 2.0;
        let grid = SampleGrid::new(1e-4, 1e3, 100, 1e-3, 100.0, 20);
        let report = check_ordering(&p, &grid);
        assert!(!report.pass);
        let failed: Vec<_> = report.checks.iter().filter(|c| !c.pass).collect();
        assert!(!failed.is_empty());
        // The upper ordering check loses worst at an extreme radius, where
        // the deficient K is squeezed hardest against the envelope.
        let upper = report.checks.iter().find(|c| c.name == "ordering_upper").unwrap();
        assert!(!upper.pass);
        assert!(upper.worst_r < 1e-2 || upper.worst_r > 1e2);
    }

    #[test]
    fn drift_free_residual_dominates_drifted() {
        let p = reference_params();
        let mut free = p;
        free.c_xi = 0.0;
        let grid = SampleGrid::new(1e-3, 1e2, 40, 1e-2, 10.0, 10);
        for &t in &grid.t {
            for &r in &grid.r {
                if let (Ok(a), Ok(b)) = (residual_super(&free, r, t), residual_super(&p, r, t)) {
                    assert!(a >= b);
                }
            }
        }
    }

    #[test]
    fn time_monotonicity_of_barrier_values() {
        let p = reference_params();
        let times: Vec<f64> = (0..50).map(|i| 0.1 * i as f64).collect();
        for r in crate::sample::log_spaced(1e-3, 1e2, 30) {
            for w in times.windows(2) {
                let s0 = super_profile(&p, r, w[0]).value;
                let s1 = super_profile(&p, r, w[1]).value;
                assert!(s1 >= s0 * (1.0 - 1e-13));
                let b0 = sub_profile(&p, r, w[0]).value;
                let b1 = sub_profile(&p, r, w[1]).value;
                assert!(b1 <= b0 * (1.0 + 1e-13));
            }
        }
    }

    proptest! {
        #[test]
        fn interface_continuity_random_times(ts in prop::collection::vec(0.0f64..100.0, 100)) {
            let p = reference_params();
            for t in ts {
                for side in [BarrierSide::Super, BarrierSide::Sub] {
                    let interface = match side {
                        BarrierSide::Super => p.rho(t),
                        BarrierSide::Sub => p.sigma,
                    };
                    let inner = profile(&p, side, interface, t).value;
                    let outer = profile(&p, side, interface * (1.0 + 4.0 * INTERFACE_EPS), t).value;
                    let rel = (inner - outer).abs() / (inner.abs() + outer.abs());
                    prop_assert!(rel <= 1e-9 + 4.0 * INTERFACE_EPS);
                }
            }
        }
    }
}
