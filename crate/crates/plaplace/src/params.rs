//! Exponent hypotheses and the derived barrier constants.
//!
//! The admissible exponent window is
//!
//! ```text
//! n ≥ 2,  p > n,  0 < λ < (p−n)/(p−1) < λ′ < 1,  k > k′ > 0,
//! ```
//!
//! and from a validated configuration the structural constants follow:
//! `R = λ′/λ`, `θ = 1/(p−1−(p−2)λ′)`, `δ = σ(2λ′−λ)/(2λ′)` and the outer
//! subsolution coefficient `b = σ^{λ′}(σ−δ)^{−λ}`. The scale `K` must
//! strictly exceed a five-term maximum; the drift bound `C_ξ`, the inner
//! interface `σ` and the time scale `A` are fixed by a staged search that
//! is gated on the residual certification sweeps.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::barriers::{self, BarrierSide, Piece};
use crate::sample::SampleGrid;

/// Inputs of the construction: dimension, diffusion exponent, the growth
/// exponent pair and the initial-data envelope constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentConfig {
    /// Space dimension, at least 2.
    pub n: u32,
    /// Diffusion exponent, `p > n`.
    pub p: f64,
    /// Growth exponent of the upper envelope near the singularity.
    pub lambda: f64,
    /// Growth exponent of the lower envelope, `λ < λ′ < 1`.
    pub lambda_prime: f64,
    /// Upper envelope constant.
    pub k: f64,
    /// Lower envelope constant, `0 < k′ < k`.
    pub k_prime: f64,
}

/// An `ExponentConfig` that passed `validate_exponents`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidatedConfig(ExponentConfig);

impl ValidatedConfig {
    pub fn get(&self) -> &ExponentConfig {
        &self.0
    }

    /// The critical exponent `(p−n)/(p−1)` separating λ from λ′.
    pub fn critical_exponent(&self) -> f64 {
        (self.0.p - self.0.n as f64) / (self.0.p - 1.0)
    }
}

#[derive(Debug, Error)]
pub enum ParamError {
    /// A hypothesis on the exponents fails; the message names the
    /// violated inequality.
    #[error("exponent violation: {0}")]
    ExponentViolation(String),
    /// A derived constant falls outside its admissible range.
    #[error("constraint violation: {0}")]
    ConstraintViolation(String),
    /// The staged constant search exhausted its budget.
    #[error("tuning failed at check `{check}`: {detail}")]
    TuneFailure { check: String, detail: String },
}

/// Checks every hypothesis on the raw inputs and certifies the config.
pub fn validate_exponents(cfg: ExponentConfig) -> Result<ValidatedConfig, ParamError> {
    let ExponentConfig {
        n,
        p,
        lambda,
        lambda_prime,
        k,
        k_prime,
    } = cfg;
    for (name, v) in [
        ("p", p),
        ("lambda", lambda),
        ("lambda_prime", lambda_prime),
        ("k", k),
        ("k_prime", k_prime),
    ] {
        if !v.is_finite() {
            return Err(ParamError::ExponentViolation(format!(
                "{name} must be finite, got {v}"
            )));
        }
    }
    if n < 2 {
        return Err(ParamError::ExponentViolation(format!(
            "n >= 2 required, got n = {n}"
        )));
    }
    if p <= n as f64 {
        return Err(ParamError::ExponentViolation(format!(
            "p > n required, got p = {p}, n = {n}"
        )));
    }
    let crit = (p - n as f64) / (p - 1.0);
    if lambda <= 0.0 {
        return Err(ParamError::ExponentViolation(format!(
            "lambda > 0 required, got lambda = {lambda}"
        )));
    }
    if lambda >= crit {
        return Err(ParamError::ExponentViolation(format!(
            "lambda < (p-n)/(p-1) = {crit} required, got lambda = {lambda}"
        )));
    }
    if lambda_prime <= crit {
        return Err(ParamError::ExponentViolation(format!(
            "lambda_prime > (p-n)/(p-1) = {crit} required, got lambda_prime = {lambda_prime}"
        )));
    }
    if lambda_prime >= 1.0 {
        return Err(ParamError::ExponentViolation(format!(
            "lambda_prime < 1 required, got lambda_prime = {lambda_prime}"
        )));
    }
    if k_prime <= 0.0 {
        return Err(ParamError::ExponentViolation(format!(
            "k' > 0 required, got k' = {k_prime}"
        )));
    }
    if k <= k_prime {
        return Err(ParamError::ExponentViolation(format!(
            "k > k' required, got k = {k}, k' = {k_prime}"
        )));
    }
    Ok(ValidatedConfig(cfg))
}

/// The five-term lower bound on the barrier scale `K`:
///
/// ```text
/// max{ 1, 2^{λ′−λ} k, (1+λ′/λ)^{λ′} k, 2^{λ′−λ}/k′, (2λ′/λ)^λ · 2^{λ′−λ}/k′ }
/// ```
///
/// Callers must choose `K` strictly above the returned value.
pub fn min_k(cfg: &ValidatedConfig) -> f64 {
    let c = cfg.get();
    let gap = c.lambda_prime - c.lambda;
    let terms = [
        1.0,
        2f64.powf(gap) * c.k,
        (1.0 + c.lambda_prime / c.lambda).powf(c.lambda_prime) * c.k,
        2f64.powf(gap) / c.k_prime,
        (2.0 * c.lambda_prime / c.lambda).powf(c.lambda) * 2f64.powf(gap) / c.k_prime,
    ];
    terms.into_iter().fold(f64::NEG_INFINITY, f64::max)
}

/// The full constant set defining the barrier pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarrierParams {
    pub cfg: ExponentConfig,
    /// Barrier scale, strictly above `min_k`.
    pub k_scale: f64,
    /// Time scale in `(1+At)`, above 1.
    pub a_time: f64,
    /// Drift bound: admissible curves satisfy `|ξ′(t)| ≤ C_ξ (1+At)^{−1}`.
    pub c_xi: f64,
    /// Interface radius of the subsolution, in (0,1).
    pub sigma: f64,
    /// Offset of the outer subsolution piece, `δ = σ(2λ′−λ)/(2λ′)`.
    pub delta: f64,
    /// Interface slope ratio `R = λ′/λ`.
    pub r_ratio: f64,
    /// Supersolution time exponent `θ = 1/(p−1−(p−2)λ′)`.
    pub theta: f64,
    /// Outer subsolution coefficient `b = σ^{λ′}(σ−δ)^{−λ}`.
    pub b_coeff: f64,
}

impl BarrierParams {
    /// Supersolution interface radius `ρ(t) = (1+At)^θ`.
    pub fn rho(&self, t: f64) -> f64 {
        (1.0 + self.a_time * t).powf(self.theta)
    }

    /// The admissible drift magnitude `C_ξ (1+At)^{−1}` at time `t`.
    pub fn drift_bound(&self, t: f64) -> f64 {
        self.c_xi / (1.0 + self.a_time * t)
    }
}

/// Computes the structural constants from `(cfg, σ, K, C_ξ, A)` and
/// validates every range constraint.
pub fn derive_structural(
    cfg: &ValidatedConfig,
    sigma: f64,
    k_scale: f64,
    c_xi: f64,
    a_time: f64,
) -> Result<BarrierParams, ParamError> {
    let c = *cfg.get();
    let kmin = min_k(cfg);
    if !(k_scale > kmin) {
        return Err(ParamError::ConstraintViolation(format!(
            "K > {kmin} required, got K = {k_scale}"
        )));
    }
    if !(sigma > 0.0 && sigma < 1.0) {
        return Err(ParamError::ConstraintViolation(format!(
            "0 < sigma < 1 required, got sigma = {sigma}"
        )));
    }
    if !(c_xi > 0.0 && c_xi < 1.0) {
        return Err(ParamError::ConstraintViolation(format!(
            "0 < c_xi < 1 required, got c_xi = {c_xi}"
        )));
    }
    if !(a_time > 1.0) {
        return Err(ParamError::ConstraintViolation(format!(
            "A > 1 required, got A = {a_time}"
        )));
    }
    let r_ratio = c.lambda_prime / c.lambda;
    let theta = 1.0 / (c.p - 1.0 - (c.p - 2.0) * c.lambda_prime);
    let delta = (2.0 * c.lambda_prime - c.lambda) / (2.0 * c.lambda_prime) * sigma;
    let b_coeff = sigma.powf(c.lambda_prime) * (sigma - delta).powf(-c.lambda);
    if !(r_ratio > 1.0) {
        return Err(ParamError::ConstraintViolation(format!(
            "R = lambda'/lambda > 1 required, got R = {r_ratio}"
        )));
    }
    if !(theta > 0.0) {
        return Err(ParamError::ConstraintViolation(format!(
            "theta > 0 required, got theta = {theta}"
        )));
    }
    if !(delta > 0.0 && delta < sigma) {
        return Err(ParamError::ConstraintViolation(format!(
            "0 < delta < sigma required, got delta = {delta}, sigma = {sigma}"
        )));
    }
    Ok(BarrierParams {
        cfg: c,
        k_scale,
        a_time,
        c_xi,
        sigma,
        delta,
        r_ratio,
        theta,
        b_coeff,
    })
}

/// Budgets, seeds and overrides for the staged constant search.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchOptions {
    /// `K = k_margin · min_k`; must exceed 1.
    pub k_margin: f64,
    /// Starting drift bound; halved until the supersolution checks pass.
    pub c_xi_init: f64,
    /// Starting interface; halved until the inner subsolution check passes.
    pub sigma_init: f64,
    /// Starting time scale; doubled until both outer checks pass.
    pub a_init: f64,
    /// Fix `C_ξ` instead of searching.
    pub c_xi_override: Option<f64>,
    /// Fix `σ` instead of searching.
    pub sigma_override: Option<f64>,
    /// Fix `A` instead of searching.
    pub a_override: Option<f64>,
    /// Halving budget for `C_ξ`.
    pub c_xi_budget: u32,
    /// Halving budget for `σ`.
    pub sigma_budget: u32,
    /// Doubling budget for `A`.
    pub a_budget: u32,
    /// Residuals must clear this absolute margin to count as passing.
    pub residual_margin: f64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            k_margin: 1.05,
            c_xi_init: 0.5,
            sigma_init: 0.5,
            a_init: 2.0,
            c_xi_override: None,
            sigma_override: None,
            a_override: None,
            c_xi_budget: 60,
            sigma_budget: 40,
            a_budget: 60,
            residual_margin: 1e-9,
        }
    }
}

fn stage_failure(check: &str, budget: u32, last: &barriers::ResidualCheck) -> ParamError {
    ParamError::TuneFailure {
        check: check.to_string(),
        detail: format!(
            "budget of {budget} steps exhausted; worst margin {:.6e} at (r, t) = ({:.6e}, {:.6e})",
            last.worst_margin, last.worst_r, last.worst_t
        ),
    }
}

/// Staged search for `(C_ξ, σ, A)` at fixed `K = k_margin · min_k`:
/// `C_ξ` is halved until both supersolution residual sweeps pass, then `σ`
/// is halved until the inner subsolution sweep passes, then `A` is doubled
/// until both outer sweeps pass. `A` enters the earlier checks as well but
/// only helps them; a full certification re-run at the end guards this.
/// The search is deterministic: identical inputs give identical outputs.
pub fn tune_constants(
    cfg: &ValidatedConfig,
    grid: &SampleGrid,
    search: &SearchOptions,
) -> Result<BarrierParams, ParamError> {
    if !(search.k_margin > 1.0) {
        return Err(ParamError::ConstraintViolation(format!(
            "k_margin > 1 required, got {}",
            search.k_margin
        )));
    }
    let k_scale = search.k_margin * min_k(cfg);
    let margin = search.residual_margin;
    let mut c_xi = search.c_xi_override.unwrap_or(search.c_xi_init);
    let mut sigma = search.sigma_override.unwrap_or(search.sigma_init);
    let mut a_time = search.a_override.unwrap_or(search.a_init);

    let make = |sigma: f64, c_xi: f64, a_time: f64| derive_structural(cfg, sigma, k_scale, c_xi, a_time);

    // Stage 1: drift bound, gated on both supersolution sweeps.
    let mut stage1 = None;
    for step in 0..=search.c_xi_budget {
        let params = make(sigma, c_xi, a_time)?;
        let inner = barriers::residual_sweep(&params, grid, BarrierSide::Super, Piece::Inner, margin);
        let outer = barriers::residual_sweep(&params, grid, BarrierSide::Super, Piece::Outer, margin);
        if inner.pass && outer.pass {
            stage1 = None;
            break;
        }
        stage1 = Some(if inner.pass { outer } else { inner });
        if search.c_xi_override.is_some() || step == search.c_xi_budget {
            break;
        }
        c_xi *= 0.5;
    }
    if let Some(last) = stage1 {
        return Err(stage_failure("residual_super", search.c_xi_budget, &last));
    }

    // Stage 2: inner interface, gated on the inner subsolution sweep.
    let mut stage2 = None;
    for step in 0..=search.sigma_budget {
        let params = make(sigma, c_xi, a_time)?;
        let inner = barriers::residual_sweep(&params, grid, BarrierSide::Sub, Piece::Inner, margin);
        if inner.pass {
            stage2 = None;
            break;
        }
        stage2 = Some(inner);
        if search.sigma_override.is_some() || step == search.sigma_budget {
            break;
        }
        sigma *= 0.5;
    }
    if let Some(last) = stage2 {
        return Err(stage_failure("residual_sub_inner", search.sigma_budget, &last));
    }

    // Stage 3: time scale, gated on both outer sweeps.
    let mut stage3 = None;
    for step in 0..=search.a_budget {
        let params = make(sigma, c_xi, a_time)?;
        let sub_outer = barriers::residual_sweep(&params, grid, BarrierSide::Sub, Piece::Outer, margin);
        let super_outer =
            barriers::residual_sweep(&params, grid, BarrierSide::Super, Piece::Outer, margin);
        if sub_outer.pass && super_outer.pass {
            stage3 = None;
            break;
        }
        stage3 = Some(if sub_outer.pass { super_outer } else { sub_outer });
        if search.a_override.is_some() || step == search.a_budget {
            break;
        }
        a_time *= 2.0;
    }
    if let Some(last) = stage3 {
        return Err(stage_failure("residual_outer", search.a_budget, &last));
    }

    // Final guard: every check with the final constant set.
    let params = make(sigma, c_xi, a_time)?;
    let report = barriers::certify(&params, grid);
    if !report.pass {
        let failed = report
            .checks
            .iter()
            .find(|c| !c.pass)
            .map(|c| c.name.clone())
            .unwrap_or_else(|| "unknown".to_string());
        return Err(ParamError::TuneFailure {
            check: failed,
            detail: "final re-certification with the tuned constants failed".to_string(),
        });
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn reference_config() -> ExponentConfig {
        ExponentConfig {
            n: 2,
            p: 4.0,
            lambda: 0.5,
            lambda_prime: 0.8,
            k: 2.0,
            k_prime: 1.0,
        }
    }

    #[test]
    fn reference_config_is_valid() {
        // (p−n)/(p−1) = 2/3 sits strictly between λ = 0.5 and λ′ = 0.8.
        let v = validate_exponents(reference_config()).unwrap();
        assert_eq!(v.critical_exponent(), 2.0 / 3.0);
    }

    #[test]
    fn boundary_lambda_is_rejected() {
        let mut cfg = reference_config();
        cfg.lambda = 2.0 / 3.0; // exactly the critical exponent
        let err = validate_exponents(cfg).unwrap_err();
        assert!(matches!(err, ParamError::ExponentViolation(_)));
        assert!(err.to_string().contains("lambda <"));
    }

    #[test]
    fn p_below_n_is_rejected() {
        let cfg = ExponentConfig {
            n: 3,
            p: 2.5,
            ..reference_config()
        };
        let err = validate_exponents(cfg).unwrap_err();
        assert!(err.to_string().contains("p > n"));
    }

    #[test]
    fn k_equal_k_prime_is_rejected() {
        let mut cfg = reference_config();
        cfg.k_prime = cfg.k;
        assert!(validate_exponents(cfg).is_err());
    }

    #[test]
    fn min_k_matches_literal_five_terms() {
        let cfg = validate_exponents(reference_config()).unwrap();
        let c = *cfg.get();
        let expect = [
            1.0,
            2f64.powf(0.3) * c.k,
            2.6f64.powf(0.8) * c.k,
            2f64.powf(0.3) / c.k_prime,
            3.2f64.powf(0.5) * 2f64.powf(0.3) / c.k_prime,
        ]
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(min_k(&cfg), expect);
    }

    #[test]
    fn min_k_is_continuous_in_the_degenerate_limit() {
        // λ = λ′ − ε (straddling the critical exponent) and k = k′ + ε:
        // the five terms tend continuously to
        // max{1, k′, 2^c k′, 1/k′, 2^c/k′} with c = (p−n)/(p−1).
        let crit = 2.0 / 3.0;
        let kp = 2.0;
        let limit = [
            1.0,
            kp,
            2.0f64.powf(crit) * kp,
            1.0 / kp,
            2.0f64.powf(crit) / kp,
        ]
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
        let mut prev_gap = f64::INFINITY;
        for &eps in &[1e-2, 1e-4, 1e-6] {
            let cfg = validate_exponents(ExponentConfig {
                n: 2,
                p: 4.0,
                lambda: crit - eps / 2.0,
                lambda_prime: crit + eps / 2.0,
                k: kp + eps,
                k_prime: kp,
            })
            .unwrap();
            let gap = (min_k(&cfg) - limit).abs();
            assert!(gap < prev_gap || gap < 1e-12);
            prev_gap = gap;
        }
        assert!(prev_gap < 1e-4);
    }

    #[test]
    fn structural_constants_match_closed_forms() {
        let cfg = validate_exponents(reference_config()).unwrap();
        let p = derive_structural(&cfg, 0.1, 1.05 * min_k(&cfg), 0.5, 2.0).unwrap();
        assert!((p.r_ratio - 1.6).abs() < 1e-15);
        assert!((p.theta - 1.0 / 1.4).abs() < 1e-15);
        assert!((p.delta - 1.1 / 1.6 * 0.1).abs() < 1e-15);
        // b = σ^{λ′}(σ−δ)^{−λ}
        let b = 0.1f64.powf(0.8) * (0.1 - p.delta).powf(-0.5);
        assert!((p.b_coeff - b).abs() / b < 1e-15);
    }

    #[test]
    fn theta_is_positive_for_any_valid_config() {
        // p−1−(p−2)λ′ > p−1−(p−2) = 1 whenever λ′ < 1.
        for lp in [0.67, 0.8, 0.9, 0.999_999] {
            let cfg = validate_exponents(ExponentConfig {
                lambda_prime: lp,
                ..reference_config()
            })
            .unwrap();
            let p = derive_structural(&cfg, 0.25, 1.05 * min_k(&cfg), 0.5, 2.0).unwrap();
            assert!(p.theta > 0.0 && p.theta < 1.0 + 1e-12);
        }
    }

    #[test]
    fn derive_rejects_k_at_or_below_minimum() {
        let cfg = validate_exponents(reference_config()).unwrap();
        let km = min_k(&cfg);
        assert!(derive_structural(&cfg, 0.1, km, 0.5, 2.0).is_err());
        assert!(derive_structural(&cfg, 0.1, 0.9 * km, 0.5, 2.0).is_err());
    }

    proptest! {
        // min_k is nondecreasing in k and nonincreasing in k′.
        #[test]
        fn min_k_monotone_in_envelope_constants(
            k1 in 0.2f64..5.0,
            dk in 0.0f64..5.0,
            kp in 0.05f64..0.15,
        ) {
            let base = ExponentConfig { k: k1, k_prime: kp, ..reference_config() };
            let cfg1 = validate_exponents(base).unwrap();
            let cfg2 = validate_exponents(ExponentConfig { k: k1 + dk, ..base }).unwrap();
            prop_assert!(min_k(&cfg2) >= min_k(&cfg1));
            let cfg3 = validate_exponents(ExponentConfig { k_prime: kp * 0.5, ..base }).unwrap();
            prop_assert!(min_k(&cfg3) >= min_k(&cfg1));
        }
    }
}
