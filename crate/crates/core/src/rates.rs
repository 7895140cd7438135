//! Theoretical convergence-rate formulas and empirical log-log rate fits.
//!
//! All exponents are reported without the `δ`-loss that accompanies them in
//! the theory (the constants are non-constructive), and empirical
//! comparisons are one-sided: measured decay is compared against predicted
//! decay, never asserted equal.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RateError {
    #[error("rate formulas require p > 2, got {0}")]
    Range(f64),
    #[error("gamma must lie in (0, 1/2), got {0}")]
    GammaRange(f64),
    #[error("need at least 3 positive (scale, distance) pairs, got {0}")]
    InsufficientData(usize),
}

/// `p* = (11 + √73)/4 ≈ 4.886`, where the homogenization bound switches
/// branch.
pub fn p_star() -> f64 {
    (11.0 + 73f64.sqrt()) / 4.0
}

/// `γ* = (11 − √73)/12 ≈ 0.2046`, the LSV parameter corresponding to `p*`.
pub fn gamma_star() -> f64 {
    (11.0 - 73f64.sqrt()) / 12.0
}

/// WIP rate exponent `r(p) = (p − 2)/(4p)` for order-`p` maps, `p > 2`.
pub fn r_wip(p: f64) -> Result<f64, RateError> {
    if p <= 2.0 {
        return Err(RateError::Range(p));
    }
    Ok((p - 2.0) / (4.0 * p))
}

/// Supremum of `r(p)` as `p → ∞`.
pub const R_WIP_SUP: f64 = 0.25;

/// The sharper martingale-part exponent
///
/// ```text
/// r₁(p) = (p−2)/(2p+2)  for 2 < p ≤ 7/2
///         (p−2)/(4p−5)  for 7/2 ≤ p < 4
///         (p−2)/(4p−6)  for p ≥ 4
/// ```
///
/// Continuous at `p = 7/2`; at `p = 4` the underlying moment-exponent
/// choice jumps, so the formula has a genuine (upward) jump there:
/// the left limit is `2/11`, the value is `2/10`. In all cases
/// `r₁(p) > r(p)`.
pub fn r1_wip(p: f64) -> Result<f64, RateError> {
    if p <= 2.0 {
        return Err(RateError::Range(p));
    }
    let r1 = if p <= 3.5 {
        (p - 2.0) / (2.0 * p + 2.0)
    } else if p < 4.0 {
        (p - 2.0) / (4.0 * p - 5.0)
    } else {
        (p - 2.0) / (4.0 * p - 6.0)
    };
    debug_assert!(r1 > (p - 2.0) / (4.0 * p));
    Ok(r1)
}

/// Homogenization rate: exponent of `ε` and the power of `(−log ε)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomogRate {
    pub exponent: f64,
    pub log_power: f64,
}

/// Fast-slow convergence exponent for order-`p` maps:
/// `(p−2)/(2p)` for `p ≤ p*`, else `(1/3)(2p−2)/(2p−1)` with a
/// `(−log ε)^{(p−1)/2}` factor.
pub fn r_homog(p: f64) -> Result<HomogRate, RateError> {
    if p <= 2.0 {
        return Err(RateError::Range(p));
    }
    Ok(if p <= p_star() {
        HomogRate { exponent: (p - 2.0) / (2.0 * p), log_power: 0.0 }
    } else {
        HomogRate {
            exponent: (2.0 * p - 2.0) / (3.0 * (2.0 * p - 1.0)),
            log_power: 0.5 * (p - 1.0),
        }
    })
}

/// Rate summary for the LSV family at parameter `γ ∈ (0, 1/2)` (order
/// supremum `p = 1/γ`). The `δ`-losses are reported symbolically in the
/// docs, never subtracted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LsvRates {
    /// WIP exponent `(1 − 2γ)/4`.
    pub wip_exponent: f64,
    /// Homogenization exponent: `(1 − 2γ)/2` for `γ ≥ γ*`, else
    /// `(1/3)(2 − 2γ)/(2 − γ)`.
    pub homog_exponent: f64,
    /// Whether the homogenization bound is free of the log factor
    /// (`γ ≥ γ*`).
    pub homog_log_free: bool,
}

pub fn lsv_rates(gamma: f64) -> Result<LsvRates, RateError> {
    if !(0.0..0.5).contains(&gamma) || gamma == 0.0 {
        return Err(RateError::GammaRange(gamma));
    }
    let log_free = gamma >= gamma_star();
    Ok(LsvRates {
        wip_exponent: (1.0 - 2.0 * gamma) / 4.0,
        homog_exponent: if log_free {
            (1.0 - 2.0 * gamma) / 2.0
        } else {
            (2.0 - 2.0 * gamma) / (3.0 * (2.0 - gamma))
        },
        homog_log_free: log_free,
    })
}

/// Ordinary least squares on `(log scale, log distance)`.
#[derive(Debug, Clone)]
pub struct RateFit {
    /// `(scale, distance)` pairs used (positive distances only).
    pub pairs: Vec<(f64, f64)>,
    /// Slope of log distance against log scale; decaying distances give a
    /// negative slope.
    pub slope: f64,
    pub intercept: f64,
    /// Coefficient of determination.
    pub r2: f64,
    /// Non-positive distances dropped before fitting.
    pub dropped: usize,
}

/// Fit a power law through positive `(scale, distance)` pairs; zero or
/// negative distances are dropped (reported in [`RateFit::dropped`]).
pub fn fit_rate(pairs: &[(f64, f64)]) -> Result<RateFit, RateError> {
    let kept: Vec<(f64, f64)> = pairs.iter().copied().filter(|&(s, d)| s > 0.0 && d > 0.0).collect();
    let dropped = pairs.len() - kept.len();
    if kept.len() < 3 {
        return Err(RateError::InsufficientData(kept.len()));
    }
    let n = kept.len() as f64;
    let xs: Vec<f64> = kept.iter().map(|&(s, _)| s.ln()).collect();
    let ys: Vec<f64> = kept.iter().map(|&(_, d)| d.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok(RateFit { pairs: kept, slope, intercept, r2, dropped })
}
