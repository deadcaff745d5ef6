//! Closed-form capacity bounds for the OWPN channel and the entropy and
//! moment inequalities they are built from. Everything is in nats.

use std::f64::consts::{E, PI, TAU};

use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{Error, Result};
use crate::model::{derive_constants, ChannelParams, RateSplit, EULER_GAMMA};
use crate::riccati;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundKind {
    UpperOuter,
    LowerPartiallyCoherent,
    LowerCoherentCombining,
}

/// Marks results that were not obtained by plain evaluation of the formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LimitTag {
    /// `sigma2 = 0`: the phase summand of the outer bound diverges and the
    /// `ln(P + 2)` branch is returned.
    SigmaZeroLimit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundResult {
    pub kind: BoundKind,
    pub rate_split: RateSplit,
    pub params: ChannelParams,
    pub limit: Option<LimitTag>,
}

impl BoundResult {
    #[inline]
    pub fn total(&self) -> f64 {
        self.rate_split.clamped_total
    }
}

#[inline]
fn pos(x: f64) -> f64 {
    x.max(0.0)
}

/// Outer bound
/// `min{ ln(P+2), 1/2 ln(P+1) + [1/2 ln(2pi/e) + 1/2 ln(A)]^+ }`
/// with `A = 1/2 sqrt(P^2/L^2 + 4P/sigma2) - P/(2L)`.
///
/// The split reports `1/2 ln(P+1)` as the amplitude rate. When the
/// `ln(P+2)` branch is the smaller one, the phase rate is reduced to
/// `ln(P+2) - 1/2 ln(P+1)` so the two parts still add up to the bound;
/// [`riccati::phase_rate_upper`] gives the unreduced phase summand.
pub fn upper_outer(params: &ChannelParams) -> BoundResult {
    let p = params.power();
    let amplitude = 0.5 * p.ln_1p();
    let first_branch = (p + 2.0).ln();
    let (phase, limit) = if p == 0.0 {
        (0.0, None)
    } else if params.sigma2() == 0.0 {
        (f64::INFINITY, Some(LimitTag::SigmaZeroLimit))
    } else {
        (riccati::outer_phase_summand(params), None)
    };
    let phase = phase.min(first_branch - amplitude);
    BoundResult {
        kind: BoundKind::UpperOuter,
        rate_split: RateSplit::new(amplitude, phase),
        params: *params,
        limit,
    }
}

/// Partially-coherent combining inner bound.
///
/// Amplitude term `1/2 ln((e^2 (P+2)^2 + 8 pi (L-1)) / (8 pi e (L+P)))`,
/// kept unclamped; phase term
/// `1/2 [ln(2pi/e^(1+gamma) * P L / (sigma2 P + pi^2 L^2))]^+`, zero at `P = 0`.
pub fn lower_partially_coherent(params: &ChannelParams) -> BoundResult {
    let p = params.power();
    let l = params.l();
    let amplitude = pc_amplitude(p, l);
    let phase = if p == 0.0 {
        0.0
    } else {
        // P L / (sigma2 P + pi^2 L^2) = P / (sigma2 P / L + pi^2 L)
        let ratio = p / (params.sigma2() * p / l + PI * PI * l);
        0.5 * pos((TAU / (1.0 + EULER_GAMMA).exp() * ratio).ln())
    };
    BoundResult {
        kind: BoundKind::LowerPartiallyCoherent,
        rate_split: RateSplit::new(amplitude, phase),
        params: *params,
        limit: None,
    }
}

fn pc_amplitude(p: f64, l: f64) -> f64 {
    // Written as a difference of logs so that L near 2^62 does not overflow.
    let num = E * E * (p + 2.0) * (p + 2.0) + 8.0 * PI * (l - 1.0);
    0.5 * (num.ln() - (8.0 * PI * E).ln() - (l + p).ln())
}

/// Coherent combining inner bound with `kappa`, `phi` from
/// [`derive_constants`].
///
/// Amplitude:
/// `[[ln(phi^2/3) + ln(P/2+1)]^+ + 1/2 ln(e/pi) - 1/2 ln(2(1+P phi) + P^2 (1-phi^2))]^+`.
/// Phase (unclamped):
/// `1/2 ln(2pi/e^(1+gamma)) + 1/2 ln(2LP / (2 sigma2 P + pi^2 (1-kappa) L P + 6 pi^2 L phi^(-3/2)))`.
pub fn lower_coherent_combining(params: &ChannelParams) -> BoundResult {
    let p = params.power();
    let l = params.l();
    let c = derive_constants(params);
    let phi = c.phi;
    // 1 - phi^2 = (1 - phi)(1 + phi)
    let one_minus_phi_sq = c.one_minus_phi * (1.0 + phi);

    let gain = pos(2.0 * phi.ln() - 3f64.ln() + (0.5 * p).ln_1p());
    let spread = 2.0 * (1.0 + p * phi) + p * p * one_minus_phi_sq;
    let amplitude = pos(gain + 0.5 * (E / PI).ln() - 0.5 * spread.ln());

    let phase = if p == 0.0 {
        0.0
    } else {
        // Divide numerator and denominator by L.
        let denom = 2.0 * params.sigma2() * p / l
            + PI * PI * c.one_minus_kappa * p
            + 6.0 * PI * PI * phi.powf(-1.5);
        0.5 * (TAU / (1.0 + EULER_GAMMA).exp()).ln() + 0.5 * (2.0 * p / denom).ln()
    };
    BoundResult {
        kind: BoundKind::LowerCoherentCombining,
        rate_split: RateSplit::new(amplitude, phase),
        params: *params,
        limit: None,
    }
}

/// Evaluates one bound family.
pub fn evaluate(kind: BoundKind, params: &ChannelParams) -> BoundResult {
    match kind {
        BoundKind::UpperOuter => upper_outer(params),
        BoundKind::LowerPartiallyCoherent => lower_partially_coherent(params),
        BoundKind::LowerCoherentCombining => lower_coherent_combining(params),
    }
}

/// Lower bound `1/2 ln(8 pi k)` on the differential entropy of `chi^2_{2k}`.
pub fn entropy_chi2_lower(k: u64) -> Result<f64> {
    if k < 1 {
        return Err(Error::InvalidArgument(
            "chi-squared half degrees of freedom must be >= 1".into(),
        ));
    }
    Ok(0.5 * (8.0 * PI * k as f64).ln())
}

/// Upper bound `1/2 ln(8 pi e (k + lambda))` on the entropy of a
/// non-central `chi^2_{2k}(lambda)`.
pub fn entropy_noncentral_chi2_upper(k: u64, lambda: f64) -> Result<f64> {
    if k < 1 {
        return Err(Error::InvalidArgument(
            "chi-squared half degrees of freedom must be >= 1".into(),
        ));
    }
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "non-centrality must be >= 0, got {lambda}"
        )));
    }
    Ok(0.5 * (8.0 * PI * E * (k as f64 + lambda)).ln())
}

/// Exact differential entropy of `chi^2_{2k}`:
/// `k + ln(2 Gamma(k)) + (1 - k) psi(k)`.
pub fn entropy_chi2_exact(k: u64) -> Result<f64> {
    if k < 1 {
        return Err(Error::InvalidArgument(
            "chi-squared half degrees of freedom must be >= 1".into(),
        ));
    }
    let kf = k as f64;
    Ok(kf + 2f64.ln() + ln_gamma(kf) + (1.0 - kf) * digamma(kf))
}

/// `E[Z^-2] <= 2 E[Z^4]^(-3/4) + E[Z^4]^(-1/4)` evaluated at `m4 = E[Z^4]`.
///
/// Only meaningful when `E[Z^-2]` is finite, i.e. `Z` keeps away from zero.
/// For `Z = |F|` with `L >= 2` and `sigma2 > 0` it is not: `|F|` has positive
/// density near zero and `E|F|^-2` diverges.
pub fn inverse_second_moment_bound(m4: f64) -> Result<f64> {
    if !(m4 > 0.0 && m4 <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "E[Z^4] must lie in (0, 1], got {m4}"
        )));
    }
    Ok(2.0 * m4.powf(-0.75) + m4.powf(-0.25))
}
