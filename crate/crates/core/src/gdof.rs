//! Generalized degrees of freedom: the piecewise pre-log exponents of the
//! outer and inner bounds when `L = floor(P^alpha)` and `sigma2 = P^beta`,
//! the regimes where they meet, and a slope estimator tying them back to the
//! finite-power bounds.

use std::f64::consts::{E, PI, TAU};
use std::fmt;

use crate::error::{Error, Result};
use crate::model::{ChannelParams, GdofPoint};

/// Branch values closer than this are considered equal at a boundary.
pub const BRANCH_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GdofFamily {
    OuterBound,
    InnerPC,
    InnerCC,
    InnerCombined,
    ExactWhereKnown,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GdofValue {
    pub family: GdofFamily,
    pub total: f64,
    /// `(amplitude, phase)` when the family splits the exponent.
    pub split: Option<(f64, f64)>,
}

impl GdofValue {
    fn plain(family: GdofFamily, total: f64) -> Self {
        Self {
            family,
            total,
            split: None,
        }
    }
}

/// Evaluates every branch whose condition holds, checks that they agree and
/// returns the common value. Panics if no branch applies or two disagree;
/// both indicate a bug in the tables below.
fn piecewise(what: &str, point: &GdofPoint, branches: &[(bool, f64)]) -> f64 {
    let mut hit: Option<f64> = None;
    for &(applies, value) in branches {
        if !applies {
            continue;
        }
        match hit {
            None => hit = Some(value),
            Some(v) => assert!(
                (v - value).abs() <= BRANCH_TOL,
                "{what}: branches disagree at alpha={}, beta={}: {v} vs {value}",
                point.alpha(),
                point.beta()
            ),
        }
    }
    hit.unwrap_or_else(|| {
        panic!(
            "{what}: no branch covers alpha={}, beta={}",
            point.alpha(),
            point.beta()
        )
    })
}

/// Phase part of the outer exponent.
pub fn outer_phase(point: &GdofPoint) -> f64 {
    let (a, b) = (point.alpha(), point.beta());
    piecewise(
        "outer",
        point,
        &[
            (b >= a.min(1.0), 0.0),
            (2.0 * a - 1.0 <= b && b <= a && a <= 1.0, (a - b) / 2.0),
            (-1.0 <= b && b <= (2.0 * a - 1.0).min(1.0), (1.0 - b) / 4.0),
            (b <= -1.0, 0.5),
        ],
    )
}

/// `1/2 + D_phase`; the amplitude part is always 1/2.
pub fn gdof_outer(point: &GdofPoint) -> GdofValue {
    let phase = outer_phase(point);
    GdofValue {
        family: GdofFamily::OuterBound,
        total: 0.5 + phase,
        split: Some((0.5, phase)),
    }
}

pub fn gdof_inner_pc(point: &GdofPoint) -> GdofValue {
    let (a, b) = (point.alpha(), point.beta());
    let low = a <= 1.0;
    let total = piecewise(
        "partially coherent",
        point,
        &[
            (low && b >= a, 0.5),
            (low && 2.0 * a - 1.0 <= b && b <= a, 0.5 + (a - b) / 2.0),
            (low && b <= 2.0 * a - 1.0, 1.0 - a / 2.0),
            ((1.0..=2.0).contains(&a), 1.0 - a / 2.0),
            (a >= 2.0, 0.0),
        ],
    );
    GdofValue::plain(GdofFamily::InnerPC, total)
}

/// Coherent-combining exponent; independent of `alpha`.
pub fn gdof_inner_cc(point: &GdofPoint) -> GdofValue {
    let b = point.beta();
    let total = piecewise(
        "coherent combining",
        point,
        &[
            (b > 0.0, 0.0),
            ((-1.0..=0.0).contains(&b), 0.0 - b),
            (b <= -1.0, 1.0),
        ],
    );
    GdofValue::plain(GdofFamily::InnerCC, total)
}

/// Combined inner exponent as its own piecewise table. Equal to the
/// pointwise max of [`gdof_inner_pc`] and [`gdof_inner_cc`].
pub fn gdof_inner_combined(point: &GdofPoint) -> GdofValue {
    let (a, b) = (point.alpha(), point.beta());
    let low = a <= 1.0;
    let total = piecewise(
        "combined",
        point,
        &[
            (low && b >= a, 0.5),
            (low && 2.0 * a - 1.0 <= b && b <= a, 0.5 + (a - b) / 2.0),
            (
                low && a / 2.0 - 1.0 <= b && b <= 2.0 * a - 1.0,
                1.0 - a / 2.0,
            ),
            (
                b >= a / 2.0 - 1.0 && (1.0..=2.0).contains(&a),
                1.0 - a / 2.0,
            ),
            (-1.0 <= b && b <= (a / 2.0 - 1.0).min(0.0), 0.0 - b),
            (b <= -1.0, 1.0),
            (b >= 0.0 && a >= 2.0, 0.0),
        ],
    );
    GdofValue::plain(GdofFamily::InnerCombined, total)
}

/// The parameter regions where the exponent is known exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExactRegime {
    /// `alpha < 1`, `beta >= alpha`: 1/2.
    NoncoherentHalf,
    /// `1 <= alpha <= 2`, `beta >= 1`: `1 - alpha/2`.
    NoncoherentDecay,
    /// `alpha >= 2`, `beta >= 1`: 0.
    NoncoherentZero,
    /// `0 <= alpha <= 1/2`, `0 <= beta <= alpha`: `1/2 + (alpha - beta)/2`.
    PartialPhase,
    /// `beta <= -1`: 1.
    Awgn,
}

impl ExactRegime {
    pub fn as_str(self) -> &'static str {
        match self {
            ExactRegime::NoncoherentHalf => "noncoherent_half",
            ExactRegime::NoncoherentDecay => "noncoherent_decay",
            ExactRegime::NoncoherentZero => "noncoherent_zero",
            ExactRegime::PartialPhase => "partial_phase",
            ExactRegime::Awgn => "awgn",
        }
    }
}

impl fmt::Display for ExactRegime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Exact exponent where known, with the regime it came from.
///
/// Boundaries are taken closed (`beta = 0` in the partial-phase region,
/// `beta = -1` in the AWGN region); at those points inner and outer
/// exponents coincide, so the closure is harmless.
pub fn gdof_exact_if_known(point: &GdofPoint) -> Option<(GdofValue, ExactRegime)> {
    let (a, b) = (point.alpha(), point.beta());
    let candidates = [
        (a < 1.0 && a <= b, 0.5, ExactRegime::NoncoherentHalf),
        (
            (1.0..=2.0).contains(&a) && b >= 1.0,
            1.0 - a / 2.0,
            ExactRegime::NoncoherentDecay,
        ),
        (a >= 2.0 && b >= 1.0, 0.0, ExactRegime::NoncoherentZero),
        (
            a <= 0.5 && 0.0 <= b && b <= a,
            0.5 + (a - b) / 2.0,
            ExactRegime::PartialPhase,
        ),
        (b <= -1.0, 1.0, ExactRegime::Awgn),
    ];
    let mut found: Option<(f64, ExactRegime)> = None;
    for (applies, value, regime) in candidates {
        if !applies {
            continue;
        }
        match found {
            None => found = Some((value, regime)),
            Some((v, _)) => assert!(
                (v - value).abs() <= BRANCH_TOL,
                "exact regimes disagree at ({a}, {b})"
            ),
        }
    }
    found.map(|(total, regime)| (GdofValue::plain(GdofFamily::ExactWhereKnown, total), regime))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    NearAWGN,
    NearONC,
    General,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::NearAWGN => "near_awgn",
            Regime::NearONC => "near_onc",
            Regime::General => "general",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Capacity gap to the AWGN channel in the near-AWGN regime, nats.
pub fn awgn_gap() -> f64 {
    0.5 * (2.0 * PI * E).ln()
}

/// Capacity gap to the optimal non-coherent channel in the near-ONC regime, nats.
pub const ONC_GAP: f64 = 0.2;

/// Which reference channel the OWPN channel is provably close to, and the
/// gap in nats when one applies.
pub fn classify_regime(params: &ChannelParams) -> (Regime, Option<f64>) {
    let (p, l, s2) = (params.power(), params.l(), params.sigma2());
    let near_awgn = p > 1.5 && s2 < 1.0 / (2.0 * p);
    let near_onc = p > 1.0 && s2 / l >= TAU / E * l.ln_1p();
    assert!(
        !(near_awgn && near_onc),
        "regimes overlap at P={p}, L={l}, sigma2={s2}"
    );
    if near_awgn {
        (Regime::NearAWGN, Some(awgn_gap()))
    } else if near_onc {
        (Regime::NearONC, Some(ONC_GAP))
    } else {
        (Regime::General, None)
    }
}

/// Slope `(B(P2) - B(P1)) / (ln P2 - ln P1)` of a bound along the GDoF path
/// `L = floor(P^alpha)`, `sigma2 = P^beta`.
pub fn empirical_prelog<F>(bound_fn: F, point: &GdofPoint, p1: f64, p2: f64) -> Result<f64>
where
    F: Fn(&ChannelParams) -> f64,
{
    if !(p1 >= 1e3 && p2 > p1 && p2.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "need P2 > P1 >= 1e3, got P1={p1}, P2={p2}"
        )));
    }
    let b1 = bound_fn(&point.params_at(p1)?);
    let b2 = bound_fn(&point.params_at(p2)?);
    if !(b1.is_finite() && b2.is_finite()) {
        return Err(Error::NonFinite(format!("bound values {b1}, {b2}")));
    }
    Ok((b2 - b1) / (p2.ln() - p1.ln()))
}
