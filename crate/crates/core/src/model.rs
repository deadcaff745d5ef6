//! Channel parameters, derived coherence constants and the small value types
//! shared by every other module.
//!
//! All rates are carried in nats. [`Units`] converts at the presentation
//! boundary only.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Euler–Mascheroni constant, 20 significant digits.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Largest oversampling factor accepted anywhere in the crate.
pub const MAX_OVERSAMPLING: u64 = 1 << 62;

/// Below this value of `sigma2 / 2` the coherence defects `1 - kappa` and
/// `1 - phi` are evaluated from their power series.
const SERIES_THRESHOLD: f64 = 0.05;

/// The triple `(P, L, sigma2)` of the oversampled Wiener phase noise channel.
///
/// `power` is the average power over a symbol period; each symbol carries
/// `power / L`. `sigma2` is the frequency-noise variance per symbol, so each of
/// the `L` phase increments inside a symbol has variance `sigma2 / L`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    power: f64,
    oversampling: u64,
    sigma2: f64,
}

impl ChannelParams {
    pub fn new(power: f64, oversampling: u64, sigma2: f64) -> Result<Self> {
        if !(power.is_finite() && power >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "P must be finite and >= 0, got {power}"
            )));
        }
        if oversampling == 0 || oversampling > MAX_OVERSAMPLING {
            return Err(Error::InvalidParams(format!(
                "L must be in [1, 2^62], got {oversampling}"
            )));
        }
        if !(sigma2.is_finite() && sigma2 >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "sigma2 must be finite and >= 0, got {sigma2}"
            )));
        }
        Ok(Self {
            power,
            oversampling,
            sigma2,
        })
    }

    #[inline]
    pub fn power(&self) -> f64 {
        self.power
    }

    #[inline]
    pub fn oversampling(&self) -> u64 {
        self.oversampling
    }

    /// `L` as a float, for use inside formulas.
    #[inline]
    pub fn l(&self) -> f64 {
        self.oversampling as f64
    }

    #[inline]
    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// Per-symbol input power budget `P / L`.
    #[inline]
    pub fn symbol_power(&self) -> f64 {
        per_symbol_power(self)
    }

    /// Variance of one phase increment, `sigma2 / L`.
    #[inline]
    pub fn increment_variance(&self) -> f64 {
        self.sigma2 / self.l()
    }

    pub fn coherence(&self) -> Coherence {
        derive_constants(self)
    }
}

/// Per-symbol power `P / L`.
pub fn per_symbol_power(params: &ChannelParams) -> f64 {
    params.power / params.l()
}

/// Coherence constants of the normalized coherent sum
/// `F = (1/L) sum_i exp(j (Theta_i - Theta_1))` over one symbol.
///
/// `kappa = E[F]` and `phi = E|F|^2`. The defects `1 - kappa` and `1 - phi`
/// are stored separately because they are tiny whenever `sigma2` is small and
/// the bounds multiply them by large powers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coherence {
    pub xi: f64,
    pub kappa: f64,
    pub phi: f64,
    pub one_minus_kappa: f64,
    pub one_minus_phi: f64,
}

impl Coherence {
    /// True when the constants were produced by the zero-noise limit rather
    /// than by evaluating the closed forms.
    pub fn is_analytic_limit(&self) -> bool {
        self.one_minus_kappa == 0.0 && self.one_minus_phi == 0.0
    }
}

/// `xi = exp(-sigma2 / (2L))` together with `kappa` and `phi`.
///
/// Uses the geometric-series closed forms for any `L` up to 2^62, with a power
/// series for the defects when the per-symbol phase drift is small. `sigma2 = 0`
/// and `L = 1` are evaluated by their limits (`kappa = phi = 1`).
pub fn derive_constants(params: &ChannelParams) -> Coherence {
    let l = params.l();
    let a = params.sigma2 / (2.0 * l);
    let xi = (-a).exp();
    if params.sigma2 == 0.0 || params.oversampling == 1 {
        return Coherence {
            xi,
            kappa: 1.0,
            phi: 1.0,
            one_minus_kappa: 0.0,
            one_minus_phi: 0.0,
        };
    }
    let u = params.sigma2 / 2.0;

    // 1 - exp(-a), and the convex remainder g(x) = exp(-x) - 1 + x.
    let d = -(-a).exp_m1();
    let defect_sum = expm_remainder(u) - l * expm_remainder(a);
    let one_minus_kappa = (defect_sum / (l * d)).clamp(0.0, 1.0);
    let kappa = if u > 1.0 {
        // No cancellation in the direct ratio once the symbol decorrelates.
        ((-(-u).exp_m1()) / (l * d)).clamp(0.0, 1.0)
    } else {
        1.0 - one_minus_kappa
    };

    let one_minus_phi = if u <= SERIES_THRESHOLD {
        phi_defect_series(u, 1.0 / l)
    } else {
        // L^2 phi = L - 2 xi (L (xi - 1) - xi^L + 1) / (1 - xi)^2
        //         = L + 2 xi (L d - (1 - xi^L)) / d^2
        let c = -(-u).exp_m1();
        let l2_phi = l + 2.0 * xi * (l * d - c) / (d * d);
        1.0 - l2_phi / (l * l)
    }
    .clamp(0.0, 1.0);
    let phi = 1.0 - one_minus_phi;

    Coherence {
        xi,
        kappa,
        phi,
        one_minus_kappa,
        one_minus_phi,
    }
}

/// `exp(-x) - 1 + x` without cancellation for small `x >= 0`.
pub(crate) fn expm_remainder(x: f64) -> f64 {
    if x < 0.5 {
        // x^2/2 - x^3/6 + ...
        let mut term = x * x / 2.0;
        let mut sum: f64 = 0.0;
        let mut k = 2.0;
        while term.abs() > f64::EPSILON * 1e-3 * sum.abs().max(f64::MIN_POSITIVE) {
            sum += term;
            k += 1.0;
            term *= -x / k;
            if k > 40.0 {
                break;
            }
        }
        sum
    } else {
        (-x).exp_m1() + x
    }
}

/// Coefficients `c_{j,i}` of `Q_j(w) = sum_i c_{j,i} w^(2i)` with
/// `Q_j(1/L) = L^-(j+2) * sum_{m=1}^{L-1} (L - m) m^j`.
const PHI_SERIES: [&[f64]; 7] = [
    &[1.0 / 6.0, -1.0 / 6.0],
    &[1.0 / 12.0, -1.0 / 12.0],
    &[1.0 / 20.0, -1.0 / 12.0, 1.0 / 30.0],
    &[1.0 / 30.0, -1.0 / 12.0, 1.0 / 20.0],
    &[1.0 / 42.0, -1.0 / 12.0, 1.0 / 12.0, -1.0 / 42.0],
    &[1.0 / 56.0, -1.0 / 12.0, 1.0 / 8.0, -5.0 / 84.0],
    &[1.0 / 72.0, -1.0 / 12.0, 7.0 / 40.0, -5.0 / 36.0, 1.0 / 30.0],
];

/// `1 - phi = sum_j (-1)^(j+1) 2 u^j / j! * Q_j(1/L)` with `u = sigma2 / 2`.
fn phi_defect_series(u: f64, w: f64) -> f64 {
    let w2 = w * w;
    let mut sum = 0.0;
    let mut u_pow_over_fact = 1.0;
    for (j, coeffs) in PHI_SERIES.iter().enumerate() {
        let order = (j + 1) as f64;
        u_pow_over_fact *= u / order;
        let q = coeffs.iter().rev().fold(0.0, |acc, &c| acc * w2 + c);
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        sum += sign * 2.0 * u_pow_over_fact * q;
    }
    sum
}

/// Amplitude/phase decomposition of a rate, in nats per channel use.
///
/// The individual terms may be negative when the underlying formula carries no
/// positive-part clamp; only `clamped_total` is guaranteed non-negative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateSplit {
    pub amplitude_rate: f64,
    pub phase_rate: f64,
    pub clamped_total: f64,
}

impl RateSplit {
    pub fn new(amplitude_rate: f64, phase_rate: f64) -> Self {
        Self {
            amplitude_rate,
            phase_rate,
            clamped_total: (amplitude_rate + phase_rate).max(0.0),
        }
    }

    pub fn zero() -> Self {
        Self::new(0.0, 0.0)
    }

    pub fn in_units(&self, units: Units) -> RateSplit {
        RateSplit {
            amplitude_rate: units.from_nats(self.amplitude_rate),
            phase_rate: units.from_nats(self.phase_rate),
            clamped_total: units.from_nats(self.clamped_total),
        }
    }
}

/// High-power exponents: `L = floor(P^alpha)` and `sigma2 = P^beta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GdofPoint {
    alpha: f64,
    beta: f64,
}

impl GdofPoint {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "alpha must be finite and >= 0, got {alpha}"
            )));
        }
        if !beta.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "beta must be finite, got {beta}"
            )));
        }
        Ok(Self { alpha, beta })
    }

    #[inline]
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    #[inline]
    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Channel parameters realized at power `p`.
    pub fn params_at(&self, p: f64) -> Result<ChannelParams> {
        let l = floor_power(p, self.alpha)?;
        ChannelParams::new(p, l, p.powf(self.beta))
    }
}

/// `floor(P^alpha)` as an integer, clamped below at 1.
///
/// Values within a few ulps of an integer snap to it so that e.g.
/// `(10^8)^0.5` gives exactly `10^4`.
pub fn floor_power(p: f64, alpha: f64) -> Result<u64> {
    if !(p.is_finite() && p > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "P must be finite and > 0, got {p}"
        )));
    }
    let v = p.powf(alpha);
    if !v.is_finite() || v > MAX_OVERSAMPLING as f64 {
        return Err(Error::Overflow(v));
    }
    let nearest = v.round();
    let snapped = if (v - nearest).abs() <= 8.0 * f64::EPSILON * v.max(1.0) {
        nearest
    } else {
        v.floor()
    };
    Ok((snapped as u64).max(1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Units {
    #[default]
    Nats,
    Bits,
}

impl Units {
    #[inline]
    pub fn from_nats(self, value: f64) -> f64 {
        match self {
            Units::Nats => value,
            Units::Bits => value / std::f64::consts::LN_2,
        }
    }

    #[inline]
    pub fn to_nats(self, value: f64) -> f64 {
        match self {
            Units::Nats => value,
            Units::Bits => value * std::f64::consts::LN_2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Units::Nats => "nats",
            Units::Bits => "bits",
        }
    }
}

impl fmt::Display for Units {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Units {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nats" => Ok(Units::Nats),
            "bits" => Ok(Units::Bits),
            other => Err(Error::InvalidArgument(format!(
                "unknown units {other:?} (expected nats or bits)"
            ))),
        }
    }
}

/// A Monte Carlo estimate of an expectation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    /// Sample standard deviation divided by `sqrt(n_samples)`.
    pub std_error: f64,
    pub n_samples: u64,
    pub seed: u64,
}

impl McEstimate {
    /// `|mean - target| <= k * std_error + slack`.
    pub fn agrees_with(&self, target: f64, k: f64, slack: f64) -> bool {
        (self.mean - target).abs() <= k * self.std_error + slack
    }

    /// Deviation from `target` in standard errors. Infinite when the
    /// estimate has zero spread but misses the target.
    pub fn z_score(&self, target: f64) -> f64 {
        let dev = (self.mean - target).abs();
        if dev == 0.0 {
            0.0
        } else {
            dev / self.std_error
        }
    }
}

/// Streaming mean/variance with an exact, order-fixed merge (Chan et al.).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunningMoments {
    n: u64,
    mean: f64,
    m2: f64,
}

impl RunningMoments {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &RunningMoments) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        let nf = n as f64;
        self.mean += delta * other.n as f64 / nf;
        self.m2 += other.m2 + delta * delta * (self.n as f64) * (other.n as f64) / nf;
        self.n = n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn sample_variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn estimate(&self, seed: u64) -> McEstimate {
        McEstimate {
            mean: self.mean,
            std_error: (self.sample_variance() / self.n.max(1) as f64).sqrt(),
            n_samples: self.n,
            seed,
        }
    }
}
