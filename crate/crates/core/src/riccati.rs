//! Posterior Fisher-information recursion for the Wiener phase observed
//! through a fixed-amplitude symbol, its stationary point, and the entropy
//! bound that feeds the phase summand of the outer bound.
//!
//! For a random-walk state with increment variance `sigma2/L` observed with
//! per-sample signal power `x = E|X|^2`, the score constants are
//! `D11 = L/sigma2`, `D12 = D21 = -L/sigma2`, `D22 = x + L/sigma2`, and the
//! general recursion `J' = D22 - D21 (J + D11)^-1 D12` becomes
//! `J' = x + r J / (J + r)` with `r = L/sigma2`.

use std::f64::consts::{E, PI, TAU};

use crate::error::{Error, Result};
use crate::model::ChannelParams;

/// Default tolerance for fixed-point iteration (absolute + relative).
pub const FIXED_POINT_TOL: f64 = 1e-12;
/// Default iteration cap.
pub const MAX_ITERATIONS: usize = 1_000_000;

/// The four expected Hessian blocks of one transition/measurement step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreConstants {
    pub d11: f64,
    pub d12: f64,
    pub d21: f64,
    pub d22: f64,
}

impl ScoreConstants {
    /// Score constants of the oversampled Wiener phase channel.
    pub fn wiener(x_mean_sq: f64, l_over_sigma2: f64) -> Self {
        Self {
            d11: l_over_sigma2,
            d12: -l_over_sigma2,
            d21: -l_over_sigma2,
            d22: x_mean_sq + l_over_sigma2,
        }
    }

    /// Scalar posterior Fisher recursion `J' = D22 - D21 (J + D11)^-1 D12`.
    pub fn step(&self, j: f64) -> f64 {
        self.d22 - self.d21 * self.d12 / (j + self.d11)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FisherState {
    /// Posterior Fisher information, rad^-2.
    pub j: f64,
    pub x_mean_sq: f64,
    pub l_over_sigma2: f64,
}

impl FisherState {
    pub fn new(j: f64, x_mean_sq: f64, l_over_sigma2: f64) -> Result<Self> {
        if !(j.is_finite() && j >= 0.0) {
            return Err(Error::InvalidArgument(format!("J must be >= 0, got {j}")));
        }
        check_inputs(x_mean_sq, l_over_sigma2)?;
        Ok(Self {
            j,
            x_mean_sq,
            l_over_sigma2,
        })
    }

    pub fn scores(&self) -> ScoreConstants {
        ScoreConstants::wiener(self.x_mean_sq, self.l_over_sigma2)
    }
}

fn check_inputs(x_mean_sq: f64, l_over_sigma2: f64) -> Result<()> {
    if !(x_mean_sq.is_finite() && x_mean_sq >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "E|X|^2 must be >= 0, got {x_mean_sq}"
        )));
    }
    if !(l_over_sigma2.is_finite() && l_over_sigma2 > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "L/sigma2 must be > 0, got {l_over_sigma2}"
        )));
    }
    Ok(())
}

/// One step of the Riccati recursion, `J' = x + r J / (J + r)`.
///
/// Algebraically equal to `x + r - r^2 / (J + r)` but free of the
/// cancellation that form suffers when `r >> J`.
pub fn riccati_step(state: &FisherState) -> FisherState {
    let r = state.l_over_sigma2;
    FisherState {
        j: state.x_mean_sq + r * state.j / (state.j + r),
        ..*state
    }
}

/// Stationary solution `x/2 + 1/2 sqrt(x^2 + 4 r x)`.
pub fn riccati_fixed_point(x_mean_sq: f64, l_over_sigma2: f64) -> Result<f64> {
    check_inputs(x_mean_sq, l_over_sigma2)?;
    let x = x_mean_sq;
    Ok(0.5 * x + 0.5 * (x * x + 4.0 * l_over_sigma2 * x).sqrt())
}

/// Outcome of iterating the recursion to its stationary point.
#[derive(Debug, Clone, PartialEq)]
pub struct Convergence {
    pub j: f64,
    pub iterations: usize,
    /// The iterates `J_0, J_1, ...` when a trace was requested.
    pub trace: Vec<f64>,
}

/// Iterates [`riccati_step`] until the a-posteriori error estimate
/// `q/(1-q) |J_{k+1} - J_k|` (with `q` the observed contraction ratio) drops
/// below `tol * (1 + |J|)`.
pub fn iterate_fixed_point(
    start: &FisherState,
    tol: f64,
    max_iter: usize,
    keep_trace: bool,
) -> Result<Convergence> {
    let mut state = *start;
    let mut trace = if keep_trace {
        vec![state.j]
    } else {
        Vec::new()
    };
    let mut prev_change = f64::NAN;
    for k in 1..=max_iter {
        let next = riccati_step(&state);
        let change = (next.j - state.j).abs();
        if keep_trace {
            trace.push(next.j);
        }
        state = next;
        if change == 0.0 {
            return Ok(Convergence {
                j: state.j,
                iterations: k,
                trace,
            });
        }
        if prev_change.is_finite() && prev_change > 0.0 {
            let q = (change / prev_change).min(1.0 - f64::EPSILON);
            if q / (1.0 - q) * change <= tol * (1.0 + state.j.abs()) {
                return Ok(Convergence {
                    j: state.j,
                    iterations: k,
                    trace,
                });
            }
        }
        prev_change = change;
        if !state.j.is_finite() {
            return Err(Error::NonFinite(format!(
                "Fisher iterate became {}",
                state.j
            )));
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        last_change: prev_change,
    })
}

/// `1/2 sqrt(x^2 + 4 r x) - x/2`, computed as `2 r x / (sqrt(x^2 + 4 r x) + x)`.
pub fn crb_argument(x_mean_sq: f64, l_over_sigma2: f64) -> f64 {
    let x = x_mean_sq;
    let root = (x * x + 4.0 * l_over_sigma2 * x).sqrt();
    if root + x == 0.0 {
        0.0
    } else {
        2.0 * l_over_sigma2 * x / (root + x)
    }
}

/// Lower bound on the conditional phase entropy given all past observations:
/// `1/2 ln(2 pi e) - 1/2 ln(1/2 sqrt(x^2 + 4 r x) - x/2)`.
pub fn posterior_crb_entropy_lower(x_mean_sq: f64, l_over_sigma2: f64) -> Result<f64> {
    check_inputs(x_mean_sq, l_over_sigma2)?;
    if x_mean_sq == 0.0 {
        return Err(Error::InvalidArgument(
            "E|X|^2 must be > 0 for the entropy bound".into(),
        ));
    }
    Ok(0.5 * (TAU * E).ln() - 0.5 * crb_argument(x_mean_sq, l_over_sigma2).ln())
}

/// Unclamped-input phase summand of the outer bound for `P > 0`, `sigma2 > 0`.
pub(crate) fn outer_phase_summand(params: &ChannelParams) -> f64 {
    let x = params.symbol_power();
    let r = params.l() / params.sigma2();
    (0.5 * (TAU / E).ln() + 0.5 * crb_argument(x, r).ln()).max(0.0)
}

/// `[1/2 ln(2pi/e) + 1/2 ln(1/2 sqrt(P^2/L^2 + 4P/sigma2) - P/(2L))]^+`.
pub fn phase_rate_upper(params: &ChannelParams) -> Result<f64> {
    if params.power() <= 0.0 {
        return Err(Error::InvalidParams("phase rate bound needs P > 0".into()));
    }
    if params.sigma2() <= 0.0 {
        return Err(Error::InvalidParams(
            "phase rate bound needs sigma2 > 0".into(),
        ));
    }
    Ok(outer_phase_summand(params))
}

/// Gaussian-prior check of the entropy/MMSE integral
/// `h = 1/2 int_0^inf (s/(1 + s rho) - 1/(2 pi e + rho)) d rho`, which should
/// return `1/2 ln(2 pi e s)`.
///
/// Composite Simpson on a log-spaced grid up to `rho_max`, Simpson on
/// `[0, rho_min]`, and the `(2 pi e s - 1) / (s rho)` tail beyond `rho_max`.
pub fn immse_entropy_quadrature(prior_variance: f64, n_grid: usize, rho_max: f64) -> Result<f64> {
    if n_grid < 10 {
        return Err(Error::InvalidArgument(format!(
            "quadrature grid needs >= 10 points, got {n_grid}"
        )));
    }
    if !(prior_variance.is_finite() && prior_variance > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "prior variance must be > 0, got {prior_variance}"
        )));
    }
    let s = prior_variance;
    let two_pi_e = TAU * E;
    let rho_min = 1e-9 / (1.0 + s);
    if !(rho_max.is_finite() && rho_max > 1e3 * rho_min) {
        return Err(Error::InvalidArgument(format!(
            "rho_max too small: {rho_max}"
        )));
    }
    let integrand = |rho: f64| s / (1.0 + s * rho) - 1.0 / (two_pi_e + rho);

    let head =
        rho_min / 6.0 * (integrand(0.0) + 4.0 * integrand(rho_min / 2.0) + integrand(rho_min));

    let n = n_grid + n_grid % 2;
    let (t0, t1) = (rho_min.ln(), rho_max.ln());
    let h = (t1 - t0) / n as f64;
    let body: f64 = (0..=n)
        .map(|i| {
            let t = t0 + h * i as f64;
            let rho = t.exp();
            let w = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            w * integrand(rho) * rho
        })
        .sum::<f64>()
        * h
        / 3.0;

    let tail = (two_pi_e * s - 1.0) / (s * rho_max);
    Ok(0.5 * (head + body + tail))
}

/// `sqrt(x^2 + a x)`, concave on `x >= 0` for `a >= 0`.
pub fn sqrt_quadratic(x: f64, a: f64) -> f64 {
    (x * x + a * x).sqrt()
}

/// Gaussian differential entropy `1/2 ln(2 pi e s)`.
pub fn gaussian_entropy(variance: f64) -> f64 {
    0.5 * (2.0 * PI * E * variance).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn state(j: f64, x: f64, r: f64) -> FisherState {
        FisherState::new(j, x, r).unwrap()
    }

    #[test]
    fn step_examples() {
        assert_eq!(riccati_step(&state(0.0, 0.0, 1.0)).j, 0.0);
        assert_eq!(riccati_step(&state(0.0, 3.0, 1.0)).j, 3.0);
    }

    #[test]
    fn stable_step_matches_general_recursion() {
        for (j, x, r) in [
            (0.0, 3.0, 1.0),
            (2.5, 0.1, 7.0),
            (100.0, 4.0, 0.01),
            (1.0, 1.0, 1.0),
        ] {
            let s = state(j, x, r);
            assert_relative_eq!(riccati_step(&s).j, s.scores().step(j), max_relative = 1e-13);
        }
    }

    #[test]
    fn iteration_reaches_closed_form() {
        let target = 1.5 + 0.5 * 21f64.sqrt();
        assert_relative_eq!(
            riccati_fixed_point(3.0, 1.0).unwrap(),
            target,
            max_relative = 1e-15
        );
        let conv = iterate_fixed_point(&state(0.0, 3.0, 1.0), FIXED_POINT_TOL, 200, false).unwrap();
        assert!(conv.iterations < 200);
        assert!((conv.j - target).abs() < 1e-12);
    }

    #[test]
    fn fixed_point_examples() {
        assert_eq!(riccati_fixed_point(0.0, 5.0).unwrap(), 0.0);
        let j = riccati_fixed_point(1.0, 1e6).unwrap();
        assert_relative_eq!(j, 0.5 + 0.5 * (1.0f64 + 4e6).sqrt(), max_relative = 1e-15);
        assert_relative_eq!(j, 1_000.500_124_999_992_2, max_relative = 1e-14);
        let conv = iterate_fixed_point(
            &state(0.0, 1.0, 1e6),
            FIXED_POINT_TOL,
            MAX_ITERATIONS,
            false,
        )
        .unwrap();
        assert_relative_eq!(conv.j, j, max_relative = 1e-10);
        assert!(riccati_fixed_point(-1.0, 1.0).is_err());
        assert!(riccati_fixed_point(1.0, 0.0).is_err());
    }

    #[test]
    fn recursion_preserves_nonnegativity() {
        for x in [0.0, 1e-3, 1.0, 1e3] {
            for r in [1e-3, 1.0, 1e6] {
                let d = ScoreConstants::wiener(x, r);
                for j in [0.0, 1e-6, 1.0, 1e9] {
                    assert!(d.d22 >= d.d21 * d.d12 / (j + d.d11) - 1e-12 * d.d22);
                    assert!(riccati_step(&state(j, x, r)).j >= 0.0);
                }
            }
        }
    }

    #[test]
    fn fixed_point_is_stationary_on_grid() {
        for i in 0..=8 {
            let x = 10f64.powf(-1.0 + 4.0 * i as f64 / 8.0);
            for k in 0..=9 {
                let r = 10f64.powf(-3.0 + k as f64);
                let j = riccati_fixed_point(x, r).unwrap();
                let next = riccati_step(&state(j, x, r)).j;
                assert!(
                    (next - j).abs() < 1e-10 * j.max(1.0),
                    "x={x} r={r}: {next} vs {j}"
                );
            }
        }
    }

    #[test]
    fn attraction_from_above_and_below() {
        for x in [0.1, 1.0, 10.0, 1e3] {
            for r in [1e-3, 1.0, 1e3, 1e6] {
                let target = riccati_fixed_point(x, r).unwrap();
                for j0 in [0.0, 10.0 * target] {
                    let conv = iterate_fixed_point(
                        &state(j0, x, r),
                        FIXED_POINT_TOL,
                        MAX_ITERATIONS,
                        false,
                    )
                    .unwrap();
                    assert_relative_eq!(conv.j, target, max_relative = 1e-9);
                }
            }
        }
    }

    #[test]
    fn crb_entropy_examples() {
        let h = posterior_crb_entropy_lower(3.0, 1.0).unwrap();
        assert_relative_eq!(h, 1.535_985_270_280_748, max_relative = 1e-14);
        let h = posterior_crb_entropy_lower(1.0, 1e6).unwrap();
        assert_relative_eq!(h, -2.034_689_106_296_812, max_relative = 1e-13);
        // Weak observations: the bound exceeds the entropy of a uniform phase.
        assert!(posterior_crb_entropy_lower(1.0, 1e-4).unwrap() > TAU.ln());
        assert!(posterior_crb_entropy_lower(0.0, 1.0).is_err());
    }

    #[test]
    fn crb_identity_matches_phase_summand() {
        for (x, r) in [(3.0, 1.0), (0.01, 100.0), (1e4, 1e-2)] {
            let a = crb_argument(x, r);
            let lhs = TAU.ln() - posterior_crb_entropy_lower(x, r).unwrap();
            let rhs = 0.5 * (TAU / E).ln() + 0.5 * a.ln();
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn phase_rate_examples() {
        let p = ChannelParams::new(2.0, 1, 1.0).unwrap();
        assert_relative_eq!(
            phase_rate_upper(&p).unwrap(),
            0.262_985_854_113_454_9,
            max_relative = 1e-13
        );

        let p = ChannelParams::new(100.0, 10_000, 1e-4).unwrap();
        assert_relative_eq!(
            phase_rate_upper(&p).unwrap(),
            3.872_813_672_695_741,
            max_relative = 1e-12
        );

        // P/L -> infinity: the argument tends to L/sigma2, not to zero.
        let p = ChannelParams::new(1e8, 1, 1.0).unwrap();
        assert_relative_eq!(
            phase_rate_upper(&p).unwrap(),
            0.5 * (TAU / E).ln(),
            epsilon = 1e-6
        );
        let p = ChannelParams::new(1e8, 1, 10.0).unwrap();
        assert!(phase_rate_upper(&p).unwrap() < 1e-3);

        assert!(phase_rate_upper(&ChannelParams::new(0.0, 1, 1.0).unwrap()).is_err());
        assert!(phase_rate_upper(&ChannelParams::new(1.0, 1, 0.0).unwrap()).is_err());
    }

    #[test]
    fn sqrt_quadratic_is_concave() {
        for a in [0.1, 1.0, 10.0] {
            let h = 1e-2;
            let mut x = h;
            while x + h <= 1e3 {
                let second = sqrt_quadratic(x + h, a) - 2.0 * sqrt_quadratic(x, a)
                    + sqrt_quadratic(x - h, a);
                assert!(second <= 1e-9, "a={a} x={x}: {second}");
                x *= 1.05;
            }
        }
    }

    #[test]
    fn immse_quadrature_recovers_gaussian_entropy() {
        for s in [1.0, 4.0, 0.25] {
            let h = immse_entropy_quadrature(s, 100_000, 1e6).unwrap();
            assert!((h - gaussian_entropy(s)).abs() < 1e-3, "s={s}: {h}");
        }
        let a = immse_entropy_quadrature(1e-4, 100_000, 1e6).unwrap();
        let b = immse_entropy_quadrature(1e-2, 100_000, 1e6).unwrap();
        assert!(a < b);
        assert!(immse_entropy_quadrature(1.0, 9, 1e6).is_err());
    }
}
