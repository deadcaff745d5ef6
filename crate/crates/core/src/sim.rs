//! Discrete-time OWPN channel simulation and the Monte Carlo estimators used
//! as oracles for the analytic constants.
//!
//! Randomness comes from ChaCha8 streams: a master seed selects the key and
//! the stream index selects an independent keystream, so chunk `i` of any
//! estimator always sees `stream_rng(seed, i)` no matter which thread runs it.
//! Chunk results are reduced in ascending chunk order, which makes every
//! estimate bit-reproducible for a fixed `(seed, n_samples, chunk_size)`.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{ChannelParams, McEstimate, RunningMoments};

/// Samples per Monte Carlo chunk.
pub const CHUNK_SIZE: u64 = 16_384;

/// Default number of Riemann steps for the fading integral.
pub const DEFAULT_TIME_STEPS: usize = 1000;

/// Keystream `stream` under key `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Mixes a label into a seed (SplitMix64 finalizer), for deriving
/// independent seeds for distinct checks from one master seed.
pub fn derive_seed(seed: u64, label: u64) -> u64 {
    let mut z = seed ^ label.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs `work(rng, count)` over fixed-size chunks in parallel and returns the
/// per-chunk results in chunk order.
pub fn run_chunked<T, F>(n_samples: u64, seed: u64, work: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng, u64) -> T + Sync,
{
    let n_chunks = n_samples.div_ceil(CHUNK_SIZE);
    (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let count = CHUNK_SIZE.min(n_samples - chunk * CHUNK_SIZE);
            let mut rng = stream_rng(seed, chunk);
            work(&mut rng, count)
        })
        .collect()
}

/// Folds per-chunk moment accumulators in order.
fn reduce<const K: usize>(parts: &[[RunningMoments; K]]) -> [RunningMoments; K] {
    let mut total = [RunningMoments::new(); K];
    for part in parts {
        for (acc, p) in total.iter_mut().zip(part) {
            acc.merge(p);
        }
    }
    total
}

#[inline]
fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Circularly-symmetric complex Gaussian with total variance `var`.
#[inline]
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R, var: f64) -> Complex64 {
    let s = (var / 2.0).sqrt();
    Complex64::new(s * normal(rng), s * normal(rng))
}

/// A realization `theta[0..=M*L]` of the Wiener phase process.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePath {
    pub theta: Vec<f64>,
    pub sigma2: f64,
    pub oversampling: u64,
}

impl PhasePath {
    pub fn symbols(&self) -> usize {
        (self.theta.len() - 1) / self.oversampling as usize
    }

    pub fn increments(&self) -> impl Iterator<Item = f64> + '_ {
        self.theta.windows(2).map(|w| w[1] - w[0])
    }
}

/// `theta_0 ~ U[0, 2pi)`, then `M*L` i.i.d. `N(0, sigma2/L)` increments.
pub fn sample_phase_path(params: &ChannelParams, symbols: usize, seed: u64) -> Result<PhasePath> {
    if symbols == 0 {
        return Err(Error::InvalidArgument(
            "phase path needs at least one symbol".into(),
        ));
    }
    let n = symbols
        .checked_mul(params.oversampling() as usize)
        .ok_or_else(|| Error::InvalidArgument("path length overflows".into()))?;
    let mut rng = stream_rng(seed, 0);
    let step = params.increment_variance().sqrt();
    let mut theta = Vec::with_capacity(n + 1);
    let mut current = rng.random::<f64>() * TAU;
    theta.push(current);
    for _ in 0..n {
        current += step * normal(&mut rng);
        theta.push(current);
    }
    Ok(PhasePath {
        theta,
        sigma2: params.sigma2(),
        oversampling: params.oversampling(),
    })
}

/// Inputs and oversampled outputs of `M` channel uses.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelBlock {
    pub inputs: Vec<Complex64>,
    pub outputs: Vec<Complex64>,
    pub oversampling: u64,
}

impl ChannelBlock {
    /// The `L` output samples of symbol `m` (0-based).
    pub fn symbol_outputs(&self, m: usize) -> &[Complex64] {
        let l = self.oversampling as usize;
        &self.outputs[m * l..(m + 1) * l]
    }
}

/// Noise variance of each complex output sample.
pub const NOISE_VARIANCE: f64 = 2.0;

/// `Y_n = X_{ceil(n/L)} exp(j theta_n) + W_n` with `W_n ~ CN(0, 2)`.
pub fn transmit(
    params: &ChannelParams,
    inputs: &[Complex64],
    path: &PhasePath,
    seed: u64,
) -> Result<ChannelBlock> {
    let n = path.theta.len().saturating_sub(1);
    let mut rng = stream_rng(seed, 1);
    let noise: Vec<Complex64> = (0..n)
        .map(|_| complex_normal(&mut rng, NOISE_VARIANCE))
        .collect();
    transmit_with_noise(params, inputs, path, &noise)
}

/// Same channel law with the additive noise supplied by the caller.
pub fn transmit_with_noise(
    params: &ChannelParams,
    inputs: &[Complex64],
    path: &PhasePath,
    noise: &[Complex64],
) -> Result<ChannelBlock> {
    let l = params.oversampling() as usize;
    if path.oversampling != params.oversampling() {
        return Err(Error::InvalidArgument(format!(
            "phase path sampled with L = {}, channel has L = {}",
            path.oversampling,
            params.oversampling()
        )));
    }
    let expected = inputs.len() * l + 1;
    if path.theta.len() != expected {
        return Err(Error::LengthMismatch {
            expected,
            got: path.theta.len(),
        });
    }
    if noise.len() != expected - 1 {
        return Err(Error::LengthMismatch {
            expected: expected - 1,
            got: noise.len(),
        });
    }
    if !inputs.is_empty() {
        let avg = inputs.iter().map(|x| x.norm_sqr()).sum::<f64>() / inputs.len() as f64;
        if avg > params.symbol_power() * (1.0 + 1e-12) {
            log::warn!(
                "input power {avg} exceeds the per-symbol budget {}",
                params.symbol_power()
            );
        }
    }
    let outputs = noise
        .iter()
        .enumerate()
        .map(|(i, w)| inputs[i / l] * Complex64::from_polar(1.0, path.theta[i + 1]) + w)
        .collect();
    Ok(ChannelBlock {
        inputs: inputs.to_vec(),
        outputs,
        oversampling: params.oversampling(),
    })
}

/// Draws one `F = (1/L) sum_k exp(j (Theta_k - Theta_1))`.
#[inline]
pub fn sample_coherent_sum<R: Rng + ?Sized>(rng: &mut R, l: u64, step: f64) -> Complex64 {
    let mut acc = Complex64::new(1.0, 0.0);
    let mut psi = 0.0;
    for _ in 1..l {
        psi += step * normal(rng);
        acc += Complex64::from_polar(1.0, psi);
    }
    acc / l as f64
}

/// Monte Carlo moments of the normalized coherent sum `F`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FMoments {
    /// `E|F|^2`, compare with `phi`.
    pub m2: McEstimate,
    /// `E|F|^4`.
    pub m4: McEstimate,
    /// `E[Re F]`, compare with `kappa`.
    pub mean_real: McEstimate,
    /// `E[ln |F|^2]`.
    pub mean_log_sq: McEstimate,
}

pub fn estimate_f_moments(params: &ChannelParams, n_samples: u64, seed: u64) -> Result<FMoments> {
    if n_samples < 1000 {
        return Err(Error::InvalidArgument(format!(
            "need at least 1000 samples, got {n_samples}"
        )));
    }
    let l = params.oversampling();
    let step = params.increment_variance().sqrt();
    let parts = run_chunked(n_samples, seed, |rng, count| {
        let mut acc = [RunningMoments::new(); 4];
        for _ in 0..count {
            let f = sample_coherent_sum(rng, l, step);
            let m2 = f.norm_sqr();
            acc[0].push(m2);
            acc[1].push(m2 * m2);
            acc[2].push(f.re);
            acc[3].push(m2.ln());
        }
        acc
    });
    let [m2, m4, re, lg] = reduce(&parts);
    Ok(FMoments {
        m2: m2.estimate(seed),
        m4: m4.estimate(seed),
        mean_real: re.estimate(seed),
        mean_log_sq: lg.estimate(seed),
    })
}

/// Real and imaginary parts of a complex Monte Carlo mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexEstimate {
    pub re: McEstimate,
    pub im: McEstimate,
}

/// `E[int_0^1 exp(j sqrt(sigma2/L) B(t)) dt]` for standard Brownian motion `B`,
/// by a left-endpoint Riemann sum over `n_time_steps` steps.
///
/// The exact real part is `(2L/sigma2)(1 - exp(-sigma2/(2L)))`; the
/// discretization bias is at most `(1 - exp(-sigma2/(2L))) / n_time_steps`.
pub fn simulate_fading_integral(
    sigma2_over_l: f64,
    n_time_steps: usize,
    n_samples: u64,
    seed: u64,
) -> Result<ComplexEstimate> {
    if n_time_steps < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 time steps, got {n_time_steps}"
        )));
    }
    if !(sigma2_over_l.is_finite() && sigma2_over_l >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "sigma2/L must be >= 0, got {sigma2_over_l}"
        )));
    }
    if n_samples == 0 {
        return Err(Error::InvalidArgument("need at least one sample".into()));
    }
    let dt = 1.0 / n_time_steps as f64;
    let step = (sigma2_over_l * dt).sqrt();
    let parts = run_chunked(n_samples, seed, |rng, count| {
        let mut acc = [RunningMoments::new(); 2];
        for _ in 0..count {
            let mut phase = 0.0;
            let mut sum = Complex64::new(0.0, 0.0);
            for _ in 0..n_time_steps {
                sum += Complex64::from_polar(1.0, phase);
                phase += step * normal(rng);
            }
            let f = sum * dt;
            acc[0].push(f.re);
            acc[1].push(f.im);
        }
        acc
    });
    let [re, im] = reduce(&parts);
    Ok(ComplexEstimate {
        re: re.estimate(seed),
        im: im.estimate(seed),
    })
}

/// Exact `E[F_n]` of the continuous-time fading integral.
pub fn fading_integral_mean(sigma2_over_l: f64) -> f64 {
    if sigma2_over_l == 0.0 {
        return 1.0;
    }
    let h = sigma2_over_l / 2.0;
    -(-h).exp_m1() / h
}

/// `E[ln |X|^2]` for `X ~ CN(0, power)`; the exact value is `ln(power) - gamma`.
pub fn estimate_log_abs_sq(power: f64, n_samples: u64, seed: u64) -> Result<McEstimate> {
    if !(power.is_finite() && power > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "power must be > 0, got {power}"
        )));
    }
    if n_samples == 0 {
        return Err(Error::InvalidArgument("need at least one sample".into()));
    }
    let parts = run_chunked(n_samples, seed, |rng, count| {
        let mut acc = [RunningMoments::new()];
        for _ in 0..count {
            acc[0].push(complex_normal(rng, power).norm_sqr().ln());
        }
        acc
    });
    Ok(reduce(&parts)[0].estimate(seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::EULER_GAMMA;
    use approx::assert_relative_eq;
    use std::f64::consts::LN_2;

    fn params(p: f64, l: u64, s2: f64) -> ChannelParams {
        ChannelParams::new(p, l, s2).unwrap()
    }

    fn increment_stats(path: &PhasePath) -> (f64, f64) {
        let mut m = RunningMoments::new();
        path.increments().for_each(|d| m.push(d * d));
        (m.mean(), (m.sample_variance() / m.count() as f64).sqrt())
    }

    #[test]
    fn zero_noise_path_is_constant() {
        let path = sample_phase_path(&params(1.0, 4, 0.0), 50, 7).unwrap();
        assert_eq!(path.theta.len(), 201);
        assert!(path.theta.iter().all(|&t| t == path.theta[0]));
        assert!((0.0..TAU).contains(&path.theta[0]));
    }

    #[test]
    fn increment_variance_matches() {
        for (s2, l, target) in [(1.0, 1, 1.0), (2.0, 4, 0.5)] {
            let path = sample_phase_path(&params(1.0, l, s2), 100_000, 11).unwrap();
            let (mean, se) = increment_stats(&path);
            assert!(
                (mean - target).abs() <= 4.0 * se,
                "mean {mean} target {target} se {se}"
            );
        }
    }

    #[test]
    fn rejects_empty_path() {
        assert!(sample_phase_path(&params(1.0, 1, 1.0), 0, 0).is_err());
    }

    #[test]
    fn paths_are_seed_deterministic() {
        let p = params(1.0, 3, 0.7);
        assert_eq!(
            sample_phase_path(&p, 100, 5).unwrap(),
            sample_phase_path(&p, 100, 5).unwrap()
        );
        assert_ne!(
            sample_phase_path(&p, 100, 5).unwrap(),
            sample_phase_path(&p, 100, 6).unwrap()
        );
        let path = sample_phase_path(&p, 100, 5).unwrap();
        let x = vec![Complex64::new(0.3, -0.2); 100];
        assert_eq!(
            transmit(&p, &x, &path, 9).unwrap(),
            transmit(&p, &x, &path, 9).unwrap()
        );
    }

    #[test]
    fn zero_input_gives_pure_noise() {
        let p = params(1.0, 2, 1.0);
        let path = sample_phase_path(&p, 50_000, 1).unwrap();
        let block = transmit(&p, &vec![Complex64::new(0.0, 0.0); 50_000], &path, 2).unwrap();
        let mut m = RunningMoments::new();
        block.outputs.iter().for_each(|y| m.push(y.norm_sqr()));
        let se = (m.sample_variance() / m.count() as f64).sqrt();
        assert!((m.mean() - 2.0).abs() <= 4.0 * se);
    }

    #[test]
    fn noiseless_constant_input_is_rotated_copy() {
        let p = params(1.0, 3, 0.0);
        let path = sample_phase_path(&p, 4, 3).unwrap();
        let c = Complex64::new(0.6, 0.8);
        let noise = vec![Complex64::new(0.0, 0.0); 12];
        let block = transmit_with_noise(&p, &[c; 4], &path, &noise).unwrap();
        let expected = c * Complex64::from_polar(1.0, path.theta[0]);
        for y in &block.outputs {
            assert_relative_eq!(y.re, expected.re, epsilon = 1e-15);
            assert_relative_eq!(y.im, expected.im, epsilon = 1e-15);
        }
    }

    #[test]
    fn channel_law_sample_by_sample() {
        let p = params(2.0, 2, 0.3);
        let path = sample_phase_path(&p, 3, 4).unwrap();
        let x = [
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, -1.0),
            Complex64::new(0.5, 0.5),
        ];
        let noise: Vec<Complex64> = (0..6)
            .map(|i| Complex64::new(i as f64 * 0.1, -0.05))
            .collect();
        let block = transmit_with_noise(&p, &x, &path, &noise).unwrap();
        for n in 1..=6usize {
            let sym = x[n.div_ceil(2) - 1];
            let want = sym * Complex64::new(0.0, path.theta[n]).exp() + noise[n - 1];
            assert_relative_eq!(block.outputs[n - 1].re, want.re, epsilon = 1e-14);
            assert_relative_eq!(block.outputs[n - 1].im, want.im, epsilon = 1e-14);
        }
        assert_eq!(block.symbol_outputs(1), &block.outputs[2..4]);
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let p = params(1.0, 2, 1.0);
        let path = sample_phase_path(&p, 3, 0).unwrap();
        let err = transmit(&p, &[Complex64::new(0.0, 0.0); 4], &path, 0).unwrap_err();
        assert!(matches!(err, Error::LengthMismatch { .. }));
        let other = sample_phase_path(&params(1.0, 3, 1.0), 3, 0).unwrap();
        assert!(transmit(&p, &[Complex64::new(0.0, 0.0); 3], &other, 0).is_err());
    }

    #[test]
    fn power_violation_is_not_an_error() {
        let p = params(1.0, 1, 1.0);
        let path = sample_phase_path(&p, 2, 0).unwrap();
        assert!(transmit(&p, &[Complex64::new(10.0, 0.0); 2], &path, 0).is_ok());
    }

    #[test]
    fn huge_drift_scrambles_phase() {
        let p = params(1.0, 1, 1e6);
        let n = 200_000;
        let path = sample_phase_path(&p, n, 21).unwrap();
        let x: Vec<Complex64> = (0..n)
            .map(|i| Complex64::from_polar(1.0, i as f64 * 0.37))
            .collect();
        let block = transmit(&p, &x, &path, 22).unwrap();
        let (mut re, mut im) = (RunningMoments::new(), RunningMoments::new());
        for (y, xi) in block.outputs.iter().zip(&x) {
            let c = y * xi.conj();
            re.push(c.re);
            im.push(c.im);
        }
        for m in [re, im] {
            let se = (m.sample_variance() / m.count() as f64).sqrt();
            assert!(m.mean().abs() <= 4.0 * se);
        }
    }

    #[test]
    fn phase_wrap_leaves_outputs_unchanged() {
        let p = params(1.0, 4, 0.5);
        let path = sample_phase_path(&p, 20, 8).unwrap();
        let mut shifted = path.clone();
        shifted.theta.iter_mut().for_each(|t| *t += TAU);
        let x = vec![Complex64::new(0.7, -0.1); 20];
        let a = transmit(&p, &x, &path, 3).unwrap();
        let b = transmit(&p, &x, &shifted, 3).unwrap();
        for (ya, yb) in a.outputs.iter().zip(&b.outputs) {
            assert!((ya - yb).norm() < 1e-12);
        }
    }

    #[test]
    fn f_moments_half_correlation() {
        let p = params(1.0, 2, 4.0 * LN_2);
        let m = estimate_f_moments(&p, 200_000, 42).unwrap();
        assert!(m.m2.agrees_with(0.75, 4.0, 0.0), "{:?}", m.m2);
        assert!(m.mean_real.agrees_with(0.75, 4.0, 0.0), "{:?}", m.mean_real);
    }

    #[test]
    fn f_moments_degenerate_cases() {
        let m = estimate_f_moments(&params(1.0, 8, 0.0), 2000, 1).unwrap();
        assert_eq!(m.m2.mean, 1.0);
        assert_eq!(m.m4.mean, 1.0);
        let m = estimate_f_moments(&params(1.0, 1, 5.0), 2000, 1).unwrap();
        assert_eq!((m.m2.mean, m.m4.mean), (1.0, 1.0));
        assert!(estimate_f_moments(&params(1.0, 1, 5.0), 999, 1).is_err());
    }

    #[test]
    fn estimates_are_bit_reproducible() {
        let p = params(1.0, 5, 0.8);
        let a = estimate_f_moments(&p, 50_000, 99).unwrap();
        let b = estimate_f_moments(&p, 50_000, 99).unwrap();
        assert_eq!(a.m2.mean.to_bits(), b.m2.mean.to_bits());
        assert_eq!(a.mean_log_sq.mean.to_bits(), b.mean_log_sq.mean.to_bits());
        let single = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let c = single.install(|| estimate_f_moments(&p, 50_000, 99).unwrap());
        assert_eq!(a.m4.mean.to_bits(), c.m4.mean.to_bits());
    }

    #[test]
    fn fading_integral_mean_matches_exact() {
        let est = simulate_fading_integral(2.0, DEFAULT_TIME_STEPS, 40_000, 5).unwrap();
        let target = 1.0 - (-1.0f64).exp();
        assert_relative_eq!(fading_integral_mean(2.0), target, max_relative = 1e-15);
        let bias = (1.0 - (-1.0f64).exp()) / DEFAULT_TIME_STEPS as f64;
        assert!(est.re.agrees_with(target, 4.0, bias), "{:?}", est.re);
        assert!(est.im.agrees_with(0.0, 4.0, 0.0), "{:?}", est.im);

        let flat = simulate_fading_integral(0.0, 100, 100, 5).unwrap();
        assert_relative_eq!(flat.re.mean, 1.0, epsilon = 1e-12);
        assert_eq!(flat.im.mean, 0.0);
        assert!(simulate_fading_integral(1.0, 1, 100, 5).is_err());
    }

    #[test]
    fn log_abs_sq_matches_euler_gamma() {
        for (power, n) in [
            (1.0, 1_000_000),
            (EULER_GAMMA.exp(), 200_000),
            (4.0, 200_000),
        ] {
            let est = estimate_log_abs_sq(power, n, 3).unwrap();
            assert!(
                est.agrees_with(power.ln() - EULER_GAMMA, 4.0, 0.0),
                "{power}: {est:?}"
            );
        }
        assert!(estimate_log_abs_sq(0.0, 10, 0).is_err());
        assert!(estimate_log_abs_sq(-1.0, 10, 0).is_err());
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(42, 0), derive_seed(42, 1));
        assert_eq!(derive_seed(42, 3), derive_seed(42, 3));
    }
}
