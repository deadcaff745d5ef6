//! Plug-in histogram estimators of mutual information and differential
//! entropy, and the two scalar sub-channels whose rates the partially
//! coherent lower bound controls.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::ChannelParams;
use crate::sim::{complex_normal, run_chunked, CHUNK_SIZE, NOISE_VARIANCE};

pub const MIN_SAMPLES: usize = 10_000;
pub const MIN_BINS: usize = 8;
pub const MAX_BINS: usize = 1024;
pub const DEFAULT_BINS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MiEstimate {
    /// Plug-in estimate, nats.
    pub value: f64,
    /// Delta-method standard error of the plug-in estimate.
    pub std_error: f64,
    pub n_samples: usize,
    pub n_bins: usize,
    /// Miller-Madow bias scale `(n_bins - 1)^2 / (2n)`: the expected upward
    /// bias of the plug-in estimate when the variables are independent.
    pub bias_allowance: f64,
    /// A marginal was constant; `value` is 0.
    pub degenerate: bool,
}

impl MiEstimate {
    /// Lowest value consistent with the estimate: `value - k SE - allowance`.
    pub fn lower_envelope(&self, k: f64) -> f64 {
        self.value - k * self.std_error - self.bias_allowance
    }
}

fn check_pair(x: &[f64], y: &[f64], n_bins: usize) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    if x.len() < MIN_SAMPLES {
        return Err(Error::InvalidArgument(format!(
            "need at least {MIN_SAMPLES} samples, got {}",
            x.len()
        )));
    }
    if !(MIN_BINS..=MAX_BINS).contains(&n_bins) {
        return Err(Error::InvalidArgument(format!(
            "bins must be in [{MIN_BINS}, {MAX_BINS}], got {n_bins}"
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("samples contain NaN or infinity".into()));
    }
    Ok(())
}

/// Interior quantile edges; a value's bin is the number of edges `<=` it.
/// `None` for a constant sample.
fn quantile_edges(samples: &[f64], n_bins: usize) -> Option<Vec<f64>> {
    let mut sorted = samples.to_vec();
    sorted.par_sort_unstable_by(f64::total_cmp);
    if sorted[0] == sorted[sorted.len() - 1] {
        return None;
    }
    let n = sorted.len();
    Some((1..n_bins).map(|k| sorted[k * n / n_bins]).collect())
}

#[inline]
fn quantile_bin(edges: &[f64], v: f64) -> usize {
    edges.partition_point(|&e| e <= v)
}

#[inline]
fn circular_bin(v: f64, n_bins: usize) -> usize {
    let w = v.rem_euclid(TAU);
    ((w / TAU * n_bins as f64) as usize).min(n_bins - 1)
}

/// Joint counts accumulated per chunk and merged by integer addition.
fn joint_counts<F>(n: usize, n_bins: usize, bins_of: F) -> Vec<u64>
where
    F: Fn(usize) -> (usize, usize) + Sync,
{
    let chunk = CHUNK_SIZE as usize;
    (0..n.div_ceil(chunk))
        .into_par_iter()
        .map(|c| {
            let mut counts = vec![0u64; n_bins * n_bins];
            for i in c * chunk..((c + 1) * chunk).min(n) {
                let (a, b) = bins_of(i);
                counts[a * n_bins + b] += 1;
            }
            counts
        })
        .reduce(
            || vec![0u64; n_bins * n_bins],
            |mut acc, part| {
                acc.iter_mut().zip(&part).for_each(|(a, b)| *a += b);
                acc
            },
        )
}

/// Plug-in MI and its delta-method standard error from a joint count table.
fn mi_from_counts(counts: &[u64], n_bins: usize, n: usize) -> MiEstimate {
    let nf = n as f64;
    let mut rows = vec![0u64; n_bins];
    let mut cols = vec![0u64; n_bins];
    for a in 0..n_bins {
        for b in 0..n_bins {
            let c = counts[a * n_bins + b];
            rows[a] += c;
            cols[b] += c;
        }
    }
    let (mut m1, mut m2) = (0.0, 0.0);
    for a in 0..n_bins {
        for b in 0..n_bins {
            let c = counts[a * n_bins + b];
            if c == 0 {
                continue;
            }
            let p = c as f64 / nf;
            let pmi = (c as f64 * nf / (rows[a] as f64 * cols[b] as f64)).ln();
            m1 += p * pmi;
            m2 += p * pmi * pmi;
        }
    }
    MiEstimate {
        value: m1,
        std_error: ((m2 - m1 * m1).max(0.0) / nf).sqrt(),
        n_samples: n,
        n_bins,
        bias_allowance: ((n_bins - 1) as f64).powi(2) / (2.0 * nf),
        degenerate: false,
    }
}

fn degenerate(n: usize, n_bins: usize) -> MiEstimate {
    MiEstimate {
        value: 0.0,
        std_error: 0.0,
        n_samples: n,
        n_bins,
        bias_allowance: ((n_bins - 1) as f64).powi(2) / (2.0 * n as f64),
        degenerate: true,
    }
}

/// MI between two real samples from an `n_bins x n_bins` equal-mass histogram.
pub fn histogram_mi(x: &[f64], y: &[f64], n_bins: usize) -> Result<MiEstimate> {
    check_pair(x, y, n_bins)?;
    let (Some(ex), Some(ey)) = (quantile_edges(x, n_bins), quantile_edges(y, n_bins)) else {
        return Ok(degenerate(x.len(), n_bins));
    };
    let counts = joint_counts(x.len(), n_bins, |i| {
        (quantile_bin(&ex, x[i]), quantile_bin(&ey, y[i]))
    });
    Ok(mi_from_counts(&counts, n_bins, x.len()))
}

/// MI between two angles, each wrapped to `[0, 2pi)` and cut into `n_bins`
/// equal arcs.
pub fn circular_histogram_mi(x: &[f64], y: &[f64], n_bins: usize) -> Result<MiEstimate> {
    check_pair(x, y, n_bins)?;
    let constant = |s: &[f64]| {
        let first = s[0].rem_euclid(TAU);
        s.iter().all(|v| v.rem_euclid(TAU) == first)
    };
    if constant(x) || constant(y) {
        return Ok(degenerate(x.len(), n_bins));
    }
    let counts = joint_counts(x.len(), n_bins, |i| {
        (circular_bin(x[i], n_bins), circular_bin(y[i], n_bins))
    });
    Ok(mi_from_counts(&counts, n_bins, x.len()))
}

/// Differential entropy from an equal-width histogram over the sample range,
/// `-sum p_i ln(p_i / width)`.
pub fn histogram_entropy(samples: &[f64], n_bins: usize) -> Result<f64> {
    if samples.len() < MIN_SAMPLES {
        return Err(Error::InvalidArgument(format!(
            "need at least {MIN_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    if n_bins < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 bins, got {n_bins}"
        )));
    }
    let (lo, hi) = samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::NonFinite("samples contain NaN or infinity".into()));
    }
    if lo == hi {
        return Err(Error::InvalidArgument(
            "constant sample has no density".into(),
        ));
    }
    let width = (hi - lo) / n_bins as f64;
    let mut counts = vec![0u64; n_bins];
    for &v in samples {
        counts[(((v - lo) / width) as usize).min(n_bins - 1)] += 1;
    }
    let n = samples.len() as f64;
    Ok(counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * (p / width).ln()
        })
        .sum())
}

/// Draws `n` samples of `|sqrt(lambda) + W|^2 + sum of k-1 further |W|^2`
/// with `W ~ CN(0, 2)`: a non-central chi-squared with `2k` degrees of
/// freedom and non-centrality `lambda`.
pub fn sample_noncentral_chi2(k: u64, lambda: f64, n: usize, seed: u64) -> Result<Vec<f64>> {
    if k == 0 || !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need k >= 1 and lambda >= 0, got k={k}, lambda={lambda}"
        )));
    }
    let mean = Complex64::new(lambda.sqrt(), 0.0);
    let parts = run_chunked(n as u64, seed, |rng, count| {
        (0..count)
            .map(|_| {
                let head = (mean + complex_normal(rng, NOISE_VARIANCE)).norm_sqr();
                head + (1..k)
                    .map(|_| complex_normal(rng, NOISE_VARIANCE).norm_sqr())
                    .sum::<f64>()
            })
            .collect::<Vec<_>>()
    });
    Ok(parts.concat())
}

/// Samples of `(|X|^2, ||Y||^2)` for one input symbol `X ~ CN(0, P/L)`
/// passed through a full block of `L` phase-noisy samples.
pub fn sample_amplitude_channel(
    params: &ChannelParams,
    n: usize,
    seed: u64,
) -> (Vec<f64>, Vec<f64>) {
    let l = params.oversampling();
    let px = params.symbol_power();
    let step = params.increment_variance().sqrt();
    let parts = run_chunked(n as u64, seed, |rng, count| {
        let mut xs = Vec::with_capacity(count as usize);
        let mut ys = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let x = complex_normal(rng, px);
            let mut theta = rng.random::<f64>() * TAU;
            let mut energy = 0.0;
            for _ in 0..l {
                theta += step * rng.sample::<f64, _>(StandardNormal);
                energy += (x * Complex64::from_polar(1.0, theta)
                    + complex_normal(rng, NOISE_VARIANCE))
                .norm_sqr();
            }
            xs.push(x.norm_sqr());
            ys.push(energy);
        }
        (xs, ys)
    });
    let (xs, ys): (Vec<Vec<f64>>, Vec<Vec<f64>>) = parts.into_iter().unzip();
    (xs.concat(), ys.concat())
}

/// Estimate of the amplitude-channel rate `I(|X|^2; ||Y||^2)`.
pub fn amplitude_channel_mi(
    params: &ChannelParams,
    n_samples: usize,
    seed: u64,
) -> Result<MiEstimate> {
    amplitude_channel_mi_with_bins(params, n_samples, seed, DEFAULT_BINS)
}

pub fn amplitude_channel_mi_with_bins(
    params: &ChannelParams,
    n_samples: usize,
    seed: u64,
    n_bins: usize,
) -> Result<MiEstimate> {
    if n_samples < MIN_SAMPLES {
        return Err(Error::InvalidArgument(format!(
            "need at least {MIN_SAMPLES} samples, got {n_samples}"
        )));
    }
    if params.power() == 0.0 {
        return Ok(degenerate(n_samples, n_bins));
    }
    let (x, y) = sample_amplitude_channel(params, n_samples, seed);
    histogram_mi(&x, &y, n_bins)
}

/// Samples of `(angle X_1, T)` where `T` is the two-sample statistic
/// `angle(Y_L conj(Y_{L-1}) X_0)`: the last output of symbol 0 and the first
/// output of symbol 1, de-rotated by the known previous input.
pub fn sample_phase_channel(params: &ChannelParams, n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let px = params.symbol_power();
    let step = params.increment_variance().sqrt();
    let parts = run_chunked(n as u64, seed, |rng, count| {
        let mut xs = Vec::with_capacity(count as usize);
        let mut ts = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let x0 = complex_normal(rng, px);
            let x1 = complex_normal(rng, px);
            let theta0 = rng.random::<f64>() * TAU;
            let theta1 = theta0 + step * rng.sample::<f64, _>(StandardNormal);
            let y0 = x0 * Complex64::from_polar(1.0, theta0) + complex_normal(rng, NOISE_VARIANCE);
            let y1 = x1 * Complex64::from_polar(1.0, theta1) + complex_normal(rng, NOISE_VARIANCE);
            xs.push(x1.arg());
            ts.push((y1 * y0.conj() * x0).arg());
        }
        (xs, ts)
    });
    let (xs, ts): (Vec<Vec<f64>>, Vec<Vec<f64>>) = parts.into_iter().unzip();
    (xs.concat(), ts.concat())
}

/// Estimate of `I(angle X_1; T)`, with `|X_1|` and `X_0` marginalized.
pub fn phase_channel_mi(params: &ChannelParams, n_samples: usize, seed: u64) -> Result<MiEstimate> {
    phase_channel_mi_with_bins(params, n_samples, seed, DEFAULT_BINS)
}

pub fn phase_channel_mi_with_bins(
    params: &ChannelParams,
    n_samples: usize,
    seed: u64,
    n_bins: usize,
) -> Result<MiEstimate> {
    if n_samples < MIN_SAMPLES {
        return Err(Error::InvalidArgument(format!(
            "need at least {MIN_SAMPLES} samples, got {n_samples}"
        )));
    }
    if params.power() == 0.0 {
        return Ok(degenerate(n_samples, n_bins));
    }
    let (x, t) = sample_phase_channel(params, n_samples, seed);
    circular_histogram_mi(&x, &t, n_bins)
}
