//! Sweep specifications: axis syntax, the key=value config file, and the
//! merge of config values with command-line flags.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use owpn::model::MAX_OVERSAMPLING;
use owpn::Units;

use crate::error::{CliError, Result};

/// Default cap on the number of grid rows.
pub const DEFAULT_MAX_ROWS: u64 = 10_000_000;

/// One sweep axis.
///
/// Syntax: `v1,v2,...`, `log:start:stop:n` (log-spaced, positive endpoints)
/// or `lin:start:stop:n`.
#[derive(Debug, Clone, PartialEq)]
pub enum Axis {
    List(Vec<f64>),
    Log { start: f64, stop: f64, n: usize },
    Lin { start: f64, stop: f64, n: usize },
}

impl Axis {
    pub fn values(&self) -> Vec<f64> {
        match *self {
            Axis::List(ref v) => v.clone(),
            Axis::Log { start, stop, n } => {
                let (lo, hi) = (start.log10(), stop.log10());
                spaced(n, |t| 10f64.powf(lo + (hi - lo) * t), start, stop)
            }
            Axis::Lin { start, stop, n } => spaced(n, |t| start + (stop - start) * t, start, stop),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Axis::List(v) => v.len(),
            Axis::Log { n, .. } | Axis::Lin { n, .. } => *n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// `n` points with exact endpoints.
fn spaced(n: usize, f: impl Fn(f64) -> f64, start: f64, stop: f64) -> Vec<f64> {
    if n == 1 {
        return vec![start];
    }
    (0..n)
        .map(|i| match i {
            0 => start,
            _ if i == n - 1 => stop,
            _ => f(i as f64 / (n - 1) as f64),
        })
        .collect()
}

fn parse_number(s: &str) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| CliError::usage(format!("not a number: {s:?}")))?;
    if !v.is_finite() {
        return Err(CliError::usage(format!("not a finite number: {s:?}")));
    }
    Ok(v)
}

impl FromStr for Axis {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let range = |rest: &str, kind: &str| -> Result<(f64, f64, usize)> {
            let parts: Vec<&str> = rest.split(':').collect();
            let [start, stop, n] = parts[..] else {
                return Err(CliError::usage(format!(
                    "{kind} range needs start:stop:n, got {s:?}"
                )));
            };
            let n: usize = n
                .trim()
                .parse()
                .map_err(|_| CliError::usage(format!("bad point count in {s:?}")))?;
            if n == 0 {
                return Err(CliError::usage(format!("empty axis {s:?}")));
            }
            Ok((parse_number(start)?, parse_number(stop)?, n))
        };
        if let Some(rest) = s.strip_prefix("log:") {
            let (start, stop, n) = range(rest, "log")?;
            if start <= 0.0 || stop <= 0.0 {
                return Err(CliError::usage(format!(
                    "log range needs positive endpoints, got {s:?}"
                )));
            }
            Ok(Axis::Log { start, stop, n })
        } else if let Some(rest) = s.strip_prefix("lin:") {
            let (start, stop, n) = range(rest, "lin")?;
            Ok(Axis::Lin { start, stop, n })
        } else {
            let values = s
                .split(',')
                .filter(|t| !t.trim().is_empty())
                .map(parse_number)
                .collect::<Result<Vec<_>>>()?;
            if values.is_empty() {
                return Err(CliError::usage("empty axis"));
            }
            Ok(Axis::List(values))
        }
    }
}

/// Raw settings before defaults are applied. Every field is the unparsed
/// string from a flag or config line.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawSettings {
    pub p: Option<String>,
    pub l: Option<String>,
    pub sigma2: Option<String>,
    pub alpha: Option<String>,
    pub beta: Option<String>,
    pub units: Option<String>,
    pub seed: Option<String>,
    pub samples: Option<String>,
    pub out: Option<String>,
    pub threads: Option<String>,
    pub tol_scale: Option<String>,
    pub max_rows: Option<String>,
}

impl RawSettings {
    /// Reads a config file: one `key = value` per line, `#` starts a comment.
    pub fn from_config_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_config_str(&text)
    }

    pub fn from_config_str(text: &str) -> Result<Self> {
        let mut raw = RawSettings::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::usage(format!(
                    "config line {}: expected key=value",
                    lineno + 1
                )));
            };
            let value = Some(value.trim().to_string());
            let slot = match key.trim() {
                "P" => &mut raw.p,
                "L" => &mut raw.l,
                "sigma2" => &mut raw.sigma2,
                "alpha" => &mut raw.alpha,
                "beta" => &mut raw.beta,
                "units" => &mut raw.units,
                "seed" => &mut raw.seed,
                "samples" => &mut raw.samples,
                "out" => &mut raw.out,
                "threads" => &mut raw.threads,
                "tol-scale" => &mut raw.tol_scale,
                "max-rows" => &mut raw.max_rows,
                other => {
                    return Err(CliError::usage(format!(
                        "config line {}: unknown key {other:?}",
                        lineno + 1
                    )))
                }
            };
            *slot = value;
        }
        Ok(raw)
    }

    /// Fields set in `self` win over those in `base`.
    pub fn over(self, base: RawSettings) -> RawSettings {
        RawSettings {
            p: self.p.or(base.p),
            l: self.l.or(base.l),
            sigma2: self.sigma2.or(base.sigma2),
            alpha: self.alpha.or(base.alpha),
            beta: self.beta.or(base.beta),
            units: self.units.or(base.units),
            seed: self.seed.or(base.seed),
            samples: self.samples.or(base.samples),
            out: self.out.or(base.out),
            threads: self.threads.or(base.threads),
            tol_scale: self.tol_scale.or(base.tol_scale),
            max_rows: self.max_rows.or(base.max_rows),
        }
    }
}

/// Axis defaults used when neither a flag nor the config sets an axis.
#[derive(Debug, Clone, Copy)]
pub struct AxisDefaults {
    pub p: &'static str,
    pub l: &'static str,
    pub sigma2: &'static str,
    pub alpha: &'static str,
    pub beta: &'static str,
    pub samples: u64,
}

impl Default for AxisDefaults {
    fn default() -> Self {
        Self {
            p: "1,10,100,1000",
            l: "1,4,16",
            sigma2: "0.01,1",
            alpha: "0,0.25,0.5,0.75,1,1.5,2,3",
            beta: "-2,-1,-0.5,0,0.5,1,2",
            samples: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub p: Vec<f64>,
    pub l: Vec<u64>,
    pub sigma2: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub units: Units,
    pub seed: u64,
    pub n_samples: u64,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub tol_scale: f64,
    pub max_rows: u64,
}

fn parse_opt<T: FromStr>(value: Option<&str>, name: &str, default: T) -> Result<T> {
    match value {
        None => Ok(default),
        Some(s) => s
            .trim()
            .parse()
            .map_err(|_| CliError::usage(format!("bad value for {name}: {s:?}"))),
    }
}

fn axis(value: Option<&str>, default: &str, name: &str) -> Result<Vec<f64>> {
    let axis: Axis = value.unwrap_or(default).parse().map_err(|e| match e {
        CliError::Usage(m) => CliError::usage(format!("--{name}: {m}")),
        other => other,
    })?;
    Ok(axis.values())
}

impl SweepSpec {
    pub fn resolve(raw: &RawSettings, defaults: &AxisDefaults) -> Result<Self> {
        let p = axis(raw.p.as_deref(), defaults.p, "P")?;
        if let Some(bad) = p.iter().find(|&&v| v < 0.0) {
            return Err(CliError::usage(format!(
                "--P values must be >= 0, got {bad}"
            )));
        }
        let sigma2 = axis(raw.sigma2.as_deref(), defaults.sigma2, "sigma2")?;
        if let Some(bad) = sigma2.iter().find(|&&v| v < 0.0) {
            return Err(CliError::usage(format!(
                "--sigma2 values must be >= 0, got {bad}"
            )));
        }
        let l = axis(raw.l.as_deref(), defaults.l, "L")?
            .into_iter()
            .map(|v| {
                let r = v.round();
                if r < 1.0 || r > MAX_OVERSAMPLING as f64 || (v - r).abs() > 1e-9 * r.max(1.0) {
                    Err(CliError::usage(format!(
                        "--L values must be integers in [1, 2^62], got {v}"
                    )))
                } else {
                    Ok(r as u64)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let alpha = axis(raw.alpha.as_deref(), defaults.alpha, "alpha")?;
        if let Some(bad) = alpha.iter().find(|&&v| v < 0.0) {
            return Err(CliError::usage(format!(
                "--alpha values must be >= 0, got {bad}"
            )));
        }
        let beta = axis(raw.beta.as_deref(), defaults.beta, "beta")?;

        let units = parse_opt(raw.units.as_deref(), "units", Units::Nats)?;
        let seed = parse_opt(raw.seed.as_deref(), "seed", 42u64)?;
        let n_samples = parse_opt(raw.samples.as_deref(), "samples", defaults.samples)?;
        let threads = match raw.threads.as_deref() {
            None => None,
            Some(s) => match s.trim().parse::<usize>() {
                Ok(n) if n > 0 => Some(n),
                _ => {
                    return Err(CliError::usage(format!(
                        "--threads must be a positive integer, got {s:?}"
                    )))
                }
            },
        };
        let tol_scale = parse_opt(raw.tol_scale.as_deref(), "tol-scale", 1.0f64)?;
        if !(tol_scale.is_finite() && tol_scale >= 0.0) {
            return Err(CliError::usage(format!(
                "--tol-scale must be >= 0, got {tol_scale}"
            )));
        }
        let max_rows = parse_opt(raw.max_rows.as_deref(), "max-rows", DEFAULT_MAX_ROWS)?;
        Ok(SweepSpec {
            p,
            l,
            sigma2,
            alpha,
            beta,
            units,
            seed,
            n_samples,
            out: raw.out.as_ref().map(PathBuf::from),
            threads,
            tol_scale,
            max_rows,
        })
    }

    /// Checks that a grid with the given axis lengths fits under the row cap.
    pub fn check_rows(&self, lens: &[usize]) -> Result<u64> {
        let rows = lens
            .iter()
            .try_fold(1u64, |acc, &n| acc.checked_mul(n as u64))
            .filter(|&r| r <= self.max_rows)
            .ok_or_else(|| {
                CliError::usage(format!("grid exceeds the {}-row cap", self.max_rows))
            })?;
        Ok(rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_lists_and_ranges() {
        assert_eq!(
            "1,2.5,-3".parse::<Axis>().unwrap().values(),
            vec![1.0, 2.5, -3.0]
        );
        let v = "log:1:1e4:5".parse::<Axis>().unwrap().values();
        assert_eq!(v, vec![1.0, 10.0, 100.0, 1000.0, 1e4]);
        let v = "lin:-1:1:5".parse::<Axis>().unwrap().values();
        assert_eq!(v, vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
        assert_eq!("log:3:7:1".parse::<Axis>().unwrap().values(), vec![3.0]);
    }

    #[test]
    fn rejects_bad_axes() {
        for bad in [
            "",
            "log:0:10:3",
            "log:1:10",
            "log:1:10:0",
            "a,b",
            "1,inf",
            "lin:0:1:x",
        ] {
            assert!(bad.parse::<Axis>().is_err(), "{bad}");
        }
    }

    #[test]
    fn config_file_and_flag_precedence() {
        let cfg =
            RawSettings::from_config_str("# sweep\nP = 1,2\nseed=7\nunits = bits # trailing\n")
                .unwrap();
        let flags = RawSettings {
            seed: Some("9".into()),
            ..Default::default()
        };
        let spec = SweepSpec::resolve(&flags.over(cfg), &AxisDefaults::default()).unwrap();
        assert_eq!(spec.p, vec![1.0, 2.0]);
        assert_eq!(spec.seed, 9);
        assert_eq!(spec.units, Units::Bits);
        assert!(RawSettings::from_config_str("nonsense").is_err());
        assert!(RawSettings::from_config_str("colour=red").is_err());
    }

    #[test]
    fn validates_values() {
        let d = AxisDefaults::default();
        let bad = |raw: RawSettings| SweepSpec::resolve(&raw, &d).is_err();
        assert!(bad(RawSettings {
            l: Some("2.5".into()),
            ..Default::default()
        }));
        assert!(bad(RawSettings {
            l: Some("0".into()),
            ..Default::default()
        }));
        assert!(bad(RawSettings {
            p: Some("-1".into()),
            ..Default::default()
        }));
        assert!(bad(RawSettings {
            sigma2: Some("-1".into()),
            ..Default::default()
        }));
        assert!(bad(RawSettings {
            alpha: Some("-0.5".into()),
            ..Default::default()
        }));
        assert!(bad(RawSettings {
            threads: Some("0".into()),
            ..Default::default()
        }));
        assert!(bad(RawSettings {
            tol_scale: Some("-1".into()),
            ..Default::default()
        }));
        assert!(bad(RawSettings {
            units: Some("furlongs".into()),
            ..Default::default()
        }));
    }

    #[test]
    fn row_cap() {
        let spec = SweepSpec::resolve(
            &RawSettings {
                max_rows: Some("10".into()),
                ..Default::default()
            },
            &AxisDefaults::default(),
        )
        .unwrap();
        assert_eq!(spec.check_rows(&[2, 5]).unwrap(), 10);
        assert!(spec.check_rows(&[3, 4]).is_err());
        assert!(spec.check_rows(&[usize::MAX, usize::MAX]).is_err());
    }
}
