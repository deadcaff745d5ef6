//! The subcommands. Each one turns a [`SweepSpec`] into a [`Table`]; rows are
//! computed in parallel and collected in grid order.

use std::fmt::Write as _;

use log::info;
use rayon::prelude::*;

use owpn::bounds::{lower_coherent_combining, lower_partially_coherent, upper_outer};
use owpn::gdof::{
    classify_regime, gdof_exact_if_known, gdof_inner_cc, gdof_inner_combined, gdof_inner_pc,
    gdof_outer,
};
use owpn::mioracle::{amplitude_channel_mi, phase_channel_mi, MIN_SAMPLES};
use owpn::model::{derive_constants, EULER_GAMMA};
use owpn::riccati::{
    iterate_fixed_point, posterior_crb_entropy_lower, riccati_fixed_point, FisherState,
    FIXED_POINT_TOL,
};
use owpn::sim::{
    derive_seed, estimate_f_moments, estimate_log_abs_sq, fading_integral_mean,
    simulate_fading_integral,
};
use owpn::{ChannelParams, GdofPoint, McEstimate};

use crate::error::{CliError, Result};
use crate::spec::SweepSpec;

/// A CSV table: fixed header and pre-formatted rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<String>,
}

impl Table {
    /// UTF-8, comma separated, LF line endings, header first.
    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(row);
            out.push('\n');
        }
        out
    }
}

/// Fixed 17-significant-digit scientific format, independent of locale.
pub fn num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v:.16e}")
    }
}

pub fn bounds(spec: &SweepSpec) -> Result<Table> {
    spec.check_rows(&[spec.p.len(), spec.l.len(), spec.sigma2.len()])?;
    let grid = param_grid(spec)?;
    let u = spec.units;
    let rows = grid
        .par_iter()
        .map(|cp| {
            let mut row = format!(
                "{},{},{}",
                num(cp.power()),
                cp.oversampling(),
                num(cp.sigma2())
            );
            for b in [
                upper_outer(cp),
                lower_partially_coherent(cp),
                lower_coherent_combining(cp),
            ] {
                let s = b.rate_split.in_units(u);
                write!(
                    row,
                    ",{},{},{}",
                    num(s.clamped_total),
                    num(s.amplitude_rate),
                    num(s.phase_rate)
                )
                .unwrap();
            }
            write!(row, ",{u}").unwrap();
            row
        })
        .collect();
    Ok(Table {
        header: vec![
            "P",
            "L",
            "sigma2",
            "upper_total",
            "upper_amp",
            "upper_phase",
            "pc_total",
            "pc_amp",
            "pc_phase",
            "cc_total",
            "cc_amp",
            "cc_phase",
            "units",
        ],
        rows,
    })
}

fn param_grid(spec: &SweepSpec) -> Result<Vec<ChannelParams>> {
    let mut grid = Vec::with_capacity(spec.p.len() * spec.l.len() * spec.sigma2.len());
    for &p in &spec.p {
        for &l in &spec.l {
            for &s2 in &spec.sigma2 {
                grid.push(ChannelParams::new(p, l, s2)?);
            }
        }
    }
    Ok(grid)
}

pub fn gdof(spec: &SweepSpec) -> Result<Table> {
    spec.check_rows(&[spec.alpha.len(), spec.beta.len()])?;
    let mut grid = Vec::with_capacity(spec.alpha.len() * spec.beta.len());
    for &a in &spec.alpha {
        for &b in &spec.beta {
            grid.push(GdofPoint::new(a, b)?);
        }
    }
    let rows = grid
        .par_iter()
        .map(|pt| {
            let (exact, regime) = match gdof_exact_if_known(pt) {
                Some((v, r)) => (num(v.total), r.to_string()),
                None => (String::new(), String::new()),
            };
            format!(
                "{},{},{},{},{},{},{},{}",
                num(pt.alpha()),
                num(pt.beta()),
                num(gdof_outer(pt).total),
                num(gdof_inner_pc(pt).total),
                num(gdof_inner_cc(pt).total),
                num(gdof_inner_combined(pt).total),
                exact,
                regime
            )
        })
        .collect();
    Ok(Table {
        header: vec![
            "alpha",
            "beta",
            "d_outer",
            "d_inner_pc",
            "d_inner_cc",
            "d_inner_combined",
            "d_exact",
            "regime_of_exactness",
        ],
        rows,
    })
}

pub fn regimes(spec: &SweepSpec) -> Result<Table> {
    spec.check_rows(&[spec.p.len(), spec.l.len(), spec.sigma2.len()])?;
    let grid = param_grid(spec)?;
    let u = spec.units;
    let rows = grid
        .par_iter()
        .map(|cp| {
            let (regime, gap) = classify_regime(cp);
            let gap = gap.map(|g| num(u.from_nats(g))).unwrap_or_default();
            format!(
                "{},{},{},{regime},{gap},{u}",
                num(cp.power()),
                cp.oversampling(),
                num(cp.sigma2())
            )
        })
        .collect();
    Ok(Table {
        header: vec!["P", "L", "sigma2", "regime", "gap", "units"],
        rows,
    })
}

/// Text report for one run of the Fisher-information recursion.
pub fn riccati_report(x: f64, ratio: f64, max_iter: usize) -> Result<String> {
    let start = FisherState::new(0.0, x, ratio)?;
    let closed = riccati_fixed_point(x, ratio)?;
    let conv = iterate_fixed_point(&start, FIXED_POINT_TOL, max_iter, true)?;
    let mut out = String::new();
    writeln!(out, "# x = {x}, L/sigma2 = {ratio}").unwrap();
    writeln!(out, "iteration,J").unwrap();
    let shown = 20.min(conv.trace.len());
    for (k, j) in conv.trace.iter().enumerate().take(shown) {
        writeln!(out, "{k},{}", num(*j)).unwrap();
    }
    if conv.trace.len() > shown {
        writeln!(out, "...").unwrap();
        writeln!(out, "{},{}", conv.trace.len() - 1, num(conv.j)).unwrap();
    }
    writeln!(out, "iterations: {}", conv.iterations).unwrap();
    writeln!(out, "fixed point (iterated): {}", num(conv.j)).unwrap();
    writeln!(out, "fixed point (closed form): {}", num(closed)).unwrap();
    match posterior_crb_entropy_lower(x, ratio) {
        Ok(h) => writeln!(out, "CRB entropy lower bound: {} nats", num(h)).unwrap(),
        Err(_) => writeln!(out, "CRB entropy lower bound: undefined for x = 0").unwrap(),
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    AnalyticLimit,
}

impl Status {
    fn as_str(self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::AnalyticLimit => "analytic-limit",
        }
    }
}

/// One row of the verification suite.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckRow {
    pub check: &'static str,
    pub p: Option<f64>,
    pub l: Option<u64>,
    pub sigma2: Option<f64>,
    pub measured: f64,
    pub expected: f64,
    /// Signed deviation; the check passes when it is at most `tolerance`.
    pub deviation: f64,
    pub tolerance: f64,
    pub status: Status,
}

impl CheckRow {
    fn format(&self) -> String {
        let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.check,
            opt(self.p),
            self.l.map(|l| l.to_string()).unwrap_or_default(),
            opt(self.sigma2),
            num(self.measured),
            num(self.expected),
            num(self.deviation),
            num(self.tolerance),
            self.status.as_str()
        )
    }
}

#[derive(Debug, Clone, Copy)]
enum Task {
    KappaClosed(u64, f64),
    PhiClosed(u64, f64),
    FMoments(u64, f64),
    Fading(u64, f64),
    LogAbsSq(f64),
    Riccati(ChannelParams),
    Mi(ChannelParams),
}

/// Term-by-term `(1/L) sum xi^k` and `(1/L^2) sum_{i,k} xi^|i-k|`, the latter
/// grouped by lag.
fn coherence_by_summation(l: u64, sigma2: f64) -> (f64, f64) {
    let xi = (-sigma2 / (2.0 * l as f64)).exp();
    let (mut kappa, mut phi, mut pow) = (0.0, 0.0, 1.0);
    for d in 0..l {
        kappa += pow;
        phi += if d == 0 {
            l as f64
        } else {
            2.0 * (l - d) as f64 * pow
        };
        pow *= xi;
    }
    (kappa / l as f64, phi / (l as f64 * l as f64))
}

/// Largest `L` for which the summation oracle is run.
const SUMMATION_MAX_L: u64 = 1 << 20;
/// Riemann steps for the fading-integral check.
const FADING_STEPS: usize = 200;

/// Closed form vs summation, relative tolerance.
const CLOSED_FORM_TOL: f64 = 1e-10;
/// Monte Carlo checks pass within this many standard errors.
const MC_SIGMAS: f64 = 4.0;
/// Slack on the amplitude/phase MI checks, nats.
const MI_SLACK: f64 = 0.05;
/// Slack on the achievable-vs-outer check, nats.
const OUTER_SLACK: f64 = 0.1;
/// Relative tolerance of the Riccati check.
const RICCATI_TOL: f64 = 1e-9;

fn row(
    check: &'static str,
    cp: (Option<f64>, Option<u64>, Option<f64>),
    measured: f64,
    expected: f64,
    deviation: f64,
    tolerance: f64,
) -> CheckRow {
    let status = if deviation <= tolerance {
        Status::Pass
    } else {
        Status::Fail
    };
    CheckRow {
        check,
        p: cp.0,
        l: cp.1,
        sigma2: cp.2,
        measured,
        expected,
        deviation,
        tolerance,
        status,
    }
}

fn mc_row(
    check: &'static str,
    at: (Option<f64>, Option<u64>, Option<f64>),
    est: &McEstimate,
    expected: f64,
    slack: f64,
    scale: f64,
) -> CheckRow {
    row(
        check,
        at,
        est.mean,
        expected,
        (est.mean - expected).abs(),
        scale * (MC_SIGMAS * est.std_error + slack),
    )
}

fn run_task(task: Task, spec: &SweepSpec, label: u64) -> Result<Vec<CheckRow>> {
    let seed = derive_seed(spec.seed, label);
    let n = spec.n_samples;
    let scale = spec.tol_scale;
    let limit_row = |check, l, s2, value: f64| CheckRow {
        check,
        p: None,
        l: Some(l),
        sigma2: Some(s2),
        measured: value,
        expected: 1.0,
        deviation: value - 1.0,
        tolerance: 0.0,
        status: Status::AnalyticLimit,
    };
    let rows = match task {
        Task::KappaClosed(l, s2) | Task::PhiClosed(l, s2) => {
            let c = derive_constants(&ChannelParams::new(1.0, l, s2)?);
            let is_kappa = matches!(task, Task::KappaClosed(..));
            let (check, value) = if is_kappa {
                ("kappa_closed_form", c.kappa)
            } else {
                ("phi_closed_form", c.phi)
            };
            if c.is_analytic_limit() {
                vec![limit_row(check, l, s2, value)]
            } else if l > SUMMATION_MAX_L {
                vec![]
            } else {
                let (k, p) = coherence_by_summation(l, s2);
                let expected = if is_kappa { k } else { p };
                vec![row(
                    check,
                    (None, Some(l), Some(s2)),
                    value,
                    expected,
                    (value - expected).abs() / expected,
                    scale * CLOSED_FORM_TOL,
                )]
            }
        }
        Task::FMoments(l, s2) => {
            let cp = ChannelParams::new(1.0, l, s2)?;
            let c = derive_constants(&cp);
            let m = estimate_f_moments(&cp, n, seed)?;
            let at = (None, Some(l), Some(s2));
            let log_floor = (c.phi * c.phi / 3.0).ln();
            vec![
                mc_row("kappa_mc", at, &m.mean_real, c.kappa, 0.0, scale),
                mc_row("phi_mc", at, &m.m2, c.phi, 0.0, scale),
                // One-sided: E ln|F|^2 >= ln(phi^2 / 3).
                row(
                    "log_fading_mc",
                    at,
                    m.mean_log_sq.mean,
                    log_floor,
                    log_floor - m.mean_log_sq.mean,
                    scale * MC_SIGMAS * m.mean_log_sq.std_error,
                ),
            ]
        }
        Task::Fading(l, s2) => {
            let r = s2 / l as f64;
            let samples = (n / 50).max(1000);
            let est = simulate_fading_integral(r, FADING_STEPS, samples, seed)?;
            let bias = -(-r / 2.0).exp_m1() / FADING_STEPS as f64;
            vec![mc_row(
                "fading_integral_mc",
                (None, Some(l), Some(s2)),
                &est.re,
                fading_integral_mean(r),
                bias,
                scale,
            )]
        }
        Task::LogAbsSq(p) => {
            let est = estimate_log_abs_sq(p, n, seed)?;
            vec![mc_row(
                "log_abs_sq_mc",
                (Some(p), None, None),
                &est,
                p.ln() - EULER_GAMMA,
                0.0,
                scale,
            )]
        }
        Task::Riccati(cp) => {
            let x = cp.symbol_power();
            let r = cp.l() / cp.sigma2();
            let closed = riccati_fixed_point(x, r)?;
            let conv = iterate_fixed_point(
                &FisherState::new(0.0, x, r)?,
                FIXED_POINT_TOL,
                owpn::riccati::MAX_ITERATIONS,
                false,
            )?;
            let dev = (conv.j - closed).abs() / closed.max(f64::MIN_POSITIVE);
            vec![row(
                "riccati_fixed_point",
                at_params(&cp),
                conv.j,
                closed,
                dev,
                scale * RICCATI_TOL,
            )]
        }
        Task::Mi(cp) => {
            let amp = amplitude_channel_mi(&cp, n as usize, seed)?;
            let ph = phase_channel_mi(&cp, n as usize, derive_seed(seed, 1))?;
            let pc = lower_partially_coherent(&cp).rate_split;
            let outer = upper_outer(&cp).total();
            let at = at_params(&cp);
            let sum = amp.value + ph.value;
            vec![
                row(
                    "mi_amplitude",
                    at,
                    amp.value,
                    pc.amplitude_rate,
                    pc.amplitude_rate - amp.value,
                    scale * (MI_SLACK + MC_SIGMAS * amp.std_error),
                ),
                row(
                    "mi_phase",
                    at,
                    ph.value,
                    pc.phase_rate,
                    pc.phase_rate - ph.value,
                    scale * (MI_SLACK + MC_SIGMAS * ph.std_error),
                ),
                row("mi_outer", at, sum, outer, sum - outer, scale * OUTER_SLACK),
            ]
        }
    };
    Ok(rows)
}

fn at_params(cp: &ChannelParams) -> (Option<f64>, Option<u64>, Option<f64>) {
    (Some(cp.power()), Some(cp.oversampling()), Some(cp.sigma2()))
}

/// Runs the Monte Carlo vs closed-form suite. Returns the table together
/// with the number of failed checks.
pub fn verify(spec: &SweepSpec) -> Result<(Table, usize)> {
    if spec.n_samples < MIN_SAMPLES as u64 {
        return Err(CliError::usage(format!(
            "verify needs --samples >= {MIN_SAMPLES}"
        )));
    }
    spec.check_rows(&[spec.p.len(), spec.l.len(), spec.sigma2.len()])?;
    let mut tasks = Vec::new();
    for &l in &spec.l {
        for &s2 in &spec.sigma2 {
            tasks.push(Task::KappaClosed(l, s2));
            tasks.push(Task::PhiClosed(l, s2));
            if s2 > 0.0 && l > 1 {
                tasks.push(Task::FMoments(l, s2));
            }
            if s2 > 0.0 {
                tasks.push(Task::Fading(l, s2));
            }
        }
    }
    for &p in spec.p.iter().filter(|&&p| p > 0.0) {
        tasks.push(Task::LogAbsSq(p));
    }
    for cp in param_grid(spec)? {
        if cp.power() > 0.0 && cp.sigma2() > 0.0 {
            tasks.push(Task::Riccati(cp));
        }
        if cp.power() > 0.0 {
            tasks.push(Task::Mi(cp));
        }
    }
    info!(
        "verify: {} tasks, {} samples each, seed {}",
        tasks.len(),
        spec.n_samples,
        spec.seed
    );
    let results: Vec<Vec<CheckRow>> = tasks
        .par_iter()
        .enumerate()
        .map(|(i, &t)| run_task(t, spec, i as u64))
        .collect::<Result<_>>()?;
    let rows: Vec<CheckRow> = results.into_iter().flatten().collect();
    let failed = rows.iter().filter(|r| r.status == Status::Fail).count();
    Ok((
        Table {
            header: vec![
                "check",
                "P",
                "L",
                "sigma2",
                "measured",
                "expected",
                "deviation",
                "tolerance",
                "status",
            ],
            rows: rows.iter().map(CheckRow::format).collect(),
        },
        failed,
    ))
}
