use clap::{Args, ValueEnum};
use serde::Serialize;
use serde_json::json;
use sessa_core::numerics::{default_window, fit_power_law};
use sessa_core::table::EnvelopeRow;
use sessa_core::theory::{
    deep_path_sum_bound, heavy_tail_convolution, impulse_response, poly_decay_check, poly_decay_constant,
    positional_code, positional_code_partial_sum, transport_exponent_check, two_sided_tail_check,
    uniform_closed_form, uniform_impulse_partial_sum, KernelKind, PathLayer, RoutingSpec, TransportConfig,
};
use sessa_core::{Error, Result};

use crate::output::Output;
use crate::Verdict;

const CLOSED_FORM_TOL: f64 = 1e-12;
const POSITIONAL_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Suite {
    Impulse,
    ClosedForm,
    PolyDecay,
    TwoSided,
    Convolution,
    Transport,
    PathSum,
    PositionalCode,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    Harmonic,
    Exp,
    Heavy,
}

#[derive(Args, Debug, Serialize)]
pub struct TheoryArgs {
    #[arg(value_enum)]
    pub suite: Suite,
    /// Feedback gain.
    #[arg(long, default_value_t = 0.5)]
    pub gamma: f64,
    /// Horizon in lags (suite default when omitted).
    #[arg(long = "T")]
    pub t_len: Option<usize>,
    /// Source position.
    #[arg(long, default_value_t = 0)]
    pub tau: usize,
    /// Largest source position for closed_form and two_sided.
    #[arg(long, default_value_t = 8)]
    pub tau_max: usize,
    /// Convolution order or transport depth.
    #[arg(long, default_value_t = 2)]
    pub k: usize,
    /// Kernel tail exponent.
    #[arg(long, default_value_t = 0.5)]
    pub beta: f64,
    /// Transport horizon.
    #[arg(long = "H", default_value_t = 512)]
    pub horizon: usize,
    /// Routing envelope constant for poly_decay; uniform routing when absent.
    #[arg(long)]
    pub c2: Option<f64>,
    /// Path-sum depth.
    #[arg(long, default_value_t = 2)]
    pub depth: usize,
    #[arg(long, value_enum, default_value_t = Kernel::Harmonic)]
    pub kernel: Kernel,
    /// Kernel amplitude.
    #[arg(long, default_value_t = 1.0)]
    pub a: f64,
    /// Decay rate of the exp kernel.
    #[arg(long, default_value_t = 0.5)]
    pub rate: f64,
    /// Per-layer direct gain of a path-sum layer.
    #[arg(long, default_value_t = 1.0)]
    pub d: f64,
    /// Per-layer routed gain of a path-sum layer.
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    /// Exponent tolerance (suite default when omitted).
    #[arg(long)]
    pub tol: Option<f64>,
}

impl TheoryArgs {
    fn horizon_or(&self, default: usize) -> usize {
        self.t_len.unwrap_or(default)
    }

    fn require_gain(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Domain(format!("gamma must lie in (0, 1), got {}", self.gamma)));
        }
        Ok(())
    }
}

pub fn run(args: &TheoryArgs, out: &mut Output) -> Result<Verdict> {
    match args.suite {
        Suite::Impulse => impulse(args, out),
        Suite::ClosedForm => closed_form(args, out),
        Suite::PolyDecay => poly_decay(args, out),
        Suite::TwoSided => two_sided(args, out),
        Suite::Convolution => convolution(args, out),
        Suite::Transport => transport(args, out),
        Suite::PathSum => path_sum(args, out),
        Suite::PositionalCode => positional(args, out),
    }
}

fn fit_window(max_lag: usize) -> (usize, usize) {
    if max_lag >= 64 + 7 {
        (64, max_lag)
    } else {
        default_window(max_lag)
    }
}

fn impulse(args: &TheoryArgs, out: &mut Output) -> Result<Verdict> {
    args.require_gain()?;
    let t = args.horizon_or(4096);
    let series = impulse_response(&RoutingSpec::uniform(args.gamma), args.tau, args.tau + t + 1)?;
    let beta = series.beta_tail;
    let c = poly_decay_constant(beta);
    let rows: Vec<EnvelopeRow> = series
        .values
        .iter()
        .enumerate()
        .skip(1)
        .map(|(l, &y)| {
            let envelope = c * (l as f64).powf(-beta);
            EnvelopeRow { lag: l, value: y, envelope, violated: y.abs() > envelope * (1.0 + 1e-12) }
        })
        .collect();
    out.table("impulse", &rows)?;
    let window = fit_window(t);
    let fit = series.fit_power_law(window)?;
    let tol = args.tol.unwrap_or(0.03);
    let err = (fit.exponent + beta).abs();
    let summary = json!({
        "suite": "impulse", "gamma": args.gamma, "tau": args.tau, "max_lag": t,
        "fit_window": window, "fitted_exponent": fit.exponent, "expected_exponent": -beta,
        "tolerance": tol, "passed": err <= tol,
    });
    Ok(Verdict::check(err <= tol, summary, || {
        format!("fitted exponent {} is {err} away from {} (tolerance {tol})", fit.exponent, -beta)
    }))
}

#[derive(Serialize)]
struct ClosedFormRow {
    tau: usize,
    lag: usize,
    recursion: f64,
    closed_form: f64,
    rel_err: f64,
}

fn closed_form(args: &TheoryArgs, out: &mut Output) -> Result<Verdict> {
    args.require_gain()?;
    let t = args.horizon_or(2048);
    let spec = RoutingSpec::uniform(args.gamma);
    let mut rows = Vec::with_capacity((args.tau_max + 1) * t);
    for tau in 0..=args.tau_max {
        let series = impulse_response(&spec, tau, tau + t + 1)?;
        for (lag, &y) in series.values.iter().enumerate().skip(1) {
            let exact = uniform_closed_form(args.gamma, tau, lag)?;
            rows.push(ClosedFormRow { tau, lag, recursion: y, closed_form: exact, rel_err: (y - exact).abs() / exact.abs() });
        }
    }
    out.table("closed_form", &rows)?;
    let worst = rows.iter().max_by(|a, b| a.rel_err.total_cmp(&b.rel_err));
    let max_err = worst.map_or(0.0, |r| r.rel_err);
    let passed = max_err <= CLOSED_FORM_TOL;
    let summary = json!({
        "suite": "closed_form", "gamma": args.gamma, "tau_max": args.tau_max, "max_lag": t,
        "max_rel_err": max_err, "tolerance": CLOSED_FORM_TOL, "passed": passed,
    });
    Ok(Verdict::check(passed, summary, || {
        let r = worst.expect("rows exist when the check fails");
        format!("tau {} lag {}: relative error {:e} exceeds {CLOSED_FORM_TOL:e}", r.tau, r.lag, r.rel_err)
    }))
}

fn poly_decay(args: &TheoryArgs, out: &mut Output) -> Result<Verdict> {
    let t = args.horizon_or(4096);
    let spec = match args.c2 {
        Some(c2) => RoutingSpec::envelope(c2, args.gamma),
        None => RoutingSpec::uniform(args.gamma),
    };
    let series = impulse_response(&spec, args.tau, args.tau + t + 1)?;
    let report = poly_decay_check(&series)?;
    out.table("poly_decay", &report.rows)?;
    let summary = json!({
        "suite": "poly_decay", "gamma": args.gamma, "c2": args.c2, "tau": args.tau, "max_lag": t,
        "beta": report.beta, "constant": report.c_used, "empirical_constant": report.empirical_constant,
        "max_ratio": report.max_violation, "violations": 0, "passed": true,
    });
    Ok(Verdict::check(true, summary, String::new))
}

#[derive(Serialize)]
struct TwoSidedRow {
    tau: usize,
    lag: usize,
    value: f64,
    lower: f64,
    upper: f64,
}

fn two_sided(args: &TheoryArgs, out: &mut Output) -> Result<Verdict> {
    args.require_gain()?;
    let t = args.horizon_or(1024);
    let report = two_sided_tail_check(args.gamma, args.tau_max, t)?;
    let spec = RoutingSpec::uniform(args.gamma);
    let mut rows = Vec::new();
    for tau in 0..=args.tau_max {
        let series = impulse_response(&spec, tau, tau + t + 1)?;
        for (lag, &value) in series.values.iter().enumerate().skip(1) {
            let p = (lag as f64).powf(-report.beta);
            rows.push(TwoSidedRow { tau, lag, value, lower: report.c_minus * p, upper: report.c_plus * p });
        }
    }
    out.table("two_sided", &rows)?;
    let summary = json!({
        "suite": "two_sided", "gamma": args.gamma, "tau_max": args.tau_max, "max_lag": t,
        "c_minus": report.c_minus, "c_plus": report.c_plus, "fit_window": report.fit_window,
        "fitted_exponents": report.fitted_exponents, "expected_exponent": -report.beta, "passed": true,
    });
    Ok(Verdict::check(true, summary, String::new))
}

#[derive(Serialize)]
struct SeriesRow {
    n: usize,
    value: f64,
}

fn convolution(args: &TheoryArgs, out: &mut Output) -> Result<Verdict> {
    let n = args.horizon_or(4096);
    let values = heavy_tail_convolution(args.beta, args.k, n)?;
    let rows: Vec<SeriesRow> = values.iter().enumerate().map(|(n, &value)| SeriesRow { n, value }).collect();
    out.table("convolution", &rows)?;
    let window = fit_window(n);
    let fit = fit_power_law(&values, window)?;
    let expected = args.k as f64 * (1.0 - args.beta) - 1.0;
    let tol = args.tol.unwrap_or(0.05);
    let err = (fit.exponent - expected).abs();
    let summary = json!({
        "suite": "convolution", "k": args.k, "beta": args.beta, "n_max": n, "fit_window": window,
        "fitted_exponent": fit.exponent, "expected_exponent": expected, "tolerance": tol, "passed": err <= tol,
    });
    Ok(Verdict::check(err <= tol, summary, || {
        format!("fitted exponent {} is {err} away from {expected} (tolerance {tol})", fit.exponent)
    }))
}

#[derive(Serialize)]
struct TransportRow {
    lag: usize,
    signal: f64,
    margin: f64,
    margin_floor: f64,
}

fn transport(args: &TheoryArgs, out: &mut Output) -> Result<Verdict> {
    let source = if args.tau == 0 { 2 } else { args.tau };
    let report = transport_exponent_check(&TransportConfig::new(args.k, args.beta, source, args.horizon))?;
    let rows: Vec<TransportRow> = (0..=args.horizon)
        .map(|l| TransportRow {
            lag: l,
            signal: report.signal[l],
            margin: report.margin[l],
            margin_floor: report.c_minus * (1.0 + l as f64).powf(report.nu),
        })
        .collect();
    out.table("transport", &rows)?;
    let profile = if report.nu < 0.0 {
        "decaying"
    } else if report.nu == 0.0 {
        "frozen"
    } else {
        "increasing"
    };
    let tol = args.tol.unwrap_or(if report.nu == 0.0 { 0.05 } else { 0.1 });
    let err = (report.fitted_nu - report.nu).abs();
    let sign_ok = report.nu == 0.0 || report.fitted_nu.signum() == report.nu.signum();
    let passed = report.margin_ok && err <= tol && sign_ok;
    let summary = json!({
        "suite": "transport", "k": args.k, "beta": args.beta, "horizon": args.horizon, "source": source,
        "nu": report.nu, "fitted_nu": report.fitted_nu, "profile": profile, "fit_window": report.fit_window,
        "c_minus": report.c_minus, "margin_ok": report.margin_ok, "first_failing_lag": report.first_failing_lag,
        "tolerance": tol, "passed": passed,
    });
    Ok(Verdict::check(passed, summary, || match report.first_failing_lag {
        Some(l) => format!("selective margin below c- (1 + l)^nu at lag {l}"),
        None => format!("fitted exponent {} vs nu = {} (tolerance {tol})", report.fitted_nu, report.nu),
    }))
}

#[derive(Serialize)]
struct PathSumRow {
    t: usize,
    lag: usize,
    bound: f64,
    nested_harmonic: Option<f64>,
}

fn path_sum(args: &TheoryArgs, out: &mut Output) -> Result<Verdict> {
    let t = args.horizon_or(256);
    let kernel = match args.kernel {
        Kernel::Harmonic => KernelKind::Harmonic { a: args.a },
        Kernel::Exp => KernelKind::Exp { a: args.a, c: args.rate },
        Kernel::Heavy => KernelKind::Heavy { a: args.a, beta: args.beta },
    };
    let layers = vec![PathLayer { d: args.d, lambda: args.lambda, kernel }; args.depth];
    let mut rows = Vec::new();
    for end in args.tau + 1..=args.tau + t {
        let r = deep_path_sum_bound(&layers, end, args.tau)?;
        rows.push(PathSumRow { t: end, lag: end - args.tau, bound: r.bound, nested_harmonic: r.nested_harmonic });
    }
    out.table("path_sum", &rows)?;
    let first_bad = rows
        .iter()
        .find(|r| r.nested_harmonic.is_some_and(|h| r.bound > h * (1.0 + 1e-12)));
    let passed = first_bad.is_none();
    let summary = json!({
        "suite": "path_sum", "depth": args.depth, "kernel": kernel, "d": args.d, "lambda": args.lambda,
        "tau": args.tau, "max_lag": t, "final_bound": rows.last().map(|r| r.bound), "passed": passed,
    });
    Ok(Verdict::check(passed, summary, || {
        let r = first_bad.expect("failure has a row");
        format!("lag {}: path sum {} exceeds nested-harmonic majorant {:?}", r.lag, r.bound, r.nested_harmonic)
    }))
}

#[derive(Serialize)]
struct PositionalRow {
    t: usize,
    code: f64,
    partial_sum: f64,
    closed_form_partial_sum: f64,
    impulse_partial_sum: f64,
    gamma_product: f64,
}

fn positional(args: &TheoryArgs, out: &mut Output) -> Result<Verdict> {
    args.require_gain()?;
    let t_len = args.horizon_or(512);
    let code = positional_code(args.gamma, t_len)?;
    let spec = RoutingSpec::uniform(args.gamma);
    let impulse = impulse_response(&spec, 0, t_len)?;
    let mut rows = Vec::with_capacity(t_len);
    let (mut sum, mut impulse_sum) = (0.0, 0.0);
    for (t, &c) in code.iter().enumerate() {
        sum += c;
        impulse_sum += impulse.values[t];
        rows.push(PositionalRow {
            t,
            code: c,
            partial_sum: sum,
            closed_form_partial_sum: positional_code_partial_sum(args.gamma, t)?,
            impulse_partial_sum: impulse_sum,
            gamma_product: uniform_impulse_partial_sum(args.gamma, t)?,
        });
    }
    out.table("positional_code", &rows)?;
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs();
    let increasing = code.windows(2).all(|w| w[1] > w[0]);
    let code_err = rows.iter().map(|r| rel(r.partial_sum, r.closed_form_partial_sum)).fold(0.0, f64::max);
    let impulse_err = rows.iter().map(|r| rel(r.impulse_partial_sum, r.gamma_product)).fold(0.0, f64::max);
    let passed = increasing && code_err <= POSITIONAL_TOL && impulse_err <= POSITIONAL_TOL;
    let summary = json!({
        "suite": "positional_code", "gamma": args.gamma, "len": t_len, "strictly_increasing": increasing,
        "max_partial_sum_rel_err": code_err, "max_impulse_sum_rel_err": impulse_err,
        "tolerance": POSITIONAL_TOL, "passed": passed,
    });
    Ok(Verdict::check(passed, summary, || {
        format!("increasing: {increasing}, partial-sum error {code_err:e}, impulse-sum error {impulse_err:e}")
    }))
}
