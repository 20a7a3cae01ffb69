use clap::{Args, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use serde_json::json;
use sessa_core::comparators::{
    attention_value_jacobian, dilution_series, freeze_rate_check, lti_impulse_response, uniform_causal_routing,
    LtiSystem, ZohChannel,
};
use sessa_core::numerics::{default_window, fit_power_law, softmax_row, Matrix};
use sessa_core::table::EnvelopeRow;
use sessa_core::{Error, Result};

use crate::output::Output;
use crate::Verdict;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Baseline {
    Attention,
    Mamba,
    Lti,
}

#[derive(Args, Debug, Serialize)]
pub struct CompareArgs {
    #[arg(value_enum)]
    pub kind: Baseline,
    /// Sequence length or largest lag (baseline default when omitted).
    #[arg(long = "T")]
    pub t_len: Option<usize>,
    /// Uniform causal routing instead of random bounded-spread logits.
    #[arg(long)]
    pub diffuse: bool,
    /// Logit spread of the random attention routing.
    #[arg(long, default_value_t = 2.0)]
    pub spread: f64,
    /// Lower bound of the ZOH step sizes.
    #[arg(long, default_value_t = 0.05)]
    pub cdelta: f64,
    /// Relative jitter added on top of the step-size floor.
    #[arg(long, default_value_t = 0.05)]
    pub jitter: f64,
    /// ZOH decay rate.
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    /// Source position of the ZOH impulse.
    #[arg(long, default_value_t = 0)]
    pub source: usize,
    /// Spectral radius of the LTI state matrix.
    #[arg(long, default_value_t = 0.9)]
    pub rho: f64,
    /// LTI state dimension.
    #[arg(long, default_value_t = 4)]
    pub n: usize,
    /// Relative rate tolerance (baseline default when omitted).
    #[arg(long)]
    pub tol: Option<f64>,
}

pub fn run(args: &CompareArgs, seed: u64, out: &mut Output) -> Result<Verdict> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match args.kind {
        Baseline::Attention => attention(args, &mut rng, out),
        Baseline::Mamba => mamba(args, &mut rng, out),
        Baseline::Lti => lti(args, &mut rng, out),
    }
}

fn random_routing(t_len: usize, spread: f64, rng: &mut ChaCha8Rng) -> Result<Matrix> {
    let mut alpha = Matrix::zeros(t_len, t_len);
    for t in 0..t_len {
        let logits: Vec<f64> = (0..=t).map(|_| spread * rng.random::<f64>()).collect();
        let w = softmax_row(&logits, 1.0)?;
        alpha.row_mut(t)[..=t].copy_from_slice(&w);
    }
    Ok(alpha)
}

fn attention(args: &CompareArgs, rng: &mut ChaCha8Rng, out: &mut Output) -> Result<Verdict> {
    let t_len = args.t_len.unwrap_or(1024) + 1;
    if t_len < 3 {
        return Err(Error::InvalidInput("attention comparison needs T >= 2".into()));
    }
    let (alpha, spread) = if args.diffuse {
        (uniform_causal_routing(t_len), 0.0)
    } else {
        (random_routing(t_len, args.spread, rng)?, args.spread)
    };
    let jac = attention_value_jacobian(&alpha, Some(spread))?;
    let series = dilution_series(&jac);
    let rows: Vec<EnvelopeRow> = series
        .iter()
        .enumerate()
        .map(|(l, &v)| {
            let envelope = spread.exp() / (l as f64 + 1.0);
            EnvelopeRow { lag: l, value: v, envelope, violated: v > envelope * (1.0 + 1e-12) }
        })
        .collect();
    out.table("attention", &rows)?;
    let max_lag = t_len - 1;
    let window = if max_lag >= 32 + 7 { (32, max_lag) } else { default_window(max_lag) };
    let fit = fit_power_law(&series, window)?;
    let tol = args.tol.unwrap_or(0.02);
    let err = (fit.exponent + 1.0).abs();
    let passed = !args.diffuse || err <= tol;
    let summary = json!({
        "baseline": "attention", "diffuse": args.diffuse, "logit_spread": spread, "max_lag": max_lag,
        "fit_window": window, "fitted_exponent": fit.exponent, "expected_exponent": -1.0,
        "tolerance": tol, "passed": passed,
    });
    Ok(Verdict::check(passed, summary, || {
        format!("fitted exponent {} is {err} away from -1 (tolerance {tol})", fit.exponent)
    }))
}

fn mamba(args: &CompareArgs, rng: &mut ChaCha8Rng, out: &mut Output) -> Result<Verdict> {
    let t_len = args.t_len.unwrap_or(400);
    if !(args.jitter >= 0.0 && args.jitter.is_finite()) {
        return Err(Error::Domain(format!("jitter must be finite and nonnegative, got {}", args.jitter)));
    }
    let delta: Vec<f64> = (0..t_len).map(|_| args.cdelta * (1.0 + args.jitter * rng.random::<f64>())).collect();
    let ch = ZohChannel::scalar(args.lambda, delta)?;
    let max_lag = t_len.saturating_sub(args.source + 1);
    let window = if max_lag >= 20 + 7 { (20, max_lag) } else { default_window(max_lag) };
    let report = freeze_rate_check(&ch, args.source, window)?;
    let gain = 1.0 / report.lambda;
    let rows: Vec<EnvelopeRow> = report
        .series
        .iter()
        .enumerate()
        .map(|(l, &v)| {
            let envelope = gain * (report.predicted_rate * l as f64).exp();
            EnvelopeRow { lag: l, value: v, envelope, violated: v > envelope * (1.0 + 1e-12) }
        })
        .collect();
    out.table("mamba", &rows)?;
    let tol = args.tol.unwrap_or(0.05);
    let rel = (report.fit.exponent / report.predicted_rate - 1.0).abs();
    let passed = report.bound_ok && rel <= tol;
    let summary = json!({
        "baseline": "mamba", "lambda": report.lambda, "c_delta": report.c_delta, "source": args.source,
        "fit_window": window, "fitted_rate": report.fit.exponent, "predicted_rate": report.predicted_rate,
        "relative_error": rel, "bound_ok": report.bound_ok, "tolerance": tol, "passed": passed,
    });
    Ok(Verdict::check(passed, summary, || match rows.iter().find(|r| r.violated) {
        Some(r) => format!("impulse Jacobian exceeds the exponential envelope at lag {}", r.lag),
        None => format!("fitted rate {} is {rel} relative away from {}", report.fit.exponent, report.predicted_rate),
    }))
}

#[derive(Serialize)]
struct LtiRow {
    lag: usize,
    value: f64,
    rho_power: f64,
}

fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

fn lti(args: &CompareArgs, rng: &mut ChaCha8Rng, out: &mut Output) -> Result<Verdict> {
    let max_lag = args.t_len.unwrap_or(200);
    if !(args.rho > 0.0 && args.rho.is_finite()) || args.n == 0 {
        return Err(Error::Domain(format!("need rho > 0 and n >= 1, got rho = {}, n = {}", args.rho, args.n)));
    }
    let a = gaussian(args.n, args.n, rng);
    let r0 = LtiSystem::new(a.clone(), Matrix::identity(args.n), Matrix::identity(args.n))?.spectral_radius();
    if r0 == 0.0 {
        return Err(Error::Domain("sampled state matrix is nilpotent".into()));
    }
    let sys = LtiSystem::new(a.scaled(args.rho / r0), gaussian(args.n, 2, rng), gaussian(2, args.n, rng))?;
    let window = if max_lag >= 20 + 7 { (20, max_lag) } else { default_window(max_lag) };
    let resp = lti_impulse_response(&sys, max_lag, Some(window))?;
    if let Some(w) = &resp.warning {
        eprintln!("warning: {w}");
    }
    let rows: Vec<LtiRow> = resp
        .norms
        .iter()
        .enumerate()
        .map(|(l, &v)| LtiRow { lag: l, value: v, rho_power: sys.spectral_radius().powi(l as i32) })
        .collect();
    out.table("lti", &rows)?;
    let expected = sys.spectral_radius().ln();
    let tol = args.tol.unwrap_or(0.1);
    let fitted = resp.fit.as_ref().map(|f| f.exponent);
    let rel = fitted.map(|r| (r / expected - 1.0).abs());
    let passed = args.rho < 1.0 && rel.is_some_and(|r| r <= tol);
    let summary = json!({
        "baseline": "lti", "rho": sys.spectral_radius(), "state_dim": args.n, "max_lag": max_lag,
        "fit_window": window, "fitted_rate": fitted, "expected_rate": expected, "relative_error": rel,
        "warning": resp.warning, "tolerance": tol, "passed": passed,
    });
    Ok(Verdict::check(passed, summary, || match rel {
        Some(r) => format!("fitted rate {fitted:?} is {r} relative away from log rho = {expected}"),
        None => "impulse response vanished inside the fit window".into(),
    }))
}
