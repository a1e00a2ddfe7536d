use web_time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::simulate::path_rng;
use super::{CertifyError, Exercise, HedgeStrategy, InterpolationMode, PricePath};
use crate::bound::Variant;
use crate::payoff::LatticePayoff;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum VerificationMode {
    /// Every grid path with every exercise maturity.
    LatticeExhaustive,
    /// Random prices in [0, x_J].
    IntervalRandom,
    /// Random prices on the whole half-line, including excursions above x_J.
    FullLineRandom,
    /// Full-line paths exercised at random times between maturities.
    ContinuousExerciseRandom,
}

impl VerificationMode {
    fn needs(self) -> InterpolationMode {
        match self {
            VerificationMode::LatticeExhaustive => InterpolationMode::Lattice,
            VerificationMode::IntervalRandom => InterpolationMode::Interval,
            _ => InterpolationMode::FullLine,
        }
    }
}

fn rank(m: InterpolationMode) -> u8 {
    match m {
        InterpolationMode::Lattice => 0,
        InterpolationMode::Interval => 1,
        InterpolationMode::FullLine => 2,
    }
}

/// Largest lattice enumerated exhaustively.
pub const MAX_LATTICE_PATHS: u128 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifySpec {
    pub mode: VerificationMode,
    /// Random trials; ignored by the exhaustive mode.
    pub trials: usize,
    pub seed: u64,
    /// Centre of the random paths; defaults to half the top strike.
    pub s0: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub mode: VerificationMode,
    pub trials: usize,
    /// Smallest gains minus exercise value.
    pub min_slack: f64,
    /// Smallest term of the one-step decomposition of the gains, over paths
    /// where the decomposition applies.
    pub min_certificate_slack: Option<f64>,
    pub worst_path: Vec<f64>,
    pub worst_exercise: Exercise,
    pub tolerance: f64,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elapsed: Option<f64>,
}

fn exercise_index(h: &HedgeStrategy, ex: &Exercise) -> Result<usize, CertifyError> {
    let nn = h.num_maturities();
    match *ex {
        Exercise::Maturity(m) if m < nn => Ok(m),
        Exercise::Maturity(m) => Err(CertifyError::Invalid(format!("exercise maturity {m} out of range"))),
        Exercise::Continuous { time, .. } if time > 0.0 => h
            .maturities
            .iter()
            .position(|&t| t >= time)
            .ok_or_else(|| CertifyError::Invalid(format!("exercise time {time} after the last maturity"))),
        Exercise::Continuous { time, .. } => Err(CertifyError::Invalid(format!("exercise time {time} is not positive"))),
    }
}

/// Terminal value of the hedge along `path`, including the stock position
/// that linearises an exercise strictly between maturities.
pub fn gains(h: &HedgeStrategy, path: &PricePath, payoff: &LatticePayoff) -> Result<f64, CertifyError> {
    let nn = h.num_maturities();
    let y = &path.values;
    if y.len() != nn {
        return Err(CertifyError::Invalid(format!("path has {} prices, expected {nn}", y.len())));
    }
    for &p in y {
        h.check_price(p)?;
    }
    let k = exercise_index(h, &path.exercise)?;
    let top = h.top();
    let mut g = 0.0;
    if let Exercise::Continuous { time, price } = path.exercise {
        if h.maturities[k] != time {
            g -= payoff.slope(k, price) * (y[k] - price);
        }
    }
    for n in 0..nn {
        g += h.e1_at(n, y[n]) + h.e2_at(n, y[n]) + h.beta[n] * (y[n] - top).max(0.0);
    }
    g += h.v_at(nn - 1, y[nn - 1]);
    for n in 0..nn - 1 {
        let regime = if n < k { 1 } else { 2 };
        g += (y[n + 1] - y[n]) * h.d_at(regime, n, y[n]);
    }
    Ok(g)
}

pub fn exercise_value(path: &PricePath, payoff: &LatticePayoff, k: usize) -> Result<f64, CertifyError> {
    match path.exercise {
        Exercise::Maturity(m) => Ok(payoff.value(m, path.values[m])),
        Exercise::Continuous { time, price } => {
            if payoff.maturities()[k] == time {
                Ok(payoff.value(k, path.values[k]))
            } else {
                let f = payoff
                    .continuous()
                    .ok_or_else(|| CertifyError::Invalid("payoff has no values between maturities".into()))?;
                Ok(f.eval(price, time))
            }
        }
    }
}

/// Smallest term of the decomposition of the gains into the exercise margin
/// and one-step inequalities. `None` where tail calls carry the argument.
fn certificate_slack(h: &HedgeStrategy, y: &[f64], k: usize, payoff: &LatticePayoff) -> Option<f64> {
    if h.variant == Variant::Bounded && y.iter().any(|&p| p > h.top()) {
        return None;
    }
    let mut worst = h.v_at(k, y[k]) - payoff.value(k, y[k]);
    for n in 0..y.len() - 1 {
        let w = if n < k { h.w1(n, y[n], y[n + 1]) } else { h.w2(n, y[n], y[n + 1]) };
        worst = worst.min(w);
    }
    Some(worst)
}

struct Case {
    slack: f64,
    cert: Option<f64>,
    path: PricePath,
}

fn evaluate(h: &HedgeStrategy, path: PricePath, payoff: &LatticePayoff) -> Result<Case, CertifyError> {
    let k = exercise_index(h, &path.exercise)?;
    let slack = gains(h, &path, payoff)? - exercise_value(&path, payoff, k)?;
    let cert = match path.exercise {
        Exercise::Maturity(_) => certificate_slack(h, &path.values, k, payoff),
        Exercise::Continuous { .. } => None,
    };
    Ok(Case { slack, cert, path })
}

fn snap(h: &HedgeStrategy, rng: &mut ChaCha8Rng) -> f64 {
    h.states[rng.random_range(0..h.states.len())]
}

fn interval_path(h: &HedgeStrategy, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..h.num_maturities())
        .map(|_| if rng.random_bool(0.15) { snap(h, rng) } else { rng.random_range(0.0..=h.top()) })
        .collect()
}

/// Lognormal path with mean `s0`, some prices snapped to grid states and an
/// occasional excursion above the top strike.
fn full_line_path(h: &HedgeStrategy, s0: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let horizon = *h.maturities.last().unwrap();
    let sigma = 0.6;
    let mut w = 0.0;
    let mut prev = 0.0;
    let mut y: Vec<f64> = h
        .maturities
        .iter()
        .map(|&t| {
            let s = (t / horizon).max(0.0);
            let z: f64 = StandardNormal.sample(rng);
            w += z * (s - prev).max(0.0).sqrt();
            prev = s;
            let p = s0 * (sigma * w - 0.5 * sigma * sigma * s).exp();
            if rng.random_bool(0.1) {
                snap(h, rng)
            } else if rng.random_bool(0.02) {
                0.0
            } else {
                p
            }
        })
        .collect();
    if rng.random_bool(0.1) {
        let n = rng.random_range(0..y.len());
        let e: f64 = Exp1.sample(rng);
        y[n] = h.top() * (1.0 + e);
    }
    y
}

fn random_case(h: &HedgeStrategy, spec: &VerifySpec, i: usize) -> PricePath {
    let mut rng = path_rng(spec.seed, i as u64);
    let nn = h.num_maturities();
    let s0 = spec.s0.unwrap_or(0.5 * h.top());
    match spec.mode {
        VerificationMode::IntervalRandom => {
            let values = interval_path(h, &mut rng);
            PricePath { values, exercise: Exercise::Maturity(rng.random_range(0..nn)) }
        }
        VerificationMode::FullLineRandom => {
            let values = full_line_path(h, s0, &mut rng);
            PricePath { values, exercise: Exercise::Maturity(rng.random_range(0..nn)) }
        }
        _ => {
            let values = full_line_path(h, s0, &mut rng);
            let k = rng.random_range(0..nn);
            let start = if k == 0 { 0.0 } else { h.maturities[k - 1] };
            let end = h.maturities[k];
            let time = if rng.random_bool(0.2) { end } else { start + (end - start) * rng.random_range(0.01..1.0) };
            let price = if rng.random_bool(0.5) {
                if k == 0 {
                    s0
                } else {
                    values[k - 1]
                }
            } else {
                let z: f64 = StandardNormal.sample(&mut rng);
                values[k].max(1e-3 * h.top()) * (0.3 * z).exp()
            };
            PricePath { values, exercise: Exercise::Continuous { time, price } }
        }
    }
}

fn lattice_cases(h: &HedgeStrategy, payoff: &LatticePayoff) -> Result<Vec<Case>, CertifyError> {
    let nn = h.num_maturities();
    let base = h.states.len();
    let count = (base as u128).checked_pow(nn as u32).unwrap_or(u128::MAX);
    if count > MAX_LATTICE_PATHS {
        return Err(CertifyError::TooLarge(count));
    }
    (0..count as usize)
        .into_par_iter()
        .flat_map_iter(|mut code| {
            let mut values = vec![0.0; nn];
            for v in values.iter_mut() {
                *v = h.states[code % base];
                code /= base;
            }
            (0..nn).map(move |m| evaluate(h, PricePath { values: values.clone(), exercise: Exercise::Maturity(m) }, payoff))
        })
        .collect()
}

/// Checks that the hedge's gains dominate the exercise value on paths drawn
/// according to `spec`.
pub fn verify_superreplication(h: &HedgeStrategy, payoff: &LatticePayoff, spec: &VerifySpec) -> Result<VerificationReport, CertifyError> {
    let started = Instant::now();
    if rank(h.mode) < rank(spec.mode.needs()) {
        return Err(CertifyError::Unsupported { hedge: h.mode, mode: spec.mode });
    }
    if payoff.maturities().len() != h.num_maturities() {
        return Err(CertifyError::Invalid("payoff and hedge have different maturities".into()));
    }
    let cases = match spec.mode {
        VerificationMode::LatticeExhaustive => lattice_cases(h, payoff)?,
        _ => (0..spec.trials)
            .into_par_iter()
            .map(|i| evaluate(h, random_case(h, spec, i), payoff))
            .collect::<Result<Vec<_>, _>>()?,
    };
    if cases.is_empty() {
        return Err(CertifyError::Invalid("no verification cases".into()));
    }
    let mut worst = 0;
    let mut cert: Option<f64> = None;
    for (i, c) in cases.iter().enumerate() {
        if c.slack < cases[worst].slack {
            worst = i;
        }
        if let Some(s) = c.cert {
            cert = Some(cert.map_or(s, |m| m.min(s)));
        }
    }
    let tolerance = 1e-6 * h.scale();
    let min_slack = cases[worst].slack;
    let passed = min_slack >= -tolerance && cert.is_none_or(|c| c >= -tolerance);
    Ok(VerificationReport {
        mode: spec.mode,
        trials: cases.len(),
        min_slack,
        min_certificate_slack: cert,
        worst_path: cases[worst].path.values.clone(),
        worst_exercise: cases[worst].path.exercise,
        tolerance,
        passed,
        elapsed: Some(started.elapsed().as_secs_f64()),
    })
}
