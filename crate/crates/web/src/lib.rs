//! Three browser operations over the bound: the jump instance against its
//! closed form, one premium row for a Black-Scholes put, and the hedge value
//! curves for that put. Each returns JSON; the wasm exports wrap the native
//! functions so they can be tested without a browser.

use robust_american::bench::{self, BenchConfig, BenchError};
use robust_american::bound::{robust_bound, BoundError, BoundOptions, Variant};
use robust_american::instances;
use robust_american::market::MarketError;
use robust_american::payoff::{PayoffError, PayoffSpec};
use serde::Serialize;
use thiserror::Error;
use wasm_bindgen::prelude::*;

#[derive(Debug, Error)]
pub enum DemoError {
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error(transparent)]
    Payoff(#[from] PayoffError),
    #[error(transparent)]
    Bound(#[from] BoundError),
    #[error(transparent)]
    Bench(#[from] BenchError),
}

#[derive(Debug, Clone, Serialize)]
pub struct JumpResult {
    pub phi: f64,
    pub psi: f64,
    pub closed_form: f64,
    /// Exercise mass by state (rows 0, 50, 100, 150) and maturity.
    pub exercise: Vec<Vec<f64>>,
}

/// Bound for the jump instance with jump probabilities `q` and put strikes `b`.
pub fn jump_bound(q: &[f64], b: &[f64]) -> Result<JumpResult, DemoError> {
    // the jump happens at exactly one maturity
    if q.iter().any(|p| !(*p >= 0.0)) || (q.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(DemoError::Input("jump probabilities must be non-negative and sum to 1".into()));
    }
    if b.first().is_some_and(|b1| !(100.0..150.0).contains(b1)) || b.windows(2).any(|w| w[1] > w[0]) {
        return Err(DemoError::Input("strikes must decrease from a first value in [100, 150)".into()));
    }
    let inst = instances::three_strike_jump(q, b)?;
    let r = robust_bound(&inst.surface, &inst.payoff, BoundOptions::default())?;
    Ok(JumpResult { phi: r.phi, psi: r.psi, closed_form: inst.reference, exercise: r.model.f })
}

/// Black-Scholes put on `maturities` equally spaced dates up to 1, with calls
/// struck at `lo, lo+step, ..., hi`.
pub fn put_config(put_strike: f64, maturities: usize, vol: f64, lo: f64, hi: f64, step: f64, steps: usize) -> Result<BenchConfig, DemoError> {
    if !(step > 0.0) || !(hi >= lo) || !(lo > 0.0) {
        return Err(DemoError::Input("need 0 < lowest ≤ highest and a positive interval".into()));
    }
    if (hi - lo) / step > 200.0 || !(1..=26).contains(&maturities) || !(10..=5000).contains(&steps) {
        return Err(DemoError::Input("at most 200 strikes, 1 to 26 maturities, 10 to 5000 tree steps".into()));
    }
    let mut config = BenchConfig::put(maturities, BenchConfig::strike_range(lo, hi, step), put_strike);
    config.vol = vol;
    config.steps = steps;
    Ok(config)
}

pub fn put_row(config: &BenchConfig) -> Result<bench::PremiumRow, DemoError> {
    Ok(bench::premium_row(config)?)
}

#[derive(Debug, Clone, Serialize)]
pub struct HedgeCurves {
    pub phi: f64,
    pub variant: Variant,
    pub x: Vec<f64>,
    /// Hedge value v̄(n, x) per maturity.
    pub value: Vec<Vec<f64>>,
    /// Payoff at each maturity after the time shift.
    pub payoff: Vec<Vec<f64>>,
}

/// Hedge value curves on `points` prices from 0 to 1.5 times the top strike.
pub fn hedge_curves(config: &BenchConfig, points: usize) -> Result<HedgeCurves, DemoError> {
    let surface = bench::bs_surface(config)?;
    let prepared = PayoffSpec::Put { strike: config.put_strike, r: config.rate }.prepare(&surface.states(), surface.maturities())?;
    let r = robust_bound(&surface, &prepared.grid, BoundOptions::default())?;
    let reach = 1.5 * r.hedge.top();
    let x: Vec<f64> = (0..points).map(|i| reach * i as f64 / (points - 1).max(1) as f64).collect();
    let mats = 0..surface.maturities().len();
    let value = mats.clone().map(|n| x.iter().map(|&s| r.hedge.v_at(n, s)).collect()).collect();
    let payoff = mats.map(|n| x.iter().map(|&s| prepared.lattice.value(n, s)).collect()).collect();
    Ok(HedgeCurves { phi: r.phi, variant: r.variant, x, value, payoff })
}

fn to_js<T: Serialize>(r: Result<T, DemoError>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = jumpBound)]
pub fn jump_bound_js(q: Vec<f64>, b: Vec<f64>) -> Result<String, JsError> {
    to_js(jump_bound(&q, &b))
}

#[wasm_bindgen(js_name = putRow)]
#[allow(clippy::too_many_arguments)]
pub fn put_row_js(put_strike: f64, maturities: usize, vol: f64, lo: f64, hi: f64, step: f64, steps: usize) -> Result<String, JsError> {
    to_js(put_config(put_strike, maturities, vol, lo, hi, step, steps).and_then(|c| put_row(&c)))
}

#[wasm_bindgen(js_name = hedgeCurves)]
#[allow(clippy::too_many_arguments)]
pub fn hedge_curves_js(put_strike: f64, maturities: usize, vol: f64, lo: f64, hi: f64, step: f64, points: usize) -> Result<String, JsError> {
    to_js(put_config(put_strike, maturities, vol, lo, hi, step, 2000).and_then(|c| hedge_curves(&c, points)))
}
