//! Black-Scholes surfaces, the binomial and static benchmarks, and the
//! premium tables built from them.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::bound::{robust_bound, BoundError, BoundOptions};
use crate::market::{price_piecewise_linear, CallSurface, MarketError};
use crate::payoff::{self, AmericanPayoffGrid, PayoffError, PayoffFunction};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("bad benchmark configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error(transparent)]
    Payoff(#[from] PayoffError),
    #[error(transparent)]
    Bound(#[from] BoundError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub s0: f64,
    pub vol: f64,
    pub rate: f64,
    pub strikes: Vec<f64>,
    /// Maturities are 1/N, 2/N, ..., 1.
    pub maturities: usize,
    pub put_strike: f64,
    pub steps: usize,
}

impl BenchConfig {
    /// Put struck at 100 on a unit-horizon grid, 20% volatility, 5% rate.
    pub fn put(maturities: usize, strikes: Vec<f64>, put_strike: f64) -> Self {
        BenchConfig { s0: 100.0, vol: 0.2, rate: 0.05, strikes, maturities, put_strike, steps: 2000 }
    }

    /// Strikes `lo, lo+step, ..., hi`.
    pub fn strike_range(lo: f64, hi: f64, step: f64) -> Vec<f64> {
        let count = ((hi - lo) / step).round() as usize;
        (0..=count).map(|i| lo + step * i as f64).collect()
    }

    pub fn maturity_grid(&self) -> Vec<f64> {
        (1..=self.maturities).map(|n| n as f64 / self.maturities as f64).collect()
    }

    pub fn states(&self) -> Vec<f64> {
        std::iter::once(0.0).chain(self.strikes.iter().copied()).collect()
    }

    fn check(&self) -> Result<(), BenchError> {
        let bad = |m: &str| Err(BenchError::Config(m.to_string()));
        if !(self.vol > 0.0) {
            return bad("volatility must be positive");
        }
        if self.maturities == 0 {
            return bad("need at least one maturity");
        }
        if self.steps < 100 {
            return bad("need at least 100 tree steps");
        }
        if self.strikes.is_empty() || self.strikes.windows(2).any(|w| w[0] >= w[1]) || self.strikes[0] <= 0.0 {
            return bad("strikes must be positive and increasing");
        }
        Ok(())
    }
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Black call price on a driftless lognormal with forward `s0`.
pub fn black_call(s0: f64, strike: f64, vol: f64, t: f64) -> f64 {
    if strike <= 0.0 {
        return s0 - strike;
    }
    let sd = vol * t.sqrt();
    if sd == 0.0 {
        return (s0 - strike).max(0.0);
    }
    let n = std_normal();
    let d1 = ((s0 / strike).ln() + 0.5 * sd * sd) / sd;
    s0 * n.cdf(d1) - strike * n.cdf(d1 - sd)
}

/// Calls on the discounted price, a driftless lognormal martingale.
pub fn bs_surface(config: &BenchConfig) -> Result<CallSurface, BenchError> {
    config.check()?;
    let mats = config.maturity_grid();
    let calls = config.strikes.iter().map(|&k| mats.iter().map(|&t| black_call(config.s0, k, config.vol, t)).collect()).collect();
    Ok(CallSurface::new(config.s0, config.strikes.clone(), mats, calls)?)
}

/// American value on a CRR tree for the discounted price, exercising at any node.
pub fn chi_binomial(payoff: &PayoffFunction, config: &BenchConfig) -> f64 {
    binomial(payoff, config, true)
}

/// Same tree, exercise at the horizon only.
pub fn european_binomial(payoff: &PayoffFunction, config: &BenchConfig) -> f64 {
    binomial(payoff, config, false)
}

fn binomial(payoff: &PayoffFunction, config: &BenchConfig, early: bool) -> f64 {
    let steps = config.steps;
    let dt = 1.0 / steps as f64;
    let up = (config.vol * dt.sqrt()).exp();
    let down = 1.0 / up;
    let p = (1.0 - down) / (up - down);
    let node = |i: usize, k: usize| config.s0 * up.powi(k as i32) * down.powi((i - k) as i32);
    let mut values: Vec<f64> = (0..=steps).map(|k| payoff.eval(node(steps, k), 1.0)).collect();
    for i in (0..steps).rev() {
        let t = i as f64 * dt;
        for k in 0..=i {
            let cont = p * values[k + 1] + (1.0 - p) * values[k];
            values[k] = if early { cont.max(payoff.eval(node(i, k), t)) } else { cont };
        }
    }
    values[0]
}

/// Best static value: the largest price of the grid payoff over maturities.
pub fn zeta(surface: &CallSurface, grid: &AmericanPayoffGrid) -> Result<f64, BenchError> {
    let mut best = f64::NEG_INFINITY;
    for n in 0..surface.num_maturities() {
        let col: Vec<f64> = grid.values.iter().map(|r| r[n]).collect();
        best = best.max(price_piecewise_linear(surface, &col, grid.tail_slopes[n], n)?);
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PremiumRow {
    pub maturities: usize,
    pub lowest: f64,
    pub highest: f64,
    pub interval: Option<f64>,
    pub put_strike: f64,
    /// Robust bound for the linearised payoff.
    pub phi: f64,
    /// Tree value of the linearised payoff.
    pub chi: f64,
    /// Best static value of the linearised payoff.
    pub zeta: f64,
    /// Tree value of the original payoff.
    pub chi_original: f64,
    /// 100·(χ − ζ)/(φ − ζ).
    pub premium_pct: f64,
}

/// One table row: the bound, the tree value and the static value of the
/// linearised discounted put.
pub fn premium_row(config: &BenchConfig) -> Result<PremiumRow, BenchError> {
    let surface = bs_surface(config)?;
    let states = config.states();
    let mats = config.maturity_grid();
    let put = payoff::discounted_put(config.put_strike, config.rate);
    let linear = payoff::linearize(&put, &states, &mats);
    let grid = payoff::exercise_time_transform(&linear, &states, &mats)?;
    let bound = robust_bound(&surface, &grid, BoundOptions::default())?;
    let (chi, chi_original) = rayon::join(|| chi_binomial(&linear, config), || chi_binomial(&put, config));
    let z = zeta(&surface, &grid)?;
    let interval = (config.strikes.len() > 1).then(|| config.strikes[1] - config.strikes[0]);
    Ok(PremiumRow {
        maturities: config.maturities,
        lowest: config.strikes[0],
        highest: *config.strikes.last().unwrap(),
        interval,
        put_strike: config.put_strike,
        phi: bound.phi,
        chi,
        zeta: z,
        chi_original,
        premium_pct: 100.0 * (chi - z) / (bound.phi - z),
    })
}

pub fn premium_table(configs: &[BenchConfig]) -> Result<Vec<PremiumRow>, BenchError> {
    configs.par_iter().map(premium_row).collect()
}

/// Grid refinement rows: maturity count and strike grid vary, put at 100.
pub fn mesh_configs() -> Vec<BenchConfig> {
    let wide = BenchConfig::strike_range(70.0, 140.0, 10.0);
    vec![
        BenchConfig::put(2, vec![100.0], 100.0),
        BenchConfig::put(2, wide.clone(), 100.0),
        BenchConfig::put(4, wide.clone(), 100.0),
        BenchConfig::put(4, BenchConfig::strike_range(70.0, 140.0, 2.5), 100.0),
        BenchConfig::put(12, wide.clone(), 100.0),
        BenchConfig::put(26, wide, 100.0),
    ]
}

/// Moneyness rows: quarterly maturities, strikes 70..140, put strike varies.
pub fn moneyness_configs() -> Vec<BenchConfig> {
    let wide = BenchConfig::strike_range(70.0, 140.0, 10.0);
    [80.0, 90.0, 100.0, 110.0, 120.0].iter().map(|&k| BenchConfig::put(4, wide.clone(), k)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarkovBest {
    pub value: f64,
    pub up_probability: f64,
}

/// Best price of the two-period claim over Markov models in the natural
/// filtration. From 1 the chain reaches 4 with probability `p`, from 3 with
/// `s = 4/5 − p`; both must be martingale kernels on {0, 2, 4}. Values come
/// from backward induction; infeasible `p` are skipped.
pub fn markov_best_two_period(grid: &[f64]) -> Option<MarkovBest> {
    let mut best: Option<MarkovBest> = None;
    for &p in grid {
        let s = 0.8 - p;
        if !(0.0..=0.25).contains(&p) || !(0.5..=0.75).contains(&s) {
            continue;
        }
        let low = (1.0f64).max(8.0 * p);
        let high = 8.0 * s;
        let value = 0.5 * low + 0.5 * high;
        if best.is_none_or(|b| value > b.value) {
            best = Some(MarkovBest { value, up_probability: p });
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn black_limits() {
        let atm = black_call(100.0, 100.0, 0.2, 1.0);
        let n = std_normal();
        assert!((atm - 100.0 * (2.0 * n.cdf(0.1) - 1.0)).abs() < 1e-10);
        assert!((black_call(100.0, 1e-9, 0.2, 1.0) - 100.0).abs() < 1e-6);
        assert!(black_call(100.0, 1e6, 0.2, 1.0) < 1e-12);
    }

    #[test]
    fn markov_sweep() {
        let grid: Vec<f64> = (0..=200).map(|i| 0.25 * i as f64 / 200.0).collect();
        let best = markov_best_two_period(&grid).unwrap();
        assert!((best.value - 3.5).abs() < 1e-12);
        assert!((best.up_probability - 0.05).abs() < 1e-12);
        assert!((markov_best_two_period(&[0.25]).unwrap().value - 3.2).abs() < 1e-12);
        assert!((markov_best_two_period(&[0.125]).unwrap().value - 3.2).abs() < 1e-12);
        assert!(markov_best_two_period(&[0.01]).is_none());
    }
}
