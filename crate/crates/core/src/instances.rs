//! Small worked instances with known answers, used by the demos and tests.

use crate::certify::{CertifyError, HedgeStrategy};
use crate::market::{implied_marginals, CallSurface, MarginalSystem, MarketError};
use crate::payoff::{AmericanPayoffGrid, LatticePayoff};

#[derive(Debug, Clone)]
pub struct Instance {
    pub name: &'static str,
    pub surface: CallSurface,
    pub marginals: MarginalSystem,
    pub payoff: AmericanPayoffGrid,
    pub lattice: LatticePayoff,
    /// Known value of the bound.
    pub reference: f64,
    /// A published optimal hedge, when there is one.
    pub hedge: Option<HedgeStrategy>,
}

pub const NAMES: [&str; 3] = ["sec26", "sec52", "eg11"];

pub fn by_name(name: &str) -> Option<Instance> {
    match name {
        "sec26" => Some(three_strike_jump(&[0.5, 0.25, 0.25], &[130.0, 115.0, 100.0]).expect("valid built-in")),
        "sec52" => Some(two_period_filtration()),
        "eg11" => Some(information_timing()),
        _ => None,
    }
}

/// Per-maturity puts `(b_n − x)^+` on a grid.
fn strike_puts(states: &[f64], strikes: &[f64]) -> AmericanPayoffGrid {
    let values = states.iter().map(|x| strikes.iter().map(|b| (b - x).max(0.0)).collect()).collect();
    AmericanPayoffGrid::new(values, vec![0.0; strikes.len()]).expect("finite")
}

fn strike_puts_lattice(maturities: &[f64], strikes: &[f64]) -> LatticePayoff {
    let (b1, b2) = (strikes.to_vec(), strikes.to_vec());
    LatticePayoff::from_fn(
        maturities,
        move |n, x| (b1[n] - x).max(0.0),
        move |n, x| if x < b2[n] { -1.0 } else { 0.0 },
    )
}

/// Largest maturity index (1-based) with `b_n − 50 > 2(b_1 − 100)`.
fn last_waiting_date(b: &[f64]) -> usize {
    b.iter().rposition(|bn| bn - 50.0 > 2.0 * (b[0] - 100.0)).map_or(0, |i| i + 1)
}

/// Bound for the jump instance: exercise at once when the jump comes late,
/// wait for a down-jump when it comes early.
pub fn three_strike_value(q: &[f64], b: &[f64]) -> f64 {
    let last = last_waiting_date(b);
    let late: f64 = q[last..].iter().sum();
    (b[0] - 100.0) * late + (0..last).map(|n| 0.5 * q[n] * (b[n] - 50.0)).sum::<f64>()
}

/// Price 100, strikes {50, 100, 150}; the price jumps to 50 or 150 at
/// maturity n with probability `q[n]`. The claim pays `(b_n − x)^+` at
/// maturity n, with `b` decreasing and `100 < b_1 < 150`.
pub fn three_strike_jump(q: &[f64], b: &[f64]) -> Result<Instance, MarketError> {
    let nn = q.len();
    if b.len() != nn || nn == 0 {
        return Err(MarketError::Malformed("q and b need the same positive length".into()));
    }
    let maturities: Vec<f64> = (1..=nn).map(|n| n as f64).collect();
    let mut cum = 0.0;
    let row2: Vec<f64> = q
        .iter()
        .map(|qn| {
            cum += qn;
            25.0 * cum
        })
        .collect();
    let calls = vec![vec![50.0; nn], row2, vec![0.0; nn]];
    let surface = CallSurface::new(100.0, vec![50.0, 100.0, 150.0], maturities.clone(), calls)?;
    let marginals = implied_marginals(&surface)?;
    let states = surface.states();
    let payoff = strike_puts(&states, b);
    let hedge = three_strike_hedge(q, b).ok();
    Ok(Instance {
        name: "sec26",
        lattice: strike_puts_lattice(&maturities, b),
        surface,
        marginals,
        payoff,
        reference: three_strike_value(q, b),
        hedge,
    })
}

/// Published hedge for the jump instance: no regime-1 stock position, no
/// regime-2 static claims, V as below, E¹ from consecutive V columns. The
/// regime-2 ratio is minus the right slope of the next V column, the sign
/// under which the one-step rows hold.
pub fn three_strike_hedge(q: &[f64], b: &[f64]) -> Result<HedgeStrategy, CertifyError> {
    let nn = q.len();
    let states = vec![0.0, 50.0, 100.0, 150.0];
    let last = last_waiting_date(b);
    let v: Vec<Vec<f64>> = vec![
        b.iter().map(|bn| bn.max(3.0 * (b[0] - 100.0))).collect(),
        (0..nn).map(|n| if n < last { b[n] - 50.0 } else { 2.0 * (b[0] - 100.0) }).collect(),
        vec![b[0] - 100.0; nn],
        vec![0.0; nn],
    ];
    let e1 = v.iter().map(|row| (0..nn).map(|n| if n + 1 < nn { row[n] - row[n + 1] } else { 0.0 }).collect()).collect();
    let d2 = (0..4)
        .map(|j| (0..nn - 1).map(|n| if j < 3 { (v[j][n + 1] - v[j + 1][n + 1]) / 50.0 } else { 0.0 }).collect())
        .collect();
    HedgeStrategy::from_quintuple(
        states,
        (1..=nn).map(|n| n as f64).collect(),
        e1,
        vec![vec![0.0; nn]; 4],
        vec![vec![0.0; nn - 1]; 4],
        d2,
        v,
    )
}

/// Price 2 at time 0, in {1, 3} at time 1 and {0, 2, 4} at time 2, with the
/// time-2 marginal pinned by an Arrow-Debreu price of 2/5 at 4. The claim
/// pays 1 at (1, 1) and 8 at (4, 2).
pub fn two_period_filtration() -> Instance {
    let states = vec![0.0, 1.0, 2.0, 3.0, 4.0];
    let maturities = vec![1.0, 2.0];
    let marginals = vec![vec![0.0, 0.4], vec![0.5, 0.0], vec![0.0, 0.2], vec![0.5, 0.0], vec![0.0, 0.4]];
    let surface = CallSurface::from_marginals(states.clone(), maturities.clone(), marginals, Some(2.0)).expect("valid built-in");
    let m = implied_marginals(&surface).expect("valid built-in");
    let payoff = AmericanPayoffGrid::new(
        vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 0.0], vec![0.0, 0.0], vec![0.0, 8.0]],
        vec![0.0, 0.0],
    )
    .expect("finite");
    let hedge = HedgeStrategy::from_quintuple(
        states.clone(),
        maturities.clone(),
        vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![2.0, 0.0], vec![3.0, 0.0], vec![4.0, 0.0]],
        vec![vec![0.0, 0.0], vec![0.0, 0.0], vec![0.0, 0.0], vec![0.0, -2.0], vec![0.0, -4.0]],
        vec![vec![1.0]; 5],
        // short two units above the middle state after exercise
        vec![vec![0.0], vec![0.0], vec![0.0], vec![-2.0], vec![-2.0]],
        vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![2.0, 0.0], vec![5.0, 4.0], vec![8.0, 8.0]],
    )
    .expect("well-formed");
    Instance {
        name: "sec52",
        lattice: LatticePayoff::from_grid(&payoff, &states, &maturities),
        surface,
        marginals: m,
        payoff,
        reference: 3.6,
        hedge: Some(hedge),
    }
}

/// Price 100 until the first maturity, then 50, 100 or 150 with equal
/// probability. The claim pays `(132 − x)^+` before the move and
/// `(120 − x)^+` after it.
pub fn information_timing() -> Instance {
    let states = vec![0.0, 50.0, 100.0, 150.0];
    let maturities = vec![1.0, 2.0];
    let third = 1.0 / 3.0;
    let marginals = vec![vec![0.0, 0.0], vec![0.0, third], vec![1.0, third], vec![0.0, third]];
    let surface = CallSurface::from_marginals(states.clone(), maturities.clone(), marginals, Some(100.0)).expect("valid built-in");
    let m = implied_marginals(&surface).expect("valid built-in");
    let b = [132.0, 120.0];
    Instance {
        name: "eg11",
        lattice: strike_puts_lattice(&maturities, &b),
        payoff: strike_puts(&states, &b),
        surface,
        marginals: m,
        reference: 34.0,
        hedge: None,
    }
}
