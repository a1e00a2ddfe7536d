//! Call-price surfaces, their arbitrage checks, and the discrete marginals
//! they imply.

mod io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use io::{load_surface, load_surface_csv, load_surface_json, SurfaceDocument};

pub const DEFAULT_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum MarketError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("malformed surface: {0}")]
    Malformed(String),
    #[error("inconsistent surface: {0}")]
    Inconsistent(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// European call prices on a strike × maturity grid. Row 0 is the zero
/// strike and always holds `s0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallSurface {
    s0: f64,
    strikes: Vec<f64>,
    maturities: Vec<f64>,
    prices: Vec<Vec<f64>>,
}

fn check_grid(name: &str, v: &[f64]) -> Result<(), MarketError> {
    if v.is_empty() {
        return Err(MarketError::Malformed(format!("{name} must not be empty")));
    }
    if v.iter().any(|x| !x.is_finite() || *x <= 0.0) {
        return Err(MarketError::Malformed(format!("{name} must be finite and positive")));
    }
    if v.windows(2).any(|w| w[1] <= w[0]) {
        return Err(MarketError::Malformed(format!("{name} not increasing")));
    }
    Ok(())
}

impl CallSurface {
    /// `calls` is indexed `[strike][maturity]` over the positive strikes; a
    /// leading zero-strike row is accepted if it equals `s0`.
    pub fn new(s0: f64, strikes: Vec<f64>, maturities: Vec<f64>, calls: Vec<Vec<f64>>) -> Result<Self, MarketError> {
        if !(s0.is_finite() && s0 > 0.0) {
            return Err(MarketError::Malformed("s0 must be positive".into()));
        }
        check_grid("strikes", &strikes)?;
        check_grid("maturities", &maturities)?;
        let (j, n) = (strikes.len(), maturities.len());
        let mut rows = calls;
        if rows.len() == j + 1 {
            if rows[0].iter().any(|c| (c - s0).abs() > 1e-12 * s0.max(1.0)) {
                return Err(MarketError::Malformed("zero-strike row must equal s0".into()));
            }
            rows.remove(0);
        }
        if rows.len() != j {
            return Err(MarketError::Malformed(format!("expected {j} call rows, got {}", rows.len())));
        }
        let mut prices = vec![vec![s0; n]];
        for (k, row) in rows.into_iter().enumerate() {
            if row.len() != n {
                return Err(MarketError::Malformed(format!("call row {} has {} entries, expected {n}", k + 1, row.len())));
            }
            if row.iter().any(|c| !c.is_finite()) {
                return Err(MarketError::Malformed(format!("non-finite price in row {}", k + 1)));
            }
            if row.iter().any(|c| *c < 0.0) {
                return Err(MarketError::Malformed(format!("negative call price at strike {}", strikes[k])));
            }
            prices.push(row);
        }
        Ok(CallSurface { s0, strikes, maturities, prices })
    }

    /// Builds the surface priced off grid marginals `[state][maturity]`.
    /// A zero state is added with no mass if `states` does not start at 0.
    pub fn from_marginals(states: Vec<f64>, maturities: Vec<f64>, marginals: Vec<Vec<f64>>, s0: Option<f64>) -> Result<Self, MarketError> {
        if states.len() != marginals.len() {
            return Err(MarketError::Malformed(format!("{} states but {} marginal rows", states.len(), marginals.len())));
        }
        if states.iter().any(|x| !x.is_finite() || *x < 0.0) || states.windows(2).any(|w| w[1] <= w[0]) {
            return Err(MarketError::Malformed("states must be nonnegative and increasing".into()));
        }
        let n = maturities.len();
        let (mut states, mut probs) = (states, marginals);
        if states.first().is_none_or(|x| *x > 0.0) {
            states.insert(0, 0.0);
            probs.insert(0, vec![0.0; n]);
        }
        if states.len() < 2 {
            return Err(MarketError::Malformed("need at least one positive state".into()));
        }
        for row in &probs {
            if row.len() != n {
                return Err(MarketError::Malformed("marginal rows must have one entry per maturity".into()));
            }
            if row.iter().any(|p| !p.is_finite() || *p < -DEFAULT_TOL) {
                return Err(MarketError::Malformed("marginal probabilities must be nonnegative".into()));
            }
        }
        let mean = |n: usize| states.iter().zip(&probs).map(|(x, p)| x * p[n]).sum::<f64>();
        for k in 0..n {
            let total: f64 = probs.iter().map(|p| p[k]).sum();
            if (total - 1.0).abs() > 1e-10 {
                return Err(MarketError::Malformed(format!("marginal {} sums to {total}", k + 1)));
            }
        }
        let m0 = mean(0);
        let s0 = s0.unwrap_or(m0);
        if (m0 - s0).abs() > 1e-8 * s0.max(1.0) {
            return Err(MarketError::Inconsistent(format!("first marginal has mean {m0}, s0 is {s0}")));
        }
        let calls: Vec<Vec<f64>> = states[1..]
            .iter()
            .map(|&x| (0..n).map(|k| states.iter().zip(&probs).map(|(y, p)| p[k] * (y - x).max(0.0)).sum()).collect())
            .collect();
        CallSurface::new(s0, states[1..].to_vec(), maturities, calls)
    }

    pub fn s0(&self) -> f64 {
        self.s0
    }

    /// Positive strikes x_1..x_J.
    pub fn strikes(&self) -> &[f64] {
        &self.strikes
    }

    /// The full state grid x_0 = 0, x_1, ..., x_J.
    pub fn states(&self) -> Vec<f64> {
        std::iter::once(0.0).chain(self.strikes.iter().copied()).collect()
    }

    pub fn maturities(&self) -> &[f64] {
        &self.maturities
    }

    /// Prices `[j][n]` for j = 0..=J.
    pub fn prices(&self) -> &[Vec<f64>] {
        &self.prices
    }

    pub fn price(&self, j: usize, n: usize) -> f64 {
        self.prices[j][n]
    }

    /// Number of positive strikes J.
    pub fn top(&self) -> usize {
        self.strikes.len()
    }

    pub fn num_maturities(&self) -> usize {
        self.maturities.len()
    }

    pub fn is_zero_tail(&self, tol: f64) -> bool {
        self.prices[self.top()][self.num_maturities() - 1] <= tol
    }

    pub fn with_price(&self, j: usize, n: usize, value: f64) -> CallSurface {
        let mut s = self.clone();
        s.prices[j][n] = value;
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ValidationStatus {
    WeaklyValid,
    StrictlyValid,
    Invalid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstraintId {
    MonotoneInStrike,
    SlopeAtMostOne,
    Convexity,
    Calendar,
    PositiveTail,
    ConvexOrder,
    EqualMeans,
}

/// One failed inequality. `indices` is (strike row j, maturity number n) with
/// j = 0 the zero strike and n counted from 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub constraint: ConstraintId,
    pub indices: (usize, usize),
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub status: ValidationStatus,
    pub violations: Vec<Violation>,
    pub zero_tail: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Weak,
    Strict,
}

/// Every no-arbitrage inequality written as `margin ≥ 0`, in price units.
fn margins(s: &CallSurface) -> Vec<(ConstraintId, (usize, usize), f64)> {
    let x = s.states();
    let c = &s.prices;
    let jt = s.top();
    let mut out = Vec::new();
    for n in 0..s.num_maturities() {
        out.push((ConstraintId::SlopeAtMostOne, (1, n + 1), x[1] - c[0][n] + c[1][n]));
        for j in 1..=jt {
            out.push((ConstraintId::MonotoneInStrike, (j, n + 1), c[j - 1][n] - c[j][n]));
        }
        for j in 1..jt {
            let lam = (x[j + 1] - x[j]) / (x[j + 1] - x[j - 1]);
            let butterfly = lam * c[j - 1][n] + (1.0 - lam) * c[j + 1][n] - c[j][n];
            out.push((ConstraintId::Convexity, (j, n + 1), butterfly));
        }
        if n + 1 < s.num_maturities() {
            for j in 1..=jt {
                out.push((ConstraintId::Calendar, (j, n + 2), c[j][n + 1] - c[j][n]));
            }
        }
    }
    out
}

pub fn validate(surface: &CallSurface, mode: Mode, tol: f64) -> ValidationReport {
    let mut weak = Vec::new();
    let mut strict = Vec::new();
    for (id, idx, m) in margins(surface) {
        if m < -tol {
            weak.push(Violation { constraint: id, indices: idx, magnitude: -m });
        } else if m <= tol {
            strict.push(Violation { constraint: id, indices: idx, magnitude: tol - m });
        }
    }
    let jt = surface.top();
    for n in 0..surface.num_maturities() {
        let c = surface.prices[jt][n];
        if c <= tol {
            strict.push(Violation { constraint: ConstraintId::PositiveTail, indices: (jt, n + 1), magnitude: tol - c });
        }
    }
    let zero_tail = surface.is_zero_tail(tol);
    let status = if !weak.is_empty() {
        ValidationStatus::Invalid
    } else if strict.is_empty() {
        ValidationStatus::StrictlyValid
    } else if mode == Mode::Strict {
        ValidationStatus::Invalid
    } else {
        ValidationStatus::WeaklyValid
    };
    let mut violations = weak;
    if mode == Mode::Strict {
        violations.extend(strict);
    }
    ValidationReport { status, violations, zero_tail }
}

/// Node probabilities `p[j][n]` on the grid x_0 = 0 < x_1 < ... < x_J.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalSystem {
    pub s0: f64,
    pub states: Vec<f64>,
    pub maturities: Vec<f64>,
    pub probs: Vec<Vec<f64>>,
}

/// `probs` has J+2 rows; the last carries the call price at the top strike.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtendedMarginalSystem {
    pub s0: f64,
    pub states: Vec<f64>,
    pub maturities: Vec<f64>,
    pub probs: Vec<Vec<f64>>,
}

impl MarginalSystem {
    pub fn top(&self) -> usize {
        self.states.len() - 1
    }

    pub fn num_maturities(&self) -> usize {
        self.maturities.len()
    }

    pub fn column(&self, n: usize) -> Vec<f64> {
        self.probs.iter().map(|r| r[n]).collect()
    }

    pub fn mean(&self, n: usize) -> f64 {
        self.states.iter().zip(&self.probs).map(|(x, p)| x * p[n]).sum()
    }

    /// Zero-mass tail row, for feeding a bounded instance to the extended LPs.
    pub fn extended(&self) -> ExtendedMarginalSystem {
        let mut probs = self.probs.clone();
        probs.push(vec![0.0; self.num_maturities()]);
        ExtendedMarginalSystem { s0: self.s0, states: self.states.clone(), maturities: self.maturities.clone(), probs }
    }
}

impl ExtendedMarginalSystem {
    pub fn top(&self) -> usize {
        self.states.len() - 1
    }

    pub fn num_maturities(&self) -> usize {
        self.maturities.len()
    }

    pub fn tail_mass(&self) -> Vec<f64> {
        self.probs[self.top() + 1].clone()
    }

    pub fn bounded(&self) -> MarginalSystem {
        MarginalSystem {
            s0: self.s0,
            states: self.states.clone(),
            maturities: self.maturities.clone(),
            probs: self.probs[..=self.top()].to_vec(),
        }
    }
}

fn raw_marginals(surface: &CallSurface) -> Vec<Vec<f64>> {
    let x = surface.states();
    let c = &surface.prices;
    let jt = surface.top();
    let nn = surface.num_maturities();
    let slope = |j: usize, n: usize| (c[j - 1][n] - c[j][n]) / (x[j] - x[j - 1]);
    let mut p = vec![vec![0.0; nn]; jt + 1];
    for n in 0..nn {
        p[0][n] = 1.0 - slope(1, n);
        for j in 1..jt {
            p[j][n] = slope(j, n) - slope(j + 1, n);
        }
        p[jt][n] = slope(jt, n);
    }
    p
}

pub fn implied_marginals(surface: &CallSurface) -> Result<MarginalSystem, MarketError> {
    let mut p = raw_marginals(surface);
    let nn = surface.num_maturities();
    for n in 0..nn {
        for (j, row) in p.iter_mut().enumerate() {
            if row[n] < -DEFAULT_TOL {
                return Err(MarketError::Inconsistent(format!("negative implied probability {} at node ({j}, {})", row[n], n + 1)));
            }
            row[n] = row[n].max(0.0);
        }
        let total: f64 = p.iter().map(|r| r[n]).sum();
        if (total - 1.0).abs() > 1e-8 {
            return Err(MarketError::Inconsistent(format!("implied marginal {} sums to {total}", n + 1)));
        }
        for row in p.iter_mut() {
            row[n] /= total;
        }
    }
    let m = MarginalSystem { s0: surface.s0, states: surface.states(), maturities: surface.maturities.clone(), probs: p };
    let jt = surface.top();
    for n in 0..nn {
        let gap = m.mean(n) + surface.prices[jt][n] - surface.s0;
        if gap.abs() > 1e-8 * surface.s0.max(1.0) {
            return Err(MarketError::Inconsistent(format!("implied marginal {} has mean off by {gap}", n + 1)));
        }
    }
    Ok(m)
}

pub fn extended_marginals(surface: &CallSurface) -> Result<ExtendedMarginalSystem, MarketError> {
    let m = implied_marginals(surface)?;
    let mut probs = m.probs;
    probs.push(surface.prices[surface.top()].clone());
    Ok(ExtendedMarginalSystem { s0: m.s0, states: m.states, maturities: m.maturities, probs })
}

/// Static price at maturity `n` of the claim paying the extended linear
/// interpolation of `values` (slope `tail_slope` beyond the top strike).
pub fn price_piecewise_linear(surface: &CallSurface, values: &[f64], tail_slope: f64, n: usize) -> Result<f64, MarketError> {
    if values.len() != surface.top() + 1 {
        return Err(MarketError::Malformed(format!("expected {} values, got {}", surface.top() + 1, values.len())));
    }
    if n >= surface.num_maturities() {
        return Err(MarketError::Malformed(format!("maturity index {n} out of range")));
    }
    let p = raw_marginals(surface);
    let body: f64 = values.iter().zip(&p).map(|(h, row)| h * row[n]).sum();
    Ok(body + tail_slope * surface.prices[surface.top()][n])
}

pub fn check_convex_order(m: &MarginalSystem, tol: f64) -> ValidationReport {
    let mut violations = Vec::new();
    let call = |n: usize, strike: f64| m.states.iter().zip(&m.probs).map(|(x, p)| p[n] * (x - strike).max(0.0)).sum::<f64>();
    for n in 0..m.num_maturities().saturating_sub(1) {
        let gap = m.mean(n + 1) - m.mean(n);
        if gap.abs() > tol * m.s0.max(1.0) {
            violations.push(Violation { constraint: ConstraintId::EqualMeans, indices: (0, n + 2), magnitude: gap.abs() });
        }
        for (j, &x) in m.states.iter().enumerate() {
            let d = call(n + 1, x) - call(n, x);
            if d < -tol {
                violations.push(Violation { constraint: ConstraintId::ConvexOrder, indices: (j, n + 2), magnitude: -d });
            }
        }
    }
    let status = if violations.is_empty() { ValidationStatus::WeaklyValid } else { ValidationStatus::Invalid };
    let last = m.num_maturities() - 1;
    let zero_tail = m.probs[m.top()][last] >= 0.0 && call(last, m.states[m.top()]) <= tol;
    ValidationReport { status, violations, zero_tail }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// The three-strike example: strikes 50/100/150, c_2 = 25 Q_n.
    fn three_strike(q: [f64; 3]) -> CallSurface {
        let mut cum = 0.0;
        let c2: Vec<f64> = q.iter().map(|v| {
            cum += v;
            25.0 * cum
        }).collect();
        CallSurface::new(100.0, vec![50.0, 100.0, 150.0], vec![1.0, 2.0, 3.0], vec![vec![50.0; 3], c2, vec![0.0; 3]]).unwrap()
    }

    #[test]
    fn three_strike_surface_is_weakly_valid_with_zero_tail() {
        let s = three_strike([0.5, 0.25, 0.25]);
        assert_eq!(s.prices()[2], vec![12.5, 18.75, 25.0]);
        let r = validate(&s, Mode::Weak, DEFAULT_TOL);
        assert_eq!(r.status, ValidationStatus::WeaklyValid);
        assert!(r.zero_tail);
        assert!(r.violations.is_empty());
        assert_eq!(validate(&s, Mode::Strict, DEFAULT_TOL).status, ValidationStatus::Invalid);
    }

    #[test]
    fn three_strike_marginals() {
        let s = three_strike([0.5, 0.25, 0.25]);
        let m = implied_marginals(&s).unwrap();
        for (n, big_q) in [0.5, 0.75, 1.0].into_iter().enumerate() {
            let want = [0.0, big_q / 2.0, 1.0 - big_q, big_q / 2.0];
            for j in 0..4 {
                assert!((m.probs[j][n] - want[j]).abs() < 1e-14);
            }
        }
        let e = extended_marginals(&s).unwrap();
        assert!(e.tail_mass().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn dominated_call_is_flagged() {
        let s = three_strike([0.5, 0.25, 0.25]).with_price(1, 0, 101.0);
        let r = validate(&s, Mode::Weak, DEFAULT_TOL);
        assert_eq!(r.status, ValidationStatus::Invalid);
        assert!(r.violations.iter().any(|v| v.constraint == ConstraintId::MonotoneInStrike && v.indices == (1, 1)));
    }

    #[test]
    fn unsorted_strikes_rejected() {
        let e = CallSurface::new(100.0, vec![100.0, 70.0], vec![1.0], vec![vec![1.0], vec![2.0]]).unwrap_err();
        assert!(e.to_string().contains("not increasing"));
    }

    #[test]
    fn negative_price_rejected() {
        assert!(CallSurface::new(100.0, vec![100.0], vec![1.0], vec![vec![-1.0]]).is_err());
    }

    #[test]
    fn linear_in_strike_has_no_interior_mass() {
        // c linear between strikes 1 and 3, convex kink at 1
        let s = CallSurface::new(2.0, vec![1.0, 2.0, 3.0], vec![1.0], vec![vec![1.0], vec![0.5], vec![0.0]]).unwrap();
        let m = implied_marginals(&s).unwrap();
        assert_eq!(m.probs[2][0], 0.0);
    }

    #[test]
    fn marginals_input_round_trip() {
        let s = CallSurface::from_marginals(
            vec![0.0, 1.0, 2.0, 3.0, 4.0],
            vec![1.0, 2.0],
            vec![vec![0.0, 0.4], vec![0.5, 0.0], vec![0.0, 0.2], vec![0.5, 0.0], vec![0.0, 0.4]],
            Some(2.0),
        )
        .unwrap();
        let m = implied_marginals(&s).unwrap();
        assert!((m.probs[3][0] - 0.5).abs() < 1e-14);
        assert!((m.probs[4][1] - 0.4).abs() < 1e-14);
        assert_eq!(check_convex_order(&m, DEFAULT_TOL).status, ValidationStatus::WeaklyValid);
    }

    #[test]
    fn shrinking_spread_breaks_convex_order() {
        let m = MarginalSystem {
            s0: 2.0,
            states: vec![0.0, 1.0, 2.0, 3.0, 4.0],
            maturities: vec![1.0, 2.0],
            probs: vec![vec![0.5, 0.0], vec![0.0, 0.0], vec![0.0, 1.0], vec![0.0, 0.0], vec![0.5, 0.0]],
        };
        let r = check_convex_order(&m, DEFAULT_TOL);
        assert_eq!(r.status, ValidationStatus::Invalid);
        assert!(r.violations.iter().all(|v| v.constraint == ConstraintId::ConvexOrder));
    }

    #[test]
    fn single_maturity_is_vacuously_ordered() {
        let m = MarginalSystem { s0: 1.0, states: vec![0.0, 2.0], maturities: vec![1.0], probs: vec![vec![0.5], vec![0.5]] };
        assert_eq!(check_convex_order(&m, DEFAULT_TOL).status, ValidationStatus::WeaklyValid);
    }

    #[test]
    fn piecewise_linear_pricing_examples() {
        let s = three_strike([0.5, 0.25, 0.25]);
        for n in 0..3 {
            assert!((price_piecewise_linear(&s, &[1.0; 4], 0.0, n).unwrap() - 1.0).abs() < 1e-12);
            assert!((price_piecewise_linear(&s, &s.states(), 1.0, n).unwrap() - 100.0).abs() < 1e-12);
            for m in 0..4 {
                let xm = s.states()[m];
                let h: Vec<f64> = s.states().iter().map(|x| (x - xm).max(0.0)).collect();
                assert!((price_piecewise_linear(&s, &h, 1.0, n).unwrap() - s.price(m, n)).abs() < 1e-12);
            }
        }
        assert!(price_piecewise_linear(&s, &[1.0; 3], 0.0, 0).is_err());
    }
}
