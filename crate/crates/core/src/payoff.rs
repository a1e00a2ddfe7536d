//! American payoffs: black-box evaluators, their grid restrictions, the
//! piecewise-linear approximation used in the benchmarks, and the
//! exercise-time shift for claims that may be exercised between maturities.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PayoffError {
    #[error("payoff '{name}' is not convex in x: secant check failed at x={x}, y={y}, t={t}")]
    NotConvex { name: String, x: f64, y: f64, t: f64 },
    #[error("payoff '{name}' is not decreasing in t: failed at x={x}, t1={t1}, t2={t2}")]
    NotDecreasing { name: String, x: f64, t1: f64, t2: f64 },
    #[error("payoff '{0}' must be decreasing in t for the exercise-time transform")]
    NeedsDecreasing(String),
    #[error("bad payoff grid: {0}")]
    BadGrid(String),
}

type Eval = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
type TailFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Shape claims checked by random sampling when a payoff is built.
#[derive(Debug, Clone, Copy, Default)]
pub struct Shape {
    pub convex_in_x: bool,
    pub decreasing_in_t: bool,
}

/// Box over which shape claims are sampled.
#[derive(Debug, Clone, Copy)]
pub struct Domain {
    pub x_max: f64,
    pub t_max: f64,
}

impl Default for Domain {
    fn default() -> Self {
        Domain { x_max: 1000.0, t_max: 10.0 }
    }
}

/// An American payoff `(x, t) ↦ a(x, t)` on discounted price and time.
#[derive(Clone)]
pub struct PayoffFunction {
    name: String,
    eval: Eval,
    slope: Option<Eval>,
    tail: TailFn,
    shape: Shape,
}

impl fmt::Debug for PayoffFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PayoffFunction").field("name", &self.name).field("shape", &self.shape).finish()
    }
}

const SAMPLES: usize = 1000;

impl PayoffFunction {
    /// `tail_slope(t)` is `lim a(x,t)/x` as `x → ∞`. The claimed shape is
    /// checked on 1000 random secants (and 1000 random time pairs).
    pub fn new<F, T>(name: &str, eval: F, tail_slope: T, shape: Shape, domain: Domain) -> Result<Self, PayoffError>
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
        T: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let p = PayoffFunction { name: name.to_string(), eval: Arc::new(eval), slope: None, tail: Arc::new(tail_slope), shape };
        p.check_shape(domain)?;
        Ok(p)
    }

    /// Supplies the right derivative in x; otherwise a one-sided difference is used.
    pub fn with_slope<S>(mut self, slope: S) -> Self
    where
        S: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        self.slope = Some(Arc::new(slope));
        self
    }

    fn check_shape(&self, domain: Domain) -> Result<(), PayoffError> {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        if self.shape.convex_in_x {
            for _ in 0..SAMPLES {
                let x = rng.random::<f64>() * domain.x_max;
                let y = rng.random::<f64>() * domain.x_max;
                let t = rng.random::<f64>() * domain.t_max;
                let lam = rng.random::<f64>();
                let (fx, fy) = (self.eval(x, t), self.eval(y, t));
                let mid = self.eval(lam * x + (1.0 - lam) * y, t);
                let rhs = lam * fx + (1.0 - lam) * fy;
                if mid > rhs + 1e-12 * (1.0 + fx.abs() + fy.abs()) {
                    return Err(PayoffError::NotConvex { name: self.name.clone(), x, y, t });
                }
            }
        }
        if self.shape.decreasing_in_t {
            for _ in 0..SAMPLES {
                let x = rng.random::<f64>() * domain.x_max;
                let a = rng.random::<f64>() * domain.t_max;
                let b = rng.random::<f64>() * domain.t_max;
                let (t1, t2) = if a <= b { (a, b) } else { (b, a) };
                let (f1, f2) = (self.eval(x, t1), self.eval(x, t2));
                if f2 > f1 + 1e-12 * (1.0 + f1.abs()) {
                    return Err(PayoffError::NotDecreasing { name: self.name.clone(), x, t1, t2 });
                }
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, x: f64, t: f64) -> f64 {
        (self.eval)(x, t)
    }

    pub fn right_slope(&self, x: f64, t: f64) -> f64 {
        match &self.slope {
            Some(s) => s(x, t),
            None => {
                let h = 1e-7 * (1.0 + x.abs());
                (self.eval(x + h, t) - self.eval(x, t)) / h
            }
        }
    }

    pub fn tail_slope(&self, t: f64) -> f64 {
        (self.tail)(t)
    }

    pub fn is_convex_in_x(&self) -> bool {
        self.shape.convex_in_x
    }

    pub fn is_decreasing_in_t(&self) -> bool {
        self.shape.decreasing_in_t
    }
}

/// `(K e^{−rt} − x)⁺`.
pub fn discounted_put(strike: f64, rate: f64) -> PayoffFunction {
    assert!(strike > 0.0 && rate >= 0.0, "put needs K > 0 and r >= 0");
    let shape = Shape { convex_in_x: true, decreasing_in_t: true };
    let domain = Domain { x_max: 3.0 * strike, t_max: 10.0 };
    PayoffFunction::new(&format!("put(K={strike}, r={rate})"), move |x, t| (strike * (-rate * t).exp() - x).max(0.0), |_| 0.0, shape, domain)
        .expect("the discounted put is convex and decreasing")
        .with_slope(move |x, t| if x < strike * (-rate * t).exp() { -1.0 } else { 0.0 })
}

pub fn constant(c: f64) -> PayoffFunction {
    let shape = Shape { convex_in_x: true, decreasing_in_t: true };
    PayoffFunction::new(&format!("constant({c})"), move |_, _| c, |_| 0.0, shape, Domain::default())
        .expect("constants are convex and decreasing")
        .with_slope(|_, _| 0.0)
}

/// Payoff values `a[j][n]` at grid nodes plus asymptotic slopes `R_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmericanPayoffGrid {
    pub values: Vec<Vec<f64>>,
    pub tail_slopes: Vec<f64>,
    /// Global slope bound R ≥ every tail slope.
    pub slope_bound: f64,
}

impl AmericanPayoffGrid {
    /// Negative values are clamped to zero (with a warning).
    pub fn new(values: Vec<Vec<f64>>, tail_slopes: Vec<f64>) -> Result<Self, PayoffError> {
        let n = tail_slopes.len();
        if values.is_empty() || values.iter().any(|r| r.len() != n) {
            return Err(PayoffError::BadGrid(format!("every value row needs {n} entries")));
        }
        if tail_slopes.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(PayoffError::BadGrid("tail slopes must be finite and nonnegative".into()));
        }
        let mut values = values;
        let mut clamped = 0;
        for v in values.iter_mut().flatten() {
            if !v.is_finite() {
                return Err(PayoffError::BadGrid("non-finite payoff value".into()));
            }
            if *v < 0.0 {
                *v = 0.0;
                clamped += 1;
            }
        }
        if clamped > 0 {
            log::warn!("clamped {clamped} negative payoff values to 0");
        }
        let slope_bound = tail_slopes.iter().fold(0.0f64, |a, b| a.max(*b));
        Ok(AmericanPayoffGrid { values, tail_slopes, slope_bound })
    }

    pub fn zeros(states: usize, maturities: usize) -> Self {
        AmericanPayoffGrid::new(vec![vec![0.0; maturities]; states], vec![0.0; maturities]).unwrap()
    }

    pub fn num_states(&self) -> usize {
        self.values.len()
    }

    pub fn num_maturities(&self) -> usize {
        self.tail_slopes.len()
    }

    pub fn value(&self, j: usize, n: usize) -> f64 {
        self.values[j][n]
    }
}

fn grid_at_times(f: &PayoffFunction, states: &[f64], times: &[f64]) -> AmericanPayoffGrid {
    let values = states.iter().map(|&x| times.iter().map(|&t| f.eval(x, t)).collect()).collect();
    let tails = times.iter().map(|&t| f.tail_slope(t).max(0.0)).collect();
    AmericanPayoffGrid::new(values, tails).expect("finite payoff")
}

pub fn grid_payoff(f: &PayoffFunction, states: &[f64], maturities: &[f64]) -> AmericanPayoffGrid {
    grid_at_times(f, states, maturities)
}

/// Times at which the exercise-time transform samples `A`: 0, t_1, ..., t_{N−1}.
pub fn shifted_times(maturities: &[f64]) -> Vec<f64> {
    std::iter::once(0.0).chain(maturities[..maturities.len() - 1].iter().copied()).collect()
}

/// Grid payoff `a(x_j, t_k) = A(x_j, t_{k−1})` with t_0 = 0, whose bound
/// covers exercise at any time in (0, T].
pub fn exercise_time_transform(a: &PayoffFunction, states: &[f64], maturities: &[f64]) -> Result<AmericanPayoffGrid, PayoffError> {
    if !a.is_decreasing_in_t() {
        return Err(PayoffError::NeedsDecreasing(a.name().to_string()));
    }
    Ok(grid_at_times(a, states, &shifted_times(maturities)))
}

fn locate(states: &[f64], x: f64) -> usize {
    // index j with states[j] <= x < states[j+1], clamped to the last segment
    match states.partition_point(|s| *s <= x) {
        0 => 0,
        p => (p - 1).min(states.len() - 2),
    }
}

/// Extended linear interpolation of knot values with slope `tail` beyond the last knot.
pub fn interpolate(states: &[f64], values: &[f64], tail: f64, x: f64) -> f64 {
    let last = states.len() - 1;
    if x >= states[last] {
        return values[last] + tail * (x - states[last]);
    }
    let j = locate(states, x);
    if x == states[j] {
        return values[j];
    }
    let w = (x - states[j]) / (states[j + 1] - states[j]);
    values[j] * (1.0 - w) + values[j + 1] * w
}

fn interpolate_slope(states: &[f64], values: &[f64], tail: f64, x: f64) -> f64 {
    let last = states.len() - 1;
    if x >= states[last] {
        return tail;
    }
    let j = locate(states, x);
    (values[j + 1] - values[j]) / (states[j + 1] - states[j])
}

/// Piecewise-linear approximation ā: in x, the extended linear interpolation
/// of f at the grid states; in t, piecewise constant on [t_n, t_{n+1}) with
/// knots 0, t_1, ..., t_N.
pub fn linearize(f: &PayoffFunction, states: &[f64], maturities: &[f64]) -> PayoffFunction {
    let knots: Vec<f64> = std::iter::once(0.0).chain(maturities.iter().copied()).collect();
    let states = states.to_vec();
    let rows: Vec<Vec<f64>> = knots.iter().map(|&t| states.iter().map(|&x| f.eval(x, t)).collect()).collect();
    let tails: Vec<f64> = knots.iter().map(|&t| f.tail_slope(t)).collect();
    let pick = {
        let knots = knots.clone();
        move |t: f64| knots.partition_point(|k| *k <= t).saturating_sub(1)
    };
    let (s1, r1, t1, p1) = (states.clone(), rows.clone(), tails.clone(), pick.clone());
    let eval = move |x: f64, t: f64| {
        let k = p1(t);
        interpolate(&s1, &r1[k], t1[k], x)
    };
    let tail = {
        let (t2, p2) = (tails.clone(), pick.clone());
        move |t: f64| t2[p2(t)]
    };
    let x_max = 3.0 * states[states.len() - 1];
    let t_max = 1.5 * maturities[maturities.len() - 1];
    let shape = Shape { convex_in_x: f.is_convex_in_x(), decreasing_in_t: f.is_decreasing_in_t() };
    let name = format!("linearized {}", f.name());
    let slope = move |x: f64, t: f64| {
        let k = pick(t);
        interpolate_slope(&states, &rows[k], tails[k], x)
    };
    PayoffFunction::new(&name, eval, tail, shape, Domain { x_max, t_max })
        .expect("linear interpolation keeps the shape of the original")
        .with_slope(slope)
}

type NodeFn = Arc<dyn Fn(usize, f64) -> f64 + Send + Sync>;

/// Per-maturity payoff functions `x ↦ a(x, t_n)` on the whole half-line, used
/// when checking a hedge away from the grid. `continuous` is the underlying
/// time-continuous payoff when exercise between maturities is allowed.
#[derive(Clone)]
pub struct LatticePayoff {
    value: NodeFn,
    slope: NodeFn,
    continuous: Option<PayoffFunction>,
    maturities: Vec<f64>,
}

impl fmt::Debug for LatticePayoff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LatticePayoff").field("maturities", &self.maturities).field("continuous", &self.continuous).finish()
    }
}

impl LatticePayoff {
    /// `a(x, t_n) = f(x, t_n)`; exercise only at maturities.
    pub fn at_maturities(f: &PayoffFunction, maturities: &[f64]) -> Self {
        let (f1, f2) = (f.clone(), f.clone());
        let (m1, m2) = (maturities.to_vec(), maturities.to_vec());
        LatticePayoff {
            value: Arc::new(move |n, x| f1.eval(x, m1[n]).max(0.0)),
            slope: Arc::new(move |n, x| f2.right_slope(x, m2[n])),
            continuous: None,
            maturities: maturities.to_vec(),
        }
    }

    /// `a(x, t_n) = A(x, t_{n−1})`, with `A` itself available for exercise at any time.
    pub fn transformed(a: &PayoffFunction, maturities: &[f64]) -> Result<Self, PayoffError> {
        if !a.is_decreasing_in_t() {
            return Err(PayoffError::NeedsDecreasing(a.name().to_string()));
        }
        let times = shifted_times(maturities);
        let mut out = LatticePayoff::at_maturities(a, &times);
        out.maturities = maturities.to_vec();
        out.continuous = Some(a.clone());
        Ok(out)
    }

    /// Extended linear interpolation of grid values, tail slope `R_n`.
    pub fn from_grid(grid: &AmericanPayoffGrid, states: &[f64], maturities: &[f64]) -> Self {
        let cols: Vec<Vec<f64>> = (0..grid.num_maturities()).map(|n| grid.values.iter().map(|r| r[n]).collect()).collect();
        let tails = grid.tail_slopes.clone();
        let (c1, t1, s1) = (cols.clone(), tails.clone(), states.to_vec());
        let s2 = states.to_vec();
        LatticePayoff {
            value: Arc::new(move |n, x| interpolate(&s1, &c1[n], t1[n], x)),
            slope: Arc::new(move |n, x| interpolate_slope(&s2, &cols[n], tails[n], x)),
            continuous: None,
            maturities: maturities.to_vec(),
        }
    }

    /// Payoff at maturity index `n` (0-based), taken as the family given by `f(n, x)`.
    pub fn from_fn<F, S>(maturities: &[f64], value: F, slope: S) -> Self
    where
        F: Fn(usize, f64) -> f64 + Send + Sync + 'static,
        S: Fn(usize, f64) -> f64 + Send + Sync + 'static,
    {
        LatticePayoff { value: Arc::new(value), slope: Arc::new(slope), continuous: None, maturities: maturities.to_vec() }
    }

    pub fn value(&self, n: usize, x: f64) -> f64 {
        (self.value)(n, x)
    }

    pub fn slope(&self, n: usize, x: f64) -> f64 {
        (self.slope)(n, x)
    }

    pub fn continuous(&self) -> Option<&PayoffFunction> {
        self.continuous.as_ref()
    }

    pub fn maturities(&self) -> &[f64] {
        &self.maturities
    }
}

/// CLI payoff specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum PayoffSpec {
    Put {
        #[serde(rename = "K")]
        strike: f64,
        #[serde(default)]
        r: f64,
    },
    Grid {
        values: Vec<Vec<f64>>,
        #[serde(default)]
        tail_slopes: Option<Vec<f64>>,
    },
    Example {
        name: String,
    },
}

/// A payoff in the two forms the pipeline needs: the LP grid and the
/// pathwise payoff used to verify hedges.
#[derive(Debug, Clone)]
pub struct PreparedPayoff {
    pub grid: AmericanPayoffGrid,
    pub lattice: LatticePayoff,
}

impl PayoffSpec {
    /// Puts are linearised on `states` and shifted in time, so the bound covers
    /// exercise at any time. Grids are taken as given at the maturities.
    pub fn prepare(&self, states: &[f64], maturities: &[f64]) -> Result<PreparedPayoff, PayoffError> {
        match self {
            PayoffSpec::Put { strike, r } => {
                let linear = linearize(&discounted_put(*strike, *r), states, maturities);
                Ok(PreparedPayoff {
                    grid: exercise_time_transform(&linear, states, maturities)?,
                    lattice: LatticePayoff::transformed(&linear, maturities)?,
                })
            }
            PayoffSpec::Grid { values, tail_slopes } => {
                let nn = maturities.len();
                if values.len() != states.len() || values.iter().any(|r| r.len() != nn) {
                    return Err(PayoffError::BadGrid(format!("grid must be {}x{nn} (states x maturities)", states.len())));
                }
                let grid = AmericanPayoffGrid::new(values.clone(), tail_slopes.clone().unwrap_or_else(|| vec![0.0; nn]))?;
                let lattice = LatticePayoff::from_grid(&grid, states, maturities);
                Ok(PreparedPayoff { grid, lattice })
            }
            PayoffSpec::Example { name } => Err(PayoffError::BadGrid(format!("example '{name}' carries its own surface and payoff"))),
        }
    }
}
