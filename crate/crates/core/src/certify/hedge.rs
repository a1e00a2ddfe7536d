use serde::{Deserialize, Serialize};

use super::CertifyError;
use crate::bound::{Variant, VariableIndex};
use crate::lpcore::LpSolution;
use crate::payoff;

/// Domain on which a hedge is claimed to super-replicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum InterpolationMode {
    /// Grid states only.
    Lattice,
    /// Any price in [0, x_J].
    Interval,
    /// Any nonnegative price.
    FullLine,
}

/// Hedge coefficients of the tail state, indexed by maturity. They are the
/// slopes of the extended European claims beyond the top strike.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub e1: Vec<f64>,
    pub e2: Vec<f64>,
    pub v: Vec<f64>,
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
}

/// Semi-static hedge. `e1[j][n]` is zero at the last maturity and `e2[j][n]`
/// at the first; `d1`, `d2` have one entry per step between maturities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HedgeStrategy {
    pub variant: Variant,
    pub states: Vec<f64>,
    pub maturities: Vec<f64>,
    #[serde(rename = "E1")]
    pub e1: Vec<Vec<f64>>,
    #[serde(rename = "E2")]
    pub e2: Vec<Vec<f64>>,
    #[serde(rename = "D1")]
    pub d1: Vec<Vec<f64>>,
    #[serde(rename = "D2")]
    pub d2: Vec<Vec<f64>>,
    #[serde(rename = "V")]
    pub v: Vec<Vec<f64>>,
    pub tail: Option<TailRow>,
    /// Calls struck at the top strike, one position per maturity.
    pub beta: Vec<f64>,
    pub slope_bound: f64,
    pub mode: InterpolationMode,
}

/// Linear interpolation of grid values on [0, x_J].
pub fn linear_interp(states: &[f64], values: &[f64], x: f64) -> Result<f64, CertifyError> {
    let top = states[states.len() - 1];
    if !(0.0..=top).contains(&x) {
        return Err(CertifyError::Invalid(format!("{x} is outside [0, {top}]")));
    }
    Ok(payoff::interpolate(states, values, 0.0, x))
}

/// Linear interpolation continued with `tail_slope` above x_J.
pub fn linear_interp_extended(states: &[f64], values: &[f64], tail_slope: f64, x: f64) -> f64 {
    payoff::interpolate(states, values, tail_slope, x)
}

fn segment(states: &[f64], x: f64) -> Result<usize, usize> {
    states.binary_search_by(|s| s.total_cmp(&x))
}

/// Value on the open segment starting at knot `j`.
fn mixed_segment(states: &[f64], d: &[f64], w: &[f64], j: usize) -> f64 {
    let u = (w[j + 1] - w[j]) / (states[j + 1] - states[j]);
    if d[j] <= u {
        d[j]
    } else if d[j + 1] >= u {
        d[j + 1]
    } else {
        u
    }
}

/// Hedge ratio between grid states: the knot value at a knot, otherwise
/// whichever of the neighbouring ratios or the secant slope `u` of `w` keeps
/// the interpolated inequalities valid. Requires `0 ≤ x ≤ x_J`.
pub fn mixed_interp(states: &[f64], d: &[f64], w: &[f64], x: f64) -> f64 {
    match segment(states, x) {
        Ok(j) => d[j],
        Err(0) => d[0],
        Err(i) if i >= states.len() => d[states.len() - 1],
        Err(i) => mixed_segment(states, d, w, i - 1),
    }
}

fn column(rows: &[Vec<f64>], n: usize) -> Vec<f64> {
    rows.iter().map(|r| r[n]).collect()
}

fn neg(x: f64) -> f64 {
    (-x).max(0.0)
}

/// Smallest value the interpolated ratio takes on [0, x_J].
fn inf_ratio(states: &[f64], d: &[f64], w: &[f64]) -> f64 {
    let knots = d.iter().copied().fold(f64::INFINITY, f64::min);
    (0..states.len() - 1).map(|j| mixed_segment(states, d, w, j)).fold(knots, f64::min)
}

impl HedgeStrategy {
    pub fn num_maturities(&self) -> usize {
        self.maturities.len()
    }

    pub fn top(&self) -> f64 {
        *self.states.last().unwrap()
    }

    fn validate(&self) -> Result<(), CertifyError> {
        let nn = self.num_maturities();
        let grid = self.states.len();
        let bad = |what: &str| Err(CertifyError::Shape(what.to_string()));
        if nn == 0 || grid < 2 {
            return bad("need at least one maturity and two states");
        }
        for (name, rows, width) in [
            ("E1", &self.e1, nn),
            ("E2", &self.e2, nn),
            ("V", &self.v, nn),
            ("D1", &self.d1, nn - 1),
            ("D2", &self.d2, nn - 1),
        ] {
            if rows.len() != grid || rows.iter().any(|r| r.len() != width) {
                return bad(&format!("{name} must be {grid}x{width}"));
            }
            if rows.iter().flatten().any(|v| !v.is_finite()) {
                return bad(&format!("{name} has non-finite entries"));
            }
        }
        if self.beta.len() != nn {
            return bad("beta needs one entry per maturity");
        }
        Ok(())
    }

    /// A bounded hedge from grid coefficients, valid on [0, x_J].
    pub fn from_quintuple(
        states: Vec<f64>,
        maturities: Vec<f64>,
        e1: Vec<Vec<f64>>,
        e2: Vec<Vec<f64>>,
        d1: Vec<Vec<f64>>,
        d2: Vec<Vec<f64>>,
        v: Vec<Vec<f64>>,
    ) -> Result<Self, CertifyError> {
        let nn = maturities.len();
        let h = HedgeStrategy {
            variant: Variant::Bounded,
            states,
            maturities,
            e1,
            e2,
            d1,
            d2,
            v,
            tail: None,
            beta: vec![0.0; nn],
            slope_bound: 0.0,
            mode: InterpolationMode::Interval,
        };
        h.validate()?;
        Ok(h)
    }

    /// Adds calls at the top strike so a bounded hedge covers the whole line
    /// for payoffs with tail slopes at most `slope_bound`.
    pub fn with_tail_calls(mut self, slope_bound: f64) -> Self {
        if self.variant == Variant::Bounded {
            self.slope_bound = slope_bound;
            self.beta = tail_calls(&self, slope_bound);
            self.mode = InterpolationMode::FullLine;
        }
        self
    }

    pub fn from_dual(sol: &LpSolution, index: &VariableIndex, states: &[f64], maturities: &[f64], slope_bound: f64) -> Self {
        let y = &sol.primal;
        let nn = index.num_maturities();
        let read = |j: usize, f: &dyn Fn(usize, usize) -> Option<usize>, width: usize| -> Vec<f64> {
            (0..width).map(|n| f(j, n).map_or(0.0, |c| y[c])).collect()
        };
        let e1 = |j: usize| read(j, &|j, n| (n + 1 < nn).then(|| index.e1(j, n)), nn);
        let e2 = |j: usize| read(j, &|j, n| (n >= 1).then(|| index.e2(j, n)), nn);
        let v = |j: usize| read(j, &|j, n| Some(index.v(j, n)), nn);
        let d1 = |j: usize| read(j, &|j, n| Some(index.d1(j, n)), nn - 1);
        let d2 = |j: usize| read(j, &|j, n| Some(index.d2(j, n)), nn - 1);
        let grid = index.grid_len();
        let tail = index.tail().map(|t| TailRow { e1: e1(t), e2: e2(t), v: v(t), d1: d1(t), d2: d2(t) });
        let h = HedgeStrategy {
            variant: index.variant,
            states: states.to_vec(),
            maturities: maturities.to_vec(),
            e1: (0..grid).map(e1).collect(),
            e2: (0..grid).map(e2).collect(),
            d1: (0..grid).map(d1).collect(),
            d2: (0..grid).map(d2).collect(),
            v: (0..grid).map(v).collect(),
            tail,
            beta: vec![0.0; nn],
            slope_bound,
            mode: InterpolationMode::FullLine,
        };
        match index.variant {
            Variant::Bounded => h.with_tail_calls(slope_bound),
            Variant::Extended => h,
        }
    }

    /// Packs the grid and tail coefficients into the hedging LP's layout.
    pub fn lp_point(&self, index: &VariableIndex) -> Vec<f64> {
        let nn = self.num_maturities();
        let mut y = vec![0.0; index.dual_len()];
        let mut put = |j: usize, e1: &[f64], e2: &[f64], v: &[f64], d1: &[f64], d2: &[f64]| {
            for n in 0..nn {
                if n + 1 < nn {
                    y[index.e1(j, n)] = e1[n];
                    y[index.d1(j, n)] = d1[n];
                    y[index.d2(j, n)] = d2[n];
                }
                if n >= 1 {
                    y[index.e2(j, n)] = e2[n];
                }
                y[index.v(j, n)] = v[n];
            }
        };
        for j in 0..self.states.len() {
            put(j, &self.e1[j], &self.e2[j], &self.v[j], &self.d1[j], &self.d2[j]);
        }
        if let (Some(t), Some(row)) = (index.tail(), &self.tail) {
            put(t, &row.e1, &row.e2, &row.v, &row.d1, &row.d2);
        }
        y
    }

    /// Initial cost against marginal rows (J+1 rows, or J+2 with the tail
    /// row holding the top-strike call prices).
    pub fn cost(&self, probs: &[Vec<f64>]) -> f64 {
        let nn = self.num_maturities();
        let grid = self.states.len();
        let mut total = 0.0;
        let mut add = |p: &[f64], e1: &[f64], e2: &[f64], v: &[f64]| {
            for n in 0..nn {
                total += p[n] * (e1[n] + e2[n]);
            }
            total += p[nn - 1] * v[nn - 1];
        };
        for j in 0..grid {
            add(&probs[j], &self.e1[j], &self.e2[j], &self.v[j]);
        }
        if let Some(tail_prices) = probs.get(grid) {
            if let Some(row) = &self.tail {
                add(tail_prices, &row.e1, &row.e2, &row.v);
            }
            total += self.beta.iter().zip(tail_prices).map(|(b, c)| b * c).sum::<f64>();
        }
        total
    }

    /// Largest coefficient magnitude, for tolerances.
    pub fn scale(&self) -> f64 {
        let m = self.v.iter().flatten().fold(0.0f64, |a, b| a.max(b.abs()));
        1.0 + m
    }

    pub fn check_price(&self, x: f64) -> Result<(), CertifyError> {
        let ok = match self.mode {
            InterpolationMode::Lattice => segment(&self.states, x).is_ok(),
            InterpolationMode::Interval => (0.0..=self.top()).contains(&x),
            InterpolationMode::FullLine => x >= 0.0 && x.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(CertifyError::ModeMismatch { mode: self.mode, price: x })
        }
    }

    fn extend(&self, col: &[f64], tail_slope: f64, x: f64) -> f64 {
        let top = self.top();
        if x <= top {
            payoff::interpolate(&self.states, col, 0.0, x)
        } else {
            col[col.len() - 1] + tail_slope * (x - top)
        }
    }

    fn tail_or(&self, pick: impl Fn(&TailRow) -> f64) -> f64 {
        self.tail.as_ref().map_or(0.0, pick)
    }

    pub fn e1_at(&self, n: usize, x: f64) -> f64 {
        self.extend(&column(&self.e1, n), self.tail_or(|t| t.e1[n]), x)
    }

    pub fn e2_at(&self, n: usize, x: f64) -> f64 {
        self.extend(&column(&self.e2, n), self.tail_or(|t| t.e2[n]), x)
    }

    pub fn v_at(&self, n: usize, x: f64) -> f64 {
        let slope = match self.variant {
            Variant::Bounded => self.slope_bound,
            Variant::Extended => self.tail_or(|t| t.v[n]),
        };
        self.extend(&column(&self.v, n), slope, x)
    }

    /// Ratio of `regime` (1 or 2) held from maturity `n` to `n+1`.
    pub fn d_at(&self, regime: u8, n: usize, x: f64) -> f64 {
        if x > self.top() {
            return self.ratio_above_top(regime, n);
        }
        let (d, w) = self.ratio_and_secant(regime, n);
        mixed_interp(&self.states, &d, &w, x)
    }

    fn ratio_and_secant(&self, regime: u8, n: usize) -> (Vec<f64>, Vec<f64>) {
        let e1 = column(&self.e1, n);
        if regime == 1 {
            (column(&self.d1, n), e1)
        } else {
            let v = column(&self.v, n);
            (column(&self.d2, n), e1.iter().zip(&v).map(|(a, b)| a - b).collect())
        }
    }

    /// Ratio held above the top strike.
    fn ratio_above_top(&self, regime: u8, n: usize) -> f64 {
        let top = self.states.len() - 1;
        let d = if regime == 1 { self.d1[top][n] } else { self.d2[top][n] };
        match &self.tail {
            Some(t) if regime == 1 => d.min(t.e1[n]),
            Some(t) => d.min(t.e1[n] - t.v[n]),
            None => d,
        }
    }

    /// Regime-1 one-step inequality at prices `x` (time n) and `y` (time n+1).
    pub fn w1(&self, n: usize, x: f64, y: f64) -> f64 {
        self.e1_at(n, x) + self.e2_at(n + 1, y) + (y - x) * self.d_at(1, n, x)
    }

    /// Regime-2 one-step inequality.
    pub fn w2(&self, n: usize, x: f64, y: f64) -> f64 {
        self.e1_at(n, x) + self.e2_at(n + 1, y) + (y - x) * self.d_at(2, n, x) - self.v_at(n, x) + self.v_at(n + 1, y)
    }
}

/// Ratio an extended hedge holds above the top strike.
pub fn tail_hedge_ratio(h: &HedgeStrategy, n: usize, regime: u8) -> Result<f64, CertifyError> {
    if h.tail.is_none() {
        return Err(CertifyError::Invalid("hedge has no tail row".into()));
    }
    if n + 1 >= h.num_maturities() || !(regime == 1 || regime == 2) {
        return Err(CertifyError::Invalid(format!("no hedge ratio for step {n}, regime {regime}")));
    }
    Ok(h.ratio_above_top(regime, n))
}

/// Positions in calls struck at x_J that cover the hedge's shortfall above the
/// top strike, given tail slopes at most `slope_bound`. Each leg gets its own
/// positive part so that legs unused on a path never hurt.
pub fn tail_calls(h: &HedgeStrategy, slope_bound: f64) -> Vec<f64> {
    let nn = h.num_maturities();
    let top = h.states.len() - 1;
    (0..nn)
        .map(|n| {
            let mut b = 0.0;
            if n >= 1 {
                let (d, w) = h.ratio_and_secant(1, n - 1);
                b += neg(inf_ratio(&h.states, &d, &w));
                let (d, w) = h.ratio_and_secant(2, n - 1);
                b += neg(inf_ratio(&h.states, &d, &w) + slope_bound);
            }
            if n + 1 < nn {
                b += h.d1[top][n].max(0.0) + (h.d2[top][n] + slope_bound).max(0.0);
            }
            b
        })
        .collect()
}
