#![allow(dead_code)]

use num::{BigInt, BigRational, One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use robust_american::bench::black_call;
use robust_american::lpcore::{LinearProgram, Relation, Sense, VarBound};
use robust_american::market::CallSurface;
use robust_american::payoff::{AmericanPayoffGrid, LatticePayoff};

fn rat(v: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(v))
}

/// A small LP with integer data, kept alongside its floating-point twin.
pub struct IntLp {
    pub sense: Sense,
    pub free: Vec<bool>,
    pub cost: Vec<i64>,
    pub rows: Vec<(Vec<i64>, Relation, i64)>,
}

impl IntLp {
    pub fn to_lp(&self) -> LinearProgram {
        let mut lp = LinearProgram::new(self.sense);
        for (i, c) in self.cost.iter().enumerate() {
            lp.add_var(if self.free[i] { VarBound::Free } else { VarBound::NonNegative }, *c as f64);
        }
        for (a, rel, b) in &self.rows {
            lp.add_row(a.iter().enumerate().map(|(i, v)| (i, *v as f64)), *rel, *b as f64);
        }
        lp
    }
}

/// Feasible and bounded by construction: an integer interior point is planted
/// and every variable sits inside an explicit box.
pub fn random_int_lp(rng: &mut ChaCha8Rng) -> IntLp {
    let n = rng.random_range(2..=4usize);
    let m = rng.random_range(1..=4usize);
    let sense = if rng.random_bool(0.5) { Sense::Maximize } else { Sense::Minimize };
    let free: Vec<bool> = (0..n).map(|_| rng.random_bool(0.25)).collect();
    let cost: Vec<i64> = (0..n).map(|_| rng.random_range(-6..=6)).collect();
    let x0: Vec<i64> = (0..n).map(|i| if free[i] { rng.random_range(-3..=3) } else { rng.random_range(0..=3) }).collect();
    let mut rows = Vec::new();
    for _ in 0..m {
        let a: Vec<i64> = (0..n).map(|_| rng.random_range(-5..=5)).collect();
        let ax: i64 = a.iter().zip(&x0).map(|(p, q)| p * q).sum();
        let rel = match rng.random_range(0..3) {
            0 => Relation::Le,
            1 => Relation::Ge,
            _ => Relation::Eq,
        };
        let slack = rng.random_range(0..=4);
        let b = match rel {
            Relation::Le => ax + slack,
            Relation::Ge => ax - slack,
            Relation::Eq => ax,
        };
        rows.push((a, rel, b));
    }
    let ub = 8;
    for i in 0..n {
        let mut e = vec![0; n];
        e[i] = 1;
        rows.push((e.clone(), Relation::Le, ub));
        if free[i] {
            rows.push((e, Relation::Ge, -ub));
        }
    }
    IntLp { sense, free, cost, rows }
}

fn solve_square(mut a: Vec<Vec<BigRational>>, mut b: Vec<BigRational>) -> Option<Vec<BigRational>> {
    let n = b.len();
    for k in 0..n {
        let p = (k..n).find(|&i| !a[i][k].is_zero())?;
        a.swap(k, p);
        b.swap(k, p);
        let d = a[k][k].clone();
        for j in k..n {
            a[k][j] = &a[k][j] / &d;
        }
        b[k] = &b[k] / &d;
        for i in 0..n {
            if i != k && !a[i][k].is_zero() {
                let f = a[i][k].clone();
                for j in k..n {
                    let t = &f * &a[k][j];
                    a[i][j] -= t;
                }
                let t = &f * &b[k];
                b[i] -= t;
            }
        }
    }
    Some(b)
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

/// Exact optimum by enumerating every vertex of the (bounded, nonempty) feasible set.
pub fn vertex_enumeration(lp: &IntLp) -> f64 {
    let n = lp.cost.len();
    let mut hyper: Vec<(Vec<BigRational>, BigRational)> = Vec::new();
    for (a, _, b) in &lp.rows {
        hyper.push((a.iter().map(|v| rat(*v)).collect(), rat(*b)));
    }
    for i in 0..n {
        if !lp.free[i] {
            let mut e = vec![BigRational::zero(); n];
            e[i] = BigRational::one();
            hyper.push((e, BigRational::zero()));
        }
    }
    let feasible = |x: &[BigRational]| {
        for (i, xi) in x.iter().enumerate() {
            if !lp.free[i] && xi.is_negative() {
                return false;
            }
        }
        lp.rows.iter().all(|(a, rel, b)| {
            let lhs: BigRational = a.iter().zip(x).map(|(p, q)| rat(*p) * q).sum();
            let b = rat(*b);
            match rel {
                Relation::Le => lhs <= b,
                Relation::Ge => lhs >= b,
                Relation::Eq => lhs == b,
            }
        })
    };
    let mut best: Option<BigRational> = None;
    for s in subsets(hyper.len(), n) {
        let a: Vec<Vec<BigRational>> = s.iter().map(|&i| hyper[i].0.clone()).collect();
        let b: Vec<BigRational> = s.iter().map(|&i| hyper[i].1.clone()).collect();
        let Some(x) = solve_square(a, b) else { continue };
        if !feasible(&x) {
            continue;
        }
        let v: BigRational = lp.cost.iter().zip(&x).map(|(c, xi)| rat(*c) * xi).sum();
        best = Some(match (best, lp.sense) {
            (None, _) => v,
            (Some(b), Sense::Maximize) => if v > b { v } else { b },
            (Some(b), Sense::Minimize) => if v < b { v } else { b },
        });
    }
    best.expect("feasible bounded LP has a vertex").to_f64().unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Closed-form value of the three-strike example with jump probabilities `q`
/// and put-like strikes `b` (strike grid {0, 50, 100, 150}).
pub fn closed_form_three_strike(q: &[f64], b: &[f64]) -> f64 {
    let n_star = (0..b.len()).filter(|&n| b[n] - 50.0 > 2.0 * (b[0] - 100.0)).max().map(|n| n + 1).unwrap_or(0);
    let tail: f64 = q[n_star..].iter().sum();
    let head: f64 = (0..n_star).map(|n| q[n] / 2.0 * (b[n] - 50.0)).sum();
    (b[0] - 100.0) * tail + head
}

/// Convex payoff `x ↦ max(0, max_i c_i + s_i (x − z_i))` at each maturity.
#[derive(Debug, Clone)]
pub struct MaxAffine {
    pub pieces: Vec<Vec<(f64, f64, f64)>>,
}

impl MaxAffine {
    pub fn random(rng: &mut ChaCha8Rng, maturities: usize, top: f64) -> Self {
        let pieces = (0..maturities)
            .map(|_| {
                (0..rng.random_range(1..=3usize))
                    .map(|_| (rng.random_range(0.0..0.3 * top), rng.random_range(-1.5..1.5), rng.random_range(0.0..top)))
                    .collect()
            })
            .collect();
        MaxAffine { pieces }
    }

    pub fn value(&self, n: usize, x: f64) -> f64 {
        self.pieces[n].iter().map(|(c, s, z)| c + s * (x - z)).fold(0.0, f64::max)
    }

    /// Right derivative in x.
    pub fn slope(&self, n: usize, x: f64) -> f64 {
        let mut best = (0.0, 0.0);
        for (c, s, z) in &self.pieces[n] {
            let v = c + s * (x - z);
            if v > best.0 + 1e-12 || ((v - best.0).abs() <= 1e-12 && *s > best.1) {
                best = (v, *s);
            }
        }
        best.1
    }

    pub fn tail_slope(&self, n: usize) -> f64 {
        self.pieces[n].iter().map(|p| p.1).fold(0.0, f64::max)
    }

    pub fn grid(&self, states: &[f64]) -> AmericanPayoffGrid {
        let nn = self.pieces.len();
        let values = states.iter().map(|&x| (0..nn).map(|n| self.value(n, x)).collect()).collect();
        AmericanPayoffGrid::new(values, (0..nn).map(|n| self.tail_slope(n)).collect()).unwrap()
    }

    pub fn lattice(&self, maturities: &[f64]) -> LatticePayoff {
        let (a, b) = (self.clone(), self.clone());
        LatticePayoff::from_fn(maturities, move |n, x| a.value(n, x), move |n, x| b.slope(n, x))
    }
}

/// Increasing positive strikes.
pub fn random_strikes(rng: &mut ChaCha8Rng, count: usize, lo: f64, gap: f64) -> Vec<f64> {
    let mut x = lo * rng.random_range(0.5..1.5);
    (0..count)
        .map(|_| {
            let out = x;
            x += gap * rng.random_range(0.2..1.8);
            out
        })
        .collect()
}

/// Marginals on {0} ∪ strikes in convex order: a two-point law around the
/// mean, then mean-preserving spreads of random size at every maturity.
pub fn random_marginals(rng: &mut ChaCha8Rng, strikes: &[f64], maturities: usize) -> (f64, Vec<Vec<f64>>) {
    let states: Vec<f64> = std::iter::once(0.0).chain(strikes.iter().copied()).collect();
    let top = states.len() - 1;
    let j = rng.random_range(0..top);
    let s0 = states[j] + rng.random_range(0.05..0.95) * (states[j + 1] - states[j]);
    let mut p = vec![0.0; states.len()];
    let w = (s0 - states[j]) / (states[j + 1] - states[j]);
    p[j] = 1.0 - w;
    p[j + 1] = w;
    let mut cols = Vec::new();
    for _ in 0..maturities {
        for k in 1..top {
            let moved = p[k] * rng.random_range(0.0..0.9);
            let span = states[k + 1] - states[k - 1];
            p[k] -= moved;
            p[k - 1] += moved * (states[k + 1] - states[k]) / span;
            p[k + 1] += moved * (states[k] - states[k - 1]) / span;
        }
        cols.push(p.clone());
    }
    let probs = (0..states.len()).map(|k| cols.iter().map(|c| c[k]).collect()).collect();
    (s0, probs)
}

pub fn random_maturities(rng: &mut ChaCha8Rng, count: usize) -> Vec<f64> {
    let mut t = 0.0;
    (0..count)
        .map(|_| {
            t += rng.random_range(0.1..0.5);
            t
        })
        .collect()
}

/// A random weakly valid zero-tail surface (from marginals) or a strictly
/// valid lognormal surface with a positive tail, and a random convex payoff.
pub struct RandomInstance {
    pub surface: CallSurface,
    pub payoff: MaxAffine,
}

pub fn random_instance(rng: &mut ChaCha8Rng, max_strikes: usize, max_maturities: usize) -> RandomInstance {
    let count = rng.random_range(2..=max_strikes);
    let nn = rng.random_range(1..=max_maturities);
    let mats = random_maturities(rng, nn);
    let surface = if rng.random_bool(0.5) {
        let strikes = random_strikes(rng, count, 20.0, 20.0);
        let (s0, probs) = random_marginals(rng, &strikes, nn);
        let states = std::iter::once(0.0).chain(strikes).collect();
        CallSurface::from_marginals(states, mats, probs, Some(s0)).unwrap()
    } else {
        let strikes = random_strikes(rng, count, 60.0, 80.0 / count as f64);
        let vol = rng.random_range(0.1..0.6);
        let calls = strikes.iter().map(|&k| mats.iter().map(|&t| black_call(100.0, k, vol, t)).collect()).collect();
        CallSurface::new(100.0, strikes, mats, calls).unwrap()
    };
    let top = *surface.strikes().last().unwrap();
    let payoff = MaxAffine::random(rng, nn, top);
    RandomInstance { surface, payoff }
}
