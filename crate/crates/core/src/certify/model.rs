use serde::{Deserialize, Serialize};

use super::CertifyError;
use crate::bound::{Variant, VariableIndex};
use crate::lpcore::{self, LinearProgram, LpSolution, Relation, Sense, Status, VarBound};
use crate::market::MarginalSystem;
use crate::payoff::AmericanPayoffGrid;

/// Two-regime martingale model. Regime 1 has not exercised yet, regime 2 has.
/// `g1[n][j][k]` is the mass moving from state j at maturity n to state k at
/// maturity n+1 in regime 1; `f[j][n]` is the mass exercising at node (j, n).
/// In the extended variant the last state is the tail state, carrying masses
/// scaled by the distance to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeModel {
    pub variant: Variant,
    pub s0: f64,
    pub states: Vec<f64>,
    pub maturities: Vec<f64>,
    pub marginals: Vec<Vec<f64>>,
    #[serde(rename = "F")]
    pub f: Vec<Vec<f64>>,
    #[serde(rename = "G1")]
    pub g1: Vec<Vec<Vec<f64>>>,
    #[serde(rename = "G2")]
    pub g2: Vec<Vec<Vec<f64>>>,
    /// Probability of switching regime on arrival at (j, n) in regime 1.
    pub q: Vec<Vec<f64>>,
}

/// Residuals of the model constraints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub marginal_residual: f64,
    pub martingale_residual: f64,
    pub exercise_residual: f64,
    pub negative_mass: f64,
    /// Largest |F - switching mass| over nodes with positive payoff.
    pub switch_mismatch: Option<f64>,
}

impl ModelReport {
    pub fn within(&self, tol: f64, scale: f64) -> bool {
        self.marginal_residual <= tol
            && self.martingale_residual <= tol * scale
            && self.exercise_residual <= tol
            && self.negative_mass <= tol
            && self.switch_mismatch.is_none_or(|m| m <= 1e3 * tol)
    }
}

impl RegimeModel {
    pub fn num_maturities(&self) -> usize {
        self.maturities.len()
    }

    pub fn grid_len(&self) -> usize {
        self.states.len()
    }

    pub fn len_states(&self) -> usize {
        self.marginals.len()
    }

    fn range(&self, j: usize) -> std::ops::Range<usize> {
        if j < self.grid_len() {
            0..self.grid_len()
        } else {
            0..self.len_states()
        }
    }

    pub fn from_parts(
        variant: Variant,
        s0: f64,
        states: Vec<f64>,
        maturities: Vec<f64>,
        marginals: Vec<Vec<f64>>,
        f: Vec<Vec<f64>>,
        g1: Vec<Vec<Vec<f64>>>,
        g2: Vec<Vec<Vec<f64>>>,
    ) -> Self {
        let mut m = RegimeModel { variant, s0, states, maturities, marginals, f, g1, g2, q: Vec::new() };
        m.q = (0..m.grid_len()).map(|j| (0..m.num_maturities()).map(|n| m.switch_probability(j, n)).collect()).collect();
        m
    }

    pub fn from_primal(
        sol: &LpSolution,
        index: &VariableIndex,
        s0: f64,
        states: &[f64],
        maturities: &[f64],
        marginals: &[Vec<f64>],
    ) -> Result<Self, CertifyError> {
        let mm = index.len_states();
        let nn = index.num_maturities();
        let x = &sol.primal;
        let f = (0..mm).map(|j| (0..nn).map(|n| x[index.f(j, n)]).collect()).collect();
        let g = |r: u8| -> Vec<Vec<Vec<f64>>> {
            (0..nn.saturating_sub(1))
                .map(|n| (0..mm).map(|j| (0..mm).map(|k| x[index.g(r, j, k, n)]).collect()).collect())
                .collect()
        };
        let model = RegimeModel::from_parts(
            index.variant,
            s0,
            states.to_vec(),
            maturities.to_vec(),
            marginals.to_vec(),
            f,
            g(1),
            g(2),
        );
        let rep = model.check(None);
        let scale = states.last().copied().unwrap_or(1.0).max(1.0);
        if !rep.within(1e-7, scale) {
            return Err(CertifyError::InconsistentModel(format!("{rep:?}")));
        }
        Ok(model)
    }

    /// Regime-1 mass arriving at (j, n).
    pub fn arrivals(&self, j: usize, n: usize) -> f64 {
        if n == 0 {
            self.marginals[j][0]
        } else {
            let g = &self.g1[n - 1];
            self.range(j).map(|i| g[i][j]).sum()
        }
    }

    /// Regime-1 mass leaving (j, n) without switching.
    pub fn continuing(&self, j: usize, n: usize) -> f64 {
        if n + 1 == self.num_maturities() {
            0.0
        } else {
            self.range(j).map(|k| self.g1[n][j][k]).sum()
        }
    }

    /// Mass switching regime at (j, n).
    pub fn switch_mass(&self, j: usize, n: usize) -> f64 {
        self.arrivals(j, n) - self.continuing(j, n)
    }

    fn switch_probability(&self, j: usize, n: usize) -> f64 {
        let arr = self.arrivals(j, n);
        if arr <= 1e-12 {
            0.0
        } else {
            (self.switch_mass(j, n) / arr).clamp(0.0, 1.0)
        }
    }

    /// Packs the model into the pricing LP's column layout.
    pub fn lp_point(&self, index: &VariableIndex) -> Vec<f64> {
        let mut x = vec![0.0; index.primal_len()];
        for (j, row) in self.f.iter().enumerate() {
            for (n, v) in row.iter().enumerate() {
                x[index.f(j, n)] = *v;
            }
        }
        for (r, g) in [(1u8, &self.g1), (2, &self.g2)] {
            for (n, block) in g.iter().enumerate() {
                for (j, row) in block.iter().enumerate() {
                    for (k, v) in row.iter().enumerate() {
                        x[index.g(r, j, k, n)] = *v;
                    }
                }
            }
        }
        x
    }

    /// Objective of the pricing LP at this model.
    pub fn value(&self, a: &AmericanPayoffGrid) -> f64 {
        let mut total = 0.0;
        for (j, row) in self.f.iter().enumerate() {
            for (n, v) in row.iter().enumerate() {
                total += v * if j < self.grid_len() { a.values[j][n] } else { a.tail_slopes[n] };
            }
        }
        total
    }

    pub fn check(&self, payoff: Option<&AmericanPayoffGrid>) -> ModelReport {
        let nn = self.num_maturities();
        let mm = self.len_states();
        let grid = self.grid_len();
        let mut marg: f64 = 0.0;
        let mut mart: f64 = 0.0;
        let mut exer: f64 = 0.0;
        let mut neg: f64 = 0.0;
        for v in self.f.iter().flatten().chain(self.g1.iter().flatten().flatten()).chain(self.g2.iter().flatten().flatten()) {
            neg = neg.max(-v);
        }
        for n in 0..nn.saturating_sub(1) {
            for j in 0..mm {
                let out: f64 = self.range(j).map(|k| self.g1[n][j][k] + self.g2[n][j][k]).sum();
                let inn: f64 = self.range(j).map(|i| self.g1[n][i][j] + self.g2[n][i][j]).sum();
                marg = marg.max((out - self.marginals[j][n]).abs());
                marg = marg.max((inn - self.marginals[j][n + 1]).abs());
            }
            for g in [&self.g1[n], &self.g2[n]] {
                for j in 0..grid {
                    let mut drift: f64 = (0..grid).map(|k| (self.states[k] - self.states[j]) * g[j][k]).sum();
                    if mm > grid {
                        drift += g[j][grid];
                    }
                    mart = mart.max(drift.abs());
                }
                if mm > grid {
                    let tail: f64 = (0..grid).map(|k| g[grid][k]).sum();
                    mart = mart.max(tail.abs());
                }
            }
        }
        for j in 0..mm {
            for n in 0..nn {
                let mut lhs = self.f[j][n];
                if n + 1 < nn {
                    lhs -= self.range(j).map(|k| self.g2[n][j][k]).sum::<f64>();
                }
                if n > 0 {
                    lhs += self.range(j).map(|i| self.g2[n - 1][i][j]).sum::<f64>();
                }
                let rhs = if n + 1 == nn { self.marginals[j][n] } else { 0.0 };
                exer = exer.max(lhs - rhs);
            }
        }
        let switch_mismatch = payoff.map(|a| {
            let mut worst: f64 = 0.0;
            for j in 0..grid {
                for n in 0..nn {
                    if a.values[j][n] > 0.0 {
                        worst = worst.max((self.f[j][n] - self.switch_mass(j, n)).abs());
                    }
                }
            }
            worst
        });
        ModelReport {
            marginal_residual: marg,
            martingale_residual: mart,
            exercise_residual: exer.max(0.0),
            negative_mass: neg.max(0.0),
            switch_mismatch,
        }
    }

    /// Largest |g[j][J]| over regimes and steps for `j < J`.
    pub fn top_leakage(&self) -> f64 {
        let top = self.grid_len() - 1;
        let mut worst: f64 = 0.0;
        for g in self.g1.iter().chain(&self.g2) {
            for k in 0..top {
                worst = worst.max(g[top][k].abs());
            }
        }
        worst
    }
}

/// A feasible (not optimal) model: exercise everything at the first maturity
/// and couple consecutive marginals by any martingale transport.
pub fn seed_model(m: &MarginalSystem) -> Result<RegimeModel, CertifyError> {
    let nn = m.num_maturities();
    let grid = m.states.len();
    let mut g2 = Vec::with_capacity(nn.saturating_sub(1));
    for n in 0..nn.saturating_sub(1) {
        let mut lp = LinearProgram::new(Sense::Maximize);
        for _ in 0..grid * grid {
            lp.add_var(VarBound::NonNegative, 0.0);
        }
        for j in 0..grid {
            lp.add_row((0..grid).map(|k| (j * grid + k, 1.0)).collect::<Vec<_>>(), Relation::Eq, m.probs[j][n]);
            lp.add_row((0..grid).map(|i| (i * grid + j, 1.0)).collect::<Vec<_>>(), Relation::Eq, m.probs[j][n + 1]);
            lp.add_row(
                (0..grid).map(|k| (j * grid + k, m.states[k] - m.states[j])).collect::<Vec<_>>(),
                Relation::Eq,
                0.0,
            );
        }
        let sol = lpcore::solve(&lp)?;
        if sol.status != Status::Optimal {
            return Err(CertifyError::NoTransport(n + 1));
        }
        g2.push((0..grid).map(|j| sol.primal[j * grid..(j + 1) * grid].to_vec()).collect());
    }
    let g1 = vec![vec![vec![0.0; grid]; grid]; nn.saturating_sub(1)];
    let f = (0..grid).map(|j| (0..nn).map(|n| if n == 0 { m.probs[j][0] } else { 0.0 }).collect()).collect();
    Ok(RegimeModel::from_parts(
        Variant::Bounded,
        m.s0,
        m.states.clone(),
        m.maturities.clone(),
        m.probs.clone(),
        f,
        g1,
        g2,
    ))
}
