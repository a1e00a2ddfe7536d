//! The pricing and hedging linear programs and the headline bound.

mod index;


use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::certify::{CertifyError, HedgeStrategy, RegimeModel};
use crate::lpcore::{self, LinearProgram, LpError, LpSolution, Relation, Sense, Status, VarBound};
use crate::market::{self, CallSurface, ExtendedMarginalSystem, MarginalSystem, MarketError};
use crate::payoff::AmericanPayoffGrid;

pub use index::{DualVar, PrimalVar, VariableIndex};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Bounded,
    Extended,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum VariantChoice {
    #[default]
    Auto,
    Bounded,
    Extended,
}

#[derive(Debug, Error)]
pub enum BoundError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error(transparent)]
    Solver(#[from] LpError),
    #[error("{which} LP ended {status:?}")]
    NotOptimal { which: &'static str, status: Status },
    #[error("duality gap {gap:e} exceeds tolerance {tol:e} (phi = {phi}, psi = {psi})")]
    GapExceeded { phi: f64, psi: f64, gap: f64, tol: f64 },
    #[error("the bounded variant needs a surface with zero tail (c_J,N = {0})")]
    NeedsZeroTail(f64),
    #[error(transparent)]
    Certificate(#[from] CertifyError),
}

fn check_dims(states: usize, maturities: usize, probs: &[Vec<f64>], a: &AmericanPayoffGrid) -> Result<(), BoundError> {
    if probs.iter().any(|r| r.len() != maturities) {
        return Err(BoundError::Dimension("marginal rows must have one entry per maturity".into()));
    }
    if a.num_states() != states || a.num_maturities() != maturities {
        return Err(BoundError::Dimension(format!(
            "payoff grid is {}x{}, marginals are {states}x{maturities}",
            a.num_states(),
            a.num_maturities()
        )));
    }
    Ok(())
}

/// Pricing LP. `probs` has one row per LP state (J+1, or J+2 with the tail row).
fn primal(states: &[f64], probs: &[Vec<f64>], a: &AmericanPayoffGrid, variant: Variant) -> (LinearProgram, VariableIndex) {
    let nn = probs[0].len();
    let ix = VariableIndex::new(variant, states.len(), nn);
    let grid = ix.grid_len();
    let mm = ix.len_states();
    let mut lp = LinearProgram::new(Sense::Maximize);
    for _ in 0..ix.primal_len() {
        lp.add_var(VarBound::NonNegative, 0.0);
    }
    for j in 0..mm {
        for n in 0..nn {
            lp.objective[ix.f(j, n)] = if j < grid { a.values[j][n] } else { a.tail_slopes[n] };
        }
    }
    // rows in the grid only see grid neighbours; the tail row sees everything
    let range = |j: usize| if j < grid { 0..grid } else { 0..mm };

    for n in 0..nn.saturating_sub(1) {
        for j in 0..mm {
            let terms = range(j).flat_map(|k| [(ix.g(1, j, k, n), 1.0), (ix.g(2, j, k, n), 1.0)]);
            lp.add_row(terms.collect::<Vec<_>>(), Relation::Eq, probs[j][n]);
        }
    }
    for n in 1..nn {
        for j in 0..mm {
            let terms = range(j).flat_map(|i| [(ix.g(1, i, j, n - 1), 1.0), (ix.g(2, i, j, n - 1), 1.0)]);
            lp.add_row(terms.collect::<Vec<_>>(), Relation::Eq, probs[j][n]);
        }
    }
    for n in 0..nn.saturating_sub(1) {
        for delta in [1u8, 2] {
            for j in 0..grid {
                let mut terms: Vec<(usize, f64)> = (0..grid).map(|k| (ix.g(delta, j, k, n), states[k] - states[j])).collect();
                if let Some(t) = ix.tail() {
                    terms.push((ix.g(delta, j, t, n), 1.0));
                }
                lp.add_row(terms, Relation::Eq, 0.0);
            }
            if let Some(t) = ix.tail() {
                let terms: Vec<(usize, f64)> = (0..grid).map(|k| (ix.g(delta, t, k, n), -1.0)).collect();
                lp.add_row(terms, Relation::Eq, 0.0);
            }
        }
    }
    for j in 0..mm {
        for n in 0..nn {
            let mut terms = vec![(ix.f(j, n), 1.0)];
            if n + 1 < nn {
                terms.extend(range(j).map(|k| (ix.g(2, j, k, n), -1.0)));
            }
            if n > 0 {
                terms.extend(range(j).map(|i| (ix.g(2, i, j, n - 1), 1.0)));
            }
            let rhs = if n + 1 == nn { probs[j][n] } else { 0.0 };
            lp.add_row(terms, Relation::Le, rhs);
        }
    }
    (lp, ix)
}

/// Hedging LP, written as the exact dual of `primal`.
fn dual(states: &[f64], probs: &[Vec<f64>], a: &AmericanPayoffGrid, variant: Variant) -> (LinearProgram, VariableIndex) {
    let nn = probs[0].len();
    let ix = VariableIndex::new(variant, states.len(), nn);
    let grid = ix.grid_len();
    let mm = ix.len_states();
    let mut lp = LinearProgram::new(Sense::Minimize);
    for c in 0..ix.dual_len() {
        let bound = match ix.dual_name(c) {
            DualVar::V { .. } => VarBound::NonNegative,
            _ => VarBound::Free,
        };
        let cost = match ix.dual_name(c) {
            DualVar::E1 { j, n } | DualVar::E2 { j, n } => probs[j][n],
            DualVar::V { j, n } if n + 1 == nn => probs[j][n],
            _ => 0.0,
        };
        lp.add_var(bound, cost);
    }
    for j in 0..mm {
        for n in 0..nn {
            let floor = if j < grid { a.values[j][n] } else { a.tail_slopes[n] };
            lp.add_row([(ix.v(j, n), 1.0)], Relation::Ge, floor);
        }
    }
    for n in 0..nn.saturating_sub(1) {
        for j in 0..grid {
            for k in 0..grid {
                let dx = states[k] - states[j];
                lp.add_row([(ix.e1(j, n), 1.0), (ix.e2(k, n + 1), 1.0), (ix.d1(j, n), dx)], Relation::Ge, 0.0);
                lp.add_row(
                    [(ix.e1(j, n), 1.0), (ix.e2(k, n + 1), 1.0), (ix.d2(j, n), dx), (ix.v(j, n), -1.0), (ix.v(k, n + 1), 1.0)],
                    Relation::Ge,
                    0.0,
                );
            }
        }
        if let Some(t) = ix.tail() {
            lp.add_row([(ix.e1(t, n), 1.0), (ix.d1(t, n), -1.0)], Relation::Ge, 0.0);
            lp.add_row([(ix.e1(t, n), 1.0), (ix.d2(t, n), -1.0), (ix.v(t, n), -1.0)], Relation::Ge, 0.0);
            for j in 0..grid {
                lp.add_row([(ix.e2(t, n + 1), 1.0), (ix.d1(j, n), 1.0)], Relation::Ge, 0.0);
                lp.add_row([(ix.e2(t, n + 1), 1.0), (ix.d2(j, n), 1.0), (ix.v(t, n + 1), 1.0)], Relation::Ge, 0.0);
            }
            lp.add_row([(ix.e1(t, n), 1.0), (ix.e2(t, n + 1), 1.0)], Relation::Ge, 0.0);
            lp.add_row(
                [(ix.e1(t, n), 1.0), (ix.e2(t, n + 1), 1.0), (ix.v(t, n), -1.0), (ix.v(t, n + 1), 1.0)],
                Relation::Ge,
                0.0,
            );
        }
    }
    (lp, ix)
}

pub fn build_primal_bounded(m: &MarginalSystem, a: &AmericanPayoffGrid) -> Result<(LinearProgram, VariableIndex), BoundError> {
    check_dims(m.states.len(), m.num_maturities(), &m.probs, a)?;
    Ok(primal(&m.states, &m.probs, a, Variant::Bounded))
}

pub fn build_dual_bounded(m: &MarginalSystem, a: &AmericanPayoffGrid) -> Result<(LinearProgram, VariableIndex), BoundError> {
    check_dims(m.states.len(), m.num_maturities(), &m.probs, a)?;
    Ok(dual(&m.states, &m.probs, a, Variant::Bounded))
}

pub fn build_primal_extended(m: &ExtendedMarginalSystem, a: &AmericanPayoffGrid) -> Result<(LinearProgram, VariableIndex), BoundError> {
    check_dims(m.states.len(), m.num_maturities(), &m.probs, a)?;
    Ok(primal(&m.states, &m.probs, a, Variant::Extended))
}

pub fn build_dual_extended(m: &ExtendedMarginalSystem, a: &AmericanPayoffGrid) -> Result<(LinearProgram, VariableIndex), BoundError> {
    check_dims(m.states.len(), m.num_maturities(), &m.probs, a)?;
    Ok(dual(&m.states, &m.probs, a, Variant::Extended))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Diagnostics {
    pub primal_rows: usize,
    pub primal_columns: usize,
    pub dual_rows: usize,
    pub dual_columns: usize,
    pub primal_iterations: usize,
    pub dual_iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap_tolerance: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundResult {
    pub variant: Variant,
    pub phi: f64,
    pub psi: f64,
    pub gap: f64,
    pub model: RegimeModel,
    pub hedge: HedgeStrategy,
    pub diagnostics: Diagnostics,
}

/// The LP pair for one instance, already solved.
#[derive(Debug, Clone)]
pub struct SolvedPair {
    pub variant: Variant,
    pub primal: LinearProgram,
    pub dual: LinearProgram,
    pub index: VariableIndex,
    pub primal_solution: LpSolution,
    pub dual_solution: LpSolution,
}

/// Solves both LPs for marginal rows `probs` (J+1 rows, or J+2 for `Extended`).
pub fn solve_pair(states: &[f64], probs: &[Vec<f64>], a: &AmericanPayoffGrid, variant: Variant) -> Result<SolvedPair, BoundError> {
    let grid = match variant {
        Variant::Bounded => probs.len(),
        Variant::Extended => probs.len() - 1,
    };
    if grid != states.len() {
        return Err(BoundError::Dimension(format!("{} marginal rows for {} states", probs.len(), states.len())));
    }
    check_dims(states.len(), probs[0].len(), probs, a)?;
    let (p, index) = primal(states, probs, a, variant);
    let (d, _) = dual(states, probs, a, variant);
    let (ps, ds) = rayon::join(|| lpcore::solve_compact(&p), || lpcore::solve_compact(&d));
    let (ps, ds) = (ps?, ds?);
    if ps.status != Status::Optimal {
        return Err(BoundError::NotOptimal { which: "pricing", status: ps.status });
    }
    if ds.status != Status::Optimal {
        return Err(BoundError::NotOptimal { which: "hedging", status: ds.status });
    }
    Ok(SolvedPair { variant, primal: p, dual: d, index, primal_solution: ps, dual_solution: ds })
}

pub fn default_gap_tolerance(phi: f64) -> f64 {
    1e-6 * (1.0 + phi.abs())
}

/// Options for `robust_bound`; `gap_tol` overrides `1e-6·(1+|Φ|)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct BoundOptions {
    pub variant: VariantChoice,
    pub gap_tol: Option<f64>,
    pub zero_tail_tol: Option<f64>,
}

pub fn robust_bound(surface: &CallSurface, payoff: &AmericanPayoffGrid, opts: BoundOptions) -> Result<BoundResult, BoundError> {
    let tail_tol = opts.zero_tail_tol.unwrap_or(market::DEFAULT_TOL);
    let zero_tail = surface.is_zero_tail(tail_tol);
    let variant = match opts.variant {
        VariantChoice::Auto if zero_tail => Variant::Bounded,
        VariantChoice::Auto => Variant::Extended,
        VariantChoice::Bounded if !zero_tail => {
            return Err(BoundError::NeedsZeroTail(surface.price(surface.top(), surface.num_maturities() - 1)))
        }
        VariantChoice::Bounded => Variant::Bounded,
        VariantChoice::Extended => Variant::Extended,
    };
    let probs = match variant {
        Variant::Bounded => market::implied_marginals(surface)?.probs,
        Variant::Extended => market::extended_marginals(surface)?.probs,
    };
    let states = surface.states();
    let pair = solve_pair(&states, &probs, payoff, variant)?;
    assemble(&pair, surface.s0(), &states, surface.maturities(), &probs, payoff, opts.gap_tol)
}

/// Bound for an instance given directly by its marginals (bounded variant).
pub fn robust_bound_marginals(m: &MarginalSystem, payoff: &AmericanPayoffGrid, gap_tol: Option<f64>) -> Result<BoundResult, BoundError> {
    let pair = solve_pair(&m.states, &m.probs, payoff, Variant::Bounded)?;
    assemble(&pair, m.s0, &m.states, &m.maturities, &m.probs, payoff, gap_tol)
}

fn assemble(
    pair: &SolvedPair,
    s0: f64,
    states: &[f64],
    maturities: &[f64],
    probs: &[Vec<f64>],
    payoff: &AmericanPayoffGrid,
    gap_tol: Option<f64>,
) -> Result<BoundResult, BoundError> {
    let phi = pair.primal_solution.objective;
    let psi = pair.dual_solution.objective;
    let gap = (phi - psi).abs();
    let tol = gap_tol.unwrap_or_else(|| default_gap_tolerance(phi));
    if gap > tol {
        return Err(BoundError::GapExceeded { phi, psi, gap, tol });
    }
    let model = RegimeModel::from_primal(&pair.primal_solution, &pair.index, s0, states, maturities, probs)?;
    let hedge = HedgeStrategy::from_dual(&pair.dual_solution, &pair.index, states, maturities, payoff.slope_bound);
    let diagnostics = Diagnostics {
        primal_rows: pair.primal.num_rows(),
        primal_columns: pair.primal.num_vars(),
        dual_rows: pair.dual.num_rows(),
        dual_columns: pair.dual.num_vars(),
        primal_iterations: pair.primal_solution.iterations,
        dual_iterations: pair.dual_solution.iterations,
        primal_residual: lpcore::check_point(&pair.primal, &pair.primal_solution.primal, 0.0).max_violation,
        dual_residual: lpcore::check_point(&pair.dual, &pair.dual_solution.primal, 0.0).max_violation,
        gap_tolerance: tol,
    };
    Ok(BoundResult { variant: pair.variant, phi, psi, gap, model, hedge, diagnostics })
}
