//! Small dense linear-programming kernel.
//!
//! Problems are stated over variables that are either nonnegative or free,
//! with sparse rows of the form `Σ a_i x_i {≤,=,≥} b`. `solve` runs a
//! two-phase revised primal simplex; `check_point` and `dual_of` exist so that
//! hand-built solutions can be audited without trusting the solver.

mod simplex;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use simplex::solve;

/// Feasibility tolerance, relative to `LinearProgram::scale`, for points
/// recovered from the dual by `solve_compact`.
pub const RECOVERY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    Maximize,
    Minimize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = ">=")]
    Ge,
}

impl Relation {
    fn symbol(self) -> &'static str {
        match self {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarBound {
    NonNegative,
    Free,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub terms: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Row {
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(i, a)| a * x[i]).sum()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("row {row}: variable index {index} out of range ({vars} variables)")]
    IndexOutOfRange { row: usize, index: usize, vars: usize },
    #[error("row {row}: duplicate variable index {index}")]
    DuplicateIndex { row: usize, index: usize },
    #[error("non-finite coefficient in {0}")]
    NonFinite(String),
    #[error("numerical breakdown: pivot magnitude {pivot:e} after {iterations} iterations")]
    NumericalBreakdown { pivot: f64, iterations: usize },
    #[error("iteration limit {0} reached")]
    IterationLimit(usize),
}

/// A linear program `max/min c·x` subject to sparse rows and per-variable sign bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearProgram {
    pub sense: Sense,
    pub bounds: Vec<VarBound>,
    pub objective: Vec<f64>,
    pub rows: Vec<Row>,
}

impl LinearProgram {
    pub fn new(sense: Sense) -> Self {
        LinearProgram { sense, bounds: Vec::new(), objective: Vec::new(), rows: Vec::new() }
    }

    pub fn add_var(&mut self, bound: VarBound, cost: f64) -> usize {
        self.bounds.push(bound);
        self.objective.push(cost);
        self.bounds.len() - 1
    }

    /// Adds a row; zero coefficients are dropped and repeated indices merged.
    pub fn add_row(&mut self, terms: impl IntoIterator<Item = (usize, f64)>, relation: Relation, rhs: f64) -> usize {
        let mut merged: Vec<(usize, f64)> = Vec::new();
        for (i, a) in terms {
            if a == 0.0 {
                continue;
            }
            match merged.iter_mut().find(|(k, _)| *k == i) {
                Some(slot) => slot.1 += a,
                None => merged.push((i, a)),
            }
        }
        merged.retain(|&(_, a)| a != 0.0);
        self.rows.push(Row { terms: merged, relation, rhs });
        self.rows.len() - 1
    }

    pub fn num_vars(&self) -> usize {
        self.bounds.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn objective_at(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// `1 + max |coefficient|` over constraint matrix, objective and right-hand sides.
    pub fn scale(&self) -> f64 {
        let mut m = 0.0f64;
        for c in &self.objective {
            m = m.max(c.abs());
        }
        for r in &self.rows {
            m = m.max(r.rhs.abs());
            for &(_, a) in &r.terms {
                m = m.max(a.abs());
            }
        }
        1.0 + m
    }

    pub fn validate(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        if self.objective.len() != n {
            return Err(LpError::NonFinite("objective length".into()));
        }
        if let Some(i) = self.objective.iter().position(|c| !c.is_finite()) {
            return Err(LpError::NonFinite(format!("objective[{i}]")));
        }
        for (r, row) in self.rows.iter().enumerate() {
            if !row.rhs.is_finite() {
                return Err(LpError::NonFinite(format!("rhs of row {r}")));
            }
            let mut seen = std::collections::HashSet::new();
            for &(i, a) in &row.terms {
                if i >= n {
                    return Err(LpError::IndexOutOfRange { row: r, index: i, vars: n });
                }
                if !a.is_finite() {
                    return Err(LpError::NonFinite(format!("row {r}, variable {i}")));
                }
                if !seen.insert(i) {
                    return Err(LpError::DuplicateIndex { row: r, index: i });
                }
            }
        }
        Ok(())
    }

    /// Fixed-format text dump, one item per line:
    ///
    /// ```text
    /// sense max|min
    /// vars <count>
    /// free <i> ...            (only when free variables exist)
    /// obj <i>:<c> ...
    /// row <r> <rel> <rhs> <i>:<a> ...
    /// ```
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let sense = match self.sense {
            Sense::Maximize => "max",
            Sense::Minimize => "min",
        };
        writeln!(s, "sense {sense}").unwrap();
        writeln!(s, "vars {}", self.num_vars()).unwrap();
        let free: Vec<String> = self
            .bounds
            .iter()
            .enumerate()
            .filter(|(_, b)| **b == VarBound::Free)
            .map(|(i, _)| i.to_string())
            .collect();
        if !free.is_empty() {
            writeln!(s, "free {}", free.join(" ")).unwrap();
        }
        s.push_str("obj");
        for (i, c) in self.objective.iter().enumerate() {
            if *c != 0.0 {
                write!(s, " {i}:{c:e}").unwrap();
            }
        }
        s.push('\n');
        for (r, row) in self.rows.iter().enumerate() {
            write!(s, "row {r} {} {:e}", row.relation.symbol(), row.rhs).unwrap();
            for &(i, a) in &row.terms {
                write!(s, " {i}:{a:e}").unwrap();
            }
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Result of `solve`. `dual[r]` is the shadow price of row `r`, i.e. the
/// derivative of the optimal objective with respect to `rows[r].rhs`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: Status,
    pub objective: f64,
    pub primal: Vec<f64>,
    pub dual: Vec<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeasibilityReport {
    /// Amount by which each row is violated (0 when satisfied).
    pub row_violations: Vec<f64>,
    /// Variables below their lower bound, with the amount.
    pub bound_violations: Vec<(usize, f64)>,
    /// Inequality rows holding with equality (within tolerance).
    pub binding_rows: Vec<usize>,
    pub max_violation: f64,
    pub objective: f64,
    pub feasible: bool,
}

pub fn check_point(lp: &LinearProgram, point: &[f64], tol: f64) -> FeasibilityReport {
    assert_eq!(point.len(), lp.num_vars(), "point length must equal variable count");
    let mut row_violations = Vec::with_capacity(lp.num_rows());
    let mut binding_rows = Vec::new();
    let mut max_violation = 0.0f64;
    for (r, row) in lp.rows.iter().enumerate() {
        let lhs = row.activity(point);
        let v = match row.relation {
            Relation::Le => (lhs - row.rhs).max(0.0),
            Relation::Ge => (row.rhs - lhs).max(0.0),
            Relation::Eq => (lhs - row.rhs).abs(),
        };
        if row.relation != Relation::Eq && (lhs - row.rhs).abs() <= tol {
            binding_rows.push(r);
        }
        max_violation = max_violation.max(v);
        row_violations.push(v);
    }
    let mut bound_violations = Vec::new();
    for (i, (b, x)) in lp.bounds.iter().zip(point).enumerate() {
        if *b == VarBound::NonNegative && *x < 0.0 {
            bound_violations.push((i, -x));
            max_violation = max_violation.max(-x);
        }
    }
    FeasibilityReport {
        row_violations,
        bound_violations,
        binding_rows,
        max_violation,
        objective: lp.objective_at(point),
        feasible: max_violation <= tol,
    }
}

/// Mechanical LP dual. One dual variable per primal row, in row order.
///
/// For a maximization primal the dual minimizes `b·y`; `≤` rows get `y ≥ 0`,
/// `=` rows get free `y`, and `≥` rows get a variable standing for `−y ≥ 0`.
/// For a minimization primal the roles of `≤` and `≥` swap.
pub fn dual_of(lp: &LinearProgram) -> LinearProgram {
    let (dual_sense, flipped, col_rel) = match lp.sense {
        Sense::Maximize => (Sense::Minimize, Relation::Ge, Relation::Ge),
        Sense::Minimize => (Sense::Maximize, Relation::Le, Relation::Le),
    };
    let mut dual = LinearProgram::new(dual_sense);
    let mut sign = Vec::with_capacity(lp.num_rows());
    for row in &lp.rows {
        let (bound, s) = match row.relation {
            Relation::Eq => (VarBound::Free, 1.0),
            r if r == flipped => (VarBound::NonNegative, -1.0),
            _ => (VarBound::NonNegative, 1.0),
        };
        dual.add_var(bound, s * row.rhs);
        sign.push(s);
    }
    let mut columns: Vec<Vec<(usize, f64)>> = vec![Vec::new(); lp.num_vars()];
    for (r, row) in lp.rows.iter().enumerate() {
        for &(i, a) in &row.terms {
            columns[i].push((r, sign[r] * a));
        }
    }
    for (i, col) in columns.into_iter().enumerate() {
        let rel = match lp.bounds[i] {
            VarBound::Free => Relation::Eq,
            VarBound::NonNegative => col_rel,
        };
        dual.add_row(col, rel, lp.objective[i]);
    }
    dual
}

/// Solves `lp` or its mechanical dual, whichever has fewer rows, and returns
/// the solution in terms of `lp`. A point recovered from the dual's
/// multipliers is kept only if it is feasible for `lp` and matches the
/// dual's value; otherwise `lp` is solved directly.
pub fn solve_compact(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    if lp.num_rows() <= lp.num_vars() {
        return solve(lp);
    }
    let dual = dual_of(lp);
    let ds = solve(&dual)?;
    if ds.status != Status::Optimal {
        return solve(lp);
    }
    let primal = ds.dual.clone();
    let multipliers: Vec<f64> = lp
        .rows
        .iter()
        .zip(&ds.primal)
        .map(|(row, &y)| match (lp.sense, row.relation) {
            (Sense::Maximize, Relation::Ge) | (Sense::Minimize, Relation::Le) => -y,
            _ => y,
        })
        .collect();
    let scale = lp.scale();
    let report = check_point(lp, &primal, RECOVERY_TOL * scale);
    let objective = lp.objective_at(&primal);
    if !report.feasible || (objective - ds.objective).abs() > 1e-8 * scale * (1.0 + objective.abs()) {
        return solve(lp);
    }
    Ok(LpSolution { status: Status::Optimal, objective, primal, dual: multipliers, iterations: ds.iterations })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_bound() {
        let mut lp = LinearProgram::new(Sense::Maximize);
        let x = lp.add_var(VarBound::NonNegative, 1.0);
        lp.add_row([(x, 1.0)], Relation::Le, 3.0);
        let s = solve(&lp).unwrap();
        assert_eq!(s.status, Status::Optimal);
        assert!((s.objective - 3.0).abs() < 1e-12);
        assert!((s.dual[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_alternate_optima() {
        let mut lp = LinearProgram::new(Sense::Maximize);
        let x = lp.add_var(VarBound::NonNegative, 1.0);
        let y = lp.add_var(VarBound::NonNegative, 1.0);
        lp.add_row([(x, 1.0), (y, 1.0)], Relation::Eq, 1.0);
        let s = solve(&lp).unwrap();
        assert_eq!(s.status, Status::Optimal);
        assert!((s.objective - 1.0).abs() < 1e-12);
        assert!(check_point(&lp, &s.primal, 1e-9).feasible);
    }

    #[test]
    fn infeasible() {
        let mut lp = LinearProgram::new(Sense::Maximize);
        let x = lp.add_var(VarBound::NonNegative, 1.0);
        lp.add_row([(x, 1.0)], Relation::Ge, 1.0);
        lp.add_row([(x, 1.0)], Relation::Le, 0.0);
        assert_eq!(solve(&lp).unwrap().status, Status::Infeasible);
    }

    #[test]
    fn unbounded() {
        let mut lp = LinearProgram::new(Sense::Maximize);
        let x = lp.add_var(VarBound::NonNegative, 1.0);
        let y = lp.add_var(VarBound::NonNegative, 0.0);
        lp.add_row([(x, 1.0), (y, -1.0)], Relation::Le, 1.0);
        assert_eq!(solve(&lp).unwrap().status, Status::Unbounded);
    }

    #[test]
    fn free_variables_and_min() {
        // min |x - 2| written as min t, t >= x - 2, t >= 2 - x, x free
        let mut lp = LinearProgram::new(Sense::Minimize);
        let x = lp.add_var(VarBound::Free, 0.0);
        let t = lp.add_var(VarBound::NonNegative, 1.0);
        lp.add_row([(t, 1.0), (x, -1.0)], Relation::Ge, -2.0);
        lp.add_row([(t, 1.0), (x, 1.0)], Relation::Ge, 2.0);
        lp.add_row([(x, 1.0)], Relation::Le, -1.0);
        let s = solve(&lp).unwrap();
        assert_eq!(s.status, Status::Optimal);
        assert!((s.objective - 3.0).abs() < 1e-10);
        assert!((s.primal[x] + 1.0).abs() < 1e-10);
    }

    #[test]
    fn empty_problem_and_its_dual() {
        let lp = LinearProgram::new(Sense::Maximize);
        let d = dual_of(&lp);
        assert_eq!(d.sense, Sense::Minimize);
        assert_eq!(d.num_vars(), 0);
        assert_eq!(solve(&d).unwrap().objective, 0.0);
    }

    #[test]
    fn dual_of_dual_keeps_value() {
        let mut lp = LinearProgram::new(Sense::Maximize);
        let x = lp.add_var(VarBound::NonNegative, 3.0);
        let y = lp.add_var(VarBound::Free, 2.0);
        lp.add_row([(x, 1.0), (y, 1.0)], Relation::Le, 4.0);
        lp.add_row([(x, 1.0), (y, 3.0)], Relation::Le, 6.0);
        lp.add_row([(y, 1.0)], Relation::Ge, -1.0);
        lp.add_row([(x, 1.0), (y, -1.0)], Relation::Eq, 1.0);
        let v = solve(&lp).unwrap().objective;
        let d = solve(&dual_of(&lp)).unwrap().objective;
        let dd = solve(&dual_of(&dual_of(&lp))).unwrap().objective;
        assert!((v - d).abs() < 1e-9, "{v} vs {d}");
        assert!((v - dd).abs() < 1e-9, "{v} vs {dd}");
    }

    #[test]
    fn duplicate_terms_are_merged() {
        let mut lp = LinearProgram::new(Sense::Maximize);
        let x = lp.add_var(VarBound::NonNegative, 1.0);
        lp.add_row([(x, 1.0), (x, 1.0)], Relation::Le, 4.0);
        assert_eq!(lp.rows[0].terms, vec![(x, 2.0)]);
        assert!(lp.validate().is_ok());
    }

    #[test]
    fn text_dump_lists_every_row() {
        let mut lp = LinearProgram::new(Sense::Minimize);
        let x = lp.add_var(VarBound::Free, 1.0);
        lp.add_row([(x, 2.0)], Relation::Ge, 1.0);
        let t = lp.to_text();
        assert!(t.starts_with("sense min\nvars 1\nfree 0\n"));
        assert!(t.contains("row 0 >= 1e0 0:2e0"));
    }
}
