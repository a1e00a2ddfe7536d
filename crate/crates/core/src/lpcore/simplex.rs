use super::{LinearProgram, LpError, LpSolution, Relation, Sense, Status, VarBound};

const PIVOT_TOL: f64 = 1e-9;
const BREAKDOWN_TOL: f64 = 1e-11;
const FEAS_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 100;

#[derive(Clone, Copy, PartialEq, Eq)]
enum ColKind {
    Structural { var: usize, negated: bool },
    Slack,
    Artificial,
}

/// Internal standard form: `min c·z, A z = b, z ≥ 0, b ≥ 0`.
struct Standard {
    m: usize,
    cols: Vec<Vec<(usize, f64)>>,
    kinds: Vec<ColKind>,
    cost: Vec<f64>,
    b: Vec<f64>,
    /// Original row r was multiplied by `row_factor[r]` (sign flip and scaling).
    row_factor: Vec<f64>,
}

impl Standard {
    fn build(lp: &LinearProgram) -> (Standard, Vec<Option<usize>>) {
        let m = lp.num_rows();
        let flip_obj = if lp.sense == Sense::Maximize { -1.0 } else { 1.0 };
        let mut cols: Vec<Vec<(usize, f64)>> = Vec::new();
        let mut kinds = Vec::new();
        let mut cost = Vec::new();
        let mut row_factor = vec![1.0; m];
        let mut b = vec![0.0; m];
        let mut relation = vec![Relation::Eq; m];

        for (r, row) in lp.rows.iter().enumerate() {
            let s = row.terms.iter().fold(0.0f64, |acc, &(_, a)| acc.max(a.abs()));
            let s = if s > 0.0 { s } else { 1.0 };
            let mut f = 1.0 / s;
            let mut rel = row.relation;
            if row.rhs * f < 0.0 {
                f = -f;
                rel = match rel {
                    Relation::Le => Relation::Ge,
                    Relation::Ge => Relation::Le,
                    Relation::Eq => Relation::Eq,
                };
            }
            row_factor[r] = f;
            b[r] = row.rhs * f;
            relation[r] = rel;
        }

        let mut by_var: Vec<Vec<(usize, f64)>> = vec![Vec::new(); lp.num_vars()];
        for (r, row) in lp.rows.iter().enumerate() {
            for &(i, a) in &row.terms {
                by_var[i].push((r, a * row_factor[r]));
            }
        }
        for (i, col) in by_var.into_iter().enumerate() {
            let c = flip_obj * lp.objective[i];
            if lp.bounds[i] == VarBound::Free {
                cols.push(col.iter().map(|&(r, a)| (r, -a)).collect());
                kinds.push(ColKind::Structural { var: i, negated: true });
                cost.push(-c);
            }
            cols.push(col);
            kinds.push(ColKind::Structural { var: i, negated: false });
            cost.push(c);
        }

        // Starting basis: a +1 slack where available, otherwise an artificial.
        let mut start = vec![None; m];
        for r in 0..m {
            match relation[r] {
                Relation::Le => {
                    cols.push(vec![(r, 1.0)]);
                    kinds.push(ColKind::Slack);
                    cost.push(0.0);
                    start[r] = Some(cols.len() - 1);
                }
                Relation::Ge => {
                    cols.push(vec![(r, -1.0)]);
                    kinds.push(ColKind::Slack);
                    cost.push(0.0);
                }
                Relation::Eq => {}
            }
        }
        for r in 0..m {
            if start[r].is_none() {
                cols.push(vec![(r, 1.0)]);
                kinds.push(ColKind::Artificial);
                cost.push(0.0);
                start[r] = Some(cols.len() - 1);
            }
        }
        (Standard { m, cols, kinds, cost, b, row_factor }, start)
    }
}

struct Tableau<'a> {
    sf: &'a Standard,
    basis: Vec<usize>,
    in_basis: Vec<Option<usize>>,
    binv: Vec<f64>,
    xb: Vec<f64>,
    iterations: usize,
    since_refactor: usize,
}

enum Outcome {
    Optimal,
    Unbounded,
}

impl<'a> Tableau<'a> {
    fn new(sf: &'a Standard, start: Vec<Option<usize>>) -> Self {
        let m = sf.m;
        let basis: Vec<usize> = start.into_iter().map(|c| c.unwrap()).collect();
        let mut in_basis = vec![None; sf.cols.len()];
        for (r, &c) in basis.iter().enumerate() {
            in_basis[c] = Some(r);
        }
        let mut binv = vec![0.0; m * m];
        for r in 0..m {
            binv[r * m + r] = 1.0;
        }
        Tableau { sf, basis, in_basis, binv, xb: sf.b.clone(), iterations: 0, since_refactor: 0 }
    }

    fn col_dot(&self, y: &[f64], j: usize) -> f64 {
        self.sf.cols[j].iter().map(|&(r, a)| y[r] * a).sum()
    }

    fn ftran(&self, j: usize) -> Vec<f64> {
        let m = self.sf.m;
        let mut alpha = vec![0.0; m];
        for &(r, a) in &self.sf.cols[j] {
            for i in 0..m {
                let v = self.binv[i * m + r];
                if v != 0.0 {
                    alpha[i] += v * a;
                }
            }
        }
        alpha
    }

    fn duals(&self, cost: &[f64]) -> Vec<f64> {
        let m = self.sf.m;
        let mut y = vec![0.0; m];
        for (i, &c) in self.basis.iter().enumerate() {
            let cb = cost[c];
            if cb == 0.0 {
                continue;
            }
            let row = &self.binv[i * m..(i + 1) * m];
            for (yk, &v) in y.iter_mut().zip(row) {
                *yk += cb * v;
            }
        }
        y
    }

    fn pivot(&mut self, r: usize, q: usize, alpha: &[f64]) {
        let m = self.sf.m;
        let piv = alpha[r];
        let row_start = r * m;
        for k in 0..m {
            self.binv[row_start + k] /= piv;
        }
        let nz: Vec<usize> = (0..m).filter(|&k| self.binv[row_start + k] != 0.0).collect();
        let pivot_row: Vec<f64> = nz.iter().map(|&k| self.binv[row_start + k]).collect();
        for i in 0..m {
            if i == r || alpha[i] == 0.0 {
                continue;
            }
            let f = alpha[i];
            let base = i * m;
            for (&k, &v) in nz.iter().zip(&pivot_row) {
                self.binv[base + k] -= f * v;
            }
        }
        let leaving = self.basis[r];
        self.in_basis[leaving] = None;
        self.basis[r] = q;
        self.in_basis[q] = Some(r);
        self.iterations += 1;
        self.since_refactor += 1;
    }

    /// Rebuilds the basis inverse. Basic columns with a single nonzero are
    /// eliminated directly; the remaining square block is inverted by
    /// Gauss-Jordan elimination with partial pivoting.
    fn refactor(&mut self) -> Result<(), LpError> {
        let m = self.sf.m;
        let mut row_owner: Vec<Option<usize>> = vec![None; m];
        let mut singleton = vec![false; m];
        for (pos, &c) in self.basis.iter().enumerate() {
            if let [(r, v)] = self.sf.cols[c][..] {
                if row_owner[r].is_none() && v.abs() >= BREAKDOWN_TOL {
                    row_owner[r] = Some(pos);
                    singleton[pos] = true;
                }
            }
        }
        let core_rows: Vec<usize> = (0..m).filter(|&r| row_owner[r].is_none()).collect();
        let core_pos: Vec<usize> = (0..m).filter(|&p| !singleton[p]).collect();
        let k = core_rows.len();
        if k != core_pos.len() {
            return Err(LpError::NumericalBreakdown { pivot: 0.0, iterations: self.iterations });
        }
        let mut row_slot = vec![usize::MAX; m];
        for (a, &r) in core_rows.iter().enumerate() {
            row_slot[r] = a;
        }
        let mut core = vec![0.0; k * k];
        for (a, &pos) in core_pos.iter().enumerate() {
            for &(r, v) in &self.sf.cols[self.basis[pos]] {
                if row_slot[r] != usize::MAX {
                    core[row_slot[r] * k + a] = v;
                }
            }
        }
        let core_inv = invert_dense(core, k).map_err(|pivot| LpError::NumericalBreakdown { pivot, iterations: self.iterations })?;

        let mut binv = vec![0.0; m * m];
        for (a, &pos) in core_pos.iter().enumerate() {
            let src = &core_inv[a * k..(a + 1) * k];
            let dst = &mut binv[pos * m..(pos + 1) * m];
            for (b, &r) in core_rows.iter().enumerate() {
                dst[r] = src[b];
            }
        }
        // Singleton at row r with entry d: its position row is e_r/d minus
        // (1/d)·Σ_a B[r][core a]·(core inverse row a) on the core rows.
        let mut coupling: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
        for (a, &pos) in core_pos.iter().enumerate() {
            for &(r, v) in &self.sf.cols[self.basis[pos]] {
                if row_slot[r] == usize::MAX {
                    coupling[r].push((a, v));
                }
            }
        }
        for r in 0..m {
            let Some(pos) = row_owner[r] else { continue };
            let d = self.sf.cols[self.basis[pos]][0].1;
            let dst = &mut binv[pos * m..(pos + 1) * m];
            dst[r] = 1.0 / d;
            for &(a, v) in &coupling[r] {
                let f = v / d;
                let src = &core_inv[a * k..(a + 1) * k];
                for (b, &cr) in core_rows.iter().enumerate() {
                    dst[cr] -= f * src[b];
                }
            }
        }
        self.binv = binv;
        let mut xb = vec![0.0; m];
        for i in 0..m {
            let row = &self.binv[i * m..(i + 1) * m];
            xb[i] = row.iter().zip(&self.sf.b).map(|(u, v)| u * v).sum();
        }
        self.xb = xb;
        self.since_refactor = 0;
        Ok(())
    }

    fn run(&mut self, cost: &[f64], allowed: &dyn Fn(usize) -> bool, limit: usize) -> Result<Outcome, LpError> {
        let m = self.sf.m;
        let ncols = self.sf.cols.len();
        let cmax = cost.iter().fold(1.0f64, |a, c| a.max(c.abs()));
        let opt_tol = 1e-9 * cmax;
        let degenerate_limit = 5 * (m + ncols);
        let mut degenerate_run = 0usize;
        let mut bland = false;
        let mut rejected = vec![false; ncols];
        let mut y = self.duals(cost);

        loop {
            if self.iterations >= limit {
                return Err(LpError::IterationLimit(limit));
            }
            if self.since_refactor >= REFACTOR_EVERY {
                self.refactor()?;
                y = self.duals(cost);
            }

            let mut entering: Option<(usize, f64)> = None;
            for j in 0..ncols {
                if self.in_basis[j].is_some() || rejected[j] || !allowed(j) {
                    continue;
                }
                let d = cost[j] - self.col_dot(&y, j);
                if d < -opt_tol {
                    if bland {
                        entering = Some((j, d));
                        break;
                    }
                    if entering.is_none_or(|(_, best)| d < best) {
                        entering = Some((j, d));
                    }
                }
            }
            let Some((q, dq)) = entering else {
                if rejected.iter().any(|&x| x) {
                    let pivot = rejected
                        .iter()
                        .enumerate()
                        .filter(|(_, &r)| r)
                        .map(|(j, _)| self.ftran(j).iter().fold(0.0f64, |a, v| a.max(*v)))
                        .fold(0.0f64, f64::max);
                    return Err(LpError::NumericalBreakdown { pivot, iterations: self.iterations });
                }
                return Ok(Outcome::Optimal);
            };

            let alpha = self.ftran(q);
            let leave = self.ratio_test(&alpha, bland);
            let r = match leave {
                RatioTest::Row(r) => r,
                RatioTest::Unbounded => return Ok(Outcome::Unbounded),
                RatioTest::TinyPivot => {
                    rejected[q] = true;
                    continue;
                }
            };

            let theta = if self.sf.kinds[self.basis[r]] == ColKind::Artificial && alpha[r] < 0.0 {
                0.0
            } else {
                self.xb[r].max(0.0) / alpha[r]
            };
            if theta != 0.0 {
                for i in 0..m {
                    if alpha[i] != 0.0 {
                        self.xb[i] -= theta * alpha[i];
                    }
                }
            }
            self.xb[r] = theta;

            if theta.abs() <= 1e-12 {
                degenerate_run += 1;
                if degenerate_run > degenerate_limit {
                    bland = true;
                }
            } else {
                degenerate_run = 0;
                bland = false;
            }
            rejected.iter_mut().for_each(|x| *x = false);

            // y' = y + (d_q / alpha_r) * (row r of the old inverse)
            let scale = dq / alpha[r];
            for k in 0..m {
                y[k] += scale * self.binv[r * m + k];
            }
            self.pivot(r, q, &alpha);
        }
    }

    fn ratio_test(&self, alpha: &[f64], bland: bool) -> RatioTest {
        let m = self.sf.m;
        // Artificials left in the basis at zero must not move in either direction.
        for i in 0..m {
            if self.sf.kinds[self.basis[i]] == ColKind::Artificial && alpha[i].abs() > PIVOT_TOL && self.xb[i] <= FEAS_TOL {
                return RatioTest::Row(i);
            }
        }
        let mut any_tiny = false;
        if bland {
            let mut best: Option<(f64, usize)> = None;
            for i in 0..m {
                if alpha[i] > PIVOT_TOL {
                    let t = self.xb[i].max(0.0) / alpha[i];
                    best = match best {
                        None => Some((t, i)),
                        Some((bt, bi)) => {
                            if t < bt - 1e-12 || (t <= bt + 1e-12 && self.basis[i] < self.basis[bi]) {
                                Some((t, i))
                            } else {
                                Some((bt, bi))
                            }
                        }
                    };
                } else if alpha[i] > BREAKDOWN_TOL {
                    any_tiny = true;
                }
            }
            return match best {
                Some((_, i)) => RatioTest::Row(i),
                None if any_tiny => RatioTest::TinyPivot,
                None => RatioTest::Unbounded,
            };
        }
        // Harris two-pass ratio test.
        let mut bound = f64::INFINITY;
        for i in 0..m {
            if alpha[i] > PIVOT_TOL {
                bound = bound.min((self.xb[i].max(0.0) + FEAS_TOL) / alpha[i]);
            } else if alpha[i] > BREAKDOWN_TOL {
                any_tiny = true;
            }
        }
        if bound.is_infinite() {
            return if any_tiny { RatioTest::TinyPivot } else { RatioTest::Unbounded };
        }
        let mut pick: Option<usize> = None;
        for i in 0..m {
            if alpha[i] > PIVOT_TOL && self.xb[i].max(0.0) / alpha[i] <= bound {
                if pick.is_none_or(|p| alpha[i] > alpha[p]) {
                    pick = Some(i);
                }
            }
        }
        RatioTest::Row(pick.unwrap())
    }

    /// Pivots basic artificials out after Phase I where a structural or slack
    /// column with a usable entry exists; redundant rows keep theirs at zero.
    fn drive_out_artificials(&mut self) -> Result<(), LpError> {
        let m = self.sf.m;
        for r in 0..m {
            if self.sf.kinds[self.basis[r]] != ColKind::Artificial {
                continue;
            }
            let row: Vec<f64> = self.binv[r * m..(r + 1) * m].to_vec();
            let mut best: Option<(usize, f64)> = None;
            for j in 0..self.sf.cols.len() {
                if self.in_basis[j].is_some() || self.sf.kinds[j] == ColKind::Artificial {
                    continue;
                }
                let t = self.col_dot(&row, j);
                if t.abs() > 1e-7 && best.is_none_or(|(_, b)| t.abs() > b.abs()) {
                    best = Some((j, t));
                }
            }
            if let Some((q, _)) = best {
                let alpha = self.ftran(q);
                let theta = self.xb[r] / alpha[r];
                for i in 0..m {
                    if alpha[i] != 0.0 {
                        self.xb[i] -= theta * alpha[i];
                    }
                }
                self.xb[r] = theta;
                self.pivot(r, q, &alpha);
            }
        }
        self.refactor()
    }
}

/// Inverse of a row-major `k×k` matrix; the error carries the failed pivot.
fn invert_dense(mut a: Vec<f64>, k: usize) -> Result<Vec<f64>, f64> {
    let mut inv = vec![0.0; k * k];
    for r in 0..k {
        inv[r * k + r] = 1.0;
    }
    for c in 0..k {
        let p = (c..k).max_by(|&i, &j| a[i * k + c].abs().total_cmp(&a[j * k + c].abs()).then(j.cmp(&i))).unwrap();
        let best = a[p * k + c].abs();
        if best < BREAKDOWN_TOL {
            return Err(best);
        }
        if p != c {
            for j in 0..k {
                a.swap(c * k + j, p * k + j);
                inv.swap(c * k + j, p * k + j);
            }
        }
        let d = a[c * k + c];
        let a_nz: Vec<usize> = (c..k).filter(|&j| a[c * k + j] != 0.0).collect();
        let i_nz: Vec<usize> = (0..k).filter(|&j| inv[c * k + j] != 0.0).collect();
        for &j in &a_nz {
            a[c * k + j] /= d;
        }
        for &j in &i_nz {
            inv[c * k + j] /= d;
        }
        for i in 0..k {
            let f = a[i * k + c];
            if i == c || f == 0.0 {
                continue;
            }
            for &j in &a_nz {
                a[i * k + j] -= f * a[c * k + j];
            }
            for &j in &i_nz {
                inv[i * k + j] -= f * inv[c * k + j];
            }
        }
    }
    Ok(inv)
}

enum RatioTest {
    Row(usize),
    Unbounded,
    TinyPivot,
}

/// Two-phase revised primal simplex with a dense explicit basis inverse.
///
/// Pricing is Dantzig's rule, switching to Bland's rule after a run of
/// `5·(rows+cols)` degenerate pivots; ties always go to the lowest index so the
/// result is deterministic.
pub fn solve(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    lp.validate()?;
    let (sf, start) = Standard::build(lp);
    let m = sf.m;
    let ncols = sf.cols.len();
    let limit = 50 * (m + ncols) + 10_000;

    if m == 0 {
        // Only sign bounds: optimum at zero unless some improving direction is unbounded.
        let improving = lp.objective.iter().zip(&lp.bounds).any(|(c, b)| {
            let c = if lp.sense == Sense::Maximize { *c } else { -*c };
            match b {
                VarBound::Free => c != 0.0,
                VarBound::NonNegative => c > 0.0,
            }
        });
        let status = if improving { Status::Unbounded } else { Status::Optimal };
        return Ok(LpSolution { status, objective: 0.0, primal: vec![0.0; lp.num_vars()], dual: vec![], iterations: 0 });
    }

    let mut tab = Tableau::new(&sf, start);
    let kinds = &sf.kinds;
    let has_artificial = sf.kinds.contains(&ColKind::Artificial);
    if has_artificial {
        let phase1: Vec<f64> = sf.kinds.iter().map(|k| if *k == ColKind::Artificial { 1.0 } else { 0.0 }).collect();
        tab.run(&phase1, &|j| kinds[j] != ColKind::Artificial, limit)?;
        tab.refactor()?;
        let infeas: f64 = (0..m)
            .filter(|&i| sf.kinds[tab.basis[i]] == ColKind::Artificial)
            .map(|i| tab.xb[i].max(0.0))
            .sum();
        let bscale = sf.b.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        if infeas > 1e-8 * bscale {
            return Ok(LpSolution {
                status: Status::Infeasible,
                objective: f64::NAN,
                primal: vec![0.0; lp.num_vars()],
                dual: vec![0.0; m],
                iterations: tab.iterations,
            });
        }
        tab.drive_out_artificials()?;
    }

    let outcome = tab.run(&sf.cost, &|j| kinds[j] != ColKind::Artificial, limit)?;
    let iterations = tab.iterations;
    if let Outcome::Unbounded = outcome {
        let inf = if lp.sense == Sense::Maximize { f64::INFINITY } else { f64::NEG_INFINITY };
        return Ok(LpSolution { status: Status::Unbounded, objective: inf, primal: vec![0.0; lp.num_vars()], dual: vec![0.0; m], iterations });
    }
    tab.refactor()?;

    let mut primal = vec![0.0; lp.num_vars()];
    for (i, &c) in tab.basis.iter().enumerate() {
        if let ColKind::Structural { var, negated } = sf.kinds[c] {
            let v = tab.xb[i].max(0.0);
            primal[var] += if negated { -v } else { v };
        }
    }
    let y = tab.duals(&sf.cost);
    let obj_sign = if lp.sense == Sense::Maximize { -1.0 } else { 1.0 };
    let dual: Vec<f64> = (0..m).map(|r| obj_sign * y[r] * sf.row_factor[r]).collect();
    let objective = lp.objective_at(&primal);
    debug_assert_eq!(ncols, sf.kinds.len());
    Ok(LpSolution { status: Status::Optimal, objective, primal, dual, iterations })
}
