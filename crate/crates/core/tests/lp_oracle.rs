mod common;

use common::{random_int_lp, rng, vertex_enumeration};
use robust_american::lpcore::{check_point, dual_of, solve, solve_compact, LinearProgram, Relation, Sense, Status, VarBound};

/// Dual feasibility and complementary slackness of a reported optimum.
fn kkt_residuals(lp: &LinearProgram, x: &[f64], y: &[f64]) -> (f64, f64) {
    let sgn = if lp.sense == Sense::Maximize { 1.0 } else { -1.0 };
    let mut dual_res = 0.0f64;
    let mut comp = 0.0f64;
    for (r, row) in lp.rows.iter().enumerate() {
        let yr = sgn * y[r];
        let wrong_sign = match row.relation {
            Relation::Le => (-yr).max(0.0),
            Relation::Ge => yr.max(0.0),
            Relation::Eq => 0.0,
        };
        dual_res = dual_res.max(wrong_sign);
        comp = comp.max((y[r] * (row.activity(x) - row.rhs)).abs());
    }
    let mut reduced = lp.objective.clone();
    for (r, row) in lp.rows.iter().enumerate() {
        for &(i, a) in &row.terms {
            reduced[i] -= a * y[r];
        }
    }
    for (i, d) in reduced.iter().enumerate() {
        let d = sgn * d;
        let bad = match lp.bounds[i] {
            VarBound::Free => d.abs(),
            VarBound::NonNegative => d.max(0.0),
        };
        dual_res = dual_res.max(bad);
        comp = comp.max((d * x[i]).abs());
    }
    (dual_res, comp)
}

#[test]
fn agrees_with_rational_vertex_enumeration() {
    let mut r = rng(9);
    for case in 0..200 {
        let ilp = random_int_lp(&mut r);
        let lp = ilp.to_lp();
        let exact = vertex_enumeration(&ilp);
        let sol = solve(&lp).unwrap();
        assert_eq!(sol.status, Status::Optimal, "case {case}");
        assert!((sol.objective - exact).abs() <= 1e-7 * (1.0 + exact.abs()), "case {case}: {} vs {exact}", sol.objective);
        let scale = lp.scale();
        assert!(check_point(&lp, &sol.primal, 1e-9 * scale).feasible, "case {case}");
        let (dres, comp) = kkt_residuals(&lp, &sol.primal, &sol.dual);
        assert!(dres <= 1e-9 * scale, "case {case}: dual residual {dres}");
        assert!(comp <= 1e-8 * scale, "case {case}: complementarity {comp}");
        let dual_obj: f64 = lp.rows.iter().zip(&sol.dual).map(|(row, y)| row.rhs * y).sum();
        assert!((dual_obj - sol.objective).abs() <= 1e-8 * scale, "case {case}");
    }
}

#[test]
fn mechanical_dual_has_equal_value() {
    let mut r = rng(10);
    for case in 0..100 {
        let lp = random_int_lp(&mut r).to_lp();
        let p = solve(&lp).unwrap();
        let d = solve(&dual_of(&lp)).unwrap();
        assert_eq!(d.status, Status::Optimal, "case {case}");
        assert!((p.objective - d.objective).abs() <= 1e-8 * lp.scale(), "case {case}");
    }
}

#[test]
fn solve_is_deterministic() {
    let mut r = rng(11);
    for _ in 0..20 {
        let lp = random_int_lp(&mut r).to_lp();
        let a = solve(&lp).unwrap();
        let b = solve(&lp).unwrap();
        assert_eq!(a.primal, b.primal);
        assert_eq!(a.dual, b.dual);
        assert_eq!(a.iterations, b.iterations);
    }
}

#[test]
fn weak_duality_on_random_pairs() {
    let mut r = rng(12);
    for _ in 0..50 {
        let mut lp = random_int_lp(&mut r).to_lp();
        lp.sense = Sense::Maximize;
        let p = solve(&lp).unwrap();
        let d = solve(&dual_of(&lp)).unwrap();
        assert!(p.objective <= d.objective + 1e-8 * lp.scale());
    }
}

#[test]
fn compact_solve_recovers_from_the_dual() {
    let mut r = rng(13);
    let mut recovered = 0;
    let mut tall = 0;
    for case in 0..200 {
        let ilp = random_int_lp(&mut r);
        let lp = ilp.to_lp();
        let exact = vertex_enumeration(&ilp);
        let sol = solve_compact(&lp).unwrap();
        assert_eq!(sol.status, Status::Optimal, "case {case}");
        assert!((sol.objective - exact).abs() <= 1e-7 * (1.0 + exact.abs()), "case {case}");
        let scale = lp.scale();
        assert!(check_point(&lp, &sol.primal, 1e-9 * scale).feasible, "case {case}");
        let (dres, comp) = kkt_residuals(&lp, &sol.primal, &sol.dual);
        assert!(dres <= 1e-9 * scale && comp <= 1e-8 * scale, "case {case}: {dres} {comp}");
        if lp.num_rows() > lp.num_vars() {
            tall += 1;
            if sol.iterations == solve(&dual_of(&lp)).unwrap().iterations {
                recovered += 1;
            }
        }
    }
    assert!(tall > 100 && recovered * 10 >= tall * 9, "{recovered} of {tall}");
}
