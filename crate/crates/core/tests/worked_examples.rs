mod common;

use common::closed_form_three_strike;
use robust_american::bound::{
    build_dual_bounded, build_dual_extended, build_primal_bounded, build_primal_extended, robust_bound, robust_bound_marginals,
    solve_pair, BoundOptions, Variant, VariantChoice,
};
use robust_american::certify::{
    gains, mc_price, seed_model, verify_superreplication, Exercise, PricePath, VerificationMode, VerifySpec,
};
use robust_american::instances::{self, information_timing, three_strike_jump, two_period_filtration};
use robust_american::lpcore::{check_point, dual_of, solve, Status};
use robust_american::market::{self, Mode};
use robust_american::payoff::AmericanPayoffGrid;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

#[test]
fn jump_instance_matches_closed_form() {
    let inst = instances::by_name("sec26").unwrap();
    let oracle = closed_form_three_strike(&[0.5, 0.25, 0.25], &[130.0, 115.0, 100.0]);
    let r = robust_bound(&inst.surface, &inst.payoff, BoundOptions::default()).unwrap();
    assert_eq!(r.variant, Variant::Bounded);
    assert!(close(r.phi, oracle, 1e-8), "{} vs {oracle}", r.phi);
    assert!(close(r.psi, oracle, 1e-8));
}

#[test]
fn jump_instance_mechanical_dual() {
    let inst = instances::by_name("sec26").unwrap();
    let (p, _) = build_primal_bounded(&inst.marginals, &inst.payoff).unwrap();
    let d = solve(&dual_of(&p)).unwrap();
    assert!(close(d.objective, 35.625, 1e-8));
}

#[test]
fn jump_instance_over_random_parameters() {
    let mut r = common::rng(3);
    use rand::Rng;
    for _ in 0..20 {
        let nn = r.random_range(2..6);
        let mut q: Vec<f64> = (0..nn).map(|_| r.random_range(0.05..1.0)).collect();
        let s: f64 = q.iter().sum();
        q.iter_mut().for_each(|x| *x /= s);
        let b1 = r.random_range(101.0..149.0);
        let mut b = vec![b1];
        for _ in 1..nn {
            let prev = *b.last().unwrap();
            b.push(prev - r.random_range(0.0..20.0));
        }
        let inst = three_strike_jump(&q, &b).unwrap();
        let res = robust_bound(&inst.surface, &inst.payoff, BoundOptions::default()).unwrap();
        let oracle = closed_form_three_strike(&q, &b);
        if b[nn - 1] <= 2.0 * b1 - 150.0 {
            assert!(close(res.phi, oracle, 1e-7), "q={q:?} b={b:?}: {} vs {oracle}", res.phi);
        } else {
            assert!(res.phi >= oracle - 1e-7);
        }
    }
}

#[test]
fn jump_instance_published_hedge() {
    let inst = instances::by_name("sec26").unwrap();
    let h = inst.hedge.clone().unwrap();
    let (d, ix) = build_dual_bounded(&inst.marginals, &inst.payoff).unwrap();
    let rep = check_point(&d, &h.lp_point(&ix), 1e-9);
    assert!(rep.feasible, "{:?}", rep.row_violations);
    assert!(!rep.binding_rows.is_empty());
    assert!(close(rep.objective, 35.625, 1e-9));
    assert!(close(h.cost(&inst.marginals.probs), 35.625, 1e-9));
}

#[test]
fn filtration_instance() {
    let inst = two_period_filtration();
    let r = robust_bound_marginals(&inst.marginals, &inst.payoff, None).unwrap();
    assert!(close(r.phi, 3.6, 1e-8) && close(r.psi, 3.6, 1e-8));
    let h = inst.hedge.unwrap();
    let (d, ix) = build_dual_bounded(&inst.marginals, &inst.payoff).unwrap();
    let rep = check_point(&d, &h.lp_point(&ix), 1e-12);
    assert!(rep.feasible);
    assert!(close(rep.objective, 3.6, 1e-12));
    let path = PricePath { values: vec![1.0, 4.0], exercise: Exercise::Maturity(0) };
    assert!(gains(&h, &path, &inst.lattice).unwrap() >= 1.0 - 1e-12);
}

#[test]
fn published_regime_two_ratios_need_the_opposite_sign() {
    for inst in [instances::by_name("sec26").unwrap(), two_period_filtration()] {
        let mut h = inst.hedge.clone().unwrap();
        let (d, ix) = build_dual_bounded(&inst.marginals, &inst.payoff).unwrap();
        assert!(check_point(&d, &h.lp_point(&ix), 1e-9).feasible);
        h.d2.iter_mut().flatten().for_each(|x| *x = -*x);
        assert!(!check_point(&d, &h.lp_point(&ix), 1e-9).feasible);
    }
}

#[test]
fn timing_instance() {
    let inst = information_timing();
    let r = robust_bound(&inst.surface, &inst.payoff, BoundOptions::default()).unwrap();
    assert!(close(r.phi, 34.0, 1e-8), "{}", r.phi);
    let seed = seed_model(&inst.marginals).unwrap();
    assert!(close(seed.value(&inst.payoff), 32.0, 1e-12));
    // exercise at once at 100, or wait for the jump and exercise at 50
    let f = &r.model.f;
    let first: f64 = (0..4).map(|j| f[j][0] * inst.payoff.values[j][0]).sum();
    let second: f64 = (0..4).map(|j| f[j][1] * inst.payoff.values[j][1]).sum();
    assert!(close(first + second, 34.0, 1e-8));
}

#[test]
fn extended_equals_bounded_on_zero_tail() {
    let inst = instances::by_name("sec26").unwrap();
    let ext = market::extended_marginals(&inst.surface).unwrap();
    assert!(ext.tail_mass().iter().all(|c| *c == 0.0));
    let (p, _) = build_primal_extended(&ext, &inst.payoff).unwrap();
    let (d, _) = build_dual_extended(&ext, &inst.payoff).unwrap();
    assert!(close(solve(&p).unwrap().objective, 35.625, 1e-8));
    assert!(close(solve(&d).unwrap().objective, 35.625, 1e-8));
    let forced = robust_bound(&inst.surface, &inst.payoff, BoundOptions { variant: VariantChoice::Extended, ..Default::default() });
    assert!(close(forced.unwrap().phi, 35.625, 1e-8));
}

#[test]
fn zero_payoff_is_worth_nothing() {
    let inst = instances::by_name("sec26").unwrap();
    let ext = market::extended_marginals(&inst.surface).unwrap();
    let z = AmericanPayoffGrid::zeros(4, 3);
    let pair = solve_pair(&ext.states, &ext.probs, &z, Variant::Extended).unwrap();
    assert!(pair.dual_solution.objective.abs() < 1e-12);
    let (p, _) = build_primal_bounded(&inst.marginals, &z).unwrap();
    assert!(!check_point(&p, &vec![0.0; p.num_vars()], 1e-9).feasible);
}

#[test]
fn certificates_of_worked_examples() {
    for name in instances::NAMES {
        let inst = instances::by_name(name).unwrap();
        let r = robust_bound_marginals(&inst.marginals, &inst.payoff, None).unwrap();
        let rep = r.model.check(Some(&inst.payoff));
        assert!(rep.within(1e-8, 150.0), "{name}: {rep:?}");
        assert!(r.model.top_leakage() < 1e-9, "{name}");
        assert!(r.model.q.iter().flatten().all(|q| (0.0..=1.0).contains(q)));
        let mc = mc_price(&r.model, &inst.payoff, 200_000, 42).unwrap();
        assert!((mc.estimate - r.phi).abs() <= 3.0 * mc.stderr + 1e-9, "{name}: {mc:?} vs {}", r.phi);
        let spec = VerifySpec { mode: VerificationMode::LatticeExhaustive, trials: 0, seed: 1, s0: None };
        let v = verify_superreplication(&r.hedge, &inst.lattice, &spec).unwrap();
        assert!(v.min_slack >= -1e-9, "{name}: {v:?}");
        let spec = VerifySpec { mode: VerificationMode::FullLineRandom, trials: 20_000, seed: 2, s0: Some(inst.surface.s0()) };
        let v = verify_superreplication(&r.hedge, &inst.lattice, &spec).unwrap();
        assert!(v.passed, "{name}: {v:?}");
    }
}

#[test]
fn surfaces_validate() {
    let inst = instances::by_name("sec26").unwrap();
    let rep = market::validate(&inst.surface, Mode::Weak, 1e-10);
    assert!(rep.zero_tail);
    assert_ne!(rep.status, market::ValidationStatus::Invalid);
    let (p, _) = build_primal_bounded(&inst.marginals, &inst.payoff).unwrap();
    assert_eq!(solve(&p).unwrap().status, Status::Optimal);
}
