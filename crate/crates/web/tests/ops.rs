use robust_american::bench;
use robust_american_web::{hedge_curves, jump_bound, put_config, put_row};

#[test]
fn jump_bound_meets_its_closed_form() {
    let r = jump_bound(&[0.5, 0.25, 0.25], &[130.0, 115.0, 100.0]).unwrap();
    assert!((r.phi - 35.625).abs() < 1e-8 && (r.psi - 35.625).abs() < 1e-8, "{r:?}");
    assert_eq!(r.closed_form, 35.625);
    for q in [[0.1, 0.3, 0.6], [0.0, 0.0, 1.0], [0.6, 0.1, 0.3]] {
        for b in [[101.0, 100.0, 90.0], [149.0, 120.0, 60.0]] {
            let r = jump_bound(&q, &b).unwrap();
            assert!((r.phi - r.closed_form).abs() < 1e-8 * (1.0 + r.closed_form), "{q:?} {b:?}: {r:?}");
        }
    }
}

#[test]
fn jump_bound_rejects_bad_inputs() {
    assert!(jump_bound(&[0.7, 0.5, 0.0], &[130.0, 115.0, 100.0]).is_err());
    assert!(jump_bound(&[0.1, 0.3, 0.2], &[130.0, 115.0, 100.0]).is_err());
    assert!(jump_bound(&[0.5, 0.25, 0.25], &[130.0, 140.0, 100.0]).is_err());
    assert!(jump_bound(&[0.5, 0.25, 0.25], &[160.0, 115.0, 100.0]).is_err());
}

#[test]
fn put_row_matches_the_library() {
    let config = put_config(100.0, 4, 0.2, 70.0, 140.0, 10.0, 200).unwrap();
    let row = put_row(&config).unwrap();
    assert_eq!(row, bench::premium_row(&config).unwrap());
    assert!(row.zeta <= row.chi && row.chi <= row.phi, "{row:?}");
    assert!(put_config(100.0, 4, 0.2, 70.0, 140.0, 0.0, 200).is_err());
    assert!(put_config(100.0, 40, 0.2, 70.0, 140.0, 10.0, 200).is_err());
}

#[test]
fn hedge_curves_dominate_the_payoff() {
    let config = put_config(100.0, 4, 0.2, 70.0, 140.0, 10.0, 200).unwrap();
    let c = hedge_curves(&config, 301).unwrap();
    assert_eq!(c.x.len(), 301);
    assert_eq!((c.x[0], *c.x.last().unwrap()), (0.0, 210.0));
    assert_eq!(c.value.len(), 4);
    for (v, p) in c.value.iter().zip(&c.payoff) {
        assert!(v.iter().zip(p).all(|(v, p)| *v >= p - 1e-9), "{v:?} {p:?}");
    }
}
