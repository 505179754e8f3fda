use ddstop::coefficients::{
    generator_residual, roots, CoefficientField, DomainBox, ModelSpec, Payoff, StateTriple,
};
use ddstop::montecarlo::{simulate_path, simulate_stopped_payoff, BoundaryTable, SimConfig};
use ddstop::numerics::boundary_slope;
use proptest::prelude::*;

fn spec(r: f64, delta: CoefficientField, sigma: CoefficientField) -> ModelSpec {
    ModelSpec::new(
        r,
        1.0,
        Payoff::Put,
        delta,
        sigma,
        DomainBox {
            s_max: 20.0,
            y_max: 20.0,
        },
    )
    .unwrap()
}

fn field() -> impl Strategy<Value = CoefficientField> {
    prop_oneof![
        (0.01..0.05f64).prop_map(CoefficientField::constant),
        (0.01..0.05f64, -0.005..0.02f64).prop_map(|(a, b)| CoefficientField::s_only(a, b)),
        (0.01..0.05f64, -0.005..0.02f64, -0.005..0.02f64)
            .prop_map(|(a, b, c)| CoefficientField::bounded_rational(a, b, c)),
    ]
}

fn vol() -> impl Strategy<Value = CoefficientField> {
    prop_oneof![
        (0.1..0.4f64).prop_map(CoefficientField::constant),
        (0.15..0.3f64, -0.05..0.05f64, -0.05..0.05f64)
            .prop_map(|(a, b, c)| CoefficientField::bounded_rational(a, b, c)),
    ]
}

/// `(s, y)` with `0 ≤ y < s`.
fn quadrant() -> impl Strategy<Value = (f64, f64)> {
    (0.05..10.0f64, 0.0..0.99f64).prop_map(|(s, f)| (s, f * s))
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn roots_bracket_and_solve_the_quadratic(
        r in 0.02..0.1f64, d in field(), v in vol(), (s, y) in quadrant()
    ) {
        let sp = spec(r, d.clone(), v.clone());
        let p = roots(&sp, s, y).unwrap();
        prop_assert!(p.gamma2 < 0.0 && p.gamma1 > 1.0);
        let (dl, sg) = (d.value(s, y), v.value(s, y));
        for g in [p.gamma1, p.gamma2] {
            let terms = [0.5 * sg * sg * g * (g - 1.0), (r - dl) * g, -r];
            let scale = terms.iter().map(|t| t.abs()).fold(0.0, f64::max);
            prop_assert!(terms.iter().sum::<f64>().abs() <= 1e-10 * scale);
        }
        prop_assert!(rel(p.gamma1 * p.gamma2, -2.0 * r / (sg * sg)) <= 1e-10);
        prop_assert!(rel(p.gamma1 + p.gamma2, 1.0 - 2.0 * (r - dl) / (sg * sg)) <= 1e-10);
    }

    #[test]
    fn root_partials_match_central_differences(
        d in field(), v in vol(), (s, y) in quadrant()
    ) {
        let sp = spec(0.06, d, v);
        let p = roots(&sp, s, y).unwrap();
        let h = 1e-5;
        let ps = (roots(&sp, s + h, y).unwrap(), roots(&sp, s - h, y).unwrap());
        let y_lo = (y - h).max(0.0);
        let py = (roots(&sp, s, y + h).unwrap(), roots(&sp, s, y_lo).unwrap());
        for i in 0..2 {
            let fd_s = (ps.0.gamma(i) - ps.1.gamma(i)) / (2.0 * h);
            let fd_y = (py.0.gamma(i) - py.1.gamma(i)) / (y + h - y_lo);
            // one-sided at y = 0 is first order
            let tol_y = if y_lo < y - h / 2.0 { 1e-6 } else { 1e-3 };
            let floor = 1e-4 * p.gamma(i).abs();
            prop_assert!((fd_s - p.dgamma_ds(i)).abs() <= 1e-6 * p.dgamma_ds(i).abs().max(floor));
            prop_assert!((fd_y - p.dgamma_dy(i)).abs() <= tol_y * p.dgamma_dy(i).abs().max(floor));
        }
    }

    #[test]
    fn degenerate_fields_have_exact_zero_partials(
        a in 0.01..0.05f64, b in -0.005..0.02f64, sg in 0.1..0.4f64, (s, y) in quadrant()
    ) {
        let p = roots(&spec(0.06, CoefficientField::s_only(a, b), CoefficientField::constant(sg)), s, y).unwrap();
        prop_assert_eq!((p.dgamma1_dy, p.dgamma2_dy), (0.0, 0.0));
        let p = roots(&spec(0.06, CoefficientField::constant(a), CoefficientField::constant(sg)), s, y).unwrap();
        prop_assert_eq!([p.dgamma1_ds, p.dgamma2_ds, p.dgamma1_dy, p.dgamma2_dy], [0.0; 4]);
        let g = [p.gamma1, p.gamma2];
        prop_assert_eq!(boundary_slope(0.7, 1.0, s, g, [0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn power_solutions_are_annihilated(
        d in field(), (s, y) in quadrant(), f in 0.01..0.99f64
    ) {
        let sp = spec(0.06, d, CoefficientField::constant(0.2));
        let p = roots(&sp, s, y).unwrap();
        let x = (s - y) + f * y;
        prop_assume!(y > 1e-3);
        for g in [p.gamma1, p.gamma2] {
            let v = x.powf(g);
            let res = generator_residual(&sp, &|x: f64, _: f64, _: f64| x.powf(g), StateTriple::new(x, s, y).unwrap()).unwrap();
            // finite-difference derivatives of the default handle
            prop_assert!(res.abs() <= 1e-5 * v.abs().max(1.0));
        }
    }

    #[test]
    fn paths_stay_in_the_state_space(
        index in 0u64..1000, level in 0.2..0.9f64, (s, y) in (1.0..3.0f64, 0.1..0.9f64)
    ) {
        let sp = spec(0.06, CoefficientField::bounded_rational(0.02, 0.01, 0.01), CoefficientField::constant(0.25));
        let start = StateTriple::new(s - 0.5 * y, s, y).unwrap();
        let rule = BoundaryTable::constant(Payoff::Put, level);
        let cfg = SimConfig::new(100, 1e-2, 120.0, 17);
        let mut prev = start;
        let out = simulate_path(&sp, start, &rule, &cfg, index, |p| {
            assert!(p.s >= prev.s && p.y >= prev.y);
            assert!(p.x <= p.s && p.s - p.y <= p.x * (1.0 + 1e-12));
            prev = p;
        }).unwrap();
        prop_assert!(out.discounted_payoff >= 0.0 && out.discounted_payoff <= 1.0);
        let paid = if out.tau == 0.0 { 1.0 - start.x } else { 1.0 - level };
        if out.stopped {
            prop_assert!((out.discounted_payoff - paid * (-0.06 * out.tau).exp()).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn estimates_are_deterministic_and_bounded(seed in any::<u64>(), level in 0.3..0.8f64) {
        let sp = ModelSpec::reference(Payoff::Put, 1.0);
        let start = StateTriple::new(1.0, 1.0, 0.0).unwrap();
        let rule = BoundaryTable::constant(Payoff::Put, level);
        let cfg = SimConfig::new(200, 1e-2, 120.0, seed);
        let a = simulate_stopped_payoff(&sp, start, &rule, &cfg).unwrap();
        let b = simulate_stopped_payoff(&sp, start, &rule, &cfg).unwrap();
        prop_assert_eq!(a, b);
        prop_assert!(a.mean >= 0.0 && a.mean <= 1.0 - level + 1e-12);
        prop_assert!(a.stderr >= 0.0 && (0.0..=1.0).contains(&a.stopped_fraction));
    }
}
