//! Acceptance run: one line per criterion, nonzero exit if any fails.

use std::time::{Duration, Instant};

use ddstop::coefficients::{
    roots, CoefficientField, DomainBox, ModelSpec, Payoff, RootPair, StateTriple,
};
use ddstop::montecarlo::{
    simulate_stopped_payoff, verify_solution, Estimate, Scaled, SimConfig, ValueModel,
};
use ddstop::numerics::boundary_slope;
use ddstop::reflection::{max_residuals, pde_residuals};
use ddstop::solver2d::{
    call_boundary_2d, call_boundary_curve, put_asymptote, put_boundary_2d, put_value_2d,
    CallSolution2d, Grid2d, DEFAULT_STEPS,
};
use ddstop::solver3d::{put_value_3d, Options3d, Solution3d};

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn spec(payoff: Payoff, delta: CoefficientField, s_max: f64) -> ModelSpec {
    ModelSpec::new(
        0.06,
        1.0,
        payoff,
        delta,
        CoefficientField::constant(0.2),
        DomainBox {
            s_max,
            y_max: s_max,
        },
    )
    .unwrap()
}

fn spread(v: impl IntoIterator<Item = f64>) -> f64 {
    let (lo, hi) = v
        .into_iter()
        .fold((f64::MAX, f64::MIN), |(a, b), x| (a.min(x), b.max(x)));
    hi - lo
}

/// Roots of `(σ²/2)γ(γ-1) + (r-δ)γ - r` by the textbook formula.
fn quadratic_roots(r: f64, d: f64, sg: f64) -> (f64, f64) {
    let a = 0.5 * sg * sg;
    let b = r - d - a;
    let disc = (b * b + 4.0 * a * r).sqrt();
    ((-b + disc) / (2.0 * a), (-b - disc) / (2.0 * a))
}

fn roots_reduction() -> Outcome {
    let sp = ModelSpec::reference(Payoff::Put, 1.0);
    let t = Instant::now();
    let p = roots(&sp, 1.0, 0.5).unwrap();
    let took = t.elapsed();
    let (g1, g2) = quadratic_roots(0.06, 0.03, 0.2);
    let err = (p.gamma1 - 1.5)
        .abs()
        .max((p.gamma2 + 2.0).abs())
        .max((p.gamma1 - g1).abs())
        .max((p.gamma2 - g2).abs());
    check(
        err <= 1e-12 && took < Duration::from_millis(1),
        format!(
            "gamma = ({}, {}), error {err:.1e}, {took:.1?}",
            p.gamma1, p.gamma2
        ),
    )
}

fn bms_reduction() -> Outcome {
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    for k in [0.5, 1.0, 2.0] {
        let call = ModelSpec::reference(Payoff::Call, k);
        let put = ModelSpec::reference(Payoff::Put, k);
        for s in [0.5 * k, k, 4.0 * k] {
            worst = worst.max((call_boundary_2d(&call, s).unwrap() - 3.0 * k).abs());
        }
        worst = worst.max((put_asymptote(&put).unwrap() - 2.0 * k / 3.0).abs());
        let g = put_boundary_2d(&put, Grid2d::for_spec(&put), 0.0).unwrap();
        worst = worst.max(spread(g.curve().values.iter().copied()));
        worst = worst.max((g.curve().values[0] - 2.0 * k / 3.0).abs());
    }
    let put = ModelSpec::reference(Payoff::Put, 1.0);
    let v2 = put_value_2d(&put, 1.0, 1.0).unwrap();
    let v3 = put_value_3d(&put, 1.0, 1.0, 0.0).unwrap();
    let verr = (v2 - 4.0 / 27.0).abs().max((v3 - 4.0 / 27.0).abs());
    let took = t.elapsed();
    check(
        worst <= 1e-12 && verr <= 1e-10 && took < Duration::from_secs(1),
        format!("boundary error {worst:.1e}, V(1,1,0) = {v3:.15} (error {verr:.1e}), {took:.1?}"),
    )
}

fn degeneracy() -> Outcome {
    let t = Instant::now();
    let nodes = 256;
    let mut notes = Vec::new();
    let mut pass = true;

    let c = spec(Payoff::Put, CoefficientField::constant(0.03), 20.0);
    let mut rhs: f64 = 0.0;
    for i in 1..20 {
        for j in 0..i {
            let (s, y) = (0.25 * i as f64, 0.25 * j as f64);
            let p: RootPair = roots(&c, s, y).unwrap();
            let g = [p.gamma1, p.gamma2];
            let put = boundary_slope(0.6, 1.0, s, g, [p.dgamma1_ds, p.dgamma2_ds]).unwrap();
            let call = boundary_slope(3.0, 1.0, s - y, g, [p.dgamma1_dy, p.dgamma2_dy]).unwrap();
            rhs = rhs.max(put.abs()).max(call.abs());
        }
    }
    pass &= rhs == 0.0;
    notes.push(format!("constant rhs max {rhs:e}"));

    let mut flat: f64 = 0.0;
    let grid = Grid2d::for_spec(&c);
    flat = flat.max(spread(
        put_boundary_2d(&c, grid, 0.0)
            .unwrap()
            .curve()
            .values
            .iter()
            .copied(),
    ));
    let cc = c.with_payoff(Payoff::Call);
    flat = flat.max(spread(
        call_boundary_curve(&cc, &grid.nodes()).unwrap().values,
    ));
    for sp in [&c, &cc] {
        let opts = Options3d {
            nodes,
            general: true,
            ..Options3d::for_spec(sp)
        };
        let surf = Solution3d::new(sp, opts).unwrap().surface().unwrap();
        flat = flat.max(spread(surf.nodes.iter().map(|n| n.value)));
    }
    pass &= flat <= 1e-12;
    notes.push(format!("constant surface spread {flat:.1e}"));

    let mut rel: f64 = 0.0;
    for payoff in [Payoff::Call, Payoff::Put] {
        let sp = spec(payoff, CoefficientField::s_only(0.03, 0.02), 20.0);
        let opts = Options3d {
            nodes,
            general: true,
            ..Options3d::for_spec(&sp)
        };
        let edge = match payoff {
            Payoff::Put => Some(put_boundary_2d(&sp, Grid2d::for_spec(&sp), 0.0).unwrap()),
            Payoff::Call => None,
        };
        let surf = Solution3d::new(&sp, opts).unwrap().surface().unwrap();
        for n in &surf.nodes {
            let curve = match &edge {
                Some(g) => g.at(n.s),
                None => call_boundary_2d(&sp, n.s).unwrap(),
            };
            rel = rel.max((n.value - curve).abs() / curve);
        }
    }
    pass &= rel <= 1e-8;
    notes.push(format!("s_only surface vs curve {rel:.1e}"));
    let took = t.elapsed();
    pass &= took < Duration::from_secs(10);
    check(pass, format!("{}, {took:.1?}", notes.join(", ")))
}

fn reference_put_mc(horizon: f64) -> (Estimate, Duration) {
    let sp = ModelSpec::reference(Payoff::Put, 1.0);
    let model = put_boundary_2d(&sp, Grid2d::for_spec(&sp), 0.0).unwrap();
    let rule = model.rule().unwrap();
    let cfg = SimConfig::new(20_000, 5e-3, horizon, 20240601);
    let start = StateTriple::new(1.0, 1.0, 0.0).unwrap();
    let t = Instant::now();
    let est = simulate_stopped_payoff(&sp, start, &rule, &cfg).unwrap();
    (est, t.elapsed())
}

fn mc_consistency(base: &(Estimate, Duration)) -> Outcome {
    let (est, took) = base;
    let exact: f64 = 4.0 / 27.0;
    let tol = (0.02 * exact).max(3.0 * est.stderr);
    check(
        (est.mean - exact).abs() <= tol && *took < Duration::from_secs(60),
        format!(
            "{:.5} ± {:.5} vs {exact:.5}, gap {:.1e} within {tol:.1e}, {took:.1?}",
            est.mean,
            est.stderr,
            (est.mean - exact).abs()
        ),
    )
}

fn optimality(base: &(Estimate, Duration)) -> Outcome {
    let sp = ModelSpec::reference(Payoff::Put, 1.0);
    let model = put_boundary_2d(&sp, Grid2d::for_spec(&sp), 0.0).unwrap();
    let rule = model.rule().unwrap();
    let cfg = SimConfig::new(20_000, 5e-3, 120.0, 20240601);
    let start = StateTriple::new(1.0, 1.0, 0.0).unwrap();
    let t = Instant::now();
    let mut pass = true;
    let mut rows = Vec::new();
    for factor in [0.9, 1.1] {
        let est = simulate_stopped_payoff(
            &sp,
            start,
            &Scaled {
                rule: &rule,
                factor,
            },
            &cfg,
        )
        .unwrap();
        let combined = (est.stderr.powi(2) + base.0.stderr.powi(2)).sqrt();
        let excess = (est.mean - base.0.mean) / combined;
        pass &= excess <= 2.0;
        rows.push(format!("x{factor}: {:.5} ({excess:+.1} se)", est.mean));
    }
    let took = t.elapsed();
    pass &= took < 3 * base.1;
    check(
        pass,
        format!("base {:.5}, {}, {took:.1?}", base.0.mean, rows.join(", ")),
    )
}

fn free_boundary_conditions() -> Outcome {
    let t = Instant::now();
    let mut pass = true;
    let mut notes = Vec::new();
    let cases = [
        (Payoff::Put, [0.9, 1.0, 0.3]),
        (Payoff::Call, [1.5, 2.0, 0.8]),
    ];
    for (payoff, [x, s, y]) in cases {
        let sp = spec(
            payoff,
            CoefficientField::bounded_rational(0.02, 0.0, 0.01),
            20.0,
        );
        let sol = Solution3d::new(&sp, Options3d::for_spec(&sp)).unwrap();
        let cfg = SimConfig::new(5_000, 5e-3, 120.0, 20240601);
        let start = StateTriple::new(x, s, y).unwrap();
        let r = verify_solution(&sol, start, &cfg, &[]).unwrap();
        let ok = r.dominance_violations.count == 0
            && r.smooth_fit_gap <= 1e-3
            && r.generator_residual_max <= 1e-5 * sp.strike()
            && r.generator_sign_violations.count == 0;
        pass &= ok;
        notes.push(format!(
            "{payoff:?}: dominance {}/{} (worst {:.1e}), smooth fit {:.1e}, residual {:.1e}, sign {}/{}, mc {:.4} ± {:.4} vs {:.4}",
            r.dominance_violations.count,
            r.dominance_violations.checked,
            r.dominance_violations.worst,
            r.smooth_fit_gap,
            r.generator_residual_max,
            r.generator_sign_violations.count,
            r.generator_sign_violations.checked,
            r.mc_mean,
            r.mc_stderr,
            r.analytic_value,
        ));
    }
    let took = t.elapsed();
    pass &= took < Duration::from_secs(120);
    check(pass, format!("{}; {took:.1?}", notes.join("; ")))
}

fn reflection_oracle() -> Outcome {
    let sp = spec(Payoff::Call, CoefficientField::s_only(0.03, 0.02), 20.0);
    let t = Instant::now();
    let opts = Options3d {
        nodes: 1025,
        general: true,
        ..Options3d::for_spec(&sp)
    };
    let sol = Solution3d::new(&sp, opts).unwrap();
    let grid = sol.coefficient_grid().unwrap();
    let oracle = CallSolution2d::new(&sp);
    let t_nodes = &grid.grid().nodes;
    let mut c1_err: f64 = 0.0;
    let mut c2_rel: f64 = 0.0;
    let mut count = 0;
    let mut cache = vec![None; t_nodes.len()];
    for i in 0..t_nodes.len() {
        for j in (i + 1)..t_nodes.len() {
            let Some(c) = grid.node(i, j) else { continue };
            let d =
                *cache[j].get_or_insert_with(|| oracle.reflection_coefficient(t_nodes[j]).unwrap());
            c1_err = c1_err.max((c[0] - d).abs() / d.abs());
            c2_rel = c2_rel.max(c[1].abs() / d.abs());
            count += 1;
        }
    }
    let (rs, ry) = max_residuals(&pde_residuals(&sp, grid).unwrap());
    let took = t.elapsed();
    check(
        count > 0
            && c1_err <= 1e-6
            && c2_rel <= 1e-6
            && rs <= 1e-6
            && ry <= 1e-6
            && took < Duration::from_secs(30),
        format!(
            "{count} nodes, C1 rel error {c1_err:.1e}, |C2|/C1 {c2_rel:.1e}, residuals ({rs:.1e}, {ry:.1e}), {took:.1?}"
        ),
    )
}

fn truncation(base: &(Estimate, Duration)) -> Outcome {
    let t = Instant::now();
    let delta = CoefficientField::s_only(0.03, 0.02);
    let curve = |s_max: f64| {
        let sp = spec(Payoff::Put, delta.clone(), s_max);
        let grid = Grid2d {
            s_min: 0.05,
            s_max,
            steps: (DEFAULT_STEPS as f64 * s_max / 20.0) as usize,
        };
        put_boundary_2d(&sp, grid, 0.0).unwrap()
    };
    let (g20, g40) = (curve(20.0), curve(40.0));
    let moved = (0..=1000)
        .map(|k| 0.05 + (5.0 - 0.05) * k as f64 / 1000.0)
        .map(|s| (g20.at(s) - g40.at(s)).abs() / g40.at(s))
        .fold(0.0, f64::max);
    let (long, _) = reference_put_mc(240.0);
    let shift = (long.mean - base.0.mean).abs();
    let took = t.elapsed();
    check(
        moved < 1e-4 && shift < base.0.stderr,
        format!(
            "g* moved {moved:.1e} on [0.05, 5], horizon 240 estimate {:.5} (shift {shift:.1e}, stderr {:.1e}), {took:.1?}",
            long.mean, base.0.stderr
        ),
    )
}

fn main() {
    let base = reference_put_mc(120.0);
    let results = [
        ("1 root reduction", roots_reduction()),
        ("2 constant-coefficient reduction", bms_reduction()),
        ("3 degeneracy ladder", degeneracy()),
        ("4 Monte Carlo consistency", mc_consistency(&base)),
        ("5 optimality spot check", optimality(&base)),
        ("6 free-boundary conditions", free_boundary_conditions()),
        ("7 reflection-region oracle", reflection_oracle()),
        ("8 truncation robustness", truncation(&base)),
    ];
    let mut failed = 0;
    for (name, o) in &results {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {name}: {tag}: {}", o.detail);
        failed += usize::from(!o.pass);
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        results.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
