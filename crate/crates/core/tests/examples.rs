//! Worked examples for each operation, on `(-pi/2, pi/2)` where `cos y` and
//! `sin 2y` are the first two Dirichlet modes.

use std::f64::consts::PI;
use std::sync::Arc;

use eternal_core::eternal::{far_past, floquet_principal, principal_eigenpair, FarPastOptions, TimeModel};
use eternal_core::evolution::{profile_checks, ProfileCheckOptions, SourceTag};
use eternal_core::inhomogeneous::{decompose, exhaustion_limit, exhaustion_solve, synthesize};
use eternal_core::verify::{
    check_decay_qplus, check_max_principle, comparison_constant, fit_rates, kl_contraction, kl_contraction_traces,
    proportionality, MaxPrincipleScope,
};
use eternal_core::{
    assemble, build_grid, evolve, parabolic_distance, slab_norm, sliding_norm, step, sup_profile, validate,
    CoefficientSpec, CylinderWindow, Error, EternalSolution, EvolutionTrace, Expr, FieldSlice, Grid, Scheme,
    SourceSpec, SpatialDomain, SupProfile,
};

const HALF: f64 = PI / 2.0;

fn e(s: &str) -> Expr {
    s.parse().unwrap()
}

fn line(h: f64) -> Arc<Grid> {
    Arc::new(build_grid(&SpatialDomain::interval(-HALF, HALF).unwrap(), h).unwrap())
}

fn mu_h(h: f64) -> f64 {
    4.0 / (h * h) * (h / 2.0).sin().powi(2)
}

fn heat() -> CoefficientSpec {
    CoefficientSpec::heat(1)
}

fn eternal(g: &Arc<Grid>, dt: f64) -> EternalSolution {
    let pair = principal_eigenpair(&heat(), g, 1e-12).unwrap();
    EternalSolution::from_eigenpair(g.clone(), &pair, TimeModel::Discrete { scheme: Scheme::ImplicitEuler, dt }).unwrap()
}

fn run(g: &Arc<Grid>, f: &SourceSpec, init: impl Fn(&[f64]) -> f64, a: f64, b: f64, dt: f64) -> EvolutionTrace {
    let u0 = FieldSlice::from_fn(g, a, init);
    evolve(&heat(), f, g, &u0, &CylinderWindow::new(a, b, dt).unwrap(), Scheme::ImplicitEuler).unwrap()
}

#[test]
fn l_shape_matches_lattice_enumeration() {
    let v = vec![[-0.5, -0.5], [1.5, -0.5], [1.5, 0.5], [0.5, 0.5], [0.5, 1.5], [-0.5, 1.5]];
    let g = build_grid(&SpatialDomain::polygon(v).unwrap(), 0.25).unwrap();
    let inside = |x: f64, y: f64| {
        let a = x > -0.5 && x < 1.5 && y > -0.5 && y < 0.5;
        let b = x > -0.5 && x < 0.5 && y > -0.5 && y < 1.5;
        let seam = (y - 0.5).abs() < 1e-12 && x > -0.5 && x < 0.5;
        a || b || seam
    };
    let mut count = 0;
    for i in 0..=8 {
        for j in 0..=8 {
            if inside(-0.5 + 0.25 * i as f64, -0.5 + 0.25 * j as f64) {
                count += 1;
            }
        }
    }
    assert_eq!(g.len(), count);
    assert_eq!(g.coords(g.origin_node()), &[0.0, 0.0]);
}

#[test]
fn interval_node_counts() {
    assert_eq!(line(PI / 8.0).len(), 7);
    assert_eq!(line(PI / 4.0).len(), 3);
}

#[test]
fn parabolic_distance_examples() {
    assert_eq!(parabolic_distance(&[0.0], 0.0, &[0.0], 4.0), 2.0);
    assert_eq!(parabolic_distance(&[1.5], 2.0, &[1.5], 2.0), 0.0);
    assert_eq!(parabolic_distance(&[3.0], 0.0, &[0.0], 4.0), 3.0);
}

#[test]
fn validation_examples() {
    let g = line(PI / 10.0);
    assert!(validate(&heat(), &g, &[0.0]).unwrap().passed());
    assert!(matches!(
        validate(&heat().with_c(e("-0.1")), &g, &[0.0]),
        Err(Error::NegativeC { .. })
    ));
}

#[test]
fn assembled_heat_has_discrete_cosine_eigenvector() {
    let h = PI / 100.0;
    let g = line(h);
    let op = assemble(&heat(), &g, 0.0).unwrap();
    let phi = g.sample(|y| y[0].cos());
    let a_phi = op.apply(&phi);
    for (l, r) in a_phi.iter().zip(&phi) {
        assert!((l - mu_h(h) * r).abs() < 1e-9);
    }
}

#[test]
fn norm_examples() {
    let g = line(PI / 200.0);
    let zero = SourceSpec::zero();
    assert_eq!(slab_norm(&zero, 0.0, &g, 0.01).unwrap(), 0.0);
    assert_eq!(sliding_norm(&zero, (0.0, 5.0), &g, 0.01).unwrap(), 0.0);
    let one = SourceSpec::new(e("1"));
    assert!((slab_norm(&one, 0.0, &g, 0.01).unwrap() - (2.0 * PI).sqrt()).abs() < 1e-6);
    let cos = SourceSpec::new(e("cos(y)"));
    assert!((slab_norm(&cos, 0.0, &g, 0.01).unwrap() - PI.sqrt()).abs() < 1e-6);
    assert_eq!(
        sliding_norm(&cos, (-3.0, 4.0), &g, 0.01).unwrap(),
        slab_norm(&cos, 0.0, &g, 0.01).unwrap()
    );
}

#[test]
fn sliding_norm_peaks_at_centred_slab() {
    let g = line(PI / 50.0);
    let f = SourceSpec::new(e("exp(-t*t) * cos(y)"));
    let (value, start) = eternal_core::operator::sliding_norm_argmax(&f, (-4.0, 4.0), &g, 0.01).unwrap();
    assert!((start + 1.0).abs() < 0.011, "{start}");
    let scan = (0..=600)
        .map(|k| slab_norm(&f, -4.0 + k as f64 * 0.01, &g, 0.01).unwrap())
        .fold(0.0f64, f64::max);
    assert!((value - scan).abs() < 1e-12 * scan);
}

#[test]
fn single_step_factors() {
    let h = PI / 100.0;
    let dt = 0.01;
    let g = line(h);
    let phi = FieldSlice::from_fn(&g, 0.0, |y| y[0].cos());
    let zero = SourceSpec::zero();
    for (scheme, factor) in [
        (Scheme::ImplicitEuler, 1.0 / (1.0 + dt * mu_h(h))),
        (
            Scheme::CrankNicolson,
            (1.0 - 0.5 * dt * mu_h(h)) / (1.0 + 0.5 * dt * mu_h(h)),
        ),
    ] {
        let next = step(&heat(), &zero, &g, &phi, dt, scheme).unwrap();
        for (a, b) in next.values.iter().zip(&phi.values) {
            assert!((a - factor * b).abs() < 1e-13);
        }
    }
    let z = step(&heat(), &zero, &g, &FieldSlice::zeros(&g, 0.0), dt, Scheme::ImplicitEuler).unwrap();
    assert!(z.values.iter().all(|&v| v == 0.0));
}

#[test]
fn evolve_examples() {
    let h = PI / 100.0;
    let dt = 1e-3;
    let g = line(h);
    let zero = SourceSpec::zero();
    let tr = run(&g, &zero, |y| y[0].cos(), 0.0, 5.0, dt);
    let factor = (1.0 + dt * mu_h(h)).powi(-5000);
    for (node, &v) in tr.slice(tr.len() - 1).iter().enumerate() {
        assert!((v - factor * g.coords(node)[0].cos()).abs() < 1e-12);
    }
    let u0 = FieldSlice::from_fn(&g, 0.0, |y| y[0].cos());
    let window = CylinderWindow::new(0.0, 5.0, dt).unwrap();
    let cn = evolve(&heat(), &zero, &g, &u0, &window, Scheme::CrankNicolson).unwrap();
    let exact = (-5.0f64).exp();
    for (node, &v) in cn.slice(cn.len() - 1).iter().enumerate() {
        let c = g.coords(node)[0].cos();
        assert!((v - exact * c).abs() <= 1e-3 * exact * c);
    }
    let z = run(&g, &zero, |_| 0.0, 0.0, 1.0, dt);
    assert!(z.raw_values().iter().all(|&v| v == 0.0));
    let bumpy = run(&g, &zero, |y| (3.0 * y[0]).cos().abs(), 0.0, 1.0, dt);
    assert!(bumpy.raw_values().iter().all(|&v| v >= 0.0));
}

#[test]
fn sup_profile_examples() {
    let g = line(PI / 20.0);
    let vals: Vec<f64> = (0..=10)
        .flat_map(|k| {
            let t = k as f64 * 0.1;
            g.nodes().map(move |y| (-t).exp() * y[0].cos()).collect::<Vec<_>>()
        })
        .collect();
    let tr = EvolutionTrace::from_parts(g.clone(), 0.0, 0.1, vals, Scheme::ImplicitEuler, SourceTag::Zero).unwrap();
    let p = sup_profile(&tr).unwrap();
    for (t, v) in p.times.iter().zip(&p.values) {
        assert!((v - (-t).exp()).abs() < 1e-15);
    }
    let neg = sup_profile(&tr.scaled(-1.0)).unwrap();
    assert!(neg.values.iter().all(|&v| v == 0.0));
    let doubled = sup_profile(&tr.scaled(2.0)).unwrap();
    for (a, b) in doubled.values.iter().zip(&p.values) {
        assert_eq!(*a, 2.0 * b);
    }
}

#[test]
fn profile_check_examples() {
    let times: Vec<f64> = (0..=200).map(|k| k as f64 * 0.05).collect();
    let exp = SupProfile::from_series(times.clone(), times.iter().map(|t| (-t).exp()).collect(), true).unwrap();
    let r = profile_checks(&exp, ProfileCheckOptions::default()).unwrap();
    assert!(r.strictly_decreasing && r.tail_to_zero);
    let flat = SupProfile::from_series(times.clone(), vec![1.0; times.len()], true).unwrap();
    assert!(!profile_checks(&flat, ProfileCheckOptions::default()).unwrap().strictly_decreasing);

    let g = line(PI / 100.0);
    let tr = eternal(&g, 1e-3).sample(&CylinderWindow::new(0.0, 20.0, 1e-3).unwrap()).unwrap();
    let p = sup_profile(&tr).unwrap();
    let ratio = p.values[p.len() - 1] / p.values[0];
    assert!(ratio <= 1.1 * (-19.0f64).exp());
}

#[test]
fn eigenpair_examples() {
    let h = PI / 100.0;
    let g = line(h);
    let p = principal_eigenpair(&heat(), &g, 1e-12).unwrap();
    let q = principal_eigenpair(&heat().with_c(e("0.75")), &g, 1e-12).unwrap();
    assert!((q.rate - p.rate - 0.75).abs() < 1e-10);
    for (a, (b, y)) in q.profile.iter().zip(p.profile.iter().zip(g.nodes())) {
        assert!((a - b).abs() < 1e-9);
        assert!((a - y[0].cos()).abs() < 1e-9);
    }
}

#[test]
fn floquet_examples() {
    let h = PI / 50.0;
    let dt = 1e-3;
    let g = line(h);
    let auto = floquet_principal(&heat(), &g, 1.0, dt, 1e-12, Scheme::ImplicitEuler).unwrap();
    let discrete = TimeModel::Discrete { scheme: Scheme::ImplicitEuler, dt }.rate(mu_h(h));
    assert!((auto.mean_rate - discrete).abs() < 1e-9);
    assert!((auto.multiplier - (-discrete).exp()).abs() < 1e-9);

    let periodic = heat().with_c(e("1 + 0.5*sin(2*pi*t)")).with_bounds(1.0, 2.0);
    let r = floquet_principal(&periodic, &g, 1.0, dt, 1e-12, Scheme::ImplicitEuler).unwrap();
    assert!((r.mean_rate - mu_h(h) - 1.0).abs() < 1e-2);
    let tr = r.solution.sample(&CylinderWindow::new(-3.0, 3.0, dt).unwrap()).unwrap();
    let rates = fit_rates(&sup_profile(&tr).unwrap(), 0.0).unwrap();
    assert!(rates.beta <= r.mean_rate + 1e-9 && r.mean_rate <= rates.alpha + 1e-9);
    assert!(rates.theta.is_finite() && rates.eta.is_finite());
}

#[test]
fn far_past_examples() {
    let g = line(PI / 50.0);
    let dt = 1e-3;
    let window = CylinderWindow::new(0.0, 2.0, dt).unwrap();
    let opts = FarPastOptions::default();
    let two_mode = FieldSlice::from_fn(&g, 0.0, |y| y[0].cos() - 0.3 * (2.0 * y[0]).sin());
    let pure = FieldSlice::from_fn(&g, 0.0, |y| y[0].cos());
    let u = far_past(&heat(), &g, &window, &two_mode, &opts).unwrap();
    let w = far_past(&heat(), &g, &window, &pure, &opts).unwrap();
    let (tu, tw) = (u.sample(&window).unwrap(), w.sample(&window).unwrap());
    let diff = tu
        .raw_values()
        .iter()
        .zip(tw.raw_values())
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    assert!(diff < 1e-8, "{diff}");

    let per_step = 1.0 / (1.0 + dt * mu_h(PI / 50.0));
    for f in w.step_factors().unwrap() {
        assert!((f - per_step).abs() < 1e-12);
    }

    let scaled = FieldSlice::new(0.0, two_mode.values.iter().map(|v| 7.5 * v).collect());
    let s = far_past(&heat(), &g, &window, &scaled, &opts).unwrap();
    let ts = s.sample(&window).unwrap();
    for (a, b) in ts.raw_values().iter().zip(tu.raw_values()) {
        assert!((a - b).abs() <= 1e-14 * b.abs().max(1.0));
    }
}

#[test]
fn max_principle_examples() {
    let h = PI / 100.0;
    let g = line(h);
    let zero = SourceSpec::zero();
    let neg = run(&g, &zero, |y| -y[0].cos(), 0.0, 2.0, 0.01);
    let r = check_max_principle(&neg, &zero, MaxPrincipleScope::QPlus).unwrap();
    assert_eq!(r.sup_u_plus, 0.0);
    assert!(r.passed);

    let f = SourceSpec::new(e("cos(y)"));
    let u = exhaustion_solve(&heat(), &f, &g, 12.0, 0.01, Scheme::ImplicitEuler)
        .unwrap()
        .restrict(0.0, 12.0)
        .unwrap();
    let r = check_max_principle(&u, &f, MaxPrincipleScope::FullQ).unwrap();
    assert!((r.sup_u_plus - 1.0).abs() < 1e-3);
    assert!((r.source_norm - PI.sqrt()).abs() < 1e-3);
    let c = r.empirical_constant.unwrap();
    assert!((c - 1.0 / PI.sqrt()).abs() < 1e-3);

    let f2 = SourceSpec::new(e("2*cos(y)"));
    let u2 = exhaustion_solve(&heat(), &f2, &g, 12.0, 0.01, Scheme::ImplicitEuler)
        .unwrap()
        .restrict(0.0, 12.0)
        .unwrap();
    let r2 = check_max_principle(&u2, &f2, MaxPrincipleScope::FullQ).unwrap();
    assert!((r2.sup_u_plus - 2.0 * r.sup_u_plus).abs() < 1e-12);
    assert!((r2.empirical_constant.unwrap() - c).abs() < 1e-12);
}

#[test]
fn qplus_examples() {
    let h = PI / 100.0;
    let g = line(h);
    let zero = SourceSpec::zero();
    let tr = run(&g, &zero, |y| y[0].cos(), 0.0, 10.0, 1e-3);
    let r = check_decay_qplus(&tr, &zero).unwrap();
    assert!((r.alpha - mu_h(h)).abs() < 1e-2);
    assert!((r.c0 - 1.0).abs() < 1e-2);
    assert_eq!(r.floor, 0.0);

    let f = SourceSpec::new(e("cos(y)"));
    let tr = run(&g, &f, |_| 0.0, 0.0, 20.0, 1e-3);
    let r = check_decay_qplus(&tr, &f).unwrap();
    assert!((r.floor - 1.0).abs() < 1e-3);
    assert!((r.alpha - 1.0).abs() < 2e-2);
}

#[test]
fn rate_examples() {
    let times: Vec<f64> = (0..=400).map(|k| -10.0 + k as f64 * 0.05).collect();
    let p = SupProfile::from_series(times.clone(), times.iter().map(|t| (-t).exp()).collect(), true).unwrap();
    let r = fit_rates(&p, 0.0).unwrap();
    assert!((r.alpha - 1.0).abs() < 1e-12 && (r.beta - 1.0).abs() < 1e-12);
    assert!((r.c - (-1.0f64).exp()).abs() < 1e-12 && (r.c_prime - 1.0f64.exp()).abs() < 1e-12);

    let times: Vec<f64> = (0..=1500).map(|k| 5.0 + k as f64 * 0.01).collect();
    let p = SupProfile::from_series(
        times.clone(),
        times.iter().map(|t| (-t).exp() + 0.3 * (-4.0 * t).exp()).collect(),
        true,
    )
    .unwrap();
    let r = fit_rates(&p, 5.0).unwrap();
    assert!((r.forward_rate.unwrap() - 1.0).abs() < 1e-3);
}

#[test]
fn comparison_examples() {
    let g = line(PI / 50.0);
    let dt = 1e-3;
    let window = CylinderWindow::new(0.0, 3.0, dt).unwrap();
    let pure = FieldSlice::from_fn(&g, 0.0, |y| y[0].cos());
    let two_mode = FieldSlice::from_fn(&g, 0.0, |y| y[0].cos() - 0.3 * (2.0 * y[0]).sin());
    let opts = FarPastOptions::default();
    let u = far_past(&heat(), &g, &window, &pure, &opts).unwrap().sample(&window).unwrap();
    let v = far_past(&heat(), &g, &window, &two_mode, &opts).unwrap().sample(&window).unwrap();
    assert!((comparison_constant(&u, &u).unwrap().c_star - 1.0).abs() < 1e-15);
    assert!(comparison_constant(&u, &v).unwrap().c_star <= 1.0 + 1e-5);

    let zero = SourceSpec::zero();
    let u = run(&g, &zero, |y| y[0].cos(), 0.0, 3.0, dt);
    let v = run(&g, &zero, |y| y[0].cos() - 0.3 * (2.0 * y[0]).sin(), 0.0, 3.0, dt);
    let c = comparison_constant(&u, &v).unwrap().c_star;
    assert!(c > 1.0 && c < 3.0, "{c}");
}

#[test]
fn contraction_examples() {
    let g = line(PI / 50.0);
    let dt = 1e-3;
    let w = eternal(&g, dt);
    let window = CylinderWindow::new(0.0, 16.0, dt).unwrap();
    let u = w.sample(&window).unwrap().scaled(2.0);
    let r = kl_contraction(&u, &w, 4, 10).unwrap();
    assert!(r.k_j.iter().chain(&r.l_j).all(|&v| (v - 2.0).abs() < 1e-12));
    assert!((r.k - 2.0).abs() < 1e-12 && r.passed);

    let wt = w.sample(&window).unwrap();
    let bump = g.sample(|y| 0.05 * y[0].cos());
    let perturbed: Vec<f64> = (0..wt.len())
        .flat_map(|k| wt.slice(k).iter().zip(&bump).map(|(a, b)| a + b).collect::<Vec<_>>())
        .collect();
    let u = EvolutionTrace::from_parts(g.clone(), 0.0, dt, perturbed, Scheme::ImplicitEuler, SourceTag::Zero).unwrap();
    let r = kl_contraction_traces(&u, &wt, 4, 10).unwrap();
    assert!(r.envelope_violations > 0 && !r.passed);
}

#[test]
fn proportionality_examples() {
    let g = line(PI / 50.0);
    let u = eternal(&g, 1e-3);
    let window = CylinderWindow::new(0.0, 2.0, 1e-3).unwrap();
    let v = u.sample(&window).unwrap().scaled(3.0);
    let r = eternal_core::verify::proportionality_traces(&u.sample(&window).unwrap(), &v).unwrap();
    assert!((r.k - 1.0 / 3.0).abs() < 1e-13 && r.spread < 1e-13, "{r:?}");
    let r = proportionality(&u, &u, &window).unwrap();
    assert!((r.k - 1.0).abs() < 1e-13);
}

#[test]
fn exhaustion_examples() {
    let h = PI / 100.0;
    let g = line(h);
    let dt = 1e-2;
    let zero = SourceSpec::zero();
    let z = exhaustion_solve(&heat(), &zero, &g, 4.0, dt, Scheme::ImplicitEuler).unwrap();
    assert!(z.raw_values().iter().all(|&v| v == 0.0));

    let f = SourceSpec::new(e("cos(y)"));
    let u = exhaustion_solve(&heat(), &f, &g, 10.0, dt, Scheme::ImplicitEuler)
        .unwrap()
        .restrict(-2.0, 2.0)
        .unwrap();
    for k in 0..u.len() {
        for (node, &v) in u.slice(k).iter().enumerate() {
            assert!((v - g.coords(node)[0].cos()).abs() < 2.0 * (-8.0f64).exp() + 1e-3);
        }
    }

    let bump = SourceSpec::new(e("cos(y) * (1 - t*t + abs(1 - t*t)) / 2"));
    let u = exhaustion_solve(&heat(), &bump, &g, 4.0, dt, Scheme::ImplicitEuler).unwrap();
    let before = u.index_of(-1.0).unwrap();
    assert!(u.raw_values()[..before * u.nodes()].iter().all(|&v| v == 0.0));
    assert!(u.raw_values().iter().any(|&v| v > 0.0));
}

#[test]
fn exhaustion_limit_scaling() {
    let g = line(PI / 50.0);
    let dt = 1e-2;
    let f = SourceSpec::new(e("cos(y)"));
    let f3 = SourceSpec::new(e("3*cos(y)"));
    let a = exhaustion_limit(&heat(), &f, &g, &[4.0, 8.0, 16.0], 2.0, dt, Scheme::ImplicitEuler).unwrap();
    let b = exhaustion_limit(&heat(), &f3, &g, &[4.0, 8.0, 16.0], 2.0, dt, Scheme::ImplicitEuler).unwrap();
    let (la, lb) = (a.limit.unwrap(), b.limit.unwrap());
    for (x, y) in la.raw_values().iter().zip(lb.raw_values()) {
        assert!((3.0 * x - y).abs() < 1e-12);
    }
    for (x, y) in a.c0_estimates.iter().zip(&b.c0_estimates) {
        assert!((x.unwrap() - y.unwrap()).abs() < 1e-12);
    }
    assert!((a.c0_estimates[2].unwrap() - 1.0 / PI.sqrt()).abs() < 1e-2);
    let q = a.differences[1] / a.differences[0];
    assert!((q / (-4.0f64).exp() - 1.0).abs() < 0.1, "{q}");
}

#[test]
fn decomposition_examples() {
    let g = line(PI / 50.0);
    let dt = 1e-2;
    let f = SourceSpec::new(e("cos(y)"));
    let u0 = exhaustion_solve(&heat(), &f, &g, 8.0, dt, Scheme::ImplicitEuler)
        .unwrap()
        .restrict(-2.0, 2.0)
        .unwrap();
    let w = eternal(&g, dt);
    let r = decompose(&synthesize(&u0, &w, 2.0).unwrap(), &u0, &w).unwrap();
    assert!((r.a - 2.0).abs() < 1e-10 && r.residual < 1e-12);
    let r = decompose(&u0, &u0, &w).unwrap();
    assert!(r.a == 0.0 && r.residual == 0.0);
}
