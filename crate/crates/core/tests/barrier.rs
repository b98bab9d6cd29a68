use bcbf_core::barrier::{
    build_constraints, eval_h, eval_h_value, filter, relative_degree_probe, FilterSettings, FilterStatus, RowLabel,
    RowOptions,
};
use bcbf_core::flow::rk4_step;
use bcbf_core::qp::{QpSolver, QpStatus};
use bcbf_core::systems::{
    default_benchmark, di_closed_form_h, make_benchmark, BenchmarkKind, ParamMap, StateBox,
};
use bcbf_core::Vector;

fn v(x: &[f64]) -> Vector {
    Vector::from_column_slice(x)
}

fn params(pairs: &[(&str, serde_json::Value)]) -> ParamMap {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

#[test]
fn toy_rows_match_hand_expansion() {
    let b = default_benchmark(BenchmarkKind::Toy1d);
    let x = v(&[1.0]);
    let (t, n) = (1.0, 100);
    let e = eval_h(&*b.model, &*b.policy, &b.spec, &x, t, n).unwrap();
    let set = build_constraints(&*b.model, &*b.policy, &b.spec, &e, &x, &RowOptions::default()).unwrap();
    assert_eq!(set.len(), n + 2);
    for (row, label) in set.rows.iter().zip(&set.labels) {
        match *label {
            RowLabel::Path { tau_s, .. } => {
                // Phi = x e^-tau, Q = e^-tau, f_pi(Phi) = -Phi.
                let decay = (-2.0 * tau_s).exp();
                assert!((row.a[0] + 2.0 * decay).abs() < 1e-8, "a at {tau_s}");
                let b_ref = 2.0 * decay - (4.0 - decay);
                assert!((row.b - b_ref).abs() < 1e-8, "b at {tau_s}: {} vs {b_ref}", row.b);
            }
            RowLabel::Terminal => {
                assert!((row.a[0] + 2.0 * (-2.0f64).exp()).abs() < 1e-8);
                assert!((row.a[0] + 0.2707).abs() < 1e-4);
            }
        }
    }
}

#[test]
fn double_integrator_examples() {
    let b = default_benchmark(BenchmarkKind::DoubleIntegrator);
    let e = eval_h(&*b.model, &*b.policy, &b.spec, &v(&[12.0, 0.0]), 10.0, 100).unwrap();
    assert!((e.h_value + 2.0).abs() < 1e-12);

    // Braking from v = 2 stops at s = 2 after 2 s, so the terminal term is
    // zero and the path stays 8 m short of the limit. The stop is not event
    // located, so the hard-mode step straddling it leaves a small residual.
    let hard = make_benchmark(BenchmarkKind::DoubleIntegrator, &params(&[("hard", true.into())])).unwrap();
    let e = eval_h(&*hard.model, &*hard.policy, &hard.spec, &v(&[0.0, 2.0]), 10.0, 100).unwrap();
    assert!(e.h_value.abs() < 0.05, "{}", e.h_value);
    assert!(e.terminal_value.abs() < 0.05);
    assert!((e.path_min() - 8.0).abs() < 0.05);
    assert_eq!(e.argmin, RowLabel::Terminal);
    let before_stop = &e.trajectory.states[10];
    assert!((before_stop[0] - 1.5).abs() < 1e-12 && (before_stop[1] - 1.0).abs() < 1e-12);

    let smooth = eval_h(&*b.model, &*b.policy, &b.spec, &v(&[0.0, 2.0]), 10.0, 100).unwrap();
    assert!(smooth.h_value.abs() < 0.3, "{}", smooth.h_value);
    assert!((smooth.path_min() - 8.0).abs() < 0.3);
}

#[test]
fn smooth_double_integrator_agrees_with_the_closed_form_away_from_the_boundary() {
    let b = default_benchmark(BenchmarkKind::DoubleIntegrator);
    for s in [-8.0, -2.0, 0.0, 3.0, 7.0, 9.5, 11.0] {
        for vel in [-4.0, -1.0, 0.5, 1.0, 2.0, 3.0, 4.5] {
            let x = v(&[s, vel]);
            let oracle = di_closed_form_h(&x, 10.0, 1.0);
            if oracle.abs() < 0.5 {
                continue;
            }
            let h = eval_h_value(&*b.model, &*b.policy, &b.spec, &x, 10.0, 100).unwrap().h_value;
            assert_eq!(h >= 0.0, oracle >= 0.0, "({s}, {vel}): h {h}, oracle {oracle}");
        }
    }
}

#[test]
fn states_only_evaluation_matches_full_evaluation() {
    for kind in BenchmarkKind::ALL {
        let b = default_benchmark(kind);
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(3);
        for _ in 0..20 {
            let x = b.sample_box.sample(&mut rng);
            let t = b.default_horizon_s;
            let full = eval_h(&*b.model, &*b.policy, &b.spec, &x, t, 100).unwrap();
            let lean = eval_h_value(&*b.model, &*b.policy, &b.spec, &x, t, 100).unwrap();
            assert_eq!(full.h_value, lean.h_value);
            assert_eq!(full.argmin, lean.argmin);
        }
    }
}

#[test]
fn filter_examples() {
    let toy = default_benchmark(BenchmarkKind::Toy1d);
    let settings = FilterSettings::new(1.0, 100);
    let mut solver = QpSolver::new();

    let x = v(&[0.1]);
    let u0 = toy.policy.eval(&x);
    let (u, d) = filter(&*toy.model, &*toy.policy, &toy.spec, &x, &u0, &settings, &mut solver).unwrap();
    assert_eq!(u, u0);
    assert!(d.active_rows.is_empty());
    assert_eq!(d.status, FilterStatus::Optimal);

    // At x = 1 the row at tau reads -2 e^{-2 tau} (u + 1) >= -gamma (4 - e^{-2 tau}),
    // tightest at tau = 0: u <= -1 + 1.5 gamma.
    let (u, d) = filter(&*toy.model, &*toy.policy, &toy.spec, &v(&[1.0]), &v(&[10.0]), &settings, &mut solver).unwrap();
    assert!((u[0] - 0.5).abs() < 1e-9, "{u}");
    assert_eq!(d.qp_status, QpStatus::Optimal);
    assert!(d.active_rows.contains(&RowLabel::Path {
        constraint: 0,
        step: 0,
        tau_s: 0.0
    }));

    // With gamma = 5 every row admits u = 5 and only the box binds.
    let mut steep = toy.spec.clone();
    steep.set_gamma(5.0).unwrap();
    let (u, d) = filter(&*toy.model, &*toy.policy, &steep, &v(&[1.0]), &v(&[10.0]), &settings, &mut solver).unwrap();
    assert_eq!(u[0], 5.0);
    assert!(d.active_rows.is_empty());
    assert_eq!(d.active_bounds.len(), 1);

    let di = default_benchmark(BenchmarkKind::DoubleIntegrator);
    let settings = FilterSettings::new(10.0, 100);
    let x = v(&[8.0, 2.0]);
    let (u, d) = filter(&*di.model, &*di.policy, &di.spec, &x, &v(&[1.0]), &settings, &mut solver).unwrap();
    assert!((u[0] + 1.0).abs() < 1e-6, "u = {u}, h = {}", d.h_value);
    assert_eq!(d.qp_status, QpStatus::Optimal);
}

#[test]
fn relative_degree_examples() {
    let toy = default_benchmark(BenchmarkKind::Toy1d);
    let inside = StateBox::new(vec![0.5], vec![2.0]);
    let f = relative_degree_probe(&*toy.model, &*toy.policy, &toy.spec, &inside, 200, 1.0, 100, 1).unwrap();
    assert_eq!(f, 1.0);
    let origin = StateBox::new(vec![0.0], vec![0.0]);
    let f = relative_degree_probe(&*toy.model, &*toy.policy, &toy.spec, &origin, 3, 1.0, 100, 1).unwrap();
    assert_eq!(f, 0.0);
    let dub = default_benchmark(BenchmarkKind::Dubins);
    let f = relative_degree_probe(&*dub.model, &*dub.policy, &dub.spec, &dub.sample_box, 200, dub.default_horizon_s, 100, 5).unwrap();
    assert!(f >= 0.95, "{f}");
}

#[test]
fn filtered_trajectories_satisfy_the_sampled_barrier_condition() {
    // Consecutive samples of h obey dh/dt + gamma h >= -O(dt).
    let b = default_benchmark(BenchmarkKind::Dubins);
    let settings = FilterSettings::new(b.default_horizon_s, 100);
    let mut solver = QpSolver::new();
    let dt = 0.02;
    let mut x = v(&[0.5, 8.0, 0.2]);
    let u_nominal = v(&[2.0, 1.0]);
    let mut prev: Option<f64> = None;
    let mut worst = f64::INFINITY;
    for _ in 0..150 {
        let (u, d) = filter(&*b.model, &*b.policy, &b.spec, &x, &u_nominal, &settings, &mut solver).unwrap();
        if let Some(h0) = prev {
            worst = worst.min((d.h_value - h0) / dt + b.spec.alpha(h0));
        }
        prev = Some(d.h_value);
        assert!(d.h_value >= -1e-3, "h = {}", d.h_value);
        x = rk4_step(|y| Ok(b.model.dynamics(y, &u)), &x, dt).unwrap();
    }
    assert!(worst >= -0.5, "worst sampled condition {worst}");
}
