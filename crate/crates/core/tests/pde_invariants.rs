use bazykin::model::coexistence;
use bazykin::pde::{
    explicit_dt_limit, initial_condition, simulate, steady_state_detect, FieldPair, Grid, IcKind, PdeConfig, PdeScheme, SteadyState,
};
use bazykin::transients::{diagnostics, powerlaw_fit, transient_duration, DiagnosticsRow, DiagnosticsSeries};
use bazykin::{Error, Params};
use proptest::prelude::*;
use std::f64::consts::PI;

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn cosine_ic(p: &Params, grid: &Grid, n: f64) -> FieldPair {
    let e = coexistence(p).unwrap();
    let mut f = FieldPair::uniform(grid.n, e);
    for i in 0..grid.n {
        let c = (n * PI * grid.x(i) / grid.length).cos();
        f.u[i] += 0.01 * c;
        f.v[i] += 0.005 * c;
    }
    f
}

#[test]
fn equilibrium_preserved_over_long_run() {
    let p = Params::standard(6.0, 0.132, 1.0);
    let g = Grid::with_spacing(100.0, 0.25).unwrap();
    let e = coexistence(&p).unwrap();
    for d in [1.0, 10.0, 25.0] {
        let cfg = PdeConfig::for_params(&p, d, 100.0);
        let res = simulate(&p, &g, &cfg, &FieldPair::uniform(g.n, e)).unwrap();
        for s in &res.snapshots {
            assert!(s.u.iter().all(|x| (x - e.u).abs() < 1e-8) && s.v.iter().all(|x| (x - e.v).abs() < 1e-8), "d={d}");
        }
    }
}

#[test]
fn grid_refinement_is_second_order() {
    let p = Params::standard(6.0, 0.132, 1.0);
    let run = |dx: f64| {
        let g = Grid::with_spacing(100.0, dx).unwrap();
        let cfg = PdeConfig::for_params(&p, 25.0, 40.0);
        simulate(&p, &g, &cfg, &cosine_ic(&p, &g, 19.0)).unwrap().last().u.clone()
    };
    let (coarse, mid, fine) = (run(0.5), run(0.25), run(0.125));
    let e1 = max_diff(&coarse, &mid.iter().step_by(2).copied().collect::<Vec<_>>());
    let e2 = max_diff(&mid, &fine.iter().step_by(2).copied().collect::<Vec<_>>());
    let ratio = e1 / e2;
    assert!(ratio > 3.0 && ratio < 5.0, "{e1:e} / {e2:e} = {ratio}");
}

#[test]
fn imex_agrees_with_explicit_on_short_turing_run() {
    let p = Params::standard(6.0, 0.132, 1.0);
    let g = Grid::with_spacing(100.0, 0.25).unwrap();
    let ic = initial_condition(IcKind::SmallRandom, &p, &g, 1e-3, 11).unwrap();
    let imex = PdeConfig::for_params(&p, 25.0, 5.0);
    let explicit = PdeConfig { dt: 0.5 * explicit_dt_limit(&g, 25.0), scheme: PdeScheme::FullyExplicit, ..imex };
    let a = simulate(&p, &g, &imex, &ic).unwrap();
    let b = simulate(&p, &g, &explicit, &ic).unwrap();
    let err = max_diff(&a.last().u, &b.last().u).max(max_diff(&a.last().v, &b.last().v));
    assert!(err < 1e-4, "{err:e}");
}

#[test]
fn homogeneous_data_stays_homogeneous() {
    let p = Params::standard(4.5, 0.11, 1.0);
    let g = Grid::with_spacing(50.0, 0.25).unwrap();
    let ic = initial_condition(IcKind::HomogeneousOffset, &p, &g, 0.1, 0).unwrap();
    let res = simulate(&p, &g, &PdeConfig::for_params(&p, 20.0, 50.0), &ic).unwrap();
    assert!(res.diagnostics.ampl_u.iter().all(|&a| a < 1e-10));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn solutions_stay_in_invariant_box(
        chi in 3.0f64..13.0,
        delta in 0.1f64..0.2,
        d in 0.5f64..60.0,
        eps in prop::sample::select(vec![1.0, 0.1]),
        seed in 0u64..1000,
    ) {
        let p = Params::standard(chi, delta, eps);
        let g = Grid::with_spacing(20.0, 0.25).unwrap();
        let ic = match initial_condition(IcKind::SmallRandom, &p, &g, 0.3, seed) {
            Ok(f) => f,
            Err(Error::NoCoexistence) => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        let mut cfg = PdeConfig::for_params(&p, d, 30.0);
        cfg.snapshot_stride = 50;
        let res = simulate(&p, &g, &cfg, &ic).unwrap();
        let v_bar = p.predator_bound();
        for s in &res.snapshots {
            prop_assert!(s.u.iter().all(|&u| u >= -1e-6 && u <= chi + 1e-6));
            prop_assert!(s.v.iter().all(|&v| v >= -1e-6 && v <= v_bar + 1e-6));
        }
    }

    #[test]
    fn diagnostics_reflection_invariant(vals in prop::collection::vec(0.0f64..5.0, 5..60)) {
        let g = Grid::new(10.0, vals.len()).unwrap();
        let rev: Vec<f64> = vals.iter().rev().copied().collect();
        let a = diagnostics(&vals, &rev, &g);
        let b = diagnostics(&rev, &vals, &g);
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-12 * x.abs().max(1.0);
        prop_assert!(close(a.mean_u, b.mean_u) && close(a.ampl_u, b.ampl_u) && close(a.grad_u, b.grad_u));
        prop_assert!(close(a.mean_v, b.mean_v) && close(a.ampl_v, b.ampl_v) && close(a.grad_v, b.grad_v));
        prop_assert!(close(a.mean_u, b.mean_v) && close(a.grad_u, b.grad_v));
    }

    #[test]
    fn diagnostics_scale_linearly(vals in prop::collection::vec(0.0f64..5.0, 5..60), c in 0.1f64..10.0) {
        let g = Grid::new(10.0, vals.len()).unwrap();
        let scaled: Vec<f64> = vals.iter().map(|x| c * x).collect();
        let a = diagnostics(&vals, &vals, &g);
        let b = diagnostics(&scaled, &scaled, &g);
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-10 * x.abs().max(1.0);
        prop_assert!(close(c * a.mean_u, b.mean_u) && close(c * a.ampl_u, b.ampl_u) && close(c * a.grad_u, b.grad_u));
    }

    #[test]
    fn duration_monotone_in_tolerance(tau in 2.0f64..20.0, amp in 0.05f64..2.0, t1 in 1e-4f64..1e-1, t2 in 1e-4f64..1e-1) {
        let s = decay_series(tau, amp, 400.0);
        let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
        prop_assert!(transient_duration(&s, lo, 80.0).unwrap() >= transient_duration(&s, hi, 80.0).unwrap());
    }

    #[test]
    fn duration_invariant_under_joint_scaling(tau in 2.0f64..20.0, amp in 0.05f64..0.5, c in 0.2f64..5.0) {
        let a = transient_duration(&decay_series(tau, amp, 400.0), 1e-2, 80.0).unwrap();
        let b = transient_duration(&decay_series(tau, c * amp, 400.0), c * 1e-2, 80.0).unwrap();
        prop_assert!((a - b).abs() <= 0.02, "{a} vs {b}");
    }

    #[test]
    fn power_law_exponent_recovered(k in -3.0f64..-0.2, c in 0.1f64..100.0, x0 in 0.01f64..1.0) {
        let pairs: Vec<(f64, f64)> = (0..8).map(|i| { let x = x0 * 1.5f64.powi(i); (x, c * x.powf(k)) }).collect();
        let fit = powerlaw_fit(&pairs).unwrap();
        prop_assert!((fit.exponent - k).abs() < 1e-9);
        prop_assert!((fit.r2 - 1.0).abs() < 1e-9);
    }
}

fn decay_series(tau: f64, amp: f64, t_end: f64) -> DiagnosticsSeries {
    let mut s = DiagnosticsSeries::default();
    for i in 0..=(t_end / 0.01) as usize {
        let t = i as f64 * 0.01;
        let y = 1.0 + amp * (-t / tau).exp();
        s.push(t, DiagnosticsRow { mean_u: y, mean_v: 1.0, ampl_u: 1.0, ampl_v: 0.0, grad_u: 1.0, grad_v: 0.0 });
    }
    s
}

#[test]
fn unstable_focus_gives_homogeneous_oscillation() {
    let p = Params::standard(4.5, 0.11, 1.0);
    let g = Grid::with_spacing(100.0, 0.25).unwrap();
    let ic = initial_condition(IcKind::SmallRandom, &p, &g, 1e-3, 5).unwrap();
    let mut cfg = PdeConfig::for_params(&p, 20.0, 1000.0);
    cfg.snapshot_stride = 50;
    let res = simulate(&p, &g, &cfg, &ic).unwrap();
    assert_eq!(steady_state_detect(&res, 1e-4, 40), SteadyState::HomogeneousOscillatory);
}
