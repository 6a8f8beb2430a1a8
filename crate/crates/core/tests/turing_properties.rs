use bazykin::model::{coexistence, jacobian};
use bazykin::turing::{critical_diffusion, h_of, instability_band, mode_boundary, turing_hopf_point};
use bazykin::{Error, Params};
use proptest::prelude::*;

/// Turing-unstable setups: chi = 6, eps = 1, delta between the Hopf and fold values.
fn turing_params() -> impl Strategy<Value = (Params, f64)> {
    (0.1315f64..0.1435, 1.05f64..4.0).prop_map(|(delta, factor)| {
        let p = Params::standard(6.0, delta, 1.0);
        let d = factor * critical_diffusion(&p).unwrap();
        (p, d)
    })
}

proptest! {
    #[test]
    fn band_edges_are_roots_of_h((p, d) in turing_params()) {
        let j = jacobian(&p, coexistence(&p).unwrap());
        let a = instability_band(&p, d, 100.0).unwrap();
        let scale = (j.a11 * j.a22).abs() + (j.a12 * j.a21).abs();
        prop_assert!(h_of(&j, d, a.band.0).abs() < 1e-10 * scale.max(1.0));
        prop_assert!(h_of(&j, d, a.band.1).abs() < 1e-10 * scale.max(1.0));
    }

    #[test]
    fn critical_wavenumber_is_vertex_of_h((p, d) in turing_params()) {
        let j = jacobian(&p, coexistence(&p).unwrap());
        let a = instability_band(&p, d, 100.0).unwrap();
        let vertex = (j.a11 * d + j.a22) / (2.0 * d);
        prop_assert!((a.kc2 - vertex).abs() < 1e-10);
        let step = 1e-4;
        prop_assert!(h_of(&j, d, a.kc2) <= h_of(&j, d, a.kc2 + step));
        prop_assert!(h_of(&j, d, a.kc2) <= h_of(&j, d, a.kc2 - step));
        prop_assert!(a.band.0 <= a.kc2 && a.kc2 <= a.band.1);
    }

    #[test]
    fn predicted_peaks_follow_fastest_wavenumber((p, d) in turing_params(), length in 20.0f64..300.0) {
        let a = instability_band(&p, d, length).unwrap();
        let want = length * a.kmax2.sqrt() / (2.0 * std::f64::consts::PI);
        prop_assert!((a.predicted_peaks - want).abs() < 1e-12 * want.max(1.0));
    }

    #[test]
    fn critical_diffusion_is_band_threshold(delta in 0.1315f64..0.1435) {
        let p = Params::standard(6.0, delta, 1.0);
        let d_cr = critical_diffusion(&p).unwrap();
        let has_band = |d: f64| instability_band(&p, d, 100.0).is_ok();
        let (mut lo, mut hi) = (0.5 * d_cr, 2.0 * d_cr);
        prop_assert!(!has_band(lo) && has_band(hi));
        while hi - lo > 1e-9 * d_cr {
            let mid = 0.5 * (lo + hi);
            if has_band(mid) { hi = mid } else { lo = mid }
        }
        prop_assert!((hi - d_cr).abs() < 1e-6 * d_cr);
    }

    #[test]
    fn boundaries_are_neutral(delta in 0.1315f64..0.1435, n in 1u32..60) {
        let p = Params::standard(6.0, delta, 1.0);
        let j = jacobian(&p, coexistence(&p).unwrap());
        match mode_boundary(&p, n, 100.0) {
            Ok(b) if b.feasible => {
                let k2 = (n as f64 * std::f64::consts::PI / 100.0).powi(2);
                prop_assert!(h_of(&j, b.d, k2).abs() < 1e-10 * b.d.max(1.0));
            }
            Ok(_) => {}
            Err(Error::SingularMode { .. }) => {}
            Err(e) => prop_assert!(false, "{e}"),
        }
    }
}

#[test]
fn envelope_selects_a_single_mode() {
    for delta in [0.132, 0.135, 0.14] {
        let p = Params::standard(6.0, delta, 1.0);
        let boundaries: Vec<(u32, f64)> = (1..80)
            .filter_map(|n| mode_boundary(&p, n, 100.0).ok())
            .filter(|b| b.feasible)
            .map(|b| (b.n, b.d))
            .collect();
        let (n_min, d_min) = boundaries.iter().copied().min_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
        let next = boundaries.iter().filter(|b| b.0 != n_min).map(|b| b.1).fold(f64::INFINITY, f64::min);
        let d = d_min + 0.5 * (next - d_min).min(1e-3 * d_min);
        let a = instability_band(&p, d, 100.0).unwrap();
        assert_eq!(a.unstable_modes, vec![n_min], "delta={delta}");
    }
}

#[test]
fn turing_hopf_point_rises_as_eps_shrinks() {
    let mut prev = 0.0;
    for eps in [0.1, 0.05, 0.01] {
        let p = Params::standard(6.0, 0.144, eps);
        let th = turing_hopf_point(&p, (0.13, 0.1445)).unwrap();
        assert!(th.d > prev, "eps={eps}: {} <= {prev}", th.d);
        prev = th.d;
    }
}
