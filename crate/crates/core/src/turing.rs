//! Linear stability of the homogeneous coexistence state under diffusion.
//!
//! Prey diffuses with unit coefficient and predator with `d`; on `[0, L]` with
//! zero-flux ends the admissible wavenumbers are `k = n pi / L`.

use std::io::{self, Write};

use crate::bifurcation::{hopf_threshold, FreeParam};
use crate::error::{Error, Result};
use crate::model::{coexistence, jacobian, Jac2, Params};
use crate::numerics::golden_max;

/// Half-width of the window around a band edge inside which a mode is
/// reported as marginal.
pub const EDGE_WINDOW: f64 = 1e-3;

fn jac_at_coexistence(p: &Params) -> Result<Jac2> {
    Ok(jacobian(p, coexistence(p)?))
}

/// `h(k^2) = det M_k` for the linearisation at a given Jacobian.
pub fn h_of(j: &Jac2, d: f64, k2: f64) -> f64 {
    d * k2 * k2 - (j.a11 * d + j.a22) * k2 + j.a11 * j.a22 - j.a12 * j.a21
}

fn growth_of(j: &Jac2, d: f64, k2: f64) -> f64 {
    let tr = j.a11 + j.a22 - k2 * (1.0 + d);
    let h = h_of(j, d, k2);
    let disc = tr * tr - 4.0 * h;
    if disc >= 0.0 {
        0.5 * (tr + disc.sqrt())
    } else {
        0.5 * tr
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dispersion {
    pub h: f64,
    /// Real part of the eigenvalue of `M_k` with the largest real part.
    pub growth: f64,
}

pub fn dispersion(p: &Params, d: f64, k2: f64) -> Result<Dispersion> {
    if !(k2 >= 0.0 && d > 0.0) {
        return Err(Error::InvalidParams(format!("need k2 >= 0 and d > 0, got k2={k2}, d={d}")));
    }
    let j = jac_at_coexistence(p)?;
    Ok(Dispersion { h: h_of(&j, d, k2), growth: growth_of(&j, d, k2) })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuringAssessment {
    pub kc2: f64,
    pub band: (f64, f64),
    pub d_cr: f64,
    /// Modes with `r_minus < (n pi / L)^2 < r_plus`.
    pub unstable_modes: Vec<u32>,
    /// Modes whose squared wavenumber lies within [`EDGE_WINDOW`] of a band edge.
    pub marginal_modes: Vec<u32>,
    pub kmax2: f64,
    pub predicted_peaks: f64,
}

/// Band of unstable squared wavenumbers and the modes it admits on `[0, L]`.
pub fn instability_band(p: &Params, d: f64, length: f64) -> Result<TuringAssessment> {
    if !(d > 0.0 && length > 0.0) {
        return Err(Error::InvalidParams(format!("need d > 0 and L > 0, got d={d}, L={length}")));
    }
    let j = jac_at_coexistence(p)?;
    let s = d * j.a11 + j.a22;
    if !(s > 0.0) {
        return Err(Error::Infeasible(format!("d*a11 + a22 = {s:e} <= 0")));
    }
    if !(j.trace() < 0.0) {
        return Err(Error::Infeasible(format!("a11 + a22 = {:e} >= 0", j.trace())));
    }
    let det = j.det();
    let disc = s * s - 4.0 * d * det;
    if disc < 0.0 {
        return Err(Error::NoBand);
    }
    let root = disc.sqrt();
    let band = ((s - root) / (2.0 * d), (s + root) / (2.0 * d));
    let kc2 = s / (2.0 * d);
    let omega = std::f64::consts::PI / length;
    let n_max = (band.1.max(0.0).sqrt() / omega).ceil() as u32 + 1;
    let unstable_modes = (1..=n_max)
        .filter(|&n| {
            let k2 = (n as f64 * omega).powi(2);
            band.0 < k2 && k2 < band.1
        })
        .collect();
    let marginal_modes = (1..=n_max + 1)
        .filter(|&n| {
            let k2 = (n as f64 * omega).powi(2);
            (k2 - band.0).abs() < EDGE_WINDOW || (k2 - band.1).abs() < EDGE_WINDOW
        })
        .collect();
    let kmax2 = golden_max(|k2| growth_of(&j, d, k2), band.0, band.1, 1e-8);
    Ok(TuringAssessment {
        kc2,
        band,
        d_cr: critical_diffusion_of(&j)?,
        unstable_modes,
        marginal_modes,
        kmax2,
        predicted_peaks: length * kmax2.sqrt() / (2.0 * std::f64::consts::PI),
    })
}

fn critical_diffusion_of(j: &Jac2) -> Result<f64> {
    if !(j.a11 > 0.0) {
        return Err(Error::NoTuring(format!("a11 = {:e} <= 0: prey is not self-enhancing", j.a11)));
    }
    let det = j.det();
    if !(j.trace() < 0.0 && det > 0.0) {
        return Err(Error::NoTuring(format!("homogeneous state unstable (trace {:e}, det {:e})", j.trace(), det)));
    }
    // a11 s^2 - 2 sqrt(det) s + a22 = 0 with s = sqrt(d); a22 < 0 leaves one positive root.
    let s = (det.sqrt() + (det - j.a11 * j.a22).sqrt()) / j.a11;
    Ok(s * s)
}

/// Smallest predator diffusion ratio for which a band of unstable wavenumbers opens.
pub fn critical_diffusion(p: &Params) -> Result<f64> {
    critical_diffusion_of(&jac_at_coexistence(p)?)
}

/// Codimension-two point where the Turing curve meets the Hopf line `Tr J = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TuringHopf {
    pub delta: f64,
    pub d: f64,
}

/// Turing-Hopf point in the `(delta, d)` plane, with the Hopf value of `delta`
/// searched on `bracket`.
pub fn turing_hopf_point(p: &Params, bracket: (f64, f64)) -> Result<TuringHopf> {
    let h = hopf_threshold(p, FreeParam::Delta, bracket)?;
    let j = jac_at_coexistence(&p.with_delta(h.delta))?;
    if !(j.a11 > 0.0) {
        return Err(Error::NoTuring(format!("a11 = {:e} <= 0 at the Hopf point", j.a11)));
    }
    let det = j.det();
    let s = (det.sqrt() + (det - j.a11 * j.a22).sqrt()) / j.a11;
    Ok(TuringHopf { delta: h.delta, d: s * s })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeBoundary {
    pub n: u32,
    pub d: f64,
    /// Negative boundaries carry no Turing instability.
    pub feasible: bool,
}

/// Diffusion ratio `d_T(n)` at which mode `n` is neutrally stable.
pub fn mode_boundary(p: &Params, n: u32, length: f64) -> Result<ModeBoundary> {
    if n == 0 || !(length > 0.0) {
        return Err(Error::InvalidParams(format!("need n >= 1 and L > 0, got n={n}, L={length}")));
    }
    let j = jac_at_coexistence(p)?;
    let k2 = (n as f64 * std::f64::consts::PI / length).powi(2);
    let denom = k2 * (k2 - j.a11);
    if (k2 - j.a11).abs() < 1e-12 * k2.max(j.a11.abs()) {
        return Err(Error::SingularMode { n });
    }
    let d = (k2 * j.a22 - j.a11 * j.a22 + j.a12 * j.a21) / denom;
    Ok(ModeBoundary { n, d, feasible: d > 0.0 })
}

/// Mode `n >= 1` with the largest growth rate on `[0, L]`.
pub fn fastest_mode(p: &Params, d: f64, length: f64) -> Result<u32> {
    let a = instability_band(p, d, length)?;
    let j = jac_at_coexistence(p)?;
    let omega = std::f64::consts::PI / length;
    let n_max = (a.band.1.sqrt() / omega).ceil() as u32 + 1;
    (1..=n_max)
        .max_by(|&x, &y| {
            let gx = growth_of(&j, d, (x as f64 * omega).powi(2));
            let gy = growth_of(&j, d, (y as f64 * omega).powi(2));
            gx.total_cmp(&gy)
        })
        .ok_or(Error::NoBand)
}

/// One row of a Turing sweep; band quantities are `None` below threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct TuringRow {
    pub delta: f64,
    pub d: f64,
    pub eps: f64,
    pub d_cr: Option<f64>,
    pub assessment: Option<TuringAssessment>,
}

pub fn turing_row(p: &Params, d: f64, length: f64) -> TuringRow {
    TuringRow {
        delta: p.delta,
        d,
        eps: p.eps,
        d_cr: critical_diffusion(p).ok(),
        assessment: instability_band(p, d, length).ok(),
    }
}

/// CSV with header `delta,d,eps,d_cr,r_minus,r_plus,kmax2,predicted_peaks,modes`.
pub fn write_turing_csv<W: Write>(mut w: W, rows: &[TuringRow]) -> io::Result<()> {
    writeln!(w, "delta,d,eps,d_cr,r_minus,r_plus,kmax2,predicted_peaks,modes")?;
    for r in rows {
        let d_cr = r.d_cr.map(|x| format!("{x:.12e}")).unwrap_or_default();
        match &r.assessment {
            Some(a) => {
                let modes: Vec<String> = a.unstable_modes.iter().map(u32::to_string).collect();
                writeln!(
                    w,
                    "{:.12e},{:.12e},{:.12e},{},{:.12e},{:.12e},{:.12e},{:.12e},{}",
                    r.delta,
                    r.d,
                    r.eps,
                    d_cr,
                    a.band.0,
                    a.band.1,
                    a.kmax2,
                    a.predicted_peaks,
                    modes.join(";")
                )?;
            }
            None => writeln!(w, "{:.12e},{:.12e},{:.12e},{},,,,,", r.delta, r.d, r.eps, d_cr)?,
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn fig6() -> Params {
        Params::standard(6.0, 0.132, 1.0)
    }

    #[test]
    fn zero_wavenumber_reduces_to_temporal_jacobian() {
        let p = fig6();
        let j = jac_at_coexistence(&p).unwrap();
        let disp = dispersion(&p, 25.0, 0.0).unwrap();
        assert_abs_diff_eq!(disp.h, j.det(), epsilon = 1e-14);
        let ev = j.eigenvalues();
        assert_abs_diff_eq!(disp.growth, ev[0].re.max(ev[1].re), epsilon = 1e-14);
    }

    #[test]
    fn band_and_fastest_wavenumber() {
        let a = instability_band(&fig6(), 25.0, 100.0).unwrap();
        assert_abs_diff_eq!(a.band.0, 0.19970, epsilon = 1e-4);
        assert_abs_diff_eq!(a.band.1, 0.64247, epsilon = 1e-4);
        assert_abs_diff_eq!(a.kmax2, 0.35934, epsilon = 1e-4);
        assert_abs_diff_eq!(a.predicted_peaks, 9.5405, epsilon = 1e-3);
        assert_eq!(a.unstable_modes, (15..=25).collect::<Vec<_>>());
        assert!(a.band.0 <= a.kc2 && a.kc2 <= a.band.1);
    }

    #[test]
    fn second_pattern_prediction() {
        let a = instability_band(&Params::standard(6.0, 0.135, 1.0), 33.0, 100.0).unwrap();
        assert_abs_diff_eq!(a.kmax2, 0.3127, epsilon = 1e-3);
        assert_abs_diff_eq!(a.predicted_peaks, 8.9, epsilon = 0.05);
    }

    #[test]
    fn below_threshold_has_no_band() {
        let p = fig6();
        let d_cr = critical_diffusion(&p).unwrap();
        assert!(matches!(instability_band(&p, 0.99 * d_cr, 100.0), Err(Error::NoBand)));
        assert!(instability_band(&p, 1.01 * d_cr, 100.0).is_ok());
    }

    #[test]
    fn critical_diffusion_examples() {
        let d1 = critical_diffusion(&Params::standard(3.8, 0.11, 1.0)).unwrap();
        assert!((d1 - 94.26).abs() < 0.01 * 94.26, "{d1}");
        let d2 = critical_diffusion(&Params::standard(12.25, 0.11, 1.0)).unwrap();
        assert!((d2 - 6.56).abs() < 0.01 * 6.56, "{d2}");
    }

    #[test]
    fn tangency_at_critical_diffusion() {
        let p = Params::standard(3.8, 0.11, 1.0);
        let j = jac_at_coexistence(&p).unwrap();
        let d = critical_diffusion(&p).unwrap();
        let kc2 = (d * j.a11 + j.a22) / (2.0 * d);
        assert!(h_of(&j, d, kc2).abs() < 1e-9);
    }

    #[test]
    fn no_turing_without_activator() {
        // Right of the fold the prey is self-limiting at E*.
        let err = critical_diffusion(&Params::standard(6.0, 0.16, 1.0)).unwrap_err();
        assert!(matches!(err, Error::NoTuring(_)));
    }

    #[test]
    fn mode_boundaries_bracket_the_operating_point() {
        let p = fig6();
        let d14 = mode_boundary(&p, 14, 100.0).unwrap();
        let d15 = mode_boundary(&p, 15, 100.0).unwrap();
        assert!(d14.feasible && d15.feasible);
        assert!(d14.d > 25.0 && d15.d < 25.0, "{} {}", d14.d, d15.d);
        let j = jac_at_coexistence(&p).unwrap();
        for n in 5..40 {
            let b = mode_boundary(&p, n, 100.0).unwrap();
            if b.feasible {
                let k2 = (n as f64 * std::f64::consts::PI / 100.0).powi(2);
                assert!(h_of(&j, b.d, k2).abs() < 1e-10, "n={n}");
            }
        }
    }

    #[test]
    fn singular_mode_detected() {
        let p = fig6();
        let j = jac_at_coexistence(&p).unwrap();
        // Choose L so that mode 3 sits exactly on k^2 = a11.
        let length = 3.0 * std::f64::consts::PI / j.a11.sqrt();
        assert!(matches!(mode_boundary(&p, 3, length), Err(Error::SingularMode { n: 3 })));
    }

    #[test]
    fn fastest_modes_in_slow_fast_regime() {
        let p = Params::standard(6.0, 0.1432, 0.1);
        assert_eq!(fastest_mode(&p, 140.0, 100.0).unwrap(), 7);
        let p = Params::standard(6.0, 0.1437, 0.1);
        assert_eq!(fastest_mode(&p, 340.0, 100.0).unwrap(), 6);
    }

    #[test]
    fn critical_diffusion_scales_with_eps() {
        let a = critical_diffusion(&Params::standard(6.0, 0.1445, 0.1)).unwrap();
        let b = critical_diffusion(&Params::standard(6.0, 0.1445, 0.01)).unwrap();
        assert_abs_diff_eq!(b / a, 0.1, epsilon = 1e-10);
    }

    #[test]
    fn csv_layout() {
        let p = fig6();
        let rows = vec![turing_row(&p, 25.0, 100.0), turing_row(&p, 1.0, 100.0)];
        let mut buf = Vec::new();
        write_turing_csv(&mut buf, &rows).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "delta,d,eps,d_cr,r_minus,r_plus,kmax2,predicted_peaks,modes");
        assert!(lines[1].ends_with("15;16;17;18;19;20;21;22;23;24;25"));
        assert!(lines[2].ends_with(",,,,,"));
    }
}
