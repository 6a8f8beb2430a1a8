//! Heterogeneity norms of spatial profiles, transient durations and power-law
//! fits of duration against distance to a threshold.

use std::io::{self, Write};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::Params;
use crate::pde::{initial_condition, simulate, Grid, IcKind, PdeConfig};

/// Relative deviations are measured against `max(|envelope|, SCALE_FLOOR)`.
pub const SCALE_FLOOR: f64 = 1e-8;

/// Default share of the horizon used as the final window.
pub const FINAL_WINDOW_FRACTION: f64 = 0.2;

/// Spatial summary of one profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticsRow {
    pub mean_u: f64,
    pub mean_v: f64,
    pub ampl_u: f64,
    pub ampl_v: f64,
    pub grad_u: f64,
    pub grad_v: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DiagnosticsSeries {
    pub t: Vec<f64>,
    pub mean_u: Vec<f64>,
    pub mean_v: Vec<f64>,
    pub ampl_u: Vec<f64>,
    pub ampl_v: Vec<f64>,
    pub grad_u: Vec<f64>,
    pub grad_v: Vec<f64>,
}

impl DiagnosticsSeries {
    pub fn push(&mut self, t: f64, r: DiagnosticsRow) {
        self.t.push(t);
        self.mean_u.push(r.mean_u);
        self.mean_v.push(r.mean_v);
        self.ampl_u.push(r.ampl_u);
        self.ampl_v.push(r.ampl_v);
        self.grad_u.push(r.grad_u);
        self.grad_v.push(r.grad_v);
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// CSV with header `t,mean_u,mean_v,ampl_u,ampl_v,grad_u,grad_v`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,mean_u,mean_v,ampl_u,ampl_v,grad_u,grad_v")?;
        for i in 0..self.len() {
            writeln!(
                w,
                "{:.10e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                self.t[i], self.mean_u[i], self.mean_v[i], self.ampl_u[i], self.ampl_v[i], self.grad_u[i], self.grad_v[i]
            )?;
        }
        Ok(())
    }
}

fn trapezoid(values: impl Iterator<Item = f64>, n: usize, dx: f64) -> f64 {
    let mut acc = 0.0;
    for (i, y) in values.enumerate() {
        acc += if i == 0 || i == n - 1 { 0.5 * y } else { y };
    }
    acc * dx
}

fn profile_norms(f: &[f64], dx: f64) -> (f64, f64, f64) {
    let n = f.len();
    let length = dx * (n - 1) as f64;
    let mean = trapezoid(f.iter().copied(), n, dx) / length;
    let (lo, hi) = f.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &y| (a.min(y), b.max(y)));
    let slope = |i: usize| {
        if i == 0 {
            (f[1] - f[0]) / dx
        } else if i == n - 1 {
            (f[n - 1] - f[n - 2]) / dx
        } else {
            (f[i + 1] - f[i - 1]) / (2.0 * dx)
        }
    };
    let grad = trapezoid((0..n).map(|i| slope(i).powi(2)), n, dx).sqrt();
    (mean, hi - lo, grad)
}

/// Spatial average (trapezoid over `L`), `max - min`, and the `L^2` norm of
/// the gradient for both species.
pub fn diagnostics(u: &[f64], v: &[f64], grid: &Grid) -> DiagnosticsRow {
    let (mean_u, ampl_u, grad_u) = profile_norms(u, grid.dx);
    let (mean_v, ampl_v, grad_v) = profile_norms(v, grid.dx);
    DiagnosticsRow { mean_u, mean_v, ampl_u, ampl_v, grad_u, grad_v }
}

fn envelope(x: &[f64]) -> (f64, f64) {
    x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &y| (a.min(y), b.max(y)))
}

fn scale_of(env: (f64, f64)) -> f64 {
    env.0.abs().max(env.1.abs()).max(SCALE_FLOOR)
}

/// Time after which `(mean_u, ampl_u, grad_u)` stays inside its envelope over
/// the final `window` time units, up to `tol` in relative sup-norm.
///
/// For a stationary final state the envelope is a point and this compares
/// instantaneous values. For an oscillatory or irregular final state the
/// envelope is the band swept by the regime, so a trajectory counts as settled
/// once it no longer leaves that band. The run is `NotSettled` when the two
/// halves of the final window have envelopes that differ by more than `tol`.
pub fn transient_duration(series: &DiagnosticsSeries, tol: f64, window: f64) -> Result<f64> {
    if !(tol > 0.0 && window > 0.0) {
        return Err(Error::InvalidParams(format!("tol and window must be > 0, got {tol}, {window}")));
    }
    let n = series.len();
    if n < 2 {
        return Err(Error::InvalidParams("series needs at least two samples".into()));
    }
    let t = &series.t;
    let t0 = t[0];
    let t_end = t[n - 1];
    if window >= t_end - t0 {
        return Err(Error::InvalidParams(format!("window {window} is not shorter than the series span")));
    }
    let start = t.partition_point(|&s| s < t_end - window);
    let half = start + (n - start) / 2;
    let mut last = t0;
    for comp in [&series.mean_u, &series.ampl_u, &series.grad_u] {
        let fin = envelope(&comp[start..]);
        let scale = scale_of(fin);
        let (a, b) = (envelope(&comp[start..half]), envelope(&comp[half..]));
        if (a.0 - b.0).abs().max((a.1 - b.1).abs()) / scale > tol {
            return Err(Error::NotSettled { lower_bound: t_end - t0 });
        }
        if let Some(i) = (0..start).rev().find(|&i| (fin.0 - comp[i]).max(comp[i] - fin.1) / scale > tol) {
            last = last.max(t[i]);
        }
    }
    Ok(last - t0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub coefficient: f64,
    pub r2: f64,
}

impl PowerLawFit {
    /// Key-value summary with the fitted `exponent`, `coefficient` and `r2`.
    pub fn write_summary<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{{")?;
        writeln!(w, "  \"exponent\": {:.12e},", self.exponent)?;
        writeln!(w, "  \"coefficient\": {:.12e},", self.coefficient)?;
        writeln!(w, "  \"r2\": {:.12e}", self.r2)?;
        writeln!(w, "}}")
    }
}

/// Least squares line through `(ln distance, ln duration)`.
pub fn powerlaw_fit(pairs: &[(f64, f64)]) -> Result<PowerLawFit> {
    if pairs.len() < 3 {
        return Err(Error::InvalidParams(format!("need at least 3 points, got {}", pairs.len())));
    }
    if pairs.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0)) {
        return Err(Error::NonpositiveData);
    }
    let n = pairs.len() as f64;
    let xs: Vec<f64> = pairs.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParams("all distances coincide".into()));
    }
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0) };
    Ok(PowerLawFit { exponent: slope, coefficient: icpt.exp(), r2 })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransientRow {
    pub d: f64,
    pub distance: f64,
    /// Measured duration, or the horizon as a lower bound when not settled.
    pub duration: f64,
    pub settled: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransientScanConfig {
    pub length: f64,
    pub dx: f64,
    pub t_end: f64,
    /// Settling tolerance. Past the pattern onset the heterogeneous regime is
    /// irregular and its envelope wanders by about ten percent between
    /// windows, so the default sits above that.
    pub tol: f64,
    /// Final window as a fraction of `t_end`.
    pub window_fraction: f64,
}

impl Default for TransientScanConfig {
    fn default() -> Self {
        TransientScanConfig { length: 200.0, dx: 0.25, t_end: 4000.0, tol: 0.2, window_fraction: FINAL_WINDOW_FRACTION }
    }
}

/// Transient duration from the localized bump for each `d`, measured as
/// distance `d - d_ref` from the reference value. Runs are independent and
/// execute in parallel.
pub fn transient_scan(p: &Params, ds: &[f64], d_ref: f64, cfg: &TransientScanConfig) -> Result<Vec<TransientRow>> {
    let grid = Grid::with_spacing(cfg.length, cfg.dx)?;
    let ic = initial_condition(IcKind::LocalizedBump, p, &grid, 1.0, 0)?;
    ds.par_iter()
        .map(|&d| {
            let mut pc = PdeConfig::for_params(p, d, cfg.t_end);
            pc.snapshot_stride = usize::MAX;
            let res = simulate(p, &grid, &pc, &ic)?;
            let (duration, settled) = match transient_duration(&res.diagnostics, cfg.tol, cfg.window_fraction * cfg.t_end) {
                Ok(x) => (x, true),
                Err(Error::NotSettled { lower_bound }) => (lower_bound, false),
                Err(e) => return Err(e),
            };
            Ok(TransientRow { d, distance: d - d_ref, duration, settled })
        })
        .collect()
}

/// CSV with header `d,distance,duration,settled_flag`.
pub fn write_transient_csv<W: Write>(rows: &[TransientRow], mut w: W) -> io::Result<()> {
    writeln!(w, "d,distance,duration,settled_flag")?;
    for r in rows {
        writeln!(w, "{:.12e},{:.12e},{:.12e},{}", r.d, r.distance, r.duration, r.settled as u8)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn series_from(t: &[f64], f: impl Fn(f64) -> f64) -> DiagnosticsSeries {
        let mut s = DiagnosticsSeries::default();
        for &x in t {
            let y = f(x);
            s.push(x, DiagnosticsRow { mean_u: y, mean_v: 1.0, ampl_u: 0.0, ampl_v: 0.0, grad_u: 0.0, grad_v: 0.0 });
        }
        s
    }

    fn times(t_end: f64, dt: f64) -> Vec<f64> {
        (0..=(t_end / dt).round() as usize).map(|i| i as f64 * dt).collect()
    }

    #[test]
    fn homogeneous_profile() {
        let g = Grid::new(10.0, 11).unwrap();
        let r = diagnostics(&[3.0; 11], &[2.0; 11], &g);
        assert_eq!((r.ampl_u, r.grad_u, r.mean_u, r.mean_v), (0.0, 0.0, 3.0, 2.0));
    }

    #[test]
    fn sine_profile() {
        let g = Grid::with_spacing(100.0, 0.25).unwrap();
        let u: Vec<f64> = (0..g.n).map(|i| (2.0 * std::f64::consts::PI * g.x(i) / 100.0).sin()).collect();
        let r = diagnostics(&u, &u, &g);
        assert_abs_diff_eq!(r.grad_u, 0.444288, epsilon = 1e-3);
        assert_abs_diff_eq!(r.ampl_u, 2.0, epsilon = 1e-3);
    }

    #[test]
    fn ramp_profile() {
        let g = Grid::with_spacing(50.0, 0.5).unwrap();
        let u: Vec<f64> = (0..g.n).map(|i| g.x(i)).collect();
        let r = diagnostics(&u, &u, &g);
        assert_abs_diff_eq!(r.mean_u, 25.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.grad_u, 50f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn constant_series_has_no_transient() {
        let s = series_from(&times(100.0, 0.5), |_| 2.0);
        assert_eq!(transient_duration(&s, 1e-3, 20.0).unwrap(), 0.0);
    }

    #[test]
    fn exponential_decay_crossing() {
        let (tau, amp) = (5.0, 0.3);
        let s = series_from(&times(400.0, 0.01), |t| 1.0 + amp * (-t / tau).exp());
        let got = transient_duration(&s, 1e-2, 80.0).unwrap();
        assert_abs_diff_eq!(got, tau * (100.0 * amp).ln(), epsilon = 0.02);
    }

    #[test]
    fn overshoot_decaying_onto_cycle() {
        let s = series_from(&times(600.0, 0.01), |t| 1.0 + (0.5 + 2.0 * (-t / 10.0).exp()) * t.sin());
        let d = transient_duration(&s, 1e-2, 120.0).unwrap();
        // Excess amplitude 2 exp(-t/10) against the envelope scale 1.5.
        let want = 10.0 * (2.0 / 1.5e-2f64).ln();
        assert!(d <= want && d > want - 2.0 * std::f64::consts::PI, "{d} vs {want}");
    }

    #[test]
    fn smaller_tolerance_never_shortens() {
        let s = series_from(&times(300.0, 0.05), |t| 2.0 + (-t / 7.0).exp() * (1.0 + 0.3 * (3.0 * t).sin()));
        let mut prev = f64::INFINITY;
        for tol in [1e-4, 1e-3, 1e-2, 1e-1] {
            let d = transient_duration(&s, tol, 50.0).unwrap();
            assert!(d <= prev);
            prev = d;
        }
    }

    #[test]
    fn drifting_series_is_not_settled() {
        let s = series_from(&times(100.0, 0.1), |t| 1.0 + 0.01 * t);
        assert!(matches!(transient_duration(&s, 1e-3, 20.0), Err(Error::NotSettled { .. })));
    }

    #[test]
    fn power_law_recovered() {
        let pairs: Vec<(f64, f64)> = (1..=10).map(|i| (0.1 * i as f64, 7.0 * (0.1 * i as f64).powf(-1.3))).collect();
        let fit = powerlaw_fit(&pairs).unwrap();
        assert_abs_diff_eq!(fit.exponent, -1.3, epsilon = 1e-9);
        assert_abs_diff_eq!(fit.coefficient, 7.0, epsilon = 1e-8);
        assert_abs_diff_eq!(fit.r2, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn ties_in_distance_lower_r2() {
        let fit = powerlaw_fit(&[(1.0, 2.0), (1.0, 3.0), (2.0, 1.0), (4.0, 0.5)]).unwrap();
        assert!(fit.r2 < 1.0 && fit.exponent < 0.0);
    }

    #[test]
    fn nonpositive_data_rejected() {
        assert_eq!(powerlaw_fit(&[(1.0, 2.0), (0.0, 3.0), (2.0, 1.0)]), Err(Error::NonpositiveData));
    }

    #[test]
    fn scan_csv_layout() {
        let rows = [TransientRow { d: 7.0, distance: 0.44, duration: 120.0, settled: true }];
        let mut buf = Vec::new();
        write_transient_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("d,distance,duration,settled_flag\n"));
        assert!(text.trim_end().ends_with(",1"));
    }
}
