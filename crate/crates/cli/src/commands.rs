//! One function per scenario command. Each computes in memory, fanning sweep
//! points out with rayon, then hands its files to the artifact writer.

use std::io::{self, Write};

use rayon::prelude::*;
use serde_json::json;

use bazykin::bifurcation::{
    classify_domain, cycle_scan, fold_curve, generalized_hopf, hopf_curve, hopf_threshold, snlc_curve, CurveSample,
    FreeParam, ScanConfig, TransitionKind,
};
use bazykin::model::{coexistence, find_equilibria, nullclines};
use bazykin::ode::{integrate, CycleConfig, IntegratorConfig, Trajectory};
use bazykin::pde::{count_peaks, initial_condition, simulate, snapshot_name, steady_state_detect, Grid, IcKind, PdeConfig, PdeScheme};
use bazykin::transients::{powerlaw_fit, transient_scan, write_transient_csv, TransientScanConfig, FINAL_WINDOW_FRACTION};
use bazykin::turing::{critical_diffusion, dispersion, instability_band, mode_boundary};
use bazykin::{Error, ErrorKind, Params, State};

use crate::artifacts::Artifacts;
use crate::config::{
    CanardScanOpts, ConfigError, CurveOpts, DispersionOpts, DomainOpts, FreeParamCfg, IcCfg, Options, Scenario,
    SchemeCfg, SimulateOdeOpts, SimulatePdeOpts, TransientScanOpts, TuringCurveOpts,
};
use crate::svg::{Plot, Series};

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Core(Error),
    Io(io::Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "{e}"),
            CliError::Core(e) => match e.kind() {
                ErrorKind::Config => write!(f, "CONFIG_INVALID: {e}"),
                ErrorKind::Numerical => write!(f, "NUMERICAL_FAILURE: {e}"),
                ErrorKind::Unsettled => write!(f, "NOT_SETTLED: {e}"),
            },
            CliError::Io(e) => write!(f, "IO_ERROR: {e}"),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Core(e) => match e.kind() {
                ErrorKind::Config => 2,
                ErrorKind::Numerical => 3,
                ErrorKind::Unsettled => 4,
            },
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e)
    }
}

type Res<T> = std::result::Result<T, CliError>;

fn e12(x: f64) -> String {
    format!("{x:.12e}")
}

fn opt12(x: Option<f64>) -> String {
    x.map(e12).unwrap_or_default()
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

pub fn run(sc: &Scenario, out: &mut Artifacts) -> Res<()> {
    let p = sc.params();
    match &sc.options {
        Options::Equilibria(_) => equilibria(&p, out),
        Options::SimulateOde(o) => simulate_ode(&p, o, out),
        Options::CanardScan(o) => canard_scan(&p, o, out),
        Options::HopfCurve(o) => curves(&p, o, false, out),
        Options::FoldCurve(o) => curves(&p, o, true, out),
        Options::Domain(o) => domain(&p, o, out),
        Options::Dispersion(o) => dispersion_cmd(&p, o, out),
        Options::TuringCurve(o) => turing_curve(&p, o, out),
        Options::SimulatePde(o) => simulate_pde(&p, o, sc.seed, out),
        Options::TransientScan(o) => transient(&p, o, out),
    }
}

fn equilibria(p: &Params, out: &mut Artifacts) -> Res<()> {
    let (eqs, diag) = find_equilibria(p)?;
    out.write_with("equilibria.csv", |w| {
        writeln!(w, "kind,u,v,re1,im1,re2,im2,stability,degenerate")?;
        for e in &eqs {
            let [l1, l2] = e.eigenvalues;
            writeln!(
                w,
                "{:?},{},{},{},{},{},{},{:?},{}",
                e.kind,
                e12(e.point.u),
                e12(e.point.v),
                e12(l1.re),
                e12(l1.im),
                e12(l2.re),
                e12(l2.im),
                e.stability,
                e.degenerate as u8
            )?;
        }
        Ok(())
    })?;
    out.write_with("cubic.json", |w| {
        let v = json!({"A": diag.A, "B": diag.B, "Delta": diag.Delta});
        writeln!(w, "{}", serde_json::to_string_pretty(&v).map_err(io::Error::other)?)
    })?;
    let us = linspace(1e-3 * p.chi, p.chi, 400);
    let rows: Vec<(f64, f64, f64)> = us.iter().map(|&u| {
        let (vp, vq) = nullclines(p, u);
        (u, vp, vq)
    }).collect();
    out.write_with("nullclines.csv", |w| {
        writeln!(w, "u,v_prey,v_predator")?;
        for (u, a, b) in &rows {
            writeln!(w, "{},{},{}", e12(*u), e12(*a), e12(*b))?;
        }
        Ok(())
    })?;
    let mut plot = Plot::new("Nullclines", "u", "v")
        .with(Series::line("prey", rows.iter().map(|r| (r.0, r.1)).collect()))
        .with(Series::line("predator", rows.iter().map(|r| (r.0, r.2)).filter(|q| q.1 >= 0.0).collect()));
    plot = plot.with(Series::scatter("equilibria", eqs.iter().map(|e| (e.point.u, e.point.v)).collect()));
    out.write("nullclines.svg", plot.render().as_bytes())?;
    Ok(())
}

fn simulate_ode(p: &Params, o: &SimulateOdeOpts, out: &mut Artifacts) -> Res<()> {
    let deltas = if o.deltas.is_empty() { vec![p.delta] } else { o.deltas.clone() };
    let cfg = IntegratorConfig { rtol: o.rtol, atol: o.atol, ..IntegratorConfig::default() };
    let jobs: Vec<(f64, [f64; 2])> = deltas.iter().flat_map(|&d| o.ics.iter().map(move |&ic| (d, ic))).collect();
    let runs: Vec<Trajectory> = jobs
        .par_iter()
        .map(|&(delta, ic)| {
            let q = p.with_delta(delta);
            let e = coexistence(&q)?;
            let traj = integrate(&q, State::new(ic[0] * e.u, ic[1] * e.v), (0.0, o.t_end), &cfg)?;
            let keep = traj.times.iter().position(|&t| t >= o.t_keep).unwrap_or(0);
            Ok(Trajectory { times: traj.times[keep..].to_vec(), states: traj.states[keep..].to_vec() })
        })
        .collect::<bazykin::Result<_>>()?;
    let mut plot = Plot::new("Phase plane", "u", "v");
    for (i, ((delta, ic), traj)) in jobs.iter().zip(&runs).enumerate() {
        out.write_with(&format!("trajectory_{i:02}.csv"), |w| traj.write_csv(w))?;
        let pts = traj.states.iter().map(|s| (s.u, s.v)).collect();
        plot = plot.with(Series::line(format!("delta={delta} ic=({}, {})", ic[0], ic[1]), pts));
    }
    let u_hi = runs.iter().flat_map(|t| t.states.iter().map(|s| s.u)).fold(0.0, f64::max);
    let prey: Vec<(f64, f64)> = linspace(1e-3, u_hi.max(1e-2), 300).into_iter().map(|u| (u, nullclines(p, u).0)).collect();
    plot = plot.with(Series::line("prey nullcline", prey));
    out.write_with("runs.csv", |w| {
        writeln!(w, "index,delta,ic_u_factor,ic_v_factor,file")?;
        for (i, (delta, ic)) in jobs.iter().enumerate() {
            writeln!(w, "{i},{},{},{},trajectory_{i:02}.csv", e12(*delta), ic[0], ic[1])?;
        }
        Ok(())
    })?;
    out.write("phase_plane.svg", plot.render().as_bytes())?;
    Ok(())
}

fn scan_config(horizon: f64, resolution: f64, convergence_tol: f64) -> ScanConfig {
    let base = ScanConfig::default();
    ScanConfig { cycle: CycleConfig { horizon, convergence_tol, ..base.cycle }, resolution, ..base }
}

fn canard_scan(p: &Params, o: &CanardScanOpts, out: &mut Artifacts) -> Res<()> {
    let free = match o.free {
        FreeParamCfg::Chi => FreeParam::Chi,
        FreeParamCfg::Delta => FreeParam::Delta,
    };
    let cfg = scan_config(o.horizon, o.resolution, o.convergence_tol);
    let scan = cycle_scan(p, free, (o.range[0], o.range[1]), o.samples, &cfg)?;
    out.write_with("scan.csv", |w| {
        writeln!(w, "value,equilibrium_stable,near_amplitude,near_settled,far_amplitude,far_settled")?;
        for s in &scan.samples {
            let flag = |x: Option<bool>| x.map(|b| (b as u8).to_string()).unwrap_or_default();
            writeln!(
                w,
                "{},{},{},{},{},{}",
                e12(s.value),
                s.equilibrium_stable as u8,
                e12(s.near.amplitude().unwrap_or(0.0)),
                flag(s.near.settled()),
                e12(s.far.amplitude().unwrap_or(0.0)),
                flag(s.far.settled())
            )?;
        }
        Ok(())
    })?;
    out.write_with("transitions.csv", |w| {
        writeln!(w, "kind,value,lo,hi,bisections")?;
        for t in &scan.transitions {
            let kind = match t.kind {
                TransitionKind::Explosion => "explosion",
                TransitionKind::Snlc => "snlc",
            };
            writeln!(w, "{kind},{},{},{},{}", e12(t.value), e12(t.bracket.0), e12(t.bracket.1), t.bisections)?;
        }
        Ok(())
    })?;
    let xlabel = match free {
        FreeParam::Chi => "chi",
        FreeParam::Delta => "delta",
    };
    let near = scan.samples.iter().map(|s| (s.value, s.near.amplitude().unwrap_or(0.0))).collect();
    let far = scan.samples.iter().map(|s| (s.value, s.far.amplitude().unwrap_or(0.0))).collect();
    let plot = Plot::new("Cycle amplitude", xlabel, "u_max - u_min")
        .with(Series::line("near E*", near))
        .with(Series::scatter("far field", far));
    out.write("amplitude.svg", plot.render().as_bytes())?;
    Ok(())
}

fn write_curves(out: &mut Artifacts, rows: &[(f64, CurveSample)]) -> Res<()> {
    out.write_with("curves.csv", |w| {
        writeln!(w, "eps,kind,chi,delta,omega,l1")?;
        for (eps, c) in rows {
            for pt in &c.points {
                writeln!(w, "{},{},{},{},{},{}", e12(*eps), c.kind.label(), e12(pt.chi), e12(pt.delta), opt12(pt.omega), opt12(pt.l1))?;
            }
        }
        Ok(())
    })?;
    let mut plot = Plot::new("Bifurcation curves", "delta", "chi");
    for (eps, c) in rows {
        let pts = c.points.iter().map(|q| (q.delta, q.chi)).collect();
        plot = plot.with(Series::line(format!("{} eps={eps}", c.kind.label()), pts));
    }
    out.write("curves.svg", plot.render().as_bytes())?;
    Ok(())
}

fn curves(p: &Params, o: &CurveOpts, fold_first: bool, out: &mut Artifacts) -> Res<()> {
    let range = (o.chi_range[0], o.chi_range[1]);
    let eps = if o.eps_values.is_empty() { vec![p.eps] } else { o.eps_values.clone() };
    let mut rows = Vec::new();
    let want_fold = fold_first || o.overlay;
    let want_hopf = !fold_first || o.overlay;
    if want_fold {
        rows.push((p.eps, fold_curve(p, range, o.samples)?));
    }
    if want_hopf {
        let hopf: Vec<(f64, CurveSample)> = eps
            .par_iter()
            .map(|&e| Ok((e, hopf_curve(&p.with_eps(e), range, o.samples)?)))
            .collect::<bazykin::Result<_>>()?;
        rows.extend(hopf);
    }
    if !o.snlc_deltas.is_empty() {
        let cfg = ScanConfig::default();
        rows.push((p.eps, snlc_curve(p, &o.snlc_deltas, range, o.snlc_window, &cfg)?));
    }
    write_curves(out, &rows)?;
    if o.generalized_hopf {
        let gh = generalized_hopf(p, range, o.samples)?;
        out.write_with("generalized_hopf.json", |w| {
            let v = json!({"chi": gh.chi, "delta": gh.delta, "omega": gh.omega});
            writeln!(w, "{}", serde_json::to_string_pretty(&v).map_err(io::Error::other)?)
        })?;
    }
    Ok(())
}

fn domain(p: &Params, o: &DomainOpts, out: &mut Artifacts) -> Res<()> {
    let points = if o.points.is_empty() { vec![[p.chi, p.delta]] } else { o.points.clone() };
    let base = ScanConfig::default();
    let cfg = ScanConfig { cycle: CycleConfig { horizon: o.horizon, ..base.cycle }, ..base };
    let labels: Vec<u8> = points
        .par_iter()
        .map(|&[chi, delta]| Ok(classify_domain(&p.with_chi(chi).with_delta(delta), &cfg)?.id()))
        .collect::<bazykin::Result<_>>()?;
    out.write_with("domains.csv", |w| {
        writeln!(w, "chi,delta,domain")?;
        for (pt, id) in points.iter().zip(&labels) {
            writeln!(w, "{},{},{id}", e12(pt[0]), e12(pt[1]))?;
        }
        Ok(())
    })?;
    let mut plot = Plot::new("Domains", "delta", "chi");
    for id in 1..=7u8 {
        let pts: Vec<(f64, f64)> = points.iter().zip(&labels).filter(|(_, &l)| l == id).map(|(q, _)| (q[1], q[0])).collect();
        if !pts.is_empty() {
            plot = plot.with(Series::scatter(format!("domain {id}"), pts));
        }
    }
    out.write("domains.svg", plot.render().as_bytes())?;
    Ok(())
}

fn dispersion_cmd(p: &Params, o: &DispersionOpts, out: &mut Artifacts) -> Res<()> {
    let rows = linspace(0.0, o.k2_max, o.samples)
        .into_iter()
        .map(|k2| Ok((k2, dispersion(p, o.d, k2)?)))
        .collect::<bazykin::Result<Vec<_>>>()?;
    out.write_with("dispersion.csv", |w| {
        writeln!(w, "k2,h,growth")?;
        for (k2, r) in &rows {
            writeln!(w, "{},{},{}", e12(*k2), e12(r.h), e12(r.growth))?;
        }
        Ok(())
    })?;
    let summary = match instability_band(p, o.d, o.length) {
        Ok(a) => json!({
            "kc2": a.kc2,
            "band": [a.band.0, a.band.1],
            "d_cr": a.d_cr,
            "unstable_modes": a.unstable_modes,
            "marginal_modes": a.marginal_modes,
            "kmax2": a.kmax2,
            "predicted_peaks": a.predicted_peaks,
        }),
        Err(e) => json!({ "d_cr": critical_diffusion(p).ok(), "band": null, "reason": e.to_string() }),
    };
    out.write_with("band.json", |w| writeln!(w, "{}", serde_json::to_string_pretty(&summary).map_err(io::Error::other)?))?;
    let plot = Plot::new("Dispersion relation", "k^2", "max Re lambda")
        .with(Series::line("growth", rows.iter().map(|(k2, r)| (*k2, r.growth)).collect()))
        .with(Series::line("zero", vec![(0.0, 0.0), (o.k2_max, 0.0)]));
    out.write("dispersion.svg", plot.render().as_bytes())?;
    Ok(())
}

fn turing_curve(p: &Params, o: &TuringCurveOpts, out: &mut Artifacts) -> Res<()> {
    let deltas = linspace(o.delta_range[0], o.delta_range[1], o.samples);
    let eps = if o.eps_values.is_empty() { vec![p.eps] } else { o.eps_values.clone() };
    let crit: Vec<(f64, Vec<Option<f64>>)> = eps
        .par_iter()
        .map(|&e| (e, deltas.iter().map(|&dl| critical_diffusion(&p.with_eps(e).with_delta(dl)).ok()).collect()))
        .collect();
    out.write_with("critical.csv", |w| {
        writeln!(w, "eps,delta,d_cr")?;
        for (e, ds) in &crit {
            for (dl, d) in deltas.iter().zip(ds) {
                writeln!(w, "{},{},{}", e12(*e), e12(*dl), opt12(*d))?;
            }
        }
        Ok(())
    })?;
    let hopf: Vec<(f64, Option<f64>)> = eps
        .iter()
        .map(|&e| (e, hopf_threshold(&p.with_eps(e), FreeParam::Delta, (o.delta_range[0], o.delta_range[1])).ok().map(|h| h.delta)))
        .collect();
    out.write_with("hopf.csv", |w| {
        writeln!(w, "eps,delta_h")?;
        for (e, h) in &hopf {
            writeln!(w, "{},{}", e12(*e), opt12(*h))?;
        }
        Ok(())
    })?;
    let mut plot = Plot::new("Turing curves", "delta", "d");
    for (e, ds) in &crit {
        let pts = deltas.iter().zip(ds).map(|(&dl, d)| (dl, d.unwrap_or(f64::NAN))).collect();
        plot = plot.with(Series::line(format!("d_cr eps={e}"), pts));
    }
    if o.modes[0] > 0 {
        let modes: Vec<u32> = (o.modes[0]..=o.modes[1]).collect();
        let table: Vec<Vec<Option<f64>>> = modes
            .iter()
            .map(|&n| {
                deltas
                    .iter()
                    .map(|&dl| mode_boundary(&p.with_delta(dl), n, o.length).ok().filter(|m| m.feasible).map(|m| m.d))
                    .collect()
            })
            .collect();
        out.write_with("modes.csv", |w| {
            writeln!(w, "n,delta,d_t")?;
            for (n, row) in modes.iter().zip(&table) {
                for (dl, d) in deltas.iter().zip(row) {
                    writeln!(w, "{n},{},{}", e12(*dl), opt12(*d))?;
                }
            }
            Ok(())
        })?;
        for (n, row) in modes.iter().zip(&table) {
            let pts = deltas.iter().zip(row).map(|(&dl, d)| (dl, d.unwrap_or(f64::NAN))).collect();
            plot = plot.with(Series::line(format!("d_T({n})"), pts));
        }
    }
    out.write("turing.svg", plot.render().as_bytes())?;
    Ok(())
}

fn simulate_pde(p: &Params, o: &SimulatePdeOpts, seed: u64, out: &mut Artifacts) -> Res<()> {
    let grid = Grid::with_spacing(o.length, o.dx)?;
    let mut cfg = PdeConfig::for_params(p, o.d, o.t_end);
    if o.dt > 0.0 {
        cfg.dt = o.dt;
        cfg.diagnostics_stride = ((0.1 / o.dt).round() as usize).max(1);
    }
    cfg.snapshot_stride = ((o.snapshot_every / cfg.dt).round() as usize).max(1);
    cfg.scheme = match o.scheme {
        SchemeCfg::Imex => PdeScheme::Imex,
        SchemeCfg::Explicit => PdeScheme::FullyExplicit,
    };
    let kind = match o.ic {
        IcCfg::LocalizedBump => IcKind::LocalizedBump,
        IcCfg::SmallRandom => IcKind::SmallRandom,
        IcCfg::HomogeneousOffset => IcKind::HomogeneousOffset,
    };
    let ic = initial_condition(kind, p, &grid, o.magnitude, seed)?;
    let res = simulate(p, &grid, &cfg, &ic)?;
    for (t, f) in res.times.iter().zip(&res.snapshots) {
        out.write_with(&format!("snapshots/{}", snapshot_name(*t)), |w| f.write_csv(&grid, w))?;
    }
    out.write_with("diagnostics.csv", |w| res.diagnostics.write_csv(w))?;
    let state = steady_state_detect(&res, o.steady_tol, o.steady_window);
    let last = res.last();
    let predicted = instability_band(p, o.d, o.length).ok().map(|a| a.predicted_peaks);
    let summary = json!({
        "steady_state": format!("{state:?}"),
        "peaks": count_peaks(&last.u),
        "predicted_peaks": predicted,
        "dt": cfg.dt,
        "nodes": grid.n,
    });
    out.write_with("summary.json", |w| writeln!(w, "{}", serde_json::to_string_pretty(&summary).map_err(io::Error::other)?))?;
    let xs: Vec<f64> = (0..grid.n).map(|i| grid.x(i)).collect();
    let profile = Plot::new(&format!("Final state t={}", res.times.last().copied().unwrap_or(0.0)), "x", "density")
        .with(Series::line("u", xs.iter().copied().zip(last.u.iter().copied()).collect()))
        .with(Series::line("v", xs.iter().copied().zip(last.v.iter().copied()).collect()));
    out.write("profile.svg", profile.render().as_bytes())?;
    let d = &res.diagnostics;
    let series = Plot::new("Spatial averages", "t", "density")
        .with(Series::line("<u>", d.t.iter().copied().zip(d.mean_u.iter().copied()).collect()))
        .with(Series::line("<v>", d.t.iter().copied().zip(d.mean_v.iter().copied()).collect()));
    out.write("averages.svg", series.render().as_bytes())?;
    Ok(())
}

fn transient(p: &Params, o: &TransientScanOpts, out: &mut Artifacts) -> Res<()> {
    let ds = if o.d_values.is_empty() { linspace(o.d_range[0], o.d_range[1], o.samples) } else { o.d_values.clone() };
    let d_ref = if o.d_ref > 0.0 { o.d_ref } else { critical_diffusion(p)? };
    let cfg = TransientScanConfig { length: o.length, dx: o.dx, t_end: o.t_end, tol: o.tol, window_fraction: FINAL_WINDOW_FRACTION };
    let rows = transient_scan(p, &ds, d_ref, &cfg)?;
    out.write_with("transients.csv", |w| write_transient_csv(&rows, w))?;
    let in_fit = |d: f64| o.fit_d_range == [0.0, 0.0] || (d >= o.fit_d_range[0] && d <= o.fit_d_range[1]);
    let pairs: Vec<(f64, f64)> = rows.iter().filter(|r| r.settled && in_fit(r.d)).map(|r| (r.distance, r.duration)).collect();
    let fit = powerlaw_fit(&pairs)?;
    out.write_with("fit.txt", |w| fit.write_summary(w))?;
    let model: Vec<(f64, f64)> = pairs.iter().map(|&(x, _)| (x, fit.coefficient * x.powf(fit.exponent))).collect();
    let mut plot = Plot::new("Transient duration", "d - d_ref", "duration")
        .with(Series::scatter("settled", pairs))
        .with(Series::scatter("lower bound", rows.iter().filter(|r| !r.settled).map(|r| (r.distance, r.duration)).collect()))
        .with(Series::line(format!("fit exponent {:.3}", fit.exponent), model));
    plot.logx = true;
    plot.logy = true;
    out.write("transients.svg", plot.render().as_bytes())?;
    Ok(())
}
