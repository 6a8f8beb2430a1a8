//! Bifurcations of the coexistence equilibrium and of limit cycles in the
//! `(delta, chi)` plane.

use std::io::{self, Write};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{coexistence, jacobian, nullclines, Params, State};
use crate::numerics::brent;
use crate::ode::{detect_cycle, integrate_with, CycleConfig, Kinetics, PlanarField};
use crate::slow_fast::fold_point;

const HOPF_TRACE_TOL: f64 = 1e-9;
const MAX_BISECTIONS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FreeParam {
    Chi,
    Delta,
}

impl FreeParam {
    pub fn apply(self, p: &Params, x: f64) -> Params {
        match self {
            FreeParam::Chi => p.with_chi(x),
            FreeParam::Delta => p.with_delta(x),
        }
    }

    pub fn value(self, p: &Params) -> f64 {
        match self {
            FreeParam::Chi => p.chi,
            FreeParam::Delta => p.delta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HopfPoint {
    pub chi: f64,
    pub delta: f64,
    pub omega: f64,
    /// `None` when the coefficient is numerically indistinguishable from zero.
    pub l1: Option<f64>,
}

fn trace_det(p: &Params) -> Result<(f64, f64)> {
    let e = coexistence(p)?;
    let j = jacobian(p, e);
    Ok((j.trace(), j.det()))
}

/// Root of `Tr J(E*) = 0` in the free parameter on `bracket`.
pub fn hopf_threshold(p: &Params, free: FreeParam, bracket: (f64, f64)) -> Result<HopfPoint> {
    let trace = |x: f64| trace_det(&free.apply(p, x)).map(|t| t.0).unwrap_or(f64::NAN);
    let x = brent(trace, bracket.0, bracket.1, 1e-14, 200)?;
    let q = free.apply(p, x);
    let (tr, det) = trace_det(&q)?;
    if !(tr.abs() < HOPF_TRACE_TOL) {
        // Sign change across a jump between equilibrium branches, not a root.
        return Err(Error::NoSignChange { lo: bracket.0, hi: bracket.1 });
    }
    if det <= 0.0 {
        return Err(Error::DetNonpositive { det });
    }
    let mut h = HopfPoint { chi: q.chi, delta: q.delta, omega: det.sqrt(), l1: None };
    h.l1 = first_lyapunov(p, &h).ok();
    Ok(h)
}

/// Derivatives of the nonlinear part in normal-form coordinates.
struct Partials {
    fxx: f64,
    fxy: f64,
    fyy: f64,
    gxx: f64,
    gxy: f64,
    gyy: f64,
    fxxx: f64,
    fxyy: f64,
    gxxy: f64,
    gyyy: f64,
}

fn partials<G: Fn(f64, f64) -> [f64; 2]>(g: &G, h: f64) -> Partials {
    let d2 = |i: usize| {
        let c = g(0.0, 0.0)[i];
        let xx = (g(h, 0.0)[i] - 2.0 * c + g(-h, 0.0)[i]) / (h * h);
        let yy = (g(0.0, h)[i] - 2.0 * c + g(0.0, -h)[i]) / (h * h);
        let xy = (g(h, h)[i] - g(h, -h)[i] - g(-h, h)[i] + g(-h, -h)[i]) / (4.0 * h * h);
        (xx, xy, yy)
    };
    let xxx = |i: usize| (g(2.0 * h, 0.0)[i] - 2.0 * g(h, 0.0)[i] + 2.0 * g(-h, 0.0)[i] - g(-2.0 * h, 0.0)[i]) / (2.0 * h.powi(3));
    let yyy = |i: usize| (g(0.0, 2.0 * h)[i] - 2.0 * g(0.0, h)[i] + 2.0 * g(0.0, -h)[i] - g(0.0, -2.0 * h)[i]) / (2.0 * h.powi(3));
    // d^3/dx dy^2 and d^3/dx^2 dy from differences of second differences.
    let xyy = |i: usize| {
        let s = |x: f64| g(x, h)[i] - 2.0 * g(x, 0.0)[i] + g(x, -h)[i];
        (s(h) - s(-h)) / (2.0 * h.powi(3))
    };
    let xxy = |i: usize| {
        let s = |y: f64| g(h, y)[i] - 2.0 * g(0.0, y)[i] + g(-h, y)[i];
        (s(h) - s(-h)) / (2.0 * h.powi(3))
    };
    let (fxx, fxy, fyy) = d2(0);
    let (gxx, gxy, gyy) = d2(1);
    Partials { fxx, fxy, fyy, gxx, gxy, gyy, fxxx: xxx(0), fxyy: xyy(0), gxxy: xxy(1), gyyy: yyy(1) }
}

fn richardson(a: Partials, b: Partials) -> Partials {
    let r = |x: f64, y: f64| (4.0 * y - x) / 3.0;
    Partials {
        fxx: r(a.fxx, b.fxx),
        fxy: r(a.fxy, b.fxy),
        fyy: r(a.fyy, b.fyy),
        gxx: r(a.gxx, b.gxx),
        gxy: r(a.gxy, b.gxy),
        gyy: r(a.gyy, b.gyy),
        fxxx: r(a.fxxx, b.fxxx),
        fxyy: r(a.fxyy, b.fxyy),
        gxxy: r(a.gxxy, b.gxxy),
        gyyy: r(a.gyyy, b.gyyy),
    }
}

/// Cubic coefficient `a` of the Hopf normal form `r' = mu r + a r^3` for a planar
/// field at an equilibrium with purely imaginary eigenvalues, using central
/// differences with relative step `rel_step`. Only the sign is coordinate-free.
pub fn lyapunov_coefficient<F: PlanarField>(field: &F, eq: [f64; 2], rel_step: f64) -> f64 {
    let j = field.jac(eq);
    let (a11, a12) = (j[0][0], j[0][1]);
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    let omega = det.max(0.0).sqrt();
    // Eigenvector q = (a12, i*omega - a11) scaled to |q|^2 = 2; T = [Re q, -Im q].
    let norm = ((a12 * a12 + a11 * a11 + omega * omega) / 2.0).sqrt();
    let t = [[a12 / norm, 0.0], [-a11 / norm, -omega / norm]];
    let t_det = t[0][0] * t[1][1] - t[0][1] * t[1][0];
    let t_inv = [[t[1][1] / t_det, -t[0][1] / t_det], [-t[1][0] / t_det, t[0][0] / t_det]];
    let g = |x: f64, y: f64| {
        let z = [eq[0] + t[0][0] * x + t[0][1] * y, eq[1] + t[1][0] * x + t[1][1] * y];
        let f = field.eval(z);
        [t_inv[0][0] * f[0] + t_inv[0][1] * f[1], t_inv[1][0] * f[0] + t_inv[1][1] * f[1]]
    };
    let scale = eq[0].abs().max(eq[1].abs()).max(1.0);
    let h = rel_step * scale;
    let d = richardson(partials(&g, h), partials(&g, 0.5 * h));
    let cubic = d.fxxx + d.fxyy + d.gxxy + d.gyyy;
    let quad = d.fxy * (d.fxx + d.fyy) - d.gxy * (d.gxx + d.gyy) - d.fxx * d.gxx + d.fyy * d.gyy;
    (cubic + quad / omega) / 16.0
}

fn raw_lyapunov(q: &Params, step: f64) -> Result<f64> {
    let e = coexistence(q)?;
    Ok(lyapunov_coefficient(&Kinetics(q), [e.u, e.v], step))
}

/// First Lyapunov coefficient at a Hopf point. Negative values mark a
/// supercritical bifurcation, positive values a subcritical one.
pub fn first_lyapunov(p: &Params, h: &HopfPoint) -> Result<f64> {
    let q = Params { chi: h.chi, delta: h.delta, ..*p };
    let coarse = raw_lyapunov(&q, 1e-4)?;
    let fine = raw_lyapunov(&q, 5e-5)?;
    if fine.abs() < 1e-8 || (coarse - fine).abs() > 0.01 * fine.abs() {
        return Err(Error::NearZero { value: fine });
    }
    Ok(fine)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveKind {
    Hopf,
    FoldCanard,
    MaximalCanard,
    Relaxation,
    Snlc,
}

impl CurveKind {
    pub fn label(self) -> &'static str {
        match self {
            CurveKind::Hopf => "hopf",
            CurveKind::FoldCanard => "fold",
            CurveKind::MaximalCanard => "maximal_canard",
            CurveKind::Relaxation => "relaxation",
            CurveKind::Snlc => "snlc",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub chi: f64,
    pub delta: f64,
    pub omega: Option<f64>,
    pub l1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveSample {
    pub kind: CurveKind,
    /// Sorted by `chi`.
    pub points: Vec<CurvePoint>,
    /// Sampled `chi` values (or `delta` values for the SNLC curve) without a point.
    pub gaps: Vec<f64>,
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// All Hopf points on a line through parameter space, found by scanning the
/// trace for sign changes.
fn hopf_roots(p: &Params, free: FreeParam, lo: f64, hi: f64, n: usize) -> Vec<HopfPoint> {
    let grid = linspace(lo, hi, n);
    let traces: Vec<f64> = grid
        .iter()
        .map(|&x| trace_det(&free.apply(p, x)).map(|t| t.0).unwrap_or(f64::NAN))
        .collect();
    let mut out = Vec::new();
    for i in 0..n - 1 {
        let (a, b) = (traces[i], traces[i + 1]);
        if a.is_finite() && b.is_finite() && a.signum() != b.signum() {
            if let Ok(h) = hopf_threshold(p, free, (grid[i], grid[i + 1])) {
                out.push(h);
            }
        }
    }
    out
}

fn hopf_delta_window(p: &Params) -> (f64, f64) {
    match fold_point(p) {
        Ok(f) => (1e-3, 1.5 * f.delta_f),
        Err(_) => (1e-3, 1.0),
    }
}

/// Hopf curve `delta_H(chi)` over `chi_range`; every root in `delta` is kept.
pub fn hopf_curve(p: &Params, chi_range: (f64, f64), n: usize) -> Result<CurveSample> {
    if n < 2 {
        return Err(Error::InvalidParams("curve needs at least 2 samples".into()));
    }
    p.validate()?;
    let chis = linspace(chi_range.0, chi_range.1, n);
    let per_chi: Vec<(f64, Vec<HopfPoint>)> = chis
        .par_iter()
        .map(|&chi| {
            let q = p.with_chi(chi);
            let (lo, hi) = hopf_delta_window(&q);
            (chi, hopf_roots(&q, FreeParam::Delta, lo, hi, 400))
        })
        .collect();
    let mut points = Vec::new();
    let mut gaps = Vec::new();
    for (chi, roots) in per_chi {
        if roots.is_empty() {
            gaps.push(chi);
        }
        points.extend(roots.into_iter().map(|h| CurvePoint { chi, delta: h.delta, omega: Some(h.omega), l1: h.l1 }));
    }
    Ok(CurveSample { kind: CurveKind::Hopf, points, gaps })
}

/// Curve of canard points `delta_f(chi)`.
pub fn fold_curve(p: &Params, chi_range: (f64, f64), n: usize) -> Result<CurveSample> {
    if n < 2 {
        return Err(Error::InvalidParams("curve needs at least 2 samples".into()));
    }
    let mut points = Vec::new();
    let mut gaps = Vec::new();
    for chi in linspace(chi_range.0, chi_range.1, n) {
        match fold_point(&p.with_chi(chi)) {
            Ok(f) => points.push(CurvePoint { chi, delta: f.delta_f, omega: None, l1: None }),
            Err(Error::NoFold { .. }) => gaps.push(chi),
            Err(e) => return Err(e),
        }
    }
    Ok(CurveSample { kind: CurveKind::FoldCanard, points, gaps })
}

/// Generalised Hopf point: the `chi` on the Hopf curve where the first
/// Lyapunov coefficient changes sign, searched on `chi_range`.
pub fn generalized_hopf(p: &Params, chi_range: (f64, f64), n: usize) -> Result<HopfPoint> {
    let l1_at = |chi: f64| -> f64 {
        let q = p.with_chi(chi);
        let (lo, hi) = hopf_delta_window(&q);
        match hopf_roots(&q, FreeParam::Delta, lo, hi, 200).first() {
            Some(h) => raw_lyapunov(&p.with_chi(chi).with_delta(h.delta), 1e-4).unwrap_or(f64::NAN),
            None => f64::NAN,
        }
    };
    let grid = linspace(chi_range.0, chi_range.1, n.max(2));
    let vals: Vec<f64> = grid.par_iter().map(|&c| l1_at(c)).collect();
    let i = (0..grid.len() - 1)
        .find(|&i| vals[i].is_finite() && vals[i + 1].is_finite() && vals[i].signum() != vals[i + 1].signum())
        .ok_or(Error::NoSignChange { lo: chi_range.0, hi: chi_range.1 })?;
    let chi = brent(l1_at, grid[i], grid[i + 1], 1e-10, 200)?;
    let q = p.with_chi(chi);
    let (lo, hi) = hopf_delta_window(&q);
    let mut h = hopf_roots(&q, FreeParam::Delta, lo, hi, 200)
        .into_iter()
        .next()
        .ok_or(Error::NoSignChange { lo, hi })?;
    h.l1 = Some(0.0);
    Ok(h)
}

/// Long-time behaviour reached from one initial condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Attractor {
    Equilibrium,
    Cycle { amplitude: f64, converged: bool },
}

impl Attractor {
    pub fn amplitude(&self) -> Option<f64> {
        match self {
            Attractor::Equilibrium => None,
            Attractor::Cycle { amplitude, .. } => Some(*amplitude),
        }
    }

    /// `Some(true)` for a converged cycle, `Some(false)` for the equilibrium,
    /// `None` while still drifting.
    pub fn settled(&self) -> Option<bool> {
        match self {
            Attractor::Equilibrium => Some(false),
            Attractor::Cycle { converged: true, .. } => Some(true),
            Attractor::Cycle { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanConfig {
    pub cycle: CycleConfig,
    /// Bisections stop once the bracket is narrower than this.
    pub resolution: f64,
    /// Relative prey offset of the initial condition near `E*`.
    pub near_offset: f64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            cycle: CycleConfig { probe_stability: false, ..CycleConfig::default() },
            resolution: 1e-9,
            near_offset: 0.02,
        }
    }
}

fn near_ic(e: State, cfg: &ScanConfig) -> State {
    State::new(e.u * (1.0 + cfg.near_offset), e.v)
}

fn far_ic(e: State) -> State {
    State::new(0.5 * e.u, 1.5 * e.v)
}

pub fn observe(p: &Params, ic: State, cycle: &CycleConfig) -> Result<Attractor> {
    match detect_cycle(p, ic, cycle) {
        Ok(est) => Ok(Attractor::Cycle { amplitude: est.amplitude(), converged: est.converged }),
        Err(Error::NoCycle { .. }) => Ok(Attractor::Equilibrium),
        Err(e) => Err(e),
    }
}

/// Attractor reached from the far-field initial condition `(u*/2, 3v*/2)`;
/// `None` if the horizon (extended once) is too short to decide.
pub fn far_field_has_cycle(p: &Params, cfg: &ScanConfig) -> Result<Option<bool>> {
    let e = coexistence(p)?;
    let mut cycle = cfg.cycle;
    for _ in 0..2 {
        match observe(p, far_ic(e), &cycle)?.settled() {
            Some(c) => return Ok(Some(c)),
            None => cycle.horizon *= 4.0,
        }
    }
    Ok(None)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanSample {
    pub value: f64,
    pub equilibrium_stable: bool,
    pub near: Attractor,
    pub far: Attractor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransitionKind {
    Explosion,
    Snlc,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub kind: TransitionKind,
    pub value: f64,
    /// Final bracket `(lo, hi)` in the free parameter.
    pub bracket: (f64, f64),
    pub bisections: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CycleScan {
    pub free: FreeParam,
    pub samples: Vec<ScanSample>,
    pub transitions: Vec<Transition>,
}

fn sample(p: &Params, cfg: &ScanConfig) -> Result<(bool, Attractor, Attractor)> {
    let e = coexistence(p)?;
    let stable = jacobian(p, e).trace() < 0.0;
    let near = observe(p, near_ic(e, cfg), &cfg.cycle)?;
    let far = observe(p, far_ic(e), &cfg.cycle)?;
    Ok((stable, near, far))
}

fn near_amplitude(p: &Params, cfg: &ScanConfig) -> Result<f64> {
    let e = coexistence(p)?;
    Ok(observe(p, near_ic(e, cfg), &cfg.cycle)?.amplitude().unwrap_or(0.0))
}

/// Cycle amplitudes along a parameter line from an initial condition near
/// `E*` and a far-field one, with the canard explosion (largest amplitude
/// ratio above 5 between adjacent cycles) and saddle-nodes of cycles (far-field
/// attractor switching between a cycle and a stable `E*`) refined by bisection.
/// The explosion is bisected on whether the amplitude exceeds the mean of the
/// two bracketing amplitudes.
pub fn cycle_scan(p: &Params, free: FreeParam, range: (f64, f64), n: usize, cfg: &ScanConfig) -> Result<CycleScan> {
    if n < 2 {
        return Err(Error::InvalidParams("scan needs at least 2 samples".into()));
    }
    let values = linspace(range.0, range.1, n);
    let samples: Vec<ScanSample> = values
        .par_iter()
        .map(|&x| {
            let (equilibrium_stable, near, far) = sample(&free.apply(p, x), cfg)?;
            Ok(ScanSample { value: x, equilibrium_stable, near, far })
        })
        .collect::<Result<_>>()?;

    let mut transitions = Vec::new();

    let mut best: Option<(usize, f64)> = None;
    for (i, w) in samples.windows(2).enumerate() {
        if let (Some(a), Some(b)) = (w[0].near.amplitude(), w[1].near.amplitude()) {
            let ratio = a.max(b) / a.min(b).max(f64::MIN_POSITIVE);
            if ratio > 5.0 && best.map_or(true, |(_, r)| ratio > r) {
                best = Some((i, ratio));
            }
        }
    }
    if let Some((i, _)) = best {
        transitions.push(bisect_explosion(p, free, &samples[i], &samples[i + 1], cfg)?);
    }

    for w in samples.windows(2) {
        if !(w[0].equilibrium_stable && w[1].equilibrium_stable) {
            continue;
        }
        if let (Some(a), Some(b)) = (w[0].far.settled(), w[1].far.settled()) {
            if a != b {
                transitions.push(bisect_snlc(p, free, (w[0].value, a), (w[1].value, b), cfg)?);
            }
        }
    }
    Ok(CycleScan { free, samples, transitions })
}

fn bisect_explosion(p: &Params, free: FreeParam, a: &ScanSample, b: &ScanSample, cfg: &ScanConfig) -> Result<Transition> {
    let (amp_a, amp_b) = (a.near.amplitude().unwrap_or(0.0), b.near.amplitude().unwrap_or(0.0));
    let threshold = 0.5 * (amp_a + amp_b);
    let (mut lo, mut hi) = (a.value, b.value);
    let lo_large = amp_a > amp_b;
    let mut bisections = 0;
    while (hi - lo).abs() > cfg.resolution && bisections < MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        let large = near_amplitude(&free.apply(p, mid), cfg)? > threshold;
        if large == lo_large {
            lo = mid;
        } else {
            hi = mid;
        }
        bisections += 1;
    }
    let (l, h) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    Ok(Transition { kind: TransitionKind::Explosion, value: 0.5 * (l + h), bracket: (l, h), bisections })
}

fn bisect_snlc(p: &Params, free: FreeParam, a: (f64, bool), b: (f64, bool), cfg: &ScanConfig) -> Result<Transition> {
    let (mut lo, mut hi) = (a.0, b.0);
    let mut bisections = 0;
    while (hi - lo).abs() > cfg.resolution && bisections < MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        match far_field_has_cycle(&free.apply(p, mid), cfg)? {
            Some(c) if c == a.1 => lo = mid,
            Some(_) => hi = mid,
            None => return Err(Error::Unresolved { resolution: (hi - lo).abs() }),
        }
        bisections += 1;
    }
    let (l, h) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    Ok(Transition { kind: TransitionKind::Snlc, value: 0.5 * (l + h), bracket: (l, h), bisections })
}

/// Shape of the cycle reached from `ic`: extent in `u` plus the relative height
/// at which the orbit passes `u = u_f / 2` moving left, measured from the
/// repelling branch (0) to the fold height (1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleShape {
    pub u_min: f64,
    pub u_max: f64,
    pub jump_height: Option<f64>,
}

pub fn cycle_shape(p: &Params, ic: State, cycle: &CycleConfig) -> Result<Option<CycleShape>> {
    let est = match detect_cycle(p, ic, cycle) {
        Ok(est) => est,
        Err(Error::NoCycle { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    let fold = fold_point(p)?;
    let probe = 0.5 * fold.u_f;
    let base = nullclines(p, probe).0;
    let mut last = None;
    let record_after = cycle.horizon - 3.0 * est.period;
    integrate_with(p, ic, (0.0, cycle.horizon), &cycle.integrator, |s| {
        if s.t1 > record_after && s.y0[0] > probe && s.y1[0] <= probe {
            if let Some(t) = s.crossing(0, probe) {
                last = Some(s.interpolate(t)[1]);
            }
        }
        true
    })?;
    Ok(Some(CycleShape {
        u_min: est.u_min,
        u_max: est.u_max,
        jump_height: last.map(|v| (v - base) / (fold.v_f - base)),
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DomainLabel {
    id: u8,
}

impl DomainLabel {
    pub fn new(id: u8) -> Result<Self> {
        if (1..=7).contains(&id) {
            Ok(DomainLabel { id })
        } else {
            Err(Error::InvalidParams(format!("domain id {id} outside 1..=7")))
        }
    }

    pub fn id(self) -> u8 {
        self.id
    }
}

/// Distance in `delta` below which a point counts as sitting on a curve.
const CURVE_PROXIMITY: f64 = 1e-9;

/// Domain of the `(delta, chi)` plane for small `eps`, decided from the
/// position relative to the fold and Hopf curves plus an attractor census.
///
/// 1. `E*` on the attracting branch (right of the fold).
/// 2. `E*` stable left of the fold, no cycle, supercritical side.
/// 3. `E*` unstable, small canard cycle without head.
/// 4. `E*` unstable, canard cycle with head.
/// 5. `E*` unstable, relaxation oscillation.
/// 6. `E*` stable left of the fold, no cycle, subcritical side.
/// 7. `E*` stable and surrounded by a stable cycle.
pub fn classify_domain(p: &Params, cfg: &ScanConfig) -> Result<DomainLabel> {
    p.validate()?;
    if p.eps > 0.1 {
        return Err(Error::InvalidParams(format!("domain picture needs eps <= 0.1, got {}", p.eps)));
    }
    let fold = fold_point(p)?;
    let e = coexistence(p)?;
    let (lo, hi) = hopf_delta_window(p);
    let hopf = hopf_roots(p, FreeParam::Delta, lo, hi, 400)
        .into_iter()
        .min_by(|a, b| (a.delta - p.delta).abs().total_cmp(&(b.delta - p.delta).abs()));
    let to_fold = p.delta - fold.delta_f;
    let to_hopf = hopf.map(|h| p.delta - h.delta);
    if to_fold.abs() < CURVE_PROXIMITY || to_hopf.map_or(false, |d| d.abs() < CURVE_PROXIMITY) {
        return Err(Error::Ambiguous(format!("delta - delta_f = {to_fold:e}, delta - delta_H = {to_hopf:?}")));
    }
    if to_fold > 0.0 {
        return DomainLabel::new(1);
    }
    let stable = jacobian(p, e).trace() < 0.0;
    if stable {
        if observe(p, far_ic(e), &cfg.cycle)?.amplitude().is_some() {
            return DomainLabel::new(7);
        }
        return match hopf.and_then(|h| h.l1) {
            Some(l1) if l1 < 0.0 => DomainLabel::new(2),
            Some(_) => DomainLabel::new(6),
            None => Err(Error::Ambiguous(format!("first Lyapunov coefficient near zero; delta - delta_f = {to_fold:e}"))),
        };
    }
    let shape = cycle_shape(p, near_ic(e, cfg), &cfg.cycle)?
        .ok_or_else(|| Error::Ambiguous("E* unstable but no cycle detected".into()))?;
    if shape.u_min > 0.01 * fold.u_f {
        return DomainLabel::new(3);
    }
    match shape.jump_height {
        Some(r) if r > 0.5 => DomainLabel::new(5),
        Some(_) => DomainLabel::new(4),
        None => Err(Error::Ambiguous("cycle has a head but no leftward passage was recorded".into())),
    }
}

/// Maximal canard curve: for every `chi`, the canard explosion located by a
/// scan of `delta` over `[delta_H - width, delta_H)`.
pub fn maximal_canard_curve(p: &Params, chis: &[f64], width: f64, n: usize, cfg: &ScanConfig) -> Result<CurveSample> {
    let found: Vec<(f64, Option<f64>)> = chis
        .iter()
        .map(|&chi| {
            let q = p.with_chi(chi);
            let (lo, hi) = hopf_delta_window(&q);
            let Some(h) = hopf_roots(&q, FreeParam::Delta, lo, hi, 400).into_iter().last() else {
                return Ok((chi, None));
            };
            let top = h.delta - 1e-3 * width;
            let scan = cycle_scan(&q, FreeParam::Delta, (h.delta - width, top), n, cfg)?;
            let ex = scan.transitions.iter().find(|t| t.kind == TransitionKind::Explosion);
            Ok((chi, ex.map(|t| t.value)))
        })
        .collect::<Result<_>>()?;
    Ok(assemble(CurveKind::MaximalCanard, found))
}

fn assemble(kind: CurveKind, found: Vec<(f64, Option<f64>)>) -> CurveSample {
    let mut points = Vec::new();
    let mut gaps = Vec::new();
    for (chi, delta) in found {
        match delta {
            Some(delta) => points.push(CurvePoint { chi, delta, omega: None, l1: None }),
            None => gaps.push(chi),
        }
    }
    points.sort_by(|a, b| a.chi.total_cmp(&b.chi));
    CurveSample { kind, points, gaps }
}

/// Saddle-node of cycles curve: for each `delta`, the `chi` above the upper
/// (subcritical) Hopf point where the outer stable cycle disappears.
pub fn snlc_curve(p: &Params, deltas: &[f64], chi_range: (f64, f64), window: f64, cfg: &ScanConfig) -> Result<CurveSample> {
    let mut points = Vec::new();
    let mut gaps = Vec::new();
    for &delta in deltas {
        let q = p.with_delta(delta);
        let upper = hopf_roots(&q, FreeParam::Chi, chi_range.0, chi_range.1, 400)
            .into_iter()
            .filter(|h| h.l1.map_or(false, |l| l > 0.0))
            .last();
        let Some(h) = upper else {
            gaps.push(delta);
            continue;
        };
        let scan = cycle_scan(&q, FreeParam::Chi, (h.chi + 1e-6, h.chi + window), 11, cfg)?;
        match scan.transitions.iter().find(|t| t.kind == TransitionKind::Snlc) {
            Some(t) => points.push(CurvePoint { chi: t.value, delta, omega: None, l1: None }),
            None => gaps.push(delta),
        }
    }
    points.sort_by(|a, b| a.chi.total_cmp(&b.chi));
    Ok(CurveSample { kind: CurveKind::Snlc, points, gaps })
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.12e}")).unwrap_or_default()
}

/// CSV with header `kind,chi,delta,omega,l1`; inapplicable fields are empty.
pub fn write_curves_csv<W: Write>(mut w: W, curves: &[CurveSample]) -> io::Result<()> {
    writeln!(w, "kind,chi,delta,omega,l1")?;
    for c in curves {
        for pt in &c.points {
            writeln!(w, "{},{:.12e},{:.12e},{},{}", c.kind.label(), pt.chi, pt.delta, opt(pt.omega), opt(pt.l1))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn hopf_thresholds_in_chi() {
        let p = Params::standard(4.0, 0.11, 1.0);
        let h1 = hopf_threshold(&p, FreeParam::Chi, (3.0, 5.0)).unwrap();
        assert_abs_diff_eq!(h1.chi, 3.96635, epsilon = 1e-4);
        assert!(h1.l1.unwrap() < 0.0);
        let h2 = hopf_threshold(&p, FreeParam::Chi, (11.0, 13.0)).unwrap();
        assert_abs_diff_eq!(h2.chi, 12.1049, epsilon = 1e-3);
        assert!(h2.l1.unwrap() > 0.0);
        for h in [h1, h2] {
            let (tr, det) = trace_det(&p.with_chi(h.chi)).unwrap();
            assert!(tr.abs() < 1e-9 && det > 0.0);
            assert_abs_diff_eq!(h.omega, det.sqrt(), epsilon = 1e-12);
        }
    }

    #[test]
    fn hopf_threshold_in_delta_slow_fast() {
        let p = Params::standard(13.0, 0.1, 0.01);
        let h = hopf_threshold(&p, FreeParam::Delta, (0.1, 0.12)).unwrap();
        assert_abs_diff_eq!(h.delta, 0.109049, epsilon = 1e-6);
    }

    #[test]
    fn hopf_threshold_without_bracket() {
        let p = Params::standard(4.0, 0.11, 1.0);
        assert!(matches!(hopf_threshold(&p, FreeParam::Chi, (5.0, 6.0)), Err(Error::NoSignChange { .. })));
    }

    /// `x' = -w y + s x r^2`, `y' = w x + s y r^2`: cubic coefficient `s`.
    struct NormalForm {
        w: f64,
        s: f64,
    }

    impl PlanarField for NormalForm {
        fn eval(&self, y: [f64; 2]) -> [f64; 2] {
            let r2 = y[0] * y[0] + y[1] * y[1];
            [-self.w * y[1] + self.s * y[0] * r2, self.w * y[0] + self.s * y[1] * r2]
        }
        fn jac(&self, _y: [f64; 2]) -> [[f64; 2]; 2] {
            [[0.0, -self.w], [self.w, 0.0]]
        }
    }

    #[test]
    fn lyapunov_coefficient_of_normal_form() {
        for (w, s) in [(1.0, -0.5), (2.0, 0.3), (0.7, 1.0)] {
            let a = lyapunov_coefficient(&NormalForm { w, s }, [0.0, 0.0], 1e-3);
            assert_abs_diff_eq!(a, s, epsilon = 1e-6);
        }
    }

    /// `x' = -y + x^2 + x y`, `y' = x`: only `f_xy (f_xx + f_yy) = 2` survives,
    /// so `a = 2 / 16`.
    #[test]
    fn lyapunov_coefficient_quadratic_terms() {
        struct Quad;
        impl PlanarField for Quad {
            fn eval(&self, y: [f64; 2]) -> [f64; 2] {
                [-y[1] + y[0] * y[0] + y[0] * y[1], y[0]]
            }
            fn jac(&self, y: [f64; 2]) -> [[f64; 2]; 2] {
                [[2.0 * y[0] + y[1], -1.0 + y[0]], [1.0, 0.0]]
            }
        }
        let a = lyapunov_coefficient(&Quad, [0.0, 0.0], 1e-3);
        assert_abs_diff_eq!(a, 0.125, epsilon = 1e-6);
    }

    #[test]
    fn step_halving_keeps_l1_sign() {
        let p = Params::standard(4.0, 0.11, 1.0);
        let h = hopf_threshold(&p, FreeParam::Chi, (3.0, 5.0)).unwrap();
        let q = p.with_chi(h.chi);
        let a = raw_lyapunov(&q, 1e-4).unwrap();
        let b = raw_lyapunov(&q, 5e-5).unwrap();
        assert!(a < 0.0 && b < 0.0 && (a - b).abs() < 0.01 * b.abs());
    }

    #[test]
    fn fold_curve_matches_closed_form() {
        let c = fold_curve(&Params::standard(6.0, 0.1, 0.01), (0.5, 6.0), 12).unwrap();
        assert_eq!(c.gaps, vec![0.5, 1.0]);
        let last = c.points.last().unwrap();
        assert_abs_diff_eq!(last.delta, 0.144577, epsilon = 1e-6);
        for pt in &c.points {
            let q = Params::standard(pt.chi, pt.delta, 0.01);
            let f = fold_point(&q).unwrap();
            let g = crate::model::reaction_rates(&q, State::new(f.u_f, f.v_f)).1;
            assert!(g.abs() < 1e-12);
        }
    }

    #[test]
    fn hopf_curve_has_two_chi_crossings_at_fixed_delta() {
        let c = hopf_curve(&Params::standard(6.0, 0.11, 1.0), (3.0, 13.0), 21).unwrap();
        assert!(c.points.len() >= 15);
        for pt in &c.points {
            let (tr, det) = trace_det(&Params::standard(pt.chi, pt.delta, 1.0)).unwrap();
            assert!(tr.abs() < 1e-9 && det > 0.0);
        }
        // delta = 0.11 is crossed twice along the sampled chi.
        let above: Vec<bool> = c.points.iter().map(|pt| pt.delta > 0.11).collect();
        let changes = above.windows(2).filter(|w| w[0] != w[1]).count();
        assert_eq!(changes, 2);
    }

    #[test]
    fn domain_label_bounds() {
        assert!(DomainLabel::new(0).is_err());
        assert!(DomainLabel::new(8).is_err());
        assert_eq!(DomainLabel::new(7).unwrap().id(), 7);
    }

    #[test]
    fn domain_one_right_of_fold() {
        let d = classify_domain(&Params::standard(6.0, 0.16, 0.01), &ScanConfig::default()).unwrap();
        assert_eq!(d.id(), 1);
    }

    #[test]
    fn domain_needs_slow_fast_regime() {
        assert!(classify_domain(&Params::standard(6.0, 0.16, 1.0), &ScanConfig::default()).is_err());
    }

    #[test]
    fn curve_csv_layout() {
        let c = fold_curve(&Params::standard(6.0, 0.1, 0.01), (2.0, 3.0), 2).unwrap();
        let mut buf = Vec::new();
        write_curves_csv(&mut buf, &[c]).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "kind,chi,delta,omega,l1");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("fold,") && lines[1].ends_with(",,"));
    }
}
