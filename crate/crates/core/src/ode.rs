//! Adaptive time integration of the temporal system and limit-cycle detection.
//!
//! The default scheme is the Dormand-Prince 5(4) pair. When more than half of
//! the recent step attempts are rejected, or the step size stays pinned at the
//! explicit stability boundary, the solver treats the problem as stiff and
//! continues with an L-stable Rosenbrock 2(3) rule (the modified
//! Rosenbrock pair of Shampine and Reichelt) using the analytic Jacobian.

use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::model::{coexistence, jacobian, reaction_rates, Params, State};

/// A planar autonomous vector field with an analytic Jacobian.
pub trait PlanarField {
    fn eval(&self, y: [f64; 2]) -> [f64; 2];
    fn jac(&self, y: [f64; 2]) -> [[f64; 2]; 2];
}

/// The Bazykin vector field `(f, eps*g)`.
#[derive(Debug, Clone, Copy)]
pub struct Kinetics<'a>(pub &'a Params);

impl PlanarField for Kinetics<'_> {
    fn eval(&self, y: [f64; 2]) -> [f64; 2] {
        let (f, g) = reaction_rates(self.0, State::new(y[0], y[1]));
        [f, self.0.eps * g]
    }

    fn jac(&self, y: [f64; 2]) -> [[f64; 2]; 2] {
        let j = jacobian(self.0, State::new(y[0], y[1]));
        [[j.a11, j.a12], [j.a21, j.a22]]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Dormand-Prince 5(4) with automatic switching to the implicit rule.
    ExplicitAdaptive,
    /// Rosenbrock 2(3) throughout.
    ImplicitAdaptive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub rtol: f64,
    pub atol: f64,
    pub dt_max: f64,
    pub scheme: Scheme,
    /// Reflect components that step below zero. Densities near an invariant
    /// axis are exponentially small and otherwise drift negative.
    pub nonnegative: bool,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig { rtol: 1e-8, atol: 1e-10, dt_max: 1.0, scheme: Scheme::ExplicitAdaptive, nonnegative: true }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rtol > 0.0 && self.atol > 0.0 && self.dt_max > 0.0) {
            return Err(Error::InvalidParams("rtol, atol and dt_max must be > 0".into()));
        }
        Ok(())
    }
}

/// One accepted step, with enough data for cubic Hermite dense output.
#[derive(Debug, Clone, Copy)]
pub struct StepInfo {
    pub t0: f64,
    pub y0: [f64; 2],
    pub f0: [f64; 2],
    pub t1: f64,
    pub y1: [f64; 2],
    pub f1: [f64; 2],
}

impl StepInfo {
    pub fn interpolate(&self, t: f64) -> [f64; 2] {
        let h = self.t1 - self.t0;
        let s = (t - self.t0) / h;
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        let mut out = [0.0; 2];
        for i in 0..2 {
            out[i] = h00 * self.y0[i] + h10 * h * self.f0[i] + h01 * self.y1[i] + h11 * h * self.f1[i];
        }
        out
    }

    /// Time in `[t0, t1]` where component `i` crosses `level`, by bisection on the
    /// Hermite interpolant. Returns `None` if the endpoints do not bracket it.
    pub fn crossing(&self, i: usize, level: f64) -> Option<f64> {
        let a = self.y0[i] - level;
        let b = self.y1[i] - level;
        if a == 0.0 {
            return Some(self.t0);
        }
        if a.signum() == b.signum() {
            return None;
        }
        let (mut lo, mut hi) = (self.t0, self.t1);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            let m = self.interpolate(mid)[i] - level;
            if m.signum() == a.signum() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(0.5 * (lo + hi))
    }
}

// Autonomous fields only, so the stage abscissae are not needed.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn axpy(y: [f64; 2], terms: &[(f64, [f64; 2])], h: f64) -> [f64; 2] {
    let mut out = y;
    for (c, k) in terms {
        out[0] += h * c * k[0];
        out[1] += h * c * k[1];
    }
    out
}

fn solve2(m: [[f64; 2]; 2], b: [f64; 2]) -> [f64; 2] {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    [(b[0] * m[1][1] - m[0][1] * b[1]) / det, (m[0][0] * b[1] - m[1][0] * b[0]) / det]
}

/// Adaptive integrator state for a planar field.
pub struct Solver<'a, F: PlanarField> {
    field: &'a F,
    cfg: IntegratorConfig,
    t: f64,
    y: [f64; 2],
    fy: [f64; 2],
    h: f64,
    stiff: bool,
    attempts: u32,
    rejections: u32,
    calm_steps: u32,
    boundary_steps: u32,
}

impl<'a, F: PlanarField> Solver<'a, F> {
    pub fn new(field: &'a F, t0: f64, y0: [f64; 2], cfg: IntegratorConfig) -> Result<Self> {
        cfg.validate()?;
        let fy = field.eval(y0);
        let scale = |i: usize| cfg.atol + cfg.rtol * y0[i].abs();
        let d0 = ((y0[0] / scale(0)).powi(2) + (y0[1] / scale(1)).powi(2)).sqrt();
        let d1 = ((fy[0] / scale(0)).powi(2) + (fy[1] / scale(1)).powi(2)).sqrt();
        let h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        Ok(Solver {
            field,
            cfg,
            t: t0,
            y: y0,
            fy,
            h: h.min(cfg.dt_max).max(1e-10),
            stiff: cfg.scheme == Scheme::ImplicitAdaptive,
            attempts: 0,
            rejections: 0,
            calm_steps: 0,
            boundary_steps: 0,
        })
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn state(&self) -> [f64; 2] {
        self.y
    }

    fn err_norm(&self, y1: &[f64; 2], err: &[f64; 2]) -> f64 {
        let mut acc = 0.0;
        for i in 0..2 {
            let sc = self.cfg.atol + self.cfg.rtol * self.y[i].abs().max(y1[i].abs());
            acc += (err[i] / sc).powi(2);
        }
        (acc / 2.0).sqrt()
    }

    fn dopri(&self, h: f64) -> ([f64; 2], [f64; 2], [f64; 2]) {
        let f = self.field;
        let y = self.y;
        let k1 = self.fy;
        let k2 = f.eval(axpy(y, &[(A21, k1)], h));
        let k3 = f.eval(axpy(y, &[(A31, k1), (A32, k2)], h));
        let k4 = f.eval(axpy(y, &[(A41, k1), (A42, k2), (A43, k3)], h));
        let k5 = f.eval(axpy(y, &[(A51, k1), (A52, k2), (A53, k3), (A54, k4)], h));
        let k6 = f.eval(axpy(y, &[(A61, k1), (A62, k2), (A63, k3), (A64, k4), (A65, k5)], h));
        let y1 = axpy(y, &[(B1, k1), (B3, k3), (B4, k4), (B5, k5), (B6, k6)], h);
        let k7 = f.eval(y1);
        let mut err = [0.0; 2];
        for i in 0..2 {
            err[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }
        (y1, k7, err)
    }

    fn rosenbrock(&self, h: f64) -> ([f64; 2], [f64; 2], [f64; 2]) {
        let d = 1.0 / (2.0 + std::f64::consts::SQRT_2);
        let e32 = 6.0 + std::f64::consts::SQRT_2;
        let f = self.field;
        let j = f.jac(self.y);
        let w = [[1.0 - h * d * j[0][0], -h * d * j[0][1]], [-h * d * j[1][0], 1.0 - h * d * j[1][1]]];
        let f0 = self.fy;
        let k1 = solve2(w, f0);
        let f1 = f.eval(axpy(self.y, &[(0.5, k1)], h));
        let r = solve2(w, [f1[0] - k1[0], f1[1] - k1[1]]);
        let k2 = [r[0] + k1[0], r[1] + k1[1]];
        let y1 = axpy(self.y, &[(1.0, k2)], h);
        let f2 = f.eval(y1);
        let rhs = [
            f2[0] - e32 * (k2[0] - f1[0]) - 2.0 * (k1[0] - f0[0]),
            f2[1] - e32 * (k2[1] - f1[1]) - 2.0 * (k1[1] - f0[1]),
        ];
        let k3 = solve2(w, rhs);
        let err = [h / 6.0 * (k1[0] - 2.0 * k2[0] + k3[0]), h / 6.0 * (k1[1] - 2.0 * k2[1] + k3[1])];
        (y1, f2, err)
    }

    fn spectral_radius(&self) -> f64 {
        let j = self.field.jac(self.y);
        let tr = j[0][0] + j[1][1];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        let disc = 0.25 * tr * tr - det;
        if disc >= 0.0 {
            (0.5 * tr).abs() + disc.sqrt()
        } else {
            det.abs().sqrt()
        }
    }

    /// Advance by one accepted step not beyond `t_stop`.
    pub fn step(&mut self, t_stop: f64) -> Result<StepInfo> {
        loop {
            let h = self.h.min(self.cfg.dt_max).min(t_stop - self.t);
            if h < 1e-14 {
                return Err(Error::StepUnderflow { t: self.t });
            }
            let (mut y1, mut f1, err) = if self.stiff { self.rosenbrock(h) } else { self.dopri(h) };
            let en = self.err_norm(&y1, &err);
            let order = if self.stiff { 3.0 } else { 5.0 };
            self.attempts += 1;
            if en <= 1.0 && y1.iter().chain(f1.iter()).all(|x| x.is_finite()) {
                let fac = if en == 0.0 { 5.0 } else { (0.9 * en.powf(-1.0 / order)).clamp(0.2, 5.0) };
                if self.cfg.nonnegative && y1.iter().any(|&x| x < 0.0) {
                    y1 = y1.map(f64::abs);
                    f1 = self.field.eval(y1);
                }
                let info = StepInfo { t0: self.t, y0: self.y, f0: self.fy, t1: self.t + h, y1, f1 };
                self.t = if t_stop - (self.t + h) < 1e-14 * t_stop.abs().max(1.0) { t_stop } else { self.t + h };
                self.y = y1;
                self.fy = f1;
                self.h = h * fac;
                self.update_mode(h);
                return Ok(info);
            }
            self.rejections += 1;
            let fac = if en.is_finite() { (0.9 * en.powf(-1.0 / order)).clamp(0.1, 0.9) } else { 0.1 };
            self.h = h * fac;
            self.update_mode(h);
        }
    }

    fn update_mode(&mut self, h: f64) {
        if self.cfg.scheme == Scheme::ImplicitAdaptive {
            return;
        }
        if !self.stiff {
            // Steps pinned at the explicit stability boundary also count as stiff.
            if h * self.spectral_radius() > 3.0 {
                self.boundary_steps += 1;
            } else {
                self.boundary_steps = 0;
            }
            if self.boundary_steps >= 15 {
                self.stiff = true;
                self.calm_steps = 0;
                self.boundary_steps = 0;
            }
            if self.attempts >= 20 {
                if 2 * self.rejections > self.attempts {
                    self.stiff = true;
                    self.calm_steps = 0;
                }
                self.attempts = 0;
                self.rejections = 0;
            }
        } else {
            // Explicit stability region of DOPRI5 reaches about 3.3 on the real axis.
            if h * self.spectral_radius() < 2.0 {
                self.calm_steps += 1;
            } else {
                self.calm_steps = 0;
            }
            if self.calm_steps >= 50 {
                self.stiff = false;
                self.attempts = 0;
                self.rejections = 0;
            }
        }
    }
}

/// An integrated trajectory sampled at every accepted step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<State>,
}

impl Trajectory {
    pub fn last(&self) -> Option<State> {
        self.states.last().copied()
    }

    /// CSV with header `t,u,v` and 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,u,v")?;
        for (t, s) in self.times.iter().zip(&self.states) {
            writeln!(w, "{:.16e},{:.16e},{:.16e}", t, s.u, s.v)?;
        }
        Ok(())
    }
}

struct BoundsGuard {
    u_max: f64,
    v_max: f64,
    slack: f64,
}

impl BoundsGuard {
    fn new(p: &Params, ic: State) -> Self {
        BoundsGuard { u_max: p.chi.max(ic.u), v_max: p.predator_bound().max(ic.v), slack: 1e-6 }
    }

    fn check(&self, t: f64, y: [f64; 2]) -> Result<()> {
        let [u, v] = y;
        if !(u >= -self.slack && v >= -self.slack && u <= self.u_max + self.slack && v <= self.v_max + self.slack) {
            return Err(Error::BoundViolation { t, what: format!("state ({u}, {v}) left the invariant box") });
        }
        Ok(())
    }
}

fn check_ic(ic: State, t_span: (f64, f64)) -> Result<()> {
    if !(ic.u >= 0.0 && ic.v >= 0.0) {
        return Err(Error::InvalidParams(format!("initial state must be non-negative, got ({}, {})", ic.u, ic.v)));
    }
    if !(t_span.0.is_finite() && t_span.1.is_finite() && t_span.1 > t_span.0) {
        return Err(Error::InvalidParams("time span must be finite and increasing".into()));
    }
    Ok(())
}

/// Integrate the temporal system and call `observer` after every accepted step.
/// The observer returns `false` to stop early. Returns the final time and state.
pub fn integrate_with<O>(p: &Params, ic: State, t_span: (f64, f64), cfg: &IntegratorConfig, mut observer: O) -> Result<(f64, State)>
where
    O: FnMut(&StepInfo) -> bool,
{
    p.validate()?;
    check_ic(ic, t_span)?;
    let field = Kinetics(p);
    let guard = BoundsGuard::new(p, ic);
    let mut solver = Solver::new(&field, t_span.0, [ic.u, ic.v], *cfg)?;
    while solver.time() < t_span.1 {
        let info = solver.step(t_span.1)?;
        guard.check(info.t1, info.y1)?;
        if !observer(&info) {
            break;
        }
    }
    let y = solver.state();
    Ok((solver.time(), State::new(y[0], y[1])))
}

/// Integrate the temporal system, storing every accepted step.
pub fn integrate(p: &Params, ic: State, t_span: (f64, f64), cfg: &IntegratorConfig) -> Result<Trajectory> {
    let mut traj = Trajectory { times: vec![t_span.0], states: vec![ic] };
    integrate_with(p, ic, t_span, cfg, |s| {
        traj.times.push(s.t1);
        traj.states.push(State::new(s.y1[0], s.y1[1]));
        true
    })?;
    Ok(traj)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CycleStability {
    Attracting,
    Repelling,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleEstimate {
    pub period: f64,
    pub u_min: f64,
    pub u_max: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub converged: bool,
    pub stability: CycleStability,
}

impl CycleEstimate {
    pub fn amplitude(&self) -> f64 {
        self.u_max - self.u_min
    }
}

/// Settings for [`detect_cycle`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleConfig {
    pub horizon: f64,
    /// Fraction of the horizon discarded before measuring.
    pub burn_in: f64,
    /// Relative agreement required of the last three periods and amplitudes.
    pub convergence_tol: f64,
    /// Revolutions whose prey amplitude falls below this are treated as a
    /// collapse onto the equilibrium.
    pub collapse_amplitude: f64,
    pub probe_stability: bool,
    pub integrator: IntegratorConfig,
}

impl Default for CycleConfig {
    fn default() -> Self {
        CycleConfig {
            horizon: 2000.0,
            burn_in: 0.5,
            convergence_tol: 1e-3,
            collapse_amplitude: 1e-5,
            probe_stability: true,
            integrator: IntegratorConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Revolution {
    t_end: f64,
    v_cross: f64,
    u_min: f64,
    u_max: f64,
    v_min: f64,
    v_max: f64,
}

/// Records revolutions delimited by downward crossings of `u = u*` with `v > v*`.
struct SectionRecorder {
    anchor: State,
    start_after: f64,
    last_cross: Option<(f64, f64)>,
    bounds: [f64; 4],
    revolutions: Vec<Revolution>,
}

impl SectionRecorder {
    fn new(anchor: State, start_after: f64) -> Self {
        SectionRecorder { anchor, start_after, last_cross: None, bounds: Self::empty(), revolutions: Vec::new() }
    }

    fn empty() -> [f64; 4] {
        [f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY]
    }

    fn observe(&mut self, s: &StepInfo) {
        if s.t1 < self.start_after {
            return;
        }
        let b = &mut self.bounds;
        b[0] = b[0].min(s.y1[0]);
        b[1] = b[1].max(s.y1[0]);
        b[2] = b[2].min(s.y1[1]);
        b[3] = b[3].max(s.y1[1]);
        if s.y0[0] > self.anchor.u && s.y1[0] <= self.anchor.u {
            if let Some(tc) = s.crossing(0, self.anchor.u) {
                let vc = s.interpolate(tc)[1];
                if vc > self.anchor.v && tc >= self.start_after {
                    if self.last_cross.is_some() {
                        self.revolutions.push(Revolution {
                            t_end: tc,
                            v_cross: vc,
                            u_min: b[0],
                            u_max: b[1],
                            v_min: b[2],
                            v_max: b[3],
                        });
                    }
                    self.last_cross = Some((tc, vc));
                    self.bounds = Self::empty();
                }
            }
        }
    }

    fn crossings(&self) -> usize {
        self.revolutions.len() + usize::from(self.last_cross.is_some())
    }
}

/// Detect a limit cycle reached from `ic` by forward simulation, measuring the
/// period on the Poincare section `u = u*`, `v > v*` anchored at the coexistence
/// equilibrium.
pub fn detect_cycle(p: &Params, ic: State, cfg: &CycleConfig) -> Result<CycleEstimate> {
    let anchor = coexistence(p)?;
    let mut rec = SectionRecorder::new(anchor, cfg.burn_in * cfg.horizon);
    integrate_with(p, ic, (0.0, cfg.horizon), &cfg.integrator, |s| {
        rec.observe(s);
        true
    })?;
    let crossings = rec.crossings();
    let revs = &rec.revolutions;
    if crossings < 4 {
        return Err(Error::NoCycle { crossings });
    }
    let last = revs[revs.len() - 1];
    if last.u_max - last.u_min < cfg.collapse_amplitude * anchor.u.max(1.0) {
        return Err(Error::NoCycle { crossings });
    }
    let periods: Vec<f64> = revs.windows(2).map(|w| w[1].t_end - w[0].t_end).collect();
    let n = periods.len();
    let period = periods[n - 1];
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
    let periods_agree = n >= 3 && periods[n - 3..].iter().all(|&q| rel(q, period) < cfg.convergence_tol);
    let prev = revs[revs.len() - 2];
    let amp_drift = rel(last.u_max - last.u_min, prev.u_max - prev.u_min);
    let converged = periods_agree && amp_drift < cfg.convergence_tol;

    let mut est = CycleEstimate {
        period,
        u_min: last.u_min,
        u_max: last.u_max,
        v_min: last.v_min,
        v_max: last.v_max,
        converged,
        stability: CycleStability::Unknown,
    };
    if cfg.probe_stability && converged {
        est.stability = probe_stability(p, anchor, last.v_cross, est.period, cfg)?;
    }
    Ok(est)
}

fn probe_stability(p: &Params, anchor: State, v_cross: f64, period: f64, cfg: &CycleConfig) -> Result<CycleStability> {
    // Offsets are measured along the section, from the anchor to the crossing.
    let offset = 0.01 * (v_cross - anchor.v);
    let horizon = 4.0 * period;
    let mut verdicts = Vec::with_capacity(2);
    for sign in [-1.0, 1.0] {
        let v0 = v_cross + sign * offset;
        if v0 <= anchor.v {
            verdicts.push(None);
            continue;
        }
        let mut rec = SectionRecorder::new(anchor, 0.0);
        rec.last_cross = Some((0.0, v0));
        integrate_with(p, State::new(anchor.u, v0), (0.0, horizon), &cfg.integrator, |s| {
            rec.observe(s);
            true
        })?;
        let dist = rec.revolutions.last().map(|r| (r.v_cross - v_cross).abs());
        verdicts.push(dist.map(|d| d < offset));
    }
    Ok(match (verdicts[0], verdicts[1]) {
        (Some(true), Some(true)) => CycleStability::Attracting,
        (Some(false), Some(false)) => CycleStability::Repelling,
        _ => CycleStability::Unknown,
    })
}
