//! One-dimensional reaction-diffusion system on `[0, L]` with zero-flux ends:
//!
//! ```text
//! u_t = u_xx + f(u, v)
//! v_t = d v_xx + eps g(u, v)
//! ```
//!
//! The grid is node centred with mirrored ghost nodes. The default scheme
//! splits each step into half a reaction step, one backward Euler diffusion
//! step (a tridiagonal solve per species) and another half reaction step.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{coexistence, jacobian, reaction_rates, Params, State};
use crate::transients::{diagnostics, DiagnosticsSeries};

/// Slack allowed outside the invariant box before a run is aborted.
pub const BOX_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub length: f64,
    pub n: usize,
    pub dx: f64,
}

impl Grid {
    pub fn new(length: f64, n: usize) -> Result<Self> {
        if !(length > 0.0 && length.is_finite()) || n < 3 {
            return Err(Error::InvalidParams(format!("grid needs L > 0 and N >= 3, got L={length}, N={n}")));
        }
        Ok(Grid { length, n, dx: length / (n - 1) as f64 })
    }

    /// Grid with spacing as close to `dx` as divides `length`.
    pub fn with_spacing(length: f64, dx: f64) -> Result<Self> {
        if !(dx > 0.0) {
            return Err(Error::InvalidParams(format!("dx must be > 0, got {dx}")));
        }
        Grid::new(length, (length / dx).round() as usize + 1)
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.dx
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldPair {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl FieldPair {
    pub fn uniform(n: usize, s: State) -> Self {
        FieldPair { u: vec![s.u; n], v: vec![s.v; n] }
    }

    /// Check `0 <= u <= chi` and `0 <= v <= (beta chi - eta)/delta` up to [`BOX_SLACK`].
    pub fn check_box(&self, p: &Params, t: f64) -> Result<()> {
        let v_bar = p.predator_bound();
        for (i, (&u, &v)) in self.u.iter().zip(&self.v).enumerate() {
            let ok = u >= -BOX_SLACK && u <= p.chi + BOX_SLACK && v >= -BOX_SLACK && v <= v_bar + BOX_SLACK;
            if !ok {
                return Err(Error::BoundViolation { t, what: format!("node {i}: (u, v) = ({u}, {v})") });
            }
        }
        Ok(())
    }

    /// CSV with header `x,u,v`.
    pub fn write_csv<W: Write>(&self, grid: &Grid, mut w: W) -> io::Result<()> {
        writeln!(w, "x,u,v")?;
        for i in 0..self.u.len() {
            writeln!(w, "{:.10e},{:.16e},{:.16e}", grid.x(i), self.u[i], self.v[i])?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IcKind {
    /// `u* + 0.02 m` and `v* + 0.01 m` for `|x - L/2| < 2`, the equilibrium elsewhere.
    LocalizedBump,
    /// Uniform noise in `[-m, m]` on both species.
    SmallRandom,
    /// The equilibrium shifted by `m` in both species.
    HomogeneousOffset,
}

/// Half-width of the localized bump.
pub const BUMP_HALF_WIDTH: f64 = 2.0;

/// Initial data around the coexistence state. `magnitude` scales the bump
/// (1 gives the standard heights), sets the noise amplitude, or the offset.
/// Values are clipped at zero.
pub fn initial_condition(kind: IcKind, p: &Params, grid: &Grid, magnitude: f64, seed: u64) -> Result<FieldPair> {
    let e = coexistence(p)?;
    let mut f = FieldPair::uniform(grid.n, e);
    match kind {
        IcKind::LocalizedBump => {
            let c = 0.5 * grid.length;
            for i in 0..grid.n {
                if (grid.x(i) - c).abs() < BUMP_HALF_WIDTH {
                    f.u[i] += 0.02 * magnitude;
                    f.v[i] += 0.01 * magnitude;
                }
            }
        }
        IcKind::SmallRandom => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            if magnitude > 0.0 {
                for i in 0..grid.n {
                    f.u[i] += rng.gen_range(-magnitude..=magnitude);
                    f.v[i] += rng.gen_range(-magnitude..=magnitude);
                }
            }
        }
        IcKind::HomogeneousOffset => {
            for i in 0..grid.n {
                f.u[i] += magnitude;
                f.v[i] += magnitude;
            }
        }
    }
    for x in f.u.iter_mut().chain(f.v.iter_mut()) {
        *x = x.max(0.0);
    }
    Ok(f)
}

/// Second difference with mirrored ghosts `f[-1] = f[1]`, `f[N] = f[N-2]`.
pub fn laplacian_neumann(f: &[f64], dx: f64) -> Vec<f64> {
    let n = f.len();
    assert!(n >= 3, "laplacian needs at least three nodes");
    let s = 1.0 / (dx * dx);
    let mut out = vec![0.0; n];
    out[0] = 2.0 * (f[1] - f[0]) * s;
    out[n - 1] = 2.0 * (f[n - 2] - f[n - 1]) * s;
    for i in 1..n - 1 {
        out[i] = (f[i - 1] - 2.0 * f[i] + f[i + 1]) * s;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PdeScheme {
    Imex,
    /// Heun's method on the full right-hand side; needs `dt <= dx^2 / (2 max(1, d))`.
    FullyExplicit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdeConfig {
    pub d: f64,
    pub dt: f64,
    pub t_end: f64,
    /// Steps between stored snapshots; the initial and final states are always kept.
    pub snapshot_stride: usize,
    /// Steps between diagnostics rows.
    pub diagnostics_stride: usize,
    pub scheme: PdeScheme,
}

impl PdeConfig {
    /// `dt = 0.01` for `eps > 0.1`, `0.002` otherwise; diagnostics every 0.1
    /// time units and a snapshot every 10.
    pub fn for_params(p: &Params, d: f64, t_end: f64) -> Self {
        let dt = if p.eps > 0.1 { 0.01 } else { 0.002 };
        let per = |span: f64| ((span / dt).round() as usize).max(1);
        PdeConfig { d, dt, t_end, snapshot_stride: per(10.0), diagnostics_stride: per(0.1), scheme: PdeScheme::Imex }
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        if !(self.d > 0.0 && self.dt > 0.0 && self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "need d, dt, t_end > 0, got d={}, dt={}, t_end={}",
                self.d, self.dt, self.t_end
            )));
        }
        if self.snapshot_stride == 0 || self.diagnostics_stride == 0 {
            return Err(Error::InvalidParams("strides must be >= 1".into()));
        }
        if self.scheme == PdeScheme::FullyExplicit {
            let limit = explicit_dt_limit(grid, self.d);
            if self.dt > limit * (1.0 + 1e-12) {
                return Err(Error::InvalidParams(format!("explicit dt {} exceeds {limit}", self.dt)));
            }
        }
        Ok(())
    }
}

/// `dx^2 / (2 max(1, d))`.
pub fn explicit_dt_limit(grid: &Grid, d: f64) -> f64 {
    grid.dx * grid.dx / (2.0 * d.max(1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeResult {
    pub grid: Grid,
    pub times: Vec<f64>,
    pub snapshots: Vec<FieldPair>,
    pub diagnostics: DiagnosticsSeries,
}

impl SpaceTimeResult {
    pub fn last(&self) -> &FieldPair {
        self.snapshots.last().expect("a result always holds the initial snapshot")
    }

    /// One `snap_t<time>.csv` per snapshot; returns the written paths.
    pub fn write_snapshots(&self, dir: &Path) -> io::Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut out = Vec::with_capacity(self.times.len());
        for (t, f) in self.times.iter().zip(&self.snapshots) {
            let path = dir.join(snapshot_name(*t));
            f.write_csv(&self.grid, io::BufWriter::new(fs::File::create(&path)?))?;
            out.push(path);
        }
        Ok(out)
    }
}

pub fn snapshot_name(t: f64) -> String {
    format!("snap_t{t:.3}.csv")
}

/// Backward Euler for `w_t = D w_xx`: the constant matrix `I - r L` factored once.
struct ImplicitDiffusion {
    r: f64,
    /// Modified super-diagonal and reciprocal pivots of the Thomas sweep.
    c: Vec<f64>,
    inv: Vec<f64>,
}

impl ImplicitDiffusion {
    fn new(n: usize, coeff: f64, dt: f64, dx: f64) -> Self {
        let r = coeff * dt / (dx * dx);
        let diag = 1.0 + 2.0 * r;
        let upper = |i: usize| if i == 0 { -2.0 * r } else { -r };
        let lower = |i: usize| if i == n - 1 { -2.0 * r } else { -r };
        let mut c = vec![0.0; n];
        let mut inv = vec![0.0; n];
        inv[0] = 1.0 / diag;
        c[0] = upper(0) * inv[0];
        for i in 1..n {
            inv[i] = 1.0 / (diag - lower(i) * c[i - 1]);
            if i < n - 1 {
                c[i] = upper(i) * inv[i];
            }
        }
        ImplicitDiffusion { r, c, inv }
    }

    fn solve(&self, w: &mut [f64]) {
        let n = w.len();
        let lower = |i: usize| if i == n - 1 { -2.0 * self.r } else { -self.r };
        w[0] *= self.inv[0];
        for i in 1..n {
            w[i] = (w[i] - lower(i) * w[i - 1]) * self.inv[i];
        }
        for i in (0..n - 1).rev() {
            w[i] -= self.c[i] * w[i + 1];
        }
    }
}

fn kinetics(p: &Params, u: f64, v: f64) -> (f64, f64) {
    let (f, g) = reaction_rates(p, State::new(u, v));
    (f, p.eps * g)
}

/// Largest row sum of the reaction Jacobian over the field.
fn reaction_scale(p: &Params, f: &FieldPair) -> f64 {
    f.u.iter().zip(&f.v).fold(0.0f64, |acc, (&u, &v)| {
        let j = jacobian(p, State::new(u, v));
        let r1 = j.a11.abs() + j.a12.abs();
        let r2 = p.eps * (j.a21.abs() + j.a22.abs());
        acc.max(r1).max(r2)
    })
}

/// Heun sub-steps of the local kinetics over `h`, with `h_sub * scale <= 0.5`.
fn react(p: &Params, f: &mut FieldPair, h: f64, scale: f64) {
    let m = ((h * scale / 0.5).ceil() as usize).max(1);
    let hs = h / m as f64;
    for (u, v) in f.u.iter_mut().zip(f.v.iter_mut()) {
        for _ in 0..m {
            let (k1u, k1v) = kinetics(p, *u, *v);
            let (pu, pv) = (*u + hs * k1u, *v + hs * k1v);
            let (k2u, k2v) = kinetics(p, pu, pv);
            *u += 0.5 * hs * (k1u + k2u);
            *v += 0.5 * hs * (k1v + k2v);
        }
    }
}

fn explicit_rhs(p: &Params, d: f64, dx: f64, f: &FieldPair) -> FieldPair {
    let lu = laplacian_neumann(&f.u, dx);
    let lv = laplacian_neumann(&f.v, dx);
    let mut out = FieldPair { u: lu, v: lv };
    for i in 0..f.u.len() {
        let (a, b) = kinetics(p, f.u[i], f.v[i]);
        out.u[i] += a;
        out.v[i] = d * out.v[i] + b;
    }
    out
}

fn heun_step(p: &Params, d: f64, dx: f64, f: &mut FieldPair, dt: f64) {
    let k1 = explicit_rhs(p, d, dx, f);
    let pred = FieldPair {
        u: f.u.iter().zip(&k1.u).map(|(a, b)| a + dt * b).collect(),
        v: f.v.iter().zip(&k1.v).map(|(a, b)| a + dt * b).collect(),
    };
    let k2 = explicit_rhs(p, d, dx, &pred);
    for i in 0..f.u.len() {
        f.u[i] += 0.5 * dt * (k1.u[i] + k2.u[i]);
        f.v[i] += 0.5 * dt * (k1.v[i] + k2.v[i]);
    }
}

/// Advance `ic` to `cfg.t_end`.
pub fn simulate(p: &Params, grid: &Grid, cfg: &PdeConfig, ic: &FieldPair) -> Result<SpaceTimeResult> {
    p.validate()?;
    cfg.validate(grid)?;
    if ic.u.len() != grid.n || ic.v.len() != grid.n {
        return Err(Error::InvalidParams(format!("initial field has {} nodes, grid has {}", ic.u.len(), grid.n)));
    }
    ic.check_box(p, 0.0)?;
    let steps = (cfg.t_end / cfg.dt).round().max(1.0) as usize;
    let dt = cfg.t_end / steps as f64;
    let (du, dv) = (ImplicitDiffusion::new(grid.n, 1.0, dt, grid.dx), ImplicitDiffusion::new(grid.n, cfg.d, dt, grid.dx));
    let mut f = ic.clone();
    let mut res = SpaceTimeResult { grid: *grid, times: vec![0.0], snapshots: vec![f.clone()], diagnostics: DiagnosticsSeries::default() };
    res.diagnostics.push(0.0, diagnostics(&f.u, &f.v, grid));
    for step in 1..=steps {
        match cfg.scheme {
            PdeScheme::Imex => {
                let scale = reaction_scale(p, &f);
                react(p, &mut f, 0.5 * dt, scale);
                du.solve(&mut f.u);
                dv.solve(&mut f.v);
                react(p, &mut f, 0.5 * dt, scale);
            }
            PdeScheme::FullyExplicit => heun_step(p, cfg.d, grid.dx, &mut f, dt),
        }
        let t = step as f64 * dt;
        if step % cfg.diagnostics_stride == 0 || step == steps {
            let row = diagnostics(&f.u, &f.v, grid);
            if !(row.mean_u.is_finite() && row.mean_v.is_finite()) {
                return Err(Error::StepUnderflow { t });
            }
            res.diagnostics.push(t, row);
        }
        if step % cfg.snapshot_stride == 0 || step == steps {
            f.check_box(p, t)?;
            res.times.push(t);
            res.snapshots.push(f.clone());
        }
    }
    Ok(res)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SteadyState {
    Stationary,
    HomogeneousOscillatory,
    HeterogeneousOscillatory,
    Mixed,
    Undecided,
}

/// Number of equal sub-intervals compared for the mixed classification.
pub const MIXED_PARTS: usize = 4;

/// Classify the last `window` snapshots: stationary if no node of `u` moves by
/// more than `tol`, mixed if some sub-intervals are stationary and others not,
/// otherwise homogeneous or heterogeneous oscillation by the spatial range of `u`.
pub fn steady_state_detect(res: &SpaceTimeResult, tol: f64, window: usize) -> SteadyState {
    let m = res.snapshots.len();
    if window < 2 || m < window {
        return SteadyState::Undecided;
    }
    let tail = &res.snapshots[m - window..];
    let n = res.grid.n;
    let variation: Vec<f64> = (0..n)
        .map(|i| {
            let (lo, hi) = tail.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), s| (a.min(s.u[i]), b.max(s.u[i])));
            hi - lo
        })
        .collect();
    let parts: Vec<bool> = (0..MIXED_PARTS)
        .map(|k| {
            let (a, b) = (k * n / MIXED_PARTS, ((k + 1) * n / MIXED_PARTS).min(n));
            variation[a..b].iter().all(|&x| x < tol)
        })
        .collect();
    if parts.iter().all(|&s| s) {
        return SteadyState::Stationary;
    }
    if parts.iter().any(|&s| s) {
        return SteadyState::Mixed;
    }
    let spatial = tail
        .iter()
        .map(|s| s.u.iter().fold(f64::NEG_INFINITY, |a, &x| a.max(x)) - s.u.iter().fold(f64::INFINITY, |a, &x| a.min(x)))
        .fold(0.0f64, f64::max);
    let means: Vec<f64> = tail.iter().map(|s| s.u.iter().sum::<f64>() / n as f64).collect();
    let mean_range = means.iter().fold(f64::NEG_INFINITY, |a, &x| a.max(x)) - means.iter().fold(f64::INFINITY, |a, &x| a.min(x));
    if spatial < tol {
        if mean_range > tol {
            SteadyState::HomogeneousOscillatory
        } else {
            SteadyState::Undecided
        }
    } else {
        SteadyState::HeterogeneousOscillatory
    }
}

/// Fraction of `max - mean` an excursion must reach to count as a peak.
pub const PEAK_THRESHOLD: f64 = 0.25;

/// Number of excursions above the spatial mean: runs touching a boundary count
/// 1/2, interior runs 1. Counting excursions rather than local maxima keeps
/// flat-topped peaks with shallow dips from counting twice.
pub fn count_peaks(f: &[f64]) -> f64 {
    let n = f.len();
    if n < 3 {
        return 0.0;
    }
    let mean = f.iter().sum::<f64>() / n as f64;
    let top = f.iter().fold(f64::NEG_INFINITY, |a, &x| a.max(x));
    let level = mean + PEAK_THRESHOLD * (top - mean);
    if !(top > mean) {
        return 0.0;
    }
    let mut count = 0.0;
    let mut i = 0;
    while i < n {
        if f[i] <= mean {
            i += 1;
            continue;
        }
        let start = i;
        let mut high = f[i];
        while i < n && f[i] > mean {
            high = high.max(f[i]);
            i += 1;
        }
        if high >= level {
            count += if start == 0 || i == n { 0.5 } else { 1.0 };
        }
    }
    count
}
