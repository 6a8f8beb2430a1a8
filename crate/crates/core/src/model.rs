//! Bazykin kinetics: reaction terms, Jacobian, equilibria and nullclines.
//!
//! The temporal system is
//!
//! ```text
//! du/dt = f(u, v) = nu*u*(1 - u/chi) - beta*u*v/(1 + alpha*u)
//! dv/dt = eps*g(u, v),   g(u, v) = beta*u*v/(1 + alpha*u) - eta*v - delta*v^2
//! ```

use num_complex::Complex64;

use crate::error::{Error, Result};

/// The seven model constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Params {
    /// Prey intrinsic growth rate.
    pub nu: f64,
    /// Prey carrying capacity.
    pub chi: f64,
    /// Predation saturation.
    pub alpha: f64,
    /// Interaction rate.
    pub beta: f64,
    /// Predator per-capita death rate.
    pub eta: f64,
    /// Intraspecific-competition mortality of the predator.
    pub delta: f64,
    /// Timescale ratio between predator and prey.
    pub eps: f64,
}

impl Params {
    pub fn new(nu: f64, chi: f64, alpha: f64, beta: f64, eta: f64, delta: f64, eps: f64) -> Result<Self> {
        let p = Params { nu, chi, alpha, beta, eta, delta, eps };
        p.validate()?;
        Ok(p)
    }

    /// Standard parameter family:
    /// nu = 10, alpha = 1, beta = 2.85, eta = 1.
    pub fn standard(chi: f64, delta: f64, eps: f64) -> Self {
        Params { nu: 10.0, chi, alpha: 1.0, beta: 2.85, eta: 1.0, delta, eps }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("nu", self.nu),
            ("chi", self.chi),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("eta", self.eta),
            ("delta", self.delta),
            ("eps", self.eps),
        ];
        for (name, value) in fields {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidParams(format!("{name} must be finite and > 0, got {value}")));
            }
        }
        if self.eps > 1.0 {
            return Err(Error::InvalidParams(format!("eps must lie in (0, 1], got {}", self.eps)));
        }
        Ok(())
    }

    pub fn with_chi(self, chi: f64) -> Self {
        Params { chi, ..self }
    }

    pub fn with_delta(self, delta: f64) -> Self {
        Params { delta, ..self }
    }

    pub fn with_eps(self, eps: f64) -> Self {
        Params { eps, ..self }
    }

    /// Upper bound of the invariant box for the predator, the positive root of
    /// `beta*chi*v - eta*v - delta*v^2 = 0`.
    pub fn predator_bound(&self) -> f64 {
        (self.beta * self.chi - self.eta) / self.delta
    }
}

/// Prey and predator densities.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct State {
    pub u: f64,
    pub v: f64,
}

impl State {
    pub const fn new(u: f64, v: f64) -> Self {
        State { u, v }
    }
}

/// Entries of a 2x2 linearization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jac2 {
    pub a11: f64,
    pub a12: f64,
    pub a21: f64,
    pub a22: f64,
}

impl Jac2 {
    pub fn trace(&self) -> f64 {
        self.a11 + self.a22
    }

    pub fn det(&self) -> f64 {
        self.a11 * self.a22 - self.a12 * self.a21
    }

    /// Eigenvalues; a complex pair is returned with positive imaginary part first,
    /// a real pair in descending order.
    pub fn eigenvalues(&self) -> [Complex64; 2] {
        eigen_from_trace_det(self.trace(), self.det())
    }
}

pub(crate) fn eigen_from_trace_det(tr: f64, det: f64) -> [Complex64; 2] {
    let half = 0.5 * tr;
    let disc = half * half - det;
    if disc < 0.0 {
        let w = (-disc).sqrt();
        [Complex64::new(half, w), Complex64::new(half, -w)]
    } else {
        let s = disc.sqrt();
        // Avoid cancellation in the smaller root.
        let big = if half >= 0.0 { half + s } else { half - s };
        let small = if big != 0.0 { det / big } else { 0.0 };
        let (hi, lo) = if big >= small { (big, small) } else { (small, big) };
        [Complex64::new(hi, 0.0), Complex64::new(lo, 0.0)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EquilibriumKind {
    Origin,
    PreyOnly,
    Coexistence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stability {
    StableNode,
    StableFocus,
    UnstableNode,
    UnstableFocus,
    Saddle,
    NonHyperbolic,
}

impl Stability {
    pub fn is_stable(self) -> bool {
        matches!(self, Stability::StableNode | Stability::StableFocus)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Equilibrium {
    pub kind: EquilibriumKind,
    pub point: State,
    pub eigenvalues: [Complex64; 2],
    pub stability: Stability,
    /// Set when another root of the coexistence cubic lies within 1e-7.
    pub degenerate: bool,
}

/// Quantities deciding the root structure of the coexistence cubic.
#[derive(Debug, Clone, Copy, PartialEq)]
#[allow(non_snake_case)]
pub struct CubicDiagnostics {
    pub A: f64,
    pub B: f64,
    pub Delta: f64,
}

/// Reaction terms `(f, g)`; the predator equation is `dv/dt = eps * g`.
pub fn reaction_rates(p: &Params, s: State) -> (f64, f64) {
    let State { u, v } = s;
    let functional = p.beta * u / (1.0 + p.alpha * u);
    let f = p.nu * u * (1.0 - u / p.chi) - functional * v;
    let g = functional * v - p.eta * v - p.delta * v * v;
    (f, g)
}

/// Full partial derivatives of `(f, eps*g)`.
pub fn jacobian(p: &Params, s: State) -> Jac2 {
    let State { u, v } = s;
    let q = 1.0 + p.alpha * u;
    Jac2 {
        a11: p.nu * (1.0 - 2.0 * u / p.chi) - p.beta * v / (q * q),
        a12: -p.beta * u / q,
        a21: p.eps * p.beta * v / (q * q),
        a22: p.eps * (p.beta * u / q - p.eta - 2.0 * p.delta * v),
    }
}

/// Prey nullcline `F(u)` (the non-trivial branch of the critical manifold) and
/// predator nullcline `v_pred(u)`. The latter may be negative.
pub fn nullclines(p: &Params, u: f64) -> (f64, f64) {
    let big_f = p.nu / p.beta * (1.0 - u / p.chi) * (1.0 + p.alpha * u);
    let v_pred = (p.beta * u / (1.0 + p.alpha * u) - p.eta) / p.delta;
    (big_f, v_pred)
}

/// Coefficients `[c3, c2, c1, c0]` of the cubic whose positive roots are the
/// prey coordinates of coexistence equilibria.
pub fn coexistence_cubic(p: &Params) -> [f64; 4] {
    let Params { nu, chi, alpha, beta, eta, delta, .. } = *p;
    [
        alpha * alpha * delta * nu,
        delta * nu * alpha * (2.0 - alpha * chi),
        beta * beta * chi - eta * alpha * beta * chi - 2.0 * delta * nu * chi * alpha + delta * nu,
        -chi * (delta * nu + beta * eta),
    ]
}

pub fn cubic_diagnostics(p: &Params) -> CubicDiagnostics {
    let Params { nu, chi, alpha, beta, eta, delta, .. } = *p;
    let k = 2.0 - alpha * chi;
    let c1 = beta * beta * chi - eta * alpha * beta * chi - 2.0 * delta * nu * chi * alpha + delta * nu;
    let dn = delta * nu;
    let a = dn * dn * alpha * alpha * k * k - 3.0 * alpha * alpha * dn * c1;
    let b = 2.0 * dn.powi(3) * alpha.powi(3) * k.powi(3) - 9.0 * alpha.powi(3) * dn * dn * k * c1
        + 27.0 * alpha.powi(4) * dn * dn * chi * (dn + beta * eta);
    CubicDiagnostics { A: a, B: b, Delta: b * b - 4.0 * a * a * a }
}

fn eval_cubic(c: &[f64; 4], x: f64) -> f64 {
    ((c[0] * x + c[1]) * x + c[2]) * x + c[3]
}

fn eval_cubic_deriv(c: &[f64; 4], x: f64) -> f64 {
    (3.0 * c[0] * x + 2.0 * c[1]) * x + c[2]
}

/// Real roots of `c3 x^3 + c2 x^2 + c1 x + c0`, each polished by Newton's method.
pub(crate) fn real_cubic_roots(c: &[f64; 4]) -> Result<Vec<f64>> {
    let scale = c.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 || c[0].abs() < 1e-14 * scale {
        return Err(Error::IllConditioned(format!(
            "leading coefficient {:e} vs scale {:e}",
            c[0], scale
        )));
    }
    let (a, b, cc) = (c[1] / c[0], c[2] / c[0], c[3] / c[0]);
    // Depressed cubic t^3 + p t + q with x = t - a/3.
    let shift = a / 3.0;
    let pp = b - a * a / 3.0;
    let qq = 2.0 * a * a * a / 27.0 - a * b / 3.0 + cc;
    let disc = (qq / 2.0).powi(2) + (pp / 3.0).powi(3);
    let mut roots = if disc > 0.0 {
        let sq = disc.sqrt();
        let t = (-qq / 2.0 + sq).cbrt() + (-qq / 2.0 - sq).cbrt();
        vec![t - shift]
    } else if pp == 0.0 {
        vec![-shift]
    } else {
        let m = 2.0 * (-pp / 3.0).sqrt();
        let arg = (3.0 * qq / (pp * m)).clamp(-1.0, 1.0);
        let theta = arg.acos() / 3.0;
        (0..3)
            .map(|k| m * (theta - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos() - shift)
            .collect()
    };
    for r in roots.iter_mut() {
        for _ in 0..50 {
            let d = eval_cubic_deriv(c, *r);
            if d == 0.0 {
                break;
            }
            let step = eval_cubic(c, *r) / d;
            *r -= step;
            if step.abs() <= 1e-15 * r.abs().max(1.0) {
                break;
            }
        }
    }
    roots.sort_by(|x, y| x.partial_cmp(y).unwrap());
    Ok(roots)
}

fn residual(p: &Params, s: State) -> f64 {
    let (f, g) = reaction_rates(p, s);
    f.abs().max(g.abs())
}

/// Linear stability of a fixed point of the temporal system.
pub fn classify_equilibrium(p: &Params, e: State) -> Result<Equilibrium> {
    let r = residual(p, e);
    if !(r < 1e-8) {
        return Err(Error::NotEquilibrium { residual: r });
    }
    let kind = if e.u.abs() < 1e-12 && e.v.abs() < 1e-12 {
        EquilibriumKind::Origin
    } else if e.v.abs() < 1e-12 {
        EquilibriumKind::PreyOnly
    } else {
        EquilibriumKind::Coexistence
    };
    let eigenvalues = jacobian(p, e).eigenvalues();
    Ok(Equilibrium { kind, point: e, eigenvalues, stability: stability_of(&eigenvalues), degenerate: false })
}

fn stability_of(ev: &[Complex64; 2]) -> Stability {
    let min_abs_re = ev[0].re.abs().min(ev[1].re.abs());
    if min_abs_re < 1e-9 {
        return Stability::NonHyperbolic;
    }
    if ev[0].im != 0.0 {
        if ev[0].re < 0.0 {
            Stability::StableFocus
        } else {
            Stability::UnstableFocus
        }
    } else if ev[0].re < 0.0 && ev[1].re < 0.0 {
        Stability::StableNode
    } else if ev[0].re > 0.0 && ev[1].re > 0.0 {
        Stability::UnstableNode
    } else {
        Stability::Saddle
    }
}

/// All feasible equilibria: the origin, the prey-only state and every coexistence
/// state with `u* > 0`, `v* > 0` obtained from the cubic.
pub fn find_equilibria(p: &Params) -> Result<(Vec<Equilibrium>, CubicDiagnostics)> {
    p.validate()?;
    let diag = cubic_diagnostics(p);
    let mut out = vec![
        classify_equilibrium(p, State::new(0.0, 0.0))?,
        classify_equilibrium(p, State::new(p.chi, 0.0))?,
    ];
    let roots = real_cubic_roots(&coexistence_cubic(p))?;
    let feasible: Vec<State> = roots
        .iter()
        .filter(|&&u| u > 0.0)
        .map(|&u| State::new(u, nullclines(p, u).1))
        .filter(|s| s.v > 0.0)
        .collect();
    for (i, s) in feasible.iter().enumerate() {
        let mut e = classify_equilibrium(p, *s)?;
        e.degenerate = feasible
            .iter()
            .enumerate()
            .any(|(j, o)| j != i && (o.u - s.u).abs() < 1e-7);
        out.push(e);
    }
    Ok((out, diag))
}

/// The feasible coexistence equilibrium with the smallest prey density.
pub fn coexistence(p: &Params) -> Result<State> {
    let (eqs, _) = find_equilibria(p)?;
    eqs.into_iter()
        .find(|e| e.kind == EquilibriumKind::Coexistence)
        .map(|e| e.point)
        .ok_or(Error::NoCoexistence)
}
