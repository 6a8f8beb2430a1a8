//! Geometry of the critical manifold in the singular limit `eps -> 0`.
//!
//! The critical manifold is the union of the trivial branch `u = 0` and the
//! curve `v = F(u)`. Its fold splits `F` into an attracting right part and a
//! repelling left part; singular cycles built from these pieces are scored by
//! slow divergence integrals whose sign predicts the stability of the canard
//! cycles that perturb from them.

use crate::error::{Error, Result};
use crate::model::{jacobian, nullclines, reaction_rates, Params, State};
use crate::numerics::{brent, integrate};

const QUAD_TOL: f64 = 1e-8;
const GEOM_TOL: f64 = 1e-10;
const ARC_SAMPLES: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FoldKind {
    /// The slow flow is singular at the fold: trajectories jump.
    Jump,
    /// The predator nullcline passes through the fold.
    Canard,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FoldPoint {
    pub u_f: f64,
    pub v_f: f64,
    pub kind: FoldKind,
    /// Value of `delta` that turns the fold into a canard point.
    pub delta_f: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CycleKind {
    HeadlessCanard,
    HeadedCanard,
    Relaxation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SingularCycle {
    pub kind: CycleKind,
    pub s: f64,
    /// Closed polyline: the last vertex repeats the first.
    pub vertices: Vec<State>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlowDivergence {
    pub value: f64,
    pub predicts_stable: bool,
}

/// Slope `F'(u)` of the non-trivial critical branch.
pub fn manifold_slope(p: &Params, u: f64) -> f64 {
    p.nu / p.beta * (p.alpha - 1.0 / p.chi - 2.0 * p.alpha * u / p.chi)
}

pub fn fold_point(p: &Params) -> Result<FoldPoint> {
    let alpha_chi = p.alpha * p.chi;
    if alpha_chi <= 1.0 {
        return Err(Error::NoFold { alpha_chi });
    }
    let u_f = (alpha_chi - 1.0) / (2.0 * p.alpha);
    let v_f = nullclines(p, u_f).0;
    let delta_f = (p.beta * u_f / (1.0 + p.alpha * u_f) - p.eta) / v_f;
    let (_, g) = reaction_rates(p, State::new(u_f, v_f));
    let kind = if g.abs() < GEOM_TOL { FoldKind::Canard } else { FoldKind::Jump };
    Ok(FoldPoint { u_f, v_f, kind, delta_f })
}

/// Antiderivative of `(nu - beta v) / (-eta v - delta v^2)`, the ratio of the
/// fast divergence to the slow speed along `u = 0`.
fn trivial_branch_primitive(p: &Params, delta: f64, v: f64) -> f64 {
    let b = -p.beta - p.nu * delta / p.eta;
    -(p.nu / p.eta) * v.ln() - (b / delta) * (p.eta + delta * v).ln()
}

pub(crate) fn trivial_branch_integrand(p: &Params, delta: f64, v: f64) -> f64 {
    (p.nu - p.beta * v) / (-p.eta * v - delta * v * v)
}

fn exit_point_for(p: &Params, delta: f64, v_f: f64) -> Result<f64> {
    let v_turn = p.nu / p.beta;
    if !(v_f > v_turn) {
        return Err(Error::NoRoot);
    }
    let top = trivial_branch_primitive(p, delta, v_f);
    let balance = |v: f64| top - trivial_branch_primitive(p, delta, v);
    brent(balance, 1e-8, v_turn, 1e-15, 200).map_err(|_| Error::NoRoot)
}

/// Exit height `v_ext` from the trivial branch for a trajectory that lands on it
/// at the fold height `v_f`: contraction accumulated above `nu/beta` balances the
/// expansion below it.
pub fn exit_point(p: &Params) -> Result<f64> {
    let fold = fold_point(p)?;
    exit_point_for(p, p.delta, fold.v_f)
}

/// The two roots of `F(u) = v_ext + s`, ordered `u_l <= u_f <= u_r`.
pub fn cycle_roots(p: &Params, s: f64, v_ext: f64) -> Result<(f64, f64)> {
    let fold = fold_point(p)?;
    let height = v_ext + s;
    if height > fold.v_f * (1.0 + 1e-14) || height < 0.0 {
        return Err(Error::OutOfRange { height, v_fold: fold.v_f });
    }
    let Params { nu, chi, alpha, beta, .. } = *p;
    let disc = (nu * nu * (alpha * chi + 1.0).powi(2) - 4.0 * alpha * beta * nu * chi * height).max(0.0);
    let centre = 0.5 * (chi - 1.0 / alpha);
    let half_width = disc.sqrt() / (2.0 * alpha * nu);
    Ok((centre - half_width, centre + half_width))
}

/// Integrand of the slow divergence integral along `v = F(u)` with the predator
/// kinetics evaluated at `delta`.
pub(crate) fn manifold_integrand(p: &Params, delta: f64, u: f64) -> f64 {
    let v = nullclines(p, u).0;
    let q = p.with_delta(delta);
    let f_u = jacobian(&q, State::new(u, v)).a11;
    let (_, g) = reaction_rates(&q, State::new(u, v));
    f_u * manifold_slope(p, u) / g
}

/// Rejects arcs on which `g(u, F(u))` vanishes anywhere other than the fold.
fn screen_poles(p: &Params, delta: f64, lo: f64, hi: f64, u_f: f64) -> Result<()> {
    let q = p.with_delta(delta);
    let reduced = |u: f64| {
        let (_, g) = reaction_rates(&q, State::new(u, nullclines(p, u).0));
        g / (u - u_f)
    };
    let n = 4000;
    let mut prev: Option<(f64, f64)> = None;
    for i in 0..=n {
        let u = lo + (hi - lo) * i as f64 / n as f64;
        if (u - u_f).abs() < 1e-6 * (hi - lo).max(1e-12) {
            continue;
        }
        let r = reduced(u);
        if r == 0.0 || !r.is_finite() {
            return Err(Error::PoleOnPath { at: u });
        }
        if let Some((pu, pr)) = prev {
            if pr.signum() != r.signum() {
                return Err(Error::PoleOnPath { at: 0.5 * (pu + u) });
            }
        }
        prev = Some((u, r));
    }
    Ok(())
}

/// Integral of the manifold integrand from `from` to `to`, split at the fold
/// where the integrand has a removable singularity.
fn manifold_integral(p: &Params, delta: f64, from: f64, to: f64, u_f: f64) -> Result<f64> {
    let (lo, hi, sign) = if from <= to { (from, to, 1.0) } else { (to, from, -1.0) };
    let integrand = |u: f64| manifold_integrand(p, delta, u);
    let mut total = 0.0;
    if lo < u_f && u_f < hi {
        total += integrate(integrand, lo, u_f, 0.5 * QUAD_TOL)?;
        total += integrate(integrand, u_f, hi, 0.5 * QUAD_TOL)?;
    } else {
        total += integrate(integrand, lo, hi, QUAD_TOL)?;
    }
    Ok(sign * total)
}

/// Slow divergence integral of the singular cycle of the given kind.
///
/// The singular cycles through the fold exist at the canard point, so the
/// predator kinetics inside the integrals is evaluated at `delta_f`, where the
/// fold singularity of the integrand is removable. `s` is measured from the
/// exit height of `p`. For [`CycleKind::Relaxation`] `s` is ignored and the
/// headed integral is taken at the fold height.
pub fn slow_divergence_integral(p: &Params, s: f64, kind: CycleKind) -> Result<SlowDivergence> {
    let fold = fold_point(p)?;
    let v_ext = exit_point(p)?;
    let s = if kind == CycleKind::Relaxation { fold.v_f - v_ext } else { s };
    let (u_l_s, u_r_s) = cycle_roots(p, s, v_ext)?;
    if u_l_s < 0.0 {
        // The arc would pass through the junction with the trivial branch.
        return Err(Error::OutOfRange { height: v_ext + s, v_fold: fold.v_f });
    }
    let delta = fold.delta_f;
    let value = match kind {
        CycleKind::HeadlessCanard => {
            screen_poles(p, delta, u_l_s, u_r_s, fold.u_f)?;
            manifold_integral(p, delta, u_r_s, u_l_s, fold.u_f)?
        }
        CycleKind::HeadedCanard | CycleKind::Relaxation => {
            let (_, u_r) = cycle_roots(p, 0.0, v_ext)?;
            screen_poles(p, delta, u_l_s, u_r, fold.u_f)?;
            let arc = manifold_integral(p, delta, u_r, u_l_s, fold.u_f)?;
            let head = integrate(|v| trivial_branch_integrand(p, delta, v), v_ext + s, v_ext, QUAD_TOL)?;
            arc + head
        }
    };
    Ok(SlowDivergence { value, predicts_stable: value < 0.0 })
}

fn arc(p: &Params, from: f64, to: f64) -> impl Iterator<Item = State> + '_ {
    (0..=ARC_SAMPLES).map(move |i| {
        let u = from + (to - from) * i as f64 / ARC_SAMPLES as f64;
        State::new(u, nullclines(p, u).0)
    })
}

/// Polyline of the singular cycle `Gamma(s)`.
///
/// * headless canard: the arc of `F` from `u_r(s)` over the fold to `u_l(s)`,
///   closed by the fast fibre at height `v_ext + s`;
/// * headed canard: the arc from `u_r` (height `v_ext`) to `u_l(s)`, a fast
///   fibre to `u = 0`, the trivial branch down to `v_ext` and the fast fibre
///   back to `u_r`;
/// * relaxation: as the headed canard with the jump taken at the fold.
pub fn singular_cycle(p: &Params, s: f64, kind: CycleKind) -> Result<SingularCycle> {
    let fold = fold_point(p)?;
    let v_ext = exit_point(p)?;
    let s = if kind == CycleKind::Relaxation { fold.v_f - v_ext } else { s };
    let (u_l_s, u_r_s) = cycle_roots(p, s, v_ext)?;
    let height = v_ext + s;
    let mut vertices: Vec<State> = match kind {
        CycleKind::HeadlessCanard => arc(p, u_r_s, u_l_s).collect(),
        CycleKind::HeadedCanard | CycleKind::Relaxation => {
            let (_, u_r) = cycle_roots(p, 0.0, v_ext)?;
            let mut v: Vec<State> = arc(p, u_r, u_l_s).collect();
            if kind == CycleKind::Relaxation {
                if let Some(last) = v.last_mut() {
                    // Pin the apex to the fold exactly.
                    *last = State::new(fold.u_f, fold.v_f);
                }
            }
            v.push(State::new(0.0, height));
            v.push(State::new(0.0, v_ext));
            v
        }
    };
    let first = vertices[0];
    vertices.push(first);
    Ok(SingularCycle { kind, s, vertices })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn p6() -> Params {
        Params::standard(6.0, 0.1444, 0.01)
    }

    #[test]
    fn fold_point_closed_form() {
        let f = fold_point(&p6()).unwrap();
        assert_abs_diff_eq!(f.u_f, 2.5, epsilon = 1e-15);
        assert_abs_diff_eq!(f.v_f, 7.16374, epsilon = 1e-5);
        // delta_f = (2.85*2.5/3.5 - 1) / v_f
        assert_abs_diff_eq!(f.delta_f, (2.85 * 2.5 / 3.5 - 1.0) / f.v_f, epsilon = 1e-15);
        assert_abs_diff_eq!(f.delta_f, 0.144577, epsilon = 1e-6);
        assert!(manifold_slope(&p6(), f.u_f).abs() < 1e-12);
        assert_eq!(f.kind, FoldKind::Jump);
        let at_canard = fold_point(&p6().with_delta(f.delta_f)).unwrap();
        assert_eq!(at_canard.kind, FoldKind::Canard);
    }

    #[test]
    fn fold_for_chi_428() {
        let f = fold_point(&Params::standard(4.28, 0.1347, 0.01)).unwrap();
        assert_abs_diff_eq!(f.u_f, 1.64, epsilon = 1e-12);
    }

    #[test]
    fn no_fold_at_unit_alpha_chi() {
        let err = fold_point(&Params::standard(1.0, 0.11, 0.01)).unwrap_err();
        assert!(matches!(err, Error::NoFold { .. }));
    }

    #[test]
    fn exit_point_balances_quadrature() {
        let p = p6();
        let v_ext = exit_point(&p).unwrap();
        let v_f = fold_point(&p).unwrap().v_f;
        assert!(v_ext > 0.0 && v_ext < p.nu / p.beta);
        let residual = integrate(|v| trivial_branch_integrand(&p, p.delta, v), v_ext, v_f, 1e-12).unwrap();
        assert!(residual.abs() < 1e-9, "{residual}");
    }

    #[test]
    fn exit_point_approaches_turning_height() {
        // A fold only just above nu/beta leaves a short attracting stretch.
        let p = Params::standard(6.0, 0.1444, 0.01);
        let v_turn = p.nu / p.beta;
        let prev = exit_point_for(&p, p.delta, v_turn + 1e-2).unwrap();
        let close = exit_point_for(&p, p.delta, v_turn + 1e-4).unwrap();
        assert!(v_turn - close < v_turn - prev);
        assert!(v_turn - close < 1e-3);
    }

    #[test]
    fn cycle_roots_examples() {
        let p = p6();
        let v_f = fold_point(&p).unwrap().v_f;
        let (l, r) = cycle_roots(&p, v_f, 0.0).unwrap();
        assert_abs_diff_eq!(l, 2.5, epsilon = 1e-6);
        assert_abs_diff_eq!(r, 2.5, epsilon = 1e-6);
        let (l, r) = cycle_roots(&p, 0.0, 0.0).unwrap();
        assert_abs_diff_eq!(l, -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r, 6.0, epsilon = 1e-12);
        let (l, r) = cycle_roots(&p, p.nu / p.beta, 0.0).unwrap();
        assert_abs_diff_eq!(l, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r, 5.0, epsilon = 1e-12);
        assert!(matches!(cycle_roots(&p, v_f + 0.1, 0.0), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn cycle_roots_sit_on_the_manifold() {
        let p = p6();
        let v_ext = exit_point(&p).unwrap();
        let v_f = fold_point(&p).unwrap().v_f;
        for k in 1..20 {
            let s = (v_f - v_ext) * k as f64 / 20.0;
            let (l, r) = cycle_roots(&p, s, v_ext).unwrap();
            assert!(l <= 2.5 && 2.5 <= r);
            assert!((nullclines(&p, l).0 - (v_ext + s)).abs() < 1e-10);
            assert!((nullclines(&p, r).0 - (v_ext + s)).abs() < 1e-10);
        }
    }

    #[test]
    fn headless_canard_is_stable_in_supercritical_regime() {
        let p = Params::standard(6.0, 0.14443, 0.01);
        let v_ext = exit_point(&p).unwrap();
        let v_f = fold_point(&p).unwrap().v_f;
        let lo = p.nu / p.beta - v_ext;
        let s = 0.5 * (lo + v_f - v_ext);
        let sd = slow_divergence_integral(&p, s, CycleKind::HeadlessCanard).unwrap();
        assert!(sd.value < 0.0 && sd.predicts_stable, "{sd:?}");
    }

    #[test]
    fn small_headless_canard_is_unstable_in_subcritical_regime() {
        let p = Params::standard(13.0, 0.1090657, 0.01);
        let v_ext = exit_point(&p).unwrap();
        let v_f = fold_point(&p).unwrap().v_f;
        let s = (v_f - v_ext) - 0.05;
        let sd = slow_divergence_integral(&p, s, CycleKind::HeadlessCanard).unwrap();
        assert!(sd.value > 0.0 && !sd.predicts_stable, "{sd:?}");
    }

    #[test]
    fn degenerate_cycle_has_vanishing_integral() {
        let p = p6();
        let v_ext = exit_point(&p).unwrap();
        let s_star = fold_point(&p).unwrap().v_f - v_ext;
        let mut prev = f64::INFINITY;
        for gap in [1e-1, 1e-2, 1e-3, 1e-4] {
            let v = slow_divergence_integral(&p, s_star - gap, CycleKind::HeadlessCanard).unwrap().value.abs();
            assert!(v < prev);
            prev = v;
        }
        assert!(prev < 1e-5);
    }

    #[test]
    fn headless_below_junction_is_out_of_range() {
        let p = p6();
        let err = slow_divergence_integral(&p, 0.01, CycleKind::HeadlessCanard).unwrap_err();
        assert!(matches!(err, Error::OutOfRange { .. }));
    }

    #[test]
    fn relaxation_cycle_geometry() {
        let p = p6();
        let c = singular_cycle(&p, 0.0, CycleKind::Relaxation).unwrap();
        let v_ext = exit_point(&p).unwrap();
        let fold = fold_point(&p).unwrap();
        assert_eq!(c.vertices.first(), c.vertices.last());
        assert!(c.vertices.contains(&State::new(fold.u_f, fold.v_f)));
        assert!(c.vertices.contains(&State::new(0.0, fold.v_f)));
        assert!(c.vertices.contains(&State::new(0.0, v_ext)));
        let (_, u_r) = cycle_roots(&p, 0.0, v_ext).unwrap();
        assert_abs_diff_eq!(c.vertices[0].u, u_r, epsilon = 1e-12);
        assert_abs_diff_eq!(c.vertices[0].v, v_ext, epsilon = 1e-10);
    }

    #[test]
    fn headed_cycle_contains_trivial_branch_segment() {
        let p = p6();
        let v_ext = exit_point(&p).unwrap();
        let s = 5.0 - v_ext;
        let c = singular_cycle(&p, s, CycleKind::HeadedCanard).unwrap();
        let on_axis: Vec<_> = c.vertices.iter().filter(|v| v.u == 0.0).collect();
        assert_eq!(on_axis.len(), 2);
        assert_abs_diff_eq!(on_axis[0].v, 5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(on_axis[1].v, v_ext, epsilon = 1e-12);
    }

    #[test]
    fn headless_cycle_shrinks_to_fold() {
        let p = p6();
        let v_ext = exit_point(&p).unwrap();
        let fold = fold_point(&p).unwrap();
        let c = singular_cycle(&p, fold.v_f - v_ext - 1e-10, CycleKind::HeadlessCanard).unwrap();
        for v in &c.vertices {
            assert!((v.u - fold.u_f).abs() < 1e-3 && (v.v - fold.v_f).abs() < 1e-6);
        }
    }

    #[test]
    fn arc_vertices_lie_on_manifold() {
        let p = p6();
        let c = singular_cycle(&p, 4.0 - exit_point(&p).unwrap(), CycleKind::HeadlessCanard).unwrap();
        for v in &c.vertices[..c.vertices.len() - 1] {
            assert!((nullclines(&p, v.u).0 - v.v).abs() < 1e-10);
        }
    }
}
