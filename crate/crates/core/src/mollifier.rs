//! Smooth compactly supported bump, mollified lattice counts N_eps(t) and
//! rests E_eps(t), sandwich checks against the exact count, and shell
//! diagnostics tying shell counts to the derivative of the mollified count.

use crate::bodies::Body;
use crate::lattice::{self, Budget};
use crate::{Error, Result};
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::gamma::gamma;
use std::f64::consts::PI;

/// Radial C-infinity bump supported on |x| < eps with unit total mass:
/// zeta_eps(x) = eps^{-d} c_d exp(-1/(1-|x/eps|^2)).
#[derive(Clone, Copy, Debug)]
pub struct Bump {
    pub eps: f64,
    pub dim: usize,
    /// Normalizer c_d making the unit-support profile integrate to 1.
    norm: f64,
}

/// Unnormalized unit-support profile.
fn profile(r: f64) -> f64 {
    if r.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - r * r)).exp()
    }
}

fn sphere_surface(d: usize) -> f64 {
    2.0 * PI.powf(d as f64 / 2.0) / gamma(d as f64 / 2.0)
}

/// Adaptive Simpson quadrature to absolute tolerance.
fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn rec<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            left + right + (left + right - whole) / 15.0
        } else {
            rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 36)
}

impl Bump {
    pub fn new(dim: usize, eps: f64) -> Result<Bump> {
        if !(eps > 0.0) {
            return Err(Error::Precondition(format!("bump radius {eps} must be > 0")));
        }
        if !(2..=4).contains(&dim) {
            return Err(Error::Precondition(format!("bump dimension {dim} out of range")));
        }
        // 1/c_d = surface(S^{d-1}) * int_0^1 r^{d-1} profile(r) dr
        let radial = adaptive_simpson(
            &|r: f64| r.powi(dim as i32 - 1) * profile(r),
            0.0,
            1.0,
            1e-14,
        );
        Ok(Bump {
            eps,
            dim,
            norm: 1.0 / (sphere_surface(dim) * radial),
        })
    }

    /// zeta_eps(x) = eps^{-d} c_d exp(-1/(1-|x/eps|^2)), zero outside.
    pub fn value(&self, x: &[f64]) -> f64 {
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        self.value_radial(r)
    }

    pub fn value_radial(&self, r: f64) -> f64 {
        self.eps.powi(-(self.dim as i32)) * self.norm * profile(r / self.eps)
    }

    /// Radial mass density w(s) = surf(S^{d-1}) s^{d-1} zeta_eps(s),
    /// integrating to 1 over [0, eps].
    fn mass_density(&self, s: f64) -> f64 {
        sphere_surface(self.dim) * s.powi(self.dim as i32 - 1) * self.value_radial(s)
    }
}

/// Fraction of directions on S^{d-1} with cos(angle) >= c.
pub(crate) fn sphere_cap_fraction(d: usize, c: f64) -> f64 {
    let c = c.clamp(-1.0, 1.0);
    match d {
        2 => c.acos() / PI,
        3 => 0.5 * (1.0 - c),
        4 => {
            let th = c.acos();
            (th - th.sin() * c) / PI
        }
        _ => unreachable!("sphere_cap_fraction dimension"),
    }
}

/// Convolution mass (chi_{t Omega} * zeta_eps)(k) for a single lattice
/// point k of a *ball* of Euclidean radius r0 t, by radial quadrature of
/// the spherical-cap fraction.
fn ball_point_mass(bump: &Bump, dist: f64, radius: f64) -> f64 {
    // dist = |k|, radius = t * r0; both > 0 here
    let f = |s: f64| {
        if s == 0.0 {
            return 0.0;
        }
        let c = (dist * dist + s * s - radius * radius) / (2.0 * dist * s);
        bump.mass_density(s) * sphere_cap_fraction(bump.dim, c)
    };
    adaptive_simpson(&f, 0.0, bump.eps, 1e-10).clamp(0.0, 1.0)
}

/// Angular measure of {phi : rho(k - r u(phi)) <= t} for a planar convex
/// gauge: dense sampling for sign changes, bisection refinement. The
/// inside set can be a union of arcs near high-curvature boundary points,
/// so no single-arc assumption is made.
fn inside_angle_measure(body: &Body, k: [f64; 2], r: f64, t: f64) -> f64 {
    const M: usize = 96;
    let g = |phi: f64| body.gauge(&[k[0] - r * phi.cos(), k[1] - r * phi.sin()]) - t;
    let vals: Vec<f64> = (0..M)
        .map(|j| g(2.0 * PI * j as f64 / M as f64))
        .collect();
    let inside: Vec<bool> = vals.iter().map(|&v| v <= 0.0).collect();
    if inside.iter().all(|&b| b) {
        return 2.0 * PI;
    }
    if inside.iter().all(|&b| !b) {
        return 0.0;
    }
    // refine each sign-change edge to a crossing angle
    let mut crossings: Vec<(f64, bool)> = Vec::new(); // (angle, entering)
    for j in 0..M {
        let j2 = (j + 1) % M;
        if inside[j] != inside[j2] {
            let (mut a, mut b) = (
                2.0 * PI * j as f64 / M as f64,
                2.0 * PI * (j + 1) as f64 / M as f64,
            );
            let mut ga = vals[j];
            for _ in 0..60 {
                let m = 0.5 * (a + b);
                let gm = g(m);
                if (gm <= 0.0) == (ga <= 0.0) {
                    a = m;
                    ga = gm;
                } else {
                    b = m;
                }
            }
            crossings.push((0.5 * (a + b), inside[j2]));
        }
    }
    // sum up inside arc lengths by walking crossings in order
    crossings.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    let mut measure = 0.0;
    let n = crossings.len();
    for i in 0..n {
        let (phi, entering) = crossings[i];
        if entering {
            let next = if i + 1 < n {
                crossings[i + 1].0
            } else {
                crossings[0].0 + 2.0 * PI
            };
            measure += next - phi;
        }
    }
    measure
}

/// Convolution mass for a single planar lattice point in the boundary band.
fn planar_point_mass(body: &Body, bump: &Bump, k: [f64; 2], t: f64) -> f64 {
    let f = |s: f64| bump.mass_density(s) * inside_angle_measure(body, k, s, t) / (2.0 * PI);
    adaptive_simpson(&f, 0.0, bump.eps, 1e-10).clamp(0.0, 1.0)
}

/// Mollified count N_eps(t) = sum_k (chi_{t Omega} * zeta_eps)(k).
/// Points deeper than eps * L inside contribute exactly 1 (L the gauge
/// Lipschitz bound), points farther outside contribute 0; only the
/// boundary band is integrated. Deterministic: band contributions are
/// summed in enumeration order.
pub fn mollified_count(body: &Body, t: f64, eps: f64, budget: &Budget) -> Result<f64> {
    if !(t >= 0.0) || !(eps > 0.0) {
        return Err(Error::Precondition(format!(
            "need t >= 0 and eps > 0, got t={t}, eps={eps}"
        )));
    }
    let lip = body.gauge_lipschitz();
    if !(eps * lip < t) {
        return Err(Error::Precondition(format!(
            "bump radius eps={eps} too large for dilation t={t} (gauge Lipschitz {lip:.3})"
        )));
    }
    let band = eps * lip;
    let inner = lattice::count_points(body, t - band, budget)? as f64;
    let as_ball = match body {
        Body::Ball { dim, radius } => Some((*dim, *radius)),
        Body::Rotated2D { inner, .. } => match inner.as_ref() {
            Body::Ball { dim, radius } => Some((*dim, *radius)),
            _ => None,
        },
        _ => None,
    };
    match as_ball {
        Some((dim, radius)) => {
            let bump = Bump::new(dim, eps)?;
            let ev = lattice::gauge_events(body, t - band, t + band, budget)?;
            let parts: Vec<f64> = ev
                .events
                .par_iter()
                .map(|e| {
                    e.multiplicity as f64 * ball_point_mass(&bump, e.rho * radius, t * radius)
                })
                .collect();
            Ok(inner + parts.iter().sum::<f64>())
        }
        None if body.dim() == 2 => {
            let bump = Bump::new(2, eps)?;
            let pts = band_points_planar(body, t - band, t + band, budget)?;
            let parts: Vec<f64> = pts
                .par_iter()
                .map(|&k| planar_point_mass(body, &bump, k, t))
                .collect();
            Ok(inner + parts.iter().sum::<f64>())
        }
        _ => Err(Error::Precondition(
            "mollified counts support planar bodies and balls only".into(),
        )),
    }
}

/// Lattice points with lo < rho(k) <= hi, in deterministic row order.
fn band_points_planar(body: &Body, lo: f64, hi: f64, budget: &Budget) -> Result<Vec<[f64; 2]>> {
    let mut e1 = [1.0, 0.0];
    let b1 = (hi * body.support(&e1).unwrap()).floor() as i64 + 1;
    e1 = [0.0, 1.0];
    let b2 = (hi * body.support(&e1).unwrap()).floor() as i64 + 1;
    let est = ((2 * b1 + 1) * (2 * b2 + 1)) as u64;
    if est > budget.max_events {
        return Err(Error::BudgetExceeded {
            estimated: est,
            budget: budget.max_events,
        });
    }
    let mut pts = Vec::new();
    for k2 in -b2..=b2 {
        for k1 in -b1..=b1 {
            let x = [k1 as f64, k2 as f64];
            // same tie-banded predicate as count_points, so band points and
            // the interior count partition the lattice without overlap
            if lattice::inside_closed(body, x, hi) && !lattice::inside_closed(body, x, lo) {
                pts.push(x);
            }
        }
    }
    Ok(pts)
}

/// E_eps(t) = N_eps(t) - t^d vol.
pub fn mollified_rest(body: &Body, t: f64, eps: f64, budget: &Budget) -> Result<f64> {
    Ok(mollified_count(body, t, eps, budget)? - t.powi(body.dim() as i32) * body.volume())
}

/// Result of verifying N_eps(t - eps) <= N(t) <= N_eps(t + eps) on a grid,
/// plus the smallest constant C making the rest-form comparison
/// |E(t)| <= |E_eps(t +/- eps)| + C t^{d-1} eps hold.
#[derive(Clone, Debug, Serialize)]
pub struct SandwichReport {
    pub checked: u64,
    pub violations: u64,
    pub c_hat: f64,
}

pub fn sandwich_check(body: &Body, grid: &[(f64, f64)], budget: &Budget) -> Result<SandwichReport> {
    if grid.is_empty() {
        return Err(Error::Precondition("empty sandwich grid".into()));
    }
    let d = body.dim() as i32;
    let vol = body.volume();
    let mut violations = 0u64;
    let mut c_hat: f64 = 0.0;
    for &(t, eps) in grid {
        if !(eps > 0.0) || !(eps < t) {
            return Err(Error::Precondition(format!(
                "need 0 < eps < t, got t={t}, eps={eps}"
            )));
        }
        let n = lattice::count_points(body, t, budget)? as f64;
        let n_lo = mollified_count(body, t - eps, eps, budget)?;
        let n_hi = mollified_count(body, t + eps, eps, budget)?;
        if !(n_lo <= n && n <= n_hi) {
            violations += 1;
        }
        let e = n - t.powi(d) * vol;
        let e_lo = n_lo - (t - eps).powi(d) * vol;
        let e_hi = n_hi - (t + eps).powi(d) * vol;
        let weight = t.powi(d - 1) * eps;
        c_hat = c_hat
            .max((e.abs() - e_hi.abs()) / weight)
            .max((e_lo.abs() - e.abs()) / weight);
    }
    Ok(SandwichReport {
        checked: grid.len() as u64,
        violations,
        c_hat: c_hat.max(0.0),
    })
}

/// Shell diagnostic: relates the exact shell count S(tau, eps) to the
/// derivative of the mollified count at the enlarged smoothing radius
/// eps_check = 4 eps / delta0, delta0 = inradius / 2.
#[derive(Clone, Debug, Serialize)]
pub struct ShellDiag {
    pub tau: f64,
    pub eps: f64,
    pub delta0: f64,
    pub eps_check: f64,
    pub shell_count: u64,
    /// min over sampled |t - tau| <= eps of N'_{eps_check}(t) * eps / S;
    /// None when the bound is vacuous (S = 0).
    pub c0_hat: Option<f64>,
    /// int over [tau-eps, tau+eps] of E_{eps_check}^2 N'_{eps_check} dt.
    pub rest_energy_integral: f64,
    /// Cube root of the integral term, the shape entering the shell bound.
    pub cube_root_term: f64,
    /// tau^{d-1} eps, the surface term of the shell bound.
    pub surface_term: f64,
}

pub fn shell_bound_diag(body: &Body, tau: f64, eps: f64, budget: &Budget) -> Result<ShellDiag> {
    if !(tau >= 1.0) || !(eps > 0.0) || !(eps < 1.0) {
        return Err(Error::Precondition(format!(
            "need tau >= 1 and 0 < eps < 1, got tau={tau}, eps={eps}"
        )));
    }
    let delta0 = body.inradius() / 2.0;
    let eps_check = 4.0 * eps / delta0;
    let s = lattice::shell_count(body, tau, eps, budget)?.count;
    let d = body.dim() as i32;
    let vol = body.volume();
    let n_eps = |t: f64| mollified_count(body, t, eps_check, budget);
    let step = eps / 64.0;
    let deriv = |t: f64| -> Result<f64> {
        // central difference; re-sample once if the two one-sided slopes
        // disagree badly (band-edge artifacts)
        let fd = |t: f64| -> Result<(f64, f64, f64)> {
            let (a, b, c) = (n_eps(t - step)?, n_eps(t)?, n_eps(t + step)?);
            Ok(((b - a) / step, (c - b) / step, (c - a) / (2.0 * step)))
        };
        let (l, r, c) = fd(t)?;
        let scale = l.abs().max(r.abs()).max(1.0);
        if (l - r).abs() <= 0.5 * scale {
            return Ok(c);
        }
        let (_, _, c2) = fd(t + step / 3.0)?;
        Ok(c2)
    };
    let samples = 9;
    let mut min_deriv = f64::INFINITY;
    let mut integral = 0.0;
    let mut prev: Option<(f64, f64)> = None;
    for i in 0..samples {
        let t = tau - eps + 2.0 * eps * i as f64 / (samples - 1) as f64;
        let np = deriv(t)?;
        min_deriv = min_deriv.min(np);
        let e = n_eps(t)? - t.powi(d) * vol;
        let val = e * e * np.max(0.0);
        if let Some((tp, vp)) = prev {
            integral += 0.5 * (val + vp) * (t - tp);
        }
        prev = Some((t, val));
    }
    let c0_hat = if s > 0 {
        Some(min_deriv * eps / s as f64)
    } else {
        None
    };
    Ok(ShellDiag {
        tau,
        eps,
        delta0,
        eps_check,
        shell_count: s,
        c0_hat,
        rest_energy_integral: integral,
        cube_root_term: integral.max(0.0).cbrt(),
        surface_term: tau.powi(d - 1) * eps,
    })
}
