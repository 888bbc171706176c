//! Convex-body geometry: gauge, support function, polar duality, curvature,
//! flat-point detection, rotation, and the compact text serialization used
//! by the CLI.
//!
//! The family is closed under polarity and planar rotation. Every variant
//! reduces (after unwinding rotations) to a weighted p-norm gauge
//! `rho(x) = (sum (w_i |x_i|)^p)^(1/p)`, which gives analytic gauges,
//! support functions, gradients, and boundary curvature with no quadrature.

use crate::{Error, Result};
use statrs::function::gamma::gamma;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

/// A convex body from the closed family, containing the origin in its
/// interior. All variants are origin-symmetric.
#[derive(Clone, Debug, PartialEq)]
pub enum Body {
    /// Euclidean ball of dimension `dim >= 2`.
    Ball { dim: usize, radius: f64 },
    /// Axis-parallel ellipsoid with semiaxes `semiaxes[i] > 0`.
    Ellipsoid { semiaxes: Vec<f64> },
    /// Planar superellipse `(|x|/a)^m + (|y|/b)^m <= 1`, even `m >= 2`.
    Superellipse2D { exponent: u32, a: f64, b: f64 },
    /// Polar of `Superellipse2D { exponent, a, b }`: gauge is the dual
    /// `l^{m/(m-1)}` expression `((a|x|)^q + (b|y|)^q)^{1/q}`, stored with
    /// the primal parameters so the polar map is exact.
    SuperellipsePolar2D { exponent: u32, a: f64, b: f64 },
    /// Planar body rotated counterclockwise by `angle`.
    Rotated2D { inner: Box<Body>, angle: f64 },
}

/// A boundary point with vanishing curvature, with its frame and type.
#[derive(Clone, Debug)]
pub struct FlatPoint {
    pub point: [f64; 2],
    /// Outward unit normal at the point.
    pub normal: [f64; 2],
    /// Unit tangent at the point.
    pub tangent: [f64; 2],
    /// Order of tangency `m_P >= 3` (even for this family).
    pub order: u32,
    /// Raw log-log slope estimate of the order, before rounding.
    pub fitted_order: f64,
}

/// Curvature threshold below which a boundary point counts as flat.
pub const FLAT_TOL: f64 = 1e-8;

pub(crate) fn rotate2(x: [f64; 2], theta: f64) -> [f64; 2] {
    let (s, c) = theta.sin_cos();
    [c * x[0] - s * x[1], s * x[0] + c * x[1]]
}

/// Weighted p-norm data: gauge = (sum (w_i |x_i|)^p)^(1/p).
#[derive(Clone, Debug)]
pub(crate) struct PNorm {
    pub p: f64,
    pub w: Vec<f64>,
}

impl PNorm {
    fn gauge(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.w.len());
        if self.p == 2.0 {
            let s: f64 = x.iter().zip(&self.w).map(|(&xi, &wi)| {
                let t = wi * xi;
                t * t
            }).sum();
            return s.sqrt();
        }
        let m = x
            .iter()
            .zip(&self.w)
            .map(|(&xi, &wi)| (wi * xi).abs())
            .fold(0.0f64, f64::max);
        if m == 0.0 {
            return 0.0;
        }
        let s: f64 = x
            .iter()
            .zip(&self.w)
            .map(|(&xi, &wi)| ((wi * xi).abs() / m).powf(self.p))
            .sum();
        m * s.powf(1.0 / self.p)
    }

    /// Dual gauge: support function of the body.
    fn dual(&self) -> PNorm {
        PNorm {
            p: self.p / (self.p - 1.0),
            w: self.w.iter().map(|w| 1.0 / w).collect(),
        }
    }

    /// Gradient of the gauge at `x != 0`.
    fn grad(&self, x: &[f64]) -> Vec<f64> {
        let rho = self.gauge(x);
        x.iter()
            .zip(&self.w)
            .map(|(&xi, &wi)| {
                if xi == 0.0 {
                    0.0
                } else {
                    wi.powf(self.p) * xi.abs().powf(self.p - 1.0) * xi.signum()
                        / rho.powf(self.p - 1.0)
                }
            })
            .collect()
    }

    /// Boundary point whose outward normal is parallel to `xi` (the argmax
    /// of `<x, xi>` over the body). Hoelder equality case, closed form.
    fn normal_point(&self, xi: &[f64]) -> Vec<f64> {
        let pp = self.p / (self.p - 1.0);
        let c: Vec<f64> = xi
            .iter()
            .zip(&self.w)
            .map(|(&x, &w)| x.abs() / w)
            .collect();
        let m = c.iter().cloned().fold(0.0f64, f64::max);
        let s: f64 = c.iter().map(|&ci| (ci / m).powf(pp)).sum();
        let support = m * s.powf(1.0 / pp);
        xi.iter()
            .zip(c.iter().zip(&self.w))
            .map(|(&x, (&ci, &w))| {
                if ci == 0.0 {
                    0.0
                } else {
                    x.signum() * (ci / support).powf(pp - 1.0) / w
                }
            })
            .collect()
    }

    /// Planar level-set curvature of the boundary at a boundary point.
    /// Uses second partials of F = sum (w|x|)^p; F_xy = 0.
    fn curvature_at(&self, x: [f64; 2]) -> f64 {
        let p = self.p;
        let fx = p * self.w[0].powf(p) * x[0].abs().powf(p - 1.0) * x[0].signum();
        let fy = p * self.w[1].powf(p) * x[1].abs().powf(p - 1.0) * x[1].signum();
        let fxx = p * (p - 1.0) * self.w[0].powf(p) * pow_abs(x[0], p - 2.0);
        let fyy = p * (p - 1.0) * self.w[1].powf(p) * pow_abs(x[1], p - 2.0);
        let num = fxx * fy * fy + fyy * fx * fx;
        let den = (fx * fx + fy * fy).powf(1.5);
        num / den
    }
}

/// |x|^e with the convention 0^0 = 1, 0^negative = +inf.
fn pow_abs(x: f64, e: f64) -> f64 {
    if x == 0.0 {
        if e > 0.0 {
            0.0
        } else if e == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        x.abs().powf(e)
    }
}

impl Body {
    pub fn ball(dim: usize, radius: f64) -> Result<Body> {
        if dim < 2 {
            return Err(Error::InvalidBody(format!("ball dimension {dim} < 2")));
        }
        if !(radius > 0.0) {
            return Err(Error::InvalidBody(format!("ball radius {radius} <= 0")));
        }
        Ok(Body::Ball { dim, radius })
    }

    pub fn ellipsoid(semiaxes: Vec<f64>) -> Result<Body> {
        if semiaxes.len() < 2 {
            return Err(Error::InvalidBody("ellipsoid needs >= 2 semiaxes".into()));
        }
        if semiaxes.iter().any(|&a| !(a > 0.0)) {
            return Err(Error::InvalidBody("ellipsoid semiaxes must be > 0".into()));
        }
        Ok(Body::Ellipsoid { semiaxes })
    }

    pub fn superellipse(exponent: u32, a: f64, b: f64) -> Result<Body> {
        if exponent < 2 || exponent % 2 != 0 {
            return Err(Error::InvalidBody(format!(
                "superellipse exponent {exponent} must be even and >= 2"
            )));
        }
        if !(a > 0.0) || !(b > 0.0) {
            return Err(Error::InvalidBody("superellipse semiaxes must be > 0".into()));
        }
        Ok(Body::Superellipse2D { exponent, a, b })
    }

    pub fn dim(&self) -> usize {
        match self {
            Body::Ball { dim, .. } => *dim,
            Body::Ellipsoid { semiaxes } => semiaxes.len(),
            Body::Superellipse2D { .. } | Body::SuperellipsePolar2D { .. } => 2,
            Body::Rotated2D { inner, .. } => inner.dim(),
        }
    }

    pub fn is_planar(&self) -> bool {
        self.dim() == 2
    }

    /// Accumulated planar rotation angle (0 for unrotated bodies).
    pub fn rotation_angle(&self) -> f64 {
        match self {
            Body::Rotated2D { inner, angle } => angle + inner.rotation_angle(),
            _ => 0.0,
        }
    }

    /// Resolve to a weighted p-norm plus a total rotation angle.
    /// The angle is 0 for unrotated bodies.
    pub(crate) fn resolved(&self) -> (PNorm, f64) {
        match self {
            Body::Ball { dim, radius } => (
                PNorm {
                    p: 2.0,
                    w: vec![1.0 / radius; *dim],
                },
                0.0,
            ),
            Body::Ellipsoid { semiaxes } => (
                PNorm {
                    p: 2.0,
                    w: semiaxes.iter().map(|a| 1.0 / a).collect(),
                },
                0.0,
            ),
            Body::Superellipse2D { exponent, a, b } => (
                PNorm {
                    p: *exponent as f64,
                    w: vec![1.0 / a, 1.0 / b],
                },
                0.0,
            ),
            Body::SuperellipsePolar2D { exponent, a, b } => {
                let m = *exponent as f64;
                (
                    PNorm {
                        p: m / (m - 1.0),
                        w: vec![*a, *b],
                    },
                    0.0,
                )
            }
            Body::Rotated2D { inner, angle } => {
                let (pn, th) = inner.resolved();
                (pn, th + angle)
            }
        }
    }

    /// Minkowski functional: the unique `lambda >= 0` with `x` on
    /// `lambda * boundary`; 0 iff x = 0.
    pub fn gauge(&self, x: &[f64]) -> f64 {
        let (pn, theta) = self.resolved();
        if theta == 0.0 {
            pn.gauge(x)
        } else {
            let u = rotate2([x[0], x[1]], -theta);
            pn.gauge(&u)
        }
    }

    /// Gradient of the gauge at `x != 0` (outward normal direction).
    pub fn gauge_grad(&self, x: &[f64]) -> Vec<f64> {
        let (pn, theta) = self.resolved();
        if theta == 0.0 {
            pn.grad(x)
        } else {
            let u = rotate2([x[0], x[1]], -theta);
            let g = pn.grad(&u);
            rotate2([g[0], g[1]], theta).to_vec()
        }
    }

    /// Support function `h(xi) = sup_{x in body} <x, xi>`; equals the gauge
    /// of the polar body. Rejects `xi = 0`.
    pub fn support(&self, xi: &[f64]) -> Result<f64> {
        if xi.iter().all(|&v| v == 0.0) {
            return Err(Error::Precondition("support direction must be nonzero".into()));
        }
        let (pn, theta) = self.resolved();
        let dual = pn.dual();
        if theta == 0.0 {
            Ok(dual.gauge(xi))
        } else {
            let u = rotate2([xi[0], xi[1]], -theta);
            Ok(dual.gauge(&u))
        }
    }

    /// Polar body, in closed form for every variant.
    pub fn polar(&self) -> Body {
        match self {
            Body::Ball { dim, radius } => Body::Ball {
                dim: *dim,
                radius: 1.0 / radius,
            },
            Body::Ellipsoid { semiaxes } => Body::Ellipsoid {
                semiaxes: semiaxes.iter().map(|a| 1.0 / a).collect(),
            },
            Body::Superellipse2D { exponent, a, b } => Body::SuperellipsePolar2D {
                exponent: *exponent,
                a: *a,
                b: *b,
            },
            Body::SuperellipsePolar2D { exponent, a, b } => Body::Superellipse2D {
                exponent: *exponent,
                a: *a,
                b: *b,
            },
            Body::Rotated2D { inner, angle } => Body::Rotated2D {
                inner: Box::new(inner.polar()),
                angle: *angle,
            },
        }
    }

    /// The unique boundary point whose outward normal is parallel to `xi`.
    pub fn normal_point(&self, xi: &[f64]) -> Result<Vec<f64>> {
        if xi.iter().all(|&v| v == 0.0) {
            return Err(Error::Precondition("normal direction must be nonzero".into()));
        }
        let (pn, theta) = self.resolved();
        if theta == 0.0 {
            Ok(pn.normal_point(xi))
        } else {
            let u = rotate2([xi[0], xi[1]], -theta);
            let q = pn.normal_point(&u);
            Ok(rotate2([q[0], q[1]], theta).to_vec())
        }
    }

    /// Closed-form volume.
    pub fn volume(&self) -> f64 {
        fn unit_ball_vol(d: usize) -> f64 {
            PI.powf(d as f64 / 2.0) / gamma(d as f64 / 2.0 + 1.0)
        }
        match self {
            Body::Ball { dim, radius } => radius.powi(*dim as i32) * unit_ball_vol(*dim),
            Body::Ellipsoid { semiaxes } => {
                semiaxes.iter().product::<f64>() * unit_ball_vol(semiaxes.len())
            }
            Body::Superellipse2D { exponent, a, b } => {
                let m = *exponent as f64;
                4.0 * a * b * gamma(1.0 + 1.0 / m).powi(2) / gamma(1.0 + 2.0 / m)
            }
            Body::SuperellipsePolar2D { exponent, a, b } => {
                let m = *exponent as f64;
                let q = m / (m - 1.0);
                4.0 / (a * b) * gamma(1.0 + 1.0 / q).powi(2) / gamma(1.0 + 2.0 / q)
            }
            Body::Rotated2D { inner, .. } => inner.volume(),
        }
    }

    /// Boundary point in direction `t` (planar angle parametrization
    /// `x(t) = u(t) / rho(u(t))`, `u = (cos t, sin t)`).
    pub fn boundary_point(&self, t: f64) -> [f64; 2] {
        debug_assert!(self.is_planar());
        let u = [t.cos(), t.sin()];
        let g = self.gauge(&u);
        [u[0] / g, u[1] / g]
    }

    /// Analytic derivative of the boundary parametrization.
    pub fn boundary_velocity(&self, t: f64) -> [f64; 2] {
        let u = [t.cos(), t.sin()];
        let du = [-t.sin(), t.cos()];
        let g = self.gauge(&u);
        let grad = self.gauge_grad(&u);
        let dg = grad[0] * du[0] + grad[1] * du[1];
        [
            (du[0] * g - u[0] * dg) / (g * g),
            (du[1] * g - u[1] * dg) / (g * g),
        ]
    }

    /// Planar boundary curvature at parameter `t` (level-set closed form).
    pub fn curvature(&self, t: f64) -> f64 {
        self.curvature_at_point(self.boundary_point(t))
    }

    /// Planar boundary curvature at a boundary point.
    pub fn curvature_at_point(&self, x: [f64; 2]) -> f64 {
        debug_assert!(self.is_planar());
        let (pn, theta) = self.resolved();
        let u = if theta == 0.0 { x } else { rotate2(x, -theta) };
        pn.curvature_at(u)
    }

    /// Gaussian curvature of a Ball or Ellipsoid boundary at a boundary
    /// point, in any dimension: `K = (prod a_i^2)^-1 (sum x_i^2/a_i^4)^-(d+1)/2`.
    pub fn gaussian_curvature_at(&self, x: &[f64]) -> Result<f64> {
        let axes: Vec<f64> = match self {
            Body::Ball { dim, radius } => vec![*radius; *dim],
            Body::Ellipsoid { semiaxes } => semiaxes.clone(),
            _ => {
                return Err(Error::Precondition(
                    "closed-form Gaussian curvature needs Ball or Ellipsoid".into(),
                ))
            }
        };
        let d = axes.len();
        let prod_sq: f64 = axes.iter().map(|a| a * a).product();
        let s: f64 = x
            .iter()
            .zip(&axes)
            .map(|(&xi, &a)| xi * xi / a.powi(4))
            .sum();
        Ok(1.0 / (prod_sq * s.powf((d as f64 + 1.0) / 2.0)))
    }

    /// Counterclockwise rotation wrapper. Planar only.
    pub fn rotate(&self, theta: f64) -> Result<Body> {
        if !self.is_planar() {
            return Err(Error::Precondition("rotation is planar only".into()));
        }
        Ok(Body::Rotated2D {
            inner: Box::new(self.clone()),
            angle: theta.rem_euclid(2.0 * PI),
        })
    }

    /// Largest `r` with the Euclidean r-ball inside the body
    /// (reciprocal of the gauge Lipschitz constant).
    pub fn inradius(&self) -> f64 {
        1.0 / self.max_gauge_on_sphere()
    }

    /// Largest Euclidean norm of a boundary point.
    pub fn circumradius(&self) -> f64 {
        1.0 / self.min_gauge_on_sphere()
    }

    /// Lipschitz constant of the gauge: max of rho on the unit sphere.
    pub fn gauge_lipschitz(&self) -> f64 {
        self.max_gauge_on_sphere()
    }

    fn max_gauge_on_sphere(&self) -> f64 {
        let (pn, _) = self.resolved();
        if pn.p == 2.0 {
            return pn.w.iter().cloned().fold(0.0, f64::max);
        }
        self.extremal_gauge_planar(true)
    }

    fn min_gauge_on_sphere(&self) -> f64 {
        let (pn, _) = self.resolved();
        if pn.p == 2.0 {
            return pn.w.iter().cloned().fold(f64::INFINITY, f64::min);
        }
        self.extremal_gauge_planar(false)
    }

    /// Scan + golden-section refine over the circle (rotation-invariant, so
    /// work on the unrotated p-norm).
    fn extremal_gauge_planar(&self, want_max: bool) -> f64 {
        let (pn, _) = self.resolved();
        let f = |t: f64| {
            let v = pn.gauge(&[t.cos(), t.sin()]);
            if want_max {
                -v
            } else {
                v
            }
        };
        let n = 1024;
        let mut best_t = 0.0;
        let mut best = f64::INFINITY;
        for i in 0..n {
            let t = PI / 2.0 * i as f64 / n as f64; // symmetry: one quadrant
            let v = f(t);
            if v < best {
                best = v;
                best_t = t;
            }
        }
        let h = PI / 2.0 / n as f64;
        let (mut a, mut b) = (best_t - h, best_t + h);
        let phi = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..80 {
            let c = b - phi * (b - a);
            let d = a + phi * (b - a);
            if f(c) < f(d) {
                b = d;
            } else {
                a = c;
            }
        }
        let v = f((a + b) / 2.0);
        if want_max {
            -v
        } else {
            v
        }
    }

    /// All planar boundary points with curvature below [`FLAT_TOL`], with
    /// type `m_P` from a log-log slope fit of curvature against arclength.
    pub fn flat_points(&self) -> Result<Vec<FlatPoint>> {
        if !self.is_planar() {
            return Err(Error::Precondition("flat-point detection is planar only".into()));
        }
        let n = 4096usize;
        let kappa: Vec<f64> = (0..n)
            .map(|i| self.curvature(2.0 * PI * i as f64 / n as f64))
            .collect();
        let mut out: Vec<FlatPoint> = Vec::new();
        for i in 0..n {
            let prev = kappa[(i + n - 1) % n];
            let next = kappa[(i + 1) % n];
            // coarse local minimum, generous threshold before refinement
            if kappa[i] <= prev && kappa[i] <= next && kappa[i] < 1e-3 {
                let t0 = 2.0 * PI * i as f64 / n as f64;
                let h = 2.0 * PI / n as f64;
                let t_star = golden_min(|t| self.curvature(t), t0 - h, t0 + h);
                if self.curvature(t_star) >= FLAT_TOL {
                    continue;
                }
                let p = self.boundary_point(t_star);
                if out.iter().any(|fp| {
                    (fp.point[0] - p[0]).hypot(fp.point[1] - p[1]) < 1e-6
                }) {
                    continue;
                }
                let grad = self.gauge_grad(&p);
                let gn = (grad[0] * grad[0] + grad[1] * grad[1]).sqrt();
                let normal = [grad[0] / gn, grad[1] / gn];
                let tangent = [-normal[1], normal[0]];
                let (order, fitted) = self.fit_flat_order(t_star)?;
                out.push(FlatPoint {
                    point: p,
                    normal,
                    tangent,
                    order,
                    fitted_order: fitted,
                });
            }
        }
        out.sort_by(|a, b| {
            let ta = a.point[1].atan2(a.point[0]);
            let tb = b.point[1].atan2(b.point[0]);
            ta.partial_cmp(&tb).unwrap()
        });
        Ok(out)
    }

    /// Estimate the tangency order at a flat point from the slope of
    /// log curvature vs log arclength offset, offsets in [1e-4, 1e-2].
    fn fit_flat_order(&self, t_star: f64) -> Result<(u32, f64)> {
        let speed = {
            let v = self.boundary_velocity(t_star);
            (v[0] * v[0] + v[1] * v[1]).sqrt()
        };
        let n_off = 9;
        let mut ss = Vec::new();
        let mut ks = Vec::new();
        for j in 0..n_off {
            let s = 1e-4 * (1e2f64).powf(j as f64 / (n_off - 1) as f64);
            let dt = s / speed;
            let k = 0.5 * (self.curvature(t_star + dt) + self.curvature(t_star - dt));
            ss.push(s);
            ks.push(k);
        }
        let fit = crate::fit::loglog(&ss, &ks);
        let m_fit = fit.slope + 2.0;
        let m_round = 2.0 * (m_fit / 2.0).round();
        if (m_fit - m_round).abs() > 0.1 || m_round < 3.0 {
            return Err(Error::Convergence(format!(
                "flat-point type fit did not stabilize: slope {:.4} (order estimate {:.4})",
                fit.slope, m_fit
            )));
        }
        Ok((m_round as u32, m_fit))
    }
}

fn golden_min<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> f64 {
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..80 {
        let c = b - phi * (b - a);
        let d = a + phi * (b - a);
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    (a + b) / 2.0
}

// ---------------------------------------------------------------------------
// Compact text serialization: `ball:d=3,r=1`, `ellipsoid:a=2,b=1`,
// `superellipse:m=4,a=1,b=1,theta=0.5535`, `superellipse-polar:m=4,a=1,b=1`.
// A `theta=` key on any planar form wraps the body in a rotation.
// ---------------------------------------------------------------------------

impl fmt::Display for Body {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Body::Ball { dim, radius } => write!(f, "ball:d={},r={}", dim, radius),
            Body::Ellipsoid { semiaxes } => {
                write!(f, "ellipsoid:")?;
                let keys = ["a", "b", "c", "d"];
                for (i, a) in semiaxes.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{}={}", keys[i], a)?;
                }
                Ok(())
            }
            Body::Superellipse2D { exponent, a, b } => {
                write!(f, "superellipse:m={},a={},b={}", exponent, a, b)
            }
            Body::SuperellipsePolar2D { exponent, a, b } => {
                write!(f, "superellipse-polar:m={},a={},b={}", exponent, a, b)
            }
            Body::Rotated2D { inner, angle } => write!(f, "{},theta={}", inner, angle),
        }
    }
}

impl FromStr for Body {
    type Err = Error;

    fn from_str(s: &str) -> Result<Body> {
        let s = s.trim();
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| Error::InvalidBody(format!("missing ':' in body string '{s}'")))?;
        let mut kv = std::collections::BTreeMap::new();
        for part in rest.split(',') {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::InvalidBody(format!("bad key=value '{part}'")))?;
            let val: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::InvalidBody(format!("bad number '{v}' for key '{k}'")))?;
            kv.insert(k.trim().to_string(), val);
        }
        let theta = kv.remove("theta");
        let body = match kind.trim() {
            "ball" => {
                let d = *kv
                    .get("d")
                    .ok_or_else(|| Error::InvalidBody("ball needs d=".into()))?;
                let r = *kv
                    .get("r")
                    .ok_or_else(|| Error::InvalidBody("ball needs r=".into()))?;
                if d.fract() != 0.0 || d < 2.0 {
                    return Err(Error::InvalidBody(format!("bad ball dimension {d}")));
                }
                Body::ball(d as usize, r)?
            }
            "ellipsoid" => {
                let mut axes = Vec::new();
                for key in ["a", "b", "c", "d"] {
                    if let Some(&v) = kv.get(key) {
                        axes.push(v);
                    }
                }
                Body::ellipsoid(axes)?
            }
            "superellipse" | "superellipse-polar" => {
                let m = *kv
                    .get("m")
                    .ok_or_else(|| Error::InvalidBody("superellipse needs m=".into()))?;
                let a = kv.get("a").copied().unwrap_or(1.0);
                let b = kv.get("b").copied().unwrap_or(1.0);
                if m.fract() != 0.0 {
                    return Err(Error::InvalidBody(format!("bad exponent {m}")));
                }
                let se = Body::superellipse(m as u32, a, b)?;
                if kind.trim() == "superellipse-polar" {
                    se.polar()
                } else {
                    se
                }
            }
            other => {
                return Err(Error::InvalidBody(format!("unknown body kind '{other}'")));
            }
        };
        match theta {
            Some(t) if t != 0.0 => body.rotate(t),
            _ => Ok(body),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn sample_bodies() -> Vec<Body> {
        vec![
            Body::ball(2, 1.0).unwrap(),
            Body::ball(3, 1.5).unwrap(),
            Body::ellipsoid(vec![2.0, 1.0]).unwrap(),
            Body::ellipsoid(vec![1.5, 1.0, 0.8]).unwrap(),
            Body::superellipse(4, 1.0, 1.0).unwrap(),
            Body::superellipse(6, 1.3, 0.9).unwrap(),
            Body::superellipse(4, 1.0, 1.0).unwrap().polar(),
            Body::superellipse(4, 1.2, 0.7).unwrap().rotate(0.37).unwrap(),
        ]
    }

    fn rand_point(rng: &mut impl Rng, d: usize) -> Vec<f64> {
        (0..d).map(|_| rng.gen_range(-3.0..3.0)).collect()
    }

    #[test]
    fn gauge_examples() {
        let b = Body::ball(2, 1.0).unwrap();
        assert!((b.gauge(&[3.0, 4.0]) - 5.0).abs() < 1e-12);
        let e = Body::ellipsoid(vec![2.0, 1.0]).unwrap();
        assert!((e.gauge(&[2.0, 0.0]) - 1.0).abs() < 1e-12);
        let s = Body::superellipse(4, 1.0, 1.0).unwrap();
        // bisection oracle on lambda -> (x/lambda inside)
        let x = [1.0f64, 1.0f64];
        let (mut lo, mut hi) = (0.5, 4.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let y = [x[0] / mid, x[1] / mid];
            if y[0].powi(4) + y[1].powi(4) <= 1.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let oracle = 0.5 * (lo + hi);
        assert!((oracle - 2f64.powf(0.25)).abs() < 1e-10);
        assert!((s.gauge(&x) - oracle).abs() < 1e-10);
    }

    #[test]
    fn gauge_is_homogeneous_and_subadditive() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for body in sample_bodies() {
            let d = body.dim();
            for _ in 0..50 {
                let x = rand_point(&mut rng, d);
                if x.iter().all(|&v| v == 0.0) {
                    continue;
                }
                let lam = rng.gen_range(0.1..5.0);
                let xs: Vec<f64> = x.iter().map(|v| v * lam).collect();
                let g = body.gauge(&x);
                assert!(g > 0.0 && g.is_finite());
                assert!((body.gauge(&xs) - lam * g).abs() <= 1e-12 * lam * g.max(1.0));
                let y = rand_point(&mut rng, d);
                let xy: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
                assert!(body.gauge(&xy) <= g + body.gauge(&y) + 1e-10);
            }
            assert_eq!(body.gauge(&vec![0.0; d]), 0.0);
        }
    }

    #[test]
    fn superellipse_m2_matches_ellipsoid() {
        let s = Body::superellipse(2, 2.0, 1.0).unwrap();
        let e = Body::ellipsoid(vec![2.0, 1.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let x = rand_point(&mut rng, 2);
            let (gs, ge) = (s.gauge(&x), e.gauge(&x));
            assert!((gs - ge).abs() <= 1e-12 * ge.max(1.0));
        }
    }

    #[test]
    fn support_examples() {
        let e = Body::ellipsoid(vec![2.0, 1.0]).unwrap();
        assert!((e.support(&[1.0, 0.0]).unwrap() - 2.0).abs() < 1e-12);
        let b = Body::ball(2, 1.0).unwrap();
        assert!((b.support(&[3.0, 4.0]).unwrap() - 5.0).abs() < 1e-12);
        let s = Body::superellipse(4, 1.0, 1.0).unwrap();
        // grid-maximization oracle
        let xi = [1.0, 1.0];
        let mut best = 0.0f64;
        for i in 0..200_000 {
            let t = 2.0 * PI * i as f64 / 200_000.0;
            let p = s.boundary_point(t);
            best = best.max(p[0] * xi[0] + p[1] * xi[1]);
        }
        let h = s.support(&xi).unwrap();
        assert!((h - 2f64.powf(0.75)).abs() < 1e-12);
        assert!(h >= best && h - best < 1e-8);
        assert!(b.support(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn polar_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for body in sample_bodies() {
            let polar = body.polar();
            let d = body.dim();
            for _ in 0..100 {
                let xi = rand_point(&mut rng, d);
                if xi.iter().map(|v| v * v).sum::<f64>() < 1e-6 {
                    continue;
                }
                let h = body.support(&xi).unwrap();
                let g = polar.gauge(&xi);
                assert!((h - g).abs() <= 1e-10 * h.max(1.0), "support/polar mismatch");
                // polar(polar) = body
                let gg = polar.polar().gauge(&xi);
                let g0 = body.gauge(&xi);
                assert!((gg - g0).abs() <= 1e-10 * g0.max(1.0));
            }
        }
        assert_eq!(Body::ball(2, 1.0).unwrap().polar(), Body::ball(2, 1.0).unwrap());
        assert_eq!(
            Body::ellipsoid(vec![2.0, 1.0]).unwrap().polar(),
            Body::ellipsoid(vec![0.5, 1.0]).unwrap()
        );
    }

    #[test]
    fn normal_point_examples() {
        let b = Body::ball(2, 1.0).unwrap();
        let p = b.normal_point(&[0.0, 1.0]).unwrap();
        assert!((p[0]).abs() < 1e-12 && (p[1] - 1.0).abs() < 1e-12);
        let e = Body::ellipsoid(vec![2.0, 1.0]).unwrap();
        let p = e.normal_point(&[1.0, 0.0]).unwrap();
        assert!((p[0] - 2.0).abs() < 1e-12 && p[1].abs() < 1e-12);
        let s = Body::superellipse(4, 1.0, 1.0).unwrap();
        let p = s.normal_point(&[1.0, 1.0]).unwrap();
        let expect = 2f64.powf(-0.25);
        assert!((p[0] - expect).abs() < 1e-10 && (p[1] - expect).abs() < 1e-10);
        assert!(s.normal_point(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn normal_point_maximizes_inner_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for body in sample_bodies().into_iter().filter(|b| b.is_planar()) {
            for _ in 0..20 {
                let xi = [rng.gen_range(-2.0..2.0f64), rng.gen_range(-2.0..2.0f64)];
                if xi[0].hypot(xi[1]) < 0.1 {
                    continue;
                }
                let p = body.normal_point(&xi).unwrap();
                let val = p[0] * xi[0] + p[1] * xi[1];
                let h = body.support(&xi).unwrap();
                assert!((val - h).abs() <= 1e-10 * h);
                // brute-force boundary grid + golden refine
                let f = |t: f64| {
                    let q = body.boundary_point(t);
                    -(q[0] * xi[0] + q[1] * xi[1])
                };
                let mut best_t = 0.0;
                let mut best = f64::INFINITY;
                for i in 0..4096 {
                    let t = 2.0 * PI * i as f64 / 4096.0;
                    let v = f(t);
                    if v < best {
                        best = v;
                        best_t = t;
                    }
                }
                let t = golden_min(f, best_t - 0.01, best_t + 0.01);
                assert!((-f(t) - val).abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn curvature_examples() {
        let b = Body::ball(2, 2.0).unwrap();
        for t in [0.0, 0.7, 2.0] {
            assert!((b.curvature(t) - 0.5).abs() < 1e-12);
        }
        let e = Body::ellipsoid(vec![2.0, 1.0]).unwrap();
        assert!((e.curvature_at_point([2.0, 0.0]) - 2.0).abs() < 1e-10);
        // finite-difference oracle at a generic point
        let t0 = 0.83;
        let h = 1e-4;
        let fd = {
            let pm: Vec<[f64; 2]> = [-2.0, -1.0, 0.0, 1.0, 2.0]
                .iter()
                .map(|&k| e.boundary_point(t0 + k * h))
                .collect();
            let d1 = [
                (pm[0][0] - 8.0 * pm[1][0] + 8.0 * pm[3][0] - pm[4][0]) / (12.0 * h),
                (pm[0][1] - 8.0 * pm[1][1] + 8.0 * pm[3][1] - pm[4][1]) / (12.0 * h),
            ];
            let d2 = [
                (-pm[0][0] + 16.0 * pm[1][0] - 30.0 * pm[2][0] + 16.0 * pm[3][0] - pm[4][0])
                    / (12.0 * h * h),
                (-pm[0][1] + 16.0 * pm[1][1] - 30.0 * pm[2][1] + 16.0 * pm[3][1] - pm[4][1])
                    / (12.0 * h * h),
            ];
            (d1[0] * d2[1] - d1[1] * d2[0]).abs() / d1[0].hypot(d1[1]).powi(3)
        };
        assert!((e.curvature(t0) - fd).abs() < 1e-6 * fd);
        let s = Body::superellipse(4, 1.0, 1.0).unwrap();
        assert_eq!(s.curvature_at_point([1.0, 0.0]), 0.0);
    }

    #[test]
    fn gaussian_curvature_closed_form() {
        let b = Body::ball(3, 2.0).unwrap();
        let k = b.gaussian_curvature_at(&[2.0, 0.0, 0.0]).unwrap();
        assert!((k - 0.25).abs() < 1e-12);
        let e = Body::ellipsoid(vec![2.0, 1.0]).unwrap();
        assert!((e.gaussian_curvature_at(&[2.0, 0.0]).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn flat_points_detection() {
        assert!(Body::ball(2, 1.0).unwrap().flat_points().unwrap().is_empty());
        assert!(Body::ellipsoid(vec![2.0, 1.0])
            .unwrap()
            .flat_points()
            .unwrap()
            .is_empty());
        let s = Body::superellipse(4, 1.0, 1.0).unwrap();
        let fps = s.flat_points().unwrap();
        assert_eq!(fps.len(), 4);
        for fp in &fps {
            assert_eq!(fp.order, 4);
            let r = fp.point[0].hypot(fp.point[1]);
            assert!((r - 1.0).abs() < 1e-8);
            // normal/tangent frame
            let nn = fp.normal[0].hypot(fp.normal[1]);
            let tt = fp.tangent[0].hypot(fp.tangent[1]);
            assert!((nn - 1.0).abs() < 1e-12 && (tt - 1.0).abs() < 1e-12);
            let dot = fp.normal[0] * fp.tangent[0] + fp.normal[1] * fp.tangent[1];
            assert!(dot.abs() < 1e-12);
            assert!((s.gauge(&fp.point) - 1.0).abs() < 1e-10);
        }
        let s6 = Body::superellipse(6, 1.0, 1.0).unwrap();
        let fps = s6.flat_points().unwrap();
        assert_eq!(fps.len(), 4);
        assert!(fps.iter().all(|fp| fp.order == 6));
    }

    #[test]
    fn flat_points_rotation_equivariance() {
        let theta = 0.5535;
        let s = Body::superellipse(4, 1.0, 1.0).unwrap();
        let rs = s.rotate(theta).unwrap();
        let base = s.flat_points().unwrap();
        let rot = rs.flat_points().unwrap();
        assert_eq!(rot.len(), 4);
        for fp in &base {
            let rp = rotate2(fp.point, theta);
            let rn = rotate2(fp.normal, theta);
            let found = rot.iter().any(|g| {
                (g.point[0] - rp[0]).hypot(g.point[1] - rp[1]) < 1e-6
                    && (g.normal[0] - rn[0]).hypot(g.normal[1] - rn[1]) < 1e-6
            });
            assert!(found, "rotated flat point missing");
        }
    }

    #[test]
    fn rotation_gauge_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = Body::superellipse(4, 1.2, 0.7).unwrap();
        for _ in 0..1000 {
            let theta = rng.gen_range(0.0..2.0 * PI);
            let x = [rng.gen_range(-3.0..3.0f64), rng.gen_range(-3.0..3.0f64)];
            let rb = s.rotate(theta).unwrap();
            let ax = rotate2(x, theta);
            let lhs = rb.gauge(&ax);
            let rhs = s.gauge(&x);
            assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1.0));
        }
        // theta = 0 leaves the gauge untouched
        let r0 = s.rotate(0.0).unwrap();
        for _ in 0..50 {
            let x = [rng.gen_range(-3.0..3.0f64), rng.gen_range(-3.0..3.0f64)];
            assert_eq!(r0.gauge(&x), s.gauge(&x));
        }
        // four-fold symmetry of the square superellipse
        let s4 = Body::superellipse(4, 1.0, 1.0).unwrap();
        let r90 = s4.rotate(PI / 2.0).unwrap();
        for _ in 0..50 {
            let x = [rng.gen_range(-3.0..3.0f64), rng.gen_range(-3.0..3.0f64)];
            assert!((r90.gauge(&x) - s4.gauge(&x)).abs() < 1e-12 * s4.gauge(&x).max(1.0));
        }
    }

    #[test]
    fn curvature_duality_ball_ellipse() {
        // |kappa*(P0*) kappa(P0)| = (|P0| |P0*|)^(-d-1), kappa* by finite
        // differences on the polar parametrization x*(t) = <x,n>^-1 n.
        for body in [
            Body::ball(2, 2.0).unwrap(),
            Body::ellipsoid(vec![2.0, 1.0]).unwrap(),
        ] {
            for i in 0..16 {
                let t0 = 2.0 * PI * (i as f64 + 0.3) / 16.0;
                let p0 = body.boundary_point(t0);
                let kappa = body.curvature(t0);
                let xstar = |t: f64| {
                    let x = body.boundary_point(t);
                    let g = body.gauge_grad(&x);
                    let gn = g[0].hypot(g[1]);
                    let nvec = [g[0] / gn, g[1] / gn];
                    let denom = x[0] * nvec[0] + x[1] * nvec[1];
                    [nvec[0] / denom, nvec[1] / denom]
                };
                let h = 1e-3;
                let pts: Vec<[f64; 2]> = [-2.0, -1.0, 0.0, 1.0, 2.0]
                    .iter()
                    .map(|&k| xstar(t0 + k * h))
                    .collect();
                let d1 = [
                    (pts[0][0] - 8.0 * pts[1][0] + 8.0 * pts[3][0] - pts[4][0]) / (12.0 * h),
                    (pts[0][1] - 8.0 * pts[1][1] + 8.0 * pts[3][1] - pts[4][1]) / (12.0 * h),
                ];
                let d2 = [
                    (-pts[0][0] + 16.0 * pts[1][0] - 30.0 * pts[2][0] + 16.0 * pts[3][0]
                        - pts[4][0])
                        / (12.0 * h * h),
                    (-pts[0][1] + 16.0 * pts[1][1] - 30.0 * pts[2][1] + 16.0 * pts[3][1]
                        - pts[4][1])
                        / (12.0 * h * h),
                ];
                let kappa_star =
                    (d1[0] * d2[1] - d1[1] * d2[0]).abs() / d1[0].hypot(d1[1]).powi(3);
                let p0s = xstar(t0);
                let lhs = (kappa_star * kappa).abs();
                let rhs = (p0[0].hypot(p0[1]) * p0s[0].hypot(p0s[1])).powi(-3);
                assert!(
                    (lhs - rhs).abs() <= 1e-6 * rhs,
                    "duality mismatch {lhs} vs {rhs}"
                );
            }
        }
    }

    #[test]
    fn boundary_param_on_boundary() {
        for body in sample_bodies().into_iter().filter(|b| b.is_planar()) {
            for i in 0..64 {
                let t = 2.0 * PI * i as f64 / 64.0;
                let p = body.boundary_point(t);
                assert!((body.gauge(&p) - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn serialization_round_trip() {
        let cases = [
            "ball:d=3,r=1",
            "ellipsoid:a=2,b=1",
            "ellipsoid:a=1.5,b=1,c=0.8",
            "superellipse:m=4,a=1,b=1",
            "superellipse-polar:m=4,a=1,b=1",
            "superellipse:m=4,a=1,b=1,theta=0.5535",
        ];
        for s in cases {
            let b: Body = s.parse().unwrap();
            let rt: Body = b.to_string().parse().unwrap();
            assert_eq!(b, rt, "round trip failed for {s}");
        }
        assert!("garbage".parse::<Body>().is_err());
        assert!("ball:d=1,r=1".parse::<Body>().is_err());
        assert!("superellipse:m=3,a=1,b=1".parse::<Body>().is_err());
    }

    #[test]
    fn volume_closed_forms() {
        assert!((Body::ball(2, 1.0).unwrap().volume() - PI).abs() < 1e-12);
        assert!((Body::ball(3, 1.0).unwrap().volume() - 4.0 * PI / 3.0).abs() < 1e-12);
        assert!((Body::ellipsoid(vec![2.0, 1.0]).unwrap().volume() - 2.0 * PI).abs() < 1e-12);
        // superellipse m=2 area = ellipse area
        let s = Body::superellipse(2, 2.0, 1.0).unwrap();
        assert!((s.volume() - 2.0 * PI).abs() < 1e-10);
        // m=4 area via Monte-Carlo-free Riemann sum oracle
        let s4 = Body::superellipse(4, 1.0, 1.0).unwrap();
        // midpoint rule converges only like h^{5/4} here (vertical tangent
        // at x = ±1), so the grid must be fine
        let n = 2_000_000;
        let mut area = 0.0;
        for i in 0..n {
            let x = -1.0 + 2.0 * (i as f64 + 0.5) / n as f64;
            area += 2.0 * (1.0 - x.abs().powi(4)).powf(0.25) * (2.0 / n as f64);
        }
        assert!((s4.volume() - area).abs() < 1e-6);
    }

    #[test]
    fn inradius_circumradius() {
        let e = Body::ellipsoid(vec![2.0, 1.0]).unwrap();
        assert!((e.inradius() - 1.0).abs() < 1e-12);
        assert!((e.circumradius() - 2.0).abs() < 1e-12);
        let s = Body::superellipse(4, 1.0, 1.0).unwrap();
        assert!((s.inradius() - 1.0).abs() < 1e-9);
        assert!((s.circumradius() - 2f64.powf(0.25)).abs() < 1e-9);
    }
}
