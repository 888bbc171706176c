//! Fourier transforms of body indicators, cap measures of boundary slices,
//! decay scans, and a truncated Poisson-summation oracle for the mollified
//! rest.
//!
//! Convention: f_hat(xi) = int f(y) exp(-i<y, xi>) dy.

use crate::bodies::Body;
use crate::mollifier::Bump;
use crate::{Error, Result};
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;

// ---------------------------------------------------------------------------
// Bessel functions J_nu
// ---------------------------------------------------------------------------

/// J_n for integer n >= 0 by power series; accurate for x <~ 14.
fn bessel_series(n: u32, x: f64) -> f64 {
    let half = 0.5 * x;
    let mut term = 1.0;
    for k in 1..=n {
        term *= half / k as f64;
    }
    let mut sum = term;
    let x2 = -half * half;
    for k in 1..60 {
        term *= x2 / (k as f64 * (k + n) as f64);
        sum += term;
        if term.abs() < 1e-18 * sum.abs().max(1e-30) {
            break;
        }
    }
    sum
}

/// Hankel asymptotic expansion for J0/J1, x >= 14: with
/// a_k = a_{k-1} (mu - (2k-1)^2) / (8 k x), mu = 4 n^2,
/// P collects even k with alternating sign, Q odd k.
fn bessel_asymptotic(n: u32, x: f64) -> f64 {
    let mu = 4.0 * (n * n) as f64;
    let mut p = 0.0;
    let mut q = 0.0;
    let mut a = 1.0;
    for k in 0u32..9 {
        if k > 0 {
            a *= (mu - ((2 * k - 1) * (2 * k - 1)) as f64) / (8.0 * k as f64 * x);
        }
        match k % 4 {
            0 => p += a,
            1 => q += a,
            2 => p -= a,
            _ => q -= a,
        }
    }
    let chi = x - (0.5 * n as f64 + 0.25) * PI;
    (2.0 / (PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
}

pub fn bessel_j(n: u32, x: f64) -> f64 {
    let x = x.abs() * if n % 2 == 1 && x < 0.0 { -1.0 } else { 1.0 };
    if x.abs() < 14.0 {
        bessel_series(n, x)
    } else if n <= 1 {
        bessel_asymptotic(n, x)
    } else {
        // upward recurrence from J0, J1 (stable here since x > 14 > n)
        let mut jm = bessel_asymptotic(0, x);
        let mut j = bessel_asymptotic(1, x);
        for k in 1..n {
            let jn = 2.0 * k as f64 / x * j - jm;
            jm = j;
            j = jn;
        }
        j
    }
}

/// J_{3/2}(x) = sqrt(2/(pi x)) (sin x / x - cos x).
pub fn bessel_j3half(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        // series: x^{3/2}/(3 sqrt(pi/2) ... use leading term
        let s = (2.0 / (PI * x)).sqrt();
        return s * (x * x / 3.0) * (1.0 - x * x / 10.0);
    }
    (2.0 / (PI * x)).sqrt() * (x.sin() / x - x.cos())
}

/// J_{d/2}(s) / s^{d/2}, the radial profile of the unit-ball transform,
/// with the finite s -> 0 limit 1/(2^{d/2} Gamma(d/2+1)).
fn ball_profile(d: usize, s: f64) -> f64 {
    if s < 1e-6 {
        use statrs::function::gamma::gamma;
        return 1.0 / (2f64.powf(d as f64 / 2.0) * gamma(d as f64 / 2.0 + 1.0));
    }
    let j = match d {
        2 => bessel_j(1, s),
        3 => bessel_j3half(s),
        4 => bessel_j(2, s),
        _ => unreachable!(),
    };
    j / s.powf(d as f64 / 2.0)
}

// ---------------------------------------------------------------------------
// Indicator Fourier transform
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum FtMethod {
    ClosedForm,
    BoundaryQuadrature,
}

#[derive(Clone, Debug, Serialize)]
pub struct FourierSample {
    pub xi: Vec<f64>,
    pub re: f64,
    pub im: f64,
    pub method: FtMethod,
    pub est_error: f64,
}

impl FourierSample {
    pub fn abs(&self) -> f64 {
        self.re.hypot(self.im)
    }
}

/// Closed-form transform for balls and axis-parallel ellipsoids:
/// chi_hat(xi) = (prod a_i) (2 pi)^{d/2} J_{d/2}(|A xi|) / |A xi|^{d/2}.
fn ellipsoid_ft(semiaxes: &[f64], xi: &[f64]) -> f64 {
    let d = semiaxes.len();
    let s = semiaxes
        .iter()
        .zip(xi)
        .map(|(a, x)| (a * x) * (a * x))
        .sum::<f64>()
        .sqrt();
    semiaxes.iter().product::<f64>() * (2.0 * PI).powf(d as f64 / 2.0) * ball_profile(d, s)
}

/// Boundary-quadrature transform for planar bodies:
/// chi_hat(xi) = (i/|xi|^2) int (xi_1 y2' - xi_2 y1') e^{-i<y, xi>} dt
/// over the angle parametrization, by composite Gauss-Legendre panels
/// split at the parametrization's non-smooth angles.
fn planar_ft_quadrature(body: &Body, xi: &[f64], panels_scale: f64) -> (f64, f64) {
    let xin = (xi[0] * xi[0] + xi[1] * xi[1]).sqrt();
    let theta = body.rotation_angle();
    // non-smooth angles of the gauge parametrization (axis crossings)
    let splits: Vec<f64> = (0..4).map(|j| theta + j as f64 * PI / 2.0).collect();
    let circ = body.circumradius();
    let panels_per_seg =
        ((panels_scale * (xin * circ / 4.0 + 8.0)).ceil() as usize).clamp(8, 100_000);
    const GLX: [f64; 10] = [
        -0.9739065285171717,
        -0.8650633666889845,
        -0.6794095682990244,
        -0.4333953941292472,
        -0.14887433898163122,
        0.14887433898163122,
        0.4333953941292472,
        0.6794095682990244,
        0.8650633666889845,
        0.9739065285171717,
    ];
    const GLW: [f64; 10] = [
        0.06667134430868814,
        0.14945134915058059,
        0.21908636251598204,
        0.26926671930999635,
        0.29552422471475287,
        0.29552422471475287,
        0.26926671930999635,
        0.21908636251598204,
        0.14945134915058059,
        0.06667134430868814,
    ];
    let mut re = 0.0;
    let mut im = 0.0;
    for seg in 0..4 {
        let (a, b) = (splits[seg], splits[seg] + PI / 2.0);
        let w = (b - a) / panels_per_seg as f64;
        for p in 0..panels_per_seg {
            let (pa, pb) = (a + p as f64 * w, a + (p + 1) as f64 * w);
            let mid = 0.5 * (pa + pb);
            let half = 0.5 * (pb - pa);
            for (x, wq) in GLX.iter().zip(&GLW) {
                let t = mid + half * x;
                let y = body.boundary_point(t);
                let v = body.boundary_velocity(t);
                let amp = xi[0] * v[1] - xi[1] * v[0];
                let phase = -(y[0] * xi[0] + y[1] * xi[1]);
                re += wq * half * amp * phase.cos();
                im += wq * half * amp * phase.sin();
            }
        }
    }
    // multiply by i / |xi|^2
    let inv = 1.0 / (xin * xin);
    (-im * inv, re * inv)
}

/// chi_hat of the body indicator at frequency xi. Balls and ellipsoids in
/// closed form; planar bodies by boundary quadrature with a two-resolution
/// error estimate.
pub fn indicator_ft(body: &Body, xi: &[f64]) -> Result<FourierSample> {
    let xin = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
    if xin == 0.0 {
        return Ok(FourierSample {
            xi: xi.to_vec(),
            re: body.volume(),
            im: 0.0,
            method: FtMethod::ClosedForm,
            est_error: 0.0,
        });
    }
    match body {
        Body::Ball { dim, radius } => Ok(FourierSample {
            xi: xi.to_vec(),
            re: ellipsoid_ft(&vec![*radius; *dim], xi),
            im: 0.0,
            method: FtMethod::ClosedForm,
            est_error: 1e-12,
        }),
        Body::Ellipsoid { semiaxes } => Ok(FourierSample {
            xi: xi.to_vec(),
            re: ellipsoid_ft(semiaxes, xi),
            im: 0.0,
            method: FtMethod::ClosedForm,
            est_error: 1e-12,
        }),
        _ if body.dim() == 2 => {
            // refine until the two-resolution gap clears the target;
            // slowly-converging parametrizations (e.g. polar bodies) may
            // need a few extra rounds at moderate |xi|
            let mut last_err = f64::INFINITY;
            for scale in [1.0, 4.0, 16.0] {
                let (re1, im1) = planar_ft_quadrature(body, xi, scale);
                let (re2, im2) = planar_ft_quadrature(body, xi, 1.6 * scale);
                let err = (re1 - re2).hypot(im1 - im2);
                let val = re2.hypot(im2);
                if err <= 1e-6 * val + 1e-12 {
                    return Ok(FourierSample {
                        xi: xi.to_vec(),
                        re: re2,
                        im: im2,
                        method: FtMethod::BoundaryQuadrature,
                        est_error: err,
                    });
                }
                last_err = err;
            }
            Err(Error::Convergence(format!(
                "boundary quadrature not converged at |xi|={xin:.3e}: two-resolution gap {last_err:.3e}"
            )))
        }
        _ => Err(Error::Precondition(
            "no transform path for this body/dimension".into(),
        )),
    }
}

// ---------------------------------------------------------------------------
// Cap measures
// ---------------------------------------------------------------------------

/// Surface measures of the two boundary caps of depth 1/|xi|.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct CapMeasure {
    pub xi_norm: f64,
    pub gamma_plus: f64,
    pub gamma_minus: f64,
}

fn planar_cap_arclength(body: &Body, u: [f64; 2], depth: f64) -> Result<f64> {
    let h = body.support(&u)?;
    if depth >= h {
        return Err(Error::Precondition(format!(
            "cap depth {depth} exceeds support {h}"
        )));
    }
    let p = body.normal_point(&u)?;
    let t_star = p[1].atan2(p[0]);
    let level = h - depth;
    let f = |t: f64| {
        let y = body.boundary_point(t);
        y[0] * u[0] + y[1] * u[1] - level
    };
    if f(t_star) <= 0.0 {
        return Err(Error::Convergence(
            "cap root-finder: support point below cap level".into(),
        ));
    }
    let mut edges = [0.0f64; 2];
    for (i, far) in [(0usize, t_star + PI), (1usize, t_star - PI)] {
        let (mut a, mut b) = (t_star, far);
        if f(b) >= 0.0 {
            return Err(Error::Convergence("cap root-finder: no sign change".into()));
        }
        for _ in 0..80 {
            let m = 0.5 * (a + b);
            if f(m) >= 0.0 {
                a = m;
            } else {
                b = m;
            }
        }
        edges[i] = 0.5 * (a + b);
    }
    // arclength of the boundary between the two cap edges
    let (lo, hi) = (edges[1], edges[0]);
    let n = 256;
    let mut len = 0.0;
    for i in 0..n {
        let t = lo + (hi - lo) * (i as f64 + 0.5) / n as f64;
        let v = body.boundary_velocity(t);
        len += v[0].hypot(v[1]) * (hi - lo) / n as f64;
    }
    Ok(len)
}

pub fn cap_measure(body: &Body, xi: &[f64]) -> Result<CapMeasure> {
    let xin = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(xin >= 1.0) {
        return Err(Error::Precondition(format!("need |xi| >= 1, got {xin}")));
    }
    let depth = 1.0 / xin;
    match body {
        Body::Ball { dim, radius } if *dim >= 3 => {
            // spherical cap of depth c: cos(alpha) = 1 - c/r
            let c = (1.0 - depth / radius).clamp(-1.0, 1.0);
            let frac = crate::mollifier::sphere_cap_fraction(*dim, c);
            let full = 2.0 * PI.powf(*dim as f64 / 2.0)
                / statrs::function::gamma::gamma(*dim as f64 / 2.0)
                * radius.powi(*dim as i32 - 1);
            let g = frac * full;
            Ok(CapMeasure {
                xi_norm: xin,
                gamma_plus: g,
                gamma_minus: g,
            })
        }
        _ if body.dim() == 2 => {
            let u = [xi[0] / xin, xi[1] / xin];
            let gp = planar_cap_arclength(body, u, depth)?;
            let gm = planar_cap_arclength(body, [-u[0], -u[1]], depth)?;
            Ok(CapMeasure {
                xi_norm: xin,
                gamma_plus: gp,
                gamma_minus: gm,
            })
        }
        _ => Err(Error::Precondition(
            "cap measure supports planar bodies and balls only".into(),
        )),
    }
}

// ---------------------------------------------------------------------------
// Decay scan
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct DecayRow {
    pub xi_norm: f64,
    pub direction_index: usize,
    pub abs_ft: f64,
    pub scaled: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DecayScan {
    pub rows: Vec<DecayRow>,
    /// sup of (1 + |xi|)^{3/2} |chi_hat| over all samples.
    pub sup_scaled: f64,
    /// For bodies with flat boundary points: fitted decay exponent of
    /// |chi_hat| along each flat normal (top decade of the grid).
    pub flat_exponents: Vec<f64>,
}

impl DecayScan {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("xi_norm,direction_index,abs_ft,scaled\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{:.17e},{},{:.17e},{:.17e}\n",
                r.xi_norm, r.direction_index, r.abs_ft, r.scaled
            ));
        }
        s
    }
}

pub fn decay_scan(body: &Body, grid: &[f64], directions: &[Vec<f64>]) -> Result<DecayScan> {
    if grid.is_empty() || directions.is_empty() {
        return Err(Error::Precondition("empty decay grid".into()));
    }
    let (lo, hi) = (
        grid.iter().cloned().fold(f64::INFINITY, f64::min),
        grid.iter().cloned().fold(0.0f64, f64::max),
    );
    if hi / lo < 100.0 {
        return Err(Error::Precondition(
            "decay grid must span at least two decades".into(),
        ));
    }
    let mut jobs = Vec::new();
    for (di, dir) in directions.iter().enumerate() {
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        for &x in grid {
            let xi: Vec<f64> = dir.iter().map(|v| v / norm * x).collect();
            jobs.push((di, x, xi));
        }
    }
    let rows: Vec<DecayRow> = jobs
        .par_iter()
        .map(|(di, x, xi)| -> Result<DecayRow> {
            let s = indicator_ft(body, xi)?;
            Ok(DecayRow {
                xi_norm: *x,
                direction_index: *di,
                abs_ft: s.abs(),
                scaled: (1.0 + x).powf(1.5) * s.abs(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let sup_scaled = rows.iter().map(|r| r.scaled).fold(0.0f64, f64::max);
    // flat-normal exponent fits
    let mut flat_exponents = Vec::new();
    if body.is_planar() {
        if let Ok(flats) = body.flat_points() {
            for fp in &flats {
                // the two antipodal flat contributions beat against each
                // other, so |chi_hat| oscillates along the normal; fit the
                // upper envelope over one oscillation per grid point
                let top: Vec<f64> = grid.iter().cloned().filter(|&x| x >= hi / 10.0).collect();
                let mut xs = Vec::new();
                let mut ys = Vec::new();
                for &x in &top {
                    let mut env: f64 = 0.0;
                    for j in 0..9 {
                        let xo = x + 0.45 * j as f64;
                        let xi: Vec<f64> = fp.normal.iter().map(|v| v * xo).collect();
                        env = env.max(indicator_ft(body, &xi)?.abs());
                    }
                    if env > 0.0 {
                        xs.push(x);
                        ys.push(env);
                    }
                }
                flat_exponents.push(crate::fit::loglog(&xs, &ys).slope);
            }
        }
    }
    Ok(DecayScan {
        rows,
        sup_scaled,
        flat_exponents,
    })
}

// ---------------------------------------------------------------------------
// Bump transform table and the Poisson oracle
// ---------------------------------------------------------------------------

/// Radial transform of the unit-support bump, tabulated on a uniform grid
/// with cubic interpolation. zeta_hat_eps(xi) = table(eps |xi|).
pub struct BumpTransform {
    dim: usize,
    ds: f64,
    vals: Vec<f64>,
}

impl BumpTransform {
    pub fn new(dim: usize, s_max: f64) -> Result<BumpTransform> {
        let bump = Bump::new(dim, 1.0)?;
        let ds = 0.02;
        let n = (s_max / ds).ceil() as usize + 4;
        let vals: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|i| Self::radial_ft(&bump, dim, i as f64 * ds))
            .collect();
        Ok(BumpTransform { dim, ds, vals })
    }

    /// Direct radial quadrature of the d-dimensional transform at s = |xi|.
    fn radial_ft(bump: &Bump, dim: usize, s: f64) -> f64 {
        if s < 1e-9 {
            return 1.0; // unit mass
        }
        // int_{B_1} zeta(y) e^{-i<y,xi>} dy reduced to a radial integral
        let f: Box<dyn Fn(f64) -> f64> = match dim {
            2 => Box::new(move |r: f64| {
                2.0 * PI * bump.value(&[r, 0.0]) * bessel_j(0, s * r) * r
            }),
            3 => Box::new(move |r: f64| {
                4.0 * PI / s * bump.value(&[r, 0.0, 0.0]) * (s * r).sin() * r
            }),
            4 => Box::new(move |r: f64| {
                (2.0 * PI).powi(2) / s * bump.value(&[r, 0.0, 0.0, 0.0]) * bessel_j(1, s * r) * r * r
            }),
            _ => unreachable!(),
        };
        // composite Simpson; the integrand oscillates with period 2*pi/s
        let n = ((200.0 + 4.0 * s) as usize).next_multiple_of(2);
        let h = 1.0 / n as f64;
        let mut total = f(0.0) + f(1.0);
        for i in 1..n {
            total += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        total * h / 3.0
    }

    /// Cubic (Catmull-Rom) interpolation; zero beyond the table.
    pub fn eval(&self, s: f64) -> f64 {
        let x = s.abs() / self.ds;
        let i = x.floor() as usize;
        if i + 2 >= self.vals.len() {
            return 0.0;
        }
        let f = x - i as f64;
        let (p0, p1, p2, p3) = (
            self.vals[i.saturating_sub(1)],
            self.vals[i],
            self.vals[i + 1],
            self.vals[i + 2],
        );
        0.5 * ((2.0 * p1)
            + (p2 - p0) * f
            + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * f * f
            + (3.0 * p1 - p0 - 3.0 * p2 + p3) * f * f * f)
    }

    /// Empirical decay envelope |zeta_hat(s)| <= a * exp(-alpha sqrt(s)) for
    /// s beyond `from`, fitted on the table's tail and inflated 10x.
    fn tail_envelope(&self, from: f64) -> (f64, f64) {
        let suffix_max = {
            let mut v = vec![0.0f64; self.vals.len()];
            let mut m = 0.0f64;
            for i in (0..self.vals.len()).rev() {
                m = m.max(self.vals[i].abs());
                v[i] = m;
            }
            v
        };
        let i_hi = self.vals.len() - 3;
        let s_hi = i_hi as f64 * self.ds;
        let s_lo = (0.4 * s_hi).max(from.min(0.5 * s_hi)).max(5.0f64.min(0.5 * s_hi));
        let i_lo = ((s_lo / self.ds) as usize).min(i_hi.saturating_sub(1)).max(1);
        let (e_lo, e_hi) = (suffix_max[i_lo].max(1e-300), suffix_max[i_hi].max(1e-300));
        let alpha = (e_lo.ln() - e_hi.ln()) / (s_hi.sqrt() - (i_lo as f64 * self.ds).sqrt());
        let alpha = alpha.max(0.1);
        let a = 10.0 * e_hi * (alpha * s_hi.sqrt()).exp();
        (a, alpha)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PoissonRest {
    pub t: f64,
    pub eps: f64,
    pub k_max: u64,
    pub value: f64,
    /// Certified bound on the dropped |k| > k_max tail.
    pub tail_bound: f64,
}

/// Closed-form |chi_hat| envelope constant: |chi_hat(xi)| <= c / |xi|^{(d+1)/2}
/// for balls and ellipsoids, from |J_nu(x)| <= sqrt(2/(pi x)).
fn ft_envelope_constant(semiaxes: &[f64]) -> f64 {
    let d = semiaxes.len();
    let a_min = semiaxes.iter().cloned().fold(f64::INFINITY, f64::min);
    semiaxes.iter().product::<f64>()
        * (2.0 * PI).powf(d as f64 / 2.0)
        * (2.0 / PI).sqrt()
        / a_min.powf((d as f64 + 1.0) / 2.0)
}

fn body_semiaxes(body: &Body) -> Result<Vec<f64>> {
    match body {
        Body::Ball { dim, radius } => Ok(vec![*radius; *dim]),
        Body::Ellipsoid { semiaxes } => Ok(semiaxes.clone()),
        _ => Err(Error::Precondition(
            "Poisson oracle supports balls and ellipsoids only".into(),
        )),
    }
}

/// Truncated Poisson-summation reconstruction of the mollified rest:
/// E_eps(t) = sum_{0 < |k| <= K} t^d chi_hat(2 pi t k) zeta_hat(2 pi eps k),
/// summed in deterministic (|k|, lexicographic) order, with a certified
/// bound on the dropped tail.
pub fn poisson_rest(body: &Body, t: f64, eps: f64, k_max: u64, tol: f64) -> Result<PoissonRest> {
    if !(t > 0.0) || !(eps > 0.0) || k_max == 0 {
        return Err(Error::Precondition(format!(
            "need t > 0, eps > 0, k_max > 0, got t={t}, eps={eps}, k_max={k_max}"
        )));
    }
    let semiaxes = body_semiaxes(body)?;
    let d = semiaxes.len();
    let s_table = 2.0 * PI * eps * (k_max as f64 * (d as f64).sqrt() + 2.0);
    let table = BumpTransform::new(d, s_table * 1.05)?;

    // certified tail: shell count surf_d n^{d-1} times both envelopes
    let (a_env, alpha) = table.tail_envelope(2.0 * PI * eps * k_max as f64);
    let c_chi = ft_envelope_constant(&semiaxes);
    let shell_const = match d {
        2 => 8.0,   // #{k : n <= |k| < n+1} <= 8n for n >= 1
        3 => 30.0,
        _ => 80.0,
    };
    let mut tail = 0.0;
    let mut n = k_max + 1;
    loop {
        let r = n as f64;
        let term = shell_const
            * r.powi(d as i32 - 1)
            * t.powi(d as i32)
            * c_chi
            * (2.0 * PI * t * r).powf(-(d as f64 + 1.0) / 2.0)
            * a_env
            * (-alpha * (2.0 * PI * eps * r).sqrt()).exp();
        tail += term;
        n += 1;
        if term < 1e-18 * tail.max(1e-300) || n > k_max + 4_000_000 {
            break;
        }
    }
    if tail > tol {
        // sqrt decay of the exponent: estimate the radius needed
        let suggested = ((((a_env * c_chi / tol).ln().max(1.0)) / alpha).powi(2)
            / (2.0 * PI * eps))
            .ceil() as u64;
        return Err(Error::TailTooLarge {
            tail,
            tol,
            suggested: suggested.max(k_max * 2),
        });
    }

    // enumerate 0 < |k| <= k_max, sorted by (|k|^2, lexicographic)
    let kb = k_max as i64;
    let mut keys: Vec<(u64, Vec<i64>)> = Vec::new();
    let mut k = vec![-kb; d];
    'outer: loop {
        let n2: i64 = k.iter().map(|v| v * v).sum();
        if n2 > 0 && n2 <= kb * kb {
            keys.push((n2 as u64, k.clone()));
        }
        for i in 0..d {
            k[i] += 1;
            if k[i] <= kb {
                continue 'outer;
            }
            k[i] = -kb;
            if i == d - 1 {
                break 'outer;
            }
        }
    }
    keys.sort();
    let terms: Vec<f64> = keys
        .par_iter()
        .map(|(_, k)| {
            let kf: Vec<f64> = k.iter().map(|&v| v as f64).collect();
            let kn = kf.iter().map(|v| v * v).sum::<f64>().sqrt();
            let xi: Vec<f64> = kf.iter().map(|v| 2.0 * PI * t * v).collect();
            t.powi(d as i32) * ellipsoid_ft(&semiaxes, &xi) * table.eval(2.0 * PI * eps * kn)
        })
        .collect();
    let value = terms.iter().sum::<f64>();
    Ok(PoissonRest {
        t,
        eps,
        k_max,
        value,
        tail_bound: tail,
    })
}
