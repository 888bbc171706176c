//! Exact lattice-point enumeration: counts N(t), sorted gauge-event streams,
//! and shell counts.
//!
//! Two enumeration paths:
//! * **Scaled-integer path** for balls and axis-parallel ellipsoids whose
//!   squared gauge is rational: `rho(k)^2 = n(k)/D` with `n(k)` an integer
//!   quadratic form. Boundary ties are resolved by exact rational
//!   comparison, so closed-dilate counting is bit-stable.
//! * **General planar path** for superellipses, their polars, and rotated
//!   bodies: per-row convex interval search in doubles with a relative tie
//!   band of 1e-12 and a reported tie counter.

use crate::bodies::Body;
use crate::{Error, Result};
use num_bigint::BigInt;
use num_rational::BigRational;
use rayon::prelude::*;

/// Relative tie band for the double-precision path.
const TIE_BAND: f64 = 1e-12;

/// Enumeration resource guard.
#[derive(Clone, Copy, Debug)]
pub struct Budget {
    /// Maximum number of stored events / enumerated cells.
    pub max_events: u64,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            max_events: 1 << 28,
        }
    }
}

/// One jump of the counting step function: gauge value and multiplicity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaugeEvent {
    pub rho: f64,
    pub multiplicity: u64,
}

/// Sorted multiset of gauge values of lattice points in an annulus
/// `lo < rho(k) <= hi`, the exact step structure of N(t) on (lo, hi].
#[derive(Clone, Debug)]
pub struct GaugeEventList {
    pub lo: f64,
    pub hi: f64,
    /// N(lo), the count at the window start.
    pub base_count: u64,
    pub events: Vec<GaugeEvent>,
    /// Points whose gauge fell inside the tie band (double path only).
    pub tie_count: u64,
}

impl GaugeEventList {
    pub fn total_multiplicity(&self) -> u64 {
        self.events.iter().map(|e| e.multiplicity).sum()
    }

    /// CSV export with `#` metadata header.
    pub fn to_csv(&self, body: &Body) -> String {
        let mut s = String::new();
        s.push_str(&format!(
            "# body={}, lo={:.17e}, hi={:.17e}, base_count={}\n",
            body, self.lo, self.hi, self.base_count
        ));
        s.push_str("rho,multiplicity\n");
        for e in &self.events {
            s.push_str(&format!("{:.17e},{}\n", e.rho, e.multiplicity));
        }
        s
    }
}

/// Exact shell count S(tau, eps) = #{k : tau-eps <= rho(k) <= tau+eps}.
#[derive(Clone, Copy, Debug)]
pub struct ShellCount {
    pub tau: f64,
    pub eps: f64,
    pub count: u64,
}

// ---------------------------------------------------------------------------
// Scaled-integer quadratic form
// ---------------------------------------------------------------------------

/// `rho(k)^2 = (sum coeffs[i] k_i^2) / denom` exactly.
#[derive(Clone, Debug)]
struct QuadForm {
    coeffs: Vec<u64>,
    denom: u64,
}

/// Best rational approximation with bounded denominator (continued
/// fractions); accepted only if it reproduces `c` to 1e-12 relative.
fn rational_approx(c: f64, max_den: u64) -> Option<(u64, u64)> {
    if !(c > 0.0) || !c.is_finite() {
        return None;
    }
    let (mut h0, mut k0, mut h1, mut k1) = (0u64, 1u64, 1u64, 0u64);
    let mut x = c;
    for _ in 0..64 {
        let a = x.floor();
        if a > max_den as f64 {
            break;
        }
        let a = a as u64;
        let h2 = a.checked_mul(h1).and_then(|v| v.checked_add(h0));
        let k2 = a.checked_mul(k1).and_then(|v| v.checked_add(k0));
        let (h2, k2) = match (h2, k2) {
            (Some(h), Some(k)) if k <= max_den => (h, k),
            _ => break,
        };
        (h0, k0, h1, k1) = (h1, k1, h2, k2);
        let frac = x - a as f64;
        if frac.abs() < 1e-15 {
            break;
        }
        x = 1.0 / frac;
    }
    if k1 == 0 {
        return None;
    }
    let approx = h1 as f64 / k1 as f64;
    if (approx - c).abs() <= 1e-12 * c {
        Some((h1, k1))
    } else {
        None
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Detect the scaled-integer representation. Rotations are admitted only
/// for balls (rotation-invariant).
fn quad_form(body: &Body) -> Option<QuadForm> {
    match body {
        Body::Ball { dim, radius } => {
            let (p, q) = rational_approx(1.0 / (radius * radius), 1 << 12)?;
            Some(QuadForm {
                coeffs: vec![p; *dim],
                denom: q,
            })
        }
        Body::Ellipsoid { semiaxes } => {
            let mut fracs = Vec::new();
            for a in semiaxes {
                fracs.push(rational_approx(1.0 / (a * a), 1 << 12)?);
            }
            let mut denom = 1u64;
            for &(_, q) in &fracs {
                denom = denom / gcd(denom, q) * q;
                if denom > 1 << 20 {
                    return None;
                }
            }
            let coeffs = fracs.iter().map(|&(p, q)| p * (denom / q)).collect();
            Some(QuadForm { coeffs, denom })
        }
        Body::Rotated2D { inner, .. } => match inner.as_ref() {
            Body::Ball { .. } => quad_form(inner),
            _ => None,
        },
        _ => None,
    }
}

/// Comparison `n <=> denom * t^2` for an integer `n` and a double `t`.
/// A relative band of 1e-12 snaps to Equal, so a dilation given as the
/// rounded double of an exact gauge value still counts its boundary
/// points; this mirrors the tie band of the double-precision path. When
/// the band could straddle two spectrum integers the comparison falls
/// back to exact rational arithmetic instead.
fn cmp_n_vs_threshold(n: u64, denom: u64, t: f64) -> std::cmp::Ordering {
    use std::cmp::Ordering;
    let rhs = denom as f64 * t * t;
    let band = TIE_BAND * rhs.max(1.0);
    if band < 0.25 {
        let diff = n as f64 - rhs;
        if diff.abs() <= band {
            Ordering::Equal
        } else if diff < 0.0 {
            Ordering::Less
        } else {
            Ordering::Greater
        }
    } else {
        let tq = BigRational::from_float(t).expect("finite t");
        let rhs = &tq * &tq * BigRational::from_integer(BigInt::from(denom));
        BigRational::from_integer(BigInt::from(n)).cmp(&rhs)
    }
}

/// Largest n with n <= denom * t^2 (or with strict <).
fn threshold_n(denom: u64, t: f64, strict: bool) -> u64 {
    use std::cmp::Ordering;
    let guess = (denom as f64 * t * t).floor();
    let guess = if guess < 0.0 { 0 } else { guess as u64 };
    let mut n = guess.saturating_sub(3);
    let mut best = 0u64;
    for _ in 0..8 {
        let ord = cmp_n_vs_threshold(n, denom, t);
        let ok = match (strict, ord) {
            (true, Ordering::Less) => true,
            (false, Ordering::Less | Ordering::Equal) => true,
            _ => false,
        };
        if ok {
            best = n;
        } else {
            break;
        }
        n += 1;
    }
    best
}

// ---------------------------------------------------------------------------
// Counting
// ---------------------------------------------------------------------------

/// Exact N(t) = #{k in Z^d : rho(k) <= t}, closed dilate. Streaming, no
/// event storage.
pub fn count_points(body: &Body, t: f64, budget: &Budget) -> Result<u64> {
    count_points_impl(body, t, budget, false)
}

/// Strict variant: #{k : rho(k) < t}.
pub fn count_points_lt(body: &Body, t: f64, budget: &Budget) -> Result<u64> {
    count_points_impl(body, t, budget, true)
}

fn count_points_impl(body: &Body, t: f64, budget: &Budget, strict: bool) -> Result<u64> {
    if !(t >= 0.0) {
        return Err(Error::Precondition(format!("dilation t = {t} must be >= 0")));
    }
    if t == 0.0 {
        return Ok(if strict { 0 } else { 1 });
    }
    guard_box(body, t, budget)?;
    if let Some(qf) = quad_form(body) {
        return Ok(count_quadratic(&qf, t, strict));
    }
    if body.dim() == 2 {
        let (count, _ties) = planar_count(body, t, strict);
        return Ok(count);
    }
    Err(Error::Precondition(
        "no enumeration path for this body/dimension".into(),
    ))
}

fn guard_box(body: &Body, t: f64, budget: &Budget) -> Result<()> {
    let d = body.dim();
    let mut vol = 1.0f64;
    for i in 0..d {
        let mut e = vec![0.0; d];
        e[i] = 1.0;
        let b = (t * body.support(&e).unwrap()).floor() + 1.0;
        vol *= 2.0 * b + 1.0;
    }
    if vol > budget.max_events as f64 * 16.0 {
        return Err(Error::BudgetExceeded {
            estimated: vol as u64,
            budget: budget.max_events,
        });
    }
    Ok(())
}

fn count_quadratic(qf: &QuadForm, t: f64, strict: bool) -> u64 {
    let n_max = threshold_n(qf.denom, t, strict);
    count_quad_rec(&qf.coeffs, n_max)
}

/// Count integer vectors with sum c_i k_i^2 <= n_max. Innermost dimension
/// in closed form via integer sqrt.
fn count_quad_rec(coeffs: &[u64], n_max: u64) -> u64 {
    if coeffs.len() == 1 {
        return 2 * isqrt_leq(n_max, coeffs[0]) + 1;
    }
    let c = *coeffs.last().unwrap();
    let rest = &coeffs[..coeffs.len() - 1];
    let kb = isqrt_leq(n_max, c);
    let body = |k: u64| -> u64 {
        let used = c * k * k;
        let sub = count_quad_rec(rest, n_max - used);
        if k == 0 {
            sub
        } else {
            2 * sub
        }
    };
    if kb >= 512 && coeffs.len() >= 3 {
        (0..=kb).into_par_iter().map(body).sum()
    } else {
        (0..=kb).map(body).sum()
    }
}

/// Largest k >= 0 with c * k^2 <= n (exact integer arithmetic).
fn isqrt_leq(n: u64, c: u64) -> u64 {
    if c == 0 {
        return 0;
    }
    let mut k = ((n / c) as f64).sqrt() as u64;
    while c.checked_mul((k + 1) * (k + 1)).map_or(false, |v| v <= n) {
        k += 1;
    }
    while k > 0 && c * k * k > n {
        k -= 1;
    }
    k
}

// ---------------------------------------------------------------------------
// General planar path
// ---------------------------------------------------------------------------

/// Closed-dilate membership rho(k) <= t with the same tie band used by the
/// counting predicates, for callers that enumerate points themselves.
pub(crate) fn inside_closed(body: &Body, k: [f64; 2], t: f64) -> bool {
    planar_inside(body, k, t, false).0
}

/// Inclusion predicate with tie band. Returns (inside, is_tie).
fn planar_inside(body: &Body, k: [f64; 2], t: f64, strict: bool) -> (bool, bool) {
    let rho = body.gauge(&k);
    let band = TIE_BAND * t.max(1.0);
    let tie = (rho - t).abs() <= band;
    if tie {
        (!strict, true)
    } else {
        (rho < t, false)
    }
}

/// For a fixed row k2, the inside set {k1 : rho(k1, k2) <= t} is an integer
/// interval (convexity). Returns (lo, hi) inclusive, or None if empty,
/// plus the number of tie points at the interval ends.
fn planar_row_interval(
    body: &Body,
    k2: i64,
    t: f64,
    bound: i64,
    strict: bool,
) -> (Option<(i64, i64)>, u64) {
    let g = |k1: i64| body.gauge(&[k1 as f64, k2 as f64]);
    // convex in k1: ternary search for the integer minimizer
    let (mut lo, mut hi) = (-bound, bound);
    while hi - lo > 2 {
        let m1 = lo + (hi - lo) / 3;
        let m2 = hi - (hi - lo) / 3;
        if g(m1) <= g(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let mut kmin = lo;
    for k in lo..=hi {
        if g(k) < g(kmin) {
            kmin = k;
        }
    }
    let (inside_min, _) = planar_inside(body, [kmin as f64, k2 as f64], t, strict);
    if !inside_min {
        return (None, 0);
    }
    // rightmost inside point in [kmin, bound]
    let inside = |k: i64| planar_inside(body, [k as f64, k2 as f64], t, strict).0;
    let (mut a, mut b) = (kmin, bound);
    while a < b {
        let m = a + (b - a + 1) / 2;
        if inside(m) {
            a = m;
        } else {
            b = m - 1;
        }
    }
    let right = a;
    let (mut a, mut b) = (-bound, kmin);
    while a < b {
        let m = a + (b - a) / 2;
        if inside(m) {
            b = m;
        } else {
            a = m + 1;
        }
    }
    let left = a;
    let mut ties = 0u64;
    for k in [left, right] {
        if planar_inside(body, [k as f64, k2 as f64], t, strict).1 {
            ties += 1;
        }
    }
    (Some((left, right)), ties)
}

fn planar_bound(body: &Body, t: f64, axis: usize) -> i64 {
    let mut e = [0.0, 0.0];
    e[axis] = 1.0;
    (t * body.support(&e).unwrap()).floor() as i64 + 2
}

fn planar_count(body: &Body, t: f64, strict: bool) -> (u64, u64) {
    let b1 = planar_bound(body, t, 0);
    let b2 = planar_bound(body, t, 1);
    let rows: Vec<(u64, u64)> = (-b2..=b2)
        .into_par_iter()
        .map(|k2| {
            let (iv, ties) = planar_row_interval(body, k2, t, b1, strict);
            match iv {
                Some((l, r)) => ((r - l + 1) as u64, ties),
                None => (0, 0),
            }
        })
        .collect();
    let count = rows.iter().map(|r| r.0).sum();
    let ties = rows.iter().map(|r| r.1).sum();
    (count, ties)
}

// ---------------------------------------------------------------------------
// Gauge events
// ---------------------------------------------------------------------------

/// Sorted gauge values of all k with lo < rho(k) <= hi, plus N(lo).
/// Deterministic regardless of parallel schedule.
pub fn gauge_events(body: &Body, lo: f64, hi: f64, budget: &Budget) -> Result<GaugeEventList> {
    if !(lo >= 0.0) || !(hi > lo) {
        return Err(Error::Precondition(format!(
            "need 0 <= lo < hi, got lo={lo}, hi={hi}"
        )));
    }
    let d = body.dim() as i32;
    let est = (body.volume() * (hi.powi(d) - lo.powi(d)) * 1.3 + 1024.0) as u64;
    if est > budget.max_events {
        return Err(Error::BudgetExceeded {
            estimated: est,
            budget: budget.max_events,
        });
    }
    guard_box(body, hi, budget)?;
    let base_count = count_points(body, lo, budget)?;
    if let Some(qf) = quad_form(body) {
        let events = quad_events(&qf, lo, hi, budget)?;
        return Ok(GaugeEventList {
            lo,
            hi,
            base_count,
            events,
            tie_count: 0,
        });
    }
    if body.dim() != 2 {
        return Err(Error::Precondition(
            "no enumeration path for this body/dimension".into(),
        ));
    }
    let (events, ties) = planar_events(body, lo, hi);
    Ok(GaugeEventList {
        lo,
        hi,
        base_count,
        events,
        tie_count: ties,
    })
}

fn quad_events(qf: &QuadForm, lo: f64, hi: f64, budget: &Budget) -> Result<Vec<GaugeEvent>> {
    let n_lo = threshold_n(qf.denom, lo, false); // max n inside lo-ball
    let n_hi = threshold_n(qf.denom, hi, false);
    if n_hi <= n_lo {
        return Ok(Vec::new());
    }
    let span = n_hi - n_lo;
    if span > budget.max_events {
        return Err(Error::BudgetExceeded {
            estimated: span,
            budget: budget.max_events,
        });
    }
    let span = span as usize;
    let coeffs = &qf.coeffs;
    let outer = *coeffs.last().unwrap();
    let rest = &coeffs[..coeffs.len() - 1];
    let kb = isqrt_leq(n_hi, outer) as i64;

    let fill = |hist: &mut Vec<u32>, k_range: std::ops::RangeInclusive<i64>| {
        for k in k_range {
            let used = outer * (k * k) as u64;
            if used > n_hi {
                continue;
            }
            fill_rec(rest, used, 1, n_lo, n_hi, hist);
        }
    };
    // parallel slab fill only when the histogram is small enough to clone
    let hist: Vec<u32> = if span <= (1 << 22) && kb >= 64 {
        let chunks: Vec<(i64, i64)> = {
            let nchunks = rayon::current_num_threads().max(1) as i64 * 2;
            let width = (2 * kb + 1 + nchunks - 1) / nchunks;
            (0..nchunks)
                .map(|i| (-kb + i * width, (-kb + (i + 1) * width - 1).min(kb)))
                .filter(|(a, b)| a <= b)
                .collect()
        };
        chunks
            .into_par_iter()
            .map(|(a, b)| {
                let mut h = vec![0u32; span];
                fill(&mut h, a..=b);
                h
            })
            .reduce(
                || vec![0u32; span],
                |mut x, y| {
                    for (a, b) in x.iter_mut().zip(&y) {
                        *a += b;
                    }
                    x
                },
            )
    } else {
        let mut h = vec![0u32; span];
        fill(&mut h, -kb..=kb);
        h
    };
    let denom = qf.denom as f64;
    Ok(hist
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(i, &c)| GaugeEvent {
            rho: ((n_lo + 1 + i as u64) as f64 / denom).sqrt(),
            multiplicity: c as u64,
        })
        .collect())
}

/// Accumulate n = used + sum c_i k_i^2 into hist for n in (n_lo, n_hi],
/// each point counted with the symmetry weight of the outer coordinates.
fn fill_rec(coeffs: &[u64], used: u64, weight: u32, n_lo: u64, n_hi: u64, hist: &mut Vec<u32>) {
    if coeffs.len() == 1 {
        let c = coeffs[0];
        let k_hi = isqrt_leq(n_hi - used, c);
        // skip the inner disk: need used + c k^2 > n_lo
        let k_lo = if used > n_lo {
            0
        } else {
            isqrt_leq(n_lo - used, c) + 1
        };
        for k in k_lo..=k_hi {
            let n = used + c * k * k;
            let idx = (n - n_lo - 1) as usize;
            hist[idx] += if k == 0 { weight } else { 2 * weight };
        }
        return;
    }
    let c = *coeffs.last().unwrap();
    let rest = &coeffs[..coeffs.len() - 1];
    let k_max = isqrt_leq(n_hi - used, c);
    for k in 0..=k_max {
        let u2 = used + c * k * k;
        let w = if k == 0 { weight } else { 2 * weight };
        fill_rec(rest, u2, w, n_lo, n_hi, hist);
    }
}

fn planar_events(body: &Body, lo: f64, hi: f64) -> (Vec<GaugeEvent>, u64) {
    let b1 = planar_bound(body, hi, 0);
    let b2 = planar_bound(body, hi, 1);
    let per_row: Vec<(Vec<f64>, u64)> = (-b2..=b2)
        .into_par_iter()
        .map(|k2| {
            let (outer, t_out) = planar_row_interval(body, k2, hi, b1, false);
            let mut vals = Vec::new();
            let mut ties = t_out;
            if let Some((l, r)) = outer {
                let (inner, t_in) = planar_row_interval(body, k2, lo, b1, false);
                ties += t_in;
                match inner {
                    Some((il, ir)) => {
                        for k1 in l..il {
                            vals.push(body.gauge(&[k1 as f64, k2 as f64]));
                        }
                        for k1 in (ir + 1)..=r {
                            vals.push(body.gauge(&[k1 as f64, k2 as f64]));
                        }
                    }
                    None => {
                        for k1 in l..=r {
                            vals.push(body.gauge(&[k1 as f64, k2 as f64]));
                        }
                    }
                }
            }
            (vals, ties)
        })
        .collect();
    let ties = per_row.iter().map(|r| r.1).sum();
    let mut vals: Vec<f64> = per_row.into_iter().flat_map(|r| r.0).collect();
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // group values equal within the relative tie band
    let mut events: Vec<GaugeEvent> = Vec::new();
    for v in vals {
        match events.last_mut() {
            Some(e) if (v - e.rho).abs() <= TIE_BAND * v.max(1.0) => e.multiplicity += 1,
            _ => events.push(GaugeEvent {
                rho: v,
                multiplicity: 1,
            }),
        }
    }
    (events, ties)
}

// ---------------------------------------------------------------------------
// Shell counts
// ---------------------------------------------------------------------------

/// Exact S(tau, eps) = #{k : tau - eps <= rho(k) <= tau + eps}, closed shell.
pub fn shell_count(body: &Body, tau: f64, eps: f64, budget: &Budget) -> Result<ShellCount> {
    if !(eps > 0.0) || !(tau >= eps) {
        return Err(Error::Precondition(format!(
            "need tau >= eps > 0, got tau={tau}, eps={eps}"
        )));
    }
    let outer = count_points(body, tau + eps, budget)?;
    let inner = count_points_lt(body, tau - eps, budget)?;
    Ok(ShellCount {
        tau,
        eps,
        count: outer - inner,
    })
}
