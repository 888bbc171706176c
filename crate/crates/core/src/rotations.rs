//! Diophantine rotation diagnostics for planar bodies with flat
//! boundary points.
//!
//! For a flat point `P` of tangency order `m` with unit normal `n` and
//! unit tangent `v`, the directional weight
//! `theta(xi) = |<v,xi>/<n,xi>|^{-(m-2)/(2(m-1))}`
//! penalises frequencies aligned with the normal direction.  After
//! rotating the body by an angle, the weight is evaluated in the rotated
//! frame; whether the weighted maximal sum over lattice frequencies
//! stabilises or blows up discriminates "good" rotation angles from
//! resonant ones.

use crate::bodies::{Body, FlatPoint};
use crate::{Error, Result};
use rayon::prelude::*;
use serde::Serialize;

/// Relative band inside which `<k, v>` is treated as exactly zero, i.e.
/// the frequency lies on the rational resonance line and the weight is
/// unbounded.
const ON_LINE_BAND: f64 = 1e-12;

fn rotate(p: [f64; 2], theta: f64) -> [f64; 2] {
    let (s, c) = theta.sin_cos();
    [c * p[0] - s * p[1], s * p[0] + c * p[1]]
}

/// Directional weight of a flat point at frequency `xi`.
///
/// Returns `+inf` when `xi` is orthogonal to the tangent (on the normal
/// line) and an error when `<n, xi> = 0`, where the weight is not
/// defined.
pub fn theta_weight(flat: &FlatPoint, xi: [f64; 2]) -> Result<f64> {
    let dn = flat.normal[0] * xi[0] + flat.normal[1] * xi[1];
    if dn == 0.0 {
        return Err(Error::Precondition(
            "directional weight undefined for frequencies orthogonal to the normal".into(),
        ));
    }
    let dv = flat.tangent[0] * xi[0] + flat.tangent[1] * xi[1];
    if dv == 0.0 {
        return Ok(f64::INFINITY);
    }
    let m = flat.order as f64;
    let expo = (m - 2.0) / (2.0 * (m - 1.0));
    Ok((dv / dn).abs().powf(-expo))
}

/// Nonzero integer frequencies `k` with `|k| <= k_max` lying within
/// distance 1 of the line spanned by the rotated normal of `flat`
/// (rotation of the body by `theta` acts on frequencies by `-theta`).
///
/// The strip is walked along its long axis, so the cost is `O(k_max)`
/// rather than `O(k_max^2)`.
pub fn near_normal_set(theta: f64, flat: &FlatPoint, k_max: i64) -> Vec<[i64; 2]> {
    let w = rotate(flat.normal, -theta);
    strip_points(w, k_max)
}

/// All nonzero `k`, `|k| <= k_max`, with perpendicular distance to the
/// line through the origin in unit direction `w` strictly below 1.
fn strip_points(w: [f64; 2], k_max: i64) -> Vec<[i64; 2]> {
    let mut out = Vec::new();
    let kk = k_max * k_max;
    if w[0].abs() >= w[1].abs() {
        // walk along the x axis; |k1*w1 - k2*w0| < 1 bounds k2 tightly
        for k1 in -k_max..=k_max {
            let c = k1 as f64 * w[1];
            let lo = ((c - 1.0) / w[0]).min((c + 1.0) / w[0]);
            let hi = ((c - 1.0) / w[0]).max((c + 1.0) / w[0]);
            for k2 in (lo.floor() as i64)..=(hi.ceil() as i64) {
                let d = (k1 as f64 * w[1] - k2 as f64 * w[0]).abs();
                if d < 1.0 && (k1 != 0 || k2 != 0) && k1 * k1 + k2 * k2 <= kk {
                    out.push([k1, k2]);
                }
            }
        }
    } else {
        for k2 in -k_max..=k_max {
            let c = k2 as f64 * w[0];
            let lo = ((c - 1.0) / w[1]).min((c + 1.0) / w[1]);
            let hi = ((c - 1.0) / w[1]).max((c + 1.0) / w[1]);
            for k1 in (lo.floor() as i64)..=(hi.ceil() as i64) {
                let d = (k1 as f64 * w[1] - k2 as f64 * w[0]).abs();
                if d < 1.0 && (k1 != 0 || k2 != 0) && k1 * k1 + k2 * k2 <= kk {
                    out.push([k1, k2]);
                }
            }
        }
    }
    out.sort();
    out.dedup();
    out
}

/// Running suprema of the weighted maximal sum, one entry per dyadic
/// octave of `|k|`.
#[derive(Debug, Clone, Serialize)]
pub struct OctaveSup {
    /// Upper end of the octave, `|k| <= hi`.
    pub hi: i64,
    /// Supremum of `|k|^{-1+eps} * theta(k)` over all strip frequencies
    /// with `|k| <= hi` (cumulative, so the profile is nondecreasing).
    pub sup: f64,
}

/// Result of the weighted maximal-sum scan for one flat point and one
/// rotation angle.
#[derive(Debug, Clone, Serialize)]
pub struct DiophantineSup {
    pub theta: f64,
    pub order: u32,
    pub eps: f64,
    pub k_max: i64,
    /// `sup |k|^{-1+eps} theta(k)` over the strip; `+inf` when a
    /// frequency lies on the resonance line.
    pub m_hat: f64,
    /// True when `m_hat` is `+inf`.
    pub unbounded: bool,
    pub octaves: Vec<OctaveSup>,
}

/// Supremum of `|k|^{-1+eps} * theta(k)` over the strip of frequencies
/// near the rotated normal line, with a per-octave growth profile.
///
/// The weight is evaluated in the rotated frame: the normal and tangent
/// are rotated by `-theta` while the integer frequencies stay fixed.
/// Frequencies whose tangent component vanishes to relative precision
/// [`ON_LINE_BAND`] make the supremum `+inf`.
pub fn diophantine_sup(
    theta: f64,
    flat: &FlatPoint,
    eps: f64,
    k_max: i64,
) -> Result<DiophantineSup> {
    if !(eps > 0.0 && eps <= 0.5) {
        return Err(Error::Precondition("eps must lie in (0, 1/2]".into()));
    }
    if k_max < 1 {
        return Err(Error::Precondition("k_max must be positive".into()));
    }
    let rn = rotate(flat.normal, -theta);
    let rv = rotate(flat.tangent, -theta);
    let m = flat.order as f64;
    let expo = (m - 2.0) / (2.0 * (m - 1.0));
    let pts = strip_points(rn, k_max);

    let n_oct = (64 - (k_max as u64).leading_zeros()) as i64;
    let mut octaves: Vec<OctaveSup> = (0..=n_oct)
        .map(|j| OctaveSup {
            hi: (1i64 << j).min(k_max),
            sup: 0.0,
        })
        .collect();
    octaves.dedup_by_key(|o| o.hi);

    for k in &pts {
        let kx = k[0] as f64;
        let ky = k[1] as f64;
        let norm = kx.hypot(ky);
        let dv = rv[0] * kx + rv[1] * ky;
        let dn = rn[0] * kx + rn[1] * ky;
        let val = if dv.abs() <= ON_LINE_BAND * norm {
            f64::INFINITY
        } else if dn == 0.0 {
            continue;
        } else {
            norm.powf(-1.0 + eps) * (dv / dn).abs().powf(-expo)
        };
        for o in octaves.iter_mut() {
            if norm <= o.hi as f64 && val > o.sup {
                o.sup = val;
            }
        }
    }
    let m_hat = octaves.last().map(|o| o.sup).unwrap_or(0.0);
    Ok(DiophantineSup {
        theta,
        order: flat.order,
        eps,
        k_max,
        m_hat,
        unbounded: m_hat.is_infinite(),
        octaves,
    })
}

/// Per-flat-point values of the algebraic small-denominator statistic.
#[derive(Debug, Clone, Serialize)]
pub struct ConditionStat {
    pub theta: f64,
    pub eps: f64,
    pub k_max: i64,
    /// One entry per flat point (boundary order):
    /// `inf` over strip frequencies of `|k|^{m/(m-2)-eps} |<k, A* v>|`.
    pub per_flat: Vec<f64>,
    /// Minimum over flat points; the rotation condition holy grail is
    /// this staying bounded away from zero as `k_max` grows.
    pub stat: f64,
}

/// Small-denominator statistic of a rotation angle.
///
/// For each flat point `P`, takes the infimum over frequencies within
/// distance 1 of the unrotated normal line of
/// `|k|^{m/(m-2)-eps} |<k, A* v_P>|`; a positive infimum certifies that
/// the rotated tangent direction is badly approximable at the rate the
/// scaling analysis needs.  The identity rotation gives 0 because the
/// axis frequencies are orthogonal to the tangent.
///
/// `strip_rotated` switches the strip from the unrotated normal line
/// (the default reading) to the rotated one.
pub fn diophantine_condition(
    body: &Body,
    theta: f64,
    eps: f64,
    k_max: i64,
    strip_rotated: bool,
) -> Result<ConditionStat> {
    if !(eps > 0.0 && eps <= 0.5) {
        return Err(Error::Precondition("eps must lie in (0, 1/2]".into()));
    }
    let flats = body.flat_points()?;
    if flats.is_empty() {
        return Err(Error::Precondition(
            "body has no flat boundary points".into(),
        ));
    }
    let mut per_flat = Vec::new();
    for flat in &flats {
        let rv = rotate(flat.tangent, -theta);
        let m = flat.order as f64;
        let expo = m / (m - 2.0) - eps;
        let strip_dir = if strip_rotated {
            rotate(flat.normal, -theta)
        } else {
            flat.normal
        };
        let pts = strip_points(strip_dir, k_max);
        let mut inf = f64::INFINITY;
        for k in &pts {
            let kx = k[0] as f64;
            let ky = k[1] as f64;
            let norm = kx.hypot(ky);
            let mut dv = (rv[0] * kx + rv[1] * ky).abs();
            if dv <= ON_LINE_BAND * norm {
                dv = 0.0;
            }
            let val = norm.powf(expo) * dv;
            if val < inf {
                inf = val;
            }
        }
        per_flat.push(inf);
    }
    let stat = per_flat.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(ConditionStat {
        theta,
        eps,
        k_max,
        per_flat,
        stat,
    })
}

/// Summary of the lattice rest of the rotated body over a short window.
#[derive(Debug, Clone, Serialize)]
pub struct DiscrepancySummary {
    pub r: f64,
    pub h: f64,
    /// Relative mean-square rest over `[r, r+h]`.
    pub g: f64,
    /// `g * r^{3/2}`, the quantity that stays bounded for good angles.
    pub g_scaled: f64,
    /// Max of `|N(t) - t^2 vol|` over a sample grid in the window.
    pub max_abs_rest: f64,
}

/// Full diagnostic record for one rotation angle.
#[derive(Debug, Clone, Serialize)]
pub struct RotationReport {
    pub theta: f64,
    pub k_max: i64,
    pub eps: f64,
    pub flats: Vec<FlatRecord>,
    pub condition: ConditionStat,
    pub discrepancy: Option<DiscrepancySummary>,
}

/// Per-flat-point entry of a [`RotationReport`].
#[derive(Debug, Clone, Serialize)]
pub struct FlatRecord {
    pub order: u32,
    pub normal: [f64; 2],
    pub m_hat: f64,
    pub unbounded: bool,
    pub octaves: Vec<OctaveSup>,
}

impl RotationReport {
    /// Header for [`csv_rows`](Self::csv_rows).
    pub fn csv_header() -> &'static str {
        "theta,mP,K,M_hat,cond_stat,G_scaled"
    }

    /// One CSV row per flat point.
    pub fn csv_rows(&self) -> String {
        let g = self
            .discrepancy
            .as_ref()
            .map(|d| format!("{:.17e}", d.g_scaled))
            .unwrap_or_default();
        self.flats
            .iter()
            .map(|f| {
                let m_hat = if f.unbounded {
                    "inf".to_string()
                } else {
                    format!("{:.17e}", f.m_hat)
                };
                format!(
                    "{:.17e},{},{},{},{:.17e},{}\n",
                    self.theta, f.order, self.k_max, m_hat, self.condition.stat, g
                )
            })
            .collect()
    }
}

/// Compute a [`RotationReport`] for each angle, in parallel over angles.
///
/// When `r_scale` is set, the rotated body's short-window relative
/// mean-square rest at `r = r_scale` (window `ceil(ln r)`) is computed
/// and scaled by `r^{3/2}` so that angles can be compared directly.
/// Errors when the body has no flat boundary points (nothing to
/// diagnose).
pub fn rotation_scan(
    body: &Body,
    angles: &[f64],
    eps: f64,
    k_max: i64,
    r_scale: Option<f64>,
    budget: &crate::lattice::Budget,
) -> Result<Vec<RotationReport>> {
    let flats = body.flat_points()?;
    if flats.is_empty() {
        return Err(Error::Precondition(
            "body has no flat boundary points".into(),
        ));
    }
    angles
        .par_iter()
        .map(|&theta| {
            let mut recs = Vec::new();
            for flat in &flats {
                let ds = diophantine_sup(theta, flat, eps, k_max)?;
                recs.push(FlatRecord {
                    order: flat.order,
                    normal: flat.normal,
                    m_hat: ds.m_hat,
                    unbounded: ds.unbounded,
                    octaves: ds.octaves,
                });
            }
            let condition = diophantine_condition(body, theta, eps, k_max, false)?;
            let discrepancy = match r_scale {
                None => None,
                Some(r) => {
                    let rotated = body.rotate(theta)?;
                    let h = r.ln().ceil().max(1.0);
                    let stat =
                        crate::discrepancy::window_msd(&rotated, r, h, true, budget)?;
                    let vol = rotated.volume();
                    let mut max_abs = 0.0f64;
                    let samples = 33;
                    for i in 0..samples {
                        let t = r + h * i as f64 / (samples - 1) as f64;
                        let n = crate::lattice::count_points(&rotated, t, budget)?;
                        let rest = (n as f64 - t * t * vol).abs();
                        if rest > max_abs {
                            max_abs = rest;
                        }
                    }
                    Some(DiscrepancySummary {
                        r,
                        h,
                        g: stat.g,
                        g_scaled: stat.g * r.powf(1.5),
                        max_abs_rest: max_abs,
                    })
                }
            };
            Ok(RotationReport {
                theta,
                k_max,
                eps,
                flats: recs,
                condition,
                discrepancy,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn superellipse4() -> Body {
        Body::Superellipse2D {
            exponent: 4,
            a: 1.0,
            b: 1.0,
        }
    }

    fn flat_east() -> FlatPoint {
        // flat point of x^4 + y^4 <= 1 on the positive x axis
        FlatPoint {
            point: [1.0, 0.0],
            normal: [1.0, 0.0],
            tangent: [0.0, 1.0],
            order: 4,
            fitted_order: 4.0,
        }
    }

    /// Golden-ratio-slope rotation, the canonical badly-approximable angle.
    fn golden_angle() -> f64 {
        ((5f64.sqrt() - 1.0) / 2.0).atan()
    }

    #[test]
    fn theta_weight_examples() {
        let f = flat_east();
        // m = 4: exponent (m-2)/(2(m-1)) = 1/3
        let w = theta_weight(&f, [1.0, 1.0]).unwrap();
        assert!((w - 1.0).abs() < 1e-14);
        let w = theta_weight(&f, [8.0, 1.0]).unwrap();
        assert!((w - 2.0).abs() < 1e-13);
        assert!(theta_weight(&f, [5.0, 0.0]).unwrap().is_infinite());
        assert!(theta_weight(&f, [0.0, 3.0]).is_err());
    }

    #[test]
    fn theta_weight_homogeneous() {
        let f = flat_east();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let xi = [rng.gen_range(-3.0..3.0), rng.gen_range(0.1..3.0)];
            let lam: f64 = rng.gen_range(0.1..10.0);
            let a = theta_weight(&f, xi).unwrap();
            let b = theta_weight(&f, [lam * xi[0], lam * xi[1]]).unwrap();
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn near_normal_identity_axis() {
        let f = flat_east();
        let mut pts = near_normal_set(0.0, &f, 3);
        pts.sort();
        let expect: Vec<[i64; 2]> =
            vec![[-3, 0], [-2, 0], [-1, 0], [1, 0], [2, 0], [3, 0]];
        assert_eq!(pts, expect);
    }

    #[test]
    fn near_normal_matches_brute_force() {
        let f = flat_east();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let theta: f64 = rng.gen_range(0.0..std::f64::consts::PI);
            let k_max = 50i64;
            let mut fast = near_normal_set(theta, &f, k_max);
            fast.sort();
            let w = rotate(f.normal, -theta);
            let mut brute = Vec::new();
            for k1 in -k_max..=k_max {
                for k2 in -k_max..=k_max {
                    if k1 == 0 && k2 == 0 {
                        continue;
                    }
                    if k1 * k1 + k2 * k2 > k_max * k_max {
                        continue;
                    }
                    let d = (k1 as f64 * w[1] - k2 as f64 * w[0]).abs();
                    if d < 1.0 {
                        brute.push([k1, k2]);
                    }
                }
            }
            brute.sort();
            assert_eq!(fast, brute, "theta = {theta}");
        }
    }

    #[test]
    fn identity_rotation_unbounded() {
        let f = flat_east();
        let ds = diophantine_sup(0.0, &f, 0.1, 100).unwrap();
        assert!(ds.unbounded);
        assert!(ds.m_hat.is_infinite());
    }

    #[test]
    fn golden_angle_stabilizes() {
        let f = flat_east();
        let ds = diophantine_sup(golden_angle(), &f, 0.1, 100_000).unwrap();
        assert!(!ds.unbounded, "golden angle must stay finite");
        let n = ds.octaves.len();
        assert!(n >= 4);
        let last = ds.octaves[n - 1].sup;
        for o in &ds.octaves[n - 3..] {
            assert!(
                last <= 1.05 * o.sup,
                "octave profile still growing: {:?}",
                ds.octaves
            );
        }
    }

    #[test]
    fn rational_slope_unbounded() {
        // tan(theta) = 3/7 puts the multiples of (7,-3) on the rotated
        // normal line, so the weight blows up once |k| reaches sqrt(58)
        let theta = (3f64 / 7.0).atan();
        let f = flat_east();
        let ds = diophantine_sup(theta, &f, 0.1, 1000).unwrap();
        assert!(ds.unbounded);
        // octaves below sqrt(58) are still finite
        let early = ds.octaves.iter().find(|o| o.hi == 4).unwrap();
        assert!(early.sup.is_finite());
    }

    #[test]
    fn sup_monotone_in_k_and_eps() {
        let f = flat_east();
        let th = golden_angle();
        let mut prev = 0.0;
        for k in [100, 1000, 10_000] {
            let ds = diophantine_sup(th, &f, 0.1, k).unwrap();
            assert!(ds.m_hat >= prev);
            prev = ds.m_hat;
        }
        let a = diophantine_sup(th, &f, 0.05, 10_000).unwrap().m_hat;
        let b = diophantine_sup(th, &f, 0.2, 10_000).unwrap().m_hat;
        assert!(b >= a, "larger eps must not shrink the sup");
    }

    #[test]
    fn sup_rejects_bad_eps() {
        let f = flat_east();
        assert!(diophantine_sup(0.3, &f, 0.0, 10).is_err());
        assert!(diophantine_sup(0.3, &f, 0.6, 10).is_err());
    }

    #[test]
    fn condition_identity_vanishes() {
        let body = superellipse4();
        let cs = diophantine_condition(&body, 0.0, 0.1, 500, false).unwrap();
        assert_eq!(cs.stat, 0.0);
    }

    #[test]
    fn condition_golden_positive_and_monotone() {
        let body = superellipse4();
        let mut prev = f64::INFINITY;
        for k in [100, 1000, 10_000] {
            let cs = diophantine_condition(&body, golden_angle(), 0.1, k, false).unwrap();
            assert!(cs.stat > 0.0, "K = {k}: stat = {}", cs.stat);
            assert!(cs.stat <= prev + 1e-12, "infimum must be nonincreasing in K");
            prev = cs.stat;
        }
    }

    #[test]
    fn condition_rejects_ball() {
        let ball = Body::Ball { dim: 2, radius: 1.0 };
        assert!(diophantine_condition(&ball, 0.3, 0.1, 100, false).is_err());
    }

    #[test]
    fn scan_deterministic_and_rejects_ball() {
        let body = superellipse4();
        let budget = crate::lattice::Budget::default();
        let angles = [0.0, golden_angle()];
        let a = rotation_scan(&body, &angles, 0.1, 1000, None, &budget).unwrap();
        let b = rotation_scan(&body, &angles, 0.1, 1000, None, &budget).unwrap();
        let ja = serde_json::to_string(&a).unwrap();
        let jb = serde_json::to_string(&b).unwrap();
        assert_eq!(ja, jb);
        assert_eq!(a.len(), 2);
        assert!(a[0].flats.iter().all(|f| f.unbounded));
        assert!(a[1].flats.iter().all(|f| !f.unbounded));
        let csv = a[1].csv_rows();
        assert_eq!(csv.lines().count(), a[1].flats.len());
        assert!(csv.contains(','));

        let ball = Body::Ball { dim: 2, radius: 1.0 };
        assert!(rotation_scan(&ball, &angles, 0.1, 100, None, &budget).is_err());
    }

    #[test]
    fn weak_type_tail_decay() {
        // the maximal statistic should satisfy a weak-type bound:
        // P(M_hat > alpha) should fall off at least like alpha^{-2}
        let f = flat_east();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        let angles: Vec<f64> = (0..2000)
            .map(|_| rng.gen_range(0.0..std::f64::consts::PI))
            .collect();
        let mut vals: Vec<f64> = angles
            .par_iter()
            .map(|&th| diophantine_sup(th, &f, 0.1, 10_000).unwrap().m_hat)
            .collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = vals.len() as f64;
        // survival fractions at quantile-based thresholds
        let mut alphas = Vec::new();
        let mut fracs = Vec::new();
        for q in [0.50, 0.60, 0.70, 0.80, 0.90, 0.95, 0.98] {
            let idx = (q * n) as usize;
            let alpha = vals[idx];
            if !alpha.is_finite() {
                continue;
            }
            let surv = vals.iter().filter(|v| **v > alpha).count() as f64 / n;
            alphas.push(alpha);
            fracs.push(surv);
        }
        assert!(alphas.len() >= 5);
        let fit = crate::fit::loglog(&alphas, &fracs);
        assert!(
            fit.slope <= -1.7,
            "weak-type tail too heavy: slope {:.3}",
            fit.slope
        );
    }
}
