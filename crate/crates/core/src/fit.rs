//! Ordinary least squares on log-log data, used by the exponent-fitting
//! operations and the flat-point type estimator.

use serde::Serialize;

/// Result of a straight-line fit `y = slope * x + intercept`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope, from residual variance.
    pub slope_se: f64,
    /// Half-width of the ~95% confidence interval (2 * slope_se).
    pub ci_halfwidth: f64,
    /// Root-mean-square residual.
    pub residual_rms: f64,
}

/// Equal-weight OLS. Panics if fewer than 3 points or degenerate x.
pub fn ols(xs: &[f64], ys: &[f64]) -> LineFit {
    assert!(xs.len() == ys.len() && xs.len() >= 3, "need >= 3 points");
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    assert!(sxx > 0.0, "degenerate abscissae");
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let r = y - (slope * x + intercept);
            r * r
        })
        .sum();
    let dof = (xs.len() - 2).max(1) as f64;
    let var = ss_res / dof;
    let slope_se = (var / sxx).sqrt();
    LineFit {
        slope,
        intercept,
        slope_se,
        ci_halfwidth: 2.0 * slope_se,
        residual_rms: (ss_res / n).sqrt(),
    }
}

/// OLS of `ln y` against `ln x`; pairs with non-positive entries are skipped.
pub fn loglog(xs: &[f64], ys: &[f64]) -> LineFit {
    let mut lx = Vec::with_capacity(xs.len());
    let mut ly = Vec::with_capacity(ys.len());
    for (&x, &y) in xs.iter().zip(ys) {
        if x > 0.0 && y > 0.0 && y.is_finite() {
            lx.push(x.ln());
            ly.push(y.ln());
        }
    }
    ols(&lx, &ly)
}
