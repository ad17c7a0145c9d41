//! Least-squares fits on logarithmic axes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Outcome of a straight-line fit of `log y` against `log x`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult {
    pub slope: f64,
    pub intercept: f64,
    pub residual_rms: f64,
    pub window: (f64, f64),
    pub points: usize,
}

impl RegressionResult {
    /// Fitted value at `x`.
    pub fn predict(&self, x: f64) -> f64 {
        (self.intercept + self.slope * x.ln()).exp()
    }
}

/// Fits `log y = intercept + slope * log x` over the points whose abscissa lies in
/// `window` (all points when `None`). Needs at least three positive points.
pub fn loglog_fit(points: &[(f64, f64)], window: Option<(f64, f64)>) -> Result<RegressionResult> {
    let (lo, hi) = window.unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
    let sel: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x >= lo && *x <= hi && *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if sel.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} usable points in window, need 3",
            sel.len()
        )));
    }
    let n = sel.len() as f64;
    let mx = sel.iter().map(|p| p.0).sum::<f64>() / n;
    let my = sel.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = sel.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("all abscissae coincide".into()));
    }
    let sxy: f64 = sel.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = sel.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let xs = sel.iter().map(|p| p.0.exp());
    let window = (
        xs.clone().fold(f64::INFINITY, f64::min),
        xs.fold(f64::NEG_INFINITY, f64::max),
    );
    Ok(RegressionResult { slope, intercept, residual_rms: (rss / n).sqrt(), window, points: sel.len() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law() {
        let pts: Vec<(f64, f64)> = (1..10).map(|i| (i as f64, (i * i) as f64)).collect();
        let r = loglog_fit(&pts, None).unwrap();
        assert!((r.slope - 2.0).abs() < 1e-12);
        assert!(r.residual_rms < 1e-12);
    }

    #[test]
    fn two_points_rejected() {
        assert!(loglog_fit(&[(1.0, 1.0), (2.0, 4.0)], None).is_err());
        let pts = [(1.0, 1.0), (2.0, 4.0), (3.0, 9.0)];
        assert!(loglog_fit(&pts, Some((1.5, 10.0))).is_err());
    }
}
