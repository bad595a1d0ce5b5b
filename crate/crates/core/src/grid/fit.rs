//! Log-log least squares fits.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Ordinary least squares fit of `log y = slope · log x + intercept`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    /// `(log x, log y)` pairs the fit was computed from
    pub points: Vec<(f64, f64)>,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

impl ScalingFit {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("fit serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Recomputes the fit from the stored log points.
    pub fn refit(&self) -> Result<Self> {
        ols(self.points.clone())
    }
}

/// Fits a power law through `(x, y)` pairs with `x, y > 0`.
pub fn fit_powerlaw(points: &[(f64, f64)]) -> Result<ScalingFit> {
    if points.len() < 3 {
        return Err(Error::DegenerateFit("need at least 3 points"));
    }
    if points
        .iter()
        .any(|&(x, y)| !(x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite()))
    {
        return Err(Error::DegenerateFit("coordinates must be positive and finite"));
    }
    let mut xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    xs.sort_by(f64::total_cmp);
    if xs.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::DegenerateFit("x values must be distinct"));
    }
    ols(points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect())
}

fn ols(points: Vec<(f64, f64)>) -> Result<ScalingFit> {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::DegenerateFit("x values must be distinct"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = points
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let r_squared = if syy > 0.0 {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Ok(ScalingFit {
        points,
        slope,
        intercept,
        r_squared,
    })
}
