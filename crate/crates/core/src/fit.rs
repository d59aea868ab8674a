//! Ordinary least squares in log-log and semi-log coordinates.

use serde::Serialize;

use crate::error::{invalid, Result};

/// Fewest points for which a slope is reported.
pub const MIN_POINTS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FitResult {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub count: usize,
    pub residual_max: f64,
}

/// Least-squares line through arbitrary points (at least two, with distinct x).
pub fn ols(xs: &[f64], ys: &[f64]) -> Result<FitResult> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return invalid("ols needs at least two paired points");
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return invalid("ols input must be finite");
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return invalid("ols needs distinct x values");
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let res: Vec<f64> = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| y - (intercept + slope * x))
        .collect();
    let ss_res: f64 = res.iter().map(|r| r * r).sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    Ok(FitResult {
        slope,
        intercept,
        r_squared: if ss_tot == 0.0 {
            1.0
        } else {
            1.0 - ss_res / ss_tot
        },
        count: xs.len(),
        residual_max: res.iter().fold(0.0, |m, r| m.max(r.abs())),
    })
}

/// Slope of ln y against ln x; needs at least four positive points.
pub fn fit_loglog(xs: &[f64], ys: &[f64]) -> Result<FitResult> {
    if xs.len() < MIN_POINTS {
        return invalid(format!(
            "need at least {MIN_POINTS} points, got {}",
            xs.len()
        ));
    }
    if xs.iter().chain(ys).any(|&v| !(v > 0.0)) {
        return invalid("log-log fit needs positive values");
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    ols(&lx, &ly)
}

/// Slope of log2 y against x; needs at least four points with positive y.
pub fn fit_semilog2(xs: &[f64], ys: &[f64]) -> Result<FitResult> {
    if xs.len() < MIN_POINTS {
        return invalid(format!(
            "need at least {MIN_POINTS} points, got {}",
            xs.len()
        ));
    }
    if ys.iter().any(|&v| !(v > 0.0)) {
        return invalid("semi-log fit needs positive values");
    }
    let ly: Vec<f64> = ys.iter().map(|y| y.log2()).collect();
    ols(xs, &ly)
}
