//! Log-log variance slopes and normalized decay curves.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute floor of the classification band around each reference slope.
pub const BAND_FLOOR: f64 = 0.12;
pub const ROOT_N_SLOPE: f64 = -1.0;
pub const CUBE_ROOT_SLOPE: f64 = -2.0 / 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RateClass {
    RootN,
    CubeRoot,
    Indeterminate,
}

impl RateClass {
    pub fn name(self) -> &'static str {
        match self {
            RateClass::RootN => "ROOT_N",
            RateClass::CubeRoot => "CUBE_ROOT",
            RateClass::Indeterminate => "INDETERMINATE",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "ROOT_N" => Ok(RateClass::RootN),
            "CUBE_ROOT" => Ok(RateClass::CubeRoot),
            "INDETERMINATE" => Ok(RateClass::Indeterminate),
            other => Err(Error::Parse(format!("unknown rate class {other:?}"))),
        }
    }
}

impl fmt::Display for RateClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub r_squared: f64,
    /// `ln(v_last / v_first) / ln(n_last / n_first)`.
    pub endpoint_slope: f64,
    pub classification: RateClass,
}

fn validate(series: &[(f64, f64)], min_points: usize) -> Result<()> {
    if series.len() < min_points {
        return Err(Error::TooFewPoints {
            need: min_points,
            got: series.len(),
        });
    }
    for (i, &(n, v)) in series.iter().enumerate() {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::NonPositiveVariance(i));
        }
        if !(n > 0.0) || (i > 0 && !(n > series[i - 1].0)) {
            return Err(Error::InvalidArgument(
                "sample sizes must be positive and strictly increasing".into(),
            ));
        }
    }
    Ok(())
}

/// Nearest reference slope whose band contains `slope`.
pub fn classify(slope: f64, slope_se: f64) -> RateClass {
    let band = (2.0 * slope_se).max(BAND_FLOOR);
    let d_root = (slope - ROOT_N_SLOPE).abs();
    let d_cube = (slope - CUBE_ROOT_SLOPE).abs();
    match (d_root <= band, d_cube <= band) {
        (true, true) if d_cube < d_root => RateClass::CubeRoot,
        (true, _) => RateClass::RootN,
        (false, true) => RateClass::CubeRoot,
        (false, false) => RateClass::Indeterminate,
    }
}

/// OLS of `ln v` on `ln n`.
pub fn fit_rate(series: &[(f64, f64)]) -> Result<RateFit> {
    validate(series, 3)?;
    let k = series.len() as f64;
    let xs: Vec<f64> = series.iter().map(|(n, _)| n.ln()).collect();
    let ys: Vec<f64> = series.iter().map(|(_, v)| v.ln()).collect();
    let xbar = xs.iter().sum::<f64>() / k;
    let ybar = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - xbar).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xbar) * (y - ybar)).sum();
    let syy: f64 = ys.iter().map(|y| (y - ybar).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let sse: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let slope_se = (sse / (k - 2.0) / sxx).sqrt();
    let r_squared = if syy > 0.0 {
        (1.0 - sse / syy).clamp(0.0, 1.0)
    } else {
        1.0
    };
    let (n0, v0) = series[0];
    let (n1, v1) = series[series.len() - 1];
    Ok(RateFit {
        slope,
        intercept,
        slope_se,
        r_squared,
        endpoint_slope: (v1 / v0).ln() / (n1 / n0).ln(),
        classification: classify(slope, slope_se),
    })
}

/// One row of a plot-ready decay curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayPoint {
    pub n: f64,
    pub ratio: f64,
    pub ref_n_inv: f64,
    pub ref_n_23: f64,
}

/// Variances relative to the first point, with `(n₀/n)` and `(n₀/n)^{2/3}` alongside.
pub fn normalize_decay(series: &[(f64, f64)]) -> Result<Vec<DecayPoint>> {
    validate(series, 1)?;
    let (n0, v0) = series[0];
    Ok(series
        .iter()
        .map(|&(n, v)| DecayPoint {
            n,
            ratio: v / v0,
            ref_n_inv: n0 / n,
            ref_n_23: (n0 / n).powf(2.0 / 3.0),
        })
        .collect())
}
