//! Least-squares fits used to turn Monte Carlo output into scaling laws.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordinary least-squares line `y = slope * x + intercept`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub slope: f64,
    pub intercept: f64,
    pub slope_std_error: f64,
    pub residuals: Vec<f64>,
}

impl Line {
    pub fn eval(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }
}

pub fn ols(xs: &[f64], ys: &[f64]) -> Result<Line> {
    if xs.len() != ys.len() {
        return Err(Error::InvalidParameter("fit inputs differ in length".into()));
    }
    let n = xs.len();
    if n < 2 {
        return Err(Error::InvalidParameter("a line fit needs at least two points".into()));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("fit inputs must be finite".into()));
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter("fit abscissae are all equal".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| y - (slope * x + intercept)).collect();
    let slope_std_error = if n > 2 {
        let rss: f64 = residuals.iter().map(|r| r * r).sum();
        (rss / (nf - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(Line {
        slope,
        intercept,
        slope_std_error,
        residuals,
    })
}

/// `y = prefactor * x^exponent`, fitted as a line in log-log space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerLaw {
    pub exponent: f64,
    pub prefactor: f64,
    pub line: Line,
}

pub fn power_law(xs: &[f64], ys: &[f64]) -> Result<PowerLaw> {
    if xs.iter().chain(ys).any(|&v| v <= 0.0) {
        return Err(Error::InvalidParameter("power-law fit needs positive data".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let line = ols(&lx, &ly)?;
    Ok(PowerLaw {
        exponent: line.slope,
        prefactor: line.intercept.exp(),
        line,
    })
}

/// Median of a non-empty sample.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}
