//! Log–log regression and convergence-order estimation.

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("need at least {need} points, got {got}")]
    TooFewPoints { need: usize, got: usize },
    #[error("eps values must be positive and strictly decreasing")]
    NotDecreasing,
    #[error("value at eps = {0} is zero or non-finite")]
    BadValue(f64),
    #[error("degenerate abscissae")]
    Degenerate,
}

/// Ordinary least-squares line `y = intercept + slope·x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual.
    pub rms: f64,
}

pub fn least_squares(xs: &[f64], ys: &[f64]) -> Result<LineFit, FitError> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return Err(FitError::TooFewPoints { need: 2, got: n.min(ys.len()) });
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    if sxx <= 0.0 {
        return Err(FitError::Degenerate);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rms = (xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum::<f64>()
        / n as f64)
        .sqrt();
    Ok(LineFit { slope, intercept, rms })
}

/// Result of [`order_fit`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderFit {
    /// Fitted power of eps (plain mode), or the slope of `log|value|` against
    /// `log(eps² log eps⁻¹)` (log-corrected mode, ideally 1).
    pub exponent: f64,
    /// Multiplicative constant: `value ≈ constant·eps^exponent` (plain) or
    /// `value ≈ constant·eps²·log(1/eps)` (log-corrected). Carries the sign of
    /// the data.
    pub constant: f64,
    pub rms: f64,
    pub log_correction: bool,
    /// Set when the data changed sign; the fit then used `|value|`.
    pub sign_change: bool,
    pub points: usize,
}

/// Fit a power law `|value| ~ C·eps^α` by least squares in log–log space.
///
/// With `log_correction` the model is `value ≈ C·eps²·log(1/eps)` and the
/// constant is the geometric mean of `value / (eps² log eps⁻¹)`.
pub fn order_fit(series: &[(f64, f64)], log_correction: bool) -> Result<OrderFit, FitError> {
    if series.len() < 4 {
        return Err(FitError::TooFewPoints { need: 4, got: series.len() });
    }
    for w in series.windows(2) {
        if !(w[1].0 < w[0].0) {
            return Err(FitError::NotDecreasing);
        }
    }
    for &(e, v) in series {
        if !(e > 0.0) || (log_correction && e >= 1.0) {
            return Err(FitError::NotDecreasing);
        }
        if v == 0.0 || !v.is_finite() {
            return Err(FitError::BadValue(e));
        }
    }
    let positive = series.iter().filter(|(_, v)| *v > 0.0).count();
    let sign_change = positive != 0 && positive != series.len();
    let sign = if positive * 2 >= series.len() { 1.0 } else { -1.0 };
    let ys: Vec<f64> = series.iter().map(|(_, v)| v.abs().ln()).collect();
    if log_correction {
        let xs: Vec<f64> = series
            .iter()
            .map(|(e, _)| (e * e * (1.0 / e).ln()).ln())
            .collect();
        let line = least_squares(&xs, &ys)?;
        let mean = xs.iter().zip(&ys).map(|(x, y)| y - x).sum::<f64>() / xs.len() as f64;
        Ok(OrderFit {
            exponent: line.slope,
            constant: sign * mean.exp(),
            rms: line.rms,
            log_correction,
            sign_change,
            points: series.len(),
        })
    } else {
        let xs: Vec<f64> = series.iter().map(|(e, _)| e.ln()).collect();
        let line = least_squares(&xs, &ys)?;
        Ok(OrderFit {
            exponent: line.slope,
            constant: sign * line.intercept.exp(),
            rms: line.rms,
            log_correction,
            sign_change,
            points: series.len(),
        })
    }
}

/// Two-point Richardson extrapolation for an error `∝ h^order`, where
/// `fine` was computed with step `h/ratio` and `coarse` with `h`.
pub fn richardson(coarse: f64, fine: f64, ratio: f64, order: f64) -> f64 {
    let r = ratio.powf(order);
    (r * fine - coarse) / (r - 1.0)
}
