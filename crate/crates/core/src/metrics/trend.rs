//! Ordinary least squares over decode-token ordinals.

use serde::{Deserialize, Serialize};

use super::{percent_increase, MetricsError};
use crate::alignment::TokenEnergy;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub intercept: f64,
    pub slope: f64,
    pub r2: f64,
}

impl LinearFit {
    pub fn at(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }
}

/// Least-squares line through `(x, y)` points, computed on centered data.
pub fn ols(points: &[(f64, f64)]) -> Option<LinearFit> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in points {
        let dx = x - mean_x;
        let dy = y - mean_y;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let ss_res: f64 = points
        .iter()
        .map(|&(x, y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    let r2 = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    Some(LinearFit {
        intercept,
        slope,
        r2: r2.clamp(0.0, 1.0),
    })
}

/// Linear trend of per-token energy across the decoding phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodingTrend {
    /// Fitted energy at the first decode token (ordinal 1).
    pub intercept_j: f64,
    pub slope_j_per_token: f64,
    pub first_fit_j: f64,
    /// Fitted energy at the last decode ordinal.
    pub last_fit_j: f64,
    /// `None` when the first fitted value is not positive.
    pub growth_pct: Option<f64>,
    pub r2: f64,
    pub n_points: usize,
    pub last_ordinal: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TrendOptions {
    /// Include tokens whose energy was interpolated.
    pub include_estimated: bool,
}

/// `(ordinal, energy)` pairs for decode tokens; ordinal 1 is the second
/// generated token.
pub fn decode_points(energies: &[TokenEnergy], opts: TrendOptions) -> Vec<(f64, f64)> {
    energies
        .iter()
        .filter(|e| e.index >= 2)
        .filter(|e| opts.include_estimated || !e.estimated)
        .map(|e| (f64::from(e.index - 1), e.energy_j))
        .collect()
}

/// Fits a trend to decode points already extracted, evaluating the end of
/// the line at `last_ordinal`.
pub fn fit_points(points: &[(f64, f64)], last_ordinal: u32) -> Result<DecodingTrend, MetricsError> {
    let fit = ols(points).ok_or(MetricsError::InsufficientPoints {
        found: points.len(),
    })?;
    let first_fit_j = fit.at(1.0);
    let last_fit_j = fit.at(f64::from(last_ordinal));
    let growth_pct = percent_increase(first_fit_j, last_fit_j).ok();
    Ok(DecodingTrend {
        intercept_j: first_fit_j,
        slope_j_per_token: fit.slope,
        first_fit_j,
        last_fit_j,
        growth_pct,
        r2: fit.r2,
        n_points: points.len(),
        last_ordinal,
    })
}

pub fn fit_decoding_trend(
    energies: &[TokenEnergy],
    opts: TrendOptions,
) -> Result<DecodingTrend, MetricsError> {
    let points = decode_points(energies, opts);
    let last_ordinal = energies
        .iter()
        .map(|e| e.index)
        .max()
        .unwrap_or(1)
        .saturating_sub(1);
    fit_points(&points, last_ordinal)
}
