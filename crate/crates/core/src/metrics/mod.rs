//! Phase-level energy metrics, decoding trends, amplification, babbling
//! detection and workload aggregation.

mod aggregate;
mod trend;

use serde::{Deserialize, Serialize};

use crate::alignment::PhaseBreakdown;
use crate::trace::Workload;

pub use aggregate::{
    aggregate_groups, aggregate_workload, iqr_fences, quantile, MeanStd, OutlierRule, TraceMetrics,
    WorkloadSummary,
};
pub use trend::{
    decode_points, fit_decoding_trend, fit_points, ols, DecodingTrend, LinearFit, TrendOptions,
};

/// Default utilization at or above which a model counts as a babbler.
pub const DEFAULT_BABBLING_THRESHOLD: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("token count is zero")]
    ZeroTokens,
    #[error("output has no decode tokens")]
    NoDecodeTokens,
    #[error("trend fit needs at least 2 distinct decode points, found {found}")]
    InsufficientPoints { found: usize },
    #[error("intercept must be positive, got {0}")]
    NonPositiveIntercept(f64),
    #[error("baseline must be positive, got {0}")]
    NonPositiveBaseline(f64),
    #[error("babbling threshold must lie in (0, 1], got {0}")]
    InvalidThreshold(f64),
    #[error("no traces to aggregate")]
    EmptyInput,
    #[error("all {0} traces were removed as outliers")]
    AllTracesRemoved(usize),
}

/// Total energy divided by generated tokens, prefill included.
pub fn energy_per_token(total_j: f64, n_tokens: usize) -> Result<f64, MetricsError> {
    if n_tokens == 0 {
        return Err(MetricsError::ZeroTokens);
    }
    Ok(total_j / n_tokens as f64)
}

/// Decode energy divided by decode tokens, prefill excluded.
pub fn energy_per_decode_token(breakdown: &PhaseBreakdown) -> Result<f64, MetricsError> {
    if breakdown.decode_token_count == 0 {
        return Err(MetricsError::NoDecodeTokens);
    }
    Ok(breakdown.decode_j / breakdown.decode_token_count as f64)
}

/// `100 · (to − from) / from`.
pub fn percent_increase(from: f64, to: f64) -> Result<f64, MetricsError> {
    if from.is_nan() || from <= 0.0 {
        return Err(MetricsError::NonPositiveBaseline(from));
    }
    Ok(100.0 * (to - from) / from)
}

/// How much a longer input raises the fitted initial decoding cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmplificationReport {
    pub baseline_workload: Workload,
    pub long_input_workload: Workload,
    pub intercept_baseline_j: f64,
    pub intercept_long_j: f64,
    pub amplification_pct: f64,
}

pub fn amplification(
    baseline_workload: &Workload,
    baseline: &DecodingTrend,
    long_input_workload: &Workload,
    long_input: &DecodingTrend,
) -> Result<AmplificationReport, MetricsError> {
    for intercept in [baseline.intercept_j, long_input.intercept_j] {
        if intercept.is_nan() || intercept <= 0.0 {
            return Err(MetricsError::NonPositiveIntercept(intercept));
        }
    }
    Ok(AmplificationReport {
        baseline_workload: baseline_workload.clone(),
        long_input_workload: long_input_workload.clone(),
        intercept_baseline_j: baseline.intercept_j,
        intercept_long_j: long_input.intercept_j,
        amplification_pct: percent_increase(baseline.intercept_j, long_input.intercept_j)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BabblingReport {
    pub mean_budget_utilization: f64,
    pub is_babbler: bool,
    pub threshold: f64,
}

/// Flags a model whose mean output length sits near its token budget.
pub fn detect_babbling(
    mean_output_tokens: f64,
    max_new_tokens: u64,
    threshold: f64,
) -> Result<BabblingReport, MetricsError> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(MetricsError::InvalidThreshold(threshold));
    }
    if max_new_tokens == 0 {
        return Err(MetricsError::ZeroTokens);
    }
    let utilization = (mean_output_tokens / max_new_tokens as f64).clamp(0.0, 1.0);
    Ok(BabblingReport {
        mean_budget_utilization: utilization,
        is_babbler: utilization >= threshold,
        threshold,
    })
}
