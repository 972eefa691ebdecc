//! Workload-level aggregation with optional IQR outlier removal.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::trend::{decode_points, fit_decoding_trend, fit_points, DecodingTrend, TrendOptions};
use super::{energy_per_decode_token, energy_per_token, MetricsError};
use crate::alignment::{split_phases, PhaseBreakdown, TokenEnergy};
use crate::trace::{TraceManifest, Workload};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum OutlierRule {
    #[default]
    #[serde(rename = "none")]
    None,
    /// Drop traces whose total energy lies outside `[Q1 − 1.5·IQR, Q3 + 1.5·IQR]`.
    #[serde(rename = "iqr1.5")]
    Iqr1_5,
}

/// Everything aggregation needs from one profiled trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceMetrics {
    pub trace_id: String,
    pub model_name: String,
    pub workload: Workload,
    pub breakdown: PhaseBreakdown,
    pub trend: Option<DecodingTrend>,
    pub output_tokens: usize,
    /// `(ordinal, energy)` decode points retained for pooled fits.
    pub decode_points: Vec<(f64, f64)>,
}

impl TraceMetrics {
    pub fn from_energies(
        manifest: &TraceManifest,
        energies: &[TokenEnergy],
        opts: TrendOptions,
    ) -> Result<Self, crate::alignment::PhaseError> {
        let breakdown = split_phases(energies)?;
        Ok(Self {
            trace_id: manifest.trace_id.clone(),
            model_name: manifest.model_name.clone(),
            workload: manifest.workload.clone(),
            breakdown,
            trend: fit_decoding_trend(energies, opts).ok(),
            output_tokens: energies.len(),
            decode_points: decode_points(energies, opts),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
            (ss / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(Self { mean, std })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSummary {
    pub model_name: String,
    pub workload: Workload,
    pub n_traces: usize,
    pub n_outliers_removed: usize,
    pub removed_trace_ids: Vec<String>,
    pub total_j: MeanStd,
    pub energy_per_token_j: MeanStd,
    /// Over traces with at least one decode token.
    pub energy_per_decode_token_j: Option<MeanStd>,
    pub output_tokens: MeanStd,
    pub prefill_fraction_mean: f64,
    /// Mean of per-trace trend intercepts.
    pub mean_trace_intercept_j: Option<f64>,
    /// One fit over every retained decode point.
    pub pooled_trend: Option<DecodingTrend>,
}

/// Type-7 (linear interpolation between order statistics) quantile of
/// already sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Lower and upper 1.5·IQR fences.
pub fn iqr_fences(values: &[f64]) -> (f64, f64) {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile(&sorted, 0.25);
    let q3 = quantile(&sorted, 0.75);
    let iqr = q3 - q1;
    (q1 - 1.5 * iqr, q3 + 1.5 * iqr)
}

/// Aggregates one (model, workload) group. Model and workload labels are
/// taken from the first trace after sorting by id.
pub fn aggregate_workload(
    per_trace: &[TraceMetrics],
    rule: OutlierRule,
) -> Result<WorkloadSummary, MetricsError> {
    if per_trace.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut sorted: Vec<&TraceMetrics> = per_trace.iter().collect();
    sorted.sort_by(|a, b| a.trace_id.cmp(&b.trace_id));

    let (kept, removed): (Vec<&TraceMetrics>, Vec<&TraceMetrics>) = match rule {
        OutlierRule::None => (sorted.clone(), Vec::new()),
        OutlierRule::Iqr1_5 => {
            let totals: Vec<f64> = sorted.iter().map(|t| t.breakdown.total_j).collect();
            let (lo, hi) = iqr_fences(&totals);
            sorted
                .iter()
                .partition(|t| t.breakdown.total_j >= lo && t.breakdown.total_j <= hi)
        }
    };
    if kept.is_empty() {
        return Err(MetricsError::AllTracesRemoved(removed.len()));
    }

    let collect = |f: &dyn Fn(&TraceMetrics) -> f64| kept.iter().map(|t| f(t)).collect::<Vec<_>>();
    let totals = collect(&|t| t.breakdown.total_j);
    let per_token: Vec<f64> = kept
        .iter()
        .map(|t| energy_per_token(t.breakdown.total_j, t.output_tokens))
        .collect::<Result<_, _>>()?;
    let per_decode: Vec<f64> = kept
        .iter()
        .filter_map(|t| energy_per_decode_token(&t.breakdown).ok())
        .collect();
    let outputs = collect(&|t| t.output_tokens as f64);
    let fractions = collect(&|t| t.breakdown.prefill_fraction);
    let intercepts: Vec<f64> = kept
        .iter()
        .filter_map(|t| t.trend.map(|tr| tr.intercept_j))
        .collect();

    let pooled_points: Vec<(f64, f64)> = kept
        .iter()
        .flat_map(|t| t.decode_points.iter().copied())
        .collect();
    let last_ordinal = kept
        .iter()
        .map(|t| t.breakdown.decode_token_count as u32)
        .max()
        .unwrap_or(0);

    let first = kept[0];
    Ok(WorkloadSummary {
        model_name: first.model_name.clone(),
        workload: first.workload.clone(),
        n_traces: kept.len(),
        n_outliers_removed: removed.len(),
        removed_trace_ids: removed.iter().map(|t| t.trace_id.clone()).collect(),
        total_j: MeanStd::of(&totals).expect("kept is nonempty"),
        energy_per_token_j: MeanStd::of(&per_token).expect("kept is nonempty"),
        energy_per_decode_token_j: MeanStd::of(&per_decode),
        output_tokens: MeanStd::of(&outputs).expect("kept is nonempty"),
        prefill_fraction_mean: MeanStd::of(&fractions).expect("kept is nonempty").mean,
        mean_trace_intercept_j: MeanStd::of(&intercepts).map(|m| m.mean),
        pooled_trend: fit_points(&pooled_points, last_ordinal).ok(),
    })
}

/// Groups traces by (model, workload) and aggregates each group, in key order.
pub fn aggregate_groups(
    per_trace: &[TraceMetrics],
    rule: OutlierRule,
) -> Vec<((String, Workload), Result<WorkloadSummary, MetricsError>)> {
    let mut groups: BTreeMap<(String, Workload), Vec<TraceMetrics>> = BTreeMap::new();
    for t in per_trace {
        groups
            .entry((t.model_name.clone(), t.workload.clone()))
            .or_default()
            .push(t.clone());
    }
    groups
        .into_iter()
        .map(|(key, traces)| {
            let summary = aggregate_workload(&traces, rule);
            (key, summary)
        })
        .collect()
}
