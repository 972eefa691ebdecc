//! On-disk report formats: per-trace profiles, workload summaries and
//! suppression outcome tables. JSON is primary; CSV files mirror it for
//! plotting and spreadsheets.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::alignment::{
    assign_token_energies, split_phases, EnergyMode, PhaseBreakdown, TokenEnergy,
};
use crate::fsutil::atomic_write;
use crate::metrics::{
    detect_babbling, energy_per_decode_token, energy_per_token, fit_decoding_trend, BabblingReport,
    DecodingTrend, MeanStd, TraceMetrics, TrendOptions, WorkloadSummary,
    DEFAULT_BABBLING_THRESHOLD,
};
use crate::suppression::{CorpusEvaluation, SuppressionConfig};
use crate::trace::{InferenceTrace, Workload};

pub const REPORT_FORMAT_VERSION: u32 = 1;
pub const REPORT_SUFFIX: &str = ".report.json";
const SERIES_SUFFIX: &str = ".series.csv";

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error(transparent)]
    Trace(#[from] crate::trace::TraceError),
    #[error(transparent)]
    Phase(#[from] crate::alignment::PhaseError),
    #[error(transparent)]
    Metrics(#[from] crate::metrics::MetricsError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Malformed { path: String, reason: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn malformed(path: &Path, reason: impl ToString) -> ReportError {
    ReportError::Malformed {
        path: path.display().to_string(),
        reason: reason.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileReport {
    pub format_version: u32,
    pub trace_id: String,
    pub model_name: String,
    pub workload: Workload,
    pub input_token_count: u64,
    pub max_new_tokens: u64,
    pub mode: EnergyMode,
    pub include_estimated: bool,
    pub output_tokens: usize,
    pub estimated_tokens: usize,
    pub breakdown: PhaseBreakdown,
    pub energy_per_token_j: f64,
    pub energy_per_decode_token_j: Option<f64>,
    pub trend: Option<DecodingTrend>,
    /// Per-token series, relative to the report's directory.
    pub series_csv: String,
}

/// A profile plus the per-token series it was computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    pub report: ProfileReport,
    pub energies: Vec<TokenEnergy>,
}

pub fn profile_trace(
    trace: &InferenceTrace,
    mode: EnergyMode,
    opts: TrendOptions,
) -> Result<Profile, ReportError> {
    let energies = assign_token_energies(trace, mode)?;
    let breakdown = split_phases(&energies)?;
    let m = &trace.manifest;
    let report = ProfileReport {
        format_version: REPORT_FORMAT_VERSION,
        trace_id: m.trace_id.clone(),
        model_name: m.model_name.clone(),
        workload: m.workload.clone(),
        input_token_count: m.input_token_count,
        max_new_tokens: m.max_new_tokens,
        mode,
        include_estimated: opts.include_estimated,
        output_tokens: energies.len(),
        estimated_tokens: energies.iter().filter(|e| e.estimated).count(),
        breakdown,
        energy_per_token_j: energy_per_token(breakdown.total_j, energies.len())?,
        energy_per_decode_token_j: energy_per_decode_token(&breakdown).ok(),
        trend: fit_decoding_trend(&energies, opts).ok(),
        series_csv: format!("{}{SERIES_SUFFIX}", m.trace_id),
    };
    Ok(Profile { report, energies })
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

pub const SERIES_HEADER: [&str; 6] = [
    "index",
    "start_t",
    "end_t",
    "duration_s",
    "energy_j",
    "estimated",
];

pub fn series_csv(energies: &[TokenEnergy]) -> Vec<u8> {
    csv_bytes(
        &SERIES_HEADER,
        energies.iter().map(|e| {
            vec![
                e.index.to_string(),
                e.start_t.to_string(),
                e.end_t.to_string(),
                e.duration.to_string(),
                e.energy_j.to_string(),
                e.estimated.to_string(),
            ]
        }),
    )
}

fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("report types serialize");
    out.push(b'\n');
    out
}

/// Writes `<trace_id>.report.json` and its series CSV into `dir`.
pub fn write_profile(profile: &Profile, dir: &Path) -> Result<PathBuf, ReportError> {
    let json_path = dir.join(format!("{}{REPORT_SUFFIX}", profile.report.trace_id));
    let csv_path = dir.join(&profile.report.series_csv);
    atomic_write(&csv_path, &series_csv(&profile.energies)).map_err(io_err(&csv_path))?;
    atomic_write(&json_path, &json_bytes(&profile.report)).map_err(io_err(&json_path))?;
    Ok(json_path)
}

/// Reads the series CSV back as `(index, energy_j, estimated)` rows.
fn read_series(path: &Path) -> Result<Vec<(u32, f64, bool)>, ReportError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| malformed(path, e))?;
    let headers = rdr.headers().map_err(|e| malformed(path, e))?.clone();
    if headers.iter().ne(SERIES_HEADER) {
        return Err(malformed(path, "unexpected series header"));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| malformed(path, e))?;
        let index = rec[0]
            .parse()
            .map_err(|e| malformed(path, format!("index: {e}")))?;
        let energy = rec[4]
            .parse()
            .map_err(|e| malformed(path, format!("energy_j: {e}")))?;
        let estimated = rec[5]
            .parse()
            .map_err(|e| malformed(path, format!("estimated: {e}")))?;
        rows.push((index, energy, estimated));
    }
    Ok(rows)
}

/// A report read back from disk, ready for aggregation.
#[derive(Debug, Clone)]
pub struct LoadedReport {
    pub report: ProfileReport,
    pub metrics: TraceMetrics,
}

pub fn load_report(path: &Path) -> Result<LoadedReport, ReportError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let report: ProfileReport = serde_json::from_str(&text).map_err(|e| malformed(path, e))?;
    if report.format_version != REPORT_FORMAT_VERSION {
        return Err(malformed(
            path,
            format!("unsupported format_version {}", report.format_version),
        ));
    }
    let series_path = path
        .parent()
        .unwrap_or(Path::new("."))
        .join(&report.series_csv);
    let decode_points = read_series(&series_path)?
        .into_iter()
        .filter(|&(i, _, est)| i >= 2 && (report.include_estimated || !est))
        .map(|(i, e, _)| (f64::from(i - 1), e))
        .collect();
    let metrics = TraceMetrics {
        trace_id: report.trace_id.clone(),
        model_name: report.model_name.clone(),
        workload: report.workload.clone(),
        breakdown: report.breakdown,
        trend: report.trend,
        output_tokens: report.output_tokens,
        decode_points,
    };
    Ok(LoadedReport { report, metrics })
}

/// Report files in `dir`, sorted by name.
pub fn find_reports(dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.ends_with(REPORT_SUFFIX))
        })
        .collect();
    paths.sort();
    Ok(paths)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    #[serde(flatten)]
    pub summary: WorkloadSummary,
    pub max_new_tokens: u64,
    pub babbling: Option<BabblingReport>,
}

impl GroupSummary {
    pub fn new(summary: WorkloadSummary, max_new_tokens: u64) -> Self {
        let babbling = detect_babbling(
            summary.output_tokens.mean,
            max_new_tokens,
            DEFAULT_BABBLING_THRESHOLD,
        )
        .ok();
        Self {
            summary,
            max_new_tokens,
            babbling,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateDocument {
    pub format_version: u32,
    pub outliers: crate::metrics::OutlierRule,
    pub groups: Vec<GroupSummary>,
}

fn pm(m: &MeanStd) -> String {
    format!("{:.4} ± {:.4}", m.mean, m.std)
}

fn opt<T>(v: Option<T>, f: impl FnOnce(T) -> String) -> String {
    v.map(f).unwrap_or_default()
}

pub const SUMMARY_HEADER: [&str; 15] = [
    "model",
    "workload",
    "n_traces",
    "n_outliers_removed",
    "total_j",
    "energy_per_token_j",
    "energy_per_decode_token_j",
    "output_tokens",
    "prefill_fraction",
    "intercept_j",
    "slope_j_per_token",
    "growth_pct",
    "r2",
    "mean_trace_intercept_j",
    "babbler",
];

pub fn summary_csv(groups: &[GroupSummary]) -> Vec<u8> {
    csv_bytes(
        &SUMMARY_HEADER,
        groups.iter().map(|g| {
            let s = &g.summary;
            let tr = s.pooled_trend;
            vec![
                s.model_name.clone(),
                s.workload.label().to_string(),
                s.n_traces.to_string(),
                s.n_outliers_removed.to_string(),
                pm(&s.total_j),
                pm(&s.energy_per_token_j),
                opt(s.energy_per_decode_token_j.as_ref(), pm),
                pm(&s.output_tokens),
                format!("{:.4}", s.prefill_fraction_mean),
                opt(tr, |t| format!("{:.4}", t.intercept_j)),
                opt(tr, |t| format!("{:.6e}", t.slope_j_per_token)),
                opt(tr.and_then(|t| t.growth_pct), |g| format!("{g:.2}")),
                opt(tr, |t| format!("{:.4}", t.r2)),
                opt(s.mean_trace_intercept_j, |v| format!("{v:.4}")),
                opt(g.babbling, |b| b.is_babbler.to_string()),
            ]
        }),
    )
}

pub fn write_aggregate(doc: &AggregateDocument, dir: &Path) -> Result<(), ReportError> {
    let json = dir.join("summary.json");
    let csv = dir.join("summary.csv");
    atomic_write(&json, &json_bytes(doc)).map_err(io_err(&json))?;
    atomic_write(&csv, &summary_csv(&doc.groups)).map_err(io_err(&csv))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuppressionRunConfig {
    pub max_new_tokens: u64,
    pub cadence: crate::suppression::Cadence,
    pub validator_timeout_s: f64,
    pub code_extraction: crate::suppression::CodeExtraction,
}

impl From<&SuppressionConfig> for SuppressionRunConfig {
    fn from(c: &SuppressionConfig) -> Self {
        Self {
            max_new_tokens: c.max_new_tokens,
            cadence: c.cadence,
            validator_timeout_s: c.validator_timeout.as_secs_f64(),
            code_extraction: c.code_extraction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuppressionDocument {
    pub format_version: u32,
    pub config: SuppressionRunConfig,
    #[serde(flatten)]
    pub evaluation: CorpusEvaluation,
}

pub const SUPPRESS_HEADER: [&str; 12] = [
    "task_id",
    "baseline_tokens",
    "suppressed_tokens",
    "reduction_pct",
    "halt_reason",
    "baseline_passed",
    "suppressed_passed",
    "soundness_recheck",
    "checks_run",
    "syntax_checks",
    "test_runs",
    "error",
];

pub fn suppress_csv(eval: &CorpusEvaluation) -> Vec<u8> {
    csv_bytes(
        &SUPPRESS_HEADER,
        eval.tasks.iter().map(|t| {
            let reduction = (t.baseline_tokens > 0)
                .then(|| 100.0 * (1.0 - t.suppressed_tokens as f64 / t.baseline_tokens as f64));
            vec![
                t.task_id.clone(),
                t.baseline_tokens.to_string(),
                t.suppressed_tokens.to_string(),
                opt(reduction, |r| format!("{r:.2}")),
                opt(t.halt_reason, |h| h.label().to_string()),
                t.baseline_passed.to_string(),
                t.suppressed_passed.to_string(),
                opt(t.soundness_recheck, |s| s.to_string()),
                t.checks_run.to_string(),
                t.syntax_checks.to_string(),
                t.test_runs.to_string(),
                t.error.clone().unwrap_or_default(),
            ]
        }),
    )
}

#[derive(Debug, Clone, Serialize)]
struct TaskTiming<'a> {
    task_id: &'a str,
    check_wall_time_s: f64,
}

/// Writes `suppress.json`, `suppress.csv` and, separately because it varies
/// between runs, `suppress.timing.json`.
pub fn write_suppression(doc: &SuppressionDocument, dir: &Path) -> Result<(), ReportError> {
    let json = dir.join("suppress.json");
    let csv = dir.join("suppress.csv");
    let timing = dir.join("suppress.timing.json");
    let tasks: Vec<TaskTiming> = doc
        .evaluation
        .tasks
        .iter()
        .map(|t| TaskTiming {
            task_id: &t.task_id,
            check_wall_time_s: t.check_wall_time.as_secs_f64(),
        })
        .collect();
    let timing_doc = serde_json::json!({
        "total_check_wall_time_s": doc.evaluation.total_check_wall_time().as_secs_f64(),
        "tasks": tasks,
    });
    atomic_write(&json, &json_bytes(doc)).map_err(io_err(&json))?;
    atomic_write(&csv, &suppress_csv(&doc.evaluation)).map_err(io_err(&csv))?;
    atomic_write(&timing, &json_bytes(&timing_doc)).map_err(io_err(&timing))?;
    Ok(())
}
