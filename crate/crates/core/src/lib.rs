//! Per-token energy accounting for LLM inference.
//!
//! A trace pairs a timestamped GPU power stream with the end-of-generation
//! timestamps of every token. [`alignment`] turns that into per-token joules
//! and a prefill/decode split, [`metrics`] derives phase-level figures and
//! decoding trends, [`simulator`] produces traces with known ground truth,
//! and [`suppression`] halts code generation once the output passes its tests.

pub mod alignment;
pub mod fsutil;
pub mod metrics;
pub mod report;
pub mod simulator;
pub mod suppression;
pub mod trace;

pub use alignment::{assign_token_energies, split_phases, EnergyMode, PhaseBreakdown, TokenEnergy};
pub use metrics::{DecodingTrend, MetricsError, OutlierRule, TrendOptions, WorkloadSummary};
pub use suppression::{run_suppressed_generation, SuppressionConfig, SuppressionSession};
pub use trace::{
    parse_trace, validate_workload_set, InferenceTrace, PowerSample, TokenEvent, TraceError,
    TraceManifest, Workload,
};
