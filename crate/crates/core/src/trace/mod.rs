//! Trace data model: power samples, token events, manifests and the
//! validated [`InferenceTrace`] that ties them together on one clock.

mod io;
mod validate;

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub use io::{
    parse_token_stream, parse_trace, read_manifest, read_power_stream, read_token_stream,
    write_power_stream, write_token_stream, write_trace,
};
pub use validate::{validate_workload_set, TraceVerdict, WorkloadValidation};

/// Current on-disk manifest version.
pub const FORMAT_VERSION: u32 = 1;

/// One instantaneous power reading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerSample {
    /// Seconds on the trace's monotonic clock.
    pub t: f64,
    /// Watts.
    pub p: f64,
}

/// One generated token, stamped at the end of its generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenEvent {
    /// 1-based ordinal.
    #[serde(rename = "i")]
    pub index: u32,
    pub t: f64,
    #[serde(default)]
    pub text: Option<String>,
    #[serde(default)]
    pub eos: bool,
}

impl TokenEvent {
    pub fn new(index: u32, t: f64, text: impl Into<Option<String>>) -> Self {
        Self {
            index,
            t,
            text: text.into(),
            eos: false,
        }
    }
}

/// Workload setting a trace was recorded under.
///
/// The five named settings serialize to short kebab-case labels; anything
/// else round-trips through [`Workload::Custom`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Workload {
    ZeroShot,
    TwoShot,
    ZeroShotCoT,
    CU,
    CULong,
    Custom(String),
}

impl Workload {
    pub fn label(&self) -> &str {
        match self {
            Workload::ZeroShot => "0-shot",
            Workload::TwoShot => "2-shot",
            Workload::ZeroShotCoT => "0-shot-cot",
            Workload::CU => "cu",
            Workload::CULong => "cu-long",
            Workload::Custom(s) => s,
        }
    }

    pub fn from_label(label: &str) -> Self {
        match label {
            "0-shot" => Workload::ZeroShot,
            "2-shot" => Workload::TwoShot,
            "0-shot-cot" => Workload::ZeroShotCoT,
            "cu" => Workload::CU,
            "cu-long" => Workload::CULong,
            other => Workload::Custom(other.to_string()),
        }
    }
}

impl fmt::Display for Workload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl Serialize for Workload {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.label())
    }
}

impl<'de> Deserialize<'de> for Workload {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(Workload::from_label(&s))
    }
}

/// Metadata document describing one inference run.
///
/// Stream paths are resolved relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceManifest {
    pub format_version: u32,
    pub trace_id: String,
    pub model_name: String,
    pub workload: Workload,
    /// Name of the single monotonic clock both streams were stamped with.
    pub clock: String,
    pub input_token_count: u64,
    /// Taken immediately after the prompt is handed to the model.
    pub gen_start_t: f64,
    pub max_new_tokens: u64,
    pub samples_path: PathBuf,
    pub tokens_path: PathBuf,
}

/// A manifest plus its two streams.
///
/// Fields are public so that traces can be assembled in memory; call
/// [`InferenceTrace::validate`] (or build through [`InferenceTrace::new`])
/// before relying on the invariants.
#[derive(Debug, Clone, PartialEq)]
pub struct InferenceTrace {
    pub manifest: TraceManifest,
    pub samples: Vec<PowerSample>,
    pub tokens: Vec<TokenEvent>,
}

impl InferenceTrace {
    pub fn new(
        manifest: TraceManifest,
        samples: Vec<PowerSample>,
        tokens: Vec<TokenEvent>,
    ) -> Result<Self, TraceError> {
        let trace = Self {
            manifest,
            samples,
            tokens,
        };
        trace.validate()?;
        Ok(trace)
    }

    pub fn trace_id(&self) -> &str {
        &self.manifest.trace_id
    }

    pub fn gen_start_t(&self) -> f64 {
        self.manifest.gen_start_t
    }

    pub fn last_token_t(&self) -> Option<f64> {
        self.tokens.last().map(|t| t.t)
    }

    /// Checks every trace-level invariant, returning the first violation.
    pub fn validate(&self) -> Result<(), TraceError> {
        validate::check_trace(self)
    }
}

/// Which stream a diagnostic refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Power,
    Tokens,
}

impl fmt::Display for Stream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stream::Power => f.write_str("power"),
            Stream::Tokens => f.write_str("tokens"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed record: {reason}")]
    MalformedRecord {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("invalid manifest: {0}")]
    InvalidManifest(String),
    #[error("{stream} stream: timestamp {t} at position {position} is not after {prev}")]
    NonMonotonicTimestamp {
        stream: Stream,
        position: usize,
        prev: f64,
        t: f64,
    },
    #[error("{stream} stream: duplicate timestamp {t} at position {position}")]
    DuplicateTimestamp {
        stream: Stream,
        position: usize,
        t: f64,
    },
    #[error("power samples [{first_sample_t}, {last_sample_t}] do not cover generation span [{gen_start_t}, {last_token_t}]")]
    CoverageError {
        first_sample_t: f64,
        last_sample_t: f64,
        gen_start_t: f64,
        last_token_t: f64,
    },
    #[error("token stream is empty")]
    EmptyTokenStream,
    #[error("token index {found} at position {position}, expected {expected}")]
    NonContiguousIndex {
        position: usize,
        expected: u32,
        found: u32,
    },
    #[error("end-of-sequence token at position {position} is not the last token")]
    EosNotLast { position: usize },
    #[error("power sample at position {position} has invalid power {p}")]
    InvalidPower { position: usize, p: f64 },
    #[error("{stream} stream: non-finite timestamp at position {position}")]
    NonFiniteTimestamp { stream: Stream, position: usize },
}

impl TraceError {
    /// Short stable name of the violation kind, used in validation reports.
    pub fn kind(&self) -> &'static str {
        match self {
            TraceError::Io { .. } => "Io",
            TraceError::MalformedRecord { .. } => "MalformedRecord",
            TraceError::InvalidManifest(_) => "InvalidManifest",
            TraceError::NonMonotonicTimestamp { .. } => "NonMonotonicTimestamp",
            TraceError::DuplicateTimestamp { .. } => "DuplicateTimestamp",
            TraceError::CoverageError { .. } => "CoverageError",
            TraceError::EmptyTokenStream => "EmptyTokenStream",
            TraceError::NonContiguousIndex { .. } => "NonContiguousIndex",
            TraceError::EosNotLast { .. } => "EosNotLast",
            TraceError::InvalidPower { .. } => "InvalidPower",
            TraceError::NonFiniteTimestamp { .. } => "NonFiniteTimestamp",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn workload_labels_round_trip() {
        for w in [
            Workload::ZeroShot,
            Workload::TwoShot,
            Workload::ZeroShotCoT,
            Workload::CU,
            Workload::CULong,
            Workload::Custom("repo-qa".into()),
        ] {
            let json = serde_json::to_string(&w).unwrap();
            let back: Workload = serde_json::from_str(&json).unwrap();
            assert_eq!(back, w);
        }
        assert_eq!(
            serde_json::to_string(&Workload::CULong).unwrap(),
            "\"cu-long\""
        );
    }

    #[test]
    fn token_event_wire_names() {
        let ev: TokenEvent =
            serde_json::from_str(r#"{"i":3,"t":1.5,"text":null,"eos":true,"logprob":-0.2}"#)
                .unwrap();
        assert_eq!(ev.index, 3);
        assert!(ev.eos);
        assert_eq!(ev.text, None);
        let out = serde_json::to_string(&ev).unwrap();
        assert_eq!(out, r#"{"i":3,"t":1.5,"text":null,"eos":true}"#);
    }
}
