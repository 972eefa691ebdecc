use serde::Serialize;

use super::{InferenceTrace, Stream, TraceError, FORMAT_VERSION};

pub(super) fn check_trace(trace: &InferenceTrace) -> Result<(), TraceError> {
    match collect_violations(trace, true).into_iter().next() {
        Some(err) => Err(err),
        None => Ok(()),
    }
}

/// Walks every invariant; with `first_only` it stops at the first hit.
fn collect_violations(trace: &InferenceTrace, first_only: bool) -> Vec<TraceError> {
    let mut out = Vec::new();
    macro_rules! push {
        ($e:expr) => {{
            out.push($e);
            if first_only {
                return out;
            }
        }};
    }

    let m = &trace.manifest;
    if m.format_version != FORMAT_VERSION {
        push!(TraceError::InvalidManifest(format!(
            "unsupported format_version {}",
            m.format_version
        )));
    }
    if m.input_token_count < 1 {
        push!(TraceError::InvalidManifest(
            "input_token_count must be >= 1".into()
        ));
    }
    if m.max_new_tokens < 1 {
        push!(TraceError::InvalidManifest(
            "max_new_tokens must be >= 1".into()
        ));
    }
    if !m.gen_start_t.is_finite() {
        push!(TraceError::InvalidManifest(
            "gen_start_t must be finite".into()
        ));
    }
    if m.clock.trim().is_empty() {
        push!(TraceError::InvalidManifest(
            "clock must name a monotonic clock".into()
        ));
    }

    if trace.tokens.is_empty() {
        push!(TraceError::EmptyTokenStream);
    }

    let mut prev: Option<f64> = None;
    for (pos, tok) in trace.tokens.iter().enumerate() {
        let expected = pos as u32 + 1;
        if tok.index != expected {
            push!(TraceError::NonContiguousIndex {
                position: pos,
                expected,
                found: tok.index,
            });
        }
        if tok.eos && pos + 1 != trace.tokens.len() {
            push!(TraceError::EosNotLast { position: pos });
        }
        if let Some(err) = check_step(Stream::Tokens, pos, prev, tok.t) {
            push!(err);
        }
        prev = Some(tok.t);
    }

    let mut prev: Option<f64> = None;
    for (pos, s) in trace.samples.iter().enumerate() {
        if !(s.p.is_finite() && s.p >= 0.0) {
            push!(TraceError::InvalidPower {
                position: pos,
                p: s.p,
            });
        }
        if let Some(err) = check_step(Stream::Power, pos, prev, s.t) {
            push!(err);
        }
        prev = Some(s.t);
    }

    if let Some(first) = trace.tokens.first() {
        if m.gen_start_t.is_finite() && first.t.is_finite() {
            if first.t == m.gen_start_t {
                push!(TraceError::DuplicateTimestamp {
                    stream: Stream::Tokens,
                    position: 0,
                    t: first.t,
                });
            } else if first.t < m.gen_start_t {
                push!(TraceError::NonMonotonicTimestamp {
                    stream: Stream::Tokens,
                    position: 0,
                    prev: m.gen_start_t,
                    t: first.t,
                });
            }
        }
    }

    if let Some(last_token_t) = trace.last_token_t() {
        let covered = match (trace.samples.first(), trace.samples.last()) {
            (Some(first), Some(last)) => first.t <= m.gen_start_t && last.t >= last_token_t,
            _ => false,
        };
        if !covered {
            push!(TraceError::CoverageError {
                first_sample_t: trace.samples.first().map_or(f64::NAN, |s| s.t),
                last_sample_t: trace.samples.last().map_or(f64::NAN, |s| s.t),
                gen_start_t: m.gen_start_t,
                last_token_t,
            });
        }
    }

    out
}

fn check_step(stream: Stream, position: usize, prev: Option<f64>, t: f64) -> Option<TraceError> {
    if !t.is_finite() {
        return Some(TraceError::NonFiniteTimestamp { stream, position });
    }
    match prev {
        Some(p) if t == p => Some(TraceError::DuplicateTimestamp {
            stream,
            position,
            t,
        }),
        Some(p) if t < p => Some(TraceError::NonMonotonicTimestamp {
            stream,
            position,
            prev: p,
            t,
        }),
        _ => None,
    }
}

/// Outcome for one trace in a workload validation pass.
#[derive(Debug, Clone, Serialize)]
pub struct TraceVerdict {
    pub trace_id: String,
    pub passed: bool,
    /// Violation kinds, e.g. `DuplicateTimestamp`.
    pub kinds: Vec<String>,
    pub reasons: Vec<String>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct WorkloadValidation {
    pub verdicts: Vec<TraceVerdict>,
}

impl WorkloadValidation {
    pub fn passed(&self) -> usize {
        self.verdicts.iter().filter(|v| v.passed).count()
    }

    pub fn failed(&self) -> usize {
        self.verdicts.len() - self.passed()
    }

    pub fn is_empty(&self) -> bool {
        self.verdicts.is_empty()
    }
}

/// Validates every trace and reports all violations per trace. Never fails.
pub fn validate_workload_set(traces: &[InferenceTrace]) -> WorkloadValidation {
    let verdicts = traces
        .iter()
        .map(|trace| {
            let violations = collect_violations(trace, false);
            TraceVerdict {
                trace_id: trace.manifest.trace_id.clone(),
                passed: violations.is_empty(),
                kinds: violations.iter().map(|e| e.kind().to_string()).collect(),
                reasons: violations.iter().map(|e| e.to_string()).collect(),
            }
        })
        .collect();
    WorkloadValidation { verdicts }
}
