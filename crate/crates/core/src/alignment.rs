//! Per-token energy assignment and the prefill/decode split.
//!
//! Token `n` owns the half-open interval `(t[n-1], t[n]]`, with `t[0]` the
//! trace's generation start. A power sample stamped exactly on a token's end
//! time belongs to that token, so every sample inside the generation span is
//! counted once.

use serde::{Deserialize, Serialize};

use crate::trace::{InferenceTrace, PowerSample, TraceError};

/// How power samples inside a token interval become joules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnergyMode {
    /// Mean of the samples in the interval times its duration.
    #[default]
    SampleMean,
    /// Integral of the piecewise-linear power curve over the interval.
    Trapezoid,
}

impl EnergyMode {
    pub fn label(self) -> &'static str {
        match self {
            EnergyMode::SampleMean => "sample-mean",
            EnergyMode::Trapezoid => "trapezoid",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenEnergy {
    pub index: u32,
    pub start_t: f64,
    pub end_t: f64,
    pub duration: f64,
    pub energy_j: f64,
    pub sample_count: usize,
    /// Set when no sample fell inside the interval and interpolated power
    /// at the interval midpoint was used instead.
    pub estimated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseBreakdown {
    /// Energy of the first generated token.
    pub prefill_j: f64,
    /// Energy of every subsequent token.
    pub decode_j: f64,
    pub total_j: f64,
    pub prefill_fraction: f64,
    pub decode_token_count: usize,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum PhaseError {
    #[error("no token energies to split")]
    EmptyInput,
    #[error("token energy at position {position} has index {found}, expected {expected}")]
    NonContiguous {
        position: usize,
        expected: u32,
        found: u32,
    },
}

/// Linear interpolation of power at `lo.t + offset`, where `offset` is
/// measured from `lo` so only timestamp differences enter the arithmetic.
fn lerp(lo: &PowerSample, hi: &PowerSample, offset: f64) -> f64 {
    let span = hi.t - lo.t;
    if span <= 0.0 {
        return lo.p;
    }
    lo.p + (hi.p - lo.p) * (offset / span)
}

/// Power at time `a + offset`. `idx` is the first sample strictly after `a`;
/// the caller guarantees samples exist on both sides of the query point.
fn power_at(samples: &[PowerSample], idx: usize, a: f64, offset: f64) -> f64 {
    let x = a + offset;
    // Advance to the bracketing pair around x.
    let mut hi = idx;
    while hi < samples.len() && samples[hi].t < x {
        hi += 1;
    }
    let hi = hi.min(samples.len() - 1);
    let lo = hi.saturating_sub(1);
    if samples[hi].t == x || hi == lo {
        return samples[hi].p;
    }
    let (lo_s, hi_s) = (&samples[lo], &samples[hi]);
    lerp(lo_s, hi_s, (a - lo_s.t) + offset)
}

/// Integral of the interpolated power curve over `[a, b]`, where
/// `samples[begin..end]` are the samples inside `(a, b]`.
fn trapezoid(samples: &[PowerSample], begin: usize, end: usize, a: f64, b: f64) -> f64 {
    let p_a = power_at(samples, begin, a, 0.0);
    let inside = &samples[begin..end];
    let mut energy = 0.0;
    let (mut prev_t, mut prev_p) = (a, p_a);
    for s in inside {
        energy += 0.5 * (prev_p + s.p) * (s.t - prev_t);
        prev_t = s.t;
        prev_p = s.p;
    }
    if prev_t < b {
        let p_b = power_at(samples, end, a, b - a);
        energy += 0.5 * (prev_p + p_b) * (b - prev_t);
    }
    energy
}

/// Assigns energy to every token of a validated trace.
pub fn assign_token_energies(
    trace: &InferenceTrace,
    mode: EnergyMode,
) -> Result<Vec<TokenEnergy>, TraceError> {
    trace.validate()?;
    let samples = &trace.samples;
    let mut start = trace.gen_start_t();
    // Samples at or before generation start are idle/loading time.
    let mut cursor = samples.partition_point(|s| s.t <= start);
    let mut out = Vec::with_capacity(trace.tokens.len());

    for tok in &trace.tokens {
        let end = tok.t;
        let duration = end - start;
        let begin = cursor;
        while cursor < samples.len() && samples[cursor].t <= end {
            cursor += 1;
        }
        let inside = &samples[begin..cursor];

        let (energy_j, estimated) = if inside.is_empty() {
            (
                power_at(samples, begin, start, 0.5 * duration) * duration,
                true,
            )
        } else {
            let e = match mode {
                EnergyMode::SampleMean => {
                    let mean = inside.iter().map(|s| s.p).sum::<f64>() / inside.len() as f64;
                    mean * duration
                }
                EnergyMode::Trapezoid => trapezoid(samples, begin, cursor, start, end),
            };
            (e, false)
        };

        out.push(TokenEnergy {
            index: tok.index,
            start_t: start,
            end_t: end,
            duration,
            energy_j,
            sample_count: inside.len(),
            estimated,
        });
        start = end;
    }
    Ok(out)
}

/// First token is prefill; everything after it is decoding.
pub fn split_phases(energies: &[TokenEnergy]) -> Result<PhaseBreakdown, PhaseError> {
    let first = energies.first().ok_or(PhaseError::EmptyInput)?;
    for (pos, e) in energies.iter().enumerate() {
        let expected = pos as u32 + 1;
        if e.index != expected {
            return Err(PhaseError::NonContiguous {
                position: pos,
                expected,
                found: e.index,
            });
        }
    }
    let prefill_j = first.energy_j;
    let decode_j: f64 = energies[1..].iter().map(|e| e.energy_j).sum();
    let total_j = prefill_j + decode_j;
    let prefill_fraction = if total_j > 0.0 {
        prefill_j / total_j
    } else {
        0.0
    };
    Ok(PhaseBreakdown {
        prefill_j,
        decode_j,
        total_j,
        prefill_fraction,
        decode_token_count: energies.len() - 1,
    })
}
