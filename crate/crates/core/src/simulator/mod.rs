//! Synthetic traces with known ground truth.
//!
//! Per-token target energies follow a linear model in input length and
//! decode ordinal. Power samples sit on a uniform grid, and each token
//! interval is given the constant power level that makes
//! `mean(samples) × duration` reproduce its target, so sample-mean
//! alignment recovers the targets whenever every interval holds a sample.

mod babbler;
mod presets;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::trace::{
    InferenceTrace, PowerSample, TokenEvent, TraceManifest, Workload, FORMAT_VERSION,
};

pub use babbler::{babble_filler, generate_babbler_stream, tokenize_code};
pub use presets::{builtin_preset, builtin_presets, Preset, TokenCount};

/// Power drawn outside generation (before start and after the last token).
pub const IDLE_POWER_W: f64 = 60.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticModelConfig {
    pub prefill_j_per_input_token: f64,
    /// Decoding intercept at zero input length.
    pub decode_base_j: f64,
    /// Input-length effect on the decoding intercept.
    pub input_amplification_j_per_input_token: f64,
    pub decode_slope_j_per_token: f64,
    pub noise_sigma_j: f64,
    pub token_duration_s: f64,
    /// Duration of the first token; defaults to `token_duration_s`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prefill_duration_s: Option<f64>,
    pub sample_rate_hz: f64,
    #[serde(default)]
    pub babble_tail_tokens: u64,
    pub rng_seed: u64,
}

impl SyntheticModelConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let nonneg = [
            ("prefill_j_per_input_token", self.prefill_j_per_input_token),
            ("decode_base_j", self.decode_base_j),
            (
                "input_amplification_j_per_input_token",
                self.input_amplification_j_per_input_token,
            ),
            ("decode_slope_j_per_token", self.decode_slope_j_per_token),
            ("noise_sigma_j", self.noise_sigma_j),
        ];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(SimError::InvalidConfig(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        let positive = [
            ("token_duration_s", self.token_duration_s),
            ("prefill_duration_s", self.prefill_duration()),
            ("sample_rate_hz", self.sample_rate_hz),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(SimError::InvalidConfig(format!(
                    "{name} must be finite and > 0, got {v}"
                )));
            }
        }
        Ok(())
    }

    pub fn prefill_duration(&self) -> f64 {
        self.prefill_duration_s.unwrap_or(self.token_duration_s)
    }

    /// Decoding intercept for a given input length.
    pub fn decode_intercept(&self, input_tokens: u64) -> f64 {
        self.decode_base_j + self.input_amplification_j_per_input_token * input_tokens as f64
    }
}

/// Manifest-level attributes of a generated trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceShape {
    pub trace_id: String,
    pub model_name: String,
    pub workload: Workload,
    pub max_new_tokens: u64,
    pub gen_start_t: f64,
}

impl TraceShape {
    pub fn new(trace_id: impl Into<String>) -> Self {
        Self {
            trace_id: trace_id.into(),
            model_name: "synthetic".into(),
            workload: Workload::Custom("synthetic".into()),
            max_new_tokens: u64::MAX,
            gen_start_t: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub trace_id: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub prefill_j: f64,
    pub intercept_j: f64,
    pub slope_j_per_token: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum SimWarning {
    /// Some token intervals received no power sample; their energy can only
    /// be estimated by interpolation.
    InfeasibleSampling {
        trace_id: String,
        empty_intervals: usize,
        sample_period_s: f64,
        token_duration_s: f64,
    },
}

impl std::fmt::Display for SimWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SimWarning::InfeasibleSampling {
                trace_id,
                empty_intervals,
                sample_period_s,
                token_duration_s,
            } => write!(
                f,
                "{trace_id}: sample period {sample_period_s}s exceeds token duration \
                 {token_duration_s}s; {empty_intervals} token intervals have no samples \
                 and will be estimated"
            ),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticTrace {
    pub trace: InferenceTrace,
    pub truth: GroundTruth,
    pub warnings: Vec<SimWarning>,
}

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid simulator config: {0}")]
    InvalidConfig(String),
    #[error("output_tokens must be >= 1")]
    NoOutput,
    #[error("input_tokens must be >= 1")]
    NoInput,
    #[error("solution must end with a newline token")]
    SolutionWithoutNewline,
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
    #[error("preset {path}: {reason}")]
    PresetFile { path: String, reason: String },
}

/// Target per-token energies: prefill first, then decode ordinals 1..
pub fn target_energies(
    config: &SyntheticModelConfig,
    input_tokens: u64,
    output_tokens: u64,
    rng: &mut impl Rng,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(output_tokens as usize);
    out.push(config.prefill_j_per_input_token * input_tokens as f64);
    let intercept = config.decode_intercept(input_tokens);
    let noise = Normal::new(0.0, config.noise_sigma_j).ok();
    for m in 1..output_tokens {
        let mut e = intercept + config.decode_slope_j_per_token * (m - 1) as f64;
        if config.noise_sigma_j > 0.0 {
            if let Some(n) = &noise {
                e += n.sample(rng);
            }
        }
        out.push(e.max(0.0));
    }
    out
}

pub fn generate_trace(
    config: &SyntheticModelConfig,
    input_tokens: u64,
    output_tokens: u64,
    shape: &TraceShape,
) -> Result<SyntheticTrace, SimError> {
    config.validate()?;
    if output_tokens < 1 {
        return Err(SimError::NoOutput);
    }
    if input_tokens < 1 {
        return Err(SimError::NoInput);
    }
    if !(shape.gen_start_t.is_finite() && shape.gen_start_t >= 0.0) {
        return Err(SimError::InvalidConfig("gen_start_t must be >= 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let targets = target_energies(config, input_tokens, output_tokens, &mut rng);

    let gen_start = shape.gen_start_t;
    let first_end = gen_start + config.prefill_duration();
    let token_ts: Vec<f64> = (0..output_tokens)
        .map(|k| first_end + k as f64 * config.token_duration_s)
        .collect();
    let last_t = *token_ts.last().expect("output_tokens >= 1");

    // Interval-constant power levels, computed from the exact float bounds
    // alignment will see.
    let mut levels = Vec::with_capacity(token_ts.len());
    let mut prev = gen_start;
    for (&t, &e) in token_ts.iter().zip(&targets) {
        levels.push(e / (t - prev));
        prev = t;
    }

    let period = 1.0 / config.sample_rate_hz;
    let n_samples = (last_t * config.sample_rate_hz).ceil() as u64 + 2;
    let mut samples = Vec::with_capacity(n_samples as usize);
    let mut occupied = vec![false; token_ts.len()];
    let mut tok = 0usize;
    for k in 0..n_samples {
        let t = k as f64 / config.sample_rate_hz;
        let p = if t <= gen_start || t > last_t {
            IDLE_POWER_W
        } else {
            while token_ts[tok] < t {
                tok += 1;
            }
            occupied[tok] = true;
            levels[tok]
        };
        samples.push(PowerSample { t, p });
        if t >= last_t {
            break;
        }
    }

    let mut tokens: Vec<TokenEvent> = token_ts
        .iter()
        .enumerate()
        .map(|(i, &t)| TokenEvent::new(i as u32 + 1, t, None))
        .collect();
    if output_tokens < shape.max_new_tokens {
        tokens.last_mut().expect("nonempty").eos = true;
    }

    let manifest = TraceManifest {
        format_version: FORMAT_VERSION,
        trace_id: shape.trace_id.clone(),
        model_name: shape.model_name.clone(),
        workload: shape.workload.clone(),
        clock: "monotonic".into(),
        input_token_count: input_tokens,
        gen_start_t: gen_start,
        max_new_tokens: shape.max_new_tokens.max(output_tokens),
        samples_path: format!("{}.power.ndjson", shape.trace_id).into(),
        tokens_path: format!("{}.tokens.ndjson", shape.trace_id).into(),
    };
    let trace = InferenceTrace::new(manifest, samples, tokens)
        .map_err(|e| SimError::InvalidConfig(format!("generated trace is invalid: {e}")))?;

    let empty = occupied.iter().filter(|o| !**o).count();
    let warnings = if empty > 0 {
        vec![SimWarning::InfeasibleSampling {
            trace_id: shape.trace_id.clone(),
            empty_intervals: empty,
            sample_period_s: period,
            token_duration_s: config.token_duration_s,
        }]
    } else {
        Vec::new()
    };

    Ok(SyntheticTrace {
        trace,
        truth: GroundTruth {
            trace_id: shape.trace_id.clone(),
            input_tokens,
            output_tokens,
            prefill_j: targets[0],
            intercept_j: config.decode_intercept(input_tokens),
            slope_j_per_token: config.decode_slope_j_per_token,
        },
        warnings,
    })
}

/// Generates `count` traces from a preset. Per-trace seeds and token counts
/// are drawn from one stream seeded by `seed` (or the preset's own seed).
pub fn generate_batch(
    preset: &Preset,
    count: usize,
    seed: Option<u64>,
) -> Result<Vec<SyntheticTrace>, SimError> {
    preset.model.validate()?;
    let mut master = ChaCha8Rng::seed_from_u64(seed.unwrap_or(preset.model.rng_seed));
    (0..count)
        .map(|i| {
            let input = preset.input_tokens.draw(&mut master);
            let natural = preset.output_tokens.draw(&mut master);
            let output = (natural + preset.model.babble_tail_tokens).min(preset.max_new_tokens);
            let config = SyntheticModelConfig {
                rng_seed: master.random(),
                ..preset.model.clone()
            };
            let shape = TraceShape {
                trace_id: format!("{}-{i:04}", preset.name),
                model_name: preset.model_name.clone(),
                workload: preset.workload.clone(),
                max_new_tokens: preset.max_new_tokens,
                gen_start_t: 1.0,
            };
            generate_trace(&config, input, output.max(1), &shape)
        })
        .collect()
}
