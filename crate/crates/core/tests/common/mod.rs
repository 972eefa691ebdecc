//! Shared generators, oracles and property checks for the integration and
//! acceptance targets.
#![allow(dead_code)]

use std::path::PathBuf;

use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wattlens::alignment::{assign_token_energies, EnergyMode};
use wattlens::metrics::ols;
use wattlens::suppression::{
    replay_baseline, run_suppressed_generation, Cadence, FnValidator, ScriptedSource,
    SuppressionConfig, TestValidator, TestVerdict,
};
use wattlens::trace::{InferenceTrace, PowerSample, TokenEvent, TraceManifest, Workload};

pub fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

pub fn manifest(id: &str, gen_start_t: f64) -> TraceManifest {
    TraceManifest {
        format_version: 1,
        trace_id: id.into(),
        model_name: "test-model".into(),
        workload: Workload::ZeroShot,
        clock: "monotonic".into(),
        input_token_count: 10,
        gen_start_t,
        max_new_tokens: 1000,
        samples_path: format!("{id}.power.ndjson").into(),
        tokens_path: format!("{id}.tokens.ndjson").into(),
    }
}

/// A valid trace with irregular sample spacing (some token intervals may be
/// empty) drawn from `rng`.
pub fn random_trace(rng: &mut impl Rng, id: &str) -> InferenceTrace {
    let gen_start = rng.random_range(0.0..5.0);
    let n_tokens = rng.random_range(1..60);
    let mut t = gen_start;
    let tokens: Vec<TokenEvent> = (0..n_tokens)
        .map(|i| {
            t += rng.random_range(0.005..0.3);
            TokenEvent::new(i + 1, t, None)
        })
        .collect();
    let last = t;
    let mut samples = Vec::new();
    let mut s = gen_start - rng.random_range(0.0..0.5);
    loop {
        samples.push(PowerSample {
            t: s,
            p: rng.random_range(0.0..400.0),
        });
        if s >= last {
            break;
        }
        s += rng.random_range(0.001..0.25);
    }
    // Occasionally land a sample exactly on a token boundary.
    if rng.random_bool(0.5) && n_tokens > 1 {
        let k = rng.random_range(0..n_tokens as usize - 1);
        let bt = tokens[k].t;
        if !samples.iter().any(|x| x.t == bt) {
            samples.push(PowerSample { t: bt, p: 123.0 });
            samples.sort_by(|a, b| a.t.total_cmp(&b.t));
        }
    }
    InferenceTrace::new(manifest(id, gen_start), samples, tokens)
        .expect("generator builds valid traces")
}

/// Brute-force sample-mean assignment: every token scans every sample.
/// Returns `(energy_j, sample_count)` per token.
pub fn oracle_sample_mean(trace: &InferenceTrace) -> Vec<(f64, usize)> {
    let mut out = Vec::new();
    let mut lo = trace.manifest.gen_start_t;
    for tok in &trace.tokens {
        let hi = tok.t;
        let dur = hi - lo;
        let inside: Vec<f64> = trace
            .samples
            .iter()
            .filter(|s| s.t > lo && s.t <= hi)
            .map(|s| s.p)
            .collect();
        let e = if inside.is_empty() {
            oracle_power(&trace.samples, lo + dur / 2.0) * dur
        } else {
            inside.iter().sum::<f64>() / inside.len() as f64 * dur
        };
        out.push((e, inside.len()));
        lo = hi;
    }
    out
}

fn oracle_power(samples: &[PowerSample], x: f64) -> f64 {
    let before = samples.iter().rev().find(|s| s.t <= x).expect("covered");
    let after = samples.iter().find(|s| s.t >= x).expect("covered");
    if before.t == after.t {
        return before.p;
    }
    before.p + (after.p - before.p) * (x - before.t) / (after.t - before.t)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    (a - b).abs() / a.abs().max(b.abs())
}

fn runner(cases: u32, seed: u64) -> TestRunner {
    let mut seed_bytes = [0u8; 32];
    seed_bytes[..8].copy_from_slice(&seed.to_le_bytes());
    TestRunner::new_with_rng(
        Config {
            cases,
            failure_persistence: None,
            ..Config::default()
        },
        proptest::test_runner::TestRng::from_seed(
            proptest::test_runner::RngAlgorithm::ChaCha,
            &seed_bytes,
        ),
    )
}

fn run<S: Strategy>(
    cases: u32,
    seed: u64,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<u32, String> {
    runner(cases, seed)
        .run(&strategy, test)
        .map(|_| cases)
        .map_err(|e| e.to_string())
}

/// Scaling all power by `c` scales every token energy by `c`.
pub fn prop_power_scaling(cases: u32) -> Result<u32, String> {
    run(cases, 11, (any::<u64>(), 0.01f64..100.0), |(seed, c)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let trace = random_trace(&mut rng, "s");
        let mut scaled = trace.clone();
        for s in &mut scaled.samples {
            s.p *= c;
        }
        for mode in [EnergyMode::SampleMean, EnergyMode::Trapezoid] {
            let a = assign_token_energies(&trace, mode).unwrap();
            let b = assign_token_energies(&scaled, mode).unwrap();
            for (x, y) in a.iter().zip(&b) {
                let expected = x.energy_j * c;
                prop_assert!(
                    (expected - y.energy_j).abs() <= 1e-9 * expected.abs().max(1e-9),
                    "{mode:?}: {} vs {}",
                    expected,
                    y.energy_j
                );
            }
        }
        Ok(())
    })
}

/// Dyadic timestamps keep every shifted difference exact, so shifting all
/// timestamps by an integer leaves energies bit-identical.
pub fn prop_time_shift(cases: u32) -> Result<u32, String> {
    run(cases, 12, (any::<u64>(), 1u32..100_000), |(seed, shift)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut trace = random_trace(&mut rng, "t");
        let q = |t: f64| (t * 64.0).round() / 64.0;
        trace.manifest.gen_start_t = q(trace.manifest.gen_start_t);
        let mut prev = trace.manifest.gen_start_t;
        for tok in &mut trace.tokens {
            tok.t = q(tok.t).max(prev + 1.0 / 64.0);
            prev = tok.t;
        }
        let mut ts: Vec<f64> = trace.samples.iter().map(|s| q(s.t)).collect();
        ts.dedup();
        let last_tok = trace.tokens.last().unwrap().t;
        let first = ts[0].min(trace.manifest.gen_start_t);
        ts[0] = first;
        if *ts.last().unwrap() < last_tok {
            ts.push(last_tok);
        }
        trace.samples = ts
            .iter()
            .enumerate()
            .map(|(i, &t)| PowerSample {
                t,
                p: 50.0 + (i % 17) as f64 * 13.25,
            })
            .collect();
        trace
            .validate()
            .map_err(|e| TestCaseError::reject(e.to_string()))?;

        let d = f64::from(shift);
        let mut moved = trace.clone();
        moved.manifest.gen_start_t += d;
        for t in &mut moved.tokens {
            t.t += d;
        }
        for s in &mut moved.samples {
            s.t += d;
        }
        for mode in [EnergyMode::SampleMean, EnergyMode::Trapezoid] {
            let a = assign_token_energies(&trace, mode).unwrap();
            let b = assign_token_energies(&moved, mode).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert_eq!(x.energy_j.to_bits(), y.energy_j.to_bits(), "{:?}", mode);
                prop_assert_eq!(x.sample_count, y.sample_count);
            }
        }
        Ok(())
    })
}

/// OLS residuals are orthogonal to the constant and to x.
pub fn prop_ols_orthogonality(cases: u32) -> Result<u32, String> {
    let points = prop::collection::vec((0.0f64..2000.0, -50.0f64..50.0), 2..300);
    run(cases, 13, points, |pts| {
        let Some(fit) = ols(&pts) else {
            return Err(TestCaseError::reject("degenerate x"));
        };
        let n = pts.len() as f64;
        let mean_x = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let scale_y = pts.iter().map(|p| p.1.abs()).fold(1.0, f64::max);
        let scale_x = pts.iter().map(|p| (p.0 - mean_x).abs()).fold(1.0, f64::max);
        let (mut r_sum, mut rx_sum) = (0.0, 0.0);
        for &(x, y) in &pts {
            let r = y - fit.at(x);
            r_sum += r;
            rx_sum += r * (x - mean_x);
        }
        prop_assert!(r_sum.abs() <= 1e-9 * n * scale_y, "sum r = {r_sum}");
        prop_assert!(
            rx_sum.abs() <= 1e-9 * n * scale_y * scale_x,
            "sum r x = {rx_sum}"
        );
        Ok(())
    })
}

pub fn scripted(texts: &[String], eos_at_end: bool) -> ScriptedSource {
    let n = texts.len();
    ScriptedSource::new(
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| TokenEvent {
                index: i as u32 + 1,
                t: (i + 1) as f64,
                text: Some(t.clone()),
                eos: eos_at_end && i + 1 == n,
            })
            .collect(),
    )
}

fn token_stream() -> impl Strategy<Value = (Vec<String>, bool)> {
    let piece = prop::sample::select(vec!["x", "y ", "(", ")", "\n", ")\n", "x\n", "# c\n"]);
    (
        prop::collection::vec(piece.prop_map(String::from), 1..150),
        any::<bool>(),
    )
}

fn balanced(code: &str) -> bool {
    let mut depth = 0i64;
    for c in code.chars() {
        match c {
            '(' => depth += 1,
            ')' => depth -= 1,
            _ => {}
        }
        if depth < 0 {
            return false;
        }
    }
    depth == 0
}

/// Pure test predicate: at least `need` 'x' characters written.
fn enough_x(need: usize) -> impl Fn(&str) -> bool + Clone {
    move |code: &str| code.matches('x').count() >= need
}

struct Logging<F> {
    pass: F,
    seen: std::cell::RefCell<Vec<String>>,
}

impl<F: Fn(&str) -> bool> TestValidator for Logging<F> {
    fn run_tests(&self, code: &str) -> TestVerdict {
        self.seen.borrow_mut().push(code.to_string());
        TestVerdict {
            passed: (self.pass)(code),
            timed_out: false,
            detail: String::new(),
        }
    }
}

/// Tests only ever see code that passed the syntax check.
pub fn prop_gate_ordering(cases: u32) -> Result<u32, String> {
    run(
        cases,
        14,
        (token_stream(), 1usize..40, 1u64..200),
        |((texts, eos), need, budget)| {
            let tests = Logging {
                pass: enough_x(need),
                seen: Default::default(),
            };
            let out = run_suppressed_generation(
                &mut scripted(&texts, eos),
                &SuppressionConfig::new(budget),
                &FnValidator(balanced),
                &tests,
            )
            .unwrap();
            for code in tests.seen.borrow().iter() {
                prop_assert!(balanced(code), "tests ran on unbalanced code {code:?}");
            }
            prop_assert_eq!(out.test_runs as usize, tests.seen.borrow().len());
            Ok(())
        },
    )
}

/// Suppression never emits more tokens than the baseline replay, and its
/// output is a prefix of the baseline output. Running twice gives the same
/// halt point and text.
pub fn prop_never_worse_length(cases: u32) -> Result<u32, String> {
    run(
        cases,
        15,
        (token_stream(), 1usize..40, 1u64..200, 1u32..8),
        |((texts, eos), need, budget, k)| {
            let base = replay_baseline(&mut scripted(&texts, eos), budget).unwrap();
            for cadence in [Cadence::EveryLine, Cadence::EveryKTokens(k)] {
                let cfg = SuppressionConfig::new(budget).with_cadence(cadence);
                let run_once = || {
                    run_suppressed_generation(
                        &mut scripted(&texts, eos),
                        &cfg,
                        &FnValidator(balanced),
                        &FnValidator(enough_x(need)),
                    )
                    .unwrap()
                };
                let a = run_once();
                let b = run_once();
                prop_assert!(a.tokens_emitted <= base.tokens_emitted);
                prop_assert!(base.final_text.starts_with(&a.final_text));
                prop_assert_eq!(a.tokens_emitted, b.tokens_emitted);
                prop_assert_eq!(&a.final_text, &b.final_text);
                prop_assert_eq!(a.halt_reason, b.halt_reason);
            }
            Ok(())
        },
    )
}

/// With `k` dividing `K`, every-k checks a superset of the every-K check
/// points, so it never halts later.
pub fn prop_cadence_monotone(cases: u32) -> Result<u32, String> {
    run(
        cases,
        16,
        (token_stream(), 1usize..40, 1u64..200, 1u32..6, 1u32..6),
        |((texts, eos), need, budget, k, m)| {
            let halt = |cadence| {
                run_suppressed_generation(
                    &mut scripted(&texts, eos),
                    &SuppressionConfig::new(budget).with_cadence(cadence),
                    &FnValidator(balanced),
                    &FnValidator(enough_x(need)),
                )
                .unwrap()
                .tokens_emitted
            };
            let small = halt(Cadence::EveryKTokens(k));
            let large = halt(Cadence::EveryKTokens(k * m));
            prop_assert!(small <= large, "k={k}: {small} > K={}: {large}", k * m);
            Ok(())
        },
    )
}

/// Runs profile, aggregate and suppress on the bundled fixtures into `out`
/// and returns the produced files (relative paths, sorted), excluding the
/// wall-clock timing file.
pub fn golden_run(out: &std::path::Path) -> Result<Vec<PathBuf>, String> {
    let bin = env!("CARGO_BIN_EXE_wattlens");
    let fixtures = crate_dir().join("fixtures");
    let s = |p: &std::path::Path| p.to_str().unwrap().to_string();
    let steps: Vec<Vec<String>> = vec![
        vec![
            "profile".into(),
            s(&fixtures.join("traces")),
            "--out".into(),
            s(&out.join("profile")),
        ],
        vec![
            "aggregate".into(),
            s(&out.join("profile")),
            "--outliers".into(),
            "iqr1.5".into(),
            "--out".into(),
            s(&out.join("aggregate")),
        ],
        vec![
            "suppress".into(),
            s(&fixtures.join("corpus/babblers/corpus.json")),
            "--budget".into(),
            "300".into(),
            "--out".into(),
            s(&out.join("suppress")),
        ],
    ];
    for args in steps {
        let o = std::process::Command::new(bin)
            .args(&args)
            .env_remove("WATTLENS_LOG")
            .output()
            .map_err(|e| e.to_string())?;
        if !o.status.success() {
            return Err(format!("{args:?}: {}", String::from_utf8_lossy(&o.stderr)));
        }
    }
    let mut files = Vec::new();
    for sub in ["profile", "aggregate", "suppress"] {
        for e in std::fs::read_dir(out.join(sub)).map_err(|e| e.to_string())? {
            let name = e.map_err(|e| e.to_string())?.file_name();
            if name.to_string_lossy().ends_with(".timing.json") {
                continue;
            }
            files.push(PathBuf::from(sub).join(name));
        }
    }
    files.sort();
    Ok(files)
}

/// Compares two golden trees; returns the differing files.
pub fn golden_diff(files: &[PathBuf], a: &std::path::Path, b: &std::path::Path) -> Vec<PathBuf> {
    files
        .iter()
        .filter(|f| std::fs::read(a.join(f)).ok() != std::fs::read(b.join(f)).ok())
        .cloned()
        .collect()
}
