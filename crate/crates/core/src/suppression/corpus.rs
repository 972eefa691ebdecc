//! Batch evaluation over a corpus of scripted generations.
//!
//! Each task is replayed twice: once untouched (the baseline) and once under
//! suppression. Both final outputs are then re-tested independently so pass
//! rates compare like with like.

use std::path::{Path, PathBuf};
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    extract_code, replay_baseline, run_suppressed_generation, CodeExtraction, HaltReason,
    ScriptedSource, SuppressionConfig, SyntaxValidator, TestValidator,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusTask {
    pub task_id: String,
    pub stream_path: PathBuf,
    pub tests_path: PathBuf,
    /// Overrides the run-wide extraction mode when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extraction_mode: Option<CodeExtraction>,
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Parse { path: String, reason: String },
}

/// Reads a corpus file; relative paths resolve against its directory.
pub fn load_corpus(path: &Path) -> Result<Vec<CorpusTask>, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut tasks: Vec<CorpusTask> =
        serde_json::from_str(&text).map_err(|e| CorpusError::Parse {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
    let base = path.parent().unwrap_or(Path::new("."));
    for t in &mut tasks {
        if t.stream_path.is_relative() {
            t.stream_path = base.join(&t.stream_path);
        }
        if t.tests_path.is_relative() {
            t.tests_path = base.join(&t.tests_path);
        }
    }
    let mut seen = std::collections::HashSet::new();
    for t in &tasks {
        if !seen.insert(t.task_id.as_str()) {
            return Err(CorpusError::Parse {
                path: path.display().to_string(),
                reason: format!("duplicate task_id {:?}", t.task_id),
            });
        }
    }
    Ok(tasks)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskOutcome {
    pub task_id: String,
    pub baseline_tokens: u64,
    pub suppressed_tokens: u64,
    pub baseline_halt: Option<HaltReason>,
    pub halt_reason: Option<HaltReason>,
    pub baseline_passed: bool,
    pub suppressed_passed: bool,
    /// Independent re-run of the tests on a `TestsPassed` halt.
    pub soundness_recheck: Option<bool>,
    pub checks_run: u64,
    pub syntax_checks: u64,
    pub test_runs: u64,
    #[serde(skip)]
    pub check_wall_time: Duration,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl TaskOutcome {
    fn failed(task_id: &str, error: String) -> Self {
        Self {
            task_id: task_id.to_string(),
            baseline_tokens: 0,
            suppressed_tokens: 0,
            baseline_halt: None,
            halt_reason: None,
            baseline_passed: false,
            suppressed_passed: false,
            soundness_recheck: None,
            checks_run: 0,
            syntax_checks: 0,
            test_runs: 0,
            check_wall_time: Duration::ZERO,
            error: Some(error),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusAggregate {
    pub n_tasks: usize,
    /// Tasks that could not be evaluated; excluded from the figures below.
    pub n_errors: usize,
    pub mean_baseline_tokens: f64,
    pub mean_suppressed_tokens: f64,
    /// `100 × (1 − Σ suppressed / Σ baseline)` over evaluated tasks.
    pub reduction_pct: f64,
    pub baseline_pass_rate: f64,
    pub suppressed_pass_rate: f64,
    pub n_tests_passed_halts: usize,
    pub soundness_failures: usize,
    pub total_checks: u64,
    pub mean_checks_per_task: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusEvaluation {
    pub tasks: Vec<TaskOutcome>,
    pub aggregate: CorpusAggregate,
}

impl CorpusEvaluation {
    pub fn total_check_wall_time(&self) -> Duration {
        self.tasks.iter().map(|t| t.check_wall_time).sum()
    }
}

fn passes(
    text: &str,
    mode: CodeExtraction,
    syntax: &dyn SyntaxValidator,
    tests: &dyn TestValidator,
) -> bool {
    let Some(code) = extract_code(text, mode) else {
        return false;
    };
    syntax.check_syntax(code).valid && {
        let v = tests.run_tests(code);
        v.passed && !v.timed_out
    }
}

fn evaluate_task(
    task: &CorpusTask,
    config: &SuppressionConfig,
    syntax: &dyn SyntaxValidator,
    tests: &dyn TestValidator,
) -> TaskOutcome {
    let mode = task.extraction_mode.unwrap_or(config.code_extraction);
    let config = SuppressionConfig {
        code_extraction: mode,
        ..config.clone()
    };
    let source = match ScriptedSource::from_file(&task.stream_path) {
        Ok(s) => s,
        Err(e) => return TaskOutcome::failed(&task.task_id, e.to_string()),
    };
    let baseline = match replay_baseline(&mut source.clone(), config.max_new_tokens) {
        Ok(b) => b,
        Err(e) => return TaskOutcome::failed(&task.task_id, e.to_string()),
    };
    let out = match run_suppressed_generation(&mut source.clone(), &config, syntax, tests) {
        Ok(o) => o,
        Err(e) => return TaskOutcome::failed(&task.task_id, e.to_string()),
    };
    let baseline_passed = passes(&baseline.final_text, mode, syntax, tests);
    let suppressed_passed = passes(&out.final_text, mode, syntax, tests);
    let soundness_recheck =
        (out.halt_reason == HaltReason::TestsPassed).then_some(suppressed_passed);
    TaskOutcome {
        task_id: task.task_id.clone(),
        baseline_tokens: baseline.tokens_emitted,
        suppressed_tokens: out.tokens_emitted,
        baseline_halt: Some(baseline.halt_reason),
        halt_reason: Some(out.halt_reason),
        baseline_passed,
        suppressed_passed,
        soundness_recheck,
        checks_run: out.checks_run,
        syntax_checks: out.syntax_checks,
        test_runs: out.test_runs,
        check_wall_time: out.check_wall_time,
        error: None,
    }
}

/// Evaluates every task in parallel; outcomes keep corpus order.
pub fn evaluate_corpus<S, T, F>(
    tasks: &[CorpusTask],
    config: &SuppressionConfig,
    syntax: &S,
    make_tests: F,
) -> CorpusEvaluation
where
    S: SyntaxValidator + Sync,
    T: TestValidator,
    F: Fn(&CorpusTask) -> T + Sync,
{
    let outcomes: Vec<TaskOutcome> = tasks
        .par_iter()
        .map(|task| {
            let tests = make_tests(task);
            let outcome = evaluate_task(task, config, syntax, &tests);
            if let Some(e) = &outcome.error {
                tracing::warn!(task = %task.task_id, error = %e, "task not evaluated");
            }
            outcome
        })
        .collect();
    let aggregate = aggregate(&outcomes);
    CorpusEvaluation {
        tasks: outcomes,
        aggregate,
    }
}

fn aggregate(outcomes: &[TaskOutcome]) -> CorpusAggregate {
    let ok: Vec<&TaskOutcome> = outcomes.iter().filter(|t| t.error.is_none()).collect();
    let n = ok.len();
    let mean = |f: &dyn Fn(&TaskOutcome) -> f64| {
        if n == 0 {
            0.0
        } else {
            ok.iter().map(|t| f(t)).sum::<f64>() / n as f64
        }
    };
    let base_sum: u64 = ok.iter().map(|t| t.baseline_tokens).sum();
    let sup_sum: u64 = ok.iter().map(|t| t.suppressed_tokens).sum();
    let reduction_pct = if base_sum == 0 {
        0.0
    } else {
        100.0 * (1.0 - sup_sum as f64 / base_sum as f64)
    };
    let total_checks: u64 = ok.iter().map(|t| t.checks_run).sum();
    CorpusAggregate {
        n_tasks: outcomes.len(),
        n_errors: outcomes.len() - n,
        mean_baseline_tokens: mean(&|t| t.baseline_tokens as f64),
        mean_suppressed_tokens: mean(&|t| t.suppressed_tokens as f64),
        reduction_pct,
        baseline_pass_rate: mean(&|t| f64::from(u8::from(t.baseline_passed))),
        suppressed_pass_rate: mean(&|t| f64::from(u8::from(t.suppressed_passed))),
        n_tests_passed_halts: ok.iter().filter(|t| t.soundness_recheck.is_some()).count(),
        soundness_failures: ok
            .iter()
            .filter(|t| t.soundness_recheck == Some(false))
            .count(),
        total_checks,
        mean_checks_per_task: mean(&|t| t.checks_run as f64),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::suppression::FnValidator;
    use crate::trace::{write_token_stream, TokenEvent};

    fn write_stream(dir: &Path, name: &str, texts: &[&str], eos: bool) -> PathBuf {
        let mut toks: Vec<TokenEvent> = texts
            .iter()
            .enumerate()
            .map(|(i, t)| TokenEvent::new(i as u32 + 1, (i + 1) as f64 * 0.05, t.to_string()))
            .collect();
        if eos {
            toks.last_mut().unwrap().eos = true;
        }
        let path = dir.join(name);
        write_token_stream(std::fs::File::create(&path).unwrap(), &toks).unwrap();
        path
    }

    #[test]
    fn corpus_paths_resolve_relative_to_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.json");
        std::fs::write(
            &path,
            r#"[{"task_id": "a", "stream_path": "a.tokens.ndjson", "tests_path": "a_test.py", "extraction_mode": "fenced-block"}]"#,
        )
        .unwrap();
        let tasks = load_corpus(&path).unwrap();
        assert_eq!(tasks[0].stream_path, dir.path().join("a.tokens.ndjson"));
        assert_eq!(tasks[0].extraction_mode, Some(CodeExtraction::FencedBlock));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.json");
        let task = r#"{"task_id": "a", "stream_path": "x", "tests_path": "y"}"#;
        std::fs::write(&path, format!("[{task}, {task}]")).unwrap();
        assert!(matches!(load_corpus(&path), Err(CorpusError::Parse { .. })));
    }

    #[test]
    fn aggregate_over_mixed_tasks() {
        let dir = tempfile::tempdir().unwrap();
        let mut babble = vec!["ok\n"];
        babble.extend(std::iter::repeat_n("#\n", 9));
        let tasks = vec![
            CorpusTask {
                task_id: "babbler".into(),
                stream_path: write_stream(dir.path(), "b.ndjson", &babble, false),
                tests_path: "unused".into(),
                extraction_mode: None,
            },
            CorpusTask {
                task_id: "stopper".into(),
                stream_path: write_stream(dir.path(), "s.ndjson", &["ok", "\n"], true),
                tests_path: "unused".into(),
                extraction_mode: None,
            },
            CorpusTask {
                task_id: "missing".into(),
                stream_path: dir.path().join("nope.ndjson"),
                tests_path: "unused".into(),
                extraction_mode: None,
            },
        ];
        let syntax = FnValidator(|_: &str| true);
        let eval = evaluate_corpus(&tasks, &SuppressionConfig::new(10), &syntax, |_| {
            FnValidator(|c: &str| c.starts_with("ok\n"))
        });
        let a = &eval.aggregate;
        assert_eq!(a.n_tasks, 3);
        assert_eq!(a.n_errors, 1);
        assert_eq!(eval.tasks[0].suppressed_tokens, 1);
        assert_eq!(eval.tasks[0].baseline_tokens, 10);
        assert_eq!(eval.tasks[1].halt_reason, Some(HaltReason::EosToken));
        // (1 + 2) suppressed against (10 + 2) baseline tokens.
        assert!((a.reduction_pct - 75.0).abs() < 1e-12);
        assert_eq!(a.baseline_pass_rate, 1.0);
        assert_eq!(a.suppressed_pass_rate, 1.0);
        assert_eq!(a.soundness_failures, 0);
        assert_eq!(a.n_tests_passed_halts, 1);
    }
}
