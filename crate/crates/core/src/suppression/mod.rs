//! Early halting of code generation.
//!
//! A [`SuppressionSession`] consumes generated tokens one at a time. At each
//! cadence point it extracts the code written so far, checks its syntax and,
//! only if that succeeds, runs the task's tests. Generation stops as soon as
//! the tests pass, at end-of-sequence, or when the token budget is used up.

mod corpus;
mod extract;
mod source;
mod validator;

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::trace::TokenEvent;

pub use corpus::{
    evaluate_corpus, load_corpus, CorpusAggregate, CorpusEvaluation, CorpusTask, TaskOutcome,
};
pub use extract::{extract_code, CodeExtraction};
pub use source::{ScriptedSource, SourceError, TokenSource};
pub use validator::{
    python_syntax_command, python_test_command, CommandOutcome, CommandRunner,
    CommandSyntaxValidator, CommandTestValidator, FnValidator, SyntaxValidator, SyntaxVerdict,
    TestValidator, TestVerdict,
};

pub const DEFAULT_VALIDATOR_TIMEOUT: Duration = Duration::from_secs(5);

/// When the session runs its validators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Cadence {
    /// After every token whose text contains a newline.
    EveryLine,
    /// After every k-th emitted token.
    EveryKTokens(u32),
}

impl Cadence {
    fn fires(&self, token_text: &str, tokens_emitted: u64) -> bool {
        match *self {
            Cadence::EveryLine => token_text.contains('\n'),
            Cadence::EveryKTokens(k) => k > 0 && tokens_emitted.is_multiple_of(u64::from(k)),
        }
    }
}

impl fmt::Display for Cadence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cadence::EveryLine => f.write_str("every-line"),
            Cadence::EveryKTokens(k) => write!(f, "every-k={k}"),
        }
    }
}

impl FromStr for Cadence {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "every-line" {
            return Ok(Cadence::EveryLine);
        }
        let k = s
            .strip_prefix("every-k=")
            .ok_or_else(|| format!("unknown cadence {s:?}, expected every-line or every-k=<k>"))?;
        match k.parse::<u32>() {
            Ok(k) if k >= 1 => Ok(Cadence::EveryKTokens(k)),
            _ => Err(format!("cadence k must be an integer >= 1, got {k:?}")),
        }
    }
}

impl TryFrom<String> for Cadence {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Cadence> for String {
    fn from(c: Cadence) -> Self {
        c.to_string()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuppressionConfig {
    pub max_new_tokens: u64,
    pub cadence: Cadence,
    pub validator_timeout: Duration,
    pub code_extraction: CodeExtraction,
}

impl SuppressionConfig {
    pub fn new(max_new_tokens: u64) -> Self {
        Self {
            max_new_tokens,
            cadence: Cadence::EveryLine,
            validator_timeout: DEFAULT_VALIDATOR_TIMEOUT,
            code_extraction: CodeExtraction::Raw,
        }
    }

    pub fn with_cadence(mut self, cadence: Cadence) -> Self {
        self.cadence = cadence;
        self
    }

    pub fn with_extraction(mut self, mode: CodeExtraction) -> Self {
        self.code_extraction = mode;
        self
    }

    pub fn validate(&self) -> Result<(), SuppressionError> {
        if self.max_new_tokens == 0 {
            return Err(SuppressionError::InvalidConfig(
                "max_new_tokens must be >= 1".into(),
            ));
        }
        if let Cadence::EveryKTokens(0) = self.cadence {
            return Err(SuppressionError::InvalidConfig(
                "cadence k must be >= 1".into(),
            ));
        }
        if self.validator_timeout.is_zero() {
            return Err(SuppressionError::InvalidConfig(
                "validator_timeout must be > 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HaltReason {
    TestsPassed,
    EosToken,
    Budget,
    /// A scripted source ran out before end-of-sequence or the budget.
    SourceExhausted,
}

impl HaltReason {
    pub fn label(&self) -> &'static str {
        match self {
            HaltReason::TestsPassed => "tests_passed",
            HaltReason::EosToken => "eos_token",
            HaltReason::Budget => "budget",
            HaltReason::SourceExhausted => "source_exhausted",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionState {
    Generating,
    Halted(HaltReason),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Continue,
    Halt(HaltReason),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidatorVerdict {
    pub syntactically_valid: bool,
    pub tests_passed: bool,
    pub elapsed: Duration,
    pub detail: String,
}

#[derive(Debug, thiserror::Error)]
pub enum SuppressionError {
    #[error("session already halted ({0:?})")]
    SessionAlreadyHalted(HaltReason),
    #[error("token {0} carries no text")]
    MissingTokenText(u32),
    #[error(transparent)]
    Source(#[from] SourceError),
    #[error("invalid suppression config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone)]
pub struct SuppressionSession {
    config: SuppressionConfig,
    text: String,
    tokens_emitted: u64,
    syntax_checks: u64,
    test_runs: u64,
    check_wall_time: Duration,
    state: SessionState,
    last_verdict: Option<ValidatorVerdict>,
}

impl SuppressionSession {
    pub fn new(config: SuppressionConfig) -> Result<Self, SuppressionError> {
        config.validate()?;
        Ok(Self {
            config,
            text: String::new(),
            tokens_emitted: 0,
            syntax_checks: 0,
            test_runs: 0,
            check_wall_time: Duration::ZERO,
            state: SessionState::Generating,
            last_verdict: None,
        })
    }

    pub fn config(&self) -> &SuppressionConfig {
        &self.config
    }

    pub fn accumulated_text(&self) -> &str {
        &self.text
    }

    pub fn tokens_emitted(&self) -> u64 {
        self.tokens_emitted
    }

    /// Validator invocations of either kind.
    pub fn checks_run(&self) -> u64 {
        self.syntax_checks + self.test_runs
    }

    pub fn syntax_checks(&self) -> u64 {
        self.syntax_checks
    }

    pub fn test_runs(&self) -> u64 {
        self.test_runs
    }

    pub fn check_wall_time(&self) -> Duration {
        self.check_wall_time
    }

    pub fn state(&self) -> SessionState {
        self.state
    }

    pub fn halt_reason(&self) -> Option<HaltReason> {
        match self.state {
            SessionState::Halted(r) => Some(r),
            SessionState::Generating => None,
        }
    }

    pub fn last_verdict(&self) -> Option<&ValidatorVerdict> {
        self.last_verdict.as_ref()
    }

    /// Marks the session halted because its source ended.
    pub fn finish_exhausted(&mut self) {
        if self.state == SessionState::Generating {
            self.state = SessionState::Halted(HaltReason::SourceExhausted);
        }
    }

    pub fn on_token(
        &mut self,
        token: &TokenEvent,
        syntax: &dyn SyntaxValidator,
        tests: &dyn TestValidator,
    ) -> Result<Decision, SuppressionError> {
        if let SessionState::Halted(reason) = self.state {
            return Err(SuppressionError::SessionAlreadyHalted(reason));
        }
        let piece = token
            .text
            .as_deref()
            .ok_or(SuppressionError::MissingTokenText(token.index))?;
        self.text.push_str(piece);
        self.tokens_emitted += 1;

        if token.eos {
            return Ok(self.halt(HaltReason::EosToken));
        }
        if self.tokens_emitted >= self.config.max_new_tokens {
            return Ok(self.halt(HaltReason::Budget));
        }
        if !self.config.cadence.fires(piece, self.tokens_emitted) {
            return Ok(Decision::Continue);
        }
        let Some(code) = extract_code(&self.text, self.config.code_extraction) else {
            return Ok(Decision::Continue);
        };

        let verdict = run_validators(code, syntax, tests);
        self.syntax_checks += 1;
        if verdict.syntactically_valid {
            self.test_runs += 1;
        }
        self.check_wall_time += verdict.elapsed;
        let passed = verdict.tests_passed;
        self.last_verdict = Some(verdict);
        if passed {
            Ok(self.halt(HaltReason::TestsPassed))
        } else {
            Ok(Decision::Continue)
        }
    }

    fn halt(&mut self, reason: HaltReason) -> Decision {
        self.state = SessionState::Halted(reason);
        Decision::Halt(reason)
    }
}

/// Syntax gate, then tests. Tests never see code that failed to parse.
fn run_validators(
    code: &str,
    syntax: &dyn SyntaxValidator,
    tests: &dyn TestValidator,
) -> ValidatorVerdict {
    let start = Instant::now();
    let s = syntax.check_syntax(code);
    if !s.valid {
        return ValidatorVerdict {
            syntactically_valid: false,
            tests_passed: false,
            elapsed: start.elapsed(),
            detail: s.detail,
        };
    }
    let t = tests.run_tests(code);
    ValidatorVerdict {
        syntactically_valid: true,
        tests_passed: t.passed && !t.timed_out,
        elapsed: start.elapsed(),
        detail: t.detail,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuppressionOutcome {
    pub final_text: String,
    pub tokens_emitted: u64,
    pub halt_reason: HaltReason,
    pub checks_run: u64,
    pub syntax_checks: u64,
    pub test_runs: u64,
    pub check_wall_time: Duration,
    pub last_verdict: Option<ValidatorVerdict>,
}

pub fn run_suppressed_generation(
    source: &mut dyn TokenSource,
    config: &SuppressionConfig,
    syntax: &dyn SyntaxValidator,
    tests: &dyn TestValidator,
) -> Result<SuppressionOutcome, SuppressionError> {
    let mut session = SuppressionSession::new(config.clone())?;
    loop {
        let Some(token) = source.next_token()? else {
            session.finish_exhausted();
            break;
        };
        if let Decision::Halt(_) = session.on_token(&token, syntax, tests)? {
            break;
        }
    }
    tracing::debug!(
        tokens = session.tokens_emitted(),
        checks = session.checks_run(),
        reason = ?session.halt_reason(),
        "suppressed generation finished"
    );
    Ok(SuppressionOutcome {
        tokens_emitted: session.tokens_emitted,
        halt_reason: session.halt_reason().expect("loop exits halted"),
        checks_run: session.checks_run(),
        syntax_checks: session.syntax_checks,
        test_runs: session.test_runs,
        check_wall_time: session.check_wall_time,
        last_verdict: session.last_verdict,
        final_text: session.text,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineOutcome {
    pub final_text: String,
    pub tokens_emitted: u64,
    pub halt_reason: HaltReason,
}

/// Plays the source without any checks: what the model would have produced.
pub fn replay_baseline(
    source: &mut dyn TokenSource,
    max_new_tokens: u64,
) -> Result<BaselineOutcome, SuppressionError> {
    if max_new_tokens == 0 {
        return Err(SuppressionError::InvalidConfig(
            "max_new_tokens must be >= 1".into(),
        ));
    }
    let mut text = String::new();
    let mut n = 0u64;
    let halt_reason = loop {
        let Some(token) = source.next_token()? else {
            break HaltReason::SourceExhausted;
        };
        let piece = token
            .text
            .as_deref()
            .ok_or(SuppressionError::MissingTokenText(token.index))?;
        text.push_str(piece);
        n += 1;
        if token.eos {
            break HaltReason::EosToken;
        }
        if n >= max_new_tokens {
            break HaltReason::Budget;
        }
    };
    Ok(BaselineOutcome {
        final_text: text,
        tokens_emitted: n,
        halt_reason,
    })
}

#[cfg(test)]
mod tests {
    use std::cell::RefCell;

    use proptest::prelude::*;

    use super::*;
    use crate::simulator::{generate_babbler_stream, tokenize_code};

    fn stream(texts: &[&str]) -> ScriptedSource {
        ScriptedSource::new(
            texts
                .iter()
                .enumerate()
                .map(|(i, t)| TokenEvent::new(i as u32 + 1, (i + 1) as f64, t.to_string()))
                .collect(),
        )
    }

    fn always(v: bool) -> FnValidator<impl Fn(&str) -> bool> {
        FnValidator(move |_: &str| v)
    }

    /// Test validator that records every code string it was shown.
    struct Recorder<'a> {
        seen: RefCell<Vec<String>>,
        pass: &'a dyn Fn(&str) -> bool,
    }

    impl TestValidator for Recorder<'_> {
        fn run_tests(&self, code: &str) -> TestVerdict {
            self.seen.borrow_mut().push(code.to_string());
            TestVerdict {
                passed: (self.pass)(code),
                timed_out: false,
                detail: String::new(),
            }
        }
    }

    fn correct_40() -> Vec<String> {
        let mut v: Vec<String> = (1..40).map(|i| format!("w{i} ")).collect();
        v.push("done\n".into());
        v
    }

    #[test]
    fn babbler_halts_at_solution_line() {
        let solution = correct_40();
        let mut src = generate_babbler_stream(&solution, 260, 300).unwrap();
        let baseline = replay_baseline(&mut src.clone(), 300).unwrap();
        assert_eq!(baseline.tokens_emitted, 300);

        let target: String = solution.concat();
        let tests = FnValidator(move |c: &str| c.starts_with(&target));
        let out = run_suppressed_generation(
            &mut src,
            &SuppressionConfig::new(300),
            &always(true),
            &tests,
        )
        .unwrap();
        assert_eq!(out.halt_reason, HaltReason::TestsPassed);
        assert_eq!(out.tokens_emitted, 40);
        let reduction = 100.0 * (1.0 - out.tokens_emitted as f64 / baseline.tokens_emitted as f64);
        assert!((reduction - 86.666_666).abs() < 1e-3);
    }

    #[test]
    fn eos_terminates() {
        let mut texts = vec!["x\n"; 11];
        texts.push("");
        let mut toks = stream(&texts).into_tokens();
        toks[11].eos = true;
        let out = run_suppressed_generation(
            &mut ScriptedSource::new(toks),
            &SuppressionConfig::new(100),
            &always(true),
            &always(false),
        )
        .unwrap();
        assert_eq!(out.halt_reason, HaltReason::EosToken);
        assert_eq!(out.tokens_emitted, 12);
    }

    #[test]
    fn never_compiles_hits_budget_without_tests() {
        let texts: Vec<&str> = (0..60)
            .map(|i| if i % 3 == 0 { "(\n" } else { "(" })
            .collect();
        let newlines = texts[..49].iter().filter(|t| t.contains('\n')).count() as u64;
        let rec = Recorder {
            seen: RefCell::default(),
            pass: &|_| true,
        };
        let out = run_suppressed_generation(
            &mut stream(&texts),
            &SuppressionConfig::new(50),
            &always(false),
            &rec,
        )
        .unwrap();
        assert_eq!(out.halt_reason, HaltReason::Budget);
        assert_eq!(out.tokens_emitted, 50);
        assert_eq!(out.checks_run, newlines);
        assert_eq!(out.test_runs, 0);
        assert!(rec.seen.borrow().is_empty());
    }

    #[test]
    fn eos_checked_before_budget_and_cadence() {
        let mut toks = stream(&["a\n", "b\n"]).into_tokens();
        toks[1].eos = true;
        let out = run_suppressed_generation(
            &mut ScriptedSource::new(toks),
            &SuppressionConfig::new(2),
            &always(true),
            &always(false),
        )
        .unwrap();
        assert_eq!(out.halt_reason, HaltReason::EosToken);
        assert_eq!(out.checks_run, 2);
    }

    #[test]
    fn first_line_correct_halts_immediately() {
        let out = run_suppressed_generation(
            &mut stream(&["print", "(1)\n", "# more\n"]),
            &SuppressionConfig::new(10),
            &always(true),
            &always(true),
        )
        .unwrap();
        assert_eq!(out.tokens_emitted, 2);
        assert_eq!(out.final_text, "print(1)\n");
    }

    #[test]
    fn exhausted_source_reported() {
        let out = run_suppressed_generation(
            &mut stream(&["a", "b"]),
            &SuppressionConfig::new(10),
            &always(true),
            &always(false),
        )
        .unwrap();
        assert_eq!(out.halt_reason, HaltReason::SourceExhausted);
        assert_eq!(out.final_text, "ab");
    }

    #[test]
    fn halted_session_rejects_tokens() {
        let mut s = SuppressionSession::new(SuppressionConfig::new(1)).unwrap();
        let tok = TokenEvent::new(1, 1.0, "x".to_string());
        s.on_token(&tok, &always(true), &always(true)).unwrap();
        let err = s.on_token(&tok, &always(true), &always(true)).unwrap_err();
        assert!(matches!(
            err,
            SuppressionError::SessionAlreadyHalted(HaltReason::Budget)
        ));
    }

    #[test]
    fn token_without_text_rejected() {
        let mut s = SuppressionSession::new(SuppressionConfig::new(5)).unwrap();
        let tok = TokenEvent::new(3, 1.0, None);
        assert!(matches!(
            s.on_token(&tok, &always(true), &always(true)),
            Err(SuppressionError::MissingTokenText(3))
        ));
    }

    #[test]
    fn timed_out_tests_do_not_halt() {
        struct Slow;
        impl TestValidator for Slow {
            fn run_tests(&self, _: &str) -> TestVerdict {
                TestVerdict {
                    passed: true,
                    timed_out: true,
                    detail: "timed out".into(),
                }
            }
        }
        let out = run_suppressed_generation(
            &mut stream(&["a\n", "b\n", "c\n"]),
            &SuppressionConfig::new(3),
            &always(true),
            &Slow,
        )
        .unwrap();
        assert_eq!(out.halt_reason, HaltReason::Budget);
        assert_eq!(out.last_verdict.unwrap().detail, "timed out");
    }

    #[test]
    fn fenced_extraction_skips_prose() {
        let tests = FnValidator(|c: &str| c == "x = 1\n");
        let cfg = SuppressionConfig::new(20).with_extraction(CodeExtraction::FencedBlock);
        let out = run_suppressed_generation(
            &mut stream(&[
                "Here",
                " it is:\n",
                "```python\n",
                "x = 1\n",
                "```\n",
                "Done.\n",
            ]),
            &cfg,
            &always(true),
            &tests,
        )
        .unwrap();
        assert_eq!(out.halt_reason, HaltReason::TestsPassed);
        assert_eq!(out.tokens_emitted, 4);
        // No code yet on the first newline: no validator invocation.
        assert_eq!(out.syntax_checks, 2);
    }

    #[test]
    fn cadence_parsing() {
        assert_eq!("every-line".parse::<Cadence>().unwrap(), Cadence::EveryLine);
        assert_eq!(
            "every-k=5".parse::<Cadence>().unwrap(),
            Cadence::EveryKTokens(5)
        );
        assert!("every-k=0".parse::<Cadence>().is_err());
        assert!("sometimes".parse::<Cadence>().is_err());
        assert_eq!(Cadence::EveryKTokens(7).to_string(), "every-k=7");
    }

    #[test]
    fn config_invariants() {
        assert!(SuppressionConfig::new(0).validate().is_err());
        let mut c = SuppressionConfig::new(5);
        c.validator_timeout = Duration::ZERO;
        assert!(c.validate().is_err());
    }

    #[test]
    fn tokenized_code_round_trips_through_session() {
        let code = "def f(x):\n    return x * 2\n";
        let toks = tokenize_code(code);
        let texts: Vec<&str> = toks.iter().map(String::as_str).collect();
        let out = run_suppressed_generation(
            &mut stream(&texts),
            &SuppressionConfig::new(100),
            &always(false),
            &always(false),
        )
        .unwrap();
        assert_eq!(out.final_text, code);
    }

    fn token_texts() -> impl Strategy<Value = Vec<String>> {
        prop::collection::vec(
            prop::sample::select(vec!["a", "b ", "\n", "c\n", "(", ")\n"]),
            1..80,
        )
        .prop_map(|v| v.into_iter().map(String::from).collect())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn suppressed_never_longer(texts in token_texts(), budget in 1u64..100, pass_len in 0usize..200) {
            let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
            let base = replay_baseline(&mut stream(&refs), budget).unwrap();
            let tests = FnValidator(move |c: &str| c.len() >= pass_len);
            let out = run_suppressed_generation(&mut stream(&refs), &SuppressionConfig::new(budget), &always(true), &tests).unwrap();
            prop_assert!(out.tokens_emitted <= base.tokens_emitted);
            prop_assert!(base.final_text.starts_with(&out.final_text));
        }

        #[test]
        fn gate_blocks_tests(texts in token_texts()) {
            let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
            let syntax = FnValidator(|c: &str| c.matches('(').count() == c.matches(')').count());
            let rec = Recorder { seen: RefCell::default(), pass: &|_| false };
            let out = run_suppressed_generation(&mut stream(&refs), &SuppressionConfig::new(200), &syntax, &rec).unwrap();
            for code in rec.seen.borrow().iter() {
                prop_assert!(syntax.check_syntax(code).valid);
            }
            prop_assert_eq!(out.test_runs as usize, rec.seen.borrow().len());
        }
    }
}
