//! Syntax and test validators, including the sandboxed external-command
//! runner used for real test suites.
//!
//! An external validator receives the candidate code as a file path. The
//! child runs in a fresh temporary directory with a cleared environment, its
//! own process group, CPU/file-size rlimits and a wall-clock timeout; on
//! timeout the whole group is killed and the verdict is a failure.

use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use wait_timeout::ChildExt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntaxVerdict {
    pub valid: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestVerdict {
    pub passed: bool,
    pub timed_out: bool,
    pub detail: String,
}

pub trait SyntaxValidator {
    fn check_syntax(&self, code: &str) -> SyntaxVerdict;
}

pub trait TestValidator {
    fn run_tests(&self, code: &str) -> TestVerdict;
}

/// Adapts a predicate into either kind of validator.
#[derive(Debug, Clone, Copy)]
pub struct FnValidator<F>(pub F);

impl<F: Fn(&str) -> bool> SyntaxValidator for FnValidator<F> {
    fn check_syntax(&self, code: &str) -> SyntaxVerdict {
        SyntaxVerdict {
            valid: (self.0)(code),
            detail: String::new(),
        }
    }
}

impl<F: Fn(&str) -> bool> TestValidator for FnValidator<F> {
    fn run_tests(&self, code: &str) -> TestVerdict {
        TestVerdict {
            passed: (self.0)(code),
            timed_out: false,
            detail: String::new(),
        }
    }
}

impl<T: SyntaxValidator + ?Sized> SyntaxValidator for &T {
    fn check_syntax(&self, code: &str) -> SyntaxVerdict {
        (**self).check_syntax(code)
    }
}

impl<T: TestValidator + ?Sized> TestValidator for &T {
    fn run_tests(&self, code: &str) -> TestVerdict {
        (**self).run_tests(code)
    }
}

impl<T: TestValidator + ?Sized> TestValidator for Box<T> {
    fn run_tests(&self, code: &str) -> TestVerdict {
        (**self).run_tests(code)
    }
}

/// Default Python syntax check: parse the candidate with `ast`.
pub fn python_syntax_command() -> Vec<String> {
    [
        "python3",
        "-c",
        "import ast, sys; ast.parse(open(sys.argv[1], encoding='utf-8').read())",
        "{code}",
    ]
    .map(String::from)
    .to_vec()
}

/// Default test command: run the task's test program on the candidate.
pub fn python_test_command() -> Vec<String> {
    ["python3", "{tests}", "{code}"].map(String::from).to_vec()
}

#[derive(Debug, Clone)]
pub struct CommandOutcome {
    pub success: bool,
    pub timed_out: bool,
    pub exit_code: Option<i32>,
    pub elapsed: Duration,
    pub detail: String,
}

const DETAIL_LIMIT: usize = 2000;
const MAX_FILE_BYTES: u64 = 16 << 20;

/// Runs a command template against candidate code in a throwaway sandbox.
///
/// `{code}` in the template is replaced by the candidate file path and
/// `{tests}` by the configured tests path.
#[derive(Debug, Clone)]
pub struct CommandRunner {
    template: Vec<String>,
    tests_path: Option<PathBuf>,
    timeout: Duration,
    file_name: String,
}

impl CommandRunner {
    pub fn new(template: Vec<String>, timeout: Duration) -> Self {
        Self {
            template,
            tests_path: None,
            timeout,
            file_name: "candidate.py".into(),
        }
    }

    pub fn with_tests(mut self, tests_path: &Path) -> Self {
        let abs = std::fs::canonicalize(tests_path).unwrap_or_else(|_| tests_path.to_path_buf());
        self.tests_path = Some(abs);
        self
    }

    pub fn with_file_name(mut self, name: impl Into<String>) -> Self {
        self.file_name = name.into();
        self
    }

    pub fn timeout(&self) -> Duration {
        self.timeout
    }

    pub fn run(&self, code: &str) -> CommandOutcome {
        let start = Instant::now();
        match self.run_inner(code) {
            Ok(mut outcome) => {
                outcome.elapsed = start.elapsed();
                outcome
            }
            Err(e) => CommandOutcome {
                success: false,
                timed_out: false,
                exit_code: None,
                elapsed: start.elapsed(),
                detail: format!("validator could not run: {e}"),
            },
        }
    }

    fn run_inner(&self, code: &str) -> std::io::Result<CommandOutcome> {
        let Some((program, args)) = self.template.split_first() else {
            return Err(std::io::Error::other("empty command template"));
        };
        let dir = tempfile::tempdir()?;
        let code_path = dir.path().join(&self.file_name);
        std::fs::write(&code_path, code)?;
        let log_path = dir.path().join("output.log");
        let log = File::create(&log_path)?;

        let code_arg = code_path.display().to_string();
        let tests_arg = self
            .tests_path
            .as_ref()
            .map(|p| p.display().to_string())
            .unwrap_or_default();
        let args: Vec<String> = args
            .iter()
            .map(|a| {
                a.replace("{code}", &code_arg)
                    .replace("{tests}", &tests_arg)
            })
            .collect();

        let mut cmd = Command::new(program);
        cmd.args(&args)
            .current_dir(dir.path())
            .env_clear()
            .env("PATH", std::env::var_os("PATH").unwrap_or_default())
            .env("HOME", dir.path())
            .env("PYTHONDONTWRITEBYTECODE", "1")
            .stdin(Stdio::null())
            .stdout(log.try_clone()?)
            .stderr(log);
        sandbox(&mut cmd, self.timeout);

        let mut child = cmd.spawn()?;
        let status = child.wait_timeout(self.timeout)?;
        let (status, timed_out) = match status {
            Some(s) => (Some(s), false),
            None => {
                kill_group(child.id());
                let _ = child.kill();
                let _ = child.wait();
                (None, true)
            }
        };

        let mut detail = String::new();
        if let Ok(mut f) = File::open(&log_path) {
            let mut buf = Vec::new();
            let _ = f.read_to_end(&mut buf);
            let tail = &buf[buf.len().saturating_sub(DETAIL_LIMIT)..];
            detail = String::from_utf8_lossy(tail).trim().to_string();
        }
        if timed_out {
            detail = format!("timed out after {:.3}s", self.timeout.as_secs_f64());
        }
        Ok(CommandOutcome {
            success: status.is_some_and(|s| s.success()),
            timed_out,
            exit_code: status.and_then(|s| s.code()),
            elapsed: Duration::ZERO,
            detail,
        })
    }
}

#[cfg(unix)]
fn sandbox(cmd: &mut Command, timeout: Duration) {
    use std::os::unix::process::CommandExt;
    let cpu_secs = timeout.as_secs() + 2;
    cmd.process_group(0);
    // SAFETY: only async-signal-safe setrlimit calls run between fork and exec.
    unsafe {
        cmd.pre_exec(move || {
            let limit = |res, value: u64| {
                let lim = libc::rlimit {
                    rlim_cur: value as libc::rlim_t,
                    rlim_max: value as libc::rlim_t,
                };
                libc::setrlimit(res, &lim);
            };
            limit(libc::RLIMIT_CPU, cpu_secs);
            limit(libc::RLIMIT_FSIZE, MAX_FILE_BYTES);
            limit(libc::RLIMIT_CORE, 0);
            Ok(())
        });
    }
}

#[cfg(not(unix))]
fn sandbox(_cmd: &mut Command, _timeout: Duration) {}

#[cfg(unix)]
fn kill_group(pid: u32) {
    // SAFETY: plain syscall on the child's process group id.
    unsafe {
        libc::killpg(pid as libc::pid_t, libc::SIGKILL);
    }
}

#[cfg(not(unix))]
fn kill_group(_pid: u32) {}

/// Syntax validator backed by an external command (exit 0 = valid).
#[derive(Debug, Clone)]
pub struct CommandSyntaxValidator(pub CommandRunner);

impl CommandSyntaxValidator {
    pub fn python(timeout: Duration) -> Self {
        Self(CommandRunner::new(python_syntax_command(), timeout))
    }
}

impl SyntaxValidator for CommandSyntaxValidator {
    fn check_syntax(&self, code: &str) -> SyntaxVerdict {
        let out = self.0.run(code);
        SyntaxVerdict {
            valid: out.success,
            detail: out.detail,
        }
    }
}

/// Test validator backed by an external command (exit 0 = pass).
#[derive(Debug, Clone)]
pub struct CommandTestValidator(pub CommandRunner);

impl CommandTestValidator {
    pub fn python(tests_path: &Path, timeout: Duration) -> Self {
        Self(CommandRunner::new(python_test_command(), timeout).with_tests(tests_path))
    }
}

impl TestValidator for CommandTestValidator {
    fn run_tests(&self, code: &str) -> TestVerdict {
        let out = self.0.run(code);
        TestVerdict {
            passed: out.success,
            timed_out: out.timed_out,
            detail: out.detail,
        }
    }
}
