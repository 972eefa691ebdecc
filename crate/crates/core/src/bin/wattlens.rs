use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use tracing_subscriber::EnvFilter;

use wattlens::fsutil::atomic_write;
use wattlens::metrics::{aggregate_groups, MetricsError, OutlierRule, TrendOptions};
use wattlens::report::{
    find_reports, load_report, profile_trace, write_aggregate, write_profile, write_suppression,
    AggregateDocument, GroupSummary, SuppressionDocument, REPORT_FORMAT_VERSION,
};
use wattlens::simulator::{generate_batch, Preset};
use wattlens::suppression::{
    evaluate_corpus, load_corpus, python_syntax_command, python_test_command, Cadence,
    CodeExtraction, CommandRunner, CommandSyntaxValidator, CommandTestValidator, SuppressionConfig,
};
use wattlens::trace::{parse_trace, write_trace};
use wattlens::EnergyMode;

#[derive(Parser)]
#[command(
    name = "wattlens",
    version,
    about = "Per-token energy profiling of LLM inference traces"
)]
struct Cli {
    /// How samples inside a token interval become joules.
    #[arg(long, global = true, value_enum, default_value_t = ModeArg::SampleMean)]
    mode: ModeArg,
    /// Outlier removal applied before aggregation.
    #[arg(long, global = true, value_enum, default_value_t = OutlierArg::None)]
    outliers: OutlierArg,
    /// Seed for simulation (defaults to the preset's own seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "wattlens-out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    SampleMean,
    Trapezoid,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutlierArg {
    None,
    #[value(name = "iqr1.5")]
    Iqr15,
}

#[derive(Subcommand)]
enum Command {
    /// Per-token energy, phase split and decoding trend for each trace.
    Profile {
        /// Manifest files, or directories holding `*.manifest.json`.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Keep interpolated tokens in the trend fit.
        #[arg(long)]
        include_estimated: bool,
    },
    /// Summarise profile reports per (model, workload).
    Aggregate { report_dir: PathBuf },
    /// Generate synthetic traces with ground truth.
    Simulate {
        /// Bundled preset name or path to a preset JSON file.
        preset: String,
        #[arg(long, default_value_t = 1)]
        count: usize,
    },
    /// Replay a scripted corpus with and without babbling suppression.
    Suppress {
        corpus: PathBuf,
        /// Token budget (max_new_tokens).
        #[arg(long, default_value_t = 300)]
        budget: u64,
        /// every-line or every-k=<k>.
        #[arg(long, default_value = "every-line")]
        cadence: Cadence,
        /// Seconds before a validator run is killed and counted as failed.
        #[arg(long, default_value_t = 5.0)]
        validator_timeout: f64,
        /// Default extraction for tasks that do not set one: raw or fenced-block.
        #[arg(long, default_value = "raw")]
        extraction: CodeExtraction,
        /// Syntax check command; `{code}` becomes the candidate file.
        #[arg(long, num_args = 1.., allow_hyphen_values = true)]
        syntax_cmd: Option<Vec<String>>,
        /// Test command; `{code}` and `{tests}` are substituted.
        #[arg(long, num_args = 1.., allow_hyphen_values = true)]
        test_cmd: Option<Vec<String>>,
    },
}

enum Failure {
    /// Bad input or arguments: exit 2.
    Input(String),
    /// Anything else: exit 1.
    Internal(String),
}

type CmdResult = Result<(), Failure>;

fn internal(e: impl std::fmt::Display) -> Failure {
    Failure::Internal(e.to_string())
}

fn ensure_dir(dir: &Path) -> CmdResult {
    std::fs::create_dir_all(dir).map_err(|e| Failure::Internal(format!("{}: {e}", dir.display())))
}

fn manifest_paths(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, Failure> {
    let mut out = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(input)
                .map_err(|e| Failure::Input(format!("{}: {e}", input.display())))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.to_string_lossy().ends_with(".manifest.json"))
                .collect();
            found.sort();
            out.extend(found);
        } else {
            out.push(input.clone());
        }
    }
    if out.is_empty() {
        return Err(Failure::Input("no manifests found".into()));
    }
    Ok(out)
}

fn cmd_profile(cli: &Cli, inputs: &[PathBuf], include_estimated: bool) -> CmdResult {
    let mode = match cli.mode {
        ModeArg::SampleMean => EnergyMode::SampleMean,
        ModeArg::Trapezoid => EnergyMode::Trapezoid,
    };
    let opts = TrendOptions { include_estimated };
    let paths = manifest_paths(inputs)?;
    ensure_dir(&cli.out)?;
    let results: Vec<Result<PathBuf, String>> = paths
        .par_iter()
        .map(|path| {
            let trace =
                parse_trace(path).map_err(|e| format!("{}: {}: {e}", path.display(), e.kind()))?;
            let profile = profile_trace(&trace, mode, opts)
                .map_err(|e| format!("{}: {e}", path.display()))?;
            write_profile(&profile, &cli.out).map_err(|e| e.to_string())
        })
        .collect();
    let mut failed = 0;
    for r in &results {
        match r {
            Ok(p) => println!("wrote {}", p.display()),
            Err(msg) => {
                failed += 1;
                eprintln!("error: {msg}");
            }
        }
    }
    if failed > 0 {
        return Err(Failure::Input(format!(
            "{failed} of {} traces failed",
            results.len()
        )));
    }
    Ok(())
}

fn cmd_aggregate(cli: &Cli, report_dir: &Path) -> CmdResult {
    let rule = match cli.outliers {
        OutlierArg::None => OutlierRule::None,
        OutlierArg::Iqr15 => OutlierRule::Iqr1_5,
    };
    if !report_dir.is_dir() {
        return Err(Failure::Input(format!(
            "{}: not a directory",
            report_dir.display()
        )));
    }
    let paths = find_reports(report_dir).map_err(|e| Failure::Input(e.to_string()))?;
    if paths.is_empty() {
        return Err(Failure::Input(format!(
            "no reports found in {}",
            report_dir.display()
        )));
    }
    let loaded = paths
        .iter()
        .map(|p| load_report(p))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| Failure::Input(e.to_string()))?;

    let mut budgets = BTreeMap::new();
    for l in &loaded {
        let key = (l.report.model_name.clone(), l.report.workload.clone());
        let b = budgets.entry(key).or_insert(0u64);
        *b = (*b).max(l.report.max_new_tokens);
    }
    let metrics: Vec<_> = loaded.into_iter().map(|l| l.metrics).collect();

    let mut groups = Vec::new();
    let mut problems = Vec::new();
    for (key, result) in aggregate_groups(&metrics, rule) {
        match result {
            Ok(summary) => groups.push(GroupSummary::new(summary, budgets[&key])),
            Err(e @ MetricsError::AllTracesRemoved(_)) => {
                problems.push(format!("{} / {}: {e}", key.0, key.1.label()))
            }
            Err(e) => {
                return Err(Failure::Input(format!(
                    "{} / {}: {e}",
                    key.0,
                    key.1.label()
                )))
            }
        }
    }
    ensure_dir(&cli.out)?;
    let doc = AggregateDocument {
        format_version: REPORT_FORMAT_VERSION,
        outliers: rule,
        groups,
    };
    write_aggregate(&doc, &cli.out).map_err(internal)?;
    println!(
        "wrote {} group summaries to {}",
        doc.groups.len(),
        cli.out.display()
    );
    if !problems.is_empty() {
        for p in &problems {
            eprintln!("error: {p}");
        }
        return Err(Failure::Input(
            "some groups lost every trace to outlier removal".into(),
        ));
    }
    Ok(())
}

fn cmd_simulate(cli: &Cli, preset: &str, count: usize) -> CmdResult {
    let preset = Preset::resolve(preset).map_err(|e| Failure::Input(e.to_string()))?;
    let traces =
        generate_batch(&preset, count, cli.seed).map_err(|e| Failure::Input(e.to_string()))?;
    ensure_dir(&cli.out)?;
    for t in &traces {
        for w in &t.warnings {
            eprintln!("warning: {w}");
        }
    }
    traces
        .par_iter()
        .map(|t| write_trace(&t.trace, &cli.out).map(|_| ()))
        .collect::<Result<(), _>>()
        .map_err(internal)?;
    let truth: Vec<_> = traces.iter().map(|t| &t.truth).collect();
    let mut bytes = serde_json::to_vec_pretty(&truth).map_err(internal)?;
    bytes.push(b'\n');
    let path = cli.out.join("ground_truth.json");
    atomic_write(&path, &bytes).map_err(internal)?;
    println!(
        "wrote {} traces from preset {} to {}",
        traces.len(),
        preset.name,
        cli.out.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_suppress(
    cli: &Cli,
    corpus: &Path,
    budget: u64,
    cadence: Cadence,
    validator_timeout: f64,
    extraction: CodeExtraction,
    syntax_cmd: Option<Vec<String>>,
    test_cmd: Option<Vec<String>>,
) -> CmdResult {
    if !(validator_timeout.is_finite() && validator_timeout > 0.0) {
        return Err(Failure::Input("--validator-timeout must be > 0".into()));
    }
    let timeout = Duration::from_secs_f64(validator_timeout);
    let config = SuppressionConfig {
        max_new_tokens: budget,
        cadence,
        validator_timeout: timeout,
        code_extraction: extraction,
    };
    config
        .validate()
        .map_err(|e| Failure::Input(e.to_string()))?;
    let tasks = load_corpus(corpus).map_err(|e| Failure::Input(e.to_string()))?;

    let syntax = CommandSyntaxValidator(CommandRunner::new(
        syntax_cmd.unwrap_or_else(python_syntax_command),
        timeout,
    ));
    let test_template = test_cmd.unwrap_or_else(python_test_command);
    let evaluation = evaluate_corpus(&tasks, &config, &syntax, |task| {
        CommandTestValidator(
            CommandRunner::new(test_template.clone(), timeout).with_tests(&task.tests_path),
        )
    });

    ensure_dir(&cli.out)?;
    let doc = SuppressionDocument {
        format_version: REPORT_FORMAT_VERSION,
        config: (&config).into(),
        evaluation,
    };
    write_suppression(&doc, &cli.out).map_err(internal)?;
    let a = &doc.evaluation.aggregate;
    println!(
        "{} tasks: mean tokens {:.1} -> {:.1} ({:.1}% reduction), pass rate {:.3} -> {:.3}",
        a.n_tasks,
        a.mean_baseline_tokens,
        a.mean_suppressed_tokens,
        a.reduction_pct,
        a.baseline_pass_rate,
        a.suppressed_pass_rate
    );
    for t in doc.evaluation.tasks.iter().filter(|t| t.error.is_some()) {
        eprintln!(
            "error: task {}: {}",
            t.task_id,
            t.error.as_deref().unwrap_or_default()
        );
    }
    Ok(())
}

fn run(cli: &Cli) -> CmdResult {
    match &cli.command {
        Command::Profile {
            inputs,
            include_estimated,
        } => cmd_profile(cli, inputs, *include_estimated),
        Command::Aggregate { report_dir } => cmd_aggregate(cli, report_dir),
        Command::Simulate { preset, count } => cmd_simulate(cli, preset, *count),
        Command::Suppress {
            corpus,
            budget,
            cadence,
            validator_timeout,
            extraction,
            syntax_cmd,
            test_cmd,
        } => cmd_suppress(
            cli,
            corpus,
            *budget,
            *cadence,
            *validator_timeout,
            *extraction,
            syntax_cmd.clone(),
            test_cmd.clone(),
        ),
    }
}

fn main() -> ExitCode {
    let filter = EnvFilter::try_from_env("WATTLENS_LOG").unwrap_or_else(|_| EnvFilter::new("warn"));
    tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .init();

    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("wattlens: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Internal(msg)) => {
            eprintln!("wattlens: internal error: {msg}");
            ExitCode::from(1)
        }
    }
}
