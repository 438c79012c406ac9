//! `enscore` — evaluate the reliability of prompt-ensemble binary
//! classifier scores from JSONL probability artifacts.
//!
//! Exit codes: 0 success, 1 validation error (bad input or config),
//! 2 computation error.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use enscore::aggregate::{aggregate_transductive, AggregationRule};
use enscore::synth::{generate, SynthConfig};
use enscore::{parse_scores_jsonl, PromptScoreMatrix, Split};

use enscore_cli::config::{RunConfig, Stages};
use enscore_cli::emit::{emit_bundle, render_table, Format};
use enscore_cli::report::{self, run_pipeline, ReportBundle};
use enscore_cli::table::Table;

#[derive(Parser)]
#[command(name = "enscore", version, about = "Reliability evaluation for prompt-ensemble classifier scores")]
struct Cli {
    /// JSON run configuration (protocol constants, stage toggles).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Input JSONL score artifact(s); one file per dataset-model pair.
    #[arg(long = "input", global = true)]
    inputs: Vec<PathBuf>,

    /// Output directory for reports and artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Master seed override (bootstrap, random baseline, synth).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Restrict every input to one prompt family (A|B|C) after parsing.
    #[arg(long, global = true)]
    family: Option<String>,

    /// Table output format.
    #[arg(long, global = true, default_value = "csv")]
    format: String,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate score artifacts, printing a shape summary.
    Validate,
    /// Generate a synthetic score artifact with controlled prompt corruption.
    Synth {
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 15)]
        k: usize,
        #[arg(long, default_value_t = 1.0)]
        latent_std: f64,
        #[arg(long, default_value_t = 1.0)]
        bias_std: f64,
        #[arg(long, default_value_t = 0.5)]
        scale_lo: f64,
        #[arg(long, default_value_t = 2.0)]
        scale_hi: f64,
        #[arg(long, default_value_t = 0.5)]
        noise_std: f64,
        /// Fraction of samples tagged train (head of the file, half-up).
        #[arg(long, default_value_t = 0.5)]
        train_frac: f64,
        /// Output file name (written under --out, default "synth.jsonl").
        #[arg(long, default_value = "synth.jsonl")]
        name: String,
    },
    /// Apply aggregation rules and export per-sample scores.
    Aggregate {
        /// Rule name (e.g. mean_prob, bias_scale_shrink_0.25) or "all".
        #[arg(long, default_value = "all")]
        rule: String,
        /// Evaluation split: auto|train|test|external.
        #[arg(long, default_value = "auto")]
        split: String,
    },
    /// Compute the metric bundle for every method on the eval split.
    Metrics {
        /// Restrict the table to one method name.
        #[arg(long)]
        method: Option<String>,
    },
    /// Run the locked single-prompt selection protocol on the train split.
    Select,
    /// Fit labeled calibrators on train and score them on the eval split.
    Calibrate,
    /// Sweep the training-free aggregation rules and tabulate NLL wins.
    Sweep,
    /// Risk-coverage curves and AURC summaries for the uncertainty signals.
    Selective,
    /// Bootstrap CI of the mean-vs-selected metric delta.
    Bootstrap {
        /// Resample count override.
        #[arg(long, short = 'B')]
        resamples: Option<usize>,
    },
    /// Prevalence-reweighted bootstrap stress test.
    Prevalence,
    /// Run the full protocol end to end and emit the report bundle.
    Run,
    /// Re-render tables from a previously emitted bundle.json.
    Report {
        /// Path to bundle.json.
        #[arg(long)]
        bundle: PathBuf,
    },
}

enum CliError {
    Validation(String),
    Computation(String),
}

impl From<enscore::Error> for CliError {
    fn from(e: enscore::Error) -> Self {
        if e.is_validation() {
            CliError::Validation(e.to_string())
        } else {
            CliError::Computation(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Validation(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(msg)) => {
            eprintln!("validation error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Computation(msg)) => {
            eprintln!("computation error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn load_config(cli: &Cli) -> CliResult<RunConfig> {
    let mut config: RunConfig = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.protocol.bootstrap_seed = seed;
        config.random_baseline_seed = seed;
    }
    config.validate()?;
    Ok(config)
}

fn load_inputs(cli: &Cli) -> CliResult<Vec<(String, PromptScoreMatrix)>> {
    if cli.inputs.is_empty() {
        return Err(CliError::Validation(
            "at least one --input artifact is required".into(),
        ));
    }
    let family = cli
        .family
        .as_deref()
        .map(|f| f.parse::<enscore::PromptFamily>())
        .transpose()?;
    let mut out = Vec::new();
    for path in &cli.inputs {
        let file = fs::File::open(path)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        let mut matrix = parse_scores_jsonl(BufReader::new(file))
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        if let Some(f) = family {
            matrix = matrix
                .restrict_family(f)
                .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        }
        out.push((file_stem(path), matrix));
    }
    Ok(out)
}

fn file_stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| "input".to_string(), |s| s.to_string_lossy().to_string())
}

fn parse_format(cli: &Cli) -> CliResult<Format> {
    Ok(cli.format.parse::<Format>()?)
}

/// Print one table to stdout in the requested format.
fn print_table(table: &Table, format: Format) {
    print!("{}", render_table(table, format));
}

/// Run the pipeline with a stage mask and return the bundle.
fn pipeline_with(cli: &Cli, stages: Stages) -> CliResult<ReportBundle> {
    let mut config = load_config(cli)?;
    config.stages = stages;
    let inputs = load_inputs(cli)?;
    let output = run_pipeline(inputs, &config)?;
    Ok(output.bundle)
}

/// Surface error gaps from the stages a subcommand asked for. A gap caused
/// by a computation failure outranks input-shape problems in the exit code.
fn fail_on_gaps(bundle: &ReportBundle, stages: &[&str]) -> CliResult<()> {
    let bad: Vec<&enscore_cli::report::StageGap> = bundle
        .metadata
        .gaps
        .iter()
        .filter(|g| g.error && stages.contains(&g.stage.as_str()))
        .collect();
    if bad.is_empty() {
        return Ok(());
    }
    let msg = bad
        .iter()
        .map(|g| format!("[{}] {}", g.stage, g.reason))
        .collect::<Vec<_>>()
        .join("; ");
    if bad.iter().all(|g| g.validation) {
        Err(CliError::Validation(msg))
    } else {
        Err(CliError::Computation(msg))
    }
}

fn print_tables(bundle: &ReportBundle, names: &[&str], format: Format) {
    for name in names {
        if let Some(t) = bundle.table(name) {
            if !t.rows.is_empty() {
                print_table(t, format);
            }
        }
    }
}

fn dispatch(cli: &Cli) -> CliResult<()> {
    let format = parse_format(cli)?;
    match &cli.command {
        Command::Validate => {
            let inputs = load_inputs(cli)?;
            for (model, m) in &inputs {
                let count = |s: Split| m.splits().iter().filter(|x| **x == s).count();
                let unsafe_rate = m.labels().iter().filter(|l| l.is_unsafe()).count() as f64
                    / m.n_samples() as f64;
                println!(
                    "ok {model}: N={} K={} train={} test={} external={} unsafe_rate={:.4}",
                    m.n_samples(),
                    m.n_prompts(),
                    count(Split::Train),
                    count(Split::Test),
                    count(Split::External),
                    unsafe_rate
                );
            }
            Ok(())
        }

        Command::Synth {
            n,
            k,
            latent_std,
            bias_std,
            scale_lo,
            scale_hi,
            noise_std,
            train_frac,
            name,
        } => {
            let seed = cli.seed.unwrap_or(42);
            let matrix = generate(&SynthConfig {
                n_samples: *n,
                k_prompts: *k,
                latent_logit_std: *latent_std,
                per_prompt_bias_std: *bias_std,
                per_prompt_scale_range: (*scale_lo, *scale_hi),
                noise_std: *noise_std,
                seed,
            })?
            .retag_splits(*train_frac)?;
            let out_dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
            fs::create_dir_all(&out_dir)?;
            let path = out_dir.join(name);
            fs::write(&path, matrix.to_jsonl_string()?)?;
            println!(
                "wrote {} (N={n}, K={k}, seed={seed}, train_frac={train_frac})",
                path.display()
            );
            Ok(())
        }

        Command::Aggregate { rule, split } => {
            let config = load_config(cli)?;
            let inputs = load_inputs(cli)?;
            let rules: Vec<AggregationRule> = if rule == "all" {
                AggregationRule::standard_sweep(
                    config.protocol.trim_fraction,
                    &config.protocol.shrink_alphas,
                )
            } else {
                vec![rule.parse::<AggregationRule>()?]
            };
            let mut t = Table::new(
                "aggregate_scores",
                &["dataset", "model", "sample_id", "method", "score"],
            );
            for (model, matrix) in &inputs {
                let view = report::eval_view(matrix, split)?;
                let dataset = view.datasets().first().cloned().unwrap_or_default();
                for r in &rules {
                    let scores = aggregate_transductive(&view, r, config.protocol.epsilon)?;
                    for (i, &s) in scores.iter().enumerate() {
                        t.push(vec![
                            dataset.as_str().into(),
                            model.as_str().into(),
                            view.sample_ids()[i].as_str().into(),
                            r.to_string().into(),
                            s.into(),
                        ]);
                    }
                }
            }
            write_or_print(cli, &t, format)
        }

        Command::Metrics { method } => {
            let stages = Stages {
                fragility: false,
                sweep: false,
                topk: false,
                selective: false,
                bootstrap: false,
                prevalence: false,
                ..Stages::default()
            };
            let bundle = pipeline_with(cli, stages)?;
            let main = bundle.table("main_comparison").expect("pipeline always emits it");
            let filtered = match method {
                None => main.clone(),
                Some(m) => Table {
                    name: main.name.clone(),
                    columns: main.columns.clone(),
                    rows: main
                        .rows
                        .iter()
                        .filter(|r| r[2].render() == *m)
                        .cloned()
                        .collect(),
                },
            };
            print_table(&filtered, format);
            fail_on_gaps(&bundle, &["select", "aggregate", "calibrate"])
        }

        Command::Select => {
            let stages = Stages {
                aggregate: false,
                calibrate: false,
                fragility: false,
                sweep: false,
                topk: false,
                selective: false,
                bootstrap: false,
                prevalence: false,
                ..Stages::default()
            };
            let bundle = pipeline_with(cli, stages)?;
            print_tables(&bundle, &["selection"], format);
            fail_on_gaps(&bundle, &["select"])
        }

        Command::Calibrate => {
            let stages = Stages {
                fragility: false,
                sweep: false,
                topk: false,
                selective: false,
                bootstrap: false,
                prevalence: false,
                ..Stages::default()
            };
            let bundle = pipeline_with(cli, stages)?;
            print_tables(&bundle, &["calibrators", "calibration_head_to_head"], format);
            fail_on_gaps(&bundle, &["select", "calibrate"])
        }

        Command::Sweep => {
            let stages = Stages {
                select: false,
                calibrate: false,
                fragility: false,
                topk: false,
                selective: false,
                bootstrap: false,
                prevalence: false,
                ..Stages::default()
            };
            let bundle = pipeline_with(cli, stages)?;
            print_tables(&bundle, &["sweep_wins"], format);
            fail_on_gaps(&bundle, &["sweep"])
        }

        Command::Selective => {
            let stages = Stages {
                calibrate: false,
                fragility: false,
                sweep: false,
                topk: false,
                bootstrap: false,
                prevalence: false,
                ..Stages::default()
            };
            let bundle = pipeline_with(cli, stages)?;
            print_tables(&bundle, &["selective_values", "selective_wins"], format);
            fail_on_gaps(&bundle, &["selective"])
        }

        Command::Bootstrap { resamples } => {
            let mut config = load_config(cli)?;
            if let Some(b) = resamples {
                config.protocol.bootstrap_b = *b;
            }
            config.stages = Stages {
                calibrate: false,
                fragility: false,
                sweep: false,
                topk: false,
                selective: false,
                prevalence: false,
                ..Stages::default()
            };
            let inputs = load_inputs(cli)?;
            let bundle = run_pipeline(inputs, &config)?.bundle;
            print_tables(&bundle, &["bootstrap_ci"], format);
            fail_on_gaps(&bundle, &["select", "bootstrap"])
        }

        Command::Prevalence => {
            let stages = Stages {
                calibrate: false,
                fragility: false,
                sweep: false,
                topk: false,
                selective: false,
                bootstrap: false,
                ..Stages::default()
            };
            let bundle = pipeline_with(cli, stages)?;
            print_tables(&bundle, &["prevalence_stress"], format);
            fail_on_gaps(&bundle, &["select", "prevalence"])
        }

        Command::Run => {
            let config = load_config(cli)?;
            let inputs = load_inputs(cli)?;
            let bundle = run_pipeline(inputs, &config)?.bundle;
            let out = cli
                .out
                .clone()
                .ok_or_else(|| CliError::Validation("run requires --out <dir>".into()))?;
            let written = emit_bundle(&bundle, &out, format)?;
            for path in &written {
                println!("wrote {}", path.display());
            }
            for gap in &bundle.metadata.gaps {
                if gap.error {
                    eprintln!("gap [{}]: {}", gap.stage, gap.reason);
                }
            }
            if bundle.has_error_gaps() {
                let stage_names: Vec<&str> = bundle
                    .metadata
                    .gaps
                    .iter()
                    .filter(|g| g.error)
                    .map(|g| g.stage.as_str())
                    .collect();
                let msg = format!("run completed with gaps in stages: {}", stage_names.join(", "));
                return if bundle.metadata.gaps.iter().filter(|g| g.error).all(|g| g.validation) {
                    Err(CliError::Validation(msg))
                } else {
                    Err(CliError::Computation(msg))
                };
            }
            Ok(())
        }

        Command::Report { bundle } => {
            let text = fs::read_to_string(bundle)?;
            let parsed: ReportBundle = serde_json::from_str(&text)
                .map_err(|e| CliError::Validation(format!("{}: {e}", bundle.display())))?;
            match &cli.out {
                Some(out) => {
                    let written = emit_bundle(&parsed, out, format)?;
                    for path in &written {
                        println!("wrote {}", path.display());
                    }
                }
                None => {
                    for t in &parsed.tables {
                        print_table(t, format);
                    }
                }
            }
            Ok(())
        }
    }
}

fn write_or_print(cli: &Cli, table: &Table, format: Format) -> CliResult<()> {
    match &cli.out {
        Some(out) => {
            fs::create_dir_all(out)?;
            let ext = match format {
                Format::Csv => "csv",
                Format::Json => "json",
                Format::Md => "md",
            };
            let path = out.join(format!("{}.{ext}", table.name));
            fs::write(&path, render_table(table, format))?;
            println!("wrote {}", path.display());
        }
        None => print_table(table, format),
    }
    Ok(())
}
