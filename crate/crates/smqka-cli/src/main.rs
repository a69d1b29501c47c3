//! Command-line front end for the protocol simulator.
//!
//! Exit codes: 0 on success, 1 when `--fail-on-abort` is given and half or
//! more of the trials aborted, 2 on configuration or usage errors.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use smqka::analysis::{detection_probability_oracle, monte_carlo, qubit_efficiency, ProtocolLabel};
use smqka::config::{parse_config, parse_rational, serialize_config, ScenarioConfig};
use smqka::qubit::Basis;
use smqka::report::ReportDocument;

#[derive(Parser)]
#[command(
    name = "smqka",
    version,
    about = "Simulator and cryptanalysis toolkit for a single-particle ring key agreement protocol"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file and report per-trial and aggregate results
    Run(RunArgs),
    /// Re-run a scenario while varying one parameter over a list of values
    Sweep(SweepArgs),
    /// Print exact qubit efficiency figures for both protocol variants
    Efficiency(EfficiencyArgs),
    /// Print the exact per-decoy detection probabilities for channel taps
    Oracle,
}

#[derive(Args)]
struct OutputArgs {
    /// Write the report here instead of stdout; SMQKA_OUT_DIR prefixes
    /// relative paths
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output format
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Exit with status 1 when half or more of the trials abort
    #[arg(long)]
    fail_on_abort: bool,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file to run
    #[arg(long)]
    scenario: PathBuf,
    /// Override the trial count from the scenario file
    #[arg(long)]
    trials: Option<u64>,
    /// Override the master seed from the scenario file
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct SweepArgs {
    /// Scenario file to start from
    #[arg(long)]
    scenario: PathBuf,
    /// Parameter to vary
    #[arg(long, value_enum)]
    param: SweepParam,
    /// Comma-separated values for the swept parameter
    #[arg(long)]
    values: String,
    /// Override the trial count from the scenario file
    #[arg(long)]
    trials: Option<u64>,
    /// Override the master seed from the scenario file
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepParam {
    /// Ring size
    #[value(name = "N")]
    Participants,
    /// Decoys per data particle
    K,
}

#[derive(Args)]
struct EfficiencyArgs {
    /// Ring size
    #[arg(long = "N")]
    participants: usize,
    /// Decoys per data particle, as an integer, fraction or decimal
    #[arg(long)]
    k: String,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    /// Fixed-width summary tables
    Text,
    /// Line-delimited JSON records
    Records,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, String> {
    match cli.command {
        Command::Run(args) => run_command(args),
        Command::Sweep(args) => sweep_command(args),
        Command::Efficiency(args) => efficiency_command(args),
        Command::Oracle => oracle_command(),
    }
}

fn load_scenario(
    path: &Path,
    trials: Option<u64>,
    seed: Option<u64>,
) -> Result<ScenarioConfig, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|err| format!("cannot read scenario file {}: {err}", path.display()))?;
    let mut config = parse_config(&text).map_err(|err| format!("{}: {err}", path.display()))?;
    if let Some(trials) = trials {
        config.trials = trials;
    }
    if let Some(seed) = seed {
        config.seed = seed;
    }
    config
        .validate()
        .map_err(|err| format!("{}: {err}", path.display()))?;
    Ok(config)
}

fn run_command(args: RunArgs) -> Result<ExitCode, String> {
    let config = load_scenario(&args.scenario, args.trials, args.seed)?;
    let run = monte_carlo(&config, config.trials, config.seed).map_err(|err| err.to_string())?;
    let document = ReportDocument::from_run(&config, &run);
    let rendered = match args.output.format {
        Format::Text => render_run_text(&document),
        Format::Records => document.to_records(),
    };
    emit(&args.output, &rendered)?;
    Ok(exit_code(
        &args.output,
        document.aggregate.abort_rate >= 0.5,
    ))
}

fn sweep_command(args: SweepArgs) -> Result<ExitCode, String> {
    let base = load_scenario(&args.scenario, args.trials, args.seed)?;
    let mut documents = Vec::new();
    match args.param {
        SweepParam::Participants => {
            for value in split_values(&args.values)? {
                let participants: usize = value
                    .parse()
                    .map_err(|err| format!("invalid N value {value:?}: {err}"))?;
                let mut config = base.clone();
                config.participants = participants;
                documents.push(sweep_point(config)?);
            }
        }
        SweepParam::K => {
            for value in split_values(&args.values)? {
                let k = parse_rational(&value)
                    .map_err(|err| format!("invalid k value {value:?}: {err}"))?;
                let mut config = base.clone();
                config.k = k;
                documents.push(sweep_point(config)?);
            }
        }
    }
    let rendered = match args.output.format {
        Format::Text => render_sweep_text(args.param, &documents),
        Format::Records => documents.iter().map(ReportDocument::to_records).collect(),
    };
    emit(&args.output, &rendered)?;
    let abort_dominated = documents
        .iter()
        .any(|document| document.aggregate.abort_rate >= 0.5);
    Ok(exit_code(&args.output, abort_dominated))
}

/// One swept configuration, aggregated only: per-trial digests are dropped
/// so a sweep stays readable.
fn sweep_point(config: ScenarioConfig) -> Result<ReportDocument, String> {
    config.validate().map_err(|err| err.to_string())?;
    let run = monte_carlo(&config, config.trials, config.seed).map_err(|err| err.to_string())?;
    let mut document = ReportDocument::from_run(&config, &run);
    document.trials.clear();
    Ok(document)
}

fn efficiency_command(args: EfficiencyArgs) -> Result<ExitCode, String> {
    let k = parse_rational(&args.k).map_err(|err| format!("invalid k: {err}"))?;
    let figures = [ProtocolLabel::Smqka, ProtocolLabel::LiuMqka]
        .into_iter()
        .map(|label| qubit_efficiency(label, args.participants, k))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|err| err.to_string())?;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<10} {:>4} {:>6} {:>12}",
        "protocol", "N", "k", "efficiency"
    );
    for figure in &figures {
        let _ = writeln!(
            out,
            "{:<10} {:>4} {:>6} {:>12}",
            figure.label.to_string(),
            figure.participants,
            figure.k.to_string(),
            figure.value.to_string()
        );
    }
    let _ = writeln!(
        out,
        "gain over the pairwise baseline: {}",
        figures[0].value / figures[1].value
    );
    print!("{out}");
    Ok(ExitCode::SUCCESS)
}

fn oracle_command() -> Result<ExitCode, String> {
    let mut out = String::new();
    let _ = writeln!(out, "{:<6} {:<4} {:>12}", "decoy", "tap", "p(error)");
    for decoy in Basis::DECOY {
        for tap in [Basis::Z, Basis::X, Basis::Y] {
            let probability = detection_probability_oracle(decoy, tap);
            let _ = writeln!(
                out,
                "{:<6} {:<4} {:>12.4}",
                decoy.to_string(),
                tap.to_string(),
                probability
            );
        }
    }
    print!("{out}");
    Ok(ExitCode::SUCCESS)
}

fn split_values(values: &str) -> Result<Vec<String>, String> {
    let parts: Vec<String> = values
        .split(',')
        .map(|part| part.trim().to_string())
        .filter(|part| !part.is_empty())
        .collect();
    if parts.is_empty() {
        return Err("no values to sweep over".into());
    }
    Ok(parts)
}

fn render_run_text(document: &ReportDocument) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "scenario");
    for line in serialize_config(&document.config).lines() {
        let _ = writeln!(out, "  {line}");
    }
    let _ = writeln!(out);
    let aggregate = &document.aggregate;
    let _ = writeln!(out, "{:<22} {:>12}", "metric", "value");
    let _ = writeln!(out, "{:<22} {:>12}", "trials", aggregate.trials);
    for (name, value) in [
        ("correctness_rate", aggregate.correctness_rate),
        ("attack_success_rate", aggregate.attack_success_rate),
        ("abort_rate", aggregate.abort_rate),
        ("mean_error_rate", aggregate.mean_error_rate),
        ("confidence_halfwidth", aggregate.confidence_halfwidth),
    ] {
        let _ = writeln!(out, "{:<22} {:>12.6}", name, value);
    }
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "{:<10} {:>4} {:>6} {:>12}",
        "protocol", "N", "k", "efficiency"
    );
    for figure in &document.efficiency {
        let _ = writeln!(
            out,
            "{:<10} {:>4} {:>6} {:>12}",
            figure.label.to_string(),
            figure.participants,
            figure.k.to_string(),
            figure.value.to_string()
        );
    }
    out
}

fn render_sweep_text(param: SweepParam, documents: &[ReportDocument]) -> String {
    let mut out = String::new();
    let name = match param {
        SweepParam::Participants => "N",
        SweepParam::K => "k",
    };
    let _ = writeln!(
        out,
        "{:<8} {:>8} {:>12} {:>12} {:>12} {:>12}",
        name, "trials", "correct", "attack_ok", "abort", "mean_err"
    );
    for document in documents {
        let value = match param {
            SweepParam::Participants => document.config.participants.to_string(),
            SweepParam::K => document.config.k.to_string(),
        };
        let aggregate = &document.aggregate;
        let _ = writeln!(
            out,
            "{:<8} {:>8} {:>12.4} {:>12.4} {:>12.4} {:>12.4}",
            value,
            aggregate.trials,
            aggregate.correctness_rate,
            aggregate.attack_success_rate,
            aggregate.abort_rate,
            aggregate.mean_error_rate
        );
    }
    out
}

fn emit(output: &OutputArgs, rendered: &str) -> Result<(), String> {
    match &output.out {
        None => {
            print!("{rendered}");
            Ok(())
        }
        Some(path) => {
            let resolved = resolve_out_path(path);
            if let Some(parent) = resolved.parent() {
                if !parent.as_os_str().is_empty() {
                    std::fs::create_dir_all(parent).map_err(|err| {
                        format!("cannot create output directory {}: {err}", parent.display())
                    })?;
                }
            }
            std::fs::write(&resolved, rendered)
                .map_err(|err| format!("cannot write {}: {err}", resolved.display()))?;
            eprintln!("wrote {}", resolved.display());
            Ok(())
        }
    }
}

fn resolve_out_path(path: &Path) -> PathBuf {
    if path.is_absolute() {
        return path.to_path_buf();
    }
    match std::env::var_os("SMQKA_OUT_DIR") {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir).join(path),
        _ => path.to_path_buf(),
    }
}

fn exit_code(output: &OutputArgs, abort_dominated: bool) -> ExitCode {
    if output.fail_on_abort && abort_dominated {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    }
}
