use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fde_cli::{run, ExperimentConfig, ExperimentKind, RunReport, EXIT_CONFIG};

#[derive(Parser)]
#[command(name = "fdegrowth", about = "Growth-rate experiments for delay equations with a distributed delay")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for sweeps.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Replace a config value, e.g. `--override nonlinearity.alpha=2`.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by the config.
    Run(Common),
    /// Run the cross product of the `[sweep]` parameter ranges.
    Sweep(Common),
    /// Classify lambda and check the regular variation of f' only.
    CheckF(Common),
    /// Print the tool version.
    Version,
}

fn execute(common: &Common, force: Option<ExperimentKind>) -> i32 {
    let mut cfg = match ExperimentConfig::load(&common.config, &common.overrides) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    if let Some(kind) = force {
        cfg.kind = kind;
    }
    let out = common
        .out
        .clone()
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("fdegrowth-out"));
    let report = run(&cfg, &out, common.jobs);
    summarize(&report, &out);
    report.exit_code
}

fn summarize(report: &RunReport, out: &std::path::Path) {
    if let Some(e) = &report.error {
        eprintln!("error: {e}");
    }
    for v in &report.verdicts {
        println!(
            "{:<20} {:<22} predicted {:<12.6} estimated {:<12.6} deviation {:<10.3e} {}",
            v.check,
            v.regime,
            v.predicted,
            v.estimated,
            v.deviation,
            v.outcome.to_string().to_uppercase()
        );
    }
    for row in &report.sweep {
        println!(
            "run {:>3} alpha {:<6} measure {:<4} {:<22} predicted {:<12.6} estimated {:<12.6} {}",
            row.run,
            row.alpha.map_or("-".to_owned(), |a| a.to_string()),
            row.measure.map_or("-".to_owned(), |m| m.to_string()),
            row.regime,
            row.predicted,
            row.estimated,
            row.outcome
        );
    }
    println!("report: {}", out.join(fde_cli::report::REPORT_FILE).display());
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match &cli.command {
        Command::Run(c) => execute(c, None),
        Command::Sweep(c) => execute(c, Some(ExperimentKind::Sweep)),
        Command::CheckF(c) => execute(c, Some(ExperimentKind::FDiagnostics)),
        Command::Version => {
            println!("fdegrowth {}", env!("CARGO_PKG_VERSION"));
            0
        }
    };
    ExitCode::from(code as u8)
}
