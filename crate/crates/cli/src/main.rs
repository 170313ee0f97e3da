use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use funclearn::eval::Task;
use funclearn_cli::commands;
use funclearn_cli::config::parse_pair;
use funclearn_cli::{CliError, CliResult, Preset, RunConfig};

#[derive(Parser)]
#[command(name = "funclearn", version, about = "Generate curves, train contrastive encoders and evaluate heads")]
struct Cli {
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one config entry; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Scale preset: paper or desk.
    #[arg(long, global = true)]
    preset: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write redraw manifests and curve datasets.
    Gen {
        #[arg(long)]
        redraws: Option<usize>,
        #[arg(long)]
        per_class: Option<usize>,
    },
    /// Train one encoder per seed.
    Train {
        #[arg(long)]
        seeds: Option<usize>,
        #[arg(long)]
        curves: Option<usize>,
    },
    /// Evaluate a task (classify, mc, freeform or all).
    Eval { task: String },
    /// Render figures and text tables from eval outputs.
    Report,
    /// Augmentation tools.
    Augment {
        #[command(subcommand)]
        action: AugmentAction,
    },
}

#[derive(Subcommand)]
enum AugmentAction {
    /// Write one positive pair as CSV and SVG.
    Preview,
}

fn flag(out: &mut Vec<(String, String)>, key: &str, value: Option<usize>) {
    if let Some(v) = value {
        out.push((key.to_string(), v.to_string()));
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let mut overrides = cli.set.iter().map(|s| parse_pair(s)).collect::<CliResult<Vec<_>>>()?;
    match &cli.command {
        Command::Gen { redraws, per_class } => {
            flag(&mut overrides, "redraws", *redraws);
            flag(&mut overrides, "per_class", *per_class);
        }
        Command::Train { seeds, curves } => {
            flag(&mut overrides, "seeds", *seeds);
            flag(&mut overrides, "curves", *curves);
        }
        _ => {}
    }
    let preset = cli.preset.as_deref().map(str::parse::<Preset>).transpose()?;
    let cfg = RunConfig::resolve(cli.config.as_deref(), &overrides, preset)?;
    match cli.command {
        Command::Gen { .. } => commands::gen(&cfg),
        Command::Train { .. } => commands::train(&cfg),
        Command::Eval { task } => {
            let tasks = if task == "all" {
                Task::ALL.to_vec()
            } else {
                vec![task.parse().map_err(|_| CliError::BadValue {
                    key: "task".into(),
                    message: format!("expected classify, mc, freeform or all, got `{task}`"),
                })?]
            };
            tasks.into_iter().try_for_each(|t| commands::eval(&cfg, t))
        }
        Command::Report => commands::report(&cfg),
        Command::Augment { action: AugmentAction::Preview } => commands::augment_preview(&cfg),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
