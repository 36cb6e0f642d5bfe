use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use seqrl_cli::commands::{self, Ctx, Format, Strategy};
use seqrl_cli::{CliError, CliResult, RunConfig};
use seqrl_eval::{Selection, TargetReturn};
use seqrl_models::Arch;

#[derive(Parser)]
#[command(name = "seqrl", version, about = "Offline sequence-model RL lab on a synthetic game suite")]
struct Cli {
    #[command(flatten)]
    source: Source,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Source {
    /// Built-in profile: ci or paper.
    #[arg(long, global = true, conflicts_with = "config")]
    profile: Option<String>,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the game suite, its datasets and normalization anchors.
    GenSuite {
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-game characteristic rows.
    Stats {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        frames: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Offline training of one model.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: String,
        #[arg(long)]
        game: String,
        #[arg(long)]
        context: usize,
        #[arg(long)]
        seed: u64,
        /// Fusion map; the dataset is relabelled before training.
        #[arg(long)]
        map: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Return-conditioned rollouts and normalized scores.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        seed: u64,
        /// auto or a number.
        #[arg(long)]
        target: Option<String>,
        /// sample or argmax.
        #[arg(long)]
        select: Option<String>,
        /// CSV with game,random_score,human_score.
        #[arg(long)]
        baselines: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fusion map and relabelled dataset.
    Fuse {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        game: String,
        /// simple, frequency or file.
        #[arg(long)]
        strategy: String,
        #[arg(long)]
        target: Option<usize>,
        #[arg(long)]
        map: Option<PathBuf>,
        #[arg(long)]
        map_out: PathBuf,
        #[arg(long)]
        data_out: Option<PathBuf>,
    },
    /// Forest, Shapley and correlation analysis of the performance gap.
    Analyze {
        #[arg(long)]
        metrics: PathBuf,
        /// One or more score files.
        #[arg(long, num_args = 1.., required = true)]
        scores: Vec<PathBuf>,
        #[arg(long)]
        trees: Option<usize>,
        #[arg(long)]
        folds: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Regenerate tables and figures from an analysis directory.
    Report {
        #[arg(long)]
        dir: PathBuf,
        /// csv, json or svg.
        #[arg(long)]
        format: String,
    },
    /// Every stage of the configured grid in order.
    Run {
        #[arg(long)]
        out: PathBuf,
    },
}

impl Source {
    fn load(&self) -> CliResult<Option<RunConfig>> {
        match (&self.profile, &self.config) {
            (Some(p), _) => RunConfig::profile(p).map(Some),
            (None, Some(path)) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::config(format!("reading {}: {e}", path.display())))?;
                RunConfig::parse(&text).map(Some)
            }
            (None, None) => Ok(None),
        }
    }
}

fn parse<T: std::str::FromStr>(s: &str) -> CliResult<T>
where
    T::Err: std::fmt::Display,
{
    s.parse::<T>().map_err(|e| CliError::config(e.to_string()))
}

fn execute(cli: Cli) -> CliResult<()> {
    let config = cli.source.load()?;
    if let Command::Report { dir, format } = &cli.command {
        let hash = config.as_ref().map(RunConfig::hash);
        commands::report(dir, parse::<Format>(format)?, hash.as_deref())?;
        return Ok(());
    }
    let ctx = Ctx::new(config.ok_or_else(|| CliError::config("pass --profile or --config"))?);
    let seed = |s: Option<u64>| s.unwrap_or(ctx.config.seed);
    match cli.command {
        Command::GenSuite { out } => {
            commands::gen_suite(&ctx, &out)?;
        }
        Command::Stats { data, frames, seed: s, out } => {
            commands::stats(&ctx, &data, frames.unwrap_or(ctx.config.stats.frames), seed(s), &out)?;
        }
        Command::Train {
            data,
            model,
            game,
            context,
            seed,
            map,
            out,
        } => {
            let arch = parse::<Arch>(&model)?;
            commands::train(
                &ctx,
                &commands::TrainArgs {
                    data,
                    game,
                    arch,
                    context,
                    seed,
                    map,
                    out,
                },
            )?;
        }
        Command::Eval {
            ckpt,
            episodes,
            seed,
            target,
            select,
            baselines,
            out,
        } => {
            let target = target.as_deref().map(parse::<TargetReturn>).transpose()?;
            let selection = select.as_deref().map(parse::<Selection>).transpose()?;
            commands::eval(
                &ctx,
                &commands::EvalArgs {
                    ckpt,
                    episodes,
                    seed,
                    target,
                    selection,
                    baselines,
                    out,
                },
            )?;
        }
        Command::Fuse {
            data,
            game,
            strategy,
            target,
            map,
            map_out,
            data_out,
        } => {
            commands::fuse(
                &ctx,
                &commands::FuseArgs {
                    data,
                    game,
                    strategy: parse::<Strategy>(&strategy)?,
                    target,
                    map,
                    map_out,
                    data_out,
                },
            )?;
        }
        Command::Analyze {
            metrics,
            scores,
            trees,
            folds,
            seed: s,
            out,
        } => {
            commands::analyze(
                &ctx,
                &commands::AnalyzeArgs {
                    metrics,
                    scores,
                    trees,
                    folds,
                    seed: seed(s),
                    out,
                },
            )?;
        }
        Command::Run { out } => commands::run(&ctx, &out)?,
        Command::Report { .. } => unreachable!(),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.line());
            ExitCode::from(e.code() as u8)
        }
    }
}
