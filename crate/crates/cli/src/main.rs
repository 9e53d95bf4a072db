use std::path::PathBuf;
use std::process::ExitCode;

use candlenet_cli::error::{CliError, EXIT_OK};
use candlenet_cli::pipeline;
use candlenet_cli::PipelineConfig;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "candlenet", version, about = "Candle-direction forecasting pipeline")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML config file layered over the built-in defaults.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Dotted override, e.g. `--set train.max_epochs=300`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Output sub-directory name; defaults to a prefix of the config hash.
    #[arg(long, global = true)]
    run_id: Option<String>,
    /// Forward-fill missing candles instead of rejecting the series.
    #[arg(long, global = true)]
    fill_gaps: bool,
    /// Raise log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
}

#[derive(Subcommand)]
enum Command {
    /// Validate the candle CSV, or write a synthetic one.
    Ingest {
        /// Generate this many synthetic candles instead of reading data.path.
        #[arg(long)]
        synthetic: Option<usize>,
        /// Destination for --synthetic; defaults to data.path.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Features, denoising, selection, windows and autoencoders.
    Prepare,
    /// Fit the classifier and apply the quality gate.
    Train,
    /// Score the held-out windows for every configured theta.
    Backtest,
    /// Collect training and backtest figures into report.json / report.csv.
    Report,
    /// Every stage in order.
    RunAll,
    /// Print the resolved config.
    ShowConfig,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut overrides = cli.common.overrides;
    if let Some(id) = cli.common.run_id {
        overrides.push(format!("run_id=\"{id}\""));
    }
    if cli.common.fill_gaps {
        overrides.push("data.gaps=\"forward_fill\"".into());
    }
    let cfg = PipelineConfig::load(cli.common.config.as_deref(), &overrides)?;
    let dir = cfg.run_dir();
    match cli.command {
        Command::Ingest { synthetic: Some(n), output } => {
            let path = output.unwrap_or_else(|| cfg.data.path.clone());
            pipeline::write_synthetic(&path, n, cfg.data.timeframe, cfg.seed)?;
            println!("wrote {n} synthetic candles to {}", path.display());
        }
        Command::Ingest { synthetic: None, .. } => {
            let s = pipeline::ingest(&cfg)?;
            println!("{} candles, {} .. {}, run dir {}", s.candles, s.first_timestamp, s.last_timestamp, dir.display());
        }
        Command::Prepare => {
            let s = pipeline::prepare(&cfg)?;
            println!(
                "{} train / {} test windows, channels {:?}, run dir {}",
                s.train_instances,
                s.test_instances,
                s.channels,
                dir.display()
            );
        }
        Command::Train => {
            let s = pipeline::train(&cfg)?;
            print_training(&s);
            pipeline::gate(&s)?;
        }
        Command::Backtest => {
            for r in pipeline::backtest(&cfg)? {
                println!(
                    "theta {:.4}: {} trades, accuracy {:.4}, pnl {:.2}% compounding / {:.2}% profit-saving",
                    r.theta, r.trades, r.accuracy, r.pnl_compounding, r.pnl_profit_saving
                );
            }
        }
        Command::Report => {
            pipeline::report(&cfg)?;
            println!("{}", dir.join(pipeline::REPORT_CSV).display());
        }
        Command::RunAll => {
            let (training, report) = pipeline::run_all(&cfg)?;
            print_training(&training);
            for r in &report.rows {
                println!(
                    "theta {:.4}: {} trades, accuracy {:.4}, pnl {:.2}% compounding / {:.2}% profit-saving",
                    r.theta, r.trades, r.accuracy, r.pnl_compounding, r.pnl_profit_saving
                );
            }
            println!("run dir {}", dir.display());
            pipeline::gate(&training)?;
        }
        Command::ShowConfig => print!("{}", cfg.to_toml()),
    }
    Ok(())
}

fn print_training(s: &pipeline::TrainingSummary) {
    println!(
        "{} after {} epochs: loss {:.5} (base 10), sigma* {:.4}, zeta {}",
        s.verdict, s.epochs, s.loss_10, s.sigma_star, s.zeta
    );
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.common.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::from(EXIT_OK as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
