use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};

use straddle_core::config::ExperimentConfig;
use straddle_core::prequential::read_results_jsonl;
use straddle_core::runner::{self, AppError, Overrides};
use straddle_core::synth::{write_market_csv, SynthConfig};
use straddle_core::timeline::{mark, read_probabilities, timeline_csv, timeline_from_results};

#[derive(Parser)]
#[command(name = "straddle", version, about = "Prequential evaluation of short-straddle trade classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to the config's output_dir or runs/<name>.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated model ids to keep.
    #[arg(long, value_delimiter = ',')]
    models: Option<Vec<String>>,
    /// Cutoff date for the "since" summary table.
    #[arg(long)]
    since: Option<NaiveDate>,
    /// Cap on ensemble sizes (forest, boosting).
    #[arg(long)]
    max_estimators: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Train, evaluate and write all reports.
    Run(RunArgs),
    /// Print the split plan without training.
    DryRun(RunArgs),
    /// Weekly trade/no-trade timeline.
    Timeline {
        /// Run directory containing results.jsonl.
        #[arg(long, conflicts_with = "probabilities")]
        run: Option<PathBuf>,
        /// CSV of label,probability rows, marked in order.
        #[arg(long)]
        probabilities: Option<PathBuf>,
        #[arg(long, default_value = "RF")]
        model: String,
        #[arg(long, default_value = "2019-03-01")]
        from: NaiveDate,
        #[arg(long, default_value = "2020-02-28")]
        to: NaiveDate,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic market and write it as CSV files.
    Synth {
        /// Optional TOML file with synthetic-market settings.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn load(args: &RunArgs) -> Result<ExperimentConfig, AppError> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    runner::apply_overrides(
        &mut cfg,
        &Overrides {
            out: args.out.clone(),
            seed: args.seed,
            models: args.models.clone(),
            since: args.since,
            max_estimators: args.max_estimators,
        },
    )?;
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<(), AppError> {
    match cli.command {
        Command::Run(args) => {
            let cfg = load(&args)?;
            let out = runner::output_dir(&cfg);
            let report = runner::run(&cfg, &out)?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            println!(
                "{}: {} iterations, {} models, results in {}",
                report.name,
                report.iterations.len(),
                report.aggregate.models.len(),
                out.display()
            );
        }
        Command::DryRun(args) => {
            let cfg = load(&args)?;
            let plan = runner::dry_run(&cfg)?;
            for w in &plan.warnings {
                eprintln!("warning: {w}");
            }
            println!("{}: {} samples, {} iterations", plan.name, plan.n_samples, plan.iterations.len());
            println!("iteration,train_start,train_end,validation_start,test_start,test_end,n_train,n_validation,n_test");
            for it in &plan.iterations {
                println!(
                    "{},{},{},{},{},{},{},{},{}",
                    it.index,
                    it.train.start,
                    it.train.end,
                    it.validation.start,
                    it.test.start,
                    it.test.end,
                    it.n_train,
                    it.n_validation,
                    it.n_test
                );
            }
        }
        Command::Timeline { run, probabilities, model, from, to, out } => {
            let rows = match (run, probabilities) {
                (Some(dir), None) => {
                    let path = dir.join(runner::RESULTS_FILE);
                    let file = fs::File::open(&path).map_err(|e| AppError::Data(format!("{}: {e}", path.display())))?;
                    let results = read_results_jsonl(std::io::BufReader::new(file))
                        .map_err(|e| AppError::Data(e.to_string()))?;
                    timeline_from_results(&results, &model, from, to).map_err(AppError::Data)?
                }
                (None, Some(path)) => {
                    let file = fs::File::open(&path).map_err(|e| AppError::Data(format!("{}: {e}", path.display())))?;
                    mark(&read_probabilities(file).map_err(AppError::Data)?)
                }
                _ => return Err(AppError::Runtime("timeline needs --run or --probabilities".into())),
            };
            let csv = timeline_csv(&rows);
            match out {
                Some(p) => fs::write(&p, csv).map_err(|e| AppError::Runtime(format!("{}: {e}", p.display())))?,
                None => print!("{csv}"),
            }
        }
        Command::Synth { config, out, seed } => {
            let mut synth = match config {
                Some(p) => {
                    let text = fs::read_to_string(&p)
                        .map_err(|e| AppError::Runtime(format!("{}: {e}", p.display())))?;
                    toml::from_str::<SynthConfig>(&text)
                        .map_err(|e| AppError::Config(straddle_core::config::ConfigError::Parse(e.to_string())))?
                }
                None => SynthConfig::default(),
            };
            if let Some(s) = seed {
                synth.seed = s;
            }
            synth
                .validate()
                .map_err(|e| AppError::Config(straddle_core::config::ConfigError::Parse(e.to_string())))?;
            let market = straddle_core::synth::generate_market(&synth).map_err(|e| AppError::Data(e.to_string()))?;
            fs::create_dir_all(&out).map_err(|e| AppError::Runtime(format!("{}: {e}", out.display())))?;
            write_market_csv(&market, &out).map_err(|e| AppError::Runtime(e.to_string()))?;
            println!("wrote synthetic market to {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
