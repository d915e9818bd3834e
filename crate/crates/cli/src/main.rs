use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::error;
use mtbench_cli::analyze::{self, Analysis};
use mtbench_cli::config::ExperimentConfig;
use mtbench_cli::error::CliError;
use mtbench_cli::pipeline::{read_eval, Context};
use mtbench_core::analysis::DEFAULT_TAU;
use mtbench_core::stats::{compare_lenient, write_comparisons};

#[derive(Parser)]
#[command(name = "mtbench", version, about = "Multitask QSAR benchmarking experiments")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Run directory; overrides the config `out`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic collection as task CSVs.
    Synth(RunArgs),
    /// Compute fingerprints.
    Featurize(RunArgs),
    /// Split every task and write the assignments.
    Split(RunArgs),
    /// Train every configured model on every split.
    Train(RunArgs),
    /// Evaluate trained models on their test sets.
    Eval(RunArgs),
    /// Every stage, then the configured comparisons.
    Run(RunArgs),
    /// Paired comparison of two evaluation tables.
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value_t = mtbench_core::stats::DEFAULT_ALPHA)]
        alpha: f64,
        /// Directory for `comparison.csv`; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// relatedness, size-benefit or covariate-shift.
    Analyze {
        which: String,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = DEFAULT_TAU)]
        tau: f64,
        /// Models for size-benefit; defaults to the first configured comparison.
        #[arg(long)]
        a: Option<String>,
        #[arg(long)]
        b: Option<String>,
    },
    /// Concatenate comparison tables or run directories into one summary.
    Report {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn context(args: &RunArgs) -> Result<Context, CliError> {
    let mut config = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(out) = &args.out {
        config.out = Some(out.clone());
    }
    let root = config
        .out
        .clone()
        .ok_or_else(|| CliError::Config("no output directory: set `out` or pass --out".into()))?;
    Context::open(config, root)
}

fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Synth(args) => {
            let mut ctx = context(&args)?;
            let c = ctx.collection()?;
            ctx.synth(&c)
        }
        Command::Featurize(args) => {
            let mut ctx = context(&args)?;
            let c = ctx.collection()?;
            ctx.featurize(&c)
        }
        Command::Split(args) => {
            let mut ctx = context(&args)?;
            let c = ctx.collection()?;
            ctx.split(&c).map(|_| ())
        }
        Command::Train(args) => {
            let mut ctx = context(&args)?;
            let c = ctx.collection()?;
            let units = ctx.read_units(&c)?;
            ctx.train(&c, &units)
        }
        Command::Eval(args) => {
            let mut ctx = context(&args)?;
            let c = ctx.collection()?;
            let units = ctx.read_units(&c)?;
            ctx.eval(&c, &units).map(|_| ())
        }
        Command::Run(args) => {
            let mut ctx = context(&args)?;
            for row in ctx.run()? {
                println!(
                    "{} vs {}: median {:+.4}, {}/{}, significant: {}",
                    row.model_a, row.model_b, row.median_delta_auc, row.k, row.n, row.significant
                );
            }
            println!("{}", ctx.root.display());
            Ok(())
        }
        Command::Compare { a, b, alpha, out } => {
            let ra = read_eval(&a, "eval")?;
            let rb = read_eval(&b, "eval")?;
            let row = compare_lenient(&ra, &rb, alpha)?.row();
            match out {
                Some(dir) => {
                    std::fs::create_dir_all(&dir).map_err(CliError::io(&dir))?;
                    let path = dir.join("comparison.csv");
                    let file = std::fs::File::create(&path).map_err(CliError::io(&path))?;
                    write_comparisons(&[row], file)?;
                }
                None => write_comparisons(&[row], std::io::stdout().lock())?,
            }
            Ok(())
        }
        Command::Analyze { which, run, tau, a, b } => {
            let which: Analysis = which.parse()?;
            let mut ctx = context(&run)?;
            match which {
                Analysis::Relatedness => {
                    let c = ctx.collection()?;
                    analyze::run_relatedness(&mut ctx, &c, tau).map(|_| ())
                }
                Analysis::CovariateShift => {
                    let c = ctx.collection()?;
                    analyze::run_covariate_shift(&mut ctx, &c).map(|_| ())
                }
                Analysis::SizeBenefit => {
                    let (a, b) = match (a, b) {
                        (Some(a), Some(b)) => (a, b),
                        (None, None) => ctx
                            .config
                            .comparison_pairs()
                            .into_iter()
                            .next()
                            .ok_or_else(|| CliError::Config("size-benefit needs two models".into()))?,
                        _ => return Err(CliError::Config("pass both --a and --b".into())),
                    };
                    analyze::run_size_benefit(&mut ctx, &a, &b).map(|_| ())
                }
            }
        }
        Command::Report { inputs, out } => analyze::report(&inputs, &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            error!("{e}");
            return ExitCode::from(mtbench_cli::error::EXIT_CONFIG as u8);
        }
    }
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
