use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use rscore_cli::commands::{self, FitArgs, FitMethod};
use rscore_cli::config::{preset, ExperimentConfig, PRESETS};
use rscore_cli::plot::PlotKind;
use rscore_cli::CliError;

#[derive(Parser)]
#[command(name = "rscore", version, about = "Simulate logit-DCBM networks and cluster them with SCORE / R-SCORE")]
struct Cli {
    /// Experiment configuration file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (or file for `plot`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads, 0 for all cores.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[arg(long, global = true, value_enum)]
    method: Option<MethodArg>,
    /// Number of refitting passes.
    #[arg(long, global = true)]
    iters: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Score,
    Rscore,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a network and write it with its ground truth.
    Gen {
        #[arg(long)]
        preset: Option<String>,
    },
    /// Cluster an edge-list network.
    Fit {
        /// Edge list with an `n=<count>` header.
        #[arg(long)]
        input: PathBuf,
        /// Number of communities; taken from --config when omitted.
        #[arg(long)]
        k: Option<usize>,
        /// Ground-truth labels, one per line.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Run a configured experiment.
    Exp {
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        replications: Option<usize>,
        /// Also write per-method wall-clock seconds to timings.csv.
        #[arg(long)]
        timings: bool,
    },
    /// Render an SVG from a results table.
    Plot {
        #[arg(long)]
        input: Option<PathBuf>,
        /// error-vs-iteration, error-vs-beta2 or rate-curves.
        #[arg(long)]
        kind: String,
        /// Extra series from a CSV with columns label,x,error.
        #[arg(long)]
        overlay: Option<PathBuf>,
    },
    /// Tabulate and plot the error-rate exponents.
    Rates {
        #[arg(long, default_value_t = 481)]
        points: usize,
    },
    /// Print a built-in configuration as TOML.
    Preset { name: Option<String> },
}

fn load_config(path: Option<&PathBuf>, preset_name: Option<&str>) -> Result<Option<ExperimentConfig>, CliError> {
    match (path, preset_name) {
        (Some(_), Some(_)) => Err(CliError::Config("give either --config or --preset, not both".into())),
        (Some(p), None) => ExperimentConfig::load(p).map(Some),
        (None, Some(name)) => preset(name).map(Some).ok_or_else(|| unknown_preset(name)),
        (None, None) => Ok(None),
    }
}

fn unknown_preset(name: &str) -> CliError {
    CliError::Config(format!("unknown preset {name:?}; available: {}", PRESETS.join(", ")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let out_or = |default: PathBuf| cli.out.clone().unwrap_or(default);
    match &cli.command {
        Command::Gen { preset } => {
            let cfg = load_config(cli.config.as_ref(), preset.as_deref())?
                .ok_or_else(|| CliError::Config("gen needs --config or --preset".into()))?;
            let out = out_or(cfg.output.clone());
            commands::gen(&cfg, cli.seed.unwrap_or(cfg.seed), &out)?;
            println!("wrote {}", out.display());
        }
        Command::Fit { input, k, truth } => {
            let cfg = load_config(cli.config.as_ref(), None)?;
            let k = k
                .or(cfg.as_ref().map(|c| c.model.k))
                .ok_or_else(|| CliError::Config("fit needs --k or --config".into()))?;
            let args = FitArgs {
                input: input.clone(),
                k,
                method: match cli.method {
                    Some(MethodArg::Score) => FitMethod::Score,
                    _ => FitMethod::Rscore,
                },
                iterations: cli.iters,
                seed: cli.seed.or(cfg.as_ref().map(|c| c.seed)).unwrap_or(0),
                truth: truth.clone(),
                out: out_or(PathBuf::from("out/fit")),
                config: cfg,
            };
            let trace = commands::fit(&args)?;
            println!(
                "{} pass(es), stop: {:?}; wrote {}",
                trace.records.len(),
                trace.stop,
                args.out.display()
            );
        }
        Command::Exp {
            preset,
            replications,
            timings,
        } => {
            let mut cfg = load_config(cli.config.as_ref(), preset.as_deref())?
                .ok_or_else(|| CliError::Config("exp needs --config or --preset".into()))?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            if let Some(r) = replications {
                cfg.replications = *r;
            }
            if let Some(m) = cli.iters {
                cfg.algorithm.iterations = m;
            }
            match cli.method {
                Some(MethodArg::Score) => cfg.methods = vec![rscore_cli::config::Method::Score],
                Some(MethodArg::Rscore) => cfg.methods = vec![rscore_cli::config::Method::Rscore],
                None => {}
            }
            if let Some(o) = &cli.out {
                cfg.output = o.clone();
            }
            let result = commands::exp(&cfg, cli.threads, &cfg.output, *timings)?;
            print!("{}", commands::summary_table(&result));
            println!("wrote {}", cfg.output.display());
        }
        Command::Plot { input, kind, overlay } => {
            let kind = PlotKind::parse(kind).ok_or_else(|| {
                CliError::Config(format!("unknown plot kind {kind:?}; available: {}", PlotKind::NAMES.join(", ")))
            })?;
            let out = out_or(PathBuf::from("plot.svg"));
            commands::plot(input.as_deref(), kind, overlay.as_deref(), &out)?;
            println!("wrote {}", out.display());
        }
        Command::Rates { points } => {
            let out = out_or(PathBuf::from("out/rates"));
            commands::rates(&out, *points)?;
            println!("wrote {}", out.display());
        }
        Command::Preset { name } => match name {
            None => println!("{}", PRESETS.join("\n")),
            Some(n) => print!("{}", preset(n).ok_or_else(|| unknown_preset(n))?.to_toml()),
        },
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if cli.threads > 0 {
        // Inner parallel loops (k-means restarts, cycle counts) share the cap.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global();
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
