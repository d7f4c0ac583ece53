//! What each subcommand does, separated from argument parsing.

use std::io::Write;
use std::path::{Path, PathBuf};

use rscore::model::{gen_partition, gen_theta, sample_adjacency, ModelMeans, ModelParams};
use rscore::pipeline::{check_conditions, hamming_error, r_score, rate_grid, RScoreTrace};
use rscore::seed::stage;
use rscore::{AdjacencyMatrix, Partition, Seed};

use crate::config::ExperimentConfig;
use crate::experiment::{run_experiment, summarize, write_outputs, ExperimentOutput};
use crate::plot::{plot_results, read_overlay, PlotKind};
use crate::{io_err, CliError};

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(io_err(path))
}

/// Samples one network from the configured model (first grid point) and
/// writes `adjacency.txt`, `partition.txt`, `theta.csv`, `P.csv` and
/// `conditions.csv` into `out`.
pub fn gen(cfg: &ExperimentConfig, seed: u64, out: &Path) -> Result<(), CliError> {
    cfg.validate()?;
    let model = cfg.model_at(cfg.grid_values()[0])?;
    let seed = Seed::new(seed);
    let part = gen_partition(model.n, &model.sizes()?, model.shuffle, &mut seed.child(stage::PARTITION).rng())?;
    let theta = gen_theta(&model.theta_spec(), model.n, &mut seed.child(stage::THETA).rng())?;
    let params = ModelParams::new(theta, part, model.mixing()?)?;
    let means = ModelMeans::new(&params);
    let a = sample_adjacency(&means.omega, &mut seed.child(stage::ADJACENCY).rng())?;

    create_dir(out)?;
    a.save_edge_list(&out.join("adjacency.txt"))?;
    params.partition().save(&out.join("partition.txt"))?;
    let theta_text: String = params.theta().iter().map(|t| format!("{t}\n")).collect();
    write_file(&out.join("theta.csv"), theta_text)?;
    let mut p = Vec::new();
    rscore::matrix::write_matrix_csv(&mut p, params.mixing()).map_err(io_err(out.join("P.csv")))?;
    write_file(&out.join("P.csv"), p)?;

    let r = check_conditions(&params);
    let mut text = String::from("quantity,value\n");
    for (k, v) in [
        ("balance", r.balance),
        ("theta_lower", r.theta_lower),
        ("theta_upper", r.theta_upper),
        ("theta_spread", r.theta_spread),
        ("eigen_floor", r.eigen_floor),
        ("eigen_floor_violated", f64::from(u8::from(r.eigen_floor_violated))),
        ("gap_ratio", r.gap_ratio),
        ("eigvec_ratio", r.eigvec_ratio),
        ("snr", r.snr),
        ("snr_calibrated", r.snr_calibrated),
        ("nonlinearity", r.nonlinearity),
        ("edges", a.edge_count() as f64),
    ] {
        text.push_str(&format!("{k},{v}\n"));
    }
    write_file(&out.join("conditions.csv"), text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitMethod {
    Score,
    Rscore,
}

#[derive(Debug, Clone)]
pub struct FitArgs {
    pub input: PathBuf,
    pub k: usize,
    pub method: FitMethod,
    pub iterations: Option<usize>,
    pub seed: u64,
    pub truth: Option<PathBuf>,
    pub out: PathBuf,
    /// Algorithm options; defaults when absent.
    pub config: Option<ExperimentConfig>,
}

/// Clusters an edge-list network. Writes `partition.txt` and `trace.csv`,
/// plus the last refit under `fit/` for R-SCORE. Returns the trace.
pub fn fit(args: &FitArgs) -> Result<RScoreTrace, CliError> {
    let a = AdjacencyMatrix::load_edge_list(&args.input)?;
    let truth = match &args.truth {
        Some(p) => Some(Partition::load(p, None)?),
        None => None,
    };
    let mut rc = match &args.config {
        Some(c) => {
            let mut c = c.clone();
            c.model.k = args.k;
            c.rscore_config(Seed::new(args.seed))
        }
        None => {
            let mut rc = rscore::pipeline::RScoreConfig::new(args.k);
            rc.seed = Seed::new(args.seed);
            rc
        }
    };
    if let Some(m) = args.iterations {
        rc.iterations = m;
    }
    if args.method == FitMethod::Score {
        rc.iterations = 0;
    }
    let (part, trace) = r_score(&a, &rc, truth.as_ref())?;
    create_dir(&args.out)?;
    part.save(&args.out.join("partition.txt"))?;
    let mut buf = Vec::new();
    trace.write_csv(&mut buf).map_err(io_err(args.out.join("trace.csv")))?;
    write_file(&args.out.join("trace.csv"), buf)?;
    if let Some(fit) = trace.records.last().and_then(|r| r.fit.as_ref()) {
        fit.save(&args.out.join("fit"))?;
    }
    if let Some(t) = &truth {
        log::info!("final Hamming error {}", hamming_error(&part, t)?);
    }
    Ok(trace)
}

/// Runs an experiment and writes its tables into `out`. Wall-clock times
/// go to `timings.csv` only when `timings` is set, since they differ
/// between runs.
pub fn exp(cfg: &ExperimentConfig, threads: usize, out: &Path, timings: bool) -> Result<ExperimentOutput, CliError> {
    let result = run_experiment(cfg, threads)?;
    write_outputs(out, cfg, &result, timings)?;
    if result.failures > 0 {
        log::warn!("{} replication(s) failed; see the status column", result.failures);
    }
    Ok(result)
}

/// Renders a plot of `input` (a `results.csv`) to `out`.
pub fn plot(input: Option<&Path>, kind: PlotKind, overlay: Option<&Path>, out: &Path) -> Result<(), CliError> {
    let rows = match (kind, input) {
        (PlotKind::RateCurves, _) => Vec::new(),
        (_, Some(p)) => crate::experiment::read_results(p)?,
        (_, None) => return Err(CliError::Config("--input is required for this plot kind".into())),
    };
    let overlay = match overlay {
        Some(p) => read_overlay(p)?,
        None => Vec::new(),
    };
    let svg = plot_results(&rows, kind, &overlay)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_file(out, svg)
}

/// Writes `rates.csv` (beta, a0, a1 on a grid over (0.01, 0.49)) and
/// `rates.svg` into `out`.
pub fn rates(out: &Path, points: usize) -> Result<(), CliError> {
    create_dir(out)?;
    let mut csv = Vec::new();
    writeln!(csv, "beta,a0,a1").expect("in-memory write");
    for (b, a0, a1) in rate_grid(0.01, 0.49, points)? {
        writeln!(csv, "{b},{a0},{a1}").expect("in-memory write");
    }
    write_file(&out.join("rates.csv"), csv)?;
    write_file(&out.join("rates.svg"), plot_results(&[], PlotKind::RateCurves, &[])?)
}

/// Plain-text table of mean errors, for the terminal.
pub fn summary_table(out: &ExperimentOutput) -> String {
    let mut s = String::from("grid      method  iter   mean     se       n\n");
    for r in summarize(&out.rows) {
        let g = r.grid_value.map_or_else(|| "-".to_string(), |v| v.to_string());
        s.push_str(&format!(
            "{g:<9} {:<7} {:>4}   {:.5}  {:.5}  {}\n",
            r.method, r.iteration, r.mean, r.se, r.count
        ));
    }
    s
}
