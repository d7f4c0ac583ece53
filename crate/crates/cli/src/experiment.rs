//! Seeded replications of an experiment configuration.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use rscore::model::{gen_partition, gen_theta, sample_adjacency, ModelMeans, ModelParams};
use rscore::pipeline::{hamming_error, oracle_score, r_score, StopReason};
use rscore::seed::stage;
use rscore::Seed;

use crate::config::{ExperimentConfig, Method, ModelSpec};
use crate::CliError;

/// One row of `results.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    /// Value of the swept parameter; empty without a grid.
    pub grid_value: Option<f64>,
    pub replication: usize,
    pub seed: u64,
    pub method: String,
    pub iteration: usize,
    pub hamming_error: Option<f64>,
    /// `ok` or `error`.
    pub status: String,
    pub note: String,
}

/// One row of `timings.csv`. Kept apart from the results so those stay
/// reproducible byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub experiment: String,
    pub grid_value: Option<f64>,
    pub replication: usize,
    pub method: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentOutput {
    pub rows: Vec<ResultRow>,
    pub timings: Vec<TimingRow>,
    pub failures: usize,
}

/// Mean and standard error of the error rate for one
/// (grid value, method, iteration) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub grid_value: Option<f64>,
    pub method: String,
    pub iteration: usize,
    pub count: usize,
    pub mean: f64,
    pub se: f64,
}

struct Job {
    grid_index: usize,
    grid_value: Option<f64>,
    replication: usize,
}

/// Seed of replication `rep` at grid point `grid_index`.
pub fn replication_seed(master: u64, grid_index: usize, rep: usize) -> Seed {
    Seed::new(master).path(&[grid_index as u64, rep as u64])
}

/// Runs every replication at every grid point on a pool of `threads`
/// workers (0 = all cores). Rows come back ordered by grid point, then
/// replication, regardless of scheduling.
pub fn run_experiment(cfg: &ExperimentConfig, threads: usize) -> Result<ExperimentOutput, CliError> {
    cfg.validate()?;
    let mut jobs = Vec::new();
    let mut models = Vec::new();
    for (g, v) in cfg.grid_values().into_iter().enumerate() {
        models.push(cfg.model_at(v)?);
        for r in 0..cfg.replications {
            jobs.push(Job {
                grid_index: g,
                grid_value: v,
                replication: r,
            });
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    let parts: Vec<(Vec<ResultRow>, Vec<TimingRow>, bool)> = pool.install(|| {
        jobs.par_iter()
            .map(|job| {
                let seed = replication_seed(cfg.seed, job.grid_index, job.replication);
                let head = |method: &str| ResultRow {
                    experiment: cfg.id.clone(),
                    grid_value: job.grid_value,
                    replication: job.replication,
                    seed: seed.value(),
                    method: method.to_string(),
                    iteration: 0,
                    hamming_error: None,
                    status: "ok".into(),
                    note: String::new(),
                };
                match replicate(cfg, &models[job.grid_index], seed, &head) {
                    Ok((rows, times)) => {
                        let timings = times
                            .into_iter()
                            .map(|(method, seconds)| TimingRow {
                                experiment: cfg.id.clone(),
                                grid_value: job.grid_value,
                                replication: job.replication,
                                method: method.to_string(),
                                seconds,
                            })
                            .collect();
                        (rows, timings, false)
                    }
                    Err(e) => {
                        log::warn!(
                            "{} replication {} (grid {:?}) failed: {e}",
                            cfg.id,
                            job.replication,
                            job.grid_value
                        );
                        let mut row = head("all");
                        row.status = "error".into();
                        row.note = e.to_string();
                        (vec![row], Vec::new(), true)
                    }
                }
            })
            .collect()
    });
    let mut out = ExperimentOutput::default();
    for (rows, timings, failed) in parts {
        out.rows.extend(rows);
        out.timings.extend(timings);
        out.failures += failed as usize;
    }
    Ok(out)
}

type Timings = Vec<(&'static str, f64)>;

fn replicate(
    cfg: &ExperimentConfig,
    model: &ModelSpec,
    seed: Seed,
    head: &dyn Fn(&str) -> ResultRow,
) -> Result<(Vec<ResultRow>, Timings), CliError> {
    let n = model.n;
    let part = gen_partition(n, &model.sizes()?, model.shuffle, &mut seed.child(stage::PARTITION).rng())?;
    let theta = gen_theta(&model.theta_spec(), n, &mut seed.child(stage::THETA).rng())?;
    let params = ModelParams::new(theta, part, model.mixing()?)?;
    let means = ModelMeans::new(&params);
    let a = sample_adjacency(&means.omega, &mut seed.child(stage::ADJACENCY).rng())?;
    let truth = params.partition();
    let cluster = seed.child(stage::CLUSTERING);

    let mut rows = Vec::new();
    let mut times = Vec::new();
    let mut methods = cfg.methods.clone();
    methods.sort();
    methods.dedup();
    for method in methods {
        let start = Instant::now();
        match method {
            Method::Score | Method::Rscore => {
                let mut rc = cfg.rscore_config(cluster);
                if method == Method::Score {
                    rc.iterations = 0;
                }
                let (_, trace) = r_score(&a, &rc, Some(truth))?;
                let note = match &trace.stop {
                    StopReason::Failed { iteration, message } => format!("stopped at pass {iteration}: {message}"),
                    _ => String::new(),
                };
                let skip = usize::from(method == Method::Rscore);
                for rec in &trace.records[skip..] {
                    let mut row = head(method.tag());
                    row.iteration = rec.iteration;
                    row.hamming_error = rec.hamming;
                    row.note = note.clone();
                    rows.push(row);
                }
            }
            Method::Oracle => {
                let p = oracle_score(&a, &means.nfactor, model.k, &cfg.score_options(), cluster)?;
                let mut row = head(method.tag());
                row.iteration = 1;
                row.hamming_error = Some(hamming_error(&p, truth)?);
                rows.push(row);
            }
        }
        times.push((method.tag(), start.elapsed().as_secs_f64()));
    }
    Ok((rows, times))
}

/// Mean and standard error per (grid value, method, iteration), skipping
/// rows without an error value.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    // Grid values are keyed by their bit pattern so the map stays ordered
    // for the finite, non-negative values used in sweeps.
    let mut cells: BTreeMap<(Option<u64>, String, usize), Vec<f64>> = BTreeMap::new();
    for r in rows {
        if let Some(e) = r.hamming_error {
            cells
                .entry((r.grid_value.map(f64::to_bits), r.method.clone(), r.iteration))
                .or_default()
                .push(e);
        }
    }
    cells
        .into_iter()
        .map(|((g, method, iteration), v)| {
            let count = v.len();
            let mean = v.iter().sum::<f64>() / count as f64;
            let se = if count > 1 {
                let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (count - 1) as f64;
                (var / count as f64).sqrt()
            } else {
                0.0
            };
            SummaryRow {
                grid_value: g.map(f64::from_bits),
                method,
                iteration,
                count,
                mean,
                se,
            }
        })
        .collect()
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let io = |e: csv::Error| CliError::Runtime(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    for r in rows {
        w.serialize(r).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .collect::<Result<Vec<ResultRow>, _>>()
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

/// Writes `results.csv`, `summary.csv` and the resolved `config.toml` into
/// `dir`, plus `timings.csv` when `timings` is set.
pub fn write_outputs(dir: &Path, cfg: &ExperimentConfig, out: &ExperimentOutput, timings: bool) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    write_csv(&dir.join("results.csv"), &out.rows)?;
    write_csv(&dir.join("summary.csv"), &summarize(&out.rows))?;
    if timings {
        write_csv(&dir.join("timings.csv"), &out.timings)?;
    }
    let cfg_path = dir.join("config.toml");
    std::fs::write(&cfg_path, cfg.to_toml()).map_err(|e| CliError::Io {
        path: cfg_path,
        source: e,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::preset;

    fn tiny() -> ExperimentConfig {
        let mut cfg = preset("setting-a-small").unwrap();
        cfg.model.n = 90;
        cfg.model.theta.b_n = 14.0 / (1.0 - 23.0 / 30.0);
        cfg.replications = 3;
        cfg.algorithm.iterations = 2;
        cfg.algorithm.kmeans_restarts = 5;
        cfg
    }

    #[test]
    fn rows_ordered_and_complete() {
        let out = run_experiment(&tiny(), 2).unwrap();
        assert_eq!(out.failures, 0);
        // Per replication: score, 2 rscore passes, oracle.
        assert_eq!(out.rows.len(), 3 * 4);
        let reps: Vec<usize> = out.rows.iter().map(|r| r.replication).collect();
        assert!(reps.windows(2).all(|w| w[0] <= w[1]));
        assert!(out.rows.iter().all(|r| r.hamming_error.is_some_and(|e| (0.0..=1.0).contains(&e))));
    }

    #[test]
    fn thread_count_does_not_change_rows() {
        let cfg = tiny();
        assert_eq!(run_experiment(&cfg, 1).unwrap().rows, run_experiment(&cfg, 3).unwrap().rows);
    }

    #[test]
    fn summary_statistics() {
        let mk = |rep, e| ResultRow {
            experiment: "x".into(),
            grid_value: None,
            replication: rep,
            seed: 0,
            method: "score".into(),
            iteration: 0,
            hamming_error: Some(e),
            status: "ok".into(),
            note: String::new(),
        };
        let s = summarize(&[mk(0, 0.1), mk(1, 0.3)]);
        assert_eq!(s.len(), 1);
        assert!((s[0].mean - 0.2).abs() < 1e-15);
        assert!((s[0].se - 0.1).abs() < 1e-15);
        let single = summarize(&[mk(0, 0.25)]);
        assert_eq!(single[0].se, 0.0);
    }

    #[test]
    fn csv_round_trip() {
        let out = run_experiment(&tiny(), 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        write_csv(&path, &out.rows).unwrap();
        assert_eq!(read_results(&path).unwrap(), out.rows);
    }
}
