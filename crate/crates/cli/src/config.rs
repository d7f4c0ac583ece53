//! Experiment configuration files (TOML) and built-in presets.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use rscore::model::{balanced_sizes, two_block_mixing, uniform_offdiag_mixing, ThetaDistribution, ThetaSpec};
use rscore::pipeline::RScoreConfig;
use rscore::refit::{RefitOptions, ThetaFallback};
use rscore::spectral::{Clip, EigenMethod, KMeansOptions, ScoreOptions};
use rscore::Seed;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub id: String,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    pub model: ModelSpec,
    #[serde(default)]
    pub algorithm: AlgorithmSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
}

fn default_replications() -> usize {
    1
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn default_methods() -> Vec<Method> {
    vec![Method::Score, Method::Rscore]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Score,
    Rscore,
    /// SCORE on `A / N` with the true factor matrix.
    Oracle,
}

impl Method {
    pub fn tag(self) -> &'static str {
        match self {
            Method::Score => "score",
            Method::Rscore => "rscore",
            Method::Oracle => "oracle",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub n: usize,
    pub k: usize,
    /// Community sizes; balanced when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sizes: Option<Vec<usize>>,
    #[serde(default)]
    pub shuffle: bool,
    pub theta: ThetaConfig,
    pub mixing: MixingSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaConfig {
    pub b_n: f64,
    #[serde(flatten)]
    pub distribution: DistributionSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "distribution", rename_all = "kebab-case")]
pub enum DistributionSpec {
    Uniform { lo: f64, hi: f64 },
    Pareto { scale: f64, shape: f64, truncation: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MixingSpec {
    /// `beta 11' + (1 - beta) I`.
    UniformOffdiag { beta: f64 },
    /// Two halves with within/between blocks driven by `beta1`, `beta2`.
    TwoBlock { beta1: f64, beta2: f64 },
    /// Explicit rows.
    Matrix { rows: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSpec {
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_true")]
    pub early_stop: bool,
    #[serde(default)]
    pub warm_start: bool,
    /// `"log-n"`, `"none"` or a fixed threshold.
    #[serde(default)]
    pub clip: ClipSpec,
    #[serde(default = "default_restarts")]
    pub kmeans_restarts: usize,
    #[serde(default = "default_cycle")]
    pub cycle_length: usize,
    #[serde(default)]
    pub eigen: EigenSpec,
}

fn default_iterations() -> usize {
    10
}
fn default_true() -> bool {
    true
}
fn default_restarts() -> usize {
    KMeansOptions::default().restarts
}
fn default_cycle() -> usize {
    3
}

impl Default for AlgorithmSpec {
    fn default() -> Self {
        AlgorithmSpec {
            iterations: default_iterations(),
            early_stop: true,
            warm_start: false,
            clip: ClipSpec::default(),
            kmeans_restarts: default_restarts(),
            cycle_length: default_cycle(),
            eigen: EigenSpec::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ClipSpec {
    Fixed(f64),
    Named(ClipName),
}

impl Default for ClipSpec {
    fn default() -> Self {
        ClipSpec::Named(ClipName::LogN)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClipName {
    LogN,
    None,
}

impl ClipSpec {
    fn clip(self) -> Clip {
        match self {
            ClipSpec::Named(ClipName::LogN) => Clip::LogN,
            ClipSpec::Named(ClipName::None) => Clip::Disabled,
            ClipSpec::Fixed(t) => Clip::Fixed(t),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EigenSpec {
    #[default]
    Auto,
    Dense,
    Krylov,
}

/// A sweep over one model parameter; each value is a separate grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub parameter: GridParameter,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridParameter {
    Beta,
    Beta1,
    Beta2,
    BN,
}

impl GridParameter {
    pub fn name(self) -> &'static str {
        match self {
            GridParameter::Beta => "beta",
            GridParameter::Beta1 => "beta1",
            GridParameter::Beta2 => "beta2",
            GridParameter::BN => "b-n",
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is serializable")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.replications == 0 {
            return bad("replications must be at least 1".into());
        }
        if self.methods.is_empty() {
            return bad("methods must not be empty".into());
        }
        if self.id.is_empty() || self.id.contains(|c: char| c == ',' || c.is_whitespace()) {
            return bad(format!("experiment id {:?} must be non-empty without commas or spaces", self.id));
        }
        let points: Vec<Option<f64>> = match &self.grid {
            None => vec![None],
            Some(g) if g.values.is_empty() => return bad("grid has no values".into()),
            Some(g) => g.values.iter().map(|&v| Some(v)).collect(),
        };
        for v in points {
            let m = self.model_at(v)?;
            m.sizes()?;
            m.theta_spec().validate().map_err(|e| CliError::Config(e.to_string()))?;
            m.mixing()?;
        }
        if self.model.k < 2 || self.model.n < 3 * self.model.k {
            return bad(format!("need k >= 2 and n >= 3k, got n={}, k={}", self.model.n, self.model.k));
        }
        if self.algorithm.cycle_length < 3 || self.algorithm.cycle_length % 2 == 0 {
            return bad(format!("cycle_length {} must be odd and >= 3", self.algorithm.cycle_length));
        }
        Ok(())
    }

    /// The model with the grid parameter (if any) set to `value`.
    pub fn model_at(&self, value: Option<f64>) -> Result<ModelSpec, CliError> {
        let mut m = self.model.clone();
        let (Some(g), Some(v)) = (&self.grid, value) else {
            return Ok(m);
        };
        let mismatch = CliError::Config(format!(
            "grid parameter {} does not apply to mixing {:?}",
            g.parameter.name(),
            m.mixing
        ));
        match (g.parameter, &mut m.mixing) {
            (GridParameter::Beta, MixingSpec::UniformOffdiag { beta }) => *beta = v,
            (GridParameter::Beta1, MixingSpec::TwoBlock { beta1, .. }) => *beta1 = v,
            (GridParameter::Beta2, MixingSpec::TwoBlock { beta2, .. }) => *beta2 = v,
            (GridParameter::BN, _) => m.theta.b_n = v,
            _ => return Err(mismatch),
        }
        Ok(m)
    }

    pub fn grid_values(&self) -> Vec<Option<f64>> {
        match &self.grid {
            None => vec![None],
            Some(g) => g.values.iter().map(|&v| Some(v)).collect(),
        }
    }

    pub fn rscore_config(&self, seed: Seed) -> RScoreConfig {
        let a = &self.algorithm;
        RScoreConfig {
            iterations: a.iterations,
            k: self.model.k,
            score: self.score_options(),
            refit: RefitOptions {
                cycle_length: a.cycle_length,
                fallback: ThetaFallback::CommunityMean,
            },
            seed,
            early_stop: a.early_stop,
            warm_start: a.warm_start,
        }
    }

    pub fn score_options(&self) -> ScoreOptions {
        let a = &self.algorithm;
        ScoreOptions {
            clip: a.clip.clip(),
            kmeans: KMeansOptions {
                restarts: a.kmeans_restarts,
                ..KMeansOptions::default()
            },
            eigen: match a.eigen {
                EigenSpec::Auto => EigenMethod::Auto,
                EigenSpec::Dense => EigenMethod::Dense,
                EigenSpec::Krylov => EigenMethod::Krylov,
            },
        }
    }
}

impl ModelSpec {
    pub fn sizes(&self) -> Result<Vec<usize>, CliError> {
        let sizes = self.sizes.clone().unwrap_or_else(|| balanced_sizes(self.n, self.k));
        if sizes.len() != self.k || sizes.iter().sum::<usize>() != self.n || sizes.contains(&0) {
            return Err(CliError::Config(format!(
                "sizes {sizes:?} must be {} positive counts summing to {}",
                self.k, self.n
            )));
        }
        Ok(sizes)
    }

    pub fn theta_spec(&self) -> ThetaSpec {
        let distribution = match self.theta.distribution {
            DistributionSpec::Uniform { lo, hi } => ThetaDistribution::Uniform { lo, hi },
            DistributionSpec::Pareto {
                scale,
                shape,
                truncation,
            } => ThetaDistribution::Pareto {
                scale,
                shape,
                truncation,
            },
        };
        ThetaSpec {
            distribution,
            b_n: self.theta.b_n,
        }
    }

    pub fn mixing(&self) -> Result<DMatrix<f64>, CliError> {
        let cfg = |e: rscore::Error| CliError::Config(e.to_string());
        match &self.mixing {
            MixingSpec::UniformOffdiag { beta } => uniform_offdiag_mixing(self.k, *beta).map_err(cfg),
            MixingSpec::TwoBlock { beta1, beta2 } => two_block_mixing(self.k, *beta1, *beta2).map_err(cfg),
            MixingSpec::Matrix { rows } => {
                if rows.len() != self.k || rows.iter().any(|r| r.len() != self.k) {
                    return Err(CliError::Config(format!("mixing matrix must be {0}x{0}", self.k)));
                }
                let p = DMatrix::from_fn(self.k, self.k, |a, b| rows[a][b]);
                rscore::model::validate_mixing(&p, self.k).map_err(cfg)?;
                Ok(p)
            }
        }
    }
}

fn uniform(lo: f64, hi: f64, b_n: f64) -> ThetaConfig {
    ThetaConfig {
        b_n,
        distribution: DistributionSpec::Uniform { lo, hi },
    }
}

fn pareto(truncation: f64, b_n: f64) -> ThetaConfig {
    ThetaConfig {
        b_n,
        distribution: DistributionSpec::Pareto {
            scale: 10.0,
            shape: 1.0,
            truncation,
        },
    }
}

/// Names accepted by [`preset`].
pub const PRESETS: &[&str] = &[
    "setting-a",
    "setting-b",
    "setting-c",
    "setting-d",
    "setting-a-small",
    "setting-b-small",
    "setting-c-small",
    "setting-d-small",
    "exp2",
    "exp2-small",
    "exp3",
    "exp3-small",
];

/// Built-in configurations. `-small` variants divide `n` by four; the
/// calibrated SNR `b_n |lambda_min(P)|` does not involve `n`, so `b_n` is
/// unchanged.
pub fn preset(name: &str) -> Option<ExperimentConfig> {
    let (base, small) = match name.strip_suffix("-small") {
        Some(b) => (b, true),
        None => (name, false),
    };
    let scale = |n: usize| if small { n / 4 } else { n };
    let setting = |n: usize, k: usize, theta: ThetaConfig, beta: f64| ModelSpec {
        n: scale(n),
        k,
        sizes: None,
        shuffle: false,
        theta,
        mixing: MixingSpec::UniformOffdiag { beta },
    };
    let exp2_sizes: Vec<usize> = [5.0, 1.5, 6.0, 3.0, 7.5, 4.0]
        .iter()
        .map(|f| (f * if small { 50.0 } else { 200.0 }) as usize)
        .collect();
    let two_block = |b_n: f64, beta2: f64| ModelSpec {
        n: exp2_sizes.iter().sum(),
        k: 6,
        sizes: Some(exp2_sizes.clone()),
        shuffle: false,
        theta: uniform(0.01, 2.0, b_n),
        mixing: MixingSpec::TwoBlock { beta1: 0.9, beta2 },
    };
    let (model, grid, replications) = match base {
        "setting-a" => (setting(2400, 3, uniform(0.01, 2.0, 60.0), 23.0 / 30.0), None, 20),
        "setting-b" => (setting(2500, 5, uniform(0.1, 0.8, 70.0), 0.65), None, 20),
        "setting-c" => (setting(2400, 3, pareto(200.0, 70.0), 0.55), None, 20),
        "setting-d" => (setting(2500, 5, pareto(100.0, 50.0), 0.55), None, 20),
        "exp2" => (two_block(80.0, 0.6), None, 20),
        "exp3" => (
            two_block(30.0, 0.6),
            Some(GridSpec {
                parameter: GridParameter::Beta2,
                values: vec![0.58, 0.60, 0.62, 0.64, 0.66, 0.68, 0.70],
            }),
            20,
        ),
        _ => return None,
    };
    Some(ExperimentConfig {
        id: name.to_string(),
        replications,
        seed: 20240601,
        output: PathBuf::from("out").join(name),
        methods: vec![Method::Score, Method::Rscore, Method::Oracle],
        model,
        algorithm: AlgorithmSpec {
            early_stop: false,
            ..AlgorithmSpec::default()
        },
        grid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid_and_round_trip() {
        for name in PRESETS {
            let cfg = preset(name).unwrap();
            cfg.validate().unwrap();
            let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
            assert_eq!(back, cfg, "{name}");
        }
        assert!(preset("setting-e").is_none());
    }

    #[test]
    fn preset_snr() {
        for (name, snr) in [("setting-a", 14.0), ("setting-b", 24.5), ("setting-c", 31.5), ("setting-d", 22.5), ("exp2", 28.0)] {
            for n in [name.to_string(), format!("{name}-small")] {
                let cfg = preset(&n).unwrap();
                let p = cfg.model.mixing().unwrap();
                let got = rscore::model::snr(cfg.model.theta.b_n, &p);
                assert!((got - snr).abs() < 1e-9, "{n}: {got}");
            }
        }
    }

    #[test]
    fn small_sizes() {
        assert_eq!(preset("setting-a-small").unwrap().model.n, 600);
        assert_eq!(preset("setting-b-small").unwrap().model.n, 625);
        assert_eq!(preset("exp2-small").unwrap().model.n, 1350);
        assert_eq!(preset("exp2").unwrap().model.sizes.unwrap(), vec![1000, 300, 1200, 600, 1500, 800]);
    }

    #[test]
    fn minimal_toml() {
        let text = r#"
            id = "mini"
            [model]
            n = 60
            k = 2
            theta = { distribution = "uniform", lo = 0.5, hi = 1.0, b_n = 5.0 }
            mixing = { kind = "uniform-offdiag", beta = 0.3 }
            [algorithm]
            clip = "none"
        "#;
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(cfg.replications, 1);
        assert_eq!(cfg.algorithm.clip, ClipSpec::Named(ClipName::None));
        assert_eq!(cfg.algorithm.iterations, 10);
        let fixed = text.replace("\"none\"", "2.5");
        assert_eq!(ExperimentConfig::from_toml(&fixed).unwrap().algorithm.clip, ClipSpec::Fixed(2.5));
    }

    #[test]
    fn rejects_bad_configs() {
        let base = preset("setting-a-small").unwrap();
        let mut c = base.clone();
        c.replications = 0;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.model.sizes = Some(vec![100, 100, 100]);
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.grid = Some(GridSpec {
            parameter: GridParameter::Beta2,
            values: vec![0.5],
        });
        assert!(c.validate().is_err());
        assert!(matches!(ExperimentConfig::from_toml("id = 3"), Err(CliError::Config(_))));
    }
}
