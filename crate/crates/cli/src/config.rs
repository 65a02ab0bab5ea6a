//! Run configuration: a TOML file validated against a fixed schema. All
//! randomness in a run derives from one master seed recorded in every
//! output file together with the configuration hash.

use anyhow::{bail, Context, Result};
use ldpclab::channel::ChannelModel;
use ldpclab::ensemble::DegreeDistribution;
use serde::Deserialize;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; `--seed` overrides.
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Worker threads; 0 keeps the library default.
    #[serde(default)]
    pub workers: usize,
    pub ensemble: EnsembleConfig,
    pub channel: ChannelConfig,
    #[serde(default)]
    pub threshold: Option<ThresholdConfig>,
    #[serde(default)]
    pub verify: Option<VerifyConfig>,
    #[serde(default)]
    pub probe: Option<ProbeConfig>,
    #[serde(default)]
    pub de: Option<DeConfig>,
    #[serde(default)]
    pub entropy: Option<EntropyConfig>,
}

fn default_seed() -> u64 {
    1
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    /// Variable degree distribution as `(degree, coefficient)` pairs.
    pub lambda: Vec<(usize, f64)>,
    /// Check degree distribution as `(degree, coefficient)` pairs.
    pub p: Vec<(usize, f64)>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    /// `bec` | `bsc` | `biawgnc` | `tabulated`.
    pub kind: String,
    #[serde(default)]
    pub eps: Option<f64>,
    /// Key=value family file for `tabulated` (see the channel docs).
    #[serde(default)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdConfig {
    pub eps_min: f64,
    pub eps_max: f64,
    pub points: usize,
    #[serde(default = "default_population")]
    pub population: usize,
    #[serde(default = "default_iters")]
    pub iters: usize,
    #[serde(default = "default_nmc")]
    pub n_mc: usize,
}

fn default_population() -> usize {
    ldpclab::rs_solver::DEFAULT_POPULATION_SIZE
}
fn default_iters() -> usize {
    ldpclab::rs_solver::DEFAULT_ITERATIONS
}
fn default_nmc() -> usize {
    1_000_000
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default = "default_verify_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_verify_n")]
    pub n: usize,
    /// Optional subset of suite names; empty means all.
    #[serde(default)]
    pub suites: Vec<String>,
}

fn default_verify_seeds() -> Vec<u64> {
    vec![1, 2, 3]
}
fn default_verify_n() -> usize {
    8
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    pub delta: f64,
    pub p: usize,
    pub n_list: Vec<usize>,
    pub gamma: f64,
    pub t_star: usize,
    #[serde(default = "default_probe_mc")]
    pub n_mc: usize,
    /// Erasure mass of the two-atom trial density `d_V`.
    #[serde(default = "default_dv_mass")]
    pub dv_erasure_mass: f64,
    /// Optional population file overriding `dv_erasure_mass`.
    #[serde(default)]
    pub dv_path: Option<PathBuf>,
    /// Also run the sum-rule comparison at these sizes.
    #[serde(default)]
    pub sum_rule_n: Vec<usize>,
    #[serde(default = "default_s_points")]
    pub s_points: usize,
    #[serde(default = "default_sum_mc")]
    pub sum_rule_n_mc: usize,
}

fn default_probe_mc() -> usize {
    400
}
fn default_dv_mass() -> f64 {
    0.5
}
fn default_s_points() -> usize {
    8
}
fn default_sum_mc() -> usize {
    120
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeConfig {
    #[serde(default = "default_population")]
    pub population: usize,
    #[serde(default = "default_iters")]
    pub iters: usize,
    /// `zero-info` | `full-info` | `channel`.
    #[serde(default = "default_init")]
    pub init: String,
}

fn default_init() -> String {
    "channel".into()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntropyConfig {
    pub n: usize,
    #[serde(default = "default_graphs")]
    pub graphs: usize,
    /// `exact` | `mc`.
    #[serde(default = "default_mode")]
    pub mode: String,
    #[serde(default = "default_outputs")]
    pub n_outputs: usize,
}

fn default_graphs() -> usize {
    20
}
fn default_mode() -> String {
    "exact".into()
}
fn default_outputs() -> usize {
    2000
}

/// A parsed configuration together with its content hash.
pub struct LoadedConfig {
    pub config: RunConfig,
    pub hash: String,
    pub base_dir: PathBuf,
}

pub fn load(path: &Path, seed_override: Option<u64>) -> Result<LoadedConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let mut config: RunConfig = toml::from_str(&text).context("parsing config")?;
    if let Some(seed) = seed_override {
        config.seed = seed;
    }
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    let hash = format!("{:x}", hasher.finalize());
    let base_dir = path
        .parent()
        .map(|p| p.to_path_buf())
        .unwrap_or_else(|| PathBuf::from("."));
    validate(&config)?;
    Ok(LoadedConfig {
        config,
        hash,
        base_dir,
    })
}

fn validate(config: &RunConfig) -> Result<()> {
    if config.ensemble.lambda.is_empty() || config.ensemble.p.is_empty() {
        bail!("ensemble.lambda and ensemble.p must be nonempty");
    }
    match config.channel.kind.as_str() {
        "bec" | "bsc" | "biawgnc" => {
            if config.channel.eps.is_none() {
                bail!("channel.eps required for kind `{}`", config.channel.kind);
            }
        }
        "tabulated" => {
            if config.channel.config.is_none() {
                bail!("channel.config (family file) required for kind `tabulated`");
            }
        }
        other => bail!("unknown channel kind `{other}`"),
    }
    if let Some(t) = &config.threshold {
        if t.points < 2 {
            bail!("threshold.points must be at least 2 (noise grid)");
        }
        if !(t.eps_min < t.eps_max) {
            bail!("threshold grid requires eps_min < eps_max");
        }
    }
    if let Some(p) = &config.probe {
        if !(p.delta < 0.25) {
            bail!(
                "probe.delta = {} rejected: the concentration statement requires delta < 1/4",
                p.delta
            );
        }
        if p.n_list.is_empty() {
            bail!("probe.n_list must be nonempty");
        }
    }
    Ok(())
}

pub fn build_ensemble(
    config: &EnsembleConfig,
) -> Result<(DegreeDistribution, DegreeDistribution)> {
    let lambda = DegreeDistribution::from_node_pairs(&config.lambda)
        .map_err(|e| anyhow::anyhow!("ensemble.lambda: {e}"))?;
    let p = DegreeDistribution::from_node_pairs(&config.p)
        .map_err(|e| anyhow::anyhow!("ensemble.p: {e}"))?;
    Ok((lambda, p))
}

pub fn build_channel(config: &ChannelConfig, base_dir: &Path) -> Result<ChannelModel> {
    let channel = match config.kind.as_str() {
        "bec" => ChannelModel::bec(config.eps.unwrap()),
        "bsc" => ChannelModel::bsc(config.eps.unwrap()),
        "biawgnc" => ChannelModel::biawgnc(config.eps.unwrap()),
        "tabulated" => {
            let path = base_dir.join(config.config.as_ref().unwrap());
            let text = std::fs::read_to_string(&path)
                .with_context(|| format!("reading channel family {}", path.display()))?;
            ChannelModel::tabulated_from_config(&text, path.parent().unwrap_or(base_dir))
        }
        _ => unreachable!("validated"),
    };
    channel.map_err(|e| anyhow::anyhow!("channel: {e}"))
}
