use std::path::PathBuf;

use anyhow::bail;
use serde::{Deserialize, Serialize};

use aumann::attribution::BaselineSpec;
use aumann::panel::{Anchor, DEFAULT_CUTS};
use aumann::FeaturePanel;

/// Flat `key = value` study file.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    /// Panel container, relative to the config file. Omit to use a synthetic panel.
    pub panel: Option<PathBuf>,
    pub panel_id: Option<String>,
    pub synthetic_agents: Option<usize>,
    #[serde(default = "one")]
    pub synthetic_steps: usize,
    #[serde(default = "pareto")]
    pub synthetic_law: String,
    pub synthetic_alpha: Option<f64>,
    #[serde(default)]
    pub synthetic_coupling: Vec<f64>,
    pub functions: Vec<String>,
    #[serde(default = "all_protocols")]
    pub protocols: Vec<String>,
    pub sizes: Vec<usize>,
    #[serde(default = "ten_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "pool_fraction")]
    pub pool_fraction: f64,
    #[serde(default = "pool_size")]
    pub pool_size: usize,
    #[serde(default = "zero")]
    pub baseline: String,
    #[serde(default = "cuts")]
    pub cuts: Vec<f64>,
    #[serde(default = "reach")]
    pub anchor: String,
    #[serde(default = "analyses")]
    pub analyses: Vec<String>,
    #[serde(default = "k_list")]
    pub k_list: Vec<usize>,
    #[serde(default = "bins")]
    pub heatmap_bins: usize,
}

fn one() -> usize {
    1
}
fn pareto() -> String {
    "pareto_reach".into()
}
fn all_protocols() -> Vec<String> {
    aumann::study::Protocol::ALL.iter().map(|p| p.to_string()).collect()
}
fn ten_seeds() -> Vec<u64> {
    (0..10).collect()
}
fn pool_fraction() -> f64 {
    aumann::study::sampling::DEFAULT_POOL_FRACTION
}
fn pool_size() -> usize {
    aumann::study::sampling::DEFAULT_POOL_SIZE
}
fn zero() -> String {
    "zero".into()
}
fn cuts() -> Vec<f64> {
    DEFAULT_CUTS.to_vec()
}
fn reach() -> String {
    "reach".into()
}
fn analyses() -> Vec<String> {
    vec!["flip".into(), "rescale".into(), "dose".into()]
}
fn k_list() -> Vec<usize> {
    vec![5, 10, 20, 30, 50, 100, 300]
}
fn bins() -> usize {
    20
}

pub const ANALYSES: [&str; 5] = ["flip", "rescale", "dose", "convergence", "heatmap"];

impl StudyConfig {
    pub fn validate(&self) -> anyhow::Result<()> {
        if self.panel.is_none() && self.synthetic_agents.is_none() {
            bail!("set either `panel` or `synthetic_agents`");
        }
        if self.functions.is_empty() || self.sizes.is_empty() || self.seeds.is_empty() {
            bail!("`functions`, `sizes` and `seeds` must be non-empty");
        }
        if let Some(a) = self.analyses.iter().find(|a| !ANALYSES.contains(&a.as_str())) {
            bail!("unknown analysis `{a}` (expected one of {})", ANALYSES.join(", "));
        }
        Ok(())
    }
}

/// `zero`, `population_mean`, `first_step`, or comma-separated per-dim values.
pub fn parse_baseline(s: &str) -> anyhow::Result<BaselineSpec> {
    Ok(match s.trim() {
        "zero" => BaselineSpec::Zero,
        "population_mean" | "mean" => BaselineSpec::PopulationMean,
        "first_step" => BaselineSpec::FirstStep,
        other => {
            let values: Result<Vec<f64>, _> = other.split(',').map(|v| v.trim().parse::<f64>()).collect();
            match values {
                Ok(v) if !v.is_empty() => BaselineSpec::CustomVector(v),
                _ => bail!("baseline `{other}` is not zero, population_mean, first_step or a list of numbers"),
            }
        }
    })
}

/// `reach`, or the name of a dim whose raw counts rank the agents.
pub fn parse_anchor(s: &str, panel: &FeaturePanel) -> anyhow::Result<Anchor> {
    if s == "reach" {
        return Ok(Anchor::Reach);
    }
    match panel.dim_index(s) {
        Some(dim) => Ok(Anchor::DimCount { dim, steps: None }),
        None => bail!("unknown anchor `{s}`; use reach or one of {:?}", panel.dim_names()),
    }
}

/// Optional bench file; command-line flags fill whatever it leaves out.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchFile {
    pub f: Option<String>,
    pub sizes: Option<Vec<usize>>,
    pub methods: Option<Vec<String>>,
    pub m_samples: Option<usize>,
    pub repeats: Option<usize>,
    pub k: Option<usize>,
    pub steps: Option<usize>,
    pub sampled_max_n: Option<usize>,
}
