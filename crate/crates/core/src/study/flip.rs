//! Cross-scale flip study: tier shares on small sampled panels against the
//! same tiers on the full panel.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sampling::{sample_subset, AgentMetrics, PoolParams, Protocol};
use super::{default_method, subset_shares, window_shares};
use crate::attribution::{group_shares, BaselineSpec};
use crate::error::{Error, Result};
use crate::numeric::mean_std;
use crate::panel::{FeaturePanel, TierPartition};
use crate::valuefn::ValueFunction;

pub const FLIP_CSV_SCHEMA: &str = "#schema aumann.flip/1";
pub const FLIP_SUMMARY_CSV_SCHEMA: &str = "#schema aumann.flip_summary/1";
pub const DOSE_CSV_SCHEMA: &str = "#schema aumann.dose/1";

#[derive(Clone, Debug)]
pub struct FlipConfig {
    pub functions: Vec<ValueFunction>,
    pub protocols: Vec<Protocol>,
    pub sizes: Vec<usize>,
    pub seeds: Vec<u64>,
    pub pool: PoolParams,
    pub baseline: BaselineSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlipCell {
    pub f_kind: String,
    pub protocol: Protocol,
    pub n: usize,
    pub seed: u64,
    /// Subset tier shares; `None` when the subset's macro change is degenerate.
    pub shares: Option<Vec<f64>>,
    /// Number of subset members in each tier.
    pub counts: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlipSummary {
    pub f_kind: String,
    pub protocol: Protocol,
    pub n: usize,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// `mean - full` per tier, in percentage points.
    pub delta_pp: Vec<f64>,
    pub runs: usize,
    pub degenerate: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlipReport {
    pub group_names: Vec<String>,
    /// Full-panel tier shares per value function.
    pub full: BTreeMap<String, Vec<f64>>,
    pub cells: Vec<FlipCell>,
}

impl FlipReport {
    /// Means and stds over seeds; degenerate cells are counted, not averaged.
    pub fn summary(&self) -> Vec<FlipSummary> {
        let mut groups: BTreeMap<(String, Protocol, usize), Vec<&FlipCell>> = BTreeMap::new();
        for c in &self.cells {
            groups.entry((c.f_kind.clone(), c.protocol, c.n)).or_default().push(c);
        }
        let g = self.group_names.len();
        groups
            .into_iter()
            .map(|((f_kind, protocol, n), cells)| {
                let ok: Vec<&Vec<f64>> = cells.iter().filter_map(|c| c.shares.as_ref()).collect();
                let (mut mean, mut std) = (vec![f64::NAN; g], vec![f64::NAN; g]);
                if !ok.is_empty() {
                    for k in 0..g {
                        let col: Vec<f64> = ok.iter().map(|s| s[k]).collect();
                        (mean[k], std[k]) = mean_std(&col);
                    }
                }
                let full = &self.full[&f_kind];
                let delta_pp = mean.iter().zip(full).map(|(m, f)| 100.0 * (m - f)).collect();
                FlipSummary {
                    f_kind,
                    protocol,
                    n,
                    mean,
                    std,
                    delta_pp,
                    runs: ok.len(),
                    degenerate: cells.len() - ok.len(),
                }
            })
            .collect()
    }

    /// One row per cell and tier.
    pub fn write_cells_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "{FLIP_CSV_SCHEMA}")?;
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record([
            "f_kind", "protocol", "n", "seed", "group", "count", "subset_share", "full_share", "delta_pp", "degenerate",
        ])?;
        for c in &self.cells {
            let full = &self.full[&c.f_kind];
            for (k, name) in self.group_names.iter().enumerate() {
                let (share, delta) = match &c.shares {
                    Some(s) => (format!("{:.12}", s[k]), format!("{:.6}", 100.0 * (s[k] - full[k]))),
                    None => (String::new(), String::new()),
                };
                csv.write_record([
                    c.f_kind.as_str(),
                    c.protocol.as_str(),
                    &c.n.to_string(),
                    &c.seed.to_string(),
                    name,
                    &c.counts[k].to_string(),
                    &share,
                    &format!("{:.12}", full[k]),
                    &delta,
                    if c.shares.is_none() { "true" } else { "false" },
                ])?;
            }
        }
        csv.flush()?;
        Ok(())
    }

    /// Aggregate rows per `(f, protocol, n, group)` in percent, followed by a
    /// `full` row per `f`.
    pub fn write_summary_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "{FLIP_SUMMARY_CSV_SCHEMA}")?;
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record([
            "f_kind", "protocol", "n", "group", "share_pct", "std_pct", "delta_pp", "runs", "degenerate",
        ])?;
        let pct = |x: f64| if x.is_finite() { format!("{:.4}", 100.0 * x) } else { String::new() };
        for s in self.summary() {
            for (k, name) in self.group_names.iter().enumerate() {
                let delta = if s.delta_pp[k].is_finite() { format!("{:.4}", s.delta_pp[k]) } else { String::new() };
                csv.write_record([
                    s.f_kind.as_str(),
                    s.protocol.as_str(),
                    &s.n.to_string(),
                    name,
                    &pct(s.mean[k]),
                    &pct(s.std[k]),
                    &delta,
                    &s.runs.to_string(),
                    &s.degenerate.to_string(),
                ])?;
            }
        }
        for (f, shares) in &self.full {
            for (k, name) in self.group_names.iter().enumerate() {
                csv.write_record([f.as_str(), "full", "", name, &pct(shares[k]), "", "", "1", "0"])?;
            }
        }
        csv.flush()?;
        Ok(())
    }
}

fn tier_counts(labels: &[usize], n_groups: usize) -> Vec<usize> {
    let mut c = vec![0; n_groups];
    labels.iter().for_each(|&l| c[l] += 1);
    c
}

pub fn flip_study(panel: &FeaturePanel, partition: &TierPartition, config: &FlipConfig) -> Result<FlipReport> {
    if partition.labels.len() != panel.n_agents() {
        return Err(Error::Shape(format!(
            "partition covers {} agents, panel has {}",
            partition.labels.len(),
            panel.n_agents()
        )));
    }
    let metrics = AgentMetrics::from_panel(panel)?;
    let g = partition.n_groups();
    let mut full = BTreeMap::new();
    let mut cells = Vec::new();
    for f in &config.functions {
        let method = default_method(f, &config.baseline);
        let shares = window_shares(f, panel, &config.baseline, method)?;
        full.insert(f.name(), group_shares(shares.normalized()?, &partition.labels, g)?);
        let grid: Vec<(Protocol, usize, u64)> = config
            .protocols
            .iter()
            .flat_map(|&p| config.sizes.iter().flat_map(move |&n| config.seeds.iter().map(move |&s| (p, n, s))))
            .collect();
        let rows = grid
            .into_par_iter()
            .map(|(protocol, n, seed)| {
                let spec = sample_subset(&metrics, protocol, n, seed, &config.pool)?;
                let labels = partition.labels_of(&spec.indices);
                let shares = match subset_shares(f, panel, &spec.indices, &config.baseline, method) {
                    Ok(r) => Some(group_shares(r.normalized()?, &labels, g)?),
                    Err(Error::DegenerateMacroChange { .. }) => None,
                    Err(e) => return Err(e),
                };
                Ok(FlipCell {
                    f_kind: f.name(),
                    protocol,
                    n,
                    seed,
                    shares,
                    counts: tier_counts(&labels, g),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        cells.extend(rows);
    }
    Ok(FlipReport {
        group_names: partition.group_names.clone(),
        full,
        cells,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DoseRow {
    pub protocol: Protocol,
    pub n: usize,
    /// Mean and std of `|S ∩ G_top|` over seeds.
    pub mean_top: f64,
    pub std_top: f64,
    pub seeds: usize,
}

/// Top-tier (group 0) membership of sampled subsets per protocol.
pub fn dose_response(
    panel: &FeaturePanel,
    partition: &TierPartition,
    protocols: &[Protocol],
    n: usize,
    seeds: &[u64],
    pool: &PoolParams,
) -> Result<Vec<DoseRow>> {
    let metrics = AgentMetrics::from_panel(panel)?;
    protocols
        .iter()
        .map(|&protocol| {
            let counts = seeds
                .par_iter()
                .map(|&seed| {
                    let spec = sample_subset(&metrics, protocol, n, seed, pool)?;
                    Ok(spec.indices.iter().filter(|&&i| partition.labels[i] == 0).count() as f64)
                })
                .collect::<Result<Vec<f64>>>()?;
            let (mean_top, std_top) = mean_std(&counts);
            Ok(DoseRow {
                protocol,
                n,
                mean_top,
                std_top,
                seeds: seeds.len(),
            })
        })
        .collect()
}

pub fn write_dose_csv(mut w: impl Write, rows: &[DoseRow]) -> Result<()> {
    writeln!(w, "{DOSE_CSV_SCHEMA}")?;
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["protocol", "n", "mean_top", "std_top", "seeds"])?;
    for r in rows {
        csv.write_record([
            r.protocol.as_str(),
            &r.n.to_string(),
            &format!("{:.4}", r.mean_top),
            &format!("{:.4}", r.std_top),
            &r.seeds.to_string(),
        ])?;
    }
    csv.flush()?;
    Ok(())
}
