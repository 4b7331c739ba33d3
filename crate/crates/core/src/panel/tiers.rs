use serde::{Deserialize, Serialize};

use super::FeaturePanel;
use crate::error::{Error, Result};

pub const DEFAULT_CUTS: [f64; 3] = [0.01, 0.10, 1.0];

/// Per-agent scalar used to rank agents into tiers.
#[derive(Clone, Debug)]
pub enum Anchor {
    /// Reach (dim 0) at the first step, i.e. the follower count at window start.
    Reach,
    /// Raw count `sum_t expm1(z[i, t, dim])` over the first `steps` steps (all when `None`).
    DimCount { dim: usize, steps: Option<usize> },
    Values { name: String, values: Vec<f64> },
}

impl Anchor {
    pub fn name(&self, panel: &FeaturePanel) -> String {
        match self {
            Anchor::Reach => "reach".into(),
            Anchor::DimCount { dim, steps } => {
                let d = panel.dim_names().get(*dim).cloned().unwrap_or_else(|| format!("dim{dim}"));
                match steps {
                    Some(s) => format!("{d}_count_{s}steps"),
                    None => format!("{d}_count"),
                }
            }
            Anchor::Values { name, .. } => name.clone(),
        }
    }

    pub fn values(&self, panel: &FeaturePanel) -> Result<Vec<f64>> {
        let z = panel.features();
        let (n, t, d) = z.dim();
        let v = match self {
            Anchor::Reach => (0..n).map(|i| z[[i, 0, 0]]).collect(),
            Anchor::DimCount { dim, steps } => {
                if *dim >= d {
                    return Err(Error::invalid(format!("anchor dim {dim} out of range")));
                }
                let upto = steps.unwrap_or(t).min(t);
                (0..n)
                    .map(|i| (0..upto).map(|s| z[[i, s, *dim]].exp_m1()).sum())
                    .collect()
            }
            Anchor::Values { values, .. } => {
                if values.len() != n {
                    return Err(Error::Shape(format!("{} anchor values for {n} agents", values.len())));
                }
                values.clone()
            }
        };
        if v.iter().any(|x: &f64| !x.is_finite()) {
            return Err(Error::invalid("anchor metric is not finite"));
        }
        Ok(v)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TierPartition {
    pub labels: Vec<usize>,
    pub group_names: Vec<String>,
    pub anchor_metric: String,
    pub cut_fractions: Vec<f64>,
}

impl TierPartition {
    pub fn n_groups(&self) -> usize {
        self.group_names.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.n_groups()];
        for &l in &self.labels {
            s[l] += 1;
        }
        s
    }

    pub fn members(&self, group: usize) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.labels[i] == group).collect()
    }

    /// Labels of the agents `rows`, in that order.
    pub fn labels_of(&self, rows: &[usize]) -> Vec<usize> {
        rows.iter().map(|&r| self.labels[r]).collect()
    }
}

/// Cumulative cut positions `ceil(f N)` (with a little slack against `0.1 * 100 = 10.000000000000002`).
pub fn cut_positions(n: usize, cuts: &[f64]) -> Vec<usize> {
    cuts.iter()
        .map(|&f| ((f * n as f64 - 1e-9).ceil().max(0.0) as usize).min(n))
        .collect()
}

fn default_group_names(k: usize) -> Vec<String> {
    if k == 3 {
        vec!["top".into(), "mid".into(), "tail".into()]
    } else {
        (0..k).map(|g| format!("g{g}")).collect()
    }
}

/// Ranks agents by `anchor` descending, ties by agent id, and slices at the
/// cumulative fractions.
pub fn make_tier_partition(panel: &FeaturePanel, anchor: &Anchor, cuts: &[f64]) -> Result<TierPartition> {
    if cuts.is_empty() || cuts.windows(2).any(|w| w[0] >= w[1]) || cuts[0] <= 0.0 {
        return Err(Error::invalid("cut fractions must be positive and strictly increasing"));
    }
    if cuts[cuts.len() - 1] != 1.0 {
        return Err(Error::invalid("the last cut fraction must be 1.0"));
    }
    let n = panel.n_agents();
    if n < cuts.len() {
        return Err(Error::invalid(format!("{n} agents cannot fill {} groups", cuts.len())));
    }
    let values = anchor.values(panel)?;
    let ids = panel.agent_ids();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then_with(|| ids[a].cmp(&ids[b])));
    let bounds = cut_positions(n, cuts);
    let mut labels = vec![0; n];
    let mut group = 0;
    for (pos, &i) in order.iter().enumerate() {
        while pos >= bounds[group] {
            group += 1;
        }
        labels[i] = group;
    }
    Ok(TierPartition {
        labels,
        group_names: default_group_names(cuts.len()),
        anchor_metric: anchor.name(panel),
        cut_fractions: cuts.to_vec(),
    })
}
