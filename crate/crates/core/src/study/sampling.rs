//! Subset sampling protocols: visibility-biased, two topic-biased variants
//! and the uniform control.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::mean_std;
use crate::panel::FeaturePanel;

pub const DEFAULT_POOL_FRACTION: f64 = 0.05;
pub const DEFAULT_POOL_SIZE: usize = 5000;

/// Raw per-agent counts behind the protocol scores.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentMetrics {
    pub followers: Vec<f64>,
    pub topic_posts: Vec<f64>,
    pub topic_replies: Vec<f64>,
}

impl AgentMetrics {
    /// Recovers counts from the log1p features: followers from reach at the
    /// first step, posts and replies summed over steps. Dims are looked up as
    /// `reach`, `activity`, `resonance`, falling back to positions 0, 1, 2.
    pub fn from_panel(panel: &FeaturePanel) -> Result<Self> {
        if panel.n_dims() < 3 {
            return Err(Error::invalid("protocol scores need reach, activity and resonance dims"));
        }
        let pick = |name: &str, fallback: usize| panel.dim_index(name).unwrap_or(fallback);
        let (r, a, c) = (pick("reach", 0), pick("activity", 1), pick("resonance", 2));
        let z = panel.features();
        let (n, t) = (panel.n_agents(), panel.n_steps());
        let count = |i: usize, d: usize| (0..t).map(|s| z[[i, s, d]].exp_m1()).sum::<f64>();
        Ok(Self {
            followers: (0..n).map(|i| z[[i, 0, r]].exp_m1()).collect(),
            topic_posts: (0..n).map(|i| count(i, a)).collect(),
            topic_replies: (0..n).map(|i| count(i, c)).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.followers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.followers.is_empty()
    }

    /// `z(log(1 + followers)) + z(log(1 + posts + replies))`.
    pub fn visibility_scores(&self) -> Vec<f64> {
        let reach: Vec<f64> = self.followers.iter().map(|x| x.ln_1p()).collect();
        let engagement: Vec<f64> = self
            .topic_posts
            .iter()
            .zip(&self.topic_replies)
            .map(|(p, r)| (p + r).ln_1p())
            .collect();
        let (zr, ze) = (standardize(&reach), standardize(&engagement));
        zr.iter().zip(&ze).map(|(a, b)| a + b).collect()
    }

    /// `log(1 + b + c) * log(1 + followers)` with `b`, `c` the log1p counts.
    pub fn topic_x_follow_scores(&self) -> Vec<f64> {
        (0..self.len())
            .map(|i| {
                let b = self.topic_posts[i].ln_1p();
                let c = self.topic_replies[i].ln_1p();
                (b + c).ln_1p() * self.followers[i].ln_1p()
            })
            .collect()
    }

    pub fn topic_top_scores(&self) -> Vec<f64> {
        self.topic_posts.iter().map(|p| p.ln_1p()).collect()
    }
}

fn standardize(x: &[f64]) -> Vec<f64> {
    let (m, s) = mean_std(x);
    if s > 0.0 {
        x.iter().map(|v| (v - m) / s).collect()
    } else {
        vec![0.0; x.len()]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    BiasVisibility,
    BiasTopicXFollow,
    BiasTopicTop,
    Random,
}

impl Protocol {
    pub const ALL: [Protocol; 4] = [
        Protocol::BiasVisibility,
        Protocol::BiasTopicXFollow,
        Protocol::BiasTopicTop,
        Protocol::Random,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::BiasVisibility => "bias_visibility",
            Protocol::BiasTopicXFollow => "bias_topic_x_follow",
            Protocol::BiasTopicTop => "bias_topic_top",
            Protocol::Random => "random",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Protocol::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown protocol `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoolParams {
    /// Visibility pool as a fraction of the panel.
    pub pool_fraction: f64,
    /// Pool size for the two topic protocols.
    pub pool_size: usize,
}

impl Default for PoolParams {
    fn default() -> Self {
        Self {
            pool_fraction: DEFAULT_POOL_FRACTION,
            pool_size: DEFAULT_POOL_SIZE,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsetSpec {
    /// Ascending agent indices.
    pub indices: Vec<usize>,
    pub protocol: Protocol,
    pub n: usize,
    pub seed: u64,
    /// Realised pool size (the panel size for `random`).
    pub pool: usize,
}

/// Pool for `protocol`: top agents by score, ties broken by lower index.
pub fn protocol_pool(metrics: &AgentMetrics, protocol: Protocol, params: &PoolParams) -> Result<Vec<usize>> {
    let n = metrics.len();
    let (scores, size) = match protocol {
        Protocol::Random => return Ok((0..n).collect()),
        Protocol::BiasVisibility => {
            if !(params.pool_fraction > 0.0 && params.pool_fraction <= 1.0) {
                return Err(Error::invalid("pool_fraction must lie in (0, 1]"));
            }
            let size = ((params.pool_fraction * n as f64).ceil() as usize).clamp(1, n);
            (metrics.visibility_scores(), size)
        }
        Protocol::BiasTopicXFollow | Protocol::BiasTopicTop => {
            if params.pool_size == 0 {
                return Err(Error::invalid("pool_size must be positive"));
            }
            let s = if protocol == Protocol::BiasTopicTop {
                metrics.topic_top_scores()
            } else {
                metrics.topic_x_follow_scores()
            };
            (s, params.pool_size.min(n))
        }
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(size);
    Ok(order)
}

/// Draws `n` agents uniformly from the pool, or the whole pool plus a uniform
/// complement when `n` is at least the pool size.
pub fn sample_subset(
    metrics: &AgentMetrics,
    protocol: Protocol,
    n: usize,
    seed: u64,
    params: &PoolParams,
) -> Result<SubsetSpec> {
    let total = metrics.len();
    if n == 0 || n > total {
        return Err(Error::invalid(format!("subset size {n} outside 1..={total}")));
    }
    let pool = protocol_pool(metrics, protocol, params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = if n < pool.len() {
        index::sample(&mut rng, pool.len(), n).into_iter().map(|k| pool[k]).collect()
    } else {
        let mut in_pool = vec![false; total];
        pool.iter().for_each(|&i| in_pool[i] = true);
        let rest: Vec<usize> = (0..total).filter(|&i| !in_pool[i]).collect();
        let mut out = pool.clone();
        out.extend(index::sample(&mut rng, rest.len(), n - pool.len()).into_iter().map(|k| rest[k]));
        out
    };
    indices.sort_unstable();
    Ok(SubsetSpec {
        indices,
        protocol,
        n,
        seed,
        pool: pool.len(),
    })
}
