//! Feature panels: an `N x T x D` tensor of nonnegative per-agent features.

mod container;
mod ingest;
mod synthetic;
mod tiers;

use std::collections::HashSet;

use ndarray::{Array2, Array3, ArrayView2, ArrayView3, Axis};

use crate::error::{Error, Result};

pub use container::{PANEL_CSV_SCHEMA, read_panel, read_panel_file, write_panel, write_panel_csv, write_panel_file};
pub use ingest::{
    ingest_events, parse_events, read_events_file, read_follower_snapshot, EventKind, EventRecord, IngestConfig,
    IngestReport, ParsedEvents,
};
pub use synthetic::{generate_raw, generate_synthetic, FeatureLaw, SyntheticPanelSpec};
pub use tiers::{cut_positions, make_tier_partition, Anchor, TierPartition, DEFAULT_CUTS};

pub const DEFAULT_DIM_NAMES: [&str; 3] = ["reach", "activity", "resonance"];

#[derive(Clone, Debug, PartialEq)]
pub struct FeaturePanel {
    features: Array3<f64>,
    agent_ids: Vec<String>,
    dim_names: Vec<String>,
}

impl FeaturePanel {
    /// Validates shape, id uniqueness, and that every value is finite and nonnegative.
    pub fn new(features: Array3<f64>, agent_ids: Vec<String>, dim_names: Vec<String>) -> Result<Self> {
        let (n, t, d) = features.dim();
        if n == 0 || t == 0 || d == 0 {
            return Err(Error::Shape(format!("panel dims must be positive, got ({n}, {t}, {d})")));
        }
        if agent_ids.len() != n {
            return Err(Error::Shape(format!("{} agent ids for {n} agents", agent_ids.len())));
        }
        if dim_names.len() != d {
            return Err(Error::Shape(format!("{} dim names for {d} dims", dim_names.len())));
        }
        let mut seen = HashSet::with_capacity(n);
        for id in &agent_ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::invalid(format!("duplicate agent id `{id}`")));
            }
        }
        for ((i, _, k), v) in features.indexed_iter() {
            if !v.is_finite() {
                return Err(Error::NonFinite { row: i, col: k });
            }
            if *v < 0.0 {
                return Err(Error::invalid(format!("negative feature {v} for agent {i}, dim {k}")));
            }
        }
        Ok(Self { features, agent_ids, dim_names })
    }

    /// Panel with generated ids `a0, a1, ...` and default dim names when `D = 3`.
    pub fn with_default_ids(features: Array3<f64>) -> Result<Self> {
        let (n, _, d) = features.dim();
        let ids = (0..n).map(|i| format!("a{i}")).collect();
        Self::new(features, ids, default_dim_names(d))
    }

    /// Single-step panel from an `n x D` matrix.
    pub fn from_matrix(z: Array2<f64>) -> Result<Self> {
        let (n, d) = z.dim();
        let features = z.into_shape_with_order((n, 1, d)).map_err(|e| Error::Shape(e.to_string()))?;
        Self::with_default_ids(features)
    }

    pub fn n_agents(&self) -> usize {
        self.features.dim().0
    }

    pub fn n_steps(&self) -> usize {
        self.features.dim().1
    }

    pub fn n_dims(&self) -> usize {
        self.features.dim().2
    }

    pub fn features(&self) -> ArrayView3<'_, f64> {
        self.features.view()
    }

    pub fn agent_ids(&self) -> &[String] {
        &self.agent_ids
    }

    pub fn dim_names(&self) -> &[String] {
        &self.dim_names
    }

    pub fn dim_index(&self, name: &str) -> Option<usize> {
        self.dim_names.iter().position(|d| d == name)
    }

    /// The `n x D` configuration at step `t`.
    pub fn step(&self, t: usize) -> ArrayView2<'_, f64> {
        self.features.index_axis(Axis(1), t)
    }

    /// Sum over steps, giving one `n x D` configuration.
    pub fn summed_over_steps(&self) -> Array2<f64> {
        self.features.sum_axis(Axis(1))
    }

    /// Panel restricted to `rows`, in the given order.
    pub fn select(&self, rows: &[usize]) -> Result<Self> {
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.n_agents()) {
            return Err(Error::invalid(format!("agent index {bad} out of range")));
        }
        Ok(Self {
            features: self.features.select(Axis(0), rows),
            agent_ids: rows.iter().map(|&r| self.agent_ids[r].clone()).collect(),
            dim_names: self.dim_names.clone(),
        })
    }

    pub fn into_features(self) -> Array3<f64> {
        self.features
    }
}

pub(crate) fn default_dim_names(d: usize) -> Vec<String> {
    if d == DEFAULT_DIM_NAMES.len() {
        DEFAULT_DIM_NAMES.iter().map(|s| s.to_string()).collect()
    } else {
        (0..d).map(|k| format!("dim{k}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    #[test]
    fn rejects_negative_and_duplicates() {
        let mut f = Array3::<f64>::zeros((2, 1, 3));
        assert!(FeaturePanel::with_default_ids(f.clone()).is_ok());
        let dup = FeaturePanel::new(f.clone(), vec!["x".into(), "x".into()], default_dim_names(3));
        assert!(dup.is_err());
        f[[1, 0, 2]] = -0.5;
        assert!(FeaturePanel::with_default_ids(f.clone()).is_err());
        f[[1, 0, 2]] = f64::NAN;
        assert!(matches!(
            FeaturePanel::with_default_ids(f),
            Err(Error::NonFinite { row: 1, col: 2 })
        ));
    }

    #[test]
    fn select_keeps_ids() {
        let f = Array3::from_shape_fn((4, 2, 3), |(i, t, k)| (i * 100 + t * 10 + k) as f64);
        let p = FeaturePanel::with_default_ids(f).unwrap();
        let s = p.select(&[3, 1]).unwrap();
        assert_eq!(s.agent_ids(), &["a3".to_string(), "a1".to_string()]);
        assert_eq!(s.step(1)[[0, 2]], 312.0);
        assert_eq!(p.summed_over_steps()[[1, 0]], 100.0 + 110.0);
    }
}
