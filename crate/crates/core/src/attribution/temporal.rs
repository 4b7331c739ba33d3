use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;

use super::{attribute_analytic, path, AttributionResult, BaselineSpec, Method};
use crate::error::{Error, Result};
use crate::numeric::pairwise_sum;
use crate::panel::FeaturePanel;
use crate::valuefn::ValueFunction;

/// Per-agent, per-step attribution `phi[i, t]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TemporalAttribution {
    pub phi: Array2<f64>,
    pub delta_v: Vec<f64>,
    pub baseline: BaselineSpec,
    pub method: Method,
    pub rank_ties: usize,
}

impl TemporalAttribution {
    /// `Phi_i = sum_t phi[i, t]`.
    pub fn agent_totals(&self) -> Vec<f64> {
        self.phi.outer_iter().map(|row| pairwise_sum(&row.to_vec())).collect()
    }

    /// `Phi_t = sum_i phi[i, t]`.
    pub fn step_totals(&self) -> Vec<f64> {
        self.phi.columns().into_iter().map(|c| pairwise_sum(&c.to_vec())).collect()
    }

    pub fn total_delta_v(&self) -> f64 {
        pairwise_sum(&self.delta_v)
    }

    pub fn step_residuals(&self) -> Vec<f64> {
        self.step_totals().iter().zip(&self.delta_v).map(|(s, d)| (s - d).abs()).collect()
    }

    /// Largest per-step efficiency residual relative to `max(1, |delta_v_t|)`.
    pub fn max_relative_residual(&self) -> f64 {
        self.step_residuals()
            .iter()
            .zip(&self.delta_v)
            .map(|(r, d)| r / d.abs().max(1.0))
            .fold(0.0, f64::max)
    }

    pub fn step(&self, t: usize) -> AttributionResult {
        AttributionResult {
            phi: self.phi.column(t).to_vec(),
            delta_v: self.delta_v[t],
            normalized: None,
            baseline: self.baseline.clone(),
            method: self.method,
            rank_ties: self.rank_ties,
        }
    }

    /// Window-level attribution: `Phi_i` with `delta_v = sum_t delta_v_t`.
    pub fn aggregate(&self) -> AttributionResult {
        AttributionResult {
            phi: self.agent_totals(),
            delta_v: self.total_delta_v(),
            normalized: None,
            baseline: self.baseline.clone(),
            method: self.method,
            rank_ties: self.rank_ties,
        }
    }

    /// `Phi_{G,t}` as a `groups x T` matrix.
    pub fn group_step_totals(&self, labels: &[usize], n_groups: usize) -> Result<Array2<f64>> {
        let (n, t) = self.phi.dim();
        if labels.len() != n {
            return Err(Error::Shape(format!("{} labels for {n} agents", labels.len())));
        }
        let mut out = Array2::zeros((n_groups, t));
        for s in 0..t {
            let col = self.phi.column(s).to_vec();
            for (g, v) in super::group_shares(&col, labels, n_groups)?.into_iter().enumerate() {
                out[[g, s]] = v;
            }
        }
        Ok(out)
    }
}

pub(crate) fn attribute_with_baseline(
    f: &ValueFunction,
    z: ArrayView2<'_, f64>,
    first: Option<ArrayView2<'_, f64>>,
    baseline: &BaselineSpec,
    method: Method,
) -> Result<AttributionResult> {
    match method {
        Method::Analytic => attribute_analytic(f, z, baseline),
        Method::Midpoint { k } => {
            let z0 = baseline.resolve(z, first)?;
            path::attribute_path_between(f, z, z0.view(), baseline, k, path::PathKind::Linear)
        }
        Method::PermutedPath { k, seed } => {
            let z0 = baseline.resolve(z, first)?;
            path::attribute_path_between(f, z, z0.view(), baseline, k, path::PathKind::Permuted { seed })
        }
    }
}

/// Attributes every step independently on its own slice `z_t`.
pub fn attribute_temporal(
    f: &ValueFunction,
    panel: &FeaturePanel,
    baseline: &BaselineSpec,
    method: Method,
) -> Result<TemporalAttribution> {
    let (n, t) = (panel.n_agents(), panel.n_steps());
    let first = panel.step(0);
    let one = |s: usize| attribute_with_baseline(f, panel.step(s), Some(first), baseline, method);
    let steps: Vec<AttributionResult> = if f.parallel_safe() && t > 1 {
        (0..t).into_par_iter().map(one).collect::<Result<_>>()?
    } else {
        (0..t).map(one).collect::<Result<_>>()?
    };
    let mut phi = Array2::zeros((n, t));
    for (s, r) in steps.iter().enumerate() {
        for (i, p) in r.phi.iter().enumerate() {
            phi[[i, s]] = *p;
        }
    }
    Ok(TemporalAttribution {
        phi,
        delta_v: steps.iter().map(|r| r.delta_v).collect(),
        baseline: baseline.clone(),
        method,
        rank_ties: steps.iter().map(|r| r.rank_ties).max().unwrap_or(0),
    })
}
