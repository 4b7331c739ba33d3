//! Aumann-Shapley attribution: closed forms for the four analytic indicators,
//! the `K`-point midpoint path integral for any differentiable `f`, and
//! aggregation to steps and groups.

mod analytic;
mod axioms;
mod output;
mod path;
mod temporal;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::pairwise_sum;

pub use analytic::attribute_analytic;
pub use axioms::{axiom_suite, AxiomReport, EFFICIENCY_TOL, EXACT_AXIOM_TOL};
pub use output::{efficiency_tolerance, write_attribution_csv, AttributionSummary, ATTRIBUTION_CSV_SCHEMA};
pub use path::{attribute_path_between, attribute_path_integral, midpoint_nodes, PathKind};
pub use temporal::{attribute_temporal, TemporalAttribution};

pub const DEFAULT_K: usize = 30;
/// Below this `|delta_v|` normalisation is refused.
pub const DEGENERATE_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum BaselineSpec {
    Zero,
    /// Per-coordinate mean over the agents of the configuration being attributed.
    PopulationMean,
    /// Each agent's own features at the first step.
    FirstStep,
    CustomVector(Vec<f64>),
}

impl BaselineSpec {
    pub fn name(&self) -> &'static str {
        match self {
            BaselineSpec::Zero => "zero",
            BaselineSpec::PopulationMean => "population_mean",
            BaselineSpec::FirstStep => "first_step",
            BaselineSpec::CustomVector(_) => "custom_vector",
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            BaselineSpec::Zero => true,
            BaselineSpec::CustomVector(v) => v.iter().all(|&x| x == 0.0),
            _ => false,
        }
    }

    /// Baseline configuration `z0` with the shape of `z`. `first` is the
    /// first-step configuration, required only by [`BaselineSpec::FirstStep`].
    pub fn resolve(&self, z: ArrayView2<'_, f64>, first: Option<ArrayView2<'_, f64>>) -> Result<Array2<f64>> {
        let (n, d) = z.dim();
        match self {
            BaselineSpec::Zero => Ok(Array2::zeros((n, d))),
            BaselineSpec::PopulationMean => {
                let means: Vec<f64> = crate::numeric::column_sums(z).iter().map(|s| s / n as f64).collect();
                Ok(Array2::from_shape_fn((n, d), |(_, k)| means[k]))
            }
            BaselineSpec::FirstStep => match first {
                Some(f) if f.dim() == (n, d) => Ok(f.to_owned()),
                Some(f) => Err(Error::Shape(format!("first step is {:?}, expected {:?}", f.dim(), (n, d)))),
                None => Err(Error::invalid("first_step baseline needs a temporal panel")),
            },
            BaselineSpec::CustomVector(v) => {
                if v.len() != d {
                    return Err(Error::Shape(format!("baseline has {} entries for {d} dims", v.len())));
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::invalid("baseline vector is not finite"));
                }
                Ok(Array2::from_shape_fn((n, d), |(_, k)| v[k]))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Method {
    Analytic,
    Midpoint { k: usize },
    PermutedPath { k: usize, seed: u64 },
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Analytic => "analytic",
            Method::Midpoint { .. } => "midpoint",
            Method::PermutedPath { .. } => "permuted_path",
        }
    }

    pub fn k(&self) -> Option<usize> {
        match self {
            Method::Analytic => None,
            Method::Midpoint { k } | Method::PermutedPath { k, .. } => Some(*k),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributionResult {
    pub phi: Vec<f64>,
    /// `f(z) - f(z0)`.
    pub delta_v: f64,
    pub normalized: Option<Vec<f64>>,
    pub baseline: BaselineSpec,
    pub method: Method,
    /// Adjacent equal composites whose Gini ranks were broken by index.
    pub rank_ties: usize,
}

impl AttributionResult {
    pub fn n(&self) -> usize {
        self.phi.len()
    }

    pub fn total(&self) -> f64 {
        pairwise_sum(&self.phi)
    }

    pub fn efficiency_residual(&self) -> f64 {
        (self.total() - self.delta_v).abs()
    }

    pub fn normalized(&self) -> Result<&[f64]> {
        self.normalized
            .as_deref()
            .ok_or_else(|| Error::invalid("attribution has not been normalised"))
    }
}

/// Dispatches on `method`; `FirstStep` baselines need [`attribute_temporal`].
pub fn attribute(
    f: &crate::valuefn::ValueFunction,
    z: ArrayView2<'_, f64>,
    baseline: &BaselineSpec,
    method: Method,
) -> Result<AttributionResult> {
    temporal::attribute_with_baseline(f, z, None, baseline, method)
}

/// Fills `phi / delta_v`.
pub fn normalize(mut result: AttributionResult) -> Result<AttributionResult> {
    if !(result.delta_v.abs() > DEGENERATE_TOL) {
        return Err(Error::DegenerateMacroChange {
            delta_v: result.delta_v,
            tolerance: DEGENERATE_TOL,
        });
    }
    let dv = result.delta_v;
    result.normalized = Some(result.phi.iter().map(|p| p / dv).collect());
    Ok(result)
}

/// `R_G = sum of shares over members of `group``, with `labels[i]` the group of the i-th share.
pub fn group_share(shares: &[f64], labels: &[usize], group: usize) -> f64 {
    let members: Vec<f64> = shares
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l == group)
        .map(|(s, _)| *s)
        .collect();
    pairwise_sum(&members)
}

/// Shares of every group `0..n_groups`.
pub fn group_shares(shares: &[f64], labels: &[usize], n_groups: usize) -> Result<Vec<f64>> {
    if shares.len() != labels.len() {
        return Err(Error::Shape(format!("{} shares for {} labels", shares.len(), labels.len())));
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= n_groups) {
        return Err(Error::invalid(format!("group label {l} out of range")));
    }
    Ok((0..n_groups).map(|g| group_share(shares, labels, g)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn baselines_resolve() {
        let z = array![[1.0, 2.0], [3.0, 6.0]];
        assert_eq!(BaselineSpec::Zero.resolve(z.view(), None).unwrap(), Array2::<f64>::zeros((2, 2)));
        assert_eq!(
            BaselineSpec::PopulationMean.resolve(z.view(), None).unwrap(),
            array![[2.0, 4.0], [2.0, 4.0]]
        );
        assert!(BaselineSpec::FirstStep.resolve(z.view(), None).is_err());
        assert!(BaselineSpec::CustomVector(vec![1.0]).resolve(z.view(), None).is_err());
        assert!(BaselineSpec::CustomVector(vec![0.0, 0.0]).is_zero());
    }

    #[test]
    fn normalize_refuses_degenerate() {
        let r = AttributionResult {
            phi: vec![1.0, -1.0],
            delta_v: 0.0,
            normalized: None,
            baseline: BaselineSpec::Zero,
            method: Method::Analytic,
            rank_ties: 0,
        };
        assert!(matches!(normalize(r), Err(Error::DegenerateMacroChange { .. })));
    }

    #[test]
    fn shares_partition_to_one() {
        let s = [0.2, 0.5, 0.1, 0.2];
        let shares = group_shares(&s, &[0, 2, 1, 2], 3).unwrap();
        assert_eq!(shares, vec![0.2, 0.1, 0.7]);
        assert_eq!(group_share(&s, &[0; 4], 0), 1.0);
        assert!(group_shares(&s, &[0, 3, 0, 0], 3).is_err());
    }
}
