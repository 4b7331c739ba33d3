use ndarray::{Array2, ArrayView2, Zip};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{AttributionResult, BaselineSpec, Method};
use crate::error::{Error, Result};
use crate::valuefn::ValueFunction;

/// Quadrature nodes handled by one parallel task; fixed so the summation tree
/// does not depend on the pool size.
const NODE_CHUNK: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PathKind {
    Linear,
    /// Agents fade in one at a time in a seed-determined order.
    Permuted { seed: u64 },
}

/// `tau_k = (k - 1/2) / K` for `k = 1..=K`.
pub fn midpoint_nodes(k: usize) -> Vec<f64> {
    (1..=k).map(|j| (j as f64 - 0.5) / k as f64).collect()
}

pub fn attribute_path_integral(
    f: &ValueFunction,
    z: ArrayView2<'_, f64>,
    baseline: &BaselineSpec,
    k: usize,
    path: PathKind,
) -> Result<AttributionResult> {
    let z0 = baseline.resolve(z, None)?;
    attribute_path_between(f, z, z0.view(), baseline, k, path)
}

/// Path integral from an explicit baseline configuration `z0`.
pub fn attribute_path_between(
    f: &ValueFunction,
    z: ArrayView2<'_, f64>,
    z0: ArrayView2<'_, f64>,
    baseline: &BaselineSpec,
    k: usize,
    path: PathKind,
) -> Result<AttributionResult> {
    if k == 0 {
        return Err(Error::invalid("K must be at least 1"));
    }
    if z.dim() != z0.dim() {
        return Err(Error::Shape(format!("baseline {:?} vs features {:?}", z0.dim(), z.dim())));
    }
    let delta_v = f.evaluate(z)? - f.evaluate(z0)?;
    let diff = &z - &z0;
    let (mean_grad, rank_ties) = match path {
        PathKind::Linear => linear_mean_gradient(f, z0, diff.view(), k)?,
        PathKind::Permuted { seed } => permuted_mean_gradient(f, z, z0, k, seed)?,
    };
    let phi = diff
        .outer_iter()
        .zip(mean_grad.outer_iter())
        .map(|(dz, g)| dz.iter().zip(g.iter()).map(|(a, b)| a * b).sum())
        .collect();
    let method = match path {
        PathKind::Linear => Method::Midpoint { k },
        PathKind::Permuted { seed } => Method::PermutedPath { k, seed },
    };
    Ok(AttributionResult {
        phi,
        delta_v,
        normalized: None,
        baseline: baseline.clone(),
        method,
        rank_ties,
    })
}

fn gradient_at(f: &ValueFunction, at: ArrayView2<'_, f64>) -> Result<(Array2<f64>, usize)> {
    let g = f.gradient_detailed(at)?;
    Ok((g.values, g.rank_ties))
}

/// `(1/K) sum_k grad f(z0 + tau_k (z - z0))` and the largest rank-tie count seen.
fn linear_mean_gradient(
    f: &ValueFunction,
    z0: ArrayView2<'_, f64>,
    diff: ArrayView2<'_, f64>,
    k: usize,
) -> Result<(Array2<f64>, usize)> {
    let nodes = midpoint_nodes(k);
    let chunk_sum = |taus: &[f64]| -> Result<(Array2<f64>, usize)> {
        let mut acc = Array2::zeros(diff.dim());
        let mut ties = 0;
        let mut point = Array2::zeros(diff.dim());
        for &tau in taus {
            Zip::from(&mut point).and(z0).and(diff).for_each(|p, &b, &d| *p = b + tau * d);
            let (g, t) = gradient_at(f, point.view())?;
            acc += &g;
            ties = ties.max(t);
        }
        Ok((acc, ties))
    };
    let partial: Vec<(Array2<f64>, usize)> = if f.parallel_safe() {
        nodes.par_chunks(NODE_CHUNK).map(chunk_sum).collect::<Result<_>>()?
    } else {
        nodes.chunks(NODE_CHUNK).map(chunk_sum).collect::<Result<_>>()?
    };
    let mut total = Array2::zeros(diff.dim());
    let mut ties = 0;
    for (acc, t) in &partial {
        total += acc;
        ties = ties.max(*t);
    }
    total /= k as f64;
    Ok((total, ties))
}

/// Per-agent mean gradient along the piecewise-linear path that moves one
/// agent at a time from `z0` to `z`.
fn permuted_mean_gradient(
    f: &ValueFunction,
    z: ArrayView2<'_, f64>,
    z0: ArrayView2<'_, f64>,
    k: usize,
    seed: u64,
) -> Result<(Array2<f64>, usize)> {
    let (n, d) = z.dim();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let nodes = midpoint_nodes(k);
    let mut point = z0.to_owned();
    let mut mean = Array2::zeros((n, d));
    let mut ties = 0;
    for &i in &order {
        for &tau in &nodes {
            for c in 0..d {
                point[[i, c]] = z0[[i, c]] + tau * (z[[i, c]] - z0[[i, c]]);
            }
            let (g, t) = gradient_at(f, point.view())?;
            ties = ties.max(t);
            for c in 0..d {
                mean[[i, c]] += g[[i, c]];
            }
        }
        for c in 0..d {
            point[[i, c]] = z[[i, c]];
            mean[[i, c]] /= k as f64;
        }
    }
    Ok((mean, ties))
}
