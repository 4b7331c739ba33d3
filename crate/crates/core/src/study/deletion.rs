//! Deletion faithfulness: overwrite the top-`k` attributed agents with a
//! baseline action and measure how much of the macro indicator disappears.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attribution::DEGENERATE_TOL;
use crate::error::{Error, Result};
use crate::numeric::mean_std;
use crate::panel::FeaturePanel;
use crate::valuefn::ValueFunction;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeletionReport {
    pub target_step: usize,
    /// `f(z_t*)`.
    pub value: f64,
    /// Normalised drop after overwriting the top `k` agents, `k = 1..=k_max`.
    pub drop_at: BTreeMap<usize, f64>,
    /// Mean of the drops.
    pub auc: f64,
}

/// `argmax f(z_t)` over the second half of the window (0-based `t >= ceil(T/2) - 1`),
/// earliest step on ties.
pub fn target_step(f: &ValueFunction, panel: &FeaturePanel) -> Result<usize> {
    let t = panel.n_steps();
    let from = t.div_ceil(2).saturating_sub(1);
    let mut best = (from, f64::NEG_INFINITY);
    for s in from..t {
        let v = f.evaluate(panel.step(s))?;
        if v > best.1 {
            best = (s, v);
        }
    }
    Ok(best.0)
}

/// Agents by attribution descending, ties by lower index. Pass normalised
/// shares when the macro change may be negative.
pub fn rank_by_attribution(phi: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..phi.len()).collect();
    idx.sort_by(|&a, &b| phi[b].total_cmp(&phi[a]).then(a.cmp(&b)));
    idx
}

/// Drop for `k` is `(f(z) - f(z with the first k ranked rows set to action)) /
/// (f(z) - f(every row set to action))`. A negative drop means `f` increased.
pub fn deletion_faithfulness(
    f: &ValueFunction,
    panel: &FeaturePanel,
    ranking: &[usize],
    k_max: usize,
    action: Option<&[f64]>,
) -> Result<DeletionReport> {
    let (n, d) = (panel.n_agents(), panel.n_dims());
    if k_max == 0 || k_max > n {
        return Err(Error::invalid(format!("k_max {k_max} outside 1..={n}")));
    }
    if ranking.len() < k_max || ranking.iter().any(|&i| i >= n) {
        return Err(Error::invalid("ranking must list at least k_max valid agents"));
    }
    let action = match action {
        Some(a) if a.len() != d => return Err(Error::Shape(format!("action has {} entries for {d} dims", a.len()))),
        Some(a) => Array1::from(a.to_vec()),
        None => Array1::zeros(d),
    };
    let t = target_step(f, panel)?;
    let z = panel.step(t);
    let value = f.evaluate(z)?;
    let all = Array2::from_shape_fn((n, d), |(_, k)| action[k]);
    let scale = value - f.evaluate(all.view())?;
    if scale.abs() <= DEGENERATE_TOL {
        return Err(Error::DegenerateMacroChange {
            delta_v: scale,
            tolerance: DEGENERATE_TOL,
        });
    }
    let mut work = z.to_owned();
    let mut drop_at = BTreeMap::new();
    for (k, &i) in ranking.iter().take(k_max).enumerate() {
        work.row_mut(i).assign(&action);
        drop_at.insert(k + 1, (value - f.evaluate(work.view())?) / scale);
    }
    let auc = drop_at.values().sum::<f64>() / k_max as f64;
    Ok(DeletionReport {
        target_step: t,
        value,
        drop_at,
        auc,
    })
}

/// Mean and std of the AUC over `reps` uniformly random rankings.
pub fn random_ranking_auc(
    f: &ValueFunction,
    panel: &FeaturePanel,
    k_max: usize,
    action: Option<&[f64]>,
    reps: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if reps == 0 {
        return Err(Error::invalid("need at least one random ranking"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..panel.n_agents()).collect();
    let aucs = (0..reps)
        .map(|_| {
            order.shuffle(&mut rng);
            Ok(deletion_faithfulness(f, panel, &order, k_max, action)?.auc)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(mean_std(&aucs))
}
