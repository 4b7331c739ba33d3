//! Rank and vector agreement measures.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::pearson;

/// Kendall tau-b in `O(n log n)` (Knight's merge-sort algorithm).
///
/// Returns 1 when both inputs are constant and 0 when only one is.
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    assert_eq!(n, y.len(), "kendall_tau_b: length mismatch");
    if n < 2 {
        return 1.0;
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(y[a].total_cmp(&y[b])));

    let pairs = |run: u64| run * (run.saturating_sub(1)) / 2;
    let n0 = pairs(n as u64);
    let (mut tied_x, mut tied_xy) = (0u64, 0u64);
    let (mut run_x, mut run_xy) = (1u64, 1u64);
    for w in idx.windows(2) {
        let (a, b) = (w[0], w[1]);
        if x[a] == x[b] {
            run_x += 1;
            if y[a] == y[b] {
                run_xy += 1;
            } else {
                tied_xy += pairs(run_xy);
                run_xy = 1;
            }
        } else {
            tied_x += pairs(run_x);
            tied_xy += pairs(run_xy);
            run_x = 1;
            run_xy = 1;
        }
    }
    tied_x += pairs(run_x);
    tied_xy += pairs(run_xy);

    let mut ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
    let swaps = merge_count(&mut ys);

    let mut tied_y = 0u64;
    let mut run_y = 1u64;
    for w in ys.windows(2) {
        if w[0] == w[1] {
            run_y += 1;
        } else {
            tied_y += pairs(run_y);
            run_y = 1;
        }
    }
    tied_y += pairs(run_y);

    let (dx, dy) = (n0 - tied_x, n0 - tied_y);
    match (dx, dy) {
        (0, 0) => 1.0,
        (0, _) | (_, 0) => 0.0,
        _ => {
            let concordant_minus_discordant =
                n0 as f64 - tied_x as f64 - tied_y as f64 + tied_xy as f64 - 2.0 * swaps as f64;
            concordant_minus_discordant / ((dx as f64) * (dy as f64)).sqrt()
        }
    }
}

/// Sorts `v` ascending and returns the number of strictly inverted pairs.
fn merge_count(v: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = merge_count(&mut v[..mid]) + merge_count(&mut v[mid..]);
    let mut merged = Vec::with_capacity(n);
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j] < v[i] {
            swaps += (mid - i) as u64;
            merged.push(v[j]);
            j += 1;
        } else {
            merged.push(v[i]);
            i += 1;
        }
    }
    merged.extend_from_slice(&v[i..mid]);
    merged.extend_from_slice(&v[j..n]);
    v.copy_from_slice(&merged);
    swaps
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && x[idx[end]] == x[idx[start]] {
            end += 1;
        }
        let avg = (start + end + 1) as f64 / 2.0;
        for &i in &idx[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

/// Spearman rho as the Pearson correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len(), "spearman: length mismatch");
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let cx = rx.iter().all(|&r| r == rx[0]);
    let cy = ry.iter().all(|&r| r == ry[0]);
    match (cx, cy) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        _ => pearson(&rx, &ry).clamp(-1.0, 1.0),
    }
}

/// Indices of the `k` largest `|x|`, ties broken by lower index.
pub fn top_k_by_magnitude(x: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[b].abs().total_cmp(&x[a].abs()).then(a.cmp(&b)));
    idx.truncate(k.min(x.len()));
    idx
}

pub fn jaccard_top_k(a: &[f64], b: &[f64], k: usize) -> f64 {
    let ta = top_k_by_magnitude(a, k);
    let tb = top_k_by_magnitude(b, k);
    let inter = ta.iter().filter(|i| tb.contains(i)).count();
    let union = ta.len() + tb.len() - inter;
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return if na == nb { 1.0 } else { 0.0 };
    }
    dot / (na * nb)
}

pub fn mae(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "mae: length mismatch");
    if a.is_empty() {
        return 0.0;
    }
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

/// Relative L1 distance `sum |a - b| / sum |b|`.
pub fn relative_l1(a: &[f64], reference: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(reference).map(|(x, y)| (x - y).abs()).sum();
    let den: f64 = reference.iter().map(|y| y.abs()).sum();
    num / den
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankAgreement {
    pub kendall_tau: f64,
    pub spearman_rho: f64,
    pub jaccard_top_k: f64,
    pub k: usize,
}

pub fn rank_agreement(a: &[f64], b: &[f64], k: usize) -> Result<RankAgreement> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("{} vs {} entries", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(Error::invalid("rank agreement needs at least two entries"));
    }
    Ok(RankAgreement {
        kendall_tau: kendall_tau_b(a, b),
        spearman_rho: spearman(a, b),
        jaccard_top_k: jaccard_top_k(a, b, k),
        k,
    })
}
