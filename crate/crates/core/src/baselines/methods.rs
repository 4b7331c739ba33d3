use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::accum::Accumulator;
use super::CoalitionGame;
use crate::error::{Error, Result};

/// Largest `n` for which the `2^n` enumeration is attempted.
pub const EXACT_LIMIT: usize = 20;

/// Samples handled by one parallel task. Fixed so that the reduction tree is
/// independent of the pool size.
const SAMPLE_CHUNK: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampledEstimate {
    pub mean: Vec<f64>,
    /// Empirical standard error of each mean.
    pub std_err: Vec<f64>,
    pub samples: usize,
}

/// Generator for sample `index` under `seed`, independent of scheduling.
fn sample_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// `v([n]) - v([n] \ {i})`.
pub fn leave_one_out(game: &CoalitionGame) -> Result<Vec<f64>> {
    let n = game.n();
    if n < 2 {
        return Err(Error::invalid("leave-one-out needs at least two agents"));
    }
    let mut acc = Accumulator::new(game);
    (0..n).for_each(|i| acc.insert(i));
    let full = acc.value();
    Ok((0..n)
        .map(|i| {
            acc.remove(i);
            let without = acc.value();
            acc.insert(i);
            full - without
        })
        .collect())
}

/// `v(S)` for every mask `S`, visited in Gray-code order.
fn all_values(game: &CoalitionGame) -> Result<Vec<f64>> {
    let n = game.n();
    if n > EXACT_LIMIT {
        return Err(Error::Infeasible { n, limit: EXACT_LIMIT });
    }
    let mut values = vec![0.0; 1 << n];
    let mut acc = Accumulator::new(game);
    values[0] = acc.value();
    let mut mask = 0usize;
    for k in 1usize..(1 << n) {
        let bit = k.trailing_zeros() as usize;
        mask ^= 1 << bit;
        if mask & (1 << bit) != 0 {
            acc.insert(bit);
        } else {
            acc.remove(bit);
        }
        values[mask] = acc.value();
    }
    Ok(values)
}

/// Shapley value by full subset enumeration, `n <= 20`.
pub fn exact_shapley(game: &CoalitionGame) -> Result<Vec<f64>> {
    let n = game.n();
    let values = all_values(game)?;
    // weight[s] = s! (n - s - 1)! / n! for a coalition of size s not containing i.
    let mut weight = vec![0.0; n];
    weight[0] = 1.0 / n as f64;
    for s in 1..n {
        weight[s] = weight[s - 1] * s as f64 / (n - s) as f64;
    }
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let bit = 1usize << i;
            let mut acc = 0.0;
            for mask in 0..(1usize << n) {
                if mask & bit == 0 {
                    let s = mask.count_ones() as usize;
                    acc += weight[s] * (values[mask | bit] - values[mask]);
                }
            }
            acc
        })
        .collect())
}

/// Banzhaf value `2^{1-n} sum_{S not containing i} (v(S + i) - v(S))`, `n <= 20`.
pub fn exact_banzhaf(game: &CoalitionGame) -> Result<Vec<f64>> {
    let n = game.n();
    let values = all_values(game)?;
    let scale = 1.0 / (1usize << (n - 1)) as f64;
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let bit = 1usize << i;
            let mut acc = 0.0;
            for mask in 0..(1usize << n) {
                if mask & bit == 0 {
                    acc += values[mask | bit] - values[mask];
                }
            }
            acc * scale
        })
        .collect())
}

/// Per-agent running sums of marginals and of their squares.
struct Moments {
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

impl Moments {
    fn new(n: usize) -> Self {
        Self { sum: vec![0.0; n], sum_sq: vec![0.0; n] }
    }

    fn push(&mut self, i: usize, x: f64) {
        self.sum[i] += x;
        self.sum_sq[i] += x * x;
    }

    fn merge(mut self, other: &Moments) -> Self {
        for i in 0..self.sum.len() {
            self.sum[i] += other.sum[i];
            self.sum_sq[i] += other.sum_sq[i];
        }
        self
    }

    fn finish(self, m: usize) -> SampledEstimate {
        let mf = m as f64;
        let mean: Vec<f64> = self.sum.iter().map(|s| s / mf).collect();
        let std_err = self
            .sum_sq
            .iter()
            .zip(&mean)
            .map(|(sq, mu)| {
                if m < 2 {
                    return f64::NAN;
                }
                let var = ((sq - mf * mu * mu) / (mf - 1.0)).max(0.0);
                (var / mf).sqrt()
            })
            .collect();
        SampledEstimate { mean, std_err, samples: m }
    }
}

fn run_samples(
    game: &CoalitionGame,
    m: usize,
    one: impl Fn(&mut Accumulator<'_>, usize, &mut Moments) + Sync,
) -> Result<SampledEstimate> {
    if m == 0 {
        return Err(Error::invalid("sample count must be at least 1"));
    }
    let n = game.n();
    let starts: Vec<usize> = (0..m).step_by(SAMPLE_CHUNK).collect();
    let chunk = |&start: &usize| {
        let mut mom = Moments::new(n);
        let mut acc = Accumulator::new(game);
        for j in start..(start + SAMPLE_CHUNK).min(m) {
            one(&mut acc, j, &mut mom);
        }
        mom
    };
    let parts: Vec<Moments> = if game.value_function().parallel_safe() {
        starts.par_iter().map(chunk).collect()
    } else {
        starts.iter().map(chunk).collect()
    };
    let total = parts.iter().fold(Moments::new(n), |a, b| a.merge(b));
    Ok(total.finish(m))
}

/// Permutation Monte Carlo Shapley. Each permutation telescopes to
/// `v([n]) - v(empty)`, so the mean is efficient for every `m`.
pub fn sampled_shapley(game: &CoalitionGame, m: usize, seed: u64) -> Result<SampledEstimate> {
    let n = game.n();
    run_samples(game, m, |acc, j, mom| {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut sample_rng(seed, j));
        let mut prev = acc.value();
        for &i in &order {
            acc.insert(i);
            let cur = acc.value();
            mom.push(i, cur - prev);
            prev = cur;
        }
        for &i in &order {
            acc.remove(i);
        }
    })
}

/// Banzhaf by uniform random coalitions. Each sample draws one coalition `C`
/// and records, for every agent, `v(C + i) - v(C - i)`; `C - i` is uniform
/// over subsets of the other agents.
pub fn sampled_banzhaf(game: &CoalitionGame, m: usize, seed: u64) -> Result<SampledEstimate> {
    let n = game.n();
    run_samples(game, m, |acc, j, mom| {
        let mut rng = sample_rng(seed, j);
        let member: Vec<bool> = (0..n).map(|_| rng.random::<bool>()).collect();
        for i in (0..n).filter(|&i| member[i]) {
            acc.insert(i);
        }
        for i in 0..n {
            let marginal = if member[i] {
                let with = acc.value();
                acc.remove(i);
                let without = acc.value();
                acc.insert(i);
                with - without
            } else {
                let without = acc.value();
                acc.insert(i);
                let with = acc.value();
                acc.remove(i);
                with - without
            };
            mom.push(i, marginal);
        }
        for i in (0..n).filter(|&i| member[i]) {
            acc.remove(i);
        }
    })
}
