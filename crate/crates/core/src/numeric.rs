//! Order-fixed reductions.
//!
//! Every sum that feeds an attribution goes through these helpers so that the
//! result depends only on the data, never on how many worker threads ran.

use ndarray::ArrayView2;
use rayon::prelude::*;

const LEAF: usize = 64;
const CHUNK: usize = 1 << 14;
const ROW_CHUNK: usize = 1024;

/// Pairwise (cascade) summation with a fixed split pattern.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= LEAF {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Deterministic sum that may fan out over threads for long inputs.
pub fn sum(xs: &[f64]) -> f64 {
    if xs.len() <= CHUNK {
        return pairwise_sum(xs);
    }
    let partial: Vec<f64> = xs.par_chunks(CHUNK).map(pairwise_sum).collect();
    pairwise_sum(&partial)
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    sum(xs) / xs.len() as f64
}

/// Per-column sums of an `n x d` view; chunks of rows are reduced in a fixed order.
pub fn column_sums(z: ArrayView2<'_, f64>) -> Vec<f64> {
    let (n, d) = z.dim();
    if n == 0 {
        return vec![0.0; d];
    }
    let rows: Vec<usize> = (0..n).step_by(ROW_CHUNK).collect();
    let chunk = |&start: &usize| {
        let mut acc = vec![0.0; d];
        for row in z.slice(ndarray::s![start..(start + ROW_CHUNK).min(n), ..]).outer_iter() {
            for (a, x) in acc.iter_mut().zip(row) {
                *a += x;
            }
        }
        acc
    };
    let partial: Vec<Vec<f64>> = if rows.len() < 16 {
        rows.iter().map(chunk).collect()
    } else {
        rows.par_iter().map(chunk).collect()
    };
    (0..d)
        .map(|c| {
            let col: Vec<f64> = partial.iter().map(|p| p[c]).collect();
            pairwise_sum(&col)
        })
        .collect()
}

/// Row sums `g_i = sum_d z[i, d]`.
pub fn row_sums(z: ArrayView2<'_, f64>) -> Vec<f64> {
    z.outer_iter().map(|row| row.iter().sum()).collect()
}

/// Population mean and standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let m = mean(xs);
    let dev: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
    (m, mean(&dev).sqrt())
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let (mx, sx) = mean_std(x);
    let (my, sy) = mean_std(y);
    if sx == 0.0 || sy == 0.0 {
        return 0.0;
    }
    let prod: Vec<f64> = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).collect();
    mean(&prod) / (sx * sy)
}

/// Numerically stable `log(1 + e^x)`.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Median of a copy of `xs` (mean of the two middle values for even length).
pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn pairwise_matches_naive_on_small_integers() {
        let xs: Vec<f64> = (0..10_000).map(|i| (i % 17) as f64).collect();
        let naive: f64 = xs.iter().sum();
        assert_eq!(sum(&xs), naive);
    }

    #[test]
    fn sum_is_thread_count_independent() {
        let xs: Vec<f64> = (0..100_000).map(|i| ((i as f64) * 0.37).sin()).collect();
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| sum(&xs));
        let four = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(|| sum(&xs));
        assert_eq!(one.to_bits(), four.to_bits());
    }

    #[test]
    fn column_sums_small() {
        let z = Array2::from_shape_vec((3, 2), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(column_sums(z.view()), vec![9.0, 12.0]);
        assert_eq!(row_sums(z.view()), vec![3.0, 7.0, 11.0]);
    }

    #[test]
    fn softplus_is_stable() {
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(softplus(800.0), 800.0);
        assert!(softplus(-800.0) >= 0.0);
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-15);
    }
}
