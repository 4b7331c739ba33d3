//! Macro value functions `f_n` over an `n x D` feature configuration.
//!
//! Four permutation-invariant indicators (mean composite, saturating product of
//! coordinate means, variance and Gini mean difference of the composite), three
//! index-weighted benchmark functions with known attributions, and a
//! user-supplied callback.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use ndarray::{Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{column_sums, pairwise_sum, row_sums, sigmoid, softplus};

/// Paper-default softplus scale.
pub const DEFAULT_SOFTPLUS_SCALE: f64 = 0.35;

pub type EvalFn = dyn Fn(ArrayView2<'_, f64>) -> f64 + Send + Sync;
pub type GradFn = dyn Fn(ArrayView2<'_, f64>) -> Array2<f64> + Send + Sync;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueKind {
    Lin,
    Heat,
    Var,
    Gini,
    Additive,
    QuadraticCross,
    Softplus,
    Custom,
}

impl ValueKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ValueKind::Lin => "lin",
            ValueKind::Heat => "heat",
            ValueKind::Var => "var",
            ValueKind::Gini => "gini",
            ValueKind::Additive => "additive",
            ValueKind::QuadraticCross => "quadratic_cross",
            ValueKind::Softplus => "softplus",
            ValueKind::Custom => "custom",
        }
    }
}

impl fmt::Display for ValueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ValueKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "lin" | "linear" => ValueKind::Lin,
            "heat" => ValueKind::Heat,
            "var" | "variance" => ValueKind::Var,
            "gini" => ValueKind::Gini,
            "additive" | "add" => ValueKind::Additive,
            "quadratic_cross" | "quadratic" | "quad" => ValueKind::QuadraticCross,
            "softplus" | "nl" => ValueKind::Softplus,
            "custom" => ValueKind::Custom,
            other => return Err(Error::invalid(format!("unknown value function `{other}`"))),
        })
    }
}

/// User-supplied value function. The gradient callback is optional; without it
/// central finite differences are used.
#[derive(Clone)]
pub struct CustomFn {
    pub name: String,
    eval: Arc<EvalFn>,
    grad: Option<Arc<GradFn>>,
    /// Callbacks that are not safe to call concurrently set this; every caller
    /// in the crate then evaluates them from a single thread.
    pub single_threaded: bool,
}

impl CustomFn {
    pub fn new(
        name: impl Into<String>,
        eval: impl Fn(ArrayView2<'_, f64>) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            eval: Arc::new(eval),
            grad: None,
            single_threaded: false,
        }
    }

    pub fn with_gradient(
        mut self,
        grad: impl Fn(ArrayView2<'_, f64>) -> Array2<f64> + Send + Sync + 'static,
    ) -> Self {
        self.grad = Some(Arc::new(grad));
        self
    }

    pub fn single_threaded(mut self) -> Self {
        self.single_threaded = true;
        self
    }

    pub fn has_gradient(&self) -> bool {
        self.grad.is_some()
    }
}

impl fmt::Debug for CustomFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomFn")
            .field("name", &self.name)
            .field("has_gradient", &self.grad.is_some())
            .field("single_threaded", &self.single_threaded)
            .finish()
    }
}

#[derive(Clone, Debug)]
pub enum ValueFunction {
    /// Mean of the per-agent composite `g_i = sum_d z_{i,d}`.
    Lin,
    /// `log(1 + prod_d m_d)` with `m_d` the per-coordinate mean.
    Heat,
    /// Population variance of `g`.
    Var,
    /// Gini mean difference `(1 / 2n^2) sum_{i,j} |g_i - g_j|`.
    Gini,
    /// `sum_{i,d} W[i,d] z[i,d]`.
    Additive { weights: Array2<f64> },
    /// `sum_{i,d} Q[i,d] z[i,d]^2 + 1/2 s^T C s` with `s_i = sum_d z[i,d]`.
    QuadraticCross {
        diag: Array2<f64>,
        coupling: Array2<f64>,
    },
    /// `softplus(a * s) / a` with `s = sum_{i,d} W[i,d] z[i,d]`.
    Softplus { scale: f64, weights: Array2<f64> },
    Custom(CustomFn),
}

/// Gradient together with how many adjacent equal composites the Gini rank
/// assignment had to break.
#[derive(Clone, Debug)]
pub struct Gradient {
    pub values: Array2<f64>,
    pub rank_ties: usize,
}

impl ValueFunction {
    pub fn from_kind(kind: ValueKind) -> Result<Self> {
        Ok(match kind {
            ValueKind::Lin => ValueFunction::Lin,
            ValueKind::Heat => ValueFunction::Heat,
            ValueKind::Var => ValueFunction::Var,
            ValueKind::Gini => ValueFunction::Gini,
            other => {
                return Err(Error::invalid(format!(
                    "`{other}` needs parameters; use its dedicated constructor"
                )))
            }
        })
    }

    pub fn additive(weights: Array2<f64>) -> Result<Self> {
        check_all_finite(weights.view())?;
        Ok(ValueFunction::Additive { weights })
    }

    pub fn quadratic_cross(diag: Array2<f64>, coupling: Array2<f64>) -> Result<Self> {
        check_all_finite(diag.view())?;
        check_all_finite(coupling.view())?;
        let n = diag.nrows();
        if coupling.dim() != (n, n) {
            return Err(Error::Shape(format!(
                "coupling must be {n}x{n}, got {:?}",
                coupling.dim()
            )));
        }
        for i in 0..n {
            if coupling[[i, i]] != 0.0 {
                return Err(Error::invalid("coupling diagonal must be zero"));
            }
            for j in 0..i {
                if coupling[[i, j]] != coupling[[j, i]] {
                    return Err(Error::invalid("coupling must be symmetric"));
                }
            }
        }
        Ok(ValueFunction::QuadraticCross { diag, coupling })
    }

    /// `f_n(z) = (1/n^2) sum_{i<j} z_i z_j` on `D = 1`, the minimal nonlinear family.
    pub fn pairwise_product_mean(n: usize) -> Self {
        let w = 1.0 / (n * n) as f64;
        let coupling = Array2::from_shape_fn((n, n), |(i, j)| if i == j { 0.0 } else { w });
        ValueFunction::QuadraticCross {
            diag: Array2::zeros((n, 1)),
            coupling,
        }
    }

    pub fn softplus(scale: f64, weights: Array2<f64>) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::invalid("softplus scale must be positive"));
        }
        check_all_finite(weights.view())?;
        Ok(ValueFunction::Softplus { scale, weights })
    }

    pub fn custom(f: CustomFn) -> Self {
        ValueFunction::Custom(f)
    }

    /// Random index-weighted benchmark functions with i.i.d. standard normal parameters.
    pub fn random_benchmark(kind: ValueKind, n: usize, d: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut normal = || -> f64 { rng.sample(rand_distr::StandardNormal) };
        match kind {
            ValueKind::Additive => Self::additive(Array2::from_shape_simple_fn((n, d), &mut normal)),
            ValueKind::Softplus => Self::softplus(
                DEFAULT_SOFTPLUS_SCALE,
                Array2::from_shape_simple_fn((n, d), &mut normal),
            ),
            ValueKind::QuadraticCross => {
                let diag = Array2::from_shape_simple_fn((n, d), &mut normal);
                let raw = Array2::from_shape_simple_fn((n, n), &mut normal);
                let coupling = Array2::from_shape_fn((n, n), |(i, j)| {
                    if i == j {
                        0.0
                    } else {
                        0.5 * (raw[[i, j]] + raw[[j, i]])
                    }
                });
                Self::quadratic_cross(diag, coupling)
            }
            other => Self::from_kind(other),
        }
    }

    pub fn kind(&self) -> ValueKind {
        match self {
            ValueFunction::Lin => ValueKind::Lin,
            ValueFunction::Heat => ValueKind::Heat,
            ValueFunction::Var => ValueKind::Var,
            ValueFunction::Gini => ValueKind::Gini,
            ValueFunction::Additive { .. } => ValueKind::Additive,
            ValueFunction::QuadraticCross { .. } => ValueKind::QuadraticCross,
            ValueFunction::Softplus { .. } => ValueKind::Softplus,
            ValueFunction::Custom(_) => ValueKind::Custom,
        }
    }

    pub fn name(&self) -> String {
        match self {
            ValueFunction::Custom(c) => c.name.clone(),
            other => other.kind().to_string(),
        }
    }

    /// Index-weighted kinds carry per-agent parameters and are not symmetric.
    pub fn is_permutation_invariant(&self) -> bool {
        !matches!(
            self,
            ValueFunction::Additive { .. } | ValueFunction::QuadraticCross { .. }
        )
    }

    pub fn has_closed_form(&self) -> bool {
        matches!(
            self,
            ValueFunction::Lin | ValueFunction::Heat | ValueFunction::Var | ValueFunction::Gini
        )
    }

    pub fn parallel_safe(&self) -> bool {
        !matches!(self, ValueFunction::Custom(c) if c.single_threaded)
    }

    /// Value on the configuration with no agents and `d` dims (the empty coalition).
    pub fn empty_value(&self, d: usize) -> f64 {
        match self {
            ValueFunction::Softplus { scale, .. } => softplus(0.0) / scale,
            ValueFunction::Custom(c) => {
                let empty = Array2::<f64>::zeros((0, d));
                (c.eval)(empty.view())
            }
            _ => 0.0,
        }
    }

    /// The same family member on the sub-configuration `rows` (agent parameters
    /// follow their agents).
    pub fn restrict(&self, rows: &[usize]) -> ValueFunction {
        match self {
            ValueFunction::Additive { weights } => ValueFunction::Additive {
                weights: weights.select(Axis(0), rows),
            },
            ValueFunction::Softplus { scale, weights } => ValueFunction::Softplus {
                scale: *scale,
                weights: weights.select(Axis(0), rows),
            },
            ValueFunction::QuadraticCross { diag, coupling } => ValueFunction::QuadraticCross {
                diag: diag.select(Axis(0), rows),
                coupling: coupling.select(Axis(0), rows).select(Axis(1), rows),
            },
            other => other.clone(),
        }
    }

    fn check_shape(&self, z: ArrayView2<'_, f64>) -> Result<()> {
        let expect = match self {
            ValueFunction::Additive { weights } | ValueFunction::Softplus { weights, .. } => {
                Some(weights.dim())
            }
            ValueFunction::QuadraticCross { diag, .. } => Some(diag.dim()),
            _ => None,
        };
        match expect {
            Some(dim) if dim != z.dim() => Err(Error::Shape(format!(
                "{} parameters are {:?} but features are {:?}",
                self.kind(),
                dim,
                z.dim()
            ))),
            _ => Ok(()),
        }
    }

    pub fn evaluate(&self, z: ArrayView2<'_, f64>) -> Result<f64> {
        let (n, _) = z.dim();
        if n == 0 {
            return Err(Error::invalid("value function needs at least one agent"));
        }
        check_all_finite(z)?;
        self.check_shape(z)?;
        Ok(self.evaluate_unchecked(z))
    }

    pub(crate) fn evaluate_unchecked(&self, z: ArrayView2<'_, f64>) -> f64 {
        let n = z.nrows();
        match self {
            ValueFunction::Lin => pairwise_sum(&row_sums(z)) / n as f64,
            ValueFunction::Heat => {
                let h: f64 = column_sums(z).iter().map(|s| s / n as f64).product();
                h.ln_1p()
            }
            ValueFunction::Var => variance(&row_sums(z)),
            ValueFunction::Gini => gini_sorted(&row_sums(z)).0,
            ValueFunction::Additive { weights } => {
                let terms: Vec<f64> = weights.iter().zip(z.iter()).map(|(w, x)| w * x).collect();
                pairwise_sum(&terms)
            }
            ValueFunction::QuadraticCross { diag, coupling } => {
                let sq: Vec<f64> = diag.iter().zip(z.iter()).map(|(q, x)| q * x * x).collect();
                let s = row_sums(z);
                let cross: Vec<f64> = (0..n)
                    .map(|i| {
                        let row = coupling.row(i);
                        s[i] * row.iter().zip(&s).map(|(c, sj)| c * sj).sum::<f64>()
                    })
                    .collect();
                pairwise_sum(&sq) + 0.5 * pairwise_sum(&cross)
            }
            ValueFunction::Softplus { scale, weights } => {
                let terms: Vec<f64> = weights.iter().zip(z.iter()).map(|(w, x)| w * x).collect();
                softplus(scale * pairwise_sum(&terms)) / scale
            }
            ValueFunction::Custom(c) => (c.eval)(z),
        }
    }

    pub fn gradient(&self, z: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        Ok(self.gradient_detailed(z)?.values)
    }

    pub fn gradient_detailed(&self, z: ArrayView2<'_, f64>) -> Result<Gradient> {
        let (n, _) = z.dim();
        if n == 0 {
            return Err(Error::invalid("value function needs at least one agent"));
        }
        check_all_finite(z)?;
        self.check_shape(z)?;
        let grad = self.gradient_unchecked(z);
        if let Some((row, col)) = first_non_finite(grad.values.view()) {
            return Err(Error::NonFinite { row, col });
        }
        Ok(grad)
    }

    pub(crate) fn gradient_unchecked(&self, z: ArrayView2<'_, f64>) -> Gradient {
        let (n, d) = z.dim();
        let nf = n as f64;
        let mut rank_ties = 0;
        let values = match self {
            ValueFunction::Lin => Array2::from_elem((n, d), 1.0 / nf),
            ValueFunction::Heat => {
                let means: Vec<f64> = column_sums(z).iter().map(|s| s / nf).collect();
                let h: f64 = means.iter().product();
                let per_dim: Vec<f64> = (0..d)
                    .map(|k| {
                        let others: f64 = means
                            .iter()
                            .enumerate()
                            .filter(|&(j, _)| j != k)
                            .map(|(_, m)| m)
                            .product();
                        others / (nf * (1.0 + h))
                    })
                    .collect();
                Array2::from_shape_fn((n, d), |(_, k)| per_dim[k])
            }
            ValueFunction::Var => {
                let g = row_sums(z);
                let mean = pairwise_sum(&g) / nf;
                Array2::from_shape_fn((n, d), |(i, _)| 2.0 / nf * (g[i] - mean))
            }
            ValueFunction::Gini => {
                let g = row_sums(z);
                let (ranks, ties) = stable_ranks(&g);
                rank_ties = ties;
                Array2::from_shape_fn((n, d), |(i, _)| {
                    (2.0 * ranks[i] as f64 - nf - 1.0) / (nf * nf)
                })
            }
            ValueFunction::Additive { weights } => weights.clone(),
            ValueFunction::QuadraticCross { diag, coupling } => {
                let s = row_sums(z);
                let cs: Vec<f64> = (0..n)
                    .map(|i| coupling.row(i).iter().zip(&s).map(|(c, sj)| c * sj).sum())
                    .collect();
                Array2::from_shape_fn((n, d), |(i, k)| 2.0 * diag[[i, k]] * z[[i, k]] + cs[i])
            }
            ValueFunction::Softplus { scale, weights } => {
                let terms: Vec<f64> = weights.iter().zip(z.iter()).map(|(w, x)| w * x).collect();
                let slope = sigmoid(scale * pairwise_sum(&terms));
                weights.mapv(|w| w * slope)
            }
            ValueFunction::Custom(c) => match &c.grad {
                Some(g) => g(z),
                None => finite_difference_gradient(&*c.eval, z),
            },
        };
        Gradient { values, rank_ties }
    }
}

/// Central finite differences with step `max(1e-6, 1e-6 |z|)`.
pub fn finite_difference_gradient<F>(f: &F, z: ArrayView2<'_, f64>) -> Array2<f64>
where
    F: Fn(ArrayView2<'_, f64>) -> f64 + ?Sized,
{
    let mut work = z.to_owned();
    let mut grad = Array2::zeros(z.dim());
    for ((i, k), g) in grad.indexed_iter_mut() {
        let x = z[[i, k]];
        let h = (1e-6 * x.abs()).max(1e-6);
        work[[i, k]] = x + h;
        let up = f(work.view());
        work[[i, k]] = x - h;
        let down = f(work.view());
        work[[i, k]] = x;
        *g = (up - down) / (2.0 * h);
    }
    grad
}

/// Largest absolute mixed second difference `d^2 f / dz[i,d] dz[j,d']` over
/// the sampled `(i, d, j, d')` pairs. Linear families (no cross-agent
/// interaction) give zero up to rounding.
pub fn hessian_offdiag_probe(
    f: &ValueFunction,
    z: ArrayView2<'_, f64>,
    pairs: &[(usize, usize, usize, usize)],
) -> Result<f64> {
    let (n, d) = z.dim();
    if n < 2 {
        return Err(Error::invalid("hessian probe needs at least two agents"));
    }
    check_all_finite(z)?;
    f.check_shape(z)?;
    let mut work = z.to_owned();
    let mut worst: f64 = 0.0;
    for &(i, di, j, dj) in pairs {
        if i == j || i >= n || j >= n || di >= d || dj >= d {
            return Err(Error::invalid(format!(
                "probe pair ({i},{di},{j},{dj}) is out of range or on the diagonal"
            )));
        }
        let (xi, xj) = (z[[i, di]], z[[j, dj]]);
        let hi = 1e-3 * xi.abs().max(1.0);
        let hj = 1e-3 * xj.abs().max(1.0);
        let mut corner = |si: f64, sj: f64| {
            work[[i, di]] = xi + si * hi;
            work[[j, dj]] = xj + sj * hj;
            f.evaluate_unchecked(work.view())
        };
        let mixed = (corner(1.0, 1.0) - corner(1.0, -1.0) - corner(-1.0, 1.0)
            + corner(-1.0, -1.0))
            / (4.0 * hi * hj);
        work[[i, di]] = xi;
        work[[j, dj]] = xj;
        worst = worst.max(mixed.abs());
    }
    Ok(worst)
}

/// `count` random cross-agent coordinate pairs for [`hessian_offdiag_probe`].
pub fn sample_offdiag_pairs(
    n: usize,
    d: usize,
    count: usize,
    seed: u64,
) -> Vec<(usize, usize, usize, usize)> {
    assert!(n >= 2 && d >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let i = rng.random_range(0..n);
            let mut j = rng.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            (i, rng.random_range(0..d), j, rng.random_range(0..d))
        })
        .collect()
}

/// 1-based ranks in ascending order; equal values are ordered by index.
/// Also returns the number of adjacent equal pairs in sorted order.
pub fn stable_ranks(g: &[f64]) -> (Vec<usize>, usize) {
    let mut order: Vec<usize> = (0..g.len()).collect();
    order.sort_by(|&a, &b| g[a].total_cmp(&g[b]).then(a.cmp(&b)));
    let mut ranks = vec![0; g.len()];
    for (pos, &i) in order.iter().enumerate() {
        ranks[i] = pos + 1;
    }
    let ties = order.windows(2).filter(|w| g[w[0]] == g[w[1]]).count();
    (ranks, ties)
}

/// Gini mean difference via the sorted-rank identity, O(n log n).
pub fn gini_sorted(g: &[f64]) -> (f64, usize) {
    let n = g.len();
    if n == 0 {
        return (0.0, 0);
    }
    let mut sorted = g.to_vec();
    sorted.sort_by(f64::total_cmp);
    let nf = n as f64;
    let terms: Vec<f64> = sorted
        .iter()
        .enumerate()
        .map(|(k, x)| (2.0 * (k + 1) as f64 - nf - 1.0) * x)
        .collect();
    let ties = sorted.windows(2).filter(|w| w[0] == w[1]).count();
    (pairwise_sum(&terms) / (nf * nf), ties)
}

pub fn variance(g: &[f64]) -> f64 {
    let n = g.len() as f64;
    let mean = pairwise_sum(g) / n;
    let dev: Vec<f64> = g.iter().map(|x| (x - mean) * (x - mean)).collect();
    pairwise_sum(&dev) / n
}

fn first_non_finite(z: ArrayView2<'_, f64>) -> Option<(usize, usize)> {
    z.indexed_iter()
        .find(|(_, v)| !v.is_finite())
        .map(|(idx, _)| idx)
}

pub(crate) fn check_all_finite(z: ArrayView2<'_, f64>) -> Result<()> {
    match first_non_finite(z) {
        Some((row, col)) => Err(Error::NonFinite { row, col }),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn column(g: &[f64]) -> Array2<f64> {
        Array2::from_shape_vec((g.len(), 1), g.to_vec()).unwrap()
    }

    fn gini_double_loop(g: &[f64]) -> f64 {
        let n = g.len() as f64;
        let mut acc = 0.0;
        for a in g {
            for b in g {
                acc += (a - b).abs();
            }
        }
        acc / (2.0 * n * n)
    }

    #[test]
    fn lin_mean_of_composite() {
        let z = column(&[1.0, 1.0, 2.0]);
        assert!((ValueFunction::Lin.evaluate(z.view()).unwrap() - 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn heat_on_unit_features_is_log_two() {
        for n in [1, 2, 7, 50] {
            let z = Array2::from_elem((n, 3), 1.0);
            let v = ValueFunction::Heat.evaluate(z.view()).unwrap();
            assert!((v - 2f64.ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn gini_two_agents() {
        let z = column(&[1.0, 3.0]);
        let v = ValueFunction::Gini.evaluate(z.view()).unwrap();
        assert!((v - gini_double_loop(&[1.0, 3.0])).abs() < 1e-15);
        assert!((v - 0.5).abs() < 1e-15);
    }

    #[test]
    fn evaluate_rejects_empty_and_non_finite() {
        let empty = Array2::<f64>::zeros((0, 3));
        assert!(ValueFunction::Lin.evaluate(empty.view()).is_err());
        let bad = array![[1.0, f64::NAN, 0.0]];
        assert!(matches!(
            ValueFunction::Heat.evaluate(bad.view()),
            Err(Error::NonFinite { row: 0, col: 1 })
        ));
    }

    #[test]
    fn lin_gradient_constant() {
        let z = Array2::from_elem((4, 3), 0.7);
        let g = ValueFunction::Lin.gradient(z.view()).unwrap();
        assert!(g.iter().all(|&x| (x - 0.25).abs() < 1e-15));
    }

    #[test]
    fn var_gradient_matches_hand_value_and_finite_differences() {
        let z = column(&[0.0, 2.0]);
        let g = ValueFunction::Var.gradient(z.view()).unwrap();
        assert!((g[[1, 0]] - 1.0).abs() < 1e-15);
        let f = |v: ArrayView2<'_, f64>| ValueFunction::Var.evaluate_unchecked(v);
        let fd = finite_difference_gradient(&f, z.view());
        assert!((fd[[1, 0]] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn pairwise_product_gradient() {
        let f = ValueFunction::pairwise_product_mean(3);
        let z = column(&[1.0, 1.0, 2.0]);
        let g = f.gradient(z.view()).unwrap();
        assert!((g[[0, 0]] - 1.0 / 3.0).abs() < 1e-15);
        // f = (1/9)(1 + 2 + 2)
        assert!((f.evaluate(z.view()).unwrap() - 5.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn hessian_probe_classifies() {
        let z = Array2::from_shape_fn((3, 3), |(i, k)| 0.5 + (i * 3 + k) as f64 * 0.1);
        let pairs = sample_offdiag_pairs(3, 3, 20, 1);
        let lin = hessian_offdiag_probe(&ValueFunction::Lin, z.view(), &pairs).unwrap();
        assert!(lin <= 1e-6, "lin probe {lin}");

        let quad = ValueFunction::pairwise_product_mean(3);
        let zq = column(&[1.0, 1.0, 2.0]);
        let p = hessian_offdiag_probe(&quad, zq.view(), &sample_offdiag_pairs(3, 1, 10, 2)).unwrap();
        assert!((p - 1.0 / 9.0).abs() < 1e-6, "quad probe {p}");

        // d^2/da_i db_j of log(1 + m_a m_b m_c) at unit features is 1/(4 n^2).
        let ones = Array2::from_elem((3, 3), 1.0);
        let h = hessian_offdiag_probe(&ValueFunction::Heat, ones.view(), &[(0, 0, 1, 1)]).unwrap();
        assert!(h > 1e-4);
        assert!((h - 1.0 / 36.0).abs() < 1e-6, "heat mixed partial {h}");
    }

    #[test]
    fn gini_ties_are_flagged() {
        let z = column(&[1.0, 1.0, 2.0]);
        let g = ValueFunction::Gini.gradient_detailed(z.view()).unwrap();
        assert_eq!(g.rank_ties, 1);
        assert!(g.values[[0, 0]] < g.values[[1, 0]]);
    }

    #[test]
    fn quadratic_cross_validation() {
        let diag = Array2::zeros((2, 1));
        assert!(ValueFunction::quadratic_cross(diag.clone(), array![[0.0, 1.0], [2.0, 0.0]]).is_err());
        assert!(ValueFunction::quadratic_cross(diag.clone(), array![[1.0, 1.0], [1.0, 0.0]]).is_err());
        assert!(ValueFunction::quadratic_cross(diag, array![[0.0, 1.0], [1.0, 0.0]]).is_ok());
        assert!(ValueFunction::softplus(0.0, Array2::zeros((1, 1))).is_err());
    }

    #[test]
    fn restrict_follows_agents() {
        let f = ValueFunction::random_benchmark(ValueKind::QuadraticCross, 4, 2, 9).unwrap();
        let z = Array2::from_shape_fn((4, 2), |(i, k)| (i + k) as f64 * 0.3 - 0.2);
        let rows = [3, 1];
        let sub = z.select(Axis(0), &rows);
        let direct = f.restrict(&rows).evaluate(sub.view()).unwrap();
        // Pin every other agent to zero on the full function: the same value.
        let mut pinned = Array2::zeros((4, 2));
        for &r in &rows {
            pinned.row_mut(r).assign(&z.row(r));
        }
        let via_full = f.evaluate(pinned.view()).unwrap();
        assert!((direct - via_full).abs() < 1e-12);
    }

    fn builtin(kind: ValueKind, n: usize, d: usize) -> ValueFunction {
        ValueFunction::random_benchmark(kind, n, d, 17).unwrap()
    }

    proptest! {
        #[test]
        fn gini_sorted_equals_double_loop(g in prop::collection::vec(0.0f64..10.0, 1..200)) {
            let fast = gini_sorted(&g).0;
            let slow = gini_double_loop(&g);
            prop_assert!((fast - slow).abs() <= 1e-12 * slow.abs().max(1.0));
        }

        #[test]
        fn symmetric_kinds_are_permutation_invariant(
            vals in prop::collection::vec(0.0f64..3.0, 6..60),
            seed in any::<u64>(),
        ) {
            let n = vals.len() / 3;
            let z = Array2::from_shape_vec((n, 3), vals[..n * 3].to_vec()).unwrap();
            let mut order: Vec<usize> = (0..n).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
            let zp = z.select(Axis(0), &order);
            let sp = ValueFunction::softplus(0.35, Array2::from_elem((n, 3), 0.4)).unwrap();
            for f in [ValueFunction::Lin, ValueFunction::Heat, ValueFunction::Var, ValueFunction::Gini, sp] {
                let a = f.evaluate(z.view()).unwrap();
                let b = f.evaluate(zp.view()).unwrap();
                prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{} {} {}", f.name(), a, b);
            }
        }

        #[test]
        fn gradients_match_finite_differences(
            vals in prop::collection::vec(0.05f64..3.0, 6..150),
        ) {
            let n = vals.len() / 3;
            let z = Array2::from_shape_vec((n, 3), vals[..n * 3].to_vec()).unwrap();
            let g = row_sums(z.view());
            let mut sorted = g.clone();
            sorted.sort_by(f64::total_cmp);
            let gap = sorted.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
            for kind in [ValueKind::Lin, ValueKind::Heat, ValueKind::Var, ValueKind::Gini,
                         ValueKind::Additive, ValueKind::QuadraticCross, ValueKind::Softplus] {
                if kind == ValueKind::Gini && gap < 1e-4 {
                    continue;
                }
                let f = builtin(kind, n, 3);
                let analytic = f.gradient(z.view()).unwrap();
                let eval = |v: ArrayView2<'_, f64>| f.evaluate_unchecked(v);
                let fd = finite_difference_gradient(&eval, z.view());
                let worst = (&analytic - &fd).iter().fold(0.0f64, |m, x| m.max(x.abs()));
                prop_assert!(worst < 1e-5, "{kind}: {worst}");
            }
        }

        #[test]
        fn heat_along_the_ray(vals in prop::collection::vec(0.0f64..3.0, 3..30), tau in 0.0f64..1.0) {
            let n = vals.len() / 3;
            let z = Array2::from_shape_vec((n, 3), vals[..n * 3].to_vec()).unwrap();
            let h: f64 = column_sums(z.view()).iter().map(|s| s / n as f64).product();
            let scaled = z.mapv(|x| x * tau);
            let v = ValueFunction::Heat.evaluate(scaled.view()).unwrap();
            prop_assert!((v - (tau.powi(3) * h).ln_1p()).abs() < 1e-12);
        }
    }
}
