use ndarray::ArrayView2;
use rayon::prelude::*;

use super::{AttributionResult, BaselineSpec, Method};
use crate::error::{Error, Result};
use crate::numeric::{column_sums, pairwise_sum, row_sums};
use crate::study::metrics::average_ranks;
use crate::valuefn::{check_all_finite, stable_ranks, ValueFunction};

const PAR_MIN: usize = 1 << 14;

fn per_agent(n: usize, f: impl Fn(usize) -> f64 + Sync + Send) -> Vec<f64> {
    if n >= PAR_MIN {
        (0..n).into_par_iter().map(f).collect()
    } else {
        (0..n).map(f).collect()
    }
}

/// Closed-form attribution along `tau -> tau z` for lin, heat, var and gini.
pub fn attribute_analytic(
    f: &ValueFunction,
    z: ArrayView2<'_, f64>,
    baseline: &BaselineSpec,
) -> Result<AttributionResult> {
    if !f.has_closed_form() {
        return Err(Error::NoClosedForm(f.name()));
    }
    if !baseline.is_zero() {
        return Err(Error::NonZeroBaseline(f.name()));
    }
    let (n, d) = z.dim();
    if n == 0 {
        return Err(Error::invalid("value function needs at least one agent"));
    }
    check_all_finite(z)?;
    let nf = n as f64;
    let mut rank_ties = 0;
    // All four closed-form kinds vanish at the zero configuration.
    let (value, phi) = match f {
        ValueFunction::Lin => {
            let g = row_sums(z);
            (f.evaluate_unchecked(z), per_agent(n, |i| g[i] / nf))
        }
        ValueFunction::Heat => {
            // A coordinate with zero total contributes no share (and forces f = 0).
            let sums = column_sums(z);
            let value = sums.iter().map(|s| s / nf).product::<f64>().ln_1p();
            let w: Vec<f64> = sums
                .iter()
                .map(|&s| if s == 0.0 { 0.0 } else { value / (d as f64 * s) })
                .collect();
            (value, per_agent(n, |i| z.row(i).iter().zip(&w).map(|(x, wk)| x * wk).sum()))
        }
        ValueFunction::Var => {
            let g = row_sums(z);
            let mean = pairwise_sum(&g) / nf;
            (f.evaluate_unchecked(z), per_agent(n, |i| g[i] * (g[i] - mean) / nf))
        }
        ValueFunction::Gini => {
            let g = row_sums(z);
            rank_ties = stable_ranks(&g).1;
            // Tied agents share their average rank, the mean over every tie order.
            let ranks = average_ranks(&g);
            (f.evaluate_unchecked(z), per_agent(n, |i| g[i] * (2.0 * ranks[i] - nf - 1.0) / (nf * nf)))
        }
        _ => unreachable!("checked by has_closed_form"),
    };
    Ok(AttributionResult {
        phi,
        delta_v: value,
        normalized: None,
        baseline: baseline.clone(),
        method: Method::Analytic,
        rank_ties,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    fn col(g: &[f64]) -> Array2<f64> {
        Array2::from_shape_vec((g.len(), 1), g.to_vec()).unwrap()
    }

    #[test]
    fn var_two_agents() {
        let r = attribute_analytic(&ValueFunction::Var, col(&[0.0, 2.0]).view(), &BaselineSpec::Zero).unwrap();
        assert_eq!(r.phi, vec![0.0, 1.0]);
        assert_eq!(r.delta_v, 1.0);
    }

    #[test]
    fn gini_two_agents() {
        let r = attribute_analytic(&ValueFunction::Gini, col(&[1.0, 3.0]).view(), &BaselineSpec::Zero).unwrap();
        assert_eq!(r.phi, vec![-0.25, 0.75]);
        assert_eq!(r.delta_v, 0.5);
    }

    #[test]
    fn gini_duplicates_are_symmetric() {
        let r = attribute_analytic(&ValueFunction::Gini, col(&[1.0, 3.0, 3.0, 0.5]).view(), &BaselineSpec::Zero).unwrap();
        assert_eq!(r.phi[1], r.phi[2]);
        assert_eq!(r.rank_ties, 1);
        assert!(r.efficiency_residual() < 1e-15);
    }

    #[test]
    fn heat_identical_agents_split_evenly() {
        let z = Array2::from_elem((4, 3), 0.7);
        let r = attribute_analytic(&ValueFunction::Heat, z.view(), &BaselineSpec::Zero).unwrap();
        for p in &r.phi {
            assert!((p - r.delta_v / 4.0).abs() < 1e-15);
        }
    }

    #[test]
    fn heat_zero_column() {
        let z = array![[1.0, 0.0, 2.0], [3.0, 0.0, 1.0]];
        let r = attribute_analytic(&ValueFunction::Heat, z.view(), &BaselineSpec::Zero).unwrap();
        assert_eq!(r.phi, vec![0.0, 0.0]);
        assert_eq!(r.delta_v, 0.0);
    }

    #[test]
    fn refuses_other_baselines_and_kinds() {
        let z = col(&[1.0, 2.0]);
        assert!(matches!(
            attribute_analytic(&ValueFunction::Lin, z.view(), &BaselineSpec::PopulationMean),
            Err(Error::NonZeroBaseline(_))
        ));
        let add = ValueFunction::additive(Array2::ones((2, 1))).unwrap();
        assert!(matches!(
            attribute_analytic(&add, z.view(), &BaselineSpec::Zero),
            Err(Error::NoClosedForm(_))
        ));
    }
}
