//! Midpoint-rule convergence in the number of nodes `K`.

use std::io::Write;
use std::time::Instant;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::metrics::relative_l1;
use crate::attribution::{attribute_analytic, attribute_path_integral, BaselineSpec, PathKind};
use crate::error::{Error, Result};
use crate::valuefn::ValueFunction;

pub const CONVERGENCE_CSV_SCHEMA: &str = "#schema aumann.convergence/1";
pub const K_REF: usize = 300;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub k: usize,
    /// Relative L1 error against the reference attribution.
    pub error: f64,
    pub seconds: f64,
    /// `error(K) / error(2K)` when `2K` is also in the sweep.
    pub ratio_to_double: Option<f64>,
}

/// The reference is the closed form when available at a zero baseline and
/// the `K_REF`-node midpoint rule otherwise.
pub fn k_convergence_sweep(
    f: &ValueFunction,
    z: ArrayView2<'_, f64>,
    baseline: &BaselineSpec,
    k_list: &[usize],
) -> Result<Vec<ConvergenceRow>> {
    if k_list.is_empty() || k_list.contains(&0) {
        return Err(Error::invalid("K list must be non-empty and positive"));
    }
    let reference = if f.has_closed_form() && baseline.is_zero() {
        attribute_analytic(f, z, baseline)?.phi
    } else {
        attribute_path_integral(f, z, baseline, K_REF, PathKind::Linear)?.phi
    };
    if reference.iter().all(|&p| p == 0.0) {
        return Err(Error::ZeroNorm("reference attribution".into()));
    }
    let mut rows: Vec<ConvergenceRow> = k_list
        .iter()
        .map(|&k| {
            let start = Instant::now();
            let phi = attribute_path_integral(f, z, baseline, k, PathKind::Linear)?.phi;
            let seconds = start.elapsed().as_secs_f64();
            Ok(ConvergenceRow {
                k,
                error: relative_l1(&phi, &reference),
                seconds,
                ratio_to_double: None,
            })
        })
        .collect::<Result<_>>()?;
    let errors: Vec<(usize, f64)> = rows.iter().map(|r| (r.k, r.error)).collect();
    for r in &mut rows {
        r.ratio_to_double = errors.iter().find(|(k, _)| *k == 2 * r.k).map(|(_, e)| r.error / e);
    }
    Ok(rows)
}

pub fn write_convergence_csv(mut w: impl Write, rows: &[ConvergenceRow]) -> Result<()> {
    writeln!(w, "{CONVERGENCE_CSV_SCHEMA}")?;
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["k", "rel_l1_error", "seconds", "ratio_to_2k"])?;
    for r in rows {
        csv.write_record([
            r.k.to_string(),
            format!("{:.6e}", r.error),
            format!("{:.6e}", r.seconds),
            r.ratio_to_double.map(|x| format!("{x:.4}")).unwrap_or_default(),
        ])?;
    }
    csv.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::{generate_synthetic, FeatureLaw, SyntheticPanelSpec};

    #[test]
    fn heat_error_falls_quadratically() {
        let panel = generate_synthetic(&SyntheticPanelSpec::new(500, 1, 3, FeatureLaw::AbsGaussian, 3)).unwrap();
        let rows = k_convergence_sweep(&ValueFunction::Heat, panel.step(0), &BaselineSpec::Zero, &[5, 10, 20, 40]).unwrap();
        for w in rows.windows(2) {
            assert!(w[1].error <= w[0].error * 1.05);
        }
        for r in &rows[..3] {
            let q = r.ratio_to_double.unwrap();
            assert!((3.2..=4.8).contains(&q), "K={} ratio {q}", r.k);
        }
        assert!(rows[3].ratio_to_double.is_none());
    }

    #[test]
    fn lin_is_exact_at_any_k() {
        let panel = generate_synthetic(&SyntheticPanelSpec::new(50, 1, 3, FeatureLaw::AbsGaussian, 3)).unwrap();
        let rows = k_convergence_sweep(&ValueFunction::Lin, panel.step(0), &BaselineSpec::Zero, &[1, 2]).unwrap();
        assert!(rows.iter().all(|r| r.error < 1e-14));
    }
}
