//! Attribution scaling bias: the optimal agent-independent rescaling between
//! subset and full-panel shares, its residual, the linear reconciliation
//! factor and the three-agent counterexample.

use std::collections::BTreeMap;
use std::io::Write;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attribution::{attribute_path_integral, normalize, AttributionResult, BaselineSpec, PathKind};
use crate::baselines::{exact_shapley, CoalitionGame};
use crate::error::{Error, Result};
use crate::numeric::mean_std;
use crate::panel::FeaturePanel;
use crate::study::{default_method, sample_subset, spearman, subset_shares, window_shares};
use crate::study::{AgentMetrics, PoolParams, Protocol, SubsetSpec};
use crate::valuefn::{hessian_offdiag_probe, sample_offdiag_pairs, ValueFunction, ValueKind};

pub const RESCALE_CSV_SCHEMA: &str = "#schema aumann.rescale/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RescaleReport {
    pub c_star: f64,
    pub epsilon: f64,
    pub rank_spearman: f64,
    pub subset: Option<SubsetSpec>,
    pub f_kind: Option<ValueKind>,
    /// Largest sampled cross-agent mixed partial of `f` on the full panel.
    pub hessian_probe: Option<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `c* = <s, r> / <r, r>` and `eps = |s - c* r| / |s|` for subset shares `s`
/// against full-panel shares `r` read on the same agents.
pub fn optimal_rescale(shares_subset: &[f64], shares_full_restricted: &[f64]) -> Result<RescaleReport> {
    let (s, r) = (shares_subset, shares_full_restricted);
    if s.len() != r.len() {
        return Err(Error::Shape(format!("{} subset shares vs {} full shares", s.len(), r.len())));
    }
    if s.len() < 2 {
        return Err(Error::invalid("rescaling needs at least two agents"));
    }
    if s.iter().chain(r).any(|x| !x.is_finite()) {
        return Err(Error::invalid("shares must be finite"));
    }
    let (ss, rr) = (dot(s, s), dot(r, r));
    if ss == 0.0 || rr == 0.0 {
        let which = if ss == 0.0 { "subset shares" } else { "full-panel shares" };
        return Err(Error::ZeroNorm(which.into()));
    }
    let c_star = dot(s, r) / rr;
    let resid: f64 = s.iter().zip(r).map(|(a, b)| (a - c_star * b).powi(2)).sum();
    Ok(RescaleReport {
        c_star,
        epsilon: (resid / ss).sqrt(),
        rank_spearman: spearman(s, r),
        subset: None,
        f_kind: None,
        hessian_probe: None,
    })
}

/// `c(S, z) = sum over [N] of mu / sum over S of mu`, with `mu[j] = mu(z_j) - mu(z0)`.
pub fn linear_reconciliation_factor(mu_full: &[f64], subset: &[usize]) -> Result<f64> {
    if let Some(&i) = subset.iter().find(|&&i| i >= mu_full.len()) {
        return Err(Error::invalid(format!("subset index {i} out of range")));
    }
    let total: f64 = mu_full.iter().sum();
    let part: f64 = subset.iter().map(|&i| mu_full[i]).sum();
    for v in [total, part] {
        if v.abs() <= crate::attribution::DEGENERATE_TOL {
            return Err(Error::DegenerateMacroChange {
                delta_v: v,
                tolerance: crate::attribution::DEGENERATE_TOL,
            });
        }
    }
    Ok(total / part)
}

/// Per-agent attribution of `(1/n^2) sum_{i<j} z_i z_j` at zero baseline:
/// `phi_i = z_i * (sum_{k != i} z_k) / (2 n^2)`.
pub fn pairwise_closed_form(z: &[f64]) -> Vec<f64> {
    let n = z.len() as f64;
    let total: f64 = z.iter().sum();
    z.iter().map(|&x| x * (total - x) / (2.0 * n * n)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleReport {
    pub z: Vec<f64>,
    pub subset: Vec<usize>,
    pub phi_full: Vec<f64>,
    pub delta_v_full: f64,
    pub shares_full: Vec<f64>,
    pub phi_subset: Vec<f64>,
    pub delta_v_subset: f64,
    pub shares_subset: Vec<f64>,
    /// `shares_subset[k] / shares_full[subset[k]]`.
    pub implied_c: Vec<f64>,
    pub rescale: RescaleReport,
    pub shapley_full: Vec<f64>,
    pub path_full: Vec<f64>,
    pub path_subset: Vec<f64>,
    pub path_k: usize,
    pub failures: Vec<String>,
}

impl CounterexampleReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

pub const COUNTEREXAMPLE_PATH_K: usize = 300;

/// Rebuilds the `N = 3` counterexample and checks every stated quantity.
pub fn counterexample_check() -> Result<CounterexampleReport> {
    const EXACT_TOL: f64 = 1e-12;
    const PATH_TOL: f64 = 1e-9;
    let z = vec![1.0, 1.0, 2.0];
    let subset = vec![0, 2];
    let zs: Vec<f64> = subset.iter().map(|&i| z[i]).collect();
    let col = |v: &[f64]| Array2::from_shape_vec((v.len(), 1), v.to_vec()).expect("column");
    let zero = BaselineSpec::Zero;

    let phi_full = pairwise_closed_form(&z);
    let phi_subset = pairwise_closed_form(&zs);
    let f3 = ValueFunction::pairwise_product_mean(3);
    let f2 = ValueFunction::pairwise_product_mean(2);
    let full = normalize(AttributionResult {
        delta_v: f3.evaluate(col(&z).view())?,
        phi: phi_full.clone(),
        normalized: None,
        baseline: zero.clone(),
        method: crate::attribution::Method::Analytic,
        rank_ties: 0,
    })?;
    let sub = normalize(AttributionResult {
        delta_v: f2.evaluate(col(&zs).view())?,
        phi: phi_subset.clone(),
        normalized: None,
        baseline: zero.clone(),
        method: crate::attribution::Method::Analytic,
        rank_ties: 0,
    })?;
    let shares_full = full.normalized()?.to_vec();
    let shares_subset = sub.normalized()?.to_vec();
    let restricted: Vec<f64> = subset.iter().map(|&i| shares_full[i]).collect();
    let implied_c: Vec<f64> = shares_subset.iter().zip(&restricted).map(|(s, r)| s / r).collect();
    let rescale = optimal_rescale(&shares_subset, &restricted)?;

    let shapley_full = exact_shapley(&CoalitionGame::new(f3.clone(), col(&z))?)?;
    let k = COUNTEREXAMPLE_PATH_K;
    let path_full = attribute_path_integral(&f3, col(&z).view(), &zero, k, PathKind::Linear)?.phi;
    let path_subset = attribute_path_integral(&f2, col(&zs).view(), &zero, k, PathKind::Linear)?.phi;

    let mut failures = Vec::new();
    let mut expect = |name: &str, got: &[f64], want: &[f64], tol: f64| {
        let worst = got.iter().zip(want).map(|(g, w)| (g - w).abs()).fold(0.0, f64::max);
        if got.len() != want.len() || worst > tol {
            failures.push(format!("{name}: got {got:?}, expected {want:?} (max error {worst:.3e} > {tol:.0e})"));
        }
    };
    expect("phi_full", &phi_full, &[1.0 / 6.0, 1.0 / 6.0, 2.0 / 9.0], EXACT_TOL);
    expect("delta_v_full", &[full.delta_v], &[5.0 / 9.0], EXACT_TOL);
    expect("efficiency_full", &[full.total()], &[5.0 / 9.0], EXACT_TOL);
    expect("shares_full", &shares_full, &[0.3, 0.3, 0.4], EXACT_TOL);
    expect("phi_subset", &phi_subset, &[0.25, 0.25], EXACT_TOL);
    expect("delta_v_subset", &[sub.delta_v], &[0.5], EXACT_TOL);
    expect("shares_subset", &shares_subset, &[0.5, 0.5], EXACT_TOL);
    expect("implied_c", &implied_c, &[5.0 / 3.0, 5.0 / 4.0], EXACT_TOL);
    expect("shapley_full", &shapley_full, &phi_full, EXACT_TOL);
    expect("path_full", &path_full, &phi_full, PATH_TOL);
    expect("path_subset", &path_subset, &phi_subset, PATH_TOL);
    if (implied_c[0] - implied_c[1]).abs() <= EXACT_TOL {
        failures.push(format!("implied c values coincide: {implied_c:?}"));
    }
    if !(rescale.epsilon > 0.0) {
        failures.push(format!("epsilon is not positive: {}", rescale.epsilon));
    }

    Ok(CounterexampleReport {
        z,
        subset,
        phi_full,
        delta_v_full: full.delta_v,
        shares_full,
        phi_subset,
        delta_v_subset: sub.delta_v,
        shares_subset,
        implied_c,
        rescale,
        shapley_full,
        path_full,
        path_subset,
        path_k: k,
        failures,
    })
}

#[derive(Clone, Debug)]
pub struct RescaleSweep {
    pub panel_id: String,
    pub functions: Vec<ValueFunction>,
    pub protocols: Vec<Protocol>,
    pub sizes: Vec<usize>,
    pub seeds: Vec<u64>,
    pub pool: PoolParams,
    pub baseline: BaselineSpec,
}

/// One `(f, protocol, n, seed)` cell. `epsilon` etc. are `None` when either
/// scale has a degenerate macro change.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RescaleRow {
    pub panel_id: String,
    pub f_kind: String,
    pub protocol: Protocol,
    pub n: usize,
    pub seed: u64,
    pub c_star: Option<f64>,
    pub epsilon: Option<f64>,
    pub spearman: Option<f64>,
    pub hessian_probe: f64,
}

const PROBE_PAIRS: usize = 32;

/// Runs [`optimal_rescale`] on every cell of the sweep, in parallel over cells.
pub fn rescale_sweep(panel: &FeaturePanel, sweep: &RescaleSweep) -> Result<Vec<RescaleRow>> {
    let metrics = AgentMetrics::from_panel(panel)?;
    let n_total = panel.n_agents();
    let probe_z = panel.step(0);
    let mut out = Vec::new();
    for f in &sweep.functions {
        let method = default_method(f, &sweep.baseline);
        let full = window_shares(f, panel, &sweep.baseline, method)?;
        let full_shares = full.normalized()?;
        let probe = if n_total >= 2 {
            let pairs = sample_offdiag_pairs(n_total, panel.n_dims(), PROBE_PAIRS, 0);
            hessian_offdiag_probe(f, probe_z, &pairs)?
        } else {
            0.0
        };
        let cells: Vec<(Protocol, usize, u64)> = sweep
            .protocols
            .iter()
            .flat_map(|&p| sweep.sizes.iter().flat_map(move |&n| sweep.seeds.iter().map(move |&s| (p, n, s))))
            .collect();
        let rows = cells
            .into_par_iter()
            .map(|(protocol, n, seed)| {
                let spec = sample_subset(&metrics, protocol, n, seed, &sweep.pool)?;
                let mut row = RescaleRow {
                    panel_id: sweep.panel_id.clone(),
                    f_kind: f.name(),
                    protocol,
                    n,
                    seed,
                    c_star: None,
                    epsilon: None,
                    spearman: None,
                    hessian_probe: probe,
                };
                let sub = match subset_shares(f, panel, &spec.indices, &sweep.baseline, method) {
                    Ok(r) => r,
                    Err(Error::DegenerateMacroChange { .. }) => return Ok(row),
                    Err(e) => return Err(e),
                };
                let restricted: Vec<f64> = spec.indices.iter().map(|&i| full_shares[i]).collect();
                match optimal_rescale(sub.normalized()?, &restricted) {
                    Ok(rep) => {
                        row.c_star = Some(rep.c_star);
                        row.epsilon = Some(rep.epsilon);
                        row.spearman = Some(rep.rank_spearman);
                    }
                    Err(Error::ZeroNorm(_)) => {}
                    Err(e) => return Err(e),
                }
                Ok(row)
            })
            .collect::<Result<Vec<_>>>()?;
        out.extend(rows);
    }
    Ok(out)
}

/// One JSON object per line.
pub fn write_rescale_jsonl(mut w: impl Write, rows: &[RescaleRow]) -> Result<()> {
    for r in rows {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Mean residual per `(panel, protocol, n)` with one `eps_<f>` column per
/// value function, followed by the matching Spearman means.
pub fn write_rescale_table(mut w: impl Write, rows: &[RescaleRow]) -> Result<()> {
    let mut fs: Vec<String> = Vec::new();
    for r in rows {
        if !fs.contains(&r.f_kind) {
            fs.push(r.f_kind.clone());
        }
    }
    type Key = (String, Protocol, usize);
    let mut cells: BTreeMap<Key, BTreeMap<String, (Vec<f64>, Vec<f64>, usize)>> = BTreeMap::new();
    for r in rows {
        let e = cells
            .entry((r.panel_id.clone(), r.protocol, r.n))
            .or_default()
            .entry(r.f_kind.clone())
            .or_default();
        match (r.epsilon, r.spearman) {
            (Some(eps), Some(rho)) => {
                e.0.push(eps);
                e.1.push(rho);
            }
            _ => e.2 += 1,
        }
    }
    writeln!(w, "{RESCALE_CSV_SCHEMA}")?;
    let mut csv = csv::Writer::from_writer(w);
    let mut header = vec!["panel_id".to_string(), "protocol".into(), "n".into()];
    header.extend(fs.iter().map(|f| format!("eps_{f}")));
    header.extend(fs.iter().map(|f| format!("eps_std_{f}")));
    header.extend(fs.iter().map(|f| format!("spearman_{f}")));
    header.push("runs".into());
    header.push("degenerate".into());
    csv.write_record(&header)?;
    for ((panel_id, protocol, n), by_f) in &cells {
        let mut rec = vec![panel_id.clone(), protocol.to_string(), n.to_string()];
        let stats = |f: &String, pick: fn(&(Vec<f64>, Vec<f64>, usize)) -> &Vec<f64>| {
            by_f.get(f).map(|c| pick(c)).filter(|v| !v.is_empty()).map(|v| mean_std(v))
        };
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:.6e}")).unwrap_or_default();
        rec.extend(fs.iter().map(|f| fmt(stats(f, |c| &c.0).map(|s| s.0))));
        rec.extend(fs.iter().map(|f| fmt(stats(f, |c| &c.0).map(|s| s.1))));
        rec.extend(fs.iter().map(|f| fmt(stats(f, |c| &c.1).map(|s| s.0))));
        let runs = by_f.values().map(|c| c.0.len()).max().unwrap_or(0);
        let degenerate: usize = by_f.values().map(|c| c.2).sum();
        rec.push(runs.to_string());
        rec.push(degenerate.to_string());
        csv.write_record(&rec)?;
    }
    csv.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::{generate_synthetic, FeatureLaw, SyntheticPanelSpec};

    #[test]
    fn proportional_vectors() {
        let r = optimal_rescale(&[0.2, 0.4, 0.6], &[0.1, 0.2, 0.3]).unwrap();
        assert!((r.c_star - 2.0).abs() < 1e-12);
        assert!(r.epsilon < 1e-15);
        assert_eq!(r.rank_spearman, 1.0);
        assert!(matches!(optimal_rescale(&[0.0, 0.0], &[1.0, 1.0]), Err(Error::ZeroNorm(_))));
        assert!(optimal_rescale(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn counterexample_reproduces() {
        let rep = counterexample_check().unwrap();
        assert!(rep.passed(), "{:?}", rep.failures);
        assert!((rep.implied_c[0] - 5.0 / 3.0).abs() < 1e-12);
        assert!((rep.implied_c[1] - 1.25).abs() < 1e-12);
        assert!(rep.rescale.epsilon > 0.0);
    }

    #[test]
    fn reconciliation_factor() {
        let g = [1.0, 1.0, 2.0];
        assert!((linear_reconciliation_factor(&g, &[0, 2]).unwrap() - 4.0 / 3.0).abs() < 1e-15);
        assert_eq!(linear_reconciliation_factor(&g, &[0, 1, 2]).unwrap(), 1.0);
        assert!(linear_reconciliation_factor(&[1.0, -1.0, 2.0], &[0, 1]).is_err());
    }

    #[test]
    fn lin_subsets_reconcile_by_factor() {
        let spec = SyntheticPanelSpec::new(400, 1, 3, FeatureLaw::AbsGaussian, 11);
        let panel = generate_synthetic(&spec).unwrap();
        let f = ValueFunction::Lin;
        let full = window_shares(&f, &panel, &BaselineSpec::Zero, crate::attribution::Method::Analytic).unwrap();
        let g = crate::numeric::row_sums(panel.step(0));
        let rows: Vec<usize> = (0..400).step_by(7).collect();
        let sub = subset_shares(&f, &panel, &rows, &BaselineSpec::Zero, crate::attribution::Method::Analytic).unwrap();
        let c = linear_reconciliation_factor(&g, &rows).unwrap();
        for (k, &i) in rows.iter().enumerate() {
            let want = c * full.normalized().unwrap()[i];
            assert!((sub.normalized().unwrap()[k] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn sweep_separates_linear_from_nonlinear() {
        let spec = SyntheticPanelSpec {
            engagement_coupling: vec![0.3, 0.9],
            ..SyntheticPanelSpec::new(4000, 1, 3, FeatureLaw::ParetoReach, 2)
        };
        let panel = generate_synthetic(&spec).unwrap();
        let sweep = RescaleSweep {
            panel_id: "synthetic".into(),
            functions: vec![ValueFunction::Lin, ValueFunction::Var],
            protocols: vec![Protocol::BiasVisibility],
            sizes: vec![50],
            seeds: (0..4).collect(),
            pool: PoolParams::default(),
            baseline: BaselineSpec::Zero,
        };
        let rows = rescale_sweep(&panel, &sweep).unwrap();
        assert_eq!(rows.len(), 8);
        for r in &rows {
            let eps = r.epsilon.unwrap();
            if r.f_kind == "lin" {
                assert!(eps < 1e-7, "{eps}");
                assert_eq!(r.spearman, Some(1.0));
                assert!(r.hessian_probe < 1e-6);
            } else {
                assert!(eps > 0.01, "{eps}");
                assert!(r.hessian_probe > 1e-9);
            }
        }
        let mut buf = Vec::new();
        write_rescale_table(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(RESCALE_CSV_SCHEMA));
        assert!(text.contains("panel_id,protocol,n,eps_lin,eps_var,"));
        let mut jl = Vec::new();
        write_rescale_jsonl(&mut jl, &rows).unwrap();
        assert_eq!(String::from_utf8(jl).unwrap().lines().count(), 8);
    }
}
