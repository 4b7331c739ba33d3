use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{BaselineSpec, Method, TemporalAttribution, DEGENERATE_TOL};
use crate::error::{Error, Result};

pub const ATTRIBUTION_CSV_SCHEMA: &str = "#schema aumann.attribution/1";

/// Rows `agent_id,step,phi,phi_norm`; `phi_norm` is `phi / delta_v_t` and left
/// empty for steps whose macro change is degenerate.
pub fn write_attribution_csv(mut w: impl Write, agent_ids: &[String], result: &TemporalAttribution) -> Result<()> {
    let (n, t) = result.phi.dim();
    if agent_ids.len() != n {
        return Err(Error::Shape(format!("{} ids for {n} agents", agent_ids.len())));
    }
    writeln!(w, "{ATTRIBUTION_CSV_SCHEMA}")?;
    let mut cw = csv::Writer::from_writer(w);
    cw.write_record(["agent_id", "step", "phi", "phi_norm"])?;
    for (i, id) in agent_ids.iter().enumerate() {
        for s in 0..t {
            let p = result.phi[[i, s]];
            let dv = result.delta_v[s];
            let norm = if dv.abs() > DEGENERATE_TOL {
                format!("{:e}", p / dv)
            } else {
                String::new()
            };
            cw.write_record([id.as_str(), &s.to_string(), &format!("{p:e}"), &norm])?;
        }
    }
    cw.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributionSummary {
    pub schema: String,
    pub value_function: String,
    pub method: Method,
    pub k: Option<usize>,
    pub baseline: BaselineSpec,
    pub n_agents: usize,
    pub n_steps: usize,
    pub delta_v: Vec<f64>,
    pub delta_v_total: f64,
    /// Largest `|sum_i phi_{i,t} - delta_v_t|` over steps.
    pub efficiency_residual: f64,
    pub efficiency_tolerance: f64,
    pub efficiency_ok: bool,
    pub rank_ties: usize,
}

impl AttributionSummary {
    pub fn new(value_function: &str, result: &TemporalAttribution) -> Self {
        let (n, t) = result.phi.dim();
        let residual = result.step_residuals().into_iter().fold(0.0, f64::max);
        let scale = result.delta_v.iter().fold(1.0f64, |m, d| m.max(d.abs()));
        let tolerance = efficiency_tolerance(result.method) * scale;
        Self {
            schema: "aumann.attribution_summary/1".into(),
            value_function: value_function.into(),
            method: result.method,
            k: result.method.k(),
            baseline: result.baseline.clone(),
            n_agents: n,
            n_steps: t,
            delta_v: result.delta_v.clone(),
            delta_v_total: result.total_delta_v(),
            efficiency_residual: residual,
            efficiency_tolerance: tolerance,
            efficiency_ok: residual <= tolerance,
            rank_ties: result.rank_ties,
        }
    }
}

/// Relative efficiency slack: closed forms are exact up to rounding, the
/// quadrature carries its `O(1/K^2)` error.
pub fn efficiency_tolerance(method: Method) -> f64 {
    match method {
        Method::Analytic => 1e-9,
        Method::Midpoint { k } | Method::PermutedPath { k, .. } => {
            let k = k as f64;
            (1e-6f64).max(0.5 / (k * k))
        }
    }
}
