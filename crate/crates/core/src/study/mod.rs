//! Experimental harness: sampling protocols, cross-scale flip study,
//! dose-response, rank agreement, deletion faithfulness, quadrature
//! convergence and the wall-clock benchmark.

pub mod bench;
pub mod convergence;
pub mod deletion;
pub mod flip;
pub mod heatmap;
pub mod metrics;
pub mod sampling;

pub use bench::{bench_scaling, write_bench_csv, BenchCell, BenchMethod, BenchTable, BENCH_CSV_SCHEMA};
pub use convergence::{k_convergence_sweep, write_convergence_csv, ConvergenceRow, CONVERGENCE_CSV_SCHEMA};
pub use deletion::{deletion_faithfulness, random_ranking_auc, target_step, DeletionReport};
pub use flip::{dose_response, flip_study, DoseRow, FlipCell, FlipConfig, FlipReport, FLIP_CSV_SCHEMA};
pub use heatmap::{bin_step_mass, write_heatmap_png};
pub use metrics::{cosine, jaccard_top_k, kendall_tau_b, mae, rank_agreement, relative_l1, spearman, RankAgreement};
pub use sampling::{protocol_pool, sample_subset, AgentMetrics, PoolParams, Protocol, SubsetSpec};

use crate::attribution::{attribute_temporal, normalize, AttributionResult, BaselineSpec, Method, DEFAULT_K};
use crate::error::Result;
use crate::panel::FeaturePanel;
use crate::valuefn::ValueFunction;

/// Analytic when a closed form applies, otherwise the midpoint rule.
pub fn default_method(f: &ValueFunction, baseline: &BaselineSpec) -> Method {
    if f.has_closed_form() && baseline.is_zero() {
        Method::Analytic
    } else {
        Method::Midpoint { k: DEFAULT_K }
    }
}

/// Window-level normalised shares `Phi_i / sum_t delta_v_t` on a whole panel.
pub fn window_shares(
    f: &ValueFunction,
    panel: &FeaturePanel,
    baseline: &BaselineSpec,
    method: Method,
) -> Result<AttributionResult> {
    normalize(attribute_temporal(f, panel, baseline, method)?.aggregate())
}

/// Window-level shares on the panel restricted to `rows`, with `n = |rows|`.
pub fn subset_shares(
    f: &ValueFunction,
    panel: &FeaturePanel,
    rows: &[usize],
    baseline: &BaselineSpec,
    method: Method,
) -> Result<AttributionResult> {
    let sub = panel.select(rows)?;
    window_shares(&f.restrict(rows), &sub, baseline, method)
}
