//! Wall-clock scaling benchmark of the attribution methods.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::attribution::{attribute_temporal, BaselineSpec, Method, DEFAULT_K};
use crate::baselines::{
    exact_banzhaf, exact_shapley, leave_one_out, sampled_banzhaf, sampled_shapley, CoalitionGame, EXACT_LIMIT,
};
use crate::error::{Error, Result};
use crate::numeric::median;
use crate::panel::{generate_synthetic, FeatureLaw, FeaturePanel, SyntheticPanelSpec};
use crate::valuefn::{ValueFunction, ValueKind};

pub const BENCH_CSV_SCHEMA: &str = "#schema aumann.bench/1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchMethod {
    OursAnalytic,
    OursMidpoint,
    Loo,
    SampledShapley,
    SampledBanzhaf,
    ExactShapley,
    ExactBanzhaf,
}

impl BenchMethod {
    pub const ALL: [BenchMethod; 7] = [
        BenchMethod::OursAnalytic,
        BenchMethod::OursMidpoint,
        BenchMethod::Loo,
        BenchMethod::SampledShapley,
        BenchMethod::SampledBanzhaf,
        BenchMethod::ExactShapley,
        BenchMethod::ExactBanzhaf,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BenchMethod::OursAnalytic => "ours_analytic",
            BenchMethod::OursMidpoint => "ours_midpoint",
            BenchMethod::Loo => "loo",
            BenchMethod::SampledShapley => "sampled_shapley",
            BenchMethod::SampledBanzhaf => "sampled_banzhaf",
            BenchMethod::ExactShapley => "exact_shapley",
            BenchMethod::ExactBanzhaf => "exact_banzhaf",
        }
    }

    fn is_exact(self) -> bool {
        matches!(self, BenchMethod::ExactShapley | BenchMethod::ExactBanzhaf)
    }

    fn is_sampled(self) -> bool {
        matches!(self, BenchMethod::SampledShapley | BenchMethod::SampledBanzhaf)
    }
}

impl fmt::Display for BenchMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BenchMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BenchMethod::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown bench method `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub f: ValueKind,
    pub sizes: Vec<usize>,
    pub methods: Vec<BenchMethod>,
    pub m_samples: usize,
    pub repeats: usize,
    pub k: usize,
    pub n_steps: usize,
    pub n_dims: usize,
    pub seed: u64,
    /// Worker threads while timing.
    pub threads: usize,
    /// Sampled estimators are skipped above this size.
    pub sampled_max_n: usize,
}

impl BenchConfig {
    pub fn new(f: ValueKind, sizes: Vec<usize>, methods: Vec<BenchMethod>) -> Self {
        Self {
            f,
            sizes,
            methods,
            m_samples: 1000,
            repeats: 3,
            k: DEFAULT_K,
            n_steps: 1,
            n_dims: 3,
            seed: 0,
            threads: 1,
            sampled_max_n: 100_000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    /// Above the exact-enumeration guard.
    Infeasible,
    /// Above `sampled_max_n`.
    Skipped,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchCell {
    pub n: usize,
    pub method: BenchMethod,
    /// Median over repeats.
    pub seconds: Option<f64>,
    pub status: CellStatus,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchTable {
    pub f_kind: String,
    pub methods: Vec<BenchMethod>,
    pub sizes: Vec<usize>,
    pub repeats: usize,
    pub cells: Vec<BenchCell>,
}

impl BenchTable {
    pub fn seconds(&self, n: usize, method: BenchMethod) -> Option<f64> {
        self.cells
            .iter()
            .find(|c| c.n == n && c.method == method)
            .and_then(|c| c.seconds)
    }
}

fn run_once(method: BenchMethod, f: &ValueFunction, panel: &FeaturePanel, cfg: &BenchConfig) -> Result<()> {
    let zero = BaselineSpec::Zero;
    match method {
        BenchMethod::OursAnalytic => {
            attribute_temporal(f, panel, &zero, Method::Analytic)?;
        }
        BenchMethod::OursMidpoint => {
            attribute_temporal(f, panel, &zero, Method::Midpoint { k: cfg.k })?;
        }
        _ => {
            for t in 0..panel.n_steps() {
                let game = CoalitionGame::new(f.clone(), panel.step(t).to_owned())?;
                match method {
                    BenchMethod::Loo => drop(leave_one_out(&game)?),
                    BenchMethod::SampledShapley => drop(sampled_shapley(&game, cfg.m_samples, cfg.seed)?),
                    BenchMethod::SampledBanzhaf => drop(sampled_banzhaf(&game, cfg.m_samples, cfg.seed)?),
                    BenchMethod::ExactShapley => drop(exact_shapley(&game)?),
                    BenchMethod::ExactBanzhaf => drop(exact_banzhaf(&game)?),
                    _ => unreachable!(),
                }
            }
        }
    }
    Ok(())
}

/// Median-of-repeats wall clock per `(n, method)` on abs-Gaussian panels.
/// Panel construction is not timed.
pub fn bench_scaling(cfg: &BenchConfig) -> Result<BenchTable> {
    if cfg.sizes.is_empty() || cfg.sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("bench sizes must be non-empty and strictly ascending"));
    }
    if cfg.repeats == 0 || cfg.threads == 0 {
        return Err(Error::invalid("repeats and threads must be positive"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::invalid(e.to_string()))?;
    let mut cells = Vec::new();
    for &n in &cfg.sizes {
        let spec = SyntheticPanelSpec::new(n, cfg.n_steps, cfg.n_dims, FeatureLaw::AbsGaussian, cfg.seed);
        let panel = generate_synthetic(&spec)?;
        let f = ValueFunction::random_benchmark(cfg.f, n, cfg.n_dims, cfg.seed)?;
        for &method in &cfg.methods {
            let status = if method.is_exact() && n > EXACT_LIMIT {
                CellStatus::Infeasible
            } else if method.is_sampled() && n > cfg.sampled_max_n {
                CellStatus::Skipped
            } else {
                CellStatus::Ok
            };
            let seconds = if status == CellStatus::Ok {
                let times = (0..cfg.repeats)
                    .map(|_| {
                        pool.install(|| {
                            let start = Instant::now();
                            run_once(method, &f, &panel, cfg)?;
                            Ok(start.elapsed().as_secs_f64())
                        })
                    })
                    .collect::<Result<Vec<f64>>>()?;
                Some(median(&times))
            } else {
                None
            };
            cells.push(BenchCell { n, method, seconds, status });
        }
    }
    Ok(BenchTable {
        f_kind: cfg.f.as_str().to_string(),
        methods: cfg.methods.clone(),
        sizes: cfg.sizes.clone(),
        repeats: cfg.repeats,
        cells,
    })
}

/// One row per size, one column per method; `infeasible` / `skipped` markers.
pub fn write_bench_csv(mut w: impl Write, table: &BenchTable) -> Result<()> {
    writeln!(w, "{BENCH_CSV_SCHEMA}")?;
    let mut csv = csv::Writer::from_writer(w);
    let mut header = vec!["n".to_string()];
    header.extend(table.methods.iter().map(|m| m.to_string()));
    csv.write_record(&header)?;
    for &n in &table.sizes {
        let mut rec = vec![n.to_string()];
        for &m in &table.methods {
            let cell = table.cells.iter().find(|c| c.n == n && c.method == m);
            rec.push(match cell {
                Some(BenchCell { seconds: Some(s), .. }) => format!("{s:.3e}"),
                Some(BenchCell { status: CellStatus::Infeasible, .. }) => "infeasible".into(),
                _ => "skipped".into(),
            });
        }
        csv.write_record(&rec)?;
    }
    csv.flush()?;
    Ok(())
}
