use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use serde::Serialize;

use aumann::attribution::{attribute_temporal, write_attribution_csv, AttributionSummary, Method, DEFAULT_K};
use aumann::panel::{
    generate_synthetic, ingest_events, make_tier_partition, read_events_file, read_follower_snapshot, read_panel_file,
    write_panel_csv, write_panel_file, FeatureLaw, IngestConfig, SyntheticPanelSpec,
};
use aumann::scalingbias::{counterexample_check, rescale_sweep, write_rescale_jsonl, write_rescale_table, RescaleSweep};
use aumann::study::bench::{BenchConfig, BenchMethod};
use aumann::study::flip::write_dose_csv;
use aumann::study::{
    bench_scaling, bin_step_mass, default_method, dose_response, flip_study, k_convergence_sweep, write_bench_csv,
    write_convergence_csv, write_heatmap_png, FlipConfig, PoolParams, Protocol,
};
use aumann::{FeaturePanel, ValueFunction, ValueKind};

use crate::config::{parse_anchor, parse_baseline, BenchFile, StudyConfig};
use crate::manifest::{sha256_hex, Run};
use crate::{usage, Cli, Command, Common};

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let common = cli.common;
    if !matches!(cli.command, Command::Bench(_)) {
        if let Some(n) = common.threads {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build_global()
                .context("configuring the worker pool")?;
        }
    }
    match cli.command {
        Command::Generate(a) => generate(&common, a),
        Command::Ingest(a) => ingest(&common, a),
        Command::Attribute(a) => attribute(&common, a),
        Command::Study(a) => study(&common, a),
        Command::Bench(a) => bench(&common, a),
        Command::Verify(a) => verify(&common, a),
    }
}

fn require_file(path: &Path) -> anyhow::Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(usage(format!("no such file: {}", path.display())))
    }
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> anyhow::Result<Vec<T>> {
    s.split(',')
        .filter(|x| !x.trim().is_empty())
        .map(|x| x.trim().parse::<T>().map_err(|_| usage(format!("bad {what} `{x}`"))))
        .collect()
}

fn args_hash<T: Serialize>(args: &T) -> anyhow::Result<Vec<u8>> {
    Ok(serde_json::to_vec(args)?)
}

/// Built-in function for `n` agents; index-weighted kinds draw their
/// parameters from `seed`.
fn value_function(name: &str, n: usize, d: usize, seed: u64) -> anyhow::Result<ValueFunction> {
    let kind: ValueKind = name.parse().map_err(|e: aumann::Error| usage(e.to_string()))?;
    if kind == ValueKind::Custom {
        return Err(usage("custom value functions are available from the library only"));
    }
    Ok(ValueFunction::random_benchmark(kind, n, d, seed)?)
}

#[derive(Args, Debug, Serialize)]
pub struct GenerateArgs {
    #[arg(long)]
    pub agents: usize,
    #[arg(long, default_value_t = 1)]
    pub steps: usize,
    #[arg(long, default_value_t = 3)]
    pub dims: usize,
    /// uniform_pm1, abs_gaussian or pareto_reach.
    #[arg(long, default_value = "abs_gaussian")]
    pub law: String,
    #[arg(long, default_value_t = 1.5)]
    pub alpha: f64,
    /// Comma-separated reach coupling of each dim after reach (pareto_reach only).
    #[arg(long, default_value = "")]
    pub coupling: String,
    #[arg(long, default_value = "panel.asp")]
    pub out: String,
    /// Also write the panel as CSV.
    #[arg(long)]
    pub csv: bool,
}

fn generate(common: &Common, a: GenerateArgs) -> anyhow::Result<()> {
    let law: FeatureLaw = a.law.parse().map_err(|e: aumann::Error| usage(e.to_string()))?;
    let spec = SyntheticPanelSpec {
        pareto_alpha: a.alpha,
        engagement_coupling: parse_list(&a.coupling, "coupling")?,
        ..SyntheticPanelSpec::new(a.agents, a.steps, a.dims, law, common.seed)
    };
    let mut run = Run::new("generate", &common.out_dir, &args_hash(&spec)?, vec![common.seed], rayon::current_num_threads())?;
    let panel = run.time("generate", || generate_synthetic(&spec))?;
    write_panel_file(&panel, run.output(&a.out))?;
    if a.csv {
        let name = format!("{}.csv", a.out.trim_end_matches(".asp"));
        let mut w = create(&run.output(&name))?;
        write_panel_csv(&panel, &mut w)?;
        w.flush()?;
    }
    println!("panel: {} agents x {} steps x {} dims", panel.n_agents(), panel.n_steps(), panel.n_dims());
    run.finish()?;
    Ok(())
}

#[derive(Args, Debug, Serialize)]
pub struct IngestArgs {
    /// JSONL event stream.
    #[arg(long)]
    pub events: PathBuf,
    /// Topic keywords, one per line; `#` starts a comment.
    #[arg(long)]
    pub topics: PathBuf,
    /// Window start, UTC seconds (inclusive).
    #[arg(long)]
    pub start: i64,
    /// Window end, UTC seconds (exclusive).
    #[arg(long)]
    pub end: i64,
    /// Step length in seconds; must divide the window.
    #[arg(long, default_value_t = 86_400)]
    pub step: i64,
    /// Accumulate activity and resonance from the window start.
    #[arg(long)]
    pub cumulative: bool,
    /// CSV of `agent_id,followers` at the window start.
    #[arg(long)]
    pub snapshot: Option<PathBuf>,
    /// Drop actors whose id matches this regex (repeatable).
    #[arg(long)]
    pub exclude: Vec<String>,
    #[arg(long, default_value = "panel.asp")]
    pub out: String,
    #[arg(long)]
    pub csv: bool,
}

fn read_keywords(path: &Path) -> anyhow::Result<Vec<String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}

fn ingest(common: &Common, a: IngestArgs) -> anyhow::Result<()> {
    require_file(&a.events)?;
    require_file(&a.topics)?;
    if let Some(s) = &a.snapshot {
        require_file(s)?;
    }
    let mut cfg = IngestConfig::new(read_keywords(&a.topics)?, a.start, a.end, a.step);
    cfg.cumulative = a.cumulative;
    cfg.exclude = a
        .exclude
        .iter()
        .map(|p| regex::Regex::new(p).map_err(|e| usage(format!("bad --exclude pattern: {e}"))))
        .collect::<anyhow::Result<_>>()?;
    if let Some(s) = &a.snapshot {
        cfg.follower_snapshot = Some(read_follower_snapshot(s)?);
    }
    let mut hashed = args_hash(&a)?;
    hashed.extend(std::fs::read(&a.topics)?);
    let mut run = Run::new("ingest", &common.out_dir, &hashed, vec![], rayon::current_num_threads())?;
    let parsed = run.time("parse", || read_events_file(&a.events))?;
    let report = run.time("ingest", || ingest_events(&parsed.events, &cfg))?;
    let panel = report.panel;
    write_panel_file(&panel, run.output(&a.out))?;
    if a.csv {
        let name = format!("{}.csv", a.out.trim_end_matches(".asp"));
        let mut w = create(&run.output(&name))?;
        write_panel_csv(&panel, &mut w)?;
        w.flush()?;
    }
    if parsed.warnings() > 0 {
        eprintln!("warning: skipped {} malformed lines", parsed.warnings());
    }
    println!(
        "panel: {} agents x {} steps x {} dims ({} topic events, {} excluded events)",
        panel.n_agents(),
        panel.n_steps(),
        panel.n_dims(),
        report.topic_events,
        report.excluded_events
    );
    run.finish()?;
    Ok(())
}

#[derive(Args, Debug, Serialize)]
pub struct AttributeArgs {
    #[arg(long)]
    pub panel: PathBuf,
    /// lin, heat, var, gini, additive, quadratic_cross or softplus.
    #[arg(long = "f")]
    pub f: String,
    /// analytic, midpoint, permuted_path or auto.
    #[arg(long, default_value = "auto")]
    pub method: String,
    #[arg(long = "K", alias = "k", default_value_t = DEFAULT_K)]
    pub k: usize,
    /// zero, population_mean, first_step or comma-separated per-dim values.
    #[arg(long, default_value = "zero")]
    pub baseline: String,
    #[arg(long, default_value = "attribution.csv")]
    pub out: String,
}

fn attribute(common: &Common, a: AttributeArgs) -> anyhow::Result<()> {
    require_file(&a.panel)?;
    let baseline = parse_baseline(&a.baseline).map_err(|e| usage(e.to_string()))?;
    if a.k == 0 {
        return Err(usage("--K must be positive"));
    }
    let panel = read_panel_file(&a.panel)?;
    let f = value_function(&a.f, panel.n_agents(), panel.n_dims(), common.seed)?;
    let method = match a.method.as_str() {
        "auto" => match default_method(&f, &baseline) {
            Method::Midpoint { .. } => Method::Midpoint { k: a.k },
            m => m,
        },
        "analytic" => {
            if !baseline.is_zero() {
                return Err(usage(format!(
                    "the analytic method needs --baseline zero (got {}); hint: use --method midpoint",
                    a.baseline
                )));
            }
            if !f.has_closed_form() {
                return Err(usage(format!("{} has no closed form; hint: use --method midpoint", f.name())));
            }
            Method::Analytic
        }
        "midpoint" => Method::Midpoint { k: a.k },
        "permuted_path" | "permuted" => Method::PermutedPath { k: a.k, seed: common.seed },
        other => return Err(usage(format!("unknown method `{other}`"))),
    };
    let mut hashed = args_hash(&a)?;
    hashed.extend(sha256_hex(&std::fs::read(&a.panel)?).into_bytes());
    let mut run = Run::new("attribute", &common.out_dir, &hashed, vec![common.seed], rayon::current_num_threads())?;
    let result = run.time("attribute", || attribute_temporal(&f, &panel, &baseline, method))?;
    let mut w = create(&run.output(&a.out))?;
    write_attribution_csv(&mut w, panel.agent_ids(), &result)?;
    w.flush()?;
    let summary = AttributionSummary::new(&f.name(), &result);
    let name = format!("{}.summary.json", a.out.trim_end_matches(".csv"));
    std::fs::write(run.output(&name), serde_json::to_string_pretty(&summary)? + "\n")?;
    println!(
        "{} via {}: delta_v = {:.6e}, efficiency residual = {:.3e} ({})",
        summary.value_function,
        summary.method.name(),
        summary.delta_v_total,
        summary.efficiency_residual,
        if summary.efficiency_ok { "ok" } else { "above tolerance" }
    );
    run.finish()?;
    Ok(())
}

#[derive(Args, Debug)]
pub struct StudyArgs {
    /// Flat TOML study file.
    #[arg(long)]
    pub config: PathBuf,
}

fn study_panel(cfg: &StudyConfig, base: &Path, seed: u64) -> anyhow::Result<(FeaturePanel, String)> {
    if let Some(p) = &cfg.panel {
        let path = base.join(p);
        require_file(&path)?;
        let id = cfg.panel_id.clone().unwrap_or_else(|| {
            path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
        });
        return Ok((read_panel_file(&path)?, id));
    }
    let law: FeatureLaw = cfg.synthetic_law.parse().map_err(|e: aumann::Error| usage(e.to_string()))?;
    let n = cfg.synthetic_agents.expect("validated");
    let mut spec = SyntheticPanelSpec::new(n, cfg.synthetic_steps, 3, law, seed);
    spec.engagement_coupling = cfg.synthetic_coupling.clone();
    if let Some(alpha) = cfg.synthetic_alpha {
        spec.pareto_alpha = alpha;
    }
    let id = cfg.panel_id.clone().unwrap_or_else(|| format!("synthetic_{}", law_name(law)));
    Ok((generate_synthetic(&spec)?, id))
}

fn law_name(law: FeatureLaw) -> &'static str {
    match law {
        FeatureLaw::UniformPm1 => "uniform_pm1",
        FeatureLaw::AbsGaussian => "abs_gaussian",
        FeatureLaw::ParetoReach => "pareto_reach",
    }
}

fn study(common: &Common, a: StudyArgs) -> anyhow::Result<()> {
    require_file(&a.config)?;
    let bytes = std::fs::read(&a.config)?;
    let text = String::from_utf8(bytes.clone()).map_err(|_| usage("config is not UTF-8"))?;
    let cfg: StudyConfig = toml::from_str(&text).map_err(|e| usage(format!("bad config: {e}")))?;
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let base = a.config.parent().map(Path::to_path_buf).unwrap_or_default();
    let (panel, panel_id) = study_panel(&cfg, &base, common.seed)?;
    let (n, d) = (panel.n_agents(), panel.n_dims());
    let functions = cfg
        .functions
        .iter()
        .map(|f| value_function(f, n, d, common.seed))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let protocols = cfg
        .protocols
        .iter()
        .map(|p| p.parse::<Protocol>().map_err(|e| usage(e.to_string())))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let baseline = parse_baseline(&cfg.baseline).map_err(|e| usage(e.to_string()))?;
    let pool = PoolParams {
        pool_fraction: cfg.pool_fraction,
        pool_size: cfg.pool_size,
    };
    let anchor = parse_anchor(&cfg.anchor, &panel).map_err(|e| usage(e.to_string()))?;
    let partition = make_tier_partition(&panel, &anchor, &cfg.cuts)?;
    let mut seeds = cfg.seeds.clone();
    seeds.insert(0, common.seed);
    let mut run = Run::new("study", &common.out_dir, &bytes, seeds, rayon::current_num_threads())?;
    let wants = |name: &str| cfg.analyses.iter().any(|x| x == name);

    if wants("flip") {
        let config = FlipConfig {
            functions: functions.clone(),
            protocols: protocols.clone(),
            sizes: cfg.sizes.clone(),
            seeds: cfg.seeds.clone(),
            pool,
            baseline: baseline.clone(),
        };
        let report = run.time("flip", || flip_study(&panel, &partition, &config))?;
        let mut w = create(&run.output("flip_cells.csv"))?;
        report.write_cells_csv(&mut w)?;
        w.flush()?;
        let mut w = create(&run.output("flip_summary.csv"))?;
        report.write_summary_csv(&mut w)?;
        w.flush()?;
        let degenerate: usize = report.cells.iter().filter(|c| c.shares.is_none()).count();
        println!("flip: {} cells ({degenerate} degenerate)", report.cells.len());
    }
    if wants("rescale") {
        let sweep = RescaleSweep {
            panel_id: panel_id.clone(),
            functions: functions.clone(),
            protocols: protocols.clone(),
            sizes: cfg.sizes.clone(),
            seeds: cfg.seeds.clone(),
            pool,
            baseline: baseline.clone(),
        };
        let rows = run.time("rescale", || rescale_sweep(&panel, &sweep))?;
        let mut w = create(&run.output("rescale.jsonl"))?;
        write_rescale_jsonl(&mut w, &rows)?;
        w.flush()?;
        let mut w = create(&run.output("rescale_table.csv"))?;
        write_rescale_table(&mut w, &rows)?;
        w.flush()?;
        println!("rescale: {} rows", rows.len());
    }
    if wants("dose") {
        let size = cfg.sizes[0];
        let rows = run.time("dose", || dose_response(&panel, &partition, &protocols, size, &cfg.seeds, &pool))?;
        let mut w = create(&run.output("dose.csv"))?;
        write_dose_csv(&mut w, &rows)?;
        w.flush()?;
        println!("dose: {} protocols at n = {size}", rows.len());
    }
    if wants("convergence") {
        let f = &functions[0];
        let rows = run.time("convergence", || k_convergence_sweep(f, panel.step(0), &baseline, &cfg.k_list))?;
        let mut w = create(&run.output("convergence.csv"))?;
        write_convergence_csv(&mut w, &rows)?;
        w.flush()?;
        println!("convergence: {} values of K for {}", rows.len(), f.name());
    }
    if wants("heatmap") {
        let f = &functions[0];
        let method = default_method(f, &baseline);
        let result = run.time("heatmap", || attribute_temporal(f, &panel, &baseline, method))?;
        let anchor_values = anchor.values(&panel)?;
        let mass = bin_step_mass(result.phi.view(), &anchor_values, cfg.heatmap_bins.min(n))?;
        write_heatmap_png(mass.view(), run.output("heatmap.png"), 16)?;
        let mut w = create(&run.output("heatmap_mass.csv"))?;
        writeln!(w, "#schema aumann.heatmap/1")?;
        let header: Vec<String> = (0..mass.ncols()).map(|t| format!("step{t}")).collect();
        writeln!(w, "bin,{}", header.join(","))?;
        for (b, row) in mass.outer_iter().enumerate() {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            writeln!(w, "{b},{}", cells.join(","))?;
        }
        w.flush()?;
    }
    run.finish()?;
    Ok(())
}

#[derive(Args, Debug, Serialize)]
pub struct BenchArgs {
    /// Optional TOML file; flags fill the keys it omits.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long = "f")]
    pub f: Option<String>,
    /// Comma-separated ascending sizes.
    #[arg(long)]
    pub sizes: Option<String>,
    /// Comma-separated subset of ours_analytic, ours_midpoint, loo, sampled_shapley,
    /// sampled_banzhaf, exact_shapley, exact_banzhaf.
    #[arg(long)]
    pub methods: Option<String>,
    #[arg(long = "m")]
    pub m_samples: Option<usize>,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long = "K", alias = "k")]
    pub k: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub sampled_max_n: Option<usize>,
}

fn bench(common: &Common, a: BenchArgs) -> anyhow::Result<()> {
    let (file, bytes) = match &a.config {
        Some(p) => {
            require_file(p)?;
            let bytes = std::fs::read(p)?;
            let text = String::from_utf8(bytes.clone()).map_err(|_| usage("config is not UTF-8"))?;
            let file: BenchFile = toml::from_str(&text).map_err(|e| usage(format!("bad config: {e}")))?;
            (file, bytes)
        }
        None => (BenchFile::default(), args_hash(&a)?),
    };
    let f_name = a.f.clone().or(file.f).unwrap_or_else(|| "heat".into());
    let kind: ValueKind = f_name.parse().map_err(|e: aumann::Error| usage(e.to_string()))?;
    let sizes = match (&a.sizes, file.sizes) {
        (Some(s), _) => parse_list(s, "size")?,
        (None, Some(s)) => s,
        (None, None) => vec![10, 100, 1000, 10_000, 100_000, 1_000_000],
    };
    let methods: Vec<BenchMethod> = match (&a.methods, file.methods) {
        (Some(s), _) => parse_list(s, "method")?,
        (None, Some(m)) => m
            .iter()
            .map(|x| x.parse().map_err(|e: aumann::Error| usage(e.to_string())))
            .collect::<anyhow::Result<_>>()?,
        (None, None) => vec![BenchMethod::OursAnalytic],
    };
    let mut cfg = BenchConfig::new(kind, sizes, methods);
    cfg.seed = common.seed;
    cfg.threads = common.threads.unwrap_or(1);
    if let Some(m) = a.m_samples.or(file.m_samples) {
        cfg.m_samples = m;
    }
    if let Some(r) = a.repeats.or(file.repeats) {
        cfg.repeats = r;
    }
    if let Some(k) = a.k.or(file.k) {
        cfg.k = k;
    }
    if let Some(s) = a.steps.or(file.steps) {
        cfg.n_steps = s;
    }
    if let Some(s) = a.sampled_max_n.or(file.sampled_max_n) {
        cfg.sampled_max_n = s;
    }
    let mut run = Run::new("bench", &common.out_dir, &bytes, vec![common.seed], cfg.threads)?;
    let table = run.time("bench", || bench_scaling(&cfg))?;
    let mut w = create(&run.output("bench.csv"))?;
    write_bench_csv(&mut w, &table)?;
    w.flush()?;
    std::fs::write(run.output("bench.json"), serde_json::to_string_pretty(&table)? + "\n")?;
    for n in &table.sizes {
        let cells: Vec<String> = table
            .methods
            .iter()
            .map(|m| match table.seconds(*n, *m) {
                Some(s) => format!("{m}={s:.3e}s"),
                None => format!("{m}=-"),
            })
            .collect();
        println!("n = {n}: {}", cells.join(" "));
    }
    run.finish()?;
    Ok(())
}

#[derive(Args, Debug, Serialize)]
pub struct VerifyArgs {
    /// Random panels in the axiom suite.
    #[arg(long, default_value_t = 50)]
    pub panels: usize,
    /// Largest panel size in the axiom suite.
    #[arg(long, default_value_t = 100)]
    pub max_n: usize,
}

#[derive(Serialize)]
struct VerifyReport {
    counterexample: aumann::scalingbias::CounterexampleReport,
    axioms: aumann::attribution::AxiomReport,
    axiom_failures: Vec<String>,
    passed: bool,
}

fn verify(common: &Common, a: VerifyArgs) -> anyhow::Result<()> {
    let mut run = Run::new("verify", &common.out_dir, &args_hash(&a)?, vec![common.seed], rayon::current_num_threads())?;
    let counterexample = run.time("counterexample", counterexample_check)?;
    let axioms = run.time("axioms", || aumann::attribution::axiom_suite(a.panels, a.max_n, common.seed))?;
    let axiom_failures = axioms.failures();
    let report = VerifyReport {
        passed: counterexample.passed() && axiom_failures.is_empty(),
        counterexample,
        axioms,
        axiom_failures,
    };
    std::fs::write(run.output("verify.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    let status = |ok: bool| if ok { "PASS" } else { "FAIL" };
    println!("counterexample: {}", status(report.counterexample.passed()));
    for f in &report.counterexample.failures {
        println!("  {f}");
    }
    println!(
        "axioms ({} panels): {} (efficiency {:.1e}, symmetry {:.1e}, null {:.1e}, linearity {:.1e})",
        report.axioms.panels,
        status(report.axiom_failures.is_empty()),
        report.axioms.efficiency,
        report.axioms.symmetry,
        report.axioms.null_player,
        report.axioms.linearity
    );
    for f in &report.axiom_failures {
        println!("  {f}");
    }
    run.finish()?;
    if !report.passed {
        anyhow::bail!("verification failed");
    }
    Ok(())
}
