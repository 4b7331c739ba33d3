//! The ten acceptance criteria, one PASS/FAIL line each.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use ndarray::{Array2, Axis};

use aumann::attribution::{attribute, attribute_analytic, attribute_path_integral, axiom_suite, BaselineSpec, Method, PathKind};
use aumann::baselines::{exact_shapley, leave_one_out, sampled_banzhaf, sampled_shapley, CoalitionGame};
use aumann::panel::{generate_raw, generate_synthetic, make_tier_partition, Anchor, FeatureLaw, SyntheticPanelSpec, DEFAULT_CUTS};
use aumann::scalingbias::{counterexample_check, rescale_sweep, RescaleSweep};
use aumann::study::bench::{BenchConfig, BenchMethod};
use aumann::study::{
    bench_scaling, cosine, flip_study, jaccard_top_k, k_convergence_sweep, kendall_tau_b, mae, spearman, FlipConfig,
    PoolParams, Protocol,
};
use aumann::{FeaturePanel, ValueFunction, ValueKind};

struct Outcome {
    pass: bool,
    detail: String,
}

fn abs_gaussian(n: usize, d: usize, seed: u64) -> Array2<f64> {
    let spec = SyntheticPanelSpec::new(n, 1, d, FeatureLaw::AbsGaussian, seed);
    generate_raw(&spec).unwrap().index_axis_move(Axis(1), 0)
}

fn pareto_panel() -> FeaturePanel {
    let mut spec = SyntheticPanelSpec::new(100_000, 1, 3, FeatureLaw::ParetoReach, 11);
    spec.engagement_coupling = vec![0.3, 0.9];
    generate_synthetic(&spec).unwrap()
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

const FOUR: [ValueFunction; 4] = [ValueFunction::Lin, ValueFunction::Heat, ValueFunction::Var, ValueFunction::Gini];

fn counterexample_exactness() -> Outcome {
    let start = Instant::now();
    let r = counterexample_check().unwrap();
    let secs = start.elapsed();
    let err = [
        max_abs_diff(&r.phi_full, &[1.0 / 6.0, 1.0 / 6.0, 2.0 / 9.0]),
        (r.delta_v_full - 5.0 / 9.0).abs(),
        max_abs_diff(&r.shares_full, &[0.3, 0.3, 0.4]),
        max_abs_diff(&r.shares_subset, &[0.5, 0.5]),
        max_abs_diff(&r.implied_c, &[5.0 / 3.0, 5.0 / 4.0]),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    Outcome {
        pass: r.passed() && err <= 1e-12 && secs < Duration::from_secs(1),
        detail: format!("max abs error {err:.1e}, implied c = {:?}, {secs:.2?}", r.implied_c),
    }
}

fn axioms() -> Outcome {
    let start = Instant::now();
    let r = axiom_suite(50, 100, 2024).unwrap();
    let secs = start.elapsed();
    Outcome {
        pass: r.passed() && secs < Duration::from_secs(10),
        detail: format!(
            "efficiency {:.1e}, symmetry {:.1e}, null {:.1e}, linearity {:.1e}, {secs:.2?}",
            r.efficiency, r.symmetry, r.null_player, r.linearity
        ),
    }
}

fn closed_form_vs_quadrature() -> Outcome {
    let start = Instant::now();
    let (mut worst_mae, mut worst_rho) = (0.0f64, 1.0f64);
    for n in [10, 100, 1_000, 10_000] {
        let z = abs_gaussian(n, 3, n as u64);
        for f in &FOUR {
            let a = attribute_analytic(f, z.view(), &BaselineSpec::Zero).unwrap().phi;
            let m = attribute(f, z.view(), &BaselineSpec::Zero, Method::Midpoint { k: 300 }).unwrap().phi;
            worst_mae = worst_mae.max(mae(&a, &m));
            worst_rho = worst_rho.min(spearman(&a, &m));
        }
    }
    let secs = start.elapsed();
    Outcome {
        pass: worst_mae <= 1e-7 && worst_rho >= 0.9995 && secs < Duration::from_secs(60),
        detail: format!("worst MAE {worst_mae:.1e}, worst Spearman {worst_rho:.4}, {secs:.2?}"),
    }
}

fn quadrature_rate() -> Outcome {
    let start = Instant::now();
    let z = abs_gaussian(10_000, 3, 5);
    let rows = k_convergence_sweep(&ValueFunction::Heat, z.view(), &BaselineSpec::Zero, &[5, 10, 20, 40, 50, 100, 300]).unwrap();
    let ratios: Vec<(usize, f64)> = rows
        .iter()
        .filter(|r| [5, 10, 20, 50].contains(&r.k))
        .map(|r| (r.k, r.ratio_to_double.unwrap_or(f64::NAN)))
        .collect();
    let err300 = rows.iter().find(|r| r.k == 300).map(|r| r.error).unwrap();
    let secs = start.elapsed();
    let in_band = ratios.len() == 4 && ratios.iter().all(|(_, q)| (3.2..=4.8).contains(q));
    let shown: Vec<String> = ratios.iter().map(|(k, q)| format!("K={k}: {q:.3}")).collect();
    Outcome {
        pass: in_band && err300 <= 1e-5 && secs < Duration::from_secs(60),
        detail: format!("err(K)/err(2K) {}, err(300) {err300:.1e}, {secs:.2?}", shown.join(", ")),
    }
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let (mut worst_exact, mut worst_z) = (0.0f64, 0.0f64);
    for n in [3, 5, 8] {
        let f = ValueFunction::random_benchmark(ValueKind::QuadraticCross, n, 2, 30 + n as u64).unwrap();
        let z = abs_gaussian(n, 2, 40 + n as u64);
        let game = CoalitionGame::new(f.clone(), z.clone()).unwrap();
        let exact = exact_shapley(&game).unwrap();
        let path = attribute(&f, z.view(), &BaselineSpec::Zero, Method::Midpoint { k: 30 }).unwrap().phi;
        worst_exact = worst_exact.max(max_abs_diff(&exact, &path));
        let est = sampled_shapley(&game, 2000, 50 + n as u64).unwrap();
        for i in 0..n {
            let dev = (est.mean[i] - exact[i]).abs();
            let z_score = if est.std_err[i] > 0.0 { dev / est.std_err[i] } else if dev <= 1e-12 { 0.0 } else { f64::INFINITY };
            worst_z = worst_z.max(z_score);
        }
    }
    let secs = start.elapsed();
    Outcome {
        pass: worst_exact <= 1e-10 && worst_z <= 3.0 && secs < Duration::from_secs(30),
        detail: format!("exact vs path {worst_exact:.1e}, worst sampled deviation {worst_z:.2} SE, {secs:.2?}"),
    }
}

fn additive_benchmark() -> Outcome {
    let start = Instant::now();
    let (mut worst_mae, mut worst_cos) = (0.0f64, 1.0f64);
    for seed in 0..5 {
        let f = ValueFunction::random_benchmark(ValueKind::Additive, 100, 5, seed).unwrap();
        let ValueFunction::Additive { weights } = &f else { unreachable!() };
        let z = abs_gaussian(100, 5, 100 + seed);
        let truth: Vec<f64> = (weights * &z).sum_axis(Axis(1)).to_vec();
        let game = CoalitionGame::new(f.clone(), z.clone()).unwrap();
        let estimates = [
            attribute(&f, z.view(), &BaselineSpec::Zero, Method::Midpoint { k: 30 }).unwrap().phi,
            leave_one_out(&game).unwrap(),
            sampled_shapley(&game, 200, seed).unwrap().mean,
            sampled_banzhaf(&game, 200, seed).unwrap().mean,
        ];
        for e in &estimates {
            worst_mae = worst_mae.max(mae(e, &truth));
            worst_cos = worst_cos.min(cosine(e, &truth));
        }
    }
    let secs = start.elapsed();
    Outcome {
        pass: worst_mae <= 1e-10 && worst_cos >= 1.0 - 1e-12 && secs < Duration::from_secs(30),
        detail: format!("worst MAE {worst_mae:.1e}, worst 1 - cosine {:.1e}, {secs:.2?}", 1.0 - worst_cos),
    }
}

fn scaling() -> Outcome {
    let start = Instant::now();
    let mut cfg = BenchConfig::new(
        ValueKind::Heat,
        vec![10_000, 100_000, 1_000_000],
        vec![BenchMethod::OursAnalytic, BenchMethod::SampledShapley],
    );
    cfg.m_samples = 1000;
    cfg.repeats = 5;
    cfg.sampled_max_n = 10_000;
    let table = bench_scaling(&cfg).unwrap();
    let ours = |n| table.seconds(n, BenchMethod::OursAnalytic).unwrap();
    let growth = ours(1_000_000) / ours(100_000);
    let speedup = table.seconds(10_000, BenchMethod::SampledShapley).unwrap() / ours(10_000);
    let secs = start.elapsed();
    Outcome {
        pass: growth < 20.0 && speedup >= 1e3 && secs < Duration::from_secs(1800),
        detail: format!("t(1e6)/t(1e5) = {growth:.1}, sampled/ours at 1e4 = {speedup:.2e}, {secs:.2?}"),
    }
}

fn dichotomy(panel: &FeaturePanel) -> Outcome {
    let start = Instant::now();
    let reach: Vec<f64> = panel.step(0).column(0).to_vec();
    let engagement: Vec<f64> = panel.step(0).rows().into_iter().map(|r| r[1] + r[2]).collect();
    let rho = pearson(&reach, &engagement);
    let sweep = RescaleSweep {
        panel_id: "pareto".into(),
        functions: vec![ValueFunction::Lin, ValueFunction::Var, ValueFunction::Gini],
        protocols: vec![Protocol::BiasVisibility],
        sizes: vec![100],
        seeds: (0..10).collect(),
        pool: PoolParams::default(),
        baseline: BaselineSpec::Zero,
    };
    let rows = rescale_sweep(panel, &sweep).unwrap();
    let count = |kind: &str, pred: &dyn Fn(f64) -> bool| {
        rows.iter()
            .filter(|r| r.f_kind == kind && r.epsilon.is_some_and(pred))
            .count()
    };
    let lin_ok = count("lin", &|e| e <= 1e-7);
    let var_ok = count("var", &|e| e >= 0.01);
    let gini_ok = count("gini", &|e| e >= 0.01);
    let lin_rho = rows
        .iter()
        .filter(|r| r.f_kind == "lin")
        .map(|r| r.spearman.unwrap_or(f64::NAN))
        .fold(1.0, f64::min);
    let secs = start.elapsed();
    Outcome {
        pass: rho >= 0.5
            && lin_ok == 10
            && var_ok >= 9
            && gini_ok >= 9
            && lin_rho >= 0.9995
            && secs < Duration::from_secs(300),
        detail: format!(
            "rho {rho:.2}; eps(lin) <= 1e-7 in {lin_ok}/10, eps(var) >= 0.01 in {var_ok}/10, eps(gini) >= 0.01 in {gini_ok}/10; lin Spearman {lin_rho:.4}; {secs:.2?}"
        ),
    }
}

fn flip_direction(panel: &FeaturePanel) -> Outcome {
    let start = Instant::now();
    let partition = make_tier_partition(panel, &Anchor::Reach, &DEFAULT_CUTS).unwrap();
    let seeds: Vec<u64> = (0..10).collect();
    let n = 100;
    let config = FlipConfig {
        functions: vec![ValueFunction::Var],
        protocols: vec![Protocol::BiasVisibility, Protocol::Random],
        sizes: vec![n],
        seeds: seeds.clone(),
        pool: PoolParams::default(),
        baseline: BaselineSpec::Zero,
    };
    let report = flip_study(panel, &partition, &config).unwrap();
    let full_top = report.full["var"][0];
    let flipped = report
        .cells
        .iter()
        .filter(|c| c.protocol == Protocol::BiasVisibility)
        .filter(|c| c.shares.as_ref().is_some_and(|s| s[0] > full_top))
        .count();
    let drawn: usize = report
        .cells
        .iter()
        .filter(|c| c.protocol == Protocol::Random)
        .map(|c| c.counts[0])
        .sum();
    let trials = (n * seeds.len()) as f64;
    let p = 0.01;
    let rate = drawn as f64 / trials;
    let half_width = 3.0 * (p * (1.0 - p) / trials).sqrt();
    let secs = start.elapsed();
    Outcome {
        pass: flipped >= 9 && (rate - p).abs() <= half_width && secs < Duration::from_secs(300),
        detail: format!(
            "biased top-1% share above full ({:.2}%) in {flipped}/10; random top-1% rate {:.2}% vs band 1% +/- {:.2}%; {secs:.2?}",
            100.0 * full_top,
            100.0 * rate,
            100.0 * half_width
        ),
    }
}

fn baseline_and_path() -> Outcome {
    let start = Instant::now();
    let m = Method::Midpoint { k: 30 };
    let (mut worst_j, mut worst_tau) = (1.0f64, 1.0f64);
    for seed in 0..3 {
        let z = abs_gaussian(10_000, 3, 60 + seed);
        let zero = attribute(&ValueFunction::Heat, z.view(), &BaselineSpec::Zero, m).unwrap().phi;
        let mean = attribute(&ValueFunction::Heat, z.view(), &BaselineSpec::PopulationMean, m).unwrap().phi;
        worst_j = worst_j.min(jaccard_top_k(&zero, &mean, 10));
        worst_tau = worst_tau.min(kendall_tau_b(&zero, &mean));
    }
    let mut taus = Vec::new();
    for n in [20, 50, 100] {
        for seed in 0..5 {
            let f = ValueFunction::random_benchmark(ValueKind::Softplus, n, 3, seed).unwrap();
            let z = abs_gaussian(n, 3, 70 + seed);
            let lin = attribute_path_integral(&f, z.view(), &BaselineSpec::Zero, 30, PathKind::Linear).unwrap().phi;
            let perm = attribute_path_integral(&f, z.view(), &BaselineSpec::Zero, 30, PathKind::Permuted { seed })
                .unwrap()
                .phi;
            taus.push(kendall_tau_b(&lin, &perm));
        }
    }
    let mean_tau = taus.iter().sum::<f64>() / taus.len() as f64;
    let min_tau = taus.iter().copied().fold(1.0, f64::min);
    let secs = start.elapsed();
    Outcome {
        pass: worst_j == 1.0 && worst_tau >= 0.99 && mean_tau >= 0.9 && secs < Duration::from_secs(120),
        detail: format!(
            "heat zero vs mean: J10 {worst_j:.2}, tau {worst_tau:.4}; softplus linear vs permuted: mean tau {mean_tau:.3}, min {min_tau:.3}; {secs:.2?}"
        ),
    }
}

fn main() -> ExitCode {
    let panel = pareto_panel();
    let criteria: [(&str, Box<dyn Fn() -> Outcome>); 10] = [
        ("counterexample exactness", Box::new(counterexample_exactness)),
        ("axiom suite", Box::new(axioms)),
        ("closed form vs quadrature", Box::new(closed_form_vs_quadrature)),
        ("quadrature rate", Box::new(quadrature_rate)),
        ("oracle equivalence", Box::new(oracle_equivalence)),
        ("additive benchmark", Box::new(additive_benchmark)),
        ("scaling", Box::new(scaling)),
        ("rescaling dichotomy", Box::new(|| dichotomy(&panel))),
        ("flip direction", Box::new(|| flip_direction(&panel))),
        ("baseline and path robustness", Box::new(baseline_and_path)),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        println!("criterion {:>2} {name}: {} ({})", i + 1, if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
