//! Randomised check of efficiency, symmetry, null player and linearity in `f`.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{attribute, attribute_analytic, BaselineSpec, Method, DEFAULT_K};
use crate::error::Result;
use crate::panel::{generate_raw, FeatureLaw, SyntheticPanelSpec};
use crate::valuefn::{CustomFn, ValueFunction};

pub const EFFICIENCY_TOL: f64 = 1e-9;
pub const EXACT_AXIOM_TOL: f64 = 1e-12;

/// Worst observed deviation for each axiom over all panels and functions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxiomReport {
    pub panels: usize,
    /// `|sum phi - delta_v| / |delta_v|`.
    pub efficiency: f64,
    /// `|phi_0 - phi_1|` after duplicating agent 0 into slot 1.
    pub symmetry: f64,
    /// `|phi_i|` for an agent sitting at the baseline.
    pub null_player: f64,
    /// `|phi[a f + b h] - (a phi[f] + b phi[h])|` for the midpoint rule.
    pub linearity: f64,
}

impl AxiomReport {
    pub fn failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut check = |name: &str, v: f64, tol: f64| {
            if !(v <= tol) {
                out.push(format!("{name}: {v:.3e} exceeds {tol:.0e}"));
            }
        };
        check("efficiency", self.efficiency, EFFICIENCY_TOL);
        check("symmetry", self.symmetry, EXACT_AXIOM_TOL);
        check("null_player", self.null_player, EXACT_AXIOM_TOL);
        check("linearity", self.linearity, EXACT_AXIOM_TOL);
        out
    }

    pub fn passed(&self) -> bool {
        self.failures().is_empty()
    }
}

fn blend(f: ValueFunction, h: ValueFunction, a: f64, b: f64) -> ValueFunction {
    let (fe, he) = (f.clone(), h.clone());
    let custom = CustomFn::new("blend", move |z| a * fe.evaluate(z).unwrap_or(f64::NAN) + b * he.evaluate(z).unwrap_or(f64::NAN))
        .with_gradient(move |z| {
            let gf = f.gradient(z).expect("finite path point");
            let gh = h.gradient(z).expect("finite path point");
            gf * a + gh * b
        });
    ValueFunction::custom(custom)
}

/// Runs the four checks on `n_panels` abs-Gaussian panels with `2..=max_n`
/// agents and three dims, for lin, heat, var and gini.
pub fn axiom_suite(n_panels: usize, max_n: usize, seed: u64) -> Result<AxiomReport> {
    let fs = [ValueFunction::Lin, ValueFunction::Heat, ValueFunction::Var, ValueFunction::Gini];
    let zero = BaselineSpec::Zero;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = AxiomReport {
        panels: n_panels,
        efficiency: 0.0,
        symmetry: 0.0,
        null_player: 0.0,
        linearity: 0.0,
    };
    for _ in 0..n_panels {
        let n = rng.random_range(3..=max_n.max(3));
        let spec = SyntheticPanelSpec::new(n, 1, 3, FeatureLaw::AbsGaussian, rng.random());
        let z: Array2<f64> = generate_raw(&spec)?.index_axis_move(ndarray::Axis(1), 0);
        let mut dup = z.clone();
        dup.row_mut(1).assign(&z.row(0));
        let mut null = z.clone();
        null.row_mut(2).fill(0.0);
        for f in &fs {
            let r = attribute_analytic(f, z.view(), &zero)?;
            rep.efficiency = rep.efficiency.max(r.efficiency_residual() / r.delta_v.abs());
            let r = attribute_analytic(f, dup.view(), &zero)?;
            rep.symmetry = rep.symmetry.max((r.phi[0] - r.phi[1]).abs());
            let r = attribute_analytic(f, null.view(), &zero)?;
            rep.null_player = rep.null_player.max(r.phi[2].abs());
        }
        let (a, b) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        for (f, h) in [(&fs[1], &fs[2]), (&fs[0], &fs[3])] {
            let m = Method::Midpoint { k: DEFAULT_K };
            let pf = attribute(f, z.view(), &zero, m)?.phi;
            let ph = attribute(h, z.view(), &zero, m)?.phi;
            let pb = attribute(&blend(f.clone(), h.clone(), a, b), z.view(), &zero, m)?.phi;
            for i in 0..n {
                rep.linearity = rep.linearity.max((pb[i] - (a * pf[i] + b * ph[i])).abs());
            }
        }
    }
    Ok(rep)
}
