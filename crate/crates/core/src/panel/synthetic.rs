use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Pareto, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use super::{default_dim_names, FeaturePanel};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureLaw {
    UniformPm1,
    AbsGaussian,
    ParetoReach,
}

impl std::str::FromStr for FeatureLaw {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform_pm1" => Ok(FeatureLaw::UniformPm1),
            "abs_gaussian" => Ok(FeatureLaw::AbsGaussian),
            "pareto_reach" => Ok(FeatureLaw::ParetoReach),
            other => Err(Error::invalid(format!("unknown feature law `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticPanelSpec {
    pub n_agents: usize,
    pub n_steps: usize,
    pub n_dims: usize,
    pub feature_law: FeatureLaw,
    pub pareto_alpha: f64,
    /// For `pareto_reach`: correlation of each engagement dim (1..D) with the
    /// standardised log-reach before the absolute value is taken. Empty means
    /// independent dims.
    #[serde(default)]
    pub engagement_coupling: Vec<f64>,
    pub seed: u64,
}

impl SyntheticPanelSpec {
    pub fn new(n_agents: usize, n_steps: usize, n_dims: usize, feature_law: FeatureLaw, seed: u64) -> Self {
        Self {
            n_agents,
            n_steps,
            n_dims,
            feature_law,
            pareto_alpha: 1.5,
            engagement_coupling: Vec::new(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_agents == 0 || self.n_steps == 0 || self.n_dims == 0 {
            return Err(Error::invalid("synthetic panel dims must be positive"));
        }
        if self.feature_law == FeatureLaw::ParetoReach {
            if !(self.pareto_alpha > 1.0 && self.pareto_alpha.is_finite()) {
                return Err(Error::invalid("pareto_alpha must exceed 1"));
            }
            if !self.engagement_coupling.is_empty() && self.engagement_coupling.len() + 1 != self.n_dims {
                return Err(Error::invalid("engagement_coupling needs one entry per dim after reach"));
            }
            if self.engagement_coupling.iter().any(|c| !(-1.0..=1.0).contains(c)) {
                return Err(Error::invalid("engagement_coupling entries must lie in [-1, 1]"));
            }
        }
        Ok(())
    }

    fn coupling(&self, dim: usize) -> f64 {
        self.engagement_coupling.get(dim - 1).copied().unwrap_or(0.0)
    }
}

/// Draws the feature tensor. `uniform_pm1` values stay in `[-1, 1]` here.
pub fn generate_raw(spec: &SyntheticPanelSpec) -> Result<Array3<f64>> {
    spec.validate()?;
    let (n, t, d) = (spec.n_agents, spec.n_steps, spec.n_dims);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Array3::zeros((n, t, d));
    match spec.feature_law {
        FeatureLaw::UniformPm1 => {
            let u = Uniform::new(-1.0, 1.0).expect("valid range");
            out.iter_mut().for_each(|x| *x = rng.sample(u));
        }
        FeatureLaw::AbsGaussian => {
            out.iter_mut().for_each(|x| *x = rng.sample::<f64, _>(StandardNormal).abs());
        }
        FeatureLaw::ParetoReach => {
            let alpha = spec.pareto_alpha;
            let pareto = Pareto::new(1.0, alpha).map_err(|e| Error::invalid(e.to_string()))?;
            for i in 0..n {
                let x: f64 = rng.sample(pareto);
                // ln X ~ Exp(alpha), so this has mean 0 and unit variance.
                let e = alpha * x.ln() - 1.0;
                for s in 0..t {
                    out[[i, s, 0]] = (x - 1.0).ln_1p();
                    for k in 1..d {
                        let c = spec.coupling(k);
                        let xi: f64 = rng.sample(StandardNormal);
                        out[[i, s, k]] = (c * e + (1.0 - c * c).sqrt() * xi).abs();
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Nonnegative panel; `uniform_pm1` is mapped through `x -> (x + 1) / 2`.
pub fn generate_synthetic(spec: &SyntheticPanelSpec) -> Result<FeaturePanel> {
    let mut z = generate_raw(spec)?;
    if spec.feature_law == FeatureLaw::UniformPm1 {
        z.mapv_inplace(|x| (x + 1.0) / 2.0);
    }
    let n = spec.n_agents;
    let width = (n.max(2) - 1).to_string().len();
    let ids = (0..n).map(|i| format!("a{i:0width$}")).collect();
    FeaturePanel::new(z, ids, default_dim_names(spec.n_dims))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_in_seed() {
        let spec = SyntheticPanelSpec::new(50, 2, 3, FeatureLaw::AbsGaussian, 9);
        assert_eq!(generate_synthetic(&spec).unwrap(), generate_synthetic(&spec).unwrap());
        let other = SyntheticPanelSpec { seed: 10, ..spec.clone() };
        assert_ne!(generate_synthetic(&spec).unwrap(), generate_synthetic(&other).unwrap());
    }

    #[test]
    fn uniform_shift_has_mean_one_half() {
        let spec = SyntheticPanelSpec::new(20_000, 1, 1, FeatureLaw::UniformPm1, 3);
        let raw = generate_raw(&spec).unwrap();
        assert!(raw.iter().any(|&x| x < 0.0));
        let p = generate_synthetic(&spec).unwrap();
        let m = p.features().mean().unwrap();
        // Uniform(0, 1): sd 1/sqrt(12), so 3 sigma of the mean is about 0.0061.
        assert!((m - 0.5).abs() < 3.0 / (12f64.sqrt() * (20_000f64).sqrt()));
        assert!(p.features().iter().all(|&x| (0.0..=1.0).contains(&x)));
    }

    #[test]
    fn pareto_top_percent_mass() {
        let spec = SyntheticPanelSpec::new(10_000, 1, 3, FeatureLaw::ParetoReach, 1);
        let p = generate_synthetic(&spec).unwrap();
        let mut followers: Vec<f64> = (0..10_000).map(|i| p.step(0)[[i, 0]].exp_m1()).collect();
        followers.sort_by(|a, b| b.total_cmp(a));
        let top: f64 = followers[..100].iter().sum();
        let total: f64 = followers.iter().sum();
        // Closed form for the top p share of Pareto(alpha) mass is p^(1 - 1/alpha) = 0.215.
        assert!(top / total > 0.15, "share {}", top / total);
    }

    #[test]
    fn rejects_light_tail() {
        let mut spec = SyntheticPanelSpec::new(10, 1, 3, FeatureLaw::ParetoReach, 1);
        spec.pareto_alpha = 1.0;
        assert!(generate_synthetic(&spec).is_err());
        spec.pareto_alpha = 2.0;
        spec.engagement_coupling = vec![0.5];
        assert!(generate_synthetic(&spec).is_err());
    }
}
