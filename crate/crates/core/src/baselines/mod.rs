//! Coalition-based reference attributions: leave-one-out, exact and sampled
//! Shapley, exact and sampled Banzhaf.

mod accum;
mod methods;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::valuefn::{check_all_finite, ValueFunction};

pub use methods::{
    exact_banzhaf, exact_shapley, leave_one_out, sampled_banzhaf, sampled_shapley, SampledEstimate, EXACT_LIMIT,
};

/// How agents outside a coalition are treated.
#[derive(Clone, Debug, PartialEq)]
pub enum Semantics {
    /// Agents outside `C` are absent; `f` is evaluated on `|C|` agents.
    Restrict,
    /// Agents outside `C` keep their slot at the given baseline row.
    Pin(Array2<f64>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SemanticsKind {
    Restrict,
    Pin,
}

/// `v(C) = f(z restricted to C)`, with `v(empty)` the function's empty value.
#[derive(Clone, Debug)]
pub struct CoalitionGame {
    f: ValueFunction,
    z: Array2<f64>,
    pub(crate) semantics: Semantics,
}

impl CoalitionGame {
    pub fn new(f: ValueFunction, z: Array2<f64>) -> Result<Self> {
        if z.nrows() == 0 {
            return Err(Error::invalid("a game needs at least one agent"));
        }
        check_all_finite(z.view())?;
        f.evaluate(z.view())?;
        Ok(Self { f, z, semantics: Semantics::Restrict })
    }

    /// Pin-to-baseline semantics with `z0` holding every agent's baseline row.
    pub fn pinned(f: ValueFunction, z: Array2<f64>, z0: Array2<f64>) -> Result<Self> {
        if z0.dim() != z.dim() {
            return Err(Error::Shape(format!("baseline {:?} vs features {:?}", z0.dim(), z.dim())));
        }
        check_all_finite(z0.view())?;
        let mut game = Self::new(f, z)?;
        game.semantics = Semantics::Pin(z0);
        Ok(game)
    }

    pub fn n(&self) -> usize {
        self.z.nrows()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.z
    }

    pub fn value_function(&self) -> &ValueFunction {
        &self.f
    }

    pub fn semantics_kind(&self) -> SemanticsKind {
        match self.semantics {
            Semantics::Restrict => SemanticsKind::Restrict,
            Semantics::Pin(_) => SemanticsKind::Pin,
        }
    }

    /// `v(C)` evaluated from scratch; `coalition` holds distinct agent indices.
    pub fn value(&self, coalition: &[usize]) -> f64 {
        match &self.semantics {
            Semantics::Restrict => {
                let mut rows = coalition.to_vec();
                rows.sort_unstable();
                self.restricted_value(&rows)
            }
            Semantics::Pin(z0) => {
                let mut config = z0.clone();
                for &i in coalition {
                    config.row_mut(i).assign(&self.z.row(i));
                }
                self.f.evaluate_unchecked(config.view())
            }
        }
    }

    pub(crate) fn restricted_value(&self, rows: &[usize]) -> f64 {
        if rows.is_empty() {
            return self.f.empty_value(self.z.ncols());
        }
        let sub = self.z.select(Axis(0), rows);
        self.f.restrict(rows).evaluate_unchecked(sub.view())
    }

    pub fn grand_value(&self) -> f64 {
        self.f.evaluate_unchecked(self.z.view())
    }

    pub fn empty_value(&self) -> f64 {
        self.value(&[])
    }
}
