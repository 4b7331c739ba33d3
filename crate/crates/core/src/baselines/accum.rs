//! Incremental coalition values: insert or remove one agent and read `v(C)`
//! without re-evaluating `f` from scratch.

use ndarray::Array2;

use super::{CoalitionGame, Semantics};
use crate::numeric::{row_sums, softplus};
use crate::valuefn::ValueFunction;

/// Fenwick tree over prefix sums.
#[derive(Clone, Debug)]
struct Fenwick {
    tree: Vec<f64>,
}

impl Fenwick {
    fn new(n: usize) -> Self {
        Self { tree: vec![0.0; n + 1] }
    }

    fn add(&mut self, pos: usize, delta: f64) {
        let mut i = pos + 1;
        while i < self.tree.len() {
            self.tree[i] += delta;
            i += i & i.wrapping_neg();
        }
    }

    /// Sum over positions `< pos`.
    fn prefix(&self, pos: usize) -> f64 {
        let mut i = pos;
        let mut acc = 0.0;
        while i > 0 {
            acc += self.tree[i];
            i -= i & i.wrapping_neg();
        }
        acc
    }
}

#[derive(Clone, Debug)]
enum State {
    Lin { g: Vec<f64>, sum: f64 },
    Heat { z: Array2<f64>, sums: Vec<f64> },
    Var { g: Vec<f64>, sum: f64, sum_sq: f64 },
    Gini {
        g: Vec<f64>,
        pos: Vec<usize>,
        count: Fenwick,
        mass: Fenwick,
        sum: f64,
        /// `sum_k k * x_(k)` over the members in ascending order.
        weighted: f64,
    },
    /// Additive and softplus: a running weighted sum.
    Linear { a: Vec<f64>, sum: f64, softplus_scale: Option<f64> },
    Quadratic {
        own: Vec<f64>,
        s: Vec<f64>,
        coupling: Array2<f64>,
        /// `t_j = sum_{i in C} C[j, i] s_i`.
        t: Vec<f64>,
        value: f64,
    },
    /// Re-evaluates the restricted function on every read.
    Restrict { members: Vec<bool> },
    /// Agents outside the coalition sit at the baseline row.
    Pin { config: Array2<f64> },
}

#[derive(Clone, Debug)]
pub(crate) struct Accumulator<'g> {
    game: &'g CoalitionGame,
    state: State,
    size: usize,
}

impl<'g> Accumulator<'g> {
    pub(crate) fn new(game: &'g CoalitionGame) -> Self {
        let n = game.n();
        let z = game.features();
        let state = if let Semantics::Pin(z0) = &game.semantics {
            State::Pin { config: z0.clone() }
        } else {
            match game.value_function() {
                ValueFunction::Lin => State::Lin { g: row_sums(z.view()), sum: 0.0 },
                ValueFunction::Heat => State::Heat {
                    z: z.clone(),
                    sums: vec![0.0; z.ncols()],
                },
                ValueFunction::Var => State::Var {
                    g: row_sums(z.view()),
                    sum: 0.0,
                    sum_sq: 0.0,
                },
                ValueFunction::Gini => {
                    let g = row_sums(z.view());
                    let mut order: Vec<usize> = (0..n).collect();
                    order.sort_by(|&a, &b| g[a].total_cmp(&g[b]).then(a.cmp(&b)));
                    let mut pos = vec![0; n];
                    for (p, &i) in order.iter().enumerate() {
                        pos[i] = p;
                    }
                    State::Gini {
                        g,
                        pos,
                        count: Fenwick::new(n),
                        mass: Fenwick::new(n),
                        sum: 0.0,
                        weighted: 0.0,
                    }
                }
                ValueFunction::Additive { weights } => State::Linear {
                    a: weighted_rows(weights, z),
                    sum: 0.0,
                    softplus_scale: None,
                },
                ValueFunction::Softplus { scale, weights } => State::Linear {
                    a: weighted_rows(weights, z),
                    sum: 0.0,
                    softplus_scale: Some(*scale),
                },
                ValueFunction::QuadraticCross { diag, coupling } => State::Quadratic {
                    own: (0..n)
                        .map(|i| (0..z.ncols()).map(|k| diag[[i, k]] * z[[i, k]] * z[[i, k]]).sum())
                        .collect(),
                    s: row_sums(z.view()),
                    coupling: coupling.clone(),
                    t: vec![0.0; n],
                    value: 0.0,
                },
                ValueFunction::Custom(_) => State::Restrict { members: vec![false; n] },
            }
        };
        Self { game, state, size: 0 }
    }

    #[cfg(test)]
    pub(crate) fn len(&self) -> usize {
        self.size
    }

    pub(crate) fn insert(&mut self, i: usize) {
        self.size += 1;
        match &mut self.state {
            State::Lin { g, sum } => *sum += g[i],
            State::Heat { z, sums } => {
                for (s, x) in sums.iter_mut().zip(z.row(i)) {
                    *s += x;
                }
            }
            State::Var { g, sum, sum_sq } => {
                *sum += g[i];
                *sum_sq += g[i] * g[i];
            }
            State::Gini { g, pos, count, mass, sum, weighted } => {
                let (p, x) = (pos[i], g[i]);
                let rank = count.prefix(p) + 1.0;
                let above = *sum - mass.prefix(p);
                *weighted += rank * x + above;
                *sum += x;
                count.add(p, 1.0);
                mass.add(p, x);
            }
            State::Linear { a, sum, .. } => *sum += a[i],
            State::Quadratic { own, s, coupling, t, value } => {
                *value += own[i] + s[i] * t[i];
                for (tj, c) in t.iter_mut().zip(coupling.column(i)) {
                    *tj += c * s[i];
                }
            }
            State::Restrict { members } => members[i] = true,
            State::Pin { config } => config.row_mut(i).assign(&self.game.features().row(i)),
        }
    }

    pub(crate) fn remove(&mut self, i: usize) {
        self.size -= 1;
        match &mut self.state {
            State::Lin { g, sum } => *sum -= g[i],
            State::Heat { z, sums } => {
                for (s, x) in sums.iter_mut().zip(z.row(i)) {
                    *s -= x;
                }
            }
            State::Var { g, sum, sum_sq } => {
                *sum -= g[i];
                *sum_sq -= g[i] * g[i];
            }
            State::Gini { g, pos, count, mass, sum, weighted } => {
                let (p, x) = (pos[i], g[i]);
                count.add(p, -1.0);
                mass.add(p, -x);
                *sum -= x;
                let rank = count.prefix(p) + 1.0;
                let above = *sum - mass.prefix(p);
                *weighted -= rank * x + above;
            }
            State::Linear { a, sum, .. } => *sum -= a[i],
            State::Quadratic { own, s, coupling, t, value } => {
                for (tj, c) in t.iter_mut().zip(coupling.column(i)) {
                    *tj -= c * s[i];
                }
                *value -= own[i] + s[i] * t[i];
            }
            State::Restrict { members } => members[i] = false,
            State::Pin { config } => {
                if let Semantics::Pin(z0) = &self.game.semantics {
                    config.row_mut(i).assign(&z0.row(i));
                }
            }
        }
    }

    pub(crate) fn value(&self) -> f64 {
        let f = self.game.value_function();
        let c = self.size as f64;
        if self.size == 0 && !matches!(self.state, State::Pin { .. }) {
            return f.empty_value(self.game.features().ncols());
        }
        match &self.state {
            State::Lin { sum, .. } => sum / c,
            State::Heat { sums, .. } => sums.iter().map(|s| s / c).product::<f64>().ln_1p(),
            State::Var { sum, sum_sq, .. } => {
                let m = sum / c;
                (sum_sq / c - m * m).max(0.0)
            }
            State::Gini { sum, weighted, .. } => (2.0 * weighted - (c + 1.0) * sum) / (c * c),
            State::Linear { sum, softplus_scale, .. } => match softplus_scale {
                Some(a) => softplus(a * sum) / a,
                None => *sum,
            },
            State::Quadratic { value, .. } => *value,
            State::Restrict { members } => {
                let rows: Vec<usize> = (0..members.len()).filter(|&i| members[i]).collect();
                self.game.restricted_value(&rows)
            }
            State::Pin { config } => f.evaluate_unchecked(config.view()),
        }
    }
}

fn weighted_rows(w: &Array2<f64>, z: &Array2<f64>) -> Vec<f64> {
    w.outer_iter()
        .zip(z.outer_iter())
        .map(|(wr, zr)| wr.iter().zip(zr.iter()).map(|(a, b)| a * b).sum())
        .collect()
}
