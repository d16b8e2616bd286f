use std::collections::HashMap;

use super::{ConditionalTable, LatentTreeModel};
use crate::data::BinaryMatrix;

const MISSING: u8 = 2;

/// The data restricted to a model's observed columns, compressed into
/// distinct 0/1 configurations with multiplicities. Users who consumed none
/// of the columns share the empty configuration, so the size tracks the
/// number of stored cells rather than the number of users.
#[derive(Debug, Clone)]
pub struct Patterns {
    /// Observed variable ids that are 1, ascending; with multiplicity.
    pub(crate) rows: Vec<(Vec<u32>, f64)>,
    n_users: usize,
}

/// User → configuration lookup produced alongside [`Patterns`].
#[derive(Debug, Clone)]
pub(crate) struct UserPatterns {
    /// `(user, pattern index)` for users with at least one observed 1, by user.
    pub touched: Vec<(u32, usize)>,
    /// Pattern index of the all-zero configuration, if any user has it.
    pub empty: Option<usize>,
}

fn collect_rows(model: &LatentTreeModel, data: &BinaryMatrix) -> HashMap<u32, Vec<u32>> {
    let mut per_user: HashMap<u32, Vec<u32>> = HashMap::new();
    for (v, col) in model.observed() {
        assert!(
            col < data.n_items(),
            "observed column {col} outside data with {} columns",
            data.n_items()
        );
        for &u in data.col(col) {
            per_user.entry(u).or_default().push(v as u32);
        }
    }
    per_user
}

impl Patterns {
    pub fn from_matrix(model: &LatentTreeModel, data: &BinaryMatrix) -> Patterns {
        Self::with_users(model, data).0
    }

    pub(crate) fn with_users(
        model: &LatentTreeModel,
        data: &BinaryMatrix,
    ) -> (Patterns, UserPatterns) {
        let per_user = collect_rows(model, data);
        let mut counts: HashMap<&[u32], usize> = HashMap::new();
        for ones in per_user.values() {
            *counts.entry(ones.as_slice()).or_default() += 1;
        }
        let n_empty = data.n_users() - per_user.len();
        let mut keys: Vec<(Vec<u32>, f64)> = counts
            .iter()
            .map(|(k, &c)| (k.to_vec(), c as f64))
            .collect();
        if n_empty > 0 {
            keys.push((Vec::new(), n_empty as f64));
        }
        keys.sort_by(|a, b| a.0.cmp(&b.0));
        let index: HashMap<&[u32], usize> = keys
            .iter()
            .enumerate()
            .map(|(k, (p, _))| (p.as_slice(), k))
            .collect();
        let mut touched: Vec<(u32, usize)> = per_user
            .iter()
            .map(|(&u, ones)| (u, index[ones.as_slice()]))
            .collect();
        touched.sort_unstable();
        let empty = index.get(&[][..]).copied();
        (
            Patterns {
                rows: keys,
                n_users: data.n_users(),
            },
            UserPatterns { touched, empty },
        )
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Sum-product on a binary forest with per-node rescaling.
pub(crate) struct Engine<'m> {
    m: &'m LatentTreeModel,
    values: Vec<u8>,
    lam: Vec<[f64; 2]>,
    msg: Vec<[f64; 2]>,
    /// Normalised message from everything outside `v`'s subtree into its parent.
    outside: Vec<[f64; 2]>,
    pi: Vec<[f64; 2]>,
}

impl<'m> Engine<'m> {
    pub fn new(m: &'m LatentTreeModel) -> Self {
        let n = m.n_vars();
        let values = m
            .variables()
            .iter()
            .map(|v| if v.is_latent() { MISSING } else { 0 })
            .collect();
        Engine {
            m,
            values,
            lam: vec![[1.0; 2]; n],
            msg: vec![[1.0; 2]; n],
            outside: vec![[1.0; 2]; n],
            pi: vec![[1.0; 2]; n],
        }
    }

    /// Observed variables in `ones` are 1, all other observed are 0.
    pub fn set_ones(&mut self, ones: &[u32]) {
        for (v, var) in self.m.variables().iter().enumerate() {
            self.values[v] = if var.is_latent() { MISSING } else { 0 };
        }
        for &v in ones {
            self.values[v as usize] = 1;
        }
    }

    /// Treat the listed variables as unobserved (marginalised).
    pub fn hide(&mut self, vars: &[usize]) {
        for &v in vars {
            self.values[v] = MISSING;
        }
    }

    pub fn hide_all(&mut self) {
        self.values.fill(MISSING);
    }

    /// Returns `ln P(evidence)`.
    pub fn upward(&mut self) -> f64 {
        let m = self.m;
        let mut log_scale = 0.0;
        let mut ll = 0.0;
        for &v in m.topological_order().iter().rev() {
            let mut lam = match self.values[v] {
                0 => [1.0, 0.0],
                1 => [0.0, 1.0],
                _ => [1.0, 1.0],
            };
            for &c in m.children(v) {
                lam[0] *= self.msg[c][0];
                lam[1] *= self.msg[c][1];
            }
            let z = lam[0].max(lam[1]);
            lam[0] /= z;
            lam[1] /= z;
            log_scale += z.ln();
            self.lam[v] = lam;
            let t = m.table(v);
            match t {
                ConditionalTable::Root { .. } => {
                    ll += (t.prob(0, 0) * lam[0] + t.prob(1, 0) * lam[1]).ln();
                }
                ConditionalTable::Edge { .. } => {
                    for s in 0..2 {
                        self.msg[v][s] = t.prob(0, s) * lam[0] + t.prob(1, s) * lam[1];
                    }
                }
            }
        }
        ll + log_scale
    }

    /// Requires a preceding [`Engine::upward`].
    pub fn downward(&mut self) {
        let m = self.m;
        for &v in m.topological_order() {
            if let ConditionalTable::Root { p1 } = *m.table(v) {
                self.pi[v] = [1.0 - p1, p1];
            }
            let base = [
                self.pi[v][0] * self.lam[v][0],
                self.pi[v][1] * self.lam[v][1],
            ];
            for &c in m.children(v) {
                let mut out = [base[0] / self.msg[c][0], base[1] / self.msg[c][1]];
                let z = out[0] + out[1];
                out[0] /= z;
                out[1] /= z;
                self.outside[c] = out;
                let t = m.table(c);
                let mut pi = [0.0; 2];
                for (tc, slot) in pi.iter_mut().enumerate() {
                    *slot = t.prob(tc, 0) * out[0] + t.prob(tc, 1) * out[1];
                }
                let z = pi[0] + pi[1];
                self.pi[c] = [pi[0] / z, pi[1] / z];
            }
        }
    }

    /// `[P(v=0 | e), P(v=1 | e)]` after upward + downward.
    pub fn posterior(&self, v: usize) -> [f64; 2] {
        let a = self.pi[v][0] * self.lam[v][0];
        let b = self.pi[v][1] * self.lam[v][1];
        let z = a + b;
        [a / z, b / z]
    }

    /// `joint[s][t] = P(parent = s, c = t | e)` after upward + downward.
    pub fn edge_joint(&self, c: usize) -> [[f64; 2]; 2] {
        let t = self.m.table(c);
        let out = self.outside[c];
        let mut j = [[0.0; 2]; 2];
        let mut z = 0.0;
        for s in 0..2 {
            for tc in 0..2 {
                j[s][tc] = out[s] * t.prob(tc, s) * self.lam[c][tc];
                z += j[s][tc];
            }
        }
        for row in j.iter_mut() {
            row[0] /= z;
            row[1] /= z;
        }
        j
    }

    /// Prior marginals of every variable.
    pub fn marginals(&mut self) -> Vec<[f64; 2]> {
        self.hide_all();
        self.upward();
        self.downward();
        (0..self.m.n_vars()).map(|v| self.posterior(v)).collect()
    }
}

/// `Σ_users ln P(row)`, one upward pass per distinct configuration.
///
/// Panics if an observed column lies outside `data`.
pub fn log_likelihood(model: &LatentTreeModel, data: &BinaryMatrix) -> f64 {
    patterns_log_likelihood(model, &Patterns::from_matrix(model, data))
}

pub(crate) fn patterns_log_likelihood(model: &LatentTreeModel, patterns: &Patterns) -> f64 {
    let mut engine = Engine::new(model);
    patterns
        .rows
        .iter()
        .map(|(ones, w)| {
            engine.set_ones(ones);
            w * engine.upward()
        })
        .sum()
}

/// Posterior of every latent variable for one user.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorRow {
    /// `(latent variable id, [P(state 0), P(state 1)])`.
    pub latents: Vec<(usize, [f64; 2])>,
}

impl PosteriorRow {
    pub fn get(&self, var: usize) -> Option<[f64; 2]> {
        self.latents
            .iter()
            .find(|(v, _)| *v == var)
            .map(|(_, p)| *p)
    }
}

/// Exact posteriors given the columns a user consumed. Columns the model
/// does not observe are ignored; each latent sees only its own tree.
pub fn posterior_row(model: &LatentTreeModel, consumed_columns: &[usize]) -> PosteriorRow {
    let by_col: HashMap<usize, usize> = model.observed().into_iter().map(|(v, c)| (c, v)).collect();
    let mut ones: Vec<u32> = consumed_columns
        .iter()
        .filter_map(|c| by_col.get(c).map(|&v| v as u32))
        .collect();
    ones.sort_unstable();
    let mut engine = Engine::new(model);
    engine.set_ones(&ones);
    engine.upward();
    engine.downward();
    PosteriorRow {
        latents: model.latents().map(|v| (v, engine.posterior(v))).collect(),
    }
}
