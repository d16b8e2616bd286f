//! Binary latent tree models.
//!
//! A [`LatentTreeModel`] is a forest of rooted trees over binary variables.
//! Observed variables are bound to a column of the data matrix they are
//! evaluated against; latent variables are summed out. Every variable owns
//! one [`ConditionalTable`]: a marginal for roots, `P(child = 1 | parent)`
//! otherwise.

mod category;
mod em;
mod infer;
mod info;
mod persist;

pub use category::Category;
pub use em::{em_steps, em_trace, learn_lcm, learn_lcm_restarts};
pub use infer::{log_likelihood, posterior_row, Patterns, PosteriorRow};
pub use info::{bic, empirical_mi, model_mi_item_latent, mutual_information};
pub use persist::{read_model, write_model};

pub(crate) use em::{run_em, squash};
pub(crate) use infer::{patterns_log_likelihood, Engine};
pub(crate) use info::{bic_from_ll, mi_with_parent};

use crate::{Error, Result};

/// Probabilities are kept inside `[PROB_FLOOR, 1 - PROB_FLOOR]`.
pub const PROB_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    /// Bound to a data column.
    Observed {
        column: usize,
    },
    Latent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub kind: VarKind,
    /// 0 for items, `l` for latents of layer `l`.
    pub level: u32,
    pub label: Option<String>,
}

impl Variable {
    pub fn observed(column: usize, level: u32) -> Self {
        Variable {
            kind: VarKind::Observed { column },
            level,
            label: None,
        }
    }

    pub fn latent(level: u32) -> Self {
        Variable {
            kind: VarKind::Latent,
            level,
            label: None,
        }
    }

    pub fn is_latent(&self) -> bool {
        self.kind == VarKind::Latent
    }

    pub fn column(&self) -> Option<usize> {
        match self.kind {
            VarKind::Observed { column } => Some(column),
            VarKind::Latent => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConditionalTable {
    /// `P(var = 1)`.
    Root { p1: f64 },
    /// `p1[s] = P(var = 1 | parent = s)`.
    Edge { p1: [f64; 2] },
}

impl ConditionalTable {
    /// `P(var = child | parent = parent)`; the parent state is ignored for roots.
    #[inline]
    pub fn prob(&self, child: usize, parent: usize) -> f64 {
        let p1 = match self {
            ConditionalTable::Root { p1 } => *p1,
            ConditionalTable::Edge { p1 } => p1[parent],
        };
        if child == 1 {
            p1
        } else {
            1.0 - p1
        }
    }

    fn entries(&self) -> &[f64] {
        match self {
            ConditionalTable::Root { p1 } => std::slice::from_ref(p1),
            ConditionalTable::Edge { p1 } => p1,
        }
    }

    pub fn free_parameters(&self) -> usize {
        self.entries().len()
    }
}

/// A forest of rooted binary trees with one table per variable.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentTreeModel {
    vars: Vec<Variable>,
    parent: Vec<Option<usize>>,
    tables: Vec<ConditionalTable>,
    children: Vec<Vec<usize>>,
    /// Parents before children; roots in id order.
    order: Vec<usize>,
}

impl LatentTreeModel {
    pub fn new(
        vars: Vec<Variable>,
        parent: Vec<Option<usize>>,
        tables: Vec<ConditionalTable>,
    ) -> Result<Self> {
        let n = vars.len();
        if parent.len() != n || tables.len() != n {
            return Err(Error::invalid(
                "variables, parents and tables differ in length",
            ));
        }
        let mut children = vec![Vec::new(); n];
        for (v, p) in parent.iter().enumerate() {
            match (p, &tables[v]) {
                (None, ConditionalTable::Root { .. }) => {}
                (Some(p), ConditionalTable::Edge { .. }) if *p < n && *p != v => {
                    children[*p].push(v)
                }
                (Some(p), ConditionalTable::Edge { .. }) => {
                    return Err(Error::invalid(format!(
                        "variable {v} has invalid parent {p}"
                    )))
                }
                _ => {
                    return Err(Error::invalid(format!(
                        "variable {v}: table kind does not match parent"
                    )))
                }
            }
            for &x in tables[v].entries() {
                if !(x > 0.0 && x < 1.0) {
                    return Err(Error::invalid(format!(
                        "variable {v}: probability {x} outside (0,1)"
                    )));
                }
            }
        }
        let mut seen_cols = std::collections::HashSet::new();
        for (v, var) in vars.iter().enumerate() {
            if let Some(c) = var.column() {
                if !seen_cols.insert(c) {
                    return Err(Error::invalid(format!(
                        "variable {v}: column {c} bound twice"
                    )));
                }
            }
        }
        let mut order = Vec::with_capacity(n);
        for r in (0..n).filter(|&v| parent[v].is_none()) {
            let start = order.len();
            order.push(r);
            let mut k = start;
            while k < order.len() {
                let v = order[k];
                order.extend_from_slice(&children[v]);
                k += 1;
            }
        }
        if order.len() != n {
            return Err(Error::invalid("parent map contains a cycle"));
        }
        Ok(LatentTreeModel {
            vars,
            parent,
            tables,
            children,
            order,
        })
    }

    pub fn n_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn variable(&self, v: usize) -> &Variable {
        &self.vars[v]
    }

    pub fn variables(&self) -> &[Variable] {
        &self.vars
    }

    pub fn parent(&self, v: usize) -> Option<usize> {
        self.parent[v]
    }

    pub fn children(&self, v: usize) -> &[usize] {
        &self.children[v]
    }

    pub fn table(&self, v: usize) -> &ConditionalTable {
        &self.tables[v]
    }

    pub fn tables(&self) -> &[ConditionalTable] {
        &self.tables
    }

    /// Variables with parents listed before their children.
    pub fn topological_order(&self) -> &[usize] {
        &self.order
    }

    pub fn roots(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_vars()).filter(|&v| self.parent[v].is_none())
    }

    pub fn latents(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_vars()).filter(|&v| self.vars[v].is_latent())
    }

    /// `(variable, column)` for every observed variable, in variable order.
    pub fn observed(&self) -> Vec<(usize, usize)> {
        self.vars
            .iter()
            .enumerate()
            .filter_map(|(v, var)| var.column().map(|c| (v, c)))
            .collect()
    }

    /// One per root marginal plus two per conditional table.
    pub fn free_parameters(&self) -> usize {
        self.tables
            .iter()
            .map(ConditionalTable::free_parameters)
            .sum()
    }

    pub(crate) fn set_table(&mut self, v: usize, table: ConditionalTable) {
        debug_assert_eq!(
            matches!(table, ConditionalTable::Root { .. }),
            self.parent[v].is_none()
        );
        self.tables[v] = table;
    }

    pub fn set_label(&mut self, v: usize, label: Option<String>) {
        self.vars[v].label = label;
    }

    /// Swaps the meaning of the two states of latent `v`.
    pub fn flip_latent(&mut self, v: usize) {
        assert!(
            self.vars[v].is_latent(),
            "only latent states can be relabelled"
        );
        self.tables[v] = match self.tables[v] {
            ConditionalTable::Root { p1 } => ConditionalTable::Root { p1: 1.0 - p1 },
            ConditionalTable::Edge { p1: [a, b] } => ConditionalTable::Edge {
                p1: [1.0 - a, 1.0 - b],
            },
        };
        for &c in &self.children[v] {
            if let ConditionalTable::Edge { p1: [a, b] } = self.tables[c] {
                self.tables[c] = ConditionalTable::Edge { p1: [b, a] };
            }
        }
    }

    /// Orients every latent so state 1 is the one under which its children
    /// are on average more likely to be 1. Children are settled first.
    pub fn canonicalize(&mut self) {
        for k in (0..self.order.len()).rev() {
            let v = self.order[k];
            if !self.vars[v].is_latent() || self.children[v].is_empty() {
                continue;
            }
            let (mut m0, mut m1) = (0.0, 0.0);
            for &c in &self.children[v] {
                m0 += self.tables[c].prob(1, 0);
                m1 += self.tables[c].prob(1, 1);
            }
            if m0 > m1 {
                self.flip_latent(v);
            }
        }
    }

    /// Keeps the listed variables (closed under parent) and renumbers them in
    /// the given order.
    pub fn subset(&self, keep: &[usize]) -> Result<LatentTreeModel> {
        let mut new_id = vec![None; self.n_vars()];
        for (k, &v) in keep.iter().enumerate() {
            new_id[v] = Some(k);
        }
        let mut vars = Vec::with_capacity(keep.len());
        let mut parent = Vec::with_capacity(keep.len());
        let mut tables = Vec::with_capacity(keep.len());
        for &v in keep {
            vars.push(self.vars[v].clone());
            tables.push(self.tables[v]);
            parent.push(match self.parent[v] {
                None => None,
                Some(p) => Some(new_id[p].ok_or_else(|| {
                    Error::invalid(format!("variable {v} kept without its parent {p}"))
                })?),
            });
        }
        LatentTreeModel::new(vars, parent, tables)
    }
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;
    use rand::Rng;

    /// Random forest over `n` variables: each non-first variable either
    /// starts a new tree or hangs under an earlier one. Observed variables
    /// get consecutive columns.
    pub fn random_model<R: Rng>(rng: &mut R, n: usize, latent_share: f64) -> LatentTreeModel {
        let mut vars = Vec::new();
        let mut parent = Vec::new();
        let mut tables = Vec::new();
        let mut col = 0;
        for v in 0..n {
            let p = if v == 0 || rng.random::<f64>() < 0.15 {
                None
            } else {
                Some(rng.random_range(0..v))
            };
            let latent = rng.random::<f64>() < latent_share;
            vars.push(if latent {
                Variable::latent(1)
            } else {
                col += 1;
                Variable::observed(col - 1, 0)
            });
            parent.push(p);
            tables.push(match p {
                None => ConditionalTable::Root {
                    p1: rng.random_range(0.05..0.95),
                },
                Some(_) => ConditionalTable::Edge {
                    p1: [rng.random_range(0.05..0.95), rng.random_range(0.05..0.95)],
                },
            });
        }
        LatentTreeModel::new(vars, parent, tables).unwrap()
    }
}
