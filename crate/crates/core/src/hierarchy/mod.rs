//! Stacking flat layers into a hierarchy, linking the top level, picking
//! representative items and exporting the category tree.

mod export;

pub use export::{ExportMeta, ExportNode, HierarchyExport, RepEntry, TopEdge};

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use log::info;
use rayon::prelude::*;

use crate::data::BinaryMatrix;
use crate::forest::{learn_flat_forest, FlatForest, LearnerConfig};
use crate::ltm::{
    empirical_mi, mi_with_parent, ConditionalTable, Engine, LatentTreeModel, Patterns, Variable,
};
use crate::similarity::{cosine_item_pairs_with, CosineOptions};
use crate::{Error, Result};

/// An item (`level == 0`) or a latent of layer `level`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId {
    pub level: u32,
    pub index: usize,
}

impl NodeId {
    pub fn item(index: usize) -> Self {
        NodeId { level: 0, index }
    }

    pub fn latent(level: u32, index: usize) -> Self {
        assert!(level >= 1, "latents live on level 1 and above");
        NodeId { level, index }
    }

    pub fn is_item(&self) -> bool {
        self.level == 0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.level == 0 {
            write!(f, "I_{}", self.index)
        } else {
            write!(f, "Z{}_{}", self.level, self.index)
        }
    }
}

impl FromStr for NodeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid(format!("not a node id: {s:?}"));
        if let Some(rest) = s.strip_prefix("I_") {
            return rest.parse().map(NodeId::item).map_err(|_| bad());
        }
        let rest = s.strip_prefix('Z').ok_or_else(bad)?;
        let (level, index) = rest.split_once('_').ok_or_else(bad)?;
        let level: u32 = level.parse().map_err(|_| bad())?;
        if level == 0 {
            return Err(bad());
        }
        Ok(NodeId::latent(level, index.parse().map_err(|_| bad())?))
    }
}

/// Wall-clock seconds per phase, one entry per layer where it applies.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Timings {
    pub similarity: Vec<f64>,
    pub flat: Vec<f64>,
    pub hard_assignment: Vec<f64>,
    pub linking: f64,
    pub total: f64,
}

impl Timings {
    /// Phase/seconds lines headed like the usual runtime table:
    /// `Cosine/MI`, `Flat Layer-1`, `H.A. Layer-1`, ..., `Total Model`.
    pub fn table(&self) -> String {
        let mut out = String::from("phase\tseconds\n");
        out.push_str(&format!(
            "Cosine/MI\t{:.3}\n",
            self.similarity.iter().sum::<f64>()
        ));
        for (k, (f, h)) in self.flat.iter().zip(&self.hard_assignment).enumerate() {
            out.push_str(&format!("Flat Layer-{}\t{f:.3}\n", k + 1));
            out.push_str(&format!("H.A. Layer-{}\t{h:.3}\n", k + 1));
        }
        out.push_str(&format!("Top Linking\t{:.3}\n", self.linking));
        out.push_str(&format!("Total Model\t{:.3}\n", self.total));
        out
    }
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

/// Stacked flat layers over the item matrix plus a tree over the top level.
#[derive(Debug, Clone)]
pub struct Hltm {
    layers: Vec<FlatForest>,
    /// `assignments[k]` is users × categories of `layers[k]`.
    assignments: Vec<BinaryMatrix>,
    items: BinaryMatrix,
    item_labels: Vec<String>,
    /// Tree over the top-level latents; variable `j` is top category `j`.
    top: Option<LatentTreeModel>,
    pub timings: Timings,
}

/// Users × categories, 1 where the category's latent is more likely in
/// state 1 given that user's own children only (ties go to state 1).
pub fn hard_assignment(flat: &FlatForest, data: &BinaryMatrix) -> BinaryMatrix {
    assert_eq!(
        flat.n_items(),
        data.n_items(),
        "layer and data disagree on columns"
    );
    let n_users = data.n_users();
    let cols: Vec<Vec<u32>> = flat
        .categories
        .par_iter()
        .map(|cat| {
            let model = cat.model();
            let (patterns, users) = Patterns::with_users(model, data);
            let mut engine = Engine::new(model);
            let on: Vec<bool> = patterns
                .rows
                .iter()
                .map(|(ones, _)| {
                    engine.set_ones(ones);
                    engine.upward();
                    engine.downward();
                    let p = engine.posterior(0);
                    p[1] >= p[0]
                })
                .collect();
            let empty_on = users.empty.is_some_and(|k| on[k]);
            if empty_on {
                // everyone except touched users in state 0
                let mut off = users
                    .touched
                    .iter()
                    .filter(|&&(_, k)| !on[k])
                    .map(|&(u, _)| u)
                    .peekable();
                let mut col = Vec::with_capacity(n_users);
                for u in 0..n_users as u32 {
                    if off.peek() == Some(&u) {
                        off.next();
                    } else {
                        col.push(u);
                    }
                }
                col
            } else {
                users
                    .touched
                    .iter()
                    .filter(|&&(_, k)| on[k])
                    .map(|&(u, _)| u)
                    .collect()
            }
        })
        .collect();
    BinaryMatrix::from_columns(n_users, cols)
}

/// Kruskal on `(weight desc, i, j)`; returns undirected edges `(i, j)`, `i < j`.
pub(crate) fn max_spanning_tree(weights: &[Vec<f64>]) -> Vec<(usize, usize)> {
    let n = weights.len();
    let mut edges: Vec<(f64, usize, usize)> = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            edges.push((weights[i][j], i, j));
        }
    }
    edges.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut comp: Vec<usize> = (0..n).collect();
    fn find(comp: &mut [usize], mut x: usize) -> usize {
        while comp[x] != x {
            comp[x] = comp[comp[x]];
            x = comp[x];
        }
        x
    }
    let mut out = Vec::with_capacity(n.saturating_sub(1));
    for (_, i, j) in edges {
        let (a, b) = (find(&mut comp, i), find(&mut comp, j));
        if a != b {
            comp[a.max(b)] = a.min(b);
            out.push((i, j));
            if out.len() + 1 == n {
                break;
            }
        }
    }
    out
}

fn laplace(num: usize, den: usize) -> f64 {
    (num as f64 + 1.0) / (den as f64 + 2.0)
}

fn overlap(a: &[u32], b: &[u32]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// Sorts `(item, mi)` by MI descending, ties to the lower item.
fn rank_by_mi(scored: &mut [(usize, f64)]) {
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
}

/// Learns layers until at most `tau` categories remain on top, then links
/// the top level.
pub fn hlta_forest(data: &BinaryMatrix, tau: usize, cfg: &LearnerConfig) -> Result<Hltm> {
    cfg.validate()?;
    if tau == 0 {
        return Err(Error::invalid("the top-level bound must be at least 1"));
    }
    if data.n_users() == 0 || data.n_items() == 0 {
        return Err(Error::Empty(
            "cannot learn a hierarchy from an empty matrix".into(),
        ));
    }
    let start = Instant::now();
    let mut m = Hltm::empty(data.clone());
    let mut level = 1u32;
    let opts = CosineOptions {
        allow_empty_columns: true,
        ..CosineOptions::default()
    };
    loop {
        let input = if level == 1 {
            data
        } else {
            &m.assignments[m.assignments.len() - 1]
        };
        let t = Instant::now();
        let sim = cosine_item_pairs_with(input, &opts)?;
        let t_sim = secs(t.elapsed());
        let t = Instant::now();
        let flat = learn_flat_forest(input, cfg, &sim, level)?;
        let t_flat = secs(t.elapsed());
        if level > 1 && flat.len() >= input.n_items() {
            info!(
                "level {level} did not merge any categories; stopping at {} levels",
                level - 1
            );
            break;
        }
        let t = Instant::now();
        let ha = hard_assignment(&flat, input);
        let t_ha = secs(t.elapsed());
        info!(
            "level {level}: {} categories (similarity {t_sim:.3}s, flat {t_flat:.3}s, assignment {t_ha:.3}s)",
            flat.len()
        );
        m.timings.similarity.push(t_sim);
        m.timings.flat.push(t_flat);
        m.timings.hard_assignment.push(t_ha);
        let done = flat.len() <= tau;
        m.stack(flat, ha)?;
        if done {
            break;
        }
        level += 1;
    }
    let t = Instant::now();
    m.link_top_level();
    m.timings.linking = secs(t.elapsed());
    m.timings.total = secs(start.elapsed());
    Ok(m)
}

impl Hltm {
    fn empty(items: BinaryMatrix) -> Self {
        let item_labels = (0..items.n_items()).map(|i| format!("i{i}")).collect();
        Hltm {
            layers: Vec::new(),
            assignments: Vec::new(),
            items,
            item_labels,
            top: None,
            timings: Timings::default(),
        }
    }

    /// Builds a hierarchy from already learned layers; hard assignments are
    /// recomputed and the top level is linked.
    pub fn from_layers(items: BinaryMatrix, layers: Vec<FlatForest>) -> Result<Self> {
        let mut m = Hltm::empty(items);
        for flat in layers {
            let input = m.assignments.last().unwrap_or(&m.items);
            if flat.n_items() != input.n_items() {
                return Err(Error::invalid(format!(
                    "layer {} covers {} variables but the level below has {}",
                    flat.level,
                    flat.n_items(),
                    input.n_items()
                )));
            }
            let ha = hard_assignment(&flat, input);
            m.stack(flat, ha)?;
        }
        if m.layers.is_empty() {
            return Err(Error::invalid("a hierarchy needs at least one layer"));
        }
        m.link_top_level();
        Ok(m)
    }

    /// Appends a layer whose observed variables are the current top latents.
    /// Tables are taken as they are.
    fn stack(&mut self, flat: FlatForest, assignment: BinaryMatrix) -> Result<()> {
        let below = self
            .layers
            .last()
            .map_or(self.items.n_items(), FlatForest::len);
        if flat.n_items() != below {
            return Err(Error::invalid(format!(
                "new layer observes {} variables but the current top has {below}",
                flat.n_items()
            )));
        }
        if flat.level as usize != self.layers.len() + 1 {
            return Err(Error::invalid(format!(
                "new layer has level {} but {} is next",
                flat.level,
                self.layers.len() + 1
            )));
        }
        self.layers.push(flat);
        self.assignments.push(assignment);
        self.top = None;
        Ok(())
    }

    /// Chow–Liu tree over the top latents' hard assignments. The root is the
    /// node with the most items below it (lowest index on ties); tables use
    /// add-one counts.
    pub fn link_top_level(&mut self) {
        let a = self.assignments.last().expect("at least one layer");
        let k = a.n_items();
        let n = a.n_users();
        let level = self.depth();
        let weights: Vec<Vec<f64>> = (0..k)
            .into_par_iter()
            .map(|i| {
                (0..k)
                    .map(|j| {
                        if i == j {
                            0.0
                        } else {
                            empirical_mi(a.col(i), a.col(j), n)
                        }
                    })
                    .collect()
            })
            .collect();
        let edges = max_spanning_tree(&weights);
        let sizes: Vec<usize> = (0..k)
            .map(|j| self.items_under(NodeId::latent(level, j)).len())
            .collect();
        let root = (0..k)
            .max_by(|&x, &y| sizes[x].cmp(&sizes[y]).then(y.cmp(&x)))
            .unwrap();
        let mut adj = vec![Vec::new(); k];
        for &(i, j) in &edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        for l in adj.iter_mut() {
            l.sort_unstable();
        }
        let mut parent = vec![None; k];
        let mut seen = vec![false; k];
        seen[root] = true;
        let mut queue = std::collections::VecDeque::from([root]);
        while let Some(v) = queue.pop_front() {
            for &c in &adj[v] {
                if !seen[c] {
                    seen[c] = true;
                    parent[c] = Some(v);
                    queue.push_back(c);
                }
            }
        }
        let tables = (0..k)
            .map(|j| match parent[j] {
                None => ConditionalTable::Root {
                    p1: laplace(a.col(j).len(), n),
                },
                Some(p) => {
                    let n1 = a.col(p).len();
                    let both = overlap(a.col(p), a.col(j));
                    let child = a.col(j).len();
                    ConditionalTable::Edge {
                        p1: [laplace(child - both, n - n1), laplace(both, n1)],
                    }
                }
            })
            .collect();
        let vars = (0..k)
            .map(|j| Variable {
                label: Some(NodeId::latent(level, j).to_string()),
                ..Variable::latent(level)
            })
            .collect();
        self.top = Some(
            LatentTreeModel::new(vars, parent, tables).expect("spanning tree over top latents"),
        );
    }

    pub fn set_item_labels(&mut self, labels: Vec<String>) -> Result<()> {
        if labels.len() != self.items.n_items() {
            return Err(Error::invalid(format!(
                "{} labels for {} items",
                labels.len(),
                self.items.n_items()
            )));
        }
        self.item_labels = labels;
        Ok(())
    }

    pub fn item_labels(&self) -> &[String] {
        &self.item_labels
    }

    /// Number of latent layers.
    pub fn depth(&self) -> u32 {
        self.layers.len() as u32
    }

    pub fn layer(&self, level: u32) -> &FlatForest {
        &self.layers[level as usize - 1]
    }

    pub fn layers(&self) -> &[FlatForest] {
        &self.layers
    }

    /// Users × latents of `level`.
    pub fn assignment(&self, level: u32) -> &BinaryMatrix {
        &self.assignments[level as usize - 1]
    }

    pub fn items(&self) -> &BinaryMatrix {
        &self.items
    }

    pub fn n_items(&self) -> usize {
        self.items.n_items()
    }

    pub fn top_model(&self) -> Option<&LatentTreeModel> {
        self.top.as_ref()
    }

    /// Number of nodes on a level (items for 0).
    pub fn level_len(&self, level: u32) -> usize {
        if level == 0 {
            self.n_items()
        } else {
            self.layer(level).len()
        }
    }

    fn check(&self, node: NodeId) -> Result<()> {
        if node.level > self.depth() || node.index >= self.level_len(node.level) {
            return Err(Error::NotFound(format!("no node {node}")));
        }
        Ok(())
    }

    /// `partition(l)[item]` is the index of the item's ancestor on level `l`.
    pub fn partition(&self, level: u32) -> Vec<usize> {
        assert!(level <= self.depth(), "level {level} above the top");
        let mut p: Vec<usize> = (0..self.n_items()).collect();
        for l in 1..=level {
            let own = &self.layer(l).ownership;
            for x in p.iter_mut() {
                *x = own[*x];
            }
        }
        p
    }

    /// The latent one level up, if any (top-level links are not parents).
    pub fn parent(&self, node: NodeId) -> Option<NodeId> {
        if node.level >= self.depth() {
            return None;
        }
        let own = &self.layer(node.level + 1).ownership;
        Some(NodeId::latent(node.level + 1, own[node.index]))
    }

    pub fn children(&self, node: NodeId) -> Vec<NodeId> {
        if node.is_item() {
            return Vec::new();
        }
        self.layer(node.level).categories[node.index]
            .columns()
            .into_iter()
            .map(|c| NodeId {
                level: node.level - 1,
                index: c,
            })
            .collect()
    }

    /// Items below `node`, ascending.
    pub fn items_under(&self, node: NodeId) -> Vec<usize> {
        if node.is_item() {
            return vec![node.index];
        }
        let mut out = Vec::new();
        let mut stack = vec![node];
        while let Some(n) = stack.pop() {
            if n.level == 1 {
                out.extend(self.layer(1).categories[n.index].columns());
            } else {
                stack.extend(self.children(n));
            }
        }
        out.sort_unstable();
        out
    }

    /// Top `k` items by mutual information with the node. Level-1 nodes use
    /// the model's own tables; higher nodes score the union of their level-1
    /// descendants' representatives against the node's hard assignment.
    pub fn representatives(&self, node: NodeId, k: usize) -> Result<Vec<(usize, f64)>> {
        self.check(node)?;
        if node.is_item() {
            return Err(Error::invalid(format!("{node} is an item")));
        }
        if k == 0 {
            return Ok(Vec::new());
        }
        if node.level == 1 {
            let cat = &self.layer(1).categories[node.index];
            let mut scored: Vec<(usize, f64)> = (1..cat.model().n_vars())
                .map(|v| {
                    let col = cat.model().variable(v).column().unwrap();
                    (
                        col,
                        mi_with_parent(cat.model(), v).expect("child has a parent"),
                    )
                })
                .collect();
            rank_by_mi(&mut scored);
            scored.truncate(k);
            return Ok(scored);
        }
        let mut pool = Vec::new();
        let mut stack = vec![node];
        while let Some(n) = stack.pop() {
            if n.level == 1 {
                pool.extend(self.representatives(n, k)?.into_iter().map(|(i, _)| i));
            } else {
                stack.extend(self.children(n));
            }
        }
        pool.sort_unstable();
        pool.dedup();
        let col = self.assignment(node.level).col(node.index);
        let n = self.items.n_users();
        let mut scored: Vec<(usize, f64)> = pool
            .into_iter()
            .map(|i| (i, empirical_mi(self.items.col(i), col, n)))
            .collect();
        rank_by_mi(&mut scored);
        scored.truncate(k);
        Ok(scored)
    }

    /// The flat model of one layer with latents labelled by node id.
    pub fn layer_model(&self, level: u32) -> LatentTreeModel {
        let mut m = self.layer(level).to_model();
        let mut j = 0;
        for v in 0..m.n_vars() {
            if m.variable(v).is_latent() {
                m.set_label(v, Some(NodeId::latent(level, j).to_string()));
                j += 1;
            } else if level == 1 {
                let c = m.variable(v).column().unwrap();
                m.set_label(v, Some(self.item_labels[c].clone()));
            }
        }
        m
    }

    /// The whole hierarchy as one model: items first, then each layer's
    /// latents; top latents are connected by the linking tree.
    pub fn stacked_model(&self) -> LatentTreeModel {
        let n_items = self.n_items();
        let mut offsets = vec![0usize, n_items];
        for f in &self.layers {
            offsets.push(offsets.last().unwrap() + f.len());
        }
        let total = *offsets.last().unwrap();
        let mut vars = Vec::with_capacity(total);
        let mut parent = vec![None; total];
        let mut tables = vec![ConditionalTable::Root { p1: 0.5 }; total];
        for i in 0..n_items {
            vars.push(Variable {
                label: Some(self.item_labels[i].clone()),
                ..Variable::observed(i, 0)
            });
        }
        for (k, f) in self.layers.iter().enumerate() {
            let level = k as u32 + 1;
            for j in 0..f.len() {
                vars.push(Variable {
                    label: Some(NodeId::latent(level, j).to_string()),
                    ..Variable::latent(level)
                });
            }
            for (j, cat) in f.categories.iter().enumerate() {
                for c in cat.columns() {
                    let v = offsets[k] + c;
                    parent[v] = Some(offsets[k + 1] + j);
                    tables[v] = ConditionalTable::Edge {
                        p1: cat.child_table(c).unwrap(),
                    };
                }
            }
        }
        let top_base = offsets[self.layers.len()];
        match &self.top {
            Some(t) => {
                for j in 0..t.n_vars() {
                    parent[top_base + j] = t.parent(j).map(|p| top_base + p);
                    tables[top_base + j] = *t.table(j);
                }
            }
            None => {
                let last = self.layers.last().unwrap();
                for (j, cat) in last.categories.iter().enumerate() {
                    tables[top_base + j] = ConditionalTable::Root { p1: cat.prior() };
                }
            }
        }
        LatentTreeModel::new(vars, parent, tables).expect("stacked layers form a forest")
    }

    /// Export with `reps` representatives per latent. Children are ordered
    /// by descending membership size, then id.
    pub fn export(&self, reps: usize, meta: ExportMeta) -> HierarchyExport {
        export::build(self, reps, meta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{adjusted_rand_index, PlantedConfig, PlantedHierarchy};

    fn planted(seed: u64) -> (PlantedHierarchy, Hltm) {
        let h = PlantedHierarchy::new(&PlantedConfig::two_level());
        let data = h.sample(2000, seed);
        let cfg = LearnerConfig {
            seed,
            ..Default::default()
        };
        let m = hlta_forest(&data, 2, &cfg).unwrap();
        (h, m)
    }

    #[test]
    fn node_ids_round_trip() {
        for id in [
            NodeId::item(0),
            NodeId::item(17),
            NodeId::latent(1, 0),
            NodeId::latent(12, 345),
        ] {
            assert_eq!(id.to_string().parse::<NodeId>().unwrap(), id);
        }
        assert_eq!(NodeId::latent(3, 13).to_string(), "Z3_13");
        for bad in ["Z0_1", "X1_2", "Z1", "I_", "Z1_a", ""] {
            assert!(bad.parse::<NodeId>().is_err(), "{bad}");
        }
    }

    #[test]
    fn hard_assignment_follows_posteriors() {
        let cat = crate::Category::from_parts(
            1,
            0.3,
            &[(0, [0.1, 0.8]), (1, [0.1, 0.8]), (2, [0.1, 0.8])],
        )
        .unwrap();
        let flat = FlatForest::new(1, vec![cat], 3).unwrap();
        let data =
            BinaryMatrix::from_dense(&[vec![1, 1, 1], vec![0, 0, 0], vec![1, 0, 0], vec![1, 1, 0]]);
        let a = hard_assignment(&flat, &data);
        assert_eq!(a.col(0), &[0, 3]);
    }

    #[test]
    fn ties_go_to_state_one() {
        // a single uninformative child leaves the posterior at the prior 0.5
        let cat = crate::Category::from_parts(1, 0.5, &[(0, [0.4, 0.4])]).unwrap();
        let flat = FlatForest::new(1, vec![cat], 1).unwrap();
        let data = BinaryMatrix::from_dense(&[vec![1], vec![0]]);
        assert_eq!(hard_assignment(&flat, &data).col(0), &[0, 1]);
    }

    #[test]
    fn assignment_only_reads_own_children() {
        let (_, m) = planted(1);
        let flat = m.layer(1);
        let data = m.items().clone();
        let base = hard_assignment(flat, &data);
        // wipe every column outside category 0
        let own = flat.categories[0].columns();
        let cols: Vec<Vec<u32>> = (0..data.n_items())
            .map(|i| {
                if own.contains(&i) {
                    data.col(i).to_vec()
                } else {
                    Vec::new()
                }
            })
            .collect();
        let wiped = BinaryMatrix::from_columns(data.n_users(), cols);
        assert_eq!(hard_assignment(flat, &wiped).col(0), base.col(0));
    }

    #[test]
    fn mst_on_a_triangle() {
        // MI(a,b)=0.5 > MI(b,c)=0.3 > MI(a,c)=0.1
        let w = vec![
            vec![0.0, 0.5, 0.1],
            vec![0.5, 0.0, 0.3],
            vec![0.1, 0.3, 0.0],
        ];
        assert_eq!(max_spanning_tree(&w), vec![(0, 1), (1, 2)]);
        assert!(max_spanning_tree(&[vec![0.0]]).is_empty());
    }

    #[test]
    fn planted_two_level_structure() {
        let mut level1 = 0;
        for seed in 0..5 {
            let (h, m) = planted(seed);
            level1 += usize::from(adjusted_rand_index(&m.partition(1), &h.truth[0]) >= 0.9);
            // every level partitions the items
            for l in 1..=m.depth() {
                let mut all: Vec<usize> = (0..m.level_len(l))
                    .flat_map(|j| m.items_under(NodeId::latent(l, j)))
                    .collect();
                all.sort_unstable();
                assert_eq!(all, (0..12).collect::<Vec<_>>());
            }
            let top = m.top_model().unwrap();
            assert_eq!(top.n_vars(), m.level_len(m.depth()));
            assert_eq!(top.roots().count(), 1);
        }
        assert!(level1 >= 4, "{level1} of 5");
    }

    #[test]
    fn top_node_holds_its_childrens_items() {
        let (_, m) = planted(3);
        let d = m.depth();
        for j in 0..m.level_len(d) {
            let node = NodeId::latent(d, j);
            let mut union: Vec<usize> = m
                .children(node)
                .into_iter()
                .flat_map(|c| m.items_under(c))
                .collect();
            union.sort_unstable();
            assert_eq!(union, m.items_under(node));
        }
    }

    #[test]
    fn item_paths_have_one_step_per_layer() {
        let (_, m) = planted(2);
        for i in 0..m.n_items() {
            let mut node = NodeId::item(i);
            let mut steps = 0;
            while let Some(p) = m.parent(node) {
                node = p;
                steps += 1;
            }
            assert_eq!(steps, m.depth());
        }
    }

    #[test]
    fn representatives_match_brute_force() {
        let (_, m) = planted(4);
        for l in 1..=m.depth() {
            for j in 0..m.level_len(l) {
                let node = NodeId::latent(l, j);
                let reps = m.representatives(node, 3).unwrap();
                let under = m.items_under(node);
                assert!(reps.iter().all(|(i, _)| under.contains(i)));
                assert!(reps.windows(2).all(|w| w[0].1 >= w[1].1));
                if l == 1 {
                    // brute force over every child with an explicit joint
                    let cat = &m.layer(1).categories[j];
                    let mut all: Vec<(usize, f64)> = cat
                        .columns()
                        .into_iter()
                        .map(|c| {
                            let t = cat.child_table(c).unwrap();
                            let pz = cat.prior();
                            let joint = [
                                [(1.0 - pz) * (1.0 - t[0]), (1.0 - pz) * t[0]],
                                [pz * (1.0 - t[1]), pz * t[1]],
                            ];
                            (c, crate::ltm::mutual_information(joint).unwrap())
                        })
                        .collect();
                    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
                    let expect: Vec<usize> = all.iter().take(3).map(|x| x.0).collect();
                    assert_eq!(reps.iter().map(|x| x.0).collect::<Vec<_>>(), expect);
                }
            }
        }
        assert!(m.representatives(NodeId::latent(9, 0), 1).is_err());
    }

    #[test]
    fn single_layer_when_tau_is_large() {
        let h = PlantedHierarchy::new(&PlantedConfig::two_level());
        let data = h.sample(1000, 1);
        let m = hlta_forest(&data, 100, &LearnerConfig::default()).unwrap();
        assert_eq!(m.depth(), 1);
        let top = m.top_model().unwrap();
        assert_eq!(
            top.n_vars() - 1,
            top.tables()
                .iter()
                .filter(|t| matches!(t, ConditionalTable::Edge { .. }))
                .count()
        );
    }

    #[test]
    fn stacked_model_copies_tables() {
        let (_, m) = planted(5);
        let s = m.stacked_model();
        assert_eq!(
            s.n_vars(),
            12 + (1..=m.depth()).map(|l| m.level_len(l)).sum::<usize>()
        );
        for (j, cat) in m.layer(1).categories.iter().enumerate() {
            for c in cat.columns() {
                assert_eq!(s.parent(c), Some(12 + j));
                let t = s.table(c);
                assert_eq!([t.prob(1, 0), t.prob(1, 1)], cat.child_table(c).unwrap());
            }
        }
        let mut buf = Vec::new();
        crate::ltm::write_model(&s, &mut buf).unwrap();
        assert_eq!(crate::ltm::read_model(buf.as_slice()).unwrap(), s);
    }

    #[test]
    fn learning_is_deterministic() {
        let (_, a) = planted(6);
        let (_, b) = planted(6);
        assert_eq!(a.stacked_model(), b.stacked_model());
    }

    #[test]
    fn timing_table_has_the_usual_phases() {
        let (_, m) = planted(0);
        let t = m.timings.table();
        for phase in ["Cosine/MI", "Flat Layer-1", "H.A. Layer-1", "Total Model"] {
            assert!(t.contains(phase), "{t}");
        }
    }
}
