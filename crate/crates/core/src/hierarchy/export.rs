use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Hltm, NodeId};
use crate::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExportMeta {
    #[serde(default)]
    pub dataset: String,
    #[serde(default)]
    pub n_users: usize,
    #[serde(default)]
    pub n_items: usize,
    /// Number of latent levels; items are level 0.
    #[serde(default)]
    pub levels: u32,
    #[serde(default)]
    pub reps_per_node: usize,
    /// Ids of the top-level nodes, in index order.
    #[serde(default)]
    pub top_nodes: Vec<String>,
    /// Learner settings, echoed as strings.
    #[serde(default)]
    pub config: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepEntry {
    pub item: String,
    pub mi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportNode {
    pub id: String,
    pub level: u32,
    pub parent: Option<String>,
    pub label: String,
    pub reps: Vec<RepEntry>,
    pub children: Vec<String>,
    /// Item tokens under this node, in item index order.
    pub items: Vec<String>,
}

/// An edge of the tree linking the top-level nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopEdge {
    pub parent: String,
    pub child: String,
}

/// Serialisable category tree: latents top-down, then item leaves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchyExport {
    pub meta: ExportMeta,
    pub nodes: Vec<ExportNode>,
    #[serde(default)]
    pub top_edges: Vec<TopEdge>,
}

pub(super) fn build(m: &Hltm, reps: usize, mut meta: ExportMeta) -> HierarchyExport {
    let depth = m.depth();
    let labels = m.item_labels();
    meta.n_users = m.items().n_users();
    meta.n_items = m.n_items();
    meta.levels = depth;
    meta.reps_per_node = reps;
    meta.top_nodes = (0..m.level_len(depth))
        .map(|j| NodeId::latent(depth, j).to_string())
        .collect();

    let mut nodes = Vec::new();
    for level in (1..=depth).rev() {
        let built: Vec<ExportNode> = (0..m.level_len(level))
            .into_par_iter()
            .map(|j| {
                let id = NodeId::latent(level, j);
                let reps: Vec<RepEntry> = m
                    .representatives(id, reps)
                    .expect("node exists")
                    .into_iter()
                    .map(|(i, mi)| RepEntry {
                        item: labels[i].clone(),
                        mi,
                    })
                    .collect();
                let label = reps
                    .iter()
                    .take(3)
                    .map(|r| r.item.as_str())
                    .collect::<Vec<_>>()
                    .join(", ");
                let mut children: Vec<(usize, NodeId)> = m
                    .children(id)
                    .into_iter()
                    .map(|c| (m.items_under(c).len(), c))
                    .collect();
                children.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
                ExportNode {
                    id: id.to_string(),
                    level,
                    parent: m.parent(id).map(|p| p.to_string()),
                    label,
                    reps,
                    children: children.into_iter().map(|(_, c)| c.to_string()).collect(),
                    items: m
                        .items_under(id)
                        .into_iter()
                        .map(|i| labels[i].clone())
                        .collect(),
                }
            })
            .collect();
        nodes.extend(built);
    }
    for (i, token) in labels.iter().enumerate() {
        let id = NodeId::item(i);
        nodes.push(ExportNode {
            id: id.to_string(),
            level: 0,
            parent: m.parent(id).map(|p| p.to_string()),
            label: token.clone(),
            reps: Vec::new(),
            children: Vec::new(),
            items: vec![token.clone()],
        });
    }
    let top_edges = match m.top_model() {
        Some(t) => (0..t.n_vars())
            .filter_map(|c| {
                t.parent(c).map(|p| TopEdge {
                    parent: NodeId::latent(depth, p).to_string(),
                    child: NodeId::latent(depth, c).to_string(),
                })
            })
            .collect(),
        None => Vec::new(),
    };
    HierarchyExport {
        meta,
        nodes,
        top_edges,
    }
}

impl HierarchyExport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("export is plain data")
    }

    /// Parses and checks the structure (see [`HierarchyExport::validate`]).
    pub fn from_json(text: &str) -> Result<Self> {
        let e: HierarchyExport = serde_json::from_str(text)?;
        e.validate()?;
        Ok(e)
    }

    pub fn index(&self) -> HashMap<&str, &ExportNode> {
        self.nodes.iter().map(|n| (n.id.as_str(), n)).collect()
    }

    pub fn node(&self, id: &str) -> Option<&ExportNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    /// Nodes without a parent, in the order they appear.
    pub fn roots(&self) -> Vec<&ExportNode> {
        self.nodes.iter().filter(|n| n.parent.is_none()).collect()
    }

    /// Item tokens by item index, read from the leaves.
    pub fn item_tokens(&self) -> Result<Vec<String>> {
        let mut out = vec![None; self.meta.n_items];
        for n in self.nodes.iter().filter(|n| n.level == 0) {
            let id: NodeId = n.id.parse()?;
            let slot = out.get_mut(id.index).ok_or_else(|| {
                Error::format("hierarchy export", format!("leaf {} beyond n_items", n.id))
            })?;
            *slot = Some(n.label.clone());
        }
        out.into_iter()
            .enumerate()
            .map(|(i, t)| {
                t.ok_or_else(|| Error::format("hierarchy export", format!("no leaf for item {i}")))
            })
            .collect()
    }

    /// `partition(l)[item]` is the index of the item's level-`l` ancestor.
    pub fn partition(&self, level: u32) -> Result<Vec<usize>> {
        if level == 0 || level > self.meta.levels {
            return Err(Error::invalid(format!(
                "level {level} outside 1..={}",
                self.meta.levels
            )));
        }
        let index = self.index();
        let mut out = vec![usize::MAX; self.meta.n_items];
        for n in self.nodes.iter().filter(|n| n.level == 0) {
            let item: NodeId = n.id.parse()?;
            let mut cur = n;
            while cur.level < level {
                let p = cur
                    .parent
                    .as_deref()
                    .and_then(|p| index.get(p))
                    .ok_or_else(|| {
                        Error::format("hierarchy export", format!("{} has no parent", cur.id))
                    })?;
                cur = p;
            }
            out[item.index] = cur.id.parse::<NodeId>()?.index;
        }
        Ok(out)
    }

    /// Checks ids, parent/child links, leaf coverage and membership sets.
    pub fn validate(&self) -> Result<()> {
        let bad = |d: String| Err(Error::format("hierarchy export", d));
        let index = self.index();
        if index.len() != self.nodes.len() {
            return bad("duplicate node ids".into());
        }
        let mut leaves = vec![false; self.meta.n_items];
        for n in &self.nodes {
            let id: NodeId = n.id.parse()?;
            if id.level != n.level || n.level > self.meta.levels {
                return bad(format!("{} has level {}", n.id, n.level));
            }
            if n.level == 0 {
                match leaves.get_mut(id.index) {
                    Some(seen) if !*seen => *seen = true,
                    _ => return bad(format!("leaf {} repeated or out of range", n.id)),
                }
                if n.items != [n.label.clone()] {
                    return bad(format!("leaf {} must hold exactly its own token", n.id));
                }
            }
            match &n.parent {
                Some(p) => match index.get(p.as_str()) {
                    Some(pn) if pn.level == n.level + 1 && pn.children.contains(&n.id) => {}
                    _ => return bad(format!("{} points at a parent that does not list it", n.id)),
                },
                None if n.level != self.meta.levels => {
                    return bad(format!("{} has no parent below the top", n.id));
                }
                None => {}
            }
            if n.level > 0 {
                let mut union: Vec<&String> = Vec::new();
                for c in &n.children {
                    let cn = index.get(c.as_str()).ok_or_else(|| {
                        Error::format(
                            "hierarchy export",
                            format!("{} lists missing child {c}", n.id),
                        )
                    })?;
                    if cn.parent.as_deref() != Some(n.id.as_str()) {
                        return bad(format!("child {c} does not point back at {}", n.id));
                    }
                    union.extend(&cn.items);
                }
                let mut mine: Vec<&String> = n.items.iter().collect();
                union.sort();
                mine.sort();
                if union != mine {
                    return bad(format!("items of {} differ from its children's", n.id));
                }
                if let Some(r) = n.reps.iter().find(|r| !n.items.contains(&r.item)) {
                    return bad(format!("representative {} is not under {}", r.item, n.id));
                }
            }
        }
        if let Some(i) = leaves.iter().position(|s| !s) {
            return bad(format!("item {i} has no leaf"));
        }
        Ok(())
    }
}
