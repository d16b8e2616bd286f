//! Category-aware re-ranking of base lists and category-based explanations.

use std::io::Write;

use rayon::prelude::*;

use crate::data::{BinaryMatrix, TokenIndex};
use crate::hierarchy::{HierarchyExport, Hltm, NodeId};
use crate::recommend::RankedList;
use crate::{Error, Result};

/// Item → category lookups for every level plus level-1 representatives.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoryIndex {
    /// `partitions[h - 1][item]` is the item's category on hierarchy level `h`.
    partitions: Vec<Vec<usize>>,
    sizes: Vec<usize>,
    /// Ranked representatives of each level-1 category.
    reps: Vec<Vec<usize>>,
    reps_per_node: usize,
}

impl CategoryIndex {
    /// Keeps `reps_per_node + 1` representatives per level-1 category so an
    /// explanation still has `reps_per_node` after dropping the item itself.
    pub fn from_hltm(m: &Hltm, reps_per_node: usize) -> Self {
        let partitions: Vec<Vec<usize>> = (1..=m.depth()).map(|h| m.partition(h)).collect();
        let sizes = (1..=m.depth()).map(|h| m.level_len(h)).collect();
        let reps = (0..m.level_len(1))
            .into_par_iter()
            .map(|j| {
                m.representatives(NodeId::latent(1, j), reps_per_node + 1)
                    .expect("level-1 node")
                    .into_iter()
                    .map(|(i, _)| i)
                    .collect()
            })
            .collect();
        CategoryIndex {
            partitions,
            sizes,
            reps,
            reps_per_node,
        }
    }

    /// `partitions[h - 1][item]` gives the category on hierarchy level `h`;
    /// `reps[c]` ranks the representatives of level-1 category `c`.
    pub fn from_partitions(
        partitions: Vec<Vec<usize>>,
        reps: Vec<Vec<usize>>,
        reps_per_node: usize,
    ) -> Result<Self> {
        let n_items = partitions.first().map_or(0, Vec::len);
        if n_items == 0 || partitions.iter().any(|p| p.len() != n_items) {
            return Err(Error::invalid(
                "partitions must be non-empty and cover the same items",
            ));
        }
        let sizes: Vec<usize> = partitions
            .iter()
            .map(|p| p.iter().max().map_or(0, |m| m + 1))
            .collect();
        if reps.len() > sizes[0] || reps.iter().flatten().any(|&r| r >= n_items) {
            return Err(Error::invalid(
                "representatives must name level-1 categories and known items",
            ));
        }
        let mut reps = reps;
        reps.resize(sizes[0], Vec::new());
        Ok(CategoryIndex {
            partitions,
            sizes,
            reps,
            reps_per_node,
        })
    }

    pub fn from_export(e: &HierarchyExport) -> Result<Self> {
        let tokens = e.item_tokens()?;
        let lookup = TokenIndex::from_ordered(tokens)?;
        let depth = e.meta.levels;
        if depth == 0 {
            return Err(Error::format("hierarchy export", "no latent levels"));
        }
        let partitions: Vec<Vec<usize>> =
            (1..=depth).map(|h| e.partition(h)).collect::<Result<_>>()?;
        let mut sizes = vec![0usize; depth as usize];
        let mut reps: Vec<Vec<usize>> = Vec::new();
        for n in e.nodes.iter().filter(|n| n.level > 0) {
            let id: NodeId = n.id.parse()?;
            let s = &mut sizes[n.level as usize - 1];
            *s = (*s).max(id.index + 1);
            if n.level == 1 {
                if reps.len() <= id.index {
                    reps.resize(id.index + 1, Vec::new());
                }
                reps[id.index] = n
                    .reps
                    .iter()
                    .map(|r| {
                        lookup.index(&r.item).ok_or_else(|| {
                            Error::format(
                                "hierarchy export",
                                format!("unknown representative {}", r.item),
                            )
                        })
                    })
                    .collect::<Result<_>>()?;
            }
        }
        reps.resize(sizes[0], Vec::new());
        Ok(CategoryIndex {
            partitions,
            sizes,
            reps,
            reps_per_node: e.meta.reps_per_node,
        })
    }

    /// Number of latent levels.
    pub fn depth(&self) -> u32 {
        self.partitions.len() as u32
    }

    pub fn n_items(&self) -> usize {
        self.partitions[0].len()
    }

    /// Categories on hierarchy level `h` (1 = most specific).
    pub fn n_categories(&self, h: u32) -> usize {
        self.sizes[h as usize - 1]
    }

    pub fn category_of(&self, item: usize, h: u32) -> usize {
        self.partitions[h as usize - 1][item]
    }

    /// Hierarchy level of CAR level `l`, which counts from the top: `l = 1`
    /// is the top layer and `l = depth` the level-1 categories.
    pub fn level_from_top(&self, l: u32) -> Result<u32> {
        if l == 0 || l > self.depth() {
            return Err(Error::invalid(format!(
                "CAR level {l} outside 1..={}",
                self.depth()
            )));
        }
        Ok(self.depth() + 1 - l)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CarConfig {
    /// Counted from the top of the hierarchy; larger is more specific.
    pub level: u32,
    /// Minimum consumed count for a category to receive slots.
    pub alpha: usize,
    pub k: usize,
}

impl CarConfig {
    pub fn validate(&self, index: &CategoryIndex) -> Result<()> {
        index.level_from_top(self.level)?;
        if self.k == 0 {
            return Err(Error::invalid("CAR list length must be at least 1"));
        }
        Ok(())
    }
}

/// Consumed counts per category, descending, and the slots each receives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CarPlan {
    pub n: usize,
    /// `(category, n_i)` for every category on the level, by `n_i`
    /// descending, ties to the lower category.
    pub counts: Vec<(usize, usize)>,
    /// `(category, r)` in scan order; only categories that passed `alpha`.
    pub allocations: Vec<(usize, usize)>,
}

impl CarPlan {
    pub fn is_empty(&self) -> bool {
        self.allocations.is_empty()
    }

    pub fn count(&self, category: usize) -> usize {
        self.counts
            .iter()
            .find(|c| c.0 == category)
            .map_or(0, |c| c.1)
    }
}

/// `n_i` for every category on hierarchy level `h`, sorted.
pub fn category_counts(
    history: &[u32],
    index: &CategoryIndex,
    h: u32,
) -> (usize, Vec<(usize, usize)>) {
    let mut n = vec![0usize; index.n_categories(h)];
    for &i in history {
        n[index.category_of(i as usize, h)] += 1;
    }
    let mut counts: Vec<(usize, usize)> = n.into_iter().enumerate().collect();
    counts.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    (history.len(), counts)
}

/// Scans categories by descending count; each with `n_k >= alpha` gets
/// `floor(n_k / n * k)` slots and the first one below `alpha` ends the scan.
pub fn allocate(n: usize, counts: Vec<(usize, usize)>, k: usize, alpha: usize) -> CarPlan {
    let mut allocations = Vec::new();
    for &(c, nk) in &counts {
        match (nk * k).checked_div(n) {
            Some(slots) if nk >= alpha && nk > 0 => allocations.push((c, slots)),
            _ => break,
        }
    }
    CarPlan {
        n,
        counts,
        allocations,
    }
}

/// Where an entry of a re-ranked list came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    /// Proportional share of a planned category.
    Allocated,
    /// Fill from a consumed category that received no share.
    Fill,
    /// Relaxed fill from a planned category.
    RelaxAllocated,
    /// Relaxed fill from a category the user never consumed.
    RelaxUnconsumed,
    /// No category qualified; base order kept.
    Fallback,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reranked {
    pub list: RankedList,
    pub stages: Vec<Stage>,
    pub plan: CarPlan,
}

pub fn rerank(
    base: &RankedList,
    history: &[u32],
    index: &CategoryIndex,
    cfg: &CarConfig,
) -> Result<Reranked> {
    cfg.validate(index)?;
    let h = index.level_from_top(cfg.level)?;
    let (n, counts) = category_counts(history, index, h);
    let plan = allocate(n, counts, cfg.k, cfg.alpha);
    let k = cfg.k;
    if plan.is_empty() {
        let list = base.truncated(k);
        let stages = vec![Stage::Fallback; list.len()];
        return Ok(Reranked { list, stages, plan });
    }
    let cat = |i: usize| index.category_of(i, h);
    let mut used = vec![false; base.len()];
    let mut entries = Vec::with_capacity(k);
    let mut stages = Vec::with_capacity(k);
    let allocated: Vec<usize> = plan.allocations.iter().map(|a| a.0).collect();
    for &(c, r) in &plan.allocations {
        let mut taken = 0;
        for (pos, &(i, s)) in base.entries.iter().enumerate() {
            if taken == r || entries.len() == k {
                break;
            }
            if !used[pos] && cat(i) == c {
                used[pos] = true;
                entries.push((i, s));
                stages.push(Stage::Allocated);
                taken += 1;
            }
        }
    }
    let passes: [(Stage, &dyn Fn(usize) -> bool); 3] = [
        (Stage::Fill, &|c| {
            !allocated.contains(&c) && plan.count(c) != 0
        }),
        (Stage::RelaxAllocated, &|c| allocated.contains(&c)),
        (Stage::RelaxUnconsumed, &|c| plan.count(c) == 0),
    ];
    for (stage, admit) in passes {
        for (pos, &(i, s)) in base.entries.iter().enumerate() {
            if entries.len() == k {
                break;
            }
            if !used[pos] && admit(cat(i)) {
                used[pos] = true;
                entries.push((i, s));
                stages.push(stage);
            }
        }
    }
    Ok(Reranked {
        list: RankedList::new(base.user, entries),
        stages,
        plan,
    })
}

/// Re-ranks each base list against its user's training history.
pub fn rerank_all(
    base: &[RankedList],
    train: &BinaryMatrix,
    index: &CategoryIndex,
    cfg: &CarConfig,
) -> Result<Vec<RankedList>> {
    cfg.validate(index)?;
    base.par_iter()
        .map(|b| {
            let history = if b.user < train.n_users() {
                train.row(b.user)
            } else {
                &[]
            };
            rerank(b, history, index, cfg).map(|r| r.list)
        })
        .collect()
}

/// Why an item was recommended: its level-1 category and that category's
/// representatives, plus the category on the re-ranking level.
#[derive(Debug, Clone, PartialEq)]
pub struct Explanation {
    pub item: usize,
    pub category: NodeId,
    pub reps: Vec<usize>,
    pub context: NodeId,
}

pub fn explain(item: usize, index: &CategoryIndex, level: u32) -> Result<Explanation> {
    if item >= index.n_items() {
        return Err(Error::invalid(format!("item {item} outside the hierarchy")));
    }
    let h = index.level_from_top(level)?;
    let c1 = index.category_of(item, 1);
    let reps = index.reps[c1]
        .iter()
        .copied()
        .filter(|&r| r != item)
        .take(index.reps_per_node)
        .collect();
    Ok(Explanation {
        item,
        category: NodeId::latent(1, c1),
        reps,
        context: NodeId::latent(h, index.category_of(item, h)),
    })
}

/// "Because of your interest in the category of items like a, b and c, we
/// recommend x."
pub fn render_explanation(e: &Explanation, items: &TokenIndex) -> String {
    let names: Vec<&str> = e.reps.iter().map(|&r| items.token(r)).collect();
    let like = match names.len() {
        0 => {
            return format!(
                "We recommend {} from category {}.",
                items.token(e.item),
                e.category
            )
        }
        1 => names[0].to_string(),
        n => format!("{} and {}", names[..n - 1].join(", "), names[n - 1]),
    };
    format!(
        "Because of your interest in the category of items like {like}, we recommend {}.",
        items.token(e.item)
    )
}

/// `user<TAB>item<TAB>category_id<TAB>rep1|rep2|...`, one row per list entry.
pub fn write_explanations<W: Write>(
    lists: &[RankedList],
    index: &CategoryIndex,
    level: u32,
    users: &TokenIndex,
    items: &TokenIndex,
    mut w: W,
) -> Result<()> {
    for l in lists {
        for i in l.items() {
            let e = explain(i, index, level)?;
            let reps: Vec<&str> = e.reps.iter().map(|&r| items.token(r)).collect();
            writeln!(
                w,
                "{}\t{}\t{}\t{}",
                users.token(l.user),
                items.token(i),
                e.category,
                reps.join("|")
            )?;
        }
    }
    w.flush()?;
    Ok(())
}
