//! Synthetic data: sampling from latent tree models, planted hierarchies and
//! a multi-taste interaction corpus.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::data::{BinaryMatrix, Event, InteractionLog};
use crate::ltm::{ConditionalTable, LatentTreeModel, Variable};
use crate::stream_rng;

const SAMPLE_CHUNK: usize = 512;

/// Draws `users` rows by ancestral sampling. Observed variables write their
/// column; the matrix has `n_columns` items.
pub fn sample_model(
    model: &LatentTreeModel,
    users: usize,
    n_columns: usize,
    seed: u64,
) -> BinaryMatrix {
    let observed = model.observed();
    assert!(
        observed.iter().all(|&(_, c)| c < n_columns),
        "model binds a column outside the requested width"
    );
    let chunks: Vec<Vec<Vec<u32>>> = (0..users.div_ceil(SAMPLE_CHUNK))
        .into_par_iter()
        .map(|chunk| {
            let mut rng = stream_rng(seed, "sample-model", &[chunk as u64]);
            let mut state = vec![0usize; model.n_vars()];
            let lo = chunk * SAMPLE_CHUNK;
            let hi = (lo + SAMPLE_CHUNK).min(users);
            (lo..hi)
                .map(|_| {
                    for &v in model.topological_order() {
                        let pa = model.parent(v).map_or(0, |p| state[p]);
                        state[v] = usize::from(rng.random::<f64>() < model.table(v).prob(1, pa));
                    }
                    let mut row: Vec<u32> = observed
                        .iter()
                        .filter(|&&(v, _)| state[v] == 1)
                        .map(|&(_, c)| c as u32)
                        .collect();
                    row.sort_unstable();
                    row
                })
                .collect()
        })
        .collect();
    BinaryMatrix::from_rows(n_columns, chunks.into_iter().flatten().collect())
}

#[derive(Debug, Clone)]
pub struct PlantedConfig {
    /// Fan-out from the top down: `[2, 2]` is two roots with two blocks each.
    pub branching: Vec<usize>,
    pub items_per_block: usize,
    /// `P(item = 1 | block = 0)` and `P(item = 1 | block = 1)`.
    pub item_probs: [f64; 2],
    /// `P(child = 1 | parent = s)` between latents.
    pub latent_probs: [f64; 2],
    pub root_prior: f64,
    /// The `j`-th item of a block has both item probabilities scaled by
    /// `(j + 1)^-skew`; 0 keeps blocks uniform.
    pub popularity_skew: f64,
}

impl PlantedConfig {
    /// Twelve items in four blocks of three under two roots.
    pub fn two_level() -> Self {
        PlantedConfig {
            branching: vec![2, 2],
            items_per_block: 3,
            item_probs: [0.1, 0.8],
            latent_probs: [0.15, 0.85],
            root_prior: 0.4,
            popularity_skew: 0.0,
        }
    }

    /// Four roots, three children each, three blocks under each of those,
    /// four items per block.
    pub fn three_level() -> Self {
        PlantedConfig {
            branching: vec![4, 3, 3],
            items_per_block: 4,
            item_probs: [0.02, 0.6],
            latent_probs: [0.05, 0.7],
            root_prior: 0.35,
            popularity_skew: 0.0,
        }
    }

    /// Three levels over 1024 items: 4 × 4 × 4 blocks of 16, sparse, with
    /// item popularity decaying inside each block so that base lists
    /// concentrate on block heads.
    pub fn three_level_wide() -> Self {
        PlantedConfig {
            branching: vec![4, 4, 4],
            items_per_block: 16,
            item_probs: [0.01, 0.5],
            latent_probs: [0.03, 0.6],
            root_prior: 0.3,
            popularity_skew: 1.2,
        }
    }
}

/// A generative latent tree with known groupings.
#[derive(Debug, Clone)]
pub struct PlantedHierarchy {
    pub model: LatentTreeModel,
    pub n_items: usize,
    /// `truth[k][item]` is the index of the item's ancestor at level `k + 1`
    /// (blocks are level 1, roots are the last level).
    pub truth: Vec<Vec<usize>>,
}

impl PlantedHierarchy {
    pub fn new(cfg: &PlantedConfig) -> Self {
        assert!(!cfg.branching.is_empty() && cfg.items_per_block > 0);
        let depth = cfg.branching.len() as u32;
        let mut vars = Vec::new();
        let mut parent = Vec::new();
        let mut tables = Vec::new();
        // frontier holds the latents of the level just built, in index order
        let mut frontier = Vec::new();
        for _ in 0..cfg.branching[0] {
            frontier.push(vars.len());
            vars.push(Variable::latent(depth));
            parent.push(None);
            tables.push(ConditionalTable::Root { p1: cfg.root_prior });
        }
        // ancestor index per level, for each frontier node
        let mut lineage: Vec<Vec<usize>> = (0..frontier.len()).map(|i| vec![i]).collect();
        for (k, &fan) in cfg.branching.iter().enumerate().skip(1) {
            let level = depth - k as u32;
            let mut next = Vec::new();
            let mut next_lineage = Vec::new();
            for (pos, &p) in frontier.iter().enumerate() {
                for _ in 0..fan {
                    let mut line = lineage[pos].clone();
                    line.push(next.len());
                    next_lineage.push(line);
                    next.push(vars.len());
                    vars.push(Variable::latent(level));
                    parent.push(Some(p));
                    tables.push(ConditionalTable::Edge {
                        p1: cfg.latent_probs,
                    });
                }
            }
            frontier = next;
            lineage = next_lineage;
        }
        let mut truth = vec![Vec::new(); cfg.branching.len()];
        let mut column = 0;
        for (pos, &block) in frontier.iter().enumerate() {
            for j in 0..cfg.items_per_block {
                let w = ((j + 1) as f64).powf(-cfg.popularity_skew);
                vars.push(Variable::observed(column, 0));
                parent.push(Some(block));
                tables.push(ConditionalTable::Edge {
                    p1: cfg.item_probs.map(|p| p * w),
                });
                // lineage runs top-down; truth is indexed bottom-up
                for (k, &a) in lineage[pos].iter().rev().enumerate() {
                    truth[k].push(a);
                }
                column += 1;
            }
        }
        let model =
            LatentTreeModel::new(vars, parent, tables).expect("planted hierarchy is well formed");
        PlantedHierarchy {
            model,
            n_items: column,
            truth,
        }
    }

    pub fn sample(&self, users: usize, seed: u64) -> BinaryMatrix {
        sample_model(&self.model, users, self.n_items, seed)
    }
}

/// Wraps a matrix as an event log with tokens `u000123` / `i000045` (so the
/// sorted vocabulary keeps numeric order) and timestamps uniform on [0, 1).
pub fn matrix_to_log(matrix: &BinaryMatrix, seed: u64) -> InteractionLog {
    let uw = digits(matrix.n_users());
    let iw = digits(matrix.n_items());
    let mut rng = stream_rng(seed, "synth-times", &[]);
    let mut events = Vec::with_capacity(matrix.nnz());
    for u in 0..matrix.n_users() {
        for &i in matrix.row(u) {
            events.push(Event::new(
                format!("u{u:0uw$}"),
                format!("i{i:0iw$}"),
                rng.random::<f64>(),
            ));
        }
    }
    InteractionLog::new(events)
}

fn digits(n: usize) -> usize {
    n.max(1).to_string().len()
}

#[derive(Debug, Clone)]
pub struct TasteConfig {
    pub users: usize,
    pub items: usize,
    pub tastes: usize,
    /// Inclusive range of tastes per user.
    pub tastes_per_user: (usize, usize),
    /// Inclusive range of events per user.
    pub events_per_user: (usize, usize),
    /// Share of events drawn uniformly from the whole catalogue.
    pub noise: f64,
    /// Zipf exponent of item popularity inside a taste.
    pub zipf: f64,
}

impl Default for TasteConfig {
    fn default() -> Self {
        TasteConfig {
            users: 500,
            items: 300,
            tastes: 5,
            tastes_per_user: (2, 3),
            events_per_user: (30, 60),
            noise: 0.05,
            zipf: 0.8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TasteCorpus {
    pub log: InteractionLog,
    /// Taste of each item, by item number.
    pub item_taste: Vec<usize>,
    /// Tastes of each user with their mixing weights, by user number.
    pub user_tastes: Vec<Vec<(usize, f64)>>,
}

/// Users mix two or three tastes with one dominant taste; items inside a
/// taste follow a Zipf popularity curve.
pub fn multi_taste(cfg: &TasteConfig, seed: u64) -> TasteCorpus {
    assert!(cfg.tastes >= 1 && cfg.items >= cfg.tastes);
    assert!(cfg.tastes_per_user.0 >= 1 && cfg.tastes_per_user.0 <= cfg.tastes_per_user.1);
    assert!(cfg.tastes_per_user.1 <= cfg.tastes);
    let item_taste: Vec<usize> = (0..cfg.items).map(|i| i * cfg.tastes / cfg.items).collect();
    let mut members = vec![Vec::new(); cfg.tastes];
    for (i, &t) in item_taste.iter().enumerate() {
        members[t].push(i);
    }
    let weights: Vec<Vec<f64>> = members
        .iter()
        .map(|m| {
            (0..m.len())
                .map(|r| 1.0 / ((r + 1) as f64).powf(cfg.zipf))
                .collect()
        })
        .collect();

    let uw = digits(cfg.users);
    let iw = digits(cfg.items);
    let mut events = Vec::new();
    let mut user_tastes = Vec::with_capacity(cfg.users);
    for u in 0..cfg.users {
        let mut rng = stream_rng(seed, "multi-taste", &[u as u64]);
        let k = rng.random_range(cfg.tastes_per_user.0..=cfg.tastes_per_user.1);
        let mut order: Vec<usize> = (0..cfg.tastes).collect();
        order.shuffle(&mut rng);
        // dominant taste gets roughly half or more of the mass
        let mut mix: Vec<(usize, f64)> = order[..k]
            .iter()
            .enumerate()
            .map(|(j, &t)| {
                (
                    t,
                    if j == 0 {
                        2.0 + rng.random::<f64>()
                    } else {
                        0.5 + rng.random::<f64>()
                    },
                )
            })
            .collect();
        let total: f64 = mix.iter().map(|x| x.1).sum();
        for x in mix.iter_mut() {
            x.1 /= total;
        }
        let n_events = rng.random_range(cfg.events_per_user.0..=cfg.events_per_user.1);
        let mut chosen = std::collections::BTreeSet::new();
        let mut guard = 0;
        while chosen.len() < n_events.min(cfg.items) && guard < 50 * n_events {
            guard += 1;
            let item = if rng.random::<f64>() < cfg.noise {
                rng.random_range(0..cfg.items)
            } else {
                let mut x = rng.random::<f64>();
                let mut t = mix[mix.len() - 1].0;
                for &(tt, w) in &mix {
                    if x < w {
                        t = tt;
                        break;
                    }
                    x -= w;
                }
                let w = &weights[t];
                let sum: f64 = w.iter().sum();
                let mut y = rng.random::<f64>() * sum;
                let mut pick = members[t].len() - 1;
                for (r, &wr) in w.iter().enumerate() {
                    if y < wr {
                        pick = r;
                        break;
                    }
                    y -= wr;
                }
                members[t][pick]
            };
            chosen.insert(item);
        }
        for item in chosen {
            events.push(Event::new(
                format!("u{u:0uw$}"),
                format!("i{item:0iw$}"),
                rng.random::<f64>(),
            ));
        }
        user_tastes.push(mix);
    }
    TasteCorpus {
        log: InteractionLog::new(events),
        item_taste,
        user_tastes,
    }
}

/// Adjusted Rand index between two labelings of the same elements.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    if n < 2 {
        return 1.0;
    }
    let mut table = std::collections::HashMap::new();
    let mut ra = std::collections::HashMap::new();
    let mut rb = std::collections::HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_insert(0usize) += 1;
        *ra.entry(x).or_insert(0usize) += 1;
        *rb.entry(y).or_insert(0usize) += 1;
    }
    let c2 = |k: usize| (k * k.saturating_sub(1)) as f64 / 2.0;
    let index: f64 = table.values().map(|&k| c2(k)).sum();
    let sa: f64 = ra.values().map(|&k| c2(k)).sum();
    let sb: f64 = rb.values().map(|&k| c2(k)).sum();
    let expected = sa * sb / c2(n);
    let max = (sa + sb) / 2.0;
    if (max - expected).abs() < 1e-12 {
        // both labelings trivial in the same way
        return if (index - expected).abs() < 1e-12 {
            1.0
        } else {
            0.0
        };
    }
    (index - expected) / (max - expected)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sampling_matches_marginals() {
        let h = PlantedHierarchy::new(&PlantedConfig::two_level());
        let m = h.sample(20_000, 4);
        assert_eq!(m.n_items(), 12);
        // P(item) = sum over root and block states
        let (r, [l0, l1], [i0, i1]) = (0.4, [0.15, 0.85], [0.1, 0.8]);
        let pz = r * l1 + (1.0 - r) * l0;
        let p = pz * i1 + (1.0 - pz) * i0;
        for c in 0..12 {
            let f = m.col(c).len() as f64 / 20_000.0;
            assert!((f - p).abs() < 0.015, "column {c}: {f} vs {p}");
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let h = PlantedHierarchy::new(&PlantedConfig::three_level());
        assert_eq!(h.sample(1500, 7), h.sample(1500, 7));
        assert_ne!(h.sample(1500, 7), h.sample(1500, 8));
    }

    #[test]
    fn planted_truth_shapes() {
        let h = PlantedHierarchy::new(&PlantedConfig::two_level());
        assert_eq!(h.truth[0], vec![0, 0, 0, 1, 1, 1, 2, 2, 2, 3, 3, 3]);
        assert_eq!(h.truth[1], vec![0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1]);
        let h3 = PlantedHierarchy::new(&PlantedConfig::three_level());
        assert_eq!(h3.n_items, 144);
        assert_eq!(h3.truth.len(), 3);
        assert_eq!(h3.truth[2].iter().max(), Some(&3));
        assert_eq!(h3.truth[0][143], 35);
    }

    #[test]
    fn ari_reference_values() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[5, 5, 9, 9]), 1.0);
        // sklearn: adjusted_rand_score([0,0,1,1],[0,1,0,1]) = -0.5
        assert!((adjusted_rand_index(&[0, 0, 1, 1], &[0, 1, 0, 1]) + 0.5).abs() < 1e-12);
        // pairs: index 2, rows 6, columns 3, n = 6 -> expected 18/15, max 4.5
        let ari = adjusted_rand_index(&[0, 0, 0, 1, 1, 1], &[0, 0, 1, 1, 2, 2]);
        assert!((ari - (2.0 - 1.2) / (4.5 - 1.2)).abs() < 1e-12);
    }

    #[test]
    fn taste_corpus_shape() {
        let c = multi_taste(&TasteConfig::default(), 1);
        assert_eq!(c.user_tastes.len(), 500);
        assert!(c.user_tastes.iter().all(|t| (2..=3).contains(&t.len())));
        assert_eq!(c.item_taste.iter().filter(|&&t| t == 4).count(), 60);
        let per_user = c.log.len() as f64 / 500.0;
        assert!((25.0..=60.0).contains(&per_user));
        let again = multi_taste(&TasteConfig::default(), 1);
        assert_eq!(again.log, c.log);
    }
}
