//! One flat layer of the hierarchy: items are grouped into disjoint
//! categories, each modelled by a single binary latent.

use log::debug;
use rand::Rng;

use crate::data::BinaryMatrix;
use crate::ltm::{
    bic_from_ll, learn_lcm, patterns_log_likelihood, run_em, squash, ConditionalTable, Engine,
    LatentTreeModel, Patterns, Variable,
};
use crate::similarity::{closest_in_set, SetAffinity, SparseSimilarity};
use crate::{stream_rng, Error, Result};

pub use crate::ltm::Category;

/// EM steps used when a latent class model is learned from scratch.
const INIT_EM_STEPS: usize = 30;
/// EM steps on the new tables of the two-latent candidate.
const LOCAL_EM_STEPS: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct LearnerConfig {
    /// UD-test threshold on `BIC(c2) - BIC(c1)`.
    pub delta: f64,
    /// Largest number of items in one category.
    pub max_size: usize,
    /// EM steps run on a finished category.
    pub em_steps: usize,
    pub seed: u64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            delta: 3.0,
            max_size: 10,
            em_steps: 10,
            seed: 0,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_size < 3 {
            return Err(Error::invalid(format!(
                "maximum category size must be at least 3, got {}",
                self.max_size
            )));
        }
        if self.em_steps < 1 {
            return Err(Error::invalid(
                "at least one EM step per category is required",
            ));
        }
        if !self.delta.is_finite() {
            return Err(Error::invalid("UD-test threshold must be finite"));
        }
        Ok(())
    }
}

/// Categories of one layer and the item → category map.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatForest {
    pub level: u32,
    pub categories: Vec<Category>,
    /// `ownership[item]` is the index of the category that holds it.
    pub ownership: Vec<usize>,
}

impl FlatForest {
    /// Checks that the categories partition `0..n_items` and rebuilds the map.
    pub fn new(level: u32, categories: Vec<Category>, n_items: usize) -> Result<Self> {
        let mut ownership = vec![usize::MAX; n_items];
        for (k, c) in categories.iter().enumerate() {
            for col in c.columns() {
                if col >= n_items {
                    return Err(Error::invalid(format!(
                        "category {k} holds item {col} outside 0..{n_items}"
                    )));
                }
                if ownership[col] != usize::MAX {
                    return Err(Error::invalid(format!(
                        "item {col} claimed by two categories"
                    )));
                }
                ownership[col] = k;
            }
        }
        if let Some(i) = ownership.iter().position(|&k| k == usize::MAX) {
            return Err(Error::invalid(format!("item {i} is not in any category")));
        }
        Ok(FlatForest {
            level,
            categories,
            ownership,
        })
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    pub fn n_items(&self) -> usize {
        self.ownership.len()
    }

    /// One model holding every category as its own tree.
    pub fn to_model(&self) -> LatentTreeModel {
        let mut vars = Vec::new();
        let mut parent = Vec::new();
        let mut tables = Vec::new();
        for c in &self.categories {
            let m = c.model();
            let base = vars.len();
            for v in 0..m.n_vars() {
                vars.push(m.variable(v).clone());
                parent.push(m.parent(v).map(|p| p + base));
                tables.push(*m.table(v));
            }
        }
        LatentTreeModel::new(vars, parent, tables).expect("disjoint categories form a forest")
    }

    /// Inverse of [`FlatForest::to_model`]: every latent root with its
    /// observed children becomes a category.
    pub fn from_model(level: u32, model: &LatentTreeModel, n_items: usize) -> Result<Self> {
        let mut categories = Vec::new();
        for r in model.roots() {
            if !model.variable(r).is_latent() {
                return Err(Error::invalid(format!("variable {r} is an observed root")));
            }
            let mut keep = vec![r];
            keep.extend_from_slice(model.children(r));
            categories.push(Category::from_latent_root(&model.subset(&keep)?)?);
        }
        FlatForest::new(level, categories, n_items)
    }
}

/// Category over `S` plus `X` under the same latent. The existing tables are
/// copied unchanged; `P(X | Z)` starts from expected counts under the
/// posterior of `Z` given the current members, then gets a few EM steps in
/// which only that table moves.
pub fn pem_lcm(c: &Category, x: usize, data: &BinaryMatrix) -> Category {
    pem_lcm_steps(c, x, data, LOCAL_EM_STEPS)
}

pub(crate) fn pem_lcm_steps(c: &Category, x: usize, data: &BinaryMatrix, steps: usize) -> Category {
    assert!(
        c.child_var(x).is_none(),
        "item {x} is already in the category"
    );
    let (mut model, xv) = append_child(c.model(), 0, x, [0.5, 0.5]);
    let patterns = Patterns::from_matrix(&model, data);
    let mut engine = Engine::new(&model);
    let mut stats = [0.0; 4];
    for (ones, w) in &patterns.rows {
        engine.set_ones(ones);
        let on = ones.binary_search(&(xv as u32)).is_ok();
        engine.hide(&[xv]);
        engine.upward();
        engine.downward();
        let p = engine.posterior(0);
        stats[0] += w * p[0];
        stats[2] += w * p[1];
        if on {
            stats[1] += w * p[0];
            stats[3] += w * p[1];
        }
    }
    let p1 = [
        if stats[0] > 0.0 {
            squash(stats[1] / stats[0])
        } else {
            0.5
        },
        if stats[2] > 0.0 {
            squash(stats[3] / stats[2])
        } else {
            0.5
        },
    ];
    model.set_table(xv, ConditionalTable::Edge { p1 });
    let mut update = vec![false; model.n_vars()];
    update[xv] = true;
    let (model, _) = run_em(model, &patterns, steps, Some(&update));
    Category::from_latent_root(&model).expect("appended child keeps the category shape")
}

/// `Z` over the kept items and a second latent `Z2` under `Z` holding the
/// pair `{W, X}`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoLatentModel {
    model: LatentTreeModel,
    /// Variables 0..=n_keep are `Z` and its kept children.
    n_keep: usize,
}

impl TwoLatentModel {
    pub fn model(&self) -> &LatentTreeModel {
        &self.model
    }

    /// Variable id of `Z2`; `W` and `X` follow it.
    pub fn second_latent(&self) -> usize {
        self.n_keep + 1
    }

    /// The category over the kept items, `Z2` and its pair dropped.
    pub fn without_pair(&self) -> Category {
        let keep: Vec<usize> = (0..=self.n_keep).collect();
        let sub = self
            .model
            .subset(&keep)
            .expect("kept prefix is closed under parent");
        Category::from_latent_root(&sub).expect("kept prefix is a category")
    }
}

/// Builds the two-latent alternative to [`pem_lcm`]. `Z`'s tables over
/// `keep` are copied from `c`. `Z2` starts as a noisy copy of `W`: it
/// inherits `W`'s table under `Z`, `P(W | Z2)` is `[0.05, 0.95]`, and
/// `P(X | Z2)` is the empirical `P(X | W)`. The three new tables then get a
/// few EM steps while everything else stays fixed.
pub fn pem_ltm_2l(
    c: &Category,
    keep: &[usize],
    w: usize,
    x: usize,
    data: &BinaryMatrix,
) -> Result<TwoLatentModel> {
    if keep.is_empty() {
        return Err(Error::invalid(
            "the two-latent model needs at least one kept item",
        ));
    }
    let src = c.model();
    let wv = c
        .child_var(w)
        .ok_or_else(|| Error::invalid(format!("item {w} is not in the category")))?;
    let mut vars = vec![src.variable(0).clone()];
    let mut parent = vec![None];
    let mut tables = vec![*src.table(0)];
    let mut keep = keep.to_vec();
    keep.sort_unstable();
    for &k in &keep {
        let v = c
            .child_var(k)
            .ok_or_else(|| Error::invalid(format!("item {k} is not in the category")))?;
        vars.push(src.variable(v).clone());
        parent.push(Some(0));
        tables.push(*src.table(v));
    }
    let level = src.variable(0).level;
    let z2 = vars.len();
    vars.push(Variable::latent(level));
    parent.push(Some(0));
    tables.push(*src.table(wv));
    vars.push(src.variable(wv).clone());
    parent.push(Some(z2));
    tables.push(ConditionalTable::Edge { p1: [0.05, 0.95] });
    vars.push(Variable::observed(x, level.saturating_sub(1)));
    parent.push(Some(z2));
    tables.push(ConditionalTable::Edge {
        p1: conditional_on(data, x, w),
    });
    let model = LatentTreeModel::new(vars, parent, tables)?;
    let mut update = vec![false; model.n_vars()];
    update[z2..].fill(true);
    let patterns = Patterns::from_matrix(&model, data);
    let (model, _) = run_em(model, &patterns, LOCAL_EM_STEPS, Some(&update));
    Ok(TwoLatentModel {
        model,
        n_keep: keep.len(),
    })
}

/// `[P(x=1 | w=0), P(x=1 | w=1)]` from the data, kept inside the floor.
fn conditional_on(data: &BinaryMatrix, x: usize, w: usize) -> [f64; 2] {
    let (cx, cw) = (data.col(x), data.col(w));
    let (mut i, mut j, mut both) = (0, 0, 0usize);
    while i < cx.len() && j < cw.len() {
        match cx[i].cmp(&cw[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                both += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let n = data.n_users() as f64;
    let nw = cw.len() as f64;
    let ratio = |num: f64, den: f64| if den > 0.0 { squash(num / den) } else { 0.5 };
    [
        ratio(cx.len() as f64 - both as f64, n - nw),
        ratio(both as f64, nw),
    ]
}

/// Adds observed `column` under `parent` and returns the new variable id.
fn append_child(
    model: &LatentTreeModel,
    parent: usize,
    column: usize,
    p1: [f64; 2],
) -> (LatentTreeModel, usize) {
    let mut vars = model.variables().to_vec();
    let mut par: Vec<Option<usize>> = (0..model.n_vars()).map(|v| model.parent(v)).collect();
    let mut tables = model.tables().to_vec();
    let level = model.variable(parent).level.saturating_sub(1);
    vars.push(Variable::observed(column, level));
    par.push(Some(parent));
    tables.push(ConditionalTable::Edge { p1 });
    let v = vars.len() - 1;
    (
        LatentTreeModel::new(vars, par, tables).expect("appending a child keeps a forest"),
        v,
    )
}

fn refine(c: Category, data: &BinaryMatrix, steps: usize) -> Category {
    let patterns = Patterns::from_matrix(c.model(), data);
    let (mut m, _) = run_em(c.into_model(), &patterns, steps, None);
    m.canonicalize();
    Category::new(m).expect("EM keeps the category shape")
}

fn finish(c: Category) -> Category {
    let mut m = c.into_model();
    m.canonicalize();
    Category::new(m).expect("orientation keeps the category shape")
}

fn bic_on(model: &LatentTreeModel, data: &BinaryMatrix) -> f64 {
    let patterns = Patterns::from_matrix(model, data);
    bic_from_ll(
        model,
        patterns_log_likelihood(model, &patterns),
        data.n_users(),
    )
}

/// Grows one category from the unassigned `items`. `draw` keys the random
/// seed item so that every call of a layer uses its own stream.
pub fn one_category(
    data: &BinaryMatrix,
    items: &[usize],
    cfg: &LearnerConfig,
    sim: &SparseSimilarity,
    draw: u64,
) -> Category {
    assert!(!items.is_empty(), "no items left to group");
    if items.len() <= 3 {
        return learn_lcm(data, items, INIT_EM_STEPS, cfg.seed ^ draw);
    }
    let mut pool = vec![false; data.n_items()];
    for &i in items {
        pool[i] = true;
    }
    let mut rng = stream_rng(cfg.seed, "seed-item", &[draw]);
    let first = items[rng.random_range(0..items.len())];
    pool[first] = false;
    let mut affinity = SetAffinity::new(sim);
    affinity.add_member(first);
    let mut set = vec![first];
    let Some(second) = affinity.best(|i| pool[i]) else {
        // nothing was ever co-consumed with the seed
        return learn_lcm(data, &set, INIT_EM_STEPS, cfg.seed ^ draw);
    };
    pool[second] = false;
    affinity.add_member(second);
    set.push(second);
    let mut remaining = items.len() - 2;
    let mut c = learn_lcm(data, &set, INIT_EM_STEPS, cfg.seed ^ draw);
    loop {
        let Some(x) = affinity.best(|i| pool[i]) else {
            debug!(
                "category {draw}: no co-consumed candidate left at size {}",
                set.len()
            );
            return refine(c, data, cfg.em_steps);
        };
        let w = closest_in_set(&set, x, sim);
        pool[x] = false;
        remaining -= 1;
        let c1 = pem_lcm(&c, x, data);
        if remaining == 0 {
            return finish(c1);
        }
        let keep: Vec<usize> = set.iter().copied().filter(|&s| s != w).collect();
        let c2 = pem_ltm_2l(&c, &keep, w, x, data).expect("set has at least two members");
        let gain = bic_on(c2.model(), data) - bic_on(c1.model(), data);
        if gain > cfg.delta {
            debug!(
                "category {draw}: UD-test fired at size {} (gain {gain:.3})",
                set.len() + 1
            );
            let patterns = Patterns::from_matrix(c2.model(), data);
            let (model, _) = run_em(c2.model.clone(), &patterns, cfg.em_steps, None);
            let fitted = TwoLatentModel {
                model,
                n_keep: c2.n_keep,
            };
            return finish(fitted.without_pair());
        }
        if set.len() + 1 >= cfg.max_size {
            return refine(c1, data, cfg.em_steps);
        }
        c = c1;
        set.push(x);
        affinity.add_member(x);
    }
}

/// Groups every item of `data` into categories of the given level.
pub fn learn_flat_forest(
    data: &BinaryMatrix,
    cfg: &LearnerConfig,
    sim: &SparseSimilarity,
    level: u32,
) -> Result<FlatForest> {
    cfg.validate()?;
    if data.n_items() == 0 || data.n_users() == 0 {
        return Err(Error::Empty(
            "cannot learn a flat layer from an empty matrix".into(),
        ));
    }
    if sim.n_items() != data.n_items() {
        return Err(Error::invalid(format!(
            "similarity covers {} items but the matrix has {}",
            sim.n_items(),
            data.n_items()
        )));
    }
    let mut unassigned: Vec<usize> = (0..data.n_items()).collect();
    let mut categories = Vec::new();
    while !unassigned.is_empty() {
        let draw = (u64::from(level) << 32) | categories.len() as u64;
        let c = one_category(data, &unassigned, cfg, sim, draw).with_level(level);
        let claimed = c.columns();
        unassigned.retain(|i| claimed.binary_search(i).is_err());
        categories.push(c);
    }
    debug!(
        "level {level}: {} items in {} categories",
        data.n_items(),
        categories.len()
    );
    FlatForest::new(level, categories, data.n_items())
}
