use log::info;

use super::{evaluate_lists, exclude_seen, MetricRow, Report, PAIR_BUDGET};
use crate::car::{rerank_all, CarConfig, CategoryIndex};
use crate::data::BinaryMatrix;
use crate::recommend::{train_base, BaseParams, RankedList, RecommenderKind};
use crate::{Error, Result};

/// Train / validation / test matrices over one user and item vocabulary.
#[derive(Debug, Clone)]
pub struct ExperimentData {
    pub train: BinaryMatrix,
    pub valid: BinaryMatrix,
    pub test: BinaryMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub recommender: RecommenderKind,
    pub params: BaseParams,
    /// Cutoffs to report; CAR lists have the largest one as length.
    pub cutoffs: Vec<usize>,
    /// CAR levels (counted from the top) tried on validation; empty = all.
    pub levels: Vec<u32>,
    pub alphas: Vec<usize>,
    /// Length of the base lists handed to CAR.
    pub pool: usize,
    /// Largest relative validation recall loss a CAR setting may have.
    pub max_recall_drop: f64,
    pub pair_budget: usize,
    /// Also evaluate users without training history (they get popularity).
    pub include_cold: bool,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            recommender: RecommenderKind::Wrmf,
            params: BaseParams::default(),
            cutoffs: vec![50],
            levels: Vec::new(),
            alphas: vec![1, 2, 3, 5, 10],
            pool: 500,
            max_recall_drop: 0.1,
            pair_budget: PAIR_BUDGET,
            include_cold: false,
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn echo(&self) -> Vec<(String, String)> {
        let p = &self.params;
        vec![
            ("recommender".into(), self.recommender.to_string()),
            ("neighbors".into(), p.neighbors.to_string()),
            ("wrmf_factors".into(), p.wrmf.factors.to_string()),
            ("wrmf_reg".into(), p.wrmf.reg.to_string()),
            ("wrmf_confidence".into(), p.wrmf.confidence.to_string()),
            ("wrmf_iters".into(), p.wrmf.iters.to_string()),
            ("cutoffs".into(), join(&self.cutoffs)),
            (
                "levels".into(),
                if self.levels.is_empty() {
                    "all".into()
                } else {
                    join(&self.levels)
                },
            ),
            ("alphas".into(), join(&self.alphas)),
            ("pool".into(), self.pool.to_string()),
            ("max_recall_drop".into(), self.max_recall_drop.to_string()),
            ("pair_budget".into(), self.pair_budget.to_string()),
            (
                "cold_users".into(),
                if self.include_cold {
                    "included"
                } else {
                    "excluded"
                }
                .into(),
            ),
            ("seed".into(), self.seed.to_string()),
        ]
    }

    fn k(&self) -> usize {
        self.cutoffs.iter().copied().max().unwrap_or(0)
    }
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    /// Base vs CAR on the test split at every cutoff.
    pub table: Report,
    /// Test metrics of CAR at every level with the chosen alpha.
    pub sweep: Report,
    /// Every setting tried on validation, at the largest cutoff.
    pub validation: Report,
    pub level: u32,
    pub alpha: usize,
}

/// Trains the base recommender on the training split, picks the CAR level
/// and alpha on validation (highest D@K among settings whose recall stays
/// within `max_recall_drop` of the base), then reports on the test split.
pub fn run_experiment(
    data: &ExperimentData,
    index: &CategoryIndex,
    cfg: &ExperimentConfig,
) -> Result<ExperimentOutcome> {
    let k = cfg.k();
    if k == 0 {
        return Err(Error::invalid("at least one cutoff above 0 is needed"));
    }
    if cfg.alphas.is_empty() {
        return Err(Error::invalid("at least one alpha is needed"));
    }
    let (train, n_items) = (&data.train, data.train.n_items());
    for (name, m) in [("validation", &data.valid), ("test", &data.test)] {
        if m.n_items() != n_items || m.n_users() != train.n_users() {
            return Err(Error::invalid(format!(
                "{name} matrix does not share the training vocabulary"
            )));
        }
    }
    if index.n_items() != n_items {
        return Err(Error::invalid(format!(
            "hierarchy covers {} items but the data has {n_items}",
            index.n_items()
        )));
    }
    let levels: Vec<u32> = if cfg.levels.is_empty() {
        (1..=index.depth()).collect()
    } else {
        cfg.levels.clone()
    };
    for &l in &levels {
        index.level_from_top(l)?;
    }
    let valid = exclude_seen(&data.valid, train);
    let test = exclude_seen(&data.test, train);

    let model = train_base(cfg.recommender, train, &cfg.params)?;
    let users: Vec<usize> = (0..train.n_users())
        .filter(|&u| cfg.include_cold || !train.row(u).is_empty())
        .collect();
    let pool = cfg.pool.max(k);
    let base: Vec<RankedList> = {
        use rayon::prelude::*;
        users
            .par_iter()
            .map(|&u| model.recommend(u, pool))
            .collect()
    };
    let base_name = cfg.recommender.to_string().to_uppercase();
    let car_name = format!("CAR_{base_name}");
    let eval =
        |name: &str, lists: &[RankedList], truth: &BinaryMatrix, n: usize| -> Result<MetricRow> {
            let cut: Vec<RankedList> = lists.iter().map(|l| l.truncated(n)).collect();
            evaluate_lists(name, &cut, truth, n, cfg.pair_budget, cfg.seed)
        };

    let mut validation =
        Report::new("validation: CAR settings at the largest cutoff").with_config(&cfg.echo());
    let base_valid = eval(&base_name, &base, &valid, k)?;
    validation.rows.push(base_valid.clone());
    let mut best: Option<(bool, MetricRow, u32, usize)> = None;
    for &l in &levels {
        for &alpha in &cfg.alphas {
            let car = rerank_all(&base, train, index, &CarConfig { level: l, alpha, k })?;
            let row = eval(&format!("{car_name}(l={l},a={alpha})"), &car, &valid, k)?;
            let ok = row.recall >= (1.0 - cfg.max_recall_drop) * base_valid.recall;
            let better = match &best {
                None => true,
                Some((bok, b, _, _)) => {
                    if ok != *bok {
                        ok
                    } else if ok {
                        row.diversity > b.diversity
                            || (row.diversity == b.diversity
                                && row.personalization > b.personalization)
                    } else {
                        row.recall > b.recall
                    }
                }
            };
            if better {
                best = Some((ok, row.clone(), l, alpha));
            }
            validation.rows.push(row);
        }
    }
    let (_, _, level, alpha) = best.expect("levels and alphas are non-empty");
    info!("validation picked CAR level {level}, alpha {alpha}");

    let mut echo = cfg.echo();
    echo.push(("car_level".into(), level.to_string()));
    echo.push(("car_alpha".into(), alpha.to_string()));
    let mut table =
        Report::new("test: base recommender vs category-aware re-ranking").with_config(&echo);
    let car = rerank_all(&base, train, index, &CarConfig { level, alpha, k })?;
    let mut cutoffs = cfg.cutoffs.clone();
    cutoffs.sort_unstable();
    cutoffs.dedup();
    for &n in &cutoffs {
        table.rows.push(eval(&base_name, &base, &test, n)?);
        table.rows.push(eval(&car_name, &car, &test, n)?);
    }
    let mut sweep = Report::new("test: CAR level sweep at the chosen alpha").with_config(&echo);
    for &n in &cutoffs {
        sweep.rows.push(eval(&base_name, &base, &test, n)?);
    }
    for l in 1..=index.depth() {
        let lists = rerank_all(&base, train, index, &CarConfig { level: l, alpha, k })?;
        for &n in &cutoffs {
            sweep.rows.push(eval(&format!("l={l}"), &lists, &test, n)?);
        }
    }
    Ok(ExperimentOutcome {
        table,
        sweep,
        validation,
        level,
        alpha,
    })
}
