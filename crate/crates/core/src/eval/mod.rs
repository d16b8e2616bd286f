//! Accuracy and diversity metrics, report tables and the experiment harness.

mod experiment;
mod report;

pub use experiment::{run_experiment, ExperimentConfig, ExperimentData, ExperimentOutcome};
pub use report::{MetricRow, Report};

use std::collections::HashSet;

use rand::Rng;
use rayon::prelude::*;

use crate::data::BinaryMatrix;
use crate::recommend::RankedList;
use crate::{stream_rng, Error, Result};

/// Default number of user pairs for the inter-user diversity estimate.
pub const PAIR_BUDGET: usize = 100_000;

fn hits(list: &RankedList, truth: &[u32], n: usize) -> usize {
    list.items()
        .take(n)
        .filter(|&i| truth.binary_search(&(i as u32)).is_ok())
        .count()
}

/// Truth without the cells already present in `train`; users beyond the
/// training matrix keep their whole row.
pub fn exclude_seen(truth: &BinaryMatrix, train: &BinaryMatrix) -> BinaryMatrix {
    let rows = (0..truth.n_users())
        .map(|u| {
            let seen = if u < train.n_users() {
                train.row(u)
            } else {
                &[]
            };
            truth
                .row(u)
                .iter()
                .copied()
                .filter(|i| seen.binary_search(i).is_err())
                .collect()
        })
        .collect();
    BinaryMatrix::from_rows(truth.n_items(), rows)
}

/// Mean precision@n and recall@n over lists whose user has test items.
/// Returns `(precision, recall, users)`.
pub fn precision_recall_at(
    recs: &[RankedList],
    truth: &BinaryMatrix,
    n: usize,
) -> Result<(f64, f64, usize)> {
    if n == 0 {
        return Err(Error::invalid("cutoff must be at least 1"));
    }
    let mut terms: Vec<(usize, f64, f64)> = recs
        .par_iter()
        .filter_map(|l| {
            let t = if l.user < truth.n_users() {
                truth.row(l.user)
            } else {
                &[]
            };
            if t.is_empty() {
                return None;
            }
            let h = hits(l, t, n) as f64;
            Some((l.user, h / n as f64, h / t.len() as f64))
        })
        .collect();
    if terms.is_empty() {
        return Err(Error::Empty(
            "no user has both a list and test items".into(),
        ));
    }
    // fixed summation order whatever the list order
    terms.sort_by_key(|t| t.0);
    let m = terms.len() as f64;
    let (p, r) = terms
        .iter()
        .fold((0.0, 0.0), |acc, t| (acc.0 + t.1, acc.1 + t.2));
    Ok((p / m, r / m, terms.len()))
}

/// Number of distinct items across all top-`n` lists.
pub fn aggregate_diversity(recs: &[RankedList], n: usize) -> usize {
    recs.iter()
        .flat_map(|l| l.items().take(n))
        .collect::<HashSet<_>>()
        .len()
}

/// Mean of `1 - |top_n(a) ∩ top_n(b)| / n` over user pairs; all pairs when
/// there are at most `pair_budget`, otherwise that many distinct pairs drawn
/// uniformly.
pub fn inter_user_diversity(
    recs: &[RankedList],
    n: usize,
    pair_budget: usize,
    seed: u64,
) -> Result<f64> {
    let users = recs.len();
    if users < 2 {
        return Err(Error::invalid(
            "inter-user diversity needs at least two lists",
        ));
    }
    if n == 0 || pair_budget == 0 {
        return Err(Error::invalid("cutoff and pair budget must be at least 1"));
    }
    let mut by_user: Vec<&RankedList> = recs.iter().collect();
    by_user.sort_by_key(|l| l.user);
    let sets: Vec<Vec<usize>> = by_user
        .iter()
        .map(|l| {
            let mut v: Vec<usize> = l.items().take(n).collect();
            v.sort_unstable();
            v
        })
        .collect();
    let total = users * (users - 1) / 2;
    let pairs: Vec<(usize, usize)> = if total <= pair_budget {
        (0..users)
            .flat_map(|a| (a + 1..users).map(move |b| (a, b)))
            .collect()
    } else {
        let mut rng = stream_rng(seed, "pair-sample", &[]);
        let mut seen = HashSet::with_capacity(pair_budget);
        let mut out = Vec::with_capacity(pair_budget);
        while out.len() < pair_budget {
            let a = rng.random_range(0..users);
            let b = rng.random_range(0..users);
            if a == b {
                continue;
            }
            let p = (a.min(b), a.max(b));
            if seen.insert(p) {
                out.push(p);
            }
        }
        out
    };
    let terms: Vec<f64> = pairs
        .par_iter()
        .map(|&(a, b)| {
            let common = sets[a]
                .iter()
                .filter(|i| sets[b].binary_search(i).is_ok())
                .count();
            1.0 - common as f64 / n as f64
        })
        .collect();
    Ok(terms.iter().sum::<f64>() / terms.len() as f64)
}

/// All four metrics at cutoff `n`, labelled `name`.
pub fn evaluate_lists(
    name: &str,
    recs: &[RankedList],
    truth: &BinaryMatrix,
    n: usize,
    pair_budget: usize,
    seed: u64,
) -> Result<MetricRow> {
    let (precision, recall, users) = precision_recall_at(recs, truth, n)?;
    // diversity is measured over the same users as accuracy
    let evaluated: Vec<RankedList> = recs
        .iter()
        .filter(|l| l.user < truth.n_users() && !truth.row(l.user).is_empty())
        .cloned()
        .collect();
    Ok(MetricRow {
        name: name.to_string(),
        n,
        precision,
        recall,
        diversity: aggregate_diversity(&evaluated, n),
        personalization: if evaluated.len() >= 2 {
            inter_user_diversity(&evaluated, n, pair_budget, seed)?
        } else {
            0.0
        },
        users,
    })
}
