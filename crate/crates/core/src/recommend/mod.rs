//! Base top-N recommenders and the ranked-list file format.

mod knn;
mod list;
mod wrmf;

pub use knn::{ItemKnn, UserKnn};
pub use list::{read_lists, write_lists, RankedList};
pub use wrmf::{Wrmf, WrmfConfig};

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::data::BinaryMatrix;
use crate::{Error, Result};

/// Anything that can produce a top-`n` list for a training user.
pub trait Recommender: Sync {
    /// Items the user consumed in training are never returned.
    fn recommend(&self, user: usize, n: usize) -> RankedList;

    fn n_users(&self) -> usize;

    /// Lists for every user, in user order.
    fn recommend_all(&self, n: usize) -> Vec<RankedList> {
        (0..self.n_users())
            .into_par_iter()
            .map(|u| self.recommend(u, n))
            .collect()
    }
}

/// Global ranking by consumption count; ties go to the lower index.
#[derive(Debug, Clone)]
pub struct Popularity {
    train: BinaryMatrix,
    order: Vec<(usize, f64)>,
}

impl Popularity {
    pub fn train(train: &BinaryMatrix) -> Result<Self> {
        if train.n_items() == 0 {
            return Err(Error::Empty("popularity needs at least one item".into()));
        }
        let mut order: Vec<(usize, f64)> = train
            .column_sizes()
            .into_iter()
            .enumerate()
            .map(|(i, c)| (i, c as f64))
            .collect();
        order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        Ok(Popularity {
            train: train.clone(),
            order,
        })
    }

    /// Items by descending count.
    pub fn order(&self) -> &[(usize, f64)] {
        &self.order
    }

    /// Appends popular items the user has not consumed and `list` does not
    /// hold yet, with score 0, until `list` has `n` entries.
    fn fill(&self, user: usize, list: &mut Vec<(usize, f64)>, n: usize) {
        if list.len() >= n {
            return;
        }
        let consumed = self.train.row(user);
        let mut taken: Vec<usize> = list.iter().map(|e| e.0).collect();
        taken.sort_unstable();
        for &(i, _) in &self.order {
            if list.len() == n {
                break;
            }
            if consumed.binary_search(&(i as u32)).is_err() && taken.binary_search(&i).is_err() {
                list.push((i, 0.0));
            }
        }
    }
}

impl Recommender for Popularity {
    fn recommend(&self, user: usize, n: usize) -> RankedList {
        let consumed = self.train.row(user);
        let entries = self
            .order
            .iter()
            .filter(|(i, _)| consumed.binary_search(&(*i as u32)).is_err())
            .take(n)
            .copied()
            .collect();
        RankedList { user, entries }
    }

    fn n_users(&self) -> usize {
        self.train.n_users()
    }
}

/// Top `n` of `(item, score)` by score descending, ties to the lower index.
pub(crate) fn top_n(mut scored: Vec<(usize, f64)>, n: usize) -> Vec<(usize, f64)> {
    let cmp = |a: &(usize, f64), b: &(usize, f64)| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0));
    if scored.len() > n && n > 0 {
        scored.select_nth_unstable_by(n - 1, cmp);
        scored.truncate(n);
    }
    scored.truncate(n);
    scored.sort_by(cmp);
    scored
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecommenderKind {
    Popularity,
    ItemKnn,
    UserKnn,
    Wrmf,
}

impl FromStr for RecommenderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pop" | "popularity" => Ok(RecommenderKind::Popularity),
            "itemknn" | "item-knn" => Ok(RecommenderKind::ItemKnn),
            "userknn" | "user-knn" => Ok(RecommenderKind::UserKnn),
            "wrmf" | "als" => Ok(RecommenderKind::Wrmf),
            _ => Err(Error::invalid(format!(
                "unknown recommender {s:?} (expected popularity, itemknn, userknn or wrmf)"
            ))),
        }
    }
}

impl fmt::Display for RecommenderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RecommenderKind::Popularity => "popularity",
            RecommenderKind::ItemKnn => "itemknn",
            RecommenderKind::UserKnn => "userknn",
            RecommenderKind::Wrmf => "wrmf",
        })
    }
}

/// Hyperparameters for [`train_base`].
#[derive(Debug, Clone, PartialEq)]
pub struct BaseParams {
    pub neighbors: usize,
    pub wrmf: WrmfConfig,
}

impl Default for BaseParams {
    fn default() -> Self {
        BaseParams {
            neighbors: 100,
            wrmf: WrmfConfig::default(),
        }
    }
}

pub fn train_base(
    kind: RecommenderKind,
    train: &BinaryMatrix,
    params: &BaseParams,
) -> Result<Box<dyn Recommender>> {
    Ok(match kind {
        RecommenderKind::Popularity => Box::new(Popularity::train(train)?),
        RecommenderKind::ItemKnn => Box::new(ItemKnn::train(train, params.neighbors)?),
        RecommenderKind::UserKnn => Box::new(UserKnn::train(train, params.neighbors)?),
        RecommenderKind::Wrmf => Box::new(Wrmf::train(train, &params.wrmf)?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn popularity_orders_by_count_then_index() {
        // counts: item0 2, item1 3, item2 2, item3 0
        let m = BinaryMatrix::from_dense(&[vec![1, 1, 0, 0], vec![1, 1, 1, 0], vec![0, 1, 1, 0]]);
        let p = Popularity::train(&m).unwrap();
        let order: Vec<usize> = p.order().iter().map(|e| e.0).collect();
        assert_eq!(order, vec![1, 0, 2, 3]);
        let top = (0..4)
            .max_by(|&a, &b| m.col(a).len().cmp(&m.col(b).len()).then(b.cmp(&a)))
            .unwrap();
        assert_eq!(order[0], top);
        let l = p.recommend(2, 10);
        assert_eq!(l.items().collect::<Vec<_>>(), vec![0, 3]);
    }

    #[test]
    fn equal_counts_fall_back_to_index_order() {
        let m = BinaryMatrix::from_dense(&[vec![1, 1, 1], vec![0, 0, 0]]);
        let l = Popularity::train(&m).unwrap().recommend(1, 3);
        assert_eq!(l.items().collect::<Vec<_>>(), vec![0, 1, 2]);
    }

    #[test]
    fn top_n_breaks_ties_by_index() {
        let s = vec![(4, 1.0), (2, 1.0), (0, 0.5), (3, 2.0)];
        assert_eq!(top_n(s.clone(), 3), vec![(3, 2.0), (2, 1.0), (4, 1.0)]);
        assert_eq!(top_n(s, 10).len(), 4);
    }

    #[test]
    fn kinds_parse() {
        for k in ["popularity", "itemknn", "userknn", "wrmf"] {
            assert_eq!(k.parse::<RecommenderKind>().unwrap().to_string(), k);
        }
        assert!("bpr".parse::<RecommenderKind>().is_err());
    }
}
