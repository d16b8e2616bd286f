use super::{top_n, Popularity, RankedList, Recommender};
use crate::data::BinaryMatrix;
use crate::similarity::{cosine_item_pairs_with, CosineOptions};
use crate::{Error, Result};

fn knn_options() -> CosineOptions {
    CosineOptions {
        allow_empty_columns: true,
        ..CosineOptions::default()
    }
}

/// Similarity-weighted item voting over each item's top-k neighbours.
#[derive(Debug, Clone)]
pub struct ItemKnn {
    train: BinaryMatrix,
    /// `voters[j]` lists `(i, sim(i, j))` for every `i` that keeps `j`
    /// among its top-k neighbours.
    voters: Vec<Vec<(u32, f64)>>,
    pop: Popularity,
}

impl ItemKnn {
    pub fn train(train: &BinaryMatrix, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("item-KNN needs at least one neighbour"));
        }
        let sim = cosine_item_pairs_with(train, &knn_options())?;
        let mut voters = vec![Vec::new(); train.n_items()];
        for i in 0..train.n_items() {
            for (j, s) in sim.top_k(i, k) {
                voters[j as usize].push((i as u32, s));
            }
        }
        Ok(ItemKnn {
            train: train.clone(),
            voters,
            pop: Popularity::train(train)?,
        })
    }

    /// Scores of every item for `user`; consumed items included.
    pub fn scores(&self, user: usize) -> Vec<f64> {
        let mut s = vec![0.0; self.train.n_items()];
        for &j in self.train.row(user) {
            for &(i, v) in &self.voters[j as usize] {
                s[i as usize] += v;
            }
        }
        s
    }
}

/// Shared tail of both KNN scorers: drop consumed and zero scores, rank,
/// fill with popularity.
fn finish(
    pop: &Popularity,
    train: &BinaryMatrix,
    user: usize,
    scores: Vec<f64>,
    n: usize,
) -> RankedList {
    let consumed = train.row(user);
    if consumed.is_empty() {
        return pop.recommend(user, n);
    }
    let scored: Vec<(usize, f64)> = scores
        .into_iter()
        .enumerate()
        .filter(|&(i, s)| s > 0.0 && consumed.binary_search(&(i as u32)).is_err())
        .collect();
    let mut entries = top_n(scored, n);
    pop.fill(user, &mut entries, n);
    RankedList::new(user, entries)
}

impl Recommender for ItemKnn {
    fn recommend(&self, user: usize, n: usize) -> RankedList {
        finish(&self.pop, &self.train, user, self.scores(user), n)
    }

    fn n_users(&self) -> usize {
        self.train.n_users()
    }
}

/// Votes of the user's top-k most similar users, weighted by similarity.
#[derive(Debug, Clone)]
pub struct UserKnn {
    train: BinaryMatrix,
    neighbours: Vec<Vec<(u32, f64)>>,
    pop: Popularity,
}

impl UserKnn {
    pub fn train(train: &BinaryMatrix, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("user-KNN needs at least one neighbour"));
        }
        let sim = cosine_item_pairs_with(&train.transposed(), &knn_options())?;
        let neighbours = (0..train.n_users()).map(|u| sim.top_k(u, k)).collect();
        Ok(UserKnn {
            train: train.clone(),
            neighbours,
            pop: Popularity::train(train)?,
        })
    }

    pub fn neighbours(&self, user: usize) -> &[(u32, f64)] {
        &self.neighbours[user]
    }

    pub fn scores(&self, user: usize) -> Vec<f64> {
        let mut s = vec![0.0; self.train.n_items()];
        for &(v, w) in &self.neighbours[user] {
            for &i in self.train.row(v as usize) {
                s[i as usize] += w;
            }
        }
        s
    }
}

impl Recommender for UserKnn {
    fn recommend(&self, user: usize, n: usize) -> RankedList {
        finish(&self.pop, &self.train, user, self.scores(user), n)
    }

    fn n_users(&self) -> usize {
        self.train.n_users()
    }
}
