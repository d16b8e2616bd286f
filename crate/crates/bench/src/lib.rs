//! Shared fixtures for the criterion benches.

use hltf_core::recommend::{train_base, BaseParams, RecommenderKind};
use hltf_core::synth::{PlantedConfig, PlantedHierarchy};
use hltf_core::{BinaryMatrix, Hltm, LearnerConfig, RankedList};

/// Users sampled from the 192-item three-level planted hierarchy.
pub fn planted(users: usize) -> BinaryMatrix {
    PlantedHierarchy::new(&PlantedConfig::three_level_wide()).sample(users, 7)
}

pub fn learned(data: &BinaryMatrix) -> Hltm {
    hltf_core::hierarchy::hlta_forest(data, 4, &LearnerConfig::default())
        .expect("planted data learns")
}

/// Item-KNN lists of length `n` for every user.
pub fn base_lists(train: &BinaryMatrix, n: usize) -> Vec<RankedList> {
    train_base(RecommenderKind::ItemKnn, train, &BaseParams::default())
        .expect("knn trains")
        .recommend_all(n)
}
