//! Hierarchical item categories learned from implicit feedback.
//!
//! The crate covers the whole pipeline: ingesting consumption events into a
//! sparse binary user × item matrix, growing a forest of binary latent class
//! models layer by layer (each layer's latents become the observed variables
//! of the next), labelling categories with their most informative items, and
//! using the resulting partition to re-rank and explain the lists produced by
//! ordinary top-N recommenders.
//!
//! Module map:
//!
//! - [`data`]: event logs, vocabularies, the [`BinaryMatrix`] and its file format.
//! - [`similarity`]: sparse cosine similarity between item columns.
//! - [`ltm`]: binary latent tree models, exact inference, EM, BIC and mutual information.
//! - [`forest`]: one flat layer of categories.
//! - [`hierarchy`]: stacking layers into an [`Hltm`], representatives and export.
//! - [`recommend`]: popularity, item/user KNN and WRMF base recommenders.
//! - [`car`]: category-aware re-ranking and explanations.
//! - [`eval`]: accuracy and diversity metrics plus the experiment harness.
//! - [`synth`]: planted generators used by tests, benches and demos.

pub mod car;
pub mod data;
mod error;
pub mod eval;
pub mod forest;
pub mod hierarchy;
pub mod ltm;
pub mod recommend;
mod rng;
pub mod similarity;
pub mod synth;

pub use error::{Error, Result};
pub use rng::stream_rng;

pub use car::{CarConfig, CarPlan, CategoryIndex};
pub use data::{BinaryMatrix, InteractionLog, Vocabulary};
pub use forest::{Category, FlatForest, LearnerConfig};
pub use hierarchy::{HierarchyExport, Hltm, NodeId};
pub use ltm::{ConditionalTable, LatentTreeModel, VarKind, Variable};
pub use recommend::RankedList;
pub use similarity::SparseSimilarity;
