//! Tensor-rank tools for studying how single-layer attention-only
//! transformers memorize databases of `(subject, predicate, object)` facts.
//!
//! * [`db`] parses and generates databases, exposing the index sets that
//!   rank bounds are computed from.
//! * [`tensor`] builds the 0/1 database tensor and measures matrix and
//!   (heuristically) tensor rank.
//! * [`attention`] is the attention layer itself: circuits, the masked
//!   forward pass, and the layer tensor `L = E + Σ_h A^h V^h`.
//! * [`training`] fits a layer to a database with exact gradients.
//! * [`eval`] scores logits with argmax and thresholded softmax.
//! * [`rank_fx`] constructs matrices whose rank argmax/softmax inflate.
//! * [`experiments`] runs seeded sweeps and renders their summaries.

pub mod attention;
pub mod db;
pub mod error;
pub mod eval;
pub mod experiments;
pub mod fixtures;
pub mod rank_fx;
pub mod rng;
pub mod tensor;
pub mod training;

pub use attention::{
    build_bundle, circuits, forward, init_weights, layer_rank_bounds, memorization_condition,
    CircuitSet, HeadWeights, LayerConfig, LayerTensorBundle, LayerWeights, RankBounds,
};
pub use db::{parse_triples, random_database, Database, DbConfig, DbStats, Token, Triple};
pub use error::{Error, Result};
pub use eval::{
    argmax_accuracy, argmax_rows, memorizes, softmax_rows, softmax_threshold, tau_accuracy, Tau,
};
pub use tensor::{db_rank_upper_bound, db_tensor, matrix_rank, Matrix, RankTol, Tensor3};
pub use training::{gradients, loss, train, Optimizer, TrainConfig, TrainReport};
