//! Projective gender-debiasing interventions inside a toy BERT-style
//! encoder, with the intrinsic (triple-pair strength/distance) and
//! downstream (NLI fairness) bias measures used to evaluate them.
//!
//! The crate is organized around the evaluation pipeline:
//!
//! - [`linalg`] - dense matrices, PCA, and the projection primitive;
//! - [`encoder`] - the toy transformer with intervention hook points;
//! - [`subspace`] - gender-subspace estimation from swapped sentence pairs;
//! - [`interventions`] - the configuration grid and hook binding;
//! - [`stereoset`] - triple-pair scoring and intrinsic bias metrics;
//! - [`nli`] - the gender-occupation probe set and fairness score;
//! - [`synthetic`] - seeded models and datasets for testing and demos.

pub mod data;
pub mod encoder;
pub mod error;
pub mod interventions;
pub mod linalg;
pub mod nli;
pub mod stereoset;
pub mod subspace;
pub mod synthetic;

pub use encoder::{
    tokenize, tokenize_single, AttnRole, EncoderConfig, EncoderModel, ForwardHooks, ForwardTrace,
    HeadKind, TensorArchive, Vocab,
};
pub use error::{Error, Result};
pub use interventions::{bind, enumerate_grid, DebiasConfig, HookSet, Level};
pub use linalg::{pca, pca_with, project_out, Basis, Matrix};
pub use nli::{
    evaluate_fairness, fairness_eta, generate_probes, FairnessReport, NliExample, NliLabel,
    NliProbe, NliTemplate,
};
pub use stereoset::{
    distance, pair_distance, pair_strength, score_triples, spearman, ss_score, strength,
    CorrelationResult, Triple, TriplePair, TripleScores,
};
pub use subspace::{
    collect_differences, estimate, GenderPair, GenderPairSet, GenderSubspace, Location,
    SubspaceSet,
};
