//! Diverse M-best labelings of discrete pairwise CRFs via the Herding
//! dynamical system.
//!
//! divMbest is available both literally ([`herding::divmbest_run`]) and as
//! Herding with zero unary moments and a frozen pairwise block
//! ([`herding::divmbest_as_herding`]); the two produce identical sequences.

pub mod crf;
pub mod error;
pub mod experiment;
pub mod herding;
pub mod inference;
pub mod moments;
pub mod scene;
pub mod seg;

pub use crf::{
    energy, inner_product, sufficient_stats, unary_similarity, CrfGraph, CrfInstance, LabelSpace, Labeling,
    PairwiseLayout, StatVector,
};
pub use error::{CrfError, Result};
pub use herding::{
    divmbest_run, herding_run, herding_step, reconstruction_error, HerdingConfig, HypothesisSet, Sampler,
};
pub use inference::{map_bruteforce, map_elimination, map_lbp, Inference, LbpConfig, MapResult};
pub use moments::{moments_from_unary, moments_full, moments_zero, validate_polytope, MomentSpec};
