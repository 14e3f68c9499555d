//! Personalized dictionary learning.
//!
//! Each client holds data generated from a dictionary whose first atoms are
//! shared by every client (the global part) and whose remaining atoms are its
//! own (the local part). This crate recovers both parts with a federated
//! matching-and-averaging loop:
//!
//! 1. every client warm-starts its own dictionary ([`dl::warm_start`]);
//! 2. the server identifies the shared atoms by repeated shortest paths over a
//!    layered graph of client atoms ([`matching::global_matching`]);
//! 3. clients alternate one dictionary-learning step with re-identification of
//!    the global atoms ([`perma::local_update`]) and the server averages the
//!    global parts ([`perma::run_perma`]).
//!
//! Distances are invariant to signed permutations of atoms ([`distance`]).

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assignment;
pub mod dictionary;
pub mod distance;
pub mod dl;
pub mod error;
pub mod ingest;
pub mod matching;
pub mod perma;
pub mod rng;
pub mod synthgen;

pub use dictionary::{Dictionary, PartitionedDictionary, SignedPermutation, SparseCode};
pub use distance::{dist_12, dist_2_columns, estimate_beta, incoherence, vector_d2};
pub use error::{Error, Result};
