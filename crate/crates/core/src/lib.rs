//! Syntactic tensor-network language models.
//!
//! A parsed sentence is a binary tree whose internal nodes are MERGE
//! operations. Each MERGE is modeled by a 3-index stochastic tensor
//! `M[α, β, γ]` (left child category, right child category, parent
//! category), and each leaf by a row of the lexical matrix `P(category |
//! word)`. With the tree fixed, the probability of a labeled sentence is a
//! plain product of tensor entries; summing over free indices is a
//! loop-free tensor-network contraction.
//!
//! The crate is organized as
//!
//! * [`treebank`]: bracketed tree parsing, binarization, ⟨z,t⟩ coordinates,
//!   tree shapes and their enumeration.
//! * [`tensor_bank`]: estimation, validation and persistence of MERGE
//!   tensors at four refinement levels.
//! * [`prob_model`]: sentence probabilities, brute-force contraction,
//!   partition functions, masked-word marginals, sampling and the 1-gram
//!   baseline.
//! * [`correlations`]: syntactic distance, exact two-point correlations and
//!   mutual information, decay fits.
//! * [`spectral`]: square-root amplitude networks, QR isometrization,
//!   circuit export, block entanglement spectra and perplexity bounds.

pub mod correlations;
pub mod prob_model;
pub mod spectral;
pub mod tensor_bank;
pub mod treebank;

mod contraction;
