//! Square-root amplitude networks, QR isometrization, circuit export,
//! block entanglement spectra and perplexity lower bounds.
//!
//! Replacing every probability by its square root turns a tree of MERGE
//! tensors into a tree tensor network for the state
//! `|ψ⟩ = Σ_w ψ(w) |w⟩`, `ψ(w) = Σ_c Π √(factors)`. When every word has a
//! single category and every `(α, β)` merges into a single `γ`,
//! `ψ(w)² = p(w)` and `⟨ψ|ψ⟩ = Z(T_n)`.

mod block;
mod circuit;

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::tensor_bank::{BankError, Level, MergeTensor, MergeTensorBank, TensorKey};
use crate::treebank::{Coord, Skeleton, TreeShape};

pub use block::{
    block_spectrum, entanglement, perplexity_lower_bound, EntanglementSpectrum, Entropies, PerplexityBound,
    MAX_BLOCK_DIM,
};
pub use circuit::{circuit_string, export_circuit, load_circuit, parse_circuit, Circuit, Gate, MAX_QUDIT_DIM};

/// Tolerance for declaring a diagonal of `R` zero.
const RANK_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectralError {
    #[error(transparent)]
    Bank(#[from] BankError),
    #[error("partition function is zero")]
    ZeroPartition,
    #[error("empty block")]
    EmptyBlock,
    #[error("block [{start}, {end}) outside a sentence of {n} words")]
    BlockOutOfRange { start: usize, end: usize, n: usize },
    #[error("{what} {size} exceeds {max}")]
    BlockTooLarge { what: &'static str, size: u128, max: u128 },
    #[error("block is covered by {cuts} subtrees, not one")]
    NotASubtreeBlock { cuts: usize },
    #[error("closed-form spectrum unavailable: block and environment weights are not diagonal")]
    NoClosedForm,
    #[error("every category has zero weight")]
    ZeroWeight,
    #[error("qudit dimension {dim} exceeds {max}")]
    CircuitTooLarge { dim: usize, max: usize },
    #[error("gate at node {node} is not unitary (error {error:e})")]
    NotUnitary { node: usize, error: f64 },
    #[error("malformed circuit file at line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("i/o error: {0}")]
    Io(String),
}

/// Elementwise square root of a MERGE tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeTensor {
    n: usize,
    data: Vec<f64>,
}

impl AmplitudeTensor {
    pub fn from_merge(m: &MergeTensor) -> Self {
        AmplitudeTensor { n: m.dim(), data: m.as_slice().iter().map(|x| x.max(0.0).sqrt()).collect() }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize, g: usize) -> f64 {
        self.data[(a * self.n + b) * self.n + g]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// `Σ_{α,β} A[α,β,γ] A[α,β,γ′]`.
    pub fn gram(&self) -> DMatrix<f64> {
        let n = self.n;
        DMatrix::from_fn(n, n, |g, h| (0..n * n).map(|ab| self.data[ab * n + g] * self.data[ab * n + h]).sum())
    }

    /// `A[·,·,γ]` as an `n × n` matrix over `(α, β)`.
    fn slice(&self, g: usize) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |a, b| self.get(a, b, g))
    }
}

/// Amplitude tensors for every key of a bank, plus `√P(c | w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeBank {
    level: Level,
    tensors: BTreeMap<TensorKey, AmplitudeTensor>,
    fallback: AmplitudeTensor,
    /// `V × N_l`.
    lexical: DMatrix<f64>,
}

/// Elementwise square roots of every tensor in `bank`.
pub fn amplitudes(bank: &MergeTensorBank) -> AmplitudeBank {
    let n = bank.n_categories();
    let fallback = if bank.lambda() > 0.0 { MergeTensor::uniform(n) } else { MergeTensor::zeros(n) };
    let lex = bank.lexical();
    AmplitudeBank {
        level: bank.level(),
        tensors: bank.tensors().iter().map(|(k, t)| (k.clone(), AmplitudeTensor::from_merge(t))).collect(),
        fallback: AmplitudeTensor::from_merge(&fallback),
        lexical: DMatrix::from_fn(bank.n_words(), n, |w, c| lex.get(w, c).sqrt()),
    }
}

impl AmplitudeBank {
    pub fn tensors(&self) -> &BTreeMap<TensorKey, AmplitudeTensor> {
        &self.tensors
    }

    pub fn n_categories(&self) -> usize {
        self.lexical.ncols()
    }

    pub fn n_words(&self) -> usize {
        self.lexical.nrows()
    }

    /// `√P(c | w)` as a `V × N_l` matrix.
    pub fn lexical(&self) -> &DMatrix<f64> {
        &self.lexical
    }

    pub fn tensor_at(&self, shape: &TreeShape, coord: Coord) -> Result<&AmplitudeTensor, BankError> {
        let key = TensorKey::for_node(self.level, shape, coord);
        if let Some(t) = self.tensors.get(&key) {
            return Ok(t);
        }
        if let TensorKey::Tree(s, _, _) = &key {
            let lo = TensorKey::Tree(s.clone(), 0, 0);
            let hi = TensorKey::Tree(s.clone(), u32::MAX, u32::MAX);
            if self.tensors.range(lo..=hi).next().is_none() {
                return Err(BankError::UnknownShape(s.to_string()));
            }
        }
        Ok(&self.fallback)
    }

    fn resolve(&self, skel: &Skeleton) -> Result<Vec<Option<&AmplitudeTensor>>, BankError> {
        skel.nodes()
            .iter()
            .map(|n| match n.children {
                Some(_) => self.tensor_at(skel.shape(), n.coord).map(Some),
                None => Ok(None),
            })
            .collect()
    }
}

/// Isometry of one internal node: rows index `(left leg, right leg)`
/// row-major, columns index the bond to the parent.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeIsometry {
    pub q: DMatrix<f64>,
    pub left_dim: usize,
    pub right_dim: usize,
}

impl NodeIsometry {
    pub fn bond_dim(&self) -> usize {
        self.q.ncols()
    }

    /// `max |QᵀQ − I|`.
    pub fn isometry_error(&self) -> f64 {
        let g = self.q.transpose() * &self.q;
        let k = g.nrows();
        (g - DMatrix::<f64>::identity(k, k)).abs().max()
    }
}

/// Result of the bottom-up QR sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct IsometricNetwork {
    pub skeleton: Skeleton,
    /// Per node id; `None` for leaves.
    pub isometries: Vec<Option<NodeIsometry>>,
    /// Top vector; `‖Ω‖² = ⟨ψ|ψ⟩`.
    pub omega: Vec<f64>,
    /// Internal nodes whose `R` factor had a zero diagonal entry.
    pub rank_deficient: Vec<usize>,
    pub n_categories: usize,
    pub n_words: usize,
}

impl IsometricNetwork {
    pub fn omega_norm_sq(&self) -> f64 {
        self.omega.iter().map(|x| x * x).sum()
    }

    /// Largest `max |QᵀQ − I|` over all nodes.
    pub fn max_isometry_error(&self) -> f64 {
        self.isometries.iter().flatten().map(NodeIsometry::isometry_error).fold(0.0, f64::max)
    }
}

/// Bottom-up QR sweep. Each node's amplitude tensor, with its children's
/// `R` factors absorbed, is reshaped to `(left leg · right leg) × γ` and
/// factored as `Q·R`; leaf legs carry the word index through `√P(c | w)`.
/// The root's `R` summed over the root category is `Ω`.
pub fn isometrize(skel: &Skeleton, amps: &AmplitudeBank) -> Result<IsometricNetwork, SpectralError> {
    let tensors = amps.resolve(skel)?;
    let n = amps.n_categories();
    let mut carry: Vec<Option<DMatrix<f64>>> = vec![None; skel.len()];
    let mut isometries = vec![None; skel.len()];
    let mut rank_deficient = Vec::new();
    for (id, node) in skel.nodes().iter().enumerate() {
        match node.children {
            None => carry[id] = Some(amps.lexical.clone()),
            Some((l, r)) => {
                let cl = carry[l].take().expect("child processed");
                let cr = carry[r].take().expect("child processed");
                let (dl, dr) = (cl.nrows(), cr.nrows());
                let a = tensors[id].expect("internal");
                let mut t = DMatrix::<f64>::zeros(dl * dr, n);
                for g in 0..n {
                    let tg = &cl * a.slice(g) * cr.transpose();
                    for x in 0..dl {
                        for y in 0..dr {
                            t[(x * dr + y, g)] = tg[(x, y)];
                        }
                    }
                }
                let qr = t.qr();
                let (q, rmat) = (qr.q(), qr.r());
                let scale = rmat.abs().max();
                let k = rmat.nrows().min(n);
                if (0..k).any(|i| rmat[(i, i)].abs() <= RANK_TOLERANCE * scale.max(f64::MIN_POSITIVE)) {
                    rank_deficient.push(id);
                }
                isometries[id] = Some(NodeIsometry { q, left_dim: dl, right_dim: dr });
                carry[id] = Some(rmat);
            }
        }
    }
    let top = carry[skel.root()].take().expect("root processed");
    let omega = (0..top.nrows()).map(|i| top.row(i).sum()).collect();
    Ok(IsometricNetwork {
        skeleton: skel.clone(),
        isometries,
        omega,
        rank_deficient,
        n_categories: n,
        n_words: amps.n_words(),
    })
}

/// `ψ(w)` for every word tuple, by direct contraction of the isometric
/// network (`V^n` entries; for checks on small trees).
pub fn network_state(net: &IsometricNetwork) -> Vec<f64> {
    let sk = &net.skeleton;
    // amplitude tensor of each subtree: (leaves in span, row-major) × bond
    let mut sub: Vec<Option<DMatrix<f64>>> = vec![None; sk.len()];
    for (id, node) in sk.nodes().iter().enumerate() {
        match node.children {
            None => sub[id] = Some(DMatrix::identity(net.n_words, net.n_words)),
            Some((l, r)) => {
                let iso = net.isometries[id].as_ref().expect("internal");
                let sl = sub[l].take().expect("child");
                let sr = sub[r].take().expect("child");
                // out[(xs_l, xs_r), k] = Σ_{a,b} sl[xs_l, a] sr[xs_r, b] Q[(a,b), k]
                let k = iso.bond_dim();
                let mut out = DMatrix::<f64>::zeros(sl.nrows() * sr.nrows(), k);
                for c in 0..k {
                    let qk = DMatrix::from_fn(iso.left_dim, iso.right_dim, |a, b| iso.q[(a * iso.right_dim + b, c)]);
                    let m = &sl * qk * sr.transpose();
                    for x in 0..sl.nrows() {
                        for y in 0..sr.nrows() {
                            out[(x * sr.nrows() + y, c)] = m[(x, y)];
                        }
                    }
                }
                sub[id] = Some(out);
            }
        }
    }
    let top = sub[sk.root()].take().expect("root");
    let omega = nalgebra::DVector::from_vec(net.omega.clone());
    (top * omega).iter().copied().collect()
}
