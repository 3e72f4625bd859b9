//! Reduced density spectra of contiguous blocks.
//!
//! A block `[start, start + len)` is covered by `k` maximal subtrees. Cutting
//! their root edges writes `ψ = Σ_{α₁..α_k} W(w_block, α) E(w_env, α)`, so
//! the nonzero spectrum of `ρ_block` is that of `G^{1/2} X G^{1/2}` with
//! `G = WᵀW` (a Kronecker product of per-subtree Gram matrices) and
//! `X = EᵀE`. Both come from "doubled" contractions carrying a pair of
//! category indices per edge.
//!
//! For a single-subtree block whose `G` and `X` are diagonal and agree with
//! the inside weight `p_α` and outside weight `q_α`, the eigenvalues are
//! `λ_α = p_α q_α / Z`.

use nalgebra::{DMatrix, SymmetricEigen};

use super::{amplitudes, AmplitudeTensor, SpectralError};
use crate::contraction::Contraction;
use crate::prob_model::entropy_bits;
use crate::tensor_bank::MergeTensorBank;
use crate::treebank::Skeleton;

/// Largest `N_l^k` accepted for a block covered by `k` subtrees.
pub const MAX_BLOCK_DIM: u128 = 4096;
/// Largest number of entries of one doubled environment tensor.
const MAX_DOUBLED_ENTRIES: u128 = 1 << 24;
const DIAGONAL_TOLERANCE: f64 = 1e-13;
const CLOSED_FORM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct EntanglementSpectrum {
    /// Eigenvalues; indexed by category when `closed_form`, otherwise sorted
    /// in decreasing order.
    pub lambdas: Vec<f64>,
    pub start: usize,
    pub len: usize,
    /// Number of maximal subtrees covering the block.
    pub cuts: usize,
    /// The block is exactly the leaf set of one subtree.
    pub subtree: bool,
    pub closed_form: bool,
    /// Inside and outside weights `(p_α, q_α)` of a subtree block.
    pub weights: Option<Vec<(f64, f64)>>,
    /// `ln Z(T_n)`.
    pub log_z: f64,
}

/// Doubled object: one `N × N` matrix per assignment of the open cut index
/// pairs, scaled by `e^log`.
#[derive(Clone)]
struct Doubled {
    cuts: usize,
    mats: Vec<DMatrix<f64>>,
    log: f64,
}

impl Doubled {
    fn scaled(cuts: usize, mut mats: Vec<DMatrix<f64>>, log: f64) -> Self {
        let m = mats.iter().map(|x| x.abs().max()).fold(0.0, f64::max);
        if m == 0.0 {
            return Doubled { cuts, mats, log: f64::NEG_INFINITY };
        }
        mats.iter_mut().for_each(|x| *x /= m);
        Doubled { cuts, mats, log: log + m.ln() }
    }

    fn open(n: usize) -> Self {
        let mats =
            (0..n * n).map(|c| DMatrix::from_fn(n, n, |g, h| f64::from(u8::from(g == c / n && h == c % n)))).collect();
        Doubled { cuts: 1, mats, log: 0.0 }
    }

    fn total(&self) -> Vec<f64> {
        self.mats.iter().map(|m| m.sum()).collect()
    }
}

fn combine(a: &AmplitudeTensor, l: &Doubled, r: &Doubled) -> Doubled {
    let n = a.dim();
    // t1[c_l][(α′, β), γ] = Σ_α L[α, α′] A[α, β, γ]
    let t1: Vec<DMatrix<f64>> = l
        .mats
        .iter()
        .map(|lm| {
            DMatrix::from_fn(n * n, n, |ab, g| {
                let (ap, b) = (ab / n, ab % n);
                (0..n).map(|x| lm[(x, ap)] * a.get(x, b, g)).sum()
            })
        })
        .collect();
    // t2[c_r][(α′, β), γ′] = Σ_β′ R[β, β′] A[α′, β′, γ′]
    let t2: Vec<DMatrix<f64>> = r
        .mats
        .iter()
        .map(|rm| {
            DMatrix::from_fn(n * n, n, |ab, g| {
                let (ap, b) = (ab / n, ab % n);
                (0..n).map(|y| rm[(b, y)] * a.get(ap, y, g)).sum()
            })
        })
        .collect();
    let mut mats = Vec::with_capacity(t1.len() * t2.len());
    for x in &t1 {
        for y in &t2 {
            mats.push(x.transpose() * y);
        }
    }
    Doubled::scaled(l.cuts + r.cuts, mats, l.log + r.log)
}

fn leaf_doubled(amps_lex: &DMatrix<f64>) -> Doubled {
    Doubled::scaled(0, vec![amps_lex.transpose() * amps_lex], 0.0)
}

fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

fn is_diagonal(m: &DMatrix<f64>) -> bool {
    let scale = m.abs().max();
    (0..m.nrows()).all(|i| (0..m.ncols()).all(|j| i == j || m[(i, j)].abs() <= DIAGONAL_TOLERANCE * scale))
}

/// Spectrum of the reduced density operator of words `[start, start+len)`.
pub fn block_spectrum(
    skel: &Skeleton,
    bank: &MergeTensorBank,
    start: usize,
    len: usize,
) -> Result<EntanglementSpectrum, SpectralError> {
    let n_leaves = skel.n_leaves();
    if len == 0 {
        return Err(SpectralError::EmptyBlock);
    }
    let end = start + len;
    if end > n_leaves {
        return Err(SpectralError::BlockOutOfRange { start, end, n: n_leaves });
    }
    let tensors = bank.resolve(skel)?;
    let prob = Contraction::run(skel, &tensors, &vec![bank.lexical().column_sums(); n_leaves]);
    if prob.log_z == f64::NEG_INFINITY {
        return Err(SpectralError::ZeroPartition);
    }
    let cover = skel.cover(start, end);
    let k = cover.len();
    let subtree = k == 1;
    let mut spec = EntanglementSpectrum {
        lambdas: Vec::new(),
        start,
        len,
        cuts: k,
        subtree,
        closed_form: false,
        weights: None,
        log_z: prob.log_z,
    };
    if subtree {
        let v = cover[0];
        let (i, o) = (&prob.inside[v], &prob.outside[v]);
        spec.weights = Some(i.v.iter().zip(&o.v).map(|(a, b)| (a * i.log.exp(), b * o.log.exp())).collect());
    }
    if len == n_leaves {
        spec.lambdas = vec![1.0];
        spec.closed_form = true;
        return Ok(spec);
    }

    let n = bank.n_categories();
    let dim = (n as u128).checked_pow(k as u32).unwrap_or(u128::MAX);
    let doubled = (n as u128).checked_pow(2 * k as u32 + 2).unwrap_or(u128::MAX);
    if dim > MAX_BLOCK_DIM {
        return Err(SpectralError::BlockTooLarge { what: "block dimension", size: dim, max: MAX_BLOCK_DIM });
    }
    if doubled > MAX_DOUBLED_ENTRIES {
        return Err(SpectralError::BlockTooLarge {
            what: "doubled environment entries",
            size: doubled,
            max: MAX_DOUBLED_ENTRIES,
        });
    }

    let amps = amplitudes(bank);
    let atensors = amps.resolve(skel)?;
    let leaf = leaf_doubled(amps.lexical());
    // norm pass without cuts, and environment pass with the cover opened
    let mut plain: Vec<Option<Doubled>> = vec![None; skel.len()];
    let mut env: Vec<Option<Doubled>> = vec![None; skel.len()];
    let mut grams: Vec<(DMatrix<f64>, f64)> = Vec::with_capacity(k);
    for (id, node) in skel.nodes().iter().enumerate() {
        let (p, e) = match node.children {
            None => (leaf.clone(), leaf.clone()),
            Some((l, r)) => {
                let a = atensors[id].expect("internal");
                let p = combine(a, plain[l].as_ref().expect("child"), plain[r].as_ref().expect("child"));
                let e = combine(a, env[l].as_ref().expect("child"), env[r].as_ref().expect("child"));
                (p, e)
            }
        };
        if cover.contains(&id) {
            grams.push((p.mats[0].clone(), p.log));
            env[id] = Some(Doubled::open(n));
        } else {
            env[id] = Some(e);
        }
        plain[id] = Some(p);
    }
    let root = skel.root();
    let norm = plain[root].as_ref().expect("root");
    let log_norm = norm.total()[0].ln() + norm.log;
    let env_root = env[root].as_ref().expect("root");
    debug_assert_eq!(env_root.cuts, k);

    // X[(α₁..α_k), (α′₁..α′_k)] from cut digits c = Σ (α_j N + α′_j) (N²)^{k-1-j}
    let totals = env_root.total();
    let mut x = DMatrix::<f64>::zeros(dim as usize, dim as usize);
    for (c, &val) in totals.iter().enumerate() {
        let (mut row, mut col, mut rest) = (0usize, 0usize, c);
        let mut place = 1usize;
        for _ in 0..k {
            let digit = rest % (n * n);
            rest /= n * n;
            row += (digit / n) * place;
            col += (digit % n) * place;
            place *= n;
        }
        x[(row, col)] = val;
    }
    let (mut g, mut log_g) = (DMatrix::<f64>::identity(1, 1), 0.0);
    for (m, l) in &grams {
        g = kron(&g, m);
        log_g += l;
    }
    let scale = log_g + env_root.log - log_norm;

    if subtree && is_diagonal(&g) && is_diagonal(&x) {
        let closed: Vec<f64> = spec
            .weights
            .as_ref()
            .expect("subtree")
            .iter()
            .enumerate()
            .map(|(a, _)| {
                let (i, o) = (&prob.inside[cover[0]], &prob.outside[cover[0]]);
                if i.log == f64::NEG_INFINITY || o.log == f64::NEG_INFINITY {
                    0.0
                } else {
                    i.v[a] * o.v[a] * (i.log + o.log - prob.log_z).exp()
                }
            })
            .collect();
        let doubled_diag: Vec<f64> = (0..n).map(|a| g[(a, a)] * x[(a, a)] * scale.exp()).collect();
        if closed.iter().zip(&doubled_diag).all(|(c, d)| (c - d).abs() <= CLOSED_FORM_TOLERANCE) {
            spec.lambdas = closed;
            spec.closed_form = true;
            return Ok(spec);
        }
    }

    let eg = SymmetricEigen::new(g);
    let sqrt_g = &eg.eigenvectors
        * DMatrix::from_diagonal(&eg.eigenvalues.map(|v| v.max(0.0).sqrt()))
        * eg.eigenvectors.transpose();
    let m = &sqrt_g * x * &sqrt_g;
    let m = (&m + m.transpose()) * 0.5;
    let mut lambdas: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().map(|v| (v * scale.exp()).max(0.0)).collect();
    lambdas.sort_by(|a, b| b.total_cmp(a));
    spec.lambdas = lambdas;
    Ok(spec)
}

/// Entanglement entropy and single-copy entanglement, in bits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entropies {
    pub s: f64,
    pub e1: f64,
}

pub fn entanglement(spec: &EntanglementSpectrum) -> Entropies {
    let max = spec.lambdas.iter().copied().fold(0.0, f64::max);
    Entropies { s: entropy_bits(&spec.lambdas), e1: if max > 0.0 { -max.log2() } else { f64::INFINITY } }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerplexityBound {
    /// `min_α Z / (p_α q_α)`, equal to `2^{E1}`.
    pub bound: f64,
    /// `min_α 1 / (p_α q_α)` without dividing by `Z`.
    pub unnormalized: f64,
    pub entropies: Entropies,
    pub spectrum: EntanglementSpectrum,
}

impl PerplexityBound {
    /// `2^{E1} ≤ 2^S`, the chain below the block perplexity.
    pub fn witnesses(&self) -> (f64, f64) {
        (self.entropies.e1.exp2(), self.entropies.s.exp2())
    }
}

/// Lower bound on the perplexity of the block's word distribution from the
/// closed-form spectrum of a subtree block.
pub fn perplexity_lower_bound(
    skel: &Skeleton,
    bank: &MergeTensorBank,
    start: usize,
    len: usize,
) -> Result<PerplexityBound, SpectralError> {
    let spectrum = block_spectrum(skel, bank, start, len)?;
    if !spectrum.subtree {
        return Err(SpectralError::NotASubtreeBlock { cuts: spectrum.cuts });
    }
    if !spectrum.closed_form {
        return Err(SpectralError::NoClosedForm);
    }
    let pq_max = spectrum.weights.as_ref().expect("subtree").iter().map(|(p, q)| p * q).fold(0.0, f64::max);
    if pq_max <= 0.0 {
        return Err(SpectralError::ZeroWeight);
    }
    let lmax = spectrum.lambdas.iter().copied().fold(0.0, f64::max);
    let entropies = entanglement(&spectrum);
    Ok(PerplexityBound { bound: 1.0 / lmax, unnormalized: 1.0 / pq_max, entropies, spectrum })
}
