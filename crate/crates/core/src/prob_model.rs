//! Sentence probabilities, partition functions, masked-word marginals,
//! sampling and the 1-gram baseline.
//!
//! For a fully labeled tree the probability is a plain product of
//! lexical and MERGE entries (no root factor):
//!
//! `p = Π_leaves P(c_i | w_i) · Π_internal M[c_left, c_right, c_parent]`.
//!
//! Summing that product over free indices gives [`contract_oracle`]; the
//! sum over everything for a fixed shape is the partition function
//! [`tree_partition`]. Log-probabilities are natural logarithms.

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::contraction::{inside, Contraction};
use crate::tensor_bank::{BankError, MergeTensor, MergeTensorBank};
use crate::treebank::{ParseTree, Skeleton};

/// Term budget of [`contract_oracle`] and [`block_marginal`].
pub const ORACLE_MAX_TERMS: u128 = 10_000_000;

/// Word used to mark the masked position of a [`MarginalQuery`].
pub const MASK: &str = "_";

/// Sentences per independent random stream in [`sample`].
pub const SAMPLE_CHUNK: usize = 1024;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProbError {
    #[error("unknown word `{0}`")]
    UnknownWord(String),
    #[error("unknown category `{0}`")]
    UnknownCategory(String),
    #[error(transparent)]
    Bank(#[from] BankError),
    #[error("{terms} terms exceed the limit of {max}")]
    LimitExceeded { terms: u128, max: u128 },
    #[error("partition function is zero")]
    ZeroPartition,
    #[error("invalid masked position: {0}")]
    MaskedPositionInvalid(String),
    #[error("not a probability distribution: {0}")]
    NotADistribution(String),
    #[error("expected {expected} entries, got {got}")]
    LengthMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct QueryOptions {
    /// Map words outside the vocabulary to the unknown-word row.
    pub map_unknown: bool,
}

pub fn resolve_word(bank: &MergeTensorBank, word: &str, opts: QueryOptions) -> Result<usize, ProbError> {
    match bank.grammar().word_index(word) {
        Some(i) => Ok(i),
        None if opts.map_unknown => Ok(bank.grammar().unk_index()),
        None => Err(ProbError::UnknownWord(word.to_string())),
    }
}

fn resolve_category(bank: &MergeTensorBank, c: &str) -> Result<usize, ProbError> {
    bank.grammar().category_index(c).ok_or_else(|| ProbError::UnknownCategory(c.to_string()))
}

/// A parse tree resolved to grammar indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentenceInstance {
    pub skeleton: Skeleton,
    /// Category index per node id.
    pub categories: Vec<usize>,
    /// Word index per leaf position.
    pub words: Vec<usize>,
}

impl SentenceInstance {
    pub fn new(tree: &ParseTree, bank: &MergeTensorBank, opts: QueryOptions) -> Result<Self, ProbError> {
        let categories = tree.categories().iter().map(|c| resolve_category(bank, c)).collect::<Result<_, _>>()?;
        let words = tree.words().iter().map(|w| resolve_word(bank, w, opts)).collect::<Result<_, _>>()?;
        Ok(SentenceInstance { skeleton: tree.skeleton().clone(), categories, words })
    }
}

fn ln(x: f64) -> f64 {
    if x > 0.0 {
        x.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// `ln p` of a fully labeled sentence by correlated factorization.
pub fn sentence_logprob(inst: &SentenceInstance, bank: &MergeTensorBank) -> Result<f64, ProbError> {
    let sk = &inst.skeleton;
    let lex = bank.lexical();
    let mut total = 0.0;
    for (id, node) in sk.nodes().iter().enumerate() {
        let c = inst.categories[id];
        let f = match node.children {
            None => lex.get(inst.words[node.span.0], c),
            Some((l, r)) => bank.tensor_at(sk.shape(), node.coord)?.get(inst.categories[l], inst.categories[r], c),
        };
        total += ln(f);
    }
    Ok(total)
}

/// [`sentence_logprob`] of a labeled tree, resolving labels first.
pub fn tree_logprob(tree: &ParseTree, bank: &MergeTensorBank, opts: QueryOptions) -> Result<f64, ProbError> {
    sentence_logprob(&SentenceInstance::new(tree, bank, opts)?, bank)
}

/// Partial assignment of categories (per node id) and words (per leaf).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    pub categories: Vec<Option<usize>>,
    pub words: Vec<Option<usize>>,
}

impl Assignment {
    pub fn free(skel: &Skeleton) -> Self {
        Assignment { categories: vec![None; skel.len()], words: vec![None; skel.n_leaves()] }
    }

    pub fn full(inst: &SentenceInstance) -> Self {
        Assignment {
            categories: inst.categories.iter().copied().map(Some).collect(),
            words: inst.words.iter().copied().map(Some).collect(),
        }
    }
}

fn check_budget(terms: u128) -> Result<(), ProbError> {
    if terms > ORACLE_MAX_TERMS {
        Err(ProbError::LimitExceeded { terms, max: ORACLE_MAX_TERMS })
    } else {
        Ok(())
    }
}

/// Brute-force sum of the full product over every unassigned index.
pub fn contract_oracle(skel: &Skeleton, bank: &MergeTensorBank, fixed: &Assignment) -> Result<f64, ProbError> {
    if fixed.categories.len() != skel.len() {
        return Err(ProbError::LengthMismatch { expected: skel.len(), got: fixed.categories.len() });
    }
    if fixed.words.len() != skel.n_leaves() {
        return Err(ProbError::LengthMismatch { expected: skel.n_leaves(), got: fixed.words.len() });
    }
    let (nc, nw) = (bank.n_categories(), bank.n_words());
    // odometer digits: free categories then free words
    let mut radix = Vec::new();
    let mut slots = Vec::new();
    for (id, c) in fixed.categories.iter().enumerate() {
        if c.is_none() {
            radix.push(nc);
            slots.push((true, id));
        }
    }
    for (p, w) in fixed.words.iter().enumerate() {
        if w.is_none() {
            radix.push(nw);
            slots.push((false, p));
        }
    }
    let terms = radix.iter().try_fold(1u128, |acc, &r| acc.checked_mul(r as u128)).unwrap_or(u128::MAX);
    check_budget(terms)?;
    let tensors = bank.resolve(skel)?;
    let mut cats: Vec<usize> = fixed.categories.iter().map(|c| c.unwrap_or(0)).collect();
    let mut words: Vec<usize> = fixed.words.iter().map(|w| w.unwrap_or(0)).collect();
    let mut digits = vec![0usize; radix.len()];
    let lex = bank.lexical();
    let mut sum = 0.0;
    loop {
        for (&(is_cat, k), &d) in slots.iter().zip(&digits) {
            if is_cat {
                cats[k] = d;
            } else {
                words[k] = d;
            }
        }
        let mut prod = 1.0;
        for (id, node) in skel.nodes().iter().enumerate() {
            prod *= match node.children {
                None => lex.get(words[node.span.0], cats[id]),
                Some((l, r)) => tensors[id].expect("internal").get(cats[l], cats[r], cats[id]),
            };
            if prod == 0.0 {
                break;
            }
        }
        sum += prod;
        let mut i = 0;
        loop {
            if i == digits.len() {
                return Ok(sum);
            }
            digits[i] += 1;
            if digits[i] < radix[i] {
                break;
            }
            digits[i] = 0;
            i += 1;
        }
    }
}

fn free_leaves(bank: &MergeTensorBank, n: usize) -> Vec<Vec<f64>> {
    vec![bank.lexical().column_sums(); n]
}

/// `ln Z(T_n)`: log of the total weight of all sentences with this shape.
pub fn log_partition(skel: &Skeleton, bank: &MergeTensorBank) -> Result<f64, ProbError> {
    let tensors = bank.resolve(skel)?;
    let ins = inside(skel, &tensors, &free_leaves(bank, skel.n_leaves()));
    Ok(ins[skel.root()].log_sum())
}

/// `Z(T_n)` by bottom-up contraction.
pub fn tree_partition(skel: &Skeleton, bank: &MergeTensorBank) -> Result<f64, ProbError> {
    Ok(log_partition(skel, bank)?.exp())
}

/// `ln` of the probability of a word sequence under a fixed shape, summed
/// over every category labeling.
pub fn words_logprob(skel: &Skeleton, words: &[usize], bank: &MergeTensorBank) -> Result<f64, ProbError> {
    if words.len() != skel.n_leaves() {
        return Err(ProbError::LengthMismatch { expected: skel.n_leaves(), got: words.len() });
    }
    let tensors = bank.resolve(skel)?;
    let leaves: Vec<Vec<f64>> = words.iter().map(|&w| bank.lexical().row(w).to_vec()).collect();
    Ok(inside(skel, &tensors, &leaves)[skel.root()].log_sum())
}

/// Fully labeled tree with one masked leaf word.
#[derive(Debug, Clone)]
pub struct MarginalQuery {
    pub tree: ParseTree,
    pub position: usize,
}

impl MarginalQuery {
    pub fn new(tree: ParseTree, position: usize) -> Result<Self, ProbError> {
        if position >= tree.n_leaves() {
            return Err(ProbError::MaskedPositionInvalid(format!(
                "position {position} outside a sentence of {} words",
                tree.n_leaves()
            )));
        }
        Ok(MarginalQuery { tree, position })
    }

    /// Locates the single leaf whose word is `_`.
    pub fn from_tree(tree: ParseTree) -> Result<Self, ProbError> {
        let masked: Vec<usize> = (0..tree.n_leaves()).filter(|&p| tree.words()[p] == MASK).collect();
        match masked.as_slice() {
            [p] => {
                let p = *p;
                Ok(MarginalQuery { tree, position: p })
            }
            [] => Err(ProbError::MaskedPositionInvalid("no masked word".into())),
            _ => Err(ProbError::MaskedPositionInvalid("more than one masked word".into())),
        }
    }
}

/// Distribution over word indices at the masked position. The leaf's own
/// category may be `_`, in which case it is summed over. Only the lexical
/// entry and the MERGE factor tying the leaf to its sibling and parent
/// depend on the word; all other factors cancel. All zeros when no word
/// fits.
pub fn marginal_word(query: &MarginalQuery, bank: &MergeTensorBank) -> Result<Vec<f64>, ProbError> {
    let tree = &query.tree;
    let sk = tree.skeleton();
    let leaf = sk.leaf(query.position);
    let cat_of = |id: usize| -> Result<Option<usize>, ProbError> {
        match tree.category(id) {
            MASK => Ok(None),
            c => resolve_category(bank, c).map(Some),
        }
    };
    let own = cat_of(leaf)?;
    let n = bank.n_categories();
    let factor: Vec<f64> = match sk.node(leaf).parent {
        None => vec![1.0; n],
        Some(p) => {
            let (l, r) = sk.node(p).children.expect("parent is internal");
            let sibling = if l == leaf { r } else { l };
            let need = |id: usize| {
                cat_of(id)?
                    .ok_or_else(|| ProbError::MaskedPositionInvalid("only the masked leaf may be unlabeled".into()))
            };
            let (cs, cp) = (need(sibling)?, need(p)?);
            let t = bank.tensor_at(sk.shape(), sk.node(p).coord)?;
            (0..n).map(|a| if l == leaf { t.get(a, cs, cp) } else { t.get(cs, a, cp) }).collect()
        }
    };
    let lex = bank.lexical();
    let mut w: Vec<f64> = (0..bank.n_words())
        .map(|word| match own {
            Some(c) => lex.get(word, c) * factor[c],
            None => (0..n).map(|c| lex.get(word, c) * factor[c]).sum(),
        })
        .collect();
    let s: f64 = w.iter().sum();
    if s > 0.0 {
        w.iter_mut().for_each(|x| *x /= s);
    }
    Ok(w)
}

/// Shannon entropy in bits; `0 · log 0 = 0`.
pub fn entropy_bits(dist: &[f64]) -> f64 {
    -dist.iter().filter(|&&p| p > 0.0).map(|&p| p * p.log2()).sum::<f64>()
}

/// `2^H(p)`. The input must be non-negative and sum to one within 1e-9;
/// it is renormalized before use.
pub fn perplexity(dist: &[f64]) -> Result<f64, ProbError> {
    if let Some(bad) = dist.iter().find(|p| !p.is_finite() || **p < 0.0) {
        return Err(ProbError::NotADistribution(format!("entry {bad}")));
    }
    let s: f64 = dist.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(ProbError::NotADistribution(format!("sums to {s}")));
    }
    let norm: Vec<f64> = dist.iter().map(|p| p / s).collect();
    Ok(entropy_bits(&norm).exp2())
}

/// Index sampled by inverse CDF over `cdf` (cumulative, index order).
fn pick(cdf: &[f64], u: f64) -> usize {
    let total = *cdf.last().expect("non-empty");
    let x = u * total;
    let i = cdf.partition_point(|&c| c <= x);
    if i < cdf.len() {
        return i;
    }
    // rounding at the top end: last index carrying weight
    (0..cdf.len()).rev().find(|&j| cdf[j] > if j == 0 { 0.0 } else { cdf[j - 1] }).unwrap_or(0)
}

fn cumulative(w: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    w.into_iter()
        .map(|x| {
            acc += x;
            acc
        })
        .collect()
}

struct Sampler<'a> {
    skel: &'a Skeleton,
    root_cdf: Vec<f64>,
    /// Per node id and parent category: CDF over `α * n + β`.
    child_cdf: Vec<Vec<Vec<f64>>>,
    /// Per category: CDF over words.
    word_cdf: Vec<Vec<f64>>,
}

impl<'a> Sampler<'a> {
    fn new(skel: &'a Skeleton, bank: &MergeTensorBank, tensors: &[Option<&MergeTensor>]) -> Result<Self, ProbError> {
        let n = bank.n_categories();
        let ins = inside(skel, tensors, &free_leaves(bank, skel.n_leaves()));
        let root = &ins[skel.root()];
        if root.log_sum() == f64::NEG_INFINITY {
            return Err(ProbError::ZeroPartition);
        }
        let mut child_cdf = vec![Vec::new(); skel.len()];
        for id in skel.internal_ids() {
            let (l, r) = skel.node(id).children.expect("internal");
            let t = tensors[id].expect("internal");
            child_cdf[id] = (0..n)
                .map(|g| {
                    cumulative((0..n * n).map(|ab| t.get(ab / n, ab % n, g) * ins[l].v[ab / n] * ins[r].v[ab % n]))
                })
                .collect();
        }
        let lex = bank.lexical();
        let word_cdf = (0..n).map(|c| cumulative((0..bank.n_words()).map(|w| lex.get(w, c)))).collect();
        Ok(Sampler { skel, root_cdf: cumulative(root.v.iter().copied()), child_cdf, word_cdf })
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
        let sk = self.skel;
        let n = self.root_cdf.len();
        let mut cats = vec![0usize; sk.len()];
        cats[sk.root()] = pick(&self.root_cdf, rng.random::<f64>());
        // post-order ids: parents have larger ids than their children
        for id in (0..sk.len()).rev() {
            if let Some((l, r)) = sk.node(id).children {
                let ab = pick(&self.child_cdf[id][cats[id]], rng.random::<f64>());
                cats[l] = ab / n;
                cats[r] = ab % n;
            }
        }
        let words = sk.leaves().iter().map(|&id| pick(&self.word_cdf[cats[id]], rng.random::<f64>())).collect();
        (cats, words)
    }
}

/// Exact ancestral samples from `p(· | T_n) / Z(T_n)`. Output depends only
/// on `seed`: chunk `k` of [`SAMPLE_CHUNK`] sentences uses stream `k` of a
/// ChaCha8 generator seeded with `seed`.
pub fn sample_instances(
    skel: &Skeleton,
    bank: &MergeTensorBank,
    count: usize,
    seed: u64,
) -> Result<Vec<SentenceInstance>, ProbError> {
    let tensors = bank.resolve(skel)?;
    let sampler = Sampler::new(skel, bank, &tensors)?;
    let chunks = count.div_ceil(SAMPLE_CHUNK);
    let out: Vec<Vec<SentenceInstance>> = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let len = SAMPLE_CHUNK.min(count - k * SAMPLE_CHUNK);
            (0..len)
                .map(|_| {
                    let (categories, words) = sampler.draw(&mut rng);
                    SentenceInstance { skeleton: skel.clone(), categories, words }
                })
                .collect()
        })
        .collect();
    Ok(out.into_iter().flatten().collect())
}

/// [`sample_instances`] rendered as labeled parse trees.
pub fn sample(skel: &Skeleton, bank: &MergeTensorBank, count: usize, seed: u64) -> Result<Vec<ParseTree>, ProbError> {
    let g = bank.grammar();
    Ok(sample_instances(skel, bank, count, seed)?
        .into_iter()
        .map(|s| {
            let cats = s.categories.iter().map(|&c| g.category(c).to_string()).collect();
            let words = s.words.iter().map(|&w| g.word(w).to_string()).collect();
            ParseTree::from_parts(s.skeleton, cats, words)
        })
        .collect())
}

/// Normalized distribution of the words in `[start, end)` as
/// `(word indices, probability)` pairs, enumerating every word tuple.
pub fn block_marginal(
    skel: &Skeleton,
    bank: &MergeTensorBank,
    start: usize,
    end: usize,
) -> Result<Vec<(Vec<usize>, f64)>, ProbError> {
    let len = end.saturating_sub(start);
    if len == 0 || end > skel.n_leaves() {
        return Err(ProbError::LengthMismatch { expected: skel.n_leaves(), got: end });
    }
    let v = bank.n_words();
    let terms = (v as u128).checked_pow(len as u32).unwrap_or(u128::MAX);
    check_budget(terms)?;
    let tensors = bank.resolve(skel)?;
    let mut leaves = free_leaves(bank, skel.n_leaves());
    let log_z = inside(skel, &tensors, &leaves)[skel.root()].log_sum();
    if log_z == f64::NEG_INFINITY {
        return Err(ProbError::ZeroPartition);
    }
    let mut out = Vec::with_capacity(terms as usize);
    let mut tuple = vec![0usize; len];
    loop {
        for (k, &w) in tuple.iter().enumerate() {
            leaves[start + k] = bank.lexical().row(w).to_vec();
        }
        let lp = inside(skel, &tensors, &leaves)[skel.root()].log_sum();
        out.push((tuple.clone(), (lp - log_z).exp()));
        let mut i = len;
        loop {
            if i == 0 {
                return Ok(out);
            }
            i -= 1;
            tuple[i] += 1;
            if tuple[i] < v {
                break;
            }
            tuple[i] = 0;
        }
    }
}

/// Posterior category distribution at every node under `p(· | T_n)`.
pub fn category_posteriors(skel: &Skeleton, bank: &MergeTensorBank) -> Result<Vec<Vec<f64>>, ProbError> {
    let tensors = bank.resolve(skel)?;
    let c = Contraction::run(skel, &tensors, &free_leaves(bank, skel.n_leaves()));
    if c.log_z == f64::NEG_INFINITY {
        return Err(ProbError::ZeroPartition);
    }
    Ok((0..skel.len()).map(|id| c.node_marginal(id)).collect())
}

/// Word unigram probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct UnigramTable {
    probs: IndexMap<String, f64>,
}

impl UnigramTable {
    /// Relative frequencies of leaf words.
    pub fn estimate(corpus: &[ParseTree]) -> Self {
        let mut counts: IndexMap<String, u64> = IndexMap::new();
        let mut total = 0u64;
        for t in corpus {
            for w in t.words() {
                *counts.entry(w.clone()).or_default() += 1;
                total += 1;
            }
        }
        UnigramTable { probs: counts.into_iter().map(|(w, c)| (w, c as f64 / total as f64)).collect() }
    }

    pub fn from_probs(probs: impl IntoIterator<Item = (String, f64)>) -> Self {
        UnigramTable { probs: probs.into_iter().collect() }
    }

    pub fn prob(&self, word: &str) -> Option<f64> {
        self.probs.get(word).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.probs.iter().map(|(w, &p)| (w.as_str(), p))
    }
}

/// `Σ_i ln p(w_i)` under the 1-gram table.
pub fn onegram_logprob<S: AsRef<str>>(words: &[S], table: &UnigramTable) -> Result<f64, ProbError> {
    words
        .iter()
        .map(|w| table.prob(w.as_ref()).map(ln).ok_or_else(|| ProbError::UnknownWord(w.as_ref().to_string())))
        .sum()
}

/// `(1 / p_max)^{n-1}` with `p_max` the largest entry over every stored
/// MERGE tensor.
pub fn rough_perplexity_bound(n: usize, bank: &MergeTensorBank) -> f64 {
    let p = bank.max_merge_probability();
    (1.0 / p).powi(n.saturating_sub(1) as i32)
}
