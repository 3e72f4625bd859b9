//! MERGE probability tensors and the lexical matrix.
//!
//! A [`MergeTensor`] holds the joint distribution `M[α, β, γ]` of a merge
//! turning a left child of category `α` and a right child of category `β`
//! into a parent of category `γ`; entries sum to one over all three indices.
//! A [`MergeTensorBank`] keys tensors by their position in the ⟨z,t⟩ plane
//! at one of four refinement levels and pairs them with the lexical matrix
//! `P(category | word)`.

mod io;

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use thiserror::Error;

use crate::treebank::{Coord, Grammar, ParseTree, Skeleton, TreeShape};

pub use io::MAGIC;

/// Entry sums further than this from one are reported by [`validate`].
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BankError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("unknown category `{0}`")]
    UnknownCategory(String),
    #[error("no level-4 tensors for tree shape `{0}`")]
    UnknownShape(String),
    #[error("refinement level must be 1..=4, got {0}")]
    InvalidLevel(u8),
    #[error("smoothing must be finite and non-negative, got {0}")]
    InvalidSmoothing(f64),
    #[error("model file format or version not recognized")]
    FormatVersionMismatch,
    #[error("model file checksum mismatch")]
    ChecksumMismatch,
    #[error("malformed model file at line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("i/o error: {0}")]
    Io(String),
}

/// Tensor sharing scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Level {
    /// One tensor everywhere (a PCFG).
    Global = 1,
    /// One tensor per renormalization level `z`.
    Scale = 2,
    /// One tensor per ⟨z,t⟩ position.
    Position = 3,
    /// One tensor per ⟨z,t⟩ position and tree shape.
    Tree = 4,
}

impl Level {
    pub fn from_number(n: u8) -> Result<Self, BankError> {
        match n {
            1 => Ok(Level::Global),
            2 => Ok(Level::Scale),
            3 => Ok(Level::Position),
            4 => Ok(Level::Tree),
            _ => Err(BankError::InvalidLevel(n)),
        }
    }

    pub fn number(self) -> u8 {
        self as u8
    }

    fn coarser(self) -> Option<Level> {
        match self {
            Level::Global => None,
            Level::Scale => Some(Level::Global),
            Level::Position => Some(Level::Scale),
            Level::Tree => Some(Level::Position),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TensorKey {
    Global,
    Scale(u32),
    Position(u32, u32),
    Tree(TreeShape, u32, u32),
}

impl TensorKey {
    pub fn for_node(level: Level, shape: &TreeShape, coord: Coord) -> Self {
        match level {
            Level::Global => TensorKey::Global,
            Level::Scale => TensorKey::Scale(coord.z),
            Level::Position => TensorKey::Position(coord.z, coord.t),
            Level::Tree => TensorKey::Tree(shape.clone(), coord.z, coord.t),
        }
    }

    pub fn level(&self) -> Level {
        match self {
            TensorKey::Global => Level::Global,
            TensorKey::Scale(_) => Level::Scale,
            TensorKey::Position(..) => Level::Position,
            TensorKey::Tree(..) => Level::Tree,
        }
    }

    /// The key one refinement level down, or `None` at level 1.
    pub fn coarsen(&self) -> Option<TensorKey> {
        match self {
            TensorKey::Global => None,
            TensorKey::Scale(_) => Some(TensorKey::Global),
            TensorKey::Position(z, _) => Some(TensorKey::Scale(*z)),
            TensorKey::Tree(_, z, t) => Some(TensorKey::Position(*z, *t)),
        }
    }
}

impl fmt::Display for TensorKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TensorKey::Global => write!(f, "-"),
            TensorKey::Scale(z) => write!(f, "{z}"),
            TensorKey::Position(z, t) => write!(f, "{z}:{t}"),
            TensorKey::Tree(s, z, t) => write!(f, "{s}|{z}:{t}"),
        }
    }
}

/// Marginal selector for [`MergeTensor::residual`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Keep {
    Left,
    Right,
    Parent,
    LeftRight,
    LeftParent,
    RightParent,
}

/// Dense joint distribution `M[α, β, γ]` over `n` categories.
#[derive(Debug, Clone, PartialEq)]
pub struct MergeTensor {
    n: usize,
    data: Vec<f64>,
}

impl MergeTensor {
    pub fn zeros(n: usize) -> Self {
        MergeTensor { n, data: vec![0.0; n * n * n] }
    }

    pub fn uniform(n: usize) -> Self {
        let v = 1.0 / (n * n * n) as f64;
        MergeTensor { n, data: vec![v; n * n * n] }
    }

    /// Wraps row-major data indexed `(α * n + β) * n + γ`.
    pub fn from_vec(n: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n * n * n);
        MergeTensor { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize, g: usize) -> f64 {
        self.data[(a * self.n + b) * self.n + g]
    }

    pub fn set(&mut self, a: usize, b: usize, g: usize, v: f64) {
        self.data[(a * self.n + b) * self.n + g] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_entry(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Iterates `(α, β, γ, value)` over nonzero entries.
    pub fn nonzero(&self) -> impl Iterator<Item = (usize, usize, usize, f64)> + '_ {
        let n = self.n;
        self.data.iter().enumerate().filter(|(_, &v)| v != 0.0).map(move |(i, &v)| (i / (n * n), (i / n) % n, i % n, v))
    }

    /// Marginal over the axes not kept, flattened row-major in `(α, β, γ)`
    /// order of the kept axes.
    pub fn residual(&self, keep: Keep) -> Vec<f64> {
        let n = self.n;
        let size = match keep {
            Keep::Left | Keep::Right | Keep::Parent => n,
            _ => n * n,
        };
        let mut out = vec![0.0; size];
        for a in 0..n {
            for b in 0..n {
                for g in 0..n {
                    let idx = match keep {
                        Keep::Left => a,
                        Keep::Right => b,
                        Keep::Parent => g,
                        Keep::LeftRight => a * n + b,
                        Keep::LeftParent => a * n + g,
                        Keep::RightParent => b * n + g,
                    };
                    out[idx] += self.get(a, b, g);
                }
            }
        }
        out
    }

    /// `P(γ | α, β)`; all zeros when the pair never merges.
    pub fn conditional_parent(&self, a: usize, b: usize) -> Vec<f64> {
        let row: Vec<f64> = (0..self.n).map(|g| self.get(a, b, g)).collect();
        normalized(row)
    }

    /// `P(α, β | γ)` flattened as `α * n + β`.
    pub fn conditional_children(&self, g: usize) -> Vec<f64> {
        let n = self.n;
        let col: Vec<f64> = (0..n * n).map(|ab| self.get(ab / n, ab % n, g)).collect();
        normalized(col)
    }

    /// `true` when every `(α, β)` has at most one nonzero `γ`.
    pub fn is_diagonal(&self) -> bool {
        self.nondeterministic_pairs().next().is_none()
    }

    fn nondeterministic_pairs(&self) -> impl Iterator<Item = (usize, usize, Vec<usize>)> + '_ {
        let n = self.n;
        (0..n * n).filter_map(move |ab| {
            let (a, b) = (ab / n, ab % n);
            let gs: Vec<usize> = (0..n).filter(|&g| self.get(a, b, g) != 0.0).collect();
            (gs.len() > 1).then_some((a, b, gs))
        })
    }
}

fn normalized(mut v: Vec<f64>) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        v.iter_mut().for_each(|x| *x /= s);
    }
    v
}

/// Row-stochastic `P(category | word)`, `n_words × n_categories`.
#[derive(Debug, Clone, PartialEq)]
pub struct LexicalMatrix {
    n_words: usize,
    n_categories: usize,
    data: Vec<f64>,
}

impl LexicalMatrix {
    pub fn zeros(n_words: usize, n_categories: usize) -> Self {
        LexicalMatrix { n_words, n_categories, data: vec![0.0; n_words * n_categories] }
    }

    pub fn n_words(&self) -> usize {
        self.n_words
    }

    pub fn n_categories(&self) -> usize {
        self.n_categories
    }

    #[inline]
    pub fn get(&self, w: usize, c: usize) -> f64 {
        self.data[w * self.n_categories + c]
    }

    pub fn set(&mut self, w: usize, c: usize, v: f64) {
        self.data[w * self.n_categories + c] = v;
    }

    pub fn row(&self, w: usize) -> &[f64] {
        &self.data[w * self.n_categories..(w + 1) * self.n_categories]
    }

    /// `Σ_w P(c | w)` for every category.
    pub fn column_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_categories];
        for w in 0..self.n_words {
            for (c, o) in out.iter_mut().enumerate() {
                *o += self.get(w, c);
            }
        }
        out
    }

    /// `true` when every word has at most one possible category.
    pub fn is_unambiguous(&self) -> bool {
        (0..self.n_words).all(|w| self.row(w).iter().filter(|&&v| v != 0.0).count() <= 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateOptions {
    pub level: Level,
    /// Add-λ smoothing over the full `N_l³` cube of every key.
    pub lambda: f64,
    /// Estimate the unknown-word row from hapax legomena.
    pub unk: bool,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        EstimateOptions { level: Level::Global, lambda: 0.0, unk: false }
    }
}

pub type MergeCounts = BTreeMap<TensorKey, BTreeMap<(usize, usize, usize), u64>>;
pub type LexicalCounts = BTreeMap<(usize, usize), u64>;

/// MERGE tensors keyed by refinement level, plus the lexical matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MergeTensorBank {
    level: Level,
    grammar: Grammar,
    tensors: BTreeMap<TensorKey, MergeTensor>,
    merge_counts: MergeCounts,
    lexical: LexicalMatrix,
    lexical_counts: LexicalCounts,
    deterministic: bool,
    lambda: f64,
    fallback: MergeTensor,
}

fn fallback_tensor(n: usize, lambda: f64) -> MergeTensor {
    if lambda > 0.0 {
        MergeTensor::uniform(n)
    } else {
        MergeTensor::zeros(n)
    }
}

/// Counts every merge and every word/category pair of a corpus.
fn count_corpus(corpus: &[ParseTree], grammar: &Grammar, level: Level) -> (MergeCounts, LexicalCounts) {
    corpus
        .par_iter()
        .fold(
            || (MergeCounts::new(), LexicalCounts::new()),
            |(mut mc, mut lc), tree| {
                let sk = tree.skeleton();
                let cat = |id: usize| grammar.category_index(tree.category(id)).expect("grammar closed over corpus");
                for (id, node) in sk.nodes().iter().enumerate() {
                    match node.children {
                        Some((l, r)) => {
                            let key = TensorKey::for_node(level, sk.shape(), node.coord);
                            *mc.entry(key).or_default().entry((cat(l), cat(r), cat(id))).or_default() += 1;
                        }
                        None => {
                            let w = grammar.word_index(&tree.words()[node.span.0]).expect("grammar closed over corpus");
                            *lc.entry((w, cat(id))).or_default() += 1;
                        }
                    }
                }
                (mc, lc)
            },
        )
        .reduce(
            || (MergeCounts::new(), LexicalCounts::new()),
            |(mut ma, mut la), (mb, lb)| {
                for (k, m) in mb {
                    let dst = ma.entry(k).or_default();
                    for (t, c) in m {
                        *dst.entry(t).or_default() += c;
                    }
                }
                for (k, c) in lb {
                    *la.entry(k).or_default() += c;
                }
                (ma, la)
            },
        )
}

impl MergeTensorBank {
    /// Frequency estimate from a binary treebank.
    pub fn estimate(corpus: &[ParseTree], opts: &EstimateOptions) -> Result<Self, BankError> {
        if corpus.is_empty() {
            return Err(BankError::EmptyCorpus);
        }
        check_lambda(opts.lambda)?;
        let grammar = Grammar::from_trees(corpus);
        let (merge_counts, mut lexical_counts) = count_corpus(corpus, &grammar, opts.level);
        if opts.unk {
            let mut word_totals: BTreeMap<usize, u64> = BTreeMap::new();
            for (&(w, _), &c) in &lexical_counts {
                *word_totals.entry(w).or_default() += c;
            }
            let hapax: Vec<(usize, usize)> =
                lexical_counts.keys().filter(|(w, _)| word_totals[w] == 1).copied().collect();
            for (_, c) in hapax {
                *lexical_counts.entry((grammar.unk_index(), c)).or_default() += 1;
            }
        }
        Ok(Self::from_counts(opts.level, grammar, merge_counts, lexical_counts, opts.lambda))
    }

    /// Builds probabilities from raw counts: each entry is
    /// `(count + λ) / (total + λ·N_l³)` within its key.
    pub fn from_counts(
        level: Level,
        grammar: Grammar,
        merge_counts: MergeCounts,
        lexical_counts: LexicalCounts,
        lambda: f64,
    ) -> Self {
        let n = grammar.n_categories();
        let cube = (n * n * n) as f64;
        let mut tensors = BTreeMap::new();
        let mut deterministic = lambda == 0.0;
        for (key, counts) in &merge_counts {
            let total: u64 = counts.values().sum();
            let denom = total as f64 + lambda * cube;
            let mut t = MergeTensor::zeros(n);
            if lambda > 0.0 {
                t.data.iter_mut().for_each(|x| *x = lambda / denom);
            }
            for (&(a, b, g), &c) in counts {
                t.set(a, b, g, (c as f64 + lambda) / denom);
            }
            if deterministic && !t.is_diagonal() {
                deterministic = false;
            }
            tensors.insert(key.clone(), t);
        }
        let mut lexical = LexicalMatrix::zeros(grammar.n_words(), n);
        let mut row_totals = vec![0u64; grammar.n_words()];
        for (&(w, _), &c) in &lexical_counts {
            row_totals[w] += c;
        }
        for (&(w, c), &k) in &lexical_counts {
            lexical.set(w, c, k as f64 / row_totals[w] as f64);
        }
        MergeTensorBank {
            level,
            fallback: fallback_tensor(n, lambda),
            grammar,
            tensors,
            merge_counts,
            lexical,
            lexical_counts,
            deterministic,
            lambda,
        }
    }

    /// Assembles a bank from explicit tensors. The determinism flag is set
    /// when `lambda == 0` and every tensor is diagonal.
    pub fn from_tensors(
        level: Level,
        grammar: Grammar,
        tensors: BTreeMap<TensorKey, MergeTensor>,
        lexical: LexicalMatrix,
        lambda: f64,
    ) -> Self {
        let n = grammar.n_categories();
        assert_eq!(lexical.n_categories(), n);
        assert_eq!(lexical.n_words(), grammar.n_words());
        assert!(tensors.iter().all(|(k, t)| t.dim() == n && k.level() == level));
        let deterministic = lambda == 0.0 && tensors.values().all(MergeTensor::is_diagonal);
        MergeTensorBank {
            level,
            fallback: fallback_tensor(n, lambda),
            grammar,
            tensors,
            merge_counts: MergeCounts::new(),
            lexical,
            lexical_counts: LexicalCounts::new(),
            deterministic,
            lambda,
        }
    }

    /// Re-estimates the bank one or more levels down by summing counts.
    /// Returns `None` when counts are unavailable or `target` is finer.
    pub fn coarsen(&self, target: Level) -> Option<Self> {
        if target > self.level || (self.merge_counts.is_empty() && !self.tensors.is_empty()) {
            return None;
        }
        let mut counts = self.merge_counts.clone();
        let mut level = self.level;
        while level != target {
            let mut next = MergeCounts::new();
            for (k, m) in counts {
                let dst = next.entry(k.coarsen().expect("level above 1")).or_default();
                for (t, c) in m {
                    *dst.entry(t).or_default() += c;
                }
            }
            counts = next;
            level = level.coarser().expect("level above 1");
        }
        Some(Self::from_counts(target, self.grammar.clone(), counts, self.lexical_counts.clone(), self.lambda))
    }

    pub fn level(&self) -> Level {
        self.level
    }

    pub fn grammar(&self) -> &Grammar {
        &self.grammar
    }

    pub fn n_categories(&self) -> usize {
        self.grammar.n_categories()
    }

    pub fn n_words(&self) -> usize {
        self.grammar.n_words()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn is_deterministic(&self) -> bool {
        self.deterministic
    }

    pub fn set_deterministic(&mut self, flag: bool) {
        self.deterministic = flag;
    }

    pub fn tensors(&self) -> &BTreeMap<TensorKey, MergeTensor> {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut BTreeMap<TensorKey, MergeTensor> {
        &mut self.tensors
    }

    pub fn merge_counts(&self) -> &MergeCounts {
        &self.merge_counts
    }

    pub fn lexical(&self) -> &LexicalMatrix {
        &self.lexical
    }

    pub fn lexical_mut(&mut self) -> &mut LexicalMatrix {
        &mut self.lexical
    }

    pub fn lexical_counts(&self) -> &LexicalCounts {
        &self.lexical_counts
    }

    /// Whether the unknown-word row carries any mass.
    pub fn has_unk_row(&self) -> bool {
        self.lexical.row(self.grammar.unk_index()).iter().any(|&v| v != 0.0)
    }

    /// Tensor governing a merge at `key`. Unseen keys resolve to the zero
    /// tensor (λ = 0) or the uniform tensor (λ > 0); at level 4 a shape
    /// never seen in training is an error.
    pub fn tensor(&self, key: &TensorKey) -> Result<&MergeTensor, BankError> {
        if let Some(t) = self.tensors.get(key) {
            return Ok(t);
        }
        if let TensorKey::Tree(shape, _, _) = key {
            let lo = TensorKey::Tree(shape.clone(), 0, 0);
            let hi = TensorKey::Tree(shape.clone(), u32::MAX, u32::MAX);
            if self.tensors.range(lo..=hi).next().is_none() {
                return Err(BankError::UnknownShape(shape.to_string()));
            }
        }
        Ok(&self.fallback)
    }

    pub fn tensor_at(&self, shape: &TreeShape, coord: Coord) -> Result<&MergeTensor, BankError> {
        self.tensor(&TensorKey::for_node(self.level, shape, coord))
    }

    /// One tensor reference per node of `skeleton` (`None` for leaves).
    pub fn resolve(&self, skeleton: &Skeleton) -> Result<Vec<Option<&MergeTensor>>, BankError> {
        skeleton
            .nodes()
            .iter()
            .map(|n| match n.children {
                Some(_) => self.tensor_at(skeleton.shape(), n.coord).map(Some),
                None => Ok(None),
            })
            .collect()
    }

    /// Largest entry over every stored tensor.
    pub fn max_merge_probability(&self) -> f64 {
        self.tensors.values().map(MergeTensor::max_entry).fold(0.0, f64::max)
    }

    pub fn category_index(&self, label: &str) -> Result<usize, BankError> {
        self.grammar.category_index(label).ok_or_else(|| BankError::UnknownCategory(label.to_string()))
    }
}

fn check_lambda(lambda: f64) -> Result<(), BankError> {
    if lambda.is_finite() && lambda >= 0.0 {
        Ok(())
    } else {
        Err(BankError::InvalidSmoothing(lambda))
    }
}

/// Probability of merging `alpha` and `beta` into `gamma` at the node with
/// coordinates `coord` of a tree with shape `shape`. Levels 1–3 ignore the
/// parts of the context they do not key on.
pub fn merge_prob(
    bank: &MergeTensorBank,
    shape: &TreeShape,
    coord: Coord,
    alpha: &str,
    beta: &str,
    gamma: &str,
) -> Result<f64, BankError> {
    let a = bank.category_index(alpha)?;
    let b = bank.category_index(beta)?;
    let g = bank.category_index(gamma)?;
    Ok(bank.tensor_at(shape, coord)?.get(a, b, g))
}

/// Marginal of a tensor over the axes not in `keep`.
pub fn residual(tensor: &MergeTensor, keep: Keep) -> Vec<f64> {
    tensor.residual(keep)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Negative { key: TensorKey, index: (usize, usize, usize), value: f64 },
    Normalization { key: TensorKey, sum: f64 },
    NonDeterministic { key: TensorKey, alpha: usize, beta: usize, gammas: Vec<usize> },
    NegativeLexical { word: usize, category: usize, value: f64 },
    LexicalRow { word: usize, sum: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Negative { key, index, value } => {
                write!(f, "negative entry {value} at key {key} index {index:?}")
            }
            Violation::Normalization { key, sum } => write!(f, "tensor at key {key} sums to {sum}"),
            Violation::NonDeterministic { key, alpha, beta, gammas } => {
                write!(f, "pair ({alpha}, {beta}) at key {key} merges into several categories {gammas:?}")
            }
            Violation::NegativeLexical { word, category, value } => {
                write!(f, "negative lexical entry {value} at word {word} category {category}")
            }
            Violation::LexicalRow { word, sum } => write!(f, "lexical row of word {word} sums to {sum}"),
        }
    }
}

/// Lists every violated bank invariant; empty for a healthy bank.
pub fn validate(bank: &MergeTensorBank) -> Vec<Violation> {
    let mut out = Vec::new();
    for (key, t) in &bank.tensors {
        let n = t.dim();
        for (i, &v) in t.as_slice().iter().enumerate() {
            if v < 0.0 || v.is_nan() {
                out.push(Violation::Negative { key: key.clone(), index: (i / (n * n), (i / n) % n, i % n), value: v });
            }
        }
        let sum = t.sum();
        if !((sum - 1.0).abs() <= NORMALIZATION_TOLERANCE) {
            out.push(Violation::Normalization { key: key.clone(), sum });
        }
        if bank.deterministic {
            for (alpha, beta, gammas) in t.nondeterministic_pairs() {
                out.push(Violation::NonDeterministic { key: key.clone(), alpha, beta, gammas });
            }
        }
    }
    let lex = &bank.lexical;
    for w in 0..lex.n_words() {
        let row = lex.row(w);
        for (c, &v) in row.iter().enumerate() {
            if v < 0.0 || v.is_nan() {
                out.push(Violation::NegativeLexical { word: w, category: c, value: v });
            }
        }
        let sum: f64 = row.iter().sum();
        if sum != 0.0 && !((sum - 1.0).abs() <= NORMALIZATION_TOLERANCE) {
            out.push(Violation::LexicalRow { word: w, sum });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::treebank::{parse_bracketed, ParseOptions};

    fn corpus(text: &str) -> Vec<ParseTree> {
        parse_bracketed(text, &ParseOptions::default()).unwrap().trees
    }

    const ONE: &str = "(S (NP (D the) (N cat)) (V sleeps))";

    #[test]
    fn point_mass_estimation() {
        let text = std::iter::repeat_n(ONE, 100).collect::<Vec<_>>().join("\n");
        let bank = MergeTensorBank::estimate(&corpus(&text), &EstimateOptions::default()).unwrap();
        assert!(bank.is_deterministic());
        let t = bank.tensor(&TensorKey::Global).unwrap();
        let np = bank.category_index("NP").unwrap();
        let d = bank.category_index("D").unwrap();
        let n = bank.category_index("N").unwrap();
        assert_eq!(t.get(d, n, np), 0.5);
        for lvl in [Level::Scale, Level::Position, Level::Tree] {
            let b = MergeTensorBank::estimate(&corpus(&text), &EstimateOptions { level: lvl, ..Default::default() })
                .unwrap();
            for t in b.tensors().values() {
                assert_eq!(t.max_entry(), 1.0);
            }
        }
        assert!(validate(&bank).is_empty());
    }

    #[test]
    fn three_to_one_ratio_at_one_key() {
        // Hand count: 3 × (A B → X), 1 × (A C → X) at the single level-1 key.
        let text = "(X (A a) (B b))\n(X (A a) (B b))\n(X (A a) (B b))\n(X (A a) (C c))";
        let bank = MergeTensorBank::estimate(&corpus(text), &EstimateOptions::default()).unwrap();
        let g = bank.grammar();
        let (x, a, b, c) = (
            g.category_index("X").unwrap(),
            g.category_index("A").unwrap(),
            g.category_index("B").unwrap(),
            g.category_index("C").unwrap(),
        );
        let t = bank.tensor(&TensorKey::Global).unwrap();
        assert_eq!(t.get(a, b, x), 0.75);
        assert_eq!(t.get(a, c, x), 0.25);
        assert_eq!(t.sum(), 1.0);
        let parents = t.residual(Keep::Parent);
        let mut expected = vec![0.0; g.n_categories()];
        expected[x] = 1.0;
        assert_eq!(parents, expected);
        let left = t.residual(Keep::Left);
        assert_eq!(left[a], 1.0);
        let right = t.residual(Keep::Right);
        assert_eq!((right[b], right[c]), (0.75, 0.25));
        assert!(bank.is_deterministic());
        assert_eq!(t.conditional_children(x)[a * g.n_categories() + b], 0.75);
        assert_eq!(t.conditional_parent(a, c)[x], 1.0);
    }

    #[test]
    fn residual_of_uniform_and_point_mass() {
        let u = MergeTensor::uniform(2);
        assert_eq!(u.residual(Keep::Parent), vec![0.5, 0.5]);
        assert_eq!(u.residual(Keep::LeftRight), vec![0.25; 4]);
        let mut p = MergeTensor::zeros(3);
        p.set(2, 0, 1, 1.0);
        assert_eq!(p.residual(Keep::Parent), vec![0.0, 1.0, 0.0]);
        assert_eq!(p.residual(Keep::LeftParent)[2 * 3 + 1], 1.0);
    }

    #[test]
    fn parent_residual_matches_parent_frequencies() {
        let text = "(S (NP (D the) (N cat)) (V sleeps))\n(S (N Ann) (VP (V sees) (NP (D a) (N dog))))";
        let trees = corpus(text);
        let bank = MergeTensorBank::estimate(&trees, &EstimateOptions::default()).unwrap();
        let mut freq = vec![0.0; bank.n_categories()];
        let mut total = 0.0;
        for t in &trees {
            for id in t.skeleton().internal_ids() {
                freq[bank.category_index(t.category(id)).unwrap()] += 1.0;
                total += 1.0;
            }
        }
        freq.iter_mut().for_each(|f| *f /= total);
        let got = bank.tensor(&TensorKey::Global).unwrap().residual(Keep::Parent);
        for (g, f) in got.iter().zip(&freq) {
            assert!((g - f).abs() < 1e-15);
        }
    }

    #[test]
    fn smoothing_conserves_mass() {
        let opts = EstimateOptions { level: Level::Position, lambda: 0.5, unk: false };
        let bank = MergeTensorBank::estimate(&corpus(ONE), &opts).unwrap();
        assert!(!bank.is_deterministic());
        for t in bank.tensors().values() {
            assert!((t.sum() - 1.0).abs() < 1e-12);
            assert!(t.as_slice().iter().all(|&v| v > 0.0));
        }
        // unseen key → uniform
        let n = bank.n_categories();
        let t = bank.tensor(&TensorKey::Position(9, 9)).unwrap();
        assert_eq!(t.get(0, 0, 0), 1.0 / (n * n * n) as f64);
        assert!(validate(&bank).is_empty());
    }

    #[test]
    fn level_three_distinguishes_positions() {
        // The merge at t = 0 and at t = 2 (z = 2) see different counts.
        let text = "(S (X (A a) (B b)) (X (A a) (C c)))\n(S (X (A a) (B b)) (X (A a) (B b)))";
        let opts = EstimateOptions { level: Level::Position, ..Default::default() };
        let bank = MergeTensorBank::estimate(&corpus(text), &opts).unwrap();
        let g = bank.grammar();
        let (x, a, b) =
            (g.category_index("X").unwrap(), g.category_index("A").unwrap(), g.category_index("B").unwrap());
        let shape = TreeShape::new("((..)(..))").unwrap();
        let left = bank.tensor_at(&shape, Coord { z: 2, t: 0 }).unwrap().get(a, b, x);
        let right = bank.tensor_at(&shape, Coord { z: 2, t: 2 }).unwrap().get(a, b, x);
        assert_eq!(left, 1.0);
        assert_eq!(right, 0.5);
        let l1 = MergeTensorBank::estimate(&corpus(text), &EstimateOptions::default()).unwrap();
        let p0 = merge_prob(&l1, &shape, Coord { z: 2, t: 0 }, "A", "B", "X").unwrap();
        let p1 = merge_prob(&l1, &TreeShape::new("(..)").unwrap(), Coord { z: 7, t: 3 }, "A", "B", "X").unwrap();
        assert_eq!(p0, p1);
        assert_eq!(merge_prob(&l1, &shape, Coord { z: 2, t: 0 }, "B", "A", "X").unwrap(), 0.0);
        assert_eq!(
            merge_prob(&l1, &shape, Coord { z: 2, t: 0 }, "Q", "A", "X").unwrap_err(),
            BankError::UnknownCategory("Q".into())
        );
    }

    #[test]
    fn level_four_unknown_shape_errors() {
        let opts = EstimateOptions { level: Level::Tree, ..Default::default() };
        let bank = MergeTensorBank::estimate(&corpus(ONE), &opts).unwrap();
        let seen = TreeShape::new("((..).)").unwrap();
        assert!(bank.tensor_at(&seen, Coord { z: 2, t: 0 }).is_ok());
        let unseen = TreeShape::new("(.(..))").unwrap();
        assert_eq!(
            bank.tensor_at(&unseen, Coord { z: 2, t: 1 }).unwrap_err(),
            BankError::UnknownShape("(.(..))".into())
        );
    }

    #[test]
    fn coarsening_counts_is_exact() {
        let text = "(S (NP (D the) (N cat)) (V sleeps))\n(S (N Ann) (VP (V sees) (NP (D a) (N dog))))\n\
                    (S (NP (D a) (N dog)) (VP (V sees) (N Ann)))";
        let trees = corpus(text);
        let est = |level| MergeTensorBank::estimate(&trees, &EstimateOptions { level, ..Default::default() }).unwrap();
        let l4 = est(Level::Tree);
        assert_eq!(l4.coarsen(Level::Position).unwrap(), est(Level::Position));
        assert_eq!(est(Level::Position).coarsen(Level::Scale).unwrap(), est(Level::Scale));
        assert_eq!(est(Level::Scale).coarsen(Level::Global).unwrap(), est(Level::Global));
        assert_eq!(l4.coarsen(Level::Global).unwrap(), est(Level::Global));
        assert!(est(Level::Scale).coarsen(Level::Tree).is_none());
    }

    #[test]
    fn validate_reports_injected_faults() {
        let text = "(S (NP (D the) (N cat)) (V sleeps))";
        let mut bank = MergeTensorBank::estimate(&corpus(text), &EstimateOptions::default()).unwrap();
        assert!(validate(&bank).is_empty());
        let t = bank.tensors_mut().get_mut(&TensorKey::Global).unwrap();
        t.set(0, 0, 0, -0.1);
        let report = validate(&bank);
        assert!(report.contains(&Violation::Negative { key: TensorKey::Global, index: (0, 0, 0), value: -0.1 }));
        assert!(report.iter().any(|v| matches!(v, Violation::Normalization { .. })));

        let mut bank = MergeTensorBank::estimate(&corpus(text), &EstimateOptions::default()).unwrap();
        let (d, n, np, s) = (
            bank.category_index("D").unwrap(),
            bank.category_index("N").unwrap(),
            bank.category_index("NP").unwrap(),
            bank.category_index("S").unwrap(),
        );
        let t = bank.tensors_mut().get_mut(&TensorKey::Global).unwrap();
        t.set(d, n, np, 0.25);
        t.set(d, n, s, 0.25);
        assert!(bank.is_deterministic());
        let report = validate(&bank);
        assert_eq!(
            report,
            vec![Violation::NonDeterministic { key: TensorKey::Global, alpha: d, beta: n, gammas: vec![np, s] }]
        );
    }

    #[test]
    fn unk_row_from_hapaxes() {
        let text = "(S (N cat) (V sleeps))\n(S (N cat) (V runs))";
        let trees = corpus(text);
        let plain = MergeTensorBank::estimate(&trees, &EstimateOptions::default()).unwrap();
        assert!(!plain.has_unk_row());
        let bank = MergeTensorBank::estimate(&trees, &EstimateOptions { unk: true, ..Default::default() }).unwrap();
        let v = bank.category_index("V").unwrap();
        assert_eq!(bank.lexical().get(0, v), 1.0);
        assert!(validate(&bank).is_empty());
    }

    #[test]
    fn empty_corpus_and_bad_lambda() {
        assert_eq!(MergeTensorBank::estimate(&[], &EstimateOptions::default()).unwrap_err(), BankError::EmptyCorpus);
        let opts = EstimateOptions { lambda: -1.0, ..Default::default() };
        assert!(matches!(MergeTensorBank::estimate(&corpus(ONE), &opts), Err(BankError::InvalidSmoothing(_))));
    }

    #[test]
    fn key_display() {
        let s = TreeShape::new("(..)").unwrap();
        assert_eq!(TensorKey::Global.to_string(), "-");
        assert_eq!(TensorKey::Scale(3).to_string(), "3");
        assert_eq!(TensorKey::Position(3, 1).to_string(), "3:1");
        assert_eq!(TensorKey::Tree(s, 2, 0).to_string(), "(..)|2:0");
    }
}
