//! Syntactic distance, exact two-point correlations and mutual information
//! under a bank, and decay-law fits.
//!
//! Expectations are taken under `p(· | T_n) / Z(T_n)` and computed by tree
//! contraction: an observable at leaf `i` becomes a weight vector over
//! categories, and the pair kernel `P(c_i = a, c_j = b)` comes from
//! clamping leaf `i` to category `a` and reading the outside vector at `j`.

use std::fmt;

use rayon::prelude::*;
use thiserror::Error;

use crate::contraction::{Contraction, Scaled};
use crate::prob_model::ProbError;
use crate::tensor_bank::{MergeTensor, MergeTensorBank};
use crate::treebank::{enumerate_shapes, Skeleton, TreebankError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CorrelationError {
    #[error("leaf index {index} out of range for {n} leaves")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("partition function is zero")]
    ZeroPartition,
    #[error("need at least 3 points to fit, got {0}")]
    InsufficientPoints(usize),
    #[error("fit requires positive values and distances")]
    NonPositiveValues,
    #[error("data do not decay (log-log slope {0})")]
    NonDecaying(f64),
    #[error(transparent)]
    Prob(#[from] ProbError),
    #[error(transparent)]
    Treebank(#[from] TreebankError),
}

impl From<crate::tensor_bank::BankError> for CorrelationError {
    fn from(e: crate::tensor_bank::BankError) -> Self {
        CorrelationError::Prob(ProbError::Bank(e))
    }
}

/// Edge count of the path between leaves `i` and `j`.
pub fn syntactic_distance(skel: &Skeleton, i: usize, j: usize) -> Result<usize, CorrelationError> {
    let n = skel.n_leaves();
    for index in [i, j] {
        if index >= n {
            return Err(CorrelationError::IndexOutOfRange { index, n });
        }
    }
    let (mut a, mut b) = (skel.leaf(i), skel.leaf(j));
    let mut d = 0;
    while a != b {
        if skel.node(a).depth >= skel.node(b).depth {
            a = skel.node(a).parent.expect("non-root");
        } else {
            b = skel.node(b).parent.expect("non-root");
        }
        d += 1;
    }
    Ok(d)
}

/// Real-valued function `g(word, category)` of a leaf.
#[derive(Debug, Clone, PartialEq)]
pub enum Observable {
    /// `1` when the leaf category is the given index.
    CategoryIndicator(usize),
    /// `1` when the leaf word is the given index.
    WordIndicator(usize),
    /// Arbitrary `f(word)`, one value per word index.
    Custom(Vec<f64>),
}

impl Observable {
    pub fn value(&self, word: usize, category: usize) -> f64 {
        match self {
            Observable::CategoryIndicator(c) => f64::from(u8::from(*c == category)),
            Observable::WordIndicator(w) => f64::from(u8::from(*w == word)),
            Observable::Custom(f) => f[word],
        }
    }
}

/// Random variable read off a leaf for mutual information.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Variable {
    #[default]
    Category,
    Word,
}

/// Per-tree engine holding the unclamped contraction.
pub struct TreeCorrelator<'a> {
    skel: &'a Skeleton,
    bank: &'a MergeTensorBank,
    tensors: Vec<Option<&'a MergeTensor>>,
    leaves: Vec<Vec<f64>>,
    base: Contraction,
}

impl<'a> TreeCorrelator<'a> {
    pub fn new(skel: &'a Skeleton, bank: &'a MergeTensorBank) -> Result<Self, CorrelationError> {
        let tensors = bank.resolve(skel)?;
        let leaves = vec![bank.lexical().column_sums(); skel.n_leaves()];
        let base = Contraction::run(skel, &tensors, &leaves);
        if base.log_z == f64::NEG_INFINITY {
            return Err(CorrelationError::ZeroPartition);
        }
        Ok(TreeCorrelator { skel, bank, tensors, leaves, base })
    }

    fn check(&self, i: usize) -> Result<(), CorrelationError> {
        let n = self.skel.n_leaves();
        if i >= n {
            Err(CorrelationError::IndexOutOfRange { index: i, n })
        } else {
            Ok(())
        }
    }

    /// `G(α) = Σ_w P(α | w) · Π_k g_k(w, α)`.
    fn leaf_weight(&self, obs: &[&Observable]) -> Vec<f64> {
        let lex = self.bank.lexical();
        (0..self.bank.n_categories())
            .map(|a| {
                (0..self.bank.n_words())
                    .map(|w| lex.get(w, a) * obs.iter().map(|o| o.value(w, a)).product::<f64>())
                    .sum()
            })
            .collect()
    }

    fn outside_at(&self, c: &Contraction, j: usize) -> Scaled {
        c.outside[self.skel.leaf(j)].clone()
    }

    fn clamped(&self, i: usize, v: Vec<f64>) -> Contraction {
        let mut leaves = self.leaves.clone();
        leaves[i] = v;
        Contraction::run(self.skel, &self.tensors, &leaves)
    }

    fn unit(&self, a: usize) -> Vec<f64> {
        let mut e = vec![0.0; self.bank.n_categories()];
        e[a] = 1.0;
        e
    }

    /// `⟨g(w_i)⟩`.
    pub fn mean(&self, i: usize, g: &Observable) -> Result<f64, CorrelationError> {
        self.check(i)?;
        let out = self.outside_at(&self.base, i);
        Ok(out.dot_rel(&self.leaf_weight(&[g]), self.base.log_z))
    }

    /// `⟨f(w_i) f′(w_j)⟩ − ⟨f(w_i)⟩⟨f′(w_j)⟩`.
    pub fn two_point(&self, i: usize, j: usize, f: &Observable, f2: &Observable) -> Result<f64, CorrelationError> {
        self.check(i)?;
        self.check(j)?;
        let joint = if i == j {
            self.outside_at(&self.base, i).dot_rel(&self.leaf_weight(&[f, f2]), self.base.log_z)
        } else {
            let c = self.clamped(i, self.leaf_weight(&[f]));
            self.outside_at(&c, j).dot_rel(&self.leaf_weight(&[f2]), self.base.log_z)
        };
        Ok(joint - self.mean(i, f)? * self.mean(j, f2)?)
    }

    /// Outside vectors at every leaf with leaf `i` clamped to each category.
    fn kernels(&self, i: usize) -> Vec<Vec<Scaled>> {
        (0..self.bank.n_categories())
            .map(|a| {
                let c = self.clamped(i, self.unit(a));
                (0..self.skel.n_leaves()).map(|j| self.outside_at(&c, j)).collect()
            })
            .collect()
    }

    /// `P(c_i = a, c_j = b)` from precomputed kernels of leaf `i`.
    fn category_joint(&self, kernels: &[Vec<Scaled>], j: usize) -> Vec<Vec<f64>> {
        let l = &self.leaves[0];
        let n = self.bank.n_categories();
        (0..n)
            .map(|a| {
                let k = &kernels[a][j];
                (0..n)
                    .map(|b| {
                        let mut e = vec![0.0; n];
                        e[b] = l[b];
                        l[a] * k.dot_rel(&e, self.base.log_z)
                    })
                    .collect()
            })
            .collect()
    }

    fn word_joint(&self, cat: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let lex = self.bank.lexical();
        let (n, v) = (self.bank.n_categories(), self.bank.n_words());
        let l = &self.leaves[0];
        // P(w | c) = P(c | w) / L(c)
        let cond = |w: usize, c: usize| if l[c] > 0.0 { lex.get(w, c) / l[c] } else { 0.0 };
        (0..v)
            .map(|u| {
                (0..v)
                    .map(|w| {
                        let mut s = 0.0;
                        for a in 0..n {
                            for b in 0..n {
                                s += cond(u, a) * cond(w, b) * cat[a][b];
                            }
                        }
                        s
                    })
                    .collect()
            })
            .collect()
    }

    fn diagonal_joint(&self, i: usize, var: Variable) -> Vec<Vec<f64>> {
        let m = self.base.node_marginal(self.skel.leaf(i));
        let p: Vec<f64> = match var {
            Variable::Category => m,
            Variable::Word => {
                let lex = self.bank.lexical();
                let l = &self.leaves[0];
                (0..self.bank.n_words())
                    .map(|w| (0..m.len()).filter(|&c| l[c] > 0.0).map(|c| lex.get(w, c) / l[c] * m[c]).sum())
                    .collect()
            }
        };
        (0..p.len()).map(|a| (0..p.len()).map(|b| if a == b { p[a] } else { 0.0 }).collect()).collect()
    }

    /// Joint distribution of the chosen variable at leaves `i` and `j`.
    pub fn joint(&self, i: usize, j: usize, var: Variable) -> Result<Vec<Vec<f64>>, CorrelationError> {
        self.check(i)?;
        self.check(j)?;
        if i == j {
            return Ok(self.diagonal_joint(i, var));
        }
        let cat = self.category_joint(&self.kernels(i), j);
        Ok(match var {
            Variable::Category => cat,
            Variable::Word => self.word_joint(&cat),
        })
    }

    /// Mutual information in bits between the variables at `i` and `j`.
    pub fn mutual_information(&self, i: usize, j: usize, var: Variable) -> Result<f64, CorrelationError> {
        Ok(mutual_information_of(&self.joint(i, j, var)?))
    }
}

/// Mutual information in bits of a joint distribution matrix.
pub fn mutual_information_of(joint: &[Vec<f64>]) -> f64 {
    let rows: Vec<f64> = joint.iter().map(|r| r.iter().sum()).collect();
    let mut cols = vec![0.0; joint.first().map_or(0, Vec::len)];
    for r in joint {
        for (c, x) in cols.iter_mut().zip(r) {
            *c += x;
        }
    }
    let mut mi = 0.0;
    for (a, r) in joint.iter().enumerate() {
        for (b, &p) in r.iter().enumerate() {
            if p > 0.0 {
                mi += p * (p / (rows[a] * cols[b])).log2();
            }
        }
    }
    mi.max(0.0)
}

/// `C(i, j)` for observables `f` at `i` and `f2` at `j`.
pub fn two_point(
    skel: &Skeleton,
    bank: &MergeTensorBank,
    i: usize,
    j: usize,
    f: &Observable,
    f2: &Observable,
) -> Result<f64, CorrelationError> {
    TreeCorrelator::new(skel, bank)?.two_point(i, j, f, f2)
}

/// `I(i, j)` in bits.
pub fn mutual_information(
    skel: &Skeleton,
    bank: &MergeTensorBank,
    i: usize,
    j: usize,
    var: Variable,
) -> Result<f64, CorrelationError> {
    TreeCorrelator::new(skel, bank)?.mutual_information(i, j, var)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecayModel {
    /// `v ∝ e^{-d/τ}`
    Exponential,
    /// `v ∝ d^{-1/τ}`
    Power,
}

impl fmt::Display for DecayModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DecayModel::Exponential => "exponential",
            DecayModel::Power => "power",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub model: DecayModel,
    pub tau: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Smallest and largest distance used.
    pub window: (f64, f64),
}

/// Ordinary least squares of `ln v` against `d` (exponential) or `ln d`
/// (power). The slope is `-1/τ`.
pub fn fit_decay(points: &[(f64, f64)], model: DecayModel) -> Result<DecayFit, CorrelationError> {
    if points.len() < 3 {
        return Err(CorrelationError::InsufficientPoints(points.len()));
    }
    if points.iter().any(|&(d, v)| !(v > 0.0) || (model == DecayModel::Power && !(d > 0.0))) {
        return Err(CorrelationError::NonPositiveValues);
    }
    let xy: Vec<(f64, f64)> =
        points.iter().map(|&(d, v)| (if model == DecayModel::Power { d.ln() } else { d }, v.ln())).collect();
    let m = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / m;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(CorrelationError::InsufficientPoints(1));
    }
    let slope = sxy / sxx;
    if slope >= 0.0 {
        return Err(CorrelationError::NonDecaying(slope));
    }
    let intercept = my - slope * mx;
    let ss_res: f64 = xy.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let ss_tot: f64 = xy.iter().map(|p| (p.1 - my).powi(2)).sum();
    let r_squared = if ss_tot == 0.0 {
        if ss_res == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    };
    let lo = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    Ok(DecayFit { model, tau: -1.0 / slope, intercept, r_squared, window: (lo, hi) })
}

/// Both fits of one series.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayFits {
    pub exponential: Result<DecayFit, CorrelationError>,
    pub power: Result<DecayFit, CorrelationError>,
}

impl DecayFits {
    fn of(points: &[(f64, f64)]) -> Self {
        DecayFits {
            exponential: fit_decay(points, DecayModel::Exponential),
            power: fit_decay(points, DecayModel::Power),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayOptions {
    pub observable: Observable,
    pub variable: Variable,
    /// Inclusive separation range used for the fits.
    pub window: (usize, usize),
}

/// Corpus-averaged `|C̄(r)|` and `Ī(r)` for `r = 1..=R`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusDecay {
    pub r: Vec<usize>,
    pub avg_abs_c: Vec<f64>,
    pub avg_i: Vec<f64>,
    /// Number of leaf pairs averaged at each `r`.
    pub pairs: Vec<usize>,
    pub c_fits: DecayFits,
    pub i_fits: DecayFits,
}

struct Sums {
    c: Vec<f64>,
    i: Vec<f64>,
    k: Vec<usize>,
}

fn tree_sums(
    skel: &Skeleton,
    bank: &MergeTensorBank,
    max_r: usize,
    opts: &DecayOptions,
) -> Result<Sums, CorrelationError> {
    let tc = TreeCorrelator::new(skel, bank)?;
    let n = skel.n_leaves();
    let mut s = Sums { c: vec![0.0; max_r], i: vec![0.0; max_r], k: vec![0; max_r] };
    let g = tc.leaf_weight(&[&opts.observable]);
    let means: Vec<f64> = (0..n).map(|i| tc.mean(i, &opts.observable)).collect::<Result<_, _>>()?;
    for i in 0..n {
        if i + 1 >= n {
            break;
        }
        let kernels = tc.kernels(i);
        for j in i + 1..n.min(i + max_r + 1) {
            let r = j - i;
            let cat = tc.category_joint(&kernels, j);
            let l = &tc.leaves[0];
            // ⟨f_i f_j⟩ = Σ_ab P(a,b) · (G(a)/L(a)) · (G(b)/L(b))
            let ratio = |a: usize| if l[a] > 0.0 { g[a] / l[a] } else { 0.0 };
            let mut joint = 0.0;
            for (a, row) in cat.iter().enumerate() {
                for (b, &p) in row.iter().enumerate() {
                    joint += p * ratio(a) * ratio(b);
                }
            }
            s.c[r - 1] += (joint - means[i] * means[j]).abs();
            let table = match opts.variable {
                Variable::Category => cat,
                Variable::Word => tc.word_joint(&cat),
            };
            s.i[r - 1] += mutual_information_of(&table);
            s.k[r - 1] += 1;
        }
    }
    Ok(s)
}

/// Averages `|C(i,j)|` and `I(i,j)` over every tree and every pair with
/// `j - i = r`, then fits both decay laws inside `opts.window`.
pub fn corpus_average_decay(
    corpus: &[Skeleton],
    bank: &MergeTensorBank,
    max_r: usize,
    opts: &DecayOptions,
) -> Result<CorpusDecay, CorrelationError> {
    let per_tree: Vec<Sums> = corpus.par_iter().map(|sk| tree_sums(sk, bank, max_r, opts)).collect::<Result<_, _>>()?;
    // reduction in input order keeps the result independent of scheduling
    let mut total = Sums { c: vec![0.0; max_r], i: vec![0.0; max_r], k: vec![0; max_r] };
    for s in &per_tree {
        for r in 0..max_r {
            total.c[r] += s.c[r];
            total.i[r] += s.i[r];
            total.k[r] += s.k[r];
        }
    }
    let mut out = CorpusDecay {
        r: Vec::new(),
        avg_abs_c: Vec::new(),
        avg_i: Vec::new(),
        pairs: Vec::new(),
        c_fits: DecayFits::of(&[]),
        i_fits: DecayFits::of(&[]),
    };
    for r in 0..max_r {
        if total.k[r] > 0 {
            out.r.push(r + 1);
            out.avg_abs_c.push(total.c[r] / total.k[r] as f64);
            out.avg_i.push(total.i[r] / total.k[r] as f64);
            out.pairs.push(total.k[r]);
        }
    }
    let (lo, hi) = opts.window;
    let points = |ys: &[f64]| -> Vec<(f64, f64)> {
        out.r.iter().zip(ys).filter(|(r, _)| **r >= lo && **r <= hi).map(|(&r, &y)| (r as f64, y)).collect()
    };
    out.c_fits = DecayFits::of(&points(&out.avg_abs_c));
    out.i_fits = DecayFits::of(&points(&out.avg_i));
    Ok(out)
}

/// Mean syntactic distance at each linear separation `r = 1..n-1`,
/// averaged over every binary shape with `n` leaves.
pub fn mean_distance_profile(n: usize) -> Result<Vec<(usize, f64)>, CorrelationError> {
    let shapes = enumerate_shapes(n)?;
    let sums: Vec<Vec<usize>> = shapes
        .par_iter()
        .map(|s| {
            let sk = s.skeleton();
            let mut acc = vec![0usize; n];
            for i in 0..n {
                for j in i + 1..n {
                    acc[j - i] += syntactic_distance(&sk, i, j).expect("in range");
                }
            }
            acc
        })
        .collect();
    Ok((1..n)
        .map(|r| {
            let total: usize = sums.iter().map(|a| a[r]).sum();
            (r, total as f64 / (shapes.len() * (n - r)) as f64)
        })
        .collect())
}

/// Least-squares slope of mean distance against `log₂ r` for
/// `r = 1..=r_max`.
pub fn mean_distance_log_slope(n: usize, r_max: usize) -> Result<f64, CorrelationError> {
    let pts: Vec<(f64, f64)> = mean_distance_profile(n)?
        .into_iter()
        .filter(|&(r, _)| r <= r_max)
        .map(|(r, d)| ((r as f64).log2(), d))
        .collect();
    if pts.len() < 2 {
        return Err(CorrelationError::InsufficientPoints(pts.len()));
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(sxy / sxx)
}
