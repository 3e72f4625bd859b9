//! Test-model families and brute-force oracles shared by the integration
//! tests. Everything here is computed independently of the library's
//! contraction code: sentence weights come from a naive recursion over
//! the tree, spectra from a dense eigensolve of the enumerated state.
#![allow(dead_code)]

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stnlm::tensor_bank::{Keep, Level, LexicalMatrix, MergeTensor, MergeTensorBank, TensorKey};
use stnlm::treebank::{enumerate_shapes, Grammar, Skeleton};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn grammar(n_cats: usize, n_words: usize) -> Grammar {
    let cats = (0..n_cats).map(|c| format!("C{c}")).collect();
    let mut words = vec!["<unk>".to_string()];
    words.extend((1..n_words).map(|w| format!("w{w}")));
    Grammar::from_lists(cats, words).unwrap()
}

pub fn random_shape(rng: &mut ChaCha8Rng, n: usize) -> Skeleton {
    let shapes = enumerate_shapes(n).unwrap();
    shapes[rng.random_range(0..shapes.len())].skeleton()
}

fn keys_for(level: Level, skel: &Skeleton) -> Vec<TensorKey> {
    let mut keys: Vec<TensorKey> =
        skel.internal_ids().map(|id| TensorKey::for_node(level, skel.shape(), skel.node(id).coord)).collect();
    keys.sort();
    keys.dedup();
    if keys.is_empty() {
        keys.push(TensorKey::for_node(level, skel.shape(), skel.node(skel.root()).coord));
    }
    keys
}

fn normalize(v: &mut [f64]) {
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
}

fn random_level(rng: &mut ChaCha8Rng) -> Level {
    [Level::Global, Level::Scale, Level::Position, Level::Tree][rng.random_range(0..4)]
}

/// A bank together with the tree shape it is evaluated on.
pub struct TestModel {
    pub name: String,
    pub bank: MergeTensorBank,
    pub skel: Skeleton,
}

/// Dense random tensors with about 30% zeros and an ambiguous lexicon.
pub fn general_model(rng: &mut ChaCha8Rng, n_cats: usize, n_words: usize, skel: Skeleton) -> MergeTensorBank {
    let level = random_level(rng);
    let mut tensors = BTreeMap::new();
    for key in keys_for(level, &skel) {
        let mut data: Vec<f64> =
            (0..n_cats.pow(3)).map(|_| if rng.random::<f64>() < 0.3 { 0.0 } else { rng.random::<f64>() }).collect();
        if data.iter().all(|&x| x == 0.0) {
            data[0] = 1.0;
        }
        normalize(&mut data);
        tensors.insert(key, MergeTensor::from_vec(n_cats, data));
    }
    let mut lex = LexicalMatrix::zeros(n_words, n_cats);
    for w in 0..n_words {
        let mut row: Vec<f64> =
            (0..n_cats).map(|_| if rng.random::<f64>() < 0.3 { 0.0 } else { rng.random::<f64>() }).collect();
        if row.iter().all(|&x| x == 0.0) {
            row[rng.random_range(0..n_cats)] = 1.0;
        }
        normalize(&mut row);
        for (c, p) in row.into_iter().enumerate() {
            lex.set(w, c, p);
        }
    }
    MergeTensorBank::from_tensors(level, grammar(n_cats, n_words), tensors, lex, 0.0)
}

/// Each word has one category and each tensor holds the triples
/// `(α, π(α), σ(α))` with random positive weights, for random
/// permutations `π`, `σ`. Block and environment Gram matrices are then
/// diagonal and `ψ(w)² = p(w)`.
pub fn diagonal_model(rng: &mut ChaCha8Rng, n_cats: usize, n_words: usize, skel: Skeleton) -> MergeTensorBank {
    assert!(n_cats <= n_words);
    let level = [Level::Global, Level::Position][rng.random_range(0..2)];
    let mut tensors = BTreeMap::new();
    for key in keys_for(level, &skel) {
        let mut pi: Vec<usize> = (0..n_cats).collect();
        let mut sigma = pi.clone();
        pi.shuffle(rng);
        sigma.shuffle(rng);
        let mut u: Vec<f64> = (0..n_cats).map(|_| 0.1 + rng.random::<f64>()).collect();
        normalize(&mut u);
        let mut t = MergeTensor::zeros(n_cats);
        for a in 0..n_cats {
            t.set(a, pi[a], sigma[a], u[a]);
        }
        tensors.insert(key, t);
    }
    let mut lex = LexicalMatrix::zeros(n_words, n_cats);
    for w in 0..n_words {
        let c = if w < n_cats { w } else { rng.random_range(0..n_cats) };
        lex.set(w, c, 1.0);
    }
    MergeTensorBank::from_tensors(level, grammar(n_cats, n_words), tensors, lex, 0.0)
}

pub fn general_models(count: usize, seed: u64) -> Vec<TestModel> {
    let mut r = rng(seed);
    (0..count)
        .map(|i| {
            let (nc, nw, n) = (r.random_range(1..=4), r.random_range(1..=4), r.random_range(1..=6));
            let skel = random_shape(&mut r, n);
            TestModel {
                name: format!("general#{i} N={nc} V={nw} n={n}"),
                bank: general_model(&mut r, nc, nw, skel.clone()),
                skel,
            }
        })
        .collect()
}

pub fn diagonal_models(count: usize, seed: u64) -> Vec<TestModel> {
    let mut r = rng(seed);
    (0..count)
        .map(|i| {
            let nc = r.random_range(1..=4);
            let nw = r.random_range(nc..=4);
            let n = r.random_range(1..=6);
            let skel = random_shape(&mut r, n);
            TestModel {
                name: format!("diagonal#{i} N={nc} V={nw} n={n}"),
                bank: diagonal_model(&mut r, nc, nw, skel.clone()),
                skel,
            }
        })
        .collect()
}

fn named_grammar(cats: &[&str], words: &[&str]) -> Grammar {
    let mut w = vec!["<unk>".to_string()];
    w.extend(words.iter().map(|s| s.to_string()));
    Grammar::from_lists(cats.iter().map(|s| s.to_string()).collect(), w).unwrap()
}

/// Toy grammar: categories {D, N, V, NP, VP, S}, triples (D,N,NP),
/// (NP,V,S), (V,NP,VP) at 1/3 each; the→D, cat/dog→N, sleeps→V.
pub fn g0() -> MergeTensorBank {
    let g = named_grammar(&["D", "N", "V", "NP", "VP", "S"], &["the", "cat", "dog", "sleeps"]);
    let c = |s: &str| g.category_index(s).unwrap();
    let mut t = MergeTensor::zeros(6);
    for (a, b, p) in [("D", "N", "NP"), ("NP", "V", "S"), ("V", "NP", "VP")] {
        t.set(c(a), c(b), c(p), 1.0 / 3.0);
    }
    let mut lex = LexicalMatrix::zeros(5, 6);
    for (w, cat) in [("the", "D"), ("cat", "N"), ("dog", "N"), ("sleeps", "V")] {
        lex.set(g.word_index(w).unwrap(), c(cat), 1.0);
    }
    MergeTensorBank::from_tensors(Level::Global, g, BTreeMap::from([(TensorKey::Global, t)]), lex, 0.0)
}

/// Rank-one bank reproducing a unigram model: one category `C_w` per word
/// plus `X`, with `M[α, β, X] = u(α) u(β) / 4`, `u(C_w) = p_w`, `u(X) = 1`.
pub fn onegram_bank(probs: &[(&str, f64)]) -> MergeTensorBank {
    let mut cats: Vec<String> = probs.iter().map(|(w, _)| format!("C_{w}")).collect();
    cats.push("X".into());
    let mut words = vec!["<unk>".to_string()];
    words.extend(probs.iter().map(|(w, _)| w.to_string()));
    let g = Grammar::from_lists(cats, words).unwrap();
    let n = probs.len() + 1;
    let mut u: Vec<f64> = probs.iter().map(|p| p.1).collect();
    u.push(1.0);
    let mut t = MergeTensor::zeros(n);
    for a in 0..n {
        for b in 0..n {
            t.set(a, b, n - 1, u[a] * u[b] / 4.0);
        }
    }
    let mut lex = LexicalMatrix::zeros(n, n);
    for i in 0..probs.len() {
        lex.set(i + 1, i, 1.0);
    }
    MergeTensorBank::from_tensors(Level::Global, g, BTreeMap::from([(TensorKey::Global, t)]), lex, 0.0)
}

/// Level-1 bank over three categories, one word each, whose left, right
/// and parent marginals are all uniform (fitted by iterative proportional
/// scaling). Every node then carries a uniform category marginal, so
/// merge triples pooled over a sampled corpus are distributed exactly as
/// the tensor.
pub fn uniform_margin_bank(seed: u64) -> MergeTensorBank {
    let mut r = rng(seed);
    let n = 3;
    let mut t = MergeTensor::from_vec(n, (0..27).map(|_| 0.05 + r.random::<f64>()).collect());
    for _ in 0..500 {
        for keep in [Keep::Left, Keep::Right, Keep::Parent] {
            let m = t.residual(keep);
            for a in 0..n {
                for b in 0..n {
                    for g in 0..n {
                        let k = match keep {
                            Keep::Left => a,
                            Keep::Right => b,
                            _ => g,
                        };
                        t.set(a, b, g, t.get(a, b, g) / (3.0 * m[k]));
                    }
                }
            }
        }
    }
    let g = named_grammar(&["A", "B", "C"], &["a", "b", "c"]);
    let mut lex = LexicalMatrix::zeros(4, 3);
    for c in 0..3 {
        lex.set(c + 1, c, 1.0);
    }
    MergeTensorBank::from_tensors(Level::Global, g, BTreeMap::from([(TensorKey::Global, t)]), lex, 0.0)
}

/// Two categories copied down the tree with fidelity `q`:
/// `M[α, β, γ] = ½ P(α|γ) P(β|γ)`, `P(α|γ) = q` when `α = γ`.
pub fn copy_channel_bank(q: f64) -> MergeTensorBank {
    let g = named_grammar(&["A", "B"], &["a", "b"]);
    let mut t = MergeTensor::zeros(2);
    let p = |a: usize, g: usize| if a == g { q } else { 1.0 - q };
    for a in 0..2 {
        for b in 0..2 {
            for c in 0..2 {
                t.set(a, b, c, 0.5 * p(a, c) * p(b, c));
            }
        }
    }
    let mut lex = LexicalMatrix::zeros(3, 2);
    lex.set(1, 0, 1.0);
    lex.set(2, 1, 1.0);
    MergeTensorBank::from_tensors(Level::Global, g, BTreeMap::from([(TensorKey::Global, t)]), lex, 0.0)
}

// ----------------------------------------------------------------------
// brute-force oracles

/// Per-category weight of the subtree at `id` with words fixed, by naive
/// recursion; with `amplitude` every factor is square-rooted.
fn naive(skel: &Skeleton, bank: &MergeTensorBank, words: &[usize], id: usize, amplitude: bool) -> Vec<f64> {
    let n = bank.n_categories();
    let f = |x: f64| if amplitude { x.sqrt() } else { x };
    let node = skel.node(id);
    match node.children {
        None => (0..n).map(|c| f(bank.lexical().get(words[node.span.0], c))).collect(),
        Some((l, r)) => {
            let il = naive(skel, bank, words, l, amplitude);
            let ir = naive(skel, bank, words, r, amplitude);
            let t = bank.tensor_at(skel.shape(), node.coord).unwrap();
            (0..n)
                .map(|g| {
                    let mut s = 0.0;
                    for a in 0..n {
                        for b in 0..n {
                            s += f(t.get(a, b, g)) * il[a] * ir[b];
                        }
                    }
                    s
                })
                .collect()
        }
    }
}

/// Weight of words and leaf categories both fixed, internal categories
/// summed by naive recursion.
pub fn labeled_weight(skel: &Skeleton, bank: &MergeTensorBank, words: &[usize], cats: &[usize]) -> f64 {
    fn rec(skel: &Skeleton, bank: &MergeTensorBank, words: &[usize], cats: &[usize], id: usize) -> Vec<f64> {
        let n = bank.n_categories();
        let node = skel.node(id);
        match node.children {
            None => {
                let pos = node.span.0;
                (0..n).map(|c| if c == cats[pos] { bank.lexical().get(words[pos], c) } else { 0.0 }).collect()
            }
            Some((l, r)) => {
                let (il, ir) = (rec(skel, bank, words, cats, l), rec(skel, bank, words, cats, r));
                let t = bank.tensor_at(skel.shape(), node.coord).unwrap();
                (0..n)
                    .map(|g| {
                        let mut s = 0.0;
                        for a in 0..n {
                            for b in 0..n {
                                s += t.get(a, b, g) * il[a] * ir[b];
                            }
                        }
                        s
                    })
                    .collect()
            }
        }
    }
    rec(skel, bank, words, cats, skel.root()).iter().sum()
}

/// Every `(words, leaf categories, weight)` with nonzero weight.
pub fn enumerate_labeled(skel: &Skeleton, bank: &MergeTensorBank) -> Vec<(Vec<usize>, Vec<usize>, f64)> {
    let n = skel.n_leaves();
    let mut out = Vec::new();
    for w in all_tuples(bank.n_words(), n) {
        for c in all_tuples(bank.n_categories(), n) {
            let p = labeled_weight(skel, bank, &w, &c);
            if p > 0.0 {
                out.push((w.clone(), c, p));
            }
        }
    }
    out
}

/// `p(w)` summed over every labeling.
pub fn sentence_weight(skel: &Skeleton, bank: &MergeTensorBank, words: &[usize]) -> f64 {
    naive(skel, bank, words, skel.root(), false).iter().sum()
}

/// `ψ(w) = Σ_c √p(w, c)`.
pub fn amplitude(skel: &Skeleton, bank: &MergeTensorBank, words: &[usize]) -> f64 {
    naive(skel, bank, words, skel.root(), true).iter().sum()
}

/// Every word tuple of length `n` over `v` words, first position most
/// significant.
pub fn all_tuples(v: usize, n: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|t| {
                (0..v).map(move |w| {
                    let mut t = t.clone();
                    t.push(w);
                    t
                })
            })
            .collect();
    }
    out
}

/// Unnormalized `p(w)` for every sentence of the shape.
pub fn enumerate(skel: &Skeleton, bank: &MergeTensorBank) -> Vec<(Vec<usize>, f64)> {
    all_tuples(bank.n_words(), skel.n_leaves())
        .into_iter()
        .map(|w| {
            let p = sentence_weight(skel, bank, &w);
            (w, p)
        })
        .collect()
}

fn tuple_index(words: &[usize], v: usize) -> usize {
    words.iter().fold(0, |acc, &w| acc * v + w)
}

/// `ψ` reshaped to (block words) × (environment words).
fn psi_matrix(skel: &Skeleton, bank: &MergeTensorBank, start: usize, len: usize) -> DMatrix<f64> {
    let v = bank.n_words();
    let n = skel.n_leaves();
    let rows = v.pow(len as u32);
    let cols = v.pow((n - len) as u32);
    let mut m = DMatrix::zeros(rows, cols);
    for w in all_tuples(v, n) {
        let block = &w[start..start + len];
        let env: Vec<usize> = w[..start].iter().chain(&w[start + len..]).copied().collect();
        m[(tuple_index(block, v), tuple_index(&env, v))] = amplitude(skel, bank, &w);
    }
    m
}

/// Eigenvalues of the block's reduced density matrix from the dense
/// enumerated state, in decreasing order. Uses whichever of `ΨΨᵀ` and
/// `ΨᵀΨ` is smaller; both share the nonzero spectrum.
pub fn dense_block_spectrum(skel: &Skeleton, bank: &MergeTensorBank, start: usize, len: usize) -> Vec<f64> {
    let psi = psi_matrix(skel, bank, start, len);
    let norm: f64 = psi.iter().map(|x| x * x).sum();
    let rho = if psi.nrows() <= psi.ncols() { &psi * psi.transpose() } else { psi.transpose() * &psi } / norm;
    let mut e: Vec<f64> = SymmetricEigen::new(rho).eigenvalues.iter().copied().collect();
    e.sort_by(|a, b| b.total_cmp(a));
    e
}

/// Normalized probability of each word tuple of the block.
pub fn block_distribution(skel: &Skeleton, bank: &MergeTensorBank, start: usize, len: usize) -> Vec<f64> {
    let v = bank.n_words();
    let mut out = vec![0.0; v.pow(len as u32)];
    let mut z = 0.0;
    for (w, p) in enumerate(skel, bank) {
        out[tuple_index(&w[start..start + len], v)] += p;
        z += p;
    }
    out.iter_mut().for_each(|x| *x /= z);
    out
}

/// Perplexity of the raw sentence weights under their own normalized
/// distribution, `2^{-Σ q log₂ p}` with `q = p / Z`; equals `2^{H(q)} / Z`.
pub fn raw_perplexity(weights: &[(Vec<usize>, f64)]) -> f64 {
    let z: f64 = weights.iter().map(|x| x.1).sum();
    let h: f64 = weights.iter().filter(|x| x.1 > 0.0).map(|x| -(x.1 / z) * x.1.log2()).sum();
    h.exp2()
}

pub fn entropy_bits(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.log2()).sum::<f64>()
}

/// Sorted partial sums of `a` dominate those of `b` (after sorting both
/// in decreasing order), up to `tol`.
pub fn majorizes(a: &[f64], b: &[f64], tol: f64) -> bool {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(|x, y| y.total_cmp(x));
    b.sort_by(|x, y| y.total_cmp(x));
    let len = a.len().max(b.len());
    let (mut sa, mut sb) = (0.0, 0.0);
    for k in 0..len {
        sa += a.get(k).copied().unwrap_or(0.0);
        sb += b.get(k).copied().unwrap_or(0.0);
        if sa + tol < sb {
            return false;
        }
    }
    true
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Applies an exported circuit top-down and returns the final state over
/// all qudits (dimension `d^n`, qudit 0 most significant).
pub fn simulate(c: &stnlm::spectral::Circuit) -> Vec<f64> {
    let d = c.dim;
    let n = c.n_qudits;
    let size = d.pow(n as u32);
    let mut state = vec![0.0; size];
    let stride = |q: usize| d.pow((n - 1 - q) as u32);
    for (x, &amp) in c.prep.iter().enumerate() {
        state[x * stride(c.prep_qudit)] = amp;
    }
    for g in c.gates.iter().rev() {
        let (sa, sb) = (stride(g.a), stride(g.b));
        let mut next = vec![0.0; size];
        for (idx, &amp) in state.iter().enumerate() {
            if amp == 0.0 {
                continue;
            }
            let (xa, xb) = ((idx / sa) % d, (idx / sb) % d);
            let base = idx - xa * sa - xb * sb;
            let col = xa * d + xb;
            for ya in 0..d {
                for yb in 0..d {
                    let u = g.unitary[(ya * d + yb, col)];
                    if u != 0.0 {
                        next[base + ya * sa + yb * sb] += u * amp;
                    }
                }
            }
        }
        state = next;
    }
    state
}

pub fn sorted_desc(v: &[f64]) -> Vec<f64> {
    let mut v = v.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// Largest difference between two spectra after sorting and zero-padding.
pub fn spectrum_gap(a: &[f64], b: &[f64]) -> f64 {
    let (a, b) = (sorted_desc(a), sorted_desc(b));
    (0..a.len().max(b.len()))
        .map(|k| (a.get(k).copied().unwrap_or(0.0) - b.get(k).copied().unwrap_or(0.0)).abs())
        .fold(0.0, f64::max)
}
