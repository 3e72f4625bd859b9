//! Inside/outside contraction of a tree of MERGE tensors.
//!
//! Vectors are stored as `v · e^log` with `v` scaled to unit max-norm so
//! long sentences do not underflow.

use crate::tensor_bank::MergeTensor;
use crate::treebank::Skeleton;

#[derive(Debug, Clone)]
pub(crate) struct Scaled {
    pub v: Vec<f64>,
    pub log: f64,
}

impl Scaled {
    pub fn new(mut v: Vec<f64>, log: f64) -> Self {
        let m = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if m == 0.0 || log == f64::NEG_INFINITY {
            v.iter_mut().for_each(|x| *x = 0.0);
            return Scaled { v, log: f64::NEG_INFINITY };
        }
        v.iter_mut().for_each(|x| *x /= m);
        Scaled { v, log: log + m.ln() }
    }

    pub fn ones(n: usize) -> Self {
        Scaled { v: vec![1.0; n], log: 0.0 }
    }

    /// `ln Σ_i value_i`; entries must be non-negative.
    pub fn log_sum(&self) -> f64 {
        let s: f64 = self.v.iter().sum();
        if s <= 0.0 {
            f64::NEG_INFINITY
        } else {
            s.ln() + self.log
        }
    }

    /// `Σ_i w_i · value_i · e^{-log_norm}`.
    pub fn dot_rel(&self, w: &[f64], log_norm: f64) -> f64 {
        if self.log == f64::NEG_INFINITY {
            return 0.0;
        }
        let s: f64 = self.v.iter().zip(w).map(|(a, b)| a * b).sum();
        s * (self.log - log_norm).exp()
    }
}

/// `out[γ] = Σ_{α,β} M[α,β,γ] l[α] r[β]`.
pub(crate) fn merge_up(t: &MergeTensor, l: &[f64], r: &[f64]) -> Vec<f64> {
    let n = t.dim();
    let m = t.as_slice();
    let mut out = vec![0.0; n];
    for a in 0..n {
        if l[a] == 0.0 {
            continue;
        }
        for b in 0..n {
            let w = l[a] * r[b];
            if w == 0.0 {
                continue;
            }
            let row = &m[(a * n + b) * n..(a * n + b + 1) * n];
            for (o, &x) in out.iter_mut().zip(row) {
                *o += w * x;
            }
        }
    }
    out
}

/// Outside vector of the left child: `Σ_{β,γ} M[α,β,γ] r[β] o[γ]`.
fn push_left(t: &MergeTensor, r: &[f64], o: &[f64]) -> Vec<f64> {
    let n = t.dim();
    (0..n)
        .map(|a| {
            let mut s = 0.0;
            for b in 0..n {
                if r[b] == 0.0 {
                    continue;
                }
                let inner: f64 = (0..n).map(|g| t.get(a, b, g) * o[g]).sum();
                s += r[b] * inner;
            }
            s
        })
        .collect()
}

/// Outside vector of the right child: `Σ_{α,γ} M[α,β,γ] l[α] o[γ]`.
fn push_right(t: &MergeTensor, l: &[f64], o: &[f64]) -> Vec<f64> {
    let n = t.dim();
    let mut out = vec![0.0; n];
    for a in 0..n {
        if l[a] == 0.0 {
            continue;
        }
        for (b, ob) in out.iter_mut().enumerate() {
            let inner: f64 = (0..n).map(|g| t.get(a, b, g) * o[g]).sum();
            *ob += l[a] * inner;
        }
    }
    out
}

/// Inside vectors of every node. `leaves[p]` is the weight vector over
/// categories at leaf position `p`; `tensors[id]` is set for internal nodes.
pub(crate) fn inside(skel: &Skeleton, tensors: &[Option<&MergeTensor>], leaves: &[Vec<f64>]) -> Vec<Scaled> {
    let mut out: Vec<Scaled> = Vec::with_capacity(skel.len());
    for (id, node) in skel.nodes().iter().enumerate() {
        let s = match node.children {
            None => Scaled::new(leaves[node.span.0].clone(), 0.0),
            Some((l, r)) => {
                let t = tensors[id].expect("tensor for internal node");
                let (il, ir) = (&out[l], &out[r]);
                Scaled::new(merge_up(t, &il.v, &ir.v), il.log + ir.log)
            }
        };
        out.push(s);
    }
    out
}

/// Outside vectors of every node; the root's outside vector is all ones.
pub(crate) fn outside(skel: &Skeleton, tensors: &[Option<&MergeTensor>], ins: &[Scaled]) -> Vec<Scaled> {
    let n = ins[0].v.len();
    let mut out = vec![Scaled { v: Vec::new(), log: 0.0 }; skel.len()];
    out[skel.root()] = Scaled::ones(n);
    for id in (0..skel.len()).rev() {
        if let Some((l, r)) = skel.node(id).children {
            let t = tensors[id].expect("tensor for internal node");
            let o = &out[id];
            let left = Scaled::new(push_left(t, &ins[r].v, &o.v), ins[r].log + o.log);
            let right = Scaled::new(push_right(t, &ins[l].v, &o.v), ins[l].log + o.log);
            out[l] = left;
            out[r] = right;
        }
    }
    out
}

/// Inside and outside vectors plus `ln Z`.
pub(crate) struct Contraction {
    pub inside: Vec<Scaled>,
    pub outside: Vec<Scaled>,
    pub log_z: f64,
}

impl Contraction {
    pub fn run(skel: &Skeleton, tensors: &[Option<&MergeTensor>], leaves: &[Vec<f64>]) -> Self {
        let inside = inside(skel, tensors, leaves);
        let log_z = inside[skel.root()].log_sum();
        let outside = outside(skel, tensors, &inside);
        Contraction { inside, outside, log_z }
    }

    /// Posterior category distribution at node `id` (all zeros if `Z = 0`).
    pub fn node_marginal(&self, id: usize) -> Vec<f64> {
        let (i, o) = (&self.inside[id], &self.outside[id]);
        if self.log_z == f64::NEG_INFINITY || i.log == f64::NEG_INFINITY || o.log == f64::NEG_INFINITY {
            return vec![0.0; i.v.len()];
        }
        let f = (i.log + o.log - self.log_z).exp();
        i.v.iter().zip(&o.v).map(|(a, b)| a * b * f).collect()
    }
}
