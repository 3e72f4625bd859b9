use std::fmt;

use num_bigint::BigUint;

use super::tree::Coord;
use super::TreebankError;

/// Largest leaf count accepted by [`enumerate_shapes`].
pub const MAX_ENUMERATED_LEAVES: usize = 14;

/// Canonical bracket structure of a binary tree with labels erased.
///
/// A leaf is `.`, an internal node is `(` left right `)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TreeShape(String);

impl TreeShape {
    /// Validates a shape string.
    pub fn new(s: &str) -> Result<Self, TreebankError> {
        let sk = Skeleton::from_shape_str(s)?;
        Ok(sk.shape)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn skeleton(&self) -> Skeleton {
        Skeleton::from_shape_str(&self.0).expect("validated shape")
    }

    /// Number of leaves (`.` characters).
    pub fn n_leaves(&self) -> usize {
        self.0.bytes().filter(|&b| b == b'.').count()
    }
}

impl fmt::Display for TreeShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkeletonNode {
    pub children: Option<(usize, usize)>,
    pub parent: Option<usize>,
    pub coord: Coord,
    /// Leaf positions covered, half-open.
    pub span: (usize, usize),
    /// Edge count from the root.
    pub depth: usize,
}

impl SkeletonNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }
}

/// Unlabeled binary tree with coordinates.
///
/// Nodes are stored in post-order, so every child precedes its parent and
/// the root is the last node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Skeleton {
    nodes: Vec<SkeletonNode>,
    leaves: Vec<usize>,
    shape: TreeShape,
}

pub(crate) enum Bin {
    Leaf,
    Node(Box<Bin>, Box<Bin>),
}

impl Skeleton {
    pub(crate) fn from_bin(bin: &Bin) -> Self {
        fn build(b: &Bin, nodes: &mut Vec<SkeletonNode>, next_leaf: &mut usize, shape: &mut String) -> usize {
            match b {
                Bin::Leaf => {
                    let t = *next_leaf;
                    *next_leaf += 1;
                    shape.push('.');
                    nodes.push(SkeletonNode {
                        children: None,
                        parent: None,
                        coord: Coord { z: 1, t: t as u32 },
                        span: (t, t + 1),
                        depth: 0,
                    });
                    nodes.len() - 1
                }
                Bin::Node(l, r) => {
                    shape.push('(');
                    let li = build(l, nodes, next_leaf, shape);
                    let ri = build(r, nodes, next_leaf, shape);
                    shape.push(')');
                    let z = 1 + nodes[li].coord.z.max(nodes[ri].coord.z);
                    let span = (nodes[li].span.0, nodes[ri].span.1);
                    nodes.push(SkeletonNode {
                        children: Some((li, ri)),
                        parent: None,
                        coord: Coord { z, t: span.0 as u32 },
                        span,
                        depth: 0,
                    });
                    let id = nodes.len() - 1;
                    nodes[li].parent = Some(id);
                    nodes[ri].parent = Some(id);
                    id
                }
            }
        }
        let mut nodes = Vec::new();
        let mut next_leaf = 0;
        let mut shape = String::new();
        build(bin, &mut nodes, &mut next_leaf, &mut shape);
        for id in (0..nodes.len()).rev() {
            if let Some(p) = nodes[id].parent {
                nodes[id].depth = nodes[p].depth + 1;
            }
        }
        let mut leaves = vec![0; next_leaf];
        for (id, node) in nodes.iter().enumerate() {
            if node.is_leaf() {
                leaves[node.span.0] = id;
            }
        }
        Skeleton { nodes, leaves, shape: TreeShape(shape) }
    }

    pub(crate) fn from_shape_str(s: &str) -> Result<Self, TreebankError> {
        fn parse(bytes: &[u8], pos: &mut usize, full: &str) -> Result<Bin, TreebankError> {
            let bad = || TreebankError::InvalidShape(full.to_string());
            match bytes.get(*pos) {
                Some(b'.') => {
                    *pos += 1;
                    Ok(Bin::Leaf)
                }
                Some(b'(') => {
                    *pos += 1;
                    let l = parse(bytes, pos, full)?;
                    let r = parse(bytes, pos, full)?;
                    if bytes.get(*pos) != Some(&b')') {
                        return Err(bad());
                    }
                    *pos += 1;
                    Ok(Bin::Node(Box::new(l), Box::new(r)))
                }
                _ => Err(bad()),
            }
        }
        let s = s.trim();
        let mut pos = 0;
        let bin = parse(s.as_bytes(), &mut pos, s)?;
        if pos != s.len() {
            return Err(TreebankError::InvalidShape(s.to_string()));
        }
        Ok(Self::from_bin(&bin))
    }

    /// Left-branching chain over `n` leaves, `(((..).).)`.
    pub fn left_caterpillar(n: usize) -> Self {
        assert!(n >= 1);
        let mut b = Bin::Leaf;
        for _ in 1..n {
            b = Bin::Node(Box::new(b), Box::new(Bin::Leaf));
        }
        Self::from_bin(&b)
    }

    /// Right-branching chain over `n` leaves, `(.(.(..)))`.
    pub fn right_caterpillar(n: usize) -> Self {
        assert!(n >= 1);
        let mut b = Bin::Leaf;
        for _ in 1..n {
            b = Bin::Node(Box::new(Bin::Leaf), Box::new(b));
        }
        Self::from_bin(&b)
    }

    /// Balanced tree; the left half gets the extra leaf when `n` is odd.
    pub fn balanced(n: usize) -> Self {
        fn go(n: usize) -> Bin {
            if n == 1 {
                Bin::Leaf
            } else {
                let l = n.div_ceil(2);
                Bin::Node(Box::new(go(l)), Box::new(go(n - l)))
            }
        }
        assert!(n >= 1);
        Self::from_bin(&go(n))
    }

    pub fn nodes(&self) -> &[SkeletonNode] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &SkeletonNode {
        &self.nodes[id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn n_leaves(&self) -> usize {
        self.leaves.len()
    }

    pub fn n_internal(&self) -> usize {
        self.nodes.len() - self.leaves.len()
    }

    /// Node id of the leaf at sentence position `pos`.
    pub fn leaf(&self, pos: usize) -> usize {
        self.leaves[pos]
    }

    pub fn leaves(&self) -> &[usize] {
        &self.leaves
    }

    pub fn shape(&self) -> &TreeShape {
        &self.shape
    }

    pub fn height(&self) -> u32 {
        self.nodes[self.root()].coord.z
    }

    pub fn internal_ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().enumerate().filter(|(_, n)| !n.is_leaf()).map(|(i, _)| i)
    }

    /// Node whose span is exactly `[start, end)`, if any.
    pub fn node_with_span(&self, start: usize, end: usize) -> Option<usize> {
        self.nodes.iter().position(|n| n.span == (start, end))
    }

    /// Maximal nodes whose spans lie inside `[start, end)`, left to right.
    pub fn cover(&self, start: usize, end: usize) -> Vec<usize> {
        let inside = |id: usize| {
            let s = self.nodes[id].span;
            s.0 >= start && s.1 <= end
        };
        let mut out: Vec<usize> = (0..self.nodes.len())
            .filter(|&id| inside(id) && self.nodes[id].parent.is_none_or(|p| !inside(p)))
            .collect();
        out.sort_by_key(|&id| self.nodes[id].span.0);
        out
    }
}

/// `C(n-1) = (2(n-1))! / (n! (n-1)!)`, the number of binary tree shapes
/// over `n` leaves.
pub fn catalan_count(n: usize) -> Result<BigUint, TreebankError> {
    if n == 0 {
        return Err(TreebankError::ZeroLength);
    }
    let m = (n - 1) as u64;
    // C(m) = prod_{k=2}^{m} (m + k) / k
    let mut num = BigUint::from(1u32);
    let mut den = BigUint::from(1u32);
    for k in 2..=m {
        num *= m + k;
        den *= k;
    }
    Ok(num / den)
}

/// All binary tree shapes over `n` leaves, in a deterministic order.
pub fn enumerate_shapes(n: usize) -> Result<Vec<TreeShape>, TreebankError> {
    if n == 0 {
        return Err(TreebankError::ZeroLength);
    }
    if n > MAX_ENUMERATED_LEAVES {
        return Err(TreebankError::LimitExceeded { requested: n, max: MAX_ENUMERATED_LEAVES });
    }
    let mut table: Vec<Vec<String>> = vec![Vec::new(), vec![".".to_string()]];
    for size in 2..=n {
        let mut here = Vec::new();
        for left in 1..size {
            for l in &table[left] {
                for r in &table[size - left] {
                    here.push(format!("({l}{r})"));
                }
            }
        }
        table.push(here);
    }
    Ok(table.swap_remove(n).into_iter().map(TreeShape).collect())
}
