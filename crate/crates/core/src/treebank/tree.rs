use std::fmt;

use super::shape::{Bin, Skeleton, TreeShape};
use super::TreebankError;

/// Position of a node in the ⟨z,t⟩ plane.
///
/// `z` counts levels from the leaves (`z = 1`) upward and `t` is the
/// leftmost leaf index of the node's span.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Coord {
    pub z: u32,
    pub t: u32,
}

/// Labeled tree of arbitrary arity, as read from a treebank.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SyntaxTree {
    Leaf { category: String, word: String },
    Node { category: String, children: Vec<SyntaxTree> },
}

impl SyntaxTree {
    pub fn category(&self) -> &str {
        match self {
            SyntaxTree::Leaf { category, .. } | SyntaxTree::Node { category, .. } => category,
        }
    }

    pub fn words(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_words(&mut out);
        out
    }

    fn collect_words<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            SyntaxTree::Leaf { word, .. } => out.push(word),
            SyntaxTree::Node { children, .. } => children.iter().for_each(|c| c.collect_words(out)),
        }
    }

    pub fn is_binary(&self) -> bool {
        match self {
            SyntaxTree::Leaf { .. } => true,
            SyntaxTree::Node { children, .. } => children.len() == 2 && children.iter().all(SyntaxTree::is_binary),
        }
    }
}

impl fmt::Display for SyntaxTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SyntaxTree::Leaf { category, word } => write!(f, "({category} {word})"),
            SyntaxTree::Node { category, children } => {
                write!(f, "({category}")?;
                for c in children {
                    write!(f, " {c}")?;
                }
                write!(f, ")")
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinarizePolicy {
    Left,
    Right,
}

/// Rewrites every k-ary node (k > 2) labeled `L` as a nested chain of binary
/// nodes whose intermediate nodes are labeled `L'`. Leaf order is preserved
/// and binary nodes are left untouched.
pub fn binarize(tree: &SyntaxTree, policy: BinarizePolicy) -> SyntaxTree {
    match tree {
        SyntaxTree::Leaf { .. } => tree.clone(),
        SyntaxTree::Node { category, children } => {
            let mut kids: Vec<SyntaxTree> = children.iter().map(|c| binarize(c, policy)).collect();
            if kids.len() <= 2 {
                return SyntaxTree::Node { category: category.clone(), children: kids };
            }
            let primed = format!("{category}'");
            let node = |category: &str, l, r| SyntaxTree::Node { category: category.to_string(), children: vec![l, r] };
            match policy {
                BinarizePolicy::Left => {
                    let last = kids.pop().expect("k > 2");
                    let mut it = kids.into_iter();
                    let first = it.next().expect("k > 2");
                    let acc = it.fold(first, |acc, k| node(&primed, acc, k));
                    node(category, acc, last)
                }
                BinarizePolicy::Right => {
                    let first = kids.remove(0);
                    let last = kids.pop().expect("k > 2");
                    let acc = kids.into_iter().rev().fold(last, |acc, k| node(&primed, k, acc));
                    node(category, first, acc)
                }
            }
        }
    }
}

/// Strictly binary parse tree: a [`Skeleton`] plus a category per node and
/// a word per leaf.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseTree {
    skeleton: Skeleton,
    categories: Vec<String>,
    words: Vec<String>,
}

/// Borrowed view of one node of a [`ParseTree`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeView<'a> {
    Leaf { word: &'a str, category: &'a str, coord: Coord },
    Internal { category: &'a str, left: usize, right: usize, coord: Coord },
}

impl ParseTree {
    /// Builds a parse tree from a binary syntax tree.
    pub fn from_syntax(tree: &SyntaxTree) -> Result<Self, TreebankError> {
        fn shape(t: &SyntaxTree) -> Result<Bin, TreebankError> {
            match t {
                SyntaxTree::Leaf { .. } => Ok(Bin::Leaf),
                SyntaxTree::Node { children, .. } if children.len() == 2 => {
                    Ok(Bin::Node(Box::new(shape(&children[0])?), Box::new(shape(&children[1])?)))
                }
                SyntaxTree::Node { children, .. } if children.is_empty() => Err(TreebankError::EmptyNode(0)),
                SyntaxTree::Node { .. } => Err(TreebankError::NonBinaryNode(0)),
            }
        }
        // post-order, matching the skeleton's node order
        fn labels(t: &SyntaxTree, cats: &mut Vec<String>, words: &mut Vec<String>) {
            match t {
                SyntaxTree::Leaf { category, word } => {
                    cats.push(category.clone());
                    words.push(word.clone());
                }
                SyntaxTree::Node { category, children } => {
                    children.iter().for_each(|c| labels(c, cats, words));
                    cats.push(category.clone());
                }
            }
        }
        let skeleton = Skeleton::from_bin(&shape(tree)?);
        let mut categories = Vec::with_capacity(skeleton.len());
        let mut words = Vec::with_capacity(skeleton.n_leaves());
        labels(tree, &mut categories, &mut words);
        Ok(ParseTree { skeleton, categories, words })
    }

    /// Attaches labels to a skeleton. `categories` is indexed by node id and
    /// `words` by leaf position.
    pub fn from_parts(skeleton: Skeleton, categories: Vec<String>, words: Vec<String>) -> Self {
        assert_eq!(categories.len(), skeleton.len());
        assert_eq!(words.len(), skeleton.n_leaves());
        ParseTree { skeleton, categories, words }
    }

    pub fn skeleton(&self) -> &Skeleton {
        &self.skeleton
    }

    pub fn shape(&self) -> &TreeShape {
        self.skeleton.shape()
    }

    pub fn n_leaves(&self) -> usize {
        self.words.len()
    }

    pub fn n_internal(&self) -> usize {
        self.skeleton.n_internal()
    }

    pub fn root(&self) -> usize {
        self.skeleton.root()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// Category label of every node, indexed by node id.
    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn category(&self, id: usize) -> &str {
        &self.categories[id]
    }

    pub fn node(&self, id: usize) -> NodeView<'_> {
        let n = self.skeleton.node(id);
        match n.children {
            None => NodeView::Leaf { word: &self.words[n.span.0], category: &self.categories[id], coord: n.coord },
            Some((left, right)) => NodeView::Internal { category: &self.categories[id], left, right, coord: n.coord },
        }
    }

    pub fn to_syntax(&self) -> SyntaxTree {
        self.syntax_at(self.root())
    }

    fn syntax_at(&self, id: usize) -> SyntaxTree {
        match self.node(id) {
            NodeView::Leaf { word, category, .. } => {
                SyntaxTree::Leaf { category: category.to_string(), word: word.to_string() }
            }
            NodeView::Internal { category, left, right, .. } => SyntaxTree::Node {
                category: category.to_string(),
                children: vec![self.syntax_at(left), self.syntax_at(right)],
            },
        }
    }
}

impl fmt::Display for ParseTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_syntax())
    }
}
