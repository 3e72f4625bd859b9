use indexmap::IndexSet;

use super::ParseTree;

/// Default reserved word for unseen words.
pub const DEFAULT_UNK: &str = "<unk>";

/// Closed category and word inventories with dense index maps.
///
/// Categories and words live in separate index spaces. The reserved unknown
/// word is always word index 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grammar {
    categories: IndexSet<String>,
    words: IndexSet<String>,
}

impl Default for Grammar {
    fn default() -> Self {
        Self::with_unk(DEFAULT_UNK)
    }
}

impl Grammar {
    pub fn with_unk(unk: &str) -> Self {
        let mut words = IndexSet::new();
        words.insert(unk.to_string());
        Grammar { categories: IndexSet::new(), words }
    }

    /// Builds a grammar from explicit inventories; `words[0]` is the unknown
    /// token. Returns `None` on duplicates or an empty category list.
    pub fn from_lists(categories: Vec<String>, words: Vec<String>) -> Option<Self> {
        let nc = categories.len();
        let nw = words.len();
        let categories: IndexSet<String> = categories.into_iter().collect();
        let words: IndexSet<String> = words.into_iter().collect();
        if categories.len() != nc || words.len() != nw || nc == 0 || nw == 0 {
            return None;
        }
        Some(Grammar { categories, words })
    }

    pub fn from_trees<'a>(trees: impl IntoIterator<Item = &'a ParseTree>) -> Self {
        let mut g = Grammar::default();
        for t in trees {
            g.add_tree(t);
        }
        g
    }

    pub fn add_tree(&mut self, tree: &ParseTree) {
        for c in tree.categories() {
            self.add_category(c);
        }
        for w in tree.words() {
            self.add_word(w);
        }
    }

    pub fn add_category(&mut self, c: &str) -> usize {
        match self.categories.get_index_of(c) {
            Some(i) => i,
            None => self.categories.insert_full(c.to_string()).0,
        }
    }

    pub fn add_word(&mut self, w: &str) -> usize {
        match self.words.get_index_of(w) {
            Some(i) => i,
            None => self.words.insert_full(w.to_string()).0,
        }
    }

    /// Appends the other grammar's entries not already present.
    pub fn union(&mut self, other: &Grammar) {
        for c in &other.categories {
            self.add_category(c);
        }
        for w in other.words.iter().skip(1) {
            self.add_word(w);
        }
    }

    pub fn n_categories(&self) -> usize {
        self.categories.len()
    }

    /// Vocabulary size, including the unknown token.
    pub fn n_words(&self) -> usize {
        self.words.len()
    }

    pub fn unk_token(&self) -> &str {
        &self.words[0]
    }

    pub fn unk_index(&self) -> usize {
        0
    }

    pub fn category_index(&self, c: &str) -> Option<usize> {
        self.categories.get_index_of(c)
    }

    pub fn word_index(&self, w: &str) -> Option<usize> {
        self.words.get_index_of(w)
    }

    pub fn category(&self, i: usize) -> &str {
        &self.categories[i]
    }

    pub fn word(&self, i: usize) -> &str {
        &self.words[i]
    }

    pub fn categories(&self) -> impl Iterator<Item = &str> {
        self.categories.iter().map(String::as_str)
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.words.iter().map(String::as_str)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_maps_are_bijections() {
        let g = Grammar::from_lists(vec!["N".into(), "V".into()], vec!["<unk>".into(), "cat".into()]).unwrap();
        for i in 0..g.n_categories() {
            assert_eq!(g.category_index(g.category(i)), Some(i));
        }
        for i in 0..g.n_words() {
            assert_eq!(g.word_index(g.word(i)), Some(i));
        }
        assert_eq!(g.unk_token(), "<unk>");
    }

    #[test]
    fn duplicates_rejected() {
        assert!(Grammar::from_lists(vec!["N".into(), "N".into()], vec!["<unk>".into()]).is_none());
        assert!(Grammar::from_lists(vec![], vec!["<unk>".into()]).is_none());
    }

    #[test]
    fn union_keeps_order() {
        let mut a = Grammar::default();
        a.add_category("S");
        a.add_word("x");
        let mut b = Grammar::default();
        b.add_category("N");
        b.add_category("S");
        b.add_word("y");
        a.union(&b);
        assert_eq!(a.categories().collect::<Vec<_>>(), ["S", "N"]);
        assert_eq!(a.words().collect::<Vec<_>>(), ["<unk>", "x", "y"]);
    }
}
