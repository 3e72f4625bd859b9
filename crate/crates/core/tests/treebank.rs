use proptest::prelude::*;
use stnlm::treebank::{
    binarize, catalan_count, enumerate_shapes, parse_bracketed, parse_syntax, BinarizePolicy, ParseOptions, ParseTree,
    Skeleton, TreeShape, TreebankError,
};

const FIXTURES: &[&str] = &[
    "(S (NP (D the) (N cat)) (VP (V eats) (NP (D the) (N fish))))",
    "(N cat)",
    "(S (NP-SBJ (D the) (N dog)) (VP (V sleeps) (ADV soundly)))",
    "(S (NP (PRP he)) (VP (V sees) (NP (NP (D a) (N man)) (PP (P with) (NP (D a) (N telescope))))))",
    "(S (A a) (S (B b) (S (C c) (D d))))",
];

fn one(text: &str) -> ParseTree {
    parse_bracketed(text, &ParseOptions::default()).unwrap().trees.remove(0)
}

#[test]
fn fixtures_have_n_minus_one_internal_nodes() {
    for text in FIXTURES {
        let t = one(text);
        assert_eq!(t.n_internal() + 1, t.n_leaves(), "{text}");
        assert_eq!(t.skeleton().len(), 2 * t.n_leaves() - 1);
    }
}

#[test]
fn five_word_example() {
    let t = one(FIXTURES[0]);
    assert_eq!(t.n_leaves(), 5);
    assert_eq!(t.n_internal(), 4);
    assert_eq!(t.category(t.root()), "S");
    assert_eq!(t.words(), ["the", "cat", "eats", "the", "fish"]);
}

#[test]
fn single_leaf_tree() {
    let t = one("(N cat)");
    assert_eq!((t.n_leaves(), t.n_internal()), (1, 0));
    assert_eq!(t.shape().as_str(), ".");
}

#[test]
fn ternary_node_rejected_without_binarization() {
    let r = parse_bracketed("(S (NP (D the) (A happy) (N cat)) (V sleeps))", &ParseOptions::default());
    assert!(matches!(r, Err(TreebankError::NonBinaryNode(_))));
}

#[test]
fn left_binarization_of_ternary_np() {
    let (trees, _) = parse_syntax("(NP (D the) (A happy) (N cat))", false).unwrap();
    let b = binarize(&trees[0], BinarizePolicy::Left);
    assert_eq!(b.to_string(), "(NP (NP' (D the) (A happy)) (N cat))");
}

#[test]
fn right_binarization_of_four_ary_node() {
    let (trees, _) = parse_syntax("(X (A a) (B b) (C c) (D d))", false).unwrap();
    let b = binarize(&trees[0], BinarizePolicy::Right);
    let t = ParseTree::from_syntax(&b).unwrap();
    // three binary nodes nested to the right
    assert_eq!(t.n_internal(), 3);
    assert_eq!(t.shape().as_str(), "(.(.(..)))");
    assert_eq!(b.to_string(), "(X (A a) (X' (B b) (X' (C c) (D d))))");
}

#[test]
fn binarize_is_identity_on_binary_trees() {
    let (trees, _) = parse_syntax(FIXTURES[3], false).unwrap();
    for p in [BinarizePolicy::Left, BinarizePolicy::Right] {
        assert_eq!(binarize(&trees[0], p), trees[0]);
    }
}

#[test]
fn function_tags_stripped_and_unaries_collapsed() {
    let tb = parse_bracketed("(S (NP-SBJ=2 (N cats)) (VP (V sleep)))", &ParseOptions::default()).unwrap();
    let t = &tb.trees[0];
    assert_eq!(t.category(t.skeleton().leaf(0)), "N");
    assert_eq!(tb.stats.unary_collapsed, 2);
    assert!(tb.grammar.category_index("NP").is_none());
}

#[test]
fn traces_abort_or_skip() {
    let text = "(S (NP (-NONE- *T*)) (V go)) (S (N a) (V b))";
    assert!(matches!(parse_bracketed(text, &ParseOptions::default()), Err(TreebankError::TraceToken(_))));
    let tb = parse_bracketed(text, &ParseOptions { skip_traces: true, ..Default::default() }).unwrap();
    assert_eq!(tb.trees.len(), 1);
    assert_eq!(tb.stats.skipped_traces, 1);
}

#[test]
fn malformed_input_errors() {
    let o = ParseOptions::default();
    assert!(matches!(parse_bracketed("(S (N a) (V b)", &o), Err(TreebankError::UnbalancedBrackets(_))));
    assert!(matches!(parse_bracketed("(S (N a) (V b)))", &o), Err(TreebankError::UnbalancedBrackets(_))));
    assert!(matches!(parse_bracketed("()", &o), Err(TreebankError::EmptyNode(_))));
}

#[test]
fn shape_strings() {
    assert_eq!(one("(S (A a) (B b))").shape().as_str(), "(..)");
    assert_eq!(Skeleton::left_caterpillar(4).shape().as_str(), "(((..).).)");
    assert_eq!(Skeleton::balanced(4).shape().as_str(), "((..)(..))");
}

#[test]
fn coordinates_follow_convention() {
    for text in FIXTURES {
        let t = one(text);
        let sk = t.skeleton();
        for (pos, &id) in sk.leaves().iter().enumerate() {
            assert_eq!(sk.node(id).coord.z, 1);
            assert_eq!(sk.node(id).coord.t as usize, pos);
        }
        for id in sk.internal_ids() {
            let (l, r) = sk.node(id).children.unwrap();
            let c = sk.node(id).coord;
            assert_eq!(c.z, 1 + sk.node(l).coord.z.max(sk.node(r).coord.z));
            assert_eq!(c.t, sk.node(l).coord.t);
        }
        assert_eq!(sk.node(sk.root()).coord.z, sk.height());
    }
}

#[test]
fn catalan_small_values() {
    assert_eq!(catalan_count(1).unwrap().to_string(), "1");
    assert_eq!(catalan_count(4).unwrap().to_string(), "5");
    assert_eq!(catalan_count(10).unwrap().to_string(), "4862");
    assert_eq!(catalan_count(30).unwrap().to_string(), "1002242216651368");
    for n in [40, 60] {
        assert_eq!(catalan_count(n).unwrap().to_string(), shapes_by_recurrence(n).to_string());
    }
}

/// Independent count of binary shapes by the split recurrence.
fn shapes_by_recurrence(n: usize) -> u128 {
    let mut c = vec![0u128; n + 1];
    c[1] = 1;
    for m in 2..=n {
        c[m] = (1..m).map(|k| c[k] * c[m - k]).sum();
    }
    c[n]
}

#[test]
fn enumeration_matches_catalan_through_twelve() {
    for n in 1..=12 {
        let shapes = enumerate_shapes(n).unwrap();
        let mut uniq: Vec<&str> = shapes.iter().map(TreeShape::as_str).collect();
        uniq.sort_unstable();
        uniq.dedup();
        assert_eq!(uniq.len(), shapes.len());
        assert_eq!(shapes.len() as u128, shapes_by_recurrence(n));
        assert_eq!(catalan_count(n).unwrap().to_string(), shapes.len().to_string(), "n={n}");
    }
}

#[test]
fn small_enumerations() {
    let s3: Vec<String> = enumerate_shapes(3).unwrap().iter().map(|s| s.as_str().to_string()).collect();
    assert_eq!(s3.len(), 2);
    assert!(s3.contains(&"((..).)".to_string()) && s3.contains(&"(.(..))".to_string()));
    assert_eq!(enumerate_shapes(1).unwrap()[0].as_str(), ".");
    assert_eq!(enumerate_shapes(6).unwrap().len(), 42);
    assert!(matches!(enumerate_shapes(15), Err(TreebankError::LimitExceeded { .. })));
}

fn arb_syntax(depth: u32) -> impl Strategy<Value = String> {
    let leaf = ("[a-d]", "[a-e]").prop_map(|(c, w)| format!("({} {})", c.to_uppercase(), w));
    leaf.prop_recursive(depth, 64, 4, |inner| {
        (prop::collection::vec(inner, 2..=4), "[A-D]").prop_map(|(kids, c)| format!("({c} {})", kids.join(" ")))
    })
}

proptest! {
    #[test]
    fn binarized_trees_keep_words_and_binary_count(text in arb_syntax(4)) {
        let (trees, _) = parse_syntax(&text, false).unwrap();
        let words: Vec<String> = trees[0].words().into_iter().map(String::from).collect();
        for p in [BinarizePolicy::Left, BinarizePolicy::Right] {
            let b = binarize(&trees[0], p);
            prop_assert!(b.is_binary());
            prop_assert_eq!(binarize(&b, p).clone(), b.clone());
            let t = ParseTree::from_syntax(&b).unwrap();
            prop_assert_eq!(t.words(), words.as_slice());
            prop_assert_eq!(t.n_internal() + 1, t.n_leaves());
        }
    }

    #[test]
    fn shape_round_trips_through_skeleton(text in arb_syntax(4)) {
        let opts = ParseOptions { binarize: Some(BinarizePolicy::Left), ..Default::default() };
        let t = parse_bracketed(&text, &opts).unwrap().trees.remove(0);
        let again = TreeShape::new(t.shape().as_str()).unwrap().skeleton();
        prop_assert_eq!(&again, t.skeleton());
    }
}
