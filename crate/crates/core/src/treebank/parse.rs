use super::tree::{binarize, BinarizePolicy, ParseTree, SyntaxTree};
use super::{Grammar, TreebankError};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParseOptions {
    /// Binarize k-ary nodes instead of rejecting them.
    pub binarize: Option<BinarizePolicy>,
    /// Drop sentences containing traces instead of failing.
    pub skip_traces: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParseStats {
    pub sentences: usize,
    /// Category labels discarded by collapsing unary chains.
    pub unary_collapsed: usize,
    pub skipped_traces: usize,
}

#[derive(Debug, Clone)]
pub struct Treebank {
    pub trees: Vec<ParseTree>,
    pub grammar: Grammar,
    pub stats: ParseStats,
}

#[derive(Debug)]
enum Token {
    Open(usize),
    Close(usize),
    Atom(String, usize),
}

fn tokenize(text: &str) -> Vec<Token> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    for (i, ch) in text.char_indices() {
        let delim = ch == '(' || ch == ')' || ch.is_whitespace();
        if delim {
            if let Some(s) = start.take() {
                out.push(Token::Atom(text[s..i].to_string(), s));
            }
            match ch {
                '(' => out.push(Token::Open(i)),
                ')' => out.push(Token::Close(i)),
                _ => {}
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push(Token::Atom(text[s..].to_string(), s));
    }
    out
}

#[derive(Debug)]
enum Raw {
    Preterminal { label: String, word: String, pos: usize, word_pos: usize },
    Node { label: String, children: Vec<Raw>, pos: usize },
}

struct RawParser {
    tokens: Vec<Token>,
    at: usize,
}

impl RawParser {
    fn parse_all(mut self) -> Result<Vec<Raw>, TreebankError> {
        let mut out = Vec::new();
        while self.at < self.tokens.len() {
            match &self.tokens[self.at] {
                Token::Open(p) => {
                    let p = *p;
                    self.at += 1;
                    out.push(self.node(p)?);
                }
                Token::Close(p) => return Err(TreebankError::UnbalancedBrackets(*p)),
                Token::Atom(_, p) => return Err(TreebankError::UnexpectedToken(*p)),
            }
        }
        Ok(out)
    }

    // called after consuming the opening bracket at `pos`
    fn node(&mut self, pos: usize) -> Result<Raw, TreebankError> {
        let label = match self.tokens.get(self.at) {
            Some(Token::Atom(a, _)) => {
                let a = a.clone();
                self.at += 1;
                a
            }
            Some(_) => String::new(),
            None => return Err(TreebankError::UnbalancedBrackets(pos)),
        };
        let mut children = Vec::new();
        let mut words: Vec<(String, usize)> = Vec::new();
        loop {
            match self.tokens.get(self.at) {
                None => return Err(TreebankError::UnbalancedBrackets(pos)),
                Some(Token::Close(_)) => {
                    self.at += 1;
                    break;
                }
                Some(Token::Open(p)) => {
                    let p = *p;
                    self.at += 1;
                    children.push(self.node(p)?);
                }
                Some(Token::Atom(w, p)) => {
                    words.push((w.clone(), *p));
                    self.at += 1;
                }
            }
        }
        match (children.is_empty(), words.len()) {
            (true, 0) => Err(TreebankError::EmptyNode(pos)),
            (true, 1) if !label.is_empty() => {
                let (word, word_pos) = words.pop().expect("one word");
                Ok(Raw::Preterminal { label, word, pos, word_pos })
            }
            (false, 0) => Ok(Raw::Node { label, children, pos }),
            _ => Err(TreebankError::UnexpectedToken(words.first().map_or(pos, |w| w.1))),
        }
    }
}

/// Drops function tags and co-indices: `NP-SBJ-1` → `NP`, `NP=2` → `NP`.
/// Labels that start with `-` (such as `-LRB-`) are kept whole.
fn strip_label(label: &str) -> &str {
    if label.starts_with('-') {
        return label;
    }
    match label.find(['-', '=']) {
        Some(i) if i > 0 => &label[..i],
        _ => label,
    }
}

fn is_trace_word(w: &str) -> bool {
    w.starts_with("*T*") || (w.len() >= 2 && w.starts_with('<') && w.ends_with('>'))
}

fn find_trace(raw: &Raw) -> Option<usize> {
    match raw {
        Raw::Preterminal { label, word, pos, word_pos } => {
            if label == "-NONE-" {
                Some(*pos)
            } else if is_trace_word(word) {
                Some(*word_pos)
            } else {
                None
            }
        }
        Raw::Node { children, .. } => children.iter().find_map(find_trace),
    }
}

fn normalize(raw: &Raw, strict_arity: bool, stats: &mut ParseStats) -> Result<SyntaxTree, TreebankError> {
    match raw {
        Raw::Preterminal { label, word, .. } => {
            Ok(SyntaxTree::Leaf { category: strip_label(label).to_string(), word: word.clone() })
        }
        Raw::Node { label, children, pos } => {
            let mut kids = children.iter().map(|c| normalize(c, strict_arity, stats)).collect::<Result<Vec<_>, _>>()?;
            match kids.len() {
                1 => {
                    if !label.is_empty() {
                        stats.unary_collapsed += 1;
                    }
                    Ok(kids.pop().expect("one child"))
                }
                k => {
                    if label.is_empty() {
                        return Err(TreebankError::UnexpectedToken(*pos));
                    }
                    if k > 2 && strict_arity {
                        return Err(TreebankError::NonBinaryNode(*pos));
                    }
                    Ok(SyntaxTree::Node { category: strip_label(label).to_string(), children: kids })
                }
            }
        }
    }
}

/// Reads bracketed trees without enforcing arity. Unary chains are
/// collapsed and labels stripped; traces are handled per `skip_traces`.
pub fn parse_syntax(text: &str, skip_traces: bool) -> Result<(Vec<SyntaxTree>, ParseStats), TreebankError> {
    read(text, skip_traces, false)
}

fn read(text: &str, skip_traces: bool, strict: bool) -> Result<(Vec<SyntaxTree>, ParseStats), TreebankError> {
    let raws = RawParser { tokens: tokenize(text), at: 0 }.parse_all()?;
    let mut stats = ParseStats::default();
    let mut out = Vec::with_capacity(raws.len());
    for raw in &raws {
        if let Some(p) = find_trace(raw) {
            if skip_traces {
                stats.skipped_traces += 1;
                continue;
            }
            return Err(TreebankError::TraceToken(p));
        }
        out.push(normalize(raw, strict, &mut stats)?);
    }
    stats.sentences = out.len();
    Ok((out, stats))
}

/// Parses whitespace-separated bracketed trees into binary [`ParseTree`]s
/// and accumulates their grammar.
pub fn parse_bracketed(text: &str, opts: &ParseOptions) -> Result<Treebank, TreebankError> {
    let (syntax, stats) = read(text, opts.skip_traces, opts.binarize.is_none())?;
    let mut trees = Vec::with_capacity(syntax.len());
    let mut grammar = Grammar::default();
    for s in syntax {
        let s = match opts.binarize {
            Some(p) => binarize(&s, p),
            None => s,
        };
        let t = ParseTree::from_syntax(&s)?;
        grammar.add_tree(&t);
        trees.push(t);
    }
    Ok(Treebank { trees, grammar, stats })
}
