//! Plain-text model file.
//!
//! ```text
//! STNLM 1 <level> <N_l> <V> <lambda> <deterministic>
//! CAT <index> <label>
//! WORD <index> <word>
//! LEX <w> <c> <count> <prob>
//! MERGE <key> <a> <b> <g> <count> <prob>
//! CHECKSUM <crc32 of all preceding bytes, 8 hex digits>
//! ```
//!
//! Keys are written `-`, `z`, `z:t` or `shape|z:t`. Only entries with a
//! nonzero probability or count are stored.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{BankError, Level, LexicalMatrix, MergeTensor, MergeTensorBank, TensorKey};
use crate::treebank::{Grammar, TreeShape};

pub const MAGIC: &str = "STNLM";
const VERSION: &str = "1";

fn malformed(line: usize, reason: impl Into<String>) -> BankError {
    BankError::Malformed { line, reason: reason.into() }
}

fn parse_key(s: &str, level: Level, line: usize) -> Result<TensorKey, BankError> {
    let bad = || malformed(line, format!("bad key `{s}`"));
    let zt = |p: &str| -> Result<(u32, u32), BankError> {
        let (z, t) = p.split_once(':').ok_or_else(bad)?;
        Ok((z.parse().map_err(|_| bad())?, t.parse().map_err(|_| bad())?))
    };
    let key = match level {
        Level::Global if s == "-" => TensorKey::Global,
        Level::Global => return Err(bad()),
        Level::Scale => TensorKey::Scale(s.parse().map_err(|_| bad())?),
        Level::Position => {
            let (z, t) = zt(s)?;
            TensorKey::Position(z, t)
        }
        Level::Tree => {
            let (shape, rest) = s.rsplit_once('|').ok_or_else(bad)?;
            let (z, t) = zt(rest)?;
            TensorKey::Tree(TreeShape::new(shape).map_err(|_| bad())?, z, t)
        }
    };
    Ok(key)
}

impl MergeTensorBank {
    pub fn to_model_string(&self) -> String {
        let n = self.n_categories();
        let mut s = String::new();
        writeln!(
            s,
            "{MAGIC} {VERSION} {} {} {} {:.16e} {}",
            self.level.number(),
            n,
            self.n_words(),
            self.lambda,
            u8::from(self.deterministic)
        )
        .unwrap();
        for (i, c) in self.grammar.categories().enumerate() {
            writeln!(s, "CAT {i} {c}").unwrap();
        }
        for (i, w) in self.grammar.words().enumerate() {
            writeln!(s, "WORD {i} {w}").unwrap();
        }
        for w in 0..self.n_words() {
            for c in 0..n {
                let p = self.lexical.get(w, c);
                let k = self.lexical_counts.get(&(w, c)).copied().unwrap_or(0);
                if p != 0.0 || k != 0 {
                    writeln!(s, "LEX {w} {c} {k} {p:.16e}").unwrap();
                }
            }
        }
        let empty = BTreeMap::new();
        for (key, t) in &self.tensors {
            let counts = self.merge_counts.get(key).unwrap_or(&empty);
            for (i, &p) in t.as_slice().iter().enumerate() {
                let (a, b, g) = (i / (n * n), (i / n) % n, i % n);
                let k = counts.get(&(a, b, g)).copied().unwrap_or(0);
                if p != 0.0 || k != 0 {
                    writeln!(s, "MERGE {key} {a} {b} {g} {k} {p:.16e}").unwrap();
                }
            }
        }
        let crc = crc32fast::hash(s.as_bytes());
        writeln!(s, "CHECKSUM {crc:08x}").unwrap();
        s
    }

    pub fn from_model_str(text: &str) -> Result<Self, BankError> {
        let header_line = text.lines().next().unwrap_or("");
        let header: Vec<&str> = header_line.split_whitespace().collect();
        if header.len() != 7 || header[0] != MAGIC || header[1] != VERSION {
            return Err(BankError::FormatVersionMismatch);
        }

        let body = text.strip_suffix('\n').unwrap_or(text);
        let (payload_len, trailer) = match body.rfind('\n') {
            Some(i) => (i + 1, &body[i + 1..]),
            None => return Err(BankError::ChecksumMismatch),
        };
        let stored = trailer
            .strip_prefix("CHECKSUM ")
            .and_then(|h| u32::from_str_radix(h.trim(), 16).ok())
            .ok_or(BankError::ChecksumMismatch)?;
        if crc32fast::hash(&text.as_bytes()[..payload_len]) != stored {
            return Err(BankError::ChecksumMismatch);
        }

        let level = Level::from_number(header[2].parse().map_err(|_| malformed(1, "bad level"))?)?;
        let n: usize = header[3].parse().map_err(|_| malformed(1, "bad category count"))?;
        let v: usize = header[4].parse().map_err(|_| malformed(1, "bad vocabulary size"))?;
        let lambda: f64 = header[5].parse().map_err(|_| malformed(1, "bad lambda"))?;
        let deterministic = match header[6] {
            "0" => false,
            "1" => true,
            _ => return Err(malformed(1, "bad determinism flag")),
        };

        let mut cats = Vec::with_capacity(n);
        let mut words = Vec::with_capacity(v);
        let mut lex_entries = Vec::new();
        let mut merge_entries = Vec::new();
        for (i, line) in text[..payload_len].lines().enumerate().skip(1) {
            let ln = i + 1;
            let f: Vec<&str> = line.split_whitespace().collect();
            let idx = |j: usize, bound: usize| -> Result<usize, BankError> {
                let x: usize = f.get(j).and_then(|s| s.parse().ok()).ok_or_else(|| malformed(ln, "bad index"))?;
                if x >= bound {
                    return Err(malformed(ln, "index out of range"));
                }
                Ok(x)
            };
            let num = |j: usize| -> Result<(u64, f64), BankError> {
                let c = f.get(j).and_then(|s| s.parse().ok()).ok_or_else(|| malformed(ln, "bad count"))?;
                let p = f.get(j + 1).and_then(|s| s.parse().ok()).ok_or_else(|| malformed(ln, "bad probability"))?;
                Ok((c, p))
            };
            match f.first().copied() {
                Some("CAT") if f.len() == 3 => {
                    if idx(1, n)? != cats.len() {
                        return Err(malformed(ln, "categories out of order"));
                    }
                    cats.push(f[2].to_string());
                }
                Some("WORD") if f.len() == 3 => {
                    if idx(1, v)? != words.len() {
                        return Err(malformed(ln, "words out of order"));
                    }
                    words.push(f[2].to_string());
                }
                Some("LEX") if f.len() == 5 => lex_entries.push((idx(1, v)?, idx(2, n)?, num(3)?)),
                Some("MERGE") if f.len() == 7 => {
                    let key = parse_key(f[1], level, ln)?;
                    merge_entries.push((key, idx(2, n)?, idx(3, n)?, idx(4, n)?, num(5)?));
                }
                _ => return Err(malformed(ln, "unrecognized line")),
            }
        }
        if cats.len() != n || words.len() != v {
            return Err(malformed(1, "inventory sizes disagree with header"));
        }
        let grammar = Grammar::from_lists(cats, words).ok_or_else(|| malformed(1, "duplicate inventory entry"))?;

        let mut lexical = LexicalMatrix::zeros(v, n);
        let mut lexical_counts = BTreeMap::new();
        for (w, c, (k, p)) in lex_entries {
            lexical.set(w, c, p);
            if k != 0 {
                lexical_counts.insert((w, c), k);
            }
        }
        let mut tensors: BTreeMap<TensorKey, MergeTensor> = BTreeMap::new();
        let mut merge_counts: super::MergeCounts = BTreeMap::new();
        for (key, a, b, g, (k, p)) in merge_entries {
            if k != 0 {
                merge_counts.entry(key.clone()).or_default().insert((a, b, g), k);
            }
            tensors.entry(key).or_insert_with(|| MergeTensor::zeros(n)).set(a, b, g, p);
        }
        let mut bank = MergeTensorBank::from_tensors(level, grammar, tensors, lexical, lambda);
        bank.merge_counts = merge_counts;
        bank.lexical_counts = lexical_counts;
        bank.deterministic = deterministic;
        Ok(bank)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), BankError> {
        std::fs::write(path, self.to_model_string()).map_err(|e| BankError::Io(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, BankError> {
        let text = std::fs::read_to_string(path).map_err(|e| BankError::Io(e.to_string()))?;
        Self::from_model_str(&text)
    }
}
