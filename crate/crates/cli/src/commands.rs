//! Subcommand bodies. Each parses its inputs, calls the library and formats
//! the result.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde_json::json;
use stnlm::correlations::{corpus_average_decay, CorpusDecay, DecayFit, DecayOptions, Observable, Variable};
use stnlm::prob_model::{
    log_partition, marginal_word, resolve_word, sample as draw, tree_logprob, tree_partition, words_logprob,
    MarginalQuery, ProbError, QueryOptions,
};
use stnlm::spectral::{
    amplitudes, block_spectrum, circuit_string, entanglement, export_circuit, isometrize, perplexity_lower_bound,
};
use stnlm::tensor_bank::{EstimateOptions, Level, MergeTensorBank};
use stnlm::treebank::{parse_bracketed, BinarizePolicy, ParseOptions, ParseTree, Skeleton, TreeShape};

use crate::error::CliError;
use crate::{
    Binarize, CircuitArgs, CorrelateArgs, EntangleArgs, PredictArgs, ProbArgs, SampleArgs, TrainArgs, VariableArg,
};

/// Rounds to 12 decimals and prints the shortest form, so exact values
/// print as `0`, `1`, `-2.197224577336`.
fn num(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let r = (x * 1e12).round() / 1e12;
    format!("{}", r + 0.0)
}

fn read_input(path: &Path) -> Result<String, CliError> {
    if path.as_os_str() == "-" {
        let mut s = String::new();
        io::stdin().read_to_string(&mut s)?;
        Ok(s)
    } else {
        fs::read_to_string(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
    }
}

fn load_model(path: &Path) -> Result<MergeTensorBank, CliError> {
    MergeTensorBank::load(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn parse_shape(s: &str) -> Result<Skeleton, CliError> {
    TreeShape::new(s).map(|t| t.skeleton()).map_err(|e| CliError::usage(e.to_string()))
}

fn parse_pair(s: &str, flag: &str) -> Result<(usize, usize), CliError> {
    let bad = || CliError::usage(format!("{flag} expects two integers `A:B`, got `{s}`"));
    let (a, b) = s.split_once(':').ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

fn policy(b: Option<Binarize>) -> Option<BinarizePolicy> {
    b.map(|b| match b {
        Binarize::Left => BinarizePolicy::Left,
        Binarize::Right => BinarizePolicy::Right,
    })
}

fn single_tree(text: &str) -> Result<ParseTree, CliError> {
    let mut tb = parse_bracketed(text, &ParseOptions::default())?;
    match tb.trees.len() {
        1 => Ok(tb.trees.remove(0)),
        k => Err(CliError::data(format!("expected one tree, found {k}"))),
    }
}

pub fn train(a: &TrainArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let level = Level::from_number(a.level)?;
    let text = read_input(&a.treebank)?;
    let opts = ParseOptions { binarize: policy(a.binarize), skip_traces: a.skip_traces };
    let tb = parse_bracketed(&text, &opts)?;
    let bank = MergeTensorBank::estimate(&tb.trees, &EstimateOptions { level, lambda: a.lambda, unk: a.unk })?;
    bank.save(&a.out)?;
    writeln!(out, "sentences\t{}", tb.trees.len())?;
    writeln!(out, "skipped_traces\t{}", tb.stats.skipped_traces)?;
    writeln!(out, "level\t{}", level.number())?;
    writeln!(out, "categories\t{}", bank.n_categories())?;
    writeln!(out, "words\t{}", bank.n_words())?;
    writeln!(out, "keys\t{}", bank.tensors().len())?;
    writeln!(out, "deterministic\t{}", bank.is_deterministic())?;
    Ok(())
}

fn log_add(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        m
    } else {
        m + ((a - m).exp() + (b - m).exp()).ln()
    }
}

/// One scored input line: a labeled tree, or a shape with its words.
enum Query {
    Tree(ParseTree),
    Words(Skeleton, Vec<String>),
}

impl Query {
    fn skeleton(&self) -> &Skeleton {
        match self {
            Query::Tree(t) => t.skeleton(),
            Query::Words(s, _) => s,
        }
    }
}

/// `[id<TAB>]tree` or `[id<TAB>]shape<TAB>words`; the id defaults to the
/// line number.
fn parse_query_line(line: &str, number: usize) -> Result<(String, Query), CliError> {
    let fields: Vec<&str> = line.split('\t').collect();
    let words = |shape: &str, ws: &str| -> Result<Query, CliError> {
        let skel = TreeShape::new(shape.trim())?.skeleton();
        let ws: Vec<String> = ws.split_whitespace().map(String::from).collect();
        if ws.len() != skel.n_leaves() {
            return Err(CliError::data(format!(
                "shape has {} leaves but {} words were given",
                skel.n_leaves(),
                ws.len()
            )));
        }
        Ok(Query::Words(skel, ws))
    };
    match fields.as_slice() {
        [tree] => Ok((number.to_string(), Query::Tree(single_tree(tree)?))),
        [a, b] if TreeShape::new(a.trim()).is_ok() => Ok((number.to_string(), words(a, b)?)),
        [id, tree] => Ok((id.to_string(), Query::Tree(single_tree(tree)?))),
        [id, shape, ws] => Ok((id.to_string(), words(shape, ws)?)),
        _ => Err(CliError::data("expected `[id<TAB>]tree` or `[id<TAB>]shape<TAB>words`")),
    }
}

pub fn prob(a: &ProbArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let bank = load_model(&a.model)?;
    let text = read_input(&a.trees)?;
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|(k, l)| (k + 1, l))
        .collect();
    let opts = QueryOptions { map_unknown: a.map_unknown };
    let scored: Vec<Result<(String, f64, Option<f64>), CliError>> = lines
        .par_iter()
        .map(|&(number, line)| {
            let at = |e: CliError| CliError { code: e.code, message: format!("line {number}: {e}") };
            let (id, q) = parse_query_line(line, number).map_err(at)?;
            let lp = match &q {
                Query::Tree(t) => tree_logprob(t, &bank, opts),
                Query::Words(skel, ws) => ws
                    .iter()
                    .map(|w| resolve_word(&bank, w, opts))
                    .collect::<Result<Vec<_>, _>>()
                    .and_then(|idx| words_logprob(skel, &idx, &bank)),
            }
            .map_err(|e| at(e.into()))?;
            let norm = if a.normalized {
                let lz = log_partition(q.skeleton(), &bank).map_err(|e| at(e.into()))?;
                if lz == f64::NEG_INFINITY {
                    return Err(at(ProbError::ZeroPartition.into()));
                }
                Some(lp - lz)
            } else {
                None
            };
            Ok((id, lp, norm))
        })
        .collect();
    let scored: Vec<(String, f64, Option<f64>)> = scored.into_iter().collect::<Result<_, _>>()?;

    writeln!(out, "sentence\tlogprob_raw\tlogprob_normalized")?;
    let dash = |x: Option<f64>| x.map(num).unwrap_or_else(|| "-".into());
    let mut groups: HashMap<&str, Vec<usize>> = HashMap::new();
    for (k, (id, _, _)) in scored.iter().enumerate() {
        groups.entry(id).or_default().push(k);
    }
    for (k, (id, lp, norm)) in scored.iter().enumerate() {
        writeln!(out, "{id}\t{}\t{}", num(*lp), dash(*norm))?;
        let same = &groups[id.as_str()];
        if same.len() > 1 && same.last() == Some(&k) {
            let (mut s, mut sn) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
            for &j in same {
                s = log_add(s, scored[j].1);
                sn = log_add(sn, scored[j].2.unwrap_or(f64::NEG_INFINITY));
            }
            writeln!(out, "{id}:sum\t{}\t{}", num(s), dash(a.normalized.then_some(sn)))?;
        }
    }
    Ok(())
}

pub fn predict(a: &PredictArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let bank = load_model(&a.model)?;
    let query = MarginalQuery::from_tree(single_tree(&a.tree)?)?;
    let dist = marginal_word(&query, &bank)?;
    let mut ranked: Vec<(usize, f64)> = dist.into_iter().enumerate().filter(|&(_, p)| p > 0.0).collect();
    ranked.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
    writeln!(out, "word\tprob")?;
    for (w, p) in ranked.into_iter().take(a.top.unwrap_or(usize::MAX)) {
        writeln!(out, "{}\t{}", bank.grammar().word(w), num(p))?;
    }
    Ok(())
}

pub fn sample(a: &SampleArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let bank = load_model(&a.model)?;
    let skel = parse_shape(&a.shape)?;
    for t in draw(&skel, &bank, a.n, a.seed)? {
        writeln!(out, "{t}")?;
    }
    Ok(())
}

fn observable(spec: &str, bank: &MergeTensorBank) -> Result<Observable, CliError> {
    let g = bank.grammar();
    match spec.split_once(':') {
        Some(("cat", c)) => g
            .category_index(c)
            .map(Observable::CategoryIndicator)
            .ok_or_else(|| CliError::data(format!("unknown category `{c}`"))),
        Some(("word", w)) => {
            g.word_index(w).map(Observable::WordIndicator).ok_or_else(|| CliError::data(format!("unknown word `{w}`")))
        }
        _ => Err(CliError::usage(format!("--observable expects `cat:LABEL` or `word:WORD`, got `{spec}`"))),
    }
}

fn fit_json(series: &str, fit: &Result<DecayFit, stnlm::correlations::CorrelationError>, model: &str) -> String {
    let v = match fit {
        Ok(f) => json!({
            "series": series,
            "model": model,
            "tau": f.tau,
            "intercept": f.intercept,
            "r_squared": f.r_squared,
            "window": [f.window.0, f.window.1],
        }),
        Err(e) => json!({ "series": series, "model": model, "error": e.to_string() }),
    };
    v.to_string()
}

fn gnuplot_script(d: &CorpusDecay) -> String {
    let mut s = String::from("# usage: gnuplot -p <this file>\n$data << EOD\n");
    for k in 0..d.r.len() {
        let _ = writeln!(s, "{} {:e} {:e}", d.r[k], d.avg_abs_c[k], d.avg_i[k]);
    }
    s.push_str("EOD\nset logscale y\nset xlabel \"r\"\nset key top right\n");
    let mut plots = vec![
        "$data using 1:2 with points pt 7 title \"<|C(r)|>\"".to_string(),
        "$data using 1:3 with points pt 5 title \"<I(r)>\"".to_string(),
    ];
    for (name, fits) in [("C", &d.c_fits), ("I", &d.i_fits)] {
        if let Ok(f) = &fits.exponential {
            plots.push(format!("exp({} - x / {}) title \"{name} exponential\"", f.intercept, f.tau));
        }
        if let Ok(f) = &fits.power {
            plots.push(format!("exp({}) * x ** (-1.0 / {}) title \"{name} power\"", f.intercept, f.tau));
        }
    }
    let _ = writeln!(s, "plot {}", plots.join(", \\\n     "));
    s
}

pub fn correlate(a: &CorrelateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let bank = load_model(&a.model)?;
    let mut corpus: Vec<Skeleton> = a.shape.iter().map(|s| parse_shape(s)).collect::<Result<_, _>>()?;
    if let Some(path) = &a.trees {
        let opts = ParseOptions { binarize: policy(a.binarize), skip_traces: true };
        corpus.extend(parse_bracketed(&read_input(path)?, &opts)?.trees.iter().map(|t| t.skeleton().clone()));
    }
    if corpus.is_empty() {
        return Err(CliError::usage("give at least one --shape or a --trees file"));
    }
    let longest = corpus.iter().map(Skeleton::n_leaves).max().unwrap_or(1);
    let max_r = a.max_r.unwrap_or(longest.saturating_sub(1));
    if max_r == 0 {
        return Err(CliError::usage("--max-r must be at least 1 and sentences need two words"));
    }
    let window = match &a.window {
        Some(w) => parse_pair(w, "--window")?,
        None => (2, max_r),
    };
    let variable = match a.variable {
        VariableArg::Category => Variable::Category,
        VariableArg::Word => Variable::Word,
    };
    let opts = DecayOptions { observable: observable(&a.observable, &bank)?, variable, window };
    let d = corpus_average_decay(&corpus, &bank, max_r, &opts)?;
    writeln!(out, "r\tpairs\tavg_abs_c\tavg_i")?;
    for k in 0..d.r.len() {
        writeln!(out, "{}\t{}\t{:.9e}\t{:.9e}", d.r[k], d.pairs[k], d.avg_abs_c[k], d.avg_i[k])?;
    }
    for (series, fits) in [("avg_abs_c", &d.c_fits), ("avg_i", &d.i_fits)] {
        writeln!(out, "# {}", fit_json(series, &fits.exponential, "exponential"))?;
        writeln!(out, "# {}", fit_json(series, &fits.power, "power"))?;
    }
    if let Some(path) = &a.gnuplot {
        fs::write(path, gnuplot_script(&d))?;
    }
    Ok(())
}

pub fn entangle(a: &EntangleArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let bank = load_model(&a.model)?;
    let skel = parse_shape(&a.shape)?;
    let (start, len) = parse_pair(&a.block, "--block")?;
    let spec = block_spectrum(&skel, &bank, start, len)?;
    let by_category = spec.closed_form && spec.lambdas.len() == bank.n_categories();
    writeln!(out, "alpha\tlambda")?;
    for (k, l) in spec.lambdas.iter().enumerate() {
        let label = if by_category { bank.grammar().category(k).to_string() } else { k.to_string() };
        writeln!(out, "{label}\t{}", num(*l))?;
    }
    let e = entanglement(&spec);
    let bound = if spec.subtree && spec.closed_form {
        num(perplexity_lower_bound(&skel, &bank, start, len)?.bound)
    } else {
        "-".into()
    };
    writeln!(out, "S={} E1={} bound={bound} cuts={}", num(e.s), num(e.e1), spec.cuts)?;
    if a.report_z {
        writeln!(out, "Z={:e}", tree_partition(&skel, &bank)?)?;
    }
    Ok(())
}

pub fn circuit(a: &CircuitArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let bank = load_model(&a.model)?;
    let skel = parse_shape(&a.shape)?;
    let net = isometrize(&skel, &amplitudes(&bank))?;
    match &a.out {
        Some(path) => {
            let c = export_circuit(&net, path)?;
            writeln!(out, "qudits={} dim={} gates={} ancillas={}", c.n_qudits, c.dim, c.gates.len(), c.ancillas.len())?;
            writeln!(out, "omega_norm_sq={:e}", net.omega_norm_sq())?;
        }
        None => out.write_all(circuit_string(&net)?.as_bytes())?,
    }
    Ok(())
}
