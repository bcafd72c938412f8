//! Corpus ingestion, vocabulary construction, TF-IDF featurization and splits.
//!
//! File formats (UTF-8, `#` starts a comment line):
//!
//! * corpus: `<label>[,<label>...]\t<term_id>:<count> ...`, term ids strictly
//!   ascending; the document id is the zero-based index among non-comment lines.
//! * tokenized text (input of [`build_vocab`]): `<label>[,<label>...]\t<token> ...`
//! * splits: `<name> <doc_id> <doc_id> ...`
//! * vocabulary: `<term> <term_id> <df>`

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("split error: {0}")]
    Split(String),
    #[error("term id {term} outside vocabulary of size {vocab_size}")]
    TermOutOfRange { term: u32, vocab_size: usize },
}

fn io_err(path: &Path, source: io::Error) -> CorpusError {
    CorpusError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn parse_err(line: usize, column: usize, message: impl Into<String>) -> CorpusError {
    CorpusError::Parse {
        line,
        column,
        message: message.into(),
    }
}

/// One document as stored in a corpus file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Document {
    pub labels: Vec<u32>,
    /// `(term id, count)`, ids strictly increasing, counts ≥ 1.
    pub counts: Vec<(u32, u32)>,
}

impl Document {
    pub fn total_count(&self) -> u64 {
        self.counts.iter().map(|&(_, c)| c as u64).sum()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Corpus {
    pub docs: Vec<Document>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    /// One past the largest term id in use.
    pub fn max_term_bound(&self) -> usize {
        self.docs
            .iter()
            .filter_map(|d| d.counts.last().map(|&(t, _)| t as usize + 1))
            .max()
            .unwrap_or(0)
    }
}

fn parse_labels(field: &str, line: usize) -> Result<Vec<u32>, CorpusError> {
    if field.is_empty() {
        return Err(parse_err(line, 1, "missing label"));
    }
    let mut labels = Vec::new();
    let mut col = 1;
    for tok in field.split(',') {
        let label = tok
            .parse::<u32>()
            .map_err(|_| parse_err(line, col, format!("invalid label {tok:?}")))?;
        labels.push(label);
        col += tok.len() + 1;
    }
    Ok(labels)
}

fn split_label_field(raw: &str, line: usize) -> Result<(&str, &str), CorpusError> {
    raw.split_once('\t')
        .ok_or_else(|| parse_err(line, raw.len() + 1, "expected TAB after labels"))
}

/// Parses corpus text.
pub fn parse_corpus(text: &str) -> Result<Corpus, CorpusError> {
    let mut docs = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.starts_with('#') || raw.trim().is_empty() {
            continue;
        }
        let (label_field, rest) = split_label_field(raw, line)?;
        let labels = parse_labels(label_field, line)?;
        let mut counts: Vec<(u32, u32)> = Vec::new();
        let mut col = label_field.len() + 2;
        for tok in rest.split(' ') {
            if tok.is_empty() {
                col += 1;
                continue;
            }
            let (id, count) = tok
                .split_once(':')
                .ok_or_else(|| parse_err(line, col, format!("expected <term_id>:<count>, got {tok:?}")))?;
            let id: u32 = id
                .parse()
                .map_err(|_| parse_err(line, col, format!("invalid term id {id:?}")))?;
            let count: u32 = count
                .parse()
                .map_err(|_| parse_err(line, col + tok.find(':').unwrap_or(0) + 1, format!("invalid count {count:?}")))?;
            if count == 0 {
                return Err(parse_err(line, col, "term count must be at least 1"));
            }
            if let Some(&(prev, _)) = counts.last() {
                if id == prev {
                    return Err(parse_err(line, col, format!("duplicate term id {id}")));
                }
                if id < prev {
                    return Err(parse_err(line, col, format!("term id {id} not ascending (after {prev})")));
                }
            }
            counts.push((id, count));
            col += tok.len() + 1;
        }
        docs.push(Document { labels, counts });
    }
    Ok(Corpus { docs })
}

pub fn load_corpus(path: &Path) -> Result<Corpus, CorpusError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_corpus(&text)
}

/// Canonical corpus text; [`parse_corpus`] of the output reproduces `corpus`.
pub fn format_corpus(corpus: &Corpus) -> String {
    let mut out = String::new();
    for doc in &corpus.docs {
        let labels: Vec<String> = doc.labels.iter().map(u32::to_string).collect();
        out.push_str(&labels.join(","));
        out.push('\t');
        for (i, (t, c)) in doc.counts.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{t}:{c}");
        }
        out.push('\n');
    }
    out
}

pub fn write_corpus(corpus: &Corpus, path: &Path) -> Result<(), CorpusError> {
    fs::write(path, format_corpus(corpus)).map_err(|e| io_err(path, e))
}

/// A tokenized document prior to vocabulary mapping.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenizedDoc {
    pub labels: Vec<u32>,
    pub tokens: Vec<String>,
}

pub fn parse_tokenized(text: &str) -> Result<Vec<TokenizedDoc>, CorpusError> {
    let mut docs = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.starts_with('#') || raw.trim().is_empty() {
            continue;
        }
        let (label_field, rest) = split_label_field(raw, line)?;
        let labels = parse_labels(label_field, line)?;
        let tokens = rest.split_whitespace().map(str::to_owned).collect();
        docs.push(TokenizedDoc { labels, tokens });
    }
    Ok(docs)
}

/// Term ↔ id map with document frequencies.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    terms: Vec<String>,
    df: Vec<u32>,
    index: HashMap<String, u32>,
    num_docs: usize,
}

impl Vocabulary {
    fn from_parts(terms: Vec<String>, df: Vec<u32>, num_docs: usize) -> Self {
        let index = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Self {
            terms,
            df,
            index,
            num_docs,
        }
    }

    /// Vocabulary of an id-only corpus, with terms named by their id.
    ///
    /// Terms that never occur keep `df = 0`; they are harmless because no
    /// document carries them.
    pub fn from_corpus(corpus: &Corpus, vocab_size: usize) -> Result<Self, CorpusError> {
        let mut df = vec![0u32; vocab_size];
        for doc in &corpus.docs {
            for &(t, _) in &doc.counts {
                let slot = df.get_mut(t as usize).ok_or(CorpusError::TermOutOfRange {
                    term: t,
                    vocab_size,
                })?;
                *slot += 1;
            }
        }
        let terms = (0..vocab_size).map(|i| i.to_string()).collect();
        Ok(Self::from_parts(terms, df, corpus.len()))
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn num_docs(&self) -> usize {
        self.num_docs
    }

    pub fn id(&self, term: &str) -> Option<u32> {
        self.index.get(term).copied()
    }

    pub fn term(&self, id: u32) -> Option<&str> {
        self.terms.get(id as usize).map(String::as_str)
    }

    pub fn df(&self, id: u32) -> u32 {
        self.df.get(id as usize).copied().unwrap_or(0)
    }

    /// Maps tokens to sorted `(id, count)` pairs, dropping unknown tokens.
    pub fn count_tokens<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<(u32, u32)> {
        let mut counts: HashMap<u32, u32> = HashMap::new();
        for tok in tokens {
            if let Some(id) = self.id(tok.as_ref()) {
                *counts.entry(id).or_default() += 1;
            }
        }
        let mut out: Vec<(u32, u32)> = counts.into_iter().collect();
        out.sort_unstable();
        out
    }

    pub fn format(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# docs {}", self.num_docs);
        for (i, (t, df)) in self.terms.iter().zip(&self.df).enumerate() {
            let _ = writeln!(out, "{t} {i} {df}");
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, CorpusError> {
        let mut entries: Vec<(u32, String, u32)> = Vec::new();
        let mut num_docs = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            if let Some(rest) = raw.strip_prefix("# docs ") {
                num_docs = Some(
                    rest.trim()
                        .parse::<usize>()
                        .map_err(|_| parse_err(line, 8, "invalid document count"))?,
                );
                continue;
            }
            if raw.starts_with('#') || raw.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = raw.split(' ').collect();
            if fields.len() != 3 {
                return Err(parse_err(line, 1, "expected `<term> <term_id> <df>`"));
            }
            let id = fields[1]
                .parse::<u32>()
                .map_err(|_| parse_err(line, fields[0].len() + 2, "invalid term id"))?;
            let df = fields[2]
                .parse::<u32>()
                .map_err(|_| parse_err(line, fields[0].len() + fields[1].len() + 3, "invalid df"))?;
            entries.push((id, fields[0].to_owned(), df));
        }
        entries.sort_by_key(|e| e.0);
        for (expect, e) in entries.iter().enumerate() {
            if e.0 as usize != expect {
                return Err(parse_err(0, 0, format!("term ids not dense: missing id {expect}")));
            }
        }
        let num_docs = num_docs.unwrap_or_else(|| entries.iter().map(|e| e.2 as usize).max().unwrap_or(0));
        let (terms, df) = entries.into_iter().map(|(_, t, d)| (t, d)).unzip();
        Ok(Self::from_parts(terms, df, num_docs))
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        Self::parse(&fs::read_to_string(path).map_err(|e| io_err(path, e))?)
    }

    pub fn write(&self, path: &Path) -> Result<(), CorpusError> {
        fs::write(path, self.format()).map_err(|e| io_err(path, e))
    }
}

/// Keeps the `max_terms` terms of highest document frequency (ties broken
/// lexicographically), after dropping terms with `df < min_df`.
pub fn build_vocab<D, S>(docs: &[D], max_terms: usize, min_df: u32) -> Result<Vocabulary, CorpusError>
where
    D: AsRef<[S]>,
    S: AsRef<str>,
{
    if docs.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let mut df: HashMap<&str, u32> = HashMap::new();
    for doc in docs {
        let distinct: BTreeSet<&str> = doc.as_ref().iter().map(AsRef::as_ref).collect();
        for t in distinct {
            *df.entry(t).or_default() += 1;
        }
    }
    let mut ranked: Vec<(&str, u32)> = df.into_iter().filter(|&(_, d)| d >= min_df.max(1)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(max_terms);
    let (terms, df) = ranked.into_iter().map(|(t, d)| (t.to_owned(), d)).unzip();
    Ok(Vocabulary::from_parts(terms, df, docs.len()))
}

/// TF-IDF weights `count · (ln((1+N)/(1+df)) + 1)`, L2-normalized.
///
/// Terms outside the vocabulary are dropped.
pub fn tfidf(counts: &[(u32, u32)], vocab: &Vocabulary, num_docs: usize) -> Vec<(u32, f64)> {
    let n = num_docs as f64;
    let mut weights: Vec<(u32, f64)> = counts
        .iter()
        .filter(|&&(t, _)| (t as usize) < vocab.len())
        .map(|&(t, c)| {
            let idf = ((1.0 + n) / (1.0 + vocab.df(t) as f64)).ln() + 1.0;
            (t, c as f64 * idf)
        })
        .collect();
    let norm = weights.iter().map(|&(_, w)| w * w).sum::<f64>().sqrt();
    if norm > 0.0 {
        for (_, w) in &mut weights {
            *w /= norm;
        }
    }
    weights
}

/// Encoder input and decoder target for one document.
#[derive(Clone, Debug, PartialEq)]
pub struct TermVector {
    pub doc_id: usize,
    pub labels: Vec<u32>,
    pub counts: Vec<(u32, u32)>,
    pub tfidf: Vec<(u32, f64)>,
}

impl TermVector {
    pub fn new(doc_id: usize, doc: &Document, vocab: &Vocabulary) -> Self {
        let counts: Vec<(u32, u32)> = doc
            .counts
            .iter()
            .copied()
            .filter(|&(t, _)| (t as usize) < vocab.len())
            .collect();
        let tfidf = tfidf(&counts, vocab, vocab.num_docs());
        Self {
            doc_id,
            labels: doc.labels.clone(),
            counts,
            tfidf,
        }
    }

    pub fn total_count(&self) -> u64 {
        self.counts.iter().map(|&(_, c)| c as u64).sum()
    }
}

/// Named, pairwise-disjoint subsets of document ids.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SplitSpec {
    subsets: Vec<(String, Vec<usize>)>,
}

impl SplitSpec {
    pub fn new(subsets: Vec<(String, Vec<usize>)>) -> Result<Self, CorpusError> {
        let mut seen: HashMap<usize, &str> = HashMap::new();
        let mut names = BTreeSet::new();
        for (name, ids) in &subsets {
            if !names.insert(name.as_str()) {
                return Err(CorpusError::Split(format!("subset {name:?} declared twice")));
            }
            for &id in ids {
                if let Some(prev) = seen.insert(id, name) {
                    return Err(CorpusError::Split(format!(
                        "document {id} appears in both {prev:?} and {name:?}"
                    )));
                }
            }
        }
        Ok(Self { subsets })
    }

    /// Deterministic random split by fractions of `n` documents.
    pub fn random(n: usize, validation: f64, test: f64, rng: &mut crate::tensor::RngStream) -> Self {
        let perm = rng.permutation(n);
        let n_val = (n as f64 * validation).round() as usize;
        let n_test = (n as f64 * test).round() as usize;
        let mut val: Vec<usize> = perm[..n_val].to_vec();
        let mut tst: Vec<usize> = perm[n_val..n_val + n_test].to_vec();
        let mut train: Vec<usize> = perm[n_val + n_test..].to_vec();
        train.sort_unstable();
        val.sort_unstable();
        tst.sort_unstable();
        Self {
            subsets: vec![
                ("train".into(), train),
                ("validation".into(), val),
                ("test".into(), tst),
            ],
        }
    }

    pub fn get(&self, name: &str) -> Option<&[usize]> {
        self.subsets
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, ids)| ids.as_slice())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.subsets.iter().map(|(n, _)| n.as_str())
    }

    /// Fails if any id is outside `0..num_docs`.
    pub fn validate(&self, num_docs: usize) -> Result<(), CorpusError> {
        for (name, ids) in &self.subsets {
            if let Some(&bad) = ids.iter().find(|&&id| id >= num_docs) {
                return Err(CorpusError::Split(format!(
                    "subset {name:?} references document {bad} but the corpus has {num_docs}"
                )));
            }
        }
        Ok(())
    }

    /// Keeps only ids accepted by `keep`; disjointness is preserved.
    pub fn filter(&self, mut keep: impl FnMut(usize) -> bool) -> Self {
        Self {
            subsets: self
                .subsets
                .iter()
                .map(|(n, ids)| (n.clone(), ids.iter().copied().filter(|&i| keep(i)).collect()))
                .collect(),
        }
    }

    pub fn parse(text: &str) -> Result<Self, CorpusError> {
        let mut subsets = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            if raw.starts_with('#') || raw.trim().is_empty() {
                continue;
            }
            let mut fields = raw.split_whitespace();
            let name = fields.next().expect("non-empty line").to_owned();
            let mut ids = Vec::new();
            for tok in fields {
                let col = raw.find(tok).unwrap_or(0) + 1;
                ids.push(
                    tok.parse::<usize>()
                        .map_err(|_| parse_err(line, col, format!("invalid document id {tok:?}")))?,
                );
            }
            subsets.push((name, ids));
        }
        Self::new(subsets)
    }

    pub fn format(&self) -> String {
        let mut out = String::new();
        for (name, ids) in &self.subsets {
            out.push_str(name);
            for id in ids {
                let _ = write!(out, " {id}");
            }
            out.push('\n');
        }
        out
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        Self::parse(&fs::read_to_string(path).map_err(|e| io_err(path, e))?)
    }

    pub fn write(&self, path: &Path) -> Result<(), CorpusError> {
        fs::write(path, self.format()).map_err(|e| io_err(path, e))
    }
}

/// Featurized train / validation / test documents sharing one vocabulary.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub vocab_size: usize,
    pub train: Vec<TermVector>,
    pub validation: Vec<TermVector>,
    pub test: Vec<TermVector>,
}

impl Dataset {
    /// Featurizes `corpus` with document frequencies taken from `vocab`.
    ///
    /// Missing `validation` or `test` subsets yield empty sets; a missing
    /// `train` subset is an error.
    pub fn build(corpus: &Corpus, splits: &SplitSpec, vocab: &Vocabulary) -> Result<Self, CorpusError> {
        splits.validate(corpus.len())?;
        let take = |name: &str| -> Vec<TermVector> {
            splits
                .get(name)
                .unwrap_or(&[])
                .iter()
                .map(|&id| TermVector::new(id, &corpus.docs[id], vocab))
                .collect()
        };
        if splits.get("train").is_none() {
            return Err(CorpusError::Split("no `train` subset".into()));
        }
        Ok(Self {
            vocab_size: vocab.len(),
            train: take("train"),
            validation: take("validation"),
            test: take("test"),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_owned).collect()
    }

    #[test]
    fn vocab_small_cases() {
        let docs = vec![toks("a b"), toks("b c")];
        let v = build_vocab(&docs, 10, 1).unwrap();
        assert_eq!(v.len(), 3);
        assert_eq!(v.df(v.id("a").unwrap()), 1);
        assert_eq!(v.df(v.id("b").unwrap()), 2);
        assert_eq!(v.df(v.id("c").unwrap()), 1);
        assert_eq!(v.id("b"), Some(0));

        let v = build_vocab(&docs, 1, 1).unwrap();
        assert_eq!(v.len(), 1);
        assert!(v.id("b").is_some());

        let v = build_vocab(&docs, 10, 2).unwrap();
        assert_eq!(v.len(), 1);
        assert!(v.id("b").is_some());

        let empty: Vec<Vec<String>> = vec![];
        assert!(matches!(build_vocab(&empty, 10, 1), Err(CorpusError::EmptyCorpus)));
    }

    #[test]
    fn vocab_ties_are_lexicographic() {
        let docs = vec![toks("z y x")];
        let v = build_vocab(&docs, 2, 1).unwrap();
        assert_eq!(v.term(0), Some("x"));
        assert_eq!(v.term(1), Some("y"));
    }

    #[test]
    fn vocab_file_round_trip() {
        let docs = vec![toks("a b"), toks("b c")];
        let v = build_vocab(&docs, 10, 1).unwrap();
        let back = Vocabulary::parse(&v.format()).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn tfidf_single_term_and_all_docs() {
        let docs = vec![toks("a")];
        let v = build_vocab(&docs, 10, 1).unwrap();
        let w = tfidf(&[(0, 3)], &v, 1);
        assert_eq!(w, vec![(0, 1.0)]);

        // idf of a term present in all N docs is ln(1) + 1 = 1.
        let docs = vec![toks("a b"), toks("a"), toks("a c")];
        let v = build_vocab(&docs, 10, 1).unwrap();
        let a = v.id("a").unwrap();
        let idf = ((1.0 + 3.0) / (1.0 + v.df(a) as f64)).ln() + 1.0;
        assert_eq!(idf, 1.0);
    }

    #[test]
    fn tfidf_three_doc_table() {
        // docs: "a a b", "b c", "a c c c"; df a=2, b=2, c=2; N=3
        // idf = ln(4/3) + 1 for every term.
        // doc0 raw: a=2·idf, b=1·idf → normalized (2,1)/√5
        // doc2 raw: a=1·idf, c=3·idf → normalized (1,3)/√10
        let docs = vec![toks("a a b"), toks("b c"), toks("a c c c")];
        let v = build_vocab(&docs, 10, 1).unwrap();
        let (a, b, c) = (v.id("a").unwrap(), v.id("b").unwrap(), v.id("c").unwrap());
        let d0 = tfidf(&v.count_tokens(&docs[0]), &v, 3);
        let d2 = tfidf(&v.count_tokens(&docs[2]), &v, 3);
        let get = |w: &[(u32, f64)], t: u32| w.iter().find(|x| x.0 == t).unwrap().1;
        assert!((get(&d0, a) - 2.0 / 5f64.sqrt()).abs() < 1e-12);
        assert!((get(&d0, b) - 1.0 / 5f64.sqrt()).abs() < 1e-12);
        assert!((get(&d2, a) - 1.0 / 10f64.sqrt()).abs() < 1e-12);
        assert!((get(&d2, c) - 3.0 / 10f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn parse_format_cases() {
        assert_eq!(parse_corpus("").unwrap(), Corpus::default());
        let c = parse_corpus("3,7\t12:4 90:1\n").unwrap();
        assert_eq!(c.docs[0].labels, vec![3, 7]);
        assert_eq!(c.docs[0].counts, vec![(12, 4), (90, 1)]);

        let err = parse_corpus("# header\n1\t5:1 5:2\n").unwrap_err();
        match err {
            CorpusError::Parse { line, column, .. } => {
                assert_eq!(line, 2);
                assert_eq!(column, 7);
            }
            other => panic!("unexpected {other}"),
        }
        assert!(parse_corpus("1\t5:1 3:2\n").is_err());
        assert!(parse_corpus("1 5:1\n").is_err());
        assert!(parse_corpus("x\t5:1\n").is_err());
        assert!(parse_corpus("1\t5:0\n").is_err());
        let empty_doc = parse_corpus("2\t\n").unwrap();
        assert!(empty_doc.docs[0].counts.is_empty());
    }

    #[test]
    fn split_cases() {
        let s = SplitSpec::parse("train 0 1 2\nvalidation 3\ntest 4 5\n").unwrap();
        assert_eq!(s.get("train"), Some(&[0, 1, 2][..]));
        assert_eq!(SplitSpec::parse(&s.format()).unwrap(), s);
        assert!(SplitSpec::parse("train 0 1\ntest 1\n").is_err());
        assert!(s.validate(5).is_err());
        assert!(s.validate(6).is_ok());
        let f = s.filter(|i| i % 2 == 0);
        assert_eq!(f.get("test"), Some(&[4][..]));
    }

    #[test]
    fn random_split_is_disjoint() {
        let mut rng = crate::tensor::RngStream::new(1);
        let s = SplitSpec::random(100, 0.1, 0.2, &mut rng);
        let total: usize = s.names().map(|n| s.get(n).unwrap().len()).sum();
        assert_eq!(total, 100);
        assert!(SplitSpec::new(s.subsets.clone()).is_ok());
        assert_eq!(s.get("validation").unwrap().len(), 10);
    }

    fn arb_corpus() -> impl Strategy<Value = Corpus> {
        let doc = (
            prop::collection::btree_set(0u32..50, 1..4),
            prop::collection::btree_map(0u32..200, 1u32..20, 0..12),
        )
            .prop_map(|(labels, counts)| Document {
                labels: labels.into_iter().collect(),
                counts: counts.into_iter().collect(),
            });
        prop::collection::vec(doc, 0..20).prop_map(|docs| Corpus { docs })
    }

    proptest! {
        #[test]
        fn corpus_round_trip_is_byte_identical(c in arb_corpus()) {
            let text = format_corpus(&c);
            let back = parse_corpus(&text).unwrap();
            prop_assert_eq!(&back, &c);
            prop_assert_eq!(format_corpus(&back), text);
        }

        #[test]
        fn tfidf_is_unit_norm_and_homogeneous(c in arb_corpus()) {
            prop_assume!(!c.is_empty());
            let v = Vocabulary::from_corpus(&c, c.max_term_bound()).unwrap();
            for doc in &c.docs {
                let w = tfidf(&doc.counts, &v, c.len());
                if w.is_empty() { continue; }
                let norm: f64 = w.iter().map(|x| x.1 * x.1).sum::<f64>().sqrt();
                prop_assert!((norm - 1.0).abs() < 1e-9);
                prop_assert!(w.windows(2).all(|p| p[0].0 < p[1].0));
                let doubled: Vec<(u32, u32)> = doc.counts.iter().map(|&(t, c)| (t, 2 * c)).collect();
                let w2 = tfidf(&doubled, &v, c.len());
                for (a, b) in w.iter().zip(&w2) {
                    prop_assert!((a.1 - b.1).abs() < 1e-12);
                }
            }
        }
    }
}
