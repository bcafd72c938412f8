//! Bit-packed hash codes, Hamming search and precision@K.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::corpus::TermVector;
use crate::encdec::{Model, VocabMismatch};
use crate::scalar::Scalar;
use crate::tensor::{Matrix, RngStream};

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("code lengths differ: {0} vs {1} bits")]
    LengthMismatch(usize, usize),
    #[error("duplicate doc id {0} in index")]
    DuplicateId(usize),
    #[error("index is empty")]
    EmptyIndex,
    #[error("no queries")]
    EmptyQueries,
    #[error("codes file line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Vocab(#[from] VocabMismatch),
}

fn words_for(bits: usize) -> usize {
    bits.div_ceil(64)
}

/// An `m`-bit code; bit `i` lives in word `i / 64` at position `i % 64`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HashCode {
    pub doc_id: usize,
    bits: usize,
    words: Vec<u64>,
    pub labels: Vec<u32>,
}

impl HashCode {
    pub fn from_bools(doc_id: usize, bits: &[bool], labels: Vec<u32>) -> Self {
        let mut words = vec![0u64; words_for(bits.len())];
        for (i, _) in bits.iter().enumerate().filter(|(_, &b)| b) {
            words[i / 64] |= 1 << (i % 64);
        }
        Self {
            doc_id,
            bits: bits.len(),
            words,
            labels,
        }
    }

    /// # Panics
    /// If `words` has the wrong length or bits beyond `bits` are set.
    pub fn from_words(doc_id: usize, bits: usize, words: Vec<u64>, labels: Vec<u32>) -> Self {
        assert_eq!(words.len(), words_for(bits), "{} words for {bits} bits", words.len());
        let code = Self {
            doc_id,
            bits,
            words,
            labels,
        };
        assert!(code.padding_clear(), "bits beyond {bits} are set");
        code
    }

    pub fn random(doc_id: usize, bits: usize, labels: Vec<u32>, rng: &mut RngStream) -> Self {
        let flags: Vec<bool> = (0..bits).map(|_| rng.uniform_f64() < 0.5).collect();
        Self::from_bools(doc_id, &flags, labels)
    }

    fn padding_clear(&self) -> bool {
        match (self.bits % 64, self.words.last()) {
            (0, _) | (_, None) => true,
            (r, Some(&w)) => w >> r == 0,
        }
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.bits, "bit {i} of {}", self.bits);
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    pub fn to_bools(&self) -> Vec<bool> {
        (0..self.bits).map(|i| self.get(i)).collect()
    }

    /// Words in order, each as 16 lowercase hex digits.
    pub fn to_hex(&self) -> String {
        let mut s = String::with_capacity(16 * self.words.len());
        for w in &self.words {
            write!(s, "{w:016x}").expect("write to string");
        }
        s
    }
}

/// Number of differing bits.
pub fn hamming(a: &HashCode, b: &HashCode) -> Result<u32, RetrievalError> {
    if a.bits != b.bits {
        return Err(RetrievalError::LengthMismatch(a.bits, b.bits));
    }
    Ok(hamming_words(&a.words, &b.words))
}

fn hamming_words(a: &[u64], b: &[u64]) -> u32 {
    a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum()
}

/// `s_i = 1` iff `μ_i > 0`, with dropout off.
pub fn hash_document<T: Scalar>(model: &Model<T>, x: &TermVector) -> Result<HashCode, VocabMismatch> {
    let p = model.posterior(x)?;
    let flags: Vec<bool> = p.mu().iter().map(|&m| m > T::zero()).collect();
    Ok(HashCode::from_bools(x.doc_id, &flags, x.labels.clone()))
}

pub fn hash_documents<T: Scalar>(model: &Model<T>, docs: &[TermVector]) -> Result<Vec<HashCode>, VocabMismatch> {
    docs.iter().map(|x| hash_document(model, x)).collect()
}

/// Flat, immutable index of codes sorted by doc id.
#[derive(Clone, Debug)]
pub struct RetrievalIndex {
    bits: usize,
    stride: usize,
    words: Vec<u64>,
    ids: Vec<usize>,
    labels: Vec<Vec<u32>>,
}

impl RetrievalIndex {
    pub fn build(mut codes: Vec<HashCode>) -> Result<Self, RetrievalError> {
        let bits = codes.first().ok_or(RetrievalError::EmptyIndex)?.bits;
        codes.sort_by_key(|c| c.doc_id);
        let stride = words_for(bits);
        let mut words = Vec::with_capacity(stride * codes.len());
        let mut ids = Vec::with_capacity(codes.len());
        let mut labels = Vec::with_capacity(codes.len());
        for c in codes {
            if c.bits != bits {
                return Err(RetrievalError::LengthMismatch(bits, c.bits));
            }
            if ids.last() == Some(&c.doc_id) {
                return Err(RetrievalError::DuplicateId(c.doc_id));
            }
            words.extend_from_slice(&c.words);
            ids.push(c.doc_id);
            labels.push(c.labels);
        }
        Ok(Self {
            bits,
            stride,
            words,
            ids,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn labels_of(&self, pos: usize) -> &[u32] {
        &self.labels[pos]
    }

    fn code_words(&self, pos: usize) -> &[u64] {
        &self.words[pos * self.stride..(pos + 1) * self.stride]
    }

    /// Up to `k` `(position, distance)` pairs ordered by `(distance, doc id)`,
    /// skipping the query's own doc id.
    fn nearest(&self, query: &HashCode, k: usize) -> Result<Vec<(usize, u32)>, RetrievalError> {
        if query.bits != self.bits {
            return Err(RetrievalError::LengthMismatch(self.bits, query.bits));
        }
        // positions are in ascending id order, so each bucket is too
        let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); self.bits + 1];
        for pos in 0..self.len() {
            if self.ids[pos] == query.doc_id {
                continue;
            }
            let d = hamming_words(self.code_words(pos), &query.words);
            buckets[d as usize].push(pos);
        }
        let mut out = Vec::with_capacity(k.min(self.len()));
        for (d, bucket) in buckets.into_iter().enumerate() {
            for pos in bucket {
                if out.len() == k {
                    return Ok(out);
                }
                out.push((pos, d as u32));
            }
        }
        Ok(out)
    }

    /// The `k` nearest doc ids by `(Hamming distance, doc id)`, excluding the
    /// query itself. Fewer than `k` are returned when the index is smaller.
    pub fn top_k(&self, query: &HashCode, k: usize) -> Result<Vec<usize>, RetrievalError> {
        Ok(self.nearest(query, k)?.into_iter().map(|(pos, _)| self.ids[pos]).collect())
    }

    pub fn top_k_with_distances(&self, query: &HashCode, k: usize) -> Result<Vec<(usize, u32)>, RetrievalError> {
        Ok(self
            .nearest(query, k)?
            .into_iter()
            .map(|(pos, d)| (self.ids[pos], d))
            .collect())
    }
}

fn labels_intersect(a: &[u32], b: &[u32]) -> bool {
    a.iter().any(|x| b.contains(x))
}

/// Mean over queries of the fraction of retrieved documents sharing a label
/// with the query. The denominator is the number actually retrieved.
pub fn precision_at_k(queries: &[HashCode], index: &RetrievalIndex, k: usize) -> Result<f64, RetrievalError> {
    if queries.is_empty() {
        return Err(RetrievalError::EmptyQueries);
    }
    let mut total = 0.0;
    for q in queries {
        let hits = index.nearest(q, k)?;
        if hits.is_empty() {
            continue;
        }
        let relevant = hits
            .iter()
            .filter(|&&(pos, _)| labels_intersect(&q.labels, index.labels_of(pos)))
            .count();
        total += relevant as f64 / hits.len() as f64;
    }
    Ok(total / queries.len() as f64)
}

/// Random-hyperplane hashing of TF-IDF vectors.
#[derive(Clone, Debug)]
pub struct LshHasher {
    /// `|V| × m`.
    planes: Matrix<f64>,
}

impl LshHasher {
    pub fn new(vocab_size: usize, bits: usize, seed: u64) -> Self {
        let mut rng = RngStream::new(seed).substream("lsh");
        Self {
            planes: Matrix::from_vec(vocab_size, bits, rng.sample_gaussian(vocab_size * bits)),
        }
    }

    pub fn bits(&self) -> usize {
        self.planes.cols()
    }

    /// Terms outside the hasher's vocabulary are ignored.
    pub fn hash(&self, x: &TermVector) -> HashCode {
        let mut proj = vec![0.0; self.bits()];
        for &(t, w) in &x.tfidf {
            if (t as usize) < self.planes.rows() {
                for (p, &h) in proj.iter_mut().zip(self.planes.row(t as usize)) {
                    *p += w * h;
                }
            }
        }
        let flags: Vec<bool> = proj.iter().map(|&p| p > 0.0).collect();
        HashCode::from_bools(x.doc_id, &flags, x.labels.clone())
    }
}

pub fn lsh_hash(x: &TermVector, vocab_size: usize, bits: usize, seed: u64) -> HashCode {
    LshHasher::new(vocab_size, bits, seed).hash(x)
}

/// `# bits m` header, then `<doc_id> <hex> <label>[,<label>...]` per line.
pub fn format_codes(codes: &[HashCode]) -> String {
    let bits = codes.first().map_or(0, |c| c.bits);
    let mut out = format!("# bits {bits}\n");
    for c in codes {
        let labels: Vec<String> = c.labels.iter().map(u32::to_string).collect();
        let labels = if labels.is_empty() { "-".to_string() } else { labels.join(",") };
        writeln!(out, "{} {} {}", c.doc_id, c.to_hex(), labels).expect("write to string");
    }
    out
}

pub fn parse_codes(text: &str) -> Result<Vec<HashCode>, RetrievalError> {
    let err = |line: usize, message: String| RetrievalError::Parse { line, message };
    let mut lines = text.lines().enumerate();
    let bits = match lines.next() {
        Some((_, h)) => h
            .strip_prefix("# bits ")
            .and_then(|b| b.trim().parse::<usize>().ok())
            .ok_or_else(|| err(1, "expected `# bits <m>` header".into()))?,
        None => return Err(err(1, "empty file".into())),
    };
    let stride = words_for(bits);
    let mut codes = Vec::new();
    for (i, line) in lines {
        let n = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [id, hex, labels] = fields[..] else {
            return Err(err(n, format!("expected 3 fields, found {}", fields.len())));
        };
        let doc_id = id.parse().map_err(|_| err(n, format!("bad doc id `{id}`")))?;
        if hex.len() != 16 * stride {
            return Err(err(n, format!("code has {} hex digits, expected {}", hex.len(), 16 * stride)));
        }
        let words = (0..stride)
            .map(|w| u64::from_str_radix(&hex[16 * w..16 * (w + 1)], 16))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| err(n, format!("bad hex: {e}")))?;
        let labels = if labels == "-" {
            Vec::new()
        } else {
            labels
                .split(',')
                .map(str::parse)
                .collect::<Result<Vec<u32>, _>>()
                .map_err(|_| err(n, format!("bad labels `{labels}`")))?
        };
        let code = HashCode {
            doc_id,
            bits,
            words,
            labels,
        };
        if !code.padding_clear() {
            return Err(err(n, format!("bits beyond {bits} are set")));
        }
        codes.push(code);
    }
    Ok(codes)
}

pub fn write_codes(codes: &[HashCode], path: &Path) -> Result<(), RetrievalError> {
    fs::write(path, format_codes(codes)).map_err(|source| RetrievalError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_codes(path: &Path) -> Result<Vec<HashCode>, RetrievalError> {
    let text = fs::read_to_string(path).map_err(|source| RetrievalError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_codes(&text)
}

/// Precision@K per (method, code length).
#[derive(Clone, Debug, Default)]
pub struct PrecisionTable {
    pub k: usize,
    entries: Vec<(String, usize, f64)>,
}

impl PrecisionTable {
    pub fn new(k: usize) -> Self {
        Self { k, entries: Vec::new() }
    }

    pub fn insert(&mut self, method: &str, bits: usize, precision: f64) {
        self.entries.retain(|(m, b, _)| !(m == method && *b == bits));
        self.entries.push((method.to_string(), bits, precision));
    }

    pub fn get(&self, method: &str, bits: usize) -> Option<f64> {
        self.entries
            .iter()
            .find(|(m, b, _)| m == method && *b == bits)
            .map(|e| e.2)
    }

    fn methods(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for (m, _, _) in &self.entries {
            if !out.contains(&m.as_str()) {
                out.push(m);
            }
        }
        out
    }

    fn widths(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self.entries.iter().map(|e| e.1).collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Methods as rows, code lengths as columns; `-` marks missing cells.
    pub fn to_tsv(&self) -> String {
        let widths = self.widths();
        let mut out = String::from("method");
        for b in &widths {
            write!(out, "\t{b}bits").expect("write to string");
        }
        out.push('\n');
        for m in self.methods() {
            out.push_str(m);
            for &b in &widths {
                match self.get(m, b) {
                    Some(p) => write!(out, "\t{p:.4}"),
                    None => write!(out, "\t-"),
                }
                .expect("write to string");
            }
            out.push('\n');
        }
        out
    }

    /// Long format `method,bits,k,precision`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,bits,k,precision\n");
        for (m, b, p) in &self.entries {
            writeln!(out, "{m},{b},{},{p:.6}", self.k).expect("write to string");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn code(id: usize, bits: &str, labels: &[u32]) -> HashCode {
        let flags: Vec<bool> = bits.chars().map(|c| c == '1').collect();
        HashCode::from_bools(id, &flags, labels.to_vec())
    }

    fn bit_loop(a: &HashCode, b: &HashCode) -> u32 {
        (0..a.bits()).filter(|&i| a.get(i) != b.get(i)).count() as u32
    }

    #[test]
    fn hamming_cases() {
        let a = code(0, "1010", &[0]);
        assert_eq!(hamming(&a, &a).unwrap(), 0);
        assert_eq!(hamming(&a, &code(1, "1001", &[0])).unwrap(), 2);
        assert!(matches!(
            hamming(&a, &code(1, "10010", &[0])),
            Err(RetrievalError::LengthMismatch(4, 5))
        ));
    }

    #[test]
    fn packing_layout() {
        let mut flags = vec![false; 70];
        flags[0] = true;
        flags[65] = true;
        let c = HashCode::from_bools(0, &flags, vec![]);
        assert_eq!(c.words(), &[1, 2]);
        assert_eq!(c.to_hex(), "00000000000000010000000000000002");
    }

    #[test]
    fn hamming_matches_bit_loop_at_128_bits() {
        let mut rng = RngStream::new(11);
        for _ in 0..2000 {
            let a = HashCode::random(0, 128, vec![], &mut rng);
            let b = HashCode::random(1, 128, vec![], &mut rng);
            assert_eq!(hamming(&a, &b).unwrap(), bit_loop(&a, &b));
        }
    }

    #[test]
    fn top_k_small_cases() {
        let idx = RetrievalIndex::build(vec![code(3, "0000", &[1])]).unwrap();
        assert_eq!(idx.top_k(&code(9, "1111", &[1]), 100).unwrap(), vec![3]);

        let idx = RetrievalIndex::build(vec![code(0, "0000", &[1]), code(1, "0001", &[1]), code(2, "0000", &[1])]).unwrap();
        let res = idx.top_k(&code(0, "0000", &[1]), 100).unwrap();
        assert_eq!(res, vec![2, 1]);
        assert!(matches!(
            RetrievalIndex::build(vec![code(1, "00", &[]), code(1, "01", &[])]),
            Err(RetrievalError::DuplicateId(1))
        ));
        assert!(matches!(RetrievalIndex::build(vec![]), Err(RetrievalError::EmptyIndex)));
    }

    #[test]
    fn top_k_matches_full_sort() {
        let mut rng = RngStream::new(12);
        let codes: Vec<HashCode> = (0..1000).map(|i| HashCode::random(i, 128, vec![], &mut rng)).collect();
        let idx = RetrievalIndex::build(codes.clone()).unwrap();
        for q in codes.iter().take(50) {
            let mut all: Vec<(u32, usize)> = codes
                .iter()
                .filter(|c| c.doc_id != q.doc_id)
                .map(|c| (bit_loop(q, c), c.doc_id))
                .collect();
            all.sort();
            let want: Vec<usize> = all.iter().take(100).map(|e| e.1).collect();
            assert_eq!(idx.top_k(q, 100).unwrap(), want);
        }
    }

    #[test]
    fn precision_cases() {
        let codes = vec![
            code(0, "0000", &[0]),
            code(1, "0001", &[0]),
            code(2, "0011", &[1]),
            code(3, "0111", &[1]),
            code(4, "1111", &[0, 1]),
        ];
        let idx = RetrievalIndex::build(codes.clone()).unwrap();
        // q0: 1(d1,l0) 2(d2,l1) -> 1/2; q1: 0(d1) 2(d1) -> 1/2; q2: 1(d1) 3(d1) -> 1/2
        // q3: 2(d1) 4(d1) -> 1;   q4: 3(d1) 2(d2) -> 1
        let p = precision_at_k(&codes, &idx, 2).unwrap();
        assert!((p - (0.5 + 0.5 + 0.5 + 1.0 + 1.0) / 5.0).abs() < 1e-15);

        let same: Vec<HashCode> = (0..5).map(|i| code(i, "0101", &[7])).collect();
        let idx = RetrievalIndex::build(same.clone()).unwrap();
        assert_eq!(precision_at_k(&same, &idx, 100).unwrap(), 1.0);
        assert!(matches!(precision_at_k(&[], &idx, 1), Err(RetrievalError::EmptyQueries)));
    }

    #[test]
    fn random_codes_give_chance_precision() {
        let mut rng = RngStream::new(13);
        let classes = 4;
        let codes: Vec<HashCode> = (0..2000)
            .map(|i| HashCode::random(i, 32, vec![(i % classes) as u32], &mut rng))
            .collect();
        let idx = RetrievalIndex::build(codes.clone()).unwrap();
        let p = precision_at_k(&codes[..400], &idx, 100).unwrap();
        assert!((p - 0.25).abs() < 0.02, "precision {p}");
    }

    fn tv(id: usize, tfidf: Vec<(u32, f64)>) -> TermVector {
        TermVector {
            doc_id: id,
            labels: vec![0],
            counts: tfidf.iter().map(|&(t, _)| (t, 1)).collect(),
            tfidf,
        }
    }

    #[test]
    fn lsh_properties() {
        let h = LshHasher::new(50, 64, 3);
        let a = tv(0, vec![(1, 0.6), (7, 0.8)]);
        assert_eq!(h.hash(&a).words(), h.hash(&tv(5, a.tfidf.clone())).words());
        assert_ne!(LshHasher::new(50, 64, 4).hash(&a), h.hash(&a));

        // orthogonal documents sit at angle π/2, so each bit differs with probability ½
        let m = 64;
        let mut total = 0.0;
        let trials = 4000;
        for seed in 0..trials {
            let h = LshHasher::new(50, m, seed);
            let d = hamming(&h.hash(&tv(0, vec![(2, 1.0)])), &h.hash(&tv(1, vec![(9, 1.0)]))).unwrap();
            total += d as f64;
        }
        let mean = total / trials as f64;
        let se = (m as f64 * 0.25 / trials as f64).sqrt();
        assert!((mean - m as f64 / 2.0).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn codes_file_round_trip() {
        let mut rng = RngStream::new(14);
        let codes: Vec<HashCode> = (0..20).map(|i| HashCode::random(i, 70, vec![1, 3], &mut rng)).collect();
        let text = format_codes(&codes);
        assert!(text.starts_with("# bits 70\n"));
        assert_eq!(parse_codes(&text).unwrap(), codes);
        assert!(parse_codes("# bits 4\n0 000000000000001f 1\n").is_err());
    }

    #[test]
    fn table_layout() {
        let mut t = PrecisionTable::new(100);
        t.insert("model", 32, 0.61);
        t.insert("lsh", 32, 0.07);
        t.insert("model", 16, 0.5);
        assert_eq!(t.to_tsv(), "method\t16bits\t32bits\nmodel\t0.5000\t0.6100\nlsh\t-\t0.0700\n");
        assert!(t.to_csv().contains("lsh,32,100,0.070000"));
    }

    proptest! {
        #[test]
        fn hamming_is_a_metric(seed in any::<u64>(), bits in 1usize..200) {
            let mut rng = RngStream::new(seed);
            let a = HashCode::random(0, bits, vec![], &mut rng);
            let b = HashCode::random(1, bits, vec![], &mut rng);
            let c = HashCode::random(2, bits, vec![], &mut rng);
            let d = |x: &HashCode, y: &HashCode| hamming(x, y).unwrap();
            prop_assert_eq!(d(&a, &a), 0);
            prop_assert_eq!(d(&a, &b), d(&b, &a));
            prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c));
            prop_assert_eq!(d(&a, &b), bit_loop(&a, &b));
        }
    }
}
