//! Labelled toy corpora with class-specific word distributions.

use std::collections::BTreeMap;

use crate::corpus::{Corpus, Dataset, Document, SplitSpec, Vocabulary};
use crate::tensor::RngStream;

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub docs: usize,
    pub classes: usize,
    pub vocab_size: usize,
    /// Tokens per document.
    pub doc_len: usize,
    /// Probability that a token comes from the document's class block rather
    /// than the shared background.
    pub purity: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            docs: 200,
            classes: 4,
            vocab_size: 200,
            doc_len: 40,
            purity: 0.6,
        }
    }
}

/// Class `c` owns the `c`-th contiguous block of term ids; documents are
/// assigned classes round-robin. Within a block and in the background, term
/// frequencies follow `1/(rank+1)`.
pub fn synthetic_corpus(spec: &SyntheticSpec, seed: u64) -> Corpus {
    assert!(spec.classes >= 1 && spec.vocab_size >= spec.classes, "need at least one term per class");
    let mut rng = RngStream::new(seed).substream("synthetic");
    let block = spec.vocab_size / spec.classes;
    let zipf = |n: usize| -> Vec<f64> { (0..n).map(|r| -((r + 1) as f64).ln()).collect() };
    let block_logw = zipf(block);
    let background_logw = zipf(spec.vocab_size);
    // background ranks are shuffled so they do not align with any block
    let background_terms = rng.permutation(spec.vocab_size);

    let docs = (0..spec.docs)
        .map(|d| {
            let class = d % spec.classes;
            let mut counts: BTreeMap<u32, u32> = BTreeMap::new();
            for _ in 0..spec.doc_len {
                let term = if rng.uniform_f64() < spec.purity {
                    class * block + rng.categorical_log(&block_logw)
                } else {
                    background_terms[rng.categorical_log(&background_logw)]
                };
                *counts.entry(term as u32).or_default() += 1;
            }
            Document {
                labels: vec![class as u32],
                counts: counts.into_iter().collect(),
            }
        })
        .collect();
    Corpus { docs }
}

/// Corpus, random split and featurized dataset in one call.
pub fn synthetic_dataset(spec: &SyntheticSpec, validation: f64, test: f64, seed: u64) -> Dataset {
    let corpus = synthetic_corpus(spec, seed);
    let splits = SplitSpec::random(corpus.len(), validation, test, &mut RngStream::new(seed).substream("split"));
    let vocab = Vocabulary::from_corpus(&corpus, spec.vocab_size).expect("synthetic corpus is non-empty");
    Dataset::build(&corpus, &splits, &vocab).expect("random split is valid")
}
