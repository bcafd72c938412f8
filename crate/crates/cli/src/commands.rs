use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::info;

use corrhash::corpus::{
    build_vocab as build_vocabulary, load_corpus, parse_tokenized, write_corpus, Corpus, Dataset, Document, SplitSpec, TermVector,
    Vocabulary,
};
use corrhash::encdec::{read_checkpoint, write_checkpoint};
use corrhash::retrieval::{hash_documents, precision_at_k, write_codes, LshHasher, PrecisionTable, RetrievalIndex};
use corrhash::synthetic::{synthetic_dataset, SyntheticSpec};
use corrhash::tensor::RngStream;
use corrhash::trainer::{train_with, LogEntry, TrainConfig};
use corrhash::verify::run_suite;
use corrhash::Model;

use crate::config::{check_exists, parse_list, Config};
use crate::{Common, DataArgs, ModelArgs, UsageError};

#[derive(Debug)]
pub struct ChecksFailed(pub usize);

impl std::fmt::Display for ChecksFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} verification check(s) failed", self.0)
    }
}

impl std::error::Error for ChecksFailed {}

/// Config file, then flags.
pub fn resolve(
    common: &Common,
    data: &DataArgs,
    bits: Option<usize>,
    model: &ModelArgs,
    k_at: Option<usize>,
    checkpoint: Option<PathBuf>,
) -> Result<Config, UsageError> {
    let mut cfg = match &common.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let t = &mut cfg.train;
    macro_rules! set {
        ($dst:expr, $src:expr) => {
            if let Some(v) = $src {
                $dst = v;
            }
        };
    }
    set!(t.seed, common.seed);
    set!(t.bits, bits);
    set!(t.rank, model.rank);
    set!(t.components, model.components);
    if let Some(h) = &model.hidden {
        t.hidden = parse_list("hidden", h)?;
    }
    set!(t.learning_rate, model.learning_rate);
    set!(t.decay_interval, model.decay_interval);
    set!(t.decay_factor, model.decay_factor);
    set!(t.batch_size, model.batch_size);
    set!(t.epochs, model.epochs);
    set!(t.keep_prob, model.keep_prob);
    set!(t.eval_interval, model.eval_interval);
    set!(t.eval_k, k_at);
    set!(cfg.out_dir, common.out_dir.clone());
    if data.corpus.is_some() {
        cfg.corpus = data.corpus.clone();
    }
    if data.vocab.is_some() {
        cfg.vocab = data.vocab.clone();
    }
    if data.splits.is_some() {
        cfg.splits = data.splits.clone();
    }
    if checkpoint.is_some() {
        cfg.checkpoint = checkpoint;
    }
    Ok(cfg)
}

fn out_dir(cfg: &Config) -> Result<&Path> {
    fs::create_dir_all(&cfg.out_dir).with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    Ok(&cfg.out_dir)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn validate_train_config(t: &TrainConfig) -> Result<(), UsageError> {
    t.validate().map_err(|e| UsageError(e.to_string()))
}

pub fn build_vocab(
    common: &Common,
    input: &Path,
    max_terms: usize,
    min_df: u32,
    validation_frac: f64,
    test_frac: f64,
) -> Result<()> {
    let cfg = resolve(common, &DataArgs::default(), None, &ModelArgs::default(), None, None)?;
    check_exists("input", input)?;
    if !(0.0..1.0).contains(&(validation_frac + test_frac)) || validation_frac < 0.0 || test_frac < 0.0 {
        return Err(UsageError("validation and test fractions must be non-negative and sum below 1".into()).into());
    }
    let text = fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
    let docs = parse_tokenized(&text).with_context(|| format!("parsing {}", input.display()))?;
    let token_lists: Vec<&[String]> = docs.iter().map(|d| d.tokens.as_slice()).collect();
    let vocab = build_vocabulary(&token_lists, max_terms, min_df)?;
    let corpus = Corpus {
        docs: docs
            .iter()
            .map(|d| Document {
                labels: d.labels.clone(),
                counts: vocab.count_tokens(&d.tokens),
            })
            .collect(),
    };
    let mut rng = RngStream::new(cfg.train.seed).substream("split");
    let splits = SplitSpec::random(corpus.len(), validation_frac, test_frac, &mut rng);
    let dir = out_dir(&cfg)?;
    vocab.write(&dir.join("vocab.txt"))?;
    write_corpus(&corpus, &dir.join("corpus.txt"))?;
    splits.write(&dir.join("splits.txt"))?;
    println!(
        "{} documents, {} terms -> {}/{{vocab,corpus,splits}}.txt",
        corpus.len(),
        vocab.len(),
        dir.display()
    );
    Ok(())
}

struct Inputs {
    corpus: Corpus,
    vocab: Vocabulary,
}

fn load_inputs(cfg: &Config, min_vocab: usize) -> Result<Inputs> {
    let corpus_path = cfg.require("corpus")?;
    let vocab_path = cfg.optional("vocab")?;
    let corpus = load_corpus(corpus_path)?;
    let vocab = match vocab_path {
        Some(p) => Vocabulary::load(p)?,
        None => Vocabulary::from_corpus(&corpus, corpus.max_term_bound().max(min_vocab))?,
    };
    Ok(Inputs { corpus, vocab })
}

/// The configured splits, or a seeded random 80/10/10 split saved to the output dir.
fn splits_for(cfg: &Config, n: usize) -> Result<SplitSpec> {
    match cfg.optional("splits")? {
        Some(p) => Ok(SplitSpec::load(p)?),
        None => {
            let splits = SplitSpec::random(n, 0.1, 0.1, &mut RngStream::new(cfg.train.seed).substream("split"));
            let path = out_dir(cfg)?.join("splits.txt");
            splits.write(&path)?;
            info!("no splits given; wrote a random split to {}", path.display());
            Ok(splits)
        }
    }
}

fn test_precision(model: &Model, data: &Dataset, k: usize) -> Result<f64> {
    if data.test.is_empty() {
        bail!("the `test` split is empty");
    }
    let index = RetrievalIndex::build(hash_documents(model, &data.train)?)?;
    Ok(precision_at_k(&hash_documents(model, &data.test)?, &index, k)?)
}

fn train_logged(t: &TrainConfig, data: &Dataset, log_path: &Path) -> Result<corrhash::TrainOutcome> {
    let mut log = fs::File::create(log_path).with_context(|| format!("creating {}", log_path.display()))?;
    writeln!(log, "# iter\tloss\tval_precision\tlr\telapsed_s")?;
    let mut io_err = None;
    let out = train_with::<f64>(t, data, |e: &LogEntry| {
        if let Err(err) = writeln!(log, "{}", e.to_line()) {
            io_err.get_or_insert(err);
        }
    })?;
    if let Some(e) = io_err {
        return Err(e).with_context(|| format!("writing {}", log_path.display()));
    }
    Ok(out)
}

pub fn train(cfg: &Config) -> Result<()> {
    validate_train_config(&cfg.train)?;
    let inputs = load_inputs(cfg, 0)?;
    let splits = splits_for(cfg, inputs.corpus.len())?;
    let data = Dataset::build(&inputs.corpus, &splits, &inputs.vocab)?;
    let dir = out_dir(cfg)?;
    write_file(&dir.join("config.txt"), &cfg.format())?;
    info!(
        "training {} bits, rank {}, k {} on {} documents ({} validation)",
        cfg.train.bits,
        cfg.train.rank,
        cfg.train.components,
        data.train.len(),
        data.validation.len()
    );
    let out = train_logged(&cfg.train, &data, &dir.join("train.log"))?;
    let ckpt = dir.join("model.ckpt");
    write_checkpoint(&out.model, &ckpt)?;
    println!("checkpoint: {}", ckpt.display());
    if let Some(p) = out.best_val_precision {
        println!("best validation precision@{}: {p:.4}", cfg.train.eval_k);
    }
    if !data.test.is_empty() {
        println!("test precision@{}: {:.4}", cfg.train.eval_k, test_precision(&out.model, &data, cfg.train.eval_k)?);
    }
    Ok(())
}

fn load_model(cfg: &Config) -> Result<Model> {
    let path = cfg.require("checkpoint")?;
    Ok(read_checkpoint(path).with_context(|| format!("loading {}", path.display()))?)
}

/// Documents of `split`, or all documents.
fn select_docs(cfg: &Config, inputs: &Inputs, split: Option<&str>) -> Result<Vec<TermVector>> {
    let ids: Vec<usize> = match split {
        None => (0..inputs.corpus.len()).collect(),
        Some(name) => {
            let path = cfg.require("splits")?;
            let spec = SplitSpec::load(path)?;
            spec.validate(inputs.corpus.len())?;
            spec.get(name)
                .ok_or_else(|| UsageError(format!("split `{name}` not in {}", path.display())))?
                .to_vec()
        }
    };
    Ok(ids
        .into_iter()
        .map(|id| TermVector::new(id, &inputs.corpus.docs[id], &inputs.vocab))
        .collect())
}

pub fn hash(cfg: &Config, split: Option<&str>) -> Result<()> {
    cfg.require("corpus")?;
    let model = load_model(cfg)?;
    let inputs = load_inputs(cfg, model.vocab_size())?;
    let docs = select_docs(cfg, &inputs, split)?;
    let codes = hash_documents(&model, &docs)?;
    let path = out_dir(cfg)?.join("codes.txt");
    write_codes(&codes, &path)?;
    println!("{} codes of {} bits -> {}", codes.len(), model.bits(), path.display());
    Ok(())
}

pub fn query(cfg: &Config, doc: usize, split: Option<&str>) -> Result<()> {
    cfg.require("corpus")?;
    let model = load_model(cfg)?;
    let inputs = load_inputs(cfg, model.vocab_size())?;
    if doc >= inputs.corpus.len() {
        return Err(UsageError(format!("document {doc} out of range (corpus has {})", inputs.corpus.len())).into());
    }
    let docs = select_docs(cfg, &inputs, split)?;
    let index = RetrievalIndex::build(hash_documents(&model, &docs)?)?;
    let q = TermVector::new(doc, &inputs.corpus.docs[doc], &inputs.vocab);
    let code = corrhash::retrieval::hash_document(&model, &q)?;
    println!("# query {doc} labels {:?} code {}", q.labels, code.to_hex());
    println!("rank\tdoc_id\tdistance\tlabels");
    for (rank, (id, d)) in index.top_k_with_distances(&code, cfg.train.eval_k)?.into_iter().enumerate() {
        let labels: Vec<String> = inputs.corpus.docs[id].labels.iter().map(u32::to_string).collect();
        println!("{}\t{id}\t{d}\t{}", rank + 1, labels.join(","));
    }
    Ok(())
}

fn lsh_precision(data: &Dataset, bits: usize, seed: u64, k: usize) -> Result<f64> {
    let h = LshHasher::new(data.vocab_size, bits, seed);
    let index = RetrievalIndex::build(data.train.iter().map(|x| h.hash(x)).collect())?;
    let queries: Vec<_> = data.test.iter().map(|x| h.hash(x)).collect();
    Ok(precision_at_k(&queries, &index, k)?)
}

pub fn eval(cfg: &Config, widths: &[usize], lsh: bool) -> Result<()> {
    let k = cfg.train.eval_k;
    let checkpoint = cfg.optional("checkpoint")?;
    if checkpoint.is_none() {
        if widths.is_empty() {
            return Err(UsageError("`--bits` lists no code lengths".into()).into());
        }
        for &w in widths {
            validate_train_config(&TrainConfig { bits: w, ..cfg.train.clone() })?;
        }
    }
    cfg.require("splits")?;
    let model = checkpoint.map(|_| load_model(cfg)).transpose()?;
    let inputs = load_inputs(cfg, model.as_ref().map_or(0, Model::vocab_size))?;
    let splits = splits_for(cfg, inputs.corpus.len())?;
    let data = Dataset::build(&inputs.corpus, &splits, &inputs.vocab)?;
    let dir = out_dir(cfg)?;

    let mut table = PrecisionTable::new(k);
    let evaluated: Vec<usize> = match &model {
        Some(m) => {
            table.insert("model", m.bits(), test_precision(m, &data, k)?);
            vec![m.bits()]
        }
        None => {
            for &w in widths {
                let t = TrainConfig { bits: w, ..cfg.train.clone() };
                info!("training {w}-bit model");
                let out = train_logged(&t, &data, &dir.join(format!("train_{w}.log")))?;
                write_checkpoint(&out.model, &dir.join(format!("model_{w}.ckpt")))?;
                table.insert("model", w, test_precision(&out.model, &data, k)?);
            }
            widths.to_vec()
        }
    };
    if lsh {
        for &w in &evaluated {
            table.insert("lsh", w, lsh_precision(&data, w, cfg.train.seed, k)?);
        }
    }
    write_file(&dir.join("eval.tsv"), &table.to_tsv())?;
    write_file(&dir.join("eval.csv"), &table.to_csv())?;
    println!("precision@{k}");
    print!("{}", table.to_tsv());
    Ok(())
}

pub fn verify(cfg: &Config) -> Result<()> {
    let report = run_suite(cfg.train.seed);
    let dir = out_dir(cfg)?;
    write_file(&dir.join("verify.txt"), &report.to_text())?;
    write_file(&dir.join("verify.tsv"), &report.to_tsv())?;
    print!("{}", report.to_text());
    let failed = report.checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(ChecksFailed(failed).into());
    }
    Ok(())
}

pub fn bench(cfg: &Config, ranks: &[usize], ks: &[usize], synthetic_docs: usize) -> Result<()> {
    if ranks.is_empty() || ks.is_empty() {
        return Err(UsageError("`--ranks` and `--ks` must be non-empty".into()).into());
    }
    for &v in ranks {
        for &k in ks {
            validate_train_config(&TrainConfig { rank: v, components: k, ..cfg.train.clone() })?;
        }
    }
    let mut data = if cfg.corpus.is_some() {
        let inputs = load_inputs(cfg, 0)?;
        let splits = splits_for(cfg, inputs.corpus.len())?;
        Dataset::build(&inputs.corpus, &splits, &inputs.vocab)?
    } else {
        let spec = SyntheticSpec {
            docs: synthetic_docs,
            classes: 20,
            vocab_size: 2000,
            doc_len: 80,
            purity: 0.5,
        };
        info!("no corpus given; timing on a synthetic corpus of {synthetic_docs} documents");
        synthetic_dataset(&spec, 0.0, 0.0, cfg.train.seed)
    };
    // timing only: skip validation
    data.validation.clear();

    let mut tsv = String::from("rank\tcomponents\tbits\tepochs\tmean_epoch_s\tfinal_loss\n");
    println!("rank\tcomponents\tmean_epoch_s");
    for &v in ranks {
        for &k in ks {
            let t = TrainConfig {
                rank: v,
                components: k,
                ..cfg.train.clone()
            };
            let out = train_with::<f64>(&t, &data, |_| {})?;
            let mean = out.epoch_seconds.iter().sum::<f64>() / out.epoch_seconds.len().max(1) as f64;
            let last = out.step_losses.last().copied().unwrap_or(f64::NAN);
            tsv.push_str(&format!("{v}\t{k}\t{}\t{}\t{mean:.4}\t{last:.4}\n", t.bits, t.epochs));
            println!("{v}\t{k}\t{mean:.4}");
        }
    }
    write_file(&out_dir(cfg)?.join("bench.tsv"), &tsv)?;
    Ok(())
}
