//! `corrhash`: train, hash, query and evaluate semantic hashing models.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Error in the invocation or configuration rather than at run time.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser, Debug)]
#[command(name = "corrhash", version, about = "Semantic hashing with correlated binary codes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// Config file of `key = value` lines; flags override its values
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Random seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory receiving every output file [default: out]
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct DataArgs {
    /// Corpus file (`labels<TAB>id:count ...`)
    #[arg(long, value_name = "FILE")]
    pub corpus: Option<PathBuf>,
    /// Vocabulary file; derived from the corpus when absent
    #[arg(long, value_name = "FILE")]
    pub vocab: Option<PathBuf>,
    /// Splits file (`name id id ...`)
    #[arg(long, value_name = "FILE")]
    pub splits: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct ModelArgs {
    /// Rank v of the low-rank coupling (0 = independent bits)
    #[arg(long)]
    pub rank: Option<usize>,
    /// Mixture components k in the training bound
    #[arg(long)]
    pub components: Option<usize>,
    /// Encoder hidden widths, comma-separated
    #[arg(long, value_name = "W,W,...")]
    pub hidden: Option<String>,
    /// Initial Adam learning rate
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Iterations between learning-rate decays
    #[arg(long)]
    pub decay_interval: Option<u64>,
    /// Multiplicative learning-rate decay
    #[arg(long)]
    pub decay_factor: Option<f64>,
    /// Documents per mini-batch
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Training epochs
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Dropout keep probability for hidden layers
    #[arg(long)]
    pub keep_prob: Option<f64>,
    /// Iterations between validation events (0 = once per epoch)
    #[arg(long)]
    pub eval_interval: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a vocabulary from tokenized text and write an id-coded corpus and splits
    BuildVocab {
        #[command(flatten)]
        common: Common,
        /// Tokenized input (`labels<TAB>token token ...`)
        #[arg(long, value_name = "FILE")]
        input: PathBuf,
        /// Keep at most this many terms, by document frequency
        #[arg(long, default_value_t = 10_000)]
        max_terms: usize,
        /// Drop terms in fewer documents than this
        #[arg(long, default_value_t = 1)]
        min_df: u32,
        /// Fraction of documents held out for validation
        #[arg(long, default_value_t = 0.1)]
        validation_frac: f64,
        /// Fraction of documents held out for testing
        #[arg(long, default_value_t = 0.1)]
        test_frac: f64,
    },
    /// Train a model and write its best checkpoint and training log
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        /// Code length m
        #[arg(long)]
        bits: Option<usize>,
        #[command(flatten)]
        model: ModelArgs,
        /// Retrieval depth K for validation precision
        #[arg(long)]
        k_at: Option<usize>,
    },
    /// Write hash codes for every document (or one split) of a corpus
    Hash {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        /// Model checkpoint
        #[arg(long, value_name = "FILE")]
        checkpoint: Option<PathBuf>,
        /// Only hash this split
        #[arg(long)]
        split: Option<String>,
    },
    /// Print the nearest documents to one document
    Query {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        /// Model checkpoint
        #[arg(long, value_name = "FILE")]
        checkpoint: Option<PathBuf>,
        /// Query document id
        #[arg(long)]
        doc: usize,
        /// Number of results
        #[arg(long)]
        k_at: Option<usize>,
        /// Split searched; every document when absent
        #[arg(long)]
        split: Option<String>,
    },
    /// Precision@K of test queries against the training set, per code length
    Eval {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        /// Evaluate this checkpoint instead of training one per code length
        #[arg(long, value_name = "FILE")]
        checkpoint: Option<PathBuf>,
        /// Code lengths, comma-separated
        #[arg(long, value_name = "M,M,...", default_value = "8,16,32,64,128")]
        bits: String,
        /// Retrieval depth K
        #[arg(long)]
        k_at: Option<usize>,
        /// Skip the LSH baseline row
        #[arg(long)]
        no_lsh: bool,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Run the verification suite
    Verify {
        #[command(flatten)]
        common: Common,
    },
    /// Per-epoch training time across (rank, components) grids
    Bench {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        /// Code length m
        #[arg(long)]
        bits: Option<usize>,
        /// Ranks v, comma-separated
        #[arg(long, value_name = "V,V,...", default_value = "0,1,5,10")]
        ranks: String,
        /// Component counts k, comma-separated
        #[arg(long, value_name = "K,K,...", default_value = "1,5,10")]
        ks: String,
        /// Documents of the synthetic corpus used without `--corpus`
        #[arg(long, default_value_t = 2000)]
        synthetic_docs: usize,
        #[command(flatten)]
        model: ModelArgs,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    use commands::*;
    match cli.command {
        Command::BuildVocab {
            common,
            input,
            max_terms,
            min_df,
            validation_frac,
            test_frac,
        } => build_vocab(&common, &input, max_terms, min_df, validation_frac, test_frac),
        Command::Train {
            common,
            data,
            bits,
            model,
            k_at,
        } => train(&resolve(&common, &data, bits, &model, k_at, None)?),
        Command::Hash {
            common,
            data,
            checkpoint,
            split,
        } => hash(
            &resolve(&common, &data, None, &ModelArgs::default(), None, checkpoint)?,
            split.as_deref(),
        ),
        Command::Query {
            common,
            data,
            checkpoint,
            doc,
            k_at,
            split,
        } => query(
            &resolve(&common, &data, None, &ModelArgs::default(), k_at, checkpoint)?,
            doc,
            split.as_deref(),
        ),
        Command::Eval {
            common,
            data,
            checkpoint,
            bits,
            k_at,
            no_lsh,
            model,
        } => {
            let widths = config::parse_list("bits", &bits)?;
            eval(&resolve(&common, &data, None, &model, k_at, checkpoint)?, &widths, !no_lsh)
        }
        Command::Verify { common } => verify(&resolve(&common, &DataArgs::default(), None, &ModelArgs::default(), None, None)?),
        Command::Bench {
            common,
            data,
            bits,
            ranks,
            ks,
            synthetic_docs,
            model,
        } => {
            let ranks = config::parse_list("ranks", &ranks)?;
            let ks = config::parse_list("ks", &ks)?;
            bench(&resolve(&common, &data, bits, &model, None, None)?, &ranks, &ks, synthetic_docs)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if let Some(u) = e.downcast_ref::<UsageError>() {
                eprintln!("error: {u}");
                ExitCode::from(2)
            } else if let Some(f) = e.downcast_ref::<commands::ChecksFailed>() {
                eprintln!("{f}");
                ExitCode::from(1)
            } else {
                eprintln!("error: {e:#}");
                ExitCode::from(1)
            }
        }
    }
}
