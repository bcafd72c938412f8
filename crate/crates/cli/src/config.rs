//! `key = value` run configuration.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use corrhash::trainer::TrainConfig;

use crate::UsageError;

pub const KEYS: &[&str] = &[
    "bits",
    "rank",
    "components",
    "hidden",
    "learning_rate",
    "decay_interval",
    "decay_factor",
    "batch_size",
    "epochs",
    "keep_prob",
    "eval_interval",
    "k_at",
    "seed",
    "corpus",
    "vocab",
    "splits",
    "checkpoint",
    "out_dir",
];

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub train: TrainConfig,
    pub corpus: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    pub splits: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out_dir: PathBuf,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            corpus: None,
            vocab: None,
            splits: None,
            checkpoint: None,
            out_dir: PathBuf::from("out"),
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, UsageError> {
    value
        .parse()
        .map_err(|_| UsageError(format!("invalid value for `{key}`: {value:?}")))
}

pub fn parse_list(key: &str, value: &str) -> Result<Vec<usize>, UsageError> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse_value(key, v.trim())).collect()
}

impl Config {
    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<BTreeMap<String, String>, UsageError> {
        let mut out = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| UsageError(format!("config line {}: expected `key = value`", i + 1)))?;
            let key = key.trim();
            if !KEYS.contains(&key) {
                return Err(UsageError(format!("config line {}: unknown key `{key}`", i + 1)));
            }
            out.insert(key.to_string(), value.trim().to_string());
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Self, UsageError> {
        let text =
            fs::read_to_string(path).map_err(|_| UsageError(format!("config not found: {}", path.display())))?;
        let mut cfg = Self::default();
        cfg.apply(&Self::parse(&text)?)?;
        Ok(cfg)
    }

    pub fn apply(&mut self, entries: &BTreeMap<String, String>) -> Result<(), UsageError> {
        let t = &mut self.train;
        for (k, v) in entries {
            match k.as_str() {
                "bits" => t.bits = parse_value(k, v)?,
                "rank" => t.rank = parse_value(k, v)?,
                "components" => t.components = parse_value(k, v)?,
                "hidden" => t.hidden = parse_list(k, v)?,
                "learning_rate" => t.learning_rate = parse_value(k, v)?,
                "decay_interval" => t.decay_interval = parse_value(k, v)?,
                "decay_factor" => t.decay_factor = parse_value(k, v)?,
                "batch_size" => t.batch_size = parse_value(k, v)?,
                "epochs" => t.epochs = parse_value(k, v)?,
                "keep_prob" => t.keep_prob = parse_value(k, v)?,
                "eval_interval" => t.eval_interval = parse_value(k, v)?,
                "k_at" => t.eval_k = parse_value(k, v)?,
                "seed" => t.seed = parse_value(k, v)?,
                "corpus" => self.corpus = Some(PathBuf::from(v)),
                "vocab" => self.vocab = Some(PathBuf::from(v)),
                "splits" => self.splits = Some(PathBuf::from(v)),
                "checkpoint" => self.checkpoint = Some(PathBuf::from(v)),
                "out_dir" => self.out_dir = PathBuf::from(v),
                other => return Err(UsageError(format!("unknown key `{other}`"))),
            }
        }
        Ok(())
    }

    pub fn format(&self) -> String {
        let t = &self.train;
        let hidden: Vec<String> = t.hidden.iter().map(usize::to_string).collect();
        let mut out = format!(
            "bits = {}\nrank = {}\ncomponents = {}\nhidden = {}\nlearning_rate = {}\ndecay_interval = {}\n\
             decay_factor = {}\nbatch_size = {}\nepochs = {}\nkeep_prob = {}\neval_interval = {}\nk_at = {}\nseed = {}\n",
            t.bits,
            t.rank,
            t.components,
            hidden.join(","),
            t.learning_rate,
            t.decay_interval,
            t.decay_factor,
            t.batch_size,
            t.epochs,
            t.keep_prob,
            t.eval_interval,
            t.eval_k,
            t.seed
        );
        for (k, p) in [
            ("corpus", &self.corpus),
            ("vocab", &self.vocab),
            ("splits", &self.splits),
            ("checkpoint", &self.checkpoint),
        ] {
            if let Some(p) = p {
                out.push_str(&format!("{k} = {}\n", p.display()));
            }
        }
        out.push_str(&format!("out_dir = {}\n", self.out_dir.display()));
        out
    }

    /// The named input path, which must exist.
    pub fn require(&self, key: &str) -> Result<&Path, UsageError> {
        let p = match key {
            "corpus" => &self.corpus,
            "vocab" => &self.vocab,
            "splits" => &self.splits,
            "checkpoint" => &self.checkpoint,
            _ => unreachable!("not a path key: {key}"),
        };
        let p = p
            .as_deref()
            .ok_or_else(|| UsageError(format!("missing required `--{key}` (or `{key}` in the config)")))?;
        check_exists(key, p)?;
        Ok(p)
    }

    /// The named input path if configured, which must then exist.
    pub fn optional(&self, key: &str) -> Result<Option<&Path>, UsageError> {
        let p = match key {
            "vocab" => &self.vocab,
            "splits" => &self.splits,
            "checkpoint" => &self.checkpoint,
            "corpus" => &self.corpus,
            _ => unreachable!("not a path key: {key}"),
        };
        match p.as_deref() {
            Some(p) => check_exists(key, p).map(|_| Some(p)),
            None => Ok(None),
        }
    }
}

pub fn check_exists(what: &str, p: &Path) -> Result<(), UsageError> {
    if p.is_file() {
        Ok(())
    } else {
        Err(UsageError(format!("{what} not found: {}", p.display())))
    }
}
