//! Flat `key = value` run configuration layered over built-in defaults.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use anyhow::{Context, Result};
use reic::baselines::BaselineConfig;
use reic::corpus::SyntheticConfig;
use reic::nn::OptimizerKind;
use reic::rehead::HeadVariant;
use reic::rltrain::{RewardConfig, SelectorKind, TrainConfig};
use reic::selector::{DecodeMode, PolicyConfig, SelectorConfig};

/// A configuration problem the user can fix on the command line.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Every recognised key with its default and a one-line description.
pub const DEFAULTS: &[(&str, &str, &str)] = &[
    ("seed", "0", "master seed for initialization, shuffling and sampling"),
    ("corpus_seed", "0", "seed of the synthetic corpus"),
    ("n_bags", "300", "bags generated in total"),
    ("eval_bags", "100", "trailing bags written to the evaluation split"),
    ("n_relations", "4", "relation types excluding N/A"),
    ("sentences_per_doc", "60", "sentences per synthetic document"),
    ("paths_per_bag", "2", "text paths per bag"),
    ("dim", "64", "sentence embedding width"),
    ("noise_sigma", "1.0", "embedding noise standard deviation"),
    (
        "signature_norm",
        "10.0",
        "norm of the relation signature on evidence rows",
    ),
    (
        "shared_signature",
        "0.5",
        "share of the signature on the axis common to all relations",
    ),
    ("na_bag_fraction", "0.5", "fraction of N/A bags"),
    (
        "na_path_fraction",
        "0.25",
        "chance that a later path of a positive bag is N/A",
    ),
    (
        "evidence_offset_min",
        "20",
        "minimum distance from target to evidence sentence",
    ),
    ("tokens_per_sentence", "25", "token count of every synthetic sentence"),
    ("max_bridges_per_path", "2", "upper bound on bridge entities per path"),
    ("n_distractor_entities", "40", "pool of distractor entities"),
    (
        "max_distractors_per_sentence",
        "2",
        "upper bound on distractor mentions per sentence",
    ),
    ("selector", "reic", "reic | onestep | snippet | bridge"),
    ("head", "end2end", "end2end | threshold"),
    ("max_steps", "15", "sentences selected after the target (T)"),
    ("token_cap", "512", "token budget per document input"),
    (
        "window",
        "auto",
        "snippet radius in sentences, or auto to fill the token cap",
    ),
    ("filter_cap", "16", "sentence budget of the bridge filter"),
    ("lr_policy", "3e-3", "selector learning rate"),
    ("lr_re", "1e-2", "relation head learning rate"),
    ("epochs", "30", "passes over the training bags"),
    ("batch_size", "8", "bags per update"),
    ("grad_clip", "5.0", "global gradient norm limit"),
    ("optimizer", "adamw", "adamw | sgd"),
    ("weight_decay", "0.01", "decoupled weight decay"),
    ("hidden_dim", "64", "recurrent state width"),
    ("scorer_hidden", "64", "selector scorer hidden width"),
    ("head_hidden", "64", "relation head hidden width"),
    ("theta", "0.0", "threshold of the threshold head"),
    ("train_theta", "false", "learn the threshold"),
    ("lambda_positive", "10.0", "reward scale for positive bags"),
    ("lambda_na", "1.0", "reward scale for N/A bags"),
    ("clip_negative", "auto", "clip negative rewards: auto | true | false"),
    ("eval_mode", "argmax", "argmax | sample decoding at evaluation"),
    (
        "dev_eval",
        "false",
        "evaluate on the evaluation split after every epoch",
    ),
    ("extra_k", "", "comma-separated extra precision@k cut-offs"),
];

/// Short names accepted on the command line and in sweeps.
const ALIASES: &[(&str, &[&str])] = &[("T", &["max_steps"]), ("lambda", &["lambda_positive"])];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            values: DEFAULTS.iter().map(|&(k, v, _)| (k.to_owned(), v.to_owned())).collect(),
        }
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let targets: Vec<&str> = match ALIASES.iter().find(|(alias, _)| *alias == key) {
            Some((_, keys)) => keys.to_vec(),
            None => vec![key],
        };
        for k in targets {
            match self.values.get_mut(k) {
                Some(slot) => *slot = value.trim().to_owned(),
                None => return Err(usage(format!("unknown configuration key `{k}`"))),
            }
        }
        Ok(())
    }

    /// Applies a `key=value` assignment.
    pub fn apply(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| usage(format!("expected key=value, got `{assignment}`")))?;
        self.set(k.trim(), v)
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn merge_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            self.apply(line).with_context(|| format!("config line {}", n + 1))?;
        }
        Ok(())
    }

    pub fn merge_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        self.merge_text(&text)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        cfg.merge_text(text)?;
        Ok(cfg)
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    fn parse<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        let raw = self.get(key);
        raw.parse::<T>()
            .map_err(|e| usage(format!("invalid value `{raw}` for `{key}`: {e}")))
    }

    /// Resolved configuration, one `key = value` line per key, sorted.
    pub fn to_text(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn write_resolved(&self, dir: &Path) -> Result<()> {
        std::fs::write(dir.join(RESOLVED_CONFIG), self.to_text())?;
        Ok(())
    }

    pub fn synthetic(&self) -> Result<SyntheticConfig> {
        let cfg = SyntheticConfig {
            n_bags: self.parse("n_bags")?,
            n_relations: self.parse("n_relations")?,
            sentences_per_doc: self.parse("sentences_per_doc")?,
            paths_per_bag: self.parse("paths_per_bag")?,
            dim: self.parse("dim")?,
            noise_sigma: self.parse("noise_sigma")?,
            signature_norm: self.parse("signature_norm")?,
            shared_signature: self.parse("shared_signature")?,
            na_bag_fraction: self.parse("na_bag_fraction")?,
            na_path_fraction: self.parse("na_path_fraction")?,
            evidence_offset_min: self.parse("evidence_offset_min")?,
            tokens_per_sentence: self.parse("tokens_per_sentence")?,
            max_bridges_per_path: self.parse("max_bridges_per_path")?,
            n_distractor_entities: self.parse("n_distractor_entities")?,
            max_distractors_per_sentence: self.parse("max_distractors_per_sentence")?,
            seed: self.parse("corpus_seed")?,
        };
        cfg.validate().map_err(|e| usage(e.to_string()))?;
        Ok(cfg)
    }

    pub fn eval_bags(&self) -> Result<usize> {
        self.parse("eval_bags")
    }

    pub fn head_variant(&self) -> Result<HeadVariant> {
        self.parse("head")
    }

    pub fn selector(&self) -> Result<SelectorKind> {
        self.parse("selector")
    }

    pub fn train(&self) -> Result<TrainConfig> {
        let window = match self.get("window") {
            "auto" => None,
            _ => Some(self.parse("window")?),
        };
        let token_cap = self.parse("token_cap")?;
        let cfg = TrainConfig {
            lr_policy: self.parse("lr_policy")?,
            lr_re: self.parse("lr_re")?,
            epochs: self.parse("epochs")?,
            batch_size: self.parse("batch_size")?,
            grad_clip: self.parse("grad_clip")?,
            master_seed: self.parse("seed")?,
            selector: self.selector()?,
            selection: SelectorConfig {
                max_steps: self.parse("max_steps")?,
                token_cap,
                one_step: false,
            },
            baseline: BaselineConfig {
                window,
                token_cap,
                filter_cap: self.parse("filter_cap")?,
            },
            eval_mode: self.parse::<DecodeMode>("eval_mode")?,
            policy: PolicyConfig {
                embed_dim: self.parse("dim")?,
                hidden_dim: self.parse("hidden_dim")?,
                scorer_hidden: self.parse("scorer_hidden")?,
            },
            head_hidden: self.parse("head_hidden")?,
            theta: self.parse("theta")?,
            train_theta: self.parse("train_theta")?,
            optimizer: self.parse::<OptimizerKind>("optimizer")?,
            weight_decay: self.parse("weight_decay")?,
        };
        cfg.validate().map_err(|e| usage(e.to_string()))?;
        Ok(cfg)
    }

    pub fn reward(&self) -> Result<RewardConfig> {
        let mut cfg = RewardConfig::new(self.head_variant()?);
        cfg.lambda_positive = self.parse("lambda_positive")?;
        cfg.lambda_na = self.parse("lambda_na")?;
        if self.get("clip_negative") != "auto" {
            cfg.clip_negative = self.parse("clip_negative")?;
        }
        cfg.validate().map_err(|e| usage(e.to_string()))?;
        Ok(cfg)
    }

    pub fn dev_eval(&self) -> Result<bool> {
        self.parse("dev_eval")
    }

    pub fn extra_k(&self) -> Result<Vec<usize>> {
        self.get("extra_k")
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<usize>()
                    .ok()
                    .filter(|&k| k > 0)
                    .ok_or_else(|| usage(format!("invalid precision cut-off `{s}`")))
            })
            .collect()
    }
}

pub const RESOLVED_CONFIG: &str = "resolved-config.txt";
