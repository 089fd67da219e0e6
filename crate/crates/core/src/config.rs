//! Experiment configuration.
//!
//! The file format is one `key = value` pair per line; `#` starts a comment.
//! Unknown keys are rejected. Command-line overrides win over file values,
//! and defaults fill the rest.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::federation::TrainConfig;
use crate::filter::ProbeMode;

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    Synthetic,
    /// Directory holding the four standard MNIST IDX files.
    Mnist(PathBuf),
}

/// Poisoning applied to abnormal subject clients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackKind {
    NoiseMix,
    LabelFlip,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    pub seed: u64,
    pub n_clients: usize,
    pub per_client: usize,
    pub indicator_normal: usize,
    pub indicator_abnormal: usize,
    pub subject_normal: usize,
    pub subject_abnormal: usize,
    pub attack: AttackKind,
    pub noise_ratio: f64,
    /// Held-out synthetic examples used for validation.
    pub validation_size: usize,
    pub train: TrainConfig,
    /// Also run every sweep point with the filter disabled.
    pub compare: bool,
    pub out_dir: PathBuf,
    pub sweep_noise_ratios: Vec<f64>,
    pub sweep_abnormal_counts: Vec<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: DatasetSource::Synthetic,
            seed: 0,
            n_clients: 100,
            per_client: 600,
            indicator_normal: 2,
            indicator_abnormal: 2,
            subject_normal: 48,
            subject_abnormal: 48,
            attack: AttackKind::NoiseMix,
            noise_ratio: 1.0,
            validation_size: 1000,
            train: TrainConfig::default(),
            compare: false,
            out_dir: PathBuf::from("out"),
            sweep_noise_ratios: Vec::new(),
            sweep_abnormal_counts: Vec::new(),
        }
    }
}

impl ExperimentConfig {
    pub fn subject_count(&self) -> usize {
        self.subject_normal + self.subject_abnormal
    }

    pub fn validate(&self) -> Result<()> {
        let sum = self.indicator_normal + self.indicator_abnormal + self.subject_count();
        if sum != self.n_clients {
            return Err(Error::config(
                "n_clients",
                format!("role counts add up to {sum}, not {}", self.n_clients),
            ));
        }
        if self.n_clients == 0 {
            return Err(Error::config("n_clients", "must be positive"));
        }
        if self.per_client == 0 {
            return Err(Error::config("per_client", "must be positive"));
        }
        check_ratio("noise_ratio", self.noise_ratio)?;
        for &r in &self.sweep_noise_ratios {
            check_ratio("sweep_noise_ratios", r)?;
        }
        for &a in &self.sweep_abnormal_counts {
            if a > self.subject_count() {
                return Err(Error::config(
                    "sweep_abnormal_counts",
                    format!("{a} exceeds the {} subject clients", self.subject_count()),
                ));
            }
        }
        if !(self.train.learning_rate > 0.0 && self.train.learning_rate.is_finite()) {
            return Err(Error::config("lr", "must be positive"));
        }
        if self.train.batch_size == 0 {
            return Err(Error::config("batch_size", "must be positive"));
        }
        if self.train.k == 0 {
            return Err(Error::config("k", "must be positive"));
        }
        if self.train.filter_enabled {
            if self.indicator_normal == 0 || self.indicator_abnormal == 0 {
                return Err(Error::config(
                    "indicator_normal",
                    "the filter needs at least one indicator of each kind",
                ));
            }
            if self.train.k > self.indicator_normal + self.indicator_abnormal {
                return Err(Error::config("k", "exceeds the number of indicator clients"));
            }
        }
        if self.dataset == DatasetSource::Synthetic && self.validation_size == 0 {
            return Err(Error::config("validation_size", "must be positive"));
        }
        Ok(())
    }

    /// Same experiment with a different abnormal-subject count; the number of
    /// subjects stays fixed.
    pub fn with_abnormal_subjects(&self, abnormal: usize) -> Self {
        let subjects = self.subject_count();
        ExperimentConfig {
            subject_abnormal: abnormal.min(subjects),
            subject_normal: subjects - abnormal.min(subjects),
            ..self.clone()
        }
    }
}

fn check_ratio(key: &str, r: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::config(key, format!("{r} is outside [0, 1]")));
    }
    Ok(())
}

/// Values given on the command line.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub noise_ratio: Option<f64>,
    pub rounds: Option<usize>,
    pub clients: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub no_filter: bool,
    /// `synthetic` or `mnist`.
    pub dataset: Option<String>,
    /// Output directory used when neither the file nor `out_dir` sets one.
    pub default_out_dir: Option<PathBuf>,
}

const KEYS: &[&str] = &[
    "seed",
    "dataset",
    "mnist_dir",
    "n_clients",
    "per_client",
    "indicator_normal",
    "indicator_abnormal",
    "subject_normal",
    "subject_abnormal",
    "attack",
    "noise_ratio",
    "validation_size",
    "rounds",
    "epochs",
    "lr",
    "batch_size",
    "k",
    "filter_enabled",
    "compare",
    "out_dir",
    "probe_output",
    "sweep_noise_ratios",
    "sweep_abnormal_counts",
];

fn parse_value<T: FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| Error::config(key, format!("malformed value `{raw}`")))
}

fn parse_bool(key: &str, raw: &str) -> Result<bool> {
    match raw {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::config(key, format!("expected true or false, got `{raw}`"))),
    }
}

fn parse_list<T: FromStr>(key: &str, raw: &str) -> Result<Vec<T>> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_value(key, s))
        .collect()
}

fn parse_dataset(key: &str, raw: &str, mnist_dir: Option<&str>) -> Result<DatasetSource> {
    match raw {
        "synthetic" => Ok(DatasetSource::Synthetic),
        "mnist" => Ok(DatasetSource::Mnist(PathBuf::from(mnist_dir.unwrap_or("mnist")))),
        _ => Err(Error::config(key, format!("expected synthetic or mnist, got `{raw}`"))),
    }
}

/// Reads `text` and applies `overrides` on top.
pub fn parse_config(text: &str, overrides: &Overrides) -> Result<ExperimentConfig> {
    let mut raw: BTreeMap<String, String> = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::config(line, format!("line {} is not `key = value`", lineno + 1))
        })?;
        let (key, value) = (key.trim(), value.trim());
        if !KEYS.contains(&key) {
            return Err(Error::config(key, "unknown key"));
        }
        if raw.insert(key.to_string(), value.to_string()).is_some() {
            return Err(Error::config(key, "given more than once"));
        }
    }
    let get = |k: &str| raw.get(k).map(String::as_str);

    let mut cfg = ExperimentConfig::default();
    if let Some(v) = get("seed") {
        cfg.seed = parse_value("seed", v)?;
    }
    if let Some(v) = get("dataset") {
        cfg.dataset = parse_dataset("dataset", v, get("mnist_dir"))?;
    } else if get("mnist_dir").is_some() {
        return Err(Error::config("mnist_dir", "requires `dataset = mnist`"));
    }
    if let Some(v) = get("per_client") {
        cfg.per_client = parse_value("per_client", v)?;
    }
    for (key, slot) in [
        ("indicator_normal", &mut cfg.indicator_normal),
        ("indicator_abnormal", &mut cfg.indicator_abnormal),
        ("subject_normal", &mut cfg.subject_normal),
        ("subject_abnormal", &mut cfg.subject_abnormal),
    ] {
        if let Some(v) = get(key) {
            *slot = parse_value(key, v)?;
        }
    }
    if let Some(v) = get("attack") {
        cfg.attack = match v {
            "noise" | "noise_mix" => AttackKind::NoiseMix,
            "label_flip" => AttackKind::LabelFlip,
            _ => return Err(Error::config("attack", format!("unknown attack `{v}`"))),
        };
    }
    if let Some(v) = get("noise_ratio") {
        cfg.noise_ratio = parse_value("noise_ratio", v)?;
        check_ratio("noise_ratio", cfg.noise_ratio)?;
    }
    if let Some(v) = get("validation_size") {
        cfg.validation_size = parse_value("validation_size", v)?;
    }
    if let Some(v) = get("rounds") {
        cfg.train.rounds = parse_value("rounds", v)?;
    }
    if let Some(v) = get("epochs") {
        cfg.train.epochs_per_round = parse_value("epochs", v)?;
    }
    if let Some(v) = get("lr") {
        cfg.train.learning_rate = parse_value("lr", v)?;
    }
    if let Some(v) = get("batch_size") {
        cfg.train.batch_size = parse_value("batch_size", v)?;
    }
    if let Some(v) = get("k") {
        cfg.train.k = parse_value("k", v)?;
    }
    if let Some(v) = get("filter_enabled") {
        cfg.train.filter_enabled = parse_bool("filter_enabled", v)?;
    }
    if let Some(v) = get("compare") {
        cfg.compare = parse_bool("compare", v)?;
    }
    if let Some(v) = get("probe_output") {
        cfg.train.probe_mode = match v {
            "softmax" => ProbeMode::Softmax,
            "logits" => ProbeMode::Logits,
            _ => return Err(Error::config("probe_output", format!("expected softmax or logits, got `{v}`"))),
        };
    }
    if let Some(v) = get("sweep_noise_ratios") {
        cfg.sweep_noise_ratios = parse_list("sweep_noise_ratios", v)?;
    }
    if let Some(v) = get("sweep_abnormal_counts") {
        cfg.sweep_abnormal_counts = parse_list("sweep_abnormal_counts", v)?;
    }
    cfg.out_dir = match (get("out_dir"), &overrides.default_out_dir) {
        (Some(v), _) => PathBuf::from(v),
        (None, Some(d)) => d.clone(),
        (None, None) => cfg.out_dir,
    };

    // client counts: explicit subject counts fix n_clients unless it is also given
    let subjects_given = get("subject_normal").is_some() || get("subject_abnormal").is_some();
    let indicators = cfg.indicator_normal + cfg.indicator_abnormal;
    match get("n_clients") {
        Some(v) => {
            cfg.n_clients = parse_value("n_clients", v)?;
            if !subjects_given {
                split_subjects(&mut cfg, "n_clients", indicators)?;
            }
        }
        None => cfg.n_clients = indicators + cfg.subject_count(),
    }

    if let Some(seed) = overrides.seed {
        cfg.seed = seed;
    }
    if let Some(r) = overrides.noise_ratio {
        check_ratio("noise_ratio", r)?;
        cfg.noise_ratio = r;
    }
    if let Some(rounds) = overrides.rounds {
        cfg.train.rounds = rounds;
    }
    if let Some(n) = overrides.clients {
        cfg.n_clients = n;
        split_subjects(&mut cfg, "clients", indicators)?;
    }
    if let Some(dir) = &overrides.out_dir {
        cfg.out_dir = dir.clone();
    }
    if overrides.no_filter {
        cfg.train.filter_enabled = false;
    }
    if let Some(d) = &overrides.dataset {
        cfg.dataset = parse_dataset("dataset", d, get("mnist_dir"))?;
    }

    cfg.validate()?;
    Ok(cfg)
}

/// Splits the non-indicator clients evenly; the extra one (if odd) is normal.
fn split_subjects(cfg: &mut ExperimentConfig, key: &str, indicators: usize) -> Result<()> {
    let subjects = cfg.n_clients.checked_sub(indicators).ok_or_else(|| {
        Error::config(key, format!("{} clients cannot hold {indicators} indicators", cfg.n_clients))
    })?;
    cfg.subject_abnormal = subjects / 2;
    cfg.subject_normal = subjects - subjects / 2;
    Ok(())
}
