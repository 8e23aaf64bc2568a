//! Plain-text key=value config files and option resolution.
//!
//! Precedence, lowest to highest: built-in defaults, config file, command
//! line flags. The fully resolved configuration is dumped into the run
//! manifest.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use openloop_core::trainer::TrainConfig;
use openloop_core::{Error, Result};
use serde::Serialize;

use crate::{GenOpts, TrainOpts};

/// Every key a config file may contain (generation and training share one
/// file; `sweep` reads both groups).
const KNOWN_KEYS: &[&str] = &[
    // generation
    "classes",
    "per_class",
    "test_per_class",
    "dim",
    "sigma",
    "separation",
    "noise",
    "rate",
    "outlier_center",
    "outlier_sigma",
    // training
    "epochs",
    "warmup_epochs",
    "detect_every",
    "eta",
    "alpha",
    "squared_hinge",
    "threshold",
    "lr_base",
    "lr_drops",
    "lr_factor",
    "momentum",
    "weight_decay",
    "batch_size",
    "pair_budget",
    "pool_size",
    "hidden_dims",
    "ablation",
    // shared
    "seed",
];

pub struct FileConfig {
    map: BTreeMap<String, String>,
}

impl FileConfig {
    /// Load a config file, or an empty layer when no path is given.
    /// Format: one `key = value` per line, `#` starts a comment.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut map = BTreeMap::new();
        if let Some(p) = path {
            let text = std::fs::read_to_string(p)?;
            for (lineno, raw) in text.lines().enumerate() {
                let line = raw.split('#').next().unwrap().trim();
                if line.is_empty() {
                    continue;
                }
                let (k, v) = line.split_once('=').ok_or_else(|| {
                    Error::Malformed(format!(
                        "config line {}: expected `key = value`, got `{line}`",
                        lineno + 1
                    ))
                })?;
                let k = k.trim();
                if !KNOWN_KEYS.contains(&k) {
                    return Err(Error::InvalidArgument(format!("unknown config key `{k}`")));
                }
                map.insert(k.to_string(), v.trim().to_string());
            }
        }
        Ok(Self { map })
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        match self.map.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse().map(Some).map_err(|e| {
                Error::InvalidArgument(format!("config key `{key}`: bad value `{raw}` ({e})"))
            }),
        }
    }

    fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: Display,
    {
        match self.map.get(key) {
            None => Ok(None),
            Some(raw) => parse_list(raw)
                .map(Some)
                .map_err(|e| Error::InvalidArgument(format!("config key `{key}`: {e}"))),
        }
    }
}

pub fn parse_list<T: FromStr>(raw: &str) -> std::result::Result<Vec<T>, String>
where
    T::Err: Display,
{
    raw.split(',')
        .map(|s| {
            let s = s.trim();
            s.parse().map_err(|e| format!("bad list item `{s}` ({e})"))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseChoice {
    None,
    Open,
    Closed,
}

impl FromStr for NoiseChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "none" => NoiseChoice::None,
            "open" => NoiseChoice::Open,
            "closed" => NoiseChoice::Closed,
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "noise must be none, open, or closed (got `{s}`)"
                )))
            }
        })
    }
}

/// Fully resolved generation parameters; serialized into the manifest.
#[derive(Debug, Clone, Serialize)]
pub struct GenParams {
    pub seed: u64,
    pub classes: usize,
    pub per_class: usize,
    pub test_per_class: usize,
    pub dim: usize,
    pub sigma: f64,
    pub separation: f64,
    pub noise: NoiseChoice,
    pub rate: f64,
    pub outlier_center: Option<Vec<f64>>,
    pub outlier_sigma: f64,
}

pub fn resolve_gen(file: &FileConfig, o: &GenOpts, seed: Option<u64>) -> Result<GenParams> {
    let seed = seed
        .or(file.get("seed")?)
        .ok_or_else(|| Error::InvalidArgument("--seed is required (flag or config file)".into()))?;
    let per_class = o.per_class.or(file.get("per_class")?).unwrap_or(500);
    let params = GenParams {
        seed,
        classes: o.classes.or(file.get("classes")?).unwrap_or(2),
        per_class,
        test_per_class: o
            .test_per_class
            .or(file.get("test_per_class")?)
            .unwrap_or(per_class),
        dim: o.dim.or(file.get("dim")?).unwrap_or(2),
        sigma: o.sigma.or(file.get("sigma")?).unwrap_or(1.0),
        separation: o.separation.or(file.get("separation")?).unwrap_or(6.0),
        noise: o
            .noise
            .as_deref()
            .map(str::parse)
            .transpose()?
            .or(file.get("noise")?)
            .unwrap_or(NoiseChoice::None),
        rate: o.rate.or(file.get("rate")?).unwrap_or(0.4),
        outlier_center: o
            .outlier_center
            .as_deref()
            .map(|s| parse_list(s).map_err(Error::InvalidArgument))
            .transpose()?
            .or(file.get_list("outlier_center")?),
        outlier_sigma: o.outlier_sigma.or(file.get("outlier_sigma")?).unwrap_or(2.5),
    };
    if !(0.0..1.0).contains(&params.rate) {
        return Err(Error::InvalidArgument(format!(
            "--rate must be in [0, 1), got {}",
            params.rate
        )));
    }
    if params.classes < 1 || params.per_class < 1 || params.test_per_class < 1 || params.dim < 1 {
        return Err(Error::InvalidArgument(
            "classes, per-class counts, and dim must be >= 1".into(),
        ));
    }
    if params.sigma <= 0.0 || params.outlier_sigma <= 0.0 {
        return Err(Error::InvalidArgument("sigma values must be > 0".into()));
    }
    if let Some(c) = &params.outlier_center {
        if c.len() != params.dim {
            return Err(Error::DimensionMismatch(format!(
                "outlier center has {} coordinates, data dim is {}",
                c.len(),
                params.dim
            )));
        }
    }
    Ok(params)
}

pub fn resolve_train(file: &FileConfig, o: &TrainOpts) -> Result<TrainConfig> {
    let mut c = TrainConfig::default();

    if let Some(v) = file.get("epochs")? {
        c.epochs = v;
    }
    if let Some(v) = file.get("warmup_epochs")? {
        c.warmup_epochs = v;
    }
    if let Some(v) = file.get("detect_every")? {
        c.detect_every = v;
    }
    if let Some(v) = file.get("eta")? {
        c.eta = v;
    }
    if let Some(v) = file.get("alpha")? {
        c.alpha = v;
    }
    if let Some(v) = file.get("squared_hinge")? {
        c.squared_hinge = v;
    }
    if let Some(v) = file.get("threshold")? {
        c.threshold = v;
    }
    if let Some(v) = file.get("lr_base")? {
        c.lr_schedule.base = v;
    }
    if let Some(v) = file.get_list("lr_drops")? {
        c.lr_schedule.drops = v;
    }
    if let Some(v) = file.get("lr_factor")? {
        c.lr_schedule.factor = v;
    }
    if let Some(v) = file.get("momentum")? {
        c.momentum = v;
    }
    if let Some(v) = file.get("weight_decay")? {
        c.weight_decay = v;
    }
    if let Some(v) = file.get("batch_size")? {
        c.batch_size = v;
    }
    if let Some(v) = file.get("pair_budget")? {
        c.pair_budget = v;
    }
    if let Some(v) = file.get("pool_size")? {
        c.pool_size = v;
    }
    if let Some(v) = file.get_list("hidden_dims")? {
        c.hidden_dims = v;
    }
    if let Some(v) = file.get("ablation")? {
        c.ablation = v;
    }
    if let Some(v) = file.get("seed")? {
        c.seed = v;
    }

    if let Some(v) = o.epochs {
        c.epochs = v;
    }
    if let Some(v) = o.warmup_epochs {
        c.warmup_epochs = v;
    }
    if let Some(v) = o.detect_every {
        c.detect_every = v;
    }
    if let Some(v) = o.eta {
        c.eta = v;
    }
    if let Some(v) = o.alpha {
        c.alpha = v;
    }
    if let Some(v) = o.squared_hinge {
        c.squared_hinge = v;
    }
    if let Some(v) = o.threshold {
        c.threshold = v;
    }
    if let Some(v) = o.lr {
        c.lr_schedule.base = v;
    }
    if let Some(raw) = &o.lr_drops {
        c.lr_schedule.drops = parse_list(raw).map_err(Error::InvalidArgument)?;
    }
    if let Some(v) = o.lr_factor {
        c.lr_schedule.factor = v;
    }
    if let Some(v) = o.momentum {
        c.momentum = v;
    }
    if let Some(v) = o.weight_decay {
        c.weight_decay = v;
    }
    if let Some(v) = o.batch_size {
        c.batch_size = v;
    }
    if let Some(v) = o.pair_budget {
        c.pair_budget = v;
    }
    if let Some(v) = o.pool_size {
        c.pool_size = v;
    }
    if let Some(raw) = &o.hidden {
        c.hidden_dims = parse_list(raw).map_err(Error::InvalidArgument)?;
    }
    if let Some(raw) = &o.ablation {
        c.ablation = raw.parse()?;
    }
    if let Some(v) = o.seed {
        c.seed = v;
    }

    c.validate()?;
    Ok(c)
}
