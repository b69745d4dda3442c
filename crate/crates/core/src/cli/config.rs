//! Experiment configuration file and the compact `--dataset` / `--arch`
//! flag syntaxes.

use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{self, Dataset, DEFAULT_LABEL_COLUMN};
use crate::error::{Error, Result};
use crate::geodesic::GeodesicOpts;
use crate::nn::MlpConfig;
use crate::trainer::TrainOpts;

pub const CONFIG_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSpec {
    GaussianMixture {
        #[serde(default = "default_classes")]
        classes: usize,
        #[serde(default = "default_per_class")]
        per_class: usize,
        #[serde(default = "default_dim")]
        dim: usize,
        #[serde(default = "default_spread")]
        spread: f64,
        #[serde(default)]
        seed: u64,
    },
    TwoMoons {
        #[serde(default = "default_moons_n")]
        n: usize,
        #[serde(default = "default_noise")]
        noise: f64,
        #[serde(default)]
        seed: u64,
    },
    Csv {
        path: PathBuf,
        #[serde(default = "default_label_column")]
        label_column: String,
    },
    Idx {
        images: PathBuf,
        labels: PathBuf,
    },
}

fn default_label_column() -> String {
    DEFAULT_LABEL_COLUMN.to_string()
}

fn default_classes() -> usize {
    5
}

fn default_per_class() -> usize {
    500
}

fn default_dim() -> usize {
    2
}

fn default_spread() -> f64 {
    0.5
}

fn default_moons_n() -> usize {
    1000
}

fn default_noise() -> f64 {
    0.1
}

impl Default for DatasetSpec {
    /// Five overlapping 2-D blobs, 500 points each.
    fn default() -> Self {
        DatasetSpec::GaussianMixture {
            classes: default_classes(),
            per_class: default_per_class(),
            dim: default_dim(),
            spread: default_spread(),
            seed: 0,
        }
    }
}

impl DatasetSpec {
    pub fn load(&self) -> Result<Dataset> {
        match self {
            DatasetSpec::GaussianMixture {
                classes,
                per_class,
                dim,
                spread,
                seed,
            } => data::gen_gaussian_mixture(*classes, *per_class, *dim, *spread, *seed),
            DatasetSpec::TwoMoons { n, noise, seed } => data::gen_two_moons(*n, *noise, *seed),
            DatasetSpec::Csv { path, label_column } => data::load_csv(path, label_column),
            DatasetSpec::Idx { images, labels } => data::load_idx(images, labels),
        }
    }
}

fn flag_error(reason: impl Into<String>) -> Error {
    Error::invalid("--dataset", reason)
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| flag_error(format!("{key}={value:?} is not a valid number")))
}

/// `gmm[:classes=5,per_class=500,dim=2,spread=0.5,seed=0]`,
/// `moons[:n=1000,noise=0.1,seed=0]`, `csv:PATH[,label=COLUMN]` or
/// `idx:IMAGES,LABELS`. Omitted generator parameters keep their defaults.
impl FromStr for DatasetSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        let parts: Vec<&str> = rest.split(',').filter(|p| !p.is_empty()).collect();
        let pairs = || {
            parts.iter().map(|p| {
                p.split_once('=')
                    .ok_or_else(|| flag_error(format!("expected key=value, got {p:?}")))
            })
        };
        match kind {
            "gmm" | "gaussian_mixture" => {
                let mut spec = DatasetSpec::default();
                let DatasetSpec::GaussianMixture {
                    classes,
                    per_class,
                    dim,
                    spread,
                    seed,
                } = &mut spec
                else {
                    unreachable!()
                };
                for pair in pairs() {
                    let (k, v) = pair?;
                    match k {
                        "classes" => *classes = parse_num(k, v)?,
                        "per_class" => *per_class = parse_num(k, v)?,
                        "dim" => *dim = parse_num(k, v)?,
                        "spread" => *spread = parse_num(k, v)?,
                        "seed" => *seed = parse_num(k, v)?,
                        _ => return Err(flag_error(format!("unknown gmm parameter {k:?}"))),
                    }
                }
                Ok(spec)
            }
            "moons" | "two_moons" => {
                let (mut n, mut noise, mut seed) = (default_moons_n(), default_noise(), 0);
                for pair in pairs() {
                    let (k, v) = pair?;
                    match k {
                        "n" => n = parse_num(k, v)?,
                        "noise" => noise = parse_num(k, v)?,
                        "seed" => seed = parse_num(k, v)?,
                        _ => return Err(flag_error(format!("unknown moons parameter {k:?}"))),
                    }
                }
                Ok(DatasetSpec::TwoMoons { n, noise, seed })
            }
            "csv" => {
                let path = parts
                    .first()
                    .ok_or_else(|| flag_error("csv needs a path"))?;
                let mut label_column = default_label_column();
                for p in &parts[1..] {
                    match p.split_once('=') {
                        Some(("label", v)) => label_column = v.to_string(),
                        _ => return Err(flag_error(format!("unknown csv option {p:?}"))),
                    }
                }
                Ok(DatasetSpec::Csv {
                    path: PathBuf::from(path),
                    label_column,
                })
            }
            "idx" => match parts.as_slice() {
                [images, labels] => Ok(DatasetSpec::Idx {
                    images: PathBuf::from(images),
                    labels: PathBuf::from(labels),
                }),
                _ => Err(flag_error("idx needs IMAGES,LABELS")),
            },
            other => Err(flag_error(format!("unknown dataset kind {other:?}"))),
        }
    }
}

/// `2-8-8-5` (or comma separated), with an optional `+ln` suffix to enable
/// layer normalization on the hidden layers.
pub fn parse_arch(s: &str) -> Result<MlpConfig> {
    let (sizes, ln) = match s.strip_suffix("+ln") {
        Some(rest) => (rest, true),
        None => (s, false),
    };
    let layer_sizes = sizes
        .split(['-', ','])
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| Error::invalid("--arch", format!("{t:?} is not a layer size")))
        })
        .collect::<Result<Vec<_>>>()?;
    MlpConfig::new(layer_sizes, ln).map_err(|e| Error::invalid("--arch", e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub momentum: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainOpts::default();
        TrainSection {
            learning_rate: d.learning_rate,
            batch_size: d.batch_size,
            epochs: d.epochs,
            momentum: d.momentum,
        }
    }
}

impl TrainSection {
    pub fn opts(&self, seed: u64) -> TrainOpts {
        TrainOpts {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            epochs: self.epochs,
            momentum: self.momentum,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeodesicSection {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub iterations: usize,
    pub eval_every: usize,
}

impl Default for GeodesicSection {
    fn default() -> Self {
        let d = GeodesicOpts::default();
        GeodesicSection {
            learning_rate: d.learning_rate,
            batch_size: d.batch_size,
            iterations: d.iterations,
            eval_every: d.eval_every,
        }
    }
}

impl GeodesicSection {
    pub fn opts(&self, seed: u64) -> GeodesicOpts {
        GeodesicOpts {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            iterations: self.iterations,
            eval_every: self.eval_every,
            seed,
        }
    }
}

/// Everything `run-all` needs. Seeds of the individual stages derive from
/// the global `seed`: the split uses `seed`, the two endpoint models
/// `seed + 1` and `seed + 2`, and the path optimizer `seed + 3`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u64,
    pub seed: u64,
    pub dataset: DatasetSpec,
    pub test_fraction: f64,
    pub arch: MlpConfig,
    pub train: TrainSection,
    pub align: bool,
    /// Shuffle the weight-matching layer order with this seed.
    pub match_order_seed: Option<u64>,
    pub n: usize,
    pub geodesic: GeodesicSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            version: CONFIG_VERSION,
            seed: 0,
            dataset: DatasetSpec::default(),
            test_fraction: 0.2,
            arch: MlpConfig::new(vec![2, 8, 8, 5], false).expect("valid default"),
            train: TrainSection::default(),
            align: true,
            match_order_seed: None,
            n: 25,
            geodesic: GeodesicSection::default(),
            out: None,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let cfg: ExperimentConfig = crate::io::read_json(path)?;
        if cfg.version != CONFIG_VERSION {
            return Err(Error::Version {
                what: "experiment config",
                found: cfg.version,
                expected: CONFIG_VERSION,
            });
        }
        Ok(cfg)
    }

    pub fn split_seed(&self) -> u64 {
        self.seed
    }

    pub fn model_seeds(&self) -> (u64, u64) {
        (self.seed.wrapping_add(1), self.seed.wrapping_add(2))
    }

    pub fn geodesic_seed(&self) -> u64 {
        self.seed.wrapping_add(3)
    }

    pub fn validate(&self) -> Result<()> {
        self.arch
            .validate()
            .map_err(|e| Error::invalid("arch", e.to_string()))?;
        if self.n < 2 {
            return Err(Error::invalid("n", "a path needs at least 2 models"));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::invalid(
                "test_fraction",
                "must lie strictly between 0 and 1",
            ));
        }
        self.train
            .opts(0)
            .validate()
            .map_err(|e| prefix("train", e))?;
        self.geodesic
            .opts(0)
            .validate()
            .map_err(|e| prefix("geodesic", e))?;
        Ok(())
    }

    /// Loads the dataset and splits it into train and test parts.
    pub fn load_data(&self) -> Result<(Dataset, Dataset)> {
        let full = self.dataset.load()?;
        data::split(&full, self.test_fraction, self.split_seed())
    }
}

fn prefix(section: &str, e: Error) -> Error {
    match e {
        Error::Invalid { field, reason } => Error::Invalid {
            field: format!("{section}.{field}"),
            reason,
        },
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_flag_syntax() {
        assert_eq!(
            "gmm".parse::<DatasetSpec>().unwrap(),
            DatasetSpec::default()
        );
        let DatasetSpec::GaussianMixture {
            classes, spread, ..
        } = "gmm:classes=3,spread=0.25".parse().unwrap()
        else {
            panic!()
        };
        assert_eq!((classes, spread), (3, 0.25));
        assert_eq!(
            "moons:n=10".parse::<DatasetSpec>().unwrap(),
            DatasetSpec::TwoMoons {
                n: 10,
                noise: 0.1,
                seed: 0
            }
        );
        assert_eq!(
            "csv:data.csv,label=y".parse::<DatasetSpec>().unwrap(),
            DatasetSpec::Csv {
                path: "data.csv".into(),
                label_column: "y".into()
            }
        );
        assert!("idx:a".parse::<DatasetSpec>().is_err());
        assert!("gmm:bogus=1".parse::<DatasetSpec>().is_err());
        assert!("nope".parse::<DatasetSpec>().is_err());
    }

    #[test]
    fn arch_flag_syntax() {
        let cfg = parse_arch("2-8-8-5").unwrap();
        assert_eq!(cfg.layer_sizes, vec![2, 8, 8, 5]);
        assert!(!cfg.use_layernorm);
        assert!(parse_arch("2,4,3+ln").unwrap().use_layernorm);
        assert!(parse_arch("2-x-3").is_err());
        assert!(parse_arch("2").is_err());
    }

    #[test]
    fn config_defaults_round_trip() {
        let cfg = ExperimentConfig::default();
        assert_eq!(cfg.n, 25);
        assert_eq!(cfg.geodesic.learning_rate, 0.1);
        assert_eq!(cfg.geodesic.batch_size, 256);
        let text = serde_json::to_string(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        let partial: ExperimentConfig = serde_json::from_str(r#"{"version":1,"n":5}"#).unwrap();
        assert_eq!(partial.n, 5);
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"bogus":1}"#).is_err());
    }
}
