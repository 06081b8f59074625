//! Flat `key = value` experiment configuration.
//!
//! One assignment per line; `#` starts a comment; list values are comma separated.
//! Unknown or repeated keys are errors. Every key is optional:
//!
//! | key | default | meaning |
//! |-----|---------|---------|
//! | `experiment` | from the subcommand | `vote`, `cyclic`, `distill` or `spatial` |
//! | `seeds` | `0` | seed list; one report cell per seed |
//! | `out`, `format`, `workers` | none, `csv`, `1` | report path and format, worker threads |
//! | `data` | `mnist` | `mnist` or `blobs` |
//! | `mnist_dir`, `train_limit`, `test_limit` | `data/mnist`, `0`, `0` | IDX directory; first-n limits, 0 keeps all |
//! | `blobs_train_per_class`, `blobs_test_per_class` | `200`, `100` | blob sizes |
//! | `blobs_classes`, `blobs_dims`, `blobs_spread`, `blobs_seed` | `2`, `2`, `0.1`, `0` | blob geometry |
//! | `hidden` | `50,50` | hidden layer widths (ReLU) |
//! | `learning_rate`, `beta1`, `beta2`, `epsilon` | `0.001`, `0.9`, `0.999`, `1e-7` | Adam |
//! | `batch_size`, `iterations` | `100`, `100` | minibatch size and steps per model |
//! | `pool_size`, `pool_p` | `200`, `1` | voting pool and each member's Bernoulli subset fraction |
//! | `ensemble_sizes`, `draws` | `1,5,15,25,55`, `50` | ensemble sizes and random draws per size |
//! | `rules` | every voting rule and `softmax` | fusion schemes for `vote` and `cyclic` |
//! | `schedule` | `snapshot` | `constant`, `snapshot` or `fge` |
//! | `epochs`, `constant_rate` | `30`, `learning_rate` | cyclic horizon; rate of `constant` |
//! | `alpha0`, `cycles` | `0.01`, `6` | snapshot cosine |
//! | `fge_alpha1`, `fge_alpha2`, `fge_cycle_epochs`, `fge_pretrain_fraction` | `0.01`, `0.0005`, `2`, `0.75` | FGE |
//! | `checkpoint_dir`, `outputs_dir` | none | where cyclic runs write checkpoints and test-set probabilities |
//! | `teachers`, `p`, `alphas`, `variants` | `3`, `1`, `0.25,0.5`, `avg,geo,ind` | distillation grid |
//! | `student_iterations` | `iterations` | student and single-model budget |
//! | `voters`, `candidates`, `trials`, `spatial_rules` | `100`, `5`, `10000`, every rule | spatial elections |

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use efkd_core::distill::{DistillConfig, SubsetSpec, TrainConfig, Variant};
use efkd_core::fusion::FusionRule;
use efkd_core::nn::{AdamConfig, MlpSpec};
use efkd_core::schedules::{ScheduleKind, ScheduleSpec, FGE_PRETRAIN_FRACTION};
use efkd_core::voting::Rule;
use sha2::{Digest, Sha256};

use crate::data::{self, Split};
use crate::error::{CliError, Result};
use crate::report::Format;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ExperimentKind {
    Vote,
    Cyclic,
    Distill,
    Spatial,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Vote => "vote",
            ExperimentKind::Cyclic => "cyclic",
            ExperimentKind::Distill => "distill",
            ExperimentKind::Spatial => "spatial",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "vote" => Ok(ExperimentKind::Vote),
            "cyclic" => Ok(ExperimentKind::Cyclic),
            "distill" => Ok(ExperimentKind::Distill),
            "spatial" => Ok(ExperimentKind::Spatial),
            other => Err(format!("unknown experiment `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum DataSpec {
    Mnist {
        dir: PathBuf,
        train_limit: usize,
        test_limit: usize,
    },
    Blobs {
        train_per_class: usize,
        test_per_class: usize,
        classes: usize,
        dims: usize,
        spread: f64,
        seed: u64,
    },
}

impl DataSpec {
    pub fn load(&self) -> Result<Split> {
        match *self {
            DataSpec::Mnist {
                ref dir,
                train_limit,
                test_limit,
            } => data::load_mnist_dir(dir, train_limit, test_limit),
            DataSpec::Blobs {
                train_per_class,
                test_per_class,
                classes,
                dims,
                spread,
                seed,
            } => data::blob_split(train_per_class, test_per_class, classes, dims, spread, seed),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub hidden: Vec<usize>,
    pub train: TrainConfig,
}

impl ModelConfig {
    pub fn spec(&self, inputs: usize, classes: usize) -> Result<MlpSpec> {
        let mut sizes = vec![inputs];
        sizes.extend(&self.hidden);
        sizes.push(classes);
        MlpSpec::new(sizes).map_err(|e| CliError::Config(e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VoteConfig {
    pub pool_size: usize,
    pub pool_p: f64,
    pub ensemble_sizes: Vec<usize>,
    pub draws: usize,
    pub rules: Vec<FusionRule>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CyclicConfig {
    pub schedule: ScheduleKind,
    pub epochs: usize,
    pub checkpoint_dir: Option<PathBuf>,
    pub outputs_dir: Option<PathBuf>,
}

impl CyclicConfig {
    pub fn schedule_spec(&self, iterations_per_epoch: usize) -> Result<ScheduleSpec> {
        ScheduleSpec::new(self.schedule, self.epochs, iterations_per_epoch).map_err(|e| CliError::Config(e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DistillGrid {
    pub teachers: Vec<usize>,
    pub p: Vec<f64>,
    pub alphas: Vec<f64>,
    pub variants: Vec<Variant>,
    pub student_iterations: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpatialConfig {
    pub voters: usize,
    pub candidates: usize,
    pub trials: usize,
    pub rules: Vec<Rule>,
}

/// Where and how the report is written; excluded from the config hash.
#[derive(Clone, Debug, PartialEq)]
pub struct OutputConfig {
    pub path: Option<PathBuf>,
    pub format: Format,
    pub workers: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub data: DataSpec,
    pub model: ModelConfig,
    pub vote: VoteConfig,
    pub cyclic: CyclicConfig,
    pub distill: DistillGrid,
    pub spatial: SpatialConfig,
    pub seeds: Vec<u64>,
    pub output: OutputConfig,
}

struct Entries {
    values: BTreeMap<String, (usize, String)>,
}

impl Entries {
    fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected `key = value`", n + 1)))?;
            let key = key.trim().to_string();
            if key.is_empty() {
                return Err(CliError::Config(format!("line {}: empty key", n + 1)));
            }
            if values.insert(key.clone(), (n + 1, value.trim().to_string())).is_some() {
                return Err(CliError::Config(format!("line {}: `{key}` set twice", n + 1)));
            }
        }
        Ok(Self { values })
    }

    fn raw(&mut self, key: &str) -> Option<(usize, String)> {
        self.values.remove(key)
    }

    fn get<T: FromStr>(&mut self, key: &str, default: T) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        match self.raw(key) {
            None => Ok(default),
            Some((line, v)) => v
                .parse()
                .map_err(|e| CliError::Config(format!("line {line}: `{key} = {v}`: {e}"))),
        }
    }

    fn list<T: FromStr>(&mut self, key: &str, default: Vec<T>) -> Result<Vec<T>>
    where
        T::Err: fmt::Display,
    {
        match self.raw(key) {
            None => Ok(default),
            Some((line, v)) => v
                .split(',')
                .map(|item| {
                    item.trim()
                        .parse()
                        .map_err(|e| CliError::Config(format!("line {line}: `{key}` item `{}`: {e}", item.trim())))
                })
                .collect(),
        }
    }

    fn path(&mut self, key: &str) -> Option<PathBuf> {
        self.raw(key).map(|(_, v)| PathBuf::from(v))
    }

    fn finish(self) -> Result<()> {
        match self.values.iter().next() {
            Some((key, (line, _))) => Err(CliError::Config(format!("line {line}: unknown key `{key}`"))),
            None => Ok(()),
        }
    }
}

fn all_fusion_rules() -> Vec<FusionRule> {
    Rule::ALL.iter().map(|&r| FusionRule::Vote(r)).chain([FusionRule::Softmax]).collect()
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(CliError::Config(msg()))
    }
}

impl ExperimentConfig {
    /// Defaults for `kind`.
    pub fn defaults(kind: ExperimentKind) -> Self {
        Self::parse("", kind).expect("defaults are valid")
    }

    /// Parse `text`; `fallback` is used when the file has no `experiment` key.
    pub fn parse(text: &str, fallback: ExperimentKind) -> Result<Self> {
        let mut e = Entries::parse(text)?;
        let kind = e.get("experiment", fallback)?;
        let seeds = e.list("seeds", vec![0u64])?;

        let data = match e.get("data", "mnist".to_string())?.as_str() {
            "mnist" => DataSpec::Mnist {
                dir: e.path("mnist_dir").unwrap_or_else(|| PathBuf::from("data/mnist")),
                train_limit: e.get("train_limit", 0)?,
                test_limit: e.get("test_limit", 0)?,
            },
            "blobs" => DataSpec::Blobs {
                train_per_class: e.get("blobs_train_per_class", 200)?,
                test_per_class: e.get("blobs_test_per_class", 100)?,
                classes: e.get("blobs_classes", 2)?,
                dims: e.get("blobs_dims", 2)?,
                spread: e.get("blobs_spread", 0.1)?,
                seed: e.get("blobs_seed", 0)?,
            },
            other => return Err(CliError::Config(format!("unknown data source `{other}`"))),
        };

        let defaults = AdamConfig::default();
        let adam = AdamConfig {
            learning_rate: e.get("learning_rate", defaults.learning_rate)?,
            beta1: e.get("beta1", defaults.beta1)?,
            beta2: e.get("beta2", defaults.beta2)?,
            epsilon: e.get("epsilon", defaults.epsilon)?,
        };
        let iterations = e.get("iterations", 100)?;
        let model = ModelConfig {
            hidden: e.list("hidden", vec![50, 50])?,
            train: TrainConfig {
                adam,
                batch_size: e.get("batch_size", 100)?,
                iterations,
            },
        };

        let vote = VoteConfig {
            pool_size: e.get("pool_size", 200)?,
            pool_p: e.get("pool_p", 1.0)?,
            ensemble_sizes: e.list("ensemble_sizes", vec![1, 5, 15, 25, 55])?,
            draws: e.get("draws", 50)?,
            rules: e.list("rules", all_fusion_rules())?,
        };

        let schedule = match e.get("schedule", "snapshot".to_string())?.as_str() {
            "constant" => ScheduleKind::Constant {
                rate: e.get("constant_rate", adam.learning_rate)?,
            },
            "snapshot" => ScheduleKind::SnapshotCosine {
                alpha0: e.get("alpha0", 0.01)?,
                cycles: e.get("cycles", 6)?,
            },
            "fge" => ScheduleKind::Fge {
                pretrain_fraction: e.get("fge_pretrain_fraction", FGE_PRETRAIN_FRACTION)?,
                alpha1: e.get("fge_alpha1", 0.01)?,
                alpha2: e.get("fge_alpha2", 0.0005)?,
                cycle_epochs: e.get("fge_cycle_epochs", 2)?,
            },
            other => return Err(CliError::Config(format!("unknown schedule `{other}`"))),
        };
        let cyclic = CyclicConfig {
            schedule,
            epochs: e.get("epochs", 30)?,
            checkpoint_dir: e.path("checkpoint_dir"),
            outputs_dir: e.path("outputs_dir"),
        };

        let distill = DistillGrid {
            teachers: e.list("teachers", vec![3])?,
            p: e.list("p", vec![1.0])?,
            alphas: e.list("alphas", vec![0.25, 0.5])?,
            variants: e.list("variants", Variant::ALL.to_vec())?,
            student_iterations: e.get("student_iterations", iterations)?,
        };

        let spatial = SpatialConfig {
            voters: e.get("voters", 100)?,
            candidates: e.get("candidates", 5)?,
            trials: e.get("trials", 10_000)?,
            rules: e.list("spatial_rules", Rule::ALL.to_vec())?,
        };

        let output = OutputConfig {
            path: e.path("out"),
            format: e.get("format", Format::Csv)?,
            workers: e.get("workers", 1)?,
        };
        e.finish()?;

        let config = Self {
            kind,
            data,
            model,
            vote,
            cyclic,
            distill,
            spatial,
            seeds,
            output,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &Path, fallback: ExperimentKind) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text, fallback)
    }

    /// Checks every sub-configuration against the invariants of the type it builds.
    pub fn validate(&self) -> Result<()> {
        let cfg = |e: efkd_core::Error| CliError::Config(e.to_string());
        check(!self.seeds.is_empty(), || "seed list is empty".into())?;
        check(self.output.workers >= 1, || "workers must be >= 1".into())?;
        if let DataSpec::Blobs { classes, dims, spread, .. } = self.data {
            check(classes >= 2 && dims >= 1 && spread >= 0.0, || "blobs need >= 2 classes, >= 1 dim, spread >= 0".into())?;
        }
        self.model.spec(1, 2)?;
        self.model.train.validate().map_err(cfg)?;
        check(self.model.train.iterations >= 1, || "iterations must be >= 1".into())?;

        let v = &self.vote;
        check(!v.ensemble_sizes.is_empty() && !v.rules.is_empty(), || "vote needs sizes and rules".into())?;
        check(v.ensemble_sizes.iter().all(|&n| n >= 1 && n <= v.pool_size), || {
            format!("ensemble sizes {:?} must lie in 1..={}", v.ensemble_sizes, v.pool_size)
        })?;
        check(v.draws >= 1, || "draws must be >= 1".into())?;
        SubsetSpec::new(v.pool_p, 0).map_err(cfg)?;

        self.cyclic.schedule_spec(1)?;

        let d = &self.distill;
        check(!d.teachers.is_empty() && !d.p.is_empty() && !d.alphas.is_empty() && !d.variants.is_empty(), || {
            "distillation grid has an empty axis".into()
        })?;
        check(d.student_iterations >= 1, || "student_iterations must be >= 1".into())?;
        for &p in &d.p {
            SubsetSpec::new(p, 0).map_err(cfg)?;
        }
        for &n in &d.teachers {
            for &a in &d.alphas {
                for &var in &d.variants {
                    DistillConfig::new(var, a, n).map_err(cfg)?;
                }
            }
        }

        let s = &self.spatial;
        check(s.voters >= 1 && s.candidates >= 2 && s.trials >= 1 && !s.rules.is_empty(), || {
            "spatial runs need voters >= 1, candidates >= 2, trials >= 1 and a rule".into()
        })
    }

    /// Restrict to a single seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seeds = vec![seed];
        self
    }

    /// Short SHA-256 digest of everything that affects report rows.
    pub fn hash(&self) -> String {
        let canonical = format!(
            "{:?}|{:?}|{:?}|{:?}|{:?}|{:?}|{:?}|{:?}",
            self.kind, self.data, self.model, self.vote, self.cyclic, self.distill, self.spatial, self.seeds
        );
        Sha256::digest(canonical.as_bytes())[..8]
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}
