use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{PipelineError, ProbeSettings};
use crate::data::{load_idx, make_blobs, AugmentKind, AugmentSpec, Dataset};
use crate::losses::{NtXentSettings, RegularizeOn, TransportCost};
use crate::model::{Activation, AdamSettings, MlpSpec};
use crate::numerics::{derive_seed, Rng};
use crate::ot::SinkhornSettings;

/// Environment variable that overrides the MNIST subset location.
pub const MNIST_DIR_ENV: &str = "SINSIM_MNIST_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    /// Gaussian blobs; train and test draws use separate seeds.
    Blobs {
        n_per_class: usize,
        test_per_class: usize,
        num_classes: usize,
        dim: usize,
        separation: f64,
    },
    /// Any IDX image/label pair.
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
    },
    /// The shipped 2k/1k MNIST subset. Without `dir`, `$SINSIM_MNIST_DIR` or
    /// `data/mnist-subset` is used.
    MnistSubset {
        #[serde(default)]
        dir: Option<PathBuf>,
    },
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig::Blobs {
            n_per_class: 500,
            test_per_class: 250,
            num_classes: 4,
            dim: 16,
            separation: 4.0,
        }
    }
}

impl DatasetConfig {
    pub fn is_image(&self) -> bool {
        !matches!(self, DatasetConfig::Blobs { .. })
    }

    pub fn mnist_dir(dir: &Option<PathBuf>) -> PathBuf {
        dir.clone()
            .or_else(|| std::env::var_os(MNIST_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("data/mnist-subset"))
    }

    /// `(train, test)`. Blob draws depend on `seed`; file datasets do not.
    pub fn load(&self, seed: u64) -> Result<(Dataset, Dataset), PipelineError> {
        match self {
            DatasetConfig::Blobs {
                n_per_class,
                test_per_class,
                num_classes,
                dim,
                separation,
            } => {
                let data_seed = derive_seed(seed, &[SEED_DATA]);
                let train = make_blobs(*n_per_class, *num_classes, *dim, *separation, &mut Rng::derived(data_seed, &[0]))?;
                let test = make_blobs(*test_per_class, *num_classes, *dim, *separation, &mut Rng::derived(data_seed, &[1]))?;
                Ok((train, test))
            }
            DatasetConfig::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
            } => Ok((load_idx(train_images, train_labels)?, load_idx(test_images, test_labels)?)),
            DatasetConfig::MnistSubset { dir } => {
                let dir = Self::mnist_dir(dir);
                let p = |name: &str| dir.join(name);
                Ok((
                    load_idx(&p("train-images-idx3-ubyte"), &p("train-labels-idx1-ubyte"))?,
                    load_idx(&p("test-images-idx3-ubyte"), &p("test-labels-idx1-ubyte"))?,
                ))
            }
        }
    }
}

pub(crate) const SEED_DATA: u64 = 1;
pub(crate) const SEED_INIT: u64 = 2;
pub(crate) const SEED_BATCHES: u64 = 3;
pub(crate) const SEED_PROBE: u64 = 4;

fn default_encoder_widths() -> Vec<usize> {
    vec![256, 128]
}

fn default_head_widths() -> Vec<usize> {
    vec![64, 32]
}

/// Every setting of one pretraining run.
///
/// Encoder and head widths exclude their input: the encoder input is the data
/// dimension and the head input is the encoder output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    /// Defaults to the image or vector chain by dataset kind.
    pub augment: Option<AugmentSpec>,
    pub encoder_widths: Vec<usize>,
    pub head_widths: Vec<usize>,
    pub activation: Activation,
    pub temperature: f64,
    pub beta: f64,
    pub sinkhorn: SinkhornSettings,
    pub regularize_on: RegularizeOn,
    pub transport_cost: TransportCost,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub probe: ProbeSettings,
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: DatasetConfig::default(),
            augment: None,
            encoder_widths: default_encoder_widths(),
            head_widths: default_head_widths(),
            activation: Activation::Relu,
            temperature: 0.5,
            beta: 0.8,
            sinkhorn: SinkhornSettings::default(),
            regularize_on: RegularizeOn::H,
            transport_cost: TransportCost::Normalized,
            epochs: 10,
            batch_size: 64,
            lr: 1e-3,
            weight_decay: 1e-6,
            seed: 0,
            probe: ProbeSettings::default(),
            output_dir: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        let c: RunConfig = serde_json::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn from_file(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            PipelineError::Config(m) => PipelineError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn augment_spec(&self) -> AugmentSpec {
        self.augment.unwrap_or_else(|| {
            if self.dataset.is_image() {
                AugmentSpec::image()
            } else {
                AugmentSpec::vector()
            }
        })
    }

    pub fn nt_xent(&self) -> NtXentSettings {
        NtXentSettings {
            temperature: self.temperature,
        }
    }

    pub fn adam(&self) -> AdamSettings {
        AdamSettings {
            lr: self.lr,
            weight_decay: self.weight_decay,
            ..AdamSettings::default()
        }
    }

    pub fn encoder_spec(&self, input_dim: usize) -> MlpSpec {
        let mut w = vec![input_dim];
        w.extend(&self.encoder_widths);
        MlpSpec::new(w, self.activation)
    }

    pub fn head_spec(&self) -> MlpSpec {
        let mut w = vec![*self.encoder_widths.last().unwrap_or(&0)];
        w.extend(&self.head_widths);
        MlpSpec::new(w, self.activation)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.encoder_widths.is_empty() || self.head_widths.is_empty() {
            return bad("encoder_widths and head_widths need at least one layer".into());
        }
        if self.encoder_widths.contains(&0) || self.head_widths.contains(&0) {
            return bad("layer widths must be at least 1".into());
        }
        if self.batch_size < 2 {
            return bad(format!("batch_size must be at least 2, got {}", self.batch_size));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad(format!("beta must be finite and >= 0, got {}", self.beta));
        }
        self.nt_xent().validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        self.sinkhorn.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        self.adam().validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        self.augment_spec().validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        self.probe.validate()?;
        if let (Some(a), true) = (&self.augment, self.dataset.is_image()) {
            if a.kind != AugmentKind::Image {
                return bad("image datasets need an image augmentation".into());
            }
        }
        if let DatasetConfig::Blobs {
            n_per_class,
            test_per_class,
            num_classes,
            dim,
            separation,
        } = &self.dataset
        {
            if *n_per_class == 0 || *test_per_class == 0 || *num_classes == 0 || *dim == 0 {
                return bad("blob counts must be at least 1".into());
            }
            if !(*separation > 0.0 && separation.is_finite()) {
                return bad(format!("separation must be positive, got {separation}"));
            }
        }
        Ok(())
    }
}
