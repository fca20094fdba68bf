//! Pretraining, probe evaluation, sweeps and artifact export.

mod config;
mod probe;
mod sweep;
mod train;

pub use config::{DatasetConfig, RunConfig, MNIST_DIR_ENV};
pub use probe::{fit_probe, probe, FittedProbe, ProbeKind, ProbeSettings, Standardizer};
pub use sweep::{sweep, SweepAxis, SweepOptions, SweepReport, SweepRow, SWEEP_HEADER};
pub use train::{initial_params, pretrain, pretrain_simclr, MetricsLog, StepRecord, TrainOutcome, METRICS_HEADER};

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::data::{DataError, Dataset};
use crate::losses::LossError;
use crate::model::{save_checkpoint, Checkpoint, ModelError, ModelParams};
use crate::numerics::derive_seed;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("non-finite {term} at step {step}")]
    NonFinite { step: u64, term: String },
    #[error("domain: {0}")]
    Domain(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl PipelineError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        PipelineError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Result of [`run_experiment`].
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRun {
    pub params: ModelParams,
    pub log: MetricsLog,
    pub accuracy: f64,
}

/// Probe seed used by [`run_experiment`].
pub fn probe_seed(config: &RunConfig) -> u64 {
    derive_seed(config.seed, &[config::SEED_PROBE])
}

/// Loads data, pretrains and probes the frozen encoder on the test split.
/// `simclr` selects the plain contrastive path.
pub fn run_experiment(config: &RunConfig, simclr: bool) -> Result<ExperimentRun, PipelineError> {
    config.validate()?;
    let (train, test) = config.dataset.load(config.seed)?;
    let out = if simclr {
        pretrain_simclr(config, train.unlabeled())?
    } else {
        pretrain(config, train.unlabeled())?
    };
    let accuracy = probe(&out.params, &train, &test, &config.probe, probe_seed(config))?;
    Ok(ExperimentRun {
        params: out.params,
        log: out.log,
        accuracy,
    })
}

/// Writes `metrics.csv`, `checkpoint.json` and `config.json` into `dir`.
/// The stored config omits `output_dir`, so the bytes do not depend on where
/// they are written.
pub fn write_run_artifacts(dir: &Path, config: &RunConfig, out: &TrainOutcome) -> Result<(), PipelineError> {
    std::fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
    let config = &RunConfig {
        output_dir: None,
        ..config.clone()
    };
    out.log.write_csv(&dir.join("metrics.csv"))?;
    let meta = serde_json::to_value(config).expect("config serializes");
    save_checkpoint(&dir.join("checkpoint.json"), &Checkpoint::new(out.params.clone(), meta))?;
    let cfg = dir.join("config.json");
    std::fs::write(&cfg, config.to_json()).map_err(|e| PipelineError::io(&cfg, e))
}

/// CSV of encoder outputs, columns `h_0,…,h_{d−1},label`, one row per sample.
pub fn export_embeddings(params: &ModelParams, dataset: &Dataset, path: &Path) -> Result<(), PipelineError> {
    let h = params.encode(dataset.samples())?;
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (0..h.cols()).map(|k| format!("h_{k}")).collect();
    header.push("label".into());
    w.write_record(&header)?;
    for (row, label) in h.iter_rows().zip(dataset.labels()) {
        let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        rec.push(label.to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| PipelineError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_blobs;
    use crate::model::load_checkpoint;
    use crate::numerics::Rng;

    fn tiny() -> RunConfig {
        RunConfig {
            dataset: DatasetConfig::Blobs {
                n_per_class: 16,
                test_per_class: 8,
                num_classes: 2,
                dim: 4,
                separation: 6.0,
            },
            encoder_widths: vec![8, 5],
            head_widths: vec![4],
            epochs: 1,
            batch_size: 8,
            ..RunConfig::default()
        }
    }

    #[test]
    fn export_writes_header_and_rows() {
        let c = tiny();
        let p = initial_params(&c, 4).unwrap();
        let d = make_blobs(1, 3, 4, 1.0, &mut Rng::new(0)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.csv");
        export_embeddings(&p, &d, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "h_0,h_1,h_2,h_3,h_4,label");
        assert!(lines[1..].iter().all(|l| l.split(',').count() == 6));
        let again = dir.path().join("emb2.csv");
        export_embeddings(&p, &d, &again).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());
    }

    #[test]
    fn export_surfaces_io_errors() {
        let c = tiny();
        let p = initial_params(&c, 4).unwrap();
        let d = make_blobs(1, 1, 4, 1.0, &mut Rng::new(0)).unwrap();
        let r = export_embeddings(&p, &d, Path::new("/nonexistent-dir/emb.csv"));
        assert!(r.is_err());
    }

    #[test]
    fn experiment_replays_and_ignores_label_permutations() {
        let c = tiny();
        let a = run_experiment(&c, false).unwrap();
        let b = run_experiment(&c, false).unwrap();
        assert_eq!(a, b);
        assert!((0.0..=1.0).contains(&a.accuracy));

        let (train, _) = c.dataset.load(c.seed).unwrap();
        let mut labels = train.labels().to_vec();
        Rng::new(5).shuffle(&mut labels);
        let relabeled = train.with_labels(labels).unwrap();
        let x = pretrain(&c, train.unlabeled()).unwrap();
        let y = pretrain(&c, relabeled.unlabeled()).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn artifacts_round_trip() {
        let c = tiny();
        let (train, _) = c.dataset.load(c.seed).unwrap();
        let out = pretrain(&c, train.unlabeled()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let located = RunConfig {
            output_dir: Some(dir.path().to_path_buf()),
            ..c.clone()
        };
        write_run_artifacts(dir.path(), &located, &out).unwrap();
        let ck = load_checkpoint(&dir.path().join("checkpoint.json")).unwrap();
        assert_eq!(ck.params, out.params);
        let back = RunConfig::from_file(&dir.path().join("config.json")).unwrap();
        assert_eq!(back, c);
        let csv = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
        assert_eq!(csv, out.log.to_csv());
    }
}
