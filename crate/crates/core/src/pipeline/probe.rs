use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::data::Dataset;
use crate::model::{Activation, Mlp, MlpSpec, ModelParams};
use crate::numerics::{Matrix, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeKind {
    #[default]
    Linear,
    Mlp,
}

/// Fixed-budget full-batch gradient descent on softmax cross-entropy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeSettings {
    pub kind: ProbeKind,
    pub steps: usize,
    pub lr: f64,
    /// Hidden width of the two-layer probe.
    pub hidden: usize,
}

impl Default for ProbeSettings {
    fn default() -> Self {
        ProbeSettings {
            kind: ProbeKind::Linear,
            steps: 500,
            lr: 0.1,
            hidden: 128,
        }
    }
}

impl ProbeSettings {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if !(self.lr > 0.0 && self.lr.is_finite()) || self.steps == 0 || self.hidden == 0 {
            return Err(PipelineError::Config(format!("invalid probe settings {self:?}")));
        }
        Ok(())
    }
}

/// Per-column mean and standard deviation from the training features.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    /// Constant columns keep scale 1.
    pub fn fit(x: &Matrix) -> Self {
        let n = x.rows().max(1) as f64;
        let mean: Vec<f64> = x.col_sums().iter().map(|s| s / n).collect();
        let mut var = vec![0.0; x.cols()];
        for row in x.iter_rows() {
            for ((v, m), a) in var.iter_mut().zip(&mean).zip(row) {
                *v += (a - m) * (a - m) / n;
            }
        }
        let scale = var.iter().map(|&v| if v > 1e-24 { v.sqrt() } else { 1.0 }).collect();
        Standardizer { mean, scale }
    }

    pub fn apply(&self, x: &Matrix) -> Matrix {
        Matrix::from_fn(x.rows(), x.cols(), |i, k| (x[(i, k)] - self.mean[k]) / self.scale[k])
    }
}

fn softmax_ce_grad(logits: &Matrix, labels: &[usize]) -> Matrix {
    let n = logits.rows() as f64;
    let mut g = logits.clone();
    for (i, &y) in labels.iter().enumerate() {
        let row = g.row_mut(i);
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            z += *v;
        }
        for v in row.iter_mut() {
            *v /= z * n;
        }
        row[y] -= 1.0 / n;
    }
    g
}

/// Trained classifier on standardized features.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedProbe {
    pub standardizer: Standardizer,
    pub net: Mlp,
}

impl FittedProbe {
    pub fn predict(&self, features: &Matrix) -> Result<Vec<usize>, PipelineError> {
        Ok(self.net.apply(&self.standardizer.apply(features))?.argmax_rows())
    }

    pub fn accuracy(&self, features: &Matrix, labels: &[usize]) -> Result<f64, PipelineError> {
        let pred = self.predict(features)?;
        let hits = pred.iter().zip(labels).filter(|(p, l)| p == l).count();
        Ok(hits as f64 / labels.len().max(1) as f64)
    }
}

/// Fits a probe on raw feature rows. The linear probe starts from zero; the
/// two-layer probe starts from `seed`.
pub fn fit_probe(
    features: &Matrix,
    labels: &[usize],
    num_classes: usize,
    settings: &ProbeSettings,
    seed: u64,
) -> Result<FittedProbe, PipelineError> {
    settings.validate()?;
    let mut counts = vec![0usize; num_classes];
    for &l in labels {
        if l >= num_classes {
            return Err(PipelineError::Domain(format!("label {l} outside {num_classes} classes")));
        }
        counts[l] += 1;
    }
    if let Some(c) = counts.iter().position(|&c| c == 0) {
        return Err(PipelineError::Domain(format!("class {c} is absent from the training set")));
    }
    let standardizer = Standardizer::fit(features);
    let x = standardizer.apply(features);
    let mut net = match settings.kind {
        ProbeKind::Linear => {
            let spec = MlpSpec::new(vec![x.cols(), num_classes], Activation::Relu);
            let mut net = Mlp::init(&spec, &mut Rng::new(seed))?;
            net.layers[0].w = Matrix::zeros(x.cols(), num_classes);
            net
        }
        ProbeKind::Mlp => {
            let spec = MlpSpec::new(vec![x.cols(), settings.hidden, num_classes], Activation::Relu);
            Mlp::init(&spec, &mut Rng::new(seed))?
        }
    };
    for _ in 0..settings.steps {
        let (logits, trace) = net.forward(&x)?;
        let g = softmax_ce_grad(&logits, labels);
        let (grads, _) = net.backward(&trace, &g)?;
        for (layer, grad) in net.layers.iter_mut().zip(&grads) {
            for (w, d) in layer.w.as_mut_slice().iter_mut().zip(grad.w.as_slice()) {
                *w -= settings.lr * d;
            }
            for (b, d) in layer.b.iter_mut().zip(&grad.b) {
                *b -= settings.lr * d;
            }
        }
    }
    Ok(FittedProbe { standardizer, net })
}

/// Frozen-encoder evaluation: encode both splits (no augmentation), fit on
/// train, report test accuracy.
pub fn probe(
    params: &ModelParams,
    train: &Dataset,
    test: &Dataset,
    settings: &ProbeSettings,
    seed: u64,
) -> Result<f64, PipelineError> {
    let num_classes = train.num_classes().max(test.num_classes());
    let ftrain = params.encode(train.samples())?;
    let ftest = params.encode(test.samples())?;
    let fitted = fit_probe(&ftrain, train.labels(), num_classes, settings, seed)?;
    fitted.accuracy(&ftest, test.labels())
}
