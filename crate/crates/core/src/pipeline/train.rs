use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{SEED_BATCHES, SEED_INIT};
use super::{PipelineError, RunConfig};
use crate::data::{epoch_batches, Unlabeled};
use crate::losses::{nt_xent, sinkhorn_loss_with, sinsim_loss, PairedRepresentations, RegularizeOn};
use crate::model::{add_grads, adam_step, backward, forward, init_params, ModelParams};
use crate::numerics::{derive_seed, Matrix, Rng};

pub const METRICS_HEADER: &str = "step,epoch,nt_xent,sinkhorn,total,marginal_err";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub epoch: u64,
    pub nt_xent: f64,
    pub sinkhorn: f64,
    pub total: f64,
    pub marginal_err: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsLog {
    pub steps: Vec<StepRecord>,
}

impl MetricsLog {
    /// CSV text. Floats use the shortest representation that round-trips.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(METRICS_HEADER);
        out.push('\n');
        for r in &self.steps {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.step, r.epoch, r.nt_xent, r.sinkhorn, r.total, r.marginal_err
            )
            .expect("write to string");
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), PipelineError> {
        std::fs::write(path, self.to_csv()).map_err(|e| PipelineError::io(path, e))
    }

    pub fn last(&self) -> Option<&StepRecord> {
        self.steps.last()
    }

    /// Mean total loss per epoch, in epoch order.
    pub fn epoch_mean_totals(&self) -> Vec<f64> {
        let mut out: Vec<(f64, usize)> = Vec::new();
        for r in &self.steps {
            let e = r.epoch as usize;
            if out.len() <= e {
                out.resize(e + 1, (0.0, 0));
            }
            out[e].0 += r.total;
            out[e].1 += 1;
        }
        out.into_iter().map(|(s, n)| s / n.max(1) as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub log: MetricsLog,
}

/// What one objective hands back to the shared loop.
struct StepLoss {
    nt_xent: f64,
    sinkhorn: f64,
    total: f64,
    marginal_err: f64,
    grad_h1: Matrix,
    grad_h2: Matrix,
    grad_z1: Matrix,
    grad_z2: Matrix,
}

/// Initial parameters for a config and input dimension.
pub fn initial_params(config: &RunConfig, input_dim: usize) -> Result<ModelParams, PipelineError> {
    let mut rng = Rng::new(derive_seed(config.seed, &[SEED_INIT]));
    Ok(init_params(&config.encoder_spec(input_dim), &config.head_spec(), &mut rng)?)
}

fn run_loop(
    config: &RunConfig,
    data: Unlabeled<'_>,
    objective: impl Fn(&PairedRepresentations) -> Result<StepLoss, PipelineError>,
) -> Result<TrainOutcome, PipelineError> {
    config.validate()?;
    let mut params = initial_params(config, data.dim())?;
    let spec = config.augment_spec();
    let adam = config.adam();
    let batch_seed = derive_seed(config.seed, &[SEED_BATCHES]);
    let mut log = MetricsLog::default();
    let mut step = 0u64;
    for epoch in 0..config.epochs as u64 {
        for batch in epoch_batches(data, config.batch_size, &spec, batch_seed, epoch)? {
            let f1 = forward(&params, &batch.x1)?;
            let f2 = forward(&params, &batch.x2)?;
            let reps = PairedRepresentations {
                h1: f1.h,
                h2: f2.h,
                z1: f1.z,
                z2: f2.z,
            };
            if ![&reps.h1, &reps.h2, &reps.z1, &reps.z2].iter().all(|m| m.all_finite()) {
                return Err(PipelineError::NonFinite {
                    step,
                    term: "representation".into(),
                });
            }
            let loss = objective(&reps)?;
            for (term, v) in [
                ("nt_xent", loss.nt_xent),
                ("sinkhorn", loss.sinkhorn),
                ("total", loss.total),
                ("marginal_err", loss.marginal_err),
            ] {
                if !v.is_finite() {
                    return Err(PipelineError::NonFinite {
                        step,
                        term: term.to_string(),
                    });
                }
            }
            let g1 = backward(&params, &f1.trace, &loss.grad_h1, &loss.grad_z1)?;
            let g2 = backward(&params, &f2.trace, &loss.grad_h2, &loss.grad_z2)?;
            let grads = add_grads(&g1, &g2)?;
            if !grads.all_finite() {
                return Err(PipelineError::NonFinite {
                    step,
                    term: "gradient".into(),
                });
            }
            adam_step(&mut params, &grads, &adam)?;
            log.steps.push(StepRecord {
                step,
                epoch,
                nt_xent: loss.nt_xent,
                sinkhorn: loss.sinkhorn,
                total: loss.total,
                marginal_err: loss.marginal_err,
            });
            step += 1;
        }
    }
    Ok(TrainOutcome { params, log })
}

/// Contrastive pretraining with the transport regularizer: per batch, forward
/// both views, evaluate `nt_xent + β·W_λ`, backpropagate and take one Adam
/// step.
///
/// With `regularize_on = h` the transport gradient enters at the encoder
/// output; with `z` it is added at the head output and flows through the head.
/// Only the unlabeled samples are visible here.
pub fn pretrain(config: &RunConfig, data: Unlabeled<'_>) -> Result<TrainOutcome, PipelineError> {
    let ntx = config.nt_xent();
    run_loop(config, data, |reps| {
        let l = sinsim_loss(reps, config.beta, &ntx, &config.sinkhorn, config.regularize_on, config.transport_cost)?;
        let g = l.total;
        Ok(StepLoss {
            nt_xent: l.nt_xent,
            sinkhorn: l.sinkhorn,
            total: g.value,
            marginal_err: l.marginal_err,
            grad_h1: g.grad_h1.expect("sinsim fills grads"),
            grad_h2: g.grad_h2.expect("sinsim fills grads"),
            grad_z1: g.grad_z1.expect("sinsim fills grads"),
            grad_z2: g.grad_z2.expect("sinsim fills grads"),
        })
    })
}

/// Plain contrastive pretraining. `beta` is ignored. The transport term is
/// still evaluated for the log, but nothing is differentiated through it.
pub fn pretrain_simclr(config: &RunConfig, data: Unlabeled<'_>) -> Result<TrainOutcome, PipelineError> {
    let ntx = config.nt_xent();
    run_loop(config, data, |reps| {
        let c = nt_xent(&reps.z1, &reps.z2, &ntx)?;
        let (a, b) = match config.regularize_on {
            RegularizeOn::H => (&reps.h1, &reps.h2),
            RegularizeOn::Z => (&reps.z1, &reps.z2),
        };
        let diag = sinkhorn_loss_with(a, b, &config.sinkhorn, config.transport_cost)?;
        let (r, d) = reps.h1.shape();
        Ok(StepLoss {
            nt_xent: c.value,
            sinkhorn: diag.loss.value,
            total: c.value,
            marginal_err: diag.marginal_err,
            grad_h1: Matrix::zeros(r, d),
            grad_h2: Matrix::zeros(r, d),
            grad_z1: c.grad_z1.expect("nt_xent fills grads"),
            grad_z2: c.grad_z2.expect("nt_xent fills grads"),
        })
    })
}
