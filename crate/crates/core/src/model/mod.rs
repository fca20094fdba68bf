//! Encoder `f_θ` and projection head `g_φ` as plain MLPs with hand-written
//! backward passes.
//!
//! Inputs are row batches. Each layer computes `a·W + b` with `W` stored as
//! `fan_in × fan_out`, and every layer but the last applies the activation.
//! The encoder's last layer is therefore linear, so `h` is unbounded.

mod adam;
mod checkpoint;

pub use adam::{adam_step, AdamSettings};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{Matrix, NumericsError, Rng};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid spec: {0}")]
    Spec(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative from the pre-activation. ReLU uses 0 at the kink.
    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = pre.tanh();
                1.0 - t * t
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpSpec {
    pub layer_widths: Vec<usize>,
    pub activation: Activation,
}

impl MlpSpec {
    pub fn new(layer_widths: Vec<usize>, activation: Activation) -> Self {
        MlpSpec {
            layer_widths,
            activation,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.layer_widths.len() < 2 {
            return Err(ModelError::Spec(format!(
                "need at least input and output widths, got {:?}",
                self.layer_widths
            )));
        }
        if self.layer_widths.contains(&0) {
            return Err(ModelError::Spec(format!("zero width in {:?}", self.layer_widths)));
        }
        Ok(())
    }

    pub fn input_width(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.layer_widths.last().expect("validated spec is nonempty")
    }

    /// Default encoder `[input, 256, 128]`.
    pub fn default_encoder(input: usize) -> Self {
        MlpSpec::new(vec![input, 256, 128], Activation::Relu)
    }

    /// Default head `[128, 64, 32]`.
    pub fn default_head() -> Self {
        MlpSpec::new(vec![128, 64, 32], Activation::Relu)
    }
}

/// One affine layer. Also used for gradients and Adam moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Layer {
    /// `fan_in × fan_out`.
    pub w: Matrix,
    pub b: Vec<f64>,
}

impl Layer {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Layer {
            w: Matrix::zeros(fan_in, fan_out),
            b: vec![0.0; fan_out],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mlp {
    pub spec: MlpSpec,
    pub layers: Vec<Layer>,
}

impl Mlp {
    /// Uniform init on `±limit`: He (`√(6/fan_in)`) for ReLU, Glorot
    /// (`√(6/(fan_in+fan_out))`) for tanh. Biases start at zero.
    pub fn init(spec: &MlpSpec, rng: &mut Rng) -> Result<Self, ModelError> {
        spec.validate()?;
        let layers = spec
            .layer_widths
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = match spec.activation {
                    Activation::Relu => (6.0 / fan_in as f64).sqrt(),
                    Activation::Tanh => (6.0 / (fan_in + fan_out) as f64).sqrt(),
                };
                Layer {
                    w: Matrix::from_fn(fan_in, fan_out, |_, _| rng.uniform_range(-limit, limit)),
                    b: vec![0.0; fan_out],
                }
            })
            .collect();
        Ok(Mlp {
            spec: spec.clone(),
            layers,
        })
    }

    fn zeros_like(&self) -> Vec<Layer> {
        self.layers.iter().map(|l| Layer::zeros(l.w.rows(), l.w.cols())).collect()
    }

    /// Checks that layer shapes agree with the spec.
    pub fn check_shapes(&self) -> Result<(), ModelError> {
        self.spec.validate()?;
        let widths = &self.spec.layer_widths;
        if self.layers.len() != widths.len() - 1 {
            return Err(ModelError::Shape(format!(
                "{} layers for widths {widths:?}",
                self.layers.len()
            )));
        }
        for (k, (l, w)) in self.layers.iter().zip(widths.windows(2)).enumerate() {
            if l.w.shape() != (w[0], w[1]) || l.b.len() != w[1] {
                return Err(ModelError::Shape(format!(
                    "layer {k}: weight {:?}, bias {} for widths {w:?}",
                    l.w.shape(),
                    l.b.len()
                )));
            }
        }
        Ok(())
    }

    /// Output for a batch, without keeping a trace.
    pub fn apply(&self, x: &Matrix) -> Result<Matrix, ModelError> {
        Ok(self.forward(x)?.0)
    }

    pub(crate) fn forward(&self, x: &Matrix) -> Result<(Matrix, MlpTrace), ModelError> {
        if x.cols() != self.spec.input_width() {
            return Err(ModelError::Shape(format!(
                "input has {} columns, network expects {}",
                x.cols(),
                self.spec.input_width()
            )));
        }
        let last = self.layers.len() - 1;
        let mut trace = MlpTrace {
            inputs: Vec::with_capacity(self.layers.len()),
            pre: Vec::with_capacity(self.layers.len()),
        };
        let mut a = x.clone();
        for (k, layer) in self.layers.iter().enumerate() {
            let mut pre = a.matmul(&layer.w)?;
            for i in 0..pre.rows() {
                for (v, b) in pre.row_mut(i).iter_mut().zip(&layer.b) {
                    *v += b;
                }
            }
            let out = if k == last {
                pre.clone()
            } else {
                pre.map(|v| self.spec.activation.apply(v))
            };
            trace.inputs.push(a);
            trace.pre.push(pre);
            a = out;
        }
        Ok((a, trace))
    }

    /// Returns parameter gradients and the gradient with respect to the input.
    pub(crate) fn backward(&self, trace: &MlpTrace, grad_out: &Matrix) -> Result<(Vec<Layer>, Matrix), ModelError> {
        let last = self.layers.len() - 1;
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut upstream = grad_out.clone();
        for k in (0..self.layers.len()).rev() {
            let dpre = if k == last {
                upstream
            } else {
                let act = self.spec.activation;
                let deriv = trace.pre[k].map(|v| act.derivative(v));
                upstream.hadamard(&deriv)?
            };
            let dw = trace.inputs[k].t_matmul(&dpre)?;
            let db = dpre.col_sums();
            upstream = dpre.matmul_t(&self.layers[k].w)?;
            grads.push(Layer { w: dw, b: db });
        }
        grads.reverse();
        Ok((grads, upstream))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct MlpTrace {
    /// Input to each layer.
    inputs: Vec<Matrix>,
    /// `a·W + b` of each layer, before the activation.
    pre: Vec<Matrix>,
}

/// Cached intermediates from [`forward`], consumed by [`backward`].
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    encoder: MlpTrace,
    head: MlpTrace,
}

impl ForwardTrace {
    pub fn batch_size(&self) -> usize {
        self.encoder.inputs[0].rows()
    }
}

/// Gradients (or Adam moments) shaped like the parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamGrads {
    pub encoder: Vec<Layer>,
    pub head: Vec<Layer>,
}

impl ParamGrads {
    fn layers(&self) -> impl Iterator<Item = &Layer> {
        self.encoder.iter().chain(&self.head)
    }

    /// Every scalar in a fixed order: encoder then head, per layer `w` then `b`.
    pub fn flatten(&self) -> Vec<f64> {
        self.layers()
            .flat_map(|l| l.w.as_slice().iter().chain(&l.b).copied())
            .collect()
    }

    pub fn all_finite(&self) -> bool {
        self.layers().all(|l| l.w.all_finite() && l.b.iter().all(|v| v.is_finite()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub encoder: Mlp,
    pub head: Mlp,
    pub adam_m: ParamGrads,
    pub adam_v: ParamGrads,
    pub step_count: u64,
}

impl ModelParams {
    pub fn check_shapes(&self) -> Result<(), ModelError> {
        self.encoder.check_shapes()?;
        self.head.check_shapes()?;
        if self.encoder.spec.output_width() != self.head.spec.input_width() {
            return Err(ModelError::Spec(format!(
                "encoder output {} does not feed head input {}",
                self.encoder.spec.output_width(),
                self.head.spec.input_width()
            )));
        }
        let zero = ParamGrads {
            encoder: self.encoder.zeros_like(),
            head: self.head.zeros_like(),
        };
        for (name, moments) in [("adam_m", &self.adam_m), ("adam_v", &self.adam_v)] {
            let same = moments.encoder.len() == zero.encoder.len()
                && moments.head.len() == zero.head.len()
                && moments
                    .layers()
                    .zip(zero.layers())
                    .all(|(a, b)| a.w.shape() == b.w.shape() && a.b.len() == b.b.len());
            if !same {
                return Err(ModelError::Shape(format!("{name} does not match the parameter shapes")));
            }
        }
        Ok(())
    }

    pub fn zero_grads(&self) -> ParamGrads {
        ParamGrads {
            encoder: self.encoder.zeros_like(),
            head: self.head.zeros_like(),
        }
    }

    /// Parameters in [`ParamGrads::flatten`] order.
    pub fn flatten(&self) -> Vec<f64> {
        ParamGrads {
            encoder: self.encoder.layers.clone(),
            head: self.head.layers.clone(),
        }
        .flatten()
    }

    /// Encoder output `h` for a batch; the head is not evaluated.
    pub fn encode(&self, x: &Matrix) -> Result<Matrix, ModelError> {
        self.encoder.apply(x)
    }
}

/// Fresh parameters with zeroed Adam state.
pub fn init_params(encoder: &MlpSpec, head: &MlpSpec, rng: &mut Rng) -> Result<ModelParams, ModelError> {
    encoder.validate()?;
    head.validate()?;
    if encoder.output_width() != head.input_width() {
        return Err(ModelError::Spec(format!(
            "encoder output {} does not feed head input {}",
            encoder.output_width(),
            head.input_width()
        )));
    }
    let encoder = Mlp::init(encoder, rng)?;
    let head = Mlp::init(head, rng)?;
    let zero = ParamGrads {
        encoder: encoder.zeros_like(),
        head: head.zeros_like(),
    };
    Ok(ModelParams {
        encoder,
        head,
        adam_m: zero.clone(),
        adam_v: zero,
        step_count: 0,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub h: Matrix,
    pub z: Matrix,
    pub trace: ForwardTrace,
}

/// `h = f_θ(x)`, `z = g_φ(h)`.
pub fn forward(params: &ModelParams, x: &Matrix) -> Result<Forward, ModelError> {
    let (h, encoder) = params.encoder.forward(x)?;
    let (z, head) = params.head.forward(&h)?;
    Ok(Forward {
        h,
        z,
        trace: ForwardTrace { encoder, head },
    })
}

/// Reverse pass. `grad_h` is a direct gradient on the encoder output and is
/// added to whatever flows back from `grad_z` through the head.
pub fn backward(
    params: &ModelParams,
    trace: &ForwardTrace,
    grad_h: &Matrix,
    grad_z: &Matrix,
) -> Result<ParamGrads, ModelError> {
    let n = trace.batch_size();
    let h_shape = (n, params.encoder.spec.output_width());
    let z_shape = (n, params.head.spec.output_width());
    if grad_h.shape() != h_shape || grad_z.shape() != z_shape {
        return Err(ModelError::Shape(format!(
            "grad_h {:?} (want {h_shape:?}), grad_z {:?} (want {z_shape:?})",
            grad_h.shape(),
            grad_z.shape()
        )));
    }
    let (head, mut dh) = params.head.backward(&trace.head, grad_z)?;
    dh.add_assign(grad_h)?;
    let (encoder, _) = params.encoder.backward(&trace.encoder, &dh)?;
    Ok(ParamGrads { encoder, head })
}

/// Adds two gradient sets, e.g. from the two views of a batch.
pub fn add_grads(a: &ParamGrads, b: &ParamGrads) -> Result<ParamGrads, ModelError> {
    let sum = |x: &[Layer], y: &[Layer]| -> Result<Vec<Layer>, ModelError> {
        x.iter()
            .zip(y)
            .map(|(p, q)| {
                Ok(Layer {
                    w: p.w.add(&q.w)?,
                    b: p.b.iter().zip(&q.b).map(|(u, v)| u + v).collect(),
                })
            })
            .collect()
    };
    Ok(ParamGrads {
        encoder: sum(&a.encoder, &b.encoder)?,
        head: sum(&a.head, &b.head)?,
    })
}
