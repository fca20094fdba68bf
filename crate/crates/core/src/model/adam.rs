use serde::{Deserialize, Serialize};

use super::{Layer, ModelError, ModelParams, ParamGrads};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamSettings {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamSettings {
    fn default() -> Self {
        AdamSettings {
            lr: 1e-3,
            weight_decay: 1e-6,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamSettings {
    pub fn validate(&self) -> Result<(), ModelError> {
        let ok = self.lr >= 0.0
            && self.lr.is_finite()
            && self.weight_decay >= 0.0
            && self.weight_decay.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if !ok {
            return Err(ModelError::Spec(format!("invalid optimizer settings {self:?}")));
        }
        Ok(())
    }
}

/// One Adam update with bias correction.
///
/// Weight decay is coupled: `g ← g + wd·θ` before the moment update, on
/// weights and biases alike.
pub fn adam_step(params: &mut ModelParams, grads: &ParamGrads, s: &AdamSettings) -> Result<(), ModelError> {
    s.validate()?;
    let shapes_match = |a: &[Layer], b: &[Layer]| {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.w.shape() == y.w.shape() && x.b.len() == y.b.len())
    };
    if !shapes_match(&params.encoder.layers, &grads.encoder) || !shapes_match(&params.head.layers, &grads.head) {
        return Err(ModelError::Shape("gradient shapes do not match parameters".into()));
    }
    params.step_count += 1;
    let t = params.step_count as i32;
    let c1 = 1.0 - s.beta1.powi(t);
    let c2 = 1.0 - s.beta2.powi(t);

    let update = |theta: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
        for i in 0..theta.len() {
            let gi = g[i] + s.weight_decay * theta[i];
            m[i] = s.beta1 * m[i] + (1.0 - s.beta1) * gi;
            v[i] = s.beta2 * v[i] + (1.0 - s.beta2) * gi * gi;
            let mhat = m[i] / c1;
            let vhat = v[i] / c2;
            theta[i] -= s.lr * mhat / (vhat.sqrt() + s.eps);
        }
    };

    let groups = [
        (&mut params.encoder.layers, &grads.encoder, &mut params.adam_m.encoder, &mut params.adam_v.encoder),
        (&mut params.head.layers, &grads.head, &mut params.adam_m.head, &mut params.adam_v.head),
    ];
    for (layers, g, m, v) in groups {
        for k in 0..layers.len() {
            update(layers[k].w.as_mut_slice(), g[k].w.as_slice(), m[k].w.as_mut_slice(), v[k].w.as_mut_slice());
            update(&mut layers[k].b, &g[k].b, &mut m[k].b, &mut v[k].b);
        }
    }
    Ok(())
}
