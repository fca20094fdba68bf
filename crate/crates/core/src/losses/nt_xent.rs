use serde::{Deserialize, Serialize};

use super::{LossError, LossValue};
use crate::numerics::{logsumexp, norm, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NtXentSettings {
    pub temperature: f64,
}

impl Default for NtXentSettings {
    fn default() -> Self {
        NtXentSettings { temperature: 0.5 }
    }
}

impl NtXentSettings {
    pub fn validate(&self) -> Result<(), LossError> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(LossError::Domain(format!(
                "temperature must be finite and > 0, got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// Unit rows and their original norms.
pub(super) fn normalize_rows(z: &Matrix) -> Result<(Matrix, Vec<f64>), LossError> {
    let mut u = z.clone();
    let mut norms = Vec::with_capacity(z.rows());
    for i in 0..z.rows() {
        let n = norm(z.row(i));
        if n == 0.0 || !n.is_finite() {
            return Err(LossError::Domain(format!("row {i} has norm {n}")));
        }
        u.row_mut(i).iter_mut().for_each(|x| *x /= n);
        norms.push(n);
    }
    Ok((u, norms))
}

/// Pulls a gradient w.r.t. unit rows `u` back to the unnormalized rows:
/// `(I − u_i u_iᵀ) g_i / ‖x_i‖`.
pub(super) fn unnormalize_grad(u: &Matrix, norms: &[f64], g: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(u.rows(), u.cols());
    for i in 0..u.rows() {
        let ui = u.row(i);
        let gi = g.row(i);
        let radial: f64 = ui.iter().zip(gi).map(|(a, b)| a * b).sum();
        let inv = 1.0 / norms[i];
        for ((o, &a), &b) in out.row_mut(i).iter_mut().zip(ui).zip(gi) {
            *o = (b - radial * a) * inv;
        }
    }
    out
}

fn stack(z1: &Matrix, z2: &Matrix) -> Result<Matrix, LossError> {
    if z1.shape() != z2.shape() {
        return Err(LossError::Shape(format!("z1 {:?} vs z2 {:?}", z1.shape(), z2.shape())));
    }
    if z1.rows() < 2 {
        return Err(LossError::Domain(format!("need at least 2 pairs, got {}", z1.rows())));
    }
    let mut data = z1.as_slice().to_vec();
    data.extend_from_slice(z2.as_slice());
    Ok(Matrix::from_vec(2 * z1.rows(), z1.cols(), data)?)
}

struct Forward {
    u: Matrix,
    norms: Vec<f64>,
    /// Row-wise softmax over `k ≠ i`, zero on the diagonal.
    probs: Matrix,
    per_anchor: Vec<f64>,
}

fn forward(z1: &Matrix, z2: &Matrix, settings: &NtXentSettings) -> Result<Forward, LossError> {
    settings.validate()?;
    let z = stack(z1, z2)?;
    let n = z1.rows();
    let m = 2 * n;
    let (u, norms) = normalize_rows(&z)?;
    let sim = u.matmul_t(&u)?.scale(1.0 / settings.temperature);

    let mut probs = Matrix::zeros(m, m);
    let mut per_anchor = Vec::with_capacity(m);
    let mut logits = vec![0.0; m];
    for i in 0..m {
        logits.copy_from_slice(sim.row(i));
        logits[i] = f64::NEG_INFINITY;
        let lse = logsumexp(&logits);
        let pos = (i + n) % m;
        per_anchor.push(lse - sim[(i, pos)]);
        for (p, &l) in probs.row_mut(i).iter_mut().zip(&logits) {
            *p = (l - lse).exp();
        }
    }
    Ok(Forward {
        u,
        norms,
        probs,
        per_anchor,
    })
}

/// Loss of each of the `2N` anchors: rows of `z1` first, then rows of `z2`.
pub fn nt_xent_per_anchor(z1: &Matrix, z2: &Matrix, settings: &NtXentSettings) -> Result<Vec<f64>, LossError> {
    Ok(forward(z1, z2, settings)?.per_anchor)
}

/// Normalized temperature-scaled cross entropy over `2N` views.
///
/// Row `i` of `z1` and row `i` of `z2` are positives for each other; every
/// other view in the stacked batch is a negative. The value is the mean of
/// the `2N` anchor losses
///
/// ```text
/// ℓ_i = −s_{i,p(i)} + ln Σ_{k≠i} exp(s_ik),   s_ik = cos(z_i, z_k) / τ
/// ```
///
/// Gradients flow back through the row normalization:
/// `∂L/∂z_i = (I − u_i u_iᵀ) ∂L/∂u_i / ‖z_i‖`.
pub fn nt_xent(z1: &Matrix, z2: &Matrix, settings: &NtXentSettings) -> Result<LossValue, LossError> {
    let fw = forward(z1, z2, settings)?;
    let n = z1.rows();
    let m = 2 * n;
    let value = fw.per_anchor.iter().sum::<f64>() / m as f64;

    // G = ∂L/∂S: softmax minus the positive indicator, averaged over anchors
    let mut g = fw.probs;
    for i in 0..m {
        g[(i, (i + n) % m)] -= 1.0;
    }
    let g = g.scale(1.0 / m as f64);
    // S = U Uᵀ / τ, so ∂L/∂U = (G + Gᵀ) U / τ
    let gsym = g.add(&g.transpose())?;
    let du = gsym.matmul(&fw.u)?.scale(1.0 / settings.temperature);

    let d = z1.cols();
    let dz = unnormalize_grad(&fw.u, &fw.norms, &du);
    let (top, bottom) = dz.as_slice().split_at(n * d);
    Ok(LossValue {
        value,
        grad_h1: None,
        grad_h2: None,
        grad_z1: Some(Matrix::from_vec(n, d, top.to_vec())?),
        grad_z2: Some(Matrix::from_vec(n, d, bottom.to_vec())?),
    })
}
