//! Contrastive and transport losses with hand-derived gradients.
//!
//! The combined objective on a pair of views is
//!
//! ```text
//! L = NT-Xent(z₁, z₂; τ) + β · (⟨γ*, C(h₁, h₂)⟩ − λH(γ*))
//! ```
//!
//! where `γ*` is the entropic coupling between the two batches of
//! intermediate representations and `C` is the [`TransportCost`]. Setting
//! β = 0 leaves plain SimCLR.

mod nt_xent;
mod sinkhorn;

pub use nt_xent::{nt_xent, nt_xent_per_anchor, NtXentSettings};
pub use sinkhorn::{sinkhorn_loss, sinkhorn_loss_with, SinkhornLoss};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{Matrix, NumericsError};
use crate::ot::{OtError, SinkhornSettings};

#[derive(Debug, Error)]
pub enum LossError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Ot(#[from] OtError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Loss value plus whichever input gradients the loss produces.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub grad_h1: Option<Matrix>,
    pub grad_h2: Option<Matrix>,
    pub grad_z1: Option<Matrix>,
    pub grad_z2: Option<Matrix>,
}

/// Which representation the transport term acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegularizeOn {
    /// Encoder output.
    #[default]
    H,
    /// Projection-head output.
    Z,
}

/// Ground cost between representations inside the transport term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransportCost {
    /// `‖a − b‖²` on the raw rows.
    SqEuclidean,
    /// `‖a/‖a‖ − b/‖b‖‖²`, invariant to the scale of each row.
    #[default]
    Normalized,
}

/// Encoder outputs `h` and head outputs `z` for both views of a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedRepresentations {
    pub h1: Matrix,
    pub h2: Matrix,
    pub z1: Matrix,
    pub z2: Matrix,
}

/// Combined loss with its two terms kept apart for logging.
#[derive(Debug, Clone, PartialEq)]
pub struct SinSimLoss {
    /// `value = nt_xent + β·sinkhorn`; all four gradients are present.
    pub total: LossValue,
    pub nt_xent: f64,
    pub sinkhorn: f64,
    pub marginal_err: f64,
}

/// NT-Xent on `z` plus β times the transport cost on `h` (or `z`).
///
/// The transport term is always solved, so its value and marginal error are
/// available for logging even when β = 0. Its gradient is scaled by β, so
/// β = 0 contributes exact zeros.
pub fn sinsim_loss(
    reps: &PairedRepresentations,
    beta: f64,
    ntxent: &NtXentSettings,
    sink: &SinkhornSettings,
    on: RegularizeOn,
    cost: TransportCost,
) -> Result<SinSimLoss, LossError> {
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(LossError::Domain(format!("beta must be finite and >= 0, got {beta}")));
    }
    let contrast = nt_xent(&reps.z1, &reps.z2, ntxent)?;
    let (a, b) = match on {
        RegularizeOn::H => (&reps.h1, &reps.h2),
        RegularizeOn::Z => (&reps.z1, &reps.z2),
    };
    let transport = sinkhorn_loss_with(a, b, sink, cost)?;

    let mut grad_z1 = contrast.grad_z1.expect("nt_xent fills grad_z1");
    let mut grad_z2 = contrast.grad_z2.expect("nt_xent fills grad_z2");
    let (sg1, sg2) = (transport.loss.grad_h1.expect("sinkhorn fills grads"), transport.loss.grad_h2.expect("sinkhorn fills grads"));
    let (grad_h1, grad_h2) = match on {
        RegularizeOn::H => (sg1.scale(beta), sg2.scale(beta)),
        RegularizeOn::Z => {
            grad_z1.add_assign(&sg1.scale(beta))?;
            grad_z2.add_assign(&sg2.scale(beta))?;
            let (r, c) = reps.h1.shape();
            (Matrix::zeros(r, c), Matrix::zeros(r, c))
        }
    };

    Ok(SinSimLoss {
        total: LossValue {
            value: contrast.value + beta * transport.loss.value,
            grad_h1: Some(grad_h1),
            grad_h2: Some(grad_h2),
            grad_z1: Some(grad_z1),
            grad_z2: Some(grad_z2),
        },
        nt_xent: contrast.value,
        sinkhorn: transport.loss.value,
        marginal_err: transport.marginal_err,
    })
}
