use super::nt_xent::{normalize_rows, unnormalize_grad};
use super::{LossError, LossValue, TransportCost};
use crate::numerics::{pairwise_sqdist, Matrix};
use crate::ot::{entropy, sinkhorn, transport_cost, OtProblem, SinkhornSettings, TransportPlan};

#[derive(Debug, Clone, PartialEq)]
pub struct SinkhornLoss {
    /// Value `⟨γ*, C⟩ − λH(γ*)`; `grad_h1`/`grad_h2` hold its gradients.
    pub loss: LossValue,
    /// `⟨γ*, C⟩` alone; never negative.
    pub transport: f64,
    pub entropy: f64,
    pub plan: TransportPlan,
    pub marginal_err: f64,
}

/// Entropic transport between two batches under uniform weights.
///
/// `C = pairwise_sqdist(h1, h2)`, `γ*` is the entropic coupling, and the value
/// is the regularized optimum `W_λ = ⟨γ*, C⟩ − λH(γ*)`. Since `γ*` minimizes
/// the objective, the derivative of `W_λ` only sees the explicit dependence
/// through `C` and the coupling can be held fixed:
///
/// ```text
/// ∂/∂h1_i = 2 (r_i h1_i − Σ_j γ_ij h2_j),   r = γ 1
/// ∂/∂h2_j = 2 (c_j h2_j − Σ_i γ_ij h1_i),   c = γᵀ1
/// ```
pub fn sinkhorn_loss(h1: &Matrix, h2: &Matrix, settings: &SinkhornSettings) -> Result<SinkhornLoss, LossError> {
    if h1.shape() != h2.shape() {
        return Err(LossError::Shape(format!("h1 {:?} vs h2 {:?}", h1.shape(), h2.shape())));
    }
    if h1.rows() == 0 {
        return Err(LossError::Domain("empty batch".into()));
    }
    let cost = pairwise_sqdist(h1, h2)?;
    let problem = OtProblem::uniform(cost)?;
    let plan = sinkhorn(&problem, settings)?;
    let transport = transport_cost(&plan, problem.cost())?;
    let h = entropy(&plan);
    let value = transport - settings.lambda * h;

    let gamma = &plan.gamma;
    let r = gamma.row_sums();
    let c = gamma.col_sums();
    let pulled2 = gamma.matmul(h2)?;
    let pulled1 = gamma.t_matmul(h1)?;
    let grad1 = Matrix::from_fn(h1.rows(), h1.cols(), |i, k| 2.0 * (r[i] * h1[(i, k)] - pulled2[(i, k)]));
    let grad2 = Matrix::from_fn(h2.rows(), h2.cols(), |j, k| 2.0 * (c[j] * h2[(j, k)] - pulled1[(j, k)]));

    let marginal_err = plan.marginal_err;
    Ok(SinkhornLoss {
        loss: LossValue {
            value,
            grad_h1: Some(grad1),
            grad_h2: Some(grad2),
            grad_z1: None,
            grad_z2: None,
        },
        transport,
        entropy: h,
        plan,
        marginal_err,
    })
}

/// [`sinkhorn_loss`] under the chosen ground cost. For
/// [`TransportCost::Normalized`] the rows are scaled to unit length first and
/// the gradients are carried back through the normalization.
pub fn sinkhorn_loss_with(
    h1: &Matrix,
    h2: &Matrix,
    settings: &SinkhornSettings,
    cost: TransportCost,
) -> Result<SinkhornLoss, LossError> {
    match cost {
        TransportCost::SqEuclidean => sinkhorn_loss(h1, h2, settings),
        TransportCost::Normalized => {
            if h1.shape() != h2.shape() {
                return Err(LossError::Shape(format!("h1 {:?} vs h2 {:?}", h1.shape(), h2.shape())));
            }
            let (u1, n1) = normalize_rows(h1)?;
            let (u2, n2) = normalize_rows(h2)?;
            let mut out = sinkhorn_loss(&u1, &u2, settings)?;
            let g1 = out.loss.grad_h1.take().expect("sinkhorn fills grads");
            let g2 = out.loss.grad_h2.take().expect("sinkhorn fills grads");
            out.loss.grad_h1 = Some(unnormalize_grad(&u1, &n1, &g1));
            out.loss.grad_h2 = Some(unnormalize_grad(&u2, &n2, &g2));
            Ok(out)
        }
    }
}
