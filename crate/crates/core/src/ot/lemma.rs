//! Machine-checkable bounds on the entropic coupling.
//!
//! For a uniform square problem the coupling `diag(1/N)` is feasible with
//! entropy `ln N`, so the optimum can be no worse than it:
//!
//! ```text
//! ⟨γ*, C⟩ − λ H(γ*)  ≤  (1/N) Σ_i C_ii − λ ln N
//! ```
//!
//! Any feasible coupling also costs at least the unregularized optimum, so
//! `⟨γ*, C⟩ ≥ OT(C)`. Finally every entry of `γ*` is positive.
//!
//! The stronger claim that every coupling costs at least the diagonal
//! `(1/N) Σ_i C_ii` does not hold in general (crossing pairs can be cheaper)
//! and is not checked.
//!
//! A plan that stopped short of convergence is slightly infeasible and can
//! undercut `OT(C)` by about its marginal error. Both bounds are therefore
//! evaluated on [`round_to_feasible`] applied to the returned plan. For the
//! upper bound this is conservative: the true optimum minimizes the objective
//! over all feasible couplings, the rounded plan included. Positivity is
//! judged on the plan as returned.

use serde::Serialize;

use super::{
    coupling_cost, coupling_objective, exact_ot, round_to_feasible, sinkhorn, OtError, OtProblem,
    SinkhornSettings, TransportPlan,
};

/// Slack below which a bound still counts as met; absorbs rounding only.
const ROUNDING_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCheck {
    pub name: &'static str,
    pub passed: bool,
    /// `rhs − lhs` for an upper bound, `lhs − rhs` for a lower bound.
    pub slack: f64,
    pub lhs: f64,
    pub rhs: f64,
}

impl BoundCheck {
    fn upper(name: &'static str, lhs: f64, rhs: f64) -> Self {
        let slack = rhs - lhs;
        BoundCheck {
            name,
            passed: slack >= -ROUNDING_SLACK * (1.0 + rhs.abs()),
            slack,
            lhs,
            rhs,
        }
    }

    fn lower(name: &'static str, lhs: f64, rhs: f64) -> Self {
        let slack = lhs - rhs;
        BoundCheck {
            name,
            passed: slack >= -ROUNDING_SLACK * (1.0 + rhs.abs()),
            slack,
            lhs,
            rhs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PositivityCheck {
    /// `min ln γ_ij` is finite, so every entry is positive.
    pub passed: bool,
    /// Smallest entry as stored in `f64`; may have underflowed to 0.
    pub min_gamma: f64,
    pub min_log_gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaReport {
    pub n: usize,
    pub lambda: f64,
    pub iterations_run: usize,
    pub marginal_err: f64,
    /// L1 distance between the returned plan and its feasible rounding.
    pub rounding_l1: f64,
    /// Entropic objective of the solution versus the diagonal candidate.
    pub diagonal_upper_bound: BoundCheck,
    /// Transport cost of the solution versus the exact optimum.
    pub exact_lower_bound: BoundCheck,
    pub positivity: PositivityCheck,
}

impl LemmaReport {
    pub fn passed(&self) -> bool {
        self.diagonal_upper_bound.passed && self.exact_lower_bound.passed && self.positivity.passed
    }
}

pub fn check_lemma_bounds(
    problem: &OtProblem,
    settings: &SinkhornSettings,
) -> Result<LemmaReport, OtError> {
    check_lemma_bounds_with_plan(problem, settings).map(|(report, _)| report)
}

/// As [`check_lemma_bounds`], also handing back the solved plan.
pub fn check_lemma_bounds_with_plan(
    problem: &OtProblem,
    settings: &SinkhornSettings,
) -> Result<(LemmaReport, TransportPlan), OtError> {
    if !problem.is_uniform_square() {
        return Err(OtError::Unsupported(
            "lemma bounds need a uniform square problem".into(),
        ));
    }
    let n = problem.mu().len();
    let cost = problem.cost();
    let plan = sinkhorn(problem, settings)?;
    let exact = exact_ot(problem)?;

    let mean_diag = (0..n).map(|i| cost[(i, i)]).sum::<f64>() / n as f64;
    let candidate = mean_diag - settings.lambda * (n as f64).ln();
    let feasible = round_to_feasible(&plan.gamma, problem.mu(), problem.nu())?;
    let rounding_l1 = feasible.sub(&plan.gamma)?.as_slice().iter().map(|x| x.abs()).sum();
    let objective = coupling_objective(&feasible, cost, settings.lambda)?;
    let transport = coupling_cost(&feasible, cost)?;
    let min_gamma = plan.gamma.min();
    let min_log_gamma = plan.log_gamma.min();

    let report = LemmaReport {
        n,
        lambda: settings.lambda,
        iterations_run: plan.iterations_run,
        marginal_err: plan.marginal_err,
        rounding_l1,
        diagonal_upper_bound: BoundCheck::upper("objective<=diagonal_candidate", objective, candidate),
        exact_lower_bound: BoundCheck::lower("transport_cost>=exact_ot", transport, exact.cost),
        positivity: PositivityCheck {
            passed: min_log_gamma.is_finite(),
            min_gamma,
            min_log_gamma,
        },
    };
    Ok((report, plan))
}
