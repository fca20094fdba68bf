//! Entropic optimal transport between two discrete measures.
//!
//! Sign convention: the solver minimizes `⟨γ, C⟩ − λ·H(γ)` with
//! `H(γ) = −Σ γ_ij ln γ_ij`. This is the form whose stationarity condition is
//! the Gibbs coupling `γ_ij = exp((f_i + g_j − C_ij)/λ)`; a `+λ·H` objective
//! would penalize spread instead and has no such fixed point.
//!
//! The solver works on the dual potentials `f, g` in the log domain. One
//! iteration is one full row update followed by one full column update:
//!
//! ```text
//! f_i ← λ (ln μ_i − LSE_j((g_j − C_ij)/λ))
//! g_j ← λ (ln ν_j − LSE_i((f_i − C_ij)/λ))
//! ```
//!
//! starting from `f = g = 0`. The coupling is only ever formed by
//! exponentiating finite potentials, so every entry is strictly positive.

mod exact;
mod lemma;
pub mod verify;

pub use exact::{brute_force_assignment, exact_ot, hungarian, Assignment, EXACT_OT_MAX_N};
pub use lemma::{check_lemma_bounds, check_lemma_bounds_with_plan, BoundCheck, LemmaReport, PositivityCheck};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{logsumexp, Matrix, NumericsError};

/// Tolerance on `Σ weights = 1`.
pub const MARGINAL_SUM_TOL: f64 = 1e-12;

/// Marginal error is recorded at every multiple of this many iterations.
pub const CHECKPOINT_EVERY: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OtError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("unsupported instance: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Cost matrix plus source and target weights.
#[derive(Debug, Clone, PartialEq)]
pub struct OtProblem {
    cost: Matrix,
    mu: Vec<f64>,
    nu: Vec<f64>,
}

impl OtProblem {
    /// Validates shapes, finiteness, nonnegative costs and probability weights.
    ///
    /// Weights must be strictly positive: a zero weight has potential `−∞`,
    /// which has no finite Gibbs representation.
    pub fn new(cost: Matrix, mu: Vec<f64>, nu: Vec<f64>) -> Result<Self, OtError> {
        let (n, m) = cost.shape();
        if n == 0 || m == 0 {
            return Err(OtError::Domain("empty cost matrix".into()));
        }
        if mu.len() != n || nu.len() != m {
            return Err(OtError::Shape(format!(
                "cost is {n}x{m} but marginals have lengths {} and {}",
                mu.len(),
                nu.len()
            )));
        }
        if let Some(c) = cost.as_slice().iter().find(|c| !c.is_finite()) {
            return Err(OtError::Domain(format!("non-finite cost entry {c}")));
        }
        if let Some(c) = cost.as_slice().iter().find(|&&c| c < 0.0) {
            return Err(OtError::Domain(format!("negative cost entry {c}")));
        }
        for (name, w) in [("mu", &mu), ("nu", &nu)] {
            if w.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
                return Err(OtError::Domain(format!("{name} has a non-positive weight")));
            }
            let s: f64 = w.iter().sum();
            if (s - 1.0).abs() > MARGINAL_SUM_TOL {
                return Err(OtError::Domain(format!("{name} sums to {s}, not 1")));
            }
        }
        Ok(OtProblem { cost, mu, nu })
    }

    /// Uniform weights `1/N`, `1/M`.
    pub fn uniform(cost: Matrix) -> Result<Self, OtError> {
        let (n, m) = cost.shape();
        if n == 0 || m == 0 {
            return Err(OtError::Domain("empty cost matrix".into()));
        }
        OtProblem::new(cost, vec![1.0 / n as f64; n], vec![1.0 / m as f64; m])
    }

    pub fn cost(&self) -> &Matrix {
        &self.cost
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn nu(&self) -> &[f64] {
        &self.nu
    }

    pub fn is_uniform_square(&self) -> bool {
        let n = self.mu.len();
        let w = 1.0 / n as f64;
        self.nu.len() == n
            && self.mu.iter().chain(&self.nu).all(|&x| (x - w).abs() <= 1e-15)
    }

    /// Product coupling `μ νᵀ`.
    pub fn product_coupling(&self) -> Matrix {
        Matrix::from_fn(self.mu.len(), self.nu.len(), |i, j| self.mu[i] * self.nu[j])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SinkhornSettings {
    /// Entropic strength λ > 0.
    pub lambda: f64,
    /// Number of full (row + column) updates.
    pub max_iters: usize,
    /// Stop once the marginal error is at most this; 0 always runs `max_iters`.
    pub tol: f64,
}

impl Default for SinkhornSettings {
    fn default() -> Self {
        SinkhornSettings {
            lambda: 0.05,
            max_iters: 40,
            tol: 0.0,
        }
    }
}

impl SinkhornSettings {
    pub fn new(lambda: f64, max_iters: usize, tol: f64) -> Self {
        SinkhornSettings {
            lambda,
            max_iters,
            tol,
        }
    }

    pub fn validate(&self) -> Result<(), OtError> {
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(OtError::Domain(format!("lambda must be > 0, got {}", self.lambda)));
        }
        if self.max_iters == 0 {
            return Err(OtError::Domain("max_iters must be at least 1".into()));
        }
        if !(self.tol >= 0.0) {
            return Err(OtError::Domain(format!("tol must be >= 0, got {}", self.tol)));
        }
        Ok(())
    }
}

/// Result of a Sinkhorn solve.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    /// The coupling, `exp((f_i + g_j − C_ij)/λ)`. Entries far below the
    /// largest can underflow to 0 in `f64`; `log_gamma` keeps them exact.
    pub gamma: Matrix,
    /// `(f_i + g_j − C_ij)/λ`, always finite.
    pub log_gamma: Matrix,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub iterations_run: usize,
    /// Max-abs deviation of row and column sums of `gamma` from `mu`, `nu`.
    pub marginal_err: f64,
    pub lambda: f64,
    /// `(iteration, marginal error)` after every [`CHECKPOINT_EVERY`] iterations.
    pub checkpoints: Vec<(usize, f64)>,
}

impl TransportPlan {
    pub fn shape(&self) -> (usize, usize) {
        self.gamma.shape()
    }

    /// Largest relative gap between stored entries and the Gibbs form rebuilt
    /// from the potentials.
    pub fn gibbs_reconstruction_error(&self, cost: &Matrix) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.f.len() {
            for j in 0..self.g.len() {
                let rebuilt = ((self.f[i] + self.g[j] - cost[(i, j)]) / self.lambda).exp();
                let stored = self.gamma[(i, j)];
                worst = worst.max((rebuilt - stored).abs() / stored.abs().max(f64::MIN_POSITIVE));
            }
        }
        worst
    }
}

/// Log-domain Sinkhorn–Knopp. See the module docs for the update rule.
pub fn sinkhorn(problem: &OtProblem, settings: &SinkhornSettings) -> Result<TransportPlan, OtError> {
    settings.validate()?;
    let cost = problem.cost();
    let (n, m) = cost.shape();
    let lambda = settings.lambda;

    if n == 1 || m == 1 {
        return Ok(degenerate_plan(problem, lambda));
    }

    let ln_mu: Vec<f64> = problem.mu().iter().map(|x| x.ln()).collect();
    let ln_nu: Vec<f64> = problem.nu().iter().map(|x| x.ln()).collect();
    let inv_lambda = 1.0 / lambda;

    let mut f = vec![0.0; n];
    let mut g = vec![0.0; m];
    let mut row_lse = vec![0.0; n];
    let mut scratch = vec![0.0; m];
    let mut col_max = vec![0.0; m];
    let mut col_acc = vec![0.0; m];
    let mut checkpoints = Vec::new();
    let mut iterations_run = 0;

    for it in 0..settings.max_iters {
        // Row log-sums of the current coupling, shifted by f: ln Σ_j γ_ij = f_i/λ + row_lse_i.
        for i in 0..n {
            let c = cost.row(i);
            for j in 0..m {
                scratch[j] = (g[j] - c[j]) * inv_lambda;
            }
            row_lse[i] = logsumexp(&scratch);
        }
        if it > 0 {
            let need_err = settings.tol > 0.0 || it % CHECKPOINT_EVERY == 0;
            if need_err {
                let err = row_error(&f, &row_lse, problem.mu(), inv_lambda);
                if it % CHECKPOINT_EVERY == 0 {
                    checkpoints.push((it, err));
                }
                if settings.tol > 0.0 && err <= settings.tol {
                    break;
                }
            }
        }

        for i in 0..n {
            f[i] = lambda * (ln_mu[i] - row_lse[i]);
        }

        // Column pass in row-major order: running max, then shifted sums.
        col_max.iter_mut().for_each(|x| *x = f64::NEG_INFINITY);
        for i in 0..n {
            let c = cost.row(i);
            for j in 0..m {
                let v = (f[i] - c[j]) * inv_lambda;
                if v > col_max[j] {
                    col_max[j] = v;
                }
            }
        }
        col_acc.iter_mut().for_each(|x| *x = 0.0);
        for i in 0..n {
            let c = cost.row(i);
            for j in 0..m {
                col_acc[j] += ((f[i] - c[j]) * inv_lambda - col_max[j]).exp();
            }
        }
        for j in 0..m {
            g[j] = lambda * (ln_nu[j] - (col_max[j] + col_acc[j].ln()));
        }
        iterations_run = it + 1;
    }

    let log_gamma = gibbs_log_coupling(cost, &f, &g, lambda);
    let gamma = log_gamma.exp();
    let marginal_err = marginal_error(&gamma, problem.mu(), problem.nu());
    if iterations_run % CHECKPOINT_EVERY == 0
        && checkpoints.last().map_or(true, |&(k, _)| k != iterations_run)
    {
        checkpoints.push((iterations_run, marginal_err));
    }
    Ok(TransportPlan {
        gamma,
        log_gamma,
        f,
        g,
        iterations_run,
        marginal_err,
        lambda,
        checkpoints,
    })
}

fn row_error(f: &[f64], row_lse: &[f64], mu: &[f64], inv_lambda: f64) -> f64 {
    f.iter()
        .zip(row_lse)
        .zip(mu)
        .map(|((fi, l), m)| ((fi * inv_lambda + l).exp() - m).abs())
        .fold(0.0, f64::max)
}

/// With a single source or a single target the only feasible coupling is the
/// other marginal itself; potentials are chosen so the Gibbs form reproduces it.
fn degenerate_plan(problem: &OtProblem, lambda: f64) -> TransportPlan {
    let cost = problem.cost();
    let (n, m) = cost.shape();
    let gamma = if n == 1 {
        Matrix::from_fn(1, m, |_, j| problem.nu()[j])
    } else {
        Matrix::from_fn(n, 1, |i, _| problem.mu()[i])
    };
    let (f, g) = if n == 1 {
        let g = (0..m)
            .map(|j| lambda * problem.nu()[j].ln() + cost[(0, j)])
            .collect();
        (vec![0.0], g)
    } else {
        let f = (0..n)
            .map(|i| lambda * problem.mu()[i].ln() + cost[(i, 0)])
            .collect();
        (f, vec![0.0])
    };
    let log_gamma = gibbs_log_coupling(cost, &f, &g, lambda);
    let marginal_err = marginal_error(&gamma, problem.mu(), problem.nu());
    TransportPlan {
        gamma,
        log_gamma,
        f,
        g,
        iterations_run: 0,
        marginal_err,
        lambda,
        checkpoints: Vec::new(),
    }
}

fn gibbs_log_coupling(cost: &Matrix, f: &[f64], g: &[f64], lambda: f64) -> Matrix {
    Matrix::from_fn(f.len(), g.len(), |i, j| (f[i] + g[j] - cost[(i, j)]) / lambda)
}

/// Max-abs deviation of the row sums from `mu` and column sums from `nu`.
pub fn marginal_error(gamma: &Matrix, mu: &[f64], nu: &[f64]) -> f64 {
    let rows = gamma.row_sums().into_iter().zip(mu).map(|(s, m)| (s - m).abs());
    let cols = gamma.col_sums().into_iter().zip(nu).map(|(s, m)| (s - m).abs());
    rows.chain(cols).fold(0.0, f64::max)
}

/// Nearest-feasible repair of an approximate coupling.
///
/// Rows whose mass exceeds `mu` are scaled down, then columns exceeding `nu`,
/// and the remaining deficit is filled with the rank-one term
/// `(μ − r)(ν − c)ᵀ / ‖μ − r‖₁`. The result has exactly the requested
/// marginals (up to rounding) and stays positive wherever `gamma` is. Its L1
/// distance from `gamma` is at most twice the total marginal violation.
pub fn round_to_feasible(gamma: &Matrix, mu: &[f64], nu: &[f64]) -> Result<Matrix, OtError> {
    let (n, m) = gamma.shape();
    if mu.len() != n || nu.len() != m {
        return Err(OtError::Shape(format!(
            "coupling {n}x{m} vs marginals {}x{}",
            mu.len(),
            nu.len()
        )));
    }
    let mut out = gamma.clone();
    for (i, r) in gamma.row_sums().into_iter().enumerate() {
        if r > mu[i] {
            let s = mu[i] / r;
            out.row_mut(i).iter_mut().for_each(|x| *x *= s);
        }
    }
    let col_scale: Vec<f64> = out
        .col_sums()
        .into_iter()
        .zip(nu)
        .map(|(c, &v)| if c > v { v / c } else { 1.0 })
        .collect();
    for i in 0..n {
        for (x, s) in out.row_mut(i).iter_mut().zip(&col_scale) {
            *x *= s;
        }
    }
    let row_deficit: Vec<f64> = out.row_sums().into_iter().zip(mu).map(|(r, m)| m - r).collect();
    let col_deficit: Vec<f64> = out.col_sums().into_iter().zip(nu).map(|(c, v)| v - c).collect();
    let total: f64 = row_deficit.iter().sum();
    if total > 0.0 {
        for i in 0..n {
            let a = row_deficit[i] / total;
            for (x, b) in out.row_mut(i).iter_mut().zip(&col_deficit) {
                *x += a * b;
            }
        }
    }
    Ok(out)
}

/// `⟨γ, C⟩`.
pub fn transport_cost(plan: &TransportPlan, cost: &Matrix) -> Result<f64, OtError> {
    coupling_cost(&plan.gamma, cost)
}

/// `⟨γ, C⟩` for an arbitrary coupling matrix.
pub fn coupling_cost(gamma: &Matrix, cost: &Matrix) -> Result<f64, OtError> {
    if gamma.shape() != cost.shape() {
        return Err(OtError::Shape(format!(
            "coupling {:?} vs cost {:?}",
            gamma.shape(),
            cost.shape()
        )));
    }
    Ok(gamma.frobenius_inner(cost)?)
}

/// `H(γ) = −Σ γ_ij ln γ_ij`, using the stored log-coupling.
pub fn entropy(plan: &TransportPlan) -> f64 {
    -plan
        .gamma
        .as_slice()
        .iter()
        .zip(plan.log_gamma.as_slice())
        .map(|(&x, &lx)| x * lx)
        .sum::<f64>()
}

/// `H(γ)` for an arbitrary coupling, with `0 · ln 0 = 0`.
pub fn coupling_entropy(gamma: &Matrix) -> f64 {
    -gamma
        .as_slice()
        .iter()
        .map(|&x| if x > 0.0 { x * x.ln() } else { 0.0 })
        .sum::<f64>()
}

/// `⟨γ, C⟩ − λ H(γ)` with the plan's own λ.
pub fn entropic_objective(plan: &TransportPlan, cost: &Matrix) -> Result<f64, OtError> {
    Ok(transport_cost(plan, cost)? - plan.lambda * entropy(plan))
}

/// `⟨γ, C⟩ − λ H(γ)` for an arbitrary coupling.
pub fn coupling_objective(gamma: &Matrix, cost: &Matrix, lambda: f64) -> Result<f64, OtError> {
    Ok(coupling_cost(gamma, cost)? - lambda * coupling_entropy(gamma))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{pairwise_sqdist, Rng};
    use proptest::prelude::*;

    fn gaussian_points(rng: &mut Rng, n: usize, d: usize) -> Matrix {
        Matrix::from_fn(n, d, |_, _| rng.normal())
    }

    fn random_problem(rng: &mut Rng, n: usize, d: usize) -> OtProblem {
        let a = gaussian_points(rng, n, d);
        let b = gaussian_points(rng, n, d);
        OtProblem::uniform(pairwise_sqdist(&a, &b).unwrap()).unwrap()
    }

    fn tight(lambda: f64) -> SinkhornSettings {
        SinkhornSettings::new(lambda, 10_000, 1e-9)
    }

    #[test]
    fn single_point_is_trivial() {
        let p = OtProblem::uniform(Matrix::from_rows(&[[3.7]])).unwrap();
        let plan = sinkhorn(&p, &SinkhornSettings::default()).unwrap();
        assert_eq!(plan.gamma, Matrix::from_rows(&[[1.0]]));
        assert_eq!(plan.marginal_err, 0.0);
        assert_eq!(transport_cost(&plan, p.cost()).unwrap(), 3.7);
        assert_eq!(entropy(&plan), 0.0);
        assert_eq!(entropic_objective(&plan, p.cost()).unwrap(), 3.7);
    }

    #[test]
    fn single_row_gets_target_marginal() {
        let cost = Matrix::from_rows(&[[1.0, 5.0, 2.0]]);
        let p = OtProblem::new(cost, vec![1.0], vec![0.2, 0.3, 0.5]).unwrap();
        let plan = sinkhorn(&p, &SinkhornSettings::default()).unwrap();
        assert_eq!(plan.marginal_err, 0.0);
        assert!(plan.gibbs_reconstruction_error(p.cost()) <= 1e-10);
    }

    #[test]
    fn row_independent_cost_gives_product_coupling() {
        let cost = Matrix::from_fn(4, 3, |_, j| [0.3, 2.0, 1.1][j]);
        let p = OtProblem::uniform(cost).unwrap();
        let plan = sinkhorn(&p, &SinkhornSettings::default()).unwrap();
        assert!(plan.gamma.max_abs_diff(&p.product_coupling()).unwrap() < 1e-14);
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = OtProblem::uniform(Matrix::filled(2, 2, 1.0)).unwrap();
        for lambda in [0.0, -1.0, f64::NAN] {
            let s = SinkhornSettings::new(lambda, 10, 0.0);
            assert!(matches!(sinkhorn(&p, &s), Err(OtError::Domain(_))));
        }
        let s = SinkhornSettings::new(0.1, 0, 0.0);
        assert!(matches!(sinkhorn(&p, &s), Err(OtError::Domain(_))));

        let bad = Matrix::from_rows(&[[0.0, f64::INFINITY], [1.0, 1.0]]);
        assert!(matches!(OtProblem::uniform(bad), Err(OtError::Domain(_))));
        let neg = Matrix::from_rows(&[[0.0, -1.0], [1.0, 1.0]]);
        assert!(matches!(OtProblem::uniform(neg), Err(OtError::Domain(_))));
        let c = Matrix::filled(2, 2, 1.0);
        assert!(OtProblem::new(c.clone(), vec![0.5, 0.6], vec![0.5, 0.5]).is_err());
        assert!(OtProblem::new(c.clone(), vec![1.0], vec![0.5, 0.5]).is_err());
        assert!(OtProblem::new(c, vec![1.0, 0.0], vec![0.5, 0.5]).is_err());
    }

    #[test]
    fn runs_exactly_max_iters_without_tolerance() {
        let mut rng = Rng::new(1);
        let p = random_problem(&mut rng, 6, 2);
        let plan = sinkhorn(&p, &SinkhornSettings::new(0.05, 40, 0.0)).unwrap();
        assert_eq!(plan.iterations_run, 40);
        assert_eq!(
            plan.checkpoints.iter().map(|c| c.0).collect::<Vec<_>>(),
            vec![5, 10, 15, 20, 25, 30, 35, 40]
        );
        let recomputed = marginal_error(&plan.gamma, p.mu(), p.nu());
        assert_eq!(plan.marginal_err, recomputed);
    }

    #[test]
    fn small_lambda_approaches_exact_cost() {
        let mut rng = Rng::new(2);
        let p = random_problem(&mut rng, 3, 2);
        let plan = sinkhorn(&p, &SinkhornSettings::new(1e-3, 5000, 1e-9)).unwrap();
        let exact = exact_ot(&p).unwrap();
        let got = transport_cost(&plan, p.cost()).unwrap();
        assert!((got - exact.cost).abs() / exact.cost <= 0.01, "{got} vs {}", exact.cost);
    }

    #[test]
    fn default_settings_regression_fixture() {
        let mut rng = Rng::new(64);
        let a = gaussian_points(&mut rng, 64, 8);
        let b = gaussian_points(&mut rng, 64, 8);
        let p = OtProblem::uniform(pairwise_sqdist(&a, &b).unwrap()).unwrap();
        let plan = sinkhorn(&p, &SinkhornSettings::default()).unwrap();
        assert_eq!(plan.iterations_run, 40);
        // raw costs reach ~60, so some entries underflow in `gamma` but not in `log_gamma`
        assert!(plan.log_gamma.all_finite());
        assert!((plan.gamma.sum() - 1.0).abs() <= 1e-9);
        let cost = transport_cost(&plan, p.cost()).unwrap();
        assert!((plan.marginal_err - FIXTURE_MARGINAL_ERR).abs() <= 1e-9 * FIXTURE_MARGINAL_ERR);
        assert!((cost - FIXTURE_COST).abs() <= 1e-9 * FIXTURE_COST);
    }

    const FIXTURE_MARGINAL_ERR: f64 = 5.185908927785615e-3;
    const FIXTURE_COST: f64 = 4.9495571390935496;

    #[test]
    fn transport_cost_and_entropy_cases() {
        let plan = TransportPlan {
            gamma: Matrix::filled(2, 2, 0.25),
            log_gamma: Matrix::filled(2, 2, 0.25f64.ln()),
            f: vec![0.0; 2],
            g: vec![0.0; 2],
            iterations_run: 0,
            marginal_err: 0.0,
            lambda: 0.1,
            checkpoints: vec![],
        };
        assert!((entropy(&plan) - 4f64.ln()).abs() < 1e-15);
        assert!((transport_cost(&plan, &Matrix::filled(2, 2, 2.5)).unwrap() - 2.5).abs() < 1e-15);
        assert!(transport_cost(&plan, &Matrix::zeros(2, 3)).is_err());

        let mut rng = Rng::new(4);
        let raw = Matrix::from_fn(5, 4, |_, _| rng.uniform());
        let total = raw.sum();
        let gamma = raw.scale(1.0 / total);
        let cost = Matrix::from_fn(5, 4, |_, _| rng.uniform() * 3.0);
        let mut dc = 0.0;
        let mut h = 0.0;
        for i in 0..5 {
            for j in 0..4 {
                dc += gamma[(i, j)] * cost[(i, j)];
                h -= gamma[(i, j)] * gamma[(i, j)].ln();
            }
        }
        assert!((coupling_cost(&gamma, &cost).unwrap() - dc).abs() <= 1e-12);
        assert!((coupling_entropy(&gamma) - h).abs() <= 1e-12);
    }

    #[test]
    fn diagonal_coupling_objective() {
        let n = 5;
        let mut rng = Rng::new(8);
        let p = random_problem(&mut rng, n, 3);
        let diag = Matrix::from_fn(n, n, |i, j| if i == j { 1.0 / n as f64 } else { 0.0 });
        let lambda = 0.05;
        let mean_diag: f64 = (0..n).map(|i| p.cost()[(i, i)]).sum::<f64>() / n as f64;
        let got = coupling_objective(&diag, p.cost(), lambda).unwrap();
        assert!((got - (mean_diag - lambda * (n as f64).ln())).abs() <= 1e-12);
    }

    /// Random feasible couplings: Sinkhorn-scale a random positive matrix.
    fn random_feasible_coupling(rng: &mut Rng, n: usize) -> Matrix {
        let mut k = Matrix::from_fn(n, n, |_, _| rng.uniform().powi(3) + 1e-6);
        for _ in 0..2000 {
            for i in 0..n {
                let s: f64 = k.row(i).iter().sum();
                k.row_mut(i).iter_mut().for_each(|x| *x /= s * n as f64);
            }
            let cs = k.col_sums();
            for i in 0..n {
                for j in 0..n {
                    k[(i, j)] /= cs[j] * n as f64;
                }
            }
        }
        k
    }

    #[test]
    fn solution_beats_random_feasible_couplings() {
        let mut rng = Rng::new(21);
        for _ in 0..5 {
            let p = random_problem(&mut rng, 4, 2);
            let lambda = 0.3;
            let plan = sinkhorn(&p, &tight(lambda)).unwrap();
            let best = entropic_objective(&plan, p.cost()).unwrap();
            for _ in 0..100 {
                let c = random_feasible_coupling(&mut rng, 4);
                let other = coupling_objective(&c, p.cost(), lambda).unwrap();
                assert!(best <= other + 1e-9, "{best} > {other}");
            }
        }
    }

    #[test]
    fn marginals_converge_across_sizes_and_lambdas() {
        // Small problems at small λ can sit far outside this budget; see
        // `extreme_cross_ratio_converges_slowly`.
        let cases: &[(f64, &[usize])] = &[(0.01, &[32, 128]), (0.05, &[8, 32, 128]), (0.5, &[2, 8, 32, 128])];
        for seed in 0..8 {
            for &(lambda, sizes) in cases {
                for &n in sizes {
                    let mut rng = Rng::derived(seed, &[n as u64, lambda.to_bits()]);
                    let p = verify::scaled_gaussian_problem(&mut rng, n, 2, 1.0).unwrap();
                    let plan = sinkhorn(&p, &tight(lambda)).unwrap();
                    assert!(
                        plan.marginal_err <= 1e-8,
                        "seed={seed} n={n} lambda={lambda} err={} iters={}",
                        plan.marginal_err,
                        plan.iterations_run
                    );
                }
            }
        }
    }

    /// Uniform 2×2 problems have a one-parameter solution
    /// `γ = [[a, ½−a], [½−a, a]]` with `a / (½ − a) = exp(−Δ / 2λ)` and
    /// `Δ = C₁₁ + C₂₂ − C₁₂ − C₂₁`.
    fn two_point_closed_form(cost: &Matrix, lambda: f64) -> Matrix {
        let delta = cost[(0, 0)] + cost[(1, 1)] - cost[(0, 1)] - cost[(1, 0)];
        let r = (-delta / (2.0 * lambda)).exp();
        let a = 0.5 * r / (1.0 + r);
        Matrix::from_rows(&[[a, 0.5 - a], [0.5 - a, a]])
    }

    #[test]
    fn two_point_problems_match_closed_form() {
        let mut rng = Rng::new(40);
        for _ in 0..20 {
            let cost = Matrix::from_fn(2, 2, |_, _| rng.uniform());
            let lambda = 0.2 + rng.uniform();
            let p = OtProblem::uniform(cost.clone()).unwrap();
            let plan = sinkhorn(&p, &tight(lambda)).unwrap();
            let want = two_point_closed_form(&cost, lambda);
            assert!(plan.gamma.max_abs_diff(&want).unwrap() <= 1e-8);
        }
    }

    #[test]
    fn extreme_cross_ratio_converges_slowly() {
        // Δ/λ ≈ 24.6: the per-iteration contraction is about 1 − 2e-5.
        let cost = Matrix::from_rows(&[
            [0.7166045524621596, 0.33513347434356733],
            [0.15055149274283325, 1.0],
        ]);
        let p = OtProblem::uniform(cost.clone()).unwrap();
        let short = sinkhorn(&p, &tight(0.05)).unwrap();
        assert_eq!(short.iterations_run, 10_000);
        assert!(short.marginal_err > 1e-6);

        let long = sinkhorn(&p, &SinkhornSettings::new(0.05, 2_000_000, 1e-12)).unwrap();
        assert!(long.marginal_err <= 1e-12);
        let want = two_point_closed_form(&cost, 0.05);
        assert!(long.gamma.max_abs_diff(&want).unwrap() <= 1e-11);
    }

    #[test]
    fn rounding_restores_marginals() {
        let mut rng = Rng::new(9);
        for _ in 0..20 {
            let n = 2 + rng.below(6) as usize;
            let m = 2 + rng.below(6) as usize;
            let gamma = Matrix::from_fn(n, m, |_, _| rng.uniform() / (n * m) as f64 * 2.0);
            let mu = vec![1.0 / n as f64; n];
            let nu = vec![1.0 / m as f64; m];
            let violation: f64 = gamma.row_sums().iter().zip(&mu).map(|(r, m)| (r - m).abs()).sum::<f64>()
                + gamma.col_sums().iter().zip(&nu).map(|(c, v)| (c - v).abs()).sum::<f64>();
            let fixed = round_to_feasible(&gamma, &mu, &nu).unwrap();
            assert!(marginal_error(&fixed, &mu, &nu) <= 1e-15);
            assert!(fixed.min() > 0.0);
            let l1: f64 = fixed.sub(&gamma).unwrap().as_slice().iter().map(|x| x.abs()).sum();
            assert!(l1 <= 2.0 * violation + 1e-15, "{l1} vs {violation}");
        }
        let feasible = Matrix::filled(3, 3, 1.0 / 9.0);
        let third = vec![1.0 / 3.0; 3];
        let same = round_to_feasible(&feasible, &third, &third).unwrap();
        assert!(same.max_abs_diff(&feasible).unwrap() <= 1e-17);
        assert!(round_to_feasible(&feasible, &[0.5, 0.5], &third).is_err());
    }

    #[test]
    fn large_lambda_gives_product_coupling() {
        let mut rng = Rng::new(6);
        let cost = Matrix::from_fn(16, 16, |_, _| rng.uniform());
        let p = OtProblem::uniform(cost).unwrap();
        let plan = sinkhorn(&p, &tight(1e3)).unwrap();
        assert!(plan.gamma.max_abs_diff(&p.product_coupling()).unwrap() <= 1e-4);
    }

    #[test]
    fn small_lambda_matches_exact_on_8x8() {
        let mut rng = Rng::new(12);
        for _ in 0..5 {
            let p = random_problem(&mut rng, 8, 2);
            let plan = sinkhorn(&p, &SinkhornSettings::new(1e-3, 100_000, 1e-9)).unwrap();
            let exact = exact_ot(&p).unwrap().cost;
            let got = transport_cost(&plan, p.cost()).unwrap();
            assert!((got - exact).abs() / exact <= 0.01, "{got} vs {exact}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn plan_invariants(seed in any::<u64>(), n in 2usize..12, m in 2usize..12, lambda in 0.02f64..2.0) {
            let mut rng = Rng::new(seed);
            let a = gaussian_points(&mut rng, n, 3);
            let b = gaussian_points(&mut rng, m, 3);
            let p = OtProblem::uniform(pairwise_sqdist(&a, &b).unwrap()).unwrap();
            let plan = sinkhorn(&p, &SinkhornSettings::new(lambda, 200, 0.0)).unwrap();
            prop_assert!(plan.log_gamma.all_finite());
            prop_assert!((plan.gamma.sum() - 1.0).abs() <= 1e-9);
            prop_assert!(plan.gibbs_reconstruction_error(p.cost()) <= 1e-10);
            let h = entropy(&plan);
            prop_assert!(h >= 0.0 && h <= ((n * m) as f64).ln() + 1e-12);
        }

        #[test]
        fn checkpoints_never_increase(seed in any::<u64>(), n in 2usize..24, lambda in prop::sample::select(vec![0.01, 0.05, 0.5])) {
            let mut rng = Rng::new(seed);
            let p = random_problem(&mut rng, n, 2);
            let plan = sinkhorn(&p, &SinkhornSettings::new(lambda, 300, 0.0)).unwrap();
            for w in plan.checkpoints.windows(2) {
                prop_assert!(w[1].1 <= w[0].1 + 1e-12, "{:?}", plan.checkpoints);
            }
        }

        #[test]
        fn cost_translation_covariance(seed in any::<u64>(), n in 2usize..10, c in 0.0f64..5.0) {
            let mut rng = Rng::new(seed);
            let p = random_problem(&mut rng, n, 2);
            let shifted = OtProblem::uniform(p.cost().add_scalar(c)).unwrap();
            let s = SinkhornSettings::new(0.1, 500, 0.0);
            let a = sinkhorn(&p, &s).unwrap();
            let b = sinkhorn(&shifted, &s).unwrap();
            prop_assert!(a.gamma.max_abs_diff(&b.gamma).unwrap() <= 1e-10);
            let ca = transport_cost(&a, p.cost()).unwrap();
            let cb = transport_cost(&b, shifted.cost()).unwrap();
            prop_assert!((cb - ca - c).abs() <= 1e-10 * (1.0 + c));
        }
    }
}
