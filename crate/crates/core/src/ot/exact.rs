//! Unregularized transport for uniform square problems.
//!
//! With `μ = ν = 1/N` the transport polytope is the Birkhoff polytope scaled
//! by `1/N`, whose vertices are permutations, so the optimum is an assignment.

use super::{OtError, OtProblem};
use crate::numerics::Matrix;

/// Largest `N` accepted by [`exact_ot`].
pub const EXACT_OT_MAX_N: usize = 512;

/// Brute-force cross-checks run below this size.
const BRUTE_FORCE_MAX_N: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// `Σ_i C[i, perm[i]] / N`.
    pub cost: f64,
    /// `perm[i]` is the target matched to source `i`.
    pub perm: Vec<usize>,
}

/// Exact optimal transport cost for a uniform square problem.
pub fn exact_ot(problem: &OtProblem) -> Result<Assignment, OtError> {
    let (n, m) = problem.cost().shape();
    if n != m {
        return Err(OtError::Unsupported(format!("non-square cost {n}x{m}")));
    }
    if !problem.is_uniform_square() {
        return Err(OtError::Unsupported("marginals are not uniform".into()));
    }
    if n > EXACT_OT_MAX_N {
        return Err(OtError::Unsupported(format!(
            "N={n} exceeds the exact solver limit {EXACT_OT_MAX_N}"
        )));
    }
    let (total, perm) = hungarian(problem.cost());
    if n <= BRUTE_FORCE_MAX_N {
        let (brute, _) = brute_force_assignment(problem.cost());
        if (brute - total).abs() > 1e-9 * (1.0 + brute.abs()) {
            return Err(OtError::Domain(format!(
                "assignment solver disagrees with enumeration: {total} vs {brute}"
            )));
        }
    }
    Ok(Assignment {
        cost: total / n as f64,
        perm,
    })
}

/// Minimum-cost perfect matching on a square cost matrix, O(N³).
///
/// Shortest augmenting paths with row/column potentials (the Jonker–Volgenant
/// style formulation of the Hungarian method). Returns the total (unnormalized)
/// cost and `perm` with `perm[row] = col`.
pub fn hungarian(cost: &Matrix) -> (f64, Vec<usize>) {
    let n = cost.rows();
    assert_eq!(n, cost.cols(), "hungarian needs a square matrix");
    if n == 0 {
        return (0.0, Vec::new());
    }
    // 1-based with a sentinel column 0, as in the classical formulation.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut col_owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for row in 1..=n {
        col_owner[0] = row;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = col_owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let reduced = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                if reduced < minv[j] {
                    minv[j] = reduced;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[col_owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if col_owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            col_owner[j0] = col_owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut perm = vec![0; n];
    for j in 1..=n {
        perm[col_owner[j] - 1] = j - 1;
    }
    let total = perm.iter().enumerate().map(|(i, &j)| cost[(i, j)]).sum();
    (total, perm)
}

/// Minimum over all `N!` permutations (Heap's algorithm). Small `N` only.
pub fn brute_force_assignment(cost: &Matrix) -> (f64, Vec<usize>) {
    let n = cost.rows();
    assert_eq!(n, cost.cols(), "brute force needs a square matrix");
    let mut perm: Vec<usize> = (0..n).collect();
    let eval = |p: &[usize]| p.iter().enumerate().map(|(i, &j)| cost[(i, j)]).sum::<f64>();
    let mut best = (eval(&perm), perm.clone());
    let mut c = vec![0usize; n];
    let mut i = 1;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            let v = eval(&perm);
            if v < best.0 {
                best = (v, perm.clone());
            }
            c[i] += 1;
            i = 1;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    best
}
