//! Stability conditions for the explicit scheme: the step-ratio condition,
//! the spectral-radius condition on the scheme operator, the closed-form
//! sufficient time step, and exact spectral data on uniform grids.
//!
//! On uniform grids the eigenvectors are discrete sine modes and both
//! conditions are evaluated exactly. On non-uniform grids the sine analysis
//! does not apply; only a conservative operator bound with per-axis minimum
//! steps is offered, flagged accordingly.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Result, SolverError};
use crate::grid::{Field, Grid};
use crate::stencil::lambda_max_k;

/// How the spectral condition of a certificate was evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CertificateMethod {
    /// Exact sine-mode spectrum (uniform grids).
    ExactSpectral,
    /// Conservative operator bound (non-uniform grids, variable coefficients).
    OperatorBound,
}

impl CertificateMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            CertificateMethod::ExactSpectral => "exact-spectral",
            CertificateMethod::OperatorBound => "operator-bound",
        }
    }
}

/// Outcome of the two stability conditions plus the closed-form step bound.
#[derive(Debug, Clone)]
pub struct StabilityCertificate {
    /// Step-ratio condition `h_t²/3 · Σ a_k²/h_k² ≤ 1 - ε`.
    pub condition1_ok: bool,
    pub condition1_slack: f64,
    /// Spectral condition `h_t²/4 · λ_max ≤ 1 - ε₀²`.
    pub condition2_ok: bool,
    pub condition2_slack: f64,
    /// Largest eigenvalue of the scheme operator (or its upper bound).
    pub lambda_max: f64,
    /// Largest time step satisfying both conditions by the closed-form bound.
    pub sufficient_dt: f64,
    pub method: CertificateMethod,
}

impl StabilityCertificate {
    pub fn ok(&self) -> bool {
        self.condition1_ok && self.condition2_ok
    }
}

/// `Σ_k a_k²/h_k²` with the exact step on uniform axes and the minimum step
/// (conservative) otherwise.
fn step_sum(grid: &Grid, speeds: &[f64]) -> f64 {
    grid.axes()
        .iter()
        .zip(speeds)
        .map(|(axis, a)| {
            let h = if axis.is_uniform() {
                axis.step_hint()
            } else {
                axis.min_step()
            };
            a * a / (h * h)
        })
        .sum()
}

/// Step-ratio condition; returns the pass flag and the signed slack
/// `(1 - ε) - h_t²/3 · Σ a_k²/h_k²`.
pub fn check_condition_eps(grid: &Grid, speeds: &[f64], h_t: f64, eps: f64) -> (bool, f64) {
    let lhs = h_t * h_t / 3.0 * step_sum(grid, speeds);
    let slack = (1.0 - eps) - lhs;
    (slack >= 0.0, slack)
}

fn require_uniform(grid: &Grid) -> Result<()> {
    if grid.axes().iter().all(|a| a.is_uniform()) {
        Ok(())
    } else {
        Err(SolverError::InvalidConfig(
            "spectral stability data is only defined on uniform grids".into(),
        ))
    }
}

/// Per-axis sine-mode eigenvalues `μ_k(l) = 4/h_k² sin²(π l/(2N_k))` of the
/// negative second difference.
fn mode_mu(grid: &Grid) -> Vec<Vec<f64>> {
    grid.axes()
        .iter()
        .map(|axis| {
            let n = axis.n_cells();
            let h = axis.step_hint();
            (1..n)
                .map(|l| {
                    let s = (PI * l as f64 / (2.0 * n as f64)).sin();
                    4.0 / (h * h) * s * s
                })
                .collect()
        })
        .collect()
}

fn eigenvalue_from_mu(mu: &[f64], grid: &Grid, speeds: &[f64], h_t: f64) -> f64 {
    let mut s_lh = 0.0;
    let mut s_inv = 0.0;
    for ((m, axis), a) in mu.iter().zip(grid.axes()).zip(speeds) {
        let h = axis.step_hint();
        let sigma = 1.0 - h * h / 12.0 * m;
        s_lh += a * a * m;
        s_inv += a * a * m / sigma;
    }
    (1.0 - h_t * h_t / 12.0 * s_lh) * s_inv
}

/// Eigenvalue of the scheme operator on the sine mode `ell` of a uniform grid:
/// `[1 - h_t²/12 Σ a_k²μ_k] · Σ a_k²μ_k/σ_k` with `σ_k = 1 - h_k²μ_k/12`.
pub fn eigenvalue_a(grid: &Grid, speeds: &[f64], h_t: f64, ell: &[usize]) -> Result<f64> {
    require_uniform(grid)?;
    if ell.len() != grid.dim() {
        return Err(SolverError::IndexOutOfRange(format!(
            "mode index has {} components on a {}-d grid",
            ell.len(),
            grid.dim()
        )));
    }
    let mut mu = Vec::with_capacity(ell.len());
    for (k, (&l, axis)) in ell.iter().zip(grid.axes()).enumerate() {
        let n = axis.n_cells();
        if l < 1 || l > n - 1 {
            return Err(SolverError::IndexOutOfRange(format!(
                "mode {l} on axis {k} with {} interior nodes",
                n - 1
            )));
        }
        let h = axis.step_hint();
        let s = (PI * l as f64 / (2.0 * n as f64)).sin();
        mu.push(4.0 / (h * h) * s * s);
    }
    Ok(eigenvalue_from_mu(&mu, grid, speeds, h_t))
}

/// Exhaustive mode scan is used up to this many interior modes; beyond it
/// only a neighborhood of the corner mode is evaluated. The exhaustive path
/// is the ground truth; the corner heuristic is cross-validated against it
/// in tests.
pub const FULL_SCAN_LIMIT: usize = 1 << 18;

fn scan_lambda_max(grid: &Grid, speeds: &[f64], h_t: f64, mu: &[Vec<f64>]) -> f64 {
    let dims: Vec<usize> = grid.axes().iter().map(|a| a.n_cells() - 1).collect();
    let mut best = f64::NEG_INFINITY;
    let mut ell = vec![1usize; dims.len()];
    let mut mu_now: Vec<f64> = (0..dims.len()).map(|k| mu[k][0]).collect();
    loop {
        let lam = eigenvalue_from_mu(&mu_now, grid, speeds, h_t);
        if lam > best {
            best = lam;
        }
        let mut k = dims.len();
        loop {
            if k == 0 {
                return best;
            }
            k -= 1;
            ell[k] += 1;
            if ell[k] <= dims[k] {
                mu_now[k] = mu[k][ell[k] - 1];
                break;
            }
            ell[k] = 1;
            mu_now[k] = mu[k][0];
        }
    }
}

/// Corner mode plus a radius-2 neighborhood; the fast path for large grids.
fn corner_lambda_max(grid: &Grid, speeds: &[f64], h_t: f64, mu: &[Vec<f64>]) -> f64 {
    let dims: Vec<usize> = grid.axes().iter().map(|a| a.n_cells() - 1).collect();
    let lo: Vec<usize> = dims.iter().map(|&n| n.saturating_sub(2).max(1)).collect();
    let mut best = f64::NEG_INFINITY;
    let mut ell: Vec<usize> = lo.clone();
    loop {
        let mu_now: Vec<f64> = ell.iter().enumerate().map(|(k, &l)| mu[k][l - 1]).collect();
        let lam = eigenvalue_from_mu(&mu_now, grid, speeds, h_t);
        if lam > best {
            best = lam;
        }
        let mut k = dims.len();
        loop {
            if k == 0 {
                return best;
            }
            k -= 1;
            ell[k] += 1;
            if ell[k] <= dims[k] {
                break;
            }
            ell[k] = lo[k];
        }
    }
}

/// Largest eigenvalue of the scheme operator on a uniform grid. The
/// exhaustive scan (the ground truth) runs up to [`FULL_SCAN_LIMIT`] modes;
/// larger grids fall back to the corner-neighborhood heuristic.
pub fn lambda_max_a(grid: &Grid, speeds: &[f64], h_t: f64) -> Result<f64> {
    require_uniform(grid)?;
    let total: usize = grid.axes().iter().map(|a| a.n_cells() - 1).product();
    let mu = mode_mu(grid);
    if total <= FULL_SCAN_LIMIT {
        Ok(scan_lambda_max(grid, speeds, h_t, &mu))
    } else {
        Ok(corner_lambda_max(grid, speeds, h_t, &mu))
    }
}

/// Spectral condition; returns (pass, λ_max, slack). Equality passes.
pub fn check_condition_spectral(
    grid: &Grid,
    speeds: &[f64],
    h_t: f64,
    eps0: f64,
) -> Result<(bool, f64, f64)> {
    let lambda = lambda_max_a(grid, speeds, h_t)?;
    let slack = (1.0 - eps0 * eps0) - h_t * h_t / 4.0 * lambda;
    Ok((slack >= 0.0, lambda, slack))
}

/// Closed-form sufficient time step: both conditions hold whenever
/// `h_t² Σ a_k²/h_k² ≤ min{3(1-ε), [3 - √(1+8ε₀²)]/2}`.
pub fn sufficient_dt(grid: &Grid, speeds: &[f64], eps: f64, eps0: f64) -> f64 {
    let bound = (3.0 * (1.0 - eps)).min(0.5 * (3.0 - (1.0 + 8.0 * eps0 * eps0).sqrt()));
    (bound / step_sum(grid, speeds)).sqrt()
}

/// Evaluates both conditions and the sufficient step for a given time step.
pub fn certificate(
    grid: &Grid,
    speeds: &[f64],
    h_t: f64,
    eps: f64,
    eps0: f64,
) -> Result<StabilityCertificate> {
    let (c1, s1) = check_condition_eps(grid, speeds, h_t, eps);
    let uniform = grid.axes().iter().all(|a| a.is_uniform());
    let (c2, lambda, s2, method) = if uniform {
        let (ok, lambda, slack) = check_condition_spectral(grid, speeds, h_t, eps0)?;
        (ok, lambda, slack, CertificateMethod::ExactSpectral)
    } else {
        // λ_max(A) ≤ 3/2 λ_max(-L_h) ≤ 3/2 Σ a_k² λ_max_k under condition 1.
        let lambda: f64 = 1.5
            * grid
                .axes()
                .iter()
                .zip(speeds)
                .map(|(axis, a)| a * a * lambda_max_k(axis))
                .sum::<f64>();
        let slack = (1.0 - eps0 * eps0) - h_t * h_t / 4.0 * lambda;
        (
            slack >= 0.0,
            lambda,
            slack,
            CertificateMethod::OperatorBound,
        )
    };
    Ok(StabilityCertificate {
        condition1_ok: c1,
        condition1_slack: s1,
        condition2_ok: c2,
        condition2_slack: s2,
        lambda_max: lambda,
        sufficient_dt: sufficient_dt(grid, speeds, eps, eps0),
        method,
    })
}

/// Conservative frozen-coefficient certificate for variable-coefficient runs:
/// the step sums use the per-node maximum of `Σ a_k²(x)/h_k²`. Advisory only;
/// the variable-coefficient stepper never rejects on its basis.
pub fn frozen_coefficient_certificate(
    grid: &Grid,
    speeds_sq: &[Field],
    h_t: f64,
    eps: f64,
    eps0: f64,
) -> StabilityCertificate {
    let inv_h2: Vec<f64> = grid
        .axes()
        .iter()
        .map(|axis| {
            let h = if axis.is_uniform() {
                axis.step_hint()
            } else {
                axis.min_step()
            };
            1.0 / (h * h)
        })
        .collect();
    let mut sum_max: f64 = 0.0;
    let n_nodes = grid.node_count();
    for lin in 0..n_nodes {
        let mut s = 0.0;
        for (k, a2) in speeds_sq.iter().enumerate() {
            s += a2.as_slice()[lin] * inv_h2[k];
        }
        sum_max = sum_max.max(s);
    }
    let lhs1 = h_t * h_t / 3.0 * sum_max;
    let s1 = (1.0 - eps) - lhs1;
    let lambda = 6.0 * sum_max;
    let s2 = (1.0 - eps0 * eps0) - h_t * h_t / 4.0 * lambda;
    let bound = (3.0 * (1.0 - eps)).min(0.5 * (3.0 - (1.0 + 8.0 * eps0 * eps0).sqrt()));
    StabilityCertificate {
        condition1_ok: s1 >= 0.0,
        condition1_slack: s1,
        condition2_ok: s2 >= 0.0,
        condition2_slack: s2,
        lambda_max: lambda,
        sufficient_dt: (bound / sum_max).sqrt(),
        method: CertificateMethod::OperatorBound,
    }
}

/// Discrete sine mode `Π_k sin(π l_k x_k / X_k)` on a uniform grid; the
/// boundary is set to exact zero.
pub fn sine_mode(grid: &Arc<Grid>, ell: &[usize]) -> Result<Field> {
    require_uniform(grid)?;
    if ell.len() != grid.dim() {
        return Err(SolverError::IndexOutOfRange(
            "mode index dimension mismatch".into(),
        ));
    }
    for (k, (&l, axis)) in ell.iter().zip(grid.axes()).enumerate() {
        if l < 1 || l > axis.n_cells() - 1 {
            return Err(SolverError::IndexOutOfRange(format!(
                "mode {l} out of range on axis {k}"
            )));
        }
    }
    let extents: Vec<f64> = grid.axes().iter().map(|a| a.extent()).collect();
    let ell: Vec<usize> = ell.to_vec();
    let mut field = Field::sample(grid, move |x| {
        x.iter()
            .zip(&ell)
            .zip(&extents)
            .map(|((xi, &l), xk)| (PI * l as f64 * xi / xk).sin())
            .product()
    });
    field.set_boundary(|_| 0.0);
    Ok(field)
}
