//! Difference operators on tensor-product grids and the batched tridiagonal
//! Numerov line solver.
//!
//! All operators act on full fields but only produce meaningful values on the
//! grid interior: second-difference outputs are zeroed on the boundary, the
//! Numerov average copies boundary values through, and the line solver pins
//! boundary nodes to supplied data. Line solves along one axis are mutually
//! independent and run in parallel; the result does not depend on scheduling.

use std::f64::consts::PI;
use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{ArrayView1, ArrayViewMut1, Axis as NdAxis, Dimension, Zip};

use crate::error::{Result, SolverError};
use crate::grid::{same_grid, Axis, Field, TimeMesh};

static LINE_SOLVES: AtomicU64 = AtomicU64::new(0);

/// Process-wide count of tridiagonal line solves, for explicitness checks.
pub fn line_solve_count() -> u64 {
    LINE_SOLVES.load(Ordering::Relaxed)
}

/// Minimal accepted diagonal-dominance margin `10γ - |α| - |β|` of a Numerov row.
pub const DOMINANCE_MARGIN: f64 = 1e-10;

/// Tridiagonal coefficients of the Numerov average on one axis, stored per
/// interior node and already divided by 12: `(α/12, 10γ/12, β/12)`.
#[derive(Debug, Clone)]
pub struct NumerovLineCoeffs {
    pub sub: Vec<f64>,
    pub diag: Vec<f64>,
    pub sup: Vec<f64>,
}

impl NumerovLineCoeffs {
    /// Coefficients for `axis`, validated for diagonal dominance.
    /// `axis_index` is only used in error reports.
    pub fn from_axis(axis: &Axis, axis_index: usize) -> Result<Self> {
        let n = axis.n_cells();
        let mut sub = Vec::with_capacity(n - 1);
        let mut diag = Vec::with_capacity(n - 1);
        let mut sup = Vec::with_capacity(n - 1);
        if axis.is_uniform() {
            sub.resize(n - 1, 1.0 / 12.0);
            diag.resize(n - 1, 10.0 / 12.0);
            sup.resize(n - 1, 1.0 / 12.0);
        } else {
            for l in 1..n {
                let hp = axis.step_before(l);
                let hn = axis.step_after(l);
                let hs = axis.half_step(l);
                let alpha = 2.0 - hn * hn / (hp * hs);
                let beta = 2.0 - hp * hp / (hn * hs);
                let gamma = 1.0 + (hn - hp) * (hn - hp) / (5.0 * hp * hn);
                sub.push(alpha / 12.0);
                diag.push(10.0 * gamma / 12.0);
                sup.push(beta / 12.0);
            }
        }
        Self::from_raw(axis_index, sub, diag, sup)
    }

    /// Builds from raw scaled diagonals, enforcing the dominance margin.
    pub fn from_raw(
        axis_index: usize,
        sub: Vec<f64>,
        diag: Vec<f64>,
        sup: Vec<f64>,
    ) -> Result<Self> {
        assert_eq!(sub.len(), diag.len());
        assert_eq!(sup.len(), diag.len());
        for i in 0..diag.len() {
            // Scaled by 12 so the margin matches the (α, 10γ, β) convention.
            let margin = 12.0 * (diag[i] - sub[i].abs() - sup[i].abs());
            if margin < DOMINANCE_MARGIN {
                return Err(SolverError::MeshQuality {
                    axis: axis_index,
                    node: i + 1,
                    margin,
                });
            }
        }
        Ok(NumerovLineCoeffs { sub, diag, sup })
    }

    /// Number of interior nodes on the line.
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }
}

/// Second-difference stencil on one line, accumulated through `add(l, value)`.
#[inline]
fn lambda_lane(axis: &Axis, w: &ArrayView1<'_, f64>, mut add: impl FnMut(usize, f64)) {
    let n = axis.n_cells();
    if axis.is_uniform() {
        let inv_h2 = 1.0 / (axis.step_hint() * axis.step_hint());
        for l in 1..n {
            add(l, (w[l + 1] - 2.0 * w[l] + w[l - 1]) * inv_h2);
        }
    } else {
        for l in 1..n {
            let hp = axis.step_before(l);
            let hn = axis.step_after(l);
            let hs = axis.half_step(l);
            add(l, ((w[l + 1] - w[l]) / hn - (w[l] - w[l - 1]) / hp) / hs);
        }
    }
}

#[inline]
fn numerov_lane(
    axis: &Axis,
    coeffs: &NumerovLineCoeffs,
    w: &ArrayView1<'_, f64>,
    out: &mut ArrayViewMut1<'_, f64>,
) {
    let n = axis.n_cells();
    out[0] = w[0];
    out[n] = w[n];
    if axis.is_uniform() {
        for l in 1..n {
            out[l] = (w[l - 1] + 10.0 * w[l] + w[l + 1]) / 12.0;
        }
    } else {
        for l in 1..n {
            out[l] = coeffs.sub[l - 1] * w[l - 1]
                + coeffs.diag[l - 1] * w[l]
                + coeffs.sup[l - 1] * w[l + 1];
        }
    }
}

/// Mask over the lane positions transverse to `k`: true where the lane's
/// cross-index is strictly interior on every remaining axis.
fn cross_interior_mask(field: &Field, k: usize) -> ndarray::ArrayD<bool> {
    let cells: Vec<usize> = field
        .grid()
        .axes()
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != k)
        .map(|(_, a)| a.n_cells())
        .collect();
    let shape: Vec<usize> = cells.iter().map(|&n| n + 1).collect();
    ndarray::ArrayD::from_shape_fn(ndarray::IxDyn(&shape), |idx| {
        idx.slice()
            .iter()
            .zip(&cells)
            .all(|(&i, &n)| i > 0 && i < n)
    })
}

/// Per-node scaling of an accumulated operator term.
pub enum CoeffScale<'a> {
    Const(f64),
    PerNode(&'a Field),
}

/// Adds `scale * Λ_k w` to `acc` on interior nodes; boundary rows untouched.
pub fn accumulate_lambda_k(
    acc: &mut Field,
    w: &Field,
    k: usize,
    scale: CoeffScale<'_>,
) -> Result<()> {
    same_grid(acc, w)?;
    let grid = w.grid().clone();
    let axis = grid.axis(k)?.clone();
    let mask = cross_interior_mask(w, k);
    match scale {
        CoeffScale::Const(c) => {
            Zip::from(acc.data_mut().lanes_mut(NdAxis(k)))
                .and(w.data().lanes(NdAxis(k)))
                .and(&mask)
                .par_for_each(|mut a, w_lane, &interior| {
                    if interior {
                        lambda_lane(&axis, &w_lane, |l, v| a[l] += c * v);
                    }
                });
        }
        CoeffScale::PerNode(s) => {
            same_grid(w, s)?;
            Zip::from(acc.data_mut().lanes_mut(NdAxis(k)))
                .and(w.data().lanes(NdAxis(k)))
                .and(s.data().lanes(NdAxis(k)))
                .and(&mask)
                .par_for_each(|mut a, w_lane, s_lane, &interior| {
                    if interior {
                        lambda_lane(&axis, &w_lane, |l, v| a[l] += s_lane[l] * v);
                    }
                });
        }
    }
    Ok(())
}

/// Standard second difference `Λ_k w`; zero on the boundary.
pub fn apply_lambda_k(w: &Field, k: usize) -> Result<Field> {
    let mut out = Field::zeros(w.grid());
    accumulate_lambda_k(&mut out, w, k, CoeffScale::Const(1.0))?;
    Ok(out)
}

/// Numerov average `s_kN w`; boundary values copied through.
pub fn apply_numerov_k(w: &Field, k: usize) -> Result<Field> {
    let grid = w.grid().clone();
    let axis = grid.axis(k)?.clone();
    let coeffs = NumerovLineCoeffs::from_axis(&axis, k)?;
    let mask = cross_interior_mask(w, k);
    let mut out = Field::zeros(w.grid());
    Zip::from(out.data_mut().lanes_mut(NdAxis(k)))
        .and(w.data().lanes(NdAxis(k)))
        .and(&mask)
        .par_for_each(|mut o, w_lane, &interior| {
            if interior {
                numerov_lane(&axis, &coeffs, &w_lane, &mut o);
            } else {
                o.assign(&w_lane);
            }
        });
    Ok(out)
}

fn check_speeds(dim: usize, speeds: &[f64]) -> Result<()> {
    if speeds.len() != dim {
        return Err(SolverError::InvalidConfig(format!(
            "{} wave speeds given for a {dim}-d grid",
            speeds.len()
        )));
    }
    if let Some(a) = speeds.iter().find(|a| **a <= 0.0 || !a.is_finite()) {
        return Err(SolverError::InvalidConfig(format!(
            "wave speeds must be positive, got {a}"
        )));
    }
    Ok(())
}

/// `L_h w = Σ_k a_k² Λ_k w`; zero on the boundary.
pub fn apply_lh(w: &Field, speeds: &[f64]) -> Result<Field> {
    check_speeds(w.grid().dim(), speeds)?;
    let mut out = Field::zeros(w.grid());
    for (k, a) in speeds.iter().enumerate() {
        accumulate_lambda_k(&mut out, w, k, CoeffScale::Const(a * a))?;
    }
    Ok(out)
}

/// Variable-coefficient `L_h w = Σ_k a_k²(x) Λ_k w` with sampled squared speeds.
pub fn apply_lh_variable(w: &Field, speeds_sq: &[Field]) -> Result<Field> {
    if speeds_sq.len() != w.grid().dim() {
        return Err(SolverError::InvalidConfig(format!(
            "{} speed fields given for a {}-d grid",
            speeds_sq.len(),
            w.grid().dim()
        )));
    }
    let mut out = Field::zeros(w.grid());
    for (k, a2) in speeds_sq.iter().enumerate() {
        accumulate_lambda_k(&mut out, w, k, CoeffScale::PerNode(a2))?;
    }
    Ok(out)
}

/// Tridiagonal elimination without pivoting; dominance was checked at
/// coefficient construction. `d` holds the interior right-hand side and is
/// overwritten with the solution.
fn thomas_in_place(coeffs: &NumerovLineCoeffs, d: &mut [f64], scratch: &mut Vec<f64>) {
    LINE_SOLVES.fetch_add(1, Ordering::Relaxed);
    let n = d.len();
    scratch.clear();
    scratch.resize(n, 0.0);
    scratch[0] = coeffs.sup[0] / coeffs.diag[0];
    d[0] /= coeffs.diag[0];
    for i in 1..n {
        let denom = coeffs.diag[i] - coeffs.sub[i] * scratch[i - 1];
        scratch[i] = coeffs.sup[i] / denom;
        d[i] = (d[i] - coeffs.sub[i] * d[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        d[i] -= scratch[i] * d[i + 1];
    }
}

/// Solves `s_kN w = rhs` on one line with `w` pinned to `left_bc`/`right_bc`
/// at the line ends. Returns the interior solution values.
pub fn solve_numerov_line(
    coeffs: &NumerovLineCoeffs,
    rhs: &[f64],
    left_bc: f64,
    right_bc: f64,
) -> Result<Vec<f64>> {
    if rhs.len() != coeffs.len() || rhs.is_empty() {
        return Err(SolverError::IndexOutOfRange(format!(
            "line solve with {} rhs values against {} coefficient rows",
            rhs.len(),
            coeffs.len()
        )));
    }
    let n = rhs.len();
    let mut d = rhs.to_vec();
    d[0] -= coeffs.sub[0] * left_bc;
    d[n - 1] -= coeffs.sup[n - 1] * right_bc;
    let mut scratch = Vec::new();
    thomas_in_place(coeffs, &mut d, &mut scratch);
    Ok(d)
}

/// Applies [`solve_numerov_line`] to every axis-`k` line of the grid.
///
/// `rhs` supplies interior right-hand sides; `bc` supplies the values taken
/// on every boundary node of the output (lines lying entirely on the boundary
/// are copied from `bc` without a solve). Lines are independent and solved in
/// parallel; the output is identical for any execution order.
pub fn batched_solve_numerov(k: usize, rhs: &Field, bc: &Field) -> Result<Field> {
    same_grid(rhs, bc)?;
    let grid = rhs.grid().clone();
    let axis = grid.axis(k)?.clone();
    let coeffs = NumerovLineCoeffs::from_axis(&axis, k)?;
    let mask = cross_interior_mask(rhs, k);
    let n = axis.n_cells();
    let mut out = Field::zeros(rhs.grid());
    Zip::from(out.data_mut().lanes_mut(NdAxis(k)))
        .and(rhs.data().lanes(NdAxis(k)))
        .and(bc.data().lanes(NdAxis(k)))
        .and(&mask)
        .par_for_each(|mut o, r, b, &interior| {
            if !interior {
                o.assign(&b);
                return;
            }
            let mut d: Vec<f64> = (1..n).map(|l| r[l]).collect();
            d[0] -= coeffs.sub[0] * b[0];
            d[n - 2] -= coeffs.sup[n - 2] * b[n];
            let mut scratch = Vec::new();
            thomas_in_place(&coeffs, &mut d, &mut scratch);
            o[0] = b[0];
            o[n] = b[n];
            for l in 1..n {
                o[l] = d[l - 1];
            }
        });
    Ok(out)
}

/// Largest eigenvalue of `-Λ_k` on the axis: exact sine formula when uniform,
/// power iteration (tolerance 1e-10, at most 10000 iterations) otherwise.
pub fn lambda_max_k(axis: &Axis) -> f64 {
    let n = axis.n_cells();
    if axis.is_uniform() {
        let h = axis.step_hint();
        let s = (PI * (n as f64 - 1.0) / (2.0 * n as f64)).sin();
        return 4.0 / (h * h) * s * s;
    }
    let size = n - 1;
    // Start from the highest-frequency sign pattern with a small tilt.
    let mut v: Vec<f64> = (0..size)
        .map(|i| {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            sign * (1.0 + 0.01 * (i + 1) as f64 / size as f64)
        })
        .collect();
    let mut y = vec![0.0; size];
    let mut lambda = 0.0;
    for _ in 0..10_000 {
        for l in 1..n {
            let hp = axis.step_before(l);
            let hn = axis.step_after(l);
            let hs = axis.half_step(l);
            let wm = if l > 1 { v[l - 2] } else { 0.0 };
            let wp = if l < n - 1 { v[l] } else { 0.0 };
            let w0 = v[l - 1];
            y[l - 1] = -((wp - w0) / hn - (w0 - wm) / hp) / hs;
        }
        // Rayleigh quotient in the half-step-weighted inner product where
        // -Λ_k is self-adjoint.
        let mut num = 0.0;
        let mut den = 0.0;
        for l in 1..n {
            let hs = axis.half_step(l);
            num += hs * y[l - 1] * v[l - 1];
            den += hs * v[l - 1] * v[l - 1];
        }
        let next = num / den;
        let sup = y.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for (vi, yi) in v.iter_mut().zip(&y) {
            *vi = yi / sup;
        }
        if (next - lambda).abs() <= 1e-10 * next.abs() {
            return next;
        }
        lambda = next;
    }
    lambda
}

/// Per-level stencil data of a (possibly non-uniform) time mesh.
#[derive(Debug, Clone, Copy)]
pub struct TimeStencil {
    /// Step `h_{t m}` into level `m`.
    pub h_prev: f64,
    /// Step `h_{t(m+1)}` out of level `m`.
    pub h_next: f64,
    /// Half-step `(h_prev + h_next)/2`.
    pub h_star: f64,
    /// `Λ_t` weights on `(y^{m-1}, y^m, y^{m+1})`.
    pub lambda: (f64, f64, f64),
    /// `s_tN` weights `(α_t, 10γ_t, β_t)/12` on the same levels.
    pub numerov: (f64, f64, f64),
    /// Quadratic correction `(h_next² - h_next h_prev + h_prev²)/12`.
    pub quad_correction: f64,
    /// Drift coefficient `(h_next - h_prev)/3`.
    pub drift: f64,
    /// True iff the two steps are bitwise equal (uniform collapse).
    pub uniform: bool,
}

/// Stencil at level `m` of the mesh, `1 <= m <= M-1`.
pub fn time_stencil_at(mesh: &TimeMesh, m: usize) -> Result<TimeStencil> {
    if m < 1 || m >= mesh.n_steps() {
        return Err(SolverError::IndexOutOfRange(format!(
            "time level {m} has no three-point stencil on a {}-step mesh",
            mesh.n_steps()
        )));
    }
    let (hp, hn) = if mesh.is_uniform() {
        (mesh.step_hint(), mesh.step_hint())
    } else {
        (mesh.step(m), mesh.step(m + 1))
    };
    let hs = 0.5 * (hp + hn);
    if hp == hn {
        let h2 = hp * hp;
        return Ok(TimeStencil {
            h_prev: hp,
            h_next: hn,
            h_star: hp,
            lambda: (1.0 / h2, -2.0 / h2, 1.0 / h2),
            numerov: (1.0 / 12.0, 10.0 / 12.0, 1.0 / 12.0),
            quad_correction: h2 / 12.0,
            drift: 0.0,
            uniform: true,
        });
    }
    let alpha = 2.0 - hn * hn / (hp * hs);
    let beta = 2.0 - hp * hp / (hn * hs);
    let gamma = 1.0 + (hn - hp) * (hn - hp) / (5.0 * hp * hn);
    Ok(TimeStencil {
        h_prev: hp,
        h_next: hn,
        h_star: hs,
        lambda: (
            1.0 / (hs * hp),
            -(1.0 / hn + 1.0 / hp) / hs,
            1.0 / (hs * hn),
        ),
        numerov: (alpha / 12.0, 10.0 * gamma / 12.0, beta / 12.0),
        quad_correction: (hn * hn - hn * hp + hp * hp) / 12.0,
        drift: (hn - hp) / 3.0,
        uniform: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    fn line_grid(n: usize) -> std::sync::Arc<Grid> {
        Grid::uniform(&[1.0], &[n]).unwrap()
    }

    #[test]
    fn lambda_uniform_point_value() {
        // h = 0.25, central bump: second difference is -2/h² = -32.
        let grid = line_grid(4);
        let mut w = Field::zeros(&grid);
        w.set(&[2], 1.0);
        let out = apply_lambda_k(&w, 0).unwrap();
        assert_eq!(out.value(&[2]), -32.0);
        assert_eq!(out.value(&[0]), 0.0);
        assert_eq!(out.value(&[4]), 0.0);
    }

    #[test]
    fn lambda_annihilates_affine() {
        for axis in [
            Axis::uniform(1.0, 6).unwrap(),
            Axis::graded(1.0, 6, 1.4).unwrap(),
        ] {
            let grid = Grid::new(vec![axis]).unwrap();
            let w = Field::sample(&grid, |x| 3.0 * x[0] - 0.7);
            let out = apply_lambda_k(&w, 0).unwrap();
            for l in 1..6 {
                assert!(out.value(&[l]).abs() < 1e-12, "l={l}: {}", out.value(&[l]));
            }
        }
    }

    #[test]
    fn lambda_exact_on_quadratics() {
        let grid = line_grid(8);
        let w = Field::sample(&grid, |x| x[0] * x[0]);
        let out = apply_lambda_k(&w, 0).unwrap();
        for l in 1..8 {
            assert!((out.value(&[l]) - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn lambda_rejects_bad_axis() {
        let grid = line_grid(4);
        let w = Field::zeros(&grid);
        assert!(matches!(
            apply_lambda_k(&w, 1),
            Err(SolverError::IndexOutOfRange(_))
        ));
    }

    #[test]
    fn numerov_single_interior_weight() {
        let grid = line_grid(2);
        let mut w = Field::zeros(&grid);
        w.set(&[1], 1.0);
        let out = apply_numerov_k(&w, 0).unwrap();
        assert!((out.value(&[1]) - 10.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn numerov_preserves_constants() {
        let axis = Axis::graded(2.0, 7, 1.3).unwrap();
        let grid = Grid::new(vec![axis]).unwrap();
        let w = Field::sample(&grid, |_| 4.25);
        let out = apply_numerov_k(&w, 0).unwrap();
        for l in 0..=7 {
            assert!((out.value(&[l]) - 4.25).abs() < 1e-13);
        }
    }

    #[test]
    fn numerov_nonuniform_coefficients() {
        // Steps (1, 2): α = -2/3, γ = 11/10, and β = 5/3 from α + 10γ + β = 12.
        let axis = Axis::from_nodes(vec![0.0, 1.0, 3.0]).unwrap();
        let c = NumerovLineCoeffs::from_axis(&axis, 0).unwrap();
        assert!((12.0 * c.sub[0] - (-2.0 / 3.0)).abs() < 1e-14);
        assert!((12.0 * c.diag[0] - 11.0).abs() < 1e-14);
        assert!((12.0 * c.sup[0] - 5.0 / 3.0).abs() < 1e-14);
        assert!((12.0 * (c.sub[0] + c.diag[0] + c.sup[0]) - 12.0).abs() < 1e-13);
    }

    #[test]
    fn numerov_identity_with_lambda_uniform() {
        // s_kN = I + (h²/12) Λ_k on uniform axes.
        let grid = line_grid(9);
        let w = Field::sample(&grid, |x| (7.0 * x[0]).sin() + 0.3 * x[0]);
        let h = grid.axis(0).unwrap().step_hint();
        let s = apply_numerov_k(&w, 0).unwrap();
        let lam = apply_lambda_k(&w, 0).unwrap();
        for l in 0..=9 {
            let rhs = w.value(&[l]) + h * h / 12.0 * lam.value(&[l]);
            assert!((s.value(&[l]) - rhs).abs() < 1e-14);
        }
    }

    #[test]
    fn lh_exact_on_quadratics_up_to_3d() {
        // Σ a_k² Λ_k reproduces the Laplacian of quadratics exactly.
        let grid1 = Grid::uniform(&[1.0], &[5]).unwrap();
        let w1 = Field::sample(&grid1, |x| x[0] * x[0]);
        let out1 = apply_lh(&w1, &[1.0]).unwrap();
        assert!((out1.value(&[2]) - 2.0).abs() < 1e-12);

        let grid2 = Grid::uniform(&[1.0, 1.0], &[4, 4]).unwrap();
        let w2 = Field::sample(&grid2, |x| x[0] * x[0] + x[1] * x[1]);
        let out2 = apply_lh(&w2, &[1.0, 1.0]).unwrap();
        for i in 1..4 {
            for j in 1..4 {
                assert!((out2.value(&[i, j]) - 4.0).abs() < 1e-12);
            }
        }

        let grid3 = Grid::uniform(&[1.0, 1.0, 1.0], &[3, 3, 3]).unwrap();
        let w3 = Field::sample(&grid3, |x| x.iter().map(|v| v * v).sum());
        let out3 = apply_lh(&w3, &[1.0, 2.0, 1.0]).unwrap();
        // a = (1, 2, 1): Σ a_k² ∂_k² = 2 + 8 + 2.
        assert!((out3.value(&[1, 1, 1]) - 12.0).abs() < 1e-12);

        let zero = apply_lh(&Field::zeros(&grid2), &[1.0, 1.0]).unwrap();
        assert_eq!(zero.sup_norm(), 0.0);
        assert!(matches!(
            apply_lh(&w2, &[1.0, 0.0]),
            Err(SolverError::InvalidConfig(_))
        ));
    }

    #[test]
    fn numerov_exact_on_quadratics_3d() {
        let grid = Grid::uniform(&[1.0, 1.0, 1.0], &[4, 4, 4]).unwrap();
        let w = Field::sample(&grid, |x| 1.5 + x[0] * x[0] - 2.0 * x[2]);
        // The average along axis 1 leaves a function affine in x2 untouched.
        let out = apply_numerov_k(&w, 1).unwrap();
        for i in 0..=4 {
            for j in 0..=4 {
                for k in 0..=4 {
                    assert!((out.value(&[i, j, k]) - w.value(&[i, j, k])).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn single_node_solve_closed_form() {
        // (w0 + 10 w1 + w2)/12 = r with zero bcs gives w1 = 12r/10.
        let axis = Axis::uniform(1.0, 2).unwrap();
        let c = NumerovLineCoeffs::from_axis(&axis, 0).unwrap();
        let w = solve_numerov_line(&c, &[1.0], 0.0, 0.0).unwrap();
        assert!((w[0] - 1.2).abs() < 1e-14);
    }

    #[test]
    fn solve_then_apply_recovers_rhs() {
        let axis = Axis::graded(1.0, 12, 1.25).unwrap();
        let grid = Grid::new(vec![axis.clone()]).unwrap();
        let w = Field::sample(&grid, |x| (3.0 * x[0]).cos());
        let s = apply_numerov_k(&w, 0).unwrap();
        let c = NumerovLineCoeffs::from_axis(&axis, 0).unwrap();
        let rhs: Vec<f64> = (1..12).map(|l| s.value(&[l])).collect();
        let sol = solve_numerov_line(&c, &rhs, w.value(&[0]), w.value(&[12])).unwrap();
        for (l, v) in sol.iter().enumerate() {
            assert!((v - w.value(&[l + 1])).abs() < 1e-13);
        }
    }

    #[test]
    fn constants_are_solve_fixed_points() {
        let axis = Axis::uniform(1.0, 6).unwrap();
        let c = NumerovLineCoeffs::from_axis(&axis, 0).unwrap();
        let sol = solve_numerov_line(&c, &[1.0; 5], 1.0, 1.0).unwrap();
        for v in sol {
            assert!((v - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn solve_residual_is_tiny() {
        let axis = Axis::graded(1.0, 20, 1.15).unwrap();
        let c = NumerovLineCoeffs::from_axis(&axis, 0).unwrap();
        let rhs: Vec<f64> = (0..19)
            .map(|i| ((i * 37 % 11) as f64 - 5.0) / 7.0)
            .collect();
        let (lb, rb) = (0.4, -1.1);
        let w = solve_numerov_line(&c, &rhs, lb, rb).unwrap();
        let scale = rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..19 {
            let wm = if i == 0 { lb } else { w[i - 1] };
            let wp = if i == 18 { rb } else { w[i + 1] };
            let lhs = c.sub[i] * wm + c.diag[i] * w[i] + c.sup[i] * wp;
            assert!((lhs - rhs[i]).abs() <= 1e-13 * scale.max(1.0));
        }
    }

    #[test]
    fn dominance_violation_is_reported() {
        let err = NumerovLineCoeffs::from_raw(3, vec![0.5, 0.5], vec![0.9, 0.9], vec![0.5, 0.5])
            .unwrap_err();
        match err {
            SolverError::MeshQuality { axis, node, margin } => {
                assert_eq!(axis, 3);
                assert_eq!(node, 1);
                assert!(margin < 0.0);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn batched_matches_row_loop() {
        let grid = Grid::uniform(&[1.0, 1.0], &[5, 4]).unwrap();
        let rhs = Field::sample(&grid, |x| x[0] + 2.0 * x[1] * x[1]);
        let bc = Field::sample(&grid, |x| x[0] - x[1]);
        let batched = batched_solve_numerov(1, &rhs, &bc).unwrap();

        let axis = grid.axis(1).unwrap().clone();
        let c = NumerovLineCoeffs::from_axis(&axis, 1).unwrap();
        for i in 1..5 {
            let line: Vec<f64> = (1..4).map(|j| rhs.value(&[i, j])).collect();
            let sol = solve_numerov_line(&c, &line, bc.value(&[i, 0]), bc.value(&[i, 4])).unwrap();
            for j in 1..4 {
                assert_eq!(batched.value(&[i, j]), sol[j - 1]);
            }
        }
        // Boundary rows come from bc verbatim.
        for j in 0..=4 {
            assert_eq!(batched.value(&[0, j]), bc.value(&[0, j]));
            assert_eq!(batched.value(&[5, j]), bc.value(&[5, j]));
        }
    }

    #[test]
    fn numerov_inverse_is_fourth_order() {
        // s_kN⁻¹ Λ_k u approximates ∂²u with O(h⁴) error on uniform axes.
        let err_for = |n: usize| -> f64 {
            let grid = line_grid(n);
            let u = Field::sample(&grid, |x| (PI * x[0]).sin());
            let rhs = apply_lambda_k(&u, 0).unwrap();
            let bc = Field::sample(&grid, |x| -PI * PI * (PI * x[0]).sin());
            let sol = batched_solve_numerov(0, &rhs, &bc).unwrap();
            let mut e = 0.0f64;
            for l in 1..n {
                let x = grid.axis(0).unwrap().nodes()[l];
                e = e.max((sol.value(&[l]) + PI * PI * (PI * x).sin()).abs());
            }
            e
        };
        let (e1, e2) = (err_for(16), err_for(32));
        let ratio = e1 / e2;
        assert!(
            (10.0..24.0).contains(&ratio),
            "expected ~16x error reduction, got {ratio} ({e1} vs {e2})"
        );
    }

    #[test]
    fn serial_and_parallel_solves_agree_bitwise() {
        let grid = Grid::uniform(&[1.0, 1.0], &[16, 16]).unwrap();
        let rhs = Field::sample(&grid, |x| (5.0 * x[0]).sin() * (3.0 * x[1]).cos());
        let bc = Field::sample(&grid, |x| x[0] * x[1]);
        let pool1 = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let serial = pool1.install(|| batched_solve_numerov(0, &rhs, &bc).unwrap());
        let parallel = batched_solve_numerov(0, &rhs, &bc).unwrap();
        assert_eq!(serial.as_slice(), parallel.as_slice());
    }

    #[test]
    fn lambda_max_uniform_formula_and_power_iteration_agree() {
        // A nearly-uniform axis must give nearly the uniform λ_max.
        let uniform = Axis::uniform(1.0, 16).unwrap();
        let exact = lambda_max_k(&uniform);
        let h = 1.0 / 16.0;
        let s = (PI * 15.0 / 32.0).sin();
        assert!((exact - 4.0 / (h * h) * s * s).abs() < 1e-12 * exact);

        let mut nodes: Vec<f64> = (0..=16).map(|l| l as f64 * h).collect();
        nodes[8] += 1e-7; // break uniformity detection
        *nodes.last_mut().unwrap() = 1.0;
        let bumpy = Axis::from_nodes(nodes).unwrap();
        assert!(!bumpy.is_uniform());
        let estimated = lambda_max_k(&bumpy);
        assert!(
            (estimated - exact).abs() < 1e-3 * exact,
            "power iteration {estimated} vs sine formula {exact}"
        );
    }

    #[test]
    fn time_stencil_uniform_collapse() {
        let mesh = TimeMesh::uniform(1.0, 10).unwrap();
        let st = time_stencil_at(&mesh, 4).unwrap();
        assert!(st.uniform);
        assert_eq!(st.drift, 0.0);
        assert!((st.quad_correction - 0.01 / 12.0).abs() < 1e-18);
        assert_eq!(st.numerov, (1.0 / 12.0, 10.0 / 12.0, 1.0 / 12.0));
    }

    #[test]
    fn time_stencil_example_pair() {
        // Steps (1, 2): c = (4 - 2 + 1)/12 = 0.25, d = 1/3.
        let mesh = TimeMesh::from_nodes(vec![0.0, 1.0, 3.0]).unwrap();
        let st = time_stencil_at(&mesh, 1).unwrap();
        assert!((st.quad_correction - 0.25).abs() < 1e-15);
        assert!((st.drift - 1.0 / 3.0).abs() < 1e-15);
        // Numerov identity α + 10γ + β = 12.
        let sum = 12.0 * (st.numerov.0 + st.numerov.1 + st.numerov.2);
        assert!((sum - 12.0).abs() < 1e-13);
    }

    #[test]
    fn time_stencil_rejects_range() {
        let mesh = TimeMesh::uniform(1.0, 4).unwrap();
        assert!(time_stencil_at(&mesh, 0).is_err());
        assert!(time_stencil_at(&mesh, 4).is_err());
    }

    #[test]
    fn line_solves_are_counted() {
        let grid = Grid::uniform(&[1.0, 1.0], &[4, 4]).unwrap();
        let rhs = Field::sample(&grid, |x| x[0]);
        let bc = Field::zeros(&grid);
        let before = line_solve_count();
        let _ = batched_solve_numerov(0, &rhs, &bc).unwrap();
        assert!(line_solve_count() >= before + 3);
    }
}
