//! Mesh inner products and norms, the scheme's self-adjoint spatial operator,
//! the discrete energy conservation ledger, and error norms against exact
//! solutions.
//!
//! Everything here works on zero-boundary fields, matching the hypotheses of
//! the energy analysis (`g = 0` and `f` vanishing on the boundary). The
//! diagnostics refuse inhomogeneous boundary data instead of silently
//! subtracting a lift.

use crate::error::{Result, SolverError};
use crate::grid::{same_grid, Field, Grid};
use crate::problems::SpaceTimeFn;
use crate::stencil::{
    accumulate_lambda_k, apply_lambda_k, apply_lh, apply_lh_variable, apply_numerov_k,
    batched_solve_numerov, CoeffScale,
};

use std::sync::Arc;

/// Deterministic pairwise sum with a fixed reduction tree.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        let mut s = 0.0;
        for &x in xs {
            s += x;
        }
        return s;
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

fn require_zero_boundary(v: &Field, what: &str) -> Result<()> {
    if v.boundary_is_zero() {
        Ok(())
    } else {
        Err(SolverError::DiagnosticUnavailable(format!(
            "{what} requires zero boundary values"
        )))
    }
}

/// Mesh inner product `(v, w)_h` over interior nodes with the natural
/// quadrature weight (step products on uniform grids, half-step products on
/// non-uniform ones). Both fields must vanish on the boundary.
pub fn inner_h(v: &Field, w: &Field) -> Result<f64> {
    same_grid(v, w)?;
    require_zero_boundary(v, "inner product")?;
    require_zero_boundary(w, "inner product")?;
    let grid = v.grid();
    let vd = v.as_slice();
    let wd = w.as_slice();
    let mut terms = Vec::with_capacity(grid.interior_count());
    grid.visit_nodes(|lin, idx, _| {
        if grid.is_interior(idx) {
            terms.push(grid.interior_weight(idx) * (vd[lin] * wd[lin]));
        }
    });
    Ok(pairwise_sum(&terms))
}

/// `‖v‖_h²`.
pub fn norm_h_sq(v: &Field) -> Result<f64> {
    inner_h(v, v)
}

/// The spatial operator that governs stability:
/// `(I + h_t²L_h/12)(-Σ_k a_k² s_kN⁻¹ Λ_k) v` with zero-boundary line solves.
pub fn apply_a(v: &Field, speeds: &[f64], h_t: f64) -> Result<Field> {
    require_zero_boundary(v, "operator application")?;
    let zero_bc = Field::zeros(v.grid());
    let mut acc = Field::zeros(v.grid());
    for (k, a) in speeds.iter().enumerate() {
        let rhs = apply_lambda_k(v, k)?;
        let vkk = batched_solve_numerov(k, &rhs, &zero_bc)?;
        let a2 = a * a;
        for (o, s) in acc.as_slice_mut().iter_mut().zip(vkk.as_slice()) {
            *o -= a2 * s;
        }
    }
    let lacc = apply_lh(&acc, speeds)?;
    let c = h_t * h_t / 12.0;
    let mut out = acc;
    for (o, l) in out.as_slice_mut().iter_mut().zip(lacc.as_slice()) {
        *o += c * l;
    }
    Ok(out)
}

/// `‖v‖²` in the norm generated by [`apply_a`].
pub fn norm_a_sq(v: &Field, speeds: &[f64], h_t: f64) -> Result<f64> {
    inner_h(&apply_a(v, speeds, h_t)?, v)
}

/// Product of the per-axis Numerov averages over all axes (ascending order).
pub fn apply_sbar_n(v: &Field) -> Result<Field> {
    let mut out = v.clone();
    for k in 0..v.grid().dim() {
        out = apply_numerov_k(&out, k)?;
    }
    Ok(out)
}

/// `-Σ_k a_k² (Π_{j≠k} s_jN) Λ_k v`; the compact form of the spatial part
/// written without inverse operators.
pub fn apply_a_bar_n(v: &Field, speeds: &[f64]) -> Result<Field> {
    let mut acc = Field::zeros(v.grid());
    for (k, a) in speeds.iter().enumerate() {
        let mut term = apply_lambda_k(v, k)?;
        for j in 0..v.grid().dim() {
            if j != k {
                term = apply_numerov_k(&term, j)?;
            }
        }
        let a2 = a * a;
        for (o, s) in acc.as_slice_mut().iter_mut().zip(term.as_slice()) {
            *o -= a2 * s;
        }
    }
    Ok(acc)
}

/// `(I + h_t²L_h/12)` applied to [`apply_a_bar_n`].
pub fn apply_a_tilde_n(v: &Field, speeds: &[f64], h_t: f64) -> Result<Field> {
    let abar = apply_a_bar_n(v, speeds)?;
    let labar = apply_lh(&abar, speeds)?;
    let c = h_t * h_t / 12.0;
    let mut out = abar;
    for (o, l) in out.as_slice_mut().iter_mut().zip(labar.as_slice()) {
        *o += c * l;
    }
    Ok(out)
}

/// Backward time difference `(v_curr - v_prev)/h`.
pub fn backward_difference(v_prev: &Field, v_curr: &Field, h: f64) -> Field {
    let mut out = v_curr.clone();
    for (o, p) in out.as_slice_mut().iter_mut().zip(v_prev.as_slice()) {
        *o = (*o - p) / h;
    }
    out
}

/// Backward time average `(v_curr + v_prev)/2`.
pub fn backward_average(v_prev: &Field, v_curr: &Field) -> Field {
    let mut out = v_curr.clone();
    for (o, p) in out.as_slice_mut().iter_mut().zip(v_prev.as_slice()) {
        *o = 0.5 * (*o + p);
    }
    out
}

/// The three terms of the discrete energy at one level:
/// kinetic `‖δ̄_t v‖_h²`, correction `-(h_t²/4)‖δ̄_t v‖_A²`, and potential
/// `‖s̄_t v‖_A²`, computed from two consecutive levels.
pub fn energy_at(
    v_prev: &Field,
    v_curr: &Field,
    speeds: &[f64],
    h_t: f64,
) -> Result<(f64, f64, f64)> {
    require_zero_boundary(v_prev, "energy evaluation")?;
    require_zero_boundary(v_curr, "energy evaluation")?;
    let diff = backward_difference(v_prev, v_curr, h_t);
    let avg = backward_average(v_prev, v_curr);
    let kinetic = norm_h_sq(&diff)?;
    let correction = -h_t * h_t / 4.0 * norm_a_sq(&diff, speeds, h_t)?;
    let potential = norm_a_sq(&avg, speeds, h_t)?;
    Ok((kinetic, correction, potential))
}

/// Which seed the conservation law is checked against: the level-pattern form
/// (A-norm correction at level 1) or the literal plain-norm variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedForm {
    Pattern,
    Literal,
}

#[derive(Debug, Clone)]
pub struct EnergyRow {
    pub level: usize,
    pub time: f64,
    pub kinetic: f64,
    pub correction: f64,
    pub potential: f64,
    /// Accumulated work of the free terms, `2 I_{h_t}^{m-1}(f* + β*, δ̊_t v)_h`.
    pub work: f64,
    /// Law residual against the pattern seed.
    pub residual: f64,
}

impl EnergyRow {
    pub fn total(&self) -> f64 {
        self.kinetic + self.correction + self.potential
    }
}

/// Per-level energy ledger of a run with homogeneous boundary data.
#[derive(Debug, Clone)]
pub struct EnergyLedger {
    pub rows: Vec<EnergyRow>,
    /// Seed with the A-norm correction at level 1 (matches the level pattern).
    pub seed_pattern: f64,
    /// Seed with the plain-norm correction at level 1.
    pub seed_literal: f64,
    /// Seed evaluated from the initial data,
    /// `(A v⁰, s_t v⁰)_h + (u_{1*}, δ_t v⁰)_h + (h_t/2)(φ⁰, δ_t v⁰)_h`.
    pub seed_from_data: f64,
}

impl EnergyLedger {
    /// Residuals of the conservation law against the chosen seed.
    pub fn residuals(&self, seed: SeedForm) -> Vec<f64> {
        let s = match seed {
            SeedForm::Pattern => self.seed_pattern,
            SeedForm::Literal => self.seed_literal,
        };
        self.rows.iter().map(|r| r.total() - s - r.work).collect()
    }

    /// Seed form whose residuals are smaller in the maximum norm.
    pub fn matched_seed(&self) -> SeedForm {
        let max = |v: Vec<f64>| v.into_iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if max(self.residuals(SeedForm::Pattern)) <= max(self.residuals(SeedForm::Literal)) {
            SeedForm::Pattern
        } else {
            SeedForm::Literal
        }
    }

    /// Largest relative drift of the total energy across levels.
    pub fn relative_drift(&self) -> f64 {
        let e1 = self.rows.first().map(|r| r.total()).unwrap_or(0.0);
        let scale = e1.abs().max(1e-300);
        self.rows
            .iter()
            .map(|r| (r.total() - e1).abs() / scale)
            .fold(0.0, f64::max)
    }
}

/// Both sides of the stability bound accumulated over a run, together with
/// the alternative (Numerov-product-weighted) form.
#[derive(Debug, Clone)]
pub struct StabilityBoundCheck {
    pub lhs_max: f64,
    pub rhs: f64,
    pub alt_lhs_max: f64,
    pub alt_rhs: f64,
}

impl StabilityBoundCheck {
    pub fn holds(&self) -> bool {
        self.lhs_max <= self.rhs && self.alt_lhs_max <= self.alt_rhs
    }
}

/// Builds the ledger and the stability-bound accumulators during a run.
pub struct EnergyTracker {
    speeds: Vec<f64>,
    h_t: f64,
    eps0: f64,
    rows: Vec<EnergyRow>,
    seed_pattern: f64,
    seed_literal: f64,
    seed_from_data: f64,
    work_sum: f64,
    lhs_max: f64,
    rhs_first: f64,
    l1_sum: f64,
    alt_lhs_max: f64,
    alt_rhs_first: f64,
    alt_l1_sum: f64,
}

impl EnergyTracker {
    /// Seeds the tracker from the first two levels. `u1h` is the first-step
    /// velocity data and `phi0` the first-step free term `f*⁰ + β*⁰`; both
    /// are zero-extended to the boundary (sampled data may carry round-off
    /// residue there).
    pub fn new(
        v0: &Field,
        v1: &Field,
        u1h: &Field,
        phi0: &Field,
        speeds: &[f64],
        h_t: f64,
        eps0: f64,
    ) -> Result<Self> {
        let mut u1h = u1h.clone();
        u1h.set_boundary(|_| 0.0);
        let u1h = &u1h;
        let mut phi0 = phi0.clone();
        phi0.set_boundary(|_| 0.0);
        let phi0 = &phi0;
        let (kinetic, correction, potential) = energy_at(v0, v1, speeds, h_t)?;
        let seed_pattern = kinetic + correction + potential;
        let seed_literal = kinetic - h_t * h_t / 4.0 * kinetic + potential;
        let diff = backward_difference(v0, v1, h_t);
        let avg = backward_average(v0, v1);
        let a_v0 = apply_a(v0, speeds, h_t)?;
        let seed_from_data =
            inner_h(&a_v0, &avg)? + inner_h(u1h, &diff)? + 0.5 * h_t * inner_h(phi0, &diff)?;
        let potential0 = inner_h(&a_v0, v0)?;
        let rhs_first = (potential0 + norm_h_sq(u1h)? / (eps0 * eps0)).sqrt();
        let l1_sum = 0.25 * h_t * norm_h_sq(phi0)?.sqrt();
        let sbar_u1h = apply_sbar_n(u1h)?;
        let atilde_v0 = apply_a_tilde_n(v0, speeds, h_t)?;
        let alt_rhs_first =
            (inner_h(&atilde_v0, v0)? + inner_h(&sbar_u1h, u1h)? / (eps0 * eps0)).sqrt();
        let alt_l1_sum = 0.25 * h_t * inner_h(&apply_sbar_n(phi0)?, phi0)?.max(0.0).sqrt();
        let mut tracker = EnergyTracker {
            speeds: speeds.to_vec(),
            h_t,
            eps0,
            rows: Vec::new(),
            seed_pattern,
            seed_literal,
            seed_from_data,
            work_sum: 0.0,
            lhs_max: 0.0,
            rhs_first,
            l1_sum,
            alt_lhs_max: 0.0,
            alt_rhs_first,
            alt_l1_sum,
        };
        tracker.push_row(1, h_t, kinetic, correction, potential, v0, v1)?;
        Ok(tracker)
    }

    #[allow(clippy::too_many_arguments)]
    fn push_row(
        &mut self,
        level: usize,
        time: f64,
        kinetic: f64,
        correction: f64,
        potential: f64,
        v_prev: &Field,
        v_curr: &Field,
    ) -> Result<()> {
        let total = kinetic + correction + potential;
        let work = 2.0 * self.work_sum;
        self.rows.push(EnergyRow {
            level,
            time,
            kinetic,
            correction,
            potential,
            work,
            residual: total - self.seed_pattern - work,
        });
        self.lhs_max = self.lhs_max.max(
            (self.eps0 * self.eps0 * kinetic + potential)
                .max(0.0)
                .sqrt(),
        );
        let diff = backward_difference(v_prev, v_curr, self.h_t);
        let avg = backward_average(v_prev, v_curr);
        let sdiff = inner_h(&apply_sbar_n(&diff)?, &diff)?;
        let savg = inner_h(&apply_a_tilde_n(&avg, &self.speeds, self.h_t)?, &avg)?;
        self.alt_lhs_max = self
            .alt_lhs_max
            .max((self.eps0 * self.eps0 * sdiff + savg).max(0.0).sqrt());
        Ok(())
    }

    /// Records the step from level `m` to `m+1`: `phi` is `f*^m + β*^m`
    /// (zero-extended) and the three fields are the levels `m-1`, `m`, `m+1`.
    pub fn record_step(
        &mut self,
        m: usize,
        t_next: f64,
        v_prev: &Field,
        v_curr: &Field,
        v_next: &Field,
        phi: &Field,
    ) -> Result<()> {
        let mut phi = phi.clone();
        phi.set_boundary(|_| 0.0);
        let phi = &phi;
        let mut center = v_next.clone();
        for (o, p) in center.as_slice_mut().iter_mut().zip(v_prev.as_slice()) {
            *o = (*o - p) / (2.0 * self.h_t);
        }
        self.work_sum += self.h_t * inner_h(phi, &center)?;
        self.l1_sum += self.h_t * norm_h_sq(phi)?.sqrt();
        self.alt_l1_sum += self.h_t * inner_h(&apply_sbar_n(phi)?, phi)?.max(0.0).sqrt();
        let (kinetic, correction, potential) = energy_at(v_curr, v_next, &self.speeds, self.h_t)?;
        self.push_row(
            m + 1,
            t_next,
            kinetic,
            correction,
            potential,
            v_curr,
            v_next,
        )
    }

    pub fn finish(self) -> (EnergyLedger, StabilityBoundCheck) {
        let ledger = EnergyLedger {
            rows: self.rows,
            seed_pattern: self.seed_pattern,
            seed_literal: self.seed_literal,
            seed_from_data: self.seed_from_data,
        };
        let bound = StabilityBoundCheck {
            lhs_max: self.lhs_max,
            rhs: self.rhs_first + 2.0 / self.eps0 * self.l1_sum,
            alt_lhs_max: self.alt_lhs_max,
            alt_rhs: self.alt_rhs_first + 2.0 / self.eps0 * self.alt_l1_sum,
        };
        (ledger, bound)
    }
}

/// Spatial operator used when measuring energy-norm errors.
pub enum LhOperator {
    Const(Vec<f64>),
    Variable(Vec<Field>),
}

impl LhOperator {
    pub fn apply(&self, v: &Field) -> Result<Field> {
        match self {
            LhOperator::Const(speeds) => apply_lh(v, speeds),
            LhOperator::Variable(a2) => apply_lh_variable(v, a2),
        }
    }
}

/// Maximal error norms of a run against the exact solution:
/// `max_m (ε₀‖δ̄_t r‖_h + √ε ‖s̄_t r‖_{-L_h})` and `max_m ‖r‖_h` with
/// `r = u - v` extended by zero to the boundary.
#[derive(Debug, Clone)]
pub struct ErrorNorms {
    pub energy: f64,
    pub l2: f64,
    /// Largest pointwise error over all levels.
    pub sup: f64,
    pub per_level_l2: Vec<f64>,
    pub per_level_energy: Vec<f64>,
}

/// Incremental error tracking over a run; equivalent to [`error_norms`] on
/// the stored history.
pub struct ErrorTracker {
    exact: SpaceTimeFn,
    lh: LhOperator,
    eps: f64,
    eps0: f64,
    r_prev: Field,
    norms: ErrorNorms,
}

impl ErrorTracker {
    pub fn new(
        grid: &Arc<Grid>,
        exact: SpaceTimeFn,
        v0: &Field,
        t0: f64,
        lh: LhOperator,
        eps: f64,
        eps0: f64,
    ) -> Result<Self> {
        let r0 = error_field(grid, &exact, v0, t0);
        let l2 = norm_h_sq(&r0)?.sqrt();
        let sup = r0.sup_norm();
        Ok(ErrorTracker {
            exact,
            lh,
            eps,
            eps0,
            r_prev: r0,
            norms: ErrorNorms {
                energy: 0.0,
                l2,
                sup,
                per_level_l2: vec![l2],
                per_level_energy: vec![0.0],
            },
        })
    }

    /// Records level `m >= 1`; `h_t` is the step from the previous level.
    pub fn record(&mut self, v: &Field, t: f64, h_t: f64) -> Result<()> {
        let r = error_field(v.grid(), &self.exact, v, t);
        let l2 = norm_h_sq(&r)?.sqrt();
        let diff = backward_difference(&self.r_prev, &r, h_t);
        let avg = backward_average(&self.r_prev, &r);
        let lavg = self.lh.apply(&avg)?;
        let neg_lh_sq = (-inner_h(&lavg, &avg)?).max(0.0);
        let energy = self.eps0 * norm_h_sq(&diff)?.sqrt() + self.eps.sqrt() * neg_lh_sq.sqrt();
        self.norms.energy = self.norms.energy.max(energy);
        self.norms.l2 = self.norms.l2.max(l2);
        self.norms.sup = self.norms.sup.max(r.sup_norm());
        self.norms.per_level_l2.push(l2);
        self.norms.per_level_energy.push(energy);
        self.r_prev = r;
        Ok(())
    }

    pub fn finish(self) -> ErrorNorms {
        self.norms
    }
}

/// Pointwise error `u(·, t) - v` with the boundary forced to zero.
fn error_field(grid: &Arc<Grid>, exact: &SpaceTimeFn, v: &Field, t: f64) -> Field {
    let mut r = Field::sample_at(grid, t, |x, t| exact(x, t));
    for (o, s) in r.as_slice_mut().iter_mut().zip(v.as_slice()) {
        *o -= s;
    }
    r.set_boundary(|_| 0.0);
    r
}

/// Error norms over a stored level history (levels `0..=M` at uniform step).
pub fn error_norms(
    history: &[Field],
    exact: &SpaceTimeFn,
    times: &[f64],
    lh: LhOperator,
    eps: f64,
    eps0: f64,
) -> Result<ErrorNorms> {
    if history.is_empty() || history.len() != times.len() {
        return Err(SolverError::DiagnosticUnavailable(
            "error norms need a non-empty history with matching times".into(),
        ));
    }
    let grid = history[0].grid().clone();
    let mut tracker =
        ErrorTracker::new(&grid, exact.clone(), &history[0], times[0], lh, eps, eps0)?;
    for m in 1..history.len() {
        tracker.record(&history[m], times[m], times[m] - times[m - 1])?;
    }
    Ok(tracker.finish())
}

/// Scalar-form residual of one time step, written without inverse operators:
/// `s̄_N Λ_t v + (I + h_t²L_h/12) Ā_N v - s̄_N f* - s̄_N β*` over the interior,
/// relative to the size of its terms.
pub fn scalar_form_residual(
    v_prev: &Field,
    v_curr: &Field,
    v_next: &Field,
    f_star: &Field,
    sbar_beta: Option<&Field>,
    speeds: &[f64],
    h_t: f64,
) -> Result<f64> {
    let mut lambda_t = v_next.clone();
    {
        let p = v_prev.as_slice();
        let c = v_curr.as_slice();
        let out = lambda_t.as_slice_mut();
        for i in 0..out.len() {
            out[i] = (out[i] - 2.0 * c[i] + p[i]) / (h_t * h_t);
        }
    }
    lambda_t.set_boundary(|_| 0.0);
    let t1 = apply_sbar_n(&lambda_t)?;
    let t2 = apply_a_tilde_n(v_curr, speeds, h_t)?;
    let t3 = apply_sbar_n(f_star)?;
    let mut residual: f64 = 0.0;
    let mut scale: f64 = 0.0;
    let grid = v_curr.grid().clone();
    let (d1, d2, d3) = (t1.as_slice(), t2.as_slice(), t3.as_slice());
    let d4 = sbar_beta.map(|f| f.as_slice());
    grid.visit_nodes(|lin, idx, _| {
        if grid.is_interior(idx) {
            let beta = d4.map(|d| d[lin]).unwrap_or(0.0);
            let r = d1[lin] + d2[lin] - d3[lin] - beta;
            residual = residual.max(r.abs());
            scale = scale
                .max(d1[lin].abs())
                .max(d2[lin].abs())
                .max(d3[lin].abs());
        }
    });
    Ok(residual / scale.max(1e-300))
}

/// `β* = (I + h_t²L_h/12)(Σ_k a_k² s_kN⁻¹ b_k)` from sampled auxiliary free
/// terms; zero-boundary solves.
pub fn beta_star(b_fields: &[Field], speeds: &[f64], h_t: f64) -> Result<Field> {
    let grid = b_fields[0].grid();
    let zero_bc = Field::zeros(grid);
    let mut acc = Field::zeros(grid);
    for (k, a) in speeds.iter().enumerate() {
        let mut b = b_fields[k].clone();
        b.set_boundary(|_| 0.0);
        let sb = batched_solve_numerov(k, &b, &zero_bc)?;
        let a2 = a * a;
        for (o, s) in acc.as_slice_mut().iter_mut().zip(sb.as_slice()) {
            *o += a2 * s;
        }
    }
    let lacc = apply_lh(&acc, speeds)?;
    let c = h_t * h_t / 12.0;
    let mut out = acc;
    for (o, l) in out.as_slice_mut().iter_mut().zip(lacc.as_slice()) {
        *o += c * l;
    }
    Ok(out)
}

/// `s̄_N β* = (I + h_t²L_h/12)(Σ_k a_k² (Π_{j≠k} s_jN) b_k)`; forward form
/// used by the scalar-form oracle.
pub fn sbar_beta_star(b_fields: &[Field], speeds: &[f64], h_t: f64) -> Result<Field> {
    let grid = b_fields[0].grid();
    let dim = grid.dim();
    let mut acc = Field::zeros(grid);
    for (k, a) in speeds.iter().enumerate() {
        let mut term = b_fields[k].clone();
        term.set_boundary(|_| 0.0);
        for j in 0..dim {
            if j != k {
                term = apply_numerov_k(&term, j)?;
            }
        }
        let a2 = a * a;
        for (o, s) in acc.as_slice_mut().iter_mut().zip(term.as_slice()) {
            *o += a2 * s;
        }
    }
    let lacc = apply_lh(&acc, speeds)?;
    let c = h_t * h_t / 12.0;
    let mut out = acc;
    for (o, l) in out.as_slice_mut().iter_mut().zip(lacc.as_slice()) {
        *o += c * l;
    }
    Ok(out)
}

/// `Σ a_k² Λ_k` fused accumulation used by steppers; does not touch boundary rows.
pub fn add_scaled_lh(acc: &mut Field, v: &Field, speeds: &[f64]) -> Result<()> {
    for (k, a) in speeds.iter().enumerate() {
        accumulate_lambda_k(acc, v, k, CoeffScale::Const(a * a))?;
    }
    Ok(())
}
