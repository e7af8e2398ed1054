//! The explicit-in-time vector compact scheme on a uniform time mesh with
//! constant coefficients: auxiliary line solves, the three-level update, the
//! derivative-free first step, and the full run loop with diagnostics.
//!
//! Each time step first recovers the auxiliary second-derivative fields from
//! per-axis Numerov systems, accumulates only their weighted sum, and then
//! advances explicitly; no linear solve touches the time direction.

use std::sync::Arc;

use crate::diagnostics::{
    add_scaled_lh, beta_star, sbar_beta_star, scalar_form_residual, EnergyLedger, EnergyTracker,
    ErrorNorms, ErrorTracker, LhOperator, StabilityBoundCheck,
};
use crate::error::{Result, SolverError};
use crate::grid::{Field, Grid, TimeMesh};
use crate::problems::Problem;
use crate::stability::{self, StabilityCertificate};
use crate::stencil::{
    apply_lambda_k, apply_lh, batched_solve_numerov, line_solve_count, time_stencil_at, TimeStencil,
};

/// How the first-step free term samples `f` near `t = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FirstStepVariant {
    /// `(7/12) f⁰ + (1/2) f¹ - (1/12) f²`; only mesh-time samples.
    ThreeLevel,
    /// `(1/3) f⁰ + (2/3) f^{1/2}`; samples `f` at `t = h_t/2` off the mesh.
    TwoLevel,
    /// `f⁰ + (h_t/3) ∂_t f⁰ + (h_t²/12) ∂_t²f⁰`; needs derivative callbacks.
    AnalyticDerivatives,
}

/// Where the auxiliary fields take their boundary values at `t = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuxBoundaryAtZero {
    /// The per-axis boundary data `g_k(·, 0)/a_k²` (default).
    BoundaryData,
    /// Sampled `∂_k²u_0` on the boundary; needs the `d2u0` callbacks.
    InitialSecondDerivative,
}

/// Scheme parameters: speeds, stability margins and first-step options.
#[derive(Debug, Clone)]
pub struct SchemeConfig {
    /// Wave speeds `a_k > 0` per axis.
    pub speeds: Vec<f64>,
    /// Margin of the step-ratio condition, in `[0, 1)`.
    pub eps: f64,
    /// Margin of the spectral condition, in `(0, 1)`.
    pub eps0: f64,
    pub first_step: FirstStepVariant,
    pub enforce_stability: bool,
    /// Use analytically supplied `L u_0` for the first step instead of
    /// auxiliary solves; needs the `lu0` callback.
    pub use_analytic_lu0: bool,
    /// Use the analytic `L u_1` callback in the non-uniform-in-time drift
    /// term instead of the discrete `L_h u_1`.
    pub use_analytic_lu1: bool,
    pub aux_bc0: AuxBoundaryAtZero,
}

impl SchemeConfig {
    /// Defaults: margins 0.05, three-level first step, stability enforced.
    pub fn new(speeds: Vec<f64>) -> Self {
        SchemeConfig {
            speeds,
            eps: 0.05,
            eps0: 0.05,
            first_step: FirstStepVariant::ThreeLevel,
            enforce_stability: true,
            use_analytic_lu0: false,
            use_analytic_lu1: false,
            aux_bc0: AuxBoundaryAtZero::BoundaryData,
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.speeds.len() != dim {
            return Err(SolverError::InvalidConfig(format!(
                "{} speeds configured for a {dim}-d grid",
                self.speeds.len()
            )));
        }
        if let Some(a) = self.speeds.iter().find(|a| **a <= 0.0 || !a.is_finite()) {
            return Err(SolverError::InvalidConfig(format!(
                "wave speeds must be positive, got {a}"
            )));
        }
        if !(0.0..1.0).contains(&self.eps) {
            return Err(SolverError::InvalidConfig(format!(
                "margin eps must lie in [0, 1), got {}",
                self.eps
            )));
        }
        if !(self.eps0 > 0.0 && self.eps0 < 1.0) {
            return Err(SolverError::InvalidConfig(format!(
                "margin eps0 must lie in (0, 1), got {}",
                self.eps0
            )));
        }
        Ok(())
    }
}

/// Two consecutive solution levels plus the cached weighted auxiliary sum.
#[derive(Debug, Clone)]
pub struct SchemeState {
    pub v_prev: Field,
    pub v_curr: Field,
    /// Level index of `v_curr`.
    pub level: usize,
    /// `Σ_k a_k² v_kk` at the level of `v_curr`.
    pub w: Field,
}

/// Which diagnostics a run records.
#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Per-level energy ledger and stability-bound check; requires `g = 0`
    /// and `f` vanishing on the boundary.
    pub energy_ledger: bool,
    /// Per-step residual of the compact scalar form (no inverse operators).
    pub scalar_residual: bool,
    /// Track error norms against the exact solution when available.
    pub track_error: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            energy_ledger: false,
            scalar_residual: false,
            track_error: true,
        }
    }
}

/// Everything a run reports besides the final state.
#[derive(Debug, Clone)]
pub struct RunReport {
    /// Number of time steps M.
    pub steps: usize,
    /// Largest time step (the exact step for uniform meshes).
    pub dt: f64,
    pub certificate: StabilityCertificate,
    pub energy: Option<EnergyLedger>,
    pub stability_bound: Option<StabilityBoundCheck>,
    pub scalar_residual_max: Option<f64>,
    pub errors: Option<ErrorNorms>,
    pub final_sup: f64,
    /// Tridiagonal line solves performed during the run.
    pub line_solves: u64,
}

/// Solves the per-axis auxiliary system `s_kN v_kk = Λ_k v + b_k` with
/// boundary values `g_k(·, t)/a_k²`.
pub fn compute_auxiliary(
    v: &Field,
    t: f64,
    problem: &Problem,
    speeds: &[f64],
    k: usize,
) -> Result<Field> {
    let mut rhs = apply_lambda_k(v, k)?;
    if let Some(b) = &problem.b {
        let bk = Field::sample_at(v.grid(), t, |x, t| b[k](x, t));
        for (o, s) in rhs.as_slice_mut().iter_mut().zip(bk.as_slice()) {
            *o += s;
        }
    }
    let a2 = speeds[k] * speeds[k];
    let gk = problem.g_k[k].clone();
    let mut bc = Field::zeros(v.grid());
    bc.set_boundary(|x| gk(x, t) / a2);
    batched_solve_numerov(k, &rhs, &bc)
}

/// `(s_tN + c L_h) f` from three consecutive samples; `lhf` must hold
/// `L_h f` of the middle sample. Interior values only, zero boundary.
pub(crate) fn f_star_from_samples(
    st: &TimeStencil,
    f_prev: &Field,
    f_curr: &Field,
    f_next: &Field,
    lhf: &Field,
) -> Field {
    let mut out = Field::zeros(f_curr.grid());
    {
        let o = out.as_slice_mut();
        let (fp, fc, fnx, lf) = (
            f_prev.as_slice(),
            f_curr.as_slice(),
            f_next.as_slice(),
            lhf.as_slice(),
        );
        if st.uniform {
            for i in 0..o.len() {
                o[i] = (fp[i] + 10.0 * fc[i] + fnx[i]) / 12.0 + st.quad_correction * lf[i];
            }
        } else {
            let (w0, w1, w2) = st.numerov;
            for i in 0..o.len() {
                o[i] = (w0 * fp[i] + w1 * fc[i] + w2 * fnx[i]) + st.quad_correction * lf[i];
            }
        }
    }
    out.set_boundary(|_| 0.0);
    out
}

/// `(s_tN + h_t²L_h/12) f` at level `m` sampled pointwise from the problem.
pub fn assemble_f_star(
    problem: &Problem,
    m: usize,
    grid: &Arc<Grid>,
    tmesh: &TimeMesh,
    speeds: &[f64],
) -> Result<Field> {
    let st = time_stencil_at(tmesh, m)?;
    let f_prev = Field::sample_at(grid, tmesh.node(m - 1), |x, t| (problem.f)(x, t));
    let f_curr = Field::sample_at(grid, tmesh.node(m), |x, t| (problem.f)(x, t));
    let f_next = Field::sample_at(grid, tmesh.node(m + 1), |x, t| (problem.f)(x, t));
    let lhf = apply_lh(&f_curr, speeds)?;
    Ok(f_star_from_samples(&st, &f_prev, &f_curr, &f_next, &lhf))
}

/// Three-level combination `Λ_t v = rhs` solved for the new level. Bitwise
/// identical arithmetic is used for equal steps so the non-uniform steppers
/// collapse exactly onto the uniform one.
pub(crate) fn combine_three_level(
    v_curr: &Field,
    v_prev: &Field,
    h_prev: f64,
    h_next: f64,
    h_star: f64,
    rhs: &Field,
) -> Field {
    let mut out = Field::zeros(v_curr.grid());
    let o = out.as_slice_mut();
    let (v, w, r) = (v_curr.as_slice(), v_prev.as_slice(), rhs.as_slice());
    if h_prev == h_next {
        let ht2 = h_next * h_next;
        for i in 0..o.len() {
            o[i] = 2.0 * v[i] - w[i] + ht2 * r[i];
        }
    } else {
        let ratio = h_next / h_prev;
        let hh = h_star * h_next;
        for i in 0..o.len() {
            o[i] = v[i] + ratio * (v[i] - w[i]) + hh * r[i];
        }
    }
    out
}

/// `(I + c L_h) w + f*`, the explicit update right-hand side.
pub(crate) fn update_rhs(w: &Field, f_star: &Field, speeds: &[f64], c: f64) -> Result<Field> {
    let mut lw = Field::zeros(w.grid());
    add_scaled_lh(&mut lw, w, speeds)?;
    let mut rhs = Field::zeros(w.grid());
    {
        let o = rhs.as_slice_mut();
        let (wd, ld, fd) = (w.as_slice(), lw.as_slice(), f_star.as_slice());
        for i in 0..o.len() {
            o[i] = (wd[i] + c * ld[i]) + fd[i];
        }
    }
    Ok(rhs)
}

/// The explicit three-level update
/// `v^{m+1} = 2v^m - v^{m-1} + h_t²[(I + h_t²L_h/12) W^m + f*]` with the
/// boundary set from `g(·, t_next)`. Performs no linear solves.
pub fn step_main(
    state: &SchemeState,
    f_star: &Field,
    problem: &Problem,
    speeds: &[f64],
    h_t: f64,
    t_next: f64,
) -> Result<Field> {
    let rhs = update_rhs(&state.w, f_star, speeds, h_t * h_t / 12.0)?;
    let mut v_next = combine_three_level(&state.v_curr, &state.v_prev, h_t, h_t, h_t, &rhs);
    let g = problem.g.clone();
    v_next.set_boundary(|x| g(x, t_next));
    Ok(v_next)
}

/// First-step free term approximating
/// `f⁰ + (h_t/3) ∂_t f⁰ + (h_t²/12) ∂_t²f⁰` without initial-data derivatives.
pub fn f_dht0(
    problem: &Problem,
    grid: &Arc<Grid>,
    h_t: f64,
    variant: FirstStepVariant,
) -> Result<Field> {
    let f = &problem.f;
    Ok(match variant {
        FirstStepVariant::ThreeLevel => {
            let f0 = Field::sample_at(grid, 0.0, |x, t| f(x, t));
            let f1 = Field::sample_at(grid, h_t, |x, t| f(x, t));
            let f2 = Field::sample_at(grid, 2.0 * h_t, |x, t| f(x, t));
            let mut out = f0;
            for ((o, a), b) in out
                .as_slice_mut()
                .iter_mut()
                .zip(f1.as_slice())
                .zip(f2.as_slice())
            {
                *o = 7.0 / 12.0 * *o + 0.5 * a - b / 12.0;
            }
            out
        }
        FirstStepVariant::TwoLevel => {
            let f0 = Field::sample_at(grid, 0.0, |x, t| f(x, t));
            let fh = Field::sample_at(grid, 0.5 * h_t, |x, t| f(x, t));
            let mut out = f0;
            for (o, a) in out.as_slice_mut().iter_mut().zip(fh.as_slice()) {
                *o = *o / 3.0 + 2.0 / 3.0 * a;
            }
            out
        }
        FirstStepVariant::AnalyticDerivatives => {
            let (f_dt, f_dtt) = match (&problem.f_dt, &problem.f_dtt) {
                (Some(a), Some(b)) => (a.clone(), b.clone()),
                _ => {
                    return Err(SolverError::InvalidConfig(
                        "analytic first-step variant needs time-derivative callbacks for f".into(),
                    ))
                }
            };
            let f0 = Field::sample_at(grid, 0.0, |x, t| f(x, t));
            let d1 = Field::sample_at(grid, 0.0, |x, t| f_dt(x, t));
            let d2 = Field::sample_at(grid, 0.0, |x, t| f_dtt(x, t));
            let mut out = f0;
            for ((o, a), b) in out
                .as_slice_mut()
                .iter_mut()
                .zip(d1.as_slice())
                .zip(d2.as_slice())
            {
                *o += h_t / 3.0 * a + h_t * h_t / 12.0 * b;
            }
            out
        }
    })
}

/// Data produced by the first step; the extra fields feed the energy ledger
/// and the non-uniform-in-time memory seed.
pub struct FirstStep {
    pub v1: Field,
    /// `Σ a_k² v_kk⁰` (or sampled `L u_0` on the analytic path).
    pub w0: Field,
    /// `(I + h_t²L_h/6) u_1`.
    pub u1h: Field,
    /// `f_d⁰ + (h_t²/12) L_h f⁰`.
    pub f0h: Field,
    /// `f` sampled at `t = 0`.
    pub f0: Field,
    /// `β*⁰` when auxiliary free terms are present.
    pub beta0: Option<Field>,
}

/// Computes the first solution level from `v⁰` without derivatives of the
/// initial data: auxiliary solves at `t = 0`, then
/// `v¹ = v⁰ + h_t[(h_t/2)(I + h_t²L_h/12)W⁰ + u_{1*} + (h_t/2)f*⁰]`.
pub fn first_step(
    v0: &Field,
    problem: &Problem,
    config: &SchemeConfig,
    h_t: f64,
) -> Result<FirstStep> {
    let grid = v0.grid().clone();
    let speeds = &config.speeds;
    let w0 = if config.use_analytic_lu0 {
        let lu0 = problem.lu0.as_ref().ok_or_else(|| {
            SolverError::InvalidConfig("analytic first step needs the lu0 callback".into())
        })?;
        let lu0 = lu0.clone();
        Field::sample(&grid, move |x| lu0(x))
    } else {
        let mut w = Field::zeros(&grid);
        for (k, a) in speeds.iter().enumerate() {
            let vkk = match config.aux_bc0 {
                AuxBoundaryAtZero::BoundaryData => compute_auxiliary(v0, 0.0, problem, speeds, k)?,
                AuxBoundaryAtZero::InitialSecondDerivative => {
                    let d2 = problem.d2u0.as_ref().ok_or_else(|| {
                        SolverError::InvalidConfig(
                            "initial-derivative auxiliary boundary needs d2u0 callbacks".into(),
                        )
                    })?[k]
                        .clone();
                    let mut rhs = apply_lambda_k(v0, k)?;
                    if let Some(b) = &problem.b {
                        let bk = Field::sample_at(&grid, 0.0, |x, t| b[k](x, t));
                        for (o, s) in rhs.as_slice_mut().iter_mut().zip(bk.as_slice()) {
                            *o += s;
                        }
                    }
                    let mut bc = Field::zeros(&grid);
                    bc.set_boundary(|x| d2(x));
                    batched_solve_numerov(k, &rhs, &bc)?
                }
            };
            let a2 = a * a;
            for (o, s) in w.as_slice_mut().iter_mut().zip(vkk.as_slice()) {
                *o += a2 * s;
            }
        }
        w
    };
    let lw0 = apply_lh(&w0, speeds)?;
    let u1 = {
        let u1 = problem.u1.clone();
        Field::sample(&grid, move |x| u1(x))
    };
    let lu1 = apply_lh(&u1, speeds)?;
    let mut u1h = u1;
    for (o, l) in u1h.as_slice_mut().iter_mut().zip(lu1.as_slice()) {
        *o += h_t * h_t / 6.0 * l;
    }
    let fd = f_dht0(problem, &grid, h_t, config.first_step)?;
    let f0 = Field::sample_at(&grid, 0.0, |x, t| (problem.f)(x, t));
    let lf0 = apply_lh(&f0, speeds)?;
    let mut f0h = fd;
    for (o, l) in f0h.as_slice_mut().iter_mut().zip(lf0.as_slice()) {
        *o += h_t * h_t / 12.0 * l;
    }
    let beta0 = match &problem.b {
        Some(b) => {
            let fields: Vec<Field> = b
                .iter()
                .map(|bk| Field::sample_at(&grid, 0.0, |x, t| bk(x, t)))
                .collect();
            Some(beta_star(&fields, speeds, h_t)?)
        }
        None => None,
    };
    let c = h_t * h_t / 12.0;
    let half = 0.5 * h_t;
    let mut v1 = Field::zeros(&grid);
    {
        let o = v1.as_slice_mut();
        let (v0d, wd, ld, ud, fd) = (
            v0.as_slice(),
            w0.as_slice(),
            lw0.as_slice(),
            u1h.as_slice(),
            f0h.as_slice(),
        );
        for i in 0..o.len() {
            let inner = (half * (wd[i] + c * ld[i]) + ud[i]) + half * fd[i];
            o[i] = v0d[i] + h_t * inner;
        }
    }
    let g = problem.g.clone();
    v1.set_boundary(|x| g(x, h_t));
    Ok(FirstStep {
        v1,
        w0,
        u1h,
        f0h,
        f0,
        beta0,
    })
}

/// Initial level: `u_0` samples with the boundary overwritten by `g(·, 0)`.
pub fn initial_level(grid: &Arc<Grid>, problem: &Problem) -> Field {
    let u0 = problem.u0.clone();
    let mut v0 = Field::sample(grid, move |x| u0(x));
    let g = problem.g.clone();
    v0.set_boundary(|x| g(x, 0.0));
    v0
}

fn check_compatibility(grid: &Arc<Grid>, problem: &Problem) -> Result<()> {
    let mut worst: f64 = 0.0;
    grid.visit_nodes(|_, idx, coords| {
        if !grid.is_interior(idx) {
            let gap = ((problem.g)(coords, 0.0) - (problem.u0)(coords)).abs();
            worst = worst.max(gap);
        }
    });
    if worst > 1e-10 {
        return Err(SolverError::InvalidConfig(format!(
            "boundary data g(x, 0) and initial data u0 disagree by {worst:e}"
        )));
    }
    Ok(())
}

/// `g` must vanish exactly on the boundary and `f` up to round-off for the
/// energy diagnostics to apply.
fn check_homogeneous(grid: &Arc<Grid>, problem: &Problem, tmesh: &TimeMesh) -> Result<()> {
    let mut g_ok = true;
    let mut f_ok = true;
    grid.visit_nodes(|_, idx, coords| {
        if !grid.is_interior(idx) {
            for &t in tmesh.nodes() {
                if (problem.g)(coords, t) != 0.0 {
                    g_ok = false;
                }
                if (problem.f)(coords, t).abs() > 1e-12 {
                    f_ok = false;
                }
            }
        }
    });
    if !g_ok {
        return Err(SolverError::DiagnosticUnavailable(
            "energy diagnostics require g = 0 on the boundary".into(),
        ));
    }
    if !f_ok {
        return Err(SolverError::DiagnosticUnavailable(
            "energy diagnostics require f to vanish on the boundary".into(),
        ));
    }
    Ok(())
}

fn ensure_problem_shape(problem: &Problem, dim: usize) -> Result<()> {
    if problem.dim != dim || problem.g_k.len() != dim {
        return Err(SolverError::InvalidConfig(format!(
            "problem is {}-d with {} g_k callbacks, grid is {dim}-d",
            problem.dim,
            problem.g_k.len()
        )));
    }
    if let Some(b) = &problem.b {
        if b.len() != dim {
            return Err(SolverError::InvalidConfig(
                "auxiliary free terms must cover every axis".into(),
            ));
        }
    }
    Ok(())
}

pub(crate) fn sample_b(problem: &Problem, grid: &Arc<Grid>, t: f64) -> Option<Vec<Field>> {
    problem.b.as_ref().map(|b| {
        b.iter()
            .map(|bk| Field::sample_at(grid, t, |x, t| bk(x, t)))
            .collect()
    })
}

/// Runs the scheme over the whole time mesh.
///
/// Per step the auxiliary fields are computed independently (line-parallel)
/// and reduced into `W` in ascending axis order; only one auxiliary buffer is
/// alive at a time. Output is deterministic and bitwise reproducible across
/// thread counts.
pub fn run(
    problem: &Problem,
    grid: &Arc<Grid>,
    tmesh: &TimeMesh,
    config: &SchemeConfig,
    options: &RunOptions,
) -> Result<(SchemeState, RunReport)> {
    config.validate(grid.dim())?;
    ensure_problem_shape(problem, grid.dim())?;
    if !tmesh.is_uniform() {
        return Err(SolverError::InvalidConfig(
            "this run loop needs a uniform time mesh; use the non-uniform-time stepper".into(),
        ));
    }
    let solves_before = line_solve_count();
    let h_t = tmesh.step_hint();
    let m_total = tmesh.n_steps();
    let speeds = &config.speeds;
    let certificate = stability::certificate(grid, speeds, h_t, config.eps, config.eps0)?;
    if config.enforce_stability {
        if !certificate.condition1_ok {
            return Err(SolverError::StabilityRejected {
                condition: "step-ratio".into(),
                slack: certificate.condition1_slack,
            });
        }
        if !certificate.condition2_ok {
            return Err(SolverError::StabilityRejected {
                condition: "spectral".into(),
                slack: certificate.condition2_slack,
            });
        }
    }
    check_compatibility(grid, problem)?;
    let v0 = initial_level(grid, problem);
    let first = first_step(&v0, problem, config, h_t)?;
    if !first.v1.all_finite() {
        return Err(SolverError::Diverged { step: 1 });
    }

    let mut energy_tracker = if options.energy_ledger {
        check_homogeneous(grid, problem, tmesh)?;
        let mut phi0 = first.f0h.clone();
        if let Some(beta0) = &first.beta0 {
            for (o, b) in phi0.as_slice_mut().iter_mut().zip(beta0.as_slice()) {
                *o += b;
            }
        }
        Some(EnergyTracker::new(
            &v0,
            &first.v1,
            &first.u1h,
            &phi0,
            speeds,
            h_t,
            config.eps0,
        )?)
    } else {
        None
    };
    let mut error_tracker = match (&problem.exact, options.track_error) {
        (Some(exact), true) => {
            let mut tr = ErrorTracker::new(
                grid,
                exact.clone(),
                &v0,
                0.0,
                LhOperator::Const(speeds.clone()),
                config.eps,
                config.eps0,
            )?;
            tr.record(&first.v1, h_t, h_t)?;
            Some(tr)
        }
        _ => None,
    };
    let mut scalar_max: Option<f64> = if options.scalar_residual {
        Some(0.0)
    } else {
        None
    };

    let st = time_stencil_at(tmesh, 1)?;
    let mut f_prev = first.f0.clone();
    let mut f_curr = Field::sample_at(grid, tmesh.node(1), |x, t| (problem.f)(x, t));
    let mut state = SchemeState {
        v_prev: v0,
        v_curr: first.v1.clone(),
        level: 1,
        w: Field::zeros(grid),
    };

    for m in 1..m_total {
        let t_m = tmesh.node(m);
        let t_next = tmesh.node(m + 1);
        state.w.fill(0.0);
        for (k, a) in speeds.iter().enumerate() {
            let vkk = compute_auxiliary(&state.v_curr, t_m, problem, speeds, k)?;
            let a2 = a * a;
            for (o, s) in state.w.as_slice_mut().iter_mut().zip(vkk.as_slice()) {
                *o += a2 * s;
            }
        }
        let f_next = Field::sample_at(grid, t_next, |x, t| (problem.f)(x, t));
        let lhf = apply_lh(&f_curr, speeds)?;
        let f_star = f_star_from_samples(&st, &f_prev, &f_curr, &f_next, &lhf);
        let v_next = step_main(&state, &f_star, problem, speeds, h_t, t_next)?;
        if !v_next.all_finite() {
            return Err(SolverError::Diverged { step: m + 1 });
        }
        let b_now = if options.scalar_residual || (energy_tracker.is_some() && problem.b.is_some())
        {
            sample_b(problem, grid, t_m)
        } else {
            None
        };
        if let Some(max) = scalar_max.as_mut() {
            let sbar_beta = match &b_now {
                Some(b) => Some(sbar_beta_star(b, speeds, h_t)?),
                None => None,
            };
            let r = scalar_form_residual(
                &state.v_prev,
                &state.v_curr,
                &v_next,
                &f_star,
                sbar_beta.as_ref(),
                speeds,
                h_t,
            )?;
            *max = max.max(r);
        }
        if let Some(tracker) = energy_tracker.as_mut() {
            let mut phi = f_star.clone();
            if let Some(b) = &b_now {
                let beta = beta_star(b, speeds, h_t)?;
                for (o, s) in phi.as_slice_mut().iter_mut().zip(beta.as_slice()) {
                    *o += s;
                }
            }
            tracker.record_step(m, t_next, &state.v_prev, &state.v_curr, &v_next, &phi)?;
        }
        if let Some(tracker) = error_tracker.as_mut() {
            tracker.record(&v_next, t_next, h_t)?;
        }
        state.v_prev = std::mem::replace(&mut state.v_curr, v_next);
        state.level = m + 1;
        f_prev = std::mem::replace(&mut f_curr, f_next);
    }

    let (energy, stability_bound) = match energy_tracker {
        Some(t) => {
            let (ledger, bound) = t.finish();
            (Some(ledger), Some(bound))
        }
        None => (None, None),
    };
    let report = RunReport {
        steps: m_total,
        dt: h_t,
        certificate,
        energy,
        stability_bound,
        scalar_residual_max: scalar_max,
        errors: error_tracker.map(|t| t.finish()),
        final_sup: state.v_curr.sup_norm(),
        line_solves: line_solve_count() - solves_before,
    };
    Ok((state, report))
}

/// Classical second-order explicit scheme on the same data; the control for
/// convergence-order comparisons.
pub fn run_second_order(
    problem: &Problem,
    grid: &Arc<Grid>,
    tmesh: &TimeMesh,
    config: &SchemeConfig,
    options: &RunOptions,
) -> Result<(SchemeState, RunReport)> {
    config.validate(grid.dim())?;
    ensure_problem_shape(problem, grid.dim())?;
    if !tmesh.is_uniform() {
        return Err(SolverError::InvalidConfig(
            "the second-order control needs a uniform time mesh".into(),
        ));
    }
    let solves_before = line_solve_count();
    let h_t = tmesh.step_hint();
    let speeds = &config.speeds;
    let certificate = stability::certificate(grid, speeds, h_t, config.eps, config.eps0)?;
    if config.enforce_stability && !certificate.ok() {
        return Err(SolverError::StabilityRejected {
            condition: "step-ratio".into(),
            slack: certificate
                .condition1_slack
                .min(certificate.condition2_slack),
        });
    }
    check_compatibility(grid, problem)?;
    let v0 = initial_level(grid, problem);
    let lv0 = apply_lh(&v0, speeds)?;
    let f0 = Field::sample_at(grid, 0.0, |x, t| (problem.f)(x, t));
    let u1 = {
        let u1 = problem.u1.clone();
        Field::sample(grid, move |x| u1(x))
    };
    let mut v1 = Field::zeros(grid);
    {
        let o = v1.as_slice_mut();
        let (vd, ld, fd, ud) = (v0.as_slice(), lv0.as_slice(), f0.as_slice(), u1.as_slice());
        for i in 0..o.len() {
            o[i] = vd[i] + h_t * ud[i] + 0.5 * h_t * h_t * (ld[i] + fd[i]);
        }
    }
    let g = problem.g.clone();
    v1.set_boundary(|x| g(x, h_t));

    let mut error_tracker = match (&problem.exact, options.track_error) {
        (Some(exact), true) => {
            let mut tr = ErrorTracker::new(
                grid,
                exact.clone(),
                &v0,
                0.0,
                LhOperator::Const(speeds.clone()),
                config.eps,
                config.eps0,
            )?;
            tr.record(&v1, h_t, h_t)?;
            Some(tr)
        }
        _ => None,
    };
    let mut state = SchemeState {
        v_prev: v0,
        v_curr: v1,
        level: 1,
        w: Field::zeros(grid),
    };
    for m in 1..tmesh.n_steps() {
        let t_next = tmesh.node(m + 1);
        let lv = apply_lh(&state.v_curr, speeds)?;
        let fm = Field::sample_at(grid, tmesh.node(m), |x, t| (problem.f)(x, t));
        let mut v_next = Field::zeros(grid);
        {
            let o = v_next.as_slice_mut();
            let (v, w, l, f) = (
                state.v_curr.as_slice(),
                state.v_prev.as_slice(),
                lv.as_slice(),
                fm.as_slice(),
            );
            for i in 0..o.len() {
                o[i] = 2.0 * v[i] - w[i] + h_t * h_t * (l[i] + f[i]);
            }
        }
        let g = problem.g.clone();
        v_next.set_boundary(|x| g(x, t_next));
        if !v_next.all_finite() {
            return Err(SolverError::Diverged { step: m + 1 });
        }
        if let Some(tracker) = error_tracker.as_mut() {
            tracker.record(&v_next, t_next, h_t)?;
        }
        state.v_prev = std::mem::replace(&mut state.v_curr, v_next);
        state.level = m + 1;
    }
    let report = RunReport {
        steps: tmesh.n_steps(),
        dt: h_t,
        certificate,
        energy: None,
        stability_bound: None,
        scalar_residual_max: None,
        errors: error_tracker.map(|t| t.finish()),
        final_sup: state.v_curr.sup_norm(),
        line_solves: line_solve_count() - solves_before,
    };
    Ok((state, report))
}
