//! Generalizations of the base scheme: non-uniform meshes in time (with the
//! accumulated-integral memory term) and the wave equation with variable
//! coefficients `ρ(x)`, `a_k(x)`.
//!
//! All steppers collapse bitwise onto the base scheme in their degenerate
//! configurations: equal time steps disable the drift term and reuse the
//! uniform update arithmetic, and `ρ ≡ 1` with constant speeds reproduces the
//! constant-coefficient expressions exactly.

use std::sync::Arc;

use crate::diagnostics::{ErrorTracker, LhOperator};
use crate::error::{Result, SolverError};
use crate::grid::{Field, Grid, TimeMesh};
use crate::problems::{Problem, SpaceFn};
use crate::scheme::{
    combine_three_level, compute_auxiliary, f_star_from_samples, first_step, initial_level,
    update_rhs, FirstStep, RunOptions, RunReport, SchemeConfig, SchemeState,
};
use crate::stability;
use crate::stencil::{
    apply_lambda_k, apply_lh, apply_lh_variable, batched_solve_numerov, line_solve_count,
    time_stencil_at, TimeStencil,
};

/// Variable coefficients sampled on the grid. The original closures are kept
/// for boundary evaluations.
pub struct VariableCoefficients {
    pub rho: Field,
    pub rho_floor: f64,
    /// `a_k²(x)` per axis.
    pub a_sq: Vec<Field>,
    /// `a_k²(x)/ρ(x)` per axis.
    pub a_sq_over_rho: Vec<Field>,
    rho_fn: SpaceFn,
    a_fns: Vec<SpaceFn>,
}

impl VariableCoefficients {
    pub fn new(
        grid: &Arc<Grid>,
        rho_fn: SpaceFn,
        a_fns: Vec<SpaceFn>,
        rho_floor: f64,
    ) -> Result<Self> {
        if rho_floor <= 0.0 || !rho_floor.is_finite() {
            return Err(SolverError::InvalidConfig(format!(
                "density floor must be positive, got {rho_floor}"
            )));
        }
        if a_fns.len() != grid.dim() {
            return Err(SolverError::InvalidConfig(format!(
                "{} speed callbacks for a {}-d grid",
                a_fns.len(),
                grid.dim()
            )));
        }
        let rho = {
            let r = rho_fn.clone();
            Field::sample(grid, move |x| r(x))
        };
        if let Some(bad) = rho.as_slice().iter().find(|v| **v < rho_floor) {
            return Err(SolverError::InvalidConfig(format!(
                "density {bad} drops below the floor {rho_floor}"
            )));
        }
        let a_sq: Vec<Field> = a_fns
            .iter()
            .map(|a| {
                let a = a.clone();
                Field::sample(grid, move |x| {
                    let v = a(x);
                    v * v
                })
            })
            .collect();
        for f in &a_sq {
            if let Some(bad) = f.as_slice().iter().find(|v| **v <= 0.0 || !v.is_finite()) {
                return Err(SolverError::InvalidConfig(format!(
                    "squared speed {bad} is not positive"
                )));
            }
        }
        let a_sq_over_rho = a_sq
            .iter()
            .map(|f| {
                let mut out = f.clone();
                for (o, r) in out.as_slice_mut().iter_mut().zip(rho.as_slice()) {
                    *o /= r;
                }
                out
            })
            .collect();
        Ok(VariableCoefficients {
            rho,
            rho_floor,
            a_sq,
            a_sq_over_rho,
            rho_fn,
            a_fns,
        })
    }

    pub fn rho_at(&self, x: &[f64]) -> f64 {
        (self.rho_fn)(x)
    }

    pub fn a_sq_at(&self, k: usize, x: &[f64]) -> f64 {
        let v = (self.a_fns[k])(x);
        v * v
    }
}

/// Running accumulation of the trapezoid sum `I_{h_t} s̄_t d` with
/// `d = Σ a_k² v_kk + f`, advanced by the recurrence
/// `S^m = S^{m-1} + h_{t m} (d^m + d^{m-1})/2`.
pub struct TimeMemory {
    s: Field,
    d_prev: Field,
}

impl TimeMemory {
    pub fn new(d0: Field) -> Self {
        TimeMemory {
            s: Field::zeros(d0.grid()),
            d_prev: d0,
        }
    }

    pub fn update(&mut self, d: &Field, h: f64) {
        for ((s, new), old) in self
            .s
            .as_slice_mut()
            .iter_mut()
            .zip(d.as_slice())
            .zip(self.d_prev.as_slice())
        {
            *s += h * (0.5 * (new + old));
        }
        self.d_prev = d.clone();
    }

    /// Accumulated integral `I_{h_t}^m s̄_t d`.
    pub fn integral(&self) -> &Field {
        &self.s
    }

    pub fn previous(&self) -> &Field {
        &self.d_prev
    }
}

/// One step of the non-uniform-in-time scheme from the state at level `m`.
///
/// The argument list mirrors the pieces a caller assembles per level.
/// `w` must hold `Σ a_k² v_kk` at level `m`, `memory` the integral through
/// level `m`, and `f_star` the generalized free term. The drift term is
/// skipped entirely for equal steps so the uniform collapse is bitwise.
#[allow(clippy::too_many_arguments)]
pub fn step_nonuniform_time(
    state: &SchemeState,
    memory: &TimeMemory,
    st: &TimeStencil,
    f_star: &Field,
    problem: &Problem,
    config: &SchemeConfig,
    u1_samples: &Field,
    lu1_samples: Option<&Field>,
    t_next: f64,
) -> Result<Field> {
    let speeds = &config.speeds;
    let mut rhs = update_rhs(&state.w, f_star, speeds, st.quad_correction)?;
    if st.drift != 0.0 {
        if config.use_analytic_lu1 {
            let lu1 = lu1_samples.ok_or_else(|| {
                SolverError::InvalidConfig("analytic drift term needs the lu1 callback".into())
            })?;
            let ls = apply_lh(memory.integral(), speeds)?;
            for ((o, a), b) in rhs
                .as_slice_mut()
                .iter_mut()
                .zip(ls.as_slice())
                .zip(lu1.as_slice())
            {
                *o += st.drift * (a + b);
            }
        } else {
            let mut bracket = memory.integral().clone();
            for (o, u) in bracket.as_slice_mut().iter_mut().zip(u1_samples.as_slice()) {
                *o += u;
            }
            let lb = apply_lh(&bracket, speeds)?;
            for (o, l) in rhs.as_slice_mut().iter_mut().zip(lb.as_slice()) {
                *o += st.drift * l;
            }
        }
    }
    let mut v_next = combine_three_level(
        &state.v_curr,
        &state.v_prev,
        st.h_prev,
        st.h_next,
        st.h_star,
        &rhs,
    );
    let g = problem.g.clone();
    v_next.set_boundary(|x| g(x, t_next));
    Ok(v_next)
}

/// Runs the scheme on a possibly non-uniform time mesh, keeping the
/// trapezoid-integral memory field. On a uniform mesh the output matches the
/// base run bitwise.
pub fn run_nonuniform_time(
    problem: &Problem,
    grid: &Arc<Grid>,
    tmesh: &TimeMesh,
    config: &SchemeConfig,
    options: &RunOptions,
) -> Result<(SchemeState, RunReport)> {
    run_nonuniform_time_observed(problem, grid, tmesh, config, options, None)
}

/// Observer of the memory accumulation: `(level, d, integral)` after each
/// update, including the seed at level 0.
pub type MemoryObserver<'a> = &'a mut dyn FnMut(usize, &Field, &Field);

/// Same as [`run_nonuniform_time`], invoking the observer after each memory
/// update; used to validate the recurrence externally.
pub fn run_nonuniform_time_observed(
    problem: &Problem,
    grid: &Arc<Grid>,
    tmesh: &TimeMesh,
    config: &SchemeConfig,
    options: &RunOptions,
    mut observer: Option<MemoryObserver<'_>>,
) -> Result<(SchemeState, RunReport)> {
    config.validate(grid.dim())?;
    let solves_before = line_solve_count();
    let speeds = &config.speeds;
    let h_max = tmesh.max_step();
    let certificate = stability::certificate(grid, speeds, h_max, config.eps, config.eps0)?;
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
    let v0 = initial_level(grid, problem);
    let h_t1 = if tmesh.is_uniform() {
        tmesh.step_hint()
    } else {
        tmesh.step(1)
    };
    let first: FirstStep = first_step(&v0, problem, config, h_t1)?;
    if !first.v1.all_finite() {
        return Err(SolverError::Diverged { step: 1 });
    }
    // d⁰ = Σ a_k² v_kk⁰ + f⁰ seeds the memory.
    let mut d0 = first.w0.clone();
    for (o, f) in d0.as_slice_mut().iter_mut().zip(first.f0.as_slice()) {
        *o += f;
    }
    let mut memory = TimeMemory::new(d0);
    if let Some(obs) = observer.as_mut() {
        obs(0, memory.previous(), memory.integral());
    }

    let u1_samples = {
        let u1 = problem.u1.clone();
        Field::sample(grid, move |x| u1(x))
    };
    let lu1_samples = match (config.use_analytic_lu1, &problem.lu1) {
        (true, Some(lu1)) => {
            let lu1 = lu1.clone();
            Some(Field::sample(grid, move |x| lu1(x)))
        }
        (true, None) => {
            return Err(SolverError::InvalidConfig(
                "analytic drift term needs the lu1 callback".into(),
            ))
        }
        _ => None,
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
            tr.record(&first.v1, tmesh.node(1), h_t1)?;
            Some(tr)
        }
        _ => None,
    };

    let mut f_prev = first.f0.clone();
    let mut f_curr = Field::sample_at(grid, tmesh.node(1), |x, t| (problem.f)(x, t));
    let mut state = SchemeState {
        v_prev: v0,
        v_curr: first.v1.clone(),
        level: 1,
        w: Field::zeros(grid),
    };
    for m in 1..tmesh.n_steps() {
        let st = time_stencil_at(tmesh, m)?;
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
        // d^m = W^m + f^m, folded into the memory before the drift is used.
        let mut d = state.w.clone();
        for (o, f) in d.as_slice_mut().iter_mut().zip(f_curr.as_slice()) {
            *o += f;
        }
        memory.update(&d, st.h_prev);
        if let Some(obs) = observer.as_mut() {
            obs(m, &d, memory.integral());
        }
        let v_next = step_nonuniform_time(
            &state,
            &memory,
            &st,
            &f_star,
            problem,
            config,
            &u1_samples,
            lu1_samples.as_ref(),
            t_next,
        )?;
        if !v_next.all_finite() {
            return Err(SolverError::Diverged { step: m + 1 });
        }
        if let Some(tracker) = error_tracker.as_mut() {
            tracker.record(&v_next, t_next, st.h_next)?;
        }
        state.v_prev = std::mem::replace(&mut state.v_curr, v_next);
        state.level = m + 1;
        f_prev = std::mem::replace(&mut f_curr, f_next);
    }
    let report = RunReport {
        steps: tmesh.n_steps(),
        dt: h_max,
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

/// Auxiliary solve with variable speeds: the boundary carries
/// `g_k(·, t)/a_k²(x)`.
pub fn compute_auxiliary_variable(
    v: &Field,
    t: f64,
    problem: &Problem,
    coeffs: &VariableCoefficients,
    k: usize,
) -> Result<Field> {
    let mut rhs = apply_lambda_k(v, k)?;
    if let Some(b) = &problem.b {
        let bk = Field::sample_at(v.grid(), t, |x, t| b[k](x, t));
        for (o, s) in rhs.as_slice_mut().iter_mut().zip(bk.as_slice()) {
            *o += s;
        }
    }
    let gk = problem.g_k[k].clone();
    let mut bc = Field::zeros(v.grid());
    bc.set_boundary(|x| gk(x, t) / coeffs.a_sq_at(k, x));
    batched_solve_numerov(k, &rhs, &bc)
}

/// First-step data of the variable-coefficient scheme.
pub struct VariableFirstStep {
    pub v1: Field,
    /// `Σ (a_k²/ρ) v_kk⁰`.
    pub w0: Field,
}

/// Variable-coefficient first step:
/// `v¹ = v⁰ + h_t[(h_t/2)(ρI + h_t²L_h/12)W̃⁰ + u_{1*} + (h_t/2)f*⁰]/ρ`
/// with `u_{1*} = (ρI + h_t²L_h/6)u_1` and `f*⁰ = f_d⁰ + (h_t²/12)L_h(f⁰/ρ)`.
pub fn variable_first_step(
    v0: &Field,
    coeffs: &VariableCoefficients,
    problem: &Problem,
    config: &SchemeConfig,
    h_t: f64,
) -> Result<VariableFirstStep> {
    if config.use_analytic_lu0 {
        return Err(SolverError::InvalidConfig(
            "the analytic first step is not defined for variable coefficients".into(),
        ));
    }
    let grid = v0.grid().clone();
    let mut w = Field::zeros(&grid);
    for k in 0..grid.dim() {
        let vkk = compute_auxiliary_variable(v0, 0.0, problem, coeffs, k)?;
        for (o, (s, c)) in w.as_slice_mut().iter_mut().zip(
            vkk.as_slice()
                .iter()
                .zip(coeffs.a_sq_over_rho[k].as_slice()),
        ) {
            *o += c * s;
        }
    }
    let lw0 = apply_lh_variable(&w, &coeffs.a_sq)?;
    let u1 = {
        let u1 = problem.u1.clone();
        Field::sample(&grid, move |x| u1(x))
    };
    let lu1 = apply_lh_variable(&u1, &coeffs.a_sq)?;
    let mut u1h = Field::zeros(&grid);
    {
        let o = u1h.as_slice_mut();
        let (ud, ld, rd) = (u1.as_slice(), lu1.as_slice(), coeffs.rho.as_slice());
        for i in 0..o.len() {
            o[i] = rd[i] * ud[i] + h_t * h_t / 6.0 * ld[i];
        }
    }
    let fd = crate::scheme::f_dht0(problem, &grid, h_t, config.first_step)?;
    let f0 = Field::sample_at(&grid, 0.0, |x, t| (problem.f)(x, t));
    let mut f0_over_rho = f0;
    for (o, r) in f0_over_rho
        .as_slice_mut()
        .iter_mut()
        .zip(coeffs.rho.as_slice())
    {
        *o /= r;
    }
    let lf0 = apply_lh_variable(&f0_over_rho, &coeffs.a_sq)?;
    let mut f0h = fd;
    for (o, l) in f0h.as_slice_mut().iter_mut().zip(lf0.as_slice()) {
        *o += h_t * h_t / 12.0 * l;
    }
    let c = h_t * h_t / 12.0;
    let half = 0.5 * h_t;
    let mut v1 = Field::zeros(&grid);
    {
        let o = v1.as_slice_mut();
        let (v0d, wd, ld, ud, fdh, rd) = (
            v0.as_slice(),
            w.as_slice(),
            lw0.as_slice(),
            u1h.as_slice(),
            f0h.as_slice(),
            coeffs.rho.as_slice(),
        );
        for i in 0..o.len() {
            let inner = (half * (rd[i] * wd[i] + c * ld[i]) + ud[i]) + half * fdh[i];
            o[i] = v0d[i] + h_t * (inner / rd[i]);
        }
    }
    let g = problem.g.clone();
    v1.set_boundary(|x| g(x, h_t));
    Ok(VariableFirstStep { v1, w0: w })
}

/// One variable-coefficient step:
/// `v^{m+1} = 2v^m - v^{m-1} + h_t²[(ρI + h_t²L_h/12)W̃ + f*]/ρ`.
pub fn step_variable_coeff(
    state: &SchemeState,
    coeffs: &VariableCoefficients,
    f_star: &Field,
    problem: &Problem,
    h_t: f64,
    t_next: f64,
) -> Result<Field> {
    let lw = apply_lh_variable(&state.w, &coeffs.a_sq)?;
    let c = h_t * h_t / 12.0;
    let mut rhs = Field::zeros(state.w.grid());
    {
        let o = rhs.as_slice_mut();
        let (wd, ld, fd, rd) = (
            state.w.as_slice(),
            lw.as_slice(),
            f_star.as_slice(),
            coeffs.rho.as_slice(),
        );
        for i in 0..o.len() {
            o[i] = ((rd[i] * wd[i] + c * ld[i]) + fd[i]) / rd[i];
        }
    }
    let mut v_next = combine_three_level(&state.v_curr, &state.v_prev, h_t, h_t, h_t, &rhs);
    let g = problem.g.clone();
    v_next.set_boundary(|x| g(x, t_next));
    Ok(v_next)
}

/// Runs the variable-coefficient scheme on a uniform time mesh.
///
/// The stability certificate is the conservative frozen-coefficient bound
/// with per-node maximal speeds; it is advisory and never rejects the run.
pub fn run_variable(
    problem: &Problem,
    grid: &Arc<Grid>,
    tmesh: &TimeMesh,
    coeffs: &VariableCoefficients,
    config: &SchemeConfig,
    options: &RunOptions,
) -> Result<(SchemeState, RunReport)> {
    config.validate(grid.dim())?;
    if !tmesh.is_uniform() {
        return Err(SolverError::InvalidConfig(
            "the variable-coefficient stepper needs a uniform time mesh".into(),
        ));
    }
    let solves_before = line_solve_count();
    let h_t = tmesh.step_hint();
    let certificate =
        stability::frozen_coefficient_certificate(grid, &coeffs.a_sq, h_t, config.eps, config.eps0);
    let v0 = initial_level(grid, problem);
    let first = variable_first_step(&v0, coeffs, problem, config, h_t)?;
    if !first.v1.all_finite() {
        return Err(SolverError::Diverged { step: 1 });
    }
    let mut error_tracker = match (&problem.exact, options.track_error) {
        (Some(exact), true) => {
            let mut tr = ErrorTracker::new(
                grid,
                exact.clone(),
                &v0,
                0.0,
                LhOperator::Variable(coeffs.a_sq.clone()),
                config.eps,
                config.eps0,
            )?;
            tr.record(&first.v1, h_t, h_t)?;
            Some(tr)
        }
        _ => None,
    };
    let st = time_stencil_at(tmesh, 1)?;
    let mut f_prev = Field::sample_at(grid, 0.0, |x, t| (problem.f)(x, t));
    let mut f_curr = Field::sample_at(grid, tmesh.node(1), |x, t| (problem.f)(x, t));
    let mut state = SchemeState {
        v_prev: v0,
        v_curr: first.v1.clone(),
        level: 1,
        w: Field::zeros(grid),
    };
    for m in 1..tmesh.n_steps() {
        let t_m = tmesh.node(m);
        let t_next = tmesh.node(m + 1);
        state.w.fill(0.0);
        for k in 0..grid.dim() {
            let vkk = compute_auxiliary_variable(&state.v_curr, t_m, problem, coeffs, k)?;
            for (o, (s, c)) in state.w.as_slice_mut().iter_mut().zip(
                vkk.as_slice()
                    .iter()
                    .zip(coeffs.a_sq_over_rho[k].as_slice()),
            ) {
                *o += c * s;
            }
        }
        let f_next = Field::sample_at(grid, t_next, |x, t| (problem.f)(x, t));
        let mut f_over_rho = f_curr.clone();
        for (o, r) in f_over_rho
            .as_slice_mut()
            .iter_mut()
            .zip(coeffs.rho.as_slice())
        {
            *o /= r;
        }
        let lhf = apply_lh_variable(&f_over_rho, &coeffs.a_sq)?;
        let f_star = f_star_from_samples(&st, &f_prev, &f_curr, &f_next, &lhf);
        let v_next = step_variable_coeff(&state, coeffs, &f_star, problem, h_t, t_next)?;
        if !v_next.all_finite() {
            return Err(SolverError::Diverged { step: m + 1 });
        }
        if let Some(tracker) = error_tracker.as_mut() {
            tracker.record(&v_next, t_next, h_t)?;
        }
        state.v_prev = std::mem::replace(&mut state.v_curr, v_next);
        state.level = m + 1;
        f_prev = std::mem::replace(&mut f_curr, f_next);
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
