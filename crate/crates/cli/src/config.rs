//! Run configuration: TOML schema, resolution against the problem catalog or
//! expression-defined data, and the resolved-case echo embedded in summaries.

use std::sync::Arc;

use serde::Deserialize;

use compactwave::grid::{Axis, Grid, TimeMesh};
use compactwave::problems::{
    self, dirichlet_zero_gk, zero_space, zero_space_time, Problem, SpaceFn, SpaceTimeFn,
};
use compactwave::scheme::{AuxBoundaryAtZero, FirstStepVariant, RunOptions, SchemeConfig};
use compactwave::stability;
use compactwave::SolverError;

use crate::expr::Expr;
use crate::fmt_f64;

#[derive(Debug, Deserialize, Default, Clone)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub id: Option<String>,
    pub dim: Option<usize>,
    pub f: Option<String>,
    pub u0: Option<String>,
    pub u1: Option<String>,
    pub g: Option<String>,
    pub g_k: Option<Vec<String>>,
    pub exact: Option<String>,
    pub f_dt: Option<String>,
    pub f_dtt: Option<String>,
    pub rho: Option<String>,
    pub rho_floor: Option<f64>,
    pub var_speeds: Option<Vec<String>>,
}

#[derive(Debug, Deserialize, Default, Clone)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub extents: Option<Vec<f64>>,
    pub cells: Option<Vec<usize>>,
    /// Per-axis largest/smallest step ratio; 1 keeps an axis uniform.
    pub grading: Option<Vec<f64>>,
    /// Explicit per-axis node lists; overrides extents/cells/grading.
    pub nodes: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Deserialize, Default, Clone)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    pub total: Option<f64>,
    pub steps: Option<usize>,
    /// Fraction of the sufficient step used when `steps` is omitted.
    pub safety: Option<f64>,
    /// Largest/smallest step ratio; 1 keeps the mesh uniform.
    pub grading: Option<f64>,
    pub nodes: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize, Default, Clone)]
#[serde(deny_unknown_fields)]
pub struct SchemeSection {
    pub speeds: Option<Vec<f64>>,
    pub eps: Option<f64>,
    pub eps0: Option<f64>,
    pub first_step: Option<String>,
    pub enforce_stability: Option<bool>,
    pub use_analytic_lu0: Option<bool>,
    pub use_analytic_lu1: Option<bool>,
    pub method: Option<String>,
}

#[derive(Debug, Deserialize, Default, Clone)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsSection {
    pub energy_ledger: Option<bool>,
    pub scalar_residual: Option<bool>,
    pub bk_injection: Option<f64>,
}

#[derive(Debug, Deserialize, Default, Clone)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<String>,
    pub snapshots: Option<bool>,
}

#[derive(Debug, Deserialize, Clone)]
pub struct ConfigFile {
    pub problem: ProblemSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub time: TimeSection,
    #[serde(default)]
    pub scheme: SchemeSection,
    #[serde(default)]
    pub diagnostics: DiagnosticsSection,
    #[serde(default)]
    pub output: OutputSection,
    /// Ignored on input; lets an emitted summary be re-run as a config.
    #[serde(default)]
    #[allow(dead_code)]
    pub report: Option<toml::Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Compact,
    SecondOrder,
}

/// Everything needed to execute one case, plus the echo that reproduces it.
pub struct ResolvedCase {
    pub name: String,
    pub problem: Problem,
    pub rho: Option<SpaceFn>,
    pub var_speeds: Option<Vec<SpaceFn>>,
    pub rho_floor: f64,
    pub grid: Arc<Grid>,
    pub tmesh: TimeMesh,
    pub scheme: SchemeConfig,
    pub method: Method,
    pub options: RunOptions,
    pub bk_injection: f64,
    pub snapshots: bool,
    /// Grid metadata retained for studies and the echo.
    pub extents: Vec<f64>,
    pub cells: Vec<usize>,
    pub grading: Vec<f64>,
    pub total_time: f64,
    pub time_grading: f64,
    pub dt_safety: f64,
}

pub fn parse_config(text: &str) -> Result<ConfigFile, SolverError> {
    toml::from_str(text).map_err(|e| SolverError::InvalidConfig(format!("config parse: {e}")))
}

fn expr_space(src: &str, dim: usize, what: &str) -> Result<SpaceFn, SolverError> {
    let e = Expr::parse(src, dim)
        .map_err(|err| SolverError::InvalidConfig(format!("{what}: {err}")))?;
    Ok(Arc::new(move |x: &[f64]| e.eval(x, 0.0)))
}

fn expr_space_time(src: &str, dim: usize, what: &str) -> Result<SpaceTimeFn, SolverError> {
    let e = Expr::parse(src, dim)
        .map_err(|err| SolverError::InvalidConfig(format!("{what}: {err}")))?;
    Ok(Arc::new(move |x: &[f64], t: f64| e.eval(x, t)))
}

struct ProblemBundle {
    name: String,
    problem: Problem,
    rho: Option<SpaceFn>,
    var_speeds: Option<Vec<SpaceFn>>,
    rho_floor: f64,
    extents: Vec<f64>,
    speeds: Vec<f64>,
    cells: Vec<usize>,
    total_time: f64,
    grading: Vec<f64>,
    time_grading: f64,
}

fn resolve_problem(cfg: &ConfigFile) -> Result<ProblemBundle, SolverError> {
    if let Some(id) = &cfg.problem.id {
        let entry = problems::entry(id)?;
        let built = problems::build(id)?;
        return Ok(ProblemBundle {
            name: id.clone(),
            problem: built.problem,
            rho: built.rho,
            var_speeds: built.var_speeds,
            rho_floor: built.rho_floor,
            extents: entry.extents,
            speeds: entry.speeds,
            cells: entry.default_cells,
            total_time: entry.default_time,
            grading: entry.space_compression,
            time_grading: entry.time_compression,
        });
    }
    // Expression-defined problem.
    let dim = cfg
        .problem
        .dim
        .or_else(|| cfg.grid.extents.as_ref().map(|e| e.len()))
        .ok_or_else(|| {
            SolverError::InvalidConfig(
                "expression problems need problem.dim or grid.extents".into(),
            )
        })?;
    let extents = cfg.grid.extents.clone().unwrap_or_else(|| vec![1.0; dim]);
    if extents.len() != dim {
        return Err(SolverError::InvalidConfig(
            "grid.extents length disagrees with problem.dim".into(),
        ));
    }
    let f = match &cfg.problem.f {
        Some(src) => expr_space_time(src, dim, "problem.f")?,
        None => zero_space_time(),
    };
    let u0 = match &cfg.problem.u0 {
        Some(src) => expr_space(src, dim, "problem.u0")?,
        None => zero_space(),
    };
    let u1 = match &cfg.problem.u1 {
        Some(src) => expr_space(src, dim, "problem.u1")?,
        None => zero_space(),
    };
    let g_src = cfg.problem.g.clone().unwrap_or_else(|| "0".into());
    let g = expr_space_time(&g_src, dim, "problem.g")?;
    let g_is_zero = g_src.trim() == "0" || g_src.trim() == "0.0";
    let g_k = match &cfg.problem.g_k {
        Some(list) => {
            if list.len() != dim {
                return Err(SolverError::InvalidConfig(format!(
                    "problem.g_k needs {dim} entries, got {}",
                    list.len()
                )));
            }
            list.iter()
                .map(|src| expr_space_time(src, dim, "problem.g_k"))
                .collect::<Result<Vec<_>, _>>()?
        }
        None if g_is_zero => dirichlet_zero_gk(dim, &extents, f.clone()),
        None => {
            return Err(SolverError::InvalidConfig(
                "problem.g_k is required when g is not identically zero".into(),
            ))
        }
    };
    let exact = cfg
        .problem
        .exact
        .as_ref()
        .map(|src| expr_space_time(src, dim, "problem.exact"))
        .transpose()?;
    let f_dt = cfg
        .problem
        .f_dt
        .as_ref()
        .map(|src| expr_space_time(src, dim, "problem.f_dt"))
        .transpose()?;
    let f_dtt = cfg
        .problem
        .f_dtt
        .as_ref()
        .map(|src| expr_space_time(src, dim, "problem.f_dtt"))
        .transpose()?;
    let rho = cfg
        .problem
        .rho
        .as_ref()
        .map(|src| expr_space(src, dim, "problem.rho"))
        .transpose()?;
    let var_speeds = cfg
        .problem
        .var_speeds
        .as_ref()
        .map(|list| {
            list.iter()
                .map(|src| expr_space(src, dim, "problem.var_speeds"))
                .collect::<Result<Vec<_>, _>>()
        })
        .transpose()?;
    let problem = Problem {
        dim,
        f,
        u0,
        u1,
        g,
        g_k,
        exact,
        b: None,
        f_dt,
        f_dtt,
        lu0: None,
        lu1: None,
        d2u0: None,
    };
    Ok(ProblemBundle {
        name: "custom".into(),
        problem,
        rho,
        var_speeds,
        rho_floor: cfg.problem.rho_floor.unwrap_or(1e-8),
        extents,
        speeds: vec![1.0; dim],
        cells: vec![32; dim],
        total_time: 1.0,
        grading: vec![1.0; dim],
        time_grading: 1.0,
    })
}

fn build_axis(extent: f64, cells: usize, compression: f64) -> Result<Axis, SolverError> {
    if compression == 1.0 {
        Axis::uniform(extent, cells)
    } else {
        let ratio = compression.powf(1.0 / (cells as f64 - 1.0));
        Axis::graded(extent, cells, ratio)
    }
}

/// Resolves a parsed configuration into a runnable case.
pub fn resolve(cfg: &ConfigFile) -> Result<ResolvedCase, SolverError> {
    let bundle = resolve_problem(cfg)?;
    let dim = bundle.problem.dim;

    let extents = cfg.grid.extents.clone().unwrap_or(bundle.extents);
    let cells = cfg.grid.cells.clone().unwrap_or(bundle.cells);
    let grading = cfg.grid.grading.clone().unwrap_or(bundle.grading);
    if extents.len() != dim || cells.len() != dim || grading.len() != dim {
        return Err(SolverError::InvalidConfig(format!(
            "grid sections must have {dim} entries (extents {}, cells {}, grading {})",
            extents.len(),
            cells.len(),
            grading.len()
        )));
    }
    let grid = if let Some(node_lists) = &cfg.grid.nodes {
        if node_lists.len() != dim {
            return Err(SolverError::InvalidConfig(
                "grid.nodes needs one node list per axis".into(),
            ));
        }
        let axes = node_lists
            .iter()
            .map(|nodes| Axis::from_nodes(nodes.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        Grid::new(axes)?
    } else {
        let axes = extents
            .iter()
            .zip(&cells)
            .zip(&grading)
            .map(|((&x, &n), &c)| build_axis(x, n, c))
            .collect::<Result<Vec<_>, _>>()?;
        Grid::new(axes)?
    };

    let mut scheme = SchemeConfig::new(cfg.scheme.speeds.clone().unwrap_or(bundle.speeds));
    if let Some(eps) = cfg.scheme.eps {
        scheme.eps = eps;
    }
    if let Some(eps0) = cfg.scheme.eps0 {
        scheme.eps0 = eps0;
    }
    if let Some(fs) = &cfg.scheme.first_step {
        scheme.first_step = match fs.as_str() {
            "three-level" => FirstStepVariant::ThreeLevel,
            "two-level" => FirstStepVariant::TwoLevel,
            "analytic" => FirstStepVariant::AnalyticDerivatives,
            other => {
                return Err(SolverError::InvalidConfig(format!(
                    "unknown first_step '{other}' (use three-level | two-level | analytic)"
                )))
            }
        };
    }
    if let Some(enforce) = cfg.scheme.enforce_stability {
        scheme.enforce_stability = enforce;
    }
    scheme.use_analytic_lu0 = cfg.scheme.use_analytic_lu0.unwrap_or(false);
    scheme.use_analytic_lu1 = cfg.scheme.use_analytic_lu1.unwrap_or(false);
    scheme.aux_bc0 = AuxBoundaryAtZero::BoundaryData;
    scheme.validate(dim)?;

    let method = match cfg.scheme.method.as_deref() {
        None | Some("compact") => Method::Compact,
        Some("second-order") => Method::SecondOrder,
        Some(other) => {
            return Err(SolverError::InvalidConfig(format!(
                "unknown method '{other}' (use compact | second-order)"
            )))
        }
    };

    let total_time = cfg.time.total.unwrap_or(bundle.total_time);
    let time_grading = cfg.time.grading.unwrap_or(bundle.time_grading);
    let dt_safety = cfg.time.safety.unwrap_or(0.8);
    let tmesh = if let Some(nodes) = &cfg.time.nodes {
        TimeMesh::from_nodes(nodes.clone())?
    } else {
        let steps = match cfg.time.steps {
            Some(m) => m,
            None => {
                let dt = dt_safety
                    * stability::sufficient_dt(&grid, &scheme.speeds, scheme.eps, scheme.eps0);
                ((total_time / dt).ceil() as usize).max(2)
            }
        };
        if time_grading == 1.0 {
            TimeMesh::uniform(total_time, steps)?
        } else {
            let ratio = time_grading.powf(1.0 / (steps as f64 - 1.0));
            TimeMesh::graded(total_time, steps, ratio)?
        }
    };

    let options = RunOptions {
        energy_ledger: cfg.diagnostics.energy_ledger.unwrap_or(false),
        scalar_residual: cfg.diagnostics.scalar_residual.unwrap_or(false),
        track_error: true,
    };

    Ok(ResolvedCase {
        name: bundle.name,
        problem: bundle.problem,
        rho: bundle.rho,
        var_speeds: bundle.var_speeds,
        rho_floor: bundle.rho_floor,
        total_time: tmesh.total(),
        grid,
        tmesh,
        scheme,
        method,
        options,
        bk_injection: cfg.diagnostics.bk_injection.unwrap_or(0.0),
        snapshots: cfg.output.snapshots.unwrap_or(true),
        extents,
        cells,
        grading,
        time_grading,
        dt_safety,
    })
}

/// Re-serializes the resolved case as a config that reproduces the run.
pub fn echo_config(case: &ResolvedCase, cfg: &ConfigFile) -> String {
    let mut out = String::new();
    out.push_str("[problem]\n");
    if let Some(id) = &cfg.problem.id {
        out.push_str(&format!("id = \"{id}\"\n"));
    } else {
        let p = &cfg.problem;
        out.push_str(&format!("dim = {}\n", case.problem.dim));
        for (key, value) in [
            ("f", &p.f),
            ("u0", &p.u0),
            ("u1", &p.u1),
            ("g", &p.g),
            ("exact", &p.exact),
            ("f_dt", &p.f_dt),
            ("f_dtt", &p.f_dtt),
            ("rho", &p.rho),
        ] {
            if let Some(v) = value {
                out.push_str(&format!("{key} = \"{v}\"\n"));
            }
        }
        if let Some(gk) = &p.g_k {
            let parts: Vec<String> = gk.iter().map(|s| format!("\"{s}\"")).collect();
            out.push_str(&format!("g_k = [{}]\n", parts.join(", ")));
        }
        if let Some(vs) = &p.var_speeds {
            let parts: Vec<String> = vs.iter().map(|s| format!("\"{s}\"")).collect();
            out.push_str(&format!("var_speeds = [{}]\n", parts.join(", ")));
        }
        if let Some(floor) = p.rho_floor {
            out.push_str(&format!("rho_floor = {}\n", fmt_f64(floor)));
        }
    }
    out.push_str("\n[grid]\n");
    out.push_str(&format!(
        "extents = [{}]\n",
        case.extents
            .iter()
            .map(|v| fmt_f64(*v))
            .collect::<Vec<_>>()
            .join(", ")
    ));
    out.push_str(&format!(
        "cells = [{}]\n",
        case.cells
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(", ")
    ));
    out.push_str(&format!(
        "grading = [{}]\n",
        case.grading
            .iter()
            .map(|v| fmt_f64(*v))
            .collect::<Vec<_>>()
            .join(", ")
    ));
    out.push_str("\n[time]\n");
    out.push_str(&format!("total = {}\n", fmt_f64(case.total_time)));
    out.push_str(&format!("steps = {}\n", case.tmesh.n_steps()));
    out.push_str(&format!("grading = {}\n", fmt_f64(case.time_grading)));
    out.push_str("\n[scheme]\n");
    out.push_str(&format!(
        "speeds = [{}]\n",
        case.scheme
            .speeds
            .iter()
            .map(|v| fmt_f64(*v))
            .collect::<Vec<_>>()
            .join(", ")
    ));
    out.push_str(&format!("eps = {}\n", fmt_f64(case.scheme.eps)));
    out.push_str(&format!("eps0 = {}\n", fmt_f64(case.scheme.eps0)));
    out.push_str(&format!(
        "first_step = \"{}\"\n",
        match case.scheme.first_step {
            FirstStepVariant::ThreeLevel => "three-level",
            FirstStepVariant::TwoLevel => "two-level",
            FirstStepVariant::AnalyticDerivatives => "analytic",
        }
    ));
    out.push_str(&format!(
        "enforce_stability = {}\n",
        case.scheme.enforce_stability
    ));
    out.push_str(&format!(
        "method = \"{}\"\n",
        match case.method {
            Method::Compact => "compact",
            Method::SecondOrder => "second-order",
        }
    ));
    out.push_str("\n[diagnostics]\n");
    out.push_str(&format!("energy_ledger = {}\n", case.options.energy_ledger));
    out.push_str(&format!(
        "scalar_residual = {}\n",
        case.options.scalar_residual
    ));
    out.push_str(&format!("bk_injection = {}\n", fmt_f64(case.bk_injection)));
    out.push_str("\n[output]\n");
    out.push_str(&format!("snapshots = {}\n", case.snapshots));
    out
}
