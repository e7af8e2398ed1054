//! Convergence-study harness: runs a problem across refinement levels with
//! jointly halved space and time steps and reports per-norm orders.

use std::sync::Arc;

use crate::error::{Result, SolverError};
use crate::extensions::{run_nonuniform_time, run_variable, VariableCoefficients};
use crate::grid::{Axis, Grid, TimeMesh};
use crate::problems::{BuiltProblem, Problem};
use crate::scheme::{run, run_second_order, RunOptions, SchemeConfig};
use crate::stability;

/// Spatial mesh family used at every refinement level.
#[derive(Debug, Clone)]
pub enum MeshFamily {
    Uniform,
    /// Smooth geometric grading with a fixed largest-to-smallest step ratio
    /// per axis; the per-cell ratio tends to 1 under refinement.
    Graded {
        compression: Vec<f64>,
    },
    /// Independent random node perturbation of relative `amplitude` (< 0.5),
    /// deterministic in `seed`; deliberately non-smooth.
    Perturbed {
        amplitude: f64,
        seed: u64,
    },
}

/// Time mesh family.
#[derive(Debug, Clone)]
pub enum TimeFamily {
    Uniform,
    /// Smooth geometric grading with fixed total compression.
    Graded {
        compression: f64,
    },
}

/// Which scheme the study runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudyMethod {
    Compact,
    /// Classical second-order explicit control.
    SecondOrder,
}

/// Study parameters; level `i` uses `base_cells · 2^i` cells per axis and a
/// time step proportional to the sufficient step of that grid.
#[derive(Debug, Clone)]
pub struct StudySpec {
    pub extents: Vec<f64>,
    pub base_cells: Vec<usize>,
    pub levels: usize,
    pub total_time: f64,
    /// Fraction of the closed-form sufficient step used as the target step.
    pub dt_safety: f64,
    pub mesh: MeshFamily,
    pub time: TimeFamily,
    pub method: StudyMethod,
}

#[derive(Debug, Clone)]
pub struct StudyRow {
    pub level: usize,
    pub cells: Vec<usize>,
    pub h_max: f64,
    pub dt: f64,
    pub steps: usize,
    pub energy_error: f64,
    pub l2_error: f64,
    /// Orders against the previous level.
    pub order_energy: Option<f64>,
    pub order_l2: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct StudyReport {
    pub rows: Vec<StudyRow>,
    /// Least-squares slope of log2(error) against log2(h_max).
    pub slope_energy: f64,
    pub slope_l2: f64,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Uniform nodes with each interior node shifted by `amplitude · h · θ`,
/// `θ ∈ (-1, 1)` pseudo-random; keeps the nodes strictly ascending for
/// `amplitude < 0.5`.
fn perturbed_axis(extent: f64, cells: usize, amplitude: f64, seed: u64) -> Result<Axis> {
    let h = extent / cells as f64;
    let mut state = seed;
    let mut nodes = Vec::with_capacity(cells + 1);
    nodes.push(0.0);
    for l in 1..cells {
        let r = splitmix64(&mut state);
        let theta = (r >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0;
        nodes.push(l as f64 * h + amplitude * h * theta);
    }
    nodes.push(extent);
    Axis::from_nodes(nodes)
}

fn build_grid(spec: &StudySpec, level: usize) -> Result<Arc<Grid>> {
    let factor = 1usize << level;
    let mut axes = Vec::with_capacity(spec.extents.len());
    for (k, (&extent, &base)) in spec.extents.iter().zip(&spec.base_cells).enumerate() {
        let cells = base * factor;
        let axis = match &spec.mesh {
            MeshFamily::Uniform => Axis::uniform(extent, cells)?,
            MeshFamily::Graded { compression } => {
                let c = compression[k];
                if c == 1.0 {
                    Axis::uniform(extent, cells)?
                } else {
                    // Fixed largest/smallest ratio: per-cell ratio C^(1/(N-1)).
                    let ratio = c.powf(1.0 / (cells as f64 - 1.0));
                    Axis::graded(extent, cells, ratio)?
                }
            }
            MeshFamily::Perturbed { amplitude, seed } => perturbed_axis(
                extent,
                cells,
                *amplitude,
                seed ^ ((level as u64) << 32) ^ (k as u64),
            )?,
        };
        axes.push(axis);
    }
    Grid::new(axes)
}

fn build_time_mesh(spec: &StudySpec, grid: &Grid, config: &SchemeConfig) -> Result<TimeMesh> {
    let dt_target =
        spec.dt_safety * stability::sufficient_dt(grid, &config.speeds, config.eps, config.eps0);
    let mut m = (spec.total_time / dt_target).ceil() as usize;
    if m < 2 {
        m = 2;
    }
    match &spec.time {
        TimeFamily::Uniform => TimeMesh::uniform(spec.total_time, m),
        TimeFamily::Graded { compression } => {
            if *compression == 1.0 {
                return TimeMesh::uniform(spec.total_time, m);
            }
            // Grow M until the largest graded step fits the target.
            loop {
                let ratio = compression.powf(1.0 / (m as f64 - 1.0));
                let mesh = TimeMesh::graded(spec.total_time, m, ratio)?;
                if mesh.max_step() <= dt_target {
                    return Ok(mesh);
                }
                m += m / 8 + 1;
            }
        }
    }
}

fn fitted_slope(points: &[(f64, f64)]) -> f64 {
    // Least squares on (log2 h, log2 err).
    let n = points.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(h, e) in points {
        let x = h.log2();
        let y = e.log2();
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

/// Runs the study; errors are the maximal energy-norm and L2 mismatches
/// against the exact solution.
pub fn run_study(
    built: &BuiltProblem,
    config: &SchemeConfig,
    spec: &StudySpec,
) -> Result<StudyReport> {
    if spec.levels < 3 {
        return Err(SolverError::InvalidConfig(format!(
            "a convergence study needs at least 3 levels, got {}",
            spec.levels
        )));
    }
    let problem: &Problem = &built.problem;
    if problem.exact.is_none() {
        return Err(SolverError::DiagnosticUnavailable(
            "convergence studies need an exact solution".into(),
        ));
    }
    let options = RunOptions {
        energy_ledger: false,
        scalar_residual: false,
        track_error: true,
    };
    let mut rows: Vec<StudyRow> = Vec::with_capacity(spec.levels);
    for level in 0..spec.levels {
        let grid = build_grid(spec, level)?;
        let tmesh = build_time_mesh(spec, &grid, config)?;
        let cert = stability::certificate(
            &grid,
            &config.speeds,
            tmesh.max_step(),
            config.eps,
            config.eps0,
        )?;
        if !cert.ok() && built.rho.is_none() {
            return Err(SolverError::StabilityRejected {
                condition: format!("level {level} exceeds the stability bound"),
                slack: cert.condition1_slack.min(cert.condition2_slack),
            });
        }
        let report = match (&built.rho, &spec.time) {
            (Some(rho), _) => {
                let coeffs = VariableCoefficients::new(
                    &grid,
                    rho.clone(),
                    built.var_speeds.clone().unwrap_or_default(),
                    built.rho_floor,
                )?;
                run_variable(problem, &grid, &tmesh, &coeffs, config, &options)?.1
            }
            (None, TimeFamily::Graded { compression }) if *compression != 1.0 => {
                run_nonuniform_time(problem, &grid, &tmesh, config, &options)?.1
            }
            (None, _) => match spec.method {
                StudyMethod::Compact => {
                    if tmesh.is_uniform() {
                        run(problem, &grid, &tmesh, config, &options)?.1
                    } else {
                        run_nonuniform_time(problem, &grid, &tmesh, config, &options)?.1
                    }
                }
                StudyMethod::SecondOrder => {
                    run_second_order(problem, &grid, &tmesh, config, &options)?.1
                }
            },
        };
        let errors = report.errors.as_ref().ok_or_else(|| {
            SolverError::DiagnosticUnavailable("run produced no error norms".into())
        })?;
        let h_max = grid
            .axes()
            .iter()
            .map(|a| {
                if a.is_uniform() {
                    a.step_hint()
                } else {
                    a.steps().iter().cloned().fold(0.0, f64::max)
                }
            })
            .fold(0.0, f64::max);
        let prev = rows.last();
        let order = |prev_err: f64, err: f64| (prev_err / err).log2();
        rows.push(StudyRow {
            level,
            cells: grid.axes().iter().map(|a| a.n_cells()).collect(),
            h_max,
            dt: report.dt,
            steps: report.steps,
            energy_error: errors.energy,
            l2_error: errors.l2,
            order_energy: prev.map(|p| order(p.energy_error, errors.energy)),
            order_l2: prev.map(|p| order(p.l2_error, errors.l2)),
        });
    }
    let pts_e: Vec<(f64, f64)> = rows.iter().map(|r| (r.h_max, r.energy_error)).collect();
    let pts_l: Vec<(f64, f64)> = rows.iter().map(|r| (r.h_max, r.l2_error)).collect();
    Ok(StudyReport {
        slope_energy: fitted_slope(&pts_e),
        slope_l2: fitted_slope(&pts_l),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems;

    #[test]
    fn study_rejects_too_few_levels() {
        let built = problems::build("standing-wave-1d").unwrap();
        let config = SchemeConfig::new(vec![1.0]);
        let spec = StudySpec {
            extents: vec![1.0],
            base_cells: vec![8],
            levels: 2,
            total_time: 0.5,
            dt_safety: 0.8,
            mesh: MeshFamily::Uniform,
            time: TimeFamily::Uniform,
            method: StudyMethod::Compact,
        };
        assert!(matches!(
            run_study(&built, &config, &spec),
            Err(SolverError::InvalidConfig(_))
        ));
    }

    #[test]
    fn perturbed_axis_is_deterministic_and_valid() {
        let a1 = perturbed_axis(1.0, 32, 0.3, 7).unwrap();
        let a2 = perturbed_axis(1.0, 32, 0.3, 7).unwrap();
        assert_eq!(a1.nodes(), a2.nodes());
        assert!(!a1.is_uniform());
        let b = perturbed_axis(1.0, 32, 0.3, 8).unwrap();
        assert_ne!(a1.nodes(), b.nodes());
    }

    #[test]
    fn fitted_slope_recovers_exact_power() {
        let pts: Vec<(f64, f64)> = (0..4)
            .map(|i| {
                let h = 0.1 / (1 << i) as f64;
                (h, 3.0 * h.powi(4))
            })
            .collect();
        assert!((fitted_slope(&pts) - 4.0).abs() < 1e-12);
    }
}
