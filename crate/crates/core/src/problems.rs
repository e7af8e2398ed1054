//! Problem data for the wave equation and the built-in catalog of
//! manufactured solutions used by tests, studies and the CLI.
//!
//! A [`Problem`] carries the free term, initial data, Dirichlet boundary data
//! `g`, and the per-axis boundary data `g_k` for the auxiliary second
//! derivatives. `g_k` is always supplied analytically; the solver never
//! differentiates `g` numerically, since that would pollute the scheme's
//! order. For each manufactured solution the catalog derives all data from
//! closed-form derivatives.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Result, SolverError};

pub type SpaceFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type SpaceTimeFn = Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>;

pub fn space_fn(f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> SpaceFn {
    Arc::new(f)
}

pub fn space_time_fn(f: impl Fn(&[f64], f64) -> f64 + Send + Sync + 'static) -> SpaceTimeFn {
    Arc::new(f)
}

pub fn zero_space() -> SpaceFn {
    space_fn(|_| 0.0)
}

pub fn zero_space_time() -> SpaceTimeFn {
    space_time_fn(|_, _| 0.0)
}

/// Initial-boundary value problem data.
#[derive(Clone)]
pub struct Problem {
    pub dim: usize,
    /// Free term `f(x, t)`.
    pub f: SpaceTimeFn,
    /// Initial displacement `u_0(x)`.
    pub u0: SpaceFn,
    /// Initial velocity `u_1(x)`.
    pub u1: SpaceFn,
    /// Dirichlet boundary data `g(x, t)`.
    pub g: SpaceTimeFn,
    /// Per-axis boundary data for the scaled second derivatives,
    /// `a_k² ∂_k² u` on the boundary.
    pub g_k: Vec<SpaceTimeFn>,
    /// Exact solution, when known.
    pub exact: Option<SpaceTimeFn>,
    /// Auxiliary free terms `b_k(x, t)`; absent means identically zero.
    pub b: Option<Vec<SpaceTimeFn>>,
    /// `∂_t f`, needed by the analytic first-step free-term variant.
    pub f_dt: Option<SpaceTimeFn>,
    /// `∂_t² f`, needed by the analytic first-step free-term variant.
    pub f_dtt: Option<SpaceTimeFn>,
    /// `L u_0`, enabling the simplified first step without auxiliary solves.
    pub lu0: Option<SpaceFn>,
    /// `L u_1`, optional analytic form of the non-uniform-in-time drift term.
    pub lu1: Option<SpaceFn>,
    /// `∂_k² u_0`, optional boundary data for the auxiliaries at t = 0.
    pub d2u0: Option<Vec<SpaceFn>>,
}

impl Problem {
    /// Minimal problem with homogeneous boundary data.
    pub fn new(dim: usize, f: SpaceTimeFn, u0: SpaceFn, u1: SpaceFn) -> Self {
        Problem {
            dim,
            f: f.clone(),
            u0,
            u1,
            g: zero_space_time(),
            g_k: dirichlet_zero_gk(dim, &[], f),
            exact: None,
            b: None,
            f_dt: None,
            f_dtt: None,
            lu0: None,
            lu1: None,
            d2u0: None,
        }
    }

    /// Replaces the auxiliary free terms with the constant `magnitude` on
    /// every axis; models injected round-off noise.
    pub fn with_constant_b(mut self, magnitude: f64) -> Self {
        self.b = Some(
            (0..self.dim)
                .map(|_| space_time_fn(move |_, _| magnitude))
                .collect(),
        );
        self
    }
}

/// Boundary data `g_k` for a problem with `g = 0`: the wave-equation trace
/// gives `-f` on the two faces normal to axis `k` and `0` on the remaining
/// faces (tangential second derivatives of zero boundary data vanish). Faces
/// are recognized by exact comparison with `0` and the axis extents; pass the
/// extents actually used to build the grid. With empty `extents` only the
/// `x_k = 0` face of each axis is recognized, which suffices when `f` also
/// vanishes on the boundary.
pub fn dirichlet_zero_gk(dim: usize, extents: &[f64], f: SpaceTimeFn) -> Vec<SpaceTimeFn> {
    let extents: Vec<f64> = extents.to_vec();
    (0..dim)
        .map(|k| {
            let f = f.clone();
            let extents = extents.clone();
            space_time_fn(move |x, t| {
                let on_k_face =
                    x[k] == 0.0 || extents.get(k).map(|&ext| x[k] == ext).unwrap_or(false);
                if on_k_face {
                    -f(x, t)
                } else {
                    0.0
                }
            })
        })
        .collect()
}

/// Boundary data `g_k` assembled from analytic derivatives of `g`: on the
/// two faces normal to axis `k` the wave-equation trace
/// `∂_t²g - Σ_{l≠k} a_l² ∂_l²g - f`, elsewhere `a_k² ∂_k²g`. Face membership
/// is decided by exact comparison with `0` and the extents; the normal-face
/// rule wins on edges and corners. `g_xx[l]` must supply `∂_l²g` along the
/// boundary.
pub fn gk_from_boundary_derivatives(
    extents: &[f64],
    speeds: &[f64],
    g_tt: SpaceTimeFn,
    g_xx: Vec<SpaceTimeFn>,
    f: SpaceTimeFn,
) -> Vec<SpaceTimeFn> {
    let dim = extents.len();
    let extents: Vec<f64> = extents.to_vec();
    let speeds: Vec<f64> = speeds.to_vec();
    let g_xx = Arc::new(g_xx);
    (0..dim)
        .map(|k| {
            let g_tt = g_tt.clone();
            let g_xx = g_xx.clone();
            let f = f.clone();
            let extents = extents.clone();
            let speeds = speeds.clone();
            space_time_fn(move |x, t| {
                if x[k] == 0.0 || x[k] == extents[k] {
                    let mut value = g_tt(x, t) - f(x, t);
                    for l in 0..extents.len() {
                        if l != k {
                            value -= speeds[l] * speeds[l] * g_xx[l](x, t);
                        }
                    }
                    value
                } else {
                    speeds[k] * speeds[k] * g_xx[k](x, t)
                }
            })
        })
        .collect()
}

/// One catalog entry plus its recommended discretization defaults.
#[derive(Clone)]
pub struct CatalogEntry {
    pub id: &'static str,
    pub dim: usize,
    pub description: &'static str,
    pub has_exact: bool,
    pub forced: bool,
    pub homogeneous_boundary: bool,
    pub variable_coefficients: bool,
    pub extents: Vec<f64>,
    pub speeds: Vec<f64>,
    pub default_cells: Vec<usize>,
    pub default_time: f64,
    /// Per-axis ratio of largest to smallest step; 1 keeps the axis uniform.
    pub space_compression: Vec<f64>,
    /// Same for the time mesh.
    pub time_compression: f64,
}

/// A problem from the catalog together with optional variable coefficients.
pub struct BuiltProblem {
    pub problem: Problem,
    pub rho: Option<SpaceFn>,
    pub var_speeds: Option<Vec<SpaceFn>>,
    pub rho_floor: f64,
}

/// Standing wave `u = Π_k sin(π x_k / X_k) · cos(ω t)` at the exact
/// eigenfrequency, so `f = 0` and `g = 0`.
pub fn standing_wave(extents: &[f64], speeds: &[f64]) -> Problem {
    let dim = extents.len();
    let ext: Vec<f64> = extents.to_vec();
    let spd: Vec<f64> = speeds.to_vec();
    let lambda: f64 = ext
        .iter()
        .zip(&spd)
        .map(|(x, a)| (a * PI / x).powi(2))
        .sum();
    let omega = lambda.sqrt();
    let ext2 = ext.clone();
    let shape = move |x: &[f64]| -> f64 {
        x.iter()
            .zip(&ext2)
            .map(|(xi, xk)| (PI * xi / xk).sin())
            .product()
    };
    let sh = shape.clone();
    let u = space_time_fn(move |x, t| sh(x) * (omega * t).cos());
    let sh = shape.clone();
    let u0 = space_fn(move |x| sh(x));
    let sh = shape.clone();
    let lu0 = space_fn(move |x| -lambda * sh(x));
    let g_k: Vec<SpaceTimeFn> = (0..dim)
        .map(|k| {
            let sh = shape.clone();
            let coeff = -(spd[k] * PI / ext[k]).powi(2);
            space_time_fn(move |x, t| coeff * sh(x) * (omega * t).cos())
        })
        .collect();
    let d2u0: Vec<SpaceFn> = (0..dim)
        .map(|k| {
            let sh = shape.clone();
            let coeff = -(PI / extents[k]).powi(2);
            space_fn(move |x| coeff * sh(x))
        })
        .collect();
    Problem {
        dim,
        f: zero_space_time(),
        u0,
        u1: zero_space(),
        g: zero_space_time(),
        g_k,
        exact: Some(u),
        b: None,
        f_dt: Some(zero_space_time()),
        f_dtt: Some(zero_space_time()),
        lu0: Some(lu0),
        lu1: Some(zero_space()),
        d2u0: Some(d2u0),
    }
}

/// Forced wave `u = Π_k sin(π x_k / X_k) · cos(ω t + φ)` with `ω` away from
/// the eigenfrequency, so `f ≠ 0` while `g = 0` and `f` vanishes on the
/// boundary.
pub fn forced_wave(extents: &[f64], speeds: &[f64], omega: f64, phase: f64) -> Problem {
    let dim = extents.len();
    let ext: Vec<f64> = extents.to_vec();
    let lambda: f64 = ext
        .iter()
        .zip(speeds)
        .map(|(x, a)| (a * PI / x).powi(2))
        .sum();
    let ext2 = ext.clone();
    let shape = move |x: &[f64]| -> f64 {
        x.iter()
            .zip(&ext2)
            .map(|(xi, xk)| (PI * xi / xk).sin())
            .product()
    };
    let amp = lambda - omega * omega;
    let sh = shape.clone();
    let u = space_time_fn(move |x, t| sh(x) * (omega * t + phase).cos());
    let sh = shape.clone();
    let f = space_time_fn(move |x, t| amp * sh(x) * (omega * t + phase).cos());
    let sh = shape.clone();
    let f_dt = space_time_fn(move |x, t| -amp * omega * sh(x) * (omega * t + phase).sin());
    let sh = shape.clone();
    let f_dtt = space_time_fn(move |x, t| -amp * omega * omega * sh(x) * (omega * t + phase).cos());
    let sh = shape.clone();
    let u0 = space_fn(move |x| sh(x) * phase.cos());
    let sh = shape.clone();
    let u1 = space_fn(move |x| -omega * sh(x) * phase.sin());
    let sh = shape.clone();
    let lu0 = space_fn(move |x| -lambda * sh(x) * phase.cos());
    let sh = shape.clone();
    let lu1 = space_fn(move |x| lambda * omega * sh(x) * phase.sin());
    let g_k: Vec<SpaceTimeFn> = (0..dim)
        .map(|k| {
            let sh = shape.clone();
            let coeff = -(speeds[k] * PI / extents[k]).powi(2);
            space_time_fn(move |x, t| coeff * sh(x) * (omega * t + phase).cos())
        })
        .collect();
    let d2u0: Vec<SpaceFn> = (0..dim)
        .map(|k| {
            let sh = shape.clone();
            let coeff = -(PI / extents[k]).powi(2);
            space_fn(move |x| coeff * sh(x) * phase.cos())
        })
        .collect();
    Problem {
        dim,
        f,
        u0,
        u1,
        g: zero_space_time(),
        g_k,
        exact: Some(u),
        b: None,
        f_dt: Some(f_dt),
        f_dtt: Some(f_dtt),
        lu0: Some(lu0),
        lu1: Some(lu1),
        d2u0: Some(d2u0),
    }
}

/// Traveling wave `u = sin(κ(x - a t))` in 1D; inhomogeneous boundary data.
pub fn traveling_wave_1d(kappa: f64, speed: f64) -> Problem {
    let a = speed;
    let u = space_time_fn(move |x, t| (kappa * (x[0] - a * t)).sin());
    let u0 = space_fn(move |x| (kappa * x[0]).sin());
    let u1 = space_fn(move |x| -a * kappa * (kappa * x[0]).cos());
    let g = u.clone();
    let g_1 = {
        let u = u.clone();
        space_time_fn(move |x, t| -a * a * kappa * kappa * u(x, t))
    };
    let lu0 = space_fn(move |x| -a * a * kappa * kappa * (kappa * x[0]).sin());
    let lu1 = space_fn(move |x| a * a * a * kappa * kappa * kappa * (kappa * x[0]).cos());
    let d2u0 = space_fn(move |x| -kappa * kappa * (kappa * x[0]).sin());
    Problem {
        dim: 1,
        f: zero_space_time(),
        u0,
        u1,
        g,
        g_k: vec![g_1],
        exact: Some(u),
        b: None,
        f_dt: Some(zero_space_time()),
        f_dtt: Some(zero_space_time()),
        lu0: Some(lu0),
        lu1: Some(lu1),
        d2u0: Some(vec![d2u0]),
    }
}

/// Space-time polynomial of degree at most 3 in every variable; the scheme
/// reproduces it to round-off. Built for 3 axes with unit speeds.
pub fn polynomial_3d() -> Problem {
    let u = space_time_fn(|x, t| {
        (x[0].powi(3) - x[0] + 1.0) * (1.0 + t)
            + (x[1] * x[1] + x[1]) * t * t
            + x[2].powi(3)
            + x[0] * x[1] * x[2] * t
            + 2.0 * t.powi(3)
    });
    let u0 = space_fn(|x| x[0].powi(3) - x[0] + 1.0 + x[2].powi(3));
    let u1 = space_fn(|x| x[0].powi(3) - x[0] + 1.0 + x[0] * x[1] * x[2]);
    // ∂_t²u = 2(x2² + x2) + 12t and Lu = 6x1(1 + t) + 2t² + 6x3 for unit speeds.
    let f = space_time_fn(|x, t| {
        2.0 * (x[1] * x[1] + x[1]) + 12.0 * t - 6.0 * x[0] * (1.0 + t) - 2.0 * t * t - 6.0 * x[2]
    });
    let f_dt = space_time_fn(|x, t| 12.0 - 6.0 * x[0] - 4.0 * t);
    let f_dtt = space_time_fn(|_, _| -4.0);
    let g = u.clone();
    let g_k: Vec<SpaceTimeFn> = vec![
        space_time_fn(|x, t| 6.0 * x[0] * (1.0 + t)),
        space_time_fn(|_, t| 2.0 * t * t),
        space_time_fn(|x, _| 6.0 * x[2]),
    ];
    let d2u0: Vec<SpaceFn> = vec![
        space_fn(|x| 6.0 * x[0]),
        space_fn(|_| 0.0),
        space_fn(|x| 6.0 * x[2]),
    ];
    Problem {
        dim: 3,
        f,
        u0,
        u1,
        g,
        g_k,
        exact: Some(u),
        b: None,
        f_dt: Some(f_dt),
        f_dtt: Some(f_dtt),
        lu0: Some(space_fn(|x| 6.0 * x[0] + 6.0 * x[2])),
        lu1: Some(space_fn(|x| 6.0 * x[0])),
        d2u0: Some(d2u0),
    }
}

/// 1D manufactured solution of `ρ(x) ∂_t²u - ∂_x²u = f` with `ρ = 1 + x/2`:
/// `u = sin(πx) cos(t)`, so `f = (π² - ρ(x)) u`.
pub fn variable_rho_1d() -> BuiltProblem {
    let rho = |x: &[f64]| 1.0 + 0.5 * x[0];
    let u = space_time_fn(|x, t| (PI * x[0]).sin() * t.cos());
    let u0 = space_fn(|x| (PI * x[0]).sin());
    let f = {
        let u = u.clone();
        space_time_fn(move |x, t| (PI * PI - rho(x)) * u(x, t))
    };
    let f_dt = space_time_fn(move |x, t| -(PI * PI - rho(x)) * (PI * x[0]).sin() * t.sin());
    let f_dtt = {
        let u = u.clone();
        space_time_fn(move |x, t| -(PI * PI - rho(x)) * u(x, t))
    };
    let g_1 = {
        let u = u.clone();
        space_time_fn(move |x, t| -PI * PI * u(x, t))
    };
    let problem = Problem {
        dim: 1,
        f,
        u0,
        u1: zero_space(),
        g: zero_space_time(),
        g_k: vec![g_1],
        exact: Some(u),
        b: None,
        f_dt: Some(f_dt),
        f_dtt: Some(f_dtt),
        lu0: None,
        lu1: Some(zero_space()),
        d2u0: Some(vec![space_fn(|x| -PI * PI * (PI * x[0]).sin())]),
    };
    BuiltProblem {
        problem,
        rho: Some(space_fn(move |x| rho(x))),
        var_speeds: Some(vec![space_fn(|_| 1.0)]),
        rho_floor: 1.0,
    }
}

pub fn catalog() -> Vec<CatalogEntry> {
    vec![
        CatalogEntry {
            id: "standing-wave-1d",
            dim: 1,
            description: "standing wave sin(pi x) cos(pi t); f = 0, g = 0, exact",
            has_exact: true,
            forced: false,
            homogeneous_boundary: true,
            variable_coefficients: false,
            extents: vec![1.0],
            speeds: vec![1.0],
            default_cells: vec![64],
            default_time: 2.0,
            space_compression: vec![1.0],
            time_compression: 1.0,
        },
        CatalogEntry {
            id: "standing-wave-2d",
            dim: 2,
            description: "standing wave sin(pi x1) sin(pi x2) cos(sqrt(2) pi t); exact",
            has_exact: true,
            forced: false,
            homogeneous_boundary: true,
            variable_coefficients: false,
            extents: vec![1.0, 1.0],
            speeds: vec![1.0, 1.0],
            default_cells: vec![32, 32],
            default_time: 2.0,
            space_compression: vec![1.0, 1.0],
            time_compression: 1.0,
        },
        CatalogEntry {
            id: "standing-wave-3d",
            dim: 3,
            description: "standing wave in the unit cube; exact",
            has_exact: true,
            forced: false,
            homogeneous_boundary: true,
            variable_coefficients: false,
            extents: vec![1.0, 1.0, 1.0],
            speeds: vec![1.0, 1.0, 1.0],
            default_cells: vec![16, 16, 16],
            default_time: 1.0,
            space_compression: vec![1.0, 1.0, 1.0],
            time_compression: 1.0,
        },
        CatalogEntry {
            id: "traveling-wave-1d",
            dim: 1,
            description: "traveling wave sin(2(x - t)); inhomogeneous g, exact",
            has_exact: true,
            forced: false,
            homogeneous_boundary: false,
            variable_coefficients: false,
            extents: vec![1.0],
            speeds: vec![1.0],
            default_cells: vec![64],
            default_time: 1.0,
            space_compression: vec![1.0],
            time_compression: 1.0,
        },
        CatalogEntry {
            id: "forced-wave-1d",
            dim: 1,
            description: "forced standing profile; f nonzero, g = 0, exact",
            has_exact: true,
            forced: true,
            homogeneous_boundary: true,
            variable_coefficients: false,
            extents: vec![1.0],
            speeds: vec![1.0],
            default_cells: vec![64],
            default_time: 2.0,
            space_compression: vec![1.0],
            time_compression: 1.0,
        },
        CatalogEntry {
            id: "forced-wave-2d",
            dim: 2,
            description: "forced 2D wave; f nonzero and zero on the boundary, exact",
            has_exact: true,
            forced: true,
            homogeneous_boundary: true,
            variable_coefficients: false,
            extents: vec![1.0, 1.0],
            speeds: vec![1.0, 1.0],
            default_cells: vec![32, 32],
            default_time: 1.0,
            space_compression: vec![1.0, 1.0],
            time_compression: 1.0,
        },
        CatalogEntry {
            id: "polynomial-3d",
            dim: 3,
            description: "degree-3 space-time polynomial; reproduced to round-off, exact",
            has_exact: true,
            forced: true,
            homogeneous_boundary: false,
            variable_coefficients: false,
            extents: vec![1.0, 1.0, 1.0],
            speeds: vec![1.0, 1.0, 1.0],
            default_cells: vec![8, 8, 8],
            default_time: 1.0,
            space_compression: vec![1.0, 1.0, 1.0],
            time_compression: 1.0,
        },
        CatalogEntry {
            id: "variable-rho-1d",
            dim: 1,
            description: "variable density rho = 1 + x/2, u = sin(pi x) cos(t); exact",
            has_exact: true,
            forced: true,
            homogeneous_boundary: true,
            variable_coefficients: true,
            extents: vec![1.0],
            speeds: vec![1.0],
            default_cells: vec![64],
            default_time: 2.0,
            space_compression: vec![1.0],
            time_compression: 1.0,
        },
        CatalogEntry {
            id: "standing-wave-1d-graded",
            dim: 1,
            description: "standing wave on a smoothly graded spatial mesh; exact",
            has_exact: true,
            forced: false,
            homogeneous_boundary: true,
            variable_coefficients: false,
            extents: vec![1.0],
            speeds: vec![1.0],
            default_cells: vec![64],
            default_time: 2.0,
            space_compression: vec![3.0],
            time_compression: 1.0,
        },
        CatalogEntry {
            id: "standing-wave-1d-tgraded",
            dim: 1,
            description: "standing wave on a smoothly graded time mesh; exact",
            has_exact: true,
            forced: false,
            homogeneous_boundary: true,
            variable_coefficients: false,
            extents: vec![1.0],
            speeds: vec![1.0],
            default_cells: vec![64],
            default_time: 2.0,
            space_compression: vec![1.0],
            time_compression: 2.0,
        },
    ]
}

pub fn entry(id: &str) -> Result<CatalogEntry> {
    catalog()
        .into_iter()
        .find(|e| e.id == id)
        .ok_or_else(|| SolverError::InvalidConfig(format!("unknown problem id '{id}'")))
}

/// Builds the problem data for a catalog id.
pub fn build(id: &str) -> Result<BuiltProblem> {
    let e = entry(id)?;
    let plain = |p: Problem| BuiltProblem {
        problem: p,
        rho: None,
        var_speeds: None,
        rho_floor: 0.0,
    };
    Ok(match id {
        "standing-wave-1d"
        | "standing-wave-1d-graded"
        | "standing-wave-1d-tgraded"
        | "standing-wave-2d"
        | "standing-wave-3d" => plain(standing_wave(&e.extents, &e.speeds)),
        "traveling-wave-1d" => plain(traveling_wave_1d(2.0, e.speeds[0])),
        "forced-wave-1d" | "forced-wave-2d" => plain(forced_wave(&e.extents, &e.speeds, 1.0, 0.3)),
        "polynomial-3d" => plain(polynomial_3d()),
        "variable-rho-1d" => variable_rho_1d(),
        other => {
            return Err(SolverError::InvalidConfig(format!(
                "unknown problem id '{other}'"
            )))
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_has_enough_entries() {
        let c = catalog();
        assert!(c.len() >= 8);
        for e in &c {
            assert_eq!(e.extents.len(), e.dim);
            assert_eq!(e.speeds.len(), e.dim);
            let built = build(e.id).unwrap();
            assert_eq!(built.problem.dim, e.dim);
            assert_eq!(built.problem.exact.is_some(), e.has_exact);
            assert_eq!(built.rho.is_some(), e.variable_coefficients);
        }
    }

    #[test]
    fn unknown_id_is_config_error() {
        assert!(matches!(
            build("no-such-problem"),
            Err(SolverError::InvalidConfig(_))
        ));
    }

    #[test]
    fn standing_wave_satisfies_the_pde() {
        // Finite-difference check of ∂_t²u = Lu at a few points.
        let p = standing_wave(&[1.0, 2.0], &[1.0, 0.7]);
        let u = p.exact.clone().unwrap();
        let eps = 1e-5;
        for (x, t) in [(vec![0.3, 0.4], 0.2), (vec![0.7, 1.1], 0.9)] {
            let utt = (u(&x, t + eps) - 2.0 * u(&x, t) + u(&x, t - eps)) / (eps * eps);
            let mut lu = 0.0;
            for (k, a) in [1.0f64, 0.7].iter().enumerate() {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[k] += eps;
                xm[k] -= eps;
                lu += a * a * (u(&xp, t) - 2.0 * u(&x, t) + u(&xm, t)) / (eps * eps);
            }
            assert!((utt - lu).abs() < 1e-4, "residual {}", utt - lu);
        }
    }

    #[test]
    fn forced_wave_free_term_matches_pde() {
        let p = forced_wave(&[1.0], &[1.0], 1.0, 0.3);
        let u = p.exact.clone().unwrap();
        let f = p.f.clone();
        let eps = 1e-5;
        let (x, t) = (vec![0.35], 0.7);
        let utt = (u(&x, t + eps) - 2.0 * u(&x, t) + u(&x, t - eps)) / (eps * eps);
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[0] += eps;
        xm[0] -= eps;
        let uxx = (u(&xp, t) - 2.0 * u(&x, t) + u(&xm, t)) / (eps * eps);
        assert!((utt - uxx - f(&x, t)).abs() < 1e-4);
    }

    #[test]
    fn polynomial_data_is_consistent() {
        let p = polynomial_3d();
        let u = p.exact.clone().unwrap();
        let x = vec![0.3, 0.6, 0.9];
        assert!(((p.u0)(&x) - u(&x, 0.0)).abs() < 1e-14);
        let eps = 1e-6;
        let ut0 = (u(&x, eps) - u(&x, -eps)) / (2.0 * eps);
        assert!(((p.u1)(&x) - ut0).abs() < 1e-8);
        // f = ∂_t²u - Lu by finite differences.
        let t = 0.4;
        let utt = (u(&x, t + eps) - 2.0 * u(&x, t) + u(&x, t - eps)) / (eps * eps);
        let mut lu = 0.0;
        for k in 0..3 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += eps;
            xm[k] -= eps;
            lu += (u(&xp, t) - 2.0 * u(&x, t) + u(&xm, t)) / (eps * eps);
        }
        assert!((utt - lu - (p.f)(&x, t)).abs() < 1e-3);
    }

    #[test]
    fn gk_from_derivatives_matches_manufactured_data() {
        // For the exact traveling wave the assembled g_k must equal
        // a² ∂_x²u on both faces of the 1D domain.
        let p = traveling_wave_1d(2.0, 1.0);
        let u = p.exact.clone().unwrap();
        let g_tt = {
            let u = u.clone();
            // ∂_t²u = -a²κ²u for the traveling wave with a = 1, κ = 2.
            space_time_fn(move |x, t| -4.0 * u(x, t))
        };
        let g_xx = {
            let u = u.clone();
            vec![space_time_fn(move |x, t| -4.0 * u(x, t))]
        };
        let built = gk_from_boundary_derivatives(&[1.0], &[1.0], g_tt, g_xx, zero_space_time());
        for t in [0.0, 0.3, 1.7] {
            for x in [[0.0], [1.0]] {
                let expected = (p.g_k[0])(&x, t);
                assert!((built[0](&x, t) - expected).abs() < 1e-13);
            }
        }
        // Interior points of another face direction use the tangential rule;
        // in 2D, check the split between the two rules.
        let g_tt = space_time_fn(|_, _| 5.0);
        let g_xx = vec![space_time_fn(|_, _| 1.0), space_time_fn(|_, _| 2.0)];
        let f = space_time_fn(|_, _| 0.5);
        let gk = gk_from_boundary_derivatives(&[1.0, 1.0], &[1.0, 3.0], g_tt, g_xx, f);
        // On the x1 = 0 face: g_1 = g_tt - a2² g_xx2 - f = 5 - 18 - 0.5.
        assert!((gk[0](&[0.0, 0.5], 0.0) - (5.0 - 9.0 * 2.0 - 0.5)).abs() < 1e-14);
        // Same point for axis 2 uses the tangential rule: a2² g_xx2 = 18.
        assert!((gk[1](&[0.0, 0.5], 0.0) - 18.0).abs() < 1e-14);
    }

    #[test]
    fn zero_gk_helper_uses_face_rule() {
        let f = space_time_fn(|x: &[f64], _| x[0] + 2.0 * x[1]);
        let gk = dirichlet_zero_gk(2, &[1.0, 1.0], f);
        // On the x1 = 0 face the axis-0 data is -f, the axis-1 data is 0.
        assert_eq!(gk[0](&[0.0, 0.5], 0.0), -1.0);
        assert_eq!(gk[1](&[0.0, 0.5], 0.0), 0.0);
        // On the x2 = 1 face only the axis-1 data picks up -f.
        assert_eq!(gk[0](&[0.5, 1.0], 0.0), 0.0);
        assert_eq!(gk[1](&[0.5, 1.0], 0.0), -2.5);
    }
}
