//! Spatial and temporal meshes and the mesh-function container.
//!
//! Axes are tensor-product factors of the spatial grid. Each axis stores its
//! node coordinates; steps and half-steps are derived from them. Uniformity
//! is detected at construction (relative tolerance 1e-12) and selects the
//! specialized uniform code paths in the operator module.

use std::sync::Arc;

use ndarray::{ArrayD, IxDyn};

use crate::error::{Result, SolverError};

/// Relative tolerance used to classify an axis or time mesh as uniform.
pub const UNIFORM_TOL: f64 = 1e-12;

/// One spatial axis: ascending nodes `0 = x_0 < ... < x_N = X`.
#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    nodes: Vec<f64>,
    steps: Vec<f64>,
    uniform: bool,
    /// Exact step `X/N` on uniform axes, largest step otherwise.
    h: f64,
}

impl Axis {
    /// Builds an axis from an explicit ascending node list starting at 0.
    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 3 {
            return Err(SolverError::InvalidMesh(format!(
                "axis needs at least 3 nodes (N >= 2), got {}",
                nodes.len()
            )));
        }
        if nodes[0] != 0.0 {
            return Err(SolverError::InvalidMesh(format!(
                "axis must start at 0, got {}",
                nodes[0]
            )));
        }
        let mut steps = Vec::with_capacity(nodes.len() - 1);
        for w in nodes.windows(2) {
            let h = w[1] - w[0];
            if h <= 0.0 || !h.is_finite() {
                return Err(SolverError::InvalidMesh(format!(
                    "axis nodes must be strictly ascending, step {} to {} is {}",
                    w[0], w[1], h
                )));
            }
            steps.push(h);
        }
        let n = steps.len();
        let mean = nodes[n] / n as f64;
        let uniform = steps
            .iter()
            .all(|&h| (h - mean).abs() <= UNIFORM_TOL * mean.abs());
        let h = if uniform {
            mean
        } else {
            steps.iter().cloned().fold(0.0, f64::max)
        };
        Ok(Axis {
            nodes,
            steps,
            uniform,
            h,
        })
    }

    /// Uniform axis of `count` cells over `[0, extent]` with step `extent/count`.
    pub fn uniform(extent: f64, count: usize) -> Result<Self> {
        if extent <= 0.0 || !extent.is_finite() {
            return Err(SolverError::InvalidMesh(format!(
                "axis extent must be positive, got {extent}"
            )));
        }
        if count < 2 {
            return Err(SolverError::InvalidMesh(format!(
                "axis needs N >= 2 cells, got {count}"
            )));
        }
        let h = extent / count as f64;
        let mut nodes: Vec<f64> = (0..count).map(|l| l as f64 * h).collect();
        nodes.push(extent);
        let mut axis = Self::from_nodes(nodes)?;
        // Pin the constructed step so uniform operators use X/N exactly.
        axis.uniform = true;
        axis.h = h;
        Ok(axis)
    }

    /// Axis whose steps form a geometric progression `h_{l+1} = r * h_l`,
    /// scaled so the nodes end at `extent`. `r = 1` reproduces [`Axis::uniform`].
    pub fn graded(extent: f64, count: usize, ratio: f64) -> Result<Self> {
        if ratio <= 0.0 || !ratio.is_finite() {
            return Err(SolverError::InvalidMesh(format!(
                "grading ratio must be positive, got {ratio}"
            )));
        }
        if ratio == 1.0 {
            return Self::uniform(extent, count);
        }
        if extent <= 0.0 || !extent.is_finite() {
            return Err(SolverError::InvalidMesh(format!(
                "axis extent must be positive, got {extent}"
            )));
        }
        if count < 2 {
            return Err(SolverError::InvalidMesh(format!(
                "axis needs N >= 2 cells, got {count}"
            )));
        }
        // Geometric sum: h_1 (r^N - 1)/(r - 1) = extent.
        let h1 = extent * (ratio - 1.0) / (ratio.powi(count as i32) - 1.0);
        let mut nodes = Vec::with_capacity(count + 1);
        let mut x = 0.0;
        let mut h = h1;
        nodes.push(0.0);
        for _ in 0..count - 1 {
            x += h;
            nodes.push(x);
            h *= ratio;
        }
        nodes.push(extent);
        Self::from_nodes(nodes)
    }

    pub fn n_cells(&self) -> usize {
        self.steps.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn extent(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    pub fn is_uniform(&self) -> bool {
        self.uniform
    }

    /// Uniform step `X/N`; on non-uniform axes the largest step.
    pub fn step_hint(&self) -> f64 {
        self.h
    }

    pub fn min_step(&self) -> f64 {
        self.steps.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn steps(&self) -> &[f64] {
        &self.steps
    }

    /// Step `h_l = x_l - x_{l-1}` entering interior node `l`, `1 <= l <= N`.
    pub fn step_before(&self, l: usize) -> f64 {
        self.steps[l - 1]
    }

    /// Step `h_{l+1} = x_{l+1} - x_l` leaving node `l`, `0 <= l <= N-1`.
    pub fn step_after(&self, l: usize) -> f64 {
        self.steps[l]
    }

    /// Half-step `h_{*l} = (h_l + h_{l+1})/2` at interior node `l`.
    pub fn half_step(&self, l: usize) -> f64 {
        0.5 * (self.steps[l - 1] + self.steps[l])
    }
}

/// Time mesh `0 = t_0 < ... < t_M = T`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeMesh {
    nodes: Vec<f64>,
    steps: Vec<f64>,
    uniform: bool,
    h: f64,
}

impl TimeMesh {
    fn from_axis(axis: Axis) -> Self {
        TimeMesh {
            uniform: axis.uniform,
            h: axis.h,
            nodes: axis.nodes,
            steps: axis.steps,
        }
    }

    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        Ok(Self::from_axis(Axis::from_nodes(nodes)?))
    }

    /// Uniform mesh with `m` steps over `[0, total]`.
    pub fn uniform(total: f64, m: usize) -> Result<Self> {
        Ok(Self::from_axis(Axis::uniform(total, m)?))
    }

    /// Geometrically graded mesh, `h_{m+1} = r * h_m`.
    pub fn graded(total: f64, m: usize, ratio: f64) -> Result<Self> {
        Ok(Self::from_axis(Axis::graded(total, m, ratio)?))
    }

    /// Number of steps M.
    pub fn n_steps(&self) -> usize {
        self.steps.len()
    }

    pub fn total(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    pub fn is_uniform(&self) -> bool {
        self.uniform
    }

    pub fn node(&self, m: usize) -> f64 {
        self.nodes[m]
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Step `h_{t m} = t_m - t_{m-1}`, `1 <= m <= M`.
    pub fn step(&self, m: usize) -> f64 {
        self.steps[m - 1]
    }

    /// Exact step `T/M` on uniform meshes, largest step otherwise.
    pub fn step_hint(&self) -> f64 {
        self.h
    }

    pub fn max_step(&self) -> f64 {
        if self.uniform {
            self.h
        } else {
            self.steps.iter().cloned().fold(0.0, f64::max)
        }
    }
}

/// Tensor-product rectangular spatial grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    axes: Vec<Axis>,
    /// Nodes per axis (`N_k + 1`).
    shape: Vec<usize>,
}

impl Grid {
    pub fn new(axes: Vec<Axis>) -> Result<Arc<Self>> {
        if axes.is_empty() {
            return Err(SolverError::InvalidMesh(
                "grid needs at least one axis".into(),
            ));
        }
        let shape = axes.iter().map(|a| a.n_nodes()).collect();
        Ok(Arc::new(Grid { axes, shape }))
    }

    /// Uniform grid from per-axis extents and cell counts.
    pub fn uniform(extents: &[f64], counts: &[usize]) -> Result<Arc<Self>> {
        if extents.len() != counts.len() {
            return Err(SolverError::InvalidMesh(
                "extents and counts must have equal length".into(),
            ));
        }
        let axes = extents
            .iter()
            .zip(counts)
            .map(|(&x, &n)| Axis::uniform(x, n))
            .collect::<Result<Vec<_>>>()?;
        Self::new(axes)
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn axis(&self, k: usize) -> Result<&Axis> {
        self.axes.get(k).ok_or_else(|| {
            SolverError::IndexOutOfRange(format!("axis {k} on a {}-d grid", self.dim()))
        })
    }

    /// Nodes per axis, `N_k + 1` each.
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn node_count(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn interior_count(&self) -> usize {
        self.axes.iter().map(|a| a.n_cells() - 1).product()
    }

    /// True iff every index component is strictly inside its axis.
    pub fn is_interior(&self, idx: &[usize]) -> bool {
        idx.iter()
            .zip(&self.axes)
            .all(|(&i, a)| i > 0 && i < a.n_cells())
    }

    /// Coordinates of the node at `idx`; errors if any component is out of range.
    pub fn node_coordinates(&self, idx: &[usize]) -> Result<Vec<f64>> {
        if idx.len() != self.dim() {
            return Err(SolverError::IndexOutOfRange(format!(
                "index has {} components on a {}-d grid",
                idx.len(),
                self.dim()
            )));
        }
        idx.iter()
            .zip(&self.axes)
            .enumerate()
            .map(|(k, (&i, a))| {
                a.nodes().get(i).copied().ok_or_else(|| {
                    SolverError::IndexOutOfRange(format!(
                        "node {i} on axis {k} with {} nodes",
                        a.n_nodes()
                    ))
                })
            })
            .collect()
    }

    /// Product of interior half-steps; the natural interior quadrature weight.
    pub fn interior_weight(&self, idx: &[usize]) -> f64 {
        idx.iter()
            .zip(&self.axes)
            .map(|(&i, a)| {
                if a.is_uniform() {
                    a.step_hint()
                } else {
                    a.half_step(i)
                }
            })
            .product()
    }

    /// Visits every node in memory order with its multi-index and coordinates.
    pub fn visit_nodes(&self, mut visit: impl FnMut(usize, &[usize], &[f64])) {
        let n = self.dim();
        let mut idx = vec![0usize; n];
        let mut coords: Vec<f64> = self.axes.iter().map(|a| a.nodes()[0]).collect();
        let total = self.node_count();
        for lin in 0..total {
            visit(lin, &idx, &coords);
            // Odometer increment, last axis fastest.
            for k in (0..n).rev() {
                idx[k] += 1;
                if idx[k] < self.shape[k] {
                    coords[k] = self.axes[k].nodes()[idx[k]];
                    break;
                }
                idx[k] = 0;
                coords[k] = self.axes[k].nodes()[0];
            }
        }
    }
}

/// Checks that two fields live on the same grid.
pub fn same_grid(a: &Field, b: &Field) -> Result<()> {
    if Arc::ptr_eq(&a.grid, &b.grid) || *a.grid == *b.grid {
        Ok(())
    } else {
        Err(SolverError::GridMismatch)
    }
}

/// Scalar mesh function on all nodes of a grid, stored contiguously with the
/// last axis fastest.
#[derive(Debug, Clone)]
pub struct Field {
    grid: Arc<Grid>,
    data: ArrayD<f64>,
}

impl Field {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        Field {
            grid: grid.clone(),
            data: ArrayD::zeros(IxDyn(grid.shape())),
        }
    }

    /// Samples `f(x)` at every node.
    pub fn sample(grid: &Arc<Grid>, f: impl Fn(&[f64]) -> f64) -> Self {
        let mut field = Self::zeros(grid);
        {
            let data = field.data.as_slice_mut().expect("standard layout");
            grid.visit_nodes(|lin, _, coords| data[lin] = f(coords));
        }
        field
    }

    /// Samples `f(x, t)` at every node for a fixed time.
    pub fn sample_at(grid: &Arc<Grid>, t: f64, f: impl Fn(&[f64], f64) -> f64) -> Self {
        Self::sample(grid, |x| f(x, t))
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn data(&self) -> &ArrayD<f64> {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut ArrayD<f64> {
        &mut self.data
    }

    pub fn as_slice(&self) -> &[f64] {
        self.data.as_slice().expect("standard layout")
    }

    pub fn as_slice_mut(&mut self) -> &mut [f64] {
        self.data.as_slice_mut().expect("standard layout")
    }

    pub fn value(&self, idx: &[usize]) -> f64 {
        self.data[IxDyn(idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: f64) {
        self.data[IxDyn(idx)] = v;
    }

    pub fn fill(&mut self, value: f64) {
        self.as_slice_mut().fill(value);
    }

    /// Largest absolute value over all nodes.
    pub fn sup_norm(&self) -> f64 {
        self.as_slice().iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.as_slice().iter().all(|v| v.is_finite())
    }

    /// Overwrites boundary nodes with `f(x)`, leaving the interior untouched.
    pub fn set_boundary(&mut self, f: impl Fn(&[f64]) -> f64) {
        let grid = self.grid.clone();
        let data = self.as_slice_mut();
        grid.visit_nodes(|lin, idx, coords| {
            if !grid.is_interior(idx) {
                data[lin] = f(coords);
            }
        });
    }

    /// True iff every boundary node is exactly zero.
    pub fn boundary_is_zero(&self) -> bool {
        let mut ok = true;
        let data = self.as_slice();
        self.grid.visit_nodes(|lin, idx, _| {
            if !self.grid.is_interior(idx) && data[lin] != 0.0 {
                ok = false;
            }
        });
        ok
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_axis_nodes() {
        let a = Axis::uniform(1.0, 4).unwrap();
        assert_eq!(a.nodes(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        assert!(a.is_uniform());
        assert_eq!(a.step_hint(), 0.25);
    }

    #[test]
    fn uniform_axis_unit_steps() {
        let a = Axis::uniform(2.0, 2).unwrap();
        assert_eq!(a.steps(), &[1.0, 1.0]);
    }

    #[test]
    fn uniform_axis_rejects_single_cell() {
        assert!(matches!(
            Axis::uniform(1.0, 1),
            Err(SolverError::InvalidMesh(_))
        ));
        assert!(matches!(
            Axis::uniform(-1.0, 4),
            Err(SolverError::InvalidMesh(_))
        ));
    }

    #[test]
    fn graded_axis_ratio_one_is_uniform() {
        let g = Axis::graded(1.0, 2, 1.0).unwrap();
        assert_eq!(g.nodes(), &[0.0, 0.5, 1.0]);
        let u = Axis::uniform(1.0, 2).unwrap();
        assert_eq!(g.nodes(), u.nodes());
    }

    #[test]
    fn graded_axis_geometric_normalization() {
        // h1 (1 + r) = X with r = 2, X = 3 gives steps {1, 2}.
        let g = Axis::graded(3.0, 2, 2.0).unwrap();
        assert_eq!(g.nodes(), &[0.0, 1.0, 3.0]);
        assert_eq!(g.steps(), &[1.0, 2.0]);
        assert!(!g.is_uniform());
    }

    #[test]
    fn graded_axis_rejects_bad_ratio() {
        assert!(matches!(
            Axis::graded(1.0, 3, 0.0),
            Err(SolverError::InvalidMesh(_))
        ));
    }

    #[test]
    fn graded_r1_matches_uniform_node_for_node() {
        for n in [2usize, 5, 17] {
            let u = Axis::uniform(2.5, n).unwrap();
            let g = Axis::graded(2.5, n, 1.0).unwrap();
            assert_eq!(u.nodes(), g.nodes());
        }
    }

    #[test]
    fn axis_steps_sum_to_extent() {
        for axis in [
            Axis::uniform(1.0, 7).unwrap(),
            Axis::graded(3.0, 9, 1.3).unwrap(),
            Axis::from_nodes(vec![0.0, 0.1, 0.15, 0.4, 1.0]).unwrap(),
        ] {
            let sum: f64 = axis.steps().iter().sum();
            assert!((sum - axis.extent()).abs() <= 1e-12 * axis.extent());
        }
    }

    #[test]
    fn node_coordinates_and_range_errors() {
        let grid = Grid::uniform(&[1.0, 1.0], &[4, 4]).unwrap();
        assert_eq!(grid.node_coordinates(&[2, 2]).unwrap(), vec![0.5, 0.5]);
        assert_eq!(grid.node_coordinates(&[0, 0]).unwrap(), vec![0.0, 0.0]);
        assert!(matches!(
            grid.node_coordinates(&[5, 0]),
            Err(SolverError::IndexOutOfRange(_))
        ));
    }

    #[test]
    fn interior_boundary_partition() {
        let grid = Grid::uniform(&[1.0, 2.0, 1.0], &[3, 4, 2]).unwrap();
        let mut interior = 0usize;
        let mut boundary = 0usize;
        grid.visit_nodes(|_, idx, _| {
            if grid.is_interior(idx) {
                interior += 1;
            } else {
                boundary += 1;
            }
        });
        assert_eq!(interior, grid.interior_count());
        assert_eq!(interior + boundary, grid.node_count());
        assert_eq!(interior, 6);
    }

    #[test]
    fn field_sampling_visits_every_node() {
        let grid = Grid::uniform(&[1.0, 1.0], &[2, 2]).unwrap();
        let f = Field::sample(&grid, |x| x[0] + 10.0 * x[1]);
        assert_eq!(f.value(&[1, 2]), 0.5 + 10.0);
        assert_eq!(f.value(&[0, 0]), 0.0);
        assert_eq!(f.as_slice().len(), 9);
    }

    #[test]
    fn time_mesh_basics() {
        let tm = TimeMesh::uniform(1.0, 10).unwrap();
        assert!(tm.is_uniform());
        assert_eq!(tm.n_steps(), 10);
        assert!((tm.step(3) - 0.1).abs() < 1e-15);
        let tg = TimeMesh::graded(1.0, 10, 1.1).unwrap();
        assert!(!tg.is_uniform());
        assert!((tg.nodes().last().unwrap() - 1.0).abs() < 1e-15);
    }
}
