//! Physical parameters, the joint position/imaginary-time discretization, and
//! the mesh primitives (interpolation, differentiation, quadrature) shared by
//! every engine.
//!
//! Units follow the usual convention of the case studies: `hbar = 1` unless a
//! caller overrides it. The imaginary-time interval is `[0, beta * hbar]`.

use crate::error::{check_len, Error, Result};

/// Particle mass, inverse temperature and Planck's constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicsParams {
    pub mass: f64,
    pub beta: f64,
    pub hbar: f64,
}

impl PhysicsParams {
    /// Parameters in `hbar = 1` units.
    pub fn new(mass: f64, beta: f64) -> Result<Self> {
        Self::with_hbar(mass, beta, 1.0)
    }

    pub fn with_hbar(mass: f64, beta: f64, hbar: f64) -> Result<Self> {
        let p = Self { mass, beta, hbar };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, value) in [("mass", self.mass), ("beta", self.beta), ("hbar", self.hbar)] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::Domain(format!("{name} must be positive, got {value}")));
            }
        }
        Ok(())
    }

    /// Length of the imaginary-time interval, `beta * hbar`.
    pub fn period(&self) -> f64 {
        self.beta * self.hbar
    }
}

/// Equidistant position mesh together with the imaginary-time step.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    n_x: usize,
    x_min: f64,
    x_max: f64,
    dx: f64,
    n_tau: usize,
    eps: f64,
}

/// Builds the joint discretization; `eps = beta * hbar / n_tau`.
pub fn build_grid(n_x: usize, x_min: f64, x_max: f64, n_tau: usize, params: &PhysicsParams) -> Result<Grid> {
    params.validate()?;
    if n_x < 3 {
        return Err(Error::Domain(format!("n_x must be at least 3, got {n_x}")));
    }
    if n_tau < 2 {
        return Err(Error::Domain(format!("n_tau must be at least 2, got {n_tau}")));
    }
    if !(x_min.is_finite() && x_max.is_finite() && x_min < x_max) {
        return Err(Error::Domain(format!("invalid mesh range [{x_min}, {x_max}]")));
    }
    Ok(Grid {
        n_x,
        x_min,
        x_max,
        dx: (x_max - x_min) / (n_x - 1) as f64,
        n_tau,
        eps: params.beta * params.hbar / n_tau as f64,
    })
}

impl Grid {
    pub fn new(n_x: usize, x_min: f64, x_max: f64, n_tau: usize, params: &PhysicsParams) -> Result<Self> {
        build_grid(n_x, x_min, x_max, n_tau, params)
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }
    pub fn x_min(&self) -> f64 {
        self.x_min
    }
    pub fn x_max(&self) -> f64 {
        self.x_max
    }
    pub fn dx(&self) -> f64 {
        self.dx
    }
    pub fn n_tau(&self) -> usize {
        self.n_tau
    }
    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// `beta * hbar` as reassembled from the time step.
    pub fn period(&self) -> f64 {
        self.eps * self.n_tau as f64
    }

    /// Mesh length `x_max - x_min`.
    pub fn length(&self) -> f64 {
        self.x_max - self.x_min
    }

    /// Coordinate of mesh node `j`.
    pub fn x(&self, j: usize) -> f64 {
        if j + 1 == self.n_x {
            self.x_max
        } else {
            self.x_min + j as f64 * self.dx
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_x).map(move |j| self.x(j))
    }

    /// Imaginary time of slice `k`.
    pub fn tau(&self, k: usize) -> f64 {
        self.eps * k as f64
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.x_min && x <= self.x_max
    }

    /// Nearest mesh node, clamped into the mesh.
    pub fn nearest_node(&self, x: f64) -> usize {
        let t = ((x - self.x_min) / self.dx).round();
        if t <= 0.0 || t.is_nan() {
            0
        } else {
            (t as usize).min(self.n_x - 1)
        }
    }

    /// Trapezoid weights: `dx/2` at the ends, `dx` inside.
    pub fn weights(&self) -> Vec<f64> {
        let mut w = vec![self.dx; self.n_x];
        w[0] = 0.5 * self.dx;
        w[self.n_x - 1] = 0.5 * self.dx;
        w
    }

    /// Same spatial mesh with a different number of time slices.
    pub fn with_n_tau(&self, n_tau: usize, params: &PhysicsParams) -> Result<Grid> {
        build_grid(self.n_x, self.x_min, self.x_max, n_tau, params)
    }
}

/// Mesh-sampled potential `v` with an optional reference potential `v0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialField {
    values: Vec<f64>,
    reference: Option<Vec<f64>>,
}

impl PotentialField {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("potential contains non-finite values".into()));
        }
        Ok(Self {
            values,
            reference: None,
        })
    }

    pub fn zeros(n_x: usize) -> Self {
        Self {
            values: vec![0.0; n_x],
            reference: None,
        }
    }

    /// Samples `f` at every mesh node.
    pub fn from_fn(grid: &Grid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid.nodes().map(f).collect())
    }

    pub fn with_reference(mut self, reference: Vec<f64>) -> Result<Self> {
        check_len(self.values.len(), reference.len())?;
        if reference.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("reference potential contains non-finite values".into()));
        }
        self.reference = Some(reference);
        Ok(self)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn reference(&self) -> Option<&[f64]> {
        self.reference.as_deref()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn check_grid(&self, grid: &Grid) -> Result<()> {
        check_len(grid.n_x(), self.values.len())
    }

    /// Mesh-interpolated view usable by the path solvers.
    pub fn on<'a>(&'a self, grid: &'a Grid) -> MeshPotential<'a> {
        MeshPotential { field: self, grid }
    }
}

/// What a mesh vector represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshRole {
    Density,
    Residual,
    Derivative,
    Observable,
}

/// A vector of values on the position mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshFunction {
    pub values: Vec<f64>,
    pub role: MeshRole,
}

impl MeshFunction {
    pub fn new(values: Vec<f64>, role: MeshRole) -> Self {
        Self { values, role }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// Result of a mesh evaluation; `clamped` is set when `x` left the mesh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interpolated {
    pub value: f64,
    pub clamped: bool,
}

/// Locates `x` on the mesh: segment index and fractional position in it.
fn locate(grid: &Grid, x: f64) -> (usize, f64) {
    let t = (x - grid.x_min) / grid.dx;
    let j = (t.floor().max(0.0) as usize).min(grid.n_x - 2);
    (j, t - j as f64)
}

/// Node index when `x` sits on a node up to rounding.
fn on_node(grid: &Grid, x: f64) -> Option<usize> {
    let t = (x - grid.x_min) / grid.dx;
    let r = t.round();
    if (t - r).abs() <= 1e-12 * (1.0 + r.abs()) && r >= 0.0 && (r as usize) < grid.n_x {
        Some(r as usize)
    } else {
        None
    }
}

/// Piecewise-linear interpolant of the potential; exact at the nodes.
pub fn interp_potential(v: &PotentialField, grid: &Grid, x: f64) -> Interpolated {
    let vals = &v.values;
    if x <= grid.x_min || x >= grid.x_max {
        let value = if x <= grid.x_min { vals[0] } else { vals[grid.n_x - 1] };
        let clamped = !grid.contains(x);
        return Interpolated { value, clamped };
    }
    let (j, f) = locate(grid, x);
    Interpolated {
        value: vals[j] + f * (vals[j + 1] - vals[j]),
        clamped: false,
    }
}

/// Slope of the linear segment containing `x`; centered difference at
/// interior nodes, one-sided at the mesh ends, zero outside the mesh.
pub fn interp_potential_deriv(v: &PotentialField, grid: &Grid, x: f64) -> Interpolated {
    let vals = &v.values;
    let n = grid.n_x;
    if !grid.contains(x) {
        return Interpolated {
            value: 0.0,
            clamped: true,
        };
    }
    let value = match on_node(grid, x) {
        Some(0) => (vals[1] - vals[0]) / grid.dx,
        Some(j) if j == n - 1 => (vals[n - 1] - vals[n - 2]) / grid.dx,
        Some(j) => (vals[j + 1] - vals[j - 1]) / (2.0 * grid.dx),
        None => {
            let (j, _) = locate(grid, x);
            (vals[j + 1] - vals[j]) / grid.dx
        }
    };
    Interpolated { value, clamped: false }
}

/// Centered slope at interior nodes; zero at the end nodes, where the
/// clamped constant extension takes over.
fn nodal_slope(vals: &[f64], dx: f64, j: usize) -> f64 {
    if j == 0 || j == vals.len() - 1 {
        0.0
    } else {
        (vals[j + 1] - vals[j - 1]) / (2.0 * dx)
    }
}

/// Continuous force field for the path solver: nodal slopes (centered inside,
/// zero at the end nodes) interpolated linearly between nodes; zero outside
/// the mesh, where the value is clamped. The force is continuous on the
/// whole line.
///
/// The segment slope of [`interp_potential_deriv`] jumps at every node, and a
/// lattice path whose slice sits on such a jump has no exact stationary
/// point.
pub fn interp_potential_force(v: &PotentialField, grid: &Grid, x: f64) -> Interpolated {
    if !grid.contains(x) {
        return Interpolated {
            value: 0.0,
            clamped: true,
        };
    }
    let (j, f) = locate(grid, x);
    let a = nodal_slope(&v.values, grid.dx, j);
    let b = nodal_slope(&v.values, grid.dx, j + 1);
    Interpolated {
        value: a + f * (b - a),
        clamped: false,
    }
}

/// Derivative of [`interp_potential_force`]: constant on each segment, the
/// mean of the two adjacent segments at an interior node, zero outside.
pub fn interp_force_derivative(v: &PotentialField, grid: &Grid, x: f64) -> Interpolated {
    if !grid.contains(x) {
        return Interpolated {
            value: 0.0,
            clamped: true,
        };
    }
    let vals = &v.values;
    let seg = |j: usize| (nodal_slope(vals, grid.dx, j + 1) - nodal_slope(vals, grid.dx, j)) / grid.dx;
    let value = match on_node(grid, x) {
        Some(0) => seg(0),
        Some(j) if j == grid.n_x - 1 => seg(j - 1),
        Some(j) => 0.5 * (seg(j - 1) + seg(j)),
        None => seg(locate(grid, x).0),
    };
    Interpolated { value, clamped: false }
}

/// Mean force derivative of the two adjacent segments; zero at the end
/// nodes so that the curvature is continuous onto the constant extension.
fn nodal_curvature(vals: &[f64], dx: f64, j: usize) -> f64 {
    if j == 0 || j == vals.len() - 1 {
        return 0.0;
    }
    let seg = |i: usize| (nodal_slope(vals, dx, i + 1) - nodal_slope(vals, dx, i)) / dx;
    0.5 * (seg(j - 1) + seg(j))
}

/// Nodal values of [`interp_force_derivative`] interpolated linearly: a
/// continuous second derivative. Zero outside the mesh.
pub fn interp_curvature(v: &PotentialField, grid: &Grid, x: f64) -> Interpolated {
    if !grid.contains(x) {
        return Interpolated {
            value: 0.0,
            clamped: true,
        };
    }
    let (j, f) = locate(grid, x);
    let a = nodal_curvature(&v.values, grid.dx, j);
    let b = nodal_curvature(&v.values, grid.dx, j + 1);
    Interpolated {
        value: a + f * (b - a),
        clamped: false,
    }
}

/// Segment slope of [`interp_curvature`]; the mean of both sides at interior
/// nodes, zero outside.
pub fn interp_curvature_slope(v: &PotentialField, grid: &Grid, x: f64) -> Interpolated {
    if !grid.contains(x) {
        return Interpolated {
            value: 0.0,
            clamped: true,
        };
    }
    let vals = &v.values;
    let seg = |j: usize| (nodal_curvature(vals, grid.dx, j + 1) - nodal_curvature(vals, grid.dx, j)) / grid.dx;
    let value = match on_node(grid, x) {
        Some(0) => seg(0),
        Some(j) if j == grid.n_x - 1 => seg(j - 1),
        Some(j) => 0.5 * (seg(j - 1) + seg(j)),
        None => seg(locate(grid, x).0),
    };
    Interpolated { value, clamped: false }
}

/// Sensitivity of the mesh potential at `x` to one nodal value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeSensitivity {
    pub node: usize,
    /// `d v(x) / d v_j`.
    pub value: f64,
    /// `d v'(x) / d v_j` for the continuous force.
    pub force: f64,
    /// `d v''(x) / d v_j` for its derivative.
    pub curvature: f64,
    /// `d v''(x) / d v_j` for the continuous fluctuation curvature.
    pub fluct_curvature: f64,
}

/// Nonzero sensitivities of the mesh interpolants at `x`. All of them are
/// linear in the nodal values, so each entry is the interpolant of a unit
/// vector.
pub fn mesh_sensitivities(grid: &Grid, x: f64) -> Vec<NodeSensitivity> {
    let n = grid.n_x;
    let (m, _) = locate(grid, x.clamp(grid.x_min, grid.x_max));
    let lo = m.saturating_sub(3);
    let hi = (m + 4).min(n - 1);
    let mut unit = PotentialField {
        values: vec![0.0; n],
        reference: None,
    };
    let mut out = Vec::with_capacity(hi - lo + 1);
    for j in lo..=hi {
        unit.values[j] = 1.0;
        let s = NodeSensitivity {
            node: j,
            value: interp_potential(&unit, grid, x).value,
            force: interp_potential_force(&unit, grid, x).value,
            curvature: interp_force_derivative(&unit, grid, x).value,
            fluct_curvature: interp_curvature(&unit, grid, x).value,
        };
        unit.values[j] = 0.0;
        if s.value != 0.0 || s.force != 0.0 || s.curvature != 0.0 || s.fluct_curvature != 0.0 {
            out.push(s);
        }
    }
    out
}

/// Trapezoidal rule over the mesh.
pub fn quadrature(f: &MeshFunction, grid: &Grid) -> f64 {
    trapezoid(&f.values, grid.dx)
}

pub fn trapezoid(values: &[f64], dx: f64) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => 0.0,
        n => {
            let inner: f64 = values[1..n - 1].iter().sum();
            dx * (inner + 0.5 * (values[0] + values[n - 1]))
        }
    }
}

/// A potential the classical path solvers can evaluate anywhere on the line.
///
/// Mesh potentials clamp outside their range; analytic potentials are used by
/// the oracle tests where mesh interpolation error would mask the quantity
/// under test.
pub trait Potential: Sync {
    fn value(&self, x: f64) -> f64;
    fn slope(&self, x: f64) -> f64;
    fn curvature(&self, x: f64) -> f64;

    /// `v''` entering the fluctuation operator; must be continuous in `x`.
    fn fluctuation_curvature(&self, x: f64) -> f64 {
        self.curvature(x)
    }

    /// Derivative of [`Potential::fluctuation_curvature`] in `x`.
    fn fluctuation_curvature_slope(&self, _x: f64) -> f64 {
        0.0
    }

    /// False when `x` lies outside the region where the potential is defined.
    fn in_range(&self, _x: f64) -> bool {
        true
    }
}

/// Mesh potential as seen by the path solvers: linear values, continuous
/// interpolated slopes and their piecewise-constant derivative. The
/// fluctuation operator uses the continuous [`interp_curvature`] instead, so
/// that van Vleck prefactors do not jump when a slice crosses a node.
#[derive(Debug, Clone, Copy)]
pub struct MeshPotential<'a> {
    pub field: &'a PotentialField,
    pub grid: &'a Grid,
}

impl Potential for MeshPotential<'_> {
    fn value(&self, x: f64) -> f64 {
        interp_potential(self.field, self.grid, x).value
    }
    fn slope(&self, x: f64) -> f64 {
        interp_potential_force(self.field, self.grid, x).value
    }
    fn curvature(&self, x: f64) -> f64 {
        interp_force_derivative(self.field, self.grid, x).value
    }
    fn fluctuation_curvature(&self, x: f64) -> f64 {
        interp_curvature(self.field, self.grid, x).value
    }
    fn fluctuation_curvature_slope(&self, x: f64) -> f64 {
        interp_curvature_slope(self.field, self.grid, x).value
    }
    fn in_range(&self, x: f64) -> bool {
        self.grid.contains(x)
    }
}

/// `v(x) = m omega^2 (x - center)^2 / 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Harmonic {
    pub mass: f64,
    pub omega: f64,
    pub center: f64,
}

impl Potential for Harmonic {
    fn value(&self, x: f64) -> f64 {
        let d = x - self.center;
        0.5 * self.mass * self.omega * self.omega * d * d
    }
    fn slope(&self, x: f64) -> f64 {
        self.mass * self.omega * self.omega * (x - self.center)
    }
    fn curvature(&self, _x: f64) -> f64 {
        self.mass * self.omega * self.omega
    }
}

/// Spatially constant potential.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constant(pub f64);

impl Potential for Constant {
    fn value(&self, _x: f64) -> f64 {
        self.0
    }
    fn slope(&self, _x: f64) -> f64 {
        0.0
    }
    fn curvature(&self, _x: f64) -> f64 {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sensitivities_reassemble_interpolants() {
        let p = PhysicsParams::new(1.0, 1.0).unwrap();
        let g = build_grid(9, -1.0, 3.0, 4, &p).unwrap();
        let v = PotentialField::from_fn(&g, |x| (1.3 * x).sin() + 0.2 * x * x).unwrap();
        for x in [-1.3, -1.0, -0.77, 0.0, 0.5, 1.26, 2.5, 2.99, 3.0, 3.4] {
            let s = mesh_sensitivities(&g, x);
            let sum = |f: fn(&NodeSensitivity) -> f64| s.iter().map(|e| f(e) * v.values()[e.node]).sum::<f64>();
            assert!((sum(|e| e.value) - interp_potential(&v, &g, x).value).abs() < 1e-12);
            assert!((sum(|e| e.force) - interp_potential_force(&v, &g, x).value).abs() < 1e-12);
            assert!((sum(|e| e.curvature) - interp_force_derivative(&v, &g, x).value).abs() < 1e-12);
            assert!((sum(|e| e.fluct_curvature) - interp_curvature(&v, &g, x).value).abs() < 1e-12);
        }
    }
    use approx::assert_relative_eq;

    fn fermi(x: f64) -> f64 {
        -1.0 / (1.0 + (0.5 * ((x - 15.0).abs() - 4.0)).exp())
    }

    #[test]
    fn grid_matches_case_study_settings() {
        let p = PhysicsParams::new(0.1, 10.0).unwrap();
        let g = build_grid(30, 0.0, 29.0, 30, &p).unwrap();
        assert_relative_eq!(g.dx(), 1.0);
        assert_relative_eq!(g.eps(), 1.0 / 3.0, epsilon = 1e-15);

        let p6 = PhysicsParams::new(0.1, 6.0).unwrap();
        let g6 = build_grid(30, 0.0, 29.0, 30, &p6).unwrap();
        assert_relative_eq!(g6.eps(), 0.2, epsilon = 1e-15);
        assert_relative_eq!(g6.period(), 6.0, max_relative = 1e-12);
    }

    #[test]
    fn smallest_grid() {
        let p = PhysicsParams::new(1.0, 2.0).unwrap();
        let g = build_grid(3, 0.0, 1.0, 2, &p).unwrap();
        assert_eq!(g.dx(), 0.5);
        assert_eq!(g.eps(), 1.0);
    }

    #[test]
    fn grid_rejects_bad_input() {
        let p = PhysicsParams::new(1.0, 1.0).unwrap();
        assert!(build_grid(2, 0.0, 1.0, 4, &p).is_err());
        assert!(build_grid(5, 1.0, 0.0, 4, &p).is_err());
        assert!(build_grid(5, 0.0, 1.0, 1, &p).is_err());
        assert!(PhysicsParams::new(-1.0, 1.0).is_err());
        assert!(PhysicsParams::new(1.0, 0.0).is_err());
    }

    #[test]
    fn interpolation_exact_at_nodes_and_linear_between() {
        let p = PhysicsParams::new(0.1, 6.0).unwrap();
        let g = build_grid(30, 0.0, 29.0, 30, &p).unwrap();
        let v = PotentialField::from_fn(&g, fermi).unwrap();
        for j in 0..30 {
            let r = interp_potential(&v, &g, g.x(j));
            assert_eq!(r.value, v.values()[j]);
            assert!(!r.clamped);
        }
        let mid = interp_potential(&v, &g, 15.5).value;
        assert_relative_eq!(mid, 0.5 * (fermi(15.0) + fermi(16.0)), epsilon = 1e-15);
    }

    #[test]
    fn interpolation_clamps_outside() {
        let p = PhysicsParams::new(1.0, 1.0).unwrap();
        let g = build_grid(5, 0.0, 4.0, 4, &p).unwrap();
        let v = PotentialField::new(vec![1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let lo = interp_potential(&v, &g, -0.5);
        assert!(lo.clamped);
        assert_eq!(lo.value, 1.0);
        let hi = interp_potential(&v, &g, 4.5);
        assert!(hi.clamped);
        assert_eq!(hi.value, 5.0);
        assert!(interp_potential_deriv(&v, &g, 7.0).clamped);
    }

    #[test]
    fn derivative_cases() {
        let p = PhysicsParams::new(1.0, 1.0).unwrap();
        let g = build_grid(11, 0.0, 5.0, 4, &p).unwrap();
        let c = PotentialField::new(vec![3.0; 11]).unwrap();
        let ramp = PotentialField::from_fn(&g, |x| x).unwrap();
        for x in [0.0, 0.2, 1.0, 2.75, 5.0] {
            assert_eq!(interp_potential_deriv(&c, &g, x).value, 0.0);
            assert_relative_eq!(interp_potential_deriv(&ramp, &g, x).value, 1.0, epsilon = 1e-12);
        }

        let p = PhysicsParams::new(0.1, 6.0).unwrap();
        let g = build_grid(30, 0.0, 29.0, 30, &p).unwrap();
        let v = PotentialField::from_fn(&g, fermi).unwrap();
        assert_relative_eq!(interp_potential_deriv(&v, &g, 15.0).value, 0.0, epsilon = 1e-15);
        // segment slope between nodes
        let s = interp_potential_deriv(&v, &g, 17.3).value;
        assert_relative_eq!(s, fermi(18.0) - fermi(17.0), epsilon = 1e-15);
    }

    #[test]
    fn force_is_continuous_and_matches_nodes() {
        let p = PhysicsParams::new(0.1, 6.0).unwrap();
        let g = build_grid(30, 0.0, 29.0, 30, &p).unwrap();
        let v = PotentialField::from_fn(&g, fermi).unwrap();
        for j in 1..29 {
            let x = g.x(j);
            let at = interp_potential_force(&v, &g, x).value;
            assert_relative_eq!(at, interp_potential_deriv(&v, &g, x).value, epsilon = 1e-15);
            let lo = interp_potential_force(&v, &g, x - 1e-9).value;
            let hi = interp_potential_force(&v, &g, x + 1e-9).value;
            assert!((lo - at).abs() < 1e-8 && (hi - at).abs() < 1e-8);
        }
        let ramp = PotentialField::from_fn(&g, |x| 2.0 * x).unwrap();
        assert_relative_eq!(interp_potential_force(&ramp, &g, 7.3).value, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn quadrature_is_exact_for_affine_functions() {
        let p = PhysicsParams::new(1.0, 1.0).unwrap();
        let g = build_grid(30, 0.0, 29.0, 30, &p).unwrap();
        let one = MeshFunction::new(vec![1.0; 30], MeshRole::Density);
        assert_relative_eq!(quadrature(&one, &g), 29.0);
        let ramp = MeshFunction::new(g.nodes().collect(), MeshRole::Density);
        assert_relative_eq!(quadrature(&ramp, &g), 420.5);
    }

    #[test]
    fn curvature_of_sampled_parabola() {
        let p = PhysicsParams::new(1.0, 1.0).unwrap();
        let g = build_grid(21, -2.0, 2.0, 4, &p).unwrap();
        let v = PotentialField::from_fn(&g, |x| 1.5 * x * x).unwrap();
        for x in [-1.7, -0.3, 0.0, 1.11, 1.6] {
            assert_relative_eq!(interp_force_derivative(&v, &g, x).value, 3.0, epsilon = 1e-9);
        }
        assert!(interp_force_derivative(&v, &g, 2.5).clamped);
    }

    #[test]
    fn nearest_node_clamps() {
        let p = PhysicsParams::new(1.0, 1.0).unwrap();
        let g = build_grid(5, 0.0, 4.0, 4, &p).unwrap();
        assert_eq!(g.nearest_node(-3.0), 0);
        assert_eq!(g.nearest_node(1.49), 1);
        assert_eq!(g.nearest_node(1.51), 2);
        assert_eq!(g.nearest_node(99.0), 4);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn grid_period_round_trips(beta in 0.01f64..50.0, hbar in 0.1f64..3.0, n_tau in 2usize..500) {
                let p = PhysicsParams::with_hbar(1.0, beta, hbar).unwrap();
                let g = build_grid(5, 0.0, 1.0, n_tau, &p).unwrap();
                prop_assert!((g.period() - beta * hbar).abs() <= 1e-12 * beta * hbar);
            }

            #[test]
            fn trapezoid_exact_for_affine(a in -5.0f64..5.0, b in -5.0f64..5.0, n in 3usize..60, lo in -10.0f64..0.0, len in 0.5f64..20.0) {
                let p = PhysicsParams::new(1.0, 1.0).unwrap();
                let g = build_grid(n, lo, lo + len, 4, &p).unwrap();
                let f = MeshFunction::new(g.nodes().map(|x| a + b * x).collect(), MeshRole::Density);
                let hi = lo + len;
                let exact = a * len + 0.5 * b * (hi * hi - lo * lo);
                prop_assert!((quadrature(&f, &g) - exact).abs() <= 1e-10 * (1.0 + exact.abs()));
            }

            #[test]
            fn interpolation_continuous(vals in proptest::collection::vec(-3.0f64..3.0, 6), x in 0.0f64..5.0) {
                let p = PhysicsParams::new(1.0, 1.0).unwrap();
                let g = build_grid(6, 0.0, 5.0, 4, &p).unwrap();
                let v = PotentialField::new(vals).unwrap();
                let h = 1e-9;
                let a = interp_potential(&v, &g, (x - h).max(0.0)).value;
                let b = interp_potential(&v, &g, (x + h).min(5.0)).value;
                prop_assert!((a - b).abs() < 1e-7);
            }
        }
    }
}
