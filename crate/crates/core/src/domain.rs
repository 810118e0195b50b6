//! Uniform meshes on Ω = (0,1)^d and the unit cell Y, coefficient fields,
//! nodal fields and their discrete norms.
//!
//! Nodes live on the lattice `{0, h, .., 1}^d`. Only free nodes carry
//! values: interior nodes for Dirichlet meshes (boundary values are the
//! implicit zero) and `N` nodes per axis for periodic meshes. A *cell* is
//! one lattice square (or interval in 1D) and carries a coefficient sample
//! at its center. An *element* is the simplex on which gradients are
//! constant: the cell itself in 1D, and the two triangles obtained by
//! cutting the cell along its main diagonal in 2D.

use std::fmt::Write as _;
use std::io::Write;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Mat2;

/// Minimum number of grid spacings per oscillation period.
pub const MIN_POINTS_PER_PERIOD: f64 = 16.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Boundary {
    DirichletZero,
    PeriodicZeroMean,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mesh {
    dim: usize,
    n: usize,
    boundary: Boundary,
}

/// Gradient stencil of one element: `∇u = Σ grads[k] · u(nodes[k])`.
#[derive(Clone, Copy, Debug)]
pub struct Element {
    pub cell: usize,
    pub len: usize,
    pub nodes: [Option<usize>; 3],
    pub grads: [[f64; 2]; 3],
    pub weight: f64,
}

impl Element {
    pub fn gradient(&self, values: &[f64]) -> [f64; 2] {
        let mut g = [0.0; 2];
        for k in 0..self.len {
            if let Some(node) = self.nodes[k] {
                let u = values[node];
                g[0] += self.grads[k][0] * u;
                g[1] += self.grads[k][1] * u;
            }
        }
        g
    }

    /// Value at the element midpoint (vertex average of the linear interpolant).
    pub fn midpoint_value(&self, values: &[f64]) -> f64 {
        let sum: f64 = self.nodes[..self.len]
            .iter()
            .map(|n| n.map_or(0.0, |i| values[i]))
            .sum();
        sum / self.len as f64
    }
}

/// Builds a uniform mesh with `n` intervals per axis.
pub fn build_mesh(dim: usize, n: usize, boundary: Boundary) -> Result<Mesh> {
    Mesh::new(dim, n, boundary)
}

impl Mesh {
    pub fn new(dim: usize, n: usize, boundary: Boundary) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::InvalidMesh(format!("dimension {dim} not in {{1,2}}")));
        }
        if n < 2 {
            return Err(Error::InvalidMesh(format!("resolution {n} < 2")));
        }
        Ok(Mesh { dim, n, boundary })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn resolution(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// `h^d`, the volume attached to one node.
    pub fn node_volume(&self) -> f64 {
        self.h().powi(self.dim as i32)
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn is_periodic(&self) -> bool {
        self.boundary == Boundary::PeriodicZeroMean
    }

    pub fn nodes_per_axis(&self) -> usize {
        match self.boundary {
            Boundary::DirichletZero => self.n - 1,
            Boundary::PeriodicZeroMean => self.n,
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes_per_axis().pow(self.dim as u32)
    }

    pub fn cell_count(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn element_count(&self) -> usize {
        match self.dim {
            1 => self.n,
            _ => 2 * self.n * self.n,
        }
    }

    fn axis_index(&self, i: usize) -> Option<usize> {
        match self.boundary {
            Boundary::DirichletZero => {
                if i == 0 || i >= self.n {
                    None
                } else {
                    Some(i - 1)
                }
            }
            Boundary::PeriodicZeroMean => Some(i % self.n),
        }
    }

    /// Free-node index of lattice point `(i, j)`; `None` on a Dirichlet boundary.
    /// Periodic meshes wrap: lattice index `n` maps to `0`.
    pub fn lattice_node(&self, i: usize, j: usize) -> Option<usize> {
        let ii = self.axis_index(i)?;
        if self.dim == 1 {
            return Some(ii);
        }
        let jj = self.axis_index(j)?;
        Some(jj * self.nodes_per_axis() + ii)
    }

    pub fn node_lattice(&self, node: usize) -> [usize; 2] {
        let per = self.nodes_per_axis();
        let offset = match self.boundary {
            Boundary::DirichletZero => 1,
            Boundary::PeriodicZeroMean => 0,
        };
        if self.dim == 1 {
            [node + offset, 0]
        } else {
            [node % per + offset, node / per + offset]
        }
    }

    pub fn node_coord(&self, node: usize) -> [f64; 2] {
        let [i, j] = self.node_lattice(node);
        let h = self.h();
        if self.dim == 1 {
            [i as f64 * h, 0.0]
        } else {
            [i as f64 * h, j as f64 * h]
        }
    }

    /// Free node closest to `x`, or `None` when the nearest lattice point is on
    /// a Dirichlet boundary.
    pub fn nearest_node(&self, x: [f64; 2]) -> Option<usize> {
        let snap = |t: f64| (t * self.n as f64).round().clamp(0.0, self.n as f64) as usize;
        let i = snap(x[0]);
        let j = if self.dim == 2 { snap(x[1]) } else { 0 };
        self.lattice_node(i, j)
    }

    pub fn cell_lattice(&self, cell: usize) -> [usize; 2] {
        if self.dim == 1 {
            [cell, 0]
        } else {
            [cell % self.n, cell / self.n]
        }
    }

    pub fn cell_center(&self, cell: usize) -> [f64; 2] {
        let [i, j] = self.cell_lattice(cell);
        let h = self.h();
        if self.dim == 1 {
            [(i as f64 + 0.5) * h, 0.0]
        } else {
            [(i as f64 + 0.5) * h, (j as f64 + 0.5) * h]
        }
    }

    /// Cell containing the point `x` (coordinates wrapped into `[0,1)`).
    pub fn cell_containing(&self, x: [f64; 2]) -> usize {
        let idx = |t: f64| ((t.rem_euclid(1.0) * self.n as f64) as usize).min(self.n - 1);
        if self.dim == 1 {
            idx(x[0])
        } else {
            idx(x[1]) * self.n + idx(x[0])
        }
    }

    /// Element containing `x` (coordinates wrapped into `[0,1)`).
    pub fn element_containing(&self, x: [f64; 2]) -> usize {
        let cell = self.cell_containing(x);
        if self.dim == 1 {
            return cell;
        }
        let [i, j] = self.cell_lattice(cell);
        let s = x[0].rem_euclid(1.0) * self.n as f64 - i as f64;
        let t = x[1].rem_euclid(1.0) * self.n as f64 - j as f64;
        if s >= t {
            2 * cell
        } else {
            2 * cell + 1
        }
    }

    pub fn element_centroid(&self, e: usize) -> [f64; 2] {
        if self.dim == 1 {
            return self.cell_center(e);
        }
        let [i, j] = self.cell_lattice(e / 2);
        let h = self.h();
        let (i, j) = (i as f64, j as f64);
        if e % 2 == 0 {
            [(i + 2.0 / 3.0) * h, (j + 1.0 / 3.0) * h]
        } else {
            [(i + 1.0 / 3.0) * h, (j + 2.0 / 3.0) * h]
        }
    }

    pub fn element(&self, e: usize) -> Element {
        let h = self.h();
        let inv = 1.0 / h;
        if self.dim == 1 {
            return Element {
                cell: e,
                len: 2,
                nodes: [self.lattice_node(e, 0), self.lattice_node(e + 1, 0), None],
                grads: [[-inv, 0.0], [inv, 0.0], [0.0, 0.0]],
                weight: h,
            };
        }
        let cell = e / 2;
        let [i, j] = self.cell_lattice(cell);
        let weight = 0.5 * h * h;
        if e % 2 == 0 {
            // (i,j) → (i+1,j) → (i+1,j+1)
            Element {
                cell,
                len: 3,
                nodes: [
                    self.lattice_node(i, j),
                    self.lattice_node(i + 1, j),
                    self.lattice_node(i + 1, j + 1),
                ],
                grads: [[-inv, 0.0], [inv, -inv], [0.0, inv]],
                weight,
            }
        } else {
            // (i,j) → (i+1,j+1) → (i,j+1)
            Element {
                cell,
                len: 3,
                nodes: [
                    self.lattice_node(i, j),
                    self.lattice_node(i + 1, j + 1),
                    self.lattice_node(i, j + 1),
                ],
                grads: [[0.0, -inv], [inv, 0.0], [-inv, inv]],
                weight,
            }
        }
    }

    pub fn elements(&self) -> impl Iterator<Item = Element> + '_ {
        (0..self.element_count()).map(move |e| self.element(e))
    }
}

// ---------------------------------------------------------------------------
// Coefficient fields

type Evaluator = Arc<dyn Fn(&[f64; 2], &[f64; 2]) -> Mat2 + Send + Sync>;

/// A Y-periodic, possibly x-modulated matrix field `A(x, y)`.
///
/// The evaluator receives `y` already reduced to the unit cell.
#[derive(Clone)]
pub struct CoefficientField {
    name: String,
    dim: usize,
    alpha: f64,
    beta: f64,
    symmetric: bool,
    separable: bool,
    eval: Evaluator,
}

impl std::fmt::Debug for CoefficientField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CoefficientField")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("alpha", &self.alpha)
            .field("beta", &self.beta)
            .field("symmetric", &self.symmetric)
            .field("separable", &self.separable)
            .finish()
    }
}

const VALIDATION_SAMPLES: usize = 4096;

impl CoefficientField {
    /// Wraps an evaluator after checking ellipticity (and symmetry, when
    /// claimed) on a deterministic sample of points.
    pub fn new<F>(
        name: impl Into<String>,
        dim: usize,
        alpha: f64,
        beta: f64,
        symmetric: bool,
        separable: bool,
        eval: F,
    ) -> Result<Self>
    where
        F: Fn(&[f64; 2], &[f64; 2]) -> Mat2 + Send + Sync + 'static,
    {
        if !(1..=2).contains(&dim) {
            return Err(Error::InvalidArgument(format!("dimension {dim} not in {{1,2}}")));
        }
        if !(alpha > 0.0 && beta >= alpha && beta.is_finite()) {
            return Err(Error::Ellipticity(format!(
                "bounds must satisfy 0 < alpha <= beta, got ({alpha}, {beta})"
            )));
        }
        let field = CoefficientField {
            name: name.into(),
            dim,
            alpha,
            beta,
            symmetric,
            separable,
            eval: Arc::new(eval),
        };
        field.validate()?;
        Ok(field)
    }

    fn validate(&self) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        for _ in 0..VALIDATION_SAMPLES {
            let x = [rng.gen::<f64>(), rng.gen::<f64>()];
            let y = [rng.gen::<f64>(), rng.gen::<f64>()];
            let a = self.eval(&x, &y);
            self.check_sample(&a).map_err(|msg| {
                Error::Ellipticity(format!("{} at x={x:?}, y={y:?}: {msg}", self.name))
            })?;
        }
        Ok(())
    }

    fn check_sample(&self, a: &Mat2) -> std::result::Result<(), String> {
        let slack = 1e-12 * self.beta;
        let [lo, hi] = a.sym_eigenvalues(self.dim);
        if !(lo.is_finite() && hi.is_finite()) {
            return Err("non-finite entry".into());
        }
        if lo < self.alpha - slack || hi > self.beta + slack {
            return Err(format!(
                "eigenvalues [{lo}, {hi}] outside [{}, {}]",
                self.alpha, self.beta
            ));
        }
        if self.symmetric && a.asymmetry(self.dim) != 0.0 {
            return Err("matrix not symmetric".into());
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn is_separable(&self) -> bool {
        self.separable
    }

    /// `A(x, y)` with `y` wrapped into the unit cell.
    pub fn eval(&self, x: &[f64; 2], y: &[f64; 2]) -> Mat2 {
        let y = [y[0].rem_euclid(1.0), y[1].rem_euclid(1.0)];
        (self.eval)(x, &y)
    }

    /// `A ≡ c I`.
    pub fn constant(dim: usize, c: f64) -> Result<Self> {
        Self::new(format!("constant({c})"), dim, c, c, true, true, move |_, _| {
            Mat2::scalar(c)
        })
    }

    /// Isotropic two-phase profile in `y₁`: `a` on `[0, ½)`, `b` on `[½, 1)`.
    /// In 2D this is a rank-one laminate.
    pub fn two_phase(dim: usize, a: f64, b: f64) -> Result<Self> {
        let name = if dim == 1 { "two-phase-1d" } else { "laminate-2d" };
        Self::piecewise(format!("{name}({a},{b})"), dim, &[0.5], &[a, b])
    }

    /// Isotropic piecewise-constant profile in `y₁` with interior breakpoints
    /// `breaks` (increasing, inside (0,1)) and one value per piece.
    pub fn piecewise(
        name: impl Into<String>,
        dim: usize,
        breaks: &[f64],
        values: &[f64],
    ) -> Result<Self> {
        if values.len() != breaks.len() + 1 {
            return Err(Error::InvalidArgument(format!(
                "{} values for {} breakpoints",
                values.len(),
                breaks.len()
            )));
        }
        if breaks.windows(2).any(|w| w[0] >= w[1])
            || breaks.iter().any(|&b| !(b > 0.0 && b < 1.0))
        {
            return Err(Error::InvalidArgument("breakpoints must increase inside (0,1)".into()));
        }
        let alpha = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let beta = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let breaks = breaks.to_vec();
        let values = values.to_vec();
        Self::new(name, dim, alpha, beta, true, true, move |_, y| {
            let piece = breaks.iter().take_while(|&&b| y[0] >= b).count();
            Mat2::scalar(values[piece])
        })
    }

    /// `a(y) = mean + amp·sin(2πy₁)` in 1D, `mean + amp·sin(2πy₁)sin(2πy₂)` in 2D.
    pub fn smooth_sin(dim: usize, mean: f64, amp: f64) -> Result<Self> {
        let amp_abs = amp.abs();
        Self::new(
            format!("smooth-sin({mean},{amp})"),
            dim,
            mean - amp_abs,
            mean + amp_abs,
            true,
            true,
            move |_, y| {
                let tau = std::f64::consts::TAU;
                let s = if dim == 1 {
                    (tau * y[0]).sin()
                } else {
                    (tau * y[0]).sin() * (tau * y[1]).sin()
                };
                Mat2::scalar(mean + amp * s)
            },
        )
    }

    /// `(1 + s·x₁) A(x, y)`, making the field depend on the macroscopic variable.
    pub fn modulated(&self, s: f64) -> Result<Self> {
        if s < 0.0 {
            return Err(Error::InvalidArgument("modulation must be non-negative".into()));
        }
        if s == 0.0 {
            return Ok(self.clone());
        }
        let inner = self.eval.clone();
        CoefficientField::new(
            format!("{}*(1+{s}x)", self.name),
            self.dim,
            self.alpha,
            self.beta * (1.0 + s),
            self.symmetric,
            false,
            move |x, y| inner(x, y).scale(1.0 + s * x[0]),
        )
    }

    /// Named presets accepted in config files.
    pub fn preset(name: &str, dim: usize, params: &[f64]) -> Result<Self> {
        let p = |i: usize, default: f64| params.get(i).copied().unwrap_or(default);
        match name {
            "constant" => Self::constant(dim, p(0, 1.0)),
            "two-phase-1d" => {
                if dim != 1 {
                    return Err(Error::Config("two-phase-1d requires dim = 1".into()));
                }
                Self::two_phase(1, p(0, 1.0), p(1, 4.0))
            }
            "laminate-2d" => {
                if dim != 2 {
                    return Err(Error::Config("laminate-2d requires dim = 2".into()));
                }
                Self::two_phase(2, p(0, 1.0), p(1, 4.0))
            }
            "smooth-sin" => Self::smooth_sin(dim, p(0, 2.0), p(1, 1.0)),
            other => Err(Error::Config(format!("unknown coefficient preset `{other}`"))),
        }
    }
}

/// Coefficient samples, one matrix per mesh cell.
#[derive(Clone, Debug)]
pub struct CoeffTable {
    pub mesh: Mesh,
    pub cells: Vec<Mat2>,
}

impl CoeffTable {
    pub fn uniform(mesh: Mesh, value: Mat2) -> Self {
        CoeffTable { mesh, cells: vec![value; mesh.cell_count()] }
    }

    pub fn from_fn(mesh: Mesh, f: impl Fn([f64; 2]) -> Mat2) -> Self {
        let cells = (0..mesh.cell_count()).map(|c| f(mesh.cell_center(c))).collect();
        CoeffTable { mesh, cells }
    }

    pub fn is_symmetric(&self) -> bool {
        self.cells.iter().all(|m| m.asymmetry(self.mesh.dim()) == 0.0)
    }

    pub fn transposed(&self) -> Self {
        CoeffTable {
            mesh: self.mesh,
            cells: self.cells.iter().map(Mat2::transpose).collect(),
        }
    }
}

/// Checks that `eps` is the reciprocal of an integer dividing the mesh
/// resolution with at least [`MIN_POINTS_PER_PERIOD`] spacings per period.
/// Returns the number of periods across the domain.
pub fn check_epsilon(mesh: &Mesh, eps: f64) -> Result<usize> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    let periods = (1.0 / eps).round();
    if periods < 1.0 || (periods * eps - 1.0).abs() > 1e-9 {
        return Err(Error::Misaligned { eps, reason: "1/eps is not an integer".into() });
    }
    let periods = periods as usize;
    let n = mesh.resolution();
    if n % periods != 0 {
        return Err(Error::Misaligned {
            eps,
            reason: format!("1/eps = {periods} does not divide N = {n}"),
        });
    }
    let ratio = (n / periods) as f64;
    if ratio < MIN_POINTS_PER_PERIOD {
        return Err(Error::UnderResolved { ratio, required: MIN_POINTS_PER_PERIOD });
    }
    Ok(periods)
}

/// Samples `A(x_c, x_c/ε)` at every cell center.
pub fn sample_epsilon(field: &CoefficientField, mesh: &Mesh, eps: f64) -> Result<CoeffTable> {
    if field.dim() != mesh.dim() {
        return Err(Error::MeshMismatch(format!(
            "field dimension {} vs mesh dimension {}",
            field.dim(),
            mesh.dim()
        )));
    }
    let periods = check_epsilon(mesh, eps)? as f64;
    Ok(CoeffTable::from_fn(*mesh, |x| {
        let y = [(x[0] * periods).fract(), (x[1] * periods).fract()];
        field.eval(&x, &y)
    }))
}

/// Samples `A(x, y_c)` on a cell mesh for a fixed macroscopic point `x`.
pub fn sample_cell(field: &CoefficientField, cell_mesh: &Mesh, x: [f64; 2]) -> Result<CoeffTable> {
    if field.dim() != cell_mesh.dim() {
        return Err(Error::MeshMismatch(format!(
            "field dimension {} vs cell mesh dimension {}",
            field.dim(),
            cell_mesh.dim()
        )));
    }
    Ok(CoeffTable::from_fn(*cell_mesh, |y| field.eval(&x, &y)))
}

// ---------------------------------------------------------------------------
// Nodal and element fields

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    State,
    Control,
    Adjoint,
    Data,
}

#[derive(Clone, Debug)]
pub struct GridField {
    pub mesh: Mesh,
    pub values: Vec<f64>,
    pub role: Role,
}

#[derive(Clone, Debug)]
pub struct GridVectorField {
    pub mesh: Mesh,
    pub values: Vec<[f64; 2]>,
}

impl GridField {
    pub fn zeros(mesh: Mesh, role: Role) -> Self {
        GridField { mesh, values: vec![0.0; mesh.node_count()], role }
    }

    pub fn from_values(mesh: Mesh, role: Role, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.node_count() {
            return Err(Error::MeshMismatch(format!(
                "{} values for {} nodes",
                values.len(),
                mesh.node_count()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite value at node {i}")));
        }
        Ok(GridField { mesh, values, role })
    }

    pub fn from_fn(mesh: Mesh, role: Role, f: impl Fn([f64; 2]) -> f64) -> Self {
        let values = (0..mesh.node_count()).map(|i| f(mesh.node_coord(i))).collect();
        GridField { mesh, values, role }
    }

    pub fn with_role(mut self, role: Role) -> Self {
        self.role = role;
        self
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn gradient(&self) -> GridVectorField {
        let values = self.mesh.elements().map(|el| el.gradient(&self.values)).collect();
        GridVectorField { mesh: self.mesh, values }
    }

    /// Midpoint-rule integral of `|u|^p` over the elements.
    pub fn lp_integral(&self, p: f64) -> f64 {
        self.mesh
            .elements()
            .map(|el| el.weight * el.midpoint_value(&self.values).abs().powf(p))
            .sum()
    }

    pub fn lp_norm(&self, p: f64) -> f64 {
        self.lp_integral(p).powf(1.0 / p)
    }

    /// `(∫|∇u|^q)^{1/q}` with element gradients.
    pub fn grad_norm(&self, q: f64) -> f64 {
        self.grad_norm_shifted(q, [0.0, 0.0])
    }

    /// `(∫|∇u + ξ|^q)^{1/q}`; a constant `ξ` represents the affine part of a
    /// field on a periodic mesh.
    pub fn grad_norm_shifted(&self, q: f64, shift: [f64; 2]) -> f64 {
        let dim = self.mesh.dim();
        self.mesh
            .elements()
            .map(|el| {
                let g = el.gradient(&self.values);
                el.weight * vec_norm(dim, [g[0] + shift[0], g[1] + shift[1]]).powf(q)
            })
            .sum::<f64>()
            .powf(1.0 / q)
    }

    /// `W^{1,q}` norm: `(∫|u|^q + ∫|∇u|^q)^{1/q}`.
    pub fn w1q_norm(&self, q: f64) -> f64 {
        (self.lp_integral(q) + self.grad_norm(q).powf(q)).powf(1.0 / q)
    }

    /// Lumped (nodal) inner product `Σ u_i v_i h^d`.
    pub fn nodal_dot(&self, other: &GridField) -> f64 {
        nodal_dot(&self.mesh, &self.values, &other.values)
    }

    pub fn nodal_norm(&self) -> f64 {
        self.nodal_dot(self).sqrt()
    }

    /// Mesh mean of the nodal values.
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn axpy(&self, a: f64, other: &GridField) -> GridField {
        let values = self.values.iter().zip(&other.values).map(|(x, y)| x + a * y).collect();
        GridField { mesh: self.mesh, values, role: self.role }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        if self.mesh.dim() == 1 {
            out.push_str("node,x,value\n");
        } else {
            out.push_str("node,x,y,value\n");
        }
        for (i, v) in self.values.iter().enumerate() {
            let x = self.mesh.node_coord(i);
            if self.mesh.dim() == 1 {
                let _ = writeln!(out, "{i},{:.12e},{:.12e}", x[0], v);
            } else {
                let _ = writeln!(out, "{i},{:.12e},{:.12e},{:.12e}", x[0], x[1], v);
            }
        }
        out
    }

    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        file.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }
}

pub fn nodal_dot(mesh: &Mesh, a: &[f64], b: &[f64]) -> f64 {
    mesh.node_volume() * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
}

pub(crate) fn vec_norm(dim: usize, v: [f64; 2]) -> f64 {
    if dim == 1 {
        v[0].abs()
    } else {
        v[0].hypot(v[1])
    }
}

impl GridVectorField {
    pub fn zeros(mesh: Mesh) -> Self {
        GridVectorField { mesh, values: vec![[0.0; 2]; mesh.element_count()] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `(Σ_e w_e |v_e|²)^{1/2}`.
    pub fn l2_norm(&self) -> f64 {
        let dim = self.mesh.dim();
        self.mesh
            .elements()
            .zip(&self.values)
            .map(|(el, v)| el.weight * vec_norm(dim, *v).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn lq_norm(&self, q: f64) -> f64 {
        let dim = self.mesh.dim();
        self.mesh
            .elements()
            .zip(&self.values)
            .map(|(el, v)| el.weight * vec_norm(dim, *v).powf(q))
            .sum::<f64>()
            .powf(1.0 / q)
    }

    pub fn sub(&self, other: &GridVectorField) -> Result<GridVectorField> {
        if self.mesh != other.mesh {
            return Err(Error::MeshMismatch("vector fields on different meshes".into()));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| [a[0] - b[0], a[1] - b[1]])
            .collect();
        Ok(GridVectorField { mesh: self.mesh, values })
    }

    /// Area-weighted mean over the whole mesh.
    pub fn mean(&self) -> [f64; 2] {
        let mut acc = [0.0; 2];
        for (el, v) in self.mesh.elements().zip(&self.values) {
            acc[0] += el.weight * v[0];
            acc[1] += el.weight * v[1];
        }
        acc
    }
}
