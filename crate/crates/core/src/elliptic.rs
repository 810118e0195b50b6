//! Finite-difference discretization of `-div(A ∇u) = g` on uniform meshes,
//! solved with Jacobi-preconditioned conjugate gradients.
//!
//! The stencil is assembled element by element from cell-constant
//! coefficients (see [`crate::domain`]) and scaled by `h^{-d}`, so the
//! right-hand side is the nodal data itself and a Dirac mass `m` at a node
//! enters as `m / h^d`. In 1D the result is the classical three-point
//! stencil with the cell sample as edge conductance; in 2D it is the
//! five-point stencil whose edge conductances are the averages of the two
//! cells sharing the edge (off-diagonal tensor entries add diagonal
//! couplings).

use crate::domain::{CoeffTable, GridField, Mesh, Role};
use crate::error::{Error, Result};

pub const DEFAULT_TOLERANCE: f64 = 1e-10;

/// Compressed sparse row matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            let mut last: Option<usize> = None;
            for (c, v) in row {
                if last == Some(c) {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(c);
                    values.push(v);
                    last = Some(c);
                }
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix { n, row_ptr, col_idx, values }
    }

    pub fn mul_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *yi = acc;
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_into(x, &mut y);
        y
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        (self.row_ptr[i]..self.row_ptr[i + 1])
            .find(|&k| self.col_idx[k] == j)
            .map_or(0.0, |k| self.values[k])
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut dense = vec![vec![0.0; self.n]; self.n];
        for (i, row) in dense.iter_mut().enumerate() {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                row[self.col_idx[k]] = self.values[k];
            }
        }
        dense
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    /// Final relative residual `‖b − Kx‖ / ‖b‖`.
    pub residual: f64,
    /// `∫ A ∇u · ∇u`.
    pub energy: f64,
    /// Relative residual after every iteration (recurrence values).
    pub history: Vec<f64>,
}

impl SolveReport {
    pub const CSV_HEADER: &'static str = "tag,dof,iterations,residual,energy";

    pub fn csv_row(&self, tag: &str, dof: usize) -> String {
        format!(
            "{tag},{dof},{},{:.6e},{:.12e}",
            self.iterations, self.residual, self.energy
        )
    }
}

/// Appends one report row to a run-log CSV, writing the header for a new file.
pub fn append_run_log(path: &std::path::Path, tag: &str, dof: usize, report: &SolveReport) -> Result<()> {
    use std::io::Write;
    let fresh = !path.exists();
    let mut file = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    if fresh {
        writeln!(file, "{}", SolveReport::CSV_HEADER)?;
    }
    writeln!(file, "{}", report.csv_row(tag, dof))?;
    Ok(())
}

/// Discrete operator `-div(A ∇·)` (or its transpose) on a mesh.
#[derive(Clone, Debug)]
pub struct LinearSystem {
    pub mesh: Mesh,
    pub matrix: CsrMatrix,
    /// Coefficients actually used in the operator (transposed when requested).
    pub coeff: CoeffTable,
    pub tolerance: f64,
    inv_diag: Vec<f64>,
}

/// Assembles `-div(A ∇u)`; with `transpose` set, `-div(Aᵗ ∇u)`.
pub fn assemble(mesh: &Mesh, coeff: &CoeffTable, transpose: bool) -> Result<LinearSystem> {
    if coeff.mesh != *mesh || coeff.cells.len() != mesh.cell_count() {
        return Err(Error::MeshMismatch(format!(
            "coefficient table has {} cells, mesh has {}",
            coeff.cells.len(),
            mesh.cell_count()
        )));
    }
    let coeff = if transpose { coeff.transposed() } else { coeff.clone() };
    let dim = mesh.dim();
    let scale = 1.0 / mesh.node_volume();
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::with_capacity(9); mesh.node_count()];
    for el in mesh.elements() {
        let a = coeff.cells[el.cell];
        for r in 0..el.len {
            let Some(row) = el.nodes[r] else { continue };
            for c in 0..el.len {
                let Some(col) = el.nodes[c] else { continue };
                // a(φ_c, φ_r) = ∫ A ∇φ_c · ∇φ_r
                let v = el.weight * a.form(dim, el.grads[c], el.grads[r]) * scale;
                rows[row].push((col, v));
            }
        }
    }
    let matrix = CsrMatrix::from_rows(rows);
    let inv_diag = matrix
        .diagonal()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    Ok(LinearSystem {
        mesh: *mesh,
        matrix,
        coeff,
        tolerance: DEFAULT_TOLERANCE,
        inv_diag,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn remove_mean(v: &mut [f64]) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
}

impl LinearSystem {
    pub fn dof(&self) -> usize {
        self.matrix.n
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.matrix.mul(x)
    }

    /// Solves `K u = g` for nodal data `g`.
    pub fn solve(&self, rhs: &GridField) -> Result<(GridField, SolveReport)> {
        if rhs.mesh != self.mesh {
            return Err(Error::MeshMismatch("right-hand side lives on another mesh".into()));
        }
        let (values, report) = self.solve_vec(&rhs.values, None)?;
        Ok((GridField { mesh: self.mesh, values, role: Role::State }, report))
    }

    /// Solves `K u = b` from an optional initial guess.
    ///
    /// On periodic meshes the right-hand side, the iterate and every residual
    /// are kept in the zero-mean subspace.
    pub fn solve_vec(&self, rhs: &[f64], guess: Option<&[f64]>) -> Result<(Vec<f64>, SolveReport)> {
        let n = self.dof();
        if rhs.len() != n {
            return Err(Error::MeshMismatch(format!("rhs length {} for {n} unknowns", rhs.len())));
        }
        let periodic = self.mesh.is_periodic();
        let mut b = rhs.to_vec();
        if periodic {
            remove_mean(&mut b);
        }
        let b_norm = dot(&b, &b).sqrt();
        let mut x = match guess {
            Some(g) if g.len() == n => g.to_vec(),
            _ => vec![0.0; n],
        };
        if periodic {
            remove_mean(&mut x);
        }
        if b_norm == 0.0 {
            let x = vec![0.0; n];
            let energy = self.energy_of(&x);
            return Ok((x, SolveReport { iterations: 0, residual: 0.0, energy, history: vec![] }));
        }

        let cap = 10 * n.max(1);
        let mut iterations = 0;
        let mut history = Vec::new();
        let mut q = vec![0.0; n];
        // Restart from the true residual if the recurrence drifted.
        for _attempt in 0..4 {
            let mut r = self.apply(&x);
            r.iter_mut().zip(&b).for_each(|(ri, bi)| *ri = bi - *ri);
            if periodic {
                remove_mean(&mut r);
            }
            let true_rel = dot(&r, &r).sqrt() / b_norm;
            if true_rel <= self.tolerance {
                let energy = self.energy_of(&x);
                return Ok((x, SolveReport { iterations, residual: true_rel, energy, history }));
            }
            let mut z: Vec<f64> = r.iter().zip(&self.inv_diag).map(|(a, d)| a * d).collect();
            if periodic {
                remove_mean(&mut z);
            }
            let mut p = z.clone();
            let mut rz = dot(&r, &z);
            loop {
                if iterations >= cap {
                    let rel = dot(&r, &r).sqrt() / b_norm;
                    return Err(Error::NonConvergence { iterations, residual: rel });
                }
                self.matrix.mul_into(&p, &mut q);
                let pq = dot(&p, &q);
                if !(pq > 0.0) {
                    return Err(Error::Singular(format!(
                        "non-positive curvature {pq:.3e} at iteration {iterations}"
                    )));
                }
                let alpha = rz / pq;
                for i in 0..n {
                    x[i] += alpha * p[i];
                    r[i] -= alpha * q[i];
                }
                if periodic {
                    remove_mean(&mut r);
                }
                iterations += 1;
                let rel = dot(&r, &r).sqrt() / b_norm;
                history.push(rel);
                if rel <= self.tolerance {
                    break;
                }
                for i in 0..n {
                    z[i] = r[i] * self.inv_diag[i];
                }
                if periodic {
                    remove_mean(&mut z);
                }
                let rz_new = dot(&r, &z);
                let beta = rz_new / rz;
                rz = rz_new;
                for i in 0..n {
                    p[i] = z[i] + beta * p[i];
                }
            }
            if periodic {
                remove_mean(&mut x);
            }
        }
        let mut r = self.apply(&x);
        r.iter_mut().zip(&b).for_each(|(ri, bi)| *ri = bi - *ri);
        if periodic {
            remove_mean(&mut r);
        }
        Err(Error::NonConvergence { iterations, residual: dot(&r, &r).sqrt() / b_norm })
    }

    fn energy_of(&self, x: &[f64]) -> f64 {
        energy_values(&self.coeff, x, x)
    }
}

/// `∫ A ∇u · ∇v` as a sum over elements.
pub fn energy(coeff: &CoeffTable, u: &GridField, v: &GridField) -> Result<f64> {
    if u.mesh != coeff.mesh || v.mesh != coeff.mesh {
        return Err(Error::MeshMismatch("energy arguments on different meshes".into()));
    }
    Ok(energy_values(coeff, &u.values, &v.values))
}

pub(crate) fn energy_values(coeff: &CoeffTable, u: &[f64], v: &[f64]) -> f64 {
    let mesh = coeff.mesh;
    let dim = mesh.dim();
    mesh.elements()
        .map(|el| el.weight * coeff.cells[el.cell].form(dim, el.gradient(u), el.gradient(v)))
        .sum()
}

/// Solves the cell problem `-div_y(A(∇χ + e_i)) = 0` for the zero-mean,
/// periodic corrector `χ_i` (`direction` is zero-based).
pub fn solve_cell(mesh: &Mesh, coeff: &CoeffTable, direction: usize) -> Result<(GridField, SolveReport)> {
    if !mesh.is_periodic() {
        return Err(Error::InvalidArgument("cell problems need a periodic mesh".into()));
    }
    if direction >= mesh.dim() {
        return Err(Error::InvalidArgument(format!(
            "direction {direction} out of range for dimension {}",
            mesh.dim()
        )));
    }
    let system = assemble(mesh, coeff, false)?;
    let mut e = [0.0; 2];
    e[direction] = 1.0;
    let dim = mesh.dim();
    let scale = 1.0 / mesh.node_volume();
    let mut rhs = vec![0.0; mesh.node_count()];
    for el in mesh.elements() {
        let a = coeff.cells[el.cell];
        for k in 0..el.len {
            if let Some(node) = el.nodes[k] {
                rhs[node] -= el.weight * a.form(dim, e, el.grads[k]) * scale;
            }
        }
    }
    let (values, report) = system.solve_vec(&rhs, None)?;
    Ok((GridField { mesh: *mesh, values, role: Role::State }, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_mesh, sample_epsilon, Boundary, CoefficientField};
    use crate::tensor::Mat2;

    /// Gaussian elimination with partial pivoting.
    fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for col in 0..n {
            let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
            a.swap(col, piv);
            b.swap(col, piv);
            for row in col + 1..n {
                let f = a[row][col] / a[col][col];
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
        let mut x = vec![0.0; n];
        for row in (0..n).rev() {
            let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
            x[row] = (b[row] - s) / a[row][row];
        }
        x
    }

    #[test]
    fn laplacian_stencil_1d() {
        let mesh = build_mesh(1, 4, Boundary::DirichletZero).unwrap();
        let table = CoeffTable::uniform(mesh, Mat2::scalar(1.0));
        let sys = assemble(&mesh, &table, false).unwrap();
        let dense = sys.matrix.to_dense();
        assert_eq!(dense[1], vec![-16.0, 32.0, -16.0]);
        assert_eq!(dense[0], vec![32.0, -16.0, 0.0]);
    }

    #[test]
    fn five_point_stencil_2d() {
        let mesh = build_mesh(2, 4, Boundary::DirichletZero).unwrap();
        let table = CoeffTable::uniform(mesh, Mat2::scalar(1.0));
        let sys = assemble(&mesh, &table, false).unwrap();
        let center = 4;
        assert!((sys.matrix.get(center, center) - 64.0).abs() < 1e-12);
        for nb in [1, 3, 5, 7] {
            assert!((sys.matrix.get(center, nb) + 16.0).abs() < 1e-12);
        }
        for diag in [0, 2, 6, 8] {
            assert_eq!(sys.matrix.get(center, diag), 0.0);
        }
    }

    #[test]
    fn transpose_is_noop_for_symmetric() {
        let mesh = build_mesh(2, 32, Boundary::DirichletZero).unwrap();
        let field = CoefficientField::smooth_sin(2, 2.0, 1.0).unwrap();
        let table = sample_epsilon(&field, &mesh, 0.5).unwrap();
        let a = assemble(&mesh, &table, false).unwrap();
        let b = assemble(&mesh, &table, true).unwrap();
        assert_eq!(a.matrix, b.matrix);
    }

    #[test]
    fn edge_conductance_is_cell_sample_in_1d() {
        let mesh = build_mesh(1, 32, Boundary::DirichletZero).unwrap();
        let field = CoefficientField::two_phase(1, 1.0, 4.0).unwrap();
        let table = sample_epsilon(&field, &mesh, 0.5).unwrap();
        let sys = assemble(&mesh, &table, false).unwrap();
        let h2 = (1.0 / 32.0f64).powi(2);
        // node 7 sits at x = 8/32 = 1/4, the interface between phase 1 (cells 0..8) and phase 4
        assert!((sys.matrix.get(7, 6) + 1.0 / h2).abs() < 1e-9);
        assert!((sys.matrix.get(7, 8) + 4.0 / h2).abs() < 1e-9);
    }

    #[test]
    fn anisotropic_transpose_differs() {
        let mesh = build_mesh(2, 8, Boundary::DirichletZero).unwrap();
        // a constant skew part drops out of the divergence; make it vary in x
        let table = CoeffTable::from_fn(mesh, |x| Mat2([[2.0, 0.5 * x[0]], [-0.5 * x[0], 2.0]]));
        let a = assemble(&mesh, &table, false).unwrap();
        let b = assemble(&mesh, &table, true).unwrap();
        assert_ne!(a.matrix, b.matrix);
        let da = a.matrix.to_dense();
        let db = b.matrix.to_dense();
        for i in 0..da.len() {
            for j in 0..da.len() {
                assert!((da[i][j] - db[j][i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_data_gives_zero() {
        let mesh = build_mesh(1, 64, Boundary::DirichletZero).unwrap();
        let sys = assemble(&mesh, &CoeffTable::uniform(mesh, Mat2::scalar(1.0)), false).unwrap();
        let (u, rep) = sys.solve(&GridField::zeros(mesh, Role::Data)).unwrap();
        assert_eq!(u.max_abs(), 0.0);
        assert_eq!(rep.iterations, 0);
    }

    #[test]
    fn parabola_midpoint_value() {
        let mesh = build_mesh(1, 256, Boundary::DirichletZero).unwrap();
        let sys = assemble(&mesh, &CoeffTable::uniform(mesh, Mat2::scalar(1.0)), false).unwrap();
        let g = GridField::from_fn(mesh, Role::Data, |_| 1.0);
        let (u, _) = sys.solve(&g).unwrap();
        let mid = mesh.nearest_node([0.5, 0.0]).unwrap();
        assert!((u.values[mid] - 0.125).abs() < 1e-6);
    }

    #[test]
    fn five_node_system_matches_dense_elimination() {
        let mesh = build_mesh(1, 6, Boundary::DirichletZero).unwrap();
        let table = CoeffTable::from_fn(mesh, |x| Mat2::scalar(1.0 + 3.0 * x[0]));
        let sys = assemble(&mesh, &table, false).unwrap();
        let g = GridField::from_fn(mesh, Role::Data, |x| (3.0 * x[0]).sin() + 0.5);
        let (u, _) = sys.solve(&g).unwrap();
        let direct = dense_solve(sys.matrix.to_dense(), g.values.clone());
        for (a, b) in u.values.iter().zip(&direct) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn energy_of_parabola() {
        let mesh = build_mesh(1, 256, Boundary::DirichletZero).unwrap();
        let table = CoeffTable::uniform(mesh, Mat2::scalar(1.0));
        let u = GridField::from_fn(mesh, Role::State, |x| x[0] * (1.0 - x[0]) / 2.0);
        // u' = 1/2 - x, so ∫(u')² = 1/12
        let e = energy(&table, &u, &u).unwrap();
        assert!((e - 1.0 / 12.0).abs() <= 1e-4 / 12.0);
        assert_eq!(energy(&table, &GridField::zeros(mesh, Role::State), &u).unwrap(), 0.0);
    }

    #[test]
    fn energy_is_symmetric_for_symmetric_coefficients() {
        let mesh = build_mesh(2, 16, Boundary::DirichletZero).unwrap();
        let table = CoeffTable::from_fn(mesh, |x| Mat2([[2.0 + x[0], 0.3], [0.3, 1.5]]));
        let u = GridField::from_fn(mesh, Role::State, |x| (x[0] * 7.0).sin() * x[1]);
        let v = GridField::from_fn(mesh, Role::State, |x| x[0] * x[0] - x[1]);
        let a = energy(&table, &u, &v).unwrap();
        let b = energy(&table, &v, &u).unwrap();
        assert!((a - b).abs() < 1e-13 * a.abs().max(1.0));
    }

    #[test]
    fn energy_identity_after_solve() {
        let mesh = build_mesh(2, 32, Boundary::DirichletZero).unwrap();
        let field = CoefficientField::two_phase(2, 1.0, 4.0).unwrap();
        let table = sample_epsilon(&field, &mesh, 0.5).unwrap();
        let sys = assemble(&mesh, &table, false).unwrap();
        let g = GridField::from_fn(mesh, Role::Data, |x| 1.0 + x[1]);
        let (u, rep) = sys.solve(&g).unwrap();
        let work = u.nodal_dot(&g);
        assert!((rep.energy - work).abs() <= 1e-8 * (1.0 + rep.energy.abs()));
        assert!(rep.residual <= DEFAULT_TOLERANCE);
    }

    #[test]
    fn constant_cell_problem_has_zero_corrector() {
        let mesh = build_mesh(2, 32, Boundary::PeriodicZeroMean).unwrap();
        let table = CoeffTable::uniform(mesh, Mat2::scalar(3.0));
        for dir in 0..2 {
            let (chi, _) = solve_cell(&mesh, &table, dir).unwrap();
            assert!(chi.max_abs() < 1e-14);
        }
    }

    #[test]
    fn two_phase_cell_slopes() {
        let mesh = build_mesh(1, 64, Boundary::PeriodicZeroMean).unwrap();
        let field = CoefficientField::two_phase(1, 1.0, 4.0).unwrap();
        let table = crate::domain::sample_cell(&field, &mesh, [0.5, 0.5]).unwrap();
        let (chi, _) = solve_cell(&mesh, &table, 0).unwrap();
        let grad = chi.gradient();
        for (e, g) in grad.values.iter().enumerate() {
            let expected = if e < 32 { 0.6 } else { -0.6 };
            assert!((g[0] - expected).abs() < 1e-8, "element {e}: {}", g[0]);
        }
        assert!(chi.mean().abs() < 1e-12);
    }

    #[test]
    fn laminate_second_corrector_vanishes() {
        let mesh = build_mesh(2, 32, Boundary::PeriodicZeroMean).unwrap();
        let field = CoefficientField::two_phase(2, 1.0, 4.0).unwrap();
        let table = crate::domain::sample_cell(&field, &mesh, [0.5, 0.5]).unwrap();
        let (chi2, _) = solve_cell(&mesh, &table, 1).unwrap();
        assert!(chi2.max_abs() < 1e-12);
    }

    #[test]
    fn cell_problem_rejects_dirichlet_mesh() {
        let mesh = build_mesh(1, 8, Boundary::DirichletZero).unwrap();
        let table = CoeffTable::uniform(mesh, Mat2::scalar(1.0));
        assert!(solve_cell(&mesh, &table, 0).is_err());
    }

    #[test]
    fn mismatched_table_is_rejected() {
        let mesh = build_mesh(1, 8, Boundary::DirichletZero).unwrap();
        let other = build_mesh(1, 16, Boundary::DirichletZero).unwrap();
        let table = CoeffTable::uniform(other, Mat2::scalar(1.0));
        assert!(matches!(assemble(&mesh, &table, false), Err(Error::MeshMismatch(_))));
    }
}
