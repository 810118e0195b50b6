//! Cell correctors, the homogenized tensor `A₀`, the weak-data tensor `B♯`
//! and the H-limit `B₀`, plus oscillating-gradient reconstruction.
//!
//! For a coefficient that depends on `x`, cell problems are solved at the
//! centers of a coarse macro grid and the results are used piecewise
//! constantly in `x`. Coefficients that only depend on `y` use a single
//! macro cell.

use rayon::prelude::*;
use serde::Serialize;

use crate::domain::{
    build_mesh, check_epsilon, sample_cell, Boundary, CoeffTable, CoefficientField, GridField,
    GridVectorField, Mesh,
};
use crate::elliptic::solve_cell;
use crate::error::{Error, Result};
use crate::tensor::Mat2;

pub const DEFAULT_MACRO_RESOLUTION: usize = 8;
pub const MIN_CELL_RESOLUTION: usize = 32;

/// Piecewise-constant macro grid over Ω with `per_axis` cells per axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MacroGrid {
    pub dim: usize,
    pub per_axis: usize,
}

impl MacroGrid {
    pub fn len(&self) -> usize {
        self.per_axis.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.per_axis == 0
    }

    pub fn center(&self, k: usize) -> [f64; 2] {
        let m = self.per_axis as f64;
        let (i, j) = (k % self.per_axis, k / self.per_axis);
        if self.dim == 1 {
            [(k as f64 + 0.5) / m, 0.5]
        } else {
            [(i as f64 + 0.5) / m, (j as f64 + 0.5) / m]
        }
    }

    pub fn index_of(&self, x: [f64; 2]) -> usize {
        let idx = |t: f64| ((t * self.per_axis as f64) as usize).min(self.per_axis - 1);
        if self.dim == 1 {
            idx(x[0])
        } else {
            idx(x[1]) * self.per_axis + idx(x[0])
        }
    }
}

/// Corrector gradients `P(x,·)e_i = ∇_y χ_i(x,·)` per macro cell and direction.
#[derive(Clone, Debug)]
pub struct CorrectorTable {
    pub cell_mesh: Mesh,
    pub grid: MacroGrid,
    pub field_name: String,
    /// `columns[k][i]`: element gradients of `χ_i` at macro cell `k`.
    pub columns: Vec<Vec<GridVectorField>>,
    /// Coefficient samples on the cell mesh, per macro cell.
    pub samples: Vec<CoeffTable>,
    /// Cell correctors `χ_i`, per macro cell and direction.
    pub correctors: Vec<Vec<GridField>>,
}

impl CorrectorTable {
    pub fn dim(&self) -> usize {
        self.cell_mesh.dim()
    }

    /// `P e_i` on cell element `element` for macro point `x`.
    pub fn column_at(&self, x: [f64; 2], element: usize, direction: usize) -> [f64; 2] {
        self.columns[self.grid.index_of(x)][direction].values[element]
    }

    /// `P(x, y)` as a matrix whose columns are `∇_y χ_i`.
    pub fn matrix_at(&self, x: [f64; 2], y: [f64; 2]) -> Mat2 {
        let element = self.cell_mesh.element_containing(y);
        let k = self.grid.index_of(x);
        let mut p = Mat2::ZERO;
        for i in 0..self.dim() {
            let col = self.columns[k][i].values[element];
            p.0[0][i] = col[0];
            p.0[1][i] = col[1];
        }
        p
    }

    /// Cell means of the columns of `P` at macro cell `k` (should vanish).
    pub fn column_means(&self, k: usize) -> Vec<[f64; 2]> {
        self.columns[k].iter().map(|c| c.mean()).collect()
    }

    /// `∫_Y A (P + I) dy` at macro cell `k`, column by column.
    pub fn mean_flux(&self, k: usize) -> Mat2 {
        let dim = self.dim();
        let mut out = Mat2::ZERO;
        for i in 0..dim {
            let mut acc = [0.0; 2];
            for (e, el) in self.cell_mesh.elements().enumerate() {
                let mut g = self.columns[k][i].values[e];
                g[i] += 1.0;
                let f = self.samples[k].cells[el.cell].mul_vec(g);
                acc[0] += el.weight * f[0];
                acc[1] += el.weight * f[1];
            }
            out.0[0][i] = acc[0];
            out.0[1][i] = acc[1];
        }
        out
    }
}

/// Effective tensors, one matrix per macro cell.
#[derive(Clone, Debug, Serialize)]
pub struct HomogenizedTensors {
    #[serde(skip)]
    pub grid: MacroGrid,
    pub cell_resolution: usize,
    pub a0: Vec<Mat2>,
    pub bsharp: Option<Vec<Mat2>>,
    pub b0: Option<Vec<Mat2>>,
}

impl HomogenizedTensors {
    pub fn dim(&self) -> usize {
        self.grid.dim
    }

    pub fn a0_table(&self, mesh: &Mesh) -> CoeffTable {
        macro_table(mesh, self.grid, &self.a0)
    }

    pub fn bsharp_table(&self, mesh: &Mesh) -> Option<CoeffTable> {
        self.bsharp.as_ref().map(|b| macro_table(mesh, self.grid, b))
    }
}

/// Lifts per-macro-cell matrices to a per-cell table on `mesh`.
pub fn macro_table(mesh: &Mesh, grid: MacroGrid, values: &[Mat2]) -> CoeffTable {
    CoeffTable::from_fn(*mesh, |x| values[grid.index_of(x)])
}

/// `∫_Y C (P e_i + e_i)·(P e_j + e_j) dy` on one macro cell.
fn corrected_form(cell_mesh: &Mesh, coeff: &CoeffTable, columns: &[GridVectorField]) -> Mat2 {
    let dim = cell_mesh.dim();
    let mut out = Mat2::ZERO;
    for (e, el) in cell_mesh.elements().enumerate() {
        let c = coeff.cells[el.cell];
        let mut g = [[0.0; 2]; 2];
        for (i, gi) in g.iter_mut().enumerate().take(dim) {
            *gi = columns[i].values[e];
            gi[i] += 1.0;
        }
        for i in 0..dim {
            for j in 0..dim {
                out.0[i][j] += el.weight * c.form(dim, g[j], g[i]);
            }
        }
    }
    out
}

fn check_bounds(name: &str, m: &Mat2, dim: usize, alpha: f64, beta: f64) -> Result<()> {
    let [lo, hi] = m.sym_eigenvalues(dim);
    let slack = 1e-9 * beta;
    if lo < alpha - slack || hi > beta + slack {
        return Err(Error::Ellipticity(format!(
            "{name} has eigenvalues [{lo}, {hi}] outside [{alpha}, {beta}]"
        )));
    }
    Ok(())
}

/// Solves the cell problems for `A` and returns `A₀` with the corrector table.
pub fn homogenize_a(field: &CoefficientField, cell_resolution: usize) -> Result<(HomogenizedTensors, CorrectorTable)> {
    let per_axis = if field.is_separable() { 1 } else { DEFAULT_MACRO_RESOLUTION };
    homogenize_with_grid(field, cell_resolution, per_axis)
}

pub fn homogenize_with_grid(
    field: &CoefficientField,
    cell_resolution: usize,
    macro_per_axis: usize,
) -> Result<(HomogenizedTensors, CorrectorTable)> {
    if cell_resolution < MIN_CELL_RESOLUTION {
        return Err(Error::InvalidArgument(format!(
            "cell resolution {cell_resolution} < {MIN_CELL_RESOLUTION}"
        )));
    }
    if macro_per_axis == 0 {
        return Err(Error::InvalidArgument("macro grid needs at least one cell".into()));
    }
    let dim = field.dim();
    let cell_mesh = build_mesh(dim, cell_resolution, Boundary::PeriodicZeroMean)?;
    let grid = MacroGrid { dim, per_axis: macro_per_axis };

    let per_macro: Vec<(CoeffTable, Vec<GridField>)> = (0..grid.len())
        .into_par_iter()
        .map(|k| -> Result<_> {
            let samples = sample_cell(field, &cell_mesh, grid.center(k))?;
            let chis = (0..dim)
                .into_par_iter()
                .map(|i| solve_cell(&cell_mesh, &samples, i).map(|(chi, _)| chi))
                .collect::<Result<Vec<_>>>()?;
            Ok((samples, chis))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut samples = Vec::with_capacity(grid.len());
    let mut correctors = Vec::with_capacity(grid.len());
    let mut columns = Vec::with_capacity(grid.len());
    let mut a0 = Vec::with_capacity(grid.len());
    for (table, chis) in per_macro {
        let cols: Vec<GridVectorField> = chis.iter().map(GridField::gradient).collect();
        let mut tensor = corrected_form(&cell_mesh, &table, &cols);
        if field.is_symmetric() {
            // the quadratic form is symmetric; drop rounding asymmetry
            tensor = tensor.symmetric_part();
            check_bounds("A0", &tensor, dim, field.alpha(), field.beta())?;
        }
        a0.push(tensor);
        columns.push(cols);
        correctors.push(chis);
        samples.push(table);
    }

    let tensors = HomogenizedTensors { grid, cell_resolution, a0, bsharp: None, b0: None };
    let table = CorrectorTable {
        cell_mesh,
        grid,
        field_name: field.name().to_string(),
        columns,
        samples,
        correctors,
    };
    Ok((tensors, table))
}

/// `B♯_ij = ∫_Y B (P e_i + e_i)·(P e_j + e_j) dy` using the correctors of `A`.
pub fn assemble_bsharp(b: &CoefficientField, correctors: &CorrectorTable) -> Result<(MacroGrid, Vec<Mat2>)> {
    if !b.is_symmetric() {
        return Err(Error::InvalidArgument("B must be symmetric".into()));
    }
    if b.dim() != correctors.dim() {
        return Err(Error::MeshMismatch(format!(
            "B has dimension {}, correctors dimension {}",
            b.dim(),
            correctors.dim()
        )));
    }
    let grid = if b.is_separable() || correctors.grid.per_axis > 1 {
        correctors.grid
    } else {
        MacroGrid { dim: b.dim(), per_axis: DEFAULT_MACRO_RESOLUTION }
    };
    let values = (0..grid.len())
        .into_par_iter()
        .map(|k| -> Result<Mat2> {
            let x = grid.center(k);
            let samples = sample_cell(b, &correctors.cell_mesh, x)?;
            let cols = &correctors.columns[correctors.grid.index_of(x)];
            Ok(corrected_form(&correctors.cell_mesh, &samples, cols).symmetric_part())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((grid, values))
}

/// H-limit of `B` computed with the same cell machinery.
pub fn homogenize_b0(b: &CoefficientField, cell_resolution: usize) -> Result<(MacroGrid, Vec<Mat2>)> {
    let (tensors, _) = homogenize_a(b, cell_resolution)?;
    Ok((tensors.grid, tensors.a0))
}

/// Computes `A₀`, and when `b` is given also `B♯` and `B₀`, on a common macro grid.
pub fn homogenize_pair(
    a: &CoefficientField,
    b: Option<&CoefficientField>,
    cell_resolution: usize,
) -> Result<(HomogenizedTensors, CorrectorTable)> {
    let separable = a.is_separable() && b.map_or(true, |b| b.is_separable());
    let per_axis = if separable { 1 } else { DEFAULT_MACRO_RESOLUTION };
    let (mut tensors, correctors) = homogenize_with_grid(a, cell_resolution, per_axis)?;
    if let Some(b) = b {
        let (_, bsharp) = assemble_bsharp(b, &correctors)?;
        let (_, b0) = homogenize_with_grid(b, cell_resolution, per_axis)
            .map(|(t, _)| (t.grid, t.a0))?;
        tensors.bsharp = Some(bsharp);
        tensors.b0 = Some(b0);
    }
    Ok((tensors, correctors))
}

/// `(P(x_c, x_c/ε) + I) ∇u₀(x_c)` on every element of `u0`'s mesh.
pub fn reconstruct(correctors: &CorrectorTable, u0: &GridField, eps: f64) -> Result<GridVectorField> {
    let mesh = u0.mesh;
    if mesh.dim() != correctors.dim() {
        return Err(Error::MeshMismatch("state and correctors differ in dimension".into()));
    }
    let periods = check_epsilon(&mesh, eps)? as f64;
    let dim = mesh.dim();
    let grad = u0.gradient();
    let values = grad
        .values
        .iter()
        .enumerate()
        .map(|(e, g)| {
            let x = mesh.element_centroid(e);
            let y = [(x[0] * periods).fract(), (x[1] * periods).fract()];
            let cell_el = correctors.cell_mesh.element_containing(y);
            let mut out = *g;
            for i in 0..dim {
                let col = correctors.column_at(x, cell_el, i);
                out[0] += g[i] * col[0];
                out[1] += g[i] * col[1];
            }
            out
        })
        .collect();
    Ok(GridVectorField { mesh, values })
}

/// JSON export of effective tensors.
#[derive(Debug, Serialize)]
pub struct TensorExport {
    #[serde(rename = "A0")]
    pub a0: Vec<Vec<Vec<f64>>>,
    #[serde(rename = "Bsharp", skip_serializing_if = "Option::is_none")]
    pub bsharp: Option<Vec<Vec<Vec<f64>>>>,
    #[serde(rename = "B0", skip_serializing_if = "Option::is_none")]
    pub b0: Option<Vec<Vec<Vec<f64>>>>,
    pub cell_resolution: usize,
    pub macro_cells_per_axis: usize,
    pub presets: std::collections::BTreeMap<String, String>,
}

impl TensorExport {
    pub fn new(tensors: &HomogenizedTensors, presets: std::collections::BTreeMap<String, String>) -> Self {
        let dim = tensors.dim();
        let conv = |v: &Vec<Mat2>| v.iter().map(|m| m.rows(dim)).collect::<Vec<_>>();
        TensorExport {
            a0: conv(&tensors.a0),
            bsharp: tensors.bsharp.as_ref().map(conv),
            b0: tensors.b0.as_ref().map(conv),
            cell_resolution: tensors.cell_resolution,
            macro_cells_per_axis: tensors.grid.per_axis,
            presets,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("tensor export is always serializable")
    }
}
