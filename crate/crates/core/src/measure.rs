//! Signed measures on the mesh (node atoms plus a nodal density),
//! Stampacchia solutions and the duality check against transpose solves.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::domain::{CoeffTable, GridField, Mesh, Role};
use crate::elliptic::assemble;
use crate::error::{Error, Result};

pub const DUALITY_SEED: u64 = 0xd0a1;
/// Highest Fourier mode per axis in the weak-* dictionary.
pub const WSTAR_MAX_MODE: usize = 8;

#[derive(Clone, Debug)]
pub struct DiscreteMeasure {
    mesh: Mesh,
    atoms: Vec<(usize, f64)>,
    density: Option<GridField>,
    total_variation: f64,
}

impl DiscreteMeasure {
    /// Atoms at the same node are merged; zero-mass atoms are dropped.
    pub fn new(mesh: Mesh, atoms: Vec<(usize, f64)>, density: Option<GridField>) -> Result<Self> {
        let mut merged = BTreeMap::new();
        for (node, mass) in atoms {
            if node >= mesh.node_count() {
                return Err(Error::InvalidArgument(format!("atom at node {node} outside the mesh")));
            }
            if !mass.is_finite() {
                return Err(Error::InvalidArgument(format!("atom mass {mass} is not finite")));
            }
            *merged.entry(node).or_insert(0.0) += mass;
        }
        let atoms: Vec<(usize, f64)> = merged.into_iter().filter(|&(_, m)| m != 0.0).collect();
        if let Some(d) = &density {
            if d.mesh != mesh {
                return Err(Error::MeshMismatch("density lives on another mesh".into()));
            }
            if d.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument("density has non-finite values".into()));
            }
        }
        let atom_tv: f64 = atoms.iter().map(|(_, m)| m.abs()).sum();
        let density_tv = density
            .as_ref()
            .map_or(0.0, |d| mesh.node_volume() * d.values.iter().map(|v| v.abs()).sum::<f64>());
        Ok(DiscreteMeasure { mesh, atoms, density, total_variation: atom_tv + density_tv })
    }

    pub fn zero(mesh: Mesh) -> Self {
        DiscreteMeasure { mesh, atoms: Vec::new(), density: None, total_variation: 0.0 }
    }

    /// Point mass at the free node nearest to `x`.
    pub fn dirac(mesh: Mesh, x: [f64; 2], mass: f64) -> Result<Self> {
        let node = mesh.nearest_node(x).ok_or_else(|| {
            Error::InvalidArgument(format!("dirac at {:?} snaps to the boundary", &x[..mesh.dim()]))
        })?;
        Self::new(mesh, vec![(node, mass)], None)
    }

    pub fn from_density(density: GridField) -> Result<Self> {
        Self::new(density.mesh, Vec::new(), Some(density))
    }

    /// Node atoms with masses `θ_i h^d`.
    pub fn from_atom_densities(theta: &GridField) -> Result<Self> {
        let vol = theta.mesh.node_volume();
        let atoms = theta.values.iter().enumerate().map(|(i, t)| (i, t * vol)).collect();
        Self::new(theta.mesh, atoms, None)
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn atoms(&self) -> &[(usize, f64)] {
        &self.atoms
    }

    pub fn density(&self) -> Option<&GridField> {
        self.density.as_ref()
    }

    pub fn total_variation(&self) -> f64 {
        self.total_variation
    }

    pub fn add(&self, other: &DiscreteMeasure) -> Result<Self> {
        if self.mesh != other.mesh {
            return Err(Error::MeshMismatch("measures on different meshes".into()));
        }
        let mut atoms = self.atoms.clone();
        atoms.extend_from_slice(&other.atoms);
        let density = match (&self.density, &other.density) {
            (Some(a), Some(b)) => Some(a.axpy(1.0, b)),
            (Some(a), None) | (None, Some(a)) => Some(a.clone()),
            (None, None) => None,
        };
        Self::new(self.mesh, atoms, density)
    }

    pub fn scaled(&self, s: f64) -> Result<Self> {
        let atoms = self.atoms.iter().map(|&(n, m)| (n, s * m)).collect();
        let density = self.density.as_ref().map(|d| GridField::zeros(d.mesh, d.role).axpy(s, d));
        Self::new(self.mesh, atoms, density)
    }

    /// Nodal right-hand side: atom mass over `h^d` plus the density.
    pub fn rhs(&self) -> Vec<f64> {
        let mut rhs = match &self.density {
            Some(d) => d.values.clone(),
            None => vec![0.0; self.mesh.node_count()],
        };
        let vol = self.mesh.node_volume();
        for &(node, mass) in &self.atoms {
            rhs[node] += mass / vol;
        }
        rhs
    }

    /// `∫ v dλ` for a nodal field `v`.
    pub fn integrate(&self, v: &[f64]) -> f64 {
        let atoms: f64 = self.atoms.iter().map(|&(n, m)| m * v[n]).sum();
        let dens = self.density.as_ref().map_or(0.0, |d| {
            self.mesh.node_volume() * d.values.iter().zip(v).map(|(a, b)| a * b).sum::<f64>()
        });
        atoms + dens
    }

    /// `∫ φ dλ` for a function evaluated at node coordinates.
    pub fn integrate_fn(&self, phi: impl Fn([f64; 2]) -> f64) -> f64 {
        let atoms: f64 = self.atoms.iter().map(|&(n, m)| m * phi(self.mesh.node_coord(n))).sum();
        let dens = self.density.as_ref().map_or(0.0, |d| {
            let vol = self.mesh.node_volume();
            d.values.iter().enumerate().map(|(i, r)| vol * r * phi(self.mesh.node_coord(i))).sum::<f64>()
        });
        atoms + dens
    }
}

pub fn stampacchia_solve(mesh: &Mesh, a: &CoeffTable, lambda: &DiscreteMeasure) -> Result<GridField> {
    if mesh.is_periodic() {
        return Err(Error::InvalidArgument("measure data needs a Dirichlet mesh".into()));
    }
    if lambda.mesh != *mesh {
        return Err(Error::MeshMismatch("measure lives on another mesh".into()));
    }
    let system = assemble(mesh, a, false)?;
    let (u, _) = system.solve_vec(&lambda.rhs(), None)?;
    Ok(GridField { mesh: *mesh, values: u, role: Role::State })
}

#[derive(Clone, Debug, PartialEq)]
pub struct DualityTrial {
    pub trial: usize,
    pub left: f64,
    pub right: f64,
    pub gap: f64,
}

#[derive(Clone, Debug, Default)]
pub struct DualityReport {
    pub trials: Vec<DualityTrial>,
}

impl DualityReport {
    pub fn max_gap(&self) -> f64 {
        self.trials.iter().map(|t| t.gap).fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("trial,left,right,gap\n");
        for t in &self.trials {
            out.push_str(&format!("{},{:.12e},{:.12e},{:.12e}\n", t.trial, t.left, t.right, t.gap));
        }
        out
    }
}

pub fn check_duality(u: &GridField, a: &CoeffTable, lambda: &DiscreteMeasure, trials: usize) -> Result<DualityReport> {
    check_duality_seeded(u, a, lambda, trials, DUALITY_SEED)
}

/// Compares `∫ u g` with `∫ v dλ` where `-div(Aᵗ∇v) = g` for random `g ∈ [-1, 1]`.
pub fn check_duality_seeded(
    u: &GridField,
    a: &CoeffTable,
    lambda: &DiscreteMeasure,
    trials: usize,
    seed: u64,
) -> Result<DualityReport> {
    let mesh = u.mesh;
    if lambda.mesh != mesh || a.mesh != mesh {
        return Err(Error::MeshMismatch("duality check on mismatched meshes".into()));
    }
    let transpose = assemble(&mesh, a, true)?;
    let vol = mesh.node_volume();
    let rows: Result<Vec<DualityTrial>> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(trial as u64));
            let g: Vec<f64> = (0..mesh.node_count()).map(|_| rng.gen_range(-1.0..=1.0)).collect();
            let (v, _) = transpose.solve_vec(&g, None)?;
            let left = vol * u.values.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>();
            let right = lambda.integrate(&v);
            Ok(DualityTrial { trial, left, right, gap: (left - right).abs() })
        })
        .collect();
    Ok(DualityReport { trials: rows? })
}

fn mode_1d(k: usize, t: f64) -> f64 {
    // k = 0: constant; odd k: cos; even k: sin
    if k == 0 {
        1.0
    } else {
        let m = k.div_ceil(2) as f64;
        if k % 2 == 1 {
            (2.0 * PI * m * t).cos()
        } else {
            (2.0 * PI * m * t).sin()
        }
    }
}

/// Number of dictionary functions in dimension `dim`.
pub fn dictionary_len(dim: usize) -> usize {
    (2 * WSTAR_MAX_MODE + 1).pow(dim as u32)
}

/// Evaluates dictionary function `index` at `x`.
pub fn dictionary_eval(dim: usize, index: usize, x: [f64; 2]) -> f64 {
    let per_axis = 2 * WSTAR_MAX_MODE + 1;
    if dim == 1 {
        mode_1d(index, x[0])
    } else {
        mode_1d(index % per_axis, x[0]) * mode_1d(index / per_axis, x[1])
    }
}

/// `max_φ |∫φ dλ − ∫φ dμ|` over the tensor cos/sin dictionary.
pub fn wstar_distance(lambda: &DiscreteMeasure, mu: &DiscreteMeasure) -> Result<f64> {
    let dim = lambda.mesh.dim();
    if mu.mesh.dim() != dim {
        return Err(Error::MeshMismatch("measures in different dimensions".into()));
    }
    Ok((0..dictionary_len(dim))
        .into_par_iter()
        .map(|k| {
            let phi = |x: [f64; 2]| dictionary_eval(dim, k, x);
            (lambda.integrate_fn(phi) - mu.integrate_fn(phi)).abs()
        })
        .reduce(|| 0.0, f64::max))
}
