//! TOML run configuration.

use serde::Deserialize;
use std::path::{Path, PathBuf};

use crate::control::{ConvexSet, Cost, OptimizerOptions};
use crate::domain::{build_mesh, check_epsilon, Boundary, CoeffTable, CoefficientField, GridField, Mesh, Role};
use crate::error::{Error, Result};

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub mesh: MeshSection,
    #[serde(default)]
    pub coefficients: CoefficientSection,
    #[serde(default)]
    pub control: ControlSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub measure: MeasureSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSection {
    #[serde(default = "default_dim")]
    pub dim: usize,
    /// Cells per axis; defaults to 1024 in 1D and 256 in 2D.
    pub n: Option<usize>,
}

impl Default for MeshSection {
    fn default() -> Self {
        MeshSection { dim: 1, n: None }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientSection {
    #[serde(default = "default_a")]
    pub a: String,
    #[serde(default)]
    pub a_params: Vec<f64>,
    pub b: Option<String>,
    #[serde(default)]
    pub b_params: Vec<f64>,
    #[serde(default = "default_f")]
    pub f: String,
    #[serde(default)]
    pub f_params: Vec<f64>,
    #[serde(default = "default_cell_resolution")]
    pub cell_resolution: usize,
    /// `1/ε` for single runs; absent means the homogenized problem.
    pub eps: Option<u32>,
}

impl Default for CoefficientSection {
    fn default() -> Self {
        CoefficientSection {
            a: default_a(),
            a_params: Vec::new(),
            b: None,
            b_params: Vec::new(),
            f: default_f(),
            f_params: Vec::new(),
            cell_resolution: default_cell_resolution(),
            eps: None,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSection {
    #[serde(default = "default_set")]
    pub set: String,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub radius: Option<f64>,
    pub k: Option<f64>,
    /// `dirichlet` or `lr`.
    #[serde(default = "default_cost")]
    pub cost: String,
    #[serde(default = "default_r")]
    pub r: f64,
    /// Tikhonov weight; absent means the low-cost rule `N = ε`.
    pub weight: Option<f64>,
    #[serde(default = "default_kkt_tol")]
    pub kkt_tol: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
}

impl Default for ControlSection {
    fn default() -> Self {
        ControlSection {
            set: default_set(),
            lo: None,
            hi: None,
            radius: None,
            k: None,
            cost: default_cost(),
            r: default_r(),
            weight: None,
            kkt_tol: default_kkt_tol(),
            max_iterations: default_max_iterations(),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub kind: Option<String>,
    /// Reciprocals `1/ε`, strictly increasing.
    #[serde(default = "default_eps")]
    pub eps: Vec<u32>,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_oscillation")]
    pub oscillation: String,
    #[serde(default = "default_q")]
    pub q: f64,
    /// `shifting-dirac` or `oscillating-density`.
    #[serde(default = "default_sequence")]
    pub sequence: String,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            kind: None,
            eps: default_eps(),
            gamma: default_gamma(),
            oscillation: default_oscillation(),
            q: default_q(),
            sequence: default_sequence(),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureSection {
    #[serde(default = "default_lambda")]
    pub lambda: String,
    #[serde(default = "default_trials")]
    pub trials: usize,
    pub seed: Option<u64>,
}

impl Default for MeasureSection {
    fn default() -> Self {
        MeasureSection { lambda: default_lambda(), trials: default_trials(), seed: None }
    }
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub path: Option<PathBuf>,
    pub run_log: Option<PathBuf>,
}

fn default_dim() -> usize {
    1
}
fn default_a() -> String {
    "constant".into()
}
fn default_f() -> String {
    "constant".into()
}
fn default_cell_resolution() -> usize {
    256
}
fn default_set() -> String {
    "whole-space".into()
}
fn default_cost() -> String {
    "dirichlet".into()
}
fn default_r() -> f64 {
    2.0
}
fn default_kkt_tol() -> f64 {
    1e-7
}
fn default_max_iterations() -> usize {
    10_000
}
fn default_eps() -> Vec<u32> {
    vec![8, 16, 32, 64]
}
fn default_gamma() -> f64 {
    0.5
}
fn default_oscillation() -> String {
    "cos".into()
}
fn default_q() -> f64 {
    1.2
}
fn default_sequence() -> String {
    "shifting-dirac".into()
}
fn default_lambda() -> String {
    "dirac(0.5, 1.0)".into()
}
fn default_trials() -> usize {
    20
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let config: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.mesh.dim) {
            return Err(Error::Config(format!("mesh.dim = {} must be 1 or 2", self.mesh.dim)));
        }
        if self.sweep.eps.is_empty() {
            return Err(Error::Config("sweep.eps is empty".into()));
        }
        if self.sweep.eps.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("sweep.eps must list 1/ε strictly increasing (ε decreasing)".into()));
        }
        if !(self.sweep.gamma < 1.0) {
            return Err(Error::Config(format!("sweep.gamma = {} must be < 1", self.sweep.gamma)));
        }
        Ok(())
    }

    pub fn resolution(&self) -> usize {
        self.mesh.n.unwrap_or(if self.mesh.dim == 1 { 1024 } else { 256 })
    }

    pub fn dirichlet_mesh(&self) -> Result<Mesh> {
        build_mesh(self.mesh.dim, self.resolution(), Boundary::DirichletZero).map_err(as_config)
    }

    /// The sweep's ε values, each checked against the mesh.
    pub fn sweep_eps(&self) -> Result<Vec<f64>> {
        let mesh = self.dirichlet_mesh()?;
        self.sweep
            .eps
            .iter()
            .map(|&k| {
                let eps = 1.0 / k as f64;
                check_epsilon(&mesh, eps).map_err(as_config)?;
                Ok(eps)
            })
            .collect()
    }

    pub fn field_a(&self) -> Result<CoefficientField> {
        CoefficientField::preset(&self.coefficients.a, self.mesh.dim, &self.coefficients.a_params).map_err(as_config)
    }

    /// Cost coefficient; defaults to `A`.
    pub fn field_b(&self) -> Result<CoefficientField> {
        match &self.coefficients.b {
            Some(name) => CoefficientField::preset(name, self.mesh.dim, &self.coefficients.b_params).map_err(as_config),
            None => self.field_a(),
        }
    }

    pub fn source(&self, mesh: &Mesh) -> Result<GridField> {
        source_preset(&self.coefficients.f, &self.coefficients.f_params, mesh)
    }

    pub fn convex_set(&self) -> Result<ConvexSet> {
        let c = &self.control;
        let need = |v: Option<f64>, key: &str| v.ok_or_else(|| Error::Config(format!("control.{key} is required for set `{}`", c.set)));
        let set = match c.set.as_str() {
            "whole-space" => ConvexSet::WholeSpace,
            "box" => ConvexSet::Box { lo: need(c.lo, "lo")?, hi: need(c.hi, "hi")? },
            "positive-cone" => ConvexSet::PositiveCone,
            "l2-ball" => ConvexSet::L2Ball { radius: need(c.radius, "radius")? },
            "l1-ball" => ConvexSet::L1Ball { k: need(c.k, "k")? },
            other => return Err(Error::Config(format!("unknown control set `{other}`"))),
        };
        set.validate().map_err(as_config)?;
        Ok(set)
    }

    /// Cost for the ε-level problem; `b` is the sampled cost tensor.
    pub fn cost(&self, b: CoeffTable) -> Result<Cost> {
        match self.control.cost.as_str() {
            "dirichlet" => Ok(Cost::Dirichlet(b)),
            "lr" => Ok(Cost::Lr { r: self.control.r }),
            other => Err(Error::Config(format!("unknown cost `{other}`"))),
        }
    }

    pub fn weight(&self, eps: f64) -> f64 {
        self.control.weight.unwrap_or(eps)
    }

    pub fn optimizer(&self) -> OptimizerOptions {
        OptimizerOptions {
            kkt_tol: self.control.kkt_tol,
            max_iterations: self.control.max_iterations,
            ..OptimizerOptions::default()
        }
    }

    pub fn l1_bound(&self) -> Result<f64> {
        match self.convex_set()? {
            ConvexSet::L1Ball { k } => Ok(k),
            _ => Err(Error::Config("measure controls need control.set = \"l1-ball\"".into())),
        }
    }
}

fn as_config(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}

/// Source presets: `constant` (value, default 1), `linear` (`c x₁`),
/// `sin` (`c Π sin(π x_i)`), `zero`.
pub fn source_preset(name: &str, params: &[f64], mesh: &Mesh) -> Result<GridField> {
    let c = params.first().copied().unwrap_or(1.0);
    let dim = mesh.dim();
    let pi = std::f64::consts::PI;
    let field = match name {
        "constant" => GridField::from_fn(*mesh, Role::Data, |_| c),
        "zero" => GridField::zeros(*mesh, Role::Data),
        "linear" => GridField::from_fn(*mesh, Role::Data, |x| c * x[0]),
        "sin" => GridField::from_fn(*mesh, Role::Data, |x| {
            let s = (pi * x[0]).sin();
            if dim == 2 { c * s * (pi * x[1]).sin() } else { c * s }
        }),
        other => return Err(Error::Config(format!("unknown source preset `{other}`"))),
    };
    Ok(field)
}
