//! Weakly converging data `g + ε^{-γ} h(x/ε)` built from zero-mean
//! periodic profiles.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::domain::{check_epsilon, GridField};
use crate::error::{Error, Result};

/// Cell means must vanish to this tolerance.
pub const PROFILE_MEAN_TOL: f64 = 1e-12;
const MEAN_SAMPLES: usize = 256;

#[derive(Clone)]
pub struct Profile {
    name: String,
    dim: usize,
    eval: Arc<dyn Fn([f64; 2]) -> f64 + Send + Sync>,
}

impl std::fmt::Debug for Profile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Profile").field("name", &self.name).field("dim", &self.dim).finish()
    }
}

impl Profile {
    /// Rejects profiles whose midpoint-rule cell mean exceeds the tolerance.
    pub fn new(name: &str, dim: usize, eval: impl Fn([f64; 2]) -> f64 + Send + Sync + 'static) -> Result<Self> {
        let profile = Profile { name: name.to_string(), dim, eval: Arc::new(eval) };
        let mean = profile.cell_mean();
        if mean.abs() > PROFILE_MEAN_TOL {
            return Err(Error::InvalidArgument(format!("profile `{name}` has cell mean {mean:.3e}")));
        }
        Ok(profile)
    }

    pub fn preset(name: &str, dim: usize) -> Result<Self> {
        match name {
            "zero" => Self::new(name, dim, |_| 0.0),
            "cos" => Self::new(name, dim, |y| (2.0 * PI * y[0]).cos()),
            "sin" => Self::new(name, dim, |y| (2.0 * PI * y[0]).sin()),
            "square" => Self::new(name, dim, |y| if y[0] < 0.5 { 1.0 } else { -1.0 }),
            other => Err(Error::Config(format!("unknown oscillation profile `{other}`"))),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn is_zero(&self) -> bool {
        self.name == "zero"
    }

    pub fn eval(&self, y: [f64; 2]) -> f64 {
        (self.eval)(y)
    }

    fn cell_mean(&self) -> f64 {
        let m = MEAN_SAMPLES;
        let mid = |i: usize| (i as f64 + 0.5) / m as f64;
        if self.dim == 1 {
            (0..m).map(|i| self.eval([mid(i), 0.0])).sum::<f64>() / m as f64
        } else {
            let mut s = 0.0;
            for j in 0..m {
                for i in 0..m {
                    s += self.eval([mid(i), mid(j)]);
                }
            }
            s / (m * m) as f64
        }
    }
}

/// `ε^{-γ} h(x/ε)` on the nodes of `mesh`.
pub fn oscillating_part(mesh: &crate::domain::Mesh, profile: &Profile, gamma: f64, eps: f64) -> Result<GridField> {
    if !(gamma < 1.0) {
        return Err(Error::InvalidArgument(format!("gamma = {gamma} must be < 1")));
    }
    let periods = check_epsilon(mesh, eps)? as f64;
    let amp = eps.powf(-gamma);
    Ok(GridField::from_fn(*mesh, crate::domain::Role::Data, |x| {
        amp * profile.eval([(x[0] * periods).fract(), (x[1] * periods).fract()])
    }))
}

/// `g_ε = g + ε^{-γ} h(x/ε)`.
pub fn make_weak_data(g: &GridField, profile: &Profile, gamma: f64, eps: f64) -> Result<GridField> {
    let osc = oscillating_part(&g.mesh, profile, gamma, eps)?;
    Ok(g.axpy(1.0, &osc).with_role(g.role))
}
