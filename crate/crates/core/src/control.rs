//! Admissible control sets and projected-gradient solvers for the
//! low-cost control problems and their homogenized limits.
//!
//! Controls are nodal fields. Inner products and norms are the lumped
//! discrete `L²` ones (`Σ θ_i η_i h^d`), so the gradient returned by the
//! adjoint computation is the `L²` Riesz representative and projections
//! are Euclidean projections in that metric.

use crate::domain::{nodal_dot, CoeffTable, GridField, Mesh, Role};
use crate::elliptic::{assemble, energy_values, LinearSystem};
use crate::error::{Error, Result};
use crate::measure::DiscreteMeasure;
use crate::tensor::Mat2;

#[derive(Clone, Debug, PartialEq)]
pub enum ConvexSet {
    WholeSpace,
    Box { lo: f64, hi: f64 },
    PositiveCone,
    /// `‖θ‖₂ ≤ radius` in the discrete `L²` norm.
    L2Ball { radius: f64 },
    /// `Σ |θ_i| h^d ≤ k`.
    L1Ball { k: f64 },
}

impl ConvexSet {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ConvexSet::Box { lo, hi } if !(lo <= hi) => {
                Err(Error::InvalidArgument(format!("empty box [{lo}, {hi}]")))
            }
            ConvexSet::L2Ball { radius } if !(radius >= 0.0) => {
                Err(Error::InvalidArgument(format!("negative radius {radius}")))
            }
            ConvexSet::L1Ball { k } if !(k >= 0.0) => {
                Err(Error::InvalidArgument(format!("negative L1 bound {k}")))
            }
            _ => Ok(()),
        }
    }

    /// Projects nodal values in place; `volume` is the node weight `h^d`.
    pub fn project_in_place(&self, values: &mut [f64], volume: f64) {
        match *self {
            ConvexSet::WholeSpace => {}
            ConvexSet::Box { lo, hi } => values.iter_mut().for_each(|v| *v = v.clamp(lo, hi)),
            ConvexSet::PositiveCone => values.iter_mut().for_each(|v| *v = v.max(0.0)),
            ConvexSet::L2Ball { radius } => {
                let norm = (volume * values.iter().map(|v| v * v).sum::<f64>()).sqrt();
                if norm > radius {
                    let s = radius / norm;
                    values.iter_mut().for_each(|v| *v *= s);
                }
            }
            ConvexSet::L1Ball { k } => project_l1_ball(values, k / volume),
        }
    }

    pub fn project(&self, theta: &GridField) -> GridField {
        let mut out = theta.clone();
        self.project_in_place(&mut out.values, theta.mesh.node_volume());
        out
    }

    pub fn contains(&self, values: &[f64], volume: f64, tol: f64) -> bool {
        match *self {
            ConvexSet::WholeSpace => true,
            ConvexSet::Box { lo, hi } => values.iter().all(|&v| v >= lo - tol && v <= hi + tol),
            ConvexSet::PositiveCone => values.iter().all(|&v| v >= -tol),
            ConvexSet::L2Ball { radius } => {
                (volume * values.iter().map(|v| v * v).sum::<f64>()).sqrt() <= radius + tol
            }
            ConvexSet::L1Ball { k } => volume * values.iter().map(|v| v.abs()).sum::<f64>() <= k + tol,
        }
    }
}

/// Euclidean projection onto `{x : Σ|x_i| ≤ radius}` by sorting magnitudes
/// and soft-thresholding.
pub fn project_l1_ball(values: &mut [f64], radius: f64) {
    let l1: f64 = values.iter().map(|v| v.abs()).sum();
    if l1 <= radius {
        return;
    }
    if radius <= 0.0 {
        values.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    let mut mags: Vec<f64> = values.iter().map(|v| v.abs()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (j, &m) in mags.iter().enumerate() {
        cumsum += m;
        let candidate = (cumsum - radius) / (j + 1) as f64;
        if m > candidate {
            tau = candidate;
        } else {
            break;
        }
    }
    values
        .iter_mut()
        .for_each(|v| *v = v.signum() * (v.abs() - tau).max(0.0));
}

#[derive(Clone, Debug)]
pub enum Cost {
    /// `½ ∫ B ∇u·∇u + (N/2)‖θ‖²`.
    Dirichlet(CoeffTable),
    /// `‖u‖_r^r + N‖θ‖²` with nodal quadrature for the first term.
    Lr { r: f64 },
}

#[derive(Clone, Debug)]
pub struct ControlProblem {
    /// State coefficients (`A(x, x/ε)` samples or the homogenized tensor).
    pub state: CoeffTable,
    pub cost: Cost,
    /// Tikhonov weight `N`; the low-cost rule sets `N = ε`.
    pub weight: f64,
    pub source: GridField,
    pub set: ConvexSet,
}

#[derive(Clone, Debug)]
pub struct OptimizerOptions {
    pub kkt_tol: f64,
    pub step_tol: f64,
    pub max_iterations: usize,
    pub armijo: f64,
    pub max_backtracks: usize,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        OptimizerOptions {
            kkt_tol: 1e-7,
            step_tol: 1e-8,
            max_iterations: 10_000,
            armijo: 1e-4,
            max_backtracks: 60,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Optimum {
    pub control: GridField,
    pub state: GridField,
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    /// Objective value after every accepted step (first entry: initial point).
    pub history: Vec<f64>,
}

/// Objective, state and `L²` gradient for one control.
struct Evaluation {
    objective: f64,
    gradient: Vec<f64>,
    state: Vec<f64>,
}

/// State/adjoint machinery for one problem, with warm starts across calls.
pub struct Evaluator {
    mesh: Mesh,
    system: LinearSystem,
    adjoint: LinearSystem,
    cost_system: Option<LinearSystem>,
    cost: Cost,
    weight: f64,
    source: Vec<f64>,
    last_state: Option<Vec<f64>>,
    last_adjoint: Option<Vec<f64>>,
}

impl Evaluator {
    pub fn new(problem: &ControlProblem) -> Result<Self> {
        let mesh = problem.state.mesh;
        if problem.source.mesh != mesh {
            return Err(Error::MeshMismatch("source and coefficients on different meshes".into()));
        }
        if mesh.is_periodic() {
            return Err(Error::InvalidArgument("control problems need a Dirichlet mesh".into()));
        }
        if !(problem.weight >= 0.0) {
            return Err(Error::InvalidArgument(format!("negative weight {}", problem.weight)));
        }
        problem.set.validate()?;
        let system = assemble(&mesh, &problem.state, false)?;
        let adjoint = if problem.state.is_symmetric() {
            system.clone()
        } else {
            assemble(&mesh, &problem.state, true)?
        };
        let cost_system = match &problem.cost {
            Cost::Dirichlet(b) => {
                if b.mesh != mesh {
                    return Err(Error::MeshMismatch("cost tensor on another mesh".into()));
                }
                Some(assemble(&mesh, b, false)?)
            }
            Cost::Lr { r } => {
                if !(1.0..=3.0).contains(r) {
                    return Err(Error::InvalidArgument(format!("r = {r} outside [1, 3]")));
                }
                None
            }
        };
        Ok(Evaluator {
            mesh,
            system,
            adjoint,
            cost_system,
            cost: problem.cost.clone(),
            weight: problem.weight,
            source: problem.source.values.clone(),
            last_state: None,
            last_adjoint: None,
        })
    }

    fn state_of(&mut self, theta: &[f64]) -> Result<Vec<f64>> {
        let rhs: Vec<f64> = self.source.iter().zip(theta).map(|(f, t)| f + t).collect();
        let (u, _) = self.system.solve_vec(&rhs, self.last_state.as_deref())?;
        self.last_state = Some(u.clone());
        Ok(u)
    }

    fn evaluate(&mut self, theta: &[f64]) -> Result<Evaluation> {
        let u = self.state_of(theta)?;
        let vol = self.mesh.node_volume();
        let theta_sq = vol * theta.iter().map(|t| t * t).sum::<f64>();
        let (objective, adjoint_rhs, tikhonov_factor) = match &self.cost {
            Cost::Dirichlet(b) => {
                let e = energy_values(b, &u, &u);
                let rhs = self.cost_system.as_ref().expect("dirichlet cost system").apply(&u);
                (0.5 * e + 0.5 * self.weight * theta_sq, rhs, self.weight)
            }
            Cost::Lr { r } => {
                let r = *r;
                let term = vol * u.iter().map(|v| v.abs().powf(r)).sum::<f64>();
                let rhs = u.iter().map(|&v| r * v.signum() * v.abs().powf(r - 1.0)).collect();
                (term + self.weight * theta_sq, rhs, 2.0 * self.weight)
            }
        };
        let (p, _) = self.adjoint.solve_vec(&adjoint_rhs, self.last_adjoint.as_deref())?;
        self.last_adjoint = Some(p.clone());
        let gradient = p.iter().zip(theta).map(|(pi, t)| pi + tikhonov_factor * t).collect();
        Ok(Evaluation { objective, gradient, state: u })
    }

    /// Objective and `L²` gradient at `theta`, solved from scratch.
    pub fn objective_and_gradient(&mut self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.last_state = None;
        self.last_adjoint = None;
        let ev = self.evaluate(theta)?;
        Ok((ev.objective, ev.gradient))
    }

    pub fn objective(&mut self, theta: &[f64]) -> Result<f64> {
        Ok(self.evaluate(theta)?.objective)
    }
}

fn l2_norm(mesh: &Mesh, v: &[f64]) -> f64 {
    nodal_dot(mesh, v, v).sqrt()
}

/// `‖θ − Proj_U(θ − ∇J)‖₂`.
pub fn kkt_residual(set: &ConvexSet, mesh: &Mesh, theta: &[f64], gradient: &[f64]) -> f64 {
    let mut moved: Vec<f64> = theta.iter().zip(gradient).map(|(t, g)| t - g).collect();
    set.project_in_place(&mut moved, mesh.node_volume());
    let diff: Vec<f64> = theta.iter().zip(&moved).map(|(a, b)| a - b).collect();
    l2_norm(mesh, &diff)
}

/// Projected gradient with Barzilai–Borwein steps and Armijo backtracking.
fn projected_gradient(
    evaluator: &mut Evaluator,
    set: &ConvexSet,
    initial: &[f64],
    opts: &OptimizerOptions,
) -> Result<Optimum> {
    let mesh = evaluator.mesh;
    let vol = mesh.node_volume();
    let mut theta = initial.to_vec();
    set.project_in_place(&mut theta, vol);
    let mut current = evaluator.evaluate(&theta)?;
    let mut history = vec![current.objective];
    let mut step = 1.0;
    let mut iterations = 0;

    loop {
        let kkt = kkt_residual(set, &mesh, &theta, &current.gradient);
        if kkt <= opts.kkt_tol {
            return Ok(finish(mesh, theta, current, kkt, iterations, history));
        }
        if iterations >= opts.max_iterations {
            return Err(Error::IterationCap { iterations, kkt });
        }
        iterations += 1;

        let slack = 1e-12 * current.objective.abs().max(1.0);
        let mut trial_step = step;
        let mut accepted = None;
        for _ in 0..opts.max_backtracks {
            let mut candidate: Vec<f64> = theta
                .iter()
                .zip(&current.gradient)
                .map(|(t, g)| t - trial_step * g)
                .collect();
            set.project_in_place(&mut candidate, vol);
            let d: Vec<f64> = candidate.iter().zip(&theta).map(|(c, t)| c - t).collect();
            let slope = nodal_dot(&mesh, &current.gradient, &d);
            let next = evaluator.evaluate(&candidate)?;
            if next.objective <= current.objective + opts.armijo * slope + slack {
                accepted = Some((candidate, d, next));
                break;
            }
            trial_step *= 0.5;
        }
        let Some((candidate, s, next)) = accepted else {
            return Err(Error::StepSearch { iteration: iterations });
        };

        let y: Vec<f64> = next.gradient.iter().zip(&current.gradient).map(|(a, b)| a - b).collect();
        let sy = nodal_dot(&mesh, &s, &y);
        let ss = nodal_dot(&mesh, &s, &s);
        step = if sy > 0.0 { (ss / sy).clamp(1e-10, 1e10) } else { 1e10 };

        theta = candidate;
        current = next;
        history.push(current.objective);

        if ss.sqrt() <= opts.step_tol {
            let kkt = kkt_residual(set, &mesh, &theta, &current.gradient);
            return Ok(finish(mesh, theta, current, kkt, iterations, history));
        }
    }
}

fn finish(
    mesh: Mesh,
    theta: Vec<f64>,
    current: Evaluation,
    kkt: f64,
    iterations: usize,
    history: Vec<f64>,
) -> Optimum {
    Optimum {
        control: GridField { mesh, values: theta, role: Role::Control },
        state: GridField { mesh, values: current.state, role: Role::State },
        objective: current.objective,
        kkt_residual: kkt,
        iterations,
        history,
    }
}

/// Minimizes the ε-level cost over `U` starting from `θ = 0`.
pub fn solve_lowcost(problem: &ControlProblem, opts: &OptimizerOptions) -> Result<Optimum> {
    let zero = vec![0.0; problem.source.len()];
    solve_lowcost_from(problem, &zero, opts)
}

pub fn solve_lowcost_from(problem: &ControlProblem, initial: &[f64], opts: &OptimizerOptions) -> Result<Optimum> {
    if !(problem.weight > 0.0) {
        return Err(Error::InvalidArgument("low-cost problems need a positive weight".into()));
    }
    if initial.len() != problem.source.len() {
        return Err(Error::MeshMismatch("initial control has the wrong length".into()));
    }
    let mut evaluator = Evaluator::new(problem)?;
    projected_gradient(&mut evaluator, &problem.set, initial, opts)
}

/// Regularization ladder `N_j = 10^{-j}` used for the limit Dirichlet problem.
pub const LADDER_EXPONENTS: std::ops::RangeInclusive<i32> = 2..=6;

#[derive(Clone, Debug)]
pub struct LimitOptimum {
    /// Optimum at the smallest ladder weight.
    pub optimum: Optimum,
    /// Extrapolated `F(θ*)`.
    pub value: f64,
    /// `(N_j, F(θ_{N_j}))` along the ladder.
    pub ladder: Vec<(f64, f64)>,
}

/// Minimizes `F(θ) = ½∫B♯∇u·∇u` with `-div(A₀∇u) = f + θ` over `U`.
///
/// `F` has no Tikhonov term; it is approached through the weights
/// `N_j = 10^{-j}` (warm-started, with tolerances shrinking with `N_j`) and
/// `F(θ_N)` is extrapolated linearly in `N` to `N = 0`.
pub fn solve_limit_dirichlet(
    a0: &CoeffTable,
    bsharp: &CoeffTable,
    source: &GridField,
    set: &ConvexSet,
    opts: &OptimizerOptions,
) -> Result<LimitOptimum> {
    let mut theta = vec![0.0; source.len()];
    let mut ladder = Vec::new();
    let mut last = None;
    for j in LADDER_EXPONENTS {
        let weight = 10f64.powi(-j);
        let problem = ControlProblem {
            state: a0.clone(),
            cost: Cost::Dirichlet(bsharp.clone()),
            weight,
            source: source.clone(),
            set: set.clone(),
        };
        let rung_opts = OptimizerOptions {
            kkt_tol: (1e-4 * weight.sqrt()).max(opts.kkt_tol),
            ..opts.clone()
        };
        let mut evaluator = Evaluator::new(&problem)?;
        let opt = projected_gradient(&mut evaluator, set, &theta, &rung_opts)?;
        let f_value = 0.5 * energy_values(bsharp, &opt.state.values, &opt.state.values);
        ladder.push((weight, f_value));
        theta = opt.control.values.clone();
        last = Some(opt);
    }
    let optimum = last.expect("ladder is non-empty");
    let n = ladder.len();
    let (n1, f1) = ladder[n - 2];
    let (n2, f2) = ladder[n - 1];
    // F(θ_N) ≈ F* + cN
    let value = (f2 - (f1 - f2) * n2 / (n1 - n2)).max(0.0);
    Ok(LimitOptimum { optimum, value, ladder })
}

/// Minimizes `‖u‖_r^r` over node-atom measures with total variation at most
/// `k`, where `-div(A₀∇u) = f + μ`.
///
/// Atom masses are `μ_i = θ_i h^d`, so this is the `L^r` problem without a
/// Tikhonov term over the discrete `L¹` ball.
pub fn solve_limit_measure_raw(
    a0: &CoeffTable,
    source: &GridField,
    k: f64,
    r: f64,
    opts: &OptimizerOptions,
) -> Result<Optimum> {
    let problem = ControlProblem {
        state: a0.clone(),
        cost: Cost::Lr { r },
        weight: 0.0,
        source: source.clone(),
        set: ConvexSet::L1Ball { k },
    };
    let mut evaluator = Evaluator::new(&problem)?;
    let zero = vec![0.0; source.len()];
    projected_gradient(&mut evaluator, &problem.set, &zero, opts)
}

#[derive(Clone, Debug)]
pub struct MeasureOptimum {
    pub measure: DiscreteMeasure,
    pub state: GridField,
    pub value: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
}

/// [`solve_limit_measure_raw`] with the optimal atom masses packaged as a measure.
pub fn solve_limit_measure(
    a0: &CoeffTable,
    source: &GridField,
    k: f64,
    r: f64,
    opts: &OptimizerOptions,
) -> Result<MeasureOptimum> {
    let opt = solve_limit_measure_raw(a0, source, k, r, opts)?;
    Ok(MeasureOptimum {
        measure: DiscreteMeasure::from_atom_densities(&opt.control)?,
        state: opt.state,
        value: opt.objective,
        kkt_residual: opt.kkt_residual,
        iterations: opt.iterations,
    })
}

/// Discrete `H^{-1}` surrogate `‖∇w‖₂` with `-Δw = θ`, `w = 0` on the boundary.
pub fn hminus1_norm(theta: &GridField) -> Result<f64> {
    let mesh = theta.mesh;
    let lap = assemble(&mesh, &CoeffTable::uniform(mesh, Mat2::IDENTITY), false)?;
    let (_, report) = lap.solve(theta)?;
    Ok(report.energy.max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_mesh, Boundary};

    #[test]
    fn projection_examples() {
        let mut v = vec![-1.0, 2.0];
        ConvexSet::PositiveCone.project_in_place(&mut v, 1.0);
        assert_eq!(v, vec![0.0, 2.0]);

        let mut inside = vec![0.2, -0.3];
        ConvexSet::L1Ball { k: 1.0 }.project_in_place(&mut inside, 1.0);
        assert_eq!(inside, vec![0.2, -0.3]);

        let mut w = vec![2.0, 0.5];
        ConvexSet::L1Ball { k: 1.0 }.project_in_place(&mut w, 1.0);
        assert_eq!(w, vec![1.0, 0.0]);

        let mut b = vec![-3.0, 0.5, 4.0];
        ConvexSet::Box { lo: -1.0, hi: 1.0 }.project_in_place(&mut b, 1.0);
        assert_eq!(b, vec![-1.0, 0.5, 1.0]);

        let mut l2 = vec![3.0, 4.0];
        ConvexSet::L2Ball { radius: 1.0 }.project_in_place(&mut l2, 0.25);
        assert!((0.25 * (l2[0] * l2[0] + l2[1] * l2[1]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn l1_projection_respects_node_volume() {
        let mut v = vec![4.0, -4.0, 0.0];
        // Σ|v| h = 2 with h = 0.25, so the ball of radius 1 halves the masses
        ConvexSet::L1Ball { k: 1.0 }.project_in_place(&mut v, 0.25);
        assert_eq!(v, vec![2.0, -2.0, 0.0]);
    }

    #[test]
    fn invalid_sets_rejected() {
        assert!(ConvexSet::Box { lo: 1.0, hi: 0.0 }.validate().is_err());
        assert!(ConvexSet::L1Ball { k: -1.0 }.validate().is_err());
        assert!(ConvexSet::L2Ball { radius: f64::NAN }.validate().is_err());
    }

    fn laplace_problem(n: usize, f: f64, set: ConvexSet, weight: f64) -> ControlProblem {
        let mesh = build_mesh(1, n, Boundary::DirichletZero).unwrap();
        let a = CoeffTable::uniform(mesh, Mat2::scalar(1.0));
        ControlProblem {
            state: a.clone(),
            cost: Cost::Dirichlet(a),
            weight,
            source: GridField::from_fn(mesh, Role::Data, |_| f),
            set,
        }
    }

    #[test]
    fn zero_source_gives_zero_optimum() {
        let p = laplace_problem(32, 0.0, ConvexSet::Box { lo: -1.0, hi: 1.0 }, 0.1);
        let opt = solve_lowcost(&p, &OptimizerOptions::default()).unwrap();
        assert_eq!(opt.control.max_abs(), 0.0);
        assert_eq!(opt.state.max_abs(), 0.0);
        assert_eq!(opt.objective, 0.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mesh = build_mesh(1, 16, Boundary::DirichletZero).unwrap();
        let a = CoeffTable::from_fn(mesh, |x| Mat2::scalar(1.0 + x[0]));
        let b = CoeffTable::from_fn(mesh, |x| Mat2::scalar(2.0 - x[0]));
        for cost in [Cost::Dirichlet(b), Cost::Lr { r: 2.0 }, Cost::Lr { r: 1.5 }] {
            let p = ControlProblem {
                state: a.clone(),
                cost,
                weight: 0.3,
                source: GridField::from_fn(mesh, Role::Data, |x| 1.0 + x[0]),
                set: ConvexSet::WholeSpace,
            };
            let mut ev = Evaluator::new(&p).unwrap();
            let theta: Vec<f64> = (0..mesh.node_count()).map(|i| (i as f64 * 0.7).sin()).collect();
            let (_, g) = ev.objective_and_gradient(&theta).unwrap();
            let vol = mesh.node_volume();
            for i in [0, 5, 14] {
                let step = 1e-5;
                let mut plus = theta.clone();
                let mut minus = theta.clone();
                plus[i] += step;
                minus[i] -= step;
                let fd = (ev.objective(&plus).unwrap() - ev.objective(&minus).unwrap()) / (2.0 * step);
                // L² gradient = Euclidean gradient / h^d
                assert!((fd / vol - g[i]).abs() < 1e-5 * (1.0 + g[i].abs()), "node {i}: {} vs {}", fd / vol, g[i]);
            }
        }
    }

    #[test]
    fn objective_history_is_monotone() {
        let p = laplace_problem(64, 1.0, ConvexSet::Box { lo: -1.0, hi: 0.0 }, 0.05);
        let opt = solve_lowcost(&p, &OptimizerOptions::default()).unwrap();
        assert!(opt.kkt_residual <= 1e-7);
        for w in opt.history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0));
        }
    }

    #[test]
    fn hminus1_of_zero() {
        let mesh = build_mesh(1, 16, Boundary::DirichletZero).unwrap();
        assert_eq!(hminus1_norm(&GridField::zeros(mesh, Role::Control)).unwrap(), 0.0);
    }

    fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for c in 0..n {
            let piv = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
            a.swap(c, piv);
            b.swap(c, piv);
            for r in c + 1..n {
                let f = a[r][c] / a[c][c];
                for k in c..n {
                    a[r][k] -= f * a[c][k];
                }
                b[r] -= f * b[c];
            }
        }
        let mut x = vec![0.0; n];
        for r in (0..n).rev() {
            let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
            x[r] = (b[r] - s) / a[r][r];
        }
        x
    }

    #[test]
    fn unconstrained_l2_matches_dense_optimality_system() {
        // r = 2: K u = f + θ, θ = -K⁻¹u / N, so (K² + I/N) u = K f
        let n = 16;
        let weight = 0.02;
        let mesh = build_mesh(1, n, Boundary::DirichletZero).unwrap();
        let a = CoeffTable::from_fn(mesh, |x| Mat2::scalar(1.0 + 0.5 * x[0]));
        let source = GridField::from_fn(mesh, Role::Data, |x| 1.0 + x[0] * x[0]);
        let p = ControlProblem {
            state: a.clone(),
            cost: Cost::Lr { r: 2.0 },
            weight,
            source: source.clone(),
            set: ConvexSet::WholeSpace,
        };
        let opt = solve_lowcost(&p, &OptimizerOptions { kkt_tol: 1e-10, ..Default::default() }).unwrap();

        let k = assemble(&mesh, &a, false).unwrap().matrix.to_dense();
        let m = k.len();
        let mut sys = vec![vec![0.0; m]; m];
        for i in 0..m {
            for j in 0..m {
                sys[i][j] = (0..m).map(|l| k[i][l] * k[l][j]).sum::<f64>();
            }
            sys[i][i] += 1.0 / weight;
        }
        let kf: Vec<f64> = (0..m).map(|i| (0..m).map(|j| k[i][j] * source.values[j]).sum()).collect();
        let u = dense_solve(sys, kf);
        for i in 0..m {
            assert!((u[i] - opt.state.values[i]).abs() < 1e-8, "node {i}");
        }
    }

    #[test]
    fn box_constrained_optimum_beats_lattice_search() {
        // three unknowns; exhaustive search over a 0.05 lattice in [-1, 0]^3
        let p = laplace_problem(4, 4.0, ConvexSet::Box { lo: -1.0, hi: 0.0 }, 0.05);
        let opt = solve_lowcost(&p, &OptimizerOptions::default()).unwrap();
        let k = assemble(&p.state.mesh, &p.state, false).unwrap().matrix.to_dense();
        let h = p.state.mesh.node_volume();
        let objective = |t: [f64; 3]| {
            let rhs: Vec<f64> = t.iter().map(|ti| 4.0 + ti).collect();
            let u = dense_solve(k.clone(), rhs.clone());
            let quad: f64 = (0..3).map(|i| u[i] * rhs[i]).sum::<f64>() * h;
            0.5 * quad + 0.5 * 0.05 * h * t.iter().map(|x| x * x).sum::<f64>()
        };
        let mut best = f64::INFINITY;
        let grid: Vec<f64> = (0..=20).map(|i| -1.0 + 0.05 * i as f64).collect();
        for &a in &grid {
            for &b in &grid {
                for &c in &grid {
                    best = best.min(objective([a, b, c]));
                }
            }
        }
        let t = &opt.control.values;
        assert!((opt.objective - objective([t[0], t[1], t[2]])).abs() < 1e-12);
        assert!(opt.objective <= best + 1e-12);
        // the lattice contains the optimum's neighbourhood, so it is close
        assert!(best - opt.objective < 1e-2);
    }

    #[test]
    fn distinct_initial_points_reach_same_optimum() {
        let p = laplace_problem(32, 1.0, ConvexSet::Box { lo: -1.0, hi: 0.0 }, 0.1);
        let opts = OptimizerOptions { kkt_tol: 1e-9, ..Default::default() };
        let a = solve_lowcost(&p, &opts).unwrap();
        let start = vec![-1.0; p.source.len()];
        let b = solve_lowcost_from(&p, &start, &opts).unwrap();
        let diff: Vec<f64> = a.control.values.iter().zip(&b.control.values).map(|(x, y)| x - y).collect();
        assert!(l2_norm(&p.source.mesh, &diff) < 1e-6);
    }

    #[test]
    fn kkt_residual_recomputes_from_returned_control() {
        let p = laplace_problem(32, 1.0, ConvexSet::L2Ball { radius: 0.3 }, 0.05);
        let opt = solve_lowcost(&p, &OptimizerOptions::default()).unwrap();
        let mut ev = Evaluator::new(&p).unwrap();
        let (j, g) = ev.objective_and_gradient(&opt.control.values).unwrap();
        assert!((j - opt.objective).abs() < 1e-10);
        assert!(kkt_residual(&p.set, &p.source.mesh, &opt.control.values, &g) <= 1e-7);
    }

    #[test]
    fn limit_dirichlet_ladder_converges() {
        let p = laplace_problem(32, 1.0, ConvexSet::Box { lo: -0.5, hi: 0.0 }, 1.0);
        let lim = solve_limit_dirichlet(&p.state, &p.state, &p.source, &p.set, &OptimizerOptions::default()).unwrap();
        assert_eq!(lim.ladder.len(), 5);
        // f + θ ≥ 0.5 everywhere, and θ = -0.5 minimizes the energy of the state
        let expected = {
            let mut ev = Evaluator::new(&ControlProblem { weight: 0.0, ..p.clone() }).unwrap();
            ev.objective(&vec![-0.5; p.source.len()]).unwrap()
        };
        assert!((lim.value - expected).abs() < 1e-6, "{} vs {}", lim.value, expected);
    }

    #[test]
    fn measure_limit_stays_in_l1_ball() {
        let mesh = build_mesh(1, 32, Boundary::DirichletZero).unwrap();
        let a0 = CoeffTable::uniform(mesh, Mat2::scalar(1.0));
        let f = GridField::from_fn(mesh, Role::Data, |_| 1.0);
        let opt = solve_limit_measure_raw(&a0, &f, 0.5, 2.0, &OptimizerOptions::default()).unwrap();
        let tv: f64 = opt.control.values.iter().map(|t| t.abs()).sum::<f64>() * mesh.node_volume();
        assert!(tv <= 0.5 + 1e-12);
        assert!(opt.control.values.iter().all(|&t| t <= 1e-12));
    }

    #[test]
    fn limit_measure_matches_atom_grid_search() {
        let mesh = build_mesh(1, 4, Boundary::DirichletZero).unwrap();
        let a0 = CoeffTable::from_fn(mesh, |x| Mat2::scalar(if x[0] < 0.5 { 1.0 } else { 4.0 }));
        let f = GridField::from_fn(mesh, Role::Data, |_| 1.0);
        let k = 0.1;
        let opts = OptimizerOptions { kkt_tol: 1e-10, ..Default::default() };
        let opt = solve_limit_measure(&a0, &f, k, 2.0, &opts).unwrap();

        let kd = assemble(&mesh, &a0, false).unwrap().matrix.to_dense();
        let h = mesh.node_volume();
        let value = |m: [f64; 3]| {
            let rhs: Vec<f64> = (0..3).map(|i| 1.0 + m[i] / h).collect();
            dense_solve(kd.clone(), rhs).iter().map(|u| u * u * h).sum::<f64>()
        };
        let search = |center: [f64; 3], step: f64, half: i32| {
            let mut best = (f64::INFINITY, center);
            for i in -half..=half {
                for j in -half..=half {
                    for l in -half..=half {
                        let m = [center[0] + i as f64 * step, center[1] + j as f64 * step, center[2] + l as f64 * step];
                        if m.iter().map(|x| x.abs()).sum::<f64>() <= k + 1e-12 {
                            let v = value(m);
                            if v < best.0 {
                                best = (v, m);
                            }
                        }
                    }
                }
            }
            best
        };
        let coarse = search([0.0; 3], 0.01, 10);
        let fine = search(coarse.1, 1e-3, 10);
        assert!((opt.value - fine.0).abs() <= 1e-4, "{} vs {}", opt.value, fine.0);
        assert!(opt.value <= fine.0 + 1e-12);
        assert!(opt.measure.total_variation() <= k + 1e-12);
    }

    #[test]
    fn limit_measure_with_zero_budget() {
        let mesh = build_mesh(1, 32, Boundary::DirichletZero).unwrap();
        let a0 = CoeffTable::uniform(mesh, Mat2::scalar(1.6));
        let f = GridField::from_fn(mesh, Role::Data, |x| x[0]);
        let opt = solve_limit_measure(&a0, &f, 0.0, 2.0, &OptimizerOptions::default()).unwrap();
        assert_eq!(opt.measure.total_variation(), 0.0);
        let (u, _) = assemble(&mesh, &a0, false).unwrap().solve(&f).unwrap();
        assert!((opt.value - u.values.iter().map(|v| v * v).sum::<f64>() * mesh.node_volume()).abs() < 1e-14);

        let zero = GridField::zeros(mesh, Role::Data);
        let opt = solve_limit_measure(&a0, &zero, 1.0, 2.0, &OptimizerOptions::default()).unwrap();
        assert_eq!(opt.value, 0.0);
        assert!(opt.measure.atoms().is_empty());
    }

    proptest::proptest! {
        #[test]
        fn projections_are_idempotent_and_nonexpansive(
            x in proptest::collection::vec(-5.0f64..5.0, 1..12),
            shift in proptest::collection::vec(-1.0f64..1.0, 12),
            which in 0usize..5,
            param in 0.0f64..3.0,
        ) {
            let set = match which {
                0 => ConvexSet::WholeSpace,
                1 => ConvexSet::Box { lo: -param, hi: param * 0.5 },
                2 => ConvexSet::PositiveCone,
                3 => ConvexSet::L2Ball { radius: param },
                _ => ConvexSet::L1Ball { k: param },
            };
            let vol = 0.25;
            let y: Vec<f64> = x.iter().zip(&shift).map(|(a, b)| a + b).collect();
            let mut px = x.clone();
            set.project_in_place(&mut px, vol);
            let mut py = y.clone();
            set.project_in_place(&mut py, vol);
            proptest::prop_assert!(set.contains(&px, vol, 1e-9));
            let mut ppx = px.clone();
            set.project_in_place(&mut ppx, vol);
            for (a, b) in px.iter().zip(&ppx) {
                proptest::prop_assert!((a - b).abs() < 1e-9);
            }
            let d = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            proptest::prop_assert!(d(&px, &py) <= d(&x, &y) + 1e-9);
        }
    }

    #[test]
    fn rejects_zero_weight_for_lowcost() {
        let p = laplace_problem(8, 1.0, ConvexSet::WholeSpace, 0.0);
        assert!(solve_lowcost(&p, &OptimizerOptions::default()).is_err());
    }
}
