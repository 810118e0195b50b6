//! ε-sweeps and single-run experiments.
//!
//! Every sweep computes its limit row before and independently of the ε
//! rows; ε rows run concurrently and are merged in ε order.

use rayon::prelude::*;
use std::f64::consts::PI;
use std::path::Path;

use crate::control::{
    hminus1_norm, solve_limit_dirichlet, solve_limit_measure, solve_lowcost, ControlProblem, ConvexSet, Cost,
};
use crate::domain::{sample_epsilon, CoeffTable, CoefficientField, GridField, Mesh, Role};
use crate::elliptic::{append_run_log, assemble, energy, SolveReport};
use crate::error::{Error, Result};
use crate::homogenize::{homogenize_pair, reconstruct, CorrectorTable, HomogenizedTensors, TensorExport};
use crate::lab::config::Config;
use crate::lab::literal::parse_measure;
use crate::lab::weak::{make_weak_data, oscillating_part, Profile};
use crate::measure::{check_duality_seeded, stampacchia_solve, wstar_distance, DiscreteMeasure, DualityReport, DUALITY_SEED};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepKind {
    EnergyStrong,
    EnergyWeakLb,
    GammaDirichlet,
    Corrector,
    MeasureAsymptotics,
    GammaMeasure,
}

impl SweepKind {
    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "energy-strong" => SweepKind::EnergyStrong,
            "energy-weak-lb" => SweepKind::EnergyWeakLb,
            "gamma-dirichlet" => SweepKind::GammaDirichlet,
            "corrector" => SweepKind::Corrector,
            "measure-asymptotics" => SweepKind::MeasureAsymptotics,
            "gamma-measure" => SweepKind::GammaMeasure,
            other => return Err(Error::Config(format!("unknown sweep kind `{other}`"))),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            SweepKind::EnergyStrong => "energy-strong",
            SweepKind::EnergyWeakLb => "energy-weak-lb",
            SweepKind::GammaDirichlet => "gamma-dirichlet",
            SweepKind::Corrector => "corrector",
            SweepKind::MeasureAsymptotics => "measure-asymptotics",
            SweepKind::GammaMeasure => "gamma-measure",
        }
    }
}

#[derive(Clone, Debug)]
pub struct SweepRow {
    /// `None` marks the limit row.
    pub eps: Option<f64>,
    pub values: Vec<f64>,
    pub status: String,
}

#[derive(Clone, Debug)]
pub struct SweepReport {
    pub kind: SweepKind,
    pub columns: Vec<String>,
    /// ε rows in decreasing ε, then the limit row.
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    fn new(kind: SweepKind, columns: &[&str], mut rows: Vec<SweepRow>, limit: Vec<f64>) -> Self {
        rows.push(SweepRow { eps: None, values: limit, status: "ok".into() });
        SweepReport { kind, columns: columns.iter().map(|c| c.to_string()).collect(), rows }
    }

    fn index(&self, column: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == column)
            .ok_or_else(|| Error::InvalidArgument(format!("no column `{column}` in {} report", self.kind.name())))
    }

    pub fn eps_values(&self) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r.eps).collect()
    }

    /// Column values on the ε rows.
    pub fn column(&self, column: &str) -> Result<Vec<f64>> {
        let i = self.index(column)?;
        Ok(self.rows.iter().filter(|r| r.eps.is_some()).map(|r| r.values[i]).collect())
    }

    pub fn limit(&self, column: &str) -> Result<f64> {
        let i = self.index(column)?;
        Ok(self.rows.last().map_or(f64::NAN, |r| r.values[i]))
    }

    pub fn all_ok(&self) -> bool {
        self.rows.iter().all(|r| r.status == "ok")
    }

    /// Appends `rate_<column>`: `log(g_{i-1}/g_i) / log(ε_{i-1}/ε_i)`.
    fn add_rate(&mut self, column: &str) -> Result<()> {
        let i = self.index(column)?;
        self.columns.push(format!("rate_{column}"));
        let mut prev: Option<(f64, f64)> = None;
        for row in self.rows.iter_mut() {
            let rate = match (row.eps, prev) {
                (Some(eps), Some((pe, pg))) => (pg / row.values[i]).ln() / (pe / eps).ln(),
                _ => f64::NAN,
            };
            if let Some(eps) = row.eps {
                prev = Some((eps, row.values[i]));
            }
            row.values.push(rate);
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("eps,{},status\n", self.columns.join(","));
        for row in &self.rows {
            let eps = row.eps.map_or("limit".to_string(), fmt_value);
            let values: Vec<String> = row.values.iter().copied().map(fmt_value).collect();
            out.push_str(&format!("{eps},{},{}\n", values.join(","), row.status));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

fn fmt_value(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:.12e}")
    }
}

fn failed_row(eps: f64, width: usize, err: &Error) -> SweepRow {
    let status = err.to_string().replace([',', '\n'], ";");
    SweepRow { eps: Some(eps), values: vec![f64::NAN; width], status }
}

/// Runs `row` for every ε concurrently; failures become NaN rows.
fn sweep_rows(eps: &[f64], width: usize, row: impl Fn(f64) -> Result<Vec<f64>> + Sync) -> Vec<SweepRow> {
    eps.par_iter()
        .map(|&e| match row(e) {
            Ok(values) => SweepRow { eps: Some(e), values, status: "ok".into() },
            Err(err) => failed_row(e, width, &err),
        })
        .collect()
}

struct Setup {
    mesh: Mesh,
    eps: Vec<f64>,
    a: CoefficientField,
    b: CoefficientField,
    tensors: HomogenizedTensors,
    correctors: CorrectorTable,
    source: GridField,
}

impl Setup {
    fn new(config: &Config) -> Result<Self> {
        let mesh = config.dirichlet_mesh()?;
        let eps = config.sweep_eps()?;
        let a = config.field_a()?;
        let b = config.field_b()?;
        let (tensors, correctors) = homogenize_pair(&a, Some(&b), config.coefficients.cell_resolution)?;
        let source = config.source(&mesh)?;
        Ok(Setup { mesh, eps, a, b, tensors, correctors, source })
    }

    fn a0(&self) -> CoeffTable {
        self.tensors.a0_table(&self.mesh)
    }

    fn bsharp(&self) -> CoeffTable {
        self.tensors.bsharp_table(&self.mesh).expect("pair homogenization fills B♯")
    }

    fn solve(&self, coeff: &CoeffTable, rhs: &GridField) -> Result<GridField> {
        Ok(assemble(&self.mesh, coeff, false)?.solve(rhs)?.0)
    }
}

pub fn run_sweep(config: &Config) -> Result<SweepReport> {
    let kind = config
        .sweep
        .kind
        .as_deref()
        .ok_or_else(|| Error::Config("sweep.kind is required".into()))?;
    match SweepKind::parse(kind)? {
        SweepKind::EnergyStrong => run_energy_strong(config),
        SweepKind::EnergyWeakLb => run_energy_weak_lb(config),
        SweepKind::GammaDirichlet => run_gamma_dirichlet(config),
        SweepKind::Corrector => run_corrector(config),
        SweepKind::MeasureAsymptotics => run_measure_asymptotics(config),
        SweepKind::GammaMeasure => run_gamma_measure(config),
    }
}

/// Columns: `energy`, `target`, `gap`, `rate_gap`.
pub fn run_energy_strong(config: &Config) -> Result<SweepReport> {
    let s = Setup::new(config)?;
    let v0 = s.solve(&s.a0(), &s.source)?;
    let target = energy(&s.bsharp(), &v0, &v0)?;
    let rows = sweep_rows(&s.eps, 3, |eps| {
        let a = sample_epsilon(&s.a, &s.mesh, eps)?;
        let b = sample_epsilon(&s.b, &s.mesh, eps)?;
        let v = s.solve(&a, &s.source)?;
        let e = energy(&b, &v, &v)?;
        Ok(vec![e, target, (e - target).abs()])
    });
    let mut report = SweepReport::new(SweepKind::EnergyStrong, &["energy", "target", "gap"], rows, vec![target, target, f64::NAN]);
    report.add_rate("gap")?;
    Ok(report)
}

/// Columns: `energy`, `target`, `excess` (`E_ε − L`), `data_hminus1`.
pub fn run_energy_weak_lb(config: &Config) -> Result<SweepReport> {
    let s = Setup::new(config)?;
    let profile = Profile::preset(&config.sweep.oscillation, s.mesh.dim())?;
    let gamma = config.sweep.gamma;
    let v0 = s.solve(&s.a0(), &s.source)?;
    let target = energy(&s.bsharp(), &v0, &v0)?;
    let rows = sweep_rows(&s.eps, 4, |eps| {
        let a = sample_epsilon(&s.a, &s.mesh, eps)?;
        let b = sample_epsilon(&s.b, &s.mesh, eps)?;
        let g = make_weak_data(&s.source, &profile, gamma, eps)?;
        let v = s.solve(&a, &g)?;
        let e = energy(&b, &v, &v)?;
        let osc = hminus1_norm(&oscillating_part(&s.mesh, &profile, gamma, eps)?)?;
        Ok(vec![e, target, e - target, osc])
    });
    Ok(SweepReport::new(
        SweepKind::EnergyWeakLb,
        &["energy", "target", "excess", "data_hminus1"],
        rows,
        vec![target, target, f64::NAN, 0.0],
    ))
}

/// Columns: `objective`, `eps_theta_sq`, `b_energy`, `a_energy`,
/// `corrector_residual`, `theta_hminus1`, `objective_gap`, `b_energy_gap`,
/// `a_energy_gap`.
pub fn run_gamma_dirichlet(config: &Config) -> Result<SweepReport> {
    let s = Setup::new(config)?;
    let set = config.convex_set()?;
    let opts = config.optimizer();
    let a0 = s.a0();
    let bsharp = s.bsharp();
    let limit = solve_limit_dirichlet(&a0, &bsharp, &s.source, &set, &opts)?;
    let u_star = &limit.optimum.state;
    let f_star = limit.value;
    let b_star = energy(&bsharp, u_star, u_star)?;
    let a_star = energy(&a0, u_star, u_star)?;
    let rows = sweep_rows(&s.eps, 9, |eps| {
        let a = sample_epsilon(&s.a, &s.mesh, eps)?;
        let b = sample_epsilon(&s.b, &s.mesh, eps)?;
        let problem = ControlProblem {
            state: a.clone(),
            cost: Cost::Dirichlet(b.clone()),
            weight: config.weight(eps),
            source: s.source.clone(),
            set: set.clone(),
        };
        let opt = solve_lowcost(&problem, &opts)?;
        let u = &opt.state;
        let theta_sq = opt.control.nodal_norm().powi(2);
        let eb = energy(&b, u, u)?;
        let ea = energy(&a, u, u)?;
        let corrected = reconstruct(&s.correctors, u_star, eps)?;
        let residual = u.gradient().sub(&corrected)?.l2_norm();
        let hm1 = hminus1_norm(&opt.control)?;
        Ok(vec![
            opt.objective,
            eps * theta_sq,
            eb,
            ea,
            residual,
            hm1,
            (opt.objective - f_star).abs(),
            (eb - b_star).abs(),
            (ea - a_star).abs(),
        ])
    });
    let nan = f64::NAN;
    Ok(SweepReport::new(
        SweepKind::GammaDirichlet,
        &[
            "objective",
            "eps_theta_sq",
            "b_energy",
            "a_energy",
            "corrector_residual",
            "theta_hminus1",
            "objective_gap",
            "b_energy_gap",
            "a_energy_gap",
        ],
        rows,
        vec![f_star, nan, b_star, a_star, nan, hminus1_norm(&limit.optimum.control)?, nan, nan, nan],
    ))
}

/// Columns: `residual` (`‖∇v_ε − (P+I)∇v₀‖₂`), `rate_residual`.
pub fn run_corrector(config: &Config) -> Result<SweepReport> {
    let s = Setup::new(config)?;
    let v0 = s.solve(&s.a0(), &s.source)?;
    let rows = sweep_rows(&s.eps, 1, |eps| {
        let a = sample_epsilon(&s.a, &s.mesh, eps)?;
        let v = s.solve(&a, &s.source)?;
        let corrected = reconstruct(&s.correctors, &v0, eps)?;
        Ok(vec![v.gradient().sub(&corrected)?.l2_norm()])
    });
    let mut report = SweepReport::new(SweepKind::Corrector, &["residual"], rows, vec![f64::NAN]);
    report.add_rate("residual")?;
    Ok(report)
}

/// `(λ_ε, λ)` for the configured sequence preset.
pub fn measure_sequence(name: &str, mesh: &Mesh, eps: f64) -> Result<(DiscreteMeasure, DiscreteMeasure)> {
    let centre = [0.5, if mesh.dim() == 2 { 0.5 } else { 0.0 }];
    match name {
        "shifting-dirac" => Ok((
            DiscreteMeasure::dirac(*mesh, [0.5 + eps, centre[1]], 1.0)?,
            DiscreteMeasure::dirac(*mesh, centre, 1.0)?,
        )),
        "oscillating-density" => {
            let rho = GridField::from_fn(*mesh, Role::Data, |x| 1.0 + (2.0 * PI * x[0] / eps).cos());
            let flat = GridField::from_fn(*mesh, Role::Data, |_| 1.0);
            Ok((DiscreteMeasure::from_density(rho)?, DiscreteMeasure::from_density(flat)?))
        }
        other => Err(Error::Config(format!("unknown measure sequence `{other}`"))),
    }
}

/// Columns: `state_gap` (`‖u_ε − u₀‖_{W^{1,q}}`), `state_norm`, `wstar_gap`.
pub fn run_measure_asymptotics(config: &Config) -> Result<SweepReport> {
    let s = Setup::new(config)?;
    let q = config.sweep.q;
    let sequence = config.sweep.sequence.as_str();
    let (_, lambda) = measure_sequence(sequence, &s.mesh, s.eps[0])?;
    let u0 = stampacchia_solve(&s.mesh, &s.a0(), &lambda)?;
    let rows = sweep_rows(&s.eps, 3, |eps| {
        let (lambda_eps, lambda) = measure_sequence(sequence, &s.mesh, eps)?;
        let a = sample_epsilon(&s.a, &s.mesh, eps)?;
        let u = stampacchia_solve(&s.mesh, &a, &lambda_eps)?;
        let gap = u.axpy(-1.0, &u0).w1q_norm(q);
        Ok(vec![gap, u.w1q_norm(q), wstar_distance(&lambda_eps, &lambda)?])
    });
    Ok(SweepReport::new(
        SweepKind::MeasureAsymptotics,
        &["state_gap", "state_norm", "wstar_gap"],
        rows,
        vec![f64::NAN, u0.w1q_norm(q), f64::NAN],
    ))
}

/// Columns: `objective`, `eps_theta_sq`, `theta_l1`, `wstar`, `objective_gap`.
pub fn run_gamma_measure(config: &Config) -> Result<SweepReport> {
    let s = Setup::new(config)?;
    let k = config.l1_bound()?;
    let r = config.control.r;
    let opts = config.optimizer();
    let limit = solve_limit_measure(&s.a0(), &s.source, k, r, &opts)?;
    let vol = s.mesh.node_volume();
    let rows = sweep_rows(&s.eps, 5, |eps| {
        let a = sample_epsilon(&s.a, &s.mesh, eps)?;
        let problem = ControlProblem {
            state: a,
            cost: Cost::Lr { r },
            weight: config.weight(eps),
            source: s.source.clone(),
            set: ConvexSet::L1Ball { k },
        };
        let opt = solve_lowcost(&problem, &opts)?;
        let theta_sq = opt.control.nodal_norm().powi(2);
        let l1 = vol * opt.control.values.iter().map(|t| t.abs()).sum::<f64>();
        let as_measure = DiscreteMeasure::from_density(opt.control.clone())?;
        let wstar = wstar_distance(&as_measure, &limit.measure)?;
        Ok(vec![opt.objective, eps * theta_sq, l1, wstar, (opt.objective - limit.value).abs()])
    });
    let nan = f64::NAN;
    Ok(SweepReport::new(
        SweepKind::GammaMeasure,
        &["objective", "eps_theta_sq", "theta_l1", "wstar", "objective_gap"],
        rows,
        vec![limit.value, nan, limit.measure.total_variation(), nan, nan],
    ))
}

fn presets(config: &Config) -> std::collections::BTreeMap<String, String> {
    let mut m = std::collections::BTreeMap::new();
    m.insert("a".to_string(), config.coefficients.a.clone());
    if let Some(b) = &config.coefficients.b {
        m.insert("b".to_string(), b.clone());
    }
    m
}

pub fn run_homogenize(config: &Config) -> Result<TensorExport> {
    let a = config.field_a()?;
    let b = match &config.coefficients.b {
        Some(_) => Some(config.field_b()?),
        None => None,
    };
    let (tensors, _) = homogenize_pair(&a, b.as_ref(), config.coefficients.cell_resolution)?;
    Ok(TensorExport::new(&tensors, presets(config)))
}

/// `A(x, x/ε)` when `coefficients.eps` is set, otherwise `A₀`.
fn state_table(config: &Config, mesh: &Mesh) -> Result<(CoeffTable, Option<HomogenizedTensors>)> {
    let a = config.field_a()?;
    match config.coefficients.eps {
        Some(k) => Ok((sample_epsilon(&a, mesh, 1.0 / k as f64)?, None)),
        None => {
            let b = match &config.coefficients.b {
                Some(_) => Some(config.field_b()?),
                None => None,
            };
            let (t, _) = homogenize_pair(&a, b.as_ref().or(Some(&a)), config.coefficients.cell_resolution)?;
            Ok((t.a0_table(mesh), Some(t)))
        }
    }
}

pub fn run_solve(config: &Config) -> Result<(GridField, SolveReport)> {
    let mesh = config.dirichlet_mesh()?;
    let (a, _) = state_table(config, &mesh)?;
    let f = config.source(&mesh)?;
    let (u, report) = assemble(&mesh, &a, false)?.solve(&f)?;
    if let Some(log) = &config.output.run_log {
        let tag = config.coefficients.eps.map_or("homogenized".to_string(), |k| format!("eps=1/{k}"));
        append_run_log(log, &tag, u.len(), &report)?;
    }
    Ok((u, report))
}

#[derive(Clone, Debug)]
pub struct ControlOutcome {
    pub control: GridField,
    pub state: GridField,
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
}

impl ControlOutcome {
    pub fn to_csv(&self) -> String {
        let mesh = self.state.mesh;
        let mut out = if mesh.dim() == 1 { "node,x,control,state\n".to_string() } else { "node,x,y,control,state\n".to_string() };
        for i in 0..mesh.node_count() {
            let x = mesh.node_coord(i);
            let coords = if mesh.dim() == 1 { fmt_value(x[0]) } else { format!("{},{}", fmt_value(x[0]), fmt_value(x[1])) };
            out.push_str(&format!("{i},{coords},{},{}\n", fmt_value(self.control.values[i]), fmt_value(self.state.values[i])));
        }
        out
    }
}

/// ε-level problem when `coefficients.eps` is set, otherwise the limit problem.
pub fn run_control(config: &Config) -> Result<ControlOutcome> {
    let mesh = config.dirichlet_mesh()?;
    let f = config.source(&mesh)?;
    let opts = config.optimizer();
    let set = config.convex_set()?;
    match config.coefficients.eps {
        Some(k) => {
            let eps = 1.0 / k as f64;
            let a = sample_epsilon(&config.field_a()?, &mesh, eps)?;
            let b = sample_epsilon(&config.field_b()?, &mesh, eps)?;
            let problem = ControlProblem { state: a, cost: config.cost(b)?, weight: config.weight(eps), source: f, set };
            let opt = solve_lowcost(&problem, &opts)?;
            Ok(ControlOutcome {
                control: opt.control,
                state: opt.state,
                objective: opt.objective,
                kkt_residual: opt.kkt_residual,
                iterations: opt.iterations,
            })
        }
        None => {
            let (a0, tensors) = state_table(config, &mesh)?;
            match config.control.cost.as_str() {
                "dirichlet" => {
                    let bsharp = tensors
                        .and_then(|t| t.bsharp_table(&mesh))
                        .ok_or_else(|| Error::Config("limit problem needs B♯".into()))?;
                    let lim = solve_limit_dirichlet(&a0, &bsharp, &f, &set, &opts)?;
                    Ok(ControlOutcome {
                        control: lim.optimum.control,
                        state: lim.optimum.state,
                        objective: lim.value,
                        kkt_residual: lim.optimum.kkt_residual,
                        iterations: lim.optimum.iterations,
                    })
                }
                "lr" => {
                    let k = config.l1_bound()?;
                    let lim = solve_limit_measure(&a0, &f, k, config.control.r, &opts)?;
                    let vol = mesh.node_volume();
                    let mut theta = GridField::zeros(mesh, Role::Control);
                    for &(node, mass) in lim.measure.atoms() {
                        theta.values[node] = mass / vol;
                    }
                    Ok(ControlOutcome {
                        control: theta,
                        state: lim.state,
                        objective: lim.value,
                        kkt_residual: lim.kkt_residual,
                        iterations: lim.iterations,
                    })
                }
                other => Err(Error::Config(format!("unknown cost `{other}`"))),
            }
        }
    }
}

pub fn run_measure(config: &Config) -> Result<(GridField, DualityReport)> {
    let mesh = config.dirichlet_mesh()?;
    let (a, _) = state_table(config, &mesh)?;
    let lambda = parse_measure(&config.measure.lambda, &mesh)?;
    let u = stampacchia_solve(&mesh, &a, &lambda)?;
    let seed = config.measure.seed.unwrap_or(DUALITY_SEED);
    let report = check_duality_seeded(&u, &a, &lambda, config.measure.trials, seed)?;
    Ok((u, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(text: &str) -> Config {
        Config::parse(text).unwrap()
    }

    #[test]
    fn constant_coefficients_have_no_energy_gap() {
        let c = config(
            "[mesh]\nn = 256\n[coefficients]\na = \"constant\"\na_params = [2.0]\n[sweep]\nkind = \"energy-strong\"\neps = [8, 16]\n",
        );
        let r = run_sweep(&c).unwrap();
        assert!(r.all_ok());
        for g in r.column("gap").unwrap() {
            assert!(g <= 1e-8);
        }
    }

    #[test]
    fn csv_has_limit_row_and_rates() {
        let c = config(
            "[mesh]\nn = 256\n[coefficients]\na = \"two-phase-1d\"\n[sweep]\nkind = \"corrector\"\neps = [8, 16]\n",
        );
        let csv = run_sweep(&c).unwrap().to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "eps,residual,rate_residual,status");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].ends_with(",nan,ok"));
        assert!(lines[3].starts_with("limit,"));
    }

    #[test]
    fn weak_data_without_oscillation_matches_strong() {
        let strong = config("[mesh]\nn = 256\n[coefficients]\na = \"two-phase-1d\"\n[sweep]\nkind = \"energy-strong\"\neps = [8, 16]\n");
        let weak = config(
            "[mesh]\nn = 256\n[coefficients]\na = \"two-phase-1d\"\n[sweep]\nkind = \"energy-weak-lb\"\neps = [8, 16]\noscillation = \"zero\"\n",
        );
        let s = run_sweep(&strong).unwrap();
        let w = run_sweep(&weak).unwrap();
        assert_eq!(s.column("energy").unwrap(), w.column("energy").unwrap());
        assert_eq!(s.limit("target").unwrap(), w.limit("target").unwrap());
    }

    #[test]
    fn measure_with_zero_budget_tracks_uncontrolled_state() {
        let c = config(
            "[mesh]\nn = 256\n[coefficients]\na = \"constant\"\n[control]\nset = \"l1-ball\"\nk = 0.0\ncost = \"lr\"\n[sweep]\nkind = \"gamma-measure\"\neps = [8, 16]\n",
        );
        let r = run_sweep(&c).unwrap();
        for t in r.column("theta_l1").unwrap() {
            assert_eq!(t, 0.0);
        }
        for g in r.column("objective_gap").unwrap() {
            assert!(g < 1e-12);
        }
    }

    #[test]
    fn fixed_density_sequence_has_no_state_gap() {
        let mesh = crate::domain::build_mesh(1, 256, crate::domain::Boundary::DirichletZero).unwrap();
        let (le, l) = measure_sequence("oscillating-density", &mesh, 1.0 / 8.0).unwrap();
        assert!(le.total_variation() > 0.0 && l.total_variation() > 0.0);
        assert!(measure_sequence("spiral", &mesh, 0.125).is_err());
    }

    #[test]
    fn single_runs() {
        let c = config("[mesh]\nn = 64\n[coefficients]\na = \"two-phase-1d\"\neps = 4\n");
        let (u, report) = run_solve(&c).unwrap();
        assert_eq!(u.len(), 63);
        assert!(report.residual <= 1e-10);
        let (_, duality) = run_measure(&c).unwrap();
        assert!(duality.max_gap() <= 1e-8);
        let c = config(
            "[mesh]\nn = 64\n[coefficients]\na = \"two-phase-1d\"\neps = 4\n[control]\nset = \"box\"\nlo = -1.0\nhi = 0.0\n",
        );
        let out = run_control(&c).unwrap();
        assert!(out.kkt_residual <= 1e-7);
        assert!(out.to_csv().starts_with("node,x,control,state\n"));
    }
}
