//! Experiment configuration, weak-data generators and ε-sweeps.

pub mod config;
pub mod literal;
pub mod sweep;
pub mod weak;

pub use config::Config;
pub use sweep::{
    run_control, run_corrector, run_energy_strong, run_energy_weak_lb, run_gamma_dirichlet, run_gamma_measure,
    run_homogenize, run_measure, run_measure_asymptotics, run_solve, run_sweep, SweepKind, SweepReport, SweepRow,
};
pub use weak::{make_weak_data, Profile};
