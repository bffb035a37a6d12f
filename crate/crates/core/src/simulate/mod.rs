//! Data-generating processes and Monte Carlo size/power experiments.

mod dgp;
mod experiment;

pub use dgp::{generate, generate_with, DgpId, DgpSpec, SimData};
pub use experiment::{
    load_experiments, parse_experiments, run_cell, run_power_vs_j, run_replication, with_workers,
    write_cell_table, write_power_table, CellResult, ExperimentFile, ExperimentSpec, Label, RateRow,
    ResidualMode, MAX_POWER_J,
};
