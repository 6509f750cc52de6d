//! Population dynamics of a four-level spin system in a magnetically doped
//! quantum dot under a three-regime pulse sequence, with CNOT truth-table,
//! tomogram and Bell-fidelity analysis.
//!
//! Closed-form Bloch solutions live in [`bloch`] and [`sequence`]; the
//! density-matrix integrator in [`oracle`] checks them.

pub mod bloch;
pub mod config;
pub mod error;
pub mod gate;
pub mod oracle;
pub mod pulse;
pub mod scenario;
pub mod sequence;
pub mod state;

pub use bloch::{Mode, RegimeInit, TransitionParams, Validity};
pub use config::{ScenarioConfig, Warning};
pub use error::{Error, Result};
pub use gate::{bell_fidelity, cnot_truth_table, FidelitySeries, Tomogram, TruthTable};
pub use oracle::{integrate, DecayParams, IntegrateOptions, SimulationTrace};
pub use pulse::{build_cnot_schedule, CnotSpec, Pulse, Regime, RegimeSchedule, Shape};
pub use scenario::{discrepancy_report, figure_command, run_scenario, DiscrepancyReport, Figure};
pub use sequence::{ClosedFormSequence, Relaxation};
pub use state::{BlochVector, DensityMatrix, Transition, TwoQubitLabel};
