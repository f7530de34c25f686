//! Batteries behind the verification suites, shared by the CLI and the acceptance tests.
//!
//! Every suite returns a serializable report with a `pass` verdict; thresholds are constants
//! of the module that owns the suite.

pub mod battery;
pub mod oracle;
pub mod pairing;
pub mod scenario;

pub use battery::{
    run_instances, run_sweeps, stopping_specs, sweep_specs, BatteryFamily, BatteryKernel, InstanceBattery, InstanceSpec, Layout,
    SweepBattery, SweepSuite,
};
pub use oracle::{oracles, Oracles};
pub use pairing::{bad_decay, collar_ladder, CollarLadder, COLLAR_WIDTHS, DECAY_CASES, bookkeeping, clustered_scenario, schur, surgery, BadDecay, Bookkeeping, Schur, Surgery};
pub use scenario::{growth_check, kernel_check, scenario_trees, GrowthCheck, KernelCheck, ScenarioTrees};
