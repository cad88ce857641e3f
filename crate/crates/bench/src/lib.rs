//! Workload driver and experiment scenarios for the accelerator runtime.
//!
//! A [`WorkloadSpec`] describes application instances and their task
//! programs; [`run_workload`] executes it against an in-process server and
//! returns [`Metrics`], which [`report`] writes as CSV.

pub mod analogs;
pub mod driver;
pub mod metrics;
pub mod scenario;
pub mod syscount;
pub mod workload;

pub use driver::{buffer_stream, effective_config, initial_contents, run_workload, run_workload_with, Output, RunError, RunOptions, RunResult};
pub use metrics::{from_csv, report, to_csv, InstanceMetrics, Metrics, TransferSample};
pub use scenario::{random_workload, scenario, Scenario, UnknownScenario, Variant, SCENARIOS};
pub use workload::{BufferSpec, Init, InstanceSpec, Priority, Scalar, Step, WorkloadError, WorkloadSpec};
