//! Energy and carbon footprint profiling for running workloads.
//!
//! A session measures the idle system, the system under strain, and the
//! idle system again; the difference between strain and idle power is
//! attributed to the workload and converted to energy and CO2e. Four
//! built-in workloads reproduce classic iteration performance bugs (head
//! insertion into a growable vector and friends) next to a linked-ring
//! version that avoids them.

pub mod cli;
pub mod intensity;
pub mod powersource;
pub mod protocol;
pub mod report;
pub mod traceio;
pub mod workloads;

pub use intensity::{lookup_intensity, CarbonIntensity};
pub use powersource::{PowerSample, PowerSource, SourceDescriptor, SourceKind};
pub use protocol::{run_session, MeasurementSession, SessionConfig, SessionReport, Workload};
pub use traceio::{PowerTrace, StrainWindow};
pub use workloads::{oracle_rotate, run_workload, Variant, WorkloadResult, WorkloadSpec};
