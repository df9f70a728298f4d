//! Deterministic discrete-event simulation of the pool, scheduler and
//! enforcement layers, plus scenario files, traces and the trace auditor.

pub mod audit;
pub mod engine;
pub mod generate;
pub mod metrics;
pub mod presets;
pub mod rng;
pub mod scenario;
pub mod trace;

pub use audit::{audit, AuditReport, Violation};
pub use engine::{run, RunOutput};
pub use metrics::Metrics;
pub use scenario::{Scenario, ScenarioError, ScriptedEvent};
pub use trace::{Trace, TraceEvent, TraceRecord};
