//! Discrete-event simulation of a whole network.
//!
//! A run is driven by a [`ScenarioConfig`] and yields an event trace, the
//! traffic per message class and the flags raised against duplicate
//! identities. The same config and seed give the same run, byte for byte.

mod config;
mod engine;
mod metrics;
mod mobility;
mod radio;
mod trace;

pub use config::{Action, Churn, ConfigError, Connectivity, Geometric, ScenarioConfig, ScriptedAction};
pub use engine::{run_scenario, Outcome, RunReport, RunStats, Simulation, ANSWER_SPREAD, HOP};
pub use metrics::{ClassTotals, MessageClass, TrafficMetrics, HEADER_BYTES};
pub use mobility::{step_mobility, Point, Walker};
pub use radio::{broadcast_deliver, connected, link, reachable, Flood, Reach};
pub use trace::{check_trace, classify_splice, format_trace, parse_line, Splice, TraceCheck, TraceError, TraceEvent};
