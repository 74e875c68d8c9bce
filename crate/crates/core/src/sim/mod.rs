//! Discrete-event simulation: event loop, hosts and traffic, max-min fair
//! throughput and control-byte accounting.

mod engine;
mod hosts;
mod maxmin;
mod metrics;

pub use maxmin::{maxmin_allocate, FlowId};
pub use metrics::{
    account_control_bytes, ByteClass, ControlBytes, ControlMessage, ControllerLoad, DataplaneReport, FailoverReport,
    FarmReport, FlowReport, ManagerReport, MetricsReport, PacketInSummary, PowerEvent, Quiescence, RoleEvent,
    SCHEMA_VERSION,
};

use crate::scenario::{Scenario, ScenarioInvalid};

/// Validates and runs a scenario. Identical scenarios give identical reports.
pub fn run_scenario(scenario: &Scenario) -> Result<MetricsReport, ScenarioInvalid> {
    let world = scenario.validate()?;
    Ok(engine::Sim::new(scenario, world).run())
}
