//! Discrete-time maritime digital twin: ports with finite berths, vessels on
//! a route graph, per-edge weather, and FIFO berth queues.

mod port;
mod scenario;
mod sim;
mod vessel;
mod weather;

pub use port::{allocate_berths, PortRuntime};
pub use scenario::{
    EdgeSpec, PhysicsParams, PortSpec, RouteGraph, RouteSpec, ScenarioConfig, VesselSpec,
    MAX_ROUTE_OPTIONS,
};
pub use sim::{
    mask_components, GlobalState, Level, Observation, SimOptions, Simulator, StepMetrics,
    StepOutcome, VesselCommand, HIGH_OBS_LEN, LOW_OBS_LEN,
};
pub use vessel::{
    advance_vessel, book, fuel_rate, Advance, Health, Location, VesselState, DEGRADED_FUEL_MULT,
    DEGRADE_PROB,
};
pub use weather::{sample_weather, WeatherLabel, WeatherModel, WeatherScenario};

/// Discrete low-level speed set, knots.
pub const SPEED_LEVELS: [f64; 5] = [0.0, 5.0, 10.0, 15.0, 20.0];
