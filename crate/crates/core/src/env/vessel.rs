//! Vessel kinematics and the cubic fuel law.

use serde::{Deserialize, Serialize};

use super::scenario::{PhysicsParams, RouteGraph};
use super::weather::WeatherScenario;
use crate::error::{Error, Result};

/// Fuel multiplier applied on top of the weather multiplier once a vessel
/// is degraded.
pub const DEGRADED_FUEL_MULT: f64 = 1.1;
/// Per-vessel per-step probability of mechanical degradation.
pub const DEGRADE_PROB: f64 = 0.01;

const BOOKING_SCALE: f64 = (1u64 << 43) as f64;

/// Rounds a fuel or emission increment onto a 2^-43 t grid.
///
/// Every booked quantity is an integer multiple of 2^-43, so sums of bookings
/// below 2^10 t are exact and independent of summation order.
pub fn book(tonnes: f64) -> f64 {
    (tonnes * BOOKING_SCALE).round() / BOOKING_SCALE
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Location {
    AtPort(usize),
    OnEdge { edge: usize, progress: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Health {
    Ok,
    Degraded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VesselState {
    pub id: usize,
    pub location: Location,
    /// Last commanded speed, knots.
    pub speed: f64,
    pub fuel_used: f64,
    pub emissions: f64,
    pub health: Health,
    /// Remaining port calls, next destination first.
    pub itinerary: Vec<usize>,
    /// Remaining edges of the leg in progress, current edge first.
    pub plan: Vec<usize>,
    pub voyages_completed: u32,
    /// Set once the itinerary is exhausted; a retired vessel leaves service
    /// and burns nothing.
    pub retired: bool,
}

impl VesselState {
    pub fn new(id: usize, start_port: usize, itinerary: Vec<usize>) -> Self {
        let retired = itinerary.is_empty();
        VesselState {
            id,
            location: Location::AtPort(start_port),
            speed: 0.0,
            fuel_used: 0.0,
            emissions: 0.0,
            health: Health::Ok,
            itinerary,
            plan: Vec::new(),
            voyages_completed: 0,
            retired,
        }
    }

    pub fn port(&self) -> Option<usize> {
        match self.location {
            Location::AtPort(p) => Some(p),
            Location::OnEdge { .. } => None,
        }
    }

    /// Distance still to sail on the current leg (0 in port).
    pub fn remaining_leg_distance(&self, graph: &RouteGraph) -> f64 {
        match self.location {
            Location::AtPort(_) => 0.0,
            Location::OnEdge { edge, progress } => {
                graph.route_distance(&self.plan) - progress.min(graph.edge(edge).distance)
            }
        }
    }
}

/// Fuel burn in t/h at a commanded speed.
///
/// Zero speed burns the idle rate regardless of weather; positive speeds
/// follow `k_f * v^3`, scaled by the weather and degradation multipliers.
pub fn fuel_rate(
    speed: f64,
    weather: &WeatherScenario,
    params: &PhysicsParams,
    health: Health,
) -> Result<f64> {
    if !(speed >= 0.0) {
        return Err(Error::Domain(format!("negative speed {speed}")));
    }
    if speed == 0.0 {
        return Ok(params.k_idle);
    }
    let degrade = match health {
        Health::Ok => 1.0,
        Health::Degraded => DEGRADED_FUEL_MULT,
    };
    Ok(params.k_f * speed * speed * speed * weather.fuel_mult * degrade)
}

/// Result of one [`advance_vessel`] call.
#[derive(Debug, Clone, PartialEq)]
pub struct Advance {
    pub vessel: VesselState,
    /// Booked fuel for this step.
    pub fuel: f64,
    /// Booked emissions for this step.
    pub emissions: f64,
    /// Port reached this step, if the leg finished.
    pub arrived_at: Option<usize>,
}

/// Moves a vessel through one step.
///
/// A vessel in port with a positive command must already carry a leg plan;
/// it is placed at the start of the first planned edge before moving. A
/// vessel that reaches the end of an edge continues on the next planned
/// edge, or arrives in port when the plan is exhausted. Distance beyond the
/// end of an edge is discarded.
pub fn advance_vessel(
    vessel: &VesselState,
    commanded_speed: f64,
    weather: &WeatherScenario,
    params: &PhysicsParams,
    graph: &RouteGraph,
) -> Result<Advance> {
    if !(0.0..=params.v_max).contains(&commanded_speed) {
        return Err(Error::Domain(format!(
            "commanded speed {commanded_speed} outside [0, {}]",
            params.v_max
        )));
    }
    let mut v = vessel.clone();
    if v.retired {
        v.speed = 0.0;
        return Ok(Advance {
            vessel: v,
            fuel: 0.0,
            emissions: 0.0,
            arrived_at: None,
        });
    }
    v.speed = commanded_speed;
    let rate = fuel_rate(commanded_speed, weather, params, v.health)?;
    let fuel = book(rate * params.dt);
    let emissions = book(params.emission_factor * rate * params.dt);
    v.fuel_used += fuel;
    v.emissions += emissions;

    let mut arrived_at = None;
    if commanded_speed > 0.0 {
        if let Location::AtPort(_) = v.location {
            let first = *v.plan.first().ok_or_else(|| {
                Error::Contract(format!("vessel {} departs without a leg plan", v.id))
            })?;
            v.location = Location::OnEdge {
                edge: first,
                progress: 0.0,
            };
        }
        if let Location::OnEdge { edge, progress } = v.location {
            let dist = graph.edge(edge).distance;
            let progress = progress + commanded_speed * weather.speed_mult * params.dt;
            if progress >= dist {
                v.plan.remove(0);
                match v.plan.first() {
                    Some(&next) => {
                        v.location = Location::OnEdge {
                            edge: next,
                            progress: 0.0,
                        }
                    }
                    None => {
                        let port = graph.edge(edge).destination;
                        v.location = Location::AtPort(port);
                        if !v.itinerary.is_empty() {
                            v.itinerary.remove(0);
                        }
                        v.voyages_completed += 1;
                        v.retired = v.itinerary.is_empty();
                        arrived_at = Some(port);
                    }
                }
            } else {
                v.location = Location::OnEdge { edge, progress };
            }
        }
    }
    Ok(Advance {
        vessel: v,
        fuel,
        emissions,
        arrived_at,
    })
}
