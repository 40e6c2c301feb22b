//! Enumerated dynamics cases with hand-derived expected values.
//!
//! Expectations are written as plain arithmetic on the physical constants,
//! never through the simulator's own functions, so the cases serve as an
//! independent check of fuel, weather, arrival and berth logic.

use crate::env::{
    advance_vessel, allocate_berths, fuel_rate, EdgeSpec, Health, Location, PhysicsParams,
    PortRuntime, PortSpec, RouteGraph, RouteSpec, ScenarioConfig, Simulator, VesselCommand,
    VesselSpec, VesselState, WeatherScenario,
};
use crate::error::Result;
use crate::fairness::gini;

/// Tolerance for every oracle comparison.
pub const ORACLE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleCase {
    pub name: &'static str,
    pub expected: Vec<f64>,
    pub actual: Vec<f64>,
}

impl OracleCase {
    fn new(name: &'static str, expected: Vec<f64>, actual: Vec<f64>) -> Self {
        OracleCase {
            name,
            expected,
            actual,
        }
    }

    pub fn max_abs_error(&self) -> f64 {
        if self.expected.len() != self.actual.len() {
            return f64::INFINITY;
        }
        self.expected
            .iter()
            .zip(&self.actual)
            .map(|(e, a)| (e - a).abs())
            .fold(0.0, f64::max)
    }

    pub fn passes(&self) -> bool {
        self.max_abs_error() <= ORACLE_TOL
    }
}

/// Three ports in a line: 0 -(100 nm)- 1 -(30 nm)- 2.
fn line_graph() -> Result<RouteGraph> {
    let ports = (0..3)
        .map(|id| PortSpec {
            id,
            berth_capacity: 1,
        })
        .collect();
    let edges = vec![
        EdgeSpec {
            id: 0,
            origin: 0,
            destination: 1,
            distance: 100.0,
        },
        EdgeSpec {
            id: 1,
            origin: 1,
            destination: 2,
            distance: 30.0,
        },
    ];
    let routes = [
        RouteSpec {
            origin: 0,
            destination: 1,
            options: vec![vec![0]],
        },
        RouteSpec {
            origin: 0,
            destination: 2,
            options: vec![vec![0, 1]],
        },
    ];
    let vessels = [VesselSpec {
        id: 0,
        itinerary: vec![0, 2],
    }];
    RouteGraph::new(ports, edges, &routes, &vessels)
}

fn on_edge(edge: usize, progress: f64, plan: Vec<usize>, itinerary: Vec<usize>) -> VesselState {
    let mut v = VesselState::new(0, 0, itinerary);
    v.location = Location::OnEdge { edge, progress };
    v.plan = plan;
    v
}

fn progress_of(v: &VesselState) -> f64 {
    match v.location {
        Location::OnEdge { progress, .. } => progress,
        Location::AtPort(_) => -1.0,
    }
}

/// The twenty enumerated dynamics cases.
pub fn dynamics_cases() -> Result<Vec<OracleCase>> {
    let p = PhysicsParams::default();
    let calm = WeatherScenario::CALM;
    let storm = WeatherScenario::STORM;
    let moderate = WeatherScenario::MODERATE;
    let ok = Health::Ok;
    let g = line_graph()?;
    let mut cases = Vec::with_capacity(20);
    let rate = |v: f64, w: &WeatherScenario, h: Health| fuel_rate(v, w, &p, h);

    cases.push(OracleCase::new(
        "cubic burn at 10 kn",
        vec![0.3],
        vec![rate(10.0, &calm, ok)?],
    ));
    cases.push(OracleCase::new(
        "cubic burn at 15 kn",
        vec![1.0125],
        vec![rate(15.0, &calm, ok)?],
    ));
    cases.push(OracleCase::new(
        "cubic burn at 20 kn",
        vec![2.4],
        vec![rate(20.0, &calm, ok)?],
    ));
    cases.push(OracleCase::new(
        "cubic burn at 5 kn",
        vec![0.0375],
        vec![rate(5.0, &calm, ok)?],
    ));
    cases.push(OracleCase::new(
        "idle burn at 0 kn",
        vec![0.02],
        vec![rate(0.0, &storm, ok)?],
    ));
    cases.push(OracleCase::new(
        "doubling speed multiplies burn by 8",
        vec![8.0],
        vec![rate(20.0, &calm, ok)? / rate(10.0, &calm, ok)?],
    ));
    cases.push(OracleCase::new(
        "storm burn at 10 kn",
        vec![0.39],
        vec![rate(10.0, &storm, ok)?],
    ));
    cases.push(OracleCase::new(
        "moderate burn at 10 kn",
        vec![0.345],
        vec![rate(10.0, &moderate, ok)?],
    ));
    cases.push(OracleCase::new(
        "degraded burn at 10 kn",
        vec![0.33],
        vec![rate(10.0, &calm, Health::Degraded)?],
    ));
    cases.push(OracleCase::new(
        "degraded storm burn at 20 kn",
        vec![3.432],
        vec![rate(20.0, &storm, Health::Degraded)?],
    ));

    let fresh = on_edge(0, 0.0, vec![0], vec![1]);
    let a = advance_vessel(&fresh, 10.0, &storm, &p, &g)?;
    cases.push(OracleCase::new(
        "storm progress at 10 kn",
        vec![7.0, 0.39],
        vec![progress_of(&a.vessel), a.fuel],
    ));
    let a = advance_vessel(&fresh, 10.0, &moderate, &p, &g)?;
    cases.push(OracleCase::new(
        "moderate progress at 10 kn",
        vec![8.5],
        vec![progress_of(&a.vessel)],
    ));
    let a = advance_vessel(&on_edge(0, 20.0, vec![0], vec![1]), 15.0, &calm, &p, &g)?;
    cases.push(OracleCase::new(
        "calm progress and booked burn at 15 kn",
        vec![35.0, 1.0125],
        vec![progress_of(&a.vessel), a.fuel],
    ));

    let a = advance_vessel(&on_edge(0, 90.0, vec![0], vec![1]), 10.0, &calm, &p, &g)?;
    cases.push(OracleCase::new(
        "arrival exactly at the edge end",
        vec![1.0, 1.0, 1.0],
        vec![
            f64::from(a.arrived_at == Some(1)),
            f64::from(a.vessel.voyages_completed),
            f64::from(a.vessel.retired),
        ],
    ));
    let a = advance_vessel(&on_edge(0, 89.5, vec![0], vec![1]), 10.0, &calm, &p, &g)?;
    cases.push(OracleCase::new(
        "no arrival just short of the edge end",
        vec![0.0, 99.5],
        vec![f64::from(a.arrived_at.is_some()), progress_of(&a.vessel)],
    ));
    let a = advance_vessel(&on_edge(0, 95.0, vec![0, 1], vec![2]), 10.0, &calm, &p, &g)?;
    let edge_now = match a.vessel.location {
        Location::OnEdge { edge, .. } => edge as f64,
        Location::AtPort(_) => -1.0,
    };
    cases.push(OracleCase::new(
        "edge change discards surplus distance",
        vec![1.0, 0.0, 0.0],
        vec![
            edge_now,
            progress_of(&a.vessel),
            f64::from(a.arrived_at.is_some()),
        ],
    ));

    let mut port = PortRuntime::new(0, 1);
    port.berthed = vec![3];
    let next = allocate_berths(&port, &[], &[5], 1.0)?;
    cases.push(OracleCase::new(
        "full berth queues an arrival",
        vec![1.0, 1.0, 5.0],
        vec![
            next.queue.len() as f64,
            next.accumulated_queue_hours,
            next.queue[0] as f64,
        ],
    ));
    let next = allocate_berths(&port, &[3], &[5], 1.0)?;
    cases.push(OracleCase::new(
        "departure frees the berth for an arrival",
        vec![5.0, 0.0, 0.0],
        vec![
            next.berthed[0] as f64,
            next.queue.len() as f64,
            next.accumulated_queue_hours,
        ],
    ));
    let next = allocate_berths(&PortRuntime::new(0, 2), &[], &[7, 2, 4], 1.0)?;
    cases.push(OracleCase::new(
        "simultaneous arrivals berth in id order",
        vec![2.0, 4.0, 7.0, 1.0],
        vec![
            next.berthed[0] as f64,
            next.berthed[1] as f64,
            next.queue[0] as f64,
            next.accumulated_queue_hours,
        ],
    ));

    let scenario = ScenarioConfig::desk_scale();
    let mut sim = Simulator::new(&scenario, 3, 11)?;
    let n = sim.n_vessels();
    for _ in 0..3 {
        sim.step(&vec![VesselCommand::idle(); n])?;
    }
    cases.push(OracleCase::new(
        "idle fleet emissions over three steps",
        vec![5.0 * 3.0 * 0.02],
        vec![sim.state().cum_emissions],
    ));
    Ok(cases)
}

/// Brute-force pairwise Gini, `sum_ij |x_i - x_j| / (2 n^2 mean)`.
pub fn pairwise_gini(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    if mean == 0.0 {
        return 0.0;
    }
    let total: f64 = x
        .iter()
        .flat_map(|a| x.iter().map(move |b| (a - b).abs()))
        .sum();
    total / (2.0 * n * n * mean)
}

/// Gini unit values checked against both the literal and the pairwise form.
pub fn gini_cases() -> Result<Vec<OracleCase>> {
    let inputs: [(&'static str, Vec<f64>, f64); 3] = [
        ("gini of equal burdens", vec![1.0, 1.0, 1.0, 1.0], 0.0),
        (
            "gini of one heavy vessel of four",
            vec![0.0, 0.0, 0.0, 1.0],
            0.75,
        ),
        ("gini of 1, 2, 3", vec![1.0, 2.0, 3.0], 8.0 / 36.0),
    ];
    inputs
        .into_iter()
        .map(|(name, x, literal)| {
            Ok(OracleCase::new(
                name,
                vec![literal, pairwise_gini(&x)],
                vec![gini(&x)?; 2],
            ))
        })
        .collect()
}
