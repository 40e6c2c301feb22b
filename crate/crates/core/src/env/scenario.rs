//! Scenario files and the validated route graph built from them.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PortSpec {
    pub id: usize,
    pub berth_capacity: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeSpec {
    pub id: usize,
    pub origin: usize,
    pub destination: usize,
    /// Nautical miles.
    pub distance: f64,
}

/// Candidate edge sequences between an origin and a destination port.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouteSpec {
    pub origin: usize,
    pub destination: usize,
    pub options: Vec<Vec<usize>>,
}

/// A vessel and its port calls. The first entry is the start port.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VesselSpec {
    pub id: usize,
    pub itinerary: Vec<usize>,
}

/// On-disk scenario document. Every field is required.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub ports: Vec<PortSpec>,
    pub edges: Vec<EdgeSpec>,
    pub routes: Vec<RouteSpec>,
    pub vessels: Vec<VesselSpec>,
    pub p_storm: f64,
    pub mask_fraction: f64,
    /// Cubic fuel coefficient, t/h per kn^3.
    pub k_f: f64,
    /// Fuel burn while stationary, t/h.
    pub k_idle: f64,
    /// Maximum commanded speed, knots.
    pub v_max: f64,
    pub emission_factor: f64,
    /// Hours per low-level step.
    pub dt: f64,
}

/// The subset of a scenario that governs per-vessel physics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicsParams {
    pub k_f: f64,
    pub k_idle: f64,
    pub v_max: f64,
    pub emission_factor: f64,
    pub dt: f64,
}

impl Default for PhysicsParams {
    fn default() -> Self {
        PhysicsParams {
            k_f: 3.0e-4,
            k_idle: 0.02,
            v_max: 20.0,
            emission_factor: 1.0,
            dt: 1.0,
        }
    }
}

impl ScenarioConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let key = e.path().to_string();
            Error::config(key, e.into_inner().to_string())
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn physics(&self) -> PhysicsParams {
        PhysicsParams {
            k_f: self.k_f,
            k_idle: self.k_idle,
            v_max: self.v_max,
            emission_factor: self.emission_factor,
            dt: self.dt,
        }
    }

    /// The built-in desk-scale network: 8 ports, 5 vessels.
    ///
    /// Itinerary lengths differ deliberately so that vessels carry unequal
    /// minimum fuel burdens.
    pub fn desk_scale() -> Self {
        let caps = [1, 2, 1, 1, 2, 1, 1, 1];
        let ports = caps
            .iter()
            .enumerate()
            .map(|(id, &berth_capacity)| PortSpec { id, berth_capacity })
            .collect();
        // (origin, destination, nm)
        let legs: [(usize, usize, f64); 14] = [
            (0, 1, 20.0),
            (1, 2, 25.0),
            (2, 3, 30.0),
            (3, 4, 35.0),
            (4, 5, 30.0),
            (5, 6, 40.0),
            (6, 7, 35.0),
            (7, 0, 45.0),
            (0, 2, 50.0),
            (2, 4, 55.0),
            (4, 6, 60.0),
            (1, 3, 50.0),
            (3, 5, 60.0),
            (6, 0, 70.0),
        ];
        let edges: Vec<EdgeSpec> = legs
            .iter()
            .enumerate()
            .map(|(id, &(origin, destination, distance))| EdgeSpec {
                id,
                origin,
                destination,
                distance,
            })
            .collect();
        let edge = |o: usize, d: usize| {
            edges
                .iter()
                .find(|e| e.origin == o && e.destination == d)
                .map(|e| e.id)
                .expect("desk-scale edge")
        };
        let routes = vec![
            RouteSpec {
                origin: 0,
                destination: 1,
                options: vec![vec![edge(0, 1)]],
            },
            RouteSpec {
                origin: 0,
                destination: 2,
                options: vec![vec![edge(0, 2)], vec![edge(0, 1), edge(1, 2)]],
            },
            RouteSpec {
                origin: 1,
                destination: 2,
                options: vec![vec![edge(1, 2)]],
            },
            RouteSpec {
                origin: 1,
                destination: 3,
                options: vec![vec![edge(1, 3)], vec![edge(1, 2), edge(2, 3)]],
            },
            RouteSpec {
                origin: 2,
                destination: 3,
                options: vec![vec![edge(2, 3)]],
            },
            RouteSpec {
                origin: 2,
                destination: 4,
                options: vec![vec![edge(2, 4)], vec![edge(2, 3), edge(3, 4)]],
            },
            RouteSpec {
                origin: 3,
                destination: 4,
                options: vec![vec![edge(3, 4)]],
            },
            RouteSpec {
                origin: 3,
                destination: 5,
                options: vec![vec![edge(3, 5)], vec![edge(3, 4), edge(4, 5)]],
            },
            RouteSpec {
                origin: 4,
                destination: 5,
                options: vec![vec![edge(4, 5)]],
            },
            RouteSpec {
                origin: 4,
                destination: 6,
                options: vec![vec![edge(4, 6)], vec![edge(4, 5), edge(5, 6)]],
            },
            RouteSpec {
                origin: 5,
                destination: 6,
                options: vec![vec![edge(5, 6)]],
            },
            RouteSpec {
                origin: 6,
                destination: 7,
                options: vec![vec![edge(6, 7)]],
            },
            RouteSpec {
                origin: 6,
                destination: 0,
                options: vec![vec![edge(6, 0)], vec![edge(6, 7), edge(7, 0)]],
            },
            RouteSpec {
                origin: 7,
                destination: 0,
                options: vec![vec![edge(7, 0)]],
            },
        ];
        let vessels = vec![
            VesselSpec {
                id: 0,
                itinerary: vec![0, 1],
            },
            VesselSpec {
                id: 1,
                itinerary: vec![1, 2, 3],
            },
            VesselSpec {
                id: 2,
                itinerary: vec![2, 4],
            },
            VesselSpec {
                id: 3,
                itinerary: vec![3, 5, 6],
            },
            VesselSpec {
                id: 4,
                itinerary: vec![4, 6, 0],
            },
        ];
        let physics = PhysicsParams::default();
        ScenarioConfig {
            ports,
            edges,
            routes,
            vessels,
            p_storm: 0.0,
            mask_fraction: 0.0,
            k_f: physics.k_f,
            k_idle: physics.k_idle,
            v_max: physics.v_max,
            emission_factor: physics.emission_factor,
            dt: physics.dt,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |key: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::config(key, format!("{v} is outside [0, 1]")))
            }
        };
        unit("p_storm", self.p_storm)?;
        unit("mask_fraction", self.mask_fraction)?;
        for (key, v) in [
            ("k_f", self.k_f),
            ("v_max", self.v_max),
            ("emission_factor", self.emission_factor),
            ("dt", self.dt),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(
                    key,
                    format!("{v} must be positive and finite"),
                ));
            }
        }
        if !(self.k_idle.is_finite() && self.k_idle >= 0.0) {
            return Err(Error::config("k_idle", "must be non-negative"));
        }
        RouteGraph::from_scenario(self).map(|_| ())
    }
}

/// Port/edge/route network with validated references.
#[derive(Debug, Clone, PartialEq)]
pub struct RouteGraph {
    pub ports: Vec<PortSpec>,
    pub edges: Vec<EdgeSpec>,
    routes: BTreeMap<(usize, usize), Vec<Vec<usize>>>,
}

pub const MAX_ROUTE_OPTIONS: usize = 3;

impl RouteGraph {
    pub fn from_scenario(s: &ScenarioConfig) -> Result<Self> {
        Self::new(s.ports.clone(), s.edges.clone(), &s.routes, &s.vessels)
    }

    pub fn new(
        ports: Vec<PortSpec>,
        edges: Vec<EdgeSpec>,
        routes: &[RouteSpec],
        vessels: &[VesselSpec],
    ) -> Result<Self> {
        for (i, p) in ports.iter().enumerate() {
            if p.id != i {
                return Err(Error::config(
                    format!("ports[{i}].id"),
                    "port ids must be 0..n in order",
                ));
            }
            if p.berth_capacity == 0 {
                return Err(Error::config(
                    format!("ports[{i}].berth_capacity"),
                    "must be >= 1",
                ));
            }
        }
        for (i, e) in edges.iter().enumerate() {
            if e.id != i {
                return Err(Error::config(
                    format!("edges[{i}].id"),
                    "edge ids must be 0..n in order",
                ));
            }
            if e.origin >= ports.len() {
                return Err(Error::config(
                    format!("edges[{i}].origin"),
                    format!("references missing port {}", e.origin),
                ));
            }
            if e.destination >= ports.len() {
                return Err(Error::config(
                    format!("edges[{i}].destination"),
                    format!("references missing port {}", e.destination),
                ));
            }
            if !(e.distance.is_finite() && e.distance > 0.0) {
                return Err(Error::config(format!("edges[{i}].distance"), "must be > 0"));
            }
        }
        let mut table = BTreeMap::new();
        for (i, r) in routes.iter().enumerate() {
            let key = format!("routes[{i}]");
            if r.options.is_empty() || r.options.len() > MAX_ROUTE_OPTIONS {
                return Err(Error::config(
                    format!("{key}.options"),
                    format!("expected 1..={MAX_ROUTE_OPTIONS} candidate routes"),
                ));
            }
            for (j, opt) in r.options.iter().enumerate() {
                let okey = format!("{key}.options[{j}]");
                let mut at = r.origin;
                if opt.is_empty() {
                    return Err(Error::config(okey, "empty edge sequence"));
                }
                for &eid in opt {
                    let e = edges.get(eid).ok_or_else(|| {
                        Error::config(&okey, format!("references missing edge {eid}"))
                    })?;
                    if e.origin != at {
                        return Err(Error::config(
                            &okey,
                            format!("edge {eid} is not contiguous"),
                        ));
                    }
                    at = e.destination;
                }
                if at != r.destination {
                    return Err(Error::config(okey, "does not end at the route destination"));
                }
            }
            if table
                .insert((r.origin, r.destination), r.options.clone())
                .is_some()
            {
                return Err(Error::config(key, "duplicate origin/destination pair"));
            }
        }
        for (i, v) in vessels.iter().enumerate() {
            if v.id != i {
                return Err(Error::config(
                    format!("vessels[{i}].id"),
                    "vessel ids must be 0..n in order",
                ));
            }
            if v.itinerary.is_empty() {
                return Err(Error::config(
                    format!("vessels[{i}].itinerary"),
                    "needs a start port",
                ));
            }
            for &p in &v.itinerary {
                if p >= ports.len() {
                    return Err(Error::config(
                        format!("vessels[{i}].itinerary"),
                        format!("references missing port {p}"),
                    ));
                }
            }
            for w in v.itinerary.windows(2) {
                if !table.contains_key(&(w[0], w[1])) {
                    return Err(Error::config(
                        format!("vessels[{i}].itinerary"),
                        format!("no route from port {} to port {}", w[0], w[1]),
                    ));
                }
            }
        }
        Ok(RouteGraph {
            ports,
            edges,
            routes: table,
        })
    }

    pub fn edge(&self, id: usize) -> &EdgeSpec {
        &self.edges[id]
    }

    pub fn route_options(&self, origin: usize, destination: usize) -> &[Vec<usize>] {
        self.routes
            .get(&(origin, destination))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Candidate `choice`, falling back to the first candidate when the pair
    /// has fewer options.
    pub fn route(&self, origin: usize, destination: usize, choice: usize) -> Option<&[usize]> {
        let opts = self.route_options(origin, destination);
        opts.get(choice).or_else(|| opts.first()).map(Vec::as_slice)
    }

    pub fn route_distance(&self, edges: &[usize]) -> f64 {
        edges.iter().map(|&e| self.edges[e].distance).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_scale_is_valid() {
        let s = ScenarioConfig::desk_scale();
        s.validate().unwrap();
        assert_eq!(s.ports.len(), 8);
        assert_eq!(s.vessels.len(), 5);
    }

    #[test]
    fn dangling_edge_reference_is_rejected() {
        let mut s = ScenarioConfig::desk_scale();
        s.edges[3].destination = 42;
        let err = s.validate().unwrap_err();
        assert!(
            matches!(err, Error::Config { ref key, .. } if key == "edges[3].destination"),
            "{err}"
        );
    }

    #[test]
    fn non_contiguous_route_is_rejected() {
        let mut s = ScenarioConfig::desk_scale();
        s.routes[1].options[1] = vec![1, 0];
        assert!(matches!(s.validate(), Err(Error::Config { .. })));
    }

    #[test]
    fn unknown_scenario_field_is_rejected() {
        let mut v = serde_json::to_value(ScenarioConfig::desk_scale()).unwrap();
        v["emision_factor"] = 1.0.into();
        let err = ScenarioConfig::from_json_str(&v.to_string()).unwrap_err();
        assert!(err.to_string().contains("emision_factor"), "{err}");
    }

    #[test]
    fn missing_scenario_field_is_rejected() {
        let mut v = serde_json::to_value(ScenarioConfig::desk_scale()).unwrap();
        v.as_object_mut().unwrap().remove("dt");
        let err = ScenarioConfig::from_json_str(&v.to_string()).unwrap_err();
        assert!(err.to_string().contains("dt"), "{err}");
    }
}
