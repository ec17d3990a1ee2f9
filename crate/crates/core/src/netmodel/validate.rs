use std::collections::BTreeSet;
use std::fmt;

use super::{polyline_length, Endpoint, Parent, RoadNetwork, TripPlan};
use crate::ids::LaneId;

/// One broken invariant, naming the offending entity and the rule.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub entity: String,
    pub rule: &'static str,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} [{}] {}", self.entity, self.rule, self.detail)
    }
}

struct Collector(Vec<Violation>);

impl Collector {
    fn push(&mut self, entity: impl Into<String>, rule: &'static str, detail: impl Into<String>) {
        self.0.push(Violation {
            entity: entity.into(),
            rule,
            detail: detail.into(),
        });
    }
}

/// Check every structural invariant of the network. An empty result means
/// the network is well-formed.
pub fn validate_network(net: &RoadNetwork) -> Vec<Violation> {
    let mut v = Collector(Vec::new());
    let n_lanes = net.lanes.len();
    let lane_ok = |l: LaneId| l.idx() < n_lanes;

    for (i, lane) in net.lanes.iter().enumerate() {
        let who = format!("lane {}", lane.id);
        if lane.id.idx() != i {
            v.push(&who, "id-order", format!("stored at position {i}"));
        }
        match lane.parent {
            Parent::Road(r) if r.idx() >= net.roads.len() => {
                v.push(&who, "dangling-reference", format!("parent road {r}"));
            }
            Parent::Junction(j) if j.idx() >= net.junctions.len() => {
                v.push(&who, "dangling-reference", format!("parent junction {j}"));
            }
            _ => {}
        }
        if !(lane.length > 0.0) || !lane.length.is_finite() {
            v.push(&who, "lane-length", format!("non-positive length {}", lane.length));
        } else {
            let arc = polyline_length(&lane.centerline);
            if ((arc - lane.length) / lane.length).abs() > 1e-6 {
                v.push(
                    &who,
                    "lane-length",
                    format!("length {} differs from arc length {arc}", lane.length),
                );
            }
        }
        if !(lane.max_speed > 0.0) || !lane.max_speed.is_finite() {
            v.push(&who, "lane-speed", format!("max speed {}", lane.max_speed));
        }
        if lane.is_junction_lane() && (lane.left.is_some() || lane.right.is_some()) {
            v.push(&who, "junction-lane-neighbor", "junction lanes cannot have neighbors");
        }
        for &s in &lane.successors {
            if !lane_ok(s) {
                v.push(&who, "dangling-reference", format!("successor {s}"));
            } else if !net.lane(s).predecessors.contains(&lane.id) {
                v.push(
                    &who,
                    "asymmetric-topology",
                    format!("successor {s} does not list it as predecessor"),
                );
            }
        }
        for &p in &lane.predecessors {
            if !lane_ok(p) {
                v.push(&who, "dangling-reference", format!("predecessor {p}"));
            } else if !net.lane(p).successors.contains(&lane.id) {
                v.push(
                    &who,
                    "asymmetric-topology",
                    format!("predecessor {p} does not list it as successor"),
                );
            }
        }
        for (side, nb, back) in [
            ("left", lane.left, (|l| l.right) as fn(&super::Lane) -> Option<LaneId>),
            ("right", lane.right, |l| l.left),
        ] {
            let Some(nb) = nb else { continue };
            if !lane_ok(nb) {
                v.push(&who, "dangling-reference", format!("{side} neighbor {nb}"));
                continue;
            }
            let other = net.lane(nb);
            if back(other) != Some(lane.id) {
                v.push(&who, "neighbor-mutual", format!("{side} neighbor {nb} does not point back"));
            }
            if other.parent != lane.parent {
                v.push(&who, "neighbor-parent", format!("{side} neighbor {nb} has another parent"));
            }
        }
    }

    for (i, road) in net.roads.iter().enumerate() {
        let who = format!("road {}", road.id);
        if road.id.idx() != i {
            v.push(&who, "id-order", format!("stored at position {i}"));
        }
        if road.lanes.is_empty() {
            v.push(&who, "road-lanes", "road has no lanes");
        }
        if road.active_plan >= road.lane_plans.len() {
            v.push(
                &who,
                "road-plan",
                format!("active plan {} of {}", road.active_plan, road.lane_plans.len()),
            );
        }
        for (k, plan) in road.lane_plans.iter().enumerate() {
            if plan.len() != road.lanes.len() {
                v.push(&who, "road-plan", format!("plan {k} covers {} lanes", plan.len()));
            }
        }
        for &l in &road.lanes {
            if !lane_ok(l) {
                v.push(&who, "dangling-reference", format!("lane {l}"));
            } else if net.lane(l).parent != Parent::Road(road.id) {
                v.push(&who, "road-lane-parent", format!("lane {l} belongs elsewhere"));
            }
        }
        if !(road.toll >= 0.0) {
            v.push(&who, "road-toll", format!("negative toll {}", road.toll));
        }
        if let Some(p) = road.tidal_partner {
            if p.idx() >= net.roads.len() {
                v.push(&who, "dangling-reference", format!("tidal partner {p}"));
            }
        }
    }

    for (i, junc) in net.junctions.iter().enumerate() {
        let who = format!("junction {}", junc.id);
        if junc.id.idx() != i {
            v.push(&who, "id-order", format!("stored at position {i}"));
        }
        let lanes: BTreeSet<LaneId> = junc.lanes.iter().copied().collect();
        for &l in &junc.lanes {
            if !lane_ok(l) {
                v.push(&who, "dangling-reference", format!("lane {l}"));
            } else if net.lane(l).parent != Parent::Junction(junc.id) {
                v.push(&who, "junction-lane-parent", format!("lane {l} belongs elsewhere"));
            }
        }
        for (k, phase) in junc.phases.iter().enumerate() {
            let keys: BTreeSet<LaneId> = phase.lane_states.keys().copied().collect();
            if keys != lanes {
                let missing = lanes.difference(&keys).count();
                let extra = keys.difference(&lanes).count();
                v.push(
                    &who,
                    "incomplete-phase",
                    format!("phase {k}: {missing} lanes missing, {extra} foreign"),
                );
            }
        }
        for &(p, d) in &junc.fixed_program {
            if p >= junc.phases.len() {
                v.push(&who, "program-phase", format!("phase index {p} out of range"));
            }
            if !(d >= 1.0) {
                v.push(&who, "program-duration", format!("duration {d} below 1 s"));
            }
        }
    }

    for (i, aoi) in net.aois.iter().enumerate() {
        let who = format!("aoi {}", aoi.id);
        if aoi.id.idx() != i {
            v.push(&who, "id-order", format!("stored at position {i}"));
        }
        for &(l, s) in &aoi.gates {
            if !lane_ok(l) {
                v.push(&who, "dangling-reference", format!("gate lane {l}"));
            } else if !(0.0..=net.lane(l).length).contains(&s) {
                v.push(&who, "aoi-gate", format!("gate offset {s} outside lane {l}"));
            }
        }
    }
    v.0
}

/// Check trip plans against a (valid) network.
pub fn validate_demand(net: &RoadNetwork, trips: &[TripPlan]) -> Vec<Violation> {
    let mut v = Collector(Vec::new());
    let mut seen = BTreeSet::new();
    for trip in trips {
        let who = format!("trip {}", trip.person);
        if !seen.insert(trip.person) {
            v.push(&who, "duplicate-person", "person id used twice");
        }
        if !(trip.departure >= 0.0) {
            v.push(&who, "departure", format!("departure {}", trip.departure));
        }
        if !trip.profile.is_valid() {
            v.push(&who, "profile", "profile values must be strictly positive");
        }
        if trip.route.is_empty() {
            v.push(&who, "route", "empty route");
            continue;
        }
        if let Some(r) = trip.route.iter().find(|r| r.idx() >= net.roads.len()) {
            v.push(&who, "dangling-reference", format!("road {r}"));
            continue;
        }
        for w in trip.route.windows(2) {
            if net.connections(w[0], w[1]).is_empty() {
                v.push(&who, "route", format!("roads {} and {} not connected", w[0], w[1]));
            }
        }
        let first = trip.route[0];
        let last = *trip.route.last().unwrap();
        for (name, ep, road) in [("origin", trip.origin, first), ("destination", trip.destination, last)] {
            match ep {
                Endpoint::Aoi(a) if a.idx() >= net.aois.len() => {
                    v.push(&who, "dangling-reference", format!("{name} aoi {a}"));
                }
                Endpoint::Lane(l, _) if l.idx() >= net.lanes.len() => {
                    v.push(&who, "dangling-reference", format!("{name} lane {l}"));
                }
                _ => match TripPlan::resolve(net, ep, road) {
                    Some((l, s)) => {
                        if net.lane(l).road() != Some(road) {
                            v.push(&who, "endpoint", format!("{name} not on road {road}"));
                        } else if !(0.0..=net.lane(l).length).contains(&s) {
                            v.push(&who, "endpoint", format!("{name} offset {s} outside lane"));
                        }
                    }
                    None => v.push(&who, "endpoint", format!("{name} has no gate on road {road}")),
                },
            }
        }
    }
    v.0
}
