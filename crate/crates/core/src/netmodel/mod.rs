//! Road network and travel demand data model.
//!
//! A network is made of lanes, roads (bundles of parallel lanes), junctions
//! (lanes that connect roads, plus signal programs) and AOIs (origin and
//! destination areas connected to lanes by gates). Entities live in dense
//! vectors and an entity's id equals its position.

mod demand;
mod format;
mod grid;
mod validate;

use std::collections::BTreeMap;
use std::fmt;

pub use demand::{generate_demand, route_length, DemandError, PeakWindow, ASSUMED_SPEED};
pub use format::{
    canon, fmt_float, parse_demand, parse_network, write_demand, write_network, ParseError,
};
pub use grid::{generate_grid, generate_grid_with, GridConfig, GridError, GridLayout};
pub use validate::{validate_demand, validate_network, Violation};

use crate::ids::{AoiId, JunctionId, LaneId, RoadId, VehicleId};

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Arc length of a polyline.
pub fn polyline_length(points: &[Point]) -> f64 {
    points.windows(2).map(|w| w[0].dist(w[1])).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Parent {
    Road(RoadId),
    Junction(JunctionId),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Turn {
    Straight,
    Left,
    Right,
}

impl Turn {
    pub const ALL: [Turn; 3] = [Turn::Straight, Turn::Left, Turn::Right];

    pub fn as_str(self) -> &'static str {
        match self {
            Turn::Straight => "STRAIGHT",
            Turn::Left => "LEFT",
            Turn::Right => "RIGHT",
        }
    }

    fn bit(self) -> u8 {
        match self {
            Turn::Straight => 1,
            Turn::Left => 2,
            Turn::Right => 4,
        }
    }
}

/// Set of turns a road lane may feed into at the downstream junction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub struct TurnSet(u8);

impl TurnSet {
    pub const EMPTY: TurnSet = TurnSet(0);

    pub fn of(turns: &[Turn]) -> Self {
        Self(turns.iter().fold(0, |acc, t| acc | t.bit()))
    }

    pub fn contains(self, t: Turn) -> bool {
        self.0 & t.bit() != 0
    }

    pub fn insert(&mut self, t: Turn) {
        self.0 |= t.bit();
    }

    pub fn union(self, other: TurnSet) -> TurnSet {
        TurnSet(self.0 | other.0)
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = Turn> {
        Turn::ALL.into_iter().filter(move |t| self.contains(*t))
    }
}

impl fmt::Display for TurnSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return f.write_str("-");
        }
        for (t, c) in [(Turn::Straight, 'S'), (Turn::Left, 'L'), (Turn::Right, 'R')] {
            if self.contains(t) {
                write!(f, "{c}")?;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Lane {
    pub id: LaneId,
    pub parent: Parent,
    pub centerline: Vec<Point>,
    pub length: f64,
    pub max_speed: f64,
    /// Movement type; meaningful for junction lanes.
    pub turn: Turn,
    pub predecessors: Vec<LaneId>,
    pub successors: Vec<LaneId>,
    pub left: Option<LaneId>,
    pub right: Option<LaneId>,
    pub restricted: bool,
}

impl Lane {
    pub fn is_junction_lane(&self) -> bool {
        matches!(self.parent, Parent::Junction(_))
    }

    pub fn road(&self) -> Option<RoadId> {
        match self.parent {
            Parent::Road(r) => Some(r),
            Parent::Junction(_) => None,
        }
    }

    pub fn start(&self) -> Point {
        self.centerline.first().copied().unwrap_or_default()
    }

    pub fn end(&self) -> Point {
        self.centerline.last().copied().unwrap_or_default()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Road {
    pub id: RoadId,
    /// Member lanes, leftmost first.
    pub lanes: Vec<LaneId>,
    /// Alternative lane-function plans; each assigns a turn set to every lane.
    pub lane_plans: Vec<Vec<TurnSet>>,
    pub active_plan: usize,
    pub tidal_partner: Option<RoadId>,
    pub toll: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Light {
    Green,
    Yellow,
    Red,
}

impl Light {
    pub fn letter(self) -> char {
        match self {
            Light::Green => 'G',
            Light::Yellow => 'Y',
            Light::Red => 'R',
        }
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct SignalPhase {
    pub lane_states: BTreeMap<LaneId, Light>,
}

impl SignalPhase {
    pub fn state(&self, lane: LaneId) -> Light {
        self.lane_states.get(&lane).copied().unwrap_or(Light::Red)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TlPolicy {
    Manual,
    FixedTime,
    MaxPressure,
    None,
}

impl TlPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            TlPolicy::Manual => "MANUAL",
            TlPolicy::FixedTime => "FIXED_TIME",
            TlPolicy::MaxPressure => "MAX_PRESSURE",
            TlPolicy::None => "NONE",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "MANUAL" => TlPolicy::Manual,
            "FIXED_TIME" => TlPolicy::FixedTime,
            "MAX_PRESSURE" => TlPolicy::MaxPressure,
            "NONE" => TlPolicy::None,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Junction {
    pub id: JunctionId,
    pub lanes: Vec<LaneId>,
    pub phases: Vec<SignalPhase>,
    /// `(phase index, duration seconds)` entries cycled by the fixed-time policy.
    pub fixed_program: Vec<(usize, f64)>,
    pub policy: TlPolicy,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Aoi {
    pub id: AoiId,
    pub polygon: Vec<Point>,
    /// `(lane, s-offset)` connection points.
    pub gates: Vec<(LaneId, f64)>,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct RoadNetwork {
    pub lanes: Vec<Lane>,
    pub roads: Vec<Road>,
    pub junctions: Vec<Junction>,
    pub aois: Vec<Aoi>,
}

impl RoadNetwork {
    pub fn lane(&self, id: LaneId) -> &Lane {
        &self.lanes[id.idx()]
    }

    pub fn road(&self, id: RoadId) -> &Road {
        &self.roads[id.idx()]
    }

    pub fn junction(&self, id: JunctionId) -> &Junction {
        &self.junctions[id.idx()]
    }

    pub fn aoi(&self, id: AoiId) -> &Aoi {
        &self.aois[id.idx()]
    }

    pub fn get_lane(&self, id: LaneId) -> Option<&Lane> {
        self.lanes.get(id.idx())
    }

    /// Length of a road, taken from its first lane.
    pub fn road_length(&self, id: RoadId) -> f64 {
        self.road(id)
            .lanes
            .first()
            .map(|l| self.lane(*l).length)
            .unwrap_or(0.0)
    }

    /// Free-flow speed of a road: the fastest member lane.
    pub fn road_max_speed(&self, id: RoadId) -> f64 {
        self.road(id)
            .lanes
            .iter()
            .map(|l| self.lane(*l).max_speed)
            .fold(0.0, f64::max)
    }

    pub fn road_start(&self, id: RoadId) -> Point {
        self.road(id)
            .lanes
            .first()
            .map(|l| self.lane(*l).start())
            .unwrap_or_default()
    }

    pub fn road_end(&self, id: RoadId) -> Point {
        self.road(id)
            .lanes
            .first()
            .map(|l| self.lane(*l).end())
            .unwrap_or_default()
    }

    /// A road is passable when at least one of its lanes is unrestricted.
    pub fn road_passable(&self, id: RoadId) -> bool {
        self.road(id).lanes.iter().any(|l| !self.lane(*l).restricted)
    }

    /// Position of a lane inside its road (0 = leftmost).
    pub fn lane_position(&self, lane: LaneId) -> Option<usize> {
        let road = self.lane(lane).road()?;
        self.road(road).lanes.iter().position(|l| *l == lane)
    }

    /// Turn set of a road lane under the road's active plan.
    pub fn lane_turns(&self, lane: LaneId) -> TurnSet {
        let Some(road) = self.lane(lane).road() else {
            return TurnSet::EMPTY;
        };
        let r = self.road(road);
        let pos = r.lanes.iter().position(|l| *l == lane).unwrap_or(0);
        r.lane_plans
            .get(r.active_plan)
            .and_then(|p| p.get(pos))
            .copied()
            .unwrap_or(TurnSet::EMPTY)
    }

    /// Junction lanes leading from `from` road to `to` road, as
    /// `(road lane, junction lane, downstream road lane)` triples in lane-id order.
    pub fn connections(&self, from: RoadId, to: RoadId) -> Vec<(LaneId, LaneId, LaneId)> {
        let mut out = Vec::new();
        for &l in &self.road(from).lanes {
            for &j in &self.lane(l).successors {
                let jl = self.lane(j);
                if !jl.is_junction_lane() {
                    continue;
                }
                for &d in &jl.successors {
                    if self.lane(d).road() == Some(to) {
                        out.push((l, j, d));
                    }
                }
            }
        }
        out
    }

    /// Roads reachable from `from` through one junction, ascending and deduplicated.
    pub fn downstream_roads(&self, from: RoadId) -> Vec<RoadId> {
        let mut out: Vec<RoadId> = self
            .road(from)
            .lanes
            .iter()
            .flat_map(|l| self.lane(*l).successors.iter())
            .filter(|j| self.lane(**j).is_junction_lane())
            .flat_map(|j| self.lane(*j).successors.iter())
            .filter_map(|d| self.lane(*d).road())
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// Start or end location of a trip.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Endpoint {
    Aoi(AoiId),
    Lane(LaneId, f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VehicleProfile {
    /// Maximum acceleration, m/s².
    pub a_max: f64,
    /// Comfortable deceleration, m/s².
    pub a_comf: f64,
    /// Desired time headway, s.
    pub headway: f64,
    /// Minimum standstill gap, m.
    pub min_gap: f64,
    /// Maximum speed, m/s.
    pub v_max: f64,
    /// Physical length, m.
    pub length: f64,
}

impl Default for VehicleProfile {
    fn default() -> Self {
        Self {
            a_max: 2.0,
            a_comf: 3.0,
            headway: 1.5,
            min_gap: 2.0,
            v_max: 16.667,
            length: 5.0,
        }
    }
}

impl VehicleProfile {
    pub fn is_valid(&self) -> bool {
        [
            self.a_max,
            self.a_comf,
            self.headway,
            self.min_gap,
            self.v_max,
            self.length,
        ]
        .iter()
        .all(|x| x.is_finite() && *x > 0.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TripPlan {
    pub person: VehicleId,
    pub origin: Endpoint,
    pub destination: Endpoint,
    /// Seconds since midnight.
    pub departure: f64,
    pub route: Vec<RoadId>,
    pub profile: VehicleProfile,
}

impl TripPlan {
    /// Resolve an endpoint to a concrete `(lane, s)` on `road`.
    ///
    /// AOIs use their first gate on the road; lane endpoints are returned as is.
    pub fn resolve(net: &RoadNetwork, ep: Endpoint, road: RoadId) -> Option<(LaneId, f64)> {
        match ep {
            Endpoint::Lane(l, s) => Some((l, s)),
            Endpoint::Aoi(a) => net
                .aois
                .get(a.idx())?
                .gates
                .iter()
                .find(|(l, _)| net.get_lane(*l).and_then(|x| x.road()) == Some(road))
                .copied(),
        }
    }
}
