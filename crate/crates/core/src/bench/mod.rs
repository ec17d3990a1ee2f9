//! Optimization scenarios run as environment loops over the engine, with
//! the non-learning baselines and a result table driver.

pub mod fixtures;
pub mod plan;
mod policy;

use std::collections::HashMap;
use std::time::{Duration, Instant};

use thiserror::Error;

pub use policy::{
    delta_toll, policy_by_name, rule_lane_dir, DeltaToll, FixedTime, MaxPressure, NoChange, Policy, RandomPolicy, Rule, JAM_SPEED,
    POLICY_NAMES,
};

use crate::engine::{Engine, EngineConfig, EngineError, DT};
use crate::ids::{JunctionId, LaneId, RoadId, VehicleId};
use crate::netmodel::{RoadNetwork, TlPolicy, TripPlan, Turn, TurnSet};
use crate::routing::{compare_routes, CostModel, Router, DEFAULT_VALUE_OF_TIME};

/// Candidate routes per trip in the pricing scenario.
pub const PRICING_K: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ScenarioKind {
    Signal,
    DynamicLane,
    Tidal,
    Pricing,
    RoadPlan,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 5] = [
        ScenarioKind::Signal,
        ScenarioKind::DynamicLane,
        ScenarioKind::Tidal,
        ScenarioKind::Pricing,
        ScenarioKind::RoadPlan,
    ];

    /// Control period in seconds; `None` for the one-shot road plan.
    pub fn default_period(self) -> Option<f64> {
        match self {
            ScenarioKind::Signal | ScenarioKind::DynamicLane => Some(30.0),
            ScenarioKind::Tidal => Some(180.0),
            ScenarioKind::Pricing => Some(20.0),
            ScenarioKind::RoadPlan => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Signal => "signal",
            ScenarioKind::DynamicLane => "dynamiclane",
            ScenarioKind::Tidal => "tidal",
            ScenarioKind::Pricing => "pricing",
            ScenarioKind::RoadPlan => "roadplan",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

/// A periodic control scenario.
///
/// `entities` holds junction ids (signal), road ids with two lane plans
/// (dynamic lane), forward road ids of tidal pairs (tidal) or priced road
/// ids (pricing).
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub period: f64,
    pub horizon: (f64, f64),
    pub entities: Vec<u32>,
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("period {period} does not divide the horizon {start}..{end}")]
    Period { period: f64, start: f64, end: f64 },
    #[error("entity {0} does not exist or cannot be controlled")]
    Entity(u32),
    #[error("scenario {0} has no periodic control loop")]
    NotPeriodic(&'static str),
}

impl ScenarioSpec {
    /// Spec controlling every eligible entity of `net`.
    pub fn for_network(kind: ScenarioKind, net: &RoadNetwork, horizon: (f64, f64)) -> Result<Self, BenchError> {
        let period = kind.default_period().ok_or(BenchError::NotPeriodic(kind.name()))?;
        let entities = match kind {
            ScenarioKind::Signal => net
                .junctions
                .iter()
                .filter(|j| !j.phases.is_empty())
                .map(|j| j.id.0)
                .collect(),
            ScenarioKind::DynamicLane => net
                .roads
                .iter()
                .filter(|r| dynamic_lane(net, r.id).is_some())
                .map(|r| r.id.0)
                .collect(),
            ScenarioKind::Tidal => net
                .roads
                .iter()
                .filter(|r| r.tidal_partner.is_some_and(|p| p > r.id))
                .map(|r| r.id.0)
                .collect(),
            ScenarioKind::Pricing => net.roads.iter().map(|r| r.id.0).collect(),
            ScenarioKind::RoadPlan => unreachable!(),
        };
        Ok(Self { kind, period, horizon, entities })
    }

    fn validate(&self, net: &RoadNetwork) -> Result<(), BenchError> {
        let (start, end) = self.horizon;
        let n = (end - start) / self.period;
        if !(self.period > 0.0) || n < 0.0 || (n - n.round()).abs() > 1e-9 {
            return Err(BenchError::Period { period: self.period, start, end });
        }
        for &e in &self.entities {
            let ok = match self.kind {
                ScenarioKind::Signal => net.junctions.get(e as usize).is_some_and(|j| !j.phases.is_empty()),
                ScenarioKind::DynamicLane => {
                    (e as usize) < net.roads.len() && dynamic_lane(net, RoadId(e)).is_some()
                }
                ScenarioKind::Tidal => net.roads.get(e as usize).is_some_and(|r| r.tidal_partner.is_some()),
                ScenarioKind::Pricing => (e as usize) < net.roads.len(),
                ScenarioKind::RoadPlan => false,
            };
            if !ok {
                return Err(BenchError::Entity(e));
            }
        }
        Ok(())
    }
}

/// Position of the lane whose turn set differs between plan 0 (STRAIGHT)
/// and plan 1 (LEFT), for roads with exactly two plans.
pub fn dynamic_lane(net: &RoadNetwork, road: RoadId) -> Option<usize> {
    let r = net.road(road);
    if r.lane_plans.len() != 2 {
        return None;
    }
    let diff: Vec<usize> = (0..r.lanes.len())
        .filter(|k| r.lane_plans[0][*k] != r.lane_plans[1][*k])
        .collect();
    match diff[..] {
        [k] => Some(k),
        _ => None,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LaneObservation {
    pub lane: LaneId,
    pub turns: TurnSet,
    pub length: f64,
    /// True for lanes entering the entity (junction approaches, or the
    /// road's own lanes).
    pub incoming: bool,
    pub vehicles: u32,
    pub waiting: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub entity: u32,
    pub lanes: Vec<LaneObservation>,
    /// Vehicles on the entity's road(s) by next turn `[straight, left, right]`.
    pub turn_demand: [u32; 3],
    /// Current setting: phase index, lane plan, 0 = forward / 1 = backward,
    /// or 0 for pricing.
    pub current: usize,
    pub avg_speed: f64,
}

impl Observation {
    pub fn incoming_waiting(&self) -> u32 {
        self.lanes.iter().filter(|l| l.incoming).map(|l| l.waiting).sum()
    }

    pub fn vehicles(&self) -> u32 {
        self.lanes.iter().filter(|l| l.incoming).map(|l| l.vehicles).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LaneDir {
    Straight,
    Left,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TidalDir {
    Forward,
    Backward,
}

/// One decision for all controlled entities, in `ScenarioSpec::entities` order.
#[derive(Clone, Debug, PartialEq)]
pub enum Action {
    Keep,
    Phases(Vec<usize>),
    LaneDirs(Vec<LaneDir>),
    TidalDirs(Vec<TidalDir>),
    Tolls(Vec<f64>),
}

/// Read-only view handed to policies.
pub struct EnvView<'a> {
    pub spec: &'a ScenarioSpec,
    pub engine: &'a Engine,
    pub observations: &'a [Observation],
}

fn road_lanes_obs(net: &RoadNetwork, road: RoadId, counts: &[u32], waiting: &[u32], incoming: bool) -> Vec<LaneObservation> {
    net.road(road)
        .lanes
        .iter()
        .map(|&l| LaneObservation {
            lane: l,
            turns: net.lane_turns(l),
            length: net.lane(l).length,
            incoming,
            vehicles: counts[l.idx()],
            waiting: waiting[l.idx()],
        })
        .collect()
}

/// Build one observation per controlled entity.
pub fn observe(e: &Engine, spec: &ScenarioSpec) -> Vec<Observation> {
    let net = e.network();
    let counts = e.lane_vehicle_counts();
    let waiting = e.lane_waiting_counts();
    let demand = e.turn_demand();
    let speeds = e.road_avg_speed();
    spec.entities
        .iter()
        .map(|&id| match spec.kind {
            ScenarioKind::Signal => {
                let j = &net.junctions[id as usize];
                let mut inc: Vec<LaneId> = j.lanes.iter().flat_map(|l| net.lane(*l).predecessors.clone()).collect();
                let mut out: Vec<LaneId> = j.lanes.iter().flat_map(|l| net.lane(*l).successors.clone()).collect();
                inc.sort_unstable();
                inc.dedup();
                out.sort_unstable();
                out.dedup();
                let mk = |l: LaneId, incoming: bool| LaneObservation {
                    lane: l,
                    turns: net.lane_turns(l),
                    length: net.lane(l).length,
                    incoming,
                    vehicles: counts[l.idx()],
                    waiting: waiting[l.idx()],
                };
                let lanes: Vec<LaneObservation> = inc
                    .iter()
                    .map(|l| mk(*l, true))
                    .chain(out.iter().map(|l| mk(*l, false)))
                    .collect();
                let mut td = [0; 3];
                let mut roads: Vec<RoadId> = inc.iter().filter_map(|l| net.lane(*l).road()).collect();
                roads.dedup();
                for r in &roads {
                    for k in 0..3 {
                        td[k] += demand[r.idx()][k];
                    }
                }
                Observation {
                    entity: id,
                    lanes,
                    turn_demand: td,
                    current: e.signal_state(j.id).map_or(0, |s| s.phase),
                    avg_speed: 0.0,
                }
            }
            ScenarioKind::DynamicLane | ScenarioKind::Pricing => {
                let r = RoadId(id);
                Observation {
                    entity: id,
                    lanes: road_lanes_obs(net, r, &counts, &waiting, true),
                    turn_demand: demand[r.idx()],
                    current: net.road(r).active_plan,
                    avg_speed: speeds[r.idx()],
                }
            }
            ScenarioKind::Tidal => {
                let f = RoadId(id);
                let b = net.road(f).tidal_partner.unwrap();
                let mut lanes = road_lanes_obs(net, f, &counts, &waiting, true);
                lanes.extend(road_lanes_obs(net, b, &counts, &waiting, false));
                let fl = net.road(f).lanes[0];
                Observation {
                    entity: id,
                    lanes,
                    turn_demand: demand[f.idx()],
                    current: usize::from(net.lane(fl).restricted),
                    avg_speed: speeds[f.idx()],
                }
            }
            ScenarioKind::RoadPlan => unreachable!(),
        })
        .collect()
}

/// Waiting vehicles used for the per-entity reward.
fn entity_waiting(net: &RoadNetwork, spec: &ScenarioSpec, id: u32, waiting: &[u32]) -> u32 {
    let road_sum = |r: RoadId| net.road(r).lanes.iter().map(|l| waiting[l.idx()]).sum::<u32>();
    match spec.kind {
        ScenarioKind::Signal => {
            let j = &net.junctions[id as usize];
            let mut inc: Vec<LaneId> = j.lanes.iter().flat_map(|l| net.lane(*l).predecessors.clone()).collect();
            inc.sort_unstable();
            inc.dedup();
            inc.iter().map(|l| waiting[l.idx()]).sum()
        }
        ScenarioKind::DynamicLane => road_sum(RoadId(id)),
        ScenarioKind::Tidal => {
            let f = RoadId(id);
            road_sum(f) + road_sum(net.road(f).tidal_partner.unwrap())
        }
        _ => 0,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioOutcome {
    pub att: f64,
    pub tp: usize,
    /// Reward of each control period.
    pub rewards: Vec<f64>,
    /// Invalid actions that were ignored.
    pub violations: Vec<String>,
    pub steps: u64,
    pub vehicle_steps: u64,
    pub wall: Duration,
}

impl ScenarioOutcome {
    pub fn steps_per_second(&self) -> f64 {
        self.steps as f64 / self.wall.as_secs_f64().max(1e-9)
    }

    pub fn vehicle_steps_per_second(&self) -> f64 {
        self.vehicle_steps as f64 / self.wall.as_secs_f64().max(1e-9)
    }
}

/// Route choice at departure among `k` free-flow candidates, minimizing
/// free-flow time plus tolls.
struct RouteChooser {
    candidates: HashMap<(RoadId, RoadId), Vec<Vec<RoadId>>>,
    free_flow: Vec<f64>,
    order: Vec<(f64, VehicleId)>,
    next: usize,
}

impl RouteChooser {
    fn new(net: &RoadNetwork, trips: &[TripPlan], k: usize) -> Self {
        let router = Router::new(net, CostModel::FreeFlow);
        let mut candidates = HashMap::new();
        for t in trips {
            let key = (t.route[0], *t.route.last().unwrap());
            candidates
                .entry(key)
                .or_insert_with(|| router.k_routes(key.0, key.1, k));
        }
        let free_flow = net.roads.iter().map(|r| router.road_cost(r.id)).collect();
        let mut order: Vec<(f64, VehicleId)> = trips.iter().map(|t| (t.departure, t.person)).collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        Self { candidates, free_flow, order, next: 0 }
    }

    /// Assign routes to vehicles departing by the current clock.
    fn assign(&mut self, e: &mut Engine, tolls: &[f64]) {
        while let Some(&(t, v)) = self.order.get(self.next) {
            if t > e.clock() + 1e-9 {
                break;
            }
            self.next += 1;
            let rt = e.vehicle(v).expect("trip vehicle");
            let key = (rt.route[0], *rt.route.last().unwrap());
            let end = rt.end;
            let Some(cands) = self.candidates.get(&key) else { continue };
            if let Some(route) = cheapest_route(cands, &self.free_flow, tolls) {
                if *route != rt.route {
                    e.set_vehicle_route(v, route.clone(), end.0, end.1)
                        .expect("candidate route is connected");
                }
            }
        }
    }
}

/// Candidate minimizing free-flow time plus tolls at the default value of
/// time; ties go to the lexicographically smaller route.
pub fn cheapest_route<'a>(candidates: &'a [Vec<RoadId>], free_flow: &[f64], tolls: &[f64]) -> Option<&'a Vec<RoadId>> {
    let cost = |r: &[RoadId]| {
        r.iter()
            .map(|x| free_flow[x.idx()] + tolls[x.idx()] * DEFAULT_VALUE_OF_TIME)
            .sum::<f64>()
    };
    candidates
        .iter()
        .min_by(|a, b| compare_routes((cost(a), a), (cost(b), b)))
}

/// Run a periodic scenario with `policy` over `[horizon.0, horizon.1)`.
pub fn run_scenario(
    spec: &ScenarioSpec,
    policy: &mut dyn Policy,
    net: RoadNetwork,
    trips: Vec<TripPlan>,
    cfg: EngineConfig,
) -> Result<ScenarioOutcome, BenchError> {
    if spec.kind == ScenarioKind::RoadPlan {
        return Err(BenchError::NotPeriodic(spec.kind.name()));
    }
    spec.validate(&net)?;
    let mut chooser = (spec.kind == ScenarioKind::Pricing).then(|| RouteChooser::new(&net, &trips, PRICING_K));
    let mut e = Engine::new(net, trips, EngineConfig { start_time: spec.horizon.0, ..cfg })?;
    match spec.kind {
        ScenarioKind::Signal if policy.manual_signals() => {
            for &j in &spec.entities {
                e.set_tl_policy(JunctionId(j), TlPolicy::Manual)?;
            }
        }
        ScenarioKind::Tidal => apply_tidal(&mut e, spec, &vec![TidalDir::Forward; spec.entities.len()])?,
        _ => {}
    }
    let mut tolls = vec![0.0; e.network().roads.len()];
    let steps = ((spec.horizon.1 - spec.horizon.0) / DT).round() as u64;
    let period = (spec.period / DT).round().max(1.0) as u64;
    let mut rewards = Vec::new();
    let mut violations = Vec::new();
    let mut acc = 0.0;
    let mut samples = 0u64;
    let mut tp_mark = 0;
    let mut vehicle_steps = 0;
    let started = Instant::now();
    for k in 0..steps {
        if k % period == 0 {
            if k > 0 {
                rewards.push(period_reward(spec, acc, samples, e.finished_count() - tp_mark));
            }
            acc = 0.0;
            samples = 0;
            tp_mark = e.finished_count();
            let obs = observe(&e, spec);
            let action = policy.act(&EnvView { spec, engine: &e, observations: &obs });
            if let Err(msg) = apply_action(&mut e, spec, action, &mut tolls) {
                violations.push(format!("t={}: {msg}", e.clock()));
            }
        }
        if let Some(ch) = chooser.as_mut() {
            ch.assign(&mut e, &tolls);
        }
        e.step();
        vehicle_steps += e.status_counts().1 as u64;
        if matches!(spec.kind, ScenarioKind::Signal | ScenarioKind::DynamicLane | ScenarioKind::Tidal)
            && !spec.entities.is_empty()
        {
            let waiting = e.lane_waiting_counts();
            let total: u32 = spec
                .entities
                .iter()
                .map(|id| entity_waiting(e.network(), spec, *id, &waiting))
                .sum();
            acc += total as f64 / spec.entities.len() as f64;
        }
        samples += 1;
    }
    if steps > 0 {
        rewards.push(period_reward(spec, acc, samples, e.finished_count() - tp_mark));
    }
    Ok(ScenarioOutcome {
        att: e.avg_traveling_time(),
        tp: e.finished_count(),
        rewards,
        violations,
        steps,
        vehicle_steps,
        wall: started.elapsed(),
    })
}

fn period_reward(spec: &ScenarioSpec, acc: f64, samples: u64, finished: usize) -> f64 {
    match spec.kind {
        ScenarioKind::Pricing => finished as f64,
        _ if samples == 0 => 0.0,
        _ => -(acc / samples as f64),
    }
}

fn apply_tidal(e: &mut Engine, spec: &ScenarioSpec, dirs: &[TidalDir]) -> Result<(), EngineError> {
    for (&id, dir) in spec.entities.iter().zip(dirs) {
        let f = RoadId(id);
        let b = e.network().road(f).tidal_partner.expect("validated tidal pair");
        let fl = e.network().road(f).lanes[0];
        let bl = e.network().road(b).lanes[0];
        e.set_lane_restriction(fl, *dir == TidalDir::Backward)?;
        e.set_lane_restriction(bl, *dir == TidalDir::Forward)?;
    }
    Ok(())
}

fn apply_action(
    e: &mut Engine,
    spec: &ScenarioSpec,
    action: Action,
    tolls: &mut [f64],
) -> Result<(), String> {
    let n = spec.entities.len();
    let len_err = |got: usize| Err(format!("action has {got} entries for {n} entities"));
    match (spec.kind, action) {
        (_, Action::Keep) => Ok(()),
        (ScenarioKind::Signal, Action::Phases(p)) => {
            if p.len() != n {
                return len_err(p.len());
            }
            let net = e.network();
            if let Some((id, ph)) = spec
                .entities
                .iter()
                .zip(&p)
                .find(|(id, ph)| **ph >= net.junctions[**id as usize].phases.len())
            {
                return Err(format!("phase {ph} out of range for junction {id}"));
            }
            for (&id, &ph) in spec.entities.iter().zip(&p) {
                e.set_tl_phase(JunctionId(id), ph).map_err(|x| x.to_string())?;
            }
            Ok(())
        }
        (ScenarioKind::DynamicLane, Action::LaneDirs(d)) => {
            if d.len() != n {
                return len_err(d.len());
            }
            for (&id, dir) in spec.entities.iter().zip(&d) {
                let plan = match dir {
                    LaneDir::Straight => 0,
                    LaneDir::Left => 1,
                };
                if e.network().road(RoadId(id)).active_plan != plan {
                    e.set_road_lane_plan(RoadId(id), plan).map_err(|x| x.to_string())?;
                }
            }
            Ok(())
        }
        (ScenarioKind::Tidal, Action::TidalDirs(d)) => {
            if d.len() != n {
                return len_err(d.len());
            }
            apply_tidal(e, spec, &d).map_err(|x| x.to_string())
        }
        (ScenarioKind::Pricing, Action::Tolls(t)) => {
            if t.len() != n {
                return len_err(t.len());
            }
            if let Some(bad) = t.iter().find(|x| !(**x >= 0.0) || !x.is_finite()) {
                return Err(format!("invalid toll {bad}"));
            }
            for (&id, &toll) in spec.entities.iter().zip(&t) {
                e.set_road_toll(RoadId(id), toll).map_err(|x| x.to_string())?;
                tolls[id as usize] = toll;
            }
            Ok(())
        }
        (kind, a) => Err(format!("action {a:?} does not apply to scenario {}", kind.name())),
    }
}

/// Turn index used in `turn_demand` arrays.
pub fn turn_slot(t: Turn) -> usize {
    match t {
        Turn::Straight => 0,
        Turn::Left => 1,
        Turn::Right => 2,
    }
}

/// One row of the result table.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub scenario: ScenarioKind,
    pub policy: String,
    pub att: f64,
    pub tp: f64,
    pub steps_per_second: f64,
    pub vehicle_steps_per_second: f64,
}

impl ResultRow {
    /// `scenario policy att tp`
    pub fn line(&self) -> String {
        use crate::netmodel::fmt_float;
        format!(
            "{} {} {} {}",
            self.scenario.name(),
            self.policy,
            fmt_float(self.att),
            fmt_float(self.tp)
        )
    }
}
