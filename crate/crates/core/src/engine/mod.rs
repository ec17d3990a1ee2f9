//! Two-phase simulation engine.
//!
//! `step` runs PREPARE (apply buffered controls, copy runtime into the
//! snapshot, rebuild the lane index, replicate signal states onto lanes)
//! and then UPDATE (vehicle models, signal controllers, AOI releases).
//! Vehicles read only the snapshot and the index during UPDATE and write
//! only their own runtime, so results do not depend on the worker count.

mod report;
mod signal;
mod vehicle;

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

pub use report::{final_line, report_line, ReportSample};
pub use signal::{max_pressure_choice, phase_pressure, SignalState, YELLOW_TIME};

use crate::ids::{JunctionId, LaneId, RoadId, VehicleId};
use crate::index::{IndexDelta, LaneIndex};
use crate::routing::{compare_routes, CostModel, Router};
use crate::netmodel::{
    validate_demand, validate_network, Light, RoadNetwork, TlPolicy, TripPlan, Turn, TurnSet,
    VehicleProfile, Violation,
};

/// Simulated time per step, s.
pub const DT: f64 = 1.0;
/// Length of the lane-end zone in which stopped vehicles count as waiting, m.
pub const QUEUE_ZONE: f64 = 100.0;
/// Default interval between max-pressure decisions, s.
pub const MAX_PRESSURE_PERIOD: f64 = 30.0;

#[derive(Clone, Debug, PartialEq)]
pub struct EngineConfig {
    pub seed: u64,
    pub workers: usize,
    /// Clock value before the first step, s since midnight.
    pub start_time: f64,
    pub max_pressure_period: f64,
    /// Update vehicles sequentially in descending id order. Test hook for
    /// checking that update order does not matter.
    #[doc(hidden)]
    pub reverse_update: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            workers: 1,
            start_time: 0.0,
            max_pressure_period: MAX_PRESSURE_PERIOD,
            reverse_update: false,
        }
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid network: {}", first(.0))]
    InvalidNetwork(Vec<Violation>),
    #[error("invalid demand: {}", first(.0))]
    InvalidDemand(Vec<Violation>),
    #[error("workers must be at least 1")]
    NoWorkers,
    #[error("thread pool: {0}")]
    ThreadPool(String),
    #[error("unknown junction {0}")]
    UnknownJunction(JunctionId),
    #[error("unknown lane {0}")]
    UnknownLane(LaneId),
    #[error("unknown road {0}")]
    UnknownRoad(RoadId),
    #[error("unknown vehicle {0}")]
    UnknownVehicle(VehicleId),
    #[error("phase {phase} out of range for junction {junction}")]
    PhaseOutOfRange { junction: JunctionId, phase: usize },
    #[error("plan {plan} out of range for road {road}")]
    PlanOutOfRange { road: RoadId, plan: usize },
    #[error("invalid value {0}")]
    BadValue(f64),
    #[error("route rejected: {0}")]
    BadRoute(String),
}

fn first(v: &[Violation]) -> String {
    match v.first() {
        Some(x) if v.len() > 1 => format!("{x} (and {} more)", v.len() - 1),
        Some(x) => x.to_string(),
        None => String::new(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Status {
    Pending,
    Driving,
    Finished,
}

/// Private, writable per-vehicle state.
#[derive(Clone, Debug, PartialEq)]
pub struct VehicleRuntime {
    pub status: Status,
    pub lane: LaneId,
    pub s: f64,
    pub v: f64,
    pub a: f64,
    /// Index into `route` of the current road, or of the road just left
    /// while on a junction lane.
    pub cursor: usize,
    pub route: Vec<RoadId>,
    /// Destination `(lane, s)`; the trip ends on reaching `s` on any lane
    /// of the last route road.
    pub end: (LaneId, f64),
    pub depart_t: f64,
    pub finish_t: f64,
    pub stranded: bool,
    /// Lane-change intent: -1 left, +1 right, 0 none. Set while the
    /// current lane cannot serve the next turn.
    pub blinker: i8,
}

/// Read-only copy of the previous step's public vehicle state.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct VehicleSnapshot {
    pub lane: LaneId,
    pub s: f64,
    pub v: f64,
    pub blinker: i8,
    pub driving: bool,
}

/// A junction lane leaving a road lane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Exit {
    pub next_road: RoadId,
    pub via: LaneId,
    pub to: LaneId,
    pub turn: Turn,
}

#[derive(Clone, Debug, PartialEq)]
enum Control {
    Policy(JunctionId, TlPolicy),
    Phase(JunctionId, usize),
    Duration(JunctionId, f64),
    LaneSpeed(LaneId, f64),
    Restriction(LaneId, bool),
    LanePlan(RoadId, usize),
    Toll(RoadId, f64),
    Route(usize, Vec<RoadId>, (LaneId, f64)),
}

pub struct Engine {
    net: RoadNetwork,
    cfg: EngineConfig,
    pool: Arc<rayon::ThreadPool>,
    clock: f64,
    steps: u64,
    persons: Vec<VehicleId>,
    by_person: HashMap<VehicleId, usize>,
    departures: Vec<f64>,
    profiles: Vec<VehicleProfile>,
    runtime: Vec<VehicleRuntime>,
    snapshot: Vec<VehicleSnapshot>,
    index: LaneIndex,
    signals: Vec<SignalState>,
    lights: Vec<Light>,
    turns: Vec<TurnSet>,
    lane_counts: Vec<u32>,
    exits: Vec<Vec<Exit>>,
    /// Vehicles not yet released, by `(departure, index)`.
    pending: Vec<usize>,
    controls: Vec<Control>,
    n_finished: usize,
    n_stranded: usize,
    n_driving: usize,
    tt_sum: f64,
    key: [u8; 32],
    entry_reach: f64,
}

impl Engine {
    pub fn new(net: RoadNetwork, trips: Vec<TripPlan>, cfg: EngineConfig) -> Result<Self, EngineError> {
        let v = validate_network(&net);
        if !v.is_empty() {
            return Err(EngineError::InvalidNetwork(v));
        }
        let v = validate_demand(&net, &trips);
        if !v.is_empty() {
            return Err(EngineError::InvalidDemand(v));
        }
        if cfg.workers == 0 {
            return Err(EngineError::NoWorkers);
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| EngineError::ThreadPool(e.to_string()))?;
        let mut runtime = Vec::with_capacity(trips.len());
        for t in &trips {
            let first = t.route[0];
            let last = *t.route.last().unwrap();
            let (lane, s) = TripPlan::resolve(&net, t.origin, first).expect("validated origin");
            let end = TripPlan::resolve(&net, t.destination, last).expect("validated destination");
            runtime.push(VehicleRuntime {
                status: Status::Pending,
                lane,
                s,
                v: 0.0,
                a: 0.0,
                cursor: 0,
                route: t.route.clone(),
                end,
                depart_t: t.departure,
                finish_t: 0.0,
                stranded: false,
                blinker: 0,
            });
        }
        let mut pending: Vec<usize> = (0..trips.len()).collect();
        pending.sort_by(|&a, &b| {
            trips[a]
                .departure
                .total_cmp(&trips[b].departure)
                .then(trips[a].person.cmp(&trips[b].person))
        });
        let mut exits = vec![Vec::new(); net.lanes.len()];
        for lane in net.lanes.iter().filter(|l| !l.is_junction_lane()) {
            for &j in &lane.successors {
                let jl = net.lane(j);
                if !jl.is_junction_lane() {
                    continue;
                }
                for &d in &jl.successors {
                    if let Some(r) = net.lane(d).road() {
                        exits[lane.id.idx()].push(Exit {
                            next_road: r,
                            via: j,
                            to: d,
                            turn: jl.turn,
                        });
                    }
                }
            }
        }
        let vmax = net.lanes.iter().map(|l| l.max_speed).fold(0.0, f64::max);
        let amax = trips.iter().map(|t| t.profile.a_max).fold(0.0, f64::max);
        let mut key = [0u8; 32];
        ChaCha8Rng::seed_from_u64(cfg.seed).fill_bytes(&mut key);
        let signals = net.junctions.iter().map(SignalState::new).collect();
        let n_lanes = net.lanes.len();
        let mut e = Self {
            index: LaneIndex::new(&net),
            signals,
            lights: vec![Light::Green; n_lanes],
            turns: vec![TurnSet::EMPTY; n_lanes],
            lane_counts: vec![0; n_lanes],
            exits,
            persons: trips.iter().map(|t| t.person).collect(),
            by_person: trips.iter().enumerate().map(|(i, t)| (t.person, i)).collect(),
            departures: trips.iter().map(|t| t.departure).collect(),
            profiles: trips.iter().map(|t| t.profile).collect(),
            snapshot: vec![VehicleSnapshot::default(); runtime.len()],
            runtime,
            pending,
            controls: Vec::new(),
            clock: cfg.start_time,
            steps: 0,
            n_finished: 0,
            n_stranded: 0,
            n_driving: 0,
            tt_sum: 0.0,
            key,
            entry_reach: vmax + amax / 2.0,
            pool: Arc::new(pool),
            cfg,
            net,
        };
        e.refresh_turns();
        Ok(e)
    }

    fn refresh_turns(&mut self) {
        for l in 0..self.net.lanes.len() {
            self.turns[l] = self.net.lane_turns(LaneId::from_idx(l));
        }
    }

    pub fn network(&self) -> &RoadNetwork {
        &self.net
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    /// Current simulated time, s.
    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn vehicle_count(&self) -> usize {
        self.runtime.len()
    }

    /// Advance the simulation by one step of `DT` seconds.
    pub fn step(&mut self) {
        let pool = Arc::clone(&self.pool);
        pool.install(|| {
            self.prepare();
            self.update();
        });
    }

    /// Step until the clock reaches `t` (no-op if already there).
    pub fn run_until(&mut self, t: f64) {
        while self.clock + 1e-9 < t {
            self.step();
        }
    }

    fn prepare(&mut self) {
        for c in std::mem::take(&mut self.controls) {
            self.apply_control(c);
        }
        self.snapshot
            .par_iter_mut()
            .zip(self.runtime.par_iter())
            .for_each(|(sn, rt)| {
                *sn = VehicleSnapshot {
                    lane: rt.lane,
                    s: rt.s,
                    v: rt.v,
                    blinker: rt.blinker,
                    driving: rt.status == Status::Driving,
                };
            });

        enum Op {
            Keep,
            Move(f64),
            Insert(LaneId, f64),
            Remove(LaneId),
            Transfer(LaneId, LaneId, f64),
        }
        let index = &self.index;
        let ops: Vec<Op> = self
            .snapshot
            .par_iter()
            .enumerate()
            .map(|(i, sn)| {
                let id = VehicleId::from_idx(i);
                match (index.position(id).ok(), sn.driving) {
                    (None, false) => Op::Keep,
                    (None, true) => Op::Insert(sn.lane, sn.s),
                    (Some((l, _)), false) => Op::Remove(l),
                    (Some((l, s)), true) if l == sn.lane => {
                        if s == sn.s {
                            Op::Keep
                        } else {
                            Op::Move(sn.s)
                        }
                    }
                    (Some((l, _)), true) => Op::Transfer(l, sn.lane, sn.s),
                }
            })
            .collect();
        let mut delta = IndexDelta::default();
        for (i, op) in ops.into_iter().enumerate() {
            let id = VehicleId::from_idx(i);
            match op {
                Op::Keep => {}
                Op::Move(s) => delta.moves.push((id, s)),
                Op::Insert(l, s) => delta.insertions.push((l, id, s)),
                Op::Remove(l) => delta.removals.push((l, id)),
                Op::Transfer(from, to, s) => {
                    delta.removals.push((from, id));
                    delta.insertions.push((to, id, s));
                }
            }
        }
        self.index
            .apply_delta(&delta)
            .expect("index delta derived from runtime state");

        let index = &self.index;
        self.lane_counts
            .par_iter_mut()
            .enumerate()
            .for_each(|(l, c)| *c = index.lane_vehicles(LaneId::from_idx(l)).len() as u32);

        for (j, sig) in self.net.junctions.iter().zip(&self.signals) {
            sig.replicate(j, &mut self.lights);
        }
    }

    fn update(&mut self) {
        let now_end = self.clock + DT;
        let ctx = vehicle::Ctx {
            net: &self.net,
            snap: &self.snapshot,
            index: &self.index,
            lights: &self.lights,
            turns: &self.turns,
            counts: &self.lane_counts,
            exits: &self.exits,
            profiles: &self.profiles,
            persons: &self.persons,
            key: self.key,
            step: self.steps,
            now_end,
            entry_reach: self.entry_reach,
        };
        let stuck: Vec<usize> = if self.cfg.reverse_update {
            let mut v = Vec::new();
            for (i, rt) in self.runtime.iter_mut().enumerate().rev() {
                if ctx.snap[i].driving && vehicle::update_vehicle(&ctx, i, rt) {
                    v.push(i);
                }
            }
            v.reverse();
            v
        } else {
            self.runtime
                .par_iter_mut()
                .enumerate()
                .filter(|(i, _)| ctx.snap[*i].driving)
                .filter_map(|(i, rt)| vehicle::update_vehicle(&ctx, i, rt).then_some(i))
                .collect()
        };
        if !stuck.is_empty() {
            self.reroute(&stuck);
        }

        for (i, rt) in self.runtime.iter().enumerate() {
            if self.snapshot[i].driving && rt.status == Status::Finished {
                self.n_driving -= 1;
                if rt.stranded {
                    self.n_stranded += 1;
                } else {
                    self.n_finished += 1;
                    self.tt_sum += rt.finish_t - rt.depart_t;
                }
            }
        }

        let counts = &self.lane_counts;
        let count = |l: LaneId| counts[l.idx()] as f64;
        for (j, sig) in self.net.junctions.iter().zip(self.signals.iter_mut()) {
            sig.advance(j, DT, self.cfg.max_pressure_period, || {
                max_pressure_choice(&self.net, j, &count)
            });
        }

        self.release();
        self.clock = now_end;
        self.steps += 1;
    }

    /// Send vehicles stuck in a lane that cannot serve their next turn
    /// along a movement the lane does allow, then on the shortest route to
    /// their destination road.
    fn reroute(&mut self, stuck: &[usize]) {
        let router = Router::new(&self.net, CostModel::FreeFlow);
        for &i in stuck {
            let rt = &self.runtime[i];
            let dest = *rt.route.last().unwrap();
            let turns = self.turns[rt.lane.idx()];
            let mut best: Option<(f64, Vec<RoadId>)> = None;
            for e in &self.exits[rt.lane.idx()] {
                if !turns.contains(e.turn) || self.net.lane(e.via).restricted || self.net.lane(e.to).restricted {
                    continue;
                }
                let Some(rest) = router.route(e.next_road, dest) else { continue };
                let cost = router.route_cost(&rest);
                let better = best
                    .as_ref()
                    .map_or(true, |(c, r)| compare_routes((cost, &rest), (*c, r)).is_lt());
                if better {
                    best = Some((cost, rest));
                }
            }
            if let Some((_, rest)) = best {
                let rt = &mut self.runtime[i];
                rt.route.truncate(rt.cursor + 1);
                rt.route.extend(rest);
                rt.blinker = 0;
            }
        }
    }

    /// Insert due vehicles at their origin gates when the gate is clear.
    fn release(&mut self) {
        let due = self
            .pending
            .partition_point(|&i| self.departures[i] <= self.clock + 1e-9);
        if due == 0 {
            return;
        }
        let mut lanes: BTreeMap<LaneId, Vec<(f64, f64, f64)>> = BTreeMap::new();
        for &i in &self.pending[..due] {
            lanes.entry(self.runtime[i].lane).or_default();
        }
        for (i, rt) in self.runtime.iter().enumerate() {
            if rt.status == Status::Driving {
                if let Some(list) = lanes.get_mut(&rt.lane) {
                    list.push((rt.s, self.profiles[i].length, rt.v));
                }
            }
        }
        for list in lanes.values_mut() {
            list.sort_by(|a, b| a.0.total_cmp(&b.0));
        }
        let mut used = vec![false; self.net.lanes.len()];
        let mut released = Vec::new();
        for (k, &i) in self.pending[..due].iter().enumerate() {
            let (lane, g) = (self.runtime[i].lane, self.runtime[i].s);
            if used[lane.idx()] {
                continue;
            }
            let p = &self.profiles[i];
            let list = &lanes[&lane];
            let at = list.partition_point(|x| x.0 < g);
            let front_ok = list
                .get(at)
                .map_or(true, |&(s, len, _)| s - len - g >= p.min_gap);
            let back_ok = at
                .checked_sub(1)
                .map_or(true, |b| g - p.length - list[b].0 >= p.min_gap + list[b].2);
            if front_ok && back_ok {
                used[lane.idx()] = true;
                released.push(k);
                let rt = &mut self.runtime[i];
                rt.status = Status::Driving;
                rt.v = 0.0;
                rt.a = 0.0;
                rt.cursor = 0;
                self.n_driving += 1;
            }
        }
        let mut keep = Vec::with_capacity(self.pending.len() - released.len());
        let mut r = released.into_iter().peekable();
        for (k, &i) in self.pending.iter().enumerate() {
            if r.peek() == Some(&k) {
                r.next();
            } else {
                keep.push(i);
            }
        }
        self.pending = keep;
    }

    // ---- control API -------------------------------------------------

    fn check_junction(&self, j: JunctionId) -> Result<(), EngineError> {
        if j.idx() < self.net.junctions.len() {
            Ok(())
        } else {
            Err(EngineError::UnknownJunction(j))
        }
    }

    fn check_lane(&self, l: LaneId) -> Result<(), EngineError> {
        if l.idx() < self.net.lanes.len() {
            Ok(())
        } else {
            Err(EngineError::UnknownLane(l))
        }
    }

    fn check_road(&self, r: RoadId) -> Result<(), EngineError> {
        if r.idx() < self.net.roads.len() {
            Ok(())
        } else {
            Err(EngineError::UnknownRoad(r))
        }
    }

    fn vehicle_index(&self, v: VehicleId) -> Result<usize, EngineError> {
        self.by_person
            .get(&v)
            .copied()
            .ok_or(EngineError::UnknownVehicle(v))
    }

    pub fn set_tl_policy(&mut self, j: JunctionId, policy: TlPolicy) -> Result<(), EngineError> {
        self.check_junction(j)?;
        self.controls.push(Control::Policy(j, policy));
        Ok(())
    }

    /// Select a phase; takes effect only under the MANUAL policy.
    pub fn set_tl_phase(&mut self, j: JunctionId, phase: usize) -> Result<(), EngineError> {
        self.check_junction(j)?;
        if phase >= self.net.junction(j).phases.len() {
            return Err(EngineError::PhaseOutOfRange { junction: j, phase });
        }
        self.controls.push(Control::Phase(j, phase));
        Ok(())
    }

    /// Set the remaining phase time; takes effect only under the MANUAL policy.
    pub fn set_tl_duration(&mut self, j: JunctionId, secs: f64) -> Result<(), EngineError> {
        self.check_junction(j)?;
        if !(secs >= 0.0) || !secs.is_finite() {
            return Err(EngineError::BadValue(secs));
        }
        self.controls.push(Control::Duration(j, secs));
        Ok(())
    }

    pub fn set_lane_max_speed(&mut self, l: LaneId, speed: f64) -> Result<(), EngineError> {
        self.check_lane(l)?;
        if !(speed > 0.0) || !speed.is_finite() {
            return Err(EngineError::BadValue(speed));
        }
        self.controls.push(Control::LaneSpeed(l, speed));
        Ok(())
    }

    pub fn set_lane_restriction(&mut self, l: LaneId, restricted: bool) -> Result<(), EngineError> {
        self.check_lane(l)?;
        self.controls.push(Control::Restriction(l, restricted));
        Ok(())
    }

    pub fn set_road_lane_plan(&mut self, r: RoadId, plan: usize) -> Result<(), EngineError> {
        self.check_road(r)?;
        if plan >= self.net.road(r).lane_plans.len() {
            return Err(EngineError::PlanOutOfRange { road: r, plan });
        }
        self.controls.push(Control::LanePlan(r, plan));
        Ok(())
    }

    pub fn set_road_toll(&mut self, r: RoadId, toll: f64) -> Result<(), EngineError> {
        self.check_road(r)?;
        if !(toll >= 0.0) || !toll.is_finite() {
            return Err(EngineError::BadValue(toll));
        }
        self.controls.push(Control::Toll(r, toll));
        Ok(())
    }

    /// Replace the remaining route of a vehicle.
    ///
    /// Pending vehicles must keep their first road. Driving vehicles must
    /// start the new route with their current road (or, inside a junction,
    /// with the road just left or the road being entered).
    pub fn set_vehicle_route(
        &mut self,
        v: VehicleId,
        route: Vec<RoadId>,
        end_lane: LaneId,
        end_s: f64,
    ) -> Result<(), EngineError> {
        let i = self.vehicle_index(v)?;
        let bad = |m: &str| Err(EngineError::BadRoute(m.to_string()));
        if route.is_empty() {
            return bad("empty route");
        }
        for r in &route {
            self.check_road(*r)?;
        }
        for w in route.windows(2) {
            if self.net.connections(w[0], w[1]).is_empty() {
                return bad(&format!("roads {} and {} are not connected", w[0], w[1]));
            }
        }
        self.check_lane(end_lane)?;
        let el = self.net.lane(end_lane);
        if el.road() != route.last().copied() || !(0.0..=el.length).contains(&end_s) {
            return bad("end point is not on the last road");
        }
        let rt = &self.runtime[i];
        match rt.status {
            Status::Finished => return bad("vehicle has finished"),
            Status::Pending if route[0] != rt.route[0] => return bad("must start on the origin road"),
            Status::Driving => {
                let cur = rt.route[rt.cursor];
                let lane = self.net.lane(rt.lane);
                let ok = if lane.is_junction_lane() {
                    let entering = self.net.lane(lane.successors[0]).road();
                    route[0] == cur && route.get(1).copied() == entering || Some(route[0]) == entering
                } else {
                    route[0] == cur
                };
                if !ok {
                    return bad("must start on the vehicle's current road");
                }
            }
            Status::Pending => {}
        }
        self.controls.push(Control::Route(i, route, (end_lane, end_s)));
        Ok(())
    }

    fn apply_control(&mut self, c: Control) {
        match c {
            Control::Policy(j, p) => {
                let junc = &self.net.junctions[j.idx()];
                self.signals[j.idx()].set_policy(junc, p);
            }
            Control::Phase(j, p) => self.signals[j.idx()].set_phase(p),
            Control::Duration(j, d) => self.signals[j.idx()].set_duration(d),
            Control::LaneSpeed(l, v) => self.net.lanes[l.idx()].max_speed = v,
            Control::Restriction(l, f) => self.net.lanes[l.idx()].restricted = f,
            Control::LanePlan(r, p) => {
                self.net.roads[r.idx()].active_plan = p;
                for &l in &self.net.roads[r.idx()].lanes {
                    self.turns[l.idx()] = self.net.lane_turns(l);
                }
            }
            Control::Toll(r, t) => self.net.roads[r.idx()].toll = t,
            Control::Route(i, route, end) => {
                let rt = &mut self.runtime[i];
                if rt.status == Status::Pending {
                    rt.route = route;
                } else {
                    let c = rt.cursor;
                    let keep = if route[0] == rt.route[c] { c } else { c + 1 };
                    rt.route.truncate(keep);
                    rt.route.extend(route);
                }
                rt.end = end;
            }
        }
    }

    // ---- metrics and getters ----------------------------------------

    /// `(pending, driving, finished)` counts; finished includes stranded.
    pub fn status_counts(&self) -> (usize, usize, usize) {
        let done = self.n_finished + self.n_stranded;
        (self.runtime.len() - self.n_driving - done, self.n_driving, done)
    }

    /// Vehicles that completed their trip (stranded ones excluded).
    pub fn finished_count(&self) -> usize {
        self.n_finished
    }

    pub fn stranded_count(&self) -> usize {
        self.n_stranded
    }

    /// Mean travel time from planned departure to arrival over completed
    /// trips; 0 when none completed.
    pub fn avg_traveling_time(&self) -> f64 {
        if self.n_finished == 0 {
            0.0
        } else {
            self.tt_sum / self.n_finished as f64
        }
    }

    /// Driving vehicles per lane.
    pub fn lane_vehicle_counts(&self) -> Vec<u32> {
        let mut out = vec![0; self.net.lanes.len()];
        for rt in self.runtime.iter().filter(|r| r.status == Status::Driving) {
            out[rt.lane.idx()] += 1;
        }
        out
    }

    /// Vehicles slower than 0.1 m/s within the last 100 m of their lane.
    pub fn lane_waiting_counts(&self) -> Vec<u32> {
        let mut out = vec![0; self.net.lanes.len()];
        for rt in self.runtime.iter().filter(|r| r.status == Status::Driving) {
            let len = self.net.lane(rt.lane).length;
            if rt.v < crate::models::STOP_SPEED && rt.s >= len - QUEUE_ZONE {
                out[rt.lane.idx()] += 1;
            }
        }
        out
    }

    /// Mean snapshot speed of vehicles on each road; free-flow speed when
    /// empty.
    pub fn road_avg_speed(&self) -> Vec<f64> {
        let n = self.net.roads.len();
        let mut sum = vec![0.0; n];
        let mut cnt = vec![0usize; n];
        for sn in self.snapshot.iter().filter(|s| s.driving) {
            if let Some(r) = self.net.lane(sn.lane).road() {
                sum[r.idx()] += sn.v;
                cnt[r.idx()] += 1;
            }
        }
        (0..n)
            .map(|r| {
                if cnt[r] == 0 {
                    self.net.road_max_speed(RoadId::from_idx(r))
                } else {
                    sum[r] / cnt[r] as f64
                }
            })
            .collect()
    }

    /// `(vehicle, speed)` of every driving vehicle, by vehicle id.
    pub fn vehicle_speeds(&self) -> Vec<(VehicleId, f64)> {
        self.driving_iter().map(|(p, rt)| (p, rt.v)).collect()
    }

    /// `(vehicle, lane, s)` of every driving vehicle, by vehicle id.
    pub fn vehicle_positions(&self) -> Vec<(VehicleId, LaneId, f64)> {
        self.driving_iter().map(|(p, rt)| (p, rt.lane, rt.s)).collect()
    }

    fn driving_iter(&self) -> impl Iterator<Item = (VehicleId, &VehicleRuntime)> {
        let mut order: Vec<usize> = (0..self.runtime.len())
            .filter(|i| self.runtime[*i].status == Status::Driving)
            .collect();
        order.sort_by_key(|i| self.persons[*i]);
        order.into_iter().map(|i| (self.persons[i], &self.runtime[i]))
    }

    pub fn vehicle(&self, v: VehicleId) -> Option<&VehicleRuntime> {
        self.by_person.get(&v).map(|i| &self.runtime[*i])
    }

    pub fn vehicle_profile(&self, v: VehicleId) -> Option<&VehicleProfile> {
        self.by_person.get(&v).map(|i| &self.profiles[*i])
    }

    /// All vehicle ids in input order.
    pub fn vehicle_ids(&self) -> &[VehicleId] {
        &self.persons
    }

    /// Pending vehicles in release order, with their planned departure.
    pub fn pending_vehicles(&self) -> Vec<(VehicleId, f64)> {
        self.pending
            .iter()
            .map(|i| (self.persons[*i], self.departures[*i]))
            .collect()
    }

    /// Lane lights as replicated at the last prepare phase.
    pub fn lane_lights(&self) -> &[Light] {
        &self.lights
    }

    /// Snapshot of the last prepare phase, as `(vehicle, snapshot)`.
    pub fn snapshots(&self) -> Vec<(VehicleId, VehicleSnapshot)> {
        self.persons.iter().copied().zip(self.snapshot.iter().copied()).collect()
    }

    pub fn lane_index(&self) -> &LaneIndex {
        &self.index
    }

    /// Map an index node id back to its vehicle id.
    pub fn index_vehicle(&self, node: VehicleId) -> VehicleId {
        self.persons[node.idx()]
    }

    pub fn signal_state(&self, j: JunctionId) -> Option<&SignalState> {
        self.signals.get(j.idx())
    }

    /// Per road, how many driving vehicles on it will next turn
    /// `[straight, left, right]`.
    pub fn turn_demand(&self) -> Vec<[u32; 3]> {
        let mut out = vec![[0u32; 3]; self.net.roads.len()];
        for rt in self.runtime.iter().filter(|r| r.status == Status::Driving) {
            let Some(road) = self.net.lane(rt.lane).road() else { continue };
            let Some(&next) = rt.route.get(rt.cursor + 1) else { continue };
            if let Some(e) = self.exits[rt.lane.idx()]
                .iter()
                .chain(self.net.road(road).lanes.iter().flat_map(|l| self.exits[l.idx()].iter()))
                .find(|e| e.next_road == next)
            {
                let k = match e.turn {
                    Turn::Straight => 0,
                    Turn::Left => 1,
                    Turn::Right => 2,
                };
                out[road.idx()][k] += 1;
            }
        }
        out
    }

    /// Per road, how many unfinished vehicles still have it on their
    /// route (pending vehicles count their whole route).
    pub fn road_remaining_demand(&self) -> Vec<u32> {
        let mut out = vec![0u32; self.net.roads.len()];
        for rt in &self.runtime {
            let from = match rt.status {
                Status::Finished => continue,
                Status::Pending => 0,
                Status::Driving => rt.cursor,
            };
            for r in &rt.route[from..] {
                out[r.idx()] += 1;
            }
        }
        out
    }

    pub fn sample(&self) -> ReportSample {
        let (pending, driving, _) = self.status_counts();
        ReportSample {
            t: self.clock,
            att: self.avg_traveling_time(),
            tp: self.n_finished,
            driving,
            pending,
            stranded: self.n_stranded,
        }
    }
}
