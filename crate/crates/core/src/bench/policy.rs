//! Non-learning baselines.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Action, EnvView, LaneDir, ScenarioKind, TidalDir};
use crate::engine::max_pressure_choice;
use crate::ids::{JunctionId, LaneId, RoadId};
use crate::netmodel::Light;
use crate::routing::DEFAULT_VALUE_OF_TIME;

pub const POLICY_NAMES: [&str; 6] = ["fixed", "maxpressure", "random", "rule", "nochange", "deltatoll"];

pub trait Policy {
    fn name(&self) -> &'static str;

    /// Whether the signal scenario hands junctions to this policy (MANUAL).
    fn manual_signals(&self) -> bool {
        false
    }

    fn act(&mut self, env: &EnvView) -> Action;
}

/// Build a baseline by name; `seed` feeds the random policy.
pub fn policy_by_name(name: &str, seed: u64) -> Option<Box<dyn Policy>> {
    Some(match name {
        "fixed" => Box::new(FixedTime),
        "maxpressure" => Box::new(MaxPressure),
        "random" => Box::new(RandomPolicy::new(seed)),
        "rule" => Box::new(Rule),
        "nochange" => Box::new(NoChange),
        "deltatoll" => Box::new(DeltaToll::default()),
        _ => return None,
    })
}

/// Keeps each junction's fixed-time program.
pub struct FixedTime;

impl Policy for FixedTime {
    fn name(&self) -> &'static str {
        "fixed"
    }

    fn act(&mut self, _: &EnvView) -> Action {
        Action::Keep
    }
}

/// Leaves every setting as it is.
pub struct NoChange;

impl Policy for NoChange {
    fn name(&self) -> &'static str {
        "nochange"
    }

    fn act(&mut self, _: &EnvView) -> Action {
        Action::Keep
    }
}

/// Phase with the largest pressure from observed lane counts.
pub struct MaxPressure;

impl Policy for MaxPressure {
    fn name(&self) -> &'static str {
        "maxpressure"
    }

    fn manual_signals(&self) -> bool {
        true
    }

    fn act(&mut self, env: &EnvView) -> Action {
        if env.spec.kind != ScenarioKind::Signal {
            return Action::Keep;
        }
        let net = env.engine.network();
        Action::Phases(
            env.observations
                .iter()
                .map(|o| {
                    let count = |l: LaneId| {
                        o.lanes
                            .iter()
                            .find(|x| x.lane == l)
                            .map_or(0.0, |x| x.vehicles as f64)
                    };
                    max_pressure_choice(net, net.junction(JunctionId(o.entity)), &count)
                })
                .collect(),
        )
    }
}

/// Uniform random action per entity and period.
pub struct RandomPolicy {
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl Policy for RandomPolicy {
    fn name(&self) -> &'static str {
        "random"
    }

    fn manual_signals(&self) -> bool {
        true
    }

    fn act(&mut self, env: &EnvView) -> Action {
        let net = env.engine.network();
        let ids = &env.spec.entities;
        match env.spec.kind {
            ScenarioKind::Signal => Action::Phases(
                ids.iter()
                    .map(|j| self.rng.gen_range(0..net.junctions[*j as usize].phases.len()))
                    .collect(),
            ),
            ScenarioKind::DynamicLane => Action::LaneDirs(
                ids.iter()
                    .map(|_| if self.rng.gen::<bool>() { LaneDir::Left } else { LaneDir::Straight })
                    .collect(),
            ),
            ScenarioKind::Tidal => Action::TidalDirs(
                ids.iter()
                    .map(|_| if self.rng.gen::<bool>() { TidalDir::Backward } else { TidalDir::Forward })
                    .collect(),
            ),
            ScenarioKind::Pricing => Action::Tolls(ids.iter().map(|_| self.rng.gen::<f64>()).collect()),
            ScenarioKind::RoadPlan => Action::Keep,
        }
    }
}

/// Serve the larger demand: the phase with most waiting vehicles on its
/// green approaches, or the lane/tidal direction with more vehicles.
/// Ties keep the current setting.
pub struct Rule;

impl Policy for Rule {
    fn name(&self) -> &'static str {
        "rule"
    }

    fn manual_signals(&self) -> bool {
        true
    }

    fn act(&mut self, env: &EnvView) -> Action {
        let net = env.engine.network();
        match env.spec.kind {
            ScenarioKind::Signal => Action::Phases(
                env.observations
                    .iter()
                    .map(|o| {
                        let j = net.junction(JunctionId(o.entity));
                        let score = |p: usize| -> u32 {
                            let mut lanes: Vec<LaneId> = j
                                .lanes
                                .iter()
                                .filter(|l| j.phases[p].state(**l) == Light::Green)
                                .flat_map(|l| net.lane(*l).predecessors.clone())
                                .collect();
                            lanes.sort_unstable();
                            lanes.dedup();
                            lanes
                                .iter()
                                .filter_map(|l| o.lanes.iter().find(|x| x.lane == *l))
                                .map(|x| x.waiting)
                                .sum()
                        };
                        let mut best = o.current;
                        let mut best_s = score(best);
                        for p in 0..j.phases.len() {
                            let s = score(p);
                            if s > best_s {
                                best = p;
                                best_s = s;
                            }
                        }
                        best
                    })
                    .collect(),
            ),
            ScenarioKind::DynamicLane => Action::LaneDirs(
                env.observations
                    .iter()
                    .map(|o| rule_lane_dir(o.turn_demand[1], o.turn_demand[0], o.current))
                    .collect(),
            ),
            ScenarioKind::Tidal => Action::TidalDirs(
                env.observations
                    .iter()
                    .map(|o| {
                        let fwd: u32 = o.lanes.iter().filter(|l| l.incoming).map(|l| l.vehicles).sum();
                        let bwd: u32 = o.lanes.iter().filter(|l| !l.incoming).map(|l| l.vehicles).sum();
                        match fwd.cmp(&bwd) {
                            std::cmp::Ordering::Greater => TidalDir::Forward,
                            std::cmp::Ordering::Less => TidalDir::Backward,
                            std::cmp::Ordering::Equal if o.current == 0 => TidalDir::Forward,
                            std::cmp::Ordering::Equal => TidalDir::Backward,
                        }
                    })
                    .collect(),
            ),
            ScenarioKind::Pricing | ScenarioKind::RoadPlan => Action::Keep,
        }
    }
}

/// LEFT when more vehicles are left-bound than straight-bound, STRAIGHT
/// when fewer; ties keep `current` (plan 1 is LEFT).
pub fn rule_lane_dir(left: u32, straight: u32, current: usize) -> LaneDir {
    match left.cmp(&straight) {
        std::cmp::Ordering::Greater => LaneDir::Left,
        std::cmp::Ordering::Less => LaneDir::Straight,
        std::cmp::Ordering::Equal if current == 1 => LaneDir::Left,
        std::cmp::Ordering::Equal => LaneDir::Straight,
    }
}

/// Jam speed, m/s: slower roads are priced as if moving at this speed, which
/// caps the observed travel time of a road of stopped vehicles.
pub const JAM_SPEED: f64 = 5.0;

/// Δ-toll for one road: `beta * max(0, observed - free-flow travel time)`.
pub fn delta_toll(beta: f64, length: f64, avg_speed: f64, free_speed: f64) -> f64 {
    let observed = length / avg_speed.max(JAM_SPEED);
    beta * (observed - length / free_speed).max(0.0)
}

/// Tolls proportional to the current delay on each road.
pub struct DeltaToll {
    pub beta: f64,
}

impl Default for DeltaToll {
    /// Gain at which the perceived toll equals the delay in seconds.
    fn default() -> Self {
        Self { beta: 1.0 / DEFAULT_VALUE_OF_TIME }
    }
}

impl Policy for DeltaToll {
    fn name(&self) -> &'static str {
        "deltatoll"
    }

    fn act(&mut self, env: &EnvView) -> Action {
        if env.spec.kind != ScenarioKind::Pricing {
            return Action::Keep;
        }
        let net = env.engine.network();
        Action::Tolls(
            env.observations
                .iter()
                .map(|o| {
                    let r = RoadId(o.entity);
                    delta_toll(self.beta, net.road_length(r), o.avg_speed, net.road_max_speed(r))
                })
                .collect(),
        )
    }
}
