//! Signal controller state per junction.

use crate::ids::LaneId;
use crate::netmodel::{Junction, Light, RoadNetwork, TlPolicy};

/// Yellow time inserted whenever the active phase changes, s.
pub const YELLOW_TIME: f64 = 3.0;

const EPS: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct SignalState {
    pub policy: TlPolicy,
    /// Index of the active phase.
    pub phase: usize,
    /// Time left in the current phase (fixed-time), until the next
    /// max-pressure decision, or as set by the controller (manual), s.
    pub remaining: f64,
    program_pos: usize,
    yellow_left: f64,
    from_phase: Option<usize>,
}

impl SignalState {
    pub fn new(j: &Junction) -> Self {
        let mut s = Self {
            policy: j.policy,
            phase: 0,
            remaining: 0.0,
            program_pos: 0,
            yellow_left: 0.0,
            from_phase: None,
        };
        if let (TlPolicy::FixedTime, Some(&(p, d))) = (j.policy, j.fixed_program.first()) {
            s.phase = p;
            s.remaining = d;
        }
        s
    }

    pub fn in_yellow(&self) -> bool {
        self.from_phase.is_some()
    }

    fn switch_to(&mut self, phase: usize) {
        if phase != self.phase {
            // A switch during yellow keeps clearing the phase that was green.
            if self.from_phase.is_none() {
                self.from_phase = Some(self.phase);
            }
            self.yellow_left = YELLOW_TIME;
            self.phase = phase;
        }
    }

    /// Manual phase change; ignored unless the policy is MANUAL.
    pub fn set_phase(&mut self, phase: usize) {
        if self.policy == TlPolicy::Manual {
            self.switch_to(phase);
        }
    }

    /// Manual duration change; ignored unless the policy is MANUAL.
    pub fn set_duration(&mut self, secs: f64) {
        if self.policy == TlPolicy::Manual {
            self.remaining = secs;
        }
    }

    pub fn set_policy(&mut self, j: &Junction, policy: TlPolicy) {
        self.policy = policy;
        match policy {
            TlPolicy::FixedTime => {
                if let Some(pos) = j.fixed_program.iter().position(|(p, _)| *p == self.phase) {
                    self.program_pos = pos;
                    self.remaining = j.fixed_program[pos].1;
                } else if let Some(&(p, d)) = j.fixed_program.first() {
                    self.program_pos = 0;
                    self.switch_to(p);
                    self.remaining = d;
                }
            }
            TlPolicy::MaxPressure => self.remaining = 0.0,
            TlPolicy::Manual => {}
            TlPolicy::None => {
                self.from_phase = None;
                self.yellow_left = 0.0;
            }
        }
    }

    /// Write the light of every junction lane into `out` (indexed by lane).
    pub fn replicate(&self, j: &Junction, out: &mut [Light]) {
        if self.policy == TlPolicy::None || j.phases.is_empty() {
            for l in &j.lanes {
                out[l.idx()] = Light::Green;
            }
            return;
        }
        let now = &j.phases[self.phase];
        for &l in &j.lanes {
            let st = now.state(l);
            out[l.idx()] = match self.from_phase {
                None => st,
                Some(f) => match (j.phases[f].state(l), st) {
                    (Light::Green, Light::Green) => Light::Green,
                    (Light::Green, _) => Light::Yellow,
                    _ => Light::Red,
                },
            };
        }
    }

    /// Advance the controller by `dt`. `pressure` gives the max-pressure
    /// choice when one is due.
    pub fn advance(&mut self, j: &Junction, dt: f64, mp_period: f64, pressure: impl FnOnce() -> usize) {
        if self.from_phase.is_some() {
            self.yellow_left -= dt;
            if self.yellow_left <= EPS {
                self.yellow_left = 0.0;
                self.from_phase = None;
            }
        }
        if j.phases.is_empty() {
            return;
        }
        match self.policy {
            TlPolicy::FixedTime => {
                if j.fixed_program.is_empty() {
                    return;
                }
                self.remaining -= dt;
                if self.remaining <= EPS {
                    self.program_pos = (self.program_pos + 1) % j.fixed_program.len();
                    let (p, d) = j.fixed_program[self.program_pos];
                    self.switch_to(p);
                    self.remaining = d;
                }
            }
            TlPolicy::MaxPressure => {
                self.remaining -= dt;
                if self.remaining <= EPS {
                    self.switch_to(pressure());
                    self.remaining = mp_period;
                }
            }
            TlPolicy::Manual => self.remaining = (self.remaining - dt).max(0.0),
            TlPolicy::None => {}
        }
    }
}

/// Pressure of one phase: over its GREEN movements, upstream lane count
/// minus downstream lane count.
pub fn phase_pressure(net: &RoadNetwork, j: &Junction, phase: usize, count: &dyn Fn(LaneId) -> f64) -> f64 {
    let ph = &j.phases[phase];
    j.lanes
        .iter()
        .filter(|l| ph.state(**l) == Light::Green)
        .map(|l| {
            let lane = net.lane(*l);
            let up: f64 = lane.predecessors.iter().map(|p| count(*p)).sum();
            let down: f64 = lane.successors.iter().map(|s| count(*s)).sum();
            up - down
        })
        .sum()
}

/// Phase with the largest pressure; ties go to the lowest index.
pub fn max_pressure_choice(net: &RoadNetwork, j: &Junction, count: &dyn Fn(LaneId) -> f64) -> usize {
    let mut best = 0;
    let mut best_p = f64::NEG_INFINITY;
    for p in 0..j.phases.len() {
        let v = phase_pressure(net, j, p, count);
        if v > best_p {
            best = p;
            best_p = v;
        }
    }
    best
}
