//! Helpers shared by the integration test targets.
#![allow(dead_code)]

pub mod oracle;

use std::collections::HashMap;

use microflow::engine::{Engine, Status};
use microflow::ids::{LaneId, VehicleId};
use microflow::netmodel::Light;

/// Per-step safety checker. Call `before` ahead of each `step` and
/// `after` once it returns.
#[derive(Default)]
pub struct SafetyChecker {
    pre: HashMap<VehicleId, (LaneId, f64)>,
    pub steps: usize,
    pub violations: Vec<String>,
}

impl SafetyChecker {
    pub fn before(&mut self, e: &Engine) {
        self.pre = e
            .vehicle_positions()
            .into_iter()
            .map(|(v, l, s)| (v, (l, s)))
            .collect();
    }

    pub fn after(&mut self, e: &Engine) {
        self.steps += 1;
        let t = e.clock();
        let net = e.network();
        let total = e.vehicle_count();
        let (p, d, f) = e.status_counts();
        let recount = e.vehicle_ids().iter().fold([0usize; 3], |mut c, v| {
            match e.vehicle(*v).unwrap().status {
                Status::Pending => c[0] += 1,
                Status::Driving => c[1] += 1,
                Status::Finished => c[2] += 1,
            }
            c
        });
        if p + d + f != total || [p, d, f] != recount {
            self.violations
                .push(format!("t={t}: conservation {p}+{d}+{f} vs {total} ({recount:?})"));
        }

        let post = e.vehicle_positions();
        let mut lanes: HashMap<LaneId, Vec<(f64, VehicleId)>> = HashMap::new();
        for &(v, l, s) in &post {
            lanes.entry(l).or_default().push((s, v));
            let len = net.lane(l).length;
            if !(0.0..=len).contains(&s) {
                self.violations.push(format!("t={t}: vehicle {v} at s={s} outside lane {l}"));
            }
        }
        for (l, list) in lanes.iter_mut() {
            list.sort_by(|a, b| a.0.total_cmp(&b.0));
            for w in list.windows(2) {
                let len = e.vehicle_profile(w[1].1).unwrap().length;
                let gap = w[1].0 - len - w[0].0;
                if gap < 0.0 {
                    self.violations
                        .push(format!("t={t}: lane {l} gap {gap} between {} and {}", w[0].1, w[1].1));
                }
            }
        }

        // Order of vehicles that stayed in their lane.
        let mut stayed: HashMap<LaneId, Vec<(f64, f64, VehicleId)>> = HashMap::new();
        for &(v, l, s) in &post {
            if let Some(&(l0, s0)) = self.pre.get(&v) {
                if l0 == l {
                    stayed.entry(l).or_default().push((s0, s, v));
                }
            }
        }
        for (l, list) in stayed.iter_mut() {
            list.sort_by(|a, b| a.0.total_cmp(&b.0));
            for w in list.windows(2) {
                if w[0].1 >= w[1].1 {
                    self.violations
                        .push(format!("t={t}: {} overtook {} on lane {l}", w[0].2, w[1].2));
                }
            }
        }

        let lights = e.lane_lights();
        for &(v, l, _) in &post {
            let Some(&(l0, _)) = self.pre.get(&v) else { continue };
            let from = net.lane(l0);
            if l0 == l || from.is_junction_lane() || net.lane(l).road() == from.road() {
                continue;
            }
            let to = net.lane(l);
            let crossed: Vec<LaneId> = if to.is_junction_lane() {
                vec![l]
            } else {
                from.successors
                    .iter()
                    .copied()
                    .filter(|j| to.predecessors.contains(j))
                    .collect()
            };
            if crossed.is_empty() {
                self.violations.push(format!("t={t}: {v} jumped from {l0} to {l}"));
            }
            for j in crossed {
                if lights[j.idx()] == Light::Red {
                    self.violations.push(format!("t={t}: {v} ran the red on {j}"));
                }
            }
        }

        let idx = e.lane_index();
        let snaps = e.snapshots();
        let driving = snaps.iter().filter(|(_, s)| s.driving).count();
        if idx.len() != driving {
            self.violations
                .push(format!("t={t}: index holds {} of {driving} vehicles", idx.len()));
        }
        for (k, (v, s)) in snaps.iter().enumerate() {
            if s.driving && idx.position(VehicleId::from_idx(k)).ok() != Some((s.lane, s.s)) {
                self.violations.push(format!("t={t}: index disagrees for {v}"));
            }
        }
    }

    /// Step `e` `n` times, checking after each step.
    pub fn run(&mut self, e: &mut Engine, n: usize) {
        for _ in 0..n {
            self.before(e);
            e.step();
            self.after(e);
        }
    }
}

/// Run report of a full simulation, sampled every `every` steps.
pub fn report(e: &mut Engine, steps: usize, every: usize) -> String {
    use microflow::engine::{final_line, report_line};
    let mut out = String::new();
    for k in 1..=steps {
        e.step();
        if k % every == 0 {
            out.push_str(&report_line(&e.sample()));
            out.push('\n');
        }
    }
    out.push_str(&final_line(&e.sample()));
    out.push('\n');
    out
}
