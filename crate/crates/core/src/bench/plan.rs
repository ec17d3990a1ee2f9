//! One-shot road planning: pick which candidate roads to build under a
//! budget, scored by the mean travel time over a morning and an evening run.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::engine::{Engine, EngineConfig, EngineError};
use crate::ids::RoadId;
use crate::netmodel::{RoadNetwork, TripPlan};
use crate::routing::{CostModel, Router};

/// Initial temperature as a fraction of the initial objective.
pub const T0_FRACTION: f64 = 0.05;
pub const COOLING: f64 = 0.95;

/// One simulated peak: its trips and `[start, end)` horizon.
#[derive(Clone, Debug)]
pub struct Peak {
    pub trips: Vec<TripPlan>,
    pub horizon: (f64, f64),
}

#[derive(Clone, Debug)]
pub struct PlanProblem {
    /// Network with every candidate built.
    pub net: RoadNetwork,
    pub candidates: Vec<RoadId>,
    /// Probe vehicle count of each candidate.
    pub flow: Vec<u32>,
    /// Maximum number of candidates kept.
    pub budget: usize,
    pub peaks: Vec<Peak>,
    pub cfg: EngineConfig,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlanScore {
    /// Mean ATT over the peaks; the objective.
    pub att: f64,
    /// Mean finished count over the peaks.
    pub tp: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlanOutcome {
    pub keep: Vec<bool>,
    pub score: PlanScore,
    pub evaluations: usize,
}

impl PlanProblem {
    /// The network with removed candidates closed to traffic.
    pub fn network_for(&self, keep: &[bool]) -> RoadNetwork {
        let mut net = self.net.clone();
        for (r, k) in self.candidates.iter().zip(keep) {
            if !k {
                for l in net.roads[r.idx()].lanes.clone() {
                    net.lanes[l.idx()].restricted = true;
                }
            }
        }
        net
    }

    pub fn kept(keep: &[bool]) -> usize {
        keep.iter().filter(|k| **k).count()
    }

    /// Simulate both peaks with every trip on its free-flow shortest route.
    pub fn evaluate(&self, keep: &[bool]) -> Result<PlanScore, EngineError> {
        let net = self.network_for(keep);
        let router = Router::new(&net, CostModel::FreeFlow);
        let mut att = 0.0;
        let mut tp = 0.0;
        for peak in &self.peaks {
            let trips: Vec<TripPlan> = peak
                .trips
                .iter()
                .map(|t| {
                    let mut t = t.clone();
                    if let Some(r) = router.route(t.route[0], *t.route.last().unwrap()) {
                        t.route = r;
                    }
                    t
                })
                .collect();
            let mut e = Engine::new(net.clone(), trips, EngineConfig { start_time: peak.horizon.0, ..self.cfg.clone() })?;
            e.run_until(peak.horizon.1);
            att += e.avg_traveling_time();
            tp += e.finished_count() as f64;
        }
        let n = self.peaks.len().max(1) as f64;
        Ok(PlanScore { att: att / n, tp: tp / n })
    }

    /// Candidate order by descending probe flow, ties by road id.
    fn by_flow(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.candidates.len()).collect();
        idx.sort_by(|a, b| self.flow[*b].cmp(&self.flow[*a]).then(self.candidates[*a].cmp(&self.candidates[*b])));
        idx
    }

    /// Keep the `budget` highest-flow candidates.
    pub fn initial(&self) -> Vec<bool> {
        let mut keep = vec![false; self.candidates.len()];
        for i in self.by_flow().into_iter().take(self.budget) {
            keep[i] = true;
        }
        keep
    }

    /// Drop the lowest-flow kept candidates until the budget holds,
    /// `protect` last.
    pub fn repair(&self, keep: &mut [bool], protect: usize) {
        let mut order = self.by_flow();
        order.retain(|i| *i != protect);
        order.insert(0, protect);
        for &i in order.iter().rev() {
            if Self::kept(keep) <= self.budget {
                break;
            }
            keep[i] = false;
        }
    }
}

/// Simulated annealing over single flips; returns the best vector seen
/// after `evaluations` objective evaluations (at least one).
pub fn anneal(p: &PlanProblem, evaluations: usize, seed: u64) -> Result<PlanOutcome, EngineError> {
    anneal_with(p, evaluations, seed, |k| p.evaluate(k))
}

/// [`anneal`] with a caller-supplied objective. Repeated vectors are
/// served from a cache but still count as evaluations.
pub fn anneal_with<E>(
    p: &PlanProblem,
    evaluations: usize,
    seed: u64,
    mut objective: impl FnMut(&[bool]) -> Result<PlanScore, E>,
) -> Result<PlanOutcome, E> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut memo: HashMap<Vec<bool>, PlanScore> = HashMap::new();
    let mut eval = |k: &[bool]| -> Result<PlanScore, E> {
        if let Some(s) = memo.get(k) {
            return Ok(*s);
        }
        let s = objective(k)?;
        memo.insert(k.to_vec(), s);
        Ok(s)
    };
    let mut cur = p.initial();
    let mut cur_s = eval(&cur)?;
    let mut best = (cur.clone(), cur_s);
    let mut used = 1;
    let n = p.candidates.len();
    let mut temp = if cur_s.att > 0.0 { T0_FRACTION * cur_s.att } else { 1.0 };
    while used < evaluations && n > 0 {
        let k = rng.gen_range(0..n);
        let mut cand = cur.clone();
        cand[k] = !cand[k];
        p.repair(&mut cand, k);
        let s = eval(&cand)?;
        used += 1;
        let delta = s.att - cur_s.att;
        let u: f64 = rng.gen();
        if delta <= 0.0 || u < (-delta / temp).exp() {
            cur = cand;
            cur_s = s;
            if cur_s.att < best.1.att {
                best = (cur.clone(), cur_s);
            }
        }
        temp *= COOLING;
    }
    Ok(PlanOutcome { keep: best.0, score: best.1, evaluations: used })
}

/// Evaluate every within-budget vector; ties keep the first in ascending
/// bitmask order.
pub fn exhaustive(p: &PlanProblem) -> Result<PlanOutcome, EngineError> {
    exhaustive_with(p, |k| p.evaluate(k))
}

pub fn exhaustive_with<E>(
    p: &PlanProblem,
    mut objective: impl FnMut(&[bool]) -> Result<PlanScore, E>,
) -> Result<PlanOutcome, E> {
    let n = p.candidates.len();
    assert!(n < 24, "exhaustive search over {n} candidates");
    let mut best: Option<(Vec<bool>, PlanScore)> = None;
    let mut used = 0;
    for mask in 0u32..(1 << n) {
        let keep: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
        if PlanProblem::kept(&keep) > p.budget {
            continue;
        }
        let s = objective(&keep)?;
        used += 1;
        if best.as_ref().map_or(true, |b| s.att < b.1.att) {
            best = Some((keep, s));
        }
    }
    let (keep, score) = best.expect("the empty plan is always within budget");
    Ok(PlanOutcome { keep, score, evaluations: used })
}

/// Policies accepted by the road planning scenario.
pub const PLAN_POLICY_NAMES: [&str; 4] = ["nochange", "rule", "random", "sa"];

/// Solve `p` with a named policy: `nochange` builds nothing, `rule` keeps the
/// top-flow candidates, `random` a uniform subset of `budget` candidates and
/// `sa` anneals with `evaluations` evaluations. `None` for unknown names.
pub fn solve_plan(
    p: &PlanProblem,
    policy: &str,
    seed: u64,
    evaluations: usize,
) -> Option<Result<PlanOutcome, EngineError>> {
    let fixed = |keep: Vec<bool>| p.evaluate(&keep).map(|score| PlanOutcome { keep, score, evaluations: 1 });
    Some(match policy {
        "nochange" => fixed(vec![false; p.candidates.len()]),
        "rule" => fixed(p.initial()),
        "random" => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut keep = vec![false; p.candidates.len()];
            for i in rand::seq::index::sample(&mut rng, keep.len(), p.budget.min(keep.len())) {
                keep[i] = true;
            }
            fixed(keep)
        }
        "sa" => anneal(p, evaluations, seed),
        _ => return None,
    })
}
