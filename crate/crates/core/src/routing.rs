//! Shortest-travel-time routing over the road graph.
//!
//! Nodes are roads; an edge `A -> B` exists when some unrestricted junction
//! lane joins an unrestricted lane of `A` to an unrestricted lane of `B`.
//! A route's cost is the sum over its roads of `length / max_speed`, plus
//! `toll * value_of_time` under the toll-aware model.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use thiserror::Error;

use crate::ids::{LaneId, RoadId};
use crate::netmodel::RoadNetwork;

/// Seconds of travel time one currency unit of toll is worth.
pub const DEFAULT_VALUE_OF_TIME: f64 = 60.0;

/// Relative tolerance under which two route costs count as equal.
const COST_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CostModel {
    FreeFlow,
    FreeFlowPlusToll,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RouteQuery {
    pub origin: (LaneId, f64),
    pub destination: (LaneId, f64),
    pub cost_model: CostModel,
}

#[derive(Debug, Error, PartialEq)]
pub enum RoutingError {
    #[error("unknown lane {0}")]
    UnknownLane(LaneId),
    #[error("lane {0} is a junction lane")]
    NotRoadLane(LaneId),
    #[error("k must be at least 1")]
    ZeroK,
}

fn same_cost(a: f64, b: f64) -> bool {
    if !a.is_finite() || !b.is_finite() {
        return a == b;
    }
    (a - b).abs() <= COST_TOL * a.abs().max(b.abs()).max(1.0)
}

/// Order routes by cost (with tolerance), then lexicographically.
pub fn compare_routes(a: (f64, &[RoadId]), b: (f64, &[RoadId])) -> Ordering {
    if same_cost(a.0, b.0) {
        a.1.cmp(b.1)
    } else {
        a.0.total_cmp(&b.0)
    }
}

#[derive(PartialEq)]
struct Open {
    f: f64,
    road: RoadId,
}

impl Eq for Open {}

impl Ord for Open {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on (f, road).
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| other.road.cmp(&self.road))
    }
}

impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Precomputed road graph for repeated queries under one cost model.
pub struct Router<'a> {
    net: &'a RoadNetwork,
    cost: Vec<f64>,
    adj: Vec<Vec<RoadId>>,
    passable: Vec<bool>,
    kappa: f64,
    vmax: f64,
}

impl<'a> Router<'a> {
    pub fn new(net: &'a RoadNetwork, model: CostModel) -> Self {
        Self::with_value_of_time(net, model, DEFAULT_VALUE_OF_TIME)
    }

    pub fn with_value_of_time(net: &'a RoadNetwork, model: CostModel, value_of_time: f64) -> Self {
        let n = net.roads.len();
        let cost: Vec<f64> = net
            .roads
            .iter()
            .map(|r| {
                let t = net.road_length(r.id) / net.road_max_speed(r.id);
                match model {
                    CostModel::FreeFlow => t,
                    CostModel::FreeFlowPlusToll => t + r.toll * value_of_time,
                }
            })
            .collect();
        let mut adj = vec![Vec::new(); n];
        for road in &net.roads {
            for &l in &road.lanes {
                let lane = net.lane(l);
                if lane.restricted {
                    continue;
                }
                for &j in &lane.successors {
                    let jl = net.lane(j);
                    if !jl.is_junction_lane() || jl.restricted {
                        continue;
                    }
                    for &d in &jl.successors {
                        let dl = net.lane(d);
                        if let (false, Some(r)) = (dl.restricted, dl.road()) {
                            adj[road.id.idx()].push(r);
                        }
                    }
                }
            }
        }
        for a in adj.iter_mut() {
            a.sort_unstable();
            a.dedup();
        }
        let passable = (0..n).map(|i| net.road_passable(RoadId::from_idx(i))).collect();
        let vmax = net.lanes.iter().map(|l| l.max_speed).fold(0.0, f64::max);
        // Scale factor keeping the straight-line heuristic admissible even
        // though junction crossings carry no cost of their own.
        let mut kappa: f64 = 1.0;
        for (a, next) in adj.iter().enumerate() {
            let end_a = net.road_end(RoadId::from_idx(a));
            for &b in next {
                let span = end_a.dist(net.road_start(b)) + net.road_start(b).dist(net.road_end(b));
                if span > 0.0 {
                    kappa = kappa.min(cost[b.idx()] * vmax / span);
                }
            }
        }
        Self {
            net,
            cost,
            adj,
            passable,
            kappa,
            vmax,
        }
    }

    pub fn network(&self) -> &RoadNetwork {
        self.net
    }

    pub fn road_cost(&self, road: RoadId) -> f64 {
        self.cost[road.idx()]
    }

    pub fn route_cost(&self, route: &[RoadId]) -> f64 {
        route.iter().map(|r| self.cost[r.idx()]).sum()
    }

    /// Roads directly reachable from `road`, ascending.
    pub fn next_roads(&self, road: RoadId) -> &[RoadId] {
        &self.adj[road.idx()]
    }

    fn heuristic(&self, road: RoadId, dest: RoadId) -> f64 {
        if road == dest || self.vmax <= 0.0 {
            return 0.0;
        }
        self.kappa * self.net.road_end(road).dist(self.net.road_start(dest)) / self.vmax
    }

    fn path_to(parent: &[Option<RoadId>], mut r: RoadId) -> Vec<RoadId> {
        let mut p = vec![r];
        while let Some(q) = parent[r.idx()] {
            p.push(q);
            r = q;
        }
        p.reverse();
        p
    }

    /// Whether reaching `next` through `road` gives a lexicographically
    /// smaller sequence than its current parent chain. Walks both chains up
    /// to their common ancestor without building the paths.
    fn via_is_smaller(parent: &[Option<RoadId>], road: RoadId, next: RoadId) -> bool {
        let Some(q) = parent[next.idx()] else { return false };
        if q == road {
            return false;
        }
        let depth = |mut r: RoadId| {
            let mut d = 0;
            while let Some(p) = parent[r.idx()] {
                r = p;
                d += 1;
            }
            d
        };
        let (mut a, mut b) = (road, q);
        let (mut da, mut db) = (depth(a), depth(b));
        // Elements following `a` and `b` in their sequences.
        let (mut after_a, mut after_b) = (next, next);
        while da > db {
            after_a = a;
            a = parent[a.idx()].expect("chain deeper than its depth");
            da -= 1;
        }
        while db > da {
            after_b = b;
            b = parent[b.idx()].expect("chain deeper than its depth");
            db -= 1;
        }
        if a == b {
            return after_a < after_b;
        }
        while parent[a.idx()] != parent[b.idx()] {
            a = parent[a.idx()].expect("chains share the origin");
            b = parent[b.idx()].expect("chains share the origin");
        }
        a < b
    }

    fn search(
        &self,
        from: RoadId,
        to: RoadId,
        banned_roads: &[bool],
        banned_edges: &HashSet<(RoadId, RoadId)>,
    ) -> Option<Vec<RoadId>> {
        let n = self.cost.len();
        let mut g = vec![f64::INFINITY; n];
        let mut parent: Vec<Option<RoadId>> = vec![None; n];
        let mut heap = BinaryHeap::new();
        g[from.idx()] = self.cost[from.idx()];
        heap.push(Open {
            f: g[from.idx()] + self.heuristic(from, to),
            road: from,
        });
        let mut best = f64::INFINITY;
        while let Some(Open { f, road }) = heap.pop() {
            if f > best && !same_cost(f, best) {
                break;
            }
            let fr = g[road.idx()] + self.heuristic(road, to);
            if f > fr && !same_cost(f, fr) {
                continue; // stale entry
            }
            if road == to {
                best = best.min(g[road.idx()]);
                continue;
            }
            for &next in &self.adj[road.idx()] {
                if banned_roads[next.idx()] || banned_edges.contains(&(road, next)) {
                    continue;
                }
                let cand = g[road.idx()] + self.cost[next.idx()];
                let cur = g[next.idx()];
                let better = if same_cost(cand, cur) {
                    Self::via_is_smaller(&parent, road, next)
                } else {
                    cand < cur
                };
                if better {
                    g[next.idx()] = cand.min(cur);
                    parent[next.idx()] = Some(road);
                    heap.push(Open {
                        f: g[next.idx()] + self.heuristic(next, to),
                        road: next,
                    });
                }
            }
        }
        g[to.idx()].is_finite().then(|| Self::path_to(&parent, to))
    }

    /// Cheapest route from `from` to `to` inclusive; ties go to the
    /// lexicographically smaller road sequence.
    pub fn route(&self, from: RoadId, to: RoadId) -> Option<Vec<RoadId>> {
        if from == to {
            return Some(vec![from]);
        }
        if !self.passable[to.idx()] {
            return None;
        }
        let banned = vec![false; self.cost.len()];
        self.search(from, to, &banned, &HashSet::new())
    }

    /// Up to `k` cheapest loopless routes, ascending by cost then lexicographically.
    pub fn k_routes(&self, from: RoadId, to: RoadId, k: usize) -> Vec<Vec<RoadId>> {
        let Some(first) = self.route(from, to) else {
            return Vec::new();
        };
        let mut found = vec![first];
        let mut pool: Vec<(f64, Vec<RoadId>)> = Vec::new();
        let mut banned = vec![false; self.cost.len()];
        while found.len() < k {
            let last = found.last().unwrap().clone();
            for i in 0..last.len().saturating_sub(1) {
                let spur = last[i];
                let root = &last[..=i];
                let mut edges = HashSet::new();
                for p in &found {
                    if p.len() > i + 1 && &p[..=i] == root {
                        edges.insert((p[i], p[i + 1]));
                    }
                }
                for r in &root[..i] {
                    banned[r.idx()] = true;
                }
                if let Some(tail) = self.search(spur, to, &banned, &edges) {
                    let mut full = root[..i].to_vec();
                    full.extend(tail);
                    if !found.contains(&full) && !pool.iter().any(|(_, p)| *p == full) {
                        pool.push((self.route_cost(&full), full));
                    }
                }
                for r in &root[..i] {
                    banned[r.idx()] = false;
                }
            }
            if pool.is_empty() {
                break;
            }
            let best = (0..pool.len())
                .min_by(|&a, &b| compare_routes((pool[a].0, &pool[a].1), (pool[b].0, &pool[b].1)))
                .unwrap();
            found.push(pool.swap_remove(best).1);
        }
        found
    }
}

fn query_roads(net: &RoadNetwork, q: &RouteQuery) -> Result<(RoadId, RoadId), RoutingError> {
    let road_of = |l: LaneId| {
        net.get_lane(l)
            .ok_or(RoutingError::UnknownLane(l))?
            .road()
            .ok_or(RoutingError::NotRoadLane(l))
    };
    Ok((road_of(q.origin.0)?, road_of(q.destination.0)?))
}

/// Cheapest route for a single query; `None` when the destination is unreachable.
pub fn shortest_route(net: &RoadNetwork, q: &RouteQuery) -> Result<Option<Vec<RoadId>>, RoutingError> {
    let (from, to) = query_roads(net, q)?;
    Ok(Router::new(net, q.cost_model).route(from, to))
}

/// Up to `k` cheapest loopless routes for a single query.
pub fn k_candidate_routes(
    net: &RoadNetwork,
    q: &RouteQuery,
    k: usize,
) -> Result<Vec<Vec<RoadId>>, RoutingError> {
    if k == 0 {
        return Err(RoutingError::ZeroK);
    }
    let (from, to) = query_roads(net, q)?;
    Ok(Router::new(net, q.cost_model).k_routes(from, to, k))
}
