use std::cmp::Ordering;
use std::collections::BinaryHeap;

use microflow::ids::RoadId;
use microflow::netmodel::*;
use microflow::routing::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Road graph written out from lane connectivity.
fn graph(net: &RoadNetwork) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); net.roads.len()];
    for lane in net.lanes.iter().filter(|l| !l.restricted) {
        let Some(a) = lane.road() else { continue };
        for j in lane.successors.iter().map(|j| net.lane(*j)) {
            if j.restricted || j.road().is_some() {
                continue;
            }
            for d in j.successors.iter().map(|d| net.lane(*d)) {
                if let (false, Some(b)) = (d.restricted, d.road()) {
                    adj[a.idx()].push(b.idx());
                }
            }
        }
    }
    for a in &mut adj {
        a.sort_unstable();
        a.dedup();
    }
    adj
}

fn costs(net: &RoadNetwork, model: CostModel) -> Vec<f64> {
    net.roads
        .iter()
        .map(|r| {
            let len = r.lanes.iter().map(|l| net.lane(*l).length).sum::<f64>() / r.lanes.len() as f64;
            let vmax = r.lanes.iter().map(|l| net.lane(*l).max_speed).fold(0.0, f64::max);
            let t = len / vmax;
            match model {
                CostModel::FreeFlow => t,
                CostModel::FreeFlowPlusToll => t + r.toll * DEFAULT_VALUE_OF_TIME,
            }
        })
        .collect()
}

#[derive(PartialEq)]
struct Item(f64, usize);
impl Eq for Item {}
impl Ord for Item {
    fn cmp(&self, o: &Self) -> Ordering {
        o.0.total_cmp(&self.0).then(o.1.cmp(&self.1))
    }
}
impl PartialOrd for Item {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

/// Plain Dijkstra on the reversed graph: cheapest cost from each road to
/// `to`, counting every road on the path including both ends.
fn cost_to(adj: &[Vec<usize>], c: &[f64], to: usize) -> Vec<f64> {
    let mut rev = vec![Vec::new(); adj.len()];
    for (a, next) in adj.iter().enumerate() {
        for &b in next {
            rev[b].push(a);
        }
    }
    let mut d = vec![f64::INFINITY; adj.len()];
    d[to] = c[to];
    let mut heap = BinaryHeap::from([Item(c[to], to)]);
    while let Some(Item(g, r)) = heap.pop() {
        if g > d[r] {
            continue;
        }
        for &p in &rev[r] {
            if g + c[p] < d[p] {
                d[p] = g + c[p];
                heap.push(Item(d[p], p));
            }
        }
    }
    d
}

fn same(a: f64, b: f64) -> bool {
    a.is_finite() && b.is_finite() && (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

/// Lexicographically smallest cheapest route, walked greedily.
fn oracle_route(adj: &[Vec<usize>], c: &[f64], passable: &[bool], from: usize, to: usize) -> Option<Vec<RoadId>> {
    if from == to {
        return Some(vec![RoadId(from as u32)]);
    }
    if !passable[to] {
        return None;
    }
    let d = cost_to(adj, c, to);
    if !d[from].is_finite() {
        return None;
    }
    let mut path = vec![from];
    let mut spent = c[from];
    while *path.last().unwrap() != to {
        let cur = *path.last().unwrap();
        let next = *adj[cur]
            .iter()
            .find(|&&n| same(spent + d[n], d[from]))
            .expect("a cheapest continuation exists");
        spent += c[next];
        path.push(next);
    }
    Some(path.into_iter().map(|r| RoadId(r as u32)).collect())
}

fn random_grid(rng: &mut ChaCha8Rng) -> RoadNetwork {
    let mut cfg = GridConfig::new(rng.gen_range(2..6), rng.gen_range(2..6), rng.gen_range(80.0..400.0), rng.gen_range(1..4), rng.gen());
    cfg.speed_classes = rng.gen_bool(0.7);
    let (mut net, _) = generate_grid_with(&cfg).unwrap();
    for l in 0..net.lanes.len() {
        if rng.gen_bool(0.03) {
            net.lanes[l].restricted = true;
        }
    }
    for r in 0..net.roads.len() {
        if rng.gen_bool(0.3) {
            net.roads[r].toll = rng.gen_range(0.0..2.0);
        }
    }
    net
}

#[test]
fn routes_match_dijkstra_on_1000_queries() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut queries = 0;
    let mut unreachable = 0;
    while queries < 1000 {
        let net = random_grid(&mut rng);
        let adj = graph(&net);
        let passable: Vec<bool> = (0..net.roads.len()).map(|r| net.road_passable(RoadId(r as u32))).collect();
        for model in [CostModel::FreeFlow, CostModel::FreeFlowPlusToll] {
            let c = costs(&net, model);
            let router = Router::new(&net, model);
            for _ in 0..25 {
                let from = rng.gen_range(0..net.roads.len());
                let to = rng.gen_range(0..net.roads.len());
                let got = router.route(RoadId(from as u32), RoadId(to as u32));
                let want = oracle_route(&adj, &c, &passable, from, to);
                assert_eq!(got, want, "{model:?} {from} -> {to}");
                if let Some(r) = &got {
                    let total: f64 = r.iter().map(|x| c[x.idx()]).sum();
                    assert!(same(router.route_cost(r), total));
                } else {
                    unreachable += 1;
                }
                queries += 1;
            }
        }
    }
    assert!(unreachable < queries / 2);
}

/// Every loopless route by depth-first enumeration.
fn all_routes(adj: &[Vec<usize>], from: usize, to: usize) -> Vec<Vec<usize>> {
    fn go(adj: &[Vec<usize>], path: &mut Vec<usize>, on: &mut [bool], to: usize, out: &mut Vec<Vec<usize>>) {
        let cur = *path.last().unwrap();
        if cur == to {
            out.push(path.clone());
            return;
        }
        for &n in &adj[cur] {
            if !on[n] {
                on[n] = true;
                path.push(n);
                go(adj, path, on, to, out);
                path.pop();
                on[n] = false;
            }
        }
    }
    let mut on = vec![false; adj.len()];
    on[from] = true;
    let mut out = Vec::new();
    go(adj, &mut vec![from], &mut on, to, &mut out);
    out
}

#[test]
fn k_routes_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for case in 0..40 {
        let mut cfg = GridConfig::new(2, rng.gen_range(2..4), rng.gen_range(100.0..300.0), 1, case);
        cfg.speed_classes = true;
        let (mut net, _) = generate_grid_with(&cfg).unwrap();
        for r in 0..net.roads.len() {
            net.roads[r].toll = rng.gen_range(0.0..0.5);
        }
        let model = if case % 2 == 0 { CostModel::FreeFlow } else { CostModel::FreeFlowPlusToll };
        let adj = graph(&net);
        let c = costs(&net, model);
        let router = Router::new(&net, model);
        for _ in 0..10 {
            let from = rng.gen_range(0..net.roads.len());
            let to = rng.gen_range(0..net.roads.len());
            if from == to {
                continue;
            }
            let k = rng.gen_range(1..6);
            let mut all: Vec<(f64, Vec<RoadId>)> = all_routes(&adj, from, to)
                .into_iter()
                .map(|p| (p.iter().map(|r| c[*r]).sum(), p.into_iter().map(|r| RoadId(r as u32)).collect()))
                .collect();
            all.sort_by(|a, b| compare_routes((a.0, &a.1), (b.0, &b.1)));
            let want: Vec<Vec<RoadId>> = all.into_iter().take(k).map(|x| x.1).collect();
            let got = router.k_routes(RoadId(from as u32), RoadId(to as u32), k);
            assert_eq!(got, want, "case {case}: {from} -> {to}, k={k}");
        }
    }
}

#[test]
fn toll_shifts_the_route() {
    let net = generate_grid(3, 3, 200.0, 1, 4).unwrap();
    let router = Router::new(&net, CostModel::FreeFlowPlusToll);
    let (from, to) = (RoadId(0), RoadId(net.roads.len() as u32 - 1));
    let base = router.route(from, to).unwrap();
    assert!(base.len() > 2);
    let mut tolled = net.clone();
    tolled.roads[base[1].idx()].toll = 100.0;
    let r2 = Router::new(&tolled, CostModel::FreeFlowPlusToll).route(from, to).unwrap();
    assert!(!r2.contains(&base[1]));
    let ff = Router::new(&tolled, CostModel::FreeFlow).route(from, to).unwrap();
    assert_eq!(ff, base);
}
