//! Per-vehicle update: lane choice, lane changes, car following, signal
//! response and motion along the route.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Exit, Status, VehicleRuntime, VehicleSnapshot, DT};
use crate::ids::{LaneId, RoadId, VehicleId};
use crate::index::LaneIndex;
use crate::models::{
    idm_accel, integrate, mobil_decision, signal_accel, CarFollowInput, LaneChangeInput, LaneDecision,
    B_HARD, STOP_SPEED,
};
use crate::netmodel::{Light, RoadNetwork, TurnSet, VehicleProfile};

pub(super) struct Ctx<'a> {
    pub net: &'a RoadNetwork,
    pub snap: &'a [VehicleSnapshot],
    pub index: &'a LaneIndex,
    pub lights: &'a [Light],
    pub turns: &'a [TurnSet],
    pub counts: &'a [u32],
    pub exits: &'a [Vec<Exit>],
    pub profiles: &'a [VehicleProfile],
    pub persons: &'a [VehicleId],
    pub key: [u8; 32],
    pub step: u64,
    pub now_end: f64,
    /// Furthest a vehicle entering a lane can travel in one step, m.
    pub entry_reach: f64,
}

/// A vehicle ahead, as `(rear position in path coordinates, speed)`.
type Leader = (f64, f64);

/// Lanes the vehicle may occupy this step, laid end to end.
struct Path {
    lanes: [(LaneId, f64); 3],
    n: usize,
    limit: f64,
    stop: Option<f64>,
}

impl Path {
    fn push(&mut self, lane: LaneId, offset: f64) {
        self.lanes[self.n] = (lane, offset);
        self.n += 1;
    }
}

impl<'a> Ctx<'a> {
    fn len(&self, v: VehicleId) -> f64 {
        self.profiles[v.idx()].length
    }

    fn v0(&self, lane: LaneId, i: usize) -> f64 {
        self.net.lane(lane).max_speed.min(self.profiles[i].v_max)
    }

    fn exits_to(&self, lane: LaneId, next: RoadId) -> impl Iterator<Item = &'a Exit> + '_ {
        let turns = self.turns[lane.idx()];
        self.exits[lane.idx()]
            .iter()
            .filter(move |e| e.next_road == next && turns.contains(e.turn))
    }

    fn feasible(&self, lane: LaneId, next: Option<RoadId>) -> bool {
        next.map_or(true, |n| self.exits_to(lane, n).next().is_some())
    }

    /// Acceleration of vehicle `i` at speed `v` behind `leader` (gap in m),
    /// ignoring signals.
    fn follow(&self, i: usize, lane: LaneId, v: f64, leader: Option<(f64, f64)>) -> f64 {
        let (gap, dv) = leader.map_or((f64::INFINITY, 0.0), |(g, vl)| (g, v - vl));
        let x = CarFollowInput {
            v,
            v0: self.v0(lane, i),
            gap,
            delta_v: dv,
            profile: self.profiles[i],
        };
        idm_accel(&x).unwrap_or(-B_HARD)
    }

    /// `follow` for vehicle `b` behind vehicle `f` placed at `s_f` on `lane`.
    fn follow_pair(&self, b: VehicleId, lane: LaneId, s_f: f64, f: VehicleId) -> f64 {
        let sb = self.snap[b.idx()];
        let gap = s_f - self.len(f) - sb.s;
        self.follow(b.idx(), lane, sb.v, Some((gap, self.snap[f.idx()].v)))
    }

    /// Direction to the nearest unrestricted lane of `road` able to serve
    /// `next`: -1 left, +1 right, 0 when `lane` already can (or none can).
    fn needed_side(&self, lane: LaneId, road: RoadId, next: Option<RoadId>) -> i8 {
        if self.feasible(lane, next) {
            return 0;
        }
        let lanes = &self.net.road(road).lanes;
        let Some(mine) = lanes.iter().position(|l| *l == lane) else { return 0 };
        lanes
            .iter()
            .enumerate()
            .filter(|(_, l)| !self.net.lane(**l).restricted && self.feasible(**l, next))
            .min_by_key(|(k, _)| (k.abs_diff(mine), *k))
            .map_or(0, |(k, _)| if k < mine { -1 } else { 1 })
    }

    fn draw(&self, i: usize) -> f64 {
        let mut r = ChaCha8Rng::from_seed(self.key);
        r.set_stream(self.persons[i].0 as u64);
        r.set_word_pos(self.step as u128 * 2);
        r.gen::<f64>()
    }

    /// Junction lane to take toward `route[c + 1]`.
    fn choose_exit(&self, lane: LaneId, route: &[RoadId], c: usize) -> Option<&'a Exit> {
        let after = route.get(c + 2).copied();
        self.exits_to(lane, route[c + 1])
            .filter(|e| !self.net.lane(e.via).restricted && !self.net.lane(e.to).restricted)
            .min_by_key(|e| {
                (
                    !self.feasible(e.to, after),
                    self.counts[e.to.idx()],
                    self.net.lane_position(e.to).unwrap_or(usize::MAX),
                )
            })
    }
}

fn strand(ctx: &Ctx, rt: &mut VehicleRuntime) {
    rt.status = Status::Finished;
    rt.stranded = true;
    rt.finish_t = ctx.now_end;
    rt.v = 0.0;
    rt.a = 0.0;
}

/// Update one driving vehicle. Returns true when the vehicle is stopped
/// at the head of a lane that cannot serve its next turn and should be
/// rerouted.
pub(super) fn update_vehicle(ctx: &Ctx, i: usize, rt: &mut VehicleRuntime) -> bool {
    let me = VehicleId::from_idx(i);
    let sn = ctx.snap[i];
    let p = ctx.profiles[i];
    let lane0 = ctx.net.lane(sn.lane);
    let c = rt.cursor;
    let next_road = rt.route.get(c + 1).copied();

    if !lane0.is_junction_lane() {
        if let Some(nr) = next_road {
            let road = ctx.net.road(rt.route[c]);
            if !road.lanes.iter().any(|l| ctx.feasible(*l, Some(nr))) {
                strand(ctx, rt);
                return false;
            }
        }
    } else if next_road.is_none()
        || ctx.net.lane(lane0.successors[0]).road() != next_road
    {
        // Route edited to something this junction lane cannot reach.
        strand(ctx, rt);
        return false;
    }

    let own_front = ctx.index.front(me).ok().flatten();
    let mut lane = sn.lane;
    let mut first_leader = own_front;
    let mut old_front = None;
    if !lane0.is_junction_lane() {
        if let Some((target, front)) = lane_change(ctx, i, rt, next_road) {
            lane = target;
            first_leader = front;
            old_front = own_front;
        }
    }

    let path = build_path(ctx, i, rt, lane, sn.v);
    let (v, pos) = (sn.v, sn.s);

    // Leaders in path coordinates.
    let mut leader: Option<Leader> = first_leader.map(|(f, s)| (s - ctx.len(f), ctx.snap[f.idx()].v));
    if leader.is_none() {
        for k in 1..path.n {
            let (l, off) = path.lanes[k];
            if let Some((f, s)) = ctx.index.head(l) {
                leader = Some((off + s - ctx.len(f), ctx.snap[f.idx()].v));
                break;
            }
        }
    }
    // Let a signalling neighbour ahead merge in front.
    if lane == sn.lane && !lane0.is_junction_lane() {
        let sides = [(ctx.index.left_front(me), 1i8), (ctx.index.right_front(me), -1i8)];
        for (f, want) in sides {
            if let Ok(Some((f, s))) = f {
                let fs = ctx.snap[f.idx()];
                let rear = s - ctx.len(f);
                if fs.blinker == want && rear > pos && leader.map_or(true, |(r, _)| rear < r) {
                    leader = Some((rear, fs.v));
                }
            }
        }
    }
    for k in 1..path.n {
        let (x, off) = path.lanes[k];
        let xl = ctx.net.lane(x);
        if xl.predecessors.len() < 2 {
            continue;
        }
        let ego_dist = off - pos;
        for &pl in &xl.predecessors {
            if pl == path.lanes[k - 1].0 {
                continue;
            }
            let plen = ctx.net.lane(pl).length;
            let thr = plen - ego_dist;
            let mut cand = ctx.index.first_at_or_after(pl, thr);
            // Equal distance to the merge point: lower id goes first.
            while let Some((o, s)) = cand {
                if s == thr && o > me {
                    cand = ctx.index.front(o).ok().flatten();
                } else {
                    break;
                }
            }
            if let Some((o, s)) = cand {
                let rear = off - (plen - s) - ctx.len(o);
                if leader.map_or(true, |(r, _)| rear < r) {
                    leader = Some((rear, ctx.snap[o.idx()].v));
                }
            }
        }
    }

    let v0 = ctx.v0(lane, i);
    let (gap, dv) = leader.map_or((f64::INFINITY, 0.0), |(r, vl)| (r - pos, v - vl));
    let x = CarFollowInput { v, v0, gap, delta_v: dv, profile: p };
    let mut a = match path.stop {
        Some(stop) => signal_accel(&x, (stop - pos).max(0.0), Light::Red),
        None => idm_accel(&x),
    }
    .unwrap_or(-B_HARD);
    if let Some((f, s)) = old_front {
        let gap = s - ctx.len(f) - pos;
        a = a.min(ctx.follow(i, sn.lane, v, Some((gap, ctx.snap[f.idx()].v))));
    }

    let (mut v1, ds) = integrate(v, a, v0, DT);
    let mut pos1 = pos + ds;
    let mut cap = path.limit;
    if let Some((r, _)) = leader {
        cap = cap.min(r);
    }
    if let Some((f, s)) = old_front {
        cap = cap.min(s - ctx.len(f));
    }
    if pos1 > cap {
        pos1 = cap.max(pos);
        v1 = v1.min((2.0 * (pos1 - pos) - v).max(0.0));
    }

    // Walk along the path.
    let mut k = 0;
    while k + 1 < path.n && pos1 > path.lanes[k + 1].1 {
        k += 1;
    }
    let (mut new_lane, off) = path.lanes[k];
    let mut s1 = if k == 0 { pos1 } else { pos1 - off };
    if k > 0 {
        // Re-apply the leader clamp in lane coordinates.
        if let Some((h, hs)) = ctx.index.head(new_lane) {
            s1 = s1.min(hs - ctx.len(h));
        }
        if s1 < 0.0 {
            k -= 1;
            new_lane = path.lanes[k].0;
            s1 = ctx.net.lane(new_lane).length;
        }
    }
    s1 = s1.min(ctx.net.lane(new_lane).length);
    for j in 1..=k {
        if !ctx.net.lane(path.lanes[j].0).is_junction_lane() {
            rt.cursor += 1;
        }
    }

    let next = rt.route.get(rt.cursor + 1).copied();
    let new_l = ctx.net.lane(new_lane);
    let mut stuck = false;
    rt.blinker = match new_l.road() {
        Some(r) => {
            stuck = !ctx.feasible(new_lane, next)
                && v1 < STOP_SPEED
                && new_l.length - s1 <= p.min_gap + p.length;
            ctx.needed_side(new_lane, r, next)
        }
        None => 0,
    };
    rt.lane = new_lane;
    rt.s = s1;
    rt.v = v1;
    rt.a = (v1 - v) / DT;

    let on_last = rt.cursor + 1 == rt.route.len()
        && ctx.net.lane(new_lane).road() == rt.route.last().copied();
    if on_last && s1 >= rt.end.1 {
        rt.status = Status::Finished;
        rt.finish_t = ctx.now_end;
        return false;
    }
    stuck
}

fn build_path(ctx: &Ctx, i: usize, rt: &VehicleRuntime, lane: LaneId, v: f64) -> Path {
    let l0 = ctx.net.lane(lane);
    let mut path = Path {
        lanes: [(lane, 0.0); 3],
        n: 1,
        limit: l0.length,
        stop: None,
    };
    let c = rt.cursor;
    if l0.is_junction_lane() {
        let d = l0.successors[0];
        path.push(d, l0.length);
        path.limit = l0.length + ctx.net.lane(d).length;
        return path;
    }
    if c + 1 >= rt.route.len() {
        path.limit = f64::INFINITY;
        return path;
    }
    let exit = ctx.choose_exit(lane, &rt.route, c);
    let go = exit.map_or(false, |e| match ctx.lights[e.via.idx()] {
        Light::Green => true,
        Light::Red => false,
        Light::Yellow => {
            let b = ctx.profiles[i].a_comf;
            v * v / (2.0 * b) > l0.length - ctx.snap[i].s
        }
    });
    match exit {
        Some(e) if go => {
            let jl = ctx.net.lane(e.via);
            path.push(e.via, l0.length);
            path.push(e.to, l0.length + jl.length);
            path.limit = l0.length + jl.length + ctx.net.lane(e.to).length;
        }
        _ => path.stop = Some(l0.length),
    }
    path
}

/// Lane change attempt for this step. Returns the target lane and the
/// vehicle ahead there.
fn lane_change(
    ctx: &Ctx,
    i: usize,
    rt: &VehicleRuntime,
    next_road: Option<RoadId>,
) -> Option<(LaneId, Option<(VehicleId, f64)>)> {
    let me = VehicleId::from_idx(i);
    let sn = ctx.snap[i];
    let p = ctx.profiles[i];
    let lane = ctx.net.lane(sn.lane);
    let left = ctx.step % 2 == 0;
    let nb = if left { lane.left } else { lane.right }?;
    if ctx.net.lane(nb).restricted {
        return None;
    }
    let mandatory = !ctx.feasible(sn.lane, next_road);
    if mandatory {
        let side = ctx.needed_side(sn.lane, rt.route[rt.cursor], next_road);
        if side != if left { -1 } else { 1 } {
            return None;
        }
    } else if !ctx.feasible(nb, next_road) || lane.length - sn.s < p.min_gap + sn.v * p.headway {
        return None;
    }

    let (front, back) = if left {
        (ctx.index.left_front(me).ok()?, ctx.index.left_back(me).ok()?)
    } else {
        (ctx.index.right_front(me).ok()?, ctx.index.right_back(me).ok()?)
    };
    if let Some((f, s)) = front {
        if s - ctx.len(f) - sn.s <= 0.0 {
            return None;
        }
    }
    let room = sn.s - p.length;
    // A follower that already yields to this vehicle clamps to its rear in
    // the same step.
    let yielding = back.is_some_and(|(b, s)| {
        let sees_me = if left { ctx.index.right_front(b) } else { ctx.index.left_front(b) };
        sn.blinker == if left { -1 } else { 1 } && room > s && matches!(sees_me, Ok(Some((m, _))) if m == me)
    });
    match back {
        _ if yielding => {}
        Some((b, s)) => {
            let sb = ctx.snap[b.idx()];
            if room < s + sb.v + ctx.profiles[b.idx()].a_max / 2.0 {
                return None;
            }
        }
        None if room < ctx.entry_reach => return None,
        None => {}
    }

    let lead = |f: Option<(VehicleId, f64)>| f.map(|(f, s)| (s - ctx.len(f) - sn.s, ctx.snap[f.idx()].v));
    let ego_after = ctx.follow(i, nb, sn.v, lead(front));
    let nf_after = back.map(|(b, _)| ctx.follow_pair(b, nb, sn.s, me));
    if ego_after <= -B_HARD || (!yielding && nf_after.map_or(false, |a| a <= -B_HARD)) {
        return None;
    }
    if mandatory {
        return Some((nb, front));
    }

    let own_front = ctx.index.front(me).ok().flatten();
    let ego_before = ctx.follow(i, sn.lane, sn.v, lead(own_front));
    let nf_before = back.map(|(b, _)| match front {
        Some((f, s)) => ctx.follow_pair(b, nb, s, f),
        None => ctx.follow(b.idx(), nb, ctx.snap[b.idx()].v, None),
    });
    let (of_after, of_before) = match ctx.index.back(me).ok().flatten() {
        Some((o, _)) => (
            match own_front {
                Some((f, s)) => ctx.follow_pair(o, sn.lane, s, f),
                None => ctx.follow(o.idx(), sn.lane, ctx.snap[o.idx()].v, None),
            },
            ctx.follow_pair(o, sn.lane, sn.s, me),
        ),
        None => (0.0, 0.0),
    };
    let input = LaneChangeInput {
        ego_after,
        ego_before,
        new_follower_after: nf_after.unwrap_or(0.0),
        new_follower_before: nf_before.unwrap_or(0.0),
        old_follower_after: of_after,
        old_follower_before: of_before,
    };
    let side = Some(&input);
    let (l, r) = if left { (side, None) } else { (None, side) };
    match mobil_decision(l, r, ctx.draw(i)) {
        LaneDecision::Stay => None,
        _ => Some((nb, front)),
    }
}
