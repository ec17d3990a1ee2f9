//! Synthetic Manhattan-grid network generator.
//!
//! Layout: `rows × cols` signalized junctions spaced `road_len + 2R` apart,
//! where `R` is the junction half-size. Adjacent junctions are linked by a
//! bidirectional road pair. Every boundary junction also gets one outward
//! stub pair ending in a lane-less NONE-policy terminal junction (corners
//! pick their stub side in pinwheel order N, E, S, W). Each road carries a
//! point AOI whose single gate sits mid-road on the rightmost lane.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::format::canon;
use super::*;

const LANE_WIDTH: f64 = 3.5;

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("grid needs at least 2 rows and 2 columns, got {rows}x{cols}")]
    TooSmall { rows: usize, cols: usize },
    #[error("lanes per road must be at least 1")]
    NoLanes,
    #[error("dynamic lanes need at least 3 lanes per road, got {0}")]
    DynamicLaneTooNarrow(usize),
    #[error("road length must be positive")]
    BadLength,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridConfig {
    pub rows: usize,
    pub cols: usize,
    pub road_len: f64,
    pub lanes: usize,
    pub seed: u64,
    /// Speed limit on road lanes, m/s.
    pub road_speed: f64,
    /// Speed limit on turning junction lanes, m/s.
    pub turn_speed: f64,
    /// Pick each road pair's speed limit from 40/50/60 km/h using the seed.
    pub speed_classes: bool,
    /// Add an alternative plan switching lane 1 between STRAIGHT and LEFT.
    pub dynamic_lane: bool,
    /// Add a reversible center lane to every east-west grid road pair.
    pub tidal: bool,
    /// Green time of each fixed-time program entry, s.
    pub phase_duration: f64,
}

impl GridConfig {
    pub fn new(rows: usize, cols: usize, road_len: f64, lanes: usize, seed: u64) -> Self {
        Self {
            rows,
            cols,
            road_len,
            lanes,
            seed,
            road_speed: 16.667,
            turn_speed: 8.333,
            speed_classes: false,
            dynamic_lane: false,
            tidal: false,
            phase_duration: 30.0,
        }
    }
}

/// Bookkeeping about a generated grid, for scenario construction.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GridLayout {
    pub rows: usize,
    pub cols: usize,
    /// Grid junction at `(row, col)` is `grid_junctions[row * cols + col]`.
    pub grid_junctions: Vec<JunctionId>,
    pub terminal_junctions: Vec<JunctionId>,
    /// Roads between two grid junctions.
    pub grid_roads: Vec<RoadId>,
    /// Roads between a grid junction and a terminal junction.
    pub stub_roads: Vec<RoadId>,
    /// `(forward, backward)` road pairs carrying a tidal lane.
    pub tidal_pairs: Vec<(RoadId, RoadId)>,
    /// Roads whose plans include a dynamic lane, with that lane's position.
    pub dynamic_roads: Vec<(RoadId, usize)>,
    /// Point AOI of each road.
    pub road_aoi: Vec<AoiId>,
    /// Endpoints `(from, to)` of each road.
    pub road_ends: Vec<(JunctionId, JunctionId)>,
}

impl GridLayout {
    pub fn junction_at(&self, row: usize, col: usize) -> JunctionId {
        self.grid_junctions[row * self.cols + col]
    }

    pub fn road_between(&self, from: JunctionId, to: JunctionId) -> Option<RoadId> {
        self.road_ends
            .iter()
            .position(|e| *e == (from, to))
            .map(RoadId::from_idx)
    }
}

/// Generate a grid with default options.
pub fn generate_grid(
    rows: usize,
    cols: usize,
    road_len: f64,
    lanes_per_road: usize,
    seed: u64,
) -> Result<RoadNetwork, GridError> {
    generate_grid_with(&GridConfig::new(rows, cols, road_len, lanes_per_road, seed)).map(|(n, _)| n)
}

struct RoadSpec {
    from: JunctionId,
    to: JunctionId,
    from_pt: Point,
    to_pt: Point,
    tidal: bool,
    speed: f64,
}

fn sub(a: Point, b: Point) -> Point {
    Point::new(a.x - b.x, a.y - b.y)
}

fn unit(p: Point) -> Point {
    let n = p.x.hypot(p.y);
    Point::new(p.x / n, p.y / n)
}

fn at(base: Point, dir: Point, along: f64, normal: Point, off: f64) -> Point {
    Point::new(
        canon(base.x + dir.x * along + normal.x * off),
        canon(base.y + dir.y * along + normal.y * off),
    )
}

fn turn_between(din: Point, dout: Point) -> Option<Turn> {
    let cross = din.x * dout.y - din.y * dout.x;
    let dot = din.x * dout.x + din.y * dout.y;
    if cross.abs() < 1e-9 {
        (dot > 0.0).then_some(Turn::Straight)
    } else if cross > 0.0 {
        Some(Turn::Left)
    } else {
        Some(Turn::Right)
    }
}

/// Intersection of the lines `p + t*d1` and `q + u*d2`, if not parallel.
fn corner(p: Point, d1: Point, q: Point, d2: Point) -> Option<Point> {
    let den = d1.x * d2.y - d1.y * d2.x;
    if den.abs() < 1e-12 {
        return None;
    }
    let t = ((q.x - p.x) * d2.y - (q.y - p.y) * d2.x) / den;
    Some(Point::new(canon(p.x + d1.x * t), canon(p.y + d1.y * t)))
}

fn default_plan(regular: usize) -> Vec<TurnSet> {
    use Turn::*;
    match regular {
        1 => vec![TurnSet::of(&[Straight, Left, Right])],
        n => {
            let mut p = vec![TurnSet::of(&[Left])];
            p.extend(std::iter::repeat(TurnSet::of(&[Straight])).take(n - 2));
            p.push(TurnSet::of(&[Straight, Right]));
            p
        }
    }
}

pub fn generate_grid_with(cfg: &GridConfig) -> Result<(RoadNetwork, GridLayout), GridError> {
    if cfg.rows < 2 || cfg.cols < 2 {
        return Err(GridError::TooSmall {
            rows: cfg.rows,
            cols: cfg.cols,
        });
    }
    if cfg.lanes == 0 {
        return Err(GridError::NoLanes);
    }
    if cfg.dynamic_lane && cfg.lanes < 3 {
        return Err(GridError::DynamicLaneTooNarrow(cfg.lanes));
    }
    if !(cfg.road_len > 0.0) {
        return Err(GridError::BadLength);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (rows, cols) = (cfg.rows, cfg.cols);
    let max_lanes = cfg.lanes + usize::from(cfg.tidal);
    let half = max_lanes as f64 * LANE_WIDTH + 5.0;
    let pitch = cfg.road_len + 2.0 * half;

    let mut layout = GridLayout {
        rows,
        cols,
        ..Default::default()
    };
    let mut centers: Vec<Point> = Vec::new();
    for i in 0..rows {
        for j in 0..cols {
            layout.grid_junctions.push(JunctionId::from_idx(centers.len()));
            centers.push(Point::new(j as f64 * pitch, (rows - 1 - i) as f64 * pitch));
        }
    }

    // Road pairs between grid junctions: horizontal first, then vertical.
    let speed_choices = [11.111, 13.889, 16.667];
    let pair_speed = |rng: &mut ChaCha8Rng| {
        if cfg.speed_classes {
            speed_choices[rng.gen_range(0..speed_choices.len())]
        } else {
            cfg.road_speed
        }
    };
    let mut specs: Vec<RoadSpec> = Vec::new();
    let push_pair = |specs: &mut Vec<RoadSpec>, a: JunctionId, b: JunctionId, ca: Point, cb: Point, tidal: bool, speed: f64| {
        specs.push(RoadSpec { from: a, to: b, from_pt: ca, to_pt: cb, tidal, speed });
        specs.push(RoadSpec { from: b, to: a, from_pt: cb, to_pt: ca, tidal, speed });
    };
    for i in 0..rows {
        for j in 0..cols - 1 {
            let a = layout.junction_at(i, j);
            let b = layout.junction_at(i, j + 1);
            let s = pair_speed(&mut rng);
            push_pair(&mut specs, a, b, centers[a.idx()], centers[b.idx()], cfg.tidal, s);
        }
    }
    for i in 0..rows - 1 {
        for j in 0..cols {
            let a = layout.junction_at(i, j);
            let b = layout.junction_at(i + 1, j);
            let s = pair_speed(&mut rng);
            push_pair(&mut specs, a, b, centers[a.idx()], centers[b.idx()], false, s);
        }
    }
    let n_grid_roads = specs.len();

    // Stubs: one per boundary junction, pinwheel order for corners.
    let mut boundary = Vec::new();
    for j in 0..cols {
        boundary.push((0, j));
    }
    for i in 1..rows {
        boundary.push((i, cols - 1));
    }
    for j in (0..cols - 1).rev() {
        boundary.push((rows - 1, j));
    }
    for i in (1..rows - 1).rev() {
        boundary.push((i, 0));
    }
    for (i, j) in boundary {
        let out = if i == 0 && j != cols - 1 {
            Point::new(0.0, 1.0)
        } else if j == cols - 1 && i != rows - 1 {
            Point::new(1.0, 0.0)
        } else if i == rows - 1 && j != 0 {
            Point::new(0.0, -1.0)
        } else {
            Point::new(-1.0, 0.0)
        };
        let g = layout.junction_at(i, j);
        let t = JunctionId::from_idx(centers.len());
        let cg = centers[g.idx()];
        let ct = Point::new(cg.x + out.x * pitch, cg.y + out.y * pitch);
        centers.push(ct);
        layout.terminal_junctions.push(t);
        let s = pair_speed(&mut rng);
        push_pair(&mut specs, t, g, ct, cg, false, s);
    }

    // Road lanes.
    let mut lanes: Vec<Lane> = Vec::new();
    let mut roads: Vec<Road> = Vec::new();
    let mut road_dir: Vec<Point> = Vec::new();
    for (ri, spec) in specs.iter().enumerate() {
        let rid = RoadId::from_idx(ri);
        let d = unit(sub(spec.to_pt, spec.from_pt));
        let n = Point::new(d.y, -d.x);
        road_dir.push(d);
        let count = cfg.lanes + usize::from(spec.tidal);
        let mut ids = Vec::new();
        for k in 0..count {
            let off = if spec.tidal {
                k as f64 * LANE_WIDTH
            } else {
                (k as f64 + 0.5) * LANE_WIDTH
            };
            let a = at(spec.from_pt, d, half, n, off);
            let b = at(spec.to_pt, d, -half, n, off);
            let id = LaneId::from_idx(lanes.len());
            ids.push(id);
            lanes.push(Lane {
                id,
                parent: Parent::Road(rid),
                length: canon(a.dist(b)),
                centerline: vec![a, b],
                max_speed: spec.speed,
                turn: Turn::Straight,
                predecessors: Vec::new(),
                successors: Vec::new(),
                left: None,
                right: None,
                restricted: spec.tidal && k == 0,
            });
        }
        for w in ids.windows(2) {
            lanes[w[0].idx()].right = Some(w[1]);
            lanes[w[1].idx()].left = Some(w[0]);
        }
        let base = default_plan(cfg.lanes);
        let mut plan0 = Vec::new();
        if spec.tidal {
            plan0.push(TurnSet::of(&[Turn::Straight]));
        }
        plan0.extend(base.iter().copied());
        let mut plans = vec![plan0.clone()];
        if cfg.dynamic_lane {
            let pos = usize::from(spec.tidal) + 1;
            let mut plan1 = plan0;
            plan1[pos] = TurnSet::of(&[Turn::Left]);
            plans.push(plan1);
            layout.dynamic_roads.push((rid, pos));
        }
        roads.push(Road {
            id: rid,
            lanes: ids,
            lane_plans: plans,
            active_plan: 0,
            tidal_partner: None,
            toll: 0.0,
        });
        layout.road_ends.push((spec.from, spec.to));
        if ri < n_grid_roads {
            layout.grid_roads.push(rid);
        } else {
            layout.stub_roads.push(rid);
        }
    }
    for ri in (0..specs.len()).step_by(2) {
        if specs[ri].tidal {
            roads[ri].tidal_partner = Some(RoadId::from_idx(ri + 1));
            roads[ri + 1].tidal_partner = Some(RoadId::from_idx(ri));
            layout
                .tidal_pairs
                .push((RoadId::from_idx(ri), RoadId::from_idx(ri + 1)));
        }
    }

    // Junction lanes.
    let n_junctions = centers.len();
    let mut incoming: Vec<Vec<RoadId>> = vec![Vec::new(); n_junctions];
    let mut outgoing: Vec<Vec<RoadId>> = vec![Vec::new(); n_junctions];
    for (ri, s) in specs.iter().enumerate() {
        incoming[s.to.idx()].push(RoadId::from_idx(ri));
        outgoing[s.from.idx()].push(RoadId::from_idx(ri));
    }
    let mut junction_lanes: Vec<Vec<LaneId>> = vec![Vec::new(); n_junctions];
    // (junction lane, incoming road)
    let mut jl_source: BTreeMap<LaneId, RoadId> = BTreeMap::new();
    let grid_count = rows * cols;
    for jn in 0..grid_count {
        let jid = JunctionId::from_idx(jn);
        for &rin in &incoming[jn] {
            let din = road_dir[rin.idx()];
            let in_road = &roads[rin.idx()];
            let in_lanes = in_road.lanes.clone();
            let mut union = vec![TurnSet::EMPTY; in_lanes.len()];
            for plan in &in_road.lane_plans {
                for (u, t) in union.iter_mut().zip(plan) {
                    *u = u.union(*t);
                }
            }
            for &rout in &outgoing[jn] {
                let dout = road_dir[rout.idx()];
                let Some(turn) = turn_between(din, dout) else { continue };
                let out_lanes = roads[rout.idx()].lanes.clone();
                let out_tidal = specs[rout.idx()].tidal;
                let regular_out: Vec<LaneId> = out_lanes[usize::from(out_tidal)..].to_vec();
                let capable: Vec<LaneId> = in_lanes
                    .iter()
                    .zip(&union)
                    .filter(|(_, u)| u.contains(turn))
                    .map(|(l, _)| *l)
                    .collect();
                let mut links: Vec<(LaneId, LaneId)> = Vec::new();
                match turn {
                    Turn::Straight => {
                        let off = out_lanes.len().saturating_sub(capable.len());
                        for (i, &l) in capable.iter().enumerate() {
                            let target = (i + off).min(out_lanes.len() - 1);
                            if i == 0 {
                                for &o in &out_lanes[..target] {
                                    links.push((l, o));
                                }
                            }
                            links.push((l, out_lanes[target]));
                        }
                    }
                    Turn::Left => {
                        for (i, &l) in capable.iter().enumerate() {
                            links.push((l, regular_out[i.min(regular_out.len() - 1)]));
                        }
                    }
                    Turn::Right => {
                        for (i, &l) in capable.iter().rev().enumerate() {
                            let k = regular_out.len() - 1 - i.min(regular_out.len() - 1);
                            links.push((l, regular_out[k]));
                        }
                        links.reverse();
                    }
                }
                for (from, to) in links {
                    let p = lanes[from.idx()].end();
                    let q = lanes[to.idx()].start();
                    let pts = match turn {
                        Turn::Straight => vec![p, q],
                        _ => match corner(p, din, q, dout) {
                            Some(c) => vec![p, c, q],
                            None => vec![p, q],
                        },
                    };
                    let id = LaneId::from_idx(lanes.len());
                    lanes.push(Lane {
                        id,
                        parent: Parent::Junction(jid),
                        length: canon(polyline_length(&pts)),
                        centerline: pts,
                        max_speed: if turn == Turn::Straight {
                            lanes[from.idx()].max_speed.max(lanes[to.idx()].max_speed)
                        } else {
                            cfg.turn_speed
                        },
                        turn,
                        predecessors: vec![from],
                        successors: vec![to],
                        left: None,
                        right: None,
                        restricted: false,
                    });
                    lanes[from.idx()].successors.push(id);
                    lanes[to.idx()].predecessors.push(id);
                    junction_lanes[jn].push(id);
                    jl_source.insert(id, rin);
                }
            }
        }
    }
    for l in lanes.iter_mut() {
        l.successors.sort_unstable();
        l.predecessors.sort_unstable();
    }

    // Signal phases.
    let mut junctions = Vec::new();
    for jn in 0..n_junctions {
        let jid = JunctionId::from_idx(jn);
        let jl = junction_lanes[jn].clone();
        if jn >= grid_count {
            junctions.push(Junction {
                id: jid,
                lanes: jl,
                phases: Vec::new(),
                fixed_program: Vec::new(),
                policy: TlPolicy::None,
            });
            continue;
        }
        // Approach axis of each incoming road: vertical travel = NS.
        let is_ns = |r: RoadId| road_dir[r.idx()].y.abs() > 0.5;
        let mut groups: Vec<Vec<LaneId>> = Vec::new();
        if cfg.lanes == 1 {
            // Split phasing, one phase per approach in N, E, S, W order.
            let order = |r: &RoadId| {
                let d = road_dir[r.idx()];
                if d.y < -0.5 {
                    0
                } else if d.x < -0.5 {
                    1
                } else if d.y > 0.5 {
                    2
                } else {
                    3
                }
            };
            let mut approaches = incoming[jn].clone();
            approaches.sort_by_key(order);
            for r in approaches {
                groups.push(jl.iter().copied().filter(|l| jl_source[l] == r).collect());
            }
        } else {
            for ns in [true, false] {
                let axis: Vec<RoadId> = incoming[jn].iter().copied().filter(|r| is_ns(*r) == ns).collect();
                let on_axis = |l: &LaneId| axis.contains(&jl_source[l]);
                if axis.len() == 1 {
                    groups.push(jl.iter().copied().filter(on_axis).collect());
                } else {
                    groups.push(
                        jl.iter()
                            .copied()
                            .filter(|l| on_axis(l) && lanes[l.idx()].turn != Turn::Left)
                            .collect(),
                    );
                    groups.push(
                        jl.iter()
                            .copied()
                            .filter(|l| on_axis(l) && lanes[l.idx()].turn == Turn::Left)
                            .collect(),
                    );
                }
            }
        }
        groups.retain(|g| !g.is_empty());
        let phases: Vec<SignalPhase> = groups
            .iter()
            .map(|g| SignalPhase {
                lane_states: jl
                    .iter()
                    .map(|l| (*l, if g.contains(l) { Light::Green } else { Light::Red }))
                    .collect(),
            })
            .collect();
        let mut program: Vec<(usize, f64)> = (0..phases.len()).map(|p| (p, cfg.phase_duration)).collect();
        if !program.is_empty() {
            let shift = rng.gen_range(0..program.len());
            program.rotate_left(shift);
        }
        junctions.push(Junction {
            id: jid,
            lanes: jl,
            phases,
            fixed_program: program,
            policy: TlPolicy::FixedTime,
        });
    }

    // Point AOIs, one per road.
    let mut aois = Vec::new();
    for road in &roads {
        let lane = *road.lanes.last().expect("road has lanes");
        let l = &lanes[lane.idx()];
        let s = canon(l.length / 2.0);
        let d = road_dir[road.id.idx()];
        let n = Point::new(d.y, -d.x);
        let p = at(l.start(), d, s, n, LANE_WIDTH);
        let id = AoiId::from_idx(aois.len());
        layout.road_aoi.push(id);
        aois.push(Aoi {
            id,
            polygon: vec![p],
            gates: vec![(lane, s)],
        });
    }

    Ok((
        RoadNetwork {
            lanes,
            roads,
            junctions,
            aois,
        },
        layout,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_degenerate_grids() {
        assert_eq!(
            generate_grid(1, 3, 300.0, 1, 0).unwrap_err(),
            GridError::TooSmall { rows: 1, cols: 3 }
        );
        assert!(generate_grid(2, 2, 300.0, 0, 0).is_err());
        let mut cfg = GridConfig::new(2, 2, 300.0, 2, 0);
        cfg.dynamic_lane = true;
        assert_eq!(generate_grid_with(&cfg).unwrap_err(), GridError::DynamicLaneTooNarrow(2));
    }

    #[test]
    fn turn_classification() {
        let e = Point::new(1.0, 0.0);
        let n = Point::new(0.0, 1.0);
        assert_eq!(turn_between(e, e), Some(Turn::Straight));
        assert_eq!(turn_between(e, n), Some(Turn::Left));
        assert_eq!(turn_between(n, e), Some(Turn::Right));
        assert_eq!(turn_between(e, Point::new(-1.0, 0.0)), None);
    }

    #[test]
    fn road_lanes_have_requested_length() {
        let net = generate_grid(3, 3, 250.0, 2, 1).unwrap();
        for l in net.lanes.iter().filter(|l| !l.is_junction_lane()) {
            assert_eq!(l.length, 250.0);
        }
    }

    #[test]
    fn single_lane_grids_use_split_phasing() {
        let (net, layout) = generate_grid_with(&GridConfig::new(3, 3, 200.0, 1, 5)).unwrap();
        let centre = net.junction(layout.junction_at(1, 1));
        assert_eq!(centre.phases.len(), 4);
        // Every junction lane is green in exactly one phase.
        for l in &centre.lanes {
            let greens = centre.phases.iter().filter(|p| p.state(*l) == Light::Green).count();
            assert_eq!(greens, 1);
        }
    }
}
