//! Independent reference implementations used as test oracles.

use std::collections::BTreeMap;

use microflow::ids::{LaneId, VehicleId};
use microflow::index::{IndexDelta, LaneIndex};
use rand::Rng;

// ---- behaviour models, written out from the formulas -------------------

pub struct Params {
    pub a: f64,
    pub b: f64,
    pub t: f64,
    pub s0: f64,
}

pub const DEFAULTS: Params = Params { a: 2.0, b: 3.0, t: 1.5, s0: 2.0 };

/// IDM with the emergency clamp at -8 and a contact gap braking at -8.
pub fn idm(v: f64, v0: f64, gap: f64, dv: f64, p: &Params) -> f64 {
    if gap <= 0.0 {
        return -8.0;
    }
    let star = p.s0 + f64::max(0.0, v * p.t + v * dv / (2.0 * f64::sqrt(p.a * p.b)));
    let follow = if gap == f64::INFINITY { 0.0 } else { (star / gap).powf(2.0) };
    let acc = p.a * (1.0 - (v / v0).powf(4.0) - follow);
    if acc < -8.0 {
        -8.0
    } else {
        acc
    }
}

/// Stop-line response under RED/YELLOW: the smaller of real-leader IDM and
/// IDM against a stopped obstacle at the line, never creeping forward
/// when stopped within s0 + length of the line.
pub fn stop_line(v: f64, v0: f64, gap: f64, dv: f64, dist: f64, len: f64, p: &Params) -> f64 {
    let a = f64::min(idm(v, v0, gap, dv, p), idm(v, v0, dist, v, p));
    if v < 0.1 && dist <= p.s0 + len {
        f64::min(a, 0.0)
    } else {
        a
    }
}

pub fn p_lc(u_total: f64) -> f64 {
    if u_total >= 1.0 {
        0.9
    } else if u_total > 0.0 {
        (0.9 - 2e-8) * u_total
    } else {
        2e-8
    }
}

pub fn utility(ego: (f64, f64), new: (f64, f64), old: (f64, f64)) -> f64 {
    (ego.1 - ego.0) + 0.1 * ((new.1 - new.0) + (old.1 - old.0))
}

pub fn close(a: f64, b: f64, rel: f64) -> bool {
    if a == b {
        return true;
    }
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
}

// ---- ordered index ------------------------------------------------------

/// Sorted arrays per lane plus the lane adjacency.
#[derive(Clone, Default)]
pub struct SortedLanes {
    pub lanes: Vec<Vec<(f64, VehicleId)>>,
    pub left: Vec<Option<LaneId>>,
    pub right: Vec<Option<LaneId>>,
    pub at: BTreeMap<VehicleId, LaneId>,
}

fn key_cmp(a: &(f64, VehicleId), b: &(f64, VehicleId)) -> std::cmp::Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

impl SortedLanes {
    pub fn new(neighbors: &[(Option<LaneId>, Option<LaneId>)]) -> Self {
        Self {
            lanes: vec![Vec::new(); neighbors.len()],
            left: neighbors.iter().map(|n| n.0).collect(),
            right: neighbors.iter().map(|n| n.1).collect(),
            at: BTreeMap::new(),
        }
    }

    fn s_of(&self, v: VehicleId) -> f64 {
        let l = self.at[&v];
        self.lanes[l.idx()].iter().find(|x| x.1 == v).unwrap().0
    }

    fn remove(&mut self, v: VehicleId) {
        let l = self.at.remove(&v).unwrap();
        self.lanes[l.idx()].retain(|x| x.1 != v);
    }

    fn insert(&mut self, l: LaneId, v: VehicleId, s: f64) {
        self.lanes[l.idx()].push((s, v));
        self.lanes[l.idx()].sort_by(key_cmp);
        self.at.insert(v, l);
    }

    pub fn apply(&mut self, d: &IndexDelta) {
        for (_, v) in &d.removals {
            self.remove(*v);
        }
        for (v, s) in &d.moves {
            let l = self.at[v];
            self.remove(*v);
            self.insert(l, *v, *s);
        }
        for (l, v, s) in &d.insertions {
            self.insert(*l, *v, *s);
        }
    }

    pub fn front(&self, v: VehicleId) -> Option<(VehicleId, f64)> {
        let l = self.at[&v];
        let list = &self.lanes[l.idx()];
        let i = list.iter().position(|x| x.1 == v).unwrap();
        list.get(i + 1).map(|x| (x.1, x.0))
    }

    pub fn back(&self, v: VehicleId) -> Option<(VehicleId, f64)> {
        let l = self.at[&v];
        let list = &self.lanes[l.idx()];
        let i = list.iter().position(|x| x.1 == v).unwrap();
        i.checked_sub(1).map(|j| (list[j].1, list[j].0))
    }

    /// `(front, back)` in `side`: smallest key with s strictly ahead, and
    /// largest key with s at or behind.
    fn side(&self, side: Option<LaneId>, s: f64) -> (Option<(VehicleId, f64)>, Option<(VehicleId, f64)>) {
        let Some(side) = side else { return (None, None) };
        let list = &self.lanes[side.idx()];
        let front = list.iter().filter(|x| x.0 > s).min_by(|a, b| key_cmp(a, b));
        let back = list.iter().filter(|x| x.0 <= s).max_by(|a, b| key_cmp(a, b));
        (front.map(|x| (x.1, x.0)), back.map(|x| (x.1, x.0)))
    }

    /// The six neighbors: front, back, left front, left back, right front, right back.
    pub fn six(&self, v: VehicleId) -> [Option<(VehicleId, f64)>; 6] {
        let l = self.at[&v];
        let s = self.s_of(v);
        let (lf, lb) = self.side(self.left[l.idx()], s);
        let (rf, rb) = self.side(self.right[l.idx()], s);
        [self.front(v), self.back(v), lf, lb, rf, rb]
    }

    /// A random valid delta over vehicle ids `0..max_id`. Positions are
    /// drawn from a coarse grid so that equal positions occur.
    pub fn random_delta(&self, rng: &mut impl Rng, max_id: u32, len: f64) -> IndexDelta {
        let mut d = IndexDelta::default();
        let mut used = std::collections::HashSet::new();
        let n_lanes = self.lanes.len() as u32;
        let pos = |rng: &mut dyn rand::RngCore| (rng.gen_range(0..=(len as u32 * 2)) as f64) * 0.5;
        let ops = rng.gen_range(1..=8);
        for _ in 0..ops {
            let v = VehicleId(rng.gen_range(0..max_id));
            if !used.insert(v) {
                continue;
            }
            match (self.at.get(&v), rng.gen_range(0..4)) {
                (None, _) => d.insertions.push((LaneId(rng.gen_range(0..n_lanes)), v, pos(rng))),
                (Some(&l), 0) => d.removals.push((l, v)),
                (Some(&l), 1) => {
                    d.removals.push((l, v));
                    d.insertions.push((LaneId(rng.gen_range(0..n_lanes)), v, pos(rng)));
                }
                (Some(_), _) => d.moves.push((v, pos(rng))),
            }
        }
        d
    }
}

/// Compare every neighbor query of `idx` against the oracle.
pub fn index_matches(idx: &LaneIndex, o: &SortedLanes) -> Result<(), String> {
    if idx.len() != o.at.len() {
        return Err(format!("size {} vs {}", idx.len(), o.at.len()));
    }
    for (l, list) in o.lanes.iter().enumerate() {
        let got: Vec<VehicleId> = idx.lane_vehicles(LaneId::from_idx(l)).to_vec();
        let want: Vec<VehicleId> = list.iter().map(|x| x.1).collect();
        if got != want {
            return Err(format!("lane {l} order {got:?} vs {want:?}"));
        }
    }
    for &v in o.at.keys() {
        let got = [
            idx.front(v).unwrap(),
            idx.back(v).unwrap(),
            idx.left_front(v).unwrap(),
            idx.left_back(v).unwrap(),
            idx.right_front(v).unwrap(),
            idx.right_back(v).unwrap(),
        ];
        let want = o.six(v);
        if got != want {
            return Err(format!("vehicle {v}: {got:?} vs {want:?}"));
        }
    }
    Ok(())
}

/// Three parallel lanes, leftmost first.
pub fn three_lanes() -> Vec<(Option<LaneId>, Option<LaneId>)> {
    vec![
        (None, Some(LaneId(1))),
        (Some(LaneId(0)), Some(LaneId(2))),
        (Some(LaneId(1)), None),
    ]
}

/// Run `n` random deltas against the oracle; returns the number applied.
pub fn index_oracle_run(seed: u64, n: usize, max_id: u32) -> Result<usize, String> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let nb = three_lanes();
    let mut idx = LaneIndex::from_neighbors(nb.clone());
    let mut o = SortedLanes::new(&nb);
    for k in 0..n {
        let d = o.random_delta(&mut rng, max_id, 100.0);
        idx.apply_delta(&d).map_err(|e| format!("delta {k}: {e}"))?;
        o.apply(&d);
        index_matches(&idx, &o).map_err(|e| format!("after delta {k} {d:?}: {e}"))?;
    }
    Ok(n)
}

// ---- model comparisons on random inputs ----------------------------------

use microflow::models::{
    change_probability, idm_accel, mobil_decision, mobil_utility, signal_accel, CarFollowInput, LaneChangeInput,
    LaneDecision,
};
use microflow::netmodel::{Light, VehicleProfile};
use rand_chacha::ChaCha8Rng;

pub fn random_profile(rng: &mut impl Rng) -> VehicleProfile {
    VehicleProfile {
        a_max: rng.gen_range(0.5..4.0),
        a_comf: rng.gen_range(0.5..5.0),
        headway: rng.gen_range(0.5..3.0),
        min_gap: rng.gen_range(0.5..5.0),
        v_max: rng.gen_range(5.0..40.0),
        length: rng.gen_range(3.0..15.0),
    }
}

pub fn params(p: &VehicleProfile) -> Params {
    Params { a: p.a_max, b: p.a_comf, t: p.headway, s0: p.min_gap }
}

pub fn random_input(rng: &mut impl Rng) -> CarFollowInput {
    let profile = random_profile(rng);
    let v0 = rng.gen_range(1.0..35.0);
    CarFollowInput {
        v: rng.gen_range(0.0..v0 * 1.2),
        v0,
        gap: if rng.gen_bool(0.1) { f64::INFINITY } else { rng.gen_range(0.01..200.0) },
        delta_v: rng.gen_range(-15.0..15.0),
        profile,
    }
}

fn seeded(seed: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn check_idm(seed: u64, n: usize) -> Result<(), String> {
    let mut rng = seeded(seed);
    for _ in 0..n {
        let x = random_input(&mut rng);
        let got = idm_accel(&x).map_err(|e| format!("{x:?}: {e}"))?;
        let want = idm(x.v, x.v0, x.gap, x.delta_v, &params(&x.profile));
        if !close(got, want, 1e-9) {
            return Err(format!("idm {x:?}: {got} vs {want}"));
        }
    }
    Ok(())
}

pub fn check_signal(seed: u64, n: usize) -> Result<(), String> {
    let mut rng = seeded(seed);
    for _ in 0..n {
        let x = random_input(&mut rng);
        let dist = rng.gen_range(0.0..150.0);
        let light = [Light::Green, Light::Yellow, Light::Red][rng.gen_range(0..3)];
        let got = signal_accel(&x, dist, light).map_err(|e| format!("{x:?}: {e}"))?;
        let p = params(&x.profile);
        let want = match light {
            Light::Green => idm(x.v, x.v0, x.gap, x.delta_v, &p),
            _ => stop_line(x.v, x.v0, x.gap, x.delta_v, dist, x.profile.length, &p),
        };
        if !close(got, want, 1e-9) {
            return Err(format!("signal {x:?} {dist} {light:?}: {got} vs {want}"));
        }
    }
    Ok(())
}

pub fn check_p_lc(seed: u64, n: usize) -> Result<(), String> {
    let mut rng = seeded(seed);
    for _ in 0..n {
        let u = match rng.gen_range(0..4) {
            0 => 0.0,
            1 => rng.gen_range(1.0..10.0),
            _ => rng.gen_range(0.0..1.0),
        };
        if !close(change_probability(u), p_lc(u), 1e-9) {
            return Err(format!("p_lc({u}): {} vs {}", change_probability(u), p_lc(u)));
        }
    }
    Ok(())
}

pub fn check_mobil(seed: u64, n: usize) -> Result<(), String> {
    let mut rng = seeded(seed);
    let side = |rng: &mut ChaCha8Rng| LaneChangeInput {
        ego_after: rng.gen_range(-9.0..2.0),
        ego_before: rng.gen_range(-9.0..2.0),
        new_follower_after: rng.gen_range(-9.0..2.0),
        new_follower_before: rng.gen_range(-9.0..2.0),
        old_follower_after: rng.gen_range(-9.0..2.0),
        old_follower_before: rng.gen_range(-9.0..2.0),
    };
    let u = |x: &LaneChangeInput| {
        utility(
            (x.ego_before, x.ego_after),
            (x.new_follower_before, x.new_follower_after),
            (x.old_follower_before, x.old_follower_after),
        )
    };
    for _ in 0..n {
        let l = rng.gen_bool(0.8).then(|| side(&mut rng));
        let r = rng.gen_bool(0.8).then(|| side(&mut rng));
        let draw: f64 = rng.gen();
        let safe = |x: &Option<LaneChangeInput>| x.filter(|x| x.new_follower_after > -8.0 && x.ego_after > -8.0);
        let (sl, sr) = (safe(&l), safe(&r));
        let ul = sl.map_or(0.0, |x| u(&x).max(0.0));
        let ur = sr.map_or(0.0, |x| u(&x).max(0.0));
        for x in [&l, &r].into_iter().flatten() {
            if !close(mobil_utility(x), u(x), 1e-9) {
                return Err(format!("utility {x:?}: {} vs {}", mobil_utility(x), u(x)));
            }
        }
        let want = if (sl.is_none() && sr.is_none()) || draw >= p_lc(ul + ur) {
            LaneDecision::Stay
        } else if sr.is_none() || (sl.is_some() && ul >= ur) {
            LaneDecision::Left
        } else {
            LaneDecision::Right
        };
        let got = mobil_decision(l.as_ref(), r.as_ref(), draw);
        if got != want {
            return Err(format!("mobil {l:?} {r:?} {draw}: {got:?} vs {want:?}"));
        }
    }
    Ok(())
}

/// `idm_accel(v = v0, gap = ∞)` is exactly zero.
pub fn check_equilibrium(seed: u64, n: usize) -> Result<(), String> {
    let mut rng = seeded(seed);
    for _ in 0..n {
        let p = random_profile(&mut rng);
        let v0 = rng.gen_range(1.0..40.0);
        let a = idm_accel(&CarFollowInput::free(v0, v0, p)).map_err(|e| e.to_string())?;
        if a != 0.0 {
            return Err(format!("v0={v0} {p:?}: {a}"));
        }
    }
    Ok(())
}
