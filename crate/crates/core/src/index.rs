//! Per-lane ordered vehicle lists with side pointers.
//!
//! Every lane holds a doubly linked list of its vehicles ordered by
//! `(s, vehicle id)`. Each node also points at its front/back neighbors in
//! the adjacent left and right lanes, so all six neighbor queries are a
//! single pointer read. Nodes live in an arena indexed by vehicle id.
//!
//! Side-pointer convention: `*_back` is the neighbor-lane node with the
//! largest `s <= own s`; `*_front` the one with the smallest `s > own s`.
//! A neighbor at exactly equal `s` therefore counts as back.

use std::collections::BTreeMap;

use rayon::prelude::*;
use thiserror::Error;

use crate::ids::{LaneId, VehicleId};
use crate::netmodel::RoadNetwork;

#[derive(Debug, Error, PartialEq)]
pub enum IndexError {
    #[error("unknown lane {0}")]
    UnknownLane(LaneId),
    #[error("vehicle {0} is not indexed")]
    UnknownVehicle(VehicleId),
    #[error("vehicle {0} is already indexed")]
    DuplicateInsertion(VehicleId),
    #[error("vehicle {vehicle} is not on lane {lane}")]
    AbsentRemoval { lane: LaneId, vehicle: VehicleId },
    #[error("vehicle {0} appears twice in one delta list")]
    Repeated(VehicleId),
    #[error("vehicle {0} is both moved and removed or inserted")]
    MoveConflict(VehicleId),
    #[error("non-finite position for vehicle {0}")]
    BadPosition(VehicleId),
}

/// One batch of index changes.
///
/// A vehicle may appear in at most one entry per list. Removing a vehicle
/// from one lane and inserting it into another in the same delta transfers it.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct IndexDelta {
    pub removals: Vec<(LaneId, VehicleId)>,
    pub insertions: Vec<(LaneId, VehicleId, f64)>,
    /// `(vehicle, new s)` within the vehicle's current lane.
    pub moves: Vec<(VehicleId, f64)>,
}

impl IndexDelta {
    pub fn is_empty(&self) -> bool {
        self.removals.is_empty() && self.insertions.is_empty() && self.moves.is_empty()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
struct Node {
    present: bool,
    lane: LaneId,
    s: f64,
    prev: Option<VehicleId>,
    next: Option<VehicleId>,
    side: [Option<VehicleId>; 4],
}

const LEFT_FRONT: usize = 0;
const LEFT_BACK: usize = 1;
const RIGHT_FRONT: usize = 2;
const RIGHT_BACK: usize = 3;

#[derive(Clone, Debug, Default)]
pub struct LaneIndex {
    nodes: Vec<Node>,
    /// Per lane, vehicles in list order; head is `order[0]`.
    order: Vec<Vec<VehicleId>>,
    left: Vec<Option<LaneId>>,
    right: Vec<Option<LaneId>>,
    /// Lanes naming this lane as a neighbor, or named by it.
    adjacent: Vec<Vec<LaneId>>,
    count: usize,
}

impl LaneIndex {
    pub fn new(net: &RoadNetwork) -> Self {
        Self::from_neighbors(net.lanes.iter().map(|l| (l.left, l.right)).collect())
    }

    /// Index over lanes `0..n` with the given `(left, right)` neighbors.
    pub fn from_neighbors(neighbors: Vec<(Option<LaneId>, Option<LaneId>)>) -> Self {
        let n = neighbors.len();
        let mut adjacent = vec![Vec::new(); n];
        for (i, (l, r)) in neighbors.iter().enumerate() {
            for nb in [l, r].into_iter().flatten() {
                adjacent[i].push(*nb);
                adjacent[nb.idx()].push(LaneId::from_idx(i));
            }
        }
        let (left, right) = neighbors.into_iter().unzip();
        Self {
            nodes: Vec::new(),
            order: vec![Vec::new(); n],
            left,
            right,
            adjacent,
            count: 0,
        }
    }

    pub fn lane_count(&self) -> usize {
        self.order.len()
    }

    /// Number of indexed vehicles.
    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn contains(&self, v: VehicleId) -> bool {
        self.nodes.get(v.idx()).is_some_and(|n| n.present)
    }

    /// Vehicles on a lane from back (smallest s) to front.
    pub fn lane_vehicles(&self, lane: LaneId) -> &[VehicleId] {
        &self.order[lane.idx()]
    }

    pub fn head(&self, lane: LaneId) -> Option<(VehicleId, f64)> {
        self.order[lane.idx()].first().map(|v| (*v, self.nodes[v.idx()].s))
    }

    pub fn tail(&self, lane: LaneId) -> Option<(VehicleId, f64)> {
        self.order[lane.idx()].last().map(|v| (*v, self.nodes[v.idx()].s))
    }

    pub fn position(&self, v: VehicleId) -> Result<(LaneId, f64), IndexError> {
        let n = self.node(v)?;
        Ok((n.lane, n.s))
    }

    /// First vehicle on `lane` whose `s` is at least `s`.
    pub fn first_at_or_after(&self, lane: LaneId, s: f64) -> Option<(VehicleId, f64)> {
        let o = &self.order[lane.idx()];
        let i = o.partition_point(|v| self.nodes[v.idx()].s < s);
        o.get(i).map(|v| (*v, self.nodes[v.idx()].s))
    }

    /// Last vehicle on `lane` whose `s` is at most `s`.
    pub fn last_at_or_before(&self, lane: LaneId, s: f64) -> Option<(VehicleId, f64)> {
        let o = &self.order[lane.idx()];
        let i = o.partition_point(|v| self.nodes[v.idx()].s <= s);
        i.checked_sub(1).map(|i| (o[i], self.nodes[o[i].idx()].s))
    }

    fn node(&self, v: VehicleId) -> Result<&Node, IndexError> {
        self.nodes
            .get(v.idx())
            .filter(|n| n.present)
            .ok_or(IndexError::UnknownVehicle(v))
    }

    fn with_s(&self, v: Option<VehicleId>) -> Option<(VehicleId, f64)> {
        v.map(|v| (v, self.nodes[v.idx()].s))
    }

    pub fn front(&self, v: VehicleId) -> Result<Option<(VehicleId, f64)>, IndexError> {
        Ok(self.with_s(self.node(v)?.next))
    }

    pub fn back(&self, v: VehicleId) -> Result<Option<(VehicleId, f64)>, IndexError> {
        Ok(self.with_s(self.node(v)?.prev))
    }

    pub fn left_front(&self, v: VehicleId) -> Result<Option<(VehicleId, f64)>, IndexError> {
        Ok(self.with_s(self.node(v)?.side[LEFT_FRONT]))
    }

    pub fn left_back(&self, v: VehicleId) -> Result<Option<(VehicleId, f64)>, IndexError> {
        Ok(self.with_s(self.node(v)?.side[LEFT_BACK]))
    }

    pub fn right_front(&self, v: VehicleId) -> Result<Option<(VehicleId, f64)>, IndexError> {
        Ok(self.with_s(self.node(v)?.side[RIGHT_FRONT]))
    }

    pub fn right_back(&self, v: VehicleId) -> Result<Option<(VehicleId, f64)>, IndexError> {
        Ok(self.with_s(self.node(v)?.side[RIGHT_BACK]))
    }

    fn check_lane(&self, lane: LaneId) -> Result<(), IndexError> {
        if lane.idx() < self.order.len() {
            Ok(())
        } else {
            Err(IndexError::UnknownLane(lane))
        }
    }

    fn validate(&self, d: &IndexDelta) -> Result<(), IndexError> {
        const REMOVED: u8 = 1;
        const INSERTED: u8 = 2;
        const MOVED: u8 = 4;
        let max_id = d
            .insertions
            .iter()
            .map(|x| x.1.idx() + 1)
            .max()
            .unwrap_or(0)
            .max(self.nodes.len());
        let mut marks = vec![0u8; max_id];
        for &(lane, v) in &d.removals {
            self.check_lane(lane)?;
            match self.nodes.get(v.idx()) {
                Some(n) if n.present && n.lane == lane => {}
                _ => return Err(IndexError::AbsentRemoval { lane, vehicle: v }),
            }
            if marks[v.idx()] & REMOVED != 0 {
                return Err(IndexError::Repeated(v));
            }
            marks[v.idx()] |= REMOVED;
        }
        for &(lane, v, s) in &d.insertions {
            self.check_lane(lane)?;
            if !s.is_finite() {
                return Err(IndexError::BadPosition(v));
            }
            let m = marks[v.idx()];
            if self.contains(v) && m & REMOVED == 0 {
                return Err(IndexError::DuplicateInsertion(v));
            }
            if m & INSERTED != 0 {
                return Err(IndexError::Repeated(v));
            }
            marks[v.idx()] |= INSERTED;
        }
        for &(v, s) in &d.moves {
            self.node(v)?;
            if !s.is_finite() {
                return Err(IndexError::BadPosition(v));
            }
            let m = marks[v.idx()];
            if m & (REMOVED | INSERTED) != 0 {
                return Err(IndexError::MoveConflict(v));
            }
            if m & MOVED != 0 {
                return Err(IndexError::Repeated(v));
            }
            marks[v.idx()] |= MOVED;
        }
        Ok(())
    }

    /// Apply a batch of changes. The delta is validated in full first; on
    /// error the index is left untouched.
    ///
    /// Touched lanes are re-sorted in parallel, then side pointers are rebuilt
    /// for every touched lane and every lane adjacent to one.
    pub fn apply_delta(&mut self, d: &IndexDelta) -> Result<(), IndexError> {
        self.validate(d)?;
        if d.is_empty() {
            return Ok(());
        }
        let n_lanes = self.order.len();
        let mut touched = vec![false; n_lanes];
        let mut inserted_by_lane: BTreeMap<LaneId, Vec<VehicleId>> = BTreeMap::new();
        for &(lane, v) in &d.removals {
            self.nodes[v.idx()].present = false;
            self.count -= 1;
            touched[lane.idx()] = true;
        }
        for &(lane, v, s) in &d.insertions {
            if v.idx() >= self.nodes.len() {
                self.nodes.resize(v.idx() + 1, Node::default());
            }
            self.nodes[v.idx()] = Node {
                present: true,
                lane,
                s,
                ..Node::default()
            };
            self.count += 1;
            touched[lane.idx()] = true;
            inserted_by_lane.entry(lane).or_default().push(v);
        }
        for &(v, s) in &d.moves {
            let n = &mut self.nodes[v.idx()];
            n.s = s;
            touched[n.lane.idx()] = true;
        }

        let touched_lanes: Vec<LaneId> = (0..n_lanes)
            .filter(|i| touched[*i])
            .map(LaneId::from_idx)
            .collect();
        let mut fresh = vec![false; self.nodes.len()];
        for &(_, v, _) in &d.insertions {
            fresh[v.idx()] = true;
        }
        let fresh = &fresh;
        let nodes = &self.nodes;
        let order = &self.order;
        let key = |v: &VehicleId| (nodes[v.idx()].s, *v);
        let rebuilt: Vec<Vec<VehicleId>> = touched_lanes
            .par_iter()
            .map(|lane| {
                let mut o: Vec<VehicleId> = order[lane.idx()]
                    .iter()
                    .copied()
                    .filter(|v| !fresh[v.idx()] && nodes[v.idx()].present && nodes[v.idx()].lane == *lane)
                    .collect();
                if let Some(extra) = inserted_by_lane.get(lane) {
                    o.extend(extra);
                }
                o.sort_by(|a, b| {
                    let (sa, ia) = key(a);
                    let (sb, ib) = key(b);
                    sa.total_cmp(&sb).then(ia.cmp(&ib))
                });
                o
            })
            .collect();
        for (lane, o) in touched_lanes.iter().zip(rebuilt) {
            for (i, v) in o.iter().enumerate() {
                let n = &mut self.nodes[v.idx()];
                n.prev = i.checked_sub(1).map(|j| o[j]);
                n.next = o.get(i + 1).copied();
            }
            self.order[lane.idx()] = o;
        }

        let mut side_dirty = touched.clone();
        for lane in &touched_lanes {
            // A lane's side pointers depend on its neighbors' contents, so
            // lanes whose neighbor changed are rebuilt too.
            for nb in &self.adjacent[lane.idx()] {
                side_dirty[nb.idx()] = true;
            }
        }
        let dirty: Vec<usize> = (0..n_lanes).filter(|i| side_dirty[*i]).collect();
        let nodes = &self.nodes;
        let order = &self.order;
        let (left, right) = (&self.left, &self.right);
        let sides: Vec<Vec<(VehicleId, [Option<VehicleId>; 4])>> = dirty
            .par_iter()
            .map(|&lane| {
                let own = &order[lane];
                let l = left[lane].map(|x| &order[x.idx()][..]).unwrap_or(&[]);
                let r = right[lane].map(|x| &order[x.idx()][..]).unwrap_or(&[]);
                let mut li = 0;
                let mut ri = 0;
                own.iter()
                    .map(|v| {
                        let s = nodes[v.idx()].s;
                        while li < l.len() && nodes[l[li].idx()].s <= s {
                            li += 1;
                        }
                        while ri < r.len() && nodes[r[ri].idx()].s <= s {
                            ri += 1;
                        }
                        let side = [
                            l.get(li).copied(),
                            li.checked_sub(1).map(|i| l[i]),
                            r.get(ri).copied(),
                            ri.checked_sub(1).map(|i| r[i]),
                        ];
                        (*v, side)
                    })
                    .collect()
            })
            .collect();
        for lane_sides in sides {
            for (v, side) in lane_sides {
                self.nodes[v.idx()].side = side;
            }
        }
        Ok(())
    }
}
