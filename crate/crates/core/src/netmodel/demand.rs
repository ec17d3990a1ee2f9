//! Peak-hour demand generator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::format::canon;
use super::{Endpoint, RoadNetwork, TripPlan, VehicleProfile};
use crate::ids::{AoiId, RoadId, VehicleId};
use crate::routing::{CostModel, Router};

/// Speed used to back departure times out of arrival times, m/s (60 km/h).
pub const ASSUMED_SPEED: f64 = 16.667;

const HOUR: f64 = 3600.0;
const MARGIN: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PeakWindow {
    Morning,
    Evening,
}

impl PeakWindow {
    /// `[start, end)` of the window, seconds since midnight.
    pub fn bounds(self) -> (f64, f64) {
        match self {
            PeakWindow::Morning => (8.0 * HOUR, 9.0 * HOUR),
            PeakWindow::Evening => (17.0 * HOUR, 18.0 * HOUR),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "morning" => Some(PeakWindow::Morning),
            "evening" => Some(PeakWindow::Evening),
            _ => None,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum DemandError {
    #[error("network has fewer than two AOIs")]
    TooFewAois,
    #[error("only {found} of {wanted} routable trips found within the retry budget")]
    NotEnoughRoutable { found: usize, wanted: usize },
}

/// Total length of the roads on a route, m.
pub fn route_length(net: &RoadNetwork, route: &[RoadId]) -> f64 {
    route.iter().map(|r| net.road_length(*r)).sum()
}

fn aoi_road(net: &RoadNetwork, a: AoiId) -> Option<RoadId> {
    net.aoi(a).gates.first().and_then(|(l, _)| net.lane(*l).road())
}

/// Sample `n_trips` AOI-to-AOI trips routable in both directions.
///
/// Morning trips arrive uniformly within 8:00-9:00 and depart earlier by the
/// route's travel time at [`ASSUMED_SPEED`]. Evening trips are the same
/// samples with origin and destination exchanged, departing uniformly within
/// 17:00-18:00. Trips are ordered by departure and numbered from 0.
pub fn generate_demand(
    net: &RoadNetwork,
    n_trips: usize,
    window: PeakWindow,
    seed: u64,
) -> Result<Vec<TripPlan>, DemandError> {
    if n_trips == 0 {
        return Ok(Vec::new());
    }
    let aois: Vec<(AoiId, RoadId)> = net
        .aois
        .iter()
        .filter_map(|a| aoi_road(net, a.id).map(|r| (a.id, r)))
        .collect();
    if aois.len() < 2 {
        return Err(DemandError::TooFewAois);
    }
    let router = Router::new(net, CostModel::FreeFlow);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let budget = n_trips * 20 + 100;
    let (lo, hi) = window.bounds();
    let mut trips = Vec::with_capacity(n_trips);
    let mut attempts = 0;
    while trips.len() < n_trips {
        if attempts == budget {
            return Err(DemandError::NotEnoughRoutable {
                found: trips.len(),
                wanted: n_trips,
            });
        }
        attempts += 1;
        let (o, ro) = aois[rng.gen_range(0..aois.len())];
        let (d, rd) = aois[rng.gen_range(0..aois.len())];
        if ro == rd {
            continue;
        }
        let (Some(fwd), Some(back)) = (router.route(ro, rd), router.route(rd, ro)) else {
            continue;
        };
        // Margin keeps 9-digit rounding of the departure inside the window.
        let t = lo + MARGIN + rng.gen::<f64>() * (hi - lo - 2.0 * MARGIN);
        let (origin, destination, route, departure) = match window {
            PeakWindow::Morning => {
                let travel = route_length(net, &fwd) / ASSUMED_SPEED;
                (o, d, fwd, canon(t - travel).max(0.0))
            }
            PeakWindow::Evening => (d, o, back, canon(t)),
        };
        trips.push(TripPlan {
            person: VehicleId(0),
            origin: Endpoint::Aoi(origin),
            destination: Endpoint::Aoi(destination),
            departure,
            route,
            profile: VehicleProfile::default(),
        });
    }
    trips.sort_by(|a, b| a.departure.total_cmp(&b.departure));
    for (i, t) in trips.iter_mut().enumerate() {
        t.person = VehicleId::from_idx(i);
    }
    Ok(trips)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::generate_grid;

    #[test]
    fn zero_trips_is_empty() {
        let net = generate_grid(2, 2, 100.0, 1, 0).unwrap();
        assert!(generate_demand(&net, 0, PeakWindow::Morning, 1).unwrap().is_empty());
    }

    #[test]
    fn evening_mirrors_morning_samples() {
        let net = generate_grid(3, 3, 200.0, 1, 2).unwrap();
        let m = generate_demand(&net, 50, PeakWindow::Morning, 9).unwrap();
        let e = generate_demand(&net, 50, PeakWindow::Evening, 9).unwrap();
        let mut fwd: Vec<_> = m.iter().map(|t| (format!("{:?}", t.origin), format!("{:?}", t.destination))).collect();
        let mut rev: Vec<_> = e.iter().map(|t| (format!("{:?}", t.destination), format!("{:?}", t.origin))).collect();
        fwd.sort();
        rev.sort();
        assert_eq!(fwd, rev);
    }

    #[test]
    fn window_parse() {
        assert_eq!(PeakWindow::parse("Morning"), Some(PeakWindow::Morning));
        assert_eq!(PeakWindow::parse("noon"), None);
    }
}
