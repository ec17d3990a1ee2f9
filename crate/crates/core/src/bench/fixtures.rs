//! Synthetic scenario fixtures.

use crate::engine::{Engine, EngineConfig, EngineError};
use crate::ids::RoadId;
use crate::netmodel::{
    generate_demand, generate_grid_with, DemandError, GridConfig, GridError, GridLayout, PeakWindow, RoadNetwork,
    TripPlan,
};
use crate::routing::{CostModel, Router};

use super::plan::{Peak, PlanProblem};
use super::ScenarioKind;

/// Morning simulation window: 7:50 to 9:10.
pub const MORNING_HORIZON: (f64, f64) = (28_200.0, 33_000.0);
/// Evening simulation window: 16:50 to 18:10.
pub const EVENING_HORIZON: (f64, f64) = (60_600.0, 65_400.0);

/// Target fixed-time arrival rate of the congested fixture.
pub const CONGESTED_ARRIVAL: f64 = 0.8;
pub const CONGESTED_TOLERANCE: f64 = 0.03;

#[derive(Debug, thiserror::Error)]
pub enum FixtureError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Demand(#[from] DemandError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Clone, Debug)]
pub struct Fixture {
    pub net: RoadNetwork,
    pub layout: GridLayout,
    pub trips: Vec<TripPlan>,
    pub horizon: (f64, f64),
}

/// 4x4 grid of 300 m roads with two lanes each.
pub fn congested_grid_config(seed: u64) -> GridConfig {
    GridConfig::new(4, 4, 300.0, 2, seed)
}

pub fn grid_fixture(cfg: &GridConfig, n_trips: usize, seed: u64) -> Result<Fixture, FixtureError> {
    let (net, layout) = generate_grid_with(cfg)?;
    let trips = generate_demand(&net, n_trips, PeakWindow::Morning, seed)?;
    Ok(Fixture { net, layout, trips, horizon: MORNING_HORIZON })
}

/// Share of trips finished by the end of the horizon under the junctions'
/// own programs.
pub fn arrival_rate(f: &Fixture, cfg: &EngineConfig) -> Result<f64, EngineError> {
    if f.trips.is_empty() {
        return Ok(1.0);
    }
    let mut e = Engine::new(
        f.net.clone(),
        f.trips.clone(),
        EngineConfig { start_time: f.horizon.0, ..cfg.clone() },
    )?;
    e.run_until(f.horizon.1);
    Ok(e.finished_count() as f64 / f.trips.len() as f64)
}

/// Bisect the trip count until the fixed-time arrival rate is within
/// [`CONGESTED_TOLERANCE`] of [`CONGESTED_ARRIVAL`]; returns the fixture
/// and its rate. Falls back to the closest count after `max_iter` probes.
pub fn calibrate_congested(seed: u64, cfg: &EngineConfig, max_iter: usize) -> Result<(Fixture, f64), FixtureError> {
    let grid = congested_grid_config(seed);
    let (mut lo, mut hi) = (1_000usize, 12_000usize);
    let mut best: Option<(Fixture, f64)> = None;
    for _ in 0..max_iter.max(1) {
        let n = (lo + hi) / 2;
        let f = grid_fixture(&grid, n, seed)?;
        let rate = arrival_rate(&f, cfg)?;
        let closer = best
            .as_ref()
            .map_or(true, |b| (rate - CONGESTED_ARRIVAL).abs() < (b.1 - CONGESTED_ARRIVAL).abs());
        let done = (rate - CONGESTED_ARRIVAL).abs() <= CONGESTED_TOLERANCE;
        if rate > CONGESTED_ARRIVAL {
            lo = n;
        } else {
            hi = n;
        }
        if closer {
            best = Some((f, rate));
        }
        if done || hi - lo < 50 {
            break;
        }
    }
    Ok(best.unwrap())
}

/// Default fixture for a periodic scenario in the bench driver.
pub fn scenario_fixture(kind: ScenarioKind, n_trips: usize, seed: u64) -> Result<Fixture, FixtureError> {
    let mut grid = congested_grid_config(seed);
    match kind {
        ScenarioKind::DynamicLane => {
            grid.lanes = 3;
            grid.dynamic_lane = true;
        }
        ScenarioKind::Tidal => grid.tidal = true,
        _ => {}
    }
    grid_fixture(&grid, n_trips, seed)
}

/// Vehicles per road when every trip follows its free-flow shortest route.
pub fn route_flow(net: &RoadNetwork, trips: &[TripPlan]) -> Vec<u32> {
    let router = Router::new(net, CostModel::FreeFlow);
    let mut flow = vec![0; net.roads.len()];
    for t in trips {
        if let Some(r) = router.route(t.route[0], *t.route.last().unwrap()) {
            for x in r {
                flow[x.idx()] += 1;
            }
        }
    }
    flow
}

/// Road planning problem on a grid.
///
/// A probe demand on the full grid ranks grid roads by flow; the
/// `n_candidates` busiest become candidates. The planning demand is then
/// drawn on the grid without them, so no trip starts or ends on a
/// candidate.
pub fn road_plan_problem(
    grid: &GridConfig,
    n_trips: usize,
    n_candidates: usize,
    budget: usize,
    seed: u64,
) -> Result<PlanProblem, FixtureError> {
    let (net, layout) = generate_grid_with(grid)?;
    let probe = generate_demand(&net, n_trips, PeakWindow::Morning, seed ^ 0x9e37_79b9)?;
    let flow = route_flow(&net, &probe);
    let mut ranked: Vec<RoadId> = layout.grid_roads.clone();
    ranked.sort_by(|a, b| flow[b.idx()].cmp(&flow[a.idx()]).then(a.cmp(b)));
    ranked.truncate(n_candidates);
    let mut p = PlanProblem {
        flow: ranked.iter().map(|r| flow[r.idx()]).collect(),
        candidates: ranked,
        net,
        budget,
        peaks: Vec::new(),
        cfg: EngineConfig { seed, ..EngineConfig::default() },
    };
    let closed = p.network_for(&vec![false; p.candidates.len()]);
    for (window, horizon) in [(PeakWindow::Morning, MORNING_HORIZON), (PeakWindow::Evening, EVENING_HORIZON)] {
        p.peaks.push(Peak { trips: generate_demand(&closed, n_trips, window, seed)?, horizon });
    }
    Ok(p)
}

/// Small planning problem for exhaustive comparison: 3x3 single-lane grid,
/// five candidates and a budget of one, so the search must locate the single
/// most useful road.
pub fn toy_road_plan(seed: u64) -> Result<PlanProblem, FixtureError> {
    road_plan_problem(&GridConfig::new(3, 3, 200.0, 1, seed), 600, 5, 1, seed)
}

/// Full-size planning problem: 50 candidates, budget 30.
pub fn road_plan_fixture(n_trips: usize, seed: u64) -> Result<PlanProblem, FixtureError> {
    road_plan_problem(&GridConfig::new(6, 6, 300.0, 2, seed), n_trips, 50, 30, seed)
}
