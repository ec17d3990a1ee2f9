use std::collections::BTreeMap;

use microflow::ids::*;
use microflow::netmodel::*;
use proptest::prelude::*;

/// One road of two lanes between two junctions, built by hand.
fn tiny_network() -> RoadNetwork {
    let lane = |id: u32, y: f64| Lane {
        id: LaneId(id),
        parent: Parent::Road(RoadId(0)),
        centerline: vec![Point::new(0.0, y), Point::new(100.0, y)],
        length: 100.0,
        max_speed: 13.0,
        turn: Turn::Straight,
        predecessors: vec![],
        successors: vec![],
        left: None,
        right: None,
        restricted: false,
    };
    let mut a = lane(0, 0.0);
    let mut b = lane(1, -3.5);
    a.right = Some(LaneId(1));
    b.left = Some(LaneId(0));
    let junc = |id: u32| Junction {
        id: JunctionId(id),
        lanes: vec![],
        phases: vec![],
        fixed_program: vec![],
        policy: TlPolicy::None,
    };
    RoadNetwork {
        lanes: vec![a, b],
        roads: vec![Road {
            id: RoadId(0),
            lanes: vec![LaneId(0), LaneId(1)],
            lane_plans: vec![vec![TurnSet::of(&[Turn::Straight]); 2]],
            active_plan: 0,
            tidal_partner: None,
            toll: 0.0,
        }],
        junctions: vec![junc(0), junc(1)],
        aois: vec![Aoi {
            id: AoiId(0),
            polygon: vec![Point::new(50.0, -8.0)],
            gates: vec![(LaneId(1), 50.0)],
        }],
    }
}

#[test]
fn well_formed_tiny_network_has_no_violations() {
    assert_eq!(validate_network(&tiny_network()), vec![]);
}

#[test]
fn one_sided_successor_is_asymmetric_topology() {
    let mut net = tiny_network();
    net.lanes[0].successors.push(LaneId(1));
    let v = validate_network(&net);
    assert_eq!(v.len(), 1, "{v:?}");
    assert_eq!(v[0].rule, "asymmetric-topology");
    assert_eq!(v[0].entity, "lane 0");
}

#[test]
fn phase_missing_a_lane_is_incomplete() {
    let mut net = generate_grid(2, 2, 300.0, 1, 7).unwrap();
    let lane = net.junctions[0].lanes[0];
    net.junctions[0].phases[0].lane_states.remove(&lane);
    let v = validate_network(&net);
    assert_eq!(v.len(), 1, "{v:?}");
    assert_eq!(v[0].rule, "incomplete-phase");
    assert_eq!(v[0].entity, "junction 0");
}

#[test]
fn other_rules_are_reported() {
    let mut net = tiny_network();
    net.lanes[0].length = 101.0;
    net.lanes[1].left = None;
    net.roads[0].active_plan = 3;
    net.aois[0].gates[0].1 = 150.0;
    let rules: Vec<&str> = validate_network(&net).iter().map(|v| v.rule).collect();
    for r in ["lane-length", "neighbor-mutual", "road-plan", "aoi-gate"] {
        assert!(rules.contains(&r), "{r} missing from {rules:?}");
    }
}

#[test]
fn two_by_two_grid_counts() {
    let (net, layout) = generate_grid_with(&GridConfig::new(2, 2, 300.0, 1, 7)).unwrap();
    assert_eq!(validate_network(&net), vec![]);
    let signalized = net
        .junctions
        .iter()
        .filter(|j| j.policy != TlPolicy::None)
        .count();
    assert_eq!(signalized, 4);
    assert_eq!(layout.grid_junctions.len(), 4);
    // Terminal junctions exist only as lane-less boundary ends.
    assert!(layout
        .terminal_junctions
        .iter()
        .all(|j| net.junction(*j).lanes.is_empty() && net.junction(*j).policy == TlPolicy::None));
    assert_eq!(net.roads.len(), 16);
    assert_eq!(net.roads.len() / 2, 8);
    for pair in net.roads.chunks(2) {
        assert_eq!(net.road_start(pair[0].id).dist(net.road_end(pair[1].id)) < 10.0, true);
    }
}

#[test]
fn four_by_four_three_lane_grid_counts() {
    let (net, layout) = generate_grid_with(&GridConfig::new(4, 4, 300.0, 3, 7)).unwrap();
    assert_eq!(validate_network(&net), vec![]);
    assert_eq!(layout.grid_junctions.len(), 16);
    for i in 1..3 {
        for j in 1..3 {
            let jid = layout.junction_at(i, j);
            let incoming: usize = net
                .roads
                .iter()
                .filter(|r| layout.road_ends[r.id.idx()].1 == jid)
                .map(|r| r.lanes.len())
                .sum();
            assert_eq!(incoming, 12);
        }
    }
}

#[test]
fn phases_never_give_green_to_crossing_straights() {
    let (net, layout) = generate_grid_with(&GridConfig::new(3, 3, 200.0, 2, 3)).unwrap();
    for jid in &layout.grid_junctions {
        let j = net.junction(*jid);
        for phase in &j.phases {
            let green: Vec<&Lane> = j
                .lanes
                .iter()
                .filter(|l| phase.state(**l) == Light::Green)
                .map(|l| net.lane(*l))
                .collect();
            let axis = |l: &Lane| {
                let a = net.lane(l.predecessors[0]);
                (a.end().x - a.start().x).abs() < 1e-6
            };
            let straight_axes: Vec<bool> = green
                .iter()
                .filter(|l| l.turn == Turn::Straight)
                .map(|l| axis(l))
                .collect();
            assert!(straight_axes.windows(2).all(|w| w[0] == w[1]));
        }
    }
}

#[test]
fn grid_generation_is_deterministic() {
    let a = write_network(&generate_grid(4, 4, 300.0, 3, 7).unwrap());
    let b = write_network(&generate_grid(4, 4, 300.0, 3, 7).unwrap());
    assert_eq!(a, b);
    let c = write_network(&generate_grid(4, 4, 300.0, 3, 8).unwrap());
    assert_ne!(a, c, "seed should rotate signal programs");
}

#[test]
fn rejects_single_row_or_column() {
    assert!(matches!(
        generate_grid(1, 1, 300.0, 1, 0),
        Err(GridError::TooSmall { .. })
    ));
    assert!(generate_grid(2, 1, 300.0, 1, 0).is_err());
}

#[test]
fn optional_features_validate() {
    let mut cfg = GridConfig::new(3, 4, 250.0, 3, 11);
    cfg.tidal = true;
    cfg.dynamic_lane = true;
    cfg.speed_classes = true;
    let (net, layout) = generate_grid_with(&cfg).unwrap();
    assert_eq!(validate_network(&net), vec![]);
    assert_eq!(layout.tidal_pairs.len(), 3 * 3);
    for (f, b) in &layout.tidal_pairs {
        assert_eq!(net.road(*f).tidal_partner, Some(*b));
        assert!(net.lane(net.road(*f).lanes[0]).restricted);
    }
    for (r, pos) in &layout.dynamic_roads {
        let road = net.road(*r);
        assert_eq!(road.lane_plans.len(), 2);
        assert_eq!(road.lane_plans[0][*pos], TurnSet::of(&[Turn::Straight]));
        assert_eq!(road.lane_plans[1][*pos], TurnSet::of(&[Turn::Left]));
    }
}

#[test]
fn morning_departure_subtracts_free_flow_travel_time() {
    // 3600 m at 60 km/h takes 216 s.
    assert!((3600.0 / ASSUMED_SPEED - 216.0).abs() < 0.01);
    let net = generate_grid(3, 3, 300.0, 1, 1).unwrap();
    let trips = generate_demand(&net, 200, PeakWindow::Morning, 4).unwrap();
    for t in &trips {
        let arrival = t.departure + route_length(&net, &t.route) / ASSUMED_SPEED;
        assert!((28800.0..32400.0).contains(&arrival), "{arrival}");
    }
}

#[test]
fn demand_is_deterministic_and_valid() {
    let net = generate_grid(3, 3, 300.0, 2, 1).unwrap();
    let a = generate_demand(&net, 300, PeakWindow::Evening, 5).unwrap();
    let b = generate_demand(&net, 300, PeakWindow::Evening, 5).unwrap();
    assert_eq!(a, b);
    assert_eq!(validate_demand(&net, &a), vec![]);
    assert!(a.iter().all(|t| (61200.0..64800.0).contains(&t.departure)));
    assert!(a.windows(2).all(|w| w[0].departure <= w[1].departure));
}

#[test]
fn demand_fails_without_enough_routable_pairs() {
    let mut net = generate_grid(2, 2, 300.0, 1, 1).unwrap();
    for l in net.lanes.iter_mut() {
        l.restricted = true;
    }
    assert!(matches!(
        generate_demand(&net, 5, PeakWindow::Morning, 1),
        Err(DemandError::NotEnoughRoutable { found: 0, wanted: 5 })
    ));
}

#[test]
fn parse_errors_carry_line_numbers() {
    let text = write_network(&generate_grid(2, 2, 100.0, 1, 0).unwrap());
    let mut lines: Vec<&str> = text.lines().collect();
    lines[3] = "LANE banana";
    let err = parse_network(&lines.join("\n")).unwrap_err();
    assert_eq!(err.line, 4);
}

#[test]
fn validate_demand_flags_disconnected_routes() {
    let net = generate_grid(2, 2, 100.0, 1, 0).unwrap();
    let mut trips = generate_demand(&net, 3, PeakWindow::Morning, 2).unwrap();
    trips[0].route = vec![RoadId(0), RoadId(0)];
    trips[1].person = trips[2].person;
    let rules: BTreeMap<&str, usize> = validate_demand(&net, &trips)
        .iter()
        .fold(BTreeMap::new(), |mut m, v| {
            *m.entry(v.rule).or_default() += 1;
            m
        });
    assert_eq!(rules.get("route"), Some(&1));
    assert_eq!(rules.get("duplicate-person"), Some(&1));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn generated_grids_validate_and_round_trip(
        rows in 2usize..5,
        cols in 2usize..5,
        len in 50.0f64..400.0,
        lanes in 1usize..4,
        seed in 0u64..1000,
        tidal: bool,
        speed_classes: bool,
    ) {
        let mut cfg = GridConfig::new(rows, cols, len, lanes, seed);
        cfg.tidal = tidal;
        cfg.speed_classes = speed_classes;
        cfg.dynamic_lane = lanes >= 3;
        let (net, _) = generate_grid_with(&cfg).unwrap();
        prop_assert_eq!(validate_network(&net), vec![]);
        let text = write_network(&net);
        let parsed = parse_network(&text).unwrap();
        prop_assert_eq!(&parsed, &net);
        prop_assert_eq!(write_network(&parsed), text);
    }

    #[test]
    fn demand_round_trips_and_respects_window(seed in 0u64..1000, morning: bool) {
        let net = generate_grid(3, 3, 200.0, 1, seed).unwrap();
        let window = if morning { PeakWindow::Morning } else { PeakWindow::Evening };
        let trips = generate_demand(&net, 40, window, seed).unwrap();
        let text = write_demand(&trips);
        let parsed = parse_demand(&text).unwrap();
        prop_assert_eq!(&parsed, &trips);
        prop_assert_eq!(write_demand(&parsed), text);
        let (lo, hi) = window.bounds();
        for t in &trips {
            let at = match window {
                PeakWindow::Morning => t.departure + route_length(&net, &t.route) / ASSUMED_SPEED,
                PeakWindow::Evening => t.departure,
            };
            prop_assert!(at >= lo && at < hi);
        }
    }
}
