mod common;

use common::oracle::{check_equilibrium, check_idm, check_mobil, check_p_lc, check_signal};
use microflow::models::*;
use microflow::netmodel::{Light, VehicleProfile};
use proptest::prelude::*;

#[test]
fn idm_matches_formula_on_random_inputs() {
    assert_eq!(check_idm(11, 1000), Ok(()));
}

#[test]
fn signal_matches_formula_on_random_inputs() {
    assert_eq!(check_signal(12, 1000), Ok(()));
}

#[test]
fn change_probability_matches_formula() {
    assert_eq!(check_p_lc(13, 1000), Ok(()));
    assert_eq!(change_probability(0.0), 2e-8);
    assert_eq!(change_probability(1.0), 0.9);
    assert!(change_probability(1e-12) < 1e-11);
}

#[test]
fn mobil_matches_formula_on_random_inputs() {
    assert_eq!(check_mobil(14, 1000), Ok(()));
}

#[test]
fn free_flow_equilibrium_is_exactly_zero() {
    assert_eq!(check_equilibrium(15, 100), Ok(()));
}

#[test]
fn red_light_example() {
    let x = CarFollowInput::free(10.0, 16.667, VehicleProfile::default());
    let a = signal_accel(&x, 20.0, Light::Red).unwrap();
    let star: f64 = 2.0 + 15.0 + 100.0 / (2.0 * 6f64.sqrt());
    assert!((star - 37.412).abs() < 1e-3);
    let want = (2.0 * (1.0 - (10.0f64 / 16.667).powi(4) - (star / 20.0).powi(2))).max(-8.0);
    assert!((a - want).abs() < 1e-12, "{a} vs {want}");
}

#[test]
fn mobil_examples() {
    let side = |u: f64| LaneChangeInput {
        ego_after: u,
        ego_before: 0.0,
        new_follower_after: 0.0,
        new_follower_before: 0.0,
        old_follower_after: 0.0,
        old_follower_before: 0.0,
    };
    let (l, r) = (side(0.5), side(0.1));
    assert!((change_probability(0.6) - 0.54).abs() < 1e-6);
    assert_eq!(mobil_decision(Some(&l), Some(&r), 0.1), LaneDecision::Left);
    assert_eq!(mobil_decision(Some(&l), Some(&r), 0.55), LaneDecision::Stay);
    assert_eq!(mobil_decision(Some(&side(0.0)), None, 0.5), LaneDecision::Stay);
    assert_eq!(mobil_decision(Some(&side(1.5)), None, 0.5), LaneDecision::Left);
    assert_eq!(mobil_decision(Some(&side(0.3)), Some(&side(0.3)), 0.1), LaneDecision::Left);
}

proptest! {
    #[test]
    fn idm_bounded_and_monotone(
        v in 0.0f64..30.0,
        v0 in 1.0f64..35.0,
        gap in 0.1f64..150.0,
        dv in -10.0f64..10.0,
    ) {
        let p = VehicleProfile::default();
        let at = |gap: f64, dv: f64| idm_accel(&CarFollowInput { v, v0, gap, delta_v: dv, profile: p }).unwrap();
        let a = at(gap, dv);
        prop_assert!(a <= p.a_max);
        prop_assert!(a >= -B_HARD);
        let h = 1e-3;
        if a > -B_HARD {
            prop_assert!(at(gap + h, dv) >= a);
            if v > 0.0 && at(gap, dv + h) > -B_HARD && v * (dv + h) + v * p.headway * 2.0 * (p.a_max * p.a_comf).sqrt() > 0.0 {
                prop_assert!(at(gap, dv + h) <= a);
            }
        }
    }

    #[test]
    fn mobil_is_a_pure_function(
        u in prop::collection::vec(-9.0f64..3.0, 12),
        draw in 0.0f64..1.0,
    ) {
        let mk = |o: usize| LaneChangeInput {
            ego_after: u[o],
            ego_before: u[o + 1],
            new_follower_after: u[o + 2],
            new_follower_before: u[o + 3],
            old_follower_after: u[o + 4],
            old_follower_before: u[o + 5],
        };
        let (l, r) = (mk(0), mk(6));
        let first = mobil_decision(Some(&l), Some(&r), draw);
        prop_assert_eq!(first, mobil_decision(Some(&l), Some(&r), draw));
        if first == LaneDecision::Left {
            prop_assert!(l.new_follower_after > -B_HARD);
        }
        if first == LaneDecision::Right {
            prop_assert!(r.new_follower_after > -B_HARD);
        }
    }
}
