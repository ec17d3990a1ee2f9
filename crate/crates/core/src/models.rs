//! Vehicle behaviour: IDM car following, signal response and randomized
//! MOBIL lane changing. All functions are pure.

use thiserror::Error;

use crate::netmodel::{Light, VehicleProfile};

/// Emergency braking bound, m/s². Accelerations never go below `-B_HARD`.
pub const B_HARD: f64 = 8.0;
/// IDM acceleration exponent.
pub const DELTA: f64 = 4.0;
/// MOBIL politeness factor.
pub const POLITENESS: f64 = 0.1;
/// Lane-change probability once the total utility reaches 1.
pub const P_LC_MAX: f64 = 0.9;
/// Lane-change probability at zero total utility.
pub const P_LC_MIN: f64 = 2e-8;
/// Speed below which a vehicle counts as stopped, m/s.
pub const STOP_SPEED: f64 = 0.1;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("non-finite or invalid {0}")]
    BadInput(&'static str),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CarFollowInput {
    /// Current speed, m/s.
    pub v: f64,
    /// Desired speed, m/s.
    pub v0: f64,
    /// Bumper-to-bumper gap to the leader, m; `f64::INFINITY` without one.
    pub gap: f64,
    /// Own speed minus leader speed, m/s.
    pub delta_v: f64,
    pub profile: VehicleProfile,
}

impl CarFollowInput {
    pub fn free(v: f64, v0: f64, profile: VehicleProfile) -> Self {
        Self {
            v,
            v0,
            gap: f64::INFINITY,
            delta_v: 0.0,
            profile,
        }
    }
}

/// Desired dynamic gap `s*`.
pub fn desired_gap(v: f64, delta_v: f64, p: &VehicleProfile) -> f64 {
    p.min_gap + (v * p.headway + v * delta_v / (2.0 * (p.a_max * p.a_comf).sqrt())).max(0.0)
}

pub fn idm_accel(x: &CarFollowInput) -> Result<f64, ModelError> {
    if !x.v.is_finite() || x.v < 0.0 {
        return Err(ModelError::BadInput("speed"));
    }
    if !x.v0.is_finite() || x.v0 <= 0.0 {
        return Err(ModelError::BadInput("desired speed"));
    }
    if !x.delta_v.is_finite() {
        return Err(ModelError::BadInput("speed difference"));
    }
    if x.gap.is_nan() || x.gap == f64::NEG_INFINITY {
        return Err(ModelError::BadInput("gap"));
    }
    if !x.profile.is_valid() {
        return Err(ModelError::BadInput("profile"));
    }
    if x.gap <= 0.0 {
        return Ok(-B_HARD);
    }
    let p = &x.profile;
    let free = (x.v / x.v0).powi(DELTA as i32);
    let interaction = if x.gap.is_infinite() {
        0.0
    } else {
        let r = desired_gap(x.v, x.delta_v, p) / x.gap;
        r * r
    };
    Ok((p.a_max * (1.0 - free - interaction)).max(-B_HARD))
}

/// Car following with a stop line ahead.
///
/// Under GREEN this is plain IDM. Under YELLOW or RED the vehicle also
/// follows a stationary phantom leader placed at the stop line, and a
/// stopped vehicle already close to the line does not pull forward.
pub fn signal_accel(x: &CarFollowInput, dist_to_stopline: f64, light: Light) -> Result<f64, ModelError> {
    let a = idm_accel(x)?;
    if light == Light::Green {
        return Ok(a);
    }
    if !(dist_to_stopline >= 0.0) {
        return Err(ModelError::BadInput("stop line distance"));
    }
    let phantom = CarFollowInput {
        gap: dist_to_stopline,
        delta_v: x.v,
        ..*x
    };
    let mut a = a.min(idm_accel(&phantom)?);
    if x.v < STOP_SPEED && dist_to_stopline <= x.profile.min_gap + x.profile.length {
        a = a.min(0.0);
    }
    Ok(a)
}

/// Accelerations on one side of a candidate lane change. `*_after`
/// values assume the change has happened, `*_before` that it has not.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LaneChangeInput {
    pub ego_after: f64,
    pub ego_before: f64,
    pub new_follower_after: f64,
    pub new_follower_before: f64,
    pub old_follower_after: f64,
    pub old_follower_before: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LaneDecision {
    Stay,
    Left,
    Right,
}

pub fn mobil_utility(x: &LaneChangeInput) -> f64 {
    (x.ego_after - x.ego_before)
        + POLITENESS
            * ((x.new_follower_after - x.new_follower_before)
                + (x.old_follower_after - x.old_follower_before))
}

/// Probability of changing lanes given the total utility `u_T >= 0`.
pub fn change_probability(u_total: f64) -> f64 {
    if u_total >= 1.0 {
        P_LC_MAX
    } else if u_total > 0.0 {
        (P_LC_MAX - P_LC_MIN) * u_total
    } else {
        P_LC_MIN
    }
}

fn is_safe(x: &LaneChangeInput) -> bool {
    x.new_follower_after > -B_HARD && x.ego_after > -B_HARD
}

/// Randomized MOBIL. A side that is absent or would force the new
/// follower or the ego vehicle into emergency braking is not considered.
pub fn mobil_decision(
    left: Option<&LaneChangeInput>,
    right: Option<&LaneChangeInput>,
    rng_draw: f64,
) -> LaneDecision {
    let left = left.filter(|x| is_safe(x));
    let right = right.filter(|x| is_safe(x));
    if left.is_none() && right.is_none() {
        return LaneDecision::Stay;
    }
    let gain = |x: Option<&LaneChangeInput>| x.map(|x| mobil_utility(x).max(0.0)).unwrap_or(0.0);
    let (ul, ur) = (gain(left), gain(right));
    if rng_draw >= change_probability(ul + ur) {
        return LaneDecision::Stay;
    }
    match (left, right) {
        (Some(_), None) => LaneDecision::Left,
        (None, Some(_)) => LaneDecision::Right,
        _ if ul >= ur => LaneDecision::Left,
        _ => LaneDecision::Right,
    }
}

/// Kinematic update over one step: `v' = clamp(v + a dt, 0, v0)` and
/// trapezoidal position advance. Returns `(v', distance travelled)`.
pub fn integrate(v: f64, a: f64, v0: f64, dt: f64) -> (f64, f64) {
    let v1 = (v + a * dt).clamp(0.0, v0.max(0.0));
    (v1, 0.5 * (v + v1) * dt)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn input(v: f64, gap: f64, delta_v: f64) -> CarFollowInput {
        CarFollowInput {
            v,
            v0: 16.667,
            gap,
            delta_v,
            profile: VehicleProfile::default(),
        }
    }

    #[test]
    fn free_road_start_and_equilibrium() {
        assert_eq!(idm_accel(&input(0.0, f64::INFINITY, 0.0)).unwrap(), 2.0);
        assert_eq!(idm_accel(&input(16.667, f64::INFINITY, 0.0)).unwrap(), 0.0);
    }

    #[test]
    fn following_at_thirty_metres() {
        let a = idm_accel(&input(10.0, 30.0, 0.0)).unwrap();
        assert!((a - 1.0985985127410194).abs() < 1e-12, "{a}");
        assert_eq!(desired_gap(10.0, 0.0, &VehicleProfile::default()), 17.0);
    }

    #[test]
    fn red_light_braking() {
        let x = input(10.0, f64::INFINITY, 0.0);
        let a = signal_accel(&x, 20.0, Light::Red).unwrap();
        assert!((a - -5.2576230673129265).abs() < 1e-12, "{a}");
        assert_eq!(signal_accel(&x, 20.0, Light::Green).unwrap(), idm_accel(&x).unwrap());
    }

    #[test]
    fn stopped_at_red_stays_stopped() {
        let x = input(0.0, f64::INFINITY, 0.0);
        assert!(signal_accel(&x, 5.0, Light::Red).unwrap() <= 0.0);
        assert!(signal_accel(&x, 5.0, Light::Yellow).unwrap() <= 0.0);
    }

    #[test]
    fn contact_gap_brakes_hard() {
        assert_eq!(idm_accel(&input(5.0, 0.0, 0.0)).unwrap(), -B_HARD);
        assert_eq!(idm_accel(&input(5.0, 0.01, 5.0)).unwrap(), -B_HARD);
    }

    #[test]
    fn rejects_non_finite() {
        assert!(idm_accel(&input(f64::NAN, 10.0, 0.0)).is_err());
        assert!(idm_accel(&input(1.0, f64::NAN, 0.0)).is_err());
        assert!(idm_accel(&input(1.0, 10.0, f64::INFINITY)).is_err());
    }

    fn side(u: f64) -> LaneChangeInput {
        LaneChangeInput {
            ego_after: u,
            ego_before: 0.0,
            new_follower_after: 0.0,
            new_follower_before: 0.0,
            old_follower_after: 0.0,
            old_follower_before: 0.0,
        }
    }

    #[test]
    fn probability_branches() {
        assert_eq!(change_probability(0.0), 2e-8);
        assert_eq!(change_probability(1.0), 0.9);
        assert_eq!(change_probability(7.0), 0.9);
        assert!((change_probability(0.6) - 0.539999988).abs() < 1e-15);
    }

    #[test]
    fn decisions() {
        assert_eq!(mobil_decision(Some(&side(0.0)), Some(&side(-1.0)), 0.5), LaneDecision::Stay);
        assert_eq!(mobil_decision(Some(&side(2.0)), None, 0.5), LaneDecision::Left);
        assert_eq!(mobil_decision(Some(&side(0.5)), Some(&side(0.1)), 0.1), LaneDecision::Left);
        assert_eq!(mobil_decision(Some(&side(0.1)), Some(&side(0.5)), 0.1), LaneDecision::Right);
        assert_eq!(mobil_decision(Some(&side(0.3)), Some(&side(0.3)), 0.1), LaneDecision::Left);
        assert_eq!(mobil_decision(None, None, 0.0), LaneDecision::Stay);
    }

    #[test]
    fn unsafe_side_is_vetoed() {
        let mut s = side(5.0);
        s.new_follower_after = -B_HARD;
        assert_eq!(mobil_decision(Some(&s), None, 0.0), LaneDecision::Stay);
        assert_eq!(mobil_decision(Some(&s), Some(&side(0.2)), 0.1), LaneDecision::Right);
    }

    #[test]
    fn one_step_from_rest() {
        let (v, ds) = integrate(0.0, 2.0, 16.667, 1.0);
        assert_eq!((v, ds), (2.0, 1.0));
        let (v, _) = integrate(1.0, -8.0, 16.667, 1.0);
        assert_eq!(v, 0.0);
    }
}
