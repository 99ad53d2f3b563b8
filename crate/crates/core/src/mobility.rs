//! Correlated random walk confined to the serving cell's disc.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::radio::RuConfig;

pub const DEFAULT_MAX_TURN_RAD: f64 = PI / 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MobilityState {
    pub position: [f64; 2],
    /// Radians in [-pi, pi).
    pub heading: f64,
    pub speed_mps: f64,
}

/// Wraps an angle into [-pi, pi).
pub fn normalize_heading(theta: f64) -> f64 {
    let wrapped = (theta + PI).rem_euclid(2.0 * PI) - PI;
    if wrapped >= PI {
        -PI
    } else {
        wrapped
    }
}

/// Advances one mobility update: turn by a uniform draw in
/// `[-max_turn, max_turn]`, move `v * dt` along the new heading, then
/// reflect at the serving disc's boundary.
pub fn step<R: Rng + ?Sized>(
    state: MobilityState,
    ru: &RuConfig,
    dt: f64,
    max_turn: f64,
    rng: &mut R,
) -> MobilityState {
    let turn = if max_turn > 0.0 {
        rng.random_range(-max_turn..=max_turn)
    } else {
        0.0
    };
    let heading = normalize_heading(state.heading + turn);
    let dist = state.speed_mps * dt;
    let candidate = [
        state.position[0] + dist * heading.cos(),
        state.position[1] + dist * heading.sin(),
    ];
    let (position, heading) = reflect_at_boundary(candidate, ru, heading);
    MobilityState {
        position,
        heading,
        speed_mps: state.speed_mps,
    }
}

/// Projects a point outside the RU's disc back onto the circle and
/// reverses the heading. Points inside are returned unchanged.
pub fn reflect_at_boundary(pos: [f64; 2], ru: &RuConfig, heading: f64) -> ([f64; 2], f64) {
    let dx = pos[0] - ru.position[0];
    let dy = pos[1] - ru.position[1];
    let d = dx.hypot(dy);
    if d <= ru.radius_m {
        return (pos, heading);
    }
    // shrink a hair so rounding never lands outside
    let scale = ru.radius_m / d * (1.0 - 1e-12);
    let projected = [ru.position[0] + dx * scale, ru.position[1] + dy * scale];
    (projected, normalize_heading(heading + PI))
}

/// Uniform point in the RU's disc.
pub fn uniform_in_disc<R: Rng + ?Sized>(ru: &RuConfig, rng: &mut R) -> [f64; 2] {
    let r = ru.radius_m * rng.random::<f64>().sqrt();
    let phi = rng.random_range(-PI..PI);
    [ru.position[0] + r * phi.cos(), ru.position[1] + r * phi.sin()]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::RuId;
    use crate::radio::RuKind;
    use crate::rng::{stream_rng, Stream};

    fn micro() -> RuConfig {
        RuConfig {
            id: RuId(1),
            kind: RuKind::Micro,
            position: [200.0, 0.0],
            radius_m: 50.0,
            prb_power_w: 0.01,
            max_power_w: 1.0,
            min_power_w: 0.001,
            pathloss_constant: 1.0,
            pathloss_exponent: 2.8,
        }
    }

    #[test]
    fn zero_speed_stays_put() {
        let ru = micro();
        let mut rng = stream_rng(1, Stream::Mobility, &[]);
        let s = MobilityState { position: [210.0, 5.0], heading: 0.3, speed_mps: 0.0 };
        let n = step(s, &ru, 1.0, DEFAULT_MAX_TURN_RAD, &mut rng);
        assert_eq!(n.position, s.position);
    }

    #[test]
    fn straight_line_without_turning() {
        let ru = micro();
        let mut rng = stream_rng(1, Stream::Mobility, &[]);
        let s = MobilityState { position: [200.0, 0.0], heading: 0.0, speed_mps: 1.5 };
        let n = step(s, &ru, 1.0, 0.0, &mut rng);
        assert_eq!(n.position, [201.5, 0.0]);
        assert_eq!(n.heading, 0.0);
    }

    #[test]
    fn reflection_identity_inside() {
        let ru = micro();
        let (p, h) = reflect_at_boundary([210.0, 10.0], &ru, 1.0);
        assert_eq!(p, [210.0, 10.0]);
        assert_eq!(h, 1.0);
    }

    #[test]
    fn reflection_projects_and_reverses() {
        let ru = micro();
        let (p, h) = reflect_at_boundary([200.0 + 50.5, 0.0], &ru, 0.0);
        assert!(ru.distance_to(p) <= ru.radius_m);
        assert!((h.abs() - PI).abs() < 1e-12);
    }

    #[test]
    fn heading_normalization_range() {
        for k in -20..20 {
            let t = normalize_heading(k as f64 * 0.77);
            assert!((-PI..PI).contains(&t));
        }
        assert_eq!(normalize_heading(PI), -PI);
    }

    #[test]
    fn long_walk_stays_in_disc_with_bounded_turns() {
        let ru = micro();
        let mut rng = stream_rng(3, Stream::Mobility, &[]);
        let mut s = MobilityState { position: [240.0, 30.0], heading: 2.0, speed_mps: 1.5 };
        for _ in 0..10_000 {
            let n = step(s, &ru, 1.0, DEFAULT_MAX_TURN_RAD, &mut rng);
            assert!(ru.distance_to(n.position) <= ru.radius_m);
            let moved = (n.position[0] - s.position[0]).hypot(n.position[1] - s.position[1]);
            let turn = normalize_heading(n.heading - s.heading).abs();
            let reflected = (turn - PI).abs() < DEFAULT_MAX_TURN_RAD + 1e-9
                && turn > DEFAULT_MAX_TURN_RAD + 1e-9;
            if !reflected {
                assert!(turn <= DEFAULT_MAX_TURN_RAD + 1e-9);
                assert!((moved - 1.5).abs() < 1e-9);
            }
            s = n;
        }
    }

    #[test]
    fn uniform_spawn_inside() {
        let ru = micro();
        let mut rng = stream_rng(5, Stream::Population, &[]);
        for _ in 0..1000 {
            assert!(ru.distance_to(uniform_in_disc(&ru, &mut rng)) <= ru.radius_m);
        }
    }
}
