mod common;

use danmaku_core::codec::{denormalize, normalize, BulletSpec, ParametricSequence, ShotEvent, ITV_CAP, SEQ_LEN};
use danmaku_core::metrics::{js_divergence, mean_momentum, JS_BINS};
use danmaku_core::sim::{simulate, BulletState, SimConfig};
use proptest::prelude::*;
use std::f64::consts::{LN_2, TAU};

fn event() -> impl Strategy<Value = ShotEvent> {
    (
        0..=ITV_CAP,
        -64.0..=64.0f64,
        -64.0..=64.0f64,
        0.0..=TAU,
        0.0..=6.0f64,
        -0.1..=0.1f64,
        -0.2..=0.2f64,
        2.0..=16.0f64,
    )
        .prop_map(|(itv, spawn_dx, spawn_dy, angle, speed, accel, ang_vel, radius)| {
            ShotEvent::new(itv, BulletSpec { spawn_dx, spawn_dy, angle, speed, accel, ang_vel, radius })
        })
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

fn bullet() -> impl Strategy<Value = (u32, BulletState)> {
    (0u32..20, 0.0..384.0f64, 0.0..448.0f64, 0.0..TAU, 0.0..6.0f64, 2.0..16.0f64).prop_map(
        |(f, x, y, angle, speed, radius)| (f, BulletState { angle, speed, ..BulletState::at(x, y, radius) }),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn codec_round_trip(events in prop::collection::vec(event(), SEQ_LEN)) {
        let seq = ParametricSequence::from_events(&events).unwrap();
        let back = seq.to_events().unwrap();
        for (a, b) in events.iter().zip(&back) {
            prop_assert_eq!(a.itv, b.itv);
            let (x, y) = (a.bullet, b.bullet);
            for (u, v) in [
                (x.spawn_dx, y.spawn_dx), (x.spawn_dy, y.spawn_dy), (x.angle, y.angle), (x.speed, y.speed),
                (x.accel, y.accel), (x.ang_vel, y.ang_vel), (x.radius, y.radius),
            ] {
                prop_assert!(close(u, v), "{} vs {}", u, v);
            }
        }
        let reloaded = ParametricSequence::from_json(&seq.to_json()).unwrap();
        prop_assert_eq!(reloaded.flat(), seq.flat());
    }

    #[test]
    fn normalized_rows_stay_in_unit_interval(e in event()) {
        let row = normalize(&e).unwrap();
        prop_assert!(row.iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert_eq!(denormalize(&row).unwrap().itv, e.itv);
    }

    #[test]
    fn adding_a_bullet_never_shrinks_coverage(mut schedule in prop::collection::vec(bullet(), 1..4), extra in bullet()) {
        let cfg = SimConfig { t_max: 40, ..SimConfig::default() };
        schedule.sort_by_key(|(f, _)| *f);
        let base = simulate(&schedule, &cfg, false);
        schedule.push(extra);
        schedule.sort_by_key(|(f, _)| *f);
        let more = simulate(&schedule, &cfg, false);
        for (a, b) in base.coverage.iter().zip(&more.coverage) {
            prop_assert!(!a || *b);
        }
    }

    #[test]
    fn resting_bullet_has_zero_momentum(x in 0.0..384.0f64, y in 0.0..448.0f64, r in 2.0..16.0f64) {
        let cfg = SimConfig { t_max: 30, ..SimConfig::default() };
        let trace = simulate(&[(0, BulletState::at(x, y, r))], &cfg, false);
        prop_assert_eq!(mean_momentum(&trace), 0.0);
        prop_assert_eq!(trace.t_total, 30);
    }

    #[test]
    fn constant_speed_momentum_is_weight_times_speed(speed in 0.1..6.0f64, r in 2.0..16.0f64) {
        // moving right from the left edge stays on screen for the whole cap
        let cfg = SimConfig { t_max: 40, ..SimConfig::default() };
        let b = BulletState { speed, ..BulletState::at(0.0, 200.0, r) };
        let trace = simulate(&[(0, b)], &cfg, false);
        prop_assert!(trace.momentum.iter().all(|&m| m == r / 8.0 * speed));
    }

    #[test]
    fn js_is_bounded_and_symmetric(
        a in prop::collection::vec(-100.0..100.0f64, 1..40),
        b in prop::collection::vec(-100.0..100.0f64, 1..40),
    ) {
        let ab = js_divergence(&a, &b, JS_BINS).unwrap();
        prop_assert!((0.0..=LN_2).contains(&ab));
        prop_assert_eq!(ab, js_divergence(&b, &a, JS_BINS).unwrap());
    }
}
