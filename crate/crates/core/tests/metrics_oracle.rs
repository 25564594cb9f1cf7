mod common;

use common::{naive_metrics, random_small_schedule, rng};
use danmaku_core::metrics::{js_divergence, report, JS_BINS};
use danmaku_core::sim::{simulate, SimConfig};
use std::f64::consts::LN_2;

#[test]
fn engine_metrics_equal_naive_recount() {
    let cfg = SimConfig { t_max: 50, ..SimConfig::default() };
    let mut r = rng(2024);
    for case in 0..50 {
        let schedule = random_small_schedule(&mut r);
        let trace = simulate(&schedule, &cfg, false);
        let (expected, t_total) = naive_metrics(&schedule, &cfg);
        assert_eq!(trace.t_total, t_total, "case {case}");
        assert!(trace.t_total <= 50);
        assert_eq!(report(&trace), expected, "case {case}: {schedule:?}");
    }
}

#[test]
fn js_identity_and_disjoint_support() {
    let a: Vec<f64> = (0..30).map(|i| (i as f64 * 0.37).sin()).collect();
    assert_eq!(js_divergence(&a, &a, JS_BINS).unwrap(), 0.0);
    let lo: Vec<f64> = (0..30).map(|i| i as f64 * 0.01).collect();
    let hi: Vec<f64> = (0..30).map(|i| 10.0 + i as f64 * 0.01).collect();
    let d = js_divergence(&lo, &hi, JS_BINS).unwrap();
    assert!((LN_2 - 1e-3..=LN_2).contains(&d), "{d}");
}
