mod common;

use common::{layer_cases, random_tensor, rng};
use danmaku_core::tensor::Tape;

#[test]
fn every_layer_type_matches_central_differences() {
    for (name, case) in layer_cases() {
        for seed in 0..5 {
            let err = case(seed);
            assert!(err <= 1e-6, "{name} seed {seed}: relative error {err:e}");
        }
    }
}

#[test]
fn conv_and_transpose_are_adjoint() {
    let mut r = rng(11);
    for &(stride, padding) in &[(1, 0), (2, 1), (2, 0), (3, 2)] {
        // a length whose padded extent the stride tiles exactly, so the
        // transpose reproduces the full input length
        let len = (16..).find(|l| (l + 2 * padding - 4) % stride == 0).unwrap();
        let x = random_tensor(&mut r, &[2, 3, len], -1.0, 1.0);
        let w = random_tensor(&mut r, &[5, 3, 4], -1.0, 1.0);
        let mut tape = Tape::new();
        let (xv, wv) = (tape.leaf(&x), tape.leaf(&w));
        let y = tape.conv1d(xv, wv, stride, padding).unwrap();
        let yshape = tape.shape(y).to_vec();
        let probe = random_tensor(&mut r, &yshape, -1.0, 1.0);
        let pv = tape.leaf(&probe);
        let back = tape.conv_transpose1d(pv, wv, stride, padding).unwrap();
        assert_eq!(tape.shape(back), x.shape());
        let lhs: f64 = tape.value(y).iter().zip(probe.values()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.values().iter().zip(tape.value(back)).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10, "stride {stride} padding {padding}: {lhs} vs {rhs}");
    }
}
