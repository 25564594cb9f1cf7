mod common;

use common::mlp_reference;
use danmaku_core::models::noise::{GLOBAL_DIM, NOISE_DIM, PERIODIC_DIM};
use danmaku_core::models::{NoiseSpec, Psgan};
use danmaku_core::rng::seeded;
use danmaku_core::tensor::Tape;

#[test]
fn thousand_draws_match_independent_recomputation() {
    let m = Psgan::new(&mut seeded(21)).unwrap();
    let t_z = m.noise.spatial_len;
    let zg = NoiseSpec::sample_global(1000, &mut seeded(22));
    let mut tape = Tape::new();
    let bound = m.gen.bind(&mut tape, false);
    let z = tape.leaf(&zg);
    let y = m.noise.forward(&mut tape, &bound, z).unwrap();
    assert_eq!(tape.shape(y), [1000, t_z, NOISE_DIM]);
    let out = tape.value(y);
    for (b, g) in zg.values().chunks(GLOBAL_DIM).enumerate() {
        let k1 = mlp_reference(&m.gen, "k1", g);
        let k2 = mlp_reference(&m.gen, "k2", g);
        for i in 0..t_z {
            let row = &out[(b * t_z + i) * NOISE_DIM..(b * t_z + i + 1) * NOISE_DIM];
            assert_eq!(&row[..GLOBAL_DIM], g);
            for j in 0..PERIODIC_DIM {
                let want = ((i + 1) as f64 * k1[j] + k2[j]).sin();
                assert!((row[GLOBAL_DIM + j] - want).abs() <= 1e-12, "draw {b} row {i} dim {j}");
            }
        }
    }
}

#[test]
fn same_seed_same_noise() {
    let a = NoiseSpec::sample_global(4, &mut seeded(5));
    let b = NoiseSpec::sample_global(4, &mut seeded(5));
    assert_eq!(a.values(), b.values());
}
