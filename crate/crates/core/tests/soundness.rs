//! Every bound the engine produces contains every sampled trajectory.

mod common;

use std::sync::Arc;

use fomcert_core::bounds::{propagate_interval, IterBounds};
use fomcert_core::model_ir::validate;
use fomcert_core::verifier::{CutMode, Verifier, VerifyConfig};
use fomcert_milp::HighsBackend;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn contained(c: &fomcert_core::model_ir::Compiled, b: &IterBounds, samples: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kmax = b.k();
    let mut bad = 0;
    for _ in 0..samples {
        let (x, s0) = common::draw(c, &mut rng);
        let t = c.simulate(&x, &s0, kmax).unwrap();
        for k in 0..=kmax {
            if !b.contains(k, &t.states[k], 1e-9) {
                bad += 1;
            }
        }
    }
    bad
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn interval_bounds_contain_trajectories(seed in 0u64..100_000, kind in 0usize..4, n in 1usize..5) {
        let pwa = common::kinds(n).into_iter().nth(kind);
        let c = validate(&common::one_step_family(pwa, n, 2, seed)).unwrap();
        let mut b = IterBounds::initial(&c);
        propagate_interval(&c, &mut b, 6, &[]).unwrap();
        prop_assert_eq!(contained(&c, &b, 200, seed), 0);
    }
}

#[test]
fn tightened_bounds_contain_trajectories() {
    for (j, kind) in common::kinds(3).into_iter().enumerate() {
        let c = validate(&common::one_step_family(Some(kind), 3, 2, 40 + j as u64)).unwrap();
        let cfg = VerifyConfig { kmax: 5, gap: 1e-4, cut_mode: CutMode::PerComponent, ..VerifyConfig::default() };
        let mut v = Verifier::new(&c, cfg, Arc::new(HighsBackend::default())).unwrap();
        let rep = v.run().unwrap();
        assert_eq!(contained(&c, &v.bounds, 2000, j as u64), 0, "kind {j}");
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..2000 {
            let (x, s0) = common::draw(&c, &mut rng);
            let t = c.simulate(&x, &s0, 5).unwrap();
            for r in &rep.per_k {
                assert!(c.residual_inf(&t, r.k) <= r.best_bound);
            }
        }
    }
}
