//! With parameters and initial state pinned, the big-M encoding reproduces the simulator.

mod common;

use fomcert_core::bounds::{propagate_interval, IterBounds};
use fomcert_core::encoder::{encode_iterations, encode_vp, warm_start_assignment, EncodeOptions};
use fomcert_core::model_ir::validate;
use fomcert_milp::{Backend, HighsBackend, LinExpr, ObjSense, SolveOptions};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn pinned_inputs_reproduce_simulation() {
    let k = 3;
    let backend = HighsBackend::default();
    for (j, kind) in common::kinds(3).into_iter().enumerate() {
        let c = validate(&common::one_step_family(Some(kind), 3, 2, 100 + j as u64)).unwrap();
        let table = c.schedule_table(k).unwrap();
        let mut b = IterBounds::initial(&c);
        propagate_interval(&c, &mut b, k, &table).unwrap();
        let (model, map) = encode_iterations(&c, &b, k, &table, &EncodeOptions::default(), false).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(j as u64);
        for _ in 0..40 {
            let (x, s0) = common::draw(&c, &mut rng);
            let mut m = model.clone();
            for (id, v) in map.x.iter().zip(&x).chain(map.states[0][0].iter().zip(&s0)) {
                m.set_bounds(*id, *v, *v).unwrap();
            }
            let traj = c.simulate(&x, &s0, k).unwrap();
            // Minimizing and maximizing an output both hit the simulated value.
            let target = map.states[k][0][0];
            for sense in [ObjSense::Minimize, ObjSense::Maximize] {
                m.set_objective(&LinExpr::var(target), sense).unwrap();
                let r = backend.solve(&m, &SolveOptions::default().with_gap(0.0));
                let v = r.values.expect("pinned model is feasible");
                for kk in 1..=k {
                    for (i, id) in map.states[kk][0].iter().enumerate() {
                        assert!((v[id.0] - traj.states[kk][0][i]).abs() < 1e-7, "kind {j} k {kk} i {i}");
                    }
                }
            }
        }
    }
}

#[test]
fn simulated_trajectories_are_feasible_warm_starts() {
    let k = 4;
    for (j, kind) in common::kinds(4).into_iter().enumerate() {
        let c = validate(&common::one_step_family(Some(kind), 4, 2, 7 + j as u64)).unwrap();
        let table = c.schedule_table(k).unwrap();
        let mut b = IterBounds::initial(&c);
        propagate_interval(&c, &mut b, k, &table).unwrap();
        let (model, map) = encode_vp(&c, &b, k, &table, &EncodeOptions::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..200 {
            let (x, s0) = common::draw(&c, &mut rng);
            let v = warm_start_assignment(&c, &model, &map, &x, &s0, k, 1e-7).unwrap().expect("feasible");
            let t = c.simulate(&x, &s0, k).unwrap();
            let delta = map.objective.as_ref().unwrap().delta;
            assert!((v[delta.0] - c.residual_inf(&t, k)).abs() < 1e-12);
        }
    }
}
