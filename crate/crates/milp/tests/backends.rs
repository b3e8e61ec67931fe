use fomcert_milp::{
    Backend, HighsBackend, LinExpr, MilpModel, ObjSense, ReferenceBackend, Sense, SolveOptions, SolveStatus,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_model(seed: u64, n_cont: usize, n_bin: usize, n_rows: usize) -> MilpModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = MilpModel::new("rand");
    let mut vars = Vec::new();
    for i in 0..n_cont {
        let l = rng.gen_range(-3.0..0.0);
        vars.push(m.add_continuous(format!("x{i}"), l, l + rng.gen_range(0.5..4.0)).unwrap());
    }
    for i in 0..n_bin {
        vars.push(m.add_binary(format!("b{i}")).unwrap());
    }
    for r in 0..n_rows {
        let mut e = LinExpr::new();
        for &v in &vars {
            if rng.gen_bool(0.7) {
                e.add_term(v, rng.gen_range(-2.0..2.0));
            }
        }
        let sense = if rng.gen_bool(0.8) { Sense::Le } else { Sense::Ge };
        let rhs = match sense {
            Sense::Ge => rng.gen_range(-4.0..-1.0),
            _ => rng.gen_range(1.0..4.0),
        };
        m.add_constr(format!("r{r}"), &e, sense, rhs).unwrap();
    }
    let mut o = LinExpr::new();
    for &v in &vars {
        o.add_term(v, rng.gen_range(-1.0..1.0));
    }
    let sense = if rng.gen_bool(0.5) { ObjSense::Maximize } else { ObjSense::Minimize };
    m.set_objective(&o, sense).unwrap();
    m
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn reference_and_highs_agree(seed in 0u64..10_000, nc in 1usize..5, nb in 0usize..6, nr in 1usize..6) {
        let m = random_model(seed, nc, nb, nr);
        let opts = SolveOptions::default().with_gap(0.0);
        let a = ReferenceBackend.solve(&m, &opts);
        let b = HighsBackend::default().solve(&m, &opts);
        prop_assert_eq!(a.status == SolveStatus::Infeasible, b.status == SolveStatus::Infeasible);
        if let (Some(x), Some(y)) = (a.objective, b.objective) {
            prop_assert!((x - y).abs() < 1e-6, "reference {} vs highs {}", x, y);
            let vals = a.values.unwrap();
            prop_assert!(m.check_assignment(&vals, 1e-6).is_none());
        }
    }

    #[test]
    fn relaxation_bounds_the_milp(seed in 0u64..10_000) {
        let m = random_model(seed, 2, 4, 3);
        let lp = ReferenceBackend.solve(&m, &SolveOptions::lp());
        let ip = ReferenceBackend.solve(&m, &SolveOptions::default().with_gap(0.0));
        if let (Some(l), Some(i)) = (lp.objective, ip.objective) {
            match m.obj_sense() {
                ObjSense::Maximize => prop_assert!(l >= i - 1e-7),
                ObjSense::Minimize => prop_assert!(l <= i + 1e-7),
            }
        }
    }
}

#[test]
fn warm_start_is_used_and_bound_dominates_incumbent() {
    let m0 = random_model(7, 3, 5, 4);
    let exact = HighsBackend::default().solve(&m0, &SolveOptions::default().with_gap(0.0));
    assert!(exact.status.has_solution());
    let mut m = m0.clone();
    m.set_full_warm_start(exact.values.as_ref().unwrap()).unwrap();
    for backend in [&ReferenceBackend as &dyn Backend, &HighsBackend::default()] {
        let r = backend.solve(&m, &SolveOptions::default());
        let (o, b) = (r.objective.unwrap(), r.best_bound.unwrap());
        match m.obj_sense() {
            ObjSense::Maximize => assert!(b >= o - 1e-9 && o >= exact.objective.unwrap() - 1e-6),
            ObjSense::Minimize => assert!(b <= o + 1e-9 && o <= exact.objective.unwrap() + 1e-6),
        }
    }
}

#[test]
fn infinite_bounds_are_rejected_before_solving() {
    let mut m = MilpModel::new("inf");
    let x = m.add_continuous("x", 0.0, f64::INFINITY).unwrap();
    m.set_objective(&LinExpr::var(x), ObjSense::Maximize).unwrap();
    assert_eq!(ReferenceBackend.solve(&m, &SolveOptions::lp()).status, SolveStatus::Error);
    assert_eq!(HighsBackend::default().solve(&m, &SolveOptions::lp()).status, SolveStatus::Error);
}
