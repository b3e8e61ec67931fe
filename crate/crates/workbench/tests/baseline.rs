use std::collections::BTreeMap;

use fomcert_core::linalg::DenseMatrix;
use fomcert_core::model_ir::*;
use fomcert_workbench::baseline::{draw, sample_max};
use fomcert_workbench::generators::{gen_lasso, LassoParams, LassoVariant, StepRule};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn identity_family() -> ProblemFamily {
    ProblemFamily {
        name: "identity".into(),
        params: ParamSet { lower: vec![-1.0], upper: vec![1.0], rows: vec![] },
        init: InitSet { kind: InitKind::Box, lower: vec![-2.0, -2.0], upper: vec![2.0, 2.0], ties: BTreeMap::new() },
        algorithm: AlgorithmIr {
            name: "identity".into(),
            layout: StateLayout { slots: vec![SlotDef { name: "s".into(), dim: 2 }], history: BTreeMap::new() },
            steps: vec![Step {
                name: "copy".into(),
                inputs: vec![Source::Slot { name: "s".into(), lag: 1 }],
                output: "s".into(),
                kind: StepKind::AffineExplicit { b: LinearMap::fixed(DenseMatrix::identity(2)) },
                offset: None,
            }],
            schedules: BTreeMap::new(),
            residual: vec!["s".into()],
        },
        fixed_point_box: None,
        metadata: BTreeMap::new(),
    }
}

fn toy() -> Compiled {
    let params = LassoParams { p: 3, n: 4, ..LassoParams::default() };
    validate(&gen_lasso(&params, 5, LassoVariant::Ista, StepRule::InvLipschitz).unwrap().family).unwrap()
}

#[test]
fn identity_algorithm_has_zero_residual() {
    let c = validate(&identity_family()).unwrap();
    assert_eq!(sample_max(&c, 200, 5, 1).unwrap(), vec![0.0; 5]);
}

#[test]
fn single_sample_is_a_single_simulation() {
    let c = toy();
    let sm = sample_max(&c, 1, 6, 42).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    rng.set_stream(0);
    let (x, s0) = draw(&c, &mut rng).unwrap();
    let t = c.simulate(&x, &s0, 6).unwrap();
    for k in 1..=6 {
        assert_eq!(sm[k - 1], c.residual_inf(&t, k));
    }
}

#[test]
fn deterministic_per_seed() {
    let c = toy();
    assert_eq!(sample_max(&c, 300, 5, 9).unwrap(), sample_max(&c, 300, 5, 9).unwrap());
    assert_ne!(sample_max(&c, 300, 5, 9).unwrap(), sample_max(&c, 300, 5, 10).unwrap());
}

#[test]
fn rejection_respects_parameter_rows() {
    let mut f = identity_family();
    f.params.rows.push(LinearRow { coefs: vec![1.0], rhs: -0.5 });
    let c = validate(&f).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..100 {
        let (x, _) = draw(&c, &mut rng).unwrap();
        assert!(x[0] <= -0.5);
    }
    assert!(sample_max(&c, 0, 3, 0).is_err());
}
