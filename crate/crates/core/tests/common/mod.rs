#![allow(dead_code)]

use std::collections::BTreeMap;

use fomcert_core::linalg::DenseMatrix;
use fomcert_core::model_ir::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> DenseMatrix {
    let data = (0..rows * cols).map(|_| rng.gen_range(-scale..scale)).collect();
    DenseMatrix::from_vec(rows, cols, data).unwrap()
}

/// `s+ = phi(A s + B x + c)` with random data and box sets.
pub fn one_step_family(pwa: Option<PwaKind>, n: usize, p: usize, seed: u64) -> ProblemFamily {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = random_matrix(&mut rng, n, n, 0.8 / n as f64 + 0.2);
    let b = random_matrix(&mut rng, n, p, 0.7);
    let m = DenseMatrix::hstack(&[&a, &b]).unwrap();
    let offset: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.3..0.3)).collect();
    let kind = match pwa {
        Some(pwa) => StepKind::PiecewiseAffine { pwa, a: LinearMap::fixed(m) },
        None => StepKind::AffineExplicit { b: LinearMap::fixed(m) },
    };
    ProblemFamily {
        name: format!("random_{seed}"),
        params: ParamSet { lower: vec![-1.0; p], upper: vec![1.0; p], rows: vec![] },
        init: InitSet { kind: InitKind::Box, lower: vec![-0.5; n], upper: vec![0.5; n], ties: BTreeMap::new() },
        algorithm: AlgorithmIr {
            name: "step".into(),
            layout: StateLayout { slots: vec![SlotDef { name: "s".into(), dim: n }], history: BTreeMap::new() },
            steps: vec![Step {
                name: "map".into(),
                inputs: vec![Source::Slot { name: "s".into(), lag: 1 }, Source::Param],
                output: "s".into(),
                kind,
                offset: Some(offset),
            }],
            schedules: BTreeMap::new(),
            residual: vec!["s".into()],
        },
        fixed_point_box: None,
        metadata: BTreeMap::new(),
    }
}

pub fn kinds(n: usize) -> Vec<PwaKind> {
    vec![
        PwaKind::SoftThreshold { lambda: 0.15 },
        PwaKind::Relu,
        PwaKind::SatLin { lower: vec![-0.4; n], upper: vec![0.3; n] },
    ]
}

pub fn draw(c: &Compiled, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    let p = &c.family.params;
    let i = &c.family.init;
    let u = |rng: &mut ChaCha8Rng, l: &[f64], h: &[f64]| -> Vec<f64> {
        l.iter().zip(h).map(|(&a, &b)| if b > a { rng.gen_range(a..=b) } else { a }).collect()
    };
    (u(rng, &p.lower, &p.upper), u(rng, &i.lower, &i.upper))
}
