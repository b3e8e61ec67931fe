//! Vertex enumeration of the hull description: every vertex must lie on the graph.

use fomcert_core::cutgen::{classify, enumerate, Classification, HullCut, HullKind, HullQuery};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn combinations(n: usize, k: usize, f: &mut impl FnMut(&[usize])) {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
        if cur.len() == k {
            f(cur);
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, f);
            cur.pop();
        }
    }
    rec(0, n, k, &mut Vec::new(), f);
}

/// Largest distance of a polyhedron vertex from the graph of the operator.
fn max_vertex_error(q: &HullQuery, rows: &[HullCut]) -> f64 {
    let d = q.a.len();
    let mut a_rows: Vec<Vec<f64>> = Vec::new();
    let mut b: Vec<f64> = Vec::new();
    for r in rows {
        let mut v = r.coef_y.clone();
        v.push(r.coef_w);
        a_rows.push(v);
        b.push(r.rhs);
    }
    for i in 0..d {
        let mut e = vec![0.0; d + 1];
        e[i] = 1.0;
        a_rows.push(e.clone());
        b.push(q.y_hi[i]);
        e[i] = -1.0;
        a_rows.push(e);
        b.push(-q.y_lo[i]);
    }
    let m = a_rows.len();
    let mut worst: f64 = 0.0;
    let mut count = 0;
    combinations(m, d + 1, &mut |idx| {
        let mat = DMatrix::from_fn(d + 1, d + 1, |i, j| a_rows[idx[i]][j]);
        if mat.determinant().abs() < 1e-10 {
            return;
        }
        let rhs = DVector::from_fn(d + 1, |i, _| b[idx[i]]);
        let Some(x) = mat.lu().solve(&rhs) else { return };
        let feasible = (0..m).all(|r| (0..=d).map(|j| a_rows[r][j] * x[j]).sum::<f64>() <= b[r] + 1e-9);
        if feasible {
            count += 1;
            let t: f64 = (0..d).map(|j| q.a[j] * x[j]).sum::<f64>() + q.offset;
            worst = worst.max((x[d] - q.kind.apply(t)).abs());
        }
    });
    assert!(count > 0, "polyhedron has no vertices");
    worst
}

#[test]
fn hull_vertices_lie_on_graph() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let kinds = [HullKind::Relu, HullKind::SoftThreshold { lambda: 0.25 }, HullKind::SatLin { b: -0.3, c: 0.6 }];
    for kind in kinds {
        let mut general = 0;
        for _ in 0..60 {
            let d = rng.gen_range(1..=3);
            let a: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.5..1.5)).collect();
            let y_lo: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..0.5)).collect();
            let y_hi: Vec<f64> = y_lo.iter().map(|l| l + rng.gen_range(0.2..1.5)).collect();
            let q = HullQuery { a, offset: rng.gen_range(-0.4..0.4), y_lo, y_hi, kind };
            if classify(&q) == Classification::General {
                general += 1;
            }
            let err = max_vertex_error(&q, &enumerate(&q));
            assert!(err < 1e-8, "{kind:?} d={d}: vertex off graph by {err}");
        }
        assert!(general > 20);
    }
}

#[test]
fn index_free_secants_alone_leave_vertices_off_graph() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..40 {
        let q = HullQuery {
            a: vec![rng.gen_range(0.5..1.5), rng.gen_range(0.5..1.5)],
            offset: 0.0,
            y_lo: vec![-1.0, -1.0],
            y_hi: vec![1.0, 1.0],
            kind: HullKind::SatLin { b: -0.3, c: 0.4 },
        };
        let rows: Vec<HullCut> = enumerate(&q)
            .into_iter()
            .filter(|r| !(matches!(r.family, fomcert_core::cutgen::Family::UpperSecant | fomcert_core::cutgen::Family::LowerSecant) && r.index_size > 0))
            .collect();
        worst = worst.max(max_vertex_error(&q, &rows));
    }
    assert!(worst > 1e-3, "expected an inexact relaxation, worst error {worst}");
}
