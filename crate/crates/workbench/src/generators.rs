//! Instance generators for sparse coding (ISTA/FISTA) and min-cost network flow (PDHG).

use std::collections::BTreeMap;

use fomcert_core::linalg::{self, DenseMatrix, LinalgError};
use fomcert_core::model_ir::{
    AlgorithmIr, InitKind, InitSet, LinearMap, ParamSet, ProblemFamily, PwaKind, Schedule, ScheduledTerm, SlotDef,
    Source, StateBox, StateLayout, Step, StepKind,
};
use fomcert_milp::{Backend, LinExpr, MilpModel, ObjSense, Sense, SolveOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GenError {
    #[error("invalid generator parameters: {0}")]
    Params(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("no feasible flow instance after {0} graph draws")]
    Infeasible(usize),
    #[error("LP solve failed while building the instance: {0}")]
    Solver(String),
}

/// Step size presets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// `1 / lambda_max(P)`.
    InvLipschitz,
    /// `0.5 / ||A||_2`.
    HalfInvSpecnorm,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LassoVariant {
    Ista,
    Fista,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LassoParams {
    pub p: usize,
    pub n: usize,
    pub lambda: f64,
    /// Fraction of nonzero dictionary entries.
    pub density: f64,
    /// Standard deviation of the measurement noise.
    pub noise_std: f64,
    /// Signals used to build the parameter box.
    pub signals: usize,
    /// Probability that an entry of a sparse signal is nonzero.
    pub sparsity: f64,
}

impl Default for LassoParams {
    fn default() -> Self {
        Self { p: 15, n: 20, lambda: 1e-2, density: 0.2, noise_std: 0.01, signals: 100, sparsity: 0.1 }
    }
}

/// Everything drawn while building a Lasso family.
#[derive(Debug, Clone)]
pub struct LassoInstance {
    pub family: ProblemFamily,
    pub d: DenseMatrix,
    pub eta: f64,
    pub samples: Vec<Vec<f64>>,
}

fn lasso_step(rule: StepRule, d: &DenseMatrix) -> Result<f64, GenError> {
    let norm = linalg::spectral_norm(d)?;
    match rule {
        StepRule::InvLipschitz => Ok(1.0 / (norm * norm)),
        StepRule::HalfInvSpecnorm => Ok(0.5 / norm),
        StepRule::Fixed(eta) if eta > 0.0 => Ok(eta),
        StepRule::Fixed(eta) => Err(GenError::Params(format!("step size must be positive, got {eta}"))),
    }
}

/// Minimum-norm least-squares solution of `D z = x` (pseudo-inverse, so rank-deficient `D` is fine).
pub fn min_norm_solution(d: &DenseMatrix, x: &[f64]) -> Result<Vec<f64>, GenError> {
    let m = nalgebra::DMatrix::from_row_slice(d.rows(), d.cols(), d.data());
    let pinv = m.pseudo_inverse(1e-10).map_err(|e| GenError::Params(format!("pseudo-inverse failed: {e}")))?;
    Ok((pinv * nalgebra::DVector::from_column_slice(x)).iter().copied().collect())
}

/// `(1/2)||D z - x||^2 + lambda ||z||_1`.
pub fn lasso_objective(d: &DenseMatrix, x: &[f64], lambda: f64, z: &[f64]) -> f64 {
    let r: f64 = d.matvec(z).iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum();
    0.5 * r + lambda * z.iter().map(|v| v.abs()).sum::<f64>()
}

/// QP data `(P, A, q, b)` of the Lasso over `(z, mu)` with `-mu <= z <= mu`.
pub fn lasso_qp_data(d: &DenseMatrix, x: &[f64], lambda: f64) -> (DenseMatrix, DenseMatrix, Vec<f64>, Vec<f64>) {
    let n = d.cols();
    let mut p = DenseMatrix::zeros(2 * n, 2 * n);
    let dtd = d.transpose().matmul(d);
    for i in 0..n {
        for j in 0..n {
            p.set(i, j, dtd.get(i, j));
        }
    }
    let mut a = DenseMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        a.set(i, i, 1.0);
        a.set(i, n + i, -1.0);
        a.set(n + i, i, -1.0);
        a.set(n + i, n + i, -1.0);
    }
    let mut q: Vec<f64> = d.transpose().matvec(x).iter().map(|v| -v).collect();
    q.extend(std::iter::repeat(lambda).take(n));
    (p, a, q, vec![0.0; 2 * n])
}

pub fn gen_lasso(params: &LassoParams, seed: u64, variant: LassoVariant, rule: StepRule) -> Result<LassoInstance, GenError> {
    let LassoParams { p, n, lambda, density, noise_std, signals, sparsity } = *params;
    if p == 0 || n == 0 {
        return Err(GenError::Params("p and n must be at least 1".into()));
    }
    if lambda <= 0.0 || !(0.0..=1.0).contains(&density) || density == 0.0 || signals == 0 || noise_std < 0.0 {
        return Err(GenError::Params("need lambda > 0, density in (0, 1], signals >= 1, noise_std >= 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let entry = Normal::new(0.0, (1.0 / p as f64).sqrt()).expect("positive variance");
    let mut d = DenseMatrix::zeros(p, n);
    for i in 0..p {
        for j in 0..n {
            if rng.gen_bool(density) {
                d.set(i, j, entry.sample(&mut rng));
            }
        }
    }
    for j in 0..n {
        if (0..p).all(|i| d.get(i, j) == 0.0) {
            let i = rng.gen_range(0..p);
            d.set(i, j, entry.sample(&mut rng));
        }
        let norm = (0..p).map(|i| d.get(i, j).powi(2)).sum::<f64>().sqrt();
        for i in 0..p {
            d.set(i, j, d.get(i, j) / norm);
        }
    }
    let std = Normal::new(0.0, 1.0).expect("unit variance");
    let noise = Normal::new(0.0, noise_std.max(f64::MIN_POSITIVE)).expect("finite");
    let samples: Vec<Vec<f64>> = (0..signals)
        .map(|_| {
            let z: Vec<f64> = (0..n).map(|_| if rng.gen_bool(sparsity) { std.sample(&mut rng) } else { 0.0 }).collect();
            d.matvec(&z).into_iter().map(|v| if noise_std > 0.0 { v + noise.sample(&mut rng) } else { v }).collect()
        })
        .collect();
    let lower: Vec<f64> = (0..p).map(|i| samples.iter().map(|s| s[i]).fold(f64::INFINITY, f64::min)).collect();
    let upper: Vec<f64> = (0..p).map(|i| samples.iter().map(|s| s[i]).fold(f64::NEG_INFINITY, f64::max)).collect();
    let s0 = min_norm_solution(&d, &samples[rng.gen_range(0..signals)])?;

    let eta = lasso_step(rule, &d)?;
    let mut gram = DenseMatrix::identity(n);
    gram.add_scaled(&d.transpose().matmul(&d), -eta);
    let b = DenseMatrix::hstack(&[&gram, &d.transpose().scaled(eta)])?;
    let pwa = PwaKind::SoftThreshold { lambda: lambda * eta };

    // Every minimizer satisfies lambda ||z||_1 <= f(0) = ||x||^2 / 2.
    let x_sq: f64 = lower.iter().zip(&upper).map(|(l, h)| l.abs().max(h.abs()).powi(2)).sum();
    let zmax = x_sq / (2.0 * lambda);

    let (algorithm, init, fp_dim) = match variant {
        LassoVariant::Ista => (
            AlgorithmIr {
                name: "ista".into(),
                layout: StateLayout { slots: vec![SlotDef { name: "s".into(), dim: n }], history: BTreeMap::new() },
                steps: vec![Step {
                    name: "prox".into(),
                    inputs: vec![Source::Slot { name: "s".into(), lag: 1 }, Source::Param],
                    output: "s".into(),
                    kind: StepKind::PiecewiseAffine { pwa, a: LinearMap::fixed(b) },
                    offset: None,
                }],
                schedules: BTreeMap::new(),
                residual: vec!["s".into()],
            },
            InitSet { kind: InitKind::Singleton, lower: s0.clone(), upper: s0, ties: BTreeMap::new() },
            n,
        ),
        LassoVariant::Fista => {
            let eye = DenseMatrix::identity(n);
            let momentum = LinearMap {
                terms: vec![
                    ScheduledTerm { matrix: DenseMatrix::hstack(&[&eye, &DenseMatrix::zeros(n, n)])?, scale: 1.0, schedule: None },
                    ScheduledTerm {
                        matrix: DenseMatrix::hstack(&[&eye, &eye.scaled(-1.0)])?,
                        scale: 1.0,
                        schedule: Some("momentum".into()),
                    },
                ],
            };
            let mut init_lo = s0.clone();
            init_lo.extend_from_slice(&s0);
            let mut ties = BTreeMap::new();
            ties.insert("w".to_string(), "s".to_string());
            (
                AlgorithmIr {
                    name: "fista".into(),
                    layout: StateLayout {
                        slots: vec![SlotDef { name: "s".into(), dim: n }, SlotDef { name: "w".into(), dim: n }],
                        history: BTreeMap::new(),
                    },
                    steps: vec![
                        Step {
                            name: "prox".into(),
                            inputs: vec![Source::Slot { name: "w".into(), lag: 1 }, Source::Param],
                            output: "s".into(),
                            kind: StepKind::PiecewiseAffine { pwa, a: LinearMap::fixed(b) },
                            offset: None,
                        },
                        Step {
                            name: "extrapolate".into(),
                            inputs: vec![Source::Slot { name: "s".into(), lag: 0 }, Source::Slot { name: "s".into(), lag: 1 }],
                            output: "w".into(),
                            kind: StepKind::AffineExplicit { b: momentum },
                            offset: None,
                        },
                    ],
                    schedules: [("momentum".to_string(), Schedule::FistaMomentum)].into_iter().collect(),
                    residual: vec!["s".into()],
                },
                InitSet { kind: InitKind::Singleton, lower: init_lo.clone(), upper: init_lo, ties },
                2 * n,
            )
        }
    };
    let mut metadata = BTreeMap::new();
    metadata.insert("generator".into(), serde_json::json!("lasso"));
    metadata.insert("seed".into(), serde_json::json!(seed));
    metadata.insert("eta".into(), serde_json::json!(eta));
    metadata.insert("dictionary".into(), serde_json::to_value(&d).expect("serializable"));
    let family = ProblemFamily {
        name: format!("lasso_{}_p{p}_n{n}", algorithm.name),
        params: ParamSet { lower, upper, rows: Vec::new() },
        init,
        algorithm,
        fixed_point_box: Some(StateBox { lower: vec![-zmax; fp_dim], upper: vec![zmax; fp_dim] }),
        metadata,
    };
    Ok(LassoInstance { family, d, eta, samples })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowVariant {
    Pdhg,
    PdhgMomentum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowParams {
    pub n_supply: usize,
    pub n_demand: usize,
    pub edge_prob: f64,
    pub supply: f64,
    pub capacity: f64,
    pub cost_range: (f64, f64),
    /// Every demand entry ranges over this interval (demands are nonpositive).
    pub demand_box: (f64, f64),
    /// Graph redraws allowed until the maximum-demand instance is feasible.
    pub max_attempts: usize,
}

impl Default for FlowParams {
    fn default() -> Self {
        Self {
            n_supply: 10,
            n_demand: 5,
            edge_prob: 0.5,
            supply: 10.0,
            capacity: 4.0,
            cost_range: (5.0, 10.0),
            demand_box: (-7.0, -5.0),
            max_attempts: 100,
        }
    }
}

/// The LP `min mu^T f  s.t.  -f <= 0, f <= c, A_s f <= b_s, A_d f = x`.
#[derive(Debug, Clone)]
pub struct FlowInstance {
    pub family: ProblemFamily,
    pub edges: Vec<(usize, usize)>,
    /// Rows `[-I; I; A_s]`.
    pub a_ineq: DenseMatrix,
    pub b_ineq: Vec<f64>,
    pub a_eq: DenseMatrix,
    pub cost: Vec<f64>,
    pub eta: f64,
}

impl FlowInstance {
    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Rows of the full constraint matrix `A`.
    pub fn m(&self) -> usize {
        self.a_ineq.rows() + self.a_eq.rows()
    }
}

/// Optimal flow for demand `x`, or `None` if the LP is infeasible.
pub fn solve_flow_primal(inst: &FlowInstance, x: &[f64], backend: &dyn Backend) -> Result<Option<Vec<f64>>, GenError> {
    let ne = inst.n_edges();
    let mut m = MilpModel::new("flow_primal");
    let f: Vec<_> = (0..ne)
        .map(|e| m.add_continuous(format!("f[{e}]"), 0.0, inst.b_ineq[ne + e]))
        .collect::<Result<_, _>>()
        .map_err(|e| GenError::Solver(e.to_string()))?;
    let rows = [(&inst.a_ineq, Sense::Le), (&inst.a_eq, Sense::Eq)];
    let rhs: Vec<f64> = inst.b_ineq.iter().chain(x).copied().collect();
    let mut r = 0;
    for (mat, sense) in rows {
        for i in 0..mat.rows() {
            let mut e = LinExpr::new();
            for (j, &v) in f.iter().enumerate() {
                if mat.get(i, j) != 0.0 {
                    e.add_term(v, mat.get(i, j));
                }
            }
            m.add_constr(format!("r{r}"), &e, sense, rhs[r]).map_err(|e| GenError::Solver(e.to_string()))?;
            r += 1;
        }
    }
    let mut obj = LinExpr::new();
    for (v, c) in f.iter().zip(&inst.cost) {
        obj.add_term(*v, *c);
    }
    m.set_objective(&obj, ObjSense::Minimize).map_err(|e| GenError::Solver(e.to_string()))?;
    let res = backend.solve(&m, &SolveOptions::lp());
    match res.status {
        fomcert_milp::SolveStatus::Optimal => Ok(res.values),
        fomcert_milp::SolveStatus::Infeasible => Ok(None),
        s => Err(GenError::Solver(format!("{s}: {}", res.message))),
    }
}

/// Optimal dual `(w >= 0, u free)` with `A_ineq^T w + A_eq^T u + mu = 0`, maximizing `-b^T (w, u)`.
fn solve_flow_dual(inst: &FlowInstance, x: &[f64], backend: &dyn Backend) -> Result<(Vec<f64>, Vec<f64>), GenError> {
    const BOX: f64 = 1e4;
    let err = |e: fomcert_milp::ModelError| GenError::Solver(e.to_string());
    let mut m = MilpModel::new("flow_dual");
    let w: Vec<_> = (0..inst.a_ineq.rows()).map(|i| m.add_continuous(format!("w[{i}]"), 0.0, BOX)).collect::<Result<_, _>>().map_err(err)?;
    let u: Vec<_> = (0..inst.a_eq.rows()).map(|i| m.add_continuous(format!("u[{i}]"), -BOX, BOX)).collect::<Result<_, _>>().map_err(err)?;
    for j in 0..inst.n_edges() {
        let mut e = LinExpr::new();
        for (i, &v) in w.iter().enumerate() {
            if inst.a_ineq.get(i, j) != 0.0 {
                e.add_term(v, inst.a_ineq.get(i, j));
            }
        }
        for (i, &v) in u.iter().enumerate() {
            if inst.a_eq.get(i, j) != 0.0 {
                e.add_term(v, inst.a_eq.get(i, j));
            }
        }
        m.add_constr(format!("stat{j}"), &e, Sense::Eq, -inst.cost[j]).map_err(err)?;
    }
    let mut obj = LinExpr::new();
    for (v, b) in w.iter().zip(&inst.b_ineq) {
        obj.add_term(*v, -b);
    }
    for (v, b) in u.iter().zip(x) {
        obj.add_term(*v, -b);
    }
    m.set_objective(&obj, ObjSense::Maximize).map_err(err)?;
    let res = backend.solve(&m, &SolveOptions::lp());
    let vals = match (res.status, res.values) {
        (fomcert_milp::SolveStatus::Optimal, Some(v)) => v,
        (s, _) => return Err(GenError::Solver(format!("dual LP {s}: {}", res.message))),
    };
    if vals.iter().any(|v| v.abs() > BOX * (1.0 - 1e-9)) {
        return Err(GenError::Solver("dual solution hit its artificial bound".into()));
    }
    let wv = w.iter().map(|v| vals[v.0].max(0.0)).collect();
    let uv = u.iter().map(|v| vals[v.0]).collect();
    Ok((wv, uv))
}

fn draw_graph(params: &FlowParams, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for s in 0..params.n_supply {
        for d in 0..params.n_demand {
            if rng.gen_bool(params.edge_prob) {
                edges.push((s, d));
            }
        }
    }
    edges
}

pub fn gen_network_flow(
    params: &FlowParams,
    seed: u64,
    variant: FlowVariant,
    rule: StepRule,
    backend: &dyn Backend,
) -> Result<FlowInstance, GenError> {
    let (ns, nd) = (params.n_supply, params.n_demand);
    if ns == 0 || nd == 0 || !(0.0..=1.0).contains(&params.edge_prob) || params.edge_prob == 0.0 {
        return Err(GenError::Params("need at least one node per side and edge_prob in (0, 1]".into()));
    }
    let (dlo, dhi) = params.demand_box;
    if dlo > dhi || dhi > 0.0 {
        return Err(GenError::Params("demand box must satisfy lo <= hi <= 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..params.max_attempts.max(1) {
        let edges = draw_graph(params, &mut rng);
        let cost: Vec<f64> = edges.iter().map(|_| rng.gen_range(params.cost_range.0..=params.cost_range.1)).collect();
        if edges.is_empty() {
            continue;
        }
        let ne = edges.len();
        let mut a_s = DenseMatrix::zeros(ns, ne);
        let mut a_d = DenseMatrix::zeros(nd, ne);
        for (e, &(s, d)) in edges.iter().enumerate() {
            a_s.set(s, e, 1.0);
            a_d.set(d, e, -1.0);
        }
        let eye = DenseMatrix::identity(ne);
        let a_ineq = DenseMatrix::vstack(&[&eye.scaled(-1.0), &eye, &a_s])?;
        let mut b_ineq = vec![0.0; ne];
        b_ineq.extend(std::iter::repeat(params.capacity).take(ne));
        b_ineq.extend(std::iter::repeat(params.supply).take(ns));
        let mut inst = FlowInstance { family: placeholder(), edges, a_ineq, b_ineq, a_eq: a_d, cost, eta: 0.0 };
        let x_max = vec![dlo; nd];
        let Some(f0) = solve_flow_primal(&inst, &x_max, backend)? else {
            continue;
        };
        let (w0, u0) = solve_flow_dual(&inst, &x_max, backend)?;
        let a_full = DenseMatrix::vstack(&[&inst.a_ineq, &inst.a_eq])?;
        inst.eta = match rule {
            StepRule::HalfInvSpecnorm => 0.5 / linalg::spectral_norm(&a_full)?,
            StepRule::InvLipschitz => 1.0 / linalg::spectral_norm(&a_full)?,
            StepRule::Fixed(eta) if eta > 0.0 => eta,
            StepRule::Fixed(eta) => return Err(GenError::Params(format!("step size must be positive, got {eta}"))),
        };
        inst.family = pdhg_family(&inst, params, variant, seed, &f0, &w0, &u0)?;
        return Ok(inst);
    }
    Err(GenError::Infeasible(params.max_attempts.max(1)))
}

fn placeholder() -> ProblemFamily {
    ProblemFamily {
        name: String::new(),
        params: ParamSet::singleton(Vec::new()),
        init: InitSet { kind: InitKind::Singleton, lower: Vec::new(), upper: Vec::new(), ties: BTreeMap::new() },
        algorithm: AlgorithmIr {
            name: String::new(),
            layout: StateLayout { slots: Vec::new(), history: BTreeMap::new() },
            steps: Vec::new(),
            schedules: BTreeMap::new(),
            residual: Vec::new(),
        },
        fixed_point_box: None,
        metadata: BTreeMap::new(),
    }
}

fn pdhg_family(
    inst: &FlowInstance,
    params: &FlowParams,
    variant: FlowVariant,
    seed: u64,
    f0: &[f64],
    w0: &[f64],
    u0: &[f64],
) -> Result<ProblemFamily, GenError> {
    let eta = inst.eta;
    let (ne, mi, me) = (inst.n_edges(), inst.a_ineq.rows(), inst.a_eq.rows());
    let lag = |name: &str, lag: usize| Source::Slot { name: name.into(), lag };

    // w+ = max(w + eta (A_ineq z - b_ineq), 0)
    let dual_ineq = Step {
        name: "dual_ineq".into(),
        inputs: vec![lag("w", 1), lag("z", 1)],
        output: "w".into(),
        kind: StepKind::PiecewiseAffine {
            pwa: PwaKind::Relu,
            a: LinearMap::fixed(DenseMatrix::hstack(&[&DenseMatrix::identity(mi), &inst.a_ineq.scaled(eta)])?),
        },
        offset: Some(inst.b_ineq.iter().map(|b| -eta * b).collect()),
    };
    // u+ = u + eta (A_eq z - x): equality duals are free.
    let dual_eq = Step {
        name: "dual_eq".into(),
        inputs: vec![lag("u", 1), lag("z", 1), Source::Param],
        output: "u".into(),
        kind: StepKind::AffineExplicit {
            b: LinearMap::fixed(DenseMatrix::hstack(&[
                &DenseMatrix::identity(me),
                &inst.a_eq.scaled(eta),
                &DenseMatrix::identity(me).scaled(-eta),
            ])?),
        },
        offset: None,
    };
    // z+ = z - eta (A_ineq^T (c1 w+ - c0 w) + A_eq^T (c1 u+ - c0 u) + mu)
    let at_i = inst.a_ineq.transpose().scaled(-eta);
    let at_e = inst.a_eq.transpose().scaled(-eta);
    let zn = DenseMatrix::zeros(ne, ne);
    // Columns: z, w+, w, u+, u.
    let block = |cz: &DenseMatrix, c_new: f64, c_old: f64| {
        DenseMatrix::hstack(&[cz, &at_i.scaled(c_new), &at_i.scaled(c_old), &at_e.scaled(c_new), &at_e.scaled(c_old)])
    };
    let mut terms = vec![ScheduledTerm { matrix: block(&DenseMatrix::identity(ne), 2.0, -1.0)?, scale: 1.0, schedule: None }];
    let mut schedules = BTreeMap::new();
    if variant == FlowVariant::PdhgMomentum {
        // w~ = w+ + theta (w+ - w), so 2 w~ - w = (2 + 2 theta) w+ - (1 + 2 theta) w.
        terms.push(ScheduledTerm { matrix: block(&zn, 2.0, -2.0)?, scale: 1.0, schedule: Some("theta".into()) });
        schedules.insert("theta".to_string(), Schedule::KOverKPlus { shift: 3.0 });
    }
    let primal = Step {
        name: "primal".into(),
        inputs: vec![lag("z", 1), lag("w", 0), lag("w", 1), lag("u", 0), lag("u", 1)],
        output: "z".into(),
        kind: StepKind::AffineExplicit { b: LinearMap { terms } },
        offset: Some(inst.cost.iter().map(|c| -eta * c).collect()),
    };
    let name = match variant {
        FlowVariant::Pdhg => "pdhg",
        FlowVariant::PdhgMomentum => "pdhg_momentum",
    };
    let mut s0 = f0.to_vec();
    s0.extend_from_slice(w0);
    s0.extend_from_slice(u0);
    let mut metadata = BTreeMap::new();
    metadata.insert("generator".into(), serde_json::json!("network_flow"));
    metadata.insert("seed".into(), serde_json::json!(seed));
    metadata.insert("eta".into(), serde_json::json!(eta));
    metadata.insert("edges".into(), serde_json::json!(inst.edges));
    metadata.insert("cost".into(), serde_json::json!(inst.cost));
    metadata.insert("m".into(), serde_json::json!(inst.m()));
    metadata.insert("n".into(), serde_json::json!(ne));
    Ok(ProblemFamily {
        name: format!("flow_{name}_{}x{}", params.n_supply, params.n_demand),
        params: ParamSet {
            lower: vec![params.demand_box.0; params.n_demand],
            upper: vec![params.demand_box.1; params.n_demand],
            rows: Vec::new(),
        },
        init: InitSet { kind: InitKind::Singleton, lower: s0.clone(), upper: s0, ties: BTreeMap::new() },
        algorithm: AlgorithmIr {
            name: name.into(),
            layout: StateLayout {
                slots: vec![
                    SlotDef { name: "z".into(), dim: ne },
                    SlotDef { name: "w".into(), dim: mi },
                    SlotDef { name: "u".into(), dim: me },
                ],
                history: BTreeMap::new(),
            },
            steps: vec![dual_ineq, dual_eq, primal],
            schedules,
            residual: vec!["z".into(), "w".into(), "u".into()],
        },
        fixed_point_box: None,
        metadata,
    })
}
