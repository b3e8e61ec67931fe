//! Problem-family and algorithm description, validation and exact simulation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, DenseMatrix, LinalgError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IrError {
    #[error("{0}")]
    Invalid(String),
    #[error("step {step}: {source}")]
    Linalg { step: String, source: LinalgError },
    #[error("schedule {name} has no value for iteration {k}")]
    ScheduleTooShort { name: String, k: usize },
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, IrError> {
    Err(IrError::Invalid(msg.into()))
}

/// Parameter set `X`: a box, optionally cut by extra rows `coefs . x <= rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rows: Vec<LinearRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearRow {
    pub coefs: Vec<f64>,
    pub rhs: f64,
}

impl ParamSet {
    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn singleton(x: Vec<f64>) -> Self {
        Self { lower: x.clone(), upper: x, rows: Vec::new() }
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.dim()
            && x.iter().zip(&self.lower).zip(&self.upper).all(|((v, l), u)| *v >= l - tol && *v <= u + tol)
            && self.rows.iter().all(|r| linalg::dot(&r.coefs, x) <= r.rhs + tol)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    Singleton,
    Box,
}

/// Initial set `S` over the full state vector (slots concatenated in layout order).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitSet {
    pub kind: InitKind,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// `slot -> source`: the slot starts equal to the source slot.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub ties: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotDef {
    pub name: String,
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateLayout {
    pub slots: Vec<SlotDef>,
    /// Per slot, how many previous iterates steps may read. Defaults to 1.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub history: BTreeMap<String, usize>,
}

/// Where a step input comes from.
///
/// `lag = 0` reads the value produced earlier in the same iteration, `lag = h >= 1` reads the
/// slot at iteration `k + 1 - h` (clamped at the initial state).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Source {
    Slot { name: String, lag: usize },
    Param,
    Init { slot: String },
}

/// Iteration-dependent scalar coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Schedule {
    /// Explicit values indexed by iteration `k`.
    Values { values: Vec<f64> },
    /// `(beta_k - 1) / beta_{k+1}` with `beta_0 = 1`, `beta_{k+1} = (1 + sqrt(1 + 4 beta_k^2)) / 2`.
    FistaMomentum,
    /// `k / (k + shift)`.
    KOverKPlus { shift: f64 },
}

impl Schedule {
    pub fn values(&self, kmax: usize) -> Option<Vec<f64>> {
        match self {
            Schedule::Values { values } => (values.len() >= kmax).then(|| values[..kmax].to_vec()),
            Schedule::FistaMomentum => {
                let mut beta = 1.0f64;
                Some(
                    (0..kmax)
                        .map(|_| {
                            let next = (1.0 + (1.0 + 4.0 * beta * beta).sqrt()) / 2.0;
                            let g = (beta - 1.0) / next;
                            beta = next;
                            g
                        })
                        .collect(),
                )
            }
            Schedule::KOverKPlus { shift } => Some((0..kmax).map(|k| k as f64 / (k as f64 + shift)).collect()),
        }
    }
}

fn one() -> f64 {
    1.0
}

fn is_one(v: &f64) -> bool {
    *v == 1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduledTerm {
    pub matrix: DenseMatrix,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<String>,
}

/// `sum_j scale_j * schedule_j(k) * matrix_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearMap {
    pub terms: Vec<ScheduledTerm>,
}

impl LinearMap {
    pub fn fixed(m: DenseMatrix) -> Self {
        Self { terms: vec![ScheduledTerm { matrix: m, scale: 1.0, schedule: None }] }
    }

    pub fn shape(&self) -> Option<(usize, usize)> {
        self.terms.first().map(|t| (t.matrix.rows(), t.matrix.cols()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PwaKind {
    SoftThreshold { lambda: f64 },
    Relu,
    SatLin { lower: Vec<f64>, upper: Vec<f64> },
}

impl PwaKind {
    pub fn name(&self) -> &'static str {
        match self {
            PwaKind::SoftThreshold { .. } => "soft_threshold",
            PwaKind::Relu => "relu",
            PwaKind::SatLin { .. } => "satlin",
        }
    }

    /// Applies the scalar nonlinearity of row `i` to `t`.
    pub fn apply(&self, i: usize, t: f64) -> f64 {
        match self {
            PwaKind::SoftThreshold { lambda } => {
                if t > *lambda {
                    t - lambda
                } else if t < -lambda {
                    t + lambda
                } else {
                    0.0
                }
            }
            PwaKind::Relu => t.max(0.0),
            PwaKind::SatLin { lower, upper } => t.clamp(lower[i], upper[i]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepKind {
    /// `w = B(k) y`.
    AffineExplicit { b: LinearMap },
    /// `M w = B y` with `M` nonsingular.
    AffineImplicit { m: DenseMatrix, b: DenseMatrix },
    /// `w_i = phi_i(A(k)_i . y)`.
    PiecewiseAffine { pwa: PwaKind, a: LinearMap },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub name: String,
    pub inputs: Vec<Source>,
    pub output: String,
    #[serde(flatten)]
    pub kind: StepKind,
    /// Constant added to `B y` (affine steps) or to the argument `A y` (piecewise-affine steps).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmIr {
    pub name: String,
    pub layout: StateLayout,
    pub steps: Vec<Step>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub schedules: BTreeMap<String, Schedule>,
    /// Slots whose successive difference is the fixed-point residual.
    pub residual: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemFamily {
    pub name: String,
    pub params: ParamSet,
    pub init: InitSet,
    pub algorithm: AlgorithmIr,
    /// Box known to contain every fixed point; needed for the radius problem.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_point_box: Option<StateBox>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, serde_json::Value>,
}

/// Resolved input reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputRef {
    Slot { slot: usize, lag: usize },
    Param,
    Init { slot: usize },
}

#[derive(Debug, Clone)]
pub enum CompiledKind {
    Affine,
    Pwa(PwaKind),
}

#[derive(Debug, Clone)]
pub struct CompiledStep {
    pub name: String,
    pub inputs: Vec<InputRef>,
    pub input_dims: Vec<usize>,
    pub output: usize,
    pub kind: CompiledKind,
    pub map: Vec<(DenseMatrix, f64, Option<usize>)>,
    pub offset: Vec<f64>,
}

impl CompiledStep {
    pub fn out_dim(&self) -> usize {
        self.map[0].0.rows()
    }

    pub fn in_dim(&self) -> usize {
        self.map[0].0.cols()
    }
}

/// A validated family with resolved indices; the form every other module works on.
#[derive(Debug, Clone)]
pub struct Compiled {
    pub family: ProblemFamily,
    pub slot_names: Vec<String>,
    pub slot_dims: Vec<usize>,
    pub slot_offsets: Vec<usize>,
    pub history: Vec<usize>,
    pub steps: Vec<CompiledStep>,
    pub schedule_names: Vec<String>,
    pub residual: Vec<usize>,
    /// `ties[slot] = Some(src)` when the slot starts equal to `src`.
    pub ties: Vec<Option<usize>>,
}

/// Validates a family and resolves it for use by the other modules.
pub fn validate(family: &ProblemFamily) -> Result<Compiled, IrError> {
    let alg = &family.algorithm;
    let p = family.params.dim();
    if family.params.upper.len() != p {
        return invalid("parameter bounds have different lengths");
    }
    for (i, (l, u)) in family.params.lower.iter().zip(&family.params.upper).enumerate() {
        if l.is_nan() || u.is_nan() || l > u {
            return invalid(format!("parameter bound {i}: [{l}, {u}] is empty"));
        }
    }
    for (i, r) in family.params.rows.iter().enumerate() {
        if r.coefs.len() != p || !r.rhs.is_finite() || r.coefs.iter().any(|c| !c.is_finite()) {
            return invalid(format!("parameter row {i} is malformed"));
        }
    }

    let mut slot_names = Vec::new();
    let mut slot_dims = Vec::new();
    let mut slot_offsets = Vec::new();
    let mut total = 0;
    for s in &alg.layout.slots {
        if slot_names.contains(&s.name) {
            return invalid(format!("duplicate slot {}", s.name));
        }
        if s.dim == 0 {
            return invalid(format!("slot {} has dimension 0", s.name));
        }
        slot_names.push(s.name.clone());
        slot_dims.push(s.dim);
        slot_offsets.push(total);
        total += s.dim;
    }
    let slot_idx = |name: &str| slot_names.iter().position(|n| n == name);
    for name in alg.layout.history.keys() {
        if slot_idx(name).is_none() {
            return invalid(format!("history refers to unknown slot {name}"));
        }
    }
    let history: Vec<usize> = slot_names.iter().map(|n| *alg.layout.history.get(n).unwrap_or(&1)).collect();

    let schedule_names: Vec<String> = alg.schedules.keys().cloned().collect();
    for (name, s) in &alg.schedules {
        if let Schedule::Values { values } = s {
            if values.iter().any(|v| !v.is_finite()) {
                return invalid(format!("schedule {name} has non-finite values"));
            }
        }
    }

    let init = &family.init;
    if init.lower.len() != total || init.upper.len() != total {
        return invalid(format!(
            "initial set has {} / {} bounds, state dimension is {total}",
            init.lower.len(),
            init.upper.len()
        ));
    }
    for i in 0..total {
        let (l, u) = (init.lower[i], init.upper[i]);
        if l.is_nan() || u.is_nan() || l > u || !l.is_finite() || !u.is_finite() {
            return invalid(format!("initial bound {i}: [{l}, {u}] is empty or unbounded"));
        }
        if init.kind == InitKind::Singleton && l != u {
            return invalid(format!("singleton initial set has lower != upper at {i}"));
        }
    }
    let mut ties = vec![None; slot_names.len()];
    for (slot, src) in &init.ties {
        let (Some(a), Some(b)) = (slot_idx(slot), slot_idx(src)) else {
            return invalid(format!("tie {slot} -> {src} refers to an unknown slot"));
        };
        if slot_dims[a] != slot_dims[b] || a == b {
            return invalid(format!("tie {slot} -> {src} has mismatched dimensions"));
        }
        ties[a] = Some(b);
    }
    if ties.iter().flatten().any(|&src| ties[src].is_some()) {
        return invalid("chained initial ties are not supported");
    }

    let mut written = vec![false; slot_names.len()];
    let mut steps = Vec::new();
    for st in &alg.steps {
        let Some(out) = slot_idx(&st.output) else {
            return invalid(format!("step {} writes unknown slot {}", st.name, st.output));
        };
        if written[out] {
            return invalid(format!("slot {} is written twice per iteration", st.output));
        }
        let mut inputs = Vec::new();
        let mut input_dims = Vec::new();
        for src in &st.inputs {
            let (r, d) = match src {
                Source::Param => (InputRef::Param, p),
                Source::Init { slot } => {
                    let Some(i) = slot_idx(slot) else {
                        return invalid(format!("step {} reads unknown slot {slot}", st.name));
                    };
                    (InputRef::Init { slot: i }, slot_dims[i])
                }
                Source::Slot { name, lag } => {
                    let Some(i) = slot_idx(name) else {
                        return invalid(format!("step {} reads unknown slot {name}", st.name));
                    };
                    if *lag == 0 && !written[i] {
                        return invalid(format!(
                            "step {} reads {name} of the current iteration before it is written",
                            st.name
                        ));
                    }
                    if *lag > history[i] {
                        return invalid(format!(
                            "step {} reads {name} at lag {lag}, history is {}",
                            st.name, history[i]
                        ));
                    }
                    (InputRef::Slot { slot: i, lag: *lag }, slot_dims[i])
                }
            };
            inputs.push(r);
            input_dims.push(d);
        }
        let in_dim: usize = input_dims.iter().sum();
        let out_dim = slot_dims[out];
        let resolve_map = |map: &LinearMap| -> Result<Vec<(DenseMatrix, f64, Option<usize>)>, IrError> {
            if map.terms.is_empty() {
                return invalid(format!("step {} has an empty linear map", st.name));
            }
            map.terms
                .iter()
                .map(|t| {
                    if t.matrix.rows() != out_dim || t.matrix.cols() != in_dim {
                        return invalid(format!(
                            "step {}: matrix is {}x{}, expected {out_dim}x{in_dim}",
                            st.name,
                            t.matrix.rows(),
                            t.matrix.cols()
                        ));
                    }
                    if !t.matrix.is_finite() || !t.scale.is_finite() {
                        return invalid(format!("step {} has non-finite coefficients", st.name));
                    }
                    let sched = match &t.schedule {
                        None => None,
                        Some(n) => match schedule_names.iter().position(|s| s == n) {
                            Some(i) => Some(i),
                            None => return invalid(format!("step {} uses unknown schedule {n}", st.name)),
                        },
                    };
                    Ok((t.matrix.clone(), t.scale, sched))
                })
                .collect()
        };
        let (kind, map) = match &st.kind {
            StepKind::AffineExplicit { b } => (CompiledKind::Affine, resolve_map(b)?),
            StepKind::AffineImplicit { m, b } => {
                if m.rows() != out_dim || m.cols() != out_dim || b.rows() != out_dim || b.cols() != in_dim {
                    return invalid(format!("step {}: implicit system has wrong shape", st.name));
                }
                let explicit = linalg::solve_for_explicit(m, b)
                    .map_err(|source| IrError::Linalg { step: st.name.clone(), source })?;
                (CompiledKind::Affine, vec![(explicit, 1.0, None)])
            }
            StepKind::PiecewiseAffine { pwa, a } => {
                match pwa {
                    PwaKind::SoftThreshold { lambda } if !(*lambda > 0.0 && lambda.is_finite()) => {
                        return invalid(format!("step {}: soft-threshold lambda must be positive", st.name));
                    }
                    PwaKind::SatLin { lower, upper } => {
                        if lower.len() != out_dim || upper.len() != out_dim {
                            return invalid(format!("step {}: saturation bounds have wrong length", st.name));
                        }
                        if lower.iter().zip(upper).any(|(b, c)| !(b < c) || !b.is_finite() || !c.is_finite()) {
                            return invalid(format!("step {}: saturation needs finite b < c", st.name));
                        }
                    }
                    _ => {}
                }
                (CompiledKind::Pwa(pwa.clone()), resolve_map(a)?)
            }
        };
        let offset = match &st.offset {
            None => vec![0.0; out_dim],
            Some(o) if o.len() == out_dim && o.iter().all(|v| v.is_finite()) => o.clone(),
            Some(_) => return invalid(format!("step {}: offset has wrong length", st.name)),
        };
        written[out] = true;
        steps.push(CompiledStep { name: st.name.clone(), inputs, input_dims, output: out, kind, map, offset });
    }
    if let Some(i) = written.iter().position(|w| !w) {
        return invalid(format!("slot {} is never written", slot_names[i]));
    }
    if alg.residual.is_empty() {
        return invalid("no residual slot");
    }
    let mut residual = Vec::new();
    for r in &alg.residual {
        match slot_idx(r) {
            Some(i) if !residual.contains(&i) => residual.push(i),
            _ => return invalid(format!("residual slot {r} is unknown or repeated")),
        }
    }
    if let Some(fp) = &family.fixed_point_box {
        if fp.lower.len() != total || fp.upper.len() != total || fp.lower.iter().zip(&fp.upper).any(|(l, u)| !(l <= u)) {
            return invalid("fixed-point box is malformed");
        }
    }
    Ok(Compiled {
        family: family.clone(),
        slot_names,
        slot_dims,
        slot_offsets,
        history,
        steps,
        schedule_names,
        residual,
        ties,
    })
}

/// Iterates `s^0, ..., s^K`, each stored as one vector per slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Vec<Vec<f64>>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

impl Compiled {
    pub fn param_dim(&self) -> usize {
        self.family.params.dim()
    }

    pub fn state_dim(&self) -> usize {
        self.slot_dims.iter().sum()
    }

    pub fn residual_dim(&self) -> usize {
        self.residual.iter().map(|&s| self.slot_dims[s]).sum()
    }

    pub fn slot_index(&self, name: &str) -> Option<usize> {
        self.slot_names.iter().position(|n| n == name)
    }

    /// Schedule values for iterations `0..kmax`, one vector per schedule.
    pub fn schedule_table(&self, kmax: usize) -> Result<Vec<Vec<f64>>, IrError> {
        self.schedule_names
            .iter()
            .map(|n| {
                self.family.algorithm.schedules[n]
                    .values(kmax)
                    .ok_or_else(|| IrError::ScheduleTooShort { name: n.clone(), k: kmax })
            })
            .collect()
    }

    /// Matrix of step `s` at iteration `k`, given a schedule table.
    pub fn step_matrix(&self, s: usize, k: usize, table: &[Vec<f64>]) -> DenseMatrix {
        let st = &self.steps[s];
        let mut out = DenseMatrix::zeros(st.out_dim(), st.in_dim());
        for (m, scale, sched) in &st.map {
            let c = scale * sched.map_or(1.0, |i| table[i][k]);
            if c != 0.0 {
                out.add_scaled(m, c);
            }
        }
        out
    }

    /// Splits a flat state vector into per-slot vectors.
    pub fn split_state(&self, flat: &[f64]) -> Vec<Vec<f64>> {
        self.slot_offsets
            .iter()
            .zip(&self.slot_dims)
            .map(|(&o, &d)| flat[o..o + d].to_vec())
            .collect()
    }

    /// Overwrites tied slots with their sources.
    pub fn apply_ties(&self, state: &mut [Vec<f64>]) {
        for (slot, src) in self.ties.iter().enumerate() {
            if let Some(src) = src {
                state[slot] = state[*src].clone();
            }
        }
    }

    /// Exact simulation of `K` iterations from `(x, s0)`; `s0` is flat, ties are applied.
    pub fn simulate(&self, x: &[f64], s0: &[f64], k_max: usize) -> Result<Trajectory, IrError> {
        if x.len() != self.param_dim() || s0.len() != self.state_dim() {
            return invalid("simulate: x or s0 has the wrong length");
        }
        let table = self.schedule_table(k_max)?;
        let mut init = self.split_state(s0);
        self.apply_ties(&mut init);
        let mut states = vec![init];
        for k in 0..k_max {
            let mut next: Vec<Option<Vec<f64>>> = vec![None; self.slot_names.len()];
            for (si, st) in self.steps.iter().enumerate() {
                let mut y = Vec::with_capacity(st.in_dim());
                for r in &st.inputs {
                    match *r {
                        InputRef::Param => y.extend_from_slice(x),
                        InputRef::Init { slot } => y.extend_from_slice(&states[0][slot]),
                        InputRef::Slot { slot, lag: 0 } => y.extend_from_slice(next[slot].as_ref().unwrap()),
                        InputRef::Slot { slot, lag } => {
                            let j = (k + 1).saturating_sub(lag);
                            y.extend_from_slice(&states[j][slot]);
                        }
                    }
                }
                let m = self.step_matrix(si, k, &table);
                let mut v = m.matvec(&y);
                for (vi, o) in v.iter_mut().zip(&st.offset) {
                    *vi += o;
                }
                if let CompiledKind::Pwa(kind) = &st.kind {
                    for (i, vi) in v.iter_mut().enumerate() {
                        *vi = kind.apply(i, *vi);
                    }
                }
                next[st.output] = Some(v);
            }
            states.push(next.into_iter().map(Option::unwrap).collect());
        }
        Ok(Trajectory { states })
    }

    /// `||s^k - s^{k-1}||_inf` over the residual slots.
    pub fn residual_inf(&self, traj: &Trajectory, k: usize) -> f64 {
        assert!(k >= 1 && k < traj.len(), "residual index out of range");
        self.residual
            .iter()
            .flat_map(|&s| traj.states[k][s].iter().zip(&traj.states[k - 1][s]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max)
    }

    /// Bounds of the initial state, with ties already intersected.
    pub fn init_bounds(&self) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut lo = self.split_state(&self.family.init.lower);
        let mut hi = self.split_state(&self.family.init.upper);
        for (slot, src) in self.ties.iter().enumerate() {
            if let Some(src) = *src {
                for i in 0..self.slot_dims[slot] {
                    let l = lo[slot][i].max(lo[src][i]);
                    let h = hi[slot][i].min(hi[src][i]);
                    lo[src][i] = l;
                    hi[src][i] = h;
                }
                lo[slot] = lo[src].clone();
                hi[slot] = hi[src].clone();
            }
        }
        (lo, hi)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn gradient_1d() -> ProblemFamily {
        // s+ = s - 0.5 (s + x): gradient step on 0.5 s^2 + x s with eta 0.5.
        ProblemFamily {
            name: "grad1d".into(),
            params: ParamSet { lower: vec![-1.0], upper: vec![1.0], rows: vec![] },
            init: InitSet { kind: InitKind::Singleton, lower: vec![0.0], upper: vec![0.0], ties: BTreeMap::new() },
            algorithm: AlgorithmIr {
                name: "gd".into(),
                layout: StateLayout { slots: vec![SlotDef { name: "s".into(), dim: 1 }], history: BTreeMap::new() },
                steps: vec![Step {
                    name: "grad".into(),
                    inputs: vec![Source::Slot { name: "s".into(), lag: 1 }, Source::Param],
                    output: "s".into(),
                    kind: StepKind::AffineExplicit {
                        b: LinearMap::fixed(DenseMatrix::from_rows(&[vec![0.5, -0.5]]).unwrap()),
                    },
                    offset: None,
                }],
                schedules: BTreeMap::new(),
                residual: vec!["s".into()],
            },
            fixed_point_box: None,
            metadata: BTreeMap::new(),
        }
    }

    #[test]
    fn gradient_residual_closed_form() {
        let c = validate(&gradient_1d()).unwrap();
        let t = c.simulate(&[1.0], &[0.0], 10).unwrap();
        for k in 1..=10 {
            assert!((c.residual_inf(&t, k) - 0.5f64.powi(k as i32)).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_double_write_and_forward_reads() {
        let mut f = gradient_1d();
        let st = f.algorithm.steps[0].clone();
        f.algorithm.steps.push(st);
        assert!(validate(&f).is_err());

        let mut f = gradient_1d();
        f.algorithm.steps[0].inputs[0] = Source::Slot { name: "s".into(), lag: 0 };
        assert!(validate(&f).is_err());

        let mut f = gradient_1d();
        f.algorithm.steps[0].inputs[0] = Source::Slot { name: "s".into(), lag: 2 };
        assert!(validate(&f).is_err());
        f.algorithm.layout.history.insert("s".into(), 2);
        assert!(validate(&f).is_ok());
    }

    #[test]
    fn rejects_shape_errors_and_bad_sets() {
        let mut f = gradient_1d();
        f.algorithm.steps[0].inputs.pop();
        assert!(validate(&f).is_err());

        let mut f = gradient_1d();
        f.params.lower[0] = 2.0;
        assert!(validate(&f).is_err());

        let mut f = gradient_1d();
        f.init.upper[0] = 1.0;
        assert!(validate(&f).is_err());
    }

    #[test]
    fn implicit_step_is_explicitized() {
        let mut f = gradient_1d();
        f.algorithm.steps[0].kind = StepKind::AffineImplicit {
            m: DenseMatrix::from_rows(&[vec![2.0]]).unwrap(),
            b: DenseMatrix::from_rows(&[vec![1.0, -1.0]]).unwrap(),
        };
        let c = validate(&f).unwrap();
        let t = c.simulate(&[1.0], &[0.0], 3).unwrap();
        assert!((t.states[1][0][0] + 0.5).abs() < 1e-15);

        f.algorithm.steps[0].kind = StepKind::AffineImplicit {
            m: DenseMatrix::from_rows(&[vec![0.0]]).unwrap(),
            b: DenseMatrix::from_rows(&[vec![1.0, -1.0]]).unwrap(),
        };
        assert!(matches!(validate(&f), Err(IrError::Linalg { .. })));
    }

    #[test]
    fn fista_schedule_starts_at_zero_and_increases() {
        let v = Schedule::FistaMomentum.values(6).unwrap();
        assert_eq!(v[0], 0.0);
        assert!(v.windows(2).all(|w| w[1] > w[0]));
        let beta1 = (1.0 + 5f64.sqrt()) / 2.0;
        let beta2 = (1.0 + (1.0 + 4.0 * beta1 * beta1).sqrt()) / 2.0;
        assert!((v[1] - (beta1 - 1.0) / beta2).abs() < 1e-15);
    }

    #[test]
    fn family_json_round_trip() {
        let f = gradient_1d();
        let s = serde_json::to_string_pretty(&f).unwrap();
        let back: ProblemFamily = serde_json::from_str(&s).unwrap();
        assert_eq!(back, f);
    }
}
