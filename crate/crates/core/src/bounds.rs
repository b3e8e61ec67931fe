//! Componentwise bounds on iterates: interval propagation, operator-theory bounds,
//! combination and post-processing with certified residuals.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, LinalgError};
use crate::model_ir::{CompiledKind, Compiled, InputRef};

/// Bounds closer than this are treated as equal when intersecting.
pub const CROSS_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundError {
    #[error("bounds crossed at iteration {k}, slot {slot}, component {i}: [{lo}, {hi}]")]
    Crossed { k: usize, slot: String, i: usize, lo: f64, hi: f64 },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("bounds for iteration {0} are not available")]
    Missing(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Init,
    Interval,
    Theory,
    Obbt,
    PostProcess,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Init => "init",
            Provenance::Interval => "interval",
            Provenance::Theory => "theory",
            Provenance::Obbt => "obbt",
            Provenance::PostProcess => "postprocess",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxBounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub lo_src: Vec<Provenance>,
    pub hi_src: Vec<Provenance>,
}

impl BoxBounds {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, src: Provenance) -> Self {
        let n = lo.len();
        Self { lo, hi, lo_src: vec![src; n], hi_src: vec![src; n] }
    }

    pub fn len(&self) -> usize {
        self.lo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lo.is_empty()
    }

    /// Intersects component `i` with `[lo, hi]`. Returns `(lower_tightened, upper_tightened)`.
    pub fn tighten(&mut self, i: usize, lo: f64, hi: f64, src: Provenance) -> (bool, bool) {
        let mut changed = (false, false);
        if lo > self.lo[i] {
            self.lo[i] = lo;
            self.lo_src[i] = src;
            changed.0 = true;
        }
        if hi < self.hi[i] {
            self.hi[i] = hi;
            self.hi_src[i] = src;
            changed.1 = true;
        }
        changed
    }

    /// Resolves near-crossings and reports genuine ones as `(component, lo, hi)`.
    pub(crate) fn settle(&mut self) -> Result<(), (usize, f64, f64)> {
        for i in 0..self.lo.len() {
            let (l, h) = (self.lo[i], self.hi[i]);
            if l > h {
                if l - h > CROSS_TOL * (1.0 + l.abs().max(h.abs())) {
                    return Err((i, l, h));
                }
                let mid = 0.5 * (l + h);
                self.lo[i] = mid;
                self.hi[i] = mid;
            }
        }
        Ok(())
    }
}

/// Bounds for `x`, every slot of `s^0..s^K`, and the arguments of piecewise-affine steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterBounds {
    pub x: BoxBounds,
    /// `states[k][slot]`.
    pub states: Vec<Vec<BoxBounds>>,
    /// `args[k][step]`: argument bounds of a piecewise-affine step when computing `s^{k+1}`.
    pub args: Vec<Vec<Option<BoxBounds>>>,
}

impl IterBounds {
    pub fn initial(c: &Compiled) -> Self {
        let (lo, hi) = c.init_bounds();
        let states = vec![lo.into_iter().zip(hi).map(|(l, h)| BoxBounds::new(l, h, Provenance::Init)).collect()];
        let p = &c.family.params;
        Self { x: BoxBounds::new(p.lower.clone(), p.upper.clone(), Provenance::Init), states, args: Vec::new() }
    }

    /// Highest iteration with bounds.
    pub fn k(&self) -> usize {
        self.states.len() - 1
    }

    /// Bounds of iteration `j` (negative indices clamp to 0) for `slot`.
    pub fn slot_at(&self, j: isize, slot: usize) -> &BoxBounds {
        &self.states[j.max(0) as usize][slot]
    }

    /// Concatenated input box for step `s` at iteration `k` (computing `s^{k+1}`).
    pub fn input_box(&self, c: &Compiled, s: usize, k: usize) -> (Vec<f64>, Vec<f64>) {
        let mut lo = Vec::new();
        let mut hi = Vec::new();
        for r in &c.steps[s].inputs {
            let b = match *r {
                InputRef::Param => &self.x,
                InputRef::Init { slot } => &self.states[0][slot],
                InputRef::Slot { slot, lag } => self.slot_at(k as isize + 1 - lag as isize, slot),
            };
            lo.extend_from_slice(&b.lo);
            hi.extend_from_slice(&b.hi);
        }
        (lo, hi)
    }

    fn check(&mut self, c: &Compiled, k: usize) -> Result<(), BoundError> {
        for (s, b) in self.states[k].iter_mut().enumerate() {
            b.settle().map_err(|(i, lo, hi)| BoundError::Crossed { k, slot: c.slot_names[s].clone(), i, lo, hi })?;
        }
        Ok(())
    }

    /// Residual-slot bounds at iteration `k` as flat vectors.
    pub fn residual_box(&self, c: &Compiled, k: usize) -> (Vec<f64>, Vec<f64>) {
        let mut lo = Vec::new();
        let mut hi = Vec::new();
        for &s in &c.residual {
            lo.extend_from_slice(&self.states[k][s].lo);
            hi.extend_from_slice(&self.states[k][s].hi);
        }
        (lo, hi)
    }

    /// Whether `state` (one vector per slot) lies within the bounds of iteration `k`.
    pub fn contains(&self, k: usize, state: &[Vec<f64>], tol: f64) -> bool {
        self.states[k].iter().zip(state).all(|(b, v)| {
            v.iter().enumerate().all(|(i, &x)| x >= b.lo[i] - tol && x <= b.hi[i] + tol)
        })
    }
}

/// Extends (and tightens) bounds through iteration `k_to` by interval arithmetic.
pub fn propagate_interval(c: &Compiled, bounds: &mut IterBounds, k_to: usize, table: &[Vec<f64>]) -> Result<(), BoundError> {
    for k in 0..k_to {
        if bounds.states.len() <= k + 1 {
            let fresh = c
                .slot_dims
                .iter()
                .map(|&d| BoxBounds::new(vec![f64::NEG_INFINITY; d], vec![f64::INFINITY; d], Provenance::Interval))
                .collect();
            bounds.states.push(fresh);
        }
        if bounds.args.len() <= k {
            bounds.args.push(vec![None; c.steps.len()]);
        }
        for (s, st) in c.steps.iter().enumerate() {
            let (lo, hi) = bounds.input_box(c, s, k);
            let m = c.step_matrix(s, k, table);
            let (mut l, mut h) = linalg::interval_affine(&m, &lo, &hi)?;
            for i in 0..l.len() {
                l[i] += st.offset[i];
                h[i] += st.offset[i];
            }
            let out = &mut bounds.states[k + 1][st.output];
            match &st.kind {
                CompiledKind::Affine => {
                    for i in 0..l.len() {
                        out.tighten(i, l[i], h[i], Provenance::Interval);
                    }
                }
                CompiledKind::Pwa(kind) => {
                    let args = bounds.args[k][s].get_or_insert_with(|| {
                        let n = l.len();
                        BoxBounds::new(vec![f64::NEG_INFINITY; n], vec![f64::INFINITY; n], Provenance::Interval)
                    });
                    for i in 0..l.len() {
                        args.tighten(i, l[i], h[i], Provenance::Interval);
                    }
                    args.settle().map_err(|(i, lo, hi)| BoundError::Crossed {
                        k,
                        slot: format!("{}(argument)", st.name),
                        i,
                        lo,
                        hi,
                    })?;
                    let (al, ah) = (args.lo.clone(), args.hi.clone());
                    let out = &mut bounds.states[k + 1][st.output];
                    for i in 0..al.len() {
                        out.tighten(i, kind.apply(i, al[i]), kind.apply(i, ah[i]), Provenance::Interval);
                    }
                }
            }
            bounds.check(c, k + 1)?;
        }
    }
    Ok(())
}

/// Operator-theory residual bounds `||s^k - s^{k-1}|| <= alpha_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TheoryParams {
    /// `beta`-contractive: `alpha_k = 2 beta^{k-1} R`.
    Contractive { beta: f64, r: f64 },
    /// Averaged: `alpha_k = D R / k^q`.
    Averaged { d: f64, q: f64, r: f64 },
    /// User-supplied `alpha_1, alpha_2, ...`.
    User { alphas: Vec<f64> },
}

impl TheoryParams {
    /// `alpha_k` for `k >= 1`; `None` when no value is available.
    pub fn alpha(&self, k: usize) -> Option<f64> {
        assert!(k >= 1, "alpha is defined for k >= 1");
        match self {
            TheoryParams::Contractive { beta, r } => Some(2.0 * beta.powi(k as i32 - 1) * r),
            TheoryParams::Averaged { d, q, r } => Some(d * r / (k as f64).powf(*q)),
            TheoryParams::User { alphas } => alphas.get(k - 1).copied(),
        }
    }

    pub fn alpha_sequence(&self, kmax: usize) -> Vec<Option<f64>> {
        (1..=kmax).map(|k| self.alpha(k)).collect()
    }

    /// Returns a copy with the radius replaced; user sequences are unchanged.
    pub fn with_radius(&self, radius: f64) -> Self {
        match self.clone() {
            TheoryParams::Contractive { beta, .. } => TheoryParams::Contractive { beta, r: radius },
            TheoryParams::Averaged { d, q, .. } => TheoryParams::Averaged { d, q, r: radius },
            u => u,
        }
    }
}

/// Theory bounds on the residual slots at iteration `k`, from the bounds at `k - 1`.
pub fn theory_bounds(c: &Compiled, bounds: &IterBounds, k: usize, alpha: f64) -> Vec<(usize, Vec<f64>, Vec<f64>)> {
    c.residual
        .iter()
        .map(|&s| {
            let prev = &bounds.states[k - 1][s];
            (
                s,
                prev.lo.iter().map(|l| l - alpha).collect(),
                prev.hi.iter().map(|h| h + alpha).collect(),
            )
        })
        .collect()
}

/// Intersects theory bounds into iteration `k`; returns the fraction of residual components
/// where the theory bound was strictly tighter on at least one side.
pub fn combine(
    c: &Compiled,
    bounds: &mut IterBounds,
    k: usize,
    theory: &[(usize, Vec<f64>, Vec<f64>)],
) -> Result<f64, BoundError> {
    let mut tighter = 0usize;
    let mut total = 0usize;
    for (s, lo, hi) in theory {
        let b = &mut bounds.states[k][*s];
        for i in 0..lo.len() {
            let (a, bb) = b.tighten(i, lo[i], hi[i], Provenance::Theory);
            total += 1;
            if a || bb {
                tighter += 1;
            }
        }
    }
    bounds.check(c, k)?;
    Ok(if total == 0 { 0.0 } else { tighter as f64 / total as f64 })
}

/// Tightens residual slots at iteration `k` with certified residual upper bounds
/// `deltas[j-1] >= ||s^j - s^{j-1}||_inf` for `j = 1..=k`.
pub fn postprocess_delta(c: &Compiled, bounds: &mut IterBounds, k: usize, deltas: &[f64]) -> Result<(), BoundError> {
    if bounds.states.len() <= k || deltas.len() < k {
        return Err(BoundError::Missing(k));
    }
    let total: f64 = deltas[..k].iter().sum();
    let last = deltas[k - 1];
    for &s in &c.residual {
        let (first, prev) = (bounds.states[0][s].clone(), bounds.states[k - 1][s].clone());
        let b = &mut bounds.states[k][s];
        for i in 0..b.len() {
            b.tighten(i, first.lo[i] - total, first.hi[i] + total, Provenance::PostProcess);
            b.tighten(i, prev.lo[i] - last, prev.hi[i] + last, Provenance::PostProcess);
        }
    }
    bounds.check(c, k)
}
