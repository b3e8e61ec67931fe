//! MILP encodings of the verification problem, the radius problem and warm starts.

use fomcert_milp::{LinExpr, MilpModel, ModelError, ObjSense, Sense, VarId};
use thiserror::Error;

use crate::bounds::IterBounds;
use crate::cutgen::{self, Classification, HullKind, HullQuery};
use crate::linalg;
use crate::model_ir::{Compiled, CompiledKind, InputRef, IrError, PwaKind};

#[derive(Debug, Error)]
pub enum EncodeError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Ir(#[from] IrError),
    #[error("bounds for iteration {0} are missing")]
    MissingBounds(usize),
    #[error("{0}")]
    Unsupported(String),
}

#[derive(Debug, Clone)]
pub struct EncodeOptions {
    /// Add the index-free hull rows of every piecewise-affine component.
    pub base_hull_rows: bool,
}

impl Default for EncodeOptions {
    fn default() -> Self {
        Self { base_hull_rows: true }
    }
}

/// A binary that pruning may have fixed to a constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bin {
    Var(VarId),
    Fixed(f64),
}

impl Bin {
    fn expr(self) -> LinExpr {
        match self {
            Bin::Var(v) => LinExpr::var(v),
            Bin::Fixed(c) => LinExpr::constant(c),
        }
    }

    /// `1 - b`.
    fn complement(self) -> LinExpr {
        let mut e = LinExpr::constant(1.0);
        e.add_expr(&self.expr(), -1.0);
        e
    }

    pub fn var(self) -> Option<VarId> {
        match self {
            Bin::Var(v) => Some(v),
            Bin::Fixed(_) => None,
        }
    }
}

/// One scalar piecewise-affine relation `w = phi(a . y + offset)` in a model.
#[derive(Debug, Clone)]
pub struct PwaComponent {
    pub k: usize,
    pub step: usize,
    pub row: usize,
    pub inputs: Vec<VarId>,
    pub a: Vec<f64>,
    pub offset: f64,
    pub kind: HullKind,
    pub output: VarId,
    pub omega: Bin,
    pub zeta: Bin,
    pub m_lo: f64,
    pub m_hi: f64,
}

impl PwaComponent {
    /// Hull query over the current variable bounds of the inputs.
    pub fn query(&self, model: &MilpModel) -> HullQuery {
        HullQuery {
            a: self.a.clone(),
            offset: self.offset,
            y_lo: self.inputs.iter().map(|&v| model.var(v).lb).collect(),
            y_hi: self.inputs.iter().map(|&v| model.var(v).ub).collect(),
            kind: self.kind,
        }
    }

    pub fn arg_expr(&self) -> LinExpr {
        let mut e = LinExpr::constant(self.offset);
        for (&v, &a) in self.inputs.iter().zip(&self.a) {
            e.add_term(v, a);
        }
        e
    }
}

#[derive(Debug, Clone)]
pub struct ObjectiveVars {
    pub tp: Vec<VarId>,
    pub tm: Vec<VarId>,
    pub sign: Vec<Bin>,
    pub gamma: Vec<Bin>,
    pub delta: VarId,
}

/// Where every quantity of the encoded problem lives in the model.
#[derive(Debug, Clone)]
pub struct VarMap {
    pub x: Vec<VarId>,
    /// `states[k][slot][i]`.
    pub states: Vec<Vec<Vec<VarId>>>,
    pub pwa: Vec<PwaComponent>,
    /// `(k, step)` -> range of indices into `pwa`.
    pub pwa_index: Vec<Vec<Option<std::ops::Range<usize>>>>,
    pub objective: Option<ObjectiveVars>,
}

impl VarMap {
    /// Variables of the residual slots at iteration `k`, flattened.
    pub fn residual_vars(&self, c: &Compiled, k: usize) -> Vec<VarId> {
        c.residual.iter().flat_map(|&s| self.states[k][s].iter().copied()).collect()
    }
}

pub(crate) fn hull_kind(kind: &PwaKind, i: usize) -> HullKind {
    match kind {
        PwaKind::SoftThreshold { lambda } => HullKind::SoftThreshold { lambda: *lambda },
        PwaKind::Relu => HullKind::Relu,
        PwaKind::SatLin { lower, upper } => HullKind::SatLin { b: lower[i], c: upper[i] },
    }
}

/// Tight bounds for a piecewise-affine argument and its output.
pub fn bigm_constants(a: &[f64], offset: f64, y_lo: &[f64], y_hi: &[f64]) -> (f64, f64) {
    let (mut lo, mut hi) = (offset, offset);
    for ((&ai, &l), &h) in a.iter().zip(y_lo).zip(y_hi) {
        if ai >= 0.0 {
            lo += ai * l;
            hi += ai * h;
        } else {
            lo += ai * h;
            hi += ai * l;
        }
    }
    (lo, hi)
}

fn add(model: &mut MilpModel, name: String, lhs: LinExpr, sense: Sense, rhs: LinExpr) -> Result<(), ModelError> {
    let mut e = lhs;
    e.add_expr(&rhs, -1.0);
    model.add_constr(name, &e, sense, 0.0).map(|_| ())
}

/// Adds the big-M system of one component (arguments in `[m_lo, m_hi]`).
/// Degenerate ranges become equalities and never-active binaries are fixed.
#[allow(clippy::too_many_arguments)]
pub fn encode_pwa(
    model: &mut MilpModel,
    label: &str,
    t: &LinExpr,
    w: VarId,
    kind: HullKind,
    m_lo: f64,
    m_hi: f64,
    relaxed: bool,
) -> Result<(Bin, Bin), ModelError> {
    let wv = || LinExpr::var(w);
    let tt = || t.clone();
    let lin = |base: LinExpr, terms: &[(f64, &LinExpr)]| {
        let mut e = base;
        for (c, x) in terms {
            e.add_expr(x, *c);
        }
        e
    };
    let k = |c: f64| LinExpr::constant(c);
    model.add_constr(format!("{label}_arg_lo"), t, Sense::Ge, m_lo)?;
    model.add_constr(format!("{label}_arg_hi"), t, Sense::Le, m_hi)?;

    let q = HullQuery { a: vec![1.0], offset: 0.0, y_lo: vec![m_lo], y_hi: vec![m_hi], kind };
    if let Classification::Fixed { slope, shift } = cutgen::classify(&q) {
        let rhs = lin(k(shift), &[(slope, t)]);
        add(model, format!("{label}_eq"), wv(), Sense::Eq, rhs)?;
        return Ok((Bin::Fixed(0.0), Bin::Fixed(0.0)));
    }
    let new_bin = |model: &mut MilpModel, name: String, active: bool| -> Result<Bin, ModelError> {
        if !active {
            return Ok(Bin::Fixed(0.0));
        }
        let v = if relaxed { model.add_continuous(name, 0.0, 1.0)? } else { model.add_binary(name)? };
        Ok(Bin::Var(v))
    };
    let (om, ze) = match kind {
        HullKind::SoftThreshold { lambda: l } => {
            let om = new_bin(model, format!("bin_omega{label}"), m_hi > l)?;
            let ze = new_bin(model, format!("bin_zeta{label}"), m_lo < -l)?;
            let (o, z, oc, zc) = (om.expr(), ze.expr(), om.complement(), ze.complement());
            add(model, format!("{label}_a"), wv(), Sense::Ge, lin(tt(), &[(1.0, &k(-l))]))?;
            add(model, format!("{label}_b"), wv(), Sense::Le, lin(tt(), &[(1.0, &k(l))]))?;
            add(model, format!("{label}_c"), wv(), Sense::Ge, lin(tt(), &[(1.0, &k(l)), (-2.0 * l, &zc)]))?;
            add(model, format!("{label}_d"), wv(), Sense::Le, lin(tt(), &[(1.0, &k(-l)), (2.0 * l, &oc)]))?;
            add(model, format!("{label}_e"), wv(), Sense::Ge, z.scaled(m_lo + l))?;
            add(model, format!("{label}_f"), wv(), Sense::Le, o.scaled(m_hi - l))?;
            add(model, format!("{label}_g"), tt(), Sense::Ge, lin(k(l), &[(m_lo - l, &oc)]))?;
            add(model, format!("{label}_h"), tt(), Sense::Le, lin(k(l), &[(m_hi - l, &o)]))?;
            add(model, format!("{label}_i"), tt(), Sense::Ge, lin(k(-l), &[(m_lo + l, &z)]))?;
            add(model, format!("{label}_j"), tt(), Sense::Le, lin(k(-l), &[(m_hi + l, &zc)]))?;
            if om.var().is_some() && ze.var().is_some() {
                add(model, format!("{label}_k"), lin(o, &[(1.0, &z)]), Sense::Le, k(1.0))?;
            }
            (om, ze)
        }
        HullKind::Relu => {
            let om = new_bin(model, format!("bin_omega{label}"), true)?;
            let (o, oc) = (om.expr(), om.complement());
            add(model, format!("{label}_a"), wv(), Sense::Ge, k(0.0))?;
            add(model, format!("{label}_b"), wv(), Sense::Ge, tt())?;
            add(model, format!("{label}_c"), wv(), Sense::Le, lin(tt(), &[(-m_lo, &oc)]))?;
            add(model, format!("{label}_d"), wv(), Sense::Le, o.scaled(m_hi))?;
            (om, Bin::Fixed(0.0))
        }
        HullKind::SatLin { b, c } => {
            let om = new_bin(model, format!("bin_omega{label}"), m_hi > c)?;
            let ze = new_bin(model, format!("bin_zeta{label}"), m_lo < b)?;
            let (o, z, oc, zc) = (om.expr(), ze.expr(), om.complement(), ze.complement());
            let span = m_hi - m_lo;
            add(model, format!("{label}_a"), wv(), Sense::Ge, k(b))?;
            add(model, format!("{label}_b"), wv(), Sense::Le, k(c))?;
            add(model, format!("{label}_c"), wv(), Sense::Ge, lin(k(c), &[(-(c - b), &oc)]))?;
            add(model, format!("{label}_d"), wv(), Sense::Le, lin(k(b), &[(c - b, &zc)]))?;
            add(model, format!("{label}_e"), wv(), Sense::Ge, lin(tt(), &[(-span, &o)]))?;
            add(model, format!("{label}_f"), wv(), Sense::Le, lin(tt(), &[(span, &z)]))?;
            add(model, format!("{label}_g"), tt(), Sense::Ge, lin(k(c), &[(m_lo - c, &oc)]))?;
            add(model, format!("{label}_h"), tt(), Sense::Le, lin(k(c), &[(m_hi - c, &o)]))?;
            add(model, format!("{label}_i"), tt(), Sense::Ge, lin(k(b), &[(m_lo - b, &z)]))?;
            add(model, format!("{label}_j"), tt(), Sense::Le, lin(k(b), &[(m_hi - b, &zc)]))?;
            if om.var().is_some() && ze.var().is_some() {
                add(model, format!("{label}_k"), lin(o, &[(1.0, &z)]), Sense::Le, k(1.0))?;
            }
            (om, ze)
        }
    };
    Ok((om, ze))
}

/// Adds a hull row `coef_y . y + coef_w w <= rhs` for a component.
pub fn add_hull_row(model: &mut MilpModel, name: String, comp: &PwaComponent, cut: &cutgen::HullCut) -> Result<(), ModelError> {
    let mut e = LinExpr::term(comp.output, cut.coef_w);
    for (&v, &c) in comp.inputs.iter().zip(&cut.coef_y) {
        e.add_term(v, c);
    }
    model.add_constr(name, &e, Sense::Le, cut.rhs).map(|_| ())
}

fn slot_name(c: &Compiled, s: usize) -> &str {
    &c.slot_names[s]
}

/// Encodes iterations `1..=k_max` of the family with the given bounds. Without `objective`
/// the model has no objective (used for bound tightening).
pub fn encode_iterations(
    c: &Compiled,
    bounds: &IterBounds,
    k_max: usize,
    table: &[Vec<f64>],
    opts: &EncodeOptions,
    relaxed: bool,
) -> Result<(MilpModel, VarMap), EncodeError> {
    if bounds.states.len() <= k_max || bounds.args.len() < k_max {
        return Err(EncodeError::MissingBounds(k_max));
    }
    let mut model = MilpModel::new(format!("{}_K{k_max}", c.family.name));
    let x: Vec<VarId> = (0..c.param_dim())
        .map(|i| model.add_continuous(format!("x[{i}]"), bounds.x.lo[i], bounds.x.hi[i]))
        .collect::<Result<_, _>>()?;
    for (r, row) in c.family.params.rows.iter().enumerate() {
        let mut e = LinExpr::new();
        for (&v, &a) in x.iter().zip(&row.coefs) {
            e.add_term(v, a);
        }
        model.add_constr(format!("param_row_{r}"), &e, Sense::Le, row.rhs)?;
    }
    let mut states: Vec<Vec<Vec<VarId>>> = Vec::new();
    let make_slot = |model: &mut MilpModel, k: usize, s: usize| -> Result<Vec<VarId>, ModelError> {
        let b = &bounds.states[k][s];
        (0..c.slot_dims[s])
            .map(|i| model.add_continuous(format!("s[{k}][{}][{i}]", slot_name(c, s)), b.lo[i], b.hi[i]))
            .collect()
    };
    let mut s0 = Vec::new();
    for s in 0..c.slot_names.len() {
        s0.push(make_slot(&mut model, 0, s)?);
    }
    for (s, src) in c.ties.iter().enumerate() {
        if let Some(src) = *src {
            for i in 0..c.slot_dims[s] {
                let mut e = LinExpr::var(s0[s][i]);
                e.add_term(s0[src][i], -1.0);
                model.add_constr(format!("tie[{}][{i}]", slot_name(c, s)), &e, Sense::Eq, 0.0)?;
            }
        }
    }
    states.push(s0);

    let mut pwa = Vec::new();
    let mut pwa_index = Vec::new();
    for k in 0..k_max {
        let mut next: Vec<Option<Vec<VarId>>> = vec![None; c.slot_names.len()];
        let mut idx_row = vec![None; c.steps.len()];
        for (si, st) in c.steps.iter().enumerate() {
            let mut y = Vec::with_capacity(st.in_dim());
            for r in &st.inputs {
                match *r {
                    InputRef::Param => y.extend_from_slice(&x),
                    InputRef::Init { slot } => y.extend_from_slice(&states[0][slot]),
                    InputRef::Slot { slot, lag: 0 } => y.extend_from_slice(next[slot].as_ref().expect("validated")),
                    InputRef::Slot { slot, lag } => {
                        let j = (k + 1).saturating_sub(lag);
                        y.extend_from_slice(&states[j][slot]);
                    }
                }
            }
            let out = make_slot(&mut model, k + 1, st.output)?;
            let m = c.step_matrix(si, k, table);
            match &st.kind {
                CompiledKind::Affine => {
                    for (i, &w) in out.iter().enumerate() {
                        let mut e = LinExpr::var(w);
                        for (&v, &a) in y.iter().zip(m.row(i)) {
                            e.add_term(v, -a);
                        }
                        model.add_constr(format!("aff[{}][{}][{i}]", k + 1, st.name), &e, Sense::Eq, st.offset[i])?;
                    }
                }
                CompiledKind::Pwa(kind) => {
                    let start = pwa.len();
                    let args = bounds.args[k][si].as_ref().ok_or(EncodeError::MissingBounds(k))?;
                    for (i, &w) in out.iter().enumerate() {
                        let a = m.row(i).to_vec();
                        let y_lo: Vec<f64> = y.iter().map(|&v| model.var(v).lb).collect();
                        let y_hi: Vec<f64> = y.iter().map(|&v| model.var(v).ub).collect();
                        let (ilo, ihi) = bigm_constants(&a, st.offset[i], &y_lo, &y_hi);
                        let (m_lo, m_hi) = (ilo.max(args.lo[i]), ihi.min(args.hi[i]));
                        let (m_lo, m_hi) = if m_lo > m_hi { (0.5 * (m_lo + m_hi), 0.5 * (m_lo + m_hi)) } else { (m_lo, m_hi) };
                        let hk = hull_kind(kind, i);
                        let mut comp = PwaComponent {
                            k: k + 1,
                            step: si,
                            row: i,
                            inputs: y.clone(),
                            a,
                            offset: st.offset[i],
                            kind: hk,
                            output: w,
                            omega: Bin::Fixed(0.0),
                            zeta: Bin::Fixed(0.0),
                            m_lo,
                            m_hi,
                        };
                        let label = format!("[{}][{}][{i}]", k + 1, st.name);
                        let (om, ze) = encode_pwa(&mut model, &label, &comp.arg_expr(), w, hk, m_lo, m_hi, relaxed)?;
                        comp.omega = om;
                        comp.zeta = ze;
                        if opts.base_hull_rows {
                            let q = comp.query(&model);
                            if cutgen::classify(&q) == Classification::General {
                                for (j, cut) in cutgen::base_inequalities(&q).iter().enumerate() {
                                    add_hull_row(&mut model, format!("hull{label}_{j}"), &comp, cut)?;
                                }
                            }
                        }
                        pwa.push(comp);
                    }
                    idx_row[si] = Some(start..pwa.len());
                }
            }
            next[st.output] = Some(out);
        }
        pwa_index.push(idx_row);
        states.push(next.into_iter().map(|v| v.expect("validated")).collect());
    }
    Ok((model, VarMap { x, states, pwa, pwa_index, objective: None }))
}

/// Adds `delta = ||s^K - s^{K-1}||_inf` over the residual slots and maximizes it.
pub fn encode_objective(c: &Compiled, model: &mut MilpModel, map: &mut VarMap, k: usize, relaxed: bool) -> Result<(), EncodeError> {
    if k == 0 || map.states.len() <= k {
        return Err(EncodeError::MissingBounds(k));
    }
    let cur = map.residual_vars(c, k);
    let prev = map.residual_vars(c, k - 1);
    let n = cur.len();
    let t_lo: Vec<f64> = (0..n).map(|i| model.var(cur[i]).lb - model.var(prev[i]).ub).collect();
    let t_hi: Vec<f64> = (0..n).map(|i| model.var(cur[i]).ub - model.var(prev[i]).lb).collect();
    let abs_hi: Vec<f64> = (0..n).map(|i| t_hi[i].max(-t_lo[i]).max(0.0)).collect();
    let abs_lo: Vec<f64> = (0..n).map(|i| t_lo[i].max(-t_hi[i]).max(0.0)).collect();
    let delta_hi = abs_hi.iter().copied().fold(0.0, f64::max);
    let delta_lo = abs_lo.iter().copied().fold(0.0, f64::max);
    let delta = model.add_continuous("delta", delta_lo, delta_hi)?;

    let bin = |model: &mut MilpModel, name: String| -> Result<VarId, ModelError> {
        if relaxed {
            model.add_continuous(name, 0.0, 1.0)
        } else {
            model.add_binary(name)
        }
    };
    let mut tp = Vec::new();
    let mut tm = Vec::new();
    let mut sign = Vec::new();
    let mut gamma = Vec::new();
    let candidates: Vec<bool> = (0..n).map(|i| abs_hi[i] >= delta_lo).collect();
    let n_cand = candidates.iter().filter(|&&b| b).count();
    for i in 0..n {
        let p = model.add_continuous(format!("tp[{i}]"), 0.0, t_hi[i].max(0.0))?;
        let m = model.add_continuous(format!("tm[{i}]"), 0.0, (-t_lo[i]).max(0.0))?;
        let mut e = LinExpr::var(cur[i]);
        e.add_term(prev[i], -1.0).add_term(p, -1.0).add_term(m, 1.0);
        model.add_constr(format!("tsplit[{i}]"), &e, Sense::Eq, 0.0)?;
        let s = if t_lo[i] >= 0.0 {
            Bin::Fixed(1.0)
        } else if t_hi[i] <= 0.0 {
            Bin::Fixed(0.0)
        } else {
            let w = bin(model, format!("bin_w[{i}]"))?;
            let mut e = LinExpr::var(p);
            e.add_term(w, -t_hi[i]);
            model.add_constr(format!("tp_on[{i}]"), &e, Sense::Le, 0.0)?;
            let mut e = LinExpr::var(m);
            e.add_term(w, -t_lo[i]);
            model.add_constr(format!("tm_on[{i}]"), &e, Sense::Le, -t_lo[i])?;
            Bin::Var(w)
        };
        let mut e = LinExpr::var(delta);
        e.add_term(p, -1.0).add_term(m, -1.0);
        model.add_constr(format!("delta_ge[{i}]"), &e, Sense::Ge, 0.0)?;
        let g = if !candidates[i] {
            Bin::Fixed(0.0)
        } else if n_cand == 1 {
            Bin::Fixed(1.0)
        } else {
            Bin::Var(bin(model, format!("bin_gamma[{i}]"))?)
        };
        // delta <= |t_i| + (delta_max - min|t_i|)(1 - gamma_i)
        let big = delta_hi - abs_lo[i];
        let mut e = LinExpr::var(delta);
        e.add_term(p, -1.0).add_term(m, -1.0);
        match g {
            Bin::Var(gv) => {
                e.add_term(gv, big);
                model.add_constr(format!("delta_le[{i}]"), &e, Sense::Le, big)?;
            }
            Bin::Fixed(v) if v == 1.0 => {
                model.add_constr(format!("delta_le[{i}]"), &e, Sense::Le, 0.0)?;
            }
            Bin::Fixed(_) => {}
        }
        tp.push(p);
        tm.push(m);
        sign.push(s);
        gamma.push(g);
    }
    let gsum: Vec<VarId> = gamma.iter().filter_map(|g| g.var()).collect();
    if !gsum.is_empty() {
        let mut e = LinExpr::new();
        for v in gsum {
            e.add_term(v, 1.0);
        }
        model.add_constr("gamma_one", &e, Sense::Eq, 1.0)?;
    }
    model.set_objective(&LinExpr::var(delta), ObjSense::Maximize)?;
    map.objective = Some(ObjectiveVars { tp, tm, sign, gamma, delta });
    Ok(())
}

/// The verification problem for `K`: iterations, objective, maximize `delta`.
pub fn encode_vp(
    c: &Compiled,
    bounds: &IterBounds,
    k: usize,
    table: &[Vec<f64>],
    opts: &EncodeOptions,
) -> Result<(MilpModel, VarMap), EncodeError> {
    let (mut model, mut map) = encode_iterations(c, bounds, k, table, opts, false)?;
    encode_objective(c, &mut model, &mut map, k, false)?;
    Ok((model, map))
}

/// Full assignment of the VP for `K` from a simulated trajectory, or `None` if it is infeasible.
pub fn warm_start_assignment(
    c: &Compiled,
    model: &MilpModel,
    map: &VarMap,
    x: &[f64],
    s0: &[f64],
    k: usize,
    tol: f64,
) -> Result<Option<Vec<f64>>, EncodeError> {
    let traj = c.simulate(x, s0, k)?;
    let mut v = vec![0.0; model.num_vars()];
    for (i, &id) in map.x.iter().enumerate() {
        v[id.0] = x[i];
    }
    for (j, st) in map.states.iter().enumerate() {
        for (s, ids) in st.iter().enumerate() {
            for (i, &id) in ids.iter().enumerate() {
                v[id.0] = traj.states[j][s][i];
            }
        }
    }
    for comp in &map.pwa {
        let t = comp.arg_expr().eval(&v);
        let (on, ze) = match comp.kind {
            HullKind::SoftThreshold { lambda } => (t > lambda, t < -lambda),
            HullKind::Relu => (t > 0.0, false),
            HullKind::SatLin { b, c } => (t > c, t < b),
        };
        if let Bin::Var(id) = comp.omega {
            v[id.0] = f64::from(u8::from(on));
        }
        if let Bin::Var(id) = comp.zeta {
            v[id.0] = f64::from(u8::from(ze));
        }
    }
    if let Some(obj) = &map.objective {
        let cur = map.residual_vars(c, k);
        let prev = map.residual_vars(c, k - 1);
        let ts: Vec<f64> = cur.iter().zip(&prev).map(|(a, b)| v[a.0] - v[b.0]).collect();
        let best = (0..ts.len())
            .filter(|&i| obj.gamma[i] != Bin::Fixed(0.0))
            .max_by(|&a, &b| ts[a].abs().total_cmp(&ts[b].abs()));
        for (i, &t) in ts.iter().enumerate() {
            v[obj.tp[i].0] = t.max(0.0);
            v[obj.tm[i].0] = (-t).max(0.0);
            if let Bin::Var(id) = obj.sign[i] {
                v[id.0] = f64::from(u8::from(t >= 0.0));
            }
            if let Bin::Var(id) = obj.gamma[i] {
                v[id.0] = f64::from(u8::from(Some(i) == best));
            }
        }
        v[obj.delta.0] = ts.iter().fold(0.0f64, |m, t| m.max(t.abs()));
    }
    match model.check_assignment(&v, tol) {
        None => Ok(Some(v)),
        Some(why) => {
            tracing::debug!(?why, "warm start rejected");
            Ok(None)
        }
    }
}

/// Radius problem: maximize `||s0 - s*||_1` over residual slots with `s* = T(s*, x)`.
pub fn encode_radius(c: &Compiled, opts: &EncodeOptions) -> Result<(MilpModel, VarMap), EncodeError> {
    let fp = c
        .family
        .fixed_point_box
        .as_ref()
        .ok_or_else(|| EncodeError::Unsupported("the radius problem needs a fixed-point box".into()))?;
    if c.steps.iter().any(|s| s.map.iter().any(|(_, _, sch)| sch.is_some())) {
        return Err(EncodeError::Unsupported("the radius problem needs an iteration-independent algorithm".into()));
    }
    let p = &c.family.params;
    let mut model = MilpModel::new(format!("{}_radius", c.family.name));
    let x: Vec<VarId> =
        (0..c.param_dim()).map(|i| model.add_continuous(format!("x[{i}]"), p.lower[i], p.upper[i])).collect::<Result<_, _>>()?;
    for (r, row) in p.rows.iter().enumerate() {
        let mut e = LinExpr::new();
        for (&v, &a) in x.iter().zip(&row.coefs) {
            e.add_term(v, a);
        }
        model.add_constr(format!("param_row_{r}"), &e, Sense::Le, row.rhs)?;
    }
    let (ilo, ihi) = c.init_bounds();
    let fp_lo = c.split_state(&fp.lower);
    let fp_hi = c.split_state(&fp.upper);
    let mut s0 = Vec::new();
    let mut star = Vec::new();
    for s in 0..c.slot_names.len() {
        let name = slot_name(c, s).to_string();
        s0.push(
            (0..c.slot_dims[s])
                .map(|i| model.add_continuous(format!("s[0][{name}][{i}]"), ilo[s][i], ihi[s][i]))
                .collect::<Result<Vec<_>, _>>()?,
        );
        star.push(
            (0..c.slot_dims[s])
                .map(|i| model.add_continuous(format!("sstar[{name}][{i}]"), fp_lo[s][i], fp_hi[s][i]))
                .collect::<Result<Vec<_>, _>>()?,
        );
    }
    for (s, src) in c.ties.iter().enumerate() {
        if let Some(src) = *src {
            for i in 0..c.slot_dims[s] {
                let mut e = LinExpr::var(s0[s][i]);
                e.add_term(s0[src][i], -1.0);
                model.add_constr(format!("tie[{}][{i}]", slot_name(c, s)), &e, Sense::Eq, 0.0)?;
            }
        }
    }
    let table: Vec<Vec<f64>> = Vec::new();
    let mut pwa = Vec::new();
    for (si, st) in c.steps.iter().enumerate() {
        let mut y = Vec::new();
        for r in &st.inputs {
            match *r {
                InputRef::Param => y.extend_from_slice(&x),
                InputRef::Init { slot } => y.extend_from_slice(&s0[slot]),
                InputRef::Slot { slot, .. } => y.extend_from_slice(&star[slot]),
            }
        }
        let m = c.step_matrix(si, 0, &table);
        let out = star[st.output].clone();
        match &st.kind {
            CompiledKind::Affine => {
                for (i, &w) in out.iter().enumerate() {
                    let mut e = LinExpr::var(w);
                    for (&v, &a) in y.iter().zip(m.row(i)) {
                        e.add_term(v, -a);
                    }
                    model.add_constr(format!("fp_aff[{}][{i}]", st.name), &e, Sense::Eq, st.offset[i])?;
                }
            }
            CompiledKind::Pwa(kind) => {
                for (i, &w) in out.iter().enumerate() {
                    let a = m.row(i).to_vec();
                    let y_lo: Vec<f64> = y.iter().map(|&v| model.var(v).lb).collect();
                    let y_hi: Vec<f64> = y.iter().map(|&v| model.var(v).ub).collect();
                    let (m_lo, m_hi) = bigm_constants(&a, st.offset[i], &y_lo, &y_hi);
                    let hk = hull_kind(kind, i);
                    let mut comp = PwaComponent {
                        k: 0,
                        step: si,
                        row: i,
                        inputs: y.clone(),
                        a,
                        offset: st.offset[i],
                        kind: hk,
                        output: w,
                        omega: Bin::Fixed(0.0),
                        zeta: Bin::Fixed(0.0),
                        m_lo,
                        m_hi,
                    };
                    let label = format!("[fp][{}][{i}]", st.name);
                    let (om, ze) = encode_pwa(&mut model, &label, &comp.arg_expr(), w, hk, m_lo, m_hi, false)?;
                    comp.omega = om;
                    comp.zeta = ze;
                    if opts.base_hull_rows && !comp.inputs.contains(&w) {
                        let q = comp.query(&model);
                        if cutgen::classify(&q) == Classification::General {
                            for (j, cut) in cutgen::base_inequalities(&q).iter().enumerate() {
                                add_hull_row(&mut model, format!("hull{label}_{j}"), &comp, cut)?;
                            }
                        }
                    }
                    pwa.push(comp);
                }
            }
        }
    }
    // |s0_i - s*_i| with a sign binary per residual component.
    let mut obj = LinExpr::new();
    for &s in &c.residual {
        for i in 0..c.slot_dims[s] {
            let (a, b) = (s0[s][i], star[s][i]);
            let lo = model.var(a).lb - model.var(b).ub;
            let hi = model.var(a).ub - model.var(b).lb;
            let name = format!("{}_{i}", slot_name(c, s));
            let dp = model.add_continuous(format!("dp[{name}]"), 0.0, hi.max(0.0))?;
            let dm = model.add_continuous(format!("dm[{name}]"), 0.0, (-lo).max(0.0))?;
            let mut e = LinExpr::var(a);
            e.add_term(b, -1.0).add_term(dp, -1.0).add_term(dm, 1.0);
            model.add_constr(format!("dsplit[{name}]"), &e, Sense::Eq, 0.0)?;
            if lo < 0.0 && hi > 0.0 {
                let w = model.add_binary(format!("bin_d[{name}]"))?;
                let mut e = LinExpr::var(dp);
                e.add_term(w, -hi);
                model.add_constr(format!("dp_on[{name}]"), &e, Sense::Le, 0.0)?;
                let mut e = LinExpr::var(dm);
                e.add_term(w, -lo);
                model.add_constr(format!("dm_on[{name}]"), &e, Sense::Le, -lo)?;
            }
            obj.add_term(dp, 1.0).add_term(dm, 1.0);
        }
    }
    model.set_objective(&obj, ObjSense::Maximize)?;
    let map = VarMap { x, states: vec![s0, star], pwa, pwa_index: Vec::new(), objective: None };
    Ok((model, map))
}

/// Simulated value check used by tests: evaluates the argument of a component at a point.
pub fn component_argument(comp: &PwaComponent, values: &[f64]) -> f64 {
    linalg::dot(&comp.a, &comp.inputs.iter().map(|v| values[v.0]).collect::<Vec<_>>()) + comp.offset
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::bounds::propagate_interval;
    use crate::linalg::DenseMatrix;
    use crate::model_ir::{self, *};
    use fomcert_milp::{Backend, HighsBackend, ReferenceBackend, SolveOptions};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;

    pub(crate) fn small_ista() -> ProblemFamily {
        let b = DenseMatrix::from_rows(&[vec![0.6, 0.1, 0.3, 0.0], vec![-0.2, 0.5, 0.0, 0.4]]).unwrap();
        ProblemFamily {
            name: "ista2".into(),
            params: ParamSet { lower: vec![-1.0, 0.5], upper: vec![1.0, 1.5], rows: vec![] },
            init: InitSet { kind: InitKind::Box, lower: vec![-0.2, -0.2], upper: vec![0.2, 0.2], ties: BTreeMap::new() },
            algorithm: AlgorithmIr {
                name: "ista".into(),
                layout: StateLayout { slots: vec![SlotDef { name: "s".into(), dim: 2 }], history: BTreeMap::new() },
                steps: vec![Step {
                    name: "prox".into(),
                    inputs: vec![Source::Slot { name: "s".into(), lag: 1 }, Source::Param],
                    output: "s".into(),
                    kind: StepKind::PiecewiseAffine { pwa: PwaKind::SoftThreshold { lambda: 0.1 }, a: LinearMap::fixed(b) },
                    offset: None,
                }],
                schedules: BTreeMap::new(),
                residual: vec!["s".into()],
            },
            fixed_point_box: None,
            metadata: BTreeMap::new(),
        }
    }

    fn single(kind: HullKind, lo: f64, hi: f64, t: f64) -> (MilpModel, VarId) {
        let mut m = MilpModel::new("one");
        let tv = m.add_continuous("t", t, t).unwrap();
        let w = m.add_continuous("w", -100.0, 100.0).unwrap();
        encode_pwa(&mut m, "[0]", &LinExpr::var(tv), w, kind, lo, hi, false).unwrap();
        (m, w)
    }

    #[test]
    fn bigm_pins_output_to_graph() {
        let kinds = [HullKind::SoftThreshold { lambda: 0.3 }, HullKind::Relu, HullKind::SatLin { b: -0.5, c: 0.7 }];
        let backend = ReferenceBackend::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for kind in kinds {
            for _ in 0..40 {
                let lo = rng.gen_range(-2.0..1.0);
                let hi = lo + rng.gen_range(0.0..2.5);
                let t = rng.gen_range(lo..=hi);
                let (mut m, w) = single(kind, lo, hi, t);
                for sense in [ObjSense::Minimize, ObjSense::Maximize] {
                    m.set_objective(&LinExpr::var(w), sense).unwrap();
                    let r = backend.solve(&m, &SolveOptions::default().with_gap(0.0));
                    let got = r.objective.expect("feasible");
                    assert!((got - kind.apply(t)).abs() < 1e-7, "{kind:?} t={t} got {got}");
                }
            }
        }
    }

    #[test]
    fn gradient_delta_is_exact() {
        let c = validate(&model_ir::tests::gradient_1d()).unwrap();
        let table = c.schedule_table(6).unwrap();
        let mut b = IterBounds::initial(&c);
        propagate_interval(&c, &mut b, 6, &table).unwrap();
        for k in 1..=6 {
            let (m, _) = encode_vp(&c, &b, k, &table, &EncodeOptions::default()).unwrap();
            let r = HighsBackend::default().solve(&m, &SolveOptions::default().with_gap(1e-9));
            assert!((r.objective.unwrap() - 0.5f64.powi(k as i32)).abs() < 1e-7);
        }
    }

    #[test]
    fn optimum_is_a_real_trajectory_and_dominates_samples() {
        let c = validate(&small_ista()).unwrap();
        let k = 4;
        let table = c.schedule_table(k).unwrap();
        let mut b = IterBounds::initial(&c);
        propagate_interval(&c, &mut b, k, &table).unwrap();
        let (m, map) = encode_vp(&c, &b, k, &table, &EncodeOptions::default()).unwrap();
        let r = HighsBackend::default().solve(&m, &SolveOptions::default().with_gap(1e-9));
        let v = r.values.unwrap();
        let x: Vec<f64> = map.x.iter().map(|id| v[id.0]).collect();
        let s0: Vec<f64> = map.states[0].iter().flatten().map(|id| v[id.0]).collect();
        let traj = c.simulate(&x, &s0, k).unwrap();
        assert!((c.residual_inf(&traj, k) - r.objective.unwrap()).abs() < 1e-6);

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..300 {
            let x = vec![rng.gen_range(-1.0..=1.0), rng.gen_range(0.5..=1.5)];
            let s0 = vec![rng.gen_range(-0.2..=0.2), rng.gen_range(-0.2..=0.2)];
            let t = c.simulate(&x, &s0, k).unwrap();
            assert!(c.residual_inf(&t, k) <= r.objective.unwrap() + 1e-7);
            let ws = warm_start_assignment(&c, &m, &map, &x, &s0, k, 1e-6).unwrap();
            assert!(ws.is_some(), "simulated trajectory must satisfy the encoding");
        }
    }

    #[test]
    fn relaxed_bound_dominates() {
        let c = validate(&small_ista()).unwrap();
        let k = 3;
        let table = c.schedule_table(k).unwrap();
        let mut b = IterBounds::initial(&c);
        propagate_interval(&c, &mut b, k, &table).unwrap();
        let (mut m, mut map) = encode_iterations(&c, &b, k, &table, &EncodeOptions::default(), true).unwrap();
        encode_objective(&c, &mut m, &mut map, k, true).unwrap();
        let (mip, _) = encode_vp(&c, &b, k, &table, &EncodeOptions::default()).unwrap();
        assert_eq!(m.num_binaries(), 0);
        let h = HighsBackend::default();
        let lp = h.solve(&m, &SolveOptions::lp()).objective.unwrap();
        let ip = h.solve(&mip, &SolveOptions::default().with_gap(1e-9)).objective.unwrap();
        assert!(lp >= ip - 1e-7);
    }

    #[test]
    fn radius_needs_fixed_point_box() {
        let c = validate(&small_ista()).unwrap();
        assert!(matches!(encode_radius(&c, &EncodeOptions::default()), Err(EncodeError::Unsupported(_))));
    }
}
