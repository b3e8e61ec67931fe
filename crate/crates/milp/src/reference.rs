//! Dense bounded-variable primal simplex and best-first branch-and-bound.
//!
//! Meant for small models in tests and as a cross-check of the HiGHS backend.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use crate::model::{MilpModel, ObjSense, Sense, VarKind};
use crate::solve::{gap_of, Backend, SolveOptions, SolveResult, SolveStatus};

const PIVOT_TOL: f64 = 1e-9;
const OPT_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-7;
const INT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, Default)]
pub struct ReferenceBackend;

#[derive(Debug, Clone, Copy, PartialEq)]
enum ColState {
    Basic,
    Lower,
    Upper,
}

enum LpOutcome {
    Optimal { x: Vec<f64>, obj: f64 },
    Infeasible,
    Unbounded,
    TimeLimit,
}

/// min c.x  s.t.  A x = b (b >= 0),  0 <= x <= u, solved from an all-artificial basis.
struct Tableau {
    m: usize,
    n: usize,
    t: Vec<f64>,
    xb: Vec<f64>,
    basis: Vec<usize>,
    state: Vec<ColState>,
    u: Vec<f64>,
}

impl Tableau {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * self.n + j]
    }

    fn reduced_costs(&self, c: &[f64]) -> Vec<f64> {
        let mut d = c.to_vec();
        for i in 0..self.m {
            let cb = c[self.basis[i]];
            if cb != 0.0 {
                let row = &self.t[i * self.n..(i + 1) * self.n];
                for (dj, &a) in d.iter_mut().zip(row) {
                    *dj -= cb * a;
                }
            }
        }
        d
    }

    fn pivot(&mut self, r: usize, j: usize, d: &mut [f64]) {
        let n = self.n;
        let piv = self.t[r * n + j];
        for v in &mut self.t[r * n..(r + 1) * n] {
            *v /= piv;
        }
        let row_r: Vec<f64> = self.t[r * n..(r + 1) * n].to_vec();
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.t[i * n + j];
            if f != 0.0 {
                for (v, &a) in self.t[i * n..(i + 1) * n].iter_mut().zip(&row_r) {
                    *v -= f * a;
                }
                self.t[i * n + j] = 0.0;
            }
        }
        let f = d[j];
        if f != 0.0 {
            for (v, &a) in d.iter_mut().zip(&row_r) {
                *v -= f * a;
            }
            d[j] = 0.0;
        }
    }

    /// Runs primal simplex on cost `c`. Returns `Err` on unboundedness or timeout.
    fn optimize(&mut self, c: &[f64], deadline: Instant) -> Result<(), LpOutcome> {
        let mut d = self.reduced_costs(c);
        let mut stall = 0usize;
        let mut last_obj = f64::INFINITY;
        let mut iter = 0usize;
        loop {
            iter += 1;
            if iter % 64 == 0 && Instant::now() > deadline {
                return Err(LpOutcome::TimeLimit);
            }
            let use_bland = stall > 50;
            let mut enter: Option<(usize, f64)> = None;
            let mut best = 0.0;
            for j in 0..self.n {
                if self.u[j] <= 0.0 && self.state[j] != ColState::Basic {
                    continue;
                }
                let sigma = match self.state[j] {
                    ColState::Lower if d[j] < -OPT_TOL => 1.0,
                    ColState::Upper if d[j] > OPT_TOL => -1.0,
                    _ => continue,
                };
                if use_bland {
                    enter = Some((j, sigma));
                    break;
                }
                if d[j].abs() > best {
                    best = d[j].abs();
                    enter = Some((j, sigma));
                }
            }
            let Some((j, sigma)) = enter else { return Ok(()) };

            let mut theta = self.u[j];
            let mut leave: Option<(usize, ColState)> = None;
            for i in 0..self.m {
                let a = sigma * self.at(i, j);
                let bi = self.basis[i];
                let (lim, to) = if a > PIVOT_TOL {
                    (self.xb[i].max(0.0) / a, ColState::Lower)
                } else if a < -PIVOT_TOL && self.u[bi].is_finite() {
                    ((self.u[bi] - self.xb[i]).max(0.0) / -a, ColState::Upper)
                } else {
                    continue;
                };
                let better = match leave {
                    _ if lim < theta - 1e-12 => true,
                    Some((r, _)) if lim <= theta + 1e-12 && use_bland => bi < self.basis[r],
                    Some((r, _)) if lim <= theta + 1e-12 => a.abs() > self.at(r, j).abs(),
                    _ => false,
                };
                if better {
                    theta = lim;
                    leave = Some((i, to));
                }
            }
            if !theta.is_finite() {
                return Err(LpOutcome::Unbounded);
            }
            for i in 0..self.m {
                self.xb[i] -= sigma * theta * self.at(i, j);
            }
            match leave {
                None => {
                    self.state[j] = if sigma > 0.0 { ColState::Upper } else { ColState::Lower };
                }
                Some((r, to)) => {
                    let entering_val = if sigma > 0.0 { theta } else { self.u[j] - theta };
                    let out = self.basis[r];
                    self.state[out] = to;
                    self.state[j] = ColState::Basic;
                    self.basis[r] = j;
                    self.xb[r] = entering_val;
                    self.pivot(r, j, &mut d);
                }
            }
            let obj: f64 = self.objective(c);
            if obj < last_obj - 1e-12 {
                last_obj = obj;
                stall = 0;
            } else {
                stall += 1;
            }
        }
    }

    fn values(&self) -> Vec<f64> {
        let mut x: Vec<f64> = (0..self.n)
            .map(|j| if self.state[j] == ColState::Upper { self.u[j] } else { 0.0 })
            .collect();
        for (i, &b) in self.basis.iter().enumerate() {
            x[b] = self.xb[i];
        }
        x
    }

    fn objective(&self, c: &[f64]) -> f64 {
        let mut s: f64 = self
            .state
            .iter()
            .enumerate()
            .filter(|(_, &st)| st == ColState::Upper)
            .map(|(j, _)| c[j] * self.u[j])
            .sum();
        for (i, &b) in self.basis.iter().enumerate() {
            s += c[b] * self.xb[i];
        }
        s
    }
}

/// Solves the LP relaxation of `model` with column bounds overridden by `lb`/`ub`.
fn solve_lp(model: &MilpModel, lb: &[f64], ub: &[f64], deadline: Instant) -> LpOutcome {
    let nv = model.num_vars();
    let rows = model.constrs();
    let m = rows.len();
    let slack_cols: Vec<Option<usize>> = {
        let mut next = nv;
        rows.iter()
            .map(|r| match r.sense {
                Sense::Eq => None,
                _ => {
                    next += 1;
                    Some(next - 1)
                }
            })
            .collect()
    };
    let n_struct = nv + slack_cols.iter().flatten().count();
    let n = n_struct + m;

    let mut t = vec![0.0; m * n];
    let mut b = vec![0.0; m];
    for (i, r) in rows.iter().enumerate() {
        let mut rhs = r.rhs;
        for &(v, a) in &r.expr.terms {
            t[i * n + v.0] += a;
            rhs -= a * lb[v.0];
        }
        if let Some(s) = slack_cols[i] {
            t[i * n + s] = if r.sense == Sense::Le { 1.0 } else { -1.0 };
        }
        if rhs < 0.0 {
            for v in &mut t[i * n..i * n + n_struct] {
                *v = -*v;
            }
            rhs = -rhs;
        }
        t[i * n + n_struct + i] = 1.0;
        b[i] = rhs;
    }
    let mut u = vec![f64::INFINITY; n];
    for j in 0..nv {
        u[j] = ub[j] - lb[j];
    }
    let mut tab = Tableau {
        m,
        n,
        t,
        xb: b,
        basis: (n_struct..n).collect(),
        state: (0..n).map(|j| if j >= n_struct { ColState::Basic } else { ColState::Lower }).collect(),
        u,
    };

    let mut c1 = vec![0.0; n];
    for c in &mut c1[n_struct..] {
        *c = 1.0;
    }
    if let Err(e) = tab.optimize(&c1, deadline) {
        return match e {
            LpOutcome::Unbounded => LpOutcome::Infeasible,
            other => other,
        };
    }
    if tab.objective(&c1) > FEAS_TOL * (1.0 + m as f64) {
        return LpOutcome::Infeasible;
    }
    for j in n_struct..n {
        tab.u[j] = 0.0;
    }

    let flip = if model.obj_sense() == ObjSense::Maximize { -1.0 } else { 1.0 };
    let mut c2 = vec![0.0; n];
    for &(v, a) in &model.objective().terms {
        c2[v.0] = flip * a;
    }
    if let Err(e) = tab.optimize(&c2, deadline) {
        return e;
    }
    let xs = tab.values();
    let x: Vec<f64> = (0..nv).map(|j| (lb[j] + xs[j]).clamp(lb[j], ub[j])).collect();
    let obj = model.objective_value(&x);
    LpOutcome::Optimal { x, obj }
}

struct Node {
    bound: f64,
    lb: Vec<f64>,
    ub: Vec<f64>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.bound == other.bound
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        self.bound.total_cmp(&other.bound)
    }
}

impl Backend for ReferenceBackend {
    fn name(&self) -> &str {
        "reference"
    }

    fn solve(&self, model: &MilpModel, opts: &SolveOptions) -> SolveResult {
        let start = Instant::now();
        if let Err(e) = model.validate_for_solve() {
            return e.into();
        }
        let deadline = start + opts.time_limit;
        let finish = |status, objective, best_bound, values, message: &str| SolveResult {
            status,
            objective,
            best_bound,
            values,
            wall_time: start.elapsed(),
            message: message.to_string(),
        };
        // Internally everything is a maximization: `key` maps objectives to that scale.
        let sense = model.obj_sense();
        let key = |v: f64| if sense == ObjSense::Maximize { v } else { -v };

        let lb0: Vec<f64> = model.vars().iter().map(|v| v.lb).collect();
        let ub0: Vec<f64> = model.vars().iter().map(|v| v.ub).collect();
        let binaries: Vec<usize> = if opts.relaxed {
            Vec::new()
        } else {
            (0..model.num_vars()).filter(|&j| model.vars()[j].kind == VarKind::Binary).collect()
        };

        let mut incumbent: Option<(f64, Vec<f64>)> = None;
        if !opts.relaxed {
            if let Some(ws) = model.warm_start() {
                if ws.iter().all(Option::is_some) {
                    let x: Vec<f64> = ws.iter().map(|v| v.unwrap()).collect();
                    if model.check_assignment(&x, FEAS_TOL).is_none() {
                        incumbent = Some((key(model.objective_value(&x)), x));
                    }
                }
            }
        }

        let mut heap = BinaryHeap::new();
        heap.push(Node { bound: f64::INFINITY, lb: lb0, ub: ub0 });
        let mut timed_out = false;
        let mut nodes = 0usize;
        while let Some(node) = heap.pop() {
            if let Some((inc, _)) = &incumbent {
                if gap_of(ObjSense::Maximize, *inc, node.bound) <= opts.gap || node.bound <= *inc {
                    heap.push(node);
                    break;
                }
            }
            if Instant::now() > deadline {
                heap.push(node);
                timed_out = true;
                break;
            }
            nodes += 1;
            match solve_lp(model, &node.lb, &node.ub, deadline) {
                LpOutcome::Infeasible => continue,
                LpOutcome::Unbounded => {
                    return finish(SolveStatus::Unbounded, None, None, None, "LP relaxation unbounded");
                }
                LpOutcome::TimeLimit => {
                    heap.push(node);
                    timed_out = true;
                    break;
                }
                LpOutcome::Optimal { x, obj } => {
                    let k = key(obj).min(node.bound);
                    if let Some((inc, _)) = &incumbent {
                        if k <= *inc + 1e-12 {
                            continue;
                        }
                    }
                    let frac = binaries
                        .iter()
                        .copied()
                        .filter(|&j| (x[j] - x[j].round()).abs() > INT_TOL)
                        .max_by(|&a, &b| {
                            let fa = (x[a] - 0.5).abs();
                            let fb = (x[b] - 0.5).abs();
                            fb.total_cmp(&fa)
                        });
                    match frac {
                        None => {
                            let mut x = x;
                            for &j in &binaries {
                                x[j] = x[j].round();
                            }
                            let val = key(model.objective_value(&x));
                            if incumbent.as_ref().map_or(true, |(inc, _)| val > *inc) {
                                incumbent = Some((val, x));
                            }
                        }
                        Some(j) => {
                            let mut down = Node { bound: k, lb: node.lb.clone(), ub: node.ub.clone() };
                            down.ub[j] = 0.0;
                            let mut up = Node { bound: k, lb: node.lb, ub: node.ub };
                            up.lb[j] = 1.0;
                            heap.push(down);
                            heap.push(up);
                        }
                    }
                }
            }
        }
        tracing::debug!(nodes, "reference branch-and-bound finished");

        let open_bound = heap.iter().map(|n| n.bound).fold(f64::NEG_INFINITY, f64::max);
        match incumbent {
            None if timed_out => finish(SolveStatus::TimeLimit, None, None, None, "no incumbent"),
            None => finish(SolveStatus::Infeasible, None, None, None, "infeasible"),
            Some((inc, x)) => {
                let bound = open_bound.max(inc);
                let bound = if bound.is_finite() { bound } else { inc };
                let status = if timed_out {
                    SolveStatus::TimeLimit
                } else if bound - inc <= 1e-9 * inc.abs().max(1.0) {
                    SolveStatus::Optimal
                } else {
                    SolveStatus::OptimalWithinGap
                };
                let back = |v: f64| if sense == ObjSense::Maximize { v } else { -v };
                finish(status, Some(back(inc)), Some(back(bound)), Some(x), "")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LinExpr, MilpModel};

    fn lp(obj: &[f64], rows: &[(&[f64], Sense, f64)], bounds: &[(f64, f64)], sense: ObjSense) -> MilpModel {
        let mut m = MilpModel::new("lp");
        let vars: Vec<_> = bounds
            .iter()
            .enumerate()
            .map(|(i, &(l, u))| m.add_continuous(format!("x{i}"), l, u).unwrap())
            .collect();
        for (k, (coefs, s, rhs)) in rows.iter().enumerate() {
            let mut e = LinExpr::new();
            for (v, &c) in vars.iter().zip(coefs.iter()) {
                e.add_term(*v, c);
            }
            m.add_constr(format!("r{k}"), &e, *s, *rhs).unwrap();
        }
        let mut e = LinExpr::new();
        for (v, &c) in vars.iter().zip(obj) {
            e.add_term(*v, c);
        }
        m.set_objective(&e, sense).unwrap();
        m
    }

    #[test]
    fn textbook_lp() {
        // max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18 -> (2, 6), 36
        let m = lp(
            &[3.0, 5.0],
            &[(&[1.0, 0.0], Sense::Le, 4.0), (&[0.0, 2.0], Sense::Le, 12.0), (&[3.0, 2.0], Sense::Le, 18.0)],
            &[(0.0, 100.0), (0.0, 100.0)],
            ObjSense::Maximize,
        );
        let r = ReferenceBackend.solve(&m, &SolveOptions::lp());
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.objective.unwrap() - 36.0).abs() < 1e-9);
        let x = r.values.unwrap();
        assert!((x[0] - 2.0).abs() < 1e-9 && (x[1] - 6.0).abs() < 1e-9);
    }

    #[test]
    fn negative_bounds_equalities_and_minimize() {
        // min x - y, x + y = 1, x in [-2, 2], y in [-3, 0.5] -> x = 0.5, y = 0.5, 0
        let m = lp(
            &[1.0, -1.0],
            &[(&[1.0, 1.0], Sense::Eq, 1.0)],
            &[(-2.0, 2.0), (-3.0, 0.5)],
            ObjSense::Minimize,
        );
        let r = ReferenceBackend.solve(&m, &SolveOptions::lp());
        assert!((r.objective.unwrap() - 0.0).abs() < 1e-9, "{r:?}");
    }

    #[test]
    fn detects_infeasible() {
        let m = lp(
            &[1.0],
            &[(&[1.0], Sense::Ge, 3.0)],
            &[(0.0, 2.0)],
            ObjSense::Maximize,
        );
        assert_eq!(ReferenceBackend.solve(&m, &SolveOptions::lp()).status, SolveStatus::Infeasible);
    }

    #[test]
    fn small_knapsack() {
        // max 5a + 4b + 3c s.t. 2a + 3b + c <= 5; best is a = b = 1 with value 9
        let mut m = MilpModel::new("k");
        let vs: Vec<_> = (0..3).map(|i| m.add_binary(format!("b{i}")).unwrap()).collect();
        let mut w = LinExpr::new();
        for (v, c) in vs.iter().zip([2.0, 3.0, 1.0]) {
            w.add_term(*v, c);
        }
        m.add_constr("cap", &w, Sense::Le, 5.0).unwrap();
        let mut o = LinExpr::new();
        for (v, c) in vs.iter().zip([5.0, 4.0, 3.0]) {
            o.add_term(*v, c);
        }
        m.set_objective(&o, ObjSense::Maximize).unwrap();
        let r = ReferenceBackend.solve(&m, &SolveOptions::default().with_gap(0.0));
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.objective.unwrap() - 9.0).abs() < 1e-9);
    }
}
