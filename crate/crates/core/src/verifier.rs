//! Sequential verification over `K = 1..=K_max`: bounds, tightening, cuts, and the MILP.

use std::sync::Arc;
use std::time::{Duration, Instant};

use fomcert_milp::{Backend, LinExpr, MilpModel, ObjSense, SolveOptions, SolveStatus};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::{self, BoundError, IterBounds, Provenance, TheoryParams};
use crate::cutgen::{self, Classification, Family, HullCut};
use crate::encoder::{self, EncodeError, EncodeOptions, VarMap};
use crate::model_ir::{Compiled, IrError};

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Bounds(#[from] BoundError),
    #[error(transparent)]
    Ir(#[from] IrError),
    #[error("cannot write model: {0}")]
    Io(#[from] std::io::Error),
    #[error("solver failed at K = {k}: {status} ({message})")]
    Solver { k: usize, status: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutMode {
    /// Most violated row of every family for every component.
    PerComponent,
    /// Only the single most violated row overall per round.
    GlobalOne,
    Off,
}

impl std::str::FromStr for CutMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "per_component" | "per-component" => Ok(CutMode::PerComponent),
            "global_one" | "global-one" => Ok(CutMode::GlobalOne),
            "off" | "none" => Ok(CutMode::Off),
            _ => Err(format!("unknown cut mode `{s}` (expected per_component, global_one or off)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct VerifyConfig {
    pub kmax: usize,
    pub gap: f64,
    pub time_limit: Duration,
    pub obbt: bool,
    pub obbt_rounds: usize,
    /// Also tighten the arguments of every earlier iteration, not just the last one.
    pub obbt_all_args: bool,
    pub cut_mode: CutMode,
    pub cut_rounds: usize,
    pub cut_tol: f64,
    pub theory: Option<TheoryParams>,
    /// Replace the theory radius by the value of the radius problem.
    pub compute_r: bool,
    pub base_hull_rows: bool,
    pub threads: Option<usize>,
    /// Parallel bound tightening solves.
    pub parallel: bool,
    /// Write each verification MILP (after root cuts) as `vp_K.lp` here.
    pub dump_dir: Option<std::path::PathBuf>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            kmax: 10,
            gap: 0.05,
            time_limit: Duration::from_secs(7200),
            obbt: true,
            obbt_rounds: 3,
            obbt_all_args: false,
            cut_mode: CutMode::PerComponent,
            cut_rounds: 5,
            cut_tol: 1e-9,
            theory: None,
            compute_r: false,
            base_hull_rows: true,
            threads: None,
            parallel: true,
            dump_dir: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CutLogEntry {
    pub k: usize,
    pub round: usize,
    pub component: String,
    pub family: Family,
    pub index_size: usize,
    pub violation: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KReport {
    pub k: usize,
    /// Best found value of `||s^K - s^{K-1}||_inf` (a lower bound on the worst case).
    pub delta: Option<f64>,
    /// Certified upper bound on the worst case.
    pub best_bound: f64,
    pub status: String,
    pub gap: Option<f64>,
    pub milp_time: f64,
    pub obbt_time: f64,
    pub cut_time: f64,
    pub cuts: usize,
    pub lp_bound_before_cuts: Option<f64>,
    pub lp_bound_after_cuts: Option<f64>,
    /// Fraction of residual components where the theory bound beat interval propagation.
    pub frac_theory_tighter: f64,
    pub binaries: usize,
    pub constraints: usize,
    /// Parameter and initial state attaining `delta`.
    pub witness: Option<(Vec<f64>, Vec<f64>)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerificationReport {
    pub family: String,
    pub algorithm: String,
    pub radius: Option<f64>,
    pub per_k: Vec<KReport>,
    pub cut_log: Vec<CutLogEntry>,
    pub total_time: f64,
}

impl VerificationReport {
    pub fn deltas(&self) -> Vec<Option<f64>> {
        self.per_k.iter().map(|r| r.delta).collect()
    }

    pub fn best_bounds(&self) -> Vec<f64> {
        self.per_k.iter().map(|r| r.best_bound).collect()
    }
}

/// Slack added to LP-derived bounds so floating point error cannot cut off feasible points.
fn pad(v: f64) -> f64 {
    1e-7 * (1.0 + v.abs())
}

pub struct Verifier<'a> {
    c: &'a Compiled,
    cfg: VerifyConfig,
    backend: Arc<dyn Backend>,
    pub bounds: IterBounds,
    table: Vec<Vec<f64>>,
}

impl<'a> Verifier<'a> {
    pub fn new(c: &'a Compiled, cfg: VerifyConfig, backend: Arc<dyn Backend>) -> Result<Self, VerifyError> {
        let table = c.schedule_table(cfg.kmax)?;
        let bounds = IterBounds::initial(c);
        Ok(Self { c, cfg, backend, bounds, table })
    }

    fn encode_opts(&self) -> EncodeOptions {
        EncodeOptions { base_hull_rows: self.cfg.base_hull_rows }
    }

    fn milp_opts(&self) -> SolveOptions {
        SolveOptions { gap: self.cfg.gap, time_limit: self.cfg.time_limit, threads: self.cfg.threads, ..SolveOptions::default() }
    }

    fn lp_opts(&self) -> SolveOptions {
        SolveOptions { threads: Some(1), ..SolveOptions::lp() }
    }

    /// Upper bound on `||s0 - s*||_1` from the radius problem.
    pub fn compute_radius(&self) -> Result<f64, VerifyError> {
        let (model, _) = encoder::encode_radius(self.c, &self.encode_opts())?;
        let r = self.backend.solve(&model, &self.milp_opts());
        match (r.status.has_solution(), r.best_bound) {
            (true, Some(b)) => Ok(b + pad(b)),
            _ => Err(VerifyError::Solver { k: 0, status: r.status.as_str().into(), message: r.message }),
        }
    }

    /// LP-based bound tightening for iteration `k`. Returns the number of rounds run.
    pub fn obbt(&mut self, k: usize) -> Result<usize, VerifyError> {
        let mut rounds = 0;
        for _ in 0..self.cfg.obbt_rounds {
            rounds += 1;
            let (model, map) =
                encoder::encode_iterations(self.c, &self.bounds, k, &self.table, &self.encode_opts(), true)?;
            let targets = self.obbt_targets(&map, k);
            let exprs = targets;
            let solve = |(t, e): &(Target, LinExpr)| -> (Target, Option<f64>, Option<f64>) {
                let mut m = model.clone();
                let mut out = [None, None];
                for (j, sense) in [ObjSense::Minimize, ObjSense::Maximize].into_iter().enumerate() {
                    if m.set_objective(e, sense).is_err() {
                        continue;
                    }
                    let r = self.backend.solve(&m, &self.lp_opts());
                    if r.status == SolveStatus::Optimal {
                        out[j] = r.objective;
                    }
                }
                (*t, out[0], out[1])
            };
            let results: Vec<_> = if self.cfg.parallel {
                exprs.par_iter().map(solve).collect()
            } else {
                exprs.iter().map(solve).collect()
            };
            let mut improved = false;
            for (t, lo, hi) in results {
                let lo = lo.map_or(f64::NEG_INFINITY, |v| v - pad(v));
                let hi = hi.map_or(f64::INFINITY, |v| v + pad(v));
                let b = match t {
                    Target::State { k, slot, .. } => &mut self.bounds.states[k][slot],
                    Target::Arg { k, step, .. } => self.bounds.args[k][step].as_mut().expect("pwa step"),
                };
                let i = t.index();
                let (old_lo, old_hi) = (b.lo[i], b.hi[i]);
                b.tighten(i, lo, hi, Provenance::Obbt);
                if b.lo[i] - old_lo > 1e-6 * (1.0 + old_lo.abs()) || old_hi - b.hi[i] > 1e-6 * (1.0 + old_hi.abs()) {
                    improved = true;
                }
            }
            for kk in 0..=k {
                for (s, b) in self.bounds.states[kk].iter_mut().enumerate() {
                    b.settle().map_err(|(i, lo, hi)| BoundError::Crossed {
                        k: kk,
                        slot: self.c.slot_names[s].clone(),
                        i,
                        lo,
                        hi,
                    })?;
                }
            }
            // Re-run interval arithmetic so tightened arguments reach the outputs.
            bounds::propagate_interval(self.c, &mut self.bounds, k, &self.table)?;
            if !improved {
                break;
            }
        }
        Ok(rounds)
    }

    fn obbt_targets(&self, map: &VarMap, k: usize) -> Vec<(Target, LinExpr)> {
        let mut out = Vec::new();
        for kk in [k - 1, k] {
            if kk == 0 {
                continue;
            }
            for (slot, ids) in map.states[kk].iter().enumerate() {
                for (i, &v) in ids.iter().enumerate() {
                    out.push((Target::State { k: kk, slot, i }, LinExpr::var(v)));
                }
            }
        }
        for comp in &map.pwa {
            if comp.k == k || self.cfg.obbt_all_args {
                out.push((Target::Arg { k: comp.k - 1, step: comp.step, i: comp.row }, comp.arg_expr()));
            }
        }
        out
    }

    /// Root cut loop on the LP relaxation. Returns (cuts added, bound before, bound after).
    fn root_cuts(
        &self,
        model: &mut MilpModel,
        map: &VarMap,
        k: usize,
        log: &mut Vec<CutLogEntry>,
    ) -> (usize, Option<f64>, Option<f64>) {
        let mut added = 0;
        let mut first = None;
        let mut last = None;
        if self.cfg.cut_mode == CutMode::Off {
            return (0, None, None);
        }
        for round in 0..=self.cfg.cut_rounds {
            let r = self.backend.solve(model, &self.lp_opts());
            if r.status != SolveStatus::Optimal {
                break;
            }
            first = first.or(r.objective);
            last = r.objective;
            if round == self.cfg.cut_rounds {
                break;
            }
            let v = r.values.expect("optimal LP has values");
            let mut found: Vec<(usize, HullCut, f64)> = Vec::new();
            for (ci, comp) in map.pwa.iter().enumerate() {
                let q = comp.query(model);
                if cutgen::classify(&q) != Classification::General {
                    continue;
                }
                let y: Vec<f64> = comp.inputs.iter().map(|id| v[id.0]).collect();
                for (cut, viol) in cutgen::separate_all(&q, &y, v[comp.output.0], self.cfg.cut_tol) {
                    found.push((ci, cut, viol));
                }
            }
            if self.cfg.cut_mode == CutMode::GlobalOne {
                found = found.into_iter().max_by(|a, b| a.2.total_cmp(&b.2)).into_iter().collect();
            }
            if found.is_empty() {
                break;
            }
            for (ci, cut, viol) in found {
                let comp = &map.pwa[ci];
                let label = format!("[{}][{}][{}]", comp.k, self.c.steps[comp.step].name, comp.row);
                let name = format!("cut{label}_{}_{added}", cut.family.as_str());
                if encoder::add_hull_row(model, name, comp, &cut).is_ok() {
                    added += 1;
                    log.push(CutLogEntry {
                        k,
                        round,
                        component: label,
                        family: cut.family,
                        index_size: cut.index_size,
                        violation: viol,
                    });
                }
            }
        }
        (added, first, last)
    }

    fn warm_start(&self, model: &mut MilpModel, map: &VarMap, k: usize, hints: &[(Vec<f64>, Vec<f64>)]) {
        let mut best: Option<(f64, Vec<f64>)> = None;
        for (x, s0) in hints {
            if let Ok(Some(v)) = encoder::warm_start_assignment(self.c, model, map, x, s0, k, 1e-6) {
                let d = map.objective.as_ref().map_or(0.0, |o| v[o.delta.0]);
                if best.as_ref().map_or(true, |(b, _)| d > *b) {
                    best = Some((d, v));
                }
            }
        }
        if let Some((_, v)) = best {
            let _ = model.set_full_warm_start(&v);
        }
    }

    fn hints(&self, prev: &[(Vec<f64>, Vec<f64>)]) -> Vec<(Vec<f64>, Vec<f64>)> {
        let p = &self.c.family.params;
        let (ilo, ihi) = self.c.init_bounds();
        let mid = |l: &[f64], h: &[f64]| l.iter().zip(h).map(|(a, b)| 0.5 * (a + b)).collect::<Vec<f64>>();
        let s_mid: Vec<f64> = ilo.iter().zip(&ihi).flat_map(|(l, h)| mid(l, h)).collect();
        let s_lo: Vec<f64> = ilo.concat();
        let s_hi: Vec<f64> = ihi.concat();
        let mut out = prev.to_vec();
        for x in [mid(&p.lower, &p.upper), p.lower.clone(), p.upper.clone()] {
            for s in [&s_mid, &s_lo, &s_hi] {
                out.push((x.clone(), s.clone()));
            }
        }
        out
    }

    /// Runs `K = 1..=kmax`, calling `on_k` after each iteration.
    pub fn run_with(&mut self, mut on_k: impl FnMut(&KReport)) -> Result<VerificationReport, VerifyError> {
        let start = Instant::now();
        let mut theory = self.cfg.theory.clone();
        let mut radius = None;
        if self.cfg.compute_r {
            let r = self.compute_radius()?;
            radius = Some(r);
            theory = theory.map(|t| t.with_radius(r));
        }
        let mut per_k = Vec::new();
        let mut cut_log = Vec::new();
        let mut certified = Vec::new();
        let mut witnesses: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
        for k in 1..=self.cfg.kmax {
            bounds::propagate_interval(self.c, &mut self.bounds, k, &self.table)?;
            let mut frac = 0.0;
            if let Some(alpha) = theory.as_ref().and_then(|t| t.alpha(k)) {
                let tb = bounds::theory_bounds(self.c, &self.bounds, k, alpha);
                frac = bounds::combine(self.c, &mut self.bounds, k, &tb)?;
            }
            let t0 = Instant::now();
            if self.cfg.obbt {
                self.obbt(k)?;
            }
            let obbt_time = t0.elapsed().as_secs_f64();

            let (mut model, map) = encoder::encode_vp(self.c, &self.bounds, k, &self.table, &self.encode_opts())?;
            let t1 = Instant::now();
            let (cuts, before, after) = self.root_cuts(&mut model, &map, k, &mut cut_log);
            let cut_time = t1.elapsed().as_secs_f64();
            if let Some(dir) = &self.cfg.dump_dir {
                std::fs::create_dir_all(dir)?;
                fomcert_milp::lp_format::write_lp(&model, &dir.join(format!("vp_{k}.lp")))?;
            }
            let hints = self.hints(&witnesses);
            self.warm_start(&mut model, &map, k, &hints);
            let r = self.backend.solve(&model, &self.milp_opts());
            if !r.status.has_solution() && r.best_bound.is_none() {
                return Err(VerifyError::Solver { k, status: r.status.as_str().into(), message: r.message });
            }
            let obj = map.objective.as_ref().expect("objective encoded");
            let (_, dmax) = (model.var(obj.delta).lb, model.var(obj.delta).ub);
            let best_bound = r.best_bound.unwrap_or(dmax).min(dmax);
            let best_bound = best_bound + pad(best_bound);
            let witness = r.values.as_ref().map(|v| {
                let x: Vec<f64> = map.x.iter().map(|id| v[id.0]).collect();
                let s0: Vec<f64> = map.states[0].iter().flatten().map(|id| v[id.0]).collect();
                (x, s0)
            });
            // Report the residual of the witness by exact simulation.
            let delta = match &witness {
                Some((x, s0)) => Some(self.c.residual_inf(&self.c.simulate(x, s0, k)?, k)),
                None => None,
            };
            if let Some(w) = &witness {
                witnesses.insert(0, w.clone());
                witnesses.truncate(3);
            }
            certified.push(best_bound);
            bounds::postprocess_delta(self.c, &mut self.bounds, k, &certified)?;
            let rep = KReport {
                k,
                delta,
                best_bound,
                status: r.status.as_str().into(),
                gap: r.relative_gap(),
                milp_time: r.wall_time.as_secs_f64(),
                obbt_time,
                cut_time,
                cuts,
                lp_bound_before_cuts: before,
                lp_bound_after_cuts: after,
                frac_theory_tighter: frac,
                binaries: model.num_binaries(),
                constraints: model.num_constrs(),
                witness,
            };
            tracing::info!(k, delta = ?rep.delta, bound = rep.best_bound, status = %rep.status, "verified");
            on_k(&rep);
            per_k.push(rep);
        }
        Ok(VerificationReport {
            family: self.c.family.name.clone(),
            algorithm: self.c.family.algorithm.name.clone(),
            radius,
            per_k,
            cut_log,
            total_time: start.elapsed().as_secs_f64(),
        })
    }

    pub fn run(&mut self) -> Result<VerificationReport, VerifyError> {
        self.run_with(|_| {})
    }

    /// The verification problem for `k` with the current bounds, e.g. for export.
    pub fn model_for(&self, k: usize) -> Result<MilpModel, VerifyError> {
        Ok(encoder::encode_vp(self.c, &self.bounds, k, &self.table, &self.encode_opts())?.0)
    }
}

#[derive(Debug, Clone, Copy)]
enum Target {
    State { k: usize, slot: usize, i: usize },
    Arg { k: usize, step: usize, i: usize },
}

impl Target {
    fn index(self) -> usize {
        match self {
            Target::State { i, .. } | Target::Arg { i, .. } => i,
        }
    }
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::tests::small_ista;
    use crate::model_ir::{tests::gradient_1d, validate};
    use fomcert_milp::HighsBackend;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn backend() -> Arc<dyn Backend> {
        Arc::new(HighsBackend::default())
    }

    #[test]
    fn gradient_series_matches_closed_form() {
        let c = validate(&gradient_1d()).unwrap();
        let cfg = VerifyConfig { kmax: 8, gap: 1e-9, ..VerifyConfig::default() };
        let rep = Verifier::new(&c, cfg, backend()).unwrap().run().unwrap();
        for r in &rep.per_k {
            let exact = 0.5f64.powi(r.k as i32);
            assert!((r.delta.unwrap() - exact).abs() < 1e-7, "K={} delta={:?}", r.k, r.delta);
            assert!(r.best_bound >= exact - 1e-9 && r.best_bound <= exact + 1e-6);
        }
    }

    #[test]
    fn bounds_dominate_samples_in_every_mode() {
        let c = validate(&small_ista()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut sample_max = vec![0.0f64; 6];
        for _ in 0..500 {
            let x = vec![rng.gen_range(-1.0..=1.0), rng.gen_range(0.5..=1.5)];
            let s0 = vec![rng.gen_range(-0.2..=0.2), rng.gen_range(-0.2..=0.2)];
            let t = c.simulate(&x, &s0, 6).unwrap();
            for k in 1..=6 {
                sample_max[k - 1] = sample_max[k - 1].max(c.residual_inf(&t, k));
            }
        }
        let mut reference: Option<Vec<f64>> = None;
        for (obbt, mode) in [(true, CutMode::PerComponent), (false, CutMode::Off), (true, CutMode::GlobalOne)] {
            let cfg = VerifyConfig { kmax: 6, gap: 1e-6, obbt, cut_mode: mode, ..VerifyConfig::default() };
            let rep = Verifier::new(&c, cfg, backend()).unwrap().run().unwrap();
            for r in &rep.per_k {
                assert!(r.best_bound >= sample_max[r.k - 1] - 1e-9);
                assert!(r.delta.unwrap() <= r.best_bound + 1e-7);
            }
            let d: Vec<f64> = rep.per_k.iter().map(|r| r.delta.unwrap()).collect();
            match &reference {
                None => reference = Some(d),
                Some(prev) => {
                    for (a, b) in prev.iter().zip(&d) {
                        assert!((a - b).abs() <= 1e-5 * (1.0 + a.abs()), "{prev:?} vs {d:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn theory_bounds_are_used_and_sound() {
        let c = validate(&gradient_1d()).unwrap();
        // Contraction factor 0.5 and fixed points in [-1, 1]: residuals are at most 2 * 0.5^(k-1).
        let theory = TheoryParams::Contractive { beta: 0.5, r: 1.0 };
        let cfg = VerifyConfig { kmax: 5, gap: 1e-9, theory: Some(theory), ..VerifyConfig::default() };
        let rep = Verifier::new(&c, cfg, backend()).unwrap().run().unwrap();
        for r in &rep.per_k {
            assert!((r.delta.unwrap() - 0.5f64.powi(r.k as i32)).abs() < 1e-7);
        }
    }
}
