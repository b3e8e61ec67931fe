use std::time::Instant;

use highs::{HighsModelStatus, RowProblem, Sense as HSense};

use crate::model::{MilpModel, ObjSense, Sense, VarKind};
use crate::solve::{Backend, SolveOptions, SolveResult, SolveStatus};

/// HiGHS through the `highs` crate. HiGHS is compiled from source, no external binary needed.
#[derive(Debug, Clone, Default)]
pub struct HighsBackend {
    /// Extra `(name, value)` options passed to HiGHS before solving.
    pub options: Vec<(String, f64)>,
}

impl Backend for HighsBackend {
    fn name(&self) -> &str {
        "highs"
    }

    fn solve(&self, model: &MilpModel, opts: &SolveOptions) -> SolveResult {
        let start = Instant::now();
        if let Err(e) = model.validate_for_solve() {
            return e.into();
        }
        let mut pb = RowProblem::default();
        let mut obj = vec![0.0; model.num_vars()];
        for &(v, c) in &model.objective().terms {
            obj[v.0] = c;
        }
        let mut any_int = false;
        let cols: Vec<_> = model
            .vars()
            .iter()
            .zip(&obj)
            .map(|(v, &c)| {
                let int = v.kind == VarKind::Binary && !opts.relaxed;
                any_int |= int;
                pb.add_column_with_integrality(c, v.lb..=v.ub, int)
            })
            .collect();
        for con in model.constrs() {
            let row: Vec<_> = con.expr.terms.iter().map(|&(v, a)| (cols[v.0], a)).collect();
            match con.sense {
                Sense::Le => pb.add_row(..=con.rhs, &row),
                Sense::Ge => pb.add_row(con.rhs.., &row),
                Sense::Eq => pb.add_row(con.rhs..=con.rhs, &row),
            }
        }
        let sense = match model.obj_sense() {
            ObjSense::Maximize => HSense::Maximise,
            ObjSense::Minimize => HSense::Minimise,
        };
        let mut hm = match pb.try_optimise(sense) {
            Ok(m) => m,
            Err(e) => return SolveResult::error(format!("HiGHS rejected the model: {e:?}")),
        };
        hm.make_quiet();
        hm.set_option("output_flag", opts.verbose);
        hm.set_option("time_limit", opts.time_limit.as_secs_f64());
        hm.set_option("mip_rel_gap", opts.gap);
        if let Some(t) = opts.threads {
            hm.set_option("threads", t as i32);
        }
        for (k, v) in &self.options {
            if hm.try_set_option(k.as_str(), *v).is_err() {
                return SolveResult::error(format!("unknown HiGHS option {k}"));
            }
        }
        if any_int {
            if let Some(ws) = model.warm_start() {
                let start: Vec<f64> = ws
                    .iter()
                    .zip(model.vars())
                    .map(|(w, v)| w.unwrap_or(0.0).clamp(v.lb, v.ub))
                    .collect();
                if hm.try_set_solution(Some(&start), None, None, None).is_err() {
                    tracing::warn!("HiGHS did not accept the warm start");
                }
            }
        }
        let solved = match hm.try_solve() {
            Ok(s) => s,
            Err(e) => return SolveResult::error(format!("HiGHS failed: {e:?}")),
        };
        let status = solved.status();
        let has_primal = matches!(
            solved.primal_solution_status(),
            highs::HighsSolutionStatus::Feasible
        );
        let values = has_primal.then(|| solved.get_solution().columns().to_vec());
        let objective = values.as_ref().map(|x| model.objective_value(x));
        let best_bound = if any_int {
            solved.double_info_value(c"mip_dual_bound").ok().filter(|b| b.is_finite())
        } else {
            objective
        };
        let (status, message) = match status {
            HighsModelStatus::Optimal if objective.is_some() => {
                let exact = match (objective, best_bound) {
                    (Some(o), Some(b)) => (b - o).abs() <= 1e-9 * o.abs().max(1.0),
                    _ => true,
                };
                let s = if exact { SolveStatus::Optimal } else { SolveStatus::OptimalWithinGap };
                (s, String::new())
            }
            HighsModelStatus::ReachedTimeLimit => (SolveStatus::TimeLimit, "time limit reached".into()),
            HighsModelStatus::Infeasible => (SolveStatus::Infeasible, "infeasible".into()),
            HighsModelStatus::Unbounded | HighsModelStatus::UnboundedOrInfeasible => {
                (SolveStatus::Unbounded, format!("{status:?}"))
            }
            other => (SolveStatus::Error, format!("HiGHS status {other:?}")),
        };
        let keep = status.has_solution();
        SolveResult {
            status,
            objective: if keep { objective } else { None },
            best_bound: if keep || status == SolveStatus::TimeLimit { best_bound } else { None },
            values: if keep { values } else { None },
            wall_time: start.elapsed(),
            message,
        }
    }
}
