use std::time::Duration;

use crate::model::{MilpModel, ModelError, ObjSense};

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    /// Relative optimality gap `|bound - objective| / max(|objective|, 1e-10)`.
    pub gap: f64,
    pub time_limit: Duration,
    /// Solve the LP relaxation: binaries are treated as continuous in [0, 1].
    pub relaxed: bool,
    pub threads: Option<usize>,
    pub verbose: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            gap: 0.05,
            time_limit: Duration::from_secs(7200),
            relaxed: false,
            threads: None,
            verbose: false,
        }
    }
}

impl SolveOptions {
    pub fn lp() -> Self {
        Self { relaxed: true, ..Self::default() }
    }

    pub fn with_gap(mut self, gap: f64) -> Self {
        self.gap = gap;
        self
    }

    pub fn with_time_limit(mut self, t: Duration) -> Self {
        self.time_limit = t;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    OptimalWithinGap,
    TimeLimit,
    Infeasible,
    Unbounded,
    Error,
}

impl SolveStatus {
    pub fn has_solution(self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::OptimalWithinGap | SolveStatus::TimeLimit)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::OptimalWithinGap => "optimal_within_gap",
            SolveStatus::TimeLimit => "time_limit",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
            SolveStatus::Error => "error",
        }
    }
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub status: SolveStatus,
    /// Objective of the incumbent, if one exists.
    pub objective: Option<f64>,
    /// Dual bound on the optimum (an upper bound when maximizing).
    pub best_bound: Option<f64>,
    pub values: Option<Vec<f64>>,
    pub wall_time: Duration,
    pub message: String,
}

impl SolveResult {
    pub fn error(message: impl Into<String>) -> Self {
        Self {
            status: SolveStatus::Error,
            objective: None,
            best_bound: None,
            values: None,
            wall_time: Duration::ZERO,
            message: message.into(),
        }
    }

    pub fn relative_gap(&self) -> Option<f64> {
        let (o, b) = (self.objective?, self.best_bound?);
        Some((b - o).abs() / o.abs().max(1e-10))
    }
}

impl From<ModelError> for SolveResult {
    fn from(e: ModelError) -> Self {
        SolveResult::error(e.to_string())
    }
}

/// A MILP/LP solver. Implementations must be usable from several threads at once.
pub trait Backend: Send + Sync {
    fn name(&self) -> &str;
    fn solve(&self, model: &MilpModel, opts: &SolveOptions) -> SolveResult;
}

pub(crate) fn gap_of(sense: ObjSense, incumbent: f64, bound: f64) -> f64 {
    let diff = match sense {
        ObjSense::Maximize => bound - incumbent,
        ObjSense::Minimize => incumbent - bound,
    };
    diff.max(0.0) / incumbent.abs().max(1e-10)
}
