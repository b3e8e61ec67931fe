use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ConstrId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone)]
pub struct Var {
    pub name: String,
    pub lb: f64,
    pub ub: f64,
    pub kind: VarKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

impl fmt::Display for Sense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sense::Le => "<=",
            Sense::Eq => "=",
            Sense::Ge => ">=",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjSense {
    Minimize,
    Maximize,
}

/// Affine expression `sum coef * var + constant`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinExpr {
    pub terms: Vec<(VarId, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self { terms: Vec::new(), constant: c }
    }

    pub fn var(v: VarId) -> Self {
        Self { terms: vec![(v, 1.0)], constant: 0.0 }
    }

    pub fn term(v: VarId, c: f64) -> Self {
        Self { terms: vec![(v, c)], constant: 0.0 }
    }

    pub fn add_term(&mut self, v: VarId, c: f64) -> &mut Self {
        if c != 0.0 {
            self.terms.push((v, c));
        }
        self
    }

    pub fn add_constant(&mut self, c: f64) -> &mut Self {
        self.constant += c;
        self
    }

    pub fn add_expr(&mut self, other: &LinExpr, scale: f64) -> &mut Self {
        for &(v, c) in &other.terms {
            self.add_term(v, c * scale);
        }
        self.constant += other.constant * scale;
        self
    }

    pub fn scaled(&self, s: f64) -> LinExpr {
        let mut out = LinExpr::new();
        out.add_expr(self, s);
        out
    }

    /// Merge duplicate variables and drop zero coefficients.
    pub fn normalized(&self) -> LinExpr {
        let mut acc: BTreeMap<VarId, f64> = BTreeMap::new();
        for &(v, c) in &self.terms {
            *acc.entry(v).or_insert(0.0) += c;
        }
        LinExpr {
            terms: acc.into_iter().filter(|&(_, c)| c != 0.0).collect(),
            constant: self.constant,
        }
    }

    pub fn eval(&self, values: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, c)| c * values[v.0]).sum::<f64>() + self.constant
    }
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub name: String,
    /// Normalized terms; the expression constant has been moved into `rhs`.
    pub expr: LinExpr,
    pub sense: Sense,
    pub rhs: f64,
}

impl Constraint {
    pub fn violation(&self, values: &[f64]) -> f64 {
        let lhs = self.expr.eval(values);
        match self.sense {
            Sense::Le => (lhs - self.rhs).max(0.0),
            Sense::Ge => (self.rhs - lhs).max(0.0),
            Sense::Eq => (lhs - self.rhs).abs(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("variable {name}: lower bound {lb} exceeds upper bound {ub}")]
    BoundInversion { name: String, lb: f64, ub: f64 },
    #[error("variable {name}: binary bounds [{lb}, {ub}] are not within [0, 1]")]
    BadBinaryBounds { name: String, lb: f64, ub: f64 },
    #[error("variable {name}: bound is NaN")]
    NanBound { name: String },
    #[error("unknown variable id {0}")]
    UnknownVar(usize),
    #[error("constraint {name}: non-finite coefficient")]
    NonFiniteCoef { name: String },
    #[error("variable {name}: infinite bound in a model handed to a solver")]
    InfiniteBound { name: String },
    #[error("warm start has {got} values, model has {expected} variables")]
    WarmStartLength { got: usize, expected: usize },
}

/// Result of checking an assignment against a model.
#[derive(Debug, Clone, PartialEq)]
pub enum Infeasibility {
    Bound { var: String, value: f64 },
    Integrality { var: String, value: f64 },
    Constraint { name: String, violation: f64 },
}

#[derive(Debug, Clone)]
pub struct MilpModel {
    pub name: String,
    vars: Vec<Var>,
    constrs: Vec<Constraint>,
    objective: LinExpr,
    obj_sense: ObjSense,
    warm_start: Option<Vec<Option<f64>>>,
}

impl Default for MilpModel {
    fn default() -> Self {
        Self::new("model")
    }
}

impl MilpModel {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            vars: Vec::new(),
            constrs: Vec::new(),
            objective: LinExpr::new(),
            obj_sense: ObjSense::Maximize,
            warm_start: None,
        }
    }

    pub fn add_var(
        &mut self,
        name: impl Into<String>,
        lb: f64,
        ub: f64,
        kind: VarKind,
    ) -> Result<VarId, ModelError> {
        let name = name.into();
        if lb.is_nan() || ub.is_nan() {
            return Err(ModelError::NanBound { name });
        }
        if lb > ub {
            return Err(ModelError::BoundInversion { name, lb, ub });
        }
        if kind == VarKind::Binary && (lb < 0.0 || ub > 1.0) {
            return Err(ModelError::BadBinaryBounds { name, lb, ub });
        }
        self.vars.push(Var { name, lb, ub, kind });
        Ok(VarId(self.vars.len() - 1))
    }

    pub fn add_continuous(&mut self, name: impl Into<String>, lb: f64, ub: f64) -> Result<VarId, ModelError> {
        self.add_var(name, lb, ub, VarKind::Continuous)
    }

    pub fn add_binary(&mut self, name: impl Into<String>) -> Result<VarId, ModelError> {
        self.add_var(name, 0.0, 1.0, VarKind::Binary)
    }

    /// Adds `expr (sense) rhs`. The expression constant is folded into the right-hand side.
    pub fn add_constr(
        &mut self,
        name: impl Into<String>,
        expr: &LinExpr,
        sense: Sense,
        rhs: f64,
    ) -> Result<ConstrId, ModelError> {
        let name = name.into();
        let norm = expr.normalized();
        for &(v, c) in &norm.terms {
            if v.0 >= self.vars.len() {
                return Err(ModelError::UnknownVar(v.0));
            }
            if !c.is_finite() {
                return Err(ModelError::NonFiniteCoef { name });
            }
        }
        if !rhs.is_finite() || !norm.constant.is_finite() {
            return Err(ModelError::NonFiniteCoef { name });
        }
        let rhs = rhs - norm.constant;
        self.constrs.push(Constraint {
            name,
            expr: LinExpr { terms: norm.terms, constant: 0.0 },
            sense,
            rhs,
        });
        Ok(ConstrId(self.constrs.len() - 1))
    }

    pub fn set_objective(&mut self, expr: &LinExpr, sense: ObjSense) -> Result<(), ModelError> {
        let norm = expr.normalized();
        if let Some(&(v, _)) = norm.terms.iter().find(|(v, _)| v.0 >= self.vars.len()) {
            return Err(ModelError::UnknownVar(v.0));
        }
        self.objective = norm;
        self.obj_sense = sense;
        Ok(())
    }

    /// Partial assignment used as a MIP start. Missing entries are left to the backend.
    pub fn set_warm_start(&mut self, values: &[(VarId, f64)]) -> Result<(), ModelError> {
        let mut ws = vec![None; self.vars.len()];
        for &(v, x) in values {
            if v.0 >= self.vars.len() {
                return Err(ModelError::UnknownVar(v.0));
            }
            ws[v.0] = Some(x);
        }
        self.warm_start = Some(ws);
        Ok(())
    }

    pub fn set_full_warm_start(&mut self, values: &[f64]) -> Result<(), ModelError> {
        if values.len() != self.vars.len() {
            return Err(ModelError::WarmStartLength { got: values.len(), expected: self.vars.len() });
        }
        self.warm_start = Some(values.iter().map(|&v| Some(v)).collect());
        Ok(())
    }

    pub fn clear_warm_start(&mut self) {
        self.warm_start = None;
    }

    pub fn warm_start(&self) -> Option<&[Option<f64>]> {
        self.warm_start.as_deref()
    }

    pub fn set_bounds(&mut self, v: VarId, lb: f64, ub: f64) -> Result<(), ModelError> {
        let var = self.vars.get_mut(v.0).ok_or(ModelError::UnknownVar(v.0))?;
        if lb > ub || lb.is_nan() || ub.is_nan() {
            return Err(ModelError::BoundInversion { name: var.name.clone(), lb, ub });
        }
        var.lb = lb;
        var.ub = ub;
        Ok(())
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    pub fn var(&self, v: VarId) -> &Var {
        &self.vars[v.0]
    }

    pub fn constrs(&self) -> &[Constraint] {
        &self.constrs
    }

    pub fn objective(&self) -> &LinExpr {
        &self.objective
    }

    pub fn obj_sense(&self) -> ObjSense {
        self.obj_sense
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_binaries(&self) -> usize {
        self.vars.iter().filter(|v| v.kind == VarKind::Binary).count()
    }

    pub fn num_constrs(&self) -> usize {
        self.constrs.len()
    }

    pub fn find_var(&self, name: &str) -> Option<VarId> {
        self.vars.iter().position(|v| v.name == name).map(VarId)
    }

    /// Checks that every bound is finite; solvers only accept such models.
    pub fn validate_for_solve(&self) -> Result<(), ModelError> {
        match self.vars.iter().find(|v| !v.lb.is_finite() || !v.ub.is_finite()) {
            Some(v) => Err(ModelError::InfiniteBound { name: v.name.clone() }),
            None => Ok(()),
        }
    }

    /// First infeasibility of `values` with absolute tolerance `tol`, if any.
    pub fn check_assignment(&self, values: &[f64], tol: f64) -> Option<Infeasibility> {
        for (v, &x) in self.vars.iter().zip(values) {
            if x < v.lb - tol || x > v.ub + tol || x.is_nan() {
                return Some(Infeasibility::Bound { var: v.name.clone(), value: x });
            }
            if v.kind == VarKind::Binary && (x - x.round()).abs() > tol {
                return Some(Infeasibility::Integrality { var: v.name.clone(), value: x });
            }
        }
        self.constrs.iter().find_map(|c| {
            let viol = c.violation(values);
            (viol > tol).then(|| Infeasibility::Constraint { name: c.name.clone(), violation: viol })
        })
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective.eval(values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_inverted_bounds() {
        let mut m = MilpModel::new("t");
        assert!(matches!(
            m.add_continuous("x", 1.0, 0.0),
            Err(ModelError::BoundInversion { .. })
        ));
        assert!(m.add_var("b", -1.0, 1.0, VarKind::Binary).is_err());
    }

    #[test]
    fn constant_moves_to_rhs_and_terms_merge() {
        let mut m = MilpModel::new("t");
        let x = m.add_continuous("x", 0.0, 1.0).unwrap();
        let mut e = LinExpr::var(x);
        e.add_term(x, 2.0).add_constant(1.0);
        let c = m.add_constr("c", &e, Sense::Le, 4.0).unwrap();
        let con = &m.constrs()[c.0];
        assert_eq!(con.expr.terms, vec![(x, 3.0)]);
        assert_eq!(con.rhs, 3.0);
    }

    #[test]
    fn unknown_var_rejected() {
        let mut m = MilpModel::new("t");
        let e = LinExpr::var(VarId(3));
        assert_eq!(m.add_constr("c", &e, Sense::Le, 0.0), Err(ModelError::UnknownVar(3)));
    }

    #[test]
    fn infinite_bounds_fail_validation() {
        let mut m = MilpModel::new("t");
        m.add_continuous("x", f64::NEG_INFINITY, 0.0).unwrap();
        assert!(matches!(m.validate_for_solve(), Err(ModelError::InfiniteBound { .. })));
    }

    #[test]
    fn assignment_check_reports_violations() {
        let mut m = MilpModel::new("t");
        let x = m.add_continuous("x", 0.0, 2.0).unwrap();
        let b = m.add_binary("b").unwrap();
        let mut e = LinExpr::var(x);
        e.add_term(b, -2.0);
        m.add_constr("link", &e, Sense::Le, 0.0).unwrap();
        assert_eq!(m.check_assignment(&[1.0, 1.0], 1e-9), None);
        assert!(matches!(m.check_assignment(&[1.0, 0.0], 1e-9), Some(Infeasibility::Constraint { .. })));
        assert!(matches!(m.check_assignment(&[1.0, 0.5], 1e-9), Some(Infeasibility::Integrality { .. })));
    }
}
