//! CPLEX-style LP file export.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use crate::model::{LinExpr, MilpModel, ObjSense, Sense, VarKind};

fn clean(name: &str) -> String {
    name.chars().map(|c| if c.is_whitespace() || c == ':' { '_' } else { c }).collect()
}

fn write_terms(out: &mut String, m: &MilpModel, e: &LinExpr) {
    if e.terms.is_empty() {
        out.push_str(" 0");
        return;
    }
    for (k, &(v, c)) in e.terms.iter().enumerate() {
        let name = clean(&m.var(v).name);
        if k == 0 && c >= 0.0 {
            let _ = write!(out, " {c} {name}");
        } else {
            let sign = if c < 0.0 { "-" } else { "+" };
            let _ = write!(out, " {sign} {} {name}", c.abs());
        }
    }
}

fn num(x: f64) -> String {
    if x == f64::INFINITY {
        "+inf".into()
    } else if x == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{x}")
    }
}

pub fn to_lp_string(m: &MilpModel) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "\\ {}", m.name);
    out.push_str(match m.obj_sense() {
        ObjSense::Maximize => "Maximize\n obj:",
        ObjSense::Minimize => "Minimize\n obj:",
    });
    write_terms(&mut out, m, m.objective());
    out.push_str("\nSubject To\n");
    for (i, c) in m.constrs().iter().enumerate() {
        let name = if c.name.is_empty() { format!("c{i}") } else { clean(&c.name) };
        let _ = write!(out, " {name}:");
        write_terms(&mut out, m, &c.expr);
        let op = match c.sense {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        };
        let _ = writeln!(out, " {op} {}", c.rhs);
    }
    out.push_str("Bounds\n");
    for v in m.vars().iter().filter(|v| v.kind == VarKind::Continuous) {
        let _ = writeln!(out, " {} <= {} <= {}", num(v.lb), clean(&v.name), num(v.ub));
    }
    let bins: Vec<_> = m.vars().iter().filter(|v| v.kind == VarKind::Binary).collect();
    if !bins.is_empty() {
        out.push_str("Binaries\n");
        for v in bins {
            let _ = writeln!(out, " {}", clean(&v.name));
        }
    }
    out.push_str("End\n");
    out
}

pub fn write_lp(m: &MilpModel, path: &Path) -> io::Result<()> {
    std::fs::write(path, to_lp_string(m))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exports_sections_and_names() {
        let mut m = MilpModel::new("demo");
        let x = m.add_continuous("x[0]", -1.0, 2.0).unwrap();
        let b = m.add_binary("bin_w[0]").unwrap();
        let mut e = LinExpr::var(x);
        e.add_term(b, -3.0);
        m.add_constr("link", &e, Sense::Le, 0.5).unwrap();
        m.set_objective(&LinExpr::var(x), ObjSense::Maximize).unwrap();
        let s = to_lp_string(&m);
        assert!(s.contains("Maximize\n obj: 1 x[0]"));
        assert!(s.contains(" link: 1 x[0] - 3 bin_w[0] <= 0.5"));
        assert!(s.contains(" -1 <= x[0] <= 2"));
        assert!(s.contains("Binaries\n bin_w[0]\nEnd"));
    }
}
