use std::fmt::Write as _;

use super::cone::ConeDims;
use crate::error::{Error, Result};

/// `|| a x + b ||_2 <= c . x + d`, with `a` given row by row.
#[derive(Debug, Clone, PartialEq)]
pub struct SocBlock {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub d: f64,
}

impl SocBlock {
    /// Cone dimension, counting the head.
    pub fn dim(&self) -> usize {
        self.a.len() + 1
    }
}

/// `minimize c . x` over linear, bound and second-order-cone constraints.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConeProblem {
    pub objective: Vec<f64>,
    pub eq_rows: Vec<Vec<f64>>,
    pub eq_rhs: Vec<f64>,
    /// `row . x <= rhs`.
    pub ineq_rows: Vec<Vec<f64>>,
    pub ineq_rhs: Vec<f64>,
    pub soc: Vec<SocBlock>,
    pub lower: Vec<Option<f64>>,
    pub upper: Vec<Option<f64>>,
}

impl ConeProblem {
    pub fn new(num_vars: usize) -> Self {
        Self {
            objective: vec![0.0; num_vars],
            lower: vec![None; num_vars],
            upper: vec![None; num_vars],
            ..Default::default()
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_eq(&mut self, row: Vec<f64>, rhs: f64) -> &mut Self {
        self.eq_rows.push(row);
        self.eq_rhs.push(rhs);
        self
    }

    pub fn add_le(&mut self, row: Vec<f64>, rhs: f64) -> &mut Self {
        self.ineq_rows.push(row);
        self.ineq_rhs.push(rhs);
        self
    }

    /// `row . x >= rhs`, stored negated.
    pub fn add_ge(&mut self, row: Vec<f64>, rhs: f64) -> &mut Self {
        self.add_le(row.into_iter().map(|v| -v).collect(), -rhs)
    }

    pub fn add_soc(&mut self, block: SocBlock) -> &mut Self {
        self.soc.push(block);
        self
    }

    pub fn set_bounds(&mut self, var: usize, lower: Option<f64>, upper: Option<f64>) -> &mut Self {
        self.lower[var] = lower;
        self.upper[var] = upper;
        self
    }

    pub fn check(&self) -> Result<()> {
        let n = self.num_vars();
        let bad = |m: String| Err(Error::InvalidParams(m));
        if self.lower.len() != n || self.upper.len() != n {
            return bad("bound vectors do not match the variable count".into());
        }
        if self.eq_rows.len() != self.eq_rhs.len() || self.ineq_rows.len() != self.ineq_rhs.len() {
            return bad("row and right-hand-side counts differ".into());
        }
        if self.eq_rows.iter().chain(&self.ineq_rows).any(|r| r.len() != n) {
            return bad("constraint row of wrong width".into());
        }
        for (i, b) in self.soc.iter().enumerate() {
            if b.a.is_empty() {
                return bad(format!("cone block {i} has dimension < 2"));
            }
            if b.a.len() != b.b.len() || b.c.len() != n || b.a.iter().any(|r| r.len() != n) {
                return bad(format!("cone block {i} has inconsistent dimensions"));
            }
        }
        for (i, (lo, up)) in self.lower.iter().zip(&self.upper).enumerate() {
            if let (Some(l), Some(u)) = (lo, up) {
                if l > u {
                    return bad(format!("variable {i} has empty bounds [{l}, {u}]"));
                }
            }
        }
        let finite = self
            .objective
            .iter()
            .chain(self.eq_rhs.iter())
            .chain(self.ineq_rhs.iter())
            .chain(self.eq_rows.iter().flatten())
            .chain(self.ineq_rows.iter().flatten())
            .all(|v| v.is_finite());
        if !finite {
            return bad("non-finite problem data".into());
        }
        Ok(())
    }

    /// Lower to `G x + s = h, A x = b, s in K`.
    ///
    /// Row order of `G`: inequalities, lower bounds, upper bounds, cone blocks.
    pub fn standard_form(&self) -> StandardForm {
        let n = self.num_vars();
        let mut g = Vec::new();
        let mut h = Vec::new();
        for (row, rhs) in self.ineq_rows.iter().zip(&self.ineq_rhs) {
            g.push(row.clone());
            h.push(*rhs);
        }
        for (i, lo) in self.lower.iter().enumerate() {
            if let Some(l) = lo {
                let mut row = vec![0.0; n];
                row[i] = -1.0;
                g.push(row);
                h.push(-l);
            }
        }
        for (i, up) in self.upper.iter().enumerate() {
            if let Some(u) = up {
                let mut row = vec![0.0; n];
                row[i] = 1.0;
                g.push(row);
                h.push(*u);
            }
        }
        let nonneg = g.len();
        for blk in &self.soc {
            g.push(blk.c.iter().map(|v| -v).collect());
            h.push(blk.d);
            for (row, off) in blk.a.iter().zip(&blk.b) {
                g.push(row.iter().map(|v| -v).collect());
                h.push(*off);
            }
        }
        StandardForm {
            c: self.objective.clone(),
            g,
            h,
            a: self.eq_rows.clone(),
            b: self.eq_rhs.clone(),
            dims: ConeDims {
                nonneg,
                soc: self.soc.iter().map(SocBlock::dim).collect(),
            },
        }
    }

    /// Plain-text dump for offline inspection.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let row = |v: &[f64]| v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(" ");
        let _ = writeln!(out, "vars {}", self.num_vars());
        let _ = writeln!(out, "min {}", row(&self.objective));
        for (r, b) in self.eq_rows.iter().zip(&self.eq_rhs) {
            let _ = writeln!(out, "eq {} = {b:e}", row(r));
        }
        for (r, b) in self.ineq_rows.iter().zip(&self.ineq_rhs) {
            let _ = writeln!(out, "le {} <= {b:e}", row(r));
        }
        for (i, (l, u)) in self.lower.iter().zip(&self.upper).enumerate() {
            if l.is_some() || u.is_some() {
                let f = |b: &Option<f64>| b.map_or("-".to_string(), |v| format!("{v:e}"));
                let _ = writeln!(out, "bound {i} {} {}", f(l), f(u));
            }
        }
        for blk in &self.soc {
            let _ = writeln!(out, "soc {} head {} + {:e}", blk.dim(), row(&blk.c), blk.d);
            for (r, b) in blk.a.iter().zip(&blk.b) {
                let _ = writeln!(out, "  {} + {b:e}", row(r));
            }
        }
        out
    }
}

/// Canonical data consumed by the interior-point method.
#[derive(Debug, Clone)]
pub struct StandardForm {
    pub c: Vec<f64>,
    pub g: Vec<Vec<f64>>,
    pub h: Vec<f64>,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub dims: ConeDims,
}
