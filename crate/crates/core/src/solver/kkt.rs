use super::cone::{dot, norm};
use super::problem::ConeProblem;
use super::Solution;

/// Scale-free optimality residuals of a primal-dual pair.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KktResiduals {
    /// `||c + A'y + G'z||_inf`, plus any dual-cone violation, over `||c||_inf`.
    pub stationarity: f64,
    /// Worst constraint violation, each row measured against its own scale.
    pub primal: f64,
    /// `|s'z|` over the objective scale `||c||_inf max(1, ||x||_inf)`.
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.primal).max(self.complementarity)
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Recompute the residuals from the problem data, independently of the solver
/// internals: slacks are rebuilt as `h - Gx`.
pub fn check_kkt(p: &ConeProblem, sol: &Solution) -> KktResiduals {
    let sf = p.standard_form();
    let x = &sol.x;
    let z = sol.duals.stacked();
    let y = &sol.duals.eq;
    let n = p.num_vars();
    let c_scale = match inf_norm(&sf.c) {
        v if v > 0.0 => v,
        _ => 1.0,
    };

    let s: Vec<f64> = sf.g.iter().zip(&sf.h).map(|(r, h)| h - dot(r, x)).collect();
    let row_scale = |r: &[f64], rhs: f64| {
        let v = norm(r).max(rhs.abs());
        if v > 0.0 {
            v
        } else {
            1.0
        }
    };

    let mut primal = 0.0f64;
    for (r, b) in sf.a.iter().zip(&sf.b) {
        primal = primal.max((dot(r, x) - b).abs() / row_scale(r, *b));
    }
    let l = sf.dims.nonneg;
    for i in 0..l {
        primal = primal.max((-s[i]).max(0.0) / row_scale(&sf.g[i], sf.h[i]));
    }
    // Cone blocks share one scale, as in the solver.
    let block_scale = |off: usize, q: usize| {
        (off..off + q)
            .map(|i| row_scale(&sf.g[i], sf.h[i]))
            .fold(0.0, f64::max)
    };
    for (off, q) in sf.dims.soc_ranges() {
        let viol = norm(&s[off + 1..off + q]) - s[off];
        primal = primal.max(viol.max(0.0) / block_scale(off, q));
    }

    let mut grad = sf.c.clone();
    for (r, zi) in sf.g.iter().zip(&z) {
        for j in 0..n {
            grad[j] += r[j] * zi;
        }
    }
    for (r, yi) in sf.a.iter().zip(y) {
        for j in 0..n {
            grad[j] += r[j] * yi;
        }
    }
    let mut stationarity = inf_norm(&grad) / c_scale;
    for i in 0..l {
        let zn = z[i] * row_scale(&sf.g[i], sf.h[i]) / c_scale;
        stationarity = stationarity.max((-zn).max(0.0));
    }
    for (off, q) in sf.dims.soc_ranges() {
        let viol = norm(&z[off + 1..off + q]) - z[off];
        stationarity = stationarity.max(viol.max(0.0) * block_scale(off, q) / c_scale);
    }

    let complementarity = dot(&s, &z).abs() / (c_scale * inf_norm(x).max(1.0));
    KktResiduals {
        stationarity,
        primal,
        complementarity,
    }
}
