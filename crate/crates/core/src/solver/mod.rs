//! Dense LP / SOCP solver shared by the power-allocation and surface-design
//! subproblems. LPs are handled as cone programs without second-order blocks.

mod cone;
mod ipm;
mod kkt;
mod problem;

pub use cone::{ConeDims, NtScaling};
pub use ipm::SolverOptions;
pub use kkt::{check_kkt, KktResiduals};
pub use problem::{ConeProblem, SocBlock, StandardForm};

use crate::error::{Error, Result};

/// Residual level a solution must reach under [`check_kkt`] to be reported as
/// optimal.
pub const KKT_ACCEPT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

/// Multipliers grouped like the constraints of [`ConeProblem`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Duals {
    pub eq: Vec<f64>,
    pub ineq: Vec<f64>,
    /// One entry per variable; zero where no bound is set.
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub soc: Vec<Vec<f64>>,
    lower_idx: Vec<usize>,
    upper_idx: Vec<usize>,
}

impl Duals {
    /// Inequality multipliers in standard-form row order.
    pub fn stacked(&self) -> Vec<f64> {
        let mut z = self.ineq.clone();
        z.extend(self.lower_idx.iter().map(|&i| self.lower[i]));
        z.extend(self.upper_idx.iter().map(|&i| self.upper[i]));
        for b in &self.soc {
            z.extend_from_slice(b);
        }
        z
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub status: Status,
    pub x: Vec<f64>,
    pub duals: Duals,
    pub objective: f64,
    /// `-b'y - h'z`; a lower bound on `objective` at feasible points.
    pub dual_objective: f64,
    pub residuals: KktResiduals,
    pub iterations: usize,
}

impl Solution {
    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }
}

/// Solve with default options.
pub fn solve(p: &ConeProblem) -> Result<Solution> {
    solve_with(p, &SolverOptions::default())
}

/// Linear program entry point; rejects problems carrying cone blocks.
pub fn solve_lp(p: &ConeProblem) -> Result<Solution> {
    if !p.soc.is_empty() {
        return Err(Error::InvalidParams("linear program with cone blocks".into()));
    }
    solve(p)
}

pub fn solve_socp(p: &ConeProblem) -> Result<Solution> {
    solve(p)
}

/// Validate, solve and repackage. Only structural errors are returned as `Err`;
/// infeasibility and stalls are reported through [`Solution::status`].
pub fn solve_with(p: &ConeProblem, opts: &SolverOptions) -> Result<Solution> {
    p.check()?;
    let sf = p.standard_form();
    let raw = ipm::solve_standard(&sf, opts);

    let lower_idx: Vec<usize> = (0..p.num_vars()).filter(|&i| p.lower[i].is_some()).collect();
    let upper_idx: Vec<usize> = (0..p.num_vars()).filter(|&i| p.upper[i].is_some()).collect();
    let mut it = raw.z.iter().copied();
    let ineq: Vec<f64> = it.by_ref().take(p.ineq_rows.len()).collect();
    let mut lower = vec![0.0; p.num_vars()];
    for &i in &lower_idx {
        lower[i] = it.next().unwrap_or(0.0);
    }
    let mut upper = vec![0.0; p.num_vars()];
    for &i in &upper_idx {
        upper[i] = it.next().unwrap_or(0.0);
    }
    let soc = p
        .soc
        .iter()
        .map(|b| it.by_ref().take(b.dim()).collect())
        .collect();
    let duals = Duals {
        eq: raw.y.clone(),
        ineq,
        lower,
        upper,
        soc,
        lower_idx,
        upper_idx,
    };
    let objective = cone::dot(&sf.c, &raw.x);
    let dual_objective = -cone::dot(&sf.b, &raw.y) - cone::dot(&sf.h, &raw.z);
    let mut sol = Solution {
        status: raw.status,
        x: raw.x,
        duals,
        objective,
        dual_objective,
        residuals: KktResiduals::default(),
        iterations: raw.iterations,
    };
    sol.residuals = check_kkt(p, &sol);
    if sol.status == Status::Optimal && sol.residuals.max() > KKT_ACCEPT_TOL {
        log::debug!(
            "solver converged internally but residuals {:?} exceed {KKT_ACCEPT_TOL:e}",
            sol.residuals
        );
        sol.status = Status::IterationLimit;
    }
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn lp(obj: Vec<f64>) -> ConeProblem {
        let mut p = ConeProblem::new(obj.len());
        p.objective = obj;
        p
    }

    fn disk(n: usize) -> SocBlock {
        SocBlock {
            a: (0..n)
                .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                .collect(),
            b: vec![0.0; n],
            c: vec![0.0; n],
            d: 1.0,
        }
    }

    #[test]
    fn lower_bound_only() {
        let mut p = lp(vec![1.0]);
        p.add_ge(vec![1.0], 3.0);
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, Status::Optimal);
        assert_abs_diff_eq!(s.x[0], 3.0, epsilon = 1e-8);
        assert!(s.residuals.max() < 1e-8, "{:?}", s.residuals);
    }

    #[test]
    fn two_variable_lp() {
        let mut p = lp(vec![1.0, 1.0]);
        p.add_ge(vec![1.0, 2.0], 4.0);
        p.set_bounds(0, Some(0.0), None).set_bounds(1, Some(0.0), None);
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, Status::Optimal);
        assert_abs_diff_eq!(s.x[0], 0.0, epsilon = 1e-8);
        assert_abs_diff_eq!(s.x[1], 2.0, epsilon = 1e-8);
        assert_abs_diff_eq!(s.objective, 2.0, epsilon = 1e-8);
        assert!(s.dual_objective <= s.objective + 1e-9);
        assert!(s.residuals.max() < 1e-8);

        // Moving off the optimum into the infeasible side shows up as a
        // primal residual of the same size.
        let mut bad = s.clone();
        bad.x[1] -= 0.1;
        let r = check_kkt(&p, &bad);
        assert!(r.primal >= 0.1 / 5f64.sqrt() * 0.99, "{r:?}");
    }

    #[test]
    fn contradictory_bounds_are_infeasible() {
        let mut p = lp(vec![1.0]);
        p.add_le(vec![1.0], 0.0);
        p.add_ge(vec![1.0], 1.0);
        assert_eq!(solve_lp(&p).unwrap().status, Status::Infeasible);
        let mut q = lp(vec![0.0]);
        q.add_le(vec![1.0], 0.0);
        q.add_ge(vec![1.0], 1.0);
        assert_eq!(solve_lp(&q).unwrap().status, Status::Infeasible);
    }

    #[test]
    fn unbounded_lp_is_detected() {
        let mut p = lp(vec![-1.0]);
        p.set_bounds(0, Some(0.0), None);
        assert_eq!(solve_lp(&p).unwrap().status, Status::Unbounded);
    }

    #[test]
    fn unit_disk_maximum() {
        let mut p = lp(vec![-1.0]);
        p.add_soc(SocBlock {
            a: vec![vec![1.0], vec![0.0]],
            b: vec![0.0, 0.0],
            c: vec![0.0],
            d: 1.0,
        });
        let s = solve_socp(&p).unwrap();
        assert_eq!(s.status, Status::Optimal);
        assert_abs_diff_eq!(s.x[0], 1.0, epsilon = 1e-7);

        let mut q = lp(vec![-1.0, -1.0]);
        q.add_soc(disk(2));
        let s = solve_socp(&q).unwrap();
        assert_eq!(s.status, Status::Optimal);
        let h = 0.5f64.sqrt();
        assert_abs_diff_eq!(s.x[0], h, epsilon = 1e-7);
        assert_abs_diff_eq!(s.x[1], h, epsilon = 1e-7);
        // Hand KKT: z = (sqrt 2, 1, 1) up to sign convention of the tail.
        let z = &s.duals.soc[0];
        assert_abs_diff_eq!(z[0], 2f64.sqrt(), epsilon = 1e-6);
        assert!(s.residuals.complementarity < 1e-7);
        assert!(s.dual_objective <= s.objective + 1e-9);

        let mut bad = s.clone();
        bad.x[0] += 0.1;
        assert!(check_kkt(&q, &bad).primal > 0.05);
    }

    #[test]
    fn scaled_objective_keeps_argmin() {
        let mut p = lp(vec![-1.0, -2.0]);
        p.add_soc(disk(2));
        p.add_le(vec![1.0, 1.0], 1.2);
        let a = solve(&p).unwrap();
        p.objective.iter_mut().for_each(|v| *v *= 10.0);
        let b = solve(&p).unwrap();
        for (u, v) in a.x.iter().zip(&b.x) {
            assert_abs_diff_eq!(u, v, epsilon = 1e-6);
        }
    }

    #[test]
    fn infeasible_cone_intersection() {
        // Unit disk and x >= 2 do not meet.
        let mut p = lp(vec![1.0, 0.0]);
        p.add_soc(disk(2));
        p.add_ge(vec![1.0, 0.0], 2.0);
        assert_eq!(solve_socp(&p).unwrap().status, Status::Infeasible);
    }

    #[test]
    fn equality_constrained() {
        // min x^2-free LP with equality: min x + y, x + y = 3, x - y <= 1, y <= 5, x >= 0.
        let mut p = lp(vec![1.0, 2.0]);
        p.add_eq(vec![1.0, 1.0], 3.0);
        p.add_le(vec![1.0, -1.0], 1.0);
        p.set_bounds(0, Some(0.0), None).set_bounds(1, None, Some(5.0));
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, Status::Optimal);
        assert_abs_diff_eq!(s.x[0], 2.0, epsilon = 1e-8);
        assert_abs_diff_eq!(s.x[1], 1.0, epsilon = 1e-8);
    }
}
