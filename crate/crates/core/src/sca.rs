//! First-order models of `|C[k][m](theta)|^2` used by both surface designs.
//!
//! With `C~` the response at the expansion point,
//! `|C|^2 >= 2 Re(conj(C~) C(theta)) - |C~|^2`, with equality at the expansion
//! point. The right-hand side is affine in `(Re theta, Im theta)`.

use num_complex::Complex64;

use crate::channel::{ChannelSet, IrsVector};

/// Expansion points and slack values of one convexification step.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaWorkspace {
    pub devices: usize,
    pub subbands: usize,
    /// `Re C` at the expansion point, `k * M + m`.
    pub a: Vec<f64>,
    /// `Im C` at the expansion point.
    pub b: Vec<f64>,
    /// Per-device slack of the last solved subproblem.
    pub slack: Vec<f64>,
    /// Linearized squared magnitudes at the last solution.
    pub y: Vec<f64>,
}

/// `y(theta) = constant + coef_re . Re(theta) + coef_im . Im(theta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub constant: f64,
    pub coef_re: Vec<f64>,
    pub coef_im: Vec<f64>,
}

impl LinearModel {
    pub fn eval(&self, theta: &IrsVector) -> f64 {
        self.constant
            + theta
                .as_slice()
                .iter()
                .zip(self.coef_re.iter().zip(&self.coef_im))
                .map(|(t, (cr, ci))| cr * t.re + ci * t.im)
                .sum::<f64>()
    }

    /// `self += w * other`.
    pub fn add_scaled(&mut self, w: f64, other: &LinearModel) {
        self.constant += w * other.constant;
        for (a, b) in self.coef_re.iter_mut().zip(&other.coef_re) {
            *a += w * b;
        }
        for (a, b) in self.coef_im.iter_mut().zip(&other.coef_im) {
            *a += w * b;
        }
    }

    pub fn zero(n: usize) -> Self {
        Self {
            constant: 0.0,
            coef_re: vec![0.0; n],
            coef_im: vec![0.0; n],
        }
    }
}

impl ScaWorkspace {
    /// Expand every response around `theta`.
    pub fn expand(ch: &ChannelSet, theta: &IrsVector) -> Self {
        let (kk, mm) = (ch.devices(), ch.subbands());
        let mut a = Vec::with_capacity(kk * mm);
        let mut b = Vec::with_capacity(kk * mm);
        for k in 0..kk {
            for m in 0..mm {
                let c = ch.cfr_unchecked(k, m, theta);
                a.push(c.re);
                b.push(c.im);
            }
        }
        let y = a.iter().zip(&b).map(|(x, y)| x * x + y * y).collect();
        Self {
            devices: kk,
            subbands: mm,
            a,
            b,
            slack: vec![0.0; kk],
            y,
        }
    }

    fn point(&self, k: usize, m: usize) -> Complex64 {
        let i = k * self.subbands + m;
        Complex64::new(self.a[i], self.b[i])
    }

    /// Squared magnitude at the expansion point.
    pub fn expansion_gain(&self, k: usize, m: usize) -> f64 {
        self.point(k, m).norm_sqr()
    }

    pub fn linear_model(&self, ch: &ChannelSet, k: usize, m: usize) -> LinearModel {
        let c0 = self.point(k, m).conj();
        let w: Vec<Complex64> = ch.reflect_row(k, m).iter().map(|r| c0 * r).collect();
        LinearModel {
            constant: 2.0 * (c0 * ch.direct_cfr(k, m)).re - c0.norm_sqr(),
            coef_re: w.iter().map(|v| 2.0 * v.re).collect(),
            coef_im: w.iter().map(|v| -2.0 * v.im).collect(),
        }
    }

    /// Model value at `theta`; a lower bound on `|C[k][m](theta)|^2`.
    pub fn evaluate(&self, ch: &ChannelSet, k: usize, m: usize, theta: &IrsVector) -> f64 {
        // Evaluate through the response directly so the result does not
        // share the coefficient assembly with `linear_model`.
        let c0 = self.point(k, m);
        let c = ch.cfr_unchecked(k, m, theta);
        2.0 * (c0.re * c.re + c0.im * c.im) - c0.norm_sqr()
    }

    /// Largest relative mismatch between model and true gain at the
    /// expansion point `theta` (zero in exact arithmetic).
    pub fn model_gap(&self, ch: &ChannelSet, theta: &IrsVector) -> f64 {
        let mut worst = 0.0f64;
        for k in 0..self.devices {
            for m in 0..self.subbands {
                let lin = self.linear_model(ch, k, m).eval(theta);
                let truth = ch.gain(k, m, theta);
                worst = worst.max((lin - truth).abs() / truth.max(f64::MIN_POSITIVE));
            }
        }
        worst
    }
}

/// Unit-disk cone rows for `|theta_n| <= 1` with variables laid out as
/// `[Re theta (N), Im theta (N), ...]`.
pub(crate) fn unit_disk_blocks(n_elem: usize, num_vars: usize) -> Vec<crate::solver::SocBlock> {
    (0..n_elem)
        .map(|n| {
            let mut re = vec![0.0; num_vars];
            re[n] = 1.0;
            let mut im = vec![0.0; num_vars];
            im[n_elem + n] = 1.0;
            crate::solver::SocBlock {
                a: vec![re, im],
                b: vec![0.0, 0.0],
                c: vec![0.0; num_vars],
                d: 1.0,
            }
        })
        .collect()
}

/// Read `theta` back from the first `2N` solver variables.
pub(crate) fn theta_from(x: &[f64], n_elem: usize) -> IrsVector {
    IrsVector::projected(
        (0..n_elem)
            .map(|n| Complex64::new(x[n], x[n_elem + n]))
            .collect(),
    )
}

/// Relative change with a guarded denominator.
pub(crate) fn rel_change(prev: f64, next: f64) -> f64 {
    (next - prev).abs() / next.abs().max(1e-12)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScaStop {
    /// Nothing to optimize (no elements or no active constraint).
    Trivial,
    Converged,
    IterationLimit,
    /// A subproblem was not solved to optimality; the last accepted iterate
    /// is returned.
    SolverFailure,
}

/// Record of one successive-approximation run.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaOutcome {
    pub theta: IrsVector,
    /// Subproblem optimum (sum of slacks) per accepted iteration.
    pub objective: Vec<f64>,
    /// `max_n |theta_n|` of every solver iterate, before projection.
    pub moduli: Vec<f64>,
    /// Model/true mismatch at each expansion point.
    pub model_gaps: Vec<f64>,
    pub stop: ScaStop,
}

impl ScaOutcome {
    pub fn trivial(theta: IrsVector) -> Self {
        Self {
            theta,
            objective: Vec::new(),
            moduli: Vec::new(),
            model_gaps: Vec::new(),
            stop: ScaStop::Trivial,
        }
    }
}

/// Result of a single convexified subproblem.
pub(crate) struct ScaStep {
    pub theta: IrsVector,
    pub objective: f64,
    pub raw_modulus: f64,
    pub model_gap: f64,
}

/// Drive `step` from `theta` until the subproblem optimum settles.
///
/// `step` returns `None` when the subproblem was not solved to optimality. An
/// optimum that falls below the previous one by more than the relative
/// margin `slip` (solver noise) ends the run at the previous iterate.
pub(crate) fn run_sca(
    theta: IrsVector,
    eps: f64,
    t_max: usize,
    slip: f64,
    mut step: impl FnMut(&IrsVector) -> Option<ScaStep>,
) -> ScaOutcome {
    let mut out = ScaOutcome::trivial(theta);
    out.stop = ScaStop::IterationLimit;
    let mut prev: Option<f64> = None;
    for _ in 0..t_max {
        let Some(s) = step(&out.theta) else {
            out.stop = ScaStop::SolverFailure;
            break;
        };
        out.moduli.push(s.raw_modulus);
        out.model_gaps.push(s.model_gap);
        if let Some(p) = prev {
            if s.objective < p - slip * p.abs() {
                log::debug!("sca: subproblem optimum slipped {p:e} -> {:e}", s.objective);
                out.stop = ScaStop::Converged;
                break;
            }
        }
        out.theta = s.theta;
        out.objective.push(s.objective);
        let done = prev.is_some_and(|p| rel_change(p, s.objective) <= eps);
        prev = Some(s.objective);
        if done {
            out.stop = ScaStop::Converged;
            break;
        }
    }
    out
}
