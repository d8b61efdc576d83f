//! Primal-dual path-following method for `min c'x : Gx + s = h, Ax = b, s in K`.
//!
//! Mehrotra predictor-corrector with Nesterov-Todd scaling, started from the
//! least-norm primal/dual points shifted into the cone. The method is not a
//! self-dual embedding; infeasibility is reported in two ways:
//!
//! * every iterate is tested as an approximate Farkas certificate
//!   (`G'z + A'y ~ 0, h'z + b'y < 0` or `Gx + s ~ 0, Ax ~ 0, c'x < 0`), which is
//!   where the iterates drift when the primal or dual diverges;
//! * if the method stalls without converging, a phase-one problem
//!   `min t : Gx + s = h + t e, Ax = b, t >= -1` decides whether the
//!   constraint set is empty.

use nalgebra::{DMatrix, DVector};

use super::cone::{dot, norm, ConeDims, NtScaling};
use super::problem::StandardForm;
use super::Status;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub max_iter: usize,
    /// Relative primal/dual residual target.
    pub feastol: f64,
    /// Absolute duality-gap target (objective normalized to unit max-norm).
    pub abstol: f64,
    /// Relative duality-gap target.
    pub reltol: f64,
    /// Fraction of the distance to the cone boundary taken per step.
    pub step: f64,
    /// Phase-one optimum above which the constraints are declared empty.
    pub infeas_margin: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            feastol: 1e-9,
            abstol: 1e-10,
            reltol: 1e-9,
            step: 0.99,
            infeas_margin: 1e-7,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct RawResult {
    pub status: Status,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub s: Vec<f64>,
    pub iterations: usize,
}

/// Row-equilibrated copy of the problem plus the factors needed to undo it.
struct Scaled {
    c: DVector<f64>,
    g: DMatrix<f64>,
    h: DVector<f64>,
    a: DMatrix<f64>,
    b: DVector<f64>,
    dims: ConeDims,
    g_scale: Vec<f64>,
    a_scale: Vec<f64>,
    c_scale: f64,
}

fn row_norm(r: &[f64]) -> f64 {
    norm(r)
}

fn inv_or_one(v: f64) -> f64 {
    if v > 0.0 && v.is_finite() {
        1.0 / v
    } else {
        1.0
    }
}

impl Scaled {
    fn new(sf: &StandardForm) -> Self {
        let n = sf.c.len();
        let m = sf.h.len();
        let p = sf.b.len();
        let mut g_scale = vec![1.0; m];
        for i in 0..sf.dims.nonneg {
            g_scale[i] = inv_or_one(row_norm(&sf.g[i]));
        }
        // A cone block must be scaled as a whole.
        for (off, q) in sf.dims.soc_ranges() {
            let big = (off..off + q).map(|i| row_norm(&sf.g[i])).fold(0.0, f64::max);
            g_scale[off..off + q].fill(inv_or_one(big));
        }
        let a_scale: Vec<f64> = sf.a.iter().map(|r| inv_or_one(row_norm(r))).collect();
        let c_scale = sf.c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let c_scale = if c_scale > 0.0 { c_scale } else { 1.0 };

        let g = DMatrix::from_fn(m, n, |i, j| sf.g[i][j] * g_scale[i]);
        let h = DVector::from_fn(m, |i, _| sf.h[i] * g_scale[i]);
        let a = DMatrix::from_fn(p, n, |i, j| sf.a[i][j] * a_scale[i]);
        let b = DVector::from_fn(p, |i, _| sf.b[i] * a_scale[i]);
        let c = DVector::from_fn(n, |i, _| sf.c[i] / c_scale);
        Self {
            c,
            g,
            h,
            a,
            b,
            dims: sf.dims.clone(),
            g_scale,
            a_scale,
            c_scale,
        }
    }

    fn unscale(&self, mut r: RawResult) -> RawResult {
        for (i, d) in self.g_scale.iter().enumerate() {
            r.z[i] *= d * self.c_scale;
            r.s[i] /= d;
        }
        for (i, d) in self.a_scale.iter().enumerate() {
            r.y[i] *= d * self.c_scale;
        }
        r
    }
}

/// Reduced KKT matrix `[G'W^-2 G, A'; A, 0]`, factored once per iteration.
struct Kkt {
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    mat: DMatrix<f64>,
    n: usize,
}

impl Kkt {
    fn new(ghat: &DMatrix<f64>, a: &DMatrix<f64>) -> Option<Self> {
        let n = ghat.ncols();
        let p = a.nrows();
        let hess = ghat.tr_mul(ghat);
        let mut mat = DMatrix::zeros(n + p, n + p);
        mat.view_mut((0, 0), (n, n)).copy_from(&hess);
        mat.view_mut((n, 0), (p, n)).copy_from(a);
        mat.view_mut((0, n), (n, p)).copy_from(&a.transpose());
        let diag_max = (0..n).map(|i| hess[(i, i)].abs()).fold(1e-300, f64::max);
        for attempt in 0..4 {
            let mut m = mat.clone();
            if attempt > 0 {
                // Tikhonov regularization, growing until the factorization holds.
                let reg = diag_max * 10f64.powi(-14 + 3 * attempt);
                for i in 0..n {
                    m[(i, i)] += reg;
                }
                for i in n..n + p {
                    m[(i, i)] -= reg;
                }
            }
            let lu = m.clone().lu();
            let probe = lu.solve(&DVector::from_element(n + p, 1.0));
            if probe.is_some_and(|v| v.iter().all(|x| x.is_finite())) {
                return Some(Self { lu, mat: m, n });
            }
        }
        None
    }

    /// Solve with one step of iterative refinement.
    fn solve(&self, rhs: &DVector<f64>) -> Option<(DVector<f64>, DVector<f64>)> {
        let mut sol = self.lu.solve(rhs)?;
        let resid = rhs - &self.mat * &sol;
        if let Some(corr) = self.lu.solve(&resid) {
            sol += corr;
        }
        if !sol.iter().all(|v| v.is_finite()) {
            return None;
        }
        let n = self.n;
        Some((sol.rows(0, n).into_owned(), sol.rows(n, sol.len() - n).into_owned()))
    }
}

fn apply_cols(nt: &NtScaling, g: &DMatrix<f64>, inverse: bool) -> DMatrix<f64> {
    let mut out = g.clone();
    for j in 0..g.ncols() {
        let col: Vec<f64> = g.column(j).iter().copied().collect();
        let w = nt.apply(&col, inverse);
        out.column_mut(j).copy_from_slice(&w);
    }
    out
}

fn to_vec(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

/// Push `v` into the interior along the identity if needed.
fn shift_interior(dims: &ConeDims, v: &mut [f64]) {
    let e = dims.identity();
    let t = -dims.min_eig(v);
    let scale = norm(v).max(1.0);
    if t >= -1e-8 * scale {
        for (vi, ei) in v.iter_mut().zip(&e) {
            *vi += (1.0 + t) * ei;
        }
    }
}

struct Direction {
    dx: DVector<f64>,
    dy: DVector<f64>,
    dz_t: Vec<f64>,
    ds_t: Vec<f64>,
}

pub(crate) fn solve_standard(sf: &StandardForm, opts: &SolverOptions) -> RawResult {
    let sc = Scaled::new(sf);
    let mut raw = core(&sc, opts);
    if matches!(raw.status, Status::IterationLimit) && phase_one_infeasible(&sc, opts) {
        raw.status = Status::Infeasible;
    }
    sc.unscale(raw)
}

/// `min t` with every cone constraint relaxed by `t e`.
fn phase_one_infeasible(sc: &Scaled, opts: &SolverOptions) -> bool {
    let n = sc.c.len();
    let m = sc.h.len();
    let l = sc.dims.nonneg;
    let e = sc.dims.identity();
    // Insert the row `-t <= 1` at the end of the orthant part.
    let mut g = DMatrix::zeros(m + 1, n + 1);
    let mut h = DVector::zeros(m + 1);
    for i in 0..m {
        let dst = if i < l { i } else { i + 1 };
        for j in 0..n {
            g[(dst, j)] = sc.g[(i, j)];
        }
        g[(dst, n)] = -e[i];
        h[dst] = sc.h[i];
    }
    g[(l, n)] = -1.0;
    h[l] = 1.0;
    let mut a = DMatrix::zeros(sc.a.nrows(), n + 1);
    a.view_mut((0, 0), (sc.a.nrows(), n)).copy_from(&sc.a);
    let mut c = DVector::zeros(n + 1);
    c[n] = 1.0;
    let p1 = Scaled {
        c,
        g,
        h,
        a,
        b: sc.b.clone(),
        dims: ConeDims {
            nonneg: l + 1,
            soc: sc.dims.soc.clone(),
        },
        g_scale: vec![1.0; m + 1],
        a_scale: vec![1.0; sc.b.len()],
        c_scale: 1.0,
    };
    let r = core(&p1, opts);
    log::debug!("phase one: {:?}, t = {:e}", r.status, r.x[n]);
    matches!(r.status, Status::Optimal) && r.x[n] > opts.infeas_margin
}

fn core(sc: &Scaled, opts: &SolverOptions) -> RawResult {
    let n = sc.c.len();
    let m = sc.h.len();
    let p = sc.b.len();
    let dims = &sc.dims;
    let deg = dims.degree().max(1) as f64;
    let e = dims.identity();

    let fail = |status, iterations| RawResult {
        status,
        x: vec![0.0; n],
        y: vec![0.0; p],
        z: vec![0.0; m],
        s: vec![0.0; m],
        iterations,
    };

    // Least-norm starting points with W = I.
    let Some(kkt0) = Kkt::new(&sc.g, &sc.a) else {
        return fail(Status::IterationLimit, 0);
    };
    let rhs_p = {
        let mut r = DVector::zeros(n + p);
        r.rows_mut(0, n).copy_from(&sc.g.tr_mul(&sc.h));
        r.rows_mut(n, p).copy_from(&sc.b);
        r
    };
    let rhs_d = {
        let mut r = DVector::zeros(n + p);
        r.rows_mut(0, n).copy_from(&(-&sc.c));
        r
    };
    let (Some((mut x, _)), Some((u, mut y))) = (kkt0.solve(&rhs_p), kkt0.solve(&rhs_d)) else {
        return fail(Status::IterationLimit, 0);
    };
    let mut s = to_vec(&(&sc.h - &sc.g * &x));
    let mut z = to_vec(&(&sc.g * &u));
    shift_interior(dims, &mut s);
    shift_interior(dims, &mut z);

    let resx0 = sc.c.norm().max(1.0);
    let resy0 = sc.b.norm().max(1.0);
    let resz0 = sc.h.norm().max(1.0);
    let mut status = Status::IterationLimit;
    let mut iterations = 0;

    for it in 0..=opts.max_iter {
        iterations = it;
        let zv = DVector::from_column_slice(&z);
        let sv = DVector::from_column_slice(&s);
        let gtz = sc.g.tr_mul(&zv);
        let aty = sc.a.tr_mul(&y);
        let rx = &sc.c + &gtz + &aty;
        let ry = &sc.a * &x - &sc.b;
        let gx = &sc.g * &x;
        let rz = &gx + &sv - &sc.h;

        let pres = (ry.norm() / resy0).max(rz.norm() / resz0);
        let dres = rx.norm() / resx0;
        let pcost = sc.c.dot(&x);
        let dcost = -sc.b.dot(&y) - sc.h.dot(&zv);
        let gap = dot(&s, &z);
        let relgap = if pcost < 0.0 {
            Some(gap / -pcost)
        } else if dcost > 0.0 {
            Some(gap / dcost)
        } else {
            None
        };
        log::trace!("ipm {it:3}: pcost {pcost:+.6e} dcost {dcost:+.6e} gap {gap:.2e} pres {pres:.2e} dres {dres:.2e}");

        if pres <= opts.feastol
            && dres <= opts.feastol
            && (gap <= opts.abstol || relgap.is_some_and(|r| r <= opts.reltol))
        {
            status = Status::Optimal;
            break;
        }
        // Approximate certificates of primal or dual infeasibility.
        let hz_by = sc.h.dot(&zv) + sc.b.dot(&y);
        if hz_by < 0.0 && (&gtz + &aty).norm() / -hz_by <= opts.feastol {
            status = Status::Infeasible;
            break;
        }
        if pcost < 0.0 {
            let ray = (&gx + &sv).norm().max((&sc.a * &x).norm());
            if ray / -pcost <= opts.feastol {
                status = Status::Unbounded;
                break;
            }
        }
        if it == opts.max_iter {
            break;
        }

        let Some(nt) = NtScaling::new(dims, &s, &z) else {
            break;
        };
        let lambda = nt.lambda.clone();
        let mu = dot(&lambda, &lambda) / deg;
        let ghat = apply_cols(&nt, &sc.g, true);
        let Some(kkt) = Kkt::new(&ghat, &sc.a) else {
            break;
        };
        let rz_v = to_vec(&rz);
        let winv_rz = nt.apply(&rz_v, true);

        // Solve for a direction given the complementarity target `t`.
        let direction = |t: &[f64], f: f64| -> Option<Direction> {
            let u: Vec<f64> = winv_rz.iter().zip(t).map(|(a, b)| f * a + b).collect();
            let uv = DVector::from_column_slice(&u);
            let mut rhs = DVector::zeros(n + p);
            rhs.rows_mut(0, n).copy_from(&(-(&rx * f) - ghat.tr_mul(&uv)));
            rhs.rows_mut(n, p).copy_from(&(-(&ry * f)));
            let (dx, dy) = kkt.solve(&rhs)?;
            let dz_t: Vec<f64> = (&ghat * &dx + &uv).iter().copied().collect();
            let ds_t: Vec<f64> = t.iter().zip(&dz_t).map(|(a, b)| a - b).collect();
            Some(Direction { dx, dy, dz_t, ds_t })
        };
        let max_alpha = |d: &Direction| {
            dims.max_step(&lambda, &d.ds_t)
                .min(dims.max_step(&lambda, &d.dz_t))
        };

        // Predictor.
        let t_aff: Vec<f64> = lambda.iter().map(|v| -v).collect();
        let Some(aff) = direction(&t_aff, 1.0) else {
            break;
        };
        let a_aff = max_alpha(&aff).min(1.0);
        let mu_aff = lambda
            .iter()
            .zip(&aff.ds_t)
            .zip(lambda.iter().zip(&aff.dz_t))
            .map(|((l1, ds), (l2, dz))| (l1 + a_aff * ds) * (l2 + a_aff * dz))
            .sum::<f64>()
            / deg;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        // Corrector with centering.
        let ll = dims.prod(&lambda, &lambda);
        let cross = dims.prod(&aff.ds_t, &aff.dz_t);
        let rc: Vec<f64> = (0..m)
            .map(|i| -ll[i] - cross[i] + sigma * mu * e[i])
            .collect();
        let t_comb = dims.div(&lambda, &rc);
        let Some(dir) = direction(&t_comb, 1.0 - sigma) else {
            break;
        };
        let alpha = (opts.step * max_alpha(&dir)).min(1.0);
        if !(alpha > 1e-12) {
            log::debug!("ipm: step length collapsed at iteration {it}");
            break;
        }

        let ds = nt.apply(&dir.ds_t, false);
        let dz = nt.apply(&dir.dz_t, true);
        x += &dir.dx * alpha;
        y += &dir.dy * alpha;
        for i in 0..m {
            s[i] += alpha * ds[i];
            z[i] += alpha * dz[i];
        }
        if !(dims.min_eig(&s) > 0.0 && dims.min_eig(&z) > 0.0) {
            log::debug!("ipm: iterate left the cone at step {alpha:e}");
            break;
        }
    }

    RawResult {
        status,
        x: to_vec(&x),
        y: to_vec(&y),
        z,
        s,
        iterations,
    }
}
