//! Energy-transfer phase: broadcast power allocation and surface design.

use crate::channel::{ChannelSet, IrsVector};
use crate::error::{Error, Result};
use crate::offload::ComputeSolution;
use crate::params::SystemParams;
use crate::sca::{self, ScaOutcome, ScaStep, ScaWorkspace};
use crate::solver::{self, ConeProblem};

#[derive(Debug, Clone, PartialEq)]
pub struct WetSolution {
    /// Broadcast power per sub-band [W].
    pub p_e: Vec<f64>,
    pub theta_e: IrsVector,
    /// Transfer energy `tau T sum p` [J].
    pub objective: f64,
    /// Objective after the initial allocation and after every accepted
    /// surface update.
    pub trace: Vec<f64>,
    pub sca: Vec<ScaOutcome>,
}

impl WetSolution {
    pub fn new(p_e: Vec<f64>, theta_e: IrsVector, params: &SystemParams) -> Self {
        let objective = wet_energy(&p_e, params);
        Self {
            p_e,
            theta_e,
            objective,
            trace: vec![objective],
            sca: Vec::new(),
        }
    }

    pub fn energies(&self, ch: &ChannelSet, params: &SystemParams) -> Vec<f64> {
        (0..params.devices)
            .map(|k| harvested_energy(ch, &self.p_e, &self.theta_e, k, params))
            .collect()
    }
}

pub fn wet_energy(p_e: &[f64], params: &SystemParams) -> f64 {
    params.wet_time() * p_e.iter().sum::<f64>()
}

/// `kappa f^2 + sum alpha (p + p_c)` [W].
pub fn required_device_power(k: usize, compute: &ComputeSolution, params: &SystemParams) -> f64 {
    compute.required_power(k, params)
}

/// `sum_m eta tau T p_m |C[k][m]|^2` [J].
pub fn harvested_energy(
    ch: &ChannelSet,
    p_e: &[f64],
    theta_e: &IrsVector,
    k: usize,
    params: &SystemParams,
) -> f64 {
    params.eta
        * params.wet_time()
        * p_e
            .iter()
            .enumerate()
            .map(|(m, p)| p * ch.gain(k, m, theta_e))
            .sum::<f64>()
}

/// Per-device coverage rows `a[k][m]`: device `k` is powered iff
/// `sum_m a[k][m] p_m >= 1`. Devices needing nothing are omitted.
fn coverage_rows(
    ch: &ChannelSet,
    theta_e: &IrsVector,
    compute: &ComputeSolution,
    params: &SystemParams,
) -> Result<Vec<Vec<f64>>> {
    let mm = params.subbands;
    let gains = ch.gains(theta_e);
    let mut rows = Vec::new();
    for k in 0..params.devices {
        let need = params.compute_time() * required_device_power(k, compute, params);
        if need <= 0.0 {
            continue;
        }
        let row: Vec<f64> = gains[k * mm..(k + 1) * mm]
            .iter()
            .map(|g| params.eta * params.wet_time() * g / need)
            .collect();
        if !row.iter().any(|a| *a > 0.0) {
            return Err(Error::Infeasible(format!("device {k} cannot harvest on any sub-band")));
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Serve every device from its own best band; feasible but not minimal.
fn best_band_cover(rows: &[Vec<f64>], m: usize) -> Vec<f64> {
    let mut p = vec![0.0f64; m];
    for row in rows {
        let (best, a) = row
            .iter()
            .copied()
            .enumerate()
            .fold((0, 0.0f64), |b, (i, a)| if a > b.1 { (i, a) } else { b });
        p[best] = p[best].max(1.0 / a);
    }
    p
}

/// Least total broadcast power that lets every device harvest what the
/// computing phase spends. Solved as an LP in units where the largest
/// coverage coefficient is one; the result is then scaled up, if needed, so
/// that every energy constraint holds exactly in floating point.
pub fn solve_wet_power(
    ch: &ChannelSet,
    theta_e: &IrsVector,
    compute: &ComputeSolution,
    params: &SystemParams,
) -> Result<Vec<f64>> {
    let mm = params.subbands;
    let rows = coverage_rows(ch, theta_e, compute, params)?;
    if rows.is_empty() {
        return Ok(vec![0.0; mm]);
    }
    let a_max = rows.iter().flatten().copied().fold(0.0, f64::max);
    let unit = 1.0 / a_max;

    let mut lp = ConeProblem::new(mm);
    lp.objective = vec![1.0; mm];
    for row in &rows {
        lp.add_ge(row.iter().map(|a| a * unit).collect(), 1.0);
    }
    for m in 0..mm {
        lp.set_bounds(m, Some(0.0), None);
    }
    let mut p: Vec<f64> = match solver::solve_lp(&lp) {
        Ok(s) if s.is_optimal() => s.x.iter().map(|x| x.max(0.0) * unit).collect(),
        other => {
            log::warn!("transfer power LP not solved ({:?}); using best-band cover", other.map(|s| s.status));
            best_band_cover(&rows, mm)
        }
    };
    let shortfall = rows
        .iter()
        .map(|row| 1.0 / row.iter().zip(&p).map(|(a, x)| a * x).sum::<f64>())
        .fold(0.0, f64::max);
    if shortfall > 1.0 {
        p.iter_mut().for_each(|x| *x *= shortfall);
    }
    Ok(p)
}

/// Surface design for energy transfer at fixed broadcast powers.
///
/// Maximizes the total energy surplus `sum xi` subject to the linearized
/// harvest constraints
/// `sum_m q_m y_km(theta) >= req_k + xi_k` with `q_m = eta tau p_m / (1 - tau)`,
/// `xi >= 0` and `|theta_n| <= 1`, re-expanding at each solution. Every
/// accepted iterate keeps all devices powered. The reported objective is the
/// surplus in joules over the computing phase.
pub fn sca_theta_e(
    ch: &ChannelSet,
    p_e: &[f64],
    compute: &ComputeSolution,
    theta_init: &IrsVector,
    params: &SystemParams,
) -> ScaOutcome {
    let n_elem = ch.elements();
    let q: Vec<f64> = p_e
        .iter()
        .map(|p| params.eta * params.tau * p / (1.0 - params.tau))
        .collect();
    let req: Vec<(usize, f64)> = (0..params.devices)
        .map(|k| (k, required_device_power(k, compute, params)))
        .filter(|(_, r)| *r > 0.0)
        .collect();
    if n_elem == 0 || req.is_empty() || q.iter().all(|x| *x <= 0.0) {
        return ScaOutcome::trivial(theta_init.clone());
    }
    let unit = req.iter().map(|r| r.1).fold(0.0, f64::max);
    let nv = 2 * n_elem + req.len();
    let joules = unit * params.compute_time();

    let step = |theta: &IrsVector| -> Option<ScaStep> {
        let ws = ScaWorkspace::expand(ch, theta);
        let mut prob = ConeProblem::new(nv);
        for blk in sca::unit_disk_blocks(n_elem, nv) {
            prob.add_soc(blk);
        }
        for (i, (k, r)) in req.iter().enumerate() {
            let xi = 2 * n_elem + i;
            prob.objective[xi] = -1.0;
            prob.set_bounds(xi, Some(0.0), None);
            let mut model = sca::LinearModel::zero(n_elem);
            for (m, qm) in q.iter().enumerate() {
                if *qm > 0.0 {
                    model.add_scaled(*qm / unit, &ws.linear_model(ch, *k, m));
                }
            }
            let mut row = vec![0.0; nv];
            for e in 0..n_elem {
                row[e] = -model.coef_re[e];
                row[n_elem + e] = -model.coef_im[e];
            }
            row[xi] = 1.0;
            // The expansion point is feasible; clamp round-off below zero.
            let surplus = model.eval(theta) - r / unit;
            let rhs = model.constant - r / unit;
            prob.add_le(row, if surplus < 0.0 { rhs - surplus } else { rhs });
        }
        let sol = solver::solve_socp(&prob).ok()?;
        if !sol.is_optimal() {
            log::debug!("transfer surface subproblem: {:?}", sol.status);
            return None;
        }
        let raw_modulus = (0..n_elem)
            .map(|e| sol.x[e].hypot(sol.x[n_elem + e]))
            .fold(0.0, f64::max);
        Some(ScaStep {
            theta: sca::theta_from(&sol.x, n_elem),
            objective: -sol.objective * joules,
            raw_modulus,
            model_gap: ws.model_gap(ch, theta),
        })
    };
    sca::run_sca(theta_init.clone(), params.eps, params.t_max, 1e-6, step)
}

/// Alternate the power LP and the surface design until the transfer energy
/// settles. A surface update that would raise the energy is rejected, so the
/// trace never increases. With `design_surface` false a single LP is solved.
pub fn optimize_wet(
    ch: &ChannelSet,
    compute: &ComputeSolution,
    theta_init: &IrsVector,
    params: &SystemParams,
    design_surface: bool,
) -> Result<WetSolution> {
    let p = solve_wet_power(ch, theta_init, compute, params)?;
    let mut sol = WetSolution::new(p, theta_init.clone(), params);
    if !design_surface || ch.elements() == 0 || sol.objective == 0.0 {
        return Ok(sol);
    }
    for _ in 0..params.t_max {
        let run = sca_theta_e(ch, &sol.p_e, compute, &sol.theta_e, params);
        let theta = run.theta.clone();
        sol.sca.push(run);
        let p = solve_wet_power(ch, &theta, compute, params)?;
        let obj = wet_energy(&p, params);
        if obj > sol.objective {
            break;
        }
        let done = sca::rel_change(sol.objective, obj) <= params.eps;
        sol.p_e = p;
        sol.theta_e = theta;
        sol.objective = obj;
        sol.trace.push(obj);
        if done {
            break;
        }
    }
    Ok(sol)
}
