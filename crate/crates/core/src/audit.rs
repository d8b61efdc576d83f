//! Independent feasibility checker for joint solutions.
//!
//! Everything is recomputed from the raw fields. Frequency responses come
//! from an explicit DFT of the composite impulse response rather than the
//! precomputed rows the optimizers use.

use std::f64::consts::{LN_2, PI};
use std::fmt;

use num_complex::Complex64;

use crate::channel::{ChannelSet, IrsVector};
use crate::offload::ComputeSolution;
use crate::orchestrator::JointSolution;
use crate::params::SystemParams;
use crate::wet::WetSolution;

/// Relative tolerance on rates and energy budgets.
pub const REL_TOL: f64 = 1e-6;
/// Tolerance on bounds, signs and exclusivity.
pub const BOUND_TOL: f64 = 1e-9;
/// Relative tolerance on reported objective values.
pub const OBJECTIVE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Constraint {
    TransferFraction,
    TransferPowerSign,
    TransferSurfaceModulus,
    ComputeSurfaceModulus,
    CpuSpeedRange,
    /// `alpha = 1` exactly where the uplink power is positive.
    AssociationConsistency,
    SubbandExclusivity,
    OffloadPowerSign,
    EnergyBudget,
    OffloadRate,
    /// Stored objective values match the fields.
    ReportedObjective,
}

impl Constraint {
    pub const ALL: [Constraint; 11] = [
        Constraint::TransferFraction,
        Constraint::TransferPowerSign,
        Constraint::TransferSurfaceModulus,
        Constraint::ComputeSurfaceModulus,
        Constraint::CpuSpeedRange,
        Constraint::AssociationConsistency,
        Constraint::SubbandExclusivity,
        Constraint::OffloadPowerSign,
        Constraint::EnergyBudget,
        Constraint::OffloadRate,
        Constraint::ReportedObjective,
    ];
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub constraint: Constraint,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AuditReport {
    pub violations: Vec<Violation>,
    /// Worst relative rate shortfall seen (negative when all rates have
    /// margin).
    pub worst_rate_gap: f64,
    /// Worst relative energy overdraw seen.
    pub worst_energy_gap: f64,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    fn flag(&mut self, constraint: Constraint, detail: String) {
        self.violations.push(Violation { constraint, detail });
    }
}

impl fmt::Display for AuditReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.passed() {
            return write!(f, "all constraints hold");
        }
        for v in &self.violations {
            writeln!(f, "{:?}: {}", v.constraint, v.detail)?;
        }
        Ok(())
    }
}

/// `sum_l h[l] exp(-j 2 pi m l / M)`.
fn dft_bin(h: &[Complex64], m: usize) -> Complex64 {
    let len = h.len() as f64;
    h.iter()
        .enumerate()
        .map(|(l, x)| x * Complex64::from_polar(1.0, -2.0 * PI * (m * l) as f64 / len))
        .sum()
}

/// `|C[k][m]|^2` for every band, from the composite impulse response.
fn band_gains(ch: &ChannelSet, k: usize, theta: &IrsVector) -> Vec<f64> {
    let h = ch.composite_cir(k, theta);
    (0..ch.subbands()).map(|m| dft_bin(&h, m).norm_sqr()).collect()
}

/// Check a solution given as its two phase components. `ch` must be the
/// channel set the scheme operated on.
pub fn audit_parts(
    ch: &ChannelSet,
    wet: &WetSolution,
    compute: &ComputeSolution,
    params: &SystemParams,
) -> AuditReport {
    let mut r = AuditReport {
        worst_rate_gap: f64::NEG_INFINITY,
        worst_energy_gap: f64::NEG_INFINITY,
        ..Default::default()
    };
    let (kk, mm) = (params.devices, params.subbands);
    let tau = params.tau;
    if !(tau > 0.0 && tau < 1.0) {
        r.flag(Constraint::TransferFraction, format!("tau = {tau}"));
    }

    let p_scale = wet.p_e.iter().fold(0.0, |a: f64, b| a.max(b.abs()));
    for (m, p) in wet.p_e.iter().enumerate() {
        if !(*p >= -BOUND_TOL * p_scale) {
            r.flag(Constraint::TransferPowerSign, format!("band {m}: {p:e}"));
        }
    }
    let mut mismatched = false;
    for (theta, which) in [
        (&wet.theta_e, Constraint::TransferSurfaceModulus),
        (&compute.theta_i, Constraint::ComputeSurfaceModulus),
    ] {
        if theta.len() != ch.elements() {
            r.flag(which, format!("{} coefficients for {} elements", theta.len(), ch.elements()));
            mismatched = true;
            continue;
        }
        for (n, t) in theta.as_slice().iter().enumerate() {
            if !(t.norm() <= 1.0 + BOUND_TOL) {
                r.flag(which, format!("element {n}: |theta| = {}", t.norm()));
            }
        }
    }
    if mismatched {
        return r;
    }

    for k in 0..kk {
        let f = compute.f[k];
        if !(f >= 0.0 && f <= params.f_max * (1.0 + BOUND_TOL)) {
            r.flag(Constraint::CpuSpeedRange, format!("device {k}: f = {f:e}"));
        }
    }

    let p_i_scale = compute
        .p_i
        .iter()
        .flatten()
        .fold(0.0, |a: f64, b| a.max(b.abs()));
    for m in 0..mm {
        let users = (0..kk).filter(|&k| compute.alpha[k][m]).count();
        if users > 1 {
            r.flag(Constraint::SubbandExclusivity, format!("band {m} serves {users} devices"));
        }
        for k in 0..kk {
            let p = compute.p_i[k][m];
            if !(p >= -BOUND_TOL * p_i_scale) {
                r.flag(Constraint::OffloadPowerSign, format!("device {k} band {m}: {p:e}"));
            }
            let on = compute.alpha[k][m];
            if on != (p > 0.0) {
                r.flag(
                    Constraint::AssociationConsistency,
                    format!("device {k} band {m}: alpha {on}, p = {p:e}"),
                );
            }
        }
    }

    let noise = params.snr_gap * params.noise_power;
    for k in 0..kk {
        let g_e = band_gains(ch, k, &wet.theta_e);
        let harvested: f64 = params.eta
            * params.wet_time()
            * wet.p_e.iter().zip(&g_e).map(|(p, g)| p * g).sum::<f64>();
        let used: f64 = params.kappa * compute.f[k] * compute.f[k]
            + (0..mm)
                .filter(|&m| compute.alpha[k][m])
                .map(|m| compute.p_i[k][m] + params.circuit_power)
                .sum::<f64>();
        let spent = params.compute_time() * used;
        let gap = (spent - harvested) / harvested.max(spent).max(f64::MIN_POSITIVE);
        r.worst_energy_gap = r.worst_energy_gap.max(gap);
        if gap > REL_TOL {
            r.flag(
                Constraint::EnergyBudget,
                format!("device {k}: spends {spent:e} J, harvests {harvested:e} J"),
            );
        }

        let g_i = band_gains(ch, k, &compute.theta_i);
        let rate: f64 = (0..mm)
            .filter(|&m| compute.alpha[k][m])
            .map(|m| params.bandwidth * (compute.p_i[k][m] * g_i[m] / noise).ln_1p() / LN_2)
            .sum();
        let task = &params.tasks[k];
        let bits = (task.bits - params.compute_time() * compute.f[k] / task.cycles_per_bit).max(0.0);
        let need = bits / params.compute_time();
        if need > 0.0 {
            let gap = (need - rate) / need;
            r.worst_rate_gap = r.worst_rate_gap.max(gap);
            if gap > REL_TOL {
                r.flag(
                    Constraint::OffloadRate,
                    format!("device {k}: rate {rate:e} bit/s, needs {need:e}"),
                );
            }
        }
        if (compute.ell[k] - bits).abs() > OBJECTIVE_TOL * task.bits {
            r.flag(
                Constraint::ReportedObjective,
                format!("device {k}: stored volume {} vs {bits}", compute.ell[k]),
            );
        }
    }

    let wet_energy = params.wet_time() * wet.p_e.iter().sum::<f64>();
    if (wet.objective - wet_energy).abs() > OBJECTIVE_TOL * wet_energy.abs().max(f64::MIN_POSITIVE) {
        r.flag(
            Constraint::ReportedObjective,
            format!("transfer energy {} vs {wet_energy}", wet.objective),
        );
    }
    r
}

/// Check a joint solution, including its reported total energy.
pub fn audit(ch: &ChannelSet, sol: &JointSolution, params: &SystemParams) -> AuditReport {
    let ch = sol.scheme.channels(ch);
    let mut r = audit_parts(ch.as_ref(), &sol.wet, &sol.compute, params);
    let edge: f64 = (0..params.devices)
        .map(|k| {
            let t = &params.tasks[k];
            (t.bits - params.compute_time() * sol.compute.f[k] / t.cycles_per_bit).max(0.0)
        })
        .sum();
    let total = params.wet_time() * sol.wet.p_e.iter().sum::<f64>() + params.edge_energy_per_bit * edge;
    if (sol.total_energy - total).abs() > OBJECTIVE_TOL * total.abs().max(f64::MIN_POSITIVE) {
        r.flag(
            Constraint::ReportedObjective,
            format!("total energy {} vs {total}", sol.total_energy),
        );
    }
    r
}
