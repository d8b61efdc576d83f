//! Computing phase: OFDMA sub-band and power allocation by dual decomposition,
//! surface design for the uplink, and local CPU speeds.
//!
//! The dual loop works in normalized units so that its step sizes are
//! meaningful across channel realizations: powers are expressed in
//! `P_u = Gamma sigma^2 / g_ref` (with `g_ref` the mean best-band gain of the
//! offloading devices) and rates in bit/s/Hz. Under this scaling a band with
//! normalized gain `g` reaches SNR `p g`.

use std::f64::consts::LN_2;

use crate::channel::{ChannelSet, IrsVector};
use crate::error::{Error, Result};
use crate::params::SystemParams;
use crate::sca::{self, LinearModel, ScaOutcome, ScaStep, ScaWorkspace};
use crate::solver::{self, ConeProblem, SocBlock};
use crate::wet::{harvested_energy, WetSolution};

/// Floor of the energy multipliers. The spare-power variables enter the
/// Lagrangian with weight `1 - lambda`, so the dual function is finite only
/// for `lambda >= 1`.
pub const LAMBDA_MIN: f64 = 1.0;

/// Lower bound on the auxiliary log-rate variables of the uplink surface
/// subproblem; keeps the feasible set bounded.
const LOG_RATE_FLOOR: f64 = -50.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ComputeSolution {
    /// `alpha[k][m]`: band `m` serves device `k`.
    pub alpha: Vec<Vec<bool>>,
    /// Uplink powers [W], zero where `alpha` is unset.
    pub p_i: Vec<Vec<f64>>,
    /// CPU speeds [cycle/s].
    pub f: Vec<f64>,
    /// Spare power per device [W].
    pub zeta: Vec<f64>,
    pub theta_i: IrsVector,
    /// Bits offloaded per device.
    pub ell: Vec<f64>,
}

impl ComputeSolution {
    /// Nothing offloaded, CPUs idle.
    pub fn idle(params: &SystemParams, elements: usize) -> Self {
        let (k, m) = (params.devices, params.subbands);
        let mut s = Self {
            alpha: vec![vec![false; m]; k],
            p_i: vec![vec![0.0; m]; k],
            f: vec![0.0; k],
            zeta: vec![0.0; k],
            theta_i: IrsVector::zeros(elements),
            ell: vec![0.0; k],
        };
        s.refresh_bits(params);
        s
    }

    /// `sum_m alpha (p + p_c)`.
    pub fn offload_power(&self, k: usize, params: &SystemParams) -> f64 {
        self.alpha[k]
            .iter()
            .zip(&self.p_i[k])
            .filter(|(a, _)| **a)
            .map(|(_, p)| p + params.circuit_power)
            .sum()
    }

    /// Power device `k` draws during the computing phase.
    pub fn required_power(&self, k: usize, params: &SystemParams) -> f64 {
        params.kappa * self.f[k] * self.f[k] + self.offload_power(k, params)
    }

    /// Edge computing energy `vartheta sum ell`.
    pub fn edge_energy(&self, params: &SystemParams) -> f64 {
        params.edge_energy_per_bit * self.ell.iter().sum::<f64>()
    }

    pub fn refresh_bits(&mut self, params: &SystemParams) {
        self.ell = (0..params.devices).map(|k| params.offload_bits(k, self.f[k])).collect();
    }

    /// Recompute offload volumes and spare powers for harvested `energies`.
    pub fn refresh(&mut self, energies: &[f64], params: &SystemParams) {
        self.refresh_bits(params);
        self.zeta = (0..params.devices)
            .map(|k| {
                slack_zeta(energies[k], self.f[k], &self.alpha[k], &self.p_i[k], params)
            })
            .collect();
    }

    pub fn rate(&self, ch: &ChannelSet, k: usize, params: &SystemParams) -> f64 {
        offload_rate(ch, &self.theta_i, &self.alpha[k], &self.p_i[k], k, params)
    }
}

/// Per-band cost model: bandwidth, effective noise `Gamma sigma^2` and circuit
/// power, either in SI units or in the dual loop's normalized units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandModel {
    pub bandwidth: f64,
    pub noise: f64,
    pub circuit: f64,
}

impl BandModel {
    pub fn from_params(p: &SystemParams) -> Self {
        Self {
            bandwidth: p.bandwidth,
            noise: p.snr_gap * p.noise_power,
            circuit: p.circuit_power,
        }
    }

    /// Maximizer of the per-band Lagrangian term over the power.
    pub fn power(&self, lambda: f64, mu: f64, gain: f64) -> f64 {
        if !(gain > 0.0) {
            return 0.0;
        }
        (mu * self.bandwidth / (lambda * LN_2) - self.noise / gain).max(0.0)
    }

    /// `-lambda (p + p_c) + mu B log2(1 + p gain / noise)`.
    pub fn objective(&self, lambda: f64, mu: f64, gain: f64, p: f64) -> f64 {
        -lambda * (p + self.circuit) + mu * self.bandwidth * (p * gain / self.noise).ln_1p() / LN_2
    }

    /// Best device for one band: `(k, p)`; ties go to the lowest index.
    pub fn assign(&self, lambda: &[f64], mu: &[f64], gains: &[f64]) -> (usize, f64) {
        let mut best = (0, 0.0, f64::NEG_INFINITY);
        for (k, &g) in gains.iter().enumerate() {
            let p = self.power(lambda[k], mu[k], g);
            let v = self.objective(lambda[k], mu[k], g, p);
            if v > best.2 {
                best = (k, p, v);
            }
        }
        (best.0, best.1)
    }
}

/// Water-filling power of one band for device multipliers `(lambda, mu)`.
pub fn waterfill_power(lambda: f64, mu: f64, gain: f64, params: &SystemParams) -> f64 {
    BandModel::from_params(params).power(lambda, mu, gain)
}

/// Per-band Lagrangian term maximized by [`waterfill_power`].
pub fn band_objective(lambda: f64, mu: f64, gain: f64, p: f64, params: &SystemParams) -> f64 {
    BandModel::from_params(params).objective(lambda, mu, gain, p)
}

/// Multipliers of the energy (`lambda`) and rate (`mu`) constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct DualState {
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    pub step_lambda: f64,
    pub step_mu: f64,
    pub t: usize,
}

impl DualState {
    pub fn new(lambda: Vec<f64>, mu: Vec<f64>, params: &SystemParams) -> Self {
        Self {
            lambda: lambda.into_iter().map(|l| l.max(LAMBDA_MIN)).collect(),
            mu: mu.into_iter().map(|m| m.max(0.0)).collect(),
            step_lambda: params.step_lambda,
            step_mu: params.step_mu,
            t: 1,
        }
    }

    /// Projected step with diminishing size `step / t`.
    pub fn update(&mut self, s_lambda: &[f64], s_mu: &[f64]) {
        let t = self.t as f64;
        for (l, s) in self.lambda.iter_mut().zip(s_lambda) {
            *l = (*l + self.step_lambda / t * s).max(LAMBDA_MIN);
        }
        for (m, s) in self.mu.iter_mut().zip(s_mu) {
            *m = (*m + self.step_mu / t * s).max(0.0);
        }
        self.t += 1;
    }
}

/// Assign band `m` given per-device gains `|C[k][m]|^2` (SI units).
pub fn assign_subband(m: usize, dual: &DualState, gains: &[f64], params: &SystemParams) -> (usize, f64) {
    let _ = m;
    BandModel::from_params(params).assign(&dual.lambda, &dual.mu, gains)
}

/// Spare power `E/((1-tau)T) - kappa f^2 - sum alpha (p + p_c)`; negative when
/// the allocation overdraws the harvested energy.
pub fn slack_zeta(e_k: f64, f_k: f64, alpha_row: &[bool], p_row: &[f64], params: &SystemParams) -> f64 {
    let used: f64 = alpha_row
        .iter()
        .zip(p_row)
        .filter(|(a, _)| **a)
        .map(|(_, p)| p + params.circuit_power)
        .sum();
    e_k / params.compute_time() - params.kappa * f_k * f_k - used
}

/// `sum_m alpha B log2(1 + p |C|^2 / (Gamma sigma^2))` [bit/s].
pub fn offload_rate(
    ch: &ChannelSet,
    theta_i: &IrsVector,
    alpha_row: &[bool],
    p_row: &[f64],
    k: usize,
    params: &SystemParams,
) -> f64 {
    let noise = params.snr_gap * params.noise_power;
    alpha_row
        .iter()
        .zip(p_row)
        .enumerate()
        .filter(|(_, (a, _))| **a)
        .map(|(m, (_, p))| {
            params.bandwidth * (p * ch.gain(k, m, theta_i) / noise).ln_1p() / LN_2
        })
        .sum()
}

/// Subgradients of the dual function: `(s_lambda [W], s_mu [bit/s])`.
pub fn subgradients(
    sol: &ComputeSolution,
    energies: &[f64],
    ch: &ChannelSet,
    params: &SystemParams,
) -> (Vec<f64>, Vec<f64>) {
    let t = params.compute_time();
    let s_lambda = (0..params.devices)
        .map(|k| sol.required_power(k, params) - energies[k] / t)
        .collect();
    let s_mu = (0..params.devices)
        .map(|k| params.offload_bits(k, sol.f[k]) / t - sol.rate(ch, k, params))
        .collect();
    (s_lambda, s_mu)
}

/// Lagrangian of the allocation subproblem (SI units), with `alpha` applied to
/// the power sum as in the per-device energy constraint.
pub fn lagrangian(
    sol: &ComputeSolution,
    dual: &DualState,
    energies: &[f64],
    ch: &ChannelSet,
    params: &SystemParams,
) -> f64 {
    let t = params.compute_time();
    (0..params.devices)
        .map(|k| {
            let energy = sol.required_power(k, params) + sol.zeta[k] - energies[k] / t;
            let rate = sol.rate(ch, k, params) - params.offload_bits(k, sol.f[k]) / t;
            sol.zeta[k] - dual.lambda[k] * energy + dual.mu[k] * rate
        })
        .sum()
}

/// CPU speeds from the remaining budget
/// `b = E/((1-tau)T) - sum alpha (p + p_c) - zeta`: zero if `b < 0`,
/// `sqrt(b / kappa)` below `kappa f_max^2`, `f_max` otherwise.
pub fn update_frequencies(
    energies: &[f64],
    alpha: &[Vec<bool>],
    p_i: &[Vec<f64>],
    zeta: &[f64],
    params: &SystemParams,
) -> Vec<f64> {
    (0..params.devices)
        .map(|k| {
            let used: f64 = alpha[k]
                .iter()
                .zip(&p_i[k])
                .filter(|(a, _)| **a)
                .map(|(_, p)| p + params.circuit_power)
                .sum();
            let budget = energies[k] / params.compute_time() - used - zeta[k];
            if budget < 0.0 {
                0.0
            } else if budget >= params.kappa * params.f_max * params.f_max {
                params.f_max
            } else {
                (budget / params.kappa).sqrt()
            }
        })
        .collect()
}

/// Minimum-power allocation of one device over a candidate band set.
#[derive(Debug, Clone, PartialEq)]
struct Plan {
    bands: Vec<usize>,
    powers: Vec<f64>,
    /// Transmit plus circuit power (normalized units).
    cost: f64,
}

impl Plan {
    fn empty() -> Self {
        Self {
            bands: Vec::new(),
            powers: Vec::new(),
            cost: 0.0,
        }
    }
}

/// Reach `target` bit/s/Hz on a subset of `cands = (band, gain)` at minimum
/// power plus `circuit` per used band. For a fixed band count the strongest
/// bands are best and the powers follow water-filling, so only prefixes of the
/// gain-sorted list need to be compared.
fn min_power_plan(cands: &[(usize, f64)], target: f64, circuit: f64) -> Option<Plan> {
    if target <= 0.0 {
        return Some(Plan::empty());
    }
    let mut c: Vec<(usize, f64)> = cands.iter().copied().filter(|(_, g)| *g > 0.0).collect();
    c.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut best: Option<(usize, f64, f64)> = None;
    let mut sum_log = 0.0;
    for j in 1..=c.len() {
        sum_log += c[j - 1].1.log2();
        let level = ((target - sum_log) / j as f64).exp2();
        if level * c[j - 1].1 <= 1.0 {
            break;
        }
        let transmit: f64 = c[..j].iter().map(|(_, g)| level - 1.0 / g).sum();
        let cost = transmit + j as f64 * circuit;
        if best.is_none_or(|b| cost < b.2) {
            best = Some((j, level, cost));
        }
    }
    let (j, level, cost) = best?;
    Some(Plan {
        bands: c[..j].iter().map(|b| b.0).collect(),
        powers: c[..j].iter().map(|(_, g)| level - 1.0 / g).collect(),
        cost,
    })
}

/// Allocation subproblem data in normalized units.
struct Normalized {
    unit: f64,
    k: usize,
    m: usize,
    /// `|C|^2 P_u / (Gamma sigma^2)`, `k * M + m`.
    gains: Vec<f64>,
    /// Required rate [bit/s/Hz]; zero for devices that offload nothing.
    target: Vec<f64>,
    /// `E/((1-tau)T) - kappa f^2`, normalized.
    budget: Vec<f64>,
    circuit: f64,
}

impl Normalized {
    fn new(
        ch: &ChannelSet,
        theta: &IrsVector,
        f: &[f64],
        energies: &[f64],
        params: &SystemParams,
    ) -> Result<Self> {
        let (kk, mm) = (params.devices, params.subbands);
        let raw = ch.gains(theta);
        let target: Vec<f64> = (0..kk)
            .map(|k| params.offload_bits(k, f[k]) / (params.compute_time() * params.bandwidth))
            .collect();
        let mut best_sum = 0.0;
        let mut active = 0usize;
        for k in 0..kk {
            if target[k] > 0.0 {
                let best = raw[k * mm..(k + 1) * mm].iter().copied().fold(0.0, f64::max);
                if !(best > 0.0) {
                    return Err(Error::Infeasible(format!(
                        "device {k} must offload but has no usable sub-band"
                    )));
                }
                best_sum += best;
                active += 1;
            }
        }
        let noise = params.snr_gap * params.noise_power;
        let unit = if active > 0 {
            noise / (best_sum / active as f64)
        } else {
            params.circuit_power.max(f64::MIN_POSITIVE)
        };
        Ok(Self {
            unit,
            k: kk,
            m: mm,
            gains: raw.iter().map(|g| g * unit / noise).collect(),
            target,
            budget: (0..kk)
                .map(|k| {
                    (energies[k] / params.compute_time() - params.kappa * f[k] * f[k]) / unit
                })
                .collect(),
            circuit: params.circuit_power / unit,
        })
    }

    fn model(&self) -> BandModel {
        BandModel {
            bandwidth: 1.0,
            noise: 1.0,
            circuit: self.circuit,
        }
    }

    fn gain(&self, k: usize, m: usize) -> f64 {
        self.gains[k * self.m + m]
    }

    fn plan(&self, k: usize, bands: &[usize]) -> Option<Plan> {
        let cands: Vec<(usize, f64)> = bands.iter().map(|&m| (m, self.gain(k, m))).collect();
        min_power_plan(&cands, self.target[k], self.circuit)
    }

    /// Initial rate multipliers: the water level that meets each target on
    /// the device's `ceil(M/K)` strongest bands.
    fn initial_mu(&self) -> Vec<f64> {
        let share = self.m.div_ceil(self.k);
        (0..self.k)
            .map(|k| {
                if self.target[k] <= 0.0 {
                    return 0.0;
                }
                let mut g: Vec<f64> = (0..self.m).map(|m| self.gain(k, m)).collect();
                g.sort_by(|a, b| b.total_cmp(a));
                let cands: Vec<(usize, f64)> = g.into_iter().take(share).enumerate().collect();
                match min_power_plan(&cands, self.target[k], 0.0) {
                    Some(plan) => {
                        let level = plan.powers[0] + 1.0 / cands[plan.bands[0]].1;
                        level * LN_2
                    }
                    None => 1.0,
                }
            })
            .collect()
    }

    /// Greedy marginal-cost association used as an extra candidate.
    fn greedy(&self) -> Vec<Vec<usize>> {
        let mut sets: Vec<Vec<usize>> = vec![Vec::new(); self.k];
        let mut cost: Vec<f64> = (0..self.k)
            .map(|k| if self.target[k] > 0.0 { f64::INFINITY } else { 0.0 })
            .collect();
        let mut free: Vec<usize> = (0..self.m).collect();
        loop {
            // (rescues a device without bands, improvement, band position, device)
            let mut best: Option<(bool, f64, usize, usize)> = None;
            for (pos, &m) in free.iter().enumerate() {
                for k in 0..self.k {
                    if self.target[k] <= 0.0 {
                        continue;
                    }
                    let mut trial = sets[k].clone();
                    trial.push(m);
                    let Some(plan) = self.plan(k, &trial) else {
                        continue;
                    };
                    let rescue = cost[k].is_infinite();
                    let gain = if rescue { self.gain(k, m) } else { cost[k] - plan.cost };
                    if !rescue && gain <= 0.0 {
                        continue;
                    }
                    let better = match best {
                        None => true,
                        Some((r, g, _, _)) => (rescue, gain) > (r, g),
                    };
                    if better {
                        best = Some((rescue, gain, pos, k));
                    }
                }
            }
            let Some((_, _, pos, k)) = best else {
                break;
            };
            let m = free.remove(pos);
            sets[k].push(m);
            cost[k] = self.plan(k, &sets[k]).map_or(f64::INFINITY, |p| p.cost);
        }
        sets
    }

    /// Minimum-power polish of an association; `None` if some device that
    /// must offload has no band.
    fn polish(&self, sets: &[Vec<usize>]) -> Option<Vec<Plan>> {
        (0..self.k).map(|k| self.plan(k, &sets[k])).collect()
    }

    /// Move single bands between devices (or release them) while that
    /// improves the candidate.
    fn local_search(&self, start: Candidate) -> Candidate {
        let mut best = start;
        loop {
            let owner: Vec<Option<usize>> = (0..self.m)
                .map(|m| best.plans.iter().position(|p| p.bands.contains(&m)))
                .collect();
            let mut next = None;
            'moves: for m in 0..self.m {
                for target in (0..self.k).map(Some).chain([None]) {
                    if target == owner[m] {
                        continue;
                    }
                    let mut sets: Vec<Vec<usize>> = best.plans.iter().map(|p| p.bands.clone()).collect();
                    if let Some(o) = owner[m] {
                        sets[o].retain(|&b| b != m);
                    }
                    if let Some(t) = target {
                        sets[t].push(m);
                    }
                    if let Some(plans) = self.polish(&sets) {
                        let cand = Candidate::new(self, plans);
                        if cand.better_than(&best) {
                            next = Some(cand);
                            break 'moves;
                        }
                    }
                }
            }
            if next.is_none() {
                next = self.best_swap(&best, &owner);
            }
            match next {
                Some(c) => best = c,
                None => return best,
            }
        }
    }

    /// First improving exchange of two bands held by different devices.
    fn best_swap(&self, best: &Candidate, owner: &[Option<usize>]) -> Option<Candidate> {
        for a in 0..self.m {
            for b in a + 1..self.m {
                let (Some(ka), Some(kb)) = (owner[a], owner[b]) else {
                    continue;
                };
                if ka == kb {
                    continue;
                }
                let mut sets: Vec<Vec<usize>> = best.plans.iter().map(|p| p.bands.clone()).collect();
                sets[ka].retain(|&x| x != a);
                sets[kb].retain(|&x| x != b);
                sets[ka].push(b);
                sets[kb].push(a);
                if let Some(plans) = self.polish(&sets) {
                    let cand = Candidate::new(self, plans);
                    if cand.better_than(best) {
                        return Some(cand);
                    }
                }
            }
        }
        None
    }

    fn overdraw(&self, plans: &[Plan]) -> f64 {
        plans
            .iter()
            .zip(&self.budget)
            .map(|(p, b)| (p.cost - b) / b.abs().max(p.cost).max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max)
    }
}

/// Ranking of candidate allocations: energy-feasible first, then least power.
#[derive(Debug, Clone)]
struct Candidate {
    plans: Vec<Plan>,
    overdraw: f64,
    total: f64,
}

impl Candidate {
    fn new(n: &Normalized, plans: Vec<Plan>) -> Self {
        Self {
            overdraw: n.overdraw(&plans),
            total: plans.iter().map(|p| p.cost).sum(),
            plans,
        }
    }

    fn feasible(&self) -> bool {
        self.overdraw <= 1e-12
    }

    fn better_than(&self, other: &Candidate) -> bool {
        match (self.feasible(), other.feasible()) {
            (true, false) => true,
            (false, true) => false,
            (true, true) => self.total < other.total * (1.0 - 1e-12),
            (false, false) => self.overdraw < other.overdraw,
        }
    }
}

/// Output of [`dual_loop`].
#[derive(Debug, Clone, PartialEq)]
pub struct DualOutcome {
    pub alpha: Vec<Vec<bool>>,
    pub p_i: Vec<Vec<f64>>,
    /// Spare power per device [W].
    pub zeta: Vec<f64>,
    /// Multipliers at exit, in normalized units.
    pub dual: DualState,
    /// Lagrangian per iteration (normalized units).
    pub lagrangian: Vec<f64>,
    /// Smallest dual function value seen: an upper bound on the attainable
    /// total spare power [W].
    pub dual_bound: f64,
    /// Total uplink transmit plus circuit power of the returned allocation [W].
    pub offload_power: f64,
    /// Every device stays within its harvested energy.
    pub feasible: bool,
    pub iterations: usize,
}

/// Sub-band and power allocation at fixed surface and CPU speeds.
///
/// Runs the projected-subgradient dual iteration. Each iterate's association
/// is turned into a primal candidate by per-device minimum-power water-filling
/// that meets the rate target exactly; a greedy association is an additional
/// candidate. The best candidate (energy-feasible, then least power) is
/// returned.
pub fn dual_loop(
    ch: &ChannelSet,
    theta_i: &IrsVector,
    f: &[f64],
    energies: &[f64],
    params: &SystemParams,
    dual0: Option<DualState>,
) -> Result<DualOutcome> {
    let n = Normalized::new(ch, theta_i, f, energies, params)?;
    let model = n.model();
    let mut dual = dual0.unwrap_or_else(|| DualState::new(vec![1.0; n.k], n.initial_mu(), params));

    let mut best = n.polish(&n.greedy()).map(|p| Candidate::new(&n, p));
    let mut trace = Vec::new();
    let mut bound = f64::INFINITY;
    let mut iterations = 0;
    let active = n.target.iter().any(|t| *t > 0.0);

    while active && iterations < params.t_max {
        iterations += 1;
        let mut sets: Vec<Vec<usize>> = vec![Vec::new(); n.k];
        let mut raw_p = vec![vec![0.0; n.m]; n.k];
        let mut g_sum = 0.0;
        for m in 0..n.m {
            let gains: Vec<f64> = (0..n.k).map(|k| n.gain(k, m)).collect();
            let (k, p) = model.assign(&dual.lambda, &dual.mu, &gains);
            // A zero-power assignment carries no data; leave the band idle.
            let score = model.objective(dual.lambda[k], dual.mu[k], gains[k], p);
            g_sum += score.max(0.0);
            if p > 0.0 {
                sets[k].push(m);
                raw_p[k][m] = p;
            }
        }

        let mut s_lambda = vec![0.0; n.k];
        let mut s_mu = vec![0.0; n.k];
        let mut lag = 0.0;
        for k in 0..n.k {
            let used: f64 = sets[k].iter().map(|&m| raw_p[k][m] + n.circuit).sum();
            let rate: f64 = sets[k]
                .iter()
                .map(|&m| (raw_p[k][m] * n.gain(k, m)).ln_1p() / LN_2)
                .sum();
            let zeta = n.budget[k] - used;
            s_lambda[k] = used - n.budget[k];
            s_mu[k] = n.target[k] - rate;
            lag += zeta - dual.lambda[k] * (used + zeta - n.budget[k]) + dual.mu[k] * (rate - n.target[k]);
            g_sum += dual.lambda[k] * n.budget[k] - dual.mu[k] * n.target[k];
        }
        bound = bound.min(g_sum);

        if let Some(plans) = n.polish(&sets) {
            let cand = Candidate::new(&n, plans);
            if best.as_ref().is_none_or(|b| cand.better_than(b)) {
                best = Some(cand);
            }
        }

        let converged = trace
            .last()
            .is_some_and(|prev| sca::rel_change(*prev, lag) <= params.eps);
        trace.push(lag);
        if converged {
            break;
        }
        dual.update(&s_lambda, &s_mu);
    }

    let plans = match best.map(|c| n.local_search(c)) {
        Some(c) => c.plans,
        None if !active => vec![Plan::empty(); n.k],
        None => {
            return Err(Error::Infeasible("no sub-band association reaches the rate targets".into()))
        }
    };
    let mut alpha = vec![vec![false; n.m]; n.k];
    let mut p_i = vec![vec![0.0; n.m]; n.k];
    for (k, plan) in plans.iter().enumerate() {
        for (&m, &p) in plan.bands.iter().zip(&plan.powers) {
            alpha[k][m] = true;
            p_i[k][m] = p * n.unit;
        }
    }
    let zeta: Vec<f64> = (0..n.k)
        .map(|k| slack_zeta(energies[k], f[k], &alpha[k], &p_i[k], params))
        .collect();
    let offload_power: f64 = (0..n.k)
        .map(|k| {
            alpha[k]
                .iter()
                .zip(&p_i[k])
                .filter(|(a, _)| **a)
                .map(|(_, p)| p + params.circuit_power)
                .sum::<f64>()
        })
        .sum();
    let feasible = zeta.iter().zip(energies).all(|(z, e)| {
        *z >= -1e-12 * (e / params.compute_time()).max(f64::MIN_POSITIVE)
    });
    Ok(DualOutcome {
        alpha,
        p_i,
        zeta,
        dual,
        lagrangian: trace,
        dual_bound: if bound.is_finite() { bound * n.unit } else { f64::INFINITY },
        offload_power,
        feasible,
        iterations,
    })
}

/// Re-optimize powers on a fixed association at the current surface.
pub fn repolish(
    ch: &ChannelSet,
    theta_i: &IrsVector,
    alpha: &[Vec<bool>],
    f: &[f64],
    energies: &[f64],
    params: &SystemParams,
) -> Result<Option<(Vec<Vec<bool>>, Vec<Vec<f64>>)>> {
    let n = Normalized::new(ch, theta_i, f, energies, params)?;
    let sets: Vec<Vec<usize>> = alpha
        .iter()
        .map(|row| row.iter().enumerate().filter(|(_, a)| **a).map(|(m, _)| m).collect())
        .collect();
    Ok(n.polish(&sets).map(|plans| {
        let mut a = vec![vec![false; n.m]; n.k];
        let mut p = vec![vec![0.0; n.m]; n.k];
        for (k, plan) in plans.iter().enumerate() {
            for (&m, &pw) in plan.bands.iter().zip(&plan.powers) {
                a[k][m] = true;
                p[k][m] = pw * n.unit;
            }
        }
        (a, p)
    }))
}

/// Surface design for the uplink at a fixed allocation.
///
/// `log(1 + x)` is replaced by the concave minorant
/// `log(1 + x~) + 1 - (1 + x~)/(1 + x)`, tight with matching slope at the
/// expansion SNR `x~`. Its hypograph is a rotated cone, so each subproblem is
/// an SOCP in `(Re theta, Im theta, chi, q)`:
///
/// ```text
/// max sum chi_k
///  s.t. sum_m [log2(1 + x~_km) + q_km / ln 2] >= target_k + chi_k,  chi >= 0
///       (1 - q_km) (1 + x_km(theta)) / (1 + x~_km) >= 1,
///       |theta_n| <= 1
/// ```
///
/// with `x_km(theta)` the SNR under the linearized gain. The true rate of every
/// device is never below its target at an accepted iterate.
pub fn sca_theta_i(
    ch: &ChannelSet,
    alpha: &[Vec<bool>],
    p_i: &[Vec<f64>],
    f: &[f64],
    theta_init: &IrsVector,
    params: &SystemParams,
) -> ScaOutcome {
    let n_elem = ch.elements();
    let noise = params.snr_gap * params.noise_power;
    let scale_b = params.compute_time() * params.bandwidth;
    let active: Vec<(usize, Vec<usize>)> = (0..params.devices)
        .filter(|&k| params.offload_bits(k, f[k]) > 0.0)
        .map(|k| (k, (0..params.subbands).filter(|&m| alpha[k][m] && p_i[k][m] > 0.0).collect::<Vec<_>>()))
        .filter(|(_, bands)| !bands.is_empty())
        .collect();
    if n_elem == 0 || active.is_empty() {
        return ScaOutcome::trivial(theta_init.clone());
    }
    let n_chi = active.len();
    let n_q: usize = active.iter().map(|(_, b)| b.len()).sum();
    let nv = 2 * n_elem + n_chi + n_q;

    let step = |theta: &IrsVector| -> Option<ScaStep> {
        let ws = ScaWorkspace::expand(ch, theta);
        let mut prob = ConeProblem::new(nv);
        for blk in sca::unit_disk_blocks(n_elem, nv) {
            prob.add_soc(blk);
        }
        let mut q_idx = 2 * n_elem + n_chi;
        for (ci, (k, bands)) in active.iter().enumerate() {
            let chi = 2 * n_elem + ci;
            prob.objective[chi] = -1.0;
            prob.set_bounds(chi, Some(0.0), None);
            let target = params.offload_bits(*k, f[*k]) / scale_b;
            let mut rate_row = vec![0.0; nv];
            let mut base = 0.0;
            for &m in bands {
                let p = p_i[*k][m];
                let x0 = p * ws.expansion_gain(*k, m) / noise;
                base += x0.ln_1p() / LN_2;
                // v = (1 + x(theta)) / (1 + x~), affine in theta.
                let lin: LinearModel = ws.linear_model(ch, *k, m);
                let w = p / noise / (1.0 + x0);
                let v_const = (1.0 + p * lin.constant / noise) / (1.0 + x0);
                let mut v_coef = vec![0.0; nv];
                for e in 0..n_elem {
                    v_coef[e] = w * lin.coef_re[e];
                    v_coef[n_elem + e] = w * lin.coef_im[e];
                }
                // (1 - q) v >= 1  <=>  ||(2, (1 - q) - v)|| <= (1 - q) + v.
                let mut head = v_coef.clone();
                head[q_idx] = -1.0;
                let mut diff: Vec<f64> = v_coef.iter().map(|c| -c).collect();
                diff[q_idx] = -1.0;
                prob.add_soc(SocBlock {
                    a: vec![vec![0.0; nv], diff],
                    b: vec![2.0, 1.0 - v_const],
                    c: head,
                    d: 1.0 + v_const,
                });
                prob.set_bounds(q_idx, Some(LOG_RATE_FLOOR), None);
                rate_row[q_idx] = -1.0 / LN_2;
                q_idx += 1;
            }
            rate_row[chi] = 1.0;
            // Clamp round-off: the expansion point meets the target.
            prob.add_le(rate_row, (base - target).max(0.0));
        }
        let sol = solver::solve_socp(&prob).ok()?;
        if !sol.is_optimal() {
            log::debug!("uplink surface subproblem: {:?}", sol.status);
            return None;
        }
        let raw_modulus = (0..n_elem)
            .map(|e| sol.x[e].hypot(sol.x[n_elem + e]))
            .fold(0.0, f64::max);
        Some(ScaStep {
            theta: sca::theta_from(&sol.x, n_elem),
            objective: -sol.objective * params.bandwidth,
            raw_modulus,
            model_gap: ws.model_gap(ch, theta),
        })
    };
    sca::run_sca(theta_init.clone(), params.eps, params.t_max, 1e-6, step)
}

/// Record of one computing-phase alternation.
#[derive(Debug, Clone, PartialEq)]
pub struct ComputeRun {
    pub solution: ComputeSolution,
    /// Edge energy `vartheta sum ell` [J], starting with the initial point.
    pub trace: Vec<f64>,
    /// Total uplink power [W] after each iteration, starting with the
    /// initial point.
    pub power_trace: Vec<f64>,
    pub sca: Vec<ScaOutcome>,
    pub dual_iterations: usize,
}

fn total_offload_power(alpha: &[Vec<bool>], p_i: &[Vec<f64>], params: &SystemParams) -> f64 {
    alpha
        .iter()
        .zip(p_i)
        .flat_map(|(a, p)| a.iter().zip(p))
        .filter(|(a, _)| **a)
        .map(|(_, p)| p + params.circuit_power)
        .sum()
}

/// Alternate surface design, sub-band/power allocation and CPU speeds for
/// the energy harvested under `wet`, starting from `prev`.
///
/// `prev` must fit within the harvested energy. Each allocation step keeps
/// the cheapest energy-feasible candidate among the dual-loop result and the
/// previous association re-optimized at the new surface. Uplink power thus
/// never increases, CPU speeds never drop and the edge energy never rises.
/// Iteration stops once both the edge energy and the uplink power settle.
/// With `design_surface` false the surface is kept.
pub fn optimize_computing(
    ch: &ChannelSet,
    wet: &WetSolution,
    prev: &ComputeSolution,
    params: &SystemParams,
    design_surface: bool,
) -> Result<ComputeRun> {
    let kk = params.devices;
    let energies: Vec<f64> = (0..kk)
        .map(|k| harvested_energy(ch, &wet.p_e, &wet.theta_e, k, params))
        .collect();
    let released = vec![0.0; kk];
    let mut sol = prev.clone();
    sol.f = update_frequencies(&energies, &sol.alpha, &sol.p_i, &released, params);
    sol.refresh(&energies, params);

    let mut trace = vec![sol.edge_energy(params)];
    let mut power_trace = vec![total_offload_power(&sol.alpha, &sol.p_i, params)];
    let mut scas = Vec::new();
    let mut dual_iterations = 0;
    for _ in 0..params.t_max {
        let theta = if design_surface {
            let run = sca_theta_i(ch, &sol.alpha, &sol.p_i, &sol.f, &sol.theta_i, params);
            let theta = run.theta.clone();
            scas.push(run);
            theta
        } else {
            sol.theta_i.clone()
        };

        let current = power_trace.last().copied().unwrap_or(f64::INFINITY);
        let mut pick: Option<(Vec<Vec<bool>>, Vec<Vec<f64>>, f64)> = None;
        let mut consider = |a: Vec<Vec<bool>>, p: Vec<Vec<f64>>| {
            let fits = (0..kk).all(|k| {
                let z = slack_zeta(energies[k], sol.f[k], &a[k], &p[k], params);
                z >= -1e-12 * (energies[k] / params.compute_time()).max(f64::MIN_POSITIVE)
            });
            let power = total_offload_power(&a, &p, params);
            if fits && pick.as_ref().is_none_or(|b| power < b.2) {
                pick = Some((a, p, power));
            }
        };
        match dual_loop(ch, &theta, &sol.f, &energies, params, None) {
            Ok(d) => {
                dual_iterations += d.iterations;
                consider(d.alpha, d.p_i);
            }
            Err(Error::Infeasible(msg)) => log::debug!("dual loop: {msg}"),
            Err(e) => return Err(e),
        }
        if let Some((a, p)) = repolish(ch, &theta, &sol.alpha, &sol.f, &energies, params)? {
            consider(a, p);
        }
        let Some((alpha, p_i, power)) = pick.filter(|c| c.2 <= current) else {
            // Nothing improves on the current point; only the surface may
            // have moved, which keeps every rate feasible.
            sol.theta_i = theta;
            break;
        };
        sol.alpha = alpha;
        sol.p_i = p_i;
        sol.theta_i = theta;
        sol.f = update_frequencies(&energies, &sol.alpha, &sol.p_i, &released, params);
        sol.refresh(&energies, params);

        let obj = sol.edge_energy(params);
        let prev_obj = trace.last().copied().unwrap_or(obj);
        trace.push(obj);
        let prev_power = power_trace.last().copied().unwrap_or(power);
        power_trace.push(power);
        if sca::rel_change(prev_obj, obj) <= params.eps
            && sca::rel_change(prev_power, power) <= params.eps
        {
            break;
        }
    }
    Ok(ComputeRun {
        solution: sol,
        trace,
        power_trace,
        sca: scas,
        dual_iterations,
    })
}
