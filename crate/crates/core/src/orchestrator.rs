//! Outer alternation between the two phases, the total-energy objective and
//! the one-dimensional search over the transfer fraction.

use std::borrow::Cow;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::channel::{build_channels, sample_geometry, ChannelSet, IrsVector};
use crate::error::{Error, Result};
use crate::offload::{optimize_computing, ComputeSolution};
use crate::params::SystemParams;
use crate::sca::{self, ScaOutcome};
use crate::wet::{optimize_wet, WetSolution};

/// Redraws of the random starting point before an instance is declared
/// infeasible.
pub const INIT_ATTEMPTS: usize = 5;

/// RNG stream for channel realizations.
pub const CHANNEL_STREAM: u64 = 0;
/// RNG stream for the random starting point.
pub const INIT_STREAM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    /// Both surfaces optimized.
    WithIrs,
    /// Surfaces fixed at random unit-modulus phases.
    RandPhase,
    /// Reflected links removed.
    WithoutIrs,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::WithIrs, Scheme::RandPhase, Scheme::WithoutIrs];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::WithIrs => "with-irs",
            Scheme::RandPhase => "rand-phase",
            Scheme::WithoutIrs => "without-irs",
        }
    }

    pub fn designs_surface(self) -> bool {
        self == Scheme::WithIrs
    }

    /// Channels seen by this scheme.
    pub fn channels<'a>(self, ch: &'a ChannelSet) -> Cow<'a, ChannelSet> {
        match self {
            Scheme::WithoutIrs => Cow::Owned(ch.without_irs()),
            _ => Cow::Borrowed(ch),
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown scheme '{s}'")))
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Seeded generator on a given stream.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Geometry and channels for `seed`; identical across schemes.
pub fn draw_instance(params: &SystemParams, seed: u64) -> Result<ChannelSet> {
    let mut rng = stream_rng(seed, CHANNEL_STREAM);
    let geo = sample_geometry(params, &mut rng);
    build_channels(params, &geo, &mut rng)
}

/// Random starting point of the alternation.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialPoint {
    pub compute: ComputeSolution,
    pub theta_e: IrsVector,
}

/// Random CPU speeds and surfaces, one reserved band per offloading device
/// (greedy in device order on the strongest free band) and the power that
/// meets each rate target on that band alone.
pub fn init_computing<R: Rng + ?Sized>(
    ch: &ChannelSet,
    params: &SystemParams,
    scheme: Scheme,
    rng: &mut R,
) -> Result<InitialPoint> {
    let (kk, mm) = (params.devices, params.subbands);
    if kk > mm {
        return Err(Error::InvalidParams(format!(
            "{kk} devices cannot each reserve one of {mm} sub-bands"
        )));
    }
    let f: Vec<f64> = (0..kk).map(|_| rng.random_range(0.0..=params.f_max)).collect();
    let theta_i = IrsVector::random(params.elements, rng);
    let theta_e = IrsVector::random_phase(params.elements, rng);
    let (theta_i, theta_e) = match scheme {
        Scheme::WithIrs => (theta_i, theta_e),
        Scheme::RandPhase => (unit_modulus(&theta_i), theta_e),
        Scheme::WithoutIrs => (IrsVector::zeros(0), IrsVector::zeros(0)),
    };

    let mut sol = ComputeSolution::idle(params, theta_i.len());
    sol.f = f;
    sol.theta_i = theta_i;
    sol.refresh_bits(params);
    let noise = params.snr_gap * params.noise_power;
    let mut free = vec![true; mm];
    for k in 0..kk {
        let best = (0..mm)
            .filter(|&m| free[m])
            .map(|m| (m, ch.gain(k, m, &sol.theta_i)))
            .fold(None, |b: Option<(usize, f64)>, c| match b {
                Some(b) if b.1 >= c.1 => Some(b),
                _ => Some(c),
            });
        let Some((m, g)) = best else { break };
        free[m] = false;
        if sol.ell[k] <= 0.0 {
            continue;
        }
        if !(g > 0.0) {
            return Err(Error::Infeasible(format!("device {k} has no usable sub-band")));
        }
        let spectral = sol.ell[k] / (params.compute_time() * params.bandwidth);
        sol.alpha[k][m] = true;
        sol.p_i[k][m] = noise * (spectral * std::f64::consts::LN_2).exp_m1() / g;
    }
    Ok(InitialPoint { compute: sol, theta_e })
}

fn unit_modulus(theta: &IrsVector) -> IrsVector {
    IrsVector::projected(
        theta
            .as_slice()
            .iter()
            .map(|t| {
                let r = t.norm();
                if r > 0.0 {
                    t / r
                } else {
                    num_complex::Complex64::new(1.0, 0.0)
                }
            })
            .collect(),
    )
}

/// Output of the outer alternation.
#[derive(Debug, Clone, PartialEq)]
pub struct JointSolution {
    pub scheme: Scheme,
    pub wet: WetSolution,
    pub compute: ComputeSolution,
    /// Transfer energy plus edge computing energy [J].
    pub total_energy: f64,
    /// Total energy after initialization and after each outer iteration.
    pub trace: Vec<f64>,
    /// Transfer-phase traces, one per transfer solve.
    pub wet_traces: Vec<Vec<f64>>,
    /// Computing-phase edge-energy traces, one per computing solve.
    pub compute_traces: Vec<Vec<f64>>,
    /// Every surface-design run, in execution order.
    pub sca_runs: Vec<ScaOutcome>,
    /// Random starting points tried.
    pub init_attempts: usize,
}

impl JointSolution {
    pub fn wet_energy(&self) -> f64 {
        self.wet.objective
    }

    pub fn edge_energy(&self, params: &SystemParams) -> f64 {
        self.compute.edge_energy(params)
    }

    pub fn outer_iterations(&self) -> usize {
        self.trace.len().saturating_sub(1)
    }
}

/// `tau T sum p + vartheta sum max(0, L - (1-tau) T f / c)`.
pub fn total_energy(wet: &WetSolution, compute: &ComputeSolution, params: &SystemParams) -> f64 {
    let edge: f64 = (0..params.devices)
        .map(|k| params.offload_bits(k, compute.f[k]))
        .sum();
    params.wet_time() * wet.p_e.iter().sum::<f64>() + params.edge_energy_per_bit * edge
}

/// Full alternation for one channel realization. `ch` is the realization with
/// the surface present; the scheme decides how it is used.
pub fn optimize_joint<R: Rng + ?Sized>(
    ch: &ChannelSet,
    params: &SystemParams,
    scheme: Scheme,
    rng: &mut R,
) -> Result<JointSolution> {
    params.validate()?;
    let ch = scheme.channels(ch);
    let ch = ch.as_ref();
    let design = scheme.designs_surface();

    let mut attempt = 0;
    let (mut compute, mut wet) = loop {
        attempt += 1;
        let init = init_computing(ch, params, scheme, rng)?;
        match optimize_wet(ch, &init.compute, &init.theta_e, params, design) {
            Ok(w) => break (init.compute, w),
            Err(Error::Infeasible(msg)) if attempt < INIT_ATTEMPTS => {
                log::debug!("initial point {attempt} infeasible: {msg}");
            }
            Err(e) => return Err(e),
        }
    };

    let mut sca_runs = std::mem::take(&mut wet.sca);
    let mut wet_traces = vec![wet.trace.clone()];
    let mut compute_traces = Vec::new();
    let mut total = total_energy(&wet, &compute, params);
    let mut trace = vec![total];
    for _ in 0..params.t_max_outer {
        let run = optimize_computing(ch, &wet, &compute, params, design)?;
        compute_traces.push(run.trace);
        sca_runs.extend(run.sca);
        let mut next_wet = optimize_wet(ch, &run.solution, &wet.theta_e, params, design)?;
        sca_runs.append(&mut next_wet.sca);
        wet_traces.push(next_wet.trace.clone());
        let next = total_energy(&next_wet, &run.solution, params);
        if next > total {
            // Round-off only: every block step is non-increasing.
            log::debug!("outer step rejected: {total:e} -> {next:e}");
            break;
        }
        let done = sca::rel_change(total, next) <= params.eps;
        compute = run.solution;
        wet = next_wet;
        total = next;
        trace.push(total);
        if done {
            break;
        }
    }

    Ok(JointSolution {
        scheme,
        wet,
        compute,
        total_energy: total,
        trace,
        wet_traces,
        compute_traces,
        sca_runs,
        init_attempts: attempt,
    })
}

/// One row of a transfer-fraction sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct TauPoint {
    pub tau: f64,
    pub energy: std::result::Result<f64, String>,
}

/// Solve at every `tau` in `grid` with the same starting seed.
pub fn sweep_tau(
    ch: &ChannelSet,
    grid: &[f64],
    params: &SystemParams,
    scheme: Scheme,
    seed: u64,
) -> Vec<TauPoint> {
    grid.par_iter()
        .map(|&tau| {
            let p = SystemParams { tau, ..params.clone() };
            let mut rng = stream_rng(seed, INIT_STREAM);
            TauPoint {
                tau,
                energy: optimize_joint(ch, &p, scheme, &mut rng)
                    .map(|s| s.total_energy)
                    .map_err(|e| e.to_string()),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn energy_arithmetic() {
        let p = SystemParams::default();
        let mut c = ComputeSolution::idle(&p, 0);
        c.f = vec![0.0; p.devices];
        let total_bits: f64 = p.tasks.iter().map(|t| t.bits).sum();
        let w = WetSolution::new(vec![0.1 / p.subbands as f64; p.subbands], IrsVector::zeros(0), &p);
        let e = total_energy(&w, &c, &p);
        assert_relative_eq!(
            e,
            p.wet_time() * 0.1 + p.edge_energy_per_bit * total_bits,
            max_relative = 1e-12
        );
    }

    #[test]
    fn scheme_names_round_trip() {
        for s in Scheme::ALL {
            assert_eq!(s.name().parse::<Scheme>().unwrap(), s);
        }
        assert!("irs".parse::<Scheme>().is_err());
    }

    #[test]
    fn too_many_devices_is_rejected() {
        let p = SystemParams {
            subbands: 2,
            ..SystemParams::default()
        };
        let ch = draw_instance(&SystemParams::default(), 1).unwrap();
        let mut rng = stream_rng(1, INIT_STREAM);
        assert!(init_computing(&ch, &p, Scheme::WithIrs, &mut rng).is_err());
    }

    #[test]
    fn single_device_reserves_its_best_band() {
        let p = SystemParams::default().with_devices(1);
        let ch = draw_instance(&p, 3).unwrap();
        let mut rng = stream_rng(3, INIT_STREAM);
        let init = init_computing(&ch, &p, Scheme::WithIrs, &mut rng).unwrap();
        let c = &init.compute;
        let best = (0..p.subbands)
            .max_by(|&a, &b| ch.gain(0, a, &c.theta_i).total_cmp(&ch.gain(0, b, &c.theta_i)))
            .unwrap();
        assert!(c.alpha[0][best]);
        assert_eq!(c.alpha[0].iter().filter(|a| **a).count(), 1);
        // The reserved band alone meets the rate target.
        let r = c.rate(&ch, 0, &p);
        assert_relative_eq!(r, c.ell[0] / p.compute_time(), max_relative = 1e-9);
    }
}
