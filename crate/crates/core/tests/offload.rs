mod common;

use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;

use wpmec::offload::{
    dual_loop, lagrangian, offload_rate, optimize_computing, sca_theta_i, subgradients,
    update_frequencies, BandModel, ComputeSolution, DualState,
};
use wpmec::orchestrator::{draw_instance, stream_rng, INIT_STREAM};
use wpmec::{ChannelSet, IrsVector, SystemParams, WetSolution};

fn one_band_channel(gain: f64) -> ChannelSet {
    ChannelSet::from_cirs(1, vec![vec![Complex64::new(gain.sqrt(), 0.0)]], vec![Vec::new()]).unwrap()
}

/// Largest `f` in `[0, f_max]` with `kappa f^2 <= budget`, by bisection.
fn max_speed_bisection(budget: f64, kappa: f64, f_max: f64) -> f64 {
    if budget < 0.0 {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0, f_max);
    if kappa * hi * hi <= budget {
        return hi;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if kappa * mid * mid <= budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

#[test]
fn rate_hand_values() {
    let p = SystemParams::default().with_devices(1);
    let p = SystemParams { subbands: 1, taps_direct: 1, taps_irs_hap: 1, taps_device_irs: 1, ..p };
    let noise = p.snr_gap * p.noise_power;
    let ch = one_band_channel(1e-6);
    let none = IrsVector::zeros(0);
    assert_eq!(offload_rate(&ch, &none, &[true], &[0.0], 0, &p), 0.0);
    let r = offload_rate(&ch, &none, &[true], &[noise / 1e-6], 0, &p);
    assert!((r - p.bandwidth).abs() < 1e-9 * p.bandwidth);
    let r = offload_rate(&ch, &none, &[true], &[3.0 * noise / 1e-6], 0, &p);
    assert!((r - 2.0 * p.bandwidth).abs() < 1e-9 * p.bandwidth);
    assert_eq!(offload_rate(&ch, &none, &[false], &[1.0], 0, &p), 0.0);
}

#[test]
fn nothing_to_offload_means_no_association() {
    let mut p = SystemParams {
        elements: 4,
        ..SystemParams::default()
    };
    for t in &mut p.tasks {
        t.bits = 1.0;
    }
    let ch = draw_instance(&p, 2).unwrap();
    let f = vec![p.f_max; p.devices];
    let d = dual_loop(&ch, &IrsVector::zeros(4), &f, &vec![1.0; p.devices], &p, None).unwrap();
    assert!(d.alpha.iter().flatten().all(|a| !a));
    assert!(d.p_i.iter().flatten().all(|x| *x == 0.0));
    assert_eq!(d.offload_power, 0.0);
}

#[test]
fn single_device_matches_subset_oracle() {
    let base = SystemParams {
        subbands: 8,
        elements: 6,
        ..SystemParams::default()
    }
    .with_devices(1);
    let noise = base.snr_gap * base.noise_power;
    for seed in 0..10 {
        let ch = draw_instance(&base, seed).unwrap();
        let theta = IrsVector::random(base.elements, &mut stream_rng(seed, INIT_STREAM));
        let f = vec![0.0];
        let d = dual_loop(&ch, &theta, &f, &[1.0], &base, None).unwrap();
        let g: Vec<f64> = (0..base.subbands).map(|m| ch.gain(0, m, &theta)).collect();
        let rate = base.offload_bits(0, 0.0) / base.compute_time();
        let best = (1usize..1 << base.subbands)
            .filter_map(|mask| {
                let sub: Vec<f64> = (0..base.subbands).filter(|b| mask >> b & 1 == 1).map(|b| g[b]).collect();
                common::min_power_bisection(&sub, rate, base.bandwidth, noise)
                    .map(|p| p + base.circuit_power * sub.len() as f64)
            })
            .fold(f64::INFINITY, f64::min);
        assert!(d.feasible);
        let gap = (d.offload_power - best) / best;
        assert!(gap <= 0.05, "seed {seed}: {} vs {best}", d.offload_power);
        assert!(gap >= -1e-9, "seed {seed}: beat the oracle, {} vs {best}", d.offload_power);
        let got = offload_rate(&ch, &theta, &d.alpha[0], &d.p_i[0], 0, &base);
        assert!(got >= rate * (1.0 - 1e-9));
    }
}

#[test]
fn single_element_surface_aligns_phase() {
    let p = SystemParams {
        elements: 1,
        ..SystemParams::default()
    }
    .with_devices(1);
    let noise = p.snr_gap * p.noise_power;
    for seed in 0..5 {
        let ch = draw_instance(&p, seed).unwrap();
        let start = IrsVector::zeros(1);
        let g0 = ch.gain(0, 0, &start);
        let rate = p.offload_bits(0, 0.0) / p.compute_time();
        let mut alpha = vec![vec![false; p.subbands]];
        let mut p_i = vec![vec![0.0; p.subbands]];
        alpha[0][0] = true;
        p_i[0][0] = noise * (rate / p.bandwidth * std::f64::consts::LN_2).exp_m1() / g0;
        let run = sca_theta_i(&ch, &alpha, &p_i, &[0.0], &start, &p);
        let steps = 200_000;
        let best = (0..steps)
            .map(|i| {
                let t = IrsVector::new(vec![Complex64::from_polar(1.0, 2.0 * PI * i as f64 / steps as f64)]).unwrap();
                ch.gain(0, 0, &t)
            })
            .fold(0.0, f64::max);
        let got = ch.gain(0, 0, &run.theta);
        assert!((best - got) / best <= 1e-3, "seed {seed}: {got} vs {best}");
        assert!(run.objective.iter().all(|chi| *chi >= 0.0));
    }
}

#[test]
fn subgradients_match_finite_differences() {
    let p = SystemParams {
        elements: 4,
        ..SystemParams::default()
    };
    for seed in 0..5 {
        let ch = draw_instance(&p, seed).unwrap();
        let theta = IrsVector::random(p.elements, &mut stream_rng(seed, INIT_STREAM));
        let f = vec![0.5 * p.f_max; p.devices];
        let energies = vec![2e-5; p.devices];
        let d = dual_loop(&ch, &theta, &f, &energies, &p, None).unwrap();
        let mut sol = ComputeSolution::idle(&p, p.elements);
        sol.alpha = d.alpha;
        sol.p_i = d.p_i;
        sol.f = f;
        sol.theta_i = theta;
        sol.refresh_bits(&p);
        let (s_l, s_m) = subgradients(&sol, &energies, &ch, &p);
        let dual = DualState::new(vec![2.0; p.devices], vec![1e-6; p.devices], &p);
        for k in 0..p.devices {
            // Each constraint is measured against its own magnitude.
            let scales = [energies[k] / p.compute_time(), p.offload_bits(k, sol.f[k]) / p.compute_time()];
            for (which, s) in [(0, s_l[k]), (1, s_m[k])] {
                let at = |delta: f64| {
                    let mut d = dual.clone();
                    if which == 0 {
                        d.lambda[k] += delta;
                    } else {
                        d.mu[k] += delta;
                    }
                    lagrangian(&sol, &d, &energies, &ch, &p)
                };
                let h = if which == 0 { 1e-3 } else { 1e-9 };
                let fd = (at(h) - at(-h)) / (2.0 * h);
                // Minimizing the dual: the step direction is minus the slope.
                let tol = 1e-6 * (s.abs() + scales[which]);
                assert!((fd + s).abs() <= tol, "k {k} ({which}): {fd} vs {s}");
            }
        }
    }
}

#[test]
fn small_tasks_stay_local() {
    let mut p = SystemParams {
        elements: 4,
        ..SystemParams::default()
    };
    for t in &mut p.tasks {
        t.bits = 10.0;
    }
    let ch = draw_instance(&p, 4).unwrap();
    let wet = WetSolution::new(vec![1.0; p.subbands], IrsVector::zeros(4), &p);
    let run = optimize_computing(&ch, &wet, &ComputeSolution::idle(&p, 4), &p, true).unwrap();
    assert!(run.solution.ell.iter().all(|l| *l == 0.0));
    assert_eq!(run.solution.edge_energy(&p), 0.0);
    assert!(run.solution.alpha.iter().flatten().all(|a| !a));
}

#[test]
fn generous_energy_runs_cpus_flat_out() {
    let p = SystemParams {
        elements: 4,
        ..SystemParams::default()
    };
    let ch = draw_instance(&p, 6).unwrap();
    let wet = WetSolution::new(vec![1e3; p.subbands], IrsVector::zeros(4), &p);
    let run = optimize_computing(&ch, &wet, &ComputeSolution::idle(&p, 4), &p, true).unwrap();
    assert!(run.solution.f.iter().all(|f| *f == p.f_max));
    let expect: f64 = p
        .tasks
        .iter()
        .map(|t| p.edge_energy_per_bit * (t.bits - p.compute_time() * p.f_max / t.cycles_per_bit))
        .sum();
    assert!((run.solution.edge_energy(&p) - expect).abs() <= 1e-12 * expect);
    assert!(run.trace.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn waterfill_beats_power_grid(
        lambda in 1.0f64..20.0,
        mu in 0.0f64..20.0,
        gain in 1e-3f64..1e3,
        noise in 0.1f64..10.0,
        circuit in 0.0f64..1.0,
    ) {
        let m = BandModel { bandwidth: 1.0, noise, circuit };
        let p = m.power(lambda, mu, gain);
        let best = m.objective(lambda, mu, gain, p);
        let top = 2.0 * (p + mu / lambda + noise / gain);
        for i in 0..=1000 {
            let q = top * i as f64 / 1000.0;
            prop_assert!(m.objective(lambda, mu, gain, q) <= best + 1e-6 * best.abs().max(1.0));
        }
    }

    #[test]
    fn assignment_ignores_common_scaling(
        duals in prop::collection::vec((1.0f64..10.0, 0.0f64..10.0, 1e-3f64..10.0), 1..6),
        scale in 1e-3f64..1e3,
    ) {
        let m = BandModel { bandwidth: 1.0, noise: 1.0, circuit: 0.1 };
        let lambda: Vec<f64> = duals.iter().map(|d| d.0).collect();
        let mu: Vec<f64> = duals.iter().map(|d| d.1).collect();
        let gains: Vec<f64> = duals.iter().map(|d| d.2).collect();
        let (k, p) = m.assign(&lambda, &mu, &gains);
        let ls: Vec<f64> = lambda.iter().map(|l| l * scale).collect();
        let ms: Vec<f64> = mu.iter().map(|u| u * scale).collect();
        let (k2, p2) = m.assign(&ls, &ms, &gains);
        // Exact ties may resolve differently only through round-off.
        if k2 != k {
            let v = |j: usize| m.objective(lambda[j], mu[j], gains[j], m.power(lambda[j], mu[j], gains[j]));
            prop_assert!((v(k) - v(k2)).abs() <= 1e-12 * v(k).abs().max(1.0));
        } else {
            prop_assert!((p - p2).abs() <= 1e-12 * p.max(1.0));
        }
    }

    #[test]
    fn frequency_rule_is_largest_affordable(
        energy in 0.0f64..2e-8,
        power in 0.0f64..2e-6,
        circuit in 0.0f64..1e-7,
    ) {
        let p = SystemParams { circuit_power: circuit, ..SystemParams::default() }.with_devices(1);
        let mut alpha = vec![vec![false; p.subbands]];
        let mut p_i = vec![vec![0.0; p.subbands]];
        alpha[0][3] = true;
        p_i[0][3] = power;
        let f = update_frequencies(&[energy], &alpha, &p_i, &[0.0], &p)[0];
        let budget = energy / p.compute_time() - power - circuit;
        let oracle = max_speed_bisection(budget, p.kappa, p.f_max);
        prop_assert!((f - oracle).abs() <= 1e-9 * p.f_max, "{f} vs {oracle}");
    }
}
