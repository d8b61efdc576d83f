//! Fixture builders shared by the benchmarks.

use wpmec::offload::ComputeSolution;
use wpmec::orchestrator::{draw_instance, init_computing, stream_rng, Scheme, INIT_STREAM};
use wpmec::solver::ConeProblem;
use wpmec::{ChannelSet, IrsVector, SystemParams};

/// A realization at default parameters with `elements` surface elements and
/// the random starting point the joint optimizer would use.
pub struct Fixture {
    pub params: SystemParams,
    pub channels: ChannelSet,
    pub compute: ComputeSolution,
    pub theta_e: IrsVector,
}

pub fn fixture(elements: usize, seed: u64) -> Fixture {
    let params = SystemParams {
        elements,
        ..SystemParams::default()
    };
    let channels = draw_instance(&params, seed).expect("default parameters are valid");
    let init = init_computing(&channels, &params, Scheme::WithIrs, &mut stream_rng(seed, INIT_STREAM))
        .expect("default instance has usable bands");
    Fixture {
        params,
        channels,
        compute: init.compute,
        theta_e: init.theta_e,
    }
}

/// Dense covering LP `min 1'x  s.t.  A x >= 1, x >= 0` with `rows x cols`
/// deterministic positive coefficients.
pub fn covering_lp(rows: usize, cols: usize) -> ConeProblem {
    let mut p = ConeProblem::new(cols);
    p.objective = vec![1.0; cols];
    for r in 0..rows {
        let row = (0..cols)
            .map(|c| 0.1 + ((r * 7 + c * 13) % 17) as f64 / 17.0)
            .collect();
        p.add_ge(row, 1.0);
    }
    for c in 0..cols {
        p.set_bounds(c, Some(0.0), None);
    }
    p
}
