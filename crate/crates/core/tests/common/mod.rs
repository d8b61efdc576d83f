//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use rand::Rng;
use wpmec::solver::{ConeProblem, SocBlock};

/// Solve a small dense system by Gaussian elimination with partial pivoting.
pub fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| a[i][j] * x[j]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    Some(x)
}

/// Bounded LP `min c'x, A x <= b, lo <= x <= hi` in inequality form.
#[derive(Debug, Clone)]
pub struct SmallLp {
    pub c: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
    pub lo: f64,
    pub hi: f64,
}

impl SmallLp {
    pub fn random<R: Rng>(rng: &mut R) -> Self {
        let n = rng.random_range(2..=3);
        let m = rng.random_range(1..=5);
        let (lo, hi) = (-3.0, 3.0);
        let x0: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mut rows = Vec::new();
        let mut rhs = Vec::new();
        for _ in 0..m {
            let r: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let at: f64 = r.iter().zip(&x0).map(|(a, x)| a * x).sum();
            rhs.push(at + rng.random_range(0.0..1.0));
            rows.push(r);
        }
        Self {
            c: (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
            rows,
            rhs,
            lo,
            hi,
        }
    }

    pub fn n(&self) -> usize {
        self.c.len()
    }

    pub fn to_problem(&self) -> ConeProblem {
        let mut p = ConeProblem::new(self.n());
        p.objective = self.c.clone();
        for (r, b) in self.rows.iter().zip(&self.rhs) {
            p.add_le(r.clone(), *b);
        }
        for i in 0..self.n() {
            p.set_bounds(i, Some(self.lo), Some(self.hi));
        }
        p
    }

    /// All constraints as `a'x <= b`, bounds included.
    fn all_rows(&self) -> Vec<(Vec<f64>, f64)> {
        let n = self.n();
        let mut out: Vec<(Vec<f64>, f64)> =
            self.rows.iter().cloned().zip(self.rhs.iter().copied()).collect();
        for i in 0..n {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            out.push((e.clone(), self.hi));
            e[i] = -1.0;
            out.push((e, -self.lo));
        }
        out
    }

    /// Minimum over all feasible vertices.
    pub fn vertex_oracle(&self) -> Option<f64> {
        let n = self.n();
        let rows = self.all_rows();
        let mut best: Option<f64> = None;
        let mut idx: Vec<usize> = (0..n).collect();
        loop {
            let a: Vec<Vec<f64>> = idx.iter().map(|&i| rows[i].0.clone()).collect();
            let b: Vec<f64> = idx.iter().map(|&i| rows[i].1).collect();
            if let Some(x) = solve_dense(a, b) {
                let feasible = rows
                    .iter()
                    .all(|(r, b)| r.iter().zip(&x).map(|(a, x)| a * x).sum::<f64>() <= b + 1e-9);
                if feasible {
                    let v: f64 = self.c.iter().zip(&x).map(|(c, x)| c * x).sum();
                    best = Some(best.map_or(v, |b: f64| b.min(v)));
                }
            }
            // Next combination.
            let mut i = n;
            loop {
                if i == 0 {
                    return best;
                }
                i -= 1;
                if idx[i] < rows.len() - n + i {
                    idx[i] += 1;
                    for j in i + 1..n {
                        idx[j] = idx[j - 1] + 1;
                    }
                    break;
                }
            }
        }
    }
}

/// Two-variable SOCP: a disk, a linear cut and a general cone.
#[derive(Debug, Clone)]
pub struct SmallSocp {
    pub c: [f64; 2],
    pub center: [f64; 2],
    pub radius: f64,
    pub cut: ([f64; 2], f64),
    /// `||A x + b|| <= d'x + e`.
    pub a: [[f64; 2]; 2],
    pub b: [f64; 2],
    pub d: [f64; 2],
    pub e: f64,
}

impl SmallSocp {
    pub fn random<R: Rng>(rng: &mut R) -> Self {
        let center = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let radius = rng.random_range(0.5..2.0);
        let ang: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let cut_dir = [ang.cos(), ang.sin()];
        let cut_rhs = cut_dir[0] * center[0] + cut_dir[1] * center[1] + rng.random_range(-0.3..1.0) * radius;
        let a = [
            [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
            [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
        ];
        let b = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let d = [rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)];
        let ac = [
            a[0][0] * center[0] + a[0][1] * center[1] + b[0],
            a[1][0] * center[0] + a[1][1] * center[1] + b[1],
        ];
        let e = ac[0].hypot(ac[1]) - (d[0] * center[0] + d[1] * center[1]) + rng.random_range(0.2..1.0);
        let th: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        Self {
            c: [th.cos(), th.sin()],
            center,
            radius,
            cut: (cut_dir, cut_rhs),
            a,
            b,
            d,
            e,
        }
    }

    pub fn to_problem(&self) -> ConeProblem {
        let mut p = ConeProblem::new(2);
        p.objective = self.c.to_vec();
        p.add_soc(SocBlock {
            a: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            b: vec![-self.center[0], -self.center[1]],
            c: vec![0.0, 0.0],
            d: self.radius,
        });
        p.add_le(self.cut.0.to_vec(), self.cut.1);
        p.add_soc(SocBlock {
            a: vec![self.a[0].to_vec(), self.a[1].to_vec()],
            b: self.b.to_vec(),
            c: self.d.to_vec(),
            d: self.e,
        });
        p
    }

    pub fn feasible(&self, x: [f64; 2]) -> bool {
        let disk = (x[0] - self.center[0]).hypot(x[1] - self.center[1]) <= self.radius;
        let cut = self.cut.0[0] * x[0] + self.cut.0[1] * x[1] <= self.cut.1;
        let ax = [
            self.a[0][0] * x[0] + self.a[0][1] * x[1] + self.b[0],
            self.a[1][0] * x[0] + self.a[1][1] * x[1] + self.b[1],
        ];
        let cone = ax[0].hypot(ax[1]) <= self.d[0] * x[0] + self.d[1] * x[1] + self.e;
        disk && cut && cone
    }

    pub fn value(&self, x: [f64; 2]) -> f64 {
        self.c[0] * x[0] + self.c[1] * x[1]
    }

    /// Best feasible value on a grid over the disk's bounding box, zooming
    /// in slowly around the incumbent so thin feasible slivers are followed.
    pub fn grid_oracle(&self) -> Option<f64> {
        let steps = 100;
        let mut lo = [self.center[0] - self.radius, self.center[1] - self.radius];
        let mut span = 2.0 * self.radius;
        let mut best: Option<([f64; 2], f64)> = None;
        for _ in 0..40 {
            let h = span / steps as f64;
            for i in 0..=steps {
                for j in 0..=steps {
                    let x = [lo[0] + i as f64 * h, lo[1] + j as f64 * h];
                    if self.feasible(x) {
                        let v = self.value(x);
                        if best.is_none_or(|b| v < b.1) {
                            best = Some((x, v));
                        }
                    }
                }
            }
            let (x, _) = best?;
            span *= 0.5;
            lo = [x[0] - span / 2.0, x[1] - span / 2.0];
        }
        best.map(|b| b.1)
    }
}

/// Least total power reaching `rate` bit/s on bands with gains `g` (|C|^2),
/// bandwidth `bw` and effective noise `noise`; water level found by
/// bisection. `None` if there is no usable band.
pub fn min_power_bisection(g: &[f64], rate: f64, bw: f64, noise: f64) -> Option<f64> {
    if rate <= 0.0 {
        return Some(0.0);
    }
    if !g.iter().any(|x| *x > 0.0) {
        return None;
    }
    let achieved = |w: f64| -> f64 {
        g.iter()
            .filter(|x| **x > 0.0)
            .map(|gm| bw * (1.0 + (w - noise / gm).max(0.0) * gm / noise).log2())
            .sum()
    };
    let mut hi = g
        .iter()
        .filter(|x| **x > 0.0)
        .map(|gm| noise / gm)
        .fold(f64::INFINITY, f64::min);
    while achieved(hi) < rate {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if achieved(mid) < rate {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(
        g.iter()
            .filter(|x| **x > 0.0)
            .map(|gm| (hi - noise / gm).max(0.0))
            .sum(),
    )
}

/// Least total uplink power (transmit plus `circuit` per used band) over
/// every association of `m` bands to two devices or to nobody.
/// `gains[k][m]`, `rates[k]` in bit/s.
pub fn exhaustive_two_device(
    gains: &[Vec<f64>],
    rates: &[f64],
    bw: f64,
    noise: f64,
    circuit: f64,
) -> f64 {
    let m = gains[0].len();
    let subset_cost = |k: usize, mask: usize| -> f64 {
        let g: Vec<f64> = (0..m).filter(|b| mask >> b & 1 == 1).map(|b| gains[k][b]).collect();
        match min_power_bisection(&g, rates[k], bw, noise) {
            Some(p) if rates[k] > 0.0 => p + circuit * g.len() as f64,
            Some(_) => 0.0,
            None => f64::INFINITY,
        }
    };
    let costs: Vec<Vec<f64>> = (0..2)
        .map(|k| (0..1usize << m).map(|mask| subset_cost(k, mask)).collect())
        .collect();
    let mut best = f64::INFINITY;
    for a in 0..1usize << m {
        if !costs[0][a].is_finite() {
            continue;
        }
        let rest = !a & ((1 << m) - 1);
        // Enumerate subsets of the remaining bands.
        let mut b = rest;
        loop {
            best = best.min(costs[0][a] + costs[1][b]);
            if b == 0 {
                break;
            }
            b = (b - 1) & rest;
        }
    }
    best
}
