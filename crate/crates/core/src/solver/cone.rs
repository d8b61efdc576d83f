//! Cone bookkeeping for `R_+^l x Q^{q_1} x ... x Q^{q_r}`: Jordan algebra,
//! Nesterov-Todd scaling and maximal step lengths.
//!
//! Vectors are laid out as the `l` orthant entries followed by the second-order
//! blocks in order; every second-order block stores its "head" coordinate first.

/// Sizes of the product cone.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ConeDims {
    pub nonneg: usize,
    pub soc: Vec<usize>,
}

impl ConeDims {
    pub fn total(&self) -> usize {
        self.nonneg + self.soc.iter().sum::<usize>()
    }

    /// Barrier degree: one per orthant entry and one per second-order block.
    pub fn degree(&self) -> usize {
        self.nonneg + self.soc.len()
    }

    /// `(offset, len)` of each second-order block.
    pub fn soc_ranges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let mut off = self.nonneg;
        self.soc.iter().map(move |&q| {
            let r = (off, q);
            off += q;
            r
        })
    }

    /// Identity element `e`.
    pub fn identity(&self) -> Vec<f64> {
        let mut e = vec![0.0; self.total()];
        e[..self.nonneg].fill(1.0);
        for (off, _) in self.soc_ranges() {
            e[off] = 1.0;
        }
        e
    }

    /// Smallest "eigenvalue" of `x`; positive iff `x` lies in the interior.
    pub fn min_eig(&self, x: &[f64]) -> f64 {
        let mut m = f64::INFINITY;
        for &v in &x[..self.nonneg] {
            m = m.min(v);
        }
        for (off, q) in self.soc_ranges() {
            m = m.min(x[off] - norm(&x[off + 1..off + q]));
        }
        m
    }

    /// Jordan product `u o v`.
    pub fn prod(&self, u: &[f64], v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        for i in 0..self.nonneg {
            out[i] = u[i] * v[i];
        }
        for (off, q) in self.soc_ranges() {
            let (u0, u1) = (u[off], &u[off + 1..off + q]);
            let (v0, v1) = (v[off], &v[off + 1..off + q]);
            out[off] = u0 * v0 + dot(u1, v1);
            for j in 1..q {
                out[off + j] = u0 * v[off + j] + v0 * u[off + j];
            }
        }
        out
    }

    /// Solve `l o x = r` for `x`, with `l` in the interior.
    pub fn div(&self, l: &[f64], r: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; l.len()];
        for i in 0..self.nonneg {
            out[i] = r[i] / l[i];
        }
        for (off, q) in self.soc_ranges() {
            let (l0, l1) = (l[off], &l[off + 1..off + q]);
            let (r0, r1) = (r[off], &r[off + 1..off + q]);
            let det = l0 * l0 - dot(l1, l1);
            let x0 = (l0 * r0 - dot(l1, r1)) / det;
            out[off] = x0;
            for j in 1..q {
                out[off + j] = (r[off + j] - x0 * l[off + j]) / l0;
            }
        }
        out
    }

    /// Largest `alpha` (possibly infinite) keeping `x + alpha d` in the cone.
    /// `x` must be interior.
    pub fn max_step(&self, x: &[f64], d: &[f64]) -> f64 {
        let mut a = f64::INFINITY;
        for i in 0..self.nonneg {
            if d[i] < 0.0 {
                a = a.min(-x[i] / d[i]);
            }
        }
        for (off, q) in self.soc_ranges() {
            a = a.min(soc_step(&x[off..off + q], &d[off..off + q]));
        }
        a
    }
}

/// First positive root of `(x0 + a d0)^2 - |x1 + a d1|^2`, or infinity.
fn soc_step(x: &[f64], d: &[f64]) -> f64 {
    let qa = d[0] * d[0] - dot(&d[1..], &d[1..]);
    let qb = x[0] * d[0] - dot(&x[1..], &d[1..]);
    let qc = x[0] * x[0] - dot(&x[1..], &x[1..]);
    if qc <= 0.0 {
        return 0.0;
    }
    let scale = qa.abs().max(qb.abs()).max(qc);
    if qa.abs() <= 1e-14 * scale {
        return if qb < 0.0 { -qc / (2.0 * qb) } else { f64::INFINITY };
    }
    let disc = qb * qb - qa * qc;
    if disc < 0.0 {
        return f64::INFINITY;
    }
    // Stable roots of qa t^2 + 2 qb t + qc.
    let sq = disc.sqrt();
    let t = -(qb + qb.signum() * sq);
    let roots = [t / qa, if t != 0.0 { qc / t } else { f64::INFINITY }];
    roots
        .into_iter()
        .filter(|r| *r > 0.0)
        .fold(f64::INFINITY, f64::min)
}

/// Nesterov-Todd scaling `W` with `W z = W^{-1} s = lambda`.
///
/// Orthant part: diagonal `sqrt(s/z)`. Each second-order block is
/// `beta * [[w0, w1'], [w1, I + w1 w1' / (1 + w0)]]` with `w' J w = 1`.
#[derive(Debug, Clone)]
pub struct NtScaling {
    dims: ConeDims,
    d: Vec<f64>,
    blocks: Vec<(f64, Vec<f64>)>,
    pub lambda: Vec<f64>,
}

impl NtScaling {
    /// `s` and `z` must be strictly interior.
    pub fn new(dims: &ConeDims, s: &[f64], z: &[f64]) -> Option<Self> {
        let d: Vec<f64> = (0..dims.nonneg).map(|i| (s[i] / z[i]).sqrt()).collect();
        let mut blocks = Vec::with_capacity(dims.soc.len());
        for (off, q) in dims.soc_ranges() {
            let sb = &s[off..off + q];
            let zb = &z[off..off + q];
            let sn = jnorm(sb)?;
            let zn = jnorm(zb)?;
            let sbar: Vec<f64> = sb.iter().map(|v| v / sn).collect();
            let zbar: Vec<f64> = zb.iter().map(|v| v / zn).collect();
            let gamma = ((1.0 + dot(&sbar, &zbar)) / 2.0).sqrt();
            let mut w: Vec<f64> = sbar.iter().zip(&zbar).map(|(a, b)| -b + a).collect();
            w[0] = sbar[0] + zbar[0];
            for v in &mut w {
                *v /= 2.0 * gamma;
            }
            blocks.push(((sn / zn).sqrt(), w));
        }
        let mut nt = Self {
            dims: dims.clone(),
            d,
            blocks,
            lambda: Vec::new(),
        };
        nt.lambda = nt.apply(z, false);
        if nt.lambda.iter().all(|v| v.is_finite()) {
            Some(nt)
        } else {
            None
        }
    }

    /// `W x` or, with `inverse`, `W^{-1} x`. `W` is symmetric.
    pub fn apply(&self, x: &[f64], inverse: bool) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        for i in 0..self.dims.nonneg {
            out[i] = if inverse { x[i] / self.d[i] } else { x[i] * self.d[i] };
        }
        for ((off, q), (beta, w)) in self.dims.soc_ranges().zip(&self.blocks) {
            // The inverse flips the sign of w1 and the scale.
            let sign = if inverse { -1.0 } else { 1.0 };
            let scale = if inverse { 1.0 / beta } else { *beta };
            let x0 = x[off];
            let w0 = w[0];
            let w1x1 = dot(&w[1..], &x[off + 1..off + q]);
            out[off] = scale * (w0 * x0 + sign * w1x1);
            let coef = sign * x0 + w1x1 / (1.0 + w0);
            for j in 1..q {
                out[off + j] = scale * (x[off + j] + coef * w[j]);
            }
        }
        out
    }
}

fn jnorm(x: &[f64]) -> Option<f64> {
    let v = x[0] * x[0] - dot(&x[1..], &x[1..]);
    (v > 0.0 && x[0] > 0.0).then(|| v.sqrt())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dims() -> ConeDims {
        ConeDims {
            nonneg: 2,
            soc: vec![3, 2],
        }
    }

    fn interior(v: Vec<f64>, dims: &ConeDims) -> Vec<f64> {
        // Push an arbitrary vector into the interior along e.
        let shift = (1.0 - dims.min_eig(&v)).max(0.0);
        let e = dims.identity();
        v.iter().zip(&e).map(|(a, b)| a + shift * b).collect()
    }

    #[test]
    fn identity_is_unit_of_product() {
        let d = dims();
        let x = vec![1.0, 2.0, 3.0, 0.5, -1.0, 4.0, 2.0];
        assert_eq!(d.prod(&d.identity(), &x), x);
    }

    #[test]
    fn step_to_boundary() {
        let d = ConeDims {
            nonneg: 0,
            soc: vec![2],
        };
        // (1, 0) + a (0, 1): boundary at a = 1, and symmetric for the other sign.
        assert!((d.max_step(&[1.0, 0.0], &[0.0, 1.0]) - 1.0).abs() < 1e-15);
        assert!((d.max_step(&[1.0, 0.0], &[0.0, -1.0]) - 1.0).abs() < 1e-15);
        assert_eq!(d.max_step(&[1.0, 0.0], &[1.0, 0.5]), f64::INFINITY);
        // Head shrinking linearly: (2, 0) + a(-1, 0) hits the apex at 2.
        assert!((d.max_step(&[2.0, 0.0], &[-1.0, 0.0]) - 2.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn nt_scaling_maps_s_and_z_to_same_point(
            s in proptest::collection::vec(-2.0f64..2.0, 7),
            z in proptest::collection::vec(-2.0f64..2.0, 7),
        ) {
            let d = dims();
            let s = interior(s, &d);
            let z = interior(z, &d);
            let nt = NtScaling::new(&d, &s, &z).unwrap();
            let ws = nt.apply(&s, true);
            for (a, b) in ws.iter().zip(&nt.lambda) {
                prop_assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()));
            }
            // W^{-1} W x = x.
            let x: Vec<f64> = (0..7).map(|i| i as f64 - 3.0).collect();
            let back = nt.apply(&nt.apply(&x, false), true);
            for (a, b) in back.iter().zip(&x) {
                prop_assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()));
            }
        }

        #[test]
        fn div_inverts_prod(
            l in proptest::collection::vec(-2.0f64..2.0, 7),
            x in proptest::collection::vec(-2.0f64..2.0, 7),
        ) {
            let d = dims();
            let l = interior(l, &d);
            let r = d.prod(&l, &x);
            let back = d.div(&l, &r);
            for (a, b) in back.iter().zip(&x) {
                prop_assert!((a - b).abs() < 1e-8);
            }
        }

        #[test]
        fn max_step_lands_on_boundary(
            x in proptest::collection::vec(-2.0f64..2.0, 7),
            dir in proptest::collection::vec(-2.0f64..2.0, 7),
        ) {
            let d = dims();
            let x = interior(x, &d);
            let a = d.max_step(&x, &dir);
            if a.is_finite() {
                let at: Vec<f64> = x.iter().zip(&dir).map(|(u, v)| u + a * v).collect();
                prop_assert!(d.min_eig(&at).abs() < 1e-8);
            } else {
                let far: Vec<f64> = x.iter().zip(&dir).map(|(u, v)| u + 1e3 * v).collect();
                prop_assert!(d.min_eig(&far) >= -1e-9);
            }
        }
    }
}
