//! Geometry, path loss, multipath taps and frequency-domain channels.
//!
//! Time-domain impulse responses are zero-padded to `M` taps and mapped to
//! sub-bands with unnormalized DFT rows `e^{-j 2 pi m l / M}`. For every device
//! the frequency response is affine in the IRS vector:
//!
//! ```text
//! C[k][m](theta) = dft[m] . h_d[k] + (dft[m] . V[k]) . theta
//! ```
//!
//! Both inner products are precomputed when the set is built, so evaluating a
//! response costs `O(N)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::params::SystemParams;

/// Reflection coefficients of the surface, each inside the closed unit disk.
#[derive(Debug, Clone, PartialEq)]
pub struct IrsVector {
    theta: Vec<Complex64>,
}

/// Slack allowed on `|theta_n| <= 1` before a vector is rejected.
pub const UNIT_MODULUS_TOL: f64 = 1e-9;

impl IrsVector {
    pub fn zeros(n: usize) -> Self {
        Self {
            theta: vec![Complex64::new(0.0, 0.0); n],
        }
    }

    /// Validating constructor.
    pub fn new(theta: Vec<Complex64>) -> Result<Self> {
        if let Some((n, t)) = theta
            .iter()
            .enumerate()
            .find(|(_, t)| !(t.norm() <= 1.0 + UNIT_MODULUS_TOL))
        {
            return Err(Error::Domain(format!(
                "reflection coefficient {n} has modulus {} > 1",
                t.norm()
            )));
        }
        Ok(Self { theta })
    }

    /// Build from arbitrary values, pulling every entry back onto the unit disk.
    pub fn projected(theta: Vec<Complex64>) -> Self {
        let theta = theta
            .into_iter()
            .map(|t| {
                let r = t.norm();
                if r > 1.0 {
                    t / r
                } else if r.is_finite() {
                    t
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .collect();
        Self { theta }
    }

    /// Unit-modulus coefficients with uniform phases on `[0, 2 pi)`.
    pub fn random_phase<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let theta = (0..n)
            .map(|_| Complex64::from_polar(1.0, rng.random_range(0.0..2.0 * PI)))
            .collect();
        Self { theta }
    }

    /// Amplitudes uniform on `[0, 1]`, phases uniform on `[0, 2 pi)`.
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let theta = (0..n)
            .map(|_| {
                let amp: f64 = rng.random_range(0.0..=1.0);
                Complex64::from_polar(amp, rng.random_range(0.0..2.0 * PI))
            })
            .collect();
        Self { theta }
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.theta
    }

    pub fn max_modulus(&self) -> f64 {
        self.theta.iter().map(|t| t.norm()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    pub hap: Point,
    pub irs: Point,
    /// Centre of the disk the devices are dropped in.
    pub center: Point,
    pub devices: Vec<Point>,
}

/// HAP at the origin, IRS on the x axis at the cell radius, device disk centred
/// `d1` from the HAP (hence `d2` short of the IRS).
pub fn sample_geometry<R: Rng + ?Sized>(params: &SystemParams, rng: &mut R) -> Geometry {
    let center = Point::new(params.d1, 0.0);
    let devices = (0..params.devices)
        .map(|_| {
            let u: f64 = rng.random();
            let phi: f64 = rng.random_range(0.0..2.0 * PI);
            let rad = params.device_radius * u.sqrt();
            Point::new(center.x + rad * phi.cos(), center.y + rad * phi.sin())
        })
        .collect();
    Geometry {
        hap: Point::new(0.0, 0.0),
        irs: Point::new(params.cell_radius, 0.0),
        center,
        devices,
    }
}

/// Large-scale power gain: `-PL0 - 10 beta log10(d/d0)` dB, as a linear factor.
pub fn path_loss_gain(d: f64, beta: f64, params: &SystemParams) -> Result<f64> {
    if !(d >= params.d0) {
        return Err(Error::Domain(format!(
            "distance {d} m is below the reference distance {} m",
            params.d0
        )));
    }
    let db = -params.pl0_db - 10.0 * beta * (d / params.d0).log10();
    Ok(10f64.powf(db / 10.0))
}

/// I.i.d. CN(0, gain/num_taps) taps, so the expected total power equals `gain`.
pub fn sample_cir<R: Rng + ?Sized>(
    num_taps: usize,
    gain: f64,
    rng: &mut R,
) -> Result<Vec<Complex64>> {
    if num_taps == 0 {
        return Err(Error::InvalidParams("tap count must be at least 1".into()));
    }
    if !(gain > 0.0 && gain.is_finite()) {
        return Err(Error::InvalidParams(format!("tap gain must be positive, got {gain}")));
    }
    let sd = (gain / num_taps as f64 / 2.0).sqrt();
    Ok((0..num_taps)
        .map(|_| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Complex64::new(sd * re, sd * im)
        })
        .collect())
}

/// Linear convolution `r * g` zero-padded to length `m`.
pub fn compose_reflection(r: &[Complex64], g: &[Complex64], m: usize) -> Result<Vec<Complex64>> {
    if r.is_empty() || g.is_empty() {
        return Err(Error::InvalidParams("empty tap vector".into()));
    }
    let needed = r.len() + g.len() - 1;
    if needed > m {
        return Err(Error::LengthOverflow {
            needed,
            available: m,
        });
    }
    let mut out = vec![Complex64::new(0.0, 0.0); m];
    for (i, a) in r.iter().enumerate() {
        for (j, b) in g.iter().enumerate() {
            out[i + j] += a * b;
        }
    }
    Ok(out)
}

/// Unnormalized `M`-point DFT matrix, row-major.
pub fn dft_matrix(m: usize) -> Vec<Vec<Complex64>> {
    (0..m)
        .map(|row| {
            (0..m)
                .map(|l| {
                    // Reduce the exponent first to keep the phase accurate.
                    let idx = (row * l) % m;
                    Complex64::from_polar(1.0, -2.0 * PI * idx as f64 / m as f64)
                })
                .collect()
        })
        .collect()
}

fn dot(row: &[Complex64], v: &[Complex64]) -> Complex64 {
    row.iter().zip(v).map(|(a, b)| a * b).sum()
}

/// All channels of one realization. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    devices: usize,
    subbands: usize,
    elements: usize,
    /// `h_d[k]`: direct CIR, length `M`.
    h_d: Vec<Vec<Complex64>>,
    /// `v[k][n]`: reflected CIR through element `n`, length `M`.
    v: Vec<Vec<Vec<Complex64>>>,
    dft: Vec<Vec<Complex64>>,
    /// `dft[m] . h_d[k]` at `k * M + m`.
    direct: Vec<Complex64>,
    /// `dft[m] . V[k]` (length `N`) at `k * M + m`.
    reflect: Vec<Vec<Complex64>>,
}

impl ChannelSet {
    /// Assemble from time-domain responses; all vectors must have length `m`.
    pub fn from_cirs(
        m: usize,
        h_d: Vec<Vec<Complex64>>,
        v: Vec<Vec<Vec<Complex64>>>,
    ) -> Result<Self> {
        if h_d.len() != v.len() {
            return Err(Error::InvalidParams(format!(
                "{} direct responses but {} reflection matrices",
                h_d.len(),
                v.len()
            )));
        }
        let elements = v.first().map_or(0, Vec::len);
        for (k, (h, vk)) in h_d.iter().zip(&v).enumerate() {
            if h.len() != m || vk.len() != elements || vk.iter().any(|c| c.len() != m) {
                return Err(Error::InvalidParams(format!(
                    "channel of device {k} has inconsistent dimensions"
                )));
            }
        }
        let dft = dft_matrix(m);
        let mut direct = Vec::with_capacity(h_d.len() * m);
        let mut reflect = Vec::with_capacity(h_d.len() * m);
        for (h, vk) in h_d.iter().zip(&v) {
            for row in &dft {
                direct.push(dot(row, h));
                reflect.push(vk.iter().map(|col| dot(row, col)).collect());
            }
        }
        Ok(Self {
            devices: h_d.len(),
            subbands: m,
            elements,
            h_d,
            v,
            dft,
            direct,
            reflect,
        })
    }

    pub fn devices(&self) -> usize {
        self.devices
    }

    pub fn subbands(&self) -> usize {
        self.subbands
    }

    pub fn elements(&self) -> usize {
        self.elements
    }

    pub fn direct_cir(&self, k: usize) -> &[Complex64] {
        &self.h_d[k]
    }

    /// Column `n` of the reflection matrix of device `k`.
    pub fn reflection_cir(&self, k: usize, n: usize) -> &[Complex64] {
        &self.v[k][n]
    }

    pub fn dft_row(&self, m: usize) -> &[Complex64] {
        &self.dft[m]
    }

    /// Direct part of the response, `dft[m] . h_d[k]`.
    pub fn direct_cfr(&self, k: usize, m: usize) -> Complex64 {
        self.direct[k * self.subbands + m]
    }

    /// Reflected row `dft[m] . V[k]`, one entry per element.
    pub fn reflect_row(&self, k: usize, m: usize) -> &[Complex64] {
        &self.reflect[k * self.subbands + m]
    }

    fn check(&self, k: usize, m: usize, theta: &IrsVector) -> Result<()> {
        if k >= self.devices {
            return Err(Error::IndexOutOfRange {
                what: "device",
                index: k,
                limit: self.devices,
            });
        }
        if m >= self.subbands {
            return Err(Error::IndexOutOfRange {
                what: "sub-band",
                index: m,
                limit: self.subbands,
            });
        }
        if theta.len() != self.elements {
            return Err(Error::LengthOverflow {
                needed: theta.len(),
                available: self.elements,
            });
        }
        Ok(())
    }

    /// Frequency response of device `k` on sub-band `m`.
    pub fn cfr(&self, k: usize, m: usize, theta: &IrsVector) -> Result<Complex64> {
        self.check(k, m, theta)?;
        Ok(self.cfr_unchecked(k, m, theta))
    }

    /// As [`cfr`](Self::cfr) with indices assumed valid.
    pub fn cfr_unchecked(&self, k: usize, m: usize, theta: &IrsVector) -> Complex64 {
        self.direct_cfr(k, m) + dot(self.reflect_row(k, m), theta.as_slice())
    }

    /// `|C[k][m](theta)|^2`.
    pub fn gain(&self, k: usize, m: usize, theta: &IrsVector) -> f64 {
        self.cfr_unchecked(k, m, theta).norm_sqr()
    }

    /// All `K x M` power gains, row-major.
    pub fn gains(&self, theta: &IrsVector) -> Vec<f64> {
        (0..self.devices)
            .flat_map(|k| (0..self.subbands).map(move |m| (k, m)))
            .map(|(k, m)| self.gain(k, m, theta))
            .collect()
    }

    /// Composite time-domain response `h_d[k] + V[k] theta`.
    pub fn composite_cir(&self, k: usize, theta: &IrsVector) -> Vec<Complex64> {
        let mut h = self.h_d[k].clone();
        for (col, t) in self.v[k].iter().zip(theta.as_slice()) {
            for (hl, c) in h.iter_mut().zip(col) {
                *hl += c * t;
            }
        }
        h
    }

    /// Same realization with the surface removed.
    pub fn without_irs(&self) -> Self {
        Self {
            elements: 0,
            v: vec![Vec::new(); self.devices],
            reflect: vec![Vec::new(); self.devices * self.subbands],
            ..self.clone()
        }
    }
}

/// Draw a channel realization for `geometry`.
///
/// Device-IRS distances below the reference distance are clamped to it; every
/// surface element shares the IRS reference point.
pub fn build_channels<R: Rng + ?Sized>(
    params: &SystemParams,
    geometry: &Geometry,
    rng: &mut R,
) -> Result<ChannelSet> {
    let m = params.subbands;
    let spread = params.taps_direct.max(params.taps_reflected());
    if spread > m {
        return Err(Error::LengthOverflow {
            needed: spread,
            available: m,
        });
    }
    if geometry.devices.len() != params.devices {
        return Err(Error::InvalidParams(format!(
            "geometry holds {} devices, parameters {}",
            geometry.devices.len(),
            params.devices
        )));
    }
    let clamp = |d: f64| d.max(params.d0);
    // Direct links first, then one element at a time, so realizations with
    // different surface sizes share their direct links and common elements.
    let mut h_d = Vec::with_capacity(params.devices);
    for dev in &geometry.devices {
        let gain_ua = path_loss_gain(clamp(dev.dist(&geometry.hap)), params.beta_ua, params)?;
        let mut h = sample_cir(params.taps_direct, gain_ua, rng)?;
        h.resize(m, Complex64::new(0.0, 0.0));
        h_d.push(h);
    }
    let gain_ia = path_loss_gain(clamp(geometry.irs.dist(&geometry.hap)), params.beta_ia, params)?;
    let gain_ui: Vec<f64> = geometry
        .devices
        .iter()
        .map(|dev| path_loss_gain(clamp(dev.dist(&geometry.irs)), params.beta_ui, params))
        .collect::<Result<_>>()?;
    let mut v = vec![Vec::with_capacity(params.elements); params.devices];
    for _ in 0..params.elements {
        // The IRS-HAP hop is common to all devices.
        let g = sample_cir(params.taps_irs_hap, gain_ia, rng)?;
        for (k, col) in v.iter_mut().enumerate() {
            let r = sample_cir(params.taps_device_irs, gain_ui[k], rng)?;
            col.push(compose_reflection(&r, &g, m)?);
        }
    }
    ChannelSet::from_cirs(m, h_d, v)
}
