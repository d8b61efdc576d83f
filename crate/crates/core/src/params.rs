//! System constants of the harvest-then-compute model.
//!
//! All quantities are stored in SI units (W, J, s, Hz, bit, m). Conversion from
//! the mW / Kbit units used in experiment configs happens in [`crate::experiment`].

use rand::Rng;

use crate::error::{Error, Result};

/// Computational task of one device for one block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviceTask {
    /// Bits to process in the block.
    pub bits: f64,
    /// CPU cycles needed per bit.
    pub cycles_per_bit: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemParams {
    pub devices: usize,
    pub subbands: usize,
    pub elements: usize,
    /// Block duration T [s].
    pub block_len: f64,
    /// Fraction of the block used for energy transfer.
    pub tau: f64,
    /// Sub-band bandwidth [Hz].
    pub bandwidth: f64,
    /// Harvesting efficiency.
    pub eta: f64,
    /// SNR gap (linear).
    pub snr_gap: f64,
    /// Per-sub-band noise power [W].
    pub noise_power: f64,
    /// Effective switched capacitance of the device CPUs.
    pub kappa: f64,
    /// Maximum CPU frequency [cycle/s].
    pub f_max: f64,
    /// Circuit power of an active offloading sub-band [W].
    pub circuit_power: f64,
    /// Edge computing energy [J/bit].
    pub edge_energy_per_bit: f64,
    /// Edge CPU speed [cycle/s]; informational.
    pub f_edge: f64,
    pub tasks: Vec<DeviceTask>,
    /// Range used when tasks are redrawn per trial.
    pub task_bits_range: (f64, f64),
    pub cycles_per_bit_range: (f64, f64),

    /// Path loss at the reference distance [dB].
    pub pl0_db: f64,
    pub d0: f64,
    pub beta_ua: f64,
    pub beta_ui: f64,
    pub beta_ia: f64,

    /// Cell radius; the IRS sits on the cell edge.
    pub cell_radius: f64,
    /// HAP to device-circle centre.
    pub d1: f64,
    /// Device-circle centre to IRS.
    pub d2: f64,
    /// Device-circle radius.
    pub device_radius: f64,

    pub taps_direct: usize,
    pub taps_irs_hap: usize,
    pub taps_device_irs: usize,

    pub eps: f64,
    /// Iteration cap for inner loops.
    pub t_max: usize,
    /// Iteration cap for the outer WET/computing alternation.
    pub t_max_outer: usize,
    /// Initial subgradient steps for the energy and rate multipliers.
    pub step_lambda: f64,
    pub step_mu: f64,
}

impl Default for SystemParams {
    fn default() -> Self {
        let devices = 3;
        let task_bits_range = (15e3, 20e3);
        let cycles_per_bit_range = (400.0, 500.0);
        Self {
            devices,
            subbands: 16,
            elements: 30,
            block_len: 10e-3,
            tau: 0.1,
            bandwidth: 312.5e3,
            eta: 0.5,
            snr_gap: 2.0,
            noise_power: 1.24e-15,
            kappa: 1e-28,
            f_max: 1e8,
            circuit_power: DEFAULT_CIRCUIT_POWER,
            edge_energy_per_bit: 5e-8,
            f_edge: 1e9,
            tasks: spread_tasks(devices, task_bits_range, cycles_per_bit_range),
            task_bits_range,
            cycles_per_bit_range,
            pl0_db: 30.0,
            d0: 1.0,
            beta_ua: 3.5,
            beta_ui: 2.2,
            beta_ia: 2.2,
            cell_radius: 12.0,
            d1: 11.0,
            d2: 1.0,
            device_radius: 1.0,
            taps_direct: 4,
            taps_irs_hap: 2,
            taps_device_irs: 3,
            eps: 1e-3,
            t_max: 50,
            t_max_outer: 20,
            step_lambda: 0.1,
            step_mu: 0.1,
        }
    }
}

/// Circuit power per active offloading sub-band [W].
pub const DEFAULT_CIRCUIT_POWER: f64 = 1e-8;

/// Evenly spread tasks over the configured ranges (deterministic defaults).
fn spread_tasks(devices: usize, bits: (f64, f64), cycles: (f64, f64)) -> Vec<DeviceTask> {
    (0..devices)
        .map(|k| {
            let frac = if devices > 1 {
                k as f64 / (devices - 1) as f64
            } else {
                0.5
            };
            DeviceTask {
                bits: bits.0 + frac * (bits.1 - bits.0),
                cycles_per_bit: cycles.0 + frac * (cycles.1 - cycles.0),
            }
        })
        .collect()
}

impl SystemParams {
    /// Resize the device population, respreading the deterministic tasks.
    pub fn with_devices(mut self, devices: usize) -> Self {
        self.devices = devices;
        self.tasks = spread_tasks(devices, self.task_bits_range, self.cycles_per_bit_range);
        self
    }

    /// Draw every device task uniformly from the configured ranges.
    pub fn draw_tasks<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let (b0, b1) = self.task_bits_range;
        let (c0, c1) = self.cycles_per_bit_range;
        self.tasks = (0..self.devices)
            .map(|_| DeviceTask {
                bits: if b1 > b0 { rng.random_range(b0..=b1) } else { b0 },
                cycles_per_bit: if c1 > c0 { rng.random_range(c0..=c1) } else { c0 },
            })
            .collect();
    }

    /// Reflected-path tap count L1 + L2 - 1.
    pub fn taps_reflected(&self) -> usize {
        self.taps_irs_hap + self.taps_device_irs - 1
    }

    /// Computing phase duration (1 - tau) T.
    pub fn compute_time(&self) -> f64 {
        (1.0 - self.tau) * self.block_len
    }

    /// Energy transfer duration tau T.
    pub fn wet_time(&self) -> f64 {
        self.tau * self.block_len
    }

    /// Bits left for offloading when device `k` runs at `f` cycle/s, floored at 0.
    pub fn offload_bits(&self, k: usize, f: f64) -> f64 {
        let task = &self.tasks[k];
        (task.bits - self.compute_time() * f / task.cycles_per_bit).max(0.0)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return bad(format!("tau must lie in (0,1), got {}", self.tau));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return bad(format!("eta must lie in [0,1], got {}", self.eta));
        }
        if self.devices == 0 || self.subbands == 0 {
            return bad("device and sub-band counts must be positive".into());
        }
        if self.tasks.len() != self.devices {
            return bad(format!(
                "{} tasks configured for {} devices",
                self.tasks.len(),
                self.devices
            ));
        }
        let positive = [
            ("block_len", self.block_len),
            ("bandwidth", self.bandwidth),
            ("snr_gap", self.snr_gap),
            ("noise_power", self.noise_power),
            ("kappa", self.kappa),
            ("f_max", self.f_max),
            ("d0", self.d0),
            ("cell_radius", self.cell_radius),
            ("eps", self.eps),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive and finite, got {v}"));
            }
        }
        let nonneg = [
            ("circuit_power", self.circuit_power),
            ("edge_energy_per_bit", self.edge_energy_per_bit),
            ("device_radius", self.device_radius),
            ("d1", self.d1),
            ("d2", self.d2),
            ("step_lambda", self.step_lambda),
            ("step_mu", self.step_mu),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be non-negative and finite, got {v}"));
            }
        }
        for (k, t) in self.tasks.iter().enumerate() {
            if !(t.bits >= 0.0 && t.cycles_per_bit > 0.0) {
                return bad(format!("task of device {k} is invalid: {t:?}"));
            }
        }
        if self.taps_direct == 0 || self.taps_irs_hap == 0 || self.taps_device_irs == 0 {
            return bad("tap counts must be at least 1".into());
        }
        let spread = self.taps_direct.max(self.taps_reflected());
        if spread > self.subbands {
            return bad(format!(
                "delay spread of {spread} taps exceeds the cyclic prefix of {} sub-bands",
                self.subbands
            ));
        }
        if (self.d1 + self.d2 - self.cell_radius).abs() > 1e-9 * self.cell_radius.max(1.0) {
            return bad(format!(
                "d1 + d2 must equal the cell radius ({} + {} != {})",
                self.d1, self.d2, self.cell_radius
            ));
        }
        if self.t_max == 0 || self.t_max_outer == 0 {
            return bad("iteration caps must be at least 1".into());
        }
        Ok(())
    }
}
