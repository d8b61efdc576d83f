//! Experiment plumbing: configs, Monte-Carlo batches over the three schemes,
//! parameter sweeps and CSV reports.
//!
//! Configs are flat `key = value` text. Power-like keys accept `W` or `mW`
//! suffixes, task sizes accept `bit` or `Kbit`; other values are plain
//! numbers in SI units. `#` starts a comment.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::orchestrator::{draw_instance, optimize_joint, stream_rng, JointSolution, Scheme, INIT_STREAM};
use crate::params::SystemParams;

/// RNG stream for per-trial task draws.
pub const TASK_STREAM: u64 = 2;

pub const RECORDS_FILE: &str = "records.csv";
pub const RECORDS_HEADER: &str = "scheme,seed,param,value,total_J,wet_J,edge_J,iters,ms";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SweepParam {
    /// Number of surface elements.
    Elements,
    /// HAP to device-circle distance; the circle-to-surface distance follows.
    D1,
    /// Common path-loss exponent of both reflection hops.
    Beta,
    /// Edge energy per bit.
    Vartheta,
    Tau,
}

impl SweepParam {
    pub const ALL: [SweepParam; 5] = [
        SweepParam::Elements,
        SweepParam::D1,
        SweepParam::Beta,
        SweepParam::Vartheta,
        SweepParam::Tau,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Elements => "N",
            SweepParam::D1 => "d1",
            SweepParam::Beta => "beta",
            SweepParam::Vartheta => "vartheta",
            SweepParam::Tau => "tau",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown sweep parameter '{s}'")))
    }

    /// Current value in `params`.
    pub fn get(self, params: &SystemParams) -> f64 {
        match self {
            SweepParam::Elements => params.elements as f64,
            SweepParam::D1 => params.d1,
            SweepParam::Beta => params.beta_ui,
            SweepParam::Vartheta => params.edge_energy_per_bit,
            SweepParam::Tau => params.tau,
        }
    }

    pub fn apply(self, params: &mut SystemParams, value: f64) -> Result<()> {
        match self {
            SweepParam::Elements => {
                if !(value >= 0.0 && value.fract() == 0.0) {
                    return Err(Error::Config(format!("N must be a whole number, got {value}")));
                }
                params.elements = value as usize;
            }
            SweepParam::D1 => {
                params.d1 = value;
                params.d2 = params.cell_radius - value;
            }
            SweepParam::Beta => {
                params.beta_ui = value;
                params.beta_ia = value;
            }
            SweepParam::Vartheta => params.edge_energy_per_bit = value,
            SweepParam::Tau => params.tau = value,
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

impl Sweep {
    /// `NAME=v1,v2,...`.
    pub fn parse(s: &str) -> Result<Self> {
        let (name, list) = s
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("sweep '{s}' is not NAME=v1,v2,...")))?;
        let param = SweepParam::parse(name.trim())?;
        let values = list
            .split(',')
            .map(str::trim)
            .filter(|v| !v.is_empty())
            .map(|v| parse_number(v, "sweep"))
            .collect::<Result<Vec<_>>>()?;
        if values.is_empty() {
            return Err(Error::Config(format!("sweep over {name} has no values")));
        }
        Ok(Self { param, values })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub params: SystemParams,
    pub schemes: Vec<Scheme>,
    pub trials: usize,
    pub seed: u64,
    pub sweep: Option<Sweep>,
    /// Redraw task sizes and cycle counts per trial from their ranges.
    pub draw_tasks: bool,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            params: SystemParams::default(),
            schemes: Scheme::ALL.to_vec(),
            trials: 20,
            seed: 1,
            sweep: None,
            draw_tasks: true,
            out: PathBuf::from("out"),
        }
    }
}

fn parse_number(v: &str, key: &str) -> Result<f64> {
    v.trim()
        .parse::<f64>()
        .map_err(|_| Error::Config(format!("{key}: '{v}' is not a number")))
}

/// Number with an optional unit suffix from `units` (`(suffix, factor)`).
fn parse_with_units(v: &str, key: &str, units: &[(&str, f64)]) -> Result<f64> {
    let v = v.trim();
    for (suffix, factor) in units {
        if let Some(num) = v.strip_suffix(suffix) {
            if num.ends_with(|c: char| c.is_ascii_digit() || c == '.' || c.is_whitespace()) {
                return Ok(parse_number(num, key)? * factor);
            }
        }
    }
    parse_number(v, key)
}

const POWER_UNITS: &[(&str, f64)] = &[("mW", 1e-3), ("W", 1.0)];
const BIT_UNITS: &[(&str, f64)] = &[("Kbit", 1e3), ("kbit", 1e3), ("bit", 1.0)];

fn parse_count(v: &str, key: &str) -> Result<usize> {
    v.trim()
        .parse::<usize>()
        .map_err(|_| Error::Config(format!("{key}: '{v}' is not a non-negative integer")))
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            cfg.set(k.trim(), v.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Apply one setting. Unknown keys are errors.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let p = &mut self.params;
        let num = |v: &str| parse_number(v, key);
        let watts = |v: &str| parse_with_units(v, key, POWER_UNITS);
        let bits = |v: &str| parse_with_units(v, key, BIT_UNITS);
        match key {
            "scheme" | "schemes" => {
                self.schemes = if v == "all" {
                    Scheme::ALL.to_vec()
                } else {
                    v.split(',').map(|s| s.trim().parse()).collect::<Result<_>>()?
                };
            }
            "trials" => self.trials = parse_count(v, key)?,
            "seed" => {
                self.seed = v
                    .parse()
                    .map_err(|_| Error::Config(format!("seed: '{v}' is not a 64-bit integer")))?
            }
            "sweep" => self.sweep = Some(Sweep::parse(v)?),
            "draw_tasks" => {
                self.draw_tasks = v
                    .parse()
                    .map_err(|_| Error::Config(format!("draw_tasks: '{v}' is not true/false")))?
            }
            "out" => self.out = PathBuf::from(v),
            "devices" | "K" => *p = p.clone().with_devices(parse_count(v, key)?),
            "subbands" | "M" => p.subbands = parse_count(v, key)?,
            "elements" | "N" => p.elements = parse_count(v, key)?,
            "block_len" | "T" => p.block_len = num(v)?,
            "tau" => p.tau = num(v)?,
            "bandwidth" | "B" => p.bandwidth = num(v)?,
            "eta" => p.eta = num(v)?,
            "snr_gap" => p.snr_gap = num(v)?,
            "noise_power" => p.noise_power = watts(v)?,
            "kappa" => p.kappa = num(v)?,
            "f_max" => p.f_max = num(v)?,
            "circuit_power" => p.circuit_power = watts(v)?,
            "vartheta" | "edge_energy_per_bit" => p.edge_energy_per_bit = num(v)?,
            "f_edge" => p.f_edge = num(v)?,
            "task_bits_min" => p.task_bits_range.0 = bits(v)?,
            "task_bits_max" => p.task_bits_range.1 = bits(v)?,
            "cycles_per_bit_min" => p.cycles_per_bit_range.0 = num(v)?,
            "cycles_per_bit_max" => p.cycles_per_bit_range.1 = num(v)?,
            "pl0_db" => p.pl0_db = num(v)?,
            "d0" => p.d0 = num(v)?,
            "beta_ua" => p.beta_ua = num(v)?,
            "beta_ui" => p.beta_ui = num(v)?,
            "beta_ia" => p.beta_ia = num(v)?,
            "beta" => {
                p.beta_ui = num(v)?;
                p.beta_ia = p.beta_ui;
            }
            "cell_radius" | "R" => p.cell_radius = num(v)?,
            "d1" => p.d1 = num(v)?,
            "d2" => p.d2 = num(v)?,
            "device_radius" | "r" => p.device_radius = num(v)?,
            "taps_direct" => p.taps_direct = parse_count(v, key)?,
            "taps_irs_hap" => p.taps_irs_hap = parse_count(v, key)?,
            "taps_device_irs" => p.taps_device_irs = parse_count(v, key)?,
            "eps" => p.eps = num(v)?,
            "t_max" => p.t_max = parse_count(v, key)?,
            "t_max_outer" => p.t_max_outer = parse_count(v, key)?,
            "step_lambda" => p.step_lambda = num(v)?,
            "step_mu" => p.step_mu = num(v)?,
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.schemes.is_empty() {
            return Err(Error::Config("no scheme selected".into()));
        }
        for value in self.points() {
            self.params_at(value)?.validate()?;
        }
        Ok(())
    }

    /// Swept values, or the base value of `tau` without a sweep.
    fn points(&self) -> Vec<Option<f64>> {
        match &self.sweep {
            Some(s) => s.values.iter().copied().map(Some).collect(),
            None => vec![None],
        }
    }

    fn params_at(&self, value: Option<f64>) -> Result<SystemParams> {
        // Re-spread fixed tasks over the configured ranges.
        let mut p = self.params.clone().with_devices(self.params.devices);
        if let (Some(s), Some(v)) = (&self.sweep, value) {
            s.param.apply(&mut p, v)?;
        }
        Ok(p)
    }

    fn label(&self) -> SweepParam {
        self.sweep.as_ref().map_or(SweepParam::Tau, |s| s.param)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Ok,
    Infeasible(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub scheme: Scheme,
    /// Seed of the trial (base seed plus trial index).
    pub seed: u64,
    /// Swept parameter, or `tau` without a sweep.
    pub param: SweepParam,
    pub value: f64,
    pub status: RunStatus,
    pub total_j: f64,
    pub wet_j: f64,
    pub edge_j: f64,
    pub iterations: usize,
    pub ms: f64,
}

impl RunRecord {
    pub fn is_ok(&self) -> bool {
        self.status == RunStatus::Ok
    }
}

/// Parameters of one trial: tasks redrawn if requested.
pub fn trial_params(base: &SystemParams, seed: u64, draw_tasks: bool) -> SystemParams {
    let mut p = base.clone();
    if draw_tasks {
        p.draw_tasks(&mut stream_rng(seed, TASK_STREAM));
    }
    p
}

/// Everything one trial produced.
#[derive(Debug)]
pub struct TrialOutcome {
    pub params: SystemParams,
    pub channels: ChannelSet,
    pub solutions: Vec<(Scheme, Result<JointSolution>, f64)>,
}

/// Run `schemes` on the channel realization of `seed`. Infeasible instances
/// are reported per scheme; other failures abort.
pub fn run_trial(params: &SystemParams, seed: u64, schemes: &[Scheme], draw_tasks: bool) -> Result<TrialOutcome> {
    let p = trial_params(params, seed, draw_tasks);
    let channels = draw_instance(&p, seed)?;
    let mut solutions = Vec::with_capacity(schemes.len());
    for &scheme in schemes {
        let start = Instant::now();
        let mut rng = stream_rng(seed, INIT_STREAM);
        let sol = optimize_joint(&channels, &p, scheme, &mut rng);
        let ms = start.elapsed().as_secs_f64() * 1e3;
        match sol {
            Err(e) if !matches!(e, Error::Infeasible(_)) => return Err(e),
            sol => solutions.push((scheme, sol, ms)),
        }
    }
    Ok(TrialOutcome {
        params: p,
        channels,
        solutions,
    })
}

fn record(param: SweepParam, value: f64, seed: u64, scheme: Scheme, sol: &Result<JointSolution>, ms: f64, p: &SystemParams) -> RunRecord {
    match sol {
        Ok(s) => RunRecord {
            scheme,
            seed,
            param,
            value,
            status: RunStatus::Ok,
            total_j: s.total_energy,
            wet_j: s.wet_energy(),
            edge_j: s.edge_energy(p),
            iterations: s.outer_iterations(),
            ms,
        },
        Err(e) => RunRecord {
            scheme,
            seed,
            param,
            value,
            status: RunStatus::Infeasible(e.to_string()),
            total_j: f64::NAN,
            wet_j: f64::NAN,
            edge_j: f64::NAN,
            iterations: 0,
            ms,
        },
    }
}

/// All trials of the config at every sweep point. Schemes of one trial share
/// the channel realization; records come back ordered by (value, trial,
/// scheme) regardless of scheduling.
pub fn run_scheme(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    let label = cfg.label();
    let jobs: Vec<(Option<f64>, usize)> = cfg
        .points()
        .into_iter()
        .flat_map(|v| (0..cfg.trials).map(move |t| (v, t)))
        .collect();
    let batches = jobs
        .par_iter()
        .map(|&(value, trial)| {
            let p = cfg.params_at(value)?;
            let seed = cfg.seed.wrapping_add(trial as u64);
            let out = run_trial(&p, seed, &cfg.schemes, cfg.draw_tasks)?;
            let x = value.unwrap_or_else(|| label.get(&p));
            Ok(out
                .solutions
                .iter()
                .map(|(scheme, sol, ms)| record(label, x, seed, *scheme, sol, *ms, &out.params))
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(batches.into_iter().flatten().collect())
}

/// Sweep driver; the config must carry a sweep.
pub fn sweep_parameter(cfg: &ExperimentConfig) -> Result<Vec<SummaryRow>> {
    if cfg.sweep.is_none() {
        return Err(Error::Config("no sweep configured".into()));
    }
    Ok(summarize(&run_scheme(cfg)?))
}

/// Mean and sample standard deviation per (value, scheme).
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub param: SweepParam,
    pub value: f64,
    pub scheme: Scheme,
    pub mean: f64,
    pub std: f64,
    /// Successful runs contributing.
    pub n: usize,
    pub failed: usize,
}

/// Aggregate records; failed runs are counted but never averaged.
pub fn summarize(records: &[RunRecord]) -> Vec<SummaryRow> {
    let mut keys: Vec<(SweepParam, f64, Scheme)> = Vec::new();
    for r in records {
        let key = (r.param, r.value, r.scheme);
        if !keys.iter().any(|k| k.0 == key.0 && k.1.to_bits() == key.1.to_bits() && k.2 == key.2) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(param, value, scheme)| {
            let group: Vec<&RunRecord> = records
                .iter()
                .filter(|r| r.param == param && r.value.to_bits() == value.to_bits() && r.scheme == scheme)
                .collect();
            let ok: Vec<f64> = group.iter().filter(|r| r.is_ok()).map(|r| r.total_j).collect();
            let (mean, std) = mean_std(&ok);
            SummaryRow {
                param,
                value,
                scheme,
                mean,
                std,
                n: ok.len(),
                failed: group.len() - ok.len(),
            }
        })
        .collect()
}

/// Mean and sample standard deviation; `NaN` mean for an empty slice and zero
/// spread below two samples.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// 17 significant digits: enough to round-trip any `f64`.
fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        String::new()
    }
}

fn csv_error(path: &Path, source: csv::Error) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

/// Write `records.csv` and one plot-data file into `dir`; returns the paths.
/// Failed runs appear in the records file with empty energy fields.
pub fn emit_report(records: &[RunRecord], dir: &Path) -> Result<Vec<PathBuf>> {
    if records.is_empty() {
        return Err(Error::Config("no records to report".into()));
    }
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;

    let path = dir.join(RECORDS_FILE);
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(&path)
        .map_err(|e| csv_error(&path, e))?;
    w.write_record(RECORDS_HEADER.split(','))
        .map_err(|e| csv_error(&path, e))?;
    for r in records {
        w.write_record([
            r.scheme.name().to_string(),
            r.seed.to_string(),
            r.param.name().to_string(),
            fmt_f64(r.value),
            fmt_f64(r.total_j),
            fmt_f64(r.wet_j),
            fmt_f64(r.edge_j),
            r.iterations.to_string(),
            fmt_f64(r.ms),
        ])
        .map_err(|e| csv_error(&path, e))?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.clone(),
        source,
    })?;

    let mut paths = vec![path];
    let summary = summarize(records);
    let mut params: Vec<SweepParam> = Vec::new();
    for r in &summary {
        if !params.contains(&r.param) {
            params.push(r.param);
        }
    }
    for param in params {
        let rows: Vec<&SummaryRow> = summary.iter().filter(|r| r.param == param).collect();
        let mut schemes: Vec<Scheme> = Vec::new();
        let mut xs: Vec<f64> = Vec::new();
        for r in &rows {
            if !schemes.contains(&r.scheme) {
                schemes.push(r.scheme);
            }
            if !xs.iter().any(|x| x.to_bits() == r.value.to_bits()) {
                xs.push(r.value);
            }
        }
        let mut text = String::from("x");
        for s in &schemes {
            let _ = write!(text, ",{s}_mean,{s}_std");
        }
        text.push('\n');
        for x in xs {
            text.push_str(&fmt_f64(x));
            for s in &schemes {
                let row = rows
                    .iter()
                    .find(|r| r.scheme == *s && r.value.to_bits() == x.to_bits());
                let (m, sd) = row.map_or((f64::NAN, f64::NAN), |r| (r.mean, r.std));
                let _ = write!(text, ",{},{}", fmt_f64(m), fmt_f64(sd));
            }
            text.push('\n');
        }
        let path = dir.join(format!("plot_{}.csv", param.name()));
        std::fs::write(&path, text).map_err(|source| Error::Io {
            path: path.clone(),
            source,
        })?;
        paths.push(path);
    }
    Ok(paths)
}

/// Parse a records file written by [`emit_report`]. Failure messages are not
/// stored, so failed runs come back with an empty reason.
pub fn read_records(path: &Path) -> Result<Vec<RunRecord>> {
    let mut rd = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let bad = |what: &str, v: &str| Error::Config(format!("{}: bad {what} '{v}'", path.display()));
    let float = |v: &str, what: &str| -> Result<f64> {
        if v.is_empty() {
            Ok(f64::NAN)
        } else {
            v.parse().map_err(|_| bad(what, v))
        }
    };
    let mut out = Vec::new();
    for row in rd.records() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let get = |i: usize| row.get(i).unwrap_or("");
        let total_j = float(get(4), "total_J")?;
        out.push(RunRecord {
            scheme: get(0).parse()?,
            seed: get(1).parse().map_err(|_| bad("seed", get(1)))?,
            param: SweepParam::parse(get(2))?,
            value: float(get(3), "value")?,
            status: if total_j.is_nan() {
                RunStatus::Infeasible(String::new())
            } else {
                RunStatus::Ok
            },
            total_j,
            wet_j: float(get(5), "wet_J")?,
            edge_j: float(get(6), "edge_J")?,
            iterations: get(7).parse().map_err(|_| bad("iters", get(7)))?,
            ms: float(get(8), "ms")?,
        });
    }
    Ok(out)
}
