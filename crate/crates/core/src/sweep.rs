//! Experiment configuration and parameter sweeps.
//!
//! A sweep is the cartesian product of its axes (first axis slowest). Every
//! grid point runs independently with seeds `base ^ index`, so results do not
//! depend on the number of worker threads.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::benchmarks::{run_narma10, NarmaConfig};
use crate::capacity::{memory_capacity, CapacityOptions};
use crate::dde::{grid_steps, InitialCondition, LaserParams};
use crate::error::{Error, Result};
use crate::reservoir::{harvest, HarvestConfig, InputSequence, ReservoirClocking};
use crate::spectra::{
    operating_predictors, operating_spectrum, predictors, refine_spectrum, NewtonOptions,
};

pub const SCHEMA: u32 = 1;

/// Parameter names accepted by sweep axes.
pub const AXIS_NAMES: [&str; 12] = [
    "alpha",
    "kappa",
    "phi",
    "tau",
    "pump",
    "eta",
    "t_lk",
    "d_noise",
    "dt",
    "n_virtual",
    "clock_cycle",
    "tau_ratio",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    #[default]
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub name: String,
    pub min: f64,
    pub max: f64,
    pub count: usize,
    #[serde(default)]
    pub scale: Scale,
}

impl Axis {
    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.min];
        }
        let last = (self.count - 1) as f64;
        (0..self.count)
            .map(|i| {
                let f = i as f64 / last;
                match self.scale {
                    Scale::Linear => self.min + f * (self.max - self.min),
                    Scale::Log => self.min * (self.max / self.min).powf(f),
                }
            })
            .collect()
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if !AXIS_NAMES.contains(&self.name.as_str()) {
            return Err(format!(
                "unknown sweep parameter '{}' (expected one of {})",
                self.name,
                AXIS_NAMES.join(", ")
            ));
        }
        if self.count == 0 {
            return Err(format!("axis '{}': count must be at least 1", self.name));
        }
        if !(self.min.is_finite() && self.max.is_finite()) {
            return Err(format!("axis '{}': bounds must be finite", self.name));
        }
        if self.scale == Scale::Log && !(self.min > 0.0 && self.max > 0.0) {
            return Err(format!(
                "axis '{}': log axes need positive bounds",
                self.name
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReservoirSection {
    pub n_virtual: usize,
    /// Clock cycle `T = n_virtual * theta`.
    pub clock_cycle: f64,
    /// When set, `tau = tau_ratio * T` at every grid point.
    pub tau_ratio: Option<f64>,
}

impl Default for ReservoirSection {
    fn default() -> Self {
        Self {
            n_virtual: 10,
            clock_cycle: 220.0,
            tau_ratio: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Rows of the state matrix used for capacities (`L`).
    pub rows: usize,
    pub buffer: usize,
    pub transient: f64,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            rows: 20_000,
            buffer: 5_000,
            transient: HarvestConfig::default().transient,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub mask: u64,
    pub input: u64,
    pub noise: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self {
            mask: 1,
            input: 2,
            noise: 3,
        }
    }
}

impl Seeds {
    pub fn for_point(&self, index: usize) -> Self {
        let i = index as u64;
        Self {
            mask: self.mask ^ i,
            input: self.input ^ i,
            noise: self.noise ^ i,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub capacity: bool,
    pub narma: bool,
    pub spectra: bool,
    /// Eigenvalues used for the predictors.
    pub eigenvalues: usize,
    /// Newton-refine the pseudocontinuous spectrum before computing predictors.
    pub refine: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            capacity: true,
            narma: false,
            spectra: true,
            eigenvalues: 100,
            refine: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub csv: Option<String>,
    pub json: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: u32,
    pub laser: LaserParams,
    pub reservoir: ReservoirSection,
    pub data: DataSection,
    pub capacity: CapacityOptions,
    pub narma: NarmaConfig,
    pub seeds: Seeds,
    pub run: RunSection,
    pub axes: Vec<Axis>,
    pub output: OutputSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema: SCHEMA,
            laser: LaserParams::default(),
            reservoir: ReservoirSection::default(),
            data: DataSection::default(),
            capacity: CapacityOptions::default(),
            narma: NarmaConfig::default(),
            seeds: Seeds::default(),
            run: RunSection::default(),
            axes: Vec::new(),
            output: OutputSection::default(),
        }
    }
}

fn config_error(message: impl Into<String>, line: Option<usize>) -> Error {
    Error::Config {
        message: message.into(),
        line,
    }
}

/// First line (1-based) of `text` containing `needle`.
fn line_of(text: &str, needle: &str) -> Option<usize> {
    text.lines().position(|l| l.contains(needle)).map(|i| i + 1)
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Sets `path` (dot separated) in `root` to `value`, parsed as JSON when
/// possible and as a string otherwise.
fn set_path(root: &mut Value, path: &str, value: &str) -> Result<()> {
    let parsed: Value =
        serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_string()));
    let mut cur = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(config_error(
                format!("override '{path}': empty key segment"),
                None,
            ));
        }
        let obj = cur.as_object_mut().ok_or_else(|| {
            config_error(
                format!("override '{path}': '{part}' is not inside an object"),
                None,
            )
        })?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), parsed);
            return Ok(());
        }
        cur = obj
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    Ok(())
}

impl ExperimentConfig {
    /// Full-length defaults: 250000 rows after a 100000-input buffer, degree
    /// 5 and 500 delays for capacities, 25000 NARMA10 train/test inputs.
    pub fn paper_scale() -> Self {
        Self {
            data: DataSection {
                rows: 250_000,
                buffer: 100_000,
                ..DataSection::default()
            },
            capacity: CapacityOptions::paper(),
            narma: NarmaConfig::paper(),
            ..Self::default()
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::load(text, false, &[])
    }

    /// Parses `text`, layering it over the desk or paper-scale defaults, then
    /// applies `key=value` overrides (dotted keys, e.g. `laser.kappa=0.1`).
    pub fn load(text: &str, paper_scale: bool, overrides: &[String]) -> Result<Self> {
        // a direct parse first, for line numbers on type and field errors
        let direct: Self =
            serde_json::from_str(text).map_err(|e| config_error(e.to_string(), Some(e.line())))?;
        let raw: Value =
            serde_json::from_str(text).map_err(|e| config_error(e.to_string(), Some(e.line())))?;
        let base = if paper_scale {
            Self::paper_scale()
        } else {
            Self::default()
        };
        let mut value = serde_json::to_value(base)?;
        merge(&mut value, raw);
        for o in overrides {
            let (k, v) = o.split_once('=').ok_or_else(|| {
                config_error(format!("override '{o}' is not of the form key=value"), None)
            })?;
            set_path(&mut value, k.trim(), v.trim())?;
        }
        let cfg: Self = if overrides.is_empty() && !paper_scale {
            direct
        } else {
            serde_json::from_value(value)
                .map_err(|e| config_error(format!("after overrides: {e}"), None))?
        };
        cfg.validate_with(text)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_with("")
    }

    fn validate_with(&self, text: &str) -> Result<()> {
        if self.schema != SCHEMA {
            return Err(config_error(
                format!("unsupported schema {} (expected {SCHEMA})", self.schema),
                line_of(text, "\"schema\""),
            ));
        }
        for axis in &self.axes {
            axis.validate()
                .map_err(|m| config_error(m, line_of(text, &format!("\"{}\"", axis.name))))?;
        }
        for (i, a) in self.axes.iter().enumerate() {
            if self.axes[..i].iter().any(|b| b.name == a.name) {
                return Err(config_error(
                    format!("axis '{}' appears twice", a.name),
                    line_of(text, &format!("\"{}\"", a.name)),
                ));
            }
        }
        let r = &self.reservoir;
        if r.n_virtual == 0 {
            return Err(config_error(
                "reservoir.n_virtual must be at least 1",
                line_of(text, "\"n_virtual\""),
            ));
        }
        if !(r.clock_cycle > 0.0 && r.clock_cycle.is_finite()) {
            return Err(config_error(
                "reservoir.clock_cycle must be positive",
                line_of(text, "\"clock_cycle\""),
            ));
        }
        if self.run.eigenvalues == 0 {
            return Err(config_error(
                "run.eigenvalues must be at least 1",
                line_of(text, "\"eigenvalues\""),
            ));
        }
        if (self.run.capacity || self.run.narma) && self.data.rows == 0 {
            return Err(config_error(
                "data.rows must be positive",
                line_of(text, "\"rows\""),
            ));
        }
        if self.run.capacity && self.data.buffer + 1 < self.capacity.max_delay {
            return Err(config_error(
                format!(
                    "data.buffer ({}) must cover capacity.max_delay - 1 ({})",
                    self.data.buffer,
                    self.capacity.max_delay - 1
                ),
                line_of(text, "\"buffer\""),
            ));
        }
        self.laser
            .validate()
            .map_err(|e| config_error(format!("laser: {e}"), line_of(text, "\"laser\"")))
    }

    /// Number of grid points (1 without axes).
    pub fn grid_len(&self) -> usize {
        self.axes.iter().map(|a| a.count).product()
    }

    /// Axis values of grid point `index`, first axis slowest.
    pub fn coordinates(&self, index: usize) -> Vec<f64> {
        let mut rem = index;
        let mut out = vec![0.0; self.axes.len()];
        for (k, axis) in self.axes.iter().enumerate().rev() {
            let i = rem % axis.count;
            rem /= axis.count;
            out[k] = axis.values()[i];
        }
        out
    }

    /// Laser parameters and clocking at grid point `index`. The node
    /// spacing and delay are snapped to the integration grid when needed.
    pub fn point(&self, index: usize) -> Result<PointSetup> {
        let coords = self.coordinates(index);
        let mut laser = self.laser;
        let mut n_virtual = self.reservoir.n_virtual;
        let mut clock = self.reservoir.clock_cycle;
        let mut tau_ratio = self.reservoir.tau_ratio;
        for (axis, &v) in self.axes.iter().zip(&coords) {
            match axis.name.as_str() {
                "alpha" => laser.alpha = v,
                "kappa" => laser.kappa = v,
                "phi" => laser.phi = v,
                "tau" => laser.tau = v,
                "pump" => laser.pump = v,
                "eta" => laser.eta = v,
                "t_lk" => laser.t_lk = v,
                "d_noise" => laser.d_noise = v,
                "dt" => laser.dt = v,
                "n_virtual" => n_virtual = v.round().max(1.0) as usize,
                "clock_cycle" => clock = v,
                "tau_ratio" => tau_ratio = Some(v),
                other => return Err(Error::param("axis", format!("unknown parameter {other}"))),
            }
        }
        let dt = laser.dt;
        let theta = snap(clock / n_virtual as f64, dt).max(dt);
        let clock_cycle = theta * n_virtual as f64;
        if let Some(r) = tau_ratio {
            laser.tau = r * clock_cycle;
        }
        laser.tau = snap(laser.tau, dt);
        laser.validate()?;
        Ok(PointSetup {
            index,
            coordinates: coords,
            laser,
            n_virtual,
            theta,
            clock_cycle,
            seeds: self.seeds.for_point(index),
        })
    }
}

fn snap(x: f64, dt: f64) -> f64 {
    if grid_steps(x, dt).is_ok() || !(x.is_finite() && dt > 0.0) {
        x
    } else {
        (x / dt).round() * dt
    }
}

/// Fully resolved inputs of one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSetup {
    pub index: usize,
    pub coordinates: Vec<f64>,
    pub laser: LaserParams,
    pub n_virtual: usize,
    pub theta: f64,
    pub clock_cycle: f64,
    pub seeds: Seeds,
}

impl PointSetup {
    pub fn clocking(&self) -> Result<ReservoirClocking> {
        ReservoirClocking::random(self.n_virtual, self.theta, self.seeds.mask)
    }

    pub fn harvest_config(&self, data: &DataSection, buffer: usize) -> HarvestConfig {
        HarvestConfig {
            buffer,
            transient: data.transient,
            noise_seed: self.seeds.noise,
            init: InitialCondition::Default,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub index: usize,
    /// Axis values in axis order.
    pub coordinates: Vec<f64>,
    pub clock_cycle: f64,
    pub tau: f64,
    pub mc: Option<f64>,
    /// `MC^d` for `d = 1..=d_max`.
    pub mc_degree: Option<Vec<f64>>,
    pub phi_hat: Option<f64>,
    pub lambda_hat: Option<f64>,
    pub nrmse_train: Option<f64>,
    pub nrmse_test: Option<f64>,
    pub errors: Vec<String>,
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub schema: u32,
    pub axes: Vec<String>,
    pub d_max: u32,
    pub records: Vec<SweepRecord>,
    pub wall_time: f64,
}

impl SweepResult {
    pub fn failures(&self) -> usize {
        self.records.iter().filter(|r| !r.errors.is_empty()).count()
    }

    pub fn csv_header(&self) -> Vec<String> {
        let mut h = vec!["index".to_string()];
        h.extend(self.axes.iter().cloned());
        h.extend(["clock_cycle_used", "tau_used", "mc"].map(String::from));
        h.extend((1..=self.d_max).map(|d| format!("mc{d}")));
        h.extend(
            [
                "phi_hat",
                "lambda_hat",
                "nrmse_train",
                "nrmse_test",
                "error",
            ]
            .map(String::from),
        );
        h
    }

    /// Deterministic CSV: no timings, floats with 9 significant digits.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.csv_header())?;
        let opt = |v: Option<f64>| v.map(fmt9).unwrap_or_default();
        for r in &self.records {
            let mut row = vec![r.index.to_string()];
            row.extend(r.coordinates.iter().map(|&v| fmt9(v)));
            row.push(fmt9(r.clock_cycle));
            row.push(fmt9(r.tau));
            row.push(opt(r.mc));
            for d in 0..self.d_max as usize {
                row.push(opt(r.mc_degree.as_ref().and_then(|m| m.get(d).copied())));
            }
            row.push(opt(r.phi_hat));
            row.push(opt(r.lambda_hat));
            row.push(opt(r.nrmse_train));
            row.push(opt(r.nrmse_test));
            row.push(r.errors.join("; "));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `v` with 9 significant digits.
pub fn fmt9(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let mag = v.abs().log10().floor() as i32;
    if (-4..9).contains(&mag) {
        let decimals = (8 - mag).max(0) as usize;
        let s = format!("{v:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        format!("{v:.8e}")
    }
}

/// Whether the configuration needs no laser simulation at all.
pub fn spectra_only(cfg: &ExperimentConfig) -> bool {
    !cfg.run.capacity && !cfg.run.narma
}

/// Evaluates one grid point; failures are collected in the record.
pub fn evaluate_point(cfg: &ExperimentConfig, index: usize) -> SweepRecord {
    let start = Instant::now();
    let mut rec = SweepRecord {
        index,
        coordinates: cfg.coordinates(index),
        clock_cycle: f64::NAN,
        tau: f64::NAN,
        mc: None,
        mc_degree: None,
        phi_hat: None,
        lambda_hat: None,
        nrmse_train: None,
        nrmse_test: None,
        errors: Vec::new(),
        wall_time: 0.0,
    };
    let setup = match cfg.point(index) {
        Ok(s) => s,
        Err(e) => {
            rec.errors.push(e.to_string());
            rec.wall_time = start.elapsed().as_secs_f64();
            return rec;
        }
    };
    rec.clock_cycle = setup.clock_cycle;
    rec.tau = setup.laser.tau;

    if cfg.run.spectra {
        match point_predictors(cfg, &setup) {
            Ok((phi, lambda)) => {
                rec.phi_hat = Some(phi);
                rec.lambda_hat = Some(lambda);
            }
            Err(e) => rec.errors.push(format!("spectrum: {e}")),
        }
    }
    if cfg.run.capacity {
        match point_capacity(cfg, &setup) {
            Ok((total, per)) => {
                rec.mc = Some(total);
                rec.mc_degree = Some(per);
            }
            Err(e) => rec.errors.push(format!("capacity: {e}")),
        }
    }
    if cfg.run.narma {
        let r = setup.clocking().and_then(|c| {
            run_narma10(
                &setup.laser,
                &c,
                &cfg.narma,
                &setup.harvest_config(&cfg.data, cfg.data.buffer),
                setup.seeds.input,
            )
        });
        match r {
            Ok(r) => {
                rec.nrmse_train = Some(r.train_nrmse);
                rec.nrmse_test = Some(r.test_nrmse);
            }
            Err(e) => rec.errors.push(format!("narma10: {e}")),
        }
    }
    rec.wall_time = start.elapsed().as_secs_f64();
    rec
}

fn point_predictors(cfg: &ExperimentConfig, setup: &PointSetup) -> Result<(f64, f64)> {
    let n = cfg.run.eigenvalues;
    let p = if cfg.run.refine && setup.laser.kappa != 0.0 {
        let s = refine_spectrum(
            &operating_spectrum(&setup.laser, n)?,
            &NewtonOptions::default(),
        )?;
        predictors(&s, setup.clock_cycle, n.min(s.len()))?
    } else {
        operating_predictors(&setup.laser, setup.clock_cycle, n)?
    };
    Ok((p.phi_hat, p.lambda_hat))
}

fn point_capacity(cfg: &ExperimentConfig, setup: &PointSetup) -> Result<(f64, Vec<f64>)> {
    let buffer = cfg.data.buffer;
    let inputs = InputSequence::uniform(buffer + cfg.data.rows, -1.0, 1.0, setup.seeds.input);
    let states = harvest(
        &setup.laser,
        &setup.clocking()?,
        &inputs,
        &setup.harvest_config(&cfg.data, buffer),
    )?;
    let r = memory_capacity(&states, &inputs.values, buffer, &cfg.capacity)?;
    Ok((r.total, r.per_degree))
}

/// Evaluates every grid point on the current rayon pool.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let start = Instant::now();
    let records: Vec<SweepRecord> = (0..cfg.grid_len())
        .into_par_iter()
        .map(|i| evaluate_point(cfg, i))
        .collect();
    Ok(SweepResult {
        schema: SCHEMA,
        axes: cfg.axes.iter().map(|a| a.name.clone()).collect(),
        d_max: if cfg.run.capacity {
            cfg.capacity.d_max
        } else {
            0
        },
        records,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// Average ranks (1-based), ties sharing their mean rank.
pub fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation; `None` for fewer than two pairs or a constant input.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_axis_hits_both_ends() {
        let a = Axis {
            name: "t_lk".into(),
            min: 0.1,
            max: 100.0,
            count: 4,
            scale: Scale::Log,
        };
        let v = a.values();
        assert!((v[0] - 0.1).abs() < 1e-15 && (v[3] - 100.0).abs() < 1e-12);
        assert!((v[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn coordinates_first_axis_slowest() {
        let cfg = ExperimentConfig {
            axes: vec![
                Axis {
                    name: "kappa".into(),
                    min: 0.0,
                    max: 1.0,
                    count: 2,
                    scale: Scale::Linear,
                },
                Axis {
                    name: "pump".into(),
                    min: 0.0,
                    max: 2.0,
                    count: 3,
                    scale: Scale::Linear,
                },
            ],
            ..Default::default()
        };
        assert_eq!(cfg.grid_len(), 6);
        assert_eq!(cfg.coordinates(0), vec![0.0, 0.0]);
        assert_eq!(cfg.coordinates(1), vec![0.0, 1.0]);
        assert_eq!(cfg.coordinates(3), vec![1.0, 0.0]);
        assert_eq!(cfg.coordinates(5), vec![1.0, 2.0]);
    }

    #[test]
    fn format_keeps_nine_digits() {
        assert_eq!(fmt9(1.0), "1");
        assert_eq!(fmt9(0.123456789123), "0.123456789");
        assert_eq!(fmt9(220.0), "220");
        assert_eq!(fmt9(-9.87654321987), "-9.87654322");
        assert_eq!(fmt9(1.5e-7), "1.50000000e-7");
    }

    #[test]
    fn overrides_and_paths() {
        let mut v = serde_json::json!({"laser": {"kappa": 0.0}});
        set_path(&mut v, "laser.kappa", "0.2").unwrap();
        set_path(&mut v, "output.csv", "out.csv").unwrap();
        assert_eq!(v["laser"]["kappa"], 0.2);
        assert_eq!(v["output"]["csv"], "out.csv");
        assert!(set_path(&mut v, "laser.kappa.x", "1").is_err());
    }

    #[test]
    fn ranks_share_ties() {
        assert_eq!(ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 15.0]), Some(0.5));
        assert_eq!(spearman(&[1.0, 1.0], &[1.0, 2.0]), None);
    }

    #[test]
    fn off_grid_clock_is_snapped() {
        let cfg = ExperimentConfig {
            reservoir: ReservoirSection {
                n_virtual: 3,
                clock_cycle: 100.0,
                tau_ratio: Some(1.41),
            },
            ..Default::default()
        };
        let p = cfg.point(0).unwrap();
        assert!((p.theta - 33.33).abs() < 1e-9);
        assert!(grid_steps(p.laser.tau, p.laser.dt).is_ok());
    }
}
