//! Time-multiplexed input, state harvesting, linear readout and NRMSE.

use std::fmt::Write as _;
use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dde::{grid_steps, DriveSignal, InitialCondition, LaserParams, Simulator};
use crate::error::{Error, Result};

/// An input sequence together with the seed that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct InputSequence {
    pub values: Vec<f64>,
    pub seed: Option<u64>,
}

impl InputSequence {
    /// `len` i.i.d. values uniform on `[low, high]`.
    pub fn uniform(len: usize, low: f64, high: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..len).map(|_| rng.gen_range(low..=high)).collect();
        Self {
            values,
            seed: Some(seed),
        }
    }

    pub fn from_values(values: Vec<f64>) -> Self {
        Self { values, seed: None }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `n_virtual` i.i.d. mask values uniform on `[0, 1]`.
pub fn make_mask(n_virtual: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_virtual).map(|_| rng.gen_range(0.0..=1.0)).collect()
}

/// Clock cycle `T = n_virtual * theta` split into `n_virtual` node intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct ReservoirClocking {
    n_virtual: usize,
    theta: f64,
    mask: Vec<f64>,
    mask_seed: Option<u64>,
}

impl ReservoirClocking {
    pub fn new(theta: f64, mask: Vec<f64>) -> Result<Self> {
        if mask.is_empty() {
            return Err(Error::param("n_virtual", "must be at least 1"));
        }
        if !(theta > 0.0 && theta.is_finite()) {
            return Err(Error::param("theta", "must be positive and finite"));
        }
        if mask.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("mask"));
        }
        Ok(Self {
            n_virtual: mask.len(),
            theta,
            mask,
            mask_seed: None,
        })
    }

    /// Random mask drawn by [`make_mask`].
    pub fn random(n_virtual: usize, theta: f64, seed: u64) -> Result<Self> {
        let mut c = Self::new(theta, make_mask(n_virtual, seed))?;
        c.mask_seed = Some(seed);
        Ok(c)
    }

    pub fn n_virtual(&self) -> usize {
        self.n_virtual
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn clock_cycle(&self) -> f64 {
        self.theta * self.n_virtual as f64
    }

    pub fn mask(&self) -> &[f64] {
        &self.mask
    }

    pub fn mask_seed(&self) -> Option<u64> {
        self.mask_seed
    }

    /// Steps per node interval for integration step `dt`.
    pub fn node_steps(&self, dt: f64) -> Result<usize> {
        let s = grid_steps(self.theta, dt).map_err(|_| {
            Error::param(
                "theta",
                format!("{} is not an integer multiple of dt = {dt}", self.theta),
            )
        })?;
        if s == 0 {
            return Err(Error::param("theta", "shorter than one integration step"));
        }
        Ok(s)
    }
}

/// `drive(t) = u_l * mask_n` on `[start + l T + n theta, start + l T + (n + 1) theta)`.
pub fn build_drive(
    inputs: &[f64],
    clocking: &ReservoirClocking,
    start: f64,
) -> Result<DriveSignal> {
    let mut values = Vec::with_capacity(inputs.len() * clocking.n_virtual);
    for &u in inputs {
        values.extend(clocking.mask.iter().map(|g| u * g));
    }
    DriveSignal::new(start, clocking.theta, values)
}

/// Where a state matrix came from; carried through CSV export.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HarvestMeta {
    pub mask_seed: Option<u64>,
    pub input_seed: Option<u64>,
    pub noise_seed: Option<u64>,
}

/// `L x N_V` matrix of sampled reservoir responses.
#[derive(Debug, Clone, PartialEq)]
pub struct StateMatrix {
    data: DMatrix<f64>,
    centered: bool,
    column_means: Vec<f64>,
    pub meta: HarvestMeta,
}

impl StateMatrix {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("state matrix"));
        }
        let column_means = column_means(&data);
        Ok(Self {
            data,
            centered: false,
            column_means,
            meta: HarvestMeta::default(),
        })
    }

    pub fn from_rows(rows: usize, cols: usize, row_major: &[f64]) -> Result<Self> {
        if row_major.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {rows}x{cols} matrix",
                row_major.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(rows, cols, row_major))
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn cols(&self) -> usize {
        self.data.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn is_centered(&self) -> bool {
        self.centered
    }

    /// Column means of the data as harvested (before centering).
    pub fn column_means(&self) -> &[f64] {
        &self.column_means
    }

    /// Copy with every column shifted to zero mean.
    pub fn centered(&self) -> Self {
        if self.centered {
            return self.clone();
        }
        let mut data = self.data.clone();
        let current = column_means(&data);
        for (j, mean) in current.iter().enumerate() {
            data.column_mut(j).add_scalar_mut(-mean);
        }
        Self {
            data,
            centered: true,
            column_means: self.column_means.clone(),
            meta: self.meta,
        }
    }

    /// Consecutive rows `start..start + len`.
    pub fn row_range(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.rows() {
            return Err(Error::DimensionMismatch(format!(
                "rows {start}..{} of a {}-row matrix",
                start + len,
                self.rows()
            )));
        }
        let mut out = Self::new(self.data.rows(start, len).into_owned())?;
        out.meta = self.meta;
        Ok(out)
    }

    /// Writes the matrix as CSV: two `#` metadata lines, a header, then one row per input.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let m = &self.meta;
        let opt = |v: Option<u64>| v.map(|s| s.to_string()).unwrap_or_else(|| "none".into());
        writeln!(w, "# delayrc state matrix")?;
        writeln!(
            w,
            "# L={},N_V={},mask_seed={},input_seed={},noise_seed={},centered={}",
            self.rows(),
            self.cols(),
            opt(m.mask_seed),
            opt(m.input_seed),
            opt(m.noise_seed),
            self.centered
        )?;
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record((1..=self.cols()).map(|n| format!("s{n}")))?;
        let mut buf = String::new();
        for row in self.data.row_iter() {
            let rec: Vec<String> = row
                .iter()
                .map(|v| {
                    buf.clear();
                    write!(buf, "{v:e}").unwrap();
                    buf.clone()
                })
                .collect();
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Reads a matrix written by [`StateMatrix::write_csv`].
    pub fn read_csv<R: Read>(mut r: R) -> Result<Self> {
        let mut text = String::new();
        r.read_to_string(&mut text)?;
        let mut rows_declared = None;
        let mut cols_declared = None;
        let mut meta = HarvestMeta::default();
        let mut centered = false;
        for line in text.lines().take_while(|l| l.starts_with('#')) {
            for kv in line.trim_start_matches('#').trim().split(',') {
                let Some((k, v)) = kv.split_once('=') else {
                    continue;
                };
                let seed = || -> Result<Option<u64>> {
                    if v == "none" {
                        Ok(None)
                    } else {
                        v.parse()
                            .map(Some)
                            .map_err(|_| Error::Format(format!("bad seed `{v}`")))
                    }
                };
                match k.trim() {
                    "L" => rows_declared = v.parse::<usize>().ok(),
                    "N_V" => cols_declared = v.parse::<usize>().ok(),
                    "mask_seed" => meta.mask_seed = seed()?,
                    "input_seed" => meta.input_seed = seed()?,
                    "noise_seed" => meta.noise_seed = seed()?,
                    "centered" => centered = v == "true",
                    _ => {}
                }
            }
        }
        let (rows, cols) = rows_declared
            .zip(cols_declared)
            .ok_or_else(|| Error::Format("missing L/N_V header".into()))?;

        let mut rd = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        if rd.headers()?.len() != cols {
            return Err(Error::Format("header width does not match N_V".into()));
        }
        let mut values = Vec::with_capacity(rows * cols);
        for rec in rd.records() {
            let rec = rec?;
            if rec.len() != cols {
                return Err(Error::Format(format!("row with {} fields", rec.len())));
            }
            for f in rec.iter() {
                values.push(
                    f.parse::<f64>()
                        .map_err(|_| Error::Format(format!("bad number `{f}`")))?,
                );
            }
        }
        if values.len() != rows * cols {
            return Err(Error::Format(format!(
                "expected {rows} rows, found {}",
                values.len() / cols.max(1)
            )));
        }
        let mut out = Self::from_rows(rows, cols, &values)?;
        out.meta = meta;
        out.centered = centered;
        Ok(out)
    }
}

fn column_means(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows().max(1) as f64;
    m.column_iter().map(|c| c.sum() / n).collect()
}

/// Timing and seeding of a harvest run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarvestConfig {
    /// Leading inputs fed to the reservoir but excluded from the state matrix.
    pub buffer: usize,
    /// Input-free settling time before the first input.
    pub transient: f64,
    pub noise_seed: u64,
    pub init: InitialCondition,
}

impl Default for HarvestConfig {
    fn default() -> Self {
        Self {
            buffer: 5_000,
            transient: 1e5,
            noise_seed: 0,
            init: InitialCondition::Default,
        }
    }
}

/// Drives the laser with the masked inputs and samples `|E|^2` at the end of
/// every node interval. Row `r` holds the response to `inputs[buffer + r]`.
pub fn harvest(
    params: &LaserParams,
    clocking: &ReservoirClocking,
    inputs: &InputSequence,
    cfg: &HarvestConfig,
) -> Result<StateMatrix> {
    params.validate()?;
    let node_steps = clocking.node_steps(params.dt)?;
    let transient_steps = grid_steps(cfg.transient, params.dt)
        .map_err(|_| Error::param("transient", "not an integer multiple of dt"))?;
    if inputs.len() <= cfg.buffer {
        return Err(Error::InsufficientHistory {
            needed: cfg.buffer + 1,
            available: inputs.len(),
        });
    }
    let rows = inputs.len() - cfg.buffer;
    let nv = clocking.n_virtual;

    let mut sim = Simulator::new(params, cfg.init, cfg.noise_seed)?;
    sim.run(transient_steps, 0.0);

    // row-major accumulation, converted once at the end
    let mut out = Vec::with_capacity(rows * nv);
    for (j, &u) in inputs.values.iter().enumerate() {
        let keep = j >= cfg.buffer;
        for &g in &clocking.mask {
            sim.run(node_steps, u * g);
            if keep {
                out.push(sim.intensity());
            }
        }
        if !sim.state().is_finite() {
            return Err(Error::NonFinite("reservoir trajectory"));
        }
    }
    let mut s = StateMatrix::from_rows(rows, nv, &out)?;
    s.meta = HarvestMeta {
        mask_seed: clocking.mask_seed,
        input_seed: inputs.seed,
        noise_seed: Some(cfg.noise_seed),
    };
    Ok(s)
}

/// Readout training options.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReadoutConfig {
    /// Tikhonov parameter; zero selects the Moore-Penrose pseudoinverse.
    pub lambda: f64,
    /// Append a constant column (not regularized).
    pub bias: bool,
}

impl Default for ReadoutConfig {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            bias: true,
        }
    }
}

/// Trained linear readout.
#[derive(Debug, Clone, PartialEq)]
pub struct ReadoutWeights {
    pub weights: DVector<f64>,
    pub bias: Option<f64>,
    pub lambda: f64,
}

impl ReadoutWeights {
    pub fn predict(&self, states: &StateMatrix) -> Result<Vec<f64>> {
        self.predict_matrix(states.matrix())
    }

    pub fn predict_matrix(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        if x.ncols() != self.weights.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} features for {} weights",
                x.ncols(),
                self.weights.len()
            )));
        }
        let b = self.bias.unwrap_or(0.0);
        Ok((x * &self.weights).iter().map(|v| v + b).collect())
    }
}

/// Minimizes `|S w - y|^2 + lambda |w|^2`.
pub fn train_readout(
    states: &StateMatrix,
    targets: &[f64],
    cfg: &ReadoutConfig,
) -> Result<ReadoutWeights> {
    fit_linear(states.matrix(), targets, cfg)
}

/// [`train_readout`] on a raw feature matrix.
pub fn fit_linear(
    x: &DMatrix<f64>,
    targets: &[f64],
    cfg: &ReadoutConfig,
) -> Result<ReadoutWeights> {
    if x.nrows() != targets.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} state rows for {} targets",
            x.nrows(),
            targets.len()
        )));
    }
    if !(cfg.lambda >= 0.0 && cfg.lambda.is_finite()) {
        return Err(Error::param("lambda", "must be finite and non-negative"));
    }
    if targets.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("targets"));
    }
    let features = x.ncols();
    let design = if cfg.bias {
        x.clone().insert_column(features, 1.0)
    } else {
        x.clone()
    };
    let y = DVector::from_column_slice(targets);

    let sol = if cfg.lambda == 0.0 {
        pinv_solve(&design, &y)
    } else {
        let mut gram = design.transpose() * &design;
        for j in 0..features {
            gram[(j, j)] += cfg.lambda;
        }
        let rhs = design.transpose() * &y;
        match gram.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => pinv_solve(&gram, &rhs),
        }
    };
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("readout weights"));
    }
    let (weights, bias) = if cfg.bias {
        (sol.rows(0, features).into_owned(), Some(sol[features]))
    } else {
        (sol, None)
    };
    Ok(ReadoutWeights {
        weights,
        bias,
        lambda: cfg.lambda,
    })
}

/// Least-squares solution via SVD, discarding singular values below
/// `max(rows, cols) * sigma_max * eps`.
pub(crate) fn pinv_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let tol = a.nrows().max(a.ncols()) as f64 * smax * f64::EPSILON;
    svd.solve(b, tol)
        .unwrap_or_else(|_| DVector::zeros(a.ncols()))
}

/// `sqrt(sum (target - y)^2 / (N var(target)))` with the population variance.
pub fn nrmse(prediction: &[f64], target: &[f64]) -> Result<f64> {
    if prediction.len() != target.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} predictions for {} targets",
            prediction.len(),
            target.len()
        )));
    }
    if target.is_empty() {
        return Err(Error::ZeroVariance);
    }
    let n = target.len() as f64;
    let mean = target.iter().sum::<f64>() / n;
    let var = target.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n;
    if var <= 0.0 {
        return Err(Error::ZeroVariance);
    }
    let sse: f64 = prediction
        .iter()
        .zip(target)
        .map(|(y, t)| (t - y).powi(2))
        .sum();
    Ok((sse / (n * var)).sqrt())
}
