//! Task-independent memory capacity on a basis of Legendre-product tasks.
//!
//! Delays follow the reservoir-computing convention where delay 1 is the
//! input that drove the clock cycle a state-matrix row was sampled in, delay 2
//! the one before it, and so on.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reservoir::StateMatrix;

/// Relative singular-value cutoff for the column-space basis.
pub const RANK_TOL: f64 = 1e-10;

/// A random target has expected capacity `N_V / L` against `L x N_V` states
/// (`L C` is chi-squared with `N_V` degrees of freedom). With the automatic
/// cutoff at four times that level, chance-level tasks essentially never pass.
pub const CHANCE_FACTOR: f64 = 4.0;

/// `sqrt(2d + 1) P_d(u)`: unit mean square for `u ~ U[-1, 1]`.
pub fn legendre_normalized(d: u32, u: f64) -> Result<f64> {
    if !(-1.0..=1.0).contains(&u) {
        return Err(Error::param("u", format!("{u} outside [-1, 1]")));
    }
    Ok(legendre(d, u) * f64::from(2 * d + 1).sqrt())
}

fn legendre(d: u32, u: f64) -> f64 {
    match d {
        0 => 1.0,
        1 => u,
        _ => {
            let (mut p0, mut p1) = (1.0, u);
            for k in 1..d {
                let k = f64::from(k);
                let p2 = ((2.0 * k + 1.0) * u * p1 - k * p0) / (k + 1.0);
                p0 = p1;
                p1 = p2;
            }
            p1
        }
    }
}

/// A product target: degree `d_i` Legendre polynomial applied at delay `i`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TaskSpec {
    /// `(delay, degree)` pairs sorted by delay.
    factors: Vec<(usize, u32)>,
}

impl TaskSpec {
    pub fn new(mut factors: Vec<(usize, u32)>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::param("task", "needs at least one factor"));
        }
        factors.sort_unstable();
        for w in factors.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::param("task", format!("delay {} repeated", w[0].0)));
            }
        }
        if factors.iter().any(|&(i, d)| i == 0 || d == 0) {
            return Err(Error::param("task", "delays and degrees must be >= 1"));
        }
        Ok(Self { factors })
    }

    pub fn factors(&self) -> &[(usize, u32)] {
        &self.factors
    }

    pub fn degree(&self) -> u32 {
        self.factors.iter().map(|f| f.1).sum()
    }

    pub fn max_delay(&self) -> usize {
        self.factors.last().map(|f| f.0).unwrap_or(0)
    }

    pub fn min_delay(&self) -> usize {
        self.factors[0].0
    }
}

/// Target vector for `rows` consecutive rows whose first row was driven by
/// `inputs[first_row]`: `y_r = prod_i P_{d_i}(inputs[first_row + r + 1 - i])`.
pub fn target_from_task(
    task: &TaskSpec,
    inputs: &[f64],
    first_row: usize,
    rows: usize,
) -> Result<Vec<f64>> {
    check_history(task.max_delay(), inputs.len(), first_row, rows)?;
    let mut y = vec![1.0; rows];
    for &(delay, degree) in task.factors() {
        let offset = first_row + 1 - delay;
        for (r, yr) in y.iter_mut().enumerate() {
            *yr *= legendre_normalized(degree, inputs[offset + r])?;
        }
    }
    Ok(y)
}

fn check_history(max_delay: usize, len: usize, first_row: usize, rows: usize) -> Result<()> {
    if max_delay > first_row + 1 || first_row + rows > len {
        return Err(Error::InsufficientHistory {
            needed: (max_delay.max(1) - 1 + rows).max(first_row + rows),
            available: len,
        });
    }
    Ok(())
}

/// Orthonormal basis of the column space of a state matrix.
///
/// Built once per state matrix; each capacity is then one projection.
#[derive(Debug, Clone)]
pub struct ProjectionBasis {
    /// Row-major `rows x rank`.
    q: Vec<f64>,
    rows: usize,
    rank: usize,
}

impl ProjectionBasis {
    pub fn new(s: &DMatrix<f64>) -> Result<Self> {
        let rows = s.nrows();
        if rows == 0 || s.ncols() == 0 {
            return Err(Error::DimensionMismatch("empty state matrix".into()));
        }
        let svd = s.clone().svd(true, false);
        let u = svd.u.as_ref().expect("requested U");
        let smax = svd.singular_values.max();
        let keep: Vec<usize> = svd
            .singular_values
            .iter()
            .enumerate()
            .filter(|(_, &sv)| smax > 0.0 && sv > RANK_TOL * smax)
            .map(|(k, _)| k)
            .collect();
        let rank = keep.len();
        let mut q = Vec::with_capacity(rows * rank);
        for r in 0..rows {
            q.extend(keep.iter().map(|&k| u[(r, k)]));
        }
        Ok(Self { q, rows, rank })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    /// `|Q^T y|^2 / |y|^2`, clamped to `[0, 1]`.
    pub fn capacity_of(&self, y: &[f64]) -> Result<f64> {
        if y.len() != self.rows {
            return Err(Error::DimensionMismatch(format!(
                "target of length {} for {} rows",
                y.len(),
                self.rows
            )));
        }
        let norm_sq: f64 = y.iter().map(|v| v * v).sum();
        if norm_sq == 0.0 || !norm_sq.is_finite() {
            return Err(Error::ZeroNorm);
        }
        if self.rank == 0 {
            return Ok(0.0);
        }
        let mut acc = vec![0.0; self.rank];
        for (row, &yr) in self.q.chunks_exact(self.rank).zip(y) {
            for (a, &q) in acc.iter_mut().zip(row) {
                *a += q * yr;
            }
        }
        let proj: f64 = acc.iter().map(|a| a * a).sum();
        Ok((proj / norm_sq).clamp(0.0, 1.0))
    }
}

/// Capacity `y^T S (S^T S)^+ S^T y / |y|^2` of `s` for target `y`, taken as
/// the squared norm of the projection of `y` onto the column space of `s`.
pub fn capacity(s: &DMatrix<f64>, y: &[f64]) -> Result<f64> {
    ProjectionBasis::new(s)?.capacity_of(y)
}

/// Correlation form `sum_ij <y s_i> <s_i s_j>^+ <s_j y> / <y^2>`, evaluated
/// directly from sample averages. Kept as an independent check of [`capacity`].
pub fn capacity_dambre(s: &DMatrix<f64>, y: &[f64]) -> Result<f64> {
    let l = s.nrows();
    if y.len() != l {
        return Err(Error::DimensionMismatch(format!(
            "target of length {} for {l} rows",
            y.len()
        )));
    }
    let n = s.ncols();
    let lf = l as f64;
    let mut corr = DMatrix::<f64>::zeros(n, n);
    let mut cross = vec![0.0; n];
    for i in 0..n {
        let si = s.column(i);
        cross[i] = si.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / lf;
        for j in i..n {
            let v = si.dot(&s.column(j)) / lf;
            corr[(i, j)] = v;
            corr[(j, i)] = v;
        }
    }
    let y_sq = y.iter().map(|v| v * v).sum::<f64>() / lf;
    if y_sq == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let eig = corr.symmetric_eigen();
    let lmax = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    let tol = n.max(1) as f64 * f64::EPSILON * lmax;
    let mut num = 0.0;
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda <= tol {
            continue;
        }
        let v = eig.eigenvectors.column(k);
        let c: f64 = v.iter().zip(&cross).map(|(a, b)| a * b).sum();
        num += c * c / lambda;
    }
    Ok(num / y_sq)
}

/// Number of compositions of `d` into `m` positive parts, `C(d - 1, m - 1)`.
pub fn composition_count(d: u32, m: u32) -> u64 {
    if m == 0 || m > d {
        return 0;
    }
    binomial(u64::from(d - 1), u64::from(m - 1))
}

fn binomial(n: u64, k: u64) -> u64 {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

/// All compositions of `d` into `m` positive parts, lexicographic.
pub fn compositions(d: u32, m: u32) -> Vec<Vec<u32>> {
    fn rec(rest: u32, parts: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if parts == 1 {
            cur.push(rest);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for first in 1..=rest - (parts - 1) {
            cur.push(first);
            rec(rest - first, parts - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if m >= 1 && m <= d {
        rec(d, m, &mut Vec::new(), &mut out);
    }
    out
}

fn combinations(pool: &[usize], k: usize) -> Vec<Vec<usize>> {
    fn rec(
        pool: &[usize],
        k: usize,
        start: usize,
        cur: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for idx in start..pool.len() {
            if pool.len() - idx < k - cur.len() {
                break;
            }
            cur.push(pool[idx]);
            rec(pool, k, idx + 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(pool, k, 0, &mut Vec::new(), &mut out);
    out
}

/// Every degree-`d` task whose smallest delay is `base`, whose delays span at
/// most `window`, and whose largest delay does not exceed `max_delay`.
pub fn tasks_at_base(d: u32, base: usize, window: usize, max_delay: usize) -> Vec<TaskSpec> {
    if d == 0 || base == 0 || base > max_delay {
        return Vec::new();
    }
    let top = (base + window).min(max_delay);
    let pool: Vec<usize> = (base + 1..=top).collect();
    let mut out = Vec::new();
    for m in 1..=d {
        if (m as usize) > pool.len() + 1 {
            break;
        }
        let comps = compositions(d, m);
        for extra in combinations(&pool, m as usize - 1) {
            let delays: Vec<usize> = std::iter::once(base).chain(extra).collect();
            for comp in &comps {
                let factors = delays.iter().copied().zip(comp.iter().copied()).collect();
                out.push(TaskSpec { factors });
            }
        }
    }
    out
}

/// Windowed task enumeration with stall detection.
///
/// Yields the tasks of one base delay at a time. After each group the caller
/// reports whether any task reached the cutoff; the stream ends once `stall`
/// consecutive groups contributed nothing or `max_delay` is exhausted.
#[derive(Debug, Clone)]
pub struct TaskStream {
    degree: u32,
    max_delay: usize,
    window: usize,
    stall: Option<usize>,
    base: usize,
    quiet: usize,
}

impl TaskStream {
    pub fn report(&mut self, contributed: bool) {
        if contributed {
            self.quiet = 0;
        } else {
            self.quiet += 1;
        }
    }
}

impl Iterator for TaskStream {
    type Item = Vec<TaskSpec>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.stall.is_some_and(|j| self.quiet >= j) {
            return None;
        }
        while self.base < self.max_delay {
            self.base += 1;
            let group = tasks_at_base(self.degree, self.base, self.window, self.max_delay);
            if !group.is_empty() {
                return Some(group);
            }
        }
        None
    }
}

/// Degree-`d` tasks grouped by base delay. For `d = 1` each group is the
/// single linear task at that delay. `stall = None` disables early stopping.
pub fn enumerate_tasks(
    d: u32,
    max_delay: usize,
    window: usize,
    stall: Option<usize>,
) -> TaskStream {
    TaskStream {
        degree: d,
        max_delay,
        window,
        stall,
        base: 0,
        quiet: 0,
    }
}

/// Options for [`memory_capacity`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CapacityOptions {
    pub d_max: u32,
    pub max_delay: usize,
    pub cutoff: f64,
    /// Raise the cutoff to `CHANCE_FACTOR * N_V / L` when that exceeds `cutoff`.
    pub auto_cutoff: bool,
    pub window: usize,
    pub stall: usize,
    pub keep_tasks: bool,
}

impl Default for CapacityOptions {
    fn default() -> Self {
        Self {
            d_max: 3,
            max_delay: 100,
            cutoff: 0.001,
            auto_cutoff: true,
            window: 30,
            stall: 50,
            keep_tasks: false,
        }
    }
}

impl CapacityOptions {
    /// Degree 5, 500 delays, cutoff 0.001.
    pub fn paper() -> Self {
        Self {
            d_max: 5,
            max_delay: 500,
            ..Self::default()
        }
    }

    /// Cutoff actually applied for a state matrix of the given shape.
    pub fn effective_cutoff(&self, rows: usize, cols: usize) -> f64 {
        if self.auto_cutoff && rows > 0 {
            self.cutoff.max(CHANCE_FACTOR * cols as f64 / rows as f64)
        } else {
            self.cutoff
        }
    }
}

/// Capacity of a single task in a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskCapacity {
    pub factors: Vec<(usize, u32)>,
    pub degree: u32,
    pub capacity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityReport {
    pub schema: u32,
    /// `MC^d` for `d = 1..=d_max`, index `d - 1`.
    pub per_degree: Vec<f64>,
    pub total: f64,
    pub cutoff: f64,
    pub evaluated: usize,
    pub retained: usize,
    pub rows: usize,
    pub n_virtual: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub tasks: Option<Vec<TaskCapacity>>,
}

impl CapacityReport {
    /// `MC^d`, zero outside the evaluated range.
    pub fn degree(&self, d: u32) -> f64 {
        if d == 0 {
            return 0.0;
        }
        self.per_degree.get(d as usize - 1).copied().unwrap_or(0.0)
    }

    pub const CSV_HEADER: [&'static str; 6] = ["mc", "mc1", "mc2", "mc3", "evaluated", "retained"];
}

/// Sums retained task capacities per degree.
///
/// `inputs[first_row + r]` must be the input that drove row `r` of `states`;
/// at least `max_delay - 1` earlier inputs must be available.
pub fn memory_capacity(
    states: &StateMatrix,
    inputs: &[f64],
    first_row: usize,
    opts: &CapacityOptions,
) -> Result<CapacityReport> {
    let rows = states.rows();
    if opts.d_max == 0 {
        return Err(Error::param("d_max", "must be at least 1"));
    }
    if opts.max_delay == 0 {
        return Err(Error::param("max_delay", "must be at least 1"));
    }
    check_history(opts.max_delay, inputs.len(), first_row, rows)?;
    if inputs.iter().any(|u| !(-1.0..=1.0).contains(u)) {
        return Err(Error::param(
            "inputs",
            "capacity inputs must lie in [-1, 1]",
        ));
    }
    let centered = states.centered();
    let basis = ProjectionBasis::new(centered.matrix())?;
    let cutoff = opts.effective_cutoff(rows, states.cols());

    // normalized Legendre values for every input, one table per degree
    let lo = first_row + 1 - opts.max_delay;
    let hi = first_row + rows;
    let table: Vec<Vec<f64>> = (0..=opts.d_max)
        .map(|d| {
            let scale = f64::from(2 * d + 1).sqrt();
            inputs[lo..hi]
                .iter()
                .map(|&u| legendre(d, u) * scale)
                .collect()
        })
        .collect();

    let eval = |task: &TaskSpec| -> Result<f64> {
        let mut y = vec![1.0; rows];
        for &(delay, degree) in task.factors() {
            let col = &table[degree as usize][first_row + 1 - delay - lo..];
            for (v, p) in y.iter_mut().zip(col) {
                *v *= p;
            }
        }
        let mean = y.iter().sum::<f64>() / rows as f64;
        y.iter_mut().for_each(|v| *v -= mean);
        match basis.capacity_of(&y) {
            Err(Error::ZeroNorm) => Ok(0.0),
            other => other,
        }
    };

    let mut per_degree = vec![0.0; opts.d_max as usize];
    let mut evaluated = 0;
    let mut retained = 0;
    let mut kept = opts.keep_tasks.then(Vec::new);
    for d in 1..=opts.d_max {
        let mut stream = enumerate_tasks(d, opts.max_delay, opts.window, Some(opts.stall));
        while let Some(group) = stream.next() {
            let caps: Vec<f64> = group.par_iter().map(eval).collect::<Result<_>>()?;
            evaluated += group.len();
            let mut contributed = false;
            for (task, c) in group.into_iter().zip(caps) {
                if c >= cutoff {
                    contributed = true;
                    retained += 1;
                    per_degree[d as usize - 1] += c;
                    if let Some(k) = kept.as_mut() {
                        k.push(TaskCapacity {
                            degree: d,
                            factors: task.factors,
                            capacity: c,
                        });
                    }
                }
            }
            stream.report(contributed);
        }
    }
    Ok(CapacityReport {
        schema: 1,
        total: per_degree.iter().sum(),
        per_degree,
        cutoff,
        evaluated,
        retained,
        rows,
        n_virtual: states.cols(),
        tasks: kept,
    })
}
