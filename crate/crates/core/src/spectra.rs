//! Linear stability of the laser around its operating point and the
//! eigenvalue-based predictors `Phi` and `Lambda`.
//!
//! With feedback the reservoir sits on an external cavity mode (ECM). The
//! linearization in real coordinates `(Re E, Im E, N)` gives the
//! characteristic equation `det(-lambda I + B + C e^{-lambda tau}) = 0`. For
//! long delays its roots line up on two pseudocontinuous branches
//! `lambda = gamma_j(mu) / tau + i mu`, which are computed in closed form and
//! can be polished by Newton iteration on the full determinant.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // negated comparisons also reject NaN

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{Matrix2, Matrix3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dde::LaserParams;
use crate::error::{Error, Result};

/// Eigenvalue count used for the predictors unless configured otherwise.
pub const DEFAULT_EIGENVALUES: usize = 100;

/// Eigenvalues closer than this to zero are the phase-symmetry mode.
pub const GOLDSTONE_TOL: f64 = 1e-8;

/// Delays shorter than this make the pseudocontinuous spectrum unreliable.
pub const SHORT_DELAY_WARNING: f64 = 50.0;

/// External cavity mode: `E(t) = sqrt(a_sq) e^{i omega t}`, `N = n_star`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ecm {
    pub a_sq: f64,
    pub n_star: f64,
    pub omega: f64,
}

/// The most stable ECM of a laser with `alpha = 0` and `phi = 0`.
pub fn ecm(params: &LaserParams) -> Result<Ecm> {
    params.validate()?;
    if params.alpha != 0.0 {
        return Err(Error::Unsupported("ECM for alpha != 0".into()));
    }
    if params.phi != 0.0 {
        return Err(Error::Unsupported("ECM for phi != 0".into()));
    }
    let k = params.kappa;
    if !(k < 0.5) {
        return Err(Error::param(
            "kappa",
            "must be below 0.5 for the ECM to exist",
        ));
    }
    let a_sq = (params.pump + k) / (1.0 - 2.0 * k);
    if !(a_sq > 0.0) {
        return Err(Error::BelowThreshold { a_sq });
    }
    Ok(Ecm {
        a_sq,
        n_star: -k,
        omega: 0.0,
    })
}

/// Jacobian of the amplitude and inversion of the solitary laser at its
/// lasing state `(sqrt(P), 0)`.
pub fn solitary_jacobian(params: &LaserParams) -> Result<Matrix2<f64>> {
    check_solitary(params)?;
    let eps = params.epsilon();
    let p = params.pump;
    Ok(Matrix2::new(
        0.0,
        p.sqrt(),
        -2.0 * eps * p.sqrt(),
        -eps * (1.0 + 2.0 * p),
    ))
}

fn check_solitary(params: &LaserParams) -> Result<()> {
    params.validate()?;
    if params.kappa != 0.0 {
        return Err(Error::param("kappa", "solitary eigenvalues need kappa = 0"));
    }
    if !(params.pump > 0.0) {
        return Err(Error::BelowThreshold { a_sq: params.pump });
    }
    Ok(())
}

/// Roots of `lambda^2 + eps (1 + 2P) lambda + 2 eps P = 0`, least negative
/// first; for a complex pair the one with positive imaginary part comes first.
pub fn solitary_eigenvalues(params: &LaserParams) -> Result<(Complex64, Complex64)> {
    check_solitary(params)?;
    let eps = params.epsilon();
    let p = params.pump;
    let b = eps * (1.0 + 2.0 * p);
    let c = 2.0 * eps * p;
    let disc = b * b - 4.0 * c;
    if disc >= 0.0 {
        // avoid cancellation in the small root
        let q = -0.5 * (b + disc.sqrt());
        let (r1, r2) = (c / q, q);
        let (hi, lo) = if r1 >= r2 { (r1, r2) } else { (r2, r1) };
        Ok((Complex64::new(hi, 0.0), Complex64::new(lo, 0.0)))
    } else {
        let w = 0.5 * (-disc).sqrt();
        Ok((Complex64::new(-0.5 * b, w), Complex64::new(-0.5 * b, -w)))
    }
}

/// `T_LK` at which the solitary eigenvalues turn from real to complex.
pub fn class_transition_t_lk(pump: f64) -> f64 {
    (1.0 + 2.0 * pump).powi(2) / (8.0 * pump)
}

/// Linearized delay system `dx/dt = B x(t) + C x(t - tau)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CharacteristicSystem {
    pub b: Matrix3<f64>,
    pub c: Matrix3<f64>,
    pub tau: f64,
}

impl CharacteristicSystem {
    /// Linearization at the state `E = sqrt(a_sq)` (real), `N = n_star`.
    pub fn at_ecm(params: &LaserParams, ecm: &Ecm) -> Self {
        let a = ecm.a_sq.sqrt();
        let n = ecm.n_star;
        let al = params.alpha;
        let eps = params.epsilon();
        let b = Matrix3::new(
            n,
            -al * n,
            a,
            al * n,
            n,
            al * a,
            -2.0 * eps * (2.0 * n + 1.0) * a,
            0.0,
            -eps * (1.0 + 2.0 * ecm.a_sq),
        );
        let (s, co) = params.phi.sin_cos();
        let k = params.kappa;
        let c = Matrix3::new(k * co, -k * s, 0.0, k * s, k * co, 0.0, 0.0, 0.0, 0.0);
        Self {
            b,
            c,
            tau: params.tau,
        }
    }

    pub fn from_params(params: &LaserParams) -> Result<Self> {
        let e = ecm(params)?;
        Ok(Self::at_ecm(params, &e))
    }
}

/// `det(-lambda I + B + C e^{-lambda tau})`.
pub fn characteristic_value(lambda: Complex64, sys: &CharacteristicSystem) -> Complex64 {
    let z = (-lambda * sys.tau).exp();
    let m = Matrix3::from_fn(|r, c| {
        let mut v = Complex64::new(sys.b[(r, c)], 0.0) + z * sys.c[(r, c)];
        if r == c {
            v -= lambda;
        }
        v
    });
    m.determinant()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Exact2x2,
    Pcs,
    Newton,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Eigenvalue {
    pub re: f64,
    pub im: f64,
    /// Pseudocontinuous branch (1 or 2); 0 for solitary eigenvalues.
    pub branch: u8,
    pub k: i64,
    pub source: Source,
}

impl Eigenvalue {
    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub eigenvalues: Vec<Eigenvalue>,
    pub params: LaserParams,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl Spectrum {
    fn sort(&mut self) {
        self.eigenvalues.sort_by(|a, b| {
            b.re.total_cmp(&a.re)
                .then(b.im.total_cmp(&a.im))
                .then(a.branch.cmp(&b.branch))
        });
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Both solitary eigenvalues, least negative first.
    pub fn solitary(params: &LaserParams) -> Result<Self> {
        let (l1, l2) = solitary_eigenvalues(params)?;
        let entry = |l: Complex64, k| Eigenvalue {
            re: l.re,
            im: l.im,
            branch: 0,
            k,
            source: Source::Exact2x2,
        };
        Ok(Self {
            eigenvalues: vec![entry(l1, 0), entry(l2, 1)],
            params: *params,
            warnings: Vec::new(),
        })
    }
}

fn check_feedback(params: &LaserParams) -> Result<()> {
    if !(params.kappa > 0.0) {
        return Err(Error::param(
            "kappa",
            "pseudocontinuous spectrum needs kappa > 0; use the solitary eigenvalues",
        ));
    }
    Ok(())
}

/// `Y_1(mu)` and `Y_2(mu)`; `e^{-gamma - i mu tau} = Y_j(mu)` to leading order in `1/tau`.
pub fn branch_roots(mu: f64, params: &LaserParams, ecm: &Ecm) -> Result<(Complex64, Complex64)> {
    check_feedback(params)?;
    Ok(branch_roots_unchecked(mu, params, ecm))
}

fn branch_roots_unchecked(mu: f64, params: &LaserParams, ecm: &Ecm) -> (Complex64, Complex64) {
    let k = params.kappa;
    let eps = params.epsilon();
    let a = eps * (1.0 + 2.0 * ecm.a_sq);
    let y1 = Complex64::new(1.0, mu / k);
    let coupling = 2.0 * eps * (params.pump + k) / (k * (mu * mu + a * a));
    let y2 = y1 + Complex64::new(a, -mu) * coupling;
    (y1, y2)
}

/// Real parts `gamma_j(mu) = -ln |Y_j(mu)|` of the two pseudocontinuous branches.
pub fn pcs_gamma(mu: f64, params: &LaserParams, ecm: &Ecm) -> Result<(f64, f64)> {
    let (y1, y2) = branch_roots(mu, params, ecm)?;
    Ok((-y1.norm().ln(), -y2.norm().ln()))
}

fn wrap_pi(x: f64) -> f64 {
    let r = (x + PI).rem_euclid(2.0 * PI) - PI;
    if r <= -PI {
        r + 2.0 * PI
    } else {
        r
    }
}

/// Solves `mu tau = pi (2k - nu) - (arg Y(mu) - nu pi)` by fixed-point
/// iteration from `pi (2k - nu) / tau`.
fn branch_mu(k: i64, nu: u8, tau: f64, y: impl Fn(f64) -> Complex64) -> f64 {
    let base = PI * f64::from(nu);
    let target = 2.0 * PI * k as f64 - base;
    let mut mu = target / tau;
    for _ in 0..200 {
        let next = (target - wrap_pi(y(mu).arg() - base)) / tau;
        let done = (next - mu).abs() <= 1e-15 * mu.abs().max(1.0 / tau);
        mu = next;
        if done {
            break;
        }
    }
    mu
}

/// The `n` pseudocontinuous eigenvalues with the largest real part,
/// excluding the phase-symmetry zero mode.
pub fn pcs_spectrum(params: &LaserParams, ecm: &Ecm, n: usize) -> Result<Spectrum> {
    check_feedback(params)?;
    if !(params.tau > 0.0) {
        return Err(Error::param(
            "tau",
            "must be positive for the pseudocontinuous spectrum",
        ));
    }
    let tau = params.tau;
    let mut warnings = Vec::new();
    if tau < SHORT_DELAY_WARNING {
        warnings.push(format!(
            "tau = {tau} is short; the long-delay spectrum may be inaccurate"
        ));
    }
    let (y1_0, y2_0) = branch_roots_unchecked(0.0, params, ecm);
    let nu = |y: Complex64| if y.re > 0.0 { 0u8 } else { 1u8 };
    let nus = [nu(y1_0), nu(y2_0)];

    // gamma_j decreases with |mu|, so |k| <= n per branch always covers the top n
    let k_max = n as i64 + 1;
    let mut eigenvalues = Vec::with_capacity(2 * (2 * k_max as usize + 1));
    for (j, &nu_j) in nus.iter().enumerate() {
        let pick = |mu: f64| {
            let (y1, y2) = branch_roots_unchecked(mu, params, ecm);
            if j == 0 {
                y1
            } else {
                y2
            }
        };
        for k in -k_max..=k_max {
            let mu = branch_mu(k, nu_j, tau, pick);
            let gamma = -pick(mu).norm().ln();
            let lambda = Complex64::new(gamma / tau, mu);
            if lambda.norm() < GOLDSTONE_TOL {
                continue;
            }
            eigenvalues.push(Eigenvalue {
                re: lambda.re,
                im: lambda.im,
                branch: j as u8 + 1,
                k,
                source: Source::Pcs,
            });
        }
    }
    let mut s = Spectrum {
        eigenvalues,
        params: *params,
        warnings,
    };
    s.sort();
    s.eigenvalues.truncate(n);
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Refined {
    pub lambda: Complex64,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Newton iteration on the characteristic determinant with a central
/// difference derivative. On failure the seed is returned with `converged = false`.
pub fn newton_refine(seed: Complex64, sys: &CharacteristicSystem, opts: &NewtonOptions) -> Refined {
    let f = |l: Complex64| characteristic_value(l, sys);
    let mut lambda = seed;
    let mut val = f(lambda);
    let mut iterations = 0;
    while val.norm() >= opts.tol {
        if iterations == opts.max_iter {
            return Refined {
                lambda: seed,
                residual: f(seed).norm(),
                iterations,
                converged: false,
            };
        }
        let h = 1e-7 * lambda.norm().max(1e-3);
        let d = (f(lambda + h) - f(lambda - h)) / (2.0 * h);
        let step = val / d;
        if !step.re.is_finite() || !step.im.is_finite() {
            iterations = opts.max_iter;
            continue;
        }
        lambda -= step;
        val = f(lambda);
        iterations += 1;
    }
    Refined {
        lambda,
        residual: val.norm(),
        iterations,
        converged: true,
    }
}

/// Refines every eigenvalue of `spectrum`, drops duplicates (within
/// `1e-8`) and the zero mode, and re-sorts.
pub fn refine_spectrum(spectrum: &Spectrum, opts: &NewtonOptions) -> Result<Spectrum> {
    let sys = CharacteristicSystem::from_params(&spectrum.params)?;
    let mut out: Vec<Eigenvalue> = Vec::with_capacity(spectrum.len());
    let mut warnings = spectrum.warnings.clone();
    let mut failed = 0;
    for e in &spectrum.eigenvalues {
        let r = newton_refine(e.value(), &sys, opts);
        if !r.converged {
            failed += 1;
        }
        if r.lambda.norm() < GOLDSTONE_TOL {
            continue;
        }
        if out.iter().any(|o| (o.value() - r.lambda).norm() < 1e-8) {
            continue;
        }
        out.push(Eigenvalue {
            re: r.lambda.re,
            im: r.lambda.im,
            source: if r.converged {
                Source::Newton
            } else {
                Source::Pcs
            },
            ..*e
        });
    }
    if failed > 0 {
        warnings.push(format!(
            "{failed} eigenvalues did not converge; kept their seeds"
        ));
    }
    let mut s = Spectrum {
        eigenvalues: out,
        params: spectrum.params,
        warnings,
    };
    s.sort();
    Ok(s)
}

/// Spectrum of the operating point: the solitary eigenvalues for `kappa = 0`,
/// otherwise the `n` leading pseudocontinuous eigenvalues of the ECM.
pub fn operating_spectrum(params: &LaserParams, n: usize) -> Result<Spectrum> {
    if params.kappa == 0.0 {
        Spectrum::solitary(params)
    } else {
        let e = ecm(params)?;
        pcs_spectrum(params, &e, n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predictors {
    /// `|Im lambda_i| T mod pi`.
    pub phi: Vec<f64>,
    /// `exp(Re lambda_i T)`.
    pub lambda: Vec<f64>,
    pub phi_hat: f64,
    pub lambda_hat: f64,
    pub n_used: usize,
    /// Every eigenvalue used is real, so `Phi` is identically zero.
    pub degenerate: bool,
}

/// `Phi` and `Lambda` of the `n` leading eigenvalues (zero mode excluded) at clock cycle `t`.
///
/// Conjugate eigenvalues share the same `|Im|`, so `Phi` is taken from the
/// absolute imaginary part; averaging signed values mod pi would pin the mean
/// at pi / 2 for any conjugate-symmetric set.
pub fn predictors(spectrum: &Spectrum, t: f64, n: usize) -> Result<Predictors> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::param("clock_cycle", "must be positive and finite"));
    }
    if n == 0 {
        return Err(Error::param("n", "must be at least 1"));
    }
    let used: Vec<&Eigenvalue> = spectrum
        .eigenvalues
        .iter()
        .filter(|e| e.value().norm() >= GOLDSTONE_TOL)
        .take(n)
        .collect();
    if used.len() < n {
        return Err(Error::InsufficientHistory {
            needed: n,
            available: used.len(),
        });
    }
    let phi: Vec<f64> = used.iter().map(|e| phase_mod_pi(e.im, t)).collect();
    let lambda: Vec<f64> = used.iter().map(|e| (e.re * t).exp()).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(Predictors {
        phi_hat: mean(&phi),
        lambda_hat: mean(&lambda),
        degenerate: used.iter().all(|e| e.im == 0.0),
        phi,
        lambda,
        n_used: n,
    })
}

/// `|im| t` reduced to `[0, pi)`.
pub fn phase_mod_pi(im: f64, t: f64) -> f64 {
    let r = (im.abs() * t).rem_euclid(PI);
    if r >= PI {
        0.0
    } else {
        r
    }
}

/// Predictors of the operating point. For the solitary laser only the
/// least negative eigenvalue is used; otherwise the `n` leading ones.
pub fn operating_predictors(params: &LaserParams, t: f64, n: usize) -> Result<Predictors> {
    let s = operating_spectrum(params, n)?;
    let n = if params.kappa == 0.0 { 1 } else { n };
    predictors(&s, t, n)
}

/// Distance of `phi` to the nearest resonance at 0 or pi.
pub fn resonance_distance(phi: f64) -> f64 {
    phi.min(PI - phi).abs()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinePoint {
    /// Index into the parameter grid.
    pub index: usize,
    pub clock_cycle: f64,
    pub phi_hat: f64,
    pub lambda_hat: f64,
    /// `min(phi_hat, pi - phi_hat)`.
    pub distance: f64,
    pub resonant: bool,
    pub degenerate: bool,
}

/// Evaluates `Phi_hat` and `Lambda_hat` on every `(grid[i], t)` pair and
/// marks points within `band` of a resonance at 0 or pi.
pub fn resonance_lines(
    grid: &[LaserParams],
    clock_cycles: &[f64],
    n: usize,
    band: f64,
) -> Result<Vec<LinePoint>> {
    use rayon::prelude::*;
    if !(band >= 0.0) {
        return Err(Error::param("band", "must be non-negative"));
    }
    let spectra: Vec<Spectrum> = grid
        .par_iter()
        .map(|p| operating_spectrum(p, n))
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(grid.len() * clock_cycles.len());
    for (index, (s, p)) in spectra.iter().zip(grid).enumerate() {
        let n_used = if p.kappa == 0.0 { 1 } else { n };
        for &t in clock_cycles {
            let pr = predictors(s, t, n_used)?;
            let distance = resonance_distance(pr.phi_hat);
            out.push(LinePoint {
                index,
                clock_cycle: t,
                phi_hat: pr.phi_hat,
                lambda_hat: pr.lambda_hat,
                distance,
                resonant: distance <= band,
                degenerate: pr.degenerate,
            });
        }
    }
    Ok(out)
}

/// Default resonance band, `0.05 pi`.
pub const DEFAULT_BAND: f64 = 0.05 * PI;

pub const SPECTRUM_CSV_HEADER: [&str; 6] = ["Re", "Im", "branch", "k", "Phi", "Lambda"];

/// One row per eigenvalue with its `Phi` and `Lambda` at clock cycle `t`.
pub fn write_spectrum_csv<W: Write>(spectrum: &Spectrum, t: f64, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SPECTRUM_CSV_HEADER)?;
    for e in &spectrum.eigenvalues {
        w.write_record([
            format!("{:.9e}", e.re),
            format!("{:.9e}", e.im),
            e.branch.to_string(),
            e.k.to_string(),
            format!("{:.9e}", phase_mod_pi(e.im, t)),
            format!("{:.9e}", (e.re * t).exp()),
        ])?;
    }
    w.flush()?;
    Ok(())
}
