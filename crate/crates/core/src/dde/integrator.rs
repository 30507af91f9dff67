use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

use super::drive::DriveSignal;
use super::history::{History, Sample};
use super::params::{grid_steps, LaserParams, SystemState};

/// Right-hand side `(dE_re, dE_im, dN)` of the deterministic laser equations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Derivative {
    pub de_re: f64,
    pub de_im: f64,
    pub dn: f64,
}

/// Deterministic part of the Lang-Kobayashi equations with pump injection `drive = I(t) g(t)`.
pub fn lk_rhs(
    state: &SystemState,
    delayed: &SystemState,
    params: &LaserParams,
    drive: f64,
) -> Result<Derivative> {
    if !state.is_finite() {
        return Err(Error::NonFinite("state"));
    }
    if !delayed.is_finite() {
        return Err(Error::NonFinite("delayed state"));
    }
    if !drive.is_finite() {
        return Err(Error::NonFinite("drive"));
    }
    let rhs = Rhs::new(params);
    let (de_re, de_im, dn) = rhs.eval(
        state.e_re,
        state.e_im,
        state.n,
        delayed.e_re,
        delayed.e_im,
        drive,
    );
    Ok(Derivative { de_re, de_im, dn })
}

#[derive(Debug, Clone, Copy)]
struct Rhs {
    alpha: f64,
    k_cos: f64,
    k_sin: f64,
    eps: f64,
    pump: f64,
    eta: f64,
}

impl Rhs {
    fn new(p: &LaserParams) -> Self {
        Self {
            alpha: p.alpha,
            k_cos: p.kappa * p.phi.cos(),
            k_sin: p.kappa * p.phi.sin(),
            eps: p.epsilon(),
            pump: p.pump,
            eta: p.eta,
        }
    }

    #[inline(always)]
    fn eval(&self, er: f64, ei: f64, n: f64, dr: f64, di: f64, drive: f64) -> (f64, f64, f64) {
        let an = self.alpha * n;
        let de_re = n * er - an * ei + self.k_cos * dr - self.k_sin * di;
        let de_im = an * er + n * ei + self.k_sin * dr + self.k_cos * di;
        let dn =
            self.eps * (self.pump + self.eta * drive - n - (2.0 * n + 1.0) * (er * er + ei * ei));
        (de_re, de_im, dn)
    }
}

/// One deterministic RK4 step of size `dt`.
///
/// The delayed field is read from `history` at `t - tau` and `t - tau + dt`;
/// the half-step value comes from cubic Hermite interpolation of the stored
/// field and derivative. The current point is recorded into `history`.
#[inline(always)]
fn rk4_core(
    rhs: &Rhs,
    dt: f64,
    s: &mut SystemState,
    history: &mut History,
    no_delay: bool,
    drive: f64,
) {
    let (er, ei, n) = (s.e_re, s.e_im, s.n);
    let h2 = 0.5 * dt;

    if no_delay {
        let (a1, b1, c1) = rhs.eval(er, ei, n, er, ei, drive);
        let (r2, i2, n2) = (er + h2 * a1, ei + h2 * b1, n + h2 * c1);
        let (a2, b2, c2) = rhs.eval(r2, i2, n2, r2, i2, drive);
        let (r3, i3, n3) = (er + h2 * a2, ei + h2 * b2, n + h2 * c2);
        let (a3, b3, c3) = rhs.eval(r3, i3, n3, r3, i3, drive);
        let (r4, i4, n4) = (er + dt * a3, ei + dt * b3, n + dt * c3);
        let (a4, b4, c4) = rhs.eval(r4, i4, n4, r4, i4, drive);
        history.record(Sample {
            e_re: er,
            e_im: ei,
            de_re: a1,
            de_im: b1,
        });
        history.advance();
        let w = dt / 6.0;
        s.e_re = er + w * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
        s.e_im = ei + w * (b1 + 2.0 * b2 + 2.0 * b3 + b4);
        s.n = n + w * (c1 + 2.0 * c2 + 2.0 * c3 + c4);
        return;
    }

    let d0 = history.oldest();
    let (a1, b1, c1) = rhs.eval(er, ei, n, d0.e_re, d0.e_im, drive);
    history.record(Sample {
        e_re: er,
        e_im: ei,
        de_re: a1,
        de_im: b1,
    });
    let d1 = history.second_oldest();
    let q = dt / 8.0;
    let mid_re = 0.5 * (d0.e_re + d1.e_re) + q * (d0.de_re - d1.de_re);
    let mid_im = 0.5 * (d0.e_im + d1.e_im) + q * (d0.de_im - d1.de_im);

    let (r2, i2, n2) = (er + h2 * a1, ei + h2 * b1, n + h2 * c1);
    let (a2, b2, c2) = rhs.eval(r2, i2, n2, mid_re, mid_im, drive);
    let (r3, i3, n3) = (er + h2 * a2, ei + h2 * b2, n + h2 * c2);
    let (a3, b3, c3) = rhs.eval(r3, i3, n3, mid_re, mid_im, drive);
    let (r4, i4, n4) = (er + dt * a3, ei + dt * b3, n + dt * c3);
    let (a4, b4, c4) = rhs.eval(r4, i4, n4, d1.e_re, d1.e_im, drive);
    history.advance();

    let w = dt / 6.0;
    s.e_re = er + w * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
    s.e_im = ei + w * (b1 + 2.0 * b2 + 2.0 * b3 + b4);
    s.n = n + w * (c1 + 2.0 * c2 + 2.0 * c3 + c4);
}

/// Advances `state` by one step of `params.dt`: a deterministic RK4 update
/// followed, when `noise` is given, by the additive complex increment
/// `d_noise * sqrt(dt) * (xi_1 + i xi_2)` on the field.
pub fn rk4_step<R: Rng + ?Sized>(
    state: &SystemState,
    history: &mut History,
    params: &LaserParams,
    drive: f64,
    noise: Option<&mut R>,
) -> Result<SystemState> {
    let m = params.delay_steps()?;
    if history.delay_steps() < m {
        return Err(Error::HistoryTooShort {
            needed: m + 1,
            available: history.len(),
        });
    }
    if history.delay_steps() != m {
        return Err(Error::DimensionMismatch(format!(
            "history spans {} steps but tau / dt = {m}",
            history.delay_steps()
        )));
    }
    if !state.is_finite() || !drive.is_finite() {
        return Err(Error::NonFinite("rk4_step input"));
    }
    let rhs = Rhs::new(params);
    let mut next = *state;
    rk4_core(&rhs, params.dt, &mut next, history, m == 0, drive);
    if let Some(rng) = noise {
        if params.d_noise > 0.0 {
            let amp = params.d_noise * params.dt.sqrt();
            next.e_re += amp * rng.sample::<f64, _>(StandardNormal);
            next.e_im += amp * rng.sample::<f64, _>(StandardNormal);
        }
    }
    next.t = state.t + params.dt;
    Ok(next)
}

/// How the delay history is initialised.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum InitialCondition {
    /// Constant history `E = sqrt(max(P, 0.01)) + 1e-3`, `N = 0`, plus one noise kick.
    #[default]
    Default,
    /// Constant history at the given state, no kick.
    Constant(SystemState),
}

/// Seeded stochastic integrator for one laser.
///
/// Time is tracked as an integer step count so sampling and drive segments
/// never drift off the grid.
#[derive(Debug, Clone)]
pub struct Simulator {
    rhs: Rhs,
    dt: f64,
    noise_amp: f64,
    no_delay: bool,
    state: SystemState,
    history: History,
    step: usize,
    rng: ChaCha8Rng,
}

impl Simulator {
    pub fn new(params: &LaserParams, init: InitialCondition, seed: u64) -> Result<Self> {
        params.validate()?;
        let m = params.delay_steps()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise_amp = params.d_noise * params.dt.sqrt();
        let state = match init {
            InitialCondition::Default => {
                let mut s = SystemState::new(params.pump.max(0.01).sqrt() + 1e-3, 0.0, 0.0);
                if noise_amp > 0.0 {
                    s.e_re += noise_amp * rng.sample::<f64, _>(StandardNormal);
                    s.e_im += noise_amp * rng.sample::<f64, _>(StandardNormal);
                }
                s
            }
            InitialCondition::Constant(s) => {
                if !s.is_finite() {
                    return Err(Error::NonFinite("initial state"));
                }
                SystemState { t: 0.0, ..s }
            }
        };
        let history = match init {
            InitialCondition::Default => {
                let e = params.pump.max(0.01).sqrt() + 1e-3;
                History::constant(m, e, 0.0)
            }
            InitialCondition::Constant(s) => History::constant(m, s.e_re, s.e_im),
        };
        Ok(Self {
            rhs: Rhs::new(params),
            dt: params.dt,
            noise_amp,
            no_delay: m == 0,
            state,
            history,
            step: 0,
            rng,
        })
    }

    pub fn state(&self) -> &SystemState {
        &self.state
    }

    pub fn history(&self) -> &History {
        &self.history
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.dt
    }

    pub fn intensity(&self) -> f64 {
        self.state.intensity()
    }

    /// One step with constant injection over the step.
    #[inline]
    pub fn step(&mut self, drive: f64) {
        rk4_core(
            &self.rhs,
            self.dt,
            &mut self.state,
            &mut self.history,
            self.no_delay,
            drive,
        );
        if self.noise_amp > 0.0 {
            self.state.e_re += self.noise_amp * self.rng.sample::<f64, _>(StandardNormal);
            self.state.e_im += self.noise_amp * self.rng.sample::<f64, _>(StandardNormal);
        }
        self.step += 1;
        self.state.t = self.step as f64 * self.dt;
    }

    /// `steps` steps with constant injection.
    pub fn run(&mut self, steps: usize, drive: f64) {
        for _ in 0..steps {
            self.step(drive);
        }
    }
}

/// Integrates for `duration` under `drive` and returns `|E|^2` at each of
/// `sample_times` (which must lie on the grid within `[0, duration]`).
pub fn integrate(
    params: &LaserParams,
    init: InitialCondition,
    drive: &DriveSignal,
    duration: f64,
    seed: u64,
    sample_times: &[f64],
) -> Result<Vec<f64>> {
    let total = grid_steps(duration, params.dt)?;
    let mut wanted: Vec<(usize, usize)> = Vec::with_capacity(sample_times.len());
    for (i, &t) in sample_times.iter().enumerate() {
        let s = grid_steps(t, params.dt)?;
        if s > total {
            return Err(Error::param(
                "sample_times",
                format!("{t} lies beyond the integration horizon {duration}"),
            ));
        }
        wanted.push((s, i));
    }
    wanted.sort_unstable();

    let grid = drive.on_grid(params.dt)?;
    let mut sim = Simulator::new(params, init, seed)?;
    let mut out = vec![0.0; sample_times.len()];
    let mut cursor = 0;
    for step in 0..=total {
        while cursor < wanted.len() && wanted[cursor].0 == step {
            out[wanted[cursor].1] = sim.intensity();
            cursor += 1;
        }
        if step == total {
            break;
        }
        sim.step(grid.at_step(step));
        if !sim.state().is_finite() {
            return Err(Error::NonFinite("trajectory"));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solitary(pump: f64) -> LaserParams {
        LaserParams {
            pump,
            kappa: 0.0,
            tau: 0.0,
            d_noise: 0.0,
            ..Default::default()
        }
    }

    #[test]
    fn solitary_equilibrium_is_stationary() {
        let p = solitary(0.05);
        let s = SystemState::new(0.05f64.sqrt(), 0.0, 0.0);
        let d = lk_rhs(&s, &s, &p, 0.0).unwrap();
        assert!(d.de_re.abs() < 1e-16 && d.de_im.abs() < 1e-16 && d.dn.abs() < 1e-16);
    }

    #[test]
    fn ecm_is_stationary() {
        // E = A, N = -kappa, phi = 0, A^2 = (P + kappa) / (1 - 2 kappa)
        let kappa = 0.1;
        let pump = -0.095;
        let p = LaserParams {
            kappa,
            pump,
            tau: 5.0,
            ..Default::default()
        };
        let a = ((pump + kappa) / (1.0 - 2.0 * kappa)).sqrt();
        let s = SystemState::new(a, 0.0, -kappa);
        let d = lk_rhs(&s, &s, &p, 0.0).unwrap();
        assert!(d.de_re.abs() < 1e-16, "{d:?}");
        assert!(d.de_im.abs() < 1e-16, "{d:?}");
        assert!(d.dn.abs() < 1e-16, "{d:?}");
    }

    #[test]
    fn off_state_relaxes_towards_pump() {
        let p = LaserParams {
            t_lk: 4.0,
            ..solitary(0.3)
        };
        let s = SystemState::new(0.0, 0.0, 0.7);
        let d = lk_rhs(&s, &s, &p, 0.0).unwrap();
        assert_eq!(d.de_re, 0.0);
        assert_eq!(d.de_im, 0.0);
        assert!((d.dn - (0.3 - 0.7) / 4.0).abs() < 1e-16);
    }

    #[test]
    fn rhs_rejects_non_finite() {
        let p = solitary(0.05);
        let bad = SystemState::new(f64::NAN, 0.0, 0.0);
        let ok = SystemState::default();
        assert!(lk_rhs(&bad, &ok, &p, 0.0).is_err());
        assert!(lk_rhs(&ok, &bad, &p, 0.0).is_err());
        assert!(lk_rhs(&ok, &ok, &p, f64::INFINITY).is_err());
    }

    #[test]
    fn rk4_step_needs_matching_history() {
        let p = LaserParams {
            tau: 1.0,
            ..solitary(0.05)
        };
        let mut short = History::constant(10, 0.2, 0.0);
        let s = SystemState::new(0.2, 0.0, 0.0);
        let err = rk4_step::<ChaCha8Rng>(&s, &mut short, &p, 0.0, None).unwrap_err();
        assert!(matches!(err, Error::HistoryTooShort { .. }));
    }

    #[test]
    fn rk4_step_keeps_fixed_point() {
        let p = solitary(0.05);
        let mut h = History::constant(0, 0.0, 0.0);
        let mut s = SystemState::new(0.05f64.sqrt(), 0.0, 0.0);
        let s0 = s;
        for _ in 0..100 {
            s = rk4_step::<ChaCha8Rng>(&s, &mut h, &p, 0.0, None).unwrap();
        }
        assert!((s.e_re - s0.e_re).abs() < 1e-15);
        assert!(s.n.abs() < 1e-15);
        assert!((s.t - 1.0).abs() < 1e-12);
    }

    #[test]
    fn free_function_and_simulator_agree() {
        let p = LaserParams {
            kappa: 0.1,
            tau: 0.5,
            pump: 0.02,
            d_noise: 1e-4,
            ..Default::default()
        };
        let init = SystemState::new(0.3, 0.01, -0.02);
        let mut sim = Simulator::new(&p, InitialCondition::Constant(init), 9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut h = History::constant(50, init.e_re, init.e_im);
        let mut s = init;
        for k in 0..300 {
            let u = if (k / 7) % 2 == 0 { 0.4 } else { -0.2 };
            sim.step(u);
            s = rk4_step(&s, &mut h, &p, u, Some(&mut rng)).unwrap();
        }
        assert_eq!(sim.state().e_re, s.e_re);
        assert_eq!(sim.state().e_im, s.e_im);
        assert_eq!(sim.state().n, s.n);
    }

    #[test]
    fn integrate_rejects_off_grid_samples() {
        let p = solitary(0.05);
        let r = integrate(
            &p,
            InitialCondition::Default,
            &DriveSignal::zero(),
            1.0,
            1,
            &[0.505],
        );
        assert!(matches!(r, Err(Error::OffGrid { .. })));
    }
}
