use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative slack allowed when checking that a duration is a whole number of steps.
const GRID_TOL: f64 = 1e-9;

/// Constants of the Lang-Kobayashi laser with electrical injection.
///
/// Times are measured in photon lifetimes. `t_lk` is the ratio of carrier to
/// photon lifetime, so the carrier equation is scaled by `1 / t_lk`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LaserParams {
    pub alpha: f64,
    pub kappa: f64,
    pub phi: f64,
    pub tau: f64,
    pub pump: f64,
    pub eta: f64,
    pub t_lk: f64,
    pub d_noise: f64,
    pub dt: f64,
}

impl Default for LaserParams {
    fn default() -> Self {
        Self {
            alpha: 0.0,
            kappa: 0.0,
            phi: 0.0,
            tau: 0.0,
            pump: 0.05,
            eta: 0.01,
            t_lk: 1.0,
            d_noise: 1e-7,
            dt: 0.01,
        }
    }
}

impl LaserParams {
    /// Checks the invariants the integrator relies on.
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("alpha", self.alpha),
            ("kappa", self.kappa),
            ("phi", self.phi),
            ("tau", self.tau),
            ("pump", self.pump),
            ("eta", self.eta),
            ("t_lk", self.t_lk),
            ("d_noise", self.d_noise),
            ("dt", self.dt),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                return Err(Error::param(name, "must be finite"));
            }
        }
        if self.dt <= 0.0 {
            return Err(Error::param("dt", "must be positive"));
        }
        if self.tau < 0.0 {
            return Err(Error::param("tau", "must be non-negative"));
        }
        if self.t_lk <= 0.0 {
            return Err(Error::param("t_lk", "must be positive"));
        }
        if self.d_noise < 0.0 {
            return Err(Error::param("d_noise", "must be non-negative"));
        }
        self.delay_steps().map(|_| ())
    }

    /// Delay length in integration steps.
    pub fn delay_steps(&self) -> Result<usize> {
        grid_steps(self.tau, self.dt).map_err(|_| {
            Error::param(
                "tau",
                format!(
                    "{} is not an integer multiple of dt = {}",
                    self.tau, self.dt
                ),
            )
        })
    }

    /// `1 / t_lk`.
    pub fn epsilon(&self) -> f64 {
        1.0 / self.t_lk
    }
}

/// Converts a duration into a whole number of steps of size `dt`.
pub fn grid_steps(duration: f64, dt: f64) -> Result<usize> {
    if !(duration.is_finite() && dt > 0.0) || duration < 0.0 {
        return Err(Error::OffGrid { time: duration, dt });
    }
    let ratio = duration / dt;
    let steps = ratio.round();
    if (ratio - steps).abs() > GRID_TOL * steps.max(1.0) {
        return Err(Error::OffGrid { time: duration, dt });
    }
    Ok(steps as usize)
}

/// Instantaneous state of the laser.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SystemState {
    pub e_re: f64,
    pub e_im: f64,
    pub n: f64,
    pub t: f64,
}

impl SystemState {
    pub fn new(e_re: f64, e_im: f64, n: f64) -> Self {
        Self {
            e_re,
            e_im,
            n,
            t: 0.0,
        }
    }

    pub fn intensity(&self) -> f64 {
        self.e_re * self.e_re + self.e_im * self.e_im
    }

    pub fn is_finite(&self) -> bool {
        self.e_re.is_finite() && self.e_im.is_finite() && self.n.is_finite() && self.t.is_finite()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delay_must_sit_on_grid() {
        let p = LaserParams {
            tau: 500.0,
            ..Default::default()
        };
        assert_eq!(p.delay_steps().unwrap(), 50_000);

        let off = LaserParams {
            tau: 500.005,
            ..Default::default()
        };
        assert!(off.validate().is_err());
    }

    #[test]
    fn rejects_bad_constants() {
        for p in [
            LaserParams {
                dt: 0.0,
                ..Default::default()
            },
            LaserParams {
                t_lk: -1.0,
                ..Default::default()
            },
            LaserParams {
                tau: -0.01,
                ..Default::default()
            },
            LaserParams {
                pump: f64::NAN,
                ..Default::default()
            },
        ] {
            assert!(p.validate().is_err(), "{p:?}");
        }
    }

    #[test]
    fn grid_steps_tolerates_float_noise() {
        assert_eq!(grid_steps(0.1 * 3.0, 0.1).unwrap(), 3);
        assert_eq!(grid_steps(220.0, 0.01).unwrap(), 22_000);
        assert!(grid_steps(0.015, 0.01).is_err());
    }
}
