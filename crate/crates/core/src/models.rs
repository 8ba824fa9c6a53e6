//! Car-following models: nonlinear OVM for human drivers, the CACC law for
//! independent automated vehicles, plus equilibrium computation and
//! linearization around the uniform-flow operating point.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Optimal velocity model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OvmParams {
    /// Sensitivity to the gap between desired and actual velocity (1/s).
    pub alpha: f64,
    /// Sensitivity to the velocity difference to the predecessor (1/s).
    pub beta: f64,
    /// Minimum car-following spacing (m).
    pub s_min: f64,
    /// Maximum spacing that still produces car-following behavior (m).
    pub s_max: f64,
    /// Maximum (free-flow) velocity (m/s).
    pub v_max: f64,
}

impl OvmParams {
    pub fn validate(&self) -> Result<()> {
        if self.alpha <= 0.0 || self.beta <= 0.0 {
            return Err(Error::InvalidInput(
                "OVM sensitivities alpha, beta must be positive".into(),
            ));
        }
        if !(0.0 <= self.s_min && self.s_min < self.s_max) {
            return Err(Error::InvalidInput(
                "OVM spacing thresholds require 0 <= s_min < s_max".into(),
            ));
        }
        if self.v_max <= 0.0 {
            return Err(Error::InvalidInput("OVM v_max must be positive".into()));
        }
        Ok(())
    }
}

impl Default for OvmParams {
    fn default() -> Self {
        default_ovm()
    }
}

/// CACC controller parameters for independent automated vehicles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CaccParams {
    /// Desired time headway (s).
    pub t_h: f64,
    /// Minimum safe spacing (m).
    pub s_0: f64,
    /// Proportional gain on the spacing error (1/s).
    pub k_p: f64,
    /// Derivative gain on the spacing-error rate (dimensionless).
    pub k_d: f64,
    /// Sampling interval (s).
    pub dt: f64,
}

impl CaccParams {
    pub fn validate(&self) -> Result<()> {
        if self.t_h <= 0.0 || self.s_0 < 0.0 || self.k_p <= 0.0 || self.k_d <= 0.0 || self.dt <= 0.0
        {
            return Err(Error::InvalidInput(
                "CACC parameters require t_h, k_p, k_d, dt > 0 and s_0 >= 0".into(),
            ));
        }
        if self.k_d * self.t_h + self.dt <= 0.0 {
            return Err(Error::InvalidInput(
                "CACC denominator k_d * t_h + dt must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Common denominator `k_d * t_h + dt` of the acceleration form.
    pub fn denom(&self) -> f64 {
        self.k_d * self.t_h + self.dt
    }
}

impl Default for CaccParams {
    fn default() -> Self {
        default_cacc()
    }
}

/// Uniform-flow equilibrium of the OVM.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    /// Equilibrium spacing (m).
    pub s_star: f64,
    /// Equilibrium velocity (m/s).
    pub v_star: f64,
    /// Slope of the desired-velocity map at `s_star` (1/s).
    pub v_prime: f64,
}

/// Coefficients of the HDV dynamics linearized at equilibrium.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearCoeffs {
    /// Spacing coefficient (1/s^2).
    pub a1: f64,
    /// Own-velocity coefficient (1/s).
    pub a2: f64,
    /// Predecessor-velocity coefficient (1/s).
    pub a3: f64,
}

/// Desired velocity at spacing `s`: zero below `s_min`, `v_max` above `s_max`,
/// raised-cosine interpolation in between.
pub fn desired_velocity(p: &OvmParams, s: f64) -> Result<f64> {
    if s < 0.0 {
        return Err(Error::InvalidInput(format!("negative spacing {s}")));
    }
    Ok(if s <= p.s_min {
        0.0
    } else if s >= p.s_max {
        p.v_max
    } else {
        let phase = std::f64::consts::PI * (s - p.s_min) / (p.s_max - p.s_min);
        p.v_max / 2.0 * (1.0 - phase.cos())
    })
}

/// Nonlinear OVM acceleration. Unsaturated; actuation limits are the
/// simulator's responsibility.
pub fn ovm_accel(p: &OvmParams, s: f64, s_dot: f64, v: f64) -> Result<f64> {
    Ok(p.alpha * (desired_velocity(p, s)? - v) + p.beta * s_dot)
}

/// Invert the desired-velocity map analytically to find the equilibrium
/// spacing for a given equilibrium velocity, along with the map's slope there.
pub fn equilibrium_from_velocity(p: &OvmParams, v_star: f64) -> Result<Equilibrium> {
    p.validate()?;
    if !(0.0 < v_star && v_star < p.v_max) {
        return Err(Error::InvalidInput(format!(
            "no interior equilibrium: v_star = {v_star} outside (0, {})",
            p.v_max
        )));
    }
    let range = p.s_max - p.s_min;
    let phase = (1.0 - 2.0 * v_star / p.v_max).acos();
    let s_star = p.s_min + range * phase / std::f64::consts::PI;
    let v_prime = p.v_max / 2.0 * std::f64::consts::PI / range * phase.sin();
    Ok(Equilibrium {
        s_star,
        v_star,
        v_prime,
    })
}

/// Partial derivatives of the OVM at equilibrium.
pub fn linearize(p: &OvmParams, eq: &Equilibrium) -> LinearCoeffs {
    LinearCoeffs {
        a1: p.alpha * eq.v_prime,
        a2: p.alpha + p.beta,
        a3: p.beta,
    }
}

/// CACC acceleration in its reduced form:
/// `(k_p (s - s_0 - t_h v) + k_d (v_prev - v)) / (k_d t_h + dt)`. Unsaturated.
pub fn cacc_accel(p: &CaccParams, s: f64, v: f64, v_prev: f64) -> f64 {
    (p.k_p * (s - p.s_0 - p.t_h * v) + p.k_d * (v_prev - v)) / p.denom()
}

/// Table-1 OVM parameters.
pub fn default_ovm() -> OvmParams {
    OvmParams {
        alpha: 0.6,
        beta: 0.9,
        s_min: 2.0,
        s_max: 32.0,
        v_max: 30.0,
    }
}

/// Table-1 CACC parameters.
pub fn default_cacc() -> CaccParams {
    CaccParams {
        t_h: 1.0,
        s_0: 2.0,
        k_p: 0.45,
        k_d: 0.25,
        dt: 0.1,
    }
}
