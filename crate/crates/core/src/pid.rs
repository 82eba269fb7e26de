//! Independent PID loops on roll, pitch, yaw and altitude.
//!
//! Parallel form with the derivative taken on the measured rate
//! (`ė = ref_rate − rate`), rectangle-rule integration and an optional
//! symmetric clamp on each integral accumulator. The gains map error
//! directly to the actuator command (N·m per rad for attitude, N per m for
//! altitude). The altitude loop adds the weight `m·g` and divides by
//! `cos(phi)·cos(theta)`.

use serde::{Deserialize, Serialize};

use crate::backstepping::{ChannelReference, ChannelRefs};
use crate::dynamics::{ControlInput, PlantParams, State12};
use crate::error::{Result, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelGains {
    pub kp: f64,
    #[serde(default)]
    pub ki: f64,
    #[serde(default)]
    pub kd: f64,
}

impl ChannelGains {
    pub fn new(kp: f64, ki: f64, kd: f64) -> Self {
        Self { kp, ki, kd }
    }

    fn validate(&self, channel: &str) -> Result<()> {
        let bad = |name: &str, value: f64| SimError::InvalidGain {
            name: format!("{channel}.{name}"),
            value,
        };
        if !(self.kp.is_finite() && self.kp > 0.0) {
            return Err(bad("kp", self.kp));
        }
        if !(self.ki.is_finite() && self.ki >= 0.0) {
            return Err(bad("ki", self.ki));
        }
        if !(self.kd.is_finite() && self.kd >= 0.0) {
            return Err(bad("kd", self.kd));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PidGains {
    pub phi: ChannelGains,
    pub theta: ChannelGains,
    pub psi: ChannelGains,
    pub z: ChannelGains,
    /// Anti-windup bound on each integral accumulator (error·s).
    #[serde(default)]
    pub integral_limit: Option<f64>,
}

impl Default for PidGains {
    fn default() -> Self {
        let attitude = ChannelGains::new(6.0, 1.0, 3.0);
        Self {
            phi: attitude,
            theta: attitude,
            psi: attitude,
            z: ChannelGains::new(8.0, 2.0, 5.0),
            integral_limit: Some(10.0),
        }
    }
}

impl PidGains {
    pub fn validate(&self) -> Result<()> {
        self.phi.validate("phi")?;
        self.theta.validate("theta")?;
        self.psi.validate("psi")?;
        self.z.validate("z")?;
        if let Some(lim) = self.integral_limit {
            if !(lim.is_finite() && lim > 0.0) {
                return Err(SimError::InvalidGain {
                    name: "integral_limit".into(),
                    value: lim,
                });
            }
        }
        Ok(())
    }

    fn as_array(&self) -> [ChannelGains; 4] {
        [self.phi, self.theta, self.psi, self.z]
    }
}

/// Per-channel integrator memory, in (φ, θ, ψ, z) order.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PidState {
    pub integral: [f64; 4],
    pub prev_error: [f64; 4],
}

impl PidState {
    pub fn reset(&self) -> Self {
        Self::default()
    }
}

fn channel_errors(s: &State12, refs: &ChannelRefs) -> ([f64; 4], [f64; 4]) {
    let measured = [
        (s.phi(), s.phi_dot()),
        (s.theta(), s.theta_dot()),
        (s.psi(), s.psi_dot()),
        (s.z(), s.z_dot()),
    ];
    let r: [ChannelReference; 4] = refs.as_array();
    let e = std::array::from_fn(|k| r[k].value - measured[k].0);
    let e_dot = std::array::from_fn(|k| r[k].rate - measured[k].1);
    (e, e_dot)
}

/// Controller output for a given integrator state, without advancing it.
pub fn pid_output(
    s: &State12,
    refs: &ChannelRefs,
    gains: &PidGains,
    integral: &[f64; 4],
    plant: &PlantParams,
    tolerance: f64,
) -> Result<ControlInput> {
    let cos_prod = s.phi().cos() * s.theta().cos();
    if cos_prod.abs() <= tolerance {
        return Err(SimError::ThrustSingularity {
            t: f64::NAN,
            margin: cos_prod.abs(),
            tolerance,
        });
    }
    let (e, e_dot) = channel_errors(s, refs);
    let g = gains.as_array();
    let law = |k: usize| g[k].kp * e[k] + g[k].ki * integral[k] + g[k].kd * e_dot[k];
    Ok(ControlInput::new(
        (plant.hover_thrust() + law(3)) / cos_prod,
        law(0),
        law(1),
        law(2),
    ))
}

/// Advances the integrators by `dt` and returns the resulting command.
pub fn pid_step(
    s: &State12,
    refs: &ChannelRefs,
    gains: &PidGains,
    state: &PidState,
    dt: f64,
    plant: &PlantParams,
    tolerance: f64,
) -> Result<(ControlInput, PidState)> {
    if !(dt > 0.0) {
        return Err(SimError::Config(format!(
            "PID step dt must be > 0, got {dt}"
        )));
    }
    let (e, _) = channel_errors(s, refs);
    let g = gains.as_array();
    let mut next = PidState {
        integral: state.integral,
        prev_error: e,
    };
    for k in 0..4 {
        if g[k].ki > 0.0 {
            let mut acc = state.integral[k] + e[k] * dt;
            if let Some(lim) = gains.integral_limit {
                acc = acc.clamp(-lim, lim);
            }
            next.integral[k] = acc;
        }
    }
    let u = pid_output(s, refs, gains, &next.integral, plant, tolerance)?;
    Ok((u, next))
}
