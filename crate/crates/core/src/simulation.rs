//! Closed-loop integration of plant, controller and wind disturbance.

use std::fmt;

use nalgebra::{SVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::backstepping::{
    compute_errors, control_laws, lyapunov_values, BacksteppingErrors, ChannelRefs, Gains,
    LyapunovValue, THRUST_SINGULARITY_TOLERANCE,
};
use crate::dynamics::{
    derive_coeffs, state_derivative, ActuatorLimits, ControlInput, PlantParams, State12,
};
use crate::error::{Result, SimError};
use crate::guidance::{
    full_reference, thrust_kinematics, FullReference, OuterLoopParams, Trajectory,
};
use crate::pid::{pid_output, pid_step, PidGains, PidState};

/// Any state component beyond this magnitude terminates the run.
pub const BLOWUP_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerKind {
    Backstepping,
    Pid,
}

impl ControllerKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ControllerKind::Backstepping => "backstepping",
            ControllerKind::Pid => "pid",
        }
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ControllerKind {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "backstepping" => Ok(Self::Backstepping),
            "pid" => Ok(Self::Pid),
            other => Err(SimError::Parse(format!("unknown controller `{other}`"))),
        }
    }
}

/// When the control law is evaluated inside a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControlMode {
    /// Recomputed at every Runge–Kutta stage.
    Stage,
    /// Computed once at the start of the step and held.
    Zoh,
}

/// Step wind acting as a constant drag force from `onset` on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceProfile {
    pub onset: f64,
    pub wind_speed: f64,
    /// N·s/m
    pub drag_coefficient: f64,
    /// Inertial direction; normalised on validation.
    pub direction: [f64; 3],
}

impl Default for DisturbanceProfile {
    fn default() -> Self {
        Self {
            onset: 25.0,
            wind_speed: 6.0,
            drag_coefficient: 0.3,
            direction: [1.0, 0.0, 0.0],
        }
    }
}

impl DisturbanceProfile {
    /// Checks the invariants and returns a copy with a unit direction.
    pub fn normalized(&self) -> Result<Self> {
        if !(self.onset >= 0.0 && self.wind_speed >= 0.0 && self.drag_coefficient >= 0.0) {
            return Err(SimError::Config(
                "disturbance onset, wind speed and drag coefficient must be >= 0".into(),
            ));
        }
        let d = Vector3::from(self.direction);
        let n = d.norm();
        if !(n.is_finite() && n > 0.0) {
            return Err(SimError::Config(
                "disturbance direction must be non-zero".into(),
            ));
        }
        Ok(Self {
            direction: (d / n).into(),
            ..*self
        })
    }
}

/// Disturbance force (N) at time `t`.
pub fn wind_force(profile: &DisturbanceProfile, t: f64) -> Vector3<f64> {
    if t < profile.onset {
        return Vector3::zeros();
    }
    Vector3::from(profile.direction) * (profile.drag_coefficient * profile.wind_speed)
}

/// Initial condition in named form.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialState {
    pub phi: f64,
    pub phi_dot: f64,
    pub theta: f64,
    pub theta_dot: f64,
    pub psi: f64,
    pub psi_dot: f64,
    pub z: f64,
    pub z_dot: f64,
    pub x: f64,
    pub x_dot: f64,
    pub y: f64,
    pub y_dot: f64,
}

impl From<InitialState> for State12 {
    fn from(i: InitialState) -> Self {
        State12::from_array([
            i.phi,
            i.phi_dot,
            i.theta,
            i.theta_dot,
            i.psi,
            i.psi_dot,
            i.z,
            i.z_dot,
            i.x,
            i.x_dot,
            i.y,
            i.y_dot,
        ])
    }
}

impl From<State12> for InitialState {
    fn from(s: State12) -> Self {
        let [phi, phi_dot, theta, theta_dot, psi, psi_dot, z, z_dot, x, x_dot, y, y_dot] =
            s.to_array();
        Self {
            phi,
            phi_dot,
            theta,
            theta_dot,
            psi,
            psi_dot,
            z,
            z_dot,
            x,
            x_dot,
            y,
            y_dot,
        }
    }
}

fn default_h() -> f64 {
    1e-3
}
fn default_horizon() -> f64 {
    50.0
}
fn default_tolerance() -> f64 {
    THRUST_SINGULARITY_TOLERANCE
}
fn default_mode() -> ControlMode {
    ControlMode::Stage
}
fn default_controller() -> ControllerKind {
    ControllerKind::Backstepping
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_h")]
    pub h: f64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_controller")]
    pub controller: ControllerKind,
    #[serde(default = "default_mode")]
    pub control_mode: ControlMode,
    #[serde(default = "default_tolerance")]
    pub singularity_tolerance: f64,
    #[serde(default)]
    pub plant: PlantParams,
    #[serde(default)]
    pub backstepping: Gains,
    #[serde(default)]
    pub pid: PidGains,
    #[serde(default)]
    pub trajectory: Trajectory,
    #[serde(default)]
    pub outer_loop: OuterLoopParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disturbance: Option<DisturbanceProfile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clamp: Option<ActuatorLimits>,
    #[serde(default)]
    pub initial: InitialState,
}

impl Default for ScenarioConfig {
    /// Wind-disturbance experiment: spiral tracking, 6 m/s step wind at 25 s.
    fn default() -> Self {
        Self {
            h: default_h(),
            horizon: default_horizon(),
            controller: default_controller(),
            control_mode: default_mode(),
            singularity_tolerance: default_tolerance(),
            plant: PlantParams::default(),
            backstepping: Gains::default(),
            pid: PidGains::default(),
            trajectory: Trajectory::default(),
            outer_loop: OuterLoopParams::default(),
            disturbance: Some(DisturbanceProfile::default()),
            clamp: None,
            initial: InitialState {
                x: 1.0,
                ..Default::default()
            },
        }
    }
}

impl ScenarioConfig {
    /// Undisturbed hover at `(0, 0, 1)` starting on the set point.
    pub fn hover() -> Self {
        Self {
            horizon: 10.0,
            trajectory: Trajectory::Hover {
                x: 0.0,
                y: 0.0,
                z: 1.0,
                psi: 0.0,
            },
            disturbance: None,
            initial: InitialState {
                z: 1.0,
                ..Default::default()
            },
            ..Self::default()
        }
    }

    /// Number of integration steps.
    pub fn steps(&self) -> usize {
        (self.horizon / self.h).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0 && self.h <= 0.01) {
            return Err(SimError::Config(format!(
                "step h = {} must lie in (0, 0.01]",
                self.h
            )));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(SimError::Config(format!(
                "horizon = {} must be > 0",
                self.horizon
            )));
        }
        let ratio = self.horizon / self.h;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) {
            return Err(SimError::Config(format!(
                "horizon {} is not a whole number of steps of {}",
                self.horizon, self.h
            )));
        }
        if !(self.singularity_tolerance > 0.0 && self.singularity_tolerance < 1.0) {
            return Err(SimError::Config(
                "singularity_tolerance must lie in (0, 1)".into(),
            ));
        }
        self.plant.validate()?;
        self.pid.validate()?;
        self.trajectory.validate()?;
        self.outer_loop.validate()?;
        if let Some(d) = &self.disturbance {
            d.normalized()?;
        }
        if let Some(c) = &self.clamp {
            c.validate()?;
        }
        if !State12::from(self.initial).is_finite() {
            return Err(SimError::Config("initial state must be finite".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical TOML serialisation.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let text = toml::to_string(self).unwrap_or_default();
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

/// How a run ended.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RunStatus {
    Completed,
    ThrustSingularity { t: f64, margin: f64 },
    NumericalBlowup { t: f64, index: usize, value: f64 },
}

impl RunStatus {
    pub fn is_completed(&self) -> bool {
        matches!(self, RunStatus::Completed)
    }

    pub fn failure_time(&self) -> Option<f64> {
        match *self {
            RunStatus::Completed => None,
            RunStatus::ThrustSingularity { t, .. } | RunStatus::NumericalBlowup { t, .. } => {
                Some(t)
            }
        }
    }
}

impl fmt::Display for RunStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunStatus::Completed => write!(f, "completed"),
            RunStatus::ThrustSingularity { t, margin } => {
                write!(f, "thrust_singularity t={t} margin={margin}")
            }
            RunStatus::NumericalBlowup { t, index, value } => {
                write!(f, "numerical_blowup t={t} index={index} value={value}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceMeta {
    pub scenario_hash: String,
    pub controller: ControllerKind,
    pub h: f64,
    pub horizon: f64,
    pub singularity_tolerance: f64,
    /// Disturbance onset when a disturbance with non-zero force is configured.
    pub disturbance_onset: Option<f64>,
    /// Backstepping gains, present for backstepping runs.
    pub gains: Option<Gains>,
    pub status: RunStatus,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub state: State12,
    pub input: ControlInput,
    pub reference: FullReference,
    pub errors: Option<BacksteppingErrors>,
    pub lyapunov: Option<[LyapunovValue; 4]>,
    /// Disturbance force (N).
    pub disturbance: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub meta: TraceMeta,
    pub rows: Vec<TraceRow>,
}

impl SimTrace {
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().map(|r| r.t)
    }
}

impl SimError {
    fn at_time(self, t: f64) -> Self {
        match self {
            SimError::ThrustSingularity {
                margin, tolerance, ..
            } => SimError::ThrustSingularity {
                t,
                margin,
                tolerance,
            },
            other => other,
        }
    }
}

/// One classical fourth-order Runge–Kutta step.
///
/// A failing right-hand side aborts the step; a thrust singularity is tagged
/// with the stage time at which it occurred.
pub fn rk4_step<const N: usize, F>(
    y: &SVector<f64, N>,
    t: f64,
    h: f64,
    mut rhs: F,
) -> Result<SVector<f64, N>>
where
    F: FnMut(f64, &SVector<f64, N>) -> Result<SVector<f64, N>>,
{
    let half = 0.5 * h;
    let mut stage = |ts: f64, ys: &SVector<f64, N>| rhs(ts, ys).map_err(|e| e.at_time(ts));
    let k1 = stage(t, y)?;
    let k2 = stage(t + half, &(y + k1 * half))?;
    let k3 = stage(t + half, &(y + k2 * half))?;
    let k4 = stage(t + h, &(y + k3 * h))?;
    Ok(y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
}

/// Evaluates a control law against the full reference. With feedforward on,
/// the attitude commands are differentiated along the acceleration an
/// onboard accelerometer would report: the thrust from a first evaluation
/// (which depends only on the altitude channel) plus the external force.
fn evaluate_law<T>(
    cfg: &ScenarioConfig,
    t: f64,
    s: &State12,
    ext_accel: Vector3<f64>,
    law: impl Fn(&ChannelRefs) -> Result<(ControlInput, T)>,
) -> Result<(FullReference, ControlInput, T)> {
    let g = cfg.plant.gravity;
    let outer = &cfg.outer_loop;
    let r = full_reference(&cfg.trajectory, t, s, outer, g, None);
    let first = law(&r.channels)?;
    if !(outer.enabled && outer.feedforward) {
        return Ok((r, first.0, first.1));
    }
    let thrust = cfg.clamp.map_or(first.0, |c| first.0.clamped(&c)).u1;
    let m = thrust_kinematics(s, thrust / cfg.plant.mass, &ext_accel);
    let r = full_reference(&cfg.trajectory, t, s, outer, g, Some(&m));
    let (u, extra) = law(&r.channels)?;
    Ok((r, u, extra))
}

fn blowup(s: &State12) -> Option<(usize, f64)> {
    s.0.iter()
        .enumerate()
        .find(|(_, v)| !v.is_finite() || v.abs() > BLOWUP_LIMIT)
        .map(|(i, v)| (i, *v))
}

/// Integrates the closed loop from `t = 0` to the horizon.
///
/// Configuration problems are returned as errors; controller singularities
/// and blow-up truncate the trace and are recorded in `meta.status`.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<SimTrace> {
    cfg.validate()?;
    let coeffs = derive_coeffs(&cfg.plant)?;
    let plant = cfg.plant;
    let g = plant.gravity;
    let h = cfg.h;
    let tol = cfg.singularity_tolerance;
    let disturbance = cfg.disturbance.map(|d| d.normalized()).transpose()?;
    let n = cfg.steps();

    let force_at = |t: f64| {
        disturbance
            .as_ref()
            .map_or_else(Vector3::zeros, |d| wind_force(d, t))
    };
    let backstepping_input = |t: f64, s: &State12| {
        evaluate_law(cfg, t, s, force_at(t) / plant.mass, |refs| {
            control_laws(s, refs, &cfg.backstepping, &coeffs, g, tol).map(|u| (u, ()))
        })
        .map(|(r, u, _)| (r, u))
    };
    let limit = |u: ControlInput| cfg.clamp.map_or(u, |c| u.clamped(&c));
    let plant_rhs = |t: f64, s: &State12, u: &ControlInput| {
        let f_ext = force_at(t) / plant.mass;
        state_derivative(s, &limit(*u), &coeffs, g, &f_ext).0
    };

    let mut rows = Vec::with_capacity(n + 1);
    let mut status = RunStatus::Completed;
    let mut s = State12::from(cfg.initial);
    let mut pid_state = PidState::default();

    for k in 0..=n {
        let t = k as f64 * h;
        let step_input = match cfg.controller {
            ControllerKind::Backstepping => backstepping_input(t, &s).map(|(r, u)| (r, u, None)),
            ControllerKind::Pid => evaluate_law(cfg, t, &s, force_at(t) / plant.mass, |refs| {
                pid_step(&s, refs, &cfg.pid, &pid_state, h, &plant, tol)
            })
            .map(|(r, u, next)| (r, u, Some(next))),
        };
        let (reference, u, next_pid) = match step_input {
            Ok(v) => v,
            Err(SimError::ThrustSingularity { margin, .. }) => {
                status = RunStatus::ThrustSingularity { t, margin };
                break;
            }
            Err(e) => return Err(e),
        };

        let (errors, lyapunov) = match cfg.controller {
            ControllerKind::Backstepping => {
                let e = compute_errors(&s, &reference.channels, &cfg.backstepping);
                (Some(e), Some(lyapunov_values(&e, &cfg.backstepping)))
            }
            ControllerKind::Pid => (None, None),
        };
        rows.push(TraceRow {
            t,
            state: s,
            input: limit(u),
            reference,
            errors,
            lyapunov,
            disturbance: force_at(t),
        });
        if k == n {
            break;
        }

        let stepped = match (cfg.control_mode, cfg.controller) {
            (ControlMode::Zoh, _) => {
                rk4_step(&s.0, t, h, |ts, y| Ok(plant_rhs(ts, &State12(*y), &u)))
            }
            (ControlMode::Stage, ControllerKind::Backstepping) => rk4_step(&s.0, t, h, |ts, y| {
                let st = State12(*y);
                let (_, us) = backstepping_input(ts, &st)?;
                Ok(plant_rhs(ts, &st, &us))
            }),
            (ControlMode::Stage, ControllerKind::Pid) => {
                let integral = next_pid.unwrap_or_default().integral;
                rk4_step(&s.0, t, h, |ts, y| {
                    let st = State12(*y);
                    let (_, us, _) =
                        evaluate_law(cfg, ts, &st, force_at(ts) / plant.mass, |refs| {
                            pid_output(&st, refs, &cfg.pid, &integral, &plant, tol).map(|u| (u, ()))
                        })?;
                    Ok(plant_rhs(ts, &st, &us))
                })
            }
        };
        match stepped {
            Ok(y) => s = State12(y),
            Err(SimError::ThrustSingularity { t, margin, .. }) => {
                status = RunStatus::ThrustSingularity { t, margin };
                break;
            }
            Err(e) => return Err(e),
        }
        if let Some(next) = next_pid {
            pid_state = next;
        }
        if let Some((index, value)) = blowup(&s) {
            status = RunStatus::NumericalBlowup {
                t: t + h,
                index,
                value,
            };
            break;
        }
    }

    Ok(SimTrace {
        meta: TraceMeta {
            scenario_hash: cfg.hash(),
            controller: cfg.controller,
            h,
            horizon: cfg.horizon,
            singularity_tolerance: tol,
            disturbance_onset: disturbance
                .filter(|d| d.wind_speed * d.drag_coefficient != 0.0)
                .map(|d| d.onset),
            gains: (cfg.controller == ControllerKind::Backstepping).then_some(cfg.backstepping),
            status,
        },
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector1;

    #[test]
    fn wind_force_is_an_ideal_step() {
        let d = DisturbanceProfile::default();
        assert_eq!(wind_force(&d, 24.999), Vector3::zeros());
        let f = wind_force(&d, 25.0);
        assert!((f - Vector3::new(1.8, 0.0, 0.0)).abs().max() < 1e-15);
        let calm = DisturbanceProfile {
            wind_speed: 0.0,
            ..d
        };
        for t in [0.0, 25.0, 100.0] {
            assert_eq!(wind_force(&calm, t), Vector3::zeros());
        }
    }

    #[test]
    fn disturbance_validation() {
        let d = DisturbanceProfile {
            direction: [0.0, 3.0, 4.0],
            ..Default::default()
        }
        .normalized()
        .unwrap();
        assert!((Vector3::from(d.direction).norm() - 1.0).abs() < 1e-12);
        assert!(DisturbanceProfile {
            direction: [0.0; 3],
            ..Default::default()
        }
        .normalized()
        .is_err());
        assert!(DisturbanceProfile {
            drag_coefficient: -0.1,
            ..Default::default()
        }
        .normalized()
        .is_err());
    }

    #[test]
    fn rk4_zero_rhs_keeps_state() {
        let y = SVector::<f64, 3>::new(1.0, -2.0, 3.0);
        let out = rk4_step(&y, 0.0, 0.1, |_, _| Ok(SVector::zeros())).unwrap();
        assert_eq!(out, y);
    }

    #[test]
    fn rk4_exponential() {
        let y = Vector1::new(1.0);
        let out = rk4_step(&y, 0.0, 0.1, |_, y| Ok(*y)).unwrap();
        assert!((out[0] - 0.1_f64.exp()).abs() < 1e-7);
        assert!((out[0] - 1.105_170_833_333_333_3).abs() < 1e-15);
    }

    #[test]
    fn rk4_free_fall() {
        let c = derive_coeffs(&PlantParams::default()).unwrap();
        let out = rk4_step(&State12::zeros().0, 0.0, 0.01, |_, y| {
            Ok(state_derivative(
                &State12(*y),
                &ControlInput::default(),
                &c,
                9.81,
                &Vector3::zeros(),
            )
            .0)
        })
        .unwrap();
        assert!((out[State12::Z_DOT] + 0.0981).abs() < 1e-15);
        assert!((out[State12::Z] + 0.000_490_5).abs() < 1e-15);
    }

    #[test]
    fn rk4_tags_singularity_with_stage_time() {
        let y = Vector1::new(0.0);
        let err = rk4_step(&y, 2.0, 0.1, |t, y| {
            if t > 2.01 {
                Err(SimError::ThrustSingularity {
                    t: f64::NAN,
                    margin: 0.0,
                    tolerance: 1e-3,
                })
            } else {
                Ok(*y)
            }
        })
        .unwrap_err();
        match err {
            SimError::ThrustSingularity { t, .. } => assert!((t - 2.05).abs() < 1e-12),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn config_validation() {
        let mut c = ScenarioConfig::hover();
        c.h = 0.02;
        assert!(matches!(c.validate(), Err(SimError::Config(_))));
        let mut c = ScenarioConfig::hover();
        c.horizon = 1.0005;
        assert!(c.validate().is_err());
        let mut c = ScenarioConfig::hover();
        c.horizon = -1.0;
        assert!(c.validate().is_err());
        let mut c = ScenarioConfig::hover();
        c.plant.mass = 0.0;
        assert!(run_scenario(&c).is_err());
    }

    #[test]
    fn hover_trace_shape() {
        let cfg = ScenarioConfig {
            horizon: 1.0,
            ..ScenarioConfig::hover()
        };
        let tr = run_scenario(&cfg).unwrap();
        assert_eq!(tr.rows.len(), 1001);
        assert!(tr.meta.status.is_completed());
        let last = tr.rows.last().unwrap();
        assert_eq!(last.t, 1.0);
        assert_eq!(last.input.to_array(), [19.62, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn inverted_start_terminates() {
        let mut cfg = ScenarioConfig::hover();
        cfg.initial.phi = 89.999_f64.to_radians();
        let tr = run_scenario(&cfg).unwrap();
        assert!(matches!(
            tr.meta.status,
            RunStatus::ThrustSingularity { t, .. } if t == 0.0
        ));
        assert!(tr.rows.is_empty());
    }

    #[test]
    fn blowup_is_flagged() {
        // Initial climb rate already beyond the guard.
        let mut cfg = ScenarioConfig::hover();
        cfg.horizon = 5.0;
        cfg.controller = ControllerKind::Pid;
        cfg.initial.z = 1.0;
        cfg.initial.z_dot = 2e6;
        let tr = run_scenario(&cfg).unwrap();
        assert!(matches!(tr.meta.status, RunStatus::NumericalBlowup { .. }));
    }
}
