//! Reference trajectories and the outer position loop.
//!
//! The outer loop is ordinary cascade plumbing: it turns x/y tracking into
//! roll/pitch commands for the attitude controllers. The Lyapunov guarantees
//! in [`crate::backstepping`] cover only the four inner subsystems.

use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::backstepping::{ChannelReference, ChannelRefs};
use crate::dynamics::State12;
use crate::error::{Result, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepChannel {
    X,
    Y,
    Z,
    Psi,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoint {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub psi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Trajectory {
    Hover {
        #[serde(default)]
        x: f64,
        #[serde(default)]
        y: f64,
        #[serde(default)]
        z: f64,
        #[serde(default)]
        psi: f64,
    },
    Step {
        #[serde(default)]
        x: f64,
        #[serde(default)]
        y: f64,
        #[serde(default)]
        z: f64,
        #[serde(default)]
        psi: f64,
        channel: StepChannel,
        magnitude: f64,
        time: f64,
    },
    Spiral {
        radius: f64,
        angular_rate: f64,
        climb_rate: f64,
        #[serde(default)]
        center: [f64; 2],
        #[serde(default)]
        z0: f64,
        #[serde(default)]
        psi: f64,
    },
    Waypoints {
        /// CSV with columns `t,x,y,z,psi`, relative to the scenario file.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        file: Option<PathBuf>,
        #[serde(default)]
        points: Vec<Waypoint>,
    },
}

impl Default for Trajectory {
    fn default() -> Self {
        Trajectory::Spiral {
            radius: 1.0,
            angular_rate: 0.5,
            climb_rate: 0.1,
            center: [0.0, 0.0],
            z0: 0.0,
            psi: 0.0,
        }
    }
}

/// Desired position with derivatives up to fourth order, plus yaw.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrajectoryPoint {
    pub pos: Vector3<f64>,
    pub vel: Vector3<f64>,
    pub acc: Vector3<f64>,
    pub jerk: Vector3<f64>,
    pub snap: Vector3<f64>,
    pub psi: ChannelReference,
}

impl TrajectoryPoint {
    fn at_rest(pos: Vector3<f64>, psi: f64) -> Self {
        Self {
            pos,
            psi: ChannelReference::constant(psi),
            ..Default::default()
        }
    }

    pub fn axis(&self, i: usize) -> ChannelReference {
        ChannelReference::new(self.pos[i], self.vel[i], self.acc[i])
    }
}

impl Trajectory {
    pub fn validate(&self) -> Result<()> {
        match self {
            Trajectory::Spiral {
                radius,
                angular_rate,
                ..
            } => {
                if !(*radius > 0.0) || *angular_rate == 0.0 || !angular_rate.is_finite() {
                    return Err(SimError::Config(
                        "spiral needs radius > 0 and a non-zero angular rate".into(),
                    ));
                }
            }
            Trajectory::Step { time, .. } if !(*time >= 0.0) => {
                return Err(SimError::Config("step time must be >= 0".into()));
            }
            Trajectory::Waypoints { points, .. } => {
                if points.is_empty() {
                    return Err(SimError::Config("waypoint table is empty".into()));
                }
                if points.windows(2).any(|w| !(w[1].t > w[0].t)) {
                    return Err(SimError::Config(
                        "waypoint times must be strictly increasing".into(),
                    ));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Loads an external waypoint table into `points`, resolving `file`
    /// against `base_dir`.
    pub fn resolve_files(&mut self, base_dir: &Path) -> Result<()> {
        if let Trajectory::Waypoints { file, points } = self {
            if let Some(f) = file.take() {
                let path = if f.is_absolute() { f } else { base_dir.join(f) };
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
                *points = parse_waypoints(&text)?;
            }
        }
        Ok(())
    }
}

/// Parses a `t,x,y,z,psi` table with a header line.
pub fn parse_waypoints(text: &str) -> Result<Vec<Waypoint>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| SimError::Parse("waypoint file is empty".into()))?
        .split(',')
        .map(str::trim)
        .collect();
    if header != ["t", "x", "y", "z", "psi"] {
        return Err(SimError::Parse(format!(
            "waypoint header must be t,x,y,z,psi, got {}",
            header.join(",")
        )));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let vals: Vec<f64> = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| SimError::Parse(format!("waypoint row {}: {e}", i + 1)))?;
            match vals[..] {
                [t, x, y, z, psi] => Ok(Waypoint { t, x, y, z, psi }),
                _ => Err(SimError::Parse(format!(
                    "waypoint row {} has {} fields, expected 5",
                    i + 1,
                    vals.len()
                ))),
            }
        })
        .collect()
}

pub fn eval_trajectory(traj: &Trajectory, t: f64) -> TrajectoryPoint {
    match *traj {
        Trajectory::Hover { x, y, z, psi } => TrajectoryPoint::at_rest(Vector3::new(x, y, z), psi),
        Trajectory::Step {
            x,
            y,
            z,
            psi,
            channel,
            magnitude,
            time,
        } => {
            let mut pos = Vector3::new(x, y, z);
            let mut yaw = psi;
            if t >= time {
                match channel {
                    StepChannel::X => pos.x += magnitude,
                    StepChannel::Y => pos.y += magnitude,
                    StepChannel::Z => pos.z += magnitude,
                    StepChannel::Psi => yaw += magnitude,
                }
            }
            TrajectoryPoint::at_rest(pos, yaw)
        }
        Trajectory::Spiral {
            radius: r,
            angular_rate: w,
            climb_rate: vz,
            center,
            z0,
            psi,
        } => {
            let (s, c) = (w * t).sin_cos();
            let w2 = w * w;
            let w3 = w2 * w;
            let w4 = w2 * w2;
            TrajectoryPoint {
                pos: Vector3::new(center[0] + r * c, center[1] + r * s, z0 + vz * t),
                vel: Vector3::new(-r * w * s, r * w * c, vz),
                acc: Vector3::new(-r * w2 * c, -r * w2 * s, 0.0),
                jerk: Vector3::new(r * w3 * s, -r * w3 * c, 0.0),
                snap: Vector3::new(r * w4 * c, r * w4 * s, 0.0),
                psi: ChannelReference::constant(psi),
            }
        }
        Trajectory::Waypoints { ref points, .. } => eval_waypoints(points, t),
    }
}

fn eval_waypoints(points: &[Waypoint], t: f64) -> TrajectoryPoint {
    let as_pos = |w: &Waypoint| Vector3::new(w.x, w.y, w.z);
    let (first, last) = match (points.first(), points.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return TrajectoryPoint::default(),
    };
    if t <= first.t {
        return TrajectoryPoint::at_rest(as_pos(first), first.psi);
    }
    if t >= last.t {
        return TrajectoryPoint::at_rest(as_pos(last), last.psi);
    }
    let i = points.partition_point(|w| w.t <= t) - 1;
    let (a, b) = (&points[i], &points[i + 1]);
    let dt = b.t - a.t;
    let frac = (t - a.t) / dt;
    let vel = (as_pos(b) - as_pos(a)) / dt;
    let psi_rate = (b.psi - a.psi) / dt;
    TrajectoryPoint {
        pos: as_pos(a) + vel * (t - a.t),
        vel,
        psi: ChannelReference::new(a.psi + frac * (b.psi - a.psi), psi_rate, 0.0),
        ..Default::default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OuterLoopParams {
    pub enabled: bool,
    pub kp: f64,
    pub kd: f64,
    /// Bound on commanded |roll| and |pitch| (rad).
    pub attitude_limit: f64,
    /// Supply analytic rate/acceleration feedforward for the attitude commands.
    pub feedforward: bool,
}

impl Default for OuterLoopParams {
    fn default() -> Self {
        Self {
            enabled: true,
            kp: 1.0,
            kd: 1.5,
            attitude_limit: 0.5,
            feedforward: true,
        }
    }
}

impl OuterLoopParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.kp >= 0.0 && self.kd >= 0.0 && self.attitude_limit > 0.0) {
            return Err(SimError::Config(
                "outer loop needs kp, kd >= 0 and attitude_limit > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Complete reference for one evaluation of the closed loop.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FullReference {
    pub channels: ChannelRefs,
    pub x: ChannelReference,
    pub y: ChannelReference,
}

/// Small-angle inversion of a desired horizontal acceleration into roll and
/// pitch commands, before clamping.
pub fn tilt_from_accel(ax: f64, ay: f64, psi: f64, g: f64) -> (f64, f64) {
    let (s, c) = psi.sin_cos();
    ((ax * s - ay * c) / g, (ax * c + ay * s) / g)
}

/// Horizontal acceleration and jerk of the vehicle, as used to differentiate
/// the position loop. Only the x and y components are meaningful.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AccelEstimate {
    pub acc: Vector3<f64>,
    pub jerk: Vector3<f64>,
}

/// Kinematics implied by a known specific thrust (`u1/m`) and external
/// acceleration, as an accelerometer would report them. The jerk accounts
/// for the attitude rates only; thrust and disturbance are held constant.
pub fn thrust_kinematics(
    state: &State12,
    specific_thrust: f64,
    f_ext: &Vector3<f64>,
) -> AccelEstimate {
    let (sf, cf) = state.phi().sin_cos();
    let (st, ct) = state.theta().sin_cos();
    let (ss, cs) = state.psi().sin_cos();
    let k = specific_thrust;
    let acc = Vector3::new(
        k * (cf * st * cs + sf * ss) + f_ext.x,
        k * (cf * st * ss - sf * cs) + f_ext.y,
        0.0,
    );
    // Partial derivatives with respect to (phi, theta, psi).
    let dax = [
        k * (-sf * st * cs + cf * ss),
        k * cf * ct * cs,
        k * (-cf * st * ss + sf * cs),
    ];
    let day = [
        k * (-sf * st * ss - cf * cs),
        k * cf * ct * ss,
        k * (cf * st * cs + sf * ss),
    ];
    AccelEstimate {
        acc,
        jerk: Vector3::new(dot_rates(state, dax), dot_rates(state, day), 0.0),
    }
}

fn dot_rates(state: &State12, d: [f64; 3]) -> f64 {
    d[0] * state.phi_dot() + d[1] * state.theta_dot() + d[2] * state.psi_dot()
}

/// Model-only estimate: the thrust is assumed to balance gravity
/// (`u1/m = g / (cos(phi)·cos(theta))`) and no external force acts.
pub fn hover_thrust_kinematics(state: &State12, g: f64) -> AccelEstimate {
    let (sf, cf) = state.phi().sin_cos();
    let (st, ct) = state.theta().sin_cos();
    let (ss, cs) = state.psi().sin_cos();
    let (tf, tt) = (sf / cf, st / ct);
    let (sec_f, sec_t) = (1.0 / cf, 1.0 / ct);

    let acc = Vector3::new(
        g * (tt * cs + tf * ss * sec_t),
        g * (tt * ss - tf * cs * sec_t),
        0.0,
    );
    let dax = [
        g * sec_f * sec_f * ss * sec_t,
        g * (sec_t * sec_t * cs + tf * ss * sec_t * tt),
        g * (-tt * ss + tf * cs * sec_t),
    ];
    let day = [
        -g * sec_f * sec_f * cs * sec_t,
        g * (sec_t * sec_t * ss - tf * cs * sec_t * tt),
        g * (tt * cs + tf * ss * sec_t),
    ];
    AccelEstimate {
        acc,
        jerk: Vector3::new(dot_rates(state, dax), dot_rates(state, day), 0.0),
    }
}

/// PD position loop producing roll/pitch references.
pub fn position_outer_loop(
    state: &State12,
    desired: &TrajectoryPoint,
    psi: f64,
    params: &OuterLoopParams,
    g: f64,
    motion: &AccelEstimate,
) -> (ChannelReference, ChannelReference) {
    let (kp, kd) = (params.kp, params.kd);
    let pos = Vector3::new(state.x(), state.y(), 0.0);
    let vel = Vector3::new(state.x_dot(), state.y_dot(), 0.0);
    let flat = |v: Vector3<f64>| Vector3::new(v.x, v.y, 0.0);

    let a = flat(desired.acc) + kd * (flat(desired.vel) - vel) + kp * (flat(desired.pos) - pos);
    let (phi, theta) = tilt_from_accel(a.x, a.y, psi, g);
    let lim = params.attitude_limit;
    let phi_c = phi.clamp(-lim, lim);
    let theta_c = theta.clamp(-lim, lim);

    if !params.feedforward {
        return (
            ChannelReference::constant(phi_c),
            ChannelReference::constant(theta_c),
        );
    }

    // Differentiate the loop along the estimated vehicle motion, holding the
    // yaw acceleration at zero.
    let (acc, jerk) = (flat(motion.acc), flat(motion.jerk));
    let a_dot =
        flat(desired.jerk) + kd * (flat(desired.acc) - acc) + kp * (flat(desired.vel) - vel);
    let a_ddot =
        flat(desired.snap) + kd * (flat(desired.jerk) - jerk) + kp * (flat(desired.acc) - acc);
    let (s, c) = psi.sin_cos();
    let w = state.psi_dot();
    let along_s = |v: &Vector3<f64>| (v.x * s - v.y * c) / g;
    let along_c = |v: &Vector3<f64>| (v.x * c + v.y * s) / g;

    let phi_dot = along_s(&a_dot) + w * theta;
    let theta_dot = along_c(&a_dot) - w * phi;
    let phi_ddot = along_s(&a_ddot) + 2.0 * w * along_c(&a_dot) - w * w * phi;
    let theta_ddot = along_c(&a_ddot) - 2.0 * w * along_s(&a_dot) - w * w * theta;

    let shape = |value: f64, clamped: f64, rate: f64, accel: f64| {
        if value == clamped {
            ChannelReference::new(value, rate, accel)
        } else {
            ChannelReference::constant(clamped)
        }
    };
    (
        shape(phi, phi_c, phi_dot, phi_ddot),
        shape(theta, theta_c, theta_dot, theta_ddot),
    )
}

/// Builds the full reference at time `t` for the given state. Without a
/// motion estimate the hover-thrust model is used.
pub fn full_reference(
    traj: &Trajectory,
    t: f64,
    state: &State12,
    outer: &OuterLoopParams,
    g: f64,
    motion: Option<&AccelEstimate>,
) -> FullReference {
    let p = eval_trajectory(traj, t);
    let (phi, theta) = if outer.enabled {
        let m = motion
            .copied()
            .unwrap_or_else(|| hover_thrust_kinematics(state, g));
        position_outer_loop(state, &p, state.psi(), outer, g, &m)
    } else {
        Default::default()
    };
    FullReference {
        channels: ChannelRefs {
            phi,
            theta,
            psi: p.psi,
            z: p.axis(2),
        },
        x: p.axis(0),
        y: p.axis(1),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    const G: f64 = 9.81;

    #[test]
    fn hover_is_constant() {
        let traj = Trajectory::Hover {
            x: 0.0,
            y: 0.0,
            z: 1.0,
            psi: 0.0,
        };
        for t in [0.0, 3.3, 1e4] {
            let p = eval_trajectory(&traj, t);
            assert_eq!(p.pos, Vector3::new(0.0, 0.0, 1.0));
            assert_eq!(p.vel, Vector3::zeros());
            assert_eq!(p.acc, Vector3::zeros());
            assert_eq!(p.psi, ChannelReference::constant(0.0));
        }
    }

    #[test]
    fn spiral_at_start() {
        let p = eval_trajectory(&Trajectory::default(), 0.0);
        assert_eq!(p.pos, Vector3::new(1.0, 0.0, 0.0));
        assert_relative_eq!(p.vel, Vector3::new(0.0, 0.5, 0.1), epsilon = 1e-15);
        assert_relative_eq!(p.acc, Vector3::new(-0.25, 0.0, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn spiral_period() {
        let traj = Trajectory::default();
        let period = 2.0 * PI / 0.5;
        let a = eval_trajectory(&traj, 0.0);
        let b = eval_trajectory(&traj, period);
        assert_relative_eq!(a.pos.x, b.pos.x, epsilon = 1e-12);
        assert_relative_eq!(a.pos.y, b.pos.y, epsilon = 1e-12);
        assert_relative_eq!(b.pos.z - a.pos.z, 0.1 * period, epsilon = 1e-12);
    }

    #[test]
    fn step_switches_at_time() {
        let traj = Trajectory::Step {
            x: 0.0,
            y: 0.0,
            z: 1.0,
            psi: 0.0,
            channel: StepChannel::Z,
            magnitude: 0.5,
            time: 2.0,
        };
        assert_eq!(eval_trajectory(&traj, 1.999).pos.z, 1.0);
        assert_eq!(eval_trajectory(&traj, 2.0).pos.z, 1.5);
        assert_eq!(eval_trajectory(&traj, 2.0).vel, Vector3::zeros());
    }

    #[test]
    fn waypoints_interpolate() {
        let pts = parse_waypoints("t,x,y,z,psi\n0,0,0,0,0\n2,2,0,1,0.4\n4,2,2,1,0.4\n").unwrap();
        let traj = Trajectory::Waypoints {
            file: None,
            points: pts,
        };
        traj.validate().unwrap();
        let p = eval_trajectory(&traj, 1.0);
        assert_relative_eq!(p.pos, Vector3::new(1.0, 0.0, 0.5));
        assert_relative_eq!(p.vel, Vector3::new(1.0, 0.0, 0.5));
        assert_relative_eq!(p.psi.value, 0.2);
        assert_relative_eq!(p.psi.rate, 0.2);
        let p = eval_trajectory(&traj, 10.0);
        assert_eq!(p.pos, Vector3::new(2.0, 2.0, 1.0));
        assert_eq!(p.vel, Vector3::zeros());
    }

    #[test]
    fn waypoint_parse_errors() {
        assert!(parse_waypoints("").is_err());
        assert!(parse_waypoints("t,x,y\n0,0,0\n").is_err());
        assert!(parse_waypoints("t,x,y,z,psi\n0,0,0\n").is_err());
        assert!(parse_waypoints("t,x,y,z,psi\n0,a,0,0,0\n").is_err());
        let traj = Trajectory::Waypoints {
            file: None,
            points: parse_waypoints("t,x,y,z,psi\n1,0,0,0,0\n1,0,0,0,0\n").unwrap(),
        };
        assert!(traj.validate().is_err());
    }

    #[test]
    fn invalid_spiral_rejected() {
        let traj = Trajectory::Spiral {
            radius: 0.0,
            angular_rate: 0.5,
            climb_rate: 0.0,
            center: [0.0; 2],
            z0: 0.0,
            psi: 0.0,
        };
        assert!(traj.validate().is_err());
    }

    fn at_rest(pos: Vector3<f64>, acc: Vector3<f64>) -> TrajectoryPoint {
        TrajectoryPoint {
            pos,
            acc,
            ..Default::default()
        }
    }

    #[test]
    fn outer_loop_zero_error_is_level() {
        let (phi, theta) = position_outer_loop(
            &State12::zeros(),
            &at_rest(Vector3::zeros(), Vector3::zeros()),
            0.0,
            &OuterLoopParams::default(),
            G,
            &AccelEstimate::default(),
        );
        assert_eq!((phi.value, theta.value), (0.0, 0.0));
    }

    #[test]
    fn outer_loop_clamps_lateral_command() {
        assert_relative_eq!(tilt_from_accel(0.0, -G, 0.0, G).0, 1.0);
        let (phi, theta) = position_outer_loop(
            &State12::zeros(),
            &at_rest(Vector3::zeros(), Vector3::new(0.0, -G, 0.0)),
            0.0,
            &OuterLoopParams::default(),
            G,
            &AccelEstimate::default(),
        );
        assert_eq!(phi.value, 0.5);
        assert_eq!(theta.value, 0.0);

        let (phi, theta) = position_outer_loop(
            &State12::zeros(),
            &at_rest(Vector3::zeros(), Vector3::new(G, 0.0, 0.0)),
            0.0,
            &OuterLoopParams::default(),
            G,
            &AccelEstimate::default(),
        );
        assert_eq!(theta.value, 0.5);
        assert_eq!(phi.value, 0.0);
    }

    #[test]
    fn feedforward_rate_matches_finite_difference() {
        // Follow the spiral exactly with a perfect acceleration estimate: the
        // analytic derivatives then describe the command's true evolution.
        let traj = Trajectory::default();
        let params = OuterLoopParams::default();
        let cmd = |t: f64| {
            let p = eval_trajectory(&traj, t);
            let mut s = State12::zeros();
            s.0[State12::X] = p.pos.x;
            s.0[State12::Y] = p.pos.y;
            s.0[State12::X_DOT] = p.vel.x;
            s.0[State12::Y_DOT] = p.vel.y;
            let m = AccelEstimate {
                acc: p.acc,
                jerk: p.jerk,
            };
            position_outer_loop(&s, &p, 0.3, &params, G, &m)
        };
        let t = 1.7;
        let h = 1e-4;
        let (phi, theta) = cmd(t);
        let fd = |f: &dyn Fn(f64) -> f64| (f(t + h) - f(t - h)) / (2.0 * h);
        let fd2 = |f: &dyn Fn(f64) -> f64| (f(t + h) - 2.0 * f(t) + f(t - h)) / (h * h);
        assert_relative_eq!(phi.rate, fd(&|t| cmd(t).0.value), epsilon = 1e-7);
        assert_relative_eq!(theta.rate, fd(&|t| cmd(t).1.value), epsilon = 1e-7);
        assert_relative_eq!(phi.accel, fd2(&|t| cmd(t).0.value), epsilon = 1e-5);
        assert_relative_eq!(theta.accel, fd2(&|t| cmd(t).1.value), epsilon = 1e-5);
    }

    fn rotating_state(t: f64) -> State12 {
        let rates = [0.3, -0.2, 0.5];
        let start = [0.1, -0.15, 0.7];
        let mut s = State12::zeros();
        for (k, idx) in [State12::PHI, State12::THETA, State12::PSI]
            .into_iter()
            .enumerate()
        {
            s.0[idx] = start[k] + rates[k] * t;
            s.0[idx + 1] = rates[k];
        }
        s
    }

    #[test]
    fn kinematic_jerk_matches_finite_difference() {
        let h = 1e-6;
        let f = Vector3::new(0.4, -0.2, 0.0);
        let measured = |t: f64| thrust_kinematics(&rotating_state(t), 11.0, &f);
        let hover = |t: f64| hover_thrust_kinematics(&rotating_state(t), G);
        for est in [&measured as &dyn Fn(f64) -> AccelEstimate, &hover] {
            let fd = (est(h).acc - est(-h).acc) / (2.0 * h);
            let jerk = est(0.0).jerk;
            assert_relative_eq!(jerk.x, fd.x, epsilon = 1e-7);
            assert_relative_eq!(jerk.y, fd.y, epsilon = 1e-7);
        }
    }

    #[test]
    fn hover_estimate_is_thrust_estimate_at_weight() {
        let s = rotating_state(0.0);
        let k = G / (s.phi().cos() * s.theta().cos());
        let a = thrust_kinematics(&s, k, &Vector3::zeros()).acc;
        let b = hover_thrust_kinematics(&s, G).acc;
        assert_relative_eq!(a.x, b.x, epsilon = 1e-12);
        assert_relative_eq!(a.y, b.y, epsilon = 1e-12);
    }

    #[test]
    fn outer_loop_commutes_with_yaw() {
        let params = OuterLoopParams::default();
        let mut s = State12::zeros();
        s.0[State12::X] = 0.2;
        s.0[State12::Y_DOT] = -0.1;
        let desired = at_rest(Vector3::new(0.5, -0.3, 1.0), Vector3::new(0.1, 0.2, 0.0));
        let base = position_outer_loop(&s, &desired, 0.0, &params, G, &AccelEstimate::default());

        let yaw = 0.9_f64;
        let rot = nalgebra::Rotation3::from_axis_angle(&Vector3::z_axis(), yaw);
        let mut sr = s;
        let p = rot * Vector3::new(s.x(), s.y(), 0.0);
        let v = rot * Vector3::new(s.x_dot(), s.y_dot(), 0.0);
        (sr.0[State12::X], sr.0[State12::Y]) = (p.x, p.y);
        (sr.0[State12::X_DOT], sr.0[State12::Y_DOT]) = (v.x, v.y);
        let dr = at_rest(rot * desired.pos, rot * desired.acc);
        let turned = position_outer_loop(&sr, &dr, yaw, &params, G, &AccelEstimate::default());
        assert_relative_eq!(base.0.value, turned.0.value, epsilon = 1e-12);
        assert_relative_eq!(base.1.value, turned.1.value, epsilon = 1e-12);
    }

    #[test]
    fn disabled_outer_loop_commands_level() {
        let mut s = State12::zeros();
        s.0[State12::X] = 3.0;
        let outer = OuterLoopParams {
            enabled: false,
            ..Default::default()
        };
        let r = full_reference(&Trajectory::default(), 1.0, &s, &outer, G, None);
        assert_eq!(r.channels.phi, ChannelReference::default());
        assert_eq!(r.channels.theta, ChannelReference::default());
    }
}
