//! Rigid-body plant for a cross-configuration quadrotor.
//!
//! The state is the 12-vector
//!
//! | index | symbol | meaning        |
//! |-------|--------|----------------|
//! | 0     | x1     | roll φ (rad)   |
//! | 1     | x2     | φ̇ (rad/s)      |
//! | 2     | x3     | pitch θ (rad)  |
//! | 3     | x4     | θ̇ (rad/s)      |
//! | 4     | x5     | yaw ψ (rad)    |
//! | 5     | x6     | ψ̇ (rad/s)      |
//! | 6     | x7     | altitude z (m) |
//! | 7     | x8     | ż (m/s)        |
//! | 8     | x9     | x (m)          |
//! | 9     | x10    | ẋ (m/s)        |
//! | 10    | x11    | y (m)          |
//! | 11    | x12    | ẏ (m/s)        |
//!
//! Altitude sits at x7/x8 so that the four controlled subsystems are the
//! consecutive pairs (φ), (θ), (ψ), (z).
//!
//! The rotational rows identify the Euler-angle rates with the body rates
//! in the gyroscopic terms (small-angle model). [`euler_rate_transform`] gives
//! the exact kinematic map for diagnostics.

use nalgebra::{Matrix3, SVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

pub const STATE_DIM: usize = 12;

/// Default tolerance on `|cos(theta)|` for the Euler-rate transform.
pub const GIMBAL_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerAngles {
    pub phi: f64,
    pub theta: f64,
    pub psi: f64,
}

impl EulerAngles {
    pub fn new(phi: f64, theta: f64, psi: f64) -> Self {
        Self { phi, theta, psi }
    }
}

/// Quadrotor state in the fixed x1..x12 ordering documented at module level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct State12(pub SVector<f64, STATE_DIM>);

impl State12 {
    pub const PHI: usize = 0;
    pub const PHI_DOT: usize = 1;
    pub const THETA: usize = 2;
    pub const THETA_DOT: usize = 3;
    pub const PSI: usize = 4;
    pub const PSI_DOT: usize = 5;
    pub const Z: usize = 6;
    pub const Z_DOT: usize = 7;
    pub const X: usize = 8;
    pub const X_DOT: usize = 9;
    pub const Y: usize = 10;
    pub const Y_DOT: usize = 11;

    pub fn zeros() -> Self {
        Self(SVector::zeros())
    }

    pub fn from_array(a: [f64; STATE_DIM]) -> Self {
        Self(SVector::from(a))
    }

    pub fn to_array(&self) -> [f64; STATE_DIM] {
        self.0.into()
    }

    pub fn phi(&self) -> f64 {
        self.0[Self::PHI]
    }
    pub fn phi_dot(&self) -> f64 {
        self.0[Self::PHI_DOT]
    }
    pub fn theta(&self) -> f64 {
        self.0[Self::THETA]
    }
    pub fn theta_dot(&self) -> f64 {
        self.0[Self::THETA_DOT]
    }
    pub fn psi(&self) -> f64 {
        self.0[Self::PSI]
    }
    pub fn psi_dot(&self) -> f64 {
        self.0[Self::PSI_DOT]
    }
    pub fn z(&self) -> f64 {
        self.0[Self::Z]
    }
    pub fn z_dot(&self) -> f64 {
        self.0[Self::Z_DOT]
    }
    pub fn x(&self) -> f64 {
        self.0[Self::X]
    }
    pub fn x_dot(&self) -> f64 {
        self.0[Self::X_DOT]
    }
    pub fn y(&self) -> f64 {
        self.0[Self::Y]
    }
    pub fn y_dot(&self) -> f64 {
        self.0[Self::Y_DOT]
    }

    pub fn attitude(&self) -> EulerAngles {
        EulerAngles::new(self.phi(), self.theta(), self.psi())
    }

    pub fn position(&self) -> Vector3<f64> {
        Vector3::new(self.x(), self.y(), self.z())
    }

    pub fn velocity(&self) -> Vector3<f64> {
        Vector3::new(self.x_dot(), self.y_dot(), self.z_dot())
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl Default for State12 {
    fn default() -> Self {
        Self::zeros()
    }
}

/// Physical plant parameters. Defaults are the F450-class airframe values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantParams {
    pub mass: f64,
    pub gravity: f64,
    pub arm_length: f64,
    pub ixx: f64,
    pub iyy: f64,
    pub izz: f64,
}

impl Default for PlantParams {
    fn default() -> Self {
        Self {
            mass: 2.0,
            gravity: 9.81,
            arm_length: 0.225,
            ixx: 0.0035,
            iyy: 0.0035,
            izz: 0.0050,
        }
    }
}

impl PlantParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("mass", self.mass),
            ("gravity", self.gravity),
            ("arm_length", self.arm_length),
            ("ixx", self.ixx),
            ("iyy", self.iyy),
            ("izz", self.izz),
        ];
        for (name, value) in fields {
            if !(value.is_finite() && value > 0.0) {
                return Err(SimError::InvalidParameter { name, value });
            }
        }
        Ok(())
    }

    /// Thrust that balances gravity at level attitude.
    pub fn hover_thrust(&self) -> f64 {
        self.mass * self.gravity
    }
}

/// Gyroscopic coupling and input-gain coefficients of the state-space model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedCoeffs {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
    /// Inverse mass.
    pub b4: f64,
}

pub fn derive_coeffs(p: &PlantParams) -> Result<DerivedCoeffs> {
    p.validate()?;
    Ok(DerivedCoeffs {
        a1: (p.iyy - p.izz) / p.ixx,
        a2: (p.izz - p.ixx) / p.iyy,
        a3: (p.ixx - p.iyy) / p.izz,
        b1: 1.0 / p.ixx,
        b2: 1.0 / p.iyy,
        b3: 1.0 / p.izz,
        b4: 1.0 / p.mass,
    })
}

/// Thrust `u1` (N) and body moments `u2..u4` (N·m).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControlInput {
    pub u1: f64,
    pub u2: f64,
    pub u3: f64,
    pub u4: f64,
}

impl ControlInput {
    pub fn new(u1: f64, u2: f64, u3: f64, u4: f64) -> Self {
        Self { u1, u2, u3, u4 }
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.u1, self.u2, self.u3, self.u4]
    }

    pub fn clamped(&self, limits: &ActuatorLimits) -> Self {
        let tau = limits.torque_max;
        Self {
            u1: self.u1.clamp(0.0, limits.thrust_max),
            u2: self.u2.clamp(-tau, tau),
            u3: self.u3.clamp(-tau, tau),
            u4: self.u4.clamp(-tau, tau),
        }
    }
}

/// Actuator saturation, applied only when configured.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActuatorLimits {
    pub thrust_max: f64,
    pub torque_max: f64,
}

impl ActuatorLimits {
    pub fn validate(&self) -> Result<()> {
        if !(self.thrust_max > 0.0 && self.torque_max > 0.0) {
            return Err(SimError::Config(
                "actuator limits must be strictly positive".into(),
            ));
        }
        Ok(())
    }
}

/// Body-to-inertial rotation matrix, ZYX (yaw-pitch-roll) convention.
pub fn rotation_matrix(att: &EulerAngles) -> Matrix3<f64> {
    let (sf, cf) = att.phi.sin_cos();
    let (st, ct) = att.theta.sin_cos();
    let (ss, cs) = att.psi.sin_cos();
    Matrix3::new(
        ct * cs,
        sf * st * cs - cf * ss,
        cf * st * cs + sf * ss,
        ct * ss,
        cf * cs + sf * st * ss,
        cf * st * ss - sf * cs,
        -st,
        sf * ct,
        cf * ct,
    )
}

/// Maps body rates `(p, q, r)` to Euler-angle rates `(φ̇, θ̇, ψ̇)`.
pub fn euler_rate_transform(
    att: &EulerAngles,
    body_rates: Vector3<f64>,
    tolerance: f64,
) -> Result<Vector3<f64>> {
    let ct = att.theta.cos();
    if ct.abs() <= tolerance {
        return Err(SimError::GimbalLock {
            cos_theta: ct,
            tolerance,
        });
    }
    let (sf, cf) = att.phi.sin_cos();
    let tt = att.theta.tan();
    let (p, q, r) = (body_rates.x, body_rates.y, body_rates.z);
    Ok(Vector3::new(
        p + r * cf * tt + q * sf * tt,
        q * cf - r * sf,
        r * cf / ct + q * sf / ct,
    ))
}

/// Time derivative of the 12-state model.
///
/// `f_ext` is an inertial-frame external force per unit mass (m/s²) and enters
/// the translational rows only.
pub fn state_derivative(
    s: &State12,
    u: &ControlInput,
    c: &DerivedCoeffs,
    g: f64,
    f_ext: &Vector3<f64>,
) -> State12 {
    let (sf, cf) = s.phi().sin_cos();
    let (st, ct) = s.theta().sin_cos();
    let (ss, cs) = s.psi().sin_cos();
    let (x2, x4, x6) = (s.phi_dot(), s.theta_dot(), s.psi_dot());
    let thrust_acc = c.b4 * u.u1;

    let mut d = SVector::<f64, STATE_DIM>::zeros();
    d[State12::PHI] = x2;
    d[State12::PHI_DOT] = c.a1 * x4 * x6 + c.b1 * u.u2;
    d[State12::THETA] = x4;
    d[State12::THETA_DOT] = c.a2 * x2 * x6 + c.b2 * u.u3;
    d[State12::PSI] = x6;
    d[State12::PSI_DOT] = c.a3 * x2 * x4 + c.b3 * u.u4;
    d[State12::Z] = s.z_dot();
    d[State12::Z_DOT] = -g + thrust_acc * (cf * ct) + f_ext.z;
    d[State12::X] = s.x_dot();
    d[State12::X_DOT] = thrust_acc * (cf * st * cs + sf * ss) + f_ext.x;
    d[State12::Y] = s.y_dot();
    d[State12::Y_DOT] = thrust_acc * (cf * st * ss - sf * cs) + f_ext.y;
    State12(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_2;

    fn table_coeffs() -> DerivedCoeffs {
        derive_coeffs(&PlantParams::default()).unwrap()
    }

    #[test]
    fn rotation_identity_at_zero() {
        let r = rotation_matrix(&EulerAngles::new(0.0, 0.0, 0.0));
        assert_eq!(r, Matrix3::identity());
    }

    #[test]
    fn rotation_quarter_turn_yaw() {
        let r = rotation_matrix(&EulerAngles::new(0.0, 0.0, FRAC_PI_2));
        let expected = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert!((r - expected).abs().max() < 1e-15);
    }

    #[test]
    fn rotation_third_column_reference_values() {
        // Independently evaluated column-3 entries at (0.1, 0.2, 0.3).
        let r = rotation_matrix(&EulerAngles::new(0.1, 0.2, 0.3));
        assert_relative_eq!(r[(0, 2)], 0.218_350_663_146_334_42, epsilon = 1e-15);
        assert_relative_eq!(r[(1, 2)], -0.036_957_013_524_625_076, epsilon = 1e-15);
        assert_relative_eq!(r[(2, 2)], 0.975_170_327_201_816, epsilon = 1e-15);
        assert!((r.transpose() * r - Matrix3::identity()).abs().max() < 1e-12);
    }

    #[test]
    fn rotation_matches_nalgebra_zyx() {
        let att = EulerAngles::new(-0.4, 0.7, 2.1);
        let ours = rotation_matrix(&att);
        let theirs = nalgebra::Rotation3::from_euler_angles(att.phi, att.theta, att.psi);
        assert!((ours - theirs.matrix()).abs().max() < 1e-14);
    }

    #[test]
    fn table_coefficients() {
        let c = table_coeffs();
        assert_relative_eq!(c.a1, -0.428_571_428_571_428_5, epsilon = 1e-12);
        assert_relative_eq!(c.a2, 0.428_571_428_571_428_5, epsilon = 1e-12);
        assert_eq!(c.a3, 0.0);
        assert_relative_eq!(c.b1, 285.714_285_714_285_7, epsilon = 1e-9);
        assert_relative_eq!(c.b2, 285.714_285_714_285_7, epsilon = 1e-9);
        assert_relative_eq!(c.b3, 200.0, epsilon = 1e-12);
        assert_eq!(c.b4, 0.5);
    }

    #[test]
    fn symmetric_body_has_no_coupling() {
        let p = PlantParams {
            ixx: 0.01,
            iyy: 0.01,
            izz: 0.01,
            mass: 1.0,
            ..PlantParams::default()
        };
        let c = derive_coeffs(&p).unwrap();
        assert_eq!((c.a1, c.a2, c.a3), (0.0, 0.0, 0.0));
        assert_eq!(c.b4, 1.0);
    }

    #[test]
    fn rejects_non_positive_mass_and_inertia() {
        let p = PlantParams {
            mass: 0.0,
            ..PlantParams::default()
        };
        assert!(matches!(
            derive_coeffs(&p),
            Err(SimError::InvalidParameter { name: "mass", .. })
        ));
        let p = PlantParams {
            izz: -1.0,
            ..PlantParams::default()
        };
        assert!(derive_coeffs(&p).is_err());
    }

    #[test]
    fn euler_rates_identity_at_level() {
        let w = Vector3::new(0.3, -0.2, 0.7);
        let out =
            euler_rate_transform(&EulerAngles::new(0.0, 0.0, 0.0), w, GIMBAL_TOLERANCE).unwrap();
        assert_eq!(out, w);
    }

    #[test]
    fn euler_rates_rolled_45() {
        let att = EulerAngles::new(std::f64::consts::FRAC_PI_4, 0.0, 0.0);
        let out =
            euler_rate_transform(&att, Vector3::new(0.0, 1.0, 0.0), GIMBAL_TOLERANCE).unwrap();
        assert_relative_eq!(out.x, 0.0, epsilon = 1e-15);
        assert_relative_eq!(out.y, std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-15);
        assert_relative_eq!(out.z, std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-15);
    }

    #[test]
    fn euler_rates_gimbal_lock() {
        let att = EulerAngles::new(0.0, FRAC_PI_2 - 1e-9, 0.0);
        let err = euler_rate_transform(&att, Vector3::new(0.0, 0.0, 1.0), GIMBAL_TOLERANCE);
        assert!(matches!(err, Err(SimError::GimbalLock { .. })));
    }

    #[test]
    fn hover_is_equilibrium() {
        let c = table_coeffs();
        let u = ControlInput::new(19.62, 0.0, 0.0, 0.0);
        let d = state_derivative(&State12::zeros(), &u, &c, 9.81, &Vector3::zeros());
        assert_eq!(d, State12::zeros());
    }

    #[test]
    fn free_fall() {
        let c = table_coeffs();
        let d = state_derivative(
            &State12::zeros(),
            &ControlInput::default(),
            &c,
            9.81,
            &Vector3::zeros(),
        );
        let mut expected = [0.0; STATE_DIM];
        expected[State12::Z_DOT] = -9.81;
        assert_eq!(d.to_array(), expected);
    }

    #[test]
    fn roll_gyroscopic_term() {
        let c = table_coeffs();
        let mut s = State12::zeros();
        s.0[State12::THETA_DOT] = 1.0;
        s.0[State12::PSI_DOT] = 1.0;
        let d = state_derivative(&s, &ControlInput::default(), &c, 9.81, &Vector3::zeros());
        assert_relative_eq!(
            d.0[State12::PHI_DOT],
            -0.428_571_428_571_428_5,
            epsilon = 1e-12
        );
    }

    #[test]
    fn clamping_bounds_inputs() {
        let lim = ActuatorLimits {
            thrust_max: 30.0,
            torque_max: 0.1,
        };
        let u = ControlInput::new(-3.0, 0.5, -0.5, 0.05).clamped(&lim);
        assert_eq!(u, ControlInput::new(0.0, 0.1, -0.1, 0.05));
        let u = ControlInput::new(45.0, 0.0, 0.0, 0.0).clamped(&lim);
        assert_eq!(u.u1, 30.0);
    }
}
