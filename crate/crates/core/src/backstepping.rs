//! Lyapunov backstepping for the roll, pitch, yaw and altitude subsystems.
//!
//! Each subsystem is a double integrator `(x_i, x_{i+1})` with tracking error
//! `e_i = x_ir − x_i` and virtual-control error
//! `e_{i+1} = x_{i+1} − ẋ_ir − c_i·e_i`. With the control laws below the
//! composite function `V = ½e_i² + ½e_{i+1}²` satisfies
//! `V̇ = −c_i·e_i² − c_{i+1}·e_{i+1}²` exactly on the nominal plant.

use serde::{Deserialize, Serialize};

use crate::dynamics::{DerivedCoeffs, State12};
use crate::error::{Result, SimError};

/// Default guard on `|cos(phi)·cos(theta)|` for the thrust law.
pub const THRUST_SINGULARITY_TOLERANCE: f64 = 1e-3;

/// Backstepping gains `c1..c8`, all strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GainsRepr", into = "GainsRepr")]
pub struct Gains([f64; 8]);

impl Gains {
    pub fn new(c: [f64; 8]) -> Result<Self> {
        for (i, &v) in c.iter().enumerate() {
            if !(v.is_finite() && v > 0.0) {
                return Err(SimError::InvalidGain {
                    name: format!("c{}", i + 1),
                    value: v,
                });
            }
        }
        Ok(Self(c))
    }

    pub fn uniform(c: f64) -> Result<Self> {
        Self::new([c; 8])
    }

    /// Gain `c_k`, 1-based.
    pub fn c(&self, k: usize) -> f64 {
        self.0[k - 1]
    }

    pub fn as_array(&self) -> [f64; 8] {
        self.0
    }

    /// Returns a copy with gain `c_k` (1-based) replaced.
    pub fn with(&self, k: usize, value: f64) -> Result<Self> {
        let mut c = self.0;
        c[k - 1] = value;
        Self::new(c)
    }
}

impl Default for Gains {
    fn default() -> Self {
        Self([2.0; 8])
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GainsRepr {
    c1: f64,
    c2: f64,
    c3: f64,
    c4: f64,
    c5: f64,
    c6: f64,
    c7: f64,
    c8: f64,
}

impl TryFrom<GainsRepr> for Gains {
    type Error = SimError;
    fn try_from(r: GainsRepr) -> Result<Self> {
        Gains::new([r.c1, r.c2, r.c3, r.c4, r.c5, r.c6, r.c7, r.c8])
    }
}

impl From<Gains> for GainsRepr {
    fn from(g: Gains) -> Self {
        let [c1, c2, c3, c4, c5, c6, c7, c8] = g.0;
        GainsRepr {
            c1,
            c2,
            c3,
            c4,
            c5,
            c6,
            c7,
            c8,
        }
    }
}

/// Desired value with its first and second time derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ChannelReference {
    pub value: f64,
    pub rate: f64,
    pub accel: f64,
}

impl ChannelReference {
    pub fn new(value: f64, rate: f64, accel: f64) -> Self {
        Self { value, rate, accel }
    }

    pub fn constant(value: f64) -> Self {
        Self::new(value, 0.0, 0.0)
    }
}

/// References for the four controlled channels.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ChannelRefs {
    pub phi: ChannelReference,
    pub theta: ChannelReference,
    pub psi: ChannelReference,
    pub z: ChannelReference,
}

impl ChannelRefs {
    /// Channels in subsystem order (φ, θ, ψ, z).
    pub fn as_array(&self) -> [ChannelReference; 4] {
        [self.phi, self.theta, self.psi, self.z]
    }
}

/// Tracking errors `e1..e8`; index 0 holds `e1`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BacksteppingErrors(pub [f64; 8]);

impl BacksteppingErrors {
    /// Error `e_k`, 1-based.
    pub fn e(&self, k: usize) -> f64 {
        self.0[k - 1]
    }
}

/// Augmented Lyapunov function of one subsystem and its closed-loop derivative.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LyapunovValue {
    /// `½e_i²`
    pub v_position: f64,
    /// `½e_i² + ½e_{i+1}²`
    pub v: f64,
    /// `−c_i·e_i² − c_{i+1}·e_{i+1}²`
    pub v_dot: f64,
}

/// Subsystem names in (φ, θ, ψ, z) order.
pub const SUBSYSTEMS: [&str; 4] = ["phi", "theta", "psi", "z"];

/// `(position index, rate index)` of each subsystem within `State12`.
const CHANNEL_INDEX: [(usize, usize); 4] = [
    (State12::PHI, State12::PHI_DOT),
    (State12::THETA, State12::THETA_DOT),
    (State12::PSI, State12::PSI_DOT),
    (State12::Z, State12::Z_DOT),
];

pub fn virtual_control(error: f64, ref_rate: f64, gain: f64) -> f64 {
    ref_rate + gain * error
}

pub fn compute_errors(s: &State12, refs: &ChannelRefs, gains: &Gains) -> BacksteppingErrors {
    let mut e = [0.0; 8];
    for (k, (r, (ix, iv))) in refs.as_array().iter().zip(CHANNEL_INDEX).enumerate() {
        let ci = gains.0[2 * k];
        let ei = r.value - s.0[ix];
        e[2 * k] = ei;
        e[2 * k + 1] = s.0[iv] - virtual_control(ei, r.rate, ci);
    }
    BacksteppingErrors(e)
}

pub fn lyapunov_values(errs: &BacksteppingErrors, gains: &Gains) -> [LyapunovValue; 4] {
    std::array::from_fn(|k| {
        let (ei, ej) = (errs.0[2 * k], errs.0[2 * k + 1]);
        let (ci, cj) = (gains.0[2 * k], gains.0[2 * k + 1]);
        let v_position = 0.5 * ei * ei;
        LyapunovValue {
            v_position,
            v: v_position + 0.5 * ej * ej,
            v_dot: -ci * ei * ei - cj * ej * ej,
        }
    })
}

/// `|cos(phi)·cos(theta)|`, the divisor of every thrust law.
pub fn thrust_margin(s: &State12) -> f64 {
    (s.phi().cos() * s.theta().cos()).abs()
}

/// Backstepping control laws for thrust and the three body moments.
///
/// Fails with [`SimError::ThrustSingularity`] (with `t = NaN`, to be filled
/// in by the caller) when `|cos(x1)·cos(x3)| <= tolerance`.
pub fn control_laws(
    s: &State12,
    refs: &ChannelRefs,
    gains: &Gains,
    c: &DerivedCoeffs,
    g: f64,
    tolerance: f64,
) -> Result<crate::dynamics::ControlInput> {
    let cos_prod = s.phi().cos() * s.theta().cos();
    if cos_prod.abs() <= tolerance {
        return Err(SimError::ThrustSingularity {
            t: f64::NAN,
            margin: cos_prod.abs(),
            tolerance,
        });
    }
    let e = compute_errors(s, refs, gains).0;
    let (x2, x4, x6) = (s.phi_dot(), s.theta_dot(), s.psi_dot());
    let k = |i: usize| gains.c(i);

    // ė_i = ẋ_ir − x_{i+1}
    let e1_dot = refs.phi.rate - x2;
    let e3_dot = refs.theta.rate - x4;
    let e5_dot = refs.psi.rate - x6;
    let e7_dot = refs.z.rate - s.z_dot();

    let u2 = (refs.phi.accel + k(1) * e1_dot - c.a1 * x4 * x6 + e[0] - k(2) * e[1]) / c.b1;
    let u3 = (refs.theta.accel + k(3) * e3_dot - c.a2 * x2 * x6 + e[2] - k(4) * e[3]) / c.b2;
    let u4 = (refs.psi.accel + k(5) * e5_dot - c.a3 * x2 * x4 + e[4] - k(6) * e[5]) / c.b3;
    let u1 = (refs.z.accel + k(7) * e7_dot + g + e[6] - k(8) * e[7]) / (c.b4 * cos_prod);

    Ok(crate::dynamics::ControlInput::new(u1, u2, u3, u4))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{derive_coeffs, PlantParams};
    use approx::assert_relative_eq;

    fn coeffs() -> DerivedCoeffs {
        derive_coeffs(&PlantParams::default()).unwrap()
    }

    #[test]
    fn gains_reject_non_positive() {
        assert!(Gains::new([2.0, 2.0, 0.0, 2.0, 2.0, 2.0, 2.0, 2.0]).is_err());
        assert!(Gains::new([2.0, 2.0, 2.0, 2.0, 2.0, 2.0, 2.0, -1.0]).is_err());
        assert!(Gains::uniform(f64::NAN).is_err());
        assert!(Gains::default().with(4, 0.0).is_err());
    }

    #[test]
    fn perfect_tracking_has_zero_errors() {
        let mut s = State12::zeros();
        s.0[State12::Z] = 1.0;
        s.0[State12::Z_DOT] = 0.5;
        s.0[State12::PHI] = 0.1;
        let refs = ChannelRefs {
            phi: ChannelReference::constant(0.1),
            z: ChannelReference::new(1.0, 0.5, 0.0),
            ..Default::default()
        };
        let e = compute_errors(&s, &refs, &Gains::uniform(3.0).unwrap());
        assert_eq!(e.0, [0.0; 8]);
    }

    #[test]
    fn roll_errors_by_hand() {
        let refs = ChannelRefs {
            phi: ChannelReference::constant(0.2),
            ..Default::default()
        };
        let e = compute_errors(&State12::zeros(), &refs, &Gains::default());
        assert_relative_eq!(e.e(1), 0.2);
        assert_relative_eq!(e.e(2), -0.4);
    }

    #[test]
    fn virtual_control_values() {
        assert_eq!(virtual_control(0.0, 0.0, 2.0), 0.0);
        assert_relative_eq!(virtual_control(0.1, 0.5, 2.0), 0.7);
        assert_relative_eq!(virtual_control(-0.1, 0.0, 2.0), -0.2);
    }

    #[test]
    fn hover_regulation_gives_weight_thrust() {
        let mut s = State12::zeros();
        s.0[State12::Z] = 1.0;
        let refs = ChannelRefs {
            z: ChannelReference::constant(1.0),
            ..Default::default()
        };
        let u = control_laws(&s, &refs, &Gains::default(), &coeffs(), 9.81, 1e-3).unwrap();
        assert_eq!(u.to_array(), [19.62, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn roll_feedforward_equals_inertia() {
        let refs = ChannelRefs {
            phi: ChannelReference::new(0.0, 0.0, 1.0),
            ..Default::default()
        };
        let u = control_laws(
            &State12::zeros(),
            &refs,
            &Gains::default(),
            &coeffs(),
            9.81,
            1e-3,
        )
        .unwrap();
        assert_relative_eq!(u.u2, 0.0035, epsilon = 1e-15);
    }

    #[test]
    fn inverted_roll_is_singular() {
        let mut s = State12::zeros();
        s.0[State12::PHI] = std::f64::consts::FRAC_PI_2;
        let r = control_laws(
            &s,
            &ChannelRefs::default(),
            &Gains::default(),
            &coeffs(),
            9.81,
            1e-3,
        );
        assert!(matches!(r, Err(SimError::ThrustSingularity { .. })));
    }

    #[test]
    fn lyapunov_values_by_hand() {
        let errs = BacksteppingErrors([0.2, -0.4, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let v = lyapunov_values(&errs, &Gains::default());
        assert_relative_eq!(v[0].v, 0.10, epsilon = 1e-15);
        assert_relative_eq!(v[0].v_dot, -0.40, epsilon = 1e-15);
        assert_relative_eq!(v[0].v_position, 0.02, epsilon = 1e-15);
        for other in &v[1..] {
            assert_eq!(*other, LyapunovValue::default());
        }
    }

    #[test]
    fn gains_toml_round_trip() {
        let g = Gains::new([1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]).unwrap();
        let text = toml::to_string(&g).unwrap();
        let back: Gains = toml::from_str(&text).unwrap();
        assert_eq!(back, g);
        assert!(toml::from_str::<Gains>(&text.replace("c5 = 5.0", "c5 = -5.0")).is_err());
    }
}
