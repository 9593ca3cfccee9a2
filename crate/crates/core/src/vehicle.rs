//! Longitudinal and pitch dynamics of the tail-sitter, the flat-plate
//! aerodynamic model, and the nonlinear acceleration terms h1 and h2 that
//! the network estimators have to learn.

use crate::error::{Error, Result};

/// Aerodynamic model constants.
///
/// Lift and drag follow a full-envelope flat-plate model, valid across the
/// whole angle-of-attack range the transition sweeps through:
/// `C_L(a) = 2 sin a cos a`, `C_D(a) = 2 sin^2 a + cd0`, with
/// `L = K C_L V^2` and `D = K C_D V^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AeroParams {
    /// Aerodynamic scaling constant (N s^2 / m^2).
    pub k_aero: f64,
    /// Parasitic drag coefficient.
    pub cd0: f64,
}

impl Default for AeroParams {
    fn default() -> Self {
        AeroParams { k_aero: 0.05, cd0: 0.02 }
    }
}

/// Physical constants of the airframe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleParams {
    /// Mass (kg).
    pub mass: f64,
    /// Pitch-axis inertia (kg m^2).
    pub inertia: f64,
    /// Gravitational acceleration (m/s^2).
    pub gravity: f64,
    pub aero: AeroParams,
}

impl Default for VehicleParams {
    fn default() -> Self {
        VehicleParams {
            mass: 1.0,
            inertia: 1.0,
            gravity: 9.81,
            aero: AeroParams::default(),
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0) {
            return Err(Error::Config(format!("mass must be positive, got {}", self.mass)));
        }
        if !(self.inertia > 0.0) {
            return Err(Error::Config(format!(
                "inertia must be positive, got {}",
                self.inertia
            )));
        }
        if !(self.gravity > 0.0) {
            return Err(Error::Config(format!(
                "gravity must be positive, got {}",
                self.gravity
            )));
        }
        if !(self.aero.k_aero > 0.0) {
            return Err(Error::Config(format!(
                "k_aero must be positive, got {}",
                self.aero.k_aero
            )));
        }
        if self.aero.cd0 < 0.0 {
            return Err(Error::Config(format!(
                "cd0 must be non-negative, got {}",
                self.aero.cd0
            )));
        }
        Ok(())
    }
}

/// Body-frame velocity pair (u along body x, w along body z).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LongState {
    pub u: f64,
    pub w: f64,
}

/// Pitch angle and pitch rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttState {
    pub theta: f64,
    pub q: f64,
}

/// Thrust and pitching moment, the two control inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlInput {
    pub thrust: f64,
    pub tau: f64,
}

/// Angle of attack of the body x-axis relative to the airspeed vector.
///
/// Defined as `atan2(w, u)`; at zero airspeed the angle is taken as 0 so the
/// function is total (the forces vanish there anyway).
pub fn angle_of_attack(s: &LongState) -> f64 {
    if s.u == 0.0 && s.w == 0.0 {
        0.0
    } else {
        s.w.atan2(s.u)
    }
}

/// Lift and drag (N) at the given body velocities.
pub fn aero_forces(s: &LongState, p: &AeroParams) -> (f64, f64) {
    let alpha = angle_of_attack(s);
    let v2 = s.u * s.u + s.w * s.w;
    let (sin_a, cos_a) = alpha.sin_cos();
    let cl = 2.0 * sin_a * cos_a;
    let cd = 2.0 * sin_a * sin_a + p.cd0;
    (p.k_aero * cl * v2, p.k_aero * cd * v2)
}

/// Nonlinear acceleration term of the u-channel:
/// `h1 = (1/m)(-D cos a + L sin a) - q w`.
pub fn h1(s: &LongState, q: f64, vp: &VehicleParams) -> f64 {
    let alpha = angle_of_attack(s);
    let (lift, drag) = aero_forces(s, &vp.aero);
    (-drag * alpha.cos() + lift * alpha.sin()) / vp.mass - q * s.w
}

/// Nonlinear acceleration term of the w-channel:
/// `h2 = (1/m)(-D sin a - L cos a) + q u`.
pub fn h2(s: &LongState, q: f64, vp: &VehicleParams) -> f64 {
    let alpha = angle_of_attack(s);
    let (lift, drag) = aero_forces(s, &vp.aero);
    (-drag * alpha.sin() - lift * alpha.cos()) / vp.mass + q * s.u
}

/// Right-hand side of the velocity subsystem:
/// `du = (T - D cos a + L sin a)/m - g sin th - q w`,
/// `dw = (-D sin a - L cos a)/m + g cos th + q u`.
pub fn longitudinal_rates(
    s: &LongState,
    att: &AttState,
    thrust: f64,
    vp: &VehicleParams,
) -> (f64, f64) {
    let alpha = angle_of_attack(s);
    let (lift, drag) = aero_forces(s, &vp.aero);
    let du = (thrust - drag * alpha.cos() + lift * alpha.sin()) / vp.mass
        - vp.gravity * att.theta.sin()
        - att.q * s.w;
    let dw = (-drag * alpha.sin() - lift * alpha.cos()) / vp.mass
        + vp.gravity * att.theta.cos()
        + att.q * s.u;
    (du, dw)
}

/// Right-hand side of the attitude subsystem: `dth = q`, `dq = tau / J`.
pub fn attitude_rates(att: &AttState, tau: f64, vp: &VehicleParams) -> (f64, f64) {
    (att.q, tau / vp.inertia)
}
