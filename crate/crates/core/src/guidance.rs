//! Reference generation for both transition directions: shaped velocity and
//! angle-of-attack profiles, the derived normal-velocity reference, and the
//! pitch reference obtained from the w-channel virtual control.

use crate::error::{Error, Result};
use crate::vehicle::{h2, LongState, VehicleParams};

/// Shaping constants of the arctan reference profiles.
///
/// `m_u`/`l_u` are the asymptote and ramp end of the velocity profile (m/s);
/// `m_alpha`/`l_alpha` play the same roles for the angle-of-attack profile
/// and are expressed in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapingConstants {
    pub m_u: f64,
    pub l_u: f64,
    pub m_alpha: f64,
    pub l_alpha: f64,
}

impl Default for ShapingConstants {
    fn default() -> Self {
        ShapingConstants { m_u: 1.0, l_u: 0.5, m_alpha: 6.0, l_alpha: 3.0 }
    }
}

impl ShapingConstants {
    /// Curvature constant of the velocity profile, `pi / (2 (M_u - L_u))`.
    pub fn a_u(&self) -> f64 {
        std::f64::consts::PI / (2.0 * (self.m_u - self.l_u))
    }

    /// Curvature constant of the AoA profile, `pi / (2 (M_alpha - L_alpha))`.
    pub fn a_alpha(&self) -> f64 {
        std::f64::consts::PI / (2.0 * (self.m_alpha - self.l_alpha))
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.l_u && self.l_u < self.m_u) {
            return Err(Error::Config(format!(
                "velocity shaping requires 0 < l_u < m_u, got l_u = {}, m_u = {}",
                self.l_u, self.m_u
            )));
        }
        if !(0.0 < self.l_alpha && self.l_alpha < self.m_alpha) {
            return Err(Error::Config(format!(
                "AoA shaping requires 0 < l_alpha < m_alpha, got l_alpha = {}, m_alpha = {}",
                self.l_alpha, self.m_alpha
            )));
        }
        Ok(())
    }
}

/// Direction of the transition maneuver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransitionMode {
    HoverToCruise,
    CruiseToHover,
}

impl TransitionMode {
    /// Short tag used by the CLI and config files (`hc` / `ch`).
    pub fn tag(&self) -> &'static str {
        match self {
            TransitionMode::HoverToCruise => "hc",
            TransitionMode::CruiseToHover => "ch",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "hc" => Ok(TransitionMode::HoverToCruise),
            "ch" => Ok(TransitionMode::CruiseToHover),
            other => Err(Error::Config(format!(
                "unknown transition mode '{other}' (expected 'hc' or 'ch')"
            ))),
        }
    }
}

/// Reference point handed to the controllers at one time instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesiredState {
    /// Desired forward body velocity (m/s).
    pub u_d: f64,
    /// Desired normal body velocity (m/s), always `u_d tan(alpha_d)`.
    pub w_d: f64,
    /// Desired angle of attack (rad).
    pub alpha_d: f64,
    /// Desired pitch angle (rad), in [0, pi].
    pub theta_d: f64,
    /// Desired pitch rate (rad/s).
    pub q_d: f64,
}

/// Hover-to-cruise forward velocity reference: a linear ramp `t/5` that blends
/// into an arctan approach to the asymptote `m_u`.
pub fn ud_hover_cruise(t: f64, sc: &ShapingConstants) -> f64 {
    let x = t / 5.0;
    if x <= sc.l_u {
        x
    } else {
        (sc.a_u() * (x - sc.l_u)).atan() / sc.a_u() + sc.l_u
    }
}

/// Time derivative of [`ud_hover_cruise`].
pub fn ud_hover_cruise_rate(t: f64, sc: &ShapingConstants) -> f64 {
    let x = t / 5.0;
    if x <= sc.l_u {
        0.2
    } else {
        let z = sc.a_u() * (x - sc.l_u);
        0.2 / (1.0 + z * z)
    }
}

/// Hover-to-cruise angle-of-attack reference in degrees; same shape as the
/// velocity profile but driven directly by `t`.
pub fn alpha_hover_cruise(t: f64, sc: &ShapingConstants) -> f64 {
    if t <= sc.l_alpha {
        t
    } else {
        (sc.a_alpha() * (t - sc.l_alpha)).atan() / sc.a_alpha() + sc.l_alpha
    }
}

/// Time derivative of [`alpha_hover_cruise`] (deg/s).
pub fn alpha_hover_cruise_rate(t: f64, sc: &ShapingConstants) -> f64 {
    if t <= sc.l_alpha {
        1.0
    } else {
        let z = sc.a_alpha() * (t - sc.l_alpha);
        1.0 / (1.0 + z * z)
    }
}

/// Velocity/AoA reference and its time derivatives for either direction.
///
/// The cruise-to-hover profiles are the literal complements `1 - u_hc(t)`
/// (m/s) and `6 - alpha_hc(t)` (degrees) of the hover-to-cruise ones.
/// Returns `(u_d, w_d, du_d, dw_d, alpha_d_rad)`.
pub fn velocity_reference(
    t: f64,
    mode: TransitionMode,
    sc: &ShapingConstants,
) -> (f64, f64, f64, f64, f64) {
    let (u_d, du_d, alpha_deg, dalpha_deg) = match mode {
        TransitionMode::HoverToCruise => (
            ud_hover_cruise(t, sc),
            ud_hover_cruise_rate(t, sc),
            alpha_hover_cruise(t, sc),
            alpha_hover_cruise_rate(t, sc),
        ),
        TransitionMode::CruiseToHover => (
            1.0 - ud_hover_cruise(t, sc),
            -ud_hover_cruise_rate(t, sc),
            6.0 - alpha_hover_cruise(t, sc),
            -alpha_hover_cruise_rate(t, sc),
        ),
    };
    let alpha = alpha_deg.to_radians();
    let dalpha = dalpha_deg.to_radians();
    let tan_a = alpha.tan();
    let w_d = u_d * tan_a;
    let dw_d = du_d * tan_a + u_d * (1.0 + tan_a * tan_a) * dalpha;
    (u_d, w_d, du_d, dw_d, alpha)
}

/// Virtual control that keeps the w-channel on the reference, evaluated on
/// the reference model itself: `eps_d = (dw_d - h2(u_d, w_d, 0)) / g`.
pub fn epsilon_desired(t: f64, mode: TransitionMode, sc: &ShapingConstants, vp: &VehicleParams) -> f64 {
    let (u_d, w_d, _, dw_d, _) = velocity_reference(t, mode, sc);
    (dw_d - h2(&LongState { u: u_d, w: w_d }, 0.0, vp)) / vp.gravity
}

/// Converts a virtual-control value into the pitch reference
/// `theta_d = arccos(clamp(eps, -1, 1))`; the flag reports clamping.
pub fn theta_from_epsilon(eps: f64) -> (f64, bool) {
    let clamped = eps.clamp(-1.0, 1.0);
    (clamped.acos(), clamped != eps)
}

fn theta_desired(t: f64, mode: TransitionMode, sc: &ShapingConstants, vp: &VehicleParams) -> f64 {
    theta_from_epsilon(epsilon_desired(t, mode, sc, vp)).0
}

/// Full reference point at time `t`; `dt` is the step used for the
/// finite-difference pitch-rate reference (centered away from t = 0).
pub fn desired_state(
    t: f64,
    mode: TransitionMode,
    sc: &ShapingConstants,
    vp: &VehicleParams,
    dt: f64,
) -> DesiredState {
    let (u_d, w_d, _, _, alpha_d) = velocity_reference(t, mode, sc);
    let theta_d = theta_desired(t, mode, sc, vp);
    let q_d = if t < dt {
        (theta_desired(t + dt, mode, sc, vp) - theta_d) / dt
    } else {
        (theta_desired(t + dt, mode, sc, vp) - theta_desired(t - dt, mode, sc, vp)) / (2.0 * dt)
    };
    DesiredState { u_d, w_d, alpha_d, theta_d, q_d }
}

/// Reference velocity derivatives `(du_d, dw_d)` at time `t`.
pub fn desired_rates(t: f64, mode: TransitionMode, sc: &ShapingConstants) -> (f64, f64) {
    let (_, _, du_d, dw_d, _) = velocity_reference(t, mode, sc);
    (du_d, dw_d)
}
