//! Feedback-linearizing velocity controller (outer loop) and the
//! proportional-derivative pitch controller (inner loop).
//!
//! The outer loop cancels the estimated nonlinear accelerations and places
//! first-order error dynamics on each velocity channel; its virtual-control
//! output becomes the pitch reference of the inner loop.

use crate::error::{Error, Result};
use crate::guidance::DesiredState;
use crate::vehicle::{AttState, LongState, VehicleParams};

/// Proportional gains of the velocity loops (1/s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuterGains {
    pub k1: f64,
    pub k2: f64,
}

impl Default for OuterGains {
    fn default() -> Self {
        OuterGains { k1: 2.0, k2: 2.0 }
    }
}

impl OuterGains {
    pub fn validate(&self) -> Result<()> {
        if !(self.k1 > 0.0 && self.k2 > 0.0) {
            return Err(Error::Config(format!(
                "outer gains must be positive, got k1 = {}, k2 = {}",
                self.k1, self.k2
            )));
        }
        Ok(())
    }
}

/// Gains of the pitch loop; defaults make the inner loop roughly four times
/// faster than the velocity loops, preserving the time-scale separation the
/// cascade relies on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerGains {
    pub k3: f64,
    pub k4: f64,
}

impl Default for InnerGains {
    fn default() -> Self {
        InnerGains { k3: 16.0, k4: 8.0 }
    }
}

impl InnerGains {
    pub fn validate(&self) -> Result<()> {
        if !(self.k3 > 0.0 && self.k4 > 0.0) {
            return Err(Error::Config(format!(
                "inner gains must be positive, got k3 = {}, k4 = {}",
                self.k3, self.k4
            )));
        }
        Ok(())
    }
}

/// Output of the velocity loop: thrust plus the commanded virtual control.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuterCommand {
    /// Thrust command after the actuator clamp (N), never negative.
    pub thrust: f64,
    /// Thrust before clamping.
    pub thrust_raw: f64,
    /// Virtual control after clamping to [-1, 1].
    pub eps: f64,
    /// Virtual control before clamping.
    pub eps_raw: f64,
    pub eps_saturated: bool,
    pub thrust_saturated: bool,
}

/// Feedback-linearizing thrust and virtual-control laws.
///
/// With `v_u = -k1 e_u + du_d` and `v_w = -k2 e_w + dw_d`, the commands
/// `eps = (v_w - h2_hat)/g` and `T = m (v_u - h1_hat) + m g sqrt(1 - eps^2)`
/// cancel the estimated nonlinearities, so with perfect estimates each
/// velocity error obeys `de = -k e`.
pub fn velocity_outer_loop(
    s: &LongState,
    d: &DesiredState,
    d_dot: (f64, f64),
    h_hat: (f64, f64),
    gains: &OuterGains,
    vp: &VehicleParams,
) -> OuterCommand {
    let (du_d, dw_d) = d_dot;
    let (h1_hat, h2_hat) = h_hat;
    let v_u = -gains.k1 * (s.u - d.u_d) + du_d;
    let v_w = -gains.k2 * (s.w - d.w_d) + dw_d;

    let eps_raw = (v_w - h2_hat) / vp.gravity;
    let eps = eps_raw.clamp(-1.0, 1.0);
    let thrust_raw =
        vp.mass * (v_u - h1_hat) + vp.mass * vp.gravity * (1.0 - eps * eps).max(0.0).sqrt();
    let thrust = thrust_raw.max(0.0);

    OuterCommand {
        thrust,
        thrust_raw,
        eps,
        eps_raw,
        eps_saturated: eps != eps_raw,
        thrust_saturated: thrust != thrust_raw,
    }
}

/// Pitch-loop moment law `tau = -k3 (theta - theta_d) - k4 (q - q_d)`.
pub fn attitude_inner_loop(att: &AttState, d: &DesiredState, gains: &InnerGains) -> f64 {
    -gains.k3 * (att.theta - d.theta_d) - gains.k4 * (att.q - d.q_d)
}

/// Pitch error system `[[0, 1], [-k3, -k4]]` with its eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttitudeErrorSystem {
    pub a: [[f64; 2]; 2],
    /// Eigenvalues as (re, im) pairs.
    pub eigenvalues: [(f64, f64); 2],
    /// True iff both eigenvalues have negative real part.
    pub hurwitz: bool,
}

/// Builds the pitch error system and checks whether it is Hurwitz, which
/// holds exactly when both gains are strictly positive.
pub fn attitude_error_matrix(gains: &InnerGains) -> AttitudeErrorSystem {
    let (k3, k4) = (gains.k3, gains.k4);
    // Roots of lambda^2 + k4 lambda + k3.
    let disc = k4 * k4 - 4.0 * k3;
    let eigenvalues = if disc >= 0.0 {
        let root = disc.sqrt();
        [((-k4 + root) / 2.0, 0.0), ((-k4 - root) / 2.0, 0.0)]
    } else {
        let imag = (-disc).sqrt() / 2.0;
        [(-k4 / 2.0, imag), (-k4 / 2.0, -imag)]
    };
    let hurwitz = eigenvalues.iter().all(|&(re, _)| re < 0.0);
    AttitudeErrorSystem { a: [[0.0, 1.0], [-k3, -k4]], eigenvalues, hurwitz }
}
