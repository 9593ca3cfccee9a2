//! Closed-loop transition simulation: fixed-step RK4 integration of the
//! longitudinal model under the cascaded velocity and attitude loops.

use std::path::PathBuf;

use nalgebra::DVector;

use crate::controller::{attitude_inner_loop, velocity_outer_loop, InnerGains, OuterGains};
use crate::error::{Error, Result};
use crate::guidance::{
    desired_state, theta_from_epsilon, velocity_reference, DesiredState, ShapingConstants,
    TransitionMode,
};
use crate::rnn::{Channel, RnnNetwork};
use crate::vehicle::{
    attitude_rates, h1, h2, longitudinal_rates, AttState, LongState, VehicleParams,
};

/// One classical Runge-Kutta step `x(t) -> x(t + dt)`.
pub fn rk4_step<F>(f: &F, x: &DVector<f64>, t: f64, dt: f64) -> Result<DVector<f64>>
where
    F: Fn(f64, &DVector<f64>) -> DVector<f64>,
{
    if !(dt > 0.0) {
        return Err(Error::Config(format!("step size must be positive, got {dt}")));
    }
    let k1 = f(t, x);
    let k2 = f(t + dt / 2.0, &(x + (dt / 2.0) * &k1));
    let k3 = f(t + dt / 2.0, &(x + (dt / 2.0) * &k2));
    let k4 = f(t + dt, &(x + dt * &k3));
    let next = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::Diverged { t });
    }
    Ok(next)
}

/// Where the channel estimates come from during a closed-loop run.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightsSource {
    /// Evaluate the true channel accelerations at the measured state.
    Oracle,
    /// Load trained weight snapshots from disk at simulation start.
    Files { u: PathBuf, w: PathBuf },
    /// Use already-constructed networks.
    Loaded { u: RnnNetwork, w: RnnNetwork },
}

/// Full description of one closed-loop run.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub mode: TransitionMode,
    pub u0: f64,
    pub w0: f64,
    pub theta0: f64,
    pub q0: f64,
    pub t_end: f64,
    pub dt: f64,
    pub vehicle: VehicleParams,
    pub outer: OuterGains,
    pub inner: InnerGains,
    pub shaping: ShapingConstants,
    pub weights: WeightsSource,
}

impl ScenarioConfig {
    /// Hover-to-cruise scenario: near-vertical start, 20 s horizon.
    pub fn hover_to_cruise() -> Self {
        ScenarioConfig {
            mode: TransitionMode::HoverToCruise,
            u0: 0.01,
            w0: 0.001,
            theta0: 1.6,
            q0: 0.0,
            t_end: 20.0,
            dt: 1e-3,
            vehicle: VehicleParams::default(),
            outer: OuterGains::default(),
            inner: InnerGains::default(),
            shaping: ShapingConstants::default(),
            weights: WeightsSource::Oracle,
        }
    }

    /// Cruise-to-hover scenario: near-level start, 30 s horizon.
    pub fn cruise_to_hover() -> Self {
        ScenarioConfig {
            mode: TransitionMode::CruiseToHover,
            u0: 1.1,
            w0: 0.16,
            theta0: 0.15,
            q0: 0.0,
            t_end: 30.0,
            ..ScenarioConfig::hover_to_cruise()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.vehicle.validate()?;
        self.shaping.validate()?;
        if !(self.t_end > 0.0) {
            return Err(Error::Config(format!("t_end must be positive, got {}", self.t_end)));
        }
        if !(self.dt > 0.0) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        Ok(())
    }
}

/// One logged sample of the closed loop, taken before the step is applied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRow {
    pub t: f64,
    pub u: f64,
    pub w: f64,
    pub theta: f64,
    pub q: f64,
    pub thrust: f64,
    pub tau: f64,
    pub eps: f64,
    pub u_d: f64,
    pub w_d: f64,
    /// Commanded pitch `arccos(eps)` the inner loop is tracking.
    pub theta_d: f64,
    pub e_u: f64,
    pub e_w: f64,
    pub e_theta: f64,
    pub h1_hat: f64,
    pub h2_hat: f64,
    pub eps_saturated: bool,
    pub thrust_saturated: bool,
}

/// Sampled closed-loop trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub mode: TransitionMode,
    pub dt: f64,
    pub rows: Vec<TrajectoryRow>,
}

impl TrajectoryLog {
    pub fn final_row(&self) -> &TrajectoryRow {
        self.rows.last().expect("a trajectory always has at least one row")
    }
}

/// Number of integration steps covering `[0, t_end]`, snapping to the grid
/// when `t_end/dt` is a whole number up to float rounding.
pub fn steps_for(t_end: f64, dt: f64) -> usize {
    let r = t_end / dt;
    let snapped = r.round();
    if (r - snapped).abs() < 1e-6 * r.max(1.0) {
        snapped as usize
    } else {
        r.ceil() as usize
    }
}

enum Estimator {
    Oracle,
    Networks { u: Box<RnnNetwork>, w: Box<RnnNetwork> },
}

/// Runs the closed loop and returns one row per grid point, `steps_for + 1`
/// rows in total.
///
/// Each cycle evaluates the reference, the channel estimates and both
/// control laws at the current state, logs the row, then advances plant and
/// estimator networks together under the held commands. The networks see the
/// previous cycle's commands as estimation inputs, matching what they were
/// integrated with; the loop is seeded with hover thrust and the virtual
/// control implied by the initial pitch.
pub fn run_transition(cfg: &ScenarioConfig) -> Result<TrajectoryLog> {
    cfg.validate()?;
    let vp = &cfg.vehicle;
    let mut estimator = match &cfg.weights {
        WeightsSource::Oracle => Estimator::Oracle,
        WeightsSource::Files { u, w } => Estimator::Networks {
            u: Box::new(RnnNetwork::load(u)?),
            w: Box::new(RnnNetwork::load(w)?),
        },
        WeightsSource::Loaded { u, w } => {
            Estimator::Networks { u: Box::new(u.clone()), w: Box::new(w.clone()) }
        }
    };
    if let Estimator::Networks { u, w } = &mut estimator {
        // Start each estimator's prediction at the measured velocity.
        u.set_initial_output(cfg.u0);
        w.set_initial_output(cfg.w0);
    }
    let n_steps = steps_for(cfg.t_end, cfg.dt);
    let mut rows = Vec::with_capacity(n_steps + 1);
    let mut s = LongState { u: cfg.u0, w: cfg.w0 };
    let mut att = AttState { theta: cfg.theta0, q: cfg.q0 };
    let mut prev_thrust = vp.mass * vp.gravity;
    let mut prev_eps = cfg.theta0.cos().clamp(-1.0, 1.0);

    for k in 0..=n_steps {
        let t = k as f64 * cfg.dt;
        let (u_d, w_d, du_d, dw_d, alpha_d) = velocity_reference(t, cfg.mode, &cfg.shaping);
        let table = desired_state(t, cfg.mode, &cfg.shaping, vp, cfg.dt);
        let (h1_hat, h2_hat) = match &estimator {
            Estimator::Oracle => (h1(&s, att.q, vp), h2(&s, att.q, vp)),
            Estimator::Networks { u, w } => (
                u.nonlinear_estimate(Channel::U, prev_thrust, prev_eps, vp)?,
                w.nonlinear_estimate(Channel::W, prev_thrust, prev_eps, vp)?,
            ),
        };
        let refs = DesiredState { u_d, w_d, alpha_d, theta_d: table.theta_d, q_d: table.q_d };
        let cmd = velocity_outer_loop(&s, &refs, (du_d, dw_d), (h1_hat, h2_hat), &cfg.outer, vp);
        // The commanded virtual control becomes the pitch reference of the
        // inner loop; the table still provides the pitch-rate feedforward.
        let (theta_cmd, _) = theta_from_epsilon(cmd.eps);
        let inner_ref = DesiredState { theta_d: theta_cmd, ..refs };
        let tau = attitude_inner_loop(&att, &inner_ref, &cfg.inner);

        rows.push(TrajectoryRow {
            t,
            u: s.u,
            w: s.w,
            theta: att.theta,
            q: att.q,
            thrust: cmd.thrust,
            tau,
            eps: cmd.eps,
            u_d,
            w_d,
            theta_d: theta_cmd,
            e_u: s.u - u_d,
            e_w: s.w - w_d,
            e_theta: att.theta - theta_cmd,
            h1_hat,
            h2_hat,
            eps_saturated: cmd.eps_saturated,
            thrust_saturated: cmd.thrust_saturated,
        });
        if k == n_steps {
            break;
        }

        let state = DVector::from_vec(vec![s.u, s.w, att.theta, att.q]);
        let f = |_t: f64, x: &DVector<f64>| {
            let ls = LongState { u: x[0], w: x[1] };
            let a = AttState { theta: x[2], q: x[3] };
            let (du, dw) = longitudinal_rates(&ls, &a, cmd.thrust, vp);
            let (dth, dq) = attitude_rates(&a, tau, vp);
            DVector::from_vec(vec![du, dw, dth, dq])
        };
        let next = rk4_step(&f, &state, t, cfg.dt)?;
        s = LongState { u: next[0], w: next[1] };
        att = AttState { theta: next[2], q: next[3] };
        if let Estimator::Networks { u, w } = &mut estimator {
            u.step(&DVector::from_element(1, cmd.thrust), cfg.dt)?;
            w.step(&DVector::from_element(1, cmd.eps), cfg.dt)?;
        }
        prev_thrust = cmd.thrust;
        prev_eps = cmd.eps;
    }
    Ok(TrajectoryLog { mode: cfg.mode, dt: cfg.dt, rows })
}
