//! Continuous-time recurrent network used to estimate the nonlinear
//! acceleration terms, plus the error bookkeeping for the Lyapunov-based
//! online adaptation.
//!
//! The network obeys `dx = -C x + Wx tanh(x) + Wp tanh(p)` with a diagonal
//! positive leak `C` and strictly positive recurrent weights `Wx` (required
//! by the adaptation stability argument). One designated state component is
//! the velocity prediction; the acceleration estimates are recovered by
//! inverting the velocity-channel dynamics around that prediction.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};

use crate::error::{Error, Result};
use crate::vehicle::VehicleParams;

/// Lower bound kept on every recurrent weight by the positivity projection.
pub const PROJECTION_FLOOR: f64 = 1e-4;

/// Which velocity channel a network models.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    /// Forward velocity channel; the external input is the thrust.
    U,
    /// Normal velocity channel; the external input is the virtual control.
    W,
}

impl Channel {
    pub fn tag(&self) -> &'static str {
        match self {
            Channel::U => "u",
            Channel::W => "w",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "u" => Ok(Channel::U),
            "w" => Ok(Channel::W),
            other => Err(Error::Config(format!(
                "unknown channel '{other}' (expected 'u' or 'w')"
            ))),
        }
    }
}

/// Continuous-time recurrent network with one readout state.
///
/// `in_offset`/`in_scale` and `out_offset`/`out_scale` are affine maps
/// fitted from the training data: inputs are shifted and scaled into the
/// responsive range of `tanh`, and the readout state models the centered
/// velocity `(v - out_offset) / out_scale`. Freshly constructed networks
/// carry identity maps.
#[derive(Debug, Clone, PartialEq)]
pub struct RnnNetwork {
    /// Neuron states.
    pub x: DVector<f64>,
    /// Diagonal of the positive leak matrix.
    pub c: DVector<f64>,
    /// Recurrent weights, n x n, strictly positive.
    pub wx: DMatrix<f64>,
    /// Input weights, n x k.
    pub wp: DMatrix<f64>,
    /// Index of the state component that predicts the velocity.
    pub readout_index: usize,
    /// Per-input offsets subtracted before the input activation.
    pub in_offset: DVector<f64>,
    /// Per-input scales dividing the shifted input.
    pub in_scale: DVector<f64>,
    /// Physical velocity represented by a readout value of 0.
    pub out_offset: f64,
    /// Physical velocity span represented by one readout unit.
    pub out_scale: f64,
}

impl RnnNetwork {
    /// Network with unit leak, floor-level recurrent weights and zero input
    /// weights; a neutral starting point that already satisfies the
    /// positivity invariant.
    pub fn new(n: usize, k: usize, readout_index: usize) -> Result<Self> {
        if n == 0 || k == 0 {
            return Err(Error::Config(format!("network dimensions must be positive, got n = {n}, k = {k}")));
        }
        if readout_index >= n {
            return Err(Error::Config(format!(
                "readout index {readout_index} out of range for {n} neurons"
            )));
        }
        Ok(RnnNetwork {
            x: DVector::zeros(n),
            c: DVector::from_element(n, 1.0),
            wx: DMatrix::from_element(n, n, PROJECTION_FLOOR),
            wp: DMatrix::zeros(n, k),
            readout_index,
            in_offset: DVector::zeros(k),
            in_scale: DVector::from_element(k, 1.0),
            out_offset: 0.0,
            out_scale: 1.0,
        })
    }

    /// Seeded random initialization: `Wx` uniform in [0.01, 0.1] (strictly
    /// positive), `Wp` uniform in [-0.1, 0.1].
    pub fn random<R: Rng>(n: usize, k: usize, readout_index: usize, rng: &mut R) -> Result<Self> {
        let mut net = RnnNetwork::new(n, k, readout_index)?;
        for v in net.wx.iter_mut() {
            *v = rng.gen_range(0.01..0.1);
        }
        for v in net.wp.iter_mut() {
            *v = rng.gen_range(-0.1..0.1);
        }
        Ok(net)
    }

    /// [`RnnNetwork::random`] with its own deterministic generator.
    pub fn from_seed(n: usize, k: usize, readout_index: usize, seed: u64) -> Result<Self> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        RnnNetwork::random(n, k, readout_index, &mut rng)
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn k(&self) -> usize {
        self.wp.ncols()
    }

    fn check_input(&self, p: &DVector<f64>) -> Result<()> {
        if p.len() != self.k() {
            return Err(Error::Dimension(format!(
                "input has {} components, network expects {}",
                p.len(),
                self.k()
            )));
        }
        Ok(())
    }

    /// Maps a raw input into the network frame.
    pub fn normalize_input(&self, p: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(p.len(), |i, _| (p[i] - self.in_offset[i]) / self.in_scale[i])
    }

    /// State derivative `-C x + Wx tanh(x) + Wp tanh(p)` for a raw input.
    pub fn rate(&self, p: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_input(p)?;
        let p_net = self.normalize_input(p);
        Ok(rate_with(&self.c, &self.wx, &self.wp, &self.x, &p_net))
    }

    /// Advances the state one RK4 step under a constant raw input; the
    /// weights are untouched.
    pub fn step(&mut self, p: &DVector<f64>, dt: f64) -> Result<()> {
        self.check_input(p)?;
        if !(dt > 0.0) {
            return Err(Error::Config(format!("step size must be positive, got {dt}")));
        }
        let p_net = self.normalize_input(p);
        let f = |x: &DVector<f64>| rate_with(&self.c, &self.wx, &self.wp, x, &p_net);
        let k1 = f(&self.x);
        let k2 = f(&(&self.x + (dt / 2.0) * &k1));
        let k3 = f(&(&self.x + (dt / 2.0) * &k2));
        let k4 = f(&(&self.x + dt * &k3));
        self.x += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if self.x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network state is no longer finite".into()));
        }
        Ok(())
    }

    /// Readout component of the current state (the velocity prediction in
    /// network units).
    pub fn readout(&self) -> f64 {
        self.x[self.readout_index]
    }

    /// Velocity prediction in physical units.
    pub fn predicted_output(&self) -> f64 {
        self.out_offset + self.out_scale * self.readout()
    }

    /// Pins the readout state so the prediction starts at the measured
    /// velocity instead of at `out_offset`.
    pub fn set_initial_output(&mut self, v: f64) {
        self.x[self.readout_index] = (v - self.out_offset) / self.out_scale;
    }

    /// Acceleration estimate recovered from the network's predicted velocity
    /// derivative by inverting the channel dynamics:
    /// `h1_hat = du_pred + g sqrt(1 - eps^2) - T/m` for the u-channel and
    /// `h2_hat = dw_pred - g eps` for the w-channel. The output offset
    /// cancels in the derivative.
    pub fn nonlinear_estimate(
        &self,
        channel: Channel,
        thrust: f64,
        eps: f64,
        vp: &VehicleParams,
    ) -> Result<f64> {
        if eps.abs() > 1.0 {
            return Err(Error::Config(format!(
                "virtual control must be clamped to [-1, 1] before estimation, got {eps}"
            )));
        }
        let input = match channel {
            Channel::U => thrust,
            Channel::W => eps,
        };
        let rate = self.rate(&DVector::from_element(1, input))?;
        let v_dot = self.out_scale * rate[self.readout_index];
        Ok(match channel {
            Channel::U => v_dot + vp.gravity * (1.0 - eps * eps).sqrt() - thrust / vp.mass,
            Channel::W => v_dot - vp.gravity * eps,
        })
    }

    /// Clamps every recurrent weight up to the projection floor.
    pub fn project_wx(&mut self) {
        for v in self.wx.iter_mut() {
            if *v < PROJECTION_FLOOR {
                *v = PROJECTION_FLOOR;
            }
        }
    }

    /// Writes the weights as a deterministic `layer,row,col,value` CSV with
    /// a metadata comment carrying the dimensions and readout index.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        let _ = writeln!(out, "# n={} k={} readout_index={}", self.n(), self.k(), self.readout_index);
        out.push_str("layer,row,col,value\n");
        let mut entry = |layer: &str, row: usize, col: usize, value: f64| {
            let _ = writeln!(out, "{layer},{row},{col},{value:.16e}");
        };
        for i in 0..self.n() {
            entry("C", i, i, self.c[i]);
        }
        for i in 0..self.n() {
            for j in 0..self.n() {
                entry("Wx", i, j, self.wx[(i, j)]);
            }
        }
        for i in 0..self.n() {
            for j in 0..self.k() {
                entry("Wp", i, j, self.wp[(i, j)]);
            }
        }
        for j in 0..self.k() {
            entry("in_offset", 0, j, self.in_offset[j]);
        }
        for j in 0..self.k() {
            entry("in_scale", 0, j, self.in_scale[j]);
        }
        entry("out_offset", 0, 0, self.out_offset);
        entry("out_scale", 0, 0, self.out_scale);
        std::fs::write(path, out)?;
        Ok(())
    }

    /// Loads a snapshot written by [`RnnNetwork::save`].
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let bad = |msg: String| Error::Config(format!("{}: {msg}", path.display()));
        let mut lines = text.lines();
        let meta = lines
            .next()
            .ok_or_else(|| bad("empty weight snapshot".into()))?
            .strip_prefix('#')
            .ok_or_else(|| bad("missing metadata line".into()))?;
        let mut n = None;
        let mut k = None;
        let mut readout = None;
        for field in meta.split_whitespace() {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| bad(format!("malformed metadata field '{field}'")))?;
            let value: usize = value
                .parse()
                .map_err(|_| bad(format!("metadata field '{field}' is not an integer")))?;
            match key {
                "n" => n = Some(value),
                "k" => k = Some(value),
                "readout_index" => readout = Some(value),
                other => return Err(bad(format!("unknown metadata key '{other}'"))),
            }
        }
        let (n, k, readout) = match (n, k, readout) {
            (Some(n), Some(k), Some(r)) => (n, k, r),
            _ => return Err(bad("metadata must define n, k and readout_index".into())),
        };
        match lines.next() {
            Some("layer,row,col,value") => {}
            _ => return Err(bad("missing 'layer,row,col,value' header".into())),
        }

        let mut net = RnnNetwork::new(n, k, readout)?;
        net.wx.fill(0.0);
        for (idx, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != 4 {
                return Err(bad(format!("line {} is not layer,row,col,value", idx + 3)));
            }
            let row: usize = parts[1].parse().map_err(|_| bad(format!("bad row on line {}", idx + 3)))?;
            let col: usize = parts[2].parse().map_err(|_| bad(format!("bad col on line {}", idx + 3)))?;
            let value: f64 =
                parts[3].parse().map_err(|_| bad(format!("bad value on line {}", idx + 3)))?;
            let in_range = |limit_r: usize, limit_c: usize| {
                if row < limit_r && col < limit_c {
                    Ok(())
                } else {
                    Err(bad(format!("index ({row}, {col}) out of range on line {}", idx + 3)))
                }
            };
            match parts[0] {
                "C" => {
                    in_range(n, n)?;
                    net.c[row] = value;
                }
                "Wx" => {
                    in_range(n, n)?;
                    net.wx[(row, col)] = value;
                }
                "Wp" => {
                    in_range(n, k)?;
                    net.wp[(row, col)] = value;
                }
                "in_offset" => {
                    in_range(1, k)?;
                    net.in_offset[col] = value;
                }
                "in_scale" => {
                    in_range(1, k)?;
                    net.in_scale[col] = value;
                }
                "out_offset" => {
                    in_range(1, 1)?;
                    net.out_offset = value;
                }
                "out_scale" => {
                    in_range(1, 1)?;
                    net.out_scale = value;
                }
                other => return Err(bad(format!("unknown layer '{other}'"))),
            }
        }
        if net.c.iter().any(|&v| v <= 0.0) {
            return Err(bad("leak diagonal must be strictly positive".into()));
        }
        if net.wx.iter().any(|&v| v <= 0.0) {
            return Err(bad("recurrent weights must be strictly positive".into()));
        }
        Ok(net)
    }
}

/// Shared rate evaluation on explicit pieces; `p_net` is already in the
/// network frame.
pub(crate) fn rate_with(
    c: &DVector<f64>,
    wx: &DMatrix<f64>,
    wp: &DMatrix<f64>,
    x: &DVector<f64>,
    p_net: &DVector<f64>,
) -> DVector<f64> {
    let mut rate = wx * x.map(f64::tanh) + wp * p_net.map(f64::tanh);
    for i in 0..x.len() {
        rate[i] -= c[i] * x[i];
    }
    rate
}

/// Estimation error split into the output error and the weight error rows.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimationError {
    /// Output error (reference minus prediction).
    pub x_tilde: f64,
    /// Error of the adapted recurrent weight row.
    pub wx_tilde: DVector<f64>,
    /// Error of the adapted input weight row.
    pub wp_tilde: DVector<f64>,
}

/// Lyapunov candidate `V = x_tilde^2/2 + |wx_tilde|^2/2 + |wp_tilde|^2/2`.
pub fn lyapunov_value(err: &EstimationError) -> f64 {
    0.5 * (err.x_tilde * err.x_tilde + err.wx_tilde.norm_squared() + err.wp_tilde.norm_squared())
}

/// One sample of the Lyapunov candidate along an adaptation run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovSample {
    pub t: f64,
    pub v: f64,
}

/// Gradient-free adaptation laws for the readout weight row:
/// `dwx = x_tilde tanh(x_hat)` and `dwp = x_tilde tanh(p)`.
///
/// `p_net` must already be in the network frame (input normalization
/// applied), matching what the running network feeds its activation.
pub fn weight_update_rates(
    x_tilde: f64,
    x_hat: &DVector<f64>,
    p_net: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>) {
    (x_tilde * x_hat.map(f64::tanh), x_tilde * p_net.map(f64::tanh))
}
