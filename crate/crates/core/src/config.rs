//! Flat `key = value` configuration files shared by the command-line tools.
//!
//! Lines starting with `#` and blank lines are skipped; every other line
//! must be `key = value` with a key from the shared key space below. The
//! same file format feeds scenarios, data generation and training, each
//! reading its own subset of keys.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::controller::{InnerGains, OuterGains};
use crate::error::{Error, Result};
use crate::guidance::{ShapingConstants, TransitionMode};
use crate::rnn::Channel;
use crate::sim::{ScenarioConfig, WeightsSource};
use crate::training::ExcitationConfig;
use crate::vehicle::VehicleParams;

/// Every key a configuration file may contain.
pub const KNOWN_KEYS: &[&str] = &[
    "mode", "u0", "w0", "theta0", "q0", "t_end", "dt", "mass", "inertia", "gravity", "k_aero",
    "cd0", "k1", "k2", "k3", "k4", "m_u", "l_u", "m_alpha", "l_alpha", "weights_u", "weights_w",
    "seed", "n_samples", "bounds", "hold_bounds", "epochs", "lr", "clip",
];

/// Parsed but untyped configuration contents.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    entries: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected 'key = value', found '{line}'", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            if !KNOWN_KEYS.contains(&key) {
                return Err(Error::Config(format!("line {}: unknown key '{key}'", lineno + 1)));
            }
            if value.is_empty() {
                return Err(Error::Config(format!("line {}: key '{key}' has no value", lineno + 1)));
            }
            if entries.insert(key.to_string(), value.to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key '{key}'", lineno + 1)));
            }
        }
        Ok(RawConfig { entries })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn get_f64(&self, key: &str) -> Result<Option<f64>> {
        self.entries
            .get(key)
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|e| Error::Config(format!("key '{key}': {e} (value '{v}')")))
            })
            .transpose()
    }

    pub fn get_u64(&self, key: &str) -> Result<Option<u64>> {
        self.entries
            .get(key)
            .map(|v| {
                v.parse::<u64>()
                    .map_err(|e| Error::Config(format!("key '{key}': {e} (value '{v}')")))
            })
            .transpose()
    }

    pub fn get_usize(&self, key: &str) -> Result<Option<usize>> {
        self.entries
            .get(key)
            .map(|v| {
                v.parse::<usize>()
                    .map_err(|e| Error::Config(format!("key '{key}': {e} (value '{v}')")))
            })
            .transpose()
    }

    /// Reads a `min,max` pair.
    pub fn get_pair(&self, key: &str) -> Result<Option<(f64, f64)>> {
        let Some(v) = self.entries.get(key) else { return Ok(None) };
        let (a, b) = v.split_once(',').ok_or_else(|| {
            Error::Config(format!("key '{key}': expected 'min,max', found '{v}'"))
        })?;
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("key '{key}': {e} (value '{v}')")))
        };
        Ok(Some((parse(a)?, parse(b)?)))
    }
}

macro_rules! override_field {
    ($cfg:expr, $key:literal, $target:expr) => {
        if let Some(v) = $cfg.get_f64($key)? {
            $target = v;
        }
    };
}

/// Vehicle parameters with config overrides applied to the defaults.
pub fn vehicle_from(cfg: &RawConfig) -> Result<VehicleParams> {
    let mut vp = VehicleParams::default();
    override_field!(cfg, "mass", vp.mass);
    override_field!(cfg, "inertia", vp.inertia);
    override_field!(cfg, "gravity", vp.gravity);
    override_field!(cfg, "k_aero", vp.aero.k_aero);
    override_field!(cfg, "cd0", vp.aero.cd0);
    vp.validate()?;
    Ok(vp)
}

pub fn outer_gains_from(cfg: &RawConfig) -> Result<OuterGains> {
    let mut gains = OuterGains::default();
    override_field!(cfg, "k1", gains.k1);
    override_field!(cfg, "k2", gains.k2);
    Ok(gains)
}

/// Inner-loop gains. Deliberately not validated here: the gain checker's
/// whole point is reporting on non-stabilizing pairs.
pub fn inner_gains_from(cfg: &RawConfig) -> Result<InnerGains> {
    let mut gains = InnerGains::default();
    override_field!(cfg, "k3", gains.k3);
    override_field!(cfg, "k4", gains.k4);
    Ok(gains)
}

pub fn shaping_from(cfg: &RawConfig) -> Result<ShapingConstants> {
    let mut sc = ShapingConstants::default();
    override_field!(cfg, "m_u", sc.m_u);
    override_field!(cfg, "l_u", sc.l_u);
    override_field!(cfg, "m_alpha", sc.m_alpha);
    override_field!(cfg, "l_alpha", sc.l_alpha);
    sc.validate()?;
    Ok(sc)
}

/// Excitation settings for one channel, starting from that channel's
/// defaults.
pub fn excitation_from(cfg: &RawConfig, channel: Channel) -> Result<ExcitationConfig> {
    let mut ex = ExcitationConfig::default_for(channel);
    if let Some(seed) = cfg.get_u64("seed")? {
        ex.seed = seed;
    }
    if let Some(n) = cfg.get_usize("n_samples")? {
        ex.n_samples = n;
    }
    override_field!(cfg, "dt", ex.dt);
    if let Some(bounds) = cfg.get_pair("bounds")? {
        ex.input_bounds = bounds;
    }
    if let Some(hold) = cfg.get_pair("hold_bounds")? {
        ex.hold_time_bounds = hold;
    }
    ex.validate()?;
    Ok(ex)
}

/// Optimizer settings for offline training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingHyper {
    pub epochs: usize,
    pub learning_rate: f64,
    pub clip: f64,
}

impl Default for TrainingHyper {
    fn default() -> Self {
        TrainingHyper { epochs: 400, learning_rate: 0.05, clip: 1.0 }
    }
}

pub fn training_hyper_from(cfg: &RawConfig) -> Result<TrainingHyper> {
    let mut hyper = TrainingHyper::default();
    if let Some(epochs) = cfg.get_usize("epochs")? {
        hyper.epochs = epochs;
    }
    override_field!(cfg, "lr", hyper.learning_rate);
    override_field!(cfg, "clip", hyper.clip);
    Ok(hyper)
}

/// Builds a full scenario from a config file. The `mode` key is required;
/// everything else falls back to that transition's defaults. Channel weight
/// snapshots come as a pair (`weights_u` and `weights_w`) or not at all, in
/// which case the run uses the oracle estimates.
pub fn scenario_from(cfg: &RawConfig) -> Result<ScenarioConfig> {
    let mode_tag = cfg
        .get_str("mode")
        .ok_or_else(|| Error::Config("scenario needs a 'mode' key ('hc' or 'ch')".into()))?;
    let mode = TransitionMode::parse(mode_tag)?;
    let mut sc = match mode {
        TransitionMode::HoverToCruise => ScenarioConfig::hover_to_cruise(),
        TransitionMode::CruiseToHover => ScenarioConfig::cruise_to_hover(),
    };
    override_field!(cfg, "u0", sc.u0);
    override_field!(cfg, "w0", sc.w0);
    override_field!(cfg, "theta0", sc.theta0);
    override_field!(cfg, "q0", sc.q0);
    override_field!(cfg, "t_end", sc.t_end);
    override_field!(cfg, "dt", sc.dt);
    sc.vehicle = vehicle_from(cfg)?;
    sc.outer = outer_gains_from(cfg)?;
    sc.inner = inner_gains_from(cfg)?;
    sc.shaping = shaping_from(cfg)?;
    sc.weights = match (cfg.get_str("weights_u"), cfg.get_str("weights_w")) {
        (Some(u), Some(w)) => {
            WeightsSource::Files { u: PathBuf::from(u), w: PathBuf::from(w) }
        }
        (None, None) => WeightsSource::Oracle,
        _ => {
            return Err(Error::Config(
                "weights_u and weights_w must be given together".into(),
            ))
        }
    };
    sc.validate()?;
    Ok(sc)
}
