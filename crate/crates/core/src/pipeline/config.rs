//! Run configuration and its flat key file.
//!
//! The file is TOML; nested tables are flattened into dotted keys, so
//! `[plant]\ndt = 0.001` and `plant.dt = 0.001` are the same setting. Every
//! key must be known. Channel keys written as `channel.<field>` apply to all
//! channels; `channel.<index>.<field>` overrides a single channel.

use std::collections::BTreeMap;
use std::path::Path;

use toml::Value;

use super::PipelineError;
use crate::bridge::LinkConfig;
use crate::gesture::{ControlSource, EnvelopeConfig, IntentKind, IntentMap};
use crate::homeostasis::ChannelConfig;
use crate::myo::Pose;
use crate::plant::{PlantConfig, SensorModel};

pub const MAX_CHANNELS: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub channels: usize,
    pub tick_hz: u32,
    pub seed: Option<u64>,
    pub source: ControlSource,
    pub envelope: EnvelopeConfig,
    pub mapping: IntentMap,
    /// One entry per channel.
    pub channel: Vec<ChannelConfig>,
    pub plant: PlantConfig,
    pub sensor: SensorModel,
    pub link: LinkConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let channels = 2;
        Self {
            channels,
            tick_hz: 50,
            seed: None,
            source: ControlSource::default(),
            envelope: EnvelopeConfig::default(),
            mapping: IntentMap::default(),
            channel: vec![ChannelConfig::default(); channels],
            plant: PlantConfig::default(),
            sensor: SensorModel::default(),
            link: LinkConfig::default(),
        }
    }
}

/// Every accepted key with its meaning, in documentation order.
pub const KEYS: &[(&str, &str)] = &[
    ("channels", "independently regulated bladders, 1..=4"),
    ("tick_hz", "control rate; 1000 must be divisible by it"),
    (
        "seed",
        "seed for all stochastic elements; a quoted decimal string reaches the full u64 range",
    ),
    ("gesture.source", "pose | effort | both"),
    ("envelope.window_samples", "RMS window, samples"),
    ("envelope.theta_on", "effort activation threshold"),
    ("envelope.theta_off", "effort release threshold"),
    ("envelope.debounce_count", "identical pose events before emitting"),
    ("envelope.cooldown_ms", "minimum gap between emitted poses"),
    (
        "mapping.<pose>",
        "intent for rest, fist, wave_in, wave_out, fingers_spread, double_tap",
    ),
    ("channel.base_setpoint", "kPa"),
    ("channel.breathing_amplitude", "kPa"),
    ("channel.breathing_period_s", "s"),
    ("channel.deadband", "kPa"),
    ("channel.p_max", "overpressure fault threshold, kPa"),
    ("channel.p_safe", "fault may be cleared below this, kPa"),
    ("channel.min_dwell_ms", "minimum time between actuator changes"),
    ("channel.telemetry_stale_ms", "hold after this telemetry age"),
    ("channel.stale_vent_ms", "vent after this telemetry age"),
    ("channel.burst_offset", "setpoint offset of burst and dip intents, kPa"),
    ("channel.burst_duration_ms", "duration of burst and dip intents"),
    ("plant.v0", "unstretched volume, m³"),
    ("plant.compliance", "membrane coefficient, kPa"),
    ("plant.p_atm", "absolute, kPa"),
    ("plant.temperature", "K"),
    ("plant.p_stall", "pump stall gauge pressure, kPa"),
    ("plant.g_pump", "pump conductance, mol/(s·Pa)"),
    ("plant.g_vent", "vent conductance, mol/(s·Pa)"),
    ("plant.g_leak0", "initial leak conductance, mol/(s·Pa)"),
    ("plant.tau_decay", "leak growth time constant, s"),
    ("plant.dt", "integration step, s"),
    ("plant.gas_constant", "J/(mol·K)"),
    ("sensor.full_scale", "kPa"),
    ("sensor.bits", "8..=16"),
    ("sensor.noise_sigma", "kPa"),
    ("sensor.rate_hz", "sample rate"),
    ("bridge.heartbeat_timeout_ms", "link drops after this silence"),
    ("bridge.heartbeat_interval_ms", "heartbeat cadence"),
    ("bridge.nack_fault_threshold", "consecutive NACKs that latch a fault"),
    ("bridge.max_body", "frame body cap, bytes"),
    ("bridge.baud", "nominal line rate"),
];

fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, Value>) -> Result<(), PipelineError> {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            Value::Table(inner) => flatten(&key, inner, out)?,
            Value::Array(_) | Value::Datetime(_) => {
                return Err(PipelineError::ConfigInvalid(format!("{key}: expected a scalar value")))
            }
            scalar => {
                out.insert(key, scalar.clone());
            }
        }
    }
    Ok(())
}

fn as_f64(key: &str, v: &Value) -> Result<f64, PipelineError> {
    match v {
        Value::Float(f) => Ok(*f),
        Value::Integer(i) => Ok(*i as f64),
        _ => Err(PipelineError::ConfigInvalid(format!("{key}: expected a number"))),
    }
}

fn as_u64(key: &str, v: &Value) -> Result<u64, PipelineError> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as u64),
        _ => Err(PipelineError::ConfigInvalid(format!(
            "{key}: expected a non-negative integer"
        ))),
    }
}

/// TOML integers stop at `i64::MAX`, so a seed may also be a decimal string.
fn as_seed(key: &str, v: &Value) -> Result<u64, PipelineError> {
    match v {
        Value::String(s) => s
            .parse()
            .map_err(|_| PipelineError::ConfigInvalid(format!("{key}: expected an unsigned 64-bit integer"))),
        _ => as_u64(key, v),
    }
}

fn as_str<'a>(key: &str, v: &'a Value) -> Result<&'a str, PipelineError> {
    v.as_str()
        .ok_or_else(|| PipelineError::ConfigInvalid(format!("{key}: expected a string")))
}

fn narrow<T: TryFrom<u64>>(key: &str, v: u64) -> Result<T, PipelineError> {
    T::try_from(v).map_err(|_| PipelineError::ConfigInvalid(format!("{key}: value {v} out of range")))
}

fn set_channel_field(cfg: &mut ChannelConfig, field: &str, key: &str, v: &Value) -> Result<(), PipelineError> {
    match field {
        "base_setpoint" => cfg.base_setpoint = as_f64(key, v)?,
        "breathing_amplitude" => cfg.breathing_amplitude = as_f64(key, v)?,
        "breathing_period_s" => cfg.breathing_period_s = as_f64(key, v)?,
        "deadband" => cfg.deadband = as_f64(key, v)?,
        "p_max" => cfg.p_max = as_f64(key, v)?,
        "p_safe" => cfg.p_safe = as_f64(key, v)?,
        "min_dwell_ms" => cfg.min_dwell_ms = as_u64(key, v)?,
        "telemetry_stale_ms" => cfg.telemetry_stale_ms = as_u64(key, v)?,
        "stale_vent_ms" => cfg.stale_vent_ms = as_u64(key, v)?,
        "burst_offset" => cfg.burst_offset = as_f64(key, v)?,
        "burst_duration_ms" => cfg.burst_duration_ms = as_u64(key, v)?,
        _ => return Err(PipelineError::ConfigInvalid(format!("unknown key '{key}'"))),
    }
    Ok(())
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, PipelineError> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| PipelineError::ConfigInvalid(e.message().to_string()))?;
        let mut flat = BTreeMap::new();
        flatten("", &table, &mut flat)?;

        let mut cfg = RunConfig::default();
        if let Some(v) = flat.remove("channels") {
            let n: usize = narrow("channels", as_u64("channels", &v)?)?;
            if !(1..=MAX_CHANNELS).contains(&n) {
                return Err(PipelineError::ConfigInvalid(format!(
                    "channels must be 1..={MAX_CHANNELS}, got {n}"
                )));
            }
            cfg.channels = n;
            cfg.channel = vec![ChannelConfig::default(); n];
        }

        // shared channel keys first so per-index keys can override them
        let mut per_channel = Vec::new();
        for (key, v) in &flat {
            let Some(rest) = key.strip_prefix("channel.") else {
                cfg.apply(key, v)?;
                continue;
            };
            match rest.split_once('.') {
                None => {
                    for ch in &mut cfg.channel {
                        set_channel_field(ch, rest, key, v)?;
                    }
                }
                Some((index, field)) => {
                    let index: usize = index
                        .parse()
                        .map_err(|_| PipelineError::ConfigInvalid(format!("unknown key '{key}'")))?;
                    if index >= cfg.channels {
                        return Err(PipelineError::ConfigInvalid(format!(
                            "{key}: channel index {index} but only {} channels configured",
                            cfg.channels
                        )));
                    }
                    per_channel.push((index, field, key, v));
                }
            }
        }
        for (index, field, key, v) in per_channel {
            set_channel_field(&mut cfg.channel[index], field, key, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::ConfigInvalid(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    fn apply(&mut self, key: &str, v: &Value) -> Result<(), PipelineError> {
        if let Some(pose_name) = key.strip_prefix("mapping.") {
            let pose = Pose::from_name(pose_name)
                .ok_or_else(|| PipelineError::ConfigInvalid(format!("unknown key '{key}'")))?;
            let kind: IntentKind = as_str(key, v)?
                .parse()
                .map_err(|e| PipelineError::ConfigInvalid(format!("{key}: {e}")))?;
            self.mapping.set(pose, kind);
            return Ok(());
        }
        match key {
            "tick_hz" => self.tick_hz = narrow(key, as_u64(key, v)?)?,
            "seed" => self.seed = Some(as_seed(key, v)?),
            "gesture.source" => {
                self.source = as_str(key, v)?
                    .parse()
                    .map_err(|e| PipelineError::ConfigInvalid(format!("{key}: {e}")))?
            }
            "envelope.window_samples" => self.envelope.window_samples = narrow(key, as_u64(key, v)?)?,
            "envelope.theta_on" => self.envelope.theta_on = as_f64(key, v)?,
            "envelope.theta_off" => self.envelope.theta_off = as_f64(key, v)?,
            "envelope.debounce_count" => self.envelope.debounce_count = narrow(key, as_u64(key, v)?)?,
            "envelope.cooldown_ms" => self.envelope.cooldown_ms = as_u64(key, v)?,
            "plant.v0" => self.plant.v0 = as_f64(key, v)?,
            "plant.compliance" => self.plant.compliance = as_f64(key, v)?,
            "plant.p_atm" => self.plant.p_atm = as_f64(key, v)?,
            "plant.temperature" => self.plant.temperature = as_f64(key, v)?,
            "plant.p_stall" => self.plant.p_stall = as_f64(key, v)?,
            "plant.g_pump" => self.plant.g_pump = as_f64(key, v)?,
            "plant.g_vent" => self.plant.g_vent = as_f64(key, v)?,
            "plant.g_leak0" => self.plant.g_leak0 = as_f64(key, v)?,
            "plant.tau_decay" => self.plant.tau_decay = as_f64(key, v)?,
            "plant.dt" => self.plant.dt = as_f64(key, v)?,
            "plant.gas_constant" => self.plant.gas_constant = as_f64(key, v)?,
            "sensor.full_scale" => self.sensor.full_scale = as_f64(key, v)?,
            "sensor.bits" => self.sensor.bits = narrow(key, as_u64(key, v)?)?,
            "sensor.noise_sigma" => self.sensor.noise_sigma = as_f64(key, v)?,
            "sensor.rate_hz" => self.sensor.rate_hz = as_f64(key, v)?,
            "bridge.heartbeat_timeout_ms" => self.link.heartbeat_timeout_ms = as_u64(key, v)?,
            "bridge.heartbeat_interval_ms" => self.link.heartbeat_interval_ms = as_u64(key, v)?,
            "bridge.nack_fault_threshold" => self.link.nack_fault_threshold = narrow(key, as_u64(key, v)?)?,
            "bridge.max_body" => self.link.max_body = narrow(key, as_u64(key, v)?)?,
            "bridge.baud" => self.link.baud = narrow(key, as_u64(key, v)?)?,
            _ => return Err(PipelineError::ConfigInvalid(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    pub fn tick_ms(&self) -> u64 {
        1000 / u64::from(self.tick_hz)
    }

    /// Plant integration steps per control tick.
    pub fn steps_per_tick(&self) -> u64 {
        (self.tick_ms() as f64 / 1000.0 / self.plant.dt).round() as u64
    }

    /// Plant integration steps per sensor sample.
    pub fn steps_per_sample(&self) -> u64 {
        (1.0 / (self.sensor.rate_hz * self.plant.dt)).round().max(1.0) as u64
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let invalid = |m: String| PipelineError::ConfigInvalid(m);
        if !(1..=MAX_CHANNELS).contains(&self.channels) || self.channel.len() != self.channels {
            return Err(invalid(format!("channels must be 1..={MAX_CHANNELS}")));
        }
        if self.tick_hz == 0 || 1000 % self.tick_hz != 0 {
            return Err(invalid(format!("tick_hz {} must divide 1000", self.tick_hz)));
        }
        self.envelope.validate().map_err(|e| invalid(e.to_string()))?;
        for (i, ch) in self.channel.iter().enumerate() {
            ch.validate().map_err(|e| invalid(format!("channel {i}: {e}")))?;
        }
        self.plant.validate().map_err(|e| invalid(e.to_string()))?;
        self.sensor.validate().map_err(|e| invalid(e.to_string()))?;
        let tick_steps = self.tick_ms() as f64 / 1000.0 / self.plant.dt;
        if self.steps_per_tick() == 0 || (tick_steps - tick_steps.round()).abs() > 1e-6 {
            return Err(invalid(format!(
                "tick period {} ms is not a whole number of plant steps",
                self.tick_ms()
            )));
        }
        let sample_steps = 1.0 / (self.sensor.rate_hz * self.plant.dt);
        if (sample_steps - sample_steps.round()).abs() > 1e-6 {
            return Err(invalid("sensor period is not a whole number of plant steps".into()));
        }
        if self.link.heartbeat_interval_ms == 0 || self.link.nack_fault_threshold == 0 {
            return Err(invalid(
                "bridge heartbeat interval and NACK threshold must be positive".into(),
            ));
        }
        Ok(())
    }
}
