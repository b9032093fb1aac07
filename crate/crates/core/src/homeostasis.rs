//! Per-channel pressure regulation: a deadband controller around a slowly
//! breathing setpoint, with gesture intents layered on top and a latching
//! overpressure fault.

use std::f64::consts::TAU;
use std::fmt;

use thiserror::Error;

use crate::bridge::{Action, BridgeMessage};
use crate::gesture::ActuationIntent;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("non-monotonic time: {now_ms} ms after {previous_ms} ms")]
    NonMonotonicTime { previous_ms: u64, now_ms: u64 },
    #[error("fault clear refused: pressure {pressure:.3} kPa is not below {p_safe:.3} kPa")]
    ClearRefused { pressure: f64, p_safe: f64 },
    #[error("invalid channel config: {0}")]
    InvalidConfig(String),
}

/// Channel tuning. Pressures are gauge kPa.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelConfig {
    pub base_setpoint: f64,
    pub breathing_amplitude: f64,
    pub breathing_period_s: f64,
    pub deadband: f64,
    pub p_max: f64,
    pub p_safe: f64,
    pub min_dwell_ms: u64,
    pub telemetry_stale_ms: u64,
    /// Telemetry age after which the channel vents instead of holding.
    pub stale_vent_ms: u64,
    /// Setpoint offset applied by an inflate burst (and subtracted by a
    /// vent dip), kPa.
    pub burst_offset: f64,
    pub burst_duration_ms: u64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            base_setpoint: 1.5,
            breathing_amplitude: 0.5,
            breathing_period_s: 8.0,
            deadband: 0.3,
            p_max: 5.0,
            p_safe: 1.0,
            min_dwell_ms: 50,
            telemetry_stale_ms: 300,
            stale_vent_ms: 1000,
            burst_offset: 1.0,
            burst_duration_ms: 2000,
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<(), ControlError> {
        let bad = |msg: String| Err(ControlError::InvalidConfig(msg));
        if !(self.deadband > 0.0) {
            return bad(format!("deadband must be positive, got {}", self.deadband));
        }
        if !(self.breathing_period_s > 0.0) {
            return bad("breathing_period_s must be positive".into());
        }
        if self.breathing_amplitude < 0.0 || self.burst_offset < 0.0 {
            return bad("breathing_amplitude and burst_offset must be non-negative".into());
        }
        let peak = self.base_setpoint + self.breathing_amplitude + self.burst_offset;
        if !(peak < self.p_max) {
            return bad(format!(
                "base_setpoint + breathing_amplitude + burst_offset ({peak}) must stay below p_max ({})",
                self.p_max
            ));
        }
        if !(self.p_safe < self.base_setpoint) {
            return bad(format!(
                "p_safe ({}) must be below base_setpoint ({})",
                self.p_safe, self.base_setpoint
            ));
        }
        if self.stale_vent_ms < self.telemetry_stale_ms {
            return bad("stale_vent_ms must not be shorter than telemetry_stale_ms".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    #[default]
    Breathing,
    Direct,
    Faulted,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Breathing => "breathing",
            Mode::Direct => "direct",
            Mode::Faulted => "faulted",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Why the last action was chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Reason {
    #[default]
    Band,
    Overpressure,
    Emergency,
    Latched,
    Stale,
    StaleVent,
    Dwell,
}

impl Reason {
    /// Safety vents bypass dwell suppression.
    pub fn is_safety(self) -> bool {
        matches!(
            self,
            Reason::Overpressure | Reason::Emergency | Reason::Latched | Reason::StaleVent
        )
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ControllerState {
    pub mode: Mode,
    /// Effort level in [0, 1], used in direct mode.
    pub effort: f64,
    pub last_action: Action,
    pub last_transition_ms: Option<u64>,
    pub last_telemetry_ms: u64,
    pub last_step_ms: Option<u64>,
    pub burst_until_ms: Option<u64>,
    pub dip_until_ms: Option<u64>,
    pub last_reason: Reason,
}

impl ControllerState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records that fresh telemetry arrived.
    pub fn note_telemetry(&mut self, now_ms: u64) {
        self.last_telemetry_ms = self.last_telemetry_ms.max(now_ms);
    }

    pub fn is_faulted(&self) -> bool {
        self.mode == Mode::Faulted
    }
}

/// Scheduled setpoint, before burst and dip offsets.
///
/// Breathing: `base + A·sin(2πt/T)`. Direct: `base + effort·(p_max −
/// deadband − base)`. Faulted: zero.
pub fn setpoint(cfg: &ChannelConfig, state: &ControllerState, t_s: f64) -> f64 {
    match state.mode {
        Mode::Breathing => cfg.base_setpoint + cfg.breathing_amplitude * (TAU * t_s / cfg.breathing_period_s).sin(),
        Mode::Direct => cfg.base_setpoint + state.effort * (cfg.p_max - cfg.deadband - cfg.base_setpoint),
        Mode::Faulted => 0.0,
    }
}

/// Setpoint including any active burst or dip.
pub fn effective_setpoint(cfg: &ChannelConfig, state: &ControllerState, now_ms: u64) -> f64 {
    let mut s = setpoint(cfg, state, now_ms as f64 / 1000.0);
    if state.mode == Mode::Faulted {
        return s;
    }
    if state.burst_until_ms.is_some_and(|t| now_ms < t) {
        s += cfg.burst_offset;
    }
    if state.dip_until_ms.is_some_and(|t| now_ms < t) {
        s -= cfg.burst_offset;
    }
    s.max(0.0)
}

/// One control decision.
///
/// Precedence: overpressure and emergency vents latch the fault; a latched
/// channel vents; stale telemetry holds, then vents; otherwise deadband
/// control around the effective setpoint. A change into `Inflate` or a
/// non-safety `Vent` within `min_dwell_ms` of the previous change is
/// replaced by `Hold`.
pub fn control_step(
    cfg: &ChannelConfig,
    state: &mut ControllerState,
    measured_p: f64,
    now_ms: u64,
    intent: ActuationIntent,
) -> Result<Action, ControlError> {
    if let Some(previous_ms) = state.last_step_ms {
        if now_ms < previous_ms {
            return Err(ControlError::NonMonotonicTime { previous_ms, now_ms });
        }
    }
    state.last_step_ms = Some(now_ms);

    if measured_p >= cfg.p_max {
        state.mode = Mode::Faulted;
        return Ok(emit(state, Action::Vent, Reason::Overpressure, now_ms));
    }
    if intent == ActuationIntent::EmergencyVent {
        state.mode = Mode::Faulted;
        return Ok(emit(state, Action::Vent, Reason::Emergency, now_ms));
    }
    if state.mode == Mode::Faulted {
        return Ok(emit(state, Action::Vent, Reason::Latched, now_ms));
    }

    match intent {
        ActuationIntent::ToggleBreathing => {
            state.mode = match state.mode {
                Mode::Breathing => Mode::Direct,
                _ => Mode::Breathing,
            };
        }
        ActuationIntent::SetEffort(level) => state.effort = level.clamp(0.0, 1.0),
        ActuationIntent::InflateBurst => {
            state.burst_until_ms = Some(now_ms + cfg.burst_duration_ms);
            state.dip_until_ms = None;
        }
        ActuationIntent::Vent => {
            state.dip_until_ms = Some(now_ms + cfg.burst_duration_ms);
            state.burst_until_ms = None;
        }
        ActuationIntent::EmergencyVent | ActuationIntent::None => {}
    }

    let age = now_ms.saturating_sub(state.last_telemetry_ms);
    if age > cfg.stale_vent_ms {
        return Ok(emit(state, Action::Vent, Reason::StaleVent, now_ms));
    }
    if age > cfg.telemetry_stale_ms {
        return Ok(emit(state, Action::Hold, Reason::Stale, now_ms));
    }

    let s = effective_setpoint(cfg, state, now_ms);
    let desired = band_action(cfg, state.last_action, measured_p, s);
    let dwelling = state.last_transition_ms.is_some_and(|t| now_ms - t < cfg.min_dwell_ms);
    if desired != Action::Hold && desired != state.last_action && dwelling {
        return Ok(emit(state, Action::Hold, Reason::Dwell, now_ms));
    }
    Ok(emit(state, desired, Reason::Band, now_ms))
}

/// Deadband rule with hysteresis: leaving the band starts a correction,
/// and a correction already under way runs on until the pressure crosses
/// the setpoint.
pub fn band_action(cfg: &ChannelConfig, last_action: Action, measured_p: f64, setpoint: f64) -> Action {
    if measured_p < setpoint - cfg.deadband {
        Action::Inflate
    } else if measured_p > setpoint + cfg.deadband {
        Action::Vent
    } else {
        match last_action {
            Action::Inflate if measured_p < setpoint => Action::Inflate,
            Action::Vent if measured_p > setpoint => Action::Vent,
            _ => Action::Hold,
        }
    }
}

fn emit(state: &mut ControllerState, action: Action, reason: Reason, now_ms: u64) -> Action {
    if action != state.last_action {
        state.last_action = action;
        state.last_transition_ms = Some(now_ms);
    }
    state.last_reason = reason;
    action
}

/// Leaves the fault latch, which is only allowed once the measured
/// pressure is below `p_safe`.
pub fn clear_fault(cfg: &ChannelConfig, state: &mut ControllerState, measured_p: f64) -> Result<(), ControlError> {
    if state.mode != Mode::Faulted {
        return Ok(());
    }
    if !(measured_p < cfg.p_safe) {
        return Err(ControlError::ClearRefused {
            pressure: measured_p,
            p_safe: cfg.p_safe,
        });
    }
    state.mode = Mode::Breathing;
    state.burst_until_ms = None;
    state.dip_until_ms = None;
    Ok(())
}

pub fn to_bridge(action: Action, channel: u8) -> BridgeMessage {
    BridgeMessage::Actuate { channel, action }
}
