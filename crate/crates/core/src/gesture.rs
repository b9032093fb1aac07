//! Gesture interpretation: sliding-window RMS effort envelope, a hysteresis
//! effort detector, a pose debouncer and the pose → intent mapping.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::myo::{ClassifierEvent, EmgSample, Pose, EMG_CHANNELS};

/// Full-scale magnitude of a raw EMG value.
const EMG_FULL_SCALE: f64 = 127.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GestureError {
    #[error("non-monotonic time: {now_ms} ms after {previous_ms} ms")]
    NonMonotonicTime { previous_ms: u64, now_ms: u64 },
    #[error("invalid envelope config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeConfig {
    /// RMS window length in samples (40 at 200 Hz is 200 ms).
    pub window_samples: usize,
    pub theta_on: f64,
    pub theta_off: f64,
    pub debounce_count: u32,
    pub cooldown_ms: u64,
}

impl Default for EnvelopeConfig {
    fn default() -> Self {
        Self {
            window_samples: 40,
            theta_on: 0.15,
            theta_off: 0.08,
            debounce_count: 3,
            cooldown_ms: 500,
        }
    }
}

impl EnvelopeConfig {
    pub fn validate(&self) -> Result<(), GestureError> {
        let bad = |msg: String| Err(GestureError::InvalidConfig(msg));
        if self.window_samples == 0 {
            return bad("window_samples must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.theta_on) || !(0.0..=1.0).contains(&self.theta_off) {
            return bad("thresholds must lie in [0, 1]".into());
        }
        if self.theta_off >= self.theta_on {
            return bad(format!(
                "theta_off ({}) must be below theta_on ({})",
                self.theta_off, self.theta_on
            ));
        }
        if self.debounce_count == 0 {
            return bad("debounce_count must be at least 1".into());
        }
        Ok(())
    }
}

/// Normalized muscle activation over the current window.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Activation {
    pub per_channel: [f64; EMG_CHANNELS],
    pub mean: f64,
}

/// Sliding-window RMS over the last `window_samples` EMG samples.
///
/// The window starts zero-filled, so during warm-up the envelope is the RMS
/// of the samples seen so far padded with zeros.
#[derive(Debug, Clone)]
pub struct EnvelopeTracker {
    window: VecDeque<EmgSample>,
    capacity: usize,
    sum_sq: [u64; EMG_CHANNELS],
    current: Activation,
}

impl EnvelopeTracker {
    pub fn new(window_samples: usize) -> Self {
        let capacity = window_samples.max(1);
        Self {
            window: VecDeque::with_capacity(capacity),
            capacity,
            sum_sq: [0; EMG_CHANNELS],
            current: Activation::default(),
        }
    }

    pub fn push_sample(&mut self, sample: EmgSample) -> Activation {
        if self.window.len() == self.capacity {
            if let Some(old) = self.window.pop_front() {
                for (acc, v) in self.sum_sq.iter_mut().zip(old.channels) {
                    *acc -= square(v);
                }
            }
        }
        for (acc, v) in self.sum_sq.iter_mut().zip(sample.channels) {
            *acc += square(v);
        }
        self.window.push_back(sample);

        let n = self.capacity as f64;
        let per_channel = self
            .sum_sq
            .map(|s| ((s as f64 / n).sqrt() / EMG_FULL_SCALE).clamp(0.0, 1.0));
        let mean = per_channel.iter().sum::<f64>() / EMG_CHANNELS as f64;
        self.current = Activation { per_channel, mean };
        self.current
    }

    pub fn activation(&self) -> Activation {
        self.current
    }

    pub fn samples_seen(&self) -> usize {
        self.window.len()
    }
}

fn square(v: i8) -> u64 {
    let v = i64::from(v);
    (v * v) as u64
}

/// Hysteresis effort detector: switches on above `theta_on`, off below
/// `theta_off`, and otherwise keeps the previous state.
pub fn classify_effort(a: &Activation, cfg: &EnvelopeConfig, prev_active: bool) -> bool {
    if a.mean > cfg.theta_on {
        true
    } else if a.mean < cfg.theta_off {
        false
    } else {
        prev_active
    }
}

/// Emits a pose after `debounce_count` identical consecutive pose-change
/// events, at most once per cooldown window. Rest and unknown poses never
/// emit; they only break a streak.
#[derive(Debug, Clone, Default)]
pub struct PoseDebouncer {
    candidate: Option<Pose>,
    streak: u32,
    last_event_ms: Option<u64>,
    last_emit_ms: Option<u64>,
}

impl PoseDebouncer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(
        &mut self,
        ev: &ClassifierEvent,
        now_ms: u64,
        cfg: &EnvelopeConfig,
    ) -> Result<Option<Pose>, GestureError> {
        if let Some(previous_ms) = self.last_event_ms {
            if now_ms < previous_ms {
                return Err(GestureError::NonMonotonicTime { previous_ms, now_ms });
            }
        }
        self.last_event_ms = Some(now_ms);

        let Some(pose) = ev.changed_pose() else {
            return Ok(None);
        };
        if self.candidate == Some(pose) {
            self.streak += 1;
        } else {
            self.candidate = Some(pose);
            self.streak = 1;
        }
        if self.streak < cfg.debounce_count {
            return Ok(None);
        }
        // a completed streak starts over whether or not it emits
        self.streak = 0;
        if matches!(pose, Pose::Rest | Pose::Unknown(_)) {
            return Ok(None);
        }
        let cooled = self.last_emit_ms.is_none_or(|t| now_ms - t >= cfg.cooldown_ms);
        if !cooled {
            return Ok(None);
        }
        self.last_emit_ms = Some(now_ms);
        Ok(Some(pose))
    }

    /// Records an emission that bypassed the debouncer so the cooldown
    /// still applies to what follows.
    pub fn note_emission(&mut self, now_ms: u64) {
        self.last_emit_ms = Some(now_ms);
        self.candidate = None;
        self.streak = 0;
    }
}

/// What the controller should do this tick.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum ActuationIntent {
    SetEffort(f64),
    InflateBurst,
    Vent,
    ToggleBreathing,
    EmergencyVent,
    #[default]
    None,
}

/// Mapping-table entry; `SetEffort` takes its level from the envelope.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntentKind {
    SetEffort,
    InflateBurst,
    Vent,
    ToggleBreathing,
    EmergencyVent,
    None,
}

impl IntentKind {
    pub fn name(self) -> &'static str {
        match self {
            IntentKind::SetEffort => "set_effort",
            IntentKind::InflateBurst => "inflate_burst",
            IntentKind::Vent => "vent",
            IntentKind::ToggleBreathing => "toggle_breathing",
            IntentKind::EmergencyVent => "emergency_vent",
            IntentKind::None => "none",
        }
    }
}

impl FromStr for IntentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            IntentKind::SetEffort,
            IntentKind::InflateBurst,
            IntentKind::Vent,
            IntentKind::ToggleBreathing,
            IntentKind::EmergencyVent,
            IntentKind::None,
        ]
        .into_iter()
        .find(|k| k.name() == s)
        .ok_or_else(|| format!("unknown intent '{s}'"))
    }
}

impl fmt::Display for IntentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Pose → intent table covering the six known poses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntentMap {
    entries: [IntentKind; 6],
}

impl Default for IntentMap {
    fn default() -> Self {
        Self {
            entries: [
                IntentKind::None,            // rest
                IntentKind::InflateBurst,    // fist
                IntentKind::SetEffort,       // wave_in
                IntentKind::Vent,            // wave_out
                IntentKind::EmergencyVent,   // fingers_spread
                IntentKind::ToggleBreathing, // double_tap
            ],
        }
    }
}

impl IntentMap {
    pub fn get(&self, pose: Pose) -> IntentKind {
        match pose {
            Pose::Unknown(_) => IntentKind::None,
            known => self.entries[known.code() as usize],
        }
    }

    /// Overrides one entry. Unknown poses cannot be mapped.
    pub fn set(&mut self, pose: Pose, kind: IntentKind) -> bool {
        match pose {
            Pose::Unknown(_) => false,
            known => {
                self.entries[known.code() as usize] = kind;
                true
            }
        }
    }
}

/// Input to [`map_to_intent`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GestureInput {
    Pose(Pose),
    Effort(f64),
}

pub fn map_to_intent(input: GestureInput, mapping: &IntentMap, envelope_mean: f64) -> ActuationIntent {
    match input {
        GestureInput::Effort(level) => ActuationIntent::SetEffort(level.clamp(0.0, 1.0)),
        GestureInput::Pose(pose) => match mapping.get(pose) {
            IntentKind::SetEffort => ActuationIntent::SetEffort(envelope_mean.clamp(0.0, 1.0)),
            IntentKind::InflateBurst => ActuationIntent::InflateBurst,
            IntentKind::Vent => ActuationIntent::Vent,
            IntentKind::ToggleBreathing => ActuationIntent::ToggleBreathing,
            IntentKind::EmergencyVent => ActuationIntent::EmergencyVent,
            IntentKind::None => ActuationIntent::None,
        },
    }
}

/// Which armband path drives the controller.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ControlSource {
    Pose,
    Effort,
    #[default]
    Both,
}

impl ControlSource {
    fn uses_pose(self) -> bool {
        matches!(self, ControlSource::Pose | ControlSource::Both)
    }

    fn uses_effort(self) -> bool {
        matches!(self, ControlSource::Effort | ControlSource::Both)
    }
}

impl FromStr for ControlSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pose" => Ok(ControlSource::Pose),
            "effort" => Ok(ControlSource::Effort),
            "both" => Ok(ControlSource::Both),
            other => Err(format!("unknown gesture source '{other}'")),
        }
    }
}

/// Engine state owned by the tick loop.
#[derive(Debug, Clone)]
pub struct GestureEngine {
    cfg: EnvelopeConfig,
    mapping: IntentMap,
    source: ControlSource,
    tracker: EnvelopeTracker,
    debouncer: PoseDebouncer,
    effort_active: bool,
    emg_since_tick: bool,
    pending: Option<ActuationIntent>,
}

impl GestureEngine {
    pub fn new(cfg: EnvelopeConfig, mapping: IntentMap, source: ControlSource) -> Self {
        Self {
            tracker: EnvelopeTracker::new(cfg.window_samples),
            cfg,
            mapping,
            source,
            debouncer: PoseDebouncer::new(),
            effort_active: false,
            emg_since_tick: false,
            pending: None,
        }
    }

    pub fn push_emg(&mut self, sample: EmgSample) -> Activation {
        let a = self.tracker.push_sample(sample);
        self.effort_active = classify_effort(&a, &self.cfg, self.effort_active);
        self.emg_since_tick = true;
        a
    }

    /// Feeds a classifier event. A pose mapped to an emergency vent skips
    /// the debounce streak and cooldown; everything else is debounced.
    pub fn push_classifier(&mut self, ev: &ClassifierEvent, now_ms: u64) -> Result<Option<Pose>, GestureError> {
        if !self.source.uses_pose() {
            return Ok(None);
        }
        let emergency = ev
            .changed_pose()
            .is_some_and(|p| self.mapping.get(p) == IntentKind::EmergencyVent);
        let emitted = if emergency {
            self.debouncer.push(ev, now_ms, &self.cfg)?;
            self.debouncer.note_emission(now_ms);
            ev.changed_pose()
        } else {
            self.debouncer.push(ev, now_ms, &self.cfg)?
        };
        if let Some(pose) = emitted {
            let intent = map_to_intent(GestureInput::Pose(pose), &self.mapping, self.tracker.activation().mean);
            let keep_pending = matches!(self.pending, Some(ActuationIntent::EmergencyVent));
            if !keep_pending && intent != ActuationIntent::None {
                self.pending = Some(intent);
            }
        }
        Ok(emitted)
    }

    /// Returns this tick's intent. Pose intents take precedence; otherwise,
    /// if EMG arrived since the last tick and the effort path is enabled,
    /// the envelope mean is forwarded while the effort detector is active
    /// and zero while it is not.
    pub fn next_intent(&mut self) -> ActuationIntent {
        let fresh_emg = std::mem::take(&mut self.emg_since_tick);
        if let Some(intent) = self.pending.take() {
            return intent;
        }
        if fresh_emg && self.source.uses_effort() {
            let level = if self.effort_active {
                self.tracker.activation().mean
            } else {
                0.0
            };
            return map_to_intent(GestureInput::Effort(level), &self.mapping, level);
        }
        ActuationIntent::None
    }

    pub fn activation(&self) -> Activation {
        self.tracker.activation()
    }

    pub fn effort_active(&self) -> bool {
        self.effort_active
    }

    pub fn config(&self) -> &EnvelopeConfig {
        &self.cfg
    }
}
