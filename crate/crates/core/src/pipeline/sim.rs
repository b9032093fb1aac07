//! Fixed-tick closed loop: trace → gesture engine → controllers → bridge
//! (loopback) → device → plants → sensor → bridge → controllers.

use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::RunConfig;
use super::telemetry::TelemetryRecord;
use super::trace::{TraceKind, TraceRecord};
use super::PipelineError;
use crate::bridge::{
    encode_frame, Action, BridgeMessage, FrameDecoder, HeartbeatTimer, LinkEvent, LinkPhase, LinkState, LinkStats,
};
use crate::gesture::GestureEngine;
use crate::homeostasis::{
    clear_fault, control_step, effective_setpoint, to_bridge, ControlError, ControllerState, Mode,
};
use crate::myo::{ClassifierEvent, ImuFrame};
use crate::plant::{read_sensor, Plant, PlantState};

const NACK_BAD_CHANNEL: u8 = 0x01;

/// Converts gauge kPa to the bridge's 0.1 kPa units.
pub fn kpa_to_wire(p: f64) -> u16 {
    (p * 10.0).round().clamp(0.0, f64::from(u16::MAX)) as u16
}

pub fn wire_to_kpa(units: u16) -> f64 {
    f64::from(units) / 10.0
}

/// Host side: gesture interpretation plus one controller per channel.
#[derive(Debug)]
struct Host {
    engine: GestureEngine,
    controllers: Vec<ControllerState>,
    measured: Vec<f64>,
    link: LinkState,
    heartbeat: HeartbeatTimer,
    decoder: FrameDecoder,
    seq: u8,
}

/// Actuation-controller side: valves, plants and the pressure sensor.
#[derive(Debug)]
struct Device {
    plants: Vec<Plant>,
    actions: Vec<Action>,
    readings: Vec<f64>,
    link: LinkState,
    heartbeat: HeartbeatTimer,
    decoder: FrameDecoder,
    seq: u8,
    last_rx_seq: u8,
}

fn next_seq(seq: &mut u8) -> u8 {
    let s = *seq;
    *seq = seq.wrapping_add(1);
    s
}

fn push_frame(out: &mut Vec<u8>, msg: &BridgeMessage, seq: &mut u8) {
    let frame = encode_frame(msg, next_seq(seq)).expect("fixed-size bodies fit the frame limit");
    out.extend_from_slice(&frame);
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunSummary {
    pub ticks: u64,
    pub records_consumed: usize,
    pub records_in_window: usize,
    /// Elapsed plant time per channel, s.
    pub plant_time_s: Vec<f64>,
    pub faulted_channels: Vec<usize>,
    pub final_link: LinkPhase,
    pub actuate_sent: u64,
    /// Actuate frames the device decoded differently from what was sent.
    pub actuate_mismatches: u64,
    pub host_stats: LinkStats,
    pub device_stats: LinkStats,
    pub last_imu: Option<ImuFrame>,
}

impl RunSummary {
    /// 0 clean, 1 fault latched at the end of the run.
    pub fn exit_code(&self) -> i32 {
        if self.faulted_channels.is_empty() && self.final_link != LinkPhase::Fault {
            0
        } else {
            1
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub telemetry: Vec<TelemetryRecord>,
    pub summary: RunSummary,
}

/// A running closed-loop simulation, advanced one control tick at a time.
#[derive(Debug)]
pub struct Simulation {
    cfg: RunConfig,
    host: Host,
    device: Device,
    rng: ChaCha8Rng,
    tick: u64,
    plant_step: u64,
    in_flight: VecDeque<BridgeMessage>,
    summary: RunSummary,
}

impl Simulation {
    pub fn new(cfg: RunConfig, seed: u64) -> Result<Self, PipelineError> {
        cfg.validate()?;
        let n = cfg.channels;
        let plants = (0..n)
            .map(|_| Plant::new(cfg.plant.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            host: Host {
                engine: GestureEngine::new(cfg.envelope.clone(), cfg.mapping.clone(), cfg.source),
                controllers: vec![ControllerState::new(); n],
                measured: vec![0.0; n],
                link: LinkState::new(),
                heartbeat: HeartbeatTimer::default(),
                decoder: FrameDecoder::new(),
                seq: 0,
            },
            device: Device {
                plants,
                actions: vec![Action::Hold; n],
                readings: vec![0.0; n],
                link: LinkState::new(),
                heartbeat: HeartbeatTimer::default(),
                decoder: FrameDecoder::new(),
                seq: 0,
                last_rx_seq: 0,
            },
            rng: ChaCha8Rng::seed_from_u64(seed),
            tick: 0,
            plant_step: 0,
            in_flight: VecDeque::new(),
            summary: RunSummary::default(),
            cfg,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    /// Time of the next control tick, ms.
    pub fn now_ms(&self) -> u64 {
        self.tick * self.cfg.tick_ms()
    }

    pub fn plant(&self, channel: usize) -> &Plant {
        &self.device.plants[channel]
    }

    pub fn controller(&self, channel: usize) -> &ControllerState {
        &self.host.controllers[channel]
    }

    /// Pressure the host last received for `channel`, kPa.
    pub fn measured(&self, channel: usize) -> f64 {
        self.host.measured[channel]
    }

    pub fn host_link(&self) -> &LinkState {
        &self.host.link
    }

    /// Delivers one trace record to the gesture engine.
    pub fn deliver(&mut self, record: &TraceRecord) -> Result<(), PipelineError> {
        match &record.kind {
            TraceKind::Emg(sample) => {
                self.host.engine.push_emg(*sample);
            }
            TraceKind::Pose(pose) => {
                self.host
                    .engine
                    .push_classifier(&ClassifierEvent::pose_changed(*pose), record.t_ms)?;
            }
            TraceKind::Imu(frame) => self.summary.last_imu = Some(*frame),
        }
        self.summary.records_consumed += 1;
        Ok(())
    }

    /// Forces a channel's bladder to the given gauge pressure and has the
    /// device report it immediately, as if the sensor had just sampled it.
    pub fn inject_pressure(&mut self, channel: usize, pressure: f64) -> Result<(), PipelineError> {
        let plant = &mut self.device.plants[channel];
        let prev = &plant.state;
        let mut state = PlantState::at_gauge_pressure(&plant.cfg, pressure, prev.t0)?;
        state.steps = prev.steps;
        state.leaked = prev.leaked;
        plant.state = state;
        let reading = read_sensor(plant.gauge_pressure(), &self.cfg.sensor, &mut self.rng);
        self.device.readings[channel] = reading;
        let mut bytes = Vec::new();
        self.device_telemetry(channel, &mut bytes);
        self.host_receive(&bytes, self.now_ms());
        Ok(())
    }

    /// Requests that a faulted channel return to breathing.
    pub fn clear_fault(&mut self, channel: usize) -> Result<(), ControlError> {
        clear_fault(
            &self.cfg.channel[channel],
            &mut self.host.controllers[channel],
            self.host.measured[channel],
        )
    }

    /// Runs one control tick and returns one telemetry record per channel.
    pub fn step(&mut self) -> Result<Vec<TelemetryRecord>, PipelineError> {
        let now = self.now_ms();
        let tick_ms = self.cfg.tick_ms();
        let intent = self.host.engine.next_intent();

        self.host.link.step(LinkEvent::Tick, now, &self.cfg.link);
        let mut records = Vec::with_capacity(self.cfg.channels);
        let mut to_device = Vec::new();
        if self.host.heartbeat.due(now, &self.cfg.link) {
            push_frame(&mut to_device, &BridgeMessage::Heartbeat, &mut self.host.seq);
        }
        for ch in 0..self.cfg.channels {
            let ccfg = &self.cfg.channel[ch];
            let state = &mut self.host.controllers[ch];
            let measured = self.host.measured[ch];
            let action = control_step(ccfg, state, measured, now, intent)?;
            records.push(TelemetryRecord {
                t_ms: now,
                channel: ch as u8,
                pressure_kpa: measured,
                setpoint_kpa: effective_setpoint(ccfg, state, now),
                action,
                mode: state.mode,
                link_state: self.host.link.phase,
            });
            let msg = to_bridge(action, ch as u8);
            self.in_flight.push_back(msg);
            self.summary.actuate_sent += 1;
            push_frame(&mut to_device, &msg, &mut self.host.seq);
        }

        let mut to_host = self.device_receive(&to_device, now);
        self.device.link.step(LinkEvent::Tick, now, &self.cfg.link);
        if matches!(self.device.link.phase, LinkPhase::Disconnected | LinkPhase::Fault)
            && self.device.link.last_rx_ms.is_some()
        {
            self.device.actions.fill(Action::Hold);
        }

        let steps_per_sample = self.cfg.steps_per_sample();
        for _ in 0..self.cfg.steps_per_tick() {
            for (plant, action) in self.device.plants.iter_mut().zip(&self.device.actions) {
                plant.step(*action)?;
            }
            self.plant_step += 1;
            if self.plant_step.is_multiple_of(steps_per_sample) {
                for (plant, reading) in self.device.plants.iter().zip(self.device.readings.iter_mut()) {
                    *reading = read_sensor(plant.gauge_pressure(), &self.cfg.sensor, &mut self.rng);
                }
            }
        }

        let arrival = now + tick_ms;
        for ch in 0..self.cfg.channels {
            self.device_telemetry(ch, &mut to_host);
        }
        if self.device.heartbeat.due(arrival, &self.cfg.link) {
            push_frame(&mut to_host, &BridgeMessage::Heartbeat, &mut self.device.seq);
        }
        self.host_receive(&to_host, arrival);

        self.tick += 1;
        self.summary.ticks = self.tick;
        Ok(records)
    }

    fn device_telemetry(&mut self, ch: usize, out: &mut Vec<u8>) {
        let action = self.device.actions[ch];
        let msg = BridgeMessage::Telemetry {
            channel: ch as u8,
            pressure: kpa_to_wire(self.device.readings[ch]),
            pump_on: action == Action::Inflate,
            valve_mask: u8::from(action == Action::Vent),
            seq_echo: self.device.last_rx_seq,
        };
        push_frame(out, &msg, &mut self.device.seq);
    }

    fn device_receive(&mut self, bytes: &[u8], now: u64) -> Vec<u8> {
        let mut replies = Vec::new();
        for result in self.device.decoder.push(bytes) {
            let Ok((msg, seq)) = result else { continue };
            self.device.link.step(LinkEvent::Received(msg), now, &self.cfg.link);
            self.device.last_rx_seq = seq;
            if let BridgeMessage::Actuate { channel, action } = msg {
                if self.in_flight.pop_front() != Some(msg) {
                    self.summary.actuate_mismatches += 1;
                }
                let reply = match self.device.actions.get_mut(usize::from(channel)) {
                    Some(slot) => {
                        *slot = action;
                        BridgeMessage::Ack { seq_echo: seq }
                    }
                    None => BridgeMessage::Nack {
                        seq_echo: seq,
                        code: NACK_BAD_CHANNEL,
                    },
                };
                push_frame(&mut replies, &reply, &mut self.device.seq);
            }
        }
        replies
    }

    fn host_receive(&mut self, bytes: &[u8], now: u64) {
        for result in self.host.decoder.push(bytes) {
            let Ok((msg, _seq)) = result else { continue };
            self.host.link.step(LinkEvent::Received(msg), now, &self.cfg.link);
            if let BridgeMessage::Telemetry { channel, pressure, .. } = msg {
                let ch = usize::from(channel);
                if ch < self.cfg.channels {
                    self.host.measured[ch] = wire_to_kpa(pressure);
                    self.host.controllers[ch].note_telemetry(now);
                }
            }
        }
    }

    pub fn finish(mut self) -> RunSummary {
        self.summary.plant_time_s = self.device.plants.iter().map(|p| p.state.elapsed(&p.cfg)).collect();
        self.summary.faulted_channels = self
            .host
            .controllers
            .iter()
            .enumerate()
            .filter(|(_, c)| c.mode == Mode::Faulted)
            .map(|(i, _)| i)
            .collect();
        self.summary.final_link = self.host.link.phase;
        self.summary.host_stats = self.host.decoder.stats();
        self.summary.device_stats = self.device.decoder.stats();
        self.summary
    }

    /// Current mean EMG activation.
    pub fn activation_mean(&self) -> f64 {
        self.host.engine.activation().mean
    }
}

/// Runs the closed loop for `duration_s` over the given trace. Telemetry is
/// a pure function of `(cfg, trace, seed)`.
pub fn run_simulation(cfg: &RunConfig, trace: &[TraceRecord], duration_s: f64) -> Result<SimOutput, PipelineError> {
    let seed = cfg
        .seed
        .ok_or_else(|| PipelineError::ConfigInvalid("a seed is required for simulate runs".into()))?;
    if !(duration_s.is_finite() && duration_s >= 0.0) {
        return Err(PipelineError::ConfigInvalid(format!("invalid duration {duration_s}")));
    }
    for pair in trace.windows(2) {
        if pair[1].t_ms < pair[0].t_ms {
            return Err(PipelineError::NonMonotonicTime {
                line: 0,
                t_ms: pair[1].t_ms,
                previous_ms: pair[0].t_ms,
            });
        }
    }
    let ticks = (duration_s * f64::from(cfg.tick_hz)).round() as u64;
    let tick_ms = cfg.tick_ms();
    let mut sim = Simulation::new(cfg.clone(), seed)?;
    let mut telemetry = Vec::with_capacity(ticks as usize * cfg.channels);
    let mut next = 0;
    let last_tick_ms = ticks.saturating_sub(1) * tick_ms;
    let in_window = if ticks == 0 {
        0
    } else {
        trace.iter().filter(|r| r.t_ms <= last_tick_ms).count()
    };
    for k in 0..ticks {
        let now = k * tick_ms;
        while next < trace.len() && trace[next].t_ms <= now {
            sim.deliver(&trace[next])?;
            next += 1;
        }
        telemetry.extend(sim.step()?);
    }
    let mut summary = sim.finish();
    summary.records_in_window = in_window;
    Ok(SimOutput { telemetry, summary })
}
