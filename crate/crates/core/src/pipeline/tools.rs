//! Helpers behind the inspection and bench subcommands.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::PipelineError;
use crate::bridge::{decode_frame, encode_frame, Action, BridgeMessage, FrameDecoder, FrameError, DELIMITER};
use crate::myo::{self, CodecError, EventKind};
use crate::plant::{read_sensor, Plant, PlantConfig, SensorModel};

#[derive(Debug, thiserror::Error)]
pub enum InspectError {
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Frame(#[from] FrameError),
}

fn fmt_channels(ch: &[i8]) -> String {
    ch.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", ")
}

pub fn describe_emg(bytes: &[u8]) -> Result<String, InspectError> {
    let frame = myo::decode_emg(bytes)?;
    Ok(format!(
        "first:  [{}]\nsecond: [{}]",
        fmt_channels(&frame.first.channels),
        fmt_channels(&frame.second.channels)
    ))
}

pub fn describe_imu(bytes: &[u8]) -> Result<String, InspectError> {
    let imu = myo::decode_imu(bytes)?;
    let [w, x, y, z] = imu.orientation();
    let [ax, ay, az] = imu.accel();
    let [gx, gy, gz] = imu.gyro();
    Ok(format!(
        "orientation: w={w:.5} x={x:.5} y={y:.5} z={z:.5}\naccel_g:     x={ax:.4} y={ay:.4} z={az:.4}\ngyro_dps:    x={gx:.4} y={gy:.4} z={gz:.4}"
    ))
}

pub fn describe_classifier(bytes: &[u8]) -> Result<String, InspectError> {
    let ev = myo::decode_classifier(bytes)?;
    Ok(match ev.kind {
        EventKind::PoseChanged => format!("PoseChanged pose={}", ev.pose),
        EventKind::Unknown(code) => format!("UnknownEvent type=0x{code:02x}"),
        other => format!("{other:?}"),
    })
}

/// Decodes one bridge frame; the trailing delimiter may be omitted.
pub fn describe_bridge(bytes: &[u8]) -> Result<String, InspectError> {
    let mut owned = bytes.to_vec();
    if owned.last() != Some(&DELIMITER) {
        owned.push(DELIMITER);
    }
    let (msg, seq) = decode_frame(&owned)?;
    Ok(format!("{msg} seq={seq}"))
}

pub fn random_message<R: Rng + ?Sized>(rng: &mut R) -> BridgeMessage {
    let action = |r: &mut R| Action::from_code(r.random_range(0..3)).expect("in range");
    match rng.random_range(0..7) {
        0 => BridgeMessage::Heartbeat,
        1 => BridgeMessage::SetTarget {
            channel: rng.random(),
            setpoint: rng.random(),
        },
        2 => BridgeMessage::Actuate {
            channel: rng.random(),
            action: action(rng),
        },
        3 => BridgeMessage::Telemetry {
            channel: rng.random(),
            pressure: rng.random(),
            pump_on: rng.random(),
            valve_mask: rng.random(),
            seq_echo: rng.random(),
        },
        4 => BridgeMessage::Ack { seq_echo: rng.random() },
        5 => BridgeMessage::Nack {
            seq_echo: rng.random(),
            code: rng.random(),
        },
        _ => BridgeMessage::Fault { code: rng.random() },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LoopbackReport {
    pub frames: u64,
    pub bytes: u64,
    pub matched: u64,
    pub mismatched: u64,
    pub max_frame_len: usize,
}

/// Streams `frames` random messages through encode → byte stream →
/// incremental decode and checks each comes back unchanged.
pub fn loopback_test(frames: u64, seed: u64) -> LoopbackReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut decoder = FrameDecoder::new();
    let mut report = LoopbackReport {
        frames,
        ..LoopbackReport::default()
    };
    for i in 0..frames {
        let msg = random_message(&mut rng);
        let seq = i as u8;
        let bytes = encode_frame(&msg, seq).expect("fixed-size bodies fit");
        report.bytes += bytes.len() as u64;
        report.max_frame_len = report.max_frame_len.max(bytes.len());
        // split at a random point to exercise partial delivery
        let cut = rng.random_range(0..=bytes.len());
        let mut out = decoder.push(&bytes[..cut]);
        out.extend(decoder.push(&bytes[cut..]));
        if out.len() == 1 && out[0] == Ok((msg, seq)) {
            report.matched += 1;
        } else {
            report.mismatched += 1;
        }
    }
    report
}

/// One segment of a step-response schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleSegment {
    pub duration_ms: u64,
    pub action: Action,
}

/// Parses `duration_ms,action` lines (`hold`, `inflate`, `vent`); blank and
/// `#` lines are skipped.
pub fn parse_schedule(text: &str) -> Result<Vec<ScheduleSegment>, PipelineError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let malformed = |reason: String| PipelineError::ScheduleMalformed { line, reason };
        let Some((dur, action)) = trimmed.split_once(',') else {
            return Err(malformed("expected duration_ms,action".into()));
        };
        let duration_ms = dur
            .trim()
            .parse()
            .map_err(|_| malformed(format!("bad duration '{}'", dur.trim())))?;
        let action =
            Action::from_name(action.trim()).ok_or_else(|| malformed(format!("unknown action '{}'", action.trim())))?;
        out.push(ScheduleSegment { duration_ms, action });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResponseRow {
    pub t_s: f64,
    pub action: Action,
    pub lambda: f64,
    pub pressure_kpa: f64,
    pub reading_kpa: f64,
}

pub const STEP_RESPONSE_HEADER: &str = "t_s,action,lambda,p_gauge_kpa,reading_kpa";

impl StepResponseRow {
    pub fn to_line(&self) -> String {
        format!(
            "{:.3},{},{:.6},{:.4},{:.4}",
            self.t_s, self.action, self.lambda, self.pressure_kpa, self.reading_kpa
        )
    }
}

/// Drives a single plant through the schedule from rest, emitting one row
/// per sensor sample (plus the initial state).
pub fn step_response(
    plant: &PlantConfig,
    sensor: &SensorModel,
    schedule: &[ScheduleSegment],
    seed: u64,
) -> Result<Vec<StepResponseRow>, PipelineError> {
    sensor.validate()?;
    let mut p = Plant::new(plant.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let steps_per_sample = (1.0 / (sensor.rate_hz * plant.dt)).round().max(1.0) as u64;
    let mut rows = Vec::new();
    let row = |p: &Plant, action, rng: &mut ChaCha8Rng| StepResponseRow {
        t_s: p.state.elapsed(&p.cfg),
        action,
        lambda: p.state.lambda,
        pressure_kpa: p.gauge_pressure(),
        reading_kpa: read_sensor(p.gauge_pressure(), sensor, rng),
    };
    let first = schedule.first().map_or(Action::Hold, |s| s.action);
    rows.push(row(&p, first, &mut rng));
    for seg in schedule {
        let steps = (seg.duration_ms as f64 / 1000.0 / plant.dt).round() as u64;
        for _ in 0..steps {
            p.step(seg.action)?;
            if p.state.steps % steps_per_sample == 0 {
                rows.push(row(&p, seg.action, &mut rng));
            }
        }
    }
    Ok(rows)
}

pub fn render_step_response(rows: &[StepResponseRow]) -> String {
    let mut out = String::with_capacity(rows.len() * 40);
    let _ = writeln!(out, "{STEP_RESPONSE_HEADER}");
    for r in rows {
        let _ = writeln!(out, "{}", r.to_line());
    }
    out
}
