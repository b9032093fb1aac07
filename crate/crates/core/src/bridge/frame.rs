//! Bridge messages and their framed wire form:
//! `COBS(type ‖ seq ‖ len ‖ body ‖ crc16_le) ‖ 0x00`.

use std::fmt;

use thiserror::Error;

use super::cobs::{self, CobsError};
use super::crc::crc16_ccitt_false;

pub const DELIMITER: u8 = 0x00;
/// Default cap on body length.
pub const MAX_BODY: usize = 64;
const HEADER_LEN: usize = 3;
const CRC_LEN: usize = 2;
/// Largest encoded frame, delimiter included, for a `MAX_BODY` body.
pub const MAX_ENCODED_FRAME: usize = cobs::max_encoded_len(HEADER_LEN + MAX_BODY + CRC_LEN) + 1;

pub const TYPE_HEARTBEAT: u8 = 0x01;
pub const TYPE_SET_TARGET: u8 = 0x02;
pub const TYPE_ACTUATE: u8 = 0x03;
pub const TYPE_TELEMETRY: u8 = 0x04;
pub const TYPE_ACK: u8 = 0x05;
pub const TYPE_NACK: u8 = 0x06;
pub const TYPE_FAULT: u8 = 0x07;

/// Valve command carried by `Actuate`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Action {
    #[default]
    Hold = 0,
    Inflate = 1,
    Vent = 2,
}

impl Action {
    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Action::Hold),
            1 => Some(Action::Inflate),
            2 => Some(Action::Vent),
            _ => None,
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::Hold => "hold",
            Action::Inflate => "inflate",
            Action::Vent => "vent",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        [Action::Hold, Action::Inflate, Action::Vent]
            .into_iter()
            .find(|a| a.name() == name)
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BridgeMessage {
    Heartbeat,
    /// Setpoint in 0.1 kPa units.
    SetTarget {
        channel: u8,
        setpoint: u16,
    },
    Actuate {
        channel: u8,
        action: Action,
    },
    /// Pressure in 0.1 kPa units.
    Telemetry {
        channel: u8,
        pressure: u16,
        pump_on: bool,
        valve_mask: u8,
        seq_echo: u8,
    },
    Ack {
        seq_echo: u8,
    },
    Nack {
        seq_echo: u8,
        code: u8,
    },
    Fault {
        code: u8,
    },
}

impl BridgeMessage {
    pub fn type_code(&self) -> u8 {
        match self {
            BridgeMessage::Heartbeat => TYPE_HEARTBEAT,
            BridgeMessage::SetTarget { .. } => TYPE_SET_TARGET,
            BridgeMessage::Actuate { .. } => TYPE_ACTUATE,
            BridgeMessage::Telemetry { .. } => TYPE_TELEMETRY,
            BridgeMessage::Ack { .. } => TYPE_ACK,
            BridgeMessage::Nack { .. } => TYPE_NACK,
            BridgeMessage::Fault { .. } => TYPE_FAULT,
        }
    }

    pub fn body(&self) -> Vec<u8> {
        match *self {
            BridgeMessage::Heartbeat => Vec::new(),
            BridgeMessage::SetTarget { channel, setpoint } => {
                let [lo, hi] = setpoint.to_le_bytes();
                vec![channel, lo, hi]
            }
            BridgeMessage::Actuate { channel, action } => vec![channel, action.code()],
            BridgeMessage::Telemetry {
                channel,
                pressure,
                pump_on,
                valve_mask,
                seq_echo,
            } => {
                let [lo, hi] = pressure.to_le_bytes();
                vec![channel, lo, hi, u8::from(pump_on), valve_mask, seq_echo]
            }
            BridgeMessage::Ack { seq_echo } => vec![seq_echo],
            BridgeMessage::Nack { seq_echo, code } => vec![seq_echo, code],
            BridgeMessage::Fault { code } => vec![code],
        }
    }

    /// Body length the given type code must carry.
    pub fn body_len_for(type_code: u8) -> Option<usize> {
        match type_code {
            TYPE_HEARTBEAT => Some(0),
            TYPE_SET_TARGET => Some(3),
            TYPE_ACTUATE => Some(2),
            TYPE_TELEMETRY => Some(6),
            TYPE_ACK => Some(1),
            TYPE_NACK => Some(2),
            TYPE_FAULT => Some(1),
            _ => None,
        }
    }

    fn parse(type_code: u8, body: &[u8]) -> Result<Self, FrameError> {
        let expected = Self::body_len_for(type_code).ok_or(FrameError::UnknownType(type_code))?;
        if body.len() != expected {
            return Err(FrameError::LengthMismatch {
                declared: body.len(),
                expected,
            });
        }
        let u16_at = |i: usize| u16::from_le_bytes([body[i], body[i + 1]]);
        Ok(match type_code {
            TYPE_HEARTBEAT => BridgeMessage::Heartbeat,
            TYPE_SET_TARGET => BridgeMessage::SetTarget {
                channel: body[0],
                setpoint: u16_at(1),
            },
            TYPE_ACTUATE => BridgeMessage::Actuate {
                channel: body[0],
                action: Action::from_code(body[1]).ok_or(FrameError::InvalidField {
                    field: "action",
                    value: body[1],
                })?,
            },
            TYPE_TELEMETRY => BridgeMessage::Telemetry {
                channel: body[0],
                pressure: u16_at(1),
                pump_on: match body[3] {
                    0 => false,
                    1 => true,
                    other => {
                        return Err(FrameError::InvalidField {
                            field: "pump_on",
                            value: other,
                        })
                    }
                },
                valve_mask: body[4],
                seq_echo: body[5],
            },
            TYPE_ACK => BridgeMessage::Ack { seq_echo: body[0] },
            TYPE_NACK => BridgeMessage::Nack {
                seq_echo: body[0],
                code: body[1],
            },
            TYPE_FAULT => BridgeMessage::Fault { code: body[0] },
            _ => unreachable!("type code checked above"),
        })
    }
}

impl fmt::Display for BridgeMessage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            BridgeMessage::Heartbeat => write!(f, "Heartbeat"),
            BridgeMessage::SetTarget { channel, setpoint } => write!(
                f,
                "SetTarget channel={channel} setpoint={:.1}kPa",
                f64::from(setpoint) / 10.0
            ),
            BridgeMessage::Actuate { channel, action } => {
                write!(f, "Actuate channel={channel} action={action}")
            }
            BridgeMessage::Telemetry {
                channel,
                pressure,
                pump_on,
                valve_mask,
                seq_echo,
            } => write!(
                f,
                "Telemetry channel={channel} pressure={:.1}kPa pump_on={pump_on} valve_mask=0x{valve_mask:02x} seq_echo={seq_echo}",
                f64::from(pressure) / 10.0
            ),
            BridgeMessage::Ack { seq_echo } => write!(f, "Ack seq_echo={seq_echo}"),
            BridgeMessage::Nack { seq_echo, code } => write!(f, "Nack seq_echo={seq_echo} code={code}"),
            BridgeMessage::Fault { code } => write!(f, "Fault code={code}"),
        }
    }
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum FrameError {
    #[error("body of {len} bytes exceeds the {max}-byte limit")]
    BodyTooLong { len: usize, max: usize },
    #[error("crc mismatch: computed 0x{computed:04x}, received 0x{received:04x}")]
    CrcMismatch { computed: u16, received: u16 },
    #[error("malformed COBS framing: {0}")]
    CobsMalformed(CobsFault),
    #[error("length mismatch: body has {declared} bytes, expected {expected}")]
    LengthMismatch { declared: usize, expected: usize },
    #[error("unknown message type 0x{0:02x}")]
    UnknownType(u8),
    #[error("invalid {field} value {value}")]
    InvalidField { field: &'static str, value: u8 },
}

/// Why a frame failed COBS-level validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CobsFault {
    MissingDelimiter,
    InteriorDelimiter,
    Stuffing(CobsError),
    TooShort(usize),
}

impl fmt::Display for CobsFault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CobsFault::MissingDelimiter => write!(f, "missing trailing delimiter"),
            CobsFault::InteriorDelimiter => write!(f, "delimiter inside frame"),
            CobsFault::Stuffing(e) => write!(f, "{e}"),
            CobsFault::TooShort(n) => write!(f, "decoded payload of {n} bytes is shorter than a header and crc"),
        }
    }
}

/// Frames an arbitrary type code and body. Used directly for tests and
/// tools; [`encode_frame`] is the normal entry point.
pub fn encode_raw(type_code: u8, seq: u8, body: &[u8], max_body: usize) -> Result<Vec<u8>, FrameError> {
    if body.len() > max_body || body.len() > usize::from(u8::MAX) {
        return Err(FrameError::BodyTooLong {
            len: body.len(),
            max: max_body.min(usize::from(u8::MAX)),
        });
    }
    let mut payload = Vec::with_capacity(HEADER_LEN + body.len() + CRC_LEN);
    payload.extend_from_slice(&[type_code, seq, body.len() as u8]);
    payload.extend_from_slice(body);
    let crc = crc16_ccitt_false(&payload);
    payload.extend_from_slice(&crc.to_le_bytes());
    let mut out = cobs::encode(&payload);
    out.push(DELIMITER);
    Ok(out)
}

pub fn encode_frame(msg: &BridgeMessage, seq: u8) -> Result<Vec<u8>, FrameError> {
    encode_raw(msg.type_code(), seq, &msg.body(), MAX_BODY)
}

/// Decodes one complete, delimiter-terminated frame.
pub fn decode_frame(bytes: &[u8]) -> Result<(BridgeMessage, u8), FrameError> {
    let Some((&DELIMITER, block)) = bytes.split_last() else {
        return Err(FrameError::CobsMalformed(CobsFault::MissingDelimiter));
    };
    if block.contains(&DELIMITER) {
        return Err(FrameError::CobsMalformed(CobsFault::InteriorDelimiter));
    }
    decode_block(block)
}

/// Decodes the COBS block of a frame (delimiter already stripped).
fn decode_block(block: &[u8]) -> Result<(BridgeMessage, u8), FrameError> {
    let payload = cobs::decode(block).map_err(|e| FrameError::CobsMalformed(CobsFault::Stuffing(e)))?;
    if payload.len() < HEADER_LEN + CRC_LEN {
        return Err(FrameError::CobsMalformed(CobsFault::TooShort(payload.len())));
    }
    let (data, crc_bytes) = payload.split_at(payload.len() - CRC_LEN);
    let received = u16::from_le_bytes([crc_bytes[0], crc_bytes[1]]);
    let computed = crc16_ccitt_false(data);
    if computed != received {
        return Err(FrameError::CrcMismatch { computed, received });
    }
    let (type_code, seq, len) = (data[0], data[1], usize::from(data[2]));
    let body = &data[HEADER_LEN..];
    if body.len() != len {
        return Err(FrameError::LengthMismatch {
            declared: len,
            expected: body.len(),
        });
    }
    let msg = BridgeMessage::parse(type_code, body)?;
    Ok((msg, seq))
}

/// Counters for every decode outcome on one receiving endpoint.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LinkStats {
    pub frames_ok: u64,
    pub crc_mismatch: u64,
    pub cobs_malformed: u64,
    pub length_mismatch: u64,
    pub unknown_type: u64,
    pub invalid_field: u64,
    pub resyncs: u64,
}

impl LinkStats {
    fn record(&mut self, result: &Result<(BridgeMessage, u8), FrameError>) {
        match result {
            Ok(_) => self.frames_ok += 1,
            Err(FrameError::CrcMismatch { .. }) => self.crc_mismatch += 1,
            Err(FrameError::CobsMalformed(_)) => self.cobs_malformed += 1,
            Err(FrameError::LengthMismatch { .. }) => self.length_mismatch += 1,
            Err(FrameError::UnknownType(_)) => self.unknown_type += 1,
            Err(FrameError::InvalidField { .. }) => self.invalid_field += 1,
            Err(FrameError::BodyTooLong { .. }) => {}
        }
    }

    pub fn errors(&self) -> u64 {
        self.crc_mismatch + self.cobs_malformed + self.length_mismatch + self.unknown_type + self.invalid_field
    }
}

/// Incremental decoder for a byte stream of delimiter-separated frames.
///
/// When a delimited block fails to decode, its suffixes (up to the largest
/// legal frame) are tried from longest to shortest, so a valid frame that
/// was glued to leading line noise is still recovered.
#[derive(Debug, Clone, Default)]
pub struct FrameDecoder {
    buf: Vec<u8>,
    stats: LinkStats,
}

impl FrameDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, bytes: &[u8]) -> Vec<Result<(BridgeMessage, u8), FrameError>> {
        let mut out = Vec::new();
        for &b in bytes {
            if b != DELIMITER {
                self.buf.push(b);
                continue;
            }
            let block = std::mem::take(&mut self.buf);
            let result = self.decode_with_resync(&block);
            self.stats.record(&result);
            out.push(result);
        }
        out
    }

    fn decode_with_resync(&mut self, block: &[u8]) -> Result<(BridgeMessage, u8), FrameError> {
        let first = if block.is_empty() {
            Err(FrameError::CobsMalformed(CobsFault::Stuffing(CobsError::Empty)))
        } else {
            decode_block(block)
        };
        if first.is_ok() {
            return first;
        }
        let min_start = block.len().saturating_sub(MAX_ENCODED_FRAME - 1).max(1);
        for start in min_start..block.len() {
            if let Ok(found) = decode_block(&block[start..]) {
                self.stats.resyncs += 1;
                return Ok(found);
            }
        }
        first
    }

    pub fn stats(&self) -> LinkStats {
        self.stats
    }

    /// Bytes received since the last delimiter.
    pub fn pending(&self) -> usize {
        self.buf.len()
    }
}
