//! Wire codec for the armband's sensor notifications and control commands.
//!
//! Only the raw EMG streaming mode is modeled: two consecutive 8-channel
//! samples of signed 8-bit activation per notification, nominally 200 Hz.

use std::fmt;

use thiserror::Error;

/// Number of EMG electrodes on the armband.
pub const EMG_CHANNELS: usize = 8;
/// Length of a raw EMG notification.
pub const EMG_FRAME_LEN: usize = 16;
/// Length of an IMU notification.
pub const IMU_FRAME_LEN: usize = 20;
/// Minimum length of a classifier notification.
pub const CLASSIFIER_MIN_LEN: usize = 3;

pub const ORIENTATION_SCALE: f64 = 16384.0;
pub const ACCEL_SCALE: f64 = 2048.0;
pub const GYRO_SCALE: f64 = 16.0;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum CodecError {
    #[error("wrong length: expected {expected} bytes, got {actual}")]
    WrongLength { expected: usize, actual: usize },
    #[error("wrong length: expected at least {minimum} bytes, got {actual}")]
    TooShort { minimum: usize, actual: usize },
    #[error("invalid command field {field}: {value}")]
    InvalidCommand { field: &'static str, value: u8 },
}

/// One 8-channel EMG sample in raw ADC units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EmgSample {
    pub channels: [i8; EMG_CHANNELS],
}

impl EmgSample {
    pub const fn new(channels: [i8; EMG_CHANNELS]) -> Self {
        Self { channels }
    }
}

/// A raw EMG notification: two consecutive samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EmgFrame {
    pub first: EmgSample,
    pub second: EmgSample,
}

impl EmgFrame {
    pub fn encode(&self) -> [u8; EMG_FRAME_LEN] {
        let mut out = [0u8; EMG_FRAME_LEN];
        for i in 0..EMG_CHANNELS {
            out[i] = self.first.channels[i] as u8;
            out[EMG_CHANNELS + i] = self.second.channels[i] as u8;
        }
        out
    }
}

pub fn decode_emg(bytes: &[u8]) -> Result<EmgFrame, CodecError> {
    let bytes: &[u8; EMG_FRAME_LEN] = bytes.try_into().map_err(|_| CodecError::WrongLength {
        expected: EMG_FRAME_LEN,
        actual: bytes.len(),
    })?;
    let mut frame = EmgFrame::default();
    for i in 0..EMG_CHANNELS {
        frame.first.channels[i] = bytes[i] as i8;
        frame.second.channels[i] = bytes[EMG_CHANNELS + i] as i8;
    }
    Ok(frame)
}

/// An IMU notification. The raw integer fields are kept so that
/// re-encoding is lossless; the scaled accessors divide by the declared
/// scale constants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ImuFrame {
    /// w, x, y, z
    pub orientation_raw: [i16; 4],
    pub accel_raw: [i16; 3],
    pub gyro_raw: [i16; 3],
}

impl ImuFrame {
    /// Builds a frame from the ten raw fields in wire order.
    pub fn from_raw(raw: [i16; 10]) -> Self {
        Self {
            orientation_raw: [raw[0], raw[1], raw[2], raw[3]],
            accel_raw: [raw[4], raw[5], raw[6]],
            gyro_raw: [raw[7], raw[8], raw[9]],
        }
    }

    pub fn raw(&self) -> [i16; 10] {
        let o = self.orientation_raw;
        let a = self.accel_raw;
        let g = self.gyro_raw;
        [o[0], o[1], o[2], o[3], a[0], a[1], a[2], g[0], g[1], g[2]]
    }

    /// Unit quaternion (w, x, y, z).
    pub fn orientation(&self) -> [f64; 4] {
        self.orientation_raw.map(|v| f64::from(v) / ORIENTATION_SCALE)
    }

    /// Acceleration in g.
    pub fn accel(&self) -> [f64; 3] {
        self.accel_raw.map(|v| f64::from(v) / ACCEL_SCALE)
    }

    /// Angular rate in deg/s.
    pub fn gyro(&self) -> [f64; 3] {
        self.gyro_raw.map(|v| f64::from(v) / GYRO_SCALE)
    }

    pub fn quaternion_norm(&self) -> f64 {
        self.orientation().iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn encode(&self) -> [u8; IMU_FRAME_LEN] {
        let mut out = [0u8; IMU_FRAME_LEN];
        for (chunk, v) in out.chunks_exact_mut(2).zip(self.raw()) {
            chunk.copy_from_slice(&v.to_le_bytes());
        }
        out
    }
}

pub fn decode_imu(bytes: &[u8]) -> Result<ImuFrame, CodecError> {
    if bytes.len() != IMU_FRAME_LEN {
        return Err(CodecError::WrongLength {
            expected: IMU_FRAME_LEN,
            actual: bytes.len(),
        });
    }
    let mut raw = [0i16; 10];
    for (dst, chunk) in raw.iter_mut().zip(bytes.chunks_exact(2)) {
        *dst = i16::from_le_bytes([chunk[0], chunk[1]]);
    }
    Ok(ImuFrame::from_raw(raw))
}

/// Hand pose reported by the onboard classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pose {
    Rest,
    Fist,
    WaveIn,
    WaveOut,
    FingersSpread,
    DoubleTap,
    /// Any code outside 0..=5, including the 0xFFFF sentinel. The raw code
    /// is kept so re-encoding is lossless.
    Unknown(u16),
}

impl Pose {
    pub const KNOWN: [Pose; 6] = [
        Pose::Rest,
        Pose::Fist,
        Pose::WaveIn,
        Pose::WaveOut,
        Pose::FingersSpread,
        Pose::DoubleTap,
    ];

    pub fn from_code(code: u16) -> Self {
        match code {
            0 => Pose::Rest,
            1 => Pose::Fist,
            2 => Pose::WaveIn,
            3 => Pose::WaveOut,
            4 => Pose::FingersSpread,
            5 => Pose::DoubleTap,
            other => Pose::Unknown(other),
        }
    }

    pub fn code(self) -> u16 {
        match self {
            Pose::Rest => 0,
            Pose::Fist => 1,
            Pose::WaveIn => 2,
            Pose::WaveOut => 3,
            Pose::FingersSpread => 4,
            Pose::DoubleTap => 5,
            Pose::Unknown(code) => code,
        }
    }

    /// Snake-case name as used in trace files and configuration keys.
    pub fn name(self) -> &'static str {
        match self {
            Pose::Rest => "rest",
            Pose::Fist => "fist",
            Pose::WaveIn => "wave_in",
            Pose::WaveOut => "wave_out",
            Pose::FingersSpread => "fingers_spread",
            Pose::DoubleTap => "double_tap",
            Pose::Unknown(_) => "unknown",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Pose::KNOWN.into_iter().find(|p| p.name() == name)
    }
}

impl fmt::Display for Pose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Pose::Unknown(code) => write!(f, "unknown(0x{code:04x})"),
            other => f.write_str(other.name()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    ArmSynced,
    ArmUnsynced,
    PoseChanged,
    Unlocked,
    Locked,
    /// Event type byte not in the known set; kept verbatim.
    Unknown(u8),
}

impl EventKind {
    pub fn from_code(code: u8) -> Self {
        match code {
            0x01 => EventKind::ArmSynced,
            0x02 => EventKind::ArmUnsynced,
            0x03 => EventKind::PoseChanged,
            0x04 => EventKind::Unlocked,
            0x05 => EventKind::Locked,
            other => EventKind::Unknown(other),
        }
    }

    pub fn code(self) -> u8 {
        match self {
            EventKind::ArmSynced => 0x01,
            EventKind::ArmUnsynced => 0x02,
            EventKind::PoseChanged => 0x03,
            EventKind::Unlocked => 0x04,
            EventKind::Locked => 0x05,
            EventKind::Unknown(code) => code,
        }
    }
}

/// A classifier notification.
///
/// `pose` is only meaningful for [`EventKind::PoseChanged`]; for other kinds
/// it carries whatever the pose field held on the wire so the event
/// re-encodes to the same three bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassifierEvent {
    pub kind: EventKind,
    pub pose: Pose,
}

impl ClassifierEvent {
    pub fn pose_changed(pose: Pose) -> Self {
        Self {
            kind: EventKind::PoseChanged,
            pose,
        }
    }

    /// The pose, if this is a pose-change event.
    pub fn changed_pose(&self) -> Option<Pose> {
        (self.kind == EventKind::PoseChanged).then_some(self.pose)
    }

    pub fn encode(&self) -> [u8; CLASSIFIER_MIN_LEN] {
        let [lo, hi] = self.pose.code().to_le_bytes();
        [self.kind.code(), lo, hi]
    }
}

/// Decodes a classifier notification. Bytes past the pose field are
/// ignored; unknown event types and pose codes decode to `Unknown` variants.
pub fn decode_classifier(bytes: &[u8]) -> Result<ClassifierEvent, CodecError> {
    if bytes.len() < CLASSIFIER_MIN_LEN {
        return Err(CodecError::TooShort {
            minimum: CLASSIFIER_MIN_LEN,
            actual: bytes.len(),
        });
    }
    Ok(ClassifierEvent {
        kind: EventKind::from_code(bytes[0]),
        pose: Pose::from_code(u16::from_le_bytes([bytes[1], bytes[2]])),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmgMode {
    None = 0x00,
    Send = 0x02,
    SendRaw = 0x03,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImuMode {
    None = 0x00,
    SendData = 0x01,
    SendEvents = 0x02,
    SendAll = 0x03,
    SendRaw = 0x04,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassifierMode {
    Disabled = 0x00,
    Enabled = 0x01,
}

impl EmgMode {
    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0x00 => Some(Self::None),
            0x02 => Some(Self::Send),
            0x03 => Some(Self::SendRaw),
            _ => None,
        }
    }
}

impl ImuMode {
    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0x00 => Some(Self::None),
            0x01 => Some(Self::SendData),
            0x02 => Some(Self::SendEvents),
            0x03 => Some(Self::SendAll),
            0x04 => Some(Self::SendRaw),
            _ => None,
        }
    }
}

impl ClassifierMode {
    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0x00 => Some(Self::Disabled),
            0x01 => Some(Self::Enabled),
            _ => None,
        }
    }
}

/// Vibration pattern, 0 (none) to 3 (long).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VibratePattern(u8);

impl VibratePattern {
    pub fn new(pattern: u8) -> Option<Self> {
        (pattern <= 3).then_some(Self(pattern))
    }

    pub fn get(self) -> u8 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MyoCommand {
    SetMode {
        emg: EmgMode,
        imu: ImuMode,
        classifier: ClassifierMode,
    },
    Vibrate(VibratePattern),
    Unlock(u8),
    DeepSleep,
}

const CMD_SET_MODE: u8 = 0x01;
const CMD_VIBRATE: u8 = 0x03;
const CMD_DEEP_SLEEP: u8 = 0x04;
const CMD_UNLOCK: u8 = 0x0A;

/// Serializes a command as `[command, payload_len, payload...]`.
pub fn encode_command(cmd: &MyoCommand) -> Vec<u8> {
    match *cmd {
        MyoCommand::SetMode { emg, imu, classifier } => {
            vec![CMD_SET_MODE, 0x03, emg as u8, imu as u8, classifier as u8]
        }
        MyoCommand::Vibrate(pattern) => vec![CMD_VIBRATE, 0x01, pattern.get()],
        MyoCommand::Unlock(kind) => vec![CMD_UNLOCK, 0x01, kind],
        MyoCommand::DeepSleep => vec![CMD_DEEP_SLEEP, 0x00],
    }
}

/// Inverse of [`encode_command`].
pub fn decode_command(bytes: &[u8]) -> Result<MyoCommand, CodecError> {
    let expect = |len: usize| {
        if bytes.len() == len {
            Ok(())
        } else {
            Err(CodecError::WrongLength {
                expected: len,
                actual: bytes.len(),
            })
        }
    };
    if bytes.len() < 2 {
        return Err(CodecError::TooShort {
            minimum: 2,
            actual: bytes.len(),
        });
    }
    let invalid = |field, value| CodecError::InvalidCommand { field, value };
    match bytes[0] {
        CMD_SET_MODE => {
            expect(5)?;
            Ok(MyoCommand::SetMode {
                emg: EmgMode::from_code(bytes[2]).ok_or(invalid("emg_mode", bytes[2]))?,
                imu: ImuMode::from_code(bytes[3]).ok_or(invalid("imu_mode", bytes[3]))?,
                classifier: ClassifierMode::from_code(bytes[4]).ok_or(invalid("classifier_mode", bytes[4]))?,
            })
        }
        CMD_VIBRATE => {
            expect(3)?;
            VibratePattern::new(bytes[2])
                .map(MyoCommand::Vibrate)
                .ok_or(invalid("pattern", bytes[2]))
        }
        CMD_UNLOCK => {
            expect(3)?;
            Ok(MyoCommand::Unlock(bytes[2]))
        }
        CMD_DEEP_SLEEP => {
            expect(2)?;
            Ok(MyoCommand::DeepSleep)
        }
        other => Err(invalid("command", other)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn emg_zero_frame() {
        let frame = decode_emg(&[0u8; 16]).unwrap();
        assert_eq!(frame, EmgFrame::default());
    }

    #[test]
    fn emg_twos_complement_extremes() {
        let mut bytes = [0x7Fu8; 16];
        bytes[8..].fill(0x80);
        let frame = decode_emg(&bytes).unwrap();
        assert_eq!(frame.first.channels, [127; 8]);
        assert_eq!(frame.second.channels, [-128; 8]);
        assert_eq!(frame.encode(), bytes);
    }

    #[test]
    fn emg_wrong_length() {
        assert_eq!(
            decode_emg(&[0u8; 15]),
            Err(CodecError::WrongLength {
                expected: 16,
                actual: 15
            })
        );
        assert!(decode_emg(&[0u8; 17]).is_err());
    }

    fn imu_bytes(raw: [i16; 10]) -> Vec<u8> {
        raw.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    #[test]
    fn imu_identity_quaternion() {
        let mut raw = [0i16; 10];
        raw[0] = 16384;
        let imu = decode_imu(&imu_bytes(raw)).unwrap();
        assert_eq!(imu.orientation(), [1.0, 0.0, 0.0, 0.0]);
        assert_eq!(imu.accel(), [0.0; 3]);
        assert_eq!(imu.gyro(), [0.0; 3]);
        assert!((imu.quaternion_norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn imu_unit_scales() {
        let mut raw = [0i16; 10];
        raw[6] = 2048;
        raw[7] = -16;
        let imu = decode_imu(&imu_bytes(raw)).unwrap();
        assert_eq!(imu.accel()[2], 1.0);
        assert_eq!(imu.gyro()[0], -1.0);
        assert_eq!(imu.raw(), raw);
    }

    #[test]
    fn imu_wrong_length() {
        assert!(matches!(
            decode_imu(&[0u8; 19]),
            Err(CodecError::WrongLength { expected: 20, .. })
        ));
    }

    #[test]
    fn classifier_examples() {
        assert_eq!(
            decode_classifier(&[0x03, 0x01, 0x00]).unwrap().changed_pose(),
            Some(Pose::Fist)
        );
        let sentinel = decode_classifier(&[0x03, 0xFF, 0xFF]).unwrap();
        assert_eq!(sentinel.changed_pose(), Some(Pose::Unknown(0xFFFF)));
        assert_eq!(
            decode_classifier(&[0x03, 0x00, 0x00]).unwrap().changed_pose(),
            Some(Pose::Rest)
        );
    }

    #[test]
    fn classifier_non_pose_and_unknown_kinds() {
        let ev = decode_classifier(&[0x01, 0x00, 0x00, 0xAA]).unwrap();
        assert_eq!(ev.kind, EventKind::ArmSynced);
        assert_eq!(ev.changed_pose(), None);
        let ev = decode_classifier(&[0x42, 0x09, 0x00]).unwrap();
        assert_eq!(ev.kind, EventKind::Unknown(0x42));
        assert_eq!(ev.encode(), [0x42, 0x09, 0x00]);
        assert!(matches!(
            decode_classifier(&[0x03, 0x01]),
            Err(CodecError::TooShort { .. })
        ));
    }

    #[test]
    fn command_layouts() {
        let set_mode = MyoCommand::SetMode {
            emg: EmgMode::SendRaw,
            imu: ImuMode::SendData,
            classifier: ClassifierMode::Enabled,
        };
        assert_eq!(encode_command(&set_mode), [0x01, 0x03, 0x03, 0x01, 0x01]);
        let vib = MyoCommand::Vibrate(VibratePattern::new(1).unwrap());
        assert_eq!(encode_command(&vib), [0x03, 0x01, 0x01]);
        assert_eq!(encode_command(&MyoCommand::DeepSleep), [0x04, 0x00]);
        assert_eq!(encode_command(&MyoCommand::Unlock(2)), [0x0A, 0x01, 0x02]);
        for cmd in [set_mode, vib, MyoCommand::DeepSleep, MyoCommand::Unlock(2)] {
            let bytes = encode_command(&cmd);
            assert_eq!(bytes.len(), 2 + bytes[1] as usize);
            assert_eq!(decode_command(&bytes).unwrap(), cmd);
        }
    }

    #[test]
    fn vibrate_pattern_range() {
        assert!(VibratePattern::new(3).is_some());
        assert!(VibratePattern::new(4).is_none());
        assert!(decode_command(&[0x03, 0x01, 0x07]).is_err());
        assert!(decode_command(&[0x01, 0x03, 0x01, 0x00, 0x00]).is_err());
    }
}
