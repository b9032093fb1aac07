//! Framed, checksummed serial protocol between the gesture host and the
//! actuation controller.

pub mod cobs;
pub mod crc;
mod frame;
mod link;

pub use frame::{
    decode_frame, encode_frame, encode_raw, Action, BridgeMessage, CobsFault, FrameDecoder, FrameError, LinkStats,
    DELIMITER, MAX_BODY, MAX_ENCODED_FRAME,
};
pub use link::{HeartbeatTimer, LinkAction, LinkConfig, LinkEvent, LinkPhase, LinkState};
