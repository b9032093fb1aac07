//! Link supervision for one endpoint of the bridge.

use std::fmt;

use super::frame::BridgeMessage;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinkConfig {
    pub heartbeat_timeout_ms: u64,
    pub heartbeat_interval_ms: u64,
    pub nack_fault_threshold: u32,
    pub max_body: usize,
    /// Nominal line rate; informational for the loopback transport.
    pub baud: u32,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            heartbeat_timeout_ms: 500,
            heartbeat_interval_ms: 100,
            nack_fault_threshold: 3,
            max_body: 64,
            baud: 115_200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LinkPhase {
    #[default]
    Disconnected,
    Syncing,
    Up,
    Fault,
}

impl LinkPhase {
    pub fn name(self) -> &'static str {
        match self {
            LinkPhase::Disconnected => "disconnected",
            LinkPhase::Syncing => "syncing",
            LinkPhase::Up => "up",
            LinkPhase::Fault => "fault",
        }
    }
}

impl fmt::Display for LinkPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkEvent {
    /// A frame that decoded and passed its CRC.
    Received(BridgeMessage),
    Tick,
}

/// Transition notifications returned by [`LinkState::step`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkAction {
    Connected,
    Lost,
    Faulted,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LinkState {
    pub phase: LinkPhase,
    pub last_rx_ms: Option<u64>,
    pub consecutive_nacks: u32,
}

impl LinkState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn step(&mut self, event: LinkEvent, now_ms: u64, cfg: &LinkConfig) -> Option<LinkAction> {
        if self.phase == LinkPhase::Fault {
            return None;
        }
        match event {
            LinkEvent::Tick => {
                let silent = self
                    .last_rx_ms
                    .is_some_and(|t| now_ms.saturating_sub(t) > cfg.heartbeat_timeout_ms);
                if silent && matches!(self.phase, LinkPhase::Up | LinkPhase::Syncing) {
                    self.phase = LinkPhase::Disconnected;
                    self.consecutive_nacks = 0;
                    return Some(LinkAction::Lost);
                }
                None
            }
            LinkEvent::Received(msg) => {
                self.last_rx_ms = Some(now_ms);
                match msg {
                    BridgeMessage::Nack { .. } => {
                        self.consecutive_nacks += 1;
                        if self.consecutive_nacks >= cfg.nack_fault_threshold {
                            self.phase = LinkPhase::Fault;
                            return Some(LinkAction::Faulted);
                        }
                    }
                    BridgeMessage::Ack { .. } => self.consecutive_nacks = 0,
                    _ => {}
                }
                match (self.phase, msg) {
                    (LinkPhase::Disconnected, _) => {
                        self.phase = LinkPhase::Syncing;
                        None
                    }
                    (LinkPhase::Syncing, BridgeMessage::Heartbeat) => {
                        self.phase = LinkPhase::Up;
                        Some(LinkAction::Connected)
                    }
                    _ => None,
                }
            }
        }
    }

    /// Clears a latched fault back to `Disconnected`.
    pub fn reset(&mut self) {
        *self = Self::default();
    }

    pub fn is_up(&self) -> bool {
        self.phase == LinkPhase::Up
    }
}

/// Schedules outgoing heartbeats at a fixed cadence.
#[derive(Debug, Clone, Default)]
pub struct HeartbeatTimer {
    last_sent_ms: Option<u64>,
}

impl HeartbeatTimer {
    pub fn due(&mut self, now_ms: u64, cfg: &LinkConfig) -> bool {
        let due = self
            .last_sent_ms
            .is_none_or(|t| now_ms.saturating_sub(t) >= cfg.heartbeat_interval_ms);
        if due {
            self.last_sent_ms = Some(now_ms);
        }
        due
    }
}
