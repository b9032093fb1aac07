//! Telemetry log records: `t_ms,channel,pressure_kpa,setpoint_kpa,action,mode,link_state`.

use std::io::{self, Write};

use crate::bridge::{Action, LinkPhase};
use crate::homeostasis::Mode;

pub const TELEMETRY_HEADER: &str = "t_ms,channel,pressure_kpa,setpoint_kpa,action,mode,link_state";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TelemetryRecord {
    pub t_ms: u64,
    pub channel: u8,
    /// Pressure the controller acted on, gauge kPa.
    pub pressure_kpa: f64,
    pub setpoint_kpa: f64,
    pub action: Action,
    pub mode: Mode,
    pub link_state: LinkPhase,
}

impl TelemetryRecord {
    pub fn to_line(&self) -> String {
        format!(
            "{},{},{:.3},{:.3},{},{},{}",
            self.t_ms, self.channel, self.pressure_kpa, self.setpoint_kpa, self.action, self.mode, self.link_state
        )
    }
}

pub fn write_telemetry<W: Write>(mut out: W, records: &[TelemetryRecord]) -> io::Result<()> {
    writeln!(out, "{TELEMETRY_HEADER}")?;
    for r in records {
        writeln!(out, "{}", r.to_line())?;
    }
    out.flush()
}
