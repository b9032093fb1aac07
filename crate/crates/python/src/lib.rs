//! Python bindings for the sculpture control stack.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use strain_core::bridge::{self, Action, BridgeMessage};
use strain_core::gesture::ActuationIntent;
use strain_core::homeostasis::{self, ChannelConfig, ControllerState};
use strain_core::myo;
use strain_core::pipeline::{self, tools, RunConfig};
use strain_core::plant::{self, PlantConfig, PlantState};

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_action(name: &str) -> PyResult<Action> {
    Action::from_name(name).ok_or_else(|| value_error(format!("unknown action {name:?}; use hold, inflate or vent")))
}

/// Two raw EMG samples as lists of eight signed values.
#[pyfunction]
fn decode_emg(data: &[u8]) -> PyResult<(Vec<i8>, Vec<i8>)> {
    let f = myo::decode_emg(data).map_err(value_error)?;
    Ok((f.first.channels.to_vec(), f.second.channels.to_vec()))
}

/// Scaled orientation quaternion, acceleration (g) and angular rate (deg/s).
#[pyfunction]
fn decode_imu(data: &[u8]) -> PyResult<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let f = myo::decode_imu(data).map_err(value_error)?;
    Ok((f.orientation().to_vec(), f.accel().to_vec(), f.gyro().to_vec()))
}

/// Event kind code and pose name.
#[pyfunction]
fn decode_classifier(data: &[u8]) -> PyResult<(u8, String)> {
    let ev = myo::decode_classifier(data).map_err(value_error)?;
    Ok((ev.kind.code(), ev.pose.name().to_owned()))
}

#[pyfunction]
#[pyo3(signature = (action, channel, seq=0))]
fn encode_actuate(action: &str, channel: u8, seq: u8) -> PyResult<Vec<u8>> {
    let msg = BridgeMessage::Actuate {
        channel,
        action: parse_action(action)?,
    };
    bridge::encode_frame(&msg, seq).map_err(value_error)
}

#[pyfunction]
#[pyo3(signature = (seq=0))]
fn encode_heartbeat(seq: u8) -> PyResult<Vec<u8>> {
    bridge::encode_frame(&BridgeMessage::Heartbeat, seq).map_err(value_error)
}

/// Human-readable description of one delimited bridge frame.
#[pyfunction]
fn decode_frame(data: &[u8]) -> PyResult<String> {
    tools::describe_bridge(data).map_err(value_error)
}

#[pyfunction]
fn crc16(data: &[u8]) -> u16 {
    bridge::crc::crc16_ccitt_false(data)
}

#[pyfunction]
fn membrane_dp(stretch: f64, compliance: f64) -> PyResult<f64> {
    plant::membrane_dp(stretch, compliance).map_err(value_error)
}

#[pyfunction]
fn peak_stretch() -> f64 {
    plant::peak_stretch()
}

/// Equilibrium stretch for `n` mol of gas in the default bladder.
#[pyfunction]
fn solve_equilibrium(n: f64) -> PyResult<f64> {
    plant::solve_equilibrium(n, &PlantConfig::default()).map_err(value_error)
}

/// One simulated bladder.
#[pyclass]
struct Plant {
    cfg: PlantConfig,
    state: PlantState,
}

#[pymethods]
impl Plant {
    #[new]
    #[pyo3(signature = (compliance=None, t0=0.0))]
    fn new(compliance: Option<f64>, t0: f64) -> PyResult<Self> {
        let mut cfg = PlantConfig::default();
        if let Some(c) = compliance {
            cfg.compliance = c;
        }
        cfg.validate().map_err(value_error)?;
        let state = PlantState::at_rest(&cfg, t0);
        Ok(Self { cfg, state })
    }

    /// Advances `steps` integration steps with the valves set to `action`.
    #[pyo3(signature = (action, steps=1))]
    fn step(&mut self, action: &str, steps: u64) -> PyResult<()> {
        let action = parse_action(action)?;
        for _ in 0..steps {
            self.state = plant::step(&self.state, &self.cfg, action).map_err(value_error)?;
        }
        Ok(())
    }

    #[getter]
    fn pressure(&self) -> f64 {
        self.state.gauge_pressure(&self.cfg)
    }

    #[getter]
    fn stretch(&self) -> f64 {
        self.state.lambda
    }

    #[getter]
    fn gas(&self) -> f64 {
        self.state.n
    }

    #[getter]
    fn leaked(&self) -> f64 {
        self.state.leaked
    }

    #[getter]
    fn time(&self) -> f64 {
        self.state.time(&self.cfg)
    }
}

/// One channel's homeostasis controller with default tuning.
#[pyclass]
struct Controller {
    cfg: ChannelConfig,
    state: ControllerState,
}

fn parse_intent(name: Option<&str>, effort: f64) -> PyResult<ActuationIntent> {
    Ok(match name.unwrap_or("none") {
        "none" => ActuationIntent::None,
        "set_effort" => ActuationIntent::SetEffort(effort),
        "inflate_burst" => ActuationIntent::InflateBurst,
        "vent" => ActuationIntent::Vent,
        "toggle_breathing" => ActuationIntent::ToggleBreathing,
        "emergency_vent" => ActuationIntent::EmergencyVent,
        other => return Err(value_error(format!("unknown intent {other:?}"))),
    })
}

#[pymethods]
impl Controller {
    #[new]
    fn new() -> Self {
        Self {
            cfg: ChannelConfig::default(),
            state: ControllerState::new(),
        }
    }

    /// Feeds one fresh measurement and returns the chosen action name.
    #[pyo3(signature = (pressure, now_ms, intent=None, effort=0.0))]
    fn step(&mut self, pressure: f64, now_ms: u64, intent: Option<&str>, effort: f64) -> PyResult<&'static str> {
        let intent = parse_intent(intent, effort)?;
        self.state.note_telemetry(now_ms);
        homeostasis::control_step(&self.cfg, &mut self.state, pressure, now_ms, intent)
            .map(Action::name)
            .map_err(value_error)
    }

    fn setpoint(&self, now_ms: u64) -> f64 {
        homeostasis::effective_setpoint(&self.cfg, &self.state, now_ms)
    }

    fn clear_fault(&mut self, pressure: f64) -> PyResult<()> {
        homeostasis::clear_fault(&self.cfg, &mut self.state, pressure).map_err(value_error)
    }

    #[getter]
    fn mode(&self) -> &'static str {
        self.state.mode.name()
    }
}

/// Runs the closed loop. Returns the telemetry log lines (header first)
/// and the exit code the CLI would report.
#[pyfunction]
#[pyo3(signature = (duration_s, config="", trace="", seed=None))]
fn run_simulation(duration_s: f64, config: &str, trace: &str, seed: Option<u64>) -> PyResult<(Vec<String>, i32)> {
    let mut cfg = RunConfig::from_toml_str(config).map_err(value_error)?;
    if seed.is_some() {
        cfg.seed = seed;
    }
    let records = pipeline::parse_trace(trace).map_err(value_error)?;
    let out = pipeline::run_simulation(&cfg, &records, duration_s).map_err(value_error)?;
    let lines = std::iter::once(pipeline::TELEMETRY_HEADER.to_owned())
        .chain(out.telemetry.iter().map(|r| r.to_line()))
        .collect();
    Ok((lines, out.summary.exit_code()))
}

/// Streams `frames` random messages through the framing layer; returns
/// (matched, mismatched).
#[pyfunction]
#[pyo3(signature = (frames, seed=0))]
fn loopback_test(frames: u64, seed: u64) -> (u64, u64) {
    let r = tools::loopback_test(frames, seed);
    (r.matched, r.mismatched)
}

#[pymodule]
fn strain(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(decode_emg, m)?)?;
    m.add_function(wrap_pyfunction!(decode_imu, m)?)?;
    m.add_function(wrap_pyfunction!(decode_classifier, m)?)?;
    m.add_function(wrap_pyfunction!(encode_actuate, m)?)?;
    m.add_function(wrap_pyfunction!(encode_heartbeat, m)?)?;
    m.add_function(wrap_pyfunction!(decode_frame, m)?)?;
    m.add_function(wrap_pyfunction!(crc16, m)?)?;
    m.add_function(wrap_pyfunction!(membrane_dp, m)?)?;
    m.add_function(wrap_pyfunction!(peak_stretch, m)?)?;
    m.add_function(wrap_pyfunction!(solve_equilibrium, m)?)?;
    m.add_function(wrap_pyfunction!(run_simulation, m)?)?;
    m.add_function(wrap_pyfunction!(loopback_test, m)?)?;
    m.add_class::<Plant>()?;
    m.add_class::<Controller>()?;
    Ok(())
}
