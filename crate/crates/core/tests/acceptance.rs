//! Acceptance suite. Runs every criterion in sequence, prints one
//! PASS/FAIL line each and exits non-zero if any fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use strain_core::bridge::{decode_frame, encode_frame, Action, FrameDecoder, FrameError};
use strain_core::homeostasis::Mode;
use strain_core::myo::{
    decode_classifier, decode_emg, decode_imu, ClassifierEvent, EmgFrame, EmgSample, EventKind, ImuFrame, Pose,
};
use strain_core::pipeline::tools::random_message;
use strain_core::pipeline::{
    parse_trace, run_simulation, write_telemetry, RunConfig, Simulation, TelemetryRecord, TraceKind, TraceRecord,
};
use strain_core::plant::{self, membrane_dp, solve_equilibrium, PlantConfig, PlantState};

const ROUND_TRIPS: usize = 100_000;
const ROUND_TRIP_BUDGET: Duration = Duration::from_secs(10);

const CORPUS_FRAMES: usize = 1000;
const BIT_FLIPS: usize = 1_000_000;
const BIT_FLIP_BUDGET: Duration = Duration::from_secs(60);

const RESYNC_CASES: usize = 10_000;

const CONSERVATION_STEPS: usize = 100_000;
const CONSERVATION_DRIFT: f64 = 1e-9;
const RESIDUAL_TOL: f64 = 1e-10;

const GRID_POINTS: usize = 1_000_000;
const ORACLE_CASES: usize = 100;
const ORACLE_TOL: f64 = 1e-6;

const PEAK_STRETCH_TOL: f64 = 1e-3;
const PEAK_VALUE_TOL: f64 = 1e-6;

const CONVERGENCE_RUN_S: u64 = 60;
const BAND_ENTRY_LIMIT_MS: u64 = 10_000;
const MIN_OCCUPANCY: f64 = 0.95;
const CONVERGENCE_BUDGET: Duration = Duration::from_secs(30);

const LATCH_SCENARIOS: usize = 100;

const AGED_T0_S: f64 = 3600.0;
const SCHEDULE_S: f64 = 600.0;

struct Outcome {
    pass: bool,
    detail: String,
}

type Criterion = (&'static str, fn() -> Outcome);

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn random_emg(rng: &mut ChaCha8Rng) -> EmgFrame {
    EmgFrame {
        first: EmgSample { channels: rng.random() },
        second: EmgSample { channels: rng.random() },
    }
}

fn codec_round_trips() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let start = Instant::now();
    let mut failures = 0usize;
    for _ in 0..ROUND_TRIPS {
        let emg = random_emg(&mut rng);
        failures += usize::from(decode_emg(&emg.encode()).ok() != Some(emg));

        let imu = ImuFrame::from_raw(rng.random());
        failures += usize::from(decode_imu(&imu.encode()).ok() != Some(imu));

        let ev = ClassifierEvent {
            kind: EventKind::from_code(rng.random()),
            pose: Pose::from_code(rng.random()),
        };
        failures += usize::from(decode_classifier(&ev.encode()).ok() != Some(ev));

        let msg = random_message(&mut rng);
        let seq: u8 = rng.random();
        let back = encode_frame(&msg, seq).ok().and_then(|f| decode_frame(&f).ok());
        failures += usize::from(back != Some((msg, seq)));
    }
    let elapsed = start.elapsed();
    outcome(
        failures == 0 && elapsed < ROUND_TRIP_BUDGET,
        format!("{ROUND_TRIPS} x 4 kinds, {failures} failures, {:.2?}", elapsed),
    )
}

fn corruption_detection() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let corpus: Vec<Vec<u8>> = (0..CORPUS_FRAMES)
        .map(|_| encode_frame(&random_message(&mut rng), rng.random()).expect("corpus frame"))
        .collect();
    let start = Instant::now();
    let (mut crc, mut cobs, mut undetected) = (0usize, 0usize, 0usize);
    for _ in 0..BIT_FLIPS {
        let mut frame = corpus[rng.random_range(0..corpus.len())].clone();
        let bit = rng.random_range(0..frame.len() * 8);
        frame[bit / 8] ^= 1 << (bit % 8);
        match decode_frame(&frame) {
            Err(FrameError::CrcMismatch { .. }) => crc += 1,
            Err(FrameError::CobsMalformed(_)) => cobs += 1,
            _ => undetected += 1,
        }
    }
    let elapsed = start.elapsed();
    outcome(
        undetected == 0 && elapsed < BIT_FLIP_BUDGET,
        format!(
            "{BIT_FLIPS} flips: {crc} crc, {cobs} cobs, {undetected} undetected, {:.2?}",
            elapsed
        ),
    )
}

fn resynchronization() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut lost = 0usize;
    for _ in 0..RESYNC_CASES {
        let garbage_len = rng.random_range(1..=96);
        let mut stream: Vec<u8> = (0..garbage_len).map(|_| rng.random()).collect();
        let msg = random_message(&mut rng);
        let seq: u8 = rng.random();
        stream.extend(encode_frame(&msg, seq).expect("frame"));
        let mut decoder = FrameDecoder::new();
        let results = decoder.push(&stream);
        if results.last() != Some(&Ok((msg, seq))) {
            lost += 1;
        }
    }
    outcome(lost == 0, format!("{RESYNC_CASES} cases, {lost} frames lost"))
}

fn plant_conservation() -> Outcome {
    let cfg = PlantConfig {
        g_leak0: 0.0,
        ..PlantConfig::default()
    };
    let mut state = PlantState::at_stretch(&cfg, 1.5, 0.0).expect("start state");
    let n0 = state.n;
    let (mut worst_drift, mut worst_residual) = (0.0f64, 0.0f64);
    for _ in 0..CONSERVATION_STEPS {
        state = match plant::step(&state, &cfg, Action::Hold) {
            Ok(s) => s,
            Err(e) => return outcome(false, format!("step failed: {e}")),
        };
        worst_drift = worst_drift.max((state.n - n0).abs() / n0);
        worst_residual = worst_residual.max(plant::equilibrium_residual(state.lambda, state.n, &cfg).abs());
    }
    outcome(
        worst_drift <= CONSERVATION_DRIFT && worst_residual <= RESIDUAL_TOL,
        format!("max |dn|/n {worst_drift:.1e}, max residual {worst_residual:.1e}"),
    )
}

/// Brute force: the grid point on `[1, lambda_max]` where the ideal-gas and
/// membrane pressures disagree least.
fn grid_search(n: f64, cfg: &PlantConfig) -> f64 {
    let rt = cfg.gas_constant * cfg.temperature / 1000.0;
    let hi = (n * rt / (cfg.p_atm * cfg.v0)).cbrt();
    let mismatch = |lambda: f64| {
        let membrane = cfg.compliance * (1.0 / lambda - lambda.powi(-7));
        let gas = n * rt / (cfg.v0 * lambda.powi(3)) - cfg.p_atm;
        (membrane - gas).abs()
    };
    let h = (hi - 1.0) / (GRID_POINTS - 1) as f64;
    let mut best = (f64::INFINITY, 1.0);
    for i in 0..GRID_POINTS {
        let lambda = 1.0 + h * i as f64;
        let m = mismatch(lambda);
        if m < best.0 {
            best = (m, lambda);
        }
    }
    best.1
}

fn solver_oracle() -> Outcome {
    let cfg = PlantConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n_lo = cfg.n_min();
    let n_hi = cfg.gas_for_stretch(3.0).expect("gas at stretch 3");
    let mut worst = 0.0f64;
    for _ in 0..ORACLE_CASES {
        let n = rng.random_range(n_lo..n_hi);
        let solved = match solve_equilibrium(n, &cfg) {
            Ok(l) => l,
            Err(e) => return outcome(false, format!("solver failed at n={n:e}: {e}")),
        };
        let brute = grid_search(n, &cfg);
        worst = worst.max((solved - brute).abs() / brute);
    }
    outcome(
        worst <= ORACLE_TOL,
        format!("{ORACLE_CASES} gas amounts, worst relative gap {worst:.1e}"),
    )
}

fn membrane_signature() -> Outcome {
    let c = PlantConfig::default().compliance;
    let f = |l: f64| membrane_dp(l, c).expect("lambda >= 1");
    let (mut lo, mut hi) = (1.0f64, 3.0f64);
    while hi - lo > 1e-12 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if f(m1) < f(m2) {
            lo = m1;
        } else {
            hi = m2;
        }
    }
    let located = 0.5 * (lo + hi);
    let expected_stretch = 7f64.powf(1.0 / 6.0);
    let expected_peak = c * (6.0 / 7.0) * 7f64.powf(-1.0 / 6.0);
    let stretch_err = (located - expected_stretch).abs();
    let value_err = (f(located) - expected_peak).abs();
    outcome(
        stretch_err <= PEAK_STRETCH_TOL && value_err <= PEAK_VALUE_TOL && (expected_peak - 2.479).abs() < 1e-3,
        format!(
            "peak at {located:.6} (err {stretch_err:.1e}), value {:.6} kPa (err {value_err:.1e})",
            f(located)
        ),
    )
}

fn homeostasis_convergence() -> Outcome {
    let cfg = RunConfig {
        seed: Some(2024),
        ..RunConfig::default()
    };
    let p_max = cfg.channel[0].p_max;
    let deadband = cfg.channel[0].deadband;
    let start = Instant::now();
    let out = match run_simulation(&cfg, &[], CONVERGENCE_RUN_S as f64) {
        Ok(o) => o,
        Err(e) => return outcome(false, format!("run failed: {e}")),
    };
    let elapsed = start.elapsed();
    let mut pass = elapsed < CONVERGENCE_BUDGET;
    let mut details = Vec::new();
    for ch in 0..cfg.channels {
        let rows: Vec<&TelemetryRecord> = out.telemetry.iter().filter(|r| usize::from(r.channel) == ch).collect();
        let in_band = |r: &TelemetryRecord| (r.pressure_kpa - r.setpoint_kpa).abs() <= deadband;
        let entry = rows.iter().position(|r| in_band(r));
        let peak = rows.iter().map(|r| r.pressure_kpa).fold(0.0, f64::max);
        match entry {
            Some(i) => {
                let after = &rows[i..];
                let occupancy = after.iter().filter(|r| in_band(r)).count() as f64 / after.len() as f64;
                pass &= rows[i].t_ms <= BAND_ENTRY_LIMIT_MS && occupancy >= MIN_OCCUPANCY && peak < p_max;
                details.push(format!(
                    "ch{ch}: entry {} ms, occupancy {:.1}%, peak {peak:.2} kPa",
                    rows[i].t_ms,
                    occupancy * 100.0
                ));
            }
            None => {
                pass = false;
                details.push(format!("ch{ch}: never entered the band"));
            }
        }
    }
    details.push(format!("{elapsed:.2?}"));
    outcome(pass, details.join("; "))
}

fn latch_scenario(rng: &mut ChaCha8Rng) -> Result<(), String> {
    let mut cfg = RunConfig {
        channels: rng.random_range(1..=4),
        ..RunConfig::default()
    };
    cfg.plant.compliance = rng.random_range(10.0..20.0);
    cfg.channel.resize(cfg.channels, cfg.channel[0].clone());
    let peak = membrane_dp(plant::peak_stretch(), cfg.plant.compliance).map_err(|e| e.to_string())?;
    let target = rng.random_range(5.3..(peak - 0.05).min(7.0));
    let ch = rng.random_range(0..cfg.channels);
    let p_max = cfg.channel[ch].p_max;
    let p_safe = cfg.channel[ch].p_safe;
    let mut sim = Simulation::new(cfg, rng.random()).map_err(|e| e.to_string())?;
    let warmup = rng.random_range(5..250);
    for _ in 0..warmup {
        sim.step().map_err(|e| e.to_string())?;
    }
    sim.inject_pressure(ch, target).map_err(|e| e.to_string())?;
    if sim.measured(ch) < p_max {
        return Err(format!("injected {target:.2} kPa but host saw {:.2}", sim.measured(ch)));
    }
    let rows = sim.step().map_err(|e| e.to_string())?;
    let r = &rows[ch];
    if r.action != Action::Vent || r.mode != Mode::Faulted {
        return Err(format!("next tick gave {} / {}", r.action, r.mode));
    }
    if sim.clear_fault(ch).is_ok() {
        return Err("clear accepted at overpressure".into());
    }
    let mut cleared = false;
    for _ in 0..5000 {
        let rows = sim.step().map_err(|e| e.to_string())?;
        let r = &rows[ch];
        if r.mode != Mode::Faulted || r.action != Action::Vent {
            return Err(format!("latch released at {} ms without a clear", r.t_ms));
        }
        let below = sim.measured(ch) < p_safe;
        match sim.clear_fault(ch) {
            Ok(()) if below => {
                cleared = true;
                break;
            }
            Ok(()) => return Err(format!("clear accepted at {:.2} kPa", sim.measured(ch))),
            Err(_) if below => return Err("clear refused below p_safe".into()),
            Err(_) => {}
        }
    }
    if !cleared {
        return Err("pressure never fell below p_safe".into());
    }
    let rows = sim.step().map_err(|e| e.to_string())?;
    if rows[ch].mode != Mode::Breathing {
        return Err(format!("after clear mode is {}", rows[ch].mode));
    }
    Ok(())
}

fn safety_latch() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let failures: Vec<String> = (0..LATCH_SCENARIOS)
        .filter_map(|i| latch_scenario(&mut rng).err().map(|e| format!("#{i}: {e}")))
        .collect();
    let detail = match failures.first() {
        None => format!("{LATCH_SCENARIOS} scenarios latched and cleared"),
        Some(first) => format!("{} of {LATCH_SCENARIOS} failed, first {first}", failures.len()),
    };
    outcome(failures.is_empty(), detail)
}

fn demo_trace() -> Vec<TraceRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut text = String::new();
    for t in (0..15_000u64).step_by(5) {
        let amp = if (3000..6000).contains(&t) { 60.0 } else { 3.0 };
        let vals: Vec<String> = (0..8)
            .map(|_| ((rng.random::<f64>() - 0.5) * 2.0 * amp) as i8)
            .map(|v| v.to_string())
            .collect();
        text.push_str(&format!("{t},emg,{}\n", vals.join(",")));
    }
    let mut records = parse_trace(&text).expect("generated trace");
    for (t, pose) in [(7000, Pose::Fist), (7010, Pose::Fist), (7020, Pose::Fist)] {
        records.push(TraceRecord {
            t_ms: t,
            kind: TraceKind::Pose(pose),
        });
    }
    records.sort_by_key(|r| r.t_ms);
    records
}

fn replay_determinism() -> Outcome {
    let cfg = RunConfig::from_toml_str("seed = 77\nchannels = 3\nsensor.noise_sigma = 0.2\n").expect("config");
    let trace = demo_trace();
    let log = || -> Vec<u8> {
        let out = run_simulation(&cfg, &trace, 20.0).expect("run");
        let mut bytes = Vec::new();
        write_telemetry(&mut bytes, &out.telemetry).expect("in-memory write");
        bytes
    };
    let (a, b) = (log(), log());
    outcome(
        a == b && !a.is_empty(),
        format!("two logs of {} and {} bytes, identical: {}", a.len(), b.len(), a == b),
    )
}

fn leaked_after_schedule(cfg: &PlantConfig, t0: f64) -> f64 {
    // Inflate 3 s, hold 5 s, vent 2 s, repeated.
    let cycle = [(3000, Action::Inflate), (5000, Action::Hold), (2000, Action::Vent)];
    let total_steps = (SCHEDULE_S / cfg.dt).round() as usize;
    let mut state = PlantState::at_rest(cfg, t0);
    let mut done = 0;
    'outer: loop {
        for &(steps, action) in &cycle {
            for _ in 0..steps {
                if done == total_steps {
                    break 'outer;
                }
                state = plant::step(&state, cfg, action).expect("plant step");
                done += 1;
            }
        }
    }
    state.leaked
}

fn decay_monotonicity() -> Outcome {
    let cfg = PlantConfig::default();
    let fresh = leaked_after_schedule(&cfg, 0.0);
    let aged = leaked_after_schedule(&cfg, AGED_T0_S);
    outcome(
        aged > fresh && fresh > 0.0,
        format!("leaked {fresh:.4e} mol fresh vs {aged:.4e} mol aged"),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("codec round-trips", codec_round_trips),
        ("corruption detection", corruption_detection),
        ("resynchronization", resynchronization),
        ("plant conservation", plant_conservation),
        ("solver-oracle equivalence", solver_oracle),
        ("membrane signature", membrane_signature),
        ("homeostasis convergence", homeostasis_convergence),
        ("safety latch", safety_latch),
        ("replay determinism", replay_determinism),
        ("decay monotonicity", decay_monotonicity),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!("[{verdict}] {:>2}. {name}: {}", i + 1, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
