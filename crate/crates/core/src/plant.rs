//! Simulated latex bladder: neo-Hookean spherical membrane around an
//! isothermal ideal gas, fed by a pump, drained by a vent valve and an
//! aging leak, observed through a quantized noisy sensor.
//!
//! Pressures are gauge kPa unless noted. Conductances multiply a pressure
//! difference in pascals, so `G·ΔP` is a molar flow in mol/s.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::bridge::Action;

const PA_PER_KPA: f64 = 1000.0;
const MAX_SOLVER_ITERATIONS: usize = 200;
/// Relative equilibrium residual the solver must reach.
pub const EQUILIBRIUM_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlantError {
    #[error("domain error: {0}")]
    DomainError(String),
    #[error("equilibrium solver did not converge after {iterations} iterations (n = {n} mol)")]
    NoConvergence { iterations: usize, n: f64 },
    #[error("invalid plant config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantConfig {
    /// Unstretched bladder volume, m³.
    pub v0: f64,
    /// Membrane compliance coefficient, kPa.
    pub compliance: f64,
    /// Absolute atmospheric pressure, kPa.
    pub p_atm: f64,
    /// Gas temperature, K.
    pub temperature: f64,
    /// Gauge pressure at which the pump stalls, kPa.
    pub p_stall: f64,
    /// Orifice conductances, mol/(s·Pa). Flow is conductance times the
    /// pressure difference in pascals, which puts fill times at seconds.
    pub g_pump: f64,
    pub g_vent: f64,
    pub g_leak0: f64,
    /// Time over which leak conductance grows by `g_leak0`, s.
    pub tau_decay: f64,
    /// Integration step, s.
    pub dt: f64,
    /// J/(mol·K).
    pub gas_constant: f64,
}

impl Default for PlantConfig {
    fn default() -> Self {
        Self {
            v0: 5e-5,
            compliance: 4.0,
            p_atm: 101.325,
            temperature: 293.15,
            p_stall: 30.0,
            g_pump: 2e-7,
            g_vent: 4e-7,
            g_leak0: 1e-9,
            tau_decay: 3600.0,
            dt: 1e-3,
            gas_constant: 8.314,
        }
    }
}

impl PlantConfig {
    pub fn validate(&self) -> Result<(), PlantError> {
        let positive = [
            ("v0", self.v0),
            ("compliance", self.compliance),
            ("p_atm", self.p_atm),
            ("temperature", self.temperature),
            ("tau_decay", self.tau_decay),
            ("dt", self.dt),
            ("gas_constant", self.gas_constant),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(PlantError::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("g_pump", self.g_pump),
            ("g_vent", self.g_vent),
            ("g_leak0", self.g_leak0),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(PlantError::InvalidConfig(format!(
                    "{name} must be non-negative, got {v}"
                )));
            }
        }
        if !self.p_stall.is_finite() || self.p_stall < 0.0 {
            return Err(PlantError::InvalidConfig("p_stall must be non-negative".into()));
        }
        Ok(())
    }

    /// n·R·T expressed in kPa·m³ per mole.
    fn rt_kpa(&self) -> f64 {
        self.gas_constant * self.temperature / PA_PER_KPA
    }

    /// Gas in the unstretched bladder at zero gauge pressure.
    pub fn n_min(&self) -> f64 {
        self.p_atm * self.v0 / self.rt_kpa()
    }

    /// Gas needed to hold stretch `lambda` in equilibrium.
    pub fn gas_for_stretch(&self, lambda: f64) -> Result<f64, PlantError> {
        let dp = membrane_dp(lambda, self.compliance)?;
        Ok((self.p_atm + dp) * self.v0 * lambda.powi(3) / self.rt_kpa())
    }

    pub fn leak_conductance(&self, t_s: f64) -> f64 {
        self.g_leak0 * (1.0 + t_s / self.tau_decay)
    }
}

/// Stretch ratio at which the membrane pressure peaks: λ⁶ = 7.
pub fn peak_stretch() -> f64 {
    7f64.powf(1.0 / 6.0)
}

/// Membrane gauge pressure `C·(λ⁻¹ − λ⁻⁷)` in kPa.
pub fn membrane_dp(lambda: f64, compliance: f64) -> Result<f64, PlantError> {
    if !(lambda >= 1.0) {
        return Err(PlantError::DomainError(format!("stretch ratio {lambda} is below 1")));
    }
    Ok(compliance * (lambda.recip() - lambda.powi(-7)))
}

/// Derivative of [`membrane_dp`] with respect to stretch.
pub fn membrane_dp_slope(lambda: f64, compliance: f64) -> f64 {
    compliance * (-lambda.powi(-2) + 7.0 * lambda.powi(-8))
}

/// Residual of the equilibrium equation at `lambda`, relative to `n·R·T`.
pub fn equilibrium_residual(lambda: f64, n: f64, cfg: &PlantConfig) -> f64 {
    let target = n * cfg.rt_kpa() / cfg.v0;
    let dp = cfg.compliance * (lambda.recip() - lambda.powi(-7));
    ((cfg.p_atm + dp) * lambda.powi(3) - target) / target
}

/// Finds the stretch ratio λ ≥ 1 holding `n` moles in equilibrium.
///
/// The left side `(p_atm + ΔP(λ))·λ³` is strictly increasing for λ ≥ 1 and
/// gauge pressure is never negative, so the root lies in
/// `[1, (n·R·T / (p_atm·V0))^(1/3)]`. Bisection narrows that bracket, then
/// safeguarded Newton polishes to the residual tolerance.
pub fn solve_equilibrium(n: f64, cfg: &PlantConfig) -> Result<f64, PlantError> {
    let n_min = cfg.n_min();
    if !(n.is_finite() && n >= n_min * (1.0 - 1e-12)) {
        return Err(PlantError::DomainError(format!(
            "gas amount {n} mol is below the unstretched fill {n_min} mol"
        )));
    }
    let target = n * cfg.rt_kpa() / cfg.v0;
    let f = |l: f64| (cfg.p_atm + cfg.compliance * (l.recip() - l.powi(-7))) * l.powi(3) - target;
    let df = |l: f64| 3.0 * cfg.p_atm * l * l + cfg.compliance * (2.0 * l + 4.0 * l.powi(-5));

    let mut lo = 1.0f64;
    let mut hi = (target / cfg.p_atm).cbrt().max(1.0);
    if f(lo).abs() <= EQUILIBRIUM_TOLERANCE * target {
        return Ok(1.0);
    }
    let mut iterations = 0;
    while hi - lo > 1e-4 && iterations < MAX_SOLVER_ITERATIONS {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        iterations += 1;
    }
    let mut x = 0.5 * (lo + hi);
    while iterations < MAX_SOLVER_ITERATIONS {
        let fx = f(x);
        if fx.abs() <= EQUILIBRIUM_TOLERANCE * target {
            return Ok(x);
        }
        if fx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let next = x - fx / df(x);
        x = if next > lo && next < hi { next } else { 0.5 * (lo + hi) };
        iterations += 1;
    }
    Err(PlantError::NoConvergence { iterations, n })
}

/// Plant state. Simulated time is `t0 + steps·dt`, counted in whole steps
/// so it does not drift.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantState {
    pub lambda: f64,
    /// Gas amount, mol.
    pub n: f64,
    pub t0: f64,
    pub steps: u64,
    /// Cumulative gas lost through the leak, mol.
    pub leaked: f64,
}

impl PlantState {
    /// An empty, unstretched bladder whose material has already aged `t0`
    /// seconds.
    pub fn at_rest(cfg: &PlantConfig, t0: f64) -> Self {
        Self {
            lambda: 1.0,
            n: cfg.n_min(),
            t0,
            steps: 0,
            leaked: 0.0,
        }
    }

    /// A bladder in equilibrium at stretch `lambda`.
    pub fn at_stretch(cfg: &PlantConfig, lambda: f64, t0: f64) -> Result<Self, PlantError> {
        let n = cfg.gas_for_stretch(lambda)?;
        Ok(Self {
            lambda: solve_equilibrium(n, cfg)?,
            n,
            t0,
            steps: 0,
            leaked: 0.0,
        })
    }

    /// A bladder on the rising branch of the membrane curve at the given
    /// gauge pressure. Fails if the pressure exceeds the membrane peak.
    pub fn at_gauge_pressure(cfg: &PlantConfig, pressure: f64, t0: f64) -> Result<Self, PlantError> {
        let peak_lambda = peak_stretch();
        let peak = membrane_dp(peak_lambda, cfg.compliance)?;
        if !(0.0..=peak).contains(&pressure) {
            return Err(PlantError::DomainError(format!(
                "gauge pressure {pressure} kPa is outside the membrane range [0, {peak}]"
            )));
        }
        let (mut lo, mut hi) = (1.0, peak_lambda);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if membrane_dp(mid, cfg.compliance)? < pressure {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Self::at_stretch(cfg, 0.5 * (lo + hi), t0)
    }

    pub fn time(&self, cfg: &PlantConfig) -> f64 {
        self.t0 + self.steps as f64 * cfg.dt
    }

    /// Simulated time elapsed since the state was created.
    pub fn elapsed(&self, cfg: &PlantConfig) -> f64 {
        self.steps as f64 * cfg.dt
    }

    pub fn gauge_pressure(&self, cfg: &PlantConfig) -> f64 {
        cfg.compliance * (self.lambda.recip() - self.lambda.powi(-7))
    }
}

/// Molar flows over one step, mol/s.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Flows {
    pub pump: f64,
    pub vent: f64,
    pub leak: f64,
}

pub fn flows(state: &PlantState, cfg: &PlantConfig, action: Action) -> Flows {
    let p = state.gauge_pressure(cfg);
    let pump = match action {
        Action::Inflate => cfg.g_pump * (cfg.p_stall - p).max(0.0) * PA_PER_KPA,
        _ => 0.0,
    };
    let vent = match action {
        Action::Vent => cfg.g_vent * p.max(0.0) * PA_PER_KPA,
        _ => 0.0,
    };
    let leak = cfg.leak_conductance(state.time(cfg)) * p.max(0.0) * PA_PER_KPA;
    Flows { pump, vent, leak }
}

/// Advances the plant by one `dt`. Flows use the pre-step pressure; the
/// stretch is re-solved for the new gas amount.
pub fn step(state: &PlantState, cfg: &PlantConfig, action: Action) -> Result<PlantState, PlantError> {
    let Flows { pump, vent, leak } = flows(state, cfg, action);
    let net = pump - vent - leak;
    let n = if net == 0.0 {
        state.n
    } else {
        (state.n + net * cfg.dt).max(cfg.n_min())
    };
    let lambda = if n == state.n {
        state.lambda
    } else {
        solve_equilibrium(n, cfg)?
    };
    Ok(PlantState {
        lambda,
        n,
        t0: state.t0,
        steps: state.steps + 1,
        leaked: state.leaked + leak * cfg.dt,
    })
}

/// One channel's plant: configuration plus evolving state.
#[derive(Debug, Clone)]
pub struct Plant {
    pub cfg: PlantConfig,
    pub state: PlantState,
}

impl Plant {
    pub fn new(cfg: PlantConfig) -> Result<Self, PlantError> {
        cfg.validate()?;
        let state = PlantState::at_rest(&cfg, 0.0);
        Ok(Self { cfg, state })
    }

    pub fn step(&mut self, action: Action) -> Result<(), PlantError> {
        self.state = step(&self.state, &self.cfg, action)?;
        Ok(())
    }

    pub fn gauge_pressure(&self) -> f64 {
        self.state.gauge_pressure(&self.cfg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorModel {
    /// Gauge kPa.
    pub full_scale: f64,
    pub bits: u32,
    /// kPa.
    pub noise_sigma: f64,
    pub rate_hz: f64,
}

impl Default for SensorModel {
    fn default() -> Self {
        Self {
            full_scale: 40.0,
            bits: 10,
            noise_sigma: 0.05,
            rate_hz: 100.0,
        }
    }
}

impl SensorModel {
    pub fn validate(&self) -> Result<(), PlantError> {
        if !(8..=16).contains(&self.bits) {
            return Err(PlantError::InvalidConfig(format!(
                "sensor bits {} outside 8..=16",
                self.bits
            )));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(PlantError::InvalidConfig("noise_sigma must be non-negative".into()));
        }
        if !(self.full_scale.is_finite() && self.full_scale > 0.0) {
            return Err(PlantError::InvalidConfig("full_scale must be positive".into()));
        }
        if !(self.rate_hz.is_finite() && self.rate_hz > 0.0) {
            return Err(PlantError::InvalidConfig("rate_hz must be positive".into()));
        }
        Ok(())
    }

    /// Quantization step, kPa.
    pub fn lsb(&self) -> f64 {
        self.full_scale / f64::from(1u32 << self.bits)
    }

    /// Clamps to the sensor range and rounds to the nearest code.
    pub fn quantize(&self, pressure: f64) -> f64 {
        let lsb = self.lsb();
        let max_code = f64::from((1u32 << self.bits) - 1);
        let code = (pressure.clamp(0.0, self.full_scale) / lsb).round().min(max_code);
        code * lsb
    }
}

/// Samples the sensor. Exactly one normal draw is consumed per call,
/// whatever the noise level, so the random stream stays aligned.
pub fn read_sensor<R: Rng + ?Sized>(pressure: f64, sensor: &SensorModel, rng: &mut R) -> f64 {
    let noise = Normal::new(0.0, sensor.noise_sigma)
        .map(|d| d.sample(rng))
        .unwrap_or(0.0);
    sensor.quantize(pressure + noise)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn membrane_examples() {
        assert_eq!(membrane_dp(1.0, 4.0).unwrap(), 0.0);
        let peak = membrane_dp(peak_stretch(), 4.0).unwrap();
        assert!((peak_stretch() - 1.3831).abs() < 1e-4);
        assert!((peak - 2.479).abs() < 1e-3);
        let far = membrane_dp(1e3, 4.0).unwrap();
        assert!(far > 0.0 && far < 4.1e-3);
        assert!(matches!(membrane_dp(0.99, 4.0), Err(PlantError::DomainError(_))));
        assert!(membrane_dp(f64::NAN, 4.0).is_err());
    }

    #[test]
    fn slope_changes_sign_at_peak() {
        assert!(membrane_dp_slope(peak_stretch() - 1e-3, 4.0) > 0.0);
        assert!(membrane_dp_slope(peak_stretch() + 1e-3, 4.0) < 0.0);
    }

    #[test]
    fn equilibrium_at_n_min() {
        let cfg = PlantConfig::default();
        assert_eq!(solve_equilibrium(cfg.n_min(), &cfg).unwrap(), 1.0);
        assert!(solve_equilibrium(0.5 * cfg.n_min(), &cfg).is_err());
    }

    #[test]
    fn equilibrium_is_monotone_and_tight() {
        let cfg = PlantConfig::default();
        let mut prev = 1.0;
        for k in 1..200 {
            let n = cfg.n_min() * (1.0 + k as f64 * 0.02);
            let l = solve_equilibrium(n, &cfg).unwrap();
            assert!(l > prev);
            assert!(equilibrium_residual(l, n, &cfg).abs() <= EQUILIBRIUM_TOLERANCE);
            prev = l;
        }
    }

    #[test]
    fn closed_system_holds_gas() {
        let cfg = PlantConfig {
            g_leak0: 0.0,
            ..PlantConfig::default()
        };
        let s0 = PlantState::at_stretch(&cfg, 1.2, 0.0).unwrap();
        let s1 = step(&s0, &cfg, Action::Hold).unwrap();
        assert_eq!(s1.n, s0.n);
        assert_eq!(s1.steps, 1);
    }

    #[test]
    fn inflate_adds_gas() {
        let cfg = PlantConfig::default();
        let mut s = PlantState::at_rest(&cfg, 0.0);
        for _ in 0..100 {
            let next = step(&s, &cfg, Action::Inflate).unwrap();
            assert!(next.n > s.n);
            s = next;
        }
    }

    #[test]
    fn at_gauge_pressure_round_trips() {
        let cfg = PlantConfig::default();
        let s = PlantState::at_gauge_pressure(&cfg, 1.7, 0.0).unwrap();
        assert!((s.gauge_pressure(&cfg) - 1.7).abs() < 1e-9);
        assert!(s.lambda < peak_stretch());
        assert!(PlantState::at_gauge_pressure(&cfg, 3.0, 0.0).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(PlantConfig::default().validate().is_ok());
        let cfg = PlantConfig {
            dt: 0.0,
            ..PlantConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = PlantConfig {
            g_vent: -1.0,
            ..PlantConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn sensor_quantization() {
        let sensor = SensorModel {
            noise_sigma: 0.0,
            ..SensorModel::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(read_sensor(0.0, &sensor, &mut rng), 0.0);
        assert!((sensor.lsb() - 0.0390625).abs() < 1e-15);
        for p in [0.013, 0.5, 1.234, 2.479, 39.99, 55.0] {
            let r = read_sensor(p, &sensor, &mut rng);
            let k = r / sensor.lsb();
            assert_eq!(k, k.round());
            assert!(r <= sensor.full_scale);
        }
        let bad = SensorModel {
            bits: 7,
            ..SensorModel::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn sensor_determinism() {
        let sensor = SensorModel::default();
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50)
                .map(|i| read_sensor(i as f64 * 0.05, &sensor, &mut rng))
                .collect::<Vec<_>>()
        };
        assert_eq!(run(42), run(42));
        assert_ne!(run(42), run(43));
    }
}
