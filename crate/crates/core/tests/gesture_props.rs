// Parallel indexing into raw and decoded arrays reads clearer than zips.
#![allow(clippy::needless_range_loop)]

use proptest::prelude::*;
use strain_core::gesture::*;
use strain_core::myo::{ClassifierEvent, EmgSample, EventKind, Pose};

fn sample() -> impl Strategy<Value = EmgSample> {
    prop::array::uniform8(-127i8..=127).prop_map(EmgSample::new)
}

/// Straight-line RMS of the last `window` samples, zero-padded.
fn oracle_rms(samples: &[EmgSample], window: usize) -> [f64; 8] {
    let tail = &samples[samples.len().saturating_sub(window)..];
    let mut out = [0.0; 8];
    for (ch, v) in out.iter_mut().enumerate() {
        let ss: f64 = tail.iter().map(|s| f64::from(s.channels[ch]).powi(2)).sum();
        *v = (ss / window as f64).sqrt() / 127.0;
    }
    out
}

fn pose() -> impl Strategy<Value = Pose> {
    prop::sample::select(vec![
        Pose::Rest,
        Pose::Fist,
        Pose::WaveIn,
        Pose::WaveOut,
        Pose::FingersSpread,
        Pose::DoubleTap,
        Pose::Unknown(0x1234),
    ])
}

proptest! {
    #[test]
    fn rms_is_sign_invariant(samples in prop::collection::vec(sample(), 1..120), window in 1usize..60) {
        let mut a = EnvelopeTracker::new(window);
        let mut b = EnvelopeTracker::new(window);
        for s in &samples {
            let flipped = EmgSample::new(s.channels.map(|v| -v));
            prop_assert_eq!(a.push_sample(*s), b.push_sample(flipped));
        }
    }

    #[test]
    fn envelope_matches_oracle(samples in prop::collection::vec(sample(), 1..120), window in 1usize..60) {
        let mut t = EnvelopeTracker::new(window);
        for (i, s) in samples.iter().enumerate() {
            let a = t.push_sample(*s);
            let expect = oracle_rms(&samples[..=i], window);
            for ch in 0..8 {
                prop_assert!((a.per_channel[ch] - expect[ch]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn warm_up_never_exceeds_padded_envelope(samples in prop::collection::vec(sample(), 1..40)) {
        let window = 40;
        let mut t = EnvelopeTracker::new(window);
        for (i, s) in samples.iter().enumerate() {
            let a = t.push_sample(*s);
            // A window that has only seen i+1 samples can be no louder than
            // those samples over the full window length.
            let padded = oracle_rms(&samples[..=i], window);
            for ch in 0..8 {
                prop_assert!(a.per_channel[ch] <= padded[ch] + 1e-12);
                let full: f64 = samples[..=i].iter().map(|s| f64::from(s.channels[ch]).powi(2)).sum();
                prop_assert!(a.per_channel[ch] <= (full / (i + 1) as f64).sqrt() / 127.0 + 1e-12);
            }
        }
    }

    #[test]
    fn hysteresis_only_switches_at_thresholds(means in prop::collection::vec(0.0f64..0.3, 1..200)) {
        let cfg = EnvelopeConfig::default();
        let mut active = false;
        for m in means {
            let a = Activation { per_channel: [m; 8], mean: m };
            let next = classify_effort(&a, &cfg, active);
            if next && !active {
                prop_assert!(m > cfg.theta_on);
            }
            if !next && active {
                prop_assert!(m < cfg.theta_off);
            }
            if (cfg.theta_off..=cfg.theta_on).contains(&m) {
                prop_assert_eq!(next, active);
            }
            active = next;
        }
    }

    #[test]
    fn debouncer_emits_once_per_cooldown(
        events in prop::collection::vec((pose(), 0u64..300, any::<bool>()), 1..300),
    ) {
        let cfg = EnvelopeConfig::default();
        let mut d = PoseDebouncer::new();
        let mut now = 0u64;
        let mut last: Option<u64> = None;
        for (p, gap, changed) in events {
            now += gap;
            let ev = if changed {
                ClassifierEvent::pose_changed(p)
            } else {
                ClassifierEvent { kind: EventKind::ArmSynced, pose: p }
            };
            if let Some(emitted) = d.push(&ev, now, &cfg).unwrap() {
                prop_assert!(!matches!(emitted, Pose::Rest | Pose::Unknown(_)));
                if let Some(t) = last {
                    prop_assert!(now - t >= cfg.cooldown_ms);
                }
                last = Some(now);
            }
        }
    }

    #[test]
    fn engine_cooldown_spares_only_emergencies(
        events in prop::collection::vec((pose(), 0u64..200), 1..200),
    ) {
        let cfg = EnvelopeConfig::default();
        let map = IntentMap::default();
        let mut engine = GestureEngine::new(cfg.clone(), map.clone(), ControlSource::Pose);
        let mut now = 0u64;
        let mut last: Option<u64> = None;
        for (p, gap) in events {
            now += gap;
            if let Some(pose) = engine.push_classifier(&ClassifierEvent::pose_changed(p), now).unwrap() {
                prop_assert_ne!(pose, Pose::Rest);
                let emergency = map.get(pose) == IntentKind::EmergencyVent;
                if let (false, Some(t)) = (emergency, last) {
                    prop_assert!(now - t >= cfg.cooldown_ms);
                }
                last = Some(now);
            }
        }
    }

    #[test]
    fn effort_intent_is_identity(level in 0.0f64..=1.0) {
        let map = IntentMap::default();
        prop_assert_eq!(map_to_intent(GestureInput::Effort(level), &map, 0.0), ActuationIntent::SetEffort(level));
    }
}
