//! Time-synchronization attacks on time-stamped phasor measurements, and
//! control-centre time-stamp alignment.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::phasor::{wrap_angle, Phasor};

/// Phase error seen at nominal frequency `f` for a timing error `dt`,
/// wrapped into `(-π, π]`.
pub fn phase_error_from_time_offset(dt: f64, f: f64) -> Result<f64> {
    if !(f.is_finite() && f > 0.0) {
        return Err(Error::invalid("frequency_hz", "must be finite and > 0"));
    }
    if !dt.is_finite() {
        return Err(Error::invalid("dt_seconds", "must be finite"));
    }
    // reduce dt modulo one period first so large offsets keep their precision
    let period = 1.0 / f;
    let frac = dt.rem_euclid(period) / period;
    Ok(wrap_angle(2.0 * PI * frac))
}

/// How strongly one device is attacked.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AttackOffset {
    /// Timing error, seconds. Authoritative when present.
    Time(f64),
    /// Phase error, radians.
    Phase(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackSpec {
    pub target_id: String,
    pub offset: AttackOffset,
}

impl AttackSpec {
    pub fn new(target_id: impl Into<String>, offset: AttackOffset) -> Self {
        AttackSpec {
            target_id: target_id.into(),
            offset,
        }
    }

    /// Builds a spec from optional time and phase errors; time wins when both
    /// are given, and neither means no attack.
    pub fn from_parts(target_id: impl Into<String>, dt: Option<f64>, dtheta: Option<f64>) -> Self {
        let offset = match (dt, dtheta) {
            (Some(dt), _) => AttackOffset::Time(dt),
            (None, Some(th)) => AttackOffset::Phase(th),
            (None, None) => AttackOffset::Phase(0.0),
        };
        Self::new(target_id, offset)
    }

    pub fn dtheta(&self, f_nominal: f64) -> Result<f64> {
        match self.offset {
            AttackOffset::Time(dt) => phase_error_from_time_offset(dt, f_nominal),
            AttackOffset::Phase(th) => {
                if th.is_finite() {
                    Ok(wrap_angle(th))
                } else {
                    Err(Error::invalid("dtheta_radians", "must be finite"))
                }
            }
        }
    }

    /// Timing error, if the spec is time-based.
    pub fn dt(&self) -> Option<f64> {
        match self.offset {
            AttackOffset::Time(dt) => Some(dt),
            AttackOffset::Phase(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeStampedMeasurement {
    pub device_id: String,
    /// UTC seconds.
    pub timestamp: f64,
    pub values: BTreeMap<String, Phasor>,
}

impl TimeStampedMeasurement {
    pub fn new(device_id: impl Into<String>, timestamp: f64) -> Self {
        TimeStampedMeasurement {
            device_id: device_id.into(),
            timestamp,
            values: BTreeMap::new(),
        }
    }

    pub fn with(mut self, name: impl Into<String>, value: Phasor) -> Self {
        self.values.insert(name.into(), value);
        self
    }

    pub fn get(&self, name: &str) -> Option<Phasor> {
        self.values.get(name).copied()
    }
}

/// Rotates every phasor of `m` by `e^{jΔθ}`. Magnitudes and the timestamp are
/// left untouched.
pub fn apply_attack(m: &TimeStampedMeasurement, dtheta: f64) -> TimeStampedMeasurement {
    TimeStampedMeasurement {
        device_id: m.device_id.clone(),
        timestamp: m.timestamp,
        values: m
            .values
            .iter()
            .map(|(k, v)| (k.clone(), v.rotate(dtheta)))
            .collect(),
    }
}

/// Applies `spec` to `m` at nominal frequency `f`. With `shift_timestamp` the
/// stamp itself also moves by the timing error (time-based specs only).
pub fn apply_attack_spec(
    m: &TimeStampedMeasurement,
    spec: &AttackSpec,
    f: f64,
    shift_timestamp: bool,
) -> Result<TimeStampedMeasurement> {
    if m.device_id != spec.target_id {
        return Ok(m.clone());
    }
    let mut out = apply_attack(m, spec.dtheta(f)?);
    if shift_timestamp {
        if let Some(dt) = spec.dt() {
            out.timestamp += dt;
        }
    }
    Ok(out)
}

/// Frames sharing one alignment slot.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedGroup {
    /// Timestamp of the earliest frame in the group.
    pub timestamp: f64,
    pub frames: Vec<TimeStampedMeasurement>,
}

impl AlignedGroup {
    pub fn device_ids(&self) -> Vec<&str> {
        self.frames.iter().map(|f| f.device_id.as_str()).collect()
    }

    pub fn frame(&self, device: &str) -> Option<&TimeStampedMeasurement> {
        self.frames.iter().find(|f| f.device_id == device)
    }
}

/// Groups frames whose timestamps lie within `tolerance` of the group's
/// earliest frame. Groups come out sorted by time.
pub fn align(frames: &[TimeStampedMeasurement], tolerance: f64) -> Result<Vec<AlignedGroup>> {
    if !(tolerance.is_finite() && tolerance >= 0.0) {
        return Err(Error::invalid("tolerance", "must be finite and >= 0"));
    }
    if let Some(bad) = frames.iter().find(|f| !f.timestamp.is_finite()) {
        return Err(Error::invalid(
            "timestamp",
            format!("device `{}` has a non-finite timestamp", bad.device_id),
        ));
    }
    let mut sorted: Vec<&TimeStampedMeasurement> = frames.iter().collect();
    sorted.sort_by(|a, b| {
        a.timestamp
            .total_cmp(&b.timestamp)
            .then_with(|| a.device_id.cmp(&b.device_id))
    });

    let mut groups: Vec<AlignedGroup> = Vec::new();
    for frame in sorted {
        match groups.last_mut() {
            Some(g) if frame.timestamp - g.timestamp <= tolerance => {
                if g.frame(&frame.device_id).is_some() {
                    return Err(Error::AlignmentConflict {
                        device: frame.device_id.clone(),
                        timestamp: g.timestamp,
                    });
                }
                g.frames.push(frame.clone());
            }
            _ => groups.push(AlignedGroup {
                timestamp: frame.timestamp,
                frames: vec![frame.clone()],
            }),
        }
    }
    Ok(groups)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn phase_error_examples() {
        assert_eq!(phase_error_from_time_offset(0.0, 60.0).unwrap(), 0.0);
        assert!(phase_error_from_time_offset(1.0 / 60.0, 60.0).unwrap().abs() < 1e-12);
        let q = phase_error_from_time_offset(1.0 / 240.0, 60.0).unwrap();
        assert!((q - PI / 2.0).abs() < 1e-12);
        assert!(phase_error_from_time_offset(1e-3, 0.0).is_err());
        assert!(phase_error_from_time_offset(1e-3, -50.0).is_err());
    }

    #[test]
    fn ten_microseconds_at_60hz() {
        // 2π·60·1e-5 rad
        let th = phase_error_from_time_offset(1e-5, 60.0).unwrap();
        assert!((th - 2.0 * PI * 60.0 * 1e-5).abs() < 1e-15);
    }

    #[test]
    fn time_wins_over_phase() {
        let spec = AttackSpec::from_parts("pmu", Some(1.0 / 240.0), Some(1.0));
        assert!((spec.dtheta(60.0).unwrap() - PI / 2.0).abs() < 1e-12);
        let spec = AttackSpec::from_parts("pmu", None, Some(3.0 * PI));
        assert!((spec.dtheta(60.0).unwrap() - PI).abs() < 1e-12);
    }

    fn sample() -> TimeStampedMeasurement {
        TimeStampedMeasurement::new("S", 1.0)
            .with("V", Phasor::from_polar(25000.0, 0.1))
            .with("I", Phasor::from_polar(120.0, -0.4))
    }

    #[test]
    fn attack_identity_and_half_turn() {
        let m = sample();
        assert_eq!(apply_attack(&m, 0.0), m);
        let one = TimeStampedMeasurement::new("x", 0.0).with("V", Phasor::new(1.0, 0.0));
        let v = apply_attack(&one, PI).get("V").unwrap();
        assert!((v.value() - crate::phasor::Complex::new(-1.0, 0.0)).norm() < 1e-15);
        assert!((v.angle() - PI).abs() < 1e-15);
    }

    #[test]
    fn attack_keeps_magnitude_and_timestamp() {
        let m = TimeStampedMeasurement::new("x", 3.5).with("V", Phasor::from_polar(25000.0, 0.0));
        let a = apply_attack(&m, 0.7);
        let v = a.get("V").unwrap();
        assert_eq!(v.magnitude(), 25000.0);
        assert!((v.angle() - 0.7).abs() < 1e-15);
        assert_eq!(a.timestamp, 3.5);
    }

    #[test]
    fn spec_only_touches_target_and_optionally_shifts_stamp() {
        let m = sample();
        let spec = AttackSpec::new("R", AttackOffset::Time(1e-3));
        assert_eq!(apply_attack_spec(&m, &spec, 60.0, true).unwrap(), m);
        let spec = AttackSpec::new("S", AttackOffset::Time(1e-3));
        let a = apply_attack_spec(&m, &spec, 60.0, false).unwrap();
        assert_eq!(a.timestamp, 1.0);
        let b = apply_attack_spec(&m, &spec, 60.0, true).unwrap();
        assert!((b.timestamp - 1.001).abs() < 1e-15);
        assert_eq!(a.values, b.values);
    }

    #[test]
    fn align_examples() {
        let a = TimeStampedMeasurement::new("S", 1.000);
        let b = TimeStampedMeasurement::new("R", 1.000);
        let groups = align(&[a.clone(), b.clone()], 0.0).unwrap();
        assert_eq!(groups.len(), 1);
        assert_eq!(groups[0].device_ids(), vec!["R", "S"]);

        let late = TimeStampedMeasurement::new("R", 1.020);
        let groups = align(&[late, a.clone()], 0.001).unwrap();
        assert_eq!(groups.len(), 2);
        assert_eq!(groups[0].timestamp, 1.0);
        assert_eq!(groups[1].timestamp, 1.02);

        let err = align(&[a.clone(), a], 0.001).unwrap_err();
        assert_eq!(err.code(), "alignment_conflict");
    }

    #[test]
    fn align_rejects_negative_tolerance() {
        assert!(align(&[], -1.0).is_err());
        assert!(align(&[], 0.0).unwrap().is_empty());
    }

    proptest! {
        #[test]
        fn rotations_compose(a in -10.0f64..10.0, b in -10.0f64..10.0) {
            let m = sample();
            let twice = apply_attack(&apply_attack(&m, a), b);
            let once = apply_attack(&m, a + b);
            for (k, v) in &twice.values {
                let w = once.values[k];
                prop_assert!((v.value() - w.value()).norm() <= 1e-12 * w.magnitude());
            }
        }

        #[test]
        fn magnitude_preserved_exactly(th in -10.0f64..10.0, mag in 1e-3f64..1e6, ang in -3.0f64..3.0) {
            let m = TimeStampedMeasurement::new("d", 0.0).with("V", Phasor::from_polar(mag, ang));
            let before = m.get("V").unwrap().magnitude();
            let after = apply_attack(&m, th).get("V").unwrap().magnitude();
            prop_assert_eq!(before, after);
        }

        #[test]
        fn phase_error_is_periodic(dt in -1.0f64..1.0, k in -50i32..50) {
            let f = 60.0;
            let a = phase_error_from_time_offset(dt, f).unwrap();
            let b = phase_error_from_time_offset(dt + k as f64 / f, f).unwrap();
            let d = wrap_angle(a - b);
            prop_assert!(d.abs() < 1e-9);
        }
    }
}
