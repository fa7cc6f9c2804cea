//! Abstracted GPS timing: UTC recovery, peak acquisition, and a three-stage
//! correlation-peak capture campaign.
//!
//! The correlation surface is reduced to labelled peaks. Only relative peak
//! height and code-phase position matter for capture, so no waveform is
//! synthesised.

use std::cmp::Ordering;

use crate::error::{Error, Result};

/// Civil C/A chip duration, seconds.
pub const CA_CHIP_DURATION: f64 = 1.0 / 1.023e6;

/// Upper bound on the number of steps a campaign may take.
pub const MAX_CAMPAIGN_STEPS: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtcInputs {
    /// Receiver clock time, s.
    pub t_rcv: f64,
    /// Signal propagation time, s.
    pub t_p: f64,
    /// Ground-segment UTC correction, s.
    pub dt_utc: f64,
}

/// `t_UTC = t_rcv − t_p − Δt_UTC`
pub fn utc_from_receiver(inputs: &UtcInputs) -> Result<f64> {
    let UtcInputs { t_rcv, t_p, dt_utc } = *inputs;
    if !(t_rcv.is_finite() && t_p.is_finite() && dt_utc.is_finite()) {
        return Err(Error::invalid("utc_inputs", "all fields must be finite"));
    }
    if t_p < 0.0 {
        return Err(Error::invalid("t_p", "propagation time must be >= 0"));
    }
    Ok(t_rcv - t_p - dt_utc)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationPeak {
    pub code_phase: f64,
    pub doppler: f64,
    pub amplitude: f64,
}

/// Highest peak above `noise_floor`. Ties go to the smaller code phase.
pub fn acquire(peaks: &[CorrelationPeak], noise_floor: f64) -> Option<CorrelationPeak> {
    peaks
        .iter()
        .filter(|p| p.amplitude.is_finite() && p.code_phase.is_finite())
        .copied()
        .max_by(|a, b| {
            a.amplitude
                .partial_cmp(&b.amplitude)
                .unwrap_or(Ordering::Equal)
                // max_by keeps the last maximum, so invert the phase order
                .then_with(|| b.code_phase.partial_cmp(&a.code_phase).unwrap_or(Ordering::Equal))
        })
        .filter(|p| p.amplitude > noise_floor)
}

/// Parameters of a scan–overlap–drag spoofing campaign against one channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpoofCampaign {
    pub true_peak: CorrelationPeak,
    /// Fake over true peak amplitude.
    pub fake_amplitude_ratio: f64,
    /// Signed initial fake-peak offset from the true peak, chips.
    pub start_offset_chips: f64,
    /// Closing speed during the scan stage, chips/step.
    pub approach_rate: f64,
    /// Commanded final displacement of the tracked phase, chips.
    pub drag_target_chips: f64,
    /// Requested drag speed, chips/step. Clamped to `max_slew`.
    pub drag_rate: f64,
    pub capture_radius: f64,
    /// Tracking-loop slew limit, chips/step.
    pub max_slew: f64,
    pub chip_duration: f64,
}

impl SpoofCampaign {
    /// Campaign with the given peak and ratio; the remaining knobs take
    /// documented defaults (2 chip start offset, 0.25 chip/step approach,
    /// 0.5 chip capture radius, 1 chip/step slew, C/A chip duration).
    pub fn new(true_peak: CorrelationPeak, fake_amplitude_ratio: f64, drag_target_chips: f64) -> Self {
        SpoofCampaign {
            true_peak,
            fake_amplitude_ratio,
            start_offset_chips: 2.0,
            approach_rate: 0.25,
            drag_target_chips,
            drag_rate: 1.0,
            capture_radius: 0.5,
            max_slew: 1.0,
            chip_duration: CA_CHIP_DURATION,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &'static str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(name, "must be finite and > 0"))
            }
        };
        positive("approach_rate", self.approach_rate)?;
        positive("capture_radius", self.capture_radius)?;
        positive("max_slew", self.max_slew)?;
        positive("drag_rate", self.drag_rate)?;
        positive("chip_duration", self.chip_duration)?;
        positive("true_peak.amplitude", self.true_peak.amplitude)?;
        positive("fake_amplitude_ratio", self.fake_amplitude_ratio)?;
        for (name, v) in [
            ("true_peak.code_phase", self.true_peak.code_phase),
            ("start_offset_chips", self.start_offset_chips),
            ("drag_target_chips", self.drag_target_chips),
        ] {
            if !v.is_finite() {
                return Err(Error::invalid(name, "must be finite"));
            }
        }
        let approach = (self.start_offset_chips / self.approach_rate).abs();
        let drag = (self.drag_target_chips / self.effective_drag_rate()).abs();
        if approach + drag > MAX_CAMPAIGN_STEPS {
            return Err(Error::invalid(
                "approach_rate",
                format!("campaign would exceed {MAX_CAMPAIGN_STEPS} steps"),
            ));
        }
        Ok(())
    }

    fn effective_drag_rate(&self) -> f64 {
        self.drag_rate.min(self.max_slew)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpoofOutcome {
    pub captured: bool,
    pub capture_step: Option<usize>,
    /// Timing error imposed on the receiver, seconds.
    pub achieved_dt: f64,
    pub steps: usize,
    /// `(step, tracked code phase in chips)`, one entry per step from 0.
    pub trajectory: Vec<(usize, f64)>,
}

/// Moves `from` toward `to` by at most `rate`, landing exactly on `to`.
fn step_toward(from: f64, to: f64, rate: f64) -> f64 {
    let gap = to - from;
    if gap.abs() <= rate {
        to
    } else {
        from + rate * gap.signum()
    }
}

/// Runs the campaign to completion.
///
/// Stage 1 closes the fake peak on the true one at `approach_rate`. Capture
/// happens at the first step with separation within `capture_radius`, and
/// only if the fake peak is strictly stronger; the tracked phase then jumps
/// to the fake peak. Stage 3 drags the fake peak to
/// `true + drag_target_chips`, never faster than `max_slew`. A weaker fake
/// peak is driven to full overlap and the attack ends uncaptured.
pub fn run_spoof_campaign(campaign: &SpoofCampaign) -> Result<SpoofOutcome> {
    campaign.validate()?;
    let origin = campaign.true_peak.code_phase;
    let stronger = campaign.fake_amplitude_ratio > 1.0;

    // offsets from the authentic peak, so the drag lands exactly on its target
    let mut step = 0usize;
    let mut tracked = 0.0;
    let mut fake = campaign.start_offset_chips;
    let mut trajectory = Vec::new();
    let mut capture_step = None;

    loop {
        if stronger && fake.abs() <= campaign.capture_radius {
            tracked = fake;
            capture_step = Some(step);
            trajectory.push((step, origin + tracked));
            break;
        }
        trajectory.push((step, origin + tracked));
        if fake == 0.0 {
            // full overlap without winning the tracking loop
            break;
        }
        fake = step_toward(fake, 0.0, campaign.approach_rate);
        step += 1;
    }

    if capture_step.is_none() {
        return Ok(SpoofOutcome {
            captured: false,
            capture_step: None,
            achieved_dt: 0.0,
            steps: step,
            trajectory,
        });
    }

    let target = campaign.drag_target_chips;
    let rate = campaign.effective_drag_rate();
    while tracked != target {
        step += 1;
        tracked = step_toward(tracked, target, rate);
        trajectory.push((step, origin + tracked));
    }

    Ok(SpoofOutcome {
        captured: true,
        capture_step,
        achieved_dt: tracked * campaign.chip_duration,
        steps: step,
        trajectory,
    })
}
