//! Dual-tone transmit plans with transparent frequency hopping.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lowest primary frequency at which the microphone nonlinearity is
/// exercised.
pub const NONLINEAR_REGIME_MIN: f64 = 25_000.0;
pub const CAPTURE_RATE: f64 = 16_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToneSlot {
    pub primary: f64,
    pub secondary: f64,
}

/// Limits checked when a schedule is built.
///
/// The defaults enforce every schedule invariant. Baseline experiments relax
/// `require_hopping` (single fixed pair) or `min_primary` (sub-25 kHz primaries).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleRules {
    pub min_primary: f64,
    pub capture_rate: f64,
    pub require_hopping: bool,
}

impl Default for ScheduleRules {
    fn default() -> Self {
        ScheduleRules {
            min_primary: NONLINEAR_REGIME_MIN,
            capture_rate: CAPTURE_RATE,
            require_hopping: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToneSchedule {
    pub hop_period: f64,
    pub slots: Vec<ToneSlot>,
    pub receive_frequency: f64,
}

impl ToneSchedule {
    pub fn validate(&self, rules: &ScheduleRules) -> Result<()> {
        if !(self.hop_period.is_finite() && self.hop_period > 0.0) {
            return Err(Error::config("hop period must be positive"));
        }
        if self.slots.is_empty() {
            return Err(Error::config("schedule has no slots"));
        }
        if !(self.receive_frequency > 0.0 && self.receive_frequency < rules.capture_rate / 2.0) {
            return Err(Error::config(format!(
                "receive frequency {} Hz must lie in (0, {}) Hz",
                self.receive_frequency,
                rules.capture_rate / 2.0
            )));
        }
        for (k, s) in self.slots.iter().enumerate() {
            if s.primary - s.secondary != self.receive_frequency {
                return Err(Error::config(format!(
                    "slot {k}: {} - {} != receive frequency {}",
                    s.primary, s.secondary, self.receive_frequency
                )));
            }
            if s.primary < rules.min_primary {
                return Err(Error::config(format!(
                    "slot {k}: primary {} Hz below the {} Hz nonlinear regime",
                    s.primary, rules.min_primary
                )));
            }
        }
        if rules.require_hopping {
            for (k, w) in self.slots.windows(2).enumerate() {
                if w[0].primary == w[1].primary {
                    return Err(Error::config(format!(
                        "slots {k} and {} share primary {} Hz, schedule does not hop",
                        k + 1,
                        w[0].primary
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        self.slots.len() as f64 * self.hop_period
    }

    pub fn slot_start(&self, k: usize) -> f64 {
        k as f64 * self.hop_period
    }

    /// Slot active at time `t`, clamped to the schedule.
    pub fn slot_at(&self, t: f64) -> usize {
        if t <= 0.0 {
            return 0;
        }
        ((t / self.hop_period).floor() as usize).min(self.slots.len() - 1)
    }

    /// Distinct (primary, secondary) pairs in order of first use.
    pub fn distinct_pairs(&self) -> Vec<ToneSlot> {
        let mut out: Vec<ToneSlot> = Vec::new();
        for s in &self.slots {
            if !out.contains(s) {
                out.push(*s);
            }
        }
        out
    }

    /// Index into [`distinct_pairs`](Self::distinct_pairs) for every slot.
    pub fn pair_ids(&self) -> Vec<usize> {
        let pairs = self.distinct_pairs();
        self.slots
            .iter()
            .map(|s| pairs.iter().position(|p| p == s).unwrap())
            .collect()
    }

    pub fn max_primary(&self) -> f64 {
        self.slots.iter().map(|s| s.primary).fold(0.0, f64::max)
    }

    /// Accumulated phase of the primary (`primary = true`) or secondary tone
    /// at time `t`. Before zero the cycle of distinct pairs runs backwards,
    /// as if the transmitter had been hopping all along. After the end the
    /// last slot continues.
    pub fn tone_phase(&self, t: f64, primary: bool) -> f64 {
        let freq = |s: &ToneSlot| if primary { s.primary } else { s.secondary };
        if t <= 0.0 {
            let cycle = self.distinct_pairs().len().min(self.slots.len()) as i64;
            let mut acc = 0.0;
            let mut j = -1i64;
            loop {
                let f = freq(&self.slots[j.rem_euclid(cycle) as usize]);
                let lo = j as f64 * self.hop_period;
                if t >= lo {
                    return 2.0 * PI * (acc - f * (lo + self.hop_period - t));
                }
                acc -= f * self.hop_period;
                j -= 1;
            }
        }
        let k = self.slot_at(t);
        let mut acc = 0.0;
        for s in &self.slots[..k] {
            acc += freq(s) * self.hop_period;
        }
        2.0 * PI * (acc + freq(&self.slots[k]) * (t - self.slot_start(k)))
    }
}

fn slot_count(duration: f64, hop_period: f64) -> usize {
    // tolerate representation error, e.g. 12 ms / 3 ms
    let r = duration / hop_period;
    let n = (r - 1e-9).ceil();
    n.max(1.0) as usize
}

/// Two-slot round robin between `base_primary` and `base_primary + hop_step`.
pub fn build_hop_schedule(
    f_rcv: f64,
    base_primary: f64,
    hop_step: f64,
    hop_period: f64,
    duration: f64,
) -> Result<ToneSchedule> {
    build_hop_schedule_with(
        f_rcv,
        base_primary,
        hop_step,
        hop_period,
        duration,
        &ScheduleRules::default(),
    )
}

/// Rounds a frequency to the 1/1024 Hz grid. Differences of grid values
/// are exact in f64, so `primary - secondary == f_rcv` holds bit for bit.
fn snap(f: f64) -> f64 {
    (f * 1024.0).round() / 1024.0
}

pub fn build_hop_schedule_with(
    f_rcv: f64,
    base_primary: f64,
    hop_step: f64,
    hop_period: f64,
    duration: f64,
    rules: &ScheduleRules,
) -> Result<ToneSchedule> {
    if !(f_rcv > 0.0) {
        return Err(Error::config("receive frequency must be positive"));
    }
    if !(hop_step > 0.0) {
        return Err(Error::config("hop step must be positive"));
    }
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(Error::config("duration must be positive"));
    }
    if !(hop_period > 0.0 && hop_period.is_finite()) {
        return Err(Error::config("hop period must be positive"));
    }
    let (f_rcv, base_primary, hop_step) = (snap(f_rcv), snap(base_primary), snap(hop_step));
    let a = ToneSlot {
        primary: base_primary,
        secondary: base_primary - f_rcv,
    };
    let b = ToneSlot {
        primary: base_primary + hop_step,
        secondary: base_primary + hop_step - f_rcv,
    };
    let slots = (0..slot_count(duration, hop_period))
        .map(|k| if k % 2 == 0 { a } else { b })
        .collect();
    let s = ToneSchedule {
        hop_period,
        slots,
        receive_frequency: f_rcv,
    };
    s.validate(rules)?;
    Ok(s)
}

/// Single fixed pair for the whole duration. This is the no-hopping
/// baseline and does not satisfy the hopping invariant.
pub fn build_fixed_schedule(
    f_rcv: f64,
    primary: f64,
    hop_period: f64,
    duration: f64,
    min_primary: f64,
) -> Result<ToneSchedule> {
    if !(duration > 0.0 && hop_period > 0.0) {
        return Err(Error::config("duration and hop period must be positive"));
    }
    let (f_rcv, primary) = (snap(f_rcv), snap(primary));
    let slot = ToneSlot {
        primary,
        secondary: primary - f_rcv,
    };
    let s = ToneSchedule {
        hop_period,
        slots: vec![slot; slot_count(duration, hop_period)],
        receive_frequency: f_rcv,
    };
    s.validate(&ScheduleRules {
        min_primary,
        require_hopping: false,
        ..ScheduleRules::default()
    })?;
    Ok(s)
}

/// Sampled primary and secondary source waveforms.
#[derive(Debug, Clone)]
pub struct TransmitWaveforms {
    pub primary_samples: Vec<f64>,
    pub secondary_samples: Vec<f64>,
    pub sample_rate: f64,
    /// Time of sample 0 in seconds. Negative when a lead-in precedes the
    /// schedule.
    pub start_time: f64,
    pub phase_continuous: bool,
    pub schedule: ToneSchedule,
}

impl TransmitWaveforms {
    pub fn end_time(&self) -> f64 {
        self.start_time + self.primary_samples.len() as f64 / self.sample_rate
    }
}

pub fn synthesize_transmit(schedule: &ToneSchedule, sample_rate: f64) -> Result<TransmitWaveforms> {
    synthesize_transmit_padded(schedule, sample_rate, 0.0, 0.0)
}

/// Like [`synthesize_transmit`] with `lead` seconds before the schedule and
/// `tail` seconds after it, both continuing the edge slots. The simulator
/// needs the lead so that microphones hear a settled signal at time zero.
pub fn synthesize_transmit_padded(
    schedule: &ToneSchedule,
    sample_rate: f64,
    lead: f64,
    tail: f64,
) -> Result<TransmitWaveforms> {
    if !(sample_rate.is_finite() && sample_rate > 0.0) {
        return Err(Error::config("sample rate must be positive"));
    }
    let fmax = schedule.max_primary();
    if sample_rate < 2.0 * fmax {
        return Err(Error::config(format!(
            "sample rate {sample_rate} Hz is below Nyquist for {fmax} Hz"
        )));
    }
    if lead < 0.0 || tail < 0.0 {
        return Err(Error::config("lead and tail must be non-negative"));
    }
    let n_lead = (lead * sample_rate).round() as usize;
    let n_body = (schedule.duration() * sample_rate).round() as usize;
    let n_tail = (tail * sample_rate).round() as usize;
    let n = n_lead + n_body + n_tail;
    let start_time = -(n_lead as f64) / sample_rate;
    let mut primary = Vec::with_capacity(n);
    let mut secondary = Vec::with_capacity(n);
    for i in 0..n {
        let t = start_time + i as f64 / sample_rate;
        primary.push(schedule.tone_phase(t, true).sin());
        secondary.push(schedule.tone_phase(t, false).sin());
    }
    Ok(TransmitWaveforms {
        primary_samples: primary,
        secondary_samples: secondary,
        sample_rate,
        start_time,
        phase_continuous: true,
        schedule: schedule.clone(),
    })
}
