//! Voice-band versus tracking-band energy of a capture.

use std::io::Write;
use std::path::Path;

use rustfft::{num_complex::Complex64, FftPlanner};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::sim::RawCapture;
use crate::tx::CAPTURE_RATE;

/// Welch segment length: 32 ms at 16 kHz.
pub const WELCH_LEN: usize = 512;
/// Band powers never drop below this, dB.
pub const FLOOR_DB: f64 = -200.0;

pub const VOICE_BAND: (f64, f64) = (0.0, 4000.0);
pub const TRACKING_BAND: (f64, f64) = (6000.0, 8000.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BandReport {
    /// Power in 0-4 kHz, dB re full scale.
    pub voice_band_power: f64,
    /// Power in 6-8 kHz, dB re full scale.
    pub tracking_band_power: f64,
    /// Power outside the line band relative to inside it, dB. With a
    /// reference only the excess over the reference counts.
    pub leakage_ratio: f64,
    /// Voice-band change against the reference, dB.
    pub voice_band_delta: Option<f64>,
    /// Tracking-band change against the reference, dB.
    pub tracking_band_delta: Option<f64>,
}

/// One-sided power spectrum averaged over Hann-windowed segments with 50 %
/// overlap and over all channels. Bin `k` is at `k · fs / WELCH_LEN`; the
/// bins sum to the mean AC power.
///
/// Each segment has its mean removed first. The square law leaves a large
/// DC term that an AC-coupled microphone would never pass on.
pub fn welch_psd(capture: &RawCapture) -> Result<Vec<f64>> {
    capture.validate()?;
    let n = capture.len();
    if n < WELCH_LEN {
        return Err(Error::InsufficientData(format!(
            "capture has {n} samples, a spectrum needs {WELCH_LEN}"
        )));
    }
    let win: Vec<f64> = (0..WELCH_LEN)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / WELCH_LEN as f64).cos())
        .collect();
    let wpow: f64 = win.iter().map(|w| w * w).sum();
    let fft = FftPlanner::new().plan_fft_forward(WELCH_LEN);
    let hop = WELCH_LEN / 2;
    let mut acc = vec![0.0; WELCH_LEN / 2 + 1];
    let mut count = 0usize;
    let mut buf = vec![Complex64::new(0.0, 0.0); WELCH_LEN];
    for ch in &capture.channels {
        let mut start = 0;
        while start + WELCH_LEN <= n {
            let seg = &ch[start..start + WELCH_LEN];
            let mean = seg.iter().sum::<f64>() / WELCH_LEN as f64;
            for (b, (x, w)) in buf.iter_mut().zip(seg.iter().zip(&win)) {
                *b = Complex64::new((x - mean) * w, 0.0);
            }
            fft.process(&mut buf);
            for (k, a) in acc.iter_mut().enumerate() {
                let p = buf[k].norm_sqr() / (wpow * WELCH_LEN as f64);
                *a += if k == 0 || k == WELCH_LEN / 2 { p } else { 2.0 * p };
            }
            count += 1;
            start += hop;
        }
    }
    for a in acc.iter_mut() {
        *a /= count as f64;
    }
    Ok(acc)
}

fn bin_freq(k: usize) -> f64 {
    k as f64 * CAPTURE_RATE / WELCH_LEN as f64
}

fn band_sum(psd: &[f64], (lo, hi): (f64, f64)) -> f64 {
    psd.iter()
        .enumerate()
        .filter(|(k, _)| (lo..=hi).contains(&bin_freq(*k)))
        .map(|(_, p)| p)
        .sum()
}

fn to_db(p: f64) -> f64 {
    if p > 0.0 {
        (10.0 * p.log10()).max(FLOOR_DB)
    } else {
        FLOOR_DB
    }
}

/// Band powers of `capture`. With `reference` (the same scene without the
/// tracking tones) the report adds per-band deltas, and the leakage ratio
/// is taken on the power the tracking signal adds.
pub fn band_energy_report(capture: &RawCapture, reference: Option<&RawCapture>) -> Result<BandReport> {
    let psd = welch_psd(capture)?;
    let voice = band_sum(&psd, VOICE_BAND);
    let tracking = band_sum(&psd, TRACKING_BAND);
    let (excess, deltas) = match reference {
        Some(r) => {
            if r.len() != capture.len() || r.channels.len() != capture.channels.len() {
                return Err(Error::arg("reference capture has a different shape"));
            }
            let rp = welch_psd(r)?;
            let ex: Vec<f64> = psd.iter().zip(&rp).map(|(a, b)| (a - b).max(0.0)).collect();
            let d = (
                to_db(voice) - to_db(band_sum(&rp, VOICE_BAND)),
                to_db(tracking) - to_db(band_sum(&rp, TRACKING_BAND)),
            );
            (ex, Some(d))
        }
        None => (psd.clone(), None),
    };
    let inside = band_sum(&excess, TRACKING_BAND);
    let outside = excess.iter().sum::<f64>() - inside;
    let leakage_ratio = if inside > 0.0 {
        to_db(outside) - to_db(inside)
    } else {
        0.0
    };
    Ok(BandReport {
        voice_band_power: to_db(voice),
        tracking_band_power: to_db(tracking),
        leakage_ratio,
        voice_band_delta: deltas.map(|d| d.0),
        tracking_band_delta: deltas.map(|d| d.1),
    })
}

/// Rows `quantity,value` with dB values.
pub fn write_band_csv(r: &BandReport, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["quantity", "db"])?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:.4}"));
    w.write_record(["voice_band_power", &format!("{:.4}", r.voice_band_power)])?;
    w.write_record(["tracking_band_power", &format!("{:.4}", r.tracking_band_power)])?;
    w.write_record(["leakage_ratio", &format!("{:.4}", r.leakage_ratio)])?;
    w.write_record(["voice_band_delta", &opt(r.voice_band_delta)])?;
    w.write_record(["tracking_band_delta", &opt(r.tracking_band_delta)])?;
    w.flush()?;
    Ok(())
}

pub fn save_band_csv(r: &BandReport, path: impl AsRef<Path>) -> Result<()> {
    write_band_csv(r, std::fs::File::create(path)?)
}
