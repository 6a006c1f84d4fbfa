//! Per-slot phase extraction at the receive frequency, velocity-aided
//! unwrapping and same-pair distance tracks.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{max_unambiguous_speed, phase_to_distance_delta, wrap_phase, Medium};
use crate::sim::RawCapture;
use crate::tx::ToneSchedule;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DemodConfig {
    /// Length of the multipath-free analysis window, seconds.
    pub win_los: f64,
    pub frame_rate: f64,
    pub fft_bin_width_cap: f64,
    pub receive_frequency: f64,
    /// Samples skipped after the expected arrival before the window opens.
    pub guard_samples: usize,
    /// Expected direct-path delay of the beacon, seconds after slot start.
    pub arrival_delay: f64,
    /// Coefficient magnitude below which a frame is flagged low-SNR.
    pub noise_floor: f64,
    /// Increments used by the unwrap velocity predictor.
    pub velocity_window: usize,
    /// Per-step weight decay of the predictor (newest weight 1).
    pub velocity_decay: f64,
    /// Re-estimate each window at its Doppler-shifted frequency.
    pub doppler_refine: bool,
}

impl Default for DemodConfig {
    fn default() -> Self {
        DemodConfig {
            win_los: 1e-3,
            frame_rate: 1.0 / 3e-3,
            fft_bin_width_cap: 2000.0,
            receive_frequency: 7000.0,
            guard_samples: 6,
            arrival_delay: 1e-3,
            noise_floor: 1e-4,
            velocity_window: 5,
            velocity_decay: 0.7,
            doppler_refine: true,
        }
    }
}

pub const MIN_WIN_LOS: f64 = 0.5e-3;

impl DemodConfig {
    pub fn validate(&self, schedule: &ToneSchedule, sample_rate: f64) -> Result<()> {
        if self.win_los < MIN_WIN_LOS - 1e-12 {
            return Err(Error::config(format!(
                "win_los {} s is below the 0.5 ms minimum",
                self.win_los
            )));
        }
        if 1.0 / self.win_los > self.fft_bin_width_cap + 1e-9 {
            return Err(Error::config(format!(
                "bin width {} Hz exceeds the {} Hz cap",
                1.0 / self.win_los,
                self.fft_bin_width_cap
            )));
        }
        if (self.frame_rate * schedule.hop_period - 1.0).abs() > 0.01 {
            return Err(Error::config(format!(
                "frame rate {} Hz does not match the {} s hop period",
                self.frame_rate, schedule.hop_period
            )));
        }
        if self.receive_frequency != schedule.receive_frequency {
            return Err(Error::config("receive frequency differs from the schedule"));
        }
        let used = self.arrival_delay + self.guard_samples as f64 / sample_rate + self.win_los;
        if self.arrival_delay < 0.0 || used > schedule.hop_period + 1e-12 {
            return Err(Error::config(format!(
                "arrival delay + guard + window = {used} s does not fit in a {} s slot",
                schedule.hop_period
            )));
        }
        if self.velocity_window == 0 || !(self.velocity_decay > 0.0 && self.velocity_decay <= 1.0) {
            return Err(Error::config("velocity window must be >= 1 and decay in (0, 1]"));
        }
        Ok(())
    }

    fn window(&self, sample_rate: f64) -> usize {
        (self.win_los * sample_rate).round() as usize
    }
}

/// Receive-frequency estimate for one slot of one microphone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameCoefficient {
    pub slot: usize,
    pub pair_id: usize,
    /// Amplitude and phase of `cos(2π f_rcv n / fs + phase)`, `n` counted
    /// from the first capture sample.
    pub coefficient: Complex64,
    pub wrapped_phase: f64,
    pub magnitude: f64,
    pub low_snr: bool,
    pub window_start: usize,
    pub window_len: usize,
}

fn window_start(k: usize, schedule: &ToneSchedule, cfg: &DemodConfig, fs: f64) -> usize {
    ((schedule.slot_start(k) + cfg.arrival_delay) * fs).round() as usize + cfg.guard_samples
}

fn project(x: &[f64], start: usize, len: usize, omega: f64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for n in start..start + len {
        acc += x[n] * Complex64::from_polar(1.0, -omega * n as f64);
    }
    acc * (2.0 / len as f64)
}

/// Least-squares fit of an offset plus a sinusoid at `omega_hat` over the
/// window, returned as the equivalent coefficient at the nominal `omega`
/// referenced to the window centre.
fn project_shifted(x: &[f64], start: usize, len: usize, omega: f64, omega_hat: f64) -> Complex64 {
    let centre = start as f64 + (len as f64 - 1.0) / 2.0;
    let mut ata = Matrix3::<f64>::zeros();
    let mut atb = Vector3::<f64>::zeros();
    for n in start..start + len {
        let (s, c) = (omega_hat * (n as f64 - centre)).sin_cos();
        let row = Vector3::new(c, s, 1.0);
        ata += row * row.transpose();
        atb += row * x[n];
    }
    let Some(sol) = ata.cholesky().map(|ch| ch.solve(&atb)) else {
        return project(x, start, len, omega);
    };
    // x ≈ p cos(a) + q sin(a) = M cos(a + φ) with p = M cos φ, q = -M sin φ
    let z = Complex64::new(sol[0], -sol[1]);
    z * Complex64::from_polar(1.0, -omega * centre)
}

fn make_frame(
    k: usize,
    pair_id: usize,
    coefficient: Complex64,
    cfg: &DemodConfig,
    start: usize,
    len: usize,
) -> FrameCoefficient {
    let magnitude = coefficient.norm();
    FrameCoefficient {
        slot: k,
        pair_id,
        coefficient,
        wrapped_phase: wrap_phase(coefficient.arg()),
        magnitude,
        low_snr: magnitude < cfg.noise_floor,
        window_start: start,
        window_len: len,
    }
}

/// One coefficient per hop slot and microphone, projected from the first
/// `win_los` seconds of the slot that follow the direct-path arrival.
pub fn frame_spectra(
    capture: &RawCapture,
    schedule: &ToneSchedule,
    cfg: &DemodConfig,
) -> Result<Vec<Vec<FrameCoefficient>>> {
    capture.validate()?;
    let fs = capture.sample_rate;
    cfg.validate(schedule, fs)?;
    let len = cfg.window(fs);
    let omega = 2.0 * PI * cfg.receive_frequency / fs;
    let pair_ids = schedule.pair_ids();
    let n = capture.len();
    for k in 0..schedule.slots.len() {
        let s = window_start(k, schedule, cfg, fs);
        if s + len > n {
            return Err(Error::TruncatedCapture {
                frame: k,
                needed: s + len,
                available: n,
            });
        }
    }
    Ok(capture
        .channels
        .par_iter()
        .map(|x| {
            (0..schedule.slots.len())
                .map(|k| {
                    let s = window_start(k, schedule, cfg, fs);
                    make_frame(k, pair_ids[k], project(x, s, len, omega), cfg, s, len)
                })
                .collect()
        })
        .collect())
}

/// Re-estimates every frame at `f_rcv + offsets[mic][slot]` Hz.
pub fn refine_spectra(
    capture: &RawCapture,
    frames: &[Vec<FrameCoefficient>],
    offsets: &[Vec<f64>],
    cfg: &DemodConfig,
) -> Vec<Vec<FrameCoefficient>> {
    let fs = capture.sample_rate;
    let omega = 2.0 * PI * cfg.receive_frequency / fs;
    capture
        .channels
        .par_iter()
        .zip(frames.par_iter())
        .zip(offsets.par_iter())
        .map(|((x, fr), off)| {
            fr.iter()
                .zip(off)
                .map(|(f, &df)| {
                    let omega_hat = 2.0 * PI * (cfg.receive_frequency + df) / fs;
                    let c = project_shifted(x, f.window_start, f.window_len, omega, omega_hat);
                    make_frame(f.slot, f.pair_id, c, cfg, f.window_start, f.window_len)
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnwrapConfig {
    pub velocity_aided: bool,
    pub window: usize,
    pub decay: f64,
}

impl Default for UnwrapConfig {
    fn default() -> Self {
        UnwrapConfig {
            velocity_aided: true,
            window: 5,
            decay: 0.7,
        }
    }
}

impl From<&DemodConfig> for UnwrapConfig {
    fn from(c: &DemodConfig) -> Self {
        UnwrapConfig {
            velocity_aided: true,
            window: c.velocity_window,
            decay: c.velocity_decay,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Unwrapped {
    pub phase: Vec<f64>,
    /// False once any step implied a speed above twice the classic bound.
    pub reliable: bool,
    /// First step that broke the bound.
    pub unreliable_from: Option<usize>,
}

/// Weighted least-squares slope of the last `window` increments.
fn predicted_step(u: &[f64], window: usize, decay: f64) -> f64 {
    let m = window.min(u.len() - 1);
    if m == 0 {
        return 0.0;
    }
    let pts = &u[u.len() - 1 - m..];
    let (mut sw, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (i, &y) in pts.iter().enumerate() {
        let age = (m - i) as i32;
        let w = decay.powi(age);
        let x = i as f64;
        sw += w;
        sx += w * x;
        sy += w * y;
        sxx += w * x * x;
        sxy += w * x * y;
    }
    let den = sw * sxx - sx * sx;
    if den.abs() < 1e-300 {
        pts[m] - pts[m - 1]
    } else {
        (sw * sxy - sx * sy) / den
    }
}

/// Unwraps one same-pair phase stream.
///
/// Classic unwrapping takes the step nearest zero. The velocity-aided
/// variant takes the step nearest the extrapolated recent velocity, which
/// keeps the wrap direction right up to one full turn per step.
pub fn unwrap_phase(wrapped: &[f64], cfg: &UnwrapConfig) -> Unwrapped {
    let mut phase = Vec::with_capacity(wrapped.len());
    let mut unreliable_from = None;
    for (k, &w) in wrapped.iter().enumerate() {
        if k == 0 {
            phase.push(w);
            continue;
        }
        let d0 = wrap_phase(w - wrapped[k - 1]);
        let step = if cfg.velocity_aided {
            let p = predicted_step(&phase, cfg.window, cfg.decay);
            d0 + 2.0 * PI * ((p - d0) / (2.0 * PI)).round()
        } else {
            d0
        };
        if step.abs() > 2.0 * PI && unreliable_from.is_none() {
            unreliable_from = Some(k);
        }
        phase.push(phase[k - 1] + step);
    }
    Unwrapped {
        phase,
        reliable: unreliable_from.is_none(),
        unreliable_from,
    }
}

/// Distance track of one microphone.
#[derive(Debug, Clone, PartialEq)]
pub struct MicTrack {
    pub frames: Vec<FrameCoefficient>,
    /// Unwrapped phase of each frame within its own pair stream.
    pub unwrapped_phase: Vec<f64>,
    /// Metres relative to frame 0; positive is away from the microphone.
    pub distance_change: Vec<f64>,
    pub valid: Vec<bool>,
    pub reliable: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseTrack {
    pub mics: Vec<MicTrack>,
    pub frame_period: f64,
}

impl PhaseTrack {
    pub fn frame_count(&self) -> usize {
        self.mics.first().map_or(0, |m| m.frames.len())
    }
}

/// Frames used to align a later stream with the first one.
const ALIGN_FRAMES: usize = 4;

fn merge_streams(
    frames: &[FrameCoefficient],
    schedule: &ToneSchedule,
    medium: &Medium,
    ucfg: &UnwrapConfig,
) -> Result<(Vec<f64>, Vec<f64>, bool)> {
    let n = frames.len();
    let pairs = schedule.distinct_pairs();
    let mut unwrapped = vec![0.0; n];
    let mut dist = vec![f64::NAN; n];
    let mut reliable = true;
    let mut streams: Vec<(usize, Vec<usize>)> = Vec::new();
    for (k, f) in frames.iter().enumerate() {
        match streams.iter_mut().find(|(p, _)| *p == f.pair_id) {
            Some((_, v)) => v.push(k),
            None => streams.push((f.pair_id, vec![k])),
        }
    }
    let mut reference: Option<Vec<usize>> = None;
    for (pair, idx) in &streams {
        let wrapped: Vec<f64> = idx.iter().map(|&k| frames[k].wrapped_phase).collect();
        let u = unwrap_phase(&wrapped, ucfg);
        reliable &= u.reliable;
        let fp = pairs[*pair].primary;
        let mut d = Vec::with_capacity(idx.len());
        for (j, &k) in idx.iter().enumerate() {
            unwrapped[k] = u.phase[j];
            // receding beacon lowers the phase
            d.push(phase_to_distance_delta(-(u.phase[j] - u.phase[0]), fp, medium)?);
        }
        let offset = match &reference {
            None => 0.0,
            Some(r) => {
                // align against the first stream interpolated at this
                // stream's early frames
                let mut acc = 0.0;
                let mut cnt = 0;
                for (j, &k) in idx.iter().enumerate() {
                    let pos = r.partition_point(|&x| x < k);
                    if pos == 0 || pos >= r.len() {
                        continue;
                    }
                    let (k0, k1) = (r[pos - 1], r[pos]);
                    let a = (k - k0) as f64 / (k1 - k0) as f64;
                    let interp = dist[k0] * (1.0 - a) + dist[k1] * a;
                    acc += interp - d[j];
                    cnt += 1;
                    if cnt == ALIGN_FRAMES {
                        break;
                    }
                }
                if cnt == 0 {
                    0.0
                } else {
                    acc / cnt as f64
                }
            }
        };
        for (j, &k) in idx.iter().enumerate() {
            dist[k] = d[j] + offset;
        }
        if reference.is_none() {
            reference = Some(idx.clone());
        }
    }
    Ok((unwrapped, dist, reliable))
}

/// Unwraps each pair stream and merges the streams into one distance-change
/// series per microphone at the slot rate.
pub fn track_range(
    frames: &[Vec<FrameCoefficient>],
    schedule: &ToneSchedule,
    medium: &Medium,
    cfg: &DemodConfig,
) -> Result<PhaseTrack> {
    let ucfg = UnwrapConfig::from(cfg);
    let mics = frames
        .iter()
        .map(|fr| {
            if fr.len() != schedule.slots.len() {
                return Err(Error::arg("frame count differs from schedule slots"));
            }
            let (unwrapped_phase, distance_change, reliable) = merge_streams(fr, schedule, medium, &ucfg)?;
            Ok(MicTrack {
                frames: fr.clone(),
                unwrapped_phase,
                distance_change,
                valid: fr.iter().map(|f| !f.low_snr && reliable).collect(),
                reliable,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PhaseTrack {
        mics,
        frame_period: schedule.hop_period,
    })
}

/// Doppler offset of every frame implied by a distance track.
fn doppler_offsets(track: &PhaseTrack, schedule: &ToneSchedule, medium: &Medium) -> Vec<Vec<f64>> {
    let t = track.frame_period;
    track
        .mics
        .iter()
        .map(|m| {
            let d = &m.distance_change;
            let n = d.len();
            (0..n)
                .map(|k| {
                    let v = if n < 2 {
                        0.0
                    } else if k == 0 {
                        (d[1] - d[0]) / t
                    } else if k == n - 1 {
                        (d[n - 1] - d[n - 2]) / t
                    } else {
                        (d[k + 1] - d[k - 1]) / (2.0 * t)
                    };
                    -schedule.slots[k].primary * v / medium.speed_of_sound
                })
                .collect()
        })
        .collect()
}

/// Full demodulation: projection, unwrapping, stream merging and (when
/// enabled) a second pass at the Doppler-shifted frequency.
pub fn demodulate(
    capture: &RawCapture,
    schedule: &ToneSchedule,
    medium: &Medium,
    cfg: &DemodConfig,
) -> Result<PhaseTrack> {
    let frames = frame_spectra(capture, schedule, cfg)?;
    let track = track_range(&frames, schedule, medium, cfg)?;
    if !cfg.doppler_refine {
        return Ok(track);
    }
    let offsets = doppler_offsets(&track, schedule, medium);
    let refined = refine_spectra(capture, &frames, &offsets, cfg);
    track_range(&refined, schedule, medium, cfg)
}

/// Classic and velocity-aided speed limits for a same-pair stream.
pub fn stream_speed_limits(schedule: &ToneSchedule, medium: &Medium) -> Result<(f64, f64)> {
    let streams = schedule.distinct_pairs().len().max(1);
    let step = schedule.hop_period * streams as f64;
    let f = schedule.max_primary();
    Ok((
        max_unambiguous_speed(f, step, medium, false)?,
        max_unambiguous_speed(f, step, medium, true)?,
    ))
}

/// Writes `frame_index,mic_id,wrapped_phase,unwrapped_phase,distance_change`.
pub fn write_phase_csv(track: &PhaseTrack, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["frame_index", "mic_id", "wrapped_phase", "unwrapped_phase", "distance_change"])?;
    for k in 0..track.frame_count() {
        for (i, m) in track.mics.iter().enumerate() {
            w.write_record(&[
                k.to_string(),
                i.to_string(),
                format!("{:.9}", m.frames[k].wrapped_phase),
                format!("{:.9}", m.unwrapped_phase[k]),
                format!("{:.9e}", m.distance_change[k]),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save_phase_csv(track: &PhaseTrack, path: impl AsRef<Path>) -> Result<()> {
    write_phase_csv(track, std::fs::File::create(path)?)
}

#[cfg(test)]
mod tests;
