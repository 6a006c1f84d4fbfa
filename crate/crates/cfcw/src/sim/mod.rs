//! Ground-truth acoustic simulator.
//!
//! Image-source propagation of the two transmit tones to every microphone,
//! square-law capture, anti-alias filtering and decimation to 16 kHz.

mod filter;
mod geometry;
mod wav;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{Medium, NonlinearityModel};
use crate::tx::{TransmitWaveforms, CAPTURE_RATE};

pub use filter::{fir_gain, kaiser_lowpass, FractionalDelay};
pub use geometry::{ArrayGeometry, Disk, Point3, Reflector, MIC_COUNT, MIC_SPACING};
pub use wav::{read_wav, write_wav};

/// Largest beacon range the tracker supports.
pub const MAX_RANGE: f64 = 0.70;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttenuationModel {
    /// Amplitude falls as `r^-spreading_exponent`.
    pub spreading_exponent: f64,
    /// Absorption in dB per metre per kHz.
    pub absorption_db_per_m_per_khz: f64,
}

impl Default for AttenuationModel {
    fn default() -> Self {
        AttenuationModel {
            spreading_exponent: 1.0,
            absorption_db_per_m_per_khz: 0.0,
        }
    }
}

impl AttenuationModel {
    /// Amplitude factor over a path of length `r` at frequency `f`.
    pub fn gain(&self, r: f64, f: f64) -> f64 {
        let spread = r.max(1e-3).powf(-self.spreading_exponent);
        let absorb = 10f64.powf(-self.absorption_db_per_m_per_khz * (f / 1000.0) * r / 20.0);
        spread * absorb
    }
}

/// Additive ambient sound mixed into a capture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmbientSource {
    /// 16 kHz mono waveform file; `None` uses synthetic voice-band noise.
    #[serde(default)]
    pub file: Option<String>,
    pub level_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    #[serde(default)]
    pub medium: Medium,
    #[serde(default)]
    pub geometry: ArrayGeometry,
    #[serde(default)]
    pub reflectors: Vec<Reflector>,
    #[serde(default)]
    pub ambient_sources: Vec<AmbientSource>,
    #[serde(default)]
    pub attenuation: AttenuationModel,
    #[serde(default = "default_primary_level")]
    pub primary_level: f64,
    #[serde(default = "default_secondary_level")]
    pub secondary_level: f64,
}

fn default_primary_level() -> f64 {
    1.0
}

fn default_secondary_level() -> f64 {
    0.2
}

impl Default for Scene {
    fn default() -> Self {
        Scene {
            medium: Medium::default(),
            geometry: ArrayGeometry::standard(),
            reflectors: Vec::new(),
            ambient_sources: Vec::new(),
            attenuation: AttenuationModel::default(),
            primary_level: default_primary_level(),
            secondary_level: default_secondary_level(),
        }
    }
}

impl Scene {
    pub fn validate(&self) -> Result<()> {
        self.medium
            .validate()
            .map_err(|e| Error::InvalidScene(e.to_string()))?;
        self.geometry.validate()?;
        for r in &self.reflectors {
            r.validate()?;
        }
        let a = &self.attenuation;
        if !(a.spreading_exponent >= 0.0 && a.absorption_db_per_m_per_khz >= 0.0) {
            return Err(Error::InvalidScene("attenuation must be non-negative".into()));
        }
        if !(self.primary_level >= 0.0 && self.secondary_level >= 0.0) {
            return Err(Error::InvalidScene("source levels must be non-negative".into()));
        }
        Ok(())
    }
}

/// Uniformly sampled beacon trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionPath {
    pub timestamps: Vec<f64>,
    pub positions: Vec<Point3>,
}

impl MotionPath {
    pub fn new(timestamps: Vec<f64>, positions: Vec<Point3>) -> Result<Self> {
        let p = MotionPath {
            timestamps,
            positions,
        };
        p.validate()?;
        Ok(p)
    }

    /// Samples `f` on `[t0, t1]` every `dt` seconds.
    pub fn from_fn(t0: f64, t1: f64, dt: f64, f: impl Fn(f64) -> Point3) -> Result<Self> {
        let n = ((t1 - t0) / dt).round() as usize + 1;
        let ts: Vec<f64> = (0..n).map(|i| t0 + i as f64 * dt).collect();
        let ps = ts.iter().map(|&t| f(t)).collect();
        Self::new(ts, ps)
    }

    pub fn stationary(p: Point3, t0: f64, t1: f64) -> Self {
        Self::from_fn(t0, t1, (t1 - t0) / 4.0, |_| p).expect("valid stationary path")
    }

    pub fn validate(&self) -> Result<()> {
        if self.timestamps.len() < 2 || self.timestamps.len() != self.positions.len() {
            return Err(Error::InvalidScene(
                "motion path needs at least two samples and matching lengths".into(),
            ));
        }
        if !self.timestamps.windows(2).all(|w| w[1] > w[0]) {
            return Err(Error::InvalidScene("timestamps must strictly increase".into()));
        }
        let dt = self.dt();
        for w in self.timestamps.windows(2) {
            if ((w[1] - w[0]) - dt).abs() > 1e-6 * dt.max(1e-9) + 1e-12 {
                return Err(Error::InvalidScene("timestamps must be uniform".into()));
            }
        }
        if !self.positions.iter().all(|p| p.iter().all(|v| v.is_finite())) {
            return Err(Error::InvalidScene("non-finite position".into()));
        }
        Ok(())
    }

    pub fn start(&self) -> f64 {
        self.timestamps[0]
    }

    pub fn end(&self) -> f64 {
        *self.timestamps.last().unwrap()
    }

    fn dt(&self) -> f64 {
        (self.end() - self.start()) / (self.timestamps.len() - 1) as f64
    }

    fn knot(&self, i: isize) -> Point3 {
        let n = self.positions.len() as isize;
        self.positions[i.clamp(0, n - 1) as usize]
    }

    /// Catmull-Rom interpolated position; held constant outside the path.
    pub fn position_at(&self, t: f64) -> Point3 {
        let u = (t - self.start()) / self.dt();
        let n = self.positions.len();
        if u <= 0.0 {
            return self.positions[0];
        }
        if u >= (n - 1) as f64 {
            return self.positions[n - 1];
        }
        let i = u.floor() as isize;
        let s = u - i as f64;
        let (p0, p1, p2, p3) = (self.knot(i - 1), self.knot(i), self.knot(i + 1), self.knot(i + 2));
        let s2 = s * s;
        let s3 = s2 * s;
        (p1 * 2.0 + (p2 - p0) * s + (p0 * 2.0 - p1 * 5.0 + p2 * 4.0 - p3) * s2
            + (p1 * 3.0 - p0 - p2 * 3.0 + p3) * s3)
            * 0.5
    }

    pub fn velocity_at(&self, t: f64) -> Point3 {
        let h = self.dt() * 1e-3;
        (self.position_at(t + h) - self.position_at(t - h)) / (2.0 * h)
    }

    /// Largest speed between consecutive samples.
    pub fn max_speed(&self) -> f64 {
        let dt = self.dt();
        self.positions
            .windows(2)
            .map(|w| (w[1] - w[0]).norm() / dt)
            .fold(0.0, f64::max)
    }
}

/// Guard interval simulated on both sides of the capture so the capture
/// filter never runs off the edge of the data.
pub const FIELD_PAD: f64 = 1e-3;

/// Per-microphone pressure at the simulation rate.
#[derive(Debug, Clone)]
pub struct PressureField {
    pub sample_rate: f64,
    /// Time of sample 0, equal to `-FIELD_PAD` for simulator output.
    pub start_time: f64,
    /// Time span the capture should cover, starting at zero.
    pub duration: f64,
    pub channels: Vec<Vec<f64>>,
}

/// Multichannel 16 kHz microphone recording.
#[derive(Debug, Clone, PartialEq)]
pub struct RawCapture {
    pub sample_rate: f64,
    pub channels: Vec<Vec<f64>>,
    pub duration: f64,
}

impl RawCapture {
    pub fn new(sample_rate: f64, channels: Vec<Vec<f64>>) -> Result<Self> {
        let n = channels.first().map_or(0, |c| c.len());
        let c = RawCapture {
            sample_rate,
            duration: n as f64 / sample_rate,
            channels,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_rate != CAPTURE_RATE {
            return Err(Error::arg(format!(
                "capture rate must be 16 kHz, got {}",
                self.sample_rate
            )));
        }
        if self.channels.is_empty() {
            return Err(Error::arg("capture has no channels"));
        }
        let n = self.channels[0].len();
        if self.channels.iter().any(|c| c.len() != n) {
            return Err(Error::arg("capture channels differ in length"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, |c| c.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn retarded_delay(t: f64, path: &MotionPath, target: &Point3, c: f64) -> (f64, f64) {
    // solve t - te = |P(te) - target| / c by fixed-point iteration; the
    // contraction factor is v/c, so a few steps reach machine precision
    let mut r = (path.position_at(t) - target).norm();
    for _ in 0..4 {
        r = (path.position_at(t - r / c) - target).norm();
    }
    (t - r / c, r)
}

fn check_collisions(scene: &Scene, path: &MotionPath) -> Result<()> {
    let centroid = scene.geometry.centroid();
    for (k, r) in scene.reflectors.iter().enumerate() {
        let side = r.signed_distance(&centroid);
        for p in &path.positions {
            let d = r.signed_distance(p);
            let touching = d.abs() < 5e-3 && r.within_extent(&(p - r.n() * d));
            let crossed = r.extent.is_none() && d * side < 0.0;
            if touching || crossed {
                return Err(Error::InvalidScene(format!(
                    "beacon collides with reflector {k} at ({:.3}, {:.3}, {:.3})",
                    p.x, p.y, p.z
                )));
            }
        }
    }
    Ok(())
}

/// Propagates both transmit tones to every microphone.
///
/// The moving beacon's delay is evaluated per output sample in retarded
/// time, so Doppler appears without being modelled explicitly. Output spans
/// the schedule duration at the transmit sample rate.
pub fn propagate(scene: &Scene, path: &MotionPath, tx: &TransmitWaveforms) -> Result<PressureField> {
    scene.validate()?;
    path.validate()?;
    let c = scene.medium.speed_of_sound;
    let fs = tx.sample_rate;
    let duration = tx.schedule.duration();
    let n_pad = (FIELD_PAD * fs).round() as usize;
    let n_out = (duration * fs).round() as usize + 2 * n_pad;
    let t_first = -(n_pad as f64) / fs;
    let centroid = scene.geometry.centroid();
    for p in &path.positions {
        if (p - centroid).norm() > MAX_RANGE {
            return Err(Error::InvalidScene(format!(
                "beacon at {:.3} m exceeds the {MAX_RANGE} m working range",
                (p - centroid).norm()
            )));
        }
    }
    check_collisions(scene, path)?;
    let fd = FractionalDelay::default();
    let margin = (fd.half_width() + 1) as f64 / fs;
    let mut longest: f64 = 0.0;
    for p in &path.positions {
        for m in scene.geometry.mics() {
            longest = longest.max((p - m).norm());
            for r in &scene.reflectors {
                longest = longest.max((p - r.mirror(&m)).norm());
            }
        }
    }
    for m in scene.geometry.mics() {
        let s = scene.geometry.secondary();
        for r in &scene.reflectors {
            longest = longest.max((s - r.mirror(&m)).norm());
        }
    }
    let eps = 0.5 / fs;
    if tx.start_time > t_first - (longest / c + margin) || tx.end_time() < duration + FIELD_PAD + margin - eps {
        return Err(Error::InvalidScene(
            "transmit waveform does not cover the propagation delays; synthesize with a lead-in and tail".into(),
        ));
    }
    if path.start() > t_first - longest / c + eps || path.end() < duration + FIELD_PAD - eps {
        return Err(Error::InvalidScene(
            "motion path must cover the capture plus the propagation lead-in".into(),
        ));
    }

    let att = scene.attenuation;
    let schedule = &tx.schedule;
    let sec = scene.geometry.secondary();
    let mics = scene.geometry.mics();
    let idx = |te: f64| (te - tx.start_time) * fs;

    let channels = mics
        .par_iter()
        .map(|m| {
            let images: Vec<(Point3, f64, usize)> = scene
                .reflectors
                .iter()
                .enumerate()
                .map(|(k, r)| (r.mirror(m), r.coefficient, k))
                .collect();
            // the fixed secondary has constant delays, computed once
            let mut sec_paths = vec![((sec - m).norm(), 1.0)];
            for (img, coef, k) in &images {
                if scene.reflectors[*k].specular_point(&sec, m).is_some() {
                    sec_paths.push(((sec - img).norm(), *coef));
                }
            }
            let mut out = vec![0.0; n_out];
            for (n, o) in out.iter_mut().enumerate() {
                let t = t_first + n as f64 / fs;
                let mut v = 0.0;
                let (te, r) = retarded_delay(t, path, m, c);
                let fp = schedule.slots[schedule.slot_at(te)].primary;
                v += scene.primary_level * att.gain(r, fp) * fd.interpolate(&tx.primary_samples, idx(te));
                for (img, coef, k) in &images {
                    let (te, r) = retarded_delay(t, path, img, c);
                    let p = path.position_at(te);
                    if scene.reflectors[*k].specular_point(&p, m).is_some() {
                        let fp = schedule.slots[schedule.slot_at(te)].primary;
                        v += coef * scene.primary_level * att.gain(r, fp) * fd.interpolate(&tx.primary_samples, idx(te));
                    }
                }
                for &(r, coef) in &sec_paths {
                    let te = t - r / c;
                    let fsec = schedule.slots[schedule.slot_at(te)].secondary;
                    v += coef * scene.secondary_level * att.gain(r, fsec) * fd.interpolate(&tx.secondary_samples, idx(te));
                }
                *o = v;
            }
            out
        })
        .collect();
    Ok(PressureField {
        sample_rate: fs,
        start_time: t_first,
        duration,
        channels,
    })
}

/// Simulation sample rate.
pub const SIM_RATE: f64 = 192e3;
/// Transmit lead-in before time zero, long enough for every echo path.
pub const SIM_LEAD: f64 = 0.01;
/// Transmit tail after the schedule ends.
pub const SIM_TAIL: f64 = 0.003;

/// Transmit, propagate and capture in one call. `path` must cover
/// `[-SIM_LEAD, duration + FIELD_PAD]`.
pub fn simulate_capture(
    scene: &Scene,
    schedule: &crate::tx::ToneSchedule,
    path: &MotionPath,
    nonlinearity: &NonlinearityModel,
) -> Result<RawCapture> {
    let tx = crate::tx::synthesize_transmit_padded(schedule, SIM_RATE, SIM_LEAD, SIM_TAIL)?;
    let field = propagate(scene, path, &tx)?;
    capture(&field, nonlinearity)
}

/// Anti-alias and AC-coupling settings of the capture chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaptureFilter {
    pub taps: usize,
    pub cutoff: f64,
    pub kaiser_beta: f64,
    /// Frequency of an extra zero pair, Hz; 0 disables it. The default sits
    /// on the 16 kHz image of the 7 kHz receive line (9 kHz), which hop
    /// transitions and delayed echoes would otherwise alias onto it.
    pub notch: f64,
    /// One-pole high-pass corner in Hz; 0 (the default) disables it. Its
    /// start-up transient is slow, so the demodulator removes DC itself.
    pub highpass: f64,
}

impl CaptureFilter {
    /// Impulse response at `sample_rate`, unit DC gain, odd length.
    ///
    /// The notch subtracts a Kaiser-windowed cosine at the notch frequency,
    /// scaled to zero the response there. This keeps the filter symmetric
    /// and barely touches the far stopband.
    pub fn kernel(&self, sample_rate: f64) -> Vec<f64> {
        let mut h = kaiser_lowpass(self.taps, self.cutoff, sample_rate, self.kaiser_beta);
        if self.notch <= 0.0 {
            return h;
        }
        let mid = (self.taps / 2) as f64;
        let w = 2.0 * std::f64::consts::PI * self.notch / sample_rate;
        let g: Vec<f64> = (0..self.taps)
            .map(|k| {
                let n = k as f64 - mid;
                filter::kaiser_window(n, mid + 1.0, 8.0) * (w * n).cos()
            })
            .collect();
        let zero_phase = |x: &[f64]| -> f64 {
            x.iter()
                .enumerate()
                .map(|(k, v)| v * (w * (k as f64 - mid)).cos())
                .sum()
        };
        let a = zero_phase(&h) / zero_phase(&g);
        for (hv, gv) in h.iter_mut().zip(&g) {
            *hv -= a * gv;
        }
        let s: f64 = h.iter().sum();
        h.iter_mut().for_each(|v| *v /= s);
        h
    }
}

impl Default for CaptureFilter {
    fn default() -> Self {
        CaptureFilter {
            taps: 129,
            cutoff: 7800.0,
            kaiser_beta: 6.0,
            notch: 9000.0,
            highpass: 0.0,
        }
    }
}

/// Square-law capture at 16 kHz with the default filter chain.
pub fn capture(pressure: &PressureField, nonlinearity: &NonlinearityModel) -> Result<RawCapture> {
    capture_with(pressure, nonlinearity, &CaptureFilter::default())
}

/// Applies `y = A1 x + A2 x²`, a zero-phase anti-alias low-pass, decimation
/// to 16 kHz and a DC-blocking high-pass.
///
/// The low-pass group delay is removed, so output sample `n` corresponds to
/// time `n / 16000` exactly.
pub fn capture_with(
    pressure: &PressureField,
    nonlinearity: &NonlinearityModel,
    filt: &CaptureFilter,
) -> Result<RawCapture> {
    nonlinearity.validate()?;
    let ratio = pressure.sample_rate / CAPTURE_RATE;
    if (ratio - ratio.round()).abs() > 1e-9 || ratio < 1.0 {
        return Err(Error::arg(format!(
            "simulation rate {} is not an integer multiple of 16 kHz",
            pressure.sample_rate
        )));
    }
    let m = ratio.round() as usize;
    let h = filt.kernel(pressure.sample_rate);
    let mid = (h.len() / 2) as isize;
    let origin = -pressure.start_time * pressure.sample_rate;
    if origin < -1e-6 || (origin - origin.round()).abs() > 1e-6 {
        return Err(Error::arg("pressure field must start on a sample at or before time zero"));
    }
    let origin = origin.round() as isize;
    let n_out = (pressure.duration * CAPTURE_RATE).round() as usize;
    let hp_a = if filt.highpass > 0.0 {
        Some((-2.0 * std::f64::consts::PI * filt.highpass / CAPTURE_RATE).exp())
    } else {
        None
    };
    let channels: Vec<Vec<f64>> = pressure
        .channels
        .par_iter()
        .map(|x| {
            let y: Vec<f64> = x.iter().map(|&v| nonlinearity.apply(v)).collect();
            let mut out = Vec::with_capacity(n_out);
            for n in 0..n_out {
                let centre = origin + (n * m) as isize;
                let mut acc = 0.0;
                for (k, hk) in h.iter().enumerate() {
                    let i = centre + mid - k as isize;
                    if i >= 0 && (i as usize) < y.len() {
                        acc += hk * y[i as usize];
                    }
                }
                out.push(acc);
            }
            if let Some(a) = hp_a {
                // start in steady state so a constant input yields zero
                let mut prev_in = out.first().copied().unwrap_or(0.0);
                let mut prev_out = 0.0;
                for v in out.iter_mut() {
                    let cur = *v;
                    let o = a * (prev_out + cur - prev_in);
                    prev_in = cur;
                    prev_out = o;
                    *v = o;
                }
            }
            out
        })
        .collect();
    RawCapture::new(CAPTURE_RATE, channels)
}

fn mean_power(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64
}

/// Power of the AC part of `x`.
fn ac_power(x: &[f64]) -> f64 {
    let n = x.len().max(1) as f64;
    let mean = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

/// Adds white microphone self-noise at `snr_db` below each channel's clean
/// AC power (the tracking line dominates it).
pub fn add_self_noise(capture: &RawCapture, snr_db: f64, seed: u64) -> RawCapture {
    let mut out = capture.clone();
    if snr_db.is_infinite() && snr_db > 0.0 {
        return out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for ch in out.channels.iter_mut() {
        let sigma = (ac_power(ch) / 10f64.powf(snr_db / 10.0)).sqrt();
        let dist = Normal::new(0.0, sigma).expect("finite sigma");
        for v in ch.iter_mut() {
            *v += dist.sample(&mut rng);
        }
    }
    out
}

/// Reference for ambient levels: an RMS of 1.0 capture unit is 94 dB.
pub const REFERENCE_DB: f64 = 94.0;

pub fn db_to_rms(level_db: f64) -> f64 {
    10f64.powf((level_db - REFERENCE_DB) / 20.0)
}

/// Mixes a 16 kHz mono ambient waveform into every channel, scaled to
/// `level_db` (RMS re [`REFERENCE_DB`]). The noise is tiled if shorter than
/// the capture.
pub fn mix_ambient(capture: &RawCapture, noise: &[f64], level_db: f64) -> Result<RawCapture> {
    let mut out = capture.clone();
    if level_db == f64::NEG_INFINITY {
        return Ok(out);
    }
    if noise.is_empty() {
        return Err(Error::arg("ambient waveform is empty"));
    }
    let rms = mean_power(noise).sqrt();
    if !(rms > 0.0) {
        return Err(Error::arg("ambient waveform is silent"));
    }
    let g = db_to_rms(level_db) / rms;
    for ch in out.channels.iter_mut() {
        for (i, v) in ch.iter_mut().enumerate() {
            *v += g * noise[i % noise.len()];
        }
    }
    Ok(out)
}

/// Band-limited Gaussian noise standing in for speech: energy between
/// 100 Hz and 4 kHz, unit RMS.
pub fn voice_band_noise(samples: usize, seed: u64) -> Vec<f64> {
    use rustfft::{num_complex::Complex64, FftPlanner};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut buf: Vec<Complex64> = (0..samples)
        .map(|_| Complex64::new(normal.sample(&mut rng), 0.0))
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(samples).process(&mut buf);
    for (k, v) in buf.iter_mut().enumerate() {
        let f = k.min(samples - k) as f64 * CAPTURE_RATE / samples as f64;
        if !(100.0..=4000.0).contains(&f) {
            *v = Complex64::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(samples).process(&mut buf);
    let x: Vec<f64> = buf.iter().map(|c| c.re).collect();
    let rms = mean_power(&x).sqrt();
    x.into_iter().map(|v| v / rms).collect()
}
