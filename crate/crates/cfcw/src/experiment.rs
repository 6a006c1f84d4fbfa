//! Experiment configuration and the end-to-end pipeline:
//! simulate, demodulate, start point, localize, handwriting, coexistence.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::coexistence::{band_energy_report, save_band_csv, BandReport};
use crate::demod::{demodulate, save_phase_csv, DemodConfig, PhaseTrack};
use crate::error::{Error, Result};
use crate::handwriting::{recover_ink, HandwritingConfig, InkRecovery, PenTrace};
use crate::localize::{save_trajectory_csv, track_trajectory, Trajectory3D};
use crate::signal::NonlinearityModel;
use crate::sim::{
    add_self_noise, mix_ambient, read_wav, simulate_capture, voice_band_noise, write_wav, MotionPath, Point3,
    RawCapture, Scene, FIELD_PAD, SIM_LEAD,
};
use crate::startpoint::{snapshot, solve_start_point_with, GaConfig, StartFix, Workspace};
use crate::tx::{build_fixed_schedule, build_hop_schedule, ToneSchedule, CAPTURE_RATE, NONLINEAR_REGIME_MIN};
use crate::word::{Label, SyntheticWord};

mod motion;
pub mod plot;

pub use motion::{MotionConfig, ShapeKind};

/// Sampling step of simulator motion paths, seconds.
const PATH_STEP: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKind {
    Hop,
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    pub kind: ScheduleKind,
    pub receive_frequency: f64,
    /// First primary of a hop cycle, or the only primary of a fixed pair.
    pub base_primary: f64,
    pub hop_step: f64,
    pub hop_period: f64,
    /// Lowest primary accepted for fixed pairs. Baselines below the
    /// nonlinear regime lower it.
    pub min_primary: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            kind: ScheduleKind::Hop,
            receive_frequency: 7e3,
            base_primary: 40e3,
            hop_step: 2e3,
            hop_period: 3e-3,
            min_primary: NONLINEAR_REGIME_MIN,
        }
    }
}

impl ScheduleConfig {
    pub fn build(&self, duration: f64) -> Result<ToneSchedule> {
        match self.kind {
            ScheduleKind::Hop => build_hop_schedule(
                self.receive_frequency,
                self.base_primary,
                self.hop_step,
                self.hop_period,
                duration,
            ),
            ScheduleKind::Fixed => build_fixed_schedule(
                self.receive_frequency,
                self.base_primary,
                self.hop_period,
                duration,
                self.min_primary,
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    /// White microphone noise below the clean capture power, dB. Absent
    /// means noiseless.
    pub self_noise_snr_db: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct StartConfig {
    pub ga: GaConfig,
    /// Search region; defaults to the array's workspace.
    pub workspace: Option<Workspace>,
    /// Skip the search and start tracking from the true position. For
    /// experiments that compare tracking under identical starts.
    pub use_truth: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoexistenceConfig {
    pub enabled: bool,
}

impl Default for CoexistenceConfig {
    fn default() -> Self {
        CoexistenceConfig { enabled: true }
    }
}

/// One experiment, loaded from a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    /// Capture length, seconds. Word motions default to the word length.
    #[serde(default)]
    pub duration: Option<f64>,
    #[serde(default)]
    pub scene: Scene,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub nonlinearity: NonlinearityModel,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub demod: DemodConfig,
    /// Sets `demod.arrival_delay` from the longest beacon-to-microphone
    /// range along the path.
    #[serde(default = "yes")]
    pub auto_arrival_delay: bool,
    pub motion: MotionConfig,
    #[serde(default)]
    pub startpoint: StartConfig,
    #[serde(default)]
    pub handwriting: HandwritingConfig,
    /// Run the handwriting stage; defaults to on for word motions.
    #[serde(default)]
    pub recover_ink: Option<bool>,
    #[serde(default)]
    pub coexistence: CoexistenceConfig,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Directory relative paths in the config resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn yes() -> bool {
    true
}

fn field(name: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::Config { field, message } => Error::Config {
            field: format!("{name}.{field}"),
            message,
        },
        other => Error::Config {
            field: name.to_string(),
            message: other.to_string(),
        },
    }
}

fn bad(name: &str, message: impl Into<String>) -> Error {
    Error::Config {
        field: name.to_string(),
        message: message.into(),
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
            let span = e.span().map(|s| {
                let line = text[..s.start].matches('\n').count() + 1;
                format!(" (line {line})")
            });
            bad(&toml_key(&e), format!("{}{}", e.message(), span.unwrap_or_default()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| bad("config", format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: ExperimentConfig = toml::from_str(&text).map_err(|e| {
            bad(&toml_key(&e), format!("{} in {}", e.message(), path.display()))
        })?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve(&self, p: &str) -> PathBuf {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    fn word(&self) -> Result<Option<SyntheticWord>> {
        match &self.motion {
            MotionConfig::Word { spec } => SyntheticWord::new(spec).map(Some),
            _ => Ok(None),
        }
    }

    /// Capture length, seconds.
    pub fn capture_duration(&self) -> Result<f64> {
        if let Some(d) = self.duration {
            return Ok(d);
        }
        match self.word()? {
            Some(w) => Ok(w.duration),
            None => Err(bad("duration", "required unless the motion is a word")),
        }
    }

    pub fn build_schedule(&self) -> Result<ToneSchedule> {
        self.schedule.build(self.capture_duration()?).map_err(field("schedule"))
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(bad("name", "must not be empty"));
        }
        if let Some(d) = self.duration {
            if !(d > 0.0 && d <= 60.0) {
                return Err(bad("duration", format!("{d} s is outside (0, 60]")));
            }
        }
        self.scene.validate().map_err(field("scene"))?;
        for (i, a) in self.scene.ambient_sources.iter().enumerate() {
            if let Some(f) = &a.file {
                if !self.resolve(f).is_file() {
                    return Err(bad(&format!("scene.ambient_sources[{i}].file"), format!("{f} does not exist")));
                }
            }
            if a.level_db.is_nan() {
                return Err(bad(&format!("scene.ambient_sources[{i}].level_db"), "not a number"));
            }
        }
        let nl = &self.nonlinearity;
        if !(nl.linear_gain.is_finite() && nl.quadratic_gain.is_finite()) {
            return Err(bad("nonlinearity", "gains must be finite"));
        }
        if let Some(snr) = self.noise.self_noise_snr_db {
            if snr.is_nan() {
                return Err(bad("noise.self_noise_snr_db", "not a number"));
            }
        }
        self.motion.validate(self).map_err(field("motion"))?;
        let sched = self.build_schedule()?;
        self.demod.validate(&sched, CAPTURE_RATE).map_err(field("demod"))?;
        if let Some(ws) = &self.startpoint.workspace {
            ws.validate().map_err(field("startpoint.workspace"))?;
        }
        let ga = &self.startpoint.ga;
        if ga.population < 4 || ga.generations == 0 || ga.tournament == 0 || ga.elitism >= ga.population {
            return Err(bad("startpoint.ga", "needs population >= 4, generations >= 1, tournament >= 1, elitism < population"));
        }
        self.handwriting.validate().map_err(field("handwriting"))?;
        if self.recover_ink == Some(true) && self.word()?.is_none() && !matches!(self.motion, MotionConfig::File { .. }) {
            return Err(bad("recover_ink", "needs a word or file motion"));
        }
        Ok(())
    }
}

/// Best-effort dotted key of a TOML error, for the field name.
fn toml_key(e: &toml::de::Error) -> String {
    let m = e.message();
    for pat in ["unknown field `", "missing field `", "unknown variant `"] {
        if let Some(i) = m.find(pat) {
            let rest = &m[i + pat.len()..];
            if let Some(j) = rest.find('`') {
                return rest[..j].to_string();
            }
        }
    }
    "config".to_string()
}

/// Motion path covering the simulator's needs, plus the word if any.
pub fn build_motion(cfg: &ExperimentConfig) -> Result<(MotionPath, Option<SyntheticWord>)> {
    // the schedule rounds the duration up to whole slots
    let d = cfg.build_schedule()?.duration();
    motion::build(cfg, -SIM_LEAD, d + FIELD_PAD + 2.0 * PATH_STEP, PATH_STEP)
}

/// Ground truth of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameTruth {
    /// Centre of the analysis window, seconds.
    pub window_centre: f64,
    /// Emission time of the sound reaching the array centroid then.
    pub emission_time: f64,
    pub position: Point3,
    /// True beacon-to-microphone distance per microphone.
    pub distances: Vec<f64>,
}

/// Emission time `te` with `te + |P(te) - m| / c = t`.
pub fn emission_time(path: &MotionPath, m: &Point3, t: f64, c: f64) -> f64 {
    let mut te = t;
    for _ in 0..8 {
        te = t - (path.position_at(te) - m).norm() / c;
    }
    te
}

pub fn frame_truth(track: &PhaseTrack, path: &MotionPath, scene: &Scene) -> Vec<FrameTruth> {
    let c = scene.medium.speed_of_sound;
    let mics = scene.geometry.mics();
    let centroid = scene.geometry.centroid();
    (0..track.frame_count())
        .map(|k| {
            let f = &track.mics[0].frames[k];
            let tc = (f.window_start as f64 + (f.window_len as f64 - 1.0) / 2.0) / CAPTURE_RATE;
            let te = emission_time(path, &centroid, tc, c);
            let distances = mics
                .iter()
                .map(|m| (path.position_at(emission_time(path, m, tc, c)) - m).norm())
                .collect();
            FrameTruth {
                window_centre: tc,
                emission_time: te,
                position: path.position_at(te),
                distances,
            }
        })
        .collect()
}

/// Order statistics of an error sample, metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorStats {
    pub count: usize,
    pub median: f64,
    pub p90: f64,
    pub max: f64,
}

impl ErrorStats {
    pub fn of(errors: &[f64]) -> Option<Self> {
        let mut v: Vec<f64> = errors.iter().copied().filter(|e| e.is_finite()).collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        Some(ErrorStats {
            count: v.len(),
            median: quantile(&v, 0.5),
            p90: quantile(&v, 0.9),
            max: v[v.len() - 1],
        })
    }
}

/// Linear-interpolated quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let x = q * (sorted.len() - 1) as f64;
    let (i, f) = (x.floor() as usize, x.fract());
    if i + 1 < sorted.len() {
        sorted[i] * (1.0 - f) + sorted[i + 1] * f
    } else {
        sorted[i]
    }
}

/// Pen-lift removal against the word labels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PenLiftStats {
    pub lift_samples: usize,
    pub lift_removed: f64,
    pub stroke_samples: usize,
    pub stroke_removed: f64,
}

/// Ground-truth pen state: off the surface (lift arcs and stops in the
/// air) or on it.
pub fn is_lift(word: &SyntheticWord, t: f64) -> bool {
    word.label(t) == Label::Lift || word.height(t) > 1e-9
}

pub fn pen_lift_stats(word: &SyntheticWord, trace: &PenTrace, removed: &[bool]) -> PenLiftStats {
    let (mut lift, mut lift_rm, mut stroke, mut stroke_rm) = (0usize, 0usize, 0usize, 0usize);
    for (k, &t) in trace.timestamps.iter().enumerate() {
        if !trace.usable(k) {
            continue;
        }
        if is_lift(word, t) {
            lift += 1;
            lift_rm += removed[k] as usize;
        } else {
            stroke += 1;
            stroke_rm += removed[k] as usize;
        }
    }
    let frac = |a: usize, b: usize| if b == 0 { f64::NAN } else { a as f64 / b as f64 };
    PenLiftStats {
        lift_samples: lift,
        lift_removed: frac(lift_rm, lift),
        stroke_samples: stroke,
        stroke_removed: frac(stroke_rm, stroke),
    }
}

/// Headline numbers of a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub name: String,
    pub seed: u64,
    pub frames: usize,
    pub arrival_delay: f64,
    pub reliable: bool,
    pub fix_frame: usize,
    pub fix_error: f64,
    pub fix_converged: bool,
    pub fix_ambiguous: bool,
    /// Distance change per microphone and frame against ground truth.
    pub ranging: Option<ErrorStats>,
    /// 3D position against ground truth.
    pub tracking: Option<ErrorStats>,
    pub pen_lift: Option<PenLiftStats>,
    pub flattening_stress: Option<f64>,
    pub band: Option<BandReport>,
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct Bundle {
    pub config: ExperimentConfig,
    pub schedule: ToneSchedule,
    pub path: MotionPath,
    pub word: Option<SyntheticWord>,
    pub capture: RawCapture,
    /// The same capture without the tracking signal, when ambient sound
    /// was mixed in.
    pub reference: Option<RawCapture>,
    pub track: PhaseTrack,
    pub truth: Vec<FrameTruth>,
    pub fix: StartFix,
    pub trajectory: Trajectory3D,
    pub ranging_errors: Vec<f64>,
    pub tracking_errors: Vec<f64>,
    pub ink: Option<InkRecovery>,
    pub report: Report,
}

/// Longest direct-path delay to any microphone over the path, including
/// the secondary tone, seconds.
pub fn nominal_arrival_delay(path: &MotionPath, scene: &Scene) -> f64 {
    let c = scene.medium.speed_of_sound;
    let mics = scene.geometry.mics();
    let sec = scene.geometry.secondary();
    let mut r: f64 = mics.iter().map(|m| (m - sec).norm()).fold(0.0, f64::max);
    for (t, p) in path.timestamps.iter().zip(&path.positions) {
        if *t >= 0.0 {
            r = mics.iter().map(|m| (p - m).norm()).fold(r, f64::max);
        }
    }
    r / c
}

/// Demod settings with the arrival delay filled in when configured so.
pub fn effective_demod(cfg: &ExperimentConfig, path: &MotionPath) -> DemodConfig {
    let mut d = cfg.demod;
    if cfg.auto_arrival_delay {
        d.arrival_delay = nominal_arrival_delay(path, &cfg.scene);
    }
    d
}

fn ambient(cfg: &ExperimentConfig, cap: &RawCapture) -> Result<Option<RawCapture>> {
    if cfg.scene.ambient_sources.is_empty() {
        return Ok(None);
    }
    let mut out = RawCapture::new(CAPTURE_RATE, vec![vec![0.0; cap.len()]; cap.channels.len()])?;
    for (i, a) in cfg.scene.ambient_sources.iter().enumerate() {
        let wave = match &a.file {
            Some(f) => {
                let w = read_wav(cfg.resolve(f))?;
                w.channels[0].clone()
            }
            None => voice_band_noise(cap.len(), cfg.seed.wrapping_add(1000 + i as u64)),
        };
        out = mix_ambient(&out, &wave, a.level_db)?;
    }
    Ok(Some(out))
}

fn add(a: &RawCapture, b: &RawCapture) -> RawCapture {
    let mut out = a.clone();
    for (x, y) in out.channels.iter_mut().zip(&b.channels) {
        for (u, v) in x.iter_mut().zip(y) {
            *u += v;
        }
    }
    out
}

/// Simulated microphone capture, the ambient-only reference (if any
/// ambient sound is configured), and the path that produced them.
pub fn simulate(cfg: &ExperimentConfig) -> Result<(RawCapture, Option<RawCapture>, MotionPath, Option<SyntheticWord>)> {
    let schedule = cfg.build_schedule()?;
    let (path, word) = build_motion(cfg).map_err(|e| e.at_stage("motion", None))?;
    let clean = simulate_capture(&cfg.scene, &schedule, &path, &cfg.nonlinearity).map_err(|e| e.at_stage("simulate", None))?;
    let noisy = match cfg.noise.self_noise_snr_db {
        Some(snr) => add_self_noise(&clean, snr, cfg.seed),
        None => clean,
    };
    let reference = ambient(cfg, &noisy).map_err(|e| e.at_stage("simulate", None))?;
    let capture = match &reference {
        Some(r) => add(&noisy, r),
        None => noisy,
    };
    Ok((capture, reference, path, word))
}

fn frame_of(e: &Error) -> Option<usize> {
    match e {
        Error::TruncatedCapture { frame, .. } => Some(*frame),
        _ => None,
    }
}

/// Demodulation, start point and localization of a capture.
pub fn track(cfg: &ExperimentConfig, capture: &RawCapture, path: &MotionPath) -> Result<(PhaseTrack, StartFix, usize, Trajectory3D)> {
    let schedule = cfg.build_schedule()?;
    let demod_cfg = effective_demod(cfg, path);
    demod_cfg
        .validate(&schedule, CAPTURE_RATE)
        .map_err(|e| e.at_stage("demod", None))?;
    let medium = &cfg.scene.medium;
    let track = demodulate(capture, &schedule, medium, &demod_cfg).map_err(|e| {
        let f = frame_of(&e);
        e.at_stage("demod", f)
    })?;
    let snap = snapshot(&track, &schedule, &cfg.scene.geometry, medium).map_err(|e| e.at_stage("startpoint", None))?;
    let ws = cfg
        .startpoint
        .workspace
        .unwrap_or_else(|| Workspace::for_geometry(&cfg.scene.geometry));
    let fix = if cfg.startpoint.use_truth {
        let truth = frame_truth(&track, path, &cfg.scene);
        let p = truth[snap.frame].position;
        StartFix {
            position: [p.x, p.y, p.z],
            wraps: Vec::new(),
            residual: 0.0,
            normalized_residual: 0.0,
            converged: true,
            ambiguous: false,
        }
    } else {
        solve_start_point_with(&snap.sets, &ws, &cfg.startpoint.ga, cfg.seed ^ 0x5eed)
            .map_err(|e| e.at_stage("startpoint", Some(snap.frame)))?
    };
    let traj = track_trajectory(&fix, snap.frame, &track, &cfg.scene.geometry.mics(), 0.0)
        .map_err(|e| e.at_stage("localize", Some(snap.frame)))?;
    Ok((track, fix, snap.frame, traj))
}

/// Runs every stage and scores the result against the simulator truth.
pub fn run_pipeline(cfg: &ExperimentConfig) -> Result<Bundle> {
    let schedule = cfg.build_schedule()?;
    let (capture, reference, path, word) = simulate(cfg)?;
    run_on_capture(cfg, &schedule, capture, reference, path, word)
}

pub fn run_on_capture(
    cfg: &ExperimentConfig,
    schedule: &ToneSchedule,
    capture: RawCapture,
    reference: Option<RawCapture>,
    path: MotionPath,
    word: Option<SyntheticWord>,
) -> Result<Bundle> {
    let (track, fix, fix_frame, mut trajectory) = track(cfg, &capture, &path)?;
    let truth = frame_truth(&track, &path, &cfg.scene);
    // stamp each fix with the emission time it describes
    for (j, t) in trajectory.timestamps.iter_mut().enumerate() {
        *t = truth[fix_frame + j].emission_time;
    }

    let mut ranging_errors = Vec::new();
    for (i, m) in track.mics.iter().enumerate() {
        let k0 = fix_frame;
        if !m.valid[k0] {
            continue;
        }
        for k in 0..track.frame_count() {
            if m.valid[k] {
                let est = m.distance_change[k] - m.distance_change[k0];
                let tru = truth[k].distances[i] - truth[k0].distances[i];
                ranging_errors.push((est - tru).abs());
            }
        }
    }
    let tracking_errors: Vec<f64> = trajectory
        .points
        .iter()
        .enumerate()
        .map(|(j, p)| (p - truth[fix_frame + j].position).norm())
        .collect();

    let do_ink = cfg.recover_ink.unwrap_or(word.is_some());
    let (ink, pen_lift) = if do_ink {
        let trace = PenTrace::from(&trajectory);
        let rec = recover_ink(&trace, &cfg.handwriting).map_err(|e| e.at_stage("handwriting", None))?;
        let stats = word
            .as_ref()
            .map(|w| pen_lift_stats(w, &trace, &rec.removed_mask(&trace)));
        (Some(rec), stats)
    } else {
        (None, None)
    };

    let band = if cfg.coexistence.enabled {
        Some(band_energy_report(&capture, reference.as_ref()).map_err(|e| e.at_stage("coexistence", None))?)
    } else {
        None
    };

    let report = Report {
        name: cfg.name.clone(),
        seed: cfg.seed,
        frames: track.frame_count(),
        arrival_delay: effective_demod(cfg, &path).arrival_delay,
        reliable: track.mics.iter().all(|m| m.reliable),
        fix_frame,
        fix_error: (fix.point() - truth[fix_frame].position).norm(),
        fix_converged: fix.converged,
        fix_ambiguous: fix.ambiguous,
        ranging: ErrorStats::of(&ranging_errors),
        tracking: ErrorStats::of(&tracking_errors),
        pen_lift,
        flattening_stress: ink.as_ref().map(|r| r.ink.stress),
        band,
    };
    Ok(Bundle {
        config: cfg.clone(),
        schedule: schedule.clone(),
        path,
        word,
        capture,
        reference,
        track,
        truth,
        fix,
        trajectory,
        ranging_errors,
        tracking_errors,
        ink,
        report,
    })
}

/// Writes `metric,value` rows.
pub fn write_report_csv(r: &Report, out: impl std::io::Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["metric", "value"])?;
    let mut row = |k: &str, v: String| w.write_record([k, v.as_str()]);
    row("name", r.name.clone())?;
    row("seed", r.seed.to_string())?;
    row("frames", r.frames.to_string())?;
    row("arrival_delay_s", format!("{:.6e}", r.arrival_delay))?;
    row("reliable", r.reliable.to_string())?;
    row("fix_frame", r.fix_frame.to_string())?;
    row("fix_error_m", format!("{:.6e}", r.fix_error))?;
    row("fix_converged", r.fix_converged.to_string())?;
    row("fix_ambiguous", r.fix_ambiguous.to_string())?;
    for (tag, s) in [("ranging", &r.ranging), ("tracking", &r.tracking)] {
        if let Some(s) = s {
            row(&format!("{tag}_count"), s.count.to_string())?;
            row(&format!("{tag}_median_m"), format!("{:.6e}", s.median))?;
            row(&format!("{tag}_p90_m"), format!("{:.6e}", s.p90))?;
            row(&format!("{tag}_max_m"), format!("{:.6e}", s.max))?;
        }
    }
    if let Some(p) = &r.pen_lift {
        row("lift_samples", p.lift_samples.to_string())?;
        row("lift_removed_fraction", format!("{:.6}", p.lift_removed))?;
        row("stroke_samples", p.stroke_samples.to_string())?;
        row("stroke_removed_fraction", format!("{:.6}", p.stroke_removed))?;
    }
    if let Some(s) = r.flattening_stress {
        row("flattening_stress", format!("{s:.6e}"))?;
    }
    if let Some(b) = &r.band {
        row("voice_band_power_db", format!("{:.4}", b.voice_band_power))?;
        row("tracking_band_power_db", format!("{:.4}", b.tracking_band_power))?;
        row("leakage_ratio_db", format!("{:.4}", b.leakage_ratio))?;
        if let Some(d) = b.voice_band_delta {
            row("voice_band_delta_db", format!("{d:.4}"))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes `t,x,y,z` rows of a motion path, plus `label` for words.
pub fn write_path_csv(path: &MotionPath, word: Option<&SyntheticWord>, out: impl std::io::Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if word.is_some() {
        w.write_record(["t", "x", "y", "z", "label"])?;
    } else {
        w.write_record(["t", "x", "y", "z"])?;
    }
    for (t, p) in path.timestamps.iter().zip(&path.positions) {
        let mut rec = vec![format!("{t:.6}"), format!("{:.9}", p.x), format!("{:.9}", p.y), format!("{:.9}", p.z)];
        if let Some(wd) = word {
            rec.push(
                match (wd.label(*t), is_lift(wd, *t)) {
                    (_, true) => "lift",
                    (Label::Stop, false) => "stop",
                    _ => "stroke",
                }
                .to_string(),
            );
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `t,x,y,z` rows (extra columns ignored, `#` lines skipped).
pub fn read_path_csv(path: impl AsRef<Path>) -> Result<MotionPath> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    let mut ts = Vec::new();
    let mut ps = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::arg(format!("bad number in column {i} of a path file")))
        };
        ts.push(num(0)?);
        ps.push(Point3::new(num(1)?, num(2)?, num(3)?));
    }
    MotionPath::new(ts, ps)
}

/// Reads a pen trace from `t,x,y,z,...` rows, as written for
/// trajectories; gaps may hold NaN.
pub fn read_trace_csv(path: impl AsRef<Path>) -> Result<PenTrace> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    let mut ts = Vec::new();
    let mut ps = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let v: Vec<f64> = (0..4)
            .map(|i| rec.get(i).and_then(|s| s.trim().parse().ok()).unwrap_or(f64::NAN))
            .collect();
        if !v[0].is_finite() {
            return Err(Error::arg("trace row without a finite time"));
        }
        ts.push(v[0]);
        ps.push(Point3::new(v[1], v[2], v[3]));
    }
    PenTrace::new(ts, ps)
}

/// Files written by [`write_bundle`].
pub const BUNDLE_FILES: [&str; 4] = ["report.csv", "phase.csv", "trajectory.csv", "truth.csv"];

/// Writes the capture, CSVs, ink and plots of a run into `dir`.
pub fn write_bundle(b: &Bundle, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    write_wav(&b.capture, dir.join("capture.wav"))?;
    write_report_csv(&b.report, fs::File::create(dir.join("report.csv"))?)?;
    save_phase_csv(&b.track, dir.join("phase.csv"))?;
    save_trajectory_csv(&b.trajectory, dir.join("trajectory.csv"))?;
    write_path_csv(&b.path, b.word.as_ref(), fs::File::create(dir.join("truth.csv"))?)?;
    if let Some(band) = &b.report.band {
        save_band_csv(band, dir.join("band.csv"))?;
    }
    if let Some(ink) = &b.ink {
        ink.ink.save_svg(dir.join("ink.svg"))?;
        ink.ink.save_csv(dir.join("ink.csv"))?;
    }
    plot::save_all(b, dir)?;
    Ok(())
}
