//! Absolute distances from the start fix plus relative ranging, and
//! per-frame multilateration into a 3D trajectory.

use std::io::Write;
use std::path::Path;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::demod::PhaseTrack;
use crate::error::{Error, Result};
use crate::sim::Point3;
use crate::startpoint::StartFix;

/// Fewest microphones for a 3D fix.
pub const MIN_MICS: usize = 4;
/// Longest run of invalid frames bridged by interpolation.
pub const MAX_GAP_FRAMES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Stop once a step is shorter than this, metres.
    pub step_tolerance: f64,
    /// A solution further than this from its seed counts as diverged.
    pub max_step: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iterations: 50,
            step_tolerance: 1e-7,
            max_step: 0.7,
        }
    }
}

/// Per-frame absolute distance of every microphone, `None` where the mic's
/// track is unusable.
pub fn absolute_distances(
    fix: &StartFix,
    fix_frame: usize,
    track: &PhaseTrack,
    mics: &[Point3],
) -> Result<Vec<Vec<Option<f64>>>> {
    if !fix.converged {
        return Err(Error::arg("start fix did not converge"));
    }
    if track.mics.len() != mics.len() {
        return Err(Error::arg("track and geometry disagree on the microphone count"));
    }
    let n = track.frame_count();
    if fix_frame >= n {
        return Err(Error::arg(format!("fix frame {fix_frame} beyond {n} frames")));
    }
    let p0 = fix.point();
    Ok((0..n)
        .map(|k| {
            track
                .mics
                .iter()
                .zip(mics)
                .map(|(m, pos)| {
                    let ok = m.valid[k] && m.valid[fix_frame] && m.distance_change[k].is_finite();
                    ok.then(|| (p0 - pos).norm() + m.distance_change[k] - m.distance_change[fix_frame])
                })
                .collect()
        })
        .collect())
}

/// Least-squares point whose distances to the microphones best match
/// `distances`, by damped Gauss-Newton from `seed`. Returns the point and
/// the root-mean-square distance misfit.
pub fn multilaterate(distances: &[Option<f64>], mics: &[Point3], seed: &Point3) -> Result<(Point3, f64)> {
    multilaterate_with(distances, mics, seed, &SolverConfig::default())
}

pub fn multilaterate_with(
    distances: &[Option<f64>],
    mics: &[Point3],
    seed: &Point3,
    cfg: &SolverConfig,
) -> Result<(Point3, f64)> {
    let used: Vec<(Point3, f64)> = distances
        .iter()
        .zip(mics)
        .filter_map(|(d, m)| d.map(|d| (*m, d)))
        .collect();
    if used.len() < MIN_MICS {
        return Err(Error::InsufficientData(format!(
            "{} usable microphones, need {MIN_MICS}",
            used.len()
        )));
    }
    if !seed.iter().all(|v| v.is_finite()) {
        return Err(Error::arg("seed point is not finite"));
    }
    let cost = |p: &Point3| -> f64 { used.iter().map(|(m, d)| ((p - m).norm() - d).powi(2)).sum() };
    let mut p = *seed;
    let mut c = cost(&p);
    let mut lambda = 1e-6;
    for _ in 0..cfg.max_iterations {
        let mut jtj = Matrix3::<f64>::zeros();
        let mut jtr = Point3::zeros();
        for (m, d) in &used {
            let v = p - m;
            let r = v.norm();
            if r < 1e-12 {
                continue;
            }
            let g = v / r;
            jtj += g * g.transpose();
            jtr += g * (r - d);
        }
        let mut accepted = None;
        for _ in 0..10 {
            let mut a = jtj;
            for i in 0..3 {
                a[(i, i)] *= 1.0 + lambda;
                a[(i, i)] += 1e-15;
            }
            if let Some(step) = a.cholesky().map(|ch| ch.solve(&(-jtr))) {
                let q = p + step;
                let cq = cost(&q);
                if cq <= c {
                    accepted = Some((q, cq, step.norm()));
                    lambda = (lambda * 0.1).max(1e-12);
                    break;
                }
            }
            lambda *= 10.0;
        }
        let Some((q, cq, len)) = accepted else {
            break;
        };
        p = q;
        c = cq;
        if (p - seed).norm() > cfg.max_step || !p.iter().all(|v| v.is_finite()) {
            return Err(Error::arg("multilateration diverged"));
        }
        if len < cfg.step_tolerance {
            break;
        }
    }
    Ok((p, (c / used.len() as f64).sqrt()))
}

/// 3D track at the frame rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory3D {
    pub timestamps: Vec<f64>,
    pub points: Vec<Point3>,
    /// RMS distance misfit per frame, metres.
    pub residuals: Vec<f64>,
    /// False for interpolated frames and gaps. Gap points are NaN.
    pub valid: Vec<bool>,
    pub source_frame_rate: f64,
    pub fix: StartFix,
    pub fix_frame: usize,
}

impl Trajectory3D {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Multilaterates every frame from the fix frame on, each seeded with the
/// previous solution. Frames before the fix are not tracked.
///
/// `time_offset` is the time of frame 0; frame `k` is stamped
/// `time_offset + k · frame_period`.
pub fn track_trajectory(
    fix: &StartFix,
    fix_frame: usize,
    track: &PhaseTrack,
    mics: &[Point3],
    time_offset: f64,
) -> Result<Trajectory3D> {
    let dist = absolute_distances(fix, fix_frame, track, mics)?;
    let cfg = SolverConfig::default();
    let mut points = Vec::with_capacity(dist.len() - fix_frame);
    let mut residuals = Vec::with_capacity(points.capacity());
    let mut valid = Vec::with_capacity(points.capacity());
    let mut seed = fix.point();
    for d in &dist[fix_frame..] {
        match multilaterate_with(d, mics, &seed, &cfg) {
            Ok((p, r)) => {
                seed = p;
                points.push(p);
                residuals.push(r);
                valid.push(true);
            }
            Err(_) => {
                points.push(Point3::repeat(f64::NAN));
                residuals.push(f64::NAN);
                valid.push(false);
            }
        }
    }
    bridge_gaps(&mut points, &mut residuals, &valid);
    let timestamps = (fix_frame..dist.len())
        .map(|k| time_offset + k as f64 * track.frame_period)
        .collect();
    Ok(Trajectory3D {
        timestamps,
        points,
        residuals,
        valid,
        source_frame_rate: 1.0 / track.frame_period,
        fix: fix.clone(),
        fix_frame,
    })
}

/// Linear interpolation across runs of at most [`MAX_GAP_FRAMES`] invalid
/// frames with valid neighbours on both sides.
fn bridge_gaps(points: &mut [Point3], residuals: &mut [f64], valid: &[bool]) {
    let n = points.len();
    let mut k = 0;
    while k < n {
        if valid[k] {
            k += 1;
            continue;
        }
        let start = k;
        while k < n && !valid[k] {
            k += 1;
        }
        let run = k - start;
        if start == 0 || k == n || run > MAX_GAP_FRAMES {
            continue;
        }
        let (a, b) = (points[start - 1], points[k]);
        for (j, idx) in (start..k).enumerate() {
            let t = (j + 1) as f64 / (run + 1) as f64;
            points[idx] = a * (1.0 - t) + b * t;
            residuals[idx] = f64::NAN;
        }
    }
}

/// Writes the fix as `#` comment lines, then `t,x,y,z,residual,valid`.
pub fn write_trajectory_csv(traj: &Trajectory3D, mut out: impl Write) -> Result<()> {
    let f = &traj.fix;
    writeln!(
        out,
        "# start_fix frame={} x={:.9} y={:.9} z={:.9} residual={:.6e} converged={}",
        traj.fix_frame, f.position[0], f.position[1], f.position[2], f.residual, f.converged
    )?;
    for (s, w) in f.wraps.iter().enumerate() {
        let n: Vec<String> = w.n.iter().map(|v| v.to_string()).collect();
        writeln!(out, "# wraps[{s}]={}", n.join(" "))?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "x", "y", "z", "residual", "valid"])?;
    for k in 0..traj.len() {
        let p = traj.points[k];
        w.write_record(&[
            format!("{:.6}", traj.timestamps[k]),
            format!("{:.9}", p.x),
            format!("{:.9}", p.y),
            format!("{:.9}", p.z),
            format!("{:.6e}", traj.residuals[k]),
            (traj.valid[k] as u8).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_trajectory_csv(traj: &Trajectory3D, path: impl AsRef<Path>) -> Result<()> {
    write_trajectory_csv(traj, std::fs::File::create(path)?)
}
