//! From a 3D pen track to flat ink: speed minima mark segment ends,
//! off-surface segments are dropped as pen lifts, and the remaining strokes
//! are flattened off the fitted writing surface.

mod isomap;
mod surface;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::localize::Trajectory3D;
use crate::sim::Point3;

pub use isomap::{isomap_embed, Embedding, IsomapConfig};
pub use surface::{fit_writing_surface, fit_writing_surface_facing, SurfaceModel, TERMS};

/// Timestamped pen positions; non-finite points mark tracking gaps.
#[derive(Debug, Clone, PartialEq)]
pub struct PenTrace {
    pub timestamps: Vec<f64>,
    pub points: Vec<Point3>,
}

impl PenTrace {
    pub fn new(timestamps: Vec<f64>, points: Vec<Point3>) -> Result<Self> {
        if timestamps.len() != points.len() {
            return Err(Error::arg("timestamps and points differ in length"));
        }
        Ok(PenTrace { timestamps, points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn usable(&self, k: usize) -> bool {
        self.points[k].iter().all(|v| v.is_finite())
    }
}

impl From<&Trajectory3D> for PenTrace {
    fn from(t: &Trajectory3D) -> Self {
        PenTrace {
            timestamps: t.timestamps.clone(),
            points: t.points.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VelocityProfile {
    /// Trace index of each speed sample.
    pub indices: Vec<usize>,
    pub timestamps: Vec<f64>,
    pub speeds: Vec<f64>,
}

/// Central-difference speed over the usable interior points, smoothed by a
/// centred moving average of `smooth_window` samples.
pub fn compute_velocity(trace: &PenTrace, smooth_window: usize) -> Result<VelocityProfile> {
    if smooth_window == 0 {
        return Err(Error::config("smooth_window must be at least 1"));
    }
    let idx: Vec<usize> = (0..trace.len()).filter(|&k| trace.usable(k)).collect();
    if idx.len() < 3 {
        return Err(Error::InsufficientData(format!("{} usable points, need 3", idx.len())));
    }
    let raw: Vec<f64> = idx
        .windows(3)
        .map(|w| {
            let dt = trace.timestamps[w[2]] - trace.timestamps[w[0]];
            (trace.points[w[2]] - trace.points[w[0]]).norm() / dt
        })
        .collect();
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::arg("timestamps must increase"));
    }
    let half = smooth_window / 2;
    let speeds = (0..raw.len())
        .map(|k| {
            let lo = k.saturating_sub(half);
            let hi = (k + half + 1).min(raw.len());
            raw[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect();
    let indices: Vec<usize> = idx[1..idx.len() - 1].to_vec();
    Ok(VelocityProfile {
        timestamps: indices.iter().map(|&k| trace.timestamps[k]).collect(),
        indices,
        speeds,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub point: Point3,
    /// First and last trace index of the low-speed span.
    pub start: usize,
    pub end: usize,
    /// Trace index of the speed minimum.
    pub minimum: usize,
    pub mean_speed: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClusterSet {
    pub clusters: Vec<Cluster>,
}

impl ClusterSet {
    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }
}

fn median(v: &[f64]) -> f64 {
    let mut s: Vec<f64> = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Local speed minima whose prominence is at least `min_prominence` times
/// the median speed. Each becomes a cluster spanning the samples below the
/// half-prominence level around it, located at the centroid of the
/// samples within a tenth of the prominence of the minimum.
pub fn detect_clusters(profile: &VelocityProfile, trace: &PenTrace, min_prominence: f64) -> Result<ClusterSet> {
    if !(min_prominence > 0.0) {
        return Err(Error::config("min_prominence must be positive"));
    }
    let s = &profile.speeds;
    let m = s.len();
    if m == 0 {
        return Err(Error::InsufficientData("empty velocity profile".into()));
    }
    let level = min_prominence * median(s);

    // (run start, run end, prominence)
    let mut minima = Vec::new();
    let mut k = 0;
    while k < m {
        let mut e = k;
        while e + 1 < m && s[e + 1] == s[k] {
            e += 1;
        }
        let v = s[k];
        let left_higher = k > 0 && s[k - 1] > v;
        let right_higher = e + 1 < m && s[e + 1] > v;
        let is_min = (left_higher || k == 0) && (right_higher || e + 1 == m) && (left_higher || right_higher);
        if is_min {
            let col = |range: &mut dyn Iterator<Item = usize>| -> Option<f64> {
                let mut hi = None::<f64>;
                for j in range {
                    if s[j] < v {
                        break;
                    }
                    hi = Some(hi.map_or(s[j], |h: f64| h.max(s[j])));
                }
                hi
            };
            let l = col(&mut (0..k).rev());
            let r = col(&mut (e + 1..m));
            let prom = match (l, r) {
                (Some(a), Some(b)) => a.min(b),
                (Some(a), None) | (None, Some(a)) => a,
                (None, None) => v,
            } - v;
            if prom > 0.0 && prom >= level {
                minima.push((k, e, prom));
            }
        }
        k = e + 1;
    }

    let mut clusters = Vec::with_capacity(minima.len());
    let mut floor = 0usize;
    for (a, b, prom) in minima {
        let cut = s[a] + 0.5 * prom;
        // grow while the speed stays under the cut and keeps rising, so a
        // span never runs over a neighbouring peak
        let mut lo = a;
        while lo > floor && s[lo - 1] <= cut && s[lo - 1] >= s[lo] {
            lo -= 1;
        }
        let mut hi = b;
        while hi + 1 < m && s[hi + 1] <= cut && s[hi + 1] >= s[hi] {
            hi += 1;
        }
        let lo = lo.max(floor);
        if lo > hi {
            continue;
        }
        floor = hi + 1;
        let span = &profile.indices[lo..=hi];
        // centroid of the slowest part, which stays put even when the
        // span reaches into the start of a lift
        let core: Vec<usize> = (lo..=hi).filter(|&j| s[j] <= s[a] + 0.1 * prom).collect();
        let point = core.iter().map(|&j| trace.points[profile.indices[j]]).sum::<Point3>() / core.len() as f64;
        clusters.push(Cluster {
            point,
            start: span[0],
            end: *span.last().unwrap(),
            minimum: profile.indices[(a + b) / 2],
            mean_speed: s[lo..=hi].iter().sum::<f64>() / span.len() as f64,
        });
    }
    if clusters.is_empty() {
        return Err(Error::NoWritingDetected);
    }
    Ok(ClusterSet { clusters })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HandwritingConfig {
    /// Moving-average length for the speed series, frames.
    pub smooth_window: usize,
    /// Minimum prominence of a speed minimum, as a fraction of the median
    /// speed.
    pub min_prominence: f64,
    /// Outlier factor on the median absolute deviation of cluster distances.
    pub k_mad: f64,
    /// Clusters closer than this to the surface are never pruned, metres.
    pub min_prune_distance: f64,
    /// Lift threshold as a multiple of the median segment deviation.
    pub lift_factor: f64,
    /// Lower bound on the lift threshold, metres.
    pub min_lift_height: f64,
    /// Triangles lower than this fall back to the cluster surface, metres.
    pub min_triangle_height: f64,
    pub isomap: IsomapConfig,
}

impl Default for HandwritingConfig {
    fn default() -> Self {
        HandwritingConfig {
            smooth_window: 5,
            min_prominence: 0.5,
            k_mad: 3.0,
            min_prune_distance: 2e-3,
            lift_factor: 2.0,
            min_lift_height: 3e-3,
            min_triangle_height: 5e-3,
            isomap: IsomapConfig::default(),
        }
    }
}

impl HandwritingConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |f: &str, m: &str| {
            Err(Error::Config {
                field: format!("handwriting.{f}"),
                message: m.into(),
            })
        };
        if self.smooth_window == 0 {
            return bad("smooth_window", "must be at least 1");
        }
        if !(self.min_prominence > 0.0) {
            return bad("min_prominence", "must be positive");
        }
        if !(self.k_mad > 0.0) {
            return bad("k_mad", "must be positive");
        }
        if !(self.lift_factor > 0.0) {
            return bad("lift_factor", "must be positive");
        }
        if !(self.min_lift_height >= 0.0 && self.min_prune_distance >= 0.0 && self.min_triangle_height >= 0.0) {
            return bad("min_lift_height", "distances must be non-negative");
        }
        if self.isomap.grid_nodes < 9 {
            return bad("isomap.grid_nodes", "must be at least 9");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PruneOutcome {
    pub clusters: ClusterSet,
    /// Indices (into the input set) of the removed clusters.
    pub removed: Vec<usize>,
    /// True when there were too few clusters to fit a surface.
    pub skipped: bool,
}

fn ridge_for(n: usize) -> f64 {
    n as f64
}

/// Drops clusters that sit off the surface through the others. Each
/// cluster is measured against a ridge-regularised cubic fitted to the
/// rest; the worst one goes while it lies beyond `k_mad` median absolute
/// deviations (and beyond `min_prune_distance`), then the test repeats.
pub fn prune_spurious_clusters(set: &ClusterSet, cfg: &HandwritingConfig) -> Result<PruneOutcome> {
    if set.len() < 4 {
        return Ok(PruneOutcome {
            clusters: set.clone(),
            removed: vec![],
            skipped: true,
        });
    }
    let mut keep: Vec<usize> = (0..set.len()).collect();
    let mut removed = Vec::new();
    while keep.len() >= 4 {
        let dist: Vec<f64> = keep
            .iter()
            .map(|&i| {
                let others: Vec<Point3> = keep.iter().filter(|&&j| j != i).map(|&j| set.clusters[j].point).collect();
                surface::fit_with_ridge(&others, &Point3::zeros(), ridge_for(others.len()))
                    .map(|s| s.distance(&set.clusters[i].point).abs())
                    .unwrap_or(0.0)
            })
            .collect();
        let med = median(&dist);
        let dev: Vec<f64> = dist.iter().map(|d| (d - med).abs()).collect();
        let mad = median(&dev);
        let limit = (cfg.k_mad * mad).max(cfg.min_prune_distance);
        let (worst, d) = dist
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(k, d)| (k, *d))
            .unwrap();
        if d <= limit {
            break;
        }
        removed.push(keep.remove(worst));
    }
    removed.sort_unstable();
    Ok(PruneOutcome {
        clusters: ClusterSet {
            clusters: keep.iter().map(|&i| set.clusters[i].clone()).collect(),
        },
        removed,
        skipped: false,
    })
}

/// Trace span between clusters (or before the first / after the last).
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    /// Inclusive trace index range; `start > end` for an empty segment.
    pub start: usize,
    pub end: usize,
    pub before: Option<usize>,
    pub after: Option<usize>,
    /// Mean and largest orthogonal distance from the reference plane.
    pub mean_deviation: f64,
    pub max_deviation: f64,
    pub lift: bool,
}

impl Segment {
    pub fn is_empty(&self) -> bool {
        self.start > self.end
    }

    pub fn range(&self) -> std::ops::RangeInclusive<usize> {
        self.start..=self.end
    }
}

/// Plane as (point, unit normal).
type Plane = (Point3, Point3);

fn triangle_plane(a: &Point3, b: &Point3, c: &Point3, min_height: f64) -> Option<Plane> {
    let n = (b - a).cross(&(c - a));
    let longest = (b - a).norm().max((c - a).norm()).max((c - b).norm());
    if longest <= 0.0 || n.norm() / longest < min_height {
        return None;
    }
    Some((*a, n.normalize()))
}

/// Splits the trace at the clusters and flags segments that leave the
/// local writing plane. Each segment's plane passes through its end
/// clusters and the temporally nearest other cluster; a segment is a lift
/// when its mean distance from that plane exceeds `lift_factor` times the
/// median over all segments.
pub fn remove_pen_lifts(trace: &PenTrace, set: &ClusterSet, cfg: &HandwritingConfig) -> Result<Vec<Segment>> {
    let c = &set.clusters;
    if c.len() < 3 {
        return Err(Error::InsufficientData(format!("{} clusters, need 3", c.len())));
    }
    let fallback = surface::fit_with_ridge(&c.iter().map(|x| x.point).collect::<Vec<_>>(), &Point3::zeros(), ridge_for(c.len())).ok();

    let mut segs = Vec::with_capacity(c.len() + 1);
    let mut push = |start: usize, end: usize, before: Option<usize>, after: Option<usize>| {
        segs.push(Segment {
            start,
            end,
            before,
            after,
            mean_deviation: 0.0,
            max_deviation: 0.0,
            lift: false,
        })
    };
    if c[0].start > 0 {
        push(0, c[0].start - 1, None, Some(0));
    }
    for i in 0..c.len() - 1 {
        push(c[i].end + 1, c[i + 1].start.wrapping_sub(1), Some(i), Some(i + 1));
    }
    if c.last().unwrap().end + 1 < trace.len() {
        push(c.last().unwrap().end + 1, trace.len() - 1, Some(c.len() - 1), None);
    }

    for s in segs.iter_mut() {
        if s.is_empty() {
            continue;
        }
        let mut pick: Vec<usize> = s.before.into_iter().chain(s.after).collect();
        let centre = 0.5 * (s.start + s.end) as f64;
        let mut rest: Vec<usize> = (0..c.len()).filter(|k| !pick.contains(k)).collect();
        rest.sort_by(|&a, &b| {
            let da = (c[a].minimum as f64 - centre).abs();
            let db = (c[b].minimum as f64 - centre).abs();
            da.total_cmp(&db).then(a.cmp(&b))
        });
        pick.extend(rest.into_iter().take(3 - pick.len()));
        let plane = triangle_plane(&c[pick[0]].point, &c[pick[1]].point, &c[pick[2]].point, cfg.min_triangle_height);
        let devs: Vec<f64> = s
            .range()
            .filter(|&k| trace.usable(k))
            .map(|k| {
                let p = trace.points[k];
                match (&plane, &fallback) {
                    (Some((o, n)), _) => (p - o).dot(n).abs(),
                    (None, Some(f)) => f.distance(&p).abs(),
                    (None, None) => 0.0,
                }
            })
            .collect();
        if !devs.is_empty() {
            s.mean_deviation = devs.iter().sum::<f64>() / devs.len() as f64;
            s.max_deviation = devs.iter().fold(0.0, |m: f64, d| m.max(*d));
        }
    }

    let live: Vec<f64> = segs.iter().filter(|s| !s.is_empty()).map(|s| s.mean_deviation).collect();
    let residual = fallback.as_ref().map_or(0.0, |f| f.residual);
    let threshold = (cfg.lift_factor * median(&live)).max(cfg.min_lift_height).max(residual);
    for s in segs.iter_mut() {
        s.lift = !s.is_empty() && s.mean_deviation > threshold;
    }
    if segs.iter().filter(|s| !s.is_empty()).all(|s| s.lift) {
        return Err(Error::EmptyInk);
    }
    Ok(segs)
}

/// Trace indices of each stroke, in time order. Lift segments break
/// strokes; a cluster joins its neighbours, except that the half of it
/// past the speed minimum on a lift's side goes with the lift.
pub fn strokes_from_segments(trace: &PenTrace, set: &ClusterSet, segs: &[Segment]) -> Vec<Vec<usize>> {
    let lift_before = |ci: usize| segs.iter().any(|s| s.lift && s.after == Some(ci));
    let lift_after = |ci: usize| segs.iter().any(|s| s.lift && s.before == Some(ci));
    let mut pieces: Vec<(usize, usize, bool)> = segs
        .iter()
        .filter(|s| !s.is_empty())
        .map(|s| (s.start, s.end, s.lift))
        .collect();
    for (ci, c) in set.clusters.iter().enumerate() {
        let (a, b) = (
            if lift_before(ci) { c.minimum } else { c.start },
            if lift_after(ci) { c.minimum } else { c.end },
        );
        if lift_before(ci) && c.start < a {
            pieces.push((c.start, a - 1, true));
        }
        pieces.push((a, b, false));
        if lift_after(ci) && b < c.end {
            pieces.push((b + 1, c.end, true));
        }
    }
    pieces.sort_by_key(|p| p.0);

    let mut strokes = Vec::new();
    let mut cur: Vec<usize> = Vec::new();
    for (a, b, lift) in pieces {
        if lift {
            if !cur.is_empty() {
                strokes.push(std::mem::take(&mut cur));
            }
            continue;
        }
        cur.extend((a..=b).filter(|&k| trace.usable(k)));
    }
    if !cur.is_empty() {
        strokes.push(cur);
    }
    strokes
}

/// Flattened strokes in metres.
#[derive(Debug, Clone, PartialEq)]
pub struct Ink2D {
    pub strokes: Vec<Vec<[f64; 2]>>,
    /// Trace index of every stroke point.
    pub sample_indices: Vec<Vec<usize>>,
    /// `[xmin, ymin, xmax, ymax]`.
    pub bbox: [f64; 4],
    pub stress: f64,
}

impl Ink2D {
    fn from_parts(strokes: Vec<Vec<[f64; 2]>>, sample_indices: Vec<Vec<usize>>, stress: f64) -> Self {
        let mut bbox = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
        for p in strokes.iter().flatten() {
            bbox[0] = bbox[0].min(p[0]);
            bbox[1] = bbox[1].min(p[1]);
            bbox[2] = bbox[2].max(p[0]);
            bbox[3] = bbox[3].max(p[1]);
        }
        Ink2D {
            strokes,
            sample_indices,
            bbox,
            stress,
        }
    }

    pub fn width(&self) -> f64 {
        self.bbox[2] - self.bbox[0]
    }

    pub fn height(&self) -> f64 {
        self.bbox[3] - self.bbox[1]
    }

    /// One path per stroke, millimetre units, y pointing up on the page.
    pub fn write_svg(&self, mut out: impl Write) -> Result<()> {
        let mm = |v: f64| v * 1e3;
        let pad = 5.0;
        let (w, h) = (mm(self.width()) + 2.0 * pad, mm(self.height()) + 2.0 * pad);
        writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.2}mm" height="{h:.2}mm" viewBox="0 0 {w:.3} {h:.3}">"#
        )?;
        for s in &self.strokes {
            let d: Vec<String> = s
                .iter()
                .enumerate()
                .map(|(k, p)| {
                    let x = mm(p[0] - self.bbox[0]) + pad;
                    let y = mm(self.bbox[3] - p[1]) + pad;
                    format!("{}{x:.3},{y:.3}", if k == 0 { "M" } else { "L" })
                })
                .collect();
            writeln!(
                out,
                r#"  <path d="{}" fill="none" stroke="black" stroke-width="0.6" stroke-linecap="round"/>"#,
                d.join(" ")
            )?;
        }
        writeln!(out, "</svg>")?;
        Ok(())
    }

    pub fn save_svg(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_svg(std::fs::File::create(path)?)
    }

    /// Rows `stroke,sample,x,y` in metres.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["stroke", "sample", "x", "y"])?;
        for (k, (s, idx)) in self.strokes.iter().zip(&self.sample_indices).enumerate() {
            for (p, i) in s.iter().zip(idx) {
                w.write_record(&[k.to_string(), i.to_string(), format!("{:.9}", p[0]), format!("{:.9}", p[1])])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// Rotates an embedding so the writing runs along +x. The direction is
/// the chord of the longest stroke (start to end of a cursive word sit on
/// the baseline), or the principal axis when that chord is short.
fn orient(coords: &mut [[f64; 2]], chord: (usize, usize)) {
    let n = coords.len() as f64;
    let (mx, my) = coords.iter().fold((0.0, 0.0), |(a, b), p| (a + p[0] / n, b + p[1] / n));
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in coords.iter() {
        let (x, y) = (p[0] - mx, p[1] - my);
        sxx += x * x;
        sxy += x * y;
        syy += y * y;
    }
    let spread = ((sxx + syy) / n).sqrt();
    let (a, b) = (coords[chord.0], coords[chord.1]);
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let ang = if (dx * dx + dy * dy).sqrt() > spread {
        dy.atan2(dx)
    } else {
        let ang = 0.5 * (2.0 * sxy).atan2(sxx - syy);
        if dx * ang.cos() + dy * ang.sin() < 0.0 {
            ang + std::f64::consts::PI
        } else {
            ang
        }
    };
    let (c, s) = (ang.cos(), ang.sin());
    for p in coords.iter_mut() {
        let (x, y) = (p[0] - mx, p[1] - my);
        *p = [c * x + s * y, -s * x + c * y];
    }
}

/// Projects the strokes onto `surface`, flattens them, and re-threads the
/// embedded points in their original order.
pub fn flatten_isomap(
    trace: &PenTrace,
    strokes: &[Vec<usize>],
    surface: &SurfaceModel,
    cfg: &IsomapConfig,
) -> Result<Ink2D> {
    let flat: Vec<usize> = strokes.iter().flatten().copied().collect();
    let projected: Vec<Point3> = flat.iter().map(|&k| surface.project(&trace.points[k])).collect();
    let emb = isomap_embed(&projected, surface, cfg)?;
    let mut coords = emb.coords;
    let mut offset = 0;
    let mut chord = (0, coords.len() - 1);
    let mut longest = 0;
    for s in strokes {
        if s.len() > longest {
            longest = s.len();
            chord = (offset, offset + s.len() - 1);
        }
        offset += s.len();
    }
    orient(&mut coords, chord);
    let mut it = coords.into_iter();
    let out: Vec<Vec<[f64; 2]>> = strokes.iter().map(|s| it.by_ref().take(s.len()).collect()).collect();
    Ok(Ink2D::from_parts(out, strokes.to_vec(), emb.stress))
}

/// Baseline that ignores the surface: world x and y of every stroke point.
pub fn drop_z(trace: &PenTrace, strokes: &[Vec<usize>]) -> Ink2D {
    let out = strokes
        .iter()
        .map(|s| s.iter().map(|&k| [trace.points[k].x, trace.points[k].y]).collect())
        .collect();
    Ink2D::from_parts(out, strokes.to_vec(), f64::NAN)
}

/// Every intermediate of [`recover_ink`].
#[derive(Debug, Clone)]
pub struct InkRecovery {
    pub profile: VelocityProfile,
    pub detected: ClusterSet,
    pub pruned: PruneOutcome,
    pub segments: Vec<Segment>,
    pub strokes: Vec<Vec<usize>>,
    pub surface: SurfaceModel,
    pub ink: Ink2D,
}

impl InkRecovery {
    /// Per-sample flag: true where a usable sample ended up in no stroke.
    pub fn removed_mask(&self, trace: &PenTrace) -> Vec<bool> {
        let mut m: Vec<bool> = (0..trace.len()).map(|k| trace.usable(k)).collect();
        for &k in self.strokes.iter().flatten() {
            m[k] = false;
        }
        m
    }
}

/// Full handwriting chain from a pen trace to flat ink.
pub fn recover_ink(trace: &PenTrace, cfg: &HandwritingConfig) -> Result<InkRecovery> {
    cfg.validate()?;
    let profile = compute_velocity(trace, cfg.smooth_window)?;
    let detected = detect_clusters(&profile, trace, cfg.min_prominence)?;
    let pruned = prune_spurious_clusters(&detected, cfg)?;
    let segments = remove_pen_lifts(trace, &pruned.clusters, cfg)?;
    let strokes = strokes_from_segments(trace, &pruned.clusters, &segments);
    let pts: Vec<Point3> = strokes.iter().flatten().map(|&k| trace.points[k]).collect();
    let surface = fit_writing_surface(&pts)?;
    let ink = match flatten_isomap(trace, &strokes, &surface, &cfg.isomap) {
        Err(Error::DisconnectedGraph(_)) if cfg.isomap.k_neighbors > 0 => {
            let wider = IsomapConfig {
                k_neighbors: cfg.isomap.k_neighbors * 3 / 2,
                ..cfg.isomap
            };
            flatten_isomap(trace, &strokes, &surface, &wider)?
        }
        r => r?,
    };
    Ok(InkRecovery {
        profile,
        detected,
        pruned,
        segments,
        strokes,
        surface,
        ink,
    })
}
