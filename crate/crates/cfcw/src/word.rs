//! Synthetic handwriting with ground-truth labels.
//!
//! Glyphs are polylines in x-height units. The pen stops (dwells) at every
//! vertex, moves between vertices with a minimum-jerk profile, and travels
//! between strokes along an arc lifted off the writing surface.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{MotionPath, Point3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Label {
    Stroke,
    Lift,
    Stop,
}

/// Where the writing surface sits relative to the array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlanePose {
    FlatTop,
    FlatBeside,
    SlantBeside,
    VerticalTop,
}

impl PlanePose {
    /// Centre, rightward and upward writing axes. The writer faces the
    /// surface from the side away from the array.
    pub fn frame(self) -> (Point3, Point3, Point3) {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        match self {
            PlanePose::FlatTop => (Point3::new(0.0, 0.0, 0.2), Point3::x(), Point3::y()),
            PlanePose::FlatBeside => (Point3::new(0.22, 0.0, 0.06), Point3::x(), Point3::y()),
            PlanePose::SlantBeside => (Point3::new(0.18, 0.0, 0.15), Point3::y(), Point3::new(-h, 0.0, h)),
            PlanePose::VerticalTop => (Point3::new(0.0, 0.05, 0.25), -Point3::x(), Point3::z()),
        }
    }

    pub const ALL: [PlanePose; 4] = [
        PlanePose::FlatTop,
        PlanePose::FlatBeside,
        PlanePose::SlantBeside,
        PlanePose::VerticalTop,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticWordSpec {
    /// "fit", "home", "star", or any word spelled from the built-in glyphs.
    pub template: String,
    /// Width of the written word, metres.
    pub size: f64,
    pub pose: PlanePose,
    /// Peak pen speed, m/s.
    pub peak_speed: f64,
    /// Height of pen-lift arcs above the surface, metres.
    pub lift_height: f64,
    /// Pause at each vertex, seconds.
    pub dwell: f64,
    /// Still time before the first and after the last stroke, seconds.
    pub rest: f64,
    /// Shortest move between vertices, seconds.
    pub min_move: f64,
    /// Adds a stop at the top of the first lift arc.
    pub spurious_stop: bool,
    /// Bends the surface into a cylinder of this radius about the
    /// upward writing axis.
    pub curvature_radius: Option<f64>,
}

impl Default for SyntheticWordSpec {
    fn default() -> Self {
        SyntheticWordSpec {
            template: "fit".into(),
            size: 0.10,
            pose: PlanePose::FlatTop,
            peak_speed: 0.3,
            lift_height: 0.02,
            dwell: 0.03,
            rest: 0.06,
            min_move: 0.06,
            spurious_stop: false,
            curvature_radius: None,
        }
    }
}

impl SyntheticWordSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |f: &str, m: String| {
            Err(Error::Config {
                field: format!("word.{f}"),
                message: m,
            })
        };
        if !(0.03..=0.20).contains(&self.size) {
            return bad("size", format!("{} m is outside [0.03, 0.20]", self.size));
        }
        if !(self.peak_speed > 0.0 && self.peak_speed <= 3.0) {
            return bad("peak_speed", format!("{} m/s is outside (0, 3]", self.peak_speed));
        }
        if !(self.lift_height >= 0.0 && self.lift_height < 0.1) {
            return bad("lift_height", format!("{} m is outside [0, 0.1)", self.lift_height));
        }
        if !(self.dwell >= 0.0 && self.rest >= 0.0 && self.min_move > 0.0) {
            return bad("dwell", "timings must be non-negative and min_move positive".into());
        }
        if let Some(r) = self.curvature_radius {
            if !(r > 0.0) || self.size > r * std::f64::consts::PI {
                return bad("curvature_radius", format!("{r} m cannot hold a {} m word", self.size));
            }
        }
        glyph_strokes(&self.template).map(|_| ())
    }
}

struct Glyph {
    body: &'static [(f64, f64)],
    extras: &'static [&'static [(f64, f64)]],
    advance: f64,
}

fn glyph(c: char) -> Option<Glyph> {
    let g = |body, extras, advance| Some(Glyph { body, extras, advance });
    match c {
        'a' => g(&[(0.0, 0.0), (0.5, 0.9), (0.1, 0.5), (0.3, 0.0), (0.6, 0.9), (0.6, 0.0), (0.8, 0.0)], &[], 0.8),
        'c' => g(&[(0.0, 0.0), (0.6, 0.9), (0.2, 0.7), (0.15, 0.1), (0.7, 0.0)], &[], 0.7),
        'e' => g(&[(0.0, 0.0), (0.6, 0.5), (0.4, 1.0), (0.1, 0.5), (0.3, 0.0), (0.7, 0.0)], &[], 0.7),
        'f' => g(
            &[(0.0, 0.0), (0.4, 1.3), (0.6, 2.0), (0.8, 1.8), (0.4, 0.0), (0.7, 0.0)],
            &[&[(0.1, 1.0), (0.8, 1.0)]],
            0.8,
        ),
        'h' => g(&[(0.0, 0.0), (0.3, 2.0), (0.2, 0.0), (0.45, 0.9), (0.7, 0.8), (0.75, 0.0), (0.9, 0.0)], &[], 0.9),
        'i' => g(&[(0.0, 0.0), (0.2, 1.0), (0.2, 0.0), (0.4, 0.0)], &[&[(0.2, 1.45), (0.24, 1.55)]], 0.4),
        'l' => g(&[(0.0, 0.0), (0.35, 2.0), (0.15, 1.9), (0.2, 0.0), (0.45, 0.0)], &[], 0.45),
        'm' => g(
            &[(0.0, 0.0), (0.1, 0.9), (0.2, 0.0), (0.45, 0.9), (0.55, 0.0), (0.8, 0.9), (0.9, 0.0), (1.05, 0.0)],
            &[],
            1.05,
        ),
        'n' => g(&[(0.0, 0.0), (0.1, 0.9), (0.2, 0.0), (0.5, 0.9), (0.6, 0.0), (0.75, 0.0)], &[], 0.75),
        'o' => g(&[(0.0, 0.0), (0.3, 0.9), (0.6, 0.6), (0.4, 0.0), (0.1, 0.3), (0.3, 0.9), (0.75, 0.8)], &[], 0.8),
        'r' => g(&[(0.0, 0.0), (0.15, 0.9), (0.25, 0.6), (0.55, 0.9), (0.45, 0.0), (0.65, 0.0)], &[], 0.65),
        's' => g(&[(0.0, 0.0), (0.55, 0.9), (0.15, 0.65), (0.5, 0.3), (0.1, 0.0), (0.65, 0.0)], &[], 0.65),
        't' => g(&[(0.0, 0.0), (0.3, 1.6), (0.3, 0.0), (0.6, 0.0)], &[&[(0.0, 1.0), (0.6, 1.0)]], 0.6),
        'u' => g(&[(0.0, 0.0), (0.1, 0.9), (0.2, 0.0), (0.5, 0.9), (0.5, 0.0), (0.7, 0.0)], &[], 0.7),
        _ => None,
    }
}

/// Characters the glyph table can spell.
pub const GLYPHS: &str = "acefhilmnorstu";

/// Strokes of a template in x-height units, in writing order.
fn glyph_strokes(template: &str) -> Result<Vec<Vec<(f64, f64)>>> {
    match template {
        "fit" => {
            return Ok(vec![
                vec![
                    (0.0, 0.0),
                    (0.4, 1.3),
                    (0.6, 2.0),
                    (0.85, 1.8),
                    (0.45, 0.0),
                    (0.75, 0.0),
                    (1.0, 1.0),
                    (1.0, 0.0),
                    (1.3, 0.0),
                    (1.6, 1.7),
                    (1.6, 0.0),
                    (2.0, 0.0),
                ],
                vec![(1.0, 1.45), (1.04, 1.55)],
                vec![(0.2, 1.0), (1.9, 1.0)],
            ])
        }
        "home" => {
            return Ok(vec![vec![
                (0.0, 0.0),
                (0.3, 2.0),
                (0.25, 0.0),
                (0.5, 0.9),
                (0.8, 0.8),
                (0.8, 0.0),
                (1.2, 0.9),
                (1.5, 0.7),
                (1.4, 0.05),
                (1.1, 0.2),
                (1.6, 0.0),
                (1.8, 0.9),
                (1.9, 0.0),
                (2.1, 0.9),
                (2.25, 0.0),
                (2.4, 0.9),
                (2.55, 0.0),
                (2.9, 0.5),
                (2.7, 0.9),
                (2.55, 0.5),
                (2.8, 0.0),
                (3.1, 0.1),
            ]])
        }
        "star" => {
            let pts = (0..=5)
                .map(|k| {
                    let a = std::f64::consts::FRAC_PI_2 + (k % 5) as f64 * 4.0 * std::f64::consts::PI / 5.0;
                    (a.cos(), a.sin())
                })
                .collect();
            return Ok(vec![pts]);
        }
        _ => {}
    }
    if template.is_empty() {
        return Err(Error::Config {
            field: "word.template".into(),
            message: "empty template".into(),
        });
    }
    let mut body = Vec::new();
    let mut extras = Vec::new();
    let mut x = 0.0;
    for c in template.chars() {
        let g = glyph(c).ok_or_else(|| Error::Config {
            field: "word.template".into(),
            message: format!("no glyph for {c:?}; available: {GLYPHS}"),
        })?;
        body.extend(g.body.iter().map(|&(a, b)| (a + x, b)));
        extras.extend(g.extras.iter().map(|s| s.iter().map(|&(a, b)| (a + x, b)).collect::<Vec<_>>()));
        x += g.advance;
    }
    body.dedup();
    let mut out = vec![body];
    out.extend(extras);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Move {
    Dwell([f64; 2], f64),
    Line([f64; 2], [f64; 2]),
    /// In-plane endpoints, arc height, and the covered fraction of the arc.
    Arc([f64; 2], [f64; 2], f64, f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Piece {
    t0: f64,
    t1: f64,
    label: Label,
    motion: Move,
}

/// Minimum-jerk progress on `[0, 1]`.
fn min_jerk(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
}

/// Peak of d(min_jerk)/ds.
const MIN_JERK_PEAK: f64 = 1.875;

/// Generated word: a deterministic function of time, plus its structure.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticWord {
    pub spec: SyntheticWordSpec,
    pieces: Vec<Piece>,
    pub duration: f64,
    /// Number of pen-lift arcs.
    pub lifts: usize,
    /// Number of programmed stops (vertex dwells plus any spurious stop).
    pub stops: usize,
    centre: Point3,
    ex: Point3,
    ey: Point3,
    normal: Point3,
}

impl SyntheticWord {
    pub fn new(spec: &SyntheticWordSpec) -> Result<Self> {
        spec.validate()?;
        let raw = glyph_strokes(&spec.template)?;
        let (mut xlo, mut xhi, mut ylo, mut yhi) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in raw.iter().flatten() {
            xlo = xlo.min(x);
            xhi = xhi.max(x);
            ylo = ylo.min(y);
            yhi = yhi.max(y);
        }
        let k = spec.size / (xhi - xlo);
        let (cx, cy) = (0.5 * (xlo + xhi), 0.5 * (ylo + yhi));
        let strokes: Vec<Vec<[f64; 2]>> = raw
            .iter()
            .map(|s| s.iter().map(|&(x, y)| [(x - cx) * k, (y - cy) * k]).collect())
            .collect();

        let mut pieces = Vec::new();
        let mut t = 0.0;
        let mut stops = 0;
        let mut lifts = 0;
        let add = |pieces: &mut Vec<Piece>, t: &mut f64, dt: f64, label, motion| {
            pieces.push(Piece {
                t0: *t,
                t1: *t + dt,
                label,
                motion,
            });
            *t += dt;
        };
        let move_time = |len: f64| (MIN_JERK_PEAK * len / spec.peak_speed).max(spec.min_move);
        add(&mut pieces, &mut t, spec.rest, Label::Stop, Move::Dwell(strokes[0][0], 0.0));
        stops += 1;
        for (si, s) in strokes.iter().enumerate() {
            if si > 0 {
                let a = *strokes[si - 1].last().unwrap();
                let b = s[0];
                let d = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
                let h = spec.lift_height;
                lifts += 1;
                if spec.spurious_stop && lifts == 1 {
                    let half = move_time((d * d / 4.0 + (std::f64::consts::PI * h / 2.0).powi(2)).sqrt() * 2.0);
                    add(&mut pieces, &mut t, half, Label::Lift, Move::Arc(a, b, h, 0.0, 0.5));
                    let mid = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
                    add(&mut pieces, &mut t, spec.dwell, Label::Stop, Move::Dwell(mid, h));
                    stops += 1;
                    add(&mut pieces, &mut t, half, Label::Lift, Move::Arc(a, b, h, 0.5, 1.0));
                } else {
                    let len = (d * d + (std::f64::consts::PI * h).powi(2)).sqrt();
                    add(&mut pieces, &mut t, move_time(len), Label::Lift, Move::Arc(a, b, h, 0.0, 1.0));
                }
                add(&mut pieces, &mut t, spec.dwell, Label::Stop, Move::Dwell(b, 0.0));
                stops += 1;
            }
            for w in s.windows(2) {
                let d = ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt();
                add(&mut pieces, &mut t, move_time(d), Label::Stroke, Move::Line(w[0], w[1]));
                add(&mut pieces, &mut t, spec.dwell, Label::Stop, Move::Dwell(w[1], 0.0));
                stops += 1;
            }
        }
        if let Some(last) = pieces.last_mut() {
            last.t1 += spec.rest;
            t += spec.rest;
        }
        let (centre, ex, ey) = spec.pose.frame();
        Ok(SyntheticWord {
            spec: spec.clone(),
            pieces,
            duration: t,
            lifts,
            stops,
            centre,
            ex,
            ey,
            normal: ex.cross(&ey),
        })
    }

    fn piece(&self, t: f64) -> &Piece {
        let k = self.pieces.partition_point(|p| p.t1 <= t);
        &self.pieces[k.min(self.pieces.len() - 1)]
    }

    /// Word-plane coordinates and height above the surface.
    fn local(&self, t: f64) -> ([f64; 2], f64) {
        let p = self.piece(t);
        let s = if p.t1 > p.t0 { (t - p.t0) / (p.t1 - p.t0) } else { 1.0 };
        match p.motion {
            Move::Dwell(q, w) => (q, w),
            Move::Line(a, b) => {
                let u = min_jerk(s);
                ([a[0] + (b[0] - a[0]) * u, a[1] + (b[1] - a[1]) * u], 0.0)
            }
            Move::Arc(a, b, h, f0, f1) => {
                let u = f0 + (f1 - f0) * min_jerk(s);
                (
                    [a[0] + (b[0] - a[0]) * u, a[1] + (b[1] - a[1]) * u],
                    h * (std::f64::consts::PI * u).sin(),
                )
            }
        }
    }

    /// Maps word-plane coordinates and height to the world.
    pub fn place(&self, q: [f64; 2], w: f64) -> Point3 {
        match self.spec.curvature_radius {
            None => self.centre + self.ex * q[0] + self.ey * q[1] + self.normal * w,
            Some(r) => {
                let th = q[0] / r;
                let n = self.ex * th.sin() + self.normal * th.cos();
                self.centre + self.ex * (r * th.sin()) + self.normal * (r * (th.cos() - 1.0)) + self.ey * q[1] + n * w
            }
        }
    }

    /// Pen position at time `t`; still before 0 and after the end.
    pub fn position(&self, t: f64) -> Point3 {
        let (q, w) = self.local(t.clamp(0.0, self.duration));
        self.place(q, w)
    }

    pub fn label(&self, t: f64) -> Label {
        if t <= 0.0 || t >= self.duration {
            return Label::Stop;
        }
        self.piece(t).label
    }

    /// Signed height above the writing surface at time `t`.
    pub fn height(&self, t: f64) -> f64 {
        self.local(t.clamp(0.0, self.duration)).1
    }

    /// Mid-times of the programmed stops (the still spans at each vertex,
    /// plus the rests).
    pub fn stop_times(&self) -> Vec<f64> {
        self.pieces
            .iter()
            .filter(|p| p.label == Label::Stop)
            .map(|p| 0.5 * (p.t0 + p.t1))
            .collect()
    }

    /// Writing-plane frame: centre, rightward, upward and normal axes.
    pub fn frame(&self) -> (Point3, Point3, Point3, Point3) {
        (self.centre, self.ex, self.ey, self.normal)
    }

    /// Path sampled every `dt` over `[t0, t1]`.
    pub fn motion_path(&self, t0: f64, t1: f64, dt: f64) -> Result<MotionPath> {
        MotionPath::from_fn(t0, t1, dt, |t| self.position(t))
    }
}

/// Path sampled at `frame_rate` over the whole word, with one label per
/// sample.
pub fn generate_word(spec: &SyntheticWordSpec, frame_rate: f64) -> Result<(SyntheticWord, MotionPath, Vec<Label>)> {
    if !(frame_rate > 0.0) {
        return Err(Error::arg("frame rate must be positive"));
    }
    let word = SyntheticWord::new(spec)?;
    let path = word.motion_path(0.0, word.duration, 1.0 / frame_rate)?;
    let labels = path.timestamps.iter().map(|&t| word.label(t)).collect();
    Ok((word, path, labels))
}

/// Fifty words spelled from the glyph table, each with at least one lift.
pub const CORPUS: [&str; 50] = [
    "fit", "sit", "hit", "lit", "tie", "ten", "tan", "ton", "tea", "toe", "eat", "net", "nut", "hut", "hat", "mat",
    "rat", "rut", "art", "ant", "oat", "lot", "not", "set", "its", "fun", "fan", "fur", "fir", "fin", "elf", "ice",
    "icon", "iron", "lion", "mint", "tint", "list", "mist", "fist", "salt", "melt", "rest", "test", "time", "tune",
    "site", "smile", "file", "fine",
];
