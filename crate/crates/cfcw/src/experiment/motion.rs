//! Built-in beacon motions.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{bad, read_path_csv, ExperimentConfig};
use crate::error::Result;
use crate::sim::{MotionPath, Point3};
use crate::word::{SyntheticWord, SyntheticWordSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShapeKind {
    Circle,
    /// Five-lobed closed curve `r = R (1 + 0.25 cos 5θ)`.
    Star,
}

fn default_rest() -> f64 {
    0.03
}

fn default_ramp() -> f64 {
    0.05
}

fn default_normal() -> [f64; 3] {
    [0.0, 0.0, 1.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MotionConfig {
    Stationary {
        position: [f64; 3],
    },
    /// Minimum-jerk move of `amplitude` metres away from the array centre
    /// between `t0` and `t1`.
    Radial {
        start: [f64; 3],
        amplitude: f64,
        t0: f64,
        t1: f64,
    },
    /// Radial motion away from the array centre that eases into a
    /// constant `speed` after `rest` seconds.
    Ramp {
        start: [f64; 3],
        speed: f64,
        #[serde(default = "default_rest")]
        rest: f64,
        #[serde(default = "default_ramp")]
        ramp: f64,
    },
    /// Closed curve in the plane through `centre` with normal `normal`,
    /// traversed at `speed` after a rest and an ease-in.
    Shape {
        shape: ShapeKind,
        centre: [f64; 3],
        radius: f64,
        speed: f64,
        #[serde(default = "default_normal")]
        normal: [f64; 3],
        #[serde(default = "default_rest")]
        rest: f64,
        #[serde(default = "default_ramp")]
        ramp: f64,
    },
    Word {
        #[serde(default)]
        spec: SyntheticWordSpec,
    },
    /// `t,x,y,z` CSV, path relative to the config file.
    File {
        path: String,
    },
}

/// Distance covered by a motion that eases from rest into `speed` over
/// `ramp` seconds (smoothstep velocity) starting at `rest`.
fn eased_distance(t: f64, speed: f64, rest: f64, ramp: f64) -> f64 {
    let s = t - rest;
    if s <= 0.0 {
        0.0
    } else if s < ramp {
        let u = s / ramp;
        speed * ramp * (u.powi(3) - 0.5 * u.powi(4))
    } else {
        speed * (0.5 * ramp + s - ramp)
    }
}

fn min_jerk(u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    u * u * u * (10.0 - 15.0 * u + 6.0 * u * u)
}

/// Arc-length table of a closed polar curve, for constant-speed travel.
struct Curve {
    theta: Vec<f64>,
    arc: Vec<f64>,
    kind: ShapeKind,
    radius: f64,
}

impl Curve {
    fn new(kind: ShapeKind, radius: f64) -> Self {
        let n = 20_000;
        let mut theta = Vec::with_capacity(n + 1);
        let mut arc = Vec::with_capacity(n + 1);
        let mut prev = Self::polar(kind, radius, 0.0);
        let mut s = 0.0;
        for i in 0..=n {
            let th = 2.0 * PI * i as f64 / n as f64;
            let p = Self::polar(kind, radius, th);
            s += ((p.0 - prev.0).powi(2) + (p.1 - prev.1).powi(2)).sqrt();
            prev = p;
            theta.push(th);
            arc.push(s);
        }
        Curve { theta, arc, kind, radius }
    }

    fn polar(kind: ShapeKind, radius: f64, th: f64) -> (f64, f64) {
        let r = match kind {
            ShapeKind::Circle => radius,
            ShapeKind::Star => radius * (1.0 + 0.25 * (5.0 * th).cos()),
        };
        (r * th.cos(), r * th.sin())
    }

    fn at(&self, s: f64) -> (f64, f64) {
        let len = *self.arc.last().unwrap();
        let s = s.rem_euclid(len);
        let i = self.arc.partition_point(|&a| a < s).clamp(1, self.arc.len() - 1);
        let f = (s - self.arc[i - 1]) / (self.arc[i] - self.arc[i - 1]).max(1e-300);
        let th = self.theta[i - 1] + f * (self.theta[i] - self.theta[i - 1]);
        Self::polar(self.kind, self.radius, th)
    }
}

fn plane_axes(normal: Point3) -> (Point3, Point3) {
    let n = normal.normalize();
    let helper = if n.x.abs() < 0.9 { Point3::x() } else { Point3::y() };
    let a = (helper - n * helper.dot(&n)).normalize();
    (a, n.cross(&a))
}

impl MotionConfig {
    pub fn validate(&self, cfg: &ExperimentConfig) -> Result<()> {
        let finite = |name: &str, v: &[f64; 3]| {
            if v.iter().all(|x| x.is_finite()) {
                Ok(())
            } else {
                Err(bad(name, "must be finite"))
            }
        };
        match self {
            MotionConfig::Stationary { position } => finite("position", position),
            MotionConfig::Radial { start, amplitude, t0, t1 } => {
                finite("start", start)?;
                if !amplitude.is_finite() {
                    return Err(bad("amplitude", "must be finite"));
                }
                if !(t1 > t0) {
                    return Err(bad("t1", "must be after t0"));
                }
                Ok(())
            }
            MotionConfig::Ramp { start, speed, rest, ramp } => {
                finite("start", start)?;
                if !(speed.is_finite() && *rest >= 0.0 && *ramp > 0.0) {
                    return Err(bad("speed", "needs finite speed, rest >= 0 and ramp > 0"));
                }
                Ok(())
            }
            MotionConfig::Shape {
                centre,
                radius,
                speed,
                normal,
                rest,
                ramp,
                ..
            } => {
                finite("centre", centre)?;
                finite("normal", normal)?;
                if Point3::from(*normal).norm() < 1e-9 {
                    return Err(bad("normal", "must be non-zero"));
                }
                if !(*radius > 0.0 && *radius < 0.3) {
                    return Err(bad("radius", format!("{radius} m is outside (0, 0.3)")));
                }
                if !(*speed > 0.0 && speed.is_finite()) {
                    return Err(bad("speed", "must be positive"));
                }
                if !(*rest >= 0.0 && *ramp > 0.0) {
                    return Err(bad("rest", "needs rest >= 0 and ramp > 0"));
                }
                Ok(())
            }
            MotionConfig::Word { spec } => spec.validate().map_err(|e| match e {
                crate::Error::Config { field, message } => bad(&field, message),
                other => bad("spec", other.to_string()),
            }),
            MotionConfig::File { path } => {
                if cfg.resolve(path).is_file() {
                    Ok(())
                } else {
                    Err(bad("path", format!("{path} does not exist")))
                }
            }
        }
    }
}

/// Samples the configured motion every `dt` over `[t0, t1]`.
pub(super) fn build(cfg: &ExperimentConfig, t0: f64, t1: f64, dt: f64) -> Result<(MotionPath, Option<SyntheticWord>)> {
    let centroid = cfg.scene.geometry.centroid();
    let away = |start: &[f64; 3]| -> Point3 {
        let d = Point3::from(*start) - centroid;
        if d.norm() > 0.0 {
            d.normalize()
        } else {
            cfg.scene.geometry.up()
        }
    };
    let path = match &cfg.motion {
        MotionConfig::Stationary { position } => MotionPath::stationary(Point3::from(*position), t0, t1),
        MotionConfig::Radial {
            start,
            amplitude,
            t0: a,
            t1: b,
        } => {
            let (p0, u) = (Point3::from(*start), away(start));
            MotionPath::from_fn(t0, t1, dt, |t| p0 + u * (amplitude * min_jerk((t - a) / (b - a))))?
        }
        MotionConfig::Ramp { start, speed, rest, ramp } => {
            let (p0, u) = (Point3::from(*start), away(start));
            MotionPath::from_fn(t0, t1, dt, |t| p0 + u * eased_distance(t, *speed, *rest, *ramp))?
        }
        MotionConfig::Shape {
            shape,
            centre,
            radius,
            speed,
            normal,
            rest,
            ramp,
        } => {
            let curve = Curve::new(*shape, *radius);
            let (a, b) = plane_axes(Point3::from(*normal));
            let c = Point3::from(*centre);
            MotionPath::from_fn(t0, t1, dt, |t| {
                let (x, y) = curve.at(eased_distance(t, *speed, *rest, *ramp));
                c + a * x + b * y
            })?
        }
        MotionConfig::Word { spec } => {
            let w = SyntheticWord::new(spec)?;
            let p = w.motion_path(t0, t1, dt)?;
            return Ok((p, Some(w)));
        }
        MotionConfig::File { path } => {
            let p = read_path_csv(cfg.resolve(path))?;
            if p.start() > t0 || p.end() < t1 {
                return Err(bad(
                    "path",
                    format!("covers [{}, {}] s, the simulation needs [{t0}, {t1}]", p.start(), p.end()),
                ));
            }
            p
        }
    };
    Ok((path, None))
}
