use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point3 = Vector3<f64>;

pub const MIC_COUNT: usize = 7;
pub const MIC_SPACING: f64 = 0.036;
pub const SECONDARY_OFFSET: f64 = 0.15;

/// Seven-microphone planar array and the fixed secondary speaker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayGeometry {
    pub mic_positions: Vec<[f64; 3]>,
    pub secondary_source_position: [f64; 3],
    pub up_axis: [f64; 3],
}

impl Default for ArrayGeometry {
    fn default() -> Self {
        Self::standard()
    }
}

impl ArrayGeometry {
    /// Centre microphone plus six on a 3.6 cm circle in the z = 0 plane,
    /// secondary speaker 15 cm along +x.
    pub fn standard() -> Self {
        let mut mics = vec![[0.0, 0.0, 0.0]];
        for k in 0..6 {
            let a = k as f64 * std::f64::consts::PI / 3.0;
            mics.push([MIC_SPACING * a.cos(), MIC_SPACING * a.sin(), 0.0]);
        }
        ArrayGeometry {
            mic_positions: mics,
            secondary_source_position: [SECONDARY_OFFSET, 0.0, 0.0],
            up_axis: [0.0, 0.0, 1.0],
        }
    }

    pub fn mic(&self, i: usize) -> Point3 {
        Point3::from(self.mic_positions[i])
    }

    pub fn mics(&self) -> Vec<Point3> {
        self.mic_positions.iter().map(|&m| Point3::from(m)).collect()
    }

    pub fn secondary(&self) -> Point3 {
        Point3::from(self.secondary_source_position)
    }

    pub fn up(&self) -> Point3 {
        Point3::from(self.up_axis)
    }

    pub fn centroid(&self) -> Point3 {
        let s: Point3 = self.mics().iter().sum();
        s / self.mic_positions.len() as f64
    }

    pub fn mic_distance(&self, i: usize, j: usize) -> f64 {
        (self.mic(i) - self.mic(j)).norm()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidScene(m));
        if self.mic_positions.len() != MIC_COUNT {
            return bad(format!(
                "array needs exactly {MIC_COUNT} microphones, got {}",
                self.mic_positions.len()
            ));
        }
        let finite = |p: &[f64; 3]| p.iter().all(|v| v.is_finite());
        if !self.mic_positions.iter().all(finite)
            || !finite(&self.secondary_source_position)
            || !finite(&self.up_axis)
        {
            return bad("non-finite coordinate in array geometry".into());
        }
        let up = self.up();
        if (up.norm() - 1.0).abs() > 1e-9 {
            return bad("up axis must be a unit vector".into());
        }
        let c = self.centroid();
        for (i, m) in self.mics().iter().enumerate() {
            if (m - c).dot(&up).abs() > 1e-6 {
                return bad(format!("microphone {i} is off the array plane"));
            }
        }
        let mut nearest = f64::INFINITY;
        for i in 0..MIC_COUNT {
            for j in 0..i {
                nearest = nearest.min(self.mic_distance(i, j));
            }
        }
        if (nearest - MIC_SPACING).abs() > 2e-3 {
            return bad(format!(
                "nearest microphone spacing {:.4} m is not 3.6 cm",
                nearest
            ));
        }
        let s = self.secondary();
        if (s - c).dot(&up).abs() > 1e-6 {
            return bad("secondary speaker must be coplanar with the array".into());
        }
        if ((s - c).norm() - SECONDARY_OFFSET).abs() > 5e-3 {
            return bad(format!(
                "secondary speaker is {:.3} m from the array centre, expected 0.15 m",
                (s - c).norm()
            ));
        }
        Ok(())
    }
}

/// Circular patch limiting a reflector's extent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Disk {
    pub center: [f64; 3],
    pub radius: f64,
}

/// Planar reflector `normal · x = offset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Reflector {
    pub normal: [f64; 3],
    pub offset: f64,
    pub coefficient: f64,
    #[serde(default)]
    pub extent: Option<Disk>,
}

impl Reflector {
    pub fn new(normal: [f64; 3], offset: f64, coefficient: f64) -> Self {
        let n = Point3::from(normal);
        let len = n.norm();
        Reflector {
            normal: (n / len).into(),
            offset: offset / len,
            coefficient,
            extent: None,
        }
    }

    pub fn with_extent(mut self, center: [f64; 3], radius: f64) -> Self {
        self.extent = Some(Disk { center, radius });
        self
    }

    pub fn n(&self) -> Point3 {
        Point3::from(self.normal)
    }

    pub fn signed_distance(&self, p: &Point3) -> f64 {
        self.n().dot(p) - self.offset
    }

    pub fn mirror(&self, p: &Point3) -> Point3 {
        p - 2.0 * self.signed_distance(p) * self.n()
    }

    pub fn within_extent(&self, p: &Point3) -> bool {
        match &self.extent {
            None => true,
            Some(d) => (p - Point3::from(d.center)).norm() <= d.radius,
        }
    }

    /// Specular point for a path from `src` to `dst`, if both lie on the
    /// same side and the point falls inside the extent.
    pub fn specular_point(&self, src: &Point3, dst: &Point3) -> Option<Point3> {
        let ds = self.signed_distance(src);
        let dd = self.signed_distance(dst);
        if ds * dd <= 0.0 {
            return None;
        }
        let img = self.mirror(dst);
        let di = self.signed_distance(&img);
        let t = ds / (ds - di);
        let p = src + (img - src) * t;
        self.within_extent(&p).then_some(p)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if !n.iter().all(|v| v.is_finite()) || (n.norm() - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidScene("reflector normal must be a unit vector".into()));
        }
        if !(0.0..=1.0).contains(&self.coefficient) {
            return Err(Error::InvalidScene(format!(
                "reflection coefficient {} outside [0, 1]",
                self.coefficient
            )));
        }
        if let Some(d) = &self.extent {
            if !(d.radius > 0.0) {
                return Err(Error::InvalidScene("reflector extent radius must be positive".into()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_geometry_is_valid() {
        let g = ArrayGeometry::standard();
        g.validate().unwrap();
        assert!((g.mic_distance(1, 2) - 0.036).abs() < 1e-12);
        assert!((g.mic_distance(0, 4) - 0.036).abs() < 1e-12);
        assert!((g.secondary() - g.centroid()).norm() - 0.15 < 1e-12);
    }

    #[test]
    fn geometry_rejects_six_mics() {
        let mut g = ArrayGeometry::standard();
        g.mic_positions.pop();
        assert!(g.validate().is_err());
    }

    #[test]
    fn image_source_path_length() {
        // wall 0.5 m behind the array
        let wall = Reflector::new([1.0, 0.0, 0.0], -0.5, 0.8);
        let src = Point3::new(0.2, 0.1, 0.3);
        let mic = Point3::new(0.0, 0.0, 0.0);
        let p = wall.specular_point(&src, &mic).unwrap();
        let via = (src - p).norm() + (p - mic).norm();
        let img = wall.mirror(&mic);
        assert!((via - (src - img).norm()).abs() < 1e-12);
        // closed form: image of the mic is (-1, 0, 0)
        let expect = ((0.2f64 + 1.0).powi(2) + 0.01 + 0.09).sqrt();
        assert!((via - expect).abs() < 1e-12);
        assert!(wall.specular_point(&Point3::new(-0.6, 0.0, 0.1), &mic).is_none());
    }

    #[test]
    fn extent_limits_reflection() {
        let wall = Reflector::new([1.0, 0.0, 0.0], -0.5, 0.8).with_extent([-0.5, 3.0, 0.0], 0.1);
        let src = Point3::new(0.2, 0.1, 0.3);
        assert!(wall.specular_point(&src, &Point3::zeros()).is_none());
    }
}
