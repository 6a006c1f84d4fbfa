//! Third-order writing-surface model in a principal-axes frame.

use nalgebra::{DMatrix, DVector, Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::Point3;

/// Number of cubic polynomial terms in two variables.
pub const TERMS: usize = 10;

/// Surface `w = f(u, v)` in a local frame, with `f` a cubic in the scaled
/// coordinates `(u/s, v/s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceModel {
    pub origin: [f64; 3],
    /// Rows are the local axes `u`, `v` and the normal `w`.
    pub axes: [[f64; 3]; 3],
    /// Length scale of the polynomial variables, metres.
    pub scale: f64,
    /// Coefficients of 1, u, v, u², uv, v², u³, u²v, uv², v³ (scaled
    /// variables), giving `w` in metres.
    pub coefficients: [f64; TERMS],
    /// RMS of `w - f(u, v)` over the fitted points, metres.
    pub residual: f64,
}

fn terms(u: f64, v: f64) -> [f64; TERMS] {
    [1.0, u, v, u * u, u * v, v * v, u * u * u, u * u * v, u * v * v, v * v * v]
}

impl SurfaceModel {
    fn axis(&self, k: usize) -> Point3 {
        Point3::from(self.axes[k])
    }

    /// Local coordinates `(u, v, w)` in metres.
    pub fn to_local(&self, p: &Point3) -> Point3 {
        let d = p - Point3::from(self.origin);
        Point3::new(d.dot(&self.axis(0)), d.dot(&self.axis(1)), d.dot(&self.axis(2)))
    }

    pub fn from_local(&self, u: f64, v: f64, w: f64) -> Point3 {
        Point3::from(self.origin) + self.axis(0) * u + self.axis(1) * v + self.axis(2) * w
    }

    /// Height of the surface above `(u, v)`, metres.
    pub fn height(&self, u: f64, v: f64) -> f64 {
        let t = terms(u / self.scale, v / self.scale);
        t.iter().zip(&self.coefficients).map(|(a, b)| a * b).sum()
    }

    fn gradient(&self, u: f64, v: f64) -> (f64, f64) {
        let (x, y) = (u / self.scale, v / self.scale);
        let c = &self.coefficients;
        let du = c[1] + 2.0 * c[3] * x + c[4] * y + 3.0 * c[6] * x * x + 2.0 * c[7] * x * y + c[8] * y * y;
        let dv = c[2] + c[4] * x + 2.0 * c[5] * y + c[7] * x * x + 2.0 * c[8] * x * y + 3.0 * c[9] * y * y;
        (du / self.scale, dv / self.scale)
    }

    /// Surface point above `(u, v)`.
    pub fn point(&self, u: f64, v: f64) -> Point3 {
        self.from_local(u, v, self.height(u, v))
    }

    /// Signed distance from the surface, first order in the slope.
    pub fn distance(&self, p: &Point3) -> f64 {
        let l = self.to_local(p);
        let (gu, gv) = self.gradient(l.x, l.y);
        (l.z - self.height(l.x, l.y)) / (1.0 + gu * gu + gv * gv).sqrt()
    }

    /// Drops `p` onto the surface along the local normal axis.
    pub fn project(&self, p: &Point3) -> Point3 {
        let l = self.to_local(p);
        self.point(l.x, l.y)
    }

    /// Largest higher-order (≥ 2) coefficient in metres.
    pub fn curvature_terms(&self) -> f64 {
        self.coefficients[3..].iter().fold(0.0f64, |m, c| m.max(c.abs()))
    }
}

/// Principal axes of a cloud, largest spread first, with the normal
/// pointing away from `viewpoint` and a right-handed frame.
pub(crate) fn principal_frame(points: &[Point3], viewpoint: &Point3) -> (Point3, [Point3; 3], [f64; 3]) {
    let n = points.len() as f64;
    let c: Point3 = points.iter().sum::<Point3>() / n;
    let mut cov = Matrix3::<f64>::zeros();
    for p in points {
        let d = p - c;
        cov += d * d.transpose();
    }
    cov /= n;
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let col = |k: usize| -> Point3 { eig.eigenvectors.column(order[k]).into_owned() };
    let mut e3 = col(2);
    if e3.dot(&(c - viewpoint)) < 0.0 {
        e3 = -e3;
    }
    let e1 = col(0);
    let e2 = e3.cross(&e1);
    let var = [
        eig.eigenvalues[order[0]].max(0.0),
        eig.eigenvalues[order[1]].max(0.0),
        eig.eigenvalues[order[2]].max(0.0),
    ];
    (c, [e1, e2, e3], var)
}

/// Least-squares cubic fit with a ridge penalty `ridge` on the terms of
/// order two and up (scaled variables, so the penalty is dimensionless).
pub(crate) fn fit_with_ridge(points: &[Point3], viewpoint: &Point3, ridge: f64) -> Result<SurfaceModel> {
    if points.len() < 3 {
        return Err(Error::DegenerateCloud(format!("{} points", points.len())));
    }
    let (c, axes, var) = principal_frame(points, viewpoint);
    if var[1].sqrt() < 1e-6 {
        return Err(Error::DegenerateCloud("points are collinear".into()));
    }
    let local: Vec<Point3> = points
        .iter()
        .map(|p| {
            let d = p - c;
            Point3::new(d.dot(&axes[0]), d.dot(&axes[1]), d.dot(&axes[2]))
        })
        .collect();
    let scale = (local.iter().map(|l| l.x * l.x + l.y * l.y).sum::<f64>() / local.len() as f64).sqrt();
    let mut a = DMatrix::<f64>::zeros(local.len(), TERMS);
    let mut b = DVector::<f64>::zeros(local.len());
    for (r, l) in local.iter().enumerate() {
        for (k, t) in terms(l.x / scale, l.y / scale).iter().enumerate() {
            a[(r, k)] = *t;
        }
        b[r] = l.z;
    }
    let mut ata = a.transpose() * &a;
    let atb = a.transpose() * &b;
    for k in 0..TERMS {
        ata[(k, k)] += if k >= 3 { ridge } else { 1e-12 };
    }
    let sol = ata
        .cholesky()
        .ok_or_else(|| Error::DegenerateCloud("surface normal equations are singular".into()))?
        .solve(&atb);
    let mut coefficients = [0.0; TERMS];
    coefficients.copy_from_slice(sol.as_slice());
    let mut m = SurfaceModel {
        origin: [c.x, c.y, c.z],
        axes: [axes[0].into(), axes[1].into(), axes[2].into()],
        scale,
        coefficients,
        residual: 0.0,
    };
    m.residual = (local.iter().map(|l| (l.z - m.height(l.x, l.y)).powi(2)).sum::<f64>() / local.len() as f64).sqrt();
    Ok(m)
}

/// Fits the writing surface to stroke points, normal facing away from the
/// array centre at the origin.
pub fn fit_writing_surface(points: &[Point3]) -> Result<SurfaceModel> {
    fit_writing_surface_facing(points, &Point3::zeros())
}

/// As [`fit_writing_surface`], with the normal facing away from `viewpoint`.
pub fn fit_writing_surface_facing(points: &[Point3], viewpoint: &Point3) -> Result<SurfaceModel> {
    if points.len() < 10 {
        return Err(Error::DegenerateCloud(format!(
            "{} points, need at least 10",
            points.len()
        )));
    }
    let (c, axes, _) = principal_frame(points, viewpoint);
    let span = |k: usize| {
        let (lo, hi) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            let x = (p - c).dot(&axes[k]);
            (lo.min(x), hi.max(x))
        });
        hi - lo
    };
    if span(0) < 0.02 || span(1) < 0.02 {
        return Err(Error::DegenerateCloud(format!(
            "points span {:.4} × {:.4} m, need 2 cm in two directions",
            span(0),
            span(1)
        )));
    }
    fit_with_ridge(points, viewpoint, 1e-12)
}
