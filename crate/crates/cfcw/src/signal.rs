//! Physical constants and phase/distance conversions.
//!
//! Angles are radians and wrapped into `[-π, π]`. Positive distance change
//! means the beacon moved away from the microphone.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_SPEED_OF_SOUND: f64 = 343.0;

/// Propagation medium.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Medium {
    pub speed_of_sound: f64,
}

impl Default for Medium {
    fn default() -> Self {
        Medium {
            speed_of_sound: DEFAULT_SPEED_OF_SOUND,
        }
    }
}

impl Medium {
    pub fn new(speed_of_sound: f64) -> Result<Self> {
        let m = Medium { speed_of_sound };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.speed_of_sound.is_finite() && self.speed_of_sound > 0.0) {
            return Err(Error::arg(format!(
                "speed of sound must be positive, got {}",
                self.speed_of_sound
            )));
        }
        Ok(())
    }

    pub fn wavelength(&self, frequency: f64) -> f64 {
        self.speed_of_sound / frequency
    }
}

/// Microphone transfer `y = A1 x + A2 x²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonlinearityModel {
    pub linear_gain: f64,
    pub quadratic_gain: f64,
}

impl Default for NonlinearityModel {
    fn default() -> Self {
        NonlinearityModel {
            linear_gain: 1.0,
            quadratic_gain: 0.1,
        }
    }
}

impl NonlinearityModel {
    pub fn new(linear_gain: f64, quadratic_gain: f64) -> Result<Self> {
        let m = NonlinearityModel {
            linear_gain,
            quadratic_gain,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.linear_gain.is_finite()
            && self.quadratic_gain.is_finite()
            && self.linear_gain > 0.0
            && self.quadratic_gain >= 0.0
            && self.quadratic_gain < self.linear_gain;
        if !ok {
            return Err(Error::arg(format!(
                "need 0 <= A2 < A1 with A1 > 0, got A1={} A2={}",
                self.linear_gain, self.quadratic_gain
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        self.linear_gain * x + self.quadratic_gain * x * x
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseSample {
    pub wrapped_phase: f64,
    pub frame_index: usize,
    pub frequency: f64,
}

impl PhaseSample {
    pub fn new(phase: f64, frame_index: usize, frequency: f64) -> Self {
        PhaseSample {
            wrapped_phase: wrap_phase(phase),
            frame_index,
            frequency,
        }
    }
}

/// Wraps an angle into `[-π, π]`.
#[inline]
pub fn wrap_phase(x: f64) -> f64 {
    if (-PI..=PI).contains(&x) {
        return x;
    }
    let r = (x + PI).rem_euclid(2.0 * PI) - PI;
    // rem_euclid can round up to exactly 2π for tiny negative inputs
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

fn check_finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::arg(format!("{name} is not finite")))
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    check_finite(name, v)?;
    if v > 0.0 {
        Ok(())
    } else {
        Err(Error::arg(format!("{name} must be positive, got {v}")))
    }
}

/// Distance change for a phase change at the primary frequency.
pub fn phase_to_distance_delta(dphi: f64, f_primary: f64, medium: &Medium) -> Result<f64> {
    check_finite("phase", dphi)?;
    check_positive("primary frequency", f_primary)?;
    medium.validate()?;
    Ok(dphi * medium.speed_of_sound / (2.0 * PI * f_primary))
}

/// Largest radial speed whose per-frame phase step stays unambiguous.
///
/// The classic bound keeps the step under π. Knowing the direction of
/// motion doubles it.
pub fn max_unambiguous_speed(
    f_primary: f64,
    frame_period: f64,
    medium: &Medium,
    velocity_aided: bool,
) -> Result<f64> {
    check_positive("primary frequency", f_primary)?;
    check_positive("frame period", frame_period)?;
    medium.validate()?;
    let classic = medium.speed_of_sound / (2.0 * f_primary * frame_period);
    Ok(if velocity_aided { 2.0 * classic } else { classic })
}

/// Worst-case phase and distance error from an interfering path whose
/// amplitude is `amplitude_ratio` times the direct path.
pub fn interference_error_bound(
    amplitude_ratio: f64,
    f_primary: f64,
    medium: &Medium,
) -> Result<(f64, f64)> {
    check_finite("amplitude ratio", amplitude_ratio)?;
    if !(0.0..=1.0).contains(&amplitude_ratio) {
        return Err(Error::arg(format!(
            "amplitude ratio must lie in [0, 1], got {amplitude_ratio}"
        )));
    }
    let dphi = amplitude_ratio.asin();
    let dd = phase_to_distance_delta(dphi, f_primary, medium)?;
    Ok((dphi, dd))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn wrap_stays_in_range() {
        for k in -50..50 {
            let x = k as f64 * 0.37;
            let w = wrap_phase(x);
            assert!((-PI..=PI).contains(&w));
            assert_relative_eq!(w.sin(), x.sin(), epsilon = 1e-12);
            assert_relative_eq!(w.cos(), x.cos(), epsilon = 1e-12);
        }
        assert_eq!(wrap_phase(-1e-18), -1e-18);
    }

    #[test]
    fn distance_examples() {
        let m = Medium::default();
        assert_eq!(phase_to_distance_delta(0.0, 40_000.0, &m).unwrap(), 0.0);
        let one = phase_to_distance_delta(2.0 * PI, 40_000.0, &m).unwrap();
        assert_relative_eq!(one, 343.0 / 40_000.0, max_relative = 1e-12);
        assert_relative_eq!(one, 8.575e-3, epsilon = 1e-9);
        let half = phase_to_distance_delta(PI, 80_000.0, &m).unwrap();
        assert_relative_eq!(half, 2.1438e-3, epsilon = 1e-7);
    }

    #[test]
    fn distance_rejects_bad_input() {
        let m = Medium::default();
        assert!(phase_to_distance_delta(f64::NAN, 40e3, &m).is_err());
        assert!(phase_to_distance_delta(1.0, 0.0, &m).is_err());
        assert!(phase_to_distance_delta(1.0, f64::INFINITY, &m).is_err());
        assert!(phase_to_distance_delta(1.0, 40e3, &Medium { speed_of_sound: -1.0 }).is_err());
    }

    #[test]
    fn speed_examples() {
        let m = Medium::default();
        let v = max_unambiguous_speed(40_000.0, 3e-3, &m, false).unwrap();
        assert_relative_eq!(v, 1.429, epsilon = 5e-4);
        let va = max_unambiguous_speed(40_000.0, 3e-3, &m, true).unwrap();
        assert_relative_eq!(va, 2.858, epsilon = 5e-4);
        let v80 = max_unambiguous_speed(80_000.0, 3e-3, &m, false).unwrap();
        assert_relative_eq!(v80, 0.7146, epsilon = 5e-5);
        assert!(max_unambiguous_speed(40e3, 0.0, &m, false).is_err());
    }

    #[test]
    fn speed_matches_reported_figures_with_lower_c() {
        // The published 1.41 and 2.83 m/s imply c close to 338 m/s.
        let m = Medium::new(338.0).unwrap();
        let v = max_unambiguous_speed(40_000.0, 3e-3, &m, false).unwrap();
        assert!((v - 1.41).abs() < 0.01);
        let va = max_unambiguous_speed(40_000.0, 3e-3, &m, true).unwrap();
        assert!((va - 2.83).abs() < 0.02);
    }

    #[test]
    fn interference_examples() {
        let m = Medium::default();
        assert_eq!(interference_error_bound(0.0, 40e3, &m).unwrap(), (0.0, 0.0));
        let (p, d) = interference_error_bound(1.0, 40e3, &m).unwrap();
        assert_relative_eq!(p, PI / 2.0, epsilon = 1e-12);
        assert_relative_eq!(d, 2.1438e-3, epsilon = 1e-7);
        let (p, d) = interference_error_bound(0.5, 40e3, &m).unwrap();
        assert_relative_eq!(p, PI / 6.0, epsilon = 1e-12);
        assert_relative_eq!(d, 0.7146e-3, epsilon = 1e-7);
        assert!(interference_error_bound(1.01, 40e3, &m).is_err());
        assert!(interference_error_bound(-0.1, 40e3, &m).is_err());
    }

    #[test]
    fn nonlinearity_invariants() {
        assert!(NonlinearityModel::new(1.0, 0.1).is_ok());
        assert!(NonlinearityModel::new(0.0, 0.0).is_err());
        assert!(NonlinearityModel::new(1.0, -0.1).is_err());
        assert!(NonlinearityModel::new(1.0, 1.0).is_err());
        let m = NonlinearityModel::default();
        assert_relative_eq!(m.apply(2.0), 2.4, epsilon = 1e-12);
    }
}
