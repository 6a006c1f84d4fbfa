//! Windowed-sinc kernels used by the simulator: fractional delay and the
//! capture anti-alias filter.

use std::f64::consts::PI;

/// Zeroth-order modified Bessel function of the first kind.
pub(crate) fn bessel_i0(x: f64) -> f64 {
    let y = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= y / (k as f64 * k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Kaiser window evaluated at offset `x` from the centre of a window of
/// half-width `half`.
pub(crate) fn kaiser_window(x: f64, half: f64, beta: f64) -> f64 {
    kaiser(x, half, beta)
}

fn kaiser(x: f64, half: f64, beta: f64) -> f64 {
    let r = x / half;
    if r.abs() >= 1.0 {
        0.0
    } else {
        bessel_i0(beta * (1.0 - r * r).sqrt()) / bessel_i0(beta)
    }
}

/// Polyphase table of Kaiser-windowed sinc kernels for reading a sampled
/// signal at fractional positions. Phases in between are blended linearly.
#[derive(Debug, Clone)]
pub struct FractionalDelay {
    half: usize,
    phases: usize,
    table: Vec<f64>,
}

impl Default for FractionalDelay {
    fn default() -> Self {
        Self::new(32, 512, 9.0)
    }
}

impl FractionalDelay {
    /// `half` taps on each side, `phases` sub-sample steps.
    pub fn new(half: usize, phases: usize, beta: f64) -> Self {
        assert!(half >= 4 && phases >= 2);
        let taps = 2 * half;
        let mut table = Vec::with_capacity((phases + 1) * taps);
        for p in 0..=phases {
            let mu = p as f64 / phases as f64;
            for k in 0..taps {
                let n = k as f64 - (half as f64 - 1.0) - mu;
                table.push(sinc(n) * kaiser(n, half as f64, beta));
            }
        }
        FractionalDelay {
            half,
            phases,
            table,
        }
    }

    pub fn half_width(&self) -> usize {
        self.half
    }

    /// Value of `x` at fractional index `pos`; samples outside the slice
    /// count as zero.
    pub fn interpolate(&self, x: &[f64], pos: f64) -> f64 {
        let i = pos.floor();
        let mu = pos - i;
        let i = i as isize;
        let p = mu * self.phases as f64;
        let pi = (p.floor() as usize).min(self.phases - 1);
        let a = p - pi as f64;
        let taps = 2 * self.half;
        let h0 = &self.table[pi * taps..(pi + 1) * taps];
        let h1 = &self.table[(pi + 1) * taps..(pi + 2) * taps];
        let first = i - (self.half as isize - 1);
        let mut acc = 0.0;
        if first >= 0 && (first as usize + taps) <= x.len() {
            let xs = &x[first as usize..first as usize + taps];
            for k in 0..taps {
                acc += ((1.0 - a) * h0[k] + a * h1[k]) * xs[k];
            }
        } else {
            for k in 0..taps {
                let idx = first + k as isize;
                if idx >= 0 && (idx as usize) < x.len() {
                    acc += ((1.0 - a) * h0[k] + a * h1[k]) * x[idx as usize];
                }
            }
        }
        acc
    }
}

/// Linear-phase Kaiser low-pass with unit DC gain and odd length.
pub fn kaiser_lowpass(taps: usize, cutoff: f64, sample_rate: f64, beta: f64) -> Vec<f64> {
    assert!(taps % 2 == 1, "odd length keeps an integer group delay");
    let mid = (taps / 2) as f64;
    let fc = cutoff / sample_rate;
    let mut h: Vec<f64> = (0..taps)
        .map(|k| {
            let n = k as f64 - mid;
            2.0 * fc * sinc(2.0 * fc * n) * kaiser(n, mid + 1.0, beta)
        })
        .collect();
    let s: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v /= s);
    h
}

/// Magnitude response of an FIR filter at `freq`.
pub fn fir_gain(h: &[f64], freq: f64, sample_rate: f64) -> f64 {
    let w = 2.0 * PI * freq / sample_rate;
    let (mut re, mut im) = (0.0, 0.0);
    for (k, v) in h.iter().enumerate() {
        re += v * (w * k as f64).cos();
        im -= v * (w * k as f64).sin();
    }
    (re * re + im * im).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn i0_reference_values() {
        assert!((bessel_i0(0.0) - 1.0).abs() < 1e-15);
        assert!((bessel_i0(1.0) - 1.266_065_877_752_008_4).abs() < 1e-13);
        assert!((bessel_i0(6.0) - 67.234_406_976_478_3).abs() < 1e-9);
    }

    #[test]
    fn fractional_delay_of_tones() {
        let fd = FractionalDelay::default();
        let fs = 192e3;
        for &f in &[7e3, 33e3, 45e3, 82e3] {
            let x: Vec<f64> = (0..2000).map(|n| (2.0 * PI * f * n as f64 / fs).sin()).collect();
            let mut worst: f64 = 0.0;
            for k in 0..200 {
                let pos = 900.0 + k as f64 * 0.0371;
                let want = (2.0 * PI * f * pos / fs).sin();
                worst = worst.max((fd.interpolate(&x, pos) - want).abs());
            }
            assert!(worst < 1e-4, "{f} Hz worst error {worst}");
        }
    }

    #[test]
    fn integer_positions_are_exact() {
        let fd = FractionalDelay::default();
        let x: Vec<f64> = (0..300).map(|n| ((n * 37) % 11) as f64 - 5.0).collect();
        for i in 40..260 {
            assert!((fd.interpolate(&x, i as f64) - x[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn anti_alias_response() {
        let h = kaiser_lowpass(129, 7800.0, 192e3, 6.0);
        let db = |f: f64| 20.0 * fir_gain(&h, f, 192e3).log10();
        assert!(db(0.0).abs() < 1e-9);
        assert!(db(7000.0) > -3.0);
        assert!(db(9000.0) < -15.0);
        for f in (24_000..96_000).step_by(500) {
            assert!(db(f as f64) < -70.0, "{f} Hz");
        }
    }

    #[test]
    fn capture_kernel_nulls_the_receive_image() {
        let h = super::super::CaptureFilter::default().kernel(192e3);
        assert_eq!(h.len() % 2, 1);
        let g7 = fir_gain(&h, 7000.0, 192e3);
        let rel = |f: f64| 20.0 * (fir_gain(&h, f, 192e3) / g7).log10();
        assert!(rel(9000.0) < -120.0);
        assert!(rel(8900.0) < -28.0 && rel(9100.0) < -28.0);
        assert!(20.0 * g7.log10() > -3.5);
        for f in (24_000..96_000).step_by(500) {
            assert!(rel(f as f64) < -68.0, "{f} Hz");
        }
    }
}
