use std::f64::consts::PI;

use super::*;
use crate::signal::NonlinearityModel;
use crate::sim::{
    mix_ambient, simulate_capture, voice_band_noise, MotionPath, Point3, Reflector, Scene, FIELD_PAD, SIM_LEAD,
};
use crate::tx::{build_fixed_schedule, build_hop_schedule};

const FS: f64 = 16e3;

fn tone_capture(len: usize, phase: f64) -> RawCapture {
    scaled_tone(len, phase, 0.01)
}

fn scaled_tone(len: usize, phase: f64, amplitude: f64) -> RawCapture {
    let x: Vec<f64> = (0..len)
        .map(|n| amplitude * (2.0 * PI * 7e3 * n as f64 / FS + phase).cos())
        .collect();
    RawCapture::new(FS, vec![x; 7]).unwrap()
}

fn path_over(duration: f64, f: impl Fn(f64) -> Point3) -> MotionPath {
    MotionPath::from_fn(-SIM_LEAD, duration + FIELD_PAD + 1e-3, 2e-4, f).unwrap()
}

/// Raised-cosine ramp from 0 to 1 over `[t0, t0 + len]`.
fn ramp(t: f64, t0: f64, len: f64) -> f64 {
    let u = ((t - t0) / len).clamp(0.0, 1.0);
    0.5 - 0.5 * (PI * u).cos()
}

#[test]
fn static_tone_gives_constant_phase() {
    let sched = build_hop_schedule(7e3, 40e3, 2e3, 3e-3, 0.06).unwrap();
    let cap = tone_capture(1200, 0.3);
    let frames = frame_spectra(&cap, &sched, &DemodConfig::default()).unwrap();
    for f in &frames[0] {
        assert!((f.wrapped_phase - 0.3).abs() < 1e-6);
        assert!((f.magnitude - 0.01).abs() < 1e-9);
    }
    let track = track_range(&frames, &sched, &Medium::default(), &DemodConfig::default()).unwrap();
    assert!(track.mics[0].distance_change.iter().all(|d| d.abs() < 1e-12));
}

#[test]
fn truncated_capture_names_the_frame() {
    let sched = build_hop_schedule(7e3, 40e3, 2e3, 3e-3, 0.06).unwrap();
    let cap = tone_capture(500, 0.0);
    match frame_spectra(&cap, &sched, &DemodConfig::default()) {
        Err(Error::TruncatedCapture { frame, .. }) => assert_eq!(frame, 10),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn config_limits() {
    let sched = build_hop_schedule(7e3, 40e3, 2e3, 3e-3, 0.03).unwrap();
    let ok = DemodConfig::default();
    assert!(ok.validate(&sched, FS).is_ok());
    let short = DemodConfig {
        win_los: 0.4e-3,
        ..ok
    };
    assert!(short.validate(&sched, FS).is_err());
    let half = DemodConfig {
        win_los: 0.5e-3,
        ..ok
    };
    assert!(half.validate(&sched, FS).is_ok());
    let rate = DemodConfig {
        frame_rate: 500.0,
        ..ok
    };
    assert!(rate.validate(&sched, FS).is_err());
    let late = DemodConfig {
        arrival_delay: 2.5e-3,
        ..ok
    };
    assert!(late.validate(&sched, FS).is_err());
}

#[test]
fn hopping_keeps_line_at_receive_frequency() {
    let sched = build_hop_schedule(7e3, 40e3, 2e3, 3e-3, 0.03).unwrap();
    let p = Point3::new(0.05, 0.05, 0.2);
    let cap = simulate_capture(
        &Scene::default(),
        &sched,
        &path_over(0.03, |_| p),
        &NonlinearityModel::default(),
    )
    .unwrap();
    let cfg = DemodConfig::default();
    for f in &frame_spectra(&cap, &sched, &cfg).unwrap()[0] {
        let x = &cap.channels[0];
        let peak = (1..8)
            .max_by(|&a, &b| {
                let m = |k: usize| project(x, f.window_start, 16, 2.0 * PI * k as f64 / 16.0).norm();
                m(a).total_cmp(&m(b))
            })
            .unwrap();
        assert_eq!(peak, 7, "slot {}", f.slot);
    }
}

#[test]
fn constant_velocity_gives_phase_ramp() {
    let v = 0.2;
    let sched = build_fixed_schedule(7e3, 40e3, 3e-3, 0.09, 25e3).unwrap();
    let p0 = Point3::new(0.0, 0.0, 0.15);
    let path = path_over(0.09, |t| p0 + Point3::new(0.0, 0.0, v * t));
    let cap = simulate_capture(&Scene::default(), &sched, &path, &NonlinearityModel::default()).unwrap();
    let track = demodulate(&cap, &sched, &Medium::default(), &DemodConfig::default()).unwrap();
    let u = &track.mics[0].unwrapped_phase;
    let n = u.len();
    // least-squares slope in rad/s
    let t: Vec<f64> = (0..n).map(|k| k as f64 * 3e-3).collect();
    let tm = t.iter().sum::<f64>() / n as f64;
    let um = u.iter().sum::<f64>() / n as f64;
    let num: f64 = t.iter().zip(u).map(|(a, b)| (a - tm) * (b - um)).sum();
    let den: f64 = t.iter().map(|a| (a - tm) * (a - tm)).sum();
    let slope = num / den;
    let want = -2.0 * PI * 40e3 * v / 343.0;
    assert!((slope / want - 1.0).abs() < 0.01, "slope {slope} want {want}");
}

#[test]
fn beacon_echo_beyond_window_leaves_phase_unchanged() {
    // a reflector patch behind the array that only the beacon reaches; the
    // echo travels about 0.8 m further than the direct path
    let beacon = Point3::new(0.1, 0.0, 0.2);
    let patch = Reflector::new([1.0, 0.0, 0.0], -0.45, 0.8).with_extent([-0.45, 0.0, 0.09], 0.04);
    let mut walled = Scene::default();
    walled.reflectors.push(patch.clone());
    let m = walled.geometry.mic(0);
    let excess = (beacon - patch.mirror(&m)).norm() - (beacon - m).norm();
    assert!(excess / 343.0 > 2.0e-3);
    let sched = build_hop_schedule(7e3, 40e3, 2e3, 3e-3, 0.03).unwrap();
    let path = path_over(0.03, |_| beacon);
    let nl = NonlinearityModel::default();
    let cfg = DemodConfig::default();
    let clean = frame_spectra(&simulate_capture(&Scene::default(), &sched, &path, &nl).unwrap(), &sched, &cfg).unwrap();
    let echo = frame_spectra(&simulate_capture(&walled, &sched, &path, &nl).unwrap(), &sched, &cfg).unwrap();
    for (a, b) in clean.iter().flatten().zip(echo.iter().flatten()) {
        let d = wrap_phase(a.wrapped_phase - b.wrapped_phase).abs();
        assert!(d < 1e-3, "slot {} phase moved {d}", a.slot);
    }
}

#[test]
fn retreat_of_five_millimetres() {
    let sched = build_hop_schedule(7e3, 40e3, 2e3, 3e-3, 0.6).unwrap();
    let p0 = Point3::new(0.05, 0.02, 0.25);
    let u = p0.normalize();
    let path = path_over(0.6, |t| p0 + u * (5e-3 * ramp(t, 0.03, 0.5)));
    let scene = Scene::default();
    let cap = simulate_capture(&scene, &sched, &path, &NonlinearityModel::default()).unwrap();
    let track = demodulate(&cap, &sched, &Medium::default(), &DemodConfig::default()).unwrap();
    for (i, m) in track.mics.iter().enumerate() {
        let mic = scene.geometry.mic(i);
        let truth = (path.position_at(0.6) - mic).norm() - (p0 - mic).norm();
        let got = *m.distance_change.last().unwrap();
        assert!(m.reliable);
        assert!((got - truth).abs() < 10e-6, "mic {i}: {got} vs {truth}");
        if i == 0 {
            assert!((got - 5e-3).abs() < 10e-6);
        }
    }
}

#[test]
fn still_beacon_reports_no_motion() {
    let sched = build_hop_schedule(7e3, 40e3, 2e3, 3e-3, 0.06).unwrap();
    let p = Point3::new(-0.05, 0.08, 0.3);
    let cap = simulate_capture(&Scene::default(), &sched, &path_over(0.06, |_| p), &NonlinearityModel::default())
        .unwrap();
    let track = demodulate(&cap, &sched, &Medium::default(), &DemodConfig::default()).unwrap();
    for m in &track.mics {
        assert!(m.distance_change.iter().all(|d| d.abs() < 1e-9));
    }
}

/// Wrapped phases of a 40 kHz line for a beacon whose radial speed ramps
/// from rest to `v` over 60 ms, sampled every 3 ms.
fn ramped_stream(v: f64, frames: usize) -> (Vec<f64>, Vec<f64>) {
    let dt = 1e-4;
    let mut d = 0.0;
    let mut t = 0.0;
    let mut truth = Vec::new();
    for k in 0..frames {
        let target = k as f64 * 3e-3;
        while t < target - 1e-12 {
            d += v * ramp(t + dt / 2.0, 0.0, 0.06) * dt;
            t += dt;
        }
        truth.push(-2.0 * PI * 40e3 * d / 343.0);
    }
    (truth.iter().map(|&x| wrap_phase(x)).collect(), truth)
}

#[test]
fn classic_unwrap_at_one_metre_per_second() {
    let step = 2.0 * PI * 40e3 * 1.0 * 3e-3 / 343.0;
    assert!(step < PI);
    let truth: Vec<f64> = (0..100).map(|k| -(k as f64) * step).collect();
    let wrapped: Vec<f64> = truth.iter().map(|&x| wrap_phase(x)).collect();
    let cfg = UnwrapConfig {
        velocity_aided: false,
        ..UnwrapConfig::default()
    };
    let u = unwrap_phase(&wrapped, &cfg);
    for (a, b) in u.phase.iter().zip(&truth) {
        assert!((a - b).abs() < 1e-9);
    }
    let speed = (u.phase[99] - u.phase[0]).abs() / (99.0 * 3e-3) * 343.0 / (2.0 * PI * 40e3);
    assert!((speed - 1.0).abs() < 0.01);
}

#[test]
fn aided_unwrap_at_two_metres_per_second() {
    let (wrapped, truth) = ramped_stream(2.0, 120);
    let last = truth[119] - truth[118];
    assert!(last.abs() > PI && last.abs() < 2.0 * PI);
    let u = unwrap_phase(&wrapped, &UnwrapConfig::default());
    assert!(u.reliable);
    for (a, b) in u.phase.iter().zip(&truth) {
        assert!((a - b).abs() < 1e-9);
    }
    let classic = unwrap_phase(
        &wrapped,
        &UnwrapConfig {
            velocity_aided: false,
            ..UnwrapConfig::default()
        },
    );
    assert!((classic.phase[119] - truth[119]).abs() > 1.0);
}

#[test]
fn three_metres_per_second_is_flagged() {
    let (wrapped, truth) = ramped_stream(3.0, 120);
    let u = unwrap_phase(&wrapped, &UnwrapConfig::default());
    assert!(!u.reliable);
    let first_fast = (1..truth.len()).find(|&k| (truth[k] - truth[k - 1]).abs() > 2.0 * PI).unwrap();
    assert_eq!(u.unreliable_from, Some(first_fast));
}

#[test]
fn voice_band_noise_stays_within_leakage_bound() {
    let sched = build_hop_schedule(7e3, 40e3, 2e3, 3e-3, 0.06).unwrap();
    let cfg = DemodConfig {
        win_los: 0.5e-3,
        ..DemodConfig::default()
    };
    // a line of 0.4 against 70 dB speech (RMS 0.063)
    let clean = scaled_tone(1200, -1.1, 0.4);
    let noise = voice_band_noise(1200, 11);
    let noisy = mix_ambient(&clean, &noise, 70.0).unwrap();
    let only = RawCapture::new(FS, noisy.channels.iter().zip(&clean.channels).map(|(a, b)| {
        a.iter().zip(b).map(|(x, y)| x - y).collect()
    }).collect()).unwrap();
    let a = frame_spectra(&clean, &sched, &cfg).unwrap();
    let b = frame_spectra(&noisy, &sched, &cfg).unwrap();
    let c = frame_spectra(&only, &sched, &cfg).unwrap();
    for ((fa, fb), fc) in a[0].iter().zip(&b[0]).zip(&c[0]) {
        let ratio = fc.magnitude / fa.magnitude;
        assert!(ratio < 1.0);
        let (bound, _) = crate::signal::interference_error_bound(ratio, 40e3, &Medium::default()).unwrap();
        assert!(wrap_phase(fa.wrapped_phase - fb.wrapped_phase).abs() <= bound + 1e-12);
    }
}

#[test]
fn phase_csv_layout() {
    let sched = build_hop_schedule(7e3, 40e3, 2e3, 3e-3, 0.012).unwrap();
    let cap = tone_capture(400, 0.0);
    let track = demodulate(&cap, &sched, &Medium::default(), &DemodConfig::default()).unwrap();
    let mut buf = Vec::new();
    write_phase_csv(&track, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "frame_index,mic_id,wrapped_phase,unwrapped_phase,distance_change"
    );
    assert_eq!(lines.count(), 4 * 7);
}

#[test]
fn speed_limits_of_round_robin_streams() {
    let sched = build_hop_schedule(7e3, 40e3, 2e3, 3e-3, 0.03).unwrap();
    let (classic, aided) = stream_speed_limits(&sched, &Medium::default()).unwrap();
    assert!((classic - 343.0 / (2.0 * 42e3 * 6e-3)).abs() < 1e-9);
    assert!((aided - 2.0 * classic).abs() < 1e-12);
}

