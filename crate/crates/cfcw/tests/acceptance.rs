//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the verdicts always print. The
//! process fails when a criterion fails that is not listed in
//! `KNOWN_GAPS`, or when a known gap unexpectedly passes (so the list
//! stays honest). Pick criteria with `CFCW_ACCEPT=2,7`.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::{num_complex::Complex64, FftPlanner};

use cfcw::demod::{demodulate, unwrap_phase, UnwrapConfig};
use cfcw::experiment::{effective_demod, run_pipeline, simulate, write_bundle, Bundle, ExperimentConfig};
use cfcw::handwriting::{drop_z, PenTrace};
use cfcw::localize::multilaterate;
use cfcw::sim::{ArrayGeometry, Point3};
use cfcw::startpoint::{
    brute_force_start_point, joint_objective, solve_start_point, PhaseDifferenceSet, WrapVector, Workspace,
};
use cfcw::word::PlanePose;

/// Criteria expected to fail, with the reason printed next to them.
const KNOWN_GAPS: &[(u32, &str)] = &[(
    11,
    "abrupt 3 ms hops splatter the 7 kHz line; a hopped capture leaks about -10 dB, only a fixed pair reaches -30 dB",
)];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn cfg(text: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml(text).unwrap_or_else(|e| panic!("{e}\n{text}"))
}

fn bundled(name: &str) -> ExperimentConfig {
    ExperimentConfig::load(repo().join("configs").join(name)).unwrap()
}

fn with_seed(mut c: ExperimentConfig, seed: u64) -> ExperimentConfig {
    c.seed = seed;
    c
}

fn median(v: &[f64]) -> f64 {
    let mut s: Vec<f64> = v.iter().copied().filter(|x| x.is_finite()).collect();
    assert!(!s.is_empty(), "median of nothing");
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn run(c: &ExperimentConfig) -> Bundle {
    run_pipeline(c).unwrap_or_else(|e| panic!("{}: {e}", c.name))
}

/// Errors of all seeds pooled, in parallel.
fn pooled(seeds: std::ops::Range<u64>, make: impl Fn(u64) -> ExperimentConfig + Sync, pick: fn(&Bundle) -> &[f64]) -> Vec<f64> {
    seeds
        .into_par_iter()
        .map(|s| pick(&run(&make(s))).to_vec())
        .collect::<Vec<_>>()
        .concat()
}

fn radial(seed: u64, schedule: &str, noise: Option<f64>, use_truth: bool) -> ExperimentConfig {
    let noise = noise.map_or(String::new(), |n| format!("[noise]\nself_noise_snr_db = {n}\n"));
    cfg(&format!(
        r#"
name = "radial"
seed = {seed}
duration = 0.15
recover_ink = false
[coexistence]
enabled = false
[schedule]
{schedule}
[startpoint]
use_truth = {use_truth}
{noise}
[motion]
kind = "radial"
start = [0.04, 0.06, 0.2]
amplitude = 0.005
t0 = 0.03
t1 = 0.12
"#
    ))
}

// 1. A 45/38 kHz pair lands at 7 kHz after the square law.
fn c1() -> Verdict {
    let t = Instant::now();
    let c = cfg(r#"
name = "down-conversion"
duration = 0.25
[schedule]
kind = "fixed"
base_primary = 45000.0
[motion]
kind = "stationary"
position = [0.05, 0.05, 0.2]
"#);
    let (cap, ..) = simulate(&c).unwrap();
    let x = &cap.channels[0];
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex64> = x
        .iter()
        .enumerate()
        .map(|(i, v)| Complex64::new((v - mean) * (0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()), 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let peak = (1..n / 2).max_by(|&a, &b| buf[a].norm().total_cmp(&buf[b].norm())).unwrap();
    let bin = cap.sample_rate / n as f64;
    let f = peak as f64 * bin;
    let secs = t.elapsed().as_secs_f64();
    verdict(
        (f - 7000.0).abs() <= bin && secs < 5.0,
        format!("peak {f:.1} Hz (bin {bin:.1} Hz), {secs:.1} s"),
    )
}

// 2. Ranging a 5 mm radial move, clean and with 40 dB noise.
fn c2() -> Verdict {
    let t = Instant::now();
    let clean = median(&pooled(0..20, |s| radial(s, "", None, false), |b| &b.ranging_errors));
    let noisy = median(&pooled(0..20, |s| radial(s, "", Some(40.0), false), |b| &b.ranging_errors));
    let secs = t.elapsed().as_secs_f64();
    verdict(
        clean <= 10e-6 && noisy <= 2.0 * 160e-6 && secs < 60.0,
        format!(
            "median {:.2} um clean (<= 10), {:.2} um at 40 dB (<= 320), {secs:.0} s",
            clean * 1e6,
            noisy * 1e6
        ),
    )
}

// 3. Higher primaries range more precisely.
fn c3() -> Verdict {
    let freqs = [80e3, 60e3, 40e3, 20e3];
    let med: Vec<f64> = freqs
        .iter()
        .map(|f| {
            let sched = format!("kind = \"fixed\"\nbase_primary = {f}\nmin_primary = 15000.0");
            median(&pooled(0..20, |s| radial(s, &sched, Some(40.0), true), |b| &b.ranging_errors))
        })
        .collect();
    let ordered = med.windows(2).all(|w| w[0] <= w[1]);
    let list: Vec<String> = freqs
        .iter()
        .zip(&med)
        .map(|(f, m)| format!("{:.0} kHz {:.2} um", f / 1e3, m * 1e6))
        .collect();
    verdict(ordered, list.join(", "))
}

// 4. Hopping against a wall reflection. Both runs start from the true
// position so the comparison isolates multipath; the end-to-end numbers,
// start-point search included, are printed for context.
fn c4() -> Verdict {
    let t = Instant::now();
    let runs: Vec<f64> = [(true, "wall-behind-hop.toml"), (true, "wall-behind-no-hop.toml"), (false, "wall-behind-hop.toml"), (false, "wall-behind-no-hop.toml")]
        .par_iter()
        .map(|(truth, n)| {
            let mut c = bundled(n);
            c.startpoint.use_truth = *truth;
            median(&run(&c).tracking_errors)
        })
        .collect();
    let (hop, fixed) = (runs[0], runs[1]);
    let secs = t.elapsed().as_secs_f64();
    verdict(
        hop <= fixed / 5.0 && secs < 120.0,
        format!(
            "median 3D {:.3} mm hopped vs {:.3} mm fixed ({:.1}x, need 5x); with start-point search {:.2} vs {:.1} mm; {secs:.0} s",
            hop * 1e3,
            fixed * 1e3,
            fixed / hop,
            runs[2] * 1e3,
            runs[3] * 1e3
        ),
    )
}

/// Every wrap vector inside the bounds of `set`.
fn all_wraps(set: &PhaseDifferenceSet) -> Vec<WrapVector> {
    let bounds = set.wrap_bounds();
    let mut out = vec![Vec::new()];
    for b in bounds {
        out = out
            .into_iter()
            .flat_map(|v: Vec<i32>| {
                (-b..=b).map(move |n| {
                    let mut w = v.clone();
                    w.push(n);
                    w
                })
            })
            .collect();
    }
    out.into_iter().map(|n| WrapVector { n }).collect()
}

// 5. Start point on 4-microphone sub-arrays.
fn c5() -> Verdict {
    let mics = ArrayGeometry::standard().mics();
    let ws = Workspace::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut instances = Vec::new();
    while instances.len() < 20 {
        let p = Point3::new(rng.gen_range(-0.25..0.25), rng.gen_range(-0.25..0.25), rng.gen_range(0.1..0.4));
        if !ws.contains(&p) {
            continue;
        }
        let mut keep: Vec<usize> = (0..7).collect();
        for i in 0..4 {
            let j = rng.gen_range(i..7);
            keep.swap(i, j);
        }
        let mut keep = keep[..4].to_vec();
        keep.sort();
        instances.push((p, keep, instances.len() as u64));
    }
    let results: Vec<(bool, bool)> = instances
        .par_iter()
        .map(|(p, keep, seed)| {
            let sets: Vec<PhaseDifferenceSet> = [343.0 / 40e3, 343.0 / 42e3]
                .iter()
                .map(|&l| PhaseDifferenceSet::ideal(p, &mics, l).subset(keep).unwrap())
                .collect();
            let oracle = brute_force_start_point(&sets, &ws, 0.05).unwrap();
            let ga = solve_start_point(&sets, &ws, *seed).unwrap();
            let agree = (ga.point() - oracle.point()).norm() < 1e-3 && ga.wraps == oracle.wraps;
            // the true wraps give zero at the truth, every other wrap vector more
            let truth: Vec<WrapVector> = sets.iter().map(|s| s.best_wraps(p)).collect();
            let at_truth = joint_objective(p, &truth, &sets);
            let mut global = at_truth < 1e-20;
            for (k, s) in sets.iter().enumerate() {
                for w in all_wraps(s) {
                    if w != truth[k] {
                        let mut ws = truth.clone();
                        ws[k] = w;
                        global &= joint_objective(p, &ws, &sets) > at_truth;
                    }
                }
            }
            (agree, global)
        })
        .collect();
    let agree = results.iter().filter(|r| r.0).count();
    let global = results.iter().filter(|r| r.1).count();
    verdict(
        agree >= 19 && global == 20,
        format!("GA matches oracle on {agree}/20 (>= 19), truth is the minimum on {global}/20"),
    )
}

fn ramp(speed: f64, duration: f64, start: [f64; 3]) -> ExperimentConfig {
    cfg(&format!(
        r#"
name = "ramp"
duration = {duration}
recover_ink = false
[coexistence]
enabled = false
[schedule]
kind = "fixed"
[startpoint]
use_truth = true
[motion]
kind = "ramp"
start = {start:?}
speed = {speed}
rest = 0.03
ramp = 0.03
"#
    ))
}

// 6. Unwrapping at 2 and 3 m/s on a fixed 40 kHz pair.
fn c6() -> Verdict {
    let b = run(&ramp(2.0, 0.2, [0.0, 0.05, 0.12]));
    let m = &b.track.mics[0];
    let last = m.distance_change.len() - 1;
    let truth = b.truth[last].distances[0] - b.truth[0].distances[0];
    let aided = m.distance_change[last] - m.distance_change[0];
    let wrapped: Vec<f64> = m.frames.iter().map(|f| f.wrapped_phase).collect();
    let classic_cfg = UnwrapConfig {
        velocity_aided: false,
        ..UnwrapConfig::default()
    };
    let u = unwrap_phase(&wrapped, &classic_cfg);
    let lambda = 343.0 / 40e3;
    let classic = -(u.phase[last] - u.phase[0]) * lambda / (2.0 * PI);
    let aided_ok = (aided - truth).abs() <= 0.01 * truth.abs();
    let classic_wrong = (classic - truth).abs() >= lambda / 2.0;

    let fast = ramp(3.0, 0.1, [0.0, 0.05, 0.08]);
    let (cap, _, path, _) = simulate(&fast).unwrap();
    let track = demodulate(&cap, &fast.build_schedule().unwrap(), &fast.scene.medium, &effective_demod(&fast, &path)).unwrap();
    let flagged = track.mics.iter().all(|m| !m.reliable);
    verdict(
        aided_ok && classic_wrong && flagged,
        format!(
            "2 m/s: truth {:.2} mm, aided {:.2} mm, classic {:.2} mm; 3 m/s flagged on {}/7 mics",
            truth * 1e3,
            aided * 1e3,
            classic * 1e3,
            track.mics.iter().filter(|m| !m.reliable).count()
        ),
    )
}

// 7. Star paths at 0.5 and 1 m/s.
fn c7() -> Verdict {
    let slow = median(&pooled(0..10, |s| with_seed(bundled("star-0.5.toml"), s), |b| &b.tracking_errors));
    let fast = median(&pooled(0..10, |s| with_seed(bundled("star-1.0.toml"), s), |b| &b.tracking_errors));
    verdict(
        slow <= 1.4e-3 * 1.5 && fast <= 2.6e-3 * 1.5,
        format!(
            "median 3D {:.3} mm at 0.5 m/s (<= 2.1), {:.3} mm at 1 m/s (<= 3.9)",
            slow * 1e3,
            fast * 1e3
        ),
    )
}

// 8. Position error from +-50 um distance noise.
fn c8() -> Verdict {
    let mics = ArrayGeometry::standard().mics();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut errs = Vec::with_capacity(1000);
    for _ in 0..1000 {
        let p = Point3::new(rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2), rng.gen_range(0.1..0.3));
        let d: Vec<Option<f64>> = mics.iter().map(|m| Some((p - m).norm() + rng.gen_range(-50e-6..50e-6))).collect();
        let (est, _) = multilaterate(&d, &mics, &p).unwrap();
        errs.push((est - p).norm());
    }
    let m = median(&errs);
    verdict(m <= 1.4e-3, format!("median {:.3} mm over 1000 trials (<= 1.4)", m * 1e3))
}

const CORPUS: [&str; 50] = [
    "fit", "hit", "tin", "lit", "sit", "mint", "tint", "fin", "fist", "this", "list", "mist", "lift", "silt", "tilt",
    "into", "iron", "unit", "union", "tonic", "ionic", "stoic", "often", "fits", "mice", "nice", "rice", "slice",
    "since", "sonic", "toil", "coil", "foil", "soil", "suit", "fruit", "limit", "mimic", "cite", "site", "mite",
    "rite", "lint", "hint", "inch", "chin", "thin", "tic", "fuse", "home",
];

fn word(template: &str, pose: PlanePose, size: f64, seed: u64, extra: &str) -> ExperimentConfig {
    let pose = pose_name(pose);
    cfg(&format!(
        r#"
name = "word-{template}"
seed = {seed}
[coexistence]
enabled = false
[noise]
self_noise_snr_db = 40
[motion]
kind = "word"
[motion.spec]
template = "{template}"
size = {size}
pose = "{pose}"
{extra}
"#
    ))
}

fn pose_name(p: PlanePose) -> &'static str {
    match p {
        PlanePose::FlatTop => "flat-top",
        PlanePose::FlatBeside => "flat-beside",
        PlanePose::SlantBeside => "slant-beside",
        PlanePose::VerticalTop => "vertical-top",
    }
}

// 9. Pen-lift removal over a 50-word corpus.
fn c9() -> Verdict {
    let t = Instant::now();
    let stats: Vec<Result<(f64, usize, f64, usize), String>> = CORPUS
        .par_iter()
        .enumerate()
        .map(|(i, w)| {
            let pose = PlanePose::ALL[i % 4];
            let size = 0.06 + 0.02 * (i % 5) as f64;
            let c = word(w, pose, size, i as u64, "");
            let b = run_pipeline(&c).map_err(|e| format!("{w}: {e}"))?;
            let p = b.report.pen_lift.ok_or_else(|| format!("{w}: no pen-lift stats"))?;
            Ok((p.lift_removed, p.lift_samples, p.stroke_removed, p.stroke_samples))
        })
        .collect();
    let errors: Vec<&String> = stats.iter().filter_map(|r| r.as_ref().err()).collect();
    let ok: Vec<_> = stats.iter().filter_map(|r| r.as_ref().ok()).collect();
    let lifts: Vec<f64> = ok.iter().filter(|s| s.1 > 0).map(|s| s.0).collect();
    let (rm, total) = ok
        .iter()
        .fold((0.0, 0usize), |(r, n), s| (r + s.2 * s.3 as f64, n + s.3));
    let stroke = rm / total.max(1) as f64;
    let lift = if lifts.is_empty() { 0.0 } else { median(&lifts) };
    let mut detail = format!(
        "median lift removal {:.1}% over {} words with lifts (>= 90), stroke removal {:.2}% (<= 2), {} failed runs, {:.0} s",
        100.0 * lift,
        lifts.len(),
        100.0 * stroke,
        errors.len(),
        t.elapsed().as_secs_f64()
    );
    for e in &errors {
        detail.push_str(&format!("\n      {e}"));
    }
    verdict(errors.is_empty() && lift >= 0.9 && stroke <= 0.02, detail)
}

// 10. Flattening a cylinder and a 45 degree slant.
fn c10() -> Verdict {
    let cyl = run(&bundled("word-cylinder.toml"));
    let slant = run(&word("fit", PlanePose::SlantBeside, 0.10, 10, ""));
    let stress = |b: &Bundle| b.report.flattening_stress.unwrap_or(f64::INFINITY);
    let w = slant.word.as_ref().unwrap();
    let rec = slant.ink.as_ref().unwrap();
    let trace = PenTrace::from(&slant.trajectory);
    let (_, _, ey, _) = w.frame();
    let ids: Vec<usize> = rec.strokes.iter().flatten().copied().collect();
    let extent = |v: Vec<f64>| {
        v.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - v.iter().cloned().fold(f64::INFINITY, f64::min)
    };
    let height = extent(ids.iter().map(|&k| w.position(trace.timestamps[k]).dot(&ey)).collect());
    // the page's up axis seen from above
    let up = nalgebra::Vector2::new(ey.x, ey.y).normalize();
    let flat = drop_z(&trace, &rec.strokes);
    let naive = extent(flat.strokes.iter().flatten().map(|p| p[0] * up.x + p[1] * up.y).collect());
    let naive_dist = 1.0 - naive / height;
    let iso_dist = (rec.ink.height() - height).abs() / height;
    let (sc, ss) = (stress(&cyl), stress(&slant));
    verdict(
        sc <= 0.02 && ss <= 0.02 && naive_dist >= 0.25 && iso_dist <= 0.02,
        format!(
            "stress {sc:.2e} cylinder, {ss:.2e} slant (<= 0.02); 45 deg height: drop-z off by {:.1}% (>= 25), isomap by {:.2}% (<= 2)",
            100.0 * naive_dist,
            100.0 * iso_dist
        ),
    )
}

// 11. Coexistence with 70 dB voice.
fn c11() -> Verdict {
    let hopped = bundled("coexistence-voice-70db.toml");
    let mut fixed = hopped.clone();
    fixed.schedule.kind = cfcw::experiment::ScheduleKind::Fixed;
    fixed.startpoint.use_truth = true;
    let [h, f]: [cfcw::coexistence::BandReport; 2] = [hopped, fixed]
        .par_iter()
        .map(|c| run(c).report.band.unwrap())
        .collect::<Vec<_>>()
        .try_into()
        .unwrap();
    let delta = h.voice_band_delta.unwrap();
    verdict(
        delta.abs() < 1.0 && h.leakage_ratio <= -30.0,
        format!(
            "voice delta {delta:.3} dB (< 1), leakage {:.1} dB (<= -30); fixed pair for comparison: delta {:.3} dB, leakage {:.1} dB",
            h.leakage_ratio,
            f.voice_band_delta.unwrap(),
            f.leakage_ratio
        ),
    )
}

// 12. Bundled configs re-run bit for bit.
fn c12() -> Verdict {
    let mut files: Vec<PathBuf> = std::fs::read_dir(repo().join("configs"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    files.sort();
    let diffs: Vec<String> = files
        .par_iter()
        .flat_map(|f| {
            let c = ExperimentConfig::load(f).unwrap();
            let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
            for d in &dirs {
                write_bundle(&run(&c), d.path()).unwrap();
            }
            let mut bad = Vec::new();
            for e in std::fs::read_dir(dirs[0].path()).unwrap() {
                let name = e.unwrap().file_name();
                if !name.to_string_lossy().ends_with(".csv") {
                    continue;
                }
                let a = std::fs::read(dirs[0].path().join(&name)).unwrap();
                let b = std::fs::read(dirs[1].path().join(&name)).unwrap_or_default();
                if a != b {
                    bad.push(format!("{}:{}", c.name, name.to_string_lossy()));
                }
            }
            bad
        })
        .collect();
    verdict(
        diffs.is_empty(),
        format!("{} configs, differing files: {:?}", files.len(), diffs),
    )
}

fn main() {
    let wanted: Option<BTreeSet<u32>> = std::env::var("CFCW_ACCEPT")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let criteria: [(u32, &str, fn() -> Verdict); 12] = [
        (1, "nonlinear down-conversion", c1),
        (2, "clean and noisy ranging", c2),
        (3, "frequency ordering", c3),
        (4, "hopping multipath rejection", c4),
        (5, "start point against brute force", c5),
        (6, "unwrapping speed ceiling", c6),
        (7, "3D tracking", c7),
        (8, "multilateration noise model", c8),
        (9, "pen-lift removal", c9),
        (10, "flattening", c10),
        (11, "coexistence", c11),
        (12, "determinism", c12),
    ];
    let mut unexpected = Vec::new();
    for (id, name, f) in criteria {
        if wanted.as_ref().is_some_and(|w| !w.contains(&id)) {
            continue;
        }
        let t = Instant::now();
        let v = f();
        let gap = KNOWN_GAPS.iter().find(|g| g.0 == id);
        let tag = match (v.pass, gap) {
            (true, None) => "PASS",
            (false, Some(_)) => "FAIL (known)",
            (false, None) => "FAIL",
            (true, Some(_)) => "PASS (listed as a known gap)",
        };
        println!("criterion {id:>2} {tag}: {name}: {} [{:.1} s]", v.detail, t.elapsed().as_secs_f64());
        if let (false, Some(g)) = (v.pass, gap) {
            println!("      known gap: {}", g.1);
        }
        if v.pass == gap.is_some() {
            unexpected.push(id);
        }
    }
    if !unexpected.is_empty() {
        println!("unexpected outcome for criteria {unexpected:?}");
        std::process::exit(1);
    }
}
