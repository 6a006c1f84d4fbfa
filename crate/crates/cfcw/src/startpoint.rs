//! Absolute start position from one snapshot of pairwise phase differences.
//!
//! The phase difference of a microphone pair is the range difference modulo
//! one wavelength. The wrap integers and the position are unknown together,
//! which makes the fit mixed-integer and non-convex. A genetic algorithm
//! with a local polish solves it; a brute-force enumeration over small
//! arrays serves as the oracle.
//!
//! One wavelength on its own is not enough for small sub-arrays: four
//! microphones 3.6 cm apart admit dozens of exact replica solutions in the
//! workspace. Every solver here therefore accepts several difference sets,
//! one per hop primary, and fits them jointly.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::demod::{FrameCoefficient, PhaseTrack};
use crate::error::{Error, Result};
use crate::signal::{wrap_phase, Medium};
use crate::sim::{ArrayGeometry, Point3, MAX_RANGE};
use crate::tx::{ToneSchedule, ToneSlot};

/// Fewest usable pairs for a fix.
pub const MIN_PAIRS: usize = 6;

/// Convergence threshold on the mean squared per-pair misfit in units of
/// λ², i.e. a typical misfit of λ/20.
pub const CONVERGENCE_THRESHOLD: f64 = 1.0 / 400.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePair {
    pub i: usize,
    pub j: usize,
    /// Wrapped phase of `i` minus that of `j`; positive when `i` is further.
    pub theta: f64,
}

/// Phase differences captured at one primary frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseDifferenceSet {
    pub pairs: Vec<PhasePair>,
    pub wavelength: f64,
    /// Microphone positions the pair indices refer to.
    pub mics: Vec<Point3>,
}

impl PhaseDifferenceSet {
    pub fn new(pairs: Vec<PhasePair>, wavelength: f64, mics: Vec<Point3>) -> Result<Self> {
        let s = PhaseDifferenceSet {
            pairs,
            wavelength,
            mics,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.wavelength.is_finite() && self.wavelength > 0.0) {
            return Err(Error::arg("wavelength must be positive"));
        }
        for p in &self.pairs {
            if p.i == p.j || p.i >= self.mics.len() || p.j >= self.mics.len() {
                return Err(Error::arg(format!("bad microphone pair ({}, {})", p.i, p.j)));
            }
            if !(-PI..=PI).contains(&p.theta) {
                return Err(Error::arg(format!("theta {} is not wrapped", p.theta)));
            }
        }
        Ok(())
    }

    /// Noiseless differences for a beacon at `p`, every pair `i < j`.
    pub fn ideal(p: &Point3, mics: &[Point3], wavelength: f64) -> Self {
        let mut pairs = Vec::new();
        for i in 0..mics.len() {
            for j in i + 1..mics.len() {
                let dd = (p - mics[i]).norm() - (p - mics[j]).norm();
                pairs.push(PhasePair {
                    i,
                    j,
                    theta: wrap_phase(2.0 * PI * dd / wavelength),
                });
            }
        }
        PhaseDifferenceSet {
            pairs,
            wavelength,
            mics: mics.to_vec(),
        }
    }

    /// Restricts the set to the microphones in `keep`, renumbered in order.
    pub fn subset(&self, keep: &[usize]) -> Result<Self> {
        let idx = |m: usize| keep.iter().position(|&k| k == m);
        let pairs = self
            .pairs
            .iter()
            .filter_map(|p| {
                Some(PhasePair {
                    i: idx(p.i)?,
                    j: idx(p.j)?,
                    theta: p.theta,
                })
            })
            .collect();
        let mics = keep
            .iter()
            .map(|&k| self.mics.get(k).copied().ok_or_else(|| Error::arg("microphone out of range")))
            .collect::<Result<Vec<_>>>()?;
        PhaseDifferenceSet::new(pairs, self.wavelength, mics)
    }

    /// Largest useful wrap count per pair: `floor(d/λ + 1/2)`. Any range
    /// difference allowed by the baseline rounds inside it.
    pub fn wrap_bounds(&self) -> Vec<i32> {
        self.pairs
            .iter()
            .map(|p| ((self.mics[p.i] - self.mics[p.j]).norm() / self.wavelength + 0.5).floor() as i32)
            .collect()
    }

    fn range_difference(&self, p: &Point3, k: usize) -> f64 {
        let pr = &self.pairs[k];
        (p - self.mics[pr.i]).norm() - (p - self.mics[pr.j]).norm()
    }

    /// Measured range difference of pair `k` under wrap count `n`.
    fn measured(&self, k: usize, n: i32) -> f64 {
        self.wavelength * (n as f64 + self.pairs[k].theta / (2.0 * PI))
    }

    /// Wrap counts that best explain the phases at `p`, clamped to bounds.
    pub fn best_wraps(&self, p: &Point3) -> WrapVector {
        let bounds = self.wrap_bounds();
        WrapVector {
            n: (0..self.pairs.len())
                .map(|k| {
                    let n = (self.range_difference(p, k) / self.wavelength - self.pairs[k].theta / (2.0 * PI)).round()
                        as i32;
                    n.clamp(-bounds[k], bounds[k])
                })
                .collect(),
        }
    }
}

/// Integer wrap count per pair, in the order of the set's pairs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WrapVector {
    pub n: Vec<i32>,
}

impl WrapVector {
    pub fn within(&self, bounds: &[i32]) -> bool {
        self.n.len() == bounds.len() && self.n.iter().zip(bounds).all(|(n, b)| n.abs() <= *b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartFix {
    pub position: [f64; 3],
    /// One wrap vector per difference set.
    pub wraps: Vec<WrapVector>,
    /// Objective value, m².
    pub residual: f64,
    /// Mean squared misfit per pair in units of λ².
    pub normalized_residual: f64,
    pub converged: bool,
    /// Set by the oracle when distinct positions fit equally well.
    pub ambiguous: bool,
}

impl StartFix {
    pub fn point(&self) -> Point3 {
        Point3::from(self.position)
    }
}

/// Region searched for the start point: the half-space above the array
/// within `max_range` of its centre.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Workspace {
    pub origin: [f64; 3],
    pub up: [f64; 3],
    pub max_range: f64,
    pub min_range: f64,
    /// Smallest height above the array plane.
    pub min_height: f64,
}

impl Default for Workspace {
    fn default() -> Self {
        Workspace {
            origin: [0.0; 3],
            up: [0.0, 0.0, 1.0],
            max_range: MAX_RANGE,
            min_range: 0.02,
            min_height: 0.0,
        }
    }
}

impl Workspace {
    pub fn for_geometry(g: &ArrayGeometry) -> Self {
        let c = g.centroid();
        Workspace {
            origin: [c.x, c.y, c.z],
            up: g.up_axis,
            ..Workspace::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let up = Point3::from(self.up);
        if (up.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::arg("workspace up axis must be a unit vector"));
        }
        if !(self.min_range >= 0.0 && self.max_range > self.min_range && self.min_height >= 0.0) {
            return Err(Error::arg("workspace needs 0 <= min_range < max_range and min_height >= 0"));
        }
        if self.min_height >= self.max_range {
            return Err(Error::arg("workspace minimum height exceeds its range"));
        }
        Ok(())
    }

    pub fn contains(&self, p: &Point3) -> bool {
        let o = Point3::from(self.origin);
        let r = (p - o).norm();
        (p - o).dot(&Point3::from(self.up)) >= self.min_height - 1e-12
            && r <= self.max_range + 1e-12
            && r >= self.min_range - 1e-12
    }

    /// Nearest point of the workspace, roughly: mirror below-plane points,
    /// then clamp height and range.
    pub fn project(&self, p: &Point3) -> Point3 {
        let o = Point3::from(self.origin);
        let up = Point3::from(self.up);
        let mut v = p - o;
        let h = v.dot(&up);
        if h < self.min_height {
            v += up * (self.min_height.max(-h) - h);
        }
        let r = v.norm();
        if r > self.max_range {
            v *= self.max_range / r;
        } else if r < self.min_range {
            v = if r > 0.0 { v * (self.min_range / r) } else { up * self.min_range };
        }
        o + v
    }

    /// Uniform sample of the workspace.
    fn sample(&self, rng: &mut ChaCha8Rng) -> Point3 {
        let o = Point3::from(self.origin);
        loop {
            let v = Point3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ) * self.max_range;
            let p = o + v;
            if self.contains(&p) {
                return p;
            }
        }
    }

    /// Regular grid over the workspace with spacing `step`.
    pub fn grid(&self, step: f64) -> Vec<Point3> {
        let o = Point3::from(self.origin);
        let m = (self.max_range / step).floor() as i64;
        let mut out = Vec::new();
        for a in -m..=m {
            for b in -m..=m {
                for c in -m..=m {
                    let p = o + Point3::new(a as f64, b as f64, c as f64) * step;
                    if self.contains(&p) {
                        out.push(p);
                    }
                }
            }
        }
        out
    }
}

/// Phase of each microphone with the secondary path removed, so that only
/// the beacon range remains: `2π d_i / λ` up to a common constant.
fn corrected_phase(f: &FrameCoefficient, slot: &ToneSlot, mic: &Point3, secondary: &Point3, medium: &Medium) -> f64 {
    let ds = (mic - secondary).norm();
    -f.wrapped_phase + 2.0 * PI * slot.secondary * ds / medium.speed_of_sound
}

/// Pairwise differences from one frame of every microphone. Low-SNR frames
/// drop out of every pair they touch.
pub fn pairwise_phase_differences(
    frames: &[FrameCoefficient],
    slot: &ToneSlot,
    geometry: &ArrayGeometry,
    medium: &Medium,
) -> Result<PhaseDifferenceSet> {
    medium.validate()?;
    let mics = geometry.mics();
    if frames.len() != mics.len() {
        return Err(Error::arg(format!(
            "{} frames for {} microphones",
            frames.len(),
            mics.len()
        )));
    }
    let sec = geometry.secondary();
    let phase: Vec<Option<f64>> = frames
        .iter()
        .zip(&mics)
        .map(|(f, m)| (!f.low_snr).then(|| corrected_phase(f, slot, m, &sec, medium)))
        .collect();
    let mut pairs = Vec::new();
    for i in 0..mics.len() {
        for j in i + 1..mics.len() {
            if let (Some(a), Some(b)) = (phase[i], phase[j]) {
                pairs.push(PhasePair {
                    i,
                    j,
                    theta: wrap_phase(a - b),
                });
            }
        }
    }
    if pairs.len() < MIN_PAIRS {
        return Err(Error::InsufficientData(format!(
            "{} usable microphone pairs, need {MIN_PAIRS}",
            pairs.len()
        )));
    }
    PhaseDifferenceSet::new(pairs, medium.wavelength(slot.primary), mics)
}

/// Phase snapshot used to seed tracking.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    /// Frame the fix refers to (the first frame of the snapshot).
    pub frame: usize,
    pub sets: Vec<PhaseDifferenceSet>,
}

/// Takes the first frame at which every microphone is above the noise
/// floor, plus the following frames until each distinct tone pair has been
/// seen once. The beacon is assumed still over those few milliseconds.
pub fn snapshot(
    track: &PhaseTrack,
    schedule: &ToneSchedule,
    geometry: &ArrayGeometry,
    medium: &Medium,
) -> Result<Snapshot> {
    let n = track.frame_count();
    let ok = |k: usize| track.mics.iter().all(|m| !m.frames[k].low_snr);
    let first = (0..n)
        .find(|&k| ok(k))
        .ok_or_else(|| Error::InsufficientData("no frame with every microphone above the noise floor".into()))?;
    let pairs = schedule.distinct_pairs();
    let mut sets = Vec::new();
    let mut seen = Vec::new();
    for k in first..n {
        if seen.len() == pairs.len() {
            break;
        }
        let slot = schedule.slots[k];
        if seen.contains(&slot) {
            continue;
        }
        seen.push(slot);
        let frames: Vec<FrameCoefficient> = track.mics.iter().map(|m| m.frames[k]).collect();
        sets.push(pairwise_phase_differences(&frames, &slot, geometry, medium)?);
    }
    Ok(Snapshot { frame: first, sets })
}

/// Sum of squared misfits between the wrapped measurements and the range
/// differences implied by `p`, metres².
pub fn tdoa_objective(p: &Point3, wraps: &WrapVector, set: &PhaseDifferenceSet) -> f64 {
    (0..set.pairs.len())
        .map(|k| {
            let e = set.measured(k, wraps.n[k]) - set.range_difference(p, k);
            e * e
        })
        .sum()
}

/// Objective summed over several difference sets.
pub fn joint_objective(p: &Point3, wraps: &[WrapVector], sets: &[PhaseDifferenceSet]) -> f64 {
    sets.iter().zip(wraps).map(|(s, w)| tdoa_objective(p, w, s)).sum()
}

/// Mean squared misfit per pair in units of each set's λ².
pub fn normalized_residual(p: &Point3, wraps: &[WrapVector], sets: &[PhaseDifferenceSet]) -> f64 {
    let count: usize = sets.iter().map(|s| s.pairs.len()).sum();
    let s: f64 = sets
        .iter()
        .zip(wraps)
        .map(|(s, w)| tdoa_objective(p, w, s) / (s.wavelength * s.wavelength))
        .sum();
    s / count.max(1) as f64
}

fn check_sets(sets: &[PhaseDifferenceSet]) -> Result<()> {
    if sets.is_empty() {
        return Err(Error::arg("no phase difference sets"));
    }
    for s in sets {
        s.validate()?;
    }
    let count: usize = sets.iter().map(|s| s.pairs.len()).sum();
    if count < MIN_PAIRS {
        return Err(Error::InsufficientData(format!("{count} pairs, need {MIN_PAIRS}")));
    }
    Ok(())
}

/// Which wrap counts a local refinement may change.
#[derive(Clone, Copy)]
enum Wraps<'a> {
    /// Re-round every count at each iterate.
    Free,
    /// Keep the given counts of the first set's listed pairs fixed.
    Pinned(&'a [(usize, i32)]),
}

fn round_wraps(p: &Point3, sets: &[PhaseDifferenceSet], mode: Wraps) -> Vec<WrapVector> {
    let mut w: Vec<WrapVector> = sets.iter().map(|s| s.best_wraps(p)).collect();
    if let Wraps::Pinned(pins) = mode {
        for &(k, n) in pins {
            w[0].n[k] = n;
        }
    }
    w
}

/// Levenberg-Marquardt on the position. Wrap counts are re-rounded after
/// every accepted step (apart from pinned ones).
fn refine(
    start: &Point3,
    sets: &[PhaseDifferenceSet],
    ws: &Workspace,
    mode: Wraps,
    fixed: Option<Vec<WrapVector>>,
    iterations: usize,
) -> (Point3, Vec<WrapVector>, f64) {
    let mut p = ws.project(start);
    let mut wraps = fixed.clone().unwrap_or_else(|| round_wraps(&p, sets, mode));
    let mut cost = joint_objective(&p, &wraps, sets);
    let mut mu = 1e-3;
    for _ in 0..iterations {
        let mut jtj = nalgebra::Matrix3::<f64>::zeros();
        let mut jtr = Point3::zeros();
        for (s, w) in sets.iter().zip(&wraps) {
            for (k, pr) in s.pairs.iter().enumerate() {
                let (a, b) = (p - s.mics[pr.i], p - s.mics[pr.j]);
                let r = s.measured(k, w.n[k]) - (a.norm() - b.norm());
                let g = -(a / a.norm() - b / b.norm());
                jtj += g * g.transpose();
                jtr += g * r;
            }
        }
        let mut improved = false;
        for _ in 0..8 {
            let mut m = jtj;
            for d in 0..3 {
                m[(d, d)] += mu * (jtj[(d, d)] + 1e-12);
            }
            let Some(step) = m.cholesky().map(|c| c.solve(&(-jtr))) else {
                mu *= 10.0;
                continue;
            };
            let q = ws.project(&(p + step));
            let w = match &fixed {
                Some(f) => f.clone(),
                None => round_wraps(&q, sets, mode),
            };
            let c = joint_objective(&q, &w, sets);
            if c < cost {
                let moved = (q - p).norm();
                p = q;
                wraps = w;
                cost = c;
                mu = (mu * 0.3).max(1e-9);
                improved = moved > 1e-9;
                break;
            }
            mu *= 10.0;
        }
        if !improved {
            break;
        }
    }
    (p, wraps, cost)
}

fn make_fix(p: Point3, wraps: Vec<WrapVector>, sets: &[PhaseDifferenceSet], threshold: f64) -> StartFix {
    let residual = joint_objective(&p, &wraps, sets);
    let normalized = normalized_residual(&p, &wraps, sets);
    StartFix {
        position: [p.x, p.y, p.z],
        wraps,
        residual,
        normalized_residual: normalized,
        converged: normalized < threshold,
        ambiguous: false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GaConfig {
    pub population: usize,
    pub generations: usize,
    pub tournament: usize,
    /// Per-gene probability of resetting a wrap count.
    pub mutation_rate: f64,
    pub elitism: usize,
    /// Stop once converged and the best has not improved for this many
    /// generations.
    pub stall_generations: usize,
    /// Local polish iterations per evaluation.
    pub polish_iterations: usize,
    /// Share of each generation replaced by fresh random individuals.
    pub immigrant_fraction: f64,
    pub threshold: f64,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            population: 200,
            generations: 500,
            tournament: 3,
            mutation_rate: 0.05,
            elitism: 2,
            stall_generations: 25,
            polish_iterations: 10,
            immigrant_fraction: 0.1,
            threshold: CONVERGENCE_THRESHOLD,
        }
    }
}

#[derive(Clone)]
struct Individual {
    p: Point3,
    wraps: Vec<WrapVector>,
    fitness: f64,
}

/// Genetic search over position and wrap counts with the default settings.
pub fn solve_start_point(sets: &[PhaseDifferenceSet], ws: &Workspace, seed: u64) -> Result<StartFix> {
    solve_start_point_with(sets, ws, &GaConfig::default(), seed)
}

/// Genetic search over position and wrap counts.
///
/// Each evaluation first polishes the position with the genome's wrap
/// counts, then re-rounds the counts and polishes again, and writes the
/// result back into the genome.
pub fn solve_start_point_with(
    sets: &[PhaseDifferenceSet],
    ws: &Workspace,
    cfg: &GaConfig,
    seed: u64,
) -> Result<StartFix> {
    check_sets(sets)?;
    ws.validate()?;
    if cfg.population < 2 || cfg.tournament == 0 || cfg.elitism >= cfg.population {
        return Err(Error::config("GA needs population >= 2, tournament >= 1, elitism < population"));
    }
    let bounds: Vec<Vec<i32>> = sets.iter().map(|s| s.wrap_bounds()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let evaluate = |ind: &mut Individual| {
        // polish under the genome's wrap counts, then under rounded ones;
        // also polish straight from the rounded counts and keep the better
        let (q, _, _) = refine(&ind.p, sets, ws, Wraps::Free, Some(ind.wraps.clone()), cfg.polish_iterations);
        let a = refine(&q, sets, ws, Wraps::Free, None, cfg.polish_iterations);
        let b = refine(&ind.p, sets, ws, Wraps::Free, None, cfg.polish_iterations);
        let (p, w, _) = if b.2 < a.2 { b } else { a };
        ind.fitness = normalized_residual(&p, &w, sets);
        ind.p = p;
        ind.wraps = w;
    };
    let random = |rng: &mut ChaCha8Rng| {
        let p = ws.sample(rng);
        let wraps = bounds
            .iter()
            .map(|b| WrapVector {
                n: b.iter().map(|&m| rng.gen_range(-m..=m)).collect(),
            })
            .collect();
        Individual {
            p,
            wraps,
            fitness: f64::INFINITY,
        }
    };
    let immigrants = ((cfg.population - cfg.elitism) as f64 * cfg.immigrant_fraction).round() as usize;
    let mut pop: Vec<Individual> = (0..cfg.population).map(|_| random(&mut rng)).collect();
    pop.par_iter_mut().for_each(evaluate);
    let by_fitness = |a: &Individual, b: &Individual| a.fitness.total_cmp(&b.fitness);
    pop.sort_by(by_fitness);
    let mut best = pop[0].fitness;
    let mut stall = 0;
    for _ in 0..cfg.generations {
        let mut next: Vec<Individual> = pop[..cfg.elitism].to_vec();
        let mut children: Vec<Individual> = (0..immigrants).map(|_| random(&mut rng)).collect();
        while next.len() + children.len() < cfg.population {
            let a = tournament(&pop, cfg.tournament, &mut rng);
            let b = tournament(&pop, cfg.tournament, &mut rng);
            // BLX-0.5 on each coordinate
            let mut p = Point3::zeros();
            for d in 0..3 {
                let (lo, hi) = (a.p[d].min(b.p[d]), a.p[d].max(b.p[d]));
                let ext = 0.5 * (hi - lo);
                p[d] = rng.gen_range(lo - ext..=hi + ext + 1e-12);
            }
            let wraps = a
                .wraps
                .iter()
                .zip(&b.wraps)
                .zip(&bounds)
                .map(|((wa, wb), bd)| WrapVector {
                    n: wa
                        .n
                        .iter()
                        .zip(&wb.n)
                        .zip(bd)
                        .map(|((&x, &y), &m)| {
                            if rng.gen_bool(cfg.mutation_rate) {
                                rng.gen_range(-m..=m)
                            } else if rng.gen_bool(0.5) {
                                x
                            } else {
                                y
                            }
                        })
                        .collect(),
                })
                .collect();
            children.push(Individual {
                p: ws.project(&p),
                wraps,
                fitness: f64::INFINITY,
            });
        }
        children.par_iter_mut().for_each(evaluate);
        next.extend(children);
        next.sort_by(by_fitness);
        pop = next;
        if pop[0].fitness < best * (1.0 - 1e-9) {
            best = pop[0].fitness;
            stall = 0;
        } else {
            stall += 1;
        }
        if best < cfg.threshold && stall >= cfg.stall_generations {
            break;
        }
    }
    let top = &pop[0];
    Ok(make_fix(top.p, top.wraps.clone(), sets, cfg.threshold))
}

fn tournament<'a>(pop: &'a [Individual], k: usize, rng: &mut ChaCha8Rng) -> &'a Individual {
    let mut best = &pop[rng.gen_range(0..pop.len())];
    for _ in 1..k {
        let c = &pop[rng.gen_range(0..pop.len())];
        if c.fitness < best.fitness {
            best = c;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BruteForceConfig {
    pub grid_step: f64,
    /// Ceiling on wrap combinations × grid points.
    pub budget: u64,
    /// Best grid points refined per wrap combination.
    pub starts: usize,
    /// Positions further apart than this count as distinct minima.
    pub distinct_distance: f64,
    /// A distinct minimum within this much normalized residual of the best
    /// makes the fix ambiguous. Replicas on a four-microphone array can sit
    /// below the convergence threshold, so the threshold itself is too
    /// loose for this.
    pub ambiguity_margin: f64,
    pub threshold: f64,
}

impl Default for BruteForceConfig {
    fn default() -> Self {
        BruteForceConfig {
            grid_step: 0.05,
            budget: 50_000_000,
            starts: 3,
            distinct_distance: 5e-3,
            ambiguity_margin: 1e-4,
            threshold: CONVERGENCE_THRESHOLD,
        }
    }
}

/// Spanning tree of the first set's pairs rooted at its lowest microphone:
/// the pair indices whose wrap counts fix every range difference.
fn spanning_pairs(set: &PhaseDifferenceSet) -> Result<Vec<usize>> {
    let used: Vec<usize> = {
        let mut v: Vec<usize> = set.pairs.iter().flat_map(|p| [p.i, p.j]).collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    let mut reached = vec![used[0]];
    let mut tree = Vec::new();
    while reached.len() < used.len() {
        let next = set.pairs.iter().enumerate().find(|(_, p)| {
            reached.contains(&p.i) != reached.contains(&p.j)
        });
        match next {
            Some((k, p)) => {
                tree.push(k);
                reached.push(if reached.contains(&p.i) { p.j } else { p.i });
            }
            None => return Err(Error::InsufficientData("microphone pairs do not connect the array".into())),
        }
    }
    Ok(tree)
}

/// Exhaustive oracle with the default grid settings apart from the step.
pub fn brute_force_start_point(sets: &[PhaseDifferenceSet], ws: &Workspace, grid_step: f64) -> Result<StartFix> {
    brute_force_start_point_with(
        sets,
        ws,
        &BruteForceConfig {
            grid_step,
            ..BruteForceConfig::default()
        },
    )
}

/// Enumerates every wrap combination on a spanning tree of the first set
/// (the remaining counts follow from the position). For each combination
/// the best grid points seed a local fit of the tree pairs, then of
/// everything. Returns the global best and flags ambiguity when another
/// distinct position also converges.
pub fn brute_force_start_point_with(
    sets: &[PhaseDifferenceSet],
    ws: &Workspace,
    cfg: &BruteForceConfig,
) -> Result<StartFix> {
    check_sets(sets)?;
    ws.validate()?;
    if !(cfg.grid_step > 0.0) {
        return Err(Error::arg("grid step must be positive"));
    }
    let first = &sets[0];
    let tree = spanning_pairs(first)?;
    let bounds = first.wrap_bounds();
    let combos: u64 = tree.iter().map(|&k| 2 * bounds[k] as u64 + 1).product();
    let grid = ws.grid(cfg.grid_step);
    if grid.is_empty() {
        return Err(Error::arg("grid step leaves no workspace points"));
    }
    let needed = combos.saturating_mul(grid.len() as u64);
    if needed > cfg.budget {
        return Err(Error::BudgetExceeded {
            needed,
            budget: cfg.budget,
        });
    }
    let tree_set = PhaseDifferenceSet {
        pairs: tree.iter().map(|&k| first.pairs[k]).collect(),
        wavelength: first.wavelength,
        mics: first.mics.clone(),
    };
    let results: Vec<(Point3, Vec<WrapVector>, f64)> = (0..combos)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut rem = c;
            let pins: Vec<(usize, i32)> = tree
                .iter()
                .map(|&k| {
                    let span = 2 * bounds[k] as u64 + 1;
                    let n = (rem % span) as i32 - bounds[k];
                    rem /= span;
                    (k, n)
                })
                .collect();
            let tree_wraps = [WrapVector {
                n: pins.iter().map(|&(_, n)| n).collect(),
            }];
            let mut scored: Vec<(f64, usize)> = grid
                .iter()
                .enumerate()
                .map(|(g, p)| (tdoa_objective(p, &tree_wraps[0], &tree_set), g))
                .collect();
            let take = cfg.starts.min(scored.len());
            scored.select_nth_unstable_by(take - 1, |a, b| a.0.total_cmp(&b.0));
            let sets_ref = std::slice::from_ref(&tree_set);
            let out: Vec<_> = scored[..take]
                .iter()
                .map(|&(_, g)| {
                    let (p, _, _) = refine(&grid[g], sets_ref, ws, Wraps::Free, Some(tree_wraps.to_vec()), 50);
                    refine(&p, sets, ws, Wraps::Pinned(&pins), None, 50)
                })
                .collect();
            out
        })
        .collect();
    let (bp, bw, _) = results
        .iter()
        .min_by(|a, b| a.2.total_cmp(&b.2))
        .cloned()
        .expect("at least one combination");
    let mut fix = make_fix(bp, bw, sets, cfg.threshold);
    let best = fix.normalized_residual;
    let rival = results.iter().any(|(p, w, _)| {
        (p - bp).norm() > cfg.distinct_distance && normalized_residual(p, w, sets) <= best + cfg.ambiguity_margin
    });
    fix.ambiguous = rival;
    Ok(fix)
}
