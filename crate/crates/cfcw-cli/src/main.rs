use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cfcw::experiment::{
    self, build_motion, read_trace_csv, run_on_capture, simulate, write_bundle, write_path_csv,
    write_report_csv, ExperimentConfig, MotionConfig,
};
use cfcw::handwriting::recover_ink;
use cfcw::sim::{read_wav, write_wav};
use cfcw::word::generate_word;
use cfcw::{Error, Result};

/// Simulated CFCW acoustic tracking experiments.
#[derive(Parser)]
#[command(name = "cfcw", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to the config's output_dir or out/<name>.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the capture: capture.wav and truth.csv.
    Simulate(Common),
    /// Demodulate, find the start point and track: phase.csv,
    /// trajectory.csv, report.csv.
    Track {
        #[command(flatten)]
        common: Common,
        /// Use this 16 kHz capture instead of simulating one. Errors are
        /// still scored against the config's motion.
        #[arg(long)]
        capture: Option<PathBuf>,
    },
    /// Pen-lift removal and flattening: ink.svg and ink.csv.
    Recover {
        #[command(flatten)]
        common: Common,
        /// Trajectory CSV written by `track`; runs the pipeline if absent.
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// Full pipeline with every CSV, the ink and the plots.
    Report(Common),
    /// Samples the configured word: word.csv with t,x,y,z,label.
    GenWord {
        #[command(flatten)]
        common: Common,
        /// Samples per second.
        #[arg(long, default_value_t = 1000.0 / 3.0)]
        frame_rate: f64,
    },
}

fn load(c: &Common) -> Result<(ExperimentConfig, PathBuf)> {
    let mut cfg = ExperimentConfig::load(&c.config)?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    let out = c
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| Path::new("out").join(&cfg.name));
    std::fs::create_dir_all(&out)?;
    Ok((cfg, out))
}

fn print_report(r: &experiment::Report) {
    let mm = |v: f64| format!("{:.4} mm", v * 1e3);
    println!("{}: seed {}, {} frames", r.name, r.seed, r.frames);
    println!(
        "  start fix: error {}, converged {}, ambiguous {}",
        mm(r.fix_error),
        r.fix_converged,
        r.fix_ambiguous
    );
    if let Some(s) = r.ranging {
        println!("  1D ranging: median {:.2} um, p90 {:.2} um", s.median * 1e6, s.p90 * 1e6);
    }
    if let Some(s) = r.tracking {
        println!("  3D tracking: median {}, p90 {}, max {}", mm(s.median), mm(s.p90), mm(s.max));
    }
    if let Some(p) = r.pen_lift {
        println!(
            "  pen lifts: {:.1}% of lift samples removed, {:.1}% of stroke samples removed",
            100.0 * p.lift_removed,
            100.0 * p.stroke_removed
        );
    }
    if let Some(s) = r.flattening_stress {
        println!("  flattening stress: {s:.2e}");
    }
    if let Some(b) = r.band {
        print!(
            "  bands: voice {:.1} dB, tracking {:.1} dB, leakage {:.1} dB",
            b.voice_band_power, b.tracking_band_power, b.leakage_ratio
        );
        match b.voice_band_delta {
            Some(d) => println!(", voice delta {d:.2} dB"),
            None => println!(),
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(c) => {
            let (cfg, out) = load(&c)?;
            let (cap, reference, path, word) = simulate(&cfg)?;
            write_wav(&cap, out.join("capture.wav"))?;
            if let Some(r) = reference {
                write_wav(&r, out.join("reference.wav"))?;
            }
            write_path_csv(&path, word.as_ref(), std::fs::File::create(out.join("truth.csv"))?)?;
            println!("wrote {}", out.display());
        }
        Command::Track { common, capture } => {
            let (cfg, out) = load(&common)?;
            let schedule = cfg.build_schedule()?;
            let b = match capture {
                Some(f) => {
                    let cap = read_wav(&f)?;
                    let (path, word) = build_motion(&cfg)?;
                    let cfg = ExperimentConfig {
                        recover_ink: Some(false),
                        ..cfg
                    };
                    run_on_capture(&cfg, &schedule, cap, None, path, word)?
                }
                None => {
                    let cfg = ExperimentConfig {
                        recover_ink: Some(false),
                        ..cfg
                    };
                    experiment::run_pipeline(&cfg)?
                }
            };
            cfcw::demod::save_phase_csv(&b.track, out.join("phase.csv"))?;
            cfcw::localize::save_trajectory_csv(&b.trajectory, out.join("trajectory.csv"))?;
            write_report_csv(&b.report, std::fs::File::create(out.join("report.csv"))?)?;
            print_report(&b.report);
        }
        Command::Recover { common, trajectory } => {
            let (cfg, out) = load(&common)?;
            let rec = match trajectory {
                Some(f) => {
                    let p = read_trace_csv(&f)?;
                    recover_ink(&p, &cfg.handwriting).map_err(|e| e.at_stage("handwriting", None))?
                }
                None => {
                    let cfg = ExperimentConfig {
                        recover_ink: Some(true),
                        ..cfg
                    };
                    let b = experiment::run_pipeline(&cfg)?;
                    print_report(&b.report);
                    b.ink.expect("ink requested")
                }
            };
            rec.ink.save_svg(out.join("ink.svg"))?;
            rec.ink.save_csv(out.join("ink.csv"))?;
            println!(
                "{} strokes, {:.1} x {:.1} mm, stress {:.2e}",
                rec.ink.strokes.len(),
                rec.ink.width() * 1e3,
                rec.ink.height() * 1e3,
                rec.ink.stress
            );
        }
        Command::Report(c) => {
            let (cfg, out) = load(&c)?;
            let b = experiment::run_pipeline(&cfg)?;
            write_bundle(&b, &out)?;
            print_report(&b.report);
            println!("wrote {}", out.display());
        }
        Command::GenWord { common, frame_rate } => {
            let (cfg, out) = load(&common)?;
            let MotionConfig::Word { spec } = &cfg.motion else {
                return Err(Error::Config {
                    field: "motion.kind".into(),
                    message: "gen-word needs a word motion".into(),
                });
            };
            let (word, path, _) = generate_word(spec, frame_rate)?;
            write_path_csv(&path, Some(&word), std::fs::File::create(out.join("word.csv"))?)?;
            println!(
                "{}: {:.2} s, {} lifts, {} stops",
                spec.template, word.duration, word.lifts, word.stops
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
