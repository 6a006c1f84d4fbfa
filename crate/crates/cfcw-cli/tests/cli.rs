use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn cfcw(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cfcw"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn config(name: &str) -> String {
    repo().join("configs").join(name).to_string_lossy().into_owned()
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

const RADIAL: &str = r#"
name = "radial"
seed = 4
duration = 0.15

[motion]
kind = "radial"
start = [0.0, 0.0, 0.2]
amplitude = 0.005
t0 = 0.03
t1 = 0.12
"#;

#[test]
fn bundled_configs_all_load() {
    let mut n = 0;
    for e in std::fs::read_dir(repo().join("configs")).unwrap() {
        let p = e.unwrap().path();
        if p.extension().is_some_and(|x| x == "toml") {
            cfcw::experiment::ExperimentConfig::load(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
            n += 1;
        }
    }
    assert!(n >= 10, "{n} configs");
}

#[test]
fn report_writes_the_bundle() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().to_str().unwrap();
    let o = cfcw(&["report", "--config", &config("clean-ranging-40k.toml"), "--out", out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["capture.wav", "report.csv", "phase.csv", "trajectory.csv", "truth.csv", "band.csv", "cdf.svg"] {
        assert!(d.path().join(f).is_file(), "{f} missing");
    }
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("1D ranging"), "{stdout}");
}

#[test]
fn track_reads_a_simulated_capture() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "r.toml", RADIAL);
    let out = d.path().join("o");
    let out = out.to_str().unwrap();
    assert!(cfcw(&["simulate", "--config", &cfg, "--out", out]).status.success());
    let wav = d.path().join("o/capture.wav");
    let o = cfcw(&["track", "--config", &cfg, "--capture", wav.to_str().unwrap(), "--out", out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(d.path().join("o/trajectory.csv").is_file());
}

#[test]
fn same_seed_gives_identical_files() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "r.toml", RADIAL);
    for sub in ["a", "b"] {
        let out = d.path().join(sub);
        assert!(cfcw(&["report", "--config", &cfg, "--out", out.to_str().unwrap()]).status.success());
    }
    for f in ["capture.wav", "report.csv", "trajectory.csv", "band.csv"] {
        let a = std::fs::read(d.path().join("a").join(f)).unwrap();
        let b = std::fs::read(d.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
}

#[test]
fn unknown_field_fails_naming_it() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "bad.toml", &RADIAL.replace("seed = 4", "seed = 4\nbogus_knob = 3"));
    let o = cfcw(&["report", "--config", &cfg, "--out", d.path().to_str().unwrap()]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("bogus_knob"), "{err}");
}

#[test]
fn bad_value_fails_naming_the_field() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "bad.toml", &RADIAL.replace("t1 = 0.12", "t1 = 0.01"));
    let o = cfcw(&["simulate", "--config", &cfg, "--out", d.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("motion.t1"), "{err}");
}

#[test]
fn pipeline_failure_names_the_stage() {
    let d = tempfile::tempdir().unwrap();
    let body = format!("{RADIAL}\n[nonlinearity]\nlinear_gain = 1.0\nquadratic_gain = 0.0\n");
    let cfg = write(d.path(), "lin.toml", &body);
    let o = cfcw(&["report", "--config", &cfg, "--out", d.path().to_str().unwrap()]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("startpoint failed"), "{err}");
}

#[test]
fn gen_word_writes_labels_and_rejects_other_motions() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().to_str().unwrap();
    let o = cfcw(&["gen-word", "--config", &config("word-slant.toml"), "--out", out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(d.path().join("word.csv")).unwrap();
    assert!(csv.starts_with("t,x,y,z,label"));
    assert!(csv.contains(",lift"));
    let o = cfcw(&["gen-word", "--config", &config("star-0.5.toml"), "--out", out]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("motion.kind"));
}
