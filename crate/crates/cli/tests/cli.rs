use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_uthermo"));
    for (k, _) in std::env::vars() {
        if k.starts_with("UTHERMO_") {
            c.env_remove(k);
        }
    }
    c
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("uthermo-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&d);
    fs::create_dir_all(&d).unwrap();
    d
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("test.cfg");
    let system = configs().join("systems/cat.sys");
    fs::write(&p, format!("system = {}\n{text}", system.display())).unwrap();
    p
}

#[test]
fn bundled_cat_pressure() {
    let out = scratch("pressure");
    let cfg = configs().join("cat_pressure.cfg");
    let o = run(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let json: Value =
        serde_json::from_str(&fs::read_to_string(out.join("pressure_1.json")).unwrap()).unwrap();
    let v = json["summary"]["estimates"][0]["value"].as_f64().unwrap();
    assert!((v - 0.9624).abs() < 0.0481, "{v}");
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.lines().all(|l| l.contains("PASS")));
}

#[test]
fn decreasing_eps_grid_exits_2() {
    let dir = scratch("eps");
    let cfg = write_config(&dir, "experiment = pressure\neps_grid = 0.04 0.02\n");
    let o = run(&["--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("eps_grid"));
}

#[test]
fn unknown_key_exits_2() {
    let dir = scratch("unknown");
    let cfg = write_config(&dir, "experiment = pressure\nbogus = 1\n");
    let o = run(&["--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));
}

#[test]
fn failed_invariant_exits_1() {
    let dir = scratch("fail");
    let cfg = write_config(
        &dir,
        "experiment = spectrum\nspectrum_length = 500\nexpect = 5.0\ntolerance = 0.01\n",
    );
    let o = run(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL top exponent"));
}

#[test]
fn estimator_error_exits_3() {
    let dir = scratch("estimator");
    let cfg = write_config(
        &dir,
        "experiment = entropy\nentropy.grid_k = 4\nsamples = 5\n",
    );
    let o = run(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("disk too small"));
}

#[test]
fn info_identities_pass() {
    let out = scratch("info");
    let cfg = configs().join("info_identities.cfg");
    let o = run(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let csv = fs::read_to_string(out.join("info-identities_1.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 7);
}

#[test]
fn reruns_are_byte_identical_across_workers() {
    let dir = scratch("determinism");
    let cfg = write_config(
        &dir,
        "experiment = entropy\nsamples = 20\nentropy.n_grid = 4..16:4\n",
    );
    let (a, b) = (dir.join("a"), dir.join("b"));
    for (out, workers) in [(&a, "1"), (&b, "2")] {
        let o = run(&[
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--workers",
            workers,
        ]);
        assert_eq!(code(&o), 0);
    }
    for ext in ["csv", "json"] {
        let x = fs::read(a.join(format!("entropy_1.{ext}"))).unwrap();
        let y = fs::read(b.join(format!("entropy_1.{ext}"))).unwrap();
        assert_eq!(x, y, "{ext}");
    }
    assert!(fs::read_to_string(a.join("entropy_1.log"))
        .unwrap()
        .contains("unix_time="));
}

#[test]
fn seeds_give_distinct_parseable_files() {
    let dir = scratch("seeds");
    let cfg = write_config(
        &dir,
        "experiment = smb\nsamples = 10\nentropy.n_grid = 4..12:4\n",
    );
    for seed in ["3", "4"] {
        let o = run(&[
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            dir.to_str().unwrap(),
            "--seed",
            seed,
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    }
    let a: Value =
        serde_json::from_str(&fs::read_to_string(dir.join("smb_3.json")).unwrap()).unwrap();
    let b: Value =
        serde_json::from_str(&fs::read_to_string(dir.join("smb_4.json")).unwrap()).unwrap();
    assert_eq!(a["seed"], 3);
    assert_ne!(a["summary"], b["summary"]);
    assert_ne!(
        fs::read(dir.join("smb_3.csv")).unwrap(),
        fs::read(dir.join("smb_4.csv")).unwrap()
    );
}

#[test]
fn environment_overrides_config() {
    let dir = scratch("env");
    let cfg = write_config(
        &dir,
        "experiment = spectrum\nspectrum_length = 500\nseed = 1\n",
    );
    let o = bin()
        .args(["--config", cfg.to_str().unwrap()])
        .env("UTHERMO_OUT", &dir)
        .env("UTHERMO_SEED", "9")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(dir.join("spectrum_9.json").exists());
    let o = bin()
        .args([
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            dir.to_str().unwrap(),
        ])
        .env("UTHERMO_SAMPLES", "0")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
}
