use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use romscat_core::io;

const DESK: &str = r#"
[grid]
nx = 1
nz = 80

[medium]
source = "layers"
c0 = 1.8

[array]
m = 1

[pulse]
wavelength = 8.9

[rom]
n = 16

[output]
dir = "unused"
"#;

fn romscat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_romscat")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn missing_key_is_a_usage_error_naming_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "bad.toml", &DESK.replace("n = 16", ""));
    let out = romscat(&["simulate", "--config", s(&cfg), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("rom.n"), "{}", stderr(&out));
}

#[test]
fn unknown_flag_prints_usage() {
    let out = romscat(&["simulate", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).to_lowercase().contains("usage"));
}

#[test]
fn corrupt_data_file_is_an_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.romdata");
    fs::write(&bad, b"ROMGRID1 not a data cube").unwrap();
    let out = romscat(&["rom", "check", "--data", s(&bad)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("ROMDATA1"), "{}", stderr(&out));
    let out = romscat(&["rom", "check", "--data", s(&tmp.path().join("absent.romdata"))]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn simulate_then_build_and_check_rom() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "desk.toml", DESK);
    let sim = tmp.path().join("sim");
    let out = romscat(&["simulate", "--config", s(&cfg), "--out", s(&sim)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let data = io::load_data(&sim.join("data.romdata")).unwrap();
    assert_eq!((data.m, data.nsteps()), (1, 32));
    assert!(fs::read_to_string(sim.join("manifest.txt")).unwrap().contains("data.romdata = "));

    let out = romscat(&["rom", "check", "--data", s(&sim.join("data.romdata"))]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let report = String::from_utf8_lossy(&out.stdout);
    for key in ["data_fit", "off_tridiagonal", "dual_lower", "lanczos", "all invariants hold"] {
        assert!(report.contains(key), "{report}");
    }

    let built = tmp.path().join("rom");
    let out = romscat(&["rom", "build", "--data", s(&sim.join("data.romdata")), "--out", s(&built)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let rom = io::load_rom(&built.join("rom.romrom")).unwrap();
    assert_eq!((rom.n, rom.m), (16, 1));
    let out = romscat(&[
        "rom",
        "check",
        "--data",
        s(&sim.join("data.romdata")),
        "--rom",
        s(&built.join("rom.romrom")),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
}

#[test]
fn rom_check_flags_a_rom_that_does_not_fit_the_data() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "desk.toml", DESK);
    let homog = write_config(tmp.path(), "homog.toml", &DESK.replace("\"layers\"", "\"homogeneous\""));
    for (c, dir) in [(&cfg, "a"), (&homog, "b")] {
        let out = romscat(&["simulate", "--config", s(c), "--out", s(&tmp.path().join(dir))]);
        assert!(out.status.success());
    }
    let out = romscat(&["rom", "build", "--data", s(&tmp.path().join("b/data.romdata")), "--out", s(&tmp.path().join("rb"))]);
    assert!(out.status.success());
    let out = romscat(&[
        "rom",
        "check",
        "--data",
        s(&tmp.path().join("a/data.romdata")),
        "--rom",
        s(&tmp.path().join("rb/rom.romrom")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("data fit"), "{}", stderr(&out));
}

#[test]
fn pipeline_reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "noisy.toml", &format!("{DESK}\n[noise]\nlevel = 0.01\nseed = 3\n").replace("n = 16", "n = 16\nrel_tol = 0.01"));
    let dirs = [tmp.path().join("a"), tmp.path().join("b")];
    for d in &dirs {
        let out = romscat(&["pipeline", "--config", s(&cfg), "--out", s(d)]);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    let mut names: Vec<_> = fs::read_dir(&dirs[0]).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 13);
    for n in &names {
        assert_eq!(fs::read(dirs[0].join(n)).unwrap(), fs::read(dirs[1].join(n)).unwrap(), "{n:?} differs");
    }
}

#[test]
fn seed_flag_overrides_the_configuration() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "noisy.toml", &format!("{DESK}\n[noise]\nlevel = 0.01\nseed = 3\n"));
    let run = |seed: &str, dir: &str| {
        let d = tmp.path().join(dir);
        let out = romscat(&["--seed", seed, "simulate", "--config", s(&cfg), "--out", s(&d)]);
        assert!(out.status.success());
        fs::read(d.join("data.romdata")).unwrap()
    };
    let plain = {
        let d = tmp.path().join("plain");
        assert!(romscat(&["simulate", "--config", s(&cfg), "--out", s(&d)]).status.success());
        fs::read(d.join("data.romdata")).unwrap()
    };
    assert_eq!(run("3", "s3"), plain);
    assert_ne!(run("4", "s4"), plain);
}

#[test]
fn invert_rejects_data_of_another_length() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "desk.toml", DESK);
    let longer = write_config(tmp.path(), "long.toml", &DESK.replace("n = 16", "n = 20"));
    assert!(romscat(&["simulate", "--config", s(&longer), "--out", s(&tmp.path().join("sim"))]).status.success());
    let out = romscat(&[
        "invert",
        "--config",
        s(&cfg),
        "--data",
        s(&tmp.path().join("sim/data.romdata")),
        "--out",
        s(&tmp.path().join("inv")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("2n = 32"), "{}", stderr(&out));
}

#[test]
fn invert_born_psf_and_mesh_write_their_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "desk.toml", DESK);
    let sim = tmp.path().join("sim");
    assert!(romscat(&["simulate", "--config", s(&cfg), "--out", s(&sim)]).status.success());
    let data = sim.join("data.romdata");

    for (method, extra) in [("rom-gn", vec![]), ("ls-rtm", vec!["--input", "born"])] {
        let dir = tmp.path().join(method);
        let mut args = vec!["invert", "--config", s(&cfg), "--data", s(&data), "--method", method, "--out", s(&dir)];
        args.extend(extra);
        let out = romscat(&args);
        assert!(out.status.success(), "{}", stderr(&out));
        let q = io::load_field(&dir.join("q_est.romgrid")).unwrap();
        assert_eq!(q.values.len(), 80);
        assert!(fs::read_to_string(dir.join("report.txt")).unwrap().contains("[iteration 0]"));
    }

    let born = tmp.path().join("born");
    assert!(romscat(&["born", "--config", s(&cfg), "--data", s(&data), "--out", s(&born)]).status.success());
    assert_eq!(io::load_data(&born.join("born.romdata")).unwrap().nsteps(), 32);

    let psf = tmp.path().join("psf");
    let out = romscat(&["psf", "--config", s(&cfg), "--depth", "2,3", "--out", s(&psf)]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(psf.join("psf_1.pgm").exists());
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 2);

    let mesh = tmp.path().join("mesh");
    assert!(romscat(&["mesh", "--config", s(&cfg), "--out", s(&mesh)]).status.success());
    assert!(io::load_basis(&mesh.join("basis.rombase")).unwrap().len() > 5);
}

#[test]
fn oracle_suite_passes_on_a_tiny_grid() {
    let out = romscat(&["oracle"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(!String::from_utf8_lossy(&out.stdout).contains("FAILED"));
    assert_eq!(romscat(&["oracle", "--nx", "100", "--nz", "100"]).status.code(), Some(2));
}

#[test]
fn wide_array_cube_has_the_expected_header() {
    // Fifty sensors four cells apart, 2n = 110 samples.
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "wide.toml",
        r#"
[grid]
nx = 210
nz = 30
[medium]
source = "homogeneous"
c0 = 1.8
[array]
m = 50
pitch = 4
[pulse]
wavelength = 8.9
[rom]
n = 55
[output]
dir = "unused"
"#,
    );
    let out = romscat(&["simulate", "--config", s(&cfg), "--out", s(&tmp.path().join("w"))]);
    assert!(out.status.success(), "{}", stderr(&out));
    let bytes = fs::read(tmp.path().join("w/data.romdata")).unwrap();
    let m = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    let steps = u32::from_le_bytes(bytes[12..16].try_into().unwrap());
    assert_eq!((m, steps), (50, 110));
    let data = io::decode_data(&bytes).unwrap();
    assert!(data.tau > 0.0);
}
