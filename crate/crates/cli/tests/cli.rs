use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ssnscope_cli::config::{Config, Scenario};
use ssnscope_cli::output::RunDir;
use ssnscope_cli::{run, Exec};

fn ssnscope(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ssnscope"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn small(scenario: Scenario) -> Vec<(String, toml::Value)> {
    let int = |k: &str, v: i64| (k.to_string(), toml::Value::Integer(v));
    match scenario {
        Scenario::Scan => vec![int("width_px", 20), int("height_px", 10), int("repetitions", 2)],
        Scenario::Variance => vec![int("width_px", 8), int("height_px", 4), int("repetitions", 10)],
        Scenario::Calibrate => vec![int("series", 3), int("windows_per_series", 10), int("differential_windows", 10_000)],
        Scenario::Figure1 => vec![int("mc_windows", 200)],
        Scenario::Target => vec![int("repetitions", 2)],
    }
}

fn read_all(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn rerun_from_manifest_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    for scenario in Scenario::ALL {
        let config = Config::resolve(scenario, None, &small(scenario)).unwrap();
        let a = tmp.path().join(format!("{scenario}-a"));
        let b = tmp.path().join(format!("{scenario}-b"));
        let manifest = run(&config, &a, Exec::SERIAL).unwrap();
        let text = fs::read_to_string(&manifest).unwrap();
        let again = Config::resolve(scenario, Some(&text), &[]).unwrap();
        assert_eq!(again, config, "{scenario}");
        run(&again, &b, Exec { threads: 3 }).unwrap();
        let (fa, fb) = (read_all(&a), read_all(&b));
        assert!(fa.len() >= 2, "{scenario}");
        assert_eq!(fa, fb, "{scenario}");
    }
}

#[test]
fn every_output_carries_the_manifest_stamp() {
    let tmp = tempfile::tempdir().unwrap();
    let config = Config::resolve(Scenario::Scan, None, &small(Scenario::Scan)).unwrap();
    run(&config, tmp.path(), Exec::SERIAL).unwrap();
    let stamp = config.stamp();
    let manifest = fs::read_to_string(tmp.path().join("manifest.toml")).unwrap();
    for (name, bytes) in read_all(tmp.path()) {
        let head = String::from_utf8_lossy(&bytes[..bytes.len().min(400)]).into_owned();
        assert!(head.contains(&stamp), "{name}");
        if name != "manifest.toml" {
            assert!(manifest.contains(&format!("# output = {name}")), "{name}");
        }
    }
}

#[test]
fn seed_changes_outputs_and_hash() {
    let tmp = tempfile::tempdir().unwrap();
    let mut o = small(Scenario::Figure1);
    let a = Config::resolve(Scenario::Figure1, None, &o).unwrap();
    o.push(("seed".into(), toml::Value::Integer(2)));
    let b = Config::resolve(Scenario::Figure1, None, &o).unwrap();
    assert_ne!(a.hash(), b.hash());
    run(&a, &tmp.path().join("a"), Exec::SERIAL).unwrap();
    run(&b, &tmp.path().join("b"), Exec::SERIAL).unwrap();
    let mc = |d: &str| fs::read(tmp.path().join(d).join("figure1_montecarlo.csv")).unwrap();
    assert_ne!(mc("a"), mc("b"));
}

#[test]
fn binary_writes_manifest_and_accepts_it_back() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let out = ssnscope(&["target", "--set", "repetitions=2", "--threads", "1", "--out", a.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = a.join("manifest.toml");
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), manifest.to_str().unwrap());
    let out = ssnscope(&[
        "target",
        "--config",
        manifest.to_str().unwrap(),
        "--threads",
        "2",
        "--out",
        b.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(read_all(&a), read_all(&b));
}

#[test]
fn defaults_round_trip_through_the_binary() {
    for scenario in Scenario::ALL {
        let out = ssnscope(&["defaults", scenario.name()]);
        assert_eq!(code(&out), 0);
        let text = String::from_utf8(out.stdout).unwrap();
        assert_eq!(Config::resolve(scenario, Some(&text), &[]).unwrap(), Config::defaults(scenario));
    }
}

#[test]
fn configuration_errors_exit_with_2() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().to_str().unwrap();
    for args in [
        vec!["scan", "--set", "bogus=1"],
        vec!["scan", "--set", "line_eta=0.1"],
        vec!["scan", "--set", "windows_per_pixel=0"],
        vec!["calibrate", "--set", "eta_det=1.5"],
        vec!["figure1", "--set", "noequals"],
    ] {
        let mut full = args.clone();
        full.extend(["--out", dir]);
        let out = ssnscope(&full);
        assert_eq!(code(&out), 2, "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let file = tmp.path().join("scan.toml");
    fs::write(&file, "scenario = \"target\"\n").unwrap();
    let out = ssnscope(&["scan", "--config", file.to_str().unwrap(), "--out", dir]);
    assert_eq!(code(&out), 2);
}

#[test]
fn runtime_errors_exit_with_3() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ssnscope(&[
        "target",
        "--set",
        "target_pitch_um=2",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
    let out = ssnscope(&["target", "--set", "step_um=3", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(code(&out), 3);
}

#[test]
fn io_errors_exit_with_4() {
    let tmp = tempfile::tempdir().unwrap();
    let file = tmp.path().join("plain");
    fs::write(&file, "x").unwrap();
    let out = ssnscope(&["figure1", "--out", file.join("sub").to_str().unwrap()]);
    assert_eq!(code(&out), 4);
    let out = ssnscope(&["figure1", "--config", tmp.path().join("missing.toml").to_str().unwrap()]);
    assert_eq!(code(&out), 4);
}

#[test]
fn run_dir_lists_files_and_notes() {
    let tmp = tempfile::tempdir().unwrap();
    let config = Config::defaults(Scenario::Figure1);
    let mut dir = RunDir::create(tmp.path(), &config).unwrap();
    dir.csv("t.csv", &["a", "b"], vec![vec!["1".into(), "x,y".into()]]).unwrap();
    dir.note("answer", 42);
    let manifest = fs::read_to_string(dir.finish().unwrap()).unwrap();
    assert!(manifest.contains("# output = t.csv"));
    assert!(manifest.contains("# answer = 42"));
    let csv = fs::read_to_string(tmp.path().join("t.csv")).unwrap();
    assert_eq!(csv, format!("# {}\na,b\n1,\"x,y\"\n", config.stamp()));
}
