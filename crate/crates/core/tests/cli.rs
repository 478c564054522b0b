//! End-to-end tests of the `meternet` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_meternet"))
}

fn scenarios_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn meternet")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Copy of a shipped scenario with a shorter duration and another seed.
fn shortened(dir: &Path, name: &str, duration: u32, seed: u64) -> PathBuf {
    let text = fs::read_to_string(scenarios_dir().join(format!("{name}.toml"))).unwrap();
    let text = text
        .lines()
        .map(|l| {
            if l.starts_with("duration") {
                format!("duration = {duration}")
            } else if l.starts_with("seed") {
                format!("seed = {seed}")
            } else if l.starts_with("start") {
                "start = 0.5".to_string()
            } else {
                l.to_string()
            }
        })
        .collect::<Vec<_>>()
        .join("\n");
    let out = dir.join(format!("{name}_{seed}.toml"));
    fs::write(&out, text).unwrap();
    out
}

#[test]
fn run_writes_manifest_last_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = scenarios_dir().join("baseline_highfreq.toml");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let o = run(&["run", "--scenario", path(&scenario), "--out", path(out), "--quiet"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(o.stdout.is_empty());
    }
    let manifest = fs::read_to_string(a.join("manifest.txt")).unwrap();
    let listed: Vec<&str> = manifest.lines().collect();
    assert_eq!(
        listed,
        [
            "meter_delays.csv",
            "meter_verdicts.csv",
            "meter_adaptation.csv",
            "summary.txt"
        ]
    );
    for name in listed.iter().chain(&["manifest.txt"]) {
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap(),
            "{name} differs between runs"
        );
    }
    let summary = fs::read_to_string(a.join("summary.txt")).unwrap();
    assert!(summary.contains("flow.meter.loss_fraction = 0.000000000"), "{summary}");
}

#[test]
fn seed_flag_overrides_file() {
    let tmp = tempfile::tempdir().unwrap();
    let s = shortened(tmp.path(), "fig1_highfreq", 2, 42);
    let out = tmp.path().join("o");
    let o = run(&["run", "--scenario", path(&s), "--seed", "7", "--out", path(&out)]);
    assert!(o.status.success());
    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.contains("seed = 7"), "{summary}");
}

#[test]
fn config_errors_exit_1_and_name_the_problem() {
    let tmp = tempfile::tempdir().unwrap();
    let bad_key = tmp.path().join("bad_key.toml");
    fs::write(
        &bad_key,
        "duration = 1\n[network.access]\nbandwith = 5\n[[meter_flows]]\nsrc = \"h1\"\ndst = \"h5\"\n",
    )
    .unwrap();
    let o = run(&["run", "--scenario", path(&bad_key)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bandwith"));

    let bad_host = tmp.path().join("bad_host.toml");
    fs::write(
        &bad_host,
        "duration = 1\n[[meter_flows]]\nsrc = \"h1\"\ndst = \"h9\"\n",
    )
    .unwrap();
    let o = run(&["run", "--scenario", path(&bad_host)]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("meter_flows[0].dst") && err.contains("unknown host"), "{err}");
}

#[test]
fn unwritable_output_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let blocker = tmp.path().join("file");
    fs::write(&blocker, "not a directory").unwrap();
    let scenario = scenarios_dir().join("baseline_highfreq.toml");
    let o = run(&[
        "run",
        "--scenario",
        path(&scenario),
        "--out",
        path(&blocker.join("sub")),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn missing_scenario_file_exits_2() {
    let o = run(&["run", "--scenario", "/nonexistent/scenario.toml"]);
    assert_eq!(o.status.code(), Some(2));
}

fn table(o: &Output) -> Vec<Vec<String>> {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone())
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn compare_three_configurations() {
    let tmp = tempfile::tempdir().unwrap();
    let files: Vec<PathBuf> = ["fig1_highfreq", "fig1_lowfreq", "fig1_lowres"]
        .iter()
        .map(|n| shortened(tmp.path(), n, 3, 42))
        .collect();
    let out = tmp.path().join("cmp");
    let mut args = vec!["compare", "--out", path(&out)];
    for f in &files {
        args.extend(["--scenario", path(f)]);
    }
    let rows = table(&run(&args));
    assert_eq!(rows.len(), 4);
    assert_eq!(
        rows[0],
        ["label", "packet_size", "interval_s", "decimation", "mean_delay_s", "time_slope", "loss_fraction"]
    );
    let sizes: Vec<&str> = rows[1..].iter().map(|r| r[1].as_str()).collect();
    assert_eq!(sizes, ["1136", "11216", "1416"]);
    assert!(out.join("compare.csv").exists());
}

#[test]
fn compare_isolates_seeds() {
    let tmp = tempfile::tempdir().unwrap();
    let a = shortened(tmp.path(), "fig1_highfreq", 3, 1);
    let b = shortened(tmp.path(), "fig1_highfreq", 3, 2);
    let rows = table(&run(&["compare", "--scenario", path(&a), "--scenario", path(&b)]));
    assert_eq!(rows[1][..4], rows[2][..4]);
    assert_ne!(rows[1][4..], rows[2][4..]);
}

#[test]
fn compare_refuses_bad_sets() {
    let tmp = tempfile::tempdir().unwrap();
    let a = shortened(tmp.path(), "baseline_highfreq", 2, 1);
    let o = run(&["compare", "--scenario", path(&a)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("at least two"));

    let b = shortened(tmp.path(), "baseline_lowfreq", 3, 1);
    let o = run(&["compare", "--scenario", path(&a), "--scenario", path(&b)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("durations must match"));
}

#[test]
fn gen_waveform_writes_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("wave.csv");
    let o = run(&["gen-waveform", "--duration", "0.01", "--out", path(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&out).unwrap();
    // header plus 80 samples on each of three phases
    assert_eq!(text.lines().count(), 1 + 3 * 80);
}

#[test]
fn shipped_scenarios_parse() {
    for entry in fs::read_dir(scenarios_dir()).unwrap() {
        let p = entry.unwrap().path();
        if p.extension().is_some_and(|e| e == "toml") {
            meternet::scenario::load_scenario(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        }
    }
}
