use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn aerosim(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aerosim"))
        .args(args)
        .env("AEROSIM_OUT", out)
        .output()
        .expect("binary runs")
}

fn entries(dir: &Path) -> Vec<String> {
    match std::fs::read_dir(dir) {
        Ok(rd) => {
            let mut v: Vec<String> = rd.map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
            v.sort();
            v
        }
        Err(_) => Vec::new(),
    }
}

/// Every file of an output directory, in name order.
fn contents(dir: &Path) -> Vec<(String, Vec<u8>)> {
    entries(dir).into_iter().map(|n| (n.clone(), std::fs::read(dir.join(&n)).unwrap())).collect()
}

fn published(o: &Output) -> PathBuf {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    PathBuf::from(String::from_utf8(o.stdout.clone()).unwrap().trim())
}

const SMALL_RUN: &[&str] =
    &["run", "--trace", "ali-e:5", "--channels", "1", "--chips", "1", "--blocks", "8", "--pec", "1000"];
const SMALL_LIFETIME: &[&str] =
    &["lifetime", "--schemes", "baseline,aero", "--blocks", "8", "--step", "500", "--max-pec", "1500"];
const SMALL_CHARACTERIZE: &[&str] = &["characterize", "--blocks", "40", "--pec-levels", "0,1000"];

#[test]
fn help_lists_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    let top = aerosim(tmp.path(), &["--help"]);
    assert_eq!(top.status.code(), Some(0));
    let text = String::from_utf8_lossy(&top.stdout);
    for cmd in ["run", "lifetime", "characterize", "compare"] {
        assert!(text.contains(cmd), "{cmd} missing from help");
    }
    let run = String::from_utf8_lossy(&aerosim(tmp.path(), &["run", "--help"]).stdout).into_owned();
    for d in ["[default: aero]", "[default: 500]", "[default: ali-e:600]", "[default: on]", "[default: 0.8]"] {
        assert!(run.contains(d), "run help lacks {d}");
    }
    let cmp = String::from_utf8_lossy(&aerosim(tmp.path(), &["compare", "--help"]).stdout).into_owned();
    assert!(cmp.contains("[default: baseline,aero-cons,aero]") && cmp.contains("[default: 500,2500,4500]"));
    let life = String::from_utf8_lossy(&aerosim(tmp.path(), &["lifetime", "--help"]).stdout).into_owned();
    assert!(life.contains("[default: 120]") && life.contains("[default: 8000]"));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    for bad in [
        &["frobnicate"][..],
        &["run", "--scheme", "fastest"],
        &["run", "--trace", "nowhere.csv"],
        &["compare", "--schemes", "none"],
        &["compare", "--pecs", ""],
        &["run", "--suspension", "maybe"],
    ] {
        assert_eq!(aerosim(&out, bad).status.code(), Some(2), "{bad:?}");
    }
    let missing = aerosim(&out, &["run", "--trace", "msrc:/definitely/not/here.csv"]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("not/here.csv"));
    assert_eq!(aerosim(&out, &["run", "--utilization", "1.5"]).status.code(), Some(1));
    assert!(entries(&out).is_empty(), "failed runs left {:?}", entries(&out));
}

#[test]
fn failed_publish_leaves_nothing_behind() {
    let tmp = tempfile::tempdir().unwrap();
    let blocker = tmp.path().join("file");
    std::fs::write(&blocker, "not a directory").unwrap();
    let o = aerosim(&blocker, SMALL_CHARACTERIZE);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(entries(tmp.path()), vec!["file".to_string()]);
}

#[test]
fn outputs_are_reproducible_and_complete() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for (args, files) in [
        (SMALL_RUN, &["config.toml", "latency_p99_99.csv", "requests.csv", "summary.json"][..]),
        (SMALL_LIFETIME, &["lifetime.csv", "summary.json"]),
        (SMALL_CHARACTERIZE, &["ept.txt", "occupancy.csv", "shallow_sweep.csv", "summary.json"]),
    ] {
        let da = published(&aerosim(&a, args));
        let db = published(&aerosim(&b, args));
        assert_eq!(da.file_name(), db.file_name());
        assert!(da.file_name().unwrap().to_string_lossy().starts_with(args[0]));
        assert_eq!(contents(&da), contents(&db), "{} differs", args[0]);
        let names = entries(&da);
        for f in files {
            assert!(names.iter().any(|n| n == f), "{} lacks {f}", args[0]);
        }
        // a rerun into the same base replaces the directory
        assert_eq!(published(&aerosim(&a, args)), da);
    }
    assert!(entries(&a).iter().all(|n| !n.ends_with(".partial")));
}

#[test]
fn config_file_and_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    std::fs::write(&cfg, "scheme = \"baseline\"\npec = 2000\n[geometry]\nchannels = 1\nchips_per_channel = 1\nblocks_per_plane = 8\n[trace]\nsource = \"synth\"\nread_ratio = 0.9\navg_size = 8192\navg_interarrival = 5000000\nduration = 3000000000\n").unwrap();
    let dir = published(&aerosim(tmp.path(), &["run", "--config", cfg.to_str().unwrap(), "--pec", "700"]));
    let echoed = std::fs::read_to_string(dir.join("config.toml")).unwrap();
    assert!(echoed.contains("scheme = \"baseline\""));
    assert!(echoed.contains("pec = 700"));
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["command"], "run");
    assert_eq!(summary["config"]["pec"], 700);
    assert!(dir.file_name().unwrap().to_string_lossy().ends_with(&summary["config_hash"].as_str().unwrap()[..16]));
}
