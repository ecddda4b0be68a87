use std::path::Path;
use std::process::{Command, Output};

fn spikes(args: &[&str], cache: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spikes")).args(args).env("SPIKE_CACHE_DIR", cache).output().unwrap()
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

#[test]
fn profiles_rerun_uses_the_cache() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();
    let cache = dir.path().join("cache");
    let a = spikes(&["profiles", "--out", out], &cache);
    assert!(text(&a.stderr).contains("computed"));
    let b = spikes(&["profiles", "--out", out], &cache);
    assert!(text(&b.stderr).contains("loaded from cache"));
    assert_eq!(a.stdout, b.stdout);
    let table = text(&a.stdout);
    for name in ["mass", "log_mass", "dipole", "radial_mode"] {
        let line = table.lines().find(|l| l.starts_with(name)).unwrap();
        assert!(line.ends_with("PASS"), "{line}");
    }
    assert!(Path::new(out).join("profiles.json").exists());
}

#[test]
fn invalid_exponent_is_a_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = spikes(&["verify", "--p", "0.5", "--out", out.to_str().unwrap()], dir.path());
    assert!(!o.status.success());
    assert!(text(&o.stderr).contains("invalid exponent"));
    let report = std::fs::read_to_string(out.join("verify.json")).unwrap();
    assert!(report.contains("\"pass\": false"));
}

#[test]
fn verify_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    let out = dir.path().join("out");
    let run = || {
        let o = spikes(&["verify", "--p", "10", "--resolution", "1", "--out", out.to_str().unwrap()], &cache);
        assert!(o.status.success(), "{}", text(&o.stdout));
        assert!(text(&o.stdout).contains("overall: PASS"));
        std::fs::read(out.join("verify.json")).unwrap()
    };
    assert_eq!(text(&run()), text(&run()));
}

#[test]
fn stage_commands_write_their_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = out.to_str().unwrap();
    let common = ["--p", "10", "--resolution", "1", "--out", o];
    for cmd in ["critpoints", "construct", "spectrum"] {
        let mut args = vec![cmd];
        args.extend(common);
        let r = spikes(&args, &dir.path().join("cache"));
        assert!(r.status.success(), "{cmd}: {}", text(&r.stderr));
    }
    for f in ["critpoints.json", "construct-p10.json", "solution-p10.snap", "rays-p10.dat", "spectrum-p10.json", "lambda.dat"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let crit = std::fs::read_to_string(out.join("critpoints.json")).unwrap();
    assert!(crit.contains("\"degree\": -1"));
}

#[test]
fn two_lobe_config_from_files() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("lobes.json"),
        r#"{"kind": "star", "radius_coeffs": {"a0": 1.0, "cos": [0.0, -0.65], "sin": [0.0, 0.0]}}"#,
    )
    .unwrap();
    std::fs::write(
        dir.path().join("run.json"),
        r#"{"domain": {"file": "lobes.json"}, "k": 2, "p": [20], "resolution": 1.0, "output_dir": "ignored"}"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = spikes(&["verify", "--config", dir.path().join("run.json").to_str().unwrap(), "--out", out.to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}", text(&o.stdout));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("verify.json")).unwrap()).unwrap();
    let m = report["critical"]["morse"].as_u64().unwrap();
    let rows = report["rows"].as_array().unwrap();
    let morse = rows.iter().find(|r| r["name"] == "morse").unwrap();
    assert_eq!(morse["computed"].as_f64().unwrap(), (2 + m) as f64);
    assert_eq!(report["critical"]["degree"].as_i64().unwrap(), if m.is_multiple_of(2) { 1 } else { -1 });
}
