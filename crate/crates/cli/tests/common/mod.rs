#![allow(dead_code)]

use std::path::PathBuf;
use std::process::{Command, Output};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

pub fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_credal-cert"));
    cmd.env_remove("CREDAL_CERT_THREADS");
    cmd
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

pub fn certify_fixture(extra: &[&str]) -> Output {
    let (s, l, t, c) = (
        fixture("source.csv"),
        fixture("losses.csv"),
        fixture("target.csv"),
        fixture("config.json"),
    );
    let mut args = vec![
        "certify",
        s.to_str().unwrap(),
        l.to_str().unwrap(),
        t.to_str().unwrap(),
        c.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    run(&args)
}

pub fn monitor_fixture(extra: &[&str]) -> Output {
    let (s, l, c, t) = (
        fixture("source.csv"),
        fixture("losses.csv"),
        fixture("monitor_config.json"),
        fixture("stream.txt"),
    );
    let mut args = vec![
        "monitor",
        s.to_str().unwrap(),
        l.to_str().unwrap(),
        c.to_str().unwrap(),
        t.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    run(&args)
}

/// Golden certify output three times in a row and two identical monitor
/// streams, both byte-equal to the frozen fixtures.
pub fn determinism_check() -> Result<String, String> {
    let golden = std::fs::read(fixture("certify.golden.json")).map_err(|e| e.to_string())?;
    for i in 0..3 {
        let out = certify_fixture(&[]);
        if !out.status.success() {
            return Err(format!(
                "certify run {i} failed: {}",
                String::from_utf8_lossy(&out.stderr)
            ));
        }
        if out.stdout != golden {
            return Err(format!(
                "certify run {i} differs from the golden certificate"
            ));
        }
    }
    let golden_stream =
        std::fs::read(fixture("monitor.golden.ndjson")).map_err(|e| e.to_string())?;
    let a = monitor_fixture(&[]);
    let b = monitor_fixture(&[]);
    if !(a.status.success() && b.status.success()) {
        return Err("monitor run failed".into());
    }
    if a.stdout != b.stdout {
        return Err("monitor streams differ between runs".into());
    }
    if a.stdout != golden_stream {
        return Err("monitor stream differs from the golden stream".into());
    }
    let records = golden_stream.iter().filter(|&&b| b == b'\n').count();
    Ok(format!("certify byte-identical to golden ×3; monitor {records}-record stream identical ×2 and to golden"))
}
