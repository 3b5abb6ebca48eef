use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bfppc_cli::csv::read_trace;
use bfppc_cli::report::{validate_report, RunReport};
use bfppc_cli::run::{run_scenario, stats_of, RunFlags};
use bfppc_cli::scenario::{parse_scenario, EXAMPLE1_JSON, EXAMPLE2_JSON};
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bfppc"))
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("bfppc-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn report_at(dir: &Path) -> RunReport {
    let v: Value = serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    validate_report(&v).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

// x1' = x1^2 + x2, x2' = x2 + u with every gain zero
const DIVERGING: &str = r#"{
  "name": "diverging",
  "plant": { "n": 2, "f": ["x1^2", "x2"], "f_star": ["x1^2", "x2"], "x0": [1.0, 0.0] },
  "quantizer": { "kind": "uniform", "l0": 0.1 },
  "performance": { "family": "cosine", "ts": 1.0 },
  "controller": {
    "kind": "regulation", "eps": [0.1, 0.5], "c0": 0.5, "N": [3, 3],
    "H": [1.0, 1.0], "gamma": [0.0, 0.0], "c": [0.0, 0.0]
  },
  "simulation": { "h": 1e-4, "t_end": 3.0 }
}"#;

#[test]
fn csv_round_trip_reproduces_stats() {
    let out = scratch("roundtrip");
    for text in [EXAMPLE1_JSON, EXAMPLE2_JSON] {
        let sc = parse_scenario(text).unwrap();
        let flags = RunFlags {
            t_end: Some(3.0),
            out_root: Some(out.clone()),
            ..Default::default()
        };
        let run = run_scenario(&sc, &flags).unwrap();
        let dir = run.dir.unwrap();
        let rows = read_trace(std::fs::File::open(dir.join("trace.csv")).unwrap()).unwrap();
        assert_eq!(rows, run.rows);
        let again = stats_of(&sc, &rows, &run.trace.radii);
        assert_eq!(again, run.report.stats);
        // and through the JSON text as well
        assert_eq!(report_at(&dir).stats, again);
    }
}

#[test]
fn csv_has_documented_columns() {
    let out = scratch("columns");
    let o = bin().args(["run", "example1", "--t-end", "0.01", "--out"]).arg(&out).output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(out.join("example1/trace.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "t,x1,x2,qx1,qx2,e1,e2,eq1,eq2,alpha1,u,sigma,rho,env_lo,env_hi"
    );
    assert_eq!(lines.count(), 101);
}

#[test]
fn report_validates_against_schema() {
    let out = scratch("schema");
    let o = bin().args(["run", "--all", "--t-end", "1", "--out"]).arg(&out).output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    for name in ["example1", "example2"] {
        let r = report_at(&out.join(name));
        assert!(r.pass);
        for f in ["trace.csv", "report.json", "output.svg", "states.svg", "control.svg", "errors.svg"] {
            assert!(r.artifacts.iter().any(|a| a == f), "{name}: {f}");
            assert!(out.join(name).join(f).exists());
        }
    }
    let schema: Value = serde_json::from_str(bfppc_cli::report::REPORT_SCHEMA).unwrap();
    assert_eq!(schema["$schema"], "https://json-schema.org/draft/2020-12/schema");
}

#[test]
fn schema_rejects_tampered_reports() {
    let out = scratch("tamper");
    let sc = parse_scenario(EXAMPLE2_JSON).unwrap();
    let flags = RunFlags {
        t_end: Some(0.1),
        out_root: Some(out.clone()),
        ..Default::default()
    };
    let dir = run_scenario(&sc, &flags).unwrap().dir.unwrap();
    let good: Value = serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    let mut extra = good.clone();
    extra["surprise"] = Value::Bool(true);
    assert!(validate_report(&extra).unwrap_err().contains("surprise"));
    let mut missing = good.clone();
    missing.as_object_mut().unwrap().remove("pass");
    assert!(validate_report(&missing).unwrap_err().contains("pass"));
    let mut wrong = good;
    wrong["order"] = Value::String("two".into());
    assert!(validate_report(&wrong).is_err());
}

#[test]
fn even_power_is_rejected_with_message() {
    let dir = scratch("even");
    let path = dir.join("bad.json");
    std::fs::write(&path, EXAMPLE1_JSON.replace("\"N\": [3, 3]", "\"N\": [2, 3]")).unwrap();
    let o = bin().arg("run").arg(&path).arg("--out").arg(&dir).output().unwrap();
    assert!(!o.status.success());
    assert!(stderr(&o).contains("N must be odd"), "{}", stderr(&o));
}

#[test]
fn parse_errors_name_the_key() {
    let text = EXAMPLE1_JSON.replace("\"c0\": 0.5", "\"c0\": \"half\"");
    let err = format!("{:#}", parse_scenario(&text).unwrap_err());
    assert!(err.contains("controller.c0"), "{err}");
    assert!(err.contains("line"), "{err}");
    let text = EXAMPLE1_JSON.replace("\"c0\": 0.5", "\"c0\": 0.5, \"cee\": 1");
    let err = format!("{:#}", parse_scenario(&text).unwrap_err());
    assert!(err.contains("cee"), "{err}");
}

#[test]
fn quantizer_only_with_regulation() {
    let text = EXAMPLE2_JSON.replacen("\"performance\"", "\"quantizer\": { \"kind\": \"uniform\", \"l0\": 0.1 },\n  \"performance\"", 1);
    assert!(parse_scenario(&text).is_err());
    let text = EXAMPLE1_JSON.replace("\"quantizer\": { \"kind\": \"uniform\", \"l0\": 0.1 },", "");
    assert!(parse_scenario(&text).is_err());
}

#[test]
fn coarse_step_still_passes() {
    let out = scratch("coarse");
    let o = bin().args(["run", "example1", "--step", "1e-3", "--out"]).arg(&out).output().unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let r = report_at(&out.join("example1"));
    assert!(r.pass);
    assert_eq!(r.step, 1e-3);
    assert_eq!(r.stats.channels[0].violations, 0);
}

#[test]
fn divergence_is_reported_not_raised() {
    let dir = scratch("diverge");
    let path = dir.join("diverging.json");
    std::fs::write(&path, DIVERGING).unwrap();

    let refused = bin().arg("run").arg(&path).arg("--out").arg(&dir).output().unwrap();
    assert!(!refused.status.success());
    assert!(stderr(&refused).contains("--force"), "{}", stderr(&refused));

    let o = bin().arg("run").arg(&path).args(["--force", "--out"]).arg(&dir).output().unwrap();
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let r = report_at(&dir.join("diverging"));
    assert!(!r.pass && !r.complete);
    let t = r.divergence_time.expect("divergence time");
    assert!(t > 0.5 && t < 1.5, "{t}");
    // partial artifacts are still written
    let rows = read_trace(std::fs::File::open(dir.join("diverging/trace.csv")).unwrap()).unwrap();
    assert!(rows.last().unwrap().t <= t);
}

#[test]
fn output_root_from_environment() {
    let env_root = scratch("env");
    let o = bin()
        .args(["run", "example2", "--t-end", "0.5"])
        .env("BFPPC_OUT", &env_root)
        .current_dir(&env_root)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(env_root.join("example2/report.json").exists());

    // the flag wins over the environment
    let flag_root = scratch("flag");
    let o = bin()
        .args(["run", "example2", "--t-end", "0.5", "--out"])
        .arg(&flag_root)
        .env("BFPPC_OUT", &env_root)
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(flag_root.join("example2/report.json").exists());
}

#[test]
fn list_and_synth() {
    let o = bin().arg("list").output().unwrap();
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("example1") && text.contains("regulation"));
    assert!(text.contains("example2") && text.contains("tracking"));

    let o = bin().args(["synth", "example1"]).output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["feasible"], true);
    assert_eq!(v["synthesized"], true);
    let p = v["radii"].as_array().unwrap();
    assert!((p[0].as_f64().unwrap() - 0.15).abs() < 1e-12);
    assert_eq!(v["stages"][0]["N"], 3);
}

#[test]
fn audit_exit_codes_follow_the_reports() {
    let ok = bin().args(["audit", "--check", "tanh", "--m", "1", "--eps", "1"]).output().unwrap();
    assert!(ok.status.success());
    let v: Value = serde_json::from_slice(&ok.stdout).unwrap();
    assert!((v["detail"]["observed_max"].as_f64().unwrap() - 0.2785).abs() < 1e-3);

    let env = bin().args(["audit", "--check", "envelope", "--scenario", "example2", "--t-end", "2"]).output().unwrap();
    assert!(env.status.success(), "{}", stderr(&env));

    // the stock stage-two constant is far below the stage-two bound
    let maj = bin()
        .args(["audit", "--check", "majorize", "--scenario", "example1", "--stage", "2"])
        .output()
        .unwrap();
    assert_eq!(maj.status.code(), Some(1));

    let bad = bin().args(["audit", "--check", "majorize"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
}
