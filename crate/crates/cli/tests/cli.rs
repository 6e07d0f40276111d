use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cbrec_core::io::{read_complex_series, read_json, read_manifest, write_complex_series};

const BASE: &str = r#"
seed = 3

[grid]
nx = 16
nt_half = 16
horizon = 2.0

[physics]
d = 1.0
p = { kind = "sine", amplitude = 0.5, offset = 0.3 }
p_gamma = 0.4

[initial]
y0 = { kind = "tanh", kappa = 6.0 }
y_gamma0 = 1.0

[carleman]
s = 4.0
lambda = 0.1
a = 0.5
alpha_margin = 2.0

[algorithm]
max_iterations = 3

[stability]
members = 4

[carleman_check]
members = 3
s_count = 3
"#;

fn cbrec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cbrec")).args(args).output().unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn run(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    cbrec(&args)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn forward_writes_manifest_flux_and_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", BASE);
    let out = tmp.path().join("run1");
    let o = run("forward", &cfg, &out, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["manifest.json", "flux.csv", "summary.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let manifest = read_manifest(&out).unwrap();
    let listed: Vec<&str> = manifest.files.iter().map(|f| f.name.as_str()).collect();
    let mut on_disk: Vec<String> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n != "manifest.json")
        .collect();
    on_disk.sort();
    let mut sorted = listed.clone();
    sorted.sort();
    assert_eq!(sorted, on_disk);
    assert_eq!(manifest.seed, 3);
    assert_eq!(manifest.command, "forward");
    let (t, flux) = read_complex_series(&out.join("flux.csv")).unwrap();
    assert_eq!(t.len(), 17);
    assert_eq!(flux.len(), 17);
}

#[test]
fn zero_d_exits_with_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", &BASE.replace("d = 1.0", "d = 0.0"));
    let o = run("forward", &cfg, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("d must be positive"), "{}", stderr(&o));
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn positivity_violation_blocks_reconstruction() {
    let tmp = tempfile::tempdir().unwrap();
    let text = BASE.replace(r#"{ kind = "tanh", kappa = 6.0 }"#, r#"{ kind = "linear", slope = 1.0 }"#);
    let cfg = write_config(tmp.path(), "c.toml", &text);
    let o = run("reconstruct", &cfg, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("y0"), "{}", stderr(&o));
    assert!(run("forward", &cfg, &tmp.path().join("fwd"), &[]).status.success());
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(cbrec(&["invert"]).status.code(), Some(1));
    assert_eq!(cbrec(&["forward", "--out", "x"]).status.code(), Some(1));
    assert_eq!(cbrec(&["forward", "--config", "a", "--out", "b", "--bogus"]).status.code(), Some(1));
    assert_eq!(cbrec(&["--help"]).status.code(), Some(0));
}

#[test]
fn unreadable_config_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run("forward", &tmp.path().join("missing.toml"), &tmp.path().join("o"), &[]);
    assert_eq!(o.status.code(), Some(2));
    let cfg = write_config(tmp.path(), "c.toml", &BASE.replace("[grid]", "[grid]\nwidth = 3"));
    let o = run("forward", &cfg, &tmp.path().join("o"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("width"), "{}", stderr(&o));
}

#[test]
fn reconstruct_with_truth_reports_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", BASE);
    let out = tmp.path().join("rec");
    let o = run("reconstruct", &cfg, &out, &["--threads", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value = read_json(&out.join("report.json"), "cbrec.reconstruction").unwrap();
    let its = report["iterations"].as_array().unwrap();
    assert_eq!(its.len(), 4);
    assert!(its.iter().all(|r| r["error"].is_f64()));
    assert!(its[1]["j_value"].is_f64() && its[1]["cg_iterations"].is_u64());
    assert_eq!(report["truth_supplied"], true);
    assert_eq!(report["config"]["physics"]["p_gamma"], 0.4);
    let header = std::fs::read_to_string(out.join("iterations.csv")).unwrap();
    assert!(header.starts_with("k,error,relative_error,"));
    let pots = std::fs::read_to_string(out.join("potentials.csv")).unwrap();
    assert_eq!(pots.lines().count(), 1 + 4 * 17);
}

#[test]
fn reconstruct_from_measurement_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", BASE);
    let fwd = tmp.path().join("fwd");
    assert!(run("forward", &cfg, &fwd, &[]).status.success());
    std::fs::copy(fwd.join("flux.csv"), tmp.path().join("data.csv")).unwrap();

    let text = BASE
        .replace("p = { kind = \"sine\", amplitude = 0.5, offset = 0.3 }\np_gamma = 0.4\n", "")
        .replace("[algorithm]", "[measurement]\npath = \"data.csv\"\n\n[algorithm]");
    let cfg2 = write_config(tmp.path(), "c2.toml", &text);
    let out = tmp.path().join("rec");
    let o = run("reconstruct", &cfg2, &out, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value = read_json(&out.join("report.json"), "cbrec.reconstruction").unwrap();
    assert_eq!(report["truth_supplied"], false);
    assert!(report["iterations"][2]["error"].is_null());

    let (t, f) = read_complex_series(&tmp.path().join("data.csv")).unwrap();
    write_complex_series(&tmp.path().join("data.csv"), &t[..10], &f[..10]).unwrap();
    let o = run("reconstruct", &cfg2, &tmp.path().join("rec2"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("expected 17, found 10"), "{}", stderr(&o));
}

#[test]
fn same_seed_same_payload_and_seed_override() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg =
        write_config(tmp.path(), "c.toml", &BASE.replace("[algorithm]", "[measurement]\nsigma = 0.05\n\n[algorithm]"));
    let dirs: Vec<PathBuf> = ["a", "b", "c"].iter().map(|d| tmp.path().join(d)).collect();
    assert!(run("forward", &cfg, &dirs[0], &[]).status.success());
    assert!(run("forward", &cfg, &dirs[1], &[]).status.success());
    assert!(run("forward", &cfg, &dirs[2], &["--seed", "99"]).status.success());
    let read = |d: &Path| std::fs::read(d.join("flux.csv")).unwrap();
    assert_eq!(read(&dirs[0]), read(&dirs[1]));
    assert_ne!(read(&dirs[0]), read(&dirs[2]));
    let (m0, m1, m2) =
        (read_manifest(&dirs[0]).unwrap(), read_manifest(&dirs[1]).unwrap(), read_manifest(&dirs[2]).unwrap());
    assert_eq!(m0.reproducible_part(), m1.reproducible_part());
    assert_eq!(m2.seed, 99);
    assert_eq!(m2.config.seed, 99);
}

#[test]
fn stability_carleman_geometry_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", BASE);
    let st = tmp.path().join("st");
    assert!(run("stability", &cfg, &st, &["--threads", "2"]).status.success());
    let text = std::fs::read_to_string(st.join("ratios.csv")).unwrap();
    assert!(text.starts_with("id,amplitude,numerator,denominator,ratio,flag"));
    assert_eq!(text.lines().count(), 1 + 2 * 4);
    let summary: serde_json::Value = read_json(&st.join("summary.json"), "cbrec.stability_summary").unwrap();
    assert!(summary["min"].as_f64().unwrap() > 0.0);

    let ca = tmp.path().join("ca");
    assert!(run("carleman", &cfg, &ca, &[]).status.success());
    let text = std::fs::read_to_string(ca.join("ratios.csv")).unwrap();
    assert!(text.starts_with("set,id,s,lambda,lhs,rhs,log_scale,ratio"));
    assert_eq!(text.lines().count(), 1 + 2 * 3 * 3);
    let summary: serde_json::Value = read_json(&ca.join("summary.json"), "cbrec.carleman_summary").unwrap();
    assert_eq!(summary["s_values"].as_array().unwrap().len(), 3);

    let geo = tmp.path().join("geo");
    assert!(run("geometry", &cfg, &geo, &[]).status.success());
    let text = std::fs::read_to_string(geo.join("boundary.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 32);
    let summary: serde_json::Value = read_json(&geo.join("summary.json"), "cbrec.geometry_summary").unwrap();
    assert_eq!(summary["in_gamma_star"], 16);
}
