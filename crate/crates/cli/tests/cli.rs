use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn evsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evsim"))
        .args(args)
        .env_remove("EVSIM_OUTPUT_ROOT")
        .output()
        .expect("spawn evsim")
}

fn config(dir: &Path, extra: &str) -> String {
    let text = format!(
        "preset = \"scenario_B\"\noutput_dir = \"{}\"\nsnapshot_times_s = [0.5, 1.0]\n{extra}\n\
         [release]\nhorizon_s = 1.0\ndt_s = 0.01\n[channel.grid]\nspacing_um = 2.0\n\
         [channel.spectral]\npoints = 128\n",
        dir.join("out").display()
    );
    let path = dir.join("scenario.toml");
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn validate_prints_hash_and_rejects_unknown_keys() {
    let tmp = tempfile::tempdir().unwrap();
    let path = config(tmp.path(), "");
    let o = evsim(&["validate", &path, "--print"]);
    assert!(o.status.success(), "{o:?}");
    let out = stdout(&o);
    assert!(out.contains("[channel.grid]"));
    assert_eq!(out.lines().last().unwrap().len(), 3 + 64);

    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "[channel]\nvelocity = [1.0, 0.0, 0.0]\n").unwrap();
    let o = evsim(&["validate", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("channel.velocity"));
}

#[test]
fn missing_config_is_a_validation_error() {
    let o = evsim(&["validate", "/nonexistent/evsim.toml"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn run_compare_and_plot() {
    let tmp = tempfile::tempdir().unwrap();
    let path = config(tmp.path(), "");
    let o = evsim(&["run", &path]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("analytic vs grid probes"));
    let out = tmp.path().join("out");
    for f in ["report.json", "timings.json", "config.resolved.toml", "receiver.csv"] {
        assert!(out.join(f).is_file(), "{f}");
    }

    let a = out.join("analytic/field.evf");
    let g = out.join("grid/field.evf");
    let o = evsim(&["compare", a.to_str().unwrap(), g.to_str().unwrap()]);
    assert!(o.status.success());
    let norms: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let linf = norms["rel_linf"].as_f64().unwrap();
    assert!(linf > 0.0 && linf < 0.2, "{linf}");

    let o = evsim(&["compare", a.to_str().unwrap(), a.to_str().unwrap(), "--margin", "50"]);
    assert_eq!(o.status.code(), Some(2));

    let o = evsim(&["compare", a.to_str().unwrap(), "/nonexistent.evf"]);
    assert_eq!(o.status.code(), Some(1));

    let charts = tmp.path().join("charts");
    let probes = out.join("analytic/probes.csv");
    let receiver = out.join("receiver.csv");
    let o = evsim(&[
        "plot",
        probes.to_str().unwrap(),
        receiver.to_str().unwrap(),
        "--out",
        charts.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["probes.svg", "receiver.svg"] {
        let svg = fs::read_to_string(charts.join(f)).unwrap();
        assert!(svg.starts_with("<svg") || svg.contains("<svg"), "{f}");
    }
}

#[test]
fn output_flag_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    let path = config(tmp.path(), "");
    let elsewhere = tmp.path().join("elsewhere");
    let o = evsim(&["run", &path, "--output", elsewhere.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(elsewhere.join("report.json").is_file());
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn unstable_receiver_exits_with_numerical_code() {
    let tmp = tempfile::tempdir().unwrap();
    let path = config(tmp.path(), "");
    let text = fs::read_to_string(&path).unwrap()
        + "[receiver]\ndt_ode_s = 0.01\n[receiver.ligand_receptor]\nkappa_d_per_s = 1000.0\n";
    fs::write(&path, text).unwrap();
    let o = evsim(&["run", &path]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("dt_ode"));
}
