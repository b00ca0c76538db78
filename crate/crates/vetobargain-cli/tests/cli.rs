use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vetobargain"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

const UNIFORM_SWEEP: &str = r#"
delta_list = [0.9, 0.99]

[distribution]
family = "uniform"
lower = 0.2
upper = 1.0

[grid]
points = 400
"#;

fn sweep_in(dir: &TempDir, out: &str) -> (Output, PathBuf) {
    let cfg = write_config(dir.path(), "sweep.toml", UNIFORM_SWEEP);
    let out = dir.path().join(out);
    let o = run(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--format",
        "json,csv,svg",
    ]);
    (o, out)
}

#[test]
fn sweep_csv_has_provenance_then_exact_columns() {
    let dir = TempDir::new().unwrap();
    let (o, out) = sweep_in(&dir, "a");
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let mut lines = text.lines();
    let prov = lines.next().unwrap();
    assert!(prov.starts_with("# config_sha256="), "{prov}");
    assert!(prov.ends_with(concat!("vetobargain ", env!("CARGO_PKG_VERSION"))));
    assert_eq!(lines.next().unwrap(), "delta,payoff,benchmark,gap");
    assert_eq!(lines.count(), 2);
    assert!(out.join("sweep.svg").exists());
    assert!(out.join("sweep.json").exists());
}

#[test]
fn reruns_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let (a, out_a) = sweep_in(&dir, "a");
    let (b, out_b) = sweep_in(&dir, "b");
    assert!(a.status.success() && b.status.success());
    for f in ["sweep.csv", "sweep.json", "sweep.svg"] {
        assert_eq!(
            fs::read(out_a.join(f)).unwrap(),
            fs::read(out_b.join(f)).unwrap(),
            "{f} differs"
        );
    }
}

#[test]
fn seeded_traces_are_reproducible() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "tt.toml",
        "[two_type]\nl = 0.3\nh = 0.55\ndelta = 0.99\nmu0 = 0.7\n",
    );
    let go = |out: &str, seed: &str| {
        let out = dir.path().join(out);
        let o = run(&[
            "two-type",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--seed",
            seed,
            "--simulate",
            "50",
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        fs::read(out.join("two_type_traces.csv")).unwrap()
    };
    assert_eq!(go("a", "3"), go("b", "3"));
    assert_ne!(go("a", "3"), go("c", "4"));
    let json = fs::read_to_string(dir.path().join("a/two_type.json")).unwrap();
    assert!(json.contains("\"region\": \"leapfrogging\""));
}

#[test]
fn simulate_without_seed_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "tt.toml",
        "[two_type]\nl = 0.3\nh = 0.55\ndelta = 0.99\nmu0 = 0.7\n",
    );
    let out = dir.path().join("o");
    let o = run(&[
        "two-type",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--simulate",
        "5",
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn undefined_threshold_is_a_gate() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "tt.toml",
        "[two_type]\nl = 0.3\nh = 0.55\ndelta = 0.2\nmu0 = 0.7\n",
    );
    let out = dir.path().join("o");
    let o = run(&[
        "two-type",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
}

#[test]
fn leapfrog_outside_support_hypothesis_is_a_gate() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "lf.toml",
        "delta_list = [0.9]\n[distribution]\nfamily = \"uniform\"\nlower = 0.2\nupper = 1.0\n",
    );
    let out = dir.path().join("o");
    let o = run(&[
        "leapfrog",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn corrupted_profile_fails_verification() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "v.toml",
        "[two_type]\nl = 0.3\nh = 0.55\ndelta = 0.9\nmu0 = 0.7\n[verify]\nmutation = \"off_path_belief\"\n",
    );
    let out = dir.path().join("o");
    let o = run(&[
        "verify",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let report = fs::read_to_string(out.join("verify.json")).unwrap();
    assert!(report.contains("\"passed\": false"));
}

#[test]
fn intact_profile_passes_verification() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "v.toml",
        "[two_type]\nl = 0.3\nh = 0.55\ndelta = 0.9\nmu0 = 0.7\n",
    );
    let out = dir.path().join("o");
    let o = run(&[
        "verify",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
}

#[test]
fn static_reports_uniform_threshold() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "s.toml",
        "[distribution]\nfamily = \"uniform\"\nlower = 0.0\nupper = 1.0\n",
    );
    let out = dir.path().join("o");
    let o = run(&[
        "static",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--format",
        "json",
    ]);
    assert!(o.status.success());
    let v: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("static.json")).unwrap()).unwrap();
    assert!(v["c_star"].as_f64().unwrap().abs() < 1e-9);
    assert!((v["U"].as_f64().unwrap() - 0.5).abs() < 1e-6);
}

#[test]
fn bad_usage_exits_one() {
    assert_eq!(run(&[]).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["static"]).status.code(), Some(1));
    assert_eq!(run(&["static", "--format", "pdf"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));

    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", "delta_list = [0.9]\nsed = 1\n");
    let o = run(&["static", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("sed"));
    let cfg = write_config(dir.path(), "nodist.toml", "delta_list = [0.9]\n");
    assert_eq!(
        run(&["static", "--config", cfg.to_str().unwrap()])
            .status
            .code(),
        Some(1)
    );
}
