use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn nchns(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_nchns"));
    c.args(args).env_remove("NCHNS_THREADS");
    for (k, v) in envs {
        c.env(k, v);
    }
    c.output().expect("binary runs")
}

fn write_config(dir: &Path, extra: &str) -> PathBuf {
    let p = dir.join("run.toml");
    fs::write(
        &p,
        format!(
            "[grid]\nnx = 16\nny = 16\nlx = 5.0\nly = 5.0\n[time]\nnt = 8\n[kernel]\nsigma = 0.6\n\
             [initial]\nsource = \"presets\"\n\
             phase = {{ kind = \"bubble\", radius = 1.5, center = [2.5, 2.5], width = 0.4 }}\n\
             velocity = {{ kind = \"taylor-vortex\", amplitude = 0.5 }}\n{extra}"
        ),
    )
    .unwrap();
    p
}

fn json_lines(stderr: &[u8]) -> Vec<serde_json::Value> {
    String::from_utf8_lossy(stderr)
        .lines()
        .map(|l| serde_json::from_str(l).expect("stderr is JSON lines"))
        .collect()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn validate_default_config_passes() {
    let d = tempfile::tempdir().unwrap();
    let cfg = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/default.toml");
    let o = nchns(&["validate", "--config", cfg, "--out", s(d.path())], &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(d.path().join("resolved.toml").exists());
    assert!(d.path().join("report.json").exists());
}

#[test]
fn config_errors_exit_2_with_a_record() {
    let d = tempfile::tempdir().unwrap();
    let p = write_config(
        d.path(),
        "[bounds]\nkind = \"constant\"\nlower = 1.0\nupper = 0.0\n",
    );
    let o = nchns(&["simulate", "--config", s(&p)], &[]);
    assert_eq!(o.status.code(), Some(2));
    let recs = json_lines(&o.stderr);
    assert_eq!(recs[0]["check"], "config:bounds");
    assert_eq!(recs[0]["command"], "simulate");

    let p = write_config(d.path(), "[grid2]\nnx = 3\n");
    let o = nchns(&["validate", "--config", s(&p)], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(json_lines(&o.stderr)[0]["check"], "config:grid2");

    let o = nchns(
        &["validate", "--config", s(&d.path().join("missing.toml"))],
        &[],
    );
    assert_eq!(o.status.code(), Some(2));

    let p = write_config(d.path(), "");
    let o = nchns(
        &["validate", "--config", s(&p)],
        &[("NCHNS_THREADS", "zero")],
    );
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(json_lines(&o.stderr)[0]["check"], "config:NCHNS_THREADS");
}

#[test]
fn failed_check_exits_1_and_names_it() {
    let d = tempfile::tempdir().unwrap();
    let p = write_config(d.path(), "[viscosity]\nupper = 1.2\n");
    let out = d.path().join("o");
    let o = nchns(&["validate", "--config", s(&p), "--out", s(&out)], &[]);
    assert_eq!(o.status.code(), Some(1));
    let recs = json_lines(&o.stderr);
    assert!(recs
        .iter()
        .any(|r| r["check"] == "viscosity: mean + |modulation| <= nu_2"));
}

#[test]
fn simulate_is_deterministic() {
    let d = tempfile::tempdir().unwrap();
    let p = write_config(d.path(), "");
    let (a, b) = (d.path().join("a"), d.path().join("b"));
    for out in [&a, &b] {
        let o = nchns(
            &[
                "simulate",
                "--config",
                s(&p),
                "--out",
                s(out),
                "--seed",
                "5",
            ],
            &[("NCHNS_THREADS", "2")],
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["diagnostics.csv", "trajectory.bin"] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    let bin = fs::read(a.join("trajectory.bin")).unwrap();
    assert_eq!(&bin[..8], b"NCHNS1\0\0");
    let echo = fs::read_to_string(a.join("resolved.toml")).unwrap();
    assert!(echo.contains("seed = 5"));
}

#[test]
fn gradient_and_tangent_checks_pass() {
    let d = tempfile::tempdir().unwrap();
    let p = write_config(
        d.path(),
        "[control]\nkind = \"vortex\"\namplitude = 0.5\ngrowth = 1.0\n",
    );
    for cmd in ["tangent-check", "gradient-check"] {
        let out = d.path().join(cmd);
        let o = nchns(&[cmd, "--config", s(&p), "--out", s(&out)], &[]);
        assert!(
            o.status.success(),
            "{cmd}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
    assert!(d.path().join("tangent-check/tangent.bin").exists());
    let adj = fs::read(d.path().join("gradient-check/adjoint.bin")).unwrap();
    assert_eq!(&adj[..6], b"NCHNA1");
}

#[test]
fn optimize_writes_its_artifacts() {
    let d = tempfile::tempdir().unwrap();
    let p = write_config(
        d.path(),
        "[optimizer]\nmax_iter = 4\nstep_rule = \"barzilai-borwein\"\n",
    );
    let out = d.path().join("opt");
    let o = nchns(&["optimize", "--config", s(&p), "--out", s(&out)], &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in [
        "optimization.csv",
        "control.bin",
        "trajectory.bin",
        "diagnostics.csv",
        "report.json",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
    let log = fs::read_to_string(out.join("optimization.csv")).unwrap();
    let costs: Vec<f64> = log
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(costs.windows(2).all(|w| w[1] <= w[0]), "{costs:?}");
}
