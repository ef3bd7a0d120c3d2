use std::io::Write;
use std::process::{Command, Output, Stdio};

const BIN: &str = env!("CARGO_BIN_EXE_ebcc");

const SMALL_Z: &str = "\
experiment = zstat
m = 20
nonnull = 5
amplitude = 3
alpha = 0.1
alpha0 = 0.01
replications = 3
seed = 11
";

fn ebh_cli(alpha: &str, input: &str) -> Output {
    let mut child = Command::new(BIN)
        .args(["ebh", "--alpha", alpha])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

#[test]
fn ebh_prints_one_based_indices() {
    // m = 4, alpha = 0.5: e_(2) = 5 >= 4 / (0.5 * 2) = 4, e_(3) = 1 < 4 / 1.5
    let out = ebh_cli("0.5", "1\n9\n\n5\n0.5\n");
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap(), "2\n3\n");
}

#[test]
fn ebh_empty_rejection_prints_nothing() {
    let out = ebh_cli("0.1", "1\n1\n1\n");
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
}

#[test]
fn ebh_rejects_bad_input() {
    let out = ebh_cli("0.1", "1\nabc\n");
    assert!(!out.status.success());
    assert!(String::from_utf8(out.stderr).unwrap().contains("line 2"));
    assert!(!ebh_cli("0.1", "").status.success());
    assert!(!ebh_cli("0.1", "-1\n").status.success());
    assert!(!ebh_cli("1.5", "1\n").status.success());
}

#[test]
fn validate_accepts_shipped_configs() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for sub in [dir.clone(), dir.join("full")] {
        for entry in std::fs::read_dir(sub).unwrap() {
            let path = entry.unwrap().path();
            if path.extension().is_some_and(|e| e == "conf") {
                let out = Command::new(BIN).args(["validate", "--config"]).arg(&path).output().unwrap();
                assert!(out.status.success(), "{}: {}", path.display(), String::from_utf8_lossy(&out.stderr));
                assert!(String::from_utf8(out.stdout).unwrap().starts_with("ok: "));
                seen += 1;
            }
        }
    }
    assert!(seen >= 15);
}

#[test]
fn validate_reports_missing_keys() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.conf");
    std::fs::write(&cfg, "experiment = zstat\nm = 10\n").unwrap();
    let out = Command::new(BIN).args(["validate", "--config"]).arg(&cfg).output().unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("alpha") && err.contains("replications"), "{err}");
}

#[test]
fn run_output_does_not_depend_on_threads() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("z.conf");
    std::fs::write(&cfg, SMALL_Z).unwrap();
    let run = |name: &str, flag: Option<&str>, env: Option<&str>| {
        let out = dir.path().join(name);
        let mut cmd = Command::new(BIN);
        cmd.args(["run", "--config"]).arg(&cfg).arg("--out").arg(&out);
        if let Some(t) = flag {
            cmd.args(["--threads", t]);
        }
        cmd.env_remove("EBCC_THREADS");
        if let Some(t) = env {
            cmd.env("EBCC_THREADS", t);
        }
        let status = cmd.status().unwrap();
        assert!(status.success());
        std::fs::read(out).unwrap()
    };
    let a = run("a.csv", Some("1"), None);
    let b = run("b.csv", None, Some("3"));
    let c = run("c.csv", None, None);
    assert_eq!(a, b);
    assert_eq!(a, c);
    let text = String::from_utf8(a).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "method,rep,power,fdp,n_reject,n_boosted,samples,seconds,seed");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 9);
    let methods: Vec<&str> = rows.iter().map(|r| r.split(',').next().unwrap()).collect();
    assert_eq!(methods, ["BH", "BH", "BH", "e-BH", "e-BH", "e-BH", "e-BH-CC", "e-BH-CC", "e-BH-CC"]);
    assert!(rows.iter().all(|r| r.ends_with(",11")));
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("z.conf");
    std::fs::write(&cfg, SMALL_Z).unwrap();
    let out = dir.path().join("s.csv");
    let status = Command::new(BIN)
        .args(["run", "--threads", "1", "--seed", "99", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(out).unwrap();
    assert!(text.lines().skip(1).all(|r| r.ends_with(",99")));
}
