use radcal::cli::{run, EXIT_DATA, EXIT_OK, EXIT_USAGE};

fn radcal(args: &[&str]) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = run(std::iter::once("radcal").chain(args.iter().copied()), &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

struct Workspace(tempfile::TempDir);

impl Workspace {
    fn new() -> Self {
        let ws = Self(tempfile::tempdir().unwrap());
        let (code, _, err) = radcal(&[
            "simulate", "--out", &ws.path("data.toml"), "--seed", "2", "--frames", "6", "--samples-per-target", "4",
            "--init-config", &ws.path("init.toml"),
        ]);
        assert_eq!(code, EXIT_OK, "{err}");
        ws
    }

    fn path(&self, name: &str) -> String {
        self.0.path().join(name).to_str().unwrap().to_string()
    }
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(radcal(&[]).0, EXIT_USAGE);
    assert_eq!(radcal(&["calibrate"]).0, EXIT_USAGE);
    assert_eq!(radcal(&["frobnicate"]).0, EXIT_USAGE);
}

#[test]
fn help_and_version_exit_zero() {
    let (code, out, _) = radcal(&["--help"]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("calibrate"));
    assert_eq!(radcal(&["--version"]).0, EXIT_OK);
}

#[test]
fn data_errors_exit_two() {
    let ws = Workspace::new();
    let (code, _, err) = radcal(&["calibrate", "--data", &ws.path("missing.toml")]);
    assert_eq!(code, EXIT_DATA);
    assert!(err.contains("missing.toml"), "{err}");
    let (code, _, err) = radcal(&["calibrate", "--data", &ws.path("data.toml"), "--set", "weights.bogus=1"]);
    assert_eq!(code, EXIT_DATA);
    assert!(err.contains("bogus"), "{err}");
    std::fs::write(ws.path("broken.toml"), "format = 3").unwrap();
    assert_eq!(radcal(&["evaluate", "--data", &ws.path("broken.toml")]).0, EXIT_DATA);
}

#[test]
fn calibrate_reports_and_checkpoints() {
    let ws = Workspace::new();
    let (code, out, err) = radcal(&[
        "calibrate", "--data", &ws.path("data.toml"), "--config", &ws.path("init.toml"), "--set", "iterations=20",
        "--report", &ws.path("r.csv"), "--checkpoint", &ws.path("net.txt"),
    ]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert!(!out.is_empty());
    let csv = std::fs::read_to_string(ws.path("r.csv")).unwrap();
    assert!(csv.starts_with("# radcal calibrate"));
    assert!(csv.lines().any(|l| l.starts_with("# config:")));
    assert!(csv.lines().last().unwrap().starts_with("final"));
    let (code, out, err) = radcal(&[
        "evaluate", "--data", &ws.path("data.toml"), "--config", &ws.path("init.toml"), "--checkpoint", &ws.path("net.txt"),
        "--truth",
    ]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert!(!out.is_empty());
}

#[test]
fn montecarlo_writes_quantile_rows() {
    let ws = Workspace::new();
    let (code, _, err) = radcal(&[
        "montecarlo", "--data", &ws.path("data.toml"), "--config", &ws.path("init.toml"), "--set", "iterations=5",
        "--set", "weights.mlp=0", "--runs", "4", "--report", &ws.path("mc.csv"),
    ]);
    assert_eq!(code, EXIT_OK, "{err}");
    let csv = std::fs::read_to_string(ws.path("mc.csv")).unwrap();
    for row in ["q1", "median", "q3", "iqr"] {
        assert!(csv.lines().any(|l| l.starts_with(row)), "{row} missing");
    }
}
