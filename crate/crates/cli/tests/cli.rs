use std::process::{Command, Output};

fn chernsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chernsim")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn result(o: &Output) -> toml::Table {
    stdout(o).parse::<toml::Table>().unwrap()["result"].as_table().unwrap().clone()
}

#[test]
fn chern_reports_oracle_sign() {
    for (phi, c) in [("pi/2", 1), ("-pi/2", -1)] {
        let r = result(&chernsim(&["chern", "--phi", phi]));
        assert_eq!(r["value"].as_integer(), Some(c), "{r:?}");
    }
}

#[test]
fn detect_reports_patterns_and_oracle() {
    for (phi, c) in [("pi/2", 1), ("-pi/2", -1)] {
        let r = result(&chernsim(&["detect", "--phi", phi]));
        let report = r["report"].as_table().unwrap();
        assert_eq!(report["oracle_c"].as_integer(), Some(c));
        assert_eq!(report["pattern_chern"].as_integer(), Some(c));
        let est = report["c_estimate"].as_float().unwrap();
        assert_eq!(est.signum() as i64, c);
    }
}

#[test]
fn gapless_point_exits_with_record() {
    let o = chernsim(&["chern", "--phi", "0"]);
    assert_eq!(o.status.code(), Some(4));
    let err: toml::Table = String::from_utf8(o.stderr).unwrap().parse().unwrap();
    assert_eq!(err["error"]["code"].as_str(), Some("GAPLESS_POINT"));
    assert_eq!(err["error"]["exit_code"].as_integer(), Some(4));
}

#[test]
fn invalid_params_exit_code() {
    let o = chernsim(&["chern", "--t=-1"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn print_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let text = stdout(&chernsim(&["--print-config", "--tprime", "0.2", "--leg-time", "150", "--no-echo"]));
    let path = dir.path().join("run.toml");
    std::fs::write(&path, &text).unwrap();
    let again = stdout(&chernsim(&["--print-config", "--config", path.to_str().unwrap()]));
    assert_eq!(text, again);
    assert!(text.contains("tprime = 0.2"));
    assert!(text.contains("echo = false"));
}

#[test]
fn command_line_overrides_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    std::fs::write(&path, "[model]\ntprime = 0.3\nphi = \"-pi/2\"\n").unwrap();
    let text = stdout(&chernsim(&["--print-config", "--config", path.to_str().unwrap(), "--tprime", "0.15"]));
    let cfg: toml::Table = text.parse().unwrap();
    assert_eq!(cfg["model"]["tprime"].as_float(), Some(0.15));
    assert!((cfg["model"]["phi"].as_float().unwrap() + std::f64::consts::FRAC_PI_2).abs() < 1e-15);
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "[model]\ntprim = 0.1\n").unwrap();
    let o = chernsim(&["chern", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("CONFIG"));
}

#[test]
fn out_dir_receives_record_and_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    let listed = stdout(&chernsim(&["sweep", "--trials", "3", "--radii", "0.1", "--out", out.to_str().unwrap()]));
    assert_eq!(listed.lines().count(), 3);
    for name in ["sweep.toml", "sweep.dsv", "sweep_trials.dsv"] {
        assert!(out.join(name).is_file(), "{name} missing");
    }
    let trials = std::fs::read_to_string(out.join("sweep_trials.dsv")).unwrap();
    assert_eq!(trials.lines().count(), 1 + 3);
}

#[test]
fn dsv_tables_have_consistent_width() {
    for cmd in ["bands", "zak", "fringe", "protocol"] {
        let text = stdout(&chernsim(&[cmd, "--format", "dsv"]));
        let widths: Vec<usize> = text.lines().map(|l| l.split(',').count()).collect();
        assert!(widths.len() > 1, "{cmd}");
        assert!(widths.iter().all(|&w| w == widths[0]), "{cmd}: {widths:?}");
    }
}

#[test]
fn config_hash_tracks_configuration() {
    let hash = |args: &[&str]| {
        let doc: toml::Table = stdout(&chernsim(args)).parse().unwrap();
        doc["artifact"]["config_hash"].as_str().unwrap().to_string()
    };
    let a = hash(&["chern"]);
    assert_eq!(a.len(), 64);
    assert_eq!(a, hash(&["chern"]));
    assert_ne!(a, hash(&["chern", "--tprime", "0.2"]));
}

#[test]
fn tdse_fringe_reports_leakage() {
    let r = result(&chernsim(&["fringe", "--mode", "tdse", "--leg-time", "20", "--site", "I"]));
    let text = toml::to_string(&r).unwrap();
    assert!(text.contains("leakage"), "{text}");
}
