//! End-to-end checks of the command line binary.

use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_photon-retrieval");

fn data(name: &str) -> String {
    format!("{}/tests/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(BIN)
        .args(args)
        .arg("--out")
        .arg(out)
        .arg("--quiet")
        .env_remove("PHOTON_RETRIEVAL_OUT")
        .output()
        .unwrap()
}

fn metric(csv: &str, key: &str) -> f64 {
    let mut lines = csv.lines().filter(|l| !l.starts_with('#'));
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    let i = header.iter().position(|h| *h == key).unwrap();
    row[i].parse().unwrap()
}

#[test]
fn golden_transducer_probability() {
    let golden = std::fs::read_to_string(data("golden/fig2_blue_d2.txt")).unwrap();
    let expected: f64 = golden
        .lines()
        .find_map(|l| l.strip_prefix("probability="))
        .unwrap()
        .parse()
        .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["run", &data("data/fig2_blue_d2.ini")], dir.path());
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let csv = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    let w = metric(&csv, "probability");
    assert!((w - expected).abs() <= 0.02, "W = {w}, golden {expected}");
    let spectrum = std::fs::read_to_string(dir.path().join("spectrum.csv")).unwrap();
    assert!(spectrum.starts_with("# config_sha256="));
    assert_eq!(spectrum.lines().nth(1), Some("omega,re,im,intensity"));
    assert_eq!(spectrum.lines().count(), 2 + 8001);
}

#[test]
fn both_couplings_exit_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(data("data/fig2_blue_d2.ini"))
        .unwrap()
        .replace("d = 2", "d = 2\nmu0 = 1.5");
    let cfg = dir.path().join("bad.ini");
    std::fs::write(&cfg, text).unwrap();
    let o = run(&["run", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(
        err.contains("'d'") && err.contains("'mu0'") && err.contains("line 7"),
        "{err}"
    );
}

#[test]
fn sweep_over_zero_depth() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(data("data/fig2_blue_d2.ini")).unwrap()
        + "\n[sweep]\nparameter = d\nvalues = 0\n";
    let cfg = dir.path().join("sweep.ini");
    std::fs::write(&cfg, text).unwrap();
    let o = run(&["sweep", cfg.to_str().unwrap()], dir.path());
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(
        rows[0],
        "d,probability,efficiency,fidelity_f,fidelity_n,leakage,status"
    );
    assert_eq!(rows.len(), 2);
    assert!(rows[1].starts_with("0,0,0,"), "{}", rows[1]);
}

#[test]
fn outputs_are_bit_identical_across_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [a.path(), b.path()] {
        assert_eq!(
            run(
                &[
                    "run",
                    &data("data/fig2_blue_d2.ini"),
                    "--grid-points",
                    "2001"
                ],
                dir
            )
            .status
            .code(),
            Some(0)
        );
        assert_eq!(run(&["figure", "fig2b"], dir).status.code(), Some(0));
    }
    for f in ["spectrum.csv", "metrics.csv", "fig2b.csv"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert_eq!(x, y, "{f} differs");
    }
}

#[test]
fn environment_sets_the_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("from_env");
    let o = Command::new(BIN)
        .args(["figure", "fig2a", "--quiet"])
        .env("PHOTON_RETRIEVAL_OUT", &target)
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(target.join("fig2a.csv").is_file());
    assert!(target.join("fig2a_blue.ini").is_file());
}

#[test]
fn unknown_figure_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["figure", "fig4"], dir.path()).status.code(), Some(2));
}
