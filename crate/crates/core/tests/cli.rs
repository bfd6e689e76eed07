//! Command-line behaviour: outputs, provenance, determinism and exit codes.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use cvwaves::config::RunConfig;
use tempfile::TempDir;

fn cvwaves(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cvwaves"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn text(o: &Output) -> String {
    format!(
        "{}{}",
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    )
}

/// Rows of a CSV file after its `#` provenance block, header included.
fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let body = fs::read_to_string(path).unwrap();
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .has_headers(false)
        .from_reader(body.as_bytes());
    r.records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect()
}

fn column(rows: &[Vec<String>], name: &str) -> Vec<f64> {
    let i = rows[0].iter().position(|h| h == name).unwrap();
    rows[1..].iter().map(|r| r[i].parse().unwrap()).collect()
}

#[test]
fn kernel_study_margins_positive() {
    let tmp = TempDir::new().unwrap();
    let o = cvwaves(tmp.path(), &["kernel-study"]);
    assert_eq!(code(&o), 0, "{}", text(&o));
    let rows = csv_rows(&tmp.path().join("out/kernel_lemma.csv"));
    let margins = column(&rows, "strpos_margin");
    assert_eq!(margins.len(), 7);
    assert!(margins.iter().all(|m| *m > 0.0));
    let body = fs::read_to_string(tmp.path().join("out/kernel_scan.csv")).unwrap();
    assert!(body.starts_with(&format!("# cvwaves {}", env!("CARGO_PKG_VERSION"))));
}

#[test]
fn bifurcate_writes_table() {
    let tmp = TempDir::new().unwrap();
    let o = cvwaves(tmp.path(), &["bifurcate", "--modes", "64"]);
    assert_eq!(code(&o), 0, "{}", text(&o));
    let rows = csv_rows(&tmp.path().join("out/singularity.csv"));
    assert_eq!(rows.len(), 42);
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("out/bifurcation.json")).unwrap())
            .unwrap();
    let m = json["data"]["m_minus"].as_f64().unwrap();
    assert!((m + 2.73335).abs() < 1e-5);
}

#[test]
fn trace_verify_reconstruct_round_trip() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    let o = cvwaves(dir, &["trace", "--upsilon", "1", "-o", "a"]);
    assert_eq!(code(&o), 0, "{}", text(&o));
    let rows = csv_rows(&dir.join("a/branch.csv"));
    assert!(rows.len() > 50, "only {} rows", rows.len() - 1);
    assert!(column(&rows, "margin").iter().all(|m| *m > 0.0));
    for f in ["branch.json", "branch_diagram.dat", "profiles.dat"] {
        assert!(dir.join("a").join(f).exists(), "{f} missing");
    }

    let other = TempDir::new().unwrap();
    let again = cvwaves(other.path(), &["trace", "--upsilon", "1", "-o", "a"]);
    assert_eq!(code(&again), 0);
    for f in [
        "branch.json",
        "branch.csv",
        "branch_diagram.dat",
        "profiles.dat",
    ] {
        let a = fs::read(dir.join("a").join(f)).unwrap();
        let b = fs::read(other.path().join("a").join(f)).unwrap();
        assert!(a == b, "{f} not reproducible");
    }

    let ok = cvwaves(dir, &["verify", "a/branch.json", "-o", "v"]);
    assert_eq!(code(&ok), 0, "{}", text(&ok));

    let rec = cvwaves(
        dir,
        &["reconstruct", "a/branch.json", "--point", "20", "-o", "r"],
    );
    assert_eq!(code(&rec), 0, "{}", text(&rec));
    for f in [
        "surface.dat",
        "velocity.dat",
        "current_profile.csv",
        "reconstruct_report.json",
    ] {
        assert!(dir.join("r").join(f).exists(), "{f} missing");
    }
    let out_of_range = cvwaves(dir, &["reconstruct", "a/branch.json", "--point", "100000"]);
    assert_eq!(code(&out_of_range), 2);

    let mut doc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("a/branch.json")).unwrap()).unwrap();
    let q = doc["points"][7]["Q"].as_f64().unwrap();
    doc["points"][7]["Q"] = serde_json::json!(q * 1.001);
    fs::write(dir.join("bad.json"), serde_json::to_string(&doc).unwrap()).unwrap();
    let bad = cvwaves(dir, &["verify", "bad.json", "-o", "vb"]);
    assert_eq!(code(&bad), 4, "{}", text(&bad));
    assert!(text(&bad).contains("bernoulli_identity"));
    assert!(text(&bad).contains("point 7"));
}

#[test]
fn halt_policy_and_small_sweep() {
    let tmp = TempDir::new().unwrap();
    let o = cvwaves(
        tmp.path(),
        &[
            "sweep",
            "--modes",
            "48",
            "--set",
            "sweep.upsilons=[1.0, 5.0]",
            "--set",
            "continuation.max_points=15",
            "--workers",
            "2",
            "--policy",
            "halt",
        ],
    );
    assert_eq!(code(&o), 0, "{}", text(&o));
    let rows = csv_rows(&tmp.path().join("out/sweep.csv"));
    assert_eq!(rows.len(), 3);
    let bound = column(&rows, "bound");
    assert!(bound[1] < bound[0]);
    let amp = column(&rows, "max_amplitude");
    assert!(amp.iter().zip(&bound).all(|(a, b)| a < b));
}

#[test]
fn flags_override_file() {
    let tmp = TempDir::new().unwrap();
    fs::write(
        tmp.path().join("run.toml"),
        "[physics]\nupsilon = 3.0\ng = 9.0\n[grid]\nmodes = 40\n",
    )
    .unwrap();
    let o = cvwaves(
        tmp.path(),
        &[
            "show-config",
            "-c",
            "run.toml",
            "--upsilon",
            "2",
            "--set",
            "grid.modes=50",
        ],
    );
    assert_eq!(code(&o), 0, "{}", text(&o));
    let stdout = String::from_utf8(o.stdout).unwrap();
    let (version, body) = stdout.split_once('\n').unwrap();
    assert_eq!(version, format!("cvwaves {}", env!("CARGO_PKG_VERSION")));
    let cfg = RunConfig::from_toml(body).unwrap();
    assert_eq!(cfg.physics.upsilon, 2.0);
    assert_eq!(cfg.physics.g, 9.0);
    assert_eq!(cfg.continuation.modes, 50);
    assert_eq!(cfg.to_toml(), body);
}

#[test]
fn distinct_exit_codes() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    assert_eq!(code(&cvwaves(dir, &["frobnicate"])), 1);
    assert_eq!(code(&cvwaves(dir, &["--help"])), 0);
    fs::write(dir.join("broken.toml"), "[physics\n").unwrap();
    assert_eq!(code(&cvwaves(dir, &["trace", "-c", "broken.toml"])), 2);
    fs::write(dir.join("unknown.toml"), "[physics]\ngravity = 9.81\n").unwrap();
    assert_eq!(code(&cvwaves(dir, &["trace", "-c", "unknown.toml"])), 2);
    assert_eq!(code(&cvwaves(dir, &["trace", "--set", "grid.nodes=10"])), 2);
    assert_eq!(code(&cvwaves(dir, &["trace", "-c", "absent.toml"])), 5);
    assert_eq!(code(&cvwaves(dir, &["verify", "absent.json"])), 5);
    fs::write(dir.join("junk.json"), "{\"points\": 3}").unwrap();
    assert_eq!(code(&cvwaves(dir, &["verify", "junk.json"])), 2);
}
