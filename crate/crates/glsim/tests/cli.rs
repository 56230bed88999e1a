//! End-to-end checks of the command-line surfaces and file formats.

use std::fs;
use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_glsim"))
}

fn workdir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("glsim-cli-{name}-{}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn dgff_writes_replica_csv() {
    let dir = workdir("dgff");
    let out = dir.join("batch.csv");
    let status = bin()
        .args(["dgff", "--domain", "path:3", "--count", "5", "--seed", "9"])
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let text = fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "replica,site_x,site_y,value");
    // 5 replicas x 3 interior sites.
    assert_eq!(lines.count(), 15);
}

#[test]
fn langevin_env_walk_round_trip() {
    let dir = workdir("walk");
    let cfg = dir.join("run.toml");
    fs::write(
        &cfg,
        r#"
            samples = 20
            seed = 3
            dt = 0.1
            burnin = 500
            thin = 5

            [domain]
            kind = "rectangle"
            width = 3
            height = 3

            [potential]
            name = "quadratic"
        "#,
    )
    .unwrap();
    let samples = dir.join("samples.csv");
    let env = dir.join("env.bin");
    let status = bin()
        .arg("langevin")
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&samples)
        .arg("--record-env")
        .arg(&env)
        .args(["--env-steps", "1500"])
        .status()
        .unwrap();
    assert!(status.success());
    let text = fs::read_to_string(&samples).unwrap();
    assert!(text.starts_with("replica,site_x,site_y,value,time"));
    assert_eq!(text.lines().count(), 1 + 20 * 9);

    // Environment header is the documented binary format.
    let bytes = fs::read(&env).unwrap();
    assert_eq!(&bytes[..9], b"glenv v1\n");

    let exits = dir.join("exits.csv");
    let status = bin()
        .arg("hswalk")
        .arg("--env")
        .arg(&env)
        .args(["--from", "1,1", "--walks", "200", "--seed", "5"])
        .arg("--out")
        .arg(&exits)
        .status()
        .unwrap();
    assert!(status.success());
    let text = fs::read_to_string(&exits).unwrap();
    assert!(text.starts_with("walk,exit_x,exit_y,exit_time"));
    assert!(text.lines().count() > 180, "most walks should absorb");
}

#[test]
fn couple_emits_ledger_columns() {
    let dir = workdir("couple");
    let cfg = dir.join("pair.toml");
    fs::write(
        &cfg,
        r#"
            samples = 1
            seed = 11
            dt = 0.2

            [domain]
            kind = "rectangle"
            width = 4
            height = 4

            [potential]
            name = "quadratic"

            [boundary]
            kind = "constant"
            value = 1.0
        "#,
    )
    .unwrap();
    let out = dir.join("ledger.csv");
    let status = bin()
        .arg("couple")
        .arg("--config")
        .arg(&cfg)
        .args(["--psi-b", "0.0", "--steps", "500"])
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("t,sumSq,dirichlet,boundaryFlux,slack"));
    assert_eq!(text.lines().count(), 1 + 501);
}

#[test]
fn clt_functional_from_sample_csv() {
    let dir = workdir("clt");
    let batch = dir.join("batch.csv");
    let status = bin()
        .args(["dgff", "--domain", "rect:16,16", "--count", "50", "--seed", "4"])
        .arg("--out")
        .arg(&batch)
        .status()
        .unwrap();
    assert!(status.success());
    let xi = dir.join("xi.csv");
    let status = bin()
        .arg("clt")
        .arg("--samples")
        .arg(&batch)
        .args(["--testfn", "bump", "--epsilon", "1/16"])
        .arg("--out")
        .arg(&xi)
        .status()
        .unwrap();
    assert!(status.success());
    let text = fs::read_to_string(&xi).unwrap();
    assert!(text.starts_with("replica,xi"));
    assert_eq!(text.lines().count(), 51);
}

#[test]
fn interface_traces_path_csv() {
    let dir = workdir("iface");
    let cfg = dir.join("iface.toml");
    fs::write(
        &cfg,
        r#"
            samples = 30
            seed = 6

            [domain]
            kind = "rectangle"
            width = 8
            height = 8

            [potential]
            name = "quadratic"

            [boundary]
            kind = "two_sided"
            lambda = 1.0
            x = [4, -1]
            y = [3, 8]
        "#,
    )
    .unwrap();
    let out = dir.join("path.csv");
    let status = bin()
        .arg("interface")
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .arg("--diag")
        .status()
        .unwrap();
    assert!(status.success());
    let text = fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "step,dual_from_x,dual_from_y,dual_to_x,dual_to_y"
    );
    assert!(lines.count() >= 9, "path must span the domain");
    assert!(out.with_extension("diag.csv").exists());
}

#[test]
fn verify_exact_suite_exits_zero_and_writes_reports() {
    let dir = workdir("verify");
    let status = bin()
        .args(["verify", "--suite", "exact", "--seed", "2"])
        .arg("--out-dir")
        .arg(&dir)
        .status()
        .unwrap();
    assert!(status.success());
    let csv = fs::read_to_string(dir.join("reports.csv")).unwrap();
    assert!(csv.starts_with("name,estimate,stderr,ci_low,ci_high,pass,paper_ref"));
    let json = fs::read_to_string(dir.join("reports.json")).unwrap();
    assert!(json.contains("\"pass\": true"));
}
