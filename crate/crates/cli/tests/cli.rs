use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn ccm(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ccm"))
        .current_dir(dir)
        .env_remove("CCM_OUT_DIR")
        .args(args)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn read(dir: &Path, p: &str) -> Vec<u8> {
    fs::read(dir.join(p)).unwrap_or_else(|e| panic!("{p}: {e}"))
}

const SUBCOMMANDS: [&str; 7] = [
    "generate",
    "infer",
    "simulate",
    "wphi-study",
    "realize-mm",
    "ingest-vgl",
    "diagnose",
];

#[test]
fn help_exits_zero_everywhere() {
    let d = TempDir::new().unwrap();
    let top = ccm(d.path(), &["--help"]);
    assert_eq!(code(&top), 0);
    for s in SUBCOMMANDS {
        let o = ccm(d.path(), &[s, "--help"]);
        assert_eq!(code(&o), 0, "{s}");
        assert!(String::from_utf8_lossy(&o.stdout).contains("Usage"), "{s}");
    }
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let d = TempDir::new().unwrap();
    assert_eq!(code(&ccm(d.path(), &["infer", "--bogus"])), 1);
    assert_eq!(code(&ccm(d.path(), &["frobnicate"])), 1);
}

fn write_observation(d: &Path, mask: &str) {
    fs::write(d.join("edges.txt"), "0 1\n1 2\n2 3\n4 5\n").unwrap();
    fs::write(d.join("mask.txt"), mask).unwrap();
}

#[test]
fn mask_outside_the_network_is_a_data_error() {
    let d = TempDir::new().unwrap();
    write_observation(d.path(), "0\n1\n2\n3\n12\n");
    let o = ccm(
        d.path(),
        &[
            "infer",
            "--edges",
            "edges.txt",
            "--mask",
            "mask.txt",
            "--mapping",
            "degree",
            "--n",
            "6",
        ],
    );
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert_eq!(err.trim().lines().count(), 1, "{err}");
}

#[test]
fn observed_edge_on_unknown_dyad_is_a_data_error() {
    let d = TempDir::new().unwrap();
    write_observation(d.path(), "0\n1\n2\n3\n");
    let o = ccm(
        d.path(),
        &[
            "infer",
            "--edges",
            "edges.txt",
            "--mask",
            "mask.txt",
            "--mapping",
            "degree",
        ],
    );
    assert_eq!(code(&o), 2);
}

#[test]
fn invalid_settings_are_usage_errors() {
    let d = TempDir::new().unwrap();
    write_observation(d.path(), "0\n1\n2\n3\n4\n5\n");
    let o = ccm(
        d.path(),
        &[
            "infer",
            "--edges",
            "edges.txt",
            "--mask",
            "mask.txt",
            "--mapping",
            "degree",
            "--outer-iterations",
            "0",
        ],
    );
    assert_eq!(code(&o), 1);
}

#[test]
fn generate_is_reproducible_across_worker_counts() {
    let d = TempDir::new().unwrap();
    let run = |out: &str, workers: &str| {
        let o = ccm(
            d.path(),
            &[
                "--seed",
                "7",
                "--workers",
                workers,
                "-o",
                out,
                "generate",
                "--mapping",
                "degree",
                "--n",
                "30",
                "--nb-size",
                "2",
                "--nb-mu",
                "3",
                "--iterations",
                "20000",
                "--burn-in",
                "1000",
                "--thin",
                "100",
            ],
        );
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    };
    run("a", "1");
    run("b", "4");
    for f in ["chain.csv", "run.csv", "manifest.toml"] {
        assert_eq!(
            read(d.path(), &format!("a/{f}")),
            read(d.path(), &format!("b/{f}")),
            "{f}"
        );
    }
    let chain = String::from_utf8(read(d.path(), "a/chain.csv")).unwrap();
    assert_eq!(chain.lines().count(), 1 + 190);
}

fn infer_args<'a>(out: &'a str, iters: &'a str) -> Vec<&'a str> {
    vec![
        "--seed",
        "3",
        "-o",
        out,
        "infer",
        "--edges",
        "edges.txt",
        "--mask",
        "mask.txt",
        "--mapping",
        "degree",
        "--n",
        "8",
        "--outer-iterations",
        iters,
        "--outer-burn-in",
        "5",
    ]
}

#[test]
fn resumed_inference_continues_the_same_chain() {
    let d = TempDir::new().unwrap();
    write_observation(d.path(), "0\n1\n2\n3\n");
    fs::write(d.path().join("edges.txt"), "0 1\n1 2\n2 3\n").unwrap();
    assert_eq!(code(&ccm(d.path(), &infer_args("full", "60"))), 0);
    assert_eq!(code(&ccm(d.path(), &infer_args("half", "30"))), 0);
    let mut resumed = infer_args("rest", "60");
    resumed.extend(["--resume", "half/checkpoint.txt"]);
    let o = ccm(d.path(), &resumed);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        read(d.path(), "full/checkpoint.txt"),
        read(d.path(), "rest/checkpoint.txt")
    );
    assert_eq!(
        read(d.path(), "full/network.txt"),
        read(d.path(), "rest/network.txt")
    );
}

#[test]
fn realize_mm_writes_the_requested_matrix_or_rejects_it() {
    let d = TempDir::new().unwrap();
    fs::write(d.path().join("mm.txt"), "2 3\n3 1\n").unwrap();
    let o = ccm(
        d.path(),
        &[
            "-o",
            "ok",
            "realize-mm",
            "--matrix",
            "mm.txt",
            "--class-sizes",
            "3,2",
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let edges = String::from_utf8(read(d.path(), "ok/edges.txt")).unwrap();
    assert_eq!(
        edges
            .lines()
            .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
            .count(),
        6
    );

    fs::write(d.path().join("bad.txt"), "4 3\n3 1\n").unwrap();
    let o = ccm(
        d.path(),
        &[
            "-o",
            "bad",
            "realize-mm",
            "--matrix",
            "bad.txt",
            "--class-sizes",
            "3,2",
        ],
    );
    assert_eq!(code(&o), 2);
}

#[test]
fn simulate_is_reproducible_across_worker_counts() {
    let d = TempDir::new().unwrap();
    let run = |out: &str, workers: &str| {
        let o = ccm(
            d.path(),
            &[
                "--seed",
                "11",
                "--workers",
                workers,
                "-o",
                out,
                "simulate",
                "--scenario",
                "degree",
                "--n",
                "80",
                "--replications",
                "3",
                "--fractions",
                "0.5",
                "--outer-iterations",
                "40",
                "--outer-burn-in",
                "10",
            ],
        );
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    };
    run("a", "1");
    run("b", "4");
    for f in [
        "results.csv",
        "replications.csv",
        "diagnostics.csv",
        "manifest.toml",
    ] {
        assert_eq!(
            read(d.path(), &format!("a/{f}")),
            read(d.path(), &format!("b/{f}")),
            "{f}"
        );
    }
}
