//! End-to-end tests of the `tnet` binary: generation determinism, the
//! noise-level contract, decomposition outputs, sketch emission, and the
//! verify plumbing.

use std::path::Path;
use std::process::{Command, Output};

use tensornet::io::read_tensor;

fn tnet(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tnet"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], dir: &Path) -> Output {
    let out = tnet(args, dir);
    assert!(
        out.status.success(),
        "tnet {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// metrics.csv parsed into (iter, time_s, rel_error) string triples.
fn read_metrics(path: &Path) -> Vec<(String, String, String)> {
    let text = std::fs::read_to_string(path).expect("metrics exists");
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("iter,time_s,rel_error"));
    lines
        .map(|l| {
            let mut parts = l.split(',').map(String::from);
            (
                parts.next().unwrap(),
                parts.next().unwrap(),
                parts.next().unwrap(),
            )
        })
        .collect()
}

#[test]
fn gen_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        &[
            "gen", "cp", "--dims", "5,4,3", "--rank", "2", "--seed", "9", "--output", "a.tnsr",
        ],
        d,
    );
    ok(
        &[
            "gen", "cp", "--dims", "5,4,3", "--rank", "2", "--seed", "9", "--output", "b.tnsr",
        ],
        d,
    );
    ok(
        &[
            "gen", "cp", "--dims", "5,4,3", "--rank", "2", "--seed", "10", "--output", "c.tnsr",
        ],
        d,
    );
    let a = std::fs::read(d.join("a.tnsr")).unwrap();
    let b = std::fs::read(d.join("b.tnsr")).unwrap();
    let c = std::fs::read(d.join("c.tnsr")).unwrap();
    assert_eq!(a, b, "same seed must produce identical bytes");
    assert_ne!(a, c, "different seeds must differ");
}

#[test]
fn gen_noise_level_is_exact_by_construction() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let base = &[
        "gen", "tr", "--dims", "6,5,4", "--ranks", "2,2,2", "--seed", "3",
    ];
    ok(
        &[base, &["--noise-level", "0", "--output", "clean.tnsr"][..]].concat(),
        d,
    );
    ok(
        &[
            base,
            &["--noise-level", "0.1", "--output", "noisy.tnsr"][..],
        ]
        .concat(),
        d,
    );
    let clean = read_tensor(d.join("clean.tnsr")).unwrap();
    let noisy = read_tensor(d.join("noisy.tnsr")).unwrap();
    let mut diff = 0.0;
    for (x, y) in noisy.values().iter().zip(clean.values()) {
        diff += (x - y) * (x - y);
    }
    let ratio = diff.sqrt() / clean.frobenius_norm();
    assert!((ratio - 0.1).abs() < 1e-12, "measured noise ratio {ratio}");
}

#[test]
fn decompose_exact_writes_monotone_metrics_and_factors() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        &[
            "gen", "cp", "--dims", "6,6,6", "--rank", "2", "--seed", "1", "--output", "x.tnsr",
        ],
        d,
    );
    ok(
        &[
            "decompose",
            "--input",
            "x.tnsr",
            "--format",
            "cp",
            "--rank",
            "2",
            "--tol",
            "1e-12",
            "--iters",
            "150",
            "--seed",
            "2",
            "--output",
            "out",
        ],
        d,
    );
    let rows = read_metrics(&d.join("out/metrics.csv"));
    assert!(!rows.is_empty());
    let errs: Vec<f64> = rows.iter().map(|r| r.2.parse().unwrap()).collect();
    for pair in errs.windows(2) {
        assert!(pair[1] <= pair[0] + 1e-12, "rel_error increased: {pair:?}");
    }
    assert!(
        *errs.last().unwrap() <= 1e-6,
        "final error {}",
        errs.last().unwrap()
    );
    for id in ["a1", "a2", "a3", "lam"] {
        let t = read_tensor(d.join(format!("out/factor_{id}.tnsr"))).unwrap();
        if id == "lam" {
            assert_eq!(t.dims(), &[2, 2, 2]);
        } else {
            assert_eq!(t.dims(), &[6, 2]);
        }
    }
}

#[test]
fn decompose_sampled_is_deterministic_modulo_timing() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        &[
            "gen", "cp", "--dims", "6,6,6", "--rank", "2", "--seed", "4", "--output", "x.tnsr",
        ],
        d,
    );
    let args = [
        "decompose",
        "--input",
        "x.tnsr",
        "--format",
        "cp",
        "--rank",
        "2",
        "--mode",
        "sampled",
        "--samples",
        "60",
        "--iters",
        "6",
        "--tol",
        "1e-12",
        "--seed",
        "8",
    ];
    ok(&[&args[..], &["--output", "r1"]].concat(), d);
    ok(&[&args[..], &["--output", "r2"]].concat(), d);
    let m1 = read_metrics(&d.join("r1/metrics.csv"));
    let m2 = read_metrics(&d.join("r2/metrics.csv"));
    assert_eq!(m1.len(), m2.len());
    for (a, b) in m1.iter().zip(&m2) {
        assert_eq!(a.0, b.0, "iter column must match");
        assert_eq!(a.2, b.2, "rel_error column must match byte for byte");
    }
    for id in ["a1", "a2", "a3", "lam"] {
        let f1 = std::fs::read(d.join(format!("r1/factor_{id}.tnsr"))).unwrap();
        let f2 = std::fs::read(d.join(format!("r2/factor_{id}.tnsr"))).unwrap();
        assert_eq!(f1, f2, "factor {id} must be byte-identical");
    }
}

#[test]
fn decompose_accepts_custom_format_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        &[
            "gen", "noise", "--dims", "4,3,5", "--seed", "5", "--output", "x.tnsr",
        ],
        d,
    );
    std::fs::write(
        d.join("chain.toml"),
        r#"
bonds = [["u.2", "g.1"], ["g.3", "v.1"]]
data_modes = ["u.1", "g.2", "v.2"]

[[nodes]]
id = "u"
n_modes = 2

[[nodes]]
id = "g"
n_modes = 3

[[nodes]]
id = "v"
n_modes = 2

[extents]
"u.1" = 4
"u.2" = 2
"g.1" = 2
"g.2" = 3
"g.3" = 2
"v.1" = 2
"v.2" = 5
"#,
    )
    .unwrap();
    ok(
        &[
            "decompose",
            "--input",
            "x.tnsr",
            "--format",
            "chain.toml",
            "--iters",
            "8",
            "--seed",
            "6",
            "--output",
            "out",
        ],
        d,
    );
    let rows = read_metrics(&d.join("out/metrics.csv"));
    assert!(!rows.is_empty());
    for id in ["u", "g", "v"] {
        assert!(d.join(format!("out/factor_{id}.tnsr")).exists());
    }
}

#[test]
fn sample_emits_deterministic_sketches() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        &[
            "gen", "noise", "--dims", "4,3", "--seed", "2", "--output", "a.tnsr",
        ],
        d,
    );
    ok(
        &[
            "gen", "noise", "--dims", "3,5,2", "--seed", "3", "--output", "b.tnsr",
        ],
        d,
    );
    std::fs::write(
        d.join("mat.toml"),
        r#"
bonds = [["a.2", "b.1"]]
rows = [["d1", "a.1"], ["d2", "b.2"]]
cols = [["c1", "b.3"]]

[[tensors]]
id = "a"
path = "a.tnsr"

[[tensors]]
id = "b"
path = "b.tnsr"
"#,
    )
    .unwrap();
    let args = [
        "sample",
        "--input",
        "mat.toml",
        "--samples",
        "12",
        "--seed",
        "7",
    ];
    ok(&[&args[..], &["--output", "s1.csv"]].concat(), d);
    ok(&[&args[..], &["--output", "s2.csv"]].concat(), d);
    let s1 = std::fs::read_to_string(d.join("s1.csv")).unwrap();
    let s2 = std::fs::read(d.join("s2.csv")).unwrap();
    assert_eq!(
        s1.as_bytes(),
        &s2[..],
        "sketch output must be byte-identical"
    );
    let lines: Vec<&str> = s1.lines().collect();
    assert_eq!(lines[0], "draw,linear,prob,weight,i1,i2");
    assert_eq!(lines.len(), 13, "header plus 12 draws");
    for l in &lines[1..] {
        let parts: Vec<&str> = l.split(',').collect();
        assert_eq!(parts.len(), 6);
        assert!(
            parts[3].parse::<f64>().unwrap() > 0.0,
            "weights are positive"
        );
        let i1: usize = parts[4].parse().unwrap();
        let i2: usize = parts[5].parse().unwrap();
        assert!((1..=4).contains(&i1) && (1..=20).contains(&i2));
    }
    // bound-derived sketch size: R=2, eps=0.5, delta=0.2 gives J=20
    let out = ok(
        &[
            "sample",
            "--input",
            "mat.toml",
            "--epsilon",
            "0.5",
            "--delta",
            "0.2",
            "--seed",
            "7",
        ],
        d,
    );
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(
        text.lines().count(),
        21,
        "header plus sample_size(2,0.5,0.2,1)=20 draws"
    );
}

#[test]
fn verify_reports_pass_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(
        &[
            "verify", "--suite", "theorem1", "--trials", "10", "--seed", "4",
        ],
        dir.path(),
    );
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("suite theorem1: PASS"), "{text}");
    assert!(text.contains("measured="), "{text}");
}

#[test]
fn bad_invocations_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    // cp without --rank
    ok(
        &[
            "gen", "noise", "--dims", "3,3,3", "--seed", "1", "--output", "x.tnsr",
        ],
        d,
    );
    let out = tnet(
        &[
            "decompose",
            "--input",
            "x.tnsr",
            "--format",
            "cp",
            "--output",
            "o",
        ],
        d,
    );
    assert!(!out.status.success());
    // missing input file
    let out = tnet(
        &[
            "decompose",
            "--input",
            "nope.tnsr",
            "--format",
            "cp",
            "--rank",
            "2",
            "--output",
            "o",
        ],
        d,
    );
    assert!(!out.status.success());
    // sampled mode without a sketch size
    let out = tnet(
        &[
            "decompose",
            "--input",
            "x.tnsr",
            "--format",
            "cp",
            "--rank",
            "2",
            "--mode",
            "sampled",
            "--output",
            "o",
        ],
        d,
    );
    assert!(!out.status.success());
    // sampling flags in exact mode
    let out = tnet(
        &[
            "decompose",
            "--input",
            "x.tnsr",
            "--format",
            "cp",
            "--rank",
            "2",
            "--samples",
            "10",
            "--output",
            "o",
        ],
        d,
    );
    assert!(!out.status.success());
    // zero extent
    let out = tnet(
        &[
            "gen", "noise", "--dims", "3,0", "--seed", "1", "--output", "z.tnsr",
        ],
        d,
    );
    assert!(!out.status.success());
}
