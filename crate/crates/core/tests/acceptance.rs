//! Acceptance gate: one pass/fail line per criterion, with the measured
//! value, the tolerance it is held to, and the runtime budget where one
//! applies. Run with `cargo test --test acceptance -- --nocapture` to see
//! the lines for passing criteria too.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tensornet::als::{
    als, exact_subproblem, init_factors, sampled_als, sampled_subproblem, CountingSource,
};
use tensornet::network::{contract, DEFAULT_SIZE_GUARD};
use tensornet::verify::{
    exactness_suite, oracles_suite, theorem1_suite, THEOREM1_FLOOR, THEOREM1_TARGET,
};
use tensornet::{cp_format, tr_format, AlsConfig, AlsMode, DenseTensor, JSpec, Slot, TnFormat};

fn report(criterion: usize, passed: bool, detail: &str) {
    println!(
        "criterion {criterion} {} {detail}",
        if passed { "PASS" } else { "FAIL" }
    );
    assert!(passed, "criterion {criterion} failed: {detail}");
}

fn random_tensor(dims: &[usize], seed: u64) -> DenseTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = dims.iter().product();
    DenseTensor::new(
        dims.to_vec(),
        (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

/// Data drawn exactly from a format's model with seeded tensors.
fn model_tensor(format: &TnFormat, seed: u64) -> DenseTensor {
    let tensors = init_factors(format, &format.data_dims(), seed).unwrap();
    contract(&format.network(&tensors).unwrap(), None).unwrap()
}

#[test]
fn criterion_1_exact_distribution_reproduction() {
    let t0 = Instant::now();
    let suite = exactness_suite(20260825).unwrap();
    let elapsed = t0.elapsed().as_secs_f64();
    let max_dev = suite
        .checks
        .iter()
        .map(|c| c.measured)
        .fold(0.0f64, f64::max);
    let passed = suite.passed() && suite.checks.len() == 20 && elapsed < 60.0;
    report(
        1,
        passed,
        &format!(
            "conditional products reproduce brute-force leverage distributions on {} instances: \
             max |deviation| {max_dev:.3e} (tolerance 1e-10), {elapsed:.1}s (budget 60s)",
            suite.checks.len()
        ),
    );
}

#[test]
fn criterion_2_gram_equivalence() {
    let t0 = Instant::now();
    let suite = oracles_suite(20260825).unwrap();
    let elapsed = t0.elapsed().as_secs_f64();
    let gram: Vec<_> = suite
        .checks
        .iter()
        .filter(|c| c.name.starts_with("gram-"))
        .collect();
    let n_cp = gram
        .iter()
        .filter(|c| c.name.starts_with("gram-cp"))
        .count();
    let n_tr = gram
        .iter()
        .filter(|c| c.name.starts_with("gram-tr"))
        .count();
    let max_dev = gram.iter().map(|c| c.measured).fold(0.0f64, f64::max);
    let passed = gram.iter().all(|c| c.passed)
        && n_cp >= 1
        && n_tr >= 1
        && gram.len() >= 20
        && elapsed < 30.0;
    report(
        2,
        passed,
        &format!(
            "generic/CP/TR gram computations match dense AᵀA on {} checks ({n_cp} CP fast, \
             {n_tr} TR fast): max relative deviation {max_dev:.3e} (tolerance 1e-10), \
             {elapsed:.1}s (budget 30s)",
            gram.len()
        ),
    );
}

#[test]
fn criterion_3_sketching_guarantee() {
    let t0 = Instant::now();
    let suite = theorem1_suite(20260825, 200).unwrap();
    let elapsed = t0.elapsed().as_secs_f64();
    let fraction = suite.checks[0].measured;
    let passed = fraction >= THEOREM1_FLOOR && elapsed < 120.0;
    report(
        3,
        passed,
        &format!(
            "sketched solve within 1.5·OPT in {:.1}% of 200 trials at eps=0.5, delta=0.2, J=30 \
             (target ≥ {:.0}%, hard floor {:.0}%), {elapsed:.1}s (budget 120s)",
            100.0 * fraction,
            100.0 * THEOREM1_TARGET,
            100.0 * THEOREM1_FLOOR
        ),
    );
}

#[test]
fn criterion_4_exact_als_monotonicity() {
    // ten instances across CP, TR, and hand-written formats
    let chain = TnFormat::new(
        vec![
            ("u".into(), vec![4, 2]),
            ("g".into(), vec![2, 3, 2]),
            ("v".into(), vec![2, 5]),
        ],
        vec![
            (Slot::new("u", 2), Slot::new("g", 1)),
            (Slot::new("g", 3), Slot::new("v", 1)),
        ],
        vec![Slot::new("u", 1), Slot::new("g", 2), Slot::new("v", 2)],
        vec![],
        None,
    )
    .unwrap();
    let tucker = TnFormat::new(
        vec![
            ("u1".into(), vec![4, 2]),
            ("u2".into(), vec![5, 2]),
            ("u3".into(), vec![3, 2]),
            ("core".into(), vec![2, 2, 2]),
        ],
        vec![
            (Slot::new("u1", 2), Slot::new("core", 1)),
            (Slot::new("u2", 2), Slot::new("core", 2)),
            (Slot::new("u3", 2), Slot::new("core", 3)),
        ],
        vec![Slot::new("u1", 1), Slot::new("u2", 1), Slot::new("u3", 1)],
        vec![],
        None,
    )
    .unwrap();
    let pair = TnFormat::new(
        vec![("x".into(), vec![6, 2]), ("y".into(), vec![2, 7])],
        vec![(Slot::new("x", 2), Slot::new("y", 1))],
        vec![Slot::new("x", 1), Slot::new("y", 2)],
        vec![],
        None,
    )
    .unwrap();
    let formats: Vec<(String, TnFormat)> = vec![
        ("cp-654-r2".into(), cp_format(&[6, 5, 4], 2).unwrap()),
        ("cp-4444-r2".into(), cp_format(&[4, 4, 4, 4], 2).unwrap()),
        ("cp-76-r3".into(), cp_format(&[7, 6], 3).unwrap()),
        ("cp-555-r4".into(), cp_format(&[5, 5, 5], 4).unwrap()),
        ("tr-546".into(), tr_format(&[5, 4, 6], &[2, 2, 2]).unwrap()),
        (
            "tr-4444".into(),
            tr_format(&[4, 4, 4, 4], &[2, 1, 2, 1]).unwrap(),
        ),
        ("tr-663".into(), tr_format(&[6, 6, 3], &[3, 2, 2]).unwrap()),
        ("custom-chain".into(), chain),
        ("custom-tucker".into(), tucker),
        ("custom-pair".into(), pair),
    ];
    assert_eq!(formats.len(), 10);
    let mut worst: f64 = f64::NEG_INFINITY; // most positive error increase seen
    for (k, (name, format)) in formats.iter().enumerate() {
        let data = random_tensor(&format.data_dims(), 40 + k as u64);
        let cfg = AlsConfig {
            seed: 90 + k as u64,
            max_iters: 6,
            rel_change_tol: 0.0,
            ..AlsConfig::exact()
        };
        let res = als(&data, format, &cfg).unwrap();
        assert!(res.errors.len() >= 6, "{name}: expected an error per sweep");
        for pair in res.errors.windows(2) {
            worst = worst.max(pair[1] - pair[0]);
        }
    }
    let passed = worst <= 1e-12;
    report(
        4,
        passed,
        &format!(
            "exact ALS error sequences non-increasing on 10 instances (4 CP, 3 TR, 3 custom): \
             worst step increase {worst:.3e} (tolerance 1e-12)"
        ),
    );
}

#[test]
fn criterion_5_sampled_recovery() {
    let t0 = Instant::now();
    let format = cp_format(&[20, 20, 20], 3).unwrap();
    let data = model_tensor(&format, 1234);
    let mut sampled_ok = 0;
    let mut exact_ok = 0;
    for seed in 0..10u64 {
        let sampled_cfg = AlsConfig {
            seed,
            max_iters: 50,
            rel_change_tol: 1e-9,
            ..AlsConfig::sampled(JSpec::Fixed(500))
        };
        let res = sampled_als(&data, &format, &sampled_cfg).unwrap();
        if res.errors.iter().any(|&e| e <= 1e-3) {
            sampled_ok += 1;
        }
        let exact_cfg = AlsConfig {
            seed,
            max_iters: 50,
            rel_change_tol: 1e-9,
            ..AlsConfig::exact()
        };
        let res = als(&data, &format, &exact_cfg).unwrap();
        if res.errors.iter().any(|&e| e <= 1e-3) {
            exact_ok += 1;
        }
    }
    let elapsed = t0.elapsed().as_secs_f64();
    let passed = sampled_ok >= 8 && elapsed < 120.0;
    report(
        5,
        passed,
        &format!(
            "sampled ALS (J=500, ≤50 sweeps) reached rel error ≤ 1e-3 on noiseless 20×20×20 \
             rank-3 data in {sampled_ok}/10 seeds (need ≥ 8; exact-ALS baseline {exact_ok}/10), \
             {elapsed:.1}s (budget 120s)"
        ),
    );
}

#[test]
fn criterion_6_sublinear_reads() {
    let dims = [20usize; 4];
    let format = cp_format(&dims, 3).unwrap();
    let tensors = init_factors(&format, &dims, 7).unwrap();
    let data = random_tensor(&dims, 8);
    let src = CountingSource::new(&data);
    let j = 100;
    sampled_subproblem(&src, &format, &tensors, "a3", j, 42).unwrap();
    let sampled_reads = src.reads();
    src.reset();
    exact_subproblem(&src, &format, &tensors, "a3", DEFAULT_SIZE_GUARD).unwrap();
    let exact_reads = src.reads();
    let want = (j * 20) as u64;
    let total = 20u64.pow(4);
    let passed = sampled_reads == want && exact_reads == total;
    report(
        6,
        passed,
        &format!(
            "one sampled subproblem on a 20⁴ tensor read {sampled_reads} entries \
             (expected exactly J·20 = {want}); exact mode read {exact_reads} \
             (expected {total})"
        ),
    );
}

#[test]
fn criterion_7_coil_reproduction_optional() {
    let path = match std::env::var("TNET_COIL100") {
        Ok(p) if !p.is_empty() => p,
        _ => {
            println!(
                "criterion 7 SKIP set TNET_COIL100 to a 7200×128×128×3 TNSR1 file to run the \
                 external-data reproduction"
            );
            return;
        }
    };
    let t0 = Instant::now();
    let data = tensornet::io::read_tensor(&path).unwrap();
    assert_eq!(
        data.dims(),
        &[7200, 128, 128, 3],
        "unexpected COIL-100 tensor shape"
    );
    let cp_cfg = AlsConfig {
        seed: 0,
        max_iters: 25,
        rel_change_tol: 1e-4,
        ..AlsConfig::sampled(JSpec::Fixed(2000))
    };
    let cp_res = tensornet::cp_decompose(&data, 25, &cp_cfg).unwrap();
    let cp_err = cp_res.final_error();
    let tr_cfg = AlsConfig {
        seed: 0,
        max_iters: 25,
        rel_change_tol: 1e-4,
        ..AlsConfig::sampled(JSpec::Fixed(1000))
    };
    let tr_res = tensornet::tr_decompose(&data, &[5, 5, 5, 5], &tr_cfg).unwrap();
    let tr_err = tr_res.final_error();
    let elapsed = t0.elapsed().as_secs_f64();
    let passed = (0.29..=0.35).contains(&cp_err) && (0.30..=0.36).contains(&tr_err);
    report(
        7,
        passed,
        &format!(
            "COIL-100: CP R=25 J=2000 rel error {cp_err:.4} (want 0.29..0.35); \
             TR ranks (5,5,5,5) J=1000 rel error {tr_err:.4} (want 0.30..0.36); {elapsed:.0}s"
        ),
    );
}

/// The per-subproblem sampled solve agrees with the exact one in
/// distributional terms: median-of-seeds final error within 2× of the exact
/// final error on a small model instance (a cheap end-to-end cross-check
/// backing criterion 5).
#[test]
fn sampled_error_tracks_exact_baseline() {
    let format = cp_format(&[10, 10, 10], 2).unwrap();
    let data = {
        // exact model plus small noise so neither run reaches zero error
        let clean = model_tensor(&format, 55);
        let noise = random_tensor(&[10, 10, 10], 56);
        let scale = 0.05 * clean.frobenius_norm() / noise.frobenius_norm();
        let vals: Vec<f64> = clean
            .values()
            .iter()
            .zip(noise.values())
            .map(|(c, n)| c + scale * n)
            .collect();
        DenseTensor::new(vec![10, 10, 10], vals).unwrap()
    };
    let exact_cfg = AlsConfig {
        seed: 3,
        max_iters: 20,
        rel_change_tol: 1e-8,
        ..AlsConfig::exact()
    };
    let exact_err = als(&data, &format, &exact_cfg).unwrap().final_error();
    let mut finals: Vec<f64> = (0..9u64)
        .map(|seed| {
            let cfg = AlsConfig {
                seed,
                max_iters: 20,
                rel_change_tol: 1e-8,
                mode: AlsMode::Sampled(JSpec::Fixed(300)),
                ..AlsConfig::default()
            };
            sampled_als(&data, &format, &cfg).unwrap().final_error()
        })
        .collect();
    finals.sort_by(f64::total_cmp);
    let median = finals[finals.len() / 2];
    assert!(
        median <= 2.0 * exact_err,
        "median sampled error {median} vs exact {exact_err}"
    );
}

/// Sampled ALS is reproducible end to end: same config, same result.
#[test]
fn acceptance_determinism_spot_check() {
    let format = cp_format(&[8, 8, 8], 2).unwrap();
    let data = model_tensor(&format, 77);
    let cfg = AlsConfig {
        seed: 5,
        max_iters: 5,
        ..AlsConfig::sampled(JSpec::Fixed(80))
    };
    let a = sampled_als(&data, &format, &cfg).unwrap();
    let b = sampled_als(&data, &format, &cfg).unwrap();
    let eq = |x: &BTreeMap<String, DenseTensor>, y: &BTreeMap<String, DenseTensor>| {
        x.iter()
            .zip(y)
            .all(|((ka, ta), (kb, tb))| ka == kb && ta.values() == tb.values())
    };
    assert!(eq(&a.tensors, &b.tensors));
    assert_eq!(a.errors, b.errors);
}
