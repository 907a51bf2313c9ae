//! Runnable verification suites.
//!
//! Three suites, each a list of named pass/fail checks with the measured
//! deviation and the threshold it was held to:
//!
//! * `exactness` — on a standard set of random instances, the product of
//!   sequential conditionals reproduces the brute-force leverage-score
//!   distribution row by row.
//! * `theorem1` — the sketch-and-solve guarantee: over many seeded trials,
//!   the sampled solution's residual stays within (1+eps) of optimal at the
//!   sample size the bound prescribes.
//! * `oracles` — independent cross-checks: Gram-network contraction against
//!   dense AᵀA, the CP and tensor-ring fast paths against the generic ones,
//!   and the sum rule Σℓᵢ = rank.
//!
//! Failures are report content, not errors; suite functions only return
//! `Err` when an instance cannot even be constructed.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::als::{ls_solve, tr_design_gram};
use crate::error::Result;
use crate::format::{cp_format, tr_format};
use crate::network::{
    gram_network, materialize, Slot, TNMatrix, TensorNetwork, DEFAULT_SIZE_GUARD,
};
use crate::sampler::{
    apply_sketch, compute_phi, draw_with, leverage_scores_bruteforce, sample_size, CpRowSampler,
    RowSampler, TnRowSampler,
};
use crate::tensor::{linear_index, DenseMatrix, DenseTensor, DEFAULT_RANK_TOL};

/// Max absolute deviation allowed between a conditional-product row
/// probability and the brute-force leverage distribution.
pub const EXACTNESS_TOL: f64 = 1e-10;
/// Max relative Frobenius deviation allowed between Gram computations.
pub const GRAM_TOL: f64 = 1e-10;
/// Success fraction the sketching guarantee targets.
pub const THEOREM1_TARGET: f64 = 0.80;
/// Hard floor below which the theorem1 suite fails (one-sided binomial
/// slack around the target at 200 trials).
pub const THEOREM1_FLOOR: f64 = 0.74;

#[derive(Clone, Debug)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// What was measured (deviation, fraction, ...), for the report.
    pub measured: f64,
    pub threshold: f64,
    pub detail: String,
}

impl Check {
    fn deviation(name: impl Into<String>, measured: f64, threshold: f64, detail: &str) -> Self {
        Self {
            name: name.into(),
            passed: measured.is_finite() && measured <= threshold,
            measured,
            threshold,
            detail: detail.into(),
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} measured={:.3e} threshold={:.3e} ({})",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.measured,
            self.threshold,
            self.detail
        )
    }
}

#[derive(Clone, Debug)]
pub struct SuiteReport {
    pub suite: String,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "suite {}: {} ({}/{} checks)",
            self.suite,
            if self.passed() { "PASS" } else { "FAIL" },
            self.checks.iter().filter(|c| c.passed).count(),
            self.checks.len()
        )?;
        for c in &self.checks {
            writeln!(f, "  {c}")?;
        }
        Ok(())
    }
}

/// Which format-specific fast path an instance exercises, with the raw
/// pieces those paths consume.
pub enum FastPath {
    None,
    Cp { factors: Vec<DenseMatrix>, m: usize },
    Tr { cores: Vec<DenseTensor>, m: usize },
}

/// A TN matrix to verify, with enough structure to run the fast paths.
pub struct Instance {
    pub name: String,
    pub a: TNMatrix,
    pub fast: FastPath,
}

fn seeded_tensor(dims: &[usize], rng: &mut ChaCha8Rng) -> DenseTensor {
    let len = dims.iter().product();
    DenseTensor::new(
        dims.to_vec(),
        (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )
    .expect("positive dims")
}

/// CP design instance: random factors, node `m` excluded.
pub fn cp_instance(n: usize, i: usize, r: usize, m: usize, seed: u64) -> Result<Instance> {
    let dims = vec![i; n];
    let format = cp_format(&dims, r)?;
    let tensors = crate::als::init_factors(&format, &dims, seed)?;
    let a = format.design_network(&tensors, &format!("a{m}"))?;
    let factors = (1..=n)
        .map(|j| DenseMatrix::from_tensor(tensors[&format!("a{j}")].clone()))
        .collect::<Result<Vec<_>>>()?;
    Ok(Instance {
        name: format!("cp-n{n}-i{i}-r{r}-m{m}"),
        a,
        fast: FastPath::Cp { factors, m },
    })
}

/// Tensor-ring design instance: random cores, core `m` excluded.
pub fn tr_instance(n: usize, i: usize, r: usize, m: usize, seed: u64) -> Result<Instance> {
    let dims = vec![i; n];
    let ranks = vec![r; n];
    let format = tr_format(&dims, &ranks)?;
    let tensors = crate::als::init_factors(&format, &dims, seed)?;
    let a = format.design_network(&tensors, &format!("c{m}"))?;
    let cores = (1..=n).map(|j| tensors[&format!("c{j}")].clone()).collect();
    Ok(Instance {
        name: format!("tr-n{n}-i{i}-r{r}-m{m}"),
        a,
        fast: FastPath::Tr { cores, m },
    })
}

/// Hand-built networks with no fast path: chains, a Tucker-style hub, a
/// double bond, single nodes, and one rank-deficient matrix.
pub fn generic_instances(seed: u64) -> Vec<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();

    let mut net = TensorNetwork::new();
    net.add_node("u", seeded_tensor(&[4, 2], &mut rng)).unwrap();
    net.add_node("g", seeded_tensor(&[2, 3, 2], &mut rng))
        .unwrap();
    net.add_node("v", seeded_tensor(&[2, 5], &mut rng)).unwrap();
    net.add_bond(Slot::new("u", 2), Slot::new("g", 1));
    net.add_bond(Slot::new("g", 3), Slot::new("v", 1));
    net.add_dangling("d1", Slot::new("u", 1));
    net.add_dangling("d2", Slot::new("g", 2));
    net.add_dangling("c1", Slot::new("v", 2));
    out.push(Instance {
        name: "generic-chain".into(),
        a: TNMatrix::new(net, vec!["d1".into(), "d2".into()], vec!["c1".into()]),
        fast: FastPath::None,
    });

    let mut net = TensorNetwork::new();
    net.add_node("core", seeded_tensor(&[2, 2, 2], &mut rng))
        .unwrap();
    net.add_node("u1", seeded_tensor(&[3, 2], &mut rng))
        .unwrap();
    net.add_node("u2", seeded_tensor(&[3, 2], &mut rng))
        .unwrap();
    net.add_bond(Slot::new("u1", 2), Slot::new("core", 1));
    net.add_bond(Slot::new("u2", 2), Slot::new("core", 2));
    net.add_dangling("d1", Slot::new("u1", 1));
    net.add_dangling("d2", Slot::new("u2", 1));
    net.add_dangling("c1", Slot::new("core", 3));
    out.push(Instance {
        name: "generic-tucker".into(),
        a: TNMatrix::new(net, vec!["d1".into(), "d2".into()], vec!["c1".into()]),
        fast: FastPath::None,
    });

    let mut net = TensorNetwork::new();
    net.add_node("x", seeded_tensor(&[3, 4, 2], &mut rng))
        .unwrap();
    net.add_node("y", seeded_tensor(&[2, 5], &mut rng)).unwrap();
    net.add_bond(Slot::new("x", 3), Slot::new("y", 1));
    net.add_dangling("d1", Slot::new("x", 1));
    net.add_dangling("d2", Slot::new("x", 2));
    net.add_dangling("c1", Slot::new("y", 2));
    out.push(Instance {
        name: "generic-twonode".into(),
        a: TNMatrix::new(net, vec!["d1".into(), "d2".into()], vec!["c1".into()]),
        fast: FastPath::None,
    });

    // rank-1 matrix: every leverage score collapses to the same value
    let (xv, yv, zv) = (
        seeded_tensor(&[3], &mut rng),
        seeded_tensor(&[4], &mut rng),
        seeded_tensor(&[2], &mut rng),
    );
    let mut vals = vec![0.0; 24];
    for k in 0..2 {
        for j in 0..4 {
            for i in 0..3 {
                vals[i + 3 * (j + 4 * k)] = xv.values()[i] * yv.values()[j] * zv.values()[k];
            }
        }
    }
    let mut net = TensorNetwork::new();
    net.add_node("t", DenseTensor::new(vec![3, 4, 2], vals).unwrap())
        .unwrap();
    net.add_dangling("d1", Slot::new("t", 1));
    net.add_dangling("d2", Slot::new("t", 2));
    net.add_dangling("c1", Slot::new("t", 3));
    out.push(Instance {
        name: "generic-lowrank".into(),
        a: TNMatrix::new(net, vec!["d1".into(), "d2".into()], vec!["c1".into()]),
        fast: FastPath::None,
    });

    let mut net = TensorNetwork::new();
    net.add_node("p", seeded_tensor(&[3, 2, 2], &mut rng))
        .unwrap();
    net.add_node("q", seeded_tensor(&[2, 2, 4], &mut rng))
        .unwrap();
    net.add_bond(Slot::new("p", 2), Slot::new("q", 1));
    net.add_bond(Slot::new("p", 3), Slot::new("q", 2));
    net.add_dangling("d1", Slot::new("p", 1));
    net.add_dangling("c1", Slot::new("q", 3));
    out.push(Instance {
        name: "generic-doublebond".into(),
        a: TNMatrix::new(net, vec!["d1".into()], vec!["c1".into()]),
        fast: FastPath::None,
    });

    let mut net = TensorNetwork::new();
    net.add_node("t", seeded_tensor(&[3, 4, 5], &mut rng))
        .unwrap();
    net.add_dangling("d1", Slot::new("t", 1));
    net.add_dangling("d2", Slot::new("t", 2));
    net.add_dangling("c1", Slot::new("t", 3));
    out.push(Instance {
        name: "generic-onenode".into(),
        a: TNMatrix::new(net, vec!["d1".into(), "d2".into()], vec!["c1".into()]),
        fast: FastPath::None,
    });

    out
}

fn mix(seed: u64, salt: u64) -> u64 {
    seed.wrapping_mul(0x9e3779b97f4a7c15).rotate_left(17) ^ salt.wrapping_mul(0xff51afd7ed558ccd)
}

/// The standard 20-instance set: CP over N∈{3,4}, I∈{3,5}, R∈{2,3} with the
/// first node excluded (plus two last-node variants), tensor rings at
/// N=4, I=4, R=2 for every excluded core, and six hand-built networks.
pub fn standard_instances(seed: u64) -> Result<Vec<Instance>> {
    let mut out = Vec::new();
    let mut salt = 0;
    for n in [3usize, 4] {
        for i in [3usize, 5] {
            for r in [2usize, 3] {
                salt += 1;
                out.push(cp_instance(n, i, r, 1, mix(seed, salt))?);
            }
        }
    }
    out.push(cp_instance(3, 3, 2, 3, mix(seed, 101))?);
    out.push(cp_instance(4, 5, 3, 4, mix(seed, 102))?);
    for m in 1..=4 {
        out.push(tr_instance(4, 4, 2, m, mix(seed, 200 + m as u64))?);
    }
    out.extend(generic_instances(mix(seed, 300)));
    Ok(out)
}

/// Joint probability of every row, in linear row order, computed as the
/// product of the sampler's sequential conditionals.
pub fn joint_row_probabilities(sampler: &dyn RowSampler) -> Result<Vec<f64>> {
    let extents = sampler.row_extents().to_vec();
    let total: usize = extents.iter().product();
    let mut out = vec![0.0; total];
    let mut prefix = Vec::with_capacity(extents.len());
    descend(sampler, &extents, &mut prefix, 1.0, &mut out)?;
    return Ok(out);

    fn descend(
        sampler: &dyn RowSampler,
        extents: &[usize],
        prefix: &mut Vec<usize>,
        p: f64,
        out: &mut [f64],
    ) -> Result<()> {
        if prefix.len() == extents.len() {
            out[linear_index(prefix, extents)? - 1] = p;
            return Ok(());
        }
        let dist = sampler.conditional(prefix)?;
        for i in 1..=extents[prefix.len()] {
            prefix.push(i);
            descend(sampler, extents, prefix, p * dist[i - 1], out)?;
            prefix.pop();
        }
        Ok(())
    }
}

/// Brute-force leverage distribution of the materialized instance:
/// ℓᵢ / rank for every row.
fn bruteforce_distribution(a: &TNMatrix) -> Result<(Vec<f64>, usize)> {
    let dense = materialize(a, DEFAULT_SIZE_GUARD)?;
    let (lev, rank) = leverage_scores_bruteforce(&dense);
    let p = lev.iter().map(|&l| l / rank as f64).collect();
    Ok((p, rank))
}

/// Sequential-conditional products vs. the brute-force leverage
/// distribution, every row of every instance.
pub fn exactness_suite(seed: u64) -> Result<SuiteReport> {
    let mut checks = Vec::new();
    for inst in standard_instances(seed)? {
        let (want, rank) = bruteforce_distribution(&inst.a)?;
        let phi = compute_phi(&inst.a, DEFAULT_RANK_TOL)?;
        let sampler = TnRowSampler::new(&inst.a, &phi);
        let got = joint_row_probabilities(&sampler)?;
        let mut max_dev = phi.rank.abs_diff(rank) as f64; // rank mismatch fails outright
        for (g, w) in got.iter().zip(&want) {
            max_dev = max_dev.max((g - w).abs());
        }
        checks.push(Check::deviation(
            format!("exactness/{}", inst.name),
            max_dev,
            EXACTNESS_TOL,
            "max |Π conditionals − ℓᵢ/ρ| over rows",
        ));
    }
    Ok(SuiteReport {
        suite: "exactness".into(),
        checks,
    })
}

fn rel_frobenius(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    let mut diff = 0.0;
    let mut norm = 0.0;
    for (x, y) in a.values().iter().zip(b.values()) {
        diff += (x - y) * (x - y);
        norm += y * y;
    }
    (diff / norm.max(f64::MIN_POSITIVE)).sqrt()
}

/// Gram cross-checks and fast-path-vs-generic comparisons.
pub fn oracles_suite(seed: u64) -> Result<SuiteReport> {
    let mut checks = Vec::new();
    for inst in standard_instances(seed)? {
        let dense = materialize(&inst.a, DEFAULT_SIZE_GUARD)?;
        let ata = dense.transpose().matmul(&dense)?;
        let via_network = materialize(&gram_network(&inst.a)?, DEFAULT_SIZE_GUARD)?;
        checks.push(Check::deviation(
            format!("gram-network/{}", inst.name),
            rel_frobenius(&via_network, &ata),
            GRAM_TOL,
            "‖gram_network − AᵀA‖_F / ‖AᵀA‖_F",
        ));
        match &inst.fast {
            FastPath::Cp { factors, m } => {
                let mut had: Option<DenseMatrix> = None;
                for (j, f) in factors.iter().enumerate() {
                    if j + 1 == *m {
                        continue;
                    }
                    let g = f.transpose().matmul(f)?;
                    had = Some(match had {
                        None => g,
                        Some(acc) => crate::tensor::hadamard(&acc, &g)?,
                    });
                }
                checks.push(Check::deviation(
                    format!("gram-cp-hadamard/{}", inst.name),
                    rel_frobenius(&had.expect("at least two factors"), &ata),
                    GRAM_TOL,
                    "‖⊛ AⱼᵀAⱼ − AᵀA‖_F / ‖AᵀA‖_F",
                ));
                let phi = compute_phi(&inst.a, DEFAULT_RANK_TOL)?;
                let generic = TnRowSampler::new(&inst.a, &phi);
                let fast = CpRowSampler::new(factors, &phi, *m)?;
                let pg = joint_row_probabilities(&generic)?;
                let pf = joint_row_probabilities(&fast)?;
                let max_dev = pg
                    .iter()
                    .zip(&pf)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0f64, f64::max);
                checks.push(Check::deviation(
                    format!("conditionals-cp-fast/{}", inst.name),
                    max_dev,
                    EXACTNESS_TOL,
                    "max |fast − generic| joint row probability",
                ));
            }
            FastPath::Tr { cores, m } => {
                checks.push(Check::deviation(
                    format!("gram-tr-fast/{}", inst.name),
                    rel_frobenius(&tr_design_gram(cores, *m)?, &ata),
                    GRAM_TOL,
                    "‖ring-chain gram − AᵀA‖_F / ‖AᵀA‖_F",
                ));
            }
            FastPath::None => {}
        }
        let (lev, rank) = leverage_scores_bruteforce(&dense);
        let sum: f64 = lev.iter().sum();
        checks.push(Check::deviation(
            format!("leverage-sum/{}", inst.name),
            (sum - rank as f64).abs(),
            1e-8,
            "|Σ ℓᵢ − ρ|",
        ));
    }
    Ok(SuiteReport {
        suite: "oracles".into(),
        checks,
    })
}

/// Sketch-and-solve guarantee at the prescribed sample size: a fixed random
/// CP design (625×3), fresh random right-hand side and fresh sketch per
/// trial, success when the sketched solution's residual is within (1+eps)
/// of optimal.
pub fn theorem1_suite(seed: u64, trials: usize) -> Result<SuiteReport> {
    let (eps, delta) = (0.5, 0.2);
    let inst = cp_instance(5, 5, 3, 1, mix(seed, 77))?;
    let dense = materialize(&inst.a, DEFAULT_SIZE_GUARD)?;
    let rows = dense.rows();
    let j = sample_size(dense.cols(), eps, delta, 1.0)?;
    let phi = compute_phi(&inst.a, DEFAULT_RANK_TOL)?;
    let sampler = TnRowSampler::new(&inst.a, &phi);
    let mut successes = 0usize;
    for t in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, 1000 + t as u64));
        let rhs_vals: Vec<f64> = (0..rows).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let rhs = DenseMatrix::from_tensor(DenseTensor::new(vec![rows, 1], rhs_vals)?)?;
        let spec = draw_with(&sampler, j, mix(seed, 5000 + t as u64))?;
        let (sa, sb) = apply_sketch(&spec, &inst.a, &rhs)?;
        let w = ls_solve(&sa, &sb)?;
        let resid = residual(&dense, &w, &rhs)?;
        let opt = residual(&dense, &ls_solve(&dense, &rhs)?, &rhs)?;
        if resid <= (1.0 + eps) * opt + 1e-12 {
            successes += 1;
        }
    }
    let fraction = successes as f64 / trials as f64;
    let check = Check {
        name: format!("theorem1/eps{eps}-delta{delta}-J{j}-trials{trials}"),
        passed: fraction >= THEOREM1_FLOOR,
        measured: fraction,
        threshold: THEOREM1_FLOOR,
        detail: format!(
            "success fraction (residual ≤ {:.1}·OPT); target ≥ {THEOREM1_TARGET}, floor {THEOREM1_FLOOR}",
            1.0 + eps
        ),
    };
    Ok(SuiteReport {
        suite: "theorem1".into(),
        checks: vec![check],
    })
}

fn residual(a: &DenseMatrix, w: &DenseMatrix, rhs: &DenseMatrix) -> Result<f64> {
    let fit = a.matmul(w)?;
    let mut acc = 0.0;
    for (x, y) in fit.values().iter().zip(rhs.values()) {
        acc += (x - y) * (x - y);
    }
    Ok(acc.sqrt())
}

/// Runs the named suite with its default shape.
pub fn run_suite(name: &str, seed: u64) -> Result<SuiteReport> {
    match name {
        "exactness" => exactness_suite(seed),
        "theorem1" => theorem1_suite(seed, 200),
        "oracles" => oracles_suite(seed),
        other => Err(crate::error::Error::Param(format!(
            "unknown suite {other:?}; expected exactness, theorem1, or oracles"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_set_has_twenty_instances_with_valid_networks() {
        let set = standard_instances(3).unwrap();
        assert_eq!(set.len(), 20);
        for inst in &set {
            assert!(inst.a.validate().is_empty(), "{} invalid", inst.name);
        }
        let names: std::collections::BTreeSet<_> = set.iter().map(|i| i.name.clone()).collect();
        assert_eq!(names.len(), 20, "instance names must be unique");
    }

    #[test]
    fn exactness_suite_passes_on_default_seed() {
        let report = exactness_suite(7).unwrap();
        assert_eq!(report.checks.len(), 20);
        assert!(report.passed(), "{report}");
    }

    #[test]
    fn oracles_suite_passes_on_default_seed() {
        let report = oracles_suite(7).unwrap();
        assert!(report.passed(), "{report}");
    }

    #[test]
    fn theorem1_small_run_meets_floor() {
        // smaller trial count here; the acceptance suite runs the full 200
        let report = theorem1_suite(7, 50).unwrap();
        assert!(report.passed(), "{report}");
        assert!(report.checks[0].measured >= THEOREM1_TARGET, "{report}");
    }

    #[test]
    fn run_suite_rejects_unknown_names() {
        assert!(run_suite("nonsense", 1).is_err());
        assert!(run_suite("exactness", 1).is_ok());
    }

    #[test]
    fn joint_probabilities_sum_to_one() {
        let inst = cp_instance(3, 4, 2, 2, 99).unwrap();
        let phi = compute_phi(&inst.a, DEFAULT_RANK_TOL).unwrap();
        let sampler = TnRowSampler::new(&inst.a, &phi);
        let p = joint_row_probabilities(&sampler).unwrap();
        let sum: f64 = p.iter().sum();
        assert!((sum - 1.0).abs() < 1e-10, "sum {sum}");
    }
}
