//! Randomized structural properties, kept at low case counts: index maps,
//! unfold/refold, Kronecker algebra, the PSD pseudoinverse, contraction
//! plan independence, and the sampling distribution identities.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tensornet::bruteforce;
use tensornet::network::{contract, materialize, ContractionPlan, Slot, DEFAULT_SIZE_GUARD};
use tensornet::sampler::{compute_phi, draw_with, leverage_scores_bruteforce, TnRowSampler};
use tensornet::tensor::{
    kronecker, linear_index, multi_index, psd_pinv, refold, unfold, DenseMatrix, DEFAULT_RANK_TOL,
};
use tensornet::verify::{cp_instance, joint_row_probabilities};
use tensornet::{DenseTensor, TensorNetwork};

fn filled(dims: &[usize], seed: u64) -> DenseTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = dims.iter().product();
    DenseTensor::new(
        dims.to_vec(),
        (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

fn filled_matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    DenseMatrix::from_tensor(filled(&[rows, cols], seed)).unwrap()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn index_maps_are_bijective(dims in proptest::collection::vec(1usize..=4, 1..=4)) {
        let total: usize = dims.iter().product();
        for lin in 1..=total {
            let multi = multi_index(lin, &dims).unwrap();
            prop_assert!(multi.iter().zip(&dims).all(|(&i, &d)| 1 <= i && i <= d));
            prop_assert_eq!(linear_index(&multi, &dims).unwrap(), lin);
        }
    }

    #[test]
    fn unfold_refold_round_trips(
        dims in proptest::collection::vec(1usize..=4, 2..=4),
        mask in 0usize..16,
        seed in any::<u64>(),
    ) {
        let t = filled(&dims, seed);
        let rows: Vec<usize> = (1..=dims.len()).filter(|m| mask & (1 << (m - 1)) != 0).collect();
        let cols: Vec<usize> = (1..=dims.len()).filter(|m| mask & (1 << (m - 1)) == 0).collect();
        let w = unfold(&t, &rows, &cols).unwrap();
        let back = refold(&w, &rows, &cols, &dims).unwrap();
        prop_assert_eq!(back.dims(), t.dims());
        prop_assert_eq!(max_abs_diff(back.values(), t.values()), 0.0);
    }

    #[test]
    fn kronecker_mixed_product(
        (m, n, p) in (1usize..=3, 1usize..=3, 1usize..=3),
        (q, r, s) in (1usize..=3, 1usize..=3, 1usize..=3),
        seed in any::<u64>(),
    ) {
        let a = filled_matrix(m, n, seed);
        let c = filled_matrix(n, p, seed ^ 1);
        let b = filled_matrix(q, r, seed ^ 2);
        let d = filled_matrix(r, s, seed ^ 3);
        let lhs = kronecker(&a, &b).matmul(&kronecker(&c, &d)).unwrap();
        let rhs = kronecker(&a.matmul(&c).unwrap(), &b.matmul(&d).unwrap());
        prop_assert!(max_abs_diff(lhs.values(), rhs.values()) < 1e-10);
    }

    #[test]
    fn psd_pinv_satisfies_moore_penrose(
        (n, k) in (1usize..=5, 1usize..=5),
        seed in any::<u64>(),
    ) {
        let b = filled_matrix(n, k, seed);
        let g = b.transpose().matmul(&b).unwrap();
        let (p, _) = psd_pinv(&g, DEFAULT_RANK_TOL).unwrap();
        let scale = g.values().iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let gpg = g.matmul(&p).unwrap().matmul(&g).unwrap();
        prop_assert!(max_abs_diff(gpg.values(), g.values()) < 1e-8 * scale);
        let pgp = p.matmul(&g).unwrap().matmul(&p).unwrap();
        let pscale = p.values().iter().fold(1.0f64, |m, v| m.max(v.abs()));
        prop_assert!(max_abs_diff(pgp.values(), p.values()) < 1e-8 * pscale);
        let gp = g.matmul(&p).unwrap();
        prop_assert!(max_abs_diff(gp.values(), gp.transpose().values()) < 1e-8);
        let pg = p.matmul(&g).unwrap();
        prop_assert!(max_abs_diff(pg.values(), pg.transpose().values()) < 1e-8);
    }

    #[test]
    fn contraction_is_plan_independent(
        bond_dims in proptest::collection::vec(1usize..=3, 2..=3),
        free_dims in proptest::collection::vec(1usize..=3, 3..=4),
        seed in any::<u64>(),
    ) {
        // chain of L = bond_dims.len() + 1 nodes with one free mode each
        let l = bond_dims.len() + 1;
        prop_assume!(free_dims.len() >= l);
        let mut net = TensorNetwork::new();
        for i in 0..l {
            let mut dims = Vec::new();
            if i > 0 {
                dims.push(bond_dims[i - 1]);
            }
            dims.push(free_dims[i]);
            if i < l - 1 {
                dims.push(bond_dims[i]);
            }
            net.add_node(format!("n{}", i + 1), filled(&dims, seed ^ i as u64)).unwrap();
        }
        for i in 1..l {
            let left_last = net.node(&format!("n{i}")).unwrap().ndim();
            net.add_bond(Slot::new(format!("n{i}"), left_last), Slot::new(format!("n{}", i + 1), 1));
        }
        for i in 1..=l {
            let mode = if i == 1 { 1 } else { 2 };
            net.add_dangling(format!("f{i}"), Slot::new(format!("n{i}"), mode));
        }
        let fold_left = ContractionPlan {
            steps: (2..=l).map(|i| ("n1".to_string(), format!("n{i}"))).collect(),
        };
        let fold_right = ContractionPlan {
            steps: (1..l).rev().map(|i| (format!("n{i}"), format!("n{}", i + 1))).collect(),
        };
        let greedy = contract(&net, None).unwrap();
        let left = contract(&net, Some(&fold_left)).unwrap();
        let right = contract(&net, Some(&fold_right)).unwrap();
        let slow = bruteforce::contract(&net).unwrap();
        prop_assert_eq!(greedy.dims(), slow.dims());
        prop_assert!(max_abs_diff(greedy.values(), slow.values()) < 1e-10);
        prop_assert!(max_abs_diff(left.values(), slow.values()) < 1e-10);
        prop_assert!(max_abs_diff(right.values(), slow.values()) < 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn conditional_products_reproduce_leverage_distribution(
        n in 3usize..=4,
        i in 2usize..=4,
        r in 1usize..=3,
        m in 1usize..=3,
        seed in any::<u64>(),
    ) {
        prop_assume!(m <= n);
        let inst = cp_instance(n, i, r, m, seed).unwrap();
        let phi = compute_phi(&inst.a, DEFAULT_RANK_TOL).unwrap();
        let sampler = TnRowSampler::new(&inst.a, &phi);
        let joint = joint_row_probabilities(&sampler).unwrap();
        let total: f64 = joint.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-9, "joint sums to {}", total);
        let dense = materialize(&inst.a, DEFAULT_SIZE_GUARD).unwrap();
        let (lev, rank) = leverage_scores_bruteforce(&dense);
        for (j, p) in joint.iter().enumerate() {
            prop_assert!((p - lev[j] / rank as f64).abs() < 1e-10);
        }
    }

    #[test]
    fn sketch_weights_follow_drawn_probabilities(
        j in 1usize..=30,
        seed in any::<u64>(),
    ) {
        let inst = cp_instance(3, 3, 2, 1, seed ^ 0xabcd).unwrap();
        let phi = compute_phi(&inst.a, DEFAULT_RANK_TOL).unwrap();
        let sampler = TnRowSampler::new(&inst.a, &phi);
        let spec = draw_with(&sampler, j, seed).unwrap();
        prop_assert_eq!(spec.len(), j);
        let extents = inst.a.row_extents();
        for (draw, &w) in spec.draws.iter().zip(&spec.weights) {
            prop_assert!(draw.prob > 0.0);
            prop_assert_eq!(draw.linear, linear_index(&draw.multi, &extents).unwrap());
            let expected = 1.0 / (j as f64 * draw.prob).sqrt();
            prop_assert!((w - expected).abs() < 1e-12 * expected);
        }
    }
}
