use std::f64::consts::PI;

use eth_uniqueqma::ensemble::{sample_b, EthParams};
use eth_uniqueqma::hamiltonian::EnergyWindow;
use eth_uniqueqma::linalg::haar::{ginibre, haar_state, haar_unitary, random_hermitian};
use eth_uniqueqma::linalg::{eigh, eigvalsh, norm_sqr, operator_norm, unitarity_residual, ComplexMatrix, C64};
use eth_uniqueqma::oracle::{qxc_dimension_count, simple_verifier, SubspaceOracle};
use eth_uniqueqma::protocol::{
    mean_kron_conj, mean_kron_conj_prefixes, o_succ_from_blocks, o_succ_quadratic_form, operator_route_eigen,
};
use eth_uniqueqma::qpe::{sinc_l, QpeConfig};
use eth_uniqueqma::rng::stream;
use proptest::prelude::*;
use rand::Rng;

fn max_diff(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    (a - b).max_abs()
}

fn random_blocks(d: usize, m: usize, seed: u64) -> Vec<ComplexMatrix> {
    let mut rng = stream(seed, 0);
    (0..m).map(|_| ginibre(d, d, &mut rng)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn sinc_matches_geometric_sum(x in -2.0f64..2.0, l in 1usize..40) {
        let lf = l as f64;
        let direct: f64 = (0..l).map(|k| (PI * (2.0 * k as f64 - lf + 1.0) * x).cos()).sum::<f64>() / lf;
        prop_assert!((sinc_l(x, l) - direct).abs() < 1e-9);
    }

    #[test]
    fn sinc_squares_sum_to_one_over_a_period(x in 0.0f64..1.0, l in 2usize..64) {
        let lf = l as f64;
        let total: f64 = (0..l).map(|m| sinc_l(x - m as f64 / lf, l).powi(2)).sum();
        prop_assert!((total - 1.0).abs() < 1e-9, "{total}");
    }

    #[test]
    fn weights_lie_in_unit_interval(x in 0.0f64..1.0, delta in 0.05f64..0.6, l in prop::sample::select(vec![16usize, 64, 256])) {
        let cfg = QpeConfig::new(l, EnergyWindow::simple(0.5, delta).unwrap());
        prop_assume!(cfg.is_ok());
        let q = cfg.unwrap().weight(x);
        prop_assert!((-1e-12..=1.0 + 1e-10).contains(&q), "{q}");
    }

    #[test]
    fn kron_mixed_product(seed in any::<u64>(), n in 1usize..5, k in 1usize..4) {
        let mut rng = stream(seed, 0);
        let (a, c) = (ginibre(n, n, &mut rng), ginibre(n, n, &mut rng));
        let (b, d) = (ginibre(k, k, &mut rng), ginibre(k, k, &mut rng));
        let lhs = &a.kron(&b) * &c.kron(&d);
        let rhs = (&a * &c).kron(&(&b * &d));
        prop_assert!(max_diff(&lhs, &rhs) < 1e-10);
    }

    #[test]
    fn eigh_reconstructs_and_agrees_with_eigvalsh(seed in any::<u64>(), n in 1usize..24) {
        let h = random_hermitian(n, &mut stream(seed, 0));
        let e = eigh(&h).unwrap();
        let v = &e.vectors;
        let rebuilt = &(v * &ComplexMatrix::from_diag(&e.values)) * &v.adjoint();
        prop_assert!(max_diff(&rebuilt, &h) < 1e-9 * (1.0 + h.max_abs()));
        prop_assert!(unitarity_residual(v) < 1e-10);
        let vals = eigvalsh(&h).unwrap();
        for (a, b) in vals.iter().zip(&e.values) {
            prop_assert!((a - b).abs() < 1e-9 * (1.0 + h.max_abs()));
        }
        prop_assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn operator_norm_sits_between_frobenius_bounds(seed in any::<u64>(), r in 1usize..10, c in 1usize..10) {
        let a = ginibre(r, c, &mut stream(seed, 0));
        let op = operator_norm(&a);
        let fro = a.frobenius_norm();
        prop_assert!(op <= fro * (1.0 + 1e-12));
        prop_assert!(fro <= op * (r.min(c) as f64).sqrt() * (1.0 + 1e-12));
    }

    #[test]
    fn haar_unitaries_are_unitary(seed in any::<u64>(), n in 1usize..32) {
        prop_assert!(unitarity_residual(&haar_unitary(n, &mut stream(seed, 0))) < 1e-10);
    }

    #[test]
    fn gram_accumulation_matches_product(seed in any::<u64>(), n in 1usize..20, k in 1usize..20) {
        let y = ginibre(n, k, &mut stream(seed, 0));
        let mut g = ComplexMatrix::identity(n);
        g.add_gram(&y);
        let expected = &ComplexMatrix::identity(n) + &(&y * &y.adjoint());
        prop_assert!(max_diff(&g, &expected) < 1e-10 * (1.0 + expected.max_abs()));
    }

    #[test]
    fn mean_kron_conj_matches_explicit_sum(seed in any::<u64>(), d in 1usize..5, m in 1usize..7) {
        let blocks = random_blocks(d, m, seed);
        let mut sum = ComplexMatrix::zeros(d * d, d * d);
        for b in &blocks {
            sum = &sum + &b.kron(&b.conj());
        }
        let expected = sum.scale_real(1.0 / m as f64);
        prop_assert!(max_diff(&mean_kron_conj(&blocks), &expected) < 1e-10);
    }

    #[test]
    fn prefix_means_match_direct_means(seed in any::<u64>(), d in 1usize..4, cuts in prop::collection::btree_set(1usize..12, 1..4)) {
        let cuts: Vec<usize> = cuts.into_iter().collect();
        let blocks = random_blocks(d, *cuts.last().unwrap(), seed);
        for (m, mean) in cuts.iter().zip(mean_kron_conj_prefixes(&blocks, &cuts)) {
            prop_assert!(max_diff(&mean, &mean_kron_conj(&blocks[..*m])) < 1e-10);
        }
    }

    #[test]
    fn quadratic_form_matches_dense_operator(
        seed in any::<u64>(),
        d in 1usize..5,
        m in 1usize..5,
        eps in 0.0f64..0.5,
    ) {
        let mut rng = stream(seed, 1);
        let q: Vec<f64> = (0..d).map(|_| rng.gen_range(0.0..1.0)).collect();
        let blocks: Vec<ComplexMatrix> = random_blocks(d, m, seed).iter().map(|b| b.hermitian_part()).collect();
        let psi = haar_state(d * d, &mut rng);
        let psi_w = ComplexMatrix::from_vec(d, d, psi.clone()).unwrap();
        let o = o_succ_from_blocks(&q, &blocks, eps).unwrap();
        let dense = eth_uniqueqma::linalg::inner(&psi, &o.matvec(&psi).unwrap()).re;
        let form = o_succ_quadratic_form(&q, &blocks, eps, &psi_w);
        prop_assert!((dense - form).abs() < 1e-10, "{dense} vs {form}");
    }

    #[test]
    fn operator_route_at_zero_eps_is_weighted_norm(seed in any::<u64>(), d in 1usize..6) {
        let mut rng = stream(seed, 2);
        let q: Vec<f64> = (0..d).map(|_| rng.gen_range(0.0..1.0)).collect();
        let a: Vec<ComplexMatrix> = (0..3).map(|_| random_hermitian(d, &mut rng)).collect();
        let psi = ComplexMatrix::from_vec(d, d, haar_state(d * d, &mut rng)).unwrap();
        let p = operator_route_eigen(&psi, &q, &a, 0.0).unwrap();
        let mut expected = 0.0;
        for x in 0..d {
            for y in 0..d {
                expected += (q[x] * q[y]).powi(4) * psi[(x, y)].norm_sqr();
            }
        }
        prop_assert!((p - expected).abs() < 1e-12);
    }

    #[test]
    fn operator_route_is_a_probability(seed in any::<u64>(), d in 1usize..5, eps in 0.0f64..0.5) {
        let mut rng = stream(seed, 3);
        let q: Vec<f64> = (0..d).map(|_| rng.gen_range(0.0..1.0)).collect();
        let a: Vec<ComplexMatrix> = (0..2).map(|_| random_hermitian(d, &mut rng)).collect();
        let psi = ComplexMatrix::from_vec(d, d, haar_state(d * d, &mut rng)).unwrap();
        let p = operator_route_eigen(&psi, &q, &a, eps).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&p), "{p}");
    }

    #[test]
    fn sampled_observables_are_hermitian(seed in any::<u64>(), d in 1usize..12, f in 0.05f64..1.0) {
        let params = EthParams::uniform(d, 1, f).unwrap();
        let b = sample_b(&params, &mut stream(seed, 0));
        prop_assert!(b.hermitian_residual() <= 1e-14 * (1.0 + b.max_abs()));
    }

    #[test]
    fn verifier_accepts_with_projected_weight(seed in any::<u64>(), n in 2usize..16, k_frac in 0.0f64..1.0) {
        let mut rng = stream(seed, 4);
        let k = ((k_frac * n as f64) as usize).min(n);
        let oracle = SubspaceOracle::random(n, k, &mut rng).unwrap();
        let psi = haar_state(n, &mut rng);
        let p = simple_verifier(&oracle, &psi).unwrap();
        let projected = norm_sqr(&oracle.projector().matvec(&psi).unwrap());
        prop_assert!((p - projected).abs() < 1e-10, "{p} vs {projected}");
    }

    #[test]
    fn qxc_counts_recover_subspace_dimension(seed in any::<u64>(), n in 2usize..16, k_frac in 0.0f64..1.0) {
        let mut rng = stream(seed, 5);
        let k = ((k_frac * n as f64) as usize).min(n);
        let oracle = SubspaceOracle::random(n, k, &mut rng).unwrap();
        prop_assert_eq!(qxc_dimension_count(&oracle, 2.0 / 3.0, 1.0 / 3.0).unwrap(), (k, k));
    }

    #[test]
    fn direct_sum_projector_adds(seed in any::<u64>(), n in 3usize..12) {
        let u = haar_unitary(n, &mut stream(seed, 6));
        let k1 = 1 + (seed as usize) % (n - 1);
        let cols = |r: std::ops::Range<usize>| {
            let idx: Vec<usize> = r.collect();
            u.submatrix(&(0..n).collect::<Vec<_>>(), &idx)
        };
        let a = SubspaceOracle::new(cols(0..k1)).unwrap();
        let b = SubspaceOracle::new(cols(k1..n)).unwrap();
        let sum = a.direct_sum(&b).unwrap();
        prop_assert_eq!(sum.subspace_dim(), n);
        prop_assert!(max_diff(&(a.projector() + b.projector()), sum.projector()) < 1e-10);
        prop_assert!(max_diff(sum.projector(), &ComplexMatrix::identity(n)) < 1e-10);
    }
}

#[test]
fn zero_eps_success_operator_is_diagonal_weights() {
    let q = [0.2, 0.7, 1.0];
    let blocks = random_blocks(3, 4, 11);
    let o = o_succ_from_blocks(&q, &blocks, 0.0).unwrap();
    for a in 0..3 {
        for b in 0..3 {
            let r = a * 3 + b;
            assert!((o[(r, r)] - C64::new((q[a] * q[b]).powi(2), 0.0)).norm() < 1e-14);
        }
    }
}
