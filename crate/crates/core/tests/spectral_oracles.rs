mod common;

use common::{dense_sorted, dot};
use lsbm::linalg::{CsrMatrix, EigenMethod, EigenOptions};
use lsbm::sampler::label_matrices;
use lsbm::spectral::{reconstruct, reference_block_matrix, reference_eigenpairs, solve_weights, top_k_eigenpairs_with};
use lsbm::{sample_assignment, sample_labels, spectral_condition_check, validate_params, LsbmError, LsbmParams, RawParams, ReferenceModel, SpectralBasis};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn lanczos() -> EigenOptions {
    EigenOptions {
        method: EigenMethod::Lanczos,
        ..Default::default()
    }
}

fn assert_orthonormal(basis: &SpectralBasis, tol: f64) {
    for (a, pa) in basis.pairs.iter().enumerate() {
        for (b, pb) in basis.pairs.iter().enumerate() {
            let expected = if a == b { 1.0 } else { 0.0 };
            let got = dot(&pa.vector, &pb.vector);
            assert!((got - expected).abs() <= tol, "<v{a}, v{b}> = {got}");
        }
    }
}

fn max_residual(m: &DMatrix<f64>, basis: &SpectralBasis) -> f64 {
    basis
        .pairs
        .iter()
        .map(|p| {
            let v = nalgebra::DVector::from_column_slice(&p.vector);
            (m * &v - &v * p.value).norm() / p.value.abs().max(1.0)
        })
        .fold(0.0, f64::max)
}

#[test]
fn lanczos_matches_dense_on_random_symmetric() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let mut m = DMatrix::<f64>::zeros(50, 50);
        for r in 0..50 {
            for c in r..50 {
                let x = rng.random::<f64>() * 2.0 - 1.0;
                m[(r, c)] = x;
                m[(c, r)] = x;
            }
        }
        let k = 4;
        let basis = top_k_eigenpairs_with(&m, k, &lanczos()).unwrap();
        let oracle = dense_sorted(&m);
        for (got, (value, vector)) in basis.pairs.iter().zip(&oracle) {
            assert!((got.value - value).abs() <= 1e-8, "{} vs {}", got.value, value);
            assert!((dot(&got.vector, vector).abs() - 1.0).abs() <= 1e-8);
        }
        assert_orthonormal(&basis, 1e-8);
        assert!(max_residual(&m, &basis) <= 1e-8);
    }
}

#[test]
fn lanczos_matches_dense_on_sampled_label_matrices() {
    let p = validate_params(RawParams {
        k: 3,
        labels: 2,
        pi: vec![0.5, 0.3, 0.2],
        q: vec![
            vec![vec![0.8, 0.2], vec![0.3, 0.7], vec![0.4, 0.6]],
            vec![vec![0.3, 0.7], vec![0.9, 0.1], vec![0.2, 0.8]],
            vec![vec![0.4, 0.6], vec![0.2, 0.8], vec![0.6, 0.4]],
        ],
        t: 6.0,
        n: 700,
        fully_informative: false,
    })
    .unwrap();
    let g = sample_labels(&sample_assignment(&p, 4), &p, 5).unwrap();
    for m in label_matrices(g.labels()) {
        let dense = lsbm::linalg::SymmetricOperator::to_dense(&m.matrix);
        let basis = top_k_eigenpairs_with(&m.matrix, 3, &lanczos()).unwrap();
        let oracle = dense_sorted(&dense);
        for (got, (value, _)) in basis.pairs.iter().zip(&oracle) {
            assert!((got.value - value).abs() <= 1e-8 * value.abs().max(1.0));
        }
        assert_orthonormal(&basis, 1e-8);
        assert!(max_residual(&dense, &basis) <= 1e-8);
    }
}

#[test]
fn top_k_examples() {
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 1.0, -2.0]));
    let basis = lsbm::top_k_eigenpairs(&d, 2).unwrap();
    assert_eq!(basis.values(), vec![3.0, -2.0]);
    let swap = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
    let values = lsbm::top_k_eigenpairs(&swap, 2).unwrap().values();
    assert!((values[0] - 1.0).abs() < 1e-12 && (values[1] + 1.0).abs() < 1e-12);
    assert!(lsbm::top_k_eigenpairs(&swap, 3).is_err());
}

fn random_case(rng: &mut ChaCha8Rng) -> LsbmParams {
    let k = rng.random_range(1..=4);
    let labels = rng.random_range(1..=3);
    let n = rng.random_range((4 * k).max(10)..=200);
    let t = rng.random_range(0.5..4.0);
    common::random_params(rng, k, labels, t, n)
}

/// Reduced k x k eigenpairs against a dense decomposition of the explicit n x n
/// block matrix, plus weight residuals on the sets satisfying the condition.
#[test]
fn reduced_eigenpairs_match_dense_block_matrix() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut satisfied = 0;
    for _ in 0..100 {
        let p = random_case(&mut rng);
        let k = p.k();
        for slot in 0..p.num_labels() {
            let b = reference_block_matrix(&p, slot);
            let oracle = dense_sorted(&b);
            let scale = oracle[0].0.abs();
            match reference_eigenpairs(&p, slot) {
                Ok(basis) => {
                    assert_orthonormal(&basis, 1e-8);
                    for (j, (got, (value, vector))) in basis.pairs.iter().zip(&oracle).enumerate() {
                        assert!((got.value - value).abs() <= 1e-10, "value {} vs {}", got.value, value);
                        let isolated = oracle
                            .iter()
                            .enumerate()
                            .filter(|(i, _)| *i != j)
                            .all(|(_, (other, _))| (other - value).abs() > 1e-6 * scale);
                        if isolated {
                            assert!((dot(&got.vector, vector).abs() - 1.0).abs() <= 1e-8);
                        }
                    }
                    for (value, _) in &oracle[k..] {
                        assert!(value.abs() <= 1e-10 * scale.max(1.0));
                    }
                }
                Err(LsbmError::RankDeficient { .. }) => {
                    assert!(oracle[k - 1].0.abs() <= 1e-8 * scale);
                }
                Err(e) => panic!("unexpected {e}"),
            }
        }
        if spectral_condition_check(&p).satisfied {
            satisfied += 1;
            let reference = ReferenceModel::build(&p).unwrap();
            let weights = solve_weights(&reference, &p).unwrap();
            for i in 0..k {
                for slot in 0..p.num_labels() {
                    let z = &reference.z_vectors[i][slot];
                    let z_norm = dot(z, z).sqrt();
                    assert!(weights.residual(i, slot) <= 1e-8 * z_norm);
                }
            }
        }
    }
    assert!(satisfied > 50, "only {satisfied} sets satisfied the spectral condition");
}

fn numerical_rank(m: &DMatrix<f64>) -> usize {
    m.clone().svd(false, false).singular_values.iter().filter(|s| **s > 1e-9).count()
}

#[test]
fn nonzero_eigenvalue_count_equals_rank_of_q() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for case in 0..20 {
        let mut raw = common::random_raw(&mut rng, 3, 2, 2.0, 90);
        if case % 2 == 1 {
            // Community 2 copies community 1 in every label: Q^(l) has rank <= 2.
            for i in 0..3 {
                raw.q[i][2] = raw.q[i][1].clone();
            }
            for j in 0..3 {
                raw.q[2][j] = raw.q[1][j].clone();
            }
        }
        let p = validate_params(raw).unwrap();
        for slot in 0..2 {
            let b = reference_block_matrix(&p, slot);
            let scale = b.norm();
            let nonzero = dense_sorted(&b).iter().filter(|(v, _)| v.abs() > 1e-10 * scale).count();
            assert_eq!(nonzero, numerical_rank(&p.q_matrix(slot)), "case {case}");
            if nonzero < 3 {
                assert!(matches!(reference_eigenpairs(&p, slot), Err(LsbmError::RankDeficient { .. })));
            }
        }
    }
}

#[test]
fn weights_scale_with_t() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut checked = 0;
    while checked < 10 {
        let p = common::random_params(&mut rng, 3, 2, 1.5, 150);
        if !spectral_condition_check(&p).satisfied {
            continue;
        }
        checked += 1;
        let q = p.with_t(3.0).unwrap();
        let (ra, rb) = (ReferenceModel::build(&p).unwrap(), ReferenceModel::build(&q).unwrap());
        let (wa, wb) = (solve_weights(&ra, &p).unwrap(), solve_weights(&rb, &q).unwrap());
        for slot in 0..2 {
            for (a, b) in ra.bases[slot].pairs.iter().zip(&rb.bases[slot].pairs) {
                assert!((b.value - 2.0 * a.value).abs() <= 1e-9 * a.value.abs().max(1.0));
            }
            for i in 0..3 {
                for j in 0..3 {
                    let (ca, cb) = (wa.c(i, j, slot), wb.c(i, j, slot));
                    assert!((cb - 2.0 * ca).abs() <= 1e-9 * ca.abs().max(1.0));
                }
                let (xa, xb) = (reconstruct(&ra, &wa, i, slot, 150), reconstruct(&rb, &wb, i, slot, 150));
                for (x, y) in xa.iter().zip(&xb) {
                    assert!((x - y).abs() <= 1e-9);
                }
            }
        }
    }
}

#[test]
fn observed_bases_are_orthonormal() {
    let p = common::csbm(0.1, 4.0, 800);
    let g = sample_labels(&sample_assignment(&p, 1), &p, 2).unwrap();
    let bases = lsbm::inference::observed_bases(g.labels(), 2, &EigenOptions::default()).unwrap();
    for b in &bases {
        assert_orthonormal(b, 1e-8);
        for pair in &b.pairs {
            let lead = pair.vector.iter().fold(0.0f64, |m, x| if x.abs() > m.abs() { *x } else { m });
            assert!(lead > 0.0);
        }
    }
}

#[test]
fn csr_and_dense_operators_agree() {
    let rows = vec![vec![(1, 2.0), (3, -1.0)], vec![(0, 2.0)], vec![], vec![(0, -1.0)]];
    let csr = CsrMatrix::from_rows(rows);
    let dense = lsbm::linalg::SymmetricOperator::to_dense(&csr);
    let a = top_k_eigenpairs_with(&csr, 2, &EigenOptions::default()).unwrap();
    let b = top_k_eigenpairs_with(&dense, 2, &EigenOptions::default()).unwrap();
    assert_eq!(a, b);
}
