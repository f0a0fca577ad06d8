mod common;

use lsbm::sampler::{is_balanced, label_matrices};
use lsbm::{label_matrix, sample_assignment, sample_labels, validate_params, CommunityAssignment, LsbmParams, PairLabels, RawParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn single_community(labels: Vec<f64>, t: f64, n: usize) -> LsbmParams {
    validate_params(RawParams {
        k: 1,
        labels: labels.len(),
        pi: vec![1.0],
        q: vec![vec![labels]],
        t,
        n,
        fully_informative: false,
    })
    .unwrap()
}

/// Asymmetric two-community parameters used by the block-count tests.
fn two_block(t: f64, n: usize) -> LsbmParams {
    validate_params(RawParams {
        k: 2,
        labels: 2,
        pi: vec![0.4, 0.6],
        q: vec![vec![vec![0.7, 0.3], vec![0.2, 0.8]], vec![vec![0.2, 0.8], vec![0.5, 0.5]]],
        t,
        n,
        fully_informative: false,
    })
    .unwrap()
}

/// `counts[(block pair index) * L + slot]` with block pairs ordered (0,0), (0,1), (1,1).
fn block_counts(labels: &PairLabels, assignment: &CommunityAssignment) -> Vec<f64> {
    let mut counts = vec![0.0; 3 * labels.num_labels()];
    for &(u, v, l) in labels.pairs() {
        let (a, b) = (assignment.community(u as usize), assignment.community(v as usize));
        let block = a.min(b) + a.max(b);
        counts[block * labels.num_labels() + l as usize - 1] += 1.0;
    }
    counts
}

fn block_pair_totals(assignment: &CommunityAssignment) -> [f64; 3] {
    let s = assignment.sizes();
    let (a, b) = (s[0] as f64, s[1] as f64);
    [a * (a - 1.0) / 2.0, a * b, b * (b - 1.0) / 2.0]
}

#[test]
fn community_sizes_track_prior() {
    let n = 100_000;
    let p = validate_params(RawParams {
        n,
        ..common::csbm_raw(0.1, 3.0, n)
    })
    .unwrap();
    let fractions: Vec<f64> = (0..30).map(|s| sample_assignment(&p, s).sizes()[1] as f64 / n as f64).collect();
    let mean = fractions.iter().sum::<f64>() / 30.0;
    let se = (0.25 / n as f64 / 30.0).sqrt();
    assert!((mean - 0.5).abs() <= 3.0 * se, "mean {mean}, se {se}");
}

#[test]
fn label_fraction_matches_q() {
    let p = single_community(vec![0.3, 0.7], 4.0, 2000);
    let a = sample_assignment(&p, 1);
    let g = sample_labels(&a, &p, 2).unwrap();
    let total = g.labels().num_pairs() as f64;
    let ones = g.labels().pairs().iter().filter(|e| e.2 == 1).count() as f64;
    let se = (0.3 * 0.7 / total).sqrt();
    assert!((ones / total - 0.3).abs() <= 3.0 * se);
}

#[test]
fn mean_degree_matches_expectation() {
    let n = 5000;
    let p = single_community(vec![0.5, 0.5], 4.0, n);
    let g = sample_labels(&sample_assignment(&p, 3), &p, 4).unwrap();
    let nf = n as f64;
    let expected = (nf - 1.0) * 4.0 * nf.ln() / nf;
    let mean = 2.0 * g.labels().num_pairs() as f64 / nf;
    assert!((mean / expected - 1.0).abs() < 0.05, "mean {mean} vs {expected}");
    let direct: usize = (0..n).map(|v| g.labels().neighbors(v).len()).sum();
    assert_eq!(direct, 2 * g.labels().num_pairs());
}

#[test]
fn block_counts_pass_chi_square() {
    let p = two_block(3.0, 1000);
    let assignment = sample_assignment(&p, 11);
    let totals = block_pair_totals(&assignment);
    let rate = p.edge_probability();
    let trials = 200;
    let samples: Vec<Vec<f64>> = (0..trials)
        .map(|s| block_counts(sample_labels(&assignment, &p, 1000 + s).unwrap().labels(), &assignment))
        .collect();
    let chi = ChiSquared::new(trials as f64).unwrap();
    let cells = 3 * p.num_labels();
    // Bonferroni over cells; both tails.
    let alpha = 0.001 / cells as f64;
    let (lo, hi) = (chi.inverse_cdf(alpha / 2.0), chi.inverse_cdf(1.0 - alpha / 2.0));
    for cell in 0..cells {
        let (block, slot) = (cell / p.num_labels(), cell % p.num_labels());
        let (a, b) = [(0, 0), (0, 1), (1, 1)][block];
        let prob = rate * p.q(a, b, slot);
        let mean = totals[block] * prob;
        let var = mean * (1.0 - prob);
        let stat: f64 = samples.iter().map(|s| (s[cell] - mean).powi(2) / var).sum();
        assert!(stat > lo && stat < hi, "cell {cell}: statistic {stat} outside ({lo}, {hi})");
    }
}

#[test]
fn assignments_are_usually_balanced() {
    let n = 10_000;
    let p = validate_params(RawParams {
        n,
        ..common::csbm_raw(0.1, 3.0, n)
    })
    .unwrap();
    let balanced = (0..500).filter(|&s| is_balanced(&sample_assignment(&p, s), &p)).count();
    assert!(balanced as f64 / 500.0 >= 0.99, "{balanced} of 500 balanced");
}

fn naive_labels(assignment: &CommunityAssignment, p: &LsbmParams, rng: &mut impl Rng) -> PairLabels {
    let n = assignment.n();
    let rate = p.edge_probability();
    let mut pairs = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            let row = p.q_row(assignment.community(u), assignment.community(v));
            let r: f64 = rng.random();
            let mut acc = 0.0;
            for (slot, q) in row.iter().enumerate() {
                acc += rate * q;
                if r < acc {
                    pairs.push((u, v, slot as u8 + 1));
                    break;
                }
            }
        }
    }
    PairLabels::from_pairs(n, p.k(), p.num_labels(), pairs).unwrap()
}

#[test]
fn block_sampler_matches_per_pair_sampler() {
    let n = 60;
    let p = two_block(8.0, n);
    let assignment = sample_assignment(&p, 5);
    let trials = 3000;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let fast: Vec<PairLabels> = (0..trials)
        .map(|s| sample_labels(&assignment, &p, s).unwrap().labels().clone())
        .collect();
    let slow: Vec<PairLabels> = (0..trials).map(|_| naive_labels(&assignment, &p, &mut rng)).collect();

    // Block-by-label count means agree between the two samplers.
    let cells = 3 * p.num_labels();
    for cell in 0..cells {
        let stats = |set: &[PairLabels]| {
            let xs: Vec<f64> = set.iter().map(|l| block_counts(l, &assignment)[cell]).collect();
            let m = xs.iter().sum::<f64>() / xs.len() as f64;
            let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
            (m, v)
        };
        let ((m1, v1), (m2, v2)) = (stats(&fast), stats(&slow));
        let z = (m1 - m2) / ((v1 + v2) / trials as f64).sqrt();
        assert!(z.abs() < 4.0, "cell {cell}: means {m1} vs {m2}");
        assert!((v1 / v2 - 1.0).abs() < 0.2, "cell {cell}: variances {v1} vs {v2}");
    }

    // Each individual pair is labeled at its nominal rate (uniform placement).
    let rate = p.edge_probability();
    let mut hits = vec![0.0; n * n];
    for labels in &fast {
        for &(u, v, _) in labels.pairs() {
            hits[u as usize * n + v as usize] += 1.0;
        }
    }
    let mut stat = 0.0;
    let mut dof = 0.0;
    for u in 0..n {
        for v in (u + 1)..n {
            let prob = rate;
            let mean = trials as f64 * prob;
            stat += (hits[u * n + v] - mean).powi(2) / (mean * (1.0 - prob));
            dof += 1.0;
        }
    }
    let chi = ChiSquared::new(dof).unwrap();
    assert!(stat < chi.inverse_cdf(0.999) && stat > chi.inverse_cdf(0.001), "pair placement statistic {stat}");
}

#[test]
fn forced_probability_labels_every_pair() {
    let n = 50;
    let t = n as f64 / (n as f64).ln();
    let p = single_community(vec![1.0], t, n);
    let g = sample_labels(&sample_assignment(&p, 0), &p, 0).unwrap();
    assert_eq!(g.labels().num_pairs(), n * (n - 1) / 2);
}

#[test]
fn label_matrices_partition_the_graph() {
    let p = two_block(3.0, 300);
    let g = sample_labels(&sample_assignment(&p, 8), &p, 9).unwrap();
    let mats = label_matrices(g.labels());
    let total: usize = mats.iter().map(|m| m.matrix.nnz()).sum();
    assert_eq!(total, 2 * g.labels().num_pairs());
    let mut rebuilt = Vec::new();
    for m in &mats {
        assert!(m.matrix.is_symmetric());
        assert!(m.matrix.has_zero_diagonal());
        for u in 0..300 {
            assert_eq!(m.matrix.get(u, u), 0.0);
            for (v, x) in m.matrix.row(u) {
                assert_eq!(x, 1.0);
                assert_eq!(m.matrix.get(v, u), 1.0);
                assert_eq!(g.labels().label(u, v), m.label);
                if u < v {
                    rebuilt.push((u, v, m.label));
                }
            }
        }
    }
    let rebuilt = PairLabels::from_pairs(300, 2, 2, rebuilt).unwrap();
    assert_eq!(&rebuilt, g.labels());
    assert!(label_matrix(g.labels(), 0).is_err());
    assert!(label_matrix(g.labels(), 3).is_err());
}

#[test]
fn single_pair_label_matrix() {
    let labels = PairLabels::from_pairs(3, 1, 2, [(0, 1, 2)]).unwrap();
    assert_eq!(label_matrix(&labels, 2).unwrap().matrix.nnz(), 2);
    assert_eq!(label_matrix(&labels, 1).unwrap().matrix.nnz(), 0);
}

#[test]
fn text_formats_round_trip() {
    let p = two_block(3.0, 200);
    let g = sample_labels(&sample_assignment(&p, 21), &p, 22).unwrap();
    let text = g.labels().to_text();
    assert!(text.starts_with("200 2 2\n"));
    assert_eq!(&PairLabels::from_text(&text).unwrap(), g.labels());
    let a = g.assignment();
    assert_eq!(&CommunityAssignment::from_text(&a.to_text(), 2).unwrap(), a);
}
