#![allow(dead_code)]

use lsbm::{validate_params, LsbmParams, PairLabels, RawParams};
use nalgebra::DMatrix;
use rand::Rng;

pub fn csbm_raw(xi: f64, t: f64, n: usize) -> RawParams {
    RawParams {
        k: 2,
        labels: 2,
        pi: vec![0.5, 0.5],
        q: vec![
            vec![vec![1.0 - xi, xi], vec![xi, 1.0 - xi]],
            vec![vec![xi, 1.0 - xi], vec![1.0 - xi, xi]],
        ],
        t,
        n,
        fully_informative: false,
    }
}

pub fn csbm(xi: f64, t: f64, n: usize) -> LsbmParams {
    validate_params(csbm_raw(xi, t, n)).unwrap()
}

/// Random distribution with every entry at least `floor`.
pub fn random_simplex(rng: &mut impl Rng, len: usize, floor: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..len).map(|_| rng.random::<f64>() + 1e-3).collect();
    let total: f64 = raw.iter().sum();
    let spare = 1.0 - floor * len as f64;
    let mut out: Vec<f64> = raw.iter().map(|x| floor + spare * x / total).collect();
    let drift: f64 = 1.0 - out.iter().sum::<f64>();
    out[0] += drift;
    out
}

/// Random symmetric parameters with strictly positive q.
pub fn random_raw(rng: &mut impl Rng, k: usize, labels: usize, t: f64, n: usize) -> RawParams {
    let pi = random_simplex(rng, k, 0.1);
    let mut q = vec![vec![vec![0.0; labels]; k]; k];
    for i in 0..k {
        for j in i..k {
            let row = random_simplex(rng, labels, 0.02);
            q[i][j] = row.clone();
            q[j][i] = row;
        }
    }
    RawParams {
        k,
        labels,
        pi,
        q,
        t,
        n,
        fully_informative: false,
    }
}

pub fn random_params(rng: &mut impl Rng, k: usize, labels: usize, t: f64, n: usize) -> LsbmParams {
    validate_params(random_raw(rng, k, labels, t, n)).unwrap()
}

/// Dense eigen-decomposition sorted by descending |value|, positive first on ties.
pub fn dense_sorted(m: &DMatrix<f64>) -> Vec<(f64, Vec<f64>)> {
    let eig = m.clone().symmetric_eigen();
    let mut pairs: Vec<(f64, Vec<f64>)> = (0..m.nrows())
        .map(|c| (eig.eigenvalues[c], eig.eigenvectors.column(c).iter().copied().collect()))
        .collect();
    pairs.sort_by(|a, b| b.0.abs().total_cmp(&a.0.abs()).then(b.0.total_cmp(&a.0)));
    pairs
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Log-likelihood of `sigma` including the unlabeled-pair factors.
pub fn full_log_likelihood(sigma: &[usize], labels: &PairLabels, p: &LsbmParams) -> f64 {
    let rate = p.edge_probability();
    let mut total: f64 = sigma.iter().map(|&c| p.pi()[c].ln()).sum();
    for u in 0..sigma.len() {
        for v in (u + 1)..sigma.len() {
            total += match labels.label(u, v) {
                0 => (1.0 - rate).ln(),
                l => (rate * p.q(sigma[u], sigma[v], l as usize - 1)).ln(),
            };
        }
    }
    total
}
