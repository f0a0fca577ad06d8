//! The spectral estimator: per-label eigenvectors combined with the solved
//! weights, every sign orientation tried, and the most probable labeling kept.

use std::collections::HashMap;

use serde::Serialize;

use crate::error::{LsbmError, Result};
use crate::linalg::EigenOptions;
use crate::model::{spectral_condition_check, LsbmParams};
use crate::sampler::{label_matrices, PairLabels};
use crate::spectral::{solve_weights, top_k_eigenpairs_with, ReferenceModel, SpectralBasis, WeightSet};

/// Upper bound on `k * L` for exhaustive sign enumeration.
pub const MAX_SIGN_BITS: usize = 20;

/// One sign per `(label slot, eigenvector)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SignPattern {
    k: usize,
    num_labels: usize,
    signs: Vec<i8>,
}

impl SignPattern {
    pub fn all_positive(k: usize, num_labels: usize) -> Self {
        Self {
            k,
            num_labels,
            signs: vec![1; k * num_labels],
        }
    }

    pub fn count(k: usize, num_labels: usize) -> usize {
        1usize << (k * num_labels)
    }

    /// Pattern number `index` in lexicographic order over
    /// `(s^(1)_1, .., s^(1)_k, s^(2)_1, ..)` with `+1` before `-1`.
    pub fn from_index(index: usize, k: usize, num_labels: usize) -> Self {
        let bits = k * num_labels;
        let signs = (0..bits)
            .map(|p| if index >> (bits - 1 - p) & 1 == 1 { -1 } else { 1 })
            .collect();
        Self { k, num_labels, signs }
    }

    pub fn index(&self) -> usize {
        self.signs.iter().fold(0, |acc, &s| (acc << 1) | usize::from(s < 0))
    }

    #[inline]
    pub fn sign(&self, slot: usize, j: usize) -> f64 {
        f64::from(self.signs[slot * self.k + j])
    }

    pub fn flipped(&self, slot: usize, j: usize) -> Self {
        let mut out = self.clone();
        out.signs[slot * self.k + j] *= -1;
        out
    }

    pub fn signs(&self) -> &[i8] {
        &self.signs
    }
}

/// Row-major `n x k` scores.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreMatrix {
    pub n: usize,
    pub k: usize,
    pub data: Vec<f64>,
}

impl ScoreMatrix {
    /// Builds a matrix from equal-length rows, one per vertex.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let k = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == k), "ragged score rows");
        Self {
            n: rows.len(),
            k,
            data: rows.concat(),
        }
    }

    pub fn get(&self, v: usize, i: usize) -> f64 {
        self.data[v * self.k + i]
    }

    pub fn row(&self, v: usize) -> &[f64] {
        &self.data[v * self.k..(v + 1) * self.k]
    }
}

fn check_shapes(bases: &[SpectralBasis], weights: &WeightSet) -> Result<usize> {
    if bases.len() != weights.num_labels() {
        return Err(LsbmError::DimensionMismatch(format!(
            "{} bases for {} labels",
            bases.len(),
            weights.num_labels()
        )));
    }
    let n = bases.first().map_or(0, SpectralBasis::dim);
    if bases.iter().any(|b| b.k() != weights.k() || b.dim() != n) {
        return Err(LsbmError::DimensionMismatch("bases disagree on k or n".into()));
    }
    Ok(n)
}

/// `score(v, i) = sum_l (U^(l) diag(s^(l)) c_i^(l))_v`.
pub fn spectral_scores(bases: &[SpectralBasis], weights: &WeightSet, pattern: &SignPattern) -> Result<ScoreMatrix> {
    let n = check_shapes(bases, weights)?;
    let k = weights.k();
    if pattern.k != k || pattern.num_labels != weights.num_labels() {
        return Err(LsbmError::DimensionMismatch("sign pattern shape".into()));
    }
    let mut data = vec![0.0; n * k];
    for (slot, basis) in bases.iter().enumerate() {
        for i in 0..k {
            let c = weights.c_vector(i, slot);
            for (j, pair) in basis.pairs.iter().enumerate() {
                let coeff = pattern.sign(slot, j) * c[j];
                for (v, x) in pair.vector.iter().enumerate() {
                    data[v * k + i] += x * coeff;
                }
            }
        }
    }
    Ok(ScoreMatrix { n, k, data })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CandidateLabeling {
    pub sigma_hat: Vec<usize>,
    pub pattern: SignPattern,
    pub log_posterior: Option<f64>,
    /// Vertices whose score maximum was shared by several communities.
    pub tied_vertices: usize,
}

/// Row-wise argmax with ties going to the lowest community index.
pub fn candidate_labeling(scores: &ScoreMatrix, pattern: &SignPattern) -> CandidateLabeling {
    let mut tied_vertices = 0;
    let sigma_hat = (0..scores.n)
        .map(|v| {
            let row = scores.row(v);
            let mut best = 0;
            let mut tie = false;
            for (i, &s) in row.iter().enumerate().skip(1) {
                if s > row[best] {
                    best = i;
                    tie = false;
                } else if s == row[best] {
                    tie = true;
                }
            }
            tied_vertices += usize::from(tie);
            best
        })
        .collect();
    CandidateLabeling {
        sigma_hat,
        pattern: pattern.clone(),
        log_posterior: None,
        tied_vertices,
    }
}

/// Log posterior of `sigma` up to a labeling-independent constant:
/// `sum_v log pi(sigma_v) + sum_{labeled {u,v}} log q[sigma_u][sigma_v][label]`.
///
/// Unlabeled pairs contribute `log(1 - t log(n)/n)` regardless of communities
/// and are dropped. Impossible labelings score `-inf` when zero entries are
/// permitted.
pub fn log_posterior(sigma: &[usize], labels: &PairLabels, params: &LsbmParams) -> Result<f64> {
    if sigma.len() != labels.n() {
        return Err(LsbmError::DimensionMismatch(format!(
            "labeling of length {} for {} vertices",
            sigma.len(),
            labels.n()
        )));
    }
    let k = params.k();
    if let Some(v) = sigma.iter().position(|&c| c >= k) {
        return Err(LsbmError::IndexOutOfRange {
            what: "community of vertex",
            index: v,
            bound: k,
        });
    }
    LogTable::new(params).evaluate(sigma, labels)
}

/// `ln pi` and `ln q` laid out for the posterior inner loop.
struct LogTable {
    k: usize,
    num_labels: usize,
    log_pi: Vec<f64>,
    /// `log_q[(a * k + b) * L + slot]`
    log_q: Vec<f64>,
    fully_informative: bool,
}

impl LogTable {
    fn new(params: &LsbmParams) -> Self {
        let (k, num_labels) = (params.k(), params.num_labels());
        let mut log_q = Vec::with_capacity(k * k * num_labels);
        for a in 0..k {
            for b in 0..k {
                log_q.extend(params.q_row(a, b).iter().map(|q| q.ln()));
            }
        }
        Self {
            k,
            num_labels,
            log_pi: params.pi().iter().map(|p| p.ln()).collect(),
            log_q,
            fully_informative: params.fully_informative(),
        }
    }

    fn evaluate(&self, sigma: &[usize], labels: &PairLabels) -> Result<f64> {
        let mut total: f64 = sigma.iter().map(|&c| self.log_pi[c]).sum();
        for &(u, v, l) in labels.pairs() {
            let (a, b) = (sigma[u as usize], sigma[v as usize]);
            let term = self.log_q[(a * self.k + b) * self.num_labels + l as usize - 1];
            if term == f64::NEG_INFINITY {
                if self.fully_informative {
                    return Ok(f64::NEG_INFINITY);
                }
                return Err(LsbmError::LogOfZero { i: a, j: b, label: l as usize });
            }
            total += term;
        }
        Ok(total)
    }
}

#[derive(Clone, Debug, Default)]
pub struct RecoveryOptions {
    pub eigen: EigenOptions,
}

/// Outcome of [`spectral_recover`], with the intermediate spectral data kept
/// for diagnostics.
#[derive(Clone, Debug)]
pub struct Recovery {
    pub best: CandidateLabeling,
    pub patterns_evaluated: usize,
    /// Patterns whose posterior equaled the winner's but came later.
    pub posterior_ties: usize,
    pub spectral_condition: bool,
    pub bases: Vec<SpectralBasis>,
    pub weights: WeightSet,
}

#[derive(Clone, Debug, Serialize)]
pub struct RecoverySummary {
    pub pattern_index: usize,
    pub pattern: Vec<i8>,
    pub log_posterior: f64,
    pub patterns_evaluated: usize,
    pub posterior_ties: usize,
    pub tied_vertices: usize,
    pub spectral_condition: bool,
    pub eigenvalues: Vec<Vec<f64>>,
}

impl Recovery {
    pub fn labels(&self) -> &[usize] {
        &self.best.sigma_hat
    }

    pub fn summary(&self) -> RecoverySummary {
        RecoverySummary {
            pattern_index: self.best.pattern.index(),
            pattern: self.best.pattern.signs.clone(),
            log_posterior: self.best.log_posterior.unwrap_or(f64::NAN),
            patterns_evaluated: self.patterns_evaluated,
            posterior_ties: self.posterior_ties,
            tied_vertices: self.best.tied_vertices,
            spectral_condition: self.spectral_condition,
            eigenvalues: self.bases.iter().map(SpectralBasis::values).collect(),
        }
    }
}

/// Top-k bases of every observed label matrix.
pub fn observed_bases(labels: &PairLabels, k: usize, opts: &EigenOptions) -> Result<Vec<SpectralBasis>> {
    label_matrices(labels)
        .iter()
        .map(|m| top_k_eigenpairs_with(&m.matrix, k, opts))
        .collect()
}

/// All `2^{kL}` candidate labelings in pattern order, each with its log posterior.
pub fn enumerate_candidates(
    bases: &[SpectralBasis],
    weights: &WeightSet,
    labels: &PairLabels,
    params: &LsbmParams,
) -> Result<Vec<CandidateLabeling>> {
    let mut out = Vec::new();
    for_each_candidate(bases, weights, labels, params, |c| out.push(c))?;
    Ok(out)
}

fn for_each_candidate(
    bases: &[SpectralBasis],
    weights: &WeightSet,
    labels: &PairLabels,
    params: &LsbmParams,
    mut visit: impl FnMut(CandidateLabeling),
) -> Result<()> {
    let n = check_shapes(bases, weights)?;
    let (k, num_labels) = (weights.k(), weights.num_labels());
    if k * num_labels > MAX_SIGN_BITS {
        return Err(LsbmError::BadShape(format!("k * L = {} exceeds {MAX_SIGN_BITS}", k * num_labels)));
    }
    // terms[(v * bits + slot * k + j) * k + i] = U^(l)_{vj} c_ij^(l)
    let bits = k * num_labels;
    let mut terms = vec![0.0; n * bits * k];
    for (slot, basis) in bases.iter().enumerate() {
        for (j, pair) in basis.pairs.iter().enumerate() {
            for (v, x) in pair.vector.iter().enumerate() {
                let base = (v * bits + slot * k + j) * k;
                for i in 0..k {
                    terms[base + i] = x * weights.c(i, j, slot);
                }
            }
        }
    }
    let mut scores = ScoreMatrix {
        n,
        k,
        data: vec![0.0; n * k],
    };
    let table = LogTable::new(params);
    // Distinct patterns often yield the same labeling; score each labeling once.
    let mut seen: HashMap<Vec<usize>, f64> = HashMap::new();
    for index in 0..SignPattern::count(k, num_labels) {
        let pattern = SignPattern::from_index(index, k, num_labels);
        scores.data.iter_mut().for_each(|x| *x = 0.0);
        for v in 0..n {
            let out = &mut scores.data[v * k..(v + 1) * k];
            for (p, &s) in pattern.signs.iter().enumerate() {
                let base = (v * bits + p) * k;
                let s = f64::from(s);
                out.iter_mut().zip(&terms[base..base + k]).for_each(|(o, t)| *o += s * t);
            }
        }
        let mut candidate = candidate_labeling(&scores, &pattern);
        let posterior = match seen.get(&candidate.sigma_hat) {
            Some(&p) => p,
            None => {
                let p = table.evaluate(&candidate.sigma_hat, labels)?;
                seen.insert(candidate.sigma_hat.clone(), p);
                p
            }
        };
        candidate.log_posterior = Some(posterior);
        visit(candidate);
    }
    Ok(())
}

/// Recovers communities from the observed labels alone.
pub fn spectral_recover(labels: &PairLabels, params: &LsbmParams) -> Result<Recovery> {
    spectral_recover_with(labels, params, &RecoveryOptions::default())
}

pub fn spectral_recover_with(labels: &PairLabels, params: &LsbmParams, opts: &RecoveryOptions) -> Result<Recovery> {
    if labels.n() != params.n() || labels.num_labels() != params.num_labels() {
        return Err(LsbmError::DimensionMismatch(format!(
            "graph has n = {}, L = {}; parameters have n = {}, L = {}",
            labels.n(),
            labels.num_labels(),
            params.n(),
            params.num_labels()
        )));
    }
    let k = params.k();
    let spectral_condition = spectral_condition_check(params).satisfied;
    let bases = observed_bases(labels, k, &opts.eigen)?;
    let reference = ReferenceModel::build(params)?;
    let weights = solve_weights(&reference, params)?;

    let mut best: Option<CandidateLabeling> = None;
    let mut patterns_evaluated = 0;
    let mut posterior_ties = 0;
    for_each_candidate(&bases, &weights, labels, params, |candidate| {
        patterns_evaluated += 1;
        let score = candidate.log_posterior.expect("scored");
        match &best {
            Some(b) if score < b.log_posterior.expect("scored") => {}
            Some(b) if score == b.log_posterior.expect("scored") => posterior_ties += 1,
            _ => {
                if best.is_some() {
                    posterior_ties = 0;
                }
                best = Some(candidate);
            }
        }
    })?;
    Ok(Recovery {
        best: best.expect("at least one sign pattern"),
        patterns_evaluated,
        posterior_ties,
        spectral_condition,
        bases,
        weights,
    })
}
