//! Genie estimates, degree-profile separation and eigenvector alignment.
//!
//! Everything here reads the true assignment and is for measurement only.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{LsbmError, Result};
use crate::linalg::SymmetricOperator;
use crate::model::LsbmParams;
use crate::sampler::{label_matrices, CommunityAssignment, LabeledGraph, PairLabels};
use crate::spectral::{block_eigenpairs, BlockLayout, SpectralBasis};

/// Counts of labeled neighbors of one vertex by `(community, label slot)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DegreeProfile {
    k: usize,
    num_labels: usize,
    counts: Vec<u32>,
}

impl DegreeProfile {
    pub fn get(&self, j: usize, slot: usize) -> u32 {
        self.counts[j * self.num_labels + slot]
    }

    pub fn total(&self) -> u32 {
        self.counts.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.counts.iter().all(|&c| c == 0)
    }
}

pub fn degree_profile(labels: &PairLabels, assignment: &CommunityAssignment, v: usize) -> Result<DegreeProfile> {
    if v >= labels.n() {
        return Err(LsbmError::IndexOutOfRange {
            what: "vertex",
            index: v,
            bound: labels.n(),
        });
    }
    let (k, num_labels) = (assignment.k(), labels.num_labels());
    let mut counts = vec![0u32; k * num_labels];
    for &(u, l) in labels.neighbors(v) {
        counts[assignment.community(u as usize) * num_labels + l as usize - 1] += 1;
    }
    Ok(DegreeProfile { k, num_labels, counts })
}

/// `W(i)` with entry `(j, l) = log q[i][j][l]`, `-inf` for permitted zeros.
#[derive(Clone, Debug, PartialEq)]
pub struct GenieWeights {
    k: usize,
    num_labels: usize,
    w: Vec<f64>,
}

impl GenieWeights {
    pub fn new(params: &LsbmParams) -> Result<Self> {
        let (k, num_labels) = (params.k(), params.num_labels());
        let mut w = Vec::with_capacity(k * k * num_labels);
        for i in 0..k {
            for j in 0..k {
                for l in 0..num_labels {
                    let q = params.q(i, j, l);
                    if q == 0.0 && !params.fully_informative() {
                        return Err(LsbmError::LogOfZero { i, j, label: l + 1 });
                    }
                    w.push(q.ln());
                }
            }
        }
        Ok(Self { k, num_labels, w })
    }

    pub fn get(&self, i: usize, j: usize, slot: usize) -> f64 {
        self.w[(i * self.k + j) * self.num_labels + slot]
    }

    /// `<W(i), d>`; zero counts contribute nothing even against `-inf` weights.
    pub fn score(&self, i: usize, profile: &DegreeProfile) -> f64 {
        let row = &self.w[i * self.k * self.num_labels..(i + 1) * self.k * self.num_labels];
        row.iter()
            .zip(&profile.counts)
            .filter(|(_, &c)| c > 0)
            .map(|(w, &c)| w * f64::from(c))
            .sum()
    }
}

fn argmax_lowest(scores: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (i, s) in scores.enumerate() {
        if i == 0 || s > best_score {
            best = i;
            best_score = s;
        }
    }
    best
}

/// MAP community of `v` given every other vertex's true community.
pub fn genie_estimate(labels: &PairLabels, assignment: &CommunityAssignment, params: &LsbmParams, v: usize) -> Result<usize> {
    let weights = GenieWeights::new(params)?;
    let profile = degree_profile(labels, assignment, v)?;
    Ok(genie_with(&weights, params, &profile))
}

fn genie_with(weights: &GenieWeights, params: &LsbmParams, profile: &DegreeProfile) -> usize {
    argmax_lowest((0..params.k()).map(|i| params.pi()[i].ln() + weights.score(i, profile)))
}

pub fn genie_labels(labels: &PairLabels, assignment: &CommunityAssignment, params: &LsbmParams) -> Result<Vec<usize>> {
    let weights = GenieWeights::new(params)?;
    (0..labels.n())
        .map(|v| degree_profile(labels, assignment, v).map(|d| genie_with(&weights, params, &d)))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SeparationReport {
    pub min_margin: f64,
    pub margin_over_log_n: f64,
    /// Vertex attaining the minimum, if any competitor exists.
    pub worst_vertex: Option<usize>,
}

fn margin(own: f64, rival: f64) -> f64 {
    if own == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else if rival == f64::NEG_INFINITY {
        f64::INFINITY
    } else {
        own - rival
    }
}

/// Smallest gap `<W(true), d(v)> - max_{j != true} <W(j), d(v)>` over vertices.
pub fn separation_report(labels: &PairLabels, assignment: &CommunityAssignment, params: &LsbmParams) -> Result<SeparationReport> {
    let weights = GenieWeights::new(params)?;
    let mut min_margin = f64::INFINITY;
    let mut worst_vertex = None;
    if params.k() > 1 {
        for v in 0..labels.n() {
            let profile = degree_profile(labels, assignment, v)?;
            let own_community = assignment.community(v);
            let own = weights.score(own_community, &profile);
            let rival = (0..params.k())
                .filter(|&j| j != own_community)
                .map(|j| weights.score(j, &profile))
                .fold(f64::NEG_INFINITY, f64::max);
            let m = margin(own, rival);
            if worst_vertex.is_none() || m < min_margin {
                min_margin = m;
                worst_vertex = Some(v);
            }
        }
    }
    Ok(SeparationReport {
        min_margin,
        margin_over_log_n: min_margin / (labels.n() as f64).ln(),
        worst_vertex,
    })
}

/// Leading eigenpairs of the conditional expectation of each label matrix
/// (zero diagonal) under the true assignment.
#[derive(Clone, Debug)]
pub struct ExpectationModel {
    pub layout: BlockLayout,
    pub bases: Vec<SpectralBasis>,
}

impl ExpectationModel {
    pub fn build(params: &LsbmParams, assignment: &CommunityAssignment) -> Result<Self> {
        let layout = BlockLayout::from_assignment(assignment);
        let bases = (0..params.num_labels())
            .map(|l| block_eigenpairs(params, &layout, l, true))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { layout, bases })
    }
}

/// Dense conditional expectation of label slot `slot`; for small-`n` checks.
pub fn expectation_matrix(params: &LsbmParams, assignment: &CommunityAssignment, slot: usize) -> DMatrix<f64> {
    let p = params.edge_probability();
    let s = assignment.sigma();
    DMatrix::from_fn(s.len(), s.len(), |u, v| if u == v { 0.0 } else { p * params.q(s[u], s[v], slot) })
}

/// `min_s || s u_i - A u*_i / lambda*_i ||_inf` for each `i`.
pub fn alignment_residual_for(observed: &SpectralBasis, expected: &SpectralBasis, matrix: &dyn SymmetricOperator) -> Result<Vec<f64>> {
    if observed.k() != expected.k() || observed.dim() != matrix.dim() || expected.dim() != matrix.dim() {
        return Err(LsbmError::DimensionMismatch("observed and expected bases disagree".into()));
    }
    let n = matrix.dim();
    let mut image = vec![0.0; n];
    observed
        .pairs
        .iter()
        .zip(&expected.pairs)
        .enumerate()
        .map(|(i, (obs, exp))| {
            if exp.value == 0.0 {
                return Err(LsbmError::RankDeficient {
                    label: 0,
                    found: i,
                    wanted: expected.k(),
                });
            }
            matrix.apply(&exp.vector, &mut image);
            let dist = |s: f64| {
                obs.vector
                    .iter()
                    .zip(&image)
                    .map(|(u, a)| (s * u - a / exp.value).abs())
                    .fold(0.0, f64::max)
            };
            Ok(dist(1.0).min(dist(-1.0)))
        })
        .collect()
}

/// Residuals `[i][slot]` of observed label-matrix eigenvectors against the expectation model.
pub fn alignment_residuals(observed: &[SpectralBasis], expected: &ExpectationModel, labels: &PairLabels) -> Result<Vec<Vec<f64>>> {
    if observed.len() != expected.bases.len() {
        return Err(LsbmError::DimensionMismatch("label counts differ".into()));
    }
    let mats = label_matrices(labels);
    let per_label = observed
        .iter()
        .zip(&expected.bases)
        .zip(&mats)
        .map(|((obs, exp), m)| {
            alignment_residual_for(obs, exp, &m.matrix).map_err(|e| match e {
                LsbmError::RankDeficient { found, wanted, .. } => LsbmError::RankDeficient {
                    label: m.label as usize,
                    found,
                    wanted,
                },
                other => other,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let k = observed.first().map_or(0, SpectralBasis::k);
    Ok((0..k).map(|i| per_label.iter().map(|r| r[i]).collect()).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct DiagnosticsReport {
    pub min_margin: f64,
    pub margin_over_log_n: f64,
    /// `residuals[i][slot]`
    #[serde(rename = "residuals")]
    pub alignment_residuals: Vec<Vec<f64>>,
    /// Fraction of vertices where the genie label equals the supplied estimate
    /// (or the true community when no estimate is given).
    pub genie_agreement_rate: f64,
    #[serde(skip)]
    pub genie_labels: Vec<usize>,
}

impl DiagnosticsReport {
    pub fn max_alignment_residual(&self) -> f64 {
        self.alignment_residuals.iter().flatten().copied().fold(0.0, f64::max)
    }
}

/// Full diagnostics for one graph. `observed` are the top-k bases of the
/// label matrices; `estimate` is the recovered labeling, if any.
pub fn diagnose(graph: &LabeledGraph, params: &LsbmParams, observed: &[SpectralBasis], estimate: Option<&[usize]>) -> Result<DiagnosticsReport> {
    let labels = graph.labels();
    let assignment = graph.assignment();
    let separation = separation_report(labels, assignment, params)?;
    let expected = ExpectationModel::build(params, assignment)?;
    let alignment_residuals = alignment_residuals(observed, &expected, labels)?;
    let genie_labels = genie_labels(labels, assignment, params)?;
    let reference = estimate.unwrap_or(assignment.sigma());
    let agree = genie_labels.iter().zip(reference).filter(|(a, b)| a == b).count();
    Ok(DiagnosticsReport {
        min_margin: separation.min_margin,
        margin_over_log_n: separation.margin_over_log_n,
        alignment_residuals,
        genie_agreement_rate: agree as f64 / labels.n() as f64,
        genie_labels,
    })
}
