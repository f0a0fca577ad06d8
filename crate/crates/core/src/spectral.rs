//! Top-k eigenpairs of observed label matrices and the reference block model
//! from which the combination weights are solved.

use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::error::{LsbmError, Result};
use crate::linalg::{self, dense_eigenpairs, dot, norm, normalize_sign, order_by_magnitude, EigenOptions, SymmetricOperator};
use crate::model::LsbmParams;
use crate::sampler::CommunityAssignment;

#[derive(Clone, Debug, PartialEq)]
pub struct EigenPair {
    pub value: f64,
    pub vector: Vec<f64>,
}

/// Eigenpairs ordered by descending `|value|`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralBasis {
    pub pairs: Vec<EigenPair>,
}

impl SpectralBasis {
    fn from_raw(raw: Vec<(f64, Vec<f64>)>) -> Self {
        Self {
            pairs: raw.into_iter().map(|(value, vector)| EigenPair { value, vector }).collect(),
        }
    }

    pub fn k(&self) -> usize {
        self.pairs.len()
    }

    pub fn dim(&self) -> usize {
        self.pairs.first().map_or(0, |p| p.vector.len())
    }

    pub fn values(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.value).collect()
    }

    /// Text dump: eigenvalues on the first line, then one row per vertex with
    /// one column per eigenvector, 17 significant digits.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let values: Vec<String> = self.pairs.iter().map(|p| format!("{:.16e}", p.value)).collect();
        writeln!(out, "{}", values.join(" ")).expect("string write");
        for v in 0..self.dim() {
            let row: Vec<String> = self.pairs.iter().map(|p| format!("{:.16e}", p.vector[v])).collect();
            writeln!(out, "{}", row.join(" ")).expect("string write");
        }
        out
    }
}

pub fn top_k_eigenpairs(op: &dyn SymmetricOperator, k: usize) -> Result<SpectralBasis> {
    top_k_eigenpairs_with(op, k, &EigenOptions::default())
}

pub fn top_k_eigenpairs_with(op: &dyn SymmetricOperator, k: usize, opts: &EigenOptions) -> Result<SpectralBasis> {
    linalg::top_k(op, k, opts).map(SpectralBasis::from_raw)
}

/// Assignment of vertices to `k` blocks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockLayout {
    membership: Vec<usize>,
    sizes: Vec<usize>,
}

impl BlockLayout {
    /// Consecutive index ranges with the given sizes.
    pub fn contiguous(sizes: &[usize]) -> Self {
        let membership = sizes
            .iter()
            .enumerate()
            .flat_map(|(b, &s)| std::iter::repeat_n(b, s))
            .collect();
        Self {
            membership,
            sizes: sizes.to_vec(),
        }
    }

    pub fn from_assignment(assignment: &CommunityAssignment) -> Self {
        Self {
            membership: assignment.sigma().to_vec(),
            sizes: assignment.sizes().to_vec(),
        }
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn block_of(&self, v: usize) -> usize {
        self.membership[v]
    }

    pub fn n(&self) -> usize {
        self.membership.len()
    }

    /// Index ranges of contiguous layouts.
    pub fn ranges(&self) -> Vec<std::ops::Range<usize>> {
        let mut start = 0;
        self.sizes
            .iter()
            .map(|&s| {
                let r = start..start + s;
                start += s;
                r
            })
            .collect()
    }

    fn lift(&self, block_values: &[f64]) -> Vec<f64> {
        self.membership.iter().map(|&b| block_values[b]).collect()
    }
}

/// Contiguous blocks with sizes `round(n * cumsum(pi))` differences.
pub fn reference_partition(params: &LsbmParams) -> BlockLayout {
    let n = params.n();
    let mut cumulative = 0.0;
    let mut previous = 0usize;
    let sizes = params
        .pi()
        .iter()
        .enumerate()
        .map(|(m, &p)| {
            cumulative += p;
            let edge = if m + 1 == params.k() {
                n
            } else {
                ((n as f64 * cumulative).round() as usize).min(n)
            };
            let size = edge.saturating_sub(previous);
            previous = previous.max(edge);
            size
        })
        .collect::<Vec<_>>();
    BlockLayout::contiguous(&sizes)
}

/// Top-k eigenpairs of the `n x n` block matrix with entries
/// `t log(n)/n * q[a][b][l]`, through the symmetric `k x k` reduction
/// `p (D^{1/2} Q D^{1/2} - diag(q_aa) [zero diagonal only])`, `D = diag(sizes)`.
pub fn block_eigenpairs(params: &LsbmParams, layout: &BlockLayout, slot: usize, zero_diagonal: bool) -> Result<SpectralBasis> {
    let k = params.k();
    let p = params.edge_probability();
    let sizes = layout.sizes();
    let rank_deficient = |found| LsbmError::RankDeficient {
        label: slot + 1,
        found,
        wanted: k,
    };
    let nonempty = sizes.iter().filter(|&&s| s > 0).count();
    if nonempty < k {
        return Err(rank_deficient(nonempty));
    }
    let root: Vec<f64> = sizes.iter().map(|&s| (s as f64).sqrt()).collect();
    let reduced = DMatrix::from_fn(k, k, |a, b| {
        let mut x = p * root[a] * params.q(a, b, slot) * root[b];
        if zero_diagonal && a == b {
            x -= p * params.q(a, a, slot);
        }
        x
    });
    let scale = reduced.norm();
    let pairs = dense_eigenpairs(&reduced);
    let values: Vec<f64> = pairs.iter().map(|e| e.0).collect();
    let found = values.iter().filter(|v| v.abs() > 1e-10 * scale).count();
    if found < k {
        return Err(rank_deficient(found));
    }
    let order = order_by_magnitude(&values);
    let basis = order
        .into_iter()
        .map(|i| {
            let (value, y) = &pairs[i];
            let block: Vec<f64> = y.iter().zip(&root).map(|(a, r)| a / r).collect();
            let mut vector = layout.lift(&block);
            let len = norm(&vector);
            vector.iter_mut().for_each(|x| *x /= len);
            normalize_sign(&mut vector);
            EigenPair { value: *value, vector }
        })
        .collect();
    Ok(SpectralBasis { pairs: basis })
}

/// Eigenpairs of the reference block matrix `B^(l)` for label slot `slot`.
pub fn reference_eigenpairs(params: &LsbmParams, slot: usize) -> Result<SpectralBasis> {
    check_slot(params, slot)?;
    block_eigenpairs(params, &reference_partition(params), slot, false)
}

/// Dense `B^(l)`; intended for checks at small `n`.
pub fn reference_block_matrix(params: &LsbmParams, slot: usize) -> DMatrix<f64> {
    let layout = reference_partition(params);
    let p = params.edge_probability();
    DMatrix::from_fn(params.n(), params.n(), |u, v| p * params.q(layout.block_of(u), layout.block_of(v), slot))
}

fn check_slot(params: &LsbmParams, slot: usize) -> Result<()> {
    if slot >= params.num_labels() {
        return Err(LsbmError::IndexOutOfRange {
            what: "label slot",
            index: slot,
            bound: params.num_labels(),
        });
    }
    Ok(())
}

/// Block vector with entry `log q[i][block(v)][slot]` at vertex `v`.
pub fn z_vector(params: &LsbmParams, layout: &BlockLayout, i: usize, slot: usize) -> Result<Vec<f64>> {
    check_slot(params, slot)?;
    if i >= params.k() {
        return Err(LsbmError::IndexOutOfRange {
            what: "community",
            index: i,
            bound: params.k(),
        });
    }
    let logs = (0..params.k())
        .map(|j| match params.q(i, j, slot) {
            q if q > 0.0 => Ok(q.ln()),
            _ => Err(LsbmError::LogOfZero { i, j, label: slot + 1 }),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(layout.lift(&logs))
}

/// Deterministic stand-in for the conditional expectation of the label matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceModel {
    pub partition: BlockLayout,
    /// Per slot, the `k x k` entry values `t log(n)/n * Q^(l)`.
    pub block_values: Vec<DMatrix<f64>>,
    pub bases: Vec<SpectralBasis>,
    /// `z_vectors[i][slot]`
    pub z_vectors: Vec<Vec<Vec<f64>>>,
}

impl ReferenceModel {
    pub fn build(params: &LsbmParams) -> Result<Self> {
        let partition = reference_partition(params);
        let p = params.edge_probability();
        let block_values = (0..params.num_labels()).map(|l| params.q_matrix(l) * p).collect();
        let bases = (0..params.num_labels())
            .map(|l| block_eigenpairs(params, &partition, l, false))
            .collect::<Result<Vec<_>>>()?;
        let z_vectors = (0..params.k())
            .map(|i| {
                (0..params.num_labels())
                    .map(|l| z_vector(params, &partition, i, l))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            partition,
            block_values,
            bases,
            z_vectors,
        })
    }
}

/// Combination weights `c[i][j][slot]` and per-`(i, slot)` reconstruction residuals.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightSet {
    k: usize,
    num_labels: usize,
    c: Vec<f64>,
    residuals: Vec<f64>,
}

impl WeightSet {
    pub fn from_fn(k: usize, num_labels: usize, f: impl Fn(usize, usize, usize) -> f64) -> Self {
        let mut c = Vec::with_capacity(k * k * num_labels);
        for i in 0..k {
            for l in 0..num_labels {
                for j in 0..k {
                    c.push(f(i, j, l));
                }
            }
        }
        Self {
            k,
            num_labels,
            c,
            residuals: vec![0.0; k * num_labels],
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    #[inline]
    pub fn c(&self, i: usize, j: usize, slot: usize) -> f64 {
        self.c[(i * self.num_labels + slot) * self.k + j]
    }

    /// The vector `c_i^(l)` over `j`.
    pub fn c_vector(&self, i: usize, slot: usize) -> &[f64] {
        let start = (i * self.num_labels + slot) * self.k;
        &self.c[start..start + self.k]
    }

    pub fn residual(&self, i: usize, slot: usize) -> f64 {
        self.residuals[i * self.num_labels + slot]
    }

    pub fn residuals(&self) -> &[f64] {
        &self.residuals
    }

    /// Every weight multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            c: self.c.iter().map(|x| x * factor).collect(),
            ..self.clone()
        }
    }
}

/// `sqrt(n) log(n) sum_j c[i][j][l] v_j / gamma_j`, the left side of the weight equations.
pub fn reconstruct(reference: &ReferenceModel, weights: &WeightSet, i: usize, slot: usize, n: usize) -> Vec<f64> {
    let nf = n as f64;
    let scale = nf.sqrt() * nf.ln();
    let basis = &reference.bases[slot];
    let mut out = vec![0.0; basis.dim()];
    for (j, pair) in basis.pairs.iter().enumerate() {
        let coeff = scale * weights.c(i, j, slot) / pair.value;
        out.iter_mut().zip(&pair.vector).for_each(|(o, x)| *o += coeff * x);
    }
    out
}

/// Solves `sqrt(n) log(n) sum_j c_ij v_j / gamma_j = z_i` by projection onto the reference eigenvectors.
pub fn solve_weights(reference: &ReferenceModel, params: &LsbmParams) -> Result<WeightSet> {
    let (k, num_labels) = (params.k(), params.num_labels());
    if reference.bases.len() != num_labels || reference.z_vectors.len() != k {
        return Err(LsbmError::DimensionMismatch("reference model does not match parameters".into()));
    }
    let nf = params.n() as f64;
    let scale = nf.sqrt() * nf.ln();
    let mut weights = WeightSet::from_fn(k, num_labels, |i, j, l| {
        let pair = &reference.bases[l].pairs[j];
        pair.value * dot(&pair.vector, &reference.z_vectors[i][l]) / scale
    });
    for i in 0..k {
        for l in 0..num_labels {
            let z = &reference.z_vectors[i][l];
            let rebuilt = reconstruct(reference, &weights, i, l, params.n());
            let residual = rebuilt.iter().zip(z).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let z_norm = norm(z);
            weights.residuals[i * num_labels + l] = residual;
            if residual > 1e-6 * z_norm {
                return Err(LsbmError::SpanViolation {
                    community: i,
                    label: l + 1,
                    residual,
                    norm: z_norm,
                });
            }
        }
    }
    Ok(weights)
}
