//! Community assignments, pair labels and per-label adjacency matrices.
//!
//! Label values in graphs are `1..=L`; `0` means "no label" and is never
//! stored. Parameter and basis slots for label `l` live at index `l - 1`.

use std::fmt::Write as _;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand_distr::Binomial;

use crate::error::{LsbmError, Result};
use crate::linalg::CsrMatrix;
use crate::model::LsbmParams;
use crate::rng::rng_from_seed;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CommunityAssignment {
    sigma: Vec<usize>,
    sizes: Vec<usize>,
}

impl CommunityAssignment {
    pub fn new(sigma: Vec<usize>, k: usize) -> Result<Self> {
        let mut sizes = vec![0; k];
        for (v, &c) in sigma.iter().enumerate() {
            if c >= k {
                return Err(LsbmError::IndexOutOfRange {
                    what: "community of vertex",
                    index: v,
                    bound: k,
                });
            }
            sizes[c] += 1;
        }
        Ok(Self { sigma, sizes })
    }

    pub fn sigma(&self) -> &[usize] {
        &self.sigma
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn k(&self) -> usize {
        self.sizes.len()
    }

    pub fn n(&self) -> usize {
        self.sigma.len()
    }

    pub fn community(&self, v: usize) -> usize {
        self.sigma[v]
    }

    /// Vertices of community `j` in increasing order.
    pub fn members(&self, j: usize) -> Vec<usize> {
        self.sigma
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == j)
            .map(|(v, _)| v)
            .collect()
    }

    /// One community index per line.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.sigma.len() * 2);
        for c in &self.sigma {
            writeln!(out, "{c}").expect("string write");
        }
        out
    }

    pub fn from_text(text: &str, k: usize) -> Result<Self> {
        let sigma = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(|l| l.parse::<usize>().map_err(|e| LsbmError::Parse(format!("community `{l}`: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(sigma, k)
    }
}

/// Draws each vertex's community independently from `pi`.
pub fn sample_assignment(params: &LsbmParams, seed: u64) -> CommunityAssignment {
    let mut rng = rng_from_seed(seed);
    let dist = WeightedIndex::new(params.pi()).expect("validated prior");
    let sigma = (0..params.n()).map(|_| dist.sample(&mut rng)).collect();
    CommunityAssignment::new(sigma, params.k()).expect("indices below k")
}

/// `|n_j - n pi_j| <= n^(2/3)` for every community.
pub fn is_balanced(assignment: &CommunityAssignment, params: &LsbmParams) -> bool {
    let n = assignment.n() as f64;
    let slack = n.cbrt().powi(2);
    assignment
        .sizes()
        .iter()
        .zip(params.pi())
        .all(|(&size, &p)| (size as f64 - n * p).abs() <= slack)
}

/// The observed labels: a sparse symmetric map from vertex pairs to `1..=L`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairLabels {
    n: usize,
    k: usize,
    num_labels: usize,
    /// Sorted `(u, v, label)` with `u < v`.
    pairs: Vec<(u32, u32, u8)>,
    offsets: Vec<usize>,
    /// Per-vertex `(neighbor, label)`, sorted by neighbor.
    adjacency: Vec<(u32, u8)>,
}

impl PairLabels {
    pub fn from_pairs(n: usize, k: usize, num_labels: usize, pairs: impl IntoIterator<Item = (usize, usize, u8)>) -> Result<Self> {
        if n > u32::MAX as usize {
            return Err(LsbmError::BadShape(format!("n = {n} too large")));
        }
        let mut stored = Vec::new();
        for (u, v, l) in pairs {
            if u == v {
                return Err(LsbmError::Parse(format!("self pair at vertex {u}")));
            }
            if u >= n || v >= n {
                return Err(LsbmError::IndexOutOfRange {
                    what: "vertex",
                    index: u.max(v),
                    bound: n,
                });
            }
            if l == 0 || l as usize > num_labels {
                return Err(LsbmError::IndexOutOfRange {
                    what: "label",
                    index: l as usize,
                    bound: num_labels + 1,
                });
            }
            stored.push((u.min(v) as u32, u.max(v) as u32, l));
        }
        stored.sort_unstable();
        if let Some(w) = stored.windows(2).find(|w| w[0].0 == w[1].0 && w[0].1 == w[1].1) {
            return Err(LsbmError::Parse(format!("pair {{{}, {}}} labeled twice", w[0].0, w[0].1)));
        }
        let mut degree = vec![0usize; n];
        for &(u, v, _) in &stored {
            degree[u as usize] += 1;
            degree[v as usize] += 1;
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut cursor = offsets[..n].to_vec();
        let mut adjacency = vec![(0u32, 0u8); stored.len() * 2];
        for &(u, v, l) in &stored {
            adjacency[cursor[u as usize]] = (v, l);
            cursor[u as usize] += 1;
            adjacency[cursor[v as usize]] = (u, l);
            cursor[v as usize] += 1;
        }
        for v in 0..n {
            adjacency[offsets[v]..offsets[v + 1]].sort_unstable();
        }
        Ok(Self {
            n,
            k,
            num_labels,
            pairs: stored,
            offsets,
            adjacency,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    /// Labeled pairs `(u, v, label)` with `u < v`.
    pub fn pairs(&self) -> &[(u32, u32, u8)] {
        &self.pairs
    }

    pub fn num_pairs(&self) -> usize {
        self.pairs.len()
    }

    pub fn neighbors(&self, v: usize) -> &[(u32, u8)] {
        &self.adjacency[self.offsets[v]..self.offsets[v + 1]]
    }

    /// Label of `{u, v}`, `0` when absent.
    pub fn label(&self, u: usize, v: usize) -> u8 {
        let row = self.neighbors(u);
        match row.binary_search_by_key(&(v as u32), |e| e.0) {
            Ok(pos) => row[pos].1,
            Err(_) => 0,
        }
    }

    /// Header `n k L` followed by one `u v l` line per labeled pair.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(16 * self.pairs.len() + 32);
        writeln!(out, "{} {} {}", self.n, self.k, self.num_labels).expect("string write");
        for (u, v, l) in &self.pairs {
            writeln!(out, "{u} {v} {l}").expect("string write");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let header = lines.next().ok_or_else(|| LsbmError::Parse("empty graph file".into()))?;
        let head = parse_fields::<3>(header)?;
        let (n, k, num_labels) = (head[0], head[1], head[2]);
        if num_labels == 0 || num_labels > u8::MAX as usize {
            return Err(LsbmError::Parse(format!("label count {num_labels} out of range")));
        }
        let pairs = lines
            .map(|line| {
                let f = parse_fields::<3>(line)?;
                let l = u8::try_from(f[2]).map_err(|_| LsbmError::Parse(format!("label {} out of range", f[2])))?;
                Ok((f[0], f[1], l))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_pairs(n, k, num_labels, pairs)
    }
}

fn parse_fields<const N: usize>(line: &str) -> Result<[usize; N]> {
    let mut out = [0usize; N];
    let mut parts = line.split_whitespace();
    for slot in out.iter_mut() {
        let field = parts.next().ok_or_else(|| LsbmError::Parse(format!("expected {N} fields in `{line}`")))?;
        *slot = field
            .parse()
            .map_err(|e| LsbmError::Parse(format!("`{field}` in `{line}`: {e}")))?;
    }
    if parts.next().is_some() {
        return Err(LsbmError::Parse(format!("expected {N} fields in `{line}`")));
    }
    Ok(out)
}

/// A sampled graph together with the assignment that generated it.
///
/// Inference only ever sees [`LabeledGraph::labels`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabeledGraph {
    labels: PairLabels,
    assignment: CommunityAssignment,
}

impl LabeledGraph {
    pub fn new(labels: PairLabels, assignment: CommunityAssignment) -> Result<Self> {
        if labels.n() != assignment.n() {
            return Err(LsbmError::DimensionMismatch(format!(
                "{} labeled vertices but {} assigned",
                labels.n(),
                assignment.n()
            )));
        }
        Ok(Self { labels, assignment })
    }

    pub fn labels(&self) -> &PairLabels {
        &self.labels
    }

    pub fn assignment(&self) -> &CommunityAssignment {
        &self.assignment
    }

    pub fn n(&self) -> usize {
        self.labels.n
    }
}

/// Position `r` in the column-major enumeration of pairs `a < b` of `0..m`.
fn triangular_pair(r: u64) -> (u64, u64) {
    let mut b = ((1.0 + (1.0 + 8.0 * r as f64).sqrt()) / 2.0).floor() as u64;
    while b * (b - 1) / 2 > r {
        b -= 1;
    }
    while (b + 1) * b / 2 <= r {
        b += 1;
    }
    (r - b * (b - 1) / 2, b)
}

/// Labels every pair independently given the assignment.
///
/// Per community block the number of labeled pairs is drawn binomially, the
/// labeled pairs are placed uniformly without replacement and each gets a
/// label from `q` for that block. This matches per-pair sampling in
/// distribution while costing time proportional to the number of labels.
pub fn sample_labels(assignment: &CommunityAssignment, params: &LsbmParams, seed: u64) -> Result<LabeledGraph> {
    if assignment.n() != params.n() || assignment.k() != params.k() {
        return Err(LsbmError::DimensionMismatch(format!(
            "assignment over {} vertices / {} communities, parameters expect {} / {}",
            assignment.n(),
            assignment.k(),
            params.n(),
            params.k()
        )));
    }
    let mut rng = rng_from_seed(seed);
    let p = params.edge_probability();
    let members: Vec<Vec<usize>> = (0..params.k()).map(|j| assignment.members(j)).collect();
    let mut pairs = Vec::new();
    for a in 0..params.k() {
        for b in a..params.k() {
            let (ma, mb) = (members[a].len() as u64, members[b].len() as u64);
            let total = if a == b { ma * ma.saturating_sub(1) / 2 } else { ma * mb };
            if total == 0 {
                continue;
            }
            let count = if p >= 1.0 {
                total
            } else {
                Binomial::new(total, p).expect("valid binomial").sample(&mut rng)
            };
            let label_dist = WeightedIndex::new(params.q_row(a, b)).expect("validated label distribution");
            let chosen = rand::seq::index::sample(&mut rng, total as usize, count as usize);
            for r in chosen.iter() {
                let r = r as u64;
                let (u, v) = if a == b {
                    let (x, y) = triangular_pair(r);
                    (members[a][x as usize], members[a][y as usize])
                } else {
                    (members[a][(r / mb) as usize], members[b][(r % mb) as usize])
                };
                let label = label_dist.sample(&mut rng) as u8 + 1;
                pairs.push((u, v, label));
            }
        }
    }
    let labels = PairLabels::from_pairs(params.n(), params.k(), params.num_labels(), pairs)?;
    LabeledGraph::new(labels, assignment.clone())
}

/// The 0/1 adjacency matrix of pairs carrying one label.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelMatrix {
    pub label: u8,
    pub matrix: CsrMatrix,
}

/// Builds the adjacency matrix of label `label` (in `1..=L`).
pub fn label_matrix(labels: &PairLabels, label: u8) -> Result<LabelMatrix> {
    if label == 0 || label as usize > labels.num_labels {
        return Err(LsbmError::IndexOutOfRange {
            what: "label",
            index: label as usize,
            bound: labels.num_labels + 1,
        });
    }
    let rows = (0..labels.n)
        .map(|v| {
            labels
                .neighbors(v)
                .iter()
                .filter(|e| e.1 == label)
                .map(|e| (e.0, 1.0))
                .collect()
        })
        .collect();
    Ok(LabelMatrix {
        label,
        matrix: CsrMatrix::from_rows(rows),
    })
}

/// All `L` label matrices, slot `l - 1` holding label `l`.
pub fn label_matrices(labels: &PairLabels) -> Vec<LabelMatrix> {
    (1..=labels.num_labels as u8)
        .map(|l| label_matrix(labels, l).expect("label in range"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_params, RawParams};

    fn csbm(n: usize, t: f64) -> LsbmParams {
        validate_params(RawParams {
            k: 2,
            labels: 2,
            pi: vec![0.5, 0.5],
            q: vec![vec![vec![0.9, 0.1], vec![0.1, 0.9]], vec![vec![0.1, 0.9], vec![0.9, 0.1]]],
            t,
            n,
            fully_informative: false,
        })
        .unwrap()
    }

    #[test]
    fn triangular_decode_is_bijective() {
        let m = 57u64;
        let mut seen = std::collections::HashSet::new();
        for r in 0..m * (m - 1) / 2 {
            let (a, b) = triangular_pair(r);
            assert!(a < b && b < m);
            assert!(seen.insert((a, b)));
        }
    }

    #[test]
    fn degenerate_prior_puts_everyone_in_one_community() {
        let p = LsbmParams::from_json(r#"{"k":1,"L":1,"pi":[1.0],"q":[[[1.0]]],"t":1,"n":50}"#).unwrap();
        let a = sample_assignment(&p, 9);
        assert!(a.sigma().iter().all(|&c| c == 0));
        assert_eq!(a.sizes(), &[50]);
        assert!(is_balanced(&a, &p));
    }

    #[test]
    fn same_seed_same_sample() {
        let p = csbm(300, 3.0);
        let a = sample_assignment(&p, 11);
        assert_eq!(a, sample_assignment(&p, 11));
        assert_ne!(a, sample_assignment(&p, 12));
        assert_eq!(sample_labels(&a, &p, 5).unwrap(), sample_labels(&a, &p, 5).unwrap());
    }

    #[test]
    fn balance_rule() {
        let p = csbm(1000, 3.0);
        let half = CommunityAssignment::new((0..1000).map(|v| v / 500).collect(), 2).unwrap();
        assert!(is_balanced(&half, &p));
        let skewed = CommunityAssignment::new((0..1000).map(|v| usize::from(v >= 700)).collect(), 2).unwrap();
        assert_eq!(skewed.sizes(), &[700, 300]);
        assert!(!is_balanced(&skewed, &p));
    }

    #[test]
    fn forced_labels_cover_every_pair() {
        // t log n / n = 1 with n = e^2 is not integral; use n = 10 and t = 10 / ln 10.
        let n = 10usize;
        let t = n as f64 / (n as f64).ln();
        let p = LsbmParams::from_json(&format!(r#"{{"k":1,"L":1,"pi":[1.0],"q":[[[1.0]]],"t":{t},"n":{n}}}"#)).unwrap();
        assert!((p.edge_probability() - 1.0).abs() < 1e-12);
        let a = sample_assignment(&p, 1);
        let g = sample_labels(&a, &p, 2).unwrap();
        assert_eq!(g.labels().num_pairs(), n * (n - 1) / 2);
        assert!(g.labels().pairs().iter().all(|e| e.2 == 1));
    }

    #[test]
    fn single_pair_label_matrices() {
        let labels = PairLabels::from_pairs(3, 1, 2, [(0, 1, 2)]).unwrap();
        assert_eq!(label_matrix(&labels, 2).unwrap().matrix.nnz(), 2);
        assert_eq!(label_matrix(&labels, 1).unwrap().matrix.nnz(), 0);
        assert!(matches!(label_matrix(&labels, 3), Err(LsbmError::IndexOutOfRange { .. })));
        assert!(matches!(label_matrix(&labels, 0), Err(LsbmError::IndexOutOfRange { .. })));
        assert_eq!(labels.label(1, 0), 2);
        assert_eq!(labels.label(2, 0), 0);
    }

    #[test]
    fn matrices_partition_the_pairs() {
        let p = csbm(300, 3.0);
        let a = sample_assignment(&p, 3);
        let g = sample_labels(&a, &p, 4).unwrap();
        let mats = label_matrices(g.labels());
        let total: usize = mats.iter().map(|m| m.matrix.nnz()).sum();
        assert_eq!(total, 2 * g.labels().num_pairs());
        for m in &mats {
            assert!(m.matrix.is_symmetric());
            assert!(m.matrix.has_zero_diagonal());
        }
        // rebuild the map from the matrices
        let mut rebuilt = Vec::new();
        for m in &mats {
            for u in 0..300 {
                for (v, x) in m.matrix.row(u) {
                    assert_eq!(x, 1.0);
                    if u < v {
                        rebuilt.push((u, v, m.label));
                    }
                }
            }
        }
        assert_eq!(PairLabels::from_pairs(300, 2, 2, rebuilt).unwrap(), *g.labels());
    }

    #[test]
    fn bad_pairs_rejected() {
        assert!(PairLabels::from_pairs(3, 1, 1, [(1, 1, 1)]).is_err());
        assert!(PairLabels::from_pairs(3, 1, 1, [(0, 1, 1), (1, 0, 1)]).is_err());
        assert!(PairLabels::from_pairs(3, 1, 1, [(0, 3, 1)]).is_err());
        assert!(PairLabels::from_pairs(3, 1, 1, [(0, 1, 2)]).is_err());
        assert!(PairLabels::from_text("3 1 1\n0 1\n").is_err());
    }

    #[test]
    fn text_formats_round_trip() {
        let p = csbm(200, 3.0);
        let a = sample_assignment(&p, 21);
        let g = sample_labels(&a, &p, 22).unwrap();
        let text = g.labels().to_text();
        assert!(text.starts_with("200 2 2\n"));
        assert_eq!(PairLabels::from_text(&text).unwrap(), *g.labels());
        assert_eq!(CommunityAssignment::from_text(&a.to_text(), 2).unwrap(), a);
    }

    #[test]
    fn mismatched_assignment_rejected() {
        let p = csbm(200, 3.0);
        let a = CommunityAssignment::new(vec![0; 10], 2).unwrap();
        assert!(matches!(sample_labels(&a, &p, 1), Err(LsbmError::DimensionMismatch(_))));
    }
}
