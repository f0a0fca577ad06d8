//! Model parameters, the Chernoff-Hellinger divergence and the recovery threshold.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{LsbmError, Result};

const SUM_TOL: f64 = 1e-12;
const SYMMETRY_TOL: f64 = 1e-12;
/// Divergences at or below this are treated as zero.
pub const DEGENERACY_TOL: f64 = 1e-12;
const GOLDEN_TOL: f64 = 1e-10;

/// Parameter bundle as it appears in a JSON parameter file.
///
/// `q` is indexed `[i][j][l]` with `l = 0` standing for the first nonzero label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawParams {
    pub k: usize,
    #[serde(rename = "L")]
    pub labels: usize,
    pub pi: Vec<f64>,
    pub q: Vec<Vec<Vec<f64>>>,
    pub t: f64,
    pub n: usize,
    /// Permits zero entries in `q`.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub fully_informative: bool,
}

impl RawParams {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Validated model parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct LsbmParams {
    k: usize,
    labels: usize,
    pi: Vec<f64>,
    /// Flattened `[i][j][l]`.
    q: Vec<f64>,
    t: f64,
    n: usize,
    fully_informative: bool,
}

impl LsbmParams {
    pub fn k(&self) -> usize {
        self.k
    }

    /// Number of nonzero labels `L`.
    pub fn num_labels(&self) -> usize {
        self.labels
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn fully_informative(&self) -> bool {
        self.fully_informative
    }

    /// Conditional probability of nonzero label `l` (0-based) for communities `(i, j)`.
    #[inline]
    pub fn q(&self, i: usize, j: usize, l: usize) -> f64 {
        self.q[(i * self.k + j) * self.labels + l]
    }

    /// The label distribution `q[i][j][..]`.
    pub fn q_row(&self, i: usize, j: usize) -> &[f64] {
        let start = (i * self.k + j) * self.labels;
        &self.q[start..start + self.labels]
    }

    /// Probability that a pair carries any nonzero label, `t log(n) / n`.
    pub fn edge_probability(&self) -> f64 {
        signal(self.t, self.n)
    }

    /// `true` if some `q` entry is exactly zero.
    pub fn has_zero_q(&self) -> bool {
        self.q.contains(&0.0)
    }

    /// The `k x k` matrix `Q^(l)`.
    pub fn q_matrix(&self, l: usize) -> DMatrix<f64> {
        DMatrix::from_fn(self.k, self.k, |i, j| self.q(i, j, l))
    }

    pub fn with_t(&self, t: f64) -> Result<Self> {
        let mut raw = self.to_raw();
        raw.t = t;
        validate_params(raw)
    }

    pub fn with_n(&self, n: usize) -> Result<Self> {
        let mut raw = self.to_raw();
        raw.n = n;
        validate_params(raw)
    }

    pub fn to_raw(&self) -> RawParams {
        RawParams {
            k: self.k,
            labels: self.labels,
            pi: self.pi.clone(),
            q: (0..self.k)
                .map(|i| (0..self.k).map(|j| self.q_row(i, j).to_vec()).collect())
                .collect(),
            t: self.t,
            n: self.n,
            fully_informative: self.fully_informative,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        validate_params(RawParams::from_json(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_raw()).expect("params serialize")
    }

    /// Relabels communities so that new community `a` is old community `perm[a]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.k {
            return Err(LsbmError::DimensionMismatch(format!(
                "permutation of length {} for k = {}",
                perm.len(),
                self.k
            )));
        }
        let mut raw = self.to_raw();
        raw.pi = perm.iter().map(|&p| self.pi[p]).collect();
        raw.q = perm
            .iter()
            .map(|&a| perm.iter().map(|&b| self.q_row(a, b).to_vec()).collect())
            .collect();
        validate_params(raw)
    }
}

fn signal(t: f64, n: usize) -> f64 {
    let n = n as f64;
    t * n.ln() / n
}

/// Checks a raw parameter bundle against the model constraints.
pub fn validate_params(raw: RawParams) -> Result<LsbmParams> {
    let RawParams {
        k,
        labels,
        pi,
        q,
        t,
        n,
        fully_informative,
    } = raw;
    if k == 0 {
        return Err(LsbmError::BadShape("k must be at least 1".into()));
    }
    if labels == 0 {
        return Err(LsbmError::BadShape("L must be at least 1".into()));
    }
    if labels > u8::MAX as usize {
        return Err(LsbmError::BadShape(format!("L = {labels} exceeds 255")));
    }
    if n < 2 {
        return Err(LsbmError::BadShape("n must be at least 2".into()));
    }
    if pi.len() != k {
        return Err(LsbmError::BadPi(format!("expected {k} entries, got {}", pi.len())));
    }
    if let Some(p) = pi.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
        return Err(LsbmError::BadPi(format!("entry {p} is not strictly positive")));
    }
    let total: f64 = pi.iter().sum();
    if (total - 1.0).abs() > SUM_TOL {
        return Err(LsbmError::BadPi(format!("entries sum to {total}")));
    }
    if q.len() != k || q.iter().any(|row| row.len() != k) || q.iter().flatten().any(|d| d.len() != labels) {
        return Err(LsbmError::BadShape(format!("q must have shape {k} x {k} x {labels}")));
    }
    for (i, row) in q.iter().enumerate() {
        for (j, dist) in row.iter().enumerate() {
            for (l, &x) in dist.iter().enumerate() {
                if !(0.0..=1.0).contains(&x) {
                    return Err(LsbmError::BadShape(format!("q[{i}][{j}][{l}] = {x} is not a probability")));
                }
                if x == 0.0 && !fully_informative {
                    return Err(LsbmError::ZeroProbability { i, j, label: l });
                }
            }
            let sum: f64 = dist.iter().sum();
            if (sum - 1.0).abs() > SUM_TOL {
                return Err(LsbmError::NonStochastic { i, j, sum });
            }
        }
    }
    for i in 0..k {
        for j in (i + 1)..k {
            for l in 0..labels {
                if (q[i][j][l] - q[j][i][l]).abs() > SYMMETRY_TOL {
                    return Err(LsbmError::AsymmetricQ { i, j, label: l });
                }
            }
        }
    }
    if !(t.is_finite() && t > 0.0) {
        return Err(LsbmError::BadShape(format!("t = {t} must be positive")));
    }
    let value = signal(t, n);
    if value > 1.0 {
        return Err(LsbmError::SignalTooLarge { t, n, value });
    }
    Ok(LsbmParams {
        k,
        labels,
        pi,
        q: q.into_iter().flatten().flatten().collect(),
        t,
        n,
        fully_informative,
    })
}

/// A `k x L` matrix with entry `(j, l) = pi_j * q[i][j][l]` for a fixed community `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct ThetaMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
}

impl ThetaMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(LsbmError::DimensionMismatch("ragged theta rows".into()));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            entries: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, j: usize, l: usize) -> f64 {
        self.entries[j * self.cols + l]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }
}

pub fn theta_matrix(params: &LsbmParams, i: usize) -> Result<ThetaMatrix> {
    if i >= params.k {
        return Err(LsbmError::IndexOutOfRange {
            what: "community",
            index: i,
            bound: params.k,
        });
    }
    let entries = (0..params.k)
        .flat_map(|j| params.q_row(i, j).iter().map(move |&q| params.pi[j] * q))
        .collect();
    Ok(ThetaMatrix {
        rows: params.k,
        cols: params.labels,
        entries,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DivergenceResult {
    pub value: f64,
    pub lambda_star: f64,
    pub evaluations: usize,
}

/// `x^lambda * y^(1 - lambda)` with `0^0` resolved by the limit convention:
/// a zero factor kills the term except at the endpoint where its exponent vanishes.
#[inline]
fn geometric_term(x: f64, y: f64, lambda: f64) -> f64 {
    if x == y {
        x
    } else if x == 0.0 {
        if lambda == 0.0 {
            y
        } else {
            0.0
        }
    } else if y == 0.0 {
        if lambda == 1.0 {
            x
        } else {
            0.0
        }
    } else {
        (lambda * x.ln() + (1.0 - lambda) * y.ln()).exp()
    }
}

/// `f(lambda) = sum x^lambda y^(1 - lambda)`, the convex objective minimized by [`ch_divergence`].
pub fn hellinger_objective(x: &ThetaMatrix, y: &ThetaMatrix, lambda: f64) -> f64 {
    x.entries
        .iter()
        .zip(&y.entries)
        .map(|(&a, &b)| geometric_term(a, b, lambda))
        .sum()
}

/// `f'(lambda)` on the open interval, where pairs with a zero entry vanish.
fn objective_slope(x: &ThetaMatrix, y: &ThetaMatrix, lambda: f64) -> f64 {
    x.entries
        .iter()
        .zip(&y.entries)
        .filter(|(&a, &b)| a > 0.0 && b > 0.0)
        .map(|(&a, &b)| a.powf(lambda) * b.powf(1.0 - lambda) * (a / b).ln())
        .sum()
}

/// Chernoff-Hellinger divergence `1 - inf_lambda f(lambda)` between two theta matrices.
///
/// The infimum is located by golden-section search on `[0, 1]`; the endpoints
/// are compared explicitly since zero entries make `f` jump there.
pub fn ch_divergence(x: &ThetaMatrix, y: &ThetaMatrix) -> Result<DivergenceResult> {
    if x.shape() != y.shape() {
        return Err(LsbmError::DimensionMismatch(format!(
            "theta shapes {:?} and {:?}",
            x.shape(),
            y.shape()
        )));
    }
    let f = |lambda: f64| hellinger_objective(x, y, lambda);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut a = hi - inv_phi * (hi - lo);
    let mut b = lo + inv_phi * (hi - lo);
    let mut fa = f(a);
    let mut fb = f(b);
    let mut evaluations = 2;
    while hi - lo > GOLDEN_TOL {
        if fa <= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - inv_phi * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + inv_phi * (hi - lo);
            fb = f(b);
        }
        evaluations += 1;
    }
    let mut lambda_star = 0.5 * (lo + hi);
    // f is flat near its minimum, so function comparisons pin lambda only to
    // about sqrt(eps); bisect on the sign of f' to sharpen it.
    let slope = |lambda: f64| objective_slope(x, y, lambda);
    let (mut a, mut b) = ((lambda_star - 1e-6).max(0.0), (lambda_star + 1e-6).min(1.0));
    if slope(a) < 0.0 && slope(b) > 0.0 {
        for _ in 0..60 {
            let mid = 0.5 * (a + b);
            if slope(mid) < 0.0 {
                a = mid;
            } else {
                b = mid;
            }
            evaluations += 1;
        }
        lambda_star = 0.5 * (a + b);
    }
    let mut best = f(lambda_star);
    evaluations += 1;
    for endpoint in [0.0, 1.0] {
        let value = f(endpoint);
        evaluations += 1;
        if value < best {
            best = value;
            lambda_star = endpoint;
        }
    }
    if 1.0 - best <= DEGENERACY_TOL {
        // f is constant up to rounding; report the symmetric point.
        lambda_star = 0.5;
        best = f(0.5);
        evaluations += 1;
    }
    Ok(DivergenceResult {
        value: 1.0 - best,
        lambda_star,
        evaluations,
    })
}

/// Pairwise divergences between community profiles and the resulting threshold.
#[derive(Clone, Debug, Serialize)]
pub struct ThresholdReport {
    pub critical_t: f64,
    /// `(i, j, D_+(theta_i, theta_j))` for `i < j`.
    pub pairs: Vec<(usize, usize, DivergenceResult)>,
}

pub fn threshold_report(params: &LsbmParams) -> Result<ThresholdReport> {
    let thetas = (0..params.k)
        .map(|i| theta_matrix(params, i))
        .collect::<Result<Vec<_>>>()?;
    let mut pairs = Vec::new();
    for i in 0..params.k {
        for j in (i + 1)..params.k {
            pairs.push((i, j, ch_divergence(&thetas[i], &thetas[j])?));
        }
    }
    let worst = pairs
        .iter()
        .min_by(|a, b| a.2.value.total_cmp(&b.2.value));
    let critical_t = match worst {
        // a single community is always recovered
        None => 0.0,
        Some(&(i, j, d)) if d.value <= DEGENERACY_TOL => {
            return Err(LsbmError::DegenerateParams {
                i,
                j,
                divergence: d.value,
            })
        }
        Some(&(_, _, d)) => 1.0 / d.value,
    };
    Ok(ThresholdReport { critical_t, pairs })
}

/// `t_c = (min_{i != j} D_+(theta_i, theta_j))^{-1}`; zero when `k = 1`.
pub fn critical_t(params: &LsbmParams) -> Result<f64> {
    threshold_report(params).map(|r| r.critical_t)
}

#[derive(Clone, Debug, Serialize)]
pub struct LabelSpectrum {
    pub label: usize,
    /// `(re, im)` pairs sorted by descending real part.
    pub eigenvalues: Vec<(f64, f64)>,
    pub distinct_nonzero: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectralConditionReport {
    pub labels: Vec<LabelSpectrum>,
    pub satisfied: bool,
}

/// Eigenvalues of `Q^(l) diag(pi)` for each label with the default tolerances.
pub fn spectral_condition_check(params: &LsbmParams) -> SpectralConditionReport {
    spectral_condition_check_with(params, 1e-9, 1e-9)
}

pub fn spectral_condition_check_with(params: &LsbmParams, tol_abs: f64, tol_gap: f64) -> SpectralConditionReport {
    let pi = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&params.pi));
    let labels: Vec<LabelSpectrum> = (0..params.labels)
        .map(|l| {
            let m = params.q_matrix(l) * &pi;
            let scale = m.norm().max(1.0);
            let mut eigenvalues: Vec<(f64, f64)> = m
                .complex_eigenvalues()
                .iter()
                .map(|c| (c.re, c.im))
                .collect();
            eigenvalues.sort_by(|a, b| b.0.total_cmp(&a.0));
            let real = eigenvalues.iter().all(|&(_, im)| im.abs() <= 1e-12 * scale);
            let nonzero = eigenvalues.iter().all(|&(re, _)| re.abs() > tol_abs);
            let gap = eigenvalues
                .windows(2)
                .map(|w| (w[0].0 - w[1].0).abs())
                .fold(f64::INFINITY, f64::min);
            LabelSpectrum {
                label: l,
                eigenvalues,
                distinct_nonzero: real && nonzero && gap > tol_gap,
            }
        })
        .collect();
    let satisfied = labels.iter().all(|s| s.distinct_nonzero);
    SpectralConditionReport { labels, satisfied }
}
