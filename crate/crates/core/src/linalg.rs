//! Sparse symmetric storage and symmetric eigensolvers.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{LsbmError, Result};

/// A real symmetric linear operator.
pub trait SymmetricOperator: Sync {
    fn dim(&self) -> usize;

    /// `y = M x`
    fn apply(&self, x: &[f64], y: &mut [f64]);

    fn to_dense(&self) -> DMatrix<f64>;
}

impl SymmetricOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (r, out) in y.iter_mut().enumerate() {
            *out = self.row(r).iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }

    fn to_dense(&self) -> DMatrix<f64> {
        self.clone()
    }
}

/// Compressed sparse row matrix; callers guarantee symmetry.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from per-row `(column, value)` lists, sorting each row by column.
    pub fn from_rows(rows: Vec<Vec<(u32, f64)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let nnz = rows.iter().map(Vec::len).sum();
        let mut col_idx = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        for mut row in rows {
            row.sort_unstable_by_key(|e| e.0);
            for (c, v) in row {
                col_idx.push(c);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .iter()
            .zip(&self.values[span])
            .map(|(&c, &v)| (c as usize, v))
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.col_idx[span.clone()].binary_search(&(c as u32)) {
            Ok(pos) => self.values[span.start + pos],
            Err(_) => 0.0,
        }
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|r| self.row(r).all(|(c, v)| self.get(c, r) == v))
    }

    pub fn has_zero_diagonal(&self) -> bool {
        (0..self.n).all(|r| self.get(r, r) == 0.0)
    }
}

impl SymmetricOperator for CsrMatrix {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (r, out) in y.iter_mut().enumerate() {
            let span = self.row_ptr[r]..self.row_ptr[r + 1];
            *out = self.col_idx[span.clone()]
                .iter()
                .zip(&self.values[span])
                .map(|(&c, &v)| v * x[c as usize])
                .sum();
        }
    }

    fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for r in 0..self.n {
            for (c, v) in self.row(r) {
                m[(r, c)] = v;
            }
        }
        m
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EigenMethod {
    /// Dense below `dense_below`, Lanczos above.
    Auto,
    Dense,
    Lanczos,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EigenOptions {
    pub method: EigenMethod,
    pub dense_below: usize,
    /// Cap on operator applications for the iterative solver.
    pub max_matvecs: usize,
    /// Relative residual tolerance for Ritz pairs.
    pub tolerance: f64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            method: EigenMethod::Auto,
            dense_below: 500,
            max_matvecs: 5000,
            tolerance: 1e-10,
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Indices of `values` ordered by descending magnitude. Near-equal magnitudes
/// (relative 1e-12) put the positive value first, then the lower index.
pub fn order_by_magnitude(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].abs().total_cmp(&values[a].abs()).then(a.cmp(&b)));
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-12 * scale.max(f64::MIN_POSITIVE);
    let mut start = 0;
    while start < order.len() {
        let head = values[order[start]].abs();
        let mut end = start + 1;
        while end < order.len() && head - values[order[end]].abs() <= tol {
            end += 1;
        }
        order[start..end].sort_by_key(|&i| (values[i] < 0.0, i));
        start = end;
    }
    order
}

/// Flips `v` so its largest-magnitude entry is positive; near ties go to the lowest index.
pub fn normalize_sign(v: &mut [f64]) {
    let max = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if max == 0.0 {
        return;
    }
    let lead = v
        .iter()
        .position(|x| x.abs() >= max * (1.0 - 1e-12))
        .expect("nonempty");
    if v[lead] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// All eigenpairs of a dense symmetric matrix, ascending by value.
pub fn dense_eigenpairs(m: &DMatrix<f64>) -> Vec<(f64, Vec<f64>)> {
    let eig = SymmetricEigen::new(m.clone());
    let mut pairs: Vec<(f64, Vec<f64>)> = eig
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(c, &value)| (value, eig.eigenvectors.column(c).iter().copied().collect()))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs
}

fn select_top(pairs: Vec<(f64, Vec<f64>)>, k: usize) -> Vec<(f64, Vec<f64>)> {
    let values: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let order = order_by_magnitude(&values);
    let mut slots: Vec<Option<(f64, Vec<f64>)>> = pairs.into_iter().map(Some).collect();
    order
        .into_iter()
        .take(k)
        .map(|i| {
            let (value, mut vector) = slots[i].take().expect("unique index");
            let len = norm(&vector);
            vector.iter_mut().for_each(|x| *x /= len);
            normalize_sign(&mut vector);
            (value, vector)
        })
        .collect()
}

/// The `k` largest-magnitude eigenpairs of `op`, unit-normalized and sign-fixed.
pub fn top_k(op: &dyn SymmetricOperator, k: usize, opts: &EigenOptions) -> Result<Vec<(f64, Vec<f64>)>> {
    let n = op.dim();
    if k == 0 || k > n {
        return Err(LsbmError::IndexOutOfRange {
            what: "eigenpair count",
            index: k,
            bound: n,
        });
    }
    let dense = match opts.method {
        EigenMethod::Dense => true,
        EigenMethod::Lanczos => false,
        EigenMethod::Auto => n < opts.dense_below,
    };
    if dense {
        Ok(select_top(dense_eigenpairs(&op.to_dense()), k))
    } else {
        lanczos_top_k(op, k, opts)
    }
}

/// Deterministic pseudo-random start vector.
fn start_vector(n: usize, salt: u64) -> Vec<f64> {
    let mut state = 0x853c_49e6_748f_ea9b_u64 ^ salt;
    let mut v: Vec<f64> = (0..n)
        .map(|_| {
            state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
            let mut z = state;
            z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
            z ^= z >> 31;
            (z >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        })
        .collect();
    let len = norm(&v);
    v.iter_mut().for_each(|x| *x /= len);
    v
}

/// Two passes of classical Gram-Schmidt against `basis`.
fn orthogonalize(r: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for b in basis {
            let h = dot(b, r);
            r.iter_mut().zip(b).for_each(|(x, y)| *x -= h * y);
        }
    }
}

fn combine(vectors: &[Vec<f64>], coeffs: impl Iterator<Item = f64> + Clone, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for (v, c) in vectors.iter().zip(coeffs) {
        out.iter_mut().zip(v).for_each(|(o, x)| *o += c * x);
    }
    out
}

/// Thick-restart Lanczos (Krylov-Schur form) for the largest-magnitude eigenpairs.
///
/// The basis is kept fully orthogonal and `A V` is stored, so Ritz residuals
/// are exact without extra products. On restart the wanted Ritz vectors plus
/// a buffer are retained and the Krylov continuation vector is carried over.
pub fn lanczos_top_k(op: &dyn SymmetricOperator, k: usize, opts: &EigenOptions) -> Result<Vec<(f64, Vec<f64>)>> {
    let n = op.dim();
    let max_basis = (2 * k + 24).max(40).min(n);
    let keep = (k + (max_basis - k) / 2).min(max_basis - 1).max(k);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(max_basis);
    let mut images: Vec<Vec<f64>> = Vec::with_capacity(max_basis);
    let mut pending = Some(start_vector(n, n as u64));
    let mut matvecs = 0usize;
    let mut salt = 1u64;

    loop {
        while basis.len() < max_basis {
            let Some(q) = pending.take() else { break };
            let mut w = vec![0.0; n];
            op.apply(&q, &mut w);
            matvecs += 1;
            basis.push(q);
            images.push(w.clone());
            let scale = norm(&w).max(1.0);
            let mut r = w;
            orthogonalize(&mut r, &basis);
            let mut len = norm(&r);
            if len <= 1e-12 * scale {
                // invariant subspace: continue from a fresh direction
                r = start_vector(n, salt.wrapping_mul(0x2545_f491_4f6c_dd1d));
                salt += 1;
                orthogonalize(&mut r, &basis);
                len = norm(&r);
                if len <= 1e-8 {
                    break;
                }
            }
            r.iter_mut().for_each(|x| *x /= len);
            pending = Some(r);
        }

        let m = basis.len();
        let projected = DMatrix::from_fn(m, m, |i, j| 0.5 * (dot(&basis[i], &images[j]) + dot(&basis[j], &images[i])));
        let ritz = dense_eigenpairs(&projected);
        let values: Vec<f64> = ritz.iter().map(|p| p.0).collect();
        let order = order_by_magnitude(&values);
        let scale = values.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        let want = k.min(m);

        let mut results = Vec::with_capacity(want);
        let mut converged = 0;
        for &idx in order.iter().take(want) {
            let (theta, coeffs) = &ritz[idx];
            let x = combine(&basis, coeffs.iter().copied(), n);
            let ax = combine(&images, coeffs.iter().copied(), n);
            let residual = ax.iter().zip(&x).map(|(a, b)| (a - theta * b).powi(2)).sum::<f64>().sqrt();
            if residual <= opts.tolerance * scale {
                converged += 1;
            }
            results.push((*theta, x));
        }
        let exhausted = pending.is_none();
        if (converged == k && want == k) || exhausted {
            if want < k {
                return Err(LsbmError::ConvergenceFailure {
                    iterations: matvecs,
                    converged,
                    wanted: k,
                });
            }
            return Ok(results
                .into_iter()
                .map(|(value, mut vector)| {
                    let len = norm(&vector);
                    vector.iter_mut().for_each(|x| *x /= len);
                    normalize_sign(&mut vector);
                    (value, vector)
                })
                .collect());
        }
        if matvecs >= opts.max_matvecs {
            return Err(LsbmError::ConvergenceFailure {
                iterations: matvecs,
                converged,
                wanted: k,
            });
        }

        let retained: Vec<usize> = order.iter().take(keep.min(m - 1).max(want)).copied().collect();
        let new_basis: Vec<Vec<f64>> = retained
            .iter()
            .map(|&i| combine(&basis, ritz[i].1.iter().copied(), n))
            .collect();
        let new_images: Vec<Vec<f64>> = retained
            .iter()
            .map(|&i| combine(&images, ritz[i].1.iter().copied(), n))
            .collect();
        basis = new_basis;
        images = new_images;
        if let Some(p) = pending.as_mut() {
            orthogonalize(p, &basis);
            let len = norm(p);
            p.iter_mut().for_each(|x| *x /= len);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn magnitude_order_with_ties() {
        assert_eq!(order_by_magnitude(&[1.0, 3.0, -2.0]), vec![1, 2, 0]);
        assert_eq!(order_by_magnitude(&[-1.0, 1.0]), vec![1, 0]);
        assert_eq!(order_by_magnitude(&[-1.0000000000000002, 0.9999999999999998]), vec![1, 0]);
        assert_eq!(order_by_magnitude(&[2.0, 2.0, -2.0]), vec![0, 1, 2]);
    }

    #[test]
    fn sign_normalization() {
        let mut v = vec![0.1, -0.9, 0.3];
        normalize_sign(&mut v);
        assert_eq!(v, vec![-0.1, 0.9, -0.3]);
        let mut v = vec![-0.5, 0.5];
        normalize_sign(&mut v);
        assert_eq!(v, vec![0.5, -0.5]);
    }

    #[test]
    fn csr_roundtrip_dense() {
        let m = CsrMatrix::from_rows(vec![vec![(1, 1.0)], vec![(0, 1.0), (2, 2.0)], vec![(1, 2.0)]]);
        assert!(m.is_symmetric());
        assert!(m.has_zero_diagonal());
        let d = m.to_dense();
        assert_eq!(d[(1, 2)], 2.0);
        let mut y = vec![0.0; 3];
        m.apply(&[1.0, 1.0, 1.0], &mut y);
        assert_eq!(y, vec![1.0, 3.0, 2.0]);
    }

    #[test]
    fn lanczos_on_diagonal() {
        let diag: Vec<f64> = (0..600).map(|i| if i == 17 { 50.0 } else if i == 400 { -40.0 } else { (i % 13) as f64 * 0.1 }).collect();
        let m = CsrMatrix::from_rows(diag.iter().enumerate().map(|(i, &d)| vec![(i as u32, d)]).collect());
        let opts = EigenOptions { method: EigenMethod::Lanczos, ..Default::default() };
        let top = top_k(&m, 2, &opts).unwrap();
        assert_abs_diff_eq!(top[0].0, 50.0, epsilon = 1e-9);
        assert_abs_diff_eq!(top[1].0, -40.0, epsilon = 1e-9);
        assert_abs_diff_eq!(top[0].1[17], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(top[1].1[400], 1.0, epsilon = 1e-9);
    }

    #[test]
    fn too_many_pairs_requested() {
        let m = DMatrix::<f64>::identity(2, 2);
        assert!(top_k(&m, 3, &EigenOptions::default()).is_err());
    }

    #[test]
    fn iteration_cap_reports_failure() {
        let diag: Vec<f64> = (0..800).map(|i| 1.0 + 1e-9 * i as f64).collect();
        let m = CsrMatrix::from_rows(diag.iter().enumerate().map(|(i, &d)| vec![(i as u32, d)]).collect());
        let opts = EigenOptions { method: EigenMethod::Lanczos, max_matvecs: 60, ..Default::default() };
        assert!(matches!(top_k(&m, 3, &opts), Err(LsbmError::ConvergenceFailure { .. })));
    }
}
