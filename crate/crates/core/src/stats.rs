//! Small statistics helpers for aggregating trials.

use itertools::Itertools;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Wilson score interval for `successes` out of `trials`.
pub fn wilson_interval(successes: usize, trials: usize, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if successes == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if successes == trials { 1.0 } else { (center + half).min(1.0) };
    (lo, hi)
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MannKendall {
    /// `sum_{a<b} sign(x_b - x_a)`
    pub s: i64,
    /// One-sided p-value for an increasing trend.
    pub p_increasing: f64,
    pub exact: bool,
}

fn kendall_s(x: &[f64]) -> i64 {
    let mut s = 0i64;
    for a in 0..x.len() {
        for b in (a + 1)..x.len() {
            s += match x[b].partial_cmp(&x[a]) {
                Some(std::cmp::Ordering::Greater) => 1,
                Some(std::cmp::Ordering::Less) => -1,
                _ => 0,
            };
        }
    }
    s
}

/// Mann-Kendall trend test. Up to 8 points the p-value comes from the exact
/// permutation distribution of S (ties handled by permuting the observed
/// values); beyond that from the normal approximation with continuity correction.
pub fn mann_kendall(x: &[f64]) -> MannKendall {
    let s = kendall_s(x);
    let n = x.len();
    if n < 2 {
        return MannKendall {
            s,
            p_increasing: 1.0,
            exact: true,
        };
    }
    if n <= 8 {
        let mut at_least = 0usize;
        let mut total = 0usize;
        for perm in (0..n).permutations(n) {
            let permuted: Vec<f64> = perm.iter().map(|&i| x[i]).collect();
            total += 1;
            if kendall_s(&permuted) >= s {
                at_least += 1;
            }
        }
        return MannKendall {
            s,
            p_increasing: at_least as f64 / total as f64,
            exact: true,
        };
    }
    let nf = n as f64;
    let var = nf * (nf - 1.0) * (2.0 * nf + 5.0) / 18.0;
    let z = if s > 0 { (s as f64 - 1.0) / var.sqrt() } else { s as f64 / var.sqrt() };
    MannKendall {
        s,
        p_increasing: 0.5 * erfc(z / std::f64::consts::SQRT_2),
        exact: false,
    }
}

/// Complementary error function (Numerical Recipes `erfcc`, relative error < 1.2e-7).
fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let r = t * (-z * z - 1.265_512_23
        + t * (1.000_023_68
            + t * (0.374_091_96
                + t * (0.096_784_18
                    + t * (-0.186_288_06
                        + t * (0.278_868_07 + t * (-1.135_203_98 + t * (1.488_515_87 + t * (-0.822_152_23 + t * 0.170_872_77)))))))))
        .exp();
    if x >= 0.0 {
        r
    } else {
        2.0 - r
    }
}
