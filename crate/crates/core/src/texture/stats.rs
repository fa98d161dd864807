//! Two-sample statistics over texture features: Welch's t per feature,
//! Hotelling's T-squared over the joint feature vector, and a histogram KL
//! divergence for distributional drift.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

use super::special::{f_survival, student_t_two_sided_p};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelchResult {
    pub t: f64,
    pub df: f64,
    pub p: f64,
}

/// Welch's unequal-variance t-test with the Welch–Satterthwaite degrees of
/// freedom and a two-sided p-value.
pub fn welch_t(a: &[f64], b: &[f64]) -> Result<WelchResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::EmptyInput(
            "welch_t needs at least 2 values per side",
        ));
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    if va == 0.0 && vb == 0.0 {
        if ma == mb {
            // identical constants: no evidence of difference
            return Ok(WelchResult {
                t: 0.0,
                df: (a.len() + b.len() - 2) as f64,
                p: 1.0,
            });
        }
        return Err(Error::Numerical(
            "welch_t: both samples have zero variance".into(),
        ));
    }
    let na = a.len() as f64;
    let nb = b.len() as f64;
    let sa = va / na;
    let sb = vb / nb;
    let t = (ma - mb) / (sa + sb).sqrt();
    let df = (sa + sb).powi(2) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    Ok(WelchResult {
        t,
        df,
        p: student_t_two_sided_p(t, df),
    })
}

/// Sample mean and unbiased variance.
fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HotellingResult {
    pub t2: f64,
    pub f: f64,
    pub df1: f64,
    pub df2: f64,
    pub p: f64,
}

/// Two-sample Hotelling T-squared with pooled covariance and the exact F
/// transform. Rows are observations, columns features. A singular pooled
/// covariance falls back to a ridge of `1e-8 * trace(S)/k`.
pub fn hotelling_t2(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<HotellingResult> {
    let k = a.ncols();
    if k == 0 || b.ncols() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            got: b.ncols(),
        });
    }
    let na = a.nrows();
    let nb = b.nrows();
    if na + nb < k + 3 || na < 2 || nb < 2 {
        return Err(Error::config(
            "hotelling_t2 needs n_a + n_b - 2 > k and at least 2 rows per side",
        ));
    }
    let mean = |m: &DMatrix<f64>| -> DVector<f64> {
        DVector::from_fn(k, |j, _| m.column(j).sum() / m.nrows() as f64)
    };
    let scatter = |m: &DMatrix<f64>, mu: &DVector<f64>| -> DMatrix<f64> {
        let mut s = DMatrix::zeros(k, k);
        for r in 0..m.nrows() {
            let d = m.row(r).transpose() - mu;
            s += &d * d.transpose();
        }
        s
    };
    let mu_a = mean(a);
    let mu_b = mean(b);
    let pooled = (scatter(a, &mu_a) + scatter(b, &mu_b)) / (na + nb - 2) as f64;
    let diff = &mu_a - &mu_b;

    let solved = nalgebra::Cholesky::new(pooled.clone())
        .map(|c| c.solve(&diff))
        .or_else(|| {
            // ridge fallback on singular pooled covariance
            let ridge = 1e-8 * pooled.trace() / k as f64;
            let mut reg = pooled.clone();
            for i in 0..k {
                reg[(i, i)] += ridge;
            }
            nalgebra::Cholesky::new(reg).map(|c| c.solve(&diff))
        })
        .ok_or_else(|| Error::Numerical("hotelling_t2: pooled covariance is degenerate".into()))?;

    let scale = (na * nb) as f64 / (na + nb) as f64;
    let t2 = scale * diff.dot(&solved);
    let n = (na + nb) as f64;
    let df1 = k as f64;
    let df2 = n - k as f64 - 1.0;
    let f = t2 * df2 / ((n - 2.0) * df1);
    Ok(HotellingResult {
        t2,
        f,
        df1,
        df2,
        p: f_survival(f, df1, df2),
    })
}

/// Discrete KL divergence between two normalized histograms with strictly
/// positive entries.
pub fn kl_from_histograms(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch {
            expected: p.len(),
            got: q.len(),
        });
    }
    if p.iter().chain(q).any(|&v| v <= 0.0) {
        return Err(Error::config("histogram entries must be positive"));
    }
    Ok(p.iter().zip(q).map(|(&pi, &qi)| pi * (pi / qi).ln()).sum())
}

/// KL divergence `D(a || b)` between two samples: histograms over shared
/// bin edges spanning the pooled range, additive smoothing of 1e-10 before
/// normalization.
pub fn kl_divergence(a: &[f64], b: &[f64], bins: usize) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput("kl_divergence needs nonempty samples"));
    }
    if bins < 1 {
        return Err(Error::config("bins must be at least 1"));
    }
    const SMOOTHING: f64 = 1e-10;
    let lo = a.iter().chain(b).copied().fold(f64::INFINITY, f64::min);
    let hi = a.iter().chain(b).copied().fold(f64::NEG_INFINITY, f64::max);
    // degenerate pooled range: widen so everything lands in one bin
    let (lo, hi) = if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, lo + 0.5)
    };
    let width = (hi - lo) / bins as f64;
    let histogram = |x: &[f64]| -> Vec<f64> {
        let mut h = vec![SMOOTHING; bins];
        for &v in x {
            let idx = (((v - lo) / width) as usize).min(bins - 1);
            h[idx] += 1.0;
        }
        let total: f64 = h.iter().sum();
        h.iter().map(|c| c / total).collect()
    };
    kl_from_histograms(&histogram(a), &histogram(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn welch_identical_samples() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let r = welch_t(&a, &a).unwrap();
        assert_eq!(r.t, 0.0);
        assert_eq!(r.p, 1.0);
    }

    #[test]
    fn welch_hand_case() {
        let r = welch_t(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert_relative_eq!(r.t, -3.6742, epsilon = 1e-4);
        assert_relative_eq!(r.df, 4.0, epsilon = 1e-12);
        assert_relative_eq!(r.p, 0.0213, epsilon = 2e-4);
    }

    #[test]
    fn welch_antisymmetric_and_zero_variance_error() {
        let a = [1.0, 2.0, 5.0];
        let b = [0.5, 2.5, 3.0, 9.0];
        let ab = welch_t(&a, &b).unwrap();
        let ba = welch_t(&b, &a).unwrap();
        assert_relative_eq!(ab.t, -ba.t, epsilon = 1e-14);
        assert_relative_eq!(ab.p, ba.p, epsilon = 1e-14);

        assert!(welch_t(&[1.0, 1.0], &[2.0, 2.0]).is_err());
    }

    #[test]
    fn hotelling_zero_for_equal_means() {
        let a = DMatrix::from_row_slice(4, 2, &[1.0, 2.0, 3.0, 4.0, 1.0, 4.0, 3.0, 2.0]);
        let r = hotelling_t2(&a, &a).unwrap();
        assert!(r.t2.abs() < 1e-12);
        assert_relative_eq!(r.p, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn hotelling_k1_reduces_to_pooled_t_squared() {
        let mut gen = rng::seeded(3);
        for _ in 0..100 {
            let na = gen.gen_range(3..20);
            let nb = gen.gen_range(3..20);
            let a: Vec<f64> = (0..na)
                .map(|_| gen.sample::<f64, _>(StandardNormal))
                .collect();
            let b: Vec<f64> = (0..nb)
                .map(|_| 0.7 + gen.sample::<f64, _>(StandardNormal))
                .collect();
            let r = hotelling_t2(
                &DMatrix::from_column_slice(na, 1, &a),
                &DMatrix::from_column_slice(nb, 1, &b),
            )
            .unwrap();

            // pooled two-sample t
            let (ma, va) = super::mean_var(&a);
            let (mb, vb) = super::mean_var(&b);
            let sp2 =
                ((na as f64 - 1.0) * va + (nb as f64 - 1.0) * vb) / (na as f64 + nb as f64 - 2.0);
            let t = (ma - mb) / (sp2 * (1.0 / na as f64 + 1.0 / nb as f64)).sqrt();
            assert_relative_eq!(r.t2, t * t, epsilon = 1e-9, max_relative = 1e-9);
        }
    }

    #[test]
    fn hotelling_matches_explicit_2x2_oracle() {
        let mut gen = rng::seeded(9);
        for _ in 0..20 {
            let na = gen.gen_range(4..15);
            let nb = gen.gen_range(4..15);
            let mk = |n: usize, shift: f64, g: &mut rand_chacha::ChaCha8Rng| {
                DMatrix::from_fn(n, 2, |_, c| {
                    shift * c as f64 + g.sample::<f64, _>(StandardNormal)
                })
            };
            let a = mk(na, 0.0, &mut gen);
            let b = mk(nb, 0.5, &mut gen);
            let r = hotelling_t2(&a, &b).unwrap();

            // explicit 2x2 inverse oracle
            let mean = |m: &DMatrix<f64>, j: usize| m.column(j).sum() / m.nrows() as f64;
            let mu = [mean(&a, 0) - mean(&b, 0), mean(&a, 1) - mean(&b, 1)];
            let mut s = [[0.0f64; 2]; 2];
            for (m, nm) in [(&a, na), (&b, nb)] {
                let meas = [mean(m, 0), mean(m, 1)];
                for r_ in 0..nm {
                    let d = [m[(r_, 0)] - meas[0], m[(r_, 1)] - meas[1]];
                    for i in 0..2 {
                        for j in 0..2 {
                            s[i][j] += d[i] * d[j];
                        }
                    }
                }
            }
            let denom = (na + nb - 2) as f64;
            for row in &mut s {
                for v in row.iter_mut() {
                    *v /= denom;
                }
            }
            let det = s[0][0] * s[1][1] - s[0][1] * s[1][0];
            let inv = [
                [s[1][1] / det, -s[0][1] / det],
                [-s[1][0] / det, s[0][0] / det],
            ];
            let quad = mu[0] * (inv[0][0] * mu[0] + inv[0][1] * mu[1])
                + mu[1] * (inv[1][0] * mu[0] + inv[1][1] * mu[1]);
            let expected = (na * nb) as f64 / (na + nb) as f64 * quad;
            assert_relative_eq!(r.t2, expected, epsilon = 1e-8, max_relative = 1e-8);
        }
    }

    #[test]
    fn kl_identical_and_disjoint() {
        let mut gen = rng::seeded(5);
        let a: Vec<f64> = (0..500)
            .map(|_| gen.sample::<f64, _>(StandardNormal))
            .collect();
        assert!(kl_divergence(&a, &a, 50).unwrap() <= 1e-9);

        let b: Vec<f64> = a.iter().map(|v| v + 100.0).collect();
        let d = kl_divergence(&a, &b, 50).unwrap();
        assert!(d.is_finite());
        assert!(d > 5.0);
    }

    #[test]
    fn kl_hand_histograms() {
        let d = kl_from_histograms(&[0.5, 0.5], &[0.9, 0.1]).unwrap();
        assert_relative_eq!(d, 0.5108, epsilon = 1e-4);
        assert_relative_eq!(d, 0.5 * (25.0f64 / 9.0).ln(), epsilon = 1e-12);
    }

    #[test]
    fn kl_nonnegative_on_random_samples() {
        let mut gen = rng::seeded(6);
        for _ in 0..50 {
            let n = gen.gen_range(5..200);
            let a: Vec<f64> = (0..n).map(|_| gen.gen_range(-3.0..3.0)).collect();
            let m = gen.gen_range(5..200);
            let b: Vec<f64> = (0..m).map(|_| gen.gen_range(-2.0..4.0)).collect();
            assert!(kl_divergence(&a, &b, 30).unwrap() >= -1e-12);
        }
    }

    #[test]
    fn kl_constant_samples() {
        // degenerate pooled range
        let a = [2.0, 2.0, 2.0];
        assert!(kl_divergence(&a, &a, 10).unwrap().abs() <= 1e-9);
    }
}
